//! Output/ground-truth pairing and the per-morph demorphing metrics:
//! paired IQA, the biometrically cross-weighted IQA term and the
//! dissimilarity/alignment diagnostics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biometric::{cosine, restored, BiometricError};
use crate::dataset::{EmbeddingStore, MorphRecord};
use crate::image::{load_image, ImageBuffer, ImageError};
use crate::iqa::{IqaError, IqaKind, IqaMetric};

#[derive(Debug, Error)]
pub enum PairingError {
    #[error("missing embedding for `{0}`")]
    MissingEmbedding(String),
    #[error("{path}: {source}")]
    Image { path: String, source: ImageError },
    #[error(transparent)]
    Iqa(#[from] IqaError),
    #[error(transparent)]
    Biometric(#[from] BiometricError),
}

/// Values of some score `s(o_j, i_k)` over both outputs and both ground truths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreGrid {
    pub o1_i1: f64,
    pub o2_i2: f64,
    pub o1_i2: f64,
    pub o2_i1: f64,
}

impl ScoreGrid {
    pub fn new(o1_i1: f64, o2_i2: f64, o1_i2: f64, o2_i1: f64) -> Self {
        Self {
            o1_i1,
            o2_i2,
            o1_i2,
            o2_i1,
        }
    }

    pub fn straight_sum(&self) -> f64 {
        self.o1_i1 + self.o2_i2
    }

    pub fn crossed_sum(&self) -> f64 {
        self.o1_i2 + self.o2_i1
    }

    /// The same grid with the two outputs relabelled.
    pub fn swap_outputs(&self) -> Self {
        Self {
            o1_i1: self.o2_i1,
            o2_i2: self.o1_i2,
            o1_i2: self.o2_i2,
            o2_i1: self.o1_i1,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(f(self.o1_i1), f(self.o2_i2), f(self.o1_i2), f(self.o2_i1))
    }

    /// Scores of the two pairs selected by `pairing`, output 1 first.
    pub fn matched(&self, pairing: Pairing) -> (f64, f64) {
        match pairing {
            Pairing::Straight => (self.o1_i1, self.o2_i2),
            Pairing::Crossed => (self.o1_i2, self.o2_i1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pairing {
    /// o1 with i1, o2 with i2.
    Straight,
    /// o1 with i2, o2 with i1.
    Crossed,
}

/// Picks the assignment with the larger biometric sum; ties go to straight.
pub fn resolve_pairing(b: &ScoreGrid) -> Pairing {
    if b.straight_sum() >= b.crossed_sum() {
        Pairing::Straight
    } else {
        Pairing::Crossed
    }
}

/// `0.5 * max(straight sum, crossed sum)` of an IQA grid.
pub fn paired_iqa(q: &ScoreGrid) -> f64 {
    0.5 * q.straight_sum().max(q.crossed_sum())
}

/// Per-morph biometrically cross-weighted IQA: the larger of the two
/// assignment sums of `B * iqa`. Unless `allow_negative_b` is set, match
/// scores are clamped to `[0, 1]` first.
pub fn bw_iqa(b: &ScoreGrid, q: &ScoreGrid, allow_negative_b: bool) -> f64 {
    let b = if allow_negative_b {
        *b
    } else {
        b.map(|s| s.clamp(0.0, 1.0))
    };
    let straight = b.o1_i1 * q.o1_i1 + b.o2_i2 * q.o2_i2;
    let crossed = b.o1_i2 * q.o1_i2 + b.o2_i1 * q.o2_i1;
    straight.max(crossed)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionParams {
    pub theta: f64,
    pub epsilon: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conditions {
    /// `B(o1, o2) < theta`: the outputs are not replicas of each other.
    pub dissimilar: bool,
    /// Every output's best ground-truth match exceeds epsilon.
    pub aligned: bool,
}

pub fn check_demorph_conditions(
    b_o1_o2: f64,
    b: &ScoreGrid,
    params: ConditionParams,
) -> Conditions {
    let best_o1 = b.o1_i1.max(b.o1_i2);
    let best_o2 = b.o2_i2.max(b.o2_i1);
    Conditions {
        dissimilar: b_o1_o2 < params.theta,
        aligned: best_o1.min(best_o2) > params.epsilon,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    pub tau: f64,
    pub conditions: Option<ConditionParams>,
    pub allow_negative_b: bool,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            tau: crate::biometric::DEFAULT_TAU,
            conditions: None,
            allow_negative_b: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IqaOutcome {
    pub grid: ScoreGrid,
    pub paired: f64,
    pub bw: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemorphEvaluation {
    pub morph_id: String,
    pub pairing: Pairing,
    pub b_grid: ScoreGrid,
    pub b_o1_o2: f64,
    pub iqa: BTreeMap<IqaKind, IqaOutcome>,
    pub ra_pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditions: Option<Conditions>,
}

impl DemorphEvaluation {
    /// Matched-pair biometric scores under the resolved pairing.
    pub fn matched_scores(&self) -> (f64, f64) {
        self.b_grid.matched(self.pairing)
    }
}

/// Images and embedding vectors for one morph, already resolved.
pub struct EvaluationInputs<'a> {
    pub morph_id: &'a str,
    pub ground_truth: [&'a ImageBuffer; 2],
    pub outputs: [&'a ImageBuffer; 2],
    pub ground_truth_embeddings: [&'a [f64]; 2],
    pub output_embeddings: [&'a [f64]; 2],
}

/// Scores one morph from the pieces in memory.
pub fn evaluate(
    inputs: &EvaluationInputs<'_>,
    metrics: &[&dyn IqaMetric],
    params: &EvalParams,
) -> Result<DemorphEvaluation, PairingError> {
    let [e1, e2] = inputs.ground_truth_embeddings;
    let [f1, f2] = inputs.output_embeddings;
    let b_grid = ScoreGrid::new(
        cosine(f1, e1)?,
        cosine(f2, e2)?,
        cosine(f1, e2)?,
        cosine(f2, e1)?,
    );
    let b_o1_o2 = cosine(f1, f2)?;
    let pairing = resolve_pairing(&b_grid);

    let [g1, g2] = inputs.ground_truth;
    let [o1, o2] = inputs.outputs;
    let mut iqa = BTreeMap::new();
    for metric in metrics {
        let grid = ScoreGrid::new(
            metric.score(o1, g1)?,
            metric.score(o2, g2)?,
            metric.score(o1, g2)?,
            metric.score(o2, g1)?,
        );
        iqa.insert(
            metric.kind(),
            IqaOutcome {
                grid,
                paired: paired_iqa(&grid),
                bw: bw_iqa(&b_grid, &grid, params.allow_negative_b),
            },
        );
    }
    let (m1, m2) = b_grid.matched(pairing);
    Ok(DemorphEvaluation {
        morph_id: inputs.morph_id.to_string(),
        pairing,
        b_grid,
        b_o1_o2,
        iqa,
        ra_pass: restored(m1, m2, params.tau),
        conditions: params
            .conditions
            .map(|c| check_demorph_conditions(b_o1_o2, &b_grid, c)),
    })
}

fn load(path: &std::path::Path) -> Result<ImageBuffer, PairingError> {
    load_image(path).map_err(|source| PairingError::Image {
        path: path.display().to_string(),
        source,
    })
}

/// Loads the record's images, looks up its embeddings and scores it.
///
/// Ground truths are looked up by `gt1_id`/`gt2_id`, outputs by file stem.
pub fn evaluate_record(
    record: &MorphRecord,
    store: &EmbeddingStore,
    metrics: &[&dyn IqaMetric],
    params: &EvalParams,
) -> Result<DemorphEvaluation, PairingError> {
    let lookup = |id: &str| {
        store
            .get(id)
            .map(|e| e.vector.as_slice())
            .ok_or_else(|| PairingError::MissingEmbedding(id.to_string()))
    };
    let [out1_id, out2_id] = record.output_ids();
    let gt_emb = [lookup(&record.gt1_id)?, lookup(&record.gt2_id)?];
    let out_emb = [lookup(&out1_id)?, lookup(&out2_id)?];

    let g1 = load(&record.gt1_path)?;
    let g2 = load(&record.gt2_path)?;
    let o1 = load(&record.out1_path)?;
    let o2 = if record.out2_path == record.out1_path {
        o1.clone()
    } else {
        load(&record.out2_path)?
    };
    evaluate(
        &EvaluationInputs {
            morph_id: &record.morph_id,
            ground_truth: [&g1, &g2],
            outputs: [&o1, &o2],
            ground_truth_embeddings: gt_emb,
            output_embeddings: out_emb,
        },
        metrics,
        params,
    )
}
