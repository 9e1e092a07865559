//! End-to-end evaluation: per-record scoring in parallel, then an ordered
//! reduction into a [`MetricsReport`].

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use demorph_core::biometric::{
    compute_threshold_at_fmr, impostor_score_for_output, restoration_accuracy, tmr, Embedding,
    ScoreSet, DEFAULT_TARGET_FMR, DEFAULT_TAU,
};
use demorph_core::dataset::{gallery_ids, EmbeddingStore, MorphRecord};
use demorph_core::iqa::{IqaKind, IqaMetric, SsimParams};
use demorph_core::pairing::{
    evaluate_record, ConditionParams, DemorphEvaluation, EvalParams, PairingError,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::registry::iqa_metrics;
use crate::report::{ConditionRates, MetricsReport, Reject, ReportParams, TMR_POPULATION};

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationConfig {
    pub dataset_name: String,
    pub target_fmr: f64,
    pub tau: f64,
    pub conditions: Option<ConditionParams>,
    pub allow_negative_b: bool,
    pub bw_normalize: bool,
    pub ssim: SsimParams,
    pub skip_bad_records: bool,
    /// `None` lets rayon pick.
    pub threads: Option<usize>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            dataset_name: "dataset".into(),
            target_fmr: DEFAULT_TARGET_FMR,
            tau: DEFAULT_TAU,
            conditions: None,
            allow_negative_b: false,
            bw_normalize: false,
            ssim: SsimParams::default(),
            skip_bad_records: false,
            threads: None,
        }
    }
}

impl EvaluationConfig {
    fn eval_params(&self) -> EvalParams {
        EvalParams {
            tau: self.tau,
            conditions: self.conditions,
            allow_negative_b: self.allow_negative_b,
        }
    }
}

/// One line of the per-record file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordOutcome {
    #[serde(flatten)]
    pub evaluation: DemorphEvaluation,
    /// Best non-constituent gallery match of each output.
    pub impostor_scores: [f64; 2],
}

pub struct EvaluationRun {
    pub report: MetricsReport,
    /// Sorted by `morph_id`.
    pub records: Vec<RecordOutcome>,
}

fn impostor_scores(
    record: &MorphRecord,
    store: &EmbeddingStore,
    gallery: &[Embedding],
) -> Result<[f64; 2]> {
    let excluded: HashSet<String> = [record.gt1_id.clone(), record.gt2_id.clone()].into();
    let [a, b] = record.output_ids();
    let score = |id: &str| -> Result<f64> {
        let e = store
            .get(id)
            .ok_or_else(|| PairingError::MissingEmbedding(id.to_string()))?;
        Ok(impostor_score_for_output(e, gallery, &excluded)?)
    };
    Ok([score(&a)?, score(&b)?])
}

fn evaluate_one(
    record: &MorphRecord,
    store: &EmbeddingStore,
    gallery: &[Embedding],
    metrics: &[&dyn IqaMetric],
    params: &EvalParams,
) -> Result<RecordOutcome> {
    let wrap = |e: HarnessError| HarnessError::Record {
        morph_id: record.morph_id.clone(),
        source: Box::new(e),
    };
    let evaluation = evaluate_record(record, store, metrics, params).map_err(|e| wrap(e.into()))?;
    let impostor_scores = impostor_scores(record, store, gallery).map_err(wrap)?;
    Ok(RecordOutcome {
        evaluation,
        impostor_scores,
    })
}

/// Scores every record and aggregates. The impostor gallery defaults to the
/// store's embeddings of every ground-truth identity in the manifest.
pub fn run_evaluation(
    records: &[MorphRecord],
    store: &EmbeddingStore,
    gallery: Option<&EmbeddingStore>,
    config: &EvaluationConfig,
) -> Result<EvaluationRun> {
    if records.is_empty() {
        return Err(HarnessError::Validation("manifest has no records".into()));
    }
    let gallery: Vec<Embedding> = match gallery {
        Some(g) => g.entries().to_vec(),
        None => {
            let ids = gallery_ids(records)?;
            ids.iter()
                .map(|id| {
                    store
                        .get(id)
                        .cloned()
                        .ok_or_else(|| PairingError::MissingEmbedding(id.clone()).into())
                })
                .collect::<Result<_>>()?
        }
    };
    if let Some(g) = gallery.first() {
        if g.dimension() != store.dimension() {
            return Err(HarnessError::Validation(format!(
                "gallery dimension {} differs from embedding store dimension {}",
                g.dimension(),
                store.dimension()
            )));
        }
    }

    let registry = iqa_metrics(config.ssim);
    let metrics: Vec<&dyn IqaMetric> = vec![registry.get("ssim")?, registry.get("psnr")?];
    let params = config.eval_params();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::Validation(format!("thread pool: {e}")))?;
    let results: Vec<Result<RecordOutcome>> = pool.install(|| {
        records
            .par_iter()
            .map(|r| evaluate_one(r, store, &gallery, &metrics, &params))
            .collect()
    });

    let mut outcomes = Vec::with_capacity(records.len());
    let mut rejects = Vec::new();
    for (record, result) in records.iter().zip(results) {
        match result {
            Ok(o) => outcomes.push(o),
            Err(e) if config.skip_bad_records => rejects.push(Reject {
                morph_id: record.morph_id.clone(),
                error: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    outcomes.sort_by(|a, b| a.evaluation.morph_id.cmp(&b.evaluation.morph_id));
    rejects.sort_by(|a, b| a.morph_id.cmp(&b.morph_id));
    let report = aggregate(&outcomes, store.matcher_name(), config, rejects)?;
    Ok(EvaluationRun {
        report,
        records: outcomes,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

fn iqa_mean(outcomes: &[RecordOutcome], kind: IqaKind, f: impl Fn(f64, f64) -> f64) -> Result<f64> {
    let values = outcomes
        .iter()
        .map(|o| {
            o.evaluation
                .iqa
                .get(&kind)
                .map(|q| f(q.paired, q.bw))
                .ok_or_else(|| {
                    HarnessError::Validation(format!(
                        "record `{}` has no {kind} result",
                        o.evaluation.morph_id
                    ))
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(values.into_iter()))
}

/// Reduces per-record outcomes, in the given order, into the report.
pub fn aggregate(
    outcomes: &[RecordOutcome],
    matcher_name: &str,
    config: &EvaluationConfig,
    rejects: Vec<Reject>,
) -> Result<MetricsReport> {
    if outcomes.is_empty() {
        return Err(HarnessError::Validation(format!(
            "no records left to aggregate ({} rejected)",
            rejects.len()
        )));
    }
    let matched: Vec<(f64, f64)> = outcomes
        .iter()
        .map(|o| o.evaluation.matched_scores())
        .collect();
    let scores = ScoreSet::new(
        matched.iter().flat_map(|&(a, b)| [a, b]).collect(),
        outcomes.iter().flat_map(|o| o.impostor_scores).collect(),
    );
    let threshold = compute_threshold_at_fmr(&scores, config.target_fmr)?;
    let tmr_at_fmr = tmr(&scores, &threshold)?;
    let ra = restoration_accuracy(&matched, config.tau)?;

    let bw_ssim = iqa_mean(outcomes, IqaKind::Ssim, |_, bw| bw)?;
    let bw_psnr = iqa_mean(outcomes, IqaKind::Psnr, |_, bw| bw)?;
    let conditions = match config.conditions {
        None => None,
        Some(_) => {
            let flags = outcomes
                .iter()
                .map(|o| {
                    o.evaluation.conditions.ok_or_else(|| {
                        HarnessError::Validation(format!(
                            "record `{}` has no condition diagnostics",
                            o.evaluation.morph_id
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let rate = |f: &dyn Fn(&demorph_core::pairing::Conditions) -> bool| {
                flags.iter().filter(|c| f(c)).count() as f64 / flags.len() as f64
            };
            Some(ConditionRates {
                dissimilar: rate(&|c| c.dissimilar),
                aligned: rate(&|c| c.aligned),
            })
        }
    };

    Ok(MetricsReport {
        dataset_name: config.dataset_name.clone(),
        matcher_name: matcher_name.to_string(),
        n_morphs: outcomes.len(),
        mean_psnr: iqa_mean(outcomes, IqaKind::Psnr, |paired, _| paired)?,
        mean_ssim: iqa_mean(outcomes, IqaKind::Ssim, |paired, _| paired)?,
        ra,
        tmr_at_fmr,
        target_fmr: config.target_fmr,
        achieved_fmr: threshold.achieved_fmr,
        threshold: threshold.value,
        bw_ssim,
        bw_psnr,
        bw_ssim_normalized: config.bw_normalize.then_some(bw_ssim / 2.0),
        bw_psnr_normalized: config.bw_normalize.then_some(bw_psnr / 2.0),
        conditions,
        params: ReportParams {
            tau: config.tau,
            theta: config.conditions.map(|c| c.theta),
            epsilon: config.conditions.map(|c| c.epsilon),
            fmr: config.target_fmr,
            ssim: config.ssim,
            allow_negative_b: config.allow_negative_b,
            bw_normalize: config.bw_normalize,
            tmr_population: TMR_POPULATION.into(),
        },
        rejects,
    })
}

/// One JSON object per line, in the given order.
pub fn write_records(outcomes: &[RecordOutcome], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(HarnessError::io(parent))?;
    }
    let file = fs::File::create(path).map_err(HarnessError::io(path))?;
    let mut w = BufWriter::new(file);
    for o in outcomes {
        let line = serde_json::to_string(o)
            .map_err(|e| HarnessError::Validation(format!("record serialization: {e}")))?;
        writeln!(w, "{line}").map_err(HarnessError::io(path))?;
    }
    w.flush().map_err(HarnessError::io(path))
}

pub fn read_records(path: &Path) -> Result<Vec<RecordOutcome>> {
    let file = fs::File::open(path).map_err(HarnessError::io(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(HarnessError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| {
                HarnessError::Validation(format!("{}:{}: {e}", path.display(), i + 1))
            })?,
        );
    }
    Ok(out)
}
