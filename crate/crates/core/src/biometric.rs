//! Identity-space scoring: cosine matching, FMR-calibrated thresholds,
//! TMR and restoration accuracy.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default restoration-accuracy threshold.
pub const DEFAULT_TAU: f64 = 0.4;
/// Default false match rate for TMR calibration.
pub const DEFAULT_TARGET_FMR: f64 = 0.10;

#[derive(Debug, Error, PartialEq)]
pub enum BiometricError {
    #[error("embedding dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("embedding `{0}` is all-zero")]
    ZeroVector(String),
    #[error("impostor score set is empty")]
    EmptyImpostorSet,
    #[error("genuine score set is empty")]
    EmptyGenuineSet,
    #[error("gallery is empty after excluding ground-truth identities")]
    EmptyGalleryAfterExclusion,
    #[error("record set is empty")]
    EmptyRecordSet,
    #[error("target FMR must lie in (0, 1), got {0}")]
    InvalidTargetFmr(f64),
    #[error("no threshold up to +1 reaches FMR {target}: {at_one} of impostor scores are >= 1")]
    UnattainableFmr { target: f64, at_one: f64 },
    #[error("malformed score CSV at line {line}: {reason}")]
    MalformedScores { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub id: String,
    pub vector: Vec<f64>,
}

impl Embedding {
    pub fn new(id: impl Into<String>, vector: Vec<f64>) -> Result<Self, BiometricError> {
        let id = id.into();
        if vector.iter().all(|&v| v == 0.0) {
            return Err(BiometricError::ZeroVector(id));
        }
        Ok(Self { id, vector })
    }

    pub fn dimension(&self) -> usize {
        self.vector.len()
    }
}

/// `dot(a, b) / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, BiometricError> {
    if a.len() != b.len() {
        return Err(BiometricError::DimensionMismatch(a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(BiometricError::ZeroVector(String::new()));
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64, BiometricError> {
    cosine(&a.vector, &b.vector).map_err(|e| match e {
        BiometricError::ZeroVector(_) => {
            let id = if a.vector.iter().all(|&v| v == 0.0) {
                &a.id
            } else {
                &b.id
            };
            BiometricError::ZeroVector(id.clone())
        }
        other => other,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

impl ScoreSet {
    pub fn new(genuine: Vec<f64>, impostor: Vec<f64>) -> Self {
        Self { genuine, impostor }
    }

    /// Writes `label,score` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "label,score")?;
        for (label, scores) in [("genuine", &self.genuine), ("impostor", &self.impostor)] {
            for s in scores {
                writeln!(out, "{label},{s:.16e}")?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, BiometricError> {
        let mut set = ScoreSet::default();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| BiometricError::Io(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.eq_ignore_ascii_case("label,score")) {
                continue;
            }
            let malformed = |reason: &str| BiometricError::MalformedScores {
                line: i + 1,
                reason: reason.to_string(),
            };
            let (label, score) = line
                .split_once(',')
                .ok_or_else(|| malformed("expected `label,score`"))?;
            let score: f64 = score
                .trim()
                .parse()
                .map_err(|_| malformed("score is not a number"))?;
            if !score.is_finite() {
                return Err(malformed("score is not finite"));
            }
            match label.trim() {
                "genuine" => set.genuine.push(score),
                "impostor" => set.impostor.push(score),
                _ => return Err(malformed("label must be `genuine` or `impostor`")),
            }
        }
        Ok(set)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchThreshold {
    pub value: f64,
    pub achieved_fmr: f64,
    pub target_fmr: f64,
}

/// Smallest threshold from `{impostor scores} ∪ {+1}` whose impostor
/// acceptance rate (`score >= threshold`) does not exceed `target_fmr`.
pub fn compute_threshold_at_fmr(
    scores: &ScoreSet,
    target_fmr: f64,
) -> Result<MatchThreshold, BiometricError> {
    if !(target_fmr > 0.0 && target_fmr < 1.0) {
        return Err(BiometricError::InvalidTargetFmr(target_fmr));
    }
    if scores.impostor.is_empty() {
        return Err(BiometricError::EmptyImpostorSet);
    }
    let n = scores.impostor.len();
    let mut sorted = scores.impostor.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));

    // Walk distinct values from the top; accepted(v) = index past the last
    // occurrence of v. FMR only grows as v decreases, so stop at the first
    // violation.
    let at_one = sorted.iter().take_while(|&&s| s >= 1.0).count();
    let fmr_at_one = at_one as f64 / n as f64;
    if fmr_at_one > target_fmr {
        return Err(BiometricError::UnattainableFmr {
            target: target_fmr,
            at_one: fmr_at_one,
        });
    }
    let mut best = MatchThreshold {
        value: 1.0,
        achieved_fmr: fmr_at_one,
        target_fmr,
    };
    let mut i = 0;
    while i < n {
        let v = sorted[i];
        let mut j = i;
        while j < n && sorted[j] == v {
            j += 1;
        }
        let fmr = j as f64 / n as f64;
        if fmr > target_fmr {
            break;
        }
        if v <= best.value {
            best = MatchThreshold {
                value: v,
                achieved_fmr: fmr,
                target_fmr,
            };
        }
        i = j;
    }
    Ok(best)
}

/// Fraction of genuine scores accepted at `threshold`.
pub fn tmr(scores: &ScoreSet, threshold: &MatchThreshold) -> Result<f64, BiometricError> {
    if scores.genuine.is_empty() {
        return Err(BiometricError::EmptyGenuineSet);
    }
    let accepted = scores
        .genuine
        .iter()
        .filter(|&&s| s >= threshold.value)
        .count();
    Ok(accepted as f64 / scores.genuine.len() as f64)
}

/// Best match of `output` in the gallery, ignoring the excluded identities.
pub fn impostor_score_for_output(
    output: &Embedding,
    gallery: &[Embedding],
    excluded_ids: &HashSet<String>,
) -> Result<f64, BiometricError> {
    let mut best: Option<f64> = None;
    for g in gallery.iter().filter(|g| !excluded_ids.contains(&g.id)) {
        let s = cosine_similarity(output, g)?;
        best = Some(best.map_or(s, |b| b.max(s)));
    }
    best.ok_or(BiometricError::EmptyGalleryAfterExclusion)
}

/// Fraction of morphs whose two matched-pair scores both exceed `tau`.
pub fn restoration_accuracy(records: &[(f64, f64)], tau: f64) -> Result<f64, BiometricError> {
    if records.is_empty() {
        return Err(BiometricError::EmptyRecordSet);
    }
    let passed = records
        .iter()
        .filter(|(a, b)| restored(*a, *b, tau))
        .count();
    Ok(passed as f64 / records.len() as f64)
}

pub fn restored(score_first: f64, score_second: f64, tau: f64) -> bool {
    score_first > tau && score_second > tau
}
