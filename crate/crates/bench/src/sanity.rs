//! Identity-versus-quality sanity sweep.
//!
//! Row A compares a subject with a mildly noisy and a blurred copy of itself.
//! Row B sweeps noise on the subject and asks, per level, which of two
//! candidates each score prefers: the noisy same-subject copy or a clean image
//! of a different subject. Plain SSIM should flip to the impostor at some
//! level while the identity-weighted score keeps the same subject.

use std::fmt::Write as _;
use std::path::Path;

use demorph_core::biometric::cosine;
use demorph_core::image::{degrade, save_png, DegradationSpec, ImageBuffer};
use demorph_core::iqa::{cap_psnr, psnr, ssim, SsimParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedder::{Embedder, GridEmbedder};
use crate::error::{HarnessError, Result};
use crate::io::write_file;
use crate::report::{format_real, to_canonical_json};
use crate::synth::{random_pattern, render_face, texture, FaceStyle, GRID};

pub const DEFAULT_EPSILON: f64 = 0.3;
pub const NOISE_LEVELS: [u32; 8] = [10, 20, 30, 40, 50, 60, 70, 80];
pub const ROW_A_NOISE: f64 = 20.0;
pub const ROW_A_BLUR: f64 = 2.0;

/// Low-contrast cells under strong texture: SSIM between two subjects stays
/// well above zero, so heavy noise can push the same subject below it.
pub const SANITY_STYLE: FaceStyle = FaceStyle {
    dark: 80,
    bright: 170,
    texture_amplitude: 50.0,
};
pub const SANITY_SIZE: usize = 128;

#[derive(Clone, Copy, Debug)]
pub struct SanityConfig {
    pub seed: u64,
    pub epsilon: f64,
}

impl SanityConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

/// Scores of the subject against one candidate image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub ssim: f64,
    /// Capped at 100 dB.
    pub psnr: f64,
    /// Cosine similarity of the grid embeddings.
    pub b: f64,
    /// `B * SSIM` when `B > epsilon`, else 0.
    pub bw_ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowA {
    pub noise_sigma: f64,
    pub noisy: PairScores,
    pub blur_sigma: f64,
    pub blurred: PairScores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sigma: u32,
    pub same_subject: PairScores,
    /// Plain SSIM ranks the different subject above the noisy copy.
    pub ssim_prefers_different: bool,
    /// BW(SSIM) ranks the noisy copy above the different subject.
    pub bw_prefers_same: bool,
    pub crossover: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SanityReport {
    pub seed: u64,
    pub epsilon: f64,
    pub ssim: SsimParams,
    pub row_a: RowA,
    pub different_subject: PairScores,
    /// Sigma 0 first as a reference, then every swept level.
    pub sweep: Vec<SweepRow>,
    pub crossover_levels: Vec<u32>,
}

impl SanityReport {
    pub fn passed(&self) -> bool {
        !self.crossover_levels.is_empty()
    }
}

fn pair_scores(
    subject: &ImageBuffer,
    subject_emb: &[f64],
    other: &ImageBuffer,
    embedder: &GridEmbedder,
    params: &SsimParams,
    epsilon: f64,
) -> Result<PairScores> {
    let s = ssim(subject, other, params)?;
    let b = cosine(subject_emb, &embedder.embed(other)?)?;
    Ok(PairScores {
        ssim: s,
        psnr: cap_psnr(psnr(subject, other)?),
        b,
        bw_ssim: if b > epsilon { b * s } else { 0.0 },
    })
}

/// Builds the images, scores them and writes `sanity.json`, `sanity.md` and
/// the images into `out_dir`. Does not fail on a missing crossover; see
/// [`SanityReport::passed`].
pub fn sanity_suite(config: &SanityConfig, out_dir: Option<&Path>) -> Result<SanityReport> {
    if !(0.0..=1.0).contains(&config.epsilon) {
        return Err(HarnessError::Validation(format!(
            "epsilon must lie in [0, 1], got {}",
            config.epsilon
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let pattern = random_pattern(&mut rng);
    let tex = texture(SANITY_SIZE, SANITY_STYLE.texture_amplitude, &mut rng);
    let subject = render_face(pattern, &SANITY_STYLE, &tex, SANITY_SIZE)?;
    // same texture, complementary cells: a different identity that still
    // shares most of the fine structure
    let different = render_face(!pattern, &SANITY_STYLE, &tex, SANITY_SIZE)?;

    let embedder = GridEmbedder::new(GRID);
    let params = SsimParams::default();
    let subject_emb = embedder.embed(&subject)?;
    let score = |img: &ImageBuffer| {
        pair_scores(
            &subject,
            &subject_emb,
            img,
            &embedder,
            &params,
            config.epsilon,
        )
    };
    let noise_seed = |sigma: u32| config.seed.wrapping_mul(1000).wrapping_add(sigma as u64);

    let row_a_noisy = degrade(
        &subject,
        &DegradationSpec::noise(ROW_A_NOISE, noise_seed(ROW_A_NOISE as u32)),
    )?;
    let row_a_blurred = degrade(&subject, &DegradationSpec::blur(ROW_A_BLUR))?;
    let row_a = RowA {
        noise_sigma: ROW_A_NOISE,
        noisy: score(&row_a_noisy)?,
        blur_sigma: ROW_A_BLUR,
        blurred: score(&row_a_blurred)?,
    };
    let different_scores = score(&different)?;

    let mut images = vec![
        ("subject.png".to_string(), subject.clone()),
        ("different.png".to_string(), different.clone()),
        ("row_a_noisy.png".to_string(), row_a_noisy),
        ("row_a_blurred.png".to_string(), row_a_blurred),
    ];
    let mut sweep = Vec::with_capacity(NOISE_LEVELS.len() + 1);
    for sigma in std::iter::once(0).chain(NOISE_LEVELS) {
        let noisy = degrade(
            &subject,
            &DegradationSpec::noise(sigma as f64, noise_seed(sigma)),
        )?;
        let same = score(&noisy)?;
        let ssim_prefers_different = different_scores.ssim > same.ssim;
        let bw_prefers_same = same.bw_ssim > different_scores.bw_ssim;
        sweep.push(SweepRow {
            sigma,
            same_subject: same,
            ssim_prefers_different,
            bw_prefers_same,
            crossover: sigma > 0 && ssim_prefers_different && bw_prefers_same,
        });
        if sigma > 0 {
            images.push((format!("noisy_sigma_{sigma:02}.png"), noisy));
        }
    }
    let report = SanityReport {
        seed: config.seed,
        epsilon: config.epsilon,
        ssim: params,
        row_a,
        different_subject: different_scores,
        crossover_levels: sweep
            .iter()
            .filter(|r| r.crossover)
            .map(|r| r.sigma)
            .collect(),
        sweep,
    };

    if let Some(dir) = out_dir {
        for (name, img) in &images {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(HarnessError::io(parent))?;
            }
            save_png(img, &path)?;
        }
        write_file(&dir.join("sanity.json"), to_canonical_json(&report)?)?;
        write_file(&dir.join("sanity.md"), to_markdown(&report))?;
    }
    Ok(report)
}

/// Runs the suite and turns a missing crossover into [`HarnessError::SanityFailed`].
pub fn run_sanity(config: &SanityConfig, out_dir: Option<&Path>) -> Result<SanityReport> {
    let report = sanity_suite(config, out_dir)?;
    if !report.passed() {
        return Err(HarnessError::SanityFailed(format!(
            "no noise level in {NOISE_LEVELS:?} where SSIM prefers the different subject \
             and BW(SSIM) (epsilon {}) prefers the same subject",
            config.epsilon
        )));
    }
    Ok(report)
}

pub fn to_markdown(report: &SanityReport) -> String {
    let f = format_real;
    let mut out = String::new();
    let _ = writeln!(out, "seed {}, epsilon {}\n", report.seed, report.epsilon);
    out.push_str("| Pair | SSIM | PSNR | B | BW(SSIM) |\n| --- | --- | --- | --- | --- |\n");
    let mut row = |label: String, s: &PairScores| {
        let _ = writeln!(
            out,
            "| {label} | {} | {} | {} | {} |",
            f(s.ssim),
            f(s.psnr),
            f(s.b),
            f(s.bw_ssim)
        );
    };
    row(
        format!("A: noise sigma {}", report.row_a.noise_sigma),
        &report.row_a.noisy,
    );
    row(
        format!("A: blur sigma {}", report.row_a.blur_sigma),
        &report.row_a.blurred,
    );
    row("B: different subject".into(), &report.different_subject);
    for r in &report.sweep {
        row(format!("B: noise sigma {}", r.sigma), &r.same_subject);
    }
    out.push_str("\n| sigma | SSIM prefers different | BW prefers same | crossover |\n| --- | --- | --- | --- |\n");
    for r in report.sweep.iter().filter(|r| r.sigma > 0) {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} |",
            r.sigma, r.ssim_prefers_different, r.bw_prefers_same, r.crossover
        );
    }
    let _ = writeln!(out, "\ncrossover levels: {:?}", report.crossover_levels);
    out
}
