//! Checks the separable SSIM against a direct per-window double loop.

use demorph_core::image::ImageBuffer;
use demorph_core::iqa::{ssim, SsimParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Naive SSIM: 2-D Gaussian built and normalized as a whole, two-pass
/// mean/variance per window, no shared work between windows.
fn naive_ssim(a: &[u8], b: &[u8], w: usize, h: usize, p: &SsimParams) -> f64 {
    let ws = p.window_size;
    let half = (ws / 2) as f64;
    let mut kernel = vec![0.0; ws * ws];
    for ky in 0..ws {
        for kx in 0..ws {
            let dx = kx as f64 - half;
            let dy = ky as f64 - half;
            kernel[ky * ws + kx] = (-(dx * dx + dy * dy) / (2.0 * p.gaussian_sigma.powi(2))).exp();
        }
    }
    let norm: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= norm);

    let c1 = (p.k1 * p.dynamic_range).powi(2);
    let c2 = (p.k2 * p.dynamic_range).powi(2);
    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=h - ws {
        for x0 in 0..=w - ws {
            let (mut ma, mut mb) = (0.0, 0.0);
            for ky in 0..ws {
                for kx in 0..ws {
                    let i = (y0 + ky) * w + x0 + kx;
                    ma += kernel[ky * ws + kx] * a[i] as f64;
                    mb += kernel[ky * ws + kx] * b[i] as f64;
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for ky in 0..ws {
                for kx in 0..ws {
                    let i = (y0 + ky) * w + x0 + kx;
                    let (da, db) = (a[i] as f64 - ma, b[i] as f64 - mb);
                    let k = kernel[ky * ws + kx];
                    va += k * da * da;
                    vb += k * db * db;
                    cov += k * da * db;
                }
            }
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn matches_naive_oracle_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let params = SsimParams::default();
    for _ in 0..50 {
        let a: Vec<u8> = (0..32 * 32).map(|_| rng.random()).collect();
        // correlated partner so the scores are spread out
        let mix: f64 = rng.random_range(0.0..1.0);
        let b: Vec<u8> = a
            .iter()
            .map(|&v| (mix * v as f64 + (1.0 - mix) * rng.random_range(0.0..255.0)).round() as u8)
            .collect();
        let fast = ssim(
            &ImageBuffer::new(32, 32, 1, a.clone()).unwrap(),
            &ImageBuffer::new(32, 32, 1, b.clone()).unwrap(),
            &params,
        )
        .unwrap();
        let slow = naive_ssim(&a, &b, 32, 32, &params);
        assert!((fast - slow).abs() < 1e-6, "fast {fast} vs naive {slow}");
    }
}

#[test]
fn matches_naive_oracle_with_other_params() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let params = SsimParams {
        window_size: 7,
        gaussian_sigma: 1.0,
        ..Default::default()
    };
    let (w, h) = (19, 23);
    let a: Vec<u8> = (0..w * h).map(|_| rng.random()).collect();
    let b: Vec<u8> = a
        .iter()
        .map(|&v| v.saturating_add(rng.random_range(0..40)))
        .collect();
    let fast = ssim(
        &ImageBuffer::new(w, h, 1, a.clone()).unwrap(),
        &ImageBuffer::new(w, h, 1, b.clone()).unwrap(),
        &params,
    )
    .unwrap();
    assert!((fast - naive_ssim(&a, &b, w, h, &params)).abs() < 1e-6);
}
