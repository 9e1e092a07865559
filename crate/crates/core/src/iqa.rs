//! Full-reference image quality: PSNR and Gaussian-window SSIM.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{to_luma, ImageBuffer, ImageError};

/// Reported value for a zero-MSE PSNR.
pub const PSNR_CAP_DB: f64 = 100.0;

#[derive(Debug, Error)]
pub enum IqaError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("image {width}x{height} is smaller than the {window}x{window} SSIM window")]
    ImageTooSmall {
        width: usize,
        height: usize,
        window: usize,
    },
    #[error("invalid SSIM parameters: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IqaKind {
    Ssim,
    Psnr,
}

impl IqaKind {
    pub const ALL: [IqaKind; 2] = [IqaKind::Ssim, IqaKind::Psnr];

    pub fn as_str(self) -> &'static str {
        match self {
            IqaKind::Ssim => "ssim",
            IqaKind::Psnr => "psnr",
        }
    }
}

impl fmt::Display for IqaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IqaKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ssim" => Ok(IqaKind::Ssim),
            "psnr" => Ok(IqaKind::Psnr),
            other => Err(format!("unknown IQA kind `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window_size: usize,
    pub gaussian_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window_size: 11,
            gaussian_sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 255.0,
        }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<(), IqaError> {
        if self.window_size < 3 || self.window_size.is_multiple_of(2) {
            return Err(IqaError::InvalidParams(format!(
                "window_size must be odd and >= 3, got {}",
                self.window_size
            )));
        }
        for (name, v) in [
            ("gaussian_sigma", self.gaussian_sigma),
            ("k1", self.k1),
            ("k2", self.k2),
            ("dynamic_range", self.dynamic_range),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(IqaError::InvalidParams(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    /// Normalized 1-D window taps; the 2-D window is their outer product.
    pub fn window_taps(&self) -> Vec<f64> {
        let half = (self.window_size / 2) as i64;
        let s2 = 2.0 * self.gaussian_sigma * self.gaussian_sigma;
        let mut taps: Vec<f64> = (-half..=half)
            .map(|i| (-((i * i) as f64) / s2).exp())
            .collect();
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= sum);
        taps
    }
}

/// PSNR over all samples of all channels. Returns `f64::INFINITY` for
/// identical inputs; use [`cap_psnr`] before aggregating or reporting.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, IqaError> {
    a.check_same_shape(b)?;
    let sse: f64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    let mse = sse / a.samples().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (255.0 / mse.sqrt()).log10())
}

pub fn cap_psnr(db: f64) -> f64 {
    db.min(PSNR_CAP_DB)
}

/// Mean SSIM over every valid window position of the luma images.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer, params: &SsimParams) -> Result<f64, IqaError> {
    params.validate()?;
    a.check_same_shape(b)?;
    let (w, h) = (a.width(), a.height());
    let ws = params.window_size;
    if w.min(h) < ws {
        return Err(IqaError::ImageTooSmall {
            width: w,
            height: h,
            window: ws,
        });
    }
    let la = to_luma(a);
    let lb = to_luma(b);
    let taps = params.window_taps();

    // five moment planes, filtered separably in valid mode
    let n = w * h;
    let mut planes = vec![0.0f64; 5 * n];
    for (i, (&x, &y)) in la.samples().iter().zip(lb.samples()).enumerate() {
        let (x, y) = (x as f64, y as f64);
        planes[i] = x;
        planes[n + i] = y;
        planes[2 * n + i] = x * x;
        planes[3 * n + i] = y * y;
        planes[4 * n + i] = x * y;
    }
    let ow = w - ws + 1;
    let oh = h - ws + 1;
    let mut rows = vec![0.0f64; 5 * ow * h];
    for p in 0..5 {
        let src = &planes[p * n..(p + 1) * n];
        let dst = &mut rows[p * ow * h..(p + 1) * ow * h];
        for y in 0..h {
            let line = &src[y * w..(y + 1) * w];
            for x in 0..ow {
                dst[y * ow + x] = taps.iter().zip(&line[x..x + ws]).map(|(t, v)| t * v).sum();
            }
        }
    }

    let (c1, c2) = (params.c1(), params.c2());
    let mut total = 0.0;
    let mut moments = [0.0f64; 5];
    for y in 0..oh {
        for x in 0..ow {
            for (p, m) in moments.iter_mut().enumerate() {
                let plane = &rows[p * ow * h..(p + 1) * ow * h];
                *m = taps
                    .iter()
                    .enumerate()
                    .map(|(k, t)| t * plane[(y + k) * ow + x])
                    .sum();
            }
            total += ssim_index(moments, c1, c2);
        }
    }
    Ok(total / (ow * oh) as f64)
}

/// SSIM of one window from its weighted moments
/// `[E a, E b, E a^2, E b^2, E ab]`.
fn ssim_index(m: [f64; 5], c1: f64, c2: f64) -> f64 {
    let [mu_a, mu_b, ea2, eb2, eab] = m;
    let var_a = ea2 - mu_a * mu_a;
    let var_b = eb2 - mu_b * mu_b;
    let cov = eab - mu_a * mu_b;
    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
        / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}

/// A full-reference quality measure usable inside the pairing metrics.
/// Scores are always finite (PSNR is capped).
pub trait IqaMetric: Send + Sync {
    fn kind(&self) -> IqaKind;
    fn score(&self, a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, IqaError>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Ssim(pub SsimParams);

impl IqaMetric for Ssim {
    fn kind(&self) -> IqaKind {
        IqaKind::Ssim
    }

    fn score(&self, a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, IqaError> {
        ssim(a, b, &self.0)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Psnr;

impl IqaMetric for Psnr {
    fn kind(&self) -> IqaKind {
        IqaKind::Psnr
    }

    fn score(&self, a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, IqaError> {
        psnr(a, b).map(cap_psnr)
    }
}
