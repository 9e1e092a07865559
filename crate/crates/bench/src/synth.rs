//! Deterministic synthetic "texture faces" and alpha-blend morph benchmarks.
//!
//! A face is an 8x8 grid of dark/bright cells (its identity, as seen by the
//! grid embedder) overlaid with per-pixel texture (what SSIM sees).

use std::fs;
use std::path::{Path, PathBuf};

use demorph_core::dataset::MorphRecord;
use demorph_core::image::{alpha_blend_morph, save_png, ImageBuffer};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{HarnessError, Result};
use crate::io::save_manifest;

pub const GRID: usize = 8;
const BRIGHT_CELLS: u32 = 32;

/// Identity code: bit `r * 8 + c` set means cell (r, c) is bright.
pub type Pattern = u64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceStyle {
    pub dark: u8,
    pub bright: u8,
    /// Half-width of the uniform per-pixel texture.
    pub texture_amplitude: f64,
}

impl FaceStyle {
    /// High-contrast cells: identities are far apart for the grid embedder.
    pub const BENCHMARK: FaceStyle = FaceStyle {
        dark: 30,
        bright: 225,
        texture_amplitude: 20.0,
    };
}

#[derive(Clone, Copy, Debug)]
pub struct SynthConfig {
    pub seed: u64,
    pub identities: usize,
    pub morphs: usize,
    pub size: usize,
    pub alpha: f64,
    pub style: FaceStyle,
    /// Allowed number of shared bright cells between two identities.
    pub min_overlap: u32,
    pub max_overlap: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            identities: 40,
            morphs: 100,
            size: 64,
            alpha: 0.5,
            style: FaceStyle::BENCHMARK,
            min_overlap: 12,
            max_overlap: 20,
        }
    }
}

pub struct SyntheticFace {
    pub id: String,
    pub pattern: Pattern,
    pub image: ImageBuffer,
}

pub struct SyntheticMorph {
    pub morph_id: String,
    pub constituents: [usize; 2],
    pub image: ImageBuffer,
}

pub struct SyntheticBenchmark {
    pub faces: Vec<SyntheticFace>,
    pub morphs: Vec<SyntheticMorph>,
}

pub fn random_pattern(rng: &mut impl Rng) -> Pattern {
    rand::seq::index::sample(rng, GRID * GRID, BRIGHT_CELLS as usize)
        .iter()
        .fold(0u64, |acc, i| acc | (1 << i))
}

/// Rejection-samples `n` codes whose pairwise overlaps stay in
/// `[min_overlap, max_overlap]`.
pub fn identity_patterns(
    n: usize,
    min_overlap: u32,
    max_overlap: u32,
    rng: &mut impl Rng,
) -> Result<Vec<Pattern>> {
    let mut out: Vec<Pattern> = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n {
        attempts += 1;
        if attempts > 10_000 * n.max(1) {
            return Err(HarnessError::Validation(format!(
                "could not draw {n} identity codes with overlap in [{min_overlap}, {max_overlap}]"
            )));
        }
        let p = random_pattern(rng);
        let ok = out.iter().all(|q| {
            let k = (p & q).count_ones();
            (min_overlap..=max_overlap).contains(&k)
        });
        if ok {
            out.push(p);
        }
    }
    Ok(out)
}

/// Texture field in `[-amplitude, amplitude]`.
pub fn texture(size: usize, amplitude: f64, rng: &mut impl Rng) -> Vec<f64> {
    (0..size * size)
        .map(|_| {
            if amplitude > 0.0 {
                rng.random_range(-amplitude..=amplitude)
            } else {
                0.0
            }
        })
        .collect()
}

pub fn render_face(
    pattern: Pattern,
    style: &FaceStyle,
    texture: &[f64],
    size: usize,
) -> Result<ImageBuffer> {
    if size < GRID || texture.len() != size * size {
        return Err(HarnessError::Validation(format!(
            "face size {size} needs at least {GRID} pixels and a matching texture"
        )));
    }
    ImageBuffer::from_luma_fn(size, size, |x, y| {
        let cell = (y * GRID / size) * GRID + x * GRID / size;
        let level = if pattern & (1 << cell) != 0 {
            style.bright
        } else {
            style.dark
        };
        (level as f64 + texture[y * size + x])
            .round()
            .clamp(0.0, 255.0) as u8
    })
    .map_err(HarnessError::from)
}

pub fn generate(config: &SynthConfig) -> Result<SyntheticBenchmark> {
    let n = config.identities;
    let max_pairs = n * n.saturating_sub(1) / 2;
    if n < 3 || config.morphs == 0 || config.morphs > max_pairs {
        return Err(HarnessError::Validation(format!(
            "need >= 3 identities and 1..={max_pairs} morphs, got {n} identities and {} morphs",
            config.morphs
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let patterns = identity_patterns(n, config.min_overlap, config.max_overlap, &mut rng)?;
    let mut faces = Vec::with_capacity(n);
    for (i, &pattern) in patterns.iter().enumerate() {
        let tex = texture(config.size, config.style.texture_amplitude, &mut rng);
        faces.push(SyntheticFace {
            id: format!("id_{i:03}"),
            pattern,
            image: render_face(pattern, &config.style, &tex, config.size)?,
        });
    }

    let mut pairs: Vec<[usize; 2]> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| [a, b]))
        .collect();
    pairs.shuffle(&mut rng);
    pairs.truncate(config.morphs);
    let morphs = pairs
        .into_iter()
        .enumerate()
        .map(|(k, [a, b])| {
            Ok(SyntheticMorph {
                morph_id: format!("morph_{k:04}"),
                constituents: [a, b],
                image: alpha_blend_morph(&faces[a].image, &faces[b].image, config.alpha)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticBenchmark { faces, morphs })
}

/// Writes `faces/`, `morphs/` and `manifest.jsonl` under `dir`. Manifest
/// paths are relative to `dir`, and both outputs point at the morph itself
/// (the trivial demorpher) until a baseline rewrites them. Returns records
/// with paths joined onto `dir`.
pub fn write_benchmark(bench: &SyntheticBenchmark, dir: &Path) -> Result<Vec<MorphRecord>> {
    for sub in ["faces", "morphs"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(HarnessError::io(&p))?;
    }
    let face_path = |i: usize| PathBuf::from("faces").join(format!("{}.png", bench.faces[i].id));
    for (i, face) in bench.faces.iter().enumerate() {
        save_png(&face.image, dir.join(face_path(i)))?;
    }
    let mut relative = Vec::with_capacity(bench.morphs.len());
    for m in &bench.morphs {
        let morph_path = PathBuf::from("morphs").join(format!("{}.png", m.morph_id));
        save_png(&m.image, dir.join(&morph_path))?;
        let [a, b] = m.constituents;
        relative.push(MorphRecord {
            morph_id: m.morph_id.clone(),
            morph_path: morph_path.clone(),
            gt1_id: bench.faces[a].id.clone(),
            gt2_id: bench.faces[b].id.clone(),
            gt1_path: face_path(a),
            gt2_path: face_path(b),
            out1_path: morph_path.clone(),
            out2_path: morph_path,
        });
    }
    save_manifest(&relative, &dir.join("manifest.jsonl"))?;
    Ok(relative
        .into_iter()
        .map(|r| MorphRecord {
            morph_path: dir.join(&r.morph_path),
            gt1_path: dir.join(&r.gt1_path),
            gt2_path: dir.join(&r.gt2_path),
            out1_path: dir.join(&r.out1_path),
            out2_path: dir.join(&r.out2_path),
            ..r
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patterns_respect_overlap_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ps = identity_patterns(40, 12, 20, &mut rng).unwrap();
        for (i, p) in ps.iter().enumerate() {
            assert_eq!(p.count_ones(), 32);
            for q in &ps[i + 1..] {
                assert!((12..=20).contains(&(p & q).count_ones()));
            }
        }
        assert!(identity_patterns(3, 40, 50, &mut rng).is_err());
    }

    #[test]
    fn render_places_cells() {
        let style = FaceStyle {
            dark: 10,
            bright: 200,
            texture_amplitude: 0.0,
        };
        let img = render_face(1, &style, &vec![0.0; 256], 16).unwrap();
        assert_eq!(img.samples()[0], 200);
        assert_eq!(img.samples()[1], 200);
        assert_eq!(img.samples()[2], 10);
        assert_eq!(img.samples()[16 * 2], 10);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig {
            identities: 6,
            morphs: 5,
            size: 16,
            ..Default::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.faces.len(), 6);
        assert_eq!(a.morphs.len(), 5);
        for (x, y) in a.morphs.iter().zip(&b.morphs) {
            assert_eq!(x.image, y.image);
            assert_eq!(x.constituents, y.constituents);
            assert_ne!(x.constituents[0], x.constituents[1]);
        }
        let too_many = SynthConfig { morphs: 16, ..cfg };
        assert!(generate(&too_many).is_err());
    }
}
