//! Embedding strategies for self-contained runs. Real face matchers arrive as
//! precomputed BEMB stores instead.

use std::collections::HashSet;
use std::path::Path;

use demorph_core::biometric::Embedding;
use demorph_core::dataset::{file_stem, EmbeddingStore, MorphRecord};
use demorph_core::image::{load_image, to_luma, ImageBuffer};

use crate::error::{HarnessError, Result};

pub trait Embedder: Send + Sync {
    /// Recorded as the store's matcher name.
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, img: &ImageBuffer) -> Result<Vec<f64>>;
}

/// Mean luma of each cell of a `cells x cells` grid, unit-normalized.
///
/// Alpha blending is linear, so the embedding of a blended morph lies close
/// to the blend of its constituents' embeddings.
#[derive(Clone, Debug)]
pub struct GridEmbedder {
    cells: usize,
    name: String,
}

impl GridEmbedder {
    pub fn new(cells: usize) -> Self {
        Self {
            cells,
            name: format!("grid{cells}x{cells}"),
        }
    }
}

impl Embedder for GridEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.cells * self.cells
    }

    fn embed(&self, img: &ImageBuffer) -> Result<Vec<f64>> {
        let (w, h, g) = (img.width(), img.height(), self.cells);
        if w < g || h < g {
            return Err(HarnessError::Validation(format!(
                "{w}x{h} image is smaller than the {g}x{g} embedding grid"
            )));
        }
        let luma = to_luma(img);
        let px = luma.samples();
        let mut v = Vec::with_capacity(g * g);
        for r in 0..g {
            let (y0, y1) = (r * h / g, (r + 1) * h / g);
            for c in 0..g {
                let (x0, x1) = (c * w / g, (c + 1) * w / g);
                let mut sum = 0u64;
                for y in y0..y1 {
                    sum += px[y * w + x0..y * w + x1]
                        .iter()
                        .map(|&p| p as u64)
                        .sum::<u64>();
                }
                v.push(sum as f64 / ((y1 - y0) * (x1 - x0)) as f64);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(HarnessError::Validation(
                "cannot embed an all-black image".into(),
            ));
        }
        Ok(v.into_iter().map(|x| x / norm).collect())
    }
}

/// Embeds every image a manifest refers to: ground truths under their
/// identity ids, morphs under `morph_id`, outputs under their file stems.
pub fn embed_manifest(records: &[MorphRecord], embedder: &dyn Embedder) -> Result<EmbeddingStore> {
    let mut store = EmbeddingStore::new(embedder.name(), embedder.dimension());
    let mut seen = HashSet::new();
    let mut add = |id: String, path: &Path, store: &mut EmbeddingStore| -> Result<()> {
        if !seen.insert(id.clone()) {
            return Ok(());
        }
        let img = load_image(path)?;
        let vector = embedder.embed(&img)?;
        store.insert(Embedding::new(id, vector)?)?;
        Ok(())
    };
    for r in records {
        add(r.gt1_id.clone(), &r.gt1_path, &mut store)?;
        add(r.gt2_id.clone(), &r.gt2_path, &mut store)?;
        add(r.morph_id.clone(), &r.morph_path, &mut store)?;
        add(file_stem(&r.out1_path), &r.out1_path, &mut store)?;
        add(file_stem(&r.out2_path), &r.out2_path, &mut store)?;
    }
    Ok(store)
}
