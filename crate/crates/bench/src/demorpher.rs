//! Demorphing strategies. Only the reference baselines live here; trained
//! demorphers are evaluated from their written outputs via the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use demorph_core::dataset::MorphRecord;
use demorph_core::image::{load_image, save_png, ImageBuffer};

use crate::error::{HarnessError, Result};
use crate::io::save_manifest;

/// What a demorpher sees for one morph. Ground truths are only consulted by
/// the upper-bound baselines.
pub struct DemorphContext<'a> {
    pub morph: &'a ImageBuffer,
    pub ground_truth: [&'a ImageBuffer; 2],
}

pub trait Demorpher: Send + Sync {
    fn name(&self) -> &str;
    fn demorph(&self, ctx: &DemorphContext<'_>) -> Result<[ImageBuffer; 2]>;
}

/// Replicates the morph as both outputs.
pub fn trivial_demorph(x: &ImageBuffer) -> (ImageBuffer, ImageBuffer) {
    (x.clone(), x.clone())
}

/// Returns the record's ground-truth images as the outputs.
pub fn oracle_demorph(record: &MorphRecord) -> Result<(ImageBuffer, ImageBuffer)> {
    Ok((load_image(&record.gt1_path)?, load_image(&record.gt2_path)?))
}

pub struct TrivialDemorpher;

impl Demorpher for TrivialDemorpher {
    fn name(&self) -> &str {
        "trivial"
    }

    fn demorph(&self, ctx: &DemorphContext<'_>) -> Result<[ImageBuffer; 2]> {
        let (a, b) = trivial_demorph(ctx.morph);
        Ok([a, b])
    }
}

pub struct OracleDemorpher;

impl Demorpher for OracleDemorpher {
    fn name(&self) -> &str {
        "oracle"
    }

    fn demorph(&self, ctx: &DemorphContext<'_>) -> Result<[ImageBuffer; 2]> {
        Ok([ctx.ground_truth[0].clone(), ctx.ground_truth[1].clone()])
    }
}

/// The oracle with its outputs in the opposite order.
pub struct SwappedOracleDemorpher;

impl Demorpher for SwappedOracleDemorpher {
    fn name(&self) -> &str {
        "swapped-oracle"
    }

    fn demorph(&self, ctx: &DemorphContext<'_>) -> Result<[ImageBuffer; 2]> {
        Ok([ctx.ground_truth[1].clone(), ctx.ground_truth[0].clone()])
    }
}

/// Runs `demorpher` over every record, writes `<morph_id>_o1.png` and
/// `<morph_id>_o2.png` into `out_dir` along with a rewritten
/// `manifest.jsonl`, and returns the rewritten records.
pub fn materialize_outputs(
    records: &[MorphRecord],
    demorpher: &dyn Demorpher,
    out_dir: &Path,
) -> Result<Vec<MorphRecord>> {
    fs::create_dir_all(out_dir).map_err(HarnessError::io(out_dir))?;
    let out_dir = fs::canonicalize(out_dir).map_err(HarnessError::io(out_dir))?;
    let mut rewritten = Vec::with_capacity(records.len());
    for record in records {
        let wrap = |e: HarnessError| HarnessError::Record {
            morph_id: record.morph_id.clone(),
            source: Box::new(e),
        };
        let morph = load_image(&record.morph_path).map_err(|e| wrap(e.into()))?;
        let g1 = load_image(&record.gt1_path).map_err(|e| wrap(e.into()))?;
        let g2 = load_image(&record.gt2_path).map_err(|e| wrap(e.into()))?;
        let [o1, o2] = demorpher
            .demorph(&DemorphContext {
                morph: &morph,
                ground_truth: [&g1, &g2],
            })
            .map_err(wrap)?;
        let paths: [PathBuf; 2] = [
            out_dir.join(format!("{}_o1.png", record.morph_id)),
            out_dir.join(format!("{}_o2.png", record.morph_id)),
        ];
        for (img, path) in [(&o1, &paths[0]), (&o2, &paths[1])] {
            save_png(img, path).map_err(|e| wrap(e.into()))?;
        }
        let [out1_path, out2_path] = paths;
        rewritten.push(MorphRecord {
            out1_path,
            out2_path,
            ..record.clone()
        });
    }
    save_manifest(&rewritten, &out_dir.join("manifest.jsonl"))?;
    Ok(rewritten)
}
