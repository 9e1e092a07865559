//! Building blocks for evaluating reference-free face demorphing.
//!
//! The crate is split by concern:
//!
//! * [`image`]: 8-bit raster buffers, PNG/BMP I/O, luma conversion, the
//!   alpha-blend morph operator and the degradation operators.
//! * [`iqa`]: PSNR and Gaussian-window SSIM.
//! * [`biometric`]: cosine matching, FMR-calibrated thresholds, TMR and
//!   restoration accuracy.
//! * [`pairing`]: output/ground-truth pairing, paired IQA, the biometrically
//!   cross-weighted IQA term and the demorphing-condition diagnostics.
//! * [`dataset`]: JSON-lines manifests, the BEMB embedding store and the
//!   train/test scenario classifier.

pub mod biometric;
pub mod dataset;
pub mod image;
pub mod iqa;
pub mod pairing;

pub use biometric::{Embedding, MatchThreshold, ScoreSet};
pub use dataset::{EmbeddingStore, MorphRecord, Scenario, ScenarioSplit};
pub use image::{DegradationKind, DegradationSpec, ImageBuffer};
pub use iqa::{IqaKind, IqaMetric, SsimParams};
pub use pairing::{DemorphEvaluation, Pairing, ScoreGrid};
