//! Name-keyed registries for the interchangeable pieces of the pipeline:
//! demorphers, IQA metrics and embedders.

use std::collections::BTreeMap;

use demorph_core::iqa::{IqaMetric, Psnr, Ssim, SsimParams};

use crate::demorpher::{Demorpher, OracleDemorpher, SwappedOracleDemorpher, TrivialDemorpher};
use crate::embedder::{Embedder, GridEmbedder};
use crate::error::{HarnessError, Result};

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<String, Box<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Adds `item` under `name`, replacing any previous entry.
    pub fn register(&mut self, name: impl Into<String>, item: Box<T>) -> &mut Self {
        self.entries.insert(name.into(), item);
        self
    }

    pub fn get(&self, name: &str) -> Result<&T> {
        self.entries
            .get(name)
            .map(Box::as_ref)
            .ok_or_else(|| HarnessError::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().collect::<Vec<_>>().join(", "),
            })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn demorphers() -> Registry<dyn Demorpher> {
    let mut r: Registry<dyn Demorpher> = Registry::new("demorpher");
    r.register("trivial", Box::new(TrivialDemorpher))
        .register("oracle", Box::new(OracleDemorpher))
        .register("swapped-oracle", Box::new(SwappedOracleDemorpher));
    r
}

pub fn iqa_metrics(ssim: SsimParams) -> Registry<dyn IqaMetric> {
    let mut r: Registry<dyn IqaMetric> = Registry::new("IQA metric");
    r.register("ssim", Box::new(Ssim(ssim)))
        .register("psnr", Box::new(Psnr));
    r
}

pub fn embedders() -> Registry<dyn Embedder> {
    let mut r: Registry<dyn Embedder> = Registry::new("embedder");
    r.register("grid8", Box::new(GridEmbedder::new(8)));
    r
}
