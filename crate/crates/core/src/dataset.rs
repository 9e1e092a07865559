//! Evaluation manifests, the BEMB embedding store and scenario classification.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biometric::Embedding;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("manifest line {0}: {1}")]
    MalformedLine(usize, String),
    #[error("manifest line {line}: missing field `{name}`")]
    MissingField { line: usize, name: &'static str },
    #[error("duplicate morph_id `{0}`")]
    DuplicateMorphId(String),
    #[error("morph `{0}`: {1}")]
    InvalidRecord(String, String),
    #[error("embedding store: bad magic bytes")]
    BadMagic,
    #[error("embedding store: unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("embedding store: dimension mismatch for `{id}`: expected {expected}, got {got}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        got: usize,
    },
    #[error("embedding store: truncated file ({0})")]
    TruncatedFile(String),
    #[error("embedding store: {0} trailing bytes after the last record")]
    TrailingBytes(usize),
    #[error("embedding store: invalid UTF-8 in {0}")]
    InvalidUtf8(&'static str),
    #[error("embedding store: duplicate id `{0}`")]
    DuplicateId(String),
    #[error("embedding store: invalid entry `{0}`: {1}")]
    InvalidEntry(String, String),
    #[error("embedding store: {0} does not fit the format")]
    Oversized(&'static str),
    #[error("empty set: {0}")]
    EmptySet(&'static str),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One evaluation unit: a morph, its two constituents and the two
/// (unordered) demorpher outputs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorphRecord {
    pub morph_id: String,
    pub morph_path: PathBuf,
    pub gt1_id: String,
    pub gt2_id: String,
    pub gt1_path: PathBuf,
    pub gt2_path: PathBuf,
    pub out1_path: PathBuf,
    pub out2_path: PathBuf,
}

const RECORD_FIELDS: [&str; 8] = [
    "morph_id",
    "morph_path",
    "gt1_id",
    "gt2_id",
    "gt1_path",
    "gt2_path",
    "out1_path",
    "out2_path",
];

impl MorphRecord {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let invalid = |msg: String| DatasetError::InvalidRecord(self.morph_id.clone(), msg);
        if self.morph_id.is_empty() {
            return Err(DatasetError::InvalidRecord(
                String::new(),
                "empty morph_id".into(),
            ));
        }
        if self.gt1_id == self.gt2_id {
            return Err(invalid(format!(
                "gt1_id and gt2_id are both `{}`",
                self.gt1_id
            )));
        }
        let named = [
            ("morph_path", &self.morph_path),
            ("gt1_path", &self.gt1_path),
            ("gt2_path", &self.gt2_path),
            ("out1_path", &self.out1_path),
            ("out2_path", &self.out2_path),
        ];
        for (i, (na, pa)) in named.iter().enumerate() {
            for (nb, pb) in &named[i + 1..] {
                // both outputs may point at the same file (morph replication),
                // and either may reuse the morph itself
                let allowed = matches!(
                    (*na, *nb),
                    ("out1_path", "out2_path")
                        | ("morph_path", "out1_path")
                        | ("morph_path", "out2_path")
                );
                if pa == pb && !allowed {
                    return Err(invalid(format!("{na} and {nb} are the same path")));
                }
            }
        }
        Ok(())
    }

    /// Embedding-store keys of the two outputs: their file stems.
    pub fn output_ids(&self) -> [String; 2] {
        [file_stem(&self.out1_path), file_stem(&self.out2_path)]
    }
}

pub fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn parse_manifest(path: impl AsRef<Path>) -> Result<Vec<MorphRecord>, DatasetError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(io_err(path))?;
    parse_manifest_from(BufReader::new(file)).map_err(|e| match e {
        DatasetError::Io { source, .. } => DatasetError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// Parses JSON-lines records. Blank lines are skipped; relative paths are
/// kept as written.
pub fn parse_manifest_from<R: BufRead>(input: R) -> Result<Vec<MorphRecord>, DatasetError> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in input.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|source| DatasetError::Io {
            path: PathBuf::new(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| DatasetError::MalformedLine(n, e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| DatasetError::MalformedLine(n, "expected a JSON object".into()))?;
        if let Some(extra) = obj.keys().find(|k| !RECORD_FIELDS.contains(&k.as_str())) {
            return Err(DatasetError::MalformedLine(
                n,
                format!("unknown field `{extra}`"),
            ));
        }
        let field = |name: &'static str| -> Result<String, DatasetError> {
            match obj.get(name) {
                None => Err(DatasetError::MissingField { line: n, name }),
                Some(serde_json::Value::String(s)) => Ok(s.clone()),
                Some(_) => Err(DatasetError::MalformedLine(
                    n,
                    format!("field `{name}` must be a string"),
                )),
            }
        };
        let record = MorphRecord {
            morph_id: field("morph_id")?,
            morph_path: field("morph_path")?.into(),
            gt1_id: field("gt1_id")?,
            gt2_id: field("gt2_id")?,
            gt1_path: field("gt1_path")?.into(),
            gt2_path: field("gt2_path")?.into(),
            out1_path: field("out1_path")?.into(),
            out2_path: field("out2_path")?.into(),
        };
        record.validate()?;
        if !seen.insert(record.morph_id.clone()) {
            return Err(DatasetError::DuplicateMorphId(record.morph_id));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn write_manifest<W: Write>(records: &[MorphRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Bonafide gallery: every constituent identity named in the manifest.
pub fn gallery_ids(records: &[MorphRecord]) -> Result<BTreeSet<String>, DatasetError> {
    if records.is_empty() {
        return Err(DatasetError::EmptySet("manifest has no records"));
    }
    Ok(records
        .iter()
        .flat_map(|r| [r.gt1_id.clone(), r.gt2_id.clone()])
        .collect())
}

/// Precomputed matcher outputs keyed by image id.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore {
    matcher_name: String,
    dimension: usize,
    // insertion order is kept so a write/read cycle is byte-stable
    entries: Vec<Embedding>,
    index: BTreeMap<String, usize>,
}

pub const BEMB_MAGIC: &[u8; 4] = b"BEMB";
pub const BEMB_VERSION: u16 = 1;

impl EmbeddingStore {
    pub fn new(matcher_name: impl Into<String>, dimension: usize) -> Self {
        Self {
            matcher_name: matcher_name.into(),
            dimension,
            entries: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, embedding: Embedding) -> Result<(), DatasetError> {
        if embedding.dimension() != self.dimension {
            return Err(DatasetError::DimensionMismatch {
                id: embedding.id,
                expected: self.dimension,
                got: embedding.vector.len(),
            });
        }
        if self.index.contains_key(&embedding.id) {
            return Err(DatasetError::DuplicateId(embedding.id));
        }
        self.index.insert(embedding.id.clone(), self.entries.len());
        self.entries.push(embedding);
        Ok(())
    }

    pub fn matcher_name(&self) -> &str {
        &self.matcher_name
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Embedding> {
        self.index.get(id).map(|&i| &self.entries[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn entries(&self) -> &[Embedding] {
        &self.entries
    }

    /// Serializes to BEMB. Vectors are narrowed to f32.
    pub fn to_bytes(&self) -> Result<Vec<u8>, DatasetError> {
        let name = self.matcher_name.as_bytes();
        let name_len: u16 = name
            .len()
            .try_into()
            .map_err(|_| DatasetError::Oversized("matcher name"))?;
        let dim: u32 = self
            .dimension
            .try_into()
            .map_err(|_| DatasetError::Oversized("dimension"))?;
        let count: u32 = self
            .entries
            .len()
            .try_into()
            .map_err(|_| DatasetError::Oversized("record count"))?;
        let mut out =
            Vec::with_capacity(16 + name.len() + self.entries.len() * (2 + 4 * self.dimension));
        out.extend_from_slice(BEMB_MAGIC);
        out.extend_from_slice(&BEMB_VERSION.to_le_bytes());
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&dim.to_le_bytes());
        out.extend_from_slice(&count.to_le_bytes());
        for e in &self.entries {
            let id = e.id.as_bytes();
            let id_len: u16 = id
                .len()
                .try_into()
                .map_err(|_| DatasetError::Oversized("embedding id"))?;
            out.extend_from_slice(&id_len.to_le_bytes());
            out.extend_from_slice(id);
            for &v in &e.vector {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DatasetError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != BEMB_MAGIC {
            return Err(DatasetError::BadMagic);
        }
        let version = r.u16("version")?;
        if version != BEMB_VERSION {
            return Err(DatasetError::UnsupportedVersion(version));
        }
        let name_len = r.u16("matcher name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "matcher name")?)
            .map_err(|_| DatasetError::InvalidUtf8("matcher name"))?
            .to_string();
        let dimension = r.u32("dimension")? as usize;
        if dimension == 0 {
            return Err(DatasetError::DimensionMismatch {
                id: String::new(),
                expected: 1,
                got: 0,
            });
        }
        let count = r.u32("count")? as usize;
        let mut store = EmbeddingStore::new(name, dimension);
        for k in 0..count {
            let ctx = || format!("record {k} of {count}");
            let id_len = r
                .u16("id length")
                .map_err(|_| DatasetError::TruncatedFile(ctx()))? as usize;
            let id = std::str::from_utf8(
                r.take(id_len, "id")
                    .map_err(|_| DatasetError::TruncatedFile(ctx()))?,
            )
            .map_err(|_| DatasetError::InvalidUtf8("embedding id"))?
            .to_string();
            let raw = r
                .take(4 * dimension, "vector")
                .map_err(|_| DatasetError::TruncatedFile(ctx()))?;
            let vector: Vec<f64> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            if let Some(bad) = vector.iter().find(|v| !v.is_finite()) {
                return Err(DatasetError::InvalidEntry(
                    id,
                    format!("non-finite component {bad}"),
                ));
            }
            let embedding = Embedding::new(id.clone(), vector)
                .map_err(|e| DatasetError::InvalidEntry(id, e.to_string()))?;
            store.insert(embedding)?;
        }
        if r.pos != bytes.len() {
            return Err(DatasetError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(io_err(path))
    }
}

pub fn load_embedding_store(path: impl AsRef<Path>) -> Result<EmbeddingStore, DatasetError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    EmbeddingStore::from_bytes(&bytes)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], DatasetError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| DatasetError::TruncatedFile(format!("reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16, DatasetError> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32, DatasetError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Train/test identity sets of a demorphing protocol.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioSplit {
    pub train_identities: BTreeSet<String>,
    pub test_identities: BTreeSet<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Test identities are all seen in training.
    Scenario1,
    /// Some, but not all, test identities are seen in training.
    Scenario2,
    /// Train and test identities are disjoint.
    Scenario3,
}

impl Scenario {
    pub fn number(self) -> u8 {
        match self {
            Scenario::Scenario1 => 1,
            Scenario::Scenario2 => 2,
            Scenario::Scenario3 => 3,
        }
    }
}

pub fn classify_scenario(split: &ScenarioSplit) -> Result<Scenario, DatasetError> {
    if split.train_identities.is_empty() {
        return Err(DatasetError::EmptySet("train identities"));
    }
    if split.test_identities.is_empty() {
        return Err(DatasetError::EmptySet("test identities"));
    }
    let overlap = split
        .test_identities
        .intersection(&split.train_identities)
        .count();
    Ok(if overlap == split.test_identities.len() {
        Scenario::Scenario1
    } else if overlap == 0 {
        Scenario::Scenario3
    } else {
        Scenario::Scenario2
    })
}

/// One identity per line; blank lines and `#` comments are ignored.
pub fn read_id_list(path: impl AsRef<Path>) -> Result<BTreeSet<String>, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}
