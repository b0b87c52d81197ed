//! Samples, domains and datasets; the binary feature file and CSV import; the
//! seeded synthetic multi-domain corpus.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! ```text
//! "CAKEFEAT"                    8 bytes
//! version                       u32 (= 1)
//! D                             u32
//! domain count                  u32
//! per domain:  name len u16, UTF-8 name, N_total u64
//! record count                  u64
//! per record:  id len u16, UTF-8 id, domain_id u32, label u8,
//!              av-present u8, arousal f32, valence f32, D x f32 features
//! ```
//!
//! Features and AV are stored as `f32`, so a load/write round trip is exact
//! for values that are representable in `f32`. The synthetic generator
//! rounds everything it produces to `f32` for that reason.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::numerics::{Mat64, SeededRng};

pub const FEATURE_MAGIC: &[u8; 8] = b"CAKEFEAT";
pub const FEATURE_VERSION: u32 = 1;
pub const NUM_CLASSES: usize = 7;
pub const DEFAULT_FEATURE_DIM: usize = 512;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic at byte 0: expected \"CAKEFEAT\"")]
    BadMagic,
    #[error("unsupported format version {version} at byte {offset}")]
    UnsupportedVersion { offset: usize, version: u32 },
    #[error("truncated payload at byte {offset}: need {needed} more bytes for {what}")]
    Truncated {
        offset: usize,
        needed: usize,
        what: &'static str,
    },
    #[error("invalid UTF-8 in {what} at byte {offset}")]
    InvalidUtf8 { offset: usize, what: &'static str },
    #[error("record {record} (byte {offset}): label {label} out of range 0..7")]
    LabelOutOfRange { offset: usize, record: usize, label: u8 },
    #[error("record {record} (byte {offset}): av-present flag must be 0 or 1, got {flag}")]
    BadAvFlag { offset: usize, record: usize, flag: u8 },
    #[error("record {record} (byte {offset}): arousal/valence ({arousal}, {valence}) outside [-1, 1]")]
    AvOutOfRange {
        offset: usize,
        record: usize,
        arousal: f64,
        valence: f64,
    },
    #[error("record {record} (byte {offset}): unknown domain id {domain}")]
    UnknownDomain { offset: usize, record: usize, domain: u32 },
    #[error("record {record} (byte {offset}): non-finite feature value")]
    NonFiniteFeature { offset: usize, record: usize },
    #[error("feature dimension {0} is invalid (must be >= 1)")]
    InvalidDimension(usize),
    #[error("trailing bytes after last record at byte {offset}")]
    TrailingBytes { offset: usize },
    #[error("domain {domain}: header declares {declared} records but {actual} found")]
    CountMismatch { domain: usize, declared: u64, actual: u64 },
    #[error("record {record}: dimension mismatch, expected {expected} features, got {actual}")]
    DimensionMismatch {
        record: usize,
        expected: usize,
        actual: usize,
    },
    #[error("record {record}: {message}")]
    InvalidRecord { record: usize, message: String },
    #[error("csv: {0}")]
    Csv(String),
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
}

/// The seven discrete emotions, in their fixed index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum EmotionClass {
    Neutral = 0,
    Happiness = 1,
    Sad = 2,
    Surprise = 3,
    Fear = 4,
    Disgust = 5,
    Anger = 6,
}

impl EmotionClass {
    pub const ALL: [EmotionClass; NUM_CLASSES] = [
        EmotionClass::Neutral,
        EmotionClass::Happiness,
        EmotionClass::Sad,
        EmotionClass::Surprise,
        EmotionClass::Fear,
        EmotionClass::Disgust,
        EmotionClass::Anger,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            EmotionClass::Neutral => "neutral",
            EmotionClass::Happiness => "happiness",
            EmotionClass::Sad => "sad",
            EmotionClass::Surprise => "surprise",
            EmotionClass::Fear => "fear",
            EmotionClass::Disgust => "disgust",
            EmotionClass::Anger => "anger",
        }
    }
}

impl fmt::Display for EmotionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmotionClass {
    type Err = String;

    /// Accepts either the class name or its index.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Ok(i) = s.parse::<usize>() {
            return Self::from_index(i).ok_or_else(|| format!("label index {i} out of range 0..7"));
        }
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown emotion label {s:?}"))
    }
}

/// Arousal-valence pair, each in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Av {
    pub arousal: f64,
    pub valence: f64,
}

impl Av {
    pub fn new(arousal: f64, valence: f64) -> Self {
        Self { arousal, valence }
    }

    pub fn is_valid(&self) -> bool {
        (-1.0..=1.0).contains(&self.arousal) && (-1.0..=1.0).contains(&self.valence)
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.arousal, self.valence]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub id: String,
    pub domain_id: usize,
    pub features: Vec<f64>,
    pub label: EmotionClass,
    pub av: Option<Av>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainMeta {
    pub domain_id: usize,
    pub name: String,
    pub n_total: u64,
    pub class_counts: [u64; NUM_CLASSES],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    /// The binary layout does not carry a split tag; loaded bundles get this.
    Unspecified,
}

/// A feature dataset spanning one or more domains. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    dim: usize,
    domains: Vec<DomainMeta>,
    records: Vec<FeatureRecord>,
    split: Split,
}

impl DatasetBundle {
    /// Builds a bundle and derives per-domain counts from `records`.
    pub fn new(
        dim: usize,
        domain_names: Vec<String>,
        records: Vec<FeatureRecord>,
        split: Split,
    ) -> Result<Self, DataError> {
        if dim == 0 {
            return Err(DataError::InvalidDimension(dim));
        }
        let mut domains: Vec<DomainMeta> = domain_names
            .into_iter()
            .enumerate()
            .map(|(domain_id, name)| DomainMeta {
                domain_id,
                name,
                n_total: 0,
                class_counts: [0; NUM_CLASSES],
            })
            .collect();
        for (i, r) in records.iter().enumerate() {
            validate_record(i, r, dim, domains.len())?;
            let d = &mut domains[r.domain_id];
            d.n_total += 1;
            d.class_counts[r.label.index()] += 1;
        }
        Ok(Self {
            dim,
            domains,
            records,
            split,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domains(&self) -> &[DomainMeta] {
        &self.domains
    }

    pub fn n_domains(&self) -> usize {
        self.domains.len()
    }

    pub fn records(&self) -> &[FeatureRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn domain_names(&self) -> Vec<String> {
        self.domains.iter().map(|d| d.name.clone()).collect()
    }

    /// Records belonging to one domain, in file order.
    pub fn domain_records(&self, domain_id: usize) -> impl Iterator<Item = &FeatureRecord> {
        self.records.iter().filter(move |r| r.domain_id == domain_id)
    }

    /// Number of records without arousal-valence values.
    pub fn missing_av(&self) -> usize {
        self.records.iter().filter(|r| r.av.is_none()).count()
    }
}

fn validate_record(i: usize, r: &FeatureRecord, dim: usize, n_domains: usize) -> Result<(), DataError> {
    if r.features.len() != dim {
        return Err(DataError::DimensionMismatch {
            record: i,
            expected: dim,
            actual: r.features.len(),
        });
    }
    if r.domain_id >= n_domains {
        return Err(DataError::InvalidRecord {
            record: i,
            message: format!("domain id {} has no domain entry", r.domain_id),
        });
    }
    if r.features.iter().any(|v| !v.is_finite()) {
        return Err(DataError::InvalidRecord {
            record: i,
            message: "non-finite feature value".into(),
        });
    }
    if let Some(av) = r.av {
        if !av.is_valid() {
            return Err(DataError::InvalidRecord {
                record: i,
                message: format!("arousal/valence ({}, {}) outside [-1, 1]", av.arousal, av.valence),
            });
        }
    }
    if r.id.len() > u16::MAX as usize {
        return Err(DataError::InvalidRecord {
            record: i,
            message: "id longer than 65535 bytes".into(),
        });
    }
    Ok(())
}

/// Per-domain class counts, recomputed by scanning the records.
pub fn class_counts(bundle: &DatasetBundle) -> Vec<[u64; NUM_CLASSES]> {
    let mut counts = vec![[0u64; NUM_CLASSES]; bundle.n_domains()];
    for r in bundle.records() {
        counts[r.domain_id][r.label.index()] += 1;
    }
    counts
}

// ---------------------------------------------------------------------------
// binary file
// ---------------------------------------------------------------------------

pub fn encode_features(bundle: &DatasetBundle) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + bundle.len() * (bundle.dim * 4 + 32));
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&(bundle.dim as u32).to_le_bytes());
    out.extend_from_slice(&(bundle.domains.len() as u32).to_le_bytes());
    for d in &bundle.domains {
        out.extend_from_slice(&(d.name.len() as u16).to_le_bytes());
        out.extend_from_slice(d.name.as_bytes());
        out.extend_from_slice(&d.n_total.to_le_bytes());
    }
    out.extend_from_slice(&(bundle.records.len() as u64).to_le_bytes());
    for r in &bundle.records {
        out.extend_from_slice(&(r.id.len() as u16).to_le_bytes());
        out.extend_from_slice(r.id.as_bytes());
        out.extend_from_slice(&(r.domain_id as u32).to_le_bytes());
        out.push(r.label as u8);
        let av = r.av.unwrap_or(Av::new(0.0, 0.0));
        out.push(u8::from(r.av.is_some()));
        out.extend_from_slice(&(av.arousal as f32).to_le_bytes());
        out.extend_from_slice(&(av.valence as f32).to_le_bytes());
        for &x in &r.features {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    out
}

pub fn write_feature_file(bundle: &DatasetBundle, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    fs::write(path, encode_features(bundle)).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_feature_file(path: impl AsRef<Path>) -> Result<DatasetBundle, DataError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_features(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], DataError> {
        let remaining = self.bytes.len() - self.pos;
        if remaining < n {
            return Err(DataError::Truncated {
                offset: self.pos,
                needed: n - remaining,
                what,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, DataError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, DataError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, DataError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &'static str) -> Result<f32, DataError> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &'static str) -> Result<String, DataError> {
        let len = self.u16(what)? as usize;
        let offset = self.pos;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| DataError::InvalidUtf8 { offset, what })
    }
}

pub fn decode_features(bytes: &[u8]) -> Result<DatasetBundle, DataError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if bytes.len() < FEATURE_MAGIC.len() || &bytes[..FEATURE_MAGIC.len()] != FEATURE_MAGIC {
        return Err(DataError::BadMagic);
    }
    cur.pos = FEATURE_MAGIC.len();
    let version_at = cur.pos;
    let version = cur.u32("format version")?;
    if version != FEATURE_VERSION {
        return Err(DataError::UnsupportedVersion {
            offset: version_at,
            version,
        });
    }
    let dim = cur.u32("feature dimension")? as usize;
    if dim == 0 {
        return Err(DataError::InvalidDimension(0));
    }
    let n_domains = cur.u32("domain count")? as usize;
    let mut names = Vec::new();
    let mut declared = Vec::new();
    for _ in 0..n_domains {
        names.push(cur.string("domain name")?);
        declared.push(cur.u64("domain record count")?);
    }
    let n_records = cur.u64("record count")?;
    let mut records = Vec::new();
    for record in 0..n_records as usize {
        let id = cur.string("record id")?;
        let domain_at = cur.pos;
        let domain = cur.u32("domain id")?;
        if domain as usize >= n_domains {
            return Err(DataError::UnknownDomain {
                offset: domain_at,
                record,
                domain,
            });
        }
        let label_at = cur.pos;
        let raw_label = cur.u8("label")?;
        let label = EmotionClass::from_index(raw_label as usize).ok_or(DataError::LabelOutOfRange {
            offset: label_at,
            record,
            label: raw_label,
        })?;
        let flag_at = cur.pos;
        let flag = cur.u8("av-present flag")?;
        if flag > 1 {
            return Err(DataError::BadAvFlag {
                offset: flag_at,
                record,
                flag,
            });
        }
        let av_at = cur.pos;
        let arousal = cur.f32("arousal")? as f64;
        let valence = cur.f32("valence")? as f64;
        let av = (flag == 1).then_some(Av::new(arousal, valence));
        if let Some(av) = av {
            if !av.is_valid() {
                return Err(DataError::AvOutOfRange {
                    offset: av_at,
                    record,
                    arousal,
                    valence,
                });
            }
        }
        let feat_at = cur.pos;
        let mut features = Vec::with_capacity(dim);
        for _ in 0..dim {
            let v = cur.f32("feature values")?;
            if !v.is_finite() {
                return Err(DataError::NonFiniteFeature {
                    offset: feat_at,
                    record,
                });
            }
            features.push(v as f64);
        }
        records.push(FeatureRecord {
            id,
            domain_id: domain as usize,
            features,
            label,
            av,
        });
    }
    if cur.pos != bytes.len() {
        return Err(DataError::TrailingBytes { offset: cur.pos });
    }
    let bundle = DatasetBundle::new(dim, names, records, Split::Unspecified)?;
    for (d, meta) in bundle.domains.iter().enumerate() {
        if meta.n_total != declared[d] {
            return Err(DataError::CountMismatch {
                domain: d,
                declared: declared[d],
                actual: meta.n_total,
            });
        }
    }
    Ok(bundle)
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Reads `id,domain,label,arousal,valence,f0..f{D-1}`.
///
/// `domain` holds either integer ids (then domains are named `domain<i>`) or
/// names (ids assigned in order of first appearance). `label` accepts class
/// names or indices. Empty arousal/valence cells mean the record has no AV.
pub fn import_csv(path: impl AsRef<Path>) -> Result<DatasetBundle, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<DatasetBundle, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| DataError::Csv(e.to_string()))?.clone();
    let fixed = ["id", "domain", "label", "arousal", "valence"];
    for (i, want) in fixed.iter().enumerate() {
        if headers.get(i) != Some(want) {
            return Err(DataError::Csv(format!(
                "header column {i} must be {want:?}, got {:?}",
                headers.get(i)
            )));
        }
    }
    let dim = headers.len() - fixed.len();
    for j in 0..dim {
        let want = format!("f{j}");
        if headers.get(fixed.len() + j) != Some(want.as_str()) {
            return Err(DataError::Csv(format!("feature header {j} must be {want:?}")));
        }
    }
    let mut rows = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| DataError::Csv(format!("row {i}: {e}")))?;
        rows.push(row);
    }
    let numeric_domains = rows.iter().all(|r| r[1].parse::<usize>().is_ok());
    let mut names: Vec<String> = Vec::new();
    let mut records = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let domain_id = if numeric_domains {
            let d: usize = row[1].parse().unwrap();
            while names.len() <= d {
                names.push(format!("domain{}", names.len()));
            }
            d
        } else {
            match names.iter().position(|n| n == &row[1]) {
                Some(d) => d,
                None => {
                    names.push(row[1].to_string());
                    names.len() - 1
                }
            }
        };
        let label: EmotionClass = row[2].parse().map_err(|e| DataError::Csv(format!("row {i}: {e}")))?;
        let av = match (row[3].is_empty(), row[4].is_empty()) {
            (true, true) => None,
            (false, false) => {
                let a = parse_f64(&row[3], i, "arousal")?;
                let v = parse_f64(&row[4], i, "valence")?;
                Some(Av::new(a, v))
            }
            _ => {
                return Err(DataError::Csv(format!(
                    "row {i}: arousal and valence must both be present or both empty"
                )))
            }
        };
        let features = (0..dim)
            .map(|j| parse_f64(&row[fixed.len() + j], i, "feature"))
            .collect::<Result<Vec<_>, _>>()?;
        records.push(FeatureRecord {
            id: row[0].to_string(),
            domain_id,
            features,
            label,
            av,
        });
    }
    DatasetBundle::new(dim, names, records, Split::Unspecified)
}

fn parse_f64(s: &str, row: usize, what: &str) -> Result<f64, DataError> {
    s.parse::<f64>()
        .map_err(|_| DataError::Csv(format!("row {row}: cannot parse {what} value {s:?}")))
}

/// Writes the CSV layout read by [`import_csv`], with domain names in the
/// `domain` column.
pub fn export_csv(bundle: &DatasetBundle, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| DataError::Csv(e.to_string()))?;
    let mut header: Vec<String> = ["id", "domain", "label", "arousal", "valence"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..bundle.dim).map(|j| format!("f{j}")));
    w.write_record(&header).map_err(|e| DataError::Csv(e.to_string()))?;
    for r in &bundle.records {
        let mut row = vec![
            r.id.clone(),
            bundle.domains[r.domain_id].name.clone(),
            r.label.name().to_string(),
        ];
        match r.av {
            Some(av) => {
                row.push(av.arousal.to_string());
                row.push(av.valence.to_string());
            }
            None => {
                row.push(String::new());
                row.push(String::new());
            }
        }
        row.extend(r.features.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| DataError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

// ---------------------------------------------------------------------------
// synthetic corpus
// ---------------------------------------------------------------------------

/// Latent prototypes of the built-in corpus, one row per class in
/// [`EmotionClass`] order. The first two coordinates play the role of
/// arousal and valence; the third separates classes that overlap in the
/// first two (fear/anger, sad/disgust).
pub const DEFAULT_PROTOTYPES: [[f64; 3]; NUM_CLASSES] = [
    [0.0, 0.0, 0.0],
    [0.3, 0.9, 0.3],
    [-0.5, -0.6, -0.5],
    [0.9, 0.3, -0.3],
    [0.7, -0.6, -0.8],
    [0.1, -0.8, 0.6],
    [0.8, -0.5, 0.8],
];

/// Parameters of the synthetic multi-domain corpus.
///
/// Each sample draws a class from its domain's ratios, forms the latent point
/// `prototype[class] + shift[domain] + noise_sigma * N(0, I)` and lifts it to
/// `dim` features with a fixed random `dim x latent_dim` matrix. AV values are
/// `clip(av_scale * (prototype + noise)[0..2] + av_noise_sigma * N(0, I))`,
/// i.e. a deterministic function of the class prototype plus noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_domains: usize,
    pub n_classes: usize,
    pub dim: usize,
    pub latent_dim: usize,
    /// `n_classes x latent_dim`; when `None`, drawn as N(0, prototype_scale²).
    pub prototypes: Option<Vec<Vec<f64>>>,
    pub prototype_scale: f64,
    pub noise_sigma: f64,
    /// Unnormalized class probabilities per domain.
    pub class_ratios: Vec<Vec<f64>>,
    pub train_counts: Vec<usize>,
    pub test_counts: Vec<usize>,
    pub domain_shift_sigma: f64,
    pub av_scale: f64,
    pub av_noise_sigma: f64,
    pub domain_names: Vec<String>,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// The shipped benchmark: 3 domains, 7 classes, latent dim 3, D = 64,
    /// 2000 train and 700 test samples.
    fn default() -> Self {
        Self {
            n_domains: 3,
            n_classes: NUM_CLASSES,
            dim: 64,
            latent_dim: 3,
            prototypes: Some(DEFAULT_PROTOTYPES.iter().map(|p| p.to_vec()).collect()),
            prototype_scale: 1.0,
            noise_sigma: 0.2,
            class_ratios: vec![
                vec![0.20, 0.24, 0.12, 0.10, 0.08, 0.10, 0.16],
                vec![0.18, 0.20, 0.14, 0.12, 0.10, 0.12, 0.14],
                vec![0.16, 0.16, 0.14, 0.14, 0.12, 0.14, 0.14],
            ],
            train_counts: vec![1400, 400, 200],
            test_counts: vec![490, 140, 70],
            domain_shift_sigma: 0.05,
            av_scale: 1.0,
            av_noise_sigma: 0.02,
            domain_names: vec!["domain0".into(), "domain1".into(), "domain2".into()],
            seed: 2019,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidConfig(m));
        if self.n_domains == 0 {
            return bad("n_domains must be >= 1".into());
        }
        if self.n_classes == 0 || self.n_classes > NUM_CLASSES {
            return bad(format!("n_classes must be in 1..={NUM_CLASSES}"));
        }
        if self.dim == 0 || self.latent_dim == 0 || self.latent_dim > self.dim {
            return bad(format!(
                "need 1 <= latent_dim ({}) <= dim ({})",
                self.latent_dim, self.dim
            ));
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("domain_shift_sigma", self.domain_shift_sigma),
            ("av_noise_sigma", self.av_noise_sigma),
            ("prototype_scale", self.prototype_scale),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be finite and >= 0"));
            }
        }
        if !self.av_scale.is_finite() {
            return bad("av_scale must be finite".into());
        }
        if let Some(p) = &self.prototypes {
            if p.len() != self.n_classes || p.iter().any(|row| row.len() != self.latent_dim) {
                return bad(format!("prototypes must be {} x {}", self.n_classes, self.latent_dim));
            }
        }
        if self.class_ratios.len() != self.n_domains {
            return bad("class_ratios needs one row per domain".into());
        }
        for (d, row) in self.class_ratios.iter().enumerate() {
            if row.len() != self.n_classes
                || row.iter().any(|&r| !(r >= 0.0) || !r.is_finite())
                || row.iter().sum::<f64>() <= 0.0
            {
                return bad(format!(
                    "class_ratios[{d}] must hold {} nonnegative values with a positive sum",
                    self.n_classes
                ));
            }
        }
        if self.train_counts.len() != self.n_domains || self.test_counts.len() != self.n_domains {
            return bad("train_counts and test_counts need one entry per domain".into());
        }
        if self.train_counts.iter().chain(&self.test_counts).any(|&c| c == 0) {
            return bad("all sample counts must be > 0".into());
        }
        if self.domain_names.len() != self.n_domains {
            return bad("domain_names needs one entry per domain".into());
        }
        Ok(())
    }
}

fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

/// Generates a disjoint train/test pair. Pure function of `cfg`.
#[allow(clippy::needless_range_loop)]
pub fn synth_generate(cfg: &SynthConfig) -> Result<(DatasetBundle, DatasetBundle), DataError> {
    cfg.validate()?;
    let mut rng = SeededRng::new(cfg.seed);
    let scale = 1.0 / (cfg.latent_dim as f64).sqrt();
    let lift_data: Vec<f64> = (0..cfg.dim * cfg.latent_dim).map(|_| rng.normal() * scale).collect();
    let lift = Mat64::from_vec(cfg.dim, cfg.latent_dim, lift_data).expect("lift shape");
    let prototypes: Vec<Vec<f64>> = match &cfg.prototypes {
        Some(p) => p.clone(),
        None => (0..cfg.n_classes)
            .map(|_| {
                (0..cfg.latent_dim)
                    .map(|_| rng.normal() * cfg.prototype_scale)
                    .collect()
            })
            .collect(),
    };
    let shifts: Vec<Vec<f64>> = (0..cfg.n_domains)
        .map(|_| {
            (0..cfg.latent_dim)
                .map(|_| rng.normal() * cfg.domain_shift_sigma)
                .collect()
        })
        .collect();

    let mut train = Vec::new();
    let mut test = Vec::new();
    for d in 0..cfg.n_domains {
        for (split_name, count, out) in [
            ("train", cfg.train_counts[d], &mut train),
            ("test", cfg.test_counts[d], &mut test),
        ] {
            for i in 0..count {
                let class = rng.categorical(&cfg.class_ratios[d]);
                let noise: Vec<f64> = (0..cfg.latent_dim).map(|_| rng.normal() * cfg.noise_sigma).collect();
                let latent: Vec<f64> = (0..cfg.latent_dim)
                    .map(|l| prototypes[class][l] + shifts[d][l] + noise[l])
                    .collect();
                let features: Vec<f64> = lift
                    .matvec(&latent)
                    .expect("latent dim")
                    .into_iter()
                    .map(round_f32)
                    .collect();
                let mut av_coord = |l: usize| {
                    let base = if l < cfg.latent_dim {
                        prototypes[class][l] + noise[l]
                    } else {
                        0.0
                    };
                    round_f32((cfg.av_scale * base + cfg.av_noise_sigma * rng.normal()).clamp(-1.0, 1.0))
                };
                let arousal = av_coord(0);
                let valence = av_coord(1);
                out.push(FeatureRecord {
                    id: format!("{}/{split_name}/{i:05}", cfg.domain_names[d]),
                    domain_id: d,
                    features,
                    label: EmotionClass::from_index(class).expect("class < 7"),
                    av: Some(Av::new(arousal, valence)),
                });
            }
        }
    }
    Ok((
        DatasetBundle::new(cfg.dim, cfg.domain_names.clone(), train, Split::Train)?,
        DatasetBundle::new(cfg.dim, cfg.domain_names.clone(), test, Split::Test)?,
    ))
}
