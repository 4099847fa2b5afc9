//! Labeled text datasets: loading, cleaning, splitting, reduction and
//! descriptive statistics.
//!
//! # File format
//!
//! One JSON object per line (UTF-8):
//!
//! ```text
//! {"id": "sbu-0001", "text": "...", "label": 1, "topic": "restaurant"}
//! ```
//!
//! `label` is `0`/`1` (integer or string) or `"truthful"`/`"deceptive"`
//! (case-insensitive). `topic` is optional. Blank lines are skipped.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Truthful = 0,
    Deceptive = 1,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Truthful, Label::Deceptive];

    pub fn as_f64(self) -> f64 {
        self as u8 as f64
    }

    pub fn from_bool(deceptive: bool) -> Self {
        if deceptive {
            Label::Deceptive
        } else {
            Label::Truthful
        }
    }

    /// Parse a label token as it appears in dataset files.
    pub fn parse_token(tok: &str) -> Option<Label> {
        match tok.trim().to_ascii_lowercase().as_str() {
            "0" | "truthful" => Some(Label::Truthful),
            "1" | "deceptive" => Some(Label::Deceptive),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Truthful => "truthful",
            Label::Deceptive => "deceptive",
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(Label::Truthful),
            1 => Ok(Label::Deceptive),
            other => Err(format!("label {other} is not 0 or 1")),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Source,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextRecord {
    pub id: String,
    pub text: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
}

impl TextRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: Label) -> Self {
        TextRecord {
            id: id.into(),
            text: text.into(),
            label,
            topic: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub name: String,
    pub role: Role,
    pub records: Vec<TextRecord>,
}

impl LabeledDataset {
    /// Build a dataset after checking id uniqueness and non-empty text.
    pub fn new(name: impl Into<String>, role: Role, records: Vec<TextRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Validation(format!("duplicate record id {:?}", r.id)));
            }
            if r.text.trim().is_empty() {
                return Err(Error::Validation(format!("record {:?} has empty text", r.id)));
            }
        }
        Ok(LabeledDataset {
            name: name.into(),
            role,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.text.as_str())
    }

    pub fn class_count(&self, label: Label) -> usize {
        self.records.iter().filter(|r| r.label == label).count()
    }

    /// Fails unless both classes are present.
    pub fn require_both_classes(&self) -> Result<()> {
        for l in Label::ALL {
            if self.class_count(l) == 0 {
                return Err(Error::Validation(format!(
                    "dataset {} has no {} records",
                    self.name, l
                )));
            }
        }
        Ok(())
    }

    fn with_records(&self, name: String, records: Vec<TextRecord>) -> LabeledDataset {
        LabeledDataset {
            name,
            role: self.role,
            records,
        }
    }

    /// Write in the line-delimited format read by [`load_dataset`].
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.push(b'\n');
        }
        fs::File::create(path)
            .and_then(|mut f| f.write_all(&out))
            .map_err(|e| Error::io(path, e))
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawLabel {
    Int(i64),
    Str(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    text: String,
    label: RawLabel,
    #[serde(default)]
    topic: Option<String>,
}

/// Replace newlines and tabs with spaces, collapse whitespace runs, trim.
pub fn preprocess(text: &str) -> Result<String> {
    let out = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if out.is_empty() {
        Err(Error::EmptyText)
    } else {
        Ok(out)
    }
}

pub fn parse_dataset(src: &str, path: &Path, name: &str, role: Role) -> Result<LabeledDataset> {
    let mut records = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (i, line) in src.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord =
            serde_json::from_str(line).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        let label = match &raw.label {
            RawLabel::Int(0) => Some(Label::Truthful),
            RawLabel::Int(1) => Some(Label::Deceptive),
            RawLabel::Int(_) => None,
            RawLabel::Str(s) => Label::parse_token(s),
        };
        let label = label.ok_or_else(|| {
            let tok = match raw.label {
                RawLabel::Int(v) => v.to_string(),
                RawLabel::Str(s) => s,
            };
            Error::Validation(format!(
                "{}:{lineno}: unknown label token {tok:?}",
                path.display()
            ))
        })?;
        if let Some(prev) = seen.insert(raw.id.clone(), lineno) {
            return Err(Error::Validation(format!(
                "{}:{lineno}: duplicate id {:?} (first seen on line {prev})",
                path.display(),
                raw.id
            )));
        }
        let text = preprocess(&raw.text).map_err(|_| {
            Error::Validation(format!(
                "{}:{lineno}: record {:?} is empty after preprocessing",
                path.display(),
                raw.id
            ))
        })?;
        records.push(TextRecord {
            id: raw.id,
            text,
            label,
            topic: raw.topic,
        });
    }
    LabeledDataset::new(name, role, records)
}

pub fn load_dataset(path: &Path, name: &str, role: Role) -> Result<LabeledDataset> {
    let src = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&src, path, name, role)
}

/// Indices of records per label, in dataset order.
fn class_indices(ds: &LabeledDataset) -> [Vec<usize>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for (i, r) in ds.records.iter().enumerate() {
        out[r.label as usize].push(i);
    }
    out
}

/// Per-class train size: floor(frac * n + 0.5).
pub fn stratum_train_size(frac: f64, n: usize) -> usize {
    (frac * n as f64 + 0.5).floor() as usize
}

/// Stratified train/test split keeping the class ratio.
///
/// Both outputs preserve the input record order.
pub fn stratified_split(
    ds: &LabeledDataset,
    train_frac: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Parameter(format!(
            "train fraction {train_frac} not in (0, 1)"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut in_train = vec![false; ds.len()];
    for (label, mut idx) in Label::ALL.into_iter().zip(class_indices(ds)) {
        if idx.len() < 2 {
            return Err(Error::Stratification(format!(
                "class {label} of {} has {} record(s), need at least 2",
                ds.name,
                idx.len()
            )));
        }
        let k = stratum_train_size(train_frac, idx.len());
        idx.shuffle(&mut rng);
        for &i in &idx[..k] {
            in_train[i] = true;
        }
    }
    let (train, test): (Vec<_>, Vec<_>) = ds
        .records
        .iter()
        .cloned()
        .zip(in_train)
        .partition(|(_, t)| *t);
    Ok((
        ds.with_records(format!("{}-train", ds.name), train.into_iter().map(|p| p.0).collect()),
        ds.with_records(format!("{}-test", ds.name), test.into_iter().map(|p| p.0).collect()),
    ))
}

/// Balanced random reduction: `per_class` records of each label, sampled
/// without replacement. Output keeps input order.
pub fn reduce_balanced(
    ds: &LabeledDataset,
    total: usize,
    per_class: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if total != 2 * per_class {
        return Err(Error::Parameter(format!(
            "total {total} must equal 2 x per_class {per_class}"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut keep = vec![false; ds.len()];
    for (label, idx) in Label::ALL.into_iter().zip(class_indices(ds)) {
        if idx.len() < per_class {
            return Err(Error::Reduction {
                class: label.to_string(),
                available: idx.len(),
                needed: per_class,
            });
        }
        for &i in idx.choose_multiple(&mut rng, per_class) {
            keep[i] = true;
        }
    }
    let records = ds
        .records
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(r, _)| r.clone())
        .collect();
    Ok(ds.with_records(format!("{}-reduced", ds.name), records))
}

/// Mean and population standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub mean_word_count: f64,
    pub sd_word_count: f64,
    pub mean_char_length: f64,
    pub sd_char_length: f64,
    pub n_truthful: usize,
    pub n_deceptive: usize,
}

/// Word counts are whitespace tokens, lengths are unicode scalar values of
/// the preprocessed text; standard deviations are population.
pub fn describe(ds: &LabeledDataset) -> Result<DescriptiveStats> {
    if ds.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let words: Vec<f64> = ds
        .texts()
        .map(|t| t.split_whitespace().count() as f64)
        .collect();
    let chars: Vec<f64> = ds.texts().map(|t| t.chars().count() as f64).collect();
    let (mean_word_count, sd_word_count) = mean_sd(&words);
    let (mean_char_length, sd_char_length) = mean_sd(&chars);
    Ok(DescriptiveStats {
        mean_word_count,
        sd_word_count,
        mean_char_length,
        sd_char_length,
        n_truthful: ds.class_count(Label::Truthful),
        n_deceptive: ds.class_count(Label::Deceptive),
    })
}
