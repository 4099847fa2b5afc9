//! Intermediate layer concatenation: per-record embeddings from a target
//! provider and any number of source providers are concatenated and fed to
//! logistic regression.
//!
//! # Embedding file format
//!
//! ```text
//! EMB 1 <provider_id> <dim> <count>
//! <record_id>\t<v1> <v2> ... <v_dim>
//! ```
//!
//! UTF-8, one header line, exactly `count` rows, no blank lines. Values are
//! written with the shortest representation that parses back to the same
//! `f64`.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::accuracy;
use crate::corpus::{stratified_split, LabeledDataset};
use crate::learners::{predict, train_logreg, FeatureMatrix, LogRegHyper};
use crate::seed::{fnv1a, mix64};
use crate::textstats::tokenize;
use crate::{Error, Exec, Result};

pub const EMB_MAGIC: &str = "EMB";
pub const EMB_VERSION: &str = "1";
/// Share of each class used for training in ILC runs.
pub const ILC_TRAIN_FRAC: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    provider_id: String,
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(provider_id: impl Into<String>, dim: usize, ids: Vec<String>, data: Vec<f64>) -> Result<Self> {
        let provider_id = provider_id.into();
        if provider_id.is_empty() || provider_id.contains(char::is_whitespace) {
            return Err(Error::Validation(format!("invalid provider id {provider_id:?}")));
        }
        if dim == 0 {
            return Err(Error::Validation("embedding dim must be positive".into()));
        }
        if data.len() != dim * ids.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * ids.len(),
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite value for record {}", ids[i / dim])));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if id.is_empty() || id.contains(['\t', '\n', '\r']) {
                return Err(Error::Validation(format!("invalid record id {id:?}")));
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate record id {id:?}")));
            }
        }
        Ok(EmbeddingMatrix {
            provider_id,
            dim,
            ids,
            index,
            data,
        })
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index
            .get(id)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    /// All-zero provider over the given ids.
    pub fn zeros(provider_id: &str, dim: usize, ids: Vec<String>) -> Result<Self> {
        let n = ids.len();
        Self::new(provider_id, dim, ids, vec![0.0; n * dim])
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{EMB_MAGIC} {EMB_VERSION} {} {} {}\n",
            self.provider_id,
            self.dim,
            self.len()
        );
        for (id, row) in self.ids.iter().zip(self.rows()) {
            out.push_str(id);
            out.push('\t');
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                write!(out, "{v:?}").expect("write to string");
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

pub fn parse_embeddings(src: &str, path: &Path) -> Result<EmbeddingMatrix> {
    let body = src.strip_suffix('\n').unwrap_or(src);
    let mut lines = body.split('\n');
    let header = lines.next().unwrap_or("");
    let fields: Vec<&str> = header.split(' ').collect();
    if fields.len() != 5 || fields[0] != EMB_MAGIC {
        return Err(Error::parse(path, 1, "expected header `EMB 1 <provider_id> <dim> <count>`"));
    }
    if fields[1] != EMB_VERSION {
        return Err(Error::parse(path, 1, format!("unsupported format version {}", fields[1])));
    }
    let provider_id = fields[2];
    let dim: usize = fields[3]
        .parse()
        .map_err(|_| Error::parse(path, 1, format!("bad dim {:?}", fields[3])))?;
    let count: usize = fields[4]
        .parse()
        .map_err(|_| Error::parse(path, 1, format!("bad count {:?}", fields[4])))?;
    if dim == 0 {
        return Err(Error::parse(path, 1, "dim must be positive"));
    }

    let mut ids = Vec::with_capacity(count);
    let mut data = Vec::with_capacity(count * dim);
    let mut seen = BTreeSet::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let (id, values) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, lineno, "expected `<record_id>\\t<values>`"))?;
        if id.is_empty() {
            return Err(Error::parse(path, lineno, "empty record id"));
        }
        if !seen.insert(id) {
            return Err(Error::parse(path, lineno, format!("duplicate record id {id:?}")));
        }
        let before = data.len();
        for tok in values.split(' ') {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad float {tok:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(path, lineno, format!("non-finite value {tok:?}")));
            }
            data.push(v);
        }
        let got = data.len() - before;
        if got != dim {
            return Err(Error::parse(path, lineno, format!("expected {dim} values, found {got}")));
        }
        ids.push(id.to_string());
    }
    if ids.len() != count {
        return Err(Error::parse(
            path,
            ids.len() + 1,
            format!("header declares {count} rows, found {}", ids.len()),
        ));
    }
    EmbeddingMatrix::new(provider_id, dim, ids, data)
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let src = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&src, path)
}

pub fn hashed_provider_id(dim: usize, seed: u64, vocab_tag: Option<&str>) -> String {
    match vocab_tag {
        Some(tag) => format!("hashed-d{dim}-s{seed}-vocab:{tag}"),
        None => format!("hashed-d{dim}-s{seed}"),
    }
}

pub fn hashed_encode(ds: &LabeledDataset, dim: usize, seed: u64) -> Result<EmbeddingMatrix> {
    hashed_encode_with(ds, dim, seed, None, Exec::default())
}

/// Signed feature hashing of token counts, L2-normalized per record.
///
/// When `vocab` is given (a tag plus token set), only tokens from that set
/// are hashed; this makes a provider that sees a record through another
/// corpus's vocabulary. Records without any hashed token map to the zero
/// vector.
pub fn hashed_encode_with(
    ds: &LabeledDataset,
    dim: usize,
    seed: u64,
    vocab: Option<(&str, &BTreeSet<String>)>,
    exec: Exec,
) -> Result<EmbeddingMatrix> {
    if dim < 2 {
        return Err(Error::Parameter(format!("hashed dim must be >= 2, got {dim}")));
    }
    let key = mix64(seed);
    let rows = exec.map(&ds.records, |r| {
        let mut v = vec![0.0; dim];
        for t in tokenize(&r.text) {
            if vocab.is_some_and(|(_, set)| !set.contains(&t)) {
                continue;
            }
            let h = mix64(fnv1a(t.as_bytes()) ^ key);
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % dim as u64) as usize] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    });
    let ids = ds.records.iter().map(|r| r.id.clone()).collect();
    EmbeddingMatrix::new(
        hashed_provider_id(dim, seed, vocab.map(|(tag, _)| tag)),
        dim,
        ids,
        rows.concat(),
    )
}

/// Concatenate each id's vectors in matrix order.
pub fn ilc_fuse(matrices: &[&EmbeddingMatrix], ids: &[String]) -> Result<FeatureMatrix> {
    let width: usize = matrices.iter().map(|m| m.dim()).sum();
    let mut data = Vec::with_capacity(width * ids.len());
    for id in ids {
        for m in matrices {
            let row = m.get(id).ok_or_else(|| Error::MissingRecord {
                provider: m.provider_id().to_string(),
                id: id.clone(),
            })?;
            data.extend_from_slice(row);
        }
    }
    FeatureMatrix::new(width, data, ids.to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionRun {
    pub target_provider: String,
    pub source_providers: Vec<String>,
    pub split_seed: u64,
    pub train_frac: f64,
    pub hyper: LogRegHyper,
    pub fused_width: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: f64,
    pub baseline_accuracy: f64,
    pub delta_vs_baseline: f64,
}

fn fused_accuracy(
    target: &LabeledDataset,
    providers: &[&EmbeddingMatrix],
    split_seed: u64,
    hyper: &LogRegHyper,
) -> Result<(f64, usize, usize, usize)> {
    let (train, test) = stratified_split(target, ILC_TRAIN_FRAC, split_seed)?;
    let ids = |d: &LabeledDataset| d.records.iter().map(|r| r.id.clone()).collect::<Vec<_>>();
    let xtr = ilc_fuse(providers, &ids(&train))?;
    let xte = ilc_fuse(providers, &ids(&test))?;
    let w = vec![1.0; train.len()];
    let model = train_logreg(&xtr, &train.labels(), &w, hyper)?;
    let (pred, _) = predict(&model, &xte)?;
    Ok((accuracy(&pred, &test.labels())?, xtr.n_cols(), train.len(), test.len()))
}

/// Stratified 90/10 split of the target, logistic regression on the fused
/// training rows, accuracy on the fused test rows. The baseline is the same
/// procedure with the target provider alone.
pub fn ilc_train_eval(
    target: &LabeledDataset,
    target_provider: &EmbeddingMatrix,
    source_providers: &[&EmbeddingMatrix],
    split_seed: u64,
    hyper: &LogRegHyper,
) -> Result<FusionRun> {
    let base = fused_accuracy(target, &[target_provider], split_seed, hyper)?;
    let (acc, width, n_train, n_test) = if source_providers.is_empty() {
        base
    } else {
        let mut all = vec![target_provider];
        all.extend_from_slice(source_providers);
        fused_accuracy(target, &all, split_seed, hyper)?
    };
    let baseline = base.0;
    Ok(FusionRun {
        target_provider: target_provider.provider_id().to_string(),
        source_providers: source_providers.iter().map(|m| m.provider_id().to_string()).collect(),
        split_seed,
        train_frac: ILC_TRAIN_FRAC,
        hyper: *hyper,
        fused_width: width,
        n_train,
        n_test,
        accuracy: acc,
        baseline_accuracy: baseline,
        delta_vs_baseline: acc - baseline,
    })
}
