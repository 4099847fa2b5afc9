//! Dataset distances: KL and Jensen-Shannon divergence between smoothed IDF
//! distributions, and a cosine distance between mean sentence embeddings.
//!
//! `P` is always the source dataset and `Q` the target.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::LabeledDataset;
use crate::fusion::EmbeddingMatrix;
use crate::textstats::{
    build_vocab, idf, tokenize, IdfSmoothing, PunctuationSplitter, SentenceSplitter, VocabStats,
    TOKENIZER_VERSION,
};
use crate::{Error, Exec, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ProbDist {
    pub support: Vec<String>,
    pub probs: Vec<f64>,
}

impl ProbDist {
    /// Normalize non-negative masses over a support.
    pub fn from_masses(support: Vec<String>, masses: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::Empty("shared vocabulary"));
        }
        if support.len() != masses.len() {
            return Err(Error::DimensionMismatch {
                expected: support.len(),
                got: masses.len(),
            });
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) || masses.iter().any(|m| *m < 0.0 || !m.is_finite()) {
            return Err(Error::Parameter("masses must be finite, non-negative and not all zero".into()));
        }
        let probs = masses.into_iter().map(|m| m / total).collect();
        Ok(ProbDist { support, probs })
    }

    fn check_aligned(&self, other: &ProbDist) -> Result<()> {
        if self.support != other.support {
            return Err(Error::SupportMismatch(format!(
                "supports differ ({} vs {} tokens)",
                self.support.len(),
                other.support.len()
            )));
        }
        Ok(())
    }
}

/// Probability over `shared_vocab` proportional to the dataset's smoothed IDF.
pub fn idf_distribution(ds: &LabeledDataset, shared_vocab: &BTreeSet<String>) -> Result<ProbDist> {
    idf_distribution_from(&build_vocab(ds)?, shared_vocab)
}

pub fn idf_distribution_from(vs: &VocabStats, shared_vocab: &BTreeSet<String>) -> Result<ProbDist> {
    let iv = idf(vs, shared_vocab);
    ProbDist::from_masses(iv.tokens, iv.values)
}

/// Sum p_i ln(p_i / q_i) in nats, with 0 ln(0/q) = 0.
///
/// Returns infinity when some q_i = 0 < p_i.
pub fn kl_divergence(p: &ProbDist, q: &ProbDist) -> Result<f64> {
    p.check_aligned(q)?;
    Ok(kl_raw(&p.probs, &q.probs))
}

fn kl_raw(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return f64::INFINITY;
            }
            s += pi * (pi / qi).ln();
        }
    }
    s.max(0.0)
}

/// Jensen-Shannon divergence in nats: mean KL of P and Q to their midpoint.
/// Bounded by ln 2. No square root is taken.
pub fn js_distance(p: &ProbDist, q: &ProbDist) -> Result<f64> {
    p.check_aligned(q)?;
    let m: Vec<f64> = p.probs.iter().zip(&q.probs).map(|(a, b)| 0.5 * (a + b)).collect();
    let js = 0.5 * (kl_raw(&p.probs, &m) + kl_raw(&q.probs, &m));
    Ok(js.min(std::f64::consts::LN_2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanEmbedding {
    pub vector: Vec<f64>,
    pub provider_id: String,
    pub n_sentences: usize,
}

/// (1 - cos(a, b)) / 2, in [0, 1].
pub fn cosine_distance(a: &MeanEmbedding, b: &MeanEmbedding) -> Result<f64> {
    if a.provider_id != b.provider_id {
        return Err(Error::Parameter(format!(
            "embeddings come from different providers: {} vs {}",
            a.provider_id, b.provider_id
        )));
    }
    if a.vector.len() != b.vector.len() {
        return Err(Error::DimensionMismatch {
            expected: a.vector.len(),
            got: b.vector.len(),
        });
    }
    let dot: f64 = a.vector.iter().zip(&b.vector).map(|(x, y)| x * y).sum();
    let na2: f64 = a.vector.iter().map(|x| x * x).sum();
    let nb2: f64 = b.vector.iter().map(|x| x * x).sum();
    if na2 == 0.0 || nb2 == 0.0 {
        return Err(Error::ZeroVector(a.provider_id.clone()));
    }
    let cos = (dot / (na2 * nb2).sqrt()).clamp(-1.0, 1.0);
    Ok((1.0 - cos) / 2.0)
}

/// Produces the mean sentence embedding of two datasets in a common space.
pub trait SentenceEmbedder: Send + Sync {
    fn provider_id(&self) -> String;
    fn embed_pair(
        &self,
        source: &LabeledDataset,
        target: &LabeledDataset,
    ) -> Result<(MeanEmbedding, MeanEmbedding)>;
}

/// Desk-scale default: every sentence becomes an L2-normalized TF-IDF
/// vector over the pair's shared vocabulary (IDF over the pooled records of
/// both datasets), and a dataset is the mean of its sentence vectors.
/// Sentences without tokens are skipped.
#[derive(Debug, Clone, Copy, Default)]
pub struct TfidfSentenceEmbedder {
    pub exec: Exec,
}

impl TfidfSentenceEmbedder {
    fn mean(
        &self,
        ds: &LabeledDataset,
        index: &BTreeMap<&str, usize>,
        idf: &[f64],
    ) -> MeanEmbedding {
        let per_record = self.exec.map(&ds.records, |r| {
            let mut vecs = Vec::new();
            for s in PunctuationSplitter.split(&r.text) {
                let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
                for t in tokenize(s) {
                    *counts.entry(index[t.as_str()]).or_insert(0.0) += 1.0;
                }
                if counts.is_empty() {
                    continue;
                }
                let v: Vec<(usize, f64)> = counts.into_iter().map(|(j, c)| (j, c * idf[j])).collect();
                let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
                vecs.push(v.into_iter().map(|(j, x)| (j, x / norm)).collect::<Vec<_>>());
            }
            vecs
        });
        let mut acc = vec![0.0; idf.len()];
        let mut n = 0usize;
        for sentence in per_record.into_iter().flatten() {
            for (j, x) in sentence {
                acc[j] += x;
            }
            n += 1;
        }
        if n > 0 {
            for x in &mut acc {
                *x /= n as f64;
            }
        }
        MeanEmbedding {
            vector: acc,
            provider_id: self.provider_id(),
            n_sentences: n,
        }
    }
}

impl SentenceEmbedder for TfidfSentenceEmbedder {
    fn provider_id(&self) -> String {
        "tfidf-sentence-mean".to_string()
    }

    fn embed_pair(
        &self,
        source: &LabeledDataset,
        target: &LabeledDataset,
    ) -> Result<(MeanEmbedding, MeanEmbedding)> {
        let vs = build_vocab(source)?;
        let vt = build_vocab(target)?;
        let shared: BTreeSet<String> = vs.vocab_set().union(&vt.vocab_set()).cloned().collect();
        let index: BTreeMap<&str, usize> = shared.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let n_docs = vs.n_docs + vt.n_docs;
        let idf: Vec<f64> = shared
            .iter()
            .map(|t| IdfSmoothing::AddOne.value(n_docs, vs.df(t) + vt.df(t)))
            .collect();
        Ok((self.mean(source, &index, &idf), self.mean(target, &index, &idf)))
    }
}

/// Mean embeddings read from per-dataset sentence-embedding files: the
/// dataset vector is the unweighted mean of the file's rows.
#[derive(Debug, Clone)]
pub struct FileSentenceEmbedder {
    pub matrices: BTreeMap<String, EmbeddingMatrix>,
}

impl FileSentenceEmbedder {
    fn mean(&self, name: &str) -> Result<MeanEmbedding> {
        let m = self
            .matrices
            .get(name)
            .ok_or_else(|| Error::Config(format!("no sentence embedding file for dataset {name}")))?;
        if m.is_empty() {
            return Err(Error::Empty("embedding matrix"));
        }
        let mut acc = vec![0.0; m.dim()];
        for row in m.rows() {
            for (a, x) in acc.iter_mut().zip(row) {
                *a += x;
            }
        }
        for a in &mut acc {
            *a /= m.len() as f64;
        }
        Ok(MeanEmbedding {
            vector: acc,
            provider_id: m.provider_id().to_string(),
            n_sentences: m.len(),
        })
    }
}

impl SentenceEmbedder for FileSentenceEmbedder {
    fn provider_id(&self) -> String {
        let ids: BTreeSet<&str> = self.matrices.values().map(|m| m.provider_id()).collect();
        ids.into_iter().collect::<Vec<_>>().join("+")
    }

    fn embed_pair(
        &self,
        source: &LabeledDataset,
        target: &LabeledDataset,
    ) -> Result<(MeanEmbedding, MeanEmbedding)> {
        Ok((self.mean(&source.name)?, self.mean(&target.name)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
}

impl LogBase {
    /// Factor converting nats into this base.
    pub fn scale(self) -> f64 {
        match self {
            LogBase::Natural => 1.0,
            LogBase::Two => 1.0 / std::f64::consts::LN_2,
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            LogBase::Natural => "nats",
            LogBase::Two => "bits",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub source: String,
    /// D_KL(Q||P): target relative to source
    pub kl_target_source: f64,
    /// D_KL(P||Q): source relative to target
    pub kl_source_target: f64,
    pub js: f64,
    pub cos: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceTable {
    pub target: String,
    pub log_base: LogBase,
    pub sentence_provider: String,
    pub tokenizer: String,
    /// IDF distributions are built over the union vocabulary of each pair.
    pub vocabulary: String,
    pub rows: Vec<DistanceRow>,
}

impl DistanceTable {
    pub fn row(&self, source: &str) -> Option<&DistanceRow> {
        self.rows.iter().find(|r| r.source == source)
    }
}

pub fn distance_row(
    source: &LabeledDataset,
    target: &LabeledDataset,
    provider: &dyn SentenceEmbedder,
    log_base: LogBase,
) -> Result<DistanceRow> {
    let vs = build_vocab(source)?;
    let vt = build_vocab(target)?;
    let shared: BTreeSet<String> = vs.vocab_set().union(&vt.vocab_set()).cloned().collect();
    let p = idf_distribution_from(&vs, &shared)?;
    let q = idf_distribution_from(&vt, &shared)?;
    let (ep, eq) = provider.embed_pair(source, target)?;
    let k = log_base.scale();
    Ok(DistanceRow {
        source: source.name.clone(),
        kl_target_source: kl_divergence(&q, &p)? * k,
        kl_source_target: kl_divergence(&p, &q)? * k,
        js: js_distance(&p, &q)? * k,
        cos: cosine_distance(&ep, &eq)?,
    })
}

pub fn distance_table(
    sources: &[LabeledDataset],
    target: &LabeledDataset,
    provider: &dyn SentenceEmbedder,
    log_base: LogBase,
) -> Result<DistanceTable> {
    distance_table_with(sources, target, provider, log_base, Exec::default())
}

/// Rows are computed independently per source and returned in input order.
pub fn distance_table_with(
    sources: &[LabeledDataset],
    target: &LabeledDataset,
    provider: &dyn SentenceEmbedder,
    log_base: LogBase,
    exec: Exec,
) -> Result<DistanceTable> {
    let rows = exec.try_map(sources, |s| distance_row(s, target, provider, log_base))?;
    Ok(DistanceTable {
        target: target.name.clone(),
        log_base,
        sentence_provider: provider.provider_id(),
        tokenizer: TOKENIZER_VERSION.to_string(),
        vocabulary: "pair-union".to_string(),
        rows,
    })
}
