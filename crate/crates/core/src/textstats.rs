//! Tokenization, sentence segmentation, vocabulary and smoothed IDF.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::LabeledDataset;
use crate::{Error, Exec, Result};

/// Printed in reports so results can be matched to the tokenizer rules.
pub const TOKENIZER_VERSION: &str = "ws-casefold-edgepunct/1";

/// Lowercased whitespace tokens with punctuation trimmed from both edges.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|w| {
            let t = w.trim_matches(|c: char| !c.is_alphanumeric());
            (!t.is_empty()).then(|| t.to_lowercase())
        })
        .collect()
}

pub trait SentenceSplitter: Send + Sync {
    fn split<'a>(&self, text: &'a str) -> Vec<&'a str>;
}

/// Splits after `.`, `!` or `?` when followed by whitespace or end of text.
///
/// Abbreviations are not special-cased: `"Dr. Smith left."` yields two
/// sentences.
#[derive(Debug, Clone, Copy, Default)]
pub struct PunctuationSplitter;

impl SentenceSplitter for PunctuationSplitter {
    fn split<'a>(&self, text: &'a str) -> Vec<&'a str> {
        let mut out = Vec::new();
        let mut start = 0;
        let mut it = text.char_indices().peekable();
        while let Some((i, c)) = it.next() {
            if matches!(c, '.' | '!' | '?') {
                let at_break = match it.peek() {
                    None => true,
                    Some((_, n)) => n.is_whitespace(),
                };
                if at_break {
                    let end = i + c.len_utf8();
                    let s = text[start..end].trim();
                    if !s.is_empty() {
                        out.push(s);
                    }
                    start = end;
                }
            }
        }
        let tail = text[start..].trim();
        if !tail.is_empty() {
            out.push(tail);
        }
        out
    }
}

pub fn split_sentences(text: &str) -> Vec<&str> {
    PunctuationSplitter.split(text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabStats {
    /// token -> number of documents containing it; iteration order is the
    /// lexicographic vocabulary order.
    pub doc_freq: BTreeMap<String, usize>,
    pub n_docs: usize,
    /// Token count of every sentence that has at least one token.
    pub sentence_lengths: Vec<usize>,
}

impl VocabStats {
    pub fn vocab(&self) -> impl Iterator<Item = &str> {
        self.doc_freq.keys().map(String::as_str)
    }

    pub fn vocab_size(&self) -> usize {
        self.doc_freq.len()
    }

    pub fn vocab_set(&self) -> BTreeSet<String> {
        self.doc_freq.keys().cloned().collect()
    }

    pub fn df(&self, token: &str) -> usize {
        self.doc_freq.get(token).copied().unwrap_or(0)
    }
}

pub fn build_vocab(ds: &LabeledDataset) -> Result<VocabStats> {
    build_vocab_with(ds, &PunctuationSplitter, Exec::default())
}

pub fn build_vocab_with(
    ds: &LabeledDataset,
    splitter: &dyn SentenceSplitter,
    exec: Exec,
) -> Result<VocabStats> {
    if ds.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let per_doc = exec.map(&ds.records, |r| {
        let uniq: BTreeSet<String> = tokenize(&r.text).into_iter().collect();
        let lens: Vec<usize> = splitter
            .split(&r.text)
            .into_iter()
            .map(|s| tokenize(s).len())
            .filter(|&n| n > 0)
            .collect();
        (uniq, lens)
    });
    let mut doc_freq = BTreeMap::new();
    let mut sentence_lengths = Vec::new();
    for (uniq, lens) in per_doc {
        for t in uniq {
            *doc_freq.entry(t).or_insert(0) += 1;
        }
        sentence_lengths.extend(lens);
    }
    Ok(VocabStats {
        doc_freq,
        n_docs: ds.len(),
        sentence_lengths,
    })
}

/// IDF smoothing variants. Only the add-one form is provided; it keeps
/// every value strictly positive, including for tokens a corpus never saw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdfSmoothing {
    /// ln((N + 1) / (df + 1)) + 1
    #[default]
    AddOne,
}

impl IdfSmoothing {
    pub fn value(self, n_docs: usize, df: usize) -> f64 {
        match self {
            IdfSmoothing::AddOne => ((n_docs as f64 + 1.0) / (df as f64 + 1.0)).ln() + 1.0,
        }
    }
}

/// IDF values aligned to a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct IdfVector {
    pub tokens: Vec<String>,
    pub values: Vec<f64>,
}

impl IdfVector {
    pub fn get(&self, token: &str) -> Option<f64> {
        self.tokens
            .binary_search_by(|t| t.as_str().cmp(token))
            .ok()
            .map(|i| self.values[i])
    }
}

/// Smoothed IDF for every token of `shared_vocab`; unseen tokens get df 0.
pub fn idf(vs: &VocabStats, shared_vocab: &BTreeSet<String>) -> IdfVector {
    idf_with(vs, shared_vocab, IdfSmoothing::AddOne)
}

pub fn idf_with(vs: &VocabStats, shared_vocab: &BTreeSet<String>, smoothing: IdfSmoothing) -> IdfVector {
    let tokens: Vec<String> = shared_vocab.iter().cloned().collect();
    let values = tokens
        .iter()
        .map(|t| smoothing.value(vs.n_docs, vs.df(t)))
        .collect();
    IdfVector { tokens, values }
}
