use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use super::FeatureMatrix;
use crate::corpus::LabeledDataset;
use crate::textstats::{tokenize, IdfSmoothing};
use crate::{Error, Exec, Result};

/// TF-IDF features over the vocabulary of the fitting datasets, capped at
/// the `max_features` tokens with the highest document frequency (ties in
/// lexicographic order). Rows are L2-normalized; empty rows stay zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TfidfFeaturizer {
    pub vocab: Vec<String>,
    pub idf: Vec<f64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl TfidfFeaturizer {
    pub fn fit(datasets: &[&LabeledDataset], max_features: usize) -> Result<Self> {
        if max_features == 0 {
            return Err(Error::Parameter("max_features must be positive".into()));
        }
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        let mut n_docs = 0;
        for ds in datasets {
            for r in &ds.records {
                let uniq: BTreeSet<String> = tokenize(&r.text).into_iter().collect();
                for t in uniq {
                    *df.entry(t).or_insert(0) += 1;
                }
                n_docs += 1;
            }
        }
        if df.is_empty() {
            return Err(Error::Empty("feature vocabulary"));
        }
        let mut ranked: Vec<(&String, usize)> = df.iter().map(|(t, &c)| (t, c)).collect();
        // stable sort keeps lexicographic order among equal df
        ranked.sort_by_key(|e| std::cmp::Reverse(e.1));
        ranked.truncate(max_features);
        let mut kept: Vec<(String, usize)> = ranked.into_iter().map(|(t, c)| (t.clone(), c)).collect();
        kept.sort();
        let vocab: Vec<String> = kept.iter().map(|(t, _)| t.clone()).collect();
        let idf = kept
            .iter()
            .map(|(_, c)| IdfSmoothing::AddOne.value(n_docs, *c))
            .collect();
        Ok(Self::from_parts(vocab, idf))
    }

    fn from_parts(vocab: Vec<String>, idf: Vec<f64>) -> Self {
        let index = vocab.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        TfidfFeaturizer { vocab, idf, index }
    }

    pub fn dim(&self) -> usize {
        self.vocab.len()
    }

    pub fn transform(&self, ds: &LabeledDataset) -> Result<FeatureMatrix> {
        let d = self.dim();
        let rows = Exec::default().map(&ds.records, |r| {
            let mut row = vec![0.0; d];
            for t in tokenize(&r.text) {
                if let Some(&j) = self.index.get(&t) {
                    row[j] += 1.0;
                }
            }
            let mut norm = 0.0;
            for (x, w) in row.iter_mut().zip(&self.idf) {
                *x *= w;
                norm += *x * *x;
            }
            if norm > 0.0 {
                let norm = norm.sqrt();
                row.iter_mut().for_each(|x| *x /= norm);
            }
            row
        });
        let ids = ds.records.iter().map(|r| r.id.clone()).collect();
        FeatureMatrix::new(d, rows.concat(), ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Label, Role, TextRecord};

    fn ds(texts: &[&str]) -> LabeledDataset {
        let recs = texts
            .iter()
            .enumerate()
            .map(|(i, t)| TextRecord::new(format!("r{i}"), *t, Label::from_bool(i % 2 == 0)))
            .collect();
        LabeledDataset::new("d", Role::Source, recs).unwrap()
    }

    #[test]
    fn cap_keeps_most_frequent() {
        let d = ds(&["a b c", "a b", "a z"]);
        let f = TfidfFeaturizer::fit(&[&d], 2).unwrap();
        assert_eq!(f.vocab, ["a", "b"]);
        let f = TfidfFeaturizer::fit(&[&d], 3).unwrap();
        // c and z tie on df=1; c wins lexicographically
        assert_eq!(f.vocab, ["a", "b", "c"]);
    }

    #[test]
    fn rows_are_unit_or_zero() {
        let d = ds(&["a b c", "a b", "q"]);
        let f = TfidfFeaturizer::fit(&[&d], 2).unwrap();
        let x = f.transform(&d).unwrap();
        let n0: f64 = x.row(0).iter().map(|v| v * v).sum();
        assert!((n0 - 1.0).abs() < 1e-12);
        assert!(x.row(2).iter().all(|&v| v == 0.0));
        assert_eq!(x.row_ids()[1], "r1");
    }
}
