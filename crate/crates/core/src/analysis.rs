//! Accuracy and correlation between dataset distances and accuracy changes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::distance::DistanceTable;
use crate::{Error, Result};

pub fn accuracy(pred: &[Label], gold: &[Label]) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::DimensionMismatch {
            expected: gold.len(),
            got: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::Empty("label list"));
    }
    let hits = pred.iter().zip(gold).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / gold.len() as f64)
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::UndefinedCorrelation(format!(
            "need at least 3 pairs, got {}",
            x.len()
        )));
    }
    Ok(())
}

/// Product-moment correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant sequence".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn rank(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let mean = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = mean;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of mean ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&rank(x), &rank(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    /// Distances are negated before correlating, so a positive coefficient
    /// means closer sources transfer better.
    Paper,
    /// Raw values.
    Standard,
}

impl Convention {
    pub const BOTH: [Convention; 2] = [Convention::Paper, Convention::Standard];

    pub fn name(self) -> &'static str {
        match self {
            Convention::Paper => "paper",
            Convention::Standard => "standard",
        }
    }
}

/// The four distance columns in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Measure {
    KlTargetSource,
    KlSourceTarget,
    Js,
    Cos,
}

impl Measure {
    pub const ALL: [Measure; 4] = [
        Measure::KlTargetSource,
        Measure::KlSourceTarget,
        Measure::Js,
        Measure::Cos,
    ];

    pub fn column(self) -> &'static str {
        match self {
            Measure::KlTargetSource => "D_KL(Q||P)",
            Measure::KlSourceTarget => "D_KL(P||Q)",
            Measure::Js => "D_JS",
            Measure::Cos => "D_cos",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub pearson_r: f64,
    pub spearman_rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub convention: Convention,
    pub n: usize,
    pub sources: Vec<String>,
    pub measures: BTreeMap<Measure, Coefficients>,
}

impl CorrelationReport {
    pub fn get(&self, m: Measure) -> Coefficients {
        self.measures[&m]
    }
}

pub fn correlate_distance_accuracy(
    table: &DistanceTable,
    deltas: &BTreeMap<String, f64>,
    convention: Convention,
) -> Result<CorrelationReport> {
    let in_table: BTreeSet<&str> = table.rows.iter().map(|r| r.source.as_str()).collect();
    let in_deltas: BTreeSet<&str> = deltas.keys().map(String::as_str).collect();
    if in_table != in_deltas || in_table.len() != table.rows.len() {
        let only_t: Vec<_> = in_table.difference(&in_deltas).collect();
        let only_d: Vec<_> = in_deltas.difference(&in_table).collect();
        return Err(Error::KeyMismatch(format!(
            "only in distance table: {only_t:?}; only in deltas: {only_d:?}"
        )));
    }
    if deltas.len() < 3 {
        return Err(Error::UndefinedCorrelation(format!(
            "need at least 3 sources, got {}",
            deltas.len()
        )));
    }
    // iterate in source-name order so the result does not depend on row order
    let rows: Vec<_> = deltas
        .keys()
        .map(|k| table.row(k).expect("keys checked"))
        .collect();
    let y: Vec<f64> = deltas.values().copied().collect();
    let sign = match convention {
        Convention::Paper => -1.0,
        Convention::Standard => 1.0,
    };
    let mut measures = BTreeMap::new();
    for m in Measure::ALL {
        let x: Vec<f64> = rows
            .iter()
            .map(|r| {
                sign * match m {
                    Measure::KlTargetSource => r.kl_target_source,
                    Measure::KlSourceTarget => r.kl_source_target,
                    Measure::Js => r.js,
                    Measure::Cos => r.cos,
                }
            })
            .collect();
        measures.insert(
            m,
            Coefficients {
                pearson_r: pearson(&x, &y)?,
                spearman_rho: spearman(&x, &y)?,
            },
        );
    }
    Ok(CorrelationReport {
        convention,
        n: y.len(),
        sources: deltas.keys().cloned().collect(),
        measures,
    })
}
