use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::{Error, Exec, Result};

/// Dense row-major matrix with one row per record.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_cols: usize,
    data: Vec<f64>,
    row_ids: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(n_cols: usize, data: Vec<f64>, row_ids: Vec<String>) -> Result<Self> {
        if data.len() != n_cols * row_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: n_cols * row_ids.len(),
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite feature in row {}",
                row_ids[i / n_cols.max(1)]
            )));
        }
        Ok(FeatureMatrix {
            n_cols,
            data,
            row_ids,
        })
    }

    /// Convenience constructor with ids `0..n`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n_cols) {
            return Err(Error::DimensionMismatch {
                expected: n_cols,
                got: bad.len(),
            });
        }
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::new(n_cols, rows.concat(), ids)
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    /// Stack `self` on top of `other`.
    pub fn vstack(&self, other: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.n_rows() > 0 && other.n_rows() > 0 && self.n_cols != other.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols,
                got: other.n_cols,
            });
        }
        let n_cols = if self.n_rows() > 0 { self.n_cols } else { other.n_cols };
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        let mut ids = self.row_ids.clone();
        ids.extend_from_slice(&other.row_ids);
        Ok(FeatureMatrix {
            n_cols,
            data,
            row_ids: ids,
        })
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, rows: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            n_cols: self.n_cols,
            data,
            row_ids: rows.iter().map(|&i| self.row_ids[i].clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegHyper {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for LogRegHyper {
    fn default() -> Self {
        LogRegHyper {
            lr: 0.1,
            epochs: 200,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn zeros(n: usize) -> Self {
        LinearModel {
            weights: vec![0.0; n],
            bias: 0.0,
        }
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        let mut z = self.bias;
        for (w, v) in self.weights.iter().zip(x) {
            z += w * v;
        }
        z
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn train_logreg(x: &FeatureMatrix, y: &[Label], w: &[f64], hyper: &LogRegHyper) -> Result<LinearModel> {
    train_logreg_with(x, y, w, hyper, Exec::default())
}

/// Weighted logistic regression by full-batch gradient descent from zero.
///
/// Minimizes `sum_i w_i CE_i / sum_i w_i + l2/2 |weights|^2` (the bias is
/// not penalized). Per-column gradient sums always run in row order, so
/// the result does not depend on `exec`.
pub fn train_logreg_with(
    x: &FeatureMatrix,
    y: &[Label],
    w: &[f64],
    hyper: &LogRegHyper,
    exec: Exec,
) -> Result<LinearModel> {
    let n = x.n_rows();
    if y.len() != n || w.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if y.len() != n { y.len() } else { w.len() },
        });
    }
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Parameter("sample weights must be finite and non-negative".into()));
    }
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Parameter("sample weights sum to zero".into()));
    }
    for l in Label::ALL {
        if !y.iter().zip(w).any(|(yi, wi)| *yi == l && *wi > 0.0) {
            return Err(Error::DegenerateTraining(format!("no {l} sample carries positive weight")));
        }
    }

    let d = x.n_cols();
    let mut model = LinearModel::zeros(d);
    let targets: Vec<f64> = y.iter().map(|l| l.as_f64()).collect();
    for _ in 0..hyper.epochs {
        let resid: Vec<f64> = exec.map_range(n, |i| {
            w[i] * (sigmoid(model.logit(x.row(i))) - targets[i]) / total
        });
        let grad: Vec<f64> = exec.map_range(d, |j| {
            let mut g = 0.0;
            for (i, r) in resid.iter().enumerate() {
                g += r * x.data[i * d + j];
            }
            g + hyper.l2 * model.weights[j]
        });
        let gb: f64 = resid.iter().sum();
        for (wj, gj) in model.weights.iter_mut().zip(&grad) {
            *wj -= hyper.lr * gj;
        }
        model.bias -= hyper.lr * gb;
    }
    Ok(model)
}

/// Labels and class-1 probabilities; probability 0.5 maps to class 1.
pub fn predict(m: &LinearModel, x: &FeatureMatrix) -> Result<(Vec<Label>, Vec<f64>)> {
    if x.n_rows() > 0 && x.n_cols() != m.weights.len() {
        return Err(Error::DimensionMismatch {
            expected: m.weights.len(),
            got: x.n_cols(),
        });
    }
    let probs: Vec<f64> = (0..x.n_rows()).map(|i| sigmoid(m.logit(x.row(i)))).collect();
    let labels = probs.iter().map(|&p| Label::from_bool(p >= 0.5)).collect();
    Ok((labels, probs))
}
