//! AdaBoost, TrAdaBoost and gapBoost over weighted logistic regression.
//!
//! All three share one round loop. Rows are pooled as `[source; target]`.
//! Every round trains a learner on the current (normalized) weights,
//! measures a weighted error, and reweights:
//!
//! | kind       | error measured on | misclassified target | misclassified source        | vote window        |
//! |------------|-------------------|----------------------|-----------------------------|--------------------|
//! | AdaBoost   | all rows          | x (1-e)/e            | -                           | all rounds         |
//! | TrAdaBoost | target rows       | x (1-e)/e            | x beta = 1/(1+sqrt(2 ln n_s / N)) | later half   |
//! | gapBoost   | all rows          | x (1-e)/e            | x (1-e)/e, then every source row x exp(-gamma * gap) | all rounds |
//!
//! `e` is clamped below at `eps_floor`. A round with `e >= 0.5` is
//! discarded and training stops; if that happens in the first round the
//! round-1 learner is kept with weight 1 so the ensemble is never empty.
//! A round with `e = 0` is kept and training stops.

use serde::{Deserialize, Serialize};

use super::logreg::{predict, train_logreg, FeatureMatrix, LinearModel, LogRegHyper};
use crate::corpus::Label;
use crate::{Error, Result};

pub const ENSEMBLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoostKind {
    AdaBoost,
    TrAdaBoost,
    GapBoost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub rounds: usize,
    pub hyper: LogRegHyper,
    /// gapBoost penalty gamma >= 0
    pub gap_penalty: f64,
    pub eps_floor: f64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            rounds: 10,
            hyper: LogRegHyper::default(),
            gap_penalty: 1.0,
            eps_floor: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostEnsemble {
    pub format_version: u32,
    pub kind: BoostKind,
    pub rounds: usize,
    pub learners: Vec<LinearModel>,
    pub alphas: Vec<f64>,
    /// index of the first learner that votes
    pub vote_from: usize,
    pub config: BoostConfig,
    /// TrAdaBoost source multiplier, when a source was present
    pub source_beta: Option<f64>,
}

impl BoostEnsemble {
    /// Weighted vote of the learners in the voting window; a tied vote
    /// predicts class 1.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<Label>> {
        let mut score = vec![0.0; x.n_rows()];
        for (m, &a) in self.learners.iter().zip(&self.alphas).skip(self.vote_from) {
            let (labels, _) = predict(m, x)?;
            for (s, l) in score.iter_mut().zip(labels) {
                *s += if l == Label::Deceptive { a } else { -a };
            }
        }
        Ok(score.into_iter().map(|s| Label::from_bool(s >= 0.0)).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let e: BoostEnsemble = serde_json::from_str(s)?;
        if e.format_version != ENSEMBLE_FORMAT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported ensemble format version {}",
                e.format_version
            )));
        }
        if e.learners.len() != e.alphas.len() || e.learners.len() > e.rounds {
            return Err(Error::Validation("learner/alpha counts inconsistent".into()));
        }
        Ok(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub epsilon: f64,
    /// None when the round was rejected (epsilon >= 0.5 after round 1)
    pub alpha: Option<f64>,
    /// normalized weights the round's learner was trained with
    pub weights: Vec<f64>,
    pub misclassified: Vec<bool>,
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostRun {
    pub ensemble: BoostEnsemble,
    pub trace: Vec<RoundTrace>,
    /// rows of the pooled matrix that came from the source
    pub n_source: usize,
}

pub fn tradaboost_source_beta(n_source: usize, rounds: usize) -> f64 {
    1.0 / (1.0 + (2.0 * (n_source as f64).ln() / rounds as f64).sqrt())
}

fn check_both(y: &[Label], what: &str) -> Result<()> {
    for l in Label::ALL {
        if !y.contains(&l) {
            return Err(Error::DegenerateTraining(format!("{what} has no {l} samples")));
        }
    }
    Ok(())
}

fn check_config(cfg: &BoostConfig) -> Result<()> {
    if cfg.rounds == 0 {
        return Err(Error::Parameter("boosting needs at least one round".into()));
    }
    if !(cfg.gap_penalty >= 0.0) {
        return Err(Error::Parameter("gap penalty must be >= 0".into()));
    }
    if !(cfg.eps_floor > 0.0 && cfg.eps_floor < 0.5) {
        return Err(Error::Parameter("eps_floor must lie in (0, 0.5)".into()));
    }
    Ok(())
}

/// Discrete two-class AdaBoost on the target data only.
pub fn adaboost_train(x: &FeatureMatrix, y: &[Label], cfg: &BoostConfig) -> Result<BoostRun> {
    check_both(y, "target")?;
    run(BoostKind::AdaBoost, x, y, 0, cfg)
}

/// TrAdaBoost: source rows that keep being misclassified fade out, target
/// rows that are misclassified gain weight.
///
/// With an empty source the source schedule is undefined and the method
/// coincides with AdaBoost, including a full voting window.
pub fn tradaboost_train(
    xs: &FeatureMatrix,
    ys: &[Label],
    xt: &FeatureMatrix,
    yt: &[Label],
    cfg: &BoostConfig,
) -> Result<BoostRun> {
    check_both(yt, "target")?;
    let (x, y) = pool(xs, ys, xt, yt)?;
    run(BoostKind::TrAdaBoost, &x, &y, ys.len(), cfg)
}

/// gapBoost: pooled AdaBoost whose source weights are additionally scaled
/// by exp(-gamma * gap), where gap is the disagreement rate on target rows
/// between a source-only and a target-only learner trained each round.
pub fn gapboost_train(
    xs: &FeatureMatrix,
    ys: &[Label],
    xt: &FeatureMatrix,
    yt: &[Label],
    cfg: &BoostConfig,
) -> Result<BoostRun> {
    check_both(yt, "target")?;
    if !ys.is_empty() {
        check_both(ys, "source")?;
    }
    let (x, y) = pool(xs, ys, xt, yt)?;
    run(BoostKind::GapBoost, &x, &y, ys.len(), cfg)
}

fn pool(
    xs: &FeatureMatrix,
    ys: &[Label],
    xt: &FeatureMatrix,
    yt: &[Label],
) -> Result<(FeatureMatrix, Vec<Label>)> {
    if xs.n_rows() != ys.len() || xt.n_rows() != yt.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.n_rows() + xt.n_rows(),
            got: ys.len() + yt.len(),
        });
    }
    let x = xs.vstack(xt)?;
    let mut y = ys.to_vec();
    y.extend_from_slice(yt);
    Ok((x, y))
}

fn disagreement_gap(
    x: &FeatureMatrix,
    y: &[Label],
    w: &[f64],
    n_source: usize,
    hyper: &LogRegHyper,
) -> Result<f64> {
    let n = y.len();
    let src: Vec<usize> = (0..n_source).collect();
    let tgt: Vec<usize> = (n_source..n).collect();
    let xs = x.select(&src);
    let xt = x.select(&tgt);
    let hs = train_logreg(&xs, &y[..n_source], &w[..n_source], hyper)?;
    let ht = train_logreg(&xt, &y[n_source..], &w[n_source..], hyper)?;
    let (ps, _) = predict(&hs, &xt)?;
    let (pt, _) = predict(&ht, &xt)?;
    let differ = ps.iter().zip(&pt).filter(|(a, b)| a != b).count();
    Ok(differ as f64 / tgt.len() as f64)
}

fn run(kind: BoostKind, x: &FeatureMatrix, y: &[Label], n_source: usize, cfg: &BoostConfig) -> Result<BoostRun> {
    check_config(cfg)?;
    let n = y.len();
    if x.n_rows() != n {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            got: n,
        });
    }
    let source_beta = (kind == BoostKind::TrAdaBoost && n_source > 0)
        .then(|| tradaboost_source_beta(n_source, cfg.rounds));
    let err_from = if kind == BoostKind::TrAdaBoost { n_source } else { 0 };

    let mut w = vec![1.0 / n as f64; n];
    let mut learners = Vec::new();
    let mut alphas = Vec::new();
    let mut trace = Vec::new();

    for round in 0..cfg.rounds {
        let model = train_logreg(x, y, &w, &cfg.hyper)?;
        let (pred, _) = predict(&model, x)?;
        let miss: Vec<bool> = pred.iter().zip(y).map(|(p, t)| p != t).collect();
        let (num, den) = (err_from..n).fold((0.0, 0.0), |(a, b), i| {
            (if miss[i] { a + w[i] } else { a }, b + w[i])
        });
        let eps = num / den;

        let gap = if kind == BoostKind::GapBoost && n_source > 0 && cfg.gap_penalty > 0.0 {
            Some(disagreement_gap(x, y, &w, n_source, &cfg.hyper)?)
        } else {
            None
        };

        if eps >= 0.5 {
            let alpha = (round == 0).then_some(1.0);
            if let Some(a) = alpha {
                learners.push(model);
                alphas.push(a);
            }
            trace.push(RoundTrace {
                epsilon: eps,
                alpha,
                weights: w.clone(),
                misclassified: miss,
                gap,
            });
            break;
        }

        let eps_c = eps.max(cfg.eps_floor);
        let ratio = (1.0 - eps_c) / eps_c;
        let alpha = match kind {
            BoostKind::TrAdaBoost => ratio.ln(),
            _ => 0.5 * ratio.ln(),
        };
        learners.push(model);
        alphas.push(alpha);
        trace.push(RoundTrace {
            epsilon: eps,
            alpha: Some(alpha),
            weights: w.clone(),
            misclassified: miss.clone(),
            gap,
        });
        if eps == 0.0 {
            break;
        }

        let penalty = gap.map_or(1.0, |g| (-cfg.gap_penalty * g).exp());
        for i in 0..n {
            if i < n_source {
                match kind {
                    BoostKind::TrAdaBoost => {
                        if miss[i] {
                            w[i] *= source_beta.expect("source present");
                        }
                    }
                    _ => {
                        if miss[i] {
                            w[i] *= ratio;
                        }
                        w[i] *= penalty;
                    }
                }
            } else if miss[i] {
                w[i] *= ratio;
            }
        }
        let total: f64 = w.iter().sum();
        for wi in &mut w {
            *wi /= total;
        }
    }

    let vote_from = if kind == BoostKind::TrAdaBoost && n_source > 0 {
        learners.len().div_ceil(2) - 1
    } else {
        0
    };
    Ok(BoostRun {
        ensemble: BoostEnsemble {
            format_version: ENSEMBLE_FORMAT_VERSION,
            kind,
            rounds: cfg.rounds,
            learners,
            alphas,
            vote_from,
            config: *cfg,
            source_beta,
        },
        trace,
        n_source,
    })
}
