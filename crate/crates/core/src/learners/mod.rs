//! Base learner and boosting-based transfer ensembles.

mod boost;
mod features;
mod logreg;

pub use boost::{
    adaboost_train, gapboost_train, tradaboost_train, tradaboost_source_beta, BoostConfig,
    BoostEnsemble, BoostKind, BoostRun, RoundTrace, ENSEMBLE_FORMAT_VERSION,
};
pub use features::TfidfFeaturizer;
pub use logreg::{predict, train_logreg, train_logreg_with, FeatureMatrix, LinearModel, LogRegHyper};
