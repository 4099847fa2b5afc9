//! Transfer-learning workbench for binary deception text classification.
//!
//! The crate is organised around a small number of pipelines:
//!
//! * [`corpus`] loads, cleans, splits and describes labeled datasets.
//! * [`textstats`] and [`dqi`] compute vocabulary statistics and the first
//!   Data Quality Index component, with plugin slots for the others.
//! * [`distance`] measures how far a source corpus is from the target
//!   (KL, Jensen-Shannon and a cosine distance over mean sentence vectors).
//! * [`augment`] builds named-entity variants of a dataset.
//! * [`learners`] holds the weighted logistic regression and the AdaBoost,
//!   TrAdaBoost and gapBoost ensembles.
//! * [`fusion`] concatenates per-record embeddings from several providers
//!   and classifies them with logistic regression.
//! * [`analysis`] correlates distances with accuracy changes.
//! * [`experiment`] ties everything together behind a config file.
//!
//! Batch work goes through [`Exec`], which uses rayon when the `parallel`
//! feature is on and falls back to plain iterators otherwise. Both paths
//! produce bit-identical results.

// NaN must fail validation, so `!(x > 0.0)` style checks are intended
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod augment;
pub mod corpus;
pub mod distance;
pub mod dqi;
mod error;
mod exec;
pub mod experiment;
pub mod fusion;
pub mod learners;
pub mod report;
pub mod seed;
pub mod synth;
pub mod textstats;

pub use error::{Error, Result};
pub use exec::Exec;
