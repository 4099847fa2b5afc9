//! Data Quality Index.
//!
//! Component 1 is computed natively:
//!
//! ```text
//! C1 = |vocab| / n_records + sd(sentence lengths) * mean_S sgn((s - a)(b - s))
//! ```
//!
//! with population standard deviation and sgn(0) = 0. Components 2-4, 6
//! and 7 are supplied by [`DqiPlugin`] implementations. Component 5 needs
//! paired texts (premise/hypothesis) and is rejected.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{mean_sd, LabeledDataset};
use crate::textstats::build_vocab;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Component {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
    C7,
}

impl Component {
    pub const ALL: [Component; 7] = [
        Component::C1,
        Component::C2,
        Component::C3,
        Component::C4,
        Component::C5,
        Component::C6,
        Component::C7,
    ];
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Component {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_uppercase();
        Component::ALL
            .into_iter()
            .find(|c| c.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown DQI component {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqiC1Report {
    pub a: f64,
    pub b: f64,
    /// vocabulary size over number of records
    pub term1: f64,
    /// population sd of sentence lengths in words
    pub term2: f64,
    /// mean of sgn((s - a)(b - s)) over sentences, in [-1, 1]
    pub term3: f64,
    pub total: f64,
}

pub fn dqi_c1(ds: &LabeledDataset, a: f64, b: f64) -> Result<DqiC1Report> {
    if !(a < b) {
        return Err(Error::Parameter(format!("DQI C1 needs a < b, got a={a}, b={b}")));
    }
    let vs = build_vocab(ds)?;
    if vs.sentence_lengths.is_empty() {
        return Err(Error::Empty("sentences"));
    }
    let lens: Vec<f64> = vs.sentence_lengths.iter().map(|&n| n as f64).collect();
    let term1 = vs.vocab_size() as f64 / ds.len() as f64;
    let (_, term2) = mean_sd(&lens);
    let signs: f64 = lens.iter().map(|&s| sgn((s - a) * (b - s))).sum();
    let term3 = signs / lens.len() as f64;
    Ok(DqiC1Report {
        a,
        b,
        term1,
        term2,
        term3,
        total: term1 + term2 * term3,
    })
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Min-max normalization to [0, 1]; a constant list maps to zeros.
pub fn normalize_subterms(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values
        .iter()
        .map(|&v| if span > 0.0 { (v - lo) / span } else { 0.0 })
        .collect()
}

/// An externally defined DQI component. Implementations must be pure
/// functions of the dataset; they may be called from several threads.
pub trait DqiPlugin: Send + Sync {
    fn component(&self) -> Component;
    fn compute(&self, ds: &LabeledDataset) -> Result<f64>;
}

/// Plugin backed by precomputed values keyed by dataset name, e.g. numbers
/// produced by an external DQI toolkit.
#[derive(Debug, Clone)]
pub struct TablePlugin {
    pub component: Component,
    pub values: BTreeMap<String, f64>,
}

impl DqiPlugin for TablePlugin {
    fn component(&self) -> Component {
        self.component
    }

    fn compute(&self, ds: &LabeledDataset) -> Result<f64> {
        self.values.get(&ds.name).copied().ok_or_else(|| {
            Error::Config(format!(
                "no {} value supplied for dataset {}",
                self.component, ds.name
            ))
        })
    }
}

#[derive(Default)]
pub struct PluginRegistry {
    plugins: BTreeMap<Component, Box<dyn DqiPlugin>>,
}

impl PluginRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, plugin: Box<dyn DqiPlugin>) -> Result<()> {
        match plugin.component() {
            Component::C1 => Err(Error::Config("C1 is computed natively".into())),
            Component::C5 => Err(Error::UnsupportedComponent("C5".into())),
            c => {
                self.plugins.insert(c, plugin);
                Ok(())
            }
        }
    }

    pub fn get(&self, c: Component) -> Option<&dyn DqiPlugin> {
        self.plugins.get(&c).map(|b| b.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqiSpec {
    pub enabled: BTreeSet<Component>,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqiReport {
    pub dataset: String,
    pub enabled: Vec<Component>,
    /// component -> value; only enabled components appear
    pub values: BTreeMap<Component, f64>,
    pub c1: Option<DqiC1Report>,
    /// sub-term name -> value normalized across the reports passed to
    /// [`normalize_reports`]
    pub normalized: BTreeMap<String, f64>,
}

impl DqiReport {
    /// Raw sub-terms: the C1 terms separately plus every component value.
    pub fn subterms(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        if let Some(c1) = &self.c1 {
            out.insert("C1.term1".to_string(), c1.term1);
            out.insert("C1.term2".to_string(), c1.term2);
            out.insert("C1.term3".to_string(), c1.term3);
        }
        for (c, v) in &self.values {
            out.insert(c.to_string(), *v);
        }
        out
    }
}

/// Validate the enabled set against the registry before any computation.
pub fn check_components(spec: &DqiSpec, plugins: &PluginRegistry) -> Result<()> {
    if spec.enabled.contains(&Component::C5) {
        return Err(Error::UnsupportedComponent(
            "C5 (intra-sample STS) requires paired texts".into(),
        ));
    }
    if spec.enabled.contains(&Component::C1) && !(spec.a < spec.b) {
        return Err(Error::Parameter(format!(
            "DQI C1 needs a < b, got a={}, b={}",
            spec.a, spec.b
        )));
    }
    for &c in &spec.enabled {
        if c != Component::C1 && plugins.get(c).is_none() {
            return Err(Error::Config(format!("no plugin registered for {c}")));
        }
    }
    Ok(())
}

pub fn dqi_report(ds: &LabeledDataset, spec: &DqiSpec, plugins: &PluginRegistry) -> Result<DqiReport> {
    check_components(spec, plugins)?;
    let mut values = BTreeMap::new();
    let mut c1 = None;
    for &c in &spec.enabled {
        let v = if c == Component::C1 {
            let r = dqi_c1(ds, spec.a, spec.b)?;
            let total = r.total;
            c1 = Some(r);
            total
        } else {
            plugins.get(c).expect("checked").compute(ds)?
        };
        values.insert(c, v);
    }
    Ok(DqiReport {
        dataset: ds.name.clone(),
        enabled: spec.enabled.iter().copied().collect(),
        values,
        c1,
        normalized: BTreeMap::new(),
    })
}

/// Fill every report's `normalized` map by min-max scaling each sub-term
/// across the reports.
pub fn normalize_reports(reports: &mut [DqiReport]) {
    let keys: BTreeSet<String> = reports
        .iter()
        .flat_map(|r| r.subterms().into_keys())
        .collect();
    let raw: Vec<BTreeMap<String, f64>> = reports.iter().map(DqiReport::subterms).collect();
    for key in keys {
        let holders: Vec<usize> = (0..reports.len())
            .filter(|&i| raw[i].contains_key(&key))
            .collect();
        let vals: Vec<f64> = holders.iter().map(|&i| raw[i][&key]).collect();
        for (i, v) in holders.into_iter().zip(normalize_subterms(&vals)) {
            reports[i].normalized.insert(key.clone(), v);
        }
    }
}
