//! Tabular CSV and JSON output.
//!
//! CSV numbers carry six significant digits in the shortest `%g` style;
//! JSON numbers keep full precision. Rows appear in the order given, so
//! identical inputs always produce identical bytes. An empty table still
//! writes its header.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::analysis::{CorrelationReport, Measure};
use crate::corpus::DescriptiveStats;
use crate::distance::DistanceRow;
use crate::dqi::DqiReport;
use crate::fusion::FusionRun;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

/// Six significant digits, trailing zeros stripped, scientific notation
/// outside [1e-4, 1e6).
pub fn fmt_num(x: f64) -> String {
    const SIG: i32 = 6;
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    // rounding to SIG digits first fixes the exponent, e.g. 999999.5 -> 1e+06
    let sci = format!("{:.*e}", (SIG - 1) as usize, x);
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..SIG).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", strip_zeros(mant), exp.abs())
    } else {
        strip_zeros(&format!("{:.*}", (SIG - 1 - exp) as usize, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(u64),
    Num(f64),
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}
impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}
impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}
impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) => fmt_num(*v),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Int(v) => Value::from(*v),
            // non-finite values have no JSON number form
            Cell::Num(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::csv))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Validation(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// `{"columns": [...], "rows": [{column: value}]}` with keys in column order.
    pub fn to_json(&self) -> Result<String> {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let mut obj = Map::new();
                for (c, v) in self.columns.iter().zip(r) {
                    obj.insert(c.clone(), v.json());
                }
                Value::Object(obj)
            })
            .collect();
        let mut doc = Map::new();
        doc.insert("columns".into(), Value::from(self.columns.clone()));
        doc.insert("rows".into(), Value::Array(rows));
        let mut s = serde_json::to_string_pretty(&Value::Object(doc))?;
        s.push('\n');
        Ok(s)
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }

    pub fn write(&self, path: &Path, format: Format) -> Result<()> {
        fs::write(path, self.render(format)?).map_err(|e| Error::io(path, e))
    }
}

pub fn stats_table(stats: &[(String, DescriptiveStats)]) -> Table {
    let mut t = Table::new([
        "dataset",
        "mean_words",
        "sd_words",
        "mean_chars",
        "sd_chars",
        "n_truthful",
        "n_deceptive",
    ]);
    for (name, s) in stats {
        t.push(vec![
            name.as_str().into(),
            s.mean_word_count.into(),
            s.sd_word_count.into(),
            s.mean_char_length.into(),
            s.sd_char_length.into(),
            s.n_truthful.into(),
            s.n_deceptive.into(),
        ]);
    }
    t
}

/// One row per dataset; raw sub-terms first, then their normalized values
/// prefixed with `norm:`. Columns are the union over all reports.
pub fn dqi_table(reports: &[DqiReport]) -> Table {
    let mut keys: Vec<String> = reports.iter().flat_map(|r| r.subterms().into_keys()).collect();
    keys.sort();
    keys.dedup();
    let mut cols = vec!["dataset".to_string()];
    cols.extend(keys.iter().cloned());
    cols.extend(keys.iter().map(|k| format!("norm:{k}")));
    let mut t = Table::new(cols);
    for r in reports {
        let raw = r.subterms();
        let mut row: Vec<Cell> = vec![r.dataset.as_str().into()];
        row.extend(keys.iter().map(|k| raw.get(k).copied().unwrap_or(f64::NAN).into()));
        row.extend(keys.iter().map(|k| r.normalized.get(k).copied().unwrap_or(f64::NAN).into()));
        t.push(row);
    }
    t
}

pub fn distance_table(rows: &[DistanceRow]) -> Table {
    let mut cols = vec!["source".to_string()];
    cols.extend(Measure::ALL.map(|m| m.column().to_string()));
    let mut t = Table::new(cols);
    for r in rows {
        t.push(vec![
            r.source.as_str().into(),
            r.kl_target_source.into(),
            r.kl_source_target.into(),
            r.js.into(),
            r.cos.into(),
        ]);
    }
    t
}

/// Two rows (r, rho) per convention, one column per distance measure.
pub fn correlation_table(reports: &[CorrelationReport]) -> Table {
    let mut cols = vec!["convention".to_string(), "statistic".to_string(), "n".to_string()];
    cols.extend(Measure::ALL.map(|m| m.column().to_string()));
    let mut t = Table::new(cols);
    for r in reports {
        for (stat, pick) in [("r", 0), ("rho", 1)] {
            let mut row: Vec<Cell> = vec![r.convention.name().into(), stat.into(), r.n.into()];
            for m in Measure::ALL {
                let c = r.get(m);
                row.push(if pick == 0 { c.pearson_r } else { c.spearman_rho }.into());
            }
            t.push(row);
        }
    }
    t
}

/// Held-out accuracy of one boosting run on the target test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostResult {
    pub method: String,
    /// empty for the target-only baseline
    pub source: String,
    pub rounds_trained: usize,
    pub accuracy: f64,
    pub baseline_accuracy: f64,
    pub delta: f64,
}

pub fn boost_table(results: &[BoostResult]) -> Table {
    let mut t = Table::new(["method", "source", "rounds_trained", "accuracy", "baseline_accuracy", "delta"]);
    for r in results {
        t.push(vec![
            r.method.as_str().into(),
            r.source.as_str().into(),
            r.rounds_trained.into(),
            r.accuracy.into(),
            r.baseline_accuracy.into(),
            r.delta.into(),
        ]);
    }
    t
}

pub fn ilc_table(runs: &[(String, FusionRun)]) -> Table {
    let mut t = Table::new([
        "run",
        "target_provider",
        "source_providers",
        "fused_width",
        "n_train",
        "n_test",
        "accuracy",
        "baseline_accuracy",
        "delta",
    ]);
    for (name, r) in runs {
        t.push(vec![
            name.as_str().into(),
            r.target_provider.as_str().into(),
            r.source_providers.join(";").into(),
            r.fused_width.into(),
            r.n_train.into(),
            r.n_test.into(),
            r.accuracy.into(),
            r.baseline_accuracy.into(),
            r.delta_vs_baseline.into(),
        ]);
    }
    t
}
