//! Config-driven experiment runs.
//!
//! An [`ExperimentConfig`] (TOML) declares datasets, the transfer method and
//! the optional analysis stages. [`run_experiment`] validates everything
//! before computing, derives every random seed from the root seed, writes
//! the result tables and a [`RunManifest`] into the output directory, and
//! marks the manifest FAILED if a stage errors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::analysis::{accuracy, correlate_distance_accuracy, Convention, CorrelationReport};
use crate::augment::{augment_dataset_with, AnnotatorBox, AugMethod, AugmentStats, FileAnnotator, GazetteerAnnotator, Glossary};
use crate::corpus::{describe, load_dataset, reduce_balanced, stratified_split, DescriptiveStats, LabeledDataset, Role};
use crate::distance::{distance_table_with, DistanceTable, FileSentenceEmbedder, LogBase, SentenceEmbedder, TfidfSentenceEmbedder};
use crate::dqi::{dqi_report, normalize_reports, Component, DqiReport, DqiSpec, PluginRegistry, TablePlugin};
use crate::fusion::{hashed_encode_with, ilc_train_eval, load_embeddings, EmbeddingMatrix, FusionRun, EMB_VERSION, ILC_TRAIN_FRAC};
use crate::learners::{
    adaboost_train, gapboost_train, tradaboost_train, BoostConfig, BoostEnsemble, BoostKind, LogRegHyper, TfidfFeaturizer,
    ENSEMBLE_FORMAT_VERSION,
};
use crate::report::{self, BoostResult, Format};
use crate::textstats::{build_vocab, TOKENIZER_VERSION};
use crate::{seed, Error, Exec, Result};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    AdaBoost,
    TrAdaBoost,
    GapBoost,
    Ilc,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::AdaBoost => "adaboost",
            Method::TrAdaBoost => "tradaboost",
            Method::GapBoost => "gapboost",
            Method::Ilc => "ilc",
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Method::AdaBoost, Method::TrAdaBoost, Method::GapBoost, Method::Ilc]
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetDecl {
    pub name: String,
    pub path: PathBuf,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train_frac: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection { train_frac: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostSection {
    pub rounds: usize,
    /// TF-IDF features keep the top-k terms by document frequency
    pub max_features: usize,
    pub gap_penalty: f64,
    pub eps_floor: f64,
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for BoostSection {
    fn default() -> Self {
        let b = BoostConfig::default();
        BoostSection {
            rounds: b.rounds,
            max_features: 5000,
            gap_penalty: b.gap_penalty,
            eps_floor: b.eps_floor,
            lr: b.hyper.lr,
            epochs: b.hyper.epochs,
            l2: b.hyper.l2,
        }
    }
}

impl BoostSection {
    pub fn config(&self) -> BoostConfig {
        BoostConfig {
            rounds: self.rounds,
            hyper: LogRegHyper {
                lr: self.lr,
                epochs: self.epochs,
                l2: self.l2,
            },
            gap_penalty: self.gap_penalty,
            eps_floor: self.eps_floor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    /// seeded feature hashing, optionally restricted to a dataset's vocabulary
    Hashed,
    /// embedding file
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderDecl {
    pub name: String,
    pub kind: ProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// hashed source providers only: dataset whose vocabulary the encoder
    /// keeps; defaults to `name`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IlcSection {
    /// width of hashed providers
    pub dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
    pub target_provider: ProviderDecl,
    /// None means one hashed provider per source dataset
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_providers: Option<Vec<ProviderDecl>>,
}

impl Default for IlcSection {
    fn default() -> Self {
        let h = LogRegHyper::default();
        IlcSection {
            dim: 64,
            lr: h.lr,
            epochs: h.epochs,
            l2: h.l2,
            target_provider: ProviderDecl {
                name: "target".into(),
                kind: ProviderKind::Hashed,
                path: None,
                dataset: None,
            },
            source_providers: None,
        }
    }
}

impl IlcSection {
    pub fn hyper(&self) -> LogRegHyper {
        LogRegHyper {
            lr: self.lr,
            epochs: self.epochs,
            l2: self.l2,
        }
    }

    fn resolved_sources(&self, sources: &[String]) -> Vec<ProviderDecl> {
        self.source_providers.clone().unwrap_or_else(|| {
            sources
                .iter()
                .map(|s| ProviderDecl {
                    name: s.clone(),
                    kind: ProviderKind::Hashed,
                    path: None,
                    dataset: None,
                })
                .collect()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DqiSection {
    pub components: Vec<String>,
    /// C1 sentence-length bounds; required when C1 is enabled
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// component -> dataset -> externally computed value
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tables: BTreeMap<String, BTreeMap<String, f64>>,
}

impl DqiSection {
    fn spec(&self) -> Result<DqiSpec> {
        let enabled = self
            .components
            .iter()
            .map(|c| c.parse::<Component>())
            .collect::<Result<BTreeSet<_>>>()?;
        if enabled.contains(&Component::C1) && (self.a.is_none() || self.b.is_none()) {
            return Err(Error::Config("DQI C1 needs explicit a and b".into()));
        }
        Ok(DqiSpec {
            enabled,
            a: self.a.unwrap_or(f64::NAN),
            b: self.b.unwrap_or(f64::NAN),
        })
    }

    fn registry(&self) -> Result<PluginRegistry> {
        let mut reg = PluginRegistry::new();
        for (c, values) in &self.tables {
            reg.register(Box::new(TablePlugin {
                component: c.parse()?,
                values: values.clone(),
            }))?;
        }
        Ok(reg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentenceProviderKind {
    /// mean of L2-normalized TF-IDF sentence vectors over each pair
    #[default]
    Tfidf,
    /// mean of the rows of one embedding file per dataset
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceSection {
    pub log_base: LogBase,
    pub sentence_provider: SentenceProviderKind,
    /// dataset -> sentence embedding file (file provider only)
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub embeddings: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelationSection {
    /// source -> accuracy change; overrides the deltas of the run
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deltas: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReduceSection {
    pub per_class: usize,
    /// defaults to every source
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datasets: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotatorKind {
    /// phrase -> type JSON file plus the capitalization heuristic if enabled
    Gazetteer,
    /// span file from an external tagger
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatorDecl {
    pub kind: AnnotatorKind,
    pub path: PathBuf,
    #[serde(default)]
    pub heuristic: bool,
}

impl AnnotatorDecl {
    fn build(&self) -> Result<AnnotatorBox> {
        Ok(match self.kind {
            AnnotatorKind::Gazetteer => Box::new(GazetteerAnnotator::load(&self.path, self.heuristic)?),
            AnnotatorKind::File => Box::new(FileAnnotator::load(&self.path)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentSection {
    pub methods: Vec<AugMethod>,
    pub annotator: AnnotatorDecl,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub glossary: Option<PathBuf>,
    /// defaults to every dataset
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datasets: Option<Vec<String>>,
    /// use the variant in place of the original for all later stages;
    /// needs exactly one method
    #[serde(default)]
    pub replace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub method: Method,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub datasets: Vec<DatasetDecl>,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub boost: BoostSection,
    #[serde(default)]
    pub ilc: IlcSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dqi: Option<DqiSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<DistanceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<CorrelationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduce: Option<ReduceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augment: Option<AugmentSection>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    /// Parse TOML; relative paths are taken relative to `base`.
    pub fn parse(src: &str, base: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(src).map_err(|e| cfg_err(e.to_string()))?;
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&src, base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| cfg_err(e.to_string()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        self.datasets.iter_mut().for_each(|d| fix(&mut d.path));
        if let Some(p) = &mut self.ilc.target_provider.path {
            fix(p);
        }
        for p in self.ilc.source_providers.iter_mut().flatten() {
            if let Some(p) = &mut p.path {
                fix(p);
            }
        }
        if let Some(d) = &mut self.distance {
            d.embeddings.values_mut().for_each(fix);
        }
        if let Some(a) = &mut self.augment {
            fix(&mut a.annotator.path);
            if let Some(g) = &mut a.glossary {
                fix(g);
            }
        }
    }

    pub fn target(&self) -> Option<&DatasetDecl> {
        self.datasets.iter().find(|d| d.role == Role::Target)
    }

    /// Source names, sorted.
    pub fn source_names(&self) -> Vec<String> {
        let mut s: Vec<String> = self
            .datasets
            .iter()
            .filter(|d| d.role == Role::Source)
            .map(|d| d.name.clone())
            .collect();
        s.sort();
        s
    }

    /// Every seed the run uses, derived from the root seed by label.
    pub fn seeds(&self) -> BTreeMap<String, u64> {
        let mut labels = vec!["split".to_string(), "ilc-split".to_string(), "ilc-provider:target".to_string()];
        for p in self.ilc.resolved_sources(&self.source_names()) {
            labels.push(format!("ilc-provider:{}", p.name));
        }
        if let Some(r) = &self.reduce {
            for d in r.datasets.clone().unwrap_or_else(|| self.source_names()) {
                labels.push(format!("reduce:{d}"));
            }
        }
        labels.into_iter().map(|l| (l.clone(), seed::derive(self.seed, &l))).collect()
    }

    fn seed_for(&self, label: &str) -> u64 {
        seed::derive(self.seed, label)
    }

    /// Every invariant, checked before any computation.
    pub fn validate(&self) -> Result<()> {
        let targets = self.datasets.iter().filter(|d| d.role == Role::Target).count();
        if targets != 1 {
            return Err(cfg_err(format!("exactly one target dataset required, found {targets}")));
        }
        let mut names = BTreeSet::new();
        for d in &self.datasets {
            if d.name.trim().is_empty() {
                return Err(cfg_err("dataset names must be non-empty"));
            }
            if !names.insert(d.name.as_str()) {
                return Err(cfg_err(format!("dataset {} declared twice", d.name)));
            }
            require_file(&d.path, &format!("dataset {}", d.name))?;
        }
        let sources: BTreeSet<&str> = self
            .datasets
            .iter()
            .filter(|d| d.role == Role::Source)
            .map(|d| d.name.as_str())
            .collect();
        let declared = |n: &str, what: &str, set: &BTreeSet<&str>| {
            if set.contains(n) {
                Ok(())
            } else {
                Err(cfg_err(format!("{what} refers to undeclared dataset {n}")))
            }
        };
        if !(self.split.train_frac > 0.0 && self.split.train_frac < 1.0) {
            return Err(cfg_err("split.train_frac must lie in (0, 1)"));
        }
        let b = &self.boost;
        if b.rounds == 0 || b.max_features == 0 || b.epochs == 0 {
            return Err(cfg_err("boost.rounds, boost.max_features and boost.epochs must be positive"));
        }
        if !(b.gap_penalty >= 0.0 && b.gap_penalty.is_finite()) {
            return Err(cfg_err("boost.gap_penalty must be finite and >= 0"));
        }
        if !(b.eps_floor > 0.0 && b.eps_floor < 0.5) {
            return Err(cfg_err("boost.eps_floor must lie in (0, 0.5)"));
        }
        check_hyper(b.lr, b.l2, "boost")?;
        if matches!(self.method, Method::TrAdaBoost | Method::GapBoost) && sources.is_empty() {
            return Err(cfg_err(format!("method {} needs at least one source dataset", self.method)));
        }

        let ilc = &self.ilc;
        check_hyper(ilc.lr, ilc.l2, "ilc")?;
        if ilc.dim < 2 {
            return Err(cfg_err("ilc.dim must be >= 2"));
        }
        check_provider(&ilc.target_provider, "ilc.target_provider")?;
        if ilc.target_provider.dataset.is_some() {
            return Err(cfg_err("ilc.target_provider cannot restrict to a dataset vocabulary"));
        }
        let mut pnames = BTreeSet::new();
        for p in ilc.resolved_sources(&self.source_names()) {
            check_provider(&p, &format!("ilc provider {}", p.name))?;
            if !pnames.insert(p.name.clone()) {
                return Err(cfg_err(format!("ilc provider {} declared twice", p.name)));
            }
            if p.kind == ProviderKind::Hashed {
                declared(p.dataset.as_deref().unwrap_or(&p.name), "ilc provider", &names)?;
            }
        }

        if let Some(d) = &self.dqi {
            let spec = d.spec()?;
            if let (Some(a), Some(b)) = (d.a, d.b) {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Err(cfg_err(format!("DQI needs finite a < b, got a={a} b={b}")));
                }
            }
            crate::dqi::check_components(&spec, &d.registry()?)?;
            for (c, values) in &d.tables {
                for n in &names {
                    if !values.contains_key(*n) {
                        return Err(cfg_err(format!("DQI table {c} has no value for dataset {n}")));
                    }
                }
            }
        }

        if let Some(d) = &self.distance {
            match d.sentence_provider {
                SentenceProviderKind::Tfidf if !d.embeddings.is_empty() => {
                    return Err(cfg_err("distance.embeddings is only used by the file sentence provider"));
                }
                SentenceProviderKind::File => {
                    for n in &names {
                        let p = d
                            .embeddings
                            .get(*n)
                            .ok_or_else(|| cfg_err(format!("no sentence embedding file for dataset {n}")))?;
                        require_file(p, &format!("sentence embeddings of {n}"))?;
                    }
                    for n in d.embeddings.keys() {
                        declared(n, "distance.embeddings", &names)?;
                    }
                }
                _ => {}
            }
        }

        if let Some(c) = &self.correlation {
            if sources.len() < 3 {
                return Err(cfg_err("correlation needs at least three sources"));
            }
            match &c.deltas {
                Some(d) => {
                    let keys: BTreeSet<&str> = d.keys().map(String::as_str).collect();
                    if keys != sources {
                        return Err(cfg_err("correlation.deltas must name exactly the source datasets"));
                    }
                }
                None if self.method == Method::AdaBoost => {
                    return Err(cfg_err("correlation needs a transfer method or explicit deltas"));
                }
                None => {}
            }
        }

        if let Some(r) = &self.reduce {
            if r.per_class == 0 {
                return Err(cfg_err("reduce.per_class must be positive"));
            }
            for n in r.datasets.iter().flatten() {
                declared(n, "reduce", &names)?;
            }
        }

        if let Some(a) = &self.augment {
            if a.methods.is_empty() {
                return Err(cfg_err("augment.methods is empty"));
            }
            if a.replace && a.methods.len() != 1 {
                return Err(cfg_err("augment.replace needs exactly one method"));
            }
            require_file(&a.annotator.path, "annotator")?;
            let needs_glossary = a
                .methods
                .iter()
                .any(|m| matches!(m, AugMethod::ReplaceWithExplanation | AugMethod::AttachExplanation));
            match &a.glossary {
                Some(g) => require_file(g, "glossary")?,
                None if needs_glossary => return Err(cfg_err("augment methods 1 and 3 need a glossary")),
                None => {}
            }
            for n in a.datasets.iter().flatten() {
                declared(n, "augment", &names)?;
            }
        }
        Ok(())
    }
}

fn require_file(p: &Path, what: &str) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(cfg_err(format!("{what}: file {} not found", p.display())))
    }
}

fn check_hyper(lr: f64, l2: f64, section: &str) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite() && l2 >= 0.0 && l2.is_finite()) {
        return Err(cfg_err(format!("{section}: lr must be > 0 and l2 >= 0")));
    }
    Ok(())
}

fn check_provider(p: &ProviderDecl, what: &str) -> Result<()> {
    match (p.kind, &p.path) {
        (ProviderKind::File, Some(path)) => {
            if p.dataset.is_some() {
                return Err(cfg_err(format!("{what}: file providers take no dataset")));
            }
            require_file(path, what)
        }
        (ProviderKind::File, None) => Err(cfg_err(format!("{what}: file provider needs a path"))),
        (ProviderKind::Hashed, Some(_)) => Err(cfg_err(format!("{what}: hashed provider takes no path"))),
        (ProviderKind::Hashed, None) => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RunStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionRecord {
    pub dataset: String,
    pub per_class: usize,
    pub seed: u64,
    /// kept record ids in input order
    pub sampled_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentRecord {
    pub dataset: String,
    pub method: AugMethod,
    pub variant: String,
    pub file: String,
    pub annotator: String,
    pub stats: AugmentStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub dataset: String,
    pub seed: u64,
    pub train_frac: f64,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Results {
    pub reductions: Vec<ReductionRecord>,
    pub augmentations: Vec<AugmentRecord>,
    pub stats: Vec<(String, DescriptiveStats)>,
    pub dqi: Vec<DqiReport>,
    pub split: Option<SplitRecord>,
    pub boost: Vec<BoostResult>,
    pub ilc: Vec<(String, FusionRun)>,
    pub distances: Option<DistanceTable>,
    pub correlation: Vec<CorrelationReport>,
}

/// Constants of the learners and measures, recorded for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub boost: BoostConfig,
    pub boost_max_features: usize,
    pub boost_features: String,
    pub tradaboost_source_beta: String,
    pub tradaboost_vote_window: String,
    pub gapboost_penalty: String,
    pub ilc_hyper: LogRegHyper,
    pub ilc_train_frac: f64,
    pub ilc_dim: usize,
    pub idf: String,
    pub log_base: LogBase,
    pub split_train_frac: f64,
}

impl Hyperparameters {
    fn of(cfg: &ExperimentConfig) -> Self {
        Hyperparameters {
            boost: cfg.boost.config(),
            boost_max_features: cfg.boost.max_features,
            boost_features: "L2-normalized TF-IDF over the source + target-train vocabulary, top-k by document frequency".into(),
            tradaboost_source_beta: "1 / (1 + sqrt(2 ln n_source / rounds))".into(),
            tradaboost_vote_window: "learners ceil(T/2)-1 .. T-1 of the T trained; all when the source is empty".into(),
            gapboost_penalty: "source weights *= exp(-gap_penalty * disagreement(source-only, target-only) on target)".into(),
            ilc_hyper: cfg.ilc.hyper(),
            ilc_train_frac: ILC_TRAIN_FRAC,
            ilc_dim: cfg.ilc.dim,
            idf: "ln((N + 1) / (df + 1)) + 1".into(),
            log_base: cfg.distance.as_ref().map(|d| d.log_base).unwrap_or_default(),
            split_train_frac: cfg.split.train_frac,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config: ExperimentConfig,
    pub versions: BTreeMap<String, String>,
    pub hyperparameters: Hyperparameters,
    pub seeds: BTreeMap<String, u64>,
    pub exec: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub results: Results,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let src = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: RunManifest = serde_json::from_str(&src)?;
        if m.format_version != MANIFEST_FORMAT_VERSION {
            return Err(cfg_err(format!(
                "manifest format {} not supported (expected {MANIFEST_FORMAT_VERSION})",
                m.format_version
            )));
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(self)? + "\n";
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}

pub fn versions() -> BTreeMap<String, String> {
    [
        ("detrans", env!("CARGO_PKG_VERSION").to_string()),
        ("tokenizer", TOKENIZER_VERSION.to_string()),
        // descriptive statistics are computed after whitespace normalization
        ("stats_text", "preprocessed".to_string()),
        ("ensemble_format", ENSEMBLE_FORMAT_VERSION.to_string()),
        ("embedding_format", EMB_VERSION.to_string()),
        ("manifest_format", MANIFEST_FORMAT_VERSION.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Validate, run every configured stage and write results plus
/// `manifest.json` into the output directory.
///
/// A stage failure stops the run; tables computed so far are still
/// written and the manifest is marked FAILED.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunManifest> {
    run_experiment_with(cfg, Exec::default())
}

pub fn run_experiment_with(cfg: &ExperimentConfig, exec: Exec) -> Result<RunManifest> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut manifest = RunManifest {
        format_version: MANIFEST_FORMAT_VERSION,
        status: RunStatus::Complete,
        error: None,
        config: cfg.clone(),
        versions: versions(),
        hyperparameters: Hyperparameters::of(cfg),
        seeds: cfg.seeds(),
        exec: if exec.is_parallel() { "parallel" } else { "sequential" }.into(),
        started_unix: now_unix(),
        finished_unix: 0,
        results: Results::default(),
    };
    let outcome = Runner { cfg, exec, out }.run(&mut manifest.results);
    manifest.finished_unix = now_unix();
    if let Err((stage, e)) = &outcome {
        log::error!("stage {stage} failed: {e}");
        manifest.status = RunStatus::Failed;
        manifest.error = Some(format!("{stage}: {e}"));
    }
    manifest.write(&out.join(MANIFEST_FILE))?;
    emit_report(&manifest, out, Format::Csv)?;
    match outcome {
        Ok(()) => Ok(manifest),
        Err((stage, e)) => Err(Error::RunFailed {
            stage: stage.to_string(),
            msg: e.to_string(),
        }),
    }
}

/// Run the manifest's config again, optionally into another directory.
pub fn rerun(manifest: &RunManifest, output_dir: Option<&Path>) -> Result<RunManifest> {
    let mut cfg = manifest.config.clone();
    if let Some(d) = output_dir {
        cfg.output_dir = d.to_path_buf();
    }
    run_experiment(&cfg)
}

pub const REPORT_FILES: [&str; 6] = ["stats", "dqi", "distances", "boost", "ilc", "correlation"];

/// Write every result table. Empty results give header-only files.
pub fn emit_report(manifest: &RunManifest, dir: &Path, format: Format) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let r = &manifest.results;
    let distance_rows = r.distances.as_ref().map(|t| t.rows.as_slice()).unwrap_or_default();
    let tables = [
        report::stats_table(&r.stats),
        report::dqi_table(&r.dqi),
        report::distance_table(distance_rows),
        report::boost_table(&r.boost),
        report::ilc_table(&r.ilc),
        report::correlation_table(&r.correlation),
    ];
    let mut paths = Vec::new();
    for (name, t) in REPORT_FILES.iter().zip(tables) {
        let p = dir.join(format!("{name}.{}", format.extension()));
        t.write(&p, format)?;
        paths.push(p);
    }
    Ok(paths)
}

type StageResult<T> = std::result::Result<T, (&'static str, Error)>;

fn stage<T>(name: &'static str, r: Result<T>) -> StageResult<T> {
    r.map_err(|e| (name, e))
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    exec: Exec,
    out: &'a Path,
}

impl Runner<'_> {
    fn run(&self, res: &mut Results) -> StageResult<()> {
        let cfg = self.cfg;
        log::info!("loading {} dataset(s)", cfg.datasets.len());
        let (mut target, mut sources) = stage("load", self.load())?;

        if let Some(r) = &cfg.reduce {
            let names = r.datasets.clone().unwrap_or_else(|| cfg.source_names());
            for ds in std::iter::once(&mut target).chain(sources.iter_mut()) {
                if names.contains(&ds.name) {
                    let seed = cfg.seed_for(&format!("reduce:{}", ds.name));
                    let reduced = stage("reduce", reduce_balanced(ds, 2 * r.per_class, r.per_class, seed))?;
                    log::info!("reduced {} to {} records", ds.name, reduced.len());
                    res.reductions.push(ReductionRecord {
                        dataset: ds.name.clone(),
                        per_class: r.per_class,
                        seed,
                        sampled_ids: reduced.records.iter().map(|x| x.id.clone()).collect(),
                    });
                    ds.records = reduced.records;
                }
            }
        }

        if let Some(a) = &cfg.augment {
            stage("augment", self.augment(a, &mut target, &mut sources, res))?;
        }

        for ds in std::iter::once(&target).chain(&sources) {
            res.stats.push((ds.name.clone(), stage("describe", describe(ds))?));
        }

        if let Some(d) = &cfg.dqi {
            let spec = stage("dqi", d.spec())?;
            let reg = stage("dqi", d.registry())?;
            let mut reports = Vec::new();
            for ds in std::iter::once(&target).chain(&sources) {
                reports.push(stage("dqi", dqi_report(ds, &spec, &reg))?);
            }
            normalize_reports(&mut reports);
            res.dqi = reports;
        }

        let mut deltas: BTreeMap<String, f64> = BTreeMap::new();
        match cfg.method {
            Method::Ilc => {
                res.ilc = stage("ilc", self.ilc(&target, &sources))?;
                for (name, run) in &res.ilc {
                    if let Some(src) = name.strip_prefix('+') {
                        if sources.iter().any(|s| s.name == src) {
                            deltas.insert(src.to_string(), run.delta_vs_baseline);
                        }
                    }
                }
            }
            m => {
                let split_seed = cfg.seed_for("split");
                let (train, test) = stage("split", stratified_split(&target, cfg.split.train_frac, split_seed))?;
                res.split = Some(SplitRecord {
                    dataset: target.name.clone(),
                    seed: split_seed,
                    train_frac: cfg.split.train_frac,
                    n_train: train.len(),
                    n_test: test.len(),
                });
                res.boost = stage("boost", self.boost(m, &train, &test, &sources))?;
                for r in res.boost.iter().filter(|r| !r.source.is_empty()) {
                    deltas.insert(r.source.clone(), r.delta);
                }
            }
        }

        if cfg.distance.is_some() || cfg.correlation.is_some() {
            let d = cfg.distance.clone().unwrap_or_default();
            let embedder: Box<dyn SentenceEmbedder> = match d.sentence_provider {
                SentenceProviderKind::Tfidf => Box::new(TfidfSentenceEmbedder { exec: self.exec }),
                SentenceProviderKind::File => {
                    let mut matrices = BTreeMap::new();
                    for (n, p) in &d.embeddings {
                        matrices.insert(n.clone(), stage("distance", load_embeddings(p))?);
                    }
                    Box::new(FileSentenceEmbedder { matrices })
                }
            };
            log::info!("distances of {} source(s) to {}", sources.len(), target.name);
            res.distances = Some(stage(
                "distance",
                distance_table_with(&sources, &target, embedder.as_ref(), d.log_base, self.exec),
            )?);
        }

        if let Some(c) = &cfg.correlation {
            let deltas = c.deltas.clone().unwrap_or(deltas);
            let table = res.distances.as_ref().expect("distances computed above");
            for conv in Convention::BOTH {
                res.correlation.push(stage("correlation", correlate_distance_accuracy(table, &deltas, conv))?);
            }
        }
        Ok(())
    }

    /// Target plus sources sorted by name.
    fn load(&self) -> Result<(LabeledDataset, Vec<LabeledDataset>)> {
        let loaded = self
            .exec
            .try_map(&self.cfg.datasets, |d| load_dataset(&d.path, &d.name, d.role))?;
        let mut target = None;
        let mut sources = Vec::new();
        for ds in loaded {
            match ds.role {
                Role::Target => target = Some(ds),
                Role::Source => sources.push(ds),
            }
        }
        sources.sort_by(|a, b| a.name.cmp(&b.name));
        Ok((target.expect("validated: one target"), sources))
    }

    fn augment(
        &self,
        a: &AugmentSection,
        target: &mut LabeledDataset,
        sources: &mut [LabeledDataset],
        res: &mut Results,
    ) -> Result<()> {
        let annotator = a.annotator.build()?;
        let glossary = match &a.glossary {
            Some(p) => Glossary::load(p)?,
            None => Glossary::default(),
        };
        let dir = self.out.join("augmented");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for ds in std::iter::once(target).chain(sources.iter_mut()) {
            if a.datasets.as_ref().is_some_and(|only| !only.contains(&ds.name)) {
                continue;
            }
            for &m in &a.methods {
                let (variant, stats) = augment_dataset_with(ds, m, annotator.as_ref(), &glossary, self.exec)?;
                let file = format!("{}.jsonl", variant.name);
                variant.write_jsonl(&dir.join(&file))?;
                log::info!("{}: {} entity spans rewritten with method {m}", variant.name, stats.spans);
                res.augmentations.push(AugmentRecord {
                    dataset: ds.name.clone(),
                    method: m,
                    variant: variant.name.clone(),
                    file: format!("augmented/{file}"),
                    annotator: annotator.name(),
                    stats,
                });
                if a.replace {
                    ds.records = variant.records;
                }
            }
        }
        Ok(())
    }

    fn boost(
        &self,
        method: Method,
        train: &LabeledDataset,
        test: &LabeledDataset,
        sources: &[LabeledDataset],
    ) -> Result<Vec<BoostResult>> {
        let cfg = self.cfg.boost.config();
        let k = self.cfg.boost.max_features;
        let ens_dir = self.out.join("ensembles");
        fs::create_dir_all(&ens_dir).map_err(|e| Error::io(&ens_dir, e))?;
        let save = |e: &BoostEnsemble, name: &str| {
            let p = ens_dir.join(format!("{name}.json"));
            fs::write(&p, e.to_json()? + "\n").map_err(|err| Error::io(&p, err))
        };

        log::info!("adaboost baseline on {} training records", train.len());
        let feat = TfidfFeaturizer::fit(&[train], k)?;
        let base = adaboost_train(&feat.transform(train)?, &train.labels(), &cfg)?;
        let base_acc = accuracy(&base.ensemble.predict(&feat.transform(test)?)?, &test.labels())?;
        save(&base.ensemble, "adaboost")?;
        let mut rows = vec![BoostResult {
            method: Method::AdaBoost.name().into(),
            source: String::new(),
            rounds_trained: base.ensemble.learners.len(),
            accuracy: base_acc,
            baseline_accuracy: base_acc,
            delta: 0.0,
        }];
        if method == Method::AdaBoost {
            return Ok(rows);
        }
        let per_source = self.exec.try_map(sources, |src| {
            log::info!("{method} with source {}", src.name);
            let feat = TfidfFeaturizer::fit(&[src, train], k)?;
            let (xs, xt, xe) = (feat.transform(src)?, feat.transform(train)?, feat.transform(test)?);
            let train_fn = match method {
                Method::TrAdaBoost => tradaboost_train,
                _ => gapboost_train,
            };
            let run = train_fn(&xs, &src.labels(), &xt, &train.labels(), &cfg)?;
            debug_assert!(matches!(run.ensemble.kind, BoostKind::TrAdaBoost | BoostKind::GapBoost));
            let acc = accuracy(&run.ensemble.predict(&xe)?, &test.labels())?;
            save(&run.ensemble, &format!("{method}-{}", src.name))?;
            Ok::<_, Error>(BoostResult {
                method: method.name().into(),
                source: src.name.clone(),
                rounds_trained: run.ensemble.learners.len(),
                accuracy: acc,
                baseline_accuracy: base_acc,
                delta: acc - base_acc,
            })
        })?;
        rows.extend(per_source);
        Ok(rows)
    }

    fn provider(&self, decl: &ProviderDecl, target: &LabeledDataset, all: &[&LabeledDataset], vocab_filter: bool) -> Result<EmbeddingMatrix> {
        let cfg = self.cfg;
        match decl.kind {
            ProviderKind::File => load_embeddings(decl.path.as_deref().expect("validated: file provider path")),
            ProviderKind::Hashed => {
                let seed = cfg.seed_for(&format!("ilc-provider:{}", decl.name));
                if !vocab_filter {
                    return hashed_encode_with(target, cfg.ilc.dim, seed, None, self.exec);
                }
                let ds_name = decl.dataset.as_deref().unwrap_or(&decl.name);
                let ds = all
                    .iter()
                    .find(|d| d.name == ds_name)
                    .ok_or_else(|| cfg_err(format!("unknown dataset {ds_name}")))?;
                let vocab = build_vocab(ds)?.vocab_set();
                hashed_encode_with(target, cfg.ilc.dim, seed, Some((ds_name, &vocab)), self.exec)
            }
        }
    }

    /// Baseline, one run per source provider, and all providers together
    /// when there are two or more.
    fn ilc(&self, target: &LabeledDataset, sources: &[LabeledDataset]) -> Result<Vec<(String, FusionRun)>> {
        let cfg = self.cfg;
        let hyper = cfg.ilc.hyper();
        let split_seed = cfg.seed_for("ilc-split");
        let all: Vec<&LabeledDataset> = std::iter::once(target).chain(sources).collect();
        let tp = self.provider(&cfg.ilc.target_provider, target, &all, false)?;
        let decls = cfg.ilc.resolved_sources(&cfg.source_names());
        let sps = self.exec.try_map(&decls, |d| self.provider(d, target, &all, true))?;
        let mut runs = vec![("baseline".to_string(), ilc_train_eval(target, &tp, &[], split_seed, &hyper)?)];
        let per = self
            .exec
            .try_map(&sps, |sp| ilc_train_eval(target, &tp, &[sp], split_seed, &hyper))?;
        runs.extend(decls.iter().map(|d| format!("+{}", d.name)).zip(per));
        if sps.len() >= 2 {
            let refs: Vec<&EmbeddingMatrix> = sps.iter().collect();
            runs.push(("+all".to_string(), ilc_train_eval(target, &tp, &refs, split_seed, &hyper)?));
        }
        Ok(runs)
    }
}

/// Full transfer chain over a corpus written by [`crate::synth::write_corpus`],
/// with paths relative to the corpus directory.
pub fn synthetic_config(corpus: &crate::synth::SynthCorpus, seed: u64) -> ExperimentConfig {
    let decl = |ds: &LabeledDataset| DatasetDecl {
        name: ds.name.clone(),
        path: PathBuf::from(format!("{}.jsonl", ds.name)),
        role: ds.role,
    };
    ExperimentConfig {
        seed,
        method: Method::TrAdaBoost,
        output_dir: default_output_dir(),
        datasets: std::iter::once(&corpus.target).chain(&corpus.sources).map(decl).collect(),
        split: SplitSection::default(),
        boost: BoostSection::default(),
        ilc: IlcSection::default(),
        dqi: Some(DqiSection {
            components: vec!["C1".into()],
            a: Some(6.0),
            b: Some(12.0),
            tables: BTreeMap::new(),
        }),
        distance: Some(DistanceSection::default()),
        correlation: Some(CorrelationSection::default()),
        reduce: None,
        augment: Some(AugmentSection {
            methods: AugMethod::ALL.to_vec(),
            annotator: AnnotatorDecl {
                kind: AnnotatorKind::Gazetteer,
                path: PathBuf::from("gazetteer.json"),
                heuristic: true,
            },
            glossary: Some(PathBuf::from("glossary.json")),
            datasets: Some(vec![corpus.target.name.clone()]),
            replace: false,
        }),
    }
}
