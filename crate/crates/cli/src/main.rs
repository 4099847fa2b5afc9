use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use detrans::analysis::{correlate_distance_accuracy, Convention, Measure};
use detrans::augment::{augment_dataset, AnnotatorBox, AugMethod, FileAnnotator, GazetteerAnnotator, Glossary};
use detrans::corpus::{describe, load_dataset, stratified_split, LabeledDataset, Role};
use detrans::distance::{distance_table, DistanceRow, DistanceTable, FileSentenceEmbedder, LogBase, SentenceEmbedder, TfidfSentenceEmbedder};
use detrans::dqi::{dqi_report, normalize_reports, DqiSpec, PluginRegistry, TablePlugin};
use detrans::experiment::{emit_report, rerun, synthetic_config, ExperimentConfig, Method, RunManifest, RunStatus};
use detrans::fusion::{hashed_encode, hashed_encode_with, ilc_train_eval, load_embeddings, EmbeddingMatrix};
use detrans::learners::{adaboost_train, gapboost_train, tradaboost_train, BoostConfig, LogRegHyper, TfidfFeaturizer};
use detrans::report::{self, BoostResult, Format, Table};
use detrans::textstats::build_vocab;
use detrans::{seed, synth, Exec};

#[derive(Parser)]
#[command(name = "detrans", version, about = "Transfer-learning workbench for deception text classification")]
struct Cli {
    /// Log verbosity (error, warn, info, debug, trace)
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate a JSONL dataset and write it back normalized
    Ingest {
        /// Dataset as NAME=PATH or PATH
        dataset: String,
        #[arg(long, value_enum, default_value = "target")]
        role: RoleArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Word counts, lengths and class balance per dataset
    Describe {
        #[arg(required = true)]
        datasets: Vec<String>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Data Quality Index components per dataset
    Dqi {
        #[arg(required = true)]
        datasets: Vec<String>,
        /// Components to enable, e.g. C1,C2
        #[arg(long, value_delimiter = ',', default_value = "C1")]
        components: Vec<String>,
        /// Lower sentence-length bound (words) for C1
        #[arg(long)]
        a: Option<f64>,
        /// Upper sentence-length bound (words) for C1
        #[arg(long)]
        b: Option<f64>,
        /// Externally computed component values as COMPONENT=FILE (JSON object dataset -> value)
        #[arg(long = "table")]
        tables: Vec<String>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// KL, JS and cosine distances from each source to the target
    Distance {
        #[arg(long)]
        target: String,
        #[arg(long = "source", required = true)]
        sources: Vec<String>,
        #[arg(long, value_enum, default_value = "natural")]
        log_base: LogBaseArg,
        /// Sentence embeddings as NAME=FILE for every dataset; TF-IDF sentence vectors otherwise
        #[arg(long = "embeddings")]
        embeddings: Vec<String>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Named-entity variant of a dataset
    Augment {
        dataset: String,
        /// 1 replace with explanation, 2 replace with POS, 3 attach explanation, 4 attach POS
        #[arg(long)]
        method: AugMethod,
        #[arg(long, value_enum, default_value = "gazetteer")]
        annotator: AnnotatorArg,
        /// Gazetteer JSON or span JSONL file
        #[arg(long)]
        annotations: PathBuf,
        /// Also tag capitalized runs (gazetteer annotator)
        #[arg(long)]
        heuristic: bool,
        #[arg(long)]
        glossary: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate a boosting ensemble on a seeded target split
    Boost {
        #[arg(long, value_enum)]
        method: BoostMethodArg,
        #[arg(long)]
        target: String,
        #[arg(long = "source")]
        sources: Vec<String>,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.8)]
        train_frac: f64,
        #[arg(long, default_value_t = 10)]
        rounds: usize,
        #[arg(long, default_value_t = 5000)]
        max_features: usize,
        #[arg(long, default_value_t = 1.0)]
        gap_penalty: f64,
        /// Directory for the serialized ensembles
        #[arg(long)]
        ensembles: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Fuse per-record embeddings from several providers and classify
    Ilc {
        #[arg(long)]
        target: String,
        #[arg(long)]
        seed: u64,
        /// Target provider embedding file; a seeded hashed encoder otherwise
        #[arg(long)]
        target_embeddings: Option<PathBuf>,
        /// Source provider embedding files
        #[arg(long = "source-embeddings")]
        source_embeddings: Vec<PathBuf>,
        /// Source datasets for hashed providers restricted to their vocabulary
        #[arg(long = "hashed-source")]
        hashed_sources: Vec<String>,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Correlate a distance table with per-source accuracy changes
    Correlate {
        /// CSV with columns source and the four distance measures
        #[arg(long)]
        distances: PathBuf,
        /// CSV with columns source,delta
        #[arg(long)]
        deltas: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Rewrite the result tables of a manifest
    Report {
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a full experiment from a config file
    Pipeline {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Run every batch step on the calling thread
        #[arg(long)]
        sequential: bool,
    },
    /// Run a manifest's config again
    Rerun {
        manifest: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Write the seeded synthetic corpus and a pipeline config
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 60)]
        per_class: usize,
    },
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Write here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutputArgs {
    fn emit(&self, t: &Table) -> Result<()> {
        let text = t.render(self.format.into())?;
        match &self.out {
            Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Target,
    Source,
}

#[derive(Clone, Copy, ValueEnum)]
enum LogBaseArg {
    Natural,
    Two,
}

#[derive(Clone, Copy, ValueEnum)]
enum AnnotatorArg {
    Gazetteer,
    File,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum BoostMethodArg {
    Adaboost,
    Tradaboost,
    Gapboost,
}

/// `NAME=PATH`, or a bare path named after its file stem.
fn load_named(spec: &str, role: Role) -> Result<LabeledDataset> {
    let (name, path) = split_named(spec)?;
    Ok(load_dataset(&path, &name, role)?)
}

fn split_named(spec: &str) -> Result<(String, PathBuf)> {
    if let Some((n, p)) = spec.split_once('=') {
        if n.is_empty() || p.is_empty() {
            bail!("expected NAME=PATH, got {spec:?}");
        }
        return Ok((n.to_string(), PathBuf::from(p)));
    }
    let p = PathBuf::from(spec);
    let name = p
        .file_stem()
        .and_then(|s| s.to_str())
        .with_context(|| format!("cannot derive a dataset name from {spec:?}"))?
        .to_string();
    Ok((name, p))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).format_timestamp(None).init();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Ingest { dataset, role, out } => {
            let role = match role {
                RoleArg::Target => Role::Target,
                RoleArg::Source => Role::Source,
            };
            let ds = load_named(&dataset, role)?;
            let s = describe(&ds)?;
            eprintln!(
                "{}: {} records ({} truthful, {} deceptive)",
                ds.name,
                ds.len(),
                s.n_truthful,
                s.n_deceptive
            );
            if let Some(out) = out {
                ds.write_jsonl(&out)?;
            }
            Ok(())
        }
        Cmd::Describe { datasets, output } => {
            let mut rows = Vec::new();
            for spec in &datasets {
                let ds = load_named(spec, Role::Source)?;
                rows.push((ds.name.clone(), describe(&ds)?));
            }
            output.emit(&report::stats_table(&rows))
        }
        Cmd::Dqi {
            datasets,
            components,
            a,
            b,
            tables,
            output,
        } => {
            let enabled = components.iter().map(|c| c.parse()).collect::<detrans::Result<_>>()?;
            let spec = DqiSpec {
                enabled,
                a: a.unwrap_or(f64::NAN),
                b: b.unwrap_or(f64::NAN),
            };
            if spec.enabled.contains(&detrans::dqi::Component::C1) && (a.is_none() || b.is_none()) {
                bail!("C1 needs explicit --a and --b");
            }
            let mut reg = PluginRegistry::new();
            for t in &tables {
                let (c, path) = t.split_once('=').with_context(|| format!("expected COMPONENT=FILE, got {t:?}"))?;
                let src = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
                reg.register(Box::new(TablePlugin {
                    component: c.parse()?,
                    values: serde_json_from(&src)?,
                }))?;
            }
            let mut reports = Vec::new();
            for spec_ds in &datasets {
                reports.push(dqi_report(&load_named(spec_ds, Role::Source)?, &spec, &reg)?);
            }
            normalize_reports(&mut reports);
            output.emit(&report::dqi_table(&reports))
        }
        Cmd::Distance {
            target,
            sources,
            log_base,
            embeddings,
            output,
        } => {
            let target = load_named(&target, Role::Target)?;
            let sources = sources
                .iter()
                .map(|s| load_named(s, Role::Source))
                .collect::<Result<Vec<_>>>()?;
            let log_base = match log_base {
                LogBaseArg::Natural => LogBase::Natural,
                LogBaseArg::Two => LogBase::Two,
            };
            let embedder: Box<dyn SentenceEmbedder> = if embeddings.is_empty() {
                Box::new(TfidfSentenceEmbedder::default())
            } else {
                let mut matrices = BTreeMap::new();
                for e in &embeddings {
                    let (n, p) = split_named(e)?;
                    matrices.insert(n, load_embeddings(&p)?);
                }
                Box::new(FileSentenceEmbedder { matrices })
            };
            let table = distance_table(&sources, &target, embedder.as_ref(), log_base)?;
            eprintln!("log base: {}, sentence provider: {}", table.log_base.unit(), table.sentence_provider);
            output.emit(&report::distance_table(&table.rows))
        }
        Cmd::Augment {
            dataset,
            method,
            annotator,
            annotations,
            heuristic,
            glossary,
            out,
        } => {
            let ds = load_named(&dataset, Role::Source)?;
            let ann: AnnotatorBox = match annotator {
                AnnotatorArg::Gazetteer => Box::new(GazetteerAnnotator::load(&annotations, heuristic)?),
                AnnotatorArg::File => Box::new(FileAnnotator::load(&annotations)?),
            };
            let glossary = match glossary {
                Some(p) => Glossary::load(&p)?,
                None => Glossary::default(),
            };
            let (variant, stats) = augment_dataset(&ds, method, ann.as_ref(), &glossary)?;
            variant.write_jsonl(&out)?;
            eprintln!(
                "{}: {} spans rewritten, {} overlapping dropped",
                variant.name, stats.spans, stats.dropped_overlaps
            );
            Ok(())
        }
        Cmd::Boost {
            method,
            target,
            sources,
            seed: root,
            train_frac,
            rounds,
            max_features,
            gap_penalty,
            ensembles,
            output,
        } => {
            if method != BoostMethodArg::Adaboost && sources.is_empty() {
                bail!("transfer methods need at least one --source");
            }
            let target = load_named(&target, Role::Target)?;
            let (train, test) = stratified_split(&target, train_frac, seed::derive(root, "split"))?;
            let cfg = BoostConfig {
                rounds,
                gap_penalty,
                ..BoostConfig::default()
            };
            let save = |name: &str, json: String| -> Result<()> {
                if let Some(dir) = &ensembles {
                    fs::create_dir_all(dir)?;
                    fs::write(dir.join(format!("{name}.json")), json + "\n")?;
                }
                Ok(())
            };
            let feat = TfidfFeaturizer::fit(&[&train], max_features)?;
            let base = adaboost_train(&feat.transform(&train)?, &train.labels(), &cfg)?;
            let base_acc = detrans::analysis::accuracy(&base.ensemble.predict(&feat.transform(&test)?)?, &test.labels())?;
            save("adaboost", base.ensemble.to_json()?)?;
            let mut rows = vec![BoostResult {
                method: "adaboost".into(),
                source: String::new(),
                rounds_trained: base.ensemble.learners.len(),
                accuracy: base_acc,
                baseline_accuracy: base_acc,
                delta: 0.0,
            }];
            if method != BoostMethodArg::Adaboost {
                for spec in &sources {
                    let src = load_named(spec, Role::Source)?;
                    let feat = TfidfFeaturizer::fit(&[&src, &train], max_features)?;
                    let (xs, xt) = (feat.transform(&src)?, feat.transform(&train)?);
                    let (name, run) = match method {
                        BoostMethodArg::Tradaboost => ("tradaboost", tradaboost_train(&xs, &src.labels(), &xt, &train.labels(), &cfg)?),
                        _ => ("gapboost", gapboost_train(&xs, &src.labels(), &xt, &train.labels(), &cfg)?),
                    };
                    let acc = detrans::analysis::accuracy(&run.ensemble.predict(&feat.transform(&test)?)?, &test.labels())?;
                    save(&format!("{name}-{}", src.name), run.ensemble.to_json()?)?;
                    rows.push(BoostResult {
                        method: name.into(),
                        source: src.name.clone(),
                        rounds_trained: run.ensemble.learners.len(),
                        accuracy: acc,
                        baseline_accuracy: base_acc,
                        delta: acc - base_acc,
                    });
                }
            }
            output.emit(&report::boost_table(&rows))
        }
        Cmd::Ilc {
            target,
            seed: root,
            target_embeddings,
            source_embeddings,
            hashed_sources,
            dim,
            output,
        } => {
            let target = load_named(&target, Role::Target)?;
            let tp = match &target_embeddings {
                Some(p) => load_embeddings(p)?,
                None => hashed_encode(&target, dim, seed::derive(root, "ilc-provider:target"))?,
            };
            let mut providers: Vec<(String, EmbeddingMatrix)> = Vec::new();
            for p in &source_embeddings {
                let m = load_embeddings(p)?;
                providers.push((m.provider_id().to_string(), m));
            }
            for spec in &hashed_sources {
                let src = load_named(spec, Role::Source)?;
                let vocab = build_vocab(&src)?.vocab_set();
                let s = seed::derive(root, &format!("ilc-provider:{}", src.name));
                let m = hashed_encode_with(&target, dim, s, Some((&src.name, &vocab)), Exec::default())?;
                providers.push((src.name.clone(), m));
            }
            let split_seed = seed::derive(root, "ilc-split");
            let hyper = LogRegHyper::default();
            let mut runs = vec![("baseline".to_string(), ilc_train_eval(&target, &tp, &[], split_seed, &hyper)?)];
            for (name, m) in &providers {
                runs.push((format!("+{name}"), ilc_train_eval(&target, &tp, &[m], split_seed, &hyper)?));
            }
            if providers.len() >= 2 {
                let all: Vec<&EmbeddingMatrix> = providers.iter().map(|p| &p.1).collect();
                runs.push(("+all".into(), ilc_train_eval(&target, &tp, &all, split_seed, &hyper)?));
            }
            output.emit(&report::ilc_table(&runs))
        }
        Cmd::Correlate {
            distances,
            deltas,
            output,
        } => {
            let table = read_distance_csv(&distances)?;
            let deltas = read_delta_csv(&deltas)?;
            let mut reports = Vec::new();
            for conv in Convention::BOTH {
                reports.push(correlate_distance_accuracy(&table, &deltas, conv)?);
            }
            output.emit(&report::correlation_table(&reports))
        }
        Cmd::Report { manifest, format, out } => {
            let m = RunManifest::load(&manifest)?;
            for p in emit_report(&m, &out, format.into())? {
                eprintln!("wrote {}", p.display());
            }
            Ok(())
        }
        Cmd::Pipeline {
            config,
            seed,
            method,
            output_dir,
            sequential,
        } => {
            log::info!("loading config {}", config.display());
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(m) = method {
                cfg.method = m;
            }
            if let Some(d) = output_dir {
                cfg.output_dir = d;
            }
            let exec = if sequential { Exec::Sequential } else { Exec::default() };
            let m = detrans::experiment::run_experiment_with(&cfg, exec)?;
            summarize(&m);
            Ok(())
        }
        Cmd::Rerun { manifest, output_dir } => {
            let m = rerun(&RunManifest::load(&manifest)?, output_dir.as_deref())?;
            summarize(&m);
            Ok(())
        }
        Cmd::Synth { out, seed, per_class } => {
            let corpus = synth::generate(seed, per_class)?;
            let files = synth::write_corpus(&corpus, &out)?;
            let cfg_path = out.join("pipeline.toml");
            fs::write(&cfg_path, synthetic_config(&corpus, seed).to_toml()?)?;
            eprintln!(
                "wrote {} datasets, glossary, gazetteer and {}",
                files.sources.len() + 1,
                cfg_path.display()
            );
            Ok(())
        }
    }
}

fn serde_json_from(src: &str) -> Result<BTreeMap<String, f64>> {
    let v: BTreeMap<String, f64> = serde_json::from_str(src)?;
    Ok(v)
}

fn summarize(m: &RunManifest) {
    let status = match m.status {
        RunStatus::Complete => "complete",
        RunStatus::Failed => "FAILED",
    };
    eprintln!(
        "run {status}: {} boosting rows, {} ilc runs, results in {}",
        m.results.boost.len(),
        m.results.ilc.len(),
        m.config.output_dir.display()
    );
}

fn read_distance_csv(path: &Path) -> Result<DistanceTable> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("{}: missing column {name}", path.display()))
    };
    let src = col("source")?;
    let idx: Vec<usize> = Measure::ALL.iter().map(|m| col(m.column())).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v = |i: usize| -> Result<f64> { Ok(rec[idx[i]].parse()?) };
        rows.push(DistanceRow {
            source: rec[src].to_string(),
            kl_target_source: v(0)?,
            kl_source_target: v(1)?,
            js: v(2)?,
            cos: v(3)?,
        });
    }
    Ok(DistanceTable {
        target: String::new(),
        log_base: LogBase::Natural,
        sentence_provider: "file".into(),
        tokenizer: String::new(),
        vocabulary: String::new(),
        rows,
    })
}

fn read_delta_csv(path: &Path) -> Result<BTreeMap<String, f64>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers()?.clone();
    let (s, d) = match (
        headers.iter().position(|h| h == "source"),
        headers.iter().position(|h| h == "delta"),
    ) {
        (Some(s), Some(d)) => (s, d),
        _ => bail!("{}: need columns source,delta", path.display()),
    };
    let mut out = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        if rec[s].is_empty() {
            continue;
        }
        if out.insert(rec[s].to_string(), rec[d].parse()?).is_some() {
            bail!("{}: duplicate source {}", path.display(), &rec[s]);
        }
    }
    Ok(out)
}
