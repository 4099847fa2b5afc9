//! Seeded synthetic corpora for smoke runs and tests.
//!
//! A hotel-review style target plus sources whose vocabulary overlaps the
//! target to different degrees. Deceptive records favour one set of cue
//! words, truthful records another, and sentences mention people, places
//! and organizations so the augmentation path has entities to work on.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::augment::{Glossary, LOCATION, ORGANIZATION, PERSON};
use crate::corpus::{Label, LabeledDataset, Role, TextRecord};
use crate::{seed, Error, Result};

const TARGET_WORDS: &[&str] = &[
    "room", "staff", "breakfast", "bed", "lobby", "view", "pool", "night", "stay", "service",
    "hotel", "clean", "desk", "shower", "floor", "parking", "quiet", "checkin", "suite", "towels",
];

/// (name, own vocabulary, share of words drawn from the target vocabulary)
const SOURCES: &[(&str, &[&str], f64)] = &[
    (
        "product-reviews",
        &["product", "quality", "price", "delivery", "battery", "package", "seller", "order", "return", "screen"],
        0.55,
    ),
    (
        "fake-news",
        &["officials", "report", "government", "election", "claims", "statement", "senator", "policy", "vote", "agency"],
        0.25,
    ),
    (
        "job-scams",
        &["salary", "position", "apply", "remote", "interview", "payment", "training", "company", "hiring", "bonus"],
        0.12,
    ),
    (
        "sms-spam",
        &["win", "prize", "call", "text", "free", "claim", "mobile", "offer", "reply", "cash"],
        0.04,
    ),
];

const FILLER: &[&str] = &["the", "a", "was", "and", "very", "we", "it", "our", "with", "for", "this", "had"];
const DECEPTIVE_CUES: &[&str] = &["amazing", "absolutely", "honestly", "luxurious", "perfect", "guarantee", "incredible", "best"];
const TRUTHFUL_CUES: &[&str] = &["however", "approximately", "small", "although", "minutes", "receipt", "average", "slightly"];
const PEOPLE: &[&str] = &["Maria Lopez", "David", "Anna Schmidt", "Rahul", "Chen Wei", "Olivia"];
const PLACES: &[&str] = &["Chicago", "Boston", "Lisbon", "Denver", "Kyoto"];
const ORGS: &[&str] = &["Globex Corp", "Initech Inc", "Hilltop Group", "Union Bank"];

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub target: LabeledDataset,
    pub sources: Vec<LabeledDataset>,
    pub glossary: Glossary,
    /// phrase -> entity type for every entity the generator can emit
    pub gazetteer: BTreeMap<String, String>,
}

fn sentence(rng: &mut impl Rng, own: &[&str], target_share: f64, label: Label) -> String {
    let n = rng.gen_range(5..=11);
    let mut words: Vec<String> = (0..n)
        .map(|_| {
            let pool = match rng.gen_range(0..3) {
                0 => FILLER,
                _ if rng.gen_bool(target_share) => TARGET_WORDS,
                _ => own,
            };
            pool.choose(rng).expect("non-empty pool").to_string()
        })
        .collect();
    let (cues, other) = match label {
        Label::Deceptive => (DECEPTIVE_CUES, TRUTHFUL_CUES),
        Label::Truthful => (TRUTHFUL_CUES, DECEPTIVE_CUES),
    };
    for _ in 0..rng.gen_range(1..=2) {
        let pool = if rng.gen_bool(0.8) { cues } else { other };
        let at = rng.gen_range(1..=words.len());
        words.insert(at, pool.choose(rng).expect("cues").to_string());
    }
    match rng.gen_range(0..5) {
        0 => words.extend(["with".to_string(), PEOPLE.choose(rng).expect("people").to_string()]),
        1 => words.extend(["in".to_string(), PLACES.choose(rng).expect("places").to_string()]),
        2 => words.extend(["at".to_string(), ORGS.choose(rng).expect("orgs").to_string()]),
        _ => {}
    }
    let mut first = words[0].chars();
    let head: String = first.next().map(|c| c.to_uppercase().chain(first).collect()).unwrap_or_default();
    words[0] = head;
    format!("{}{}", words.join(" "), if rng.gen_bool(0.15) { "!" } else { "." })
}

fn dataset(name: &str, role: Role, own: &[&str], target_share: f64, n_per_class: usize, root: u64) -> Result<LabeledDataset> {
    let mut rng = seed::rng(seed::derive(root, &format!("synth:{name}")));
    let mut labels: Vec<Label> = [Label::Truthful, Label::Deceptive]
        .iter()
        .flat_map(|&l| std::iter::repeat_n(l, n_per_class))
        .collect();
    labels.shuffle(&mut rng);
    let records = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let k = rng.gen_range(1..=3);
            let text: Vec<String> = (0..k).map(|_| sentence(&mut rng, own, target_share, label)).collect();
            TextRecord::new(format!("{name}-{i:05}"), text.join(" "), label)
        })
        .collect();
    LabeledDataset::new(name, role, records)
}

/// Target plus four sources, each with `n_per_class` records per label.
pub fn generate(root_seed: u64, n_per_class: usize) -> Result<SynthCorpus> {
    if n_per_class < 2 {
        return Err(Error::Parameter("synthetic corpora need at least 2 records per class".into()));
    }
    let target = dataset("hotel-reviews", Role::Target, TARGET_WORDS, 1.0, n_per_class, root_seed)?;
    let sources = SOURCES
        .iter()
        .map(|(name, own, share)| dataset(name, Role::Source, own, *share, n_per_class, root_seed))
        .collect::<Result<Vec<_>>>()?;
    let glossary = Glossary(
        [
            (PERSON, "a person's name"),
            (LOCATION, "a geographic location"),
            (ORGANIZATION, "an organization such as a company"),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect(),
    );
    let gazetteer = PEOPLE
        .iter()
        .map(|p| (p, PERSON))
        .chain(PLACES.iter().map(|p| (p, LOCATION)))
        .chain(ORGS.iter().map(|p| (p, ORGANIZATION)))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    Ok(SynthCorpus {
        target,
        sources,
        glossary,
        gazetteer,
    })
}

/// Paths written by [`write_corpus`].
#[derive(Debug, Clone)]
pub struct SynthFiles {
    pub target: PathBuf,
    pub sources: Vec<(String, PathBuf)>,
    pub glossary: PathBuf,
    pub gazetteer: PathBuf,
}

/// `<name>.jsonl` per dataset plus `glossary.json` and `gazetteer.json`.
pub fn write_corpus(corpus: &SynthCorpus, dir: &Path) -> Result<SynthFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ds_path = |ds: &LabeledDataset| dir.join(format!("{}.jsonl", ds.name));
    corpus.target.write_jsonl(&ds_path(&corpus.target))?;
    let mut sources = Vec::new();
    for s in &corpus.sources {
        s.write_jsonl(&ds_path(s))?;
        sources.push((s.name.clone(), ds_path(s)));
    }
    let glossary = dir.join("glossary.json");
    let gazetteer = dir.join("gazetteer.json");
    let write = |p: &Path, s: String| fs::write(p, s + "\n").map_err(|e| Error::io(p, e));
    write(&glossary, serde_json::to_string_pretty(&corpus.glossary)?)?;
    write(&gazetteer, serde_json::to_string_pretty(&corpus.gazetteer)?)?;
    Ok(SynthFiles {
        target: ds_path(&corpus.target),
        sources,
        glossary,
        gazetteer,
    })
}
