//! Named-entity variants of datasets.
//!
//! Entity spans come from an [`Annotator`]; every mention is rewritten by
//! one of four methods:
//!
//! 1. replace the mention with the glossary explanation of its type
//! 2. replace the mention with its POS tag
//! 3. keep the mention and append the explanation
//! 4. keep the mention and append the POS tag
//!
//! Offsets are in characters (unicode scalar values), half-open.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{LabeledDataset, TextRecord};
use crate::{Error, Exec, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeSpan {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub entity_type: String,
    pub pos_tag: String,
}

/// A span as emitted by a backend, before validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSpan {
    pub start: usize,
    pub end: usize,
    pub entity_type: String,
    pub pos_tag: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum AugMethod {
    ReplaceWithExplanation = 1,
    ReplaceWithPos = 2,
    AttachExplanation = 3,
    AttachPos = 4,
}

impl AugMethod {
    pub const ALL: [AugMethod; 4] = [
        AugMethod::ReplaceWithExplanation,
        AugMethod::ReplaceWithPos,
        AugMethod::AttachExplanation,
        AugMethod::AttachPos,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    fn uses_glossary(self) -> bool {
        matches!(self, AugMethod::ReplaceWithExplanation | AugMethod::AttachExplanation)
    }

    fn keeps_surface(self) -> bool {
        matches!(self, AugMethod::AttachExplanation | AugMethod::AttachPos)
    }
}

impl TryFrom<u8> for AugMethod {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        AugMethod::ALL
            .into_iter()
            .find(|m| m.id() == v)
            .ok_or_else(|| format!("augmentation method must be 1-4, got {v}"))
    }
}

impl From<AugMethod> for u8 {
    fn from(m: AugMethod) -> u8 {
        m.id()
    }
}

impl FromStr for AugMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let m = match s.trim().to_ascii_lowercase().as_str() {
            "1" | "replace-explanation" => AugMethod::ReplaceWithExplanation,
            "2" | "replace-pos" => AugMethod::ReplaceWithPos,
            "3" | "attach-explanation" => AugMethod::AttachExplanation,
            "4" | "attach-pos" => AugMethod::AttachPos,
            other => return Err(Error::Config(format!("unknown augmentation method {other:?}"))),
        };
        Ok(m)
    }
}

impl fmt::Display for AugMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())
    }
}

/// entity type -> explanation text
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Glossary(pub BTreeMap<String, String>);

impl Glossary {
    /// JSON object mapping entity types to explanations.
    pub fn load(path: &Path) -> Result<Self> {
        let src = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&src)?)
    }

    pub fn explain(&self, entity_type: &str) -> Result<&str> {
        self.0
            .get(entity_type)
            .map(String::as_str)
            .ok_or_else(|| Error::Config(format!("glossary has no entry for entity type {entity_type}")))
    }

    /// Fails unless every type in `types` has an entry.
    pub fn check_covers<'a>(&self, types: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for t in types {
            self.explain(t)?;
        }
        Ok(())
    }
}

pub trait Annotator: Send + Sync {
    fn name(&self) -> String;
    /// Entity types this annotator can emit, when known up front.
    fn entity_types(&self) -> Option<Vec<String>> {
        None
    }
    fn raw_spans(&self, record_id: &str, text: &str) -> Result<Vec<RawSpan>>;
}

pub type AnnotatorBox = Box<dyn Annotator>;

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub spans: Vec<NeSpan>,
    /// spans dropped while resolving overlaps
    pub dropped: usize,
}

/// Check bounds, keep the longest of overlapping spans (earlier start wins
/// a length tie), and return the survivors sorted by position.
pub fn normalize_spans(text: &str, raw: Vec<RawSpan>) -> Result<Annotation> {
    let offsets = char_offsets(text);
    let n_chars = offsets.len() - 1;
    for s in &raw {
        if !(s.start < s.end && s.end <= n_chars) {
            return Err(Error::Validation(format!(
                "span [{}, {}) out of bounds for text of {n_chars} characters",
                s.start, s.end
            )));
        }
    }
    let total = raw.len();
    let mut order = raw;
    order.sort_by(|a, b| (b.end - b.start).cmp(&(a.end - a.start)).then(a.start.cmp(&b.start)));
    let mut kept: Vec<RawSpan> = Vec::new();
    for s in order {
        if kept.iter().all(|k| s.end <= k.start || k.end <= s.start) {
            kept.push(s);
        }
    }
    kept.sort_by_key(|s| s.start);
    let dropped = total - kept.len();
    let spans = kept
        .into_iter()
        .map(|s| NeSpan {
            surface: text[offsets[s.start]..offsets[s.end]].to_string(),
            start: s.start,
            end: s.end,
            entity_type: s.entity_type,
            pos_tag: s.pos_tag,
        })
        .collect();
    Ok(Annotation { spans, dropped })
}

pub fn annotate(record_id: &str, text: &str, annotator: &dyn Annotator) -> Result<Annotation> {
    let ann = normalize_spans(text, annotator.raw_spans(record_id, text)?)?;
    if ann.dropped > 0 {
        log::warn!(
            "{}: dropped {} overlapping span(s) in record {record_id}",
            annotator.name(),
            ann.dropped
        );
    }
    Ok(ann)
}

/// Byte offset of every char boundary, plus the text length.
fn char_offsets(text: &str) -> Vec<usize> {
    text.char_indices().map(|(i, _)| i).chain([text.len()]).collect()
}

/// Rewrite every span. Spans must be sorted and non-overlapping (as
/// produced by [`normalize_spans`]); they are applied right to left.
pub fn apply_method(text: &str, spans: &[NeSpan], method: AugMethod, glossary: &Glossary) -> Result<String> {
    let offsets = char_offsets(text);
    let mut out = text.to_string();
    for s in spans.iter().rev() {
        let insert = if method.uses_glossary() {
            glossary.explain(&s.entity_type)?.to_string()
        } else {
            s.pos_tag.to_uppercase()
        };
        let (b0, b1) = (offsets[s.start], offsets[s.end]);
        let replacement = if method.keeps_surface() {
            format!("{} {insert}", &text[b0..b1])
        } else {
            insert
        };
        out.replace_range(b0..b1, &replacement);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentStats {
    pub records: usize,
    pub spans: usize,
    pub dropped_overlaps: usize,
}

pub fn augment_dataset(
    ds: &LabeledDataset,
    method: AugMethod,
    annotator: &dyn Annotator,
    glossary: &Glossary,
) -> Result<(LabeledDataset, AugmentStats)> {
    augment_dataset_with(ds, method, annotator, glossary, Exec::default())
}

/// Same ids, labels and order; only text changes. The variant is named
/// `<name>-ne<method>`.
pub fn augment_dataset_with(
    ds: &LabeledDataset,
    method: AugMethod,
    annotator: &dyn Annotator,
    glossary: &Glossary,
    exec: Exec,
) -> Result<(LabeledDataset, AugmentStats)> {
    if method.uses_glossary() {
        if let Some(types) = annotator.entity_types() {
            glossary.check_covers(types.iter().map(String::as_str))?;
        }
    }
    let out = exec.try_map(&ds.records, |r| {
        let ann = annotate(&r.id, &r.text, annotator)?;
        let text = apply_method(&r.text, &ann.spans, method, glossary)?;
        Ok::<_, Error>((
            TextRecord {
                text,
                ..r.clone()
            },
            ann.spans.len(),
            ann.dropped,
        ))
    })?;
    let mut stats = AugmentStats {
        records: out.len(),
        ..Default::default()
    };
    let mut records = Vec::with_capacity(out.len());
    for (r, n, d) in out {
        stats.spans += n;
        stats.dropped_overlaps += d;
        records.push(r);
    }
    let variant = LabeledDataset::new(format!("{}-ne{}", ds.name, method.id()), ds.role, records)?;
    Ok((variant, stats))
}

/// Spans read from an annotation file produced by any external tagger.
///
/// One JSON object per line: `{"record_id": "...", "spans": [{"start": 0,
/// "end": 4, "entity_type": "PERSON", "pos_tag": "PROPN"}]}`. Records
/// without a line have no entities.
#[derive(Debug, Clone, Default)]
pub struct FileAnnotator {
    pub source: String,
    pub spans: HashMap<String, Vec<RawSpan>>,
}

#[derive(Deserialize, Serialize)]
struct AnnotationLine {
    record_id: String,
    spans: Vec<RawSpan>,
}

impl FileAnnotator {
    pub fn parse(src: &str, path: &Path) -> Result<Self> {
        let mut spans = HashMap::new();
        for (i, line) in src.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let a: AnnotationLine =
                serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            if spans.insert(a.record_id.clone(), a.spans).is_some() {
                return Err(Error::parse(path, i + 1, format!("duplicate record_id {:?}", a.record_id)));
            }
        }
        Ok(FileAnnotator {
            source: path.display().to_string(),
            spans,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&src, path)
    }

    /// Serialize annotations in the file format, one line per record.
    pub fn write_lines(records: &[(String, Vec<RawSpan>)]) -> Result<String> {
        let mut out = String::new();
        for (id, spans) in records {
            out.push_str(&serde_json::to_string(&AnnotationLine {
                record_id: id.clone(),
                spans: spans.clone(),
            })?);
            out.push('\n');
        }
        Ok(out)
    }
}

impl Annotator for FileAnnotator {
    fn name(&self) -> String {
        format!("file:{}", self.source)
    }

    fn raw_spans(&self, record_id: &str, _text: &str) -> Result<Vec<RawSpan>> {
        Ok(self.spans.get(record_id).cloned().unwrap_or_default())
    }
}

pub const PERSON: &str = "PERSON";
pub const LOCATION: &str = "LOCATION";
pub const ORGANIZATION: &str = "ORGANIZATION";
pub const PROPER_NOUN: &str = "PROPN";

const ORG_SUFFIXES: &[&str] = &[
    "Inc", "Corp", "Corporation", "Company", "Co", "Ltd", "LLC", "University", "College",
    "Institute", "Bank", "Group", "Association", "Agency", "Department", "Committee",
];
const PLACE_PREPOSITIONS: &[&str] = &["in", "at", "from", "to", "near", "into", "across"];

/// Desk-scale annotator: exact gazetteer phrases first, then runs of
/// capitalized words. A sentence-initial word only matches via the gazetteer.
/// A heuristic run is an ORGANIZATION when it ends in a corporate suffix,
/// a LOCATION after a place preposition, and a PERSON otherwise. Every
/// span is tagged PROPN.
///
/// Capitalized means an uppercase first letter followed by at least one
/// lowercase letter, so all-caps tokens such as POS tags are never tagged.
#[derive(Debug, Clone, Default)]
pub struct GazetteerAnnotator {
    /// phrase (space separated words) -> entity type
    pub gazetteer: BTreeMap<String, String>,
    pub heuristic: bool,
}

struct Word {
    start: usize,
    end: usize,
    core: String,
    /// trailing punctuation after the core
    closes: bool,
    ends_sentence: bool,
}

fn words(text: &str) -> Vec<Word> {
    let mut out = Vec::new();
    let mut cur: Option<(usize, String)> = None;
    let flush = |start: usize, raw: &str, out: &mut Vec<Word>| {
        let chars: Vec<char> = raw.chars().collect();
        let lead = chars.iter().take_while(|c| !c.is_alphanumeric()).count();
        if lead == chars.len() {
            return;
        }
        let trail = chars.iter().rev().take_while(|c| !c.is_alphanumeric()).count();
        let core: String = chars[lead..chars.len() - trail].iter().collect();
        let tail: String = chars[chars.len() - trail..].iter().collect();
        out.push(Word {
            start: start + lead,
            end: start + chars.len() - trail,
            core,
            closes: trail > 0,
            ends_sentence: tail.contains(['.', '!', '?']),
        });
    };
    for (pos, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            if let Some((s, raw)) = cur.take() {
                flush(s, &raw, &mut out);
            }
        } else {
            cur.get_or_insert_with(|| (pos, String::new())).1.push(c);
        }
    }
    if let Some((s, raw)) = cur.take() {
        flush(s, &raw, &mut out);
    }
    out
}

fn is_capitalized(w: &str) -> bool {
    let mut cs = w.chars();
    cs.next().is_some_and(char::is_uppercase) && cs.any(char::is_lowercase)
}

impl GazetteerAnnotator {
    pub fn new(gazetteer: BTreeMap<String, String>, heuristic: bool) -> Self {
        GazetteerAnnotator { gazetteer, heuristic }
    }

    /// JSON object mapping phrases to entity types.
    pub fn load(path: &Path, heuristic: bool) -> Result<Self> {
        let src = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(serde_json::from_str(&src)?, heuristic))
    }

    fn phrases(&self) -> Vec<(Vec<&str>, &str)> {
        let mut p: Vec<(Vec<&str>, &str)> = self
            .gazetteer
            .iter()
            .map(|(k, v)| (k.split_whitespace().collect::<Vec<_>>(), v.as_str()))
            .filter(|(k, _)| !k.is_empty())
            .collect();
        p.sort_by_key(|e| std::cmp::Reverse(e.0.len()));
        p
    }
}

impl Annotator for GazetteerAnnotator {
    fn name(&self) -> String {
        format!("gazetteer({} phrases, heuristic={})", self.gazetteer.len(), self.heuristic)
    }

    fn entity_types(&self) -> Option<Vec<String>> {
        let mut types: Vec<String> = self.gazetteer.values().cloned().collect();
        if self.heuristic {
            types.extend([PERSON, LOCATION, ORGANIZATION].map(String::from));
        }
        types.sort();
        types.dedup();
        Some(types)
    }

    fn raw_spans(&self, _record_id: &str, text: &str) -> Result<Vec<RawSpan>> {
        let ws = words(text);
        let phrases = self.phrases();
        let mut out = Vec::new();
        let mut i = 0;
        while i < ws.len() {
            // gazetteer: longest phrase whose inner words carry no punctuation
            let hit = phrases.iter().find(|(p, _)| {
                i + p.len() <= ws.len()
                    && p.iter().zip(&ws[i..]).all(|(a, w)| *a == w.core)
                    && ws[i..i + p.len() - 1].iter().all(|w| !w.closes)
            });
            if let Some((p, ty)) = hit {
                out.push(RawSpan {
                    start: ws[i].start,
                    end: ws[i + p.len() - 1].end,
                    entity_type: ty.to_string(),
                    pos_tag: PROPER_NOUN.to_string(),
                });
                i += p.len();
                continue;
            }
            let sentence_start = i == 0 || ws[i - 1].ends_sentence;
            if self.heuristic && !sentence_start && is_capitalized(&ws[i].core) {
                let mut j = i;
                while j + 1 < ws.len() && !ws[j].closes && is_capitalized(&ws[j + 1].core) {
                    j += 1;
                }
                {
                    let prev = (i > 0).then(|| ws[i - 1].core.to_lowercase());
                    let ty = if ORG_SUFFIXES.contains(&ws[j].core.as_str()) {
                        ORGANIZATION
                    } else if prev.is_some_and(|p| PLACE_PREPOSITIONS.contains(&p.as_str())) {
                        LOCATION
                    } else {
                        PERSON
                    };
                    out.push(RawSpan {
                        start: ws[i].start,
                        end: ws[j].end,
                        entity_type: ty.to_string(),
                        pos_tag: PROPER_NOUN.to_string(),
                    });
                }
                i = j + 1;
                continue;
            }
            i += 1;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Label, Role};

    fn gaz() -> GazetteerAnnotator {
        GazetteerAnnotator::new(
            [("John", PERSON), ("Paris", LOCATION), ("New York", LOCATION)]
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
            false,
        )
    }

    fn glossary() -> Glossary {
        Glossary(
            [(PERSON, "a person's name"), (LOCATION, "a place"), (ORGANIZATION, "an organization")]
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
        )
    }

    fn spans(text: &str, a: &dyn Annotator) -> Vec<NeSpan> {
        annotate("r", text, a).unwrap().spans
    }

    #[test]
    fn gazetteer_lookup() {
        let s = spans("John visited Paris", &gaz());
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].start, s[0].end, s[0].surface.as_str()), (0, 4, "John"));
        assert_eq!(s[1].entity_type, LOCATION);
        assert!(spans("nothing here", &gaz()).is_empty());
        let s = spans("From New York, John wrote.", &gaz());
        assert_eq!(s[0].surface, "New York");
        assert_eq!(s[1].surface, "John");
    }

    #[test]
    fn overlaps_keep_longest() {
        let text = "abcdefghijklmnop";
        let raw = vec![
            RawSpan { start: 0, end: 10, entity_type: "A".into(), pos_tag: "X".into() },
            RawSpan { start: 5, end: 12, entity_type: "B".into(), pos_tag: "X".into() },
            RawSpan { start: 12, end: 14, entity_type: "C".into(), pos_tag: "X".into() },
        ];
        let a = normalize_spans(text, raw).unwrap();
        assert_eq!(a.dropped, 1);
        assert_eq!(a.spans.iter().map(|s| s.entity_type.as_str()).collect::<Vec<_>>(), ["A", "C"]);
        let bad = vec![RawSpan { start: 3, end: 99, entity_type: "A".into(), pos_tag: "X".into() }];
        assert!(normalize_spans(text, bad).is_err());
    }

    #[test]
    fn method_examples() {
        let text = "John visited Paris";
        let s = spans(text, &gaz());
        let g = glossary();
        assert_eq!(apply_method(text, &s, AugMethod::ReplaceWithPos, &g).unwrap(), "PROPN visited PROPN");
        assert_eq!(apply_method(text, &s, AugMethod::AttachPos, &g).unwrap(), "John PROPN visited Paris PROPN");
        assert_eq!(
            apply_method(text, &s, AugMethod::ReplaceWithExplanation, &g).unwrap(),
            "a person's name visited a place"
        );
        assert_eq!(
            apply_method(text, &s, AugMethod::AttachExplanation, &g).unwrap(),
            "John a person's name visited Paris a place"
        );
        for m in AugMethod::ALL {
            assert_eq!(apply_method(text, &[], m, &g).unwrap(), text);
        }
    }

    #[test]
    fn missing_gloss_names_type() {
        let s = spans("John visited Paris", &gaz());
        let g = Glossary([(PERSON.to_string(), "p".to_string())].into());
        let err = apply_method("John visited Paris", &s, AugMethod::AttachExplanation, &g).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains(LOCATION)));
        // POS methods never consult the glossary
        assert!(apply_method("John visited Paris", &s, AugMethod::AttachPos, &g).is_ok());
    }

    #[test]
    fn offsets_are_characters() {
        let text = "Zoë met Renée in Málaga.";
        let h = GazetteerAnnotator::new(BTreeMap::new(), true);
        let s = spans(text, &h);
        let surf: Vec<&str> = s.iter().map(|x| x.surface.as_str()).collect();
        assert_eq!(surf, ["Renée", "Málaga"]);
        assert_eq!(s[1].entity_type, LOCATION);
        assert_eq!(
            apply_method(text, &s, AugMethod::AttachPos, &glossary()).unwrap(),
            "Zoë met Renée PROPN in Málaga PROPN."
        );
    }

    #[test]
    fn heuristic_types() {
        let h = GazetteerAnnotator::new(BTreeMap::new(), true);
        let s = spans("We met Mary Jones at Acme Corp. Then Bob left for Boston.", &h);
        let got: Vec<(&str, &str)> = s.iter().map(|x| (x.surface.as_str(), x.entity_type.as_str())).collect();
        assert_eq!(
            got,
            [("Mary Jones", PERSON), ("Acme Corp", ORGANIZATION), ("Bob", PERSON), ("Boston", PERSON)]
        );
        let s = spans("He lives in Denver and likes Ohio State University", &h);
        assert_eq!(s[0].entity_type, LOCATION);
        assert_eq!(s[1].entity_type, ORGANIZATION);
    }

    #[test]
    fn method_two_is_stable() {
        let h = GazetteerAnnotator::new(BTreeMap::new(), true);
        let g = glossary();
        let text = "Yesterday Alice flew to Rome with Carl Smith.";
        let once = apply_method(text, &spans(text, &h), AugMethod::ReplaceWithPos, &g).unwrap();
        let twice = apply_method(&once, &spans(&once, &h), AugMethod::ReplaceWithPos, &g).unwrap();
        assert_eq!(once, "Yesterday PROPN flew to PROPN with PROPN.");
        assert_eq!(once, twice);
    }

    #[test]
    fn dataset_variant_keeps_ids_and_labels() {
        let recs = vec![
            crate::corpus::TextRecord::new("a", "John visited Paris", Label::Deceptive),
            crate::corpus::TextRecord::new("b", "nothing to see", Label::Truthful),
        ];
        let ds = LabeledDataset::new("sbu", Role::Target, recs).unwrap();
        let (v, stats) = augment_dataset(&ds, AugMethod::ReplaceWithPos, &gaz(), &glossary()).unwrap();
        assert_eq!(v.name, "sbu-ne2");
        assert_eq!(v.labels(), ds.labels());
        assert_eq!(v.records[1].text, "nothing to see");
        assert_eq!(stats.spans, 2);
    }

    #[test]
    fn file_annotator_roundtrip() {
        let lines = FileAnnotator::write_lines(&[(
            "a".to_string(),
            vec![RawSpan { start: 0, end: 4, entity_type: PERSON.into(), pos_tag: "propn".into() }],
        )])
        .unwrap();
        let fa = FileAnnotator::parse(&lines, Path::new("mem")).unwrap();
        let s = annotate("a", "John ran", &fa).unwrap().spans;
        assert_eq!(s[0].surface, "John");
        assert_eq!(apply_method("John ran", &s, AugMethod::AttachPos, &glossary()).unwrap(), "John PROPN ran");
        assert!(annotate("zz", "John ran", &fa).unwrap().spans.is_empty());
        assert!(FileAnnotator::parse("{bad", Path::new("mem")).is_err());
    }
}
