//! Concept memory and the grounder contract.
//!
//! A [`Grounder`] scores objects against attribute concepts and object
//! tuples against spatial concepts. [`OracleGrounder`] reads ground-truth
//! labels and relation predicates and always answers 0 or 1.

use crate::relations::{hyper_zeta, zeta, HyperRelationConcept, RelationConcept, RelationError, RelationThresholds};
use crate::rng::mix64;
use crate::scene::{ObjectId, SceneGraph};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};
use thiserror::Error;

const CONCEPTS_JSON: &str = include_str!("../data/concepts.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttrType {
    Category,
    Color,
    Material,
    Supercategory,
    Instance,
}

impl AttrType {
    pub const ALL: [AttrType; 5] =
        [AttrType::Category, AttrType::Color, AttrType::Material, AttrType::Supercategory, AttrType::Instance];

    pub fn name(self) -> &'static str {
        match self {
            AttrType::Category => "category",
            AttrType::Color => "color",
            AttrType::Material => "material",
            AttrType::Supercategory => "supercategory",
            AttrType::Instance => "instance",
        }
    }
}

impl fmt::Display for AttrType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttrType {
    type Err = ConceptError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttrType::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| ConceptError::UnknownConcept(s.to_string()))
    }
}

/// Section of the concept memory a value belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptKind {
    Attr(AttrType),
    Relation,
    Location,
    HyperRelation,
}

impl ConceptKind {
    pub const ALL: [ConceptKind; 8] = [
        ConceptKind::Attr(AttrType::Category),
        ConceptKind::Attr(AttrType::Color),
        ConceptKind::Attr(AttrType::Material),
        ConceptKind::Attr(AttrType::Supercategory),
        ConceptKind::Attr(AttrType::Instance),
        ConceptKind::Relation,
        ConceptKind::Location,
        ConceptKind::HyperRelation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConceptKind::Attr(a) => a.name(),
            ConceptKind::Relation => "relation",
            ConceptKind::Location => "location",
            ConceptKind::HyperRelation => "hyper_relation",
        }
    }
}

impl fmt::Display for ConceptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A resolved concept: its section and canonical value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Concept {
    pub kind: ConceptKind,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConceptError {
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
    #[error("invalid concept catalogue: {0}")]
    Catalogue(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptEntry {
    pub canonical: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
    /// Surface forms kept out of the training lexicon.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub held_out: Vec<String>,
    /// Reserved slot for a learned concept embedding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
struct CatalogueFile {
    version: u32,
    category: Vec<ConceptEntry>,
    color: Vec<ConceptEntry>,
    material: Vec<ConceptEntry>,
    supercategory: Vec<ConceptEntry>,
    instance: Vec<ConceptEntry>,
    relation: Vec<ConceptEntry>,
    location: Vec<ConceptEntry>,
    hyper_relation: Vec<ConceptEntry>,
}

/// Lowercase, split on whitespace and punctuation (hyphens inside words are
/// kept) and map the article "an" to "a".
pub fn normalize(text: &str) -> Vec<String> {
    let cleaned: String =
        text.chars().map(|c| if c.is_alphanumeric() || c == '-' { c.to_ascii_lowercase() } else { ' ' }).collect();
    cleaned
        .split_whitespace()
        .map(|t| t.trim_matches('-'))
        .filter(|t| !t.is_empty())
        .map(|t| if t == "an" { "a".to_string() } else { t.to_lowercase() })
        .collect()
}

/// Registry of canonical concept values and their surface phrases.
#[derive(Debug, Clone)]
pub struct ConceptMemory {
    pub version: u32,
    sections: BTreeMap<ConceptKind, Vec<ConceptEntry>>,
    phrases: HashMap<Vec<String>, Vec<Concept>>,
    vocab: HashSet<String>,
    max_phrase_len: usize,
    held_out_active: bool,
}

impl ConceptMemory {
    /// Parse a catalogue; `include_held_out` adds the held-out synonyms to the
    /// phrase map.
    pub fn from_json(text: &str, include_held_out: bool) -> Result<Self, ConceptError> {
        let f: CatalogueFile = serde_json::from_str(text).map_err(|e| ConceptError::Catalogue(e.to_string()))?;
        let mut sections = BTreeMap::new();
        sections.insert(ConceptKind::Attr(AttrType::Category), f.category);
        sections.insert(ConceptKind::Attr(AttrType::Color), f.color);
        sections.insert(ConceptKind::Attr(AttrType::Material), f.material);
        sections.insert(ConceptKind::Attr(AttrType::Supercategory), f.supercategory);
        sections.insert(ConceptKind::Attr(AttrType::Instance), f.instance);
        sections.insert(ConceptKind::Relation, f.relation);
        sections.insert(ConceptKind::Location, f.location);
        sections.insert(ConceptKind::HyperRelation, f.hyper_relation);
        let mut mem = ConceptMemory {
            version: f.version,
            sections,
            phrases: HashMap::new(),
            vocab: HashSet::new(),
            max_phrase_len: 0,
            held_out_active: include_held_out,
        };
        mem.validate()?;
        mem.rebuild();
        Ok(mem)
    }

    /// Full lexicon, including the held-out synonyms.
    pub fn builtin() -> Arc<ConceptMemory> {
        static MEM: OnceLock<Arc<ConceptMemory>> = OnceLock::new();
        MEM.get_or_init(|| Arc::new(ConceptMemory::from_json(CONCEPTS_JSON, true).expect("bundled concepts.json is valid")))
            .clone()
    }

    /// Training lexicon: held-out synonyms are not recognised.
    pub fn training() -> Arc<ConceptMemory> {
        static MEM: OnceLock<Arc<ConceptMemory>> = OnceLock::new();
        MEM.get_or_init(|| Arc::new(ConceptMemory::from_json(CONCEPTS_JSON, false).expect("bundled concepts.json is valid")))
            .clone()
    }

    /// Copy of this memory with every held-out synonym activated.
    pub fn extended(&self) -> ConceptMemory {
        let mut m = self.clone();
        m.held_out_active = true;
        m.rebuild();
        m
    }

    pub fn includes_held_out(&self) -> bool {
        self.held_out_active
    }

    fn validate(&self) -> Result<(), ConceptError> {
        for (kind, entries) in &self.sections {
            let mut seen = HashSet::new();
            for e in entries {
                if e.canonical.is_empty() || !seen.insert(e.canonical.as_str()) {
                    return Err(ConceptError::Catalogue(format!("duplicate or empty {kind} value `{}`", e.canonical)));
                }
            }
        }
        for kind in [ConceptKind::Relation, ConceptKind::Location] {
            for e in &self.sections[&kind] {
                e.canonical.parse::<RelationConcept>().map_err(|err| ConceptError::Catalogue(err.to_string()))?;
            }
        }
        for e in &self.sections[&ConceptKind::HyperRelation] {
            e.canonical.parse::<HyperRelationConcept>().map_err(|err| ConceptError::Catalogue(err.to_string()))?;
        }
        Ok(())
    }

    fn rebuild(&mut self) {
        self.phrases.clear();
        self.vocab.clear();
        for (&kind, entries) in &self.sections {
            for e in entries {
                let held = if self.held_out_active { e.held_out.as_slice() } else { &[] };
                for phrase in e.synonyms.iter().chain(held) {
                    let toks = normalize(phrase);
                    if toks.is_empty() {
                        continue;
                    }
                    let concept = Concept { kind, value: e.canonical.clone() };
                    let senses = self.phrases.entry(toks.clone()).or_default();
                    if !senses.contains(&concept) {
                        senses.push(concept);
                    }
                    self.max_phrase_len = self.max_phrase_len.max(toks.len());
                    self.vocab.extend(toks);
                }
            }
        }
    }

    /// Register an extra surface phrase for an existing canonical value.
    pub fn add_synonym(&mut self, kind: ConceptKind, canonical: &str, phrase: &str) -> Result<(), ConceptError> {
        let entry = self
            .sections
            .get_mut(&kind)
            .and_then(|v| v.iter_mut().find(|e| e.canonical == canonical))
            .ok_or_else(|| ConceptError::UnknownConcept(canonical.to_string()))?;
        if normalize(phrase).is_empty() {
            return Err(ConceptError::Catalogue(format!("empty synonym for `{canonical}`")));
        }
        entry.synonyms.push(phrase.to_string());
        self.rebuild();
        Ok(())
    }

    pub fn entries(&self, kind: ConceptKind) -> &[ConceptEntry] {
        &self.sections[&kind]
    }

    pub fn entry(&self, kind: ConceptKind, canonical: &str) -> Option<&ConceptEntry> {
        self.entries(kind).iter().find(|e| e.canonical == canonical)
    }

    /// Canonical values of an attribute type, in catalogue order.
    pub fn values(&self, attr: AttrType) -> impl Iterator<Item = &str> {
        self.entries(ConceptKind::Attr(attr)).iter().map(|e| e.canonical.as_str())
    }

    pub fn contains(&self, attr: AttrType, canonical: &str) -> bool {
        self.entry(ConceptKind::Attr(attr), canonical).is_some()
    }

    pub fn contains_kind(&self, kind: ConceptKind, canonical: &str) -> bool {
        self.entry(kind, canonical).is_some()
    }

    /// Senses of an exact normalised phrase.
    pub fn senses(&self, tokens: &[String]) -> &[Concept] {
        self.phrases.get(tokens).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn max_phrase_len(&self) -> usize {
        self.max_phrase_len
    }

    pub fn is_vocab_token(&self, token: &str) -> bool {
        self.vocab.contains(token)
    }

    /// Lexicon-aware plural stripping: a token outside the vocabulary loses
    /// a trailing "s" or "es" when that yields a vocabulary token.
    pub fn singularize(&self, token: &str) -> String {
        if self.vocab.contains(token) {
            return token.to_string();
        }
        match token {
            "knives" => return "knife".into(),
            "mice" => return "mouse".into(),
            _ => {}
        }
        for suffix in ["s", "es"] {
            if let Some(stem) = token.strip_suffix(suffix) {
                if self.vocab.contains(stem) {
                    return stem.to_string();
                }
            }
        }
        token.to_string()
    }

    /// First training surface form of a canonical value.
    pub fn surface(&self, kind: ConceptKind, canonical: &str) -> Option<&str> {
        self.entry(kind, canonical).and_then(|e| e.synonyms.first()).map(String::as_str)
    }

    /// Resolve a phrase to a concept. Canonical values resolve to themselves;
    /// otherwise the longest known sub-phrase wins (leftmost on ties).
    pub fn resolve_concept(&self, phrase: &str) -> Result<Concept, ConceptError> {
        let phrase = phrase.trim();
        for kind in ConceptKind::ALL {
            if self.contains_kind(kind, phrase) {
                return Ok(Concept { kind, value: phrase.to_string() });
            }
        }
        let toks: Vec<String> = normalize(phrase).iter().map(|t| self.singularize(t)).collect();
        for len in (1..=toks.len().min(self.max_phrase_len)).rev() {
            for start in 0..=toks.len() - len {
                if let Some(c) = self.senses(&toks[start..start + len]).first() {
                    return Ok(c.clone());
                }
            }
        }
        Err(ConceptError::UnknownConcept(phrase.to_string()))
    }

    /// Canonical value of `concept` within one attribute type, accepting
    /// synonyms of that type.
    pub fn canonical_attr(&self, attr: AttrType, concept: &str) -> Result<String, ConceptError> {
        if self.contains(attr, concept) {
            return Ok(concept.to_string());
        }
        let toks: Vec<String> = normalize(concept).iter().map(|t| self.singularize(t)).collect();
        self.senses(&toks)
            .iter()
            .find(|c| c.kind == ConceptKind::Attr(attr))
            .map(|c| c.value.clone())
            .ok_or_else(|| ConceptError::UnknownConcept(concept.to_string()))
    }

    /// Attribute type a `filter_category` argument refers to: a category,
    /// an open instance name, or a supercategory.
    pub fn category_like(&self, concept: &str) -> Option<AttrType> {
        [AttrType::Category, AttrType::Instance, AttrType::Supercategory].into_iter().find(|&a| self.contains(a, concept))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroundingError {
    #[error(transparent)]
    Concept(#[from] ConceptError),
    #[error(transparent)]
    Relation(#[from] RelationError),
}

/// Score contract. Relation and hyper-relation scores lie in `[0, 1]`.
pub trait Grounder: Send + Sync {
    fn attr_score(&self, scene: &SceneGraph, n: ObjectId, attr: AttrType, concept: &str) -> Result<f64, GroundingError>;
    fn rel_score(&self, scene: &SceneGraph, n: ObjectId, m: ObjectId, r: RelationConcept) -> Result<f64, GroundingError>;
    fn hyper_score(
        &self,
        scene: &SceneGraph,
        n: ObjectId,
        m: ObjectId,
        k: ObjectId,
        h: HyperRelationConcept,
    ) -> Result<f64, GroundingError>;
    fn memory(&self) -> &ConceptMemory;
}

/// Ground-truth grounder.
#[derive(Debug, Clone)]
pub struct OracleGrounder {
    pub memory: Arc<ConceptMemory>,
    pub thresholds: RelationThresholds,
}

impl OracleGrounder {
    pub fn new(memory: Arc<ConceptMemory>, thresholds: RelationThresholds) -> Self {
        OracleGrounder { memory, thresholds }
    }
}

impl Default for OracleGrounder {
    fn default() -> Self {
        OracleGrounder::new(ConceptMemory::builtin(), RelationThresholds::default())
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

impl Grounder for OracleGrounder {
    fn attr_score(&self, scene: &SceneGraph, n: ObjectId, attr: AttrType, concept: &str) -> Result<f64, GroundingError> {
        let canonical = self.memory.canonical_attr(attr, concept)?;
        let obj = scene.get(n).ok_or(RelationError::InvalidObjectId(n))?;
        Ok(indicator(obj.label(attr) == Some(canonical.as_str())))
    }

    fn rel_score(&self, scene: &SceneGraph, n: ObjectId, m: ObjectId, r: RelationConcept) -> Result<f64, GroundingError> {
        Ok(indicator(zeta(scene, r, n, m, &self.thresholds)?))
    }

    fn hyper_score(
        &self,
        scene: &SceneGraph,
        n: ObjectId,
        m: ObjectId,
        k: ObjectId,
        h: HyperRelationConcept,
    ) -> Result<f64, GroundingError> {
        Ok(indicator(hyper_zeta(scene, h, n, m, k)?))
    }

    fn memory(&self) -> &ConceptMemory {
        &self.memory
    }
}

/// Fault injection: wraps a grounder and replaces a deterministic,
/// hash-selected fraction of its scores `s` with `1 - s`.
#[derive(Debug, Clone)]
pub struct FlipGrounder<G> {
    pub inner: G,
    pub rate: f64,
    pub seed: u64,
}

impl<G: Grounder> FlipGrounder<G> {
    pub fn new(inner: G, rate: f64, seed: u64) -> Self {
        FlipGrounder { inner, rate, seed }
    }

    fn flips(&self, key: &[u64], text: &str) -> bool {
        let mut h = mix64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        for &k in key {
            h = mix64(h ^ k);
        }
        // FNV-1a over the concept text keeps the hash stable across runs.
        let mut f: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.bytes() {
            f = (f ^ b as u64).wrapping_mul(0x0100_0000_01b3);
        }
        h = mix64(h ^ f);
        let u = (h >> 11) as f64 / (1u64 << 53) as f64;
        u < self.rate
    }

    fn apply(&self, s: f64, key: &[u64], text: &str) -> f64 {
        if self.flips(key, text) {
            1.0 - s
        } else {
            s
        }
    }
}

impl<G: Grounder> Grounder for FlipGrounder<G> {
    fn attr_score(&self, scene: &SceneGraph, n: ObjectId, attr: AttrType, concept: &str) -> Result<f64, GroundingError> {
        let s = self.inner.attr_score(scene, n, attr, concept)?;
        Ok(self.apply(s, &[1, n as u64, attr as u64], concept))
    }

    fn rel_score(&self, scene: &SceneGraph, n: ObjectId, m: ObjectId, r: RelationConcept) -> Result<f64, GroundingError> {
        let s = self.inner.rel_score(scene, n, m, r)?;
        Ok(self.apply(s, &[2, n as u64, m as u64], r.name()))
    }

    fn hyper_score(
        &self,
        scene: &SceneGraph,
        n: ObjectId,
        m: ObjectId,
        k: ObjectId,
        h: HyperRelationConcept,
    ) -> Result<f64, GroundingError> {
        let s = self.inner.hyper_score(scene, n, m, k, h)?;
        Ok(self.apply(s, &[3, n as u64, m as u64, k as u64], h.name()))
    }

    fn memory(&self) -> &ConceptMemory {
        self.inner.memory()
    }
}
