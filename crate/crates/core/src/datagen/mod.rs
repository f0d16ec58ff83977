//! Question/program/answer datasets instantiated from the template grammar.
//!
//! Every sample is produced by binding a template's slots to labels and
//! relations read off a scene, then executing the bound program with the
//! oracle grounder. Instantiations that fail, are degenerate under their
//! family's rules, or repeat an earlier question are rejected and resampled.

mod instantiate;
mod splits;

pub use instantiate::{pluralize, Generator};
pub use splits::{generate_grasp_splits, write_grasp_splits, Complexity, GraspPair, GraspSplit, GraspSplitConfig, GraspSplits};

use crate::executor::{ActionCommand, ExecValue};
use crate::grounding::ConceptMemory;
use crate::parser::Grammar;
use crate::program::Step;
use crate::relations::RelationThresholds;
use crate::rng::{scene_seed, stream, Stream};
use crate::scene::{parse_scene, serialize_scene, SCENE_FILE_EXTENSION};
use crate::scene::{sample_scene, Box3, ObjectId, SamplerConfig, SceneError, SceneGraph};
use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const DEFAULT_FAMILIES: [&str; 11] = [
    "compare_integer",
    "comparison",
    "zero_hop",
    "one_hop",
    "two_hop",
    "hyper_one_hop",
    "hyper_two_hop",
    "single_and",
    "single_or",
    "same_relate",
    "return",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub num_scenes: usize,
    /// Samples per family per scene.
    pub family_quota: usize,
    pub families: Vec<String>,
    pub seed: u64,
    pub sampler: SamplerConfig,
    pub thresholds: RelationThresholds,
    /// Instantiation attempts per (scene, template).
    pub attempt_cap: usize,
    /// Steer yes/no answers toward an even split.
    pub balance: bool,
    /// Attempts per sample after which the balance preference is dropped.
    pub balance_attempts: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            num_scenes: 10,
            family_quota: 6,
            families: DEFAULT_FAMILIES.iter().map(|s| s.to_string()).collect(),
            seed: 0,
            sampler: SamplerConfig { require_distractor: true, ..SamplerConfig::crowded(5, 8) },
            thresholds: RelationThresholds::datagen(),
            attempt_cap: 50,
            balance: true,
            balance_attempts: 25,
        }
    }
}

impl DatasetConfig {
    pub fn per_scene_quota(&self) -> usize {
        self.family_quota * self.families.len()
    }
}

/// Stored answer. Object answers carry the target's box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Answer {
    ObjSet(Vec<ObjectId>),
    Obj {
        id: ObjectId,
        #[serde(rename = "box")]
        bbox: Box3,
    },
    Int(i64),
    Bool(bool),
    Concept(String),
    Action(ActionCommand),
}

impl Answer {
    pub fn from_value(v: &ExecValue, scene: &SceneGraph) -> Answer {
        match v {
            ExecValue::ObjSet(s) => Answer::ObjSet(s.clone()),
            ExecValue::Obj(n) => Answer::Obj { id: *n, bbox: scene.objects[*n].bbox },
            ExecValue::Int(i) => Answer::Int(*i),
            ExecValue::Bool(b) => Answer::Bool(*b),
            ExecValue::Concept(c) => Answer::Concept(c.clone()),
            ExecValue::Action(a) => Answer::Action(a.clone()),
        }
    }

    /// Histogram key.
    pub fn label(&self) -> String {
        match self {
            Answer::ObjSet(s) => format!("set of {}", s.len()),
            Answer::Obj { .. } => "object".into(),
            Answer::Int(i) => i.to_string(),
            Answer::Bool(b) => if *b { "yes" } else { "no" }.into(),
            Answer::Concept(c) => c.clone(),
            Answer::Action(ActionCommand::Grasp { .. }) => "grasp".into(),
            Answer::Action(ActionCommand::PickPlace { .. }) => "pick_place".into(),
            Answer::Action(ActionCommand::Sort { .. }) => "sort".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSample {
    pub scene_id: String,
    pub family: String,
    pub template_id: String,
    pub question: String,
    pub program: Vec<Step>,
    pub answer: Answer,
    pub seed: u64,
}

/// Why an instantiation attempt was discarded.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Reject {
    #[error("no referent can be described uniquely")]
    NoReferent,
    #[error("a unique step would fail")]
    UniqueFailure,
    #[error("degenerate under rule `{0}`")]
    Degenerate(String),
    #[error("the action is not executable")]
    InvalidAction,
    #[error("the pattern cannot express the bound slots")]
    Render,
    #[error("duplicate question")]
    Duplicate,
    #[error("answer does not match the balance target")]
    Unbalanced,
}

impl Reject {
    pub fn reason(&self) -> String {
        match self {
            Reject::NoReferent => "no_referent".into(),
            Reject::UniqueFailure => "unique_failure".into(),
            Reject::Degenerate(rule) => format!("degenerate:{rule}"),
            Reject::InvalidAction => "invalid_action".into(),
            Reject::Render => "render".into(),
            Reject::Duplicate => "duplicate".into(),
            Reject::Unbalanced => "unbalanced".into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("quota unmet for {}", .0.iter().map(|(s, f)| format!("({s}, {f})")).collect::<Vec<_>>().join(", "))]
    QuotaUnmet(Vec<(String, String)>),
    #[error("unknown family `{0}`")]
    UnknownFamily(String),
    #[error("scene sampling failed: {0}")]
    Scene(#[from] SceneError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatagenError + '_ {
    move |source| DatagenError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub id: String,
    pub scene: SceneGraph,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub scenes: usize,
    pub samples: usize,
    pub template_count: usize,
    pub templates_per_family: BTreeMap<String, usize>,
    pub samples_per_family: BTreeMap<String, usize>,
    pub samples_per_template: BTreeMap<String, usize>,
    pub attempts: usize,
    pub rejections: BTreeMap<String, usize>,
    pub rejection_rate: f64,
    pub answer_histogram: BTreeMap<String, BTreeMap<String, usize>>,
    /// Share of yes answers among boolean samples, per family.
    pub boolean_true_rate: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub scenes: Vec<SceneEntry>,
    pub samples: Vec<DatasetSample>,
    pub stats: DatasetStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub grammar_version: u32,
    pub config: DatasetConfig,
    pub scene_ids: Vec<String>,
    pub sample_count: usize,
}

pub fn scene_id(index: usize) -> String {
    format!("scene_{index:05}")
}

#[derive(Default)]
struct SceneOutcome {
    samples: Vec<DatasetSample>,
    attempts: usize,
    rejections: BTreeMap<String, usize>,
    unmet: Vec<String>,
}

/// Fill the per-family quotas on one scene.
fn fill_scene(gen: &Generator, config: &DatasetConfig, index: usize, id: &str, scene: &SceneGraph) -> SceneOutcome {
    let mut out = SceneOutcome::default();
    let mut seen = BTreeSet::new();
    for (fi, family) in config.families.iter().enumerate() {
        let templates: Vec<_> = gen.grammar().family_templates(family).collect();
        let mut rng = stream(config.seed, Stream::Questions, ((index as u64) << 16) | fi as u64);
        let mut order: Vec<usize> = (0..templates.len()).collect();
        order.shuffle(&mut rng);
        let mut budget = vec![config.attempt_cap; templates.len()];
        let (mut yes, mut no) = (0usize, 0usize);
        for j in 0..config.family_quota {
            let mut tries = 0;
            let mut filled = false;
            'templates: for k in 0..templates.len() {
                let ti = order[(j + k) % templates.len()];
                while budget[ti] > 0 {
                    budget[ti] -= 1;
                    tries += 1;
                    out.attempts += 1;
                    // ties alternate across scenes so single yes/no slots still balance
                    let lean = if yes == no { (index + fi) % 2 == 0 } else { yes < no };
                    let want = (config.balance && tries <= config.balance_attempts).then_some(lean);
                    let seed = rng.next_u64();
                    let result = gen.instantiate(templates[ti], scene, id, seed, want).and_then(|s| {
                        if seen.contains(&s.question) {
                            return Err(Reject::Duplicate);
                        }
                        match (&s.answer, want) {
                            (Answer::Bool(b), Some(w)) if *b != w => Err(Reject::Unbalanced),
                            _ => Ok(s),
                        }
                    });
                    match result {
                        Ok(s) => {
                            match s.answer {
                                Answer::Bool(true) => yes += 1,
                                Answer::Bool(false) => no += 1,
                                _ => {}
                            }
                            seen.insert(s.question.clone());
                            out.samples.push(s);
                            filled = true;
                            break 'templates;
                        }
                        Err(r) => *out.rejections.entry(r.reason()).or_default() += 1,
                    }
                }
            }
            if !filled {
                out.unmet.push(family.clone());
                break;
            }
        }
    }
    out
}

/// Run `f` over `0..n` on scoped worker threads; results in index order.
pub(crate) fn parallel_map<T: Send, F: Fn(usize) -> T + Sync>(n: usize, f: F) -> Vec<T> {
    let workers = std::thread::available_parallelism().map_or(1, |p| p.get()).min(n.max(1));
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    std::thread::scope(|s| {
        let chunks: Vec<&mut [Option<T>]> = slots.chunks_mut(n.div_ceil(workers).max(1)).collect();
        let mut start = 0;
        for chunk in chunks {
            let base = start;
            start += chunk.len();
            let f = &f;
            s.spawn(move || {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(f(base + k));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every index computed")).collect()
}

pub fn generate_dataset(config: &DatasetConfig) -> Result<Dataset, DatagenError> {
    let grammar = Grammar::builtin();
    for f in &config.families {
        if grammar.family(f).is_none() {
            return Err(DatagenError::UnknownFamily(f.clone()));
        }
    }
    let gen = Generator::new(ConceptMemory::training(), grammar.clone(), config.thresholds);
    let results = parallel_map(config.num_scenes, |i| -> Result<(SceneEntry, SceneOutcome), SceneError> {
        let scene = sample_scene(&config.sampler, scene_seed(config.seed, i as u64))?;
        let id = scene_id(i);
        let outcome = fill_scene(&gen, config, i, &id, &scene);
        Ok((SceneEntry { id, scene }, outcome))
    });

    let mut scenes = Vec::new();
    let mut samples = Vec::new();
    let mut unmet = Vec::new();
    let mut stats = DatasetStats::default();
    for r in results {
        let (entry, outcome) = r?;
        unmet.extend(outcome.unmet.iter().map(|f| (entry.id.clone(), f.clone())));
        stats.attempts += outcome.attempts;
        for (k, v) in outcome.rejections {
            *stats.rejections.entry(k).or_default() += v;
        }
        samples.extend(outcome.samples);
        scenes.push(entry);
    }
    if !unmet.is_empty() {
        return Err(DatagenError::QuotaUnmet(unmet));
    }
    for f in &config.families {
        stats.templates_per_family.insert(f.clone(), grammar.family_templates(f).count());
    }
    stats.template_count = stats.templates_per_family.values().sum();
    fill_stats(&mut stats, &samples);
    stats.scenes = scenes.len();
    Ok(Dataset { config: config.clone(), scenes, samples, stats })
}

fn fill_stats(stats: &mut DatasetStats, samples: &[DatasetSample]) {
    stats.samples = samples.len();
    let mut bools: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for s in samples {
        *stats.samples_per_family.entry(s.family.clone()).or_default() += 1;
        *stats.samples_per_template.entry(s.template_id.clone()).or_default() += 1;
        *stats.answer_histogram.entry(s.family.clone()).or_default().entry(s.answer.label()).or_default() += 1;
        if let Answer::Bool(b) = s.answer {
            let e = bools.entry(s.family.clone()).or_default();
            e.0 += b as usize;
            e.1 += 1;
        }
    }
    stats.boolean_true_rate = bools.into_iter().map(|(f, (t, n))| (f, t as f64 / n as f64)).collect();
    let rejected: usize = stats.rejections.values().sum();
    stats.rejection_rate = if stats.attempts == 0 { 0.0 } else { rejected as f64 / stats.attempts as f64 };
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DatagenError> {
    let mut text = serde_json::to_string_pretty(value).expect("serialisable");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub(crate) fn write_scenes(dir: &Path, scenes: &[SceneEntry]) -> Result<(), DatagenError> {
    let scene_dir = dir.join("scenes");
    fs::create_dir_all(&scene_dir).map_err(io_err(&scene_dir))?;
    for e in scenes {
        let path = scene_dir.join(format!("{}{SCENE_FILE_EXTENSION}", e.id));
        fs::write(&path, serialize_scene(&e.scene)).map_err(io_err(&path))?;
    }
    Ok(())
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), DatagenError> {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r).expect("serialisable"));
        text.push('\n');
    }
    fs::write(path, text).map_err(io_err(path))
}

/// Write `scenes/`, `samples.jsonl`, `stats.json` and `manifest.json`.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<(), DatagenError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_scenes(dir, &dataset.scenes)?;
    write_jsonl(&dir.join("samples.jsonl"), &dataset.samples)?;
    write_json(&dir.join("stats.json"), &dataset.stats)?;
    let manifest = Manifest {
        format_version: 1,
        grammar_version: Grammar::builtin().version,
        config: dataset.config.clone(),
        scene_ids: dataset.scenes.iter().map(|e| e.id.clone()).collect(),
        sample_count: dataset.samples.len(),
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

/// A dataset read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub manifest: Manifest,
    pub scenes: BTreeMap<String, SceneGraph>,
    pub samples: Vec<DatasetSample>,
}

pub fn load_scene_file(path: &Path) -> Result<SceneGraph, DatagenError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_scene(&text).map_err(|e| DatagenError::Format { path: path.to_path_buf(), message: e.to_string() })
}

pub(crate) fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, DatagenError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| DatagenError::Format { path: path.to_path_buf(), message: format!("line {}: {e}", i + 1) })
        })
        .collect()
}

pub fn load_dataset(dir: &Path) -> Result<LoadedDataset, DatagenError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| DatagenError::Format { path: path.clone(), message: e.to_string() })?;
    let mut scenes = BTreeMap::new();
    for id in &manifest.scene_ids {
        let p = dir.join("scenes").join(format!("{id}{SCENE_FILE_EXTENSION}"));
        scenes.insert(id.clone(), load_scene_file(&p)?);
    }
    let samples = read_jsonl(&dir.join("samples.jsonl"))?;
    Ok(LoadedDataset { manifest, scenes, samples })
}

/// Generator over the training lexicon and the builtin grammar.
pub fn default_generator(thresholds: RelationThresholds) -> Generator {
    Generator::new(ConceptMemory::training(), Grammar::builtin(), thresholds)
}

#[cfg(test)]
mod tests;
