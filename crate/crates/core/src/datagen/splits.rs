//! Grasping evaluation splits: scattered or crowded scenes crossed with
//! simple or complex instructions.

use super::{io_err, parallel_map, write_jsonl, write_scenes, Answer, DatagenError, Generator, SceneEntry};
use crate::executor::ActionCommand;
use crate::grounding::ConceptMemory;
use crate::parser::{Grammar, Skel, Template};
use crate::program::{Primitive, Step};
use crate::relations::RelationThresholds;
use crate::rng::{mix64, stream, Stream};
use crate::scene::{sample_scene, ObjectId, SamplerConfig, SplitTag};
use rand::seq::IndexedRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Complexity {
    Simple,
    Complex,
}

impl Complexity {
    pub fn families(self) -> &'static [&'static str] {
        match self {
            Complexity::Simple => &["zero_hop", "return"],
            Complexity::Complex => &["two_hop", "hyper_one_hop", "hyper_two_hop", "single_and", "single_or"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraspSplitConfig {
    pub scenes_per_split: usize,
    pub instructions_per_scene: usize,
    pub seed: u64,
    pub scattered: SamplerConfig,
    pub crowded: SamplerConfig,
    pub thresholds: RelationThresholds,
    pub attempt_cap: usize,
}

impl Default for GraspSplitConfig {
    fn default() -> Self {
        GraspSplitConfig {
            scenes_per_split: 10,
            instructions_per_scene: 5,
            seed: 0,
            scattered: SamplerConfig { require_distractor: true, ..SamplerConfig::scattered(5, 7) },
            crowded: SamplerConfig { require_distractor: true, ..SamplerConfig::crowded(6, 8) },
            thresholds: RelationThresholds::datagen(),
            attempt_cap: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspPair {
    pub split: String,
    pub scene_id: String,
    pub family: String,
    pub template_id: String,
    pub instruction: String,
    pub program: Vec<Step>,
    pub target: ObjectId,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraspSplit {
    /// `A` to `D`.
    pub name: String,
    pub scenes_kind: SplitTag,
    pub complexity: Complexity,
    pub scenes: Vec<SceneEntry>,
    pub pairs: Vec<GraspPair>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraspSplits {
    pub config: GraspSplitConfig,
    pub splits: Vec<GraspSplit>,
}

impl GraspSplits {
    pub fn pairs(&self) -> impl Iterator<Item = &GraspPair> {
        self.splits.iter().flat_map(|s| s.pairs.iter())
    }
}

const LAYOUT: [(&str, SplitTag, Complexity); 4] = [
    ("A", SplitTag::Scattered, Complexity::Simple),
    ("B", SplitTag::Crowded, Complexity::Simple),
    ("C", SplitTag::Scattered, Complexity::Complex),
    ("D", SplitTag::Crowded, Complexity::Complex),
];

fn is_grasp(t: &Template) -> bool {
    matches!(t.skeleton, Skel::Call { op: Primitive::Grasp, .. })
}

pub fn generate_grasp_splits(config: &GraspSplitConfig) -> Result<GraspSplits, DatagenError> {
    let grammar = Grammar::builtin();
    let gen = Generator::new(ConceptMemory::training(), grammar.clone(), config.thresholds);
    let jobs: Vec<(usize, usize)> = (0..LAYOUT.len()).flat_map(|s| (0..config.scenes_per_split).map(move |i| (s, i))).collect();
    let results = parallel_map(jobs.len(), |j| {
        let (s, i) = jobs[j];
        let (name, kind, complexity) = LAYOUT[s];
        let sampler = match kind {
            SplitTag::Scattered => &config.scattered,
            SplitTag::Crowded => &config.crowded,
        };
        let key = ((s as u64) << 32) | i as u64;
        let scene = sample_scene(sampler, mix64(config.seed ^ mix64(key + 1)))?;
        let id = format!("{name}_{i:03}");
        let templates: Vec<&Template> = complexity
            .families()
            .iter()
            .flat_map(|f| grammar.family_templates(f))
            .filter(|t| is_grasp(t))
            .collect();
        let mut rng = stream(config.seed, Stream::Splits, key);
        let mut budget = vec![config.attempt_cap; templates.len()];
        let mut seen = BTreeSet::new();
        let mut pairs = Vec::new();
        while pairs.len() < config.instructions_per_scene {
            let open: Vec<usize> = (0..templates.len()).filter(|&k| budget[k] > 0).collect();
            let Some(&k) = open.choose(&mut rng) else {
                return Err(DatagenError::QuotaUnmet(vec![(id, complexity_label(complexity))]));
            };
            budget[k] -= 1;
            let seed = rng.next_u64();
            let sample = match gen.instantiate(templates[k], &scene, &id, seed, None) {
                Ok(s) if !seen.contains(&s.question) => s,
                _ => continue,
            };
            let Answer::Action(ActionCommand::Grasp { object_id, .. }) = sample.answer else {
                continue;
            };
            seen.insert(sample.question.clone());
            pairs.push(GraspPair {
                split: name.to_string(),
                scene_id: id.clone(),
                family: sample.family,
                template_id: sample.template_id,
                instruction: sample.question,
                program: sample.program,
                target: object_id,
                seed,
            });
        }
        Ok((SceneEntry { id, scene }, pairs))
    });

    let mut splits: Vec<GraspSplit> = LAYOUT
        .iter()
        .map(|&(name, kind, complexity)| GraspSplit {
            name: name.to_string(),
            scenes_kind: kind,
            complexity,
            scenes: Vec::new(),
            pairs: Vec::new(),
        })
        .collect();
    let mut unmet = Vec::new();
    for (j, r) in results.into_iter().enumerate() {
        match r {
            Ok((entry, pairs)) => {
                let split = &mut splits[jobs[j].0];
                split.scenes.push(entry);
                split.pairs.extend(pairs);
            }
            Err(DatagenError::QuotaUnmet(u)) => unmet.extend(u),
            Err(e) => return Err(e),
        }
    }
    if !unmet.is_empty() {
        return Err(DatagenError::QuotaUnmet(unmet));
    }
    Ok(GraspSplits { config: config.clone(), splits })
}

fn complexity_label(c: Complexity) -> String {
    match c {
        Complexity::Simple => "simple".into(),
        Complexity::Complex => "complex".into(),
    }
}

#[derive(Serialize)]
struct SplitsManifest<'a> {
    format_version: u32,
    config: &'a GraspSplitConfig,
    splits: Vec<SplitSummary<'a>>,
}

#[derive(Serialize)]
struct SplitSummary<'a> {
    name: &'a str,
    scenes: SplitTag,
    complexity: Complexity,
    scene_ids: Vec<&'a str>,
    pairs: usize,
}

/// Write `scenes/`, `pairs.jsonl` and `manifest.json`.
pub fn write_grasp_splits(dir: &Path, splits: &GraspSplits) -> Result<(), DatagenError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let scenes: Vec<SceneEntry> = splits.splits.iter().flat_map(|s| s.scenes.iter().cloned()).collect();
    write_scenes(dir, &scenes)?;
    let pairs: Vec<&GraspPair> = splits.pairs().collect();
    write_jsonl(&dir.join("pairs.jsonl"), &pairs)?;
    let manifest = SplitsManifest {
        format_version: 1,
        config: &splits.config,
        splits: splits
            .splits
            .iter()
            .map(|s| SplitSummary {
                name: &s.name,
                scenes: s.scenes_kind,
                complexity: s.complexity,
                scene_ids: s.scenes.iter().map(|e| e.id.as_str()).collect(),
                pairs: s.pairs.len(),
            })
            .collect(),
    };
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("serialisable");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))
}
