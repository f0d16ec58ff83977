use super::{round9, synthesize_grasp, Box3, ObjectNode, SceneError, SceneGraph, SplitTag, Workspace};
use crate::catalogue::{self, ObjectModel};
use crate::rng::{stream, Rng, Stream};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub min_objects: usize,
    pub max_objects: usize,
    /// Restrict sampling to these model names; `None` uses the whole catalogue.
    pub models: Option<Vec<String>>,
    pub split: SplitTag,
    /// Guarantee at least two objects sharing a category, color or material.
    pub require_distractor: bool,
    /// Whole-scene restarts before giving up.
    pub max_attempts: usize,
    /// Random positions tried per object before restarting the scene.
    pub placement_tries: usize,
    /// Minimum planar centroid distance (scattered split only).
    pub d_min: f64,
    /// Minimum footprint gap between any two objects.
    pub clearance: f64,
    pub workspace: Workspace,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            min_objects: 4,
            max_objects: 8,
            models: None,
            split: SplitTag::Scattered,
            require_distractor: false,
            max_attempts: 200,
            placement_tries: 200,
            d_min: 0.18,
            clearance: 0.02,
            workspace: Workspace::default(),
        }
    }
}

impl SamplerConfig {
    pub fn scattered(min_objects: usize, max_objects: usize) -> Self {
        SamplerConfig { min_objects, max_objects, split: SplitTag::Scattered, ..Default::default() }
    }

    pub fn crowded(min_objects: usize, max_objects: usize) -> Self {
        SamplerConfig { min_objects, max_objects, split: SplitTag::Crowded, ..Default::default() }
    }
}

/// Rejection-sample a scene. Deterministic in `(config, seed)`.
pub fn sample_scene(config: &SamplerConfig, seed: u64) -> Result<SceneGraph, SceneError> {
    let pool: Vec<&ObjectModel> = match &config.models {
        None => catalogue::builtin().iter().collect(),
        Some(names) => catalogue::builtin().iter().filter(|m| names.contains(&m.model)).collect(),
    };
    if config.min_objects > config.max_objects || config.max_objects > pool.len() {
        return Err(SceneError::Invalid(format!(
            "object range {}..={} not satisfiable with {} models",
            config.min_objects,
            config.max_objects,
            pool.len()
        )));
    }
    let mut rng = stream(seed, Stream::Scene, 0);
    for _ in 0..config.max_attempts {
        let n = rng.random_range(config.min_objects..=config.max_objects);
        let Some(models) = choose_models(&pool, n, config.require_distractor, &mut rng) else {
            return Err(SceneError::Invalid("no distractor pair exists in the model subset".into()));
        };
        if let Some(objects) = place(&models, config, &mut rng) {
            let scene = SceneGraph { seed, split_tag: config.split, workspace: config.workspace, objects };
            debug_assert!(scene.validate().is_ok());
            return Ok(scene);
        }
    }
    Err(SceneError::SamplingExhausted { attempts: config.max_attempts })
}

fn shares_attribute(a: &ObjectModel, b: &ObjectModel) -> bool {
    a.category == b.category || a.color == b.color || a.material == b.material
}

fn choose_models<'a>(pool: &[&'a ObjectModel], n: usize, distractor: bool, rng: &mut Rng) -> Option<Vec<&'a ObjectModel>> {
    let mut order: Vec<&ObjectModel> = pool.to_vec();
    order.shuffle(rng);
    if !distractor || n < 2 {
        order.truncate(n);
        return Some(order);
    }
    // Seed the scene with a same-attribute pair, then fill randomly.
    let first = order[0];
    let partners: Vec<usize> = (1..order.len()).filter(|&i| shares_attribute(first, order[i])).collect();
    let &p = partners.choose(rng)?;
    order.swap(1, p);
    order.truncate(n);
    Some(order)
}

fn place(models: &[&ObjectModel], config: &SamplerConfig, rng: &mut Rng) -> Option<Vec<ObjectNode>> {
    let ws = config.workspace;
    let mut boxes: Vec<Box3> = Vec::with_capacity(models.len());
    for m in models {
        let mut size = m.size;
        if rng.random_bool(0.5) {
            size.swap(0, 1);
        }
        let ext = [round9(size[0] / ws.w), round9(size[1] / ws.d), round9(size[2] / ws.h)];
        if ext.iter().any(|&e| e >= 1.0) {
            return None;
        }
        let mut placed = None;
        for _ in 0..config.placement_tries {
            let c = [
                round9(rng.random_range(ext[0] / 2.0..=1.0 - ext[0] / 2.0)),
                round9(rng.random_range(ext[1] / 2.0..=1.0 - ext[1] / 2.0)),
                round9(ext[2] / 2.0),
            ];
            let Ok(b) = Box3::new(c, ext) else { continue };
            let ok = boxes.iter().all(|o| {
                b.footprint_gap(o) >= config.clearance
                    && (config.split == SplitTag::Crowded || planar_distance(&b, o) >= config.d_min)
            });
            if ok {
                placed = Some(b);
                break;
            }
        }
        boxes.push(placed?);
    }
    Some(
        models
            .iter()
            .zip(boxes)
            .enumerate()
            .map(|(id, (m, bbox))| ObjectNode {
                id,
                category: m.category.clone(),
                color: m.color.clone(),
                material: m.material.clone(),
                supercategory: m.supercategory.clone(),
                instance_name: m.instance.clone(),
                grasp: synthesize_grasp(&bbox),
                bbox,
                feature: None,
            })
            .collect(),
    )
}

pub(crate) fn planar_distance(a: &Box3, b: &Box3) -> f64 {
    ((a.center[0] - b.center[0]).powi(2) + (a.center[1] - b.center[1]).powi(2)).sqrt()
}
