//! Fault injection for checking the failure taxonomy.
//!
//! Each trial starts from an annotated program that executes cleanly on its
//! scene, injects one fault and asks [`classify_failure`] for a bucket. A
//! fault that leaves the trace unchanged is not counted; the injector draws
//! again with a fresh seed.

use crate::executor::{classify_failure, execute, ExecConfig, ExecValue, ExecutionTrace, FailureKind, GroundTruth};
use crate::executor::ActionCommand;
use crate::grounding::{ConceptKind, FlipGrounder, Grounder, OracleGrounder};
use crate::program::{Primitive, Program};
use crate::relations::{HyperRelationConcept, RelationConcept};
use crate::rng::{stream, Stream};
use crate::scene::SceneGraph;
use rand::seq::IndexedRandom;
use rand::{Rng as _, RngCore};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// Swap one concept argument of the program for another of the same kind.
    ProgramCorruption,
    /// Run the annotated program through a [`FlipGrounder`].
    ScoreFlip,
    /// Move the target's grasp centre outside its footprint.
    GraspDisplacement,
}

impl FaultKind {
    pub const ALL: [FaultKind; 3] = [FaultKind::ProgramCorruption, FaultKind::ScoreFlip, FaultKind::GraspDisplacement];

    pub fn expected(self) -> FailureKind {
        match self {
            FaultKind::ProgramCorruption => FailureKind::Reasoning,
            FaultKind::ScoreFlip => FailureKind::Perception,
            FaultKind::GraspDisplacement => FailureKind::Grasping,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FaultKind::ProgramCorruption => "program_corruption",
            FaultKind::ScoreFlip => "score_flip",
            FaultKind::GraspDisplacement => "grasp_displacement",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultConfig {
    pub flip_rate: f64,
    /// Seeds tried before giving up on a fault that never shows.
    pub max_draws: usize,
}

impl Default for FaultConfig {
    fn default() -> Self {
        FaultConfig { flip_rate: 0.1, max_draws: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub fault: FaultKind,
    pub seed: u64,
    pub draws: usize,
    pub classified: Option<FailureKind>,
}

impl Trial {
    pub fn correct(&self) -> bool {
        self.classified == Some(self.fault.expected())
    }
}

/// Whether `fault` can be injected into this program at all.
pub fn applicable(fault: FaultKind, program: &Program) -> bool {
    match fault {
        FaultKind::ProgramCorruption => program.post_order().iter().any(|n| n.concept.is_some()),
        FaultKind::ScoreFlip => program.post_order().iter().any(|n| n.primitive.needs_grounding()),
        FaultKind::GraspDisplacement => program.primitive == Primitive::Grasp,
    }
}

/// Inject `fault` into a clean execution of `program` and classify the
/// outcome. Returns `None` when no draw out of `max_draws` changed the trace.
pub fn run_trial(
    fault: FaultKind,
    program: &Program,
    scene: &SceneGraph,
    oracle: &OracleGrounder,
    exec: &ExecConfig,
    config: &FaultConfig,
    seed: u64,
) -> Option<Trial> {
    let clean = execute(program, scene, oracle, exec);
    if clean.failure().is_some() || !applicable(fault, program) {
        return None;
    }
    for draw in 0..config.max_draws {
        let mut rng = stream(seed, Stream::Faults, draw as u64);
        let classified = match fault {
            FaultKind::ProgramCorruption => {
                let bad = corrupt(program, oracle, &mut rng)?;
                let trace = execute(&bad, scene, oracle, exec);
                if same_outcome(&trace, &clean) {
                    continue;
                }
                let gt = GroundTruth { program, grounder: oracle };
                classify_failure(&bad, &trace, scene, Some(&gt), exec)
            }
            FaultKind::ScoreFlip => {
                let flipped = FlipGrounder::new(oracle.clone(), config.flip_rate, rng.next_u64());
                let trace = execute(program, scene, &flipped, exec);
                if trace.steps == clean.steps {
                    continue;
                }
                let gt = GroundTruth { program, grounder: oracle };
                classify_failure(program, &trace, scene, Some(&gt), exec)
            }
            FaultKind::GraspDisplacement => {
                let Some(ExecValue::Action(ActionCommand::Grasp { object_id, .. })) = clean.answer() else {
                    return None;
                };
                let world = displace_grasp(scene, *object_id, &mut rng);
                let trace = execute(program, &world, oracle, exec);
                let gt = GroundTruth { program, grounder: oracle };
                classify_failure(program, &trace, &world, Some(&gt), exec)
            }
        };
        return Some(Trial { fault, seed, draws: draw + 1, classified });
    }
    None
}

fn same_outcome(a: &ExecutionTrace, b: &ExecutionTrace) -> bool {
    a.answer() == b.answer() && a.failure().is_none() == b.failure().is_none()
}

/// Replace the concept of one randomly chosen node with a different
/// canonical concept of the same kind.
pub fn corrupt(program: &Program, grounder: &dyn Grounder, rng: &mut impl RngCore) -> Option<Program> {
    let count = program.post_order().iter().filter(|n| n.concept.is_some()).count();
    if count == 0 {
        return None;
    }
    let target = rng.random_range(0..count);
    let mut out = program.clone();
    let mut seen = 0;
    let mut ok = false;
    replace_nth(&mut out, target, &mut seen, &mut |node| {
        let kind = node.primitive.signature().concept?;
        let current = node.concept.clone()?;
        let options: Vec<String> = match kind {
            ConceptKind::Relation | ConceptKind::Location => {
                RelationConcept::ALL.iter().map(|r| r.name().to_string()).collect()
            }
            ConceptKind::HyperRelation => HyperRelationConcept::ALL.iter().map(|h| h.name().to_string()).collect(),
            _ => grounder.memory().entries(kind).iter().map(|e| e.canonical.clone()).collect(),
        };
        let options: Vec<&String> = options.iter().filter(|c| **c != current).collect();
        node.concept = Some((*options.choose(rng)?).clone());
        Some(())
    }, &mut ok);
    ok.then_some(out)
}

fn replace_nth(
    node: &mut Program,
    target: usize,
    seen: &mut usize,
    f: &mut dyn FnMut(&mut Program) -> Option<()>,
    ok: &mut bool,
) {
    for c in node.children.iter_mut() {
        replace_nth(c, target, seen, f, ok);
    }
    if node.concept.is_some() {
        if *seen == target {
            *ok = f(node).is_some();
        }
        *seen += 1;
    }
}

/// Copy of `scene` with the grasp centre of `id` pushed just past one side
/// of its footprint.
pub fn displace_grasp(scene: &SceneGraph, id: usize, rng: &mut impl RngCore) -> SceneGraph {
    let mut world = scene.clone();
    let o = &mut world.objects[id];
    let b = o.bbox;
    let gap = 0.005 + 0.02 * rng.random::<f64>();
    match rng.random_range(0..4) {
        0 => o.grasp.u = b.min(0) - gap,
        1 => o.grasp.u = b.max(0) + gap,
        2 => o.grasp.v = b.min(1) - gap,
        _ => o.grasp.v = b.max(1) + gap,
    }
    world
}
