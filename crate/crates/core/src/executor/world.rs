use super::{execute, ActionCommand, ExecConfig, ExecValue, ExecutionTrace, FailureKind, FailureReport, TraceStatus};
use crate::grounding::Grounder;
use crate::program::Program;
use crate::scene::{ObjectId, SceneGraph};

/// Source of scene snapshots. Each call returns the current world state.
pub trait WorldState {
    fn observe(&mut self) -> SceneGraph;
}

/// A world that never changes.
#[derive(Debug, Clone)]
pub struct StaticWorld(pub SceneGraph);

impl WorldState for StaticWorld {
    fn observe(&mut self) -> SceneGraph {
        self.0.clone()
    }
}

/// Replays a fixed sequence of states, repeating the last one.
#[derive(Debug, Clone)]
pub struct ScriptedWorld {
    states: Vec<SceneGraph>,
    next: usize,
}

impl ScriptedWorld {
    pub fn new(states: Vec<SceneGraph>) -> Self {
        assert!(!states.is_empty(), "a scripted world needs at least one state");
        ScriptedWorld { states, next: 0 }
    }

    pub fn observations(&self) -> usize {
        self.next
    }
}

impl WorldState for ScriptedWorld {
    fn observe(&mut self) -> SceneGraph {
        let s = self.states[self.next.min(self.states.len() - 1)].clone();
        self.next += 1;
        s
    }
}

fn targets(action: &ActionCommand) -> Vec<ObjectId> {
    match action {
        ActionCommand::Grasp { object_id, .. } => vec![*object_id],
        ActionCommand::PickPlace { pick_id, ref_id, .. } => vec![*pick_id, *ref_id],
        ActionCommand::Sort { object_ids, container_id, .. } => {
            object_ids.iter().copied().chain(std::iter::once(*container_id)).collect()
        }
    }
}

/// Execute against a live world. Before an action is released the targets
/// are observed again; if their state changed since the snapshot the
/// program is re-run on the new state, at most `config.max_reruns` times.
pub fn execute_in_world<W: WorldState + ?Sized, G: Grounder + ?Sized>(
    program: &Program,
    world: &mut W,
    grounder: &G,
    config: &ExecConfig,
) -> ExecutionTrace {
    let mut last = None;
    for attempt in 0..=config.max_reruns {
        let snapshot = world.observe();
        let mut trace = execute(program, &snapshot, grounder, config);
        trace.reruns = attempt;
        let Some(ExecValue::Action(action)) = trace.answer() else { return trace };
        let now = world.observe();
        if targets(action).iter().all(|&id| now.get(id).is_some() && now.get(id) == snapshot.get(id)) {
            return trace;
        }
        last = Some(trace);
    }
    let mut trace = last.expect("at least one attempt");
    let step = trace.steps.len().saturating_sub(1);
    trace.status = TraceStatus::Failure {
        report: FailureReport {
            kind: FailureKind::Grasping,
            step,
            message: format!("The target kept moving; gave up after {} re-runs.", config.max_reruns),
            candidates: vec![],
        },
    };
    trace
}
