use super::{check_action, execute, ExecConfig, ExecValue, ExecutionTrace, FailureKind};
use crate::grounding::Grounder;
use crate::program::Program;
use crate::scene::SceneGraph;

/// Annotated program plus the reference grounder to diagnose against.
pub struct GroundTruth<'a> {
    pub program: &'a Program,
    pub grounder: &'a dyn Grounder,
}

/// Assign a failure to a bucket, checking in order: reasoning (the executed
/// program differs from the annotation), perception (a grounding step's
/// output differs from the reference re-execution), grasping (an emitted
/// action fails the placement check) and finally ill-posed queries.
/// Returns `None` when nothing went wrong.
pub fn classify_failure(
    executed: &Program,
    trace: &ExecutionTrace,
    scene: &SceneGraph,
    truth: Option<&GroundTruth<'_>>,
    config: &ExecConfig,
) -> Option<FailureKind> {
    if let Some(gt) = truth {
        if executed != gt.program {
            return Some(FailureKind::Reasoning);
        }
        let reference = execute(gt.program, scene, gt.grounder, config);
        let n = trace.steps.len().max(reference.steps.len());
        for i in 0..n {
            let (a, b) = (trace.steps.get(i), reference.steps.get(i));
            if a.map(|s| &s.output) != b.map(|s| &s.output) {
                if a.or(b).is_some_and(|s| s.op.needs_grounding()) {
                    return Some(FailureKind::Perception);
                }
                break;
            }
        }
        if trace.failure().is_some() && reference.failure().is_none() {
            let failed_op = trace.failure().and_then(|f| gt.program.post_order().get(f.step).map(|p| p.primitive));
            if failed_op.is_some_and(|op| op.needs_grounding()) {
                return Some(FailureKind::Perception);
            }
        }
    }
    match (trace.answer(), trace.failure()) {
        (Some(ExecValue::Action(a)), _) if check_action(a, scene).is_err() => Some(FailureKind::Grasping),
        (_, Some(report)) => Some(report.kind),
        _ => None,
    }
}
