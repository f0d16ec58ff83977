//! Step-by-step program execution with traces and typed failures.
//!
//! Programs run over their linear form with an operand stack, the same
//! discipline [`crate::program::delinearize`] uses, so step `i` of a trace is
//! node `i` of the tree in post-order. Execution halts at the first failing
//! step.

mod actions;
mod cache;
mod diagnose;
mod dialogue;
mod world;

pub use actions::{check_action, place_pose_for, sort_poses, ActionCheckError, ActionCommand, PlacePose, CLEARANCE};
pub use cache::ScoreCache;
pub use diagnose::{classify_failure, GroundTruth};
pub use dialogue::{restructure_with_feedback, Dialogue, DialogueError, RestructureError, Speaker, Turn};
pub use world::{execute_in_world, ScriptedWorld, StaticWorld, WorldState};

use crate::grounding::{AttrType, ConceptKind, ConceptMemory, Grounder, GroundingError};
use crate::program::{Primitive, Program, Step};
use crate::relations::{HyperRelationConcept, RelationConcept};
use crate::scene::{round9, ObjectId, SceneGraph};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum ExecValue {
    /// Sorted, duplicate free.
    ObjSet(Vec<ObjectId>),
    Obj(ObjectId),
    Int(i64),
    Bool(bool),
    Concept(String),
    Action(ActionCommand),
}

impl ExecValue {
    pub fn type_name(&self) -> &'static str {
        match self {
            ExecValue::ObjSet(_) => "obj_set",
            ExecValue::Obj(_) => "obj",
            ExecValue::Int(_) => "int",
            ExecValue::Bool(_) => "bool",
            ExecValue::Concept(_) => "concept",
            ExecValue::Action(_) => "action",
        }
    }

    /// Objects highlighted by this value, if it denotes objects.
    pub fn objects(&self) -> Option<Vec<ObjectId>> {
        match self {
            ExecValue::ObjSet(v) => Some(v.clone()),
            ExecValue::Obj(n) => Some(vec![*n]),
            _ => None,
        }
    }
}

impl fmt::Display for ExecValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExecValue::ObjSet(v) => {
                let ids: Vec<String> = v.iter().map(|i| i.to_string()).collect();
                write!(f, "{{{}}}", ids.join(", "))
            }
            ExecValue::Obj(n) => write!(f, "object {n}"),
            ExecValue::Int(i) => write!(f, "{i}"),
            ExecValue::Bool(b) => f.write_str(if *b { "yes" } else { "no" }),
            ExecValue::Concept(c) => f.write_str(c),
            ExecValue::Action(a) => write!(f, "{a}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureKind {
    Perception,
    Reasoning,
    Grasping,
    IllPosed,
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureReport {
    pub kind: FailureKind,
    /// Index of the failing step.
    pub step: usize,
    /// Response shown to the user.
    pub message: String,
    /// Candidate referents (ill-posed `unique`).
    #[serde(default)]
    pub candidates: Vec<ObjectId>,
}

/// Rendering of an object-valued output: ids with their top-down footprints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskEntry {
    pub id: ObjectId,
    /// `[x_min, y_min, x_max, y_max]`, normalised.
    pub footprint: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub index: usize,
    pub op: Primitive,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concept: Option<String>,
    /// Indices of the steps whose outputs are this step's inputs.
    pub inputs: Vec<usize>,
    pub output: ExecValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<MaskEntry>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TraceStatus {
    Success { answer: ExecValue },
    Failure { report: FailureReport },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub program: String,
    pub steps: Vec<TraceStep>,
    #[serde(flatten)]
    pub status: TraceStatus,
    /// Re-executions triggered by a changed world state.
    #[serde(default)]
    pub reruns: usize,
}

impl ExecutionTrace {
    pub fn answer(&self) -> Option<&ExecValue> {
        match &self.status {
            TraceStatus::Success { answer } => Some(answer),
            TraceStatus::Failure { .. } => None,
        }
    }

    pub fn failure(&self) -> Option<&FailureReport> {
        match &self.status {
            TraceStatus::Failure { report } => Some(report),
            TraceStatus::Success { .. } => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serialisation is infallible")
    }

    /// Plain-text rendering, one line per step.
    pub fn render(&self) -> String {
        let mut out = format!("program: {}\n", self.program);
        for s in &self.steps {
            let call = Step { op: s.op, concept: s.concept.clone() }.to_string();
            out.push_str(&format!("  [{}] {:<28} -> {}\n", s.index, call, s.output));
        }
        match &self.status {
            TraceStatus::Success { answer } => out.push_str(&format!("answer: {answer}\n")),
            TraceStatus::Failure { report } => {
                out.push_str(&format!("failure ({}) at step {}: {}\n", report.kind, report.step, report.message))
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecConfig {
    /// Filter margin below the best score.
    pub gamma: f64,
    /// Minimum score for a filter to keep an object.
    pub score_floor: f64,
    /// Precompute all grounding scores before running the steps.
    pub batched: bool,
    /// Re-executions allowed when the world changes before an action.
    pub max_reruns: usize,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig { gamma: 0.05, score_floor: 0.5, batched: false, max_reruns: 3 }
    }
}

/// Execute a type-correct program.
pub fn execute<G: Grounder + ?Sized>(program: &Program, scene: &SceneGraph, grounder: &G, config: &ExecConfig) -> ExecutionTrace {
    let steps = program.linearize();
    if config.batched {
        let cache = ScoreCache::build(&steps, scene, grounder);
        run(program, &steps, scene, &cache, config)
    } else {
        run(program, &steps, scene, grounder, config)
    }
}

struct Failed {
    kind: FailureKind,
    message: String,
    candidates: Vec<ObjectId>,
}

impl Failed {
    fn ill_posed(message: impl Into<String>) -> Self {
        Failed { kind: FailureKind::IllPosed, message: message.into(), candidates: vec![] }
    }
}

impl From<GroundingError> for Failed {
    fn from(e: GroundingError) -> Self {
        Failed::ill_posed(format!("I cannot ground that request: {e}."))
    }
}

fn run<G: Grounder + ?Sized>(program: &Program, steps: &[Step], scene: &SceneGraph, g: &G, config: &ExecConfig) -> ExecutionTrace {
    let nodes = program.post_order();
    let mut trace = Vec::with_capacity(steps.len());
    let mut stack: Vec<usize> = Vec::new();
    let mut current: Option<usize> = None;
    let mut outputs: Vec<ExecValue> = Vec::with_capacity(steps.len());
    for (i, step) in steps.iter().enumerate() {
        let inputs: Vec<usize> = match step.op.arity() {
            0 => {
                if let Some(c) = current.take() {
                    stack.push(c);
                }
                vec![]
            }
            1 => current.take().into_iter().collect(),
            _ => {
                let right = current.take();
                let left = stack.pop();
                left.into_iter().chain(right).collect()
            }
        };
        if inputs.len() != step.op.arity() {
            let report = FailureReport {
                kind: FailureKind::Reasoning,
                step: i,
                message: format!("The program is malformed at step {i} ({}).", step.op),
                candidates: vec![],
            };
            return finish(program, trace, TraceStatus::Failure { report });
        }
        let args: Vec<&ExecValue> = inputs.iter().map(|&j| &outputs[j]).collect();
        match eval(step, &args, nodes[i], scene, g, config) {
            Ok(out) => {
                let mask = out.objects().map(|ids| {
                    ids.iter().map(|&id| MaskEntry { id, footprint: scene.objects[id].bbox.footprint().map(round9) }).collect()
                });
                trace.push(TraceStep {
                    index: i,
                    op: step.op,
                    concept: step.concept.clone(),
                    inputs,
                    output: out.clone(),
                    mask,
                });
                outputs.push(out);
                current = Some(i);
            }
            Err(f) => {
                let report = FailureReport { kind: f.kind, step: i, message: f.message, candidates: f.candidates };
                return finish(program, trace, TraceStatus::Failure { report });
            }
        }
    }
    let answer = current.map(|c| outputs[c].clone());
    let status = match (answer, stack.is_empty()) {
        (Some(answer), true) => TraceStatus::Success { answer },
        _ => TraceStatus::Failure {
            report: FailureReport {
                kind: FailureKind::Reasoning,
                step: steps.len().saturating_sub(1),
                message: "The program left unused operands.".into(),
                candidates: vec![],
            },
        },
    };
    finish(program, trace, status)
}

fn finish(program: &Program, steps: Vec<TraceStep>, status: TraceStatus) -> ExecutionTrace {
    ExecutionTrace { program: program.to_text(), steps, status, reruns: 0 }
}

fn type_error(step: &Step, args: &[&ExecValue]) -> Failed {
    let got: Vec<&str> = args.iter().map(|a| a.type_name()).collect();
    Failed {
        kind: FailureKind::Reasoning,
        message: format!("Step {} received inputs of the wrong type ({}).", step.op, got.join(", ")),
        candidates: vec![],
    }
}

fn concept_arg(step: &Step) -> Result<&str, Failed> {
    step.concept.as_deref().ok_or_else(|| Failed {
        kind: FailureKind::Reasoning,
        message: format!("Step {} is missing its concept argument.", step.op),
        candidates: vec![],
    })
}

fn relation_arg(step: &Step) -> Result<RelationConcept, Failed> {
    let c = concept_arg(step)?;
    c.parse().map_err(|_| Failed::ill_posed(format!("I do not know the spatial concept \"{c}\".")))
}

/// Attribute type a filter argument is grounded against.
pub(crate) fn filter_attr(op: Primitive, concept: &str, memory: &ConceptMemory) -> AttrType {
    match op {
        Primitive::FilterCategory => memory.category_like(concept).unwrap_or(AttrType::Category),
        _ => op.attribute().expect("filter primitive has an attribute"),
    }
}

pub(crate) fn margin_filter<G: Grounder + ?Sized>(
    set: &[ObjectId],
    attr: AttrType,
    concept: &str,
    scene: &SceneGraph,
    g: &G,
    config: &ExecConfig,
) -> Result<Vec<ObjectId>, GroundingError> {
    let scores = set.iter().map(|&n| g.attr_score(scene, n, attr, concept)).collect::<Result<Vec<f64>, _>>()?;
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(set
        .iter()
        .zip(&scores)
        .filter(|&(_, &s)| s >= best - config.gamma && s >= config.score_floor)
        .map(|(&n, _)| n)
        .collect())
}

pub(crate) fn query<G: Grounder + ?Sized>(
    n: ObjectId,
    attr: AttrType,
    scene: &SceneGraph,
    g: &G,
) -> Result<String, GroundingError> {
    let mut best: Option<(f64, &str)> = None;
    for c in g.memory().values(attr) {
        let s = g.attr_score(scene, n, attr, c)?;
        if best.is_none_or(|(b, _)| s > b) {
            best = Some((s, c));
        }
    }
    Ok(best.map(|(_, c)| c.to_string()).unwrap_or_default())
}

fn eval<G: Grounder + ?Sized>(
    step: &Step,
    args: &[&ExecValue],
    node: &Program,
    scene: &SceneGraph,
    g: &G,
    config: &ExecConfig,
) -> Result<ExecValue, Failed> {
    use ExecValue as V;
    use Primitive::*;
    let all: Vec<ObjectId> = scene.ids().collect();
    Ok(match (step.op, args) {
        (Scene, []) => V::ObjSet(all),
        (Unique, [V::ObjSet(s)]) => match s.as_slice() {
            [one] => V::Obj(*one),
            _ => return Err(unique_failure(s, node, g.memory())),
        },
        (FilterCategory | FilterColor | FilterMaterial, [V::ObjSet(s)]) => {
            let c = concept_arg(step)?;
            let attr = filter_attr(step.op, c, g.memory());
            V::ObjSet(margin_filter(s, attr, c, scene, g, config)?)
        }
        (QueryCategory | QueryColor | QueryMaterial, [V::Obj(n)]) => {
            V::Concept(query(*n, step.op.attribute().expect("query attribute"), scene, g)?)
        }
        (SameCategory | SameColor | SameMaterial, [V::Obj(n)]) => {
            let attr = step.op.attribute().expect("same attribute");
            let value = query(*n, attr, scene, g)?;
            let others: Vec<ObjectId> = all.iter().copied().filter(|m| m != n).collect();
            V::ObjSet(margin_filter(&others, attr, &value, scene, g, config)?)
        }
        (Relate, [V::Obj(m)]) => {
            let r = relation_arg(step)?;
            let mut out = Vec::new();
            for n in all.iter().copied().filter(|n| n != m) {
                if g.rel_score(scene, n, *m, r)? >= 0.5 {
                    out.push(n);
                }
            }
            V::ObjSet(out)
        }
        (Locate, [V::ObjSet(s)]) => {
            let c = concept_arg(step)?;
            let r: RelationConcept =
                c.parse().map_err(|_| Failed::ill_posed(format!("I do not know the location \"{c}\".")))?;
            if s.is_empty() {
                return Err(Failed::ill_posed(format!(
                    "There is no {} to pick the {} one from.",
                    describe(&node.children[0], g.memory()),
                    location_word(r)
                )));
            }
            let mut best: Option<(f64, ObjectId)> = None;
            for &n in s {
                let mut score = 0.0;
                for &m in s.iter().filter(|&&m| m != n) {
                    score += g.rel_score(scene, n, m, r)?;
                }
                if best.is_none_or(|(b, _)| score > b) {
                    best = Some((score, n));
                }
            }
            V::Obj(best.expect("non-empty set").1)
        }
        (HyperRelate, [V::Obj(m1), V::Obj(m2)]) => {
            let c = concept_arg(step)?;
            let h: HyperRelationConcept =
                c.parse().map_err(|_| Failed::ill_posed(format!("I do not know the spatial concept \"{c}\".")))?;
            if m1 == m2 {
                return Err(Failed {
                    kind: FailureKind::IllPosed,
                    message: format!("Both reference objects of \"{}\" are the same object.", h.name().replace('_', " ")),
                    candidates: vec![*m1],
                });
            }
            let mut out = Vec::new();
            for n in all.iter().copied().filter(|n| n != m1 && n != m2) {
                if g.hyper_score(scene, n, *m1, *m2, h)? >= 0.5 {
                    out.push(n);
                }
            }
            V::ObjSet(out)
        }
        (And, [V::ObjSet(a), V::ObjSet(b)]) => V::ObjSet(a.iter().copied().filter(|x| b.contains(x)).collect()),
        (Or, [V::ObjSet(a), V::ObjSet(b)]) => {
            let mut u: Vec<ObjectId> = a.iter().chain(b).copied().collect();
            u.sort_unstable();
            u.dedup();
            V::ObjSet(u)
        }
        (Exist, [V::ObjSet(s)]) => V::Bool(!s.is_empty()),
        (Count, [V::ObjSet(s)]) => V::Int(s.len() as i64),
        (EqualInteger, [V::Int(a), V::Int(b)]) => V::Bool(a == b),
        (Greater, [V::Int(a), V::Int(b)]) => V::Bool(a > b),
        (Less, [V::Int(a), V::Int(b)]) => V::Bool(a < b),
        (EqualCategory | EqualColor | EqualMaterial, [V::Concept(a), V::Concept(b)]) => V::Bool(a == b),
        (Grasp, [V::Obj(n)]) => {
            V::Action(ActionCommand::Grasp { object_id: *n, grasp: scene.objects[*n].grasp })
        }
        (PickAndPlace, [V::Obj(pick), V::Obj(reference)]) => {
            let r = relation_arg(step)?;
            if pick == reference {
                return Err(Failed {
                    kind: FailureKind::IllPosed,
                    message: "The object to move and the reference object are the same.".into(),
                    candidates: vec![*pick],
                });
            }
            let pose = place_pose_for(scene, *pick, *reference, r).map_err(|e| Failed {
                kind: e.kind(),
                message: e.to_string(),
                candidates: vec![*pick, *reference],
            })?;
            V::Action(ActionCommand::PickPlace { pick_id: *pick, ref_id: *reference, relation: r, place_pose: pose })
        }
        (Sort, [V::ObjSet(s), V::Obj(container)]) => {
            let items: Vec<ObjectId> = s.iter().copied().filter(|n| n != container).collect();
            if items.is_empty() {
                return Err(Failed::ill_posed("There is nothing to sort into the container."));
            }
            let poses = sort_poses(scene, &items, *container);
            V::Action(ActionCommand::Sort { object_ids: items, container_id: *container, place_poses: poses })
        }
        _ => return Err(type_error(step, args)),
    })
}

fn location_word(r: RelationConcept) -> &'static str {
    match r {
        RelationConcept::Left => "leftmost",
        RelationConcept::Right => "rightmost",
        RelationConcept::Behind | RelationConcept::Further => "farthest",
        RelationConcept::Front | RelationConcept::Closer => "closest",
        RelationConcept::Bigger => "biggest",
        RelationConcept::Smaller => "smallest",
        RelationConcept::Next => "nearby",
    }
}

/// Short noun phrase for the objects a subprogram selects, e.g. "red soda".
pub fn describe(node: &Program, memory: &ConceptMemory) -> String {
    let mut color = None;
    let mut material = None;
    let mut noun = None;
    let mut qualified = false;
    let mut cur = node;
    loop {
        match cur.primitive {
            Primitive::FilterColor => color = color.or(cur.concept.as_deref()),
            Primitive::FilterMaterial => material = material.or(cur.concept.as_deref()),
            Primitive::FilterCategory => noun = noun.or(cur.concept.as_deref()),
            Primitive::Scene => break,
            _ => {
                qualified = true;
                break;
            }
        }
        match cur.children.first() {
            Some(c) => cur = c,
            None => break,
        }
    }
    let noun = noun
        .map(|n| {
            let kind = ConceptKind::Attr(memory.category_like(n).unwrap_or(AttrType::Category));
            memory.surface(kind, n).map(str::to_string).unwrap_or_else(|| n.replace('_', " "))
        })
        .unwrap_or_else(|| "object".to_string());
    let mut words: Vec<String> = Vec::new();
    words.extend(color.map(str::to_string));
    words.extend(material.map(str::to_string));
    words.push(noun);
    let mut s = words.join(" ");
    if qualified {
        s.push_str(" matching that description");
    }
    s
}

fn unique_failure(set: &[ObjectId], node: &Program, memory: &ConceptMemory) -> Failed {
    let desc = describe(&node.children[0], memory);
    let message = if set.is_empty() {
        format!("There is no {desc} here.")
    } else {
        let ids: Vec<String> = set.iter().map(|i| i.to_string()).collect();
        format!(
            "I found {} objects that match \"{desc}\" (objects {}). Which one do you mean?",
            set.len(),
            ids.join(", ")
        )
    };
    Failed { kind: FailureKind::IllPosed, message, candidates: set.to_vec() }
}
