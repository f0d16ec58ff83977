use super::{execute, ExecConfig, ExecutionTrace, FailureKind, FailureReport, TraceStatus};
use crate::grounding::{ConceptMemory, Grounder};
use crate::parser::{self, Grammar, ParseError, Span, TagType};
use crate::program::{Primitive, Program, ProgramError};
use crate::scene::SceneGraph;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RestructureError {
    #[error("the feedback names nothing new")]
    NoNewConcepts,
    #[error("only an ill-posed unique step can be restructured")]
    NotApplicable,
    #[error(transparent)]
    Program(#[from] ProgramError),
}

/// Rewrite a program whose `unique` step failed, using concepts found in the
/// user's feedback. Attribute concepts become filters directly below the
/// failing `unique`; a location turns it into `locate`; a relation followed
/// by an anchor description intersects the candidates with `relate`.
pub fn restructure_with_feedback(
    program: &Program,
    failure: &FailureReport,
    feedback: &str,
    memory: &ConceptMemory,
) -> Result<Program, RestructureError> {
    let nodes = program.post_order();
    let target = nodes.get(failure.step).ok_or(RestructureError::NotApplicable)?;
    if failure.kind != FailureKind::IllPosed || target.primitive != Primitive::Unique {
        return Err(RestructureError::NotApplicable);
    }
    let tagged = parser::tag(feedback, memory);
    let existing = chain_filters(&target.children[0]);

    let rel_at = tagged.spans.iter().position(|s| s.tag == TagType::Relation);
    let (own, anchor) = match rel_at {
        Some(i) => (&tagged.spans[..i], Some((&tagged.spans[i], &tagged.spans[i + 1..]))),
        None => (&tagged.spans[..], None),
    };

    let mut set = target.children[0].clone();
    let mut changed = false;
    let mut location = None;
    for s in own {
        match s.tag {
            TagType::Location => location = location.or(Some(s.concept.value.clone())),
            _ => {
                if let Some(op) = filter_op(s) {
                    if !existing.contains(&(op, s.concept.value.clone())) {
                        set = Program::wrap(op, Some(&s.concept.value), set);
                        changed = true;
                    }
                }
            }
        }
    }
    if let Some((rel, anchor_spans)) = anchor {
        let mut filters: Vec<(Primitive, &str)> = anchor_spans.iter().filter_map(|s| Some((filter_op(s)?, s.concept.value.as_str()))).collect();
        filters.sort_by_key(|(op, _)| *op as u8);
        let described = !filters.is_empty();
        let anchor = filters.into_iter().fold(Program::scene(), |p, (op, c)| Program::wrap(op, Some(c), p));
        let anchor_loc = anchor_spans.iter().find(|s| s.tag == TagType::Location).map(|s| s.concept.value.clone());
        if described || anchor_loc.is_some() {
            let anchor = match anchor_loc {
                Some(l) => Program::wrap(Primitive::Locate, Some(&l), anchor),
                None => Program::wrap(Primitive::Unique, None, anchor),
            };
            let related = Program::wrap(Primitive::Relate, Some(&rel.concept.value), anchor);
            set = Program::new(Primitive::And, None, vec![set, related]);
            changed = true;
        }
    }
    let replacement = match location {
        Some(l) => {
            changed = true;
            Program::wrap(Primitive::Locate, Some(&l), set)
        }
        None => Program::wrap(Primitive::Unique, None, set),
    };
    if !changed {
        return Err(RestructureError::NoNewConcepts);
    }
    let mut counter = 0;
    let out = replace_at(program, failure.step, &replacement, &mut counter);
    out.typecheck().map_err(ProgramError::Type)?;
    Ok(out)
}

fn filter_op(s: &Span) -> Option<Primitive> {
    match s.tag {
        TagType::Category | TagType::Open => Some(Primitive::FilterCategory),
        TagType::Color => Some(Primitive::FilterColor),
        TagType::Material => Some(Primitive::FilterMaterial),
        _ => None,
    }
}

/// Filters applied along the first-child chain of a set expression.
fn chain_filters(p: &Program) -> Vec<(Primitive, String)> {
    let mut out = Vec::new();
    let mut cur = Some(p);
    while let Some(n) = cur {
        if let (Primitive::FilterCategory | Primitive::FilterColor | Primitive::FilterMaterial, Some(c)) =
            (n.primitive, &n.concept)
        {
            out.push((n.primitive, c.clone()));
        }
        cur = n.children.first();
    }
    out
}

fn replace_at(p: &Program, target: usize, with: &Program, counter: &mut usize) -> Program {
    let children: Vec<Program> = p.children.iter().map(|c| replace_at(c, target, with, counter)).collect();
    let index = *counter;
    *counter += 1;
    if index == target {
        with.clone()
    } else {
        Program { primitive: p.primitive, concept: p.concept.clone(), children }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    System,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DialogueError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("there is no pending failure to give feedback on")]
    NoPendingFailure,
    #[error(transparent)]
    Restructure(#[from] RestructureError),
}

impl DialogueError {
    /// Reply shown to the user.
    pub fn response(&self) -> String {
        match self {
            DialogueError::Parse(e) => e.response(),
            DialogueError::NoPendingFailure => "There is nothing to clarify right now.".into(),
            DialogueError::Restructure(RestructureError::NoNewConcepts) => {
                "I did not find anything new in that. Could you describe the object differently?".into()
            }
            DialogueError::Restructure(e) => format!("I could not use that feedback: {e}."),
        }
    }
}

/// One clarification dialogue over a fixed scene. The transcript only
/// grows; at most one ill-posed failure is pending at a time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub scene: SceneGraph,
    pub program: Option<Program>,
    pub trace: Option<ExecutionTrace>,
    pub pending: Option<FailureReport>,
    pub transcript: Vec<Turn>,
}

impl Dialogue {
    pub fn new(scene: SceneGraph) -> Self {
        Dialogue { scene, program: None, trace: None, pending: None, transcript: Vec::new() }
    }

    /// Parse and run a new query. Parse errors are answered in the
    /// transcript and leave the rest of the state untouched.
    pub fn query<G: Grounder + ?Sized>(
        &mut self,
        text: &str,
        grammar: &Grammar,
        grounder: &G,
        config: &ExecConfig,
    ) -> Result<&ExecutionTrace, DialogueError> {
        self.say(Speaker::User, text);
        let program = match parser::parse(text, grounder.memory(), grammar) {
            Ok(p) => p,
            Err(e) => {
                let e = DialogueError::from(e);
                self.say(Speaker::System, &e.response());
                return Err(e);
            }
        };
        Ok(self.run(program, grounder, config))
    }

    /// Apply feedback to the pending failure and re-run.
    pub fn feedback<G: Grounder + ?Sized>(
        &mut self,
        text: &str,
        grounder: &G,
        config: &ExecConfig,
    ) -> Result<&ExecutionTrace, DialogueError> {
        let (Some(failure), Some(program)) = (self.pending.clone(), self.program.clone()) else {
            return Err(DialogueError::NoPendingFailure);
        };
        self.say(Speaker::User, text);
        match restructure_with_feedback(&program, &failure, text, grounder.memory()) {
            Ok(p) => Ok(self.run(p, grounder, config)),
            Err(e) => {
                let e = DialogueError::from(e);
                self.say(Speaker::System, &e.response());
                Err(e)
            }
        }
    }

    fn run<G: Grounder + ?Sized>(&mut self, program: Program, grounder: &G, config: &ExecConfig) -> &ExecutionTrace {
        let trace = execute(&program, &self.scene, grounder, config);
        let reply = match &trace.status {
            TraceStatus::Success { answer } => answer.to_string(),
            TraceStatus::Failure { report } => report.message.clone(),
        };
        self.pending = trace.failure().filter(|f| f.kind == FailureKind::IllPosed && is_unique(&program, f.step)).cloned();
        self.say(Speaker::System, &reply);
        self.program = Some(program);
        self.trace.insert(trace)
    }

    fn say(&mut self, speaker: Speaker, text: &str) {
        self.transcript.push(Turn { speaker, text: text.to_string() });
    }
}

fn is_unique(p: &Program, step: usize) -> bool {
    p.post_order().get(step).is_some_and(|n| n.primitive == Primitive::Unique)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::tests::obj;
    use crate::executor::{ActionCommand, ExecValue};
    use crate::grounding::OracleGrounder;
    use crate::relations::fixtures::scene;

    fn two_sodas() -> SceneGraph {
        scene(vec![
            obj(0, "soda", "red", [0.3, 0.4], [0.066, 0.066, 0.12]),
            obj(1, "soda", "blue", [0.7, 0.4], [0.066, 0.066, 0.12]),
            obj(2, "bowl", "white", [0.5, 0.7], [0.15, 0.15, 0.06]),
        ])
    }

    fn fail(program: &Program, s: &SceneGraph) -> FailureReport {
        let t = execute(program, s, &OracleGrounder::default(), &ExecConfig::default());
        t.failure().cloned().expect("ill-posed")
    }

    #[test]
    fn attribute_feedback_inserts_filter_below_unique() {
        let p: Program = "grasp(unique(filter_category(scene(),'soda')))".parse().unwrap();
        let f = fail(&p, &two_sodas());
        assert_eq!(f.candidates, vec![0, 1]);
        let q = restructure_with_feedback(&p, &f, "the red one", &ConceptMemory::training()).unwrap();
        assert_eq!(q.to_text(), "grasp(unique(filter_color(filter_category(scene(),'soda'),'red')))");
    }

    #[test]
    fn nothing_new_is_reported() {
        let p: Program = "grasp(unique(filter_category(scene(),'soda')))".parse().unwrap();
        let f = fail(&p, &two_sodas());
        let m = ConceptMemory::training();
        assert_eq!(restructure_with_feedback(&p, &f, "that one please", &m), Err(RestructureError::NoNewConcepts));
        assert_eq!(restructure_with_feedback(&p, &f, "the soda", &m), Err(RestructureError::NoNewConcepts));
    }

    #[test]
    fn location_feedback_becomes_locate() {
        let p: Program = "grasp(unique(filter_category(scene(),'soda')))".parse().unwrap();
        let s = two_sodas();
        let f = fail(&p, &s);
        let q = restructure_with_feedback(&p, &f, "the leftmost", &ConceptMemory::training()).unwrap();
        assert_eq!(q.to_text(), "grasp(locate(filter_category(scene(),'soda'),'left'))");
        let t = execute(&q, &s, &OracleGrounder::default(), &ExecConfig::default());
        assert!(matches!(t.answer(), Some(ExecValue::Action(ActionCommand::Grasp { object_id: 0, .. }))));
    }

    #[test]
    fn relation_feedback_with_anchor() {
        let p: Program = "grasp(unique(filter_category(scene(),'soda')))".parse().unwrap();
        let s = two_sodas();
        let f = fail(&p, &s);
        let q = restructure_with_feedback(&p, &f, "the one right of the red soda", &ConceptMemory::training()).unwrap();
        assert_eq!(
            q.to_text(),
            "grasp(unique(and(filter_category(scene(),'soda'),relate(unique(filter_color(filter_category(scene(),'soda'),'red')),'right'))))"
        );
        let t = execute(&q, &s, &OracleGrounder::default(), &ExecConfig::default());
        assert!(matches!(t.answer(), Some(ExecValue::Action(ActionCommand::Grasp { object_id: 1, .. }))));
    }

    #[test]
    fn only_ill_posed_unique_is_restructured() {
        let p: Program = "count(scene())".parse().unwrap();
        let f = FailureReport { kind: FailureKind::IllPosed, step: 0, message: String::new(), candidates: vec![] };
        assert_eq!(restructure_with_feedback(&p, &f, "red", &ConceptMemory::training()), Err(RestructureError::NotApplicable));
    }

    #[test]
    fn dialogue_reaches_the_grasp() {
        let g = OracleGrounder::new(ConceptMemory::training(), Default::default());
        let grammar = Grammar::builtin();
        let cfg = ExecConfig::default();
        let mut d = Dialogue::new(two_sodas());
        assert!(matches!(d.feedback("red", &g, &cfg), Err(DialogueError::NoPendingFailure)));
        let t = d.query("grasp the soda", &grammar, &g, &cfg).unwrap();
        assert_eq!(t.failure().map(|f| f.kind), Some(FailureKind::IllPosed));
        assert!(d.pending.is_some());
        let t = d.feedback("the red one", &g, &cfg).unwrap();
        assert!(matches!(t.answer(), Some(ExecValue::Action(ActionCommand::Grasp { object_id: 0, .. }))));
        assert!(d.pending.is_none());
        assert_eq!(d.transcript.len(), 4);
        assert!(d.transcript[1].text.contains("Which one do you mean?"));
        assert!(matches!(d.query("blorp", &grammar, &g, &cfg), Err(DialogueError::Parse(_))));
        assert_eq!(d.transcript.len(), 6);
    }
}
