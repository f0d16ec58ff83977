//! Natural-language queries to programs.
//!
//! Three stages: a lexicon tagger producing IOB tags, a matcher that finds
//! the first grammar template accepting the abstracted token sequence, and a
//! linear sum assignment that binds tagged spans to the skeleton's concept
//! arguments.

mod grammar;
mod lsa;

pub use grammar::{Elem, FamilyInfo, Grammar, GrammarError, Link, Role, Skel, SlotKey, SlotType, Template};
pub use lsa::{hungarian, Assignment, LsaError, ScoreMatrix};

use crate::grounding::{normalize, AttrType, Concept, ConceptKind, ConceptMemory};
use crate::program::{delinearize, format_steps, Program, ProgramError, Step};
use serde::{Serialize, Serializer};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum TagType {
    Category,
    Color,
    Material,
    Relation,
    Location,
    HyperRelation,
    Open,
}

impl TagType {
    pub fn of(kind: ConceptKind) -> Option<TagType> {
        Some(match kind {
            ConceptKind::Attr(AttrType::Category) => TagType::Category,
            ConceptKind::Attr(AttrType::Color) => TagType::Color,
            ConceptKind::Attr(AttrType::Material) => TagType::Material,
            ConceptKind::Attr(AttrType::Instance) => TagType::Open,
            ConceptKind::Attr(AttrType::Supercategory) => return None,
            ConceptKind::Relation => TagType::Relation,
            ConceptKind::Location => TagType::Location,
            ConceptKind::HyperRelation => TagType::HyperRelation,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            TagType::Category => "Category",
            TagType::Color => "Color",
            TagType::Material => "Material",
            TagType::Relation => "Relation",
            TagType::Location => "Location",
            TagType::HyperRelation => "HyperRelation",
            TagType::Open => "Open",
        }
    }

    /// Span types that may fill an argument of the given concept kind.
    pub fn admissible(kind: ConceptKind) -> &'static [TagType] {
        match kind {
            ConceptKind::Attr(AttrType::Category) => &[TagType::Category, TagType::Open],
            ConceptKind::Attr(AttrType::Color) => &[TagType::Color],
            ConceptKind::Attr(AttrType::Material) => &[TagType::Material],
            ConceptKind::Attr(_) => &[],
            ConceptKind::Relation => &[TagType::Relation],
            ConceptKind::Location => &[TagType::Location],
            ConceptKind::HyperRelation => &[TagType::HyperRelation],
        }
    }
}

impl fmt::Display for TagType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IobTag {
    O,
    B(TagType),
    I(TagType),
}

impl fmt::Display for IobTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IobTag::O => f.write_str("O"),
            IobTag::B(t) => write!(f, "B-{t}"),
            IobTag::I(t) => write!(f, "I-{t}"),
        }
    }
}

impl Serialize for IobTag {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// A tagged phrase: token range `[start, end)` and its resolved concept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Span {
    pub tag: TagType,
    pub concept: Concept,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaggedQuery {
    pub tokens: Vec<String>,
    pub tags: Vec<IobTag>,
    pub spans: Vec<Span>,
}

impl TaggedQuery {
    /// Token sequence with every span replaced by `[Type]`.
    pub fn abstracted(&self) -> String {
        self.items()
            .iter()
            .map(|it| match it {
                Item::Word(i) => self.tokens[*i].clone(),
                Item::Span(s) => format!("[{}]", self.spans[*s].tag),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn items(&self) -> Vec<Item> {
        let mut items = Vec::with_capacity(self.tokens.len());
        let mut i = 0;
        let mut spans = self.spans.iter().enumerate().peekable();
        while i < self.tokens.len() {
            match spans.peek() {
                Some((k, s)) if s.start == i => {
                    items.push(Item::Span(*k));
                    i = s.end;
                    spans.next();
                }
                _ => {
                    items.push(Item::Word(i));
                    i += 1;
                }
            }
        }
        items
    }

    /// Whether the tags form a legal IOB sequence consistent with the spans.
    pub fn is_valid(&self) -> bool {
        if self.tags.len() != self.tokens.len() {
            return false;
        }
        let mut prev: Option<TagType> = None;
        for t in &self.tags {
            match t {
                IobTag::I(ty) if prev != Some(*ty) => return false,
                IobTag::O => prev = None,
                IobTag::B(ty) | IobTag::I(ty) => prev = Some(*ty),
            }
        }
        self.spans.windows(2).all(|w| w[0].end <= w[1].start)
            && self.spans.iter().all(|s| s.start < s.end && self.tags[s.start] == IobTag::B(s.tag))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Item {
    Word(usize),
    Span(usize),
}

const FILLERS: &[&str] = &["thing", "things", "object", "objects", "one", "ones", "item", "items"];

/// Tag a query against the lexicon: normalise, strip plurals, then greedy
/// longest match. A phrase with several senses (such as "orange") is read
/// as an adjective when a noun follows and as a noun otherwise.
pub fn tag(text: &str, memory: &ConceptMemory) -> TaggedQuery {
    let tokens = normalize(text);
    let stems: Vec<String> = tokens.iter().map(|t| memory.singularize(t)).collect();
    let longest = |i: usize| -> Option<(usize, Vec<&Concept>)> {
        let max = memory.max_phrase_len().min(tokens.len().saturating_sub(i));
        (1..=max).rev().find_map(|len| {
            let senses: Vec<&Concept> =
                memory.senses(&stems[i..i + len]).iter().filter(|c| TagType::of(c.kind).is_some()).collect();
            (!senses.is_empty()).then_some((len, senses))
        })
    };
    let mut tags = Vec::with_capacity(tokens.len());
    let mut spans = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let Some((len, senses)) = longest(i) else {
            tags.push(IobTag::O);
            i += 1;
            continue;
        };
        let concept = if senses.len() == 1 {
            senses[0]
        } else {
            let next = i + len;
            let noun_follows = next < tokens.len()
                && (FILLERS.contains(&tokens[next].as_str())
                    || longest(next).is_some_and(|(_, s)| {
                        s.iter().any(|c| matches!(TagType::of(c.kind), Some(TagType::Category | TagType::Open | TagType::Material)))
                    }));
            let adjective = |c: &&Concept| matches!(TagType::of(c.kind), Some(TagType::Color | TagType::Material));
            let pick = if noun_follows { senses.iter().find(|c| adjective(c)) } else { senses.iter().find(|c| !adjective(c)) };
            pick.copied().unwrap_or(senses[0])
        };
        let ty = TagType::of(concept.kind).expect("filtered to taggable senses");
        tags.push(IobTag::B(ty));
        tags.extend(std::iter::repeat_n(IobTag::I(ty), len - 1));
        spans.push(Span { tag: ty, concept: concept.clone(), start: i, end: i + len });
        i += len;
    }
    TaggedQuery { tokens, tags, spans }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("empty query")]
    Empty,
    #[error("no template matches `{abstracted}`")]
    NoTemplateMatch { abstracted: String },
    #[error("template `{template}`: cannot bind arguments, starved rows {rows:?}")]
    Infeasible { template: String, rows: Vec<usize> },
    #[error(transparent)]
    Program(#[from] ProgramError),
}

impl ParseError {
    /// Response shown to a user whose query could not be parsed.
    pub fn response(&self) -> String {
        match self {
            ParseError::Empty => "Please say something about the scene.".into(),
            ParseError::NoTemplateMatch { .. } | ParseError::Infeasible { .. } => {
                "Sorry, I could not understand that. Could you rephrase the request?".into()
            }
            ParseError::Program(e) => format!("Sorry, I could not turn that into a program: {e}"),
        }
    }
}

/// A row of the score matrix: a skeleton step and the slot it came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArgumentRow {
    pub step: usize,
    #[serde(serialize_with = "display")]
    pub slot: SlotKey,
    /// Token position the slot matched in the abstracted sequence.
    pub position: usize,
}

fn display<T: fmt::Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

/// Everything the parser did for one query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParseExplanation {
    pub tagged: TaggedQuery,
    pub abstracted: String,
    pub template: String,
    pub family: String,
    /// Linear skeleton with placeholder concepts.
    pub skeleton: Vec<Step>,
    pub rows: Vec<ArgumentRow>,
    /// Position of each span in the abstracted sequence.
    pub span_positions: Vec<usize>,
    pub matrix: ScoreMatrix,
    pub assignment: Assignment,
    pub program: Program,
}

impl ParseExplanation {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let tags: Vec<String> = self.tagged.tokens.iter().zip(&self.tagged.tags).map(|(w, t)| format!("{w}/{t}")).collect();
        out.push_str(&format!("tags:      {}\n", tags.join(" ")));
        out.push_str(&format!("abstract:  {}\n", self.abstracted));
        out.push_str(&format!("template:  {} ({})\n", self.template, self.family));
        out.push_str(&format!("skeleton:  {}\n", format_steps(&self.skeleton)));
        out.push_str("scores:\n");
        let head: Vec<String> = self
            .tagged
            .spans
            .iter()
            .map(|s| format!("{:>10}", truncate(&self.tagged.tokens[s.start..s.end].join(" "), 10)))
            .collect();
        out.push_str(&format!("  {:<22}{}\n", "", head.join("")));
        for (r, row) in self.rows.iter().enumerate() {
            let label = format!("{} {}", self.skeleton[row.step].op, row.slot);
            let cells: Vec<String> = (0..self.matrix.cols())
                .map(|c| {
                    let mark = if self.assignment.cols.get(r) == Some(&c) { "*" } else { " " };
                    if self.matrix.mask[r][c] {
                        format!("{:>9.3}{mark}", self.matrix.scores[r][c])
                    } else {
                        format!("{:>9}{mark}", "-")
                    }
                })
                .collect();
            out.push_str(&format!("  {:<22}{}\n", truncate(&label, 21), cells.join("")));
        }
        out.push_str(&format!("total:     {:.3}\n", self.assignment.total));
        out.push_str(&format!("program:   {}\n", self.program));
        out
    }
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

/// Parse a query into a program.
pub fn parse(text: &str, memory: &ConceptMemory, grammar: &Grammar) -> Result<Program, ParseError> {
    explain(text, memory, grammar).map(|e| e.program)
}

/// Parse and keep every intermediate result.
pub fn explain(text: &str, memory: &ConceptMemory, grammar: &Grammar) -> Result<ParseExplanation, ParseError> {
    let tagged = tag(text, memory);
    if tagged.tokens.is_empty() {
        return Err(ParseError::Empty);
    }
    let items = tagged.items();
    let abstracted = tagged.abstracted();
    let (template, binds) = grammar
        .templates()
        .iter()
        .find_map(|t| match_pattern(&t.pattern, &items, &tagged).map(|b| (t, b)))
        .ok_or_else(|| ParseError::NoTemplateMatch { abstracted: abstracted.clone() })?;

    let present: BTreeSet<SlotKey> = binds.keys().copied().collect();
    let mut skeleton = template.expand(&present).linearize();
    let span_positions: Vec<usize> = {
        let mut pos = vec![0; tagged.spans.len()];
        for (p, it) in items.iter().enumerate() {
            if let Item::Span(s) = it {
                pos[*s] = p;
            }
        }
        pos
    };
    let mut rows = Vec::new();
    let mut scores = Vec::new();
    let mut mask = Vec::new();
    for (i, step) in skeleton.iter().enumerate() {
        let Some(slot) = step.concept.as_deref().and_then(SlotKey::from_placeholder) else { continue };
        let kind = step.op.signature().concept.expect("placeholder only on concept-taking steps");
        let allowed = TagType::admissible(kind);
        let position = binds[&slot];
        rows.push(ArgumentRow { step: i, slot, position });
        scores.push(span_positions.iter().map(|&p| 1.0 / (1.0 + position.abs_diff(p) as f64)).collect::<Vec<f64>>());
        mask.push(tagged.spans.iter().map(|s| allowed.contains(&s.tag)).collect::<Vec<bool>>());
    }
    let matrix = ScoreMatrix::new(scores, mask);
    let assignment = hungarian(&matrix).map_err(|LsaError::Infeasible { rows }| ParseError::Infeasible {
        template: template.id.clone(),
        rows,
    })?;
    let template_steps = skeleton.clone();
    for (row, &col) in rows.iter().zip(&assignment.cols) {
        skeleton[row.step].concept = Some(tagged.spans[col].concept.value.clone());
    }
    let program = delinearize(&skeleton)?;
    program.typecheck().map_err(ProgramError::Type)?;
    program.check_concepts(memory)?;
    Ok(ParseExplanation {
        abstracted,
        template: template.id.clone(),
        family: template.family.clone(),
        skeleton: template_steps,
        rows,
        span_positions,
        matrix,
        assignment,
        program,
        tagged,
    })
}

/// Match a pattern against the whole item sequence. Returns the item
/// position of every slot on success. Alternatives and optional groups are
/// tried in order (optional content first), so the result is the first
/// match in that order.
fn match_pattern(pattern: &[Elem], items: &[Item], tagged: &TaggedQuery) -> Option<BTreeMap<SlotKey, usize>> {
    struct Cont<'a> {
        elems: &'a [Elem],
        next: Option<&'a Cont<'a>>,
    }
    struct Ctx<'a> {
        items: &'a [Item],
        tagged: &'a TaggedQuery,
        binds: Vec<(SlotKey, usize)>,
    }
    fn go(ctx: &mut Ctx<'_>, elems: &[Elem], cont: Option<&Cont<'_>>, pos: usize) -> bool {
        let Some((first, rest)) = elems.split_first() else {
            return match cont {
                None => pos == ctx.items.len(),
                Some(c) => go(ctx, c.elems, c.next, pos),
            };
        };
        match first {
            Elem::Punct(_) => go(ctx, rest, cont, pos),
            Elem::Word(w) => match ctx.items.get(pos) {
                Some(Item::Word(i)) if ctx.tagged.tokens[*i] == *w => go(ctx, rest, cont, pos + 1),
                _ => false,
            },
            Elem::Slot { key, .. } => match ctx.items.get(pos) {
                Some(Item::Span(s)) if ctx.tagged.spans[*s].tag == key.ty.tag() => {
                    ctx.binds.push((*key, pos));
                    if go(ctx, rest, cont, pos + 1) {
                        return true;
                    }
                    ctx.binds.pop();
                    false
                }
                _ => false,
            },
            Elem::Opt(seq) => {
                let c = Cont { elems: rest, next: cont };
                let mark = ctx.binds.len();
                if go(ctx, seq, Some(&c), pos) {
                    return true;
                }
                ctx.binds.truncate(mark);
                go(ctx, rest, cont, pos)
            }
            Elem::Alt(alts) => {
                let c = Cont { elems: rest, next: cont };
                for a in alts {
                    let mark = ctx.binds.len();
                    if go(ctx, a, Some(&c), pos) {
                        return true;
                    }
                    ctx.binds.truncate(mark);
                }
                false
            }
        }
    }
    let mut ctx = Ctx { items, tagged, binds: Vec::new() };
    go(&mut ctx, pattern, None, 0).then(|| ctx.binds.into_iter().collect())
}
