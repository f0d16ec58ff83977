//! Typed primitive programs: tree form, linear form and text syntax.
//!
//! The linear form is the post-order traversal of the tree. Every branch of
//! a two-child primitive starts with its own `scene` token, which is what
//! lets [`delinearize`] rebuild the tree with a single operand stack. Step
//! `i` of the linear form is node `i` of the tree in post-order, and the
//! executor reports failures by that index.

use crate::grounding::{AttrType, ConceptKind, ConceptMemory};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueType {
    ObjSet,
    Obj,
    Int,
    Bool,
    Concept(AttrType),
    Relation,
    HyperRelation,
    Action,
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueType::ObjSet => f.write_str("ObjSet"),
            ValueType::Obj => f.write_str("Obj"),
            ValueType::Int => f.write_str("Int"),
            ValueType::Bool => f.write_str("Bool"),
            ValueType::Concept(a) => write!(f, "Concept({a})"),
            ValueType::Relation => f.write_str("Relation"),
            ValueType::HyperRelation => f.write_str("HyperRelation"),
            ValueType::Action => f.write_str("Action"),
        }
    }
}

macro_rules! primitives {
    ($($variant:ident => $name:literal),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum Primitive {
            $($variant),*
        }

        impl Primitive {
            pub const ALL: &'static [Primitive] = &[$(Primitive::$variant),*];

            pub fn name(self) -> &'static str {
                match self {
                    $(Primitive::$variant => $name),*
                }
            }
        }
    };
}

primitives! {
    Scene => "scene",
    Unique => "unique",
    FilterCategory => "filter_category",
    FilterColor => "filter_color",
    FilterMaterial => "filter_material",
    QueryCategory => "query_category",
    QueryColor => "query_color",
    QueryMaterial => "query_material",
    SameCategory => "same_category",
    SameColor => "same_color",
    SameMaterial => "same_material",
    Relate => "relate",
    Locate => "locate",
    HyperRelate => "hyper_relate",
    And => "and",
    Or => "or",
    Exist => "exist",
    Count => "count",
    EqualInteger => "equal_integer",
    Greater => "greater",
    Less => "less",
    EqualCategory => "equal_category",
    EqualColor => "equal_color",
    EqualMaterial => "equal_material",
    Grasp => "grasp",
    PickAndPlace => "pick_and_place",
    Sort => "sort",
}

/// Type signature: child argument types, concept argument slot, return type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Signature {
    pub args: &'static [ValueType],
    pub concept: Option<ConceptKind>,
    pub ret: ValueType,
}

impl Primitive {
    pub fn signature(self) -> Signature {
        use Primitive::*;
        use ValueType::*;
        const SET: &[ValueType] = &[ObjSet];
        const OBJ: &[ValueType] = &[Obj];
        const SET2: &[ValueType] = &[ObjSet, ObjSet];
        const OBJ2: &[ValueType] = &[Obj, Obj];
        const INT2: &[ValueType] = &[Int, Int];
        const CAT2: &[ValueType] = &[Concept(AttrType::Category), Concept(AttrType::Category)];
        const COL2: &[ValueType] = &[Concept(AttrType::Color), Concept(AttrType::Color)];
        const MAT2: &[ValueType] = &[Concept(AttrType::Material), Concept(AttrType::Material)];
        const SET_OBJ: &[ValueType] = &[ObjSet, Obj];
        let attr = |a| Some(ConceptKind::Attr(a));
        let sig = |args, concept, ret| Signature { args, concept, ret };
        match self {
            Scene => sig(&[], None, ObjSet),
            Unique => sig(SET, None, Obj),
            FilterCategory => sig(SET, attr(AttrType::Category), ObjSet),
            FilterColor => sig(SET, attr(AttrType::Color), ObjSet),
            FilterMaterial => sig(SET, attr(AttrType::Material), ObjSet),
            QueryCategory => sig(OBJ, None, Concept(AttrType::Category)),
            QueryColor => sig(OBJ, None, Concept(AttrType::Color)),
            QueryMaterial => sig(OBJ, None, Concept(AttrType::Material)),
            SameCategory | SameColor | SameMaterial => sig(OBJ, None, ObjSet),
            Relate => sig(OBJ, Some(ConceptKind::Relation), ObjSet),
            Locate => sig(SET, Some(ConceptKind::Location), Obj),
            HyperRelate => sig(OBJ2, Some(ConceptKind::HyperRelation), ObjSet),
            And | Or => sig(SET2, None, ObjSet),
            Exist => sig(SET, None, Bool),
            Count => sig(SET, None, Int),
            EqualInteger | Greater | Less => sig(INT2, None, Bool),
            EqualCategory => sig(CAT2, None, Bool),
            EqualColor => sig(COL2, None, Bool),
            EqualMaterial => sig(MAT2, None, Bool),
            Grasp => sig(OBJ, None, Action),
            PickAndPlace => sig(OBJ2, Some(ConceptKind::Relation), Action),
            Sort => sig(SET_OBJ, None, Action),
        }
    }

    pub fn arity(self) -> usize {
        self.signature().args.len()
    }

    pub fn is_action(self) -> bool {
        self.signature().ret == ValueType::Action
    }

    /// Attribute type handled by a filter/query/same/equal primitive.
    pub fn attribute(self) -> Option<AttrType> {
        use Primitive::*;
        match self {
            FilterCategory | QueryCategory | SameCategory | EqualCategory => Some(AttrType::Category),
            FilterColor | QueryColor | SameColor | EqualColor => Some(AttrType::Color),
            FilterMaterial | QueryMaterial | SameMaterial | EqualMaterial => Some(AttrType::Material),
            _ => None,
        }
    }

    /// Primitives that consult the grounder.
    pub fn needs_grounding(self) -> bool {
        use Primitive::*;
        matches!(
            self,
            FilterCategory
                | FilterColor
                | FilterMaterial
                | QueryCategory
                | QueryColor
                | QueryMaterial
                | SameCategory
                | SameColor
                | SameMaterial
                | Relate
                | Locate
                | HyperRelate
        )
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown primitive `{0}`")]
pub struct UnknownPrimitive(pub String);

impl FromStr for Primitive {
    type Err = UnknownPrimitive;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Primitive::ALL.iter().copied().find(|p| p.name() == s).ok_or_else(|| UnknownPrimitive(s.to_string()))
    }
}

impl Serialize for Primitive {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Primitive {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Program tree node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Program {
    pub primitive: Primitive,
    pub concept: Option<String>,
    pub children: Vec<Program>,
}

/// One token of the linear form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Step {
    pub op: Primitive,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concept: Option<String>,
}

impl Step {
    pub fn new(op: Primitive, concept: Option<&str>) -> Self {
        Step { op, concept: concept.map(str::to_string) }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.concept {
            Some(c) => write!(f, "{}('{}')", self.op, c),
            None => write!(f, "{}", self.op),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("type error at node {node} ({primitive}): {message}")]
pub struct TypeErrorReport {
    /// Post-order index of the offending node.
    pub node: usize,
    pub primitive: Primitive,
    pub expected: Option<String>,
    pub actual: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProgramError {
    #[error("malformed sequence at index {position}: {message}")]
    MalformedSequence { position: usize, message: String },
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error(transparent)]
    Type(#[from] TypeErrorReport),
    #[error("unknown {kind} concept `{value}` at node {node}")]
    UnknownConcept { node: usize, kind: ConceptKind, value: String },
}

impl Program {
    pub fn new(primitive: Primitive, concept: Option<&str>, children: Vec<Program>) -> Self {
        Program { primitive, concept: concept.map(str::to_string), children }
    }

    pub fn scene() -> Self {
        Program::new(Primitive::Scene, None, vec![])
    }

    /// Unary node over `child`.
    pub fn wrap(primitive: Primitive, concept: Option<&str>, child: Program) -> Self {
        Program::new(primitive, concept, vec![child])
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        1 + self.children.iter().map(Program::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Nodes in post-order; index `i` is linear step `i`.
    pub fn post_order(&self) -> Vec<&Program> {
        let mut out = Vec::with_capacity(self.len());
        fn go<'a>(p: &'a Program, out: &mut Vec<&'a Program>) {
            for c in &p.children {
                go(c, out);
            }
            out.push(p);
        }
        go(self, &mut out);
        out
    }

    pub fn linearize(&self) -> Vec<Step> {
        self.post_order().into_iter().map(|p| Step { op: p.primitive, concept: p.concept.clone() }).collect()
    }

    /// Static type check; returns the root type.
    pub fn typecheck(&self) -> Result<ValueType, TypeErrorReport> {
        let mut counter = 0;
        self.check(true, &mut counter)
    }

    fn check(&self, at_root: bool, counter: &mut usize) -> Result<ValueType, TypeErrorReport> {
        let mut child_types = Vec::with_capacity(self.children.len());
        for c in &self.children {
            child_types.push(c.check(false, counter)?);
        }
        let index = *counter;
        *counter += 1;
        let sig = self.primitive.signature();
        let report = |expected: Option<String>, actual: Option<String>, message: String| TypeErrorReport {
            node: index,
            primitive: self.primitive,
            expected,
            actual,
            message,
        };
        if child_types.len() != sig.args.len() {
            return Err(report(
                Some(format!("{} argument(s)", sig.args.len())),
                Some(format!("{} argument(s)", child_types.len())),
                format!("{} takes {} argument(s), got {}", self.primitive, sig.args.len(), child_types.len()),
            ));
        }
        for (i, (want, got)) in sig.args.iter().zip(&child_types).enumerate() {
            if want != got {
                return Err(report(
                    Some(want.to_string()),
                    Some(got.to_string()),
                    format!("{} expects {want} for argument {}, got {got}", self.primitive, i + 1),
                ));
            }
        }
        match (&sig.concept, &self.concept) {
            (Some(kind), None) => {
                return Err(report(Some(format!("{kind} concept")), None, format!("{} requires a {kind} concept", self.primitive)))
            }
            (None, Some(c)) => {
                return Err(report(None, Some(c.clone()), format!("{} takes no concept argument", self.primitive)))
            }
            _ => {}
        }
        if sig.ret == ValueType::Action && !at_root {
            return Err(report(None, None, format!("action primitive {} must be the program root", self.primitive)));
        }
        Ok(sig.ret)
    }

    /// Check every concept argument against the memory. Arguments of
    /// `filter_category` may also name an open instance or a supercategory.
    pub fn check_concepts(&self, memory: &ConceptMemory) -> Result<(), ProgramError> {
        for (i, node) in self.post_order().into_iter().enumerate() {
            let (Some(kind), Some(value)) = (node.primitive.signature().concept, &node.concept) else { continue };
            let ok = match (node.primitive, kind) {
                (Primitive::FilterCategory, _) => memory.category_like(value).is_some(),
                _ => memory.contains_kind(kind, value),
            };
            if !ok {
                return Err(ProgramError::UnknownConcept { node: i, kind, value: value.clone() });
            }
        }
        Ok(())
    }

    /// Canonical text: `name(child,...,'concept')` with no whitespace.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        self.write_text(&mut s);
        s
    }

    fn write_text(&self, out: &mut String) {
        out.push_str(self.primitive.name());
        out.push('(');
        for (i, c) in self.children.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            c.write_text(out);
        }
        if let Some(c) = &self.concept {
            if !self.children.is_empty() {
                out.push(',');
            }
            out.push('\'');
            for ch in c.chars() {
                if ch == '\'' || ch == '\\' {
                    out.push('\\');
                }
                out.push(ch);
            }
            out.push('\'');
        }
        out.push(')');
    }

    pub fn parse_text(text: &str) -> Result<Program, ProgramError> {
        TextParser::new(text).parse()
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl FromStr for Program {
    type Err = ProgramError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Program::parse_text(s)
    }
}

impl Serialize for Program {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_text())
    }
}

impl<'de> Deserialize<'de> for Program {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Program::parse_text(&s).map_err(serde::de::Error::custom)
    }
}

/// Rebuild a tree from its linear form.
pub fn delinearize(steps: &[Step]) -> Result<Program, ProgramError> {
    let malformed = |position: usize, message: &str| ProgramError::MalformedSequence { position, message: message.to_string() };
    let mut stack: Vec<Program> = Vec::new();
    let mut current: Option<Program> = None;
    for (i, step) in steps.iter().enumerate() {
        let node = |children| Program { primitive: step.op, concept: step.concept.clone(), children };
        current = Some(match step.op.arity() {
            0 => {
                if let Some(prev) = current.take() {
                    stack.push(prev);
                }
                node(vec![])
            }
            1 => {
                let operand = current.take().ok_or_else(|| malformed(i, "missing operand"))?;
                node(vec![operand])
            }
            _ => {
                let right = current.take().ok_or_else(|| malformed(i, "missing right operand"))?;
                let left = stack.pop().ok_or_else(|| malformed(i, "operand stack underflow"))?;
                node(vec![left, right])
            }
        });
    }
    if !stack.is_empty() {
        return Err(malformed(steps.len(), &format!("{} operand(s) left on the stack", stack.len())));
    }
    current.ok_or_else(|| malformed(0, "empty sequence"))
}

/// Render a linear form as `scene, filter_color('red'), count`.
pub fn format_steps(steps: &[Step]) -> String {
    steps.iter().map(Step::to_string).collect::<Vec<_>>().join(", ")
}

enum Arg {
    Call(Program),
    Quoted(String),
    Int(i64),
}

struct TextParser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> TextParser<'a> {
    fn new(src: &'a str) -> Self {
        TextParser { src, pos: 0 }
    }

    fn error(&self, at: usize, message: impl Into<String>) -> ProgramError {
        let before = &self.src[..at.min(self.src.len())];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        ProgramError::Syntax { line, column, message: message.into() }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn expect(&mut self, want: char) -> Result<(), ProgramError> {
        self.skip_ws();
        match self.peek() {
            Some(c) if c == want => {
                self.pos += 1;
                Ok(())
            }
            Some(c) => Err(self.error(self.pos, format!("expected `{want}`, found `{c}`"))),
            None => Err(self.error(self.pos, format!("expected `{want}`, found end of input"))),
        }
    }

    fn parse(mut self) -> Result<Program, ProgramError> {
        let p = self.call()?;
        self.skip_ws();
        if self.pos < self.src.len() {
            return Err(self.error(self.pos, "trailing input after program"));
        }
        Ok(p)
    }

    fn call(&mut self) -> Result<Program, ProgramError> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        if start == self.pos {
            return Err(match self.peek() {
                Some(c) => self.error(start, format!("expected primitive name, found `{c}`")),
                None => self.error(start, "expected primitive name, found end of input"),
            });
        }
        let name = &self.src[start..self.pos];
        let primitive: Primitive = name.parse().map_err(|e: UnknownPrimitive| self.error(start, e.to_string()))?;
        self.expect('(')?;
        let mut args = Vec::new();
        self.skip_ws();
        if self.peek() == Some(')') {
            self.pos += 1;
        } else {
            loop {
                let at = self.pos;
                args.push((at, self.arg()?));
                self.skip_ws();
                match self.peek() {
                    Some(',') => self.pos += 1,
                    Some(')') => {
                        self.pos += 1;
                        break;
                    }
                    Some(c) => return Err(self.error(self.pos, format!("expected `,` or `)`, found `{c}`"))),
                    None => return Err(self.error(self.pos, "unbalanced parenthesis: expected `)`")),
                }
            }
        }
        let mut children = Vec::new();
        let mut concept = None;
        for (at, a) in args {
            match a {
                Arg::Call(p) if concept.is_none() => children.push(p),
                Arg::Call(_) => return Err(self.error(at, "concept argument must come last")),
                Arg::Quoted(s) if concept.is_none() => concept = Some(s),
                Arg::Quoted(_) => return Err(self.error(at, "at most one concept argument is allowed")),
                Arg::Int(v) => return Err(self.error(at, format!("{primitive} takes no integer literal, got {v}"))),
            }
        }
        Ok(Program { primitive, concept, children })
    }

    fn arg(&mut self) -> Result<Arg, ProgramError> {
        self.skip_ws();
        match self.peek() {
            Some('\'') => {
                let open = self.pos;
                self.pos += 1;
                let mut s = String::new();
                loop {
                    match self.peek() {
                        None => return Err(self.error(open, "unterminated concept string")),
                        Some('\\') => {
                            self.pos += 1;
                            match self.peek() {
                                Some(c) => {
                                    s.push(c);
                                    self.pos += c.len_utf8();
                                }
                                None => return Err(self.error(open, "unterminated concept string")),
                            }
                        }
                        Some('\'') => {
                            self.pos += 1;
                            return Ok(Arg::Quoted(s));
                        }
                        Some(c) => {
                            s.push(c);
                            self.pos += c.len_utf8();
                        }
                    }
                }
            }
            Some(c) if c.is_ascii_digit() || c == '-' => {
                let start = self.pos;
                self.pos += 1;
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
                self.src[start..self.pos]
                    .parse()
                    .map(Arg::Int)
                    .map_err(|_| self.error(start, "invalid integer literal"))
            }
            _ => self.call().map(Arg::Call),
        }
    }
}
