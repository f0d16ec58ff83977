//! Template grammar shared by the parser and the data generator.
//!
//! A template has a surface pattern and a program skeleton. Patterns are
//! token sequences built from literal words, slots `[T:N]`, optional groups
//! `(...)?`, alternatives `{a|b}` and macros `<name:N>`. Skeletons are
//! program text with two macros: `@set(N, base)` applies the attribute
//! filters of group `N` to `base`, and `@obj(N, base)` additionally picks one
//! object with `locate` (when the group has a location) or `unique`.

use super::TagType;
use crate::program::{Primitive, Program};
use serde::Deserialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::{Arc, OnceLock};
use thiserror::Error;

const TEMPLATES_JSON: &str = include_str!("../../data/templates.json");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error("invalid grammar file: {0}")]
    File(String),
    #[error("template `{id}`: {message}")]
    Template { id: String, message: String },
}

/// Slot letters: Y category, X open instance, C color, M material,
/// L location, R relation, H hyper-relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SlotType {
    Y,
    X,
    C,
    M,
    L,
    R,
    H,
}

impl SlotType {
    pub fn letter(self) -> char {
        match self {
            SlotType::Y => 'Y',
            SlotType::X => 'X',
            SlotType::C => 'C',
            SlotType::M => 'M',
            SlotType::L => 'L',
            SlotType::R => 'R',
            SlotType::H => 'H',
        }
    }

    fn from_letter(c: char) -> Option<SlotType> {
        Some(match c {
            'Y' => SlotType::Y,
            'X' => SlotType::X,
            'C' => SlotType::C,
            'M' => SlotType::M,
            'L' => SlotType::L,
            'R' => SlotType::R,
            'H' => SlotType::H,
            _ => return None,
        })
    }

    /// Tag type of the spans this slot accepts.
    pub fn tag(self) -> TagType {
        match self {
            SlotType::Y => TagType::Category,
            SlotType::X => TagType::Open,
            SlotType::C => TagType::Color,
            SlotType::M => TagType::Material,
            SlotType::L => TagType::Location,
            SlotType::R => TagType::Relation,
            SlotType::H => TagType::HyperRelation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SlotKey {
    pub ty: SlotType,
    pub group: u8,
}

impl SlotKey {
    pub fn new(ty: SlotType, group: u8) -> Self {
        SlotKey { ty, group }
    }

    /// Placeholder concept written into expanded skeletons, e.g. `$C2`.
    pub fn placeholder(self) -> String {
        format!("${}{}", self.ty.letter(), self.group)
    }

    pub fn from_placeholder(s: &str) -> Option<SlotKey> {
        let rest = s.strip_prefix('$')?;
        let mut chars = rest.chars();
        let ty = SlotType::from_letter(chars.next()?)?;
        let group = chars.as_str().parse().ok()?;
        Some(SlotKey { ty, group })
    }
}

impl fmt::Display for SlotKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}:{}]", self.ty.letter(), self.group)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Elem {
    Word(String),
    /// Punctuation kept for rendering; ignored when matching.
    Punct(String),
    Slot { key: SlotKey, plural: bool },
    Opt(Vec<Elem>),
    Alt(Vec<Vec<Elem>>),
}

impl Elem {
    fn collect_slots(&self, out: &mut BTreeSet<SlotKey>) {
        match self {
            Elem::Word(_) | Elem::Punct(_) => {}
            Elem::Slot { key, .. } => {
                out.insert(*key);
            }
            Elem::Opt(seq) => seq.iter().for_each(|e| e.collect_slots(out)),
            Elem::Alt(alts) => alts.iter().flatten().for_each(|e| e.collect_slots(out)),
        }
    }
}

/// Skeleton node before macro expansion.
#[derive(Debug, Clone, PartialEq)]
pub enum Skel {
    Call { op: Primitive, concept: Option<String>, args: Vec<Skel> },
    Set { group: u8, base: Box<Skel> },
    Obj { group: u8, base: Box<Skel> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// The group names one object.
    Object,
    /// The group restricts a set.
    Set,
}

/// How a relation slot connects object groups in a skeleton.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Link {
    pub slot: SlotKey,
    /// Group whose objects satisfy the relation.
    pub subject: Option<u8>,
    /// Anchor groups (one for relations, two for hyper-relations).
    pub anchors: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct Template {
    pub id: String,
    pub family: String,
    pub text: String,
    pub program_text: String,
    pub pattern: Vec<Elem>,
    pub skeleton: Skel,
    /// Final punctuation used when rendering.
    pub terminal: char,
    slots: BTreeSet<SlotKey>,
    roles: BTreeMap<u8, Role>,
    links: Vec<Link>,
}

impl Template {
    /// Every slot that occurs anywhere in the pattern.
    pub fn slots(&self) -> &BTreeSet<SlotKey> {
        &self.slots
    }

    /// Attribute groups keyed by number, with their role.
    pub fn groups(&self) -> &BTreeMap<u8, Role> {
        &self.roles
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    /// Expand the skeleton for the set of slots present in a sentence.
    /// Concept arguments are placeholders such as `$C1`.
    pub fn expand(&self, present: &BTreeSet<SlotKey>) -> Program {
        expand(&self.skeleton, present)
    }

    /// The `@set`/`@obj` node of a group.
    pub fn group_node(&self, group: u8) -> Option<&Skel> {
        fn find(s: &Skel, g: u8) -> Option<&Skel> {
            match s {
                Skel::Set { group, base } | Skel::Obj { group, base } => {
                    if *group == g {
                        Some(s)
                    } else {
                        find(base, g)
                    }
                }
                Skel::Call { args, .. } => args.iter().find_map(|a| find(a, g)),
            }
        }
        find(&self.skeleton, group)
    }

    /// Whether a slot combination can be rendered by this pattern. Slots
    /// occur once per pattern, so taking every optional part and the
    /// alternative that consumes the most slots is exact.
    pub fn admits(&self, present: &BTreeSet<SlotKey>) -> bool {
        fn consume(seq: &[Elem], present: &BTreeSet<SlotKey>) -> Option<BTreeSet<SlotKey>> {
            let mut out = BTreeSet::new();
            for e in seq {
                match e {
                    Elem::Word(_) | Elem::Punct(_) => {}
                    Elem::Slot { key, .. } => {
                        if !present.contains(key) {
                            return None;
                        }
                        out.insert(*key);
                    }
                    Elem::Opt(inner) => out.extend(consume(inner, present).unwrap_or_default()),
                    Elem::Alt(alts) => out.extend(alts.iter().filter_map(|a| consume(a, present)).max_by_key(|c| c.len())?),
                }
            }
            Some(out)
        }
        consume(&self.pattern, present).as_ref() == Some(present)
    }
}

impl Skel {
    /// Expand macros for the given slots (see [`Template::expand`]).
    pub fn expand(&self, present: &BTreeSet<SlotKey>) -> Program {
        expand(self, present)
    }

    /// Group of an `@set`/`@obj` node.
    pub fn group(&self) -> Option<u8> {
        top_group(self)
    }
}

fn expand(s: &Skel, present: &BTreeSet<SlotKey>) -> Program {
    match s {
        Skel::Call { op, concept, args } => {
            Program::new(*op, concept.as_deref(), args.iter().map(|a| expand(a, present)).collect())
        }
        Skel::Set { group, base } => expand_set(*group, expand(base, present), present),
        Skel::Obj { group, base } => {
            let set = expand_set(*group, expand(base, present), present);
            let loc = SlotKey::new(SlotType::L, *group);
            if present.contains(&loc) {
                Program::wrap(Primitive::Locate, Some(&loc.placeholder()), set)
            } else {
                Program::wrap(Primitive::Unique, None, set)
            }
        }
    }
}

fn expand_set(group: u8, mut p: Program, present: &BTreeSet<SlotKey>) -> Program {
    let has = |t| present.contains(&SlotKey::new(t, group));
    for (ty, op) in [
        (SlotType::Y, Primitive::FilterCategory),
        (SlotType::X, Primitive::FilterCategory),
        (SlotType::C, Primitive::FilterColor),
        (SlotType::M, Primitive::FilterMaterial),
    ] {
        if has(ty) {
            p = Program::wrap(op, Some(&SlotKey::new(ty, group).placeholder()), p);
        }
    }
    p
}

#[derive(Debug, Clone)]
pub struct FamilyInfo {
    pub name: String,
    pub degenerate: Vec<String>,
}

/// Loaded template grammar.
#[derive(Debug, Clone)]
pub struct Grammar {
    pub version: u32,
    families: Vec<FamilyInfo>,
    templates: Vec<Template>,
    rules: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct GrammarFile {
    version: u32,
    macros: BTreeMap<String, String>,
    families: Vec<FamilyFile>,
    #[serde(default)]
    degenerate_rules: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct FamilyFile {
    family: String,
    #[serde(default)]
    degenerate: Vec<String>,
    templates: Vec<TemplateFile>,
}

#[derive(Deserialize)]
struct TemplateFile {
    id: String,
    text: String,
    program: String,
}

impl Grammar {
    /// The bundled grammar.
    pub fn builtin() -> Arc<Grammar> {
        static G: OnceLock<Arc<Grammar>> = OnceLock::new();
        G.get_or_init(|| Arc::new(Grammar::from_json(TEMPLATES_JSON).expect("bundled templates.json is valid"))).clone()
    }

    pub fn from_json(text: &str) -> Result<Grammar, GrammarError> {
        let f: GrammarFile = serde_json::from_str(text).map_err(|e| GrammarError::File(e.to_string()))?;
        let mut families = Vec::new();
        let mut templates = Vec::new();
        let mut ids = BTreeSet::new();
        for fam in f.families {
            for rule in &fam.degenerate {
                if !f.degenerate_rules.contains_key(rule) {
                    return Err(GrammarError::File(format!("family `{}` uses undefined rule `{rule}`", fam.family)));
                }
            }
            for t in fam.templates {
                if !ids.insert(t.id.clone()) {
                    return Err(GrammarError::File(format!("duplicate template id `{}`", t.id)));
                }
                templates.push(build_template(&fam.family, t, &f.macros)?);
            }
            families.push(FamilyInfo { name: fam.family, degenerate: fam.degenerate });
        }
        Ok(Grammar { version: f.version, families, templates, rules: f.degenerate_rules })
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn template(&self, id: &str) -> Option<&Template> {
        self.templates.iter().find(|t| t.id == id)
    }

    pub fn families(&self) -> &[FamilyInfo] {
        &self.families
    }

    pub fn family(&self, name: &str) -> Option<&FamilyInfo> {
        self.families.iter().find(|f| f.name == name)
    }

    pub fn family_templates<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Template> + 'a {
        self.templates.iter().filter(move |t| t.family == name)
    }

    /// Plain-language description of a degenerate-answer rule.
    pub fn rule_text(&self, rule: &str) -> Option<&str> {
        self.rules.get(rule).map(String::as_str)
    }
}

fn build_template(family: &str, t: TemplateFile, macros: &BTreeMap<String, String>) -> Result<Template, GrammarError> {
    let err = |message: String| GrammarError::Template { id: t.id.clone(), message };
    let trimmed = t.text.trim_end();
    let terminal = match trimmed.chars().last() {
        Some(c @ ('?' | '.')) => c,
        _ => '.',
    };
    let body = trimmed.trim_end_matches(['?', '.']);
    let tokens = tokenize(body, macros).map_err(err)?;
    let mut pos = 0;
    let pattern = parse_seq(&tokens, &mut pos).map_err(err)?;
    if pos != tokens.len() {
        return Err(err(format!("unexpected `{}` in pattern", tokens[pos])));
    }
    let skeleton = SkelParser { s: t.program.as_bytes(), pos: 0 }.parse().map_err(err)?;

    let mut slots = BTreeSet::new();
    pattern.iter().for_each(|e| e.collect_slots(&mut slots));
    let mut roles = BTreeMap::new();
    let mut placeholders = BTreeSet::new();
    let mut links = Vec::new();
    analyse(&skeleton, None, &mut roles, &mut placeholders, &mut links);

    for key in &slots {
        let ok = match key.ty {
            SlotType::R | SlotType::H => placeholders.contains(key),
            SlotType::L => roles.get(&key.group) == Some(&Role::Object),
            _ => roles.contains_key(&key.group),
        };
        if !ok {
            return Err(err(format!("slot {key} has no argument in the skeleton")));
        }
    }
    for key in &placeholders {
        if !slots.contains(key) {
            return Err(err(format!("skeleton argument {key} has no slot in the pattern")));
        }
    }
    for g in roles.keys() {
        if !slots.iter().any(|k| k.group == *g && matches!(k.ty, SlotType::Y | SlotType::X | SlotType::C | SlotType::M)) {
            return Err(err(format!("group {g} has no attribute slot")));
        }
    }
    let template = Template {
        id: t.id.clone(),
        family: family.to_string(),
        text: t.text.clone(),
        program_text: t.program.clone(),
        pattern,
        skeleton,
        terminal,
        slots,
        roles,
        links,
    };
    let full = template.expand(&template.slots);
    full.typecheck().map_err(|e| err(format!("skeleton does not type-check: {}", e.message)))?;
    Ok(template)
}

/// Collect group roles, relation placeholders and the groups they connect.
fn analyse(
    s: &Skel,
    enclosing: Option<u8>,
    roles: &mut BTreeMap<u8, Role>,
    placeholders: &mut BTreeSet<SlotKey>,
    links: &mut Vec<Link>,
) {
    match s {
        Skel::Set { group, base } | Skel::Obj { group, base } => {
            let role = if matches!(s, Skel::Obj { .. }) { Role::Object } else { Role::Set };
            roles.entry(*group).or_insert(role);
            analyse(base, Some(*group), roles, placeholders, links);
        }
        Skel::Call { concept, args, op } => {
            if let Some(key) = concept.as_deref().and_then(SlotKey::from_placeholder) {
                placeholders.insert(key);
                let anchors = args.iter().filter_map(top_group).collect();
                let subject = if *op == Primitive::PickAndPlace { args.first().and_then(top_group) } else { enclosing };
                links.push(Link { slot: key, subject, anchors });
            }
            for a in args {
                analyse(a, enclosing, roles, placeholders, links);
            }
        }
    }
}

fn top_group(s: &Skel) -> Option<u8> {
    match s {
        Skel::Set { group, .. } | Skel::Obj { group, .. } => Some(*group),
        Skel::Call { .. } => None,
    }
}

fn tokenize(text: &str, macros: &BTreeMap<String, String>) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '{' | '}' | '|' | '(' => {
                out.push(c.to_string());
                i += 1;
            }
            ')' => {
                if chars.get(i + 1) != Some(&'?') {
                    return Err("`(...)` groups must be followed by `?`".into());
                }
                out.push(")?".into());
                i += 2;
            }
            ']' => return Err("unbalanced `]`".into()),
            '[' | '<' => {
                let close = if c == '[' { ']' } else { '>' };
                let end = chars[i..].iter().position(|&x| x == close).ok_or_else(|| format!("unterminated `{c}`"))? + i;
                let inner: String = chars[i + 1..end].iter().collect();
                i = end + 1;
                if c == '<' {
                    let (name, n) = inner.split_once(':').ok_or_else(|| format!("bad macro `<{inner}>`"))?;
                    let body = macros.get(name).ok_or_else(|| format!("unknown macro `{name}`"))?;
                    out.extend(tokenize(&body.replace('N', n), macros)?);
                } else {
                    let mut tok = format!("[{inner}]");
                    if chars.get(i) == Some(&'?') {
                        tok.push('?');
                        i += 1;
                    }
                    out.push(tok);
                }
            }
            _ => {
                let start = i;
                while i < chars.len() && !chars[i].is_whitespace() && !"{}|()[]<".contains(chars[i]) {
                    i += 1;
                }
                let raw: String = chars[start..i].iter().collect();
                let word: String = raw.chars().filter(|c| c.is_alphanumeric() || *c == '-').collect();
                if !word.is_empty() {
                    out.push(word.to_lowercase());
                } else if raw.chars().all(|c| ",;:".contains(c)) {
                    out.push(raw);
                }
            }
        }
    }
    Ok(out)
}

fn parse_seq(tokens: &[String], pos: &mut usize) -> Result<Vec<Elem>, String> {
    let mut seq = Vec::new();
    while let Some(tok) = tokens.get(*pos) {
        match tok.as_str() {
            "}" | "|" | ")?" => break,
            "(" => {
                *pos += 1;
                let inner = parse_seq(tokens, pos)?;
                if tokens.get(*pos).map(String::as_str) != Some(")?") {
                    return Err("unterminated optional group".into());
                }
                *pos += 1;
                seq.push(Elem::Opt(inner));
            }
            "{" => {
                *pos += 1;
                let mut alts = vec![parse_seq(tokens, pos)?];
                loop {
                    match tokens.get(*pos).map(String::as_str) {
                        Some("|") => {
                            *pos += 1;
                            alts.push(parse_seq(tokens, pos)?);
                        }
                        Some("}") => {
                            *pos += 1;
                            break;
                        }
                        _ => return Err("unterminated alternative".into()),
                    }
                }
                seq.push(Elem::Alt(alts));
            }
            t if t.starts_with('[') => {
                *pos += 1;
                let optional = t.ends_with('?');
                let inner = t.trim_end_matches('?').trim_start_matches('[').trim_end_matches(']');
                let (ty, group) = inner.split_once(':').ok_or_else(|| format!("bad slot `{t}`"))?;
                let plural = ty == "Ys";
                let letter = if plural { 'Y' } else { ty.chars().next().unwrap_or('?') };
                let ty = SlotType::from_letter(letter)
                    .filter(|_| plural || ty.len() == 1)
                    .ok_or_else(|| format!("bad slot type in `{t}`"))?;
                let group: u8 = group.parse().map_err(|_| format!("bad slot group in `{t}`"))?;
                let slot = Elem::Slot { key: SlotKey::new(ty, group), plural };
                seq.push(if optional { Elem::Opt(vec![slot]) } else { slot });
            }
            w if w.chars().all(|c| ",;:".contains(c)) => {
                *pos += 1;
                seq.push(Elem::Punct(w.to_string()));
            }
            w => {
                *pos += 1;
                seq.push(Elem::Word(w.to_string()));
            }
        }
    }
    Ok(seq)
}

struct SkelParser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl SkelParser<'_> {
    fn parse(mut self) -> Result<Skel, String> {
        let node = self.node()?;
        self.ws();
        if self.pos != self.s.len() {
            return Err(format!("trailing input in skeleton at byte {}", self.pos));
        }
        Ok(node)
    }

    fn ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, b: u8) -> Result<(), String> {
        self.ws();
        if self.s.get(self.pos) == Some(&b) {
            self.pos += 1;
            Ok(())
        } else {
            Err(format!("expected `{}` in skeleton at byte {}", b as char, self.pos))
        }
    }

    fn ident(&mut self) -> String {
        self.ws();
        let start = self.pos;
        while self.pos < self.s.len() && (self.s[self.pos].is_ascii_alphanumeric() || b"_@".contains(&self.s[self.pos])) {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.s[start..self.pos]).into_owned()
    }

    fn node(&mut self) -> Result<Skel, String> {
        let name = self.ident();
        self.eat(b'(')?;
        if name == "@set" || name == "@obj" {
            let group: u8 = self.ident().parse().map_err(|_| "macro group must be an integer".to_string())?;
            self.eat(b',')?;
            let base = Box::new(self.node()?);
            self.eat(b')')?;
            return Ok(if name == "@set" { Skel::Set { group, base } } else { Skel::Obj { group, base } });
        }
        let op: Primitive = name.parse().map_err(|_| format!("unknown primitive `{name}`"))?;
        let mut args = Vec::new();
        let mut concept = None;
        self.ws();
        if self.s.get(self.pos) != Some(&b')') {
            loop {
                self.ws();
                if self.s.get(self.pos) == Some(&b'\'') {
                    self.pos += 1;
                    let start = self.pos;
                    while self.pos < self.s.len() && self.s[self.pos] != b'\'' {
                        self.pos += 1;
                    }
                    concept = Some(String::from_utf8_lossy(&self.s[start..self.pos]).into_owned());
                    self.eat(b'\'')?;
                } else {
                    args.push(self.node()?);
                }
                self.ws();
                if self.s.get(self.pos) == Some(&b',') {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.eat(b')')?;
        Ok(Skel::Call { op, concept, args })
    }
}
