use super::{Answer, DatasetSample, Reject};
use crate::executor::{check_action, execute, ActionCommand, ExecConfig, ExecValue, FailureKind};
use crate::grounding::{AttrType, ConceptKind, ConceptMemory, OracleGrounder};
use crate::parser::{Elem, Grammar, Role, Skel, SlotKey, SlotType, Template};
use crate::program::{Primitive, Program};
use crate::relations::{hyper_zeta, location_score, zeta, HyperRelationConcept, RelationConcept, RelationThresholds};
use crate::rng::Rng;
use crate::scene::{ObjectId, SceneGraph};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng as _, SeedableRng};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

const PLACEABLE: [RelationConcept; 5] =
    [RelationConcept::Left, RelationConcept::Right, RelationConcept::Behind, RelationConcept::Front, RelationConcept::Next];

/// Template instantiation against the oracle grounder.
#[derive(Debug, Clone)]
pub struct Generator {
    memory: Arc<ConceptMemory>,
    grammar: Arc<Grammar>,
    grounder: OracleGrounder,
    exec: ExecConfig,
    relations: Vec<RelationConcept>,
    locations: Vec<RelationConcept>,
    hypers: Vec<HyperRelationConcept>,
}

/// Slot bindings and resolved referents of one instantiation.
#[derive(Debug, Default)]
struct Plan {
    slots: BTreeMap<SlotKey, String>,
    targets: BTreeMap<u8, ObjectId>,
}

impl Generator {
    pub fn new(memory: Arc<ConceptMemory>, grammar: Arc<Grammar>, thresholds: RelationThresholds) -> Self {
        let parse_all = |kind| -> Vec<RelationConcept> {
            memory.entries(kind).iter().filter_map(|e| e.canonical.parse().ok()).collect()
        };
        let relations = parse_all(ConceptKind::Relation);
        let locations = parse_all(ConceptKind::Location);
        let hypers = memory.entries(ConceptKind::HyperRelation).iter().filter_map(|e| e.canonical.parse().ok()).collect();
        Generator {
            grounder: OracleGrounder::new(memory.clone(), thresholds),
            memory,
            grammar,
            exec: ExecConfig::default(),
            relations,
            locations,
            hypers,
        }
    }

    pub fn memory(&self) -> &Arc<ConceptMemory> {
        &self.memory
    }

    pub fn grammar(&self) -> &Arc<Grammar> {
        &self.grammar
    }

    pub fn grounder(&self) -> &OracleGrounder {
        &self.grounder
    }

    pub fn thresholds(&self) -> &RelationThresholds {
        &self.grounder.thresholds
    }

    /// Instantiate `template` on `scene`, drawing every choice from `seed`.
    /// `want` steers existence questions toward a yes or no answer.
    pub fn instantiate(
        &self,
        template: &Template,
        scene: &SceneGraph,
        scene_id: &str,
        seed: u64,
        want: Option<bool>,
    ) -> Result<DatasetSample, Reject> {
        let mut rng = Rng::seed_from_u64(seed);
        let rules: BTreeSet<&str> = self
            .grammar
            .family(&template.family)
            .map(|f| f.degenerate.iter().map(String::as_str).collect())
            .unwrap_or_default();
        let mut forbidden = BTreeMap::new();
        collect_forbidden(&template.skeleton, None, &rules, &mut forbidden);
        let no_attrs = BTreeSet::new();
        let steer = want.filter(|_| matches!(template.skeleton, Skel::Call { op: Primitive::Exist, .. }));

        let mut plan = Plan::default();
        let mut deferred = Vec::new();
        let mut set_descriptors: Vec<(u8, bool, BTreeMap<SlotType, String>)> = Vec::new();
        for (&g, &role) in template.groups() {
            let Some(Skel::Set { base, .. } | Skel::Obj { base, .. }) = template.group_node(g) else {
                continue;
            };
            let (ready, later): (Vec<_>, Vec<_>) = template
                .links()
                .iter()
                .filter(|l| l.subject == Some(g))
                .partition(|l| l.anchors.iter().all(|a| plan.targets.contains_key(a)));
            deferred.extend(later);

            let mut pre = None;
            if !ready.is_empty() {
                let anchors: BTreeSet<ObjectId> =
                    ready.iter().flat_map(|l| l.anchors.iter().map(|a| plan.targets[a])).collect();
                let used: BTreeSet<ObjectId> = plan.targets.values().copied().collect();
                let mut candidates: Vec<ObjectId> =
                    scene.ids().filter(|n| !anchors.contains(n) && !used.contains(n)).collect();
                candidates.shuffle(&mut rng);
                'cand: for c in candidates {
                    let mut chosen = Vec::new();
                    for l in &ready {
                        let options = self.holding(scene, l.slot.ty, c, &l.anchors.iter().map(|a| plan.targets[a]).collect::<Vec<_>>());
                        match options.choose(&mut rng) {
                            Some(v) => chosen.push((l.slot, v.clone())),
                            None => continue 'cand,
                        }
                    }
                    plan.slots.extend(chosen);
                    pre = Some(c);
                    break;
                }
                if pre.is_none() {
                    return Err(Reject::NoReferent);
                }
            }

            let present: BTreeSet<SlotKey> = plan.slots.keys().copied().collect();
            let set = self.run_set(&bind(&base.expand(&present), &plan.slots), scene)?;
            let relational = !matches!(**base, Skel::Call { op: Primitive::Scene, .. });
            if relational && set.is_empty() && rules.contains("nonempty_relation") {
                return Err(Reject::Degenerate("nonempty_relation".into()));
            }
            let banned = forbidden.get(&g).unwrap_or(&no_attrs);
            match role {
                Role::Object => {
                    let used: BTreeSet<ObjectId> = plan.targets.values().copied().collect();
                    let t = match pre {
                        Some(t) if set.contains(&t) => t,
                        _ => {
                            let free: Vec<ObjectId> = set.iter().copied().filter(|n| !used.contains(n)).collect();
                            *free.choose(&mut rng).ok_or(Reject::NoReferent)?
                        }
                    };
                    let options = self.object_options(template, g, t, &set, scene, banned);
                    let option = options.choose(&mut rng).ok_or(Reject::NoReferent)?;
                    for (ty, v) in option {
                        plan.slots.insert(SlotKey::new(*ty, g), v.clone());
                    }
                    plan.targets.insert(g, t);
                }
                Role::Set => {
                    let steer_here = steer.filter(|_| Some(g) == template.groups().keys().next_back().copied());
                    let desc = self.set_descriptor(template, g, &set, scene, banned, !relational, steer_here, &mut rng);
                    for (ty, v) in &desc {
                        plan.slots.insert(SlotKey::new(*ty, g), v.clone());
                    }
                    set_descriptors.push((g, !relational, desc));
                }
            }
        }
        for l in deferred {
            let pool: Vec<RelationConcept> = if rules.contains("placeable_relation") {
                PLACEABLE.into_iter().filter(|r| self.relations.contains(r)).collect()
            } else {
                self.relations.clone()
            };
            let r = pool.choose(&mut rng).ok_or(Reject::NoReferent)?;
            plan.slots.insert(l.slot, r.name().to_string());
        }

        if rules.contains("distinct_sets") {
            let plain: Vec<_> = set_descriptors.iter().filter(|(_, plain, _)| *plain).map(|(_, _, d)| d).collect();
            if plain.iter().enumerate().any(|(i, a)| plain[i + 1..].contains(a)) {
                return Err(Reject::Degenerate("distinct_sets".into()));
            }
        }

        let present: BTreeSet<SlotKey> = plan.slots.keys().copied().collect();
        if !template.admits(&present) {
            return Err(Reject::Render);
        }
        let program = bind(&template.expand(&present), &plan.slots);
        let trace = execute(&program, scene, &self.grounder, &self.exec);
        let value = match (trace.answer(), trace.failure()) {
            (Some(v), _) => v,
            (None, Some(f)) if f.kind == FailureKind::Grasping => return Err(Reject::InvalidAction),
            _ => return Err(Reject::UniqueFailure),
        };
        if let ExecValue::Action(action) = value {
            if check_action(action, scene).is_err() {
                return Err(Reject::InvalidAction);
            }
            if let ActionCommand::Sort { object_ids, container_id, .. } = action {
                if rules.contains("container_outside_set") && (object_ids.is_empty() || object_ids.contains(container_id)) {
                    return Err(Reject::Degenerate("container_outside_set".into()));
                }
            }
        }
        let question = self.render(template, &plan.slots, &mut rng).ok_or(Reject::Render)?;
        Ok(DatasetSample {
            scene_id: scene_id.to_string(),
            family: template.family.clone(),
            template_id: template.id.clone(),
            question,
            program: program.linearize(),
            answer: Answer::from_value(value, scene),
            seed,
        })
    }

    /// Concepts of relation slot type `ty` that hold for subject `n` against `anchors`.
    fn holding(&self, scene: &SceneGraph, ty: SlotType, n: ObjectId, anchors: &[ObjectId]) -> Vec<String> {
        let thr = &self.grounder.thresholds;
        match (ty, anchors) {
            (SlotType::R, [m]) => self
                .relations
                .iter()
                .filter(|&&r| zeta(scene, r, n, *m, thr).unwrap_or(false))
                .map(|r| r.name().to_string())
                .collect(),
            (SlotType::H, [m, k]) if m != k => self
                .hypers
                .iter()
                .filter(|&&h| hyper_zeta(scene, h, n, *m, *k).unwrap_or(false))
                .map(|h| h.name().to_string())
                .collect(),
            _ => Vec::new(),
        }
    }

    fn run_set(&self, program: &Program, scene: &SceneGraph) -> Result<Vec<ObjectId>, Reject> {
        match execute(program, scene, &self.grounder, &self.exec).answer() {
            Some(ExecValue::ObjSet(s)) => Ok(s.clone()),
            _ => Err(Reject::UniqueFailure),
        }
    }

    /// Every description of `t` within `set` that the template can express:
    /// attribute subsets that isolate it, or a location that singles it out.
    fn object_options(
        &self,
        template: &Template,
        g: u8,
        t: ObjectId,
        set: &[ObjectId],
        scene: &SceneGraph,
        banned: &BTreeSet<AttrType>,
    ) -> Vec<Vec<(SlotType, String)>> {
        let has = |ty| template.slots().contains(&SlotKey::new(ty, g));
        let node = &scene.objects[t];
        let matches = |n: ObjectId, desc: &[(SlotType, String)]| described(scene, n, desc.iter().map(|(t, v)| (t, v)));
        let mut out = Vec::new();
        let mut nouns = vec![None];
        if has(SlotType::Y) && !banned.contains(&AttrType::Category) {
            nouns.push(Some((SlotType::Y, node.category.clone())));
        }
        let toggle = |ty, attr| if has(ty) && !banned.contains(&attr) { vec![false, true] } else { vec![false] };
        for noun in &nouns {
            for c in toggle(SlotType::C, AttrType::Color) {
                for m in toggle(SlotType::M, AttrType::Material) {
                    let mut desc: Vec<(SlotType, String)> = noun.iter().cloned().collect();
                    if c {
                        desc.push((SlotType::C, node.color.clone()));
                    }
                    if m {
                        desc.push((SlotType::M, node.material.clone()));
                    }
                    let filtered: Vec<ObjectId> = set.iter().copied().filter(|&n| matches(n, &desc)).collect();
                    if filtered == [t] {
                        out.push(desc.clone());
                    }
                    if has(SlotType::L) && filtered.len() >= 2 {
                        for &loc in &self.locations {
                            if self.strict_argmax(scene, loc, t, &filtered) {
                                let mut d = desc.clone();
                                d.push((SlotType::L, loc.name().to_string()));
                                out.push(d);
                            }
                        }
                    }
                }
            }
        }
        if has(SlotType::X) && !banned.contains(&AttrType::Category) {
            if let Some(inst) = &node.instance_name {
                let speakable =
                    self.memory.entry(ConceptKind::Attr(AttrType::Instance), inst).is_some_and(|e| !e.synonyms.is_empty());
                let desc = vec![(SlotType::X, inst.clone())];
                if speakable && set.iter().copied().filter(|&n| matches(n, &desc)).eq([t]) {
                    out.push(desc);
                }
            }
        }
        out
    }

    fn strict_argmax(&self, scene: &SceneGraph, loc: RelationConcept, t: ObjectId, set: &[ObjectId]) -> bool {
        let thr = &self.grounder.thresholds;
        let score = |n| location_score(scene, loc, n, set, thr).unwrap_or(0);
        let best = score(t);
        set.iter().all(|&n| n == t || score(n) < best)
    }

    /// Attribute labels restricting a set group. Usually read off one
    /// source object; a requested "no" answer draws labels that no member of
    /// `set` carries.
    #[allow(clippy::too_many_arguments)]
    fn set_descriptor(
        &self,
        template: &Template,
        g: u8,
        set: &[ObjectId],
        scene: &SceneGraph,
        banned: &BTreeSet<AttrType>,
        require_attr: bool,
        steer: Option<bool>,
        rng: &mut Rng,
    ) -> BTreeMap<SlotType, String> {
        let attrs: Vec<(SlotType, AttrType)> =
            [(SlotType::Y, AttrType::Category), (SlotType::C, AttrType::Color), (SlotType::M, AttrType::Material)]
                .into_iter()
                .filter(|(ty, attr)| template.slots().contains(&SlotKey::new(*ty, g)) && !banned.contains(attr))
                .collect();
        let outside: Vec<ObjectId> = scene.ids().filter(|n| !set.contains(n)).collect();
        if steer == Some(false) {
            for _ in 0..30 {
                let mut desc = BTreeMap::new();
                for &(ty, attr) in &attrs {
                    if !rng.random_bool(0.5) {
                        continue;
                    }
                    let value = match outside.choose(rng) {
                        Some(&n) if rng.random_bool(0.5) => scene.objects[n].label(attr).map(str::to_string),
                        _ => self.memory.values(attr).collect::<Vec<_>>().choose(rng).map(|v| v.to_string()),
                    };
                    if let Some(v) = value {
                        desc.insert(ty, v);
                    }
                }
                if !desc.is_empty() && !set.iter().any(|&n| described(scene, n, &desc)) {
                    return desc;
                }
            }
        }
        let all: Vec<ObjectId> = scene.ids().collect();
        let source = match steer {
            Some(true) if !set.is_empty() => set.choose(rng),
            _ if !set.is_empty() && rng.random_bool(0.6) => set.choose(rng),
            _ => all.choose(rng),
        };
        let Some(&source) = source else {
            return BTreeMap::new();
        };
        let o = &scene.objects[source];
        let label = |attr| o.label(attr).unwrap_or_default().to_string();
        let mut desc: BTreeMap<SlotType, String> =
            attrs.iter().filter(|_| rng.random_bool(0.5)).map(|&(ty, attr)| (ty, label(attr))).collect();
        if desc.is_empty() && require_attr {
            if let Some(&(ty, attr)) = attrs.choose(rng) {
                desc.insert(ty, label(attr));
            }
        }
        desc
    }

    /// Surface text for the bound slots, or `None` if the pattern cannot
    /// consume exactly these slots.
    fn render(&self, template: &Template, slots: &BTreeMap<SlotKey, String>, rng: &mut Rng) -> Option<String> {
        let mut plural = BTreeSet::new();
        collect_plural(&template.pattern, &mut plural);
        let mut surfaces = BTreeMap::new();
        for (&key, canonical) in slots {
            let kind = slot_kind(key.ty);
            let entry = self.memory.entry(kind, canonical)?;
            let mut forms: Vec<String> = entry.synonyms.clone();
            if plural.contains(&key) {
                forms = forms.iter().filter_map(|f| self.pluralize_phrase(f)).collect();
            }
            surfaces.insert(key, forms.choose(rng)?.clone());
        }
        let (words, consumed) = render_seq(&template.pattern, &surfaces, rng)?;
        if consumed != surfaces.keys().copied().collect::<BTreeSet<_>>() {
            return None;
        }
        let mut words = words;
        for i in 0..words.len().saturating_sub(1) {
            if words[i] == "a" && words[i + 1].starts_with(['a', 'e', 'i', 'o', 'u', 'A', 'E', 'I', 'O', 'U']) {
                words[i] = "an".into();
            }
        }
        let mut text = words.join(" ");
        if let Some(first) = text.get(0..1) {
            text = first.to_uppercase() + &text[1..];
        }
        text.push(template.terminal);
        Some(text)
    }

    /// Plural of a phrase (last word inflected) if the tagger reads it back.
    fn pluralize_phrase(&self, phrase: &str) -> Option<String> {
        let (head, last) = match phrase.rsplit_once(' ') {
            Some((h, l)) => (Some(h), l),
            None => (None, phrase),
        };
        let plural = pluralize(last);
        let lower = last.to_lowercase();
        if self.memory.singularize(&plural.to_lowercase()) != lower {
            return None;
        }
        Some(match head {
            Some(h) => format!("{h} {plural}"),
            None => plural,
        })
    }
}

/// Whether object `n` carries every attribute label of a description.
fn described<'a>(scene: &SceneGraph, n: ObjectId, desc: impl IntoIterator<Item = (&'a SlotType, &'a String)>) -> bool {
    let o = &scene.objects[n];
    desc.into_iter().all(|(ty, v)| match ty {
        SlotType::Y => o.category == *v,
        SlotType::X => o.instance_name.as_deref() == Some(v.as_str()),
        SlotType::C => o.color == *v,
        SlotType::M => o.material == *v,
        _ => true,
    })
}

pub fn pluralize(word: &str) -> String {
    match word {
        "knife" => "knives".into(),
        "mouse" => "mice".into(),
        w if w.ends_with('s') => w.into(),
        w if ["ch", "sh", "x", "z"].iter().any(|s| w.ends_with(s)) => format!("{w}es"),
        w => format!("{w}s"),
    }
}

fn slot_kind(ty: SlotType) -> ConceptKind {
    match ty {
        SlotType::Y => ConceptKind::Attr(AttrType::Category),
        SlotType::X => ConceptKind::Attr(AttrType::Instance),
        SlotType::C => ConceptKind::Attr(AttrType::Color),
        SlotType::M => ConceptKind::Attr(AttrType::Material),
        SlotType::L => ConceptKind::Location,
        SlotType::R => ConceptKind::Relation,
        SlotType::H => ConceptKind::HyperRelation,
    }
}

/// Replace slot placeholders with bound concepts.
fn bind(p: &Program, slots: &BTreeMap<SlotKey, String>) -> Program {
    let concept = p.concept.as_deref().map(|c| match SlotKey::from_placeholder(c) {
        Some(key) => slots.get(&key).unwrap_or_else(|| panic!("placeholder {c} bound before execution")).clone(),
        None => c.to_string(),
    });
    Program { primitive: p.primitive, concept, children: p.children.iter().map(|c| bind(c, slots)).collect() }
}

/// Attributes a group may not mention under the family's degenerate rules.
fn collect_forbidden(s: &Skel, enclosing: Option<u8>, rules: &BTreeSet<&str>, out: &mut BTreeMap<u8, BTreeSet<AttrType>>) {
    match s {
        Skel::Set { group, base } | Skel::Obj { group, base } => collect_forbidden(base, Some(*group), rules, out),
        Skel::Call { op, args, .. } => {
            if let Some(attr) = op.attribute() {
                use Primitive::*;
                let target = match op {
                    QueryCategory | QueryColor | QueryMaterial
                        if rules.contains("queried_attribute_unmentioned")
                            || rules.contains("compared_attribute_unmentioned") =>
                    {
                        args.first().and_then(Skel::group)
                    }
                    SameCategory | SameColor | SameMaterial if rules.contains("shared_attribute_unmentioned") => enclosing,
                    _ => None,
                };
                if let Some(g) = target {
                    out.entry(g).or_default().insert(attr);
                }
            }
            for a in args {
                collect_forbidden(a, enclosing, rules, out);
            }
        }
    }
}

fn collect_plural(seq: &[Elem], out: &mut BTreeSet<SlotKey>) {
    for e in seq {
        match e {
            Elem::Slot { key, plural: true } => {
                out.insert(*key);
            }
            Elem::Opt(inner) => collect_plural(inner, out),
            Elem::Alt(alts) => alts.iter().for_each(|a| collect_plural(a, out)),
            _ => {}
        }
    }
}

type Rendered = (Vec<String>, BTreeSet<SlotKey>);

fn render_seq(seq: &[Elem], surfaces: &BTreeMap<SlotKey, String>, rng: &mut Rng) -> Option<Rendered> {
    let mut words: Vec<String> = Vec::new();
    let mut consumed = BTreeSet::new();
    for e in seq {
        match e {
            Elem::Word(w) => words.push(w.clone()),
            Elem::Punct(p) => match words.last_mut() {
                Some(last) => last.push_str(p),
                None => words.push(p.clone()),
            },
            Elem::Slot { key, .. } => {
                words.push(surfaces.get(key)?.clone());
                consumed.insert(*key);
            }
            Elem::Opt(inner) => {
                if let Some((w, c)) = render_seq(inner, surfaces, rng) {
                    if !c.is_empty() || rng.random_bool(0.5) {
                        words.extend(w);
                        consumed.extend(c);
                    }
                }
            }
            Elem::Alt(alts) => {
                let options: Vec<Rendered> = alts.iter().filter_map(|a| render_seq(a, surfaces, rng)).collect();
                let most = options.iter().map(|(_, c)| c.len()).max()?;
                let best: Vec<&Rendered> = options.iter().filter(|(_, c)| c.len() == most).collect();
                let (w, c) = (*best.choose(rng)?).clone();
                words.extend(w);
                consumed.extend(c);
            }
        }
    }
    Some((words, consumed))
}
