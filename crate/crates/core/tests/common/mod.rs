#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tnsr_core::executor::ExecValue;
use tnsr_core::grounding::{AttrType, ConceptKind, ConceptMemory};
use tnsr_core::program::{Primitive, Program, ValueType};
use tnsr_core::scene::sample_scene;
use tnsr_core::{SamplerConfig, SceneGraph};

pub const CATEGORIES: [&str; 3] = ["soda", "bowl", "book"];
pub const COLORS: [&str; 3] = ["red", "blue", "white"];
pub const MATERIALS: [&str; 2] = ["plastic", "metal"];

/// Canonical instance names, one per object slot, used to address objects.
pub fn instances(memory: &ConceptMemory) -> Vec<String> {
    memory.values(AttrType::Instance).take(8).map(str::to_string).collect()
}

/// A sampled layout with labels drawn from small palettes, so that filters
/// and comparisons hit often, and a distinct instance name per object.
pub fn labelled_scene(seed: u64, min: usize, max: usize, memory: &ConceptMemory) -> SceneGraph {
    let mut s = sample_scene(&SamplerConfig::crowded(min, max), seed).expect("sampler");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let names = instances(memory);
    for o in &mut s.objects {
        o.category = CATEGORIES.choose(&mut rng).unwrap().to_string();
        o.color = COLORS.choose(&mut rng).unwrap().to_string();
        o.material = MATERIALS.choose(&mut rng).unwrap().to_string();
        o.instance_name = Some(names[o.id].clone());
    }
    s
}

/// `unique(filter_category(scene(), <instance of n>))`.
pub fn pick(n: usize, memory: &ConceptMemory) -> Program {
    let c = &instances(memory)[n];
    Program::wrap(Primitive::Unique, None, Program::wrap(Primitive::FilterCategory, Some(c), Program::scene()))
}

pub fn matches_type(v: &ExecValue, t: ValueType) -> bool {
    matches!(
        (v, t),
        (ExecValue::ObjSet(_), ValueType::ObjSet)
            | (ExecValue::Obj(_), ValueType::Obj)
            | (ExecValue::Int(_), ValueType::Int)
            | (ExecValue::Bool(_), ValueType::Bool)
            | (ExecValue::Concept(_), ValueType::Concept(_))
            | (ExecValue::Action(_), ValueType::Action)
    )
}

fn concept(rng: &mut ChaCha8Rng, kind: ConceptKind, memory: &ConceptMemory) -> String {
    let values: Vec<&str> = match kind {
        ConceptKind::Attr(AttrType::Category) => CATEGORIES.to_vec(),
        ConceptKind::Attr(AttrType::Color) => COLORS.to_vec(),
        ConceptKind::Attr(AttrType::Material) => MATERIALS.to_vec(),
        k => memory.entries(k).iter().map(|e| e.canonical.as_str()).collect(),
    };
    values.choose(rng).unwrap().to_string()
}

const ATTRS: [AttrType; 3] = [AttrType::Category, AttrType::Color, AttrType::Material];

fn attr_op(a: AttrType, ops: [Primitive; 3]) -> Primitive {
    ops[ATTRS.iter().position(|&x| x == a).unwrap()]
}

/// Random type-correct program returning `ty`. Object arguments come from
/// `pick` often enough for most programs to run to completion.
pub fn random_program(rng: &mut ChaCha8Rng, ty: ValueType, depth: usize, objects: usize, memory: &ConceptMemory) -> Program {
    use Primitive::*;
    let d = depth.saturating_sub(1);
    let leaf = depth == 0;
    let sub = |rng: &mut ChaCha8Rng, t| random_program(rng, t, d, objects, memory);
    match ty {
        ValueType::ObjSet => match if leaf { rng.random_range(0..2) } else { rng.random_range(0..7) } {
            0 => Program::scene(),
            1 => {
                let a = *ATTRS.choose(rng).unwrap();
                let op = attr_op(a, [FilterCategory, FilterColor, FilterMaterial]);
                let c = concept(rng, ConceptKind::Attr(a), memory);
                let child = if leaf { Program::scene() } else { sub(rng, ValueType::ObjSet) };
                Program::wrap(op, Some(&c), child)
            }
            2 => {
                let op = *[SameCategory, SameColor, SameMaterial].choose(rng).unwrap();
                Program::wrap(op, None, sub(rng, ValueType::Obj))
            }
            3 => {
                let c = concept(rng, ConceptKind::Relation, memory);
                Program::wrap(Relate, Some(&c), sub(rng, ValueType::Obj))
            }
            4 => {
                let c = concept(rng, ConceptKind::HyperRelation, memory);
                Program::new(HyperRelate, Some(&c), vec![sub(rng, ValueType::Obj), sub(rng, ValueType::Obj)])
            }
            _ => {
                let op = if rng.random_bool(0.5) { And } else { Or };
                Program::new(op, None, vec![sub(rng, ValueType::ObjSet), sub(rng, ValueType::ObjSet)])
            }
        },
        ValueType::Obj => match rng.random_range(0..4) {
            0 if !leaf => Program::wrap(Unique, None, sub(rng, ValueType::ObjSet)),
            1 if !leaf => {
                let c = concept(rng, ConceptKind::Location, memory);
                Program::wrap(Locate, Some(&c), sub(rng, ValueType::ObjSet))
            }
            _ => pick(rng.random_range(0..objects), memory),
        },
        ValueType::Int => Program::wrap(Count, None, sub(rng, ValueType::ObjSet)),
        ValueType::Bool => match rng.random_range(0..3) {
            0 => Program::wrap(Exist, None, sub(rng, ValueType::ObjSet)),
            1 => {
                let op = *[EqualInteger, Greater, Less].choose(rng).unwrap();
                Program::new(op, None, vec![sub(rng, ValueType::Int), sub(rng, ValueType::Int)])
            }
            _ => {
                let a = *ATTRS.choose(rng).unwrap();
                let op = attr_op(a, [EqualCategory, EqualColor, EqualMaterial]);
                Program::new(op, None, vec![sub(rng, ValueType::Concept(a)), sub(rng, ValueType::Concept(a))])
            }
        },
        ValueType::Concept(a) => {
            Program::wrap(attr_op(a, [QueryCategory, QueryColor, QueryMaterial]), None, sub(rng, ValueType::Obj))
        }
        ValueType::Action => match rng.random_range(0..3) {
            0 => Program::wrap(Grasp, None, sub(rng, ValueType::Obj)),
            1 => {
                let c = concept(rng, ConceptKind::Relation, memory);
                Program::new(PickAndPlace, Some(&c), vec![sub(rng, ValueType::Obj), sub(rng, ValueType::Obj)])
            }
            _ => Program::new(Sort, None, vec![sub(rng, ValueType::ObjSet), sub(rng, ValueType::Obj)]),
        },
        ValueType::Relation | ValueType::HyperRelation => unreachable!("concept-only types"),
    }
}

pub fn random_type(rng: &mut ChaCha8Rng) -> ValueType {
    *[
        ValueType::ObjSet,
        ValueType::Obj,
        ValueType::Int,
        ValueType::Bool,
        ValueType::Concept(*ATTRS.choose(rng).unwrap()),
        ValueType::Action,
    ]
    .choose(rng)
    .unwrap()
}
