//! The executor under the oracle grounder against direct set comprehensions
//! over labels and relation predicates, on small scenes and over every
//! concept argument.

mod common;

use common::{labelled_scene, pick};
use proptest::prelude::*;
use tnsr_core::executor::{ActionCommand, ExecValue, FailureKind};
use tnsr_core::grounding::{AttrType, ConceptMemory};
use tnsr_core::program::{Primitive, Program};
use tnsr_core::relations::{hyper_zeta, zeta, HyperRelationConcept, RelationConcept};
use tnsr_core::{execute, ExecConfig, OracleGrounder, RelationThresholds, SceneGraph};

const ATTRS: [(AttrType, Primitive, Primitive, Primitive); 3] = [
    (AttrType::Category, Primitive::FilterCategory, Primitive::QueryCategory, Primitive::SameCategory),
    (AttrType::Color, Primitive::FilterColor, Primitive::QueryColor, Primitive::SameColor),
    (AttrType::Material, Primitive::FilterMaterial, Primitive::QueryMaterial, Primitive::SameMaterial),
];

fn run(p: &Program, s: &SceneGraph, g: &OracleGrounder) -> Result<ExecValue, FailureKind> {
    let t = execute(p, s, g, &ExecConfig::default());
    match (t.answer(), t.failure()) {
        (Some(v), _) => Ok(v.clone()),
        (_, Some(f)) => Err(f.kind),
        _ => unreachable!(),
    }
}

fn set(ids: impl IntoIterator<Item = usize>) -> Result<ExecValue, FailureKind> {
    let mut v: Vec<usize> = ids.into_iter().collect();
    v.sort_unstable();
    Ok(ExecValue::ObjSet(v))
}

fn filter(op: Primitive, c: &str, child: Program) -> Program {
    Program::wrap(op, Some(c), child)
}

fn check_scene(s: &SceneGraph, thr: RelationThresholds) {
    let memory = ConceptMemory::training();
    let g = OracleGrounder::new(memory.clone(), thr);
    let n = s.len();
    let ids = || 0..n;
    let label = |i: usize, a: AttrType| s.objects[i].label(a).map(str::to_string);

    for i in ids() {
        assert_eq!(run(&pick(i, &memory), s, &g), Ok(ExecValue::Obj(i)));
        assert!(matches!(
            run(&Program::wrap(Primitive::Grasp, None, pick(i, &memory)), s, &g),
            Ok(ExecValue::Action(ActionCommand::Grasp { object_id, grasp })) if object_id == i && grasp == s.objects[i].grasp
        ));
    }

    for (attr, f_op, q_op, same_op) in ATTRS {
        let values: Vec<String> = memory.values(attr).map(str::to_string).collect();
        for c in &values {
            let want: Vec<usize> = ids().filter(|&i| label(i, attr).as_deref() == Some(c)).collect();
            let p = filter(f_op, c, Program::scene());
            assert_eq!(run(&p, s, &g), set(want.clone()), "{}", p.to_text());
            assert_eq!(run(&Program::wrap(Primitive::Count, None, p.clone()), s, &g), Ok(ExecValue::Int(want.len() as i64)));
            assert_eq!(run(&Program::wrap(Primitive::Exist, None, p.clone()), s, &g), Ok(ExecValue::Bool(!want.is_empty())));
            let u = run(&Program::wrap(Primitive::Unique, None, p), s, &g);
            match want.as_slice() {
                [one] => assert_eq!(u, Ok(ExecValue::Obj(*one))),
                _ => assert_eq!(u, Err(FailureKind::IllPosed)),
            }
        }
        for i in ids() {
            let q = run(&Program::wrap(q_op, None, pick(i, &memory)), s, &g);
            assert_eq!(q, Ok(ExecValue::Concept(label(i, attr).unwrap())));
            let same = run(&Program::wrap(same_op, None, pick(i, &memory)), s, &g);
            assert_eq!(same, set(ids().filter(|&j| j != i && label(j, attr) == label(i, attr))));
            for j in ids() {
                let eq_op = match attr {
                    AttrType::Category => Primitive::EqualCategory,
                    AttrType::Color => Primitive::EqualColor,
                    _ => Primitive::EqualMaterial,
                };
                let p = Program::new(
                    eq_op,
                    None,
                    vec![Program::wrap(q_op, None, pick(i, &memory)), Program::wrap(q_op, None, pick(j, &memory))],
                );
                assert_eq!(run(&p, s, &g), Ok(ExecValue::Bool(label(i, attr) == label(j, attr))));
            }
        }
    }

    let colors: Vec<String> = common::COLORS.iter().map(|c| c.to_string()).collect();
    for r in RelationConcept::ALL {
        for m in ids() {
            let p = Program::wrap(Primitive::Relate, Some(r.name()), pick(m, &memory));
            let want = ids().filter(|&k| k != m && zeta(s, r, k, m, &thr).unwrap());
            assert_eq!(run(&p, s, &g), set(want), "{}", p.to_text());
        }
        let mut bases = vec![Program::scene()];
        bases.extend(colors.iter().map(|c| filter(Primitive::FilterColor, c, Program::scene())));
        for base in bases {
            let members = match run(&base, s, &g) {
                Ok(ExecValue::ObjSet(v)) => v,
                other => panic!("{other:?}"),
            };
            let score = |k: usize| members.iter().filter(|&&m| m != k && zeta(s, r, k, m, &thr).unwrap()).count();
            let best = members.iter().copied().max_by(|&a, &b| score(a).cmp(&score(b)).then(b.cmp(&a)));
            let got = run(&Program::wrap(Primitive::Locate, Some(r.name()), base), s, &g);
            match best {
                Some(b) => assert_eq!(got, Ok(ExecValue::Obj(b)), "locate {r}"),
                None => assert_eq!(got, Err(FailureKind::IllPosed)),
            }
        }
    }

    for h in HyperRelationConcept::ALL {
        for m1 in ids() {
            for m2 in ids() {
                let p = Program::new(Primitive::HyperRelate, Some(h.name()), vec![pick(m1, &memory), pick(m2, &memory)]);
                let got = run(&p, s, &g);
                if m1 == m2 {
                    assert_eq!(got, Err(FailureKind::IllPosed));
                } else {
                    let want = ids().filter(|&k| k != m1 && k != m2 && hyper_zeta(s, h, k, m1, m2).unwrap());
                    assert_eq!(got, set(want));
                }
            }
        }
    }

    let color_sets: Vec<(Program, Vec<usize>)> = colors
        .iter()
        .map(|c| {
            let want = ids().filter(|&i| s.objects[i].color == *c).collect();
            (filter(Primitive::FilterColor, c, Program::scene()), want)
        })
        .collect();
    for (pa, a) in &color_sets {
        for (pb, b) in &color_sets {
            let and = Program::new(Primitive::And, None, vec![pa.clone(), pb.clone()]);
            let or = Program::new(Primitive::Or, None, vec![pa.clone(), pb.clone()]);
            assert_eq!(run(&and, s, &g), set(a.iter().copied().filter(|x| b.contains(x))));
            let mut u: Vec<usize> = a.iter().chain(b).copied().collect();
            u.sort_unstable();
            u.dedup();
            assert_eq!(run(&or, s, &g), set(u));
            let count = |p: &Program| Program::wrap(Primitive::Count, None, p.clone());
            for (op, want) in [
                (Primitive::EqualInteger, a.len() == b.len()),
                (Primitive::Greater, a.len() > b.len()),
                (Primitive::Less, a.len() < b.len()),
            ] {
                let p = Program::new(op, None, vec![count(pa), count(pb)]);
                assert_eq!(run(&p, s, &g), Ok(ExecValue::Bool(want)));
            }
        }
    }
}

#[test]
fn exhaustive_on_small_scenes() {
    let memory = ConceptMemory::training();
    for seed in 0..40 {
        let s = labelled_scene(seed, 2, 6, &memory);
        let thr = if seed % 2 == 0 { RelationThresholds::default() } else { RelationThresholds::datagen() };
        check_scene(&s, thr);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn set_algebra(seed in 0u64..10_000, a in 0usize..3, b in 0usize..3, c in 0usize..3) {
        let memory = ConceptMemory::training();
        let s = labelled_scene(seed, 3, 6, &memory);
        let g = OracleGrounder::new(memory.clone(), RelationThresholds::default());
        let f = |i: usize| filter(Primitive::FilterColor, common::COLORS[i], Program::scene());
        let bin = |op, x: Program, y: Program| Program::new(op, None, vec![x, y]);
        for op in [Primitive::And, Primitive::Or] {
            prop_assert_eq!(run(&bin(op, f(a), f(b)), &s, &g), run(&bin(op, f(b), f(a)), &s, &g));
            prop_assert_eq!(
                run(&bin(op, bin(op, f(a), f(b)), f(c)), &s, &g),
                run(&bin(op, f(a), bin(op, f(b), f(c))), &s, &g)
            );
        }
        let cat = common::CATEGORIES[a];
        let once = filter(Primitive::FilterCategory, cat, Program::scene());
        let twice = filter(Primitive::FilterCategory, cat, once.clone());
        prop_assert_eq!(run(&once, &s, &g), run(&twice, &s, &g));
    }

    #[test]
    fn relate_never_returns_its_anchor(seed in 0u64..10_000, r in 0usize..9, m in 0usize..3) {
        let memory = ConceptMemory::training();
        let s = labelled_scene(seed, 3, 6, &memory);
        let g = OracleGrounder::new(memory.clone(), RelationThresholds::datagen());
        let r = RelationConcept::ALL[r];
        let p = Program::wrap(Primitive::Relate, Some(r.name()), pick(m, &memory));
        match run(&p, &s, &g) {
            Ok(ExecValue::ObjSet(v)) => prop_assert!(!v.contains(&m)),
            other => prop_assert!(false, "{:?}", other),
        }
    }
}
