use super::*;
use crate::executor::{execute, ExecConfig};
use crate::parser::parse;
use std::sync::Arc;

fn small() -> DatasetConfig {
    DatasetConfig { num_scenes: 3, ..DatasetConfig::default() }
}

#[test]
fn pluralize_rules() {
    assert_eq!(pluralize("cup"), "cups");
    assert_eq!(pluralize("peach"), "peaches");
    assert_eq!(pluralize("box"), "boxes");
    assert_eq!(pluralize("knife"), "knives");
    assert_eq!(pluralize("mouse"), "mice");
    assert_eq!(pluralize("scissors"), "scissors");
}

#[test]
fn quotas_met_and_answers_reexecute() {
    let ds = generate_dataset(&small()).unwrap();
    assert_eq!(ds.samples.len(), 3 * 66);
    for f in DEFAULT_FAMILIES {
        assert_eq!(ds.stats.samples_per_family[f], 18, "{f}");
    }
    let gen = default_generator(ds.config.thresholds);
    for s in &ds.samples {
        let scene = &ds.scenes.iter().find(|e| e.id == s.scene_id).unwrap().scene;
        let program = crate::program::delinearize(&s.program).unwrap();
        let trace = execute(&program, scene, gen.grounder(), &ExecConfig::default());
        assert_eq!(Answer::from_value(trace.answer().unwrap(), scene), s.answer, "{}", s.question);
    }
}

#[test]
fn questions_parse_back() {
    let ds = generate_dataset(&small()).unwrap();
    let memory = ConceptMemory::training();
    let grammar = Grammar::builtin();
    let mut bad = Vec::new();
    for s in &ds.samples {
        match parse(&s.question, &memory, &grammar) {
            Ok(p) if p.linearize() == s.program => {}
            Ok(p) => bad.push(format!("{} [{}]\n  got  {}\n  want {}", s.question, s.template_id, p, crate::program::format_steps(&s.program))),
            Err(e) => bad.push(format!("{} [{}]: {e}", s.question, s.template_id)),
        }
    }
    assert!(bad.is_empty(), "{} of {} failed:\n{}", bad.len(), ds.samples.len(), bad.join("\n"));
}

#[test]
fn generation_is_deterministic() {
    let a = generate_dataset(&small()).unwrap();
    let b = generate_dataset(&small()).unwrap();
    assert_eq!(a, b);
}

fn two_red_sodas() -> SceneGraph {
    use crate::executor::tests::obj;
    SceneGraph {
        seed: 0,
        split_tag: crate::scene::SplitTag::Crowded,
        workspace: Default::default(),
        objects: vec![obj(0, "soda", "red", [0.3, 0.5], [0.1, 0.1, 0.2]), obj(1, "soda", "red", [0.7, 0.5], [0.1, 0.1, 0.2])],
    }
}

#[test]
fn no_unique_description_without_location() {
    let grammar = Grammar::from_json(
        r#"{"version": 1, "macros": {"np": "{[C:N]? [M:N]? {[Y:N]|thing}}"},
            "families": [{"family": "zero_hop", "degenerate": [], "templates": [
              {"id": "zero_hop.material", "text": "what material is the <np:1>?", "program": "query_material(@obj(1,scene()))"}]}]}"#,
    )
    .unwrap();
    let gen = Generator::new(ConceptMemory::training(), Arc::new(grammar), RelationThresholds::datagen());
    let t = gen.grammar().template("zero_hop.material").unwrap().clone();
    for seed in 0..20 {
        assert_eq!(gen.instantiate(&t, &two_red_sodas(), "s", seed, None).unwrap_err(), Reject::NoReferent);
    }
}

#[test]
fn location_breaks_the_tie() {
    let gen = default_generator(RelationThresholds::datagen());
    let t = gen.grammar().template("zero_hop.material").unwrap().clone();
    let s = gen.instantiate(&t, &two_red_sodas(), "s", 3, None).unwrap();
    assert!(s.program.iter().any(|st| st.op == crate::program::Primitive::Locate), "{}", s.question);
    assert_eq!(s.answer, Answer::Concept("plastic".into()));
}

#[test]
fn grasp_splits_layout() {
    let cfg = GraspSplitConfig { scenes_per_split: 2, ..Default::default() };
    let splits = generate_grasp_splits(&cfg).unwrap();
    assert_eq!(splits.splits.len(), 4);
    for s in &splits.splits {
        assert_eq!(s.pairs.len(), 10);
        for p in &s.pairs {
            assert!(s.complexity.families().contains(&p.family.as_str()));
        }
    }
}
