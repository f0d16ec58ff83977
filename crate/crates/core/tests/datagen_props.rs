use proptest::prelude::*;
use std::collections::BTreeSet;
use tnsr_core::datagen::{generate_dataset, Answer, DatagenError, DatasetConfig};
use tnsr_core::grounding::{AttrType, ConceptKind, ConceptMemory, Grounder};
use tnsr_core::program::delinearize;
use tnsr_core::relations::RelationConcept;
use tnsr_core::{execute, ExecConfig, OracleGrounder, RelationThresholds};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn corpus_invariants(seed in any::<u64>()) {
        let cfg = DatasetConfig { num_scenes: 3, seed, ..Default::default() };
        let data = generate_dataset(&cfg).unwrap();
        prop_assert_eq!(data.samples.len(), 3 * cfg.per_scene_quota());
        for f in &cfg.families {
            prop_assert_eq!(data.stats.samples_per_family[f], 3 * cfg.family_quota);
        }
        let mut seen = BTreeSet::new();
        let g = OracleGrounder::new(ConceptMemory::training(), cfg.thresholds);
        for s in &data.samples {
            prop_assert!(seen.insert((s.scene_id.clone(), s.question.clone())), "duplicate {}", s.question);
            let scene = &data.scenes.iter().find(|e| e.id == s.scene_id).unwrap().scene;
            let t = execute(&delinearize(&s.program).unwrap(), scene, &g, &ExecConfig::default());
            prop_assert_eq!(t.answer().map(|v| Answer::from_value(v, scene)), Some(s.answer.clone()));
        }
    }
}

#[test]
fn impossible_quota_is_reported() {
    let cfg = DatasetConfig { num_scenes: 2, family_quota: 500, families: vec!["zero_hop".into()], attempt_cap: 2, ..Default::default() };
    match generate_dataset(&cfg) {
        Err(DatagenError::QuotaUnmet(unmet)) => {
            assert_eq!(unmet.len(), 2);
            assert!(unmet.iter().all(|(_, f)| f == "zero_hop"));
        }
        other => panic!("expected QuotaUnmet, got {:?}", other.map(|d| d.samples.len())),
    }
}

#[test]
fn oracle_scores_are_indicators_and_canonicals_resolve_to_themselves() {
    let memory = ConceptMemory::training();
    let g = OracleGrounder::new(memory.clone(), RelationThresholds::default());
    let data = generate_dataset(&DatasetConfig { num_scenes: 2, ..Default::default() }).unwrap();
    let s = &data.scenes[0].scene;
    for attr in [AttrType::Category, AttrType::Color, AttrType::Material] {
        for c in memory.values(attr) {
            for n in s.ids() {
                let v = g.attr_score(s, n, attr, c).unwrap();
                assert!(v == 0.0 || v == 1.0);
            }
            let r = memory.resolve_concept(c).unwrap();
            assert_eq!(r.value, c);
            assert_eq!(memory.resolve_concept(&r.value).unwrap(), r);
        }
    }
    for r in RelationConcept::ALL {
        for n in s.ids() {
            for m in s.ids().filter(|&m| m != n) {
                let v = g.rel_score(s, n, m, r).unwrap();
                assert!(v == 0.0 || v == 1.0);
            }
        }
    }
    assert!(memory.entries(ConceptKind::Relation).len() >= RelationConcept::ALL.len());
}
