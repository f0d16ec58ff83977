use proptest::prelude::*;
use tnsr_core::scene::{parse_scene, sample_scene, serialize_scene, SplitTag};
use tnsr_core::SamplerConfig;

fn config(crowded: bool, min: usize, max: usize) -> SamplerConfig {
    if crowded {
        SamplerConfig::crowded(min, max)
    } else {
        SamplerConfig::scattered(min, max)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn sampled_scenes_hold_their_invariants(seed in any::<u64>(), crowded in any::<bool>(), min in 1usize..6, extra in 0usize..3) {
        let cfg = config(crowded, min, min + extra);
        let s = sample_scene(&cfg, seed).unwrap();
        prop_assert_eq!(&s, &sample_scene(&cfg, seed).unwrap());
        prop_assert!(s.len() >= cfg.min_objects && s.len() <= cfg.max_objects);
        prop_assert_eq!(s.split_tag, if crowded { SplitTag::Crowded } else { SplitTag::Scattered });
        for (i, a) in s.objects.iter().enumerate() {
            prop_assert_eq!(a.id, i);
            prop_assert!(a.bbox.validate().is_ok());
            for b in &s.objects[i + 1..] {
                // open intervals on all three axes
                let overlap = (0..3).all(|k| a.bbox.min(k) < b.bbox.max(k) && b.bbox.min(k) < a.bbox.max(k));
                prop_assert!(!overlap, "{} and {} overlap", a.id, b.id);
                if !crowded {
                    let d = ((a.bbox.center[0] - b.bbox.center[0]).powi(2) + (a.bbox.center[1] - b.bbox.center[1]).powi(2)).sqrt();
                    prop_assert!(d >= cfg.d_min - 1e-9, "centroids {d} apart");
                }
            }
        }
    }

    #[test]
    fn documents_round_trip(seed in any::<u64>(), crowded in any::<bool>()) {
        let s = sample_scene(&config(crowded, 2, 8), seed).unwrap();
        let text = serialize_scene(&s);
        let back = parse_scene(&text).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(serialize_scene(&back), text);
    }
}
