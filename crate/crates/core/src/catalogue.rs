//! Object model catalogue used by the scene sampler.

use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

const OBJECTS_JSON: &str = include_str!("../data/objects.json");

/// One placeable object model with its ground-truth labels and physical
/// size in meters (x, y, z).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectModel {
    pub model: String,
    pub category: String,
    pub color: String,
    pub material: String,
    pub supercategory: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<String>,
    pub size: [f64; 3],
}

#[derive(Debug, Deserialize)]
struct CatalogueFile {
    #[allow(dead_code)]
    version: u32,
    models: Vec<ObjectModel>,
}

/// Parse a catalogue document (same layout as the bundled `objects.json`).
pub fn parse_catalogue(text: &str) -> Result<Vec<ObjectModel>, serde_json::Error> {
    let file: CatalogueFile = serde_json::from_str(text)?;
    Ok(file.models)
}

/// The bundled 58-model catalogue.
pub fn builtin() -> &'static [ObjectModel] {
    static MODELS: OnceLock<Vec<ObjectModel>> = OnceLock::new();
    MODELS.get_or_init(|| parse_catalogue(OBJECTS_JSON).expect("bundled objects.json is valid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grounding::{AttrType, ConceptMemory};
    use std::collections::BTreeMap;

    fn tally(f: impl Fn(&ObjectModel) -> &str) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for o in builtin() {
            *m.entry(f(o).to_string()).or_insert(0) += 1;
        }
        m
    }

    #[test]
    fn catalogue_marginals_match_synthetic_counts() {
        assert_eq!(builtin().len(), 58);
        let colors = tally(|o| &o.color);
        let expect = [
            ("red", 9), ("yellow", 6), ("purple", 2), ("pink", 3), ("black", 7),
            ("silver", 3), ("orange", 4), ("green", 9), ("blue", 8), ("white", 7),
        ];
        for (c, n) in expect {
            assert_eq!(colors[c], n, "color {c}");
        }
        let materials = tally(|o| &o.material);
        for (c, n) in [
            ("glass", 3), ("metal", 4), ("paper", 7), ("ceramic", 11),
            ("aluminium", 5), ("organic", 6), ("plastic", 19), ("synthetic", 3),
        ] {
            assert_eq!(materials[c], n, "material {c}");
        }
        let supers = tally(|o| &o.supercategory);
        for (c, n) in [("edibles", 13), ("electronics", 4), ("fruits", 6), ("kitchenware", 18), ("stationery", 17)] {
            assert_eq!(supers[c], n, "supercategory {c}");
        }
        assert_eq!(tally(|o| &o.category).len(), 25);
    }

    #[test]
    fn every_label_is_in_concept_memory() {
        let mem = ConceptMemory::builtin();
        for o in builtin() {
            assert!(mem.contains(AttrType::Category, &o.category), "{}", o.category);
            assert!(mem.contains(AttrType::Color, &o.color));
            assert!(mem.contains(AttrType::Material, &o.material));
            assert!(mem.contains(AttrType::Supercategory, &o.supercategory));
            if let Some(i) = &o.instance {
                assert!(mem.contains(AttrType::Instance, i), "{i}");
            }
        }
    }
}
