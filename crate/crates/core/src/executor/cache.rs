use super::filter_attr;
use crate::grounding::{AttrType, ConceptError, ConceptMemory, Grounder, GroundingError};
use crate::program::{Primitive, Step};
use crate::relations::{HyperRelationConcept, RelationConcept};
use crate::scene::{ObjectId, SceneGraph};
use std::collections::HashMap;

type Scored = Result<f64, GroundingError>;

/// Every grounding score a program can ask for, computed in one pass before
/// execution. Implements [`Grounder`] by lookup.
pub struct ScoreCache<'a> {
    memory: &'a ConceptMemory,
    attr: HashMap<(ObjectId, AttrType, String), Scored>,
    rel: HashMap<(ObjectId, ObjectId, RelationConcept), Scored>,
    hyper: HashMap<(ObjectId, ObjectId, ObjectId, HyperRelationConcept), Scored>,
}

impl<'a> ScoreCache<'a> {
    pub fn build<G: Grounder + ?Sized>(steps: &[Step], scene: &SceneGraph, g: &'a G) -> Self {
        let mut cache = ScoreCache { memory: g.memory(), attr: HashMap::new(), rel: HashMap::new(), hyper: HashMap::new() };
        let ids: Vec<ObjectId> = scene.ids().collect();
        for step in steps {
            match (step.op, step.concept.as_deref()) {
                (Primitive::FilterCategory | Primitive::FilterColor | Primitive::FilterMaterial, Some(c)) => {
                    let attr = filter_attr(step.op, c, g.memory());
                    for &n in &ids {
                        cache.attr.entry((n, attr, c.to_string())).or_insert_with(|| g.attr_score(scene, n, attr, c));
                    }
                }
                (
                    Primitive::QueryCategory
                    | Primitive::QueryColor
                    | Primitive::QueryMaterial
                    | Primitive::SameCategory
                    | Primitive::SameColor
                    | Primitive::SameMaterial,
                    _,
                ) => {
                    let attr = step.op.attribute().expect("attribute primitive");
                    for c in g.memory().values(attr) {
                        for &n in &ids {
                            cache.attr.entry((n, attr, c.to_string())).or_insert_with(|| g.attr_score(scene, n, attr, c));
                        }
                    }
                }
                (Primitive::Relate | Primitive::Locate, Some(c)) => {
                    let Ok(r) = c.parse::<RelationConcept>() else { continue };
                    for &n in &ids {
                        for &m in ids.iter().filter(|&&m| m != n) {
                            cache.rel.entry((n, m, r)).or_insert_with(|| g.rel_score(scene, n, m, r));
                        }
                    }
                }
                (Primitive::HyperRelate, Some(c)) => {
                    let Ok(h) = c.parse::<HyperRelationConcept>() else { continue };
                    for &n in &ids {
                        for &m in ids.iter().filter(|&&m| m != n) {
                            for &k in ids.iter().filter(|&&k| k != n && k != m) {
                                cache.hyper.entry((n, m, k, h)).or_insert_with(|| g.hyper_score(scene, n, m, k, h));
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        cache
    }

    pub fn len(&self) -> usize {
        self.attr.len() + self.rel.len() + self.hyper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn missing(what: String) -> GroundingError {
    GroundingError::Concept(ConceptError::UnknownConcept(what))
}

impl Grounder for ScoreCache<'_> {
    fn attr_score(&self, _: &SceneGraph, n: ObjectId, attr: AttrType, concept: &str) -> Scored {
        self.attr.get(&(n, attr, concept.to_string())).cloned().unwrap_or_else(|| Err(missing(concept.to_string())))
    }

    fn rel_score(&self, _: &SceneGraph, n: ObjectId, m: ObjectId, r: RelationConcept) -> Scored {
        self.rel.get(&(n, m, r)).cloned().unwrap_or_else(|| Err(missing(r.to_string())))
    }

    fn hyper_score(&self, _: &SceneGraph, n: ObjectId, m: ObjectId, k: ObjectId, h: HyperRelationConcept) -> Scored {
        self.hyper.get(&(n, m, k, h)).cloned().unwrap_or_else(|| Err(missing(h.to_string())))
    }

    fn memory(&self) -> &ConceptMemory {
        self.memory
    }
}
