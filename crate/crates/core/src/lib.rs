//! Neurosymbolic reasoning over tabletop scene graphs.
//!
//! The crate is organised bottom-up:
//!
//! * [`scene`] holds the world state (objects, boxes, grasp poses) and the
//!   constrained random scene sampler.
//! * [`relations`] evaluates the spatial heuristics over object boxes.
//! * [`grounding`] owns the concept memory and the grounder contract with a
//!   ground-truth oracle implementation.
//! * [`program`] is the typed primitive DSL: tree form, linear form, text
//!   syntax and static type checking.
//! * [`executor`] runs programs step by step, records traces, diagnoses
//!   failures and restructures programs from user feedback.
//! * [`parser`] turns natural-language queries into programs (IOB concept
//!   tagging, template matching and assignment-based argument binding).
//! * [`datagen`] produces question/program/answer datasets from templates.
//! * [`faults`] injects faults to exercise the failure taxonomy.

pub mod catalogue;
pub mod datagen;
pub mod executor;
pub mod faults;
pub mod grounding;
pub mod parser;
pub mod program;
pub mod relations;
pub mod rng;
pub mod scene;

pub use executor::{execute, ExecConfig, ExecValue, ExecutionTrace, FailureKind, FailureReport};
pub use grounding::{ConceptMemory, Grounder, OracleGrounder};
pub use parser::{parse, Grammar};
pub use program::Program;
pub use relations::{RelationConcept, RelationThresholds};
pub use scene::{SceneGraph, SamplerConfig};
