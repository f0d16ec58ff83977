//! Scene-graph world state.
//!
//! Boxes are axis aligned and stored normalised to the unit workspace. The
//! frame is the robot base frame: `x` grows left to right, `y` grows away
//! from the robot (larger `y` is farther), `z` is up.

mod grasp;
mod io;
mod sampler;

pub use grasp::{synthesize_grasp, PHI_Y_AXIS};
pub use io::{parse_scene, serialize_scene, SCENE_FILE_EXTENSION};
pub use sampler::{sample_scene, SamplerConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type ObjectId = usize;

/// Slack used when checking containment of values that went through
/// 9-significant-digit rounding.
pub const EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("no valid placement found after {attempts} attempts")]
    SamplingExhausted { attempts: usize },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
}

/// Round to 9 significant digits, the precision used by scene files.
pub fn round9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.8e}", x).parse().unwrap_or(x)
}

pub(crate) mod real9 {
    use serde::Serializer;

    pub fn f64<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(super::round9(*x))
    }

    pub fn vec3<S: Serializer>(x: &[f64; 3], s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeTuple;
        let mut t = s.serialize_tuple(3)?;
        for v in x {
            t.serialize_element(&super::round9(*v))?;
        }
        t.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3 {
    #[serde(serialize_with = "real9::vec3")]
    pub center: [f64; 3],
    /// Full side lengths.
    #[serde(serialize_with = "real9::vec3")]
    pub extents: [f64; 3],
}

impl Box3 {
    pub fn new(center: [f64; 3], extents: [f64; 3]) -> Result<Self, SceneError> {
        let b = Box3 { center, extents };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        for axis in 0..3 {
            let (c, l) = (self.center[axis], self.extents[axis]);
            if !(c.is_finite() && l.is_finite()) {
                return Err(SceneError::InvalidBox(format!("non-finite value on axis {axis}")));
            }
            if l <= 0.0 {
                return Err(SceneError::InvalidBox(format!("extent on axis {axis} must be positive, got {l}")));
            }
            if c - l / 2.0 < -EPS || c + l / 2.0 > 1.0 + EPS {
                return Err(SceneError::InvalidBox(format!(
                    "axis {axis} interval [{}, {}] leaves the unit workspace",
                    c - l / 2.0,
                    c + l / 2.0
                )));
            }
        }
        Ok(())
    }

    pub fn min(&self, axis: usize) -> f64 {
        self.center[axis] - self.extents[axis] / 2.0
    }

    pub fn max(&self, axis: usize) -> f64 {
        self.center[axis] + self.extents[axis] / 2.0
    }

    pub fn volume(&self) -> f64 {
        self.extents[0] * self.extents[1] * self.extents[2]
    }

    /// `[x_min, y_min, x_max, y_max]`
    pub fn footprint(&self) -> [f64; 4] {
        [self.min(0), self.min(1), self.max(0), self.max(1)]
    }

    pub fn footprint_contains(&self, x: f64, y: f64) -> bool {
        x >= self.min(0) - EPS && x <= self.max(0) + EPS && y >= self.min(1) - EPS && y <= self.max(1) + EPS
    }

    /// Open-interval intersection on all three axes.
    pub fn intersects(&self, other: &Box3) -> bool {
        (0..3).all(|a| self.min(a) < other.max(a) && other.min(a) < self.max(a))
    }

    /// Largest axis gap between the two footprints (negative when they overlap).
    pub fn footprint_gap(&self, other: &Box3) -> f64 {
        let gx = (other.min(0) - self.max(0)).max(self.min(0) - other.max(0));
        let gy = (other.min(1) - self.max(1)).max(self.min(1) - other.max(1));
        gx.max(gy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspPose {
    #[serde(serialize_with = "real9::f64")]
    pub u: f64,
    #[serde(serialize_with = "real9::f64")]
    pub v: f64,
    /// Rotation about the vertical axis, in `[-pi/2, pi/2)`.
    #[serde(serialize_with = "real9::f64")]
    pub phi: f64,
    /// Gripper opening width.
    #[serde(serialize_with = "real9::f64")]
    pub omega: f64,
    #[serde(serialize_with = "real9::f64")]
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectNode {
    pub id: ObjectId,
    pub category: String,
    pub color: String,
    pub material: String,
    pub supercategory: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_name: Option<String>,
    #[serde(rename = "box")]
    pub bbox: Box3,
    pub grasp: GraspPose,
    /// Reserved slot for a learned visual feature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<Vec<f64>>,
}

impl ObjectNode {
    /// Ground-truth label of the given attribute type.
    pub fn label(&self, attr: crate::grounding::AttrType) -> Option<&str> {
        use crate::grounding::AttrType::*;
        match attr {
            Category => Some(&self.category),
            Color => Some(&self.color),
            Material => Some(&self.material),
            Supercategory => Some(&self.supercategory),
            Instance => self.instance_name.as_deref(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Scattered,
    Crowded,
}

impl std::fmt::Display for SplitTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitTag::Scattered => "scattered",
            SplitTag::Crowded => "crowded",
        })
    }
}

/// Physical workspace size in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    #[serde(serialize_with = "real9::f64")]
    pub w: f64,
    #[serde(serialize_with = "real9::f64")]
    pub d: f64,
    #[serde(serialize_with = "real9::f64")]
    pub h: f64,
}

impl Default for Workspace {
    fn default() -> Self {
        Workspace { w: 1.0, d: 0.8, h: 0.4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub seed: u64,
    pub split_tag: SplitTag,
    pub workspace: Workspace,
    pub objects: Vec<ObjectNode>,
}

impl SceneGraph {
    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn get(&self, id: ObjectId) -> Option<&ObjectNode> {
        self.objects.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = ObjectId> + '_ {
        0..self.objects.len()
    }

    /// Structural invariants: contiguous ids, valid boxes and grasps, and no
    /// pairwise box intersection.
    pub fn validate(&self) -> Result<(), SceneError> {
        for (i, o) in self.objects.iter().enumerate() {
            if o.id != i {
                return Err(SceneError::Invalid(format!("object at position {i} has id {}", o.id)));
            }
            o.bbox.validate().map_err(|e| SceneError::Invalid(format!("object {i}: {e}")))?;
            if o.grasp.omega <= 0.0 {
                return Err(SceneError::Invalid(format!("object {i}: grasp width must be positive")));
            }
            if !o.bbox.footprint_contains(o.grasp.u, o.grasp.v) {
                return Err(SceneError::Invalid(format!("object {i}: grasp point outside footprint")));
            }
        }
        for i in 0..self.objects.len() {
            for j in i + 1..self.objects.len() {
                if self.objects[i].bbox.intersects(&self.objects[j].bbox) {
                    return Err(SceneError::Invalid(format!("objects {i} and {j} overlap")));
                }
            }
        }
        Ok(())
    }
}
