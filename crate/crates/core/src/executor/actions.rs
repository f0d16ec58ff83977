use super::FailureKind;
use crate::relations::RelationConcept;
use crate::scene::{round9, Box3, GraspPose, ObjectId, SceneGraph, EPS};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use thiserror::Error;

/// Gap left between a placed object and its reference, normalised units.
pub const CLEARANCE: f64 = 0.02;

/// Target pose of a placed object: box center (normalised) and yaw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacePose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ActionCommand {
    Grasp { object_id: ObjectId, grasp: GraspPose },
    PickPlace { pick_id: ObjectId, ref_id: ObjectId, relation: RelationConcept, place_pose: PlacePose },
    Sort { object_ids: Vec<ObjectId>, container_id: ObjectId, place_poses: Vec<PlacePose> },
}

impl fmt::Display for ActionCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionCommand::Grasp { object_id, grasp } => write!(
                f,
                "grasp object {object_id} at (u={:.3}, v={:.3}, phi={:.3}, width={:.3})",
                grasp.u, grasp.v, grasp.phi, grasp.omega
            ),
            ActionCommand::PickPlace { pick_id, ref_id, relation, place_pose: p } => write!(
                f,
                "pick object {pick_id} and place it {relation} of object {ref_id} at (x={:.3}, y={:.3})",
                p.x, p.y
            ),
            ActionCommand::Sort { object_ids, container_id, .. } => {
                let ids: Vec<String> = object_ids.iter().map(|i| i.to_string()).collect();
                write!(f, "sort objects {} into object {container_id}", ids.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionCheckError {
    #[error("invalid object id {0}")]
    InvalidObjectId(ObjectId),
    #[error("\"{0}\" does not describe a place to put an object")]
    Unplaceable(RelationConcept),
    #[error("the placed object would collide with object {0}")]
    Collision(ObjectId),
    #[error("the target pose leaves the workspace")]
    OutOfWorkspace,
    #[error("the grasp point of object {0} lies outside its footprint")]
    GraspOutsideFootprint(ObjectId),
    #[error("the gripper width for object {0} is not feasible")]
    InvalidWidth(ObjectId),
    #[error("the grasp angle for object {0} is out of range")]
    InvalidAngle(ObjectId),
    #[error("a sort pose lies outside container {0}")]
    OutsideContainer(ObjectId),
}

impl ActionCheckError {
    pub fn kind(&self) -> FailureKind {
        match self {
            ActionCheckError::Unplaceable(_) | ActionCheckError::InvalidObjectId(_) => FailureKind::IllPosed,
            _ => FailureKind::Grasping,
        }
    }
}

fn object(scene: &SceneGraph, id: ObjectId) -> Result<&Box3, ActionCheckError> {
    scene.get(id).map(|o| &o.bbox).ok_or(ActionCheckError::InvalidObjectId(id))
}

/// Unit direction (x, y) of a placement relation.
fn direction(r: RelationConcept) -> Option<[f64; 2]> {
    match r {
        RelationConcept::Left => Some([-1.0, 0.0]),
        RelationConcept::Right | RelationConcept::Next => Some([1.0, 0.0]),
        RelationConcept::Behind | RelationConcept::Further => Some([0.0, 1.0]),
        RelationConcept::Front | RelationConcept::Closer => Some([0.0, -1.0]),
        RelationConcept::Bigger | RelationConcept::Smaller => None,
    }
}

fn collision(scene: &SceneGraph, placed: &Box3, pick: ObjectId) -> Option<ObjectId> {
    scene.objects.iter().find(|o| o.id != pick && o.bbox.intersects(placed)).map(|o| o.id)
}

fn candidate(pick: &Box3, reference: &Box3, dir: [f64; 2]) -> Box3 {
    let mut c = reference.center;
    for axis in 0..2 {
        let offset = reference.extents[axis] / 2.0 + pick.extents[axis] / 2.0 + CLEARANCE;
        c[axis] += dir[axis] * offset;
        let half = pick.extents[axis] / 2.0;
        c[axis] = round9(c[axis].clamp(half, 1.0 - half));
    }
    c[2] = round9(pick.extents[2] / 2.0);
    Box3 { center: c, extents: pick.extents }
}

/// Place pose adjacent to `reference` along the relation axis, clipped to
/// the workspace. `next` tries the right side first, then the left.
pub fn place_pose_for(
    scene: &SceneGraph,
    pick: ObjectId,
    reference: ObjectId,
    r: RelationConcept,
) -> Result<PlacePose, ActionCheckError> {
    let (pb, rb) = (object(scene, pick)?, object(scene, reference)?);
    let dir = direction(r).ok_or(ActionCheckError::Unplaceable(r))?;
    let mut dirs = vec![dir];
    if r == RelationConcept::Next {
        dirs.push([-1.0, 0.0]);
    }
    let mut last = None;
    for d in dirs {
        let placed = candidate(pb, rb, d);
        match collision(scene, &placed, pick) {
            None => {
                let phi = scene.objects[pick].grasp.phi;
                return Ok(PlacePose { x: placed.center[0], y: placed.center[1], z: placed.center[2], phi });
            }
            Some(id) => last = Some(ActionCheckError::Collision(id)),
        }
    }
    Err(last.expect("at least one direction tried"))
}

/// Grid of poses inside the container footprint, one per item, resting on
/// the container top.
pub fn sort_poses(scene: &SceneGraph, items: &[ObjectId], container: ObjectId) -> Vec<PlacePose> {
    let cb = &scene.objects[container].bbox;
    let [x0, y0, x1, y1] = cb.footprint();
    let k = items.len().max(1);
    let cols = (k as f64).sqrt().ceil() as usize;
    let rows = k.div_ceil(cols);
    items
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            let (col, row) = (i % cols, i / cols);
            PlacePose {
                x: round9(x0 + (col as f64 + 0.5) * (x1 - x0) / cols as f64),
                y: round9(y0 + (row as f64 + 0.5) * (y1 - y0) / rows as f64),
                z: round9(cb.extents[2] + scene.objects[id].bbox.extents[2] / 2.0),
                phi: scene.objects[id].grasp.phi,
            }
        })
        .collect()
}

/// Simulated feasibility check of an emitted action against the scene.
pub fn check_action(action: &ActionCommand, scene: &SceneGraph) -> Result<(), ActionCheckError> {
    match action {
        ActionCommand::Grasp { object_id, grasp } => {
            let b = object(scene, *object_id)?;
            if !b.footprint_contains(grasp.u, grasp.v) {
                return Err(ActionCheckError::GraspOutsideFootprint(*object_id));
            }
            if !(grasp.omega > 0.0 && grasp.omega <= b.extents[0].max(b.extents[1]) + EPS) {
                return Err(ActionCheckError::InvalidWidth(*object_id));
            }
            if !(-FRAC_PI_2..FRAC_PI_2).contains(&grasp.phi) {
                return Err(ActionCheckError::InvalidAngle(*object_id));
            }
            Ok(())
        }
        ActionCommand::PickPlace { pick_id, ref_id, relation, place_pose } => {
            let pb = object(scene, *pick_id)?;
            object(scene, *ref_id)?;
            direction(*relation).ok_or(ActionCheckError::Unplaceable(*relation))?;
            let placed = Box3 { center: [place_pose.x, place_pose.y, place_pose.z], extents: pb.extents };
            placed.validate().map_err(|_| ActionCheckError::OutOfWorkspace)?;
            match collision(scene, &placed, *pick_id) {
                Some(id) => Err(ActionCheckError::Collision(id)),
                None => Ok(()),
            }
        }
        ActionCommand::Sort { object_ids, container_id, place_poses } => {
            let cb = object(scene, *container_id)?;
            for &id in object_ids {
                object(scene, id)?;
            }
            if place_poses.len() != object_ids.len() || place_poses.iter().any(|p| !cb.footprint_contains(p.x, p.y)) {
                return Err(ActionCheckError::OutsideContainer(*container_id));
            }
            Ok(())
        }
    }
}
