//! Ground-truth spatial predicates over normalised object boxes.
//!
//! All separation tests are strict; the proximity test for `next` is
//! inclusive and compares the squared centroid distance with `next_thr`.

use crate::scene::{Box3, ObjectId, SceneGraph};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RelationError {
    #[error("invalid object id {0}")]
    InvalidObjectId(ObjectId),
    #[error("object {0} cannot be related to itself")]
    SelfRelation(ObjectId),
    #[error("hyper-relation needs three distinct objects, got ({0}, {1}, {2})")]
    DegenerateTriple(ObjectId, ObjectId, ObjectId),
    #[error("unknown relation concept `{0}`")]
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationConcept {
    Left,
    Right,
    Behind,
    Front,
    Closer,
    Further,
    Bigger,
    Smaller,
    Next,
}

/// Version of the relation slot order used by [`EdgeFeatures`] and dataset files.
pub const RELATION_ORDER_VERSION: u32 = 1;

impl RelationConcept {
    /// Fixed serialisation order.
    pub const ALL: [RelationConcept; 9] = [
        RelationConcept::Left,
        RelationConcept::Right,
        RelationConcept::Behind,
        RelationConcept::Front,
        RelationConcept::Closer,
        RelationConcept::Further,
        RelationConcept::Bigger,
        RelationConcept::Smaller,
        RelationConcept::Next,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RelationConcept::Left => "left",
            RelationConcept::Right => "right",
            RelationConcept::Behind => "behind",
            RelationConcept::Front => "front",
            RelationConcept::Closer => "closer",
            RelationConcept::Further => "further",
            RelationConcept::Bigger => "bigger",
            RelationConcept::Smaller => "smaller",
            RelationConcept::Next => "next",
        }
    }
}

impl fmt::Display for RelationConcept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RelationConcept {
    type Err = RelationError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RelationConcept::ALL.into_iter().find(|r| r.name() == s).ok_or_else(|| RelationError::Unknown(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HyperRelationConcept {
    CloserThan,
    FurtherThan,
}

impl HyperRelationConcept {
    pub const ALL: [HyperRelationConcept; 2] = [HyperRelationConcept::CloserThan, HyperRelationConcept::FurtherThan];

    pub fn name(self) -> &'static str {
        match self {
            HyperRelationConcept::CloserThan => "closer_than",
            HyperRelationConcept::FurtherThan => "further_than",
        }
    }
}

impl fmt::Display for HyperRelationConcept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HyperRelationConcept {
    type Err = RelationError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HyperRelationConcept::ALL.into_iter().find(|r| r.name() == s).ok_or_else(|| RelationError::Unknown(s.to_string()))
    }
}

/// How `size_thr` enters the bigger/smaller comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SizeMode {
    /// `V_n > V_m + size_thr` on normalised volumes.
    #[default]
    Absolute,
    /// `V_n > V_m + size_thr * max(V_n, V_m)`.
    RatioOfMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationThresholds {
    pub size_thr: f64,
    pub next_thr: f64,
    #[serde(default)]
    pub size_mode: SizeMode,
}

impl Default for RelationThresholds {
    fn default() -> Self {
        RelationThresholds { size_thr: 0.45, next_thr: 0.25, size_mode: SizeMode::Absolute }
    }
}

impl RelationThresholds {
    /// Profile used by the dataset generator: the absolute 0.45 margin is
    /// larger than any normalised volume difference, so size relations use a
    /// ratio margin instead.
    pub fn datagen() -> Self {
        RelationThresholds { size_thr: 0.3, next_thr: 0.25, size_mode: SizeMode::RatioOfMax }
    }

    fn size_margin(&self, vn: f64, vm: f64) -> f64 {
        match self.size_mode {
            SizeMode::Absolute => self.size_thr,
            SizeMode::RatioOfMax => self.size_thr * vn.max(vm),
        }
    }
}

/// Box-level predicate for subject `n` and reference `m`.
pub fn zeta_boxes(r: RelationConcept, n: &Box3, m: &Box3, thr: &RelationThresholds) -> bool {
    let [xn, yn, _] = n.center;
    let [xm, ym, _] = m.center;
    let [lxn, lyn, _] = n.extents;
    let [lxm, lym, _] = m.extents;
    let x_overlap = (xn - xm).abs() < (lxn + lxm) / 2.0;
    match r {
        RelationConcept::Left => xn + lxn / 2.0 < xm - lxm / 2.0,
        RelationConcept::Right => xn - lxn / 2.0 > xm + lxm / 2.0,
        RelationConcept::Behind => x_overlap && yn - ym > (lyn + lym) / 2.0,
        RelationConcept::Front => x_overlap && yn - ym < -(lyn + lym) / 2.0,
        RelationConcept::Closer => yn + lyn / 2.0 < ym - lym / 2.0,
        RelationConcept::Further => yn - lyn / 2.0 > ym + lym / 2.0,
        RelationConcept::Bigger => {
            let (vn, vm) = (n.volume(), m.volume());
            vn > vm + thr.size_margin(vn, vm)
        }
        RelationConcept::Smaller => {
            let (vn, vm) = (n.volume(), m.volume());
            vn < vm - thr.size_margin(vn, vm)
        }
        RelationConcept::Next => squared_distance(n, m) <= thr.next_thr,
    }
}

fn squared_distance(a: &Box3, b: &Box3) -> f64 {
    (0..3).map(|i| (a.center[i] - b.center[i]).powi(2)).sum()
}

fn boxes<const K: usize>(scene: &SceneGraph, ids: [ObjectId; K]) -> Result<[&Box3; K], RelationError> {
    if let Some(&bad) = ids.iter().find(|&&id| scene.get(id).is_none()) {
        return Err(RelationError::InvalidObjectId(bad));
    }
    Ok(ids.map(|id| &scene.objects[id].bbox))
}

pub fn zeta(
    scene: &SceneGraph,
    r: RelationConcept,
    n: ObjectId,
    m: ObjectId,
    thr: &RelationThresholds,
) -> Result<bool, RelationError> {
    let [bn, bm] = boxes(scene, [n, m])?;
    if n == m {
        return Err(RelationError::SelfRelation(n));
    }
    Ok(zeta_boxes(r, bn, bm, thr))
}

/// `closer_than(n, m, k)`: `n` is strictly closer to `m` than to `k`.
pub fn hyper_zeta(
    scene: &SceneGraph,
    h: HyperRelationConcept,
    n: ObjectId,
    m: ObjectId,
    k: ObjectId,
) -> Result<bool, RelationError> {
    let [bn, bm, bk] = boxes(scene, [n, m, k])?;
    if n == m || n == k || m == k {
        return Err(RelationError::DegenerateTriple(n, m, k));
    }
    let diff = squared_distance(bn, bm) - squared_distance(bn, bk);
    Ok(match h {
        HyperRelationConcept::CloserThan => diff < 0.0,
        HyperRelationConcept::FurtherThan => diff > 0.0,
    })
}

/// `[b_n ; b_m ; zeta(b_n, b_m)]` with the relation block in [`RelationConcept::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeFeatures(pub [f64; 21]);

impl EdgeFeatures {
    pub const LEN: usize = 21;

    pub fn boxes(&self) -> &[f64] {
        &self.0[..12]
    }

    pub fn relations(&self) -> &[f64] {
        &self.0[12..]
    }
}

pub fn edge_features(
    scene: &SceneGraph,
    n: ObjectId,
    m: ObjectId,
    thr: &RelationThresholds,
) -> Result<EdgeFeatures, RelationError> {
    let [bn, bm] = boxes(scene, [n, m])?;
    if n == m {
        return Err(RelationError::SelfRelation(n));
    }
    let mut f = [0.0; 21];
    f[0..3].copy_from_slice(&bn.center);
    f[3..6].copy_from_slice(&bn.extents);
    f[6..9].copy_from_slice(&bm.center);
    f[9..12].copy_from_slice(&bm.extents);
    for (i, r) in RelationConcept::ALL.into_iter().enumerate() {
        f[12 + i] = zeta_boxes(r, bn, bm, thr) as u8 as f64;
    }
    Ok(EdgeFeatures(f))
}

/// Number of other candidates `m` with `zeta(r, n, m)`.
pub fn location_score(
    scene: &SceneGraph,
    r: RelationConcept,
    n: ObjectId,
    candidates: &[ObjectId],
    thr: &RelationThresholds,
) -> Result<usize, RelationError> {
    if !candidates.contains(&n) {
        return Err(RelationError::InvalidObjectId(n));
    }
    let mut score = 0;
    for &m in candidates {
        if m != n && zeta(scene, r, n, m, thr)? {
            score += 1;
        }
    }
    Ok(score)
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::scene::{sample_scene, SamplerConfig};

    fn pair(xn: f64, xm: f64) -> SceneGraph {
        scene(vec![node(0, [xn, 0.5, 0.05], [0.1, 0.1, 0.1]), node(1, [xm, 0.5, 0.05], [0.1, 0.1, 0.1])])
    }

    #[test]
    fn left_and_right_on_disjoint_intervals() {
        let s = pair(0.2, 0.5);
        let thr = RelationThresholds::default();
        assert!(zeta(&s, RelationConcept::Left, 0, 1, &thr).unwrap());
        assert!(!zeta(&s, RelationConcept::Right, 0, 1, &thr).unwrap());
    }

    #[test]
    fn equal_volumes_are_neither_bigger_nor_smaller() {
        let s = pair(0.2, 0.5);
        for size_thr in [0.0, 0.1, 0.45] {
            for mode in [SizeMode::Absolute, SizeMode::RatioOfMax] {
                let thr = RelationThresholds { size_thr, next_thr: 0.25, size_mode: mode };
                assert!(!zeta(&s, RelationConcept::Bigger, 0, 1, &thr).unwrap());
                assert!(!zeta(&s, RelationConcept::Smaller, 0, 1, &thr).unwrap());
            }
        }
    }

    #[test]
    fn next_is_inclusive_at_threshold() {
        // squared centroid distance 0.25 exactly
        let s = pair(0.25, 0.75);
        let thr = RelationThresholds::default();
        assert!(zeta(&s, RelationConcept::Next, 0, 1, &thr).unwrap());
        let s = pair(0.25, 0.7500001);
        assert!(!zeta(&s, RelationConcept::Next, 0, 1, &thr).unwrap());
        // centroid distance 0.25 (squared 0.0625)
        let s = pair(0.25, 0.5);
        assert!(zeta(&s, RelationConcept::Next, 0, 1, &thr).unwrap());
    }

    #[test]
    fn errors() {
        let s = pair(0.2, 0.5);
        let thr = RelationThresholds::default();
        assert_eq!(zeta(&s, RelationConcept::Left, 0, 0, &thr), Err(RelationError::SelfRelation(0)));
        assert_eq!(zeta(&s, RelationConcept::Left, 0, 7, &thr), Err(RelationError::InvalidObjectId(7)));
        assert_eq!(hyper_zeta(&s, HyperRelationConcept::CloserThan, 0, 1, 1), Err(RelationError::DegenerateTriple(0, 1, 1)));
    }

    #[test]
    fn equidistant_hyper_is_false_both_ways() {
        let s = scene(vec![
            node(0, [0.5, 0.5, 0.05], [0.1, 0.1, 0.1]),
            node(1, [0.25, 0.5, 0.05], [0.1, 0.1, 0.1]),
            node(2, [0.75, 0.5, 0.05], [0.1, 0.1, 0.1]),
        ]);
        assert!(!hyper_zeta(&s, HyperRelationConcept::CloserThan, 0, 1, 2).unwrap());
        assert!(!hyper_zeta(&s, HyperRelationConcept::FurtherThan, 0, 1, 2).unwrap());
        assert_eq!(
            hyper_zeta(&s, HyperRelationConcept::CloserThan, 0, 1, 1),
            Err(RelationError::DegenerateTriple(0, 1, 1))
        );
    }

    /// Re-derivation from explicit corner coordinates.
    fn corner_oracle(r: RelationConcept, n: &Box3, m: &Box3, thr: &RelationThresholds) -> bool {
        let n_lo = [n.center[0] - n.extents[0] / 2.0, n.center[1] - n.extents[1] / 2.0];
        let n_hi = [n.center[0] + n.extents[0] / 2.0, n.center[1] + n.extents[1] / 2.0];
        let m_lo = [m.center[0] - m.extents[0] / 2.0, m.center[1] - m.extents[1] / 2.0];
        let m_hi = [m.center[0] + m.extents[0] / 2.0, m.center[1] + m.extents[1] / 2.0];
        // open x-intervals intersect
        let x_overlap = n_lo[0].max(m_lo[0]) < n_hi[0].min(m_hi[0]);
        let vol = |b: &Box3| b.extents.iter().product::<f64>();
        let margin = match thr.size_mode {
            SizeMode::Absolute => thr.size_thr,
            SizeMode::RatioOfMax => thr.size_thr * vol(n).max(vol(m)),
        };
        match r {
            RelationConcept::Left => n_hi[0] < m_lo[0],
            RelationConcept::Right => n_lo[0] > m_hi[0],
            RelationConcept::Behind => x_overlap && n_lo[1] > m_hi[1],
            RelationConcept::Front => x_overlap && n_hi[1] < m_lo[1],
            RelationConcept::Closer => n_hi[1] < m_lo[1],
            RelationConcept::Further => n_lo[1] > m_hi[1],
            RelationConcept::Bigger => vol(n) - vol(m) > margin,
            RelationConcept::Smaller => vol(m) - vol(n) > margin,
            RelationConcept::Next => {
                let d: f64 = (0..3).map(|i| (n.center[i] - m.center[i]).powi(2)).sum();
                d <= thr.next_thr
            }
        }
    }

    #[test]
    fn agrees_with_corner_oracle_on_random_pairs() {
        let mut checked = 0;
        for (seed, thr) in (0..40).zip([RelationThresholds::default(), RelationThresholds::datagen()].into_iter().cycle()) {
            let s = sample_scene(&SamplerConfig::crowded(6, 6), seed).unwrap();
            for n in 0..s.len() {
                for m in 0..s.len() {
                    if n == m || checked >= 200 * 9 {
                        continue;
                    }
                    for r in RelationConcept::ALL {
                        let got = zeta(&s, r, n, m, &thr).unwrap();
                        let want = corner_oracle(r, &s.objects[n].bbox, &s.objects[m].bbox, &thr);
                        assert_eq!(got, want, "{r} {n} {m} seed {seed}");
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked >= 200 * 9);
    }

    #[test]
    fn hyper_agrees_with_direct_distances() {
        let mut triples = 0;
        for seed in 0..20 {
            let s = sample_scene(&SamplerConfig::scattered(5, 5), seed).unwrap();
            for (n, m, k) in [(0, 1, 2), (1, 2, 3), (2, 3, 4), (4, 0, 1), (3, 4, 0)] {
                let p = |i: usize| s.objects[i].bbox.center;
                let d = |a: [f64; 3], b: [f64; 3]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
                let (dm, dk) = (d(p(n), p(m)), d(p(n), p(k)));
                assert_eq!(hyper_zeta(&s, HyperRelationConcept::CloserThan, n, m, k).unwrap(), dm < dk);
                assert_eq!(hyper_zeta(&s, HyperRelationConcept::FurtherThan, n, m, k).unwrap(), dm > dk);
                triples += 1;
            }
        }
        assert_eq!(triples, 100);
    }

    #[test]
    fn edge_feature_layout() {
        let s = sample_scene(&SamplerConfig::crowded(4, 4), 3).unwrap();
        let thr = RelationThresholds::default();
        let f = edge_features(&s, 0, 1, &thr).unwrap();
        assert_eq!(f.0.len(), EdgeFeatures::LEN);
        let g = edge_features(&s, 1, 0, &thr).unwrap();
        assert_eq!(&f.boxes()[..6], &g.boxes()[6..]);
        assert_eq!(&f.boxes()[6..], &g.boxes()[..6]);
        for (i, r) in RelationConcept::ALL.into_iter().enumerate() {
            assert_eq!(f.relations()[i], zeta(&s, r, 0, 1, &thr).unwrap() as u8 as f64);
            assert_eq!(g.relations()[i], zeta(&s, r, 1, 0, &thr).unwrap() as u8 as f64);
        }
        assert!(edge_features(&s, 2, 2, &thr).is_err());
    }

    #[test]
    fn location_scores() {
        let s = scene(vec![
            node(0, [0.1, 0.5, 0.05], [0.1, 0.1, 0.1]),
            node(1, [0.4, 0.5, 0.05], [0.1, 0.1, 0.1]),
            node(2, [0.7, 0.5, 0.05], [0.1, 0.1, 0.1]),
        ]);
        let thr = RelationThresholds::default();
        assert_eq!(location_score(&s, RelationConcept::Left, 0, &[0, 1, 2], &thr).unwrap(), 2);
        assert_eq!(location_score(&s, RelationConcept::Left, 2, &[0, 1, 2], &thr).unwrap(), 0);
        assert_eq!(location_score(&s, RelationConcept::Left, 1, &[1], &thr).unwrap(), 0);
        assert!(location_score(&s, RelationConcept::Left, 1, &[0, 2], &thr).is_err());
    }

    #[test]
    fn relation_order_is_fixed() {
        let names: Vec<_> = RelationConcept::ALL.iter().map(|r| r.name()).collect();
        assert_eq!(names, ["left", "right", "behind", "front", "closer", "further", "bigger", "smaller", "next"]);
        assert_eq!(serde_json::to_string(&RelationConcept::Front).unwrap(), "\"front\"");
        assert_eq!("next".parse::<RelationConcept>().unwrap(), RelationConcept::Next);
    }
}
