use super::{round9, Box3, GraspPose};

/// `-pi/2` at 9 significant digits, rounded up so it stays inside the
/// half-open `[-pi/2, pi/2)` range after serialisation.
pub const PHI_Y_AXIS: f64 = -1.570_796_32;

/// Analytic top-down grasp for an axis-aligned box: centred on the
/// footprint, closing across the shorter horizontal side.
pub fn synthesize_grasp(b: &Box3) -> GraspPose {
    let (lx, ly) = (b.extents[0], b.extents[1]);
    GraspPose {
        u: round9(b.center[0]),
        v: round9(b.center[1]),
        phi: if lx <= ly { 0.0 } else { PHI_Y_AXIS },
        omega: round9(lx.min(ly)),
        q: 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use rand::Rng;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn symmetric_cube() {
        let b = Box3::new([0.5, 0.5, 0.05], [0.1, 0.1, 0.1]).unwrap();
        let g = synthesize_grasp(&b);
        assert_eq!((g.u, g.v, g.omega, g.q), (0.5, 0.5, 0.1, 1.0));
        assert_eq!(g.phi, 0.0);
    }

    #[test]
    fn long_x_box_grasps_across_y() {
        let b = Box3::new([0.5, 0.5, 0.05], [0.3, 0.1, 0.1]).unwrap();
        let g = synthesize_grasp(&b);
        assert_eq!(g.omega, 0.1);
        assert_eq!(g.phi, PHI_Y_AXIS);
        assert!(g.phi >= -FRAC_PI_2 && g.phi < FRAC_PI_2);
        assert!((g.phi + FRAC_PI_2).abs() < 1e-8);
    }

    #[test]
    fn random_boxes_grasp_inside_footprint() {
        let mut rng = stream(11, Stream::Scene, 0);
        for _ in 0..50 {
            let ext = [rng.random_range(0.01..0.4), rng.random_range(0.01..0.4), rng.random_range(0.01..0.4)];
            let c = [
                rng.random_range(ext[0] / 2.0..1.0 - ext[0] / 2.0),
                rng.random_range(ext[1] / 2.0..1.0 - ext[1] / 2.0),
                ext[2] / 2.0,
            ];
            let b = Box3::new(c, ext).unwrap();
            let g = synthesize_grasp(&b);
            // interval containment computed from raw corners
            let (x0, x1) = (c[0] - ext[0] / 2.0, c[0] + ext[0] / 2.0);
            let (y0, y1) = (c[1] - ext[1] / 2.0, c[1] + ext[1] / 2.0);
            assert!(x0 <= g.u + 1e-9 && g.u <= x1 + 1e-9);
            assert!(y0 <= g.v + 1e-9 && g.v <= y1 + 1e-9);
            assert!(g.omega > 0.0);
        }
    }
}
