//! Local reference trajectories sampled from the global path.
//!
//! The optimizer tracks a short window of positions spaced along the global
//! polyline at the cruise speed: each planning cycle projects the vehicle
//! onto the polyline and walks forward one arc-length step per horizon slot.

use nalgebra::Vector3;

use crate::num::{norm3, norm_sq3, real, Real};

/// A horizon-length window of reference positions.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory<R: Real> {
    /// Exactly P ordered positions, meters.
    pub points: Vec<Vector3<R>>,
    /// Cruise speed the spacing was derived from, m/s.
    pub v_ref: R,
    /// Arc-length step between consecutive samples, meters (`v_ref * tau`).
    pub spacing: R,
}

/// Samples `count` positions along `polyline`, spaced `v_ref * tau` of arc
/// length apart, starting one step beyond the projection of `current_pos`
/// onto the polyline. Once the walk passes the final vertex, the remaining
/// samples repeat it exactly.
///
/// Panics if `polyline` is empty, `v_ref` or `tau` is not positive, or
/// `count` is zero; those are caller bugs, not runtime conditions.
pub fn sample_reference<R: Real>(
    polyline: &[Vector3<R>],
    current_pos: &Vector3<R>,
    v_ref: R,
    tau: R,
    count: usize,
) -> ReferenceTrajectory<R> {
    assert!(!polyline.is_empty(), "polyline must be non-empty");
    assert!(v_ref > R::zero(), "v_ref must be positive");
    assert!(tau > R::zero(), "tau must be positive");
    assert!(count >= 1, "count must be at least 1");

    let spacing = v_ref * tau;
    let last = *polyline.last().unwrap();

    // Cumulative arc length at each vertex.
    let mut cum = Vec::with_capacity(polyline.len());
    let mut total = R::zero();
    cum.push(R::zero());
    for w in polyline.windows(2) {
        total += norm3(&(w[1] - w[0]));
        cum.push(total);
    }

    // Arc-length coordinate of the closest point on the polyline. Ties keep
    // the earliest coordinate so progress never jumps backwards on loops.
    let mut s0 = R::zero();
    let mut best = norm_sq3(&(current_pos - polyline[0]));
    for (i, w) in polyline.windows(2).enumerate() {
        let seg = w[1] - w[0];
        let len_sq = norm_sq3(&seg);
        let (t, candidate) = if len_sq > R::zero() {
            let t = ((current_pos - w[0]).dot(&seg) / len_sq)
                .max(R::zero())
                .min(R::one());
            (t, w[0] + seg * t)
        } else {
            (R::zero(), w[0])
        };
        let d = norm_sq3(&(current_pos - candidate));
        if d < best {
            best = d;
            s0 = cum[i] + t * (cum[i + 1] - cum[i]);
        }
    }

    let mut points = Vec::with_capacity(count);
    let mut seg = 0usize; // Monotone segment cursor.
    for k in 1..=count {
        let s = s0 + spacing * real::<R>(k as f64);
        if s >= total {
            points.push(last);
            continue;
        }
        while seg + 2 < cum.len() && cum[seg + 1] <= s {
            seg += 1;
        }
        let seg_len = cum[seg + 1] - cum[seg];
        let t = if seg_len > R::zero() {
            (s - cum[seg]) / seg_len
        } else {
            R::zero()
        };
        points.push(polyline[seg] + (polyline[seg + 1] - polyline[seg]) * t);
    }

    ReferenceTrajectory {
        points,
        v_ref,
        spacing,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn single_point_polyline_repeats_it() {
        let g = Vector3::new(3.0, -1.0, 2.0);
        let r = sample_reference(&[g], &Vector3::zeros(), 1.0, 0.1, 7);
        assert_eq!(r.points.len(), 7);
        for p in &r.points {
            assert_eq!(*p, g);
        }
    }

    #[test]
    fn straight_line_cruise_samples_are_uniform() {
        let line = [Vector3::new(0.0, 0.0, 0.0), Vector3::new(10.0, 0.0, 0.0)];
        let r = sample_reference(&line, &Vector3::zeros(), 1.0, 0.1, 20);
        assert_eq!(r.points.len(), 20);
        assert_eq!(r.spacing, 0.1);
        for (k, p) in r.points.iter().enumerate() {
            let want = 0.1 * (k as f64 + 1.0);
            assert_relative_eq!(p.x, want, max_relative = 1e-12);
            assert_eq!(p.y, 0.0);
            assert_eq!(p.z, 0.0);
        }
    }

    #[test]
    fn walk_starts_at_projection_of_current_position() {
        let line = [Vector3::new(0.0, 0.0, 0.0), Vector3::new(10.0, 0.0, 0.0)];
        // Off-path position projects to x = 0.55.
        let r = sample_reference(&line, &Vector3::new(0.55, 0.4, -0.2), 1.0, 0.1, 3);
        assert_relative_eq!(r.points[0].x, 0.65, max_relative = 1e-12);
        assert_relative_eq!(r.points[1].x, 0.75, max_relative = 1e-12);
        assert_relative_eq!(r.points[2].x, 0.85, max_relative = 1e-12);
    }

    /// Brute-force oracle: resample the polyline at 1e-4 m arc steps and take
    /// the nearest dense sample for each requested arc-length coordinate.
    fn dense_oracle(polyline: &[Vector3<f64>], step: f64) -> Vec<Vector3<f64>> {
        let mut out = vec![polyline[0]];
        for w in polyline.windows(2) {
            let len = (w[1] - w[0]).norm();
            let n = (len / step).round() as usize;
            for i in 1..=n {
                out.push(w[0] + (w[1] - w[0]) * (i as f64 / n as f64));
            }
        }
        out
    }

    #[test]
    fn corner_samples_preserve_cumulative_arc_length() {
        let polyline = [
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(1.0, 1.0, 0.0),
        ];
        let spacing = 0.3;
        let r = sample_reference(&polyline, &Vector3::zeros(), spacing, 1.0, 6);
        let dense = dense_oracle(&polyline, 1e-4);
        for (k, p) in r.points.iter().enumerate() {
            let s = spacing * (k as f64 + 1.0);
            let idx = ((s / 1e-4).round() as usize).min(dense.len() - 1);
            let q = dense[idx];
            assert!(
                (p - q).norm() < 1e-3,
                "sample {k} at arc {s}: got {p:?}, oracle {q:?}"
            );
        }
        // Sample 3 (s=1.2) sits 0.2 m up the second leg.
        assert_relative_eq!(r.points[3].x, 1.0, max_relative = 1e-12);
        assert_relative_eq!(r.points[3].y, 0.2, max_relative = 1e-9);
    }

    #[test]
    fn short_polyline_absorbs_into_final_vertex_exactly() {
        let polyline = [Vector3::new(0.0, 0.0, 0.0), Vector3::new(0.45, 0.0, 0.0)];
        let r = sample_reference(&polyline, &Vector3::zeros(), 1.0, 0.1, 8);
        // Samples 1..4 advance; samples 5.. repeat the goal bit-for-bit.
        for p in &r.points[4..] {
            assert_eq!(*p, polyline[1]);
        }
        assert!(r.points[3].x < 0.45);
    }

    #[test]
    fn degenerate_duplicate_vertices_are_skipped() {
        let polyline = [
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
        ];
        let r = sample_reference(&polyline, &Vector3::zeros(), 1.0, 0.25, 4);
        let xs: Vec<f64> = r.points.iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![0.25, 0.5, 0.75, 1.0]);
    }

    proptest! {
        /// Samples stay on the polyline, consecutive samples are at most one
        /// arc step apart in space, and trailing samples absorb at the goal.
        #[test]
        fn samples_lie_on_polyline_and_progress_monotonically(
            seed in 0u64..500,
            n_verts in 2usize..8,
            spacing in 0.05f64..0.5,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let polyline: Vec<Vector3<f64>> = (0..n_verts)
                .map(|_| Vector3::new(
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                ))
                .collect();
            let pos = Vector3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let r = sample_reference(&polyline, &pos, spacing, 1.0, 15);

            let dist_to_polyline = |q: &Vector3<f64>| -> f64 {
                polyline.windows(2).map(|w| {
                    let seg = w[1] - w[0];
                    let len_sq = seg.norm_squared();
                    let t = if len_sq > 0.0 {
                        ((q - w[0]).dot(&seg) / len_sq).clamp(0.0, 1.0)
                    } else { 0.0 };
                    (q - (w[0] + seg * t)).norm()
                }).fold(f64::INFINITY, f64::min)
            };

            let last = *polyline.last().unwrap();
            let mut absorbed = false;
            for w in r.points.windows(2) {
                prop_assert!((w[1] - w[0]).norm() <= spacing + 1e-9);
            }
            for p in &r.points {
                prop_assert!(dist_to_polyline(p) <= 1e-9);
                if absorbed {
                    prop_assert_eq!(*p, last);
                }
                if *p == last {
                    absorbed = true;
                }
            }
        }
    }
}
