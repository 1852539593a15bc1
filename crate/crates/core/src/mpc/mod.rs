//! Receding-horizon trajectory optimization.
//!
//! The planner minimizes a four-term cost over the jerk sequence `U`
//! (single shooting: states are eliminated through the exact linear
//! dynamics, so the dynamics constraint holds by construction):
//!
//! * tracking — squared distance to the reference positions,
//! * speed — squared departure of `‖v‖²` from the cruise speed squared,
//! * collision — a logistic barrier on the distance to each obstacle point,
//! * jerk — control effort.
//!
//! Velocity, acceleration, and jerk norms are bounded; the bounds enter the
//! solver as squared-norm inequalities to stay smooth at zero. The solver in
//! [`solver`] handles these with an augmented-Lagrangian outer loop around a
//! quasi-Newton line-search inner loop. [`total_cost_gradient`] exposes the
//! analytic adjoint gradient the solver uses; tests check it against central
//! finite differences.

mod solver;

pub use solver::solve;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{build_matrices, rollout, DynamicsParams, UavState};
use crate::num::{norm3, norm_sq3, real, Real};
use crate::reference::ReferenceTrajectory;
use crate::{Error, Result};

/// Weights and shape parameters of the four cost terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostWeights<R: Real> {
    /// Tracking weight.
    pub w_t: R,
    /// Speed-maintenance weight.
    pub w_s: R,
    /// Collision weight.
    pub w_c: R,
    /// Jerk (smoothness) weight.
    pub w_j: R,
    /// Logistic sharpness, 1/m: larger means a harder distance cutoff.
    pub alpha: R,
    /// Safety distance, meters: the logistic midpoint.
    pub r: R,
}

impl<R: Real> Default for CostWeights<R> {
    fn default() -> Self {
        CostWeights {
            w_t: real(1.0),
            w_s: real(0.5),
            w_c: real(10.0),
            w_j: real(0.1),
            alpha: real(10.0),
            r: real(0.5),
        }
    }
}

impl<R: Real> CostWeights<R> {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("w_t", self.w_t),
            ("w_s", self.w_s),
            ("w_c", self.w_c),
            ("w_j", self.w_j),
            ("alpha", self.alpha),
            ("r", self.r),
        ] {
            if !(v.is_finite() && v > R::zero()) {
                return Err(Error::invalid(name, "must be finite and strictly positive"));
            }
        }
        Ok(())
    }
}

/// Termination and tolerance settings for [`solve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig<R: Real> {
    /// Budget of accepted descent steps across all solver phases.
    pub max_iterations: usize,
    /// Absolute cost-decrease threshold for convergence.
    pub cost_tolerance: R,
    /// Maximum allowed constraint violation, SI units (norm overshoot).
    pub constraint_tolerance: R,
    /// Step used by derivative checks (tests), not by the solver itself.
    pub fd_step: R,
}

impl<R: Real> Default for SolverConfig<R> {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 50,
            cost_tolerance: real(1e-6),
            constraint_tolerance: real(1e-3),
            fd_step: real(1e-6),
        }
    }
}

impl<R: Real> SolverConfig<R> {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::invalid("max_iterations", "must be at least 1"));
        }
        for (name, v) in [
            ("cost_tolerance", self.cost_tolerance),
            ("constraint_tolerance", self.constraint_tolerance),
            ("fd_step", self.fd_step),
        ] {
            if !(v.is_finite() && v > R::zero()) {
                return Err(Error::invalid(name, "must be finite and strictly positive"));
            }
        }
        Ok(())
    }
}

/// The four cost terms and their sum at a given control sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown<R: Real> {
    pub tracking: R,
    pub speed: R,
    pub collision: R,
    pub jerk: R,
    pub total: R,
}

/// How a solve ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    /// Cost decrease below tolerance with constraints satisfied.
    Converged,
    /// Step budget exhausted; best iterate returned.
    IterationLimit,
    /// The initial state already violates the bounds beyond what the control
    /// authority can recover within the horizon.
    Infeasible,
}

/// One accepted descent step: the solver phase it happened in and the merit
/// value after the step. Within a phase the merit strictly decreases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeritRecord<R: Real> {
    pub phase: usize,
    pub merit: R,
}

/// Optimized horizon: states, controls, cost, and solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult<R: Real> {
    /// Predicted states x(k+1..k+P); always exactly `rollout(x0, controls)`.
    pub states: Vec<UavState<R>>,
    /// Optimized jerk sequence u(k..k+P-1).
    pub controls: Vec<Vector3<R>>,
    pub cost_breakdown: CostBreakdown<R>,
    /// Accepted descent steps consumed.
    pub iterations: usize,
    /// Worst norm-bound overshoot over the horizon, SI units.
    pub max_constraint_violation: R,
    pub status: SolveStatus,
    /// Merit value after each accepted step, tagged with its solver phase.
    pub merit_history: Vec<MeritRecord<R>>,
}

/// `w_t · Σ ‖p_i − p_ref,i‖²`. Errors when the state and reference windows
/// disagree in length.
pub fn tracking_cost<R: Real>(
    states: &[UavState<R>],
    reference: &ReferenceTrajectory<R>,
    w_t: R,
) -> Result<R> {
    if states.len() != reference.points.len() {
        return Err(Error::LengthMismatch {
            what: "reference points",
            expected: states.len(),
            got: reference.points.len(),
        });
    }
    let mut sum = R::zero();
    for (s, p_ref) in states.iter().zip(&reference.points) {
        sum += norm_sq3(&(s.p - p_ref));
    }
    Ok(w_t * sum)
}

/// `w_s · Σ (‖v_i‖² − v_ref²)²`.
pub fn speed_cost<R: Real>(states: &[UavState<R>], v_ref: R, w_s: R) -> R {
    let target = v_ref * v_ref;
    let mut sum = R::zero();
    for s in states {
        let e = norm_sq3(&s.v) - target;
        sum += e * e;
    }
    w_s * sum
}

/// `w_c · Σ_i Σ_m 1/(1 + exp(α(d_m − r)))` with `d_m` the Euclidean distance
/// from the i-th position to obstacle point m. Empty obstacle list → 0.
pub fn collision_cost<R: Real>(
    states: &[UavState<R>],
    obstacles: &[Vector3<R>],
    w_c: R,
    alpha: R,
    r: R,
) -> R {
    let mut sum = R::zero();
    for s in states {
        for m in obstacles {
            let d = norm3(&(s.p - m));
            sum += logistic(alpha * (d - r));
        }
    }
    w_c * sum
}

/// `w_j · Σ ‖u_i‖²`.
pub fn jerk_cost<R: Real>(controls: &[Vector3<R>], w_j: R) -> R {
    let mut sum = R::zero();
    for u in controls {
        sum += norm_sq3(u);
    }
    w_j * sum
}

/// `1/(1+e^x)`, overflow-safe at both tails.
fn logistic<R: Real>(x: R) -> R {
    R::one() / (R::one() + x.exp())
}

/// Rolls the controls out through the dynamics and evaluates the full cost.
/// Returns the total together with its per-term breakdown.
pub fn total_cost<R: Real>(
    controls: &[Vector3<R>],
    x0: &UavState<R>,
    reference: &ReferenceTrajectory<R>,
    obstacles: &[Vector3<R>],
    weights: &CostWeights<R>,
    params: &DynamicsParams<R>,
) -> Result<(R, CostBreakdown<R>)> {
    let states = rollout(x0, controls, params)?;
    breakdown_of(&states, controls, reference, obstacles, weights)
}

fn breakdown_of<R: Real>(
    states: &[UavState<R>],
    controls: &[Vector3<R>],
    reference: &ReferenceTrajectory<R>,
    obstacles: &[Vector3<R>],
    weights: &CostWeights<R>,
) -> Result<(R, CostBreakdown<R>)> {
    let tracking = tracking_cost(states, reference, weights.w_t)?;
    let speed = speed_cost(states, reference.v_ref, weights.w_s);
    let collision = collision_cost(states, obstacles, weights.w_c, weights.alpha, weights.r);
    let jerk = jerk_cost(controls, weights.w_j);
    let total = tracking + speed + collision + jerk;
    Ok((
        total,
        CostBreakdown {
            tracking,
            speed,
            collision,
            jerk,
            total,
        },
    ))
}

/// [`total_cost`] plus its analytic gradient with respect to the flattened
/// control sequence, computed by one backward (adjoint) sweep through the
/// linear dynamics. The returned gradient has one 3-vector per control.
pub fn total_cost_gradient<R: Real>(
    controls: &[Vector3<R>],
    x0: &UavState<R>,
    reference: &ReferenceTrajectory<R>,
    obstacles: &[Vector3<R>],
    weights: &CostWeights<R>,
    params: &DynamicsParams<R>,
) -> Result<(R, CostBreakdown<R>, Vec<Vector3<R>>)> {
    let states = rollout(x0, controls, params)?;
    let (total, breakdown) = breakdown_of(&states, controls, reference, obstacles, weights)?;
    let mats = build_matrices(params)?;
    let a_t = mats.a.transpose();
    let tau = params.tau;
    let two = real::<R>(2.0);

    let p_len = controls.len();
    let mut grad = vec![Vector3::zeros(); p_len];
    let mut lambda = nalgebra::SVector::<R, 9>::zeros();
    for i in (0..p_len).rev() {
        let mut g = stage_gradient(
            &states[i],
            &reference.points[i],
            reference.v_ref,
            obstacles,
            weights,
        );
        if i + 1 < p_len {
            g += a_t * lambda;
        }
        lambda = g;
        // B^T λ = τ · (acceleration rows of λ), plus the direct jerk term.
        grad[i] = Vector3::new(lambda[6], lambda[7], lambda[8]) * tau
            + controls[i] * (two * weights.w_j);
    }
    Ok((total, breakdown, grad))
}

/// Gradient of the stage cost (tracking + speed + collision) with respect to
/// the 9-component state.
fn stage_gradient<R: Real>(
    state: &UavState<R>,
    p_ref: &Vector3<R>,
    v_ref: R,
    obstacles: &[Vector3<R>],
    weights: &CostWeights<R>,
) -> nalgebra::SVector<R, 9> {
    let two = real::<R>(2.0);
    let four = real::<R>(4.0);
    let mut g = nalgebra::SVector::<R, 9>::zeros();

    let mut gp = (state.p - p_ref) * (two * weights.w_t);
    for m in obstacles {
        let diff = state.p - m;
        let d = norm3(&diff);
        if d > R::epsilon() {
            let s = logistic(weights.alpha * (d - weights.r));
            // d/dd of the logistic term, times the unit direction.
            let slope = -weights.alpha * s * (R::one() - s) * weights.w_c;
            gp += diff * (slope / d);
        }
    }
    g.fixed_rows_mut::<3>(0).copy_from(&gp);

    let speed_err = norm_sq3(&state.v) - v_ref * v_ref;
    let gv = state.v * (four * weights.w_s * speed_err);
    g.fixed_rows_mut::<3>(3).copy_from(&gv);
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state_at(p: Vector3<f64>, v: Vector3<f64>, a: Vector3<f64>) -> UavState<f64> {
        UavState { p, v, a }
    }

    fn reference_of(points: Vec<Vector3<f64>>, v_ref: f64) -> ReferenceTrajectory<f64> {
        ReferenceTrajectory {
            points,
            v_ref,
            spacing: v_ref * 0.1,
        }
    }

    #[test]
    fn exact_tracking_costs_nothing() {
        let pts = vec![Vector3::new(1.0, 2.0, 3.0), Vector3::new(4.0, 5.0, 6.0)];
        let states: Vec<_> = pts
            .iter()
            .map(|p| state_at(*p, Vector3::zeros(), Vector3::zeros()))
            .collect();
        let r = reference_of(pts, 1.0);
        assert_eq!(tracking_cost(&states, &r, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn tracking_hand_value_scales_linearly_in_weight() {
        let states = vec![state_at(
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::zeros(),
            Vector3::zeros(),
        )];
        let r = reference_of(vec![Vector3::zeros()], 1.0);
        let c2 = tracking_cost(&states, &r, 2.0).unwrap();
        let c4 = tracking_cost(&states, &r, 4.0).unwrap();
        assert_eq!(c2, 2.0);
        assert_eq!(c4, 2.0 * c2);
    }

    #[test]
    fn tracking_length_mismatch_is_an_error() {
        let states = vec![state_at(Vector3::zeros(), Vector3::zeros(), Vector3::zeros())];
        let r = reference_of(vec![Vector3::zeros(), Vector3::zeros()], 1.0);
        assert!(matches!(
            tracking_cost(&states, &r, 1.0),
            Err(Error::LengthMismatch {
                what: "reference points",
                expected: 1,
                got: 2,
            })
        ));
    }

    #[test]
    fn on_speed_states_cost_nothing() {
        // ‖v‖ = 1 in an oblique direction.
        let states = vec![state_at(
            Vector3::zeros(),
            Vector3::new(0.6, 0.8, 0.0),
            Vector3::zeros(),
        )];
        assert_relative_eq!(speed_cost(&states, 1.0, 0.5), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn speed_hand_values() {
        let fast = vec![state_at(
            Vector3::zeros(),
            Vector3::new(2.0, 0.0, 0.0),
            Vector3::zeros(),
        )];
        assert_eq!(speed_cost(&fast, 1.0, 1.0), 9.0);

        let stopped: Vec<_> = (0..20)
            .map(|_| state_at(Vector3::zeros(), Vector3::zeros(), Vector3::zeros()))
            .collect();
        assert_eq!(speed_cost(&stopped, 1.0, 1.0), 20.0);
    }

    #[test]
    fn collision_midpoint_and_tail_match_the_logistic() {
        let states = vec![state_at(Vector3::zeros(), Vector3::zeros(), Vector3::zeros())];
        assert_eq!(collision_cost(&states, &[], 10.0, 10.0, 0.5), 0.0);

        // Obstacle exactly at the safety distance: the logistic midpoint.
        let at_r = [Vector3::new(0.5, 0.0, 0.0)];
        let mid = collision_cost(&states, &at_r, 10.0, 10.0, 0.5);
        assert!((mid - 10.0 * 0.5).abs() <= 1e-12);

        // Obstacle at r + 10/alpha: deep in the logistic tail.
        let far = [Vector3::new(0.5 + 10.0 / 10.0, 0.0, 0.0)];
        let tail = collision_cost(&states, &far, 10.0, 10.0, 0.5);
        assert_relative_eq!(
            tail,
            10.0 / (1.0 + std::f64::consts::E.powi(10)),
            max_relative = 1e-12
        );
    }

    #[test]
    fn jerk_hand_value_and_quadratic_homogeneity() {
        let u = vec![Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 2.0, 0.0)];
        assert_eq!(jerk_cost(&u, 1.0), 5.0);
        let scaled: Vec<_> = u.iter().map(|c| c * 3.0).collect();
        assert_relative_eq!(jerk_cost(&scaled, 1.0), 9.0 * 5.0, max_relative = 1e-15);
    }

    fn random_instance(
        rng: &mut ChaCha8Rng,
        horizon: usize,
    ) -> (
        Vec<Vector3<f64>>,
        UavState<f64>,
        ReferenceTrajectory<f64>,
        Vec<Vector3<f64>>,
    ) {
        let mut v3 = |scale: f64| {
            Vector3::new(
                rng.gen_range(-scale..scale),
                rng.gen_range(-scale..scale),
                rng.gen_range(-scale..scale),
            )
        };
        let x0 = UavState {
            p: v3(1.0),
            v: v3(1.5),
            a: v3(2.0),
        };
        let controls: Vec<_> = (0..horizon).map(|_| v3(1.0)).collect();
        let points: Vec<_> = (0..horizon).map(|_| v3(2.0)).collect();
        let obstacles: Vec<_> = (0..6).map(|_| v3(2.0)).collect();
        let reference = ReferenceTrajectory {
            points,
            v_ref: 1.0,
            spacing: 0.1,
        };
        (controls, x0, reference, obstacles)
    }

    /// Independently coded monolithic evaluator: scalar-form propagation and
    /// direct formula sums, sharing no code with the production path.
    fn oracle_total(
        controls: &[Vector3<f64>],
        x0: &UavState<f64>,
        reference: &ReferenceTrajectory<f64>,
        obstacles: &[Vector3<f64>],
        w: &CostWeights<f64>,
        params: &DynamicsParams<f64>,
    ) -> f64 {
        let tau = params.tau;
        let (mut p, mut v, mut a) = (x0.p, x0.v, x0.a);
        let mut total = 0.0;
        for (i, u) in controls.iter().enumerate() {
            let pn = p + v * tau;
            let vn = Vector3::new(
                (1.0 - tau * params.d_max.x) * v.x + tau * a.x,
                (1.0 - tau * params.d_max.y) * v.y + tau * a.y,
                (1.0 - tau * params.d_max.z) * v.z + tau * a.z,
            );
            let an = a + u * tau;
            p = pn;
            v = vn;
            a = an;

            total += w.w_t * (p - reference.points[i]).norm_squared();
            let se = v.norm_squared() - reference.v_ref * reference.v_ref;
            total += w.w_s * se * se;
            for m in obstacles {
                let d = (p - m).norm();
                total += w.w_c / (1.0 + (w.alpha * (d - w.r)).exp());
            }
            total += w.w_j * u.norm_squared();
        }
        total
    }

    #[test]
    fn total_is_the_sum_of_the_four_terms_and_matches_the_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let weights = CostWeights::default();
        let params = DynamicsParams::default();
        for _ in 0..20 {
            let (controls, x0, reference, obstacles) = random_instance(&mut rng, 8);
            let (total, b) =
                total_cost(&controls, &x0, &reference, &obstacles, &weights, &params).unwrap();
            assert_eq!(total, b.tracking + b.speed + b.collision + b.jerk);
            assert_eq!(total, b.total);

            let states = rollout(&x0, &controls, &params).unwrap();
            let t = tracking_cost(&states, &reference, weights.w_t).unwrap();
            let s = speed_cost(&states, reference.v_ref, weights.w_s);
            let c = collision_cost(&states, &obstacles, weights.w_c, weights.alpha, weights.r);
            let j = jerk_cost(&controls, weights.w_j);
            assert_eq!(total, t + s + c + j);

            let oracle = oracle_total(&controls, &x0, &reference, &obstacles, &weights, &params);
            assert_relative_eq!(total, oracle, max_relative = 1e-12);
        }
    }

    fn finite_difference_gradient(
        controls: &[Vector3<f64>],
        x0: &UavState<f64>,
        reference: &ReferenceTrajectory<f64>,
        obstacles: &[Vector3<f64>],
        weights: &CostWeights<f64>,
        params: &DynamicsParams<f64>,
        h: f64,
    ) -> Vec<f64> {
        let mut grad = Vec::with_capacity(3 * controls.len());
        for i in 0..controls.len() {
            for axis in 0..3 {
                let mut plus = controls.to_vec();
                let mut minus = controls.to_vec();
                plus[i][axis] += h;
                minus[i][axis] -= h;
                let (fp, _) =
                    total_cost(&plus, x0, reference, obstacles, weights, params).unwrap();
                let (fm, _) =
                    total_cost(&minus, x0, reference, obstacles, weights, params).unwrap();
                grad.push((fp - fm) / (2.0 * h));
            }
        }
        grad
    }

    fn assert_gradient_close(
        weights: &CostWeights<f64>,
        rng: &mut ChaCha8Rng,
        obstacles_on: bool,
    ) {
        let params = DynamicsParams::default();
        let (controls, x0, reference, mut obstacles) = random_instance(rng, 6);
        if !obstacles_on {
            obstacles.clear();
        }
        let (_, _, grad) =
            total_cost_gradient(&controls, &x0, &reference, &obstacles, weights, &params).unwrap();
        let flat: Vec<f64> = grad.iter().flat_map(|g| [g.x, g.y, g.z]).collect();
        let fd = finite_difference_gradient(
            &controls, &x0, &reference, &obstacles, weights, &params, 1e-6,
        );
        let scale = fd.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for (a, b) in flat.iter().zip(&fd) {
            assert!(
                (a - b).abs() / scale <= 1e-4,
                "gradient mismatch: analytic {a}, fd {b} (scale {scale})"
            );
        }
    }

    #[test]
    fn gradient_matches_central_differences_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let weights = CostWeights::default();
        for _ in 0..25 {
            assert_gradient_close(&weights, &mut rng, true);
        }
    }

    #[test]
    fn gradient_is_correct_for_each_term_in_isolation() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let tiny = 1e-12;
        let mk = |w_t, w_s, w_c, w_j| CostWeights {
            w_t,
            w_s,
            w_c,
            w_j,
            alpha: 10.0,
            r: 0.5,
        };
        for _ in 0..5 {
            assert_gradient_close(&mk(1.0, tiny, tiny, tiny), &mut rng, false);
            assert_gradient_close(&mk(tiny, 0.5, tiny, tiny), &mut rng, false);
            assert_gradient_close(&mk(tiny, tiny, 10.0, tiny), &mut rng, true);
            assert_gradient_close(&mk(tiny, tiny, tiny, 0.1), &mut rng, false);
        }
    }

    #[test]
    fn weights_and_config_validation_name_the_field() {
        let mut w = CostWeights::<f64>::default();
        w.alpha = 0.0;
        match w.validate() {
            Err(Error::InvalidParameter { name, .. }) => assert_eq!(name, "alpha"),
            other => panic!("expected invalid alpha, got {other:?}"),
        }
        let mut c = SolverConfig::<f64>::default();
        c.constraint_tolerance = -1.0;
        match c.validate() {
            Err(Error::InvalidParameter { name, .. }) => {
                assert_eq!(name, "constraint_tolerance")
            }
            other => panic!("expected invalid tolerance, got {other:?}"),
        }
        let mut c2 = SolverConfig::<f64>::default();
        c2.max_iterations = 0;
        assert!(c2.validate().is_err());
    }

    #[test]
    fn costs_evaluate_in_single_precision_too() {
        let states = vec![UavState::<f32> {
            p: Vector3::new(1.0, 0.0, 0.0),
            v: Vector3::new(2.0, 0.0, 0.0),
            a: Vector3::zeros(),
        }];
        let r = ReferenceTrajectory::<f32> {
            points: vec![Vector3::zeros()],
            v_ref: 1.0,
            spacing: 0.1,
        };
        assert_eq!(tracking_cost(&states, &r, 2.0f32).unwrap(), 2.0);
        assert_eq!(speed_cost(&states, 1.0f32, 1.0), 9.0);
    }
}
