//! Constrained solver for the local trajectory program.
//!
//! The bound constraints (squared velocity/acceleration/jerk norms) are
//! folded into an augmented Lagrangian; each outer *phase* fixes the
//! multipliers and penalty and minimizes the resulting smooth merit function
//! with a limited-memory quasi-Newton (L-BFGS) line search. Between phases
//! the multipliers take a projected first-order update and the penalty grows
//! when feasibility stalls. This realizes the sequential local-model
//! contract: each inner step solves a quadratic model of the merit around
//! the current iterate, and accepted steps strictly decrease the merit.
//!
//! The best iterate seen anywhere (feasible with least cost, or least
//! violation when nothing feasible was found) is the one returned.

use std::collections::VecDeque;

use nalgebra::{DVector, SMatrix, SVector, Vector3};

use super::{breakdown_of, logistic, CostWeights, MeritRecord, PlanResult, SolveStatus, SolverConfig};
use crate::dynamics::{build_matrices, rollout, DynamicsParams, StateMatrices, UavState};
use crate::num::{clamp_norm3, finite3, norm3, norm_sq3, real, Real};
use crate::reference::ReferenceTrajectory;
use crate::{Error, Result};

/// Hard cap on multiplier-update phases per solve.
const MAX_PHASES: usize = 16;
/// Armijo sufficient-decrease coefficient.
const ARMIJO_C1: f64 = 1e-4;
/// L-BFGS memory length.
const LBFGS_MEMORY: usize = 8;
/// Cap on accepted steps per phase, so multiplier updates still happen when
/// the overall budget is small.
const PHASE_STEP_CAP: usize = 25;

struct Problem<'a, R: Real> {
    mats: StateMatrices<R>,
    a_t: SMatrix<R, 9, 9>,
    x0: &'a UavState<R>,
    reference: &'a ReferenceTrajectory<R>,
    obstacles: &'a [Vector3<R>],
    weights: &'a CostWeights<R>,
    tau: R,
    v_max: R,
    a_max: R,
    u_max: R,
    horizon: usize,
}

/// Inequality multipliers, one triple of constraints per stage.
#[derive(Clone)]
struct Multipliers<R: Real> {
    v: Vec<R>,
    a: Vec<R>,
    u: Vec<R>,
}

impl<R: Real> Multipliers<R> {
    fn zeros(n: usize) -> Self {
        Multipliers {
            v: vec![R::zero(); n],
            a: vec![R::zero(); n],
            u: vec![R::zero(); n],
        }
    }
}

struct Eval<R: Real> {
    /// Augmented-Lagrangian merit value.
    merit: R,
    /// True (unpenalized) objective.
    cost: R,
    /// Worst norm-bound overshoot, SI units.
    violation: R,
    grad: DVector<R>,
}

impl<'a, R: Real> Problem<'a, R> {
    fn states_of(&self, u: &DVector<R>) -> Vec<UavState<R>> {
        let mut states = Vec::with_capacity(self.horizon);
        let mut x = *self.x0;
        for i in 0..self.horizon {
            x = self.mats.step(&x, &control_at(u, i));
            states.push(x);
        }
        states
    }

    /// Merit, cost, violation, and merit gradient at `u`, in one forward
    /// rollout and one adjoint sweep.
    fn eval(&self, u: &DVector<R>, mults: &Multipliers<R>, mu: R) -> Eval<R> {
        let w = self.weights;
        let two = real::<R>(2.0);
        let four = real::<R>(4.0);
        let states = self.states_of(u);

        let v_max_sq = self.v_max * self.v_max;
        let a_max_sq = self.a_max * self.a_max;
        let u_max_sq = self.u_max * self.u_max;

        // Penalty term and its active coefficient max(0, λ + μ·g).
        let penalty = |g: R, lambda: R| -> (R, R) {
            let active = (lambda + mu * g).max(R::zero());
            ((active * active - lambda * lambda) / (two * mu), active)
        };

        let mut cost = R::zero();
        let mut merit_extra = R::zero();
        let mut violation = R::zero();
        // Active penalty coefficients, reused by the backward sweep.
        let mut act_v = vec![R::zero(); self.horizon];
        let mut act_a = vec![R::zero(); self.horizon];
        let mut act_u = vec![R::zero(); self.horizon];

        for (i, s) in states.iter().enumerate() {
            let dp = s.p - self.reference.points[i];
            cost += w.w_t * norm_sq3(&dp);
            let sv = norm_sq3(&s.v);
            let se = sv - self.reference.v_ref * self.reference.v_ref;
            cost += w.w_s * se * se;
            for m in self.obstacles {
                let d = norm3(&(s.p - m));
                cost += w.w_c * logistic(w.alpha * (d - w.r));
            }
            let uc = control_at(u, i);
            cost += w.w_j * norm_sq3(&uc);

            let (pv, av) = penalty(sv - v_max_sq, mults.v[i]);
            let (pa, aa) = penalty(norm_sq3(&s.a) - a_max_sq, mults.a[i]);
            let (pu, au) = penalty(norm_sq3(&uc) - u_max_sq, mults.u[i]);
            merit_extra += pv + pa + pu;
            act_v[i] = av;
            act_a[i] = aa;
            act_u[i] = au;

            violation = violation
                .max(norm3(&s.v) - self.v_max)
                .max(norm3(&s.a) - self.a_max)
                .max(norm3(&uc) - self.u_max);
        }
        violation = violation.max(R::zero());

        // Adjoint sweep for the merit gradient.
        let mut grad = DVector::zeros(3 * self.horizon);
        let mut lambda = SVector::<R, 9>::zeros();
        for i in (0..self.horizon).rev() {
            let s = &states[i];
            let mut g = SVector::<R, 9>::zeros();

            let mut gp = (s.p - self.reference.points[i]) * (two * w.w_t);
            for m in self.obstacles {
                let diff = s.p - m;
                let d = norm3(&diff);
                if d > R::epsilon() {
                    let sig = logistic(w.alpha * (d - w.r));
                    let slope = -w.alpha * sig * (R::one() - sig) * w.w_c;
                    gp += diff * (slope / d);
                }
            }
            g.fixed_rows_mut::<3>(0).copy_from(&gp);

            let sv = norm_sq3(&s.v);
            let se = sv - self.reference.v_ref * self.reference.v_ref;
            let gv = s.v * (four * w.w_s * se + two * act_v[i]);
            g.fixed_rows_mut::<3>(3).copy_from(&gv);

            let ga = s.a * (two * act_a[i]);
            g.fixed_rows_mut::<3>(6).copy_from(&ga);

            if i + 1 < self.horizon {
                g += self.a_t * lambda;
            }
            lambda = g;

            let uc = control_at(u, i);
            let gu = Vector3::new(lambda[6], lambda[7], lambda[8]) * self.tau
                + uc * (two * w.w_j + two * act_u[i]);
            grad[3 * i] = gu.x;
            grad[3 * i + 1] = gu.y;
            grad[3 * i + 2] = gu.z;
        }

        Eval {
            merit: cost + merit_extra,
            cost,
            violation,
            grad,
        }
    }

    /// Squared-norm constraint values at `u`, for the multiplier update.
    fn constraint_values(&self, u: &DVector<R>) -> (Vec<R>, Vec<R>, Vec<R>) {
        let states = self.states_of(u);
        let v_max_sq = self.v_max * self.v_max;
        let a_max_sq = self.a_max * self.a_max;
        let u_max_sq = self.u_max * self.u_max;
        let mut gv = Vec::with_capacity(self.horizon);
        let mut ga = Vec::with_capacity(self.horizon);
        let mut gu = Vec::with_capacity(self.horizon);
        for (i, s) in states.iter().enumerate() {
            gv.push(norm_sq3(&s.v) - v_max_sq);
            ga.push(norm_sq3(&s.a) - a_max_sq);
            gu.push(norm_sq3(&control_at(u, i)) - u_max_sq);
        }
        (gv, ga, gu)
    }
}

fn control_at<R: Real>(u: &DVector<R>, i: usize) -> Vector3<R> {
    Vector3::new(u[3 * i], u[3 * i + 1], u[3 * i + 2])
}

fn inf_norm<R: Real>(v: &DVector<R>) -> R {
    v.iter().fold(R::zero(), |m, &x| m.max(x.abs()))
}

/// Best iterate seen so far: least-cost feasible point if any exists,
/// otherwise the least-violating point.
struct BestIterate<R: Real> {
    u: DVector<R>,
    cost: R,
    violation: R,
    feasible: bool,
    tol: R,
}

impl<R: Real> BestIterate<R> {
    fn new(u: DVector<R>, cost: R, violation: R, tol: R) -> Self {
        BestIterate {
            feasible: violation <= tol,
            u,
            cost,
            violation,
            tol,
        }
    }

    fn offer(&mut self, u: &DVector<R>, cost: R, violation: R) {
        let feasible = violation <= self.tol;
        let better = if feasible {
            !self.feasible || cost < self.cost
        } else {
            !self.feasible && violation < self.violation
        };
        if better {
            self.u.copy_from(u);
            self.cost = cost;
            self.violation = violation;
            self.feasible = feasible;
        }
    }
}

enum PhaseEnd {
    /// Merit gradient vanished or no descent step exists.
    Stationary,
    /// The step cap for this phase (or the whole solve) ran out.
    Budget,
}

/// Minimizes the merit function for fixed multipliers. Every accepted step
/// strictly decreases the merit (Armijo line search on a descent direction)
/// and is recorded in `history` tagged with the phase number. `step_cap` is
/// an absolute bound on the shared `iterations` counter; `gtol_scale` is the
/// relative gradient-norm threshold that declares the phase stationary.
#[allow(clippy::too_many_arguments)]
fn minimize_phase<R: Real>(
    problem: &Problem<'_, R>,
    u: &mut DVector<R>,
    mults: &Multipliers<R>,
    mu: R,
    phase: usize,
    iterations: &mut usize,
    step_cap: usize,
    gtol_scale: R,
    history: &mut Vec<MeritRecord<R>>,
    best: &mut BestIterate<R>,
) -> PhaseEnd {
    let mut pairs: VecDeque<(DVector<R>, DVector<R>, R)> = VecDeque::new();
    let mut e = problem.eval(u, mults, mu);
    let c1 = real::<R>(ARMIJO_C1);

    loop {
        if *iterations >= step_cap {
            return PhaseEnd::Budget;
        }
        let gtol = gtol_scale * (R::one() + e.merit.abs());
        if inf_norm(&e.grad) <= gtol {
            return PhaseEnd::Stationary;
        }

        // Two-loop recursion for the quasi-Newton direction.
        let mut d = {
            let mut q = e.grad.clone();
            let mut alphas = Vec::with_capacity(pairs.len());
            for (s, y, rho) in pairs.iter().rev() {
                let a = *rho * s.dot(&q);
                q.axpy(-a, y, R::one());
                alphas.push(a);
            }
            if let Some((s, y, _)) = pairs.back() {
                let gamma = s.dot(y) / y.dot(y);
                q *= gamma;
            }
            for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
                let b = *rho * y.dot(&q);
                q.axpy(*a - b, s, R::one());
            }
            -q
        };

        let mut slope = e.grad.dot(&d);
        if !(slope < R::zero()) {
            // Not a descent direction: fall back to steepest descent.
            pairs.clear();
            d = -e.grad.clone();
            slope = e.grad.dot(&d);
        }

        let mut accepted: Option<(DVector<R>, Eval<R>)> = None;
        let mut t = R::one();
        for _ in 0..60 {
            let u_try = &*u + &d * t;
            let e_try = problem.eval(&u_try, mults, mu);
            if e_try.merit.is_finite() && e_try.merit <= e.merit + c1 * t * slope {
                accepted = Some((u_try, e_try));
                break;
            }
            t *= real::<R>(0.5);
        }
        let Some((u_new, e_new)) = accepted else {
            if !pairs.is_empty() {
                // Stale curvature; retry from steepest descent.
                pairs.clear();
                continue;
            }
            return PhaseEnd::Stationary;
        };

        let s = &u_new - &*u;
        let y = &e_new.grad - &e.grad;
        let sy = s.dot(&y);
        if sy > real::<R>(1e-12) * s.dot(&s).sqrt() * y.dot(&y).sqrt() {
            pairs.push_back((s, y, R::one() / sy));
            if pairs.len() > LBFGS_MEMORY {
                pairs.pop_front();
            }
        }

        u.copy_from(&u_new);
        *iterations += 1;
        history.push(MeritRecord {
            phase,
            merit: e_new.merit,
        });
        best.offer(u, e_new.cost, e_new.violation);
        e = e_new;
    }
}

/// Optimizes the jerk sequence for one planning cycle.
///
/// `warm_start`, when given, must hold one control per reference point and
/// seeds the iteration (receding-horizon reuse); otherwise the zero sequence
/// is used. See the module docs for the algorithm outline.
pub fn solve<R: Real>(
    x0: &UavState<R>,
    reference: &ReferenceTrajectory<R>,
    obstacles: &[Vector3<R>],
    weights: &CostWeights<R>,
    params: &DynamicsParams<R>,
    config: &SolverConfig<R>,
    warm_start: Option<&[Vector3<R>]>,
) -> Result<PlanResult<R>> {
    weights.validate()?;
    config.validate()?;
    let horizon = reference.points.len();
    if horizon == 0 {
        return Err(Error::invalid(
            "reference",
            "must contain at least one point",
        ));
    }
    if !x0.is_finite() {
        return Err(Error::NonFinite { what: "state" });
    }
    if !(reference.points.iter().all(finite3) && reference.v_ref.is_finite()) {
        return Err(Error::NonFinite { what: "reference" });
    }
    if !obstacles.iter().all(finite3) {
        return Err(Error::NonFinite { what: "obstacles" });
    }
    let mats = build_matrices(params)?;
    let problem = Problem {
        a_t: mats.a.transpose(),
        mats,
        x0,
        reference,
        obstacles,
        weights,
        tau: params.tau,
        v_max: params.v_max,
        a_max: params.a_max,
        u_max: params.u_max,
        horizon,
    };

    let mut u = DVector::<R>::zeros(3 * horizon);
    if let Some(w) = warm_start {
        if w.len() != horizon {
            return Err(Error::LengthMismatch {
                what: "warm_start",
                expected: horizon,
                got: w.len(),
            });
        }
        for (i, c) in w.iter().enumerate() {
            if !finite3(c) {
                return Err(Error::NonFinite { what: "warm_start" });
            }
            u[3 * i] = c.x;
            u[3 * i + 1] = c.y;
            u[3 * i + 2] = c.z;
        }
    }

    // The warm (or zero) start is the primary candidate. A warm start is
    // always backed by a fresh zero-initialized run so a stale warm start
    // can never make the solution worse than solving cold. With obstacles
    // in play the cost landscape grows pass-through local minima; a braking
    // sequence seeds one more run so the solver also sees the slow-down
    // basin. The best final iterate across runs wins.
    let mut candidates = vec![u];
    if warm_start.is_some() {
        let zero = DVector::zeros(3 * horizon);
        if zero != candidates[0] {
            candidates.push(zero);
        }
    }
    if !obstacles.is_empty() {
        for extra in [brake_candidate(&problem), tracker_candidate(&problem)] {
            if candidates.iter().all(|c| *c != extra) {
                candidates.push(extra);
            }
        }
    }
    let mut runs = candidates.into_iter().map(|c| run_from(&problem, c, config));
    let mut winner = runs.next().expect("at least one candidate");
    for run in runs {
        let better = if run.best.feasible {
            !winner.best.feasible || run.best.cost < winner.best.cost
        } else {
            !winner.best.feasible && run.best.violation < winner.best.violation
        };
        if better {
            winner = run;
        }
    }

    let controls: Vec<Vector3<R>> = (0..horizon).map(|i| control_at(&winner.best.u, i)).collect();
    let states = rollout(x0, &controls, params)?;
    let (_, cost_breakdown) = breakdown_of(&states, &controls, reference, obstacles, weights)?;

    let mut violation = R::zero();
    for (s, c) in states.iter().zip(&controls) {
        violation = violation
            .max(norm3(&s.v) - params.v_max)
            .max(norm3(&s.a) - params.a_max)
            .max(norm3(c) - params.u_max);
    }
    violation = violation.max(R::zero());

    let ctol = config.constraint_tolerance;
    let x0_excess = (norm3(&x0.v) - params.v_max).max(norm3(&x0.a) - params.a_max);
    let status = if winner.converged {
        SolveStatus::Converged
    } else if violation > ctol && x0_excess > ctol {
        SolveStatus::Infeasible
    } else {
        SolveStatus::IterationLimit
    };

    Ok(PlanResult {
        states,
        controls,
        cost_breakdown,
        iterations: winner.iterations,
        max_constraint_violation: violation,
        status,
        merit_history: winner.history,
    })
}

struct Run<R: Real> {
    best: BestIterate<R>,
    converged: bool,
    iterations: usize,
    history: Vec<MeritRecord<R>>,
}

/// One full augmented-Lagrangian optimization from the given start.
fn run_from<R: Real>(problem: &Problem<'_, R>, u0: DVector<R>, config: &SolverConfig<R>) -> Run<R> {
    let ctol = config.constraint_tolerance;
    let horizon = problem.horizon;
    let mut u = u0;
    let mut mults = Multipliers::zeros(horizon);
    let mut mu = real::<R>(10.0);
    let e0 = problem.eval(&u, &mults, mu);
    let mut best = BestIterate::new(u.clone(), e0.cost, e0.violation, ctol);
    let mut prev_cost = e0.cost;
    let mut prev_violation = e0.violation;
    let mut iterations = 0usize;
    let mut history = Vec::new();
    let mut converged = false;
    // Inner stationarity tracks the configured cost tolerance when the
    // latter is tightened below its default resolution.
    let gtol_scale = config.cost_tolerance.min(real(1e-7));

    for phase in 0..MAX_PHASES {
        let remaining = config.max_iterations.saturating_sub(iterations);
        let step_cap = iterations + remaining.min(PHASE_STEP_CAP);
        let end = minimize_phase(
            problem,
            &mut u,
            &mults,
            mu,
            phase,
            &mut iterations,
            step_cap,
            gtol_scale,
            &mut history,
            &mut best,
        );
        let e = problem.eval(&u, &mults, mu);
        // Converged: the phase went stationary at a feasible point and the
        // cost has stopped moving between phases.
        if matches!(end, PhaseEnd::Stationary)
            && e.violation <= ctol
            && (prev_cost - e.cost).abs() < config.cost_tolerance
        {
            converged = true;
            break;
        }
        prev_cost = e.cost;
        if iterations >= config.max_iterations {
            break;
        }
        // Projected multiplier update, then penalty escalation when the
        // violation is not shrinking fast enough.
        let (gv, ga, gu) = problem.constraint_values(&u);
        for i in 0..horizon {
            mults.v[i] = (mults.v[i] + mu * gv[i]).max(R::zero());
            mults.a[i] = (mults.a[i] + mu * ga[i]).max(R::zero());
            mults.u[i] = (mults.u[i] + mu * gu[i]).max(R::zero());
        }
        if e.violation > real::<R>(0.25) * prev_violation {
            mu = (mu * real(5.0)).min(real(1e8));
        }
        prev_violation = e.violation;
    }

    Run {
        best,
        converged,
        iterations,
        history,
    }
}

/// Deterministic slow-down control sequence: steer the acceleration against
/// the predicted velocity, clipped to the bounds.
fn brake_candidate<R: Real>(problem: &Problem<'_, R>) -> DVector<R> {
    let gain = real::<R>(2.0);
    let inv_tau = R::one() / problem.tau;
    let mut x = *problem.x0;
    let mut u = DVector::zeros(3 * problem.horizon);
    for i in 0..problem.horizon {
        let a_des = clamp_norm3(&(-x.v * gain), problem.a_max);
        let ju = clamp_norm3(&((a_des - x.a) * inv_tau), problem.u_max);
        u[3 * i] = ju.x;
        u[3 * i + 1] = ju.y;
        u[3 * i + 2] = ju.z;
        x = problem.mats.step(&x, &ju);
    }
    u
}

/// Critically-damped PD rollout chasing the reference points. Seeds descent
/// inside the basin that hugs the (clearance-planned) reference, which a
/// warm start carried over from a now-invalidated plan may have left.
fn tracker_candidate<R: Real>(problem: &Problem<'_, R>) -> DVector<R> {
    let kp = real::<R>(4.0);
    let kd = real::<R>(4.0);
    let inv_tau = R::one() / problem.tau;
    let pts = &problem.reference.points;
    let mut x = *problem.x0;
    let mut u = DVector::zeros(3 * problem.horizon);
    for i in 0..problem.horizon {
        let target = pts[i.min(pts.len() - 1)];
        let v_des = if i + 1 < pts.len() {
            (pts[i + 1] - target) * inv_tau
        } else {
            Vector3::zeros()
        };
        let a_des = clamp_norm3(
            &((target - x.p) * kp + (v_des - x.v) * kd),
            problem.a_max,
        );
        let ju = clamp_norm3(&((a_des - x.a) * inv_tau), problem.u_max);
        u[3 * i] = ju.x;
        u[3 * i + 1] = ju.y;
        u[3 * i + 2] = ju.z;
        x = problem.mats.step(&x, &ju);
    }
    u
}
