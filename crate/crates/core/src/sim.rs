//! Closed-loop episode simulator and benchmark metrics.
//!
//! Each control cycle runs the full pipeline — sense, voxelize, inflate,
//! global plan, reference sampling, local planning — applies exactly one
//! control, and advances the linear dynamics by one sampling period. The
//! log records one sample per executed cycle; terminal states are evaluated
//! against the outcome rules but not logged (a terminal state has no
//! applied control).

use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::apf::apf_step;
use crate::dynamics::{step, UavState};
use crate::jps::{plan_jps, to_world};
use crate::mapping::{inflate, obstacle_set, sense, voxelize, Cell, VoxelGrid};
use crate::mpc::{solve, SolveStatus};
use crate::num::{clamp_norm3, norm3, real, Real};
use crate::reference::sample_reference;
use crate::scenario::{PlannerKind, Scenario};
use crate::{Error, Result};

/// How an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    /// Came within the goal tolerance of the goal.
    Reached,
    /// True obstacle-surface distance went negative.
    Collided,
    /// Net displacement over the stall window fell below the threshold.
    Stalled,
    /// Simulated time exceeded the episode limit.
    Timeout,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Outcome::Reached => "reached",
            Outcome::Collided => "collided",
            Outcome::Stalled => "stalled",
            Outcome::Timeout => "timeout",
        })
    }
}

/// Local-planner diagnostics attached to MPC samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveDiag<R: Real> {
    pub iterations: usize,
    pub status: SolveStatus,
    /// Total cost of the accepted plan.
    pub cost: R,
    /// Worst constraint-norm overshoot of the accepted plan.
    pub violation: R,
}

/// One executed control cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<R: Real> {
    /// Simulated time, seconds (k·τ).
    pub t: R,
    /// State at `t`, before applying `control`.
    pub state: UavState<R>,
    /// Jerk input applied over [t, t+τ).
    pub control: Vector3<R>,
    /// True distance to the nearest obstacle surface at `t`; `+inf` in an
    /// obstacle-free world.
    pub min_dist: R,
    /// Present on MPC cycles, absent on APF cycles.
    pub solve: Option<SolveDiag<R>>,
}

/// Time-ordered trace of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog<R: Real> {
    pub samples: Vec<Sample<R>>,
    pub outcome: Outcome,
    /// Wall-clock duration of the run, seconds. Excluded from determinism
    /// comparisons.
    pub wall_time: f64,
}

/// The benchmark triple: motion time, motion length, energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics<R: Real> {
    /// `t_last − t_first`, seconds.
    pub motion_time: R,
    /// Sum of consecutive position displacements, meters.
    pub motion_length: R,
    /// Acceleration integral `Σ ‖a_k‖²·Δt_k` over left endpoints, (m/s²)²·s.
    pub energy: R,
}

/// Runs one closed-loop episode of `scenario` under the given planner.
///
/// The scenario is validated up front; an invalid configuration returns an
/// error before any simulation step. The episode itself is deterministic:
/// identical scenarios reproduce identical logs (wall time aside).
pub fn run_episode<R: Real>(
    scenario: &Scenario<R>,
    planner: PlannerKind,
) -> Result<EpisodeLog<R>> {
    scenario.validate()?;
    let clock = Instant::now();

    let dynamics = &scenario.dynamics;
    let episode = &scenario.episode;
    let tau = dynamics.tau;
    let stall_cycles = (episode.stall_window / tau)
        .round()
        .to_usize()
        .unwrap_or(usize::MAX)
        .max(1);

    let mut x = UavState::at_rest(scenario.start);
    let mut memory = MpcMemory::default();
    let mut samples: Vec<Sample<R>> = Vec::new();

    let outcome = loop {
        let k = samples.len();
        let t = tau * real::<R>(k as f64);
        let min_dist = scenario.world.signed_distance(&x.p);

        if min_dist < R::zero() {
            break Outcome::Collided;
        }
        if norm3(&(x.p - scenario.goal)) <= episode.goal_tolerance {
            break Outcome::Reached;
        }
        if t >= episode.time_limit {
            break Outcome::Timeout;
        }
        if k >= stall_cycles {
            let past = &samples[k - stall_cycles].state.p;
            if norm3(&(x.p - past)) < episode.stall_progress {
                break Outcome::Stalled;
            }
        }

        let (control, solve_diag) = match planner {
            PlannerKind::Mpc => mpc_cycle(scenario, &x, &mut memory)?,
            PlannerKind::Apf => (apf_cycle(scenario, &x)?, None),
        };
        samples.push(Sample {
            t,
            state: x,
            control,
            min_dist,
            solve: solve_diag,
        });
        x = step(&x, &control, dynamics)?;
    };

    Ok(EpisodeLog {
        samples,
        outcome,
        wall_time: clock.elapsed().as_secs_f64(),
    })
}

/// Carry-over between consecutive MPC cycles: the shifted control sequence
/// that warm-starts the next solve, and the currently committed global
/// route.
#[derive(Default)]
struct MpcMemory<R: Real> {
    warm: Option<Vec<Vector3<R>>>,
    route: Option<Vec<Vector3<R>>>,
}

/// One MPC pipeline pass: sense → map → global plan → reference → solve.
fn mpc_cycle<R: Real>(
    scenario: &Scenario<R>,
    x: &UavState<R>,
    memory: &mut MpcMemory<R>,
) -> Result<(Vector3<R>, Option<SolveDiag<R>>)> {
    let mapping = &scenario.mapping;
    let cloud = sense(&scenario.world, &x.p, mapping.sensor_range, &mapping.rays)?;
    let (origin, dims) = local_grid_frame(scenario, &x.p);
    let raw = voxelize(&cloud, origin, mapping.resolution, dims)?;
    let inflated = inflate(&raw, mapping.inflation_radius())?;
    let obstacles = obstacle_set(&raw, &x.p, mapping.sensor_range, mapping.obstacle_cap)?;

    // Global path towards the goal's best in-grid stand-in. A locally
    // unreachable target (or a grid with no free cell at all) degrades to a
    // hold-position reference, which brakes the vehicle.
    let fresh = plan_polyline(&inflated, x, &scenario.goal)?;
    let lookahead =
        scenario.reference.v_ref * scenario.dynamics.tau * real(scenario.reference.horizon as f64);
    let polyline = choose_route(
        &mut memory.route,
        fresh,
        &inflated,
        &x.p,
        &scenario.goal,
        lookahead,
    );
    let reference = sample_reference(
        polyline,
        &x.p,
        scenario.reference.v_ref,
        scenario.dynamics.tau,
        scenario.reference.horizon,
    );

    let plan = solve(
        x,
        &reference,
        &obstacles,
        &scenario.weights,
        &scenario.dynamics,
        &scenario.solver,
        memory.warm.as_deref(),
    )?;
    let control = plan.controls[0];
    let diag = SolveDiag {
        iterations: plan.iterations,
        status: plan.status,
        cost: plan.cost_breakdown.total,
        violation: plan.max_constraint_violation,
    };
    memory.warm = (plan.controls.len() >= 2).then(|| {
        let mut shifted = plan.controls;
        shifted.remove(0);
        shifted.push(*shifted.last().expect("len >= 1 after shift"));
        shifted
    });
    Ok((control, Some(diag)))
}

/// Route hysteresis: the per-cycle rebuilt map flickers at sensing
/// silhouettes, which can make the global planner alternate between
/// near-equal routes around a pillar; chasing both sides brakes the vehicle
/// in open space. The committed route keeps being steered down until it is
/// blocked, nearly consumed, or the fresh plan is meaningfully shorter.
///
/// Returns the polyline to sample the reference from (borrowing from
/// `stored` when the committed route wins).
fn choose_route<'a, R: Real>(
    stored: &'a mut Option<Vec<Vector3<R>>>,
    fresh: Vec<Vector3<R>>,
    inflated: &VoxelGrid<R>,
    p: &Vector3<R>,
    goal: &Vector3<R>,
    lookahead: R,
) -> &'a [Vector3<R>] {
    let adopt = match stored.as_ref() {
        None => true,
        Some(route) => {
            let (s0, total) = project_arc(route, p);
            let remaining = total - s0;
            if remaining < lookahead || !route_is_free(route, s0, inflated) {
                // Nearly consumed (its far end is an old sensing-window
                // stand-in) or blocked by newly sensed cells.
                true
            } else if fresh.len() < 2 {
                // A transient hold-position fallback never replaces a live
                // committed route.
                false
            } else {
                let est_stored = remaining + norm3(&(route[route.len() - 1] - goal));
                let (f0, f_total) = project_arc(&fresh, p);
                let est_fresh = f_total - f0 + norm3(&(fresh[fresh.len() - 1] - goal));
                // Polylines end at sensing-window stand-ins, so the two
                // estimates compare different amounts of guessed distance;
                // only a decisive gap justifies abandoning the committed
                // side of an obstacle.
                est_fresh < est_stored * real(0.9)
            }
        }
    };
    if adopt {
        *stored = Some(fresh);
    }
    stored.as_deref().expect("route committed above")
}

/// Arc-length coordinate of the projection of `p` onto the polyline, plus
/// the total arc length.
fn project_arc<R: Real>(polyline: &[Vector3<R>], p: &Vector3<R>) -> (R, R) {
    let mut arc = R::zero();
    let mut best = (norm3(&(polyline[0] - p)), R::zero());
    for w in polyline.windows(2) {
        let seg = w[1] - w[0];
        let len = norm3(&seg);
        if len > R::zero() {
            let lambda = (p - w[0]).dot(&seg) / (len * len);
            let lambda = lambda.max(R::zero()).min(R::one());
            let foot = w[0] + seg * lambda;
            let dist = norm3(&(foot - p));
            if dist < best.0 {
                best = (dist, arc + len * lambda);
            }
            arc += len;
        }
    }
    (best.1, arc)
}

/// Whether the stored route, from arc position `from` onward, stays out of
/// occupied cells of the current inflated grid. Vertices are jump points
/// and can span many cells, so segments are sampled at half-resolution;
/// points outside the grid window count as free (not yet sensed).
fn route_is_free<R: Real>(route: &[Vector3<R>], from: R, grid: &VoxelGrid<R>) -> bool {
    let step = grid.resolution() * real(0.5);
    let mut arc = R::zero();
    for w in route.windows(2) {
        let seg = w[1] - w[0];
        let len = norm3(&seg);
        if len <= R::zero() {
            continue;
        }
        if arc + len >= from {
            let dir = seg / len;
            let mut s = (from - arc).max(R::zero());
            loop {
                let q = w[0] + dir * s.min(len);
                let cell = grid.world_to_cell(&q);
                if grid.in_bounds(&cell) && grid.occupied(&cell) {
                    return false;
                }
                if s >= len {
                    break;
                }
                s += step;
            }
        }
        arc += len;
    }
    true
}

/// One APF pass: sense → voxel obstacle set → force → tracked jerk command.
fn apf_cycle<R: Real>(scenario: &Scenario<R>, x: &UavState<R>) -> Result<Vector3<R>> {
    let mapping = &scenario.mapping;
    let cloud = sense(&scenario.world, &x.p, mapping.sensor_range, &mapping.rays)?;
    let (origin, dims) = local_grid_frame(scenario, &x.p);
    let raw = voxelize(&cloud, origin, mapping.resolution, dims)?;
    let obstacles = obstacle_set(&raw, &x.p, mapping.sensor_range, mapping.obstacle_cap)?;

    // The attractive pull aims at a carrot clamped to sensor range so the
    // far-away true goal cannot drown out nearby repulsion.
    let to_goal = scenario.goal - x.p;
    let dist = norm3(&to_goal);
    let carrot = if dist <= mapping.sensor_range {
        scenario.goal
    } else {
        x.p + to_goal * (mapping.sensor_range / dist)
    };

    let v_cmd = apf_step(x, &carrot, &obstacles, &scenario.apf, &scenario.dynamics)?;

    // Proportional velocity tracking with drag feed-forward, clipped to the
    // dynamic limits the MPC obeys through its constraints.
    let dynamics = &scenario.dynamics;
    let mut a_des = (v_cmd - x.v) * scenario.episode.apf_velocity_gain;
    for i in 0..3 {
        a_des[i] += dynamics.d_max[i] * x.v[i];
    }
    let a_des = clamp_norm3(&a_des, dynamics.a_max);
    let u = clamp_norm3(&((a_des - x.a) / dynamics.tau), dynamics.u_max);
    Ok(u)
}

/// Origin and cell counts of the sensor-sized voxel grid around `center`.
///
/// The origin snaps to a lattice anchored at the world's lower bound so the
/// grids of consecutive cycles share cell boundaries, and the box is clipped
/// to the world bounds.
fn local_grid_frame<R: Real>(
    scenario: &Scenario<R>,
    center: &Vector3<R>,
) -> (Vector3<R>, [usize; 3]) {
    let res = scenario.mapping.resolution;
    let range = scenario.mapping.sensor_range;
    let bounds = &scenario.world.bounds;
    let mut origin = Vector3::zeros();
    let mut dims = [1usize; 3];
    for i in 0..3 {
        let lo = ((center[i] - range - bounds.min[i]) / res)
            .floor()
            .max(R::zero());
        origin[i] = bounds.min[i] + lo * res;
        let hi = (center[i] + range).min(bounds.max[i]);
        let span = ((hi - origin[i]) / res).ceil().to_usize().unwrap_or(1);
        dims[i] = span.max(1);
    }
    (origin, dims)
}

/// Global path as a world-frame polyline. Falls back to holding position
/// when no in-grid route exists.
fn plan_polyline<R: Real>(
    inflated: &VoxelGrid<R>,
    x: &UavState<R>,
    goal: &Vector3<R>,
) -> Result<Vec<Vector3<R>>> {
    let start_cell = {
        let c = inflated.world_to_cell(&x.p);
        if inflated.blocked(&c) {
            match nearest_free_cell(inflated, &x.p) {
                Some(free) => free,
                None => return Ok(vec![x.p]),
            }
        } else {
            c
        }
    };
    let goal_cell = {
        let c = inflated.world_to_cell(goal);
        if inflated.blocked(&c) {
            match nearest_free_cell(inflated, goal) {
                Some(free) => free,
                None => return Ok(vec![x.p]),
            }
        } else {
            c
        }
    };
    match plan_jps(inflated, start_cell, goal_cell) {
        Ok(path) => Ok(to_world(&path, inflated)),
        Err(Error::NoPath { .. }) => Ok(vec![x.p]),
        Err(e) => Err(e),
    }
}

/// The free cell whose center is nearest to `target`; ties break towards the
/// lexicographically smallest cell index. `None` when the grid is solid.
fn nearest_free_cell<R: Real>(grid: &VoxelGrid<R>, target: &Vector3<R>) -> Option<Cell> {
    let dims = grid.dims();
    let mut best: Option<(R, Cell)> = None;
    for z in 0..dims[2] as i32 {
        for y in 0..dims[1] as i32 {
            for x in 0..dims[0] as i32 {
                let c = Cell::new(x, y, z);
                if grid.occupied(&c) {
                    continue;
                }
                let d = norm3(&(grid.cell_center(&c) - target));
                if best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, c));
                }
            }
        }
    }
    best.map(|(_, c)| c)
}

/// Computes the benchmark triple from a log.
///
/// Panics on an empty log; a zero-cycle episode has no metrics.
pub fn compute_metrics<R: Real>(log: &EpisodeLog<R>) -> Metrics<R> {
    assert!(!log.samples.is_empty(), "metrics need a non-empty log");
    let first = log.samples.first().unwrap();
    let last = log.samples.last().unwrap();
    let mut motion_length = R::zero();
    let mut energy = R::zero();
    for w in log.samples.windows(2) {
        motion_length += norm3(&(w[1].state.p - w[0].state.p));
        let a = norm3(&w[0].state.a);
        energy += a * a * (w[1].t - w[0].t);
    }
    Metrics {
        motion_time: last.t - first.t,
        motion_length,
        energy,
    }
}
