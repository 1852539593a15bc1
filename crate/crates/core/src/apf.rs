//! Artificial potential field baseline planner.
//!
//! The goal attracts the vehicle and every obstacle inside an influence
//! radius repels it (classic Khatib potentials). The resulting force is
//! turned into a capped velocity command; converting that command into
//! accelerations and jerks is the simulator's job. The method keeps its
//! textbook flaws on purpose — most notably local-minimum traps — because it
//! serves as the comparison baseline.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{DynamicsParams, UavState};
use crate::num::{norm3, real, Real};
use crate::{Error, Result};

/// Gains and limits of the potential field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ApfParams<R: Real> {
    /// Attractive gain towards the goal.
    pub k_att: R,
    /// Repulsive gain away from obstacles.
    pub k_rep: R,
    /// Influence radius: obstacles farther than this exert no force, meters.
    pub rho0: R,
    /// Cap on the commanded speed, m/s.
    pub v_cap: R,
}

impl<R: Real> Default for ApfParams<R> {
    fn default() -> Self {
        ApfParams {
            k_att: R::one(),
            k_rep: R::one(),
            rho0: real(1.5),
            v_cap: R::one(),
        }
    }
}

impl<R: Real> ApfParams<R> {
    /// Checks that every gain and limit is strictly positive (and finite).
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("apf.k_att", self.k_att),
            ("apf.k_rep", self.k_rep),
            ("apf.rho0", self.rho0),
            ("apf.v_cap", self.v_cap),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > R::zero()) {
                return Err(Error::invalid(name, "must be strictly positive"));
            }
        }
        Ok(())
    }
}

/// Evaluates the potential-field force at `position`.
///
/// The attractive term is `k_att * (goal - position)`; each obstacle within
/// `rho0` adds the repulsive term
/// `k_rep * (1/d - 1/rho0) * (1/d^2) * (position - obstacle)/d` where `d` is
/// the obstacle distance. The repulsion vanishes continuously at the
/// influence boundary.
///
/// Panics if `params` is invalid; returns [`Error::Singularity`] when the
/// vehicle sits exactly on an obstacle point (a crash state — the force is
/// undefined there).
pub fn apf_force<R: Real>(
    position: &Vector3<R>,
    goal: &Vector3<R>,
    obstacles: &[Vector3<R>],
    params: &ApfParams<R>,
) -> Result<Vector3<R>> {
    assert!(params.validate().is_ok(), "ApfParams must be valid");

    let mut force = (goal - position) * params.k_att;
    let inv_rho0 = R::one() / params.rho0;
    for obstacle in obstacles {
        let away = position - obstacle;
        let d = norm3(&away);
        if d <= R::epsilon() {
            return Err(Error::Singularity);
        }
        if d <= params.rho0 {
            let inv_d = R::one() / d;
            let magnitude = params.k_rep * (inv_d - inv_rho0) * inv_d * inv_d;
            force += away * (magnitude * inv_d);
        }
    }
    Ok(force)
}

/// Turns the force at the current position into a velocity command: the
/// force direction at speed `min(‖F‖, v_cap)`.
///
/// The dynamics parameters are validated here because the simulator's
/// tracking law (which honors `a_max`/`u_max`) consumes this command
/// unchecked. Propagates the singularity from [`apf_force`].
pub fn apf_step<R: Real>(
    state: &UavState<R>,
    goal: &Vector3<R>,
    obstacles: &[Vector3<R>],
    params: &ApfParams<R>,
    dynamics: &DynamicsParams<R>,
) -> Result<Vector3<R>> {
    assert!(dynamics.validate().is_ok(), "DynamicsParams must be valid");

    let force = apf_force(&state.p, goal, obstacles, params)?;
    let magnitude = norm3(&force);
    if magnitude == R::zero() {
        return Ok(Vector3::zeros());
    }
    let speed = magnitude.min(params.v_cap);
    Ok(force * (speed / magnitude))
}
