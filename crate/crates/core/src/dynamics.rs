//! Discrete-time UAV translational dynamics with linear drag and jerk input.
//!
//! The state stacks position, velocity, and acceleration; the control input
//! is jerk. One step of duration `tau` applies
//!
//! ```text
//! p' = p + tau * v
//! v' = v + tau * (a - d_max .* v)
//! a' = a + tau * u
//! ```
//!
//! which in matrix form is `x' = A x + B u` with block-structured `A` and
//! `B`. [`step`] evaluates exactly that matrix product, so propagation used
//! anywhere else in the crate (the optimizer, the simulator) is bit-identical
//! to [`build_matrices`] output.

use nalgebra::{SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::num::{finite3, real, Real};
use crate::{Error, Result};

/// Stacked state vector `[p, v, a]`.
pub type StateVector<R> = SVector<R, 9>;

/// Translational UAV state: position, velocity, acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UavState<R: Real> {
    pub p: Vector3<R>,
    pub v: Vector3<R>,
    pub a: Vector3<R>,
}

impl<R: Real> UavState<R> {
    /// State at rest at position `p`.
    pub fn at_rest(p: Vector3<R>) -> Self {
        UavState {
            p,
            v: Vector3::zeros(),
            a: Vector3::zeros(),
        }
    }

    /// Stacks the state into a 9-vector `[p, v, a]`.
    pub fn to_vector(&self) -> StateVector<R> {
        let mut x = StateVector::zeros();
        for i in 0..3 {
            x[i] = self.p[i];
            x[3 + i] = self.v[i];
            x[6 + i] = self.a[i];
        }
        x
    }

    /// Unstacks a 9-vector produced by [`UavState::to_vector`].
    pub fn from_vector(x: &StateVector<R>) -> Self {
        UavState {
            p: Vector3::new(x[0], x[1], x[2]),
            v: Vector3::new(x[3], x[4], x[5]),
            a: Vector3::new(x[6], x[7], x[8]),
        }
    }

    /// True when every component of the state is finite.
    pub fn is_finite(&self) -> bool {
        finite3(&self.p) && finite3(&self.v) && finite3(&self.a)
    }
}

fn default_tau<R: Real>() -> R {
    real(0.1)
}
fn default_d_max<R: Real>() -> Vector3<R> {
    Vector3::new(real(0.5), real(0.5), real(0.5))
}
fn default_v_max<R: Real>() -> R {
    real(2.0)
}
fn default_a_max<R: Real>() -> R {
    real(9.81)
}
fn default_u_max<R: Real>() -> R {
    real(1.0)
}

/// Step period, per-axis drag coefficients, and norm bounds on velocity,
/// acceleration, and jerk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsParams<R: Real> {
    /// Step period in seconds.
    #[serde(default = "default_tau")]
    pub tau: R,
    /// Per-axis linear drag coefficients (1/s).
    #[serde(default = "default_d_max")]
    pub d_max: Vector3<R>,
    /// Speed bound (m/s).
    #[serde(default = "default_v_max")]
    pub v_max: R,
    /// Acceleration bound (m/s^2).
    #[serde(default = "default_a_max")]
    pub a_max: R,
    /// Jerk bound (m/s^3).
    #[serde(default = "default_u_max")]
    pub u_max: R,
}

impl<R: Real> Default for DynamicsParams<R> {
    fn default() -> Self {
        DynamicsParams {
            tau: default_tau(),
            d_max: default_d_max(),
            v_max: default_v_max(),
            a_max: default_a_max(),
            u_max: default_u_max(),
        }
    }
}

impl<R: Real> DynamicsParams<R> {
    /// Checks every documented parameter range, naming the offender.
    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > R::zero()) {
            return Err(Error::invalid("dynamics.tau", "must be finite and > 0"));
        }
        for (i, d) in self.d_max.iter().enumerate() {
            if !(d.is_finite() && *d >= R::zero()) {
                return Err(Error::invalid(
                    "dynamics.d_max",
                    format!("component {i} must be finite and >= 0"),
                ));
            }
            if R::one() - self.tau * *d <= R::zero() {
                return Err(Error::invalid(
                    "dynamics.d_max",
                    format!("1 - tau*d_max[{i}] must stay positive (discretization stability)"),
                ));
            }
        }
        for (name, v) in [
            ("dynamics.v_max", self.v_max),
            ("dynamics.a_max", self.a_max),
            ("dynamics.u_max", self.u_max),
        ] {
            if !(v.is_finite() && v > R::zero()) {
                return Err(Error::invalid(name, "must be finite and > 0"));
            }
        }
        Ok(())
    }
}

/// Discrete state-transition matrices `x' = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrices<R: Real> {
    pub a: SMatrix<R, 9, 9>,
    pub b: SMatrix<R, 9, 3>,
}

impl<R: Real> StateMatrices<R> {
    /// Propagates one step via the matrix product; the canonical code path
    /// for every state update in the crate.
    #[inline]
    pub fn step(&self, x: &UavState<R>, u: &Vector3<R>) -> UavState<R> {
        let xv = self.a * x.to_vector() + self.b * u;
        UavState::from_vector(&xv)
    }
}

/// Builds the block matrices
///
/// ```text
/// A = [ I  tau*I        0     ]      B = [   0   ]
///     [ 0  I - tau*D  tau*I   ]          [   0   ]
///     [ 0  0            I     ]          [ tau*I ]
/// ```
///
/// where `D = diag(d_max)`.
pub fn build_matrices<R: Real>(params: &DynamicsParams<R>) -> Result<StateMatrices<R>> {
    params.validate()?;
    let tau = params.tau;
    let mut a = SMatrix::<R, 9, 9>::identity();
    let mut b = SMatrix::<R, 9, 3>::zeros();
    for i in 0..3 {
        a[(i, 3 + i)] = tau;
        a[(3 + i, 3 + i)] = R::one() - tau * params.d_max[i];
        a[(3 + i, 6 + i)] = tau;
        b[(6 + i, i)] = tau;
    }
    Ok(StateMatrices { a, b })
}

/// Propagates `x` one step under jerk input `u`.
pub fn step<R: Real>(
    x: &UavState<R>,
    u: &Vector3<R>,
    params: &DynamicsParams<R>,
) -> Result<UavState<R>> {
    if !x.is_finite() {
        return Err(Error::NonFinite { what: "state" });
    }
    if !finite3(u) {
        return Err(Error::NonFinite { what: "control" });
    }
    let m = build_matrices(params)?;
    Ok(m.step(x, u))
}

/// Propagates `x0` through the whole control sequence, returning the `P`
/// successor states (the initial state is not included).
pub fn rollout<R: Real>(
    x0: &UavState<R>,
    controls: &[Vector3<R>],
    params: &DynamicsParams<R>,
) -> Result<Vec<UavState<R>>> {
    if controls.is_empty() {
        return Err(Error::EmptyControls);
    }
    if !x0.is_finite() {
        return Err(Error::NonFinite { what: "state" });
    }
    for u in controls {
        if !finite3(u) {
            return Err(Error::NonFinite { what: "control" });
        }
    }
    let m = build_matrices(params)?;
    let mut states = Vec::with_capacity(controls.len());
    let mut x = *x0;
    for u in controls {
        x = m.step(&x, u);
        states.push(x);
    }
    Ok(states)
}
