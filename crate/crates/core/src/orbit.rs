//! Orbit integration in an axisymmetric potential and surfaces of section.
//!
//! The meridional system `(R, z, p_R, p_z)` is integrated with the conserved
//! `p_φ` entering through the effective potential; the azimuth is carried
//! along as a fifth component.

use serde::{Deserialize, Serialize};

use crate::coords::PhasePoint;
use crate::error::{Error, Result};
use crate::numerics::find_root_bracketed;
use crate::target::TargetHamiltonian;

type State = [f64; 5];

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = B1 - 5179.0 / 57600.0;
const E3: f64 = B3 - 7571.0 / 16695.0;
const E4: f64 = B4 - 393.0 / 640.0;
const E5: f64 = B5 + 92097.0 / 339200.0;
const E6: f64 = B6 - 187.0 / 2100.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Output sampling interval; `None` stores every accepted step.
    pub sample_interval: Option<f64>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-14, max_steps: 10_000_000, sample_interval: None }
    }
}

/// Upward crossing of the equatorial plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionPoint {
    pub t: f64,
    pub r: f64,
    pub p_r: f64,
    /// Residual `z` after refinement.
    pub z: f64,
}

/// Sampled orbit.
#[derive(Clone, Debug)]
pub struct OrbitTrace {
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint<f64>>,
    /// `H(t) − H(0)` at each sample.
    pub energy_drift: Vec<f64>,
    /// Upward crossings `z = 0, p_z > 0`, refined.
    pub section: Vec<SectionPoint>,
    /// `H(0)`.
    pub energy: f64,
}

impl OrbitTrace {
    pub fn max_relative_energy_drift(&self) -> f64 {
        let scale = self.energy.abs().max(f64::MIN_POSITIVE);
        self.energy_drift.iter().fold(0.0f64, |m, d| m.max(d.abs())) / scale
    }
}

struct Rhs<'a> {
    target: &'a dyn TargetHamiltonian,
    lz: f64,
}

impl Rhs<'_> {
    fn eval(&self, y: &State) -> State {
        let [r, z, p_r, p_z, _] = *y;
        let (dr, dz) = self.target.potential_gradient(r, z);
        let r2 = r * r;
        [p_r, p_z, self.lz * self.lz / (r2 * r) - dr, -dz, self.lz / r2]
    }
}

fn axpy(y: &State, h: f64, terms: &[(f64, &State)]) -> State {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..5 {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// One Dormand–Prince step; returns the fifth-order solution, the error
/// estimate, and the derivative at the new point.
fn dp_step(rhs: &Rhs, y: &State, k1: &State, h: f64) -> (State, State, State) {
    let k2 = rhs.eval(&axpy(y, h, &[(A21, k1)]));
    let k3 = rhs.eval(&axpy(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = rhs.eval(&axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = rhs.eval(&axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
    let k6 = rhs.eval(&axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
    let y5 = axpy(y, h, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
    let k7 = rhs.eval(&y5);
    let mut err = [0.0; 5];
    for i in 0..5 {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    (y5, err, k7)
}

fn to_state(u: &PhasePoint<f64>) -> State {
    [u.r, u.z, u.p_r, u.p_z, u.varphi]
}

fn to_point(y: &State, lz: f64) -> PhasePoint<f64> {
    PhasePoint::new(y[0], y[4], y[1], y[2], lz, y[3])
}

/// Adaptive Dormand–Prince 5(4) integration over `[0, duration]`
/// (negative durations integrate backwards).
pub fn integrate_orbit(
    u0: &PhasePoint<f64>,
    target: &dyn TargetHamiltonian,
    duration: f64,
    opts: &IntegratorOptions,
) -> Result<OrbitTrace> {
    if !(u0.r > 0.0) {
        return Err(Error::Domain(format!("orbit start R = {} must be positive", u0.r)));
    }
    if !(opts.rtol > 0.0) || !(opts.atol > 0.0) || opts.sample_interval.is_some_and(|s| !(s > 0.0)) {
        return Err(Error::InvalidParameter(format!("invalid integrator options {opts:?}")));
    }
    let rhs = Rhs { target, lz: u0.p_varphi };
    let dir = if duration < 0.0 { -1.0 } else { 1.0 };
    let t_end = duration.abs();
    let e0 = target.hamiltonian(u0);
    let planar = u0.z == 0.0 && u0.p_z == 0.0;

    let mut trace = OrbitTrace {
        times: vec![0.0],
        points: vec![*u0],
        energy_drift: vec![0.0],
        section: Vec::new(),
        energy: e0,
    };
    if planar || (dir > 0.0 && u0.z == 0.0 && u0.p_z > 0.0) {
        trace.section.push(SectionPoint { t: 0.0, r: u0.r, p_r: u0.p_r, z: 0.0 });
    }
    let mut y = to_state(u0);
    let mut k1 = rhs.eval(&y);
    let mut t = 0.0;
    let mut sample_index = 1u64;
    let mut next_sample = opts.sample_interval;
    let scale0 = y.iter().take(4).fold(0.0f64, |m, v| m.max(v.abs()));
    let mut h = 1e-3 * scale0.max(1e-3) / k1.iter().take(4).fold(1e-12f64, |m, v| m.max(v.abs()));
    let mut steps = 0;
    while t < t_end {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::NoConvergence { iterations: steps, residual: t_end - t });
        }
        let mut limit = t_end - t;
        if let Some(ts) = next_sample {
            limit = limit.min(ts - t);
        }
        let hs = h.min(limit);
        let (y_new, err, k_new) = dp_step(&rhs, &y, &k1, dir * hs);
        let mut en = 0.0f64;
        for i in 0..5 {
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            en = en.max((err[i] / sc).abs());
        }
        if !en.is_finite() {
            h *= 0.1;
            if h < 1e-14 * t_end.max(1.0) {
                return Err(Error::StepSizeCollapse(t));
            }
            continue;
        }
        if en <= 1.0 {
            if !planar && dir > 0.0 && y[1] < 0.0 && y_new[1] >= 0.0 {
                trace.section.push(refine_crossing(&rhs, &y, &k1, dir * hs, t * dir));
            }
            t = if hs == limit { t + limit } else { t + hs };
            y = y_new;
            k1 = k_new;
            let store = match next_sample {
                Some(ts) if (t - ts).abs() <= 1e-12 * ts.max(1.0) => {
                    sample_index += 1;
                    next_sample = opts.sample_interval.map(|d| d * sample_index as f64);
                    true
                }
                Some(_) => t >= t_end,
                None => true,
            };
            if store {
                let u = to_point(&y, rhs.lz);
                trace.times.push(dir * t);
                trace.energy_drift.push(target.hamiltonian(&u) - e0);
                if planar {
                    trace.section.push(SectionPoint { t: dir * t, r: u.r, p_r: u.p_r, z: u.z });
                }
                trace.points.push(u);
            }
        }
        let fac = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
        // a step clipped to hit a sample time says nothing about the step size
        h = if hs < h && en <= 1.0 { h.max(hs * fac) } else { hs * fac };
        if h < 1e-14 * t_end.max(1.0) {
            return Err(Error::StepSizeCollapse(t));
        }
    }
    Ok(trace)
}

/// Locates `z = 0` inside an accepted step by re-integrating a single
/// Dormand–Prince step of variable length from its start.
fn refine_crossing(rhs: &Rhs, y0: &State, k1: &State, h: f64, t0: f64) -> SectionPoint {
    let z_at = |s: f64| if s == 0.0 { y0[1] } else { dp_step(rhs, y0, k1, s).0[1] };
    let s = find_root_bracketed(|s| z_at(s * h.signum()), 0.0, h.abs(), 1e-15 * h.abs()).unwrap_or(h.abs()) * h.signum();
    let y = if s == 0.0 { *y0 } else { dp_step(rhs, y0, k1, s).0 };
    SectionPoint { t: t0 + s, r: y[0], p_r: y[2], z: y[1] }
}

/// Upward crossings of `z = 0` of the orbit from `u0`.
pub fn poincare_section(
    u0: &PhasePoint<f64>,
    target: &dyn TargetHamiltonian,
    duration: f64,
    opts: &IntegratorOptions,
) -> Result<Vec<SectionPoint>> {
    Ok(integrate_orbit(u0, target, duration, opts)?.section)
}

/// Fixed-step kick-drift-kick leapfrog; time-reversible and symplectic.
pub fn leapfrog(u0: &PhasePoint<f64>, target: &dyn TargetHamiltonian, dt: f64, steps: usize) -> Vec<PhasePoint<f64>> {
    let lz = u0.p_varphi;
    let accel = |r: f64, z: f64| {
        let (dr, dz) = target.potential_gradient(r, z);
        (lz * lz / (r * r * r) - dr, -dz)
    };
    let mut u = *u0;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(u);
    let (mut ar, mut az) = accel(u.r, u.z);
    for _ in 0..steps {
        u.p_r += 0.5 * dt * ar;
        u.p_z += 0.5 * dt * az;
        let r_old = u.r;
        u.r += dt * u.p_r;
        u.z += dt * u.p_z;
        // azimuth advanced with the geometric-mean radius of the drift
        u.varphi += dt * lz / (r_old * u.r);
        let a = accel(u.r, u.z);
        ar = a.0;
        az = a.1;
        u.p_r += 0.5 * dt * ar;
        u.p_z += 0.5 * dt * az;
        out.push(u);
    }
    out
}
