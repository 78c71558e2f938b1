//! Checks of a fitted torus against integrated target orbits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::anglerec::{frequencies_from_gradient, model_angle};
use crate::error::{Error, Result};
use crate::numerics::find_root_bracketed;
use crate::orbit::OrbitTrace;
use crate::staeckel::StaeckelToy;
use crate::target::TargetHamiltonian;
use crate::torusfit::{action_gradient, invert_actions, torus_point, TorusModel};

/// Point of the model torus on `z = 0, p_z > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusSectionPoint {
    pub theta: [f64; 3],
    pub r: f64,
    pub p_r: f64,
    pub z: f64,
}

const SECTION_SCAN: usize = 64;

/// `count` section points at evenly spaced `ϑ_λ`, each with the `ϑ_ν` of
/// the upward crossing of the equatorial plane.
pub fn torus_section(model: &TorusModel, toy: &StaeckelToy, count: usize) -> Result<Vec<TorusSectionPoint>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let tl = TAU * i as f64 / count as f64;
            let at = |tn: f64| torus_point(&[tl, 0.0, tn], model, toy);
            // half-step offset keeps crossings at symmetric angles off the scan nodes
            let node = |j: usize| TAU * (j as f64 - 0.5) / SECTION_SCAN as f64;
            let mut prev = (node(0), at(node(0))?);
            for j in 1..=SECTION_SCAN {
                let tn = node(j);
                let cur = (tn, at(tn)?);
                if prev.1.z < 0.0 && cur.1.z >= 0.0 {
                    let mut err = None;
                    let root = find_root_bracketed(
                        |t| match at(t) {
                            Ok(u) => u.z,
                            Err(e) => {
                                err.get_or_insert(e);
                                f64::NAN
                            }
                        },
                        prev.0,
                        cur.0,
                        1e-15,
                    );
                    if let Some(e) = err {
                        return Err(e);
                    }
                    let tn = root?.rem_euclid(TAU);
                    let u = at(tn)?;
                    if u.p_z > 0.0 {
                        return Ok(TorusSectionPoint { theta: [tl, 0.0, tn], r: u.r, p_r: u.p_r, z: u.z });
                    }
                }
                prev = cur;
            }
            Err(Error::Other(format!("no upward equatorial crossing at theta_lambda = {tl}")))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSample {
    pub t: f64,
    /// `J(t) − J₀`.
    pub dj: [f64; 3],
}

/// `ΔJ(t)` with `J` from the toy maps and the frozen coefficients of the model.
pub fn trace_actions(model: &TorusModel, toy: &StaeckelToy, trace: &OrbitTrace) -> Result<Vec<ActionSample>> {
    trace
        .times
        .par_iter()
        .zip(&trace.points)
        .map(|(&t, u)| {
            let (th, ja) = toy.angles_actions(u)?;
            let j = invert_actions(&th, &ja, model);
            Ok(ActionSample { t, dj: std::array::from_fn(|n| j[n] - model.actions[n]) })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencySample {
    pub t: f64,
    /// `ω(t) − ω₀`.
    pub domega: [f64; 3],
}

fn omega0(model: &TorusModel) -> Result<[f64; 3]> {
    model
        .omega
        .ok_or_else(|| Error::InvalidParameter("model has no frequencies; run angle recovery first".into()))
}

/// `Δω(t)` from the pointwise frequency estimate along the orbit.
pub fn trace_frequencies(
    model: &TorusModel,
    toy: &StaeckelToy,
    target: &dyn TargetHamiltonian,
    trace: &OrbitTrace,
) -> Result<Vec<FrequencySample>> {
    let w0 = omega0(model)?;
    trace
        .times
        .par_iter()
        .zip(&trace.points)
        .map(|(&t, u)| {
            let th = toy.angles(u)?;
            let g = action_gradient(u, target, toy)?;
            let w = frequencies_from_gradient(&g, &th, model)?;
            Ok(FrequencySample { t, domega: std::array::from_fn(|n| w[n] - w0[n]) })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleSample {
    pub t: f64,
    /// Unwrapped model angles.
    pub theta: [f64; 3],
}

/// Model angles along the orbit, unwrapped assuming each component moves
/// by less than π between samples.
pub fn trace_angles(model: &TorusModel, toy: &StaeckelToy, trace: &OrbitTrace) -> Result<Vec<AngleSample>> {
    let raw: Vec<[f64; 3]> = trace
        .points
        .par_iter()
        .map(|u| model_angle(&toy.angles(u)?, model))
        .collect::<Result<_>>()?;
    let mut out: Vec<AngleSample> = Vec::with_capacity(raw.len());
    for (i, (&t, th)) in trace.times.iter().zip(&raw).enumerate() {
        let theta = match out.last() {
            None => *th,
            Some(prev) => std::array::from_fn(|n| prev.theta[n] + wrap_pi(th[n] - raw[i - 1][n])),
        };
        out.push(AngleSample { t, theta });
    }
    Ok(out)
}

fn wrap_pi(x: f64) -> f64 {
    (x + PI).rem_euclid(TAU) - PI
}

/// Least-squares line through `(t, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub slope_error: f64,
    pub max_residual: f64,
    pub rms_residual: f64,
}

pub fn fit_line(t: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = t.len();
    if n < 3 || y.len() != n {
        return Err(Error::InvalidParameter(format!("line fit needs at least 3 paired samples, got {n}")));
    }
    let nf = n as f64;
    let tm = t.iter().sum::<f64>() / nf;
    let ym = y.iter().sum::<f64>() / nf;
    let stt: f64 = t.iter().map(|a| (a - tm).powi(2)).sum();
    if !(stt > 0.0) {
        return Err(Error::InvalidParameter("line fit needs distinct times".into()));
    }
    let sty: f64 = t.iter().zip(y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let slope = sty / stt;
    let intercept = ym - slope * tm;
    let res: Vec<f64> = t.iter().zip(y).map(|(a, b)| b - intercept - slope * a).collect();
    let ss: f64 = res.iter().map(|r| r * r).sum();
    Ok(LineFit {
        slope,
        intercept,
        slope_error: (ss / (nf - 2.0) / stt).sqrt(),
        max_residual: res.iter().fold(0.0f64, |m, r| m.max(r.abs())),
        rms_residual: (ss / nf).sqrt(),
    })
}

/// `H(torus_point(ϑ(u))) − H̄` at the toy angles of each orbit sample.
pub fn local_energy_residuals(
    model: &TorusModel,
    toy: &StaeckelToy,
    target: &dyn TargetHamiltonian,
    trace: &OrbitTrace,
) -> Result<Vec<f64>> {
    let h_bar = model.h_bar.ok_or_else(|| Error::InvalidParameter("model has no H_bar; fit it first".into()))?;
    trace
        .points
        .par_iter()
        .map(|u| {
            let th = toy.angles(u)?;
            Ok(target.hamiltonian(&torus_point(&th, model, toy)?) - h_bar)
        })
        .collect()
}

/// Fraction of the top-decile samples of `a` that are also in the top decile of `b`.
pub fn top_decile_coincidence(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 10 {
        return Err(Error::InvalidParameter("coincidence needs two equal series of at least 10 samples".into()));
    }
    let top = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[j].abs().total_cmp(&v[i].abs()));
        idx.truncate(v.len() / 10);
        idx
    };
    let ta = top(a);
    let tb: std::collections::HashSet<usize> = top(b).into_iter().collect();
    Ok(ta.iter().filter(|i| tb.contains(i)).count() as f64 / ta.len() as f64)
}
