//! Model angles and frequencies of a fitted torus from phase-space sampling.
//!
//! Differentiating `H(ϑ, J) ≈ H₀(J)` along `J` at fixed toy angles gives, on
//! every grid point, `ω_n − Σ_k (∂H/∂S_k)(∂S_k/∂J_n) = (∂H/∂u)(∂u/∂𝒥_n)`,
//! a linear system for `β_n = (ω_n, ∂S/∂J_n)` solved by least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::numerics::LuSolver;
use crate::staeckel::StaeckelToy;
use crate::target::TargetHamiltonian;
use crate::torusfit::{
    action_gradient, energy_derivatives, evaluate_grid, torus_point, AngleGrid, AngleMetadata, GridSample,
    TorusModel,
};

/// Normal matrices with a larger condition estimate count as rank deficient.
pub const MAX_CONDITION: f64 = 1e13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AngleSolveOptions {
    /// Solve the rows by QR instead of failing when `XᵀX` is ill conditioned.
    pub qr_fallback: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AngleSolveResult {
    pub omega: [f64; 3],
    pub ds_dj: Vec<[f64; 3]>,
    /// `‖y_n − X β_n‖` per component.
    pub residual_norms: [f64; 3],
    /// `λ_max/λ_min` of `XᵀX`.
    pub condition_estimate: f64,
    pub used_qr: bool,
}

impl AngleSolveResult {
    /// Stores `ω`, `∂S/∂J` and the solve diagnostics in the model.
    pub fn apply_to(&self, model: &mut TorusModel) {
        model.omega = Some(self.omega);
        model.ds_dj = Some(self.ds_dj.clone());
        model.angles = Some(AngleMetadata {
            residual_norms: self.residual_norms,
            condition_estimate: self.condition_estimate,
        });
    }
}

/// Least-squares rows: `X_m = [1, −∂H/∂S_k]` and `y_{m,n} = (∂H/∂u)(∂u/∂𝒥_n)`
/// with `n` over `(λ, φ, ν)`.
pub fn assemble_rows(
    model: &TorusModel,
    grid: &AngleGrid,
    target: &dyn TargetHamiltonian,
    toy: &StaeckelToy,
) -> Result<(DMatrix<f64>, [DVector<f64>; 3])> {
    let samples = evaluate_grid(model, grid, target, toy, true, None)?;
    Ok(rows_of(&samples, model))
}

pub(crate) fn rows_of(samples: &[GridSample], model: &TorusModel) -> (DMatrix<f64>, [DVector<f64>; 3]) {
    let m = samples.len();
    let mut x = DMatrix::zeros(m, model.waves.len() + 1);
    let mut y = [DVector::zeros(m), DVector::zeros(m), DVector::zeros(m)];
    for (i, s) in samples.iter().enumerate() {
        x[(i, 0)] = 1.0;
        for (k, d) in energy_derivatives(s, &model.waves).into_iter().enumerate() {
            x[(i, k + 1)] = -d;
        }
        let g = s.gradient.expect("gradient evaluated");
        for n in 0..3 {
            y[n][i] = g[n];
        }
    }
    (x, y)
}

/// Solves the normal equations `XᵀX β_n = Xᵀ y_n` with one factorisation.
pub fn solve_model_angles(
    model: &TorusModel,
    grid: &AngleGrid,
    target: &dyn TargetHamiltonian,
    toy: &StaeckelToy,
    opts: &AngleSolveOptions,
) -> Result<AngleSolveResult> {
    let columns = model.waves.len() + 1;
    if grid.len() < columns {
        return Err(Error::InvalidParameter(format!("{} grid points for {columns} unknowns", grid.len())));
    }
    let (x, y) = assemble_rows(model, grid, target, toy)?;
    solve_rows(&x, &y, opts)
}

pub(crate) fn solve_rows(x: &DMatrix<f64>, y: &[DVector<f64>; 3], opts: &AngleSolveOptions) -> Result<AngleSolveResult> {
    let xtx = x.tr_mul(x);
    let eig = xtx.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v.abs())));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };

    let lu = if condition <= MAX_CONDITION { LuSolver::new(&xtx).ok() } else { None };
    let betas: Vec<DVector<f64>> = match (lu, opts.qr_fallback) {
        (Some(lu), _) => y.iter().map(|yn| lu.solve(&x.tr_mul(yn))).collect::<Result<_>>()?,
        (None, true) => {
            let svd = x.clone().svd(true, true);
            let eps = f64::EPSILON * x.nrows().max(x.ncols()) as f64 * svd.singular_values.max();
            y.iter()
                .map(|yn| svd.solve(yn, eps).map_err(|e| Error::SingularMatrix(e.to_string())))
                .collect::<Result<_>>()?
        }
        (None, false) => {
            return Err(Error::SingularMatrix(format!("normal matrix condition estimate {condition:e}")));
        }
    };
    let used_qr = condition > MAX_CONDITION;

    let mut residual_norms = [0.0; 3];
    for n in 0..3 {
        residual_norms[n] = (&y[n] - x * &betas[n]).norm();
    }
    let omega = [betas[0][0], betas[1][0], betas[2][0]];
    let ds_dj = (1..x.ncols()).map(|k| [betas[0][k], betas[1][k], betas[2][k]]).collect();
    Ok(AngleSolveResult { omega, ds_dj, residual_norms, condition_estimate: condition, used_qr })
}

fn ds_dj(model: &TorusModel) -> Result<&[[f64; 3]]> {
    model
        .ds_dj
        .as_deref()
        .ok_or_else(|| Error::InvalidParameter("model has no dS/dJ; run angle recovery first".into()))
}

/// `θ = ϑ + 2 Σ (∂S_k/∂J) sin(k·ϑ)`, reduced to `[0, 2π)`.
///
/// The azimuthal component carries its own `∂S_k/∂J_φ` term, since the
/// coefficients of neighbouring tori differ in `J_φ` as well.
pub fn model_angle(theta_toy: &[f64; 3], model: &TorusModel) -> Result<[f64; 3]> {
    let d = ds_dj(model)?;
    let mut th = *theta_toy;
    for (k, dk) in model.waves.waves().iter().zip(d) {
        let sn = 2.0 * (k[0] as f64 * theta_toy[0] + k[1] as f64 * theta_toy[2]).sin();
        for n in 0..3 {
            th[n] += dk[n] * sn;
        }
    }
    Ok(th.map(|t| t.rem_euclid(TAU)))
}

/// Pointwise `ω = (∂H/∂u)(∂u/∂𝒥)(∂𝒥/∂J)` from the action gradient `g` at
/// toy angles `theta_toy`.
pub fn frequencies_from_gradient(g: &[f64; 3], theta_toy: &[f64; 3], model: &TorusModel) -> Result<[f64; 3]> {
    let d = ds_dj(model)?;
    let mut w = *g;
    for (k, dk) in model.waves.waves().iter().zip(d) {
        let c = 2.0 * (g[0] * k[0] as f64 + g[2] * k[1] as f64) * (k[0] as f64 * theta_toy[0] + k[1] as f64 * theta_toy[2]).cos();
        for n in 0..3 {
            w[n] += c * dk[n];
        }
    }
    Ok(w)
}

/// Pointwise frequency estimate at the torus point with toy angles `theta_toy`.
pub fn model_frequencies(
    theta_toy: &[f64; 3],
    model: &TorusModel,
    target: &dyn TargetHamiltonian,
    toy: &StaeckelToy,
) -> Result<[f64; 3]> {
    ds_dj(model)?;
    let u = torus_point(theta_toy, model, toy)?;
    let g = action_gradient(&u, target, toy)?;
    frequencies_from_gradient(&g, theta_toy, model)
}
