//! Fourier generating-function tori and their least-squares fit.
//!
//! A torus with target actions `J` is the image of the toy torus family
//! under `𝒥 = J + 2 Σ k S_k cos(k·ϑ)` with `k = (k_λ, 0, k_ν)` running over
//! one member of each `±k` pair. The coefficients `S_k` are chosen to make
//! the target Hamiltonian as constant as possible on a grid of toy angles.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::coords::PhasePoint;
use crate::error::{Error, Result};
use crate::numerics::{levenberg_marquardt, LeastSquaresProblem, LmConfig};
use crate::staeckel::{Integrals, StaeckelToy, ToyParams};
use crate::target::TargetHamiltonian;

/// Which wave vectors a [`WaveSet`] admits.
///
/// Bounds are quoted in angles that cover each oscillation twice, where a
/// single-valued generating function has only even `k_λ` and a `z`-symmetric
/// target only even `k_ν`. The stored waves use this crate's angles, in which
/// `ϑ_λ` advances by 2π per radial oscillation and `ϑ_ν` per period of the
/// regularised `s`; a doubled-cover wave `(2m, n)` is stored as `(m, n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymmetryFilter {
    /// Even `k_ν`: targets symmetric under `z → −z` and time reversal.
    Even,
    /// Every `k_ν`.
    All,
}

/// Half-set of wave vectors `(k_λ, k_ν)`; `k_φ = 0` throughout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[i32; 2]>", into = "Vec<[i32; 2]>")]
pub struct WaveSet {
    waves: Vec<[i32; 2]>,
}

impl TryFrom<Vec<[i32; 2]>> for WaveSet {
    type Error = Error;

    fn try_from(waves: Vec<[i32; 2]>) -> Result<Self> {
        Self::from_list(waves)
    }
}

impl From<WaveSet> for Vec<[i32; 2]> {
    fn from(w: WaveSet) -> Self {
        w.waves
    }
}

impl WaveSet {
    /// Doubled-cover bounds `|k_λ| ≤ K_λ`, `|k_ν| ≤ K_ν`; one of each `±k`
    /// pair is kept, with `k_ν > 0` on the `k_λ = 0` line.
    pub fn new(k_lambda_max: u32, k_nu_max: u32, filter: SymmetryFilter) -> Self {
        let step = match filter {
            SymmetryFilter::Even => 2,
            SymmetryFilter::All => 1,
        };
        let (kl, kn) = (k_lambda_max as i32 / 2, k_nu_max as i32);
        let mut waves = Vec::new();
        for l in 0..=kl {
            for n in (-kn..=kn).filter(|n| n.rem_euclid(step) == 0) {
                if l > 0 || n > 0 {
                    waves.push([l, n]);
                }
            }
        }
        Self { waves }
    }

    /// Waves in this crate's angles.
    pub fn from_list(waves: Vec<[i32; 2]>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for &[l, n] in &waves {
            if l == 0 && n == 0 {
                return Err(Error::InvalidParameter("wave set contains k = 0".into()));
            }
            if seen.contains(&[-l, -n]) || !seen.insert([l, n]) {
                return Err(Error::InvalidParameter(format!("wave ({l}, {n}) duplicated or paired with its negative")));
            }
        }
        Ok(Self { waves })
    }

    pub fn len(&self) -> usize {
        self.waves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waves.is_empty()
    }

    pub fn waves(&self) -> &[[i32; 2]] {
        &self.waves
    }

    /// Highest frequency per angle in the variable the series depends on
    /// (`2ϑ_ν` when every `k_ν` is even).
    pub fn effective_max_frequency(&self) -> [u32; 2] {
        let even_nu = self.waves.iter().all(|k| k[1] % 2 == 0);
        let m = |i: usize| self.waves.iter().map(|k| k[i].unsigned_abs()).max().unwrap_or(0);
        [m(0), if even_nu { m(1) / 2 } else { m(1) }]
    }
}

/// Regular product grid of toy angles `(ϑ_λ, ϑ_ν)` at `ϑ_φ = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleGrid {
    pub n_lambda: usize,
    pub n_nu: usize,
}

impl AngleGrid {
    /// Rejects grids that undersample the wave set.
    pub fn new(n_lambda: usize, n_nu: usize, waves: &WaveSet) -> Result<Self> {
        let g = Self { n_lambda, n_nu };
        g.check(waves)?;
        Ok(g)
    }

    pub fn check(&self, waves: &WaveSet) -> Result<()> {
        let [fl, fn_] = waves.effective_max_frequency();
        if self.n_lambda as u32 <= 2 * fl || self.n_nu as u32 <= 2 * fn_ {
            return Err(Error::InvalidParameter(format!(
                "{}x{} grid undersamples effective frequencies ({fl}, {fn_})",
                self.n_lambda, self.n_nu
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_lambda * self.n_nu
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> Vec<[f64; 3]> {
        let mut pts = Vec::with_capacity(self.len());
        for i in 0..self.n_lambda {
            for j in 0..self.n_nu {
                pts.push([
                    2.0 * PI * i as f64 / self.n_lambda as f64,
                    0.0,
                    2.0 * PI * j as f64 / self.n_nu as f64,
                ]);
            }
        }
        pts
    }
}

/// Toy parameters as stored in a model file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyRecord {
    pub alpha: f64,
    pub gamma: f64,
    pub rho0: f64,
    pub quadrature_nodes: usize,
}

impl ToyRecord {
    pub fn new(params: &ToyParams<f64>, quadrature_nodes: usize) -> Self {
        Self { alpha: params.coords.alpha, gamma: params.coords.gamma, rho0: params.rho0, quadrature_nodes }
    }

    pub fn toy(&self) -> Result<StaeckelToy> {
        StaeckelToy::new(ToyParams::new(self.alpha, self.gamma, self.rho0)?, self.quadrature_nodes)
    }
}

/// Bookkeeping of a fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitMetadata {
    pub grid: [usize; 2],
    pub chi2_initial: f64,
    pub chi2: f64,
    /// `σ(H)/|H̄|` at `S = 0` and after the fit.
    pub scatter_initial: f64,
    pub scatter: f64,
    pub iterations: usize,
    pub converged: bool,
    /// LM trial steps rejected because some `𝒥` left the mappable range.
    pub infeasible_steps: usize,
}

/// Residual norms of the angle-recovery least-squares problems.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleMetadata {
    pub residual_norms: [f64; 3],
    pub condition_estimate: f64,
}

/// A fitted torus; serialised as the model file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusModel {
    pub toy: ToyRecord,
    /// `(J_λ, J_φ, J_ν)`.
    pub actions: [f64; 3],
    pub waves: WaveSet,
    pub coefficients: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ds_dj: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_bar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitMetadata>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angles: Option<AngleMetadata>,
    /// Free-form provenance (run configuration, code version).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<serde_json::Value>,
}

impl TorusModel {
    /// Identity transformation (`S = 0`).
    pub fn unfitted(actions: [f64; 3], waves: WaveSet, toy: &StaeckelToy) -> Self {
        let n = waves.len();
        Self {
            toy: ToyRecord::new(toy.params(), toy.nodes()),
            actions,
            waves,
            coefficients: vec![0.0; n],
            ds_dj: None,
            omega: None,
            h_bar: None,
            fit: None,
            angles: None,
            run: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.coefficients.len() != self.waves.len() {
            return Err(Error::InvalidParameter(format!(
                "{} coefficients for {} waves",
                self.coefficients.len(),
                self.waves.len()
            )));
        }
        if self.coefficients.iter().any(|s| !s.is_finite()) || self.actions.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidParameter("non-finite coefficient or action".into()));
        }
        if let Some(d) = &self.ds_dj {
            if d.len() != self.waves.len() || self.omega.is_none() {
                return Err(Error::InvalidParameter("ds_dj needs one 3-vector per wave and omega".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Other(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }
}

/// `𝒥(ϑ) = J + 2 Σ k S_k cos(k·ϑ)`.
pub fn toy_actions_on_torus(theta: &[f64; 3], model: &TorusModel) -> [f64; 3] {
    actions_with(theta, &model.actions, &model.waves, &model.coefficients)
}

fn actions_with(theta: &[f64; 3], j: &[f64; 3], waves: &WaveSet, s: &[f64]) -> [f64; 3] {
    let mut out = *j;
    for (k, &sk) in waves.waves().iter().zip(s) {
        let c = 2.0 * sk * (k[0] as f64 * theta[0] + k[1] as f64 * theta[2]).cos();
        out[0] += k[0] as f64 * c;
        out[2] += k[1] as f64 * c;
    }
    out
}

/// `J = 𝒥 − 2 Σ k S_k cos(k·ϑ)` for frozen coefficients.
pub fn invert_actions(theta: &[f64; 3], toy_actions: &[f64; 3], model: &TorusModel) -> [f64; 3] {
    let shift = actions_with(theta, &[0.0; 3], &model.waves, &model.coefficients);
    [toy_actions[0] - shift[0], toy_actions[1], toy_actions[2] - shift[2]]
}

fn map_point(
    theta: &[f64; 3],
    actions: [f64; 3],
    toy: &StaeckelToy,
    guess: Option<Integrals<f64>>,
) -> Result<(PhasePoint<f64>, Integrals<f64>)> {
    if !(actions[0] > 0.0) || !(actions[2] >= 0.0) {
        return Err(Error::Unmappable { theta: *theta, actions });
    }
    toy.forward_with_guess(theta, &actions, guess).map_err(|e| match e {
        Error::Domain(_) | Error::NoBoundOrbit(_) => Error::Unmappable { theta: *theta, actions },
        other => other,
    })
}

/// Phase-space point of the model torus at toy angles `theta`.
pub fn torus_point(theta: &[f64; 3], model: &TorusModel, toy: &StaeckelToy) -> Result<PhasePoint<f64>> {
    Ok(map_point(theta, toy_actions_on_torus(theta, model), toy, None)?.0)
}

/// Per-grid-point data of one evaluation.
#[derive(Clone, Debug)]
pub struct GridSample {
    pub theta: [f64; 3],
    pub point: PhasePoint<f64>,
    pub integrals: Integrals<f64>,
    pub energy: f64,
    /// `(∂H/∂u)(∂u/∂𝒥)`, when requested.
    pub gradient: Option<[f64; 3]>,
}

/// Maps every grid angle through the model and evaluates the target there.
pub fn evaluate_grid(
    model: &TorusModel,
    grid: &AngleGrid,
    target: &dyn TargetHamiltonian,
    toy: &StaeckelToy,
    with_gradient: bool,
    guesses: Option<&[GridSample]>,
) -> Result<Vec<GridSample>> {
    let thetas = grid.points();
    thetas
        .par_iter()
        .enumerate()
        .map(|(m, theta)| {
            let guess = guesses.map(|g| g[m].integrals);
            let (point, integrals) = map_point(theta, toy_actions_on_torus(theta, model), toy, guess)?;
            let gradient = if with_gradient { Some(action_gradient(&point, target, toy)?) } else { None };
            Ok(GridSample { theta: *theta, point, integrals, energy: target.hamiltonian(&point), gradient })
        })
        .collect()
}

/// `∂H/∂𝒥 = (∂H/∂u)(∂u/∂𝒥)` at a phase point.
pub fn action_gradient(u: &PhasePoint<f64>, target: &dyn TargetHamiltonian, toy: &StaeckelToy) -> Result<[f64; 3]> {
    let jac = toy.jacobian(u)?;
    let dh = target.gradient(u);
    Ok(std::array::from_fn(|n| (0..6).map(|i| dh[i] * jac.du_dj[(i, n)]).sum()))
}

/// `∂H/∂S_k = 2 (g_λ k_λ + g_ν k_ν) cos(k·ϑ)` at one sample.
pub(crate) fn energy_derivatives(sample: &GridSample, waves: &WaveSet) -> Vec<f64> {
    let g = sample.gradient.expect("gradient evaluated");
    let th = sample.theta;
    waves
        .waves()
        .iter()
        .map(|k| {
            2.0 * (g[0] * k[0] as f64 + g[2] * k[1] as f64) * (k[0] as f64 * th[0] + k[1] as f64 * th[2]).cos()
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `(χ², H − H̄, H̄)`.
pub fn chi2_and_residuals(
    model: &TorusModel,
    grid: &AngleGrid,
    target: &dyn TargetHamiltonian,
    toy: &StaeckelToy,
) -> Result<(f64, DVector<f64>, f64)> {
    let samples = evaluate_grid(model, grid, target, toy, false, None)?;
    Ok(residuals_of(&samples))
}

fn residuals_of(samples: &[GridSample]) -> (f64, DVector<f64>, f64) {
    let h: Vec<f64> = samples.iter().map(|s| s.energy).collect();
    let h_bar = mean(&h);
    let r = DVector::from_iterator(h.len(), h.iter().map(|x| x - h_bar));
    (r.norm_squared(), r, h_bar)
}

fn jacobian_of(samples: &[GridSample], waves: &WaveSet) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = samples.par_iter().map(|s| energy_derivatives(s, waves)).collect();
    let mut jac = DMatrix::zeros(samples.len(), waves.len());
    for (m, row) in rows.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            jac[(m, k)] = *v;
        }
    }
    for k in 0..waves.len() {
        let mu = jac.column(k).mean();
        jac.column_mut(k).add_scalar_mut(-mu);
    }
    jac
}

/// `∂(H − H̄)/∂S`, one row per grid point.
pub fn chi2_jacobian(
    model: &TorusModel,
    grid: &AngleGrid,
    target: &dyn TargetHamiltonian,
    toy: &StaeckelToy,
) -> Result<DMatrix<f64>> {
    let samples = evaluate_grid(model, grid, target, toy, true, None)?;
    Ok(jacobian_of(&samples, &model.waves))
}

struct FitProblem<'a> {
    model: TorusModel,
    grid: AngleGrid,
    target: &'a dyn TargetHamiltonian,
    toy: &'a StaeckelToy,
    cache: Option<(DVector<f64>, Vec<GridSample>)>,
    accepted: Option<Vec<GridSample>>,
}

impl FitProblem<'_> {
    fn samples(&mut self, s: &DVector<f64>, with_gradient: bool) -> Option<Vec<GridSample>> {
        if let Some((cs, samples)) = &self.cache {
            if cs == s && (!with_gradient || samples[0].gradient.is_some()) {
                return Some(samples.clone());
            }
        }
        self.model.coefficients = s.as_slice().to_vec();
        let guesses = self.accepted.as_deref();
        let samples = evaluate_grid(&self.model, &self.grid, self.target, self.toy, with_gradient, guesses).ok()?;
        self.cache = Some((s.clone(), samples.clone()));
        Some(samples)
    }
}

impl LeastSquaresProblem for FitProblem<'_> {
    fn residuals(&mut self, s: &DVector<f64>) -> Option<DVector<f64>> {
        let samples = self.samples(s, false)?;
        Some(residuals_of(&samples).1)
    }

    fn jacobian(&mut self, s: &DVector<f64>) -> Option<DMatrix<f64>> {
        let samples = self.samples(s, true)?;
        let jac = jacobian_of(&samples, &self.model.waves);
        self.accepted = Some(samples);
        Some(jac)
    }
}

/// Fits the coefficients of the torus with actions `actions`, starting from `S = 0`.
pub fn fit_torus(
    actions: [f64; 3],
    waves: WaveSet,
    grid: AngleGrid,
    target: &dyn TargetHamiltonian,
    toy: &StaeckelToy,
    lm: &LmConfig,
) -> Result<TorusModel> {
    grid.check(&waves)?;
    if !(actions[0] > 0.0 && actions[2] > 0.0) {
        // every grid point of a planar torus sits on z = 0, where the
        // ν-momentum and hence ∂𝒥/∂u are singular
        return Err(Error::InvalidParameter(format!(
            "torus fit needs J_lambda > 0 and J_nu > 0, got {actions:?}"
        )));
    }
    if grid.len() < waves.len() {
        return Err(Error::InvalidParameter(format!("{} grid points for {} coefficients", grid.len(), waves.len())));
    }
    let model = TorusModel::unfitted(actions, waves, toy);
    let s0 = DVector::zeros(model.waves.len());
    let mut problem = FitProblem { model, grid, target, toy, cache: None, accepted: None };
    let initial = problem
        .samples(&s0, false)
        .ok_or_else(|| map_point_error(&problem))?;
    let (chi2_initial, _, h_bar0) = residuals_of(&initial);
    let report = levenberg_marquardt(&mut problem, s0, lm)?;
    let mut model = problem.model;
    model.coefficients = report.x.as_slice().to_vec();
    let samples = evaluate_grid(&model, &grid, target, toy, false, None)?;
    let (chi2, _, h_bar) = residuals_of(&samples);
    let m = grid.len() as f64;
    model.h_bar = Some(h_bar);
    model.fit = Some(FitMetadata {
        grid: [grid.n_lambda, grid.n_nu],
        chi2_initial,
        chi2,
        scatter_initial: (chi2_initial / m).sqrt() / h_bar0.abs(),
        scatter: (chi2 / m).sqrt() / h_bar.abs(),
        iterations: report.iterations,
        converged: report.converged,
        infeasible_steps: report.infeasible_steps,
    });
    Ok(model)
}

fn map_point_error(problem: &FitProblem) -> Error {
    // re-run the first failing point to report it
    for theta in problem.grid.points() {
        if let Err(e) = map_point(&theta, toy_actions_on_torus(&theta, &problem.model), problem.toy, None) {
            return e;
        }
    }
    Error::Other("grid evaluation failed".into())
}
