//! Target Hamiltonians and the least-squares fit of toy parameters to a
//! target potential.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coords::PhasePoint;
use crate::error::{Error, Result};
use crate::numerics::{levenberg_marquardt, LeastSquaresProblem, LmConfig};
use crate::scalar::{Dual, Real};
use crate::staeckel::{toy_potential_rz, ToyParams};

/// Symmetries the torus machinery may rely on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Symmetry {
    pub time_reversible: bool,
    pub z_symmetric: bool,
    pub axisymmetric: bool,
}

/// Axisymmetric target `H = |p|²/2 + Φ(R, z)`.
pub trait TargetHamiltonian: Send + Sync {
    fn name(&self) -> &str;

    fn potential(&self, r: f64, z: f64) -> f64;

    /// `(∂Φ/∂R, ∂Φ/∂z)`.
    fn potential_gradient(&self, r: f64, z: f64) -> (f64, f64);

    fn symmetry(&self) -> Symmetry {
        Symmetry { time_reversible: true, z_symmetric: true, axisymmetric: true }
    }

    fn hamiltonian(&self, u: &PhasePoint<f64>) -> f64 {
        u.kinetic() + self.potential(u.r, u.z)
    }

    /// `∂H/∂u` in the order `(R, φ, z, p_R, p_φ, p_z)`.
    fn gradient(&self, u: &PhasePoint<f64>) -> [f64; 6] {
        let (dr, dz) = self.potential_gradient(u.r, u.z);
        let r2 = u.r * u.r;
        [dr - u.p_varphi * u.p_varphi / (r2 * u.r), 0.0, dz, u.p_r, u.p_varphi / r2, u.p_z]
    }
}

/// Parameters of `Φ = ½ ln(R² + z²/a² + b²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogPotentialParams {
    pub a: f64,
    pub b: f64,
}

impl Default for LogPotentialParams {
    fn default() -> Self {
        Self { a: 0.8, b: 0.14 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogTarget {
    params: LogPotentialParams,
}

impl LogTarget {
    pub fn new(params: LogPotentialParams) -> Result<Self> {
        if !(params.a > 0.0) || !(params.b >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "logarithmic potential needs a > 0 and b >= 0, got a = {}, b = {}",
                params.a, params.b
            )));
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &LogPotentialParams {
        &self.params
    }
}

impl TargetHamiltonian for LogTarget {
    fn name(&self) -> &str {
        "logarithmic"
    }

    fn potential(&self, r: f64, z: f64) -> f64 {
        let LogPotentialParams { a, b } = self.params;
        0.5 * (r * r + z * z / (a * a) + b * b).ln()
    }

    fn potential_gradient(&self, r: f64, z: f64) -> (f64, f64) {
        let LogPotentialParams { a, b } = self.params;
        let a2 = a * a;
        let q = r * r + z * z / a2 + b * b;
        (r / q, z / (a2 * q))
    }
}

/// `H(u)` plus its gradient, for the logarithmic target.
pub fn log_target(u: &PhasePoint<f64>, params: &LogPotentialParams) -> Result<(f64, [f64; 6])> {
    let t = LogTarget::new(*params)?;
    Ok((t.hamiltonian(u), t.gradient(u)))
}

/// The toy Hamiltonian used as a target; its tori are exact.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyTarget {
    params: ToyParams<f64>,
}

impl ToyTarget {
    pub fn new(params: ToyParams<f64>) -> Self {
        Self { params }
    }
}

impl TargetHamiltonian for ToyTarget {
    fn name(&self) -> &str {
        "toy-staeckel"
    }

    fn potential(&self, r: f64, z: f64) -> f64 {
        toy_potential_rz(r, z, &self.params)
    }

    fn potential_gradient(&self, r: f64, z: f64) -> (f64, f64) {
        let p = self.params.cast::<Dual<2>>();
        let v = toy_potential_rz(Dual::variable(r, 0), Dual::variable(z, 1), &p);
        (v.eps[0], v.eps[1])
    }
}

/// Sample positions for the potential pre-fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitRegion {
    pub r_min: f64,
    pub r_max: f64,
    /// Number of logarithmically spaced radii.
    pub r_count: usize,
    /// Slices `z = q R`.
    pub z_over_r: Vec<f64>,
}

impl Default for FitRegion {
    fn default() -> Self {
        Self { r_min: 0.1, r_max: 3.0, r_count: 10, z_over_r: vec![0.0, 0.25, 0.5, 1.0] }
    }
}

impl FitRegion {
    pub fn points(&self) -> Result<Vec<(f64, f64)>> {
        if !(self.r_min > 0.0) || !(self.r_max >= self.r_min) || self.r_count == 0 || self.z_over_r.is_empty() {
            return Err(Error::InvalidParameter(format!("invalid fit region {self:?}")));
        }
        let ratio = if self.r_count > 1 {
            (self.r_max / self.r_min).powf(1.0 / (self.r_count - 1) as f64)
        } else {
            1.0
        };
        let mut pts = Vec::with_capacity(self.r_count * self.z_over_r.len());
        for &q in &self.z_over_r {
            for i in 0..self.r_count {
                let r = self.r_min * ratio.powi(i as i32);
                pts.push((r, q * r));
            }
        }
        Ok(pts)
    }
}

/// Result of [`fit_toy_params`].
#[derive(Clone, Debug)]
pub struct PreFit {
    pub params: ToyParams<f64>,
    /// Additive constant `c` with `Ψ + c ≈ Φ`.
    pub offset: f64,
    pub chi2: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `γ = −e^{x₀}`, `α = γ − e^{x₁}`, `ρ₀ = e^{x₂}`, offset `x₃`.
fn unpack<T: Real>(x: &[T]) -> (ToyParams<T>, T) {
    let gamma = -x[0].exp();
    let alpha = gamma - x[1].exp();
    let rho0 = x[2].exp();
    (ToyParams { coords: crate::coords::CoordParams { alpha, gamma }, rho0 }, x[3])
}

struct PreFitProblem<'a> {
    points: Vec<(f64, f64)>,
    phi: Vec<f64>,
    _target: &'a dyn TargetHamiltonian,
}

impl LeastSquaresProblem for PreFitProblem<'_> {
    fn residuals(&mut self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let (p, c) = unpack(x.as_slice());
        let r = DVector::from_iterator(
            self.points.len(),
            self.points.iter().zip(&self.phi).map(|(&(r, z), phi)| toy_potential_rz(r, z, &p) + c - phi),
        );
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn jacobian(&mut self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let xd: Vec<Dual<4>> = (0..4).map(|i| Dual::variable(x[i], i)).collect();
        let (p, c) = unpack(&xd);
        let mut jac = DMatrix::zeros(self.points.len(), 4);
        for (m, &(r, z)) in self.points.iter().enumerate() {
            let v = toy_potential_rz(Dual::constant(r), Dual::constant(z), &p) + c;
            for k in 0..4 {
                jac[(m, k)] = v.eps[k];
            }
        }
        Some(jac)
    }
}

/// Starting guess for the pre-fit, scaled to the region.
fn initial_guess(region: &FitRegion, target: &dyn TargetHamiltonian) -> [f64; 4] {
    let scale = (region.r_min * region.r_max).sqrt();
    let gamma = -0.1 * scale * scale;
    let alpha = -0.5 * scale * scale;
    let rho0 = 1.0 / (scale * scale);
    let p = ToyParams::new(alpha, gamma, rho0).expect("valid starting parameters");
    let c = target.potential(scale, 0.0) - toy_potential_rz(scale, 0.0, &p);
    [(-gamma).ln(), (gamma - alpha).ln(), rho0.ln(), c]
}

/// Fits `(α, γ, ρ₀)` and an offset so that the toy potential matches the
/// target potential on `region` in the least-squares sense.
pub fn fit_toy_params(target: &dyn TargetHamiltonian, region: &FitRegion, lm: &LmConfig) -> Result<PreFit> {
    let points = region.points()?;
    if points.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "pre-fit needs at least 4 sample points, region has {}",
            points.len()
        )));
    }
    let phi = points.iter().map(|&(r, z)| target.potential(r, z)).collect();
    let mut problem = PreFitProblem { points, phi, _target: target };
    let x0 = DVector::from_row_slice(&initial_guess(region, target));
    let report = levenberg_marquardt(&mut problem, x0, lm)?;
    let (params, offset) = unpack(report.x.as_slice());
    let params = ToyParams::new(params.coords.alpha, params.coords.gamma, params.rho0)?;
    Ok(PreFit { params, offset, chi2: report.chi2, iterations: report.iterations, converged: report.converged })
}
