//! Numerical kernels: bracketed root finding, damped Newton, quadrature for
//! square-root endpoint singularities, Levenberg–Marquardt and dense LU.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Brent's method on a sign-changing bracket.
///
/// Converges when `|f| <= tol` or the bracket is narrower than `tol`
/// (relative to the magnitude of the iterate).
pub fn find_root_bracketed<F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.signum() != fb.signum()) || fa.is_nan() || fb.is_nan() {
        return Err(Error::Bracket { a, b });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            // inverse quadratic interpolation or secant
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    Ok(b)
}

/// Expands `[start, start + step·2^k]` until `f` changes sign relative to `f(start)`,
/// staying inside `(lo, hi)`. Returns the bracket.
pub fn expand_bracket<F>(mut f: F, start: f64, step: f64, lo: f64, hi: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    let f0 = f(start);
    let mut prev = start;
    let mut h = step;
    for _ in 0..200 {
        let mut next = start + h;
        if next <= lo {
            next = 0.5 * (prev + lo);
        }
        if next >= hi {
            next = 0.5 * (prev + hi);
        }
        if next == prev {
            break;
        }
        let fn_ = f(next);
        if fn_.signum() != f0.signum() || fn_ == 0.0 {
            return Ok(if next < start { (next, prev) } else { (prev, next) });
        }
        prev = next;
        h *= 2.0;
    }
    Err(Error::Bracket { a: start, b: prev })
}

/// Options for [`newton_nd`].
#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 50 }
    }
}

/// Damped Newton iteration for `F(x) = 0`.
///
/// `f` returns `None` where `F` is undefined; such trial points are treated
/// like residual increases and the step is halved. Every accepted step
/// strictly decreases `‖F‖₂`.
pub fn newton_nd<F, J>(mut f: F, mut jac: J, x0: DVector<f64>, opts: NewtonOptions) -> Result<DVector<f64>>
where
    F: FnMut(&DVector<f64>) -> Option<DVector<f64>>,
    J: FnMut(&DVector<f64>) -> Option<DMatrix<f64>>,
{
    let mut x = x0;
    let mut r = f(&x).ok_or_else(|| Error::Domain("Newton start point outside the domain".into()))?;
    for it in 0..opts.max_iter {
        if r.amax() < opts.tol {
            return Ok(x);
        }
        let jm = jac(&x).ok_or_else(|| Error::Domain("Jacobian undefined".into()))?;
        let step = solve_lu(&jm, &(-&r))?;
        let norm0 = r.norm();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = &x + &step * t;
            if let Some(rt) = f(&trial) {
                if rt.norm() < norm0 {
                    x = trial;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            if r.amax() < opts.tol * 1e3 {
                return Ok(x);
            }
            return Err(Error::NoConvergence { iterations: it, residual: r.amax() });
        }
    }
    if r.amax() < opts.tol {
        Ok(x)
    } else {
        Err(Error::NoConvergence { iterations: opts.max_iter, residual: r.amax() })
    }
}

/// Dense LU factorisation with partial pivoting, reusable for several
/// right-hand sides.
pub struct LuSolver {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl LuSolver {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidParameter(format!("matrix is {}x{}", a.nrows(), a.ncols())));
        }
        let n = a.nrows();
        let lu = a.clone().lu();
        let u = lu.u();
        let scale = a.amax();
        let min_pivot = (0..n).map(|i| u[(i, i)].abs()).fold(f64::INFINITY, f64::min);
        if !(min_pivot > scale * f64::EPSILON * n as f64) {
            return Err(Error::SingularMatrix(format!(
                "smallest pivot {min_pivot:e} relative to scale {scale:e}"
            )));
        }
        Ok(Self { lu })
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.lu
            .solve(b)
            .ok_or_else(|| Error::SingularMatrix("LU solve failed".into()))
    }
}

/// Solves `A x = b` by LU with partial pivoting.
pub fn solve_lu(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != b.len() {
        return Err(Error::InvalidParameter("dimension mismatch".into()));
    }
    LuSolver::new(a)?.solve(b)
}

/// Quadrature family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureKind {
    /// Gauss–Chebyshev: absorbs `1/√((τ−τ₋)(τ₊−τ))` by `τ = c − d cos ψ`.
    Chebyshev,
    /// Gauss–Legendre for smooth integrands.
    GaussLegendre,
}

/// Node/weight rule on the reference interval.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    kind: QuadratureKind,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn new(kind: QuadratureKind, count: usize) -> Result<Self> {
        if count < 4 {
            return Err(Error::InvalidParameter(format!("quadrature needs at least 4 nodes, got {count}")));
        }
        let (nodes, weights) = match kind {
            QuadratureKind::Chebyshev => {
                let w = std::f64::consts::PI / count as f64;
                let nodes = chebyshev_angles(count);
                (nodes, vec![w; count])
            }
            QuadratureKind::GaussLegendre => gauss_legendre(count),
        };
        Ok(Self { kind, nodes, weights })
    }

    pub fn chebyshev(count: usize) -> Result<Self> {
        Self::new(QuadratureKind::Chebyshev, count)
    }

    pub fn kind(&self) -> QuadratureKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫_a^b g(τ) dτ` for smooth `g`.
    pub fn integrate_smooth<F: FnMut(f64) -> f64>(&self, mut g: F, a: f64, b: f64) -> f64 {
        let (c, d) = (0.5 * (a + b), 0.5 * (b - a));
        match self.kind {
            QuadratureKind::GaussLegendre => {
                d * self.nodes.iter().zip(&self.weights).map(|(x, w)| w * g(c + d * x)).sum::<f64>()
            }
            QuadratureKind::Chebyshev => {
                // ∫ g dτ = ∫_0^π g(c − d cos ψ) d sin ψ dψ
                self.nodes
                    .iter()
                    .zip(&self.weights)
                    .map(|(psi, w)| w * g(c - d * psi.cos()) * d * psi.sin())
                    .sum()
            }
        }
    }
}

/// Chebyshev angles `ψ_i = (i + ½)π/N`.
pub fn chebyshev_angles(count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| (i as f64 + 0.5) * std::f64::consts::PI / count as f64)
        .collect()
}

/// Gauss–Legendre nodes and weights on [−1, 1] by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// `∫_{τ₋}^{τ₊} g(τ)/√((τ−τ₋)(τ₊−τ)) dτ` for smooth `g`.
///
/// With `τ = ½(τ₋+τ₊) − ½(τ₊−τ₋) cos ψ` the integral becomes `∫_0^π g dψ`,
/// evaluated by the rule (Gauss–Chebyshev midpoints, or Gauss–Legendre in ψ).
pub fn integrate_sqrt_singular<F>(mut g: F, lo: f64, hi: f64, rule: &QuadratureRule) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if !(lo < hi) {
        return Err(Error::DegenerateInterval(lo, hi));
    }
    let (c, d) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    Ok(match rule.kind {
        QuadratureKind::Chebyshev => rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(psi, w)| w * g(c - d * psi.cos()))
            .sum(),
        QuadratureKind::GaussLegendre => {
            let half = 0.5 * std::f64::consts::PI;
            rule.nodes
                .iter()
                .zip(&rule.weights)
                .map(|(x, w)| half * w * g(c - d * (half * (x + 1.0)).cos()))
                .sum()
        }
    })
}

/// `cos(n ψ_i)` on the Chebyshev angles, shared by every series of a given size.
#[derive(Clone, Debug)]
pub struct DctTable {
    angles: Vec<f64>,
    cos: Vec<f64>,
}

impl DctTable {
    pub fn new(count: usize) -> Result<Self> {
        if count < 4 {
            return Err(Error::InvalidParameter(format!("series needs at least 4 samples, got {count}")));
        }
        let angles = chebyshev_angles(count);
        let mut cos = Vec::with_capacity(count * count);
        for k in 0..count {
            cos.extend(angles.iter().map(|psi| (k as f64 * psi).cos()));
        }
        Ok(Self { angles, cos })
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }
}

/// Cosine series `q(ψ) = a₀ + Σ a_n cos nψ` of an even, 2π-periodic function
/// sampled at the Chebyshev angles, with its running integral.
#[derive(Clone, Debug)]
pub struct CosineSeries<T> {
    coeffs: Vec<T>,
}

impl<T: Real> CosineSeries<T> {
    /// `samples[i] = q(ψ_i)`, `ψ_i = (i + ½)π/N`.
    pub fn from_samples(samples: &[T], angles: &[f64]) -> Self {
        let n = samples.len();
        let inv = T::lit(1.0 / n as f64);
        let mut coeffs = Vec::with_capacity(n);
        coeffs.push(samples.iter().fold(T::zero(), |acc, &s| acc + s) * inv);
        for k in 1..n {
            let mut acc = T::zero();
            for (s, psi) in samples.iter().zip(angles) {
                acc = acc + *s * T::lit((k as f64 * psi).cos());
            }
            coeffs.push(acc * inv * T::lit(2.0));
        }
        Self { coeffs }
    }

    pub fn from_table(samples: &[T], table: &DctTable) -> Self {
        let n = table.len();
        assert_eq!(samples.len(), n);
        let inv = T::lit(1.0 / n as f64);
        let two_inv = T::lit(2.0 / n as f64);
        let coeffs = (0..n)
            .map(|k| {
                let row = &table.cos[k * n..(k + 1) * n];
                let acc = samples
                    .iter()
                    .zip(row)
                    .fold(T::zero(), |acc, (&q, &c)| acc + q * T::lit(c));
                if k == 0 {
                    acc * inv
                } else {
                    acc * two_inv
                }
            })
            .collect();
        Self { coeffs }
    }

    /// Mean value `a₀` (the complete integral over a period divided by 2π).
    pub fn mean(&self) -> T {
        self.coeffs[0]
    }

    pub fn eval(&self, psi: T) -> T {
        let mut acc = self.coeffs[0];
        let c1 = psi.cos();
        let two_c = c1 + c1;
        let (mut c_prev, mut c_cur) = (T::one(), c1);
        for a in &self.coeffs[1..] {
            acc = acc + *a * c_cur;
            let next = two_c * c_cur - c_prev;
            c_prev = c_cur;
            c_cur = next;
        }
        acc
    }

    /// `∫_0^ψ q = a₀ψ + Σ a_n sin(nψ)/n`.
    pub fn integral(&self, psi: T) -> T {
        let mut acc = self.coeffs[0] * psi;
        let s1 = psi.sin();
        let two_c = psi.cos() + psi.cos();
        let (mut s_prev, mut s_cur) = (T::zero(), s1);
        for (k, a) in self.coeffs[1..].iter().enumerate() {
            acc = acc + *a * s_cur / T::lit((k + 1) as f64);
            let next = two_c * s_cur - s_prev;
            s_prev = s_cur;
            s_cur = next;
        }
        acc
    }
}

/// Levenberg–Marquardt configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmConfig {
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
    pub gradient_tol: f64,
    pub step_tol: f64,
    /// Stop when an accepted step lowers χ² by less than this fraction.
    pub chi2_rel_tol: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            initial_damping: 1e-3,
            damping_increase: 10.0,
            damping_decrease: 10.0,
            gradient_tol: 1e-14,
            step_tol: 1e-12,
            chi2_rel_tol: 1e-6,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iterations >= 1
            && self.initial_damping > 0.0
            && self.damping_increase > 1.0
            && self.damping_decrease > 1.0
            && self.gradient_tol > 0.0
            && self.step_tol > 0.0
            && self.chi2_rel_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid LM configuration {self:?}")))
        }
    }
}

/// A residual vector and its Jacobian. `None` marks an infeasible point.
pub trait LeastSquaresProblem {
    fn residuals(&mut self, x: &DVector<f64>) -> Option<DVector<f64>>;
    fn jacobian(&mut self, x: &DVector<f64>) -> Option<DMatrix<f64>>;
}

/// Outcome of [`levenberg_marquardt`].
#[derive(Clone, Debug)]
pub struct LmReport {
    pub x: DVector<f64>,
    pub chi2: f64,
    /// Accepted steps.
    pub iterations: usize,
    pub converged: bool,
    /// χ² after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
    /// Trial steps rejected because they left the feasible region.
    pub infeasible_steps: usize,
}

/// Minimises `‖r(x)‖²` with Marquardt-scaled damping.
///
/// Trial steps that raise χ² or land on an infeasible point are rejected and
/// the damping is increased; χ² is therefore non-increasing over the run.
/// Exhausting `max_iterations` is not an error: the report carries
/// `converged = false` and the best point found.
pub fn levenberg_marquardt<P: LeastSquaresProblem>(
    problem: &mut P,
    x0: DVector<f64>,
    config: &LmConfig,
) -> Result<LmReport> {
    config.validate()?;
    let mut x = x0;
    let mut r = problem
        .residuals(&x)
        .ok_or_else(|| Error::Domain("initial point is infeasible".into()))?;
    if r.len() < x.len() {
        return Err(Error::InvalidParameter(format!(
            "{} residuals for {} parameters",
            r.len(),
            x.len()
        )));
    }
    let mut chi2 = r.norm_squared();
    let mut history = vec![chi2];
    let mut infeasible_steps = 0;
    if chi2 == 0.0 {
        return Ok(LmReport { x, chi2, iterations: 0, converged: true, history, infeasible_steps });
    }
    let mut mu = config.initial_damping;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        let jac = problem
            .jacobian(&x)
            .ok_or_else(|| Error::Domain("Jacobian undefined at accepted point".into()))?;
        let grad = jac.tr_mul(&r);
        if grad.amax() < config.gradient_tol {
            return Ok(LmReport { x, chi2, iterations, converged: true, history, infeasible_steps });
        }
        let jtj = jac.tr_mul(&jac);
        let dmax = jtj.diagonal().amax().max(f64::MIN_POSITIVE);
        let mut accepted = false;
        while mu < 1e20 {
            let mut a = jtj.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += mu * jtj[(i, i)].max(1e-12 * dmax);
            }
            let step = match a.clone().cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => match solve_lu(&a, &(-&grad)) {
                    Ok(s) => s,
                    Err(_) => {
                        mu *= config.damping_increase;
                        continue;
                    }
                },
            };
            let trial = &x + &step;
            match problem.residuals(&trial) {
                Some(rt) if rt.norm_squared() < chi2 => {
                    let chi2_new = rt.norm_squared();
                    let rel = (chi2 - chi2_new) / chi2;
                    let small_step = step.norm() < config.step_tol * (x.norm() + config.step_tol);
                    x = trial;
                    r = rt;
                    chi2 = chi2_new;
                    history.push(chi2);
                    iterations += 1;
                    mu = (mu / config.damping_decrease).max(1e-15);
                    accepted = true;
                    if chi2 == 0.0 || rel < config.chi2_rel_tol || small_step {
                        return Ok(LmReport { x, chi2, iterations, converged: true, history, infeasible_steps });
                    }
                    break;
                }
                Some(_) => mu *= config.damping_increase,
                None => {
                    infeasible_steps += 1;
                    mu *= config.damping_increase;
                }
            }
        }
        if !accepted {
            // no downhill step at any damping: stationary to working precision
            return Ok(LmReport { x, chi2, iterations, converged: true, history, infeasible_steps });
        }
    }
    Ok(LmReport { x, chi2, iterations, converged: false, history, infeasible_steps })
}
