//! The perfect-oblate-spheroid Stäckel toy Hamiltonian: potential, integrals,
//! separated momenta, turning points, actions, angles, the inverse map from
//! angle-action variables back to phase space, and its Jacobians.
//!
//! The separated motion is parametrised by phase variables in which both the
//! λ and the vertical oscillation are smooth:
//!
//! * `λ = c − d cos ψ_λ` with `c, d` the midpoint and half-width of `[λ₋, λ₊]`;
//! * `s = s₊ sin ψ_s` with `s = sign(z)·√(ν+γ)`.
//!
//! With these substitutions every action integral and every derivative of the
//! generating function is an integral over ψ of a smooth, even, 2π-periodic
//! function. Complete integrals are means over Chebyshev angles; incomplete
//! ones come from the cosine series of the same samples.

use nalgebra::{Matrix6, Matrix6x3};

use crate::coords::{
    meridional_of, meridional_to_rz, momenta_from_meridional, momenta_to_meridional, CoordParams,
    Meridional, PhasePoint,
};
use crate::error::{Error, Result};
use crate::numerics::{expand_bracket, find_root_bracketed, newton_nd, CosineSeries, DctTable, NewtonOptions};
use crate::scalar::{Dual, Real};
use nalgebra::{DMatrix, DVector};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Toy potential parameters (`G = 1`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyParams<T> {
    pub coords: CoordParams<T>,
    pub rho0: T,
}

impl<T: Real> ToyParams<T> {
    pub fn new(alpha: T, gamma: T, rho0: T) -> Result<Self> {
        let coords = CoordParams::new(alpha, gamma)?;
        if !(rho0 > T::zero()) {
            return Err(Error::InvalidParameter(format!("rho0 must be positive, got {}", rho0.re())));
        }
        Ok(Self { coords, rho0 })
    }

    pub fn cast<U: Real>(&self) -> ToyParams<U> {
        ToyParams { coords: self.coords.cast(), rho0: U::lit(self.rho0.re()) }
    }

    /// `C = −2πρ₀α`, so that `f(τ) = C (τ+γ) g((τ+γ)/(−γ))`.
    pub fn strength(&self) -> T {
        -T::lit(TWO_PI) * self.rho0 * self.coords.alpha
    }

    fn scale(&self) -> T {
        -self.coords.gamma
    }
}

/// Integrals of motion `(E, L_z, I₃)`. `I₂ = L_z²/2` is kept through the
/// signed `L_z` so the sense of rotation survives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integrals<T> {
    pub e: T,
    pub lz: T,
    pub i3: T,
}

impl<T: Real> Integrals<T> {
    pub fn new(e: T, lz: T, i3: T) -> Self {
        Self { e, lz, i3 }
    }

    pub fn i2(&self) -> T {
        T::lit(0.5) * self.lz * self.lz
    }

    pub fn values(&self) -> Integrals<f64> {
        Integrals::new(self.e.re(), self.lz.re(), self.i3.re())
    }
}

/// Angle-action pair of the toy Hamiltonian, ordered `(λ, φ, ν)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyAA {
    pub theta: [f64; 3],
    pub actions: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Lambda,
    Nu,
}

/// `g(x) = arctan(√x)/√x`, analytic through `x = 0`.
pub fn g_aux<T: Real>(x: T) -> T {
    if x.re().abs() < 0.05 {
        let mut acc = T::zero();
        let mut pow = T::one();
        for n in 0..18 {
            acc = acc + pow / T::lit((2 * n + 1) as f64);
            pow = -pow * x;
        }
        acc
    } else {
        let r = x.sqrt();
        r.atan() / r
    }
}

/// `g'(x) = [1/(1+x) − g(x)]/(2x)`.
pub fn g_aux_prime<T: Real>(x: T) -> T {
    if x.re().abs() < 0.05 {
        let mut acc = T::zero();
        let mut pow = T::one();
        for n in 1..18 {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            acc = acc + pow * T::lit(sign * n as f64 / (2 * n + 1) as f64);
            pow = pow * x;
        }
        acc
    } else {
        (T::one() / (T::one() + x) - g_aux(x)) / (x + x)
    }
}

/// Divided difference `(g(x) − g(y))/(x − y)` given `diff = x − y`,
/// free of cancellation as `x → y`.
pub fn g_aux_divided<T: Real>(x: T, y: T, diff: T) -> T {
    let small = T::lit(0.05);
    if x.abs() < small && y.abs() < small {
        // Σ c_n (xⁿ − yⁿ)/(x − y) with h_n = Σ_{k<n} x^k y^{n−1−k}
        let (mut acc, mut h, mut y_pow) = (T::zero(), T::one(), y);
        for n in 1..18 {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            acc = acc + h * T::lit(sign / (2 * n + 1) as f64);
            h = x * h + y_pow;
            y_pow = y_pow * y;
        }
        return acc;
    }
    if diff.abs() > T::lit(0.5) * x.abs().max(y.abs()) {
        return (g_aux(x) - g_aux(y)) / diff;
    }
    // atan a − atan b = atan u, u = (a − b)/(1 + ab), a = √x, b = √y
    let (a, b) = (x.sqrt(), y.sqrt());
    let ab1 = T::one() + a * b;
    let u = diff / ((a + b) * ab1);
    (b * g_aux(u * u) / ab1 - b.atan()) / (a * b * (a + b))
}

/// `f(τ) = C (τ+γ) g((τ+γ)/(−γ))` as a function of `t = τ + γ`.
fn f_of_shift<T: Real>(t: T, p: &ToyParams<T>) -> T {
    p.strength() * t * g_aux(t / p.scale())
}

fn f_prime_of_shift<T: Real>(t: T, p: &ToyParams<T>) -> T {
    let x = t / p.scale();
    p.strength() * (g_aux(x) + x * g_aux_prime(x))
}

/// `Ψ` in terms of `λ` and `σ = ν + γ`.
fn potential_sigma<T: Real>(lambda: T, sigma: T, p: &ToyParams<T>) -> T {
    let tl = lambda + p.coords.gamma;
    let gap = tl - sigma;
    if gap.re().abs() < 1e-8 * p.coords.gamma.re().abs() {
        -f_prime_of_shift(tl, p)
    } else {
        -(f_of_shift(tl, p) - f_of_shift(sigma, p)) / gap
    }
}

/// `Ψ(λ, ν) = −(f(λ) − f(ν))/(λ − ν)`.
pub fn toy_potential<T: Real>(lambda: T, nu: T, p: &ToyParams<T>) -> Result<T> {
    let CoordParams { alpha, gamma } = p.coords;
    let ok = lambda >= -alpha && nu >= -gamma && nu <= -alpha && lambda >= nu;
    if !ok {
        return Err(Error::Domain(format!(
            "(lambda, nu) = ({}, {}) outside [-alpha, inf) x [-gamma, -alpha]",
            lambda.re(),
            nu.re()
        )));
    }
    Ok(potential_sigma(lambda, nu + gamma, p))
}

/// `Ψ` at a meridional position.
pub fn toy_potential_rz<T: Real>(r: T, z: T, p: &ToyParams<T>) -> T {
    let m = meridional_of(r, z, &p.coords);
    potential_sigma(m.lambda, m.s * m.s, p)
}

pub fn toy_hamiltonian<T: Real>(u: &PhasePoint<T>, p: &ToyParams<T>) -> T {
    u.kinetic() + toy_potential_rz(u.r, u.z, p)
}

/// `(λ, s, p_λ, p_s)` at a phase point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeridionalState<T> {
    pub lambda: T,
    pub s: T,
    pub p_lambda: T,
    pub p_s: T,
}

impl<T: Real> MeridionalState<T> {
    pub fn of(u: &PhasePoint<T>, coords: &CoordParams<T>) -> Self {
        let m = meridional_of(u.r, u.z, coords);
        let (p_lambda, p_s) = momenta_to_meridional(u.r, u.z, u.p_r, u.p_z, &m, coords);
        Self { lambda: m.lambda, s: m.s, p_lambda, p_s }
    }
}

/// `K(σ) = E − I₂/(σ−Δ²) + C g(σ/(−γ))`.
fn k_sigma<T: Real>(sigma: T, i: &Integrals<T>, p: &ToyParams<T>) -> T {
    let d2 = p.coords.focal_sq();
    i.e - i.i2() / (sigma - d2) + p.strength() * g_aux(sigma / p.scale())
}

fn k_sigma_prime<T: Real>(sigma: T, i: &Integrals<T>, p: &ToyParams<T>) -> T {
    let d2 = p.coords.focal_sq();
    let dd = sigma - d2;
    i.i2() / (dd * dd) + p.strength() * g_aux_prime(sigma / p.scale()) / p.scale()
}

/// `B(τ) = E − I₂/(τ+α) + C g((τ+γ)/(−γ)) − I₃/(τ+γ)`; `p_τ² = B/(2(τ+α))`.
fn b_tau<T: Real>(tau: T, i: &Integrals<T>, p: &ToyParams<T>) -> T {
    let CoordParams { alpha, gamma } = p.coords;
    i.e - i.i2() / (tau + alpha) + p.strength() * g_aux((tau + gamma) / p.scale()) - i.i3 / (tau + gamma)
}

/// `(B(τ) − B(τ₀))/(τ − τ₀)` given `diff = τ − τ₀`.
fn b_tau_divided<T: Real>(tau: T, tau0: T, diff: T, i: &Integrals<T>, p: &ToyParams<T>) -> T {
    let CoordParams { alpha, gamma } = p.coords;
    let a = p.scale();
    i.i2() / ((tau + alpha) * (tau0 + alpha))
        + p.strength() * g_aux_divided((tau + gamma) / a, (tau0 + gamma) / a, diff / a) / a
        + i.i3 / ((tau + gamma) * (tau0 + gamma))
}

/// `(K(σ₀) − K(σ))/(σ₀ − σ)` given `gap = σ₀ − σ`.
fn k_sigma_divided<T: Real>(sigma0: T, sigma: T, gap: T, i: &Integrals<T>, p: &ToyParams<T>) -> T {
    let d2 = p.coords.focal_sq();
    let a = p.scale();
    i.i2() / ((sigma0 - d2) * (sigma - d2)) + p.strength() * g_aux_divided(sigma0 / a, sigma / a, gap / a) / a
}

fn b_tau_prime<T: Real>(tau: T, i: &Integrals<T>, p: &ToyParams<T>) -> T {
    let CoordParams { alpha, gamma } = p.coords;
    let ta = tau + alpha;
    let tg = tau + gamma;
    i.i2() / (ta * ta) + p.strength() * g_aux_prime(tg / p.scale()) / p.scale() + i.i3 / (tg * tg)
}

/// Integrals `(E, L_z, I₃)` through a phase point.
///
/// `I₃ = σK(σ) + (Δ²−σ)p_s²/2` with `σ = ν+γ`; it is non-negative and
/// vanishes exactly for orbits confined to the equatorial plane.
pub fn integrals_from_phase<T: Real>(u: &PhasePoint<T>, p: &ToyParams<T>) -> Integrals<T> {
    let st = MeridionalState::of(u, &p.coords);
    let e = toy_hamiltonian(u, p);
    let partial = Integrals::new(e, u.p_varphi, T::zero());
    let sigma = st.s * st.s;
    let d2 = p.coords.focal_sq();
    let i3 = sigma * k_sigma(sigma, &partial, p) + (d2 - sigma) * st.p_s * st.p_s * T::lit(0.5);
    Integrals::new(e, u.p_varphi, i3)
}

/// Squared separated momentum `p_τ²(τ; I)`; negative in forbidden regions.
pub fn p_tau_squared<T: Real>(tau: T, branch: Branch, i: &Integrals<T>, p: &ToyParams<T>) -> T {
    match branch {
        Branch::Lambda => b_tau(tau, i, p) / (T::lit(2.0) * (tau + p.coords.alpha)),
        Branch::Nu => {
            let sigma = tau + p.coords.gamma;
            let d2 = p.coords.focal_sq();
            (sigma * k_sigma(sigma, i, p) - i.i3) / (T::lit(2.0) * sigma * (sigma - d2))
        }
    }
}

/// Turning points `λ₋ < λ₊` and `σ₊ = ν₊ + γ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TurningPoints<T> {
    pub lambda_minus: T,
    pub lambda_plus: T,
    pub sigma_plus: T,
}

impl<T: Real> TurningPoints<T> {
    pub fn nu_plus(&self, p: &ToyParams<T>) -> T {
        self.sigma_plus - p.coords.gamma
    }
}

fn turning_points_f64(i: &Integrals<f64>, p: &ToyParams<f64>) -> Result<(f64, f64, f64)> {
    let no_orbit = || Error::NoBoundOrbit(format!("E = {}, Lz = {}, I3 = {}", i.e, i.lz, i.i3));
    if !(i.e < 0.0) || !(i.lz != 0.0) || !(i.i3 >= 0.0) || !i.e.is_finite() || !i.i3.is_finite() {
        return Err(no_orbit());
    }
    let alpha = p.coords.alpha;
    let scale = -alpha;
    let lo = -alpha;
    let t0 = lo + 1e-12 * scale;
    let (a, b) = expand_bracket(|t| b_tau_prime(t, i, p), t0, 1e-6 * scale, lo, f64::INFINITY)
        .map_err(|_| no_orbit())?;
    let tau_star = find_root_bracketed(|t| b_tau_prime(t, i, p), a, b, 1e-15 * b.abs())?;
    if !(b_tau(tau_star, i, p) > 0.0) {
        return Err(no_orbit());
    }
    let width = 1e-3 * (tau_star - lo);
    let bf = |t: f64| b_tau(t, i, p);
    let (a, b) = expand_bracket(bf, tau_star, -width, lo, f64::INFINITY).map_err(|_| no_orbit())?;
    let lm = find_root_bracketed(bf, a, b, 4.0 * f64::EPSILON * b.abs())?;
    let (a, b) = expand_bracket(bf, tau_star, width, lo, f64::INFINITY).map_err(|_| no_orbit())?;
    let lp = find_root_bracketed(bf, a, b, 4.0 * f64::EPSILON * b.abs())?;
    let sp = if i.i3 == 0.0 {
        0.0
    } else {
        let d2 = p.coords.focal_sq();
        let h = |s: f64| s * k_sigma(s, i, p) - i.i3;
        let (a, b) = expand_bracket(h, 0.0, 1e-6 * d2, f64::NEG_INFINITY, d2).map_err(|_| no_orbit())?;
        find_root_bracketed(h, a, b, 4.0 * f64::EPSILON * b.abs())?
    };
    if !(lp > lm) {
        return Err(no_orbit());
    }
    Ok((lm, lp, sp))
}

/// Turning points of the orbit with integrals `i`.
///
/// Roots are bracketed in `f64`; one Newton step in `T` then carries the
/// exact implicit derivatives when `T` is a dual number.
pub fn turning_points<T: Real>(i: &Integrals<T>, p: &ToyParams<T>) -> Result<TurningPoints<T>> {
    let (lm, lp, sp) = turning_points_f64(&i.values(), &p.cast())?;
    let polish = |t0: f64| {
        let t = T::lit(t0);
        t - b_tau(t, i, p) / b_tau_prime(t, i, p)
    };
    let s = T::lit(sp);
    let h = s * k_sigma(s, i, p) - i.i3;
    let hp = k_sigma(s, i, p) + s * k_sigma_prime(s, i, p);
    Ok(TurningPoints { lambda_minus: polish(lm), lambda_plus: polish(lp), sigma_plus: s - h / hp })
}

/// Inverse of a 3×3 matrix by cofactors.
pub(crate) fn inverse3<T: Real>(m: &[[T; 3]; 3]) -> Result<[[T; 3]; 3]> {
    let c = |r: usize, k: usize| {
        let (r1, r2) = ((r + 1) % 3, (r + 2) % 3);
        let (k1, k2) = ((k + 1) % 3, (k + 2) % 3);
        m[r1][k1] * m[r2][k2] - m[r1][k2] * m[r2][k1]
    };
    let det = m[0][0] * c(0, 0) + m[0][1] * c(0, 1) + m[0][2] * c(0, 2);
    let norm = m.iter().flatten().fold(0.0f64, |acc, x| acc.max(x.re().abs()));
    if !(det.re().abs() > 1e-13 * norm * norm * norm) {
        return Err(Error::SingularMatrix(format!("3x3 determinant {:e}", det.re())));
    }
    let mut inv = [[T::zero(); 3]; 3];
    for (r, row) in inv.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = c(k, r) / det;
        }
    }
    Ok(inv)
}

fn wrap_2pi<T: Real>(x: T) -> T {
    let k = (x.re() / TWO_PI).floor();
    let y = x - T::lit(k * TWO_PI);
    if y.re() >= TWO_PI {
        y - T::lit(TWO_PI)
    } else {
        y
    }
}

/// Everything about one toy torus that depends only on its integrals.
#[derive(Clone, Debug)]
pub struct ToyTorus<T> {
    params: ToyParams<T>,
    integrals: Integrals<T>,
    turning: TurningPoints<T>,
    mid: T,
    half: T,
    s_plus: T,
    actions: [T; 3],
    djdi: [[T; 3]; 3],
    /// Stretch of the `λ` quadrature variable, see [`AngleSeries`].
    kappa: f64,
    q_lambda: [Vec<T>; 3],
    q_s: [Vec<T>; 3],
}

/// Cosine series of the six integrands `q_τj(ψ)`.
///
/// The `λ` series are sampled in `t` with `tan(ψ/2) = κ tan(t/2)`. For orbits
/// whose inner turning point nears the focus, `q_λ` has a pole close to
/// `ψ = 0`; `κ < 1` spreads the nodes there and keeps the series spectral.
#[derive(Clone, Debug)]
pub struct AngleSeries<T> {
    lambda: [CosineSeries<T>; 3],
    s: [CosineSeries<T>; 3],
    kappa: f64,
}

impl<T: Real> AngleSeries<T> {
    /// `t(ψ)`, continued so that `t(ψ + 2π) = t(ψ) + 2π`.
    fn stretch(&self, psi: T) -> T {
        if self.kappa == 1.0 {
            return psi;
        }
        let turns = (psi.re() / TWO_PI).floor() * TWO_PI;
        let half = T::lit(0.5) * (psi - T::lit(turns));
        T::lit(2.0) * half.sin().atan2(T::lit(self.kappa) * half.cos()) + T::lit(turns)
    }

    fn stretch_rate(&self, psi: T) -> T {
        let k = T::lit(self.kappa);
        let (sn, cs) = (T::lit(0.5) * psi).sin_cos();
        k / (k * k * cs * cs + sn * sn)
    }

    /// `∫_0^ψ q_λj`.
    pub fn lambda_integral(&self, j: usize, psi: T) -> T {
        self.lambda[j].integral(self.stretch(psi))
    }

    /// `q_λj(ψ)`.
    pub fn lambda_rate(&self, j: usize, psi: T) -> T {
        self.lambda[j].eval(self.stretch(psi)) * self.stretch_rate(psi)
    }

    /// `∫_0^ψ q_sj`.
    pub fn s_integral(&self, j: usize, psi: T) -> T {
        self.s[j].integral(psi)
    }

    /// `q_sj(ψ)`.
    pub fn s_rate(&self, j: usize, psi: T) -> T {
        self.s[j].eval(psi)
    }
}

/// `κ` balancing the pole of `q_λ` at `ψ = iε` against the singularity of
/// the stretch itself at `t = π ± 2i artanh κ`.
fn lambda_stretch(turning_lm: f64, half: f64, alpha: f64) -> f64 {
    let r = (turning_lm + alpha) / half;
    let eps = (1.0 + r).acosh();
    (0.5 * eps).sqrt().min(1.0)
}

impl<T: Real> ToyTorus<T> {
    pub fn new(integrals: Integrals<T>, params: &ToyParams<T>, table: &DctTable) -> Result<Self> {
        let p = *params;
        let turning = turning_points(&integrals, &p)?;
        let mid = T::lit(0.5) * (turning.lambda_minus + turning.lambda_plus);
        let half = T::lit(0.5) * (turning.lambda_plus - turning.lambda_minus);
        let s_plus = turning.sigma_plus.max(T::zero()).sqrt();
        let kappa = lambda_stretch(turning.lambda_minus.re(), half.re(), p.coords.alpha.re());
        let mut torus = Self {
            params: p,
            integrals,
            turning,
            mid,
            half,
            s_plus,
            kappa,
            actions: [T::zero(); 3],
            djdi: [[T::zero(); 3]; 3],
            q_lambda: Default::default(),
            q_s: Default::default(),
        };
        let n = table.len();
        let inv_n = T::lit(1.0 / n as f64);
        let two = T::lit(2.0);
        let CoordParams { alpha, gamma } = p.coords;
        let d2 = p.coords.focal_sq();
        let sp = turning.sigma_plus;
        let (mut j_l, mut j_s) = (T::zero(), T::zero());
        for k in 0..3 {
            torus.q_lambda[k].reserve(n);
            torus.q_s[k].reserve(n);
        }
        for &psi in table.angles() {
            // λ samples at ψ(t) with t = psi, weighted by dψ/dt
            let (sh, ch) = (0.5 * psi).sin_cos();
            let den = ch * ch + kappa * kappa * sh * sh;
            let om = 2.0 * kappa * kappa * sh * sh / den;
            let op = 2.0 * ch * ch / den;
            let sl = 2.0 * kappa * sh * ch / den;
            let rate = T::lit(kappa / den);
            let tau = mid - half * T::lit((ch * ch - kappa * kappa * sh * sh) / den);
            let qt = torus.q_tilde(tau, half * T::lit(om), half * T::lit(op));
            let sq = qt.sqrt();
            if !(qt.re() > 0.0) {
                return Err(Error::NoBoundOrbit(format!("lambda interval not simple at psi = {psi}")));
            }
            j_l = j_l + half * half * T::lit(sl * sl) * sq * rate;
            let ta = tau + alpha;
            let w = rate / (two * two * ta * sq);

            let (sn, cs) = psi.sin_cos();
            torus.q_lambda[0].push(w);
            torus.q_lambda[1].push(-w / ta);
            torus.q_lambda[2].push(-w / (tau + gamma));

            let sigma = sp * T::lit(sn * sn);
            let pt = torus.p_tilde(sigma, sp * T::lit(cs * cs));
            if !(pt.re() > 0.0) {
                return Err(Error::NoBoundOrbit(format!("vertical interval not simple at psi = {psi}")));
            }
            let sq = pt.sqrt();
            j_s = j_s + sp * T::lit(cs * cs) * sq;
            let dd = sigma - d2;
            let w = T::one() / (dd * sq);
            torus.q_s[0].push(sigma * w);
            torus.q_s[1].push(-sigma * w / dd);
            torus.q_s[2].push(-w);
        }
        let mean = |v: &[T]| v.iter().fold(T::zero(), |a, &b| a + b) * inv_n;
        torus.actions = [j_l * inv_n, integrals.lz, j_s * inv_n];
        torus.djdi = [
            [mean(&torus.q_lambda[0]), mean(&torus.q_lambda[1]), mean(&torus.q_lambda[2])],
            [T::zero(), T::one() / integrals.lz, T::zero()],
            [mean(&torus.q_s[0]), mean(&torus.q_s[1]), mean(&torus.q_s[2])],
        ];
        Ok(torus)
    }

    /// `p_λ²/((τ−λ₋)(λ₊−τ))` given the two endpoint distances.
    fn q_tilde(&self, tau: T, dm: T, dp: T) -> T {
        let i = &self.integrals;
        let p = &self.params;
        let reduced = if dm.re() <= dp.re() {
            b_tau_divided(tau, self.turning.lambda_minus, dm, i, p) / dp
        } else {
            -b_tau_divided(tau, self.turning.lambda_plus, -dp, i, p) / dm
        };
        reduced / (T::lit(2.0) * (tau + p.coords.alpha))
    }

    /// `p_s²/(σ₊−σ)` given `σ` and the distance `σ₊−σ`.
    fn p_tilde(&self, sigma: T, gap: T) -> T {
        let i = &self.integrals;
        let p = &self.params;
        let sp = self.turning.sigma_plus;
        let dd = k_sigma_divided(sp, sigma, gap, i, p);
        -T::lit(2.0) * (k_sigma(sigma, i, p) + sp * dd) / (sigma - p.coords.focal_sq())
    }

    pub fn integrals(&self) -> &Integrals<T> {
        &self.integrals
    }

    pub fn turning_points(&self) -> &TurningPoints<T> {
        &self.turning
    }

    /// `(𝒥_λ, 𝒥_φ, 𝒥_ν)`.
    pub fn actions(&self) -> [T; 3] {
        self.actions
    }

    /// `∂𝒥/∂(E, I₂, I₃)`; rows `(λ, φ, ν)`.
    pub fn djdi(&self) -> [[T; 3]; 3] {
        self.djdi
    }

    /// Toy frequencies `Ω = ∂E/∂𝒥`, the E row of `(∂𝒥/∂I)⁻¹`.
    pub fn frequencies(&self) -> Result<[T; 3]> {
        Ok(inverse3(&self.djdi)?[0])
    }

    pub fn series(&self, table: &DctTable) -> AngleSeries<T> {
        let mk = |v: &Vec<T>| CosineSeries::from_table(v, table);
        AngleSeries {
            lambda: [mk(&self.q_lambda[0]), mk(&self.q_lambda[1]), mk(&self.q_lambda[2])],
            s: [mk(&self.q_s[0]), mk(&self.q_s[1]), mk(&self.q_s[2])],
            kappa: self.kappa,
        }
    }

    /// Phase angles `(ψ_λ, ψ_s)` in `[0, 2π)` of a point on this torus.
    pub fn phases(&self, st: &MeridionalState<T>) -> (T, T) {
        let dm = st.lambda - self.turning.lambda_minus;
        let dp = self.turning.lambda_plus - st.lambda;
        let qt = self.q_tilde(st.lambda, dm, dp).max(T::lit(f64::MIN_POSITIVE));
        let psi_l = (st.p_lambda / qt.sqrt()).atan2(self.mid - st.lambda);
        let psi_s = if self.s_plus.re() == 0.0 {
            T::zero()
        } else {
            let sigma = st.s * st.s;
            let pt = self.p_tilde(sigma, self.turning.sigma_plus - sigma).max(T::lit(f64::MIN_POSITIVE));
            st.s.atan2(st.p_s / pt.sqrt())
        };
        (wrap_2pi(psi_l), wrap_2pi(psi_s))
    }

    /// `∂W/∂(E, I₂, I₃)` at the given phases and azimuth.
    pub fn generating_derivatives(&self, series: &AngleSeries<T>, psi_l: T, psi_s: T, phi: T) -> [T; 3] {
        let mut w = [T::zero(); 3];
        for (j, wj) in w.iter_mut().enumerate() {
            *wj = series.lambda_integral(j, psi_l) + series.s_integral(j, psi_s);
        }
        w[1] = w[1] + phi / self.integrals.lz;
        w
    }

    /// Toy angles from the generating-function derivatives: `ϑ = (∂𝒥/∂I)^{-T} w`.
    pub fn angles_from_w(&self, w: &[T; 3]) -> Result<[T; 3]> {
        let inv = inverse3(&self.djdi)?;
        let mut theta = [T::zero(); 3];
        for (i, t) in theta.iter_mut().enumerate() {
            *t = wrap_2pi(inv[0][i] * w[0] + inv[1][i] * w[1] + inv[2][i] * w[2]);
        }
        Ok(theta)
    }

    /// Meridional state at phases `(ψ_λ, ψ_s)`.
    pub fn state_at(&self, psi_l: T, psi_s: T) -> MeridionalState<T> {
        let (sl, cl) = psi_l.sin_cos();
        let (ss, cs) = psi_s.sin_cos();
        let half = T::lit(0.5);
        let lambda = self.mid - self.half * cl;
        let dm = self.half * T::lit(2.0) * (half * psi_l).sin().powi(2);
        let dp = self.half * T::lit(2.0) * (half * psi_l).cos().powi(2);
        let p_lambda = self.half * sl * self.q_tilde(lambda, dm, dp).sqrt();
        let s = self.s_plus * ss;
        let sigma = s * s;
        let p_s = self.s_plus * cs * self.p_tilde(sigma, self.turning.sigma_plus * cs * cs).sqrt();
        MeridionalState { lambda, s, p_lambda, p_s }
    }
}

/// Configured toy Hamiltonian: parameters plus the quadrature size used for
/// actions and angles.
#[derive(Clone, Debug)]
pub struct StaeckelToy {
    params: ToyParams<f64>,
    table: DctTable,
}

/// Default number of Chebyshev angles per separated coordinate.
pub const DEFAULT_NODES: usize = 64;

/// `∂(ϑ, 𝒥)/∂u` and the block `∂u/∂𝒥` of its inverse.
#[derive(Clone, Debug)]
pub struct ToyJacobian {
    /// Rows `(ϑ_λ, ϑ_φ, ϑ_ν, 𝒥_λ, 𝒥_φ, 𝒥_ν)`, columns `(R, φ, z, p_R, p_φ, p_z)`.
    pub matrix: Matrix6<f64>,
    pub du_dj: Matrix6x3<f64>,
    /// Ratio of largest to smallest singular value of `matrix`.
    pub condition: f64,
}

impl ToyJacobian {
    /// Large condition numbers flag points where `∂u/∂𝒥` is unreliable.
    pub fn is_ill_conditioned(&self) -> bool {
        self.condition > 1e10
    }
}

impl StaeckelToy {
    pub fn new(params: ToyParams<f64>, nodes: usize) -> Result<Self> {
        Ok(Self { params, table: DctTable::new(nodes)? })
    }

    pub fn with_defaults(params: ToyParams<f64>) -> Self {
        Self::new(params, DEFAULT_NODES).expect("default node count is valid")
    }

    pub fn params(&self) -> &ToyParams<f64> {
        &self.params
    }

    pub fn nodes(&self) -> usize {
        self.table.len()
    }

    pub fn torus<T: Real>(&self, integrals: Integrals<T>) -> Result<ToyTorus<T>> {
        ToyTorus::new(integrals, &self.params.cast(), &self.table)
    }

    pub fn actions(&self, integrals: &Integrals<f64>) -> Result<[f64; 3]> {
        Ok(self.torus(*integrals)?.actions())
    }

    /// `(Ω, ∂𝒥/∂I)`.
    pub fn frequencies_and_djdi(&self, integrals: &Integrals<f64>) -> Result<([f64; 3], [[f64; 3]; 3])> {
        let t = self.torus(*integrals)?;
        Ok((t.frequencies()?, t.djdi()))
    }

    /// `(ϑ, 𝒥)` at a phase point; generic so that dual numbers give Jacobians.
    pub fn angles_actions<T: Real>(&self, u: &PhasePoint<T>) -> Result<([T; 3], [T; 3])> {
        if !(u.r > T::zero()) {
            return Err(Error::Domain(format!("R = {} must be positive", u.r.re())));
        }
        let p = self.params.cast::<T>();
        let integrals = integrals_from_phase(u, &p);
        let torus = ToyTorus::new(integrals, &p, &self.table)?;
        let st = MeridionalState::of(u, &p.coords);
        let (psi_l, psi_s) = torus.phases(&st);
        let series = torus.series(&self.table);
        let w = torus.generating_derivatives(&series, psi_l, psi_s, u.varphi);
        Ok((torus.angles_from_w(&w)?, torus.actions()))
    }

    pub fn angles(&self, u: &PhasePoint<f64>) -> Result<[f64; 3]> {
        Ok(self.angles_actions(u)?.0)
    }

    /// Epicyclic estimate of `(E, I₃)` for the given actions.
    fn epicycle_guess(&self, actions: &[f64; 3]) -> Result<Integrals<f64>> {
        let p = &self.params;
        let lz = actions[1];
        let d2 = p.coords.focal_sq();
        let a = p.scale();
        let c = p.strength();
        let dphi = |r: f64| -2.0 * c * r * g_aux_prime((r * r + d2) / a) / a - lz * lz / (r * r * r);
        let r0 = 1e-3 * d2.sqrt();
        let (lo, hi) = expand_bracket(dphi, r0, r0, 0.0, f64::INFINITY)?;
        let rc = find_root_bracketed(dphi, lo, hi, 1e-14 * hi)?;
        let phi_eff = |r: f64| toy_potential_rz(r, 0.0, p) + 0.5 * lz * lz / (r * r);
        let e_c = phi_eff(rc);
        let h = 1e-4 * rc;
        let kappa = ((phi_eff(rc + h) - 2.0 * e_c + phi_eff(rc - h)) / (h * h)).max(0.0).sqrt();
        let psi0 = toy_potential_rz(rc, 0.0, p);
        let nu_z = (2.0 * (toy_potential_rz(rc, h, p) - psi0) / (h * h)).max(0.0).sqrt();
        let e = e_c + kappa * actions[0] + nu_z * actions[2];
        let i3 = (rc * rc + d2) * nu_z * actions[2];
        Ok(Integrals::new(e.min(-1e-3 * e_c.abs()), lz, i3))
    }

    /// Integrals whose torus carries the given actions (Newton on `∂𝒥/∂I`).
    pub fn integrals_for_actions(&self, actions: &[f64; 3], guess: Option<Integrals<f64>>) -> Result<Integrals<f64>> {
        if !(actions[0] > 0.0) || !(actions[2] >= 0.0) || actions[1] == 0.0 || actions.iter().any(|a| !a.is_finite()) {
            return Err(Error::Domain(format!("actions {actions:?} outside the mappable range")));
        }
        let lz = actions[1];
        let planar = actions[2] == 0.0;
        let mut starts = Vec::new();
        if let Some(g) = guess {
            starts.push(Integrals::new(g.e, lz, if planar { 0.0 } else { g.i3 }));
        }
        starts.push(self.epicycle_guess(actions)?);
        let scale = actions[0].abs().max(actions[2].abs()).max(1e-3);
        let opts = NewtonOptions { tol: 1e-13 * scale, max_iter: 60 };
        let mut last_err = None;
        for start in starts {
            // shrink the vertical guess until the starting torus exists
            let mut x0 = start;
            let mut feasible = false;
            for _ in 0..40 {
                if self.torus(x0).is_ok() {
                    feasible = true;
                    break;
                }
                x0.i3 *= 0.5;
            }
            if !feasible {
                continue;
            }
            let eval = |x: &DVector<f64>| -> Option<ToyTorus<f64>> {
                let i3 = if planar { 0.0 } else { x[1] };
                self.torus(Integrals::new(x[0], lz, i3)).ok()
            };
            let f = |x: &DVector<f64>| {
                eval(x).map(|t| {
                    let j = t.actions();
                    if planar {
                        DVector::from_vec(vec![j[0] - actions[0]])
                    } else {
                        DVector::from_vec(vec![j[0] - actions[0], j[2] - actions[2]])
                    }
                })
            };
            let jac = |x: &DVector<f64>| {
                eval(x).map(|t| {
                    let m = t.djdi();
                    if planar {
                        DMatrix::from_element(1, 1, m[0][0])
                    } else {
                        DMatrix::from_row_slice(2, 2, &[m[0][0], m[0][2], m[2][0], m[2][2]])
                    }
                })
            };
            let x0v = if planar { DVector::from_vec(vec![x0.e]) } else { DVector::from_vec(vec![x0.e, x0.i3]) };
            match newton_nd(f, jac, x0v, opts) {
                Ok(x) => return Ok(Integrals::new(x[0], lz, if planar { 0.0 } else { x[1] })),
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err.unwrap_or_else(|| Error::NoBoundOrbit(format!("no torus with actions {actions:?}"))))
    }

    /// Phase-space point with toy angles `theta` and actions `actions`.
    pub fn forward(&self, theta: &[f64; 3], actions: &[f64; 3]) -> Result<PhasePoint<f64>> {
        Ok(self.forward_with_guess(theta, actions, None)?.0)
    }

    /// As [`forward`](Self::forward), optionally warm-started from nearby
    /// integrals; also returns the integrals found.
    pub fn forward_with_guess(
        &self,
        theta: &[f64; 3],
        actions: &[f64; 3],
        guess: Option<Integrals<f64>>,
    ) -> Result<(PhasePoint<f64>, Integrals<f64>)> {
        let integrals = self.integrals_for_actions(actions, guess)?;
        let torus = self.torus(integrals)?;
        let series = torus.series(&self.table);
        let m = torus.djdi();
        // w* = Mᵀ ϑ
        let mut w_target = [0.0; 3];
        for (j, w) in w_target.iter_mut().enumerate() {
            *w = (0..3).map(|i| m[i][j] * theta[i]).sum();
        }
        let f = |x: &DVector<f64>| {
            let w = torus.generating_derivatives(&series, x[0], x[1], 0.0);
            Some(DVector::from_vec(vec![w[0] - w_target[0], w[2] - w_target[2]]))
        };
        let jac = |x: &DVector<f64>| {
            Some(DMatrix::from_row_slice(
                2,
                2,
                &[
                    series.lambda_rate(0, x[0]),
                    series.s_rate(0, x[1]),
                    series.lambda_rate(2, x[0]),
                    series.s_rate(2, x[1]),
                ],
            ))
        };
        let scale = w_target.iter().fold(1.0f64, |a, w| a.max(w.abs()));
        let psi = newton_nd(
            f,
            jac,
            DVector::from_vec(vec![theta[0], theta[2]]),
            NewtonOptions { tol: 1e-14 * scale, max_iter: 50 },
        )?;
        let w = torus.generating_derivatives(&series, psi[0], psi[1], 0.0);
        let phi = integrals.lz * (w_target[1] - w[1]);
        let st = torus.state_at(psi[0], psi[1]);
        Ok((self.assemble(&st, phi, integrals.lz), integrals))
    }

    fn assemble(&self, st: &MeridionalState<f64>, phi: f64, lz: f64) -> PhasePoint<f64> {
        let c = &self.params.coords;
        let m = Meridional { lambda: st.lambda, s: st.s };
        let (r, z) = meridional_to_rz(&m, c);
        let (p_r, p_z) = momenta_from_meridional(r, z, st.p_lambda, st.p_s, &m, c);
        PhasePoint::new(r, phi, z, p_r, lz, p_z)
    }

    /// `∂(ϑ, 𝒥)/∂u` by forward-mode differentiation, and `∂u/∂𝒥`.
    pub fn jacobian(&self, u: &PhasePoint<f64>) -> Result<ToyJacobian> {
        let (theta, actions) = self.angles_actions(&u.seeded())?;
        let row = |d: &Dual<6>| d.eps;
        let mut matrix = Matrix6::zeros();
        for (i, d) in theta.iter().chain(actions.iter()).enumerate() {
            let r = row(d);
            for k in 0..6 {
                matrix[(i, k)] = r[k];
            }
        }
        let sv = matrix.singular_values();
        let condition = sv.max() / sv.min();
        let inv = matrix
            .try_inverse()
            .ok_or_else(|| Error::SingularMatrix("toy Jacobian not invertible".into()))?;
        let du_dj = inv.fixed_columns::<3>(3).into_owned();
        Ok(ToyJacobian { matrix, du_dj, condition })
    }
}
