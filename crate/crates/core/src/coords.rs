//! Prolate spheroidal coordinates `(λ, φ, ν)` of the confocal family
//! `R²/(τ+α) + z²/(τ+γ) = 1`, with `α < γ < 0` and foci on the z axis at
//! `z = ±√(γ−α)`.
//!
//! Besides the textbook `(λ, ν)` pair the module exposes the regularised
//! vertical coordinate `s = sign(z)·√(ν+γ)`. In `(λ, s)` the metric and the
//! conjugate momenta stay finite on the equatorial plane, which is where the
//! `ν` chart breaks down.

use nalgebra::Matrix6;

use crate::error::{Error, Result};
use crate::scalar::{Dual, Real};

/// Parameters of the confocal quadric. Invariant: `alpha < gamma < 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoordParams<T> {
    pub alpha: T,
    pub gamma: T,
}

impl<T: Real> CoordParams<T> {
    pub fn new(alpha: T, gamma: T) -> Result<Self> {
        if !(alpha < gamma && gamma < T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "coordinate parameters must satisfy alpha < gamma < 0 (alpha = {}, gamma = {})",
                alpha.re(),
                gamma.re()
            )));
        }
        Ok(Self { alpha, gamma })
    }

    /// Squared focal distance `Δ² = γ − α`.
    #[inline]
    pub fn focal_sq(&self) -> T {
        self.gamma - self.alpha
    }

    pub fn cast<U: Real>(&self) -> CoordParams<U> {
        CoordParams { alpha: U::lit(self.alpha.re()), gamma: U::lit(self.gamma.re()) }
    }
}

/// Signs of `(x, y, z)`; identifies the octant of a [`ProlatePoint`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Octant(pub [i8; 3]);

/// `(λ, φ, ν)` with `φ ∈ [0, π/2)` and the octant tag `n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProlatePoint<T> {
    pub lambda: T,
    pub phi: T,
    pub nu: T,
    pub octant: Octant,
}

/// Cylindrical position `(R, φ, z)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CylPosition<T> {
    pub r: T,
    pub varphi: T,
    pub z: T,
}

/// Cylindrical phase-space point `u = (R, φ, z, p_R, p_φ, p_z)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhasePoint<T> {
    pub r: T,
    pub varphi: T,
    pub z: T,
    pub p_r: T,
    pub p_varphi: T,
    pub p_z: T,
}

impl<T: Real> PhasePoint<T> {
    pub fn new(r: T, varphi: T, z: T, p_r: T, p_varphi: T, p_z: T) -> Self {
        Self { r, varphi, z, p_r, p_varphi, p_z }
    }

    pub fn from_array(a: [T; 6]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    pub fn to_array(&self) -> [T; 6] {
        [self.r, self.varphi, self.z, self.p_r, self.p_varphi, self.p_z]
    }

    pub fn values(&self) -> PhasePoint<f64> {
        PhasePoint::from_array(self.to_array().map(|x| x.re()))
    }

    /// Kinetic energy per unit mass in the cylindrical frame.
    pub fn kinetic(&self) -> T {
        let half = T::lit(0.5);
        half * (self.p_r * self.p_r
            + self.p_z * self.p_z
            + self.p_varphi * self.p_varphi / (self.r * self.r))
    }
}

impl PhasePoint<f64> {
    /// Lifts the point to dual numbers with one seed per phase-space component.
    pub fn seeded(&self) -> PhasePoint<Dual<6>> {
        let a = self.to_array();
        PhasePoint::from_array(std::array::from_fn(|i| Dual::variable(a[i], i)))
    }
}

/// Which degenerate coordinate surface a point lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    Interior,
    /// `R = 0` (`λ = −α` or `ν = −α`): the excluded symmetry axis.
    Axis,
    /// `ν = −γ`: the equatorial plane, where `p_ν` is singular.
    Equator,
}

/// Scale factors `(h_λ, h_φ, h_ν)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleFactors<T> {
    pub h_lambda: T,
    pub h_phi: T,
    pub h_nu: T,
}

/// `(λ, s)` with `s = sign(z)·√(ν+γ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Meridional<T> {
    pub lambda: T,
    pub s: T,
}

/// Largest root `λ` of the confocal quadratic for a meridional position.
///
/// The discriminant is written as `(R²+z²−Δ²)² + 4R²Δ²`, which has no
/// cancellation, and `λ` is taken from the branch without subtraction.
pub fn lambda_of<T: Real>(r: T, z: T, params: &CoordParams<T>) -> T {
    let CoordParams { alpha, gamma } = *params;
    let d2 = params.focal_sq();
    let rho2 = r * r + z * z;
    let disc = (rho2 - d2) * (rho2 - d2) + T::lit(4.0) * r * r * d2;
    // b = α + γ − ρ², λ = (−b + √disc)/2
    (rho2 - alpha - gamma + disc.sqrt()) * T::lit(0.5)
}

/// `ν + γ = z²Δ²/(λ+γ)`, free of the cancellation in `c/λ + γ`.
fn nu_plus_gamma<T: Real>(z: T, lambda: T, params: &CoordParams<T>) -> T {
    z * z * params.focal_sq() / (lambda + params.gamma)
}

/// Meridional `(R, z)` → `(λ, s)`. Valid everywhere off the focal segment ends.
pub fn meridional_of<T: Real>(r: T, z: T, params: &CoordParams<T>) -> Meridional<T> {
    let lambda = lambda_of(r, z, params);
    let s = z * (params.focal_sq() / (lambda + params.gamma)).sqrt();
    Meridional { lambda, s }
}

/// `(λ, s)` → meridional `(R, z)` with `R ≥ 0`.
pub fn meridional_to_rz<T: Real>(m: &Meridional<T>, params: &CoordParams<T>) -> (T, T) {
    let d2 = params.focal_sq();
    let r2 = (m.lambda + params.alpha) * (d2 - m.s * m.s) / d2;
    let r = r2.max(T::zero()).sqrt();
    let z = m.s * ((m.lambda + params.gamma) / d2).sqrt();
    (r, z)
}

/// Point-transformation coefficients: rows `(∂R/∂λ, ∂z/∂λ)` and `(∂R/∂s, ∂z/∂s)`.
pub fn meridional_jacobian<T: Real>(
    r: T,
    z: T,
    m: &Meridional<T>,
    params: &CoordParams<T>,
) -> [[T; 2]; 2] {
    let half = T::lit(0.5);
    let d2 = params.focal_sq();
    let dr_dl = half * r / (m.lambda + params.alpha);
    let dz_dl = half * z / (m.lambda + params.gamma);
    let dr_ds = -m.s * r / (d2 - m.s * m.s);
    let dz_ds = ((m.lambda + params.gamma) / d2).sqrt();
    [[dr_dl, dz_dl], [dr_ds, dz_ds]]
}

/// `(p_R, p_z)` → `(p_λ, p_s)`.
pub fn momenta_to_meridional<T: Real>(
    r: T,
    z: T,
    p_r: T,
    p_z: T,
    m: &Meridional<T>,
    params: &CoordParams<T>,
) -> (T, T) {
    let j = meridional_jacobian(r, z, m, params);
    (j[0][0] * p_r + j[0][1] * p_z, j[1][0] * p_r + j[1][1] * p_z)
}

/// `(p_λ, p_s)` → `(p_R, p_z)`, inverting the point transformation.
pub fn momenta_from_meridional<T: Real>(
    r: T,
    z: T,
    p_lambda: T,
    p_s: T,
    m: &Meridional<T>,
    params: &CoordParams<T>,
) -> (T, T) {
    let j = meridional_jacobian(r, z, m, params);
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let p_r = (j[1][1] * p_lambda - j[0][1] * p_s) / det;
    let p_z = (j[0][0] * p_s - j[1][0] * p_lambda) / det;
    (p_r, p_z)
}

/// Squared scale factors `(h_λ², h_s²)` of the `(λ, s)` chart.
pub fn meridional_metric<T: Real>(m: &Meridional<T>, params: &CoordParams<T>) -> (T, T) {
    let nu = m.s * m.s - params.gamma;
    let hl2 = (m.lambda - nu)
        / (T::lit(4.0) * (m.lambda + params.alpha) * (m.lambda + params.gamma));
    let hs2 = (m.lambda - nu) / (params.focal_sq() - m.s * m.s);
    (hl2, hs2)
}

fn quadrant_signs(q: u8) -> (i8, i8) {
    match q {
        0 => (1, 1),
        1 => (-1, 1),
        2 => (-1, -1),
        _ => (1, -1),
    }
}

fn quadrant_of(nx: i8, ny: i8) -> u8 {
    match (nx, ny) {
        (1, 1) => 0,
        (-1, 1) => 1,
        (-1, -1) => 2,
        _ => 3,
    }
}

/// Cylindrical position → `(λ, φ, ν, n)`.
///
/// The azimuth is folded by quarter turns so that `φ ∈ [0, π/2)`; the quarter
/// is recorded in the octant tag together with the sign of `z`.
pub fn cyl_to_prolate<T: Real>(pos: &CylPosition<T>, params: &CoordParams<T>) -> Result<ProlatePoint<T>> {
    if !(pos.r > T::zero()) {
        return Err(Error::Domain(format!("R = {} lies on the symmetry axis", pos.r.re())));
    }
    let lambda = lambda_of(pos.r, pos.z, params);
    let nu = nu_plus_gamma(pos.z, lambda, params) - params.gamma;
    let quarter = T::FRAC_PI_2();
    let two_pi = T::PI() + T::PI();
    let mut v = pos.varphi % two_pi;
    if v < T::zero() {
        v = v + two_pi;
    }
    let q = (v / quarter).floor().re().clamp(0.0, 3.0) as u8;
    let phi = v - quarter * T::lit(q as f64);
    let (nx, ny) = quadrant_signs(q);
    let nz = if pos.z < T::zero() { -1 } else { 1 };
    Ok(ProlatePoint { lambda, phi, nu, octant: Octant([nx, ny, nz]) })
}

/// `(λ, φ, ν, n)` → cylindrical position, with the degenerate surface the
/// point lies on (if any).
pub fn prolate_to_cyl<T: Real>(
    pt: &ProlatePoint<T>,
    params: &CoordParams<T>,
) -> Result<(CylPosition<T>, Boundary)> {
    let CoordParams { alpha, gamma } = *params;
    let d2 = params.focal_sq();
    if pt.lambda < -alpha || pt.nu < -gamma || pt.nu > -alpha || pt.lambda < pt.nu {
        return Err(Error::Domain(format!(
            "(lambda, nu) = ({}, {}) outside [-alpha, inf) x [-gamma, -alpha]",
            pt.lambda.re(),
            pt.nu.re()
        )));
    }
    let r2 = -(pt.lambda + alpha) * (pt.nu + alpha) / d2;
    let z2 = (pt.lambda + gamma) * (pt.nu + gamma) / d2;
    let r = r2.max(T::zero()).sqrt();
    let z = T::lit(pt.octant.0[2] as f64) * z2.max(T::zero()).sqrt();
    let q = quadrant_of(pt.octant.0[0], pt.octant.0[1]);
    let varphi = pt.phi + T::FRAC_PI_2() * T::lit(q as f64);
    let boundary = if pt.lambda == -alpha || pt.nu == -alpha {
        Boundary::Axis
    } else if pt.nu == -gamma {
        Boundary::Equator
    } else {
        Boundary::Interior
    };
    Ok((CylPosition { r, varphi, z }, boundary))
}

fn check_interior<T: Real>(lambda: T, nu: T, params: &CoordParams<T>) -> Result<()> {
    let CoordParams { alpha, gamma } = *params;
    if !(lambda > -alpha && nu > -gamma && nu < -alpha) {
        return Err(Error::SingularMetric(format!(
            "(lambda, nu) = ({}, {})",
            lambda.re(),
            nu.re()
        )));
    }
    Ok(())
}

/// Scale factors of `(λ, φ, ν)` at an interior point.
///
/// `h_λ² = (λ−ν)/(4(λ+α)(λ+γ))`, `h_ν² = (ν−λ)/(4(ν+α)(ν+γ))`, `h_φ = R`.
pub fn scale_factors<T: Real>(lambda: T, nu: T, params: &CoordParams<T>) -> Result<ScaleFactors<T>> {
    check_interior(lambda, nu, params)?;
    let CoordParams { alpha, gamma } = *params;
    let four = T::lit(4.0);
    let h_lambda = ((lambda - nu) / (four * (lambda + alpha) * (lambda + gamma))).sqrt();
    let h_nu = ((nu - lambda) / (four * (nu + alpha) * (nu + gamma))).sqrt();
    let h_phi = (-(lambda + alpha) * (nu + alpha) / params.focal_sq()).sqrt();
    Ok(ScaleFactors { h_lambda, h_phi, h_nu })
}

/// Conjugate momenta `(p_λ, p_φ, p_ν)` of a cylindrical phase point.
pub fn momenta_cyl_to_prolate<T: Real>(u: &PhasePoint<T>, params: &CoordParams<T>) -> Result<(T, T, T)> {
    if !(u.r > T::zero()) {
        return Err(Error::Domain("R = 0".into()));
    }
    let lambda = lambda_of(u.r, u.z, params);
    let npg = nu_plus_gamma(u.z, lambda, params);
    if !(npg.abs() > T::lit(1e-12) * params.gamma.abs()) {
        return Err(Error::SingularMetric(
            "equatorial plane nu = -gamma: p_nu is singular, use the cylindrical frame".into(),
        ));
    }
    let nu = npg - params.gamma;
    let half = T::lit(0.5);
    let p_lambda =
        half * u.r * u.p_r / (lambda + params.alpha) + half * u.z * u.p_z / (lambda + params.gamma);
    let p_nu = half * u.r * u.p_r / (nu + params.alpha) + half * u.z * u.p_z / npg;
    Ok((p_lambda, u.p_varphi, p_nu))
}

/// Inverse of [`momenta_cyl_to_prolate`] at the position of `u`.
pub fn momenta_prolate_to_cyl<T: Real>(
    pos: &CylPosition<T>,
    p_lambda: T,
    p_phi: T,
    p_nu: T,
    params: &CoordParams<T>,
) -> Result<(T, T, T)> {
    let lambda = lambda_of(pos.r, pos.z, params);
    let npg = nu_plus_gamma(pos.z, lambda, params);
    let nu = npg - params.gamma;
    check_interior(lambda, nu, params)?;
    let half = T::lit(0.5);
    let a = half * pos.r / (lambda + params.alpha);
    let b = half * pos.z / (lambda + params.gamma);
    let c = half * pos.r / (nu + params.alpha);
    let d = half * pos.z / npg;
    let det = a * d - b * c;
    let p_r = (d * p_lambda - b * p_nu) / det;
    let p_z = (a * p_nu - c * p_lambda) / det;
    Ok((p_r, p_phi, p_z))
}

/// `∂(λ, φ, ν, p_λ, p_φ, p_ν)/∂(R, φ, z, p_R, p_φ, p_z)`, exact to rounding.
///
/// Singular on the equatorial plane (`p_ν` blows up there).
pub fn jacobian_prolate_wrt_cyl(u: &PhasePoint<f64>, params: &CoordParams<f64>) -> Result<Matrix6<f64>> {
    let x = u.seeded();
    let p: CoordParams<Dual<6>> = params.cast();
    let pos = CylPosition { r: x.r, varphi: x.varphi, z: x.z };
    let pp = cyl_to_prolate(&pos, &p)?;
    let (pl, pphi, pn) = momenta_cyl_to_prolate(&x, &p)?;
    let rows = [pp.lambda, pp.phi, pp.nu, pl, pphi, pn];
    Ok(Matrix6::from_fn(|i, j| rows[i].eps[j]))
}
