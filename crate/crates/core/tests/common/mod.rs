#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use staeckel_tori::staeckel::toy_hamiltonian;
use staeckel_tori::{PhasePoint, ToyParams};

pub fn reference_toy() -> ToyParams {
    ToyParams::new(-0.639, -0.142, 1.29).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random bound, non-equatorial phase point of the toy Hamiltonian. The
/// energy cut excludes the rare near-parabolic orbits whose pericentre sits
/// almost on the focus, which need more than the default quadrature nodes.
pub fn random_bound_point(rng: &mut ChaCha8Rng, p: &ToyParams) -> PhasePoint {
    loop {
        let u = PhasePoint::new(
            rng.gen_range(0.3..2.0),
            rng.gen_range(0.0..std::f64::consts::TAU),
            rng.gen_range(-0.6..0.6),
            rng.gen_range(-0.6..0.6),
            rng.gen_range(0.2..0.8) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
            rng.gen_range(-0.6..0.6),
        );
        if toy_hamiltonian(&u, p) < -0.2 && u.z.abs() > 1e-3 {
            return u;
        }
    }
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Frequency of the strongest spectral line of `x` in `[lo, hi]`, from a
/// Hann-windowed Fourier amplitude maximised by golden-section search.
pub fn spectral_peak(t: &[f64], x: &[f64], lo: f64, hi: f64) -> f64 {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let amp = |w: f64| {
        let (mut re, mut im) = (0.0, 0.0);
        for i in 0..n {
            let win = 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / (n - 1) as f64).cos();
            let (s, c) = (w * t[i]).sin_cos();
            re += win * (x[i] - mean) * c;
            im += win * (x[i] - mean) * s;
        }
        re.hypot(im)
    };
    let steps = 400;
    let mut best = (lo, 0.0);
    for k in 0..=steps {
        let w = lo + (hi - lo) * k as f64 / steps as f64;
        let a = amp(w);
        if a > best.1 {
            best = (w, a);
        }
    }
    let h = (hi - lo) / steps as f64;
    let (mut a, mut b) = (best.0 - h, best.0 + h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if amp(c) > amp(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}
