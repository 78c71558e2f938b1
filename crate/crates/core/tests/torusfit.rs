mod common;

use common::{reference_toy, rng};
use rand::Rng;
use staeckel_tori::numerics::LmConfig;
use staeckel_tori::target::{LogPotentialParams, LogTarget, TargetHamiltonian, ToyTarget};
use staeckel_tori::staeckel::integrals_from_phase;
use staeckel_tori::torusfit::*;
use staeckel_tori::{Error, StaeckelToy};
use std::f64::consts::TAU;

const J0: [f64; 3] = [0.5, 0.45, 0.5];

fn toy() -> StaeckelToy {
    StaeckelToy::with_defaults(reference_toy())
}

fn log_target() -> LogTarget {
    LogTarget::new(LogPotentialParams::default()).unwrap()
}

struct Shifted<T>(T, f64);

impl<T: TargetHamiltonian> TargetHamiltonian for Shifted<T> {
    fn name(&self) -> &str {
        "shifted"
    }
    fn potential(&self, r: f64, z: f64) -> f64 {
        self.0.potential(r, z) + self.1
    }
    fn potential_gradient(&self, r: f64, z: f64) -> (f64, f64) {
        self.0.potential_gradient(r, z)
    }
}

fn perturbed(waves: WaveSet, scale: f64, seed: u64) -> TorusModel {
    let mut m = TorusModel::unfitted(J0, waves, &toy());
    let mut r = rng(seed);
    for s in &mut m.coefficients {
        *s = scale * r.gen_range(-1.0..1.0);
    }
    m
}

#[test]
fn wave_set_sizes() {
    let full = WaveSet::new(96, 24, SymmetryFilter::Even);
    assert_eq!(full.len(), 1212);
    assert_eq!(full.effective_max_frequency(), [48, 12]);
    let desk = WaveSet::new(16, 8, SymmetryFilter::Even);
    assert_eq!(desk.len(), 76);
    assert!(desk.waves().iter().all(|k| k[1] % 2 == 0 && k[0] >= 0 && (k[0] > 0 || k[1] > 0)));
    let all = WaveSet::new(4, 2, SymmetryFilter::All);
    assert_eq!(all.len(), 2 + 2 * 5);
}

#[test]
fn grid_must_resolve_the_wave_set() {
    let full = WaveSet::new(96, 24, SymmetryFilter::Even);
    assert!(AngleGrid::new(100, 100, &full).is_ok());
    assert!(AngleGrid::new(97, 25, &full).is_ok());
    assert!(matches!(AngleGrid::new(96, 100, &full), Err(Error::InvalidParameter(_))));
    assert!(matches!(AngleGrid::new(100, 24, &full), Err(Error::InvalidParameter(_))));
    let grid = AngleGrid::new(20, 18, &WaveSet::new(16, 8, SymmetryFilter::Even)).unwrap();
    let pts = grid.points();
    assert_eq!(pts.len(), 360);
    assert!(pts.iter().all(|t| t[1] == 0.0 && t[0] < TAU && t[2] < TAU));
}

#[test]
fn explicit_wave_lists_are_validated() {
    assert!(WaveSet::from_list(vec![[1, 0], [0, 2]]).is_ok());
    assert!(WaveSet::from_list(vec![[0, 0]]).is_err());
    assert!(WaveSet::from_list(vec![[1, 2], [1, 2]]).is_err());
    assert!(WaveSet::from_list(vec![[1, 2], [-1, -2]]).is_err());
}

#[test]
fn zero_coefficients_reproduce_the_toy_torus() {
    let toy = toy();
    let m = TorusModel::unfitted(J0, WaveSet::new(16, 8, SymmetryFilter::Even), &toy);
    for th in [[0.0, 0.0, 0.0], [1.0, 2.0, 3.0], [5.5, 0.1, 4.2]] {
        assert_eq!(toy_actions_on_torus(&th, &m), J0);
        assert_eq!(torus_point(&th, &m, &toy).unwrap(), toy.forward(&th, &J0).unwrap());
    }
}

#[test]
fn single_wave_shifts_actions_by_cosine() {
    let toy = toy();
    let mut m = TorusModel::unfitted(J0, WaveSet::from_list(vec![[1, 2]]).unwrap(), &toy);
    m.coefficients[0] = 0.01;
    let th = [0.4, 1.0, 0.9];
    let c = 0.02 * (0.4f64 + 1.8).cos();
    let ja = toy_actions_on_torus(&th, &m);
    assert!((ja[0] - (J0[0] + c)).abs() < 1e-15);
    assert_eq!(ja[1], J0[1]);
    assert!((ja[2] - (J0[2] + 2.0 * c)).abs() < 1e-15);
    assert_eq!(invert_actions(&th, &ja, &m), J0);
}

#[test]
fn grid_mean_of_toy_actions_is_the_true_action() {
    let waves = WaveSet::new(16, 8, SymmetryFilter::Even);
    let m = perturbed(waves.clone(), 1e-3, 1);
    let grid = AngleGrid::new(18, 18, &waves).unwrap();
    let pts = grid.points();
    let mut mean = [0.0; 3];
    for th in &pts {
        let ja = toy_actions_on_torus(th, &m);
        for n in 0..3 {
            mean[n] += ja[n] / pts.len() as f64;
        }
    }
    for n in 0..3 {
        assert!((mean[n] - J0[n]).abs() < 1e-14);
    }
}

#[test]
fn model_round_trips_through_json() {
    let mut m = perturbed(WaveSet::new(8, 4, SymmetryFilter::Even), 1e-4, 2);
    m.h_bar = Some(-1.25);
    let text = m.to_json().unwrap();
    let back = TorusModel::from_json(&text).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.to_json().unwrap(), text);
    let first_keys: Vec<&str> = text.lines().skip(1).take(1).collect();
    assert!(first_keys[0].contains("\"toy\""));
}

#[test]
fn malformed_model_files_are_rejected() {
    let m = perturbed(WaveSet::new(8, 4, SymmetryFilter::Even), 1e-4, 3);
    let mut v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
    v["extra"] = serde_json::json!(1);
    assert!(TorusModel::from_json(&v.to_string()).is_err());
    let mut v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
    v["coefficients"].as_array_mut().unwrap().pop();
    assert!(TorusModel::from_json(&v.to_string()).is_err());
    let mut v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
    v["waves"] = serde_json::json!([[1, 0], [-1, 0]]);
    assert!(TorusModel::from_json(&v.to_string()).is_err());
}

#[test]
fn toy_target_is_its_own_torus() {
    let toy = toy();
    let target = ToyTarget::new(reference_toy());
    let waves = WaveSet::new(8, 4, SymmetryFilter::Even);
    let grid = AngleGrid::new(12, 12, &waves).unwrap();
    let m = TorusModel::unfitted(J0, waves.clone(), &toy);
    let (chi2, _, _) = chi2_and_residuals(&m, &grid, &target, &toy).unwrap();
    assert!(chi2 < 1e-24, "chi2 {chi2}");
    // on the toy torus ∂H/∂𝒥 = Ω everywhere, so column k is 2(Ω·k)cos(k·ϑ)
    let u = toy.forward(&[0.0; 3], &J0).unwrap();
    let (omega, _) = toy.frequencies_and_djdi(&integrals_from_phase(&u, &reference_toy())).unwrap();
    let jac = chi2_jacobian(&m, &grid, &target, &toy).unwrap();
    for (row, th) in grid.points().iter().enumerate() {
        for (col, k) in waves.waves().iter().enumerate() {
            let (kl, kn) = (k[0] as f64, k[1] as f64);
            let expected = 2.0 * (omega[0] * kl + omega[2] * kn) * (kl * th[0] + kn * th[2]).cos();
            assert!((jac[(row, col)] - expected).abs() < 1e-8, "({row},{col})");
        }
    }
    let fit = fit_torus(J0, waves, grid, &target, &toy, &LmConfig::default()).unwrap();
    assert!(fit.coefficients.iter().all(|s| s.abs() < 1e-10));
}

#[test]
fn chi2_ignores_constant_energy_shift() {
    let toy = toy();
    let waves = WaveSet::new(8, 4, SymmetryFilter::Even);
    let grid = AngleGrid::new(12, 12, &waves).unwrap();
    let m = perturbed(waves, 1e-4, 4);
    let (a, ra, ha) = chi2_and_residuals(&m, &grid, &log_target(), &toy).unwrap();
    let (b, rb, hb) = chi2_and_residuals(&m, &grid, &Shifted(log_target(), 3.0), &toy).unwrap();
    assert!((a - b).abs() < 1e-12 * a);
    assert!((ra - rb).amax() < 1e-12);
    assert!((hb - ha - 3.0).abs() < 1e-12);
}

#[test]
fn chi2_jacobian_matches_finite_differences() {
    let toy = toy();
    let target = log_target();
    let waves = WaveSet::new(8, 4, SymmetryFilter::Even);
    let grid = AngleGrid::new(12, 12, &waves).unwrap();
    let m = perturbed(waves, 1e-4, 5);
    let jac = chi2_jacobian(&m, &grid, &target, &toy).unwrap();
    let h = 1e-6;
    for k in [0, 3, 7, m.coefficients.len() - 1] {
        let at = |d: f64| {
            let mut mm = m.clone();
            mm.coefficients[k] += d;
            chi2_and_residuals(&mm, &grid, &target, &toy).unwrap().1
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        let col = jac.column(k);
        let err = (&fd - col).amax();
        assert!(err < 1e-5 * fd.amax().max(1e-3), "wave {k}: {err} of {}", fd.amax());
    }
}

#[test]
fn oversized_coefficients_are_unmappable() {
    let toy = toy();
    let mut m = TorusModel::unfitted(J0, WaveSet::from_list(vec![[1, 0]]).unwrap(), &toy);
    m.coefficients[0] = 0.5;
    // 𝒥_λ = 0.5 + cos ϑ_λ is negative near ϑ_λ = π
    match torus_point(&[3.0, 0.0, 0.0], &m, &toy) {
        Err(Error::Unmappable { actions, .. }) => assert!(actions[0] < 0.0),
        other => panic!("expected Unmappable, got {other:?}"),
    }
    assert!(torus_point(&[0.0, 0.0, 0.0], &m, &toy).is_ok());
}

#[test]
fn fit_reduces_energy_scatter() {
    let toy = toy();
    let waves = WaveSet::new(8, 4, SymmetryFilter::Even);
    let grid = AngleGrid::new(12, 12, &waves).unwrap();
    let m = fit_torus(J0, waves, grid, &log_target(), &toy, &LmConfig::default()).unwrap();
    let fit = m.fit.unwrap();
    assert!(fit.scatter < fit.scatter_initial / 2.0, "{fit:?}");
    assert!(fit.chi2 < fit.chi2_initial);
    assert_eq!(fit.grid, [12, 12]);
    let (chi2, _, h_bar) = chi2_and_residuals(&m, &grid, &log_target(), &toy).unwrap();
    assert!((chi2 - fit.chi2).abs() < 1e-12 * fit.chi2.max(1e-30));
    assert_eq!(Some(h_bar), m.h_bar);
}

#[test]
fn fit_rejects_undersampled_grid() {
    let toy = toy();
    let waves = WaveSet::new(16, 8, SymmetryFilter::Even);
    let grid = AngleGrid { n_lambda: 12, n_nu: 12 };
    assert!(fit_torus(J0, waves, grid, &log_target(), &toy, &LmConfig::default()).is_err());
}

#[test]
fn fit_rejects_planar_torus() {
    let toy = toy();
    let waves = WaveSet::new(8, 4, SymmetryFilter::Even);
    let grid = AngleGrid::new(12, 12, &waves).unwrap();
    let err = fit_torus([0.5, 0.45, 0.0], waves, grid, &log_target(), &toy, &LmConfig::default()).unwrap_err();
    assert!(matches!(err, Error::InvalidParameter(_)));
}
