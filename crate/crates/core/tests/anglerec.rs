mod common;

use common::{reference_toy, rng};
use rand::Rng;
use staeckel_tori::anglerec::*;
use staeckel_tori::staeckel::integrals_from_phase;
use staeckel_tori::target::{LogPotentialParams, LogTarget, ToyTarget};
use staeckel_tori::torusfit::*;
use staeckel_tori::{Error, StaeckelToy};

const J0: [f64; 3] = [0.5, 0.45, 0.5];

fn toy() -> StaeckelToy {
    StaeckelToy::with_defaults(reference_toy())
}

fn log_target() -> LogTarget {
    LogTarget::new(LogPotentialParams::default()).unwrap()
}

fn with_random_ds_dj(mut m: TorusModel, seed: u64) -> TorusModel {
    let mut r = rng(seed);
    m.ds_dj = Some((0..m.waves.len()).map(|_| std::array::from_fn(|_| r.gen_range(-0.1..0.1))).collect());
    m.omega = Some([1.0, 0.5, 0.7]);
    m
}

#[test]
fn toy_target_recovers_toy_frequencies() {
    let toy = toy();
    let target = ToyTarget::new(reference_toy());
    let waves = WaveSet::new(8, 4, SymmetryFilter::Even);
    let grid = AngleGrid::new(12, 12, &waves).unwrap();
    let m = TorusModel::unfitted(J0, waves, &toy);
    let r = solve_model_angles(&m, &grid, &target, &toy, &AngleSolveOptions::default()).unwrap();
    let u = toy.forward(&[0.0; 3], &J0).unwrap();
    let (omega, _) = toy.frequencies_and_djdi(&integrals_from_phase(&u, &reference_toy())).unwrap();
    for n in 0..3 {
        assert!((r.omega[n] - omega[n]).abs() < 1e-8, "{:?} vs {omega:?}", r.omega);
        assert!(r.residual_norms[n] < 1e-8);
    }
    assert!(r.ds_dj.iter().flatten().all(|d| d.abs() < 1e-8));
    assert!(!r.used_qr && r.condition_estimate.is_finite());
}

#[test]
fn pointwise_frequencies_average_to_solved_frequencies() {
    let toy = toy();
    let target = log_target();
    let waves = WaveSet::new(8, 4, SymmetryFilter::Even);
    let grid = AngleGrid::new(12, 12, &waves).unwrap();
    let mut m = TorusModel::unfitted(J0, waves, &toy);
    let mut r = rng(1);
    for s in &mut m.coefficients {
        *s = 1e-4 * r.gen_range(-1.0..1.0);
    }
    let res = solve_model_angles(&m, &grid, &target, &toy, &AngleSolveOptions::default()).unwrap();
    res.apply_to(&mut m);
    let pts = grid.points();
    let mut mean = [0.0; 3];
    let mut sq = [0.0; 3];
    for th in &pts {
        let w = model_frequencies(th, &m, &target, &toy).unwrap();
        for n in 0..3 {
            mean[n] += w[n] / pts.len() as f64;
            sq[n] += (w[n] - res.omega[n]).powi(2);
        }
    }
    for n in 0..3 {
        // pointwise ω − ω̄ is the least-squares residual, orthogonal to the constant column
        assert!((mean[n] - res.omega[n]).abs() < 1e-10, "{mean:?} vs {:?}", res.omega);
        assert!((sq[n].sqrt() - res.residual_norms[n]).abs() < 1e-8 * (1.0 + res.residual_norms[n]));
    }
    assert_eq!(m.omega, Some(res.omega));
    assert_eq!(m.angles.unwrap().condition_estimate, res.condition_estimate);
}

#[test]
fn too_few_grid_points_is_an_error() {
    let toy = toy();
    let waves = WaveSet::new(16, 8, SymmetryFilter::Even);
    let m = TorusModel::unfitted(J0, waves, &toy);
    let grid = AngleGrid { n_lambda: 6, n_nu: 6 };
    let err = solve_model_angles(&m, &grid, &log_target(), &toy, &AngleSolveOptions::default()).unwrap_err();
    assert!(matches!(err, Error::InvalidParameter(_)));
}

#[test]
fn aliased_waves_need_the_fallback() {
    let toy = toy();
    // on ϑ_λ ∈ {0, π} the (1,0) and (3,0) columns coincide
    let waves = WaveSet::from_list(vec![[1, 0], [3, 0]]).unwrap();
    let m = TorusModel::unfitted(J0, waves, &toy);
    let grid = AngleGrid { n_lambda: 2, n_nu: 4 };
    let target = log_target();
    let err = solve_model_angles(&m, &grid, &target, &toy, &AngleSolveOptions::default()).unwrap_err();
    assert!(matches!(err, Error::SingularMatrix(_)));
    let r = solve_model_angles(&m, &grid, &target, &toy, &AngleSolveOptions { qr_fallback: true }).unwrap();
    assert!(r.used_qr);
    assert!(r.omega.iter().all(|w| w.is_finite()));
}

#[test]
fn zero_derivatives_leave_toy_angles_unchanged() {
    let toy = toy();
    let mut m = TorusModel::unfitted(J0, WaveSet::new(8, 4, SymmetryFilter::Even), &toy);
    m.ds_dj = Some(vec![[0.0; 3]; m.waves.len()]);
    m.omega = Some([1.0, 0.5, 0.7]);
    let th = [1.0, 2.0, 3.0];
    assert_eq!(model_angle(&th, &m).unwrap(), th);
    assert_eq!(frequencies_from_gradient(&[0.9, 0.4, 0.6], &th, &m).unwrap(), [0.9, 0.4, 0.6]);
}

#[test]
fn angle_correction_averages_to_zero_over_the_grid() {
    let toy = toy();
    let waves = WaveSet::new(8, 4, SymmetryFilter::Even);
    let grid = AngleGrid::new(12, 12, &waves).unwrap();
    let m = with_random_ds_dj(TorusModel::unfitted(J0, waves, &toy), 2);
    let pts = grid.points();
    let mut mean = [0.0; 3];
    for th in &pts {
        let t = model_angle(th, &m).unwrap();
        for n in 0..3 {
            let d = (t[n] - th[n] + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
            mean[n] += d / pts.len() as f64;
        }
    }
    assert!(mean.iter().all(|d| d.abs() < 1e-13), "{mean:?}");
}

#[test]
fn missing_derivatives_are_reported() {
    let toy = toy();
    let m = TorusModel::unfitted(J0, WaveSet::new(8, 4, SymmetryFilter::Even), &toy);
    assert!(model_angle(&[0.0; 3], &m).is_err());
    assert!(frequencies_from_gradient(&[1.0; 3], &[0.0; 3], &m).is_err());
    assert!(model_frequencies(&[0.0; 3], &m, &log_target(), &toy).is_err());
}

#[test]
fn recovered_model_round_trips_through_json() {
    let toy = toy();
    let m = with_random_ds_dj(TorusModel::unfitted(J0, WaveSet::new(8, 4, SymmetryFilter::Even), &toy), 3);
    let back = TorusModel::from_json(&m.to_json().unwrap()).unwrap();
    assert_eq!(back, m);
    let mut broken = m.clone();
    broken.omega = None;
    assert!(TorusModel::from_json(&broken.to_json().unwrap()).is_err());
}
