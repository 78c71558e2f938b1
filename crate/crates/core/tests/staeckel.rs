mod common;

use common::{reference_toy, random_bound_point, rng, simpson, spectral_peak};
use staeckel_tori::coords::{
    meridional_to_rz, momenta_cyl_to_prolate, momenta_from_meridional, scale_factors, cyl_to_prolate, CylPosition,
    Meridional,
};
use staeckel_tori::orbit::{integrate_orbit, IntegratorOptions};
use staeckel_tori::staeckel::*;
use staeckel_tori::target::ToyTarget;
use staeckel_tori::{Error, PhasePoint, StaeckelToy};
use std::f64::consts::{PI, TAU};

fn toy() -> StaeckelToy {
    StaeckelToy::with_defaults(reference_toy())
}

fn sample_point() -> PhasePoint {
    PhasePoint::new(1.0, 0.3, 0.2, 0.15, 0.9, 0.25)
}

fn angle_diff(a: f64, b: f64) -> f64 {
    (a - b + PI).rem_euclid(TAU) - PI
}

#[test]
fn potential_falls_off_like_kepler() {
    let p = reference_toy();
    let nu = 0.3;
    let a = toy_potential(1e8, nu, &p).unwrap() * 1e4;
    let b = toy_potential(1e10, nu, &p).unwrap() * 1e5;
    assert!(a < 0.0 && b < 0.0);
    assert!((a - b).abs() < 1e-3 * b.abs(), "{a} vs {b}");
}

#[test]
fn potential_at_reference_parameters_is_finite_and_negative() {
    let p = reference_toy();
    let v = toy_potential_rz(0.7, 0.4, &p);
    assert!(v.is_finite() && v < 0.0);
    // ν-derivative limit branch near λ = ν
    let at_focus = toy_potential(-p.coords.alpha, -p.coords.alpha, &p).unwrap();
    let near = toy_potential(-p.coords.alpha + 1e-6, -p.coords.alpha - 1e-6, &p).unwrap();
    assert!((at_focus - near).abs() < 1e-5 * at_focus.abs());
}

#[test]
fn potential_solves_poisson_for_perfect_oblate_spheroid() {
    // ∇²Ψ = 4πρ₀/(1 + R²/a² + z²/c²)² with a² = −α, c² = −γ
    let p = reference_toy();
    let (a2, c2) = (-p.coords.alpha, -p.coords.gamma);
    for &(r, z) in &[(0.5, 0.2), (1.3, -0.7), (0.2, 1.5), (2.5, 0.05)] {
        let h = 1e-3;
        let f = |r: f64, z: f64| toy_potential_rz(r, z, &p);
        let f0 = f(r, z);
        let d2r = (f(r + h, z) - 2.0 * f0 + f(r - h, z)) / (h * h);
        let dr = (f(r + h, z) - f(r - h, z)) / (2.0 * h);
        let d2z = (f(r, z + h) - 2.0 * f0 + f(r, z - h)) / (h * h);
        let lap = d2r + dr / r + d2z;
        let rho = p.rho0 / (1.0 + r * r / a2 + z * z / c2).powi(2);
        assert!((lap - 4.0 * PI * rho).abs() < 1e-5 * (4.0 * PI * rho), "({r},{z}): {lap} vs {}", 4.0 * PI * rho);
    }
}

#[test]
fn potential_is_continuous_across_axis_seam() {
    let p = reference_toy();
    let lam = 1.7;
    let seam = -p.coords.alpha;
    let at = toy_potential(lam, seam, &p).unwrap();
    for eps in [1e-6, 1e-9] {
        let near = toy_potential(lam, seam - eps, &p).unwrap();
        assert!((near - at).abs() < 10.0 * eps);
    }
    let near_axis = toy_potential_rz(1e-9, 0.8, &p);
    let on_axis_limit = toy_potential_rz(1e-6, 0.8, &p);
    assert!((near_axis - on_axis_limit).abs() < 1e-9);
}

#[test]
fn energy_at_rest_equals_potential() {
    let p = reference_toy();
    let u = PhasePoint::new(0.8, 1.0, -0.3, 0.0, 0.0, 0.0);
    assert_eq!(toy_hamiltonian(&u, &p), toy_potential_rz(0.8, -0.3, &p));
}

#[test]
fn hamiltonian_agrees_in_prolate_frame() {
    let p = reference_toy();
    let u = sample_point();
    let pp = cyl_to_prolate(&CylPosition { r: u.r, varphi: u.varphi, z: u.z }, &p.coords).unwrap();
    let h = scale_factors(pp.lambda, pp.nu, &p.coords).unwrap();
    let (pl, pf, pn) = momenta_cyl_to_prolate(&u, &p.coords).unwrap();
    let kinetic = 0.5 * (pl * pl / (h.h_lambda * h.h_lambda) + pf * pf / (h.h_phi * h.h_phi) + pn * pn / (h.h_nu * h.h_nu));
    let e = kinetic + toy_potential(pp.lambda, pp.nu, &p).unwrap();
    assert!((e - toy_hamiltonian(&u, &p)).abs() < 1e-10);
}

#[test]
fn integrals_are_conserved_along_toy_orbits() {
    let p = reference_toy();
    let target = ToyTarget::new(p);
    let mut r = rng(11);
    for _ in 0..3 {
        let u0 = random_bound_point(&mut r, &p);
        let i0 = integrals_from_phase(&u0, &p);
        let opts = IntegratorOptions { sample_interval: Some(0.5), ..Default::default() };
        let trace = integrate_orbit(&u0, &target, 60.0, &opts).unwrap();
        let scale = i0.e.abs().max(i0.i3.abs());
        for u in &trace.points {
            let i = integrals_from_phase(u, &p);
            assert!((i.e - i0.e).abs() < 1e-9 * i0.e.abs());
            assert!((i.i3 - i0.i3).abs() < 1e-8 * scale, "I3 {} vs {}", i.i3, i0.i3);
            assert_eq!(i.lz, i0.lz);
        }
    }
}

#[test]
fn planar_orbits_have_zero_third_integral() {
    let p = reference_toy();
    let u = PhasePoint::new(1.2, 0.0, 0.0, 0.3, 0.6, 0.0);
    assert_eq!(integrals_from_phase(&u, &p).i3, 0.0);
    let mut r = rng(3);
    for _ in 0..50 {
        assert!(integrals_from_phase(&random_bound_point(&mut r, &p), &p).i3 > 0.0);
    }
}

#[test]
fn separated_momenta_match_kinematics() {
    let p = reference_toy();
    let mut r = rng(5);
    for _ in 0..20 {
        let u = random_bound_point(&mut r, &p);
        let i = integrals_from_phase(&u, &p);
        let st = MeridionalState::of(&u, &p.coords);
        let pl2 = p_tau_squared(st.lambda, Branch::Lambda, &i, &p);
        assert!((pl2 - st.p_lambda.powi(2)).abs() < 1e-10 * (1.0 + pl2.abs()));
        let nu = st.s * st.s - p.coords.gamma;
        let pn2 = p_tau_squared(nu, Branch::Nu, &i, &p);
        let kin = (st.p_s / (2.0 * st.s)).powi(2);
        assert!((pn2 - kin).abs() < 1e-9 * (1.0 + kin), "{pn2} vs {kin}");
    }
}

fn dense_sign_changes(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut prev = f(a);
    for k in 1..=n {
        let x = a + (b - a) * k as f64 / n as f64;
        let cur = f(x);
        if (prev >= 0.0) != (cur >= 0.0) {
            // bisect to round-off
            let (mut lo, mut hi) = (x - (b - a) / n as f64, x);
            for _ in 0..100 {
                let m = 0.5 * (lo + hi);
                if (f(m) >= 0.0) == (f(lo) >= 0.0) {
                    lo = m;
                } else {
                    hi = m;
                }
            }
            out.push(0.5 * (lo + hi));
        }
        prev = cur;
    }
    out
}

#[test]
fn turning_points_match_dense_scan() {
    let p = reference_toy();
    let mut r = rng(7);
    for _ in 0..5 {
        let u = random_bound_point(&mut r, &p);
        let i = integrals_from_phase(&u, &p);
        let tp = turning_points(&i, &p).unwrap();
        let lo = -p.coords.alpha;
        let pl = |t: f64| p_tau_squared(t, Branch::Lambda, &i, &p);
        let roots = dense_sign_changes(pl, lo + 1e-9, 20.0, 100_000);
        assert_eq!(roots.len(), 2, "one allowed λ interval");
        assert!((roots[0] - tp.lambda_minus).abs() < 1e-9);
        assert!((roots[1] - tp.lambda_plus).abs() < 1e-9);
        // ν: allowed from −γ up to ν₊, forbidden above
        let pn = |t: f64| p_tau_squared(t, Branch::Nu, &i, &p);
        let nr = dense_sign_changes(pn, -p.coords.gamma + 1e-12, -p.coords.alpha - 1e-12, 100_000);
        assert_eq!(nr.len(), 1);
        assert!((nr[0] - tp.nu_plus(&p)).abs() < 1e-9);
        assert!(pl(tp.lambda_minus).abs() < 1e-9 && pl(tp.lambda_plus).abs() < 1e-9);
    }
}

#[test]
fn planar_orbit_has_degenerate_vertical_interval() {
    let p = reference_toy();
    let i = integrals_from_phase(&PhasePoint::new(1.2, 0.0, 0.0, 0.3, 0.6, 0.0), &p);
    let tp = turning_points(&i, &p).unwrap();
    assert_eq!(tp.nu_plus(&p), -p.coords.gamma);
    assert_eq!(toy().actions(&i).unwrap()[2], 0.0);
}

#[test]
fn unbound_energy_is_rejected() {
    let p = reference_toy();
    let i = Integrals::new(0.0, 0.5, 0.1);
    assert!(matches!(turning_points(&i, &p), Err(Error::NoBoundOrbit(_))));
    let i = Integrals::new(0.2, 0.5, 0.1);
    assert!(matches!(toy().actions(&i), Err(Error::NoBoundOrbit(_))));
}

/// `𝒥_λ = (1/π)∫|p_λ|dλ` and `𝒥_ν = (2/π)∫|p_ν|dν` by adaptive Simpson,
/// with `τ = τ₋ + (τ₊−τ₋) sin²x` removing the endpoint square roots.
fn oracle_actions(i: &Integrals<f64>, p: &ToyParams<f64>) -> (f64, f64) {
    let tp = turning_points(i, p).unwrap();
    let (lm, lp) = (tp.lambda_minus, tp.lambda_plus);
    let fl = |x: f64| {
        let (s, c) = x.sin_cos();
        let t = lm + (lp - lm) * s * s;
        p_tau_squared(t, Branch::Lambda, i, p).max(0.0).sqrt() * 2.0 * (lp - lm) * s * c
    };
    let jl = simpson(&fl, 0.0, PI / 2.0, 1e-13) / PI;
    let (nm, np) = (-p.coords.gamma, tp.nu_plus(p));
    let fnu = |x: f64| {
        // p_ν² ∝ 1/(ν+γ) near the equator, so integrate √(p_ν²(ν−ν₋)) instead
        let (s, c) = x.sin_cos();
        let s = s.max(1e-7);
        let d = (np - nm) * s * s;
        (p_tau_squared(nm + d, Branch::Nu, i, p).max(0.0) * d).sqrt() * 2.0 * (np - nm).sqrt() * c
    };
    let jn = 2.0 * simpson(&fnu, 0.0, PI / 2.0, 1e-13) / PI;
    (jl, jn)
}

#[test]
fn actions_match_adaptive_quadrature() {
    let p = reference_toy();
    let toy = toy();
    let mut r = rng(13);
    for _ in 0..5 {
        let i = integrals_from_phase(&random_bound_point(&mut r, &p), &p);
        let j = toy.actions(&i).unwrap();
        let (jl, jn) = oracle_actions(&i, &p);
        assert!((j[0] - jl).abs() < 1e-9 * (1.0 + jl), "J_lambda {} vs {jl}", j[0]);
        assert!((j[2] - jn).abs() < 1e-9 * (1.0 + jn), "J_nu {} vs {jn}", j[2]);
        assert_eq!(j[1], i.lz);
    }
}

#[test]
fn actions_vary_monotonically_with_energy() {
    let p = reference_toy();
    let toy = toy();
    let i = integrals_from_phase(&sample_point(), &p);
    let mut prev = toy.actions(&i).unwrap();
    for k in 1..6 {
        let j = toy.actions(&Integrals::new(i.e + 0.01 * k as f64, i.lz, i.i3)).unwrap();
        assert!(j[0] > prev[0]);
        // at fixed I₃ the vertical excursion shrinks as the orbit moves out
        assert!(j[2] < prev[2]);
        prev = j;
    }
}

#[test]
fn action_derivatives_match_finite_differences() {
    let p = reference_toy();
    let toy = toy();
    let i = integrals_from_phase(&sample_point(), &p);
    let (_, m) = toy.frequencies_and_djdi(&i).unwrap();
    let base = [i.e, i.i2(), i.i3];
    for col in 0..3 {
        let h = 1e-6 * base[col].abs().max(1e-3);
        let at = |d: f64| {
            let mut v = base;
            v[col] += d;
            toy.actions(&Integrals::new(v[0], (2.0 * v[1]).sqrt() * i.lz.signum(), v[2])).unwrap()
        };
        let (jp, jm) = (at(h), at(-h));
        for row in 0..3 {
            let fd = (jp[row] - jm[row]) / (2.0 * h);
            assert!((fd - m[row][col]).abs() < 1e-6 * (1.0 + fd.abs()), "[{row}][{col}] {fd} vs {}", m[row][col]);
        }
    }
    assert_eq!(m[1][0], 0.0);
    assert_eq!(m[1][2], 0.0);
    assert_eq!(m[1][1], 1.0 / i.lz);
}

#[test]
fn frequencies_match_integrated_orbit_spectrum() {
    let p = reference_toy();
    let toy = toy();
    let target = ToyTarget::new(p);
    let u0 = sample_point();
    let (omega, _) = toy.frequencies_and_djdi(&integrals_from_phase(&u0, &p)).unwrap();
    let opts = IntegratorOptions { sample_interval: Some(0.05), ..Default::default() };
    let duration = 600.0;
    let trace = integrate_orbit(&u0, &target, duration, &opts).unwrap();
    let lam: Vec<f64> = trace.points.iter().map(|u| staeckel_tori::coords::lambda_of(u.r, u.z, &p.coords)).collect();
    let z: Vec<f64> = trace.points.iter().map(|u| u.z).collect();
    let wl = spectral_peak(&trace.times, &lam, 0.7 * omega[0], 1.3 * omega[0]);
    let wz = spectral_peak(&trace.times, &z, 0.7 * omega[2], 1.3 * omega[2]);
    assert!((wl - omega[0]).abs() < 1e-4 * omega[0], "{wl} vs {}", omega[0]);
    assert!((wz - omega[2]).abs() < 1e-4 * omega[2], "{wz} vs {}", omega[2]);
    let wphi = (trace.points.last().unwrap().varphi - u0.varphi) / duration;
    assert!((wphi - omega[1]).abs() < 1e-3 * omega[1]);
}

#[test]
fn lambda_angle_vanishes_at_inner_turning_point() {
    let p = reference_toy();
    let toy = toy();
    let i = integrals_from_phase(&sample_point(), &p);
    let torus = toy.torus(i).unwrap();
    let st = torus.state_at(0.0, 0.9);
    let m = Meridional { lambda: st.lambda, s: st.s };
    let (r, z) = meridional_to_rz(&m, &p.coords);
    let (p_r, p_z) = momenta_from_meridional(r, z, st.p_lambda, st.p_s, &m, &p.coords);
    let theta = toy.angles(&PhasePoint::new(r, 0.0, z, p_r, i.lz, p_z)).unwrap();
    let (psi_l, _) = torus.phases(&MeridionalState::of(&PhasePoint::new(r, 0.0, z, p_r, i.lz, p_z), &p.coords));
    assert!(angle_diff(psi_l, 0.0).abs() < 1e-8);
    // ϑ_λ = 0 requires ψ_s = 0 as well; check the ψ_λ share is zero instead
    let st0 = torus.state_at(0.0, 0.0);
    let m0 = Meridional { lambda: st0.lambda, s: st0.s };
    let (r0, z0) = meridional_to_rz(&m0, &p.coords);
    let (pr0, pz0) = momenta_from_meridional(r0, z0, st0.p_lambda, st0.p_s, &m0, &p.coords);
    let th0 = toy.angles(&PhasePoint::new(r0, 0.0, z0, pr0, i.lz, pz0)).unwrap();
    assert!(angle_diff(th0[0], 0.0).abs() < 1e-10 && angle_diff(th0[2], 0.0).abs() < 1e-10);
    assert!(theta.iter().all(|t| t.is_finite()));
}

#[test]
fn reflection_through_meridian_negates_angles() {
    let p = reference_toy();
    let toy = toy();
    let mut r = rng(17);
    for _ in 0..10 {
        let u = random_bound_point(&mut r, &p);
        // (φ, z, p_R) → (−φ, −z, −p_R) sends ψ → −ψ in both phases
        let v = PhasePoint::new(u.r, -u.varphi, -u.z, -u.p_r, u.p_varphi, u.p_z);
        let (a, b) = (toy.angles(&u).unwrap(), toy.angles(&v).unwrap());
        for n in 0..3 {
            assert!(angle_diff(a[n], -b[n]).abs() < 1e-10, "component {n}: {} vs {}", a[n], b[n]);
        }
    }
}

#[test]
fn equatorial_reflection_shifts_vertical_angle_by_pi() {
    let p = reference_toy();
    let toy = toy();
    let mut r = rng(19);
    for _ in 0..10 {
        let u = random_bound_point(&mut r, &p);
        let v = PhasePoint::new(u.r, u.varphi, -u.z, u.p_r, u.p_varphi, -u.p_z);
        let (a, b) = (toy.angles(&u).unwrap(), toy.angles(&v).unwrap());
        assert!(angle_diff(a[0], b[0]).abs() < 1e-10);
        assert!(angle_diff(a[1], b[1]).abs() < 1e-10);
        assert!(angle_diff(a[2] + PI, b[2]).abs() < 1e-10);
    }
}

#[test]
fn angles_advance_linearly_along_toy_orbit() {
    let p = reference_toy();
    let toy = toy();
    let target = ToyTarget::new(p);
    let u0 = sample_point();
    let i0 = integrals_from_phase(&u0, &p);
    let (omega, _) = toy.frequencies_and_djdi(&i0).unwrap();
    let j0 = toy.actions(&i0).unwrap();
    let th0 = toy.angles(&u0).unwrap();
    let opts = IntegratorOptions { sample_interval: Some(0.2), ..Default::default() };
    let trace = integrate_orbit(&u0, &target, 10.0 * TAU / omega[1], &opts).unwrap();
    for (t, u) in trace.times.iter().zip(&trace.points) {
        let (th, j) = toy.angles_actions(u).unwrap();
        for n in 0..3 {
            assert!(angle_diff(th[n], th0[n] + omega[n] * t).abs() < 1e-5, "t = {t}, n = {n}");
            assert!((j[n] - j0[n]).abs() < 1e-8 * (1.0 + j0[n].abs()));
        }
    }
}

#[test]
fn forward_map_inverts_angle_action_map() {
    let p = reference_toy();
    let toy = toy();
    let mut r = rng(23);
    for _ in 0..1000 {
        let u = random_bound_point(&mut r, &p);
        let (th, j) = toy.angles_actions(&u).unwrap();
        let v = toy.forward(&th, &j).unwrap();
        let (a, b) = (u.to_array(), v.to_array());
        for k in 0..6 {
            let d = if k == 1 { angle_diff(a[k], b[k]) } else { a[k] - b[k] };
            assert!(d.abs() < 1e-8, "{u:?} -> {v:?}");
        }
    }
}

#[test]
fn zero_vertical_action_maps_to_equatorial_plane() {
    let toy = toy();
    for tn in [0.0, 1.0, 4.0] {
        let u = toy.forward(&[0.7, 0.2, tn], &[0.3, 0.5, 0.0]).unwrap();
        assert_eq!(u.z, 0.0);
        assert_eq!(u.p_z, 0.0);
    }
}

#[test]
fn forward_map_follows_the_flow() {
    let p = reference_toy();
    let toy = toy();
    let target = ToyTarget::new(p);
    let u0 = sample_point();
    let (th, j) = toy.angles_actions(&u0).unwrap();
    let (omega, _) = toy.frequencies_and_djdi(&integrals_from_phase(&u0, &p)).unwrap();
    let dt = 0.7;
    let moved: [f64; 3] = std::array::from_fn(|n| th[n] + omega[n] * dt);
    let predicted = toy.forward(&moved, &j).unwrap();
    let integrated = *integrate_orbit(&u0, &target, dt, &IntegratorOptions::default()).unwrap().points.last().unwrap();
    for (a, b) in predicted.to_array().iter().zip(integrated.to_array()) {
        assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()), "{predicted:?} vs {integrated:?}");
    }
}

#[test]
fn forward_rejects_unmappable_actions() {
    let toy = toy();
    assert!(toy.forward(&[0.0; 3], &[-0.1, 0.5, 0.2]).is_err());
    assert!(toy.forward(&[0.0; 3], &[0.1, 0.5, -0.2]).is_err());
    assert!(toy.forward(&[0.0; 3], &[0.1, 0.0, 0.2]).is_err());
}

#[test]
fn jacobian_matches_finite_differences() {
    let toy = toy();
    let u = sample_point();
    let jac = toy.jacobian(&u).unwrap();
    let a = u.to_array();
    for k in 0..6 {
        let h = 1e-6;
        let at = |d: f64| {
            let mut b = a;
            b[k] += d;
            let (th, j) = toy.angles_actions(&PhasePoint::from_array(b)).unwrap();
            [th[0], th[1], th[2], j[0], j[1], j[2]]
        };
        let (fp, fm) = (at(h), at(-h));
        for i in 0..6 {
            let d = if i < 3 { angle_diff(fp[i], fm[i]) } else { fp[i] - fm[i] };
            let fd = d / (2.0 * h);
            assert!((fd - jac.matrix[(i, k)]).abs() < 1e-5 * (1.0 + fd.abs()), "({i},{k}) {fd} vs {}", jac.matrix[(i, k)]);
        }
    }
    for k in 0..6 {
        assert_eq!(jac.matrix[(4, k)], if k == 4 { 1.0 } else { 0.0 });
    }
    assert!(!jac.is_ill_conditioned());
}

#[test]
fn inverse_block_recovers_unit_columns() {
    let toy = toy();
    let jac = toy.jacobian(&sample_point()).unwrap();
    let prod = jac.matrix * jac.du_dj;
    for i in 0..6 {
        for j in 0..3 {
            let e = if i == j + 3 { 1.0 } else { 0.0 };
            assert!((prod[(i, j)] - e).abs() < 1e-8);
        }
    }
}

fn worst_poisson_bracket_error(toy: &StaeckelToy) -> f64 {
    let p = reference_toy();
    let mut r = rng(29);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let a = toy.jacobian(&random_bound_point(&mut r, &p)).unwrap().matrix;
        // {f, g} = Σ ∂f/∂q ∂g/∂p − ∂f/∂p ∂g/∂q over (R, φ, z)
        for i in 0..6 {
            for j in 0..6 {
                let pb: f64 = (0..3).map(|k| a[(i, k)] * a[(j, k + 3)] - a[(i, k + 3)] * a[(j, k)]).sum();
                let e = if j == i + 3 { 1.0 } else if i == j + 3 { -1.0 } else { 0.0 };
                worst = worst.max((pb - e).abs());
            }
        }
    }
    worst
}

#[test]
fn angle_action_variables_are_canonical() {
    assert!(worst_poisson_bracket_error(&toy()) < 1e-10);
}

#[test]
fn near_focus_orbit_stays_canonical() {
    // pericentre R ≈ 0.37 on an orbit out to λ₊ ≈ 10: (λ₋+α)/(λ₊−λ₋) ≈ 4e-3
    let u = PhasePoint::new(0.37430345696304484, 4.57, -0.08437674045210541, -0.2022848316874678, -0.787417740182426, 0.0532834667483697);
    let a = toy().jacobian(&u).unwrap().matrix;
    for i in 0..6 {
        for j in 0..6 {
            let pb: f64 = (0..3).map(|k| a[(i, k)] * a[(j, k + 3)] - a[(i, k + 3)] * a[(j, k)]).sum();
            let e = if j == i + 3 { 1.0 } else if i == j + 3 { -1.0 } else { 0.0 };
            assert!((pb - e).abs() < 1e-10, "{{{i},{j}}} = {pb}");
        }
    }
}

#[test]
fn angles_near_turning_points_match_high_resolution() {
    // both turning points within ~1.5e-4 of the point
    let u = PhasePoint::new(0.36024109581008595, 0.2638100726857781, 0.5319338654433569, -0.023772353665422186, 0.6565546711957286, -0.05876980658919795);
    let (a, ja) = toy().angles_actions(&u).unwrap();
    let (b, jb) = StaeckelToy::new(reference_toy(), 256).unwrap().angles_actions(&u).unwrap();
    for n in 0..3 {
        assert!(angle_diff(a[n], b[n]).abs() < 1e-12, "{a:?} vs {b:?}");
        assert!((ja[n] - jb[n]).abs() < 1e-12);
    }
}

#[test]
fn hamiltonian_works_in_single_precision() {
    let p = reference_toy();
    let u = sample_point();
    let pf: ToyParams<f32> = p.cast();
    let uf = staeckel_tori::coords::PhasePoint::<f32>::new(u.r as f32, u.varphi as f32, u.z as f32, u.p_r as f32, u.p_varphi as f32, u.p_z as f32);
    let (e32, e64) = (toy_hamiltonian(&uf, &pf), toy_hamiltonian(&u, &p));
    assert!(((e32 as f64) - e64).abs() < 1e-5);
}
