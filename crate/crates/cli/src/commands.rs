use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;
use staeckel_tori::anglerec::{solve_model_angles, AngleSolveOptions};
use staeckel_tori::diagnostics::*;
use staeckel_tori::orbit::{integrate_orbit, IntegratorOptions, OrbitTrace};
use staeckel_tori::target::{fit_toy_params, TargetHamiltonian};
use staeckel_tori::torusfit::{fit_torus, torus_point, TorusModel};
use staeckel_tori::{StaeckelToy, ToyParams};
use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use crate::config::{self, RunConfig};
use crate::output::{io_err, num, read_csv, Run};
use crate::plot::{render, Figure, Series, Style};
use crate::CliError;

const MODEL: &str = "model.json";

pub fn run(command: &'static str, config_path: &Path) -> Result<(), CliError> {
    let loaded = config::load(config_path)?;
    let cfg = loaded.config;
    fs::create_dir_all(&cfg.output.dir).map_err(|e| io_err(&cfg.output.dir, e))?;
    let run = Run { command, config_text: loaded.text, dir: cfg.output.dir.clone() };
    match command {
        "fit-params" => fit_params(&cfg, &run),
        "fit-torus" => fit_torus_cmd(&cfg, &run),
        "recover-angles" => recover_angles(&cfg, &run),
        "section" => section(&cfg, &run),
        "trace" => trace(&cfg, &run),
        "report" => report(&run),
        _ => unreachable!("unknown command {command}"),
    }
}

/// Toy parameters from the configuration, fitting them first if requested.
fn toy_params(cfg: &RunConfig) -> Result<ToyParams, CliError> {
    match cfg.toy_params()? {
        Some(p) => Ok(p),
        None => {
            // the toy-staeckel target never reaches this branch (validated)
            let placeholder = ToyParams::new(-0.5, -0.1, 1.0)?;
            let fit = fit_toy_params(cfg.target(&placeholder).as_ref(), &cfg.toy.region, &cfg.lm)?;
            Ok(fit.params)
        }
    }
}

fn fit_params(cfg: &RunConfig, run: &Run) -> Result<(), CliError> {
    let seed = match cfg.toy_params()? {
        Some(p) => p,
        None => ToyParams::new(-0.5, -0.1, 1.0)?,
    };
    let target = cfg.target(&seed);
    let fit = fit_toy_params(target.as_ref(), &cfg.toy.region, &cfg.lm)?;
    let p = fit.params;
    let doc = json!({
        "alpha": p.coords.alpha,
        "gamma": p.coords.gamma,
        "rho0": p.rho0,
        "offset": fit.offset,
        "chi2": fit.chi2,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "region": cfg.toy.region,
        "target": target.name(),
        "run": run.json(),
    });
    let path = run.write_json("toy_params.json", &pretty(&doc)?)?;
    println!(
        "alpha = {:.6}  gamma = {:.6}  rho0 = {:.6}  (chi2 {:.3e}, converged {})",
        p.coords.alpha, p.coords.gamma, p.rho0, fit.chi2, fit.converged
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn pretty(v: &serde_json::Value) -> Result<String, CliError> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Io(e.to_string()))
}

fn fit_torus_cmd(cfg: &RunConfig, run: &Run) -> Result<(), CliError> {
    let params = toy_params(cfg)?;
    let toy = StaeckelToy::new(params, cfg.toy.quadrature_nodes)?;
    let target = cfg.target(&params);
    let mut model = fit_torus(cfg.torus.actions, cfg.waves(), cfg.grid, target.as_ref(), &toy, &cfg.lm)?;
    model.run = Some(run.json());
    let fit = model.fit.expect("fit metadata is set by fit_torus");
    let path = save_model(&model, run)?;
    write_coefficients(&model, run)?;
    println!(
        "{} waves, grid {}x{}: sigma(H)/|H| {:.3e} -> {:.3e} ({:.1}x) after {} iterations",
        model.waves.len(),
        cfg.grid.n_lambda,
        cfg.grid.n_nu,
        fit.scatter_initial,
        fit.scatter,
        fit.scatter_initial / fit.scatter,
        fit.iterations
    );
    if !fit.converged {
        eprintln!("warning: the fit stopped at the iteration limit before converging");
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn save_model(model: &TorusModel, run: &Run) -> Result<std::path::PathBuf, CliError> {
    run.write_json(MODEL, &model.to_json()?)
}

fn load_model(run: &Run) -> Result<(TorusModel, StaeckelToy), CliError> {
    let path = run.path(MODEL);
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Input(format!("{} ({e}); run fit-torus first", path.display())))?;
    let model = TorusModel::from_json(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let toy = model.toy.toy()?;
    Ok((model, toy))
}

fn target_for(cfg: &RunConfig, toy: &StaeckelToy) -> Box<dyn TargetHamiltonian> {
    cfg.target(toy.params())
}

fn write_coefficients(model: &TorusModel, run: &Run) -> Result<(), CliError> {
    let rows = model.waves.waves().iter().zip(&model.coefficients).map(|(k, s)| {
        vec![k[0].to_string(), k[1].to_string(), num(*s), num((k[0] as f64 * s).abs()), num((k[1] as f64 * s).abs())]
    });
    run.write_csv("coefficients.csv", &["k_lambda", "k_nu", "S", "abs_k_lambda_S", "abs_k_nu_S"], rows)?;
    Ok(())
}

fn recover_angles(cfg: &RunConfig, run: &Run) -> Result<(), CliError> {
    let (mut model, toy) = load_model(run)?;
    let target = target_for(cfg, &toy);
    let res = solve_model_angles(&model, &cfg.grid, target.as_ref(), &toy, &AngleSolveOptions::default())?;
    res.apply_to(&mut model);
    model.run = Some(run.json());
    let path = save_model(&model, run)?;
    println!(
        "omega = ({:.8}, {:.8}, {:.8}), residual norms {:.2e} {:.2e} {:.2e}, condition {:.2e}",
        res.omega[0],
        res.omega[1],
        res.omega[2],
        res.residual_norms[0],
        res.residual_norms[1],
        res.residual_norms[2],
        res.condition_estimate
    );
    println!("wrote {}", path.display());
    Ok(())
}

/// Orbits started on the model torus at seeded toy angles, integrated in
/// parallel and returned in start order.
fn torus_orbits(cfg: &RunConfig, model: &TorusModel, toy: &StaeckelToy) -> Result<Vec<OrbitTrace>, CliError> {
    let omega = model
        .omega
        .ok_or_else(|| CliError::Input("model.json has no frequencies; run recover-angles first".into()))?;
    let period = TAU / omega[0].min(omega[2]);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.output.seed);
    let starts: Vec<[f64; 3]> = (0..cfg.output.orbits).map(|_| [rng.gen_range(0.0..TAU), 0.0, rng.gen_range(0.0..TAU)]).collect();
    let target = target_for(cfg, toy);
    let opts = IntegratorOptions { sample_interval: Some(period / cfg.output.samples_per_period as f64), ..Default::default() };
    let duration = cfg.output.periods * period;
    starts
        .par_iter()
        .map(|th| {
            let u = torus_point(th, model, toy)?;
            Ok(integrate_orbit(&u, target.as_ref(), duration, &opts)?)
        })
        .collect()
}

fn section(cfg: &RunConfig, run: &Run) -> Result<(), CliError> {
    let (model, toy) = load_model(run)?;
    let pts = torus_section(&model, &toy, cfg.output.section_points)?;
    let rows = pts.iter().map(|p| vec![num(p.theta[0]), num(p.theta[2]), num(p.r), num(p.p_r)]);
    let a = run.write_csv("torus_section.csv", &["theta_lambda", "theta_nu", "R", "p_R"], rows)?;
    let traces = torus_orbits(cfg, &model, &toy)?;
    let rows = traces
        .iter()
        .enumerate()
        .flat_map(|(i, tr)| tr.section.iter().map(move |s| vec![i.to_string(), num(s.t), num(s.r), num(s.p_r)]));
    let b = run.write_csv("section.csv", &["orbit", "t", "R", "p_R"], rows)?;
    let crossings: usize = traces.iter().map(|t| t.section.len()).sum();
    println!("{} torus section points, {crossings} orbit crossings", pts.len());
    println!("wrote {} and {}", a.display(), b.display());
    Ok(())
}

fn trace(cfg: &RunConfig, run: &Run) -> Result<(), CliError> {
    let (model, toy) = load_model(run)?;
    let target = target_for(cfg, &toy);
    let traces = torus_orbits(cfg, &model, &toy)?;
    let omega = model.omega.expect("checked by torus_orbits");
    let per_orbit: Vec<_> = traces
        .par_iter()
        .map(|tr| -> Result<_, CliError> {
            let dj = trace_actions(&model, &toy, tr)?;
            let dw = trace_frequencies(&model, &toy, target.as_ref(), tr)?;
            let local = local_energy_residuals(&model, &toy, target.as_ref(), tr)?;
            let th = trace_angles(&model, &toy, tr)?;
            Ok((dj, dw, local, th))
        })
        .collect::<Result<_, _>>()?;

    let mut action_rows = Vec::new();
    let mut freq_rows = Vec::new();
    let mut angle_rows = Vec::new();
    let mut summary = Vec::new();
    for (i, ((dj, dw, local, th), tr)) in per_orbit.iter().zip(&traces).enumerate() {
        let id = i.to_string();
        for s in dj {
            action_rows.push(vec![id.clone(), num(s.t), num(s.dj[0]), num(s.dj[1]), num(s.dj[2])]);
        }
        for (s, e) in dw.iter().zip(local) {
            freq_rows.push(vec![id.clone(), num(s.t), num(s.domega[0]), num(s.domega[1]), num(s.domega[2]), num(*e)]);
        }
        for s in th {
            angle_rows.push(vec![id.clone(), num(s.t), num(s.theta[0]), num(s.theta[1]), num(s.theta[2])]);
        }
        let t: Vec<f64> = th.iter().map(|s| s.t).collect();
        let max_dj = |c: usize| dj.iter().map(|s| s.dj[c].abs()).fold(0.0, f64::max);
        let trend = |c: usize| fit_line(&t, &dj.iter().map(|s| s.dj[c]).collect::<Vec<_>>()).map(|l| l.slope);
        let lines = (0..3)
            .map(|c| fit_line(&t, &th.iter().map(|s| s.theta[c]).collect::<Vec<_>>()))
            .collect::<Result<Vec<_>, _>>()?;
        let dw_mag: Vec<f64> = dw.iter().map(|s| s.domega[0].hypot(s.domega[2])).collect();
        let coincidence = top_decile_coincidence(&dw_mag, local)?;
        summary.push(vec![
            id,
            num(max_dj(0)),
            num(max_dj(2)),
            num(trend(0)?),
            num(trend(2)?),
            num(lines[0].slope),
            num(lines[1].slope),
            num(lines[2].slope),
            num(lines.iter().map(|l| l.max_residual).fold(0.0, f64::max)),
            num(coincidence),
            num(tr.max_relative_energy_drift()),
        ]);
        println!(
            "orbit {i}: max|dJ| ({:.2e}, {:.2e}), angle slopes / omega ({:.4}, {:.4}, {:.4}), coincidence {:.2}",
            max_dj(0),
            max_dj(2),
            lines[0].slope / omega[0],
            lines[1].slope / omega[1],
            lines[2].slope / omega[2],
            coincidence
        );
    }
    run.write_csv("trace_actions.csv", &["orbit", "t", "dJ_lambda", "dJ_phi", "dJ_nu"], action_rows)?;
    run.write_csv(
        "trace_freq.csv",
        &["orbit", "t", "domega_lambda", "domega_phi", "domega_nu", "energy_residual"],
        freq_rows,
    )?;
    run.write_csv("trace_angles.csv", &["orbit", "t", "theta_lambda", "theta_phi", "theta_nu"], angle_rows)?;
    run.write_csv(
        "trace_summary.csv",
        &[
            "orbit",
            "max_abs_dJ_lambda",
            "max_abs_dJ_nu",
            "dJ_lambda_trend",
            "dJ_nu_trend",
            "theta_lambda_slope",
            "theta_phi_slope",
            "theta_nu_slope",
            "max_angle_residual",
            "top_decile_coincidence",
            "max_relative_energy_drift",
        ],
        summary,
    )?;
    println!("wrote trace_actions.csv, trace_freq.csv, trace_angles.csv, trace_summary.csv in {}", run.dir.display());
    Ok(())
}

/// Splits rows `(orbit, t, …)` into one series per orbit for column `col`.
fn per_orbit(rows: &[Vec<f64>], col: usize, f: impl Fn(&[f64]) -> f64) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for r in rows {
        let id = r[0] as usize;
        while out.len() <= id {
            out.push(Series { label: format!("orbit {}", out.len()), points: Vec::new() });
        }
        out[id].points.push((r[1], if col == usize::MAX { f(r) } else { r[col] }));
    }
    out
}

fn report(run: &Run) -> Result<(), CliError> {
    let (model, _) = load_model(run)?;
    write_coefficients(&model, run)?;
    let mut written = vec!["coefficients.csv".to_string()];
    let mut emit = |name: &str, fig: Figure, series: Vec<Series>| -> Result<(), CliError> {
        run.write_svg(name, &render(&fig, &series)?)?;
        written.push(name.to_string());
        Ok(())
    };

    let mag = |c: usize| Series {
        label: if c == 0 { "against k_lambda".into() } else { "against k_nu".into() },
        points: model.waves.waves().iter().zip(&model.coefficients).map(|(k, s)| (k[c] as f64, s.abs())).collect(),
    };
    emit(
        "coefficients.svg",
        Figure { title: "Fourier coefficients |S_k|", x_label: "wave number", y_label: "|S_k|", style: Style::Points, log_y: true },
        vec![mag(0), mag(1)],
    )?;

    let load = |name: &str| -> Result<Option<Vec<Vec<f64>>>, CliError> {
        let path = run.path(name);
        if path.exists() {
            Ok(Some(read_csv(&path)?.1))
        } else {
            Ok(None)
        }
    };
    if let (Some(torus), Some(orbits)) = (load("torus_section.csv")?, load("section.csv")?) {
        let mut series = vec![Series { label: "orbits".into(), points: orbits.iter().map(|r| (r[2], r[3])).collect() }];
        series.push(Series { label: "model torus".into(), points: torus.iter().map(|r| (r[2], r[3])).collect() });
        emit(
            "section.svg",
            Figure { title: "Section z = 0, p_z > 0", x_label: "R", y_label: "p_R", style: Style::Points, log_y: false },
            series,
        )?;
    }
    if let Some(rows) = load("trace_actions.csv")? {
        for (c, name, label) in [(2, "trace_dJ_lambda.svg", "dJ_lambda"), (4, "trace_dJ_nu.svg", "dJ_nu")] {
            let title = format!("{label} along orbits");
            emit(name, Figure { title: &title, x_label: "t", y_label: label, style: Style::Lines, log_y: false }, per_orbit(&rows, c, |_| 0.0))?;
        }
    }
    if let Some(rows) = load("trace_freq.csv")? {
        for (c, name, label) in [(2, "trace_domega_lambda.svg", "domega_lambda"), (4, "trace_domega_nu.svg", "domega_nu")] {
            let title = format!("{label} along orbits");
            emit(name, Figure { title: &title, x_label: "t", y_label: label, style: Style::Lines, log_y: false }, per_orbit(&rows, c, |_| 0.0))?;
        }
    }
    if let (Some(rows), Some(omega)) = (load("trace_angles.csv")?, model.omega) {
        let series = per_orbit(&rows, usize::MAX, |r| r[2] - omega[0] * r[1]);
        emit(
            "trace_theta_lambda.svg",
            Figure { title: "theta_lambda - omega_lambda t", x_label: "t", y_label: "rad", style: Style::Lines, log_y: false },
            series,
        )?;
    }
    println!("wrote {} in {}", written.join(", "), run.dir.display());
    Ok(())
}
