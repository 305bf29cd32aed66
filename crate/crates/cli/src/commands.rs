use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use robust4ws_core::analysis::{damping_ratio, damping_surface, eig2, spectral_abscissa};
use robust4ws_core::bench::{
    benchmark_suite, derive_seed, generate_reference, run_closed_loop, write_log_csv, BenchController, Maneuver, ManeuverSpec, Mode,
};
use robust4ws_core::config::{portrait_axis, RunConfig};
use robust4ws_core::model::{
    ackermann_input_map, generalized_plant, linearize, nonlinear_derivatives, ChassisState, ControlInput, Disturbance,
};
use robust4ws_core::synthesis::{
    certify, export_controller, parse_controller, synthesize_pole_placement, synthesize_robust, CertificationReport,
    ControllerFile, ControllerKind, RobustController,
};
use robust4ws_core::{PolytopicPlant, VehicleParams};
use serde_json::{json, Value};

use crate::{CliError, Format};

pub struct Context {
    pub cfg: RunConfig,
    pub format: Format,
}

pub enum GainSource {
    Robust,
    Baseline,
    OpenLoop,
    File(PathBuf),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Compute(format!("{}: {e}", path.display()))
}

fn out_dir(ctx: &Context) -> Result<PathBuf, CliError> {
    let dir = ctx.cfg.output.dir.clone();
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    Ok(dir)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn emit(s: &str) {
    print!("{s}");
    if !s.ends_with('\n') {
        println!();
    }
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json values always serialize")
}

fn matrix_rows(k: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..k.nrows()).map(|r| k.row(r).iter().copied().collect()).collect()
}

fn nominal_plant(p: &VehicleParams) -> Result<robust4ws_core::GeneralizedPlant, CliError> {
    Ok(generalized_plant(&linearize(p, &p.nominal_friction())?))
}

pub fn analyze(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let p = cfg.vehicle_params()?;
    let dir = out_dir(ctx)?;

    let surface = damping_surface(&p, &cfg.analysis.mu_grid, &cfg.analysis.v_grid)?;
    let mut damping = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Compute(e.to_string());
    damping.write_record(["mu", "v", "zeta"]).map_err(csv_err)?;
    for (i, mu) in surface.mu.iter().enumerate() {
        for (j, v) in surface.v.iter().enumerate() {
            let z = surface.zeta[i][j].as_ref().map_or(f64::NAN, |z| *z);
            damping.write_record([mu.to_string(), v.to_string(), z.to_string()]).map_err(csv_err)?;
        }
    }
    let damping = String::from_utf8(damping.into_inner().map_err(|e| CliError::Compute(e.to_string()))?)
        .expect("csv output is utf-8");
    write_file(&dir.join("damping.csv"), &damping)?;

    // Phase portrait of the nonlinear model, straight wheels, nominal friction.
    let a = &cfg.analysis;
    let betas = portrait_axis(a.portrait_beta, a.portrait_points);
    let rates = portrait_axis(a.portrait_yaw_rate, a.portrait_points);
    let mut portrait = csv::Writer::from_writer(Vec::new());
    portrait.write_record(["beta", "psi_dot", "beta_dot", "psi_ddot"]).map_err(csv_err)?;
    for &beta in &betas {
        for &psi_dot in &rates {
            let s = ChassisState { beta, psi_dot, ..ChassisState::cruising(p.v) };
            let d = nonlinear_derivatives(&s, &ControlInput::default(), &Disturbance::default(), &p.nominal_friction(), &p)?;
            portrait
                .write_record([beta, psi_dot, d.beta_dot, d.psi_ddot].map(|x| x.to_string()))
                .map_err(csv_err)?;
        }
    }
    let portrait = String::from_utf8(portrait.into_inner().map_err(|e| CliError::Compute(e.to_string()))?)
        .expect("csv output is utf-8");
    write_file(&dir.join("portrait.csv"), &portrait)?;

    let lp = linearize(&p, &p.nominal_friction())?;
    let eig = eig2(&lp.a);
    let poly = PolytopicPlant::build(&p, &cfg.uncertainty)?;
    let abscissae: Vec<f64> = poly.vertices.iter().map(|v| spectral_abscissa(&v.a_p)).collect();
    let worst = abscissae.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best = abscissae.iter().copied().fold(f64::INFINITY, f64::min);
    let zetas: Vec<Option<f64>> = eig.iter().map(|e| damping_ratio(e).ok()).collect();
    let stable = eig.iter().all(|e| e.lambda_re < 0.0);

    match ctx.format {
        Format::Json => emit(&pretty(&json!({
            "speed": p.v,
            "mu_nominal": p.mu_nominal,
            "a": [[lp.a[(0, 0)], lp.a[(0, 1)]], [lp.a[(1, 0)], lp.a[(1, 1)]]],
            "eigenvalues": eig.iter().map(|e| [e.lambda_re, e.lambda_im]).collect::<Vec<_>>(),
            "damping": zetas,
            "stable": stable,
            "vertex_abscissa": { "min": best, "max": worst },
            "grid_points": surface.mu.len() * surface.v.len(),
        }))),
        Format::Csv => emit(&damping),
        Format::Text => {
            let mut s = String::new();
            s.push_str(&format!("nominal operating point: mu = {}, v = {} m/s\n", p.mu_nominal, p.v));
            for (e, z) in eig.iter().zip(&zetas) {
                let z = z.map_or("undefined".to_string(), |z| format!("{z:.4}"));
                s.push_str(&format!("  lambda = {:+.6} {:+.6}i   zeta = {z}\n", e.lambda_re, e.lambda_im));
            }
            s.push_str(&format!("open loop {}\n", if stable { "stable" } else { "unstable" }));
            s.push_str(&format!("vertex spectral abscissa in [{best:.4}, {worst:.4}]\n"));
            s.push_str(&format!("damping grid: {} x {} points\n", surface.mu.len(), surface.v.len()));
            emit(&s);
        }
    }
    Ok(())
}

fn certification_json(r: &CertificationReport) -> Value {
    json!({
        "alpha": r.alpha,
        "cone_angle": r.cone_angle,
        "worst_hinf": r.worst_hinf,
        "worst_h2": r.worst_h2,
        "worst_real": r.worst_real,
        "region_ok": r.region_ok,
        "norms_ok": r.norms_ok,
        "region_violations": r.region_violations(),
        "vertices": r.vertices.iter().map(|v| json!({
            "rho": v.rho,
            "poles": v.poles.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
            "in_alpha": v.in_alpha,
            "in_cone": v.in_cone,
            "hinf": v.hinf,
            "h2": v.h2,
        })).collect::<Vec<_>>(),
    })
}

fn synth_json(c: &RobustController, r: &CertificationReport) -> Value {
    let meta = c.meta.as_ref().map(|m| {
        json!({
            "iterations": m.iterations,
            "newton_steps": m.newton_steps,
            "objective": m.objective,
            "n_vars": m.n_vars,
            "n_blocks": m.n_blocks,
            "kkt": [m.kkt.primal, m.kkt.dual, m.kkt.complementarity],
        })
    });
    json!({
        "kind": c.kind.as_str(),
        "k": matrix_rows(&c.k),
        "gamma1": c.gamma1,
        "gamma2": c.gamma2,
        "certified": c.certified,
        "solver": meta,
        "certification": certification_json(r),
    })
}

fn synth_text(c: &RobustController, r: &CertificationReport) -> String {
    let mut s = format!("controller: {}\nK =\n", c.kind.as_str());
    for row in matrix_rows(&c.k) {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:+.6e}")).collect();
        s.push_str(&format!("  [{}]\n", cells.join(", ")));
    }
    if let (Some(g1), Some(g2)) = (c.gamma1, c.gamma2) {
        s.push_str(&format!("gamma1 (H-inf) = {g1:.6e}\ngamma2 (H2)    = {g2:.6e}\n"));
    }
    s.push_str(&format!(
        "vertices: worst H-inf {:.6e}, worst H2 {:.6e}, worst Re(lambda) {:.4}\n",
        r.worst_hinf, r.worst_h2, r.worst_real
    ));
    let viol = r.region_violations();
    if viol.is_empty() {
        s.push_str(&format!("all {} vertices inside the pole region\n", r.vertices.len()));
    } else {
        s.push_str(&format!("pole region violated at vertices {viol:?}\n"));
    }
    s.push_str(&format!("certified: {}\n", c.certified));
    s
}

fn baseline_controller(ctx: &Context, p: &VehicleParams) -> Result<RobustController, CliError> {
    Ok(synthesize_pole_placement(&nominal_plant(p)?, ctx.cfg.baseline.alpha)?)
}

pub fn synth(ctx: &Context, baseline: bool, ackermann: bool) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let p = cfg.vehicle_params()?;
    let dir = out_dir(ctx)?;
    let mut poly = PolytopicPlant::build(&p, &cfg.uncertainty)?;
    if ackermann {
        poly = poly.restrict_inputs(&ackermann_input_map())?;
    }
    let (c, report, name) = if baseline {
        let c = baseline_controller(ctx, &p)?;
        let report = certify(&c.k, &PolytopicPlant::build(&p, &cfg.uncertainty)?, &cfg.synthesis, None)?;
        (c, report, "baseline-controller.txt")
    } else {
        let mut c = synthesize_robust(&poly, &cfg.synthesis)?;
        let report = c.certification.clone().expect("robust synthesis always certifies");
        if ackermann {
            // export the gain on the physical wheels
            c.k = ackermann_input_map() * &c.k;
        }
        (c, report, if ackermann { "ackermann-controller.txt" } else { "controller.txt" })
    };
    write_file(&dir.join(name), &export_controller(&ControllerFile::from(&c)))?;
    let json = synth_json(&c, &report);
    write_file(&dir.join(name.replace("controller.txt", "certification.json")), &pretty(&json))?;
    match ctx.format {
        Format::Json => emit(&pretty(&json)),
        Format::Text => emit(&synth_text(&c, &report)),
        Format::Csv => {
            let mut s = String::new();
            for row in matrix_rows(&c.k) {
                let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
                s.push_str(&cells.join(","));
                s.push('\n');
            }
            emit(&s);
        }
    }
    Ok(())
}

fn bench_controllers(ctx: &Context, p: &VehicleParams) -> Result<Vec<BenchController>, CliError> {
    let poly = PolytopicPlant::build(p, &ctx.cfg.uncertainty)?;
    let robust = synthesize_robust(&poly, &ctx.cfg.synthesis)?;
    let baseline = baseline_controller(ctx, p)?;
    Ok(vec![
        BenchController { name: "open-loop".into(), k: DMatrix::zeros(4, 2), mode: Mode::OpenLoop },
        BenchController { name: "non-robust".into(), k: baseline.k, mode: Mode::Feedback },
        BenchController { name: "robust".into(), k: robust.k, mode: Mode::Feedback },
    ])
}

fn parse_maneuver(name: &str) -> Result<Maneuver, CliError> {
    name.parse::<Maneuver>().map_err(CliError::from)
}

/// Configured program for `m`, or its default at the bench speed.
fn spec_for(cfg: &RunConfig, m: Maneuver, v: f64) -> Result<ManeuverSpec, CliError> {
    let spec = cfg
        .bench
        .programs
        .iter()
        .find(|s| s.name == m)
        .cloned()
        .unwrap_or_else(|| ManeuverSpec::default_for(m, cfg.bench.speed.unwrap_or(v)));
    spec.validate()?;
    Ok(spec)
}

pub fn bench(ctx: &Context, seed: Option<u64>, maneuver: Option<&str>) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let p = cfg.vehicle_params()?;
    let specs = match maneuver {
        Some(name) => vec![spec_for(cfg, parse_maneuver(name)?, p.v)?],
        None => cfg.maneuver_specs(p.v)?,
    };
    let seeds = seed.map_or_else(|| cfg.bench.seeds.clone(), |s| vec![s]);
    let dir = out_dir(ctx)?;
    let controllers = bench_controllers(ctx, &p)?;
    let (table, records) = benchmark_suite(&controllers, &specs, &seeds, &p, &cfg.schedules(), &cfg.bench.sim)?;

    let runs = dir.join("runs");
    fs::create_dir_all(&runs).map_err(|e| io_err(&runs, e))?;
    for r in &records {
        match &r.outcome {
            Ok(res) => {
                let path = runs.join(format!("{}_{}_seed{}.csv", r.maneuver.name(), r.controller, r.seed));
                let f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
                write_log_csv(std::io::BufWriter::new(f), &res.log)?;
            }
            Err(msg) => log::warn!("{} / {} / seed {}: {msg}", r.maneuver, r.controller, r.seed),
        }
    }
    let json = table.to_json()?;
    write_file(&dir.join("bench.json"), &json)?;
    write_file(&dir.join("bench.txt"), &table.to_text())?;
    match ctx.format {
        Format::Json => emit(&json),
        Format::Text => emit(&table.to_text()),
        Format::Csv => {
            let mut s = String::from("maneuver,controller,median\n");
            for row in &table.rows {
                for c in &table.controllers {
                    let m = row.cells.get(c).and_then(|c| c.median).map_or(String::new(), |m| m.to_string());
                    s.push_str(&format!("{},{c},{m}\n", row.maneuver.name()));
                }
            }
            emit(&s);
        }
    }
    Ok(())
}

pub fn simulate(ctx: &Context, maneuver: &str, seed: Option<u64>, source: GainSource) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let p = cfg.vehicle_params()?;
    let m = parse_maneuver(maneuver)?;
    let spec = spec_for(cfg, m, p.v)?;
    let seed = seed.unwrap_or(cfg.bench.seeds[0]);
    let (name, k, mode) = match source {
        GainSource::OpenLoop => ("open-loop".to_string(), DMatrix::zeros(4, 2), Mode::OpenLoop),
        GainSource::Baseline => ("non-robust".to_string(), baseline_controller(ctx, &p)?.k, Mode::Feedback),
        GainSource::Robust => {
            let poly = PolytopicPlant::build(&p, &cfg.uncertainty)?;
            ("robust".to_string(), synthesize_robust(&poly, &cfg.synthesis)?.k, Mode::Feedback)
        }
        GainSource::File(path) => {
            let text = fs::read_to_string(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let file = parse_controller(&text)?;
            if file.k.shape() != (4, 2) {
                return Err(CliError::Config(format!("controller gain must be 4x2, got {:?}", file.k.shape())));
            }
            let (name, mode) = match file.kind {
                ControllerKind::OpenLoop => ("open-loop", Mode::OpenLoop),
                ControllerKind::PolePlacement => ("non-robust", Mode::Feedback),
                ControllerKind::Robust => ("robust", Mode::Feedback),
            };
            (name.to_string(), file.k, mode)
        }
    };
    let reference = generate_reference(&spec, &p, &cfg.bench.sim)?;
    let run_seed = derive_seed(m.name(), &name, seed);
    let res = run_closed_loop(&reference, &k, &p, &cfg.schedules(), mode, &cfg.bench.sim, run_seed)?;

    let dir = out_dir(ctx)?;
    let path = dir.join(format!("sim_{}_{name}_seed{seed}.csv", m.name()));
    let mut buf = Vec::new();
    write_log_csv(&mut buf, &res.log)?;
    let mut f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
    f.write_all(&buf).map_err(|e| io_err(&path, e))?;

    match ctx.format {
        Format::Json => emit(&pretty(&json!({
            "maneuver": m.name(),
            "controller": name,
            "seed": seed,
            "rmse": res.rmse,
            "epsilon": res.epsilon,
            "max_abs_beta": res.max_abs_beta,
            "samples": res.log.len(),
            "log": path.display().to_string(),
        }))),
        Format::Csv => emit(&String::from_utf8(buf).expect("csv output is utf-8")),
        Format::Text => emit(&format!(
            "{} / {name} / seed {seed}\n  rmse x {:.4e} m, y {:.4e} m, psi {:.4e} rad\n  epsilon {:.4e}\n  max |beta| {:.4e} rad\n  log {}\n",
            m.title(),
            res.rmse[0],
            res.rmse[1],
            res.rmse[2],
            res.epsilon,
            res.max_abs_beta,
            path.display()
        )),
    }
    Ok(())
}
