//! Executes a validated scenario stage by stage and records every artifact.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use spinqe::skew_product::{liouville_average, sample_ensemble};
use spinqe::spectra::{
    build_pauli_operator_with, counterexample_report, egorov_check, s2_variance, solve_window, szego_average,
    EgorovOptions, EigenSystem, ErgodicSettings, SpectralWindow,
};
use spinqe::symbol::named_symbol;
use spinqe::weyl::{weyl_quantize_with, QuantizeOptions};
use spinqe::wigner::{dictionary_targets, equidistribution_against, husimi_transform, wigner_transform};
use spinqe::{
    ergodicity_report, integrate_flow, integrate_spin_transport, GridSpec, HamiltonianModel, MatrixSymbol, PauliAxis,
    PhasePoint, ShellSampler, StepControl, Tolerance, Trajectory, WeylOperator,
};

use crate::config::{FlowConfig, ScenarioConfig};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: spinqe::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("output directory {0} holds files from another source; choose an empty directory")]
    Dirty(PathBuf),
}

#[derive(Clone, Debug, Serialize)]
pub struct Artifact {
    pub path: String,
    pub operation: String,
    pub parameters: Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub stage: String,
    pub name: String,
    pub value: f64,
    pub requirement: String,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out: PathBuf,
    pub strict: bool,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub out: PathBuf,
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

struct Sink {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Sink {
    fn add(&mut self, name: &str, operation: &str, parameters: Value) -> PathBuf {
        self.artifacts.push(Artifact {
            path: name.to_string(),
            operation: operation.to_string(),
            parameters,
        });
        self.dir.join(name)
    }

    fn create(&mut self, name: &str, operation: &str, parameters: Value) -> Result<BufWriter<File>, RunError> {
        let path = self.add(name, operation, parameters);
        File::create(&path).map(BufWriter::new).map_err(|source| RunError::Io { path, source })
    }

    fn json<T: Serialize>(&mut self, name: &str, operation: &str, parameters: Value, v: &T) -> Result<(), RunError> {
        let path = self.add(name, operation, parameters);
        let text = serde_json::to_string_pretty(v).expect("serializable report");
        fs::write(&path, text + "\n").map_err(|source| RunError::Io { path, source })
    }
}

fn stage<T>(stage: &'static str, r: spinqe::Result<T>) -> Result<T, RunError> {
    r.map_err(|source| RunError::Stage { stage, source })
}

fn csv_writer<W: std::io::Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(w)
}

fn csv_err(stage_name: &'static str, e: csv::Error) -> RunError {
    RunError::Stage {
        stage: stage_name,
        source: e.into(),
    }
}

fn decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn check(checks: &mut Vec<Check>, stage: &str, name: String, value: f64, requirement: String, pass: bool) {
    log::info!("{stage}/{name}: {value:e} ({requirement}) {}", if pass { "ok" } else { "FAILED" });
    checks.push(Check {
        stage: stage.into(),
        name,
        value,
        requirement,
        pass,
    });
}

/// Empties an output directory left by an earlier run; anything not listed
/// in its manifest makes the directory unusable.
fn prepare_dir(dir: &Path) -> Result<(), RunError> {
    let io = |source| RunError::Io {
        path: dir.to_path_buf(),
        source,
    };
    fs::create_dir_all(dir).map_err(io)?;
    let present: Vec<PathBuf> = fs::read_dir(dir).map_err(io)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    if present.is_empty() {
        return Ok(());
    }
    let listed: Vec<PathBuf> = fs::read_to_string(dir.join(MANIFEST))
        .ok()
        .and_then(|t| serde_json::from_str::<Value>(&t).ok())
        .and_then(|v| v.get("files").cloned())
        .and_then(|f| f.as_array().cloned())
        .map(|a| a.iter().filter_map(|e| e.get("path")?.as_str().map(|p| dir.join(p))).collect())
        .unwrap_or_default();
    if present.iter().any(|p| !listed.contains(p)) {
        return Err(RunError::Dirty(dir.to_path_buf()));
    }
    for p in present {
        fs::remove_file(&p).map_err(|source| RunError::Io { path: p, source })?;
    }
    Ok(())
}

struct Level {
    grid: GridSpec,
    eig: EigenSystem,
}

fn trajectory(model: &HamiltonianModel, f: &FlowConfig) -> spinqe::Result<Trajectory> {
    let z0 = PhasePoint::new(f.p.clone(), f.x.clone())?;
    let tol = Tolerance::new(f.tolerance.unwrap_or(1e-10));
    integrate_flow(model, &z0, f.t, StepControl::Adaptive(tol))
}

fn symbol(name: &str, dim: usize) -> MatrixSymbol {
    named_symbol(name, dim).expect("validated symbol name")
}

pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunOutcome, RunError> {
    prepare_dir(&opts.out)?;
    let mut sink = Sink {
        dir: opts.out.clone(),
        artifacts: Vec::new(),
    };
    let mut checks = Vec::new();
    let quant = QuantizeOptions { strict: opts.strict };
    let model = stage("model", cfg.build_model())?;
    let grids = stage("grid", cfg.grids(&model))?;
    let dim = cfg.dim();
    let (energy, omega) = (cfg.window_energy(), cfg.window_omega());
    sink.json("resolved_config.json", "config", json!({}), cfg)?;
    let d = &cfg.diagnostics;

    if let Some(f) = d.flow() {
        log::info!("flow: integrating to t = {}", f.t);
        let traj = stage("flow", trajectory(&model, f))?;
        let w = sink.create("trajectory.csv", "integrate_flow", json!({ "p": f.p, "x": f.x, "t": f.t }))?;
        stage("flow", traj.write_csv(&model, w))?;
        check(
            &mut checks,
            "flow",
            "energy_drift".into(),
            traj.energy_drift,
            format!("<= {:e}", traj.tolerance),
            traj.energy_drift <= traj.tolerance,
        );
    }

    if let Some(f) = d.transport() {
        log::info!("transport: integrating to t = {}", f.t);
        let traj = stage("transport", trajectory(&model, f))?;
        let path = stage("transport", integrate_spin_transport(&model, &traj))?;
        let w = sink.create("transport.csv", "integrate_spin_transport", json!({ "p": f.p, "x": f.x, "t": f.t }))?;
        stage("transport", path.write_csv(w))?;
        let defect = path.elements.iter().map(|g| g.unitarity_defect()).fold(0.0, f64::max);
        check(&mut checks, "transport", "unitarity_defect".into(), defect, "<= 1e-10".into(), defect <= 1e-10);
    }

    if let Some(e) = d.ergodic() {
        log::info!("ergodic: {} x {} ensemble over T = {:?}", e.n_base, e.n_g, e.schedule);
        let seed = cfg.seeds.ergodic.expect("validated seed");
        let sampler = ShellSampler::for_model(&model, seed);
        let ensemble = stage("ergodic", sample_ensemble(&model, &sampler, e.n_base, e.n_g))?;
        let b0 = symbol(&e.observable, dim);
        let rep = stage(
            "ergodic",
            ergodicity_report(&model, &b0, &ensemble, &e.schedule, e.mu_trace, &Tolerance::new(1e-9)),
        )?;
        let params = json!({ "observable": e.observable, "n_base": e.n_base, "n_g": e.n_g, "schedule": e.schedule, "seed": seed });
        let mut w = csv_writer(sink.create("ergodic_stats.csv", "ergodicity_report", params.clone())?);
        w.write_record(["t", "mean", "max", "g_spread", "target"]).map_err(|e| csv_err("ergodic", e))?;
        for s in &rep.stats {
            w.write_record([s.t, s.mean, s.max, s.g_spread, rep.target].map(|v| v.to_string()))
                .map_err(|e| csv_err("ergodic", e))?;
        }
        w.flush().map_err(|source| RunError::Io { path: opts.out.join("ergodic_stats.csv"), source })?;
        let w = sink.create("ergodic_members.csv", "ergodicity_report", params)?;
        stage("ergodic", rep.write_members_csv(w))?;
        if e.require_decreasing {
            let means: Vec<f64> = rep.stats.iter().map(|s| s.mean).collect();
            check(
                &mut checks,
                "ergodic",
                "mean_deviation_last".into(),
                *means.last().unwrap(),
                "strictly decreasing over the schedule".into(),
                decreasing(&means),
            );
        }
    }

    let mut levels: Vec<Level> = Vec::new();
    if cfg.needs_spectra() {
        let mut w = csv_writer(sink.create(
            "spectrum.csv",
            "solve_window",
            json!({ "energy": energy, "omega": omega, "hbar": cfg.hbar }),
        )?);
        w.write_record(["level", "hbar", "points", "k", "energy", "spin_1", "spin_2", "spin_3"])
            .map_err(|e| csv_err("spectra", e))?;
        for (li, grid) in grids.iter().enumerate() {
            log::info!("spectra: hbar = {}, {} points per axis", grid.hbar, grid.n);
            let op = stage("spectra", build_pauli_operator_with(&model, grid, quant))?;
            let window = stage("spectra", SpectralWindow::new(energy, omega, grid.hbar))?;
            let eig = stage("spectra", solve_window(&op, &window))?;
            let spins: Vec<Vec<f64>> = PauliAxis::ALL.iter().map(|a| eig.spin_expectations(*a)).collect();
            for (k, e) in eig.energies.iter().enumerate() {
                w.write_record([
                    li.to_string(),
                    grid.hbar.to_string(),
                    grid.n.to_string(),
                    k.to_string(),
                    e.to_string(),
                    spins[0][k].to_string(),
                    spins[1][k].to_string(),
                    spins[2][k].to_string(),
                ])
                .map_err(|e| csv_err("spectra", e))?;
            }
            levels.push(Level { grid: grid.clone(), eig });
        }
        w.flush().map_err(|source| RunError::Io { path: opts.out.join("spectrum.csv"), source })?;
    }

    if d.szego().is_some() || d.s2().is_some() {
        let mut targets = Vec::new();
        for o in &cfg.observables {
            let t = match o.target {
                Some(t) => t,
                None => {
                    let seed = cfg.seeds.targets.expect("validated seed");
                    let mut sampler = ShellSampler::for_model(&model, seed);
                    sampler.energy = energy;
                    let est = stage("targets", liouville_average(&model, &symbol(&o.symbol, dim), &sampler, 20_000))?;
                    log::info!("target of {} estimated as {} ± {:e}", o.name, 0.5 * est.mean.trace().re, est.std_error);
                    0.5 * est.mean.trace().re
                }
            };
            targets.push(t);
        }
        let mut rows: Vec<(usize, usize, f64, f64, f64)> = Vec::new();
        for (li, lv) in levels.iter().enumerate() {
            for (oi, o) in cfg.observables.iter().enumerate() {
                let b: WeylOperator = stage("observables", weyl_quantize_with(&symbol(&o.symbol, dim), &lv.grid, quant))?;
                let (avg, dev) = stage("szego", szego_average(&lv.eig, &b, targets[oi]))?;
                let s2 = stage("s2", s2_variance(&lv.eig, &b, targets[oi]))?;
                rows.push((li, oi, avg, dev, s2));
            }
        }
        let series = |oi: usize, pick: fn(&(usize, usize, f64, f64, f64)) -> f64| -> Vec<f64> {
            rows.iter().filter(|r| r.1 == oi).map(pick).collect()
        };
        if let Some(s) = d.szego() {
            let mut w = csv_writer(sink.create("szego_table.csv", "szego_average", json!({ "targets": targets }))?);
            w.write_record(["hbar", "points", "count", "observable", "target", "average", "deviation", "deviation_over_hbar"])
                .map_err(|e| csv_err("szego", e))?;
            for &(li, oi, avg, dev, _) in &rows {
                let lv = &levels[li];
                w.write_record([
                    lv.grid.hbar.to_string(),
                    lv.grid.n.to_string(),
                    lv.eig.count().to_string(),
                    cfg.observables[oi].name.clone(),
                    targets[oi].to_string(),
                    avg.to_string(),
                    dev.to_string(),
                    (dev / lv.grid.hbar).to_string(),
                ])
                .map_err(|e| csv_err("szego", e))?;
            }
            w.flush().map_err(|source| RunError::Io { path: opts.out.join("szego_table.csv"), source })?;
            for (oi, o) in cfg.observables.iter().enumerate() {
                let devs = series(oi, |r| r.3);
                if let Some(max) = s.max_deviation {
                    let worst = devs.iter().copied().fold(0.0, f64::max);
                    check(&mut checks, "szego", format!("{}_max_deviation", o.name), worst, format!("<= {max}"), worst <= max);
                }
                if s.require_decreasing {
                    check(
                        &mut checks,
                        "szego",
                        format!("{}_deviation_trend", o.name),
                        *devs.last().unwrap(),
                        "strictly decreasing as hbar shrinks".into(),
                        decreasing(&devs),
                    );
                }
            }
        }
        if let Some(s) = d.s2() {
            let mut w = csv_writer(sink.create("s2_table.csv", "s2_variance", json!({ "targets": targets }))?);
            w.write_record(["hbar", "points", "count", "observable", "target", "s2"]).map_err(|e| csv_err("s2", e))?;
            for &(li, oi, _, _, s2) in &rows {
                let lv = &levels[li];
                w.write_record([
                    lv.grid.hbar.to_string(),
                    lv.grid.n.to_string(),
                    lv.eig.count().to_string(),
                    cfg.observables[oi].name.clone(),
                    targets[oi].to_string(),
                    s2.to_string(),
                ])
                .map_err(|e| csv_err("s2", e))?;
            }
            w.flush().map_err(|source| RunError::Io { path: opts.out.join("s2_table.csv"), source })?;
            for (oi, o) in cfg.observables.iter().enumerate() {
                let vals = series(oi, |r| r.4);
                let (lo, hi) = vals.iter().fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
                if let Some(max) = s.max {
                    check(&mut checks, "s2", format!("{}_max", o.name), hi, format!("<= {max}"), hi <= max);
                }
                if let Some(min) = s.min {
                    check(&mut checks, "s2", format!("{}_min", o.name), lo, format!(">= {min}"), lo >= min);
                }
                if s.require_decreasing {
                    check(
                        &mut checks,
                        "s2",
                        format!("{}_trend", o.name),
                        *vals.last().unwrap(),
                        "strictly decreasing as hbar shrinks".into(),
                        decreasing(&vals),
                    );
                }
            }
        }
    }

    if let Some(e) = d.egorov() {
        if opts.strict && e.t.abs() > 2.0 {
            return Err(RunError::Stage {
                stage: "egorov",
                source: spinqe::Error::Contract(format!("|t| = {} is outside the trusted window |t| <= 2", e.t.abs())),
            });
        }
        log::info!("egorov: {} at t = {}", e.symbol, e.t);
        let mut eo = EgorovOptions::default();
        if e.energy_cut.is_some() {
            eo.energy_cut = e.energy_cut;
        }
        let curve = stage("egorov", egorov_check(&model, &symbol(&e.symbol, dim), e.t, &grids, &eo))?;
        let mut w = csv_writer(sink.create("egorov.csv", "egorov_check", json!({ "symbol": e.symbol, "t": e.t, "energy_cut": eo.energy_cut }))?);
        w.write_record(["hbar", "points", "kept", "error"]).map_err(|e| csv_err("egorov", e))?;
        for p in &curve.points {
            w.write_record([p.hbar.to_string(), p.points_per_axis.to_string(), p.kept.to_string(), p.error.to_string()])
                .map_err(|e| csv_err("egorov", e))?;
        }
        w.flush().map_err(|source| RunError::Io { path: opts.out.join("egorov.csv"), source })?;
        if let Some(min) = e.min_slope {
            check(&mut checks, "egorov", "loglog_slope".into(), curve.slope, format!(">= {min}"), curve.slope >= min);
        }
    }

    if let Some(wc) = d.wigner() {
        let lv = &levels[wc.level];
        let targets = if wc.equidistribution {
            let seed = cfg.seeds.targets.expect("validated seed");
            let mut sampler = ShellSampler::for_model(&model, seed);
            sampler.energy = energy;
            Some(stage("wigner", dictionary_targets(&model, &sampler, wc.samples))?)
        } else {
            None
        };
        let mut equi = Vec::new();
        for &k in &wc.states {
            if k >= lv.eig.count() {
                return Err(RunError::Stage {
                    stage: "wigner",
                    source: spinqe::Error::Contract(format!("window holds {} states, state {k} requested", lv.eig.count())),
                });
            }
            log::info!("wigner: state {k} at hbar = {}", lv.grid.hbar);
            let params = json!({ "hbar": lv.grid.hbar, "state": k, "energy": lv.eig.energies[k] });
            let w = stage("wigner", wigner_transform(&lv.eig.vector(k), &lv.grid))?;
            let name = format!("wigner_{k}.bin");
            let path = sink.add(&name, "wigner_transform", params.clone());
            sink.add(&format!("{name}.json"), "wigner_transform", params.clone());
            stage("wigner", w.write_binary(&path))?;
            let csv_name = format!("wigner_{k}.csv");
            let f = sink.create(&csv_name, "wigner_transform", json!({ "state": k, "stride": wc.csv_stride }))?;
            stage("wigner", w.write_csv(wc.csv_stride, f))?;
            let herm = w.max_hermiticity_defect();
            check(&mut checks, "wigner", format!("state_{k}_hermiticity"), herm, "<= 1e-10".into(), herm <= 1e-10);
            if wc.husimi || wc.equidistribution {
                let h = stage("wigner", husimi_transform(&w))?;
                if wc.husimi {
                    let name = format!("husimi_{k}.bin");
                    let path = sink.add(&name, "husimi_transform", params.clone());
                    sink.add(&format!("{name}.json"), "husimi_transform", params.clone());
                    stage("wigner", h.write_binary(&path))?;
                    let csv_name = format!("husimi_{k}.csv");
                    let f = sink.create(&csv_name, "husimi_transform", json!({ "state": k, "stride": wc.csv_stride }))?;
                    stage("wigner", h.write_csv(wc.csv_stride, f))?;
                    let floor = h.min_eigenvalue();
                    check(&mut checks, "wigner", format!("state_{k}_husimi_floor"), floor, ">= -1e-8".into(), floor >= -1e-8);
                }
                if let Some(t) = &targets {
                    equi.push((k, stage("wigner", equidistribution_against(&h, t))?));
                }
            }
        }
        if wc.equidistribution {
            let mut w = csv_writer(sink.create(
                "equidistribution.csv",
                "equidistribution_distance",
                json!({ "samples": wc.samples, "seed": cfg.seeds.targets }),
            )?);
            w.write_record(["state", "scalar_distance", "offdiag_mass", "pairing_sigma_1", "pairing_sigma_2", "pairing_sigma_3"])
                .map_err(|e| csv_err("wigner", e))?;
            for (k, e) in &equi {
                w.write_record([
                    k.to_string(),
                    e.scalar_distance.to_string(),
                    e.offdiag_mass.to_string(),
                    e.spin_pairings[0].to_string(),
                    e.spin_pairings[1].to_string(),
                    e.spin_pairings[2].to_string(),
                ])
                .map_err(|e| csv_err("wigner", e))?;
            }
            w.flush().map_err(|source| RunError::Io { path: opts.out.join("equidistribution.csv"), source })?;
        }
    }

    if let Some(cx) = d.counterexample() {
        log::info!("counterexample: {} grids", grids.len());
        let settings = ErgodicSettings {
            n_base: cx.n_base,
            n_g: cx.n_g,
            schedule: cx.schedule.clone(),
            seed: cfg.seeds.counterexample.expect("validated seed"),
        };
        let rep = stage("counterexample", counterexample_report(&model, &grids, energy, omega, &settings))?;
        sink.json("counterexample.json", "counterexample_report", json!({ "settings": settings }), &rep)?;
        let s2_min = rep.levels.iter().map(|l| l.s2).fold(f64::INFINITY, f64::min);
        check(&mut checks, "counterexample", "s2_min".into(), s2_min, format!(">= {}", cx.min_s2), s2_min >= cx.min_s2);
        let comm = rep.levels.iter().map(|l| l.commutator).fold(0.0, f64::max);
        check(&mut checks, "counterexample", "commutator".into(), comm, "<= 1e-8".into(), comm <= 1e-8);
    }

    let passed = checks.iter().all(|c| c.pass);
    sink.json(
        "report.json",
        "run_scenario",
        json!({}),
        &json!({ "scenario": cfg.name, "passed": passed, "checks": checks }),
    )?;
    write_manifest(&mut sink, cfg)?;
    Ok(RunOutcome {
        out: opts.out.clone(),
        checks,
        artifacts: sink.artifacts,
    })
}

fn write_manifest(sink: &mut Sink, cfg: &ScenarioConfig) -> Result<(), RunError> {
    let created = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let path = sink.add(MANIFEST, "manifest", json!({}));
    let manifest = json!({
        "schema_version": SCHEMA_VERSION,
        "tool": format!("spinqe {}", env!("CARGO_PKG_VERSION")),
        "scenario": cfg.name,
        "created_unix": created,
        "files": sink.artifacts,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("serializable manifest");
    fs::write(&path, text + "\n").map_err(|source| RunError::Io { path, source })
}
