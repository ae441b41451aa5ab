//! Experiment orchestration: offline training, online sweeps, CSV emission.
//!
//! A run writes into the configured output directory:
//! `archive/` (the reduced model), `errors.csv` (one row per time level plus
//! an `avg` row, per strategy/N/dt/parameter/field), `infsup.csv`, and
//! `manifest.json` with a status record per combination. A failing
//! combination is recorded and the remaining ones continue.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::config::ExperimentConfig;
use crate::diag;
use crate::error::Error;
use crate::fom::{FomProblem, SnapshotSet};
use crate::reduction::{self, GreedyConfig, ReducedModel};
use crate::rom::{self, RomOptions};
use crate::{io, Params};

#[derive(Debug)]
pub struct OfflineResult {
    pub problem: FomProblem,
    pub snapshots: SnapshotSet,
    pub model: ReducedModel,
}

#[derive(Debug, Default)]
pub struct RunSummary {
    pub rows: usize,
    pub records: Vec<ComboRecord>,
}

#[derive(Debug, serde::Serialize)]
pub struct ComboRecord {
    pub stage: String,
    pub strategy: String,
    pub n: usize,
    pub dt: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub status: String,
}

impl RunSummary {
    pub fn all_ok(&self) -> bool {
        self.records.iter().all(|r| r.status == "ok")
    }

    fn record(&mut self, stage: &str, strategy: &str, n: usize, dt: f64, mu: (f64, f64), status: String) {
        self.records.push(ComboRecord {
            stage: stage.to_string(),
            strategy: strategy.to_string(),
            n,
            dt,
            mu1: mu.0,
            mu2: mu.1,
            status,
        });
    }
}

pub fn build_problem(cfg: &ExperimentConfig, dt: f64) -> Result<FomProblem, Error> {
    FomProblem::new(cfg.nx, cfg.ny, cfg.pair, cfg.problem, cfg.scheme, dt, cfg.t_final, cfg.delta)
}

/// Snapshot computation, POD-Greedy compression and supremizer enrichment.
pub fn run_offline(cfg: &ExperimentConfig) -> Result<OfflineResult, Error> {
    let problem = build_problem(cfg, cfg.dt)?;
    let training = cfg.training_grid()?;
    let snapshots = problem.compute_snapshots(&training)?;
    let greedy_cfg = GreedyConfig {
        n_u_max: cfg.n_max,
        n_p_max: cfg.n_max,
        tol: cfg.greedy_tol,
        ..GreedyConfig::default()
    };
    let greedy = reduction::pod_greedy(&snapshots, &problem.x_u, &problem.x_p, &greedy_cfg)?;
    let z_s = reduction::supremizer_modes(
        &problem,
        &snapshots,
        greedy.z_u.as_ref(),
        cfg.n_max,
        cfg.greedy_tol,
    )?;
    let model =
        reduction::project_operators(&problem, greedy.z_u, z_s, greedy.z_p, greedy.history)?;
    Ok(OfflineResult { problem, snapshots, model })
}

/// Offline stage plus archive emission into `<output_dir>/archive`.
pub fn offline_to_disk(cfg: &ExperimentConfig) -> Result<OfflineResult, Error> {
    let off = run_offline(cfg)?;
    io::write_model(&off.model, &cfg.output_dir.join("archive"))?;
    Ok(off)
}

fn csv_writer(path: &Path, header: &str) -> Result<BufWriter<File>, Error> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    Ok(w)
}

fn error_rows<W: Write>(
    w: &mut W,
    cfg: &ExperimentConfig,
    strategy: &str,
    n: usize,
    dt: f64,
    mu: (f64, f64),
    field: &str,
    report: &diag::ErrorReport,
) -> Result<usize, Error> {
    let (problem, pair) = (cfg.problem.as_str(), cfg.pair.as_str());
    for (k, e) in report.errors.iter().enumerate() {
        writeln!(
            w,
            "{problem},{pair},{strategy},{n},{dt},{},{},{field},{},{e:e}",
            mu.0,
            mu.1,
            k as f64 * dt
        )?;
    }
    writeln!(
        w,
        "{problem},{pair},{strategy},{n},{dt},{},{},{field},avg,{:e}",
        mu.0, mu.1, report.average
    )?;
    Ok(report.errors.len() + 1)
}

/// Online sweep over `(dt, mu, strategy, N)`; writes `errors.csv`.
pub fn run_errors(
    cfg: &ExperimentConfig,
    model: &ReducedModel,
    summary: &mut RunSummary,
) -> Result<(), Error> {
    let mut w = csv_writer(
        &cfg.output_dir.join("errors.csv"),
        "problem,pair,strategy,N,dt,mu1,mu2,field,t,error",
    )?;

    for &dt in &cfg.dt_list {
        let prob = match build_problem(cfg, dt) {
            Ok(p) => p,
            Err(e) => {
                summary.record("fom", "-", 0, dt, (0.0, 0.0), format!("error: {e}"));
                continue;
            }
        };
        let mut model_dt = model.clone();
        model_dt.dt = dt;
        model_dt.n_steps = prob.n_steps;

        for &mu in &cfg.online_mu {
            let p = cfg.params_from(mu.0, mu.1)?;
            let fom = match prob.solve(&p) {
                Ok(s) => s,
                Err(e) => {
                    summary.record("fom", "-", 0, dt, mu, format!("error: {e}"));
                    continue;
                }
            };
            let m_u = prob.mass.assemble(&p);
            let m_p = diag::pressure_mass(&prob, &p);

            for &strategy in &cfg.strategies {
                for &n in &cfg.n_list {
                    let opts = RomOptions { strategy, n, conv_mode: cfg.conv_mode };
                    let sol = match rom::solve_rom(&model_dt, &p, &opts) {
                        Ok(s) => s,
                        Err(e) => {
                            summary.record("rom", strategy.as_str(), n, dt, mu, format!("error: {e}"));
                            continue;
                        }
                    };
                    let rec_u = rom::reconstruct_velocity(&model_dt, &sol);
                    let rec_p = rom::reconstruct_pressure(&model_dt, &sol);
                    let rep_u = diag::l2_error_in_time(fom.velocity.as_ref(), rec_u.as_ref(), &m_u)?;
                    let rep_p = diag::l2_error_in_time(fom.pressure.as_ref(), rec_p.as_ref(), &m_p)?;
                    summary.rows +=
                        error_rows(&mut w, cfg, strategy.as_str(), n, dt, mu, "velocity", &rep_u)?;
                    summary.rows +=
                        error_rows(&mut w, cfg, strategy.as_str(), n, dt, mu, "pressure", &rep_p)?;
                    let finite = rep_u.errors.iter().chain(&rep_p.errors).all(|e| e.is_finite());
                    summary.record(
                        "rom",
                        strategy.as_str(),
                        n,
                        dt,
                        mu,
                        if finite { "ok".into() } else { "nonfinite error".into() },
                    );
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Inf-sup constants at the online parameters; writes `infsup.csv`.
pub fn run_infsup(
    cfg: &ExperimentConfig,
    model: &ReducedModel,
    summary: &mut RunSummary,
) -> Result<(), Error> {
    let mut w = csv_writer(&cfg.output_dir.join("infsup.csv"), "mu1,mu2,kind,N,beta")?;
    let prob = build_problem(cfg, cfg.dt)?;
    for &mu in &cfg.online_mu {
        let p = cfg.params_from(mu.0, mu.1)?;
        match diag::fe_infsup(&prob, &p, false) {
            Ok(beta) => {
                writeln!(w, "{},{},fe-plain,0,{beta:e}", mu.0, mu.1)?;
                summary.record("infsup", "fe-plain", 0, cfg.dt, mu, "ok".into());
            }
            Err(e) => summary.record("infsup", "fe-plain", 0, cfg.dt, mu, format!("error: {e}")),
        }
        if prob.stab != crate::fom::StabKind::None && prob.stab != crate::fom::StabKind::Supg {
            match diag::fe_infsup(&prob, &p, true) {
                Ok(beta) => {
                    writeln!(w, "{},{},fe-stabilized,0,{beta:e}", mu.0, mu.1)?;
                    summary.record("infsup", "fe-stabilized", 0, cfg.dt, mu, "ok".into());
                }
                Err(e) => {
                    summary.record("infsup", "fe-stabilized", 0, cfg.dt, mu, format!("error: {e}"))
                }
            }
        }
        for &n in &cfg.n_list {
            let with = diag::reduced_infsup(model, &p, n, true);
            let without = diag::reduced_infsup(model, &p, n, false);
            writeln!(w, "{},{},rb-sup,{n},{with:e}", mu.0, mu.1)?;
            writeln!(w, "{},{},rb-nosup,{n},{without:e}", mu.0, mu.1)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `manifest.json` summarizing the run.
pub fn write_manifest(cfg: &ExperimentConfig, summary: &RunSummary) -> Result<(), Error> {
    fs::create_dir_all(&cfg.output_dir)?;
    let h = build_problem(cfg, cfg.dt)?.mesh.h;
    let dt_reports: Vec<serde_json::Value> = cfg
        .dt_list
        .iter()
        .map(|&dt| {
            let r = diag::dt_stability_flag(cfg.delta.max(f64::MIN_POSITIVE), h, dt);
            serde_json::json!({
                "dt": r.dt,
                "threshold": r.threshold,
                "sufficient_condition_ok": r.ok,
                "conditional_ratio": r.ratio,
                "conditional_ok": r.secondary_ok,
            })
        })
        .collect();
    let doc = serde_json::json!({
        "problem": cfg.problem.as_str(),
        "pair": cfg.pair.as_str(),
        "scheme": cfg.scheme.as_str(),
        "delta": cfg.delta,
        "mesh": { "nx": cfg.nx, "ny": cfg.ny, "h": h },
        "dt": cfg.dt,
        "t_final": cfg.t_final,
        "n_list": cfg.n_list,
        "strategies": cfg.strategies.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
        "dt_reports": dt_reports,
        "rows_written": summary.rows,
        "all_ok": summary.all_ok(),
        "records": summary.records,
    });
    let f = File::create(cfg.output_dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &doc)
        .map_err(|e| Error::Archive(format!("manifest: {e}")))?;
    Ok(())
}

/// Full pipeline: offline, archive, error sweep, inf-sup table, manifest.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary, Error> {
    let off = offline_to_disk(cfg)?;
    let mut summary = RunSummary::default();
    run_errors(cfg, &off.model, &mut summary)?;
    run_infsup(cfg, &off.model, &mut summary)?;
    write_manifest(cfg, &summary)?;
    Ok(summary)
}

/// Time-averaged errors per `(strategy, N, dt, mu, field)` extracted from a
/// finished sweep, keyed for quick assertions and reports.
pub fn averages_from_csv(path: &Path) -> Result<Vec<(String, usize, f64, f64, f64, String, f64)>, Error> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 10 || cols[8] != "avg" {
            continue;
        }
        let parse = |s: &str| -> Result<f64, Error> {
            s.parse().map_err(|_| Error::Config(format!("bad csv number '{s}'")))
        };
        out.push((
            cols[2].to_string(),
            cols[3].parse().map_err(|_| Error::Config("bad csv integer".into()))?,
            parse(cols[4])?,
            parse(cols[5])?,
            parse(cols[6])?,
            cols[7].to_string(),
            parse(cols[9])?,
        ));
    }
    Ok(out)
}

/// Convenience for tests and reports: average error for one combination.
pub fn lookup_average(
    rows: &[(String, usize, f64, f64, f64, String, f64)],
    strategy: &str,
    n: usize,
    dt: f64,
    field: &str,
) -> Option<f64> {
    rows.iter()
        .find(|r| {
            r.0 == strategy && r.1 == n && (r.2 - dt).abs() < 1e-12 * dt.max(1.0) && r.5 == field
        })
        .map(|r| r.6)
}

/// Relative time-averaged FOM norms, for turning absolute errors relative.
pub fn fom_norms(prob: &FomProblem, p: &Params) -> Result<(f64, f64), Error> {
    let sol = prob.solve(p)?;
    let m_u = prob.mass.assemble(p);
    let m_p = diag::pressure_mass(prob, p);
    Ok((
        diag::l2_norm_in_time(sol.velocity.as_ref(), &m_u)?,
        diag::l2_norm_in_time(sol.pressure.as_ref(), &m_p)?,
    ))
}
