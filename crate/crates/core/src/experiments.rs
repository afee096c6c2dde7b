//! Command drivers behind the `kinex` binary and the files they emit.
//!
//! All CSV files are comma-separated with a header row; floats are written in
//! the shortest decimal form that parses back to the identical `f64`. Files
//! carry fractions; the human-readable tables carry percentages.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::kinetic::ClassSystem;
use crate::metrics::{self, EnsembleSummary, ObservableSeries};
use crate::sde::{self, Trajectory};
use crate::state::StateVector;

/// Human-readable description of the random generator, recorded in metadata.
pub const GENERATOR: &str =
    "ChaCha8Rng::seed_from_u64(seed) with set_stream(realization); rand_distr::StandardNormal (ziggurat)";

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_text(path, &text)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let kind = match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    };
    Error::io(path, kind)
}

fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

/// Relaxes the configured initial state when `init.equilibrate` is set.
pub fn prepare_initial_state(cfg: &RunConfig, sys: &ClassSystem) -> Result<StateVector> {
    let x0 = cfg.initial_state()?;
    if !cfg.init.equilibrate {
        return Ok(x0);
    }
    sde::find_equilibrium(&x0, sys, cfg.sde.dt, cfg.init.tol, cfg.init.max_steps)?
        .into_converged()
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumReport {
    pub n: usize,
    pub incomes: Vec<f64>,
    pub initial: StateVector,
    pub fractions: StateVector,
    pub percentages: Vec<f64>,
    pub mu: f64,
    pub gini: f64,
    pub mobility: Option<f64>,
    pub drift_divergence: f64,
    pub converged: bool,
    pub residual: f64,
    pub steps: u64,
}

impl EquilibriumReport {
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>5} {:>10} {:>12}", "class", "income", "percent");
        for (i, (r, p)) in self.incomes.iter().zip(&self.percentages).enumerate() {
            let _ = writeln!(s, "{:>5} {:>10.2} {:>12.4}", i + 1, r, p);
        }
        let _ = writeln!(s, "mu = {:.6}  G = {:.6}", self.mu, self.gini);
        match self.mobility {
            Some(m) => {
                let _ = writeln!(s, "M = {m:.6}");
            }
            None => {
                let _ = writeln!(s, "M = undefined");
            }
        }
        let _ = writeln!(
            s,
            "converged = {} after {} steps (residual {:.3e})",
            self.converged, self.steps, self.residual
        );
        s
    }
}

/// Deterministic equilibrium reached from the configured initial state.
pub fn compute_equilibrium(cfg: &RunConfig) -> Result<EquilibriumReport> {
    let sys = cfg.class_system()?;
    let x0 = cfg.initial_state()?;
    let eq = sde::find_equilibrium(&x0, &sys, cfg.sde.dt, cfg.init.tol, cfg.init.max_steps)?;
    if !eq.converged {
        return Err(Error::NotConverged {
            steps: eq.steps,
            residual: eq.residual,
        });
    }
    let r = sys.incomes();
    Ok(EquilibriumReport {
        n: sys.n(),
        incomes: r.to_vec(),
        initial: x0,
        percentages: eq.state.percentages(),
        mu: metrics::total_income(&eq.state, r),
        gini: metrics::gini(&eq.state, r),
        mobility: metrics::mobility(&eq.state, &sys).ok(),
        drift_divergence: sys.drift_divergence(&eq.state)?,
        fractions: eq.state,
        converged: eq.converged,
        residual: eq.residual,
        steps: eq.steps,
    })
}

/// Writes `equilibrium.csv` and `equilibrium.json` into `cfg.output.dir`.
pub fn cmd_equilibrium(cfg: &RunConfig) -> Result<EquilibriumReport> {
    let report = compute_equilibrium(cfg)?;
    let dir = &cfg.output.dir;
    ensure_dir(dir)?;
    let path = dir.join("equilibrium.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["class", "income", "fraction", "percent"])
        .map_err(|e| csv_error(&path, e))?;
    for i in 0..report.n {
        w.write_record([
            (i + 1).to_string(),
            fmt_float(report.incomes[i]),
            fmt_float(report.fractions.as_slice()[i]),
            fmt_float(report.percentages[i]),
        ])
        .map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    write_json(&dir.join("equilibrium.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
struct SimulationMeta<'a> {
    command: &'static str,
    seed: u64,
    generator: &'static str,
    rejected_steps: u64,
    fallback_steps: u64,
    samples: usize,
    initial_state: &'a StateVector,
    corr_mu_gini: Option<f64>,
    corr_gini_mobility: Option<f64>,
    config: &'a RunConfig,
}

#[derive(Debug, Clone)]
pub struct SimulationReport {
    pub trajectory: Trajectory,
    pub mu: ObservableSeries,
    pub gini: ObservableSeries,
    pub mobility: ObservableSeries,
    pub corr_mu_gini: Option<f64>,
    pub corr_gini_mobility: Option<f64>,
    pub csv_path: PathBuf,
}

/// Integrates one realization, computing the observable series.
pub fn simulate(cfg: &RunConfig) -> Result<(Trajectory, [ObservableSeries; 3])> {
    let sys = cfg.class_system()?;
    let x0 = prepare_initial_state(cfg, &sys)?;
    let traj = sde::run_trajectory(&x0, &sys, &cfg.sde_config())?;
    let obs = metrics::observables(&traj, &sys);
    Ok((traj, obs))
}

/// Writes `trajectory.csv` (columns `step, x_1..x_n, mu, gini, mobility`)
/// and the `trajectory.meta.json` sidecar.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulationReport> {
    let (traj, [mu, gini, mobility]) = simulate(cfg)?;
    let corr_mu_gini = metrics::pearson(&mu, &gini).ok();
    let corr_gini_mobility = metrics::pearson(&gini, &mobility).ok();

    let dir = &cfg.output.dir;
    ensure_dir(dir)?;
    let path = dir.join("trajectory.csv");
    write_trajectory_csv(&path, &traj, &mu, &gini, &mobility)?;
    let meta = SimulationMeta {
        command: "simulate",
        seed: cfg.sde.seed,
        generator: GENERATOR,
        rejected_steps: traj.rejected_steps,
        fallback_steps: traj.fallback_steps,
        samples: traj.len(),
        initial_state: &traj.states[0],
        corr_mu_gini,
        corr_gini_mobility,
        config: cfg,
    };
    write_json(&dir.join("trajectory.meta.json"), &meta)?;
    Ok(SimulationReport {
        trajectory: traj,
        mu,
        gini,
        mobility,
        corr_mu_gini,
        corr_gini_mobility,
        csv_path: path,
    })
}

fn write_trajectory_csv(
    path: &Path,
    traj: &Trajectory,
    mu: &ObservableSeries,
    gini: &ObservableSeries,
    mobility: &ObservableSeries,
) -> Result<()> {
    let n = traj.states[0].len();
    let mut w = csv_writer(path)?;
    let mut header = vec!["step".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend(["mu", "gini", "mobility"].map(String::from));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (row, (t, x)) in traj.times.iter().zip(&traj.states).enumerate() {
        let mut rec = Vec::with_capacity(n + 4);
        rec.push(t.to_string());
        rec.extend(x.as_slice().iter().map(|v| fmt_float(*v)));
        rec.push(fmt_float(mu.values[row]));
        rec.push(fmt_float(gini.values[row]));
        rec.push(fmt_float(mobility.values[row]));
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleReport {
    pub seed: u64,
    pub generator: &'static str,
    pub rejected_steps: u64,
    pub fallback_steps: u64,
    pub initial_state: StateVector,
    /// Pooled skewness of each histogrammed class.
    pub skewness: Vec<(usize, f64)>,
    pub summary: EnsembleSummary,
    pub config: RunConfig,
}

/// Runs the ensemble and pools its statistics. `workers = None` uses the
/// global thread pool.
pub fn ensemble(cfg: &RunConfig, workers: Option<usize>) -> Result<EnsembleReport> {
    let sys = cfg.class_system()?;
    let x0 = prepare_initial_state(cfg, &sys)?;
    let sde_cfg = cfg.sde_config();
    let trajs = match workers {
        Some(k) => sde::run_ensemble_with_workers(&x0, &sys, &sde_cfg, cfg.sde.realizations, k)?,
        None => sde::run_ensemble(&x0, &sys, &sde_cfg, cfg.sde.realizations)?,
    };
    let classes = cfg.histogram_classes();
    let mut summary = metrics::summarize_ensemble(&trajs, &classes, cfg.output.bin_width)?;
    summary.correlations = metrics::mean_correlations(&trajs, &sys);
    let skewness = classes
        .iter()
        .map(|&c| {
            let s: Vec<f64> = trajs
                .iter()
                .flat_map(|t| t.states.iter().map(move |x| x.fraction(c)))
                .collect();
            (c, metrics::skewness(&s))
        })
        .collect();
    Ok(EnsembleReport {
        seed: cfg.sde.seed,
        generator: GENERATOR,
        rejected_steps: trajs.iter().map(|t| t.rejected_steps).sum(),
        fallback_steps: trajs.iter().map(|t| t.fallback_steps).sum(),
        initial_state: x0,
        skewness,
        summary,
        config: cfg.clone(),
    })
}

impl EnsembleReport {
    pub fn render_table(&self) -> String {
        let s = &self.summary;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} realizations, {} pooled samples (percent)",
            s.realizations, s.samples
        );
        let _ = writeln!(out, "{:>5} {:>10} {:>10}", "class", "mean", "std");
        for (i, (m, sd)) in s.means.iter().zip(&s.std_devs).enumerate() {
            let _ = writeln!(out, "{:>5} {:>10.3} {:>10.3}", i + 1, 100.0 * m, 100.0 * sd);
        }
        for (label, c) in &s.correlations {
            let _ = writeln!(out, "mean corr({label}) = {c:.4}");
        }
        let _ = writeln!(
            out,
            "rejected draws = {}, fallback steps = {}",
            self.rejected_steps, self.fallback_steps
        );
        out
    }
}

/// Writes `ensemble_stats.csv`, `ensemble_stats.txt`, one
/// `histogram_x<class>.csv` per histogrammed class and `ensemble_summary.json`.
pub fn cmd_ensemble(cfg: &RunConfig, workers: Option<usize>) -> Result<EnsembleReport> {
    let report = ensemble(cfg, workers)?;
    let dir = &cfg.output.dir;
    ensure_dir(dir)?;
    let s = &report.summary;

    let path = dir.join("ensemble_stats.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["class", "income", "mean", "std", "mean_percent", "std_percent"])
        .map_err(|e| csv_error(&path, e))?;
    let incomes: Vec<f64> = (1..=cfg.model.n)
        .map(|j| j as f64 * cfg.model.delta_r)
        .collect();
    for i in 0..s.means.len() {
        w.write_record([
            (i + 1).to_string(),
            fmt_float(incomes[i]),
            fmt_float(s.means[i]),
            fmt_float(s.std_devs[i]),
            fmt_float(100.0 * s.means[i]),
            fmt_float(100.0 * s.std_devs[i]),
        ])
        .map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    for (class, h) in &s.histograms {
        let path = dir.join(format!("histogram_x{class}.csv"));
        let mut w = csv_writer(&path)?;
        w.write_record(["bin_left", "bin_right", "count"])
            .map_err(|e| csv_error(&path, e))?;
        for (lo, hi, c) in h.bins() {
            w.write_record([fmt_float(lo), fmt_float(hi), c.to_string()])
                .map_err(|e| csv_error(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }

    write_text(&dir.join("ensemble_stats.txt"), &report.render_table())?;
    write_json(&dir.join("ensemble_summary.json"), &report)?;
    Ok(report)
}
