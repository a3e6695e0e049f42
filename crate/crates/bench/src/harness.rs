use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use cre_pinn::cre::{network_report, CreError, ErrorReport, QuadratureGrid};
use cre_pinn::elasticity::ManufacturedProblem;
use cre_pinn::network::{MixedSolution, NetworkError};
use cre_pinn::pinn::{train_with_observer, CollocationSet, HistoryEntry, LossBreakdown, TrainError};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, RunConfig, Scenario};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Cre(#[from] CreError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Failed(String),
    /// Training stopped early; the report covers the last finite state.
    #[error("run {run_id} aborted: {reason}")]
    Aborted {
        run_id: String,
        reason: String,
        report: Box<ExperimentReport>,
    },
}

/// Sweep axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// Collocation/data grid size per side.
    Sampling,
    /// Hidden-layer width at 4 hidden layers.
    Neurons,
    /// Hidden-layer count at width 20.
    Layers,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Sampling => "sampling",
            Axis::Neurons => "neurons",
            Axis::Layers => "layers",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sampling" => Ok(Axis::Sampling),
            "neurons" => Ok(Axis::Neurons),
            "layers" => Ok(Axis::Layers),
            _ => Err(format!("unknown axis `{s}` (expected sampling, neurons, or layers)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Completed,
    Aborted(String),
    Failed(String),
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::Aborted(_) => "aborted",
            RunStatus::Failed(_) => "failed",
        }
    }

    pub fn is_completed(&self) -> bool {
        *self == RunStatus::Completed
    }
}

/// Outcome of one training run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run_id: String,
    /// Sweep level, if the run belongs to a sweep.
    pub level: Option<usize>,
    pub seed: u64,
    pub config_hash: String,
    pub status: RunStatus,
    pub epochs_completed: usize,
    /// Bounds at the initial parameters.
    pub initial: Option<ErrorReport<f64>>,
    pub report: Option<ErrorReport<f64>>,
    pub final_loss: Option<LossBreakdown<f64>>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub scenario: Scenario,
    pub axis: Option<Axis>,
    pub test_grid: usize,
    pub rows: Vec<RunRecord>,
}

pub const REPORT_COLUMNS: [&str; 22] = [
    "run_id",
    "level",
    "seed",
    "config_hash",
    "status",
    "epochs_completed",
    "test_grid",
    "psi_init",
    "psi",
    "phi",
    "varphi",
    "sum_gap",
    "bound_phi",
    "bound_varphi",
    "mse_gamma_d",
    "mse_f",
    "mse_gamma_n",
    "mse_c",
    "mse_u",
    "mse_sigma",
    "total",
    "message",
];

pub const SWEEP_COLUMNS: [&str; 8] = [
    "level",
    "seed",
    "status",
    "phi",
    "varphi",
    "psi",
    "phi_over_psi",
    "varphi_over_psi",
];

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl RunRecord {
    fn csv_fields(&self, test_grid: usize) -> Vec<String> {
        let r = self.report.as_ref();
        let l = self.final_loss.as_ref();
        let message = match &self.status {
            RunStatus::Completed => String::new(),
            RunStatus::Aborted(m) | RunStatus::Failed(m) => m.clone(),
        };
        vec![
            self.run_id.clone(),
            self.level.map(|v| v.to_string()).unwrap_or_default(),
            self.seed.to_string(),
            self.config_hash.clone(),
            self.status.label().to_string(),
            self.epochs_completed.to_string(),
            test_grid.to_string(),
            num(self.initial.map(|i| i.psi)),
            num(r.map(|r| r.psi)),
            num(r.map(|r| r.phi)),
            num(r.map(|r| r.varphi)),
            num(r.map(|r| r.sum_gap)),
            r.map(|r| r.bound_phi.to_string()).unwrap_or_default(),
            r.map(|r| r.bound_varphi.to_string()).unwrap_or_default(),
            num(l.map(|l| l.mse_gamma_d)),
            num(l.map(|l| l.mse_f)),
            num(l.map(|l| l.mse_gamma_n)),
            num(l.map(|l| l.mse_c)),
            num(l.map(|l| l.mse_u)),
            num(l.map(|l| l.mse_sigma)),
            num(l.map(|l| l.total)),
            message,
        ]
    }

    /// `(phi / psi, varphi / psi)`.
    pub fn ratios(&self) -> Option<(f64, f64)> {
        self.report.map(|r| (r.phi / r.psi, r.varphi / r.psi))
    }
}

impl ExperimentReport {
    /// Deterministic CSV: no wall-clock columns.
    pub fn report_csv(&self) -> Result<String, BenchError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(REPORT_COLUMNS)?;
        for row in &self.rows {
            w.write_record(row.csv_fields(self.test_grid))?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8"))
    }

    /// Per-level table of the plotted quantities.
    pub fn sweep_csv(&self) -> Result<String, BenchError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(SWEEP_COLUMNS)?;
        for row in &self.rows {
            let r = row.report.as_ref();
            let ratios = row.ratios();
            w.write_record([
                row.level.map(|v| v.to_string()).unwrap_or_default(),
                row.seed.to_string(),
                row.status.label().to_string(),
                num(r.map(|r| r.phi)),
                num(r.map(|r| r.varphi)),
                num(r.map(|r| r.psi)),
                num(ratios.map(|r| r.0)),
                num(ratios.map(|r| r.1)),
            ])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8"))
    }

    /// Long-format `level,quantity,value` rows for plotting stacked errors.
    pub fn plot_csv(&self) -> Result<String, BenchError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["level", "quantity", "value"])?;
        for row in &self.rows {
            if let Some(r) = row.report {
                let level = row.level.map(|v| v.to_string()).unwrap_or_default();
                for (q, v) in [("phi", r.phi), ("varphi", r.varphi), ("psi", r.psi)] {
                    w.write_record([level.clone(), q.to_string(), format!("{v:e}")])?;
                }
            }
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8"))
    }

    pub fn timing_csv(&self) -> Result<String, BenchError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["run_id", "epochs_completed", "wall_seconds"])?;
        for row in &self.rows {
            w.write_record([
                row.run_id.clone(),
                row.epochs_completed.to_string(),
                format!("{:.3}", row.wall_seconds),
            ])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8"))
    }
}

fn history_csv(history: &[HistoryEntry<f64>]) -> Result<String, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "epoch",
        "mse_gamma_d",
        "mse_f",
        "mse_gamma_n",
        "mse_c",
        "mse_u",
        "mse_sigma",
        "total",
        "wall_seconds",
    ])?;
    for h in history {
        let mut rec = vec![h.epoch.to_string()];
        rec.extend(h.breakdown.terms().iter().map(|t| format!("{t:e}")));
        rec.push(format!("{:e}", h.breakdown.total));
        rec.push(format!("{:.3}", h.wall_seconds));
        w.write_record(rec)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8"))
}

pub fn run_id(cfg: &RunConfig) -> String {
    format!("{}-s{}-{}", cfg.scenario, cfg.seed, &cfg.hash()[..12])
}

/// Trains one configuration and evaluates its bounds on the test grid.
///
/// With `out`, writes `config.toml`, `report.csv`, `history.csv`,
/// `timing.csv`, `plot_data.csv`, and `checkpoint/` there.
pub fn run_scenario(
    cfg: &RunConfig,
    out: Option<&Path>,
    observer: &mut dyn FnMut(&HistoryEntry<f64>),
) -> Result<ExperimentReport, BenchError> {
    run_level(cfg, None, out, observer)
}

fn run_level(
    cfg: &RunConfig,
    level: Option<usize>,
    out: Option<&Path>,
    observer: &mut dyn FnMut(&HistoryEntry<f64>),
) -> Result<ExperimentReport, BenchError> {
    cfg.validate()?;
    let started = Instant::now();
    let problem = ManufacturedProblem::new(cfg.material);
    let coll = CollocationSet::new(cfg.collocation.n_interior, cfg.collocation.n_boundary)
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let grid = QuadratureGrid::new(cfg.test_grid)?;
    let init = MixedSolution::initialize(cfg.network, cfg.seed);
    let initial = network_report(&init, &problem, &grid)?;
    let outcome = train_with_observer(init, &coll, &problem, cfg.loss, &cfg.train_config(), observer)?;
    let report = network_report(&outcome.solution, &problem, &grid)?;
    let status = match &outcome.error {
        None => RunStatus::Completed,
        Some(e) => RunStatus::Aborted(e.to_string()),
    };
    let final_loss = outcome.history.last().map(|h| h.breakdown);
    let record = RunRecord {
        run_id: run_id(cfg),
        level,
        seed: cfg.seed,
        config_hash: cfg.hash(),
        status,
        epochs_completed: outcome.epochs_completed,
        initial: Some(initial),
        report: Some(report),
        final_loss,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    let exp = ExperimentReport {
        scenario: cfg.scenario,
        axis: None,
        test_grid: cfg.test_grid,
        rows: vec![record],
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.toml"), cfg.to_toml())?;
        fs::write(dir.join("report.csv"), exp.report_csv()?)?;
        fs::write(dir.join("history.csv"), history_csv(&outcome.history)?)?;
        fs::write(dir.join("timing.csv"), exp.timing_csv()?)?;
        fs::write(dir.join("plot_data.csv"), exp.plot_csv()?)?;
        outcome.solution.save_dir(&dir.join("checkpoint"))?;
    }
    match outcome.error {
        None => Ok(exp),
        Some(e) => Err(BenchError::Aborted {
            run_id: exp.rows[0].run_id.clone(),
            reason: e.to_string(),
            report: Box::new(exp),
        }),
    }
}

/// One run per level along `axis`, starting from `base`.
#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub axis: Axis,
    pub levels: Vec<usize>,
    pub base: RunConfig,
}

impl SweepPlan {
    pub fn standard_levels(scenario: Scenario, axis: Axis) -> Vec<usize> {
        match (axis, scenario) {
            (Axis::Sampling, Scenario::Bvp) => vec![40, 60, 80, 100],
            (Axis::Sampling, Scenario::Regression) => vec![10, 20, 40, 80],
            (Axis::Neurons, _) => vec![20, 40, 60, 80],
            (Axis::Layers, _) => vec![4, 6, 8, 10],
        }
    }

    pub fn new(axis: Axis, base: RunConfig) -> Self {
        SweepPlan {
            axis,
            levels: Self::standard_levels(base.scenario, axis),
            base,
        }
    }

    pub fn scenario(&self) -> Scenario {
        self.base.scenario
    }

    /// Config of level `index`: the axis value applied and the seed offset by `index`.
    pub fn level_config(&self, index: usize) -> RunConfig {
        let mut cfg = self.base.clone();
        let level = self.levels[index];
        match self.axis {
            Axis::Sampling => {
                cfg.collocation.n_interior = level;
                cfg.collocation.n_boundary = level;
            }
            Axis::Neurons => {
                cfg.network.hidden_layers = 4;
                cfg.network.width = level;
            }
            Axis::Layers => {
                cfg.network.hidden_layers = level;
                cfg.network.width = 20;
            }
        }
        cfg.seed = self.base.seed.wrapping_add(index as u64);
        cfg
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.levels.is_empty() {
            return Err(ConfigError::Invalid("sweep has no levels".into()));
        }
        let mut seen = self.levels.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.levels.len() {
            return Err(ConfigError::Invalid("sweep levels must be distinct".into()));
        }
        for i in 0..self.levels.len() {
            self.level_config(i).validate()?;
        }
        Ok(())
    }
}

/// Runs every level of `plan`. A level that fails is recorded with its status
/// and the sweep continues.
///
/// With `out`, each level writes into `level_<n>/` and the aggregate
/// `report.csv`, `sweep.csv`, `plot_data.csv`, and `timing.csv` go to `out`.
pub fn run_sweep(
    plan: &SweepPlan,
    out: Option<&Path>,
    observer: &mut dyn FnMut(usize, &HistoryEntry<f64>),
) -> Result<ExperimentReport, BenchError> {
    plan.validate()?;
    let mut rows = Vec::with_capacity(plan.levels.len());
    for (i, &level) in plan.levels.iter().enumerate() {
        let cfg = plan.level_config(i);
        let dir: Option<PathBuf> = out.map(|o| o.join(format!("level_{level}")));
        let row = match run_level(&cfg, Some(level), dir.as_deref(), &mut |h| observer(level, h)) {
            Ok(mut r) => r.rows.remove(0),
            Err(BenchError::Aborted { mut report, .. }) => report.rows.remove(0),
            Err(e) => RunRecord {
                run_id: run_id(&cfg),
                level: Some(level),
                seed: cfg.seed,
                config_hash: cfg.hash(),
                status: RunStatus::Failed(e.to_string()),
                epochs_completed: 0,
                initial: None,
                report: None,
                final_loss: None,
                wall_seconds: 0.0,
            },
        };
        rows.push(row);
    }
    let exp = ExperimentReport {
        scenario: plan.scenario(),
        axis: Some(plan.axis),
        test_grid: plan.base.test_grid,
        rows,
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.csv"), exp.report_csv()?)?;
        fs::write(dir.join("sweep.csv"), exp.sweep_csv()?)?;
        fs::write(dir.join("plot_data.csv"), exp.plot_csv()?)?;
        fs::write(dir.join("timing.csv"), exp.timing_csv()?)?;
    }
    Ok(exp)
}
