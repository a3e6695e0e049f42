use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cre_pinn::cre::{bound_report, AdmissiblePair, ErrorReport, NetworkFields, QuadratureGrid};
use cre_pinn::elasticity::ManufacturedProblem;
use cre_pinn::network::MixedSolution;
use cre_pinn::pinn::HistoryEntry;
use cre_pinn_bench::{
    run_scenario, run_sweep, selftest, tune_allocator, Axis, BenchError, ExperimentReport, RunConfig, Scenario,
    SweepPlan,
};

#[derive(Parser)]
#[command(name = "cre-pinn", version, about = "Mixed displacement-stress PINNs for 2D elasticity with CRE bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the boundary value scenario (physics only)
    Solve(RunArgs),
    /// Train the regression scenario (physics plus exact data)
    Regress(RunArgs),
    /// Train one run per level along an axis
    Sweep {
        /// bvp or regression
        #[arg(long)]
        scenario: Scenario,
        /// sampling, neurons, or layers
        #[arg(long)]
        axis: Axis,
        /// Comma-separated levels replacing the standard ones
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate the error bounds of saved networks or of the exact solution
    Estimate {
        /// Checkpoint directory holding the five `.net` files
        #[arg(long, conflicts_with = "exact", required_unless_present = "exact")]
        checkpoint: Option<PathBuf>,
        /// Use the closed-form solution as the admissible pair
        #[arg(long)]
        exact: bool,
        /// Run config supplying the material (defaults otherwise)
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        test_grid: usize,
        /// Directory for `estimate.csv`
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the oracle checks
    Selftest,
    /// Print the default config of a scenario
    Config {
        #[arg(long)]
        scenario: Scenario,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML run config; missing keys take scenario defaults
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Cells per side of the evaluation grid
    #[arg(long)]
    test_grid: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Suppress progress lines
    #[arg(long, short)]
    quiet: bool,
}

impl RunArgs {
    fn resolve(&self, scenario: Scenario) -> Result<RunConfig, BenchError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path, Some(scenario))?,
            None => RunConfig::default_for(scenario),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.test_grid {
            cfg.test_grid = n;
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn progress(quiet: bool, tag: &str, h: &HistoryEntry<f64>) {
    if !quiet {
        let b = &h.breakdown;
        eprintln!(
            "{tag}epoch {:>6} {:>8.1}s total {:.4e} | D {:.2e} f {:.2e} N {:.2e} C {:.2e} u {:.2e} s {:.2e}",
            h.epoch, h.wall_seconds, b.total, b.mse_gamma_d, b.mse_f, b.mse_gamma_n, b.mse_c, b.mse_u, b.mse_sigma
        );
    }
}

fn print_rows(exp: &ExperimentReport) {
    println!("{:>6} {:>10} {:>12} {:>12} {:>12} {:>9}", "level", "status", "psi", "phi", "varphi", "gap");
    for row in &exp.rows {
        let level = row.level.map(|l| l.to_string()).unwrap_or_else(|| "-".into());
        match row.report {
            Some(r) => println!(
                "{level:>6} {:>10} {:>12.4e} {:>12.4e} {:>12.4e} {:>9.4}",
                row.status.label(),
                r.psi,
                r.phi,
                r.varphi,
                r.sum_gap
            ),
            None => println!("{level:>6} {:>10} {:?}", row.status.label(), row.status),
        }
    }
}

fn single(scenario: Scenario, args: &RunArgs) -> Result<(), BenchError> {
    let cfg = args.resolve(scenario)?;
    let exp = run_scenario(&cfg, Some(&args.out), &mut |h| progress(args.quiet, "", h))?;
    print_rows(&exp);
    println!("wrote {}", args.out.display());
    Ok(())
}

fn sweep(scenario: Scenario, axis: Axis, levels: Option<Vec<usize>>, args: &RunArgs) -> Result<(), BenchError> {
    let base = args.resolve(scenario)?;
    let mut plan = SweepPlan::new(axis, base);
    if let Some(l) = levels {
        plan.levels = l;
    }
    let exp = run_sweep(&plan, Some(&args.out), &mut |level, h| {
        progress(args.quiet, &format!("[{axis} {level}] "), h)
    })?;
    print_rows(&exp);
    println!("wrote {}", args.out.join("sweep.csv").display());
    if exp.rows.iter().all(|r| r.status.is_completed()) {
        Ok(())
    } else {
        Err(BenchError::Failed("one or more sweep levels did not complete".into()))
    }
}

fn estimate(
    checkpoint: Option<&Path>,
    config: Option<&Path>,
    test_grid: usize,
    out: Option<&Path>,
) -> Result<(), BenchError> {
    let material = match config {
        Some(path) => RunConfig::load(path, None)?.material,
        None => Default::default(),
    };
    let problem = ManufacturedProblem::new(material);
    let grid = QuadratureGrid::new(test_grid)?;
    let (label, report) = match checkpoint {
        Some(dir) => {
            let sol = MixedSolution::<f64>::load_dir(dir)?;
            let fields = NetworkFields(&sol);
            (dir.display().to_string(), bound_report(&AdmissiblePair::new(&fields, &fields), &problem, &grid)?)
        }
        None => ("exact".to_string(), bound_report(&AdmissiblePair::new(&problem, &problem), &problem, &grid)?),
    };
    let line = report.csv_row(&label, test_grid);
    println!("{}", ErrorReport::<f64>::csv_header());
    println!("{line}");
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join("estimate.csv"),
            format!("{}\n{line}\n", ErrorReport::<f64>::csv_header()),
        )?;
    }
    Ok(())
}

fn main() -> ExitCode {
    tune_allocator();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(args) => single(Scenario::Bvp, args),
        Command::Regress(args) => single(Scenario::Regression, args),
        Command::Sweep {
            scenario,
            axis,
            levels,
            run,
        } => sweep(*scenario, *axis, levels.clone(), run),
        Command::Estimate {
            checkpoint,
            exact: _,
            config,
            test_grid,
            out,
        } => estimate(checkpoint.as_deref(), config.as_deref(), *test_grid, out.as_deref()),
        Command::Selftest => {
            let problem = ManufacturedProblem::new(Default::default());
            let checks = selftest::run_all(&problem);
            for c in &checks {
                println!("{c}");
            }
            if checks.iter().all(|c| c.passed) {
                Ok(())
            } else {
                Err(BenchError::Failed("self-test failed".into()))
            }
        }
        Command::Config { scenario } => {
            print!("{}", RunConfig::default_for(*scenario).to_toml());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
