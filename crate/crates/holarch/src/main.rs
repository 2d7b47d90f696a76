use std::fs;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::Context as _;
use clap::{Parser, ValueEnum};
use holarch::compare::{
    check_comparable, compare, read_curves, write_compare, MessageColumn, DEFAULT_BUDGETS,
};
use holarch::harness::{
    run_experiments, write_results, BranchSelection, DatasetSource, ExperimentConfig, FailureSpec,
};
use holarchy_core::{Scale, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Baseline,
    HInit,
    HRuntime,
    HTerm,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Baseline => Scheme::Baseline,
            SchemeArg::HInit => Scheme::HolarchicInitialization,
            SchemeArg::HRuntime => Scheme::HolarchicRuntime,
            SchemeArg::HTerm => Scheme::HolarchicTermination,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScaleArg {
    Full,
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct BranchArg(BranchSelection);

impl FromStr for BranchArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            return Ok(BranchArg(BranchSelection::All));
        }
        s.parse()
            .map(|b| BranchArg(BranchSelection::One(b)))
            .map_err(|_| format!("expected a branch index or `all`, got {s:?}"))
    }
}

/// Simulates collective plan selection on tree overlays with the baseline
/// and holarchic learning schemes, and writes learning curves and run
/// summaries as CSV.
#[derive(Debug, Parser)]
#[command(name = "holarch", version)]
struct Cli {
    /// `synthetic` or a directory of `agent_<id>.plans` files.
    #[arg(long, default_value = "synthetic")]
    dataset: String,
    /// Plans per agent of the synthetic dataset.
    #[arg(long, default_value_t = 16)]
    plans: usize,
    /// Plan dimension of the synthetic dataset.
    #[arg(long, default_value_t = 100)]
    dim: usize,
    /// Learning schemes to run (comma separated).
    #[arg(long, value_enum, value_delimiter = ',', default_value = "baseline")]
    scheme: Vec<SchemeArg>,
    /// Holarchic scale; both scales with `--paper-grid` unless given.
    #[arg(long, value_enum)]
    scale: Option<ScaleArg>,
    /// Root branch for partial scale: an index or `all`.
    #[arg(long, default_value = "all")]
    branch: BranchArg,
    /// Children per tree node (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "2")]
    children: Vec<usize>,
    /// Weight of the local cost in plan selection (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "0")]
    lambda: Vec<f64>,
    /// Number of agents (synthetic dataset only).
    #[arg(long, default_value_t = 127)]
    agents: usize,
    /// Maximum number of main iterations per run.
    #[arg(long, default_value_t = 40)]
    iterations: usize,
    /// Consecutive unchanged costs that end a run.
    #[arg(long, default_value_t = 3)]
    conv_window: usize,
    /// Learning iterations per holon and stage.
    #[arg(long, default_value_t = 5)]
    tau: usize,
    /// Holarchic passes before the baseline takes over (h-init).
    #[arg(long, default_value_t = 1)]
    init_passes: usize,
    /// Repetitions per grid point; repetition r uses seed `seed + r`.
    #[arg(long, default_value_t = 10)]
    reps: usize,
    /// Base seed for plans and agent placement.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tree positions that crash (comma separated).
    #[arg(long, value_delimiter = ',', requires = "fail_at")]
    fail_node: Vec<usize>,
    /// Main iteration (1-based) at which the failed nodes crash.
    #[arg(long, requires = "fail_node")]
    fail_at: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Sweep every fan-out, lambda, scheme, scale and branch.
    #[arg(long)]
    paper_grid: bool,
    /// Compare two `curves.csv` files at fixed message budgets instead of
    /// running experiments.
    #[arg(long, num_args = 2, value_names = ["CURVES_A", "CURVES_B"])]
    compare: Option<Vec<PathBuf>>,
    /// Message budgets for `--compare` (comma separated).
    #[arg(long, value_delimiter = ',')]
    budgets: Vec<u64>,
    /// Budget synchronized instead of total messages in `--compare`.
    #[arg(long)]
    sync: bool,
    /// Worker threads; all cores when unset.
    #[arg(long, env = "HOLARCH_THREADS")]
    threads: Option<usize>,
}

impl Cli {
    fn experiment(&self) -> ExperimentConfig {
        let dataset = match self.dataset.as_str() {
            "synthetic" => DatasetSource::Synthetic {
                plans: self.plans,
                dim: self.dim,
            },
            dir => DatasetSource::Files(dir.into()),
        };
        let scales = match self.scale {
            Some(ScaleArg::Full) => vec![Scale::Full],
            Some(ScaleArg::Partial) => vec![Scale::Partial],
            None if self.paper_grid => vec![Scale::Full, Scale::Partial],
            None => vec![Scale::Full],
        };
        let cfg = ExperimentConfig {
            dataset,
            schemes: self.scheme.iter().map(|&s| s.into()).collect(),
            scales,
            branch: self.branch.0,
            children: self.children.clone(),
            lambdas: self.lambda.clone(),
            agents: self.agents,
            max_iterations: self.iterations,
            conv_window: self.conv_window,
            tau: self.tau,
            init_passes: self.init_passes,
            reps: self.reps,
            base_seed: self.seed,
            failure: self.fail_at.map(|at| FailureSpec {
                nodes: self.fail_node.clone(),
                at_iteration: at,
            }),
        };
        if self.paper_grid {
            let scales = cfg.scales.clone();
            ExperimentConfig {
                scales,
                ..cfg.full_grid()
            }
        } else {
            cfg
        }
    }
}

fn run_compare(cli: &Cli, files: &[PathBuf]) -> anyhow::Result<()> {
    let a = read_curves(&files[0])?;
    let b = read_curves(&files[1])?;
    check_comparable(&a, &b)?;
    let budgets = if cli.budgets.is_empty() {
        DEFAULT_BUDGETS.to_vec()
    } else {
        cli.budgets.clone()
    };
    let column = if cli.sync {
        MessageColumn::Sync
    } else {
        MessageColumn::Total
    };
    let curves: Vec<_> = a.into_iter().chain(b).collect();
    let rows = compare(&curves, &budgets, column);
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let path = cli.out.join("compare.csv");
    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_compare(io::BufWriter::new(file), &rows)?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<ExitCode> {
    if let Some(files) = &cli.compare {
        run_compare(cli, files)?;
        return Ok(ExitCode::SUCCESS);
    }
    let cfg = cli.experiment();
    let records = run_experiments(&cfg, cli.threads)?;
    write_results(&cli.out, &records)?;
    let failed: Vec<_> = records.iter().filter(|r| r.outcome.is_err()).collect();
    println!("wrote {} runs to {}", records.len(), cli.out.display());
    if failed.is_empty() {
        return Ok(ExitCode::SUCCESS);
    }
    for r in &failed {
        eprintln!("run {} failed: {}", r.key, r.outcome.as_ref().unwrap_err());
    }
    eprintln!("{} of {} runs failed", failed.len(), records.len());
    Ok(ExitCode::from(2))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
