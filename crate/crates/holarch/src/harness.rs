//! Experiment sweeps: grid expansion, seeding, parallel execution and the
//! `curves.csv` / `summary.csv` outputs.
//!
//! Every repetition `rep` of a grid point uses the seed `base_seed + rep` for
//! both the synthetic plans and the agent placement, so any single run can be
//! recreated from its row alone. Runs sharing `(c, lambda, rep)` form one
//! task: they share the plans, the tree and one matched baseline run, which
//! the improvement index and the relative performance are computed against.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use holarchy_core::metrics::{improvement_index, relative_performance, MetricSample};
use holarchy_core::{
    run_baseline, run_mitigation_scenario, run_scheme, CostFunction, FailureEvent, PlanSet,
    RunTrace, Scale, Scheme, SchemeConfig, TreeTopology,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{generate_synthetic, load_plans};

pub const CURVES_FILE: &str = "curves.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

pub fn scheme_name(scheme: Scheme) -> &'static str {
    match scheme {
        Scheme::Baseline => "baseline",
        Scheme::HolarchicInitialization => "h-init",
        Scheme::HolarchicRuntime => "h-runtime",
        Scheme::HolarchicTermination => "h-term",
    }
}

pub fn parse_scheme(name: &str) -> Option<Scheme> {
    Scheme::ALL.into_iter().find(|&s| scheme_name(s) == name)
}

pub fn scale_name(scale: Scale) -> &'static str {
    match scale {
        Scale::Full => "full",
        Scale::Partial => "partial",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic {
        plans: usize,
        dim: usize,
    },
    /// Directory of `agent_<id>.plans` files; the number of files fixes the
    /// number of agents and the seed only drives the placement.
    Files(PathBuf),
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic {
            plans: 16,
            dim: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchSelection {
    One(usize),
    /// Every child of the root, one run each.
    All,
}

/// Failed node positions and the 1-based main iteration the failure hits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailureSpec {
    pub nodes: Vec<usize>,
    pub at_iteration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub schemes: Vec<Scheme>,
    /// Scales tried for holarchic schemes; the baseline has none.
    pub scales: Vec<Scale>,
    pub branch: BranchSelection,
    pub children: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub agents: usize,
    pub max_iterations: usize,
    pub conv_window: usize,
    pub tau: usize,
    pub init_passes: usize,
    pub reps: usize,
    pub base_seed: u64,
    pub failure: Option<FailureSpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::default(),
            schemes: vec![Scheme::Baseline],
            scales: vec![Scale::Full],
            branch: BranchSelection::All,
            children: vec![2],
            lambdas: vec![0.0],
            agents: 127,
            max_iterations: 40,
            conv_window: 3,
            tau: 5,
            init_passes: 1,
            reps: 10,
            base_seed: 0,
            failure: None,
        }
    }
}

impl ExperimentConfig {
    /// The desk-scale version of the full parameter grid: `c` in 2..=5,
    /// `lambda` in {0, 0.25, 0.5, 0.75}, every scheme, full scale and every
    /// partial-scale branch.
    pub fn full_grid(self) -> Self {
        Self {
            schemes: Scheme::ALL.to_vec(),
            scales: vec![Scale::Full, Scale::Partial],
            branch: BranchSelection::All,
            children: vec![2, 3, 4, 5],
            lambdas: vec![0.0, 0.25, 0.5, 0.75],
            ..self
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        anyhow::ensure!(!self.schemes.is_empty(), "no scheme selected");
        anyhow::ensure!(!self.children.is_empty(), "no fan-out selected");
        anyhow::ensure!(!self.lambdas.is_empty(), "no lambda selected");
        anyhow::ensure!(
            !self.scales.is_empty() || self.schemes.iter().all(|s| !s.is_holarchic()),
            "holarchic schemes need a scale"
        );
        anyhow::ensure!(self.agents >= 1, "at least one agent is required");
        anyhow::ensure!(self.reps >= 1, "at least one repetition is required");
        anyhow::ensure!(
            self.max_iterations >= 1,
            "at least one iteration is required"
        );
        anyhow::ensure!(self.tau >= 1, "tau must be at least 1");
        for &c in &self.children {
            anyhow::ensure!(c >= 1, "children per node must be at least 1, got {c}");
        }
        for &l in &self.lambdas {
            CostFunction::variance(l).with_context(|| format!("lambda {l}"))?;
        }
        if let Some(f) = &self.failure {
            anyhow::ensure!(
                f.at_iteration >= 1,
                "failures take effect from iteration 1 on"
            );
        }
        if let DatasetSource::Synthetic { plans, dim } = self.dataset {
            anyhow::ensure!(
                plans >= 1 && dim >= 1,
                "synthetic plans and dimension must be positive"
            );
        }
        Ok(())
    }

    fn scheme_config(
        &self,
        scheme: Scheme,
        scale: Option<Scale>,
        branch: Option<usize>,
    ) -> SchemeConfig {
        let mut cfg = SchemeConfig::new(scheme)
            .with_tau(self.tau)
            .with_limits(self.max_iterations, self.conv_window);
        cfg.init_passes = self.init_passes;
        if let (Some(Scale::Partial), Some(b)) = (scale, branch) {
            cfg = cfg.partial(b);
        }
        cfg
    }
}

/// Identity of one run within a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RunKey {
    pub scheme: Scheme,
    pub c: usize,
    pub lambda: f64,
    /// `None` for the baseline.
    pub scale: Option<Scale>,
    pub branch: Option<usize>,
    pub rep: usize,
    pub seed: u64,
}

impl RunKey {
    pub fn scale_label(&self) -> &'static str {
        self.scale.map_or("none", scale_name)
    }
}

impl fmt::Display for RunKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-c{}-l{}-{}",
            scheme_name(self.scheme),
            self.c,
            self.lambda,
            self.scale_label()
        )?;
        if let Some(b) = self.branch {
            write!(f, "-b{b}")?;
        }
        write!(f, "-r{}", self.rep)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub key: RunKey,
    pub outcome: Result<RunResult, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub trace: RunTrace,
    pub sample: MetricSample,
    pub improvement_index: f64,
    pub relative_performance: Option<f64>,
}

#[derive(Debug, Serialize)]
struct CurveRow<'a> {
    run_id: &'a str,
    scheme: &'static str,
    c: usize,
    lambda: f64,
    scale: &'static str,
    iteration: usize,
    global_cost: f64,
    #[serde(rename = "M_total_cum")]
    m_total_cum: u64,
    #[serde(rename = "M_sync_cum")]
    m_sync_cum: u64,
}

#[derive(Debug, Serialize)]
struct SummaryRow<'a> {
    run_id: &'a str,
    scheme: &'static str,
    c: usize,
    lambda: f64,
    scale: &'static str,
    branch: Option<usize>,
    rep: usize,
    seed: u64,
    #[serde(rename = "C_first")]
    c_first: Option<f64>,
    #[serde(rename = "C_convergence")]
    c_convergence: Option<f64>,
    iterations: Option<usize>,
    iterations_to_convergence: Option<usize>,
    #[serde(rename = "M_total")]
    m_total: Option<u64>,
    #[serde(rename = "M_sync")]
    m_sync: Option<u64>,
    improvement_index: Option<f64>,
    relative_performance: Option<f64>,
    status: &'static str,
    error: &'a str,
}

/// Runs sharing plans, placement and a matched baseline.
#[derive(Debug, Clone, Copy)]
struct Task {
    c: usize,
    lambda: f64,
    rep: usize,
}

fn tasks(cfg: &ExperimentConfig) -> Vec<Task> {
    let mut out = Vec::new();
    for &c in &cfg.children {
        for &lambda in &cfg.lambdas {
            for rep in 0..cfg.reps {
                out.push(Task { c, lambda, rep });
            }
        }
    }
    out
}

fn error_records(cfg: &ExperimentConfig, task: Task, seed: u64, message: &str) -> Vec<RunRecord> {
    cfg.schemes
        .iter()
        .flat_map(|&scheme| {
            let scales: Vec<Option<Scale>> = if scheme.is_holarchic() {
                cfg.scales.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            scales.into_iter().map(move |scale| RunKey {
                scheme,
                c: task.c,
                lambda: task.lambda,
                scale,
                branch: None,
                rep: task.rep,
                seed,
            })
        })
        .map(|key| RunRecord {
            key,
            outcome: Err(message.to_string()),
        })
        .collect()
}

fn sample(key: &RunKey, trace: &RunTrace) -> MetricSample {
    MetricSample {
        run_id: key.to_string(),
        scheme: key.scheme,
        first_cost: trace.first_cost().unwrap_or(f64::NAN),
        converged_cost: trace.final_cost().unwrap_or(f64::NAN),
        iterations_to_convergence: trace.iterations_to_convergence(),
        messages_total: trace.messages_total.iter().sum(),
        messages_sync: trace.messages_sync.iter().sum(),
    }
}

fn result(key: &RunKey, trace: RunTrace, baseline: &MetricSample) -> RunResult {
    let sample = sample(key, &trace);
    RunResult {
        improvement_index: improvement_index(baseline.converged_cost, sample.converged_cost),
        relative_performance: relative_performance(
            sample.first_cost,
            sample.converged_cost,
            baseline.first_cost,
            baseline.converged_cost,
        ),
        trace,
        sample,
    }
}

fn run_task(
    cfg: &ExperimentConfig,
    shared_plans: Option<&[PlanSet]>,
    task: Task,
) -> Vec<RunRecord> {
    let seed = cfg.base_seed.wrapping_add(task.rep as u64);
    let generated;
    let plans = match (shared_plans, &cfg.dataset) {
        (Some(p), _) => p,
        (None, DatasetSource::Synthetic { plans, dim }) => {
            generated = generate_synthetic(cfg.agents, *plans, *dim, seed);
            &generated[..]
        }
        (None, DatasetSource::Files(_)) => {
            unreachable!("file datasets are loaded before the sweep")
        }
    };
    let cf = CostFunction::variance(task.lambda).expect("lambda validated");
    let topology = match TreeTopology::build_tree(plans.len(), task.c, seed) {
        Ok(t) => t,
        Err(e) => return error_records(cfg, task, seed, &e.to_string()),
    };
    let baseline_cfg = cfg.scheme_config(Scheme::Baseline, None, None);
    let baseline = match run_baseline(&topology, plans, cf, baseline_cfg.limits) {
        Ok(t) => t,
        Err(e) => return error_records(cfg, task, seed, &e.to_string()),
    };
    let key = |scheme, scale, branch| RunKey {
        scheme,
        c: task.c,
        lambda: task.lambda,
        scale,
        branch,
        rep: task.rep,
        seed,
    };
    let baseline_sample = sample(&key(Scheme::Baseline, None, None), &baseline);

    let mut runs = Vec::new();
    for &scheme in &cfg.schemes {
        if !scheme.is_holarchic() {
            runs.push(key(scheme, None, None));
            continue;
        }
        for &scale in &cfg.scales {
            match (scale, cfg.branch) {
                (Scale::Full, _) => runs.push(key(scheme, Some(scale), None)),
                (Scale::Partial, BranchSelection::One(b)) => {
                    runs.push(key(scheme, Some(scale), Some(b)))
                }
                (Scale::Partial, BranchSelection::All) => {
                    for b in 0..topology.children(topology.root()).len() {
                        runs.push(key(scheme, Some(scale), Some(b)));
                    }
                }
            }
        }
    }

    runs.into_iter()
        .map(|key| {
            let scheme_cfg = cfg.scheme_config(key.scheme, key.scale, key.branch);
            let trace = match &cfg.failure {
                Some(f) => {
                    let event = FailureEvent::crash(f.at_iteration, f.nodes.iter().copied());
                    run_mitigation_scenario(&topology, plans, cf, &scheme_cfg, &event)
                        .map(|m| m.trace)
                }
                None if key.scheme == Scheme::Baseline => Ok(baseline.clone()),
                None => run_scheme(&scheme_cfg, &topology, plans, cf),
            };
            let outcome = trace
                .map(|t| result(&key, t, &baseline_sample))
                .map_err(|e| e.to_string());
            RunRecord { key, outcome }
        })
        .collect()
}

/// Executes the sweep on `threads` workers (all cores when `None`). The
/// records come back in grid order whatever the thread count.
pub fn run_experiments(
    cfg: &ExperimentConfig,
    threads: Option<usize>,
) -> anyhow::Result<Vec<RunRecord>> {
    cfg.validate()?;
    let loaded = match &cfg.dataset {
        DatasetSource::Files(dir) => {
            Some(load_plans(dir).with_context(|| format!("loading {}", dir.display()))?)
        }
        DatasetSource::Synthetic { .. } => None,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().context("starting worker pool")?;
    let records = pool.install(|| {
        tasks(cfg)
            .into_par_iter()
            .map(|task| run_task(cfg, loaded.as_deref(), task))
            .collect::<Vec<_>>()
    });
    Ok(records.into_iter().flatten().collect())
}

pub fn write_curves(path: &Path, records: &[RunRecord]) -> anyhow::Result<()> {
    // The header is written explicitly so that a sweep without any
    // successful run still yields a well-formed file.
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record([
        "run_id",
        "scheme",
        "c",
        "lambda",
        "scale",
        "iteration",
        "global_cost",
        "M_total_cum",
        "M_sync_cum",
    ])?;
    for record in records {
        let Ok(result) = &record.outcome else {
            continue;
        };
        let id = record.key.to_string();
        let trace = &result.trace;
        for (i, ((&cost, total), sync)) in trace
            .costs
            .iter()
            .zip(trace.cumulative_total())
            .zip(trace.cumulative_sync())
            .enumerate()
        {
            w.serialize(CurveRow {
                run_id: &id,
                scheme: scheme_name(record.key.scheme),
                c: record.key.c,
                lambda: record.key.lambda,
                scale: record.key.scale_label(),
                iteration: i + 1,
                global_cost: cost,
                m_total_cum: total,
                m_sync_cum: sync,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, records: &[RunRecord]) -> anyhow::Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for record in records {
        let id = record.key.to_string();
        let k = &record.key;
        let ok = record.outcome.as_ref().ok();
        let s = ok.map(|r| &r.sample);
        w.serialize(SummaryRow {
            run_id: &id,
            scheme: scheme_name(k.scheme),
            c: k.c,
            lambda: k.lambda,
            scale: k.scale_label(),
            branch: k.branch,
            rep: k.rep,
            seed: k.seed,
            c_first: s.map(|s| s.first_cost),
            c_convergence: s.map(|s| s.converged_cost),
            iterations: ok.map(|r| r.trace.iterations()),
            iterations_to_convergence: s.map(|s| s.iterations_to_convergence),
            m_total: s.map(|s| s.messages_total),
            m_sync: s.map(|s| s.messages_sync),
            improvement_index: ok.map(|r| r.improvement_index),
            relative_performance: ok.and_then(|r| r.relative_performance),
            status: if ok.is_some() { "ok" } else { "error" },
            error: record.outcome.as_ref().err().map_or("", String::as_str),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Writes both result files into `out`, creating the directory.
pub fn write_results(out: &Path, records: &[RunRecord]) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_curves(&out.join(CURVES_FILE), records)?;
    write_summary(&out.join(SUMMARY_FILE), records)
}
