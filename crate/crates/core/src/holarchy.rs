//! Holarchic learning schemes.
//!
//! A holarchic pass walks the stages of a [`HolonStagePlan`] in order and runs
//! `tau` learning iterations inside every holon of a stage, with the holon
//! root acting as the root of each iteration. Selections persist from one
//! stage to the next; nothing else crosses a stage boundary.
//!
//! The schemes decide when passes run instead of whole-tree iterations:
//! before the baseline (initialization), in place of it (runtime), or after
//! the baseline has converged (termination). A pass whose whole-tree cost
//! exceeds the incumbent is rolled back, so every scheme keeps a monotone
//! system-wide cost trace.

use alloc::vec::Vec;

use crate::engine::{
    baseline_iteration, BaselineConfig, Context, ConvergenceTracker, HolonRun, RunTrace, Selections,
};
use crate::error::Error;
use crate::netsim::{FailureEvent, LedgerKey, MessageLedger, Network};
use crate::plan::{CostFunction, PlanSet};
use crate::topology::{
    decompose_holarchy, partition_on_failure, HolonStagePlan, Scale, TreeTopology,
};
use crate::Position;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Baseline,
    HolarchicInitialization,
    HolarchicRuntime,
    HolarchicTermination,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::Baseline,
        Scheme::HolarchicInitialization,
        Scheme::HolarchicRuntime,
        Scheme::HolarchicTermination,
    ];

    pub fn is_holarchic(self) -> bool {
        self != Scheme::Baseline
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    /// Learning iterations per holon and stage.
    pub tau: usize,
    pub scale: Scale,
    pub branch: Option<usize>,
    /// Holarchic passes before switching to the baseline
    /// ([`Scheme::HolarchicInitialization`] only).
    pub init_passes: usize,
    pub limits: BaselineConfig,
}

impl SchemeConfig {
    pub fn new(scheme: Scheme) -> Self {
        Self {
            scheme,
            tau: 5,
            scale: Scale::Full,
            branch: None,
            init_passes: 1,
            limits: BaselineConfig::default(),
        }
    }

    pub fn with_tau(mut self, tau: usize) -> Self {
        self.tau = tau;
        self
    }

    pub fn partial(mut self, branch: usize) -> Self {
        self.scale = Scale::Partial;
        self.branch = Some(branch);
        self
    }

    pub fn with_limits(mut self, max_iterations: usize, conv_window: usize) -> Self {
        self.limits = BaselineConfig {
            max_iterations,
            conv_window,
        };
        self
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.tau == 0 {
            return Err(Error::Config("tau must be at least 1"));
        }
        if self.init_passes == 0 {
            return Err(Error::Config("init_passes must be at least 1"));
        }
        if self.limits.max_iterations == 0 {
            return Err(Error::Config("at least one iteration is required"));
        }
        if self.scale == Scale::Partial && self.branch.is_none() {
            return Err(Error::Config("partial scale requires a branch index"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolarchicPassResult {
    /// Accepted cost of every holon at the end of its iterations, per stage.
    pub stage_costs: Vec<Vec<f64>>,
    /// Cost of the top holon's accepted global response.
    pub cost: f64,
    pub global_response: Vec<f64>,
    pub messages_total: u64,
    pub messages_sync: u64,
}

/// Runs one holarchic pass, booking messages under main iteration `iteration`.
pub fn run_holarchic_pass(
    ctx: Context<'_>,
    plan: &HolonStagePlan,
    tau: usize,
    selections: &mut Selections,
    net: &Network,
    ledger: &mut MessageLedger,
    iteration: usize,
) -> Result<HolarchicPassResult, Error> {
    if plan.is_empty() {
        return Err(Error::Config("holon stage plan is empty"));
    }
    if tau == 0 {
        return Err(Error::Config("tau must be at least 1"));
    }
    let mut pass_ledger = MessageLedger::new();
    let mut stage_costs = Vec::with_capacity(plan.len());
    let mut last = None;
    for (j, stage) in plan.stages.iter().enumerate() {
        // holons of a stage are disjoint, so running them one after another
        // is indistinguishable from running them in parallel
        let mut costs = Vec::with_capacity(stage.len());
        for (h, holon) in stage.iter().enumerate() {
            let key = LedgerKey::new(iteration, j, h);
            let mut run = HolonRun::enter(ctx, holon.root, j, selections);
            let mut cost = 0.0;
            for _ in 0..tau {
                cost = run.iterate(selections, net, &mut pass_ledger, key).cost;
            }
            costs.push(cost);
            last = Some(run.global_response().to_vec());
        }
        stage_costs.push(costs);
    }
    let cost = *stage_costs
        .last()
        .and_then(|s| s.last())
        .expect("non-empty plan");
    ledger.merge(&pass_ledger);
    Ok(HolarchicPassResult {
        stage_costs,
        cost,
        global_response: last.expect("non-empty plan"),
        messages_total: pass_ledger.total(),
        messages_sync: pass_ledger.sync(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RunPhase {
    Initialization { remaining: usize },
    Baseline,
    Runtime,
    TerminationBaseline,
    TerminationBoost,
    Done,
}

/// Step-wise executor of a scheme over one tree.
struct Runner<'a> {
    ctx: Context<'a>,
    net: Network,
    stage_plan: Option<HolonStagePlan>,
    cfg: SchemeConfig,
    trace: RunTrace,
    tracker: ConvergenceTracker,
    phase: RunPhase,
}

impl<'a> Runner<'a> {
    fn new(ctx: Context<'a>, cfg: SchemeConfig, selections: Selections) -> Result<Self, Error> {
        cfg.validate()?;
        let stage_plan = if cfg.scheme.is_holarchic() {
            Some(decompose_holarchy(ctx.topology, cfg.scale, cfg.branch)?)
        } else {
            None
        };
        let phase = match cfg.scheme {
            Scheme::Baseline => RunPhase::Baseline,
            Scheme::HolarchicInitialization => RunPhase::Initialization {
                remaining: cfg.init_passes,
            },
            Scheme::HolarchicRuntime => RunPhase::Runtime,
            Scheme::HolarchicTermination => RunPhase::TerminationBaseline,
        };
        let mut trace = RunTrace::new(selections.len(), ctx.dim());
        trace.selections = selections;
        Ok(Self {
            ctx,
            net: Network::new(ctx.topology),
            stage_plan,
            cfg,
            trace,
            tracker: ConvergenceTracker::new(cfg.limits.conv_window),
            phase,
        })
    }

    fn iteration(&self) -> usize {
        self.trace.iterations()
    }

    fn is_done(&self) -> bool {
        self.phase == RunPhase::Done
    }

    /// Runs one main iteration. Returns `false` once the scheme has finished.
    fn step(&mut self) -> Result<bool, Error> {
        if self.iteration() >= self.cfg.limits.max_iterations {
            self.phase = RunPhase::Done;
        }
        match self.phase {
            RunPhase::Done => return Ok(false),
            RunPhase::Initialization { remaining } => {
                self.holarchic_step()?;
                self.phase = if remaining > 1 {
                    RunPhase::Initialization {
                        remaining: remaining - 1,
                    }
                } else {
                    self.tracker.reset();
                    RunPhase::Baseline
                };
            }
            RunPhase::Baseline => {
                let cost = self.baseline_step();
                if self.tracker.observe(cost) {
                    self.phase = RunPhase::Done;
                }
            }
            RunPhase::Runtime => {
                let cost = self.holarchic_step()?;
                if self.tracker.observe(cost) {
                    self.phase = RunPhase::Done;
                }
            }
            RunPhase::TerminationBaseline => {
                let cost = self.baseline_step();
                if self.tracker.observe(cost) {
                    self.phase = RunPhase::TerminationBoost;
                }
            }
            RunPhase::TerminationBoost => {
                let before = self.trace.final_cost();
                let cost = self.holarchic_step()?;
                if before.is_some_and(|b| cost >= b) {
                    self.phase = RunPhase::Done;
                }
            }
        }
        if self.iteration() >= self.cfg.limits.max_iterations {
            self.phase = RunPhase::Done;
        }
        Ok(!self.is_done())
    }

    fn baseline_step(&mut self) -> f64 {
        let t = self.iteration();
        let outcome = baseline_iteration(
            self.ctx,
            &mut self.trace.selections,
            &self.net,
            &mut self.trace.ledger,
            t,
        );
        self.trace.record(t, outcome.cost);
        outcome.cost
    }

    fn holarchic_step(&mut self) -> Result<f64, Error> {
        let t = self.iteration();
        let incumbent = self
            .ctx
            .all_selected(&self.trace.selections)
            .then(|| self.ctx.system_cost(&self.trace.selections));
        let snapshot = self.trace.selections.clone();
        let plan = self
            .stage_plan
            .as_ref()
            .expect("holarchic scheme has a stage plan");
        let pass = run_holarchic_pass(
            self.ctx,
            plan,
            self.cfg.tau,
            &mut self.trace.selections,
            &self.net,
            &mut self.trace.ledger,
            t,
        )?;
        let cost = match incumbent {
            Some(best) if pass.cost > best => {
                self.trace.selections = snapshot;
                best
            }
            _ => pass.cost,
        };
        self.trace.record(t, cost);
        Ok(cost)
    }

    fn finish(mut self) -> RunTrace {
        self.trace.global_response = self.ctx.system_response(&self.trace.selections);
        self.trace
    }
}

/// Runs a learning scheme to convergence or `cfg.limits.max_iterations` main
/// iterations. For holarchic schemes every pass counts as one main iteration.
pub fn run_scheme(
    cfg: &SchemeConfig,
    topology: &TreeTopology,
    plans: &[PlanSet],
    cf: CostFunction,
) -> Result<RunTrace, Error> {
    let ctx = Context::new(topology, plans, cf)?;
    let mut runner = Runner::new(ctx, *cfg, Selections::new(plans.len()))?;
    while runner.step()? {}
    Ok(runner.finish())
}

/// Learning trace of one component that survived a failure.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentTrace {
    pub topology: TreeTopology,
    /// Main iterations after the failure, component-local numbering.
    pub trace: RunTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MitigationTrace {
    /// System-wide record: whole-tree cost before the failure, cost of the
    /// union of the survivors' selections after it.
    pub trace: RunTrace,
    /// Number of main iterations completed on the intact tree.
    pub iterations_before_failure: usize,
    /// Positions (in the original tree) that became holon roots.
    pub new_roots: Vec<Position>,
    pub components: Vec<ComponentTrace>,
}

impl MitigationTrace {
    pub fn survivors_cost(&self) -> Option<f64> {
        self.trace.final_cost()
    }
}

/// Runs `cfg` on the intact tree, applies `failure` at the start of main
/// iteration `failure.at_iteration` (1-based), then continues with
/// independent holarchic-runtime learning inside every surviving component.
pub fn run_mitigation_scenario(
    topology: &TreeTopology,
    plans: &[PlanSet],
    cf: CostFunction,
    cfg: &SchemeConfig,
    failure: &FailureEvent,
) -> Result<MitigationTrace, Error> {
    if failure.at_iteration == 0 {
        return Err(Error::Config("failures take effect from iteration 1 on"));
    }
    if failure.targets.is_empty() {
        let trace = run_scheme(cfg, topology, plans, cf)?;
        return Ok(MitigationTrace {
            iterations_before_failure: trace.iterations(),
            trace,
            new_roots: Vec::new(),
            components: Vec::new(),
        });
    }

    let ctx = Context::new(topology, plans, cf)?;
    let mut runner = Runner::new(ctx, *cfg, Selections::new(plans.len()))?;
    while runner.iteration() + 1 < failure.at_iteration {
        if !runner.step()? {
            break;
        }
    }
    let before = runner.iteration();
    runner.net.advance_to(before);
    let mut net = runner.net.clone();
    let new_roots = net.inject(failure)?;
    let parts = partition_on_failure(topology, &net.failure_set())?;

    let mut system = runner.finish();
    let max_iterations = cfg.limits.max_iterations;
    let component_cfg = SchemeConfig {
        scheme: Scheme::HolarchicRuntime,
        scale: Scale::Full,
        branch: None,
        limits: BaselineConfig {
            max_iterations: max_iterations.saturating_sub(before).max(1),
            conv_window: cfg.limits.conv_window,
        },
        ..*cfg
    };
    let contexts = parts
        .iter()
        .map(|part| Context::new(part, plans, cf))
        .collect::<Result<Vec<_>, _>>()?;
    let mut runners = contexts
        .iter()
        .map(|&c| Runner::new(c, component_cfg, system.selections.clone()))
        .collect::<Result<Vec<_>, _>>()?;

    let survivors: Vec<usize> = parts
        .iter()
        .flat_map(|p| p.agents().iter().copied())
        .collect();
    let mut t = before;
    while t < max_iterations && runners.iter().any(|r| !r.is_done()) {
        let mut total = 0;
        let mut sync = 0;
        for r in runners.iter_mut().filter(|r| !r.is_done()) {
            let local = r.iteration();
            r.step()?;
            if r.iteration() > local {
                total += r.trace.messages_total[local];
                sync = sync.max(r.trace.messages_sync[local]);
            }
        }
        let mut union = Selections::new(plans.len());
        for r in &runners {
            for &a in r.ctx.topology.agents() {
                if let Some(s) = r.trace.selections.get(a) {
                    union.set(a, s);
                }
            }
        }
        let g = union.global_response(&survivors, plans, ctx.dim());
        system.costs.push(cf.global_cost(&g));
        system.messages_total.push(total);
        system.messages_sync.push(sync);
        system.selections = union;
        system.global_response = g;
        t += 1;
    }
    if runners.is_empty() {
        system.selections = Selections::new(plans.len());
        system.global_response = alloc::vec![0.0; ctx.dim()];
    }
    for r in &runners {
        system.ledger.merge(&r.trace.ledger);
    }
    let components = parts
        .iter()
        .zip(runners)
        .map(|(topology, r)| ComponentTrace {
            trace: r.finish(),
            topology: topology.clone(),
        })
        .collect();
    Ok(MitigationTrace {
        trace: system,
        iterations_before_failure: before,
        new_roots,
        components,
    })
}
