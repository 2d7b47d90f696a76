//! The baseline learning engine.
//!
//! One learning iteration over a tree (or a holon) is a bottom-up pass, in
//! which every agent picks a plan from the aggregates it receives and sends
//! its subtree aggregate to its parent, followed by a top-down pass, in which
//! the root accepts the candidate global response only if it does not raise
//! the global cost and broadcasts the outcome. A rejected candidate rolls
//! every agent back to its previous selection.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::netsim::{LedgerKey, Message, MessageLedger, Network, Phase};
use crate::plan::{CostFunction, PlanSet};
use crate::topology::TreeTopology;
use crate::{AgentId, Position};

/// Absolute cost difference under which two consecutive costs count as equal.
pub const CONVERGENCE_EPSILON: f64 = 1e-12;

/// Committed plan choice per agent id; `None` until the agent has taken part
/// in an accepted iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selections {
    chosen: Vec<Option<usize>>,
}

impl Selections {
    pub fn new(num_agents: usize) -> Self {
        Self {
            chosen: vec![None; num_agents],
        }
    }

    pub fn get(&self, agent: AgentId) -> Option<usize> {
        self.chosen.get(agent).copied().flatten()
    }

    pub fn set(&mut self, agent: AgentId, plan: usize) {
        self.chosen[agent] = Some(plan);
    }

    pub fn as_slice(&self) -> &[Option<usize>] {
        &self.chosen
    }

    pub fn len(&self) -> usize {
        self.chosen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chosen.is_empty()
    }

    /// Element-wise sum of the selected plans of `agents`, in the given order.
    /// Agents without a selection contribute nothing.
    pub fn global_response(&self, agents: &[AgentId], plans: &[PlanSet], dim: usize) -> Vec<f64> {
        let mut sum = vec![0.0; dim];
        for &a in agents {
            if let Some(i) = self.get(a) {
                for (s, v) in sum.iter_mut().zip(&plans[a].plan(i).values) {
                    *s += v;
                }
            }
        }
        sum
    }
}

/// Validated view of a tree plus the plan sets of the agents placed on it.
#[derive(Debug, Clone, Copy)]
pub struct Context<'a> {
    pub topology: &'a TreeTopology,
    pub plans: &'a [PlanSet],
    pub cf: CostFunction,
    dim: usize,
}

impl<'a> Context<'a> {
    /// `plans` is indexed by agent id.
    pub fn new(
        topology: &'a TreeTopology,
        plans: &'a [PlanSet],
        cf: CostFunction,
    ) -> Result<Self, Error> {
        let mut dim = None;
        for &agent in topology.agents() {
            let set = plans.get(agent).ok_or(Error::MissingPlans(agent))?;
            if set.agent_id != agent {
                return Err(Error::MissingPlans(agent));
            }
            match dim {
                None => dim = Some(set.dim()),
                Some(d) if d != set.dim() => {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: set.dim(),
                    })
                }
                Some(_) => {}
            }
        }
        let dim = dim.ok_or(Error::NoAgents)?;
        Ok(Self {
            topology,
            plans,
            cf,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Global response of the whole tree, aggregated bottom-up in the same
    /// order as a learning iteration so costs compare exactly.
    pub fn system_response(&self, selections: &Selections) -> Vec<f64> {
        HolonRun::enter(*self, self.topology.root(), 0, selections).global
    }

    pub fn system_cost(&self, selections: &Selections) -> f64 {
        self.cf.global_cost(&self.system_response(selections))
    }

    pub(crate) fn all_selected(&self, selections: &Selections) -> bool {
        self.topology
            .agents()
            .iter()
            .all(|&a| selections.get(a).is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationOutcome {
    pub candidate_cost: f64,
    /// Cost of the accepted global response after this iteration.
    pub cost: f64,
    pub accepted: bool,
}

/// Learning state of one holon (or the whole tree) while it iterates.
///
/// Members are stored breadth-first from the holon root, so children always
/// follow their parent and the children of a member form a contiguous range.
#[derive(Debug, Clone)]
pub struct HolonRun<'a> {
    ctx: Context<'a>,
    members: Vec<Position>,
    agents: Vec<AgentId>,
    parent: Vec<Option<usize>>,
    child_range: Vec<(usize, usize)>,
    committed_agg: Vec<f64>,
    tentative_agg: Vec<f64>,
    tentative_sel: Vec<usize>,
    global: Vec<f64>,
    incumbent: Option<f64>,
    stage: usize,
    candidate_ready: bool,
}

impl<'a> HolonRun<'a> {
    /// Enters the holon rooted at `root`. The previous global response is the
    /// sum of the members' current selections, so the holon is self-contained.
    pub fn enter(ctx: Context<'a>, root: Position, stage: usize, selections: &Selections) -> Self {
        let t = ctx.topology;
        let d = ctx.dim;
        let mut members = vec![root];
        let mut parent = vec![None];
        let mut child_range = Vec::new();
        let mut i = 0;
        while i < members.len() {
            let start = members.len();
            for &ch in t.children(members[i]) {
                members.push(ch);
                parent.push(Some(i));
            }
            child_range.push((start, members.len()));
            i += 1;
        }
        let agents: Vec<AgentId> = members.iter().map(|&p| t.agent_at(p)).collect();
        let m = members.len();
        let mut committed_agg = vec![0.0; m * d];
        for i in (0..m).rev() {
            if let Some(sel) = selections.get(agents[i]) {
                committed_agg[i * d..(i + 1) * d]
                    .copy_from_slice(&ctx.plans[agents[i]].plan(sel).values);
            }
            let (lo, hi) = child_range[i];
            for ch in lo..hi {
                let (head, tail) = committed_agg.split_at_mut(ch * d);
                for (s, v) in head[i * d..(i + 1) * d].iter_mut().zip(&tail[..d]) {
                    *s += v;
                }
            }
        }
        let global = committed_agg[..d].to_vec();
        let incumbent = agents
            .iter()
            .all(|&a| selections.get(a).is_some())
            .then(|| ctx.cf.global_cost(&global));
        Self {
            ctx,
            tentative_agg: vec![0.0; m * d],
            tentative_sel: vec![0; m],
            members,
            agents,
            parent,
            child_range,
            committed_agg,
            global,
            incumbent,
            stage,
            candidate_ready: false,
        }
    }

    pub fn members(&self) -> &[Position] {
        &self.members
    }

    pub fn global_response(&self) -> &[f64] {
        &self.global
    }

    /// Cost of the accepted global response, if every member has a selection.
    pub fn cost(&self) -> Option<f64> {
        self.incumbent
    }

    /// Leaves-first plan selection and aggregation. Returns the cost of the
    /// candidate global response formed at the holon root.
    pub fn bottom_up_pass(
        &mut self,
        net: &Network,
        ledger: &mut MessageLedger,
        key: LedgerKey,
    ) -> f64 {
        let d = self.ctx.dim;
        let cf = self.ctx.cf;
        let mut base = vec![0.0; d];
        let mut children_sum = vec![0.0; d];
        for i in (0..self.members.len()).rev() {
            let (lo, hi) = self.child_range[i];
            for (j, b) in base.iter_mut().enumerate() {
                *b = self.global[j] - self.committed_agg[i * d + j];
            }
            children_sum.fill(0.0);
            for ch in lo..hi {
                for (s, v) in children_sum
                    .iter_mut()
                    .zip(&self.tentative_agg[ch * d..(ch + 1) * d])
                {
                    *s += v;
                }
            }
            for (b, s) in base.iter_mut().zip(&children_sum) {
                *b += s;
            }

            let set = &self.ctx.plans[self.agents[i]];
            let mut best = 0;
            let mut best_score = f64::INFINITY;
            for (idx, plan) in set.plans().iter().enumerate() {
                let score = cf.mix(cf.global_cost_of_sum(&base, &plan.values), plan.local_cost);
                if score < best_score {
                    best = idx;
                    best_score = score;
                }
            }
            self.tentative_sel[i] = best;

            let (head, tail) = self.tentative_agg.split_at_mut((i + 1) * d);
            let own = &mut head[i * d..];
            own.copy_from_slice(&set.plan(best).values);
            let offset = (i + 1) * d;
            for ch in lo..hi {
                for (s, v) in own
                    .iter_mut()
                    .zip(&tail[ch * d - offset..(ch + 1) * d - offset])
                {
                    *s += v;
                }
            }

            if let Some(up) = self.parent[i] {
                let message = Message {
                    from: self.members[i],
                    to: self.members[up],
                    phase: Phase::BottomUp,
                    stage: self.stage,
                    payload_dim: d,
                };
                let _ = net.deliver(message, ledger, key);
            }
        }
        self.candidate_ready = true;
        cf.global_cost(&self.tentative_agg[..d])
    }

    /// Monotone acceptance at the root followed by the broadcast of the
    /// accepted global response. Accepted selections are committed into
    /// `selections`; rejected ones are discarded.
    pub fn top_down_pass(
        &mut self,
        selections: &mut Selections,
        net: &Network,
        ledger: &mut MessageLedger,
        key: LedgerKey,
    ) -> IterationOutcome {
        assert!(
            self.candidate_ready,
            "top-down pass without a preceding bottom-up pass"
        );
        self.candidate_ready = false;
        let d = self.ctx.dim;
        let candidate_cost = self.ctx.cf.global_cost(&self.tentative_agg[..d]);
        let accepted = self.incumbent.is_none_or(|c| candidate_cost <= c);
        if accepted {
            core::mem::swap(&mut self.committed_agg, &mut self.tentative_agg);
            self.global.copy_from_slice(&self.committed_agg[..d]);
            self.incumbent = Some(candidate_cost);
            for (&agent, &sel) in self.agents.iter().zip(&self.tentative_sel) {
                selections.set(agent, sel);
            }
        }
        for i in 1..self.members.len() {
            let up = self.parent[i].expect("non-root member without parent");
            let message = Message {
                from: self.members[up],
                to: self.members[i],
                phase: Phase::TopDown,
                stage: self.stage,
                payload_dim: d,
            };
            let _ = net.deliver(message, ledger, key);
        }
        IterationOutcome {
            candidate_cost,
            cost: self.incumbent.expect("accepted at least once"),
            accepted,
        }
    }

    pub fn iterate(
        &mut self,
        selections: &mut Selections,
        net: &Network,
        ledger: &mut MessageLedger,
        key: LedgerKey,
    ) -> IterationOutcome {
        self.bottom_up_pass(net, ledger, key);
        self.top_down_pass(selections, net, ledger, key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineConfig {
    pub max_iterations: usize,
    /// Consecutive unchanged costs that count as convergence.
    pub conv_window: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            max_iterations: 40,
            conv_window: 3,
        }
    }
}

/// Counts consecutive main iterations whose cost did not change.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvergenceTracker {
    window: usize,
    streak: usize,
    last: Option<f64>,
}

impl ConvergenceTracker {
    pub(crate) fn new(window: usize) -> Self {
        Self {
            window,
            streak: 0,
            last: None,
        }
    }

    /// Returns whether the run has converged after observing `cost`.
    pub(crate) fn observe(&mut self, cost: f64) -> bool {
        match self.last {
            Some(prev) if (prev - cost).abs() < CONVERGENCE_EPSILON => self.streak += 1,
            _ => self.streak = 0,
        }
        self.last = Some(cost);
        self.streak >= self.window
    }

    pub(crate) fn reset(&mut self) {
        self.streak = 0;
    }
}

/// Per-main-iteration record of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    /// System-wide global cost after each main iteration.
    pub costs: Vec<f64>,
    pub messages_total: Vec<u64>,
    pub messages_sync: Vec<u64>,
    pub selections: Selections,
    pub global_response: Vec<f64>,
    pub ledger: MessageLedger,
}

impl RunTrace {
    pub(crate) fn new(num_agents: usize, dim: usize) -> Self {
        Self {
            costs: Vec::new(),
            messages_total: Vec::new(),
            messages_sync: Vec::new(),
            selections: Selections::new(num_agents),
            global_response: vec![0.0; dim],
            ledger: MessageLedger::new(),
        }
    }

    pub(crate) fn record(&mut self, iteration: usize, cost: f64) {
        self.costs.push(cost);
        self.messages_total
            .push(self.ledger.total_for_iteration(iteration));
        self.messages_sync
            .push(self.ledger.sync_for_iteration(iteration));
    }

    pub fn iterations(&self) -> usize {
        self.costs.len()
    }

    pub fn first_cost(&self) -> Option<f64> {
        self.costs.first().copied()
    }

    pub fn final_cost(&self) -> Option<f64> {
        self.costs.last().copied()
    }

    /// 1-based main iteration at which the final cost was first reached.
    pub fn iterations_to_convergence(&self) -> usize {
        let Some(last) = self.final_cost() else {
            return 0;
        };
        self.costs
            .iter()
            .position(|c| (c - last).abs() < CONVERGENCE_EPSILON)
            .map_or(0, |i| i + 1)
    }

    pub fn cumulative_total(&self) -> Vec<u64> {
        cumulative(&self.messages_total)
    }

    pub fn cumulative_sync(&self) -> Vec<u64> {
        cumulative(&self.messages_sync)
    }

    pub fn is_monotone(&self) -> bool {
        self.costs.windows(2).all(|w| w[1] <= w[0])
    }
}

fn cumulative(xs: &[u64]) -> Vec<u64> {
    xs.iter()
        .scan(0u64, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// One whole-tree learning iteration booked under main iteration `iteration`.
pub(crate) fn baseline_iteration(
    ctx: Context<'_>,
    selections: &mut Selections,
    net: &Network,
    ledger: &mut MessageLedger,
    iteration: usize,
) -> IterationOutcome {
    let mut run = HolonRun::enter(ctx, ctx.topology.root(), 0, selections);
    run.iterate(selections, net, ledger, LedgerKey::new(iteration, 0, 0))
}

/// Runs whole-tree iterations until `max_iterations` or until the cost stays
/// unchanged for `conv_window` consecutive iterations.
pub fn run_baseline(
    topology: &TreeTopology,
    plans: &[PlanSet],
    cf: CostFunction,
    cfg: BaselineConfig,
) -> Result<RunTrace, Error> {
    if cfg.max_iterations == 0 {
        return Err(Error::Config("at least one iteration is required"));
    }
    let ctx = Context::new(topology, plans, cf)?;
    let net = Network::new(topology);
    let mut trace = RunTrace::new(plans.len(), ctx.dim());
    let mut tracker = ConvergenceTracker::new(cfg.conv_window);
    for t in 0..cfg.max_iterations {
        let outcome = baseline_iteration(ctx, &mut trace.selections, &net, &mut trace.ledger, t);
        trace.record(t, outcome.cost);
        if tracker.observe(outcome.cost) {
            break;
        }
    }
    trace.global_response = ctx.system_response(&trace.selections);
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::Plan;
    use alloc::vec;

    fn set(agent: AgentId, plans: &[(&[f64], f64)]) -> PlanSet {
        PlanSet::new(
            agent,
            plans
                .iter()
                .map(|(v, c)| Plan::new(v.to_vec(), *c))
                .collect(),
        )
        .unwrap()
    }

    fn one_iteration(t: &TreeTopology, plans: &[PlanSet]) -> RunTrace {
        let cfg = BaselineConfig {
            max_iterations: 1,
            conv_window: 3,
        };
        run_baseline(t, plans, CostFunction::default(), cfg).unwrap()
    }

    #[test]
    fn single_agent_picks_lowest_variance() {
        let t = TreeTopology::build_tree(1, 2, 0).unwrap();
        let plans = vec![set(0, &[(&[1.0, -1.0], 0.0), (&[5.0, 5.0], 1.0)])];
        let trace = one_iteration(&t, &plans);
        assert_eq!(trace.selections.get(0), Some(1));
        assert_eq!(trace.global_response, vec![5.0, 5.0]);
        assert_eq!(trace.costs, vec![0.0]);
    }

    #[test]
    fn single_agent_first_plan_wins_by_variance() {
        let t = TreeTopology::build_tree(1, 2, 0).unwrap();
        let plans = vec![set(0, &[(&[1.0, -1.0], 0.0), (&[5.0, 3.0], 1.0)])];
        let trace = one_iteration(&t, &plans);
        assert_eq!(trace.selections.get(0), Some(0));
        assert_eq!(trace.costs, vec![1.0]);
    }

    #[test]
    fn three_agent_tree_matches_greedy_oracle() {
        // leaves decide first with nothing below them: both plans give
        // variance 0.25, the lower index wins; the root then completes the sum.
        let t = TreeTopology::build_tree_unshuffled(3, 2).unwrap();
        let plans: Vec<PlanSet> = (0..3)
            .map(|a| set(a, &[(&[1.0, 0.0], 0.0), (&[0.0, 1.0], 0.0)]))
            .collect();
        let trace = one_iteration(&t, &plans);
        assert_eq!(trace.selections.get(1), Some(0));
        assert_eq!(trace.selections.get(2), Some(0));
        assert_eq!(trace.selections.get(0), Some(1));
        assert_eq!(trace.global_response, vec![2.0, 1.0]);
        // brute force over all 8 combinations: [2,1] or [1,2] is the best
        // reachable sum of three unit vectors, variance 0.25
        assert_eq!(trace.costs, vec![0.25]);
    }

    #[test]
    fn message_counts_per_iteration() {
        let plans: Vec<PlanSet> = (0..15)
            .map(|a| set(a, &[(&[1.0, 0.0], 0.0), (&[0.0, 1.0], 1.0)]))
            .collect();
        let t = TreeTopology::build_tree(7, 2, 5).unwrap();
        let trace = one_iteration(&t, &plans[..7]);
        assert_eq!(trace.messages_total, vec![12]);
        let t = TreeTopology::build_tree(15, 2, 5).unwrap();
        let trace = one_iteration(&t, &plans);
        let bu: u64 = trace.ledger.total();
        assert_eq!(bu, 28);
    }

    #[test]
    fn incumbent_from_existing_selections() {
        // candidate worse than incumbent: keep the previous selection
        let t = TreeTopology::build_tree(1, 2, 0).unwrap();
        let plans = vec![set(0, &[(&[2.0, 0.0], 0.0), (&[0.0, 0.0], 0.0)])];
        let ctx = Context::new(&t, &plans, CostFunction::default()).unwrap();
        let net = Network::new(&t);
        let mut ledger = MessageLedger::new();
        let mut selections = Selections::new(1);
        selections.set(0, 1);
        let mut run = HolonRun::enter(ctx, 0, 0, &selections);
        assert_eq!(run.cost(), Some(0.0));
        let candidate = run.bottom_up_pass(&net, &mut ledger, LedgerKey::new(0, 0, 0));
        // alone with base 0 the agent still prefers the flat plan
        assert_eq!(candidate, 0.0);
        let out = run.top_down_pass(&mut selections, &net, &mut ledger, LedgerKey::new(0, 0, 0));
        assert!(out.accepted);
        assert_eq!(out.cost, 0.0);
    }

    #[test]
    fn rejected_candidate_rolls_back() {
        // Two leaves under a root. The stale view of the rest of the tree makes
        // both leaves jump to the same complement at once, which overshoots.
        let t = TreeTopology::build_tree_unshuffled(3, 2).unwrap();
        let plans = vec![
            set(0, &[(&[0.0, 0.0], 0.0)]),
            set(1, &[(&[1.0, 0.0], 0.0), (&[0.0, 1.0], 0.0)]),
            set(2, &[(&[1.0, 0.0], 0.0), (&[0.0, 1.0], 0.0)]),
        ];
        let ctx = Context::new(&t, &plans, CostFunction::default()).unwrap();
        let net = Network::new(&t);
        let mut ledger = MessageLedger::new();
        let mut selections = Selections::new(3);
        selections.set(0, 0);
        selections.set(1, 0);
        selections.set(2, 0);
        // G = [2, 0], cost 1. Each leaf sees rest = [1, 0] and picks [0, 1].
        let mut run = HolonRun::enter(ctx, 0, 0, &selections);
        assert_eq!(run.cost(), Some(1.0));
        let out = run.iterate(&mut selections, &net, &mut ledger, LedgerKey::new(0, 0, 0));
        // candidate [0, 2] has cost 1 as well: ties are accepted
        assert_eq!(out.candidate_cost, 1.0);
        assert!(out.accepted);
        assert_eq!(selections.get(1), Some(1));

        // make the incumbent strictly better than the stale candidate
        let plans = vec![
            set(0, &[(&[0.0, 0.5], 0.0)]),
            set(1, &[(&[1.0, 0.0], 0.0), (&[0.0, 1.0], 0.0)]),
            set(2, &[(&[1.0, 0.0], 0.0), (&[0.0, 1.0], 0.0)]),
        ];
        let ctx = Context::new(&t, &plans, CostFunction::default()).unwrap();
        let mut selections = Selections::new(3);
        selections.set(0, 0);
        selections.set(1, 0);
        selections.set(2, 0);
        // G = [2, 0.5], cost 0.5625; rest for each leaf = [1, 0.5] -> both pick
        // [0, 1]; candidate [0, 2.5] costs 1.5625 and is rejected.
        let mut run = HolonRun::enter(ctx, 0, 0, &selections);
        let out = run.iterate(&mut selections, &net, &mut ledger, LedgerKey::new(1, 0, 0));
        assert_eq!(out.candidate_cost, 1.5625);
        assert!(!out.accepted);
        assert_eq!(out.cost, 0.5625);
        assert_eq!(selections.get(1), Some(0));
        assert_eq!(selections.get(2), Some(0));
        assert_eq!(run.global_response(), &[2.0, 0.5]);
    }

    #[test]
    fn max_iterations_one_gives_one_entry() {
        let t = TreeTopology::build_tree(7, 2, 1).unwrap();
        let plans: Vec<PlanSet> = (0..7)
            .map(|a| set(a, &[(&[a as f64, 0.0, 1.0], 0.0), (&[0.0, 1.0, -1.0], 1.0)]))
            .collect();
        let trace = one_iteration(&t, &plans);
        assert_eq!(trace.iterations(), 1);
        assert_eq!(trace.iterations_to_convergence(), 1);
    }

    #[test]
    fn context_rejects_bad_inputs() {
        let t = TreeTopology::build_tree(2, 2, 0).unwrap();
        let plans = vec![set(0, &[(&[1.0], 0.0)]), set(1, &[(&[1.0, 2.0], 0.0)])];
        assert!(matches!(
            Context::new(&t, &plans, CostFunction::default()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert_eq!(
            Context::new(&t, &plans[..1], CostFunction::default()).err(),
            Some(Error::MissingPlans(1))
        );
        let cfg = BaselineConfig {
            max_iterations: 0,
            conv_window: 3,
        };
        assert!(run_baseline(&t, &plans, CostFunction::default(), cfg).is_err());
    }

    #[test]
    fn convergence_tracker_window() {
        let mut tr = ConvergenceTracker::new(3);
        assert!(!tr.observe(5.0));
        assert!(!tr.observe(4.0));
        assert!(!tr.observe(4.0));
        assert!(!tr.observe(4.0));
        assert!(tr.observe(4.0));
        tr.reset();
        assert!(!tr.observe(4.0));
    }
}
