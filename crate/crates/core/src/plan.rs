//! Plans, plan sets and the global cost function.

use alloc::vec::Vec;

use crate::error::Error;
use crate::AgentId;

/// One possible plan of an agent: a resource schedule and its local cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub values: Vec<f64>,
    pub local_cost: f64,
}

impl Plan {
    pub fn new(values: Vec<f64>, local_cost: f64) -> Self {
        Self { values, local_cost }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// The possible plans of a single agent.
///
/// Plan order is significant: the index of a plan is what the engine selects
/// and what ties are broken on.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanSet {
    pub agent_id: AgentId,
    plans: Vec<Plan>,
}

impl PlanSet {
    /// Validates that the set is non-empty, all plans share one dimension of
    /// at least 1, and every value and cost is finite.
    pub fn new(agent_id: AgentId, plans: Vec<Plan>) -> Result<Self, Error> {
        let first = plans
            .first()
            .ok_or(Error::EmptyPlanSet { agent: agent_id })?;
        let dim = first.dim();
        if dim == 0 {
            return Err(Error::EmptyVector);
        }
        for plan in &plans {
            if plan.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: plan.dim(),
                });
            }
            if !plan.local_cost.is_finite() || plan.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { agent: agent_id });
            }
        }
        Ok(Self { agent_id, plans })
    }

    pub fn plans(&self) -> &[Plan] {
        &self.plans
    }

    pub fn len(&self) -> usize {
        self.plans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plans.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.plans[0].dim()
    }

    pub fn plan(&self, index: usize) -> &Plan {
        &self.plans[index]
    }

    /// Min–max normalizes local costs into `[0, 1]`, preserving plan order.
    /// A degenerate range maps every cost to 0.
    pub fn normalize_local_costs(&self) -> PlanSet {
        let (min, max) = self
            .plans
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.local_cost), hi.max(p.local_cost))
            });
        let range = max - min;
        let plans = self
            .plans
            .iter()
            .map(|p| {
                let cost = if range > 0.0 {
                    (p.local_cost - min) / range
                } else {
                    0.0
                };
                Plan::new(p.values.clone(), cost)
            })
            .collect();
        PlanSet {
            agent_id: self.agent_id,
            plans,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostKind {
    #[default]
    Variance,
}

/// Global cost function plus the agents' trade-off weight `lambda` between
/// global cost and local cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostFunction {
    pub kind: CostKind,
    lambda: f64,
}

impl CostFunction {
    pub fn new(kind: CostKind, lambda: f64) -> Result<Self, Error> {
        if !(0.0..1.0).contains(&lambda) {
            return Err(Error::InvalidLambda(lambda));
        }
        Ok(Self { kind, lambda })
    }

    pub fn variance(lambda: f64) -> Result<Self, Error> {
        Self::new(CostKind::Variance, lambda)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Global cost of a global response.
    pub fn global_cost(&self, response: &[f64]) -> f64 {
        match self.kind {
            CostKind::Variance => population_variance(response),
        }
    }

    /// Global cost of `base + plan` without materializing the sum.
    pub(crate) fn global_cost_of_sum(&self, base: &[f64], plan: &[f64]) -> f64 {
        match self.kind {
            CostKind::Variance => variance_of_sum(base, plan),
        }
    }

    /// Mixes a global cost with a normalized local cost.
    pub fn mix(&self, global: f64, local: f64) -> f64 {
        if self.lambda == 0.0 {
            global
        } else {
            (1.0 - self.lambda) * global + self.lambda * local
        }
    }
}

impl Default for CostFunction {
    fn default() -> Self {
        Self {
            kind: CostKind::Variance,
            lambda: 0.0,
        }
    }
}

/// Population variance of the components of `values`.
pub fn variance(values: &[f64]) -> Result<f64, Error> {
    if values.is_empty() {
        return Err(Error::EmptyVector);
    }
    Ok(population_variance(values))
}

pub(crate) fn population_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

fn variance_of_sum(base: &[f64], plan: &[f64]) -> f64 {
    debug_assert_eq!(base.len(), plan.len());
    let n = base.len() as f64;
    let mean = base.iter().zip(plan).map(|(b, p)| b + p).sum::<f64>() / n;
    base.iter()
        .zip(plan)
        .map(|(b, p)| {
            let dev = b + p - mean;
            dev * dev
        })
        .sum::<f64>()
        / n
}

/// Score of choosing `plan` when it would produce `candidate_global`.
pub fn weighted_score(candidate_global: &[f64], plan: &Plan, cf: &CostFunction) -> f64 {
    cf.mix(cf.global_cost(candidate_global), plan.local_cost)
}
