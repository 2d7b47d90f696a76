//! Exhaustive enumeration of plan combinations for small instances.
//!
//! Combination costs are evaluated by summing the selected plans in agent
//! order, which [`combination_cost`] reproduces bit for bit; an engine result
//! is ranked by evaluating its selections with that same function.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::plan::{CostFunction, PlanSet};

/// Largest number of combinations the oracle agrees to enumerate.
pub const MAX_COMBINATIONS: u128 = 1 << 24;

/// Objective of a full combination: the cost function's mix of the global
/// cost with the mean local cost of the selected plans. Equals the global
/// cost when `lambda` is 0.
pub fn combination_cost(plans: &[PlanSet], selection: &[usize], cf: &CostFunction) -> f64 {
    let mut sum = vec![0.0; plans[0].dim()];
    let mut local = 0.0;
    for (set, &i) in plans.iter().zip(selection) {
        let plan = set.plan(i);
        for (s, v) in sum.iter_mut().zip(&plan.values) {
            *s += v;
        }
        local += plan.local_cost;
    }
    cf.mix(cf.global_cost(&sum), local / plans.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enumeration {
    /// Every combination cost, ascending.
    pub sorted_costs: Vec<f64>,
    pub optimum: f64,
    /// Plan index per agent (in the order of the input plan sets).
    pub optimum_selection: Vec<usize>,
}

impl Enumeration {
    pub fn len(&self) -> usize {
        self.sorted_costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted_costs.is_empty()
    }

    pub fn rank_of(&self, cost: f64) -> f64 {
        rank_of(cost, &self.sorted_costs)
    }
}

fn check_size(plans: &[PlanSet]) -> Result<u128, Error> {
    if plans.is_empty() {
        return Err(Error::NoAgents);
    }
    let dim = plans[0].dim();
    if let Some(bad) = plans.iter().find(|p| p.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.dim(),
        });
    }
    let combinations = plans
        .iter()
        .try_fold(1u128, |acc, p| acc.checked_mul(p.len() as u128))
        .unwrap_or(u128::MAX);
    if combinations > MAX_COMBINATIONS {
        return Err(Error::EnumerationTooLarge {
            combinations,
            limit: MAX_COMBINATIONS,
        });
    }
    Ok(combinations)
}

/// Visits every combination in odometer order (last agent fastest) with its
/// cost. Prefix sums are cached per agent so each step costs O(d) amortized
/// while staying bit-identical to [`combination_cost`].
fn for_each_combination(
    plans: &[PlanSet],
    cf: &CostFunction,
    mut visit: impl FnMut(&[usize], f64),
) {
    let n = plans.len();
    let d = plans[0].dim();
    let mut digits = vec![0usize; n];
    // prefix[i] = sum of the selected plans of agents 0..=i
    let mut prefix = vec![0.0; n * d];
    let mut local_prefix = vec![0.0; n];
    let mut refresh_from = 0;
    loop {
        for i in refresh_from..n {
            let plan = plans[i].plan(digits[i]);
            for j in 0..d {
                let before = if i == 0 { 0.0 } else { prefix[(i - 1) * d + j] };
                prefix[i * d + j] = before + plan.values[j];
            }
            let before = if i == 0 { 0.0 } else { local_prefix[i - 1] };
            local_prefix[i] = before + plan.local_cost;
        }
        let global = cf.global_cost(&prefix[(n - 1) * d..]);
        visit(&digits, cf.mix(global, local_prefix[n - 1] / n as f64));

        let mut i = n;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < plans[i].len() {
                break;
            }
            digits[i] = 0;
        }
        refresh_from = i;
    }
}

/// Evaluates all combinations and returns their sorted costs and the optimum.
/// Ties for the optimum keep the first combination in odometer order.
pub fn enumerate_costs(plans: &[PlanSet], cf: &CostFunction) -> Result<Enumeration, Error> {
    let combinations = check_size(plans)?;
    let mut costs = Vec::with_capacity(combinations as usize);
    let mut optimum = f64::INFINITY;
    let mut optimum_selection = vec![0; plans.len()];
    for_each_combination(plans, cf, |digits, cost| {
        costs.push(cost);
        if cost < optimum {
            optimum = cost;
            optimum_selection.copy_from_slice(digits);
        }
    });
    costs.sort_unstable_by(f64::total_cmp);
    Ok(Enumeration {
        sorted_costs: costs,
        optimum,
        optimum_selection,
    })
}

/// Streaming rank query: `(combinations strictly cheaper than cost, total)`.
pub fn count_below(plans: &[PlanSet], cf: &CostFunction, cost: f64) -> Result<(u64, u64), Error> {
    check_size(plans)?;
    let (mut below, mut total) = (0u64, 0u64);
    for_each_combination(plans, cf, |_, c| {
        total += 1;
        if c < cost {
            below += 1;
        }
    });
    Ok((below, total))
}

/// Percentage of combinations strictly cheaper than `cost`.
pub fn rank_of(cost: f64, sorted_costs: &[f64]) -> f64 {
    if sorted_costs.is_empty() {
        return 0.0;
    }
    let below = sorted_costs.partition_point(|&c| c < cost);
    100.0 * below as f64 / sorted_costs.len() as f64
}
