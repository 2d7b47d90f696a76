//! Evaluation metrics: improvement index, communication cost closed forms,
//! relative performance and standardization.
//!
//! The communication cost formulas assume perfect trees with `c` children per
//! node and `h` levels of edges. For the holarchic forms, the holons of stage
//! `j` span `c^0 + … + c^(j+1)` agents, so stage 0 is the parents of the
//! leaves with their children and the last stage is the whole tree.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::holarchy::Scheme;

/// Symmetric relative difference between a baseline cost and a holarchic
/// cost. Positive values favour the holarchic scheme. Defined as 0 when both
/// costs are zero.
pub fn improvement_index(baseline: f64, holarchic: f64) -> f64 {
    let denom = baseline + holarchic;
    if denom == 0.0 {
        0.0
    } else {
        (baseline - holarchic) / denom
    }
}

/// `c^0 + c^1 + … + c^levels`, the node count of a perfect tree.
fn geometric(c: u64, levels: u64) -> u64 {
    (0..=levels).map(|i| c.pow(i as u32)).sum()
}

/// Messages of one baseline iteration on a perfect tree: one per edge in
/// each direction.
pub fn baseline_comm_cost(c: u64, h: u64) -> u64 {
    2 * (geometric(c, h) - 1)
}

/// Messages of one full-scale holarchic pass on a perfect tree, over all
/// holons of all stages.
pub fn total_comm_cost(c: u64, h: u64, tau: u64) -> u64 {
    2 * tau
        * (0..h)
            .map(|j| c.pow((h - 1 - j) as u32) * (geometric(c, j + 1) - 1))
            .sum::<u64>()
}

/// Messages of one full-scale holarchic pass counting each stage once, since
/// the holons of a stage run in parallel.
pub fn sync_comm_cost(c: u64, h: u64, tau: u64) -> u64 {
    2 * tau * (0..h).map(|j| geometric(c, j + 1) - 1).sum::<u64>()
}

/// Cost drop of a holarchic run relative to the baseline's cost drop, from the
/// first iteration to convergence. `None` when the baseline did not move.
pub fn relative_performance(
    holarchic_first: f64,
    holarchic_final: f64,
    baseline_first: f64,
    baseline_final: f64,
) -> Option<f64> {
    let denom = baseline_first - baseline_final;
    if denom == 0.0 {
        None
    } else {
        Some((holarchic_first - holarchic_final) / denom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub values: Vec<f64>,
    /// Set when the samples had zero spread; `values` is then all zeros.
    pub degenerate: bool,
}

/// Z-scores with the population standard deviation (divisor `n`).
pub fn standardize(costs: &[f64]) -> Result<Standardized, Error> {
    if costs.len() < 2 {
        return Err(Error::Config("standardization needs at least two samples"));
    }
    let n = costs.len() as f64;
    let mean = costs.iter().sum::<f64>() / n;
    let var = costs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
    let sd = libm::sqrt(var);
    if sd == 0.0 {
        return Ok(Standardized {
            values: vec![0.0; costs.len()],
            degenerate: true,
        });
    }
    Ok(Standardized {
        values: costs.iter().map(|c| (c - mean) / sd).collect(),
        degenerate: false,
    })
}

/// Summary numbers of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSample {
    pub run_id: alloc::string::String,
    pub scheme: Scheme,
    pub first_cost: f64,
    pub converged_cost: f64,
    pub iterations_to_convergence: usize,
    pub messages_total: u64,
    pub messages_sync: u64,
}
