//! Cost reached for a fixed communication budget.
//!
//! Reads learning curves written by the harness and, for every run and every
//! message budget, reports the best global cost among the iterations whose
//! cumulative message count fits in the budget. Costs are only known at
//! iteration boundaries, so the cost-versus-messages curve is a step function
//! and nothing is interpolated between iterations.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use anyhow::Context as _;
use serde::{Deserialize, Serialize};

/// Message budgets used when none are configured.
pub const DEFAULT_BUDGETS: [u64; 2] = [30_000, 50_000];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageColumn {
    Total,
    Sync,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct CurveCsvRow {
    run_id: String,
    scheme: String,
    c: usize,
    lambda: f64,
    scale: String,
    iteration: usize,
    global_cost: f64,
    #[serde(rename = "M_total_cum")]
    m_total_cum: u64,
    #[serde(rename = "M_sync_cum")]
    m_sync_cum: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub iteration: usize,
    pub cost: f64,
    pub messages_total: u64,
    pub messages_sync: u64,
}

impl CurvePoint {
    fn messages(&self, column: MessageColumn) -> u64 {
        match column {
            MessageColumn::Total => self.messages_total,
            MessageColumn::Sync => self.messages_sync,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    /// Where the curve was read from.
    pub source: String,
    pub run_id: String,
    pub scheme: String,
    pub c: usize,
    pub lambda: f64,
    pub scale: String,
    pub points: Vec<CurvePoint>,
}

/// Reads a `curves.csv`, grouping rows by run in order of first appearance.
pub fn read_curves(path: &Path) -> anyhow::Result<Vec<Curve>> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut curves: Vec<Curve> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for row in reader.deserialize() {
        let row: CurveCsvRow = row.with_context(|| format!("reading {}", path.display()))?;
        let point = CurvePoint {
            iteration: row.iteration,
            cost: row.global_cost,
            messages_total: row.m_total_cum,
            messages_sync: row.m_sync_cum,
        };
        match index.get(&row.run_id) {
            Some(&i) => curves[i].points.push(point),
            None => {
                index.insert(row.run_id.clone(), curves.len());
                curves.push(Curve {
                    source: path.display().to_string(),
                    run_id: row.run_id,
                    scheme: row.scheme,
                    c: row.c,
                    lambda: row.lambda,
                    scale: row.scale,
                    points: vec![point],
                })
            }
        }
    }
    Ok(curves)
}

/// Fails unless both sets of curves cover the same `(c, lambda)` settings.
pub fn check_comparable(a: &[Curve], b: &[Curve]) -> anyhow::Result<()> {
    let settings = |curves: &[Curve]| {
        let mut s: Vec<(usize, u64)> = curves.iter().map(|c| (c.c, c.lambda.to_bits())).collect();
        s.sort_unstable();
        s.dedup();
        s
    };
    anyhow::ensure!(
        settings(a) == settings(b),
        "the curves to compare were run with different fan-outs or lambdas"
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetRow {
    pub budget: u64,
    pub source: String,
    pub run_id: String,
    pub scheme: String,
    pub c: usize,
    pub lambda: f64,
    pub scale: String,
    /// Earliest iteration reaching the best affordable cost.
    pub iteration: Option<usize>,
    pub global_cost: Option<f64>,
    pub messages: Option<u64>,
    pub reachable: bool,
}

/// Best cost per run and budget. A run whose first iteration already
/// exceeds a budget gets an unreachable row for it.
pub fn compare(curves: &[Curve], budgets: &[u64], column: MessageColumn) -> Vec<BudgetRow> {
    let mut rows = Vec::with_capacity(curves.len() * budgets.len());
    for &budget in budgets {
        for curve in curves {
            let best = curve
                .points
                .iter()
                .filter(|p| p.messages(column) <= budget)
                .fold(None::<&CurvePoint>, |best, p| match best {
                    Some(b) if b.cost <= p.cost => Some(b),
                    _ => Some(p),
                });
            rows.push(BudgetRow {
                budget,
                source: curve.source.clone(),
                run_id: curve.run_id.clone(),
                scheme: curve.scheme.clone(),
                c: curve.c,
                lambda: curve.lambda,
                scale: curve.scale.clone(),
                iteration: best.map(|p| p.iteration),
                global_cost: best.map(|p| p.cost),
                messages: best.map(|p| p.messages(column)),
                reachable: best.is_some(),
            });
        }
    }
    rows
}

pub fn write_compare<W: Write>(out: W, rows: &[BudgetRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(id: &str, points: &[(f64, u64)]) -> Curve {
        Curve {
            source: "test".into(),
            run_id: id.into(),
            scheme: "baseline".into(),
            c: 2,
            lambda: 0.0,
            scale: "none".into(),
            points: points
                .iter()
                .enumerate()
                .map(|(i, &(cost, m))| CurvePoint {
                    iteration: i + 1,
                    cost,
                    messages_total: m,
                    messages_sync: m / 2,
                })
                .collect(),
        }
    }

    #[test]
    fn budget_of_one_iteration_gives_first_cost() {
        let c = curve("a", &[(9.0, 28), (5.0, 56), (4.0, 84)]);
        let rows = compare(&[c], &[28], MessageColumn::Total);
        assert_eq!(rows[0].global_cost, Some(9.0));
        assert_eq!(rows[0].iteration, Some(1));
    }

    #[test]
    fn step_function_between_iterations() {
        let c = curve("a", &[(9.0, 28), (5.0, 56), (4.0, 84)]);
        let rows = compare(&[c], &[83, 84, 1000], MessageColumn::Total);
        let costs: Vec<_> = rows.iter().map(|r| r.global_cost).collect();
        assert_eq!(costs, vec![Some(5.0), Some(4.0), Some(4.0)]);
    }

    #[test]
    fn unreachable_budget_is_flagged() {
        let c = curve("a", &[(9.0, 28)]);
        let rows = compare(&[c], &[27], MessageColumn::Total);
        assert!(!rows[0].reachable);
        assert_eq!(rows[0].global_cost, None);
    }

    #[test]
    fn sync_column_is_selectable() {
        let c = curve("a", &[(9.0, 28), (5.0, 56)]);
        let rows = compare(&[c], &[28], MessageColumn::Sync);
        assert_eq!(rows[0].global_cost, Some(5.0));
        assert_eq!(rows[0].messages, Some(28));
    }

    #[test]
    fn identical_inputs_give_identical_rows() {
        let a = vec![curve("a", &[(3.0, 10), (2.0, 20)])];
        let b = a.clone();
        check_comparable(&a, &b).unwrap();
        let budgets = DEFAULT_BUDGETS;
        assert_eq!(
            compare(&a, &budgets, MessageColumn::Total),
            compare(&b, &budgets, MessageColumn::Total)
        );
    }

    #[test]
    fn mismatched_settings_are_rejected() {
        let a = vec![curve("a", &[(3.0, 10)])];
        let mut b = a.clone();
        b[0].lambda = 0.5;
        assert!(check_comparable(&a, &b).is_err());
    }
}
