//! Plan sets from disk or from the synthetic generator.
//!
//! A dataset is a directory holding one file per agent, `agent_<id>.plans`,
//! with ids running from 0 without gaps. Each line of a file is one plan:
//!
//! ```text
//! <localCost>:<v1>,<v2>,...,<vd>
//! ```
//!
//! ASCII decimals with `.` as radix, LF line endings, no header. Raw local
//! costs are min–max normalized per agent when a dataset is loaded.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use holarchy_core::{Plan, PlanSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// RNG stream of the synthetic generator. Tree placement uses stream 0 of the
/// same seed, so one seed drives both without the draws overlapping.
const SYNTHETIC_STREAM: u64 = 1;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: no plans")]
    Empty { path: PathBuf },
    #[error("{path}: plan dimension {found}, expected {expected}")]
    Schema {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{dir}: missing plan file for agent {agent}")]
    MissingAgent { dir: PathBuf, agent: usize },
    #[error("{0}: no agent plan files found")]
    NoAgents(PathBuf),
    #[error(transparent)]
    Plan(#[from] holarchy_core::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `k` plans of dimension `d` per agent with i.i.d. standard normal values.
/// The raw local cost of a plan is its index.
pub fn generate_synthetic(agents: usize, plans: usize, dim: usize, seed: u64) -> Vec<PlanSet> {
    assert!(
        agents >= 1 && plans >= 1 && dim >= 1,
        "synthetic sizes must be positive"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SYNTHETIC_STREAM);
    (0..agents)
        .map(|a| {
            let set = (0..plans)
                .map(|i| {
                    let values = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                    Plan::new(values, i as f64)
                })
                .collect();
            PlanSet::new(a, set)
                .expect("generated plans are valid")
                .normalize_local_costs()
        })
        .collect()
}

pub fn agent_file(dir: &Path, agent: usize) -> PathBuf {
    dir.join(format!("agent_{agent}.plans"))
}

fn parse_line(path: &Path, line_no: usize, line: &str) -> Result<Plan, DatasetError> {
    let err = |message: String| DatasetError::Parse {
        path: path.to_path_buf(),
        line: line_no,
        message,
    };
    let (cost, values) = line
        .split_once(':')
        .ok_or_else(|| err("missing ':' after local cost".into()))?;
    let cost: f64 = cost
        .parse()
        .map_err(|e| err(format!("local cost {cost:?}: {e}")))?;
    let values = values
        .split(',')
        .map(|v| {
            v.parse::<f64>()
                .map_err(|e| err(format!("value {v:?}: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if !cost.is_finite() || cost < 0.0 {
        return Err(err(format!(
            "local cost must be finite and non-negative, got {cost}"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(err("non-finite plan value".into()));
    }
    Ok(Plan::new(values, cost))
}

/// Reads one agent's plans with their raw local costs.
pub fn read_plan_file(path: &Path, agent: usize) -> Result<PlanSet, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let body = text.strip_suffix('\n').unwrap_or(&text);
    if body.is_empty() {
        return Err(DatasetError::Empty {
            path: path.to_path_buf(),
        });
    }
    let mut plans: Vec<Plan> = Vec::new();
    for (i, line) in body.split('\n').enumerate() {
        let plan = parse_line(path, i + 1, line)?;
        if let Some(first) = plans.first() {
            if first.dim() != plan.dim() {
                return Err(DatasetError::Schema {
                    path: path.to_path_buf(),
                    expected: first.dim(),
                    found: plan.dim(),
                });
            }
        }
        plans.push(plan);
    }
    Ok(PlanSet::new(agent, plans)?)
}

pub fn format_plan_set(set: &PlanSet) -> String {
    let mut out = String::new();
    for plan in set.plans() {
        write!(out, "{}:", plan.local_cost).unwrap();
        for (i, v) in plan.values.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_plan_file(path: &Path, set: &PlanSet) -> Result<(), DatasetError> {
    fs::write(path, format_plan_set(set)).map_err(io_err(path))
}

/// Writes `agent_<id>.plans` for every plan set into `dir`, creating it.
pub fn write_dataset(dir: &Path, sets: &[PlanSet]) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for set in sets {
        write_plan_file(&agent_file(dir, set.agent_id), set)?;
    }
    Ok(())
}

/// Loads every agent of a dataset directory, enforcing one plan dimension
/// across agents, and normalizes the local costs. Agents may have different
/// numbers of plans.
pub fn load_plans(dir: &Path) -> Result<Vec<PlanSet>, DatasetError> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(id) = name
            .strip_prefix("agent_")
            .and_then(|s| s.strip_suffix(".plans"))
        {
            if let Ok(id) = id.parse::<usize>() {
                ids.push(id);
            }
        }
    }
    if ids.is_empty() {
        return Err(DatasetError::NoAgents(dir.to_path_buf()));
    }
    ids.sort_unstable();
    let mut sets: Vec<PlanSet> = Vec::with_capacity(ids.len());
    for (expected, &id) in ids.iter().enumerate() {
        if id != expected {
            return Err(DatasetError::MissingAgent {
                dir: dir.to_path_buf(),
                agent: expected,
            });
        }
        let path = agent_file(dir, id);
        let set = read_plan_file(&path, id)?;
        if let Some(first) = sets.first() {
            if first.dim() != set.dim() {
                return Err(DatasetError::Schema {
                    path,
                    expected: first.dim(),
                    found: set.dim(),
                });
            }
        }
        sets.push(set.normalize_local_costs());
    }
    Ok(sets)
}
