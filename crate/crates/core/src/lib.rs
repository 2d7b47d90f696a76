//! Decentralized collective plan selection over tree overlays.
//!
//! Agents placed on a balanced tree each choose one of their possible plans so
//! that the element-wise sum of all chosen plans (the global response) has
//! minimal variance. The baseline learning engine runs bottom-up aggregation
//! and top-down broadcast passes over the whole tree; the holarchic schemes
//! run the same engine recursively inside nested subtrees (holons), from the
//! parents of the leaves up to the root.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the synthetic
//! generator and the experiment harness live in the `holarch` crate.

#![no_std]

extern crate alloc;

pub mod engine;
pub mod error;
pub mod holarchy;
pub mod metrics;
pub mod netsim;
pub mod oracle;
pub mod plan;
pub mod topology;

pub use engine::{run_baseline, BaselineConfig, IterationOutcome, RunTrace, Selections};
pub use error::Error;
pub use holarchy::{
    run_holarchic_pass, run_mitigation_scenario, run_scheme, HolarchicPassResult, MitigationTrace,
    Scheme, SchemeConfig,
};
pub use netsim::{FailureEvent, FailureKind, Message, MessageLedger, Network, Phase};
pub use plan::{variance, weighted_score, CostFunction, CostKind, Plan, PlanSet};
pub use topology::{
    decompose_holarchy, partition_on_failure, Holon, HolonStagePlan, Scale, TreeTopology,
};

/// Index of a node in a [`TreeTopology`], assigned breadth-first from the root.
pub type Position = usize;

/// Identifier of an agent (and of its plan set).
pub type AgentId = usize;
