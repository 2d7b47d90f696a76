//! Plan files, synthetic datasets and the experiment harness around
//! `holarchy-core`.

pub mod compare;
pub mod dataset;
pub mod harness;
