//! Simulated parent/child message passing with message accounting and
//! failure injection.
//!
//! Latency is not modelled beyond ordering: stages and iterations are
//! barriers, and a failure takes effect at an iteration boundary.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::topology::{FailureSet, TreeTopology};
use crate::Position;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    BottomUp,
    TopDown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Message {
    pub from: Position,
    pub to: Position,
    pub phase: Phase,
    pub stage: usize,
    pub payload_dim: usize,
}

/// Where a message is booked in the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LedgerKey {
    pub iteration: usize,
    pub stage: usize,
    pub holon: usize,
}

impl LedgerKey {
    pub fn new(iteration: usize, stage: usize, holon: usize) -> Self {
        Self {
            iteration,
            stage,
            holon,
        }
    }
}

/// Message counters per (iteration, stage, holon).
///
/// The synchronized count books each stage once, at the size of its busiest
/// holon, since the holons of a stage exchange messages in parallel.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MessageLedger {
    counts: BTreeMap<LedgerKey, u64>,
    dropped: u64,
}

impl MessageLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, key: LedgerKey, messages: u64) {
        *self.counts.entry(key).or_default() += messages;
    }

    pub fn record_drop(&mut self) {
        self.dropped += 1;
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn count(&self, key: LedgerKey) -> u64 {
        self.counts.get(&key).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn sync(&self) -> u64 {
        self.stage_maxima(|_| true)
    }

    pub fn total_for_iteration(&self, iteration: usize) -> u64 {
        self.counts
            .iter()
            .filter(|(k, _)| k.iteration == iteration)
            .map(|(_, v)| v)
            .sum()
    }

    pub fn sync_for_iteration(&self, iteration: usize) -> u64 {
        self.stage_maxima(|k| k.iteration == iteration)
    }

    fn stage_maxima(&self, filter: impl Fn(&LedgerKey) -> bool) -> u64 {
        let mut maxima: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        for (key, &count) in self.counts.iter().filter(|(k, _)| filter(k)) {
            let slot = maxima.entry((key.iteration, key.stage)).or_default();
            *slot = (*slot).max(count);
        }
        maxima.values().sum()
    }

    /// Adds another ledger's counters into this one.
    pub fn merge(&mut self, other: &MessageLedger) {
        for (&key, &count) in &other.counts {
            self.record(key, count);
        }
        self.dropped += other.dropped;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    NodeCrash,
    /// Targets name the child endpoint of the cut link.
    LinkCut,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailureEvent {
    pub at_iteration: usize,
    pub kind: FailureKind,
    pub targets: BTreeSet<Position>,
}

impl FailureEvent {
    pub fn crash(at_iteration: usize, targets: impl IntoIterator<Item = Position>) -> Self {
        Self {
            at_iteration,
            kind: FailureKind::NodeCrash,
            targets: targets.into_iter().collect(),
        }
    }

    pub fn cut(at_iteration: usize, targets: impl IntoIterator<Item = Position>) -> Self {
        Self {
            at_iteration,
            kind: FailureKind::LinkCut,
            targets: targets.into_iter().collect(),
        }
    }
}

/// A message that could not be delivered; returned to the sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeliveryFailure {
    pub message: Message,
}

/// The live state of a tree overlay.
#[derive(Debug, Clone)]
pub struct Network {
    parent: Vec<Option<Position>>,
    crashed: Vec<bool>,
    cut: Vec<bool>,
    iteration: usize,
}

impl Network {
    pub fn new(topology: &TreeTopology) -> Self {
        let n = topology.len();
        Self {
            parent: (0..n).map(|p| topology.parent(p)).collect(),
            crashed: vec![false; n],
            cut: vec![false; n],
            iteration: 0,
        }
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Moves the clock to an iteration boundary.
    pub fn advance_to(&mut self, iteration: usize) {
        self.iteration = self.iteration.max(iteration);
    }

    pub fn is_live(&self, p: Position) -> bool {
        p < self.crashed.len() && !self.crashed[p]
    }

    fn link_up(&self, a: Position, b: Position) -> bool {
        let child = if self.parent.get(b).copied().flatten() == Some(a) {
            b
        } else if self.parent.get(a).copied().flatten() == Some(b) {
            a
        } else {
            return false;
        };
        !self.cut[child]
    }

    /// Books a message if both endpoints are live and adjacent over an intact
    /// link; otherwise drops it and hands it back to the sender.
    pub fn deliver(
        &self,
        message: Message,
        ledger: &mut MessageLedger,
        key: LedgerKey,
    ) -> Result<(), DeliveryFailure> {
        if self.is_live(message.from)
            && self.is_live(message.to)
            && self.link_up(message.from, message.to)
        {
            ledger.record(key, 1);
            Ok(())
        } else {
            ledger.record_drop();
            Err(DeliveryFailure { message })
        }
    }

    pub fn deliver_all(
        &self,
        messages: impl IntoIterator<Item = Message>,
        ledger: &mut MessageLedger,
        key: LedgerKey,
    ) -> Vec<DeliveryFailure> {
        messages
            .into_iter()
            .filter_map(|m| self.deliver(m, ledger, key).err())
            .collect()
    }

    /// Applies a failure at its iteration boundary and returns the live
    /// positions that became holon roots because their parent or uplink is
    /// gone. Re-failing a target is a no-op.
    pub fn inject(&mut self, event: &FailureEvent) -> Result<Vec<Position>, Error> {
        if event.at_iteration < self.iteration {
            return Err(Error::Config("failure event lies in the past"));
        }
        if let Some(&p) = event.targets.iter().find(|&&p| p >= self.parent.len()) {
            return Err(Error::UnknownPosition(p));
        }
        self.iteration = event.at_iteration;
        let before = self.detached_roots();
        for &p in &event.targets {
            match event.kind {
                FailureKind::NodeCrash => self.crashed[p] = true,
                FailureKind::LinkCut => {
                    if self.parent[p].is_some() {
                        self.cut[p] = true;
                    }
                }
            }
        }
        let after = self.detached_roots();
        Ok(after.difference(&before).copied().collect())
    }

    fn detached_roots(&self) -> BTreeSet<Position> {
        (0..self.parent.len())
            .filter(|&p| self.is_live(p))
            .filter(|&p| match self.parent[p] {
                Some(up) => self.crashed[up] || self.cut[p],
                None => false,
            })
            .collect()
    }

    /// Everything failed so far, for [`partition_on_failure`](crate::partition_on_failure).
    pub fn failure_set(&self) -> FailureSet {
        FailureSet {
            nodes: (0..self.crashed.len())
                .filter(|&p| self.crashed[p])
                .collect(),
            links: (0..self.cut.len()).filter(|&p| self.cut[p]).collect(),
        }
    }
}
