//! Time-stamped partition paths shared by the lifting chain and the
//! coalescent simulator.

use serde::Serialize;

use crate::partitions::{BlockIndex, Partition};

/// One merger: at `time`, the blocks whose least elements are `merged`
/// (ascending) become a single block.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StateChange {
    pub time: f64,
    pub merged: Vec<u32>,
}

impl StateChange {
    /// Number of blocks merged.
    pub fn k(&self) -> usize {
        self.merged.len()
    }
}

/// A coarsening sequence of partitions stored as merger records.
///
/// States are replayed on demand; storing every intermediate partition
/// costs O(n²) memory per path.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionPath {
    pub initial: Partition,
    pub changes: Vec<StateChange>,
}

impl PartitionPath {
    pub fn new(initial: Partition) -> Self {
        Self {
            initial,
            changes: Vec::new(),
        }
    }

    /// `(time, partition after the change, k)` for every state change.
    pub fn states(&self) -> impl Iterator<Item = (f64, Partition, usize)> + '_ {
        let mut current = self.initial.clone();
        self.changes.iter().map(move |c| {
            current = apply(&current, c);
            (c.time, current.clone(), c.k())
        })
    }

    pub fn final_partition(&self) -> Partition {
        self.changes.iter().fold(self.initial.clone(), |p, c| apply(&p, c))
    }

    pub fn is_absorbed(&self) -> bool {
        self.final_partition().num_blocks() == 1
    }

    pub fn first_change(&self) -> Option<&StateChange> {
        self.changes.first()
    }
}

/// Applies a merger recorded by block minima.
pub fn apply(p: &Partition, change: &StateChange) -> Partition {
    let blocks = p.blocks();
    let idx: Vec<BlockIndex> = change
        .merged
        .iter()
        .map(|m| {
            let i = blocks.partition_point(|b| b[0] < *m);
            debug_assert_eq!(blocks[i][0], *m, "merged minimum is not a block minimum");
            BlockIndex(i)
        })
        .collect();
    p.merge(&idx).expect("recorded merger is valid")
}
