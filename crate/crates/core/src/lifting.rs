//! Edge lifting and the continuous-time lifting chain.
//!
//! Every node carries a rate-1 clock. When a clock rings at a leaf nothing
//! happens; otherwise a uniform child of the ringing node is chosen and the
//! edge to it is lifted. The chain is simulated through the superposition:
//! holding times are exponential with rate equal to the node count and the
//! ringing node is uniform.

use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::error::Result;
use crate::partitions::Partition;
use crate::port_trees::{LiftOutcome, NodeRef, PlaneTree};
use crate::trajectory::{PartitionPath, StateChange};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LiftEvent {
    pub time: f64,
    pub picked: NodeRef,
    /// Absent when the picked node was a leaf.
    pub successor: Option<NodeRef>,
    /// Blocks merged by the event; 0 for null events.
    pub merged_block_count: usize,
}

impl LiftEvent {
    pub fn is_null(&self) -> bool {
        self.successor.is_none()
    }
}

#[derive(Clone, Debug)]
pub struct LiftTrajectory {
    pub initial: PlaneTree,
    /// Non-null events, plus null events when recorded.
    pub events: Vec<LiftEvent>,
    pub path: PartitionPath,
    pub final_tree: PlaneTree,
}

impl LiftTrajectory {
    /// `(time, labelset)` after each state change.
    pub fn states(&self) -> impl Iterator<Item = (f64, Partition, usize)> + '_ {
        self.path.states()
    }

    pub fn is_absorbed(&self) -> bool {
        self.final_tree.len() == 1
    }
}

/// Returns a copy of `tree` with the edge `{u, v}` lifted into `u`.
pub fn lift_edge(tree: &PlaneTree, u: NodeRef, v: NodeRef) -> Result<PlaneTree> {
    let mut out = tree.clone();
    out.lift_in_place(u, v)?;
    Ok(out)
}

pub fn label_set(tree: &PlaneTree) -> Partition {
    tree.label_set()
}

/// Picks a uniform node and, unless it is a leaf, a uniform child.
pub fn sample_lift<R: Rng + ?Sized>(tree: &PlaneTree, rng: &mut R) -> LiftEvent {
    let nodes: Vec<NodeRef> = tree.nodes().collect();
    let picked = nodes[rng.random_range(0..nodes.len())];
    choose_successor(tree, picked, 0.0, rng)
}

fn choose_successor<R: Rng + ?Sized>(tree: &PlaneTree, picked: NodeRef, time: f64, rng: &mut R) -> LiftEvent {
    let kids = tree.children(picked);
    if kids.is_empty() {
        return LiftEvent {
            time,
            picked,
            successor: None,
            merged_block_count: 0,
        };
    }
    let v = kids[rng.random_range(0..kids.len())];
    LiftEvent {
        time,
        picked,
        successor: Some(v),
        merged_block_count: tree.subtree(v).len() + 1,
    }
}

/// Event-by-event stepper over the lifting chain.
///
/// Keeps a dense list of live nodes so uniform node selection is O(1).
#[derive(Clone, Debug)]
pub struct LiftChain {
    tree: PlaneTree,
    live: Vec<NodeRef>,
    slot: Vec<u32>,
    time: f64,
}

impl LiftChain {
    pub fn new(tree: PlaneTree) -> Self {
        let live: Vec<NodeRef> = tree.nodes().collect();
        let mut slot = vec![u32::MAX; tree.capacity()];
        for (i, v) in live.iter().enumerate() {
            slot[v.index()] = i as u32;
        }
        Self {
            tree,
            live,
            slot,
            time: 0.0,
        }
    }

    pub fn tree(&self) -> &PlaneTree {
        &self.tree
    }

    pub fn into_tree(self) -> PlaneTree {
        self.tree
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn is_absorbed(&self) -> bool {
        self.tree.len() == 1
    }

    /// Time of the next clock ring; advances the clock.
    fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        let e: f64 = rng.sample(Exp1);
        self.time += e / self.tree.len() as f64;
        self.time
    }

    /// Runs one clock ring. Returns `None` once absorbed, or when the ring
    /// would land after `horizon` (the clock is then left at the ring time).
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        horizon: Option<f64>,
    ) -> Option<(LiftEvent, Option<LiftOutcome>)> {
        if self.is_absorbed() {
            return None;
        }
        let t = self.advance(rng);
        if horizon.is_some_and(|h| t > h) {
            return None;
        }
        let picked = self.live[rng.random_range(0..self.live.len())];
        let event = choose_successor(&self.tree, picked, t, rng);
        let Some(v) = event.successor else {
            return Some((event, None));
        };
        let outcome = self
            .tree
            .lift_in_place(picked, v)
            .expect("successor is a child of the picked node");
        for w in &outcome.removed {
            let i = self.slot[w.index()] as usize;
            let last = *self.live.last().expect("non-empty");
            self.live.swap_remove(i);
            if last != *w {
                self.slot[last.index()] = i as u32;
            }
            self.slot[w.index()] = u32::MAX;
        }
        Some((event, Some(outcome)))
    }

    /// Runs until the next state change.
    pub fn next_change<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<(LiftEvent, LiftOutcome)> {
        loop {
            match self.step(rng, None)? {
                (e, Some(o)) => return Some((e, o)),
                (_, None) => continue,
            }
        }
    }
}

/// Simulates the lifting chain from `start` until absorption or `horizon`.
pub fn simulate_lift_chain<R: Rng + ?Sized>(
    start: &PlaneTree,
    rng: &mut R,
    horizon: Option<f64>,
    record_null: bool,
) -> LiftTrajectory {
    let mut chain = LiftChain::new(start.clone());
    let mut events = Vec::new();
    let mut path = PartitionPath::new(start.label_set());
    while let Some((event, outcome)) = chain.step(rng, horizon) {
        if let Some(o) = outcome {
            path.changes.push(StateChange {
                time: event.time,
                merged: o.merged_minima,
            });
            events.push(event);
        } else if record_null {
            events.push(event);
        }
    }
    LiftTrajectory {
        initial: start.clone(),
        events,
        path,
        final_tree: chain.into_tree(),
    }
}

/// JSON-lines record for one state change or event.
#[derive(Serialize)]
pub struct StateRecord<'a> {
    pub t: f64,
    pub partition: &'a str,
    pub k: usize,
    pub rep: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(s: &str) -> PlaneTree {
        s.parse().unwrap()
    }

    #[test]
    fn lift_edge_examples() {
        let chain = t("{1}({2}({3}))");
        let (n1, n2, n3) = (chain.find(1).unwrap(), chain.find(2).unwrap(), chain.find(3).unwrap());
        assert_eq!(lift_edge(&chain, n1, n2).unwrap().encode(), "{1,2,3}");
        assert_eq!(lift_edge(&chain, n2, n3).unwrap().encode(), "{1}({2,3})");
        let star = t("{1}({2},{3})");
        let (r, c3) = (star.find(1).unwrap(), star.find(3).unwrap());
        assert_eq!(lift_edge(&star, r, c3).unwrap().encode(), "{1,3}({2})");
        assert!(lift_edge(&chain, n1, n3).is_err());
    }

    #[test]
    fn label_set_examples() {
        assert_eq!(label_set(&t("{1}({2},{3})")).to_string(), "{1}|{2}|{3}");
        assert_eq!(label_set(&t("{1}({2,3})")).to_string(), "{1}|{2,3}");
        assert_eq!(label_set(&t("{1,4}({2},{3})")).to_string(), "{1,4}|{2}|{3}");
    }

    #[test]
    fn lift_keeps_tree_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let tree = crate::port_trees::sample_lpat_n(12, &mut rng).unwrap();
            let ev = sample_lift(&tree, &mut rng);
            if let Some(v) = ev.successor {
                let lifted = lift_edge(&tree, ev.picked, v).unwrap();
                lifted.validate().unwrap();
                assert_eq!(lifted.len(), tree.len() - tree.subtree(v).len());
                assert_eq!(
                    lifted.label_set().num_blocks(),
                    tree.label_set().num_blocks() - (ev.merged_block_count - 1)
                );
                assert_eq!(lifted.min_label(ev.picked), tree.min_label(ev.picked));
            }
        }
    }

    #[test]
    fn single_node_only_has_null_events() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let one = t("{1}");
        for _ in 0..10 {
            assert!(sample_lift(&one, &mut rng).is_null());
        }
        let traj = simulate_lift_chain(&one, &mut rng, None, true);
        assert!(traj.events.is_empty());
        assert!(traj.path.changes.is_empty());
    }

    #[test]
    fn sample_lift_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let reps = 120_000;
        let chain = t("{1}({2}({3}))");
        let star = t("{1}({2},{3})");
        let (mut a, mut b) = (0u32, 0u32);
        for _ in 0..reps {
            let e = sample_lift(&chain, &mut rng);
            if e.successor.is_some_and(|v| chain.min_label(v) == 3) {
                a += 1;
            }
            let e = sample_lift(&star, &mut rng);
            if star.min_label(e.picked) == 1 && e.successor.is_some_and(|v| star.min_label(v) == 2) {
                b += 1;
            }
        }
        let check = |hits: u32, p: f64| {
            let sd = (reps as f64 * p * (1.0 - p)).sqrt();
            ((hits as f64 - reps as f64 * p) / sd).abs() < 3.0
        };
        assert!(check(a, 1.0 / 3.0));
        assert!(check(b, 1.0 / 6.0));
    }

    #[test]
    fn trajectory_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let tree = crate::port_trees::sample_lpat_n(15, &mut rng).unwrap();
            let traj = simulate_lift_chain(&tree, &mut rng, None, true);
            assert!(traj.is_absorbed());
            let times: Vec<f64> = traj.events.iter().map(|e| e.time).collect();
            assert!(times.windows(2).all(|w| w[0] < w[1]));
            let mut blocks = 15;
            for (_, p, k) in traj.states() {
                assert!(k >= 2);
                blocks -= k - 1;
                assert_eq!(p.num_blocks(), blocks);
            }
            assert_eq!(traj.path.final_partition().num_blocks(), 1);
            for e in &traj.events {
                assert_eq!(e.successor.is_some(), e.merged_block_count >= 2);
            }
        }
    }

    #[test]
    fn horizon_truncates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tree = crate::port_trees::sample_lpat_n(30, &mut rng).unwrap();
        let traj = simulate_lift_chain(&tree, &mut rng, Some(0.05), false);
        assert!(traj.path.changes.iter().all(|c| c.time <= 0.05));
    }

    #[test]
    fn first_change_mean_time_from_three() {
        // wait is Exp(#internal nodes): Exp(2) on the path tree (w.p. 1/3),
        // Exp(1) on either star, so the mean is 1/3 * 1/2 + 2/3 * 1 = 5/6
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let reps = 100_000;
        let mut sum = 0.0;
        for _ in 0..reps {
            let tree = crate::port_trees::sample_lpat_n(3, &mut rng).unwrap();
            let mut chain = LiftChain::new(tree);
            sum += chain.next_change(&mut rng).unwrap().0.time;
        }
        let mean = sum / reps as f64;
        // the wait is a mixture of exponentials; sd < 1
        assert!((mean - 5.0 / 6.0).abs() < 3.0 / (reps as f64).sqrt(), "mean {mean}");
    }
}
