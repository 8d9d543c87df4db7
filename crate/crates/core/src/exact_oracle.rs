//! Exhaustive ground truth at small n, in exact rational arithmetic.
//!
//! Everything here is derived from enumerating trees and lift events; no
//! rate formula from [`crate::coalescent`] is consulted, so these tables can
//! be used to check those formulas.

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::crp_gem::root_partition;
use crate::error::{Error, Result};
use crate::partitions::Partition;
use crate::port_trees::{enumerate_ports, for_each_port, PlaneTree, DEFAULT_ENUMERATION_CAP};
use crate::trajectory::{apply, StateChange};
use crate::Rational;

/// Largest n for event-level enumeration.
pub const MAX_EVENT_N: usize = 7;
/// Largest n for conditional tables over label sets.
pub const MAX_LEMMA_N: usize = 6;

fn check_n(n: usize, lo: usize, hi: usize) -> Result<()> {
    if n < lo || n > hi {
        return Err(Error::OracleRange { n, lo, hi });
    }
    Ok(())
}

fn frac(p: usize, q: usize) -> Rational {
    Rational::new(p.into(), q.into())
}

/// Exact law keyed by canonical text (tree encoding or partition text).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DistributionTable(pub BTreeMap<String, Rational>);

impl DistributionTable {
    pub fn add(&mut self, key: String, p: Rational) {
        *self.0.entry(key).or_insert_with(Rational::zero) += p;
    }

    pub fn get(&self, key: &str) -> Rational {
        self.0.get(key).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn total(&self) -> Rational {
        self.0.values().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Rational)> {
        self.0.iter()
    }
}

/// All PORTs on `{1..n}` with their count.
fn all_trees(n: usize) -> Result<(Vec<PlaneTree>, usize)> {
    let trees = enumerate_ports(&Partition::discrete(n as u32)?)?;
    let count = trees.len();
    Ok((trees, count))
}

/// Calls `f(tree, picked, successor, probability)` for every outcome of one
/// lift of a uniform PORT of size `n`; `successor` is `None` for leaves.
fn for_each_lift(
    trees: &[PlaneTree],
    mut f: impl FnMut(&PlaneTree, crate::NodeRef, Option<crate::NodeRef>, Rational),
) {
    let tree_weight = frac(1, trees.len());
    for t in trees {
        let node_weight = &tree_weight / Rational::from_integer(t.len().into());
        for u in t.nodes() {
            let kids = t.children(u);
            if kids.is_empty() {
                f(t, u, None, node_weight.clone());
            } else {
                let w = &node_weight / Rational::from_integer(kids.len().into());
                for &v in kids {
                    f(t, u, Some(v), w.clone());
                }
            }
        }
    }
}

/// Law of the tree obtained by lifting an LPAT(n) once. Null events (a leaf
/// was picked) leave the tree unchanged and are keyed by the tree itself.
pub fn exact_lift_distribution(n: usize) -> Result<DistributionTable> {
    check_n(n, 2, MAX_EVENT_N)?;
    let (trees, _) = all_trees(n)?;
    let mut table = DistributionTable::default();
    for_each_lift(&trees, |t, u, v, p| {
        let key = match v {
            None => t.encode(),
            Some(v) => {
                let mut lifted = t.clone();
                lifted.lift_in_place(u, v).expect("v is a child of u");
                lifted.encode()
            }
        };
        table.add(key, p);
    });
    Ok(table)
}

/// Probability of "no state change" after one lift of an LPAT(n).
pub fn exact_null_probability(n: usize) -> Result<Rational> {
    check_n(n, 2, MAX_EVENT_N)?;
    let (trees, _) = all_trees(n)?;
    let mut acc = Rational::zero();
    for_each_lift(&trees, |_, _, v, p| {
        if v.is_none() {
            acc += p;
        }
    });
    Ok(acc)
}

#[derive(Clone, Debug)]
pub struct ConditionalLaw {
    pub label_set: Partition,
    /// Every PORT on the label set with its conditional probability.
    pub conditional: Vec<(String, Rational)>,
    pub uniform: bool,
}

#[derive(Clone, Debug)]
pub struct Lemma1Report {
    pub n: usize,
    pub laws: Vec<ConditionalLaw>,
    pub pass: bool,
}

/// Checks that, given its label set, a once-lifted LPAT(n) is uniform over
/// all PORTs on that label set. Only genuine lifts count: a picked leaf
/// leaves the tree as it was, size-biased by its number of leaves.
pub fn verify_lemma1(n: usize) -> Result<Lemma1Report> {
    check_n(n, 2, MAX_LEMMA_N)?;
    let dist = exact_lift_distribution(n)?;
    let mut by_labels: BTreeMap<Partition, BTreeMap<String, Rational>> = BTreeMap::new();
    for (key, p) in dist.iter() {
        let t = PlaneTree::decode(key)?;
        let labels = t.label_set();
        if labels.is_discrete() {
            continue;
        }
        by_labels.entry(labels).or_default().insert(key.clone(), p.clone());
    }
    let mut laws = Vec::new();
    for (pi, outcomes) in by_labels {
        let mass: Rational = outcomes.values().sum();
        let support = enumerate_ports(&pi)?;
        let target = frac(1, support.len());
        let conditional: Vec<(String, Rational)> = support
            .iter()
            .map(|t| {
                let key = t.encode();
                let p = outcomes.get(&key).cloned().unwrap_or_else(Rational::zero);
                (key, p / &mass)
            })
            .collect();
        let covered = outcomes.keys().all(|k| conditional.iter().any(|(c, _)| c == k));
        let uniform = covered && conditional.iter().all(|(_, p)| *p == target);
        laws.push(ConditionalLaw {
            label_set: pi,
            conditional,
            uniform,
        });
    }
    let pass = laws.iter().all(|l| l.uniform);
    Ok(Lemma1Report { n, laws, pass })
}

#[derive(Clone, Debug)]
pub struct FirstTransition {
    pub n: usize,
    /// Rate at which one specific k-set of singletons merges, by k.
    pub per_k: BTreeMap<usize, Rational>,
    /// Whether every k-set had the same rate, and all k-sets occurred.
    pub exchangeable: bool,
    /// Sum of the rates over all mergers.
    pub total_rate: Rational,
    /// Mean number of internal nodes of an LPAT(n).
    pub expected_internal: Rational,
}

/// Merger rates out of `Δ_n` for the lifting chain started from an LPAT(n):
/// every node rings at rate 1 and a ring at `u` lifts each child with
/// probability `1/d⁺(u)`.
pub fn exact_first_transition(n: usize) -> Result<FirstTransition> {
    check_n(n, 2, MAX_EVENT_N)?;
    let (trees, _) = all_trees(n)?;
    let tree_weight = frac(1, trees.len());
    let mut per_set: BTreeMap<Vec<u32>, Rational> = BTreeMap::new();
    let mut expected_internal = Rational::zero();
    for t in &trees {
        expected_internal += &tree_weight * Rational::from_integer(t.internal_count().into());
        for u in t.nodes() {
            let kids = t.children(u);
            for &v in kids {
                let mut set: Vec<u32> = t.subtree(v).iter().map(|&w| t.min_label(w)).collect();
                set.push(t.min_label(u));
                set.sort_unstable();
                let r = &tree_weight / Rational::from_integer(kids.len().into());
                *per_set.entry(set).or_insert_with(Rational::zero) += r;
            }
        }
    }
    let total_rate: Rational = per_set.values().sum();
    let mut per_k: BTreeMap<usize, Rational> = BTreeMap::new();
    let mut sets_per_k: BTreeMap<usize, usize> = BTreeMap::new();
    let mut exchangeable = true;
    for (set, r) in &per_set {
        let k = set.len();
        *sets_per_k.entry(k).or_default() += 1;
        match per_k.get(&k) {
            Some(prev) if prev != r => exchangeable = false,
            Some(_) => {}
            None => {
                per_k.insert(k, r.clone());
            }
        }
    }
    for k in 2..=n {
        let subsets = crate::coalescent::binom(n, k);
        if sets_per_k.get(&k).copied().unwrap_or(0) != usize::try_from(subsets).unwrap_or(usize::MAX) {
            exchangeable = false;
        }
    }
    Ok(FirstTransition {
        n,
        per_k,
        exchangeable,
        total_rate,
        expected_internal,
    })
}

/// Law of the partition reached at the first state change of the lifting
/// chain started from an LPAT(n). Given the tree, the first genuine lift
/// picks a uniform internal node and then a uniform child.
pub fn exact_first_jump_law(n: usize) -> Result<DistributionTable> {
    check_n(n, 2, MAX_EVENT_N)?;
    let (trees, _) = all_trees(n)?;
    let start = Partition::discrete(n as u32)?;
    let tree_weight = frac(1, trees.len());
    let mut table = DistributionTable::default();
    for t in &trees {
        let internal = frac(1, t.internal_count());
        for u in t.nodes() {
            let kids = t.children(u);
            for &v in kids {
                let mut merged: Vec<u32> = t.subtree(v).iter().map(|&w| t.min_label(w)).collect();
                merged.push(t.min_label(u));
                merged.sort_unstable();
                let next = apply(&start, &StateChange { time: 0.0, merged });
                let p = &tree_weight * &internal / Rational::from_integer(kids.len().into());
                table.add(next.to_string(), p);
            }
        }
    }
    Ok(table)
}

/// Merger-size law of the first state change from an LPAT(n), by k.
pub fn exact_first_jump_sizes(n: usize) -> Result<BTreeMap<usize, Rational>> {
    let mut out: BTreeMap<usize, Rational> = BTreeMap::new();
    for (key, p) in exact_first_jump_law(n)?.iter() {
        let pi: Partition = key.parse()?;
        let k = n - pi.num_blocks() + 1;
        *out.entry(k).or_insert_with(Rational::zero) += p;
    }
    Ok(out)
}

/// Mean time to the first state change from an LPAT(n): the holding time
/// is exponential with rate equal to the number of internal nodes.
pub fn exact_first_change_mean(n: usize) -> Result<Rational> {
    check_n(n, 2, MAX_EVENT_N)?;
    let (trees, count) = all_trees(n)?;
    Ok(trees.iter().map(|t| frac(1, t.internal_count())).sum::<Rational>() / Rational::from_integer(count.into()))
}

/// Law of the root-subtree partition of an LPAT(n), a partition of `{2..n}`.
pub fn exact_root_partition_law(n: usize) -> Result<DistributionTable> {
    check_n(n, 2, MAX_EVENT_N)?;
    let pi = Partition::discrete(n as u32)?;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut total = 0usize;
    for_each_port(&pi, DEFAULT_ENUMERATION_CAP, |t| {
        total += 1;
        let key = root_partition(t).expect("n >= 2").to_string();
        *counts.entry(key).or_default() += 1;
    })?;
    Ok(DistributionTable(
        counts.into_iter().map(|(k, c)| (k, frac(c, total))).collect(),
    ))
}

/// Law of the root-subtree partition of an LPAT(n+1) restricted to `{2..n}`.
pub fn exact_restricted_root_partition_law(n: usize) -> Result<DistributionTable> {
    check_n(n, 2, MAX_EVENT_N - 1)?;
    let pi = Partition::discrete(n as u32 + 1)?;
    let keep: Vec<u32> = (2..=n as u32).collect();
    let mut table = DistributionTable::default();
    let mut trees = 0usize;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for_each_port(&pi, DEFAULT_ENUMERATION_CAP, |t| {
        trees += 1;
        let rp = root_partition(t).expect("n >= 2");
        let key = rp.restrict_to(&keep).expect("non-empty").to_string();
        *counts.entry(key).or_default() += 1;
    })?;
    for (k, c) in counts {
        table.add(k, frac(c, trees));
    }
    Ok(table)
}
