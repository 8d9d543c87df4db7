//! Chinese restaurant process, GEM stick-breaking, and the partition of a
//! tree's labels by the subtrees hanging off its root.

use std::collections::BTreeMap;
use std::io::{self, Write};

use num_traits::{One, Zero};
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lifting::LiftTrajectory;
use crate::partitions::Partition;
use crate::port_trees::PlaneTree;
use crate::Rational;

fn check_params(alpha: f64, theta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) || !(theta > -alpha) || !theta.is_finite() {
        return Err(Error::Domain(format!(
            "need 0 <= alpha <= 1 and theta > -alpha, got ({alpha}, {theta})"
        )));
    }
    Ok(())
}

/// Seating state: tables in order of creation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CrpState {
    pub tables: Vec<Vec<u32>>,
    pub m: u32,
}

impl CrpState {
    /// Seats customer `m + 1`.
    pub fn seat<R: Rng + ?Sized>(&mut self, alpha: f64, theta: f64, rng: &mut R) {
        let m = self.m as f64;
        let k = self.tables.len() as f64;
        let customer = self.m + 1;
        self.m += 1;
        // u in [0, m + theta): tables take m_i - alpha each, the rest opens one
        let mut u = rng.random::<f64>() * (m + theta);
        for table in &mut self.tables {
            let w = table.len() as f64 - alpha;
            if u < w {
                table.push(customer);
                return;
            }
            u -= w;
        }
        debug_assert!(u <= theta + k * alpha + 1e-9);
        self.tables.push(vec![customer]);
    }

    pub fn partition(&self) -> Partition {
        Partition::new(self.tables.clone()).expect("tables partition [m]")
    }
}

/// Partition of `[m]` after seating `m` customers.
pub fn sample_crp<R: Rng + ?Sized>(m: u32, alpha: f64, theta: f64, rng: &mut R) -> Result<Partition> {
    check_params(alpha, theta)?;
    if m == 0 {
        return Err(Error::ZeroSize);
    }
    let mut state = CrpState::default();
    for _ in 0..m {
        state.seat(alpha, theta, rng);
    }
    Ok(state.partition())
}

fn check_initial_segment(pi: &Partition) -> Result<()> {
    let g = pi.ground_set();
    if g.iter().enumerate().any(|(i, &x)| x != i as u32 + 1) {
        return Err(Error::Domain(format!("{pi} is not a partition of {{1..m}}")));
    }
    Ok(())
}

/// Calls `f(existing_table_size, tables_so_far, seated_so_far)` for each
/// customer after the first; table size is `None` for a new table.
fn seating_factors(pi: &Partition, mut f: impl FnMut(Option<usize>, usize, usize)) {
    let m = pi.size();
    let mut owner = vec![0usize; m + 1];
    for (i, b) in pi.blocks().iter().enumerate() {
        for &x in b {
            owner[x as usize] = i;
        }
    }
    let mut sizes = vec![0usize; pi.num_blocks()];
    let mut open = 0usize;
    for c in 1..=m {
        let t = owner[c];
        if c > 1 {
            let existing = (sizes[t] > 0).then_some(sizes[t]);
            f(existing, open, c - 1);
        }
        if sizes[t] == 0 {
            open += 1;
        }
        sizes[t] += 1;
    }
}

/// Probability that the (α, θ) restaurant seats `{1..m}` as `pi`.
pub fn crp_eppf(pi: &Partition, alpha: f64, theta: f64) -> Result<f64> {
    check_params(alpha, theta)?;
    check_initial_segment(pi)?;
    let mut p = 1.0;
    seating_factors(pi, |size, k, m| {
        let num = match size {
            Some(s) => s as f64 - alpha,
            None => theta + k as f64 * alpha,
        };
        p *= num / (m as f64 + theta);
    });
    Ok(p)
}

/// Exact EPPF for rational parameters.
pub fn crp_eppf_exact(pi: &Partition, alpha: &Rational, theta: &Rational) -> Result<Rational> {
    let (zero, one) = (Rational::zero(), Rational::one());
    if *alpha < zero || *alpha > one || *theta <= -alpha.clone() {
        return Err(Error::Domain(format!("need 0 <= alpha <= 1 and theta > -alpha, got ({alpha}, {theta})")));
    }
    check_initial_segment(pi)?;
    let mut p = Rational::one();
    seating_factors(pi, |size, k, m| {
        let num = match size {
            Some(s) => Rational::from_integer(s.into()) - alpha,
            None => theta + Rational::from_integer(k.into()) * alpha,
        };
        p *= num / (Rational::from_integer(m.into()) + theta);
    });
    Ok(p)
}

/// Groups labels by the subtree of the root's child that carries them.
/// The root's own label is not part of the ground set.
pub fn root_partition(tree: &PlaneTree) -> Result<Partition> {
    let root = tree.root();
    if tree.is_leaf(root) {
        return Err(Error::InvalidTree("root partition of a single-node tree".into()));
    }
    let blocks: Vec<Vec<u32>> = tree
        .children(root)
        .iter()
        .map(|&c| tree.subtree(c).iter().flat_map(|&v| tree.label(v).iter().copied()).collect())
        .collect();
    Partition::new(blocks)
}

/// Stick-breaking frequencies in order of appearance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StickSequence {
    pub frequencies: Vec<f64>,
}

impl StickSequence {
    pub fn partial_sums(&self) -> Vec<f64> {
        self.frequencies
            .iter()
            .scan(0.0, |acc, &p| {
                *acc += p;
                Some(*acc)
            })
            .collect()
    }

    /// Frequencies in decreasing order.
    pub fn ranked(&self) -> Vec<f64> {
        let mut r = self.frequencies.clone();
        r.sort_by(|a, b| b.total_cmp(a));
        r
    }
}

/// First `count` GEM(α, θ) frequencies: `P_i = W_i ∏_{j<i} (1 - W_j)` with
/// independent `W_i ~ beta(1 - α, θ + iα)`.
pub fn sample_gem_sticks<R: Rng + ?Sized>(count: usize, alpha: f64, theta: f64, rng: &mut R) -> Result<StickSequence> {
    check_params(alpha, theta)?;
    if alpha >= 1.0 {
        return Err(Error::Domain("GEM needs alpha < 1".into()));
    }
    if count == 0 {
        return Err(Error::ZeroSize);
    }
    let mut rest = 1.0;
    let mut frequencies = Vec::with_capacity(count);
    for i in 1..=count {
        let w = Beta::new(1.0 - alpha, theta + i as f64 * alpha)
            .map_err(|e| Error::Domain(e.to_string()))?
            .sample(rng);
        frequencies.push(rest * w);
        rest *= 1.0 - w;
    }
    Ok(StickSequence { frequencies })
}

/// `(time, growth / n)` each time the block containing 1 grows.
pub fn block_one_jump_log(traj: &LiftTrajectory, n: usize) -> Vec<(f64, f64)> {
    let mut size_of: BTreeMap<u32, usize> = traj
        .path
        .initial
        .blocks()
        .iter()
        .map(|b| (b[0], b.len()))
        .collect();
    let mut out = Vec::new();
    for change in &traj.path.changes {
        let before = size_of.get(&1).copied().unwrap_or(0);
        let total: usize = change.merged.iter().map(|m| size_of.remove(m).unwrap_or(0)).sum();
        let new_min = change.merged[0];
        if new_min == 1 {
            out.push((change.time, (total - before) as f64 / n as f64));
        }
        size_of.insert(new_min, total);
    }
    out
}

/// CSV rows `replicate,index,time,value` for one stick sequence (no time).
pub fn write_sticks_csv<W: Write>(w: &mut W, replicate: u64, sticks: &StickSequence) -> io::Result<()> {
    for (i, p) in sticks.frequencies.iter().enumerate() {
        writeln!(w, "{replicate},{},,{p}", i + 1)?;
    }
    Ok(())
}

/// CSV rows `replicate,index,time,value` for one block-one jump log.
pub fn write_jump_log_csv<W: Write>(w: &mut W, replicate: u64, log: &[(f64, f64)]) -> io::Result<()> {
    for (i, (t, v)) in log.iter().enumerate() {
        writeln!(w, "{replicate},{},{t},{v}", i + 1)?;
    }
    Ok(())
}
