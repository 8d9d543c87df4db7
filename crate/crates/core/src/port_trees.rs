//! Plane-oriented recursive trees (PORTs).
//!
//! A [`PlaneTree`] is a rooted tree with ordered children whose nodes carry
//! the blocks of a partition; block minima strictly increase along every
//! path away from the root. Nodes live in an arena, so a [`NodeRef`] stays
//! valid while unrelated subtrees are removed.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::One;
use rand::Rng;

use crate::error::{Error, Result};
use crate::partitions::{write_block, Partition};

/// Default largest label set [`enumerate_ports`] will materialize.
pub const DEFAULT_ENUMERATION_CAP: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeRef(u32);

impl NodeRef {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug)]
struct Node {
    label: Vec<u32>,
    children: Vec<NodeRef>,
    parent: Option<NodeRef>,
}

#[derive(Clone, Debug)]
pub struct PlaneTree {
    nodes: Vec<Option<Node>>,
    root: NodeRef,
    len: usize,
}

/// What an in-place lift removed and absorbed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LiftOutcome {
    /// Nodes of the discarded subtree, preorder.
    pub removed: Vec<NodeRef>,
    /// Least elements of every block that was merged, ascending
    /// (includes the surviving node's own block).
    pub merged_minima: Vec<u32>,
}

impl PlaneTree {
    /// A tree with a single node carrying `label`.
    pub fn singleton(label: Vec<u32>) -> Result<Self> {
        check_label(&label)?;
        Ok(Self {
            nodes: vec![Some(Node {
                label,
                children: Vec::new(),
                parent: None,
            })],
            root: NodeRef(0),
            len: 1,
        })
    }

    pub fn root(&self) -> NodeRef {
        self.root
    }

    /// Number of live nodes.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Size of the underlying arena, live or not.
    pub fn capacity(&self) -> usize {
        self.nodes.len()
    }

    fn node(&self, v: NodeRef) -> &Node {
        self.nodes[v.index()].as_ref().expect("stale NodeRef")
    }

    fn node_mut(&mut self, v: NodeRef) -> &mut Node {
        self.nodes[v.index()].as_mut().expect("stale NodeRef")
    }

    pub fn contains(&self, v: NodeRef) -> bool {
        self.nodes.get(v.index()).is_some_and(Option::is_some)
    }

    pub fn label(&self, v: NodeRef) -> &[u32] {
        &self.node(v).label
    }

    /// Least element of a node's label; stable under lifting.
    pub fn min_label(&self, v: NodeRef) -> u32 {
        self.node(v).label[0]
    }

    pub fn children(&self, v: NodeRef) -> &[NodeRef] {
        &self.node(v).children
    }

    pub fn parent(&self, v: NodeRef) -> Option<NodeRef> {
        self.node(v).parent
    }

    /// Out-degree d⁺(v).
    pub fn out_degree(&self, v: NodeRef) -> usize {
        self.node(v).children.len()
    }

    pub fn is_leaf(&self, v: NodeRef) -> bool {
        self.node(v).children.is_empty()
    }

    /// Live nodes in arena order.
    pub fn nodes(&self) -> impl Iterator<Item = NodeRef> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.is_some())
            .map(|(i, _)| NodeRef(i as u32))
    }

    pub fn internal_count(&self) -> usize {
        self.nodes().filter(|&v| !self.is_leaf(v)).count()
    }

    /// The node whose label contains `x`.
    pub fn find(&self, x: u32) -> Option<NodeRef> {
        self.nodes().find(|&v| self.label(v).binary_search(&x).is_ok())
    }

    /// Preorder listing of the subtree rooted at `v`.
    pub fn subtree(&self, v: NodeRef) -> Vec<NodeRef> {
        let mut out = Vec::new();
        let mut stack = vec![v];
        while let Some(w) = stack.pop() {
            out.push(w);
            stack.extend(self.children(w).iter().rev());
        }
        out
    }

    /// Number of elements carried by the subtree rooted at `v`.
    pub fn subtree_weight(&self, v: NodeRef) -> usize {
        self.subtree(v).iter().map(|&w| self.label(w).len()).sum()
    }

    /// Inserts a new child of `parent` at planar gap `pos` (0 = leftmost).
    pub fn attach(&mut self, parent: NodeRef, pos: usize, label: Vec<u32>) -> Result<NodeRef> {
        check_label(&label)?;
        let pmin = self.min_label(parent);
        if label[0] <= pmin {
            return Err(Error::NotIncreasing {
                parent: pmin,
                child: label[0],
            });
        }
        if pos > self.out_degree(parent) {
            return Err(Error::InvalidTree(format!(
                "gap {pos} out of range for a node with {} children",
                self.out_degree(parent)
            )));
        }
        Ok(self.attach_unchecked(parent, pos, label))
    }

    fn attach_unchecked(&mut self, parent: NodeRef, pos: usize, label: Vec<u32>) -> NodeRef {
        let id = NodeRef(self.nodes.len() as u32);
        self.nodes.push(Some(Node {
            label,
            children: Vec::new(),
            parent: Some(parent),
        }));
        self.node_mut(parent).children.insert(pos, id);
        self.len += 1;
        id
    }

    /// Undoes the most recent `attach_unchecked` at `(parent, pos)`.
    fn detach_last(&mut self, parent: NodeRef, pos: usize) {
        let removed = self.node_mut(parent).children.remove(pos);
        debug_assert_eq!(removed.index(), self.nodes.len() - 1);
        self.nodes.pop();
        self.len -= 1;
    }

    /// Partition formed by the node labels.
    pub fn label_set(&self) -> Partition {
        let mut blocks: Vec<Vec<u32>> = self.nodes().map(|v| self.label(v).to_vec()).collect();
        blocks.sort_unstable_by_key(|b| b[0]);
        Partition::from_sorted_unchecked(blocks)
    }

    /// Checks links, the increasing condition and label disjointness.
    pub fn validate(&self) -> Result<()> {
        let mut seen = 0usize;
        let mut stack = vec![self.root];
        if self.parent(self.root).is_some() {
            return Err(Error::InvalidTree("root has a parent".into()));
        }
        while let Some(v) = stack.pop() {
            seen += 1;
            check_label(self.label(v))?;
            for &c in self.children(v) {
                if !self.contains(c) || self.parent(c) != Some(v) {
                    return Err(Error::InvalidTree("inconsistent parent link".into()));
                }
                if self.min_label(c) <= self.min_label(v) {
                    return Err(Error::NotIncreasing {
                        parent: self.min_label(v),
                        child: self.min_label(c),
                    });
                }
                stack.push(c);
            }
        }
        if seen != self.len {
            return Err(Error::InvalidTree("unreachable nodes".into()));
        }
        Partition::new(self.nodes().map(|v| self.label(v).to_vec()).collect())?;
        Ok(())
    }

    /// Canonical text form; see the grammar on [`FromStr`].
    pub fn encode(&self) -> String {
        self.to_string()
    }

    pub fn decode(s: &str) -> Result<Self> {
        s.parse()
    }

    /// Subtree spanned by nodes whose labels meet `[m]`, labels cut to `[m]`.
    pub fn restrict(&self, m: u32) -> Result<Self> {
        if m == 0 {
            return Err(Error::ZeroSize);
        }
        if self.min_label(self.root) > m {
            return Err(Error::EmptyRestriction(m));
        }
        let cut = |l: &[u32]| l.iter().copied().take_while(|&x| x <= m).collect::<Vec<u32>>();
        let mut out = PlaneTree::singleton(cut(self.label(self.root)))?;
        let mut stack = vec![(self.root, out.root)];
        while let Some((v, nv)) = stack.pop() {
            for &c in self.children(v) {
                if self.min_label(c) <= m {
                    let pos = out.out_degree(nv);
                    let nc = out.attach_unchecked(nv, pos, cut(self.label(c)));
                    stack.push((c, nc));
                }
            }
        }
        Ok(out)
    }

    /// Lifts the edge `{u, v}`: every label in the subtree at `v` joins
    /// `u`'s label and that subtree is discarded. Other nodes keep their
    /// handles and planar positions.
    pub fn lift_in_place(&mut self, u: NodeRef, v: NodeRef) -> Result<LiftOutcome> {
        if !self.contains(u) || !self.contains(v) || self.parent(v) != Some(u) {
            return Err(Error::NotAChild);
        }
        let removed = self.subtree(v);
        let mut merged_minima = Vec::with_capacity(removed.len() + 1);
        merged_minima.push(self.min_label(u));
        let mut absorbed = Vec::new();
        for &w in &removed {
            let node = self.nodes[w.index()].take().expect("live subtree node");
            merged_minima.push(node.label[0]);
            absorbed.extend_from_slice(&node.label);
        }
        self.len -= removed.len();
        let un = self.node_mut(u);
        un.children.retain(|&c| c != v);
        un.label.extend_from_slice(&absorbed);
        un.label.sort_unstable();
        merged_minima.sort_unstable();
        Ok(LiftOutcome {
            removed,
            merged_minima,
        })
    }

    /// Copy with the arena compacted and nodes renumbered in preorder.
    pub fn compacted(&self) -> Self {
        let mut out = PlaneTree::singleton(self.label(self.root).to_vec()).expect("valid label");
        let mut stack = vec![(self.root, out.root)];
        while let Some((v, nv)) = stack.pop() {
            let mut made = Vec::new();
            for &c in self.children(v) {
                let pos = out.out_degree(nv);
                made.push((c, out.attach_unchecked(nv, pos, self.label(c).to_vec())));
            }
            stack.extend(made.into_iter().rev());
        }
        out
    }
}

fn check_label(label: &[u32]) -> Result<()> {
    if label.is_empty() {
        return Err(Error::InvalidTree("empty label".into()));
    }
    if label[0] == 0 {
        return Err(Error::InvalidTree("labels must be positive".into()));
    }
    if label.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidTree("label not strictly ascending".into()));
    }
    Ok(())
}

impl PartialEq for PlaneTree {
    /// Structural equality, child order included; arena layout is ignored.
    fn eq(&self, other: &Self) -> bool {
        if self.len != other.len {
            return false;
        }
        let mut stack = vec![(self.root, other.root)];
        while let Some((a, b)) = stack.pop() {
            if self.label(a) != other.label(b) {
                return false;
            }
            let (ca, cb) = (self.children(a), other.children(b));
            if ca.len() != cb.len() {
                return false;
            }
            stack.extend(ca.iter().copied().zip(cb.iter().copied()));
        }
        true
    }
}

impl Eq for PlaneTree {}

impl fmt::Display for PlaneTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // (node, next child index)
        let mut stack: Vec<(NodeRef, usize)> = vec![(self.root, 0)];
        write_block(f, self.label(self.root))?;
        while let Some(top) = stack.last_mut() {
            let (v, i) = *top;
            let kids = self.children(v);
            if i < kids.len() {
                top.1 += 1;
                f.write_str(if i == 0 { "(" } else { "," })?;
                write_block(f, self.label(kids[i]))?;
                stack.push((kids[i], 0));
            } else {
                if i > 0 {
                    f.write_str(")")?;
                }
                stack.pop();
            }
        }
        Ok(())
    }
}

impl FromStr for PlaneTree {
    type Err = Error;

    /// `tree := label [ '(' tree (',' tree)* ')' ]`,
    /// `label := '{' int (',' int)* '}'` with ascending ints.
    fn from_str(s: &str) -> Result<Self> {
        let bytes = s.as_bytes();
        let mut pos = 0usize;
        let err = |pos: usize, msg: &str| Error::Syntax {
            pos,
            msg: msg.to_string(),
        };

        let parse_label = |pos: &mut usize| -> Result<Vec<u32>> {
            if bytes.get(*pos) != Some(&b'{') {
                return Err(err(*pos, "expected `{`"));
            }
            *pos += 1;
            let mut label = Vec::new();
            loop {
                let start = *pos;
                while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
                    *pos += 1;
                }
                if start == *pos {
                    return Err(err(*pos, "expected integer"));
                }
                let x: u32 = s[start..*pos].parse().map_err(|_| err(start, "integer overflow"))?;
                label.push(x);
                match bytes.get(*pos) {
                    Some(b',') => *pos += 1,
                    Some(b'}') => {
                        *pos += 1;
                        break;
                    }
                    _ => return Err(err(*pos, "expected `,` or `}`")),
                }
            }
            if label.windows(2).any(|w| w[0] >= w[1]) {
                return Err(err(*pos, "label integers must be strictly ascending"));
            }
            if label[0] == 0 {
                return Err(err(*pos, "labels must be positive"));
            }
            Ok(label)
        };

        let mut tree = PlaneTree::singleton(parse_label(&mut pos)?)?;
        let mut last = tree.root;
        let mut parents: Vec<NodeRef> = Vec::new();
        loop {
            if bytes.get(pos) == Some(&b'(') {
                pos += 1;
                parents.push(last);
            } else {
                // a subtree just closed; climb until a sibling follows
                loop {
                    match (parents.last(), bytes.get(pos)) {
                        (None, None) => {
                            tree.validate()?;
                            return Ok(tree);
                        }
                        (None, Some(_)) => return Err(err(pos, "trailing input")),
                        (Some(_), Some(b',')) => {
                            pos += 1;
                            break;
                        }
                        (Some(_), Some(b')')) => {
                            pos += 1;
                            parents.pop();
                        }
                        (Some(_), _) => return Err(err(pos, "expected `,` or `)`")),
                    }
                }
            }
            let parent = *parents.last().expect("inside a child list");
            let label = parse_label(&mut pos)?;
            let pmin = tree.min_label(parent);
            if label[0] <= pmin {
                return Err(Error::NotIncreasing {
                    parent: pmin,
                    child: label[0],
                });
            }
            let at = tree.out_degree(parent);
            last = tree.attach_unchecked(parent, at, label);
        }
    }
}

/// `n!!` for `n >= -1`.
pub fn double_factorial(n: i64) -> Result<BigUint> {
    if n < -1 {
        return Err(Error::DoubleFactorialDomain(n));
    }
    let mut acc = BigUint::one();
    let mut k = n;
    while k > 1 {
        acc *= BigUint::from(k as u64);
        k -= 2;
    }
    Ok(acc)
}

pub fn factorial(n: u64) -> BigUint {
    (2..=n).fold(BigUint::one(), |acc, k| acc * BigUint::from(k))
}

/// `C_n = (2n)! / (n! (n+1)!)`.
pub fn catalan(n: u64) -> BigUint {
    factorial(2 * n) / (factorial(n) * factorial(n + 1))
}

/// Number of PORTs on `n` labels, `(2(n-1)-1)!!`.
pub fn port_count(n: u64) -> Result<BigUint> {
    if n == 0 {
        return Err(Error::ZeroSize);
    }
    double_factorial(2 * (n as i64 - 1) - 1)
}

/// The same count through `n! C_{n-1} / 2^{n-1}`.
pub fn port_count_via_catalan(n: u64) -> Result<BigUint> {
    if n == 0 {
        return Err(Error::ZeroSize);
    }
    Ok(factorial(n) * catalan(n - 1) >> (n - 1))
}

/// Calls `visit` on every PORT whose label set is `pi`, in canonical order:
/// blocks are inserted in least-element order, candidate parents are taken
/// in label order and gaps left to right.
pub fn for_each_port(pi: &Partition, cap: usize, mut visit: impl FnMut(&PlaneTree)) -> Result<()> {
    let k = pi.num_blocks();
    if k > cap {
        return Err(Error::CapExceeded { size: k, cap });
    }
    let blocks = pi.blocks();
    let mut tree = PlaneTree::singleton(blocks[0].clone())?;

    fn rec(tree: &mut PlaneTree, blocks: &[Vec<u32>], next: usize, visit: &mut dyn FnMut(&PlaneTree)) {
        if next == blocks.len() {
            visit(tree);
            return;
        }
        // arena is dense and label-ordered during enumeration
        for parent in 0..tree.nodes.len() {
            let parent = NodeRef(parent as u32);
            for gap in 0..=tree.out_degree(parent) {
                tree.attach_unchecked(parent, gap, blocks[next].clone());
                rec(tree, blocks, next + 1, visit);
                tree.detach_last(parent, gap);
            }
        }
    }

    rec(&mut tree, blocks, 1, &mut visit);
    Ok(())
}

/// All PORTs on `pi`, capped at [`DEFAULT_ENUMERATION_CAP`] blocks.
pub fn enumerate_ports(pi: &Partition) -> Result<Vec<PlaneTree>> {
    enumerate_ports_capped(pi, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_ports_capped(pi: &Partition, cap: usize) -> Result<Vec<PlaneTree>> {
    let mut out = Vec::new();
    for_each_port(pi, cap, |t| out.push(t.clone()))?;
    Ok(out)
}

/// Draws a uniform PORT on `pi` (an LPAT) by preferential attachment.
///
/// Each node `v` sits in the slot list `d⁺(v) + 1` times, so a uniform
/// slot picks `v` with the attachment weight; the new node then takes a
/// uniform gap among `v`'s children.
pub fn sample_lpat<R: Rng + ?Sized>(pi: &Partition, rng: &mut R) -> PlaneTree {
    let blocks = pi.blocks();
    let mut tree = PlaneTree::singleton(blocks[0].clone()).expect("partition blocks are valid labels");
    tree.nodes.reserve(blocks.len() - 1);
    let mut slots: Vec<NodeRef> = Vec::with_capacity(2 * blocks.len());
    slots.push(tree.root);
    for block in &blocks[1..] {
        let v = slots[rng.random_range(0..slots.len())];
        let gap = rng.random_range(0..=tree.out_degree(v));
        let w = tree.attach_unchecked(v, gap, block.clone());
        slots.push(v);
        slots.push(w);
    }
    debug_assert!(tree.validate().is_ok());
    tree
}

/// LPAT on `{1}, .., {n}`.
pub fn sample_lpat_n<R: Rng + ?Sized>(n: u32, rng: &mut R) -> Result<PlaneTree> {
    Ok(sample_lpat(&Partition::discrete(n)?, rng))
}
