//! Finite set partitions with blocks kept in order of least elements.
//!
//! The ground set is any finite set of positive integers, not only `[n]`:
//! restricting tree labels or grouping labels by root subtree produces
//! partitions of subsets such as `{2, .., n}`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Position of a block in least-element order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockIndex(pub usize);

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    blocks: Vec<Vec<u32>>,
}

impl Partition {
    /// Builds a partition from arbitrary blocks, sorting elements and blocks.
    pub fn new(blocks: Vec<Vec<u32>>) -> Result<Self> {
        let mut blocks = blocks;
        for b in &mut blocks {
            if b.is_empty() {
                return Err(Error::InvalidPartition("empty block".into()));
            }
            b.sort_unstable();
            if b.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidPartition("repeated element".into()));
            }
            if b[0] == 0 {
                return Err(Error::InvalidPartition("elements must be positive".into()));
            }
        }
        if blocks.is_empty() {
            return Err(Error::InvalidPartition("no blocks".into()));
        }
        let mut all: Vec<u32> = blocks.iter().flatten().copied().collect();
        all.sort_unstable();
        if all.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidPartition("blocks overlap".into()));
        }
        blocks.sort_unstable_by_key(|b| b[0]);
        Ok(Self { blocks })
    }

    /// Caller guarantees every invariant already holds.
    pub(crate) fn from_sorted_unchecked(blocks: Vec<Vec<u32>>) -> Self {
        let p = Self { blocks };
        debug_assert!(p.check().is_ok());
        p
    }

    fn check(&self) -> Result<()> {
        Self::new(self.blocks.clone()).and_then(|q| {
            if q == *self {
                Ok(())
            } else {
                Err(Error::InvalidPartition("blocks out of order".into()))
            }
        })
    }

    /// The singleton partition `{{1},..,{n}}`.
    pub fn discrete(n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::ZeroSize);
        }
        Ok(Self {
            blocks: (1..=n).map(|i| vec![i]).collect(),
        })
    }

    /// Singletons over an arbitrary ascending label set.
    pub fn singletons(ground: &[u32]) -> Result<Self> {
        Self::new(ground.iter().map(|&i| vec![i]).collect())
    }

    pub fn blocks(&self) -> &[Vec<u32>] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<Vec<u32>> {
        self.blocks
    }

    pub fn block(&self, idx: BlockIndex) -> Option<&[u32]> {
        self.blocks.get(idx.0).map(Vec::as_slice)
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Number of elements in the ground set.
    pub fn size(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn ground_set(&self) -> Vec<u32> {
        let mut g: Vec<u32> = self.blocks.iter().flatten().copied().collect();
        g.sort_unstable();
        g
    }

    pub fn is_discrete(&self) -> bool {
        self.blocks.iter().all(|b| b.len() == 1)
    }

    /// Index of the block holding `x`.
    pub fn block_of(&self, x: u32) -> Option<BlockIndex> {
        self.blocks
            .iter()
            .position(|b| b.binary_search(&x).is_ok())
            .map(BlockIndex)
    }

    /// Replaces the selected blocks by their union.
    pub fn merge(&self, which: &[BlockIndex]) -> Result<Self> {
        let mut idx: Vec<usize> = which.iter().map(|b| b.0).collect();
        idx.sort_unstable();
        idx.dedup();
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.blocks.len()) {
            return Err(Error::BlockOutOfRange {
                index: bad,
                blocks: self.blocks.len(),
            });
        }
        if idx.len() < 2 {
            return Err(Error::TooFewBlocks(idx.len()));
        }
        let mut merged = Vec::new();
        let mut rest = Vec::with_capacity(self.blocks.len() - idx.len() + 1);
        let mut sel = idx.iter().peekable();
        for (i, b) in self.blocks.iter().enumerate() {
            if sel.peek() == Some(&&i) {
                sel.next();
                merged.extend_from_slice(b);
            } else {
                rest.push(b.clone());
            }
        }
        merged.sort_unstable();
        let pos = rest.partition_point(|b| b[0] < merged[0]);
        rest.insert(pos, merged);
        Ok(Self::from_sorted_unchecked(rest))
    }

    /// Non-empty intersections of the blocks with `[m]`.
    pub fn restrict(&self, m: u32) -> Result<Self> {
        if m == 0 {
            return Err(Error::ZeroSize);
        }
        let blocks: Vec<Vec<u32>> = self
            .blocks
            .iter()
            .filter(|b| b[0] <= m)
            .map(|b| b.iter().copied().take_while(|&x| x <= m).collect())
            .collect();
        if blocks.is_empty() {
            return Err(Error::EmptyRestriction(m));
        }
        Ok(Self::from_sorted_unchecked(blocks))
    }

    /// Non-empty intersections of the blocks with an arbitrary label set.
    pub fn restrict_to(&self, keep: &[u32]) -> Result<Self> {
        let blocks: Vec<Vec<u32>> = self
            .blocks
            .iter()
            .map(|b| b.iter().copied().filter(|x| keep.contains(x)).collect())
            .filter(|b: &Vec<u32>| !b.is_empty())
            .collect();
        if blocks.is_empty() {
            return Err(Error::InvalidPartition("restriction is empty".into()));
        }
        Self::new(blocks)
    }

    /// Applies `f` to every element; `f` must be injective.
    pub fn relabel(&self, f: impl Fn(u32) -> u32) -> Result<Self> {
        Self::new(
            self.blocks
                .iter()
                .map(|b| b.iter().map(|&x| f(x)).collect())
                .collect(),
        )
    }

    /// Every partition of `ground`, in restricted-growth-string order.
    pub fn all_of(ground: &[u32]) -> Vec<Partition> {
        let n = ground.len();
        let mut out = Vec::new();
        if n == 0 {
            return out;
        }
        let mut rgs = vec![0usize; n];
        fn rec(pos: usize, max: usize, rgs: &mut [usize], ground: &[u32], out: &mut Vec<Partition>) {
            if pos == rgs.len() {
                let mut blocks = vec![Vec::new(); max + 1];
                for (i, &b) in rgs.iter().enumerate() {
                    blocks[b].push(ground[i]);
                }
                out.push(Partition::new(blocks).expect("valid by construction"));
                return;
            }
            for b in 0..=max + 1 {
                rgs[pos] = b;
                rec(pos + 1, max.max(b), rgs, ground, out);
            }
        }
        rgs[0] = 0;
        rec(1, 0, &mut rgs, ground, &mut out);
        out
    }
}

/// Sorts blocks by their least elements (elements inside each block ascending).
pub fn order_blocks(blocks: &[Vec<u32>]) -> Vec<Vec<u32>> {
    let mut out: Vec<Vec<u32>> = blocks
        .iter()
        .map(|b| {
            let mut b = b.clone();
            b.sort_unstable();
            b
        })
        .collect();
    out.sort_by_key(|b| b.first().copied());
    out
}

pub(crate) fn write_block(f: &mut impl fmt::Write, block: &[u32]) -> fmt::Result {
    f.write_char('{')?;
    for (i, x) in block.iter().enumerate() {
        if i > 0 {
            f.write_char(',')?;
        }
        write!(f, "{x}")?;
    }
    f.write_char('}')
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.blocks.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write_block(f, b)?;
        }
        Ok(())
    }
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidPartition(format!("{msg} in `{s}`"));
        let mut blocks = Vec::new();
        for part in s.trim().split('|') {
            let inner = part
                .trim()
                .strip_prefix('{')
                .and_then(|p| p.strip_suffix('}'))
                .ok_or_else(|| bad("expected `{..}`"))?;
            let block = inner
                .split(',')
                .map(|x| x.trim().parse::<u32>().map_err(|_| bad("bad integer")))
                .collect::<Result<Vec<u32>>>()?;
            blocks.push(block);
        }
        Self::new(blocks)
    }
}

impl Serialize for Partition {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> Partition {
        s.parse().unwrap()
    }

    #[test]
    fn discrete_partitions() {
        assert_eq!(Partition::discrete(1).unwrap().to_string(), "{1}");
        assert_eq!(Partition::discrete(3).unwrap().to_string(), "{1}|{2}|{3}");
        let d5 = Partition::discrete(5).unwrap();
        assert_eq!(d5.num_blocks(), 5);
        assert!(d5.blocks().iter().enumerate().all(|(i, b)| b == &vec![i as u32 + 1]));
        assert_eq!(Partition::discrete(0), Err(Error::ZeroSize));
    }

    #[test]
    fn merge_examples() {
        let d3 = Partition::discrete(3).unwrap();
        assert_eq!(d3.merge(&[BlockIndex(0), BlockIndex(2)]).unwrap(), p("{1,3}|{2}"));
        assert_eq!(
            d3.merge(&[BlockIndex(0), BlockIndex(1), BlockIndex(2)]).unwrap(),
            p("{1,2,3}")
        );
        assert_eq!(
            p("{1,4}|{2}|{3}").merge(&[BlockIndex(1), BlockIndex(2)]).unwrap(),
            p("{1,4}|{2,3}")
        );
    }

    #[test]
    fn merge_errors() {
        let d3 = Partition::discrete(3).unwrap();
        assert_eq!(d3.merge(&[BlockIndex(1)]), Err(Error::TooFewBlocks(1)));
        assert_eq!(d3.merge(&[BlockIndex(1), BlockIndex(1)]), Err(Error::TooFewBlocks(1)));
        assert!(matches!(
            d3.merge(&[BlockIndex(0), BlockIndex(3)]),
            Err(Error::BlockOutOfRange { index: 3, blocks: 3 })
        ));
    }

    #[test]
    fn restrict_examples() {
        assert_eq!(p("{1,5}|{2,3}|{4}").restrict(3).unwrap(), p("{1}|{2,3}"));
        assert_eq!(p("{1,2,3}").restrict(2).unwrap(), p("{1,2}"));
        let d5 = Partition::discrete(5).unwrap();
        assert_eq!(d5.restrict(5).unwrap(), d5);
        assert_eq!(d5.restrict(0), Err(Error::ZeroSize));
        assert_eq!(p("{3,4}").restrict(2), Err(Error::EmptyRestriction(2)));
    }

    #[test]
    fn order_blocks_examples() {
        let got = order_blocks(&[vec![3, 4], vec![1], vec![2]]);
        assert_eq!(got, vec![vec![1], vec![2], vec![3, 4]]);
        assert_eq!(order_blocks(&[vec![1, 2, 3]]), vec![vec![1, 2, 3]]);
        let d4 = Partition::discrete(4).unwrap();
        assert_eq!(order_blocks(d4.blocks()), d4.blocks().to_vec());
    }

    #[test]
    fn text_form_is_bit_exact() {
        let q = Partition::new(vec![vec![4, 3], vec![5, 1], vec![2]]).unwrap();
        assert_eq!(q.to_string(), "{1,5}|{2}|{3,4}");
        assert!("{1}|{1,2}".parse::<Partition>().is_err());
        assert!("{1}|{}".parse::<Partition>().is_err());
        assert!("1|2".parse::<Partition>().is_err());
    }

    #[test]
    fn bell_numbers() {
        let counts: Vec<usize> = (1..=6)
            .map(|n| Partition::all_of(&(1..=n).collect::<Vec<u32>>()).len())
            .collect();
        assert_eq!(counts, vec![1, 2, 5, 15, 52, 203]);
    }

    fn arb_partition() -> impl Strategy<Value = Partition> {
        (1usize..10)
            .prop_flat_map(|n| proptest::collection::vec(0usize..n, n))
            .prop_map(|assign| {
                let n = assign.len();
                let mut blocks = vec![Vec::new(); n];
                for (i, &b) in assign.iter().enumerate() {
                    blocks[b].push(i as u32 + 1);
                }
                blocks.retain(|b| !b.is_empty());
                Partition::new(blocks).unwrap()
            })
    }

    proptest! {
        #[test]
        fn restriction_composes(pi in arb_partition(), a in 1u32..10, b in 1u32..10) {
            let (l, m) = (a.min(b), a.max(b));
            let n = pi.size() as u32;
            prop_assume!(m <= n);
            prop_assert_eq!(pi.restrict(m).unwrap().restrict(l).unwrap(), pi.restrict(l).unwrap());
        }

        #[test]
        fn merge_keeps_ground_set(pi in arb_partition(), sel in proptest::collection::vec(0usize..10, 2..5)) {
            let mut which: Vec<usize> = sel.into_iter().filter(|&i| i < pi.num_blocks()).collect();
            which.sort_unstable();
            which.dedup();
            prop_assume!(which.len() >= 2);
            let idx: Vec<BlockIndex> = which.iter().copied().map(BlockIndex).collect();
            let merged = pi.merge(&idx).unwrap();
            prop_assert_eq!(merged.ground_set(), pi.ground_set());
            prop_assert_eq!(merged.num_blocks(), pi.num_blocks() - (which.len() - 1));
        }

        #[test]
        fn text_and_serde_round_trip(pi in arb_partition()) {
            prop_assert_eq!(pi.to_string().parse::<Partition>().unwrap(), pi.clone());
            let json = serde_json::to_string(&pi).unwrap();
            prop_assert_eq!(serde_json::from_str::<Partition>(&json).unwrap(), pi.clone());
            let ordered = order_blocks(pi.blocks());
            prop_assert_eq!(order_blocks(&ordered), ordered);
        }
    }
}
