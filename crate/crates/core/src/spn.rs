//! Sum-product network nodes and leaves.

use alloc::vec::Vec;

use crate::attrs::AttrSet;
use crate::error::{Error, Result};
use crate::hashing::{make_family, HashFamily, HashKind, DEFAULT_DEGREE};
use crate::predicate::{canonical_ranges, dyadic_cover, Condition};
use crate::rng::derive_seed;
use crate::sketch::{SketchKind, SparseSketch};

#[derive(Clone, Debug, PartialEq)]
pub enum SpnNode {
    Sum(SumNode),
    Product(ProductNode),
    Sketch(SketchLeaf),
    Selectivity(SelectivityLeaf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SumNode {
    pub scope: AttrSet,
    pub rows: u64,
    /// Child row fractions; positive and summing to one.
    pub weights: Vec<f64>,
    pub children: Vec<SpnNode>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProductNode {
    pub scope: AttrSet,
    pub rows: u64,
    pub children: Vec<SpnNode>,
}

impl SpnNode {
    pub fn scope(&self) -> AttrSet {
        match self {
            SpnNode::Sum(n) => n.scope,
            SpnNode::Product(n) => n.scope,
            SpnNode::Sketch(l) => l.attributes,
            SpnNode::Selectivity(l) => AttrSet::single(l.attribute),
        }
    }

    pub fn rows(&self) -> u64 {
        match self {
            SpnNode::Sum(n) => n.rows,
            SpnNode::Product(n) => n.rows,
            SpnNode::Sketch(l) => l.rows,
            SpnNode::Selectivity(l) => l.rows,
        }
    }

    pub fn children(&self) -> &[SpnNode] {
        match self {
            SpnNode::Sum(n) => &n.children,
            SpnNode::Product(n) => &n.children,
            _ => &[],
        }
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a SpnNode)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    pub fn count_nodes(&self) -> NodeCounts {
        let mut c = NodeCounts::default();
        self.walk(&mut |n| match n {
            SpnNode::Sum(_) => c.sum += 1,
            SpnNode::Product(_) => c.product += 1,
            SpnNode::Sketch(_) => c.sketch_leaves += 1,
            SpnNode::Selectivity(_) => c.selectivity_leaves += 1,
        });
        c
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NodeCounts {
    pub sum: usize,
    pub product: usize,
    pub sketch_leaves: usize,
    pub selectivity_leaves: usize,
}

/// Leaf over the relation's join attributes.
#[derive(Clone, Debug, PartialEq)]
pub struct SketchLeaf {
    pub attributes: AttrSet,
    pub rows: u64,
    /// Indexed `copy * subset_count + subset`, each holding one sketch per
    /// [`SketchKind`] (see [`SketchKind::index`]).
    pub sketches: Vec<[SparseSketch; 3]>,
    /// Exact multiplicities of join-attribute tuples (codes in ascending
    /// attribute order), kept when the partition has few distinct tuples.
    pub digest: Option<Vec<(Vec<Option<u32>>, u64)>>,
    /// One selectivity summary per join attribute, ascending.
    pub selectivity: Vec<SelectivityLeaf>,
}

impl SketchLeaf {
    pub fn stored(&self, copy: u32, subset: usize, subset_count: usize, kind: SketchKind) -> &SparseSketch {
        &self.sketches[copy as usize * subset_count + subset][kind.index()]
    }
}

/// Sparse nonnegative integer counters of one Count-Min row.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct SparseCounts {
    pub indices: Vec<u32>,
    pub counts: Vec<u64>,
}

impl SparseCounts {
    pub fn from_dense(dense: &[u64]) -> Self {
        let mut s = SparseCounts::default();
        for (i, &c) in dense.iter().enumerate() {
            if c != 0 {
                s.indices.push(i as u32);
                s.counts.push(c);
            }
        }
        s
    }

    pub fn get(&self, index: u32) -> u64 {
        self.indices.binary_search(&index).map_or(0, |pos| self.counts[pos])
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Count-Min summaries of one attribute over dyadic levels: level `l`
/// sketches `code >> l`.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectivityLeaf {
    pub attribute: usize,
    pub rows: u64,
    pub nulls: u64,
    pub domain: u32,
    pub distinct: u32,
    pub width: u32,
    pub levels: Vec<SparseCounts>,
    pub hashes: Vec<HashFamily>,
}

const SELECTIVITY_TAG: u64 = 0x7365_6c65_6374;

/// `ceil(log2(domain))`, 0 for domains of size 0 or 1.
pub fn level_count(domain: u32) -> u32 {
    if domain <= 1 {
        0
    } else {
        32 - (domain - 1).leading_zeros()
    }
}

/// Level hash families for an attribute; identical across leaves.
pub fn selectivity_hashes(seed: u64, attribute: usize, domain: u32, width: u32) -> Vec<HashFamily> {
    (0..=level_count(domain))
        .map(|level| {
            make_family(
                HashKind::Location,
                DEFAULT_DEGREE,
                width as usize,
                derive_seed(seed, &[SELECTIVITY_TAG, attribute as u64, level as u64]),
            )
            .expect("selectivity width is a power of two")
        })
        .collect()
}

impl SelectivityLeaf {
    pub fn build<I: IntoIterator<Item = Option<u32>>>(
        attribute: usize,
        values: I,
        domain: u32,
        width: u32,
        seed: u64,
    ) -> Self {
        let hashes = selectivity_hashes(seed, attribute, domain, width);
        let mut dense = alloc::vec![alloc::vec![0u64; width as usize]; hashes.len()];
        let mut rows = 0;
        let mut nulls = 0;
        let mut seen = hashbrown::HashSet::new();
        for v in values {
            rows += 1;
            let Some(code) = v else {
                nulls += 1;
                continue;
            };
            seen.insert(code);
            for (level, h) in hashes.iter().enumerate() {
                dense[level][h.bucket_unchecked((code >> level) as u64)] += 1;
            }
        }
        Self {
            attribute,
            rows,
            nulls,
            domain,
            distinct: seen.len() as u32,
            width,
            levels: dense.iter().map(|d| SparseCounts::from_dense(d)).collect(),
            hashes,
        }
    }

    /// Reassembles a stored leaf, regenerating its hash families.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        attribute: usize,
        rows: u64,
        nulls: u64,
        domain: u32,
        distinct: u32,
        width: u32,
        levels: Vec<SparseCounts>,
        seed: u64,
    ) -> Result<Self> {
        if !width.is_power_of_two() {
            return Err(Error::WidthNotPowerOfTwo(width as usize));
        }
        if levels.len() != level_count(domain) as usize + 1 {
            return Err(Error::LengthMismatch(levels.len(), level_count(domain) as usize + 1));
        }
        if levels.iter().flat_map(|l| &l.indices).any(|&i| i >= width) {
            return Err(Error::InvalidConfig("selectivity counter index out of range".into()));
        }
        Ok(Self {
            attribute,
            rows,
            nulls,
            domain,
            distinct,
            width,
            levels,
            hashes: selectivity_hashes(seed, attribute, domain, width),
        })
    }

    fn count_at(&self, level: u32, index: u64) -> u64 {
        let h = &self.hashes[level as usize];
        self.levels[level as usize].get(h.bucket_unchecked(index) as u32)
    }

    /// Count-Min estimate of the number of rows with a code in `[lo, hi]`.
    pub fn range_count(&self, lo: u32, hi: u32) -> u64 {
        if lo == hi {
            return self.count_at(0, lo as u64);
        }
        dyadic_cover(lo as u64, hi as u64)
            .iter()
            .map(|d| self.count_at(d.level, d.index))
            .sum()
    }

    /// Fraction of rows satisfying the disjunction; 1 without conditions.
    pub fn selectivity(&self, conditions: Option<&[Condition]>) -> f64 {
        let Some(conds) = conditions else {
            return 1.0;
        };
        if self.rows == 0 {
            return 0.0;
        }
        let total: u64 = canonical_ranges(conds, self.domain)
            .into_iter()
            .map(|(lo, hi)| self.range_count(lo, hi))
            .sum();
        (total as f64 / self.rows as f64).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_counts() {
        assert_eq!(level_count(0), 0);
        assert_eq!(level_count(1), 0);
        assert_eq!(level_count(2), 1);
        assert_eq!(level_count(16), 4);
        assert_eq!(level_count(17), 5);
    }

    #[test]
    fn single_value_domain_has_one_level() {
        let leaf = SelectivityLeaf::build(0, [Some(0), Some(0)], 1, 64, 1);
        assert_eq!(leaf.levels.len(), 1);
        assert_eq!(leaf.selectivity(Some(&[Condition::Equal(0)])), 1.0);
    }

    #[test]
    fn every_level_counts_every_row() {
        let values: Vec<Option<u32>> = (0..500u32).map(|i| Some((i * 7) % 100)).collect();
        let leaf = SelectivityLeaf::build(2, values, 100, 64, 9);
        assert_eq!(leaf.levels.len(), 8);
        let base = leaf.levels[0].total();
        assert_eq!(base, 500);
        assert!(leaf.levels.iter().all(|l| l.total() == base));
    }

    #[test]
    fn selectivity_bounds_and_overestimation() {
        let mut values = Vec::new();
        for code in 0..64u32 {
            for _ in 0..(64 - code) {
                values.push(Some(code));
            }
        }
        values.push(None);
        let rows = values.len() as f64;
        let leaf = SelectivityLeaf::build(0, values.clone(), 64, 16, 4);
        assert_eq!(leaf.nulls, 1);
        assert_eq!(leaf.distinct, 64);
        assert_eq!(leaf.selectivity(None), 1.0);
        let full = Some(&[Condition::Range { lo: 0, hi: 63 }][..]);
        assert!((leaf.selectivity(full) - (rows - 1.0) / rows).abs() < 1e-12);
        let no_nulls = SelectivityLeaf::build(0, values[..values.len() - 1].iter().copied(), 64, 16, 4);
        assert_eq!(no_nulls.selectivity(full), 1.0);
        assert_eq!(leaf.selectivity(Some(&[Condition::Set(alloc::vec![])])), 0.0);
        // Most frequent code is 0 with 64 rows.
        assert!(leaf.selectivity(Some(&[Condition::Equal(0)])) >= 64.0 / rows);
        for lo in 0..64u32 {
            for hi in lo..64 {
                let truth = values
                    .iter()
                    .filter(|v| v.is_some_and(|c| (lo..=hi).contains(&c)))
                    .count() as u64;
                assert!(leaf.range_count(lo, hi) >= truth);
            }
        }
        assert_eq!(leaf.selectivity(Some(&[Condition::Equal(500)])), 0.0);
    }
}
