//! Selection predicates over dictionary codes, and dyadic range covers.
//!
//! Conditions on one attribute are OR-ed; attributes are AND-ed.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::attrs::AttrSet;
use crate::error::{Error, Result};
use crate::table::CodedTable;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Condition {
    Equal(u32),
    /// Inclusive code range.
    Range {
        lo: u32,
        hi: u32,
    },
    Set(Vec<u32>),
}

impl Condition {
    pub fn range(lo: u32, hi: u32) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidPredicate(alloc::format!("range [{lo}, {hi}] is empty")));
        }
        Ok(Condition::Range { lo, hi })
    }

    pub fn contains(&self, code: u32) -> bool {
        match self {
            Condition::Equal(c) => *c == code,
            Condition::Range { lo, hi } => (*lo..=*hi).contains(&code),
            Condition::Set(s) => s.contains(&code),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Predicate {
    conditions: BTreeMap<usize, Vec<Condition>>,
}

impl Predicate {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a disjunct for `attr`.
    pub fn or(mut self, attr: usize, cond: Condition) -> Self {
        self.conditions.entry(attr).or_default().push(cond);
        self
    }

    pub fn push(&mut self, attr: usize, cond: Condition) {
        self.conditions.entry(attr).or_default().push(cond);
    }

    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty()
    }

    pub fn attrs(&self) -> AttrSet {
        AttrSet::from_iter(self.conditions.keys().copied())
    }

    pub fn conditions(&self, attr: usize) -> Option<&[Condition]> {
        self.conditions.get(&attr).map(|v| v.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[Condition])> {
        self.conditions.iter().map(|(&a, c)| (a, c.as_slice()))
    }

    /// Conditions restricted to the attributes in `scope`.
    pub fn restrict(&self, scope: AttrSet) -> Predicate {
        Predicate {
            conditions: self
                .conditions
                .iter()
                .filter(|(a, _)| scope.contains(**a))
                .map(|(&a, c)| (a, c.clone()))
                .collect(),
        }
    }

    pub fn matches_value(&self, attr: usize, code: Option<u32>) -> bool {
        match self.conditions.get(&attr) {
            None => true,
            Some(conds) => code.is_some_and(|c| conds.iter().any(|k| k.contains(c))),
        }
    }

    pub fn matches_row(&self, table: &CodedTable, row: usize) -> bool {
        self.conditions
            .iter()
            .all(|(&a, conds)| table.value(row, a).is_some_and(|c| conds.iter().any(|k| k.contains(c))))
    }
}

/// Merges a disjunction into sorted, disjoint, non-adjacent inclusive
/// ranges clipped to `[0, domain)`.
pub fn canonical_ranges(conds: &[Condition], domain: u32) -> Vec<(u32, u32)> {
    if domain == 0 {
        return Vec::new();
    }
    let max = domain - 1;
    let mut ranges: Vec<(u32, u32)> = Vec::new();
    for c in conds {
        match c {
            Condition::Equal(v) => ranges.push((*v, *v)),
            Condition::Range { lo, hi } => ranges.push((*lo, *hi)),
            Condition::Set(s) => ranges.extend(s.iter().map(|&v| (v, v))),
        }
    }
    let mut ranges: Vec<(u32, u32)> = ranges
        .into_iter()
        .filter(|&(lo, hi)| lo <= hi && lo <= max)
        .map(|(lo, hi)| (lo, hi.min(max)))
        .collect();
    ranges.sort_unstable();
    let mut merged: Vec<(u32, u32)> = Vec::with_capacity(ranges.len());
    for (lo, hi) in ranges {
        match merged.last_mut() {
            Some(last) if lo <= last.1.saturating_add(1) => last.1 = last.1.max(hi),
            _ => merged.push((lo, hi)),
        }
    }
    merged
}

/// `[index << level, ((index + 1) << level) - 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DyadicInterval {
    pub level: u32,
    pub index: u64,
}

impl DyadicInterval {
    pub fn lo(&self) -> u64 {
        self.index << self.level
    }

    pub fn hi(&self) -> u64 {
        ((self.index + 1) << self.level) - 1
    }
}

/// Canonical (greedy, minimal) disjoint dyadic cover of `[lo, hi]`.
pub fn dyadic_cover(lo: u64, hi: u64) -> Vec<DyadicInterval> {
    let mut out = Vec::new();
    if lo > hi {
        return out;
    }
    let mut start = lo;
    loop {
        let mut level = if start == 0 { 63 } else { start.trailing_zeros() };
        while level > 0 && start + ((1u64 << level) - 1) > hi {
            level -= 1;
        }
        out.push(DyadicInterval {
            level,
            index: start >> level,
        });
        let next = start + ((1u64 << level) - 1);
        if next >= hi {
            break;
        }
        start = next + 1;
    }
    out
}
