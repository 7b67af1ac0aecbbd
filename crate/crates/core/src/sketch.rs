//! Fast-AGMS, Count-Min and maximum-degree sketch kernels.
//!
//! A sketch is built for one *edge subset*: the join edges a relation takes
//! part in within a query. Each edge contributes its location hash to a
//! composite bucket `sum_e o_e * h_e(x_e) mod w`, where the orientation
//! `o_e` is `+1` at one endpoint of the edge and `-1` at the other, and
//! (for Fast-AGMS) its sign hash to the product `prod_e xi_e(x_e)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use hashbrown::HashMap;

use crate::error::{Error, Result};
use crate::hashing::EdgeHashAssignment;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Orientation {
    Positive,
    Negative,
}

impl Orientation {
    pub fn factor(self) -> i64 {
        match self {
            Orientation::Positive => 1,
            Orientation::Negative => -1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Orientation::Positive => Orientation::Negative,
            Orientation::Negative => Orientation::Positive,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SketchKind {
    Agms,
    CountMin,
    Degree,
}

impl SketchKind {
    pub const ALL: [SketchKind; 3] = [SketchKind::Agms, SketchKind::CountMin, SketchKind::Degree];

    pub fn index(self) -> usize {
        match self {
            SketchKind::Agms => 0,
            SketchKind::CountMin => 1,
            SketchKind::Degree => 2,
        }
    }
}

/// Everything that must agree for two sketches to be merged or contracted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SketchLayout {
    pub width: usize,
    pub copy: u32,
    /// Sorted by edge id; at most one entry per edge.
    pub edges: Vec<(EdgeId, Orientation)>,
}

impl SketchLayout {
    pub fn new(width: usize, copy: u32, mut edges: Vec<(EdgeId, Orientation)>) -> Result<Self> {
        if !width.is_power_of_two() {
            return Err(Error::WidthNotPowerOfTwo(width));
        }
        edges.sort_by_key(|&(e, _)| e);
        if edges.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::EdgeMismatch(format!("duplicate edge in {edges:?}")));
        }
        Ok(Self { width, copy, edges })
    }

    pub fn edge_ids(&self) -> impl Iterator<Item = EdgeId> + '_ {
        self.edges.iter().map(|&(e, _)| e)
    }

    /// The same layout with every orientation negated.
    pub fn flipped(&self) -> Self {
        Self {
            width: self.width,
            copy: self.copy,
            edges: self.edges.iter().map(|&(e, o)| (e, o.flipped())).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SketchVector {
    pub kind: SketchKind,
    pub layout: SketchLayout,
    pub counters: Vec<f64>,
}

impl SketchVector {
    pub fn zeros(kind: SketchKind, layout: SketchLayout) -> Self {
        let counters = vec![0.0; layout.width];
        Self { kind, layout, counters }
    }

    pub fn width(&self) -> usize {
        self.layout.width
    }

    pub fn total(&self) -> f64 {
        self.counters.iter().sum()
    }

    pub fn l1_distance(&self, other: &SketchVector) -> f64 {
        self.counters
            .iter()
            .zip(&other.counters)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    /// Index reversal `k -> -k mod w`, which negates every orientation.
    pub fn reversed(&self) -> Self {
        let w = self.width();
        let counters = (0..w).map(|k| self.counters[(w - k) & (w - 1)]).collect();
        Self {
            kind: self.kind,
            layout: self.layout.flipped(),
            counters,
        }
    }

    fn check_compatible(&self, other: &SketchVector) -> Result<()> {
        if self.kind != other.kind {
            return Err(Error::ConfigMismatch(format!(
                "kinds {:?} and {:?}",
                self.kind, other.kind
            )));
        }
        if self.layout != other.layout {
            return Err(Error::ConfigMismatch(format!(
                "layouts {:?} and {:?}",
                self.layout, other.layout
            )));
        }
        Ok(())
    }
}

/// Element-wise sum of two sketches with identical configuration.
pub fn add(a: &SketchVector, b: &SketchVector) -> Result<SketchVector> {
    a.check_compatible(b)?;
    let counters = a.counters.iter().zip(&b.counters).map(|(x, y)| x + y).collect();
    Ok(SketchVector {
        kind: a.kind,
        layout: a.layout.clone(),
        counters,
    })
}

/// Multiplies every counter by a probability.
pub fn scale(a: &SketchVector, c: f64) -> Result<SketchVector> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::ScaleOutOfRange(c));
    }
    Ok(SketchVector {
        kind: a.kind,
        layout: a.layout.clone(),
        counters: a.counters.iter().map(|x| x * c).collect(),
    })
}

/// Element-wise minimum of an approximated degree sketch and the exact
/// degree sketch of the unfiltered relation.
pub fn clamp_degree(approx: &SketchVector, exact_root: &SketchVector) -> Result<SketchVector> {
    approx.check_compatible(exact_root)?;
    if approx.kind != SketchKind::Degree {
        return Err(Error::ConfigMismatch(format!("clamp of a {:?} sketch", approx.kind)));
    }
    Ok(SketchVector {
        kind: SketchKind::Degree,
        layout: approx.layout.clone(),
        counters: approx
            .counters
            .iter()
            .zip(&exact_root.counters)
            .map(|(a, e)| a.min(*e))
            .collect(),
    })
}

/// Composite hashing for one layout. `parts[i]` hashes the i-th key value.
#[derive(Clone, Debug)]
pub struct KeyHasher<'a> {
    width: usize,
    parts: Vec<(&'a EdgeHashAssignment, Orientation)>,
}

impl<'a> KeyHasher<'a> {
    /// `assignments` must hold exactly the layout's edges, for the layout's copy.
    pub fn new(layout: &SketchLayout, assignments: &[&'a EdgeHashAssignment]) -> Result<Self> {
        let mut parts = Vec::with_capacity(layout.edges.len());
        for &(edge, orientation) in &layout.edges {
            let a = assignments
                .iter()
                .find(|a| a.edge == edge)
                .ok_or_else(|| Error::EdgeMismatch(format!("no hash assignment for {edge:?}")))?;
            if a.copy != layout.copy {
                return Err(Error::ConfigMismatch(format!(
                    "assignment copy {} for layout copy {}",
                    a.copy, layout.copy
                )));
            }
            if a.location.width() != layout.width {
                return Err(Error::ConfigMismatch(format!(
                    "hash width {} for sketch width {}",
                    a.location.width(),
                    layout.width
                )));
            }
            parts.push((*a, orientation));
        }
        if assignments.len() != parts.len() {
            return Err(Error::EdgeMismatch(format!(
                "{} assignments for {} edges",
                assignments.len(),
                parts.len()
            )));
        }
        Ok(Self {
            width: layout.width,
            parts,
        })
    }

    pub fn arity(&self) -> usize {
        self.parts.len()
    }

    #[inline]
    pub fn bucket(&self, key: &[u64]) -> usize {
        let mask = self.width as i64 - 1;
        let mut acc = 0i64;
        for (&(a, o), &v) in self.parts.iter().zip(key) {
            acc += o.factor() * a.location.bucket_unchecked(v) as i64;
        }
        (acc & mask) as usize
    }

    #[inline]
    pub fn sign(&self, key: &[u64]) -> f64 {
        let mut s = 1i8;
        for (&(a, _), &v) in self.parts.iter().zip(key) {
            s *= a.sign.sign_unchecked(v);
        }
        s as f64
    }
}

/// `(sum_e o_e * h_e(key_e)) mod w`. All three inputs are keyed by edge id
/// and must cover the same edges.
pub fn locate(
    assignments: &[EdgeHashAssignment],
    orientations: &[(EdgeId, Orientation)],
    key: &[(EdgeId, u64)],
    width: usize,
) -> Result<usize> {
    let layout = SketchLayout::new(width, assignments.first().map_or(0, |a| a.copy), orientations.to_vec())?;
    let refs: Vec<&EdgeHashAssignment> = assignments.iter().collect();
    let hasher = KeyHasher::new(&layout, &refs)?;
    let values = ordered_key(&layout, key)?;
    Ok(hasher.bucket(&values))
}

/// Product of the sign hashes over the key's edges; `+1` for no edges.
pub fn sign_product(assignments: &[EdgeHashAssignment], key: &[(EdgeId, u64)]) -> Result<i8> {
    if assignments.len() != key.len() {
        return Err(Error::EdgeMismatch(format!(
            "{} assignments for {} key values",
            assignments.len(),
            key.len()
        )));
    }
    let mut s = 1i8;
    for &(edge, v) in key {
        let a = assignments
            .iter()
            .find(|a| a.edge == edge)
            .ok_or_else(|| Error::EdgeMismatch(format!("no hash assignment for {edge:?}")))?;
        s *= a.sign.sign_unchecked(v);
    }
    Ok(s)
}

fn ordered_key(layout: &SketchLayout, key: &[(EdgeId, u64)]) -> Result<Vec<u64>> {
    if key.len() != layout.edges.len() {
        return Err(Error::EdgeMismatch(format!(
            "key has {} values for {} edges",
            key.len(),
            layout.edges.len()
        )));
    }
    layout
        .edges
        .iter()
        .map(|&(e, _)| {
            key.iter()
                .find(|&&(k, _)| k == e)
                .map(|&(_, v)| v)
                .ok_or_else(|| Error::EdgeMismatch(format!("key lacks {e:?}")))
        })
        .collect()
}

/// Single-pass builder for Fast-AGMS and Count-Min sketches.
pub struct SketchBuilder<'a> {
    kind: SketchKind,
    hasher: KeyHasher<'a>,
    counters: Vec<f64>,
    layout: SketchLayout,
    rows_seen: u64,
    null_rows: u64,
    scratch: Vec<u64>,
}

impl<'a> SketchBuilder<'a> {
    pub fn new(kind: SketchKind, layout: SketchLayout, hasher: KeyHasher<'a>) -> Result<Self> {
        if kind == SketchKind::Degree {
            return Err(Error::ConfigMismatch(
                "degree sketches are built from a frequency table".into(),
            ));
        }
        Ok(Self {
            kind,
            counters: vec![0.0; layout.width],
            scratch: vec![0; hasher.arity()],
            hasher,
            layout,
            rows_seen: 0,
            null_rows: 0,
        })
    }

    /// Inserts one row; `value_of(i)` yields the key value for the i-th edge
    /// of the layout, `None` for a null. Rows with a null key are skipped.
    #[inline]
    pub fn push_row<F: FnMut(usize) -> Option<u64>>(&mut self, mut value_of: F) {
        self.rows_seen += 1;
        for i in 0..self.scratch.len() {
            match value_of(i) {
                Some(v) => self.scratch[i] = v,
                None => {
                    self.null_rows += 1;
                    return;
                }
            }
        }
        let b = self.hasher.bucket(&self.scratch);
        let delta = match self.kind {
            SketchKind::Agms => self.hasher.sign(&self.scratch),
            _ => 1.0,
        };
        self.counters[b] += delta;
    }

    pub fn rows_seen(&self) -> u64 {
        self.rows_seen
    }

    pub fn null_rows(&self) -> u64 {
        self.null_rows
    }

    pub fn finish(self) -> SketchVector {
        SketchVector {
            kind: self.kind,
            layout: self.layout,
            counters: self.counters,
        }
    }
}

/// Builds a sketch from in-memory keys (one `Vec` per row, ordered like the
/// layout's edges).
pub fn build_from_keys(
    kind: SketchKind,
    layout: &SketchLayout,
    hasher: &KeyHasher<'_>,
    rows: &[Vec<Option<u64>>],
) -> Result<SketchVector> {
    let mut b = SketchBuilder::new(kind, layout.clone(), hasher.clone())?;
    for row in rows {
        b.push_row(|i| row[i]);
    }
    Ok(b.finish())
}

pub fn build_agms(layout: &SketchLayout, hasher: &KeyHasher<'_>, rows: &[Vec<Option<u64>>]) -> Result<SketchVector> {
    build_from_keys(SketchKind::Agms, layout, hasher, rows)
}

pub fn build_countmin(
    layout: &SketchLayout,
    hasher: &KeyHasher<'_>,
    rows: &[Vec<Option<u64>>],
) -> Result<SketchVector> {
    build_from_keys(SketchKind::CountMin, layout, hasher, rows)
}

/// Exact multiplicities of composite join keys within one partition.
#[derive(Clone, Debug, Default)]
pub struct FrequencyTable {
    counts: HashMap<Vec<u64>, u64>,
    rows: u64,
}

impl FrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: &[u64]) {
        self.insert_many(key, 1);
    }

    pub fn insert_many(&mut self, key: &[u64], count: u64) {
        if count == 0 {
            return;
        }
        self.rows += count;
        if let Some(c) = self.counts.get_mut(key) {
            *c += count;
        } else {
            self.counts.insert(key.to_vec(), count);
        }
    }

    pub fn from_rows(rows: &[Vec<Option<u64>>]) -> Self {
        let mut t = Self::new();
        let mut buf = Vec::new();
        for row in rows {
            buf.clear();
            if row.iter().all(|v| v.is_some()) {
                buf.extend(row.iter().map(|v| v.unwrap()));
                t.insert(&buf);
            }
        }
        t
    }

    pub fn get(&self, key: &[u64]) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u64], u64)> {
        self.counts.iter().map(|(k, &c)| (k.as_slice(), c))
    }
}

/// Per-bucket maximum key frequency.
pub fn build_degree(freq: &FrequencyTable, layout: &SketchLayout, hasher: &KeyHasher<'_>) -> SketchVector {
    let mut counters = vec![0.0f64; layout.width];
    for (key, count) in freq.iter() {
        let b = hasher.bucket(key);
        counters[b] = counters[b].max(count as f64);
    }
    SketchVector {
        kind: SketchKind::Degree,
        layout: layout.clone(),
        counters,
    }
}

/// Nonzero counters of a sketch, sorted by index.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SparseSketch {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseSketch {
    pub fn from_dense(counters: &[f64]) -> Self {
        let mut s = SparseSketch::default();
        for (i, &v) in counters.iter().enumerate() {
            if v != 0.0 {
                s.indices.push(i as u32);
                s.values.push(v);
            }
        }
        s
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// `out += factor * self`.
    pub fn accumulate_into(&self, out: &mut [f64], factor: f64) {
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i as usize] += factor * v;
        }
    }

    pub fn to_dense(&self, width: usize) -> Vec<f64> {
        let mut out = vec![0.0; width];
        self.accumulate_into(&mut out, 1.0);
        out
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}
