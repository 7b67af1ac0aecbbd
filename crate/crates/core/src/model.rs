//! Per-relation models: training configuration, join-edge layout, hash
//! assignments and the trained network.

use alloc::format;
use alloc::vec::Vec;

use crate::attrs::AttrSet;
use crate::error::{Error, Result};
use crate::hashing::EdgeHashAssignment;
use crate::predicate::Predicate;
use crate::sketch::{
    build_degree, EdgeId, FrequencyTable, KeyHasher, Orientation, SketchBuilder, SketchKind, SketchLayout,
    SketchVector, SparseSketch,
};
use crate::spn::SpnNode;
use crate::table::CodedTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClusterMethod {
    HardEm,
    KMeans,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Attribute pairs with RDC above this are dependent.
    pub rdc_threshold: f64,
    /// Partitions at or below this fraction of the relation stop clustering.
    pub cluster_fraction: f64,
    pub cluster_method: ClusterMethod,
    pub width: usize,
    pub copies: u32,
    pub seed: u64,
    pub rdc_features: usize,
    pub rdc_scale: f64,
    /// Rows sampled per dependency test.
    pub rdc_sample: usize,
    /// Sketch leaves with at most this many distinct join-key tuples keep
    /// an exact digest.
    pub digest_limit: usize,
    /// Upper bound on selectivity-leaf width.
    pub selectivity_width: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rdc_threshold: 0.0,
            cluster_fraction: 0.1,
            cluster_method: ClusterMethod::HardEm,
            width: 1 << 17,
            copies: 5,
            seed: 0,
            rdc_features: crate::rdc::DEFAULT_FEATURES,
            rdc_scale: crate::rdc::DEFAULT_SCALE,
            rdc_sample: 10_000,
            digest_limit: 4096,
            selectivity_width: 2048,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.rdc_threshold) {
            return Err(Error::InvalidConfig(format!("rdc threshold {}", self.rdc_threshold)));
        }
        if !(self.cluster_fraction > 0.0 && self.cluster_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "cluster fraction {}",
                self.cluster_fraction
            )));
        }
        if !self.width.is_power_of_two() {
            return Err(Error::WidthNotPowerOfTwo(self.width));
        }
        if !self.selectivity_width.is_power_of_two() {
            return Err(Error::WidthNotPowerOfTwo(self.selectivity_width));
        }
        if self.copies == 0 {
            return Err(Error::InvalidConfig("zero copies".into()));
        }
        if self.rdc_features == 0 || self.rdc_sample < 2 {
            return Err(Error::InvalidConfig("rdc features or sample too small".into()));
        }
        Ok(())
    }

    /// Width of selectivity-leaf Count-Min rows.
    pub fn leaf_width(&self) -> u32 {
        self.width.min(self.selectivity_width) as u32
    }
}

/// Which declared endpoint of a join edge a relation attribute is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IncidentEdge {
    pub edge: EdgeId,
    pub side: Side,
    pub attribute: usize,
    pub orientation: Orientation,
}

/// Join edges touching one relation and the edge subsets its sketches cover.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationLayout {
    arity: usize,
    incident: Vec<IncidentEdge>,
    /// Bitmasks over `incident`.
    subsets: Vec<u32>,
}

/// Relations with at most this many incident edges sketch every subset.
pub const FULL_LATTICE_EDGES: usize = 4;

impl RelationLayout {
    /// `templates` lists extra subsets (bitmasks over `incident`) used when
    /// the relation has too many incident edges for the full lattice.
    pub fn new(arity: usize, incident: Vec<IncidentEdge>, templates: &[u32]) -> Result<Self> {
        if arity == 0 || arity > 64 {
            return Err(Error::TooManyAttributes(arity));
        }
        if incident.len() > 31 {
            return Err(Error::InvalidConfig(format!("{} incident edges", incident.len())));
        }
        for (i, e) in incident.iter().enumerate() {
            if e.attribute >= arity {
                return Err(Error::InvalidConfig(format!(
                    "edge attribute {} out of range",
                    e.attribute
                )));
            }
            if incident[..i].iter().any(|o| o.edge == e.edge && o.side == e.side) {
                return Err(Error::EdgeMismatch(format!("{:?} {:?} declared twice", e.edge, e.side)));
            }
        }
        let usable = |mask: u32| -> bool {
            let members: Vec<&IncidentEdge> = (0..incident.len())
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| &incident[i])
                .collect();
            members
                .iter()
                .enumerate()
                .all(|(i, a)| members[..i].iter().all(|b| b.edge != a.edge))
        };
        let n = incident.len();
        let mut subsets: Vec<u32> = if n <= FULL_LATTICE_EDGES {
            (1u32..(1 << n)).filter(|&m| usable(m)).collect()
        } else {
            let mut s: Vec<u32> = (0..n).map(|i| 1u32 << i).collect();
            for &t in templates {
                if t == 0 || t >> n != 0 {
                    return Err(Error::InvalidConfig(format!("template mask {t:#b}")));
                }
                if usable(t) {
                    s.push(t);
                }
            }
            s
        };
        subsets.sort_unstable();
        subsets.dedup();
        Ok(Self {
            arity,
            incident,
            subsets,
        })
    }

    /// Rebuilds a layout with explicitly listed subsets.
    pub fn from_parts(arity: usize, incident: Vec<IncidentEdge>, mut subsets: Vec<u32>) -> Result<Self> {
        let base = Self::new(arity, incident, &subsets)?;
        subsets.sort_unstable();
        subsets.dedup();
        let n = base.incident.len();
        for &m in &subsets {
            if m == 0 || (n < 32 && m >> n != 0) {
                return Err(Error::InvalidConfig(format!("subset mask {m:#b}")));
            }
        }
        Ok(Self { subsets, ..base })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn incident(&self) -> &[IncidentEdge] {
        &self.incident
    }

    pub fn subsets(&self) -> &[u32] {
        &self.subsets
    }

    pub fn join_attributes(&self) -> AttrSet {
        AttrSet::from_iter(self.incident.iter().map(|e| e.attribute))
    }

    pub fn subset_index(&self, mask: u32) -> Option<usize> {
        self.subsets.binary_search(&mask).ok()
    }

    /// Bitmask of the incident entries for `(edge, side)` pairs.
    pub fn mask_for(&self, endpoints: &[(EdgeId, Side)]) -> Result<u32> {
        let mut mask = 0;
        for &(edge, side) in endpoints {
            let i = self
                .incident
                .iter()
                .position(|e| e.edge == edge && e.side == side)
                .ok_or_else(|| Error::EdgeMismatch(format!("{edge:?} {side:?} not incident")))?;
            mask |= 1 << i;
        }
        Ok(mask)
    }

    /// Incident indices of a subset, ordered by edge id (the key order).
    pub fn members(&self, subset: usize) -> Vec<usize> {
        let mask = self.subsets[subset];
        let mut m: Vec<usize> = (0..self.incident.len()).filter(|i| mask >> i & 1 == 1).collect();
        m.sort_by_key(|&i| self.incident[i].edge);
        m
    }

    pub fn subset_attributes(&self, subset: usize) -> AttrSet {
        AttrSet::from_iter(self.members(subset).into_iter().map(|i| self.incident[i].attribute))
    }

    pub fn sketch_layout(&self, subset: usize, width: usize, copy: u32) -> Result<SketchLayout> {
        let edges = self
            .members(subset)
            .into_iter()
            .map(|i| (self.incident[i].edge, self.incident[i].orientation))
            .collect();
        SketchLayout::new(width, copy, edges)
    }
}

/// Hash assignments for every incident edge and copy of one relation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashBank {
    width: usize,
    /// `[copy][incident index]`.
    assignments: Vec<Vec<EdgeHashAssignment>>,
}

impl HashBank {
    pub fn new(layout: &RelationLayout, seed: u64, width: usize, copies: u32) -> Result<Self> {
        let assignments = (0..copies)
            .map(|c| {
                layout
                    .incident()
                    .iter()
                    .map(|e| EdgeHashAssignment::derive(seed, e.edge, c, width))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { width, assignments })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn copies(&self) -> u32 {
        self.assignments.len() as u32
    }

    /// Layout and hasher of one subset; key values follow
    /// [`RelationLayout::members`] order.
    pub fn hasher<'a>(
        &'a self,
        layout: &RelationLayout,
        subset: usize,
        copy: u32,
    ) -> Result<(SketchLayout, KeyHasher<'a>)> {
        let sl = layout.sketch_layout(subset, self.width, copy)?;
        let per_copy = self
            .assignments
            .get(copy as usize)
            .ok_or_else(|| Error::ConfigMismatch(format!("copy {copy} of {}", self.copies())))?;
        let refs: Vec<&EdgeHashAssignment> = layout.members(subset).into_iter().map(|i| &per_copy[i]).collect();
        let hasher = KeyHasher::new(&sl, &refs)?;
        Ok((sl, hasher))
    }
}

/// Exact frequency of the subset's join-key tuples over `rows`, skipping
/// rows with a null key value.
pub fn subset_frequencies<I: IntoIterator<Item = usize>>(
    table: &CodedTable,
    layout: &RelationLayout,
    subset: usize,
    rows: I,
) -> FrequencyTable {
    let attrs: Vec<usize> = layout
        .members(subset)
        .into_iter()
        .map(|i| layout.incident()[i].attribute)
        .collect();
    let mut freq = FrequencyTable::new();
    let mut key = Vec::with_capacity(attrs.len());
    'rows: for r in rows {
        key.clear();
        for &a in &attrs {
            match table.value(r, a) {
                Some(c) => key.push(c as u64),
                None => continue 'rows,
            }
        }
        freq.insert(&key);
    }
    freq
}

/// Sketch of `rows` built directly from the data.
pub fn sketch_rows(
    table: &CodedTable,
    layout: &RelationLayout,
    bank: &HashBank,
    subset: usize,
    kind: SketchKind,
    copy: u32,
    rows: &[usize],
) -> Result<SketchVector> {
    let (sl, hasher) = bank.hasher(layout, subset, copy)?;
    if kind == SketchKind::Degree {
        let freq = subset_frequencies(table, layout, subset, rows.iter().copied());
        return Ok(build_degree(&freq, &sl, &hasher));
    }
    let attrs: Vec<usize> = layout
        .members(subset)
        .into_iter()
        .map(|i| layout.incident()[i].attribute)
        .collect();
    let mut b = SketchBuilder::new(kind, sl, hasher)?;
    for &r in rows {
        b.push_row(|i| table.value(r, attrs[i]).map(u64::from));
    }
    Ok(b.finish())
}

/// Sketch of the selection `predicate` built directly from the data.
pub fn exact_sketch(
    table: &CodedTable,
    layout: &RelationLayout,
    bank: &HashBank,
    subset: usize,
    kind: SketchKind,
    copy: u32,
    predicate: &Predicate,
) -> Result<SketchVector> {
    let rows: Vec<usize> = (0..table.rows()).filter(|&r| predicate.matches_row(table, r)).collect();
    sketch_rows(table, layout, bank, subset, kind, copy, &rows)
}

/// A trained relation: network, layout and exact root degree sketches.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationModel {
    pub config: TrainConfig,
    pub layout: RelationLayout,
    pub domains: Vec<u32>,
    pub rows: u64,
    pub root: SpnNode,
    /// Indexed `copy * subset_count + subset`.
    pub root_degree: Vec<SparseSketch>,
    bank: HashBank,
}

impl RelationModel {
    pub fn from_parts(
        config: TrainConfig,
        layout: RelationLayout,
        domains: Vec<u32>,
        rows: u64,
        root: SpnNode,
        root_degree: Vec<SparseSketch>,
    ) -> Result<Self> {
        config.validate()?;
        if domains.len() != layout.arity() {
            return Err(Error::LengthMismatch(domains.len(), layout.arity()));
        }
        let expected = config.copies as usize * layout.subsets().len();
        if root_degree.len() != expected {
            return Err(Error::LengthMismatch(root_degree.len(), expected));
        }
        let bank = HashBank::new(&layout, config.seed, config.width, config.copies)?;
        Ok(Self {
            config,
            layout,
            domains,
            rows,
            root,
            root_degree,
            bank,
        })
    }

    pub fn bank(&self) -> &HashBank {
        &self.bank
    }

    pub fn subset_count(&self) -> usize {
        self.layout.subsets().len()
    }

    pub fn root_degree(&self, subset: usize, copy: u32) -> Result<SketchVector> {
        let s = self
            .root_degree
            .get(copy as usize * self.subset_count() + subset)
            .ok_or(Error::MissingSubset)?;
        Ok(SketchVector {
            kind: SketchKind::Degree,
            layout: self.layout.sketch_layout(subset, self.config.width, copy)?,
            counters: s.to_dense(self.config.width),
        })
    }
}
