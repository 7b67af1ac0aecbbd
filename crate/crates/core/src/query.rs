//! Multi-way join queries and their estimation from sketch sources.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::estimator::{bound_estimate, combine_estimates, contract, GraphEdge, JoinGraph, Variant};
use crate::infer::ProductMode;
use crate::model::{exact_sketch, HashBank, RelationLayout, RelationModel, Side};
use crate::predicate::Predicate;
use crate::sketch::{EdgeId, SketchKind, SketchVector};
use crate::table::CodedTable;

/// One relation instance of a query.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryVertex {
    pub relation: usize,
    pub predicate: Predicate,
}

/// A use of a declared join edge; `left` and `right` are the vertices
/// playing the edge's declared left and right endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QueryEdge {
    pub edge: EdgeId,
    pub left: usize,
    pub right: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Query {
    pub vertices: Vec<QueryVertex>,
    pub edges: Vec<QueryEdge>,
}

impl Query {
    pub fn graph(&self) -> Result<JoinGraph> {
        JoinGraph::new(
            self.vertices.len(),
            self.edges
                .iter()
                .map(|e| GraphEdge {
                    edge: e.edge,
                    left: e.left,
                    right: e.right,
                })
                .collect(),
        )
    }

    /// Declared endpoints used by vertex `v`.
    pub fn endpoints(&self, v: usize) -> Vec<(EdgeId, Side)> {
        let mut out = Vec::new();
        for e in &self.edges {
            if e.left == v {
                out.push((e.edge, Side::Left));
            }
            if e.right == v {
                out.push((e.edge, Side::Right));
            }
        }
        out
    }
}

/// Supplier of per-relation sketches of filtered selections.
pub trait SketchSource {
    fn layout(&self) -> &RelationLayout;

    /// One sketch per estimator copy.
    fn sketches(&self, subset: usize, predicate: &Predicate, kind: SketchKind) -> Result<Vec<SketchVector>>;

    /// Count-Min and degree sketch per estimator copy.
    fn bound_sketches(&self, subset: usize, predicate: &Predicate) -> Result<Vec<(SketchVector, SketchVector)>>;

    fn selection_cardinality(&self, predicate: &Predicate) -> Result<f64>;
}

/// Sketches approximated by a trained model.
pub struct Approximate<'m> {
    pub model: &'m RelationModel,
    pub mode: ProductMode,
}

impl SketchSource for Approximate<'_> {
    fn layout(&self) -> &RelationLayout {
        &self.model.layout
    }

    fn sketches(&self, subset: usize, predicate: &Predicate, kind: SketchKind) -> Result<Vec<SketchVector>> {
        self.model.approx_sketches(subset, predicate, self.mode, kind)
    }

    fn bound_sketches(&self, subset: usize, predicate: &Predicate) -> Result<Vec<(SketchVector, SketchVector)>> {
        self.model.approx_bound_sketches(subset, predicate, self.mode)
    }

    fn selection_cardinality(&self, predicate: &Predicate) -> Result<f64> {
        self.model.selection_cardinality(predicate, self.mode)
    }
}

/// Sketches built directly from the data of a selection.
pub struct Exact<'t> {
    pub table: &'t CodedTable,
    pub layout: RelationLayout,
    pub bank: HashBank,
}

impl<'t> Exact<'t> {
    pub fn new(table: &'t CodedTable, layout: RelationLayout, seed: u64, width: usize, copies: u32) -> Result<Self> {
        let bank = HashBank::new(&layout, seed, width, copies)?;
        Ok(Self { table, layout, bank })
    }

    fn build(&self, subset: usize, predicate: &Predicate, kind: SketchKind) -> Result<Vec<SketchVector>> {
        (0..self.bank.copies())
            .map(|c| exact_sketch(self.table, &self.layout, &self.bank, subset, kind, c, predicate))
            .collect()
    }
}

impl SketchSource for Exact<'_> {
    fn layout(&self) -> &RelationLayout {
        &self.layout
    }

    fn sketches(&self, subset: usize, predicate: &Predicate, kind: SketchKind) -> Result<Vec<SketchVector>> {
        self.build(subset, predicate, kind)
    }

    fn bound_sketches(&self, subset: usize, predicate: &Predicate) -> Result<Vec<(SketchVector, SketchVector)>> {
        let cm = self.build(subset, predicate, SketchKind::CountMin)?;
        let dg = self.build(subset, predicate, SketchKind::Degree)?;
        Ok(cm.into_iter().zip(dg).collect())
    }

    fn selection_cardinality(&self, predicate: &Predicate) -> Result<f64> {
        Ok((0..self.table.rows())
            .filter(|&r| predicate.matches_row(self.table, r))
            .count() as f64)
    }
}

fn subset_of(source: &dyn SketchSource, query: &Query, v: usize) -> Result<usize> {
    let layout = source.layout();
    let mask = layout.mask_for(&query.endpoints(v))?;
    layout.subset_index(mask).ok_or(Error::MissingSubset)
}

/// Unclamped per-copy estimates. `sources[r]` serves relation `r`.
/// A query without edges yields its single selection cardinality.
pub fn copy_estimates(sources: &[&dyn SketchSource], query: &Query, variant: Variant) -> Result<Vec<f64>> {
    let graph = query.graph()?;
    let source = |v: usize| -> Result<&dyn SketchSource> {
        let r = query.vertices[v].relation;
        sources
            .get(r)
            .copied()
            .ok_or_else(|| Error::InvalidGraph(alloc::format!("no model for relation {r}")))
    };
    if query.edges.is_empty() {
        let v = &query.vertices[0];
        return Ok(alloc::vec![source(0)?.selection_cardinality(&v.predicate)?]);
    }
    let n = query.vertices.len();
    if variant.uses_agms() {
        let per_vertex: Vec<Vec<SketchVector>> = (0..n)
            .map(|v| {
                let s = source(v)?;
                s.sketches(subset_of(s, query, v)?, &query.vertices[v].predicate, SketchKind::Agms)
            })
            .collect::<Result<_>>()?;
        let copies = per_vertex[0].len();
        (0..copies)
            .map(|c| {
                let refs: Vec<&SketchVector> = per_vertex.iter().map(|s| &s[c]).collect();
                contract(&refs, &graph)
            })
            .collect()
    } else {
        let per_vertex: Vec<Vec<(SketchVector, SketchVector)>> = (0..n)
            .map(|v| {
                let s = source(v)?;
                s.bound_sketches(subset_of(s, query, v)?, &query.vertices[v].predicate)
            })
            .collect::<Result<_>>()?;
        let copies = per_vertex[0].len();
        (0..copies)
            .map(|c| {
                let cm: Vec<&SketchVector> = per_vertex.iter().map(|s| &s[c].0).collect();
                let dg: Vec<&SketchVector> = per_vertex.iter().map(|s| &s[c].1).collect();
                bound_estimate(&cm, &dg, &graph)
            })
            .collect()
    }
}

/// Combined estimate, at least 1.
pub fn estimate(sources: &[&dyn SketchSource], query: &Query, variant: Variant) -> Result<f64> {
    let copies = copy_estimates(sources, query, variant)?;
    if query.edges.is_empty() {
        return Ok(copies[0].max(1.0));
    }
    combine_estimates(&copies, variant)
}

/// Boxed approximate sources for a slice of models.
pub fn approximate_sources(models: &[RelationModel], mode: ProductMode) -> Vec<Box<dyn SketchSource + '_>> {
    models
        .iter()
        .map(|model| Box::new(Approximate { model, mode }) as Box<dyn SketchSource>)
        .collect()
}
