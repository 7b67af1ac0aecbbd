//! Join-size estimation from per-relation sketches.
//!
//! Every edge is inserted with `+h` at one endpoint and `-h` at the other, so
//! matching tuples land on bucket combinations whose indices sum to zero
//! modulo `w`. The estimate is the total mass at phase zero:
//!
//! ```text
//! sum_{j_1 + ... + j_n = 0 (mod w)} s_1[j_1] * ... * s_n[j_n]
//!     = Re( (1/w) * sum_k prod_v DFT(s_v)[k] )
//! ```
//!
//! For two relations this is the dot product of one sketch with the
//! index-reversed other, i.e. the classic `a . b`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fft::{dft, Complex};
use crate::sketch::{EdgeId, Orientation, SketchKind, SketchVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Median of the per-copy Fast-AGMS estimates.
    FagmsMedian,
    /// Maximum of the per-copy Fast-AGMS estimates (upward biased).
    FagmsMax,
    /// Count-Min / degree upper bound, minimum over copies.
    Bound,
}

impl Variant {
    pub fn uses_agms(self) -> bool {
        !matches!(self, Variant::Bound)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorConfig {
    pub variant: Variant,
    pub copies: u32,
    pub width: usize,
}

impl EstimatorConfig {
    pub fn new(variant: Variant, copies: u32, width: usize) -> Result<Self> {
        if copies == 0 {
            return Err(Error::InvalidConfig("at least one estimator copy is required".into()));
        }
        if !width.is_power_of_two() {
            return Err(Error::WidthNotPowerOfTwo(width));
        }
        Ok(Self { variant, copies, width })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GraphEdge {
    pub edge: EdgeId,
    pub left: usize,
    pub right: usize,
}

/// Equi-join edges between `vertices` relation instances. Connected and
/// acyclic; each edge id appears at most once.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JoinGraph {
    vertices: usize,
    edges: Vec<GraphEdge>,
}

impl JoinGraph {
    pub fn new(vertices: usize, edges: Vec<GraphEdge>) -> Result<Self> {
        if vertices == 0 {
            return Err(Error::InvalidGraph("no vertices".into()));
        }
        let mut ids: Vec<EdgeId> = edges.iter().map(|e| e.edge).collect();
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidGraph("an edge is used twice".into()));
        }
        let mut parent: Vec<usize> = (0..vertices).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &edges {
            if e.left >= vertices || e.right >= vertices {
                return Err(Error::InvalidGraph(format!("edge {:?} out of range", e.edge)));
            }
            if e.left == e.right {
                return Err(Error::InvalidGraph(format!("edge {:?} is a self-loop", e.edge)));
            }
            let (a, b) = (find(&mut parent, e.left), find(&mut parent, e.right));
            if a == b {
                return Err(Error::InvalidGraph("cyclic join graphs are not supported".into()));
            }
            parent[a] = b;
        }
        if edges.len() + 1 != vertices {
            return Err(Error::InvalidGraph("join graph is not connected".into()));
        }
        Ok(Self { vertices, edges })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    /// Edge ids incident to `v`, sorted.
    pub fn incident(&self, v: usize) -> Vec<EdgeId> {
        let mut out: Vec<EdgeId> = self
            .edges
            .iter()
            .filter(|e| e.left == v || e.right == v)
            .map(|e| e.edge)
            .collect();
        out.sort();
        out
    }
}

fn validate(sketches: &[&SketchVector], graph: &JoinGraph) -> Result<()> {
    if sketches.len() != graph.vertex_count() {
        return Err(Error::InvalidGraph(format!(
            "{} sketches for {} vertices",
            sketches.len(),
            graph.vertex_count()
        )));
    }
    let first = sketches[0];
    for s in sketches {
        if s.width() != first.width() || s.layout.copy != first.layout.copy {
            return Err(Error::ConfigMismatch("sketch width or copy differs".into()));
        }
    }
    for (v, s) in sketches.iter().enumerate() {
        let got: Vec<EdgeId> = s.layout.edge_ids().collect();
        if got != graph.incident(v) {
            return Err(Error::EdgeMismatch(format!(
                "vertex {v} sketch covers {got:?}, graph needs {:?}",
                graph.incident(v)
            )));
        }
    }
    for e in graph.edges() {
        let o = |v: usize| -> Orientation {
            sketches[v]
                .layout
                .edges
                .iter()
                .find(|&&(id, _)| id == e.edge)
                .map(|&(_, o)| o)
                .expect("validated above")
        };
        if o(e.left) == o(e.right) {
            return Err(Error::EdgeMismatch(format!(
                "edge {:?} has the same orientation at both endpoints",
                e.edge
            )));
        }
    }
    Ok(())
}

fn phase_zero_mass(spectra: &[&[Complex]]) -> f64 {
    let w = spectra[0].len();
    let mut total = 0.0;
    for k in 0..w {
        let mut p = Complex::ONE;
        for s in spectra {
            p = p * s[k];
        }
        total += p.re;
    }
    total / w as f64
}

/// Cross-correlation estimate for one estimator copy.
pub fn contract(sketches: &[&SketchVector], graph: &JoinGraph) -> Result<f64> {
    validate(sketches, graph)?;
    let spectra: Vec<Vec<Complex>> = sketches.iter().map(|s| dft(&s.counters)).collect::<Result<_>>()?;
    let refs: Vec<&[Complex]> = spectra.iter().map(|s| s.as_slice()).collect();
    Ok(phase_zero_mass(&refs))
}

/// Bound-sketch product where vertex `choice` supplies its Count-Min sketch
/// and every other vertex its degree sketch.
pub fn contract_bound(
    countmin: &[&SketchVector],
    degree: &[&SketchVector],
    graph: &JoinGraph,
    choice: usize,
) -> Result<f64> {
    if choice >= graph.vertex_count() {
        return Err(Error::InvalidGraph(format!("choice {choice} out of range")));
    }
    let mixed: Vec<&SketchVector> = (0..graph.vertex_count())
        .map(|v| if v == choice { countmin[v] } else { degree[v] })
        .collect();
    check_kinds(countmin, SketchKind::CountMin)?;
    check_kinds(degree, SketchKind::Degree)?;
    Ok(contract(&mixed, graph)?.max(0.0))
}

fn check_kinds(sketches: &[&SketchVector], kind: SketchKind) -> Result<()> {
    if sketches.iter().any(|s| s.kind != kind) {
        return Err(Error::ConfigMismatch(format!("expected {kind:?} sketches")));
    }
    Ok(())
}

/// Minimum of [`contract_bound`] over every choice of Count-Min vertex. Each
/// sketch is transformed once.
pub fn bound_estimate(countmin: &[&SketchVector], degree: &[&SketchVector], graph: &JoinGraph) -> Result<f64> {
    check_kinds(countmin, SketchKind::CountMin)?;
    check_kinds(degree, SketchKind::Degree)?;
    validate(countmin, graph)?;
    validate(degree, graph)?;
    let cm: Vec<Vec<Complex>> = countmin.iter().map(|s| dft(&s.counters)).collect::<Result<_>>()?;
    let dg: Vec<Vec<Complex>> = degree.iter().map(|s| dft(&s.counters)).collect::<Result<_>>()?;
    let n = graph.vertex_count();
    let mut best = f64::INFINITY;
    for choice in 0..n {
        let refs: Vec<&[Complex]> = (0..n)
            .map(|v| {
                if v == choice {
                    cm[v].as_slice()
                } else {
                    dg[v].as_slice()
                }
            })
            .collect();
        best = best.min(phase_zero_mass(&refs).max(0.0));
    }
    Ok(best)
}

/// Folds per-copy estimates into one and floors the result at 1.
pub fn combine_estimates(estimates: &[f64], variant: Variant) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::NoEstimates);
    }
    let value = match variant {
        Variant::FagmsMedian => {
            let mut v = estimates.to_vec();
            v.sort_by(f64::total_cmp);
            let n = v.len();
            if n % 2 == 1 {
                v[n / 2]
            } else {
                (v[n / 2 - 1] + v[n / 2]) / 2.0
            }
        }
        Variant::FagmsMax => estimates.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Variant::Bound => estimates.iter().copied().fold(f64::INFINITY, f64::min),
    };
    Ok(value.max(1.0))
}

/// Direct two-way estimate `sum_i a[i] * b[-i mod w]`.
pub fn dot_reversed(a: &SketchVector, b: &SketchVector) -> f64 {
    let w = a.width();
    (0..w).map(|i| a.counters[i] * b.counters[(w - i) & (w - 1)]).sum()
}
