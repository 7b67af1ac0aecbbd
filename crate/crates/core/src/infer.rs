//! Approximate sketches and selectivities of filtered selections.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use hashbrown::HashMap;

use crate::attrs::AttrSet;
use crate::error::{Error, Result};
use crate::model::RelationModel;
use crate::predicate::Predicate;
use crate::sketch::{clamp_degree, SketchKind, SketchVector};
use crate::spn::{SketchLeaf, SpnNode};

/// How product nodes combine the selectivities of their scalar children.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProductMode {
    Product,
    /// Smallest child selectivity instead of the product; biases estimates
    /// upward.
    MinProduct,
}

impl ProductMode {
    fn fold(self, values: impl Iterator<Item = f64>) -> f64 {
        match self {
            ProductMode::Product => values.product(),
            ProductMode::MinProduct => values.fold(1.0, f64::min),
        }
    }
}

#[derive(Clone, Debug)]
struct Contribution<'m> {
    leaf: &'m SketchLeaf,
    factor: f64,
    /// Join-attribute conditions answered exactly from the leaf digest.
    filter: Option<Predicate>,
}

enum Approx<'m> {
    Scalar(f64),
    Sketch(Vec<Contribution<'m>>),
}

struct Traversal<'p> {
    predicate: &'p Predicate,
    wanted: AttrSet,
    join: AttrSet,
    mode: ProductMode,
    trace: Option<Vec<f64>>,
}

fn digest_fraction(leaf: &SketchLeaf, filter: &Predicate) -> f64 {
    let Some(digest) = &leaf.digest else {
        return 1.0;
    };
    if leaf.rows == 0 {
        return 0.0;
    }
    let attrs: Vec<usize> = leaf.attributes.iter().collect();
    let hits: u64 = digest
        .iter()
        .filter(|(key, _)| key.iter().zip(&attrs).all(|(&v, &a)| filter.matches_value(a, v)))
        .map(|(_, c)| c)
        .sum();
    hits as f64 / leaf.rows as f64
}

fn fallback_fraction(leaf: &SketchLeaf, local: &Predicate, mode: ProductMode) -> f64 {
    mode.fold(
        leaf.selectivity
            .iter()
            .map(|s| s.selectivity(local.conditions(s.attribute))),
    )
}

impl<'p> Traversal<'p> {
    fn visit<'m>(&mut self, node: &'m SpnNode) -> Result<Approx<'m>> {
        let scope = node.scope();
        let needs_sketch = !self.wanted.is_empty() && self.wanted.intersects(scope);
        if !needs_sketch && !self.predicate.attrs().intersects(scope) {
            return Ok(Approx::Scalar(1.0));
        }
        if needs_sketch && !self.wanted.is_subset(scope) {
            return Err(Error::InvalidConfig(format!(
                "join attributes {:?} split across {:?}",
                self.wanted, scope
            )));
        }
        match node {
            SpnNode::Selectivity(leaf) => Ok(Approx::Scalar(
                leaf.selectivity(self.predicate.conditions(leaf.attribute)),
            )),
            SpnNode::Sketch(leaf) => Ok(self.sketch_leaf(leaf, needs_sketch)),
            SpnNode::Sum(sum) => {
                if needs_sketch {
                    let mut parts = Vec::new();
                    for child in &sum.children {
                        match self.visit(child)? {
                            Approx::Sketch(p) => parts.extend(p),
                            Approx::Scalar(_) => unreachable!("child scope equals the sum scope"),
                        }
                    }
                    Ok(Approx::Sketch(parts))
                } else {
                    let mut total = 0.0;
                    for (w, child) in sum.weights.iter().zip(&sum.children) {
                        match self.visit(child)? {
                            Approx::Scalar(s) => total += w * s,
                            Approx::Sketch(_) => unreachable!("no sketch requested"),
                        }
                    }
                    Ok(Approx::Scalar(total.clamp(0.0, 1.0)))
                }
            }
            SpnNode::Product(product) => {
                let slot = self.trace.as_mut().map(|t| {
                    t.push(f64::NAN);
                    t.len() - 1
                });
                // The branch holding the join attributes always multiplies,
                // so scalar and sketch traversals agree in either mode.
                let mut scalars = Vec::with_capacity(product.children.len());
                let mut carrier = 1.0;
                let mut sketch = None;
                for child in &product.children {
                    match self.visit(child)? {
                        Approx::Scalar(s) if child.scope().intersects(self.join) => carrier = s,
                        Approx::Scalar(s) => scalars.push(s),
                        Approx::Sketch(p) => sketch = Some(p),
                    }
                }
                let factor = (carrier * self.mode.fold(scalars.into_iter())).clamp(0.0, 1.0);
                if let (Some(t), Some(i)) = (self.trace.as_mut(), slot) {
                    t[i] = factor;
                }
                Ok(match sketch {
                    None => Approx::Scalar(factor),
                    Some(_) if factor == 0.0 => Approx::Sketch(Vec::new()),
                    Some(mut parts) => {
                        for p in &mut parts {
                            p.factor *= factor;
                        }
                        Approx::Sketch(parts)
                    }
                })
            }
        }
    }

    fn sketch_leaf<'m>(&self, leaf: &'m SketchLeaf, needs_sketch: bool) -> Approx<'m> {
        let local = self.predicate.restrict(leaf.attributes);
        if local.is_empty() {
            return if needs_sketch {
                Approx::Sketch(vec![Contribution {
                    leaf,
                    factor: 1.0,
                    filter: None,
                }])
            } else {
                Approx::Scalar(1.0)
            };
        }
        let fraction = if leaf.digest.is_some() {
            digest_fraction(leaf, &local)
        } else {
            fallback_fraction(leaf, &local, self.mode)
        };
        if !needs_sketch {
            return Approx::Scalar(fraction.clamp(0.0, 1.0));
        }
        if fraction == 0.0 {
            return Approx::Sketch(Vec::new());
        }
        Approx::Sketch(vec![if leaf.digest.is_some() {
            Contribution {
                leaf,
                factor: 1.0,
                filter: Some(local),
            }
        } else {
            Contribution {
                leaf,
                factor: fraction.clamp(0.0, 1.0),
                filter: None,
            }
        }])
    }
}

impl RelationModel {
    fn check_predicate(&self, predicate: &Predicate) -> Result<()> {
        match predicate.attrs().iter().find(|&a| a >= self.layout.arity()) {
            Some(a) => Err(Error::InvalidPredicate(format!("attribute {a} out of range"))),
            None => Ok(()),
        }
    }

    fn traverse(
        &self,
        wanted: AttrSet,
        predicate: &Predicate,
        mode: ProductMode,
        trace: bool,
    ) -> Result<(Approx<'_>, Option<Vec<f64>>)> {
        self.check_predicate(predicate)?;
        let mut t = Traversal {
            predicate,
            wanted,
            join: self.layout.join_attributes(),
            mode,
            trace: trace.then(Vec::new),
        };
        let a = t.visit(&self.root)?;
        Ok((a, t.trace))
    }

    /// Probability that a row satisfies `predicate`.
    pub fn selectivity(&self, predicate: &Predicate, mode: ProductMode) -> Result<f64> {
        if self.rows == 0 {
            return Ok(0.0);
        }
        match self.traverse(AttrSet::default(), predicate, mode, false)?.0 {
            Approx::Scalar(s) => Ok(s),
            Approx::Sketch(_) => unreachable!("no sketch requested"),
        }
    }

    /// Estimated number of rows satisfying `predicate`.
    pub fn selection_cardinality(&self, predicate: &Predicate, mode: ProductMode) -> Result<f64> {
        Ok(self.rows as f64 * self.selectivity(predicate, mode)?)
    }

    /// Factor applied at each product node, in pre-order.
    pub fn product_factors(&self, predicate: &Predicate, mode: ProductMode) -> Result<Vec<f64>> {
        Ok(self
            .traverse(AttrSet::default(), predicate, mode, true)?
            .1
            .expect("trace requested"))
    }

    /// Approximated sketch of the selection for one edge subset, for every
    /// copy; the network is traversed once.
    pub fn approx_sketches(
        &self,
        subset: usize,
        predicate: &Predicate,
        mode: ProductMode,
        kind: SketchKind,
    ) -> Result<Vec<SketchVector>> {
        if subset >= self.subset_count() {
            return Err(Error::MissingSubset);
        }
        let wanted = self.layout.subset_attributes(subset);
        let parts = match self.traverse(wanted, predicate, mode, false)?.0 {
            Approx::Sketch(p) => p,
            Approx::Scalar(_) => unreachable!("sketch requested"),
        };
        (0..self.config.copies)
            .map(|copy| self.materialize(&parts, subset, kind, copy))
            .collect()
    }

    pub fn approx_sketch(
        &self,
        subset: usize,
        predicate: &Predicate,
        mode: ProductMode,
        kind: SketchKind,
        copy: u32,
    ) -> Result<SketchVector> {
        if copy >= self.config.copies {
            return Err(Error::ConfigMismatch(format!("copy {copy}")));
        }
        let mut all = self.approx_sketches(subset, predicate, mode, kind)?;
        Ok(all.swap_remove(copy as usize))
    }

    /// Count-Min and clamped degree approximations for every copy.
    pub fn approx_bound_sketches(
        &self,
        subset: usize,
        predicate: &Predicate,
        mode: ProductMode,
    ) -> Result<Vec<(SketchVector, SketchVector)>> {
        let cm = self.approx_sketches(subset, predicate, mode, SketchKind::CountMin)?;
        let dg = self.approx_sketches(subset, predicate, mode, SketchKind::Degree)?;
        cm.into_iter()
            .zip(dg)
            .enumerate()
            .map(|(copy, (c, d))| {
                let root = self.root_degree(subset, copy as u32)?;
                Ok((c, clamp_degree(&d, &root)?))
            })
            .collect()
    }

    fn materialize(
        &self,
        parts: &[Contribution<'_>],
        subset: usize,
        kind: SketchKind,
        copy: u32,
    ) -> Result<SketchVector> {
        let width = self.config.width;
        let ns = self.subset_count();
        let mut out = SketchVector::zeros(kind, self.layout.sketch_layout(subset, width, copy)?);
        for part in parts {
            match &part.filter {
                None => part
                    .leaf
                    .stored(copy, subset, ns, kind)
                    .accumulate_into(&mut out.counters, part.factor),
                Some(filter) => {
                    self.accumulate_filtered(part.leaf, filter, subset, kind, copy, part.factor, &mut out)?
                }
            }
        }
        Ok(out)
    }

    /// Rebuilds a leaf's sketch from the digest entries matching `filter`.
    #[allow(clippy::too_many_arguments)]
    fn accumulate_filtered(
        &self,
        leaf: &SketchLeaf,
        filter: &Predicate,
        subset: usize,
        kind: SketchKind,
        copy: u32,
        factor: f64,
        out: &mut SketchVector,
    ) -> Result<()> {
        let digest = leaf.digest.as_ref().ok_or(Error::MissingSubset)?;
        let attrs: Vec<usize> = leaf.attributes.iter().collect();
        let positions: Vec<usize> = self
            .layout
            .members(subset)
            .into_iter()
            .map(|i| {
                let a = self.layout.incident()[i].attribute;
                attrs
                    .iter()
                    .position(|&x| x == a)
                    .expect("leaf holds every join attribute")
            })
            .collect();
        let (_, hasher) = self.bank().hasher(&self.layout, subset, copy)?;
        let mut projected: HashMap<Vec<u64>, u64> = HashMap::new();
        let mut key = Vec::with_capacity(positions.len());
        'entries: for (tuple, count) in digest {
            if !tuple.iter().zip(&attrs).all(|(&v, &a)| filter.matches_value(a, v)) {
                continue;
            }
            key.clear();
            for &p in &positions {
                match tuple[p] {
                    Some(c) => key.push(c as u64),
                    None => continue 'entries,
                }
            }
            match kind {
                SketchKind::Agms => out.counters[hasher.bucket(&key)] += hasher.sign(&key) * (*count as f64) * factor,
                SketchKind::CountMin => out.counters[hasher.bucket(&key)] += *count as f64 * factor,
                SketchKind::Degree => *projected.entry(key.clone()).or_insert(0) += count,
            }
        }
        if kind == SketchKind::Degree {
            let mut dense = vec![0.0f64; out.counters.len()];
            for (k, c) in &projected {
                let b = hasher.bucket(k);
                dense[b] = dense[b].max(*c as f64);
            }
            for (o, d) in out.counters.iter_mut().zip(dense) {
                *o += d * factor;
            }
        }
        Ok(())
    }
}
