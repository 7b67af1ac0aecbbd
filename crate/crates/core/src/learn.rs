//! Structure learning: recursive decomposition of a relation into a
//! sum-product network with sketch and selectivity leaves.

use alloc::vec;
use alloc::vec::Vec;

use hashbrown::HashMap;
use rand::seq::index;

use crate::attrs::AttrSet;
use crate::cluster::{block_weights, cluster_rows};
use crate::error::{Error, Result};
use crate::model::{subset_frequencies, HashBank, RelationLayout, RelationModel, TrainConfig};
use crate::rdc::{max_canonical_correlation, sine_features};
use crate::rng::{derive_seed, seeded};
use crate::sketch::{build_degree, SketchBuilder, SketchKind, SparseSketch};
use crate::spn::{ProductNode, SelectivityLeaf, SketchLeaf, SpnNode, SumNode};
use crate::table::CodedTable;

struct Dsu(Vec<usize>);

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }

    fn groups(&mut self) -> Vec<Vec<usize>> {
        let n = self.0.len();
        let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            let r = self.find(i);
            by_root[r].push(i);
        }
        by_root.into_iter().filter(|g| !g.is_empty()).collect()
    }
}

/// Connected components of the graph joining `i` and `j` when
/// `matrix[i * m + j] > threshold`. Components are ordered by their
/// smallest member.
pub fn dependency_components(matrix: &[f64], m: usize, threshold: f64) -> Vec<Vec<usize>> {
    let mut dsu = Dsu::new(m);
    for i in 0..m {
        for j in (i + 1)..m {
            if matrix[i * m + j] > threshold {
                dsu.union(i, j);
            }
        }
    }
    dsu.groups()
}

/// Shared state of one relation's training run.
pub struct TrainContext<'a> {
    table: &'a CodedTable,
    layout: &'a RelationLayout,
    bank: HashBank,
    config: &'a TrainConfig,
    join: AttrSet,
}

impl<'a> TrainContext<'a> {
    pub fn new(table: &'a CodedTable, layout: &'a RelationLayout, config: &'a TrainConfig) -> Result<Self> {
        config.validate()?;
        if table.arity() != layout.arity() {
            return Err(Error::LengthMismatch(table.arity(), layout.arity()));
        }
        Ok(Self {
            table,
            layout,
            bank: HashBank::new(layout, config.seed, config.width, config.copies)?,
            config,
            join: layout.join_attributes(),
        })
    }

    fn total_rows(&self) -> usize {
        self.table.rows()
    }
}

/// Trains a network over `rows` restricted to the attributes in `scope`.
pub fn train_spn(ctx: &TrainContext<'_>, rows: &[u32], scope: AttrSet, seed: u64) -> Result<SpnNode> {
    if rows.is_empty() {
        return Err(Error::EmptyPartition);
    }
    if scope.len() == 1 || scope.is_subset(ctx.join) {
        return leaf(ctx, rows, scope);
    }
    if rows.len() < 2 {
        return factorized(ctx, rows, scope);
    }
    let groups = independent_groups(ctx, rows, scope, derive_seed(seed, &[0x7264]));
    if groups.len() > 1 {
        let children = groups
            .into_iter()
            .enumerate()
            .map(|(i, g)| train_spn(ctx, rows, g, derive_seed(seed, &[i as u64])))
            .collect::<Result<Vec<_>>>()?;
        return Ok(SpnNode::Product(ProductNode {
            scope,
            rows: rows.len() as u64,
            children,
        }));
    }
    if rows.len() as f64 > ctx.config.cluster_fraction * ctx.total_rows() as f64 {
        let (a, b) = cluster_rows(
            ctx.table,
            rows,
            scope,
            ctx.config.cluster_method,
            ctx.config.rdc_features,
            ctx.config.rdc_scale,
            derive_seed(seed, &[0x636c]),
        )?;
        let weights = block_weights(&[&a, &b]);
        let children = vec![
            train_spn(ctx, &a, scope, derive_seed(seed, &[0]))?,
            train_spn(ctx, &b, scope, derive_seed(seed, &[1]))?,
        ];
        return Ok(SpnNode::Sum(SumNode {
            scope,
            rows: rows.len() as u64,
            weights,
            children,
        }));
    }
    factorized(ctx, rows, scope)
}

fn leaf(ctx: &TrainContext<'_>, rows: &[u32], scope: AttrSet) -> Result<SpnNode> {
    if scope.is_subset(ctx.join) {
        build_sketch_leaf(ctx, rows, scope).map(SpnNode::Sketch)
    } else {
        let attr = scope.iter().next().expect("non-empty scope");
        Ok(SpnNode::Selectivity(build_selectivity_leaf(ctx, rows, attr)))
    }
}

/// One leaf per non-join attribute plus one sketch leaf holding every join
/// attribute in scope.
fn factorized(ctx: &TrainContext<'_>, rows: &[u32], scope: AttrSet) -> Result<SpnNode> {
    let mut children: Vec<SpnNode> = scope
        .difference(ctx.join)
        .iter()
        .map(|a| SpnNode::Selectivity(build_selectivity_leaf(ctx, rows, a)))
        .collect();
    let join = scope.intersection(ctx.join);
    if !join.is_empty() {
        children.push(SpnNode::Sketch(build_sketch_leaf(ctx, rows, join)?));
    }
    if children.len() == 1 {
        return Ok(children.pop().expect("one child"));
    }
    Ok(SpnNode::Product(ProductNode {
        scope,
        rows: rows.len() as u64,
        children,
    }))
}

/// Attribute groups whose pairwise RDC on a row sample never exceeds the
/// threshold across groups. Join attributes always share one group.
fn independent_groups(ctx: &TrainContext<'_>, rows: &[u32], scope: AttrSet, seed: u64) -> Vec<AttrSet> {
    let attrs: Vec<usize> = scope.iter().collect();
    let m = attrs.len();
    let sample: Vec<u32> = if rows.len() > ctx.config.rdc_sample {
        let mut rng = seeded(derive_seed(seed, &[0x7361]));
        let mut picked: Vec<usize> = index::sample(&mut rng, rows.len(), ctx.config.rdc_sample).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| rows[i]).collect()
    } else {
        rows.to_vec()
    };
    let n = sample.len();
    let k = ctx.config.rdc_features;
    let features: Vec<Option<Vec<f64>>> = attrs
        .iter()
        .map(|&a| {
            let col = ctx.table.column(a);
            let values: Vec<f64> = sample
                .iter()
                .map(|&r| col.codes[r as usize].map_or(-1.0, f64::from))
                .collect();
            sine_features(&values, k, ctx.config.rdc_scale, derive_seed(seed, &[a as u64]))
        })
        .collect();
    let mut dsu = Dsu::new(m);
    let join_idx: Vec<usize> = (0..m).filter(|&i| ctx.join.contains(attrs[i])).collect();
    for w in join_idx.windows(2) {
        dsu.union(w[0], w[1]);
    }
    for i in 0..m {
        for j in (i + 1)..m {
            if dsu.find(i) == dsu.find(j) {
                continue;
            }
            let value = match (&features[i], &features[j]) {
                (Some(f), Some(g)) => max_canonical_correlation(f, k, g, k, n),
                _ => 0.0,
            };
            if value > ctx.config.rdc_threshold {
                dsu.union(i, j);
            }
        }
    }
    dsu.groups()
        .into_iter()
        .map(|g| AttrSet::from_iter(g.into_iter().map(|i| attrs[i])))
        .collect()
}

/// Sketches of every edge subset and copy over `rows`, plus per-attribute
/// selectivity summaries and (for few distinct keys) an exact key digest.
pub fn build_sketch_leaf(ctx: &TrainContext<'_>, rows: &[u32], attributes: AttrSet) -> Result<SketchLeaf> {
    if let Some(a) = attributes.difference(ctx.join).iter().next() {
        return Err(Error::NoIncidentEdge(a));
    }
    if attributes != ctx.join {
        return Err(Error::InvalidConfig(alloc::format!(
            "sketch leaf over {attributes:?} splits join attributes {:?}",
            ctx.join
        )));
    }
    let layout = ctx.layout;
    let ns = layout.subsets().len();
    let copies = ctx.config.copies;
    let mut sketches: Vec<[SparseSketch; 3]> = vec![Default::default(); copies as usize * ns];
    for subset in 0..ns {
        let attrs: Vec<usize> = layout
            .members(subset)
            .into_iter()
            .map(|i| layout.incident()[i].attribute)
            .collect();
        let freq = subset_frequencies(ctx.table, layout, subset, rows.iter().map(|&r| r as usize));
        for copy in 0..copies {
            let (sl, hasher) = ctx.bank.hasher(layout, subset, copy)?;
            let degree = build_degree(&freq, &sl, &hasher);
            let mut agms = SketchBuilder::new(SketchKind::Agms, sl.clone(), hasher.clone())?;
            let mut cm = SketchBuilder::new(SketchKind::CountMin, sl, hasher)?;
            for &r in rows {
                let value = |i: usize| ctx.table.value(r as usize, attrs[i]).map(u64::from);
                agms.push_row(value);
                cm.push_row(value);
            }
            sketches[copy as usize * ns + subset] = [
                SparseSketch::from_dense(&agms.finish().counters),
                SparseSketch::from_dense(&cm.finish().counters),
                SparseSketch::from_dense(&degree.counters),
            ];
        }
    }
    let join_attrs: Vec<usize> = attributes.iter().collect();
    let mut tuples: HashMap<Vec<Option<u32>>, u64> = HashMap::new();
    let mut digest_ok = true;
    for &r in rows {
        let key: Vec<Option<u32>> = join_attrs.iter().map(|&a| ctx.table.value(r as usize, a)).collect();
        *tuples.entry(key).or_insert(0) += 1;
        if tuples.len() > ctx.config.digest_limit {
            digest_ok = false;
            break;
        }
    }
    let digest = digest_ok.then(|| {
        let mut d: Vec<(Vec<Option<u32>>, u64)> = tuples.into_iter().collect();
        d.sort_unstable();
        d
    });
    let selectivity = join_attrs
        .iter()
        .map(|&a| build_selectivity_leaf(ctx, rows, a))
        .collect();
    Ok(SketchLeaf {
        attributes,
        rows: rows.len() as u64,
        sketches,
        digest,
        selectivity,
    })
}

pub fn build_selectivity_leaf(ctx: &TrainContext<'_>, rows: &[u32], attribute: usize) -> SelectivityLeaf {
    let col = ctx.table.column(attribute);
    SelectivityLeaf::build(
        attribute,
        rows.iter().map(|&r| col.codes[r as usize]),
        col.domain,
        ctx.config.leaf_width(),
        ctx.config.seed,
    )
}

/// Trains the network for a whole relation and its exact root degree
/// sketches.
pub fn train_relation(table: &CodedTable, layout: RelationLayout, config: &TrainConfig) -> Result<RelationModel> {
    let ctx = TrainContext::new(table, &layout, config)?;
    let rows: Vec<u32> = (0..table.rows() as u32).collect();
    let scope = AttrSet::from_iter(0..layout.arity());
    let root = if rows.is_empty() {
        factorized(&ctx, &rows, scope)?
    } else {
        train_spn(&ctx, &rows, scope, derive_seed(config.seed, &[0x73_706e]))?
    };
    let ns = layout.subsets().len();
    let mut root_degree = vec![SparseSketch::default(); config.copies as usize * ns];
    for subset in 0..ns {
        let freq = subset_frequencies(table, &layout, subset, 0..table.rows());
        for copy in 0..config.copies {
            let (sl, hasher) = ctx.bank.hasher(&layout, subset, copy)?;
            root_degree[copy as usize * ns + subset] =
                SparseSketch::from_dense(&build_degree(&freq, &sl, &hasher).counters);
        }
    }
    let domains = table.columns().iter().map(|c| c.domain).collect();
    RelationModel::from_parts(config.clone(), layout, domains, rows.len() as u64, root, root_degree)
}
