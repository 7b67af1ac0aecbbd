//! Training, estimation, truth and sketch-error pipelines behind the CLI.

use std::collections::HashMap;
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sspn_core::estimator::Variant;
use sspn_core::infer::ProductMode;
use sspn_core::learn::train_relation;
use sspn_core::model::{exact_sketch, RelationModel, TrainConfig};
use sspn_core::predicate::Predicate;
use sspn_core::query::{approximate_sources, estimate, SketchSource};
use sspn_core::sketch::SketchKind;
use sspn_core::table::CodedTable;

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::ingest::Database;
use crate::metrics::{mean, median, summarize, QErrorSummary};
use crate::model_file::Model;
use crate::oracle::{cardinality, Truth};
use crate::workload::{QueryRecord, QuerySpec};

pub fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::FagmsMedian => "fagms-median",
        Variant::FagmsMax => "fagms-max",
        Variant::Bound => "bound",
    }
}

pub fn mode_name(m: ProductMode) -> &'static str {
    match m {
        ProductMode::Product => "product",
        ProductMode::MinProduct => "min-product",
    }
}

/// Runs `f` on a pool of at most `threads` workers (all cores if `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Input(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// One network per relation, trained in parallel.
pub fn train_relations(catalog: &Catalog, tables: &[CodedTable], config: &TrainConfig) -> Result<Vec<RelationModel>> {
    config.validate()?;
    (0..tables.len())
        .into_par_iter()
        .map(|r| {
            let start = Instant::now();
            let layout = catalog.joins.layout(&catalog.schema, r)?;
            let model = train_relation(&tables[r], layout, config)?;
            let counts = model.root.count_nodes();
            info!(
                "trained {} ({} rows): {} sum, {} product, {} sketch leaves, {} selectivity leaves in {:.3}s",
                catalog.schema.relations[r].name,
                tables[r].rows(),
                counts.sum,
                counts.product,
                counts.sketch_leaves,
                counts.selectivity_leaves,
                start.elapsed().as_secs_f64()
            );
            Ok(model)
        })
        .collect()
}

pub fn train_model(db: &Database, config: &TrainConfig) -> Result<Model> {
    Ok(Model {
        catalog: db.catalog.clone(),
        config: config.clone(),
        relations: train_relations(&db.catalog, &db.tables, config)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub id: String,
    pub estimate: Option<f64>,
    pub variant: String,
    pub mode: String,
    /// Wall-clock estimation time; excluded from determinism checks.
    pub micros: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn estimate_spec(model: &Model, spec: &QuerySpec, variant: Variant, mode: ProductMode) -> Result<f64> {
    let sources = approximate_sources(&model.relations, mode);
    let refs: Vec<&dyn SketchSource> = sources.iter().map(|s| s.as_ref()).collect();
    Ok(estimate(&refs, &spec.query, variant)?)
}

/// Estimates every record, in input order. Failures are reported per query.
pub fn estimate_workload(
    model: &Model,
    records: &[QueryRecord],
    variant: Variant,
    mode: ProductMode,
) -> Vec<EstimateRecord> {
    records
        .par_iter()
        .map(|record| {
            let start = Instant::now();
            let result = QuerySpec::from_record(record, &model.catalog)
                .and_then(|spec| estimate_spec(model, &spec, variant, mode));
            let micros = start.elapsed().as_secs_f64() * 1e6;
            let (estimate, error) = match result {
                Ok(e) => (Some(e), None),
                Err(e) => (None, Some(e.to_string())),
            };
            EstimateRecord {
                id: record.id.clone(),
                estimate,
                variant: variant_name(variant).into(),
                mode: mode_name(mode).into(),
                micros,
                error,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub id: String,
    pub truth: Option<u128>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub skipped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn oracle_workload(db: &Database, records: &[QueryRecord], budget: Option<u64>) -> Vec<OracleRecord> {
    records
        .par_iter()
        .map(|record| {
            let result = QuerySpec::from_record(record, &db.catalog)
                .and_then(|spec| cardinality(&db.tables, &db.catalog.joins, &spec.query, budget));
            let mut out = OracleRecord {
                id: record.id.clone(),
                truth: None,
                skipped: false,
                error: None,
            };
            match result {
                Ok(Truth::Count(c)) => out.truth = Some(c),
                Ok(Truth::Skipped) => out.skipped = true,
                Err(e) => out.error = Some(e.to_string()),
            }
            out
        })
        .collect()
}

/// Anything with an id and an optional truth: oracle output or a workload
/// file carrying `truth` fields.
#[derive(Clone, Debug, Deserialize)]
pub struct TruthRecord {
    pub id: String,
    #[serde(default)]
    pub truth: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Evaluation {
    pub summary: QErrorSummary,
    /// Queries without an estimate or a truth.
    pub excluded: usize,
}

/// Pairs estimates with truths by id. Every id must appear on both sides.
pub fn evaluate(estimates: &[EstimateRecord], truths: &[TruthRecord]) -> Result<Evaluation> {
    let mut by_id: HashMap<&str, Option<f64>> = HashMap::new();
    for t in truths {
        if by_id.insert(&t.id, t.truth).is_some() {
            return Err(Error::Input(format!("duplicate truth id {}", t.id)));
        }
    }
    if by_id.len() != estimates.len() {
        return Err(Error::Input(format!(
            "{} estimates but {} truths",
            estimates.len(),
            by_id.len()
        )));
    }
    let mut pairs = Vec::new();
    let mut excluded = 0;
    for e in estimates {
        let truth = by_id
            .remove(e.id.as_str())
            .ok_or_else(|| Error::Input(format!("no truth for query {}", e.id)))?;
        match (e.estimate, truth) {
            (Some(est), Some(t)) => pairs.push((est, t)),
            _ => excluded += 1,
        }
    }
    let summary = summarize(&pairs);
    if summary.zero_truths > 0 {
        info!("{} zero-truth queries clamped to 1", summary.zero_truths);
    }
    Ok(Evaluation { summary, excluded })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SketchErrorRecord {
    pub id: String,
    pub alias: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l1_approx: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l1_baseline: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<u64>,
}

/// Mean over copies of the L1 distance between the exact Count-Min sketch
/// of a selection and the approximations of `model` and `baseline`.
pub fn selection_l1(
    model: &RelationModel,
    baseline: &RelationModel,
    table: &CodedTable,
    subset: usize,
    predicate: &Predicate,
    mode: ProductMode,
) -> Result<(f64, f64, u64)> {
    let approx = model.approx_sketches(subset, predicate, mode, SketchKind::CountMin)?;
    let base = baseline.approx_sketches(subset, predicate, mode, SketchKind::CountMin)?;
    let mut a = 0.0;
    let mut b = 0.0;
    for copy in 0..model.config.copies {
        let exact = exact_sketch(
            table,
            &model.layout,
            model.bank(),
            subset,
            SketchKind::CountMin,
            copy,
            predicate,
        )?;
        a += exact.l1_distance(&approx[copy as usize]);
        b += exact.l1_distance(&base[copy as usize]);
    }
    let c = model.config.copies as f64;
    let rows = (0..table.rows()).filter(|&r| predicate.matches_row(table, r)).count() as u64;
    Ok((a / c, b / c, rows))
}

/// Independence baseline: the same configuration with clustering disabled.
pub fn baseline_config(config: &TrainConfig) -> TrainConfig {
    TrainConfig {
        cluster_fraction: 1.0,
        ..config.clone()
    }
}

pub fn sketch_error_workload(
    model: &Model,
    baseline: &Model,
    tables: &[CodedTable],
    records: &[QueryRecord],
    mode: ProductMode,
) -> Vec<SketchErrorRecord> {
    let per_query: Vec<Vec<SketchErrorRecord>> = records
        .par_iter()
        .map(|record| {
            let row = |alias: &str| SketchErrorRecord {
                id: record.id.clone(),
                alias: alias.into(),
                skipped: None,
                l1_approx: None,
                l1_baseline: None,
                rows: None,
            };
            let spec = match QuerySpec::from_record(record, &model.catalog) {
                Ok(s) => s,
                Err(e) => {
                    let mut r = row("");
                    r.skipped = Some(format!("error: {e}"));
                    return vec![r];
                }
            };
            let q = &spec.query;
            (0..q.vertices.len())
                .map(|v| {
                    let mut out = row(&spec.aliases[v]);
                    let vertex = &q.vertices[v];
                    let rel = vertex.relation;
                    if vertex.predicate.is_empty() {
                        out.skipped = Some("no filter".into());
                        return out;
                    }
                    let endpoints = q.endpoints(v);
                    if endpoints.is_empty() {
                        out.skipped = Some("no join attributes".into());
                        return out;
                    }
                    let m = &model.relations[rel];
                    let result = m
                        .layout
                        .mask_for(&endpoints)
                        .map_err(Error::from)
                        .and_then(|mask| {
                            m.layout
                                .subset_index(mask)
                                .ok_or(Error::Core(sspn_core::Error::MissingSubset))
                        })
                        .and_then(|subset| {
                            selection_l1(
                                m,
                                &baseline.relations[rel],
                                &tables[rel],
                                subset,
                                &vertex.predicate,
                                mode,
                            )
                        });
                    match result {
                        Ok((a, b, n)) => {
                            out.l1_approx = Some(a);
                            out.l1_baseline = Some(b);
                            out.rows = Some(n);
                        }
                        Err(e) => out.skipped = Some(format!("error: {e}")),
                    }
                    out
                })
                .collect()
        })
        .collect();
    per_query.into_iter().flatten().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct L1Summary {
    pub selections: usize,
    pub mean_approx: f64,
    pub median_approx: f64,
    pub mean_baseline: f64,
    pub median_baseline: f64,
}

pub fn summarize_l1(records: &[SketchErrorRecord]) -> L1Summary {
    let a: Vec<f64> = records.iter().filter_map(|r| r.l1_approx).collect();
    let b: Vec<f64> = records.iter().filter_map(|r| r.l1_baseline).collect();
    L1Summary {
        selections: a.len(),
        mean_approx: mean(&a),
        median_approx: median(&a),
        mean_baseline: mean(&b),
        median_baseline: median(&b),
    }
}
