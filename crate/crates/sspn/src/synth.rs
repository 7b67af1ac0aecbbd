//! Correlated synthetic data and workloads.
//!
//! Three relations joined in a chain, `users.uid = orders.uid` and
//! `orders.pid = products.pid`. Columns of a relation are tied through a
//! chain of Gaussian latents; each latent is pushed through the normal CDF
//! and then through the column's marginal (Zipf for foreign keys, uniform
//! levels for attributes). The copula keeps rank correlations of the latents.

use std::io::Cursor;
use std::path::Path;

use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::ingest::{ingest_readers, Database};
use crate::schema::{AttrType, AttributeSchema, EdgeDecl, JoinSchema, JoinSchemaFile, RelationSchema, Schema};
use crate::workload::{FilterRecord, QueryRecord, RelationRef};

/// Pearson correlation of Gaussian latents giving Spearman correlation 0.8.
pub const RHO_08: f64 = 0.813_473_286_151_6;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub users: usize,
    pub orders: usize,
    pub products: usize,
    /// Zipf exponent of the foreign keys in `orders`.
    pub zipf: f64,
    /// Latent correlation between `users.age` and `users.score`.
    pub rho: f64,
    /// Latent correlation between a key and the first attribute next to it.
    pub key_rho: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            users: 2000,
            orders: 10_000,
            products: 500,
            zipf: 1.1,
            rho: RHO_08,
            key_rho: 0.6,
            seed: 0,
        }
    }
}

pub const SEGMENTS: [&str; 8] = ["bronze", "copper", "gold", "iron", "jade", "onyx", "pearl", "silver"];
const DAY0: i64 = 19_723; // 2024-01-01 in days since the epoch

fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse normal CDF by bisection on `phi`; only used for rank latents.
fn phi_inv(p: f64) -> f64 {
    let (mut lo, mut hi) = (-10.0f64, 10.0f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn next_latent(rng: &mut StdRng, prev: f64, c: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    c * prev + (1.0 - c * c).sqrt() * z
}

/// Index into `0..n` with Zipf(`s`) probabilities for a uniform `u`.
struct ZipfQuantile(Vec<f64>);

impl ZipfQuantile {
    fn new(n: usize, s: f64) -> Self {
        let mut cdf: Vec<f64> = Vec::with_capacity(n);
        let mut acc = 0.0;
        for i in 1..=n {
            acc += (i as f64).powf(-s);
            cdf.push(acc);
        }
        cdf.iter_mut().for_each(|c| *c /= acc);
        Self(cdf)
    }

    fn get(&self, u: f64) -> usize {
        self.0.partition_point(|&c| c <= u).min(self.0.len() - 1)
    }
}

fn level(u: f64, levels: usize) -> usize {
    ((u * levels as f64) as usize).min(levels - 1)
}

fn attr(name: &str, ty: AttrType, nullable: bool) -> AttributeSchema {
    AttributeSchema {
        name: name.into(),
        ty,
        nullable,
    }
}

pub fn schema() -> Schema {
    let rel = |name: &str, attributes| RelationSchema {
        name: name.into(),
        file: None,
        attributes,
    };
    Schema {
        relations: vec![
            rel(
                "users",
                vec![
                    attr("uid", AttrType::Integer, false),
                    attr("age", AttrType::Integer, false),
                    attr("score", AttrType::Float, false),
                    attr("segment", AttrType::Categorical, true),
                ],
            ),
            rel(
                "orders",
                vec![
                    attr("oid", AttrType::Integer, false),
                    attr("uid", AttrType::Integer, false),
                    attr("pid", AttrType::Integer, false),
                    attr("qty", AttrType::Integer, false),
                    attr("day", AttrType::Timestamp, false),
                ],
            ),
            rel(
                "products",
                vec![
                    attr("pid", AttrType::Integer, false),
                    attr("price", AttrType::Float, false),
                    attr("rating", AttrType::Integer, false),
                ],
            ),
        ],
    }
}

pub fn join_schema() -> JoinSchemaFile {
    let edge = |id: &str, l: &str, r: &str| EdgeDecl {
        id: id.into(),
        left: l.into(),
        right: r.into(),
    };
    JoinSchemaFile {
        edges: vec![
            edge("user_orders", "users.uid", "orders.uid"),
            edge("order_products", "orders.pid", "products.pid"),
        ],
        templates: vec![],
    }
}

/// Generated CSV files, in schema order.
#[derive(Clone, Debug)]
pub struct SynthData {
    pub schema: Schema,
    pub joins: JoinSchemaFile,
    pub files: Vec<Vec<u8>>,
}

fn to_csv(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::Input(e.to_string()))
}

fn day_string(days: i64) -> String {
    chrono::DateTime::from_timestamp(days * 86_400, 0)
        .expect("in range")
        .format("%Y-%m-%d")
        .to_string()
}

pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    if config.users == 0 || config.products == 0 {
        return Err(Error::Input("users and products must be non-empty".into()));
    }
    let mut rng = StdRng::seed_from_u64(config.seed);

    let n = config.users;
    let users = to_csv(
        &["uid", "age", "score", "segment"],
        (0..n)
            .map(|i| {
                let g0 = phi_inv((i as f64 + 0.5) / n as f64);
                let g1 = next_latent(&mut rng, g0, config.key_rho);
                let g2 = next_latent(&mut rng, g1, config.rho);
                let g3 = next_latent(&mut rng, g2, 0.5);
                let segment = if rng.random::<f64>() < 0.02 {
                    String::new()
                } else {
                    SEGMENTS[level(phi(g3), SEGMENTS.len())].to_string()
                };
                vec![
                    i.to_string(),
                    (18 + level(phi(g1), 60)).to_string(),
                    format!("{:.1}", phi(g2) * 100.0),
                    segment,
                ]
            })
            .collect::<Vec<_>>()
            .into_iter(),
    )?;

    let user_keys = ZipfQuantile::new(config.users, config.zipf);
    let product_keys = ZipfQuantile::new(config.products, config.zipf);
    let orders = to_csv(
        &["oid", "uid", "pid", "qty", "day"],
        (0..config.orders)
            .map(|i| {
                let g0: f64 = StandardNormal.sample(&mut rng);
                let g1 = next_latent(&mut rng, g0, config.key_rho);
                let g2 = next_latent(&mut rng, g1, 0.5);
                let g3 = next_latent(&mut rng, g2, 0.5);
                vec![
                    i.to_string(),
                    user_keys.get(phi(g0)).to_string(),
                    product_keys.get(phi(g2)).to_string(),
                    (1 + level(phi(g1), 20)).to_string(),
                    day_string(DAY0 + level(phi(g3), 365) as i64),
                ]
            })
            .collect::<Vec<_>>()
            .into_iter(),
    )?;

    let n = config.products;
    let products = to_csv(
        &["pid", "price", "rating"],
        (0..n)
            .map(|i| {
                let g0 = phi_inv((i as f64 + 0.5) / n as f64);
                let g1 = next_latent(&mut rng, g0, 0.7);
                let g2 = next_latent(&mut rng, g1, config.rho);
                vec![
                    i.to_string(),
                    format!("{:.2}", phi(g1) * 500.0),
                    (1 + level(phi(g2), 5)).to_string(),
                ]
            })
            .collect::<Vec<_>>()
            .into_iter(),
    )?;

    Ok(SynthData {
        schema: schema(),
        joins: join_schema(),
        files: vec![users, orders, products],
    })
}

impl SynthData {
    pub fn database(&self) -> Result<Database> {
        let joins = JoinSchema::resolve(&self.joins, &self.schema)?;
        ingest_readers(
            &self.schema,
            &joins,
            self.files.iter().map(|f| Cursor::new(f.as_slice())).collect(),
        )
    }

    /// Writes the CSV files plus `schema.json` and `joins.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (rel, bytes) in self.schema.relations.iter().zip(&self.files) {
            let path = dir.join(rel.file_name());
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join("schema.json");
        std::fs::write(&path, serde_json::to_vec_pretty(&self.schema)?).map_err(|e| Error::io(&path, e))?;
        let path = dir.join("joins.json");
        std::fs::write(&path, serde_json::to_vec_pretty(&self.joins)?).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }
}

fn filter(column: &str, op: &str, value: Value) -> FilterRecord {
    FilterRecord {
        column: column.into(),
        op: op.into(),
        value,
    }
}

fn random_range(rng: &mut StdRng, lo: i64, hi: i64) -> (i64, i64) {
    let a = rng.random_range(lo..=hi);
    let b = rng.random_range(lo..=hi);
    (a.min(b), a.max(b))
}

fn user_filter(rng: &mut StdRng, alias: &str) -> FilterRecord {
    match rng.random_range(0..4) {
        0 => {
            let (a, b) = random_range(rng, 18, 77);
            filter(&format!("{alias}.age"), "between", json!([a, b]))
        }
        1 => filter(
            &format!("{alias}.score"),
            "<=",
            json!(rng.random_range(5.0..95.0f64).round()),
        ),
        2 => filter(
            &format!("{alias}.score"),
            ">",
            json!(rng.random_range(5.0..95.0f64).round()),
        ),
        _ => {
            let k = rng.random_range(1..=3);
            let picks: Vec<&str> = SEGMENTS.choose_multiple(rng, k).copied().collect();
            filter(&format!("{alias}.segment"), "in", json!(picks))
        }
    }
}

fn order_filter(rng: &mut StdRng, alias: &str) -> FilterRecord {
    if rng.random_bool(0.5) {
        let (a, b) = random_range(rng, 1, 20);
        filter(&format!("{alias}.qty"), "between", json!([a, b]))
    } else {
        let (a, b) = random_range(rng, 0, 364);
        filter(
            &format!("{alias}.day"),
            "between",
            json!([day_string(DAY0 + a), day_string(DAY0 + b)]),
        )
    }
}

fn product_filter(rng: &mut StdRng, alias: &str) -> FilterRecord {
    if rng.random_bool(0.5) {
        filter(
            &format!("{alias}.price"),
            "<",
            json!(rng.random_range(20.0..480.0f64).round()),
        )
    } else {
        filter(&format!("{alias}.rating"), ">=", json!(rng.random_range(1..=5)))
    }
}

/// Random conjunctive queries over connected sub-chains, each with at least
/// one filter.
pub fn workload(count: usize, seed: u64) -> Vec<QueryRecord> {
    const SHAPES: [&[&str]; 6] = [
        &["users"],
        &["orders"],
        &["products"],
        &["users", "orders"],
        &["orders", "products"],
        &["users", "orders", "products"],
    ];
    let mut rng = StdRng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let shape = *SHAPES.choose(&mut rng).expect("non-empty");
            let relations: Vec<RelationRef> = shape
                .iter()
                .map(|&name| RelationRef {
                    alias: name[..1].to_string(),
                    name: name.into(),
                })
                .collect();
            let mut joins = Vec::new();
            if shape.contains(&"users") && shape.contains(&"orders") {
                joins.push("u.uid=o.uid".to_string());
            }
            if shape.contains(&"orders") && shape.contains(&"products") {
                joins.push("order_products".to_string());
            }
            let mut filters = Vec::new();
            while filters.is_empty() {
                for r in &relations {
                    for _ in 0..2 {
                        if rng.random_bool(0.45) {
                            filters.push(match r.name.as_str() {
                                "users" => user_filter(&mut rng, &r.alias),
                                "orders" => order_filter(&mut rng, &r.alias),
                                _ => product_filter(&mut rng, &r.alias),
                            });
                        }
                    }
                }
            }
            QueryRecord {
                id: format!("q{i:04}"),
                relations,
                joins,
                filters,
                truth: None,
            }
        })
        .collect()
}
