//! Query files: one JSON object per line.
//!
//! ```json
//! {"id": "q1",
//!  "relations": [{"alias": "t", "name": "title"}, {"alias": "mc", "name": "movie_companies"}],
//!  "joins": ["t.id=mc.movie_id"],
//!  "filters": [{"column": "t.year", "op": "between", "value": [1990, 2000]}],
//!  "truth": 1234}
//! ```
//!
//! Joins name a declared edge either by id or as `alias.attr=alias.attr`.
//! Filter operators are `=`, `<`, `<=`, `>`, `>=`, `between` (two-element
//! array), `in` (array) and `or` (array of nested `{op, value}` objects).
//! Filters on one column are intersected.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sspn_core::predicate::{Condition, Predicate};
use sspn_core::query::{Query, QueryEdge, QueryVertex};
use sspn_core::sketch::EdgeId;

use crate::catalog::Catalog;
use crate::dictionary::{literal_from_json, Dictionary};
use crate::error::{Error, Result};
use crate::schema::ColumnRef;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationRef {
    pub alias: String,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterRecord {
    pub column: String,
    pub op: String,
    #[serde(default)]
    pub value: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub id: String,
    pub relations: Vec<RelationRef>,
    #[serde(default)]
    pub joins: Vec<String>,
    #[serde(default)]
    pub filters: Vec<FilterRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<f64>,
}

/// A validated query with literals translated to dictionary codes.
#[derive(Clone, Debug, PartialEq)]
pub struct QuerySpec {
    pub id: String,
    pub aliases: Vec<String>,
    pub query: Query,
    pub truth: Option<f64>,
}

/// Sorted, disjoint inclusive code ranges.
type Ranges = Vec<(u32, u32)>;

fn normalize(mut r: Ranges) -> Ranges {
    r.retain(|&(lo, hi)| lo <= hi);
    r.sort_unstable();
    let mut out: Ranges = Vec::with_capacity(r.len());
    for (lo, hi) in r {
        match out.last_mut() {
            Some(last) if lo <= last.1.saturating_add(1) => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

fn intersect(a: &Ranges, b: &Ranges) -> Ranges {
    let mut out = Vec::new();
    for &(alo, ahi) in a {
        for &(blo, bhi) in b {
            let (lo, hi) = (alo.max(blo), ahi.min(bhi));
            if lo <= hi {
                out.push((lo, hi));
            }
        }
    }
    normalize(out)
}

fn filter_ranges(dict: &Dictionary, op: &str, value: &Value) -> std::result::Result<Ranges, String> {
    let n = dict.len() as u32;
    let lit = |v: &Value| literal_from_json(dict.ty(), v);
    let upto = |end: u32| if end == 0 { vec![] } else { vec![(0, end - 1)] };
    let from = |start: u32| if start >= n { vec![] } else { vec![(start, n - 1)] };
    let bound = |b: Option<u32>| b.ok_or_else(|| "literal type mismatch".to_string());
    Ok(match op {
        "=" | "==" => dict.code_of(&lit(value)?).map_or(vec![], |c| vec![(c, c)]),
        "<" => upto(bound(dict.lower_bound(&lit(value)?))?),
        "<=" => upto(bound(dict.upper_bound(&lit(value)?))?),
        ">" => from(bound(dict.upper_bound(&lit(value)?))?),
        ">=" => from(bound(dict.lower_bound(&lit(value)?))?),
        "between" => {
            let [lo, hi] = value
                .as_array()
                .and_then(|a| <&[Value; 2]>::try_from(a.as_slice()).ok())
                .ok_or("between expects [low, high]")?;
            let start = bound(dict.lower_bound(&lit(lo)?))?;
            let end = bound(dict.upper_bound(&lit(hi)?))?;
            if start < end {
                vec![(start, end - 1)]
            } else {
                vec![]
            }
        }
        "in" => {
            let items = value.as_array().ok_or("in expects an array")?;
            let mut out = Vec::new();
            for v in items {
                if let Some(c) = dict.code_of(&lit(v)?) {
                    out.push((c, c));
                }
            }
            normalize(out)
        }
        "or" => {
            let items = value.as_array().ok_or("or expects an array of {op, value}")?;
            let mut out = Vec::new();
            for item in items {
                let op = item.get("op").and_then(Value::as_str).ok_or("or item lacks op")?;
                out.extend(filter_ranges(dict, op, item.get("value").unwrap_or(&Value::Null))?);
            }
            normalize(out)
        }
        other => return Err(format!("unsupported operator {other:?}")),
    })
}

fn conditions(ranges: &Ranges) -> Vec<Condition> {
    if ranges.is_empty() {
        return vec![Condition::Set(vec![])];
    }
    ranges
        .iter()
        .map(|&(lo, hi)| {
            if lo == hi {
                Condition::Equal(lo)
            } else {
                Condition::Range { lo, hi }
            }
        })
        .collect()
}

impl QuerySpec {
    pub fn parse(line: &str, catalog: &Catalog) -> Result<Self> {
        let record: QueryRecord = serde_json::from_str(line)?;
        Self::from_record(&record, catalog)
    }

    pub fn from_record(record: &QueryRecord, catalog: &Catalog) -> Result<Self> {
        let id = record.id.as_str();
        let err = |m: String| Error::query(id, m);
        let schema = &catalog.schema;
        if record.relations.is_empty() {
            return Err(err("no relations".into()));
        }
        let mut aliases: Vec<String> = Vec::new();
        let mut vertices: Vec<QueryVertex> = Vec::new();
        for r in &record.relations {
            if aliases.contains(&r.alias) {
                return Err(err(format!("alias {} used twice", r.alias)));
            }
            let relation = schema
                .relation(&r.name)
                .ok_or_else(|| err(format!("unknown relation {}", r.name)))?;
            aliases.push(r.alias.clone());
            vertices.push(QueryVertex {
                relation,
                predicate: Predicate::new(),
            });
        }
        let column = |qualified: &str| -> Result<(usize, usize)> {
            let (alias, attr) = qualified
                .trim()
                .split_once('.')
                .ok_or_else(|| err(format!("expected alias.attribute, got {qualified:?}")))?;
            let v = aliases
                .iter()
                .position(|a| a == alias)
                .ok_or_else(|| err(format!("unknown alias {alias}")))?;
            let a = schema.relations[vertices[v].relation]
                .attribute(attr)
                .ok_or_else(|| err(format!("unknown attribute {qualified}")))?;
            Ok((v, a))
        };

        let mut edges = Vec::new();
        for j in &record.joins {
            let (index, left, right) = if let Some((l, r)) = j.split_once('=') {
                let (lv, la) = column(l)?;
                let (rv, ra) = column(r)?;
                let lc = ColumnRef {
                    relation: vertices[lv].relation,
                    attribute: la,
                };
                let rc = ColumnRef {
                    relation: vertices[rv].relation,
                    attribute: ra,
                };
                let found = catalog.joins.edges.iter().enumerate().find_map(|(i, e)| {
                    if e.left == lc && e.right == rc {
                        Some((i, lv, rv))
                    } else if e.left == rc && e.right == lc {
                        Some((i, rv, lv))
                    } else {
                        None
                    }
                });
                found.ok_or_else(|| err(format!("no declared edge for {j}")))?
            } else {
                let i = catalog
                    .joins
                    .edge(j.trim())
                    .ok_or_else(|| err(format!("unknown edge {j}")))?;
                let e = &catalog.joins.edges[i];
                let unique = |rel: usize| -> Result<usize> {
                    let hits: Vec<usize> = (0..vertices.len()).filter(|&v| vertices[v].relation == rel).collect();
                    match hits.as_slice() {
                        [v] => Ok(*v),
                        _ => Err(err(format!(
                            "edge {j} is ambiguous or absent here; use alias.attr=alias.attr"
                        ))),
                    }
                };
                if e.left.relation == e.right.relation {
                    return Err(err(format!(
                        "edge {j} joins a relation with itself; use alias.attr=alias.attr"
                    )));
                }
                (i, unique(e.left.relation)?, unique(e.right.relation)?)
            };
            edges.push(QueryEdge {
                edge: EdgeId(index as u32),
                left,
                right,
            });
        }

        let mut by_column: BTreeMap<(usize, usize), Ranges> = BTreeMap::new();
        for f in &record.filters {
            let (v, a) = column(&f.column)?;
            let dict = catalog.dictionary(ColumnRef {
                relation: vertices[v].relation,
                attribute: a,
            });
            let ranges = filter_ranges(dict, &f.op, &f.value).map_err(|m| err(format!("{}: {m}", f.column)))?;
            by_column
                .entry((v, a))
                .and_modify(|r| *r = intersect(r, &ranges))
                .or_insert(ranges);
        }
        for ((v, a), ranges) in by_column {
            for c in conditions(&ranges) {
                vertices[v].predicate.push(a, c);
            }
        }

        let query = Query { vertices, edges };
        query.graph().map_err(|e| err(e.to_string()))?;
        Ok(Self {
            id: record.id.clone(),
            aliases,
            query,
            truth: record.truth,
        })
    }
}

/// Reads a query file, skipping blank lines.
pub fn read_records(path: &Path) -> Result<Vec<QueryRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
