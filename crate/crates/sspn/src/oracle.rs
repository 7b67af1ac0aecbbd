//! Exact join cardinalities for acyclic queries.
//!
//! Filters are applied first; the join tree is then evaluated bottom-up as
//! grouped hash joins, so each vertex contributes one hash table keyed by its
//! parent-edge value and no joined tuple is ever materialized.

use std::collections::HashMap;

use sspn_core::query::Query;
use sspn_core::table::CodedTable;

use crate::error::{Error, Result};
use crate::schema::JoinSchema;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Truth {
    Count(u128),
    /// The work budget ran out before the count finished.
    Skipped,
}

/// Exact cardinality of `query`. `budget` caps the number of filtered rows
/// plus hash-table entries touched; `None` means unlimited.
pub fn cardinality(tables: &[CodedTable], joins: &JoinSchema, query: &Query, budget: Option<u64>) -> Result<Truth> {
    query.graph()?;
    let n = query.vertices.len();
    for v in &query.vertices {
        if v.relation >= tables.len() {
            return Err(Error::Input(format!("relation {} out of range", v.relation)));
        }
    }
    // adjacency: (neighbor, attribute at this vertex, attribute at neighbor)
    let mut adj: Vec<Vec<(usize, usize, usize)>> = vec![Vec::new(); n];
    for e in &query.edges {
        let edge = joins
            .edges
            .get(e.edge.0 as usize)
            .ok_or_else(|| Error::Input(format!("unknown edge {}", e.edge.0)))?;
        adj[e.left].push((e.right, edge.left.attribute, edge.right.attribute));
        adj[e.right].push((e.left, edge.right.attribute, edge.left.attribute));
    }

    let mut work = 0u64;
    let mut charge = |k: u64| -> bool {
        work = work.saturating_add(k);
        budget.is_none_or(|b| work <= b)
    };

    let filtered: Vec<Vec<usize>> = query
        .vertices
        .iter()
        .map(|v| {
            let t = &tables[v.relation];
            (0..t.rows()).filter(|&r| v.predicate.matches_row(t, r)).collect()
        })
        .collect();
    if !charge(filtered.iter().map(|f| f.len() as u64).sum()) {
        return Ok(Truth::Skipped);
    }

    // Post-order from vertex 0.
    let mut parent = vec![usize::MAX; n];
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![0usize];
    let mut seen = vec![false; n];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        order.push(v);
        for &(u, _, _) in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                parent[u] = v;
                stack.push(u);
            }
        }
    }

    // messages[v]: parent-edge value at v -> number of joined subtree tuples
    let mut messages: Vec<HashMap<u32, u128>> = vec![HashMap::new(); n];
    for &v in order.iter().rev() {
        let t = &tables[query.vertices[v].relation];
        let children: Vec<(usize, usize)> = adj[v]
            .iter()
            .filter(|&&(u, _, _)| parent[u] == v)
            .map(|&(u, a, _)| (u, a))
            .collect();
        let up_attr = (v != 0).then(|| {
            adj[v]
                .iter()
                .find(|&&(u, _, _)| u == parent[v])
                .map(|&(_, a, _)| a)
                .expect("tree edge")
        });
        let mut total = 0u128;
        let mut out: HashMap<u32, u128> = HashMap::new();
        'rows: for &r in &filtered[v] {
            let mut count = 1u128;
            for &(u, a) in &children {
                let Some(key) = t.value(r, a) else { continue 'rows };
                match messages[u].get(&key) {
                    Some(&c) => count = count.saturating_mul(c),
                    None => continue 'rows,
                }
            }
            match up_attr {
                None => total = total.saturating_add(count),
                Some(a) => {
                    if let Some(key) = t.value(r, a) {
                        *out.entry(key).or_insert(0) += count;
                    }
                }
            }
        }
        if !charge(out.len() as u64) {
            return Ok(Truth::Skipped);
        }
        for &(u, _) in &children {
            messages[u] = HashMap::new();
        }
        if v == 0 {
            return Ok(Truth::Count(total));
        }
        messages[v] = out;
    }
    unreachable!("vertex 0 is visited last")
}
