#![allow(dead_code)]

use std::io::Cursor;

use sspn::ingest::{ingest_readers, Database};
use sspn::schema::{AttrType, AttributeSchema, EdgeDecl, JoinSchema, JoinSchemaFile, RelationSchema, Schema};
use sspn::synth::{self, SynthConfig};
use sspn::workload::{FilterRecord, QueryRecord, RelationRef};

/// (name, columns, rows) of an all-integer relation.
pub type IntRelation<'a> = (&'a str, &'a [&'a str], Vec<Vec<i64>>);

/// Integer relations ingested from CSV.
pub fn int_db(rels: &[IntRelation], edges: &[(&str, &str, &str)]) -> Database {
    let schema = Schema {
        relations: rels
            .iter()
            .map(|(name, cols, _)| RelationSchema {
                name: name.to_string(),
                file: None,
                attributes: cols
                    .iter()
                    .map(|c| AttributeSchema {
                        name: c.to_string(),
                        ty: AttrType::Integer,
                        nullable: false,
                    })
                    .collect(),
            })
            .collect(),
    };
    let file = JoinSchemaFile {
        edges: edges
            .iter()
            .map(|(id, l, r)| EdgeDecl {
                id: id.to_string(),
                left: l.to_string(),
                right: r.to_string(),
            })
            .collect(),
        templates: vec![],
    };
    let joins = JoinSchema::resolve(&file, &schema).unwrap();
    let texts: Vec<String> = rels
        .iter()
        .map(|(_, cols, rows)| {
            let mut s = cols.join(",") + "\n";
            for r in rows {
                s += &r.iter().map(i64::to_string).collect::<Vec<_>>().join(",");
                s.push('\n');
            }
            s
        })
        .collect();
    ingest_readers(
        &schema,
        &joins,
        texts.iter().map(|t| Cursor::new(t.as_bytes())).collect(),
    )
    .unwrap()
}

pub fn record(id: &str, rels: &[(&str, &str)], joins: &[&str], filters: Vec<FilterRecord>) -> QueryRecord {
    QueryRecord {
        id: id.into(),
        relations: rels
            .iter()
            .map(|(a, n)| RelationRef {
                alias: a.to_string(),
                name: n.to_string(),
            })
            .collect(),
        joins: joins.iter().map(|s| s.to_string()).collect(),
        filters,
        truth: None,
    }
}

pub fn filter(column: &str, op: &str, value: serde_json::Value) -> FilterRecord {
    FilterRecord {
        column: column.into(),
        op: op.into(),
        value,
    }
}

pub fn small_synth(seed: u64) -> Database {
    synth::generate(&SynthConfig {
        users: 300,
        orders: 1500,
        products: 80,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
    .database()
    .unwrap()
}
