//! CSV ingestion into dictionary-encoded relations.
//!
//! Every raw value is read exactly once: while the file is parsed each column
//! interns its values to provisional ids, and the final order-preserving
//! codes are assigned afterwards by remapping ids. Columns connected by join
//! edges share one dictionary.

use std::collections::HashMap;
use std::hash::Hash;
use std::io::Read;
use std::path::Path;

use rayon::prelude::*;
use sspn_core::table::{CodedColumn, CodedTable};

use crate::catalog::Catalog;
use crate::dictionary::{parse_field, Dictionary, Literal};
use crate::error::{Error, Result};
use crate::schema::{AttrType, ColumnRef, JoinSchema, Schema};

struct Interner<T> {
    ids: HashMap<T, u32>,
    values: Vec<T>,
}

impl<T: Hash + Eq + Clone> Interner<T> {
    fn new() -> Self {
        Self {
            ids: HashMap::new(),
            values: Vec::new(),
        }
    }

    fn intern(&mut self, v: T) -> u32 {
        if let Some(&id) = self.ids.get(&v) {
            return id;
        }
        let id = self.values.len() as u32;
        self.values.push(v.clone());
        self.ids.insert(v, id);
        id
    }
}

enum Values {
    Integer(Interner<i64>),
    /// Bit patterns of normalized floats.
    Float(Interner<u64>),
    Text(Interner<String>),
    Timestamp(Interner<i64>),
}

struct RawColumn {
    values: Values,
    ids: Vec<Option<u32>>,
    reads: u64,
}

impl RawColumn {
    fn new(ty: AttrType) -> Self {
        let values = match ty {
            AttrType::Integer => Values::Integer(Interner::new()),
            AttrType::Float => Values::Float(Interner::new()),
            AttrType::Categorical => Values::Text(Interner::new()),
            AttrType::Timestamp => Values::Timestamp(Interner::new()),
        };
        Self {
            values,
            ids: Vec::new(),
            reads: 0,
        }
    }

    fn push(&mut self, lit: Option<Literal>) {
        let id = lit.map(|lit| match (&mut self.values, lit) {
            (Values::Integer(i), Literal::Integer(x)) => i.intern(x),
            (Values::Float(i), Literal::Float(x)) => i.intern(x.to_bits()),
            (Values::Text(i), Literal::Text(x)) => i.intern(x),
            (Values::Timestamp(i), Literal::Timestamp(x)) => i.intern(x),
            _ => unreachable!("parse_field returns the column type"),
        });
        self.ids.push(id);
    }
}

/// Counters proving the single-pass property.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub rows: Vec<usize>,
    /// Per relation and attribute: raw fields read. A single pass reads
    /// each field once, so this equals the row count.
    pub field_reads: Vec<Vec<u64>>,
}

#[derive(Clone, Debug)]
pub struct Database {
    pub catalog: Catalog,
    pub tables: Vec<CodedTable>,
    pub stats: IngestStats,
}

fn read_relation<R: Read>(schema: &Schema, relation: usize, reader: R) -> Result<Vec<RawColumn>> {
    let rs = &schema.relations[relation];
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = csv.headers()?.clone();
    let mut positions = vec![None; rs.attributes.len()];
    for (i, name) in header.iter().enumerate() {
        let a = rs
            .attribute(name.trim())
            .ok_or_else(|| Error::Schema(format!("unknown column {}.{}", rs.name, name)))?;
        if positions[a].replace(i).is_some() {
            return Err(Error::Schema(format!("column {}.{} appears twice", rs.name, name)));
        }
    }
    if let Some(a) = positions.iter().position(Option::is_none) {
        return Err(Error::Schema(format!(
            "file for {} lacks column {}",
            rs.name, rs.attributes[a].name
        )));
    }
    let positions: Vec<usize> = positions.into_iter().map(|p| p.expect("checked")).collect();
    let mut columns: Vec<RawColumn> = rs.attributes.iter().map(|a| RawColumn::new(a.ty)).collect();
    let mut record = csv::StringRecord::new();
    let mut row = 0;
    while csv.read_record(&mut record)? {
        row += 1;
        for (a, attr) in rs.attributes.iter().enumerate() {
            let field = record.get(positions[a]).unwrap_or("");
            columns[a].reads += 1;
            let lit = if field.is_empty() && attr.nullable {
                None
            } else {
                Some(parse_field(attr.ty, field).map_err(|message| Error::Parse {
                    relation: rs.name.clone(),
                    row,
                    column: attr.name.clone(),
                    message,
                })?)
            };
            columns[a].push(lit);
        }
    }
    Ok(columns)
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Ingests one reader per relation (in schema order).
pub fn ingest_readers<R: Read + Send>(schema: &Schema, joins: &JoinSchema, readers: Vec<R>) -> Result<Database> {
    schema.validate()?;
    if readers.len() != schema.relations.len() {
        return Err(Error::Input(format!(
            "{} data sources for {} relations",
            readers.len(),
            schema.relations.len()
        )));
    }
    let raw: Vec<Vec<RawColumn>> = readers
        .into_par_iter()
        .enumerate()
        .map(|(r, reader)| read_relation(schema, r, reader))
        .collect::<Result<_>>()?;

    // Columns sharing a dictionary: connected through join edges.
    let offsets: Vec<usize> = schema
        .relations
        .iter()
        .scan(0, |acc, r| {
            let o = *acc;
            *acc += r.attributes.len();
            Some(o)
        })
        .collect();
    let flat = |c: ColumnRef| offsets[c.relation] + c.attribute;
    let total: usize = schema.relations.iter().map(|r| r.attributes.len()).sum();
    let mut parent: Vec<usize> = (0..total).collect();
    for e in &joins.edges {
        if schema.attr_type(e.left) != schema.attr_type(e.right) {
            return Err(Error::Schema(format!("edge {} joins incompatible types", e.id)));
        }
        let (a, b) = (find(&mut parent, flat(e.left)), find(&mut parent, flat(e.right)));
        parent[a.max(b)] = a.min(b);
    }
    let mut group_index: HashMap<usize, usize> = HashMap::new();
    let mut members: Vec<Vec<ColumnRef>> = Vec::new();
    let mut column_dict: Vec<Vec<usize>> = Vec::with_capacity(schema.relations.len());
    for (r, rs) in schema.relations.iter().enumerate() {
        let mut per = Vec::with_capacity(rs.attributes.len());
        for a in 0..rs.attributes.len() {
            let root = find(&mut parent, offsets[r] + a);
            let g = *group_index.entry(root).or_insert_with(|| {
                members.push(Vec::new());
                members.len() - 1
            });
            members[g].push(ColumnRef {
                relation: r,
                attribute: a,
            });
            per.push(g);
        }
        column_dict.push(per);
    }

    let dictionaries: Vec<Dictionary> = members
        .par_iter()
        .map(|cols| {
            build_dictionary(
                schema.attr_type(cols[0]),
                cols.iter().map(|c| &raw[c.relation][c.attribute]),
            )
        })
        .collect();

    let field_reads: Vec<Vec<u64>> = raw.iter().map(|cols| cols.iter().map(|c| c.reads).collect()).collect();
    let tables: Vec<CodedTable> = raw
        .into_par_iter()
        .enumerate()
        .map(|(r, cols)| {
            let columns = cols
                .into_iter()
                .enumerate()
                .map(|(a, col)| {
                    let dict = &dictionaries[column_dict[r][a]];
                    let remap = remap(&col.values, dict);
                    let codes = col.ids.iter().map(|id| id.map(|i| remap[i as usize])).collect();
                    CodedColumn::new(codes, dict.len() as u32)
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Ok(CodedTable::new(columns)?)
        })
        .collect::<Result<_>>()?;

    let stats = IngestStats {
        rows: tables.iter().map(|t| t.rows()).collect(),
        field_reads,
    };
    Ok(Database {
        catalog: Catalog {
            schema: schema.clone(),
            joins: joins.clone(),
            dictionaries,
            column_dict,
        },
        tables,
        stats,
    })
}

fn sorted_union<T: Clone + Ord>(parts: impl Iterator<Item = Vec<T>>) -> Vec<T> {
    let mut all: Vec<T> = parts.flatten().collect();
    all.sort();
    all.dedup();
    all
}

fn build_dictionary<'a>(ty: AttrType, cols: impl Iterator<Item = &'a RawColumn>) -> Dictionary {
    let cols: Vec<&RawColumn> = cols.collect();
    match ty {
        AttrType::Integer | AttrType::Timestamp => {
            let v = sorted_union(cols.iter().map(|c| match &c.values {
                Values::Integer(i) | Values::Timestamp(i) => i.values.clone(),
                _ => unreachable!(),
            }));
            if ty == AttrType::Integer {
                Dictionary::Integer(v)
            } else {
                Dictionary::Timestamp(v)
            }
        }
        AttrType::Float => {
            let mut v: Vec<f64> = cols
                .iter()
                .flat_map(|c| match &c.values {
                    Values::Float(i) => i.values.iter().map(|&b| f64::from_bits(b)).collect::<Vec<_>>(),
                    _ => unreachable!(),
                })
                .collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            Dictionary::Float(v)
        }
        AttrType::Categorical => Dictionary::Categorical(sorted_union(cols.iter().map(|c| match &c.values {
            Values::Text(i) => i.values.clone(),
            _ => unreachable!(),
        }))),
    }
}

/// Final code of every provisional id.
fn remap(values: &Values, dict: &Dictionary) -> Vec<u32> {
    let code = |lit: Literal| dict.code_of(&lit).expect("value is in its own dictionary");
    match values {
        Values::Integer(i) => i.values.iter().map(|&x| code(Literal::Integer(x))).collect(),
        Values::Timestamp(i) => i.values.iter().map(|&x| code(Literal::Timestamp(x))).collect(),
        Values::Float(i) => i
            .values
            .iter()
            .map(|&b| code(Literal::Float(f64::from_bits(b))))
            .collect(),
        Values::Text(i) => i.values.iter().map(|x| code(Literal::Text(x.clone()))).collect(),
    }
}

/// Reads `<dir>/<relation file>` for every relation.
pub fn ingest(dir: &Path, schema: &Schema, joins: &JoinSchema) -> Result<Database> {
    let files = schema
        .relations
        .iter()
        .map(|r| {
            let path = dir.join(r.file_name());
            std::fs::File::open(&path)
                .map(std::io::BufReader::new)
                .map_err(|e| Error::io(&path, e))
        })
        .collect::<Result<Vec<_>>>()?;
    ingest_readers(schema, joins, files)
}
