//! Versioned binary model container.
//!
//! Layout (little-endian): magic `SSPN`, `u32` format version, `u64` payload
//! length, payload, SHA-256 of the payload. The payload is canonical: a
//! loaded model re-serializes to identical bytes.

use std::path::Path;

use sha2::{Digest, Sha256};
use sspn_core::attrs::AttrSet;
use sspn_core::model::{ClusterMethod, IncidentEdge, RelationLayout, RelationModel, Side, TrainConfig};
use sspn_core::sketch::{EdgeId, Orientation, SketchKind, SparseSketch};
use sspn_core::spn::{ProductNode, SelectivityLeaf, SketchLeaf, SparseCounts, SpnNode, SumNode};

use crate::catalog::Catalog;
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::schema::{EdgeDecl, JoinSchema, JoinSchemaFile, Schema};

pub const MAGIC: &[u8; 4] = b"SSPN";
pub const VERSION: u32 = 1;

/// A trained model: catalog, configuration and one network per relation.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub catalog: Catalog,
    pub config: TrainConfig,
    pub relations: Vec<RelationModel>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i64(&mut self, v: i64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn len(&mut self, n: usize) {
        self.u64(n as u64);
    }
    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(Error::Truncated)?;
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    /// A length that must fit in the remaining bytes at `unit` bytes each.
    fn len(&mut self, unit: usize) -> Result<usize> {
        let n = self.u64()?;
        let remaining = (self.buf.len() - self.pos) as u64;
        if n.saturating_mul(unit.max(1) as u64) > remaining {
            return Err(Error::Truncated);
        }
        Ok(n as usize)
    }
    fn str(&mut self) -> Result<String> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Model("invalid UTF-8".into()))
    }
}

fn bad(what: &str) -> Error {
    Error::Model(format!("invalid {what}"))
}

fn write_config(w: &mut Writer, c: &TrainConfig) {
    w.f64(c.rdc_threshold);
    w.f64(c.cluster_fraction);
    w.u8(match c.cluster_method {
        ClusterMethod::HardEm => 0,
        ClusterMethod::KMeans => 1,
    });
    w.len(c.width);
    w.u32(c.copies);
    w.u64(c.seed);
    w.len(c.rdc_features);
    w.f64(c.rdc_scale);
    w.len(c.rdc_sample);
    w.len(c.digest_limit);
    w.len(c.selectivity_width);
}

fn read_config(r: &mut Reader) -> Result<TrainConfig> {
    let c = TrainConfig {
        rdc_threshold: r.f64()?,
        cluster_fraction: r.f64()?,
        cluster_method: match r.u8()? {
            0 => ClusterMethod::HardEm,
            1 => ClusterMethod::KMeans,
            _ => return Err(bad("cluster method")),
        },
        width: r.u64()? as usize,
        copies: r.u32()?,
        seed: r.u64()?,
        rdc_features: r.u64()? as usize,
        rdc_scale: r.f64()?,
        rdc_sample: r.u64()? as usize,
        digest_limit: r.u64()? as usize,
        selectivity_width: r.u64()? as usize,
    };
    c.validate()?;
    Ok(c)
}

fn join_file(joins: &JoinSchema, schema: &Schema) -> JoinSchemaFile {
    JoinSchemaFile {
        edges: joins
            .edges
            .iter()
            .map(|e| EdgeDecl {
                id: e.id.clone(),
                left: schema.column_name(e.left),
                right: schema.column_name(e.right),
            })
            .collect(),
        templates: joins
            .templates
            .iter()
            .map(|t| t.iter().map(|&i| joins.edges[i].id.clone()).collect())
            .collect(),
    }
}

fn write_dictionary(w: &mut Writer, d: &Dictionary) {
    match d {
        Dictionary::Integer(v) | Dictionary::Timestamp(v) => {
            w.u8(if matches!(d, Dictionary::Integer(_)) { 0 } else { 3 });
            w.len(v.len());
            v.iter().for_each(|&x| w.i64(x));
        }
        Dictionary::Float(v) => {
            w.u8(1);
            w.len(v.len());
            v.iter().for_each(|&x| w.f64(x));
        }
        Dictionary::Categorical(v) => {
            w.u8(2);
            w.len(v.len());
            v.iter().for_each(|x| w.str(x));
        }
    }
}

fn read_dictionary(r: &mut Reader) -> Result<Dictionary> {
    let tag = r.u8()?;
    let d = match tag {
        0 | 3 => {
            let n = r.len(8)?;
            let v = (0..n).map(|_| r.i64()).collect::<Result<Vec<_>>>()?;
            if tag == 0 {
                Dictionary::Integer(v)
            } else {
                Dictionary::Timestamp(v)
            }
        }
        1 => {
            let n = r.len(8)?;
            Dictionary::Float((0..n).map(|_| r.f64()).collect::<Result<_>>()?)
        }
        2 => {
            let n = r.len(8)?;
            Dictionary::Categorical((0..n).map(|_| r.str()).collect::<Result<_>>()?)
        }
        _ => return Err(bad("dictionary type")),
    };
    Ok(d)
}

fn write_sparse(w: &mut Writer, kind: SketchKind, copy: u32, mask: u32, s: &SparseSketch) {
    w.u8(kind.index() as u8);
    w.u32(copy);
    w.u32(mask);
    w.len(s.indices.len());
    for (&i, &v) in s.indices.iter().zip(&s.values) {
        w.u32(i);
        w.f64(v);
    }
}

fn read_sparse(r: &mut Reader, kind: SketchKind, copy: u32, mask: u32, width: usize) -> Result<SparseSketch> {
    if r.u8()? as usize != kind.index() || r.u32()? != copy || r.u32()? != mask {
        return Err(bad("sketch record header"));
    }
    let n = r.len(12)?;
    let mut s = SparseSketch::default();
    for _ in 0..n {
        let i = r.u32()?;
        if i as usize >= width || s.indices.last().is_some_and(|&p| p >= i) {
            return Err(bad("sketch counter index"));
        }
        s.indices.push(i);
        s.values.push(r.f64()?);
    }
    Ok(s)
}

fn write_selectivity(w: &mut Writer, l: &SelectivityLeaf) {
    w.u32(l.attribute as u32);
    w.u64(l.rows);
    w.u64(l.nulls);
    w.u32(l.domain);
    w.u32(l.distinct);
    w.u32(l.width);
    w.len(l.levels.len());
    for level in &l.levels {
        w.len(level.indices.len());
        for (&i, &c) in level.indices.iter().zip(&level.counts) {
            w.u32(i);
            w.u64(c);
        }
    }
}

fn read_selectivity(r: &mut Reader, seed: u64) -> Result<SelectivityLeaf> {
    let attribute = r.u32()? as usize;
    let rows = r.u64()?;
    let nulls = r.u64()?;
    let domain = r.u32()?;
    let distinct = r.u32()?;
    let width = r.u32()?;
    let n = r.len(8)?;
    let mut levels = Vec::with_capacity(n);
    for _ in 0..n {
        let m = r.len(12)?;
        let mut c = SparseCounts::default();
        for _ in 0..m {
            c.indices.push(r.u32()?);
            c.counts.push(r.u64()?);
        }
        levels.push(c);
    }
    Ok(SelectivityLeaf::from_parts(
        attribute, rows, nulls, domain, distinct, width, levels, seed,
    )?)
}

struct NodeCodec<'a> {
    layout: &'a RelationLayout,
    config: &'a TrainConfig,
}

impl NodeCodec<'_> {
    fn write(&self, w: &mut Writer, node: &SpnNode) {
        match node {
            SpnNode::Sum(s) => {
                w.u8(0);
                w.u64(s.scope.0);
                w.u64(s.rows);
                w.len(s.children.len());
                s.weights.iter().for_each(|&x| w.f64(x));
                s.children.iter().for_each(|c| self.write(w, c));
            }
            SpnNode::Product(p) => {
                w.u8(1);
                w.u64(p.scope.0);
                w.u64(p.rows);
                w.len(p.children.len());
                p.children.iter().for_each(|c| self.write(w, c));
            }
            SpnNode::Sketch(l) => {
                w.u8(2);
                w.u64(l.attributes.0);
                w.u64(l.rows);
                let ns = self.layout.subsets().len();
                for copy in 0..self.config.copies {
                    for (subset, &mask) in self.layout.subsets().iter().enumerate() {
                        for kind in SketchKind::ALL {
                            write_sparse(w, kind, copy, mask, l.stored(copy, subset, ns, kind));
                        }
                    }
                }
                match &l.digest {
                    None => w.u8(0),
                    Some(d) => {
                        w.u8(1);
                        w.len(d.len());
                        for (key, count) in d {
                            for v in key {
                                match v {
                                    None => w.u8(0),
                                    Some(c) => {
                                        w.u8(1);
                                        w.u32(*c);
                                    }
                                }
                            }
                            w.u64(*count);
                        }
                    }
                }
                w.len(l.selectivity.len());
                l.selectivity.iter().for_each(|s| write_selectivity(w, s));
            }
            SpnNode::Selectivity(l) => {
                w.u8(3);
                write_selectivity(w, l);
            }
        }
    }

    fn read(&self, r: &mut Reader, depth: usize) -> Result<SpnNode> {
        if depth > 10_000 {
            return Err(bad("network depth"));
        }
        Ok(match r.u8()? {
            0 => {
                let scope = AttrSet(r.u64()?);
                let rows = r.u64()?;
                let n = r.len(8)?;
                let weights = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                let children = (0..n).map(|_| self.read(r, depth + 1)).collect::<Result<_>>()?;
                SpnNode::Sum(SumNode {
                    scope,
                    rows,
                    weights,
                    children,
                })
            }
            1 => {
                let scope = AttrSet(r.u64()?);
                let rows = r.u64()?;
                let n = r.len(1)?;
                let children = (0..n).map(|_| self.read(r, depth + 1)).collect::<Result<_>>()?;
                SpnNode::Product(ProductNode { scope, rows, children })
            }
            2 => {
                let attributes = AttrSet(r.u64()?);
                let rows = r.u64()?;
                let ns = self.layout.subsets().len();
                let mut sketches = Vec::with_capacity(self.config.copies as usize * ns);
                for copy in 0..self.config.copies {
                    for &mask in self.layout.subsets() {
                        let mut triple: [SparseSketch; 3] = Default::default();
                        for kind in SketchKind::ALL {
                            triple[kind.index()] = read_sparse(r, kind, copy, mask, self.config.width)?;
                        }
                        sketches.push(triple);
                    }
                }
                let digest = match r.u8()? {
                    0 => None,
                    1 => {
                        let n = r.len(9)?;
                        let arity = attributes.len();
                        let mut d = Vec::with_capacity(n);
                        for _ in 0..n {
                            let key = (0..arity)
                                .map(|_| match r.u8()? {
                                    0 => Ok(None),
                                    1 => Ok(Some(r.u32()?)),
                                    _ => Err(bad("digest value")),
                                })
                                .collect::<Result<Vec<_>>>()?;
                            d.push((key, r.u64()?));
                        }
                        Some(d)
                    }
                    _ => return Err(bad("digest flag")),
                };
                let n = r.len(1)?;
                let selectivity = (0..n)
                    .map(|_| read_selectivity(r, self.config.seed))
                    .collect::<Result<_>>()?;
                SpnNode::Sketch(SketchLeaf {
                    attributes,
                    rows,
                    sketches,
                    digest,
                    selectivity,
                })
            }
            3 => SpnNode::Selectivity(read_selectivity(r, self.config.seed)?),
            _ => return Err(bad("node tag")),
        })
    }
}

fn write_relation(w: &mut Writer, m: &RelationModel) {
    let layout = &m.layout;
    w.u32(layout.arity() as u32);
    w.len(layout.incident().len());
    for e in layout.incident() {
        w.u32(e.edge.0);
        w.u8(match e.side {
            Side::Left => 0,
            Side::Right => 1,
        });
        w.u32(e.attribute as u32);
        w.u8(match e.orientation {
            Orientation::Positive => 0,
            Orientation::Negative => 1,
        });
    }
    w.len(layout.subsets().len());
    layout.subsets().iter().for_each(|&s| w.u32(s));
    m.domains.iter().for_each(|&d| w.u32(d));
    w.u64(m.rows);
    NodeCodec {
        layout,
        config: &m.config,
    }
    .write(w, &m.root);
    let ns = layout.subsets().len();
    for copy in 0..m.config.copies {
        for (subset, &mask) in layout.subsets().iter().enumerate() {
            write_sparse(
                w,
                SketchKind::Degree,
                copy,
                mask,
                &m.root_degree[copy as usize * ns + subset],
            );
        }
    }
}

fn read_relation(r: &mut Reader, config: &TrainConfig) -> Result<RelationModel> {
    let arity = r.u32()? as usize;
    let n = r.len(10)?;
    let incident = (0..n)
        .map(|_| {
            Ok(IncidentEdge {
                edge: EdgeId(r.u32()?),
                side: match r.u8()? {
                    0 => Side::Left,
                    1 => Side::Right,
                    _ => return Err(bad("edge side")),
                },
                attribute: r.u32()? as usize,
                orientation: match r.u8()? {
                    0 => Orientation::Positive,
                    1 => Orientation::Negative,
                    _ => return Err(bad("orientation")),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ns = r.len(4)?;
    let subsets = (0..ns).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let layout = RelationLayout::from_parts(arity, incident, subsets)?;
    let domains = (0..arity).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let rows = r.u64()?;
    let root = NodeCodec {
        layout: &layout,
        config,
    }
    .read(r, 0)?;
    let mut root_degree = Vec::with_capacity(config.copies as usize * ns);
    for copy in 0..config.copies {
        for &mask in layout.subsets() {
            root_degree.push(read_sparse(r, SketchKind::Degree, copy, mask, config.width)?);
        }
    }
    Ok(RelationModel::from_parts(
        config.clone(),
        layout,
        domains,
        rows,
        root,
        root_degree,
    )?)
}

impl Model {
    fn payload(&self) -> Result<Vec<u8>> {
        let mut w = Writer(Vec::new());
        write_config(&mut w, &self.config);
        let schema = &self.catalog.schema;
        w.str(&serde_json::to_string(schema)?);
        w.str(&serde_json::to_string(&join_file(&self.catalog.joins, schema))?);
        w.len(self.catalog.dictionaries.len());
        self.catalog
            .dictionaries
            .iter()
            .for_each(|d| write_dictionary(&mut w, d));
        for per in &self.catalog.column_dict {
            per.iter().for_each(|&i| w.u32(i as u32));
        }
        w.len(self.relations.len());
        self.relations.iter().for_each(|m| write_relation(&mut w, m));
        Ok(w.0)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let payload = self.payload()?;
        let mut out = Vec::with_capacity(payload.len() + 48);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        out.extend_from_slice(&Sha256::digest(&payload));
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Model("not an SSPN model file".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Version {
                found: version,
                expected: VERSION,
            });
        }
        let len = r.u64()? as usize;
        let payload = r.take(len)?;
        let sum = r.take(32)?;
        if r.pos != bytes.len() {
            return Err(Error::Model("trailing bytes".into()));
        }
        if Sha256::digest(payload).as_slice() != sum {
            return Err(Error::Checksum);
        }
        Self::parse_payload(payload)
    }

    fn parse_payload(payload: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: payload, pos: 0 };
        let config = read_config(&mut r)?;
        let schema: Schema = serde_json::from_str(&r.str()?)?;
        schema.validate()?;
        let joins = JoinSchema::resolve(&serde_json::from_str(&r.str()?)?, &schema)?;
        let nd = r.len(1)?;
        let dictionaries = (0..nd).map(|_| read_dictionary(&mut r)).collect::<Result<Vec<_>>>()?;
        let column_dict = schema
            .relations
            .iter()
            .map(|rel| {
                (0..rel.attributes.len())
                    .map(|_| {
                        let i = r.u32()? as usize;
                        if i >= dictionaries.len() {
                            return Err(bad("dictionary index"));
                        }
                        Ok(i)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let nr = r.len(1)?;
        if nr != schema.relations.len() {
            return Err(bad("relation count"));
        }
        let relations = (0..nr)
            .map(|_| read_relation(&mut r, &config))
            .collect::<Result<Vec<_>>>()?;
        if r.pos != payload.len() {
            return Err(Error::Model("unparsed payload bytes".into()));
        }
        Ok(Self {
            catalog: Catalog {
                schema,
                joins,
                dictionaries,
                column_dict,
            },
            config,
            relations,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Hex SHA-256 of a serialized model file.
pub fn checksum(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
