//! Relation schemas and declared join edges (JSON documents).

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use sspn_core::model::{IncidentEdge, RelationLayout, Side};
use sspn_core::sketch::{EdgeId, Orientation};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttrType {
    Integer,
    Float,
    Categorical,
    Timestamp,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: AttrType,
    #[serde(default)]
    pub nullable: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSchema {
    pub name: String,
    /// CSV file name relative to the data directory; `<name>.csv` if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    pub attributes: Vec<AttributeSchema>,
}

impl RelationSchema {
    pub fn file_name(&self) -> String {
        self.file.clone().unwrap_or_else(|| format!("{}.csv", self.name))
    }

    pub fn attribute(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub relations: Vec<RelationSchema>,
}

impl Schema {
    pub fn relation(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|r| r.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashMap::new();
        for r in &self.relations {
            if seen.insert(r.name.as_str(), ()).is_some() {
                return Err(Error::Schema(format!("relation {} declared twice", r.name)));
            }
            if r.attributes.is_empty() {
                return Err(Error::Schema(format!("relation {} has no attributes", r.name)));
            }
            if r.attributes.len() > 64 {
                return Err(Error::Schema(format!(
                    "relation {} has more than 64 attributes",
                    r.name
                )));
            }
            let mut names = HashMap::new();
            for a in &r.attributes {
                if names.insert(a.name.as_str(), ()).is_some() {
                    return Err(Error::Schema(format!("{}.{} declared twice", r.name, a.name)));
                }
            }
        }
        Ok(())
    }

    /// Resolves `"relation.attribute"`.
    pub fn column(&self, qualified: &str) -> Result<ColumnRef> {
        let (rel, attr) = qualified
            .split_once('.')
            .ok_or_else(|| Error::Schema(format!("expected relation.attribute, got {qualified:?}")))?;
        let relation = self
            .relation(rel)
            .ok_or_else(|| Error::Schema(format!("unknown relation {rel}")))?;
        let attribute = self.relations[relation]
            .attribute(attr)
            .ok_or_else(|| Error::Schema(format!("unknown column {qualified}")))?;
        Ok(ColumnRef { relation, attribute })
    }

    pub fn column_name(&self, c: ColumnRef) -> String {
        let r = &self.relations[c.relation];
        format!("{}.{}", r.name, r.attributes[c.attribute].name)
    }

    pub fn attr_type(&self, c: ColumnRef) -> AttrType {
        self.relations[c.relation].attributes[c.attribute].ty
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ColumnRef {
    pub relation: usize,
    pub attribute: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeDecl {
    pub id: String,
    /// `"relation.attribute"`.
    pub left: String,
    pub right: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct JoinSchemaFile {
    pub edges: Vec<EdgeDecl>,
    /// Edge-id groups used together by the workload; consulted for
    /// relations with too many incident edges to sketch every subset.
    #[serde(default)]
    pub templates: Vec<Vec<String>>,
}

/// A validated join edge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub id: String,
    pub left: ColumnRef,
    pub right: ColumnRef,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct JoinSchema {
    pub edges: Vec<Edge>,
    /// Edge indices per template.
    pub templates: Vec<Vec<usize>>,
}

impl JoinSchema {
    pub fn resolve(file: &JoinSchemaFile, schema: &Schema) -> Result<Self> {
        let mut edges: Vec<Edge> = Vec::with_capacity(file.edges.len());
        for e in &file.edges {
            if edges.iter().any(|x| x.id == e.id) {
                return Err(Error::Schema(format!("edge {} declared twice", e.id)));
            }
            let left = schema.column(&e.left)?;
            let right = schema.column(&e.right)?;
            let (lt, rt) = (schema.attr_type(left), schema.attr_type(right));
            if lt != rt {
                return Err(Error::Schema(format!(
                    "edge {} joins incompatible types {lt:?} and {rt:?}",
                    e.id
                )));
            }
            edges.push(Edge {
                id: e.id.clone(),
                left,
                right,
            });
        }
        let templates = file
            .templates
            .iter()
            .map(|t| {
                t.iter()
                    .map(|id| {
                        edges
                            .iter()
                            .position(|e| &e.id == id)
                            .ok_or_else(|| Error::Schema(format!("template names unknown edge {id}")))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        Ok(Self { edges, templates })
    }

    pub fn edge(&self, id: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.id == id)
    }

    /// Location-hash orientations of an edge's (left, right) endpoints: the
    /// endpoint whose `(relation, attribute)` names sort first adds its hash,
    /// the other subtracts it. A column joined with itself keeps the left
    /// endpoint positive.
    pub fn orientations(&self, schema: &Schema, edge: usize) -> (Orientation, Orientation) {
        let e = &self.edges[edge];
        let name = |c: ColumnRef| {
            let r = &schema.relations[c.relation];
            (r.name.as_str(), r.attributes[c.attribute].name.as_str())
        };
        if name(e.right) < name(e.left) {
            (Orientation::Negative, Orientation::Positive)
        } else {
            (Orientation::Positive, Orientation::Negative)
        }
    }

    /// Incident edges of a relation and the subsets its sketches cover.
    pub fn layout(&self, schema: &Schema, relation: usize) -> Result<RelationLayout> {
        let mut incident = Vec::new();
        for (i, e) in self.edges.iter().enumerate() {
            let (lo, ro) = self.orientations(schema, i);
            for (side, col, o) in [(Side::Left, e.left, lo), (Side::Right, e.right, ro)] {
                if col.relation == relation {
                    incident.push(IncidentEdge {
                        edge: EdgeId(i as u32),
                        side,
                        attribute: col.attribute,
                        orientation: o,
                    });
                }
            }
        }
        let templates: Vec<u32> = self
            .templates
            .iter()
            .map(|t| {
                incident
                    .iter()
                    .enumerate()
                    .filter(|(_, inc)| t.contains(&(inc.edge.0 as usize)))
                    .fold(0u32, |m, (i, _)| m | 1 << i)
            })
            .filter(|&m| m != 0)
            .collect();
        Ok(RelationLayout::new(
            schema.relations[relation].attributes.len(),
            incident,
            &templates,
        )?)
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_schema(path: &Path) -> Result<Schema> {
    let s: Schema = read_json(path)?;
    s.validate()?;
    Ok(s)
}

pub fn load_join_schema(path: &Path, schema: &Schema) -> Result<JoinSchema> {
    JoinSchema::resolve(&read_json(path)?, schema)
}
