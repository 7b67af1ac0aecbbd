//! Order-preserving dictionaries from raw attribute values to dense codes.

use std::cmp::Ordering;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde_json::Value;

use crate::schema::AttrType;

/// A raw attribute value.
#[derive(Clone, Debug, PartialEq)]
pub enum Literal {
    Integer(i64),
    Float(f64),
    Text(String),
    /// Microseconds since the Unix epoch.
    Timestamp(i64),
}

/// Sorted distinct values; the code of a value is its position.
#[derive(Clone, Debug, PartialEq)]
pub enum Dictionary {
    Integer(Vec<i64>),
    Float(Vec<f64>),
    Categorical(Vec<String>),
    Timestamp(Vec<i64>),
}

/// `-0.0` and `0.0` are one value.
pub fn normalize_float(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x
    }
}

pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp_micros());
    }
    for fmt in [
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M",
        "%Y-%m-%dT%H:%M",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp_micros());
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp_micros());
    }
    // Bare integers are epoch seconds.
    s.parse::<i64>().ok().and_then(|secs| secs.checked_mul(1_000_000))
}

/// Parses one non-null CSV field.
pub fn parse_field(ty: AttrType, field: &str) -> Result<Literal, String> {
    match ty {
        AttrType::Integer => field
            .trim()
            .parse::<i64>()
            .map(Literal::Integer)
            .map_err(|e| format!("{field:?} is not an integer: {e}")),
        AttrType::Float => {
            let x: f64 = field
                .trim()
                .parse()
                .map_err(|e| format!("{field:?} is not a number: {e}"))?;
            if x.is_nan() {
                return Err("NaN is not a comparable value".into());
            }
            Ok(Literal::Float(normalize_float(x)))
        }
        AttrType::Categorical => Ok(Literal::Text(field.to_string())),
        AttrType::Timestamp => parse_timestamp(field)
            .map(Literal::Timestamp)
            .ok_or_else(|| format!("{field:?} is not a timestamp")),
    }
}

/// Converts a JSON query literal to the attribute's type.
pub fn literal_from_json(ty: AttrType, v: &Value) -> Result<Literal, String> {
    match (ty, v) {
        (AttrType::Integer, Value::Number(n)) => n
            .as_i64()
            .map(Literal::Integer)
            .ok_or_else(|| format!("{n} is not an integer")),
        (AttrType::Float, Value::Number(n)) => n
            .as_f64()
            .map(|x| Literal::Float(normalize_float(x)))
            .ok_or_else(|| format!("{n} is not a number")),
        (AttrType::Timestamp, Value::Number(n)) => n
            .as_i64()
            .and_then(|s| s.checked_mul(1_000_000))
            .map(Literal::Timestamp)
            .ok_or_else(|| format!("{n} is not epoch seconds")),
        (AttrType::Categorical, Value::Number(n)) => Ok(Literal::Text(n.to_string())),
        (_, Value::String(s)) => parse_field(ty, s),
        (_, other) => Err(format!("unsupported literal {other}")),
    }
}

fn search<T, F: Fn(&T) -> Ordering>(values: &[T], cmp: F) -> Result<usize, usize> {
    values.binary_search_by(cmp)
}

impl Dictionary {
    pub fn empty(ty: AttrType) -> Self {
        match ty {
            AttrType::Integer => Dictionary::Integer(Vec::new()),
            AttrType::Float => Dictionary::Float(Vec::new()),
            AttrType::Categorical => Dictionary::Categorical(Vec::new()),
            AttrType::Timestamp => Dictionary::Timestamp(Vec::new()),
        }
    }

    pub fn ty(&self) -> AttrType {
        match self {
            Dictionary::Integer(_) => AttrType::Integer,
            Dictionary::Float(_) => AttrType::Float,
            Dictionary::Categorical(_) => AttrType::Categorical,
            Dictionary::Timestamp(_) => AttrType::Timestamp,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Dictionary::Integer(v) | Dictionary::Timestamp(v) => v.len(),
            Dictionary::Float(v) => v.len(),
            Dictionary::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `Ok(code)` if present, else `Err(insertion point)`; `None` for a
    /// literal of another type.
    fn locate(&self, lit: &Literal) -> Option<Result<usize, usize>> {
        Some(match (self, lit) {
            (Dictionary::Integer(v), Literal::Integer(x)) => search(v, |a| a.cmp(x)),
            (Dictionary::Timestamp(v), Literal::Timestamp(x)) => search(v, |a| a.cmp(x)),
            (Dictionary::Float(v), Literal::Float(x)) => search(v, |a| a.total_cmp(x)),
            (Dictionary::Categorical(v), Literal::Text(x)) => search(v, |a| a.as_str().cmp(x.as_str())),
            _ => return None,
        })
    }

    pub fn code_of(&self, lit: &Literal) -> Option<u32> {
        self.locate(lit)?.ok().map(|c| c as u32)
    }

    /// Number of values strictly below `lit`.
    pub fn lower_bound(&self, lit: &Literal) -> Option<u32> {
        self.locate(lit).map(|r| r.unwrap_or_else(|i| i) as u32)
    }

    /// Number of values at or below `lit`.
    pub fn upper_bound(&self, lit: &Literal) -> Option<u32> {
        self.locate(lit).map(|r| match r {
            Ok(i) => i as u32 + 1,
            Err(i) => i as u32,
        })
    }

    pub fn decode(&self, code: u32) -> Option<Literal> {
        let i = code as usize;
        match self {
            Dictionary::Integer(v) => v.get(i).map(|&x| Literal::Integer(x)),
            Dictionary::Timestamp(v) => v.get(i).map(|&x| Literal::Timestamp(x)),
            Dictionary::Float(v) => v.get(i).map(|&x| Literal::Float(x)),
            Dictionary::Categorical(v) => v.get(i).map(|x| Literal::Text(x.clone())),
        }
    }
}
