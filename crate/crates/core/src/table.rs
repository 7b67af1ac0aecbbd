//! Dictionary-encoded relations as the learners see them.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// One attribute: dense order-preserving codes `0..domain`, `None` for null.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodedColumn {
    pub codes: Vec<Option<u32>>,
    pub domain: u32,
}

impl CodedColumn {
    pub fn new(codes: Vec<Option<u32>>, domain: u32) -> Result<Self> {
        if let Some(bad) = codes.iter().flatten().find(|&&c| c >= domain) {
            return Err(Error::InvalidConfig(format!(
                "code {bad} outside domain of size {domain}"
            )));
        }
        Ok(Self { codes, domain })
    }

    /// Column with domain `max + 1`.
    pub fn from_codes(codes: Vec<Option<u32>>) -> Self {
        let domain = codes.iter().flatten().max().map_or(0, |m| m + 1);
        Self { codes, domain }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodedTable {
    columns: Vec<CodedColumn>,
    rows: usize,
}

impl CodedTable {
    pub fn new(columns: Vec<CodedColumn>) -> Result<Self> {
        if columns.len() > 64 {
            return Err(Error::TooManyAttributes(columns.len()));
        }
        let rows = columns.first().map_or(0, |c| c.codes.len());
        for c in &columns {
            if c.codes.len() != rows {
                return Err(Error::LengthMismatch(rows, c.codes.len()));
            }
        }
        Ok(Self { columns, rows })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn arity(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, attr: usize) -> &CodedColumn {
        &self.columns[attr]
    }

    pub fn columns(&self) -> &[CodedColumn] {
        &self.columns
    }

    #[inline]
    pub fn value(&self, row: usize, attr: usize) -> Option<u32> {
        self.columns[attr].codes[row]
    }
}
