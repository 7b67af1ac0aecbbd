use crate::dictionary::Dictionary;
use crate::schema::{ColumnRef, JoinSchema, Schema};

/// Everything needed to interpret queries: schema, join edges and the
/// dictionaries of every column.
#[derive(Clone, Debug, PartialEq)]
pub struct Catalog {
    pub schema: Schema,
    pub joins: JoinSchema,
    pub dictionaries: Vec<Dictionary>,
    /// Dictionary index of each relation attribute.
    pub column_dict: Vec<Vec<usize>>,
}

impl Catalog {
    pub fn dictionary(&self, c: ColumnRef) -> &Dictionary {
        &self.dictionaries[self.column_dict[c.relation][c.attribute]]
    }
}
