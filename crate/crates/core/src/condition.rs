use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved id of the unconditional branch used by guidance.
pub const NULL_CONDITION_ID: &str = "∅";

/// An abstract editing condition: an id, the registry key of the data
/// distribution it stands for, and the keyword attention is taken for.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Condition {
    pub id: String,
    pub distribution: String,
    pub keyword: String,
}

impl Condition {
    pub fn new(id: impl Into<String>, distribution: impl Into<String>, keyword: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::invalid("condition id must be nonempty"));
        }
        Ok(Self {
            id,
            distribution: distribution.into(),
            keyword: keyword.into(),
        })
    }

    /// Condition whose distribution key equals its id.
    pub fn named(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        Self::new(id.clone(), id.clone(), id)
    }

    pub fn null() -> Self {
        Self {
            id: NULL_CONDITION_ID.to_string(),
            distribution: NULL_CONDITION_ID.to_string(),
            keyword: String::new(),
        }
    }

    pub fn is_null(&self) -> bool {
        self.id == NULL_CONDITION_ID
    }
}
