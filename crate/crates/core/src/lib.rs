pub mod corpus;
pub mod crm;
pub mod encoder;
pub mod error;
pub mod evaluate;
pub mod exec;
pub mod kv;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod ranker;
pub mod sememe;
pub mod synthetic;
pub mod text;
pub mod tokenizer;
pub mod trainer;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use error::{Error, Result};
pub use exec::Exec;

/// Identity of a quote in a catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuoteId(pub u32);

impl fmt::Display for QuoteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}
