//! Synthetic tasks, label oracles, dataset protocols and associative
//! baselines for probing whether sequence models learn identity-independent
//! rules.

pub mod baselines;
pub mod datagen;
pub mod error;
pub mod metrics;
pub mod tasks;
pub mod token;

pub use datagen::{Dataset, Sample};
pub use error::{DataError, TaskError};
pub use metrics::{ClassTally, Metrics};
pub use tasks::{TaskClass, TaskKind};
pub use token::{special, TokenId, TokenTable, VocabName, Vocabulary};
