//! Analytics over the per-instance prediction history of a classifier
//! recorded across training epochs.
//!
//! * [`model`]: validated immutable runs, epoch ranges and class selections
//! * [`ingest`]: the run file format and a content-addressed run store
//! * [`metrics`]: misclassification, variability and frequency per instance
//! * [`flow`]: epoch-to-epoch flow matrices, bin distributions, glyphs and traces
//! * [`table`]: the filterable, sortable, groupable instance table
//! * [`fixtures`]: deterministic example and synthetic runs
//!
//! Epochs are 0-based in the API and 1-based in every serialized form.

pub mod error;
pub mod fixtures;
pub mod flow;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod table;

pub use error::QueryError;
pub use model::{
    bin_of, BinId, BinLayout, ClassId, ClassSelection, EpochRange, InstanceRecord, TrainingRun,
    ValidationError,
};

/// Serialized (1-based) epoch number of a 0-based epoch index.
pub fn display_epoch(epoch: usize) -> usize {
    epoch + 1
}

pub(crate) mod epoch_serde {
    use serde::Serializer;

    pub fn one_based<S: Serializer>(epoch: &usize, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(crate::display_epoch(*epoch) as u64)
    }
}
