//! Edge-learning applications.
//!
//! Terminals run [`DataGeneratorApp`], edge nodes run [`TrainingApp`] and the
//! data center runs [`EnsembleAggregatorApp`]. An edge node caches samples,
//! trains one sub-model when it holds enough of them (borrowing from
//! neighbors if it does not) and uploads the model; the data center
//! combines the uploads by soft vote.

mod aggregator;
mod generator;
pub mod payload;
mod source;
mod training;

pub use aggregator::{EnsembleAggregatorApp, EnsembleEvaluation};
pub use generator::DataGeneratorApp;
pub use source::DataSource;
pub use training::{TrainingApp, TrainingConfig, TrainingOutcome};

use crate::net::{AppContext, AppError, NetError, Packet, PacketId};

/// Trace kinds emitted by the learning applications.
pub mod kinds {
    pub const TRAINING_START: &str = "TRAINING_START";
    pub const TRAINING_DONE: &str = "TRAINING_DONE";
    pub const DATA_REQUEST: &str = "DATA_REQUEST";
    pub const MODEL_RESULT_SENT: &str = "MODEL_RESULT_SENT";
    pub const ENSEMBLE_READY: &str = "ENSEMBLE_READY";
    pub const INSUFFICIENT_FALLBACK: &str = "INSUFFICIENT_FALLBACK";
    pub const DUPLICATE_RESULT: &str = "DUPLICATE_RESULT";
    pub const MALFORMED_PACKET: &str = "MALFORMED_PACKET";
    pub const TRAIN_SKIPPED_EMPTY: &str = "TRAIN_SKIPPED_EMPTY";
}

/// A missing route is already traced and counted by the network; the
/// application carries on without the packet.
fn ignore_no_route(result: Result<PacketId, NetError>) -> Result<Option<PacketId>, AppError> {
    match result {
        Ok(id) => Ok(Some(id)),
        Err(NetError::NoRoute { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn malformed(ctx: &mut AppContext<'_>, packet: &Packet, reason: &str) {
    ctx.trace(
        kinds::MALFORMED_PACKET,
        vec![
            ("packet".into(), packet.id.0.into()),
            ("ptype".into(), packet.kind.as_str().into()),
            ("reason".into(), reason.to_owned().into()),
        ],
    );
}
