//! Snapshot collection: a polling loop that archives vehicle availability
//! append-only, plus replay and point-in-time availability queries.

mod archive;
mod poller;

pub use archive::{Replay, SnapshotArchive};
pub use poller::{
    run_poller, Clock, EndpointStats, Fetcher, LocatorFetcher, PollEndpoint, PollPlan, PollStats,
    SimClock, SystemClock,
};

use crate::feeds::FeedError;

/// Default staleness horizon for availability queries: the slowest vendor
/// update cadence observed in the wild is ten minutes.
pub const DEFAULT_STALENESS_HORIZON_SEC: i64 = 600;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    /// Failure to persist a snapshot batch; fatal for a polling run.
    #[error("archive write failed: {0}")]
    ArchiveWrite(#[source] std::io::Error),
    #[error("archive read failed: {0}")]
    ArchiveRead(#[source] std::io::Error),
    #[error("corrupt archive segment {path} at offset {offset}")]
    CorruptSegment { path: String, offset: u64 },
    #[error("unknown vendor {0}")]
    UnknownVendor(String),
    #[error("invalid window: start {start} after end {end}")]
    InvalidWindow { start: i64, end: i64 },
    #[error("no coverage: instant {instant} precedes first record {earliest}")]
    NoCoverage { instant: i64, earliest: i64 },
    #[error(transparent)]
    Feed(#[from] FeedError),
}
