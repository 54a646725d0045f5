//! Feed parsers: GBFS-style vehicle status, GTFS schedule archives,
//! bikeshare station status, and rail-entrance point files.
//!
//! Parsers are pure functions over byte streams. They validate invariants up
//! front so downstream analysis can assume well-formed models.

mod entrances;
mod gbfs;
mod gtfs;
mod stations;

pub use entrances::{entrances_from_network, parse_rail_entrances, EntranceParse, RailEntrance};
pub use gbfs::{parse_gbfs_status, BatteryScale, DropReason, GbfsParse};
pub use gtfs::{
    parse_gtfs, parse_gtfs_dir, GtfsParse, GtfsWarnings, LocationType, NetworkIndex, Route,
    ScheduledTrip, ServiceCalendar, Stop, StopTimeEvent, TransitMode, TransitNetwork,
};
pub use stations::parse_station_status;

use serde::{Deserialize, Serialize};

use crate::geo::GeoPoint;

/// How a vendor assigns vehicle identifiers across snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdMode {
    /// One stable ID per physical vehicle; origin–destination trips can be linked.
    Consistent,
    /// IDs rotate between snapshots; only unlinked trip ends can be observed.
    Dynamic,
}

/// Per-vendor feed semantics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VendorProfile {
    pub vendor_id: String,
    pub id_mode: IdMode,
    /// Polling cadence in seconds; feeds update no faster than once a minute.
    pub poll_interval_sec: u32,
}

impl VendorProfile {
    pub const MIN_POLL_INTERVAL_SEC: u32 = 60;

    pub fn new(vendor_id: impl Into<String>, id_mode: IdMode, poll_interval_sec: u32) -> Result<Self, FeedError> {
        if poll_interval_sec < Self::MIN_POLL_INTERVAL_SEC {
            return Err(FeedError::InvalidVendorProfile(format!(
                "poll_interval_sec {poll_interval_sec} below minimum {}",
                Self::MIN_POLL_INTERVAL_SEC
            )));
        }
        Ok(Self { vendor_id: vendor_id.into(), id_mode, poll_interval_sec })
    }
}

/// One vehicle's position and status at one polling instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSnapshot {
    pub vendor_id: String,
    pub vehicle_id: String,
    pub point: GeoPoint,
    /// UTC seconds.
    pub observed_at: i64,
    pub is_reserved: bool,
    pub is_disabled: bool,
    /// Battery charge as a fraction in [0, 1], when the vendor reports it.
    pub battery_pct: Option<f64>,
}

impl VehicleSnapshot {
    /// A vehicle counts toward supply only when it is rentable.
    pub fn is_available(&self) -> bool {
        !self.is_reserved && !self.is_disabled
    }
}

/// A station-based bikeshare dock's status at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BikeStationStatus {
    pub station_id: String,
    pub point: GeoPoint,
    pub bikes_available: u32,
    /// UTC seconds.
    pub observed_at: i64,
}

/// Errors raised by the feed parsers. Per-record problems inside an otherwise
/// well-formed document are tallied, not raised; see each parser's result type.
#[derive(Debug, thiserror::Error)]
pub enum FeedError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("missing required table {0}")]
    MissingTable(String),
    #[error("{kind} {id} referenced from {referrer} does not exist")]
    DanglingReference { kind: &'static str, id: String, referrer: String },
    #[error("invalid vendor profile: {0}")]
    InvalidVendorProfile(String),
    #[error("zip: {0}")]
    Zip(#[from] crate::ziparc::ZipError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Transparently decompresses gzip-wrapped documents; plain bytes pass through.
pub(crate) fn maybe_gunzip(bytes: &[u8]) -> Result<std::borrow::Cow<'_, [u8]>, FeedError> {
    use std::io::Read;
    if bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(|e| FeedError::MalformedDocument(format!("gzip: {e}")))?;
        Ok(std::borrow::Cow::Owned(out))
    } else {
        Ok(std::borrow::Cow::Borrowed(bytes))
    }
}
