//! Micromobility gap analysis toolkit.
//!
//! Ingests open micromobility (GBFS-style) and transit (GTFS) feeds, infers
//! e-scooter trips from vehicle-availability snapshots, and quantifies where
//! and when e-scooters compete with or complement station-based bikesharing
//! and public transit:
//!
//! * [`feeds`] — parsers for GBFS status documents, GTFS schedule archives,
//!   bikeshare station feeds, and rail-entrance point files.
//! * [`ingest`] — a polling collector that archives availability snapshots
//!   append-only and replays them for analysis.
//! * [`tripinfer`] — origin–destination trip reconstruction from snapshot
//!   diffs, with plausibility filters and leisure-trip exclusion.
//! * [`supply`] — kernel-density supply surfaces on a fishnet grid and
//!   pairwise supply correlations.
//! * [`router`] — a time-dependent earliest-arrival transit journey planner
//!   with the departure-window median protocol.
//! * [`classify`] — per-trip labels versus transit and bikesharing,
//!   transit-connection detection, and travel-time/cost comparison.
//! * [`pipeline`] — the end-to-end analysis driven by one [`config`] file.

pub mod classify;
pub mod config;
pub mod feeds;
pub mod geo;
pub mod ingest;
pub mod pipeline;
pub mod router;
pub mod supply;
pub mod tripinfer;
pub mod ziparc;

pub use feeds::{BikeStationStatus, IdMode, TransitNetwork, VehicleSnapshot, VendorProfile};
pub use geo::GeoPoint;
pub use tripinfer::InferredTrip;
