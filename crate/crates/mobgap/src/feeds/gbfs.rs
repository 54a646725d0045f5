//! GBFS free-vehicle-status parsing.
//!
//! Vendors publish the same information under different field names and
//! scalings, so the parser normalizes a family of dialects: the vehicle array
//! may be `bikes` or `vehicles` (bare or under `data`), IDs may be `bike_id`,
//! `vehicle_id`, or `id`, and battery level may be a fraction or a percent.

use serde_json::Value;

use super::{maybe_gunzip, FeedError, VehicleSnapshot, VendorProfile};
use crate::geo::GeoPoint;

/// How battery values in a payload were scaled before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatteryScale {
    /// Values were already fractions in [0, 1].
    Fraction,
    /// Values exceeded 1 and were divided by 100.
    Percent,
    /// Every reported value was 0 or 1 exactly; fraction assumed.
    Ambiguous,
    /// No vehicle reported a battery level.
    Absent,
}

/// Why a vehicle record was skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    MissingId,
    MissingCoordinates,
    CoordinatesOutOfRange,
}

/// Parse result: the snapshots plus a tally of skipped records, so that
/// emitted + dropped always equals the number of records in the payload.
#[derive(Debug)]
pub struct GbfsParse {
    pub snapshots: Vec<VehicleSnapshot>,
    pub dropped: Vec<(usize, DropReason)>,
    pub battery_scale: BatteryScale,
    /// The payload's own `last_updated`, when present.
    pub payload_timestamp: Option<i64>,
}

/// Parses a free-vehicle-status document into snapshots stamped `observed_at`.
///
/// Records lacking an ID or coordinates, or with out-of-range coordinates,
/// are dropped and tallied rather than failing the document.
pub fn parse_gbfs_status(
    document: &[u8],
    vendor: &VendorProfile,
    observed_at: i64,
) -> Result<GbfsParse, FeedError> {
    let bytes = maybe_gunzip(document)?;
    let root: Value = serde_json::from_slice(&bytes)
        .map_err(|e| FeedError::MalformedDocument(format!("json: {e}")))?;

    let payload_timestamp = root.get("last_updated").and_then(Value::as_i64);
    let list = vehicle_array(&root).ok_or_else(|| {
        FeedError::MalformedDocument("no `bikes` or `vehicles` array found".into())
    })?;

    // Determine the battery scale from the whole payload before normalizing.
    let raw_batteries: Vec<f64> = list.iter().filter_map(|v| battery_raw(v)).collect();
    let battery_scale = if raw_batteries.is_empty() {
        BatteryScale::Absent
    } else if raw_batteries.iter().any(|&b| b > 1.0) {
        BatteryScale::Percent
    } else if raw_batteries.iter().all(|&b| b == 0.0 || b == 1.0) {
        BatteryScale::Ambiguous
    } else {
        BatteryScale::Fraction
    };

    let mut snapshots = Vec::with_capacity(list.len());
    let mut dropped = Vec::new();
    for (index, rec) in list.iter().enumerate() {
        let Some(vehicle_id) = string_field(rec, &["bike_id", "vehicle_id", "id"]) else {
            dropped.push((index, DropReason::MissingId));
            continue;
        };
        let lat = number_field(rec, &["lat", "latitude"]);
        let lon = number_field(rec, &["lon", "longitude", "lng"]);
        let (Some(lat), Some(lon)) = (lat, lon) else {
            dropped.push((index, DropReason::MissingCoordinates));
            continue;
        };
        let Some(point) = GeoPoint::checked(lat, lon) else {
            dropped.push((index, DropReason::CoordinatesOutOfRange));
            continue;
        };
        let battery_pct = battery_raw(rec).map(|b| match battery_scale {
            BatteryScale::Percent => (b / 100.0).clamp(0.0, 1.0),
            _ => b.clamp(0.0, 1.0),
        });
        snapshots.push(VehicleSnapshot {
            vendor_id: vendor.vendor_id.clone(),
            vehicle_id,
            point,
            observed_at,
            is_reserved: bool_field(rec, "is_reserved"),
            is_disabled: bool_field(rec, "is_disabled"),
            battery_pct,
        });
    }

    Ok(GbfsParse { snapshots, dropped, battery_scale, payload_timestamp })
}

fn vehicle_array(root: &Value) -> Option<&Vec<Value>> {
    for c in [Some(root), root.get("data")].into_iter().flatten() {
        for key in ["bikes", "vehicles"] {
            if let Some(arr) = c.get(key).and_then(Value::as_array) {
                return Some(arr);
            }
        }
    }
    None
}

fn string_field(rec: &Value, names: &[&str]) -> Option<String> {
    names.iter().find_map(|n| {
        rec.get(n).and_then(|v| match v {
            Value::String(s) if !s.is_empty() => Some(s.clone()),
            Value::Number(x) => Some(x.to_string()),
            _ => None,
        })
    })
}

fn number_field(rec: &Value, names: &[&str]) -> Option<f64> {
    names.iter().find_map(|n| rec.get(n).and_then(Value::as_f64))
}

/// Vendors encode booleans as JSON bools or 0/1 numbers.
fn bool_field(rec: &Value, name: &str) -> bool {
    match rec.get(name) {
        Some(Value::Bool(b)) => *b,
        Some(Value::Number(n)) => n.as_f64().is_some_and(|x| x != 0.0),
        _ => false,
    }
}

fn battery_raw(rec: &Value) -> Option<f64> {
    number_field(rec, &["battery_pct", "battery_level", "battery", "current_fuel_percent"])
}
