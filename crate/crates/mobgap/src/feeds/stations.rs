//! Bikeshare station status parsing (GBFS station feeds, combined shape).

use serde_json::Value;

use super::{maybe_gunzip, BikeStationStatus, FeedError};
use crate::geo::GeoPoint;

/// Parses a station-status document into per-station availability records.
///
/// Accepts a `stations` array either bare or under `data`, with each record
/// carrying `station_id` (or `id`), `lat`, `lon`, and `num_bikes_available`
/// (or `bikes_available`). Records missing any of those are skipped and
/// returned in the drop tally.
pub fn parse_station_status(
    document: &[u8],
    observed_at: i64,
) -> Result<(Vec<BikeStationStatus>, usize), FeedError> {
    let bytes = maybe_gunzip(document)?;
    let root: Value = serde_json::from_slice(&bytes)
        .map_err(|e| FeedError::MalformedDocument(format!("json: {e}")))?;
    let list = [&root, root.get("data").unwrap_or(&Value::Null)]
        .into_iter()
        .find_map(|c| c.get("stations").and_then(Value::as_array))
        .ok_or_else(|| FeedError::MalformedDocument("no `stations` array found".into()))?;

    let mut stations = Vec::with_capacity(list.len());
    let mut dropped = 0;
    for rec in list {
        let id = ["station_id", "id"].iter().find_map(|k| rec.get(k)).and_then(|v| match v {
            Value::String(s) if !s.is_empty() => Some(s.clone()),
            Value::Number(n) => Some(n.to_string()),
            _ => None,
        });
        let lat = rec.get("lat").and_then(Value::as_f64);
        let lon = rec.get("lon").and_then(Value::as_f64);
        let bikes = ["num_bikes_available", "bikes_available"]
            .iter()
            .find_map(|k| rec.get(k))
            .and_then(Value::as_u64);
        match (id, lat.zip(lon).and_then(|(la, lo)| GeoPoint::checked(la, lo)), bikes) {
            (Some(station_id), Some(point), Some(bikes_available)) => stations.push(BikeStationStatus {
                station_id,
                point,
                bikes_available: bikes_available as u32,
                observed_at: rec.get("observed_at").and_then(Value::as_i64).unwrap_or(observed_at),
            }),
            _ => dropped += 1,
        }
    }
    Ok((stations, dropped))
}
