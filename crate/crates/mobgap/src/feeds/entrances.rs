//! Rail-entrance point files: `entrance_id,lat,lon` CSV, or the Entrance
//! subset of a parsed transit network.

use super::{maybe_gunzip, FeedError, LocationType, TransitNetwork};
use crate::geo::GeoPoint;

#[derive(Debug, Clone, PartialEq)]
pub struct RailEntrance {
    pub entrance_id: String,
    pub point: GeoPoint,
}

#[derive(Debug, Default)]
pub struct EntranceParse {
    pub entrances: Vec<RailEntrance>,
    /// IDs that appeared more than once; the first occurrence wins.
    pub duplicate_ids: Vec<String>,
}

/// Parses a rail-entrance CSV. An empty document yields an empty list, which
/// is valid: downstream connection counts are simply zero.
pub fn parse_rail_entrances(document: &[u8]) -> Result<EntranceParse, FeedError> {
    let bytes = maybe_gunzip(document)?;
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Ok(EntranceParse::default());
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes.as_ref());
    let header = reader
        .headers()
        .map_err(|e| FeedError::MalformedDocument(format!("entrances: {e}")))?
        .clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}') == name)
            .ok_or_else(|| FeedError::MalformedDocument(format!("entrances: missing column {name}")))
    };
    let (c_id, c_lat, c_lon) = (col("entrance_id")?, col("lat")?, col("lon")?);

    let mut out = EntranceParse::default();
    let mut seen = std::collections::BTreeSet::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| FeedError::MalformedDocument(format!("entrances: {e}")))?;
        let id = rec
            .get(c_id)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| FeedError::MalformedDocument("entrances: empty entrance_id".into()))?;
        let lat: f64 = rec
            .get(c_lat)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| FeedError::MalformedDocument(format!("entrances: bad lat for {id}")))?;
        let lon: f64 = rec
            .get(c_lon)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| FeedError::MalformedDocument(format!("entrances: bad lon for {id}")))?;
        let point = GeoPoint::checked(lat, lon)
            .ok_or_else(|| FeedError::MalformedDocument(format!("entrances: coordinates out of range for {id}")))?;
        if seen.insert(id.to_string()) {
            out.entrances.push(RailEntrance { entrance_id: id.to_string(), point });
        } else {
            out.duplicate_ids.push(id.to_string());
        }
    }
    Ok(out)
}

/// Extracts the Entrance-typed stops of a network as rail entrances.
pub fn entrances_from_network(network: &TransitNetwork) -> Vec<RailEntrance> {
    network
        .stops
        .iter()
        .filter(|s| s.location_type == LocationType::Entrance)
        .map(|s| RailEntrance { entrance_id: s.stop_id.clone(), point: s.point })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_rows() {
        let doc = b"entrance_id,lat,lon\nE1,38.9,-77.0\nE2,38.91,-77.01\nE3,38.92,-77.02\n";
        let parsed = parse_rail_entrances(doc).unwrap();
        assert_eq!(parsed.entrances.len(), 3);
        assert!(parsed.duplicate_ids.is_empty());
    }

    #[test]
    fn duplicate_id_keeps_first() {
        let doc = b"entrance_id,lat,lon\nE1,38.9,-77.0\nE1,38.99,-77.09\n";
        let parsed = parse_rail_entrances(doc).unwrap();
        assert_eq!(parsed.entrances.len(), 1);
        assert_eq!(parsed.entrances[0].point.lat, 38.9);
        assert_eq!(parsed.duplicate_ids, vec!["E1".to_string()]);
    }

    #[test]
    fn empty_file_is_empty_list() {
        assert!(parse_rail_entrances(b"").unwrap().entrances.is_empty());
        assert!(parse_rail_entrances(b"  \n").unwrap().entrances.is_empty());
    }

    #[test]
    fn malformed_rejected() {
        assert!(parse_rail_entrances(b"entrance_id,lat,lon\nE1,ninety,-77\n").is_err());
        assert!(parse_rail_entrances(b"id,lat,lon\nE1,38.9,-77\n").is_err());
    }
}
