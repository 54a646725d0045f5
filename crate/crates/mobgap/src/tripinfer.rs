//! E-scooter trip reconstruction from availability snapshot streams.
//!
//! A rentable vehicle that vanishes from the feed and later returns somewhere
//! else was ridden (or moved by the operator). For vendors with consistent
//! vehicle IDs the vanish/return pair links into an origin–destination trip;
//! for vendors that rotate IDs only unlinked appearance/disappearance events
//! can be observed, and no linking is attempted.

use serde::{Deserialize, Serialize};

use crate::feeds::{IdMode, VehicleSnapshot, VendorProfile};
use crate::geo::{GeoPoint, Polygon};

/// An origin–destination trip reconstructed from snapshot diffs.
///
/// `start_time` is the poll instant at which the vehicle was first missing,
/// `end_time` the instant it reappeared. Distance and speed derive from the
/// endpoints since route traces are unavailable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferredTrip {
    pub vendor_id: String,
    pub vehicle_id: String,
    pub origin: GeoPoint,
    pub destination: GeoPoint,
    /// UTC seconds.
    pub start_time: i64,
    /// UTC seconds; always after `start_time`.
    pub end_time: i64,
    pub linked: bool,
}

impl InferredTrip {
    /// Great-circle distance origin to destination, miles.
    pub fn distance_mi(&self) -> f64 {
        self.origin.haversine_mi(&self.destination)
    }

    pub fn duration_min(&self) -> f64 {
        (self.end_time - self.start_time) as f64 / 60.0
    }

    pub fn avg_speed_mph(&self) -> f64 {
        self.distance_mi() / (self.duration_min() / 60.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Appearance,
    Disappearance,
}

/// An unlinked trip end observed for a dynamic-ID vendor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlinkedEvent {
    pub vendor_id: String,
    pub kind: EventKind,
    pub point: GeoPoint,
    /// UTC seconds.
    pub time: i64,
}

/// A vanish/return pair attributed to operator rebalancing or recharging
/// rather than a rider.
#[derive(Debug, Clone, PartialEq)]
pub struct SuppressedMove {
    pub vehicle_id: String,
    pub start_time: i64,
    pub end_time: i64,
    pub reason: SuppressReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuppressReason {
    /// Battery rose by more than the relocation threshold across the gap.
    BatteryJump,
    /// The vehicle was gone longer than any plausible ride.
    GapTooLong,
}

/// Knobs for separating rider trips from operator moves. The paper notes the
/// confound but gives no rule; these thresholds are explicit and configurable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferOptions {
    pub suppress_relocations: bool,
    /// Battery increase (fraction of full charge) that marks a recharge.
    pub relocation_battery_jump: f64,
    /// Absence longer than this is an operator move, seconds.
    pub relocation_max_gap_sec: i64,
}

impl Default for InferOptions {
    fn default() -> Self {
        Self {
            suppress_relocations: true,
            relocation_battery_jump: 0.15,
            relocation_max_gap_sec: 6 * 3600,
        }
    }
}

#[derive(Debug, Default)]
pub struct Inference {
    pub trips: Vec<InferredTrip>,
    pub events: Vec<UnlinkedEvent>,
    pub suppressed: Vec<SuppressedMove>,
}

#[derive(Debug, thiserror::Error)]
pub enum InferError {
    #[error("stream not time-ordered at observed_at {at}")]
    UnsortedStream { at: i64 },
    #[error("stream mixes vendors: expected {expected}, found {found}")]
    MixedVendors { expected: String, found: String },
}

/// Reconstructs trips (consistent-ID vendors) or unlinked events (dynamic-ID
/// vendors) from a time-ordered single-vendor snapshot stream.
///
/// Snapshots sharing an `observed_at` form one polling cycle. A vehicle is
/// treated as present in a cycle only while rentable; a disappearance with no
/// reappearance by stream end emits nothing.
pub fn infer_trips(
    stream: &[VehicleSnapshot],
    vendor: &VendorProfile,
    options: &InferOptions,
) -> Result<Inference, InferError> {
    use std::collections::BTreeMap;

    for pair in stream.windows(2) {
        if pair[1].observed_at < pair[0].observed_at {
            return Err(InferError::UnsortedStream { at: pair[1].observed_at });
        }
    }
    if let Some(bad) = stream.iter().find(|s| s.vendor_id != vendor.vendor_id) {
        return Err(InferError::MixedVendors {
            expected: vendor.vendor_id.clone(),
            found: bad.vendor_id.clone(),
        });
    }

    let mut out = Inference::default();
    // last snapshot at which each vehicle was present (rentable)
    let mut presence: BTreeMap<&str, &VehicleSnapshot> = BTreeMap::new();
    // vehicles currently missing: (last sighting, first absent cycle time)
    let mut pending: BTreeMap<&str, (&VehicleSnapshot, i64)> = BTreeMap::new();
    let mut first_cycle = true;

    let mut at = 0;
    while at < stream.len() {
        let t = stream[at].observed_at;
        let mut cycle_end = at;
        while cycle_end < stream.len() && stream[cycle_end].observed_at == t {
            cycle_end += 1;
        }
        let cycle = &stream[at..cycle_end];
        at = cycle_end;

        let current: BTreeMap<&str, &VehicleSnapshot> = cycle
            .iter()
            .filter(|s| s.is_available())
            .map(|s| (s.vehicle_id.as_str(), s))
            .collect();

        // vehicles that just vanished
        let vanished: Vec<&str> = presence
            .keys()
            .filter(|id| !current.contains_key(**id) && !pending.contains_key(**id))
            .copied()
            .collect();
        for id in vanished {
            let last = presence[id];
            pending.insert(id, (last, t));
            if vendor.id_mode == IdMode::Dynamic {
                out.events.push(UnlinkedEvent {
                    vendor_id: vendor.vendor_id.clone(),
                    kind: EventKind::Disappearance,
                    point: last.point,
                    time: t,
                });
            }
        }

        for (id, snap) in &current {
            if let Some((last, gone_since)) = pending.remove(id) {
                if vendor.id_mode == IdMode::Consistent {
                    let suppress = options.suppress_relocations.then(|| {
                        if t - gone_since > options.relocation_max_gap_sec {
                            Some(SuppressReason::GapTooLong)
                        } else if matches!(
                            (last.battery_pct, snap.battery_pct),
                            (Some(before), Some(after)) if after - before > options.relocation_battery_jump
                        ) {
                            Some(SuppressReason::BatteryJump)
                        } else {
                            None
                        }
                    });
                    match suppress.flatten() {
                        Some(reason) => out.suppressed.push(SuppressedMove {
                            vehicle_id: (*id).to_string(),
                            start_time: gone_since,
                            end_time: t,
                            reason,
                        }),
                        None => out.trips.push(InferredTrip {
                            vendor_id: vendor.vendor_id.clone(),
                            vehicle_id: (*id).to_string(),
                            origin: last.point,
                            destination: snap.point,
                            start_time: gone_since,
                            end_time: t,
                            linked: true,
                        }),
                    }
                }
            } else if !presence.contains_key(*id) && !first_cycle && vendor.id_mode == IdMode::Dynamic {
                out.events.push(UnlinkedEvent {
                    vendor_id: vendor.vendor_id.clone(),
                    kind: EventKind::Appearance,
                    point: snap.point,
                    time: t,
                });
            }
        }

        for (id, snap) in current {
            presence.insert(id, snap);
        }
        first_cycle = false;
    }

    out.trips.sort_by(|a, b| {
        (a.start_time, a.end_time, &a.vehicle_id).cmp(&(b.start_time, b.end_time, &b.vehicle_id))
    });
    Ok(out)
}

/// Plausibility bounds separating real rides from GPS error and data noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterPolicy {
    pub min_distance_mi: f64,
    pub max_distance_mi: f64,
    pub min_duration_min: f64,
    pub max_duration_min: f64,
    pub max_speed_mph: f64,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self {
            min_distance_mi: 0.02,
            max_distance_mi: 10.0,
            min_duration_min: 5.0,
            max_duration_min: 90.0,
            max_speed_mph: 20.0,
        }
    }
}

impl FilterPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_distance_mi >= self.max_distance_mi {
            return Err("filter: min_distance_mi must be below max_distance_mi".into());
        }
        if self.min_duration_min >= self.max_duration_min {
            return Err("filter: min_duration_min must be below max_duration_min".into());
        }
        if self.max_speed_mph <= 0.0 {
            return Err("filter: max_speed_mph must be positive".into());
        }
        Ok(())
    }
}

/// The first rule a rejected trip violated, in the order the bounds are
/// conventionally stated: distance, duration, speed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterRule {
    BelowMinDistance,
    AboveMaxDistance,
    BelowMinDuration,
    AboveMaxDuration,
    AboveMaxSpeed,
}

impl std::fmt::Display for FilterRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FilterRule::BelowMinDistance => "below_min_distance",
            FilterRule::AboveMaxDistance => "above_max_distance",
            FilterRule::BelowMinDuration => "below_min_duration",
            FilterRule::AboveMaxDuration => "above_max_duration",
            FilterRule::AboveMaxSpeed => "above_max_speed",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Default)]
pub struct FilterOutcome {
    pub kept: Vec<InferredTrip>,
    pub rejected: Vec<(InferredTrip, FilterRule)>,
}

/// Keeps a trip iff distance, duration, and average speed all lie within the
/// policy bounds (inclusive). Total: every input lands in exactly one bucket.
pub fn apply_filters(trips: Vec<InferredTrip>, policy: &FilterPolicy) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for trip in trips {
        let violation = first_violation(&trip, policy);
        match violation {
            None => out.kept.push(trip),
            Some(rule) => out.rejected.push((trip, rule)),
        }
    }
    out
}

fn first_violation(trip: &InferredTrip, policy: &FilterPolicy) -> Option<FilterRule> {
    let d = trip.distance_mi();
    let dur = trip.duration_min();
    if d < policy.min_distance_mi {
        Some(FilterRule::BelowMinDistance)
    } else if d > policy.max_distance_mi {
        Some(FilterRule::AboveMaxDistance)
    } else if dur < policy.min_duration_min {
        Some(FilterRule::BelowMinDuration)
    } else if dur > policy.max_duration_min {
        Some(FilterRule::AboveMaxDuration)
    } else if trip.avg_speed_mph() > policy.max_speed_mph {
        Some(FilterRule::AboveMaxSpeed)
    } else {
        None
    }
}

/// Criteria marking a trip as likely ridden for fun rather than transport.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LeisurePolicy {
    pub min_speed_mph: f64,
    pub min_distance_mi: f64,
    /// Areas like tourist sites where rides are assumed recreational.
    pub exclusion_zones: Vec<Polygon>,
}

impl LeisurePolicy {
    pub fn standard(exclusion_zones: Vec<Polygon>) -> Self {
        Self { min_speed_mph: 8.0, min_distance_mi: 0.25, exclusion_zones }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LeisureRule {
    SlowSpeed,
    ShortDistance,
    ExclusionZone,
}

#[derive(Debug, Default)]
pub struct LeisureSplit {
    pub utilitarian: Vec<InferredTrip>,
    pub leisure: Vec<(InferredTrip, LeisureRule)>,
}

/// Splits filtered trips into utilitarian and likely-leisure. A trip is
/// leisure iff its speed is below the minimum, its distance below a quarter
/// mile, or either endpoint lies inside an exclusion zone.
pub fn exclude_leisure(trips: Vec<InferredTrip>, policy: &LeisurePolicy) -> LeisureSplit {
    let mut out = LeisureSplit::default();
    for trip in trips {
        let rule = if trip.avg_speed_mph() < policy.min_speed_mph {
            Some(LeisureRule::SlowSpeed)
        } else if trip.distance_mi() < policy.min_distance_mi {
            Some(LeisureRule::ShortDistance)
        } else if policy
            .exclusion_zones
            .iter()
            .any(|z| z.contains(&trip.origin) || z.contains(&trip.destination))
        {
            Some(LeisureRule::ExclusionZone)
        } else {
            None
        };
        match rule {
            None => out.utilitarian.push(trip),
            Some(rule) => out.leisure.push((trip, rule)),
        }
    }
    out
}

/// Trip table export: `vendor,vehicle,olat,olon,dlat,dlon,start_utc,end_utc,dist_mi,dur_min,linked`.
pub fn trips_to_csv(trips: &[InferredTrip]) -> String {
    let mut out = String::from("vendor,vehicle,olat,olon,dlat,dlon,start_utc,end_utc,dist_mi,dur_min,linked\n");
    for t in trips {
        let start = chrono::DateTime::from_timestamp(t.start_time, 0).expect("valid timestamp");
        let end = chrono::DateTime::from_timestamp(t.end_time, 0).expect("valid timestamp");
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{:.4},{:.2},{}\n",
            t.vendor_id,
            t.vehicle_id,
            t.origin.lat,
            t.origin.lon,
            t.destination.lat,
            t.destination.lon,
            start.format("%Y-%m-%dT%H:%M:%SZ"),
            end.format("%Y-%m-%dT%H:%M:%SZ"),
            t.distance_mi(),
            t.duration_min(),
            t.linked
        ));
    }
    out
}
