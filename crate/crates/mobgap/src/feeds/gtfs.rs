//! GTFS schedule archive parsing and the in-memory transit network model.
//!
//! The parser is strict about referential integrity (a stop_time pointing at
//! an unknown stop rejects the archive) and lenient about per-trip schedule
//! defects (a trip with non-monotonic stop times is excluded and tallied).
//! Networks are kept in a canonical order — stops by stop_id, trips by
//! trip_id, events by (trip_id, sequence) — so parsing is deterministic.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::FeedError;
use crate::geo::GeoPoint;
use crate::ziparc::{ZipArchive, ZipWriter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationType {
    Stop,
    Entrance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitMode {
    Bus,
    Rail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub stop_id: String,
    pub point: GeoPoint,
    pub location_type: LocationType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub route_id: String,
    pub mode: TransitMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledTrip {
    pub trip_id: String,
    pub route_id: String,
    pub service_id: String,
}

/// One scheduled stop visit. Times are seconds after local midnight of the
/// service day; hours past 24 denote after-midnight service on the same day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopTimeEvent {
    pub trip_id: String,
    pub stop_id: String,
    pub arrival_sec: u32,
    pub departure_sec: u32,
    pub sequence: u32,
}

/// Which dates a service runs on: a weekday pattern over a date range plus
/// explicit added/removed exception dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceCalendar {
    /// Monday-first weekday flags.
    pub weekdays: [bool; 7],
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub added: Vec<NaiveDate>,
    pub removed: Vec<NaiveDate>,
}

impl ServiceCalendar {
    pub fn runs_on(&self, date: NaiveDate) -> bool {
        if self.removed.binary_search(&date).is_ok() {
            return false;
        }
        if self.added.binary_search(&date).is_ok() {
            return true;
        }
        date >= self.start_date
            && date <= self.end_date
            && self.weekdays[date.weekday().num_days_from_monday() as usize]
    }

    fn never() -> Self {
        let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap();
        Self { weekdays: [false; 7], start_date: epoch, end_date: epoch, added: vec![], removed: vec![] }
    }
}

/// Stops, routes, scheduled trips, stop-time events, and service calendars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitNetwork {
    pub stops: Vec<Stop>,
    pub routes: Vec<Route>,
    pub scheduled_trips: Vec<ScheduledTrip>,
    pub stop_time_events: Vec<StopTimeEvent>,
    pub services: BTreeMap<String, ServiceCalendar>,
}

/// Non-fatal parse findings.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct GtfsWarnings {
    /// (trip_id, reason) for trips excluded from the network.
    pub rejected_trips: Vec<(String, String)>,
    /// (route_id, route_type) for unrecognized route types mapped to Bus.
    pub unknown_route_types: Vec<(String, u16)>,
    /// Trips whose service_id had no calendar entry; they never run.
    pub trips_without_service: Vec<String>,
}

#[derive(Debug)]
pub struct GtfsParse {
    pub network: TransitNetwork,
    pub warnings: GtfsWarnings,
}

/// Parses a GTFS zip archive.
pub fn parse_gtfs(archive: &[u8]) -> Result<GtfsParse, FeedError> {
    let zip = ZipArchive::read(archive)?;
    let get = |name: &str| zip.by_name(name).map(<[u8]>::to_vec);
    parse_tables(&get)
}

/// Parses a directory of extracted GTFS tables (`stops.txt` and friends).
pub fn parse_gtfs_dir(dir: &Path) -> Result<GtfsParse, FeedError> {
    let get = |name: &str| std::fs::read(dir.join(name)).ok();
    parse_tables(&get)
}

const REQUIRED_TABLES: [&str; 5] = ["stops.txt", "routes.txt", "trips.txt", "stop_times.txt", "calendar.txt"];

fn parse_tables(get: &dyn Fn(&str) -> Option<Vec<u8>>) -> Result<GtfsParse, FeedError> {
    let mut tables = BTreeMap::new();
    for name in REQUIRED_TABLES {
        tables.insert(name, get(name).ok_or_else(|| FeedError::MissingTable(name.into()))?);
    }
    let calendar_dates = get("calendar_dates.txt");

    let mut warnings = GtfsWarnings::default();
    let stops = parse_stops(&tables["stops.txt"])?;
    let routes = parse_routes(&tables["routes.txt"], &mut warnings)?;
    let trips = parse_trips(&tables["trips.txt"])?;
    let mut services = parse_calendar(&tables["calendar.txt"])?;
    if let Some(bytes) = calendar_dates {
        apply_calendar_dates(&bytes, &mut services)?;
    }
    let stop_times = parse_stop_times(&tables["stop_times.txt"])?;

    build_network(stops, routes, trips, services, stop_times, warnings)
}

fn build_network(
    stops: Vec<Stop>,
    routes: Vec<Route>,
    trips: Vec<ScheduledTrip>,
    mut services: BTreeMap<String, ServiceCalendar>,
    stop_times: Vec<StopTimeEvent>,
    mut warnings: GtfsWarnings,
) -> Result<GtfsParse, FeedError> {
    let stop_ids: BTreeSet<&str> = stops.iter().map(|s| s.stop_id.as_str()).collect();
    if stop_ids.len() != stops.len() {
        return Err(FeedError::MalformedDocument("duplicate stop_id in stops.txt".into()));
    }
    let route_ids: BTreeSet<&str> = routes.iter().map(|r| r.route_id.as_str()).collect();
    if route_ids.len() != routes.len() {
        return Err(FeedError::MalformedDocument("duplicate route_id in routes.txt".into()));
    }
    let trip_ids: BTreeSet<&str> = trips.iter().map(|t| t.trip_id.as_str()).collect();
    if trip_ids.len() != trips.len() {
        return Err(FeedError::MalformedDocument("duplicate trip_id in trips.txt".into()));
    }

    // referential integrity: hard failures
    for t in &trips {
        if !route_ids.contains(t.route_id.as_str()) {
            return Err(FeedError::DanglingReference {
                kind: "route",
                id: t.route_id.clone(),
                referrer: format!("trip {}", t.trip_id),
            });
        }
    }
    for ev in &stop_times {
        if !stop_ids.contains(ev.stop_id.as_str()) {
            return Err(FeedError::DanglingReference {
                kind: "stop",
                id: ev.stop_id.clone(),
                referrer: format!("stop_time of trip {}", ev.trip_id),
            });
        }
        if !trip_ids.contains(ev.trip_id.as_str()) {
            return Err(FeedError::DanglingReference {
                kind: "trip",
                id: ev.trip_id.clone(),
                referrer: "stop_times.txt".into(),
            });
        }
    }

    // group events per trip and vet schedules; defects reject the trip only
    let mut by_trip: BTreeMap<&str, Vec<&StopTimeEvent>> = BTreeMap::new();
    for ev in &stop_times {
        by_trip.entry(ev.trip_id.as_str()).or_default().push(ev);
    }
    let mut rejected: BTreeSet<String> = BTreeSet::new();
    for (trip_id, events) in &mut by_trip {
        events.sort_by_key(|e| e.sequence);
        let reason = vet_trip_schedule(events);
        if let Some(reason) = reason {
            rejected.insert((*trip_id).to_string());
            warnings.rejected_trips.push(((*trip_id).to_string(), reason));
        }
    }
    for t in &trips {
        if !by_trip.contains_key(t.trip_id.as_str()) && !rejected.contains(&t.trip_id) {
            rejected.insert(t.trip_id.clone());
            warnings.rejected_trips.push((t.trip_id.clone(), "no stop time events".into()));
        }
    }

    // unknown services never run; keep the trip but note it
    for t in &trips {
        if !services.contains_key(&t.service_id) && !rejected.contains(&t.trip_id) {
            warnings.trips_without_service.push(t.trip_id.clone());
            services.insert(t.service_id.clone(), ServiceCalendar::never());
        }
    }

    let mut network = TransitNetwork {
        stops,
        routes,
        scheduled_trips: trips.into_iter().filter(|t| !rejected.contains(&t.trip_id)).collect(),
        stop_time_events: stop_times.into_iter().filter(|e| !rejected.contains(&e.trip_id)).collect(),
        services,
    };
    network.canonicalize();
    Ok(GtfsParse { network, warnings })
}

fn vet_trip_schedule(events: &[&StopTimeEvent]) -> Option<String> {
    if events.len() < 2 {
        return Some("fewer than 2 stop time events".into());
    }
    for pair in events.windows(2) {
        if pair[1].sequence <= pair[0].sequence {
            return Some("non-monotonic stop sequence".into());
        }
        if pair[1].arrival_sec < pair[0].departure_sec {
            return Some("non-monotonic stop times".into());
        }
    }
    if events.iter().any(|e| e.departure_sec < e.arrival_sec) {
        return Some("departure before arrival".into());
    }
    None
}

impl TransitNetwork {
    /// Builds a network from parts, applying the same validation, trip
    /// vetting, and canonical ordering as the GTFS parser.
    pub fn from_parts(
        stops: Vec<Stop>,
        routes: Vec<Route>,
        scheduled_trips: Vec<ScheduledTrip>,
        stop_time_events: Vec<StopTimeEvent>,
        services: BTreeMap<String, ServiceCalendar>,
    ) -> Result<GtfsParse, FeedError> {
        build_network(stops, routes, scheduled_trips, services, stop_time_events, GtfsWarnings::default())
    }

    fn canonicalize(&mut self) {
        self.stops.sort_by(|a, b| a.stop_id.cmp(&b.stop_id));
        self.routes.sort_by(|a, b| a.route_id.cmp(&b.route_id));
        self.scheduled_trips.sort_by(|a, b| a.trip_id.cmp(&b.trip_id));
        self.stop_time_events
            .sort_by(|a, b| a.trip_id.cmp(&b.trip_id).then(a.sequence.cmp(&b.sequence)));
        for svc in self.services.values_mut() {
            svc.added.sort();
            svc.added.dedup();
            svc.removed.sort();
            svc.removed.dedup();
        }
    }

    /// Serializes the network back to a GTFS-shaped zip archive. Re-parsing
    /// the result yields a network equal to `self` field by field.
    pub fn to_archive_bytes(&self) -> Vec<u8> {
        let mut w = ZipWriter::new();

        let mut stops = String::from("stop_id,stop_lat,stop_lon,location_type\n");
        for s in &self.stops {
            let lt = match s.location_type {
                LocationType::Stop => "0",
                LocationType::Entrance => "2",
            };
            stops.push_str(&format!("{},{},{},{}\n", csv_quote(&s.stop_id), s.point.lat, s.point.lon, lt));
        }
        w.add_deflated("stops.txt", stops.as_bytes());

        let mut routes = String::from("route_id,route_type\n");
        for r in &self.routes {
            let rt = match r.mode {
                TransitMode::Rail => "2",
                TransitMode::Bus => "3",
            };
            routes.push_str(&format!("{},{}\n", csv_quote(&r.route_id), rt));
        }
        w.add_deflated("routes.txt", routes.as_bytes());

        let mut trips = String::from("trip_id,route_id,service_id\n");
        for t in &self.scheduled_trips {
            trips.push_str(&format!(
                "{},{},{}\n",
                csv_quote(&t.trip_id),
                csv_quote(&t.route_id),
                csv_quote(&t.service_id)
            ));
        }
        w.add_deflated("trips.txt", trips.as_bytes());

        let mut st = String::from("trip_id,arrival_time,departure_time,stop_id,stop_sequence\n");
        for e in &self.stop_time_events {
            st.push_str(&format!(
                "{},{},{},{},{}\n",
                csv_quote(&e.trip_id),
                fmt_hms(e.arrival_sec),
                fmt_hms(e.departure_sec),
                csv_quote(&e.stop_id),
                e.sequence
            ));
        }
        w.add_deflated("stop_times.txt", st.as_bytes());

        let mut cal =
            String::from("service_id,monday,tuesday,wednesday,thursday,friday,saturday,sunday,start_date,end_date\n");
        let mut cal_dates = String::from("service_id,date,exception_type\n");
        let mut have_dates = false;
        for (id, svc) in &self.services {
            cal.push_str(&csv_quote(id));
            for d in svc.weekdays {
                cal.push_str(if d { ",1" } else { ",0" });
            }
            cal.push_str(&format!(",{},{}\n", svc.start_date.format("%Y%m%d"), svc.end_date.format("%Y%m%d")));
            for d in &svc.added {
                cal_dates.push_str(&format!("{},{},1\n", csv_quote(id), d.format("%Y%m%d")));
                have_dates = true;
            }
            for d in &svc.removed {
                cal_dates.push_str(&format!("{},{},2\n", csv_quote(id), d.format("%Y%m%d")));
                have_dates = true;
            }
        }
        w.add_deflated("calendar.txt", cal.as_bytes());
        if have_dates {
            w.add_deflated("calendar_dates.txt", cal_dates.as_bytes());
        }
        w.finish()
    }

    /// Builds lookup indices for query workloads.
    pub fn index(&self) -> NetworkIndex<'_> {
        NetworkIndex::new(self)
    }
}

fn csv_quote(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn fmt_hms(sec: u32) -> String {
    format!("{:02}:{:02}:{:02}", sec / 3600, (sec / 60) % 60, sec % 60)
}

/// Lookup structures over an immutable [`TransitNetwork`].
pub struct NetworkIndex<'a> {
    pub network: &'a TransitNetwork,
    stop_pos: BTreeMap<&'a str, usize>,
    trip_pos: BTreeMap<&'a str, usize>,
    route_pos: BTreeMap<&'a str, usize>,
    /// Per trip (by position), the range of its events in canonical order.
    trip_event_ranges: Vec<(usize, usize)>,
    /// Per stop (by position), indices of events serving it.
    stop_events: Vec<Vec<usize>>,
}

impl<'a> NetworkIndex<'a> {
    fn new(network: &'a TransitNetwork) -> Self {
        let stop_pos: BTreeMap<&str, usize> =
            network.stops.iter().enumerate().map(|(i, s)| (s.stop_id.as_str(), i)).collect();
        let trip_pos: BTreeMap<&str, usize> =
            network.scheduled_trips.iter().enumerate().map(|(i, t)| (t.trip_id.as_str(), i)).collect();
        let route_pos: BTreeMap<&str, usize> =
            network.routes.iter().enumerate().map(|(i, r)| (r.route_id.as_str(), i)).collect();

        // events are sorted by (trip_id, sequence) and trips by trip_id, so
        // each trip's events form one contiguous run in the same order
        let mut trip_event_ranges = vec![(0, 0); network.scheduled_trips.len()];
        let mut stop_events = vec![Vec::new(); network.stops.len()];
        let mut ev_at = 0;
        for (ti, trip) in network.scheduled_trips.iter().enumerate() {
            let start = ev_at;
            while ev_at < network.stop_time_events.len()
                && network.stop_time_events[ev_at].trip_id == trip.trip_id
            {
                let stop_i = stop_pos[network.stop_time_events[ev_at].stop_id.as_str()];
                stop_events[stop_i].push(ev_at);
                ev_at += 1;
            }
            trip_event_ranges[ti] = (start, ev_at);
        }

        Self { network, stop_pos, trip_pos, route_pos, trip_event_ranges, stop_events }
    }

    pub fn stop_position(&self, stop_id: &str) -> Option<usize> {
        self.stop_pos.get(stop_id).copied()
    }

    pub fn trip_position(&self, trip_id: &str) -> Option<usize> {
        self.trip_pos.get(trip_id).copied()
    }

    pub fn trip_events(&self, trip_position: usize) -> &'a [StopTimeEvent] {
        let (a, b) = self.trip_event_ranges[trip_position];
        &self.network.stop_time_events[a..b]
    }

    /// Event indices (into `stop_time_events`) serving the given stop.
    pub fn events_at_stop(&self, stop_position: usize) -> &[usize] {
        &self.stop_events[stop_position]
    }

    pub fn trip_mode(&self, trip_position: usize) -> TransitMode {
        let route_id = &self.network.scheduled_trips[trip_position].route_id;
        self.network.routes[self.route_pos[route_id.as_str()]].mode
    }

    /// Positions of trips whose service runs on `date`.
    pub fn active_trips(&self, date: NaiveDate) -> Vec<usize> {
        self.network
            .scheduled_trips
            .iter()
            .enumerate()
            .filter(|(_, t)| self.network.services.get(&t.service_id).is_some_and(|s| s.runs_on(date)))
            .map(|(i, _)| i)
            .collect()
    }

    /// Position of the trip owning the event at `event_index`.
    pub fn trip_of_event(&self, event_index: usize) -> usize {
        self.trip_event_ranges
            .partition_point(|&(_, end)| end <= event_index)
    }
}

// ---- table parsers ----

struct Table<'a> {
    header: BTreeMap<String, usize>,
    records: Vec<csv::StringRecord>,
    name: &'a str,
}

impl<'a> Table<'a> {
    fn read(name: &'a str, bytes: &[u8]) -> Result<Self, FeedError> {
        let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(bytes);
        let header = reader
            .headers()
            .map_err(|e| FeedError::MalformedDocument(format!("{name}: {e}")))?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim_start_matches('\u{feff}').to_string(), i))
            .collect();
        let records = reader
            .records()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| FeedError::MalformedDocument(format!("{name}: {e}")))?;
        Ok(Self { header, records, name })
    }

    fn col(&self, field: &str) -> Result<usize, FeedError> {
        self.header
            .get(field)
            .copied()
            .ok_or_else(|| FeedError::MalformedDocument(format!("{}: missing column {field}", self.name)))
    }

    fn opt_col(&self, field: &str) -> Option<usize> {
        self.header.get(field).copied()
    }
}

fn req<'r>(rec: &'r csv::StringRecord, col: usize, table: &str, field: &str) -> Result<&'r str, FeedError> {
    match rec.get(col) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(FeedError::MalformedDocument(format!("{table}: empty {field} in row {rec:?}"))),
    }
}

fn parse_stops(bytes: &[u8]) -> Result<Vec<Stop>, FeedError> {
    let t = Table::read("stops.txt", bytes)?;
    let (c_id, c_lat, c_lon) = (t.col("stop_id")?, t.col("stop_lat")?, t.col("stop_lon")?);
    let c_type = t.opt_col("location_type");
    let mut stops = Vec::with_capacity(t.records.len());
    for rec in &t.records {
        let stop_id = req(rec, c_id, "stops.txt", "stop_id")?.to_string();
        let lat: f64 = req(rec, c_lat, "stops.txt", "stop_lat")?
            .parse()
            .map_err(|_| FeedError::MalformedDocument(format!("stops.txt: bad stop_lat for {stop_id}")))?;
        let lon: f64 = req(rec, c_lon, "stops.txt", "stop_lon")?
            .parse()
            .map_err(|_| FeedError::MalformedDocument(format!("stops.txt: bad stop_lon for {stop_id}")))?;
        let point = GeoPoint::checked(lat, lon)
            .ok_or_else(|| FeedError::MalformedDocument(format!("stops.txt: coordinates out of range for {stop_id}")))?;
        let location_type = match c_type.and_then(|c| rec.get(c)).unwrap_or("") {
            "2" => LocationType::Entrance,
            _ => LocationType::Stop,
        };
        stops.push(Stop { stop_id, point, location_type });
    }
    Ok(stops)
}

/// Route-type buckets: conventional rail-like codes map to Rail for the
/// frequency weighting and rail fare, bus-like codes to Bus. Anything else is
/// treated as Bus and reported.
fn parse_routes(bytes: &[u8], warnings: &mut GtfsWarnings) -> Result<Vec<Route>, FeedError> {
    const RAIL_TYPES: [u16; 5] = [0, 1, 2, 5, 12];
    const BUS_TYPES: [u16; 2] = [3, 11];
    let t = Table::read("routes.txt", bytes)?;
    let (c_id, c_type) = (t.col("route_id")?, t.col("route_type")?);
    let mut routes = Vec::with_capacity(t.records.len());
    for rec in &t.records {
        let route_id = req(rec, c_id, "routes.txt", "route_id")?.to_string();
        let rt: u16 = req(rec, c_type, "routes.txt", "route_type")?
            .parse()
            .map_err(|_| FeedError::MalformedDocument(format!("routes.txt: bad route_type for {route_id}")))?;
        let mode = if RAIL_TYPES.contains(&rt) {
            TransitMode::Rail
        } else if BUS_TYPES.contains(&rt) {
            TransitMode::Bus
        } else {
            warnings.unknown_route_types.push((route_id.clone(), rt));
            TransitMode::Bus
        };
        routes.push(Route { route_id, mode });
    }
    Ok(routes)
}

fn parse_trips(bytes: &[u8]) -> Result<Vec<ScheduledTrip>, FeedError> {
    let t = Table::read("trips.txt", bytes)?;
    let (c_trip, c_route, c_service) = (t.col("trip_id")?, t.col("route_id")?, t.col("service_id")?);
    t.records
        .iter()
        .map(|rec| {
            Ok(ScheduledTrip {
                trip_id: req(rec, c_trip, "trips.txt", "trip_id")?.to_string(),
                route_id: req(rec, c_route, "trips.txt", "route_id")?.to_string(),
                service_id: req(rec, c_service, "trips.txt", "service_id")?.to_string(),
            })
        })
        .collect()
}

fn parse_hms(s: &str) -> Option<u32> {
    let mut parts = s.split(':');
    let h: u32 = parts.next()?.trim().parse().ok()?;
    let m: u32 = parts.next()?.trim().parse().ok()?;
    let sec: u32 = parts.next()?.trim().parse().ok()?;
    if parts.next().is_some() || m > 59 || sec > 59 {
        return None;
    }
    Some(h * 3600 + m * 60 + sec)
}

fn parse_stop_times(bytes: &[u8]) -> Result<Vec<StopTimeEvent>, FeedError> {
    let t = Table::read("stop_times.txt", bytes)?;
    let c_trip = t.col("trip_id")?;
    let c_arr = t.col("arrival_time")?;
    let c_dep = t.col("departure_time")?;
    let c_stop = t.col("stop_id")?;
    let c_seq = t.col("stop_sequence")?;
    let mut events = Vec::with_capacity(t.records.len());
    for rec in &t.records {
        let trip_id = req(rec, c_trip, "stop_times.txt", "trip_id")?.to_string();
        let arrival = rec.get(c_arr).unwrap_or("");
        let departure = rec.get(c_dep).unwrap_or("");
        // blank or malformed times make the schedule unusable for this trip;
        // encode as a sentinel the vetting stage rejects with a clear reason
        let (arrival_sec, departure_sec) = match (parse_hms(arrival), parse_hms(departure)) {
            (Some(a), Some(d)) => (a, d),
            _ => (u32::MAX, 0),
        };
        let sequence: u32 = req(rec, c_seq, "stop_times.txt", "stop_sequence")?
            .parse()
            .map_err(|_| FeedError::MalformedDocument(format!("stop_times.txt: bad stop_sequence for {trip_id}")))?;
        events.push(StopTimeEvent {
            trip_id,
            stop_id: req(rec, c_stop, "stop_times.txt", "stop_id")?.to_string(),
            arrival_sec,
            departure_sec,
            sequence,
        });
    }
    Ok(events)
}

fn parse_gtfs_date(s: &str, table: &str) -> Result<NaiveDate, FeedError> {
    NaiveDate::parse_from_str(s.trim(), "%Y%m%d")
        .map_err(|_| FeedError::MalformedDocument(format!("{table}: bad date {s}")))
}

fn parse_calendar(bytes: &[u8]) -> Result<BTreeMap<String, ServiceCalendar>, FeedError> {
    const DAYS: [&str; 7] = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"];
    let t = Table::read("calendar.txt", bytes)?;
    let c_id = t.col("service_id")?;
    let day_cols: Vec<usize> = DAYS.iter().map(|d| t.col(d)).collect::<Result<_, _>>()?;
    let (c_start, c_end) = (t.col("start_date")?, t.col("end_date")?);
    let mut services = BTreeMap::new();
    for rec in &t.records {
        let id = req(rec, c_id, "calendar.txt", "service_id")?.to_string();
        let mut weekdays = [false; 7];
        for (i, &c) in day_cols.iter().enumerate() {
            weekdays[i] = rec.get(c) == Some("1");
        }
        let svc = ServiceCalendar {
            weekdays,
            start_date: parse_gtfs_date(req(rec, c_start, "calendar.txt", "start_date")?, "calendar.txt")?,
            end_date: parse_gtfs_date(req(rec, c_end, "calendar.txt", "end_date")?, "calendar.txt")?,
            added: vec![],
            removed: vec![],
        };
        if services.insert(id.clone(), svc).is_some() {
            return Err(FeedError::MalformedDocument(format!("calendar.txt: duplicate service_id {id}")));
        }
    }
    Ok(services)
}

fn apply_calendar_dates(
    bytes: &[u8],
    services: &mut BTreeMap<String, ServiceCalendar>,
) -> Result<(), FeedError> {
    let t = Table::read("calendar_dates.txt", bytes)?;
    let (c_id, c_date, c_ex) = (t.col("service_id")?, t.col("date")?, t.col("exception_type")?);
    for rec in &t.records {
        let id = req(rec, c_id, "calendar_dates.txt", "service_id")?;
        let date = parse_gtfs_date(req(rec, c_date, "calendar_dates.txt", "date")?, "calendar_dates.txt")?;
        let svc = services.entry(id.to_string()).or_insert_with(ServiceCalendar::never);
        match rec.get(c_ex) {
            Some("1") => svc.added.push(date),
            Some("2") => svc.removed.push(date),
            other => {
                return Err(FeedError::MalformedDocument(format!(
                    "calendar_dates.txt: bad exception_type {other:?} for {id}"
                )))
            }
        }
    }
    Ok(())
}
