//! Append-only snapshot archive.
//!
//! Layout: `<root>/<vendor_id>/<YYYYMMDD>.bin`, one segment per vendor and
//! UTC day. Segments hold length-prefixed binary records in non-decreasing
//! `observed_at` order; a `(vendor, observed_at, vehicle_id)` triple is
//! stored at most once. Binary keeps minute-cadence city feeds compact; a
//! JSON-lines export covers inspection.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate};

use super::{IngestError, DEFAULT_STALENESS_HORIZON_SEC};
use crate::feeds::VehicleSnapshot;
use crate::geo::GeoPoint;

const FLAG_RESERVED: u8 = 0b0000_0001;
const FLAG_DISABLED: u8 = 0b0000_0010;
const FLAG_BATTERY: u8 = 0b0000_0100;

pub struct SnapshotArchive {
    root: PathBuf,
    /// Dedup state per open segment: the newest timestamp written and the
    /// vehicle IDs seen at exactly that timestamp.
    tails: BTreeMap<PathBuf, SegmentTail>,
}

#[derive(Debug, Default)]
struct SegmentTail {
    last_ts: i64,
    ids_at_last: BTreeSet<String>,
}

/// Statistics for one append batch.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct AppendOutcome {
    pub written: u64,
    pub duplicates_skipped: u64,
}

impl SnapshotArchive {
    /// Opens (creating if needed) an archive rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, IngestError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(IngestError::ArchiveWrite)?;
        Ok(Self { root, tails: BTreeMap::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn day_of(ts: i64) -> NaiveDate {
        DateTime::from_timestamp(ts, 0).expect("timestamp in chrono range").date_naive()
    }

    fn segment_path(&self, vendor_id: &str, day: NaiveDate) -> PathBuf {
        self.root.join(vendor_id).join(format!("{}.bin", day.format("%Y%m%d")))
    }

    /// Appends a batch of snapshots for one vendor. Records must not predate
    /// anything already in their day segment; duplicates are skipped and
    /// tallied, never rewritten.
    pub fn append(&mut self, vendor_id: &str, snapshots: &[VehicleSnapshot]) -> Result<AppendOutcome, IngestError> {
        let mut outcome = AppendOutcome::default();
        let mut sorted: Vec<&VehicleSnapshot> = snapshots.iter().collect();
        sorted.sort_by(|a, b| a.observed_at.cmp(&b.observed_at).then_with(|| a.vehicle_id.cmp(&b.vehicle_id)));

        let mut buffers: BTreeMap<PathBuf, Vec<u8>> = BTreeMap::new();
        for snap in sorted {
            let path = self.segment_path(vendor_id, Self::day_of(snap.observed_at));
            let tail = match self.tails.get_mut(&path) {
                Some(t) => t,
                None => {
                    let t = scan_tail(&path)?;
                    self.tails.entry(path.clone()).or_insert(t)
                }
            };
            if snap.observed_at < tail.last_ts
                || (snap.observed_at == tail.last_ts && tail.ids_at_last.contains(&snap.vehicle_id))
            {
                outcome.duplicates_skipped += 1;
                continue;
            }
            if snap.observed_at > tail.last_ts {
                tail.last_ts = snap.observed_at;
                tail.ids_at_last.clear();
            }
            tail.ids_at_last.insert(snap.vehicle_id.clone());
            encode_record(buffers.entry(path).or_default(), snap);
            outcome.written += 1;
        }

        for (path, buf) in buffers {
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir).map_err(IngestError::ArchiveWrite)?;
            }
            let mut file = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(IngestError::ArchiveWrite)?;
            file.write_all(&buf).map_err(IngestError::ArchiveWrite)?;
        }
        Ok(outcome)
    }

    /// Vendors present in the archive, sorted.
    pub fn vendors(&self) -> Result<Vec<String>, IngestError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(IngestError::ArchiveRead)? {
            let entry = entry.map_err(IngestError::ArchiveRead)?;
            if entry.path().is_dir() {
                out.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        out.sort();
        Ok(out)
    }

    fn segment_days(&self, vendor_id: &str) -> Result<Vec<NaiveDate>, IngestError> {
        let dir = self.root.join(vendor_id);
        if !dir.is_dir() {
            return Err(IngestError::UnknownVendor(vendor_id.into()));
        }
        let mut days = Vec::new();
        for entry in fs::read_dir(&dir).map_err(IngestError::ArchiveRead)? {
            let path = entry.map_err(IngestError::ArchiveRead)?.path();
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                if path.extension().is_some_and(|e| e == "bin") {
                    if let Ok(day) = NaiveDate::parse_from_str(stem, "%Y%m%d") {
                        days.push(day);
                    }
                }
            }
        }
        days.sort();
        Ok(days)
    }

    /// Replays archived snapshots in non-decreasing `observed_at` order over
    /// the half-open window `[start, end)`, optionally for a single vendor.
    /// Ordering across vendors is made deterministic by breaking timestamp
    /// ties on (vendor_id, vehicle_id).
    pub fn replay(&self, vendor: Option<&str>, start: i64, end: i64) -> Result<Replay, IngestError> {
        if start > end {
            return Err(IngestError::InvalidWindow { start, end });
        }
        let vendors = match vendor {
            Some(v) => {
                if !self.root.join(v).is_dir() {
                    return Err(IngestError::UnknownVendor(v.into()));
                }
                vec![v.to_string()]
            }
            None => self.vendors()?,
        };
        let mut sources = Vec::new();
        for v in vendors {
            let days: Vec<NaiveDate> = self
                .segment_days(&v)?
                .into_iter()
                .filter(|d| {
                    // a day segment can only hold timestamps within that UTC day
                    let day_start = d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp();
                    day_start < end && day_start + 86_400 > start
                })
                .collect();
            sources.push(VendorCursor::new(self, v, days, start, end)?);
        }
        Ok(Replay::new(sources))
    }

    /// The earliest `observed_at` across the archive (or a single vendor).
    pub fn earliest_observation(&self, vendor: Option<&str>) -> Result<Option<i64>, IngestError> {
        let mut replay = self.replay(vendor, i64::MIN, i64::MAX)?;
        Ok(replay.next().transpose()?.map(|s| s.observed_at))
    }

    /// The fleet visible at `instant`: each vehicle's latest snapshot with
    /// `instant - horizon <= observed_at <= instant`, restricted to rentable
    /// (neither reserved nor disabled) vehicles.
    pub fn availability_at(
        &self,
        vendor: Option<&str>,
        instant: i64,
        staleness_horizon_sec: Option<i64>,
    ) -> Result<Vec<VehicleSnapshot>, IngestError> {
        let horizon = staleness_horizon_sec.unwrap_or(DEFAULT_STALENESS_HORIZON_SEC);
        match self.earliest_observation(vendor)? {
            None => return Err(IngestError::NoCoverage { instant, earliest: i64::MAX }),
            Some(earliest) if instant < earliest => {
                return Err(IngestError::NoCoverage { instant, earliest })
            }
            Some(_) => {}
        }
        let mut latest: BTreeMap<(String, String), VehicleSnapshot> = BTreeMap::new();
        for snap in self.replay(vendor, instant - horizon, instant + 1)? {
            let snap = snap?;
            // replay order is non-decreasing, so the last write wins
            latest.insert((snap.vendor_id.clone(), snap.vehicle_id.clone()), snap);
        }
        Ok(latest.into_values().filter(VehicleSnapshot::is_available).collect())
    }

    /// Renders one vendor-day segment as JSON lines for inspection.
    pub fn export_jsonl(&self, vendor_id: &str, day: NaiveDate) -> Result<String, IngestError> {
        let day_start = day.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp();
        let mut out = String::new();
        for snap in self.replay(Some(vendor_id), day_start, day_start + 86_400)? {
            let snap = snap?;
            out.push_str(&serde_json::to_string(&snap).expect("snapshot serializes"));
            out.push('\n');
        }
        Ok(out)
    }
}

fn encode_record(buf: &mut Vec<u8>, snap: &VehicleSnapshot) {
    let id = snap.vehicle_id.as_bytes();
    let mut flags = 0u8;
    if snap.is_reserved {
        flags |= FLAG_RESERVED;
    }
    if snap.is_disabled {
        flags |= FLAG_DISABLED;
    }
    if snap.battery_pct.is_some() {
        flags |= FLAG_BATTERY;
    }
    let body_len = 2 + id.len() + 8 + 8 + 8 + 1 + if snap.battery_pct.is_some() { 8 } else { 0 };
    buf.extend_from_slice(&(body_len as u32).to_le_bytes());
    buf.extend_from_slice(&(id.len() as u16).to_le_bytes());
    buf.extend_from_slice(id);
    buf.extend_from_slice(&snap.point.lat.to_le_bytes());
    buf.extend_from_slice(&snap.point.lon.to_le_bytes());
    buf.extend_from_slice(&snap.observed_at.to_le_bytes());
    buf.push(flags);
    if let Some(b) = snap.battery_pct {
        buf.extend_from_slice(&b.to_le_bytes());
    }
}

fn decode_records(
    bytes: &[u8],
    vendor_id: &str,
    path: &Path,
) -> Result<Vec<VehicleSnapshot>, IngestError> {
    let corrupt = |offset: usize| IngestError::CorruptSegment {
        path: path.display().to_string(),
        offset: offset as u64,
    };
    let mut out = Vec::new();
    let mut at = 0usize;
    while at < bytes.len() {
        let rec_start = at;
        let len = u32::from_le_bytes(bytes.get(at..at + 4).ok_or(corrupt(at))?.try_into().unwrap()) as usize;
        at += 4;
        let body = bytes.get(at..at + len).ok_or(corrupt(rec_start))?;
        at += len;

        let id_len = u16::from_le_bytes(body.get(0..2).ok_or(corrupt(rec_start))?.try_into().unwrap()) as usize;
        let mut p = 2;
        let id = body.get(p..p + id_len).ok_or(corrupt(rec_start))?;
        p += id_len;
        let f64_at = |b: &[u8], q: usize| -> Result<f64, IngestError> {
            Ok(f64::from_le_bytes(b.get(q..q + 8).ok_or(corrupt(rec_start))?.try_into().unwrap()))
        };
        let lat = f64_at(body, p)?;
        let lon = f64_at(body, p + 8)?;
        let observed_at =
            i64::from_le_bytes(body.get(p + 16..p + 24).ok_or(corrupt(rec_start))?.try_into().unwrap());
        let flags = *body.get(p + 24).ok_or(corrupt(rec_start))?;
        let battery_pct =
            if flags & FLAG_BATTERY != 0 { Some(f64_at(body, p + 25)?) } else { None };
        out.push(VehicleSnapshot {
            vendor_id: vendor_id.to_string(),
            vehicle_id: String::from_utf8_lossy(id).into_owned(),
            point: GeoPoint::new(lat, lon),
            observed_at,
            is_reserved: flags & FLAG_RESERVED != 0,
            is_disabled: flags & FLAG_DISABLED != 0,
            battery_pct,
        });
    }
    Ok(out)
}

fn scan_tail(path: &Path) -> Result<SegmentTail, IngestError> {
    if !path.exists() {
        return Ok(SegmentTail::default());
    }
    let bytes = fs::read(path).map_err(IngestError::ArchiveRead)?;
    let vendor = path
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut tail = SegmentTail::default();
    for snap in decode_records(&bytes, &vendor, path)? {
        if snap.observed_at > tail.last_ts {
            tail.last_ts = snap.observed_at;
            tail.ids_at_last.clear();
        }
        if snap.observed_at == tail.last_ts {
            tail.ids_at_last.insert(snap.vehicle_id);
        }
    }
    Ok(tail)
}

/// One vendor's record stream across its day segments, loaded a day at a time.
struct VendorCursor {
    vendor_id: String,
    day_paths: Vec<PathBuf>,
    next_day: usize,
    buffer: std::vec::IntoIter<VehicleSnapshot>,
    start: i64,
    end: i64,
    head: Option<VehicleSnapshot>,
}

impl VendorCursor {
    fn new(
        archive: &SnapshotArchive,
        vendor_id: String,
        days: Vec<NaiveDate>,
        start: i64,
        end: i64,
    ) -> Result<Self, IngestError> {
        let day_paths = days.iter().map(|d| archive.segment_path(&vendor_id, *d)).collect();
        let mut cursor = Self {
            vendor_id,
            day_paths,
            next_day: 0,
            buffer: Vec::new().into_iter(),
            start,
            end,
            head: None,
        };
        cursor.advance()?;
        Ok(cursor)
    }

    fn advance(&mut self) -> Result<(), IngestError> {
        loop {
            if let Some(snap) = self.buffer.next() {
                if snap.observed_at < self.start {
                    continue;
                }
                if snap.observed_at >= self.end {
                    // segments are time-ordered; the rest of this day and all
                    // later days are out of window
                    self.head = None;
                    return Ok(());
                }
                self.head = Some(snap);
                return Ok(());
            }
            if self.next_day >= self.day_paths.len() {
                self.head = None;
                return Ok(());
            }
            let path = &self.day_paths[self.next_day];
            self.next_day += 1;
            let bytes = fs::read(path).map_err(IngestError::ArchiveRead)?;
            self.buffer = decode_records(&bytes, &self.vendor_id, path)?.into_iter();
        }
    }
}

/// Streaming merge of vendor cursors in `(observed_at, vendor, vehicle)` order.
pub struct Replay {
    cursors: Vec<VendorCursor>,
}

impl Replay {
    fn new(cursors: Vec<VendorCursor>) -> Self {
        Self { cursors }
    }
}

impl Iterator for Replay {
    type Item = Result<VehicleSnapshot, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        let best = self
            .cursors
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.head.as_ref().map(|s| (i, s)))
            .min_by(|(_, a), (_, b)| {
                (a.observed_at, &a.vendor_id, &a.vehicle_id).cmp(&(b.observed_at, &b.vendor_id, &b.vehicle_id))
            })
            .map(|(i, _)| i)?;
        let snap = self.cursors[best].head.take().expect("head checked above");
        match self.cursors[best].advance() {
            Ok(()) => Some(Ok(snap)),
            Err(e) => Some(Err(e)),
        }
    }
}
