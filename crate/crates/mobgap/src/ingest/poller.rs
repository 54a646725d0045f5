//! The polling loop: fetch each vendor endpoint on its cadence, parse, and
//! append to the archive. Endpoint failures are per-cycle statistics with
//! backoff; only archive write failures abort a run.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use super::{IngestError, SnapshotArchive};
use crate::feeds::{parse_gbfs_status, VendorProfile};

/// Time source, injectable so fixture runs are deterministic.
pub trait Clock {
    /// UTC seconds.
    fn now(&self) -> i64;
    /// Blocks (or advances simulated time) until `t`.
    fn sleep_until(&self, t: i64);
}

/// Wall-clock time.
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> i64 {
        chrono::Utc::now().timestamp()
    }

    fn sleep_until(&self, t: i64) {
        let dt = t - self.now();
        if dt > 0 {
            std::thread::sleep(Duration::from_secs(dt as u64));
        }
    }
}

/// Simulated time that jumps instantly on sleep.
pub struct SimClock {
    now: Cell<i64>,
}

impl SimClock {
    pub fn starting_at(t: i64) -> Self {
        Self { now: Cell::new(t) }
    }
}

impl Clock for SimClock {
    fn now(&self) -> i64 {
        self.now.get()
    }

    fn sleep_until(&self, t: i64) {
        if t > self.now.get() {
            self.now.set(t);
        }
    }
}

/// Fetches one endpoint payload.
pub trait Fetcher {
    fn fetch(&self, locator: &str) -> Result<Vec<u8>, String>;
}

/// Resolves `http(s)://` locators over the network and anything else as a
/// local file path. The HTTP timeout defaults to 30 s and can be overridden
/// with the `MOBGAP_HTTP_TIMEOUT_SECS` environment variable.
pub struct LocatorFetcher {
    timeout: Duration,
}

impl Default for LocatorFetcher {
    fn default() -> Self {
        let secs = std::env::var("MOBGAP_HTTP_TIMEOUT_SECS")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(30);
        Self { timeout: Duration::from_secs(secs) }
    }
}

impl Fetcher for LocatorFetcher {
    fn fetch(&self, locator: &str) -> Result<Vec<u8>, String> {
        if locator.starts_with("http://") || locator.starts_with("https://") {
            let agent: ureq::Agent = ureq::Agent::config_builder()
                .timeout_global(Some(self.timeout))
                .build()
                .into();
            let mut resp = agent.get(locator).call().map_err(|e| e.to_string())?;
            resp.body_mut().read_to_vec().map_err(|e| e.to_string())
        } else {
            std::fs::read(locator).map_err(|e| format!("{locator}: {e}"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PollEndpoint {
    pub vendor: VendorProfile,
    pub locator: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PollPlan {
    pub endpoints: Vec<PollEndpoint>,
    /// Spread of initial poll phases, seconds. Zero polls everything at start.
    pub jitter_sec: u32,
}

impl PollPlan {
    pub fn new(endpoints: Vec<PollEndpoint>, jitter_sec: u32) -> Result<Self, IngestError> {
        let mut ids: Vec<&str> = endpoints.iter().map(|e| e.vendor.vendor_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != endpoints.len() {
            return Err(IngestError::Feed(crate::feeds::FeedError::InvalidVendorProfile(
                "poll plan has duplicate vendor_ids".into(),
            )));
        }
        Ok(Self { endpoints, jitter_sec })
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct EndpointStats {
    pub fetches: u64,
    pub fetch_failures: u64,
    pub parse_failures: u64,
    pub appended_cycles: u64,
    pub snapshots_written: u64,
    pub records_dropped: u64,
    pub duplicates_skipped: u64,
    /// Cycles skipped because the payload's `last_updated` had not advanced.
    pub stale_payloads: u64,
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct PollStats {
    pub endpoints: BTreeMap<String, EndpointStats>,
}

impl PollStats {
    pub fn total_fetches(&self) -> u64 {
        self.endpoints.values().map(|e| e.fetches).sum()
    }
}

/// Deterministic per-vendor phase offset in `[0, jitter]`.
fn phase(vendor_id: &str, jitter_sec: u32) -> i64 {
    if jitter_sec == 0 {
        return 0;
    }
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in vendor_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    (h % (jitter_sec as u64 + 1)) as i64
}

fn backoff_delay(consecutive_failures: u32, interval_sec: u32) -> i64 {
    let exp = 5i64.saturating_mul(1i64 << (consecutive_failures.min(16) - 1).min(16));
    exp.min(interval_sec as i64)
}

/// Runs the polling loop until `stop` is set or `deadline` (UTC seconds) is
/// reached. Each endpoint is sampled once per its `poll_interval`; snapshots
/// are stamped with the clock time at fetch and appended to the archive.
pub fn run_poller(
    plan: &PollPlan,
    archive: &mut SnapshotArchive,
    clock: &dyn Clock,
    fetcher: &dyn Fetcher,
    stop: &AtomicBool,
    deadline: Option<i64>,
) -> Result<PollStats, IngestError> {
    struct Slot<'p> {
        endpoint: &'p PollEndpoint,
        next_due: i64,
        consecutive_failures: u32,
        last_payload_ts: Option<i64>,
    }

    let t0 = clock.now();
    let mut slots: Vec<Slot> = plan
        .endpoints
        .iter()
        .map(|endpoint| Slot {
            endpoint,
            next_due: t0 + phase(&endpoint.vendor.vendor_id, plan.jitter_sec),
            consecutive_failures: 0,
            last_payload_ts: None,
        })
        .collect();
    let mut stats = PollStats::default();
    for e in &plan.endpoints {
        stats.endpoints.insert(e.vendor.vendor_id.clone(), EndpointStats::default());
    }

    while !slots.is_empty() {
        if stop.load(Ordering::Relaxed) {
            break;
        }
        let slot_idx = slots
            .iter()
            .enumerate()
            .min_by_key(|(_, s)| (s.next_due, s.endpoint.vendor.vendor_id.clone()))
            .map(|(i, _)| i)
            .expect("slots nonempty");
        let due = slots[slot_idx].next_due;
        if deadline.is_some_and(|d| due >= d) {
            break;
        }
        clock.sleep_until(due);
        if stop.load(Ordering::Relaxed) {
            break;
        }

        let slot = &mut slots[slot_idx];
        let vendor = &slot.endpoint.vendor;
        let entry = stats.endpoints.get_mut(&vendor.vendor_id).expect("preseeded");
        entry.fetches += 1;

        match fetcher.fetch(&slot.endpoint.locator) {
            Err(_) => {
                entry.fetch_failures += 1;
                slot.consecutive_failures += 1;
                slot.next_due = due + backoff_delay(slot.consecutive_failures, vendor.poll_interval_sec);
                continue;
            }
            Ok(bytes) => {
                slot.consecutive_failures = 0;
                slot.next_due = due + vendor.poll_interval_sec as i64;
                match parse_gbfs_status(&bytes, vendor, clock.now()) {
                    Err(_) => entry.parse_failures += 1,
                    Ok(parsed) => {
                        entry.records_dropped += parsed.dropped.len() as u64;
                        // a vendor that hasn't advanced last_updated is re-serving
                        // the same observation; skip rather than re-archive it
                        if parsed.payload_timestamp.is_some()
                            && parsed.payload_timestamp == slot.last_payload_ts
                        {
                            entry.stale_payloads += 1;
                            continue;
                        }
                        slot.last_payload_ts = parsed.payload_timestamp;
                        let outcome = archive.append(&vendor.vendor_id, &parsed.snapshots)?;
                        entry.snapshots_written += outcome.written;
                        entry.duplicates_skipped += outcome.duplicates_skipped;
                        entry.appended_cycles += 1;
                    }
                }
            }
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeds::IdMode;
    use std::cell::RefCell;

    fn vendor(id: &str, interval: u32) -> VendorProfile {
        VendorProfile::new(id, IdMode::Consistent, interval).unwrap()
    }

    fn payload(n: usize) -> Vec<u8> {
        let bikes: Vec<String> = (0..n)
            .map(|i| format!(r#"{{"bike_id":"v{i}","lat":38.9,"lon":-77.0}}"#))
            .collect();
        format!(r#"{{"bikes":[{}]}}"#, bikes.join(",")).into_bytes()
    }

    struct StaticFetcher(Vec<u8>);
    impl Fetcher for StaticFetcher {
        fn fetch(&self, _: &str) -> Result<Vec<u8>, String> {
            Ok(self.0.clone())
        }
    }

    struct SequenceFetcher(RefCell<Vec<Result<Vec<u8>, String>>>);
    impl Fetcher for SequenceFetcher {
        fn fetch(&self, _: &str) -> Result<Vec<u8>, String> {
            let mut seq = self.0.borrow_mut();
            if seq.is_empty() {
                Err("exhausted".into())
            } else {
                seq.remove(0)
            }
        }
    }

    fn run(plan: &PollPlan, fetcher: &dyn Fetcher, minutes: i64) -> (PollStats, tempfile::TempDir) {
        let dir = tempfile::tempdir().unwrap();
        let mut archive = SnapshotArchive::open(dir.path()).unwrap();
        let clock = SimClock::starting_at(1_563_148_800);
        let stop = AtomicBool::new(false);
        let stats = run_poller(plan, &mut archive, &clock, fetcher, &stop, Some(1_563_148_800 + minutes * 60))
            .unwrap();
        (stats, dir)
    }

    #[test]
    fn single_endpoint_cadence() {
        let plan = PollPlan::new(
            vec![PollEndpoint { vendor: vendor("spin", 60), locator: "mem".into() }],
            0,
        )
        .unwrap();
        let (stats, _dir) = run(&plan, &StaticFetcher(payload(2)), 5);
        let e = &stats.endpoints["spin"];
        assert_eq!(e.fetches, 5);
        assert_eq!(e.appended_cycles, 5);
        assert_eq!(e.snapshots_written, 10);
        assert_eq!(e.parse_failures, 0);
    }

    #[test]
    fn malformed_cycle_is_isolated() {
        let plan = PollPlan::new(
            vec![PollEndpoint { vendor: vendor("spin", 60), locator: "mem".into() }],
            0,
        )
        .unwrap();
        let fetcher = SequenceFetcher(RefCell::new(vec![
            Ok(payload(1)),
            Ok(b"{not json".to_vec()),
            Ok(payload(1)),
        ]));
        let (stats, _dir) = run(&plan, &fetcher, 3);
        let e = &stats.endpoints["spin"];
        assert_eq!(e.fetches, 3);
        assert_eq!(e.parse_failures, 1);
        assert_eq!(e.appended_cycles, 2);
    }

    #[test]
    fn two_vendor_cadence() {
        let plan = PollPlan::new(
            vec![
                PollEndpoint { vendor: vendor("a60", 60), locator: "mem".into() },
                PollEndpoint { vendor: vendor("b120", 120), locator: "mem".into() },
            ],
            0,
        )
        .unwrap();
        let (stats, _dir) = run(&plan, &StaticFetcher(payload(1)), 4);
        assert_eq!(stats.endpoints["a60"].appended_cycles, 4);
        assert_eq!(stats.endpoints["b120"].appended_cycles, 2);
    }

    #[test]
    fn stale_payload_skipped() {
        let body = br#"{"last_updated":1000,"bikes":[{"bike_id":"a","lat":1,"lon":2}]}"#.to_vec();
        let plan = PollPlan::new(
            vec![PollEndpoint { vendor: vendor("spin", 60), locator: "mem".into() }],
            0,
        )
        .unwrap();
        let (stats, _dir) = run(&plan, &StaticFetcher(body), 3);
        let e = &stats.endpoints["spin"];
        assert_eq!(e.fetches, 3);
        assert_eq!(e.appended_cycles, 1);
        assert_eq!(e.stale_payloads, 2);
    }

    #[test]
    fn fetch_failures_back_off_and_never_abort() {
        let plan = PollPlan::new(
            vec![PollEndpoint { vendor: vendor("spin", 60), locator: "mem".into() }],
            0,
        )
        .unwrap();
        let fetcher = SequenceFetcher(RefCell::new(vec![Err("boom".into())]));
        let (stats, _dir) = run(&plan, &fetcher, 2);
        let e = &stats.endpoints["spin"];
        assert!(e.fetch_failures >= 2);
        assert_eq!(e.appended_cycles, 0);
    }

    #[test]
    fn rerun_by_same_clock_is_byte_identical() {
        let plan = PollPlan::new(
            vec![PollEndpoint { vendor: vendor("spin", 60), locator: "mem".into() }],
            0,
        )
        .unwrap();
        let hash_dir = |dir: &std::path::Path| {
            let seg = dir.join("spin/20190715.bin");
            std::fs::read(seg).unwrap()
        };
        let (_s1, d1) = run(&plan, &StaticFetcher(payload(3)), 5);
        let (_s2, d2) = run(&plan, &StaticFetcher(payload(3)), 5);
        assert_eq!(hash_dir(d1.path()), hash_dir(d2.path()));
    }

    #[test]
    fn stop_flag_halts_run() {
        let dir = tempfile::tempdir().unwrap();
        let mut archive = SnapshotArchive::open(dir.path()).unwrap();
        let clock = SimClock::starting_at(0);
        let stop = AtomicBool::new(true);
        let plan = PollPlan::new(
            vec![PollEndpoint { vendor: vendor("spin", 60), locator: "mem".into() }],
            0,
        )
        .unwrap();
        let stats =
            run_poller(&plan, &mut archive, &clock, &StaticFetcher(payload(1)), &stop, None).unwrap();
        assert_eq!(stats.total_fetches(), 0);
    }

    #[test]
    fn duplicate_vendor_ids_rejected() {
        assert!(PollPlan::new(
            vec![
                PollEndpoint { vendor: vendor("spin", 60), locator: "x".into() },
                PollEndpoint { vendor: vendor("spin", 120), locator: "y".into() },
            ],
            0,
        )
        .is_err());
    }

    #[test]
    fn file_fetcher_reads_local_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("status.json");
        std::fs::write(&path, payload(1)).unwrap();
        let fetched = LocatorFetcher::default().fetch(path.to_str().unwrap()).unwrap();
        assert_eq!(fetched, payload(1));
        assert!(LocatorFetcher::default().fetch("/nonexistent/su8sh").is_err());
    }
}
