//! Daily snapshots of a fixed BSSID sample and the analyses run over them:
//! decay, lifetimes, movers, disappearance, inflows and cross-validation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{bin_counts, haversine_unchecked, round8, GeoError, GeoPosition, GeoRegion};
use crate::mac::{MacAddress, Oui};
use crate::oui::OuiRegistry;
use crate::protocol::Locator;

pub const DEFAULT_MOVER_THRESHOLD_KM: f64 = 1.0;
pub const DEFAULT_BIN_PRECISION: usize = 4;

#[derive(Debug, Error)]
pub enum LongitudinalError {
    #[error("no snapshot for baseline date {0}")]
    MissingBaseline(NaiveDate),
    #[error("no snapshot for date {0}")]
    MissingDate(NaiveDate),
    #[error("nothing was geolocatable at the baseline {0}")]
    EmptyBaseline(NaiveDate),
    #[error("reference dataset is empty after dropping (0, 0) rows")]
    EmptyReference,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path} line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// What one day's query said about one BSSID.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observation {
    Found(GeoPosition),
    /// The service answered with the not-found sentinel.
    NotFound,
    /// The query itself failed; says nothing about the AP.
    Error,
}

impl Observation {
    pub fn position(&self) -> Option<GeoPosition> {
        match self {
            Observation::Found(p) => Some(*p),
            _ => None,
        }
    }

    pub fn status(&self) -> &'static str {
        match self {
            Observation::Found(_) => "found",
            Observation::NotFound => "notfound",
            Observation::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub date: NaiveDate,
    pub records: BTreeMap<MacAddress, Observation>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotRow {
    date: NaiveDate,
    bssid: MacAddress,
    lat: Option<f64>,
    lon: Option<f64>,
    status: String,
}

impl Snapshot {
    pub fn new(date: NaiveDate) -> Self {
        Snapshot { date, records: BTreeMap::new() }
    }

    pub fn get(&self, bssid: MacAddress) -> Option<Observation> {
        self.records.get(&bssid).copied()
    }

    pub fn found(&self) -> impl Iterator<Item = (MacAddress, GeoPosition)> + '_ {
        self.records.iter().filter_map(|(m, o)| o.position().map(|p| (*m, p)))
    }

    pub fn is_found(&self, bssid: MacAddress) -> bool {
        matches!(self.records.get(&bssid), Some(Observation::Found(_)))
    }

    pub fn is_error(&self, bssid: MacAddress) -> bool {
        matches!(self.records.get(&bssid), Some(Observation::Error))
    }

    /// CSV `date,bssid,lat,lon,status`, rows sorted by BSSID. Not-found rows
    /// carry the sentinel coordinates; error rows leave them empty.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for (bssid, obs) in &self.records {
            let (lat, lon) = match obs {
                Observation::Found(p) => (Some(round8(p.lat)), Some(round8(p.lon))),
                Observation::NotFound => (Some(GeoPosition::NOT_FOUND.lat), Some(GeoPosition::NOT_FOUND.lon)),
                Observation::Error => (None, None),
            };
            w.serialize(SnapshotRow { date: self.date, bssid: *bssid, lat, lon, status: obs.status().into() })
                .expect("in-memory CSV write");
        }
        if self.records.is_empty() {
            w.write_record(["date", "bssid", "lat", "lon", "status"]).expect("in-memory CSV write");
        }
        String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
    }

    pub fn parse_csv(text: &str, path: &Path) -> Result<Self, LongitudinalError> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut date = None;
        let mut records = BTreeMap::new();
        for row in rdr.deserialize::<SnapshotRow>() {
            let row = row.map_err(|source| LongitudinalError::Csv { path: path.into(), source })?;
            let line = records.len() as u64 + 2;
            let bad = |message: String| LongitudinalError::Parse { path: path.into(), line, message };
            if *date.get_or_insert(row.date) != row.date {
                return Err(bad(format!("date {} differs from the file's first row", row.date)));
            }
            let obs = match (row.status.as_str(), row.lat, row.lon) {
                ("found", Some(lat), Some(lon)) => {
                    let p = GeoPosition { lat, lon };
                    if !p.is_valid() {
                        return Err(bad(format!("invalid position {lat},{lon}")));
                    }
                    Observation::Found(p)
                }
                ("notfound", _, _) => Observation::NotFound,
                ("error", _, _) => Observation::Error,
                (status, _, _) => return Err(bad(format!("bad status/coordinates for status {status:?}"))),
            };
            if records.insert(row.bssid, obs).is_some() {
                return Err(bad(format!("duplicate BSSID {}", row.bssid)));
            }
        }
        let date = match date {
            Some(d) => d,
            None => date_from_file_name(path).ok_or_else(|| LongitudinalError::Parse {
                path: path.into(),
                line: 1,
                message: "empty snapshot file must be named YYYY-MM-DD.csv".into(),
            })?,
        };
        Ok(Snapshot { date, records })
    }
}

fn date_from_file_name(path: &Path) -> Option<NaiveDate> {
    path.file_stem()?.to_str()?.parse().ok()
}

/// A directory holding one `YYYY-MM-DD.csv` per snapshot.
#[derive(Debug, Clone)]
pub struct SnapshotStore {
    dir: PathBuf,
}

impl SnapshotStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        SnapshotStore { dir: dir.into() }
    }

    pub fn path_for(&self, date: NaiveDate) -> PathBuf {
        self.dir.join(format!("{date}.csv"))
    }

    pub fn write(&self, snapshot: &Snapshot) -> Result<PathBuf, LongitudinalError> {
        let path = self.path_for(snapshot.date);
        let io = |source| LongitudinalError::Io { path: path.clone(), source };
        std::fs::create_dir_all(&self.dir).map_err(io)?;
        crate::io::write_atomic(&path, snapshot.to_csv().as_bytes()).map_err(io)?;
        Ok(path)
    }

    /// Every snapshot in the directory, oldest first.
    pub fn load_all(&self) -> Result<Vec<Snapshot>, LongitudinalError> {
        let io = |source| LongitudinalError::Io { path: self.dir.clone(), source };
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&self.dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "csv") && date_from_file_name(p).is_some())
            .collect();
        paths.sort();
        paths
            .iter()
            .map(|p| {
                let text = std::fs::read_to_string(p).map_err(|source| LongitudinalError::Io { path: p.clone(), source })?;
                Snapshot::parse_csv(&text, p)
            })
            .collect()
    }
}

/// Queries every BSSID of `sample` once, in order, and records the answers.
/// Failed chunks become [`Observation::Error`] rows.
pub async fn resample<L: Locator>(locator: &L, sample: &[MacAddress], date: NaiveDate) -> Snapshot {
    let mut snapshot = Snapshot::new(date);
    if sample.is_empty() {
        return snapshot;
    }
    for outcome in locator.locate_all(sample.to_vec()).await {
        match outcome.result {
            Ok(resp) => {
                for rec in resp.requested {
                    let obs = if rec.is_found() { Observation::Found(rec.pos) } else { Observation::NotFound };
                    snapshot.records.insert(rec.bssid, obs);
                }
            }
            Err(_) => {
                for b in outcome.bssids {
                    snapshot.records.insert(b, Observation::Error);
                }
            }
        }
    }
    snapshot
}

fn by_date(snapshots: &[Snapshot], date: NaiveDate) -> Option<&Snapshot> {
    snapshots.iter().find(|s| s.date == date)
}

fn sorted(snapshots: &[Snapshot]) -> Vec<&Snapshot> {
    let mut v: Vec<&Snapshot> = snapshots.iter().collect();
    v.sort_by_key(|s| s.date);
    v
}

/// Fraction of the baseline's geolocatable BSSIDs still geolocatable on each
/// date. BSSIDs whose query failed on a date are left out of that date's
/// denominator; a date where every baseline query failed is skipped.
pub fn decay_series(snapshots: &[Snapshot], baseline: NaiveDate) -> Result<Vec<(NaiveDate, f64)>, LongitudinalError> {
    let base = by_date(snapshots, baseline).ok_or(LongitudinalError::MissingBaseline(baseline))?;
    let base_set: Vec<MacAddress> = base.found().map(|(m, _)| m).collect();
    if base_set.is_empty() {
        return Err(LongitudinalError::EmptyBaseline(baseline));
    }
    let mut out = Vec::new();
    for snap in sorted(snapshots).into_iter().filter(|s| s.date >= baseline) {
        let mut denom = 0usize;
        let mut still = 0usize;
        for &m in &base_set {
            match snap.get(m) {
                Some(Observation::Error) => {}
                Some(Observation::Found(_)) => {
                    denom += 1;
                    still += 1;
                }
                _ => denom += 1,
            }
        }
        if denom > 0 {
            out.push((snap.date, still as f64 / denom as f64));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lifetime {
    pub bssid: MacAddress,
    pub days_geolocatable: u32,
    /// Not-found on some day between its first and last geolocatable day.
    pub had_gap: bool,
}

/// Lifetimes of every BSSID geolocatable on at least one snapshot.
pub fn lifetimes(snapshots: &[Snapshot]) -> Vec<Lifetime> {
    let snaps = sorted(snapshots);
    let mut all: BTreeSet<MacAddress> = BTreeSet::new();
    for s in &snaps {
        all.extend(s.found().map(|(m, _)| m));
    }
    all.into_iter()
        .map(|bssid| {
            let mut days = 0;
            let mut absent_since_found = false;
            let mut had_gap = false;
            for s in &snaps {
                match s.get(bssid) {
                    Some(Observation::Found(_)) => {
                        had_gap |= absent_since_found;
                        absent_since_found = false;
                        days += 1;
                    }
                    Some(Observation::Error) => {}
                    _ => absent_since_found = days > 0,
                }
            }
            Lifetime { bssid, days_geolocatable: days, had_gap }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub value: f64,
    pub count: usize,
    pub cumulative: f64,
}

/// Empirical CDF: one row per distinct value, ascending.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Cdf {
    pub rows: Vec<CdfRow>,
    pub total: usize,
    pub median: Option<f64>,
}

impl Cdf {
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = values.into_iter().filter(|x| !x.is_nan()).collect();
        v.sort_by(f64::total_cmp);
        let total = v.len();
        let median = match total {
            0 => None,
            n if n % 2 == 1 => Some(v[n / 2]),
            n => Some((v[n / 2 - 1] + v[n / 2]) / 2.0),
        };
        let mut rows: Vec<CdfRow> = Vec::new();
        for (i, x) in v.iter().enumerate() {
            match rows.last_mut() {
                Some(r) if r.value == *x => r.count += 1,
                _ => rows.push(CdfRow { value: *x, count: 1, cumulative: 0.0 }),
            }
            rows.last_mut().expect("just pushed").cumulative = (i + 1) as f64 / total as f64;
        }
        Cdf { rows, total, median }
    }

    pub fn to_csv(&self, value_header: &str) -> String {
        let mut out = format!("{value_header},count,cumulative\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{:.6}\n", r.value, r.count, r.cumulative));
        }
        out
    }
}

pub fn lifetime_cdf(lifetimes: &[Lifetime]) -> Cdf {
    Cdf::from_values(lifetimes.iter().map(|l| f64::from(l.days_geolocatable)))
}

/// How a trajectory's movement is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveMetric {
    /// Largest distance between any two positions.
    #[default]
    MaxDisplacement,
    /// Sum of consecutive hops.
    PathLength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementEvent {
    pub bssid: MacAddress,
    pub positions: Vec<(NaiveDate, GeoPosition)>,
    pub max_displacement_km: f64,
    pub path_length_km: f64,
    /// The extremal pair, earlier one first.
    pub from: GeoPosition,
    pub to: GeoPosition,
}

impl MovementEvent {
    pub fn distance_km(&self, metric: MoveMetric) -> f64 {
        match metric {
            MoveMetric::MaxDisplacement => self.max_displacement_km,
            MoveMetric::PathLength => self.path_length_km,
        }
    }
}

/// BSSIDs whose geolocatable trajectory moved more than `threshold_km`.
pub fn detect_movers(snapshots: &[Snapshot], threshold_km: f64, metric: MoveMetric) -> Vec<MovementEvent> {
    let mut trajectories: BTreeMap<MacAddress, Vec<(NaiveDate, GeoPosition)>> = BTreeMap::new();
    for s in sorted(snapshots) {
        for (m, p) in s.found() {
            trajectories.entry(m).or_default().push((s.date, p));
        }
    }
    trajectories
        .into_iter()
        .filter_map(|(bssid, positions)| {
            if positions.len() < 2 {
                return None;
            }
            let mut best = (0.0, 0, 0);
            for i in 0..positions.len() {
                for j in i + 1..positions.len() {
                    let d = haversine_unchecked(positions[i].1, positions[j].1);
                    if d > best.0 {
                        best = (d, i, j);
                    }
                }
            }
            let path: f64 = positions.windows(2).map(|w| haversine_unchecked(w[0].1, w[1].1)).sum();
            let event = MovementEvent {
                bssid,
                from: positions[best.1].1,
                to: positions[best.2].1,
                max_displacement_km: best.0,
                path_length_km: path,
                positions,
            };
            (event.distance_km(metric) > threshold_km).then_some(event)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum MoverFilter {
    #[default]
    All,
    /// Matches on the normalized OUI.
    Oui(Oui),
    /// Matches the (alias-normalized) vendor name, case-insensitively.
    Vendor(String),
}

impl MoverFilter {
    pub fn matches(&self, bssid: MacAddress, registry: Option<&OuiRegistry>) -> bool {
        match self {
            MoverFilter::All => true,
            MoverFilter::Oui(o) => bssid.normalized_oui() == o.normalized(),
            MoverFilter::Vendor(v) => {
                registry.is_some_and(|r| r.vendor_of(bssid).name().eq_ignore_ascii_case(v))
            }
        }
    }
}

pub fn movement_cdf(
    events: &[MovementEvent],
    filter: &MoverFilter,
    registry: Option<&OuiRegistry>,
    metric: MoveMetric,
) -> Cdf {
    Cdf::from_values(events.iter().filter(|e| filter.matches(e.bssid, registry)).map(|e| e.distance_km(metric)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisappearanceReport {
    pub region: GeoRegion,
    pub t0: NaiveDate,
    pub t1: NaiveDate,
    pub present_at_t0: BTreeSet<MacAddress>,
    pub present_at_t1: BTreeSet<MacAddress>,
    /// In-region at t0, not in-region at t1.
    pub vanished: BTreeSet<MacAddress>,
    /// Part of `vanished` that was geolocated outside the region at t1.
    pub relocated: BTreeSet<MacAddress>,
    /// Part of `vanished` whose t1 query failed.
    pub unknown: BTreeSet<MacAddress>,
    /// Vanished BSSIDs binned by their t0 position.
    pub bins: BTreeMap<String, usize>,
}

impl DisappearanceReport {
    pub fn vanished_fraction(&self) -> f64 {
        if self.present_at_t0.is_empty() {
            0.0
        } else {
            self.vanished.len() as f64 / self.present_at_t0.len() as f64
        }
    }
}

pub fn disappearance(
    snapshots: &[Snapshot],
    region: &GeoRegion,
    t0: NaiveDate,
    t1: NaiveDate,
    precision: usize,
) -> Result<DisappearanceReport, LongitudinalError> {
    let s0 = by_date(snapshots, t0).ok_or(LongitudinalError::MissingDate(t0))?;
    let s1 = by_date(snapshots, t1).ok_or(LongitudinalError::MissingDate(t1))?;
    let in_region = |s: &Snapshot| -> BTreeSet<MacAddress> {
        s.found().filter(|(_, p)| region.contains(*p)).map(|(m, _)| m).collect()
    };
    let present_at_t0 = in_region(s0);
    let present_at_t1 = in_region(s1);
    let vanished: BTreeSet<MacAddress> = present_at_t0.difference(&present_at_t1).copied().collect();
    let relocated = vanished.iter().copied().filter(|m| s1.is_found(*m)).collect();
    let unknown = vanished.iter().copied().filter(|m| s1.is_error(*m)).collect();
    let origins: Vec<GeoPosition> = vanished.iter().filter_map(|m| s0.get(*m).and_then(|o| o.position())).collect();
    let bins = bin_counts(&origins, precision)?;
    Ok(DisappearanceReport { region: region.clone(), t0, t1, present_at_t0, present_at_t1, vanished, relocated, unknown, bins })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InflowReport {
    pub region: GeoRegion,
    /// Last out-of-region sighting before the first in-region one.
    pub origins: BTreeMap<MacAddress, (NaiveDate, GeoPosition)>,
    pub bins: BTreeMap<String, usize>,
}

pub fn inflows(snapshots: &[Snapshot], region: &GeoRegion, precision: usize) -> Result<InflowReport, LongitudinalError> {
    let mut last_outside: BTreeMap<MacAddress, (NaiveDate, GeoPosition)> = BTreeMap::new();
    let mut entered: BTreeSet<MacAddress> = BTreeSet::new();
    let mut origins = BTreeMap::new();
    for s in sorted(snapshots) {
        for (m, p) in s.found() {
            if entered.contains(&m) {
                continue;
            }
            if region.contains(p) {
                entered.insert(m);
                if let Some(origin) = last_outside.remove(&m) {
                    origins.insert(m, origin);
                }
            } else {
                last_outside.insert(m, (s.date, p));
            }
        }
    }
    let bins = bin_counts(origins.values().map(|(_, p)| p), precision)?;
    Ok(InflowReport { region: region.clone(), origins, bins })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationStats {
    pub reference_rows: usize,
    pub null_island_dropped: usize,
    pub compared: usize,
    /// Compared BSSIDs the candidate does not geolocate.
    pub unknown: usize,
    pub known: usize,
    pub within: usize,
    pub agreement_km: f64,
    pub unknown_fraction: f64,
    /// Share of `known` within `agreement_km`.
    pub within_fraction: f64,
}

pub type Dataset = BTreeMap<MacAddress, GeoPosition>;

/// Compares a reference dataset against a candidate. Reference rows at exactly
/// (0, 0) are dropped first; a candidate row that is missing or at the
/// sentinel counts as unknown.
pub fn cross_validate(reference: &Dataset, candidate: &Dataset, agreement_km: f64) -> Result<ValidationStats, LongitudinalError> {
    let mut stats = ValidationStats {
        reference_rows: reference.len(),
        null_island_dropped: 0,
        compared: 0,
        unknown: 0,
        known: 0,
        within: 0,
        agreement_km,
        unknown_fraction: 0.0,
        within_fraction: 0.0,
    };
    for (m, r) in reference {
        if *r == GeoPosition::NULL_ISLAND {
            stats.null_island_dropped += 1;
            continue;
        }
        stats.compared += 1;
        match candidate.get(m).filter(|c| !c.is_sentinel()) {
            None => stats.unknown += 1,
            Some(c) => {
                stats.known += 1;
                if haversine_unchecked(*r, *c) <= agreement_km {
                    stats.within += 1;
                }
            }
        }
    }
    if stats.compared == 0 {
        return Err(LongitudinalError::EmptyReference);
    }
    stats.unknown_fraction = stats.unknown as f64 / stats.compared as f64;
    stats.within_fraction = if stats.known == 0 { 0.0 } else { stats.within as f64 / stats.known as f64 };
    Ok(stats)
}

#[derive(Debug, Deserialize)]
struct DatasetRow {
    bssid: String,
    lat: f64,
    lon: f64,
}

/// Reads a `bssid,lat,lon` CSV (extra columns ignored). Later rows for the
/// same BSSID replace earlier ones.
pub fn load_dataset(path: &Path) -> Result<Dataset, LongitudinalError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|source| LongitudinalError::Csv { path: path.into(), source })?;
    let mut out = Dataset::new();
    for (i, row) in rdr.deserialize::<DatasetRow>().enumerate() {
        let row = row.map_err(|source| LongitudinalError::Csv { path: path.into(), source })?;
        let bad = |message: String| LongitudinalError::Parse { path: path.into(), line: i as u64 + 2, message };
        let bssid: MacAddress = row.bssid.parse().map_err(|e| bad(format!("{e}")))?;
        let p = GeoPosition { lat: row.lat, lon: row.lon };
        if !p.is_wire_valid() {
            return Err(bad(format!("invalid position {},{}", row.lat, row.lon)));
        }
        out.insert(bssid, p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 3, 1).unwrap() + chrono::Days::new(u64::from(day))
    }

    fn m(i: u64) -> MacAddress {
        MacAddress::from_u64(0x0011_2200_0000 + i)
    }

    fn p(lat: f64, lon: f64) -> GeoPosition {
        GeoPosition { lat, lon }
    }

    fn snap(day: u32, rows: &[(u64, Observation)]) -> Snapshot {
        Snapshot { date: d(day), records: rows.iter().map(|(i, o)| (m(*i), *o)).collect() }
    }

    #[test]
    fn snapshot_csv_round_trip() {
        let s = snap(0, &[(1, Observation::Found(p(1.5, -2.25))), (2, Observation::NotFound), (3, Observation::Error)]);
        let text = s.to_csv();
        assert!(text.starts_with("date,bssid,lat,lon,status\n"));
        assert!(text.contains("2024-03-01,00:11:22:00:00:02,-180.0,-180.0,notfound"));
        assert_eq!(Snapshot::parse_csv(&text, Path::new("x.csv")).unwrap(), s);
        let empty = Snapshot::new(d(4));
        assert_eq!(Snapshot::parse_csv(&empty.to_csv(), Path::new("2024-03-05.csv")).unwrap(), empty);
    }

    #[test]
    fn store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = SnapshotStore::new(dir.path().join("snaps"));
        let a = snap(1, &[(1, Observation::Found(p(1.0, 1.0)))]);
        let b = snap(0, &[(1, Observation::NotFound)]);
        store.write(&a).unwrap();
        store.write(&b).unwrap();
        assert_eq!(store.load_all().unwrap(), vec![b, a]);
    }

    #[test]
    fn decay_basics() {
        let f = Observation::Found(p(1.0, 1.0));
        let snaps = vec![
            snap(0, &[(1, f), (2, f), (3, f), (4, f)]),
            snap(1, &[(1, f), (2, f), (3, Observation::NotFound), (4, Observation::Error)]),
            snap(2, &[(1, f), (2, f), (3, f), (4, f), (5, f)]),
        ];
        let series = decay_series(&snaps, d(0)).unwrap();
        assert_eq!(series, vec![(d(0), 1.0), (d(1), 2.0 / 3.0), (d(2), 1.0)]);
        assert!(matches!(decay_series(&snaps, d(9)), Err(LongitudinalError::MissingBaseline(_))));
    }

    #[test]
    fn lifetime_counting() {
        let f = Observation::Found(p(1.0, 1.0));
        let mut snaps = Vec::new();
        for day in 1..=30 {
            let second = if (1..=10).contains(&day) || (20..=30).contains(&day) { f } else { Observation::NotFound };
            let third = if day == 5 { Observation::Error } else { f };
            snaps.push(snap(day, &[(1, f), (2, second), (3, third)]));
        }
        let lt = lifetimes(&snaps);
        assert_eq!(lt[0], Lifetime { bssid: m(1), days_geolocatable: 30, had_gap: false });
        assert_eq!(lt[1], Lifetime { bssid: m(2), days_geolocatable: 21, had_gap: true });
        assert_eq!(lt[2], Lifetime { bssid: m(3), days_geolocatable: 29, had_gap: false });
        let cdf = lifetime_cdf(&lt);
        assert_eq!(cdf.rows.iter().map(|r| r.count).sum::<usize>(), 3);
        assert_eq!(cdf.rows.last().unwrap().cumulative, 1.0);
    }

    #[test]
    fn mover_examples() {
        let home = p(40.0, -75.0);
        let east = |km: f64| Observation::Found(home.destination(90.0, km));
        let snaps: Vec<Snapshot> = (0..5)
            .map(|day| {
                snap(
                    day,
                    &[
                        // 0.6 km, then another 0.6 km
                        (1, east(0.6 * f64::from(day.min(2)))),
                        // back and forth between home and 0.6 km out
                        (2, east(if day % 2 == 0 { 0.0 } else { 0.6 })),
                        (3, east(if day < 3 { 0.0 } else { 4.5 })),
                    ],
                )
            })
            .collect();
        let movers = detect_movers(&snaps, 1.0, MoveMetric::MaxDisplacement);
        let ids: Vec<MacAddress> = movers.iter().map(|e| e.bssid).collect();
        assert_eq!(ids, vec![m(1), m(3)]);
        assert!((movers[0].max_displacement_km - 1.2).abs() < 1e-3);
        assert!((movers[1].max_displacement_km - 4.5).abs() < 1e-3);
        // Path length counts the oscillation.
        let by_path = detect_movers(&snaps, 1.0, MoveMetric::PathLength);
        assert!(by_path.iter().any(|e| e.bssid == m(2)));
    }

    #[test]
    fn movement_cdf_filters() {
        let ev = |oui: u64, km: f64| MovementEvent {
            bssid: MacAddress::from_u64(oui << 24),
            positions: vec![],
            max_displacement_km: km,
            path_length_km: km,
            from: p(0.0, 0.0),
            to: p(0.0, 0.0),
        };
        let events = vec![ev(0x74249f, 2.0), ev(0x74249f, 4.0), ev(0x74249f, 6.0), ev(0x001122, 100.0)];
        let a = MoverFilter::Oui("74:24:9f".parse().unwrap());
        assert_eq!(movement_cdf(&events, &a, None, MoveMetric::MaxDisplacement).median, Some(4.0));
        assert_eq!(movement_cdf(&events, &MoverFilter::All, None, MoveMetric::MaxDisplacement).median, Some(5.0));
        let one = Cdf::from_values([5.0]);
        assert_eq!(one.rows, vec![CdfRow { value: 5.0, count: 1, cumulative: 1.0 }]);
    }

    #[test]
    fn disappearance_sets() {
        let region = GeoRegion::bbox(0.0, 10.0, 0.0, 10.0).unwrap();
        let inside = Observation::Found(p(5.0, 5.0));
        let outside = Observation::Found(p(20.0, 20.0));
        let s0 = snap(0, &[(1, inside), (2, inside), (3, inside), (4, inside), (5, Observation::NotFound)]);
        let s1 = snap(9, &[(1, inside), (2, Observation::NotFound), (3, outside), (4, Observation::Error), (5, inside)]);
        let r = disappearance(&[s0, s1], &region, d(0), d(9), 4).unwrap();
        assert_eq!(r.present_at_t0.len(), 4);
        assert_eq!(r.vanished, [m(2), m(3), m(4)].into_iter().collect());
        assert_eq!(r.relocated, [m(3)].into_iter().collect());
        assert_eq!(r.unknown, [m(4)].into_iter().collect());
        assert_eq!(r.bins.values().sum::<usize>(), 3);
        assert!((r.vanished_fraction() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn inflow_definition() {
        let region = GeoRegion::bbox(0.0, 10.0, 0.0, 10.0).unwrap();
        let origin = p(30.0, 30.0);
        let snaps = vec![
            snap(1, &[(1, Observation::Found(p(1.0, 1.0))), (2, Observation::Found(p(40.0, 40.0)))]),
            snap(3, &[(1, Observation::Found(p(1.0, 1.0))), (2, Observation::Found(origin))]),
            snap(5, &[(2, Observation::NotFound)]),
            snap(9, &[(1, Observation::Found(p(50.0, 50.0))), (2, Observation::Found(p(2.0, 2.0)))]),
        ];
        let r = inflows(&snaps, &region, 4).unwrap();
        assert_eq!(r.origins.len(), 1);
        assert_eq!(r.origins[&m(2)], (d(3), origin));
        assert_eq!(r.bins.values().sum::<usize>(), 1);
    }

    #[test]
    fn cross_validation_identity_and_filtering() {
        let reference: Dataset = [(m(1), p(1.0, 1.0)), (m(2), GeoPosition::NULL_ISLAND), (m(3), p(2.0, 2.0))].into();
        let s = cross_validate(&reference, &reference, 1.0).unwrap();
        assert_eq!((s.compared, s.null_island_dropped, s.unknown, s.within), (2, 1, 0, 2));
        let candidate: Dataset = [(m(1), GeoPosition::NOT_FOUND), (m(3), p(2.0, 2.001))].into();
        let s = cross_validate(&reference, &candidate, 1.0).unwrap();
        assert_eq!((s.unknown, s.known, s.within), (1, 1, 1));
        let only_null: Dataset = [(m(2), GeoPosition::NULL_ISLAND)].into();
        assert!(matches!(cross_validate(&only_null, &only_null, 1.0), Err(LongitudinalError::EmptyReference)));
    }

    fn brute_max_pairwise(points: &[GeoPosition]) -> f64 {
        let mut best: f64 = 0.0;
        for a in points {
            for b in points {
                best = best.max(crate::geo::haversine_km(*a, *b).unwrap());
            }
        }
        best
    }

    proptest! {
        #[test]
        fn movers_match_brute_force(
            steps in prop::collection::vec((0.0f64..360.0, 0.0f64..0.8), 2..60),
            threshold in 0.5f64..3.0,
        ) {
            let mut pos = p(45.0, 7.0);
            let mut snaps = Vec::new();
            let mut points = Vec::new();
            for (day, (bearing, km)) in steps.iter().enumerate() {
                pos = pos.destination(*bearing, *km);
                points.push(pos);
                snaps.push(snap(day as u32, &[(1, Observation::Found(pos))]));
            }
            let flagged = !detect_movers(&snaps, threshold, MoveMetric::MaxDisplacement).is_empty();
            prop_assert_eq!(flagged, brute_max_pairwise(&points) > threshold);
        }

        #[test]
        fn decay_fractions_in_unit_interval(rows in prop::collection::vec(prop::collection::vec(0u8..3, 8), 1..10)) {
            let snaps: Vec<Snapshot> = rows.iter().enumerate().map(|(day, row)| {
                let obs: Vec<(u64, Observation)> = row.iter().enumerate().map(|(i, s)| (i as u64, match s {
                    0 => Observation::Found(p(1.0, 1.0)),
                    1 => Observation::NotFound,
                    _ => Observation::Error,
                })).collect();
                snap(day as u32, &obs)
            }).collect();
            if let Ok(series) = decay_series(&snaps, d(0)) {
                prop_assert_eq!(series[0], (d(0), 1.0));
                prop_assert!(series.iter().all(|(_, f)| (0.0..=1.0).contains(f)));
            }
            let lt = lifetimes(&snaps);
            prop_assert_eq!(lifetime_cdf(&lt).rows.iter().map(|r| r.count).sum::<usize>(), lt.len());
            prop_assert!(lt.iter().all(|l| l.days_geolocatable as usize <= snaps.len()));
        }
    }
}
