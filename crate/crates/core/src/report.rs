//! Vendor attribution tables and corpus exports.
//!
//! Export formats, all byte-deterministic for a given input:
//!
//! * `csv`: `bssid,lat,lon,first_seen,last_seen`, rows sorted by BSSID.
//! * `geojson`: a FeatureCollection of Points (`[lon, lat]`), features sorted
//!   by BSSID, properties `bssid`, `first_seen`, `last_seen`.
//! * `bins`: `geohash,count`, rows sorted lexicographically by geohash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::crawler::CrawlState;
use crate::geo::{bin_counts, round8, GeoError, GeoPosition};
use crate::mac::{MacAddress, Oui};
use crate::oui::OuiRegistry;

pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("unknown export format {0:?} (expected csv, geojson or bins)")]
    Format(String),
}

/// One discovered BSSID as exported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRow {
    pub bssid: MacAddress,
    pub lat: f64,
    pub lon: f64,
    pub first_seen: NaiveDate,
    pub last_seen: NaiveDate,
}

impl CorpusRow {
    pub fn position(&self) -> GeoPosition {
        GeoPosition { lat: self.lat, lon: self.lon }
    }
}

/// Rows for every discovered BSSID, sorted by BSSID.
pub fn corpus_rows(state: &CrawlState) -> Vec<CorpusRow> {
    state
        .discovered
        .iter()
        .map(|(m, r)| {
            let p = r.position();
            CorpusRow { bssid: *m, lat: round8(p.lat), lon: round8(p.lon), first_seen: r.first_seen, last_seen: r.last_seen }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuiCount {
    pub oui: Oui,
    pub vendor: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VendorCount {
    pub vendor: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct VendorReport {
    pub total: usize,
    /// By normalized OUI, most common first, ties by OUI.
    pub by_oui: Vec<OuiCount>,
    /// By normalized vendor name, including an `Unlisted` row when nonzero.
    pub by_vendor: Vec<VendorCount>,
    pub unlisted: usize,
    /// `(rank, cumulative share)` over `by_oui`.
    pub rank_cdf: Vec<(usize, f64)>,
    pub top_k: usize,
}

pub fn vendor_report(corpus: impl IntoIterator<Item = MacAddress>, registry: &OuiRegistry, top_k: usize) -> VendorReport {
    let mut ouis: BTreeMap<Oui, usize> = BTreeMap::new();
    let mut total = 0;
    for m in corpus {
        *ouis.entry(m.normalized_oui()).or_insert(0) += 1;
        total += 1;
    }
    let mut vendors: BTreeMap<String, usize> = BTreeMap::new();
    let mut unlisted = 0;
    let mut by_oui: Vec<OuiCount> = ouis
        .into_iter()
        .map(|(oui, count)| {
            let vendor = match registry.get(oui) {
                Some(name) => {
                    *vendors.entry(name.to_string()).or_insert(0) += count;
                    name.to_string()
                }
                None => {
                    unlisted += count;
                    "Unlisted".to_string()
                }
            };
            OuiCount { oui, vendor, count }
        })
        .collect();
    by_oui.sort_by(|a, b| b.count.cmp(&a.count).then(a.oui.cmp(&b.oui)));
    let mut by_vendor: Vec<VendorCount> = vendors.into_iter().map(|(vendor, count)| VendorCount { vendor, count }).collect();
    if unlisted > 0 {
        by_vendor.push(VendorCount { vendor: "Unlisted".into(), count: unlisted });
    }
    by_vendor.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.vendor.cmp(&b.vendor)));
    let mut running = 0;
    let rank_cdf = by_oui
        .iter()
        .enumerate()
        .map(|(i, row)| {
            running += row.count;
            (i + 1, running as f64 / total as f64)
        })
        .collect();
    VendorReport { total, by_oui, by_vendor, unlisted, rank_cdf, top_k }
}

impl VendorReport {
    pub fn oui_table_csv(&self, all: bool) -> String {
        let n = if all { self.by_oui.len() } else { self.top_k };
        let mut out = String::from("oui,vendor,count\n");
        for r in self.by_oui.iter().take(n) {
            out.push_str(&csv_line(&[&r.oui.to_string(), &r.vendor, &r.count.to_string()]));
        }
        out
    }

    pub fn vendor_table_csv(&self, all: bool) -> String {
        let n = if all { self.by_vendor.len() } else { self.top_k };
        let mut out = String::from("vendor,count\n");
        for r in self.by_vendor.iter().take(n) {
            out.push_str(&csv_line(&[&r.vendor, &r.count.to_string()]));
        }
        out
    }

    pub fn rank_cdf_csv(&self) -> String {
        let mut out = String::from("rank,cumulative\n");
        for (rank, c) in &self.rank_cdf {
            out.push_str(&format!("{rank},{c:.6}\n"));
        }
        out
    }
}

fn csv_line(fields: &[&str]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(fields).expect("in-memory CSV write");
    String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    GeoJson,
    Bins { precision: usize },
}

impl FromStr for ExportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, ReportError> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "geojson" => Ok(ExportFormat::GeoJson),
            "bins" => Ok(ExportFormat::Bins { precision: 4 }),
            _ => Err(ReportError::Format(s.to_string())),
        }
    }
}

pub fn corpus_csv(rows: &[CorpusRow]) -> String {
    let mut sorted: Vec<&CorpusRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.bssid);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bssid", "lat", "lon", "first_seen", "last_seen"]).expect("in-memory CSV write");
    for r in sorted {
        w.write_record([
            r.bssid.to_string(),
            format!("{:.8}", r.lat),
            format!("{:.8}", r.lon),
            r.first_seen.to_string(),
            r.last_seen.to_string(),
        ])
        .expect("in-memory CSV write");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
}

pub fn corpus_geojson(rows: &[CorpusRow]) -> String {
    let mut sorted: Vec<&CorpusRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.bssid);
    let features: Vec<Value> = sorted
        .into_iter()
        .map(|r| {
            json!({
                "type": "Feature",
                "geometry": { "type": "Point", "coordinates": [round8(r.lon), round8(r.lat)] },
                "properties": {
                    "bssid": r.bssid.to_string(),
                    "first_seen": r.first_seen.to_string(),
                    "last_seen": r.last_seen.to_string(),
                },
            })
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&json!({ "type": "FeatureCollection", "features": features }))
        .expect("JSON values serialize");
    text.push('\n');
    text
}

pub fn bins_csv(bins: &BTreeMap<String, usize>) -> String {
    let mut out = String::from("geohash,count\n");
    for (hash, count) in bins {
        out.push_str(&format!("{hash},{count}\n"));
    }
    out
}

pub fn render(rows: &[CorpusRow], format: ExportFormat) -> Result<String, ReportError> {
    Ok(match format {
        ExportFormat::Csv => corpus_csv(rows),
        ExportFormat::GeoJson => corpus_geojson(rows),
        ExportFormat::Bins { precision } => {
            let positions: Vec<GeoPosition> = rows.iter().map(CorpusRow::position).collect();
            bins_csv(&bin_counts(&positions, precision)?)
        }
    })
}

pub fn export(rows: &[CorpusRow], format: ExportFormat, path: &Path) -> Result<(), ReportError> {
    let text = render(rows, format)?;
    crate::io::write_atomic(path, text.as_bytes()).map_err(|source| ReportError::Write { path: path.into(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry() -> OuiRegistry {
        OuiRegistry::parse("74-24-9F   (hex)\t\tTIBRO Corp.\n00-11-22   (hex)\t\tCIMSYS Inc\n").0
    }

    fn row(i: u64, lat: f64, lon: f64) -> CorpusRow {
        let d = NaiveDate::from_ymd_opt(2024, 5, 1).unwrap();
        CorpusRow { bssid: MacAddress::from_u64(0x74249f000000 + i), lat, lon, first_seen: d, last_seen: d }
    }

    #[test]
    fn single_vendor_corpus() {
        let corpus = (0..10).map(|i| MacAddress::from_u64(0x74249f000000 + i));
        let r = vendor_report(corpus, &registry(), 5);
        assert_eq!(r.by_oui, vec![OuiCount { oui: "74:24:9f".parse().unwrap(), vendor: "TIBRO Corp.".into(), count: 10 }]);
        assert_eq!(r.by_vendor, vec![VendorCount { vendor: "TIBRO Corp.".into(), count: 10 }]);
        assert_eq!(r.rank_cdf, vec![(1, 1.0)]);
    }

    #[test]
    fn unlisted_and_totals() {
        // Random locally administered BSSIDs; normalized prefixes unregistered.
        let corpus = vec![
            "da:a1:19:00:00:01".parse().unwrap(),
            "3a:00:00:00:00:02".parse().unwrap(),
            "f2:12:34:00:00:03".parse().unwrap(),
            "76:24:9f:00:00:04".parse().unwrap(),
        ];
        let r = vendor_report(corpus, &registry(), 5);
        assert_eq!(r.unlisted, 3);
        assert_eq!(r.by_oui.iter().map(|o| o.count).sum::<usize>(), 4);
        assert_eq!(r.by_vendor.iter().map(|o| o.count).sum::<usize>(), 4);
        assert_eq!(r.by_vendor.iter().find(|v| v.vendor == "TIBRO Corp.").unwrap().count, 1);
        assert!(r.rank_cdf.windows(2).all(|w| w[0].1 <= w[1].1));
        assert_eq!(r.rank_cdf.last().unwrap().1, 1.0);
    }

    #[test]
    fn empty_corpus() {
        let r = vendor_report(std::iter::empty(), &registry(), 5);
        assert_eq!(r.total, 0);
        assert!(r.by_oui.is_empty() && r.by_vendor.is_empty() && r.rank_cdf.is_empty());
    }

    #[test]
    fn geojson_single_point_parses_back() {
        let text = corpus_geojson(&[row(1, 12.5, -3.25)]);
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["type"], "FeatureCollection");
        assert_eq!(v["features"].as_array().unwrap().len(), 1);
        assert_eq!(v["features"][0]["geometry"]["type"], "Point");
        assert_eq!(v["features"][0]["geometry"]["coordinates"], json!([-3.25, 12.5]));
        assert_eq!(v["features"][0]["properties"]["bssid"], "74:24:9f:00:00:01");
    }

    #[test]
    fn csv_parses_back_and_is_deterministic() {
        let rows = vec![row(2, 1.0, 2.0), row(1, -1.123456789, 3.0)];
        let text = corpus_csv(&rows);
        assert_eq!(text, corpus_csv(&rows));
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let back: Vec<CorpusRow> = rdr.deserialize().map(Result::unwrap).collect();
        assert_eq!(back[0].bssid, rows[1].bssid);
        assert_eq!(back[0].lat, -1.12345679);
        assert_eq!(back[1], rows[0]);
    }

    #[test]
    fn bins_sorted_lexicographically() {
        let rows = vec![row(1, 57.64911, 10.40744), row(2, 57.64911, 10.40744), row(3, -10.0, -50.0)];
        let text = render(&rows, ExportFormat::Bins { precision: 4 }).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "geohash,count");
        assert_eq!(lines[2], "u4pr,2");
        let keys: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn unwritable_path() {
        let err = export(&[], ExportFormat::Csv, Path::new("/nonexistent-dir/x.csv")).unwrap_err();
        assert!(matches!(err, ReportError::Write { .. }));
    }
}
