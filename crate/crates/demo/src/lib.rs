//! Browser demo: MAC inspection, a simulated OUI sweep, and a decay curve.
//! Each export takes plain numbers and returns JSON for the page to draw.

use std::sync::Arc;

use futures::executor::block_on;
use serde::Serialize;
use wasm_bindgen::prelude::*;
use wps_core::crawler::{global_sweep, CrawlOptions, CrawlState};
use wps_core::geo::GeoPosition;
use wps_core::longitudinal::{decay_series, resample};
use wps_core::mac::{MacAddress, Oui};
use wps_core::oui::SeedSet;
use wps_core::sim::world::{Churn, ClusterSpec};
use wps_core::sim::{generate_world, SimLocator, SimService, WorldConfig};

const DEMO_OUI: Oui = Oui::new([0xf0, 0x9f, 0xc2]);
const MAX_POINTS: usize = 3000;

#[derive(Debug, Serialize)]
pub struct MacInfo {
    pub mac: String,
    pub oui: String,
    pub multicast: bool,
    pub locally_administered: bool,
    pub normalized_oui: String,
    /// Same address with the U/L bit flipped.
    pub twin: String,
    /// The two prefixes a sweep would try for this vendor.
    pub sweep_prefixes: [String; 2],
}

pub fn inspect(text: &str) -> Result<MacInfo, String> {
    let mac: MacAddress = text.trim().parse().map_err(|e| format!("{e}"))?;
    let base = mac.normalized_oui();
    Ok(MacInfo {
        mac: mac.to_string(),
        oui: mac.oui().to_string(),
        multicast: mac.is_multicast(),
        locally_administered: mac.is_locally_administered(),
        normalized_oui: base.to_string(),
        twin: mac.with_local_bit(!mac.is_locally_administered()).to_string(),
        sweep_prefixes: [base.to_string(), base.with_local_bit(true).to_string()],
    })
}

#[derive(Debug, Serialize)]
pub struct SweepResult {
    pub aps: usize,
    pub geolocatable: usize,
    pub requests: u64,
    pub guesses: u64,
    pub direct_hits: u64,
    pub expected_hits: f64,
    pub discovered: usize,
    pub amplification: Option<f64>,
    /// All APs (grey) and discovered ones (coloured), subsampled.
    pub world: Vec<[f64; 2]>,
    pub found: Vec<[f64; 2]>,
    pub hits: Vec<[f64; 2]>,
}

fn demo_world(seed: u64, ap_count: usize) -> WorldConfig {
    let clusters = [(47.61, -122.33), (47.25, -122.44), (47.98, -122.20)]
        .iter()
        .enumerate()
        .map(|(i, &(lat, lon))| ClusterSpec {
            center: GeoPosition { lat, lon },
            stddev_km: 4.0 + 2.0 * i as f64,
            ap_count: ap_count / 3 + usize::from(i < ap_count % 3),
        })
        .collect();
    WorldConfig { seed, clusters, vendor_mix: [(DEMO_OUI, 1.0)].into_iter().collect(), ..Default::default() }
}

fn subsample(points: impl ExactSizeIterator<Item = GeoPosition>) -> Vec<[f64; 2]> {
    let step = points.len().div_ceil(MAX_POINTS).max(1);
    points.step_by(step).map(|p| [p.lat, p.lon]).collect()
}

pub fn sweep(seed: u64, ap_count: usize, nearby_cap: usize, per_oui: u64) -> Result<SweepResult, String> {
    let mut config = demo_world(seed, ap_count);
    config.params.nearby_cap = nearby_cap;
    let world = generate_world(&config).map_err(|e| e.to_string())?;
    let aps = world.aps.len();
    let all: Vec<GeoPosition> = world.aps.iter().map(|a| a.true_pos).collect();
    let locator = SimLocator::new(Arc::new(SimService::new(world)));
    let geolocatable = locator.service().view().len();

    // Only the registered prefix: its U/L twin holds no APs in this world.
    let seeds: SeedSet = [DEMO_OUI].into_iter().collect();
    let mut state = CrawlState::new();
    block_on(global_sweep(&locator, &seeds, per_oui, seed, &mut state, &CrawlOptions::default())).map_err(|e| e.to_string())?;

    let c = &state.counters;
    let direct: Vec<GeoPosition> = state
        .discovered
        .values()
        .filter(|r| r.via == wps_core::crawler::Via::Direct)
        .map(|r| r.position())
        .collect();
    Ok(SweepResult {
        aps,
        geolocatable,
        requests: c.requests_sent,
        guesses: per_oui,
        direct_hits: c.direct_hits,
        expected_hits: per_oui as f64 * geolocatable as f64 / f64::from(1u32 << 24),
        discovered: state.discovered.len(),
        amplification: (c.direct_hits > 0).then(|| state.discovered.len() as f64 / c.direct_hits as f64),
        world: subsample(all.into_iter()),
        found: subsample(state.corpus().map(|(_, p)| p).collect::<Vec<_>>().into_iter()),
        hits: direct.iter().map(|p| [p.lat, p.lon]).collect(),
    })
}

#[derive(Debug, Serialize)]
pub struct DecayResult {
    pub sample: usize,
    /// `(day, fraction of day-0 APs still geolocatable)`.
    pub series: Vec<(usize, f64)>,
}

pub fn decay(seed: u64, ap_count: usize, off_prob: f64, on_prob: f64, days: u32, ingestion_days: u32, expunge_days: u32) -> Result<DecayResult, String> {
    let mut config = demo_world(seed, ap_count);
    config.params.churn = Churn { off_prob, on_prob };
    config.params.ingestion_days = ingestion_days;
    config.params.expunge_days = expunge_days;
    config.params.mitigations.nearby_cap = Some(0);
    let world = generate_world(&config).map_err(|e| e.to_string())?;
    let sample: Vec<MacAddress> = world.aps.iter().map(|a| a.bssid).collect();
    let service = Arc::new(SimService::new(world));
    let locator = SimLocator::new(service.clone());
    let mut snaps = Vec::new();
    for d in 0..=days {
        if d > 0 {
            service.advance(1);
        }
        snaps.push(block_on(resample(&locator, &sample, service.view().date)));
    }
    let series = decay_series(&snaps, snaps[0].date).map_err(|e| e.to_string())?;
    Ok(DecayResult { sample: sample.len(), series: series.into_iter().enumerate().map(|(i, (_, f))| (i, f)).collect() })
}

fn json<T: Serialize>(r: Result<T, String>) -> Result<String, String> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
}

#[wasm_bindgen]
pub fn inspect_mac(text: &str) -> Result<String, String> {
    json(inspect(text))
}

#[wasm_bindgen]
pub fn run_sweep(seed: u32, ap_count: u32, nearby_cap: u32, per_oui: u32) -> Result<String, String> {
    json(sweep(seed.into(), ap_count as usize, nearby_cap as usize, per_oui.into()))
}

#[wasm_bindgen]
pub fn run_decay(seed: u32, ap_count: u32, off_prob: f64, on_prob: f64, days: u32, ingestion_days: u32, expunge_days: u32) -> Result<String, String> {
    json(decay(seed.into(), ap_count as usize, off_prob, on_prob, days, ingestion_days, expunge_days))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inspects_bits() {
        let info = inspect("0A:4A:93:12:34:56").unwrap();
        assert!(info.locally_administered && !info.multicast);
        assert_eq!(info.normalized_oui, "08:4a:93");
        assert_eq!(info.twin, "08:4a:93:12:34:56");
        assert_eq!(info.sweep_prefixes, ["08:4a:93".to_string(), "0a:4a:93".to_string()]);
        assert!(inspect("zz").is_err());
    }

    #[test]
    fn sweep_amplifies() {
        let r = sweep(1, 30_000, 400, 16_384).unwrap();
        assert_eq!(r.aps, 30_000);
        assert_eq!(r.requests, 164);
        assert!(r.discovered as u64 >= r.direct_hits);
        if r.direct_hits > 0 {
            assert!(r.amplification.unwrap() > 10.0);
        }
        assert!(r.world.len() <= MAX_POINTS);
    }

    #[test]
    fn decay_starts_at_one_and_falls() {
        let r = decay(2, 3000, 0.05, 0.1, 20, 7, 7).unwrap();
        assert_eq!(r.series.len(), 21);
        assert_eq!(r.series[0].1, 1.0);
        assert!(r.series[20].1 < 0.9);
        assert!(decay(2, 10, 0.05, 0.1, 3, 7, 7).is_ok());
        assert!(decay(2, 10, 1.5, 0.1, 3, 7, 7).is_err());
    }
}
