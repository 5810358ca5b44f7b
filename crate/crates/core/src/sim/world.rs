//! Synthetic ground truth: access points, their power history, and what the
//! positioning service currently knows about them.
//!
//! Ingestion is threshold based. An alias enters the database once its AP has
//! been powered for `ingestion_days` consecutive days (an AP switched on at day
//! 0 is geolocatable from day 7 with the default), and leaves it once the AP has
//! been off for `expunge_days`. APs flagged `nomap` are never served.

use std::collections::{BTreeMap, HashMap, HashSet};

use chrono::{Days, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoPosition, GeoRegion};
use crate::mac::{MacAddress, Oui};
use crate::oui::{splitmix64, SuffixPermutation, SUFFIX_SPACE};
use crate::protocol::DEFAULT_NEARBY_CAP;

/// Simulation day; day 0 is the world's start date.
pub type Day = i64;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid world config: {0}")]
    Config(String),
    #[error("prefix {oui} would need {needed} suffixes, more than {SUFFIX_SPACE}")]
    SuffixCapacity { oui: Oui, needed: u64 },
    #[error("world file: {0}")]
    Io(#[from] std::io::Error),
    #[error("world file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerInterval {
    pub on_day: Day,
    /// `None` while the AP is still powered.
    pub off_day: Option<Day>,
}

/// Database state of the alias an AP currently broadcasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AliasState {
    pub alias: MacAddress,
    pub in_db: bool,
    /// Position the service reports; present iff `in_db`.
    pub reported: Option<GeoPosition>,
}

/// An alias abandoned by a randomizing AP that the service still remembers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetiredAlias {
    pub alias: MacAddress,
    pub reported: GeoPosition,
    /// Last day the alias was on the air was `off_since - 1`.
    pub off_since: Day,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimAp {
    pub bssid: MacAddress,
    pub true_pos: GeoPosition,
    /// Realized power history, ordered and disjoint.
    pub power_schedule: Vec<PowerInterval>,
    /// SSID carries `_nomap`.
    pub nomap: bool,
    pub randomize_on_boot: bool,
    /// Whether random daily churn applies to this AP.
    pub churn: bool,
    pub current: AliasState,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub retired: Vec<RetiredAlias>,
}

impl SimAp {
    /// An AP that has never been switched on.
    pub fn unpowered(bssid: MacAddress, true_pos: GeoPosition) -> Self {
        SimAp {
            bssid,
            true_pos,
            power_schedule: Vec::new(),
            nomap: false,
            randomize_on_boot: false,
            churn: false,
            current: AliasState { alias: bssid, in_db: false, reported: None },
            retired: Vec::new(),
        }
    }

    /// An AP powered since long before `day` and already in the database.
    pub fn established(bssid: MacAddress, true_pos: GeoPosition, reported: GeoPosition, day: Day, ingestion_days: u32) -> Self {
        let mut ap = SimAp::unpowered(bssid, true_pos);
        ap.power_schedule.push(PowerInterval { on_day: day - Day::from(ingestion_days), off_day: None });
        ap.current.in_db = true;
        ap.current.reported = Some(reported.rounded());
        ap
    }

    pub fn current_alias(&self) -> MacAddress {
        self.current.alias
    }

    pub fn is_powered(&self) -> bool {
        self.power_schedule.last().is_some_and(|i| i.off_day.is_none())
    }

    /// Whether the current alias is served (ignoring redaction).
    pub fn is_geolocatable(&self) -> bool {
        !self.nomap && self.current.in_db
    }

    /// Every (alias, reported position) the service would return for this AP.
    pub fn served_entries(&self) -> impl Iterator<Item = (MacAddress, GeoPosition)> + '_ {
        let current = self
            .current
            .reported
            .filter(|_| self.current.in_db)
            .map(|p| (self.current.alias, p));
        let retired = self.retired.iter().map(|r| (r.alias, r.reported));
        current.into_iter().chain(retired).filter(move |_| !self.nomap)
    }

    fn power_on(&mut self, day: Day, rng: &mut impl Rng, taken: &mut HashSet<MacAddress>) {
        if self.is_powered() {
            return;
        }
        let cycled = !self.power_schedule.is_empty();
        let off_since = self.power_schedule.last().and_then(|i| i.off_day);
        self.power_schedule.push(PowerInterval { on_day: day, off_day: None });
        if cycled && self.randomize_on_boot {
            if let (true, Some(reported), Some(off_since)) = (self.current.in_db, self.current.reported, off_since) {
                self.retired.push(RetiredAlias { alias: self.current.alias, reported, off_since });
            }
            let alias = loop {
                let candidate = random_local_mac(rng);
                if taken.insert(candidate) {
                    break candidate;
                }
            };
            self.current = AliasState { alias, in_db: false, reported: None };
        }
    }

    fn power_off(&mut self, day: Day) {
        if let Some(last) = self.power_schedule.last_mut() {
            if last.off_day.is_none() {
                last.off_day = Some(day);
            }
        }
    }

    fn update_ingestion(&mut self, day: Day, params: &WorldParams, rng: &mut impl Rng) {
        if let Some(last) = self.power_schedule.last().copied() {
            match last.off_day {
                None if !self.current.in_db && day - last.on_day >= Day::from(params.ingestion_days) => {
                    self.current.in_db = true;
                    self.current.reported = Some(noisy(self.true_pos, params.noise_m, rng));
                }
                Some(off) if self.current.in_db && day - off >= Day::from(params.expunge_days) => {
                    self.current.in_db = false;
                    self.current.reported = None;
                }
                _ => {}
            }
        }
        self.retired.retain(|r| day - r.off_since < Day::from(params.expunge_days));
    }

    fn move_to(&mut self, pos: GeoPosition, params: &WorldParams, rng: &mut impl Rng) {
        self.true_pos = pos;
        if self.current.in_db {
            self.current.reported = Some(noisy(pos, params.noise_m, rng));
        }
    }
}

fn random_local_mac(rng: &mut impl Rng) -> MacAddress {
    let mut octets: [u8; 6] = rng.random();
    octets[0] = (octets[0] | 0x02) & !0x01;
    MacAddress::new(octets)
}

/// A reported position: the true one displaced by isotropic Gaussian noise.
fn noisy(pos: GeoPosition, sigma_m: f64, rng: &mut impl Rng) -> GeoPosition {
    if sigma_m <= 0.0 {
        return pos.rounded();
    }
    let normal = Normal::new(0.0, sigma_m / 1000.0).expect("positive sigma");
    let (north, east): (f64, f64) = (normal.sample(rng), normal.sample(rng));
    pos.destination(east.atan2(north).to_degrees(), north.hypot(east)).rounded()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Churn {
    /// Daily probability that a powered AP switches off.
    pub off_prob: f64,
    /// Daily probability that an unpowered AP switches back on.
    pub on_prob: f64,
}

impl Default for Churn {
    fn default() -> Self {
        Churn { off_prob: 0.0, on_prob: 0.0 }
    }
}

/// Operator-side countermeasures.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Mitigations {
    /// Accepted requests per client key per second.
    pub rate_limit_per_sec: Option<u32>,
    pub nearby_cap: Option<usize>,
    /// Regions whose APs are never served.
    pub redact: Vec<GeoRegion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldParams {
    pub ingestion_days: u32,
    pub expunge_days: u32,
    pub nearby_cap: usize,
    /// Standard deviation of reported-position noise per axis, metres.
    pub noise_m: f64,
    pub churn: Churn,
    pub mitigations: Mitigations,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams {
            ingestion_days: 7,
            expunge_days: 7,
            nearby_cap: DEFAULT_NEARBY_CAP,
            noise_m: 10.0,
            churn: Churn::default(),
            mitigations: Mitigations::default(),
        }
    }
}

impl WorldParams {
    pub fn effective_nearby_cap(&self) -> usize {
        self.mitigations.nearby_cap.unwrap_or(self.nearby_cap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub center: GeoPosition,
    pub stddev_km: f64,
    pub ap_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MoverSpec {
    pub fraction: f64,
    pub min_km: f64,
    pub max_km: f64,
    /// Moves happen on a uniformly chosen day in `1..=window_days`.
    pub window_days: u32,
}

impl Default for MoverSpec {
    fn default() -> Self {
        MoverSpec { fraction: 0.0, min_km: 1.5, max_km: 200.0, window_days: 30 }
    }
}

/// A correlated power cut: a fraction of the APs inside `region` switch off on
/// `start_day`, and back on after `days` if given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageSpec {
    pub region: GeoRegion,
    pub start_day: Day,
    pub days: Option<Day>,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub seed: u64,
    pub start_date: NaiveDate,
    pub clusters: Vec<ClusterSpec>,
    pub vendor_mix: BTreeMap<Oui, f64>,
    /// Fraction of APs whose BSSID uses the locally administered twin prefix.
    pub local_fraction: f64,
    pub nomap_fraction: f64,
    pub randomize_fraction: f64,
    /// Start with every AP powered and already in the database.
    pub initially_ingested: bool,
    pub movers: MoverSpec,
    pub outages: Vec<OutageSpec>,
    #[serde(flatten)]
    pub params: WorldParams,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            seed: 0,
            start_date: NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
            clusters: Vec::new(),
            vendor_mix: BTreeMap::new(),
            local_fraction: 0.0,
            nomap_fraction: 0.0,
            randomize_fraction: 0.0,
            initially_ingested: true,
            movers: MoverSpec::default(),
            outages: Vec::new(),
            params: WorldParams::default(),
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: &str| Err(WorldError::Config(m.to_string()));
        let total: usize = self.clusters.iter().map(|c| c.ap_count).sum();
        if total > 0 {
            if self.vendor_mix.is_empty() || self.vendor_mix.values().any(|w| !(*w >= 0.0)) {
                return bad("vendor weights must be non-negative");
            }
            if self.vendor_mix.values().sum::<f64>() <= 0.0 {
                return bad("vendor weights must sum to a positive value");
            }
        }
        let fractions = [
            self.local_fraction,
            self.nomap_fraction,
            self.randomize_fraction,
            self.movers.fraction,
            self.params.churn.off_prob,
            self.params.churn.on_prob,
        ];
        if fractions.iter().chain(self.outages.iter().map(|o| &o.fraction)).any(|f| !(0.0..=1.0).contains(f)) {
            return bad("fractions and probabilities must lie in [0, 1]");
        }
        if self.clusters.iter().any(|c| !c.center.is_valid() || !(c.stddev_km >= 0.0)) {
            return bad("cluster centers must be valid positions with non-negative spread");
        }
        if self.movers.fraction > 0.0
            && (self.movers.min_km <= 0.0 || self.movers.max_km < self.movers.min_km || self.movers.window_days == 0)
        {
            return bad("mover distances need 0 < min_km <= max_km and a non-empty window");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    PowerOn,
    PowerOff,
    MoveTo { lat: f64, lon: f64 },
}

/// A scripted change to one AP (identified by its original BSSID).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEvent {
    pub day: Day,
    pub bssid: MacAddress,
    #[serde(flatten)]
    pub action: Action,
}

/// The simulator's full state. Serialized as the world file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldModel {
    pub seed: u64,
    pub start_date: NaiveDate,
    pub day: Day,
    pub params: WorldParams,
    pub aps: Vec<SimAp>,
    #[serde(default)]
    pub script: Vec<ScriptEvent>,
}

impl WorldModel {
    pub fn new(seed: u64, params: WorldParams, aps: Vec<SimAp>, mut script: Vec<ScriptEvent>) -> Self {
        script.sort_by_key(|e| (e.day, e.bssid));
        WorldModel {
            seed,
            start_date: WorldConfig::default().start_date,
            day: 0,
            params,
            aps,
            script,
        }
    }

    pub fn date(&self) -> NaiveDate {
        date_of(self.start_date, self.day)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, WorldError> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), WorldError> {
        crate::io::write_atomic(path.as_ref(), serde_json::to_string(self)?.as_bytes())?;
        Ok(())
    }

    pub fn ap(&self, bssid: MacAddress) -> Option<&SimAp> {
        self.aps.iter().find(|a| a.bssid == bssid)
    }

    pub fn geolocatable_count(&self) -> usize {
        self.aps.iter().map(|a| a.served_entries().count()).sum()
    }

    /// Moves the world one day forward: scripted events, then churn for APs
    /// without a scripted event today, then ingestion/expunge bookkeeping.
    pub fn advance_day(&mut self) {
        self.day += 1;
        let day = self.day;
        let mut key = self.seed ^ (day as u64).wrapping_mul(0x2545_f491_4f6c_dd1d);
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(&mut key));

        let mut today: HashMap<MacAddress, Vec<&Action>> = HashMap::new();
        for e in self.script.iter().filter(|e| e.day == day) {
            today.entry(e.bssid).or_default().push(&e.action);
        }
        let mut taken: HashSet<MacAddress> = if self.aps.iter().any(|a| a.randomize_on_boot) {
            self.aps
                .iter()
                .flat_map(|a| std::iter::once(a.bssid).chain(std::iter::once(a.current.alias)))
                .chain(self.aps.iter().flat_map(|a| a.retired.iter().map(|r| r.alias)))
                .collect()
        } else {
            HashSet::new()
        };

        let params = &self.params;
        for ap in &mut self.aps {
            let roll: f64 = rng.random();
            match today.get(&ap.bssid) {
                Some(actions) => {
                    for action in actions {
                        match action {
                            Action::PowerOn => ap.power_on(day, &mut rng, &mut taken),
                            Action::PowerOff => ap.power_off(day),
                            Action::MoveTo { lat, lon } => {
                                ap.move_to(GeoPosition { lat: *lat, lon: *lon }, params, &mut rng)
                            }
                        }
                    }
                }
                None if ap.churn => {
                    if ap.is_powered() {
                        if roll < params.churn.off_prob {
                            ap.power_off(day);
                        }
                    } else if roll < params.churn.on_prob {
                        ap.power_on(day, &mut rng, &mut taken);
                    }
                }
                None => {}
            }
            ap.update_ingestion(day, params, &mut rng);
        }
    }

    pub fn advance(&mut self, days: u32) {
        for _ in 0..days {
            self.advance_day();
        }
    }
}

pub fn date_of(start: NaiveDate, day: Day) -> NaiveDate {
    if day >= 0 {
        start.checked_add_days(Days::new(day as u64)).unwrap_or(NaiveDate::MAX)
    } else {
        start.checked_sub_days(Days::new(day.unsigned_abs())).unwrap_or(NaiveDate::MIN)
    }
}

/// Builds a world from a config. Deterministic in `config.seed`.
pub fn generate_world(config: &WorldConfig) -> Result<WorldModel, WorldError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params = config.params.clone();
    let total: usize = config.clusters.iter().map(|c| c.ap_count).sum();

    let vendors: Vec<Oui> = config.vendor_mix.keys().copied().collect();
    let picker = if total > 0 {
        Some(
            WeightedIndex::new(config.vendor_mix.values().copied())
                .map_err(|e| WorldError::Config(e.to_string()))?,
        )
    } else {
        None
    };

    let mut counters: BTreeMap<Oui, u32> = BTreeMap::new();
    let mut aps = Vec::with_capacity(total);
    for cluster in &config.clusters {
        let spread = Normal::new(0.0, cluster.stddev_km.max(0.0)).map_err(|e| WorldError::Config(e.to_string()))?;
        for _ in 0..cluster.ap_count {
            let (north, east): (f64, f64) = (spread.sample(&mut rng), spread.sample(&mut rng));
            let pos = cluster
                .center
                .destination(east.atan2(north).to_degrees(), north.hypot(east))
                .rounded();
            let base = vendors[picker.as_ref().expect("vendors when APs exist").sample(&mut rng)];
            let local = rng.random_bool(config.local_fraction);
            let oui = base.with_local_bit(local || base.is_locally_administered());
            let counter = counters.entry(oui).or_insert(0);
            if *counter >= SUFFIX_SPACE {
                return Err(WorldError::SuffixCapacity { oui, needed: u64::from(*counter) + 1 });
            }
            let perm = SuffixPermutation::new(config.seed.rotate_left(17) ^ u64::from(oui.to_u32()));
            let bssid = MacAddress::from_parts(oui, perm.apply(*counter));
            *counter += 1;

            let mut ap = if config.initially_ingested {
                let reported = noisy(pos, params.noise_m, &mut rng);
                SimAp::established(bssid, pos, reported, 0, params.ingestion_days)
            } else {
                let mut ap = SimAp::unpowered(bssid, pos);
                ap.power_schedule.push(PowerInterval { on_day: 0, off_day: None });
                ap
            };
            ap.churn = true;
            ap.nomap = rng.random_bool(config.nomap_fraction);
            ap.randomize_on_boot = rng.random_bool(config.randomize_fraction);
            aps.push(ap);
        }
    }

    let mut script = Vec::new();
    if config.movers.fraction > 0.0 {
        let (lo, hi) = (config.movers.min_km.ln(), config.movers.max_km.ln());
        for ap in &aps {
            if !rng.random_bool(config.movers.fraction) {
                continue;
            }
            let day = rng.random_range(1..=Day::from(config.movers.window_days));
            let dist = if hi > lo { rng.random_range(lo..=hi).exp() } else { config.movers.min_km };
            let to = ap.true_pos.destination(rng.random_range(0.0..360.0), dist).rounded();
            script.push(ScriptEvent { day, bssid: ap.bssid, action: Action::MoveTo { lat: to.lat, lon: to.lon } });
        }
    }
    for outage in &config.outages {
        for ap in &aps {
            if !outage.region.contains(ap.true_pos) || !rng.random_bool(outage.fraction) {
                continue;
            }
            script.push(ScriptEvent { day: outage.start_day, bssid: ap.bssid, action: Action::PowerOff });
            if let Some(days) = outage.days {
                script.push(ScriptEvent { day: outage.start_day + days, bssid: ap.bssid, action: Action::PowerOn });
            }
        }
    }

    let mut world = WorldModel::new(config.seed, params, aps, script);
    world.start_date = config.start_date;
    Ok(world)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::haversine_km;

    fn pos(lat: f64, lon: f64) -> GeoPosition {
        GeoPosition { lat, lon }
    }

    fn one_cluster(n: usize, seed: u64) -> WorldConfig {
        WorldConfig {
            seed,
            clusters: vec![ClusterSpec { center: pos(40.0, -75.0), stddev_km: 2.0, ap_count: n }],
            vendor_mix: [("74:24:9f".parse().unwrap(), 1.0)].into_iter().collect(),
            ..Default::default()
        }
    }

    #[test]
    fn generation_is_deterministic_and_clustered() {
        let cfg = one_cluster(100, 5);
        let a = generate_world(&cfg).unwrap();
        assert_eq!(a, generate_world(&cfg).unwrap());
        assert_eq!(a.aps.len(), 100);
        let center = cfg.clusters[0].center;
        assert!(a.aps.iter().all(|ap| haversine_km(center, ap.true_pos).unwrap() <= 6.0 * 2.0));
        let distinct: HashSet<_> = a.aps.iter().map(|ap| ap.bssid).collect();
        assert_eq!(distinct.len(), 100);
        assert!(a.aps.iter().all(|ap| ap.bssid.oui().to_string() == "74:24:9f"));
        assert!(a.aps.iter().all(SimAp::is_geolocatable));
    }

    #[test]
    fn empty_world_is_fine() {
        let w = generate_world(&WorldConfig::default()).unwrap();
        assert!(w.aps.is_empty());
    }

    #[test]
    fn config_validation() {
        let mut cfg = one_cluster(10, 1);
        cfg.vendor_mix.clear();
        assert!(generate_world(&cfg).is_err());
        let mut cfg = one_cluster(10, 1);
        cfg.nomap_fraction = 1.5;
        assert!(generate_world(&cfg).is_err());
        let mut cfg = one_cluster(10, 1);
        cfg.vendor_mix.insert("00:00:01".parse().unwrap(), -1.0);
        assert!(generate_world(&cfg).is_err());
    }

    fn scripted(on: &[(Day, Option<Day>)], nomap: bool) -> WorldModel {
        let bssid: MacAddress = "74:24:9f:00:00:01".parse().unwrap();
        let mut ap = SimAp::unpowered(bssid, pos(1.0, 1.0));
        ap.nomap = nomap;
        let mut script = Vec::new();
        for &(a, b) in on {
            script.push(ScriptEvent { day: a, bssid, action: Action::PowerOn });
            if let Some(b) = b {
                script.push(ScriptEvent { day: b, bssid, action: Action::PowerOff });
            }
        }
        // Day-0 events apply to the initial state.
        let mut w = WorldModel::new(1, WorldParams::default(), vec![ap], script);
        w.day = -1;
        w.advance_day();
        w
    }

    #[test]
    fn ingestion_takes_a_week() {
        let mut w = scripted(&[(0, None)], false);
        w.advance(6);
        assert!(!w.aps[0].is_geolocatable());
        w.advance(1);
        assert_eq!(w.day, 7);
        assert!(w.aps[0].is_geolocatable());
    }

    #[test]
    fn expunge_takes_a_week() {
        let mut w = scripted(&[(0, Some(10))], false);
        w.advance(16);
        assert!(w.aps[0].is_geolocatable(), "day 16: off for 6 days");
        w.advance(1);
        assert!(!w.aps[0].is_geolocatable(), "day 17: off for 7 days");
    }

    #[test]
    fn nomap_never_served() {
        let mut w = scripted(&[(0, None)], true);
        w.advance(30);
        assert!(!w.aps[0].is_geolocatable());
        assert_eq!(w.geolocatable_count(), 0);
    }

    #[test]
    fn randomized_alias_lifecycle() {
        let bssid: MacAddress = "74:24:9f:00:00:02".parse().unwrap();
        let mut ap = SimAp::established(bssid, pos(1.0, 1.0), pos(1.0, 1.0), 0, 7);
        ap.randomize_on_boot = true;
        let script = vec![
            ScriptEvent { day: 2, bssid, action: Action::PowerOff },
            ScriptEvent { day: 4, bssid, action: Action::PowerOn },
        ];
        let mut w = WorldModel::new(3, WorldParams::default(), vec![ap], script);
        // Enumerate the schedule day by day: off on day 2, back on day 4 with
        // a fresh alias. The old alias goes at day 9, the new one arrives day 11.
        let mut served = Vec::new();
        for _ in 0..14 {
            w.advance_day();
            let entries: Vec<MacAddress> = w.aps[0].served_entries().map(|(m, _)| m).collect();
            served.push(entries);
        }
        let new_alias = w.aps[0].current_alias();
        assert_ne!(new_alias, bssid);
        assert!(new_alias.is_locally_administered());
        assert!(!new_alias.is_multicast());
        for (i, entries) in served.iter().enumerate() {
            let day = i as Day + 1;
            assert_eq!(entries.contains(&bssid), day < 9, "old alias on day {day}");
            assert_eq!(entries.contains(&new_alias), day >= 11, "new alias on day {day}");
        }
    }

    #[test]
    fn scripted_moves_update_reported_position() {
        let bssid: MacAddress = "74:24:9f:00:00:03".parse().unwrap();
        let ap = SimAp::established(bssid, pos(10.0, 10.0), pos(10.0, 10.0), 0, 7);
        let to = pos(10.0, 10.5);
        let script = vec![ScriptEvent { day: 3, bssid, action: Action::MoveTo { lat: to.lat, lon: to.lon } }];
        let mut w = WorldModel::new(3, WorldParams { noise_m: 0.0, ..Default::default() }, vec![ap], script);
        w.advance(2);
        assert_eq!(w.aps[0].current.reported, Some(pos(10.0, 10.0)));
        w.advance(1);
        assert_eq!(w.aps[0].current.reported, Some(to));
    }

    #[test]
    fn world_file_round_trip() {
        let mut cfg = one_cluster(20, 9);
        cfg.movers.fraction = 0.5;
        cfg.randomize_fraction = 0.3;
        cfg.params.churn = Churn { off_prob: 0.1, on_prob: 0.2 };
        let mut w = generate_world(&cfg).unwrap();
        w.advance(12);
        let text = serde_json::to_string(&w).unwrap();
        let back: WorldModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, w);
        let mut a = w.clone();
        let mut b = back;
        a.advance(5);
        b.advance(5);
        assert_eq!(a, b);
    }
}
