//! Answering locate requests from a published, immutable day view.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use chrono::NaiveDate;
use thiserror::Error;

use super::index::SpatialIndex;
use super::world::{Day, WorldModel};
use crate::geo::{GeoPosition, GeoRegion};
use crate::mac::MacAddress;
use crate::protocol::{chunk, ChunkOutcome, LocateRequest, LocateResponse, Locator, TransportError, WpsRecord};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ServeError {
    #[error("rate limit exceeded for this client")]
    RateLimited { retry_after_secs: u64 },
}

/// Everything the service can answer on one day.
#[derive(Debug, Clone)]
pub struct WorldView {
    pub day: Day,
    pub date: NaiveDate,
    by_bssid: HashMap<MacAddress, usize>,
    index: SpatialIndex<MacAddress>,
    nearby_cap: usize,
}

impl WorldView {
    pub fn from_world(world: &WorldModel) -> Self {
        let redact: &[GeoRegion] = &world.params.mitigations.redact;
        let mut entries: Vec<(MacAddress, GeoPosition)> = world
            .aps
            .iter()
            .filter(|ap| !redact.iter().any(|r| r.contains(ap.true_pos)))
            .flat_map(|ap| ap.served_entries())
            .filter(|(_, p)| !redact.iter().any(|r| r.contains(*p)))
            .collect();
        entries.sort_by_key(|(m, _)| *m);
        entries.dedup_by_key(|(m, _)| *m);
        let by_bssid = entries.iter().enumerate().map(|(i, (m, _))| (*m, i)).collect();
        WorldView {
            day: world.day,
            date: world.date(),
            by_bssid,
            index: SpatialIndex::new(entries),
            nearby_cap: world.params.effective_nearby_cap(),
        }
    }

    /// Number of geolocatable BSSIDs.
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn nearby_cap(&self) -> usize {
        self.nearby_cap
    }

    pub fn lookup(&self, bssid: MacAddress) -> Option<GeoPosition> {
        self.by_bssid.get(&bssid).map(|&i| self.index.position(i))
    }

    /// Geolocatable BSSIDs and their reported positions, sorted by BSSID.
    pub fn entries(&self) -> impl Iterator<Item = (MacAddress, GeoPosition)> + '_ {
        (0..self.index.len()).map(|i| (self.index.key(i), self.index.position(i)))
    }

    /// Up to `nearby_cap` nearest geolocatable BSSIDs to a served one, nearest
    /// first, ties by BSSID.
    pub fn neighbors(&self, bssid: MacAddress) -> Vec<MacAddress> {
        let Some(&i) = self.by_bssid.get(&bssid) else {
            return Vec::new();
        };
        self.index
            .nearest(self.index.position(i), self.nearby_cap, |j| j == i)
            .into_iter()
            .map(|j| self.index.key(j))
            .collect()
    }

    pub fn serve(&self, request: &LocateRequest) -> LocateResponse {
        let mut seen: HashSet<MacAddress> = request.bssids().iter().copied().collect();
        let mut requested = Vec::with_capacity(request.len());
        let mut nearby = Vec::new();
        for &bssid in request.bssids() {
            let Some(&i) = self.by_bssid.get(&bssid) else {
                requested.push(WpsRecord::not_found(bssid));
                continue;
            };
            let center = self.index.position(i);
            requested.push(WpsRecord::new(bssid, center));
            for j in self.index.nearest(center, self.nearby_cap, |j| j == i) {
                let key = self.index.key(j);
                if seen.insert(key) {
                    nearby.push(WpsRecord::new(key, self.index.position(j)));
                }
            }
        }
        LocateResponse { requested, nearby }
    }
}

/// Fixed one-second windows per client key.
#[derive(Debug)]
struct KeyedLimiter {
    per_sec: u32,
    windows: Mutex<HashMap<String, (u64, u32)>>,
}

impl KeyedLimiter {
    fn check(&self, key: &str, now: Duration) -> Result<(), ServeError> {
        let second = now.as_secs();
        let mut windows = self.windows.lock().expect("limiter lock");
        let slot = windows.entry(key.to_string()).or_insert((second, 0));
        if slot.0 != second {
            *slot = (second, 0);
        }
        if slot.1 >= self.per_sec {
            return Err(ServeError::RateLimited { retry_after_secs: 1 });
        }
        slot.1 += 1;
        Ok(())
    }
}

/// A world behind a single writer plus a published read-only view.
#[derive(Debug)]
pub struct SimService {
    world: Mutex<WorldModel>,
    view: RwLock<Arc<WorldView>>,
    limiter: RwLock<Option<Arc<KeyedLimiter>>>,
}

impl SimService {
    pub fn new(world: WorldModel) -> Self {
        let view = Arc::new(WorldView::from_world(&world));
        let limiter = limiter_for(&world);
        SimService { world: Mutex::new(world), view: RwLock::new(view), limiter: RwLock::new(limiter) }
    }

    pub fn view(&self) -> Arc<WorldView> {
        self.view.read().expect("view lock").clone()
    }

    /// Serves one request. `now` is the caller's clock, used only for the
    /// per-key rate limit.
    pub fn handle(&self, request: &LocateRequest, client_key: &str, now: Duration) -> Result<LocateResponse, ServeError> {
        let limiter = self.limiter.read().expect("limiter lock").clone();
        if let Some(limiter) = limiter {
            limiter.check(client_key, now)?;
        }
        Ok(self.view().serve(request))
    }

    /// Mutates the world and republishes the view.
    pub fn update<R>(&self, f: impl FnOnce(&mut WorldModel) -> R) -> R {
        let mut world = self.world.lock().expect("world lock");
        let out = f(&mut world);
        *self.view.write().expect("view lock") = Arc::new(WorldView::from_world(&world));
        *self.limiter.write().expect("limiter lock") = limiter_for(&world);
        out
    }

    pub fn advance(&self, days: u32) -> Day {
        self.update(|w| {
            w.advance(days);
            w.day
        })
    }

    pub fn world(&self) -> WorldModel {
        self.world.lock().expect("world lock").clone()
    }
}

fn limiter_for(world: &WorldModel) -> Option<Arc<KeyedLimiter>> {
    world
        .params
        .mitigations
        .rate_limit_per_sec
        .map(|per_sec| Arc::new(KeyedLimiter { per_sec, windows: Mutex::new(HashMap::new()) }))
}

/// In-process [`Locator`] over a [`SimService`], no network involved.
///
/// Requests are stamped with a virtual clock that advances `1 / pace_per_sec`
/// per request, so rate limits behave as for a client sending at that pace.
/// Every future it returns is immediately ready.
#[derive(Debug, Clone)]
pub struct SimLocator {
    service: Arc<SimService>,
    client_key: String,
    pace_per_sec: f64,
    sent: Arc<Mutex<u64>>,
}

impl SimLocator {
    pub fn new(service: Arc<SimService>) -> Self {
        SimLocator { service, client_key: "local".into(), pace_per_sec: 30.0, sent: Arc::new(Mutex::new(0)) }
    }

    pub fn with_pace(mut self, pace_per_sec: f64) -> Self {
        self.pace_per_sec = pace_per_sec;
        self
    }

    pub fn with_key(mut self, key: impl Into<String>) -> Self {
        self.client_key = key.into();
        self
    }

    pub fn service(&self) -> &Arc<SimService> {
        &self.service
    }

    /// Requests sent so far, including rejected ones.
    pub fn requests_sent(&self) -> u64 {
        *self.sent.lock().expect("counter lock")
    }

    pub fn locate_now(&self, bssids: &[MacAddress]) -> Vec<ChunkOutcome> {
        chunk(bssids, crate::protocol::MAX_BATCH)
            .into_iter()
            .enumerate()
            .map(|(index, bssids)| {
                let result = LocateRequest::new(bssids.clone())
                    .map_err(TransportError::from)
                    .and_then(|req| {
                        let now = {
                            let mut sent = self.sent.lock().expect("counter lock");
                            let now = Duration::from_secs_f64(*sent as f64 / self.pace_per_sec);
                            *sent += 1;
                            now
                        };
                        self.service.handle(&req, &self.client_key, now).map_err(|e| match e {
                            ServeError::RateLimited { retry_after_secs } => {
                                TransportError::RateLimited { retry_after_secs: Some(retry_after_secs) }
                            }
                        })
                    });
                ChunkOutcome { index, bssids, attempts: 1, result }
            })
            .collect()
    }
}

impl Locator for SimLocator {
    async fn locate_all(&self, bssids: Vec<MacAddress>) -> Vec<ChunkOutcome> {
        self.locate_now(&bssids)
    }
}
