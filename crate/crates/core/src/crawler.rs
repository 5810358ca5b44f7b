//! Global OUI sweep and region-focused BFS over a [`Locator`].

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::geo::{GeoPosition, GeoRegion};
use crate::mac::MacAddress;
use crate::oui::{random_bssids, SeedError, SeedSet, SUFFIX_SPACE};
use crate::protocol::{ChunkOutcome, LocateResponse, Locator, MAX_BATCH};

pub const DEFAULT_CHECKPOINT_EVERY: u64 = 10_000;

#[derive(Debug, Error)]
pub enum CrawlError {
    #[error("checkpoint {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("corrupt checkpoint {path}: {source}")]
    Corrupt { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Seed(#[from] SeedError),
    #[error("per-OUI guess count must be in 1..={SUFFIX_SPACE}")]
    PerOui,
    #[error("region crawl needs at least one seed")]
    NoSeeds,
    #[error("state belongs to a sweep with seed {found_seed} and {found_per_oui} guesses per OUI")]
    SweepMismatch { found_seed: u64, found_per_oui: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Via {
    Direct,
    Nearby,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveredRecord {
    /// Each distinct position seen, oldest first; never empty.
    pub history: Vec<(NaiveDate, GeoPosition)>,
    pub first_seen: NaiveDate,
    pub last_seen: NaiveDate,
    pub via: Via,
    #[serde(default)]
    pub out_of_region: bool,
}

impl DiscoveredRecord {
    pub fn position(&self) -> GeoPosition {
        self.history.last().expect("history is never empty").1
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub requests_sent: u64,
    pub direct_hits: u64,
    pub nearby_learned: u64,
    pub failed_chunks: u64,
    /// BSSIDs whose request failed twice and were given up on.
    pub abandoned: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepProgress {
    pub rng_seed: u64,
    pub per_oui: u64,
    /// Index into the seed set of the next OUI to process.
    pub next_oui: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CrawlState {
    pub queried: BTreeSet<MacAddress>,
    pub discovered: BTreeMap<MacAddress, DiscoveredRecord>,
    pub frontier: VecDeque<MacAddress>,
    pub counters: Counters,
    #[serde(default)]
    pub sweep: Option<SweepProgress>,
    #[serde(default)]
    pub region: Option<GeoRegion>,
}

#[derive(Debug, Clone)]
pub struct CrawlOptions {
    pub date: NaiveDate,
    pub checkpoint: Option<PathBuf>,
    /// Write a checkpoint after at least this many requests since the last one.
    pub checkpoint_every: u64,
    /// Stop as if killed once this many requests have been sent in total: no
    /// final checkpoint is written, so a resume starts from the last periodic one.
    pub stop_after_requests: Option<u64>,
    /// BSSIDs handed to the locator per round in region mode.
    pub region_round: usize,
}

impl Default for CrawlOptions {
    fn default() -> Self {
        CrawlOptions {
            date: NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
            checkpoint: None,
            checkpoint_every: DEFAULT_CHECKPOINT_EVERY,
            stop_after_requests: None,
            region_round: 8 * MAX_BATCH,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrawlOutcome {
    Completed,
    /// Stopped early by `stop_after_requests`.
    Stopped,
}

impl CrawlState {
    pub fn new() -> Self {
        CrawlState::default()
    }

    pub fn checkpoint(&self, path: &Path) -> Result<(), CrawlError> {
        let json = serde_json::to_vec(self).expect("state serializes");
        crate::io::write_atomic(path, &json).map_err(|source| CrawlError::Io { path: path.into(), source })
    }

    pub fn resume(path: &Path) -> Result<Self, CrawlError> {
        let bytes = std::fs::read(path).map_err(|source| CrawlError::Io { path: path.into(), source })?;
        let state: CrawlState =
            serde_json::from_slice(&bytes).map_err(|source| CrawlError::Corrupt { path: path.into(), source })?;
        Ok(state)
    }

    /// Loads `path` if it exists, else starts fresh.
    pub fn resume_or_new(path: &Path) -> Result<Self, CrawlError> {
        if path.exists() {
            CrawlState::resume(path)
        } else {
            Ok(CrawlState::new())
        }
    }

    /// Every discovered BSSID with its latest position.
    pub fn corpus(&self) -> impl Iterator<Item = (MacAddress, GeoPosition)> + '_ {
        self.discovered.iter().map(|(m, r)| (*m, r.position()))
    }

    fn in_region(&self, pos: GeoPosition) -> bool {
        self.region.as_ref().is_none_or(|r| r.contains(pos))
    }

    fn upsert(&mut self, bssid: MacAddress, pos: GeoPosition, via: Via, date: NaiveDate) -> bool {
        let out_of_region = !self.in_region(pos);
        match self.discovered.get_mut(&bssid) {
            Some(rec) => {
                rec.last_seen = rec.last_seen.max(date);
                if rec.position() != pos {
                    rec.history.push((date, pos));
                }
                rec.out_of_region = out_of_region;
                false
            }
            None => {
                self.discovered.insert(
                    bssid,
                    DiscoveredRecord { history: vec![(date, pos)], first_seen: date, last_seen: date, via, out_of_region },
                );
                true
            }
        }
    }

    /// Folds one response in. Returns the newly learned nearby BSSIDs.
    fn merge(&mut self, resp: &LocateResponse, date: NaiveDate) -> Vec<(MacAddress, GeoPosition)> {
        for rec in resp.found() {
            self.counters.direct_hits += 1;
            self.upsert(rec.bssid, rec.pos, Via::Direct, date);
        }
        let mut learned = Vec::new();
        for rec in resp.nearby.iter().filter(|r| r.is_found()) {
            if self.upsert(rec.bssid, rec.pos, Via::Nearby, date) {
                self.counters.nearby_learned += 1;
                learned.push((rec.bssid, rec.pos));
            }
        }
        learned
    }
}

struct Run<'a, L> {
    locator: &'a L,
    opts: &'a CrawlOptions,
    last_checkpoint: u64,
}

impl<L: Locator> Run<'_, L> {
    /// Locates `bssids`, retrying failed chunks once, and hands every good
    /// response to `on_response` in chunk order.
    async fn locate(
        &mut self,
        state: &mut CrawlState,
        bssids: Vec<MacAddress>,
        mut on_response: impl FnMut(&mut CrawlState, &LocateResponse),
    ) {
        let mut outcomes = self.locator.locate_all(bssids).await;
        state.counters.requests_sent += outcomes.iter().map(|o| u64::from(o.attempts.max(1))).sum::<u64>();
        outcomes.sort_by_key(|o| o.index);
        let mut failed = Vec::new();
        for o in &outcomes {
            match &o.result {
                Ok(resp) => on_response(state, resp),
                Err(e) => {
                    state.counters.failed_chunks += 1;
                    warn!(chunk = o.index, "chunk failed, re-queueing once: {e}");
                    failed.extend_from_slice(&o.bssids);
                }
            }
        }
        if failed.is_empty() {
            return;
        }
        let mut retried: Vec<ChunkOutcome> = self.locator.locate_all(failed).await;
        state.counters.requests_sent += retried.iter().map(|o| u64::from(o.attempts.max(1))).sum::<u64>();
        retried.sort_by_key(|o| o.index);
        for o in &retried {
            match &o.result {
                Ok(resp) => on_response(state, resp),
                Err(e) => {
                    state.counters.failed_chunks += 1;
                    state.counters.abandoned += o.bssids.len() as u64;
                    warn!(chunk = o.index, "chunk failed again, giving up on {} BSSIDs: {e}", o.bssids.len());
                }
            }
        }
    }

    fn maybe_checkpoint(&mut self, state: &CrawlState) -> Result<(), CrawlError> {
        if let Some(path) = &self.opts.checkpoint {
            if state.counters.requests_sent - self.last_checkpoint >= self.opts.checkpoint_every {
                state.checkpoint(path)?;
                self.last_checkpoint = state.counters.requests_sent;
            }
        }
        Ok(())
    }

    fn finish(&self, state: &CrawlState) -> Result<(), CrawlError> {
        match &self.opts.checkpoint {
            Some(path) => state.checkpoint(path),
            None => Ok(()),
        }
    }

    fn should_stop(&self, state: &CrawlState) -> bool {
        self.opts.stop_after_requests.is_some_and(|n| state.counters.requests_sent >= n)
    }
}

/// Queries `per_oui` pseudo-random BSSIDs under every seed OUI, in seed-set
/// order, merging everything returned. Nearby-learned BSSIDs are recorded but
/// not queried. Resumes from `state.sweep` when present.
pub async fn global_sweep<L: Locator>(
    locator: &L,
    seeds: &SeedSet,
    per_oui: u64,
    rng_seed: u64,
    state: &mut CrawlState,
    opts: &CrawlOptions,
) -> Result<CrawlOutcome, CrawlError> {
    if per_oui == 0 || per_oui > u64::from(SUFFIX_SPACE) {
        return Err(CrawlError::PerOui);
    }
    let progress = state.sweep.get_or_insert(SweepProgress { rng_seed, per_oui, next_oui: 0 });
    if progress.rng_seed != rng_seed || progress.per_oui != per_oui {
        return Err(CrawlError::SweepMismatch { found_seed: progress.rng_seed, found_per_oui: progress.per_oui });
    }
    let start = progress.next_oui;
    let mut run = Run { locator, opts, last_checkpoint: state.counters.requests_sent };
    for (i, oui) in seeds.iter().enumerate().skip(start) {
        let guesses: Vec<MacAddress> = random_bssids(oui, per_oui, rng_seed)?
            .into_iter()
            .filter(|m| !state.queried.contains(m))
            .collect();
        state.queried.extend(guesses.iter().copied());
        run.locate(state, guesses, |s, resp| {
            s.merge(resp, opts.date);
        })
        .await;
        if let Some(p) = state.sweep.as_mut() {
            p.next_oui = i + 1;
        }
        info!(oui = %oui, done = i + 1, of = seeds.len(), hits = state.counters.direct_hits, "swept OUI");
        run.maybe_checkpoint(state)?;
        if run.should_stop(state) && i + 1 < seeds.len() {
            return Ok(CrawlOutcome::Stopped);
        }
    }
    run.finish(state)?;
    Ok(CrawlOutcome::Completed)
}

/// Breadth-first expansion from `seeds`: every in-region BSSID seen in a
/// response is queued once and queried once. Out-of-region records are kept
/// (flagged) but never expanded.
pub async fn region_crawl<L: Locator>(
    locator: &L,
    seeds: &[MacAddress],
    region: GeoRegion,
    state: &mut CrawlState,
    opts: &CrawlOptions,
) -> Result<CrawlOutcome, CrawlError> {
    if seeds.is_empty() && state.frontier.is_empty() {
        return Err(CrawlError::NoSeeds);
    }
    state.region = Some(region);
    let mut pending: HashSet<MacAddress> = state.frontier.iter().copied().collect();
    for &s in seeds {
        if !state.queried.contains(&s) && pending.insert(s) {
            state.frontier.push_back(s);
        }
    }
    let mut run = Run { locator, opts, last_checkpoint: state.counters.requests_sent };
    let round = opts.region_round.max(1);
    while !state.frontier.is_empty() {
        let take = round.min(state.frontier.len());
        let batch: Vec<MacAddress> = state.frontier.drain(..take).collect();
        for b in &batch {
            pending.remove(b);
        }
        state.queried.extend(batch.iter().copied());
        run.locate(state, batch, |s, resp| {
            for (bssid, pos) in s.merge(resp, opts.date) {
                if s.in_region(pos) && !s.queried.contains(&bssid) && pending.insert(bssid) {
                    s.frontier.push_back(bssid);
                }
            }
        })
        .await;
        run.maybe_checkpoint(state)?;
        if run.should_stop(state) && !state.frontier.is_empty() {
            return Ok(CrawlOutcome::Stopped);
        }
    }
    run.finish(state)?;
    Ok(CrawlOutcome::Completed)
}
