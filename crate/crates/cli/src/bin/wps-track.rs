//! Daily resampling and the longitudinal analyses over snapshot directories.

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};
use wps_cli::{emit, finish, init_logging, parse_args, parse_date, read_bssids, Backend, CliError, CliResult};
use wps_core::geo::GeoRegion;
use wps_core::longitudinal::{
    cross_validate, decay_series, detect_movers, disappearance, inflows, lifetime_cdf, lifetimes, load_dataset,
    movement_cdf, resample, MoveMetric, MoverFilter, Snapshot, SnapshotStore, DEFAULT_BIN_PRECISION,
    DEFAULT_MOVER_THRESHOLD_KM,
};
use wps_core::mac::Oui;
use wps_core::oui::load_oui_registry;
use wps_core::report::bins_csv;

#[derive(Parser)]
#[command(name = "wps-track", version, about = "Track a BSSID sample over time")]
struct Cli {
    #[arg(long, global = true)]
    endpoint: Option<String>,
    /// Accepted for uniformity with the other tools; unused here.
    #[arg(long, global = true, hide = true)]
    seed: Option<u64>,
    /// JSON file of flag values; flags on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Max,
    Path,
}

#[derive(Subcommand)]
enum Cmd {
    /// Look up every sampled BSSID and store the day's snapshot.
    Resample {
        #[arg(long)]
        snapshots: PathBuf,
        /// BSSID list (first CSV column).
        #[arg(long)]
        sample: PathBuf,
        /// Resample a world file in-process, advancing it one day at a time.
        #[arg(long)]
        world: Option<PathBuf>,
        /// With --world: days to advance, taking a snapshot each day.
        #[arg(long, default_value_t = 0)]
        days: u32,
        /// Snapshot date for HTTP lookups (default today, UTC).
        #[arg(long, value_parser = parse_date, conflicts_with = "world")]
        date: Option<NaiveDate>,
        #[arg(long, default_value_t = 30.0)]
        rate: f64,
    },
    /// Fraction of the baseline still geolocatable, per day.
    Decay {
        #[arg(long)]
        snapshots: PathBuf,
        #[arg(long, value_parser = parse_date)]
        baseline: Option<NaiveDate>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CDF of days geolocatable per BSSID.
    Lifetimes {
        #[arg(long)]
        snapshots: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// BSSIDs whose reported position moved more than the threshold.
    Movers {
        #[arg(long)]
        snapshots: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MOVER_THRESHOLD_KM)]
        threshold_km: f64,
        #[arg(long, value_enum, default_value = "max")]
        metric: Metric,
        /// Keep only this vendor (needs --oui-db).
        #[arg(long)]
        vendor: Option<String>,
        /// Keep only this OUI.
        #[arg(long, conflicts_with = "vendor")]
        oui: Option<Oui>,
        #[arg(long)]
        oui_db: Option<PathBuf>,
        /// Print the distance CDF instead of the event list.
        #[arg(long)]
        cdf: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// In-region BSSIDs present at t0 but gone at t1.
    Disappear {
        #[arg(long)]
        snapshots: PathBuf,
        #[arg(long)]
        region: PathBuf,
        #[arg(long, value_parser = parse_date)]
        t0: NaiveDate,
        #[arg(long, value_parser = parse_date)]
        t1: NaiveDate,
        #[arg(long, default_value_t = DEFAULT_BIN_PRECISION)]
        precision: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Where BSSIDs first seen in a region were before.
    Inflow {
        #[arg(long)]
        snapshots: PathBuf,
        #[arg(long)]
        region: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BIN_PRECISION)]
        precision: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a reference dataset against a candidate.
    Validate {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        candidate: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        agreement_km: f64,
    },
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli: Cli = parse_args(Some("config"));
    init_logging(cli.verbose);
    finish(run(cli).await)
}

fn load(dir: &PathBuf) -> CliResult<Vec<Snapshot>> {
    let snaps = SnapshotStore::new(dir).load_all().map_err(CliError::data)?;
    if snaps.is_empty() {
        return Err(CliError::Data(format!("no snapshots in {}", dir.display())));
    }
    Ok(snaps)
}

fn region(path: &PathBuf) -> CliResult<GeoRegion> {
    GeoRegion::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

async fn run(cli: Cli) -> CliResult {
    match cli.cmd {
        Cmd::Resample { snapshots, sample, world, days, date, rate } => {
            let sample = read_bssids(&sample)?;
            let store = SnapshotStore::new(&snapshots);
            if world.is_none() && days > 0 {
                return Err(CliError::Usage("--days needs --world".into()));
            }
            let backend = Backend::open(world.as_deref(), cli.endpoint.as_deref(), rate, 8)?;
            let mut all_failed = false;
            for d in 0..=days {
                if let (Backend::World { locator, .. }, true) = (&backend, d > 0) {
                    locator.service().advance(1);
                }
                let day = date.unwrap_or_else(|| backend.date());
                let snap = resample(&backend, &sample, day).await;
                let found = snap.found().count();
                let errors = sample.iter().filter(|m| snap.is_error(**m)).count();
                all_failed = errors == sample.len();
                let path = store.write(&snap).map_err(CliError::data)?;
                emit(None, &format!("{day}: {found}/{} found, {errors} errors -> {}\n", sample.len(), path.display()))?;
            }
            if let Backend::World { path, locator } = &backend {
                locator.service().world().save(path).map_err(CliError::data)?;
            }
            if all_failed {
                return Err(CliError::Network("every lookup failed".into()));
            }
            Ok(())
        }
        Cmd::Decay { snapshots, baseline, out } => {
            let snaps = load(&snapshots)?;
            let series = decay_series(&snaps, baseline.unwrap_or(snaps[0].date)).map_err(CliError::data)?;
            let mut text = String::from("date,fraction\n");
            for (d, f) in series {
                text.push_str(&format!("{d},{f:.6}\n"));
            }
            emit(out.as_deref(), &text)
        }
        Cmd::Lifetimes { snapshots, out } => {
            let all = lifetimes(&load(&snapshots)?);
            let cdf = lifetime_cdf(&all);
            let gaps = all.iter().filter(|l| l.had_gap).count();
            eprintln!("{} BSSIDs, median {:?} days, {gaps} with gaps", cdf.total, cdf.median);
            emit(out.as_deref(), &cdf.to_csv("days"))
        }
        Cmd::Movers { snapshots, threshold_km, metric, vendor, oui, oui_db, cdf, out } => {
            let metric = match metric {
                Metric::Max => MoveMetric::MaxDisplacement,
                Metric::Path => MoveMetric::PathLength,
            };
            let registry = match &oui_db {
                Some(p) => Some(load_oui_registry(p).map_err(CliError::data)?.0),
                None if vendor.is_some() => return Err(CliError::Usage("--vendor needs --oui-db".into())),
                None => None,
            };
            let filter = match (vendor, oui) {
                (Some(v), _) => MoverFilter::Vendor(v),
                (_, Some(o)) => MoverFilter::Oui(o),
                _ => MoverFilter::All,
            };
            let events = detect_movers(&load(&snapshots)?, threshold_km, metric);
            if cdf {
                let cdf = movement_cdf(&events, &filter, registry.as_ref(), metric);
                return emit(out.as_deref(), &cdf.to_csv("km"));
            }
            let mut text = String::from("bssid,from_lat,from_lon,to_lat,to_lon,max_displacement_km,path_length_km\n");
            for e in events.iter().filter(|e| filter.matches(e.bssid, registry.as_ref())) {
                text.push_str(&format!(
                    "{},{},{},{},{},{:.4},{:.4}\n",
                    e.bssid, e.from.lat, e.from.lon, e.to.lat, e.to.lon, e.max_displacement_km, e.path_length_km
                ));
            }
            emit(out.as_deref(), &text)
        }
        Cmd::Disappear { snapshots, region: r, t0, t1, precision, out } => {
            let report = disappearance(&load(&snapshots)?, &region(&r)?, t0, t1, precision).map_err(CliError::data)?;
            eprintln!(
                "{} present at {t0}, {} at {t1}: {} vanished ({:.1}%), {} relocated, {} unknown",
                report.present_at_t0.len(),
                report.present_at_t1.len(),
                report.vanished.len(),
                100.0 * report.vanished_fraction(),
                report.relocated.len(),
                report.unknown.len()
            );
            emit(out.as_deref(), &bins_csv(&report.bins))
        }
        Cmd::Inflow { snapshots, region: r, precision, out } => {
            let report = inflows(&load(&snapshots)?, &region(&r)?, precision).map_err(CliError::data)?;
            eprintln!("{} BSSIDs arrived from outside the region", report.origins.len());
            emit(out.as_deref(), &bins_csv(&report.bins))
        }
        Cmd::Validate { reference, candidate, agreement_km } => {
            let r = load_dataset(&reference).map_err(CliError::data)?;
            let c = load_dataset(&candidate).map_err(CliError::data)?;
            let stats = cross_validate(&r, &c, agreement_km).map_err(CliError::data)?;
            let json = serde_json::to_string_pretty(&stats).map_err(CliError::data)?;
            emit(None, &format!("{json}\n"))
        }
    }
}
