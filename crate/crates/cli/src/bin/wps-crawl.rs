//! Global OUI sweeps, region crawls, and corpus export.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wps_cli::{emit, finish, init_logging, parse_args, parse_date, read_bssids, Backend, CliError, CliResult};
use wps_core::crawler::{global_sweep, region_crawl, CrawlOptions, CrawlOutcome, CrawlState, DEFAULT_CHECKPOINT_EVERY};
use wps_core::geo::GeoRegion;
use wps_core::mac::Oui;
use wps_core::oui::{build_seed_set, load_oui_registry, OuiRegistry};
use wps_core::report::{corpus_rows, export, render, ExportFormat};

#[derive(Parser)]
#[command(name = "wps-crawl", version, about = "Harvest BSSID geolocations from a positioning service")]
struct Cli {
    #[arg(long, global = true)]
    endpoint: Option<String>,
    /// Sweep RNG seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON file of flag values; flags on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Source {
    /// Query a world file in-process instead of an HTTP endpoint.
    #[arg(long)]
    world: Option<PathBuf>,
    /// HTTP requests per second.
    #[arg(long, default_value_t = 30.0)]
    rate: f64,
    #[arg(long, default_value_t = 8)]
    max_in_flight: usize,
    #[arg(long, default_value_t = DEFAULT_CHECKPOINT_EVERY)]
    checkpoint_every: u64,
    /// Date recorded on discoveries (default: world date or today).
    #[arg(long, value_parser = parse_date)]
    date: Option<chrono::NaiveDate>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Query random BSSIDs under every registered OUI (and its U/L twin).
    Sweep {
        #[arg(long)]
        oui_db: PathBuf,
        #[arg(long, default_value_t = 16_384)]
        per_oui: u64,
        /// Restrict the sweep to these registry prefixes. Repeatable.
        #[arg(long = "only-oui")]
        only: Vec<Oui>,
        /// Crawl state file; resumed when it exists.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        source: Source,
    },
    /// Breadth-first crawl of a region from seed BSSIDs.
    Region {
        #[arg(long)]
        seeds: PathBuf,
        #[arg(long)]
        region: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        source: Source,
    },
    /// Export a crawl state as CSV, GeoJSON or geohash bins.
    Export {
        #[arg(long)]
        state: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
        /// Geohash precision for `bins`.
        #[arg(long, default_value_t = 4)]
        precision: usize,
        /// Output file (default stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli: Cli = parse_args(Some("config"));
    init_logging(cli.verbose);
    finish(run(cli).await)
}

async fn run(cli: Cli) -> CliResult {
    match cli.cmd {
        Cmd::Sweep { oui_db, per_oui, only, out, source } => {
            let (registry, _) = load_oui_registry(&oui_db).map_err(CliError::data)?;
            let registry = if only.is_empty() {
                registry
            } else {
                let mut subset = OuiRegistry::new();
                for o in &only {
                    let name = registry.get(o.normalized()).ok_or_else(|| CliError::Usage(format!("{o} is not in {}", oui_db.display())))?;
                    subset.insert(o.normalized(), name);
                }
                subset
            };
            let seeds = build_seed_set(&registry).map_err(CliError::data)?;
            let (backend, mut state, opts) = prepare(&source, cli.endpoint.as_deref(), &out)?;
            eprintln!("sweeping {} seed OUIs x {per_oui}", seeds.len());
            let outcome = global_sweep(&backend, &seeds, per_oui, cli.seed, &mut state, &opts).await.map_err(CliError::data)?;
            summarize(&state, outcome, &out)
        }
        Cmd::Region { seeds, region, out, source } => {
            let seeds = read_bssids(&seeds)?;
            let region = GeoRegion::load(&region).map_err(|e| CliError::Data(format!("{}: {e}", region.display())))?;
            let (backend, mut state, opts) = prepare(&source, cli.endpoint.as_deref(), &out)?;
            let outcome = region_crawl(&backend, &seeds, region, &mut state, &opts).await.map_err(CliError::data)?;
            summarize(&state, outcome, &out)
        }
        Cmd::Export { state, format, precision, out } => {
            let state = CrawlState::resume(&state).map_err(CliError::data)?;
            let format = match format.parse().map_err(|e| CliError::Usage(format!("{e}")))? {
                ExportFormat::Bins { .. } => ExportFormat::Bins { precision },
                f => f,
            };
            let rows = corpus_rows(&state);
            match out {
                Some(path) => export(&rows, format, &path).map_err(CliError::data),
                None => emit(None, &render(&rows, format).map_err(CliError::data)?),
            }
        }
    }
}

fn prepare(source: &Source, endpoint: Option<&str>, out: &Path) -> CliResult<(Backend, CrawlState, CrawlOptions)> {
    let backend = Backend::open(source.world.as_deref(), endpoint, source.rate, source.max_in_flight)?;
    let state = CrawlState::resume_or_new(out).map_err(CliError::data)?;
    let opts = CrawlOptions {
        date: source.date.unwrap_or_else(|| backend.date()),
        checkpoint: Some(out.to_path_buf()),
        checkpoint_every: source.checkpoint_every,
        ..Default::default()
    };
    Ok((backend, state, opts))
}

fn summarize(state: &CrawlState, outcome: CrawlOutcome, out: &Path) -> CliResult {
    let c = &state.counters;
    emit(
        None,
        &format!(
            "{outcome:?}: {} requests, {} direct hits, {} learned via nearby, {} discovered, {} failed chunks -> {}\n",
            c.requests_sent,
            c.direct_hits,
            c.nearby_learned,
            state.discovered.len(),
            c.failed_chunks,
            out.display()
        ),
    )?;
    if c.abandoned > 0 {
        return Err(CliError::Network(format!("{} BSSIDs abandoned after repeated lookup failures", c.abandoned)));
    }
    Ok(())
}
