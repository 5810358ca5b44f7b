//! World generation, day ticking and the HTTP lookup service.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use wps_cli::{emit, finish, init_logging, parse_args, CliError, CliResult};
use wps_core::geo::GeoRegion;
use wps_core::sim::{generate_world, SimService, WorldConfig, WorldModel};

#[derive(Parser)]
#[command(name = "wps-sim", version, about = "Simulated Wi-Fi positioning service")]
struct Cli {
    /// For `gen`, the world config; otherwise a JSON file of flag values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the world seed (`gen` only).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Accepted for uniformity with the other tools; unused here.
    #[arg(long, global = true, hide = true)]
    endpoint: Option<String>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a world file from a config.
    Gen {
        #[arg(long)]
        out: PathBuf,
    },
    /// Advance a world file by some days, in place.
    Tick {
        #[arg(long)]
        world: PathBuf,
        #[arg(long, default_value_t = 1)]
        days: u32,
    },
    /// Serve lookups for a world over HTTP.
    Serve(ServeArgs),
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    world: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: String,
    /// Requests per second allowed per client key.
    #[arg(long)]
    rate_limit: Option<u32>,
    /// Nearby records returned per found BSSID.
    #[arg(long)]
    nearby_cap: Option<usize>,
    /// Region file; APs inside are never served. Repeatable.
    #[arg(long)]
    redact: Vec<PathBuf>,
    /// Advance one day every this many seconds.
    #[arg(long)]
    tick_secs: Option<f64>,
    /// Write the world file back after every tick.
    #[arg(long)]
    persist: bool,
}

fn main() -> ExitCode {
    let is_gen = std::env::args().skip(1).any(|a| a == "gen");
    let cli: Cli = parse_args(if is_gen { None } else { Some("config") });
    init_logging(cli.verbose);
    finish(run(cli))
}

fn run(cli: Cli) -> CliResult {
    match cli.cmd {
        Cmd::Gen { out } => {
            let path = cli.config.ok_or_else(|| CliError::Usage("gen needs --config <world config>".into()))?;
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            let mut config: WorldConfig =
                serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            if let Some(seed) = cli.seed {
                config.seed = seed;
            }
            let world = generate_world(&config).map_err(CliError::data)?;
            world.save(&out).map_err(CliError::data)?;
            eprintln!("wrote {} APs ({} geolocatable) to {}", world.aps.len(), world.geolocatable_count(), out.display());
            Ok(())
        }
        Cmd::Tick { world, days } => {
            let mut model = load(&world)?;
            model.advance(days);
            model.save(&world).map_err(CliError::data)?;
            emit(None, &format!("day {} ({}): {} geolocatable\n", model.day, model.date(), model.geolocatable_count()))
        }
        Cmd::Serve(args) => serve(args),
    }
}

fn load(path: &Path) -> CliResult<WorldModel> {
    WorldModel::load(path).map_err(CliError::data)
}

fn serve(args: ServeArgs) -> CliResult {
    let mut world = load(&args.world)?;
    let mitigations = &mut world.params.mitigations;
    if args.rate_limit.is_some() {
        mitigations.rate_limit_per_sec = args.rate_limit;
    }
    if args.nearby_cap.is_some() {
        mitigations.nearby_cap = args.nearby_cap;
    }
    for path in &args.redact {
        mitigations.redact.push(GeoRegion::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?);
    }
    let addr: SocketAddr = format!("{}:{}", args.bind, args.port)
        .parse()
        .map_err(|e| CliError::Usage(format!("bad bind address: {e}")))?;
    let tick = match args.tick_secs {
        Some(s) if !(s > 0.0 && s.is_finite()) => return Err(CliError::Usage("--tick-secs must be positive".into())),
        other => other.map(Duration::from_secs_f64),
    };

    let runtime = tokio::runtime::Runtime::new().map_err(CliError::data)?;
    runtime.block_on(async move {
        let service = Arc::new(SimService::new(world));
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| CliError::Network(format!("{addr}: {e}")))?;
        let local = listener.local_addr().map_err(CliError::data)?;
        eprintln!("serving day {} on http://{local}", service.view().day);
        if let Some(period) = tick {
            let service = service.clone();
            let (path, persist) = (args.world.clone(), args.persist);
            tokio::spawn(async move {
                let mut interval = tokio::time::interval(period);
                interval.tick().await;
                loop {
                    interval.tick().await;
                    let day = service.advance(1);
                    tracing::info!(day, "advanced");
                    if persist {
                        if let Err(e) = service.world().save(&path) {
                            tracing::error!("saving {}: {e}", path.display());
                        }
                    }
                }
            });
        }
        wps_core::sim::server::serve(listener, service).await.map_err(|e| CliError::Network(e.to_string()))
    })
}
