//! Shared plumbing for the `wps-*` binaries: exit codes, the JSON flag file,
//! logging, and picking a locator.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use chrono::NaiveDate;
use clap::{ArgAction, Command, CommandFactory, Parser};
use serde_json::Value;
use tracing::warn;
use wps_core::client::{resolve_endpoint, ClientConfig, HttpTransport, LocateClient};
use wps_core::mac::MacAddress;
use wps_core::protocol::{ChunkOutcome, Locator};
use wps_core::sim::{SimLocator, SimService, WorldModel};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Network(String),
}

impl CliError {
    pub fn data(e: impl std::fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Network(_) => 4,
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

/// Prints the error and maps it to the process exit code.
pub fn finish(result: CliResult) -> ExitCode {
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        _ => tracing::Level::DEBUG,
    };
    let _ = tracing_subscriber::fmt().with_writer(std::io::stderr).with_max_level(level).try_init();
}

/// Parses the process arguments, filling in flags from the JSON object named
/// by `config_flag` for any flag not given on the command line.
pub fn parse_args<P: Parser + CommandFactory>(config_flag: Option<&str>) -> P {
    let args: Vec<OsString> = std::env::args_os().collect();
    match config_flag.map(|f| with_config_flags(&P::command(), args.clone(), f)) {
        Some(Ok(merged)) => P::parse_from(merged),
        Some(Err(e)) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
        None => P::parse_from(args),
    }
}

/// Appends `--key value` for every config entry whose flag exists on the
/// chosen subcommand (or globally) and is absent from `args`.
pub fn with_config_flags(cmd: &Command, mut args: Vec<OsString>, config_flag: &str) -> Result<Vec<OsString>, CliError> {
    let strings: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let long = format!("--{config_flag}");
    let Some(path) = flag_value(&strings, &long) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("config {path}: {e}")))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {path}: {e}")))?;
    let Value::Object(entries) = doc else {
        return Err(CliError::Usage(format!("config {path}: expected a JSON object")));
    };

    let sub = strings.iter().skip(1).find_map(|a| cmd.find_subcommand(a));
    let mut known: Vec<&clap::Arg> = cmd.get_arguments().collect();
    if let Some(sub) = sub {
        known.extend(sub.get_arguments());
    }
    for (key, value) in entries {
        let flag = key.replace('_', "-");
        let Some(arg) = known.iter().find(|a| a.get_long() == Some(flag.as_str())) else {
            warn!("config {path}: no --{flag} flag here, ignoring {key:?}");
            continue;
        };
        if flag == config_flag {
            continue;
        }
        let dashed = format!("--{flag}");
        if strings.iter().any(|a| *a == dashed || a.starts_with(&format!("{dashed}="))) {
            continue;
        }
        let takes_value = !matches!(arg.get_action(), ArgAction::SetTrue | ArgAction::SetFalse | ArgAction::Count);
        let values = match value {
            Value::Array(items) => items,
            other => vec![other],
        };
        for v in values {
            match (v, takes_value) {
                (Value::Bool(true), false) => args.push(dashed.clone().into()),
                (Value::Bool(false), false) | (Value::Null, _) => {}
                (Value::String(s), true) => args.extend([dashed.clone().into(), s.into()]),
                (v @ (Value::Number(_) | Value::Bool(_)), true) => args.extend([dashed.clone().into(), v.to_string().into()]),
                (v, _) => return Err(CliError::Usage(format!("config {path}: unusable value {v} for {key:?}"))),
            }
        }
    }
    Ok(args)
}

fn flag_value(args: &[String], long: &str) -> Option<String> {
    let prefix = format!("{long}=");
    args.iter().enumerate().find_map(|(i, a)| {
        if a == long {
            args.get(i + 1).cloned()
        } else {
            a.strip_prefix(&prefix).map(str::to_string)
        }
    })
}

/// Where lookups go: an in-process world file or an HTTP endpoint.
pub enum Backend {
    World { path: PathBuf, locator: SimLocator },
    Http(LocateClient<HttpTransport>),
}

impl Backend {
    pub fn open(world: Option<&Path>, endpoint: Option<&str>, rate: f64, in_flight: usize) -> CliResult<Self> {
        match world {
            Some(path) => {
                let model = WorldModel::load(path).map_err(CliError::data)?;
                let locator = SimLocator::new(Arc::new(SimService::new(model)));
                Ok(Backend::World { path: path.to_path_buf(), locator })
            }
            None => {
                let config = ClientConfig {
                    endpoint: resolve_endpoint(endpoint),
                    rate_per_sec: rate,
                    max_in_flight: in_flight,
                    ..Default::default()
                };
                LocateClient::http(config).map(Backend::Http).map_err(CliError::Usage)
            }
        }
    }

    /// The simulated date for a world, otherwise today (UTC).
    pub fn date(&self) -> NaiveDate {
        match self {
            Backend::World { locator, .. } => locator.service().view().date,
            Backend::Http(_) => chrono::Utc::now().date_naive(),
        }
    }

    pub fn requests_sent(&self) -> Option<u64> {
        match self {
            Backend::World { locator, .. } => Some(locator.requests_sent()),
            Backend::Http(_) => None,
        }
    }
}

impl Locator for Backend {
    async fn locate_all(&self, bssids: Vec<MacAddress>) -> Vec<ChunkOutcome> {
        match self {
            Backend::World { locator, .. } => locator.locate_all(bssids).await,
            Backend::Http(client) => client.locate_all(bssids).await,
        }
    }
}

/// Reads BSSIDs from the first column of a CSV or plain list; a header row and
/// blank lines are skipped.
pub fn read_bssids(path: &Path) -> CliResult<Vec<MacAddress>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        match field.parse::<MacAddress>() {
            Ok(m) => out.push(m),
            Err(_) if i == 0 => {}
            Err(e) => return Err(CliError::Data(format!("{} line {}: {e}", path.display(), i + 1))),
        }
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("{}: no BSSIDs", path.display())));
    }
    Ok(out)
}

/// Writes to `path`, or stdout when absent.
pub fn emit(path: Option<&Path>, text: &str) -> CliResult {
    match path {
        Some(p) => wps_core::io::write_atomic(p, text.as_bytes()).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| format!("{s:?}: {e} (expected YYYY-MM-DD)"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::{Args, Subcommand};

    #[derive(Parser, Debug)]
    struct Demo {
        #[arg(long, global = true)]
        config: Option<String>,
        #[command(subcommand)]
        cmd: Sub,
    }

    #[derive(Subcommand, Debug)]
    enum Sub {
        Run(RunArgs),
    }

    #[derive(Args, Debug)]
    struct RunArgs {
        #[arg(long)]
        per_oui: u64,
        #[arg(long)]
        all: bool,
        #[arg(long)]
        redact: Vec<String>,
    }

    fn merged(config: &str, cli: &[&str]) -> Result<Demo, String> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, config).unwrap();
        let mut args: Vec<OsString> = cli.iter().map(OsString::from).collect();
        args.extend(["--config".into(), path.clone().into_os_string()]);
        let args = with_config_flags(&Demo::command(), args, "config").map_err(|e| e.to_string())?;
        Demo::try_parse_from(args).map_err(|e| e.to_string())
    }

    #[test]
    fn config_fills_missing_flags_and_flags_win() {
        let Demo { cmd: Sub::Run(a), .. } =
            merged(r#"{"per_oui": 5, "all": true, "redact": ["a", "b"], "unrelated": 1}"#, &["x", "run"]).unwrap();
        assert_eq!((a.per_oui, a.all, a.redact.len()), (5, true, 2));
        let Demo { cmd: Sub::Run(a), .. } = merged(r#"{"per_oui": 5}"#, &["x", "run", "--per-oui", "9"]).unwrap();
        assert_eq!(a.per_oui, 9);
        let Demo { cmd: Sub::Run(a), .. } = merged(r#"{"per_oui": 5}"#, &["x", "run", "--per-oui=7"]).unwrap();
        assert_eq!(a.per_oui, 7);
    }

    #[test]
    fn bad_config_is_a_usage_error() {
        assert!(merged("[1]", &["x", "run"]).unwrap_err().contains("JSON object"));
        assert!(merged(r#"{"per_oui": {"a": 1}}"#, &["x", "run"]).unwrap_err().contains("unusable"));
    }

    #[test]
    fn reads_bssid_lists_with_or_without_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        fs::write(&p, "bssid,lat,lon\n74:24:9f:00:00:01,1,2\n\n74:24:9f:00:00:02\n").unwrap();
        assert_eq!(read_bssids(&p).unwrap().len(), 2);
        fs::write(&p, "74:24:9f:00:00:01\nnot-a-mac\n").unwrap();
        assert_eq!(read_bssids(&p).unwrap_err().exit_code(), 3);
    }
}
