//! Vendor tables and geohash heatmap bins over a crawl corpus.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use wps_cli::{emit, finish, init_logging, parse_args, CliError, CliResult};
use wps_core::crawler::CrawlState;
use wps_core::oui::load_oui_registry;
use wps_core::report::{corpus_rows, render, vendor_report, ExportFormat, DEFAULT_TOP_K};

#[derive(Parser)]
#[command(name = "wps-report", version, about = "Summarize a crawl corpus")]
struct Cli {
    /// Accepted for uniformity with the other tools; unused here.
    #[arg(long, global = true, hide = true)]
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
enum Table {
    Oui,
    Vendor,
    RankCdf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Counts by OUI and by vendor, plus the OUI rank CDF.
    Vendors {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        oui_db: PathBuf,
        /// CSV of `raw name,canonical name` vendor aliases.
        #[arg(long)]
        aliases: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        top_k: usize,
        /// Print every row instead of the top K.
        #[arg(long)]
        all: bool,
        #[arg(long, value_enum, default_value = "oui")]
        table: Table,
        /// Write oui.csv, vendors.csv and rank_cdf.csv here instead of printing one table.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Corpus counts per geohash cell.
    Bins {
        #[arg(long)]
        state: PathBuf,
        #[arg(long, default_value_t = 4)]
        precision: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli: Cli = parse_args(Some("config"));
    init_logging(cli.verbose);
    finish(run(cli))
}

fn run(cli: Cli) -> CliResult {
    match cli.cmd {
        Cmd::Vendors { state, oui_db, aliases, top_k, all, table, out_dir } => {
            let state = CrawlState::resume(&state).map_err(CliError::data)?;
            let (mut registry, _) = load_oui_registry(&oui_db).map_err(CliError::data)?;
            if let Some(a) = aliases {
                registry.load_aliases(&a).map_err(CliError::data)?;
            }
            let report = vendor_report(state.discovered.keys().copied(), &registry, top_k);
            eprintln!("{} BSSIDs, {} OUIs, {} unlisted", report.total, report.by_oui.len(), report.unlisted);
            match out_dir {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
                    emit(Some(&dir.join("oui.csv")), &report.oui_table_csv(all))?;
                    emit(Some(&dir.join("vendors.csv")), &report.vendor_table_csv(all))?;
                    emit(Some(&dir.join("rank_cdf.csv")), &report.rank_cdf_csv())
                }
                None => emit(
                    None,
                    &match table {
                        Table::Oui => report.oui_table_csv(all),
                        Table::Vendor => report.vendor_table_csv(all),
                        Table::RankCdf => report.rank_cdf_csv(),
                    },
                ),
            }
        }
        Cmd::Bins { state, precision, out } => {
            let state = CrawlState::resume(&state).map_err(CliError::data)?;
            let text = render(&corpus_rows(&state), ExportFormat::Bins { precision }).map_err(CliError::data)?;
            emit(out.as_deref(), &text)
        }
    }
}
