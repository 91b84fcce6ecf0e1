use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gsknock::federation::{cmd_combine, cmd_simulate, cmd_site_stats, SiteStatsArgs};
use gsknock::pipeline::KnockoffMethod;
use gsknock::{Error, OutcomeFamily};

const EXIT_DATA: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_FORMAT: u8 = 65;

/// Multi-site group knockoff filter.
#[derive(Parser)]
#[command(name = "gsknock", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Gaussian,
    Binomial,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    FixedEqui,
    FixedSdp,
    SecondOrder,
    Sequential,
}

#[derive(Subcommand)]
enum Command {
    /// Compute one site's summary statistics (group names, Z, Z̃).
    SiteStats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        groups: PathBuf,
        #[arg(long, value_enum)]
        family: Family,
        #[arg(long, value_enum, default_value = "fixed-equi")]
        method: Method,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        grid_size: usize,
        /// Identifier written into the summary; defaults to the data file stem.
        #[arg(long)]
        site_id: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Combine site summaries and select groups.
    Combine {
        #[arg(long)]
        q: f64,
        #[arg(long)]
        plus: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
    },
    /// Run a simulation config and write FDR/power estimates as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Format(_) | Error::Config { .. } | Error::Schema(_) | Error::Parse { .. } => EXIT_FORMAT,
        _ => EXIT_DATA,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::SiteStats {
            data,
            groups,
            family,
            method,
            seed,
            grid_size,
            site_id,
            out,
        } => {
            let args = SiteStatsArgs {
                data: &data,
                groups: &groups,
                family: match family {
                    Family::Gaussian => OutcomeFamily::Gaussian,
                    Family::Binomial => OutcomeFamily::Binomial,
                },
                method: match method {
                    Method::FixedEqui => KnockoffMethod::FixedEqui,
                    Method::FixedSdp => KnockoffMethod::FixedSdp,
                    Method::SecondOrder => KnockoffMethod::SecondOrder,
                    Method::Sequential => KnockoffMethod::Sequential,
                },
                seed,
                grid_size,
                site_id,
            };
            let s = cmd_site_stats(&args, &out)?;
            log::info!("wrote {} groups for site '{}' to {}", s.group_names.len(), s.site_id, out.display());
        }
        Command::Combine { q, plus, out, summaries } => {
            let r = cmd_combine(&summaries, q, plus, &out)?;
            log::info!("selected {} of {} groups", r.selected.len(), r.w.len());
        }
        Command::Simulate { config, out, threads } => {
            if let Some(t) = threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build_global()
                    .map_err(|e| Error::Config {
                        field: "threads".into(),
                        message: e.to_string(),
                    })?;
            }
            cmd_simulate(&config, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{body}");
            ExitCode::from(exit_code(&e))
        }
    }
}
