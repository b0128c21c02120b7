use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use spotspray::app::{self, AnalyzeInputs, Format, SimulateOptions};
use spotspray::report::ReportBundle;
use spotspray::Error;

#[derive(Parser)]
#[command(name = "spotsim", version, about = "Spot-spraying simulator and field-trial analytics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the trials described by a config file and write logs and a report
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides output_dir in the config
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        paper_compare: bool,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
    },
    /// Summarise logged trial data (treatment and runoff CSVs)
    Analyze {
        #[arg(long, num_args = 1..)]
        treatments: Vec<PathBuf>,
        #[arg(long, num_args = 1..)]
        runoff: Vec<PathBuf>,
        /// TOML manifest of runoff time series
        #[arg(long, num_args = 1..)]
        runoff_manifest: Vec<PathBuf>,
        /// Also write report files to this directory
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        paper_compare: bool,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
    },
    /// Simulate a config and write one GeoJSON spray map per trial
    SprayMap {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analyse the bundled published dataset and compare with the published figures
    PaperCompare {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::ConfigMismatch(_) => 2,
        Error::Io { .. } => 3,
        Error::Schema { .. } | Error::EmptyInput { .. } => 4,
        _ => 1,
    }
}

fn print_report(bundle: &ReportBundle, out: Option<&PathBuf>, format: Format) -> spotspray::Result<()> {
    print!("{}", bundle.render_text());
    if let Some(dir) = out {
        for f in app::write_report(bundle, dir, format)? {
            eprintln!("wrote {}", f.display());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> spotspray::Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            seed,
            out,
            paper_compare,
            format,
        } => {
            let opts = SimulateOptions {
                config,
                seed,
                out,
                format: format.into(),
                paper_compare,
            };
            let (bundle, files) = app::run_simulation(&opts)?;
            print!("{}", bundle.render_text());
            eprintln!("wrote {} files", files.len());
        }
        Command::Analyze {
            treatments,
            runoff,
            runoff_manifest,
            out,
            paper_compare,
            format,
        } => {
            let inputs = AnalyzeInputs {
                treatments,
                runoff,
                runoff_manifests: runoff_manifest,
            };
            let bundle = app::analyze(&inputs, paper_compare)?;
            print_report(&bundle, out.as_ref(), format.into())?;
        }
        Command::SprayMap { config, seed, out } => {
            for f in app::run_spray_map(&config, seed, out.as_deref())? {
                eprintln!("wrote {}", f.display());
            }
        }
        Command::PaperCompare { out, format } => {
            let bundle = app::paper_compare()?;
            print_report(&bundle, out.as_ref(), format.into())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spotsim: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
