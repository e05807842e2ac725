use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info};

use erodewave::cli::{dispatch, parse_config, Format, Mode, RunSpec};
use erodewave::{Error, ModelSpec};

#[derive(Parser)]
#[command(name = "erodewave", version, about = "Traveling waves of the slow-erosion model")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// JSON run description
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides output.dir)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,

    #[command(flatten)]
    quick: Quick,
}

/// Ad-hoc settings used when no config file is given.
#[derive(Args)]
struct Quick {
    /// Builtin erosion law
    #[arg(long, global = true, conflicts_with = "g_poly")]
    builtin: Option<String>,

    /// Coefficients of g, lowest degree first, comma separated
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    g_poly: Option<Vec<f64>>,

    /// Total drop D
    #[arg(long, global = true)]
    drop: Option<f64>,

    #[arg(long, global = true)]
    t_end: Option<f64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Check the model hypotheses
    Validate,
    /// Print the wave type and critical drops
    Classify,
    /// Sample the stationary wave in drop coordinates
    Wave,
    /// Run the front-tracking solver
    Simulate,
    /// Run the solver and measure convergence to the wave
    Converge,
    /// Moving-frame profile of the wave
    Physical,
    /// Upper and lower envelopes
    Envelope,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Both,
}

impl From<Command> for Mode {
    fn from(c: Command) -> Mode {
        match c {
            Command::Validate => Mode::Validate,
            Command::Classify => Mode::Classify,
            Command::Wave => Mode::Wave,
            Command::Simulate => Mode::Simulate,
            Command::Converge => Mode::Converge,
            Command::Physical => Mode::Physical,
            Command::Envelope => Mode::Envelope,
        }
    }
}

fn build_spec(cli: &Cli) -> erodewave::Result<RunSpec> {
    let mut spec = match &cli.config {
        Some(path) => {
            let mut s = parse_config(path)?;
            if let Some(c) = cli.command {
                let mode = Mode::from(c);
                if mode != s.mode {
                    info!("subcommand overrides config mode {:?}", s.mode);
                    s.mode = mode;
                }
            }
            s
        }
        None => {
            let mode = cli.command.map(Mode::from).ok_or_else(|| Error::Config {
                path: "mode".into(),
                msg: "give a subcommand or --config".into(),
            })?;
            let model = match (&cli.quick.builtin, &cli.quick.g_poly) {
                (_, Some(c)) => ModelSpec::Polynomial { g_poly: c.clone() },
                (Some(b), None) => ModelSpec::builtin(b),
                (None, None) => ModelSpec::builtin("quadratic"),
            };
            let mut s = RunSpec::new(model, mode);
            s.total_drop = cli.quick.drop;
            s.solver.t_end = cli.quick.t_end;
            s
        }
    };
    if let Some(dir) = &cli.out {
        spec.output.dir = Some(dir.display().to_string());
    }
    if let Some(f) = cli.format {
        spec.output.formats = Some(match f {
            FormatArg::Csv => vec![Format::Csv],
            FormatArg::Json => vec![Format::Json],
            FormatArg::Both => vec![Format::Csv, Format::Json],
        });
    }
    spec.complete()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ERODEWAVE_LOG", "error")).init();
    let cli = Cli::parse();
    let result = build_spec(&cli).and_then(|spec| dispatch(&spec));
    match result {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            for f in &outcome.files {
                info!("wrote {}", f.display());
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
