//! `halpha`: train class models, detect events in H-alpha sequences,
//! score detections against a catalog and render synthetic scenarios.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use halpha_core::config::PipelineConfig;

#[derive(Debug, Parser)]
#[command(name = "halpha", version, about = "Flare and filament event detection for H-alpha full-disk sequences")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML configuration file with dotted keys such as `preprocess.lambda1`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set events.vote_window=7`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    /// Force single-threaded solvers.
    #[arg(long, global = true)]
    sequential: bool,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the per-class mixture model from annotated frames.
    Train {
        /// CSV list of `frame,mask` pairs; relative paths resolve against its directory.
        #[arg(long)]
        training: PathBuf,
        /// Where to write the model (overrides `io.model`).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run detection over a frame manifest and stream events as NDJSON.
    Detect {
        /// CSV manifest of `path,timestamp` lines.
        #[arg(long)]
        manifest: PathBuf,
        /// Trained model (overrides `io.model`).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Event output file; standard output when absent (overrides `io.output`).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Write per-frame bandpass, NLL and label images here (overrides `io.debug_dir`).
        #[arg(long)]
        debug_dir: Option<PathBuf>,
    },
    /// Score NDJSON detections against a reference catalog.
    Eval {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Report file; standard output when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Render a synthetic scenario with ground truth.
    Synth {
        /// Scenario TOML; the bundled demo when absent.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        output: PathBuf,
        /// Print the bundled demo scenario and exit.
        #[arg(long)]
        print_demo: bool,
    },
}

fn effective_config(g: &GlobalArgs) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    for o in &g.overrides {
        cfg.set(o)?;
    }
    if g.sequential {
        cfg.solver.parallel = false;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = effective_config(&cli.global)?;
    match &cli.command {
        Command::Train { output, .. } => {
            if let Some(p) = output {
                cfg.io.model = Some(p.clone());
            }
        }
        Command::Detect {
            model,
            output,
            debug_dir,
            ..
        } => {
            if let Some(p) = model {
                cfg.io.model = Some(p.clone());
            }
            if let Some(p) = output {
                cfg.io.output = Some(p.clone());
            }
            if let Some(p) = debug_dir {
                cfg.io.debug_dir = Some(p.clone());
            }
        }
        Command::Eval { output, .. } => {
            if let Some(p) = output {
                cfg.io.output = Some(p.clone());
            }
        }
        Command::Synth { .. } => {}
    }
    cfg.validate()?;
    if cli.global.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    match cli.command {
        Command::Train { training, .. } => commands::train(&cfg, &training),
        Command::Detect { manifest, .. } => commands::detect(&cfg, &manifest),
        Command::Eval {
            detections, reference, ..
        } => commands::eval(&cfg, &detections, &reference),
        Command::Synth {
            scenario,
            output,
            print_demo,
        } => {
            if print_demo {
                print!("{}", halpha_core::synth::DEMO);
                return Ok(());
            }
            commands::synth(&cfg, scenario.as_deref(), &output)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
