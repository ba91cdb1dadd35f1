mod commands;
mod config;
mod manifest;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{AnalyzeOpts, EvaluateOpts, GenerateOpts, RenderOpts};
use config::Config;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config, or missing/corrupt inputs. Exit 3.
    Usage(String),
    /// The command ran but some items failed. Exit 2.
    Partial(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 3,
            CliError::Partial(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Partial(m) => f.write_str(m),
        }
    }
}

#[derive(Parser)]
#[command(name = "dilemma", version, about = "Moral-dilemma scenario factory and evaluation pipeline")]
struct Cli {
    /// Root directory that relative paths are resolved against.
    #[arg(long, global = true, default_value = ".")]
    workspace: PathBuf,
    /// JSON file with style, batch, http, agents and attrib sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario subset.
    Generate(GenerateArgs),
    /// Render one PNG per sample.
    Render(RenderArgs),
    /// Query a model on every sample and mode.
    Evaluate(EvaluateArgs),
    /// Compute diagnostics from a result log.
    Analyze(AnalyzeArgs),
    /// Draw SVG figures from an analysis directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// quantity, single_feature or interaction
    #[arg(long)]
    subset: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    samples_per_config: u32,
    /// Comma-separated dilemma ids to restrict to.
    #[arg(long, value_delimiter = ',')]
    dilemmas: Option<Vec<String>>,
    /// Directory of fixture JSON files; the built-in set when absent.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    /// Directory written by `generate`.
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    fixtures: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Directory written by `generate` or `render`.
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated: text, caption, image.
    #[arg(long, default_value = "text")]
    modes: String,
    /// synthetic:<preset or configured agent>, or http.
    #[arg(long)]
    client: String,
    #[arg(long)]
    repeats: Option<u32>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    /// Also run the extraction step in image mode, for the OCR gate.
    #[arg(long)]
    ocr_audit: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Result log written by `evaluate`.
    #[arg(long)]
    log: PathBuf,
    /// Sample directory the log was produced from.
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    fixtures: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated: curves (quantity), firth, mft, preferences,
    /// robustness, refusals, attribution (interaction), or all.
    #[arg(long, default_value = "all")]
    diagnostics: String,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory written by `analyze`.
    #[arg(long)]
    analysis: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let root = cli.workspace;
    let at = |p: &Path| root.join(p);
    let at_opt = |p: &Option<PathBuf>| p.as_deref().map(|p| root.join(p));
    let cfg = Config::load(at_opt(&cli.config).as_deref())?;
    match cli.command {
        Command::Generate(a) => commands::cmd_generate(GenerateOpts {
            subset: a.subset,
            seed: a.seed,
            samples_per_config: a.samples_per_config,
            dilemmas: a.dilemmas,
            fixtures: at_opt(&a.fixtures),
            out: at(&a.out),
        }),
        Command::Render(a) => {
            commands::cmd_render(RenderOpts { samples: at(&a.samples), fixtures: at_opt(&a.fixtures), out: at(&a.out) }, &cfg)
        }
        Command::Evaluate(a) => commands::cmd_evaluate(
            EvaluateOpts {
                samples: at(&a.samples),
                out: at(&a.out),
                modes: a.modes,
                client: a.client,
                repeats: a.repeats,
                max_in_flight: a.max_in_flight,
                ocr_audit: a.ocr_audit,
            },
            &cfg,
        ),
        Command::Analyze(a) => commands::cmd_analyze(
            AnalyzeOpts {
                log: at(&a.log),
                samples: at(&a.samples),
                fixtures: at_opt(&a.fixtures),
                out: at(&a.out),
                diagnostics: a.diagnostics,
            },
            &cfg,
        ),
        Command::Report(a) => report::cmd_report(&at(&a.analysis), &at(&a.out)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
