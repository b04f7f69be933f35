//! `symptomclip` command-line interface.
//!
//! Exit codes: 0 ok, 1 I/O, 2 LLM, 3 configuration mismatch, 4 manifest
//! mismatch.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use symptomclip::eval::Preset;
use symptomclip::{AggregationMode, PromptVariant, ReportFormat};

use config::FlagConfig;

#[derive(Parser, Debug)]
#[command(name = "symptomclip", version, about = "Zero-shot image diagnosis with per-class symptom descriptions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// TOML config file; also read from SYMPTOMCLIP_CONFIG.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_parser = parse_format)]
    format: Option<ReportFormat>,
    /// Parallel image workers.
    #[arg(long)]
    workers: Option<usize>,
    /// Abort on the first unreadable image (default).
    #[arg(long, overrides_with = "no_strict")]
    strict: bool,
    /// Record unreadable images and keep going.
    #[arg(long, overrides_with = "strict")]
    no_strict: bool,
}

#[derive(Args, Debug, Clone, Default)]
struct Scoring {
    /// Encoder bundle directory or manifest.json.
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Knowledge-base JSON file.
    #[arg(long)]
    kb: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    aggregation: Option<AggregationMode>,
    /// Wrapper applied to each symptom before text encoding, containing `{symptom}`.
    #[arg(long)]
    symptom_template: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Query the LLM for every category and write a knowledge base.
    GenerateKb {
        /// Category names, one per line.
        #[arg(long)]
        categories: PathBuf,
        /// Knowledge-base output path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_variant)]
        variant: Option<PromptVariant>,
        #[arg(long)]
        kb_id: Option<String>,
        #[arg(long)]
        dataset_id: Option<String>,
        /// Directory of cached LLM answers.
        #[arg(long)]
        llm_cache: Option<PathBuf>,
        /// Serve answers from the cache only.
        #[arg(long)]
        offline: bool,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        model: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Diagnose one image and print the per-symptom evidence.
    Classify {
        image: PathBuf,
        /// Also write the output to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        scoring: Scoring,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a labeled manifest.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        /// Also run the category-name-only knowledge base and print gains.
        #[arg(long)]
        baseline: bool,
        /// Also write the output to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        scoring: Scoring,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate every knowledge base x bundle x aggregation combination.
    Sweep {
        #[arg(long)]
        manifest: PathBuf,
        /// Knowledge bases (repeatable); defaults to the config's sweep.kbs.
        #[arg(long = "kb")]
        kbs: Vec<PathBuf>,
        /// Bundles (repeatable); defaults to sweep.bundles, then bundle.
        #[arg(long = "bundle")]
        bundles: Vec<PathBuf>,
        /// Comma-separated aggregation modes; defaults to mean,max.
        #[arg(long, value_delimiter = ',', value_parser = parse_mode)]
        modes: Vec<AggregationMode>,
        /// Also write the output to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        symptom_template: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Convert a JSON case report to another format.
    ExportReport {
        #[arg(long)]
        input: PathBuf,
        /// Also write the output to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Scan a public dataset's directory layout into a manifest.
    BuildManifest {
        #[arg(long, value_parser = parse_preset)]
        preset: Preset,
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: symptomclip::report::ReportError| e.to_string())
}

fn parse_mode(s: &str) -> Result<AggregationMode, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_variant(s: &str) -> Result<PromptVariant, String> {
    s.parse()
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse()
}

impl Common {
    fn flags(&self) -> FlagConfig {
        FlagConfig {
            format: self.format,
            workers: self.workers,
            cache_dir: self.cache_dir.clone(),
            strict: if self.no_strict {
                Some(false)
            } else if self.strict {
                Some(true)
            } else {
                None
            },
            ..Default::default()
        }
    }

    fn config_path(&self) -> Option<PathBuf> {
        self.config
            .clone()
            .or_else(|| std::env::var_os("SYMPTOMCLIP_CONFIG").filter(|v| !v.is_empty()).map(PathBuf::from))
    }
}

impl Scoring {
    fn apply(&self, flags: &mut FlagConfig) {
        flags.bundle = self.bundle.clone();
        flags.kb = self.kb.clone();
        flags.aggregation = self.aggregation;
        flags.symptom_template = self.symptom_template.clone();
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(commands::EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
