//! Run configuration: command-line flags over a TOML file over environment
//! variables over defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;
use symptomclip::knowledge::LlmConfig;
use symptomclip::{AggregationMode, PromptVariant, ReportFormat};

pub const ENV_PREFIX: &str = "SYMPTOMCLIP_";
const DEFAULT_CACHE_DIR: &str = ".symptomclip-cache";

/// Keys accepted in the TOML file. Relative paths resolve against the
/// file's directory.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub bundle: Option<PathBuf>,
    pub kb: Option<PathBuf>,
    pub aggregation: Option<String>,
    pub variant: Option<String>,
    pub strict: Option<bool>,
    pub workers: Option<usize>,
    pub cache_dir: Option<PathBuf>,
    pub llm_cache: Option<PathBuf>,
    pub format: Option<String>,
    pub symptom_template: Option<String>,
    #[serde(default)]
    pub llm: FileLlm,
    #[serde(default)]
    pub sweep: FileSweep,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileLlm {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub api_key_env: Option<String>,
    pub timeout_secs: Option<u64>,
    pub offline: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSweep {
    #[serde(default)]
    pub kbs: Vec<PathBuf>,
    #[serde(default)]
    pub bundles: Vec<PathBuf>,
    #[serde(default)]
    pub modes: Vec<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut cfg.bundle, &mut cfg.kb, &mut cfg.cache_dir, &mut cfg.llm_cache].into_iter().flatten() {
            fix(p);
        }
        cfg.sweep.kbs.iter_mut().chain(cfg.sweep.bundles.iter_mut()).for_each(fix);
        Ok(cfg)
    }
}

/// Values given on the command line; `None` means not given.
#[derive(Debug, Default, Clone)]
pub struct FlagConfig {
    pub bundle: Option<PathBuf>,
    pub kb: Option<PathBuf>,
    pub aggregation: Option<AggregationMode>,
    pub variant: Option<PromptVariant>,
    pub strict: Option<bool>,
    pub workers: Option<usize>,
    pub cache_dir: Option<PathBuf>,
    pub llm_cache: Option<PathBuf>,
    pub format: Option<ReportFormat>,
    pub symptom_template: Option<String>,
    pub offline: Option<bool>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub bundle: Option<PathBuf>,
    pub kb: Option<PathBuf>,
    pub aggregation: AggregationMode,
    pub variant: PromptVariant,
    pub strict: bool,
    pub workers: usize,
    pub cache_dir: PathBuf,
    pub llm_cache: PathBuf,
    pub format: ReportFormat,
    pub symptom_template: Option<String>,
    pub llm: LlmConfig,
    pub sweep_kbs: Vec<PathBuf>,
    pub sweep_bundles: Vec<PathBuf>,
    pub sweep_modes: Vec<AggregationMode>,
}

fn env(name: &str) -> Option<String> {
    std::env::var(format!("{ENV_PREFIX}{name}")).ok().filter(|v| !v.is_empty())
}

fn parse_bool(name: &str, v: &str) -> anyhow::Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => bail!("{name}: expected a boolean, got `{v}`"),
    }
}

fn parse<T: std::str::FromStr>(what: &str, v: &str) -> anyhow::Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| anyhow::anyhow!("{what}: {e}"))
}

impl RunConfig {
    pub fn resolve(flags: FlagConfig, file: Option<FileConfig>) -> anyhow::Result<Self> {
        let file = file.unwrap_or_default();

        let aggregation = match (flags.aggregation, &file.aggregation, env("AGGREGATION")) {
            (Some(a), _, _) => a,
            (None, Some(s), _) => parse("aggregation", s)?,
            (None, None, Some(s)) => parse("SYMPTOMCLIP_AGGREGATION", &s)?,
            _ => AggregationMode::Mean,
        };
        let variant = match (flags.variant, &file.variant, env("VARIANT")) {
            (Some(v), _, _) => v,
            (None, Some(s), _) => parse("variant", s)?,
            (None, None, Some(s)) => parse("SYMPTOMCLIP_VARIANT", &s)?,
            _ => PromptVariant::Designed,
        };
        let format = match (flags.format, &file.format, env("FORMAT")) {
            (Some(f), _, _) => f,
            (None, Some(s), _) => parse("format", s)?,
            (None, None, Some(s)) => parse("SYMPTOMCLIP_FORMAT", &s)?,
            _ => ReportFormat::Text,
        };
        let strict = match (flags.strict, file.strict, env("STRICT")) {
            (Some(b), _, _) | (None, Some(b), _) => b,
            (None, None, Some(s)) => parse_bool("SYMPTOMCLIP_STRICT", &s)?,
            _ => true,
        };
        let workers = match (flags.workers, file.workers, env("WORKERS")) {
            (Some(n), _, _) | (None, Some(n), _) => n,
            (None, None, Some(s)) => parse("SYMPTOMCLIP_WORKERS", &s)?,
            _ => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        if workers == 0 {
            bail!("worker count must be at least 1");
        }
        let cache_dir = flags
            .cache_dir
            .or(file.cache_dir)
            .or_else(|| env("CACHE_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR));
        let llm_cache = flags
            .llm_cache
            .or(file.llm_cache)
            .or_else(|| env("LLM_CACHE").map(PathBuf::from))
            .unwrap_or_else(|| cache_dir.join("llm"));

        let defaults = LlmConfig::default();
        let offline = match (flags.offline, file.llm.offline, env("OFFLINE")) {
            (Some(b), _, _) | (None, Some(b), _) => b,
            (None, None, Some(s)) => parse_bool("SYMPTOMCLIP_OFFLINE", &s)?,
            _ => false,
        };
        let llm = LlmConfig {
            endpoint: flags.endpoint.or(file.llm.endpoint).or_else(|| env("LLM_ENDPOINT")).unwrap_or(defaults.endpoint),
            model: flags.model.or(file.llm.model).or_else(|| env("LLM_MODEL")).unwrap_or(defaults.model),
            temperature: file.llm.temperature.unwrap_or(defaults.temperature),
            api_key_env: file.llm.api_key_env.or_else(|| env("LLM_API_KEY_ENV")).unwrap_or(defaults.api_key_env),
            timeout_secs: file.llm.timeout_secs.unwrap_or(defaults.timeout_secs),
            offline,
        };

        let sweep_modes = file
            .sweep
            .modes
            .iter()
            .map(|m| parse("sweep.modes", m))
            .collect::<anyhow::Result<Vec<AggregationMode>>>()?;

        Ok(RunConfig {
            bundle: flags.bundle.or(file.bundle).or_else(|| env("BUNDLE").map(PathBuf::from)),
            kb: flags.kb.or(file.kb).or_else(|| env("KB").map(PathBuf::from)),
            aggregation,
            variant,
            strict,
            workers,
            cache_dir,
            llm_cache,
            format,
            symptom_template: flags
                .symptom_template
                .or(file.symptom_template)
                .or_else(|| env("SYMPTOM_TEMPLATE")),
            llm,
            sweep_kbs: file.sweep.kbs,
            sweep_bundles: file.sweep.bundles,
            sweep_modes,
        })
    }

    pub fn bundle(&self) -> anyhow::Result<&Path> {
        existing("bundle", self.bundle.as_deref(), "BUNDLE")
    }

    pub fn kb(&self) -> anyhow::Result<&Path> {
        existing("knowledge base", self.kb.as_deref(), "KB")
    }
}

fn existing<'a>(what: &str, p: Option<&'a Path>, env_name: &str) -> anyhow::Result<&'a Path> {
    let Some(p) = p else {
        bail!("no {what} given (flag, config file or {ENV_PREFIX}{env_name})");
    };
    if !p.exists() {
        bail!("{what} {} does not exist", p.display());
    }
    Ok(p)
}
