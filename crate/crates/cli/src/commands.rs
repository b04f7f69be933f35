use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use serde::Serialize;
use symptomclip::encoders::EncoderError;
use symptomclip::eval::{compare, render, EmbeddingCache, EvalError, EvalOptions, Evaluator};
use symptomclip::knowledge::{build_kb, load_kb, KnowledgeError, LlmClient, PromptTemplate, ResponseCache};
use symptomclip::report::{build_case_report, export_report, CaseReport, ReportConfig};
use symptomclip::{classify, AggregationMode, DatasetManifest, Encoder, EncoderBundle, KnowledgeBase, ReportFormat};

use crate::config::{FileConfig, FlagConfig, RunConfig};
use crate::{Cli, Command, Common};

pub const EXIT_IO: u8 = 1;
pub const EXIT_LLM: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_MANIFEST: u8 = 4;

pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

type CmdResult<T = ()> = Result<T, Failure>;

fn fail(code: u8, error: impl Into<anyhow::Error>) -> Failure {
    Failure { code, error: error.into() }
}

fn config_err(e: anyhow::Error) -> Failure {
    fail(EXIT_CONFIG, e)
}

fn encoder_code(e: &EncoderError) -> u8 {
    match e {
        EncoderError::Decode(_)
        | EncoderError::EmptyImage
        | EncoderError::Io { .. }
        | EncoderError::Backend { .. }
        | EncoderError::Asset(_) => EXIT_IO,
        EncoderError::Manifest(_)
        | EncoderError::Integrity { .. }
        | EncoderError::EmptyBatch
        | EncoderError::Dimension { .. }
        | EncoderError::Scoring(_) => EXIT_CONFIG,
    }
}

fn knowledge_code(e: &KnowledgeError) -> u8 {
    if e.is_llm_failure() {
        return EXIT_LLM;
    }
    match e.root() {
        KnowledgeError::Io { .. } | KnowledgeError::Cache(_) => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

fn eval_code(e: &EvalError) -> u8 {
    match e {
        EvalError::Manifest(_) | EvalError::ClassMismatch { .. } => EXIT_MANIFEST,
        EvalError::ConfigMismatch(_) | EvalError::Incomparable(_) | EvalError::Scoring(_) => EXIT_CONFIG,
        EvalError::Encoder(inner) => encoder_code(inner),
        EvalError::Io { .. } | EvalError::Encode { .. } | EvalError::NothingEvaluated { .. } => EXIT_IO,
    }
}

fn from_encoder(e: EncoderError) -> Failure {
    fail(encoder_code(&e), e)
}

fn from_knowledge(e: KnowledgeError) -> Failure {
    fail(knowledge_code(&e), e)
}

fn from_eval(e: EvalError) -> Failure {
    fail(eval_code(&e), e)
}

fn resolve(common: &Common, mut flags: FlagConfig) -> CmdResult<RunConfig> {
    let base = common.flags();
    flags.format = base.format;
    flags.workers = base.workers;
    flags.cache_dir = base.cache_dir;
    flags.strict = base.strict;
    let file = common.config_path().map(|p| FileConfig::load(&p)).transpose().map_err(config_err)?;
    RunConfig::resolve(flags, file).map_err(config_err)
}

fn emit(bytes: &[u8], out: Option<&Path>) -> CmdResult {
    use std::io::Write;
    if let Some(path) = out {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| fail(EXIT_IO, anyhow!("{}: {e}", parent.display())))?;
        }
        fs::write(path, bytes).map_err(|e| fail(EXIT_IO, anyhow!("{}: {e}", path.display())))?;
    }
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(bytes).and_then(|_| stdout.flush()).map_err(|e| fail(EXIT_IO, e))
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

fn load_bundle(path: &Path) -> CmdResult<EncoderBundle> {
    let bundle = EncoderBundle::load(path).map_err(from_encoder)?;
    eprintln!("loaded encoder {}", bundle.describe());
    Ok(bundle)
}

fn load_kb_file(path: &Path) -> CmdResult<KnowledgeBase> {
    load_kb(path).map_err(|e| {
        let code = knowledge_code(&e);
        fail(code, anyhow!("{}: {e}", path.display()))
    })
}

fn eval_options(cfg: &RunConfig, mode: AggregationMode) -> EvalOptions {
    EvalOptions { mode, strict: cfg.strict, workers: cfg.workers, symptom_template: cfg.symptom_template.clone() }
}

fn evaluator(cfg: &RunConfig) -> Evaluator {
    Evaluator::with_cache(EmbeddingCache::with_disk(cfg.cache_dir.join("embeddings")))
}

fn read_categories(path: &Path) -> CmdResult<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| fail(EXIT_IO, anyhow!("{}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

pub fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::GenerateKb { categories, out, variant, kb_id, dataset_id, llm_cache, offline, endpoint, model, common } => {
            let flags = FlagConfig {
                variant,
                llm_cache,
                offline: offline.then_some(true),
                endpoint,
                model,
                ..Default::default()
            };
            let cfg = resolve(&common, flags)?;
            let names = read_categories(&categories)?;
            let kb_id = kb_id.unwrap_or_else(|| {
                out.file_stem().map_or_else(|| "kb".into(), |s| s.to_string_lossy().into_owned())
            });
            let template = PromptTemplate::for_variant(cfg.variant);
            let client = LlmClient::new(cfg.llm.clone(), ResponseCache::new(&cfg.llm_cache));
            let mut kb = build_kb(&kb_id, &names, &template, &client).map_err(from_knowledge)?;
            kb.dataset_id = dataset_id;
            kb.save(&out).map_err(from_knowledge)?;
            eprintln!(
                "{} classes ({} from cache, {} from the endpoint) -> {}",
                kb.classes.len(),
                client.cache_hits(),
                client.network_calls(),
                out.display()
            );
            let mut summary = String::new();
            for c in &kb.classes {
                summary.push_str(&format!("{}\t{} symptoms\n", c.class_id, c.symptoms.len()));
            }
            emit(summary.as_bytes(), None)
        }

        Command::Classify { image, out, scoring, common } => {
            let mut flags = FlagConfig::default();
            scoring.apply(&mut flags);
            let cfg = resolve(&common, flags)?;
            let bundle = load_bundle(cfg.bundle().map_err(config_err)?)?;
            let kb = load_kb_file(cfg.kb().map_err(config_err)?)?;
            let ev = evaluator(&cfg);
            let opts = eval_options(&cfg, cfg.aggregation);
            let classes = ev.embed_kb(&kb, &bundle, &opts).map_err(from_eval)?;
            let raw = fs::read(&image).map_err(|e| fail(EXIT_IO, anyhow!("{}: {e}", image.display())))?;
            let f = ev
                .cache()
                .image(&bundle, &raw)
                .map_err(|e| fail(encoder_code(&e), anyhow!("{}: {e}", image.display())))?;
            let scores = classify(&f, &classes, cfg.aggregation).map_err(|e| fail(EXIT_CONFIG, e))?;
            let report = build_case_report(&scores, image.to_string_lossy()).with_config(ReportConfig {
                encoder_label: bundle.label().to_string(),
                encoder_fingerprint: bundle.fingerprint().to_string(),
                kb_id: kb.kb_id.clone(),
            });
            emit(&export_report(&report, cfg.format), out.as_deref())
        }

        Command::Eval { manifest, baseline, out, scoring, common } => {
            let mut flags = FlagConfig::default();
            scoring.apply(&mut flags);
            let cfg = resolve(&common, flags)?;
            let m = DatasetManifest::load(&manifest).map_err(from_eval)?;
            let bundle = load_bundle(cfg.bundle().map_err(config_err)?)?;
            let kb = load_kb_file(cfg.kb().map_err(config_err)?)?;
            let ev = evaluator(&cfg);
            let opts = eval_options(&cfg, cfg.aggregation);
            let ours = ev.evaluate(&m, &kb, &bundle, &opts).map_err(from_eval)?;
            let base = if baseline {
                let b = ev.evaluate(&m, &kb.category_name_baseline(), &bundle, &opts).map_err(from_eval)?;
                let gain = compare(&ours, &b).map_err(from_eval)?;
                Some((b, gain))
            } else {
                None
            };
            let bytes = match cfg.format {
                ReportFormat::Json => {
                    #[derive(Serialize)]
                    struct EvalOutput<'a> {
                        result: &'a symptomclip::EvalResult,
                        #[serde(skip_serializing_if = "Option::is_none")]
                        baseline: Option<&'a symptomclip::EvalResult>,
                        #[serde(skip_serializing_if = "Option::is_none")]
                        gain: Option<&'a symptomclip::GainRow>,
                    }
                    json_bytes(&EvalOutput {
                        result: &ours,
                        baseline: base.as_ref().map(|(b, _)| b),
                        gain: base.as_ref().map(|(_, g)| g),
                    })
                }
                ReportFormat::Csv => match &base {
                    Some((_, gain)) => render::gains_csv(std::slice::from_ref(gain)).into_bytes(),
                    None => render::results_csv(std::slice::from_ref(&ours)).into_bytes(),
                },
                ReportFormat::Text => {
                    let mut s = render::result_text(&ours);
                    if let Some((b, gain)) = &base {
                        s.push_str("\ncategory-name baseline\n\n");
                        s.push_str(&render::result_text(b));
                        s.push('\n');
                        s.push_str(&render::gains_text(std::slice::from_ref(gain)));
                    }
                    s.into_bytes()
                }
            };
            emit(&bytes, out.as_deref())
        }

        Command::Sweep { manifest, kbs, bundles, modes, out, symptom_template, common } => {
            let flags = FlagConfig { symptom_template, ..Default::default() };
            let cfg = resolve(&common, flags)?;
            let m = DatasetManifest::load(&manifest).map_err(from_eval)?;
            let kb_paths = if kbs.is_empty() { cfg.sweep_kbs.clone() } else { kbs };
            let bundle_paths: Vec<PathBuf> = if !bundles.is_empty() {
                bundles
            } else if !cfg.sweep_bundles.is_empty() {
                cfg.sweep_bundles.clone()
            } else {
                cfg.bundle.clone().into_iter().collect()
            };
            let modes = if !modes.is_empty() {
                modes
            } else if !cfg.sweep_modes.is_empty() {
                cfg.sweep_modes.clone()
            } else {
                AggregationMode::ALL.to_vec()
            };
            if kb_paths.is_empty() || bundle_paths.is_empty() {
                return Err(config_err(anyhow!("sweep needs at least one --kb and one --bundle")));
            }
            let kbs = kb_paths.iter().map(|p| load_kb_file(p)).collect::<CmdResult<Vec<_>>>()?;
            for kb in &kbs {
                let missing: Vec<String> =
                    m.classes.iter().filter(|c| kb.class(c).is_none()).cloned().collect();
                if !missing.is_empty() {
                    return Err(from_eval(EvalError::ClassMismatch { kb_id: kb.kb_id.clone(), missing }));
                }
            }
            let loaded = bundle_paths.iter().map(|p| load_bundle(p)).collect::<CmdResult<Vec<_>>>()?;
            let encoders: Vec<&dyn Encoder> = loaded.iter().map(|b| b as &dyn Encoder).collect();
            let ev = evaluator(&cfg);
            let grid = ev.sweep(&m, &kbs, &encoders, &modes, &eval_options(&cfg, modes[0]));
            let failed = grid.failures().count();
            if failed > 0 {
                eprintln!("warning: {failed} of {} cells failed", grid.cells.len());
            }
            let stats = ev.cache().stats();
            eprintln!(
                "text embeddings: {} computed, {} reused; image embeddings: {} computed, {} reused",
                stats.text_misses, stats.text_hits, stats.image_misses, stats.image_hits
            );
            let bytes = match cfg.format {
                ReportFormat::Json => json_bytes(&grid),
                ReportFormat::Csv => render::sweep_csv(&grid).into_bytes(),
                ReportFormat::Text => render::sweep_text(&grid).into_bytes(),
            };
            emit(&bytes, out.as_deref())
        }

        Command::ExportReport { input, out, common } => {
            let cfg = resolve(&common, FlagConfig::default())?;
            let raw = fs::read(&input).map_err(|e| fail(EXIT_IO, anyhow!("{}: {e}", input.display())))?;
            let report = CaseReport::from_json(&raw).map_err(|e| fail(EXIT_CONFIG, anyhow!("{}: {e}", input.display())))?;
            emit(&export_report(&report, cfg.format), out.as_deref())
        }

        Command::BuildManifest { preset, root, out, common } => {
            let _ = resolve(&common, FlagConfig::default())?;
            let m = preset.build(&root).map_err(from_eval)?;
            let m = DatasetManifest::new(
                m.dataset_id.clone(),
                m.classes.clone(),
                m.entries
                    .iter()
                    .map(|e| symptomclip::eval::ManifestEntry { path: m.resolve(e).to_string_lossy().into_owned(), class_id: e.class_id.clone() })
                    .collect(),
                out.parent().unwrap_or(Path::new(".")),
            )
            .map_err(from_eval)?;
            m.save_json(&out).map_err(from_eval)?;
            let mut summary = format!("{} images -> {}\n", m.len(), out.display());
            for (class, n) in m.class_counts() {
                summary.push_str(&format!("{class}\t{n}\n"));
            }
            emit(summary.as_bytes(), None)
        }
    }
}
