//! Config-driven commands: sample, translate, train, egst, eval, answer and
//! fixture generation. Every command writes a manifest next to its outputs.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{read_jsonl, write_jsonl, DataError, DataPair};
use crate::egst::{
    collect_direct_answers, pegst_schedule, self_train_staged, Corpora, EgstConfig, EgstError, FilterConfig,
    FilterKind, IterationReport, StopConfig,
};
use crate::embed::{EmbedError, Embedder, HashedEmbedder, RemoteEmbedder, DEFAULT_DIM};
use crate::fixture::{self, gen_fixture, FixtureSpec};
use crate::ir::{fallback_answer, parsed_answer, FinalAnswer, IrConfig, IrProvider, QaPair};
use crate::kb::{KbError, KnowledgeBase};
use crate::llm::{ChatClient, Completion, ProviderError, RetryPolicy};
use crate::model::{
    answer_strings, evaluate, score_pair, set_f1, train, Featurizer, Metrics, ModelError, RankerParams, TrainConfig,
};
use crate::query::{Answers, Program};
use crate::sampler::{extract_template, load_templates, sample_corpus, ProgramTemplate, SampleConfig, SampleError, TemplateError};
use crate::translator::{render_prompt, select_seeds, translate_corpus, PromptSpec, SeedPair, TranslateReport, TranslationProvider};
use crate::verbalize::Verbalizer;

pub const PROGRAMS_FILE: &str = "programs.txt";
pub const SYNTHETIC_FILE: &str = "synthetic.jsonl";
pub const PROMPT_SAMPLE_FILE: &str = "prompt_sample.txt";
pub const MODEL_FILE: &str = "model.json";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";
pub const EGST_MODEL_FILE: &str = "model_egst.json";
pub const ITERATIONS_FILE: &str = "iterations.jsonl";
pub const PSEUDO_FILE: &str = "pseudo.jsonl";
pub const EVAL_FILE: &str = "eval.json";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("input: {0}")]
    Input(String),
    #[error("empty result: {0}")]
    Empty(String),
    #[error("provider: {0}")]
    Provider(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Input(_) => 1,
            PipelineError::Empty(_) => 2,
            PipelineError::Provider(_) => 3,
        }
    }
}

impl From<KbError> for PipelineError {
    fn from(e: KbError) -> Self {
        PipelineError::Input(e.to_string())
    }
}

impl From<DataError> for PipelineError {
    fn from(e: DataError) -> Self {
        PipelineError::Input(e.to_string())
    }
}

impl From<TemplateError> for PipelineError {
    fn from(e: TemplateError) -> Self {
        PipelineError::Input(format!("templates: {e}"))
    }
}

impl From<SampleError> for PipelineError {
    fn from(e: SampleError) -> Self {
        PipelineError::Empty(e.to_string())
    }
}

impl From<ProviderError> for PipelineError {
    fn from(e: ProviderError) -> Self {
        PipelineError::Provider(e.to_string())
    }
}

impl From<ModelError> for PipelineError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Checkpoint(_) => PipelineError::Input(e.to_string()),
            _ => PipelineError::Empty(e.to_string()),
        }
    }
}

impl From<EgstError> for PipelineError {
    fn from(e: EgstError) -> Self {
        match e {
            EgstError::Model(m) => m.into(),
            EgstError::Embed(EmbedError::Provider(p)) => p.into(),
            EgstError::Embed(other) => PipelineError::Input(other.to_string()),
            EgstError::NoData => PipelineError::Empty(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> PipelineError {
    PipelineError::Input(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Offline,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSettings {
    pub kind: ProviderKind,
    pub model: String,
    /// Seed pairs shown in each translation prompt.
    pub prompt_seeds: usize,
    pub parallelism: usize,
    pub temperature: f64,
    pub max_attempts: u32,
    pub backoff_ms: u64,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        ProviderSettings {
            kind: ProviderKind::Offline,
            model: "gpt-3.5-turbo".into(),
            prompt_seeds: 25,
            parallelism: 4,
            temperature: 0.0,
            max_attempts: 3,
            backoff_ms: 500,
        }
    }
}

impl ProviderSettings {
    fn retry(&self) -> RetryPolicy {
        RetryPolicy { max_attempts: self.max_attempts.max(1), backoff: Duration::from_millis(self.backoff_ms) }
    }

    fn chat(&self) -> Result<Arc<dyn Completion>, PipelineError> {
        Ok(Arc::new(ChatClient::from_env(self.model.clone(), self.retry())?.with_temperature(self.temperature)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    #[default]
    Hashed,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderSettings {
    pub kind: EmbedderKind,
    pub dim: usize,
    /// Character n-gram size for the hashed embedder; 0 hashes whole tokens only.
    pub char_ngrams: usize,
    pub model: String,
}

impl Default for EmbedderSettings {
    fn default() -> Self {
        EmbedderSettings { kind: EmbedderKind::Hashed, dim: DEFAULT_DIM, char_ngrams: 0, model: "all-MiniLM-L6-v2".into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IrKind {
    #[default]
    None,
    Stub,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrSettings {
    pub kind: IrKind,
    /// JSONL of `{question, answer}` canned responses (stub only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stub: Option<PathBuf>,
    /// JSONL of `{question, answer}` prompt demos.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub demos: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSettings {
    pub max_programs: usize,
    pub per_step_fanout: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_entities: Option<Vec<String>>,
    /// Add the templates of the seed programs to the template file's.
    pub templates_from_seeds: bool,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        let d = SampleConfig::default();
        SamplerSettings {
            max_programs: d.max_programs,
            per_step_fanout: d.per_step_fanout,
            seed_entities: None,
            templates_from_seeds: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub neg_cap: usize,
    pub candidate_cap: usize,
    pub pseudo_weight: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSettings {
            epochs: d.epochs,
            lr: d.lr,
            lr_decay: d.lr_decay,
            neg_cap: d.neg_cap,
            candidate_cap: d.candidate_cap,
            pseudo_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSettings {
    pub semantic_threshold: f64,
    pub enabled: Vec<String>,
    pub skip_semantic_on_error: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pegst_stages: Option<Vec<Vec<String>>>,
}

impl Default for FilterSettings {
    fn default() -> Self {
        FilterSettings {
            semantic_threshold: 0.2,
            enabled: FilterKind::ALL.iter().map(|k| k.name().to_owned()).collect(),
            skip_semantic_on_error: false,
            pegst_stages: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopSettings {
    pub max_iters: usize,
    pub min_f1_gain: f64,
}

impl Default for StopSettings {
    fn default() -> Self {
        let d = StopConfig::default();
        StopSettings { max_iters: d.max_iters, min_f1_gain: d.min_f1_gain }
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub rng_seed: u64,
    pub kb: PathBuf,
    pub templates: PathBuf,
    pub seeds: PathBuf,
    pub unlabeled: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev: Option<PathBuf>,
    /// Gold programs of the unlabeled questions; only used to report pseudo-label error rates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unlabeled_gold: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub provider: ProviderSettings,
    #[serde(default)]
    pub embedder: EmbedderSettings,
    #[serde(default)]
    pub ir: IrSettings,
    #[serde(default)]
    pub sampler: SamplerSettings,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub filter: FilterSettings,
    #[serde(default)]
    pub stop: StopSettings,
}

impl PipelineConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Resolves relative paths against `base`.
    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.kb, &mut self.templates, &mut self.seeds, &mut self.unlabeled, &mut self.out_dir] {
            fix(p);
        }
        for p in [&mut self.dev, &mut self.unlabeled_gold, &mut self.ir.stub, &mut self.ir.demos].into_iter().flatten() {
            fix(p);
        }
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            lr: self.train.lr,
            lr_decay: self.train.lr_decay,
            neg_cap: self.train.neg_cap,
            candidate_cap: self.train.candidate_cap,
            rng_seed: self.rng_seed,
        }
    }

    fn filter_config(&self, names: &[String]) -> Result<FilterConfig, PipelineError> {
        let enabled = parse_filters(names)?;
        if !(-1.0..=1.0).contains(&self.filter.semantic_threshold) {
            return Err(PipelineError::Config(format!("semantic_threshold {} outside [-1, 1]", self.filter.semantic_threshold)));
        }
        Ok(FilterConfig {
            semantic_threshold: self.filter.semantic_threshold,
            enabled,
            skip_semantic_on_error: self.filter.skip_semantic_on_error,
        })
    }

    /// The filter stages of a plain (one stage) or staged run.
    pub fn stages(&self, pegst: bool) -> Result<Vec<FilterConfig>, PipelineError> {
        if !pegst {
            return Ok(vec![self.filter_config(&self.filter.enabled)?]);
        }
        let custom = match &self.filter.pegst_stages {
            Some(stages) if stages.is_empty() => return Err(PipelineError::Config("pegst_stages is empty".into())),
            Some(stages) => Some(stages.iter().map(|s| parse_filters(s)).collect::<Result<Vec<_>, _>>()?),
            None => None,
        };
        let base = self.filter_config(&[])?;
        Ok(pegst_schedule(custom)
            .into_iter()
            .map(|f| FilterConfig { enabled: f.enabled, ..base.clone() })
            .collect())
    }
}

fn parse_filters(names: &[String]) -> Result<BTreeSet<FilterKind>, PipelineError> {
    names
        .iter()
        .map(|n| FilterKind::parse(n).ok_or_else(|| PipelineError::Config(format!("unknown filter {n:?}"))))
        .collect()
}

/// A loaded config plus the hash of its source text.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: PipelineConfig,
    pub config_sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Run {
    /// Parses TOML text; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Run, PipelineError> {
        let mut config: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.rebase(base);
        Ok(Run { config, config_sha256: sha256_hex(text.as_bytes()) })
    }

    /// Loads a config file, then applies `--seed` / `--out` overrides.
    pub fn load(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<Run, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut run = Run::from_toml(&text, &base)?;
        if let Some(s) = seed {
            run.config.rng_seed = s;
        }
        if let Some(o) = out {
            run.config.out_dir = o;
        }
        Ok(run)
    }

    pub fn out(&self, file: &str) -> PathBuf {
        self.config.out_dir.join(file)
    }

    fn ensure_out(&self) -> Result<(), PipelineError> {
        fs::create_dir_all(&self.config.out_dir).map_err(|e| io_err(&self.config.out_dir, e))
    }

    fn load_kb(&self) -> Result<KnowledgeBase, PipelineError> {
        Ok(KnowledgeBase::load(&self.config.kb)?)
    }

    fn seeds(&self) -> Result<Vec<DataPair>, PipelineError> {
        Ok(read_jsonl(&self.config.seeds)?)
    }

    fn write_text(&self, file: &str, text: &str) -> Result<(), PipelineError> {
        let path = self.out(file);
        fs::write(&path, text).map_err(|e| io_err(&path, e))
    }

    fn write_json<T: Serialize>(&self, file: &str, value: &T) -> Result<(), PipelineError> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        self.write_text(file, &text)
    }

    /// Records the config hash, seed, version and output digests.
    fn manifest(&self, command: &str, outputs: &[&str]) -> Result<(), PipelineError> {
        let mut digests = BTreeMap::new();
        for f in outputs {
            let path = self.out(f);
            let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
            digests.insert((*f).to_owned(), sha256_hex(&bytes));
        }
        let manifest = Manifest {
            command: command.to_owned(),
            config_sha256: self.config_sha256.clone(),
            rng_seed: self.config.rng_seed,
            version: env!("CARGO_PKG_VERSION").to_owned(),
            outputs: digests,
        };
        self.write_json(&format!("manifest_{command}.json"), &manifest)
    }

    fn embedder(&self) -> Result<Box<dyn Embedder>, PipelineError> {
        let e = &self.config.embedder;
        Ok(match e.kind {
            EmbedderKind::Hashed => Box::new(HashedEmbedder { dim: e.dim, char_ngrams: e.char_ngrams }),
            EmbedderKind::Remote => Box::new(RemoteEmbedder::from_env(e.model.clone(), e.dim, self.config.provider.retry())?),
        })
    }

    fn ir_config(&self) -> Result<Option<IrConfig<'static>>, PipelineError> {
        let ir = &self.config.ir;
        let demos = match &ir.demos {
            Some(p) => read_jsonl::<QaPair>(p)?,
            None => Vec::new(),
        };
        let provider = match ir.kind {
            IrKind::None => return Ok(None),
            IrKind::Stub => {
                let path = ir.stub.as_ref().ok_or_else(|| PipelineError::Config("ir.kind = \"stub\" needs ir.stub".into()))?;
                let lines: Vec<QaPair> = read_jsonl(path)?;
                IrProvider::Stub(lines.into_iter().map(|p| (p.question, p.answer)).collect())
            }
            IrKind::Remote => IrProvider::Remote(self.config.provider.chat()?),
        };
        Ok(Some(IrConfig { demos, provider }))
    }

    fn model_path(&self, model: Option<&Path>) -> PathBuf {
        if let Some(m) = model {
            return m.to_path_buf();
        }
        let egst = self.out(EGST_MODEL_FILE);
        if egst.exists() {
            egst
        } else {
            self.out(MODEL_FILE)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub rng_seed: u64,
    pub version: String,
    /// Output file name to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

/// Template file entries, plus seed-program templates when enabled; deduplicated.
pub fn collect_templates(run: &Run) -> Result<Vec<ProgramTemplate>, PipelineError> {
    let path = &run.config.templates;
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut templates = load_templates(&text)?;
    if run.config.sampler.templates_from_seeds {
        for pair in run.seeds()? {
            let program = pair.program().map_err(|e| PipelineError::Input(format!("seed program: {e}")))?;
            templates.push(extract_template(&program));
        }
    }
    let mut seen = HashSet::new();
    templates.retain(|t| seen.insert(t.canonical().to_owned()));
    Ok(templates)
}

pub fn cmd_sample(run: &Run) -> Result<Vec<Program>, PipelineError> {
    let kb = run.load_kb()?;
    let templates = collect_templates(run)?;
    let s = &run.config.sampler;
    let config = SampleConfig {
        max_programs: s.max_programs,
        per_step_fanout: s.per_step_fanout,
        seed_entities: s.seed_entities.clone(),
        rng_seed: run.config.rng_seed,
        require_nonempty: true,
    };
    let programs = sample_corpus(&templates, &kb, &config)?;
    run.ensure_out()?;
    let text: String = programs.iter().map(|p| format!("{}\n", p.canonical())).collect();
    run.write_text(PROGRAMS_FILE, &text)?;
    run.manifest("sample", &[PROGRAMS_FILE])?;
    tracing::info!(programs = programs.len(), templates = templates.len(), "sampled");
    Ok(programs)
}

fn read_programs(path: &Path) -> Result<Vec<Program>, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| Program::parse_any(l).map_err(|e| PipelineError::Input(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

pub fn cmd_translate(run: &Run) -> Result<(Vec<DataPair>, TranslateReport), PipelineError> {
    let kb = run.load_kb()?;
    let programs = read_programs(&run.out(PROGRAMS_FILE))?;
    let seeds: Vec<SeedPair> = run
        .seeds()?
        .iter()
        .map(|p| {
            let program = p.program().map_err(|e| PipelineError::Input(format!("seed program: {e}")))?;
            Ok(SeedPair { program, question: p.question.clone() })
        })
        .collect::<Result<_, PipelineError>>()?;
    let chosen = select_seeds(&seeds, run.config.provider.prompt_seeds);
    let provider = match run.config.provider.kind {
        ProviderKind::Offline => TranslationProvider::Offline(Verbalizer::new(&kb)),
        ProviderKind::Remote => TranslationProvider::Remote(run.config.provider.chat()?),
    };
    let (pairs, report) = translate_corpus(&programs, &chosen, &provider, &kb, run.config.provider.parallelism);
    if !programs.is_empty() && report.provider_failures == programs.len() {
        return Err(PipelineError::Provider(format!("all {} translations failed", programs.len())));
    }
    run.ensure_out()?;
    write_jsonl(run.out(SYNTHETIC_FILE), &pairs)?;
    let mut outputs = vec![SYNTHETIC_FILE];
    if let Some(first) = programs.first() {
        run.write_text(PROMPT_SAMPLE_FILE, &render_prompt(&PromptSpec::new(chosen, first.clone())))?;
        outputs.push(PROMPT_SAMPLE_FILE);
    }
    run.manifest("translate", &outputs)?;
    tracing::info!(translated = report.translated, dropped = report.dropped, "translated");
    Ok((pairs, report))
}

fn training_pairs(run: &Run) -> Result<(Vec<DataPair>, Vec<DataPair>), PipelineError> {
    let synthetic: Vec<DataPair> = read_jsonl(run.out(SYNTHETIC_FILE))?;
    Ok((synthetic, run.seeds()?))
}

pub fn cmd_train(run: &Run) -> Result<RankerParams, PipelineError> {
    let kb = run.load_kb()?;
    let f = Featurizer::new(&kb);
    let (synthetic, seeds) = training_pairs(run)?;
    let pairs: Vec<DataPair> = synthetic.into_iter().chain(seeds).collect();
    if pairs.is_empty() {
        return Err(PipelineError::Empty("no synthetic or seed pairs".into()));
    }
    let (params, report) = train(&pairs, &f, &run.config.train_config(), &RankerParams::zeros())?;
    run.ensure_out()?;
    run.write_text(MODEL_FILE, &params.to_json())?;
    run.write_json(TRAIN_REPORT_FILE, &report)?;
    run.manifest("train", &[MODEL_FILE, TRAIN_REPORT_FILE])?;
    Ok(params)
}

fn read_lines(path: &Path) -> Result<Vec<String>, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_owned).collect())
}

pub struct EgstOutcome {
    pub params: RankerParams,
    pub reports: Vec<IterationReport>,
}

pub fn cmd_egst(run: &Run, pegst: bool) -> Result<EgstOutcome, PipelineError> {
    let cfg = &run.config;
    let kb = run.load_kb()?;
    let f = Featurizer::new(&kb);
    let (synthetic, seeds) = training_pairs(run)?;
    let unlabeled = read_lines(&cfg.unlabeled)?;
    let dev: Vec<DataPair> = match &cfg.dev {
        Some(p) => read_jsonl(p)?,
        None => {
            tracing::warn!("no dev set configured; every iteration reports zero dev F1");
            Vec::new()
        }
    };
    let oracle: HashMap<String, String> = match &cfg.unlabeled_gold {
        Some(p) => read_jsonl::<DataPair>(p)?.into_iter().map(|p| (p.question, p.program_text)).collect(),
        None => HashMap::new(),
    };
    let stages = cfg.stages(pegst)?;
    let embedder = run.embedder()?;
    let needs_ir = stages.iter().any(|s| s.enabled.contains(&FilterKind::Inherent));
    let ir = match run.ir_config()? {
        Some(ir) if needs_ir => {
            let answers = collect_direct_answers(&unlabeled, &ir, &kb);
            if answers.is_empty() && !unlabeled.is_empty() && matches!(ir.provider, IrProvider::Remote(_)) {
                return Err(PipelineError::Provider("no direct answer could be obtained".into()));
            }
            answers
        }
        _ => HashMap::new(),
    };
    let corpora = Corpora { unlabeled, seeds, synthetic, dev, oracle };
    let config = EgstConfig {
        train: cfg.train_config(),
        stop: StopConfig { max_iters: cfg.stop.max_iters, min_f1_gain: cfg.stop.min_f1_gain },
        candidate_cap: cfg.train.candidate_cap,
        pseudo_weight: cfg.train.pseudo_weight,
    };
    let out = self_train_staged(&corpora, &f, embedder.as_ref(), &ir, &stages, &config)?;
    run.ensure_out()?;
    run.write_text(EGST_MODEL_FILE, &out.params.to_json())?;
    write_jsonl(run.out(ITERATIONS_FILE), &out.reports)?;
    write_jsonl(run.out(PSEUDO_FILE), &out.pseudo)?;
    run.manifest(if pegst { "pegst" } else { "egst" }, &[EGST_MODEL_FILE, ITERATIONS_FILE, PSEUDO_FILE])?;
    Ok(EgstOutcome { params: out.params, reports: out.reports })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalRecord {
    pub metrics: Metrics,
    pub ir_fallback: bool,
    /// Questions answered through the fallback path.
    pub fallback_used: usize,
}

fn load_params(path: &Path) -> Result<RankerParams, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::Input(format!("{}: no such checkpoint", path.display())));
    }
    Ok(RankerParams::load(path)?)
}

/// EM/F1 over `data` (default: the dev set); with `ir_fallback`, unanswerable
/// questions take the direct answer's entities.
pub fn cmd_eval(run: &Run, model: Option<&Path>, data: Option<&Path>, ir_fallback: bool) -> Result<EvalRecord, PipelineError> {
    let kb = run.load_kb()?;
    let f = Featurizer::new(&kb);
    let data_path = match (data, &run.config.dev) {
        (Some(d), _) => d.to_path_buf(),
        (None, Some(d)) => d.clone(),
        (None, None) => return Err(PipelineError::Config("no evaluation data: set `dev` or pass --data".into())),
    };
    let pairs: Vec<DataPair> = read_jsonl(&data_path)?;
    let params = load_params(&run.model_path(model))?;
    let cap = run.config.train.candidate_cap;
    let record = if ir_fallback {
        let ir = run.ir_config()?.ok_or_else(|| PipelineError::Config("--ir-fallback needs an [ir] provider".into()))?;
        let scored: Vec<Result<(f64, f64, bool), ProviderError>> = pairs
            .par_iter()
            .map(|p| {
                let answer = fallback_answer(&p.question, &params, &f, cap, &ir)?;
                let em = score_pair(&params, &f, p, cap).0;
                let shown = answer_strings(&Answers::Set(answer.answers.clone()));
                Ok((em, set_f1(&shown, &p.answers), answer.mode == crate::ir::AnswerMode::Fallback))
            })
            .collect();
        let scored = scored.into_iter().collect::<Result<Vec<_>, _>>()?;
        let metrics = Metrics::mean(&scored.iter().map(|s| (s.0, s.1)).collect::<Vec<_>>());
        EvalRecord { metrics, ir_fallback, fallback_used: scored.iter().filter(|s| s.2).count() }
    } else {
        EvalRecord { metrics: evaluate(&params, &f, &pairs, cap), ir_fallback, fallback_used: 0 }
    };
    run.ensure_out()?;
    run.write_json(EVAL_FILE, &record)?;
    run.manifest("eval", &[EVAL_FILE])?;
    Ok(record)
}

/// Answers one question; the result lists the display text of each answer.
pub fn cmd_answer(run: &Run, question: &str, model: Option<&Path>, ir_fallback: bool) -> Result<(FinalAnswer, Vec<String>), PipelineError> {
    let kb = run.load_kb()?;
    let f = Featurizer::new(&kb);
    let params = load_params(&run.model_path(model))?;
    let cap = run.config.train.candidate_cap;
    let answer = if ir_fallback {
        let ir = run.ir_config()?.ok_or_else(|| PipelineError::Config("--ir-fallback needs an [ir] provider".into()))?;
        fallback_answer(question, &params, &f, cap, &ir)?
    } else {
        parsed_answer(question, &params, &f, cap)
    };
    let lines = answer
        .answers
        .iter()
        .map(|v| match v.as_entity() {
            Some(id) => match kb.surface_name(id) {
                Some(name) => format!("{id}\t{name}"),
                None => id.to_owned(),
            },
            None => v.to_string(),
        })
        .collect();
    Ok((answer, lines))
}

/// Writes a fixture and a ready-to-run `config.toml` into `dir`.
pub fn cmd_gen_fixture(spec: &FixtureSpec, dir: &Path) -> Result<PathBuf, PipelineError> {
    let fx = gen_fixture(spec);
    fx.write(dir)?;
    let config = fixture_config(spec.rng_seed);
    let path = dir.join(CONFIG_FILE);
    fs::write(&path, config.to_toml()).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

/// The config `gen-fixture` writes, with paths relative to the fixture directory.
pub fn fixture_config(rng_seed: u64) -> PipelineConfig {
    PipelineConfig {
        rng_seed,
        kb: fixture::KB_FILE.into(),
        templates: fixture::TEMPLATES_FILE.into(),
        seeds: fixture::SEEDS_FILE.into(),
        unlabeled: fixture::UNLABELED_FILE.into(),
        dev: Some(fixture::DEV_FILE.into()),
        unlabeled_gold: Some(fixture::UNLABELED_GOLD_FILE.into()),
        out_dir: "run".into(),
        provider: ProviderSettings::default(),
        embedder: EmbedderSettings { char_ngrams: 3, ..EmbedderSettings::default() },
        ir: IrSettings {
            kind: IrKind::Stub,
            stub: Some(fixture::IR_STUB_FILE.into()),
            demos: Some(fixture::IR_DEMOS_FILE.into()),
        },
        sampler: SamplerSettings::default(),
        train: TrainSettings::default(),
        filter: FilterSettings::default(),
        stop: StopSettings { max_iters: 6, ..StopSettings::default() },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_paths() {
        let run = Run::from_toml(
            "rng_seed = 3\nkb = \"kb.tsv\"\ntemplates = \"t.txt\"\nseeds = \"/abs/s.jsonl\"\nunlabeled = \"u.txt\"\n",
            Path::new("/base"),
        )
        .unwrap();
        let c = &run.config;
        assert_eq!(c.kb, Path::new("/base/kb.tsv"));
        assert_eq!(c.seeds, Path::new("/abs/s.jsonl"));
        assert_eq!(c.out_dir, Path::new("/base/out"));
        assert_eq!(c.filter.semantic_threshold, 0.2);
        assert_eq!(c.provider.prompt_seeds, 25);
        assert_eq!(run.config_sha256.len(), 64);
        assert_eq!(c.stages(false).unwrap()[0].enabled.len(), 4);
        let staged: Vec<Vec<FilterKind>> = c.stages(true).unwrap().iter().map(|s| s.enabled.iter().copied().collect()).collect();
        assert_eq!(staged, [vec![FilterKind::Error], vec![FilterKind::Semantic], vec![FilterKind::Surface]]);
    }

    #[test]
    fn config_errors() {
        let base = Path::new(".");
        assert!(matches!(Run::from_toml("kb = \"x\"", base), Err(PipelineError::Config(_))));
        let text = "rng_seed = 1\nkb = \"k\"\ntemplates = \"t\"\nseeds = \"s\"\nunlabeled = \"u\"\nbogus = 1\n";
        assert!(matches!(Run::from_toml(text, base), Err(PipelineError::Config(_))));
        let text = "rng_seed = 1\nkb = \"k\"\ntemplates = \"t\"\nseeds = \"s\"\nunlabeled = \"u\"\n[filter]\nenabled = [\"nope\"]\n";
        let run = Run::from_toml(text, base).unwrap();
        assert!(matches!(run.config.stages(false), Err(PipelineError::Config(_))));
    }

    #[test]
    fn fixture_config_round_trips() {
        let c = fixture_config(7);
        let back: PipelineConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(PipelineError::from(SampleError::EmptyCorpus).exit_code(), 2);
        assert_eq!(PipelineError::from(ProviderError::Config("x".into())).exit_code(), 3);
        assert_eq!(PipelineError::from(ModelError::NoTrainableExamples).exit_code(), 2);
        assert_eq!(PipelineError::Input("x".into()).exit_code(), 1);
    }

    #[test]
    fn sha256_known_value() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
