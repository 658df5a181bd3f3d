//! Teacher-student self-training with execution-guided filtering.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataPair, Source};
use crate::embed::{cosine, EmbedError, Embedder};
use crate::ir::{direct_answer, DirectAnswer, IrConfig};
use crate::kb::{normalize, parse_quoted, KnowledgeBase};
use crate::model::{
    evaluate, link_entities, predict, prepare, train_prepared, Featurizer, Metrics, ModelError, PreparedExample,
    RankerParams, TrainConfig,
};
use crate::verbalize::relation_phrase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Error,
    Semantic,
    Inherent,
    Surface,
}

impl FilterKind {
    pub const ALL: [FilterKind; 4] = [FilterKind::Error, FilterKind::Semantic, FilterKind::Inherent, FilterKind::Surface];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Error => "error",
            FilterKind::Semantic => "semantic",
            FilterKind::Inherent => "inherent",
            FilterKind::Surface => "surface",
        }
    }

    pub fn parse(s: &str) -> Option<FilterKind> {
        FilterKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub semantic_threshold: f64,
    pub enabled: BTreeSet<FilterKind>,
    /// Let every pair through the semantic filter when embedding fails.
    pub skip_semantic_on_error: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { semantic_threshold: 0.2, enabled: FilterKind::ALL.into(), skip_semantic_on_error: false }
    }
}

impl FilterConfig {
    pub fn only(kinds: &[FilterKind]) -> FilterConfig {
        FilterConfig { enabled: kinds.iter().copied().collect(), ..FilterConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpora {
    pub unlabeled: Vec<String>,
    pub seeds: Vec<DataPair>,
    pub synthetic: Vec<DataPair>,
    pub dev: Vec<DataPair>,
    /// Gold canonical programs of unlabeled questions, for error-rate reporting.
    pub oracle: HashMap<String, String>,
}

#[derive(Debug, Error)]
pub enum EgstError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("semantic filter: {0}")]
    Embed(#[from] EmbedError),
    #[error("no synthetic or seed pairs to train on")]
    NoData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub stage: usize,
    pub iteration: usize,
    pub filters: Vec<FilterKind>,
    pub produced: usize,
    pub dropped: usize,
    /// Pairs remaining after each enabled filter, in chain order.
    pub kept: Vec<(FilterKind, usize)>,
    pub dev: Metrics,
    /// Fraction of produced pseudo programs that differ from the oracle.
    pub pseudo_error_rate: Option<f64>,
    /// Same, over the pairs that survived filtering.
    pub kept_error_rate: Option<f64>,
}

/// Top-1 program and its answers for every question that can be parsed.
pub fn pseudo_label(
    teacher: &RankerParams,
    unlabeled: &[String],
    featurizer: &Featurizer<'_>,
    cap: usize,
) -> (Vec<DataPair>, usize) {
    let out: Vec<Option<DataPair>> = unlabeled
        .par_iter()
        .map(|q| {
            let linked = link_entities(q, featurizer.kb());
            let top = predict(teacher, featurizer, &linked, cap).ok()?.into_iter().next()?;
            Some(DataPair::new(q.clone(), &top.program, &top.answers, Source::Pseudo))
        })
        .collect();
    let dropped = out.iter().filter(|p| p.is_none()).count();
    (out.into_iter().flatten().collect(), dropped)
}

/// Keeps pairs whose program executes without error to a non-empty result.
pub fn filter_error(pairs: &[DataPair], kb: &KnowledgeBase) -> Vec<DataPair> {
    pairs
        .iter()
        .filter(|p| p.program().ok().and_then(|prog| prog.execute(kb).ok()).is_some_and(|a| !a.is_empty()))
        .cloned()
        .collect()
}

/// Mean cosine between the question and each verbalized relation.
/// Programs without relations have no score.
pub fn semantic_similarity(pair: &DataPair, embedder: &dyn Embedder) -> Result<Option<f64>, EmbedError> {
    let Ok(program) = pair.program() else { return Ok(None) };
    let rels = program.relations();
    if rels.is_empty() {
        return Ok(None);
    }
    let q = embedder.embed(&pair.question)?;
    let mut total = 0.0;
    for r in &rels {
        total += cosine(&q, &embedder.embed(&relation_phrase(r))?)?;
    }
    Ok(Some(total / rels.len() as f64))
}

pub fn filter_semantic(pairs: &[DataPair], embedder: &dyn Embedder, threshold: f64) -> Result<Vec<DataPair>, EmbedError> {
    let mut out = Vec::new();
    for p in pairs {
        if semantic_similarity(p, embedder)?.is_none_or(|s| s >= threshold) {
            out.push(p.clone());
        }
    }
    Ok(out)
}

/// Display text of a serialized answer: the surface name of an entity,
/// the lexical form of a literal.
pub fn answer_surface(answer: &str, kb: &KnowledgeBase) -> Option<String> {
    if answer.starts_with('"') {
        parse_quoted(answer).map(|(lex, _)| lex)
    } else {
        kb.surface_name(answer).map(str::to_owned)
    }
}

fn contains_phrase(haystack: &str, needle: &str) -> bool {
    !needle.is_empty() && format!(" {haystack} ").contains(&format!(" {needle} "))
}

/// Keeps pairs where some answer's surface appears in the direct response.
/// Pairs without a direct response pass.
pub fn filter_inherent(pairs: &[DataPair], ir: &HashMap<String, DirectAnswer>, kb: &KnowledgeBase) -> Vec<DataPair> {
    pairs
        .iter()
        .filter(|p| match ir.get(&p.question) {
            None => {
                tracing::debug!(question = %p.question, "no direct answer; pair passes");
                true
            }
            Some(d) => {
                let response = normalize(&d.response_text);
                p.answers
                    .iter()
                    .filter_map(|a| answer_surface(a, kb))
                    .any(|s| contains_phrase(&response, &normalize(&s)))
            }
        })
        .cloned()
        .collect()
}

/// Keeps pairs whose entity answers all have surface names.
pub fn filter_surface(pairs: &[DataPair], kb: &KnowledgeBase) -> Vec<DataPair> {
    pairs
        .iter()
        .filter(|p| p.answers.iter().all(|a| a.starts_with('"') || kb.surface_name(a).is_some()))
        .cloned()
        .collect()
}

/// What the filters need besides the pairs themselves.
pub struct FilterContext<'a> {
    pub kb: &'a KnowledgeBase,
    pub embedder: &'a dyn Embedder,
    pub ir: &'a HashMap<String, DirectAnswer>,
}

/// Runs the enabled filters in chain order and stamps `kept_by`.
pub fn apply_filters(
    pairs: &[DataPair],
    config: &FilterConfig,
    ctx: &FilterContext<'_>,
) -> Result<(Vec<DataPair>, Vec<(FilterKind, usize)>), EgstError> {
    let mut current = pairs.to_vec();
    let mut counts = Vec::new();
    for kind in &config.enabled {
        current = match kind {
            FilterKind::Error => filter_error(&current, ctx.kb),
            FilterKind::Semantic => match filter_semantic(&current, ctx.embedder, config.semantic_threshold) {
                Ok(kept) => kept,
                Err(e) if config.skip_semantic_on_error => {
                    tracing::warn!(error = %e, "semantic filter skipped");
                    current
                }
                Err(e) => return Err(e.into()),
            },
            FilterKind::Inherent => filter_inherent(&current, ctx.ir, ctx.kb),
            FilterKind::Surface => filter_surface(&current, ctx.kb),
        };
        counts.push((*kind, current.len()));
    }
    let trace: Vec<String> = config.enabled.iter().map(|k| k.name().to_owned()).collect();
    for p in &mut current {
        p.kept_by = Some(trace.clone());
    }
    Ok((current, counts))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopConfig {
    pub max_iters: usize,
    pub min_f1_gain: f64,
}

impl Default for StopConfig {
    fn default() -> Self {
        StopConfig { max_iters: 8, min_f1_gain: 0.002 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgstConfig {
    pub train: TrainConfig,
    pub stop: StopConfig,
    pub candidate_cap: usize,
    pub pseudo_weight: f64,
}

impl Default for EgstConfig {
    fn default() -> Self {
        EgstConfig {
            train: TrainConfig::default(),
            stop: StopConfig::default(),
            candidate_cap: crate::model::DEFAULT_CAP,
            pseudo_weight: 1.0,
        }
    }
}

/// The staged schedule: error filtering, then semantic, then surface.
pub fn pegst_schedule(stages: Option<Vec<BTreeSet<FilterKind>>>) -> Vec<FilterConfig> {
    let stages = stages.unwrap_or_else(|| {
        vec![[FilterKind::Error].into(), [FilterKind::Semantic].into(), [FilterKind::Surface].into()]
    });
    stages.into_iter().map(|enabled| FilterConfig { enabled, ..FilterConfig::default() }).collect()
}

fn error_rate(pairs: &[DataPair], oracle: &HashMap<String, String>) -> Option<f64> {
    let judged: Vec<bool> = pairs.iter().filter_map(|p| oracle.get(&p.question).map(|g| *g != p.program_text)).collect();
    if judged.is_empty() {
        return None;
    }
    Some(judged.iter().filter(|w| **w).count() as f64 / judged.len() as f64)
}

/// Direct responses for every unlabeled question; failures are logged and skipped.
pub fn collect_direct_answers(
    questions: &[String],
    ir: &IrConfig<'_>,
    kb: &KnowledgeBase,
) -> HashMap<String, DirectAnswer> {
    questions
        .par_iter()
        .filter_map(|q| match direct_answer(q, ir, kb) {
            Ok(d) => Some((q.clone(), d)),
            Err(e) => {
                tracing::warn!(question = %q, error = %e, "direct answer unavailable");
                None
            }
        })
        .collect()
}

pub struct SelfTrainOutput {
    pub params: RankerParams,
    pub reports: Vec<IterationReport>,
    /// Filtered pseudo pairs of the final iteration.
    pub pseudo: Vec<DataPair>,
}

/// Runs one self-training loop per stage; each stage starts from the previous
/// stage's final teacher. A single stage is the plain loop.
pub fn self_train_staged(
    corpora: &Corpora,
    featurizer: &Featurizer<'_>,
    embedder: &dyn Embedder,
    ir: &HashMap<String, DirectAnswer>,
    stages: &[FilterConfig],
    config: &EgstConfig,
) -> Result<SelfTrainOutput, EgstError> {
    let kb = featurizer.kb();
    let base_pairs: Vec<DataPair> = corpora.synthetic.iter().chain(&corpora.seeds).cloned().collect();
    if base_pairs.is_empty() {
        return Err(EgstError::NoData);
    }
    let base = prepare(&base_pairs, featurizer, &config.train, 1.0);
    let init = RankerParams::zeros();
    let (mut teacher, _) = train_prepared(&base, &config.train, &init)?;
    let mut dev = evaluate(&teacher, featurizer, &corpora.dev, config.candidate_cap);
    tracing::info!(em = dev.em, f1 = dev.f1, "initial teacher");
    let mut reports = vec![IterationReport {
        stage: 0,
        iteration: 0,
        filters: Vec::new(),
        produced: 0,
        dropped: 0,
        kept: Vec::new(),
        dev,
        pseudo_error_rate: None,
        kept_error_rate: None,
    }];
    let ctx = FilterContext { kb, embedder, ir };
    let mut last_kept = Vec::new();
    let mut iteration = 0;
    for (stage, filters) in stages.iter().enumerate() {
        for _ in 0..config.stop.max_iters {
            iteration += 1;
            let (pseudo, dropped) = pseudo_label(&teacher, &corpora.unlabeled, featurizer, config.candidate_cap);
            let (kept, counts) = apply_filters(&pseudo, filters, &ctx)?;
            let extra: Vec<PreparedExample> = prepare(&kept, featurizer, &config.train, config.pseudo_weight);
            let mut data = base.clone();
            data.extend(extra);
            let (student, _) = train_prepared(&data, &config.train, &init)?;
            let student_dev = evaluate(&student, featurizer, &corpora.dev, config.candidate_cap);
            let report = IterationReport {
                stage,
                iteration,
                filters: filters.enabled.iter().copied().collect(),
                produced: pseudo.len(),
                dropped,
                kept: counts,
                dev: student_dev,
                pseudo_error_rate: error_rate(&pseudo, &corpora.oracle),
                kept_error_rate: error_rate(&kept, &corpora.oracle),
            };
            tracing::info!(stage, iteration, produced = report.produced, kept = kept.len(), f1 = student_dev.f1, "self-training iteration");
            reports.push(report);
            let gain = student_dev.f1 - dev.f1;
            teacher = student;
            dev = student_dev;
            last_kept = kept;
            if gain < config.stop.min_f1_gain {
                break;
            }
        }
    }
    Ok(SelfTrainOutput { params: teacher, reports, pseudo: last_kept })
}

pub fn self_train(
    corpora: &Corpora,
    featurizer: &Featurizer<'_>,
    embedder: &dyn Embedder,
    ir: &HashMap<String, DirectAnswer>,
    filters: &FilterConfig,
    config: &EgstConfig,
) -> Result<SelfTrainOutput, EgstError> {
    self_train_staged(corpora, featurizer, embedder, ir, std::slice::from_ref(filters), config)
}
