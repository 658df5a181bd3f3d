//! Prediction and EM/F1 metrics.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataPair;
use crate::query::{Answers, Program};

use super::candidates::{enumerate_candidates, CandidateSet};
use super::features::Featurizer;
use super::link::{link_entities, Question};
use super::ranker::{score, RankerParams};
use super::ModelError;

#[derive(Debug, Clone, PartialEq)]
pub struct Ranked {
    pub program: Program,
    pub answers: Answers,
    pub score: f64,
}

/// Scores every candidate; highest first, ties by canonical text.
pub fn rank(params: &RankerParams, featurizer: &Featurizer<'_>, set: &CandidateSet) -> Vec<Ranked> {
    let mut out: Vec<Ranked> = set
        .candidates
        .iter()
        .map(|c| Ranked {
            program: c.program.clone(),
            answers: c.answers.clone(),
            score: score(params, &featurizer.featurize(&set.question, &c.program)),
        })
        .collect();
    out.sort_by(|a, b| match b.score.total_cmp(&a.score) {
        Ordering::Equal => a.program.canonical().cmp(b.program.canonical()),
        o => o,
    });
    out
}

pub fn predict(
    params: &RankerParams,
    featurizer: &Featurizer<'_>,
    question: &Question,
    cap: usize,
) -> Result<Vec<Ranked>, ModelError> {
    let set = enumerate_candidates(question, featurizer.kb(), cap)?;
    Ok(rank(params, featurizer, &set))
}

/// Set-F1 of two answer lists; two empty lists count as a perfect match.
pub fn set_f1(predicted: &[String], gold: &[String]) -> f64 {
    let p: BTreeSet<&String> = predicted.iter().collect();
    let g: BTreeSet<&String> = gold.iter().collect();
    if p.is_empty() && g.is_empty() {
        return 1.0;
    }
    let hit = p.intersection(&g).count() as f64;
    if hit == 0.0 {
        return 0.0;
    }
    let precision = hit / p.len() as f64;
    let recall = hit / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn answer_strings(answers: &Answers) -> Vec<String> {
    answers.values().iter().map(ToString::to_string).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub em: f64,
    pub f1: f64,
    pub n: usize,
}

impl Metrics {
    /// Averages per-question (em, f1) scores.
    pub fn mean(scores: &[(f64, f64)]) -> Metrics {
        if scores.is_empty() {
            return Metrics::default();
        }
        let n = scores.len() as f64;
        Metrics {
            em: scores.iter().map(|s| s.0).sum::<f64>() / n,
            f1: scores.iter().map(|s| s.1).sum::<f64>() / n,
            n: scores.len(),
        }
    }
}

impl std::fmt::Display for Metrics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "EM {:.3} F1 {:.3}", self.em, self.f1)
    }
}

/// Top-1 prediction for one pair, scored as (em, f1).
pub fn score_pair(params: &RankerParams, featurizer: &Featurizer<'_>, pair: &DataPair, cap: usize) -> (f64, f64) {
    let q = link_entities(&pair.question, featurizer.kb());
    let Ok(ranked) = predict(params, featurizer, &q, cap) else { return (0.0, 0.0) };
    let Some(top) = ranked.first() else { return (0.0, 0.0) };
    let em = match pair.program() {
        Ok(gold) if gold.canonical() == top.program.canonical() => 1.0,
        _ => 0.0,
    };
    (em, set_f1(&answer_strings(&top.answers), &pair.answers))
}

pub fn evaluate(params: &RankerParams, featurizer: &Featurizer<'_>, pairs: &[DataPair], cap: usize) -> Metrics {
    let scores: Vec<(f64, f64)> = pairs.par_iter().map(|p| score_pair(params, featurizer, p, cap)).collect();
    Metrics::mean(&scores)
}
