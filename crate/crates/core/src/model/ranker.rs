//! Linear scorer, listwise softmax loss and the SGD trainer.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataPair;
use crate::sampler::derived_seed;

use super::candidates::{enumerate_candidates, CandidateSet};
use super::features::{FeatureVector, Featurizer};
use super::link::{link_entities, Question};
use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainState {
    pub seed: u64,
    pub steps: u64,
    /// Learning rate in effect at the end of training.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankerParams {
    pub weights: BTreeMap<String, f64>,
    pub train_state: TrainState,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    dim_note: String,
    features: BTreeMap<String, f64>,
    train_state: TrainState,
}

impl RankerParams {
    pub fn zeros() -> RankerParams {
        RankerParams::default()
    }

    pub fn to_json(&self) -> String {
        let ck = Checkpoint {
            dim_note: format!("sparse linear ranker, {} nonzero features", self.weights.len()),
            features: self.weights.clone(),
            train_state: self.train_state,
        };
        let mut s = serde_json::to_string_pretty(&ck).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<RankerParams, serde_json::Error> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        Ok(RankerParams { weights: ck.features, train_state: ck.train_state })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        fs::write(path, self.to_json())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RankerParams, ModelError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
        RankerParams::from_json(&text).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn scaled(&self, factor: f64) -> RankerParams {
        RankerParams {
            weights: self.weights.iter().map(|(k, v)| (k.clone(), v * factor)).collect(),
            train_state: self.train_state,
        }
    }
}

pub fn score(params: &RankerParams, fv: &FeatureVector) -> f64 {
    fv.iter().map(|(k, v)| params.weights.get(k).map_or(0.0, |w| w * v)).sum()
}

/// Softmax with max-shift.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// `-log softmax(gold)` over `gold` and `negatives`, plus its gradient
/// with respect to the weights.
pub fn loss_and_gradient(params: &RankerParams, gold: &FeatureVector, negatives: &[FeatureVector]) -> (f64, FeatureVector) {
    let rows: Vec<&FeatureVector> = std::iter::once(gold).chain(negatives).collect();
    let scores: Vec<f64> = rows.iter().map(|fv| score(params, fv)).collect();
    let loss = loss_from_scores(&scores, 0);
    let probs = softmax(&scores);
    let mut grad = FeatureVector::new();
    for (j, fv) in rows.iter().enumerate() {
        let coef = probs[j] - if j == 0 { 1.0 } else { 0.0 };
        for (k, v) in fv.iter() {
            *grad.entry(k.clone()).or_insert(0.0) += coef * v;
        }
    }
    (loss, grad)
}

pub fn loss_from_scores(scores: &[f64], gold: usize) -> f64 {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
    m + z.ln() - scores[gold]
}

/// Loss of `gold` against every candidate in `candidates`; gold is added if missing.
pub fn ranker_loss(
    params: &RankerParams,
    featurizer: &Featurizer<'_>,
    question: &Question,
    gold: &crate::query::Program,
    candidates: &CandidateSet,
) -> f64 {
    let gold_fv = featurizer.featurize(question, gold);
    let negatives: Vec<FeatureVector> = candidates
        .candidates
        .iter()
        .filter(|c| c.program.canonical() != gold.canonical())
        .map(|c| featurizer.featurize(question, &c.program))
        .collect();
    loss_and_gradient(params, &gold_fv, &negatives).0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Per-epoch decay: epoch `t` uses `lr / (1 + lr_decay * t)`.
    pub lr_decay: f64,
    pub neg_cap: usize,
    pub candidate_cap: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            lr: 0.2,
            lr_decay: 0.5,
            neg_cap: 64,
            candidate_cap: super::candidates::DEFAULT_CAP,
            rng_seed: 0,
        }
    }
}

/// A training pair with its features computed; row 0 is the gold program.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedExample {
    pub rows: Vec<FeatureVector>,
    pub weight: f64,
}

/// Links, enumerates and featurizes each pair. Pairs whose question links to
/// nothing or whose program does not parse are skipped.
pub fn prepare(pairs: &[DataPair], featurizer: &Featurizer<'_>, config: &TrainConfig, weight: f64) -> Vec<PreparedExample> {
    let kb = featurizer.kb();
    let out: Vec<Option<PreparedExample>> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, pair)| {
            let gold = pair.program().ok()?;
            let question = link_entities(&pair.question, kb);
            let set = enumerate_candidates(&question, kb, config.candidate_cap).ok()?;
            let mut negatives: Vec<&crate::query::Program> = set
                .candidates
                .iter()
                .map(|c| &c.program)
                .filter(|p| p.canonical() != gold.canonical())
                .collect();
            if negatives.len() > config.neg_cap {
                let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(config.rng_seed, i));
                negatives = negatives.choose_multiple(&mut rng, config.neg_cap).copied().collect();
                negatives.sort_by(|a, b| a.canonical().cmp(b.canonical()));
            }
            let mut rows = vec![featurizer.featurize(&question, &gold)];
            rows.extend(negatives.iter().map(|p| featurizer.featurize(&question, p)));
            Some(PreparedExample { rows, weight })
        })
        .collect();
    let skipped = out.iter().filter(|e| e.is_none()).count();
    if skipped > 0 {
        tracing::info!(skipped, total = pairs.len(), "training pairs without candidates skipped");
    }
    out.into_iter().flatten().collect()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TrainReport {
    pub examples: usize,
    pub initial_loss: f64,
    /// Mean training loss after each epoch.
    pub epoch_losses: Vec<f64>,
}

struct Dense {
    rows: Vec<Vec<(u32, f64)>>,
    weight: f64,
}

fn dense_scores(w: &[f64], ex: &Dense) -> Vec<f64> {
    ex.rows.iter().map(|r| r.iter().map(|&(f, v)| w[f as usize] * v).sum()).collect()
}

fn mean_loss(w: &[f64], data: &[Dense]) -> f64 {
    let total: f64 = data.iter().map(|ex| ex.weight * loss_from_scores(&dense_scores(w, ex), 0)).sum();
    let mass: f64 = data.iter().map(|ex| ex.weight).sum();
    total / mass
}

/// SGD on prepared examples. An epoch that raises the mean loss is undone
/// and the learning rate halved.
pub fn train_prepared(
    examples: &[PreparedExample],
    config: &TrainConfig,
    init: &RankerParams,
) -> Result<(RankerParams, TrainReport), ModelError> {
    if examples.is_empty() {
        return Err(ModelError::NoTrainableExamples);
    }
    let mut index: HashMap<&str, u32> = HashMap::new();
    let mut vocab: Vec<&str> = Vec::new();
    let data: Vec<Dense> = examples
        .iter()
        .map(|ex| Dense {
            rows: ex
                .rows
                .iter()
                .map(|fv| {
                    fv.iter()
                        .map(|(k, v)| {
                            let id = *index.entry(k.as_str()).or_insert_with(|| {
                                vocab.push(k.as_str());
                                (vocab.len() - 1) as u32
                            });
                            (id, *v)
                        })
                        .collect()
                })
                .collect(),
            weight: ex.weight,
        })
        .collect();
    let mut w: Vec<f64> = vocab.iter().map(|k| init.weights.get(*k).copied().unwrap_or(0.0)).collect();
    let initial_loss = mean_loss(&w, &data);
    let mut report = TrainReport { examples: examples.len(), initial_loss, epoch_losses: Vec::new() };
    if config.epochs == 0 {
        return Ok((init.clone(), report));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut base_lr = config.lr;
    let mut steps = init.train_state.steps;
    let mut prev = initial_loss;
    let mut lr = base_lr;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        lr = base_lr / (1.0 + config.lr_decay * epoch as f64);
        let snapshot = w.clone();
        for &i in &order {
            let ex = &data[i];
            let probs = softmax(&dense_scores(&w, ex));
            for (j, row) in ex.rows.iter().enumerate() {
                let coef = probs[j] - if j == 0 { 1.0 } else { 0.0 };
                if coef == 0.0 {
                    continue;
                }
                for &(f, v) in row {
                    w[f as usize] -= lr * ex.weight * coef * v;
                }
            }
            steps += 1;
        }
        let loss = mean_loss(&w, &data);
        if loss > prev {
            tracing::debug!(epoch, loss, prev, "epoch rejected, halving learning rate");
            w = snapshot;
            base_lr *= 0.5;
        } else {
            prev = loss;
        }
        tracing::debug!(epoch, loss = prev, "epoch done");
        report.epoch_losses.push(prev);
    }

    let mut weights = init.weights.clone();
    for (k, v) in vocab.iter().zip(&w) {
        if *v != 0.0 {
            weights.insert((*k).to_owned(), *v);
        } else {
            weights.remove(*k);
        }
    }
    let params = RankerParams { weights, train_state: TrainState { seed: config.rng_seed, steps, lr } };
    Ok((params, report))
}

pub fn train(
    pairs: &[DataPair],
    featurizer: &Featurizer<'_>,
    config: &TrainConfig,
    init: &RankerParams,
) -> Result<(RankerParams, TrainReport), ModelError> {
    train_prepared(&prepare(pairs, featurizer, config, 1.0), config, init)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(pairs: &[(&str, f64)]) -> FeatureVector {
        pairs.iter().map(|(k, v)| ((*k).to_owned(), *v)).collect()
    }

    #[test]
    fn score_basics() {
        let x = fv(&[("a", 2.0), ("b", -1.5)]);
        assert_eq!(score(&RankerParams::zeros(), &x), 0.0);
        let one_hot = RankerParams { weights: fv(&[("b", 1.0)]), ..Default::default() };
        assert_eq!(score(&one_hot, &x), -1.5);
    }

    #[test]
    fn loss_special_cases() {
        let p = RankerParams { weights: fv(&[("a", 0.7)]), ..Default::default() };
        let g = fv(&[("a", 3.0)]);
        assert_eq!(loss_and_gradient(&p, &g, &[]).0, 0.0);
        let (l, _) = loss_and_gradient(&p, &g, std::slice::from_ref(&g));
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let big = RankerParams { weights: fv(&[("a", 1e4)]), ..Default::default() };
        let (l, grad) = loss_and_gradient(&big, &fv(&[("a", 1.0)]), &[fv(&[("a", 0.0)])]);
        assert!(l.is_finite() && l < 1e-300);
        assert!(grad["a"].abs() < 1e-300);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let p = RankerParams {
            weights: fv(&[("lex:a|b", 0.1 + 0.2), ("bias", -1e-17)]),
            train_state: TrainState { seed: 7, steps: 12, lr: 0.05 },
        };
        let text = p.to_json();
        assert!(text.contains("\"dim_note\""));
        assert!(text.find("\"bias\"").unwrap() < text.find("\"lex:a|b\"").unwrap());
        let back = RankerParams::from_json(&text).unwrap();
        assert_eq!(back, p);
        let x = fv(&[("lex:a|b", 1.3), ("bias", 1.0)]);
        assert_eq!(score(&back, &x).to_bits(), score(&p, &x).to_bits());
    }

    fn toy() -> Vec<PreparedExample> {
        (0..20)
            .map(|i| {
                let k = format!("f{}", i % 3);
                PreparedExample {
                    rows: vec![fv(&[(&k, 1.0), ("bias", 1.0)]), fv(&[("g", 1.0), ("bias", 1.0)]), fv(&[("h", 0.5)])],
                    weight: 1.0,
                }
            })
            .collect()
    }

    #[test]
    fn training_decreases_loss() {
        let cfg = TrainConfig { epochs: 5, ..Default::default() };
        let (p, r) = train_prepared(&toy(), &cfg, &RankerParams::zeros()).unwrap();
        assert!(r.epoch_losses[0] < r.initial_loss);
        assert!(r.epoch_losses.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(p.train_state.steps, 100);
        let (p2, _) = train_prepared(&toy(), &cfg, &RankerParams::zeros()).unwrap();
        assert_eq!(p.to_json(), p2.to_json());
    }

    #[test]
    fn zero_epochs_and_empty() {
        let init = RankerParams { weights: fv(&[("x", 1.0)]), ..Default::default() };
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        assert_eq!(train_prepared(&toy(), &cfg, &init).unwrap().0, init);
        assert!(matches!(train_prepared(&[], &cfg, &init), Err(ModelError::NoTrainableExamples)));
    }
}
