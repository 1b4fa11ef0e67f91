//! Shared margin-ranking training loop.
//!
//! Each step samples, for every training query, up to `positives` relevant
//! and `negatives` non-relevant corpus graphs; the model builds one tape per
//! query, the per-query gradients are summed in query order and Adam takes a
//! step on the mean. The dev loss on a fixed sample is checked every
//! `validate_every` steps; training stops after `patience` checks without an
//! improvement larger than `tolerance` and the best parameters are returned.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::diff::{Adam, Parameterized, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::Dataset;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub margin: f64,
    pub positives: usize,
    pub negatives: usize,
    /// Pairs per step; queries are drawn until the budget is filled.
    pub batch_pairs: usize,
    pub max_steps: usize,
    pub validate_every: usize,
    pub patience: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            margin: 1.0,
            positives: 5,
            negatives: 20,
            batch_pairs: 3000,
            max_steps: 300,
            validate_every: 30,
            patience: 30,
            tolerance: 5e-3,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub steps: usize,
    pub initial_dev_loss: f64,
    pub best_dev_loss: f64,
    pub train_losses: Vec<f64>,
    pub dev_losses: Vec<f64>,
    /// Queries skipped because they lack positives or negatives.
    pub skipped_queries: usize,
}

/// One query's positives and negatives for a step.
#[derive(Debug, Clone)]
pub struct QueryBatch {
    pub query: u32,
    pub positives: Vec<u32>,
    pub negatives: Vec<u32>,
}

impl QueryBatch {
    pub fn pairs(&self) -> usize {
        self.positives.len() * self.negatives.len()
    }
}

pub trait RankingModel: Parameterized + Clone + Sync {
    /// Sum over `positives x negatives` of the hinge term for one query,
    /// recorded on `tape` with this model's parameters registered in
    /// [`Parameterized::params`] order.
    fn query_loss<'t>(&self, tape: &'t Tape, dataset: &Dataset, batch: &QueryBatch, margin: f64) -> Result<Var<'t>>;
}

/// `sum over (p, n) of [pos[p] - neg[n] + margin]+` for scalar variables; with
/// distances as inputs this pushes positives below negatives.
pub fn pairwise_hinge<'t>(pos: &[Var<'t>], neg: &[Var<'t>], margin: f64) -> Result<Var<'t>> {
    let mut total: Option<Var<'t>> = None;
    for &p in pos {
        for &n in neg {
            let term = p.sub(n)?.shift(margin).hinge();
            total = Some(match total {
                Some(t) => t.add(term)?,
                None => term,
            });
        }
    }
    total.ok_or(Error::EmptyNodeSet("pairwise hinge"))
}

pub fn sample_batch(
    dataset: &Dataset,
    query: u32,
    positives: usize,
    negatives: usize,
    rng: &mut ChaCha8Rng,
) -> Option<QueryBatch> {
    let pos: Vec<u32> = dataset.relevant(query).choose_multiple(rng, positives).copied().collect();
    let neg: Vec<u32> = dataset
        .non_relevant(query)
        .choose_multiple(rng, negatives)
        .copied()
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    Some(QueryBatch {
        query,
        positives: pos,
        negatives: neg,
    })
}

fn batch_loss<M: RankingModel>(model: &M, dataset: &Dataset, batches: &[QueryBatch], margin: f64) -> Result<f64> {
    let pairs: usize = batches.iter().map(QueryBatch::pairs).sum();
    let losses: Vec<f64> = batches
        .par_iter()
        .map(|b| {
            let tape = Tape::new();
            Ok(model.query_loss(&tape, dataset, b, margin)?.item())
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / pairs.max(1) as f64)
}

/// Mean hinge loss and summed gradients over `batches`.
pub fn loss_and_grads<M: RankingModel>(
    model: &M,
    dataset: &Dataset,
    batches: &[QueryBatch], margin: f64) -> Result<(f64, Vec<Tensor>)> {
    let pairs = batches.iter().map(QueryBatch::pairs).sum::<usize>().max(1) as f64;
    let n_params = model.params().len();
    let per_query: Vec<(f64, Vec<Tensor>)> = batches
        .par_iter()
        .map(|b| {
            let tape = Tape::new();
            let loss = model.query_loss(&tape, dataset, b, margin)?;
            let grads = tape.backward(loss)?.params();
            if grads.len() != n_params {
                return Err(Error::Config(format!(
                    "query loss registered {} parameter leaves, model has {n_params}",
                    grads.len()
                )));
            }
            Ok((loss.item(), grads))
        })
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    let mut grads: Vec<Tensor> = model.params().iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect();
    for (loss, g) in per_query {
        total += loss;
        for (acc, gi) in grads.iter_mut().zip(&g) {
            acc.add_assign(gi);
        }
    }
    for g in &mut grads {
        g.data_mut().iter_mut().for_each(|v| *v /= pairs);
    }
    Ok((total / pairs, grads))
}

pub fn train_ranking<M: RankingModel>(mut model: M, dataset: &Dataset, config: &TrainConfig) -> Result<(M, TrainReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = TrainReport::default();

    let train_ids: Vec<u32> = dataset
        .split
        .train
        .iter()
        .copied()
        .filter(|&q| {
            let ok = !dataset.relevant(q).is_empty() && dataset.relevant(q).len() < dataset.corpus.len();
            if !ok {
                report.skipped_queries += 1;
            }
            ok
        })
        .collect();
    if report.skipped_queries > 0 {
        log::warn!("skipping {} training queries without both positives and negatives", report.skipped_queries);
    }
    let dev_ids = if dataset.split.dev.is_empty() {
        &dataset.split.train
    } else {
        &dataset.split.dev
    };
    let dev: Vec<QueryBatch> = dev_ids
        .iter()
        .filter_map(|&q| sample_batch(dataset, q, config.positives, config.negatives, &mut rng))
        .collect();

    let mut best = model.clone();
    report.initial_dev_loss = batch_loss(&model, dataset, &dev, config.margin)?;
    report.best_dev_loss = report.initial_dev_loss;
    report.dev_losses.push(report.initial_dev_loss);
    if train_ids.is_empty() {
        return Ok((model, report));
    }

    let per_query = (config.positives * config.negatives).max(1);
    let queries_per_step = (config.batch_pairs / per_query).clamp(1, train_ids.len());
    let mut adam = Adam::new(config.lr);
    let mut order = train_ids.clone();
    let mut cursor = order.len();
    let mut stale = 0;

    for step in 1..=config.max_steps {
        let mut batches = Vec::with_capacity(queries_per_step);
        while batches.len() < queries_per_step {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let q = order[cursor];
            cursor += 1;
            if let Some(b) = sample_batch(dataset, q, config.positives, config.negatives, &mut rng) {
                batches.push(b);
            }
        }
        let (loss, grads) = loss_and_grads(&model, dataset, &batches, config.margin)?;
        // Refuse to step into NaN parameters; relu would hide them as zeros.
        if !loss.is_finite() {
            return Err(Error::NonFinite((1, 1)));
        }
        if let Some(g) = grads.iter().find(|g| g.data().iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite(g.shape()));
        }
        adam.step(model.params_mut(), &grads);
        report.train_losses.push(loss);
        report.steps = step;

        if step % config.validate_every.max(1) == 0 || step == config.max_steps {
            let dev_loss = batch_loss(&model, dataset, &dev, config.margin)?;
            report.dev_losses.push(dev_loss);
            log::debug!("step {step}: train {loss:.5} dev {dev_loss:.5}");
            if dev_loss < report.best_dev_loss - config.tolerance {
                report.best_dev_loss = dev_loss;
                best = model.clone();
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        }
    }
    Ok((best, report))
}
