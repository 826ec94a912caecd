//! The training loop over a logits dataset or plain corpus.
//!
//! Every mode runs the same schedule (seeded shuffle, fixed-order batch
//! reduction, one optimizer step per batch) and differs only in how the
//! per-position targets are built:
//!
//! - `sft` / `seqkd`: one-hot ground truth (the corpus carries the labels).
//! - `sd`: the densified top-K teacher distribution, renormalized to sum 1.
//! - `lft`: the combined teacher + ground-truth target.
//!
//! Training is a deterministic function of (initial model, data, config).

use crate::data::{materialize_targets, CorpusPair, LogitsDataset};
use crate::distrib::{one_hot, sequence_discrepancy, softmax_tau, TokenProbDist};
use crate::error::{Error, Result};
use crate::model::{LossMode, StudentModel, TrainExample};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    /// θ ← θ − η·g
    PlainDescent,
    /// Adam with β₁ = 0.9, β₂ = 0.999, ε = 1e-8 and bias correction.
    AdaptiveMoment,
}

impl OptimizerKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plain-descent" | "sgd" => Ok(OptimizerKind::PlainDescent),
            "adaptive-moment" | "adam" => Ok(OptimizerKind::AdaptiveMoment),
            other => Err(Error::config(format!(
                "unknown optimizer `{other}` (expected plain-descent or adaptive-moment)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: LossMode,
    pub eta: f64,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub epochs: usize,
    pub data_fraction: f64,
    pub seed: u64,
    /// Evaluate (and checkpoint) every this many steps; 0 = only at the end.
    pub eval_every: usize,
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: LossMode::Sft,
            eta: 1e-3,
            optimizer: OptimizerKind::AdaptiveMoment,
            batch_size: 16,
            epochs: 10,
            data_fraction: 1.0,
            seed: 0,
            eval_every: 0,
            checkpoint_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::config(format!("eta must be > 0, got {}", self.eta)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::config("batch_size and epochs must be >= 1"));
        }
        if !(self.data_fraction > 0.0 && self.data_fraction <= 1.0) {
            return Err(Error::config(format!(
                "data_fraction must be in (0, 1], got {}",
                self.data_fraction
            )));
        }
        Ok(())
    }
}

/// Per-step losses and periodic held-out accuracies.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub steps: Vec<(u64, f64)>,
    pub evals: Vec<(u64, f64)>,
}

impl TrainHistory {
    /// Render as `step,loss,eval_acc` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss,eval_acc\n");
        let mut evals = self.evals.iter().peekable();
        for &(step, loss) in &self.steps {
            let acc = match evals.peek() {
                Some(&&(estep, acc)) if estep == step => {
                    evals.next();
                    format!("{acc}")
                }
                _ => String::new(),
            };
            out.push_str(&format!("{step},{loss},{acc}\n"));
        }
        // Evals recorded after the last step (the final evaluation).
        for &(step, acc) in evals {
            out.push_str(&format!("{step},,{acc}\n"));
        }
        out
    }
}

/// What the trainer consumes.
#[derive(Debug, Clone, Copy)]
pub enum TrainData<'a> {
    Corpus(&'a [CorpusPair]),
    Logits(&'a LogitsDataset),
}

/// Seeded shuffle, then the first ⌈fraction·N⌉ items (restored to their
/// original relative order). Prefixes of the same seed nest:
/// subset(0.25) ⊆ subset(0.5) ⊆ subset(1.0).
pub fn fraction_subset<T: Clone>(items: &[T], fraction: f64, seed: u64) -> Result<Vec<T>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::config(format!(
            "fraction must be in (0, 1], got {fraction}"
        )));
    }
    if items.is_empty() {
        return Err(Error::config("cannot subset an empty collection"));
    }
    let take = ((fraction * items.len() as f64).ceil() as usize)
        .max(1)
        .min(items.len());
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut chosen = order[..take].to_vec();
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| items[i].clone()).collect())
}

/// Build per-mode training examples from a corpus.
pub fn examples_from_corpus(pairs: &[CorpusPair], mode: LossMode) -> Result<Vec<TrainExample>> {
    if mode.needs_distributions() {
        return Err(Error::config(format!(
            "mode {mode} needs teacher targets; train it from a logits dataset"
        )));
    }
    Ok(pairs
        .iter()
        .map(|p| TrainExample {
            prompt: p.prompt.clone(),
            response: p.response.clone(),
            targets: None,
        })
        .collect())
}

/// Build per-mode training examples from a logits dataset.
pub fn examples_from_dataset(ds: &LogitsDataset, mode: LossMode) -> Result<Vec<TrainExample>> {
    ds.records
        .iter()
        .enumerate()
        .map(|(ri, rec)| {
            let targets = match mode {
                LossMode::Sft | LossMode::SeqKd => None,
                LossMode::Lft => Some(materialize_targets(rec)?),
                LossMode::Sd => {
                    let mut targets = Vec::with_capacity(rec.response.len());
                    for (pi, sparse) in rec.teacher.iter().enumerate() {
                        let mut dense = vec![0.0f64; ds.vocab_size];
                        let mut sum = 0.0;
                        for &(id, p) in sparse.entries() {
                            dense[id as usize] = p;
                            sum += p;
                        }
                        if sum <= 0.0 {
                            return Err(Error::config(format!(
                                "record {ri} position {pi}: sd needs non-empty teacher entries"
                            )));
                        }
                        for v in &mut dense {
                            *v /= sum;
                        }
                        targets.push(TokenProbDist::new(dense)?);
                    }
                    Some(targets)
                }
            };
            Ok(TrainExample {
                prompt: rec.prompt.clone(),
                response: rec.response.clone(),
                targets,
            })
        })
        .collect()
}

fn build_examples(data: TrainData<'_>, mode: LossMode) -> Result<Vec<TrainExample>> {
    match data {
        TrainData::Corpus(pairs) => examples_from_corpus(pairs, mode),
        TrainData::Logits(ds) => examples_from_dataset(ds, mode),
    }
}

/// Gradient-free loss for reporting: forwards through the model, then goes
/// through the distribution kernels (temperature softmax + KL), a separate
/// arithmetic route from the gradient path.
pub fn loss_for_batch(
    student: &StudentModel,
    batch: &[TrainExample],
    mode: LossMode,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid_input("empty batch"));
    }
    let v = student.config().vocab_size;
    let mut acc = 0.0;
    for ex in batch {
        let full: Vec<u32> = ex.prompt.iter().chain(&ex.response).copied().collect();
        let rows = student.forward_logits(&full)?;
        let mut students = Vec::with_capacity(ex.response.len());
        let mut targets = Vec::with_capacity(ex.response.len());
        for (n, &gt) in ex.response.iter().enumerate() {
            students.push(softmax_tau(&rows[ex.prompt.len() - 1 + n], 1.0)?);
            targets.push(match (&ex.targets, mode.needs_distributions()) {
                (Some(t), true) => t[n].clone(),
                (None, false) => one_hot(gt as usize, v)?,
                _ => {
                    return Err(Error::invalid_input(format!(
                        "mode {mode} does not match the batch targets"
                    )))
                }
            });
        }
        acc += sequence_discrepancy(&targets, &students)?;
    }
    Ok(acc / batch.len() as f64)
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, model: &mut StudentModel, grads: &[f64], eta: f64) -> Result<()> {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NumericFailure("non-finite gradient".into()));
        }
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t as i32);
        let c2 = 1.0 - B2.powi(self.t as i32);
        let params = model.params_mut();
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grads[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grads[i] * grads[i];
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= eta * mhat / (vhat.sqrt() + EPS);
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NumericFailure(
                "parameters overflowed during the update".into(),
            ));
        }
        Ok(())
    }
}

/// Train a student to completion. Deterministic given the seed; on a
/// non-finite loss the run aborts with a numeric-failure error and the last
/// written checkpoint is left in place.
pub fn train(
    student: StudentModel,
    data: TrainData<'_>,
    cfg: &TrainConfig,
    eval_fn: Option<&(dyn Fn(&StudentModel) -> f64 + Sync)>,
) -> Result<(StudentModel, TrainHistory)> {
    cfg.validate()?;
    let examples = build_examples(data, cfg.mode)?;
    if examples.is_empty() {
        return Err(Error::config("no training examples"));
    }
    let examples = fraction_subset(&examples, cfg.data_fraction, cfg.seed)?;

    let mut model = student;
    let mut history = TrainHistory::default();
    let mut adam = match cfg.optimizer {
        OptimizerKind::AdaptiveMoment => Some(AdamState::new(model.param_count())),
        OptimizerKind::PlainDescent => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut step: u64 = 0;

    for _epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TrainExample> = chunk.iter().map(|&i| &examples[i]).collect();
            let mode = cfg.mode;
            let results: Vec<_> = batch
                .par_iter()
                .map(|ex| model.loss_and_grads(&ex.prompt, &ex.response, ex.targets.as_deref(), mode))
                .collect();
            // Fixed reduction order keeps runs bit-reproducible regardless
            // of worker scheduling.
            let inv = 1.0 / batch.len() as f64;
            let mut grads = vec![0.0f64; model.param_count()];
            let mut loss = 0.0;
            for r in results {
                let r = r?;
                loss += r.loss * inv;
                for (g, rg) in grads.iter_mut().zip(&r.grads) {
                    *g += rg * inv;
                }
            }
            if !loss.is_finite() {
                return Err(Error::NumericFailure(format!(
                    "loss diverged to {loss} at step {step}"
                )));
            }
            match adam.as_mut() {
                Some(state) => state.step(&mut model, &grads, cfg.eta)?,
                None => model.apply_update(&grads, cfg.eta)?,
            }
            step += 1;
            history.steps.push((step, loss));
            if cfg.eval_every > 0 && step.is_multiple_of(cfg.eval_every as u64) {
                if let Some(f) = eval_fn {
                    history.evals.push((step, f(&model)));
                }
                if let Some(path) = &cfg.checkpoint_path {
                    model.save(path)?;
                }
            }
        }
    }
    if let Some(f) = eval_fn {
        if history.evals.last().map(|&(s, _)| s) != Some(step) {
            history.evals.push((step, f(&model)));
        }
    }
    if let Some(path) = &cfg.checkpoint_path {
        model.save(path)?;
    }
    Ok((model, history))
}
