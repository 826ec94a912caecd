//! The four training losses, their gradients, and the finite-difference
//! gradient checker.
//!
//! Every mode reduces to one rule per response position: the logit gradient
//! is `(softmax − target) / L_y`, where the target is a one-hot vector for
//! the likelihood modes and a full distribution for the divergence modes.
//! Prompt positions are masked out of the loss entirely.

use super::{forward, StudentModel};
use crate::distrib::TokenProbDist;
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Which objective drives the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossMode {
    /// Negative log-likelihood on ground-truth sequences.
    Sft,
    /// Negative log-likelihood on teacher-generated sequences.
    SeqKd,
    /// KL against the renormalized sparse teacher distribution.
    Sd,
    /// KL against the combined teacher + ground-truth target.
    Lft,
}

impl LossMode {
    pub fn needs_distributions(self) -> bool {
        matches!(self, LossMode::Sd | LossMode::Lft)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LossMode::Sft => "sft",
            LossMode::SeqKd => "seqkd",
            LossMode::Sd => "sd",
            LossMode::Lft => "lft",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sft" => Ok(LossMode::Sft),
            "seqkd" => Ok(LossMode::SeqKd),
            "sd" => Ok(LossMode::Sd),
            "lft" => Ok(LossMode::Lft),
            other => Err(Error::config(format!(
                "unknown loss mode `{other}` (expected sft, seqkd, sd, lft)"
            ))),
        }
    }
}

impl std::fmt::Display for LossMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Loss value plus the gradient of every parameter.
#[derive(Debug, Clone)]
pub struct GradResult {
    pub loss: f64,
    pub grads: Vec<f64>,
}

/// One training example: a prompt, a response, and (for the divergence
/// modes) one target distribution per response position.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub prompt: Vec<u32>,
    pub response: Vec<u32>,
    pub targets: Option<Vec<TokenProbDist>>,
}

impl StudentModel {
    /// Loss and parameter gradients for a single example.
    ///
    /// `Sft`/`SeqKd` take `targets = None` (the response ids are the target);
    /// `Sd`/`Lft` require one distribution per response position.
    pub fn loss_and_grads(
        &self,
        prompt: &[u32],
        response: &[u32],
        targets: Option<&[TokenProbDist]>,
        mode: LossMode,
    ) -> Result<GradResult> {
        let (tape, loss, dlogits) = self.loss_forward(prompt, response, targets, mode)?;
        let mut grads = vec![0.0f64; self.param_count()];
        forward::backward(self, &tape, &dlogits, &mut grads);
        Ok(GradResult { loss, grads })
    }

    /// Loss only, same arithmetic as [`StudentModel::loss_and_grads`].
    pub fn loss_only(
        &self,
        prompt: &[u32],
        response: &[u32],
        targets: Option<&[TokenProbDist]>,
        mode: LossMode,
    ) -> Result<f64> {
        let (_, loss, _) = self.loss_forward(prompt, response, targets, mode)?;
        Ok(loss)
    }

    fn loss_forward(
        &self,
        prompt: &[u32],
        response: &[u32],
        targets: Option<&[TokenProbDist]>,
        mode: LossMode,
    ) -> Result<(forward::Tape, f64, Vec<f64>)> {
        if prompt.is_empty() || response.is_empty() {
            return Err(Error::invalid_input(
                "prompt and response must be non-empty",
            ));
        }
        let v = self.config().vocab_size;
        match (mode.needs_distributions(), targets) {
            (true, Some(t)) => {
                if t.len() != response.len() {
                    return Err(Error::invalid_input(format!(
                        "{} targets for {} response positions",
                        t.len(),
                        response.len()
                    )));
                }
                if let Some(bad) = t.iter().find(|d| d.vocab_size() != v) {
                    return Err(Error::invalid_input(format!(
                        "target vocab size {} does not match model vocab {v}",
                        bad.vocab_size()
                    )));
                }
            }
            (true, None) => {
                return Err(Error::invalid_input(format!(
                    "mode {mode} requires per-position target distributions"
                )))
            }
            (false, Some(_)) => {
                return Err(Error::invalid_input(format!(
                    "mode {mode} takes ground-truth ids, not target distributions"
                )))
            }
            (false, None) => {}
        }

        let full: Vec<u32> = prompt.iter().chain(response).copied().collect();
        let tape = forward::forward(self, &full)?;

        let ly = response.len();
        let inv_ly = 1.0 / ly as f64;
        let mut dlogits = vec![0.0f64; full.len() * v];
        let mut loss = 0.0f64;
        let mut onehot = vec![0.0f64; v];
        let mut ls = vec![0.0f64; v];

        for (n, &gt) in response.iter().enumerate() {
            let row = prompt.len() - 1 + n;
            let logits = &tape.logits[row * v..(row + 1) * v];

            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (o, &z) in ls.iter_mut().zip(logits) {
                *o = z - max;
                sum += o.exp();
            }
            let lse = sum.ln();
            for o in ls.iter_mut() {
                *o -= lse;
            }

            let target: &[f64] = match targets {
                Some(t) => t[n].probs(),
                None => {
                    for o in onehot.iter_mut() {
                        *o = 0.0;
                    }
                    onehot[gt as usize] = 1.0;
                    &onehot
                }
            };

            let mut pos_loss = 0.0;
            for (&ti, &lsi) in target.iter().zip(ls.iter()) {
                if ti > 0.0 {
                    pos_loss += ti * (ti.ln() - lsi);
                }
            }
            loss += pos_loss.max(0.0);

            let drow = &mut dlogits[row * v..(row + 1) * v];
            for ((d, &lsi), &ti) in drow.iter_mut().zip(ls.iter()).zip(target) {
                *d = (lsi.exp() - ti) * inv_ly;
            }
        }
        loss *= inv_ly;
        if !loss.is_finite() {
            return Err(Error::NumericFailure(format!("non-finite loss {loss}")));
        }
        Ok((tape, loss, dlogits))
    }
}

/// Mean loss over a batch, on the same arithmetic path the gradients use.
pub fn batch_loss(model: &StudentModel, batch: &[TrainExample], mode: LossMode) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid_input("empty batch"));
    }
    let mut acc = 0.0;
    for ex in batch {
        acc += model.loss_only(&ex.prompt, &ex.response, ex.targets.as_deref(), mode)?;
    }
    Ok(acc / batch.len() as f64)
}

/// Mean gradient over a batch, reduced in ascending example order.
pub fn batch_grads(
    model: &StudentModel,
    batch: &[TrainExample],
    mode: LossMode,
) -> Result<GradResult> {
    if batch.is_empty() {
        return Err(Error::invalid_input("empty batch"));
    }
    let mut grads = vec![0.0f64; model.param_count()];
    let mut loss = 0.0;
    let inv = 1.0 / batch.len() as f64;
    for ex in batch {
        let r = model.loss_and_grads(&ex.prompt, &ex.response, ex.targets.as_deref(), mode)?;
        loss += r.loss * inv;
        for (g, rg) in grads.iter_mut().zip(&r.grads) {
            *g += rg * inv;
        }
    }
    Ok(GradResult { loss, grads })
}

/// Compare analytic gradients against central finite differences on a random
/// subsample of at least 200 parameters; returns the worst relative error.
///
/// The relative error uses a floor of `1e-3 × max|gradient|` so that
/// components deep inside the difference-quotient noise floor do not
/// dominate the verdict.
pub fn grad_check(
    model: &StudentModel,
    batch: &[TrainExample],
    mode: LossMode,
    epsilon: f64,
    n_sample: usize,
    seed: u64,
) -> Result<f64> {
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(Error::invalid_input(format!(
            "epsilon {epsilon} outside [1e-6, 1e-3]"
        )));
    }
    let analytic = batch_grads(model, batch, mode)?.grads;
    let g_inf = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let floor = (1e-3 * g_inf).max(1e-8);

    let n_sample = n_sample.max(200);
    let total = model.param_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices: Vec<usize> = if total <= n_sample {
        (0..total).collect()
    } else {
        rand::seq::index::sample(&mut rng, total, n_sample).into_vec()
    };

    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for &i in &indices {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + epsilon;
        let up = batch_loss(&probe, batch, mode)?;
        probe.params_mut()[i] = orig - epsilon;
        let down = batch_loss(&probe, batch, mode)?;
        probe.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        if rel > worst {
            worst = rel;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, ModelConfig};

    fn tiny(seed: u64) -> StudentModel {
        init_model(&ModelConfig {
            vocab_size: 9,
            context_len: 10,
            d_model: 12,
            n_layers: 2,
            n_heads: 2,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn uniform_model_matches_analytic_kl() {
        let mut m = init_model(&ModelConfig {
            vocab_size: 3,
            context_len: 4,
            d_model: 4,
            n_layers: 1,
            n_heads: 1,
            seed: 0,
        })
        .unwrap();
        for p in m.params_mut().iter_mut() {
            *p = 0.0;
        }
        // All-zero parameters give uniform softmax rows.
        let target = TokenProbDist::new(vec![0.8, 0.2, 0.0]).unwrap();
        let r = m
            .loss_and_grads(&[0], &[1], Some(&[target]), LossMode::Lft)
            .unwrap();
        assert!((r.loss - 0.5982098651299219).abs() < 1e-9, "{}", r.loss);
    }

    #[test]
    fn self_targets_give_zero_loss() {
        let m = tiny(4);
        let prompt = [1u32, 2];
        let response = [3u32, 4, 5];
        let rows = m
            .forward_logits(&[1, 2, 3, 4, 5])
            .unwrap();
        let targets: Vec<TokenProbDist> = (0..3)
            .map(|n| crate::distrib::softmax_tau(&rows[prompt.len() - 1 + n], 1.0).unwrap())
            .collect();
        let r = m
            .loss_and_grads(&prompt, &response, Some(&targets), LossMode::Lft)
            .unwrap();
        assert!(r.loss <= 1e-10, "loss {}", r.loss);
    }

    #[test]
    fn sft_equals_lft_with_one_hot_targets() {
        let m = tiny(8);
        let prompt = vec![1u32, 2, 3];
        let response = vec![4u32, 5, 0];
        let sft = m
            .loss_and_grads(&prompt, &response, None, LossMode::Sft)
            .unwrap();
        let empty = crate::distrib::SparseTopK::new(vec![], 0, 9).unwrap();
        let targets: Vec<TokenProbDist> = response
            .iter()
            .map(|&gt| crate::distrib::combine_target(&empty, gt as usize).unwrap())
            .collect();
        let lft = m
            .loss_and_grads(&prompt, &response, Some(&targets), LossMode::Lft)
            .unwrap();
        assert!((sft.loss - lft.loss).abs() <= 1e-10);
        for (a, b) in sft.grads.iter().zip(&lft.grads) {
            assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn mode_target_mismatch_is_rejected() {
        let m = tiny(1);
        let t = vec![TokenProbDist::new(vec![1.0 / 9.0; 9]).unwrap()];
        assert!(m
            .loss_and_grads(&[1], &[2], Some(&t), LossMode::Sft)
            .is_err());
        assert!(m.loss_and_grads(&[1], &[2], None, LossMode::Lft).is_err());
        assert!(m
            .loss_and_grads(&[1], &[2, 3], Some(&t), LossMode::Lft)
            .is_err());
    }

    #[test]
    fn unused_embedding_rows_have_zero_gradient() {
        let m = tiny(2);
        let r = m
            .loss_and_grads(&[1, 2], &[3, 4], None, LossMode::Sft)
            .unwrap();
        // Token 7 appears nowhere in the batch; its embedding row is unused.
        let d = m.config().d_model;
        let off = m.layout().wte + 7 * d;
        assert!(r.grads[off..off + d].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn descent_step_reduces_loss() {
        let mut m = tiny(3);
        let batch = [TrainExample {
            prompt: vec![1, 2],
            response: vec![3, 4, 5],
            targets: None,
        }];
        let before = batch_loss(&m, &batch, LossMode::Sft).unwrap();
        let g = batch_grads(&m, &batch, LossMode::Sft).unwrap();
        m.apply_update(&g.grads, 1e-3).unwrap();
        let after = batch_loss(&m, &batch, LossMode::Sft).unwrap();
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn grad_check_epsilon_bounds() {
        let m = tiny(0);
        let batch = [TrainExample {
            prompt: vec![1],
            response: vec![2],
            targets: None,
        }];
        assert!(grad_check(&m, &batch, LossMode::Sft, 1e-5, 8, 0).is_ok());
        assert!(grad_check(&m, &batch, LossMode::Sft, 1e-2, 8, 0).is_err());
        assert!(grad_check(&m, &batch, LossMode::Sft, 1e-7, 8, 0).is_err());
    }
}
