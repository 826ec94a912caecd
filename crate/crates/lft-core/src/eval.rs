//! Greedy exact-match evaluation, mode/fraction sweeps, and target
//! inspection.
//!
//! An example is scored correct when the greedy continuation reaches EOS and
//! its final token before EOS matches the reference answer (the final token
//! before EOS of the reference response). A continuation that never emits
//! EOS is counted incorrect and flagged as an overflow.

use crate::data::{materialize_targets, CorpusPair, LogitsDataset, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{LossMode, ModelConfig, StudentModel};
use crate::train::{train, TrainConfig, TrainData, TrainHistory};
use rayon::prelude::*;
use serde::Serialize;

/// Per-example outcome.
#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub correct: bool,
    pub overflow: bool,
    pub decoded: Vec<u32>,
}

/// Accuracy over a test set, with the per-example verdicts retained.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub task: String,
    pub n_examples: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    pub verdicts: Vec<Verdict>,
}

/// Greedy-decode every prompt and compare final answer tokens.
pub fn evaluate(
    model: &StudentModel,
    testset: &[CorpusPair],
    eos: u32,
    max_new: usize,
    task: &str,
) -> Result<EvalReport> {
    if testset.is_empty() {
        return Err(Error::invalid_input("empty test set"));
    }
    let verdicts: Vec<Verdict> = testset
        .par_iter()
        .map(|pair| -> Result<Verdict> {
            let decoded = model.greedy_decode(&pair.prompt, max_new, eos)?;
            let overflow = decoded.last() != Some(&eos);
            let answer = if overflow || decoded.len() < 2 {
                None
            } else {
                Some(decoded[decoded.len() - 2])
            };
            let correct = !overflow && answer.is_some() && answer == pair.answer();
            Ok(Verdict {
                correct,
                overflow,
                decoded,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n_correct = verdicts.iter().filter(|v| v.correct).count();
    Ok(EvalReport {
        task: task.to_string(),
        n_examples: testset.len(),
        n_correct,
        accuracy: n_correct as f64 / testset.len() as f64,
        verdicts,
    })
}

/// The cells to run: every mode × fraction combination, for every seed.
#[derive(Debug, Clone)]
pub struct SweepGrid {
    pub modes: Vec<LossMode>,
    pub fractions: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub mode: LossMode,
    pub fraction: f64,
    pub seed: u64,
    /// `None` when the cell's training run aborted.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepAggregate {
    pub mode: LossMode,
    pub fraction: f64,
    pub mean: f64,
    pub stddev: f64,
    pub failed: usize,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    pub aggregates: Vec<SweepAggregate>,
    /// `(cell name, history)` for every completed cell.
    pub histories: Vec<(String, TrainHistory)>,
}

pub fn cell_name(mode: LossMode, fraction: f64, seed: u64) -> String {
    format!("{mode}_f{fraction:.2}_s{seed}")
}

/// Run train + evaluate for every grid cell. All modes at a given sweep seed
/// share the student initialization, the data subset, and the batch-order
/// seed; only the loss target differs. Failed cells are recorded, not fatal.
#[allow(clippy::too_many_arguments)]
pub fn compare_modes(
    grid: &SweepGrid,
    dataset: &LogitsDataset,
    testset: &[CorpusPair],
    student_config: &ModelConfig,
    base: &TrainConfig,
    seeds: &[u64],
    eos: u32,
    max_new: usize,
) -> Result<SweepResult> {
    if seeds.is_empty() {
        return Err(Error::config("at least one seed is required"));
    }
    if grid.modes.is_empty() || grid.fractions.is_empty() {
        return Err(Error::config("sweep grid is empty"));
    }
    let mut specs = Vec::new();
    for &mode in &grid.modes {
        for &fraction in &grid.fractions {
            for &seed in seeds {
                specs.push((mode, fraction, seed));
            }
        }
    }

    let runs: Vec<(SweepCell, Option<(String, TrainHistory)>)> = specs
        .par_iter()
        .map(|&(mode, fraction, seed)| {
            let mut cfg = base.clone();
            cfg.mode = mode;
            cfg.data_fraction = fraction;
            cfg.seed = seed;
            let mut student_cfg = student_config.clone();
            student_cfg.seed = seed;
            let outcome = crate::model::init_model(&student_cfg).and_then(|student| {
                let (trained, history) = train(student, TrainData::Logits(dataset), &cfg, None)?;
                let report = evaluate(&trained, testset, eos, max_new, "sweep")?;
                Ok((report.accuracy, history))
            });
            match outcome {
                Ok((accuracy, history)) => (
                    SweepCell {
                        mode,
                        fraction,
                        seed,
                        accuracy: Some(accuracy),
                    },
                    Some((cell_name(mode, fraction, seed), history)),
                ),
                Err(_) => (
                    SweepCell {
                        mode,
                        fraction,
                        seed,
                        accuracy: None,
                    },
                    None,
                ),
            }
        })
        .collect();

    let cells: Vec<SweepCell> = runs.iter().map(|(c, _)| c.clone()).collect();
    let histories: Vec<(String, TrainHistory)> =
        runs.into_iter().filter_map(|(_, h)| h).collect();

    let mut aggregates = Vec::new();
    for &mode in &grid.modes {
        for &fraction in &grid.fractions {
            let accs: Vec<f64> = cells
                .iter()
                .filter(|c| c.mode == mode && c.fraction == fraction)
                .filter_map(|c| c.accuracy)
                .collect();
            let failed = seeds.len() - accs.len();
            let mean = if accs.is_empty() {
                f64::NAN
            } else {
                accs.iter().sum::<f64>() / accs.len() as f64
            };
            let stddev = if accs.len() < 2 {
                0.0
            } else {
                let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>()
                    / (accs.len() - 1) as f64;
                var.sqrt()
            };
            aggregates.push(SweepAggregate {
                mode,
                fraction,
                mean,
                stddev,
                failed,
            });
        }
    }

    Ok(SweepResult {
        cells,
        aggregates,
        histories,
    })
}

/// Long-form CSV: one `mode,fraction,seed,accuracy` row per cell, then
/// aggregate rows with `mean`/`stddev` in the seed column, then
/// `gap_lft_minus_sft` rows whenever both modes ran.
pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = String::from("mode,fraction,seed,accuracy\n");
    for c in &result.cells {
        let acc = c.accuracy.map(|a| a.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", c.mode, c.fraction, c.seed, acc));
    }
    for a in &result.aggregates {
        if a.mean.is_nan() {
            out.push_str(&format!("{},{},mean,\n", a.mode, a.fraction));
        } else {
            out.push_str(&format!("{},{},mean,{}\n", a.mode, a.fraction, a.mean));
            out.push_str(&format!("{},{},stddev,{}\n", a.mode, a.fraction, a.stddev));
        }
    }
    let mut fractions: Vec<f64> = Vec::new();
    for a in &result.aggregates {
        if !fractions.iter().any(|&f| f == a.fraction) {
            fractions.push(a.fraction);
        }
    }
    for f in fractions {
        let get = |mode: LossMode| {
            result
                .aggregates
                .iter()
                .find(|a| a.mode == mode && a.fraction == f && !a.mean.is_nan())
                .map(|a| a.mean)
        };
        if let (Some(lft), Some(sft)) = (get(LossMode::Lft), get(LossMode::Sft)) {
            out.push_str(&format!("gap_lft_minus_sft,{},mean,{}\n", f, lft - sft));
        }
    }
    out
}

/// Render one record's combined targets as an aligned text table: per
/// response position, the ground truth and every retained alternative with
/// its combined probability, descending.
pub fn inspect_targets(
    ds: &LogitsDataset,
    record: usize,
    vocab: Option<&Vocabulary>,
) -> Result<String> {
    let rec = ds
        .records
        .get(record)
        .ok_or_else(|| Error::invalid_input(format!("record {record} out of range")))?;
    let targets = materialize_targets(rec)?;
    let name = |id: u32| -> String {
        match vocab.and_then(|v| v.token(id)) {
            Some(t) => t.to_string(),
            None => format!("#{id}"),
        }
    };
    let mut out = String::new();
    out.push_str(&format!(
        "record {record}: prompt [{}]\n",
        rec.prompt
            .iter()
            .map(|&t| name(t))
            .collect::<Vec<_>>()
            .join(" ")
    ));
    for (n, (target, &gt)) in targets.iter().zip(&rec.response).enumerate() {
        let mut rows: Vec<(u32, f64)> = rec.teacher[n]
            .entries()
            .iter()
            .map(|&(id, _)| (id, target.get(id as usize)))
            .collect();
        if !rows.iter().any(|&(id, _)| id == gt) {
            rows.push((gt, target.get(gt as usize)));
        }
        rows.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out.push_str(&format!("position {n}:\n"));
        for (id, p) in rows {
            let marker = if id == gt { "  [gt]" } else { "" };
            out.push_str(&format!("    {:<8} {p:.4}{marker}\n", name(id)));
        }
    }
    Ok(out)
}
