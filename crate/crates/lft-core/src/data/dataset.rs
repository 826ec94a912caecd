//! Sparse logits dataset: generation from a teacher, target
//! materialization, and whole-dataset verification.
//!
//! A dataset stores the raw teacher evidence (top-K probabilities) next to
//! the ground-truth response rather than the combined target itself; the
//! target is reconstructed deterministically on demand, which halves the
//! file size and keeps the teacher's confidence inspectable.

use crate::data::corpus::CorpusPair;
use crate::distrib::{
    check_constraints, combine_target, softmax_tau, top_k_sparsify, SparseTopK, TokenProbDist,
};
use crate::error::{Error, Result};
use crate::model::StudentModel;
use crate::util::quantize_prob_f32;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Where a dataset came from and how it was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub teacher_id: String,
    pub seed: u64,
    pub k: usize,
    pub tau: f64,
    pub source: String,
}

/// One example: prompt, response, and one sparse teacher distribution per
/// response position.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitsRecord {
    pub prompt: Vec<u32>,
    pub response: Vec<u32>,
    pub teacher: Vec<SparseTopK>,
}

impl LogitsRecord {
    pub fn validate(&self, vocab_size: usize, k: usize) -> Result<()> {
        if self.prompt.is_empty() || self.response.is_empty() {
            return Err(Error::invalid_input("prompt and response must be non-empty"));
        }
        if self.teacher.len() != self.response.len() {
            return Err(Error::invalid_input(format!(
                "{} teacher entries for {} response positions",
                self.teacher.len(),
                self.response.len()
            )));
        }
        if let Some(&bad) = self
            .prompt
            .iter()
            .chain(&self.response)
            .find(|&&t| t as usize >= vocab_size)
        {
            return Err(Error::invalid_input(format!(
                "token id {bad} out of range for vocab size {vocab_size}"
            )));
        }
        for (i, s) in self.teacher.iter().enumerate() {
            if s.vocab_size() != vocab_size || s.k() != k {
                return Err(Error::invalid_input(format!(
                    "teacher entry {i} has vocab/k ({}, {}) but dataset has ({vocab_size}, {k})",
                    s.vocab_size(),
                    s.k()
                )));
            }
            s.validate()
                .map_err(|e| Error::invalid_input(format!("teacher entry {i}: {e}")))?;
        }
        Ok(())
    }
}

/// A whole logits dataset with uniform vocab size and K.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitsDataset {
    pub vocab_size: usize,
    pub k: usize,
    pub records: Vec<LogitsRecord>,
    pub provenance: Provenance,
}

impl LogitsDataset {
    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.records.iter().enumerate() {
            r.validate(self.vocab_size, self.k)
                .map_err(|e| Error::invalid_input(format!("record {i}: {e}")))?;
        }
        Ok(())
    }
}

/// Run the teacher over every pair (teacher forcing on the ground truth) and
/// keep the top-K probabilities at each response position.
///
/// The teacher softmax runs at temperature 1; retained probabilities are
/// quantized into `f32` space (rounding toward zero) so that the dataset is
/// exactly what its serialized form will say. Records are generated in
/// parallel but always emitted in corpus order.
pub fn generate_logits_dataset(
    teacher: &StudentModel,
    corpus: &[CorpusPair],
    k: usize,
) -> Result<LogitsDataset> {
    if k == 0 {
        return Err(Error::invalid_input("k must be >= 1"));
    }
    let vocab_size = teacher.config().vocab_size;
    let records: Vec<LogitsRecord> = corpus
        .par_iter()
        .map(|pair| -> Result<LogitsRecord> {
            let full: Vec<u32> = pair.prompt.iter().chain(&pair.response).copied().collect();
            let rows = teacher.forward_logits(&full)?;
            let mut teacher_entries = Vec::with_capacity(pair.response.len());
            for n in 0..pair.response.len() {
                let dist = softmax_tau(&rows[pair.prompt.len() - 1 + n], 1.0)?;
                let sparse = top_k_sparsify(&dist, k);
                let mut entries: Vec<(u32, f64)> = sparse
                    .entries()
                    .iter()
                    .map(|&(id, p)| (id, quantize_prob_f32(p)))
                    .collect();
                // Quantization can merge nearby values; restore canonical order.
                entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                teacher_entries.push(SparseTopK::new(entries, k, vocab_size)?);
            }
            Ok(LogitsRecord {
                prompt: pair.prompt.clone(),
                response: pair.response.clone(),
                teacher: teacher_entries,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(LogitsDataset {
        vocab_size,
        k,
        records,
        provenance: Provenance {
            teacher_id: teacher.fingerprint(),
            seed: 0,
            k,
            tau: 1.0,
            source: "native".to_string(),
        },
    })
}

/// Reconstruct the combined target distribution at every response position.
pub fn materialize_targets(record: &LogitsRecord) -> Result<Vec<TokenProbDist>> {
    record
        .teacher
        .iter()
        .zip(&record.response)
        .map(|(sparse, &gt)| combine_target(sparse, gt as usize))
        .collect()
}

/// One failed check inside a dataset.
#[derive(Debug, Clone)]
pub struct VerifyViolation {
    pub record: usize,
    pub position: usize,
    pub what: String,
}

/// Aggregate result of re-materializing and checking a whole dataset.
#[derive(Debug, Clone)]
pub struct DatasetVerifyReport {
    pub records: usize,
    pub positions: usize,
    pub violations: Vec<VerifyViolation>,
    pub max_ratio_rel_err: f64,
    pub max_sum_abs_err: f64,
}

impl DatasetVerifyReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-materialize every target in the dataset and check record invariants
/// plus the four target constraints, collecting rather than throwing.
pub fn verify_dataset(ds: &LogitsDataset) -> DatasetVerifyReport {
    let mut report = DatasetVerifyReport {
        records: ds.records.len(),
        positions: 0,
        violations: Vec::new(),
        max_ratio_rel_err: 0.0,
        max_sum_abs_err: 0.0,
    };
    for (ri, rec) in ds.records.iter().enumerate() {
        if let Err(e) = rec.validate(ds.vocab_size, ds.k) {
            report.violations.push(VerifyViolation {
                record: ri,
                position: 0,
                what: format!("record invariant: {e}"),
            });
        }
        for (pi, (sparse, &gt)) in rec.teacher.iter().zip(&rec.response).enumerate() {
            if sparse
                .entries()
                .iter()
                .any(|&(id, _)| id as usize >= ds.vocab_size)
            {
                // Already reported as a record-invariant violation; the
                // constraint math is meaningless for out-of-range ids.
                continue;
            }
            report.positions += 1;
            let target = match combine_target(sparse, gt as usize) {
                Ok(t) => t,
                Err(e) => {
                    report.violations.push(VerifyViolation {
                        record: ri,
                        position: pi,
                        what: format!("materialization failed: {e}"),
                    });
                    continue;
                }
            };
            let c = check_constraints(&target, sparse, gt as usize);
            report.max_ratio_rel_err = report.max_ratio_rel_err.max(c.c2_ratio_max_rel_err);
            report.max_sum_abs_err = report.max_sum_abs_err.max(c.c4_sum_abs_err);
            if !c.overall_ok {
                let mut which = Vec::new();
                if !c.c1_argmax_ok {
                    which.push("constraint 1 (ground-truth argmax)");
                }
                if c.c2_ratio_max_rel_err > crate::distrib::RATIO_REL_TOL {
                    which.push("constraint 2 (top-K ratios)");
                }
                if !c.c3_outside_ok {
                    which.push("constraint 3 (outside support)");
                }
                if !c.c4_range_ok || c.c4_sum_abs_err > crate::distrib::SUM_ABS_TOL {
                    which.push("constraint 4 (valid distribution)");
                }
                report.violations.push(VerifyViolation {
                    record: ri,
                    position: pi,
                    what: which.join(", "),
                });
            }
        }
    }
    report
}
