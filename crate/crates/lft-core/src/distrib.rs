//! Distribution-level kernels: temperature softmax, KL divergence, top-K
//! sparsification, one-hot targets, the combined teacher/ground-truth target,
//! and the four-constraint checker for that target.
//!
//! All operations are pure functions over `f64` slices and may be called from
//! any number of threads.

use crate::error::{Error, Result};

/// Relative tolerance for the top-K ratio-preservation check (constraint 2).
pub const RATIO_REL_TOL: f64 = 1e-9;
/// Absolute tolerance on the probability sum (constraint 4 and type invariants).
pub const SUM_ABS_TOL: f64 = 1e-9;

/// A dense probability vector over the vocabulary.
///
/// Invariants: every entry in `[0, 1]`, entries sum to 1 within `1e-9`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenProbDist {
    probs: Vec<f64>,
}

impl TokenProbDist {
    /// Build a validated distribution.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid_input("probability vector is empty"));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid_input(format!(
                    "probability {p} at index {i} is outside [0, 1]"
                )));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_ABS_TOL {
            return Err(Error::invalid_input(format!(
                "probabilities sum to {sum}, expected 1 within {SUM_ABS_TOL}"
            )));
        }
        Ok(TokenProbDist { probs })
    }

    /// Wrap a raw vector without validation. Intended for diagnostics and
    /// tests that deliberately construct invalid distributions; everything on
    /// the training path goes through [`TokenProbDist::new`] or the kernels
    /// below, which establish the invariants by construction.
    pub fn raw(probs: Vec<f64>) -> Self {
        TokenProbDist { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn vocab_size(&self) -> usize {
        self.probs.len()
    }

    pub fn get(&self, token: usize) -> f64 {
        self.probs[token]
    }
}

/// At most `k` `(token_id, probability)` pairs retained from a teacher
/// distribution, post-softmax and deliberately not renormalized.
///
/// Entries are sorted by probability descending, ties broken by ascending
/// token id.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTopK {
    entries: Vec<(u32, f64)>,
    k: usize,
    vocab_size: usize,
}

impl SparseTopK {
    /// Build a validated sparse distribution.
    pub fn new(entries: Vec<(u32, f64)>, k: usize, vocab_size: usize) -> Result<Self> {
        let s = SparseTopK {
            entries,
            k,
            vocab_size,
        };
        s.validate()?;
        Ok(s)
    }

    /// Wrap parts without validation; used by format readers so that
    /// semantically bad records can still be surfaced per record by `verify`
    /// rather than aborting the whole file read.
    pub fn from_parts(entries: Vec<(u32, f64)>, k: usize, vocab_size: usize) -> Self {
        SparseTopK {
            entries,
            k,
            vocab_size,
        }
    }

    /// Check every type invariant, naming the first violation.
    pub fn validate(&self) -> Result<()> {
        if self.entries.len() > self.k {
            return Err(Error::invalid_input(format!(
                "{} entries exceed k = {}",
                self.entries.len(),
                self.k
            )));
        }
        let mut sum = 0.0;
        for (i, &(id, p)) in self.entries.iter().enumerate() {
            if (id as usize) >= self.vocab_size {
                return Err(Error::invalid_input(format!(
                    "token id {id} out of range for vocab size {}",
                    self.vocab_size
                )));
            }
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid_input(format!(
                    "probability {p} for token {id} is outside [0, 1]"
                )));
            }
            if i > 0 {
                let (prev_id, prev_p) = self.entries[i - 1];
                let ordered = p < prev_p || (p == prev_p && id > prev_id);
                if !ordered {
                    return Err(Error::invalid_input(format!(
                        "entries not sorted (prob desc, id asc) at position {i}"
                    )));
                }
                if id == prev_id {
                    return Err(Error::invalid_input(format!("duplicate token id {id}")));
                }
            }
            sum += p;
        }
        // Sorting already guarantees distinct adjacent ids; non-adjacent
        // duplicates would violate the sort order first.
        let mut seen: Vec<u32> = self.entries.iter().map(|e| e.0).collect();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid_input("duplicate token ids".to_string()));
        }
        if sum > 1.0 + SUM_ABS_TOL {
            return Err(Error::invalid_input(format!(
                "probabilities sum to {sum}, exceeding 1 + {SUM_ABS_TOL}"
            )));
        }
        Ok(())
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Probability for a token id, zero if not retained.
    pub fn prob(&self, token: u32) -> f64 {
        self.entries
            .iter()
            .find(|&&(id, _)| id == token)
            .map(|&(_, p)| p)
            .unwrap_or(0.0)
    }
}

/// Outcome of checking one target distribution against the four constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintReport {
    /// Constraint 1: the argmax of the target is the ground-truth index.
    pub c1_argmax_ok: bool,
    /// Constraint 2: worst relative error of the preserved top-K ratios.
    pub c2_ratio_max_rel_err: f64,
    /// Constraint 3: no index outside {gt} ∪ top-K exceeds any inside it.
    pub c3_outside_ok: bool,
    /// Constraint 4: absolute deviation of the probability sum from 1.
    pub c4_sum_abs_err: f64,
    /// Constraint 4: all entries within [0, 1].
    pub c4_range_ok: bool,
    /// Conjunction of the four verdicts under the module tolerances.
    pub overall_ok: bool,
}

/// Temperature softmax over a logit vector, computed with max subtraction.
pub fn softmax_tau(logits: &[f64], tau: f64) -> Result<TokenProbDist> {
    if logits.is_empty() {
        return Err(Error::invalid_input("logit vector is empty"));
    }
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::invalid_input(format!(
            "temperature must be finite and > 0, got {tau}"
        )));
    }
    if let Some(bad) = logits.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid_input(format!("non-finite logit {bad}")));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|&z| ((z - max) / tau).exp()).collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    Ok(TokenProbDist { probs })
}

/// Index of the maximum value; ties break toward the lowest index.
pub fn argmax_token(values: &[f64]) -> Result<usize> {
    if values.is_empty() {
        return Err(Error::invalid_input("argmax of an empty vector"));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid_input(format!("non-finite value {bad}")));
    }
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    Ok(best)
}

/// KL divergence `Σ p ln(p/q)` in nats, with the `0·ln 0 = 0` convention.
///
/// Requires `q > 0` wherever `p > 0`; the result is clamped to be
/// non-negative against rounding noise.
pub fn kl_divergence(p: &TokenProbDist, q: &TokenProbDist) -> Result<f64> {
    if p.vocab_size() != q.vocab_size() {
        return Err(Error::invalid_input(format!(
            "length mismatch: {} vs {}",
            p.vocab_size(),
            q.vocab_size()
        )));
    }
    let mut acc = 0.0;
    for (i, (&pi, &qi)) in p.probs.iter().zip(&q.probs).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(Error::SupportMismatch(format!(
                    "p[{i}] = {pi} but q[{i}] = {qi}"
                )));
            }
            acc += pi * (pi / qi).ln();
        }
    }
    Ok(acc.max(0.0))
}

/// One-hot distribution with mass 1 at `gt_index`.
pub fn one_hot(gt_index: usize, vocab_size: usize) -> Result<TokenProbDist> {
    if gt_index >= vocab_size {
        return Err(Error::invalid_input(format!(
            "index {gt_index} out of range for vocab size {vocab_size}"
        )));
    }
    let mut probs = vec![0.0; vocab_size];
    probs[gt_index] = 1.0;
    Ok(TokenProbDist { probs })
}

/// Retain the `k` highest-probability nonzero entries of a distribution.
///
/// Values are copied verbatim, never rescaled. Ties break toward the lowest
/// token id; zero-probability entries are never retained.
pub fn top_k_sparsify(dist: &TokenProbDist, k: usize) -> SparseTopK {
    let mut entries: Vec<(u32, f64)> = dist
        .probs
        .iter()
        .enumerate()
        .filter(|&(_, &p)| p > 0.0)
        .map(|(i, &p)| (i as u32, p))
        .collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    entries.truncate(k);
    SparseTopK {
        entries,
        k,
        vocab_size: dist.vocab_size(),
    }
}

/// The combined target: densified sparse teacher plus the one-hot ground
/// truth, divided by the L1 norm of the sum.
pub fn combine_target(teacher: &SparseTopK, gt_index: usize) -> Result<TokenProbDist> {
    let m = teacher.vocab_size;
    if gt_index >= m {
        return Err(Error::invalid_input(format!(
            "ground-truth index {gt_index} out of range for vocab size {m}"
        )));
    }
    let mut dense = vec![0.0; m];
    for &(id, p) in &teacher.entries {
        if id as usize >= m {
            return Err(Error::invalid_input(format!(
                "teacher token id {id} out of range for vocab size {m}"
            )));
        }
        dense[id as usize] += p;
    }
    dense[gt_index] += 1.0;
    let norm: f64 = dense.iter().sum();
    for v in &mut dense {
        *v /= norm;
    }
    Ok(TokenProbDist { probs: dense })
}

/// Check a target distribution against the four constraints relative to the
/// teacher evidence and ground-truth index it was built from.
///
/// Violations are reported, never thrown.
pub fn check_constraints(
    target: &TokenProbDist,
    teacher: &SparseTopK,
    gt_index: usize,
) -> ConstraintReport {
    let t = &target.probs;
    let gt_val = t.get(gt_index).copied().unwrap_or(f64::NEG_INFINITY);

    // C1: ground truth wins every exact comparison.
    let c1_argmax_ok = gt_index < t.len()
        && t.iter()
            .enumerate()
            .all(|(j, &v)| j == gt_index || gt_val >= v);

    // C2: pairwise ratios among retained teacher tokens (excluding gt).
    let mut c2_ratio_max_rel_err = 0.0f64;
    let pool: Vec<(u32, f64)> = teacher
        .entries
        .iter()
        .copied()
        .filter(|&(id, _)| id as usize != gt_index)
        .collect();
    for &(j, tj) in &pool {
        for &(k, tk) in &pool {
            if j == k || tk <= 0.0 {
                continue;
            }
            let expected = tj / tk;
            let got = t[j as usize] / t[k as usize];
            let rel = (got - expected).abs() / expected;
            if rel > c2_ratio_max_rel_err {
                c2_ratio_max_rel_err = rel;
            }
        }
    }

    // C3: everything outside S = {gt} ∪ teacher ids is bounded by the
    // minimum inside S.
    let mut in_s = vec![false; t.len()];
    if gt_index < t.len() {
        in_s[gt_index] = true;
    }
    for &(id, _) in &teacher.entries {
        if (id as usize) < t.len() {
            in_s[id as usize] = true;
        }
    }
    let min_in_s = t
        .iter()
        .zip(&in_s)
        .filter(|&(_, &m)| m)
        .map(|(&v, _)| v)
        .fold(f64::INFINITY, f64::min);
    let c3_outside_ok = t
        .iter()
        .zip(&in_s)
        .filter(|&(_, &m)| !m)
        .all(|(&v, _)| v <= min_in_s);

    // C4: valid probability distribution.
    let sum: f64 = t.iter().sum();
    let c4_sum_abs_err = (sum - 1.0).abs();
    let c4_range_ok = t.iter().all(|&v| (0.0..=1.0).contains(&v));

    let overall_ok = c1_argmax_ok
        && c2_ratio_max_rel_err <= RATIO_REL_TOL
        && c3_outside_ok
        && c4_range_ok
        && c4_sum_abs_err <= SUM_ABS_TOL;

    ConstraintReport {
        c1_argmax_ok,
        c2_ratio_max_rel_err,
        c3_outside_ok,
        c4_sum_abs_err,
        c4_range_ok,
        overall_ok,
    }
}

/// Mean per-position KL divergence between two aligned distribution lists.
pub fn sequence_discrepancy(
    targets: &[TokenProbDist],
    students: &[TokenProbDist],
) -> Result<f64> {
    if targets.is_empty() || students.is_empty() {
        return Err(Error::invalid_input("empty distribution list"));
    }
    if targets.len() != students.len() {
        return Err(Error::invalid_input(format!(
            "length mismatch: {} targets vs {} students",
            targets.len(),
            students.len()
        )));
    }
    let mut acc = 0.0;
    for (t, s) in targets.iter().zip(students) {
        acc += kl_divergence(t, s)?;
    }
    Ok(acc / targets.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = core::f64::consts::LN_2;

    fn dist(v: &[f64]) -> TokenProbDist {
        TokenProbDist::new(v.to_vec()).unwrap()
    }

    #[test]
    fn softmax_symmetric_pair() {
        let d = softmax_tau(&[0.0, 0.0], 1.0).unwrap();
        assert_eq!(d.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_analytic_tau_one() {
        let d = softmax_tau(&[LN2, 0.0], 1.0).unwrap();
        assert!((d.get(0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((d.get(1) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_analytic_tau_two() {
        let d = softmax_tau(&[LN2, 0.0], 2.0).unwrap();
        let s2 = 2.0f64.sqrt();
        assert!((d.get(0) - s2 / (s2 + 1.0)).abs() < 1e-12);
        assert!((d.get(1) - 1.0 / (s2 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn softmax_sum_is_one_under_extreme_logits() {
        let d = softmax_tau(&[1000.0, -1000.0, 999.5], 1.0).unwrap();
        let sum: f64 = d.probs().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_rejects_bad_inputs() {
        assert!(softmax_tau(&[0.0, f64::NAN], 1.0).is_err());
        assert!(softmax_tau(&[0.0, f64::INFINITY], 1.0).is_err());
        assert!(softmax_tau(&[0.0], 0.0).is_err());
        assert!(softmax_tau(&[0.0], -1.0).is_err());
        assert!(softmax_tau(&[], 1.0).is_err());
    }

    #[test]
    fn argmax_cases() {
        assert_eq!(argmax_token(&[3.0, 1.0]).unwrap(), 0);
        assert_eq!(argmax_token(&[0.5, 0.5]).unwrap(), 0);
        assert_eq!(argmax_token(&[0.1, 0.2, 0.7]).unwrap(), 2);
        assert!(argmax_token(&[]).is_err());
    }

    #[test]
    fn kl_identical_is_zero() {
        let p = dist(&[0.3, 0.7]);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kl_analytic_values() {
        let kl = kl_divergence(&dist(&[1.0, 0.0]), &dist(&[0.5, 0.5])).unwrap();
        assert!((kl - LN2).abs() < 1e-12);

        let kl = kl_divergence(&dist(&[0.5, 0.5]), &dist(&[0.25, 0.75])).unwrap();
        assert!((kl - 0.14384103622589042).abs() < 1e-12);
    }

    #[test]
    fn kl_support_mismatch() {
        let p = dist(&[0.5, 0.5]);
        let q = dist(&[1.0, 0.0]);
        assert!(matches!(
            kl_divergence(&p, &q),
            Err(Error::SupportMismatch(_))
        ));
    }

    #[test]
    fn one_hot_cases() {
        assert_eq!(one_hot(1, 3).unwrap().probs(), &[0.0, 1.0, 0.0]);
        assert_eq!(one_hot(0, 1).unwrap().probs(), &[1.0]);
        assert_eq!(one_hot(2, 4).unwrap().probs(), &[0.0, 0.0, 1.0, 0.0]);
        assert!(one_hot(3, 3).is_err());
    }

    #[test]
    fn top_k_selects_by_probability() {
        let d = dist(&[0.4, 0.35, 0.15, 0.1]);
        let s = top_k_sparsify(&d, 2);
        assert_eq!(s.entries(), &[(0, 0.4), (1, 0.35)]);
        assert_eq!(s.k(), 2);
        assert_eq!(s.vocab_size(), 4);
    }

    #[test]
    fn top_k_tie_breaks_low_id_and_k_zero() {
        let d = dist(&[0.5, 0.5]);
        assert_eq!(top_k_sparsify(&d, 1).entries(), &[(0, 0.5)]);
        assert!(top_k_sparsify(&d, 0).entries().is_empty());
    }

    #[test]
    fn top_k_drops_zeros_and_copies_values() {
        let d = dist(&[0.6, 0.0, 0.4]);
        let s = top_k_sparsify(&d, 3);
        assert_eq!(s.entries(), &[(0, 0.6), (2, 0.4)]);
    }

    #[test]
    fn combine_worked_example() {
        let teacher = SparseTopK::new(vec![(0, 0.5), (1, 0.3)], 2, 4).unwrap();
        let t = combine_target(&teacher, 2).unwrap();
        let expect = [0.5 / 1.8, 0.3 / 1.8, 1.0 / 1.8, 0.0];
        for (got, want) in t.probs().iter().zip(&expect) {
            assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        }
    }

    #[test]
    fn combine_empty_teacher_is_one_hot() {
        let teacher = SparseTopK::new(vec![], 0, 3).unwrap();
        let t = combine_target(&teacher, 1).unwrap();
        assert_eq!(t.probs(), one_hot(1, 3).unwrap().probs());
    }

    #[test]
    fn combine_gt_inside_top_k() {
        let teacher = SparseTopK::new(vec![(0, 0.6), (1, 0.4)], 2, 3).unwrap();
        let t = combine_target(&teacher, 0).unwrap();
        assert_eq!(t.probs(), &[0.8, 0.2, 0.0]);
    }

    #[test]
    fn combine_rejects_bad_gt() {
        let teacher = SparseTopK::new(vec![], 0, 3).unwrap();
        assert!(combine_target(&teacher, 3).is_err());
    }

    #[test]
    fn constraints_pass_on_worked_example() {
        let teacher = SparseTopK::new(vec![(0, 0.5), (1, 0.3)], 2, 4).unwrap();
        let t = combine_target(&teacher, 2).unwrap();
        let r = check_constraints(&t, &teacher, 2);
        assert!(r.overall_ok, "{r:?}");
        assert!(r.c2_ratio_max_rel_err <= RATIO_REL_TOL);
    }

    #[test]
    fn constraints_flag_wrong_argmax() {
        let teacher = SparseTopK::new(vec![(0, 0.9)], 1, 3).unwrap();
        let t = TokenProbDist::raw(vec![0.4, 0.6, 0.0]);
        let r = check_constraints(&t, &teacher, 0);
        assert!(!r.c1_argmax_ok);
        assert!(!r.overall_ok);
    }

    #[test]
    fn constraints_flag_bad_sum() {
        let teacher = SparseTopK::new(vec![], 0, 3).unwrap();
        let t = TokenProbDist::raw(vec![0.5, 0.5, 0.1]);
        let r = check_constraints(&t, &teacher, 0);
        assert!((r.c4_sum_abs_err - 0.1).abs() < 1e-12);
        assert!(!r.overall_ok);
    }

    #[test]
    fn discrepancy_identical_lists_is_zero() {
        let p = dist(&[0.2, 0.8]);
        let q = dist(&[0.6, 0.4]);
        let d = sequence_discrepancy(&[p.clone(), q.clone()], &[p, q]).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn discrepancy_is_mean_of_kls() {
        let targets = vec![dist(&[1.0, 0.0]), dist(&[0.25, 0.75])];
        let students = vec![dist(&[0.5, 0.5]), dist(&[0.25, 0.75])];
        let d = sequence_discrepancy(&targets, &students).unwrap();
        assert!((d - LN2 / 2.0).abs() < 1e-12);

        let single = sequence_discrepancy(&targets[..1], &students[..1]).unwrap();
        assert!((single - LN2).abs() < 1e-12);
    }

    #[test]
    fn discrepancy_rejects_mismatched_lists() {
        let p = dist(&[0.5, 0.5]);
        assert!(sequence_discrepancy(&[], &[]).is_err());
        let one = [p.clone()];
        let two = [p.clone(), p];
        assert!(sequence_discrepancy(&one, &two).is_err());
    }

    #[test]
    fn sparse_validation_rejects_violations() {
        // unsorted
        assert!(SparseTopK::new(vec![(0, 0.2), (1, 0.5)], 2, 4).is_err());
        // duplicate id
        assert!(SparseTopK::new(vec![(1, 0.5), (1, 0.5)], 2, 4).is_err());
        // over k
        assert!(SparseTopK::new(vec![(0, 0.5), (1, 0.3)], 1, 4).is_err());
        // sum above 1
        assert!(SparseTopK::new(vec![(0, 0.9), (1, 0.2)], 2, 4).is_err());
        // id out of range
        assert!(SparseTopK::new(vec![(4, 0.5)], 1, 4).is_err());
        // tie ordering: equal probs must be ascending by id
        assert!(SparseTopK::new(vec![(2, 0.4), (1, 0.4)], 2, 4).is_err());
        assert!(SparseTopK::new(vec![(1, 0.4), (2, 0.4)], 2, 4).is_ok());
    }
}
