//! Property tests for the distribution kernels and model causality.

use lft_core::distrib::{
    argmax_token, check_constraints, combine_target, kl_divergence, one_hot, sequence_discrepancy,
    softmax_tau, top_k_sparsify, TokenProbDist,
};
use lft_core::model::{init_model, ModelConfig};
use proptest::prelude::*;

fn arb_logits(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-30.0f64..30.0, 1..max_len)
}

/// A random distribution with full support (normalized exponentials).
fn arb_dist(len: usize) -> impl Strategy<Value = TokenProbDist> {
    prop::collection::vec(-8.0f64..8.0, len..=len)
        .prop_map(|logits| softmax_tau(&logits, 1.0).unwrap())
}

proptest! {
    #[test]
    fn softmax_sums_to_one_and_preserves_argmax(
        logits in arb_logits(64),
        tau in 0.05f64..20.0,
    ) {
        let d = softmax_tau(&logits, tau).unwrap();
        let sum: f64 = d.probs().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert_eq!(
            argmax_token(d.probs()).unwrap(),
            argmax_token(&logits).unwrap()
        );
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_self(
        (p, q) in (2usize..32).prop_flat_map(|m| (arb_dist(m), arb_dist(m))),
    ) {
        let kl = kl_divergence(&p, &q).unwrap();
        prop_assert!(kl >= 0.0);
        prop_assert!(kl_divergence(&p, &p).unwrap() <= 1e-12);
    }

    #[test]
    fn top_k_copies_values_verbatim(
        (dist, k) in (2usize..48).prop_flat_map(|m| (arb_dist(m), 0usize..=m)),
    ) {
        let sparse = top_k_sparsify(&dist, k);
        prop_assert!(sparse.entries().len() <= k);
        for &(id, p) in sparse.entries() {
            prop_assert_eq!(p, dist.get(id as usize));
        }
        // Retained entries dominate the dropped ones.
        let min_kept = sparse
            .entries()
            .iter()
            .map(|&(_, p)| p)
            .fold(f64::INFINITY, f64::min);
        if !sparse.entries().is_empty() {
            let kept: Vec<u32> = sparse.entries().iter().map(|e| e.0).collect();
            for (i, &p) in dist.probs().iter().enumerate() {
                if !kept.contains(&(i as u32)) {
                    prop_assert!(p <= min_kept);
                }
            }
        }
    }

    #[test]
    fn combined_target_always_satisfies_the_constraints(
        (dist, k, gt) in (2usize..64)
            .prop_flat_map(|m| (arb_dist(m), 0usize..=m, 0usize..m)),
    ) {
        let teacher = top_k_sparsify(&dist, k);
        let target = combine_target(&teacher, gt).unwrap();
        let report = check_constraints(&target, &teacher, gt);
        prop_assert!(report.overall_ok, "{report:?}");
        prop_assert_eq!(argmax_token(target.probs()).unwrap(), gt);
    }

    #[test]
    fn combine_with_empty_teacher_is_exactly_one_hot(
        (m, gt) in (2usize..64).prop_flat_map(|m| (Just(m), 0usize..m)),
    ) {
        let teacher = top_k_sparsify(&one_hot((gt + 1) % m, m).unwrap(), 0);
        let target = combine_target(&teacher, gt).unwrap();
        let expect = one_hot(gt, m).unwrap();
        prop_assert_eq!(target.probs(), expect.probs());
    }

    #[test]
    fn logits_rows_are_causal(
        (tokens, at, replacement, seed) in (2usize..10).prop_flat_map(|len| {
            (
                prop::collection::vec(0u32..11, len..=len),
                0usize..len,
                0u32..11,
                0u64..50,
            )
        }),
    ) {
        let model = init_model(&ModelConfig {
            vocab_size: 11,
            context_len: 12,
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            seed,
        })
        .unwrap();
        let base = model.forward_logits(&tokens).unwrap();
        let mut changed = tokens.clone();
        changed[at] = replacement;
        let perturbed = model.forward_logits(&changed).unwrap();
        for (j, (b, p)) in base.iter().zip(&perturbed).enumerate().take(at) {
            prop_assert_eq!(b, p, "row {} changed by an edit at {}", j, at);
        }
    }

    #[test]
    fn discrepancy_equals_mean_of_independent_kls(
        pairs in (2usize..16).prop_flat_map(|m| {
            prop::collection::vec((arb_dist(m), arb_dist(m)), 1..6)
        }),
    ) {
        let targets: Vec<TokenProbDist> = pairs.iter().map(|(t, _)| t.clone()).collect();
        let students: Vec<TokenProbDist> = pairs.iter().map(|(_, s)| s.clone()).collect();
        let got = sequence_discrepancy(&targets, &students).unwrap();
        // Oracle: recompute the mean by hand.
        let mut expect = 0.0;
        for (t, s) in &pairs {
            expect += kl_divergence(t, s).unwrap();
        }
        expect /= pairs.len() as f64;
        prop_assert!((got - expect).abs() <= 1e-12);
        let self_d = sequence_discrepancy(&targets, &targets).unwrap();
        prop_assert!(self_d == 0.0);
    }
}
