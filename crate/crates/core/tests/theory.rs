mod common;

use approx::assert_abs_diff_eq;
use common::{naive_sentence_averaged_nll, rng};
use embgeo::corpus::{build_vocabulary, tokenize, EncodedCorpus};
use embgeo::model::{collect_hidden_states, ModelParams};
use embgeo::numerics::DenseMatrix;
use embgeo::theory::decomposition::{rare_token_decomposition, rare_token_decompositions};
use embgeo::theory::extreme::simulate_extreme_case;
use embgeo::theory::hull2d::hull_contains_origin_2d;
use embgeo::theory::instances::{
    extreme_case_instance, feasible_instance, mirrored, points_to_matrix, random_2d_instance, symmetric_instance,
    ExtremeInstanceSpec,
};
use embgeo::theory::layernorm_check::layernorm_origin_check;
use embgeo::theory::negdir::{
    direction_margin, find_negative_direction, is_uniformly_negative, DEFAULT_MAX_ITERS, DEFAULT_TOLERANCE,
};
use embgeo::theory::perturbation::{check_perturbation_params, perturbation_rhs, verify_perturbation_bound};
use embgeo::Error;
use proptest::prelude::*;
use rand::Rng;

fn verdict(states: &DenseMatrix) -> bool {
    find_negative_direction(states, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERS)
        .unwrap()
        .feasible
}

#[test]
fn hull_oracle_basic_cases() {
    assert!(hull_contains_origin_2d(&[[1.0, 0.0], [-1.0, 1.0], [-1.0, -1.0]]));
    assert!(!hull_contains_origin_2d(&[[1.0, 0.0], [2.0, 1.0], [1.5, -1.0]]));
    // origin on an edge counts as contained
    assert!(hull_contains_origin_2d(&[[1.0, 0.0], [-1.0, 0.0]]));
    assert!(hull_contains_origin_2d(&[[0.0, 0.0]]));
    assert!(!hull_contains_origin_2d(&[[0.5, 0.5]]));
}

#[test]
fn negative_direction_agrees_with_hull_oracle() {
    let mut feasible = 0;
    for seed in 0..100 {
        let pts = random_2d_instance(seed);
        let expect = !hull_contains_origin_2d(&pts);
        let m = points_to_matrix(&pts);
        let cert = find_negative_direction(&m, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERS).unwrap();
        assert_eq!(cert.feasible, expect, "seed {seed}");
        if cert.feasible {
            feasible += 1;
            let v = cert.direction.as_ref().unwrap();
            assert!(is_uniformly_negative(&m, v));
            assert!(direction_margin(&m, v) < 0.0);
        } else {
            let lambda = cert.witness_lambda.as_ref().unwrap();
            assert_abs_diff_eq!(lambda.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
            assert!(lambda.iter().all(|&l| l >= 0.0));
        }
    }
    assert!(feasible > 0 && feasible < 100, "instances should exercise both verdicts");
}

#[test]
fn high_dimensional_instances() {
    for dim in 3..=16 {
        for seed in 0..4 {
            assert!(verdict(&feasible_instance(dim, 30, seed)), "feasible dim {dim}");
            assert!(!verdict(&symmetric_instance(dim, 15, seed)), "symmetric dim {dim}");
        }
    }
}

#[test]
fn zero_state_is_rejected() {
    let m = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
    assert!(matches!(
        find_negative_direction(&m, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERS),
        Err(Error::ZeroRow { row: 1, .. })
    ));
}

#[test]
fn zero_budget_is_indeterminate() {
    let m = DenseMatrix::from_rows(&[[1.0, 0.0], [-1.0, 1e-3]]).unwrap();
    assert!(matches!(
        find_negative_direction(&m, DEFAULT_TOLERANCE, 0),
        Err(Error::Indeterminate { iterations: 0, .. })
    ));
}

#[test]
fn extreme_case_diverges_only_when_feasible() {
    let inst = extreme_case_instance(&ExtremeInstanceSpec::default());
    assert!(verdict(&inst.states));
    let t = simulate_extreme_case(&inst.states, &inst.fixed_embeddings, 10_000, 0.1, 0.0).unwrap();
    assert_eq!(t.norms.len(), 10_001);
    assert!(t.strictly_increasing_from(1000));
    assert!(*t.norms.last().unwrap() > 1e3);
    assert!((t.objective.last().unwrap() - t.limit).abs() <= 1e-3);

    let m = mirrored(&inst);
    assert!(!verdict(&m.states));
    let tm = simulate_extreme_case(&m.states, &m.fixed_embeddings, 10_000, 0.1, 0.0).unwrap();
    let sup = tm.norms.iter().copied().fold(0.0, f64::max);
    assert!(sup < 10.0 * tm.norms[100]);
}

#[test]
fn weight_decay_keeps_norm_bounded() {
    let inst = extreme_case_instance(&ExtremeInstanceSpec::default());
    let t = simulate_extreme_case(&inst.states, &inst.fixed_embeddings, 2000, 0.1, 0.1).unwrap();
    assert!(*t.norms.last().unwrap() < 1e3);
    assert!(simulate_extreme_case(&inst.states, &inst.fixed_embeddings, 10, 0.0, 0.0).is_err());
}

#[test]
fn downsampled_trace_keeps_endpoints() {
    let inst = extreme_case_instance(&ExtremeInstanceSpec::default());
    let t = simulate_extreme_case(&inst.states, &inst.fixed_embeddings, 50, 0.1, 0.0).unwrap();
    let d = t.downsampled(7);
    assert_eq!(d.len(), 7);
    assert_eq!(d[0].0, 0);
    assert_eq!(d.last().unwrap().0, 50);
}

#[test]
fn perturbation_worked_case() {
    assert_abs_diff_eq!(perturbation_rhs(2.0, 0.5, 0.5, 0.1), 0.2 / 1.75, epsilon = 1e-15);
    assert_abs_diff_eq!(perturbation_rhs(2.0, 0.5, 0.5, 0.1), 0.114286, epsilon = 1e-6);
    let r = verify_perturbation_bound(2.0, 0.5, 0.5, 0.1, 3, 3).unwrap();
    assert!(r.holds);
    assert!(r.strong_convexity_holds);
    assert!(r.final_gradient_norm < 1e-10);
    assert!(r.lhs <= r.rhs);
}

#[test]
fn perturbation_rejects_large_epsilon() {
    assert!(check_perturbation_params(2.0, 0.5, 0.5, 0.8).is_err());
    assert!(check_perturbation_params(2.0, 0.5, 0.5, 0.0).is_ok());
    assert!(verify_perturbation_bound(2.0, 0.5, 0.5, 0.8, 0, 3).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn perturbation_bound_holds(seed in any::<u64>()) {
        let mut r = rng(seed);
        let alpha = r.gen_range(0.5..5.0);
        let beta = r.gen_range(0.1..3.0);
        let b = r.gen_range(0.1..2.0);
        let eps = r.gen_range(0.0..0.9) * alpha / (alpha + beta);
        let dim = r.gen_range(1..6);
        let rep = verify_perturbation_bound(alpha, beta, b, eps, seed, dim).unwrap();
        prop_assert!(rep.holds, "{rep:?}");
    }
}

fn toy_corpus() -> (embgeo::corpus::Vocabulary, EncodedCorpus) {
    let text = "the cat sat on the mat\nthe dog ate the bone\na rare zebra sat\n\nthe cat ate\nzebra\nthe mat is on the dog";
    let vocab = build_vocabulary(tokenize(text), 100, 1).unwrap();
    let corpus = EncodedCorpus::from_text(text, &vocab);
    (vocab, corpus)
}

#[test]
fn decomposition_matches_independent_nll() {
    let (vocab, corpus) = toy_corpus();
    let mut p = ModelParams::init(vocab.len(), 6, true, 4).unwrap();
    p.ln_bias.iter_mut().enumerate().for_each(|(i, b)| *b = 0.1 * i as f64 - 0.2);
    let expect = naive_sentence_averaged_nll(&p, &corpus, 3);
    let tokens: Vec<usize> = ["zebra", "cat", "the", "bone", "is"].iter().map(|t| vocab.id(t)).collect();
    for rep in rare_token_decompositions(&p, &corpus, 3, &tokens).unwrap() {
        assert_abs_diff_eq!(rep.total, expect, epsilon = 1e-10);
        assert_abs_diff_eq!(rep.p_a + rep.p_b, 1.0, epsilon = 1e-15);
    }
    let z = rare_token_decomposition(&p, &corpus, 3, vocab.id("zebra")).unwrap();
    assert_eq!(z.sentences_b, 2);
    assert_eq!(z.states_b, 5);
}

#[test]
fn decomposition_of_absent_token() {
    let (vocab, corpus) = toy_corpus();
    let p = ModelParams::init(vocab.len(), 4, false, 1).unwrap();
    let r = rare_token_decomposition(&p, &corpus, 2, vocab.unk_id()).unwrap();
    assert_eq!(r.loss_b, None);
    assert_eq!(r.p_b, 0.0);
    assert!(rare_token_decomposition(&p, &corpus, 2, vocab.len() + 5).is_err());
}

#[test]
fn layer_norm_constant_bias_is_separable() {
    let (vocab, corpus) = toy_corpus();
    let mut p = ModelParams::init(vocab.len(), 8, true, 9).unwrap();
    p.ln_bias = vec![0.3; 8];
    let batch = collect_hidden_states(&p, &corpus, 3, 1000, 0).unwrap();
    let rep = layernorm_origin_check(&p, &batch, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERS).unwrap();
    assert!(rep.identity_holds);
    assert!(rep.centered_sum_max < 1e-10);
    assert_abs_diff_eq!(rep.b_over_g_dot_one, 8.0 * 0.3 / p.ln_gain[0], epsilon = 1e-12);
    assert!(rep.hull_verdict.feasible);

    p.use_layer_norm = false;
    assert!(layernorm_origin_check(&p, &batch, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERS).is_err());
}
