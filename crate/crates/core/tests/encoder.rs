mod common;

use common::checks::{encoder_contracts, loss_gradient_error, random_batch, relative_error};
use common::*;
use dreim_core::encoder::{encode, encode_backward, encode_embeddings, EncoderParams};
use dreim_core::qnet::{loss_and_gradients, Experience, QNetParams, QNetwork};
use ndarray::Array2;
use rand::Rng as _;

#[test]
fn rows_unit_norm_and_permutation_equivariant() {
    for case in 0..20 {
        let (norm_dev, equi) = encoder_contracts(case);
        assert!(norm_dev <= 1e-9, "case {case}: norm deviation {norm_dev}");
        assert!(equi <= 1e-9, "case {case}: equivariance gap {equi}");
    }
}

#[test]
fn embedding_depends_only_on_l_hop_ball() {
    // path 0-1-2-3-4-5-6; with L = 2 node 0 cannot see a seed at node 4
    let n = 7;
    let (g, _) = dreim_core::Graph::from_edges(n, (0..n - 1).map(|i| (i, i + 1)), false);
    let params = EncoderParams::init(8, 0.5, &mut rng_for(1)).unwrap();
    let base = encode_embeddings(&g, &[false; 7], &params, 2).unwrap();
    let mut mask = [false; 7];
    mask[4] = true;
    let seeded = encode_embeddings(&g, &mask, &params, 2).unwrap();
    assert_eq!(base.node(0), seeded.node(0));
    assert_eq!(base.node(1), seeded.node(1));
    assert_ne!(base.node(2), seeded.node(2));
}

#[test]
fn encoder_backward_matches_finite_differences() {
    for case in 0..5 {
        let mut rng = rng_for(500 + case);
        let n = 7;
        let g = random_graph(&mut rng, n, 0.4, case % 2 == 0);
        let mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
        let params = EncoderParams::init(6, 0.6, &mut rng).unwrap();
        let proj = Array2::from_shape_fn((n + 1, 6), |_| rng.gen_range(-1.0..1.0));
        let objective = |p: &EncoderParams| (&encode_embeddings(&g, &mask, p, 2).unwrap().z() * &proj).sum();
        let table = encode(&g, &mask, &params, 2).unwrap();
        let mut grads = EncoderParams::zeros(6);
        encode_backward(&g, &table, &params, &proj, &mut grads).unwrap();
        let analytic: Vec<f64> = grads.iter().flat_map(|t| t.iter().copied()).collect();
        let mut numeric = Vec::new();
        let h = 1e-6;
        for t in 0..3 {
            let len = params.iter().nth(t).unwrap().len();
            for i in 0..len {
                let mut up = params.clone();
                *up.iter_mut().nth(t).unwrap().iter_mut().nth(i).unwrap() += h;
                let mut down = params.clone();
                *down.iter_mut().nth(t).unwrap().iter_mut().nth(i).unwrap() -= h;
                numeric.push((objective(&up) - objective(&down)) / (2.0 * h));
            }
        }
        let err = relative_error(&analytic, &numeric);
        assert!(err <= 1e-4, "case {case}: relative error {err}");
    }
}

#[test]
fn full_loss_gradient_matches_finite_differences() {
    for case in 0..4 {
        let err = loss_gradient_error(case, 8, 6, 2);
        assert!(err <= 1e-4, "case {case}: relative error {err}");
    }
}

#[test]
fn duplicated_transition_doubles_summed_gradient() {
    let mut rng = rng_for(77);
    let exps = random_batch(&mut rng, 6, 1);
    let params = QNetParams::new(QNetwork::init(8, 2, 0.6, &mut rng).unwrap());
    let single: Vec<&Experience> = vec![&exps[0]];
    let double: Vec<&Experience> = vec![&exps[0], &exps[0]];
    let (l1, g1) = loss_and_gradients(&single, &params, 1.0, 0.1).unwrap();
    let (l2, g2) = loss_and_gradients(&double, &params, 1.0, 0.1).unwrap();
    // the batch mean is unchanged by duplication: sum of two halves equals one whole
    assert!((l1 - l2).abs() <= 1e-15 * l1.abs().max(1.0));
    for (a, b) in g1.tensors().iter().zip(g2.tensors()) {
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() <= 1e-15 * x.abs().max(1e-300), "{x} vs {y}");
        }
    }
}
