mod common;

use cascast::seq2seq::{attention_context, attention_score, AttentionParams};
use cascast::Tensor;
use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn conv_matches_nested_loops() {
    let err = conv_error();
    assert!(err < 1e-5, "{err}");
}

#[test]
fn one_by_one_convlstm_is_a_vector_lstm() {
    let err = convlstm_vs_lstm_error();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn decay_average_matches_direct_sum() {
    let err = decay_error();
    assert!(err < 1e-7, "{err}");
}

#[test]
fn decay_with_unit_gamma_equals_window_mean() {
    let err = unit_gamma_vs_mean_error();
    assert!(err < 1e-7, "{err}");
}

#[test]
fn mse_matches_scalar_loop() {
    let err = mse_error();
    assert!(err < 1e-9, "{err}");
}

#[test]
fn attention_weights_are_a_softmax_of_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let hs: Vec<Tensor<f64>> = (0..6).map(|_| random_tensor(&mut rng, [3, 4, 5, 5])).collect();
    let d = random_tensor(&mut rng, [3, 4, 5, 5]);
    let params = AttentionParams::init(4, 8, &mut rng);
    let (ctx, alphas) = attention_context(&hs, &d, &params).unwrap();
    assert_eq!(alphas.len(), 3);
    for (b, a) in alphas.iter().enumerate() {
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(a.iter().all(|&v| v > 0.0));
        let scores: Vec<f64> = hs.iter().map(|h| attention_score(h, &d, &params).unwrap()[b]).collect();
        let max = scores.iter().cloned().fold(f64::MIN, f64::max);
        let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
        for (t, s) in scores.iter().enumerate() {
            assert!((a[t] - (s - max).exp() / z).abs() < 1e-12);
        }
        for i in 0..ctx.sample_len() {
            let expect: f64 = hs.iter().zip(a).map(|(h, w)| w * h.sample(b)[i]).sum();
            assert!((ctx.sample(b)[i] - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn score_matches_pooled_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = random_tensor(&mut rng, [1, 2, 3, 3]);
    let d = random_tensor(&mut rng, [1, 2, 3, 3]);
    let params = AttentionParams::<f64>::init(2, 3, &mut rng);
    let pool = |t: &Tensor<f64>, c: usize| t.sample(0)[c * 9..(c + 1) * 9].iter().sum::<f64>() / 9.0;
    let feat = [pool(&h, 0), pool(&h, 1), pool(&d, 0), pool(&d, 1)];
    let expect: f64 = (0..3)
        .map(|j| params.v_alpha[j] * (0..4).map(|k| params.w_alpha[j * 4 + k] * feat[k]).sum::<f64>().tanh())
        .sum();
    assert!((attention_score(&h, &d, &params).unwrap()[0] - expect).abs() < 1e-12);
}

#[test]
fn zero_scores_give_the_mean_context() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let hs: Vec<Tensor<f64>> = (0..4).map(|_| random_tensor(&mut rng, [2, 3, 4, 4])).collect();
    let d = random_tensor(&mut rng, [2, 3, 4, 4]);
    let params = AttentionParams::zeros(3, 5);
    let (ctx, alphas) = attention_context(&hs, &d, &params).unwrap();
    assert!(alphas.iter().flatten().all(|&a| (a - 0.25).abs() < 1e-15));
    for i in 0..ctx.len() {
        let mean = hs.iter().map(|h| h.data()[i]).sum::<f64>() / 4.0;
        assert!((ctx.data()[i] - mean).abs() < 1e-12);
    }
}
