//! Oracle measurements shared by the oracle and acceptance tests. Each returns
//! the largest absolute deviation from a direct implementation.

#![allow(dead_code)]

use cascast::cells::{convlstm_step, vanilla_lstm_step, CellFlavor, CellParams, ConvLstmState, VanillaParams, VanillaState};
use cascast::conv::{conv2d, ConvKernel};
use cascast::eval::{decay_average_predict, mean_predict, pixelwise_mse, DecayAverageConfig};
use cascast::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_tensor(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor<f64> {
    Tensor::from_fn(dims, |_, _, _, _| rng.gen_range(-1.0..1.0))
}

pub fn random_frames(rng: &mut ChaCha8Rng, n: usize) -> Vec<Tensor<f32>> {
    (0..n)
        .map(|_| Tensor::from_fn([2, 3, 4, 5], |_, _, _, _| rng.gen_range(0.0..1.0f32)))
        .collect()
}

fn max_diff<'a>(a: impl IntoIterator<Item = f64>, b: impl IntoIterator<Item = f64> + 'a) -> f64 {
    a.into_iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, bias: &[f64]) -> Tensor<f64> {
    let [b, ci, h, wd] = x.dims();
    let [co, _, kh, kw] = w.dims();
    let (ph, pw) = (kh as isize / 2, kw as isize / 2);
    Tensor::from_fn([b, co, h, wd], |n, o, y, xx| {
        let mut s = bias[o];
        for c in 0..ci {
            for dy in 0..kh {
                for dx in 0..kw {
                    let sy = y as isize + dy as isize - ph;
                    let sx = xx as isize + dx as isize - pw;
                    if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < wd {
                        s += w.at(o, c, dy, dx) * x.at(n, c, sy as usize, sx as usize);
                    }
                }
            }
        }
        s
    })
}

/// conv2d in f32 and f64 against nested loops over several shapes.
pub fn conv_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for &(b, ci, co, h, w, k) in &[(1, 1, 1, 1, 1, 1), (2, 3, 4, 5, 7, 3), (1, 2, 3, 6, 4, 5), (3, 4, 2, 2, 2, 3)] {
        let x = random_tensor(&mut rng, [b, ci, h, w]);
        let wt = random_tensor(&mut rng, [co, ci, k, k]);
        let bias: Vec<f64> = (0..co).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let expect = naive_conv(&x, &wt, &bias);
        let got = conv2d(&x, &ConvKernel::new(wt.clone(), bias.clone()).unwrap()).unwrap();
        worst = worst.max(max_diff(got.data().iter().copied(), expect.data().iter().copied()));
        let k32 = ConvKernel::new(wt.cast::<f32>(), bias.iter().map(|&v| v as f32).collect()).unwrap();
        let got32 = conv2d(&x.cast::<f32>(), &k32).unwrap();
        worst = worst.max(max_diff(got32.data().iter().map(|&v| v as f64), expect.data().iter().copied()));
    }
    worst
}

/// A 1x1 ConvLSTM on 1x1 maps against a vector LSTM with the same weights, over 5 steps.
pub fn convlstm_vs_lstm_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n_in, d) = (3, 4);
    let vanilla = VanillaParams::<f64> {
        b: (0..4 * d).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        ..VanillaParams::init(n_in, d, &mut rng)
    };
    let mut cell = CellParams::<f64>::zeros(CellFlavor::ConvLstm, n_in, d, 1);
    for r in 0..4 * d {
        for c in 0..n_in {
            cell.outer.input_kernel.set(r, c, 0, 0, vanilla.w[r * n_in + c]);
        }
        for c in 0..d {
            cell.outer.state_kernel.set(r, c, 0, 0, vanilla.u[r * d + c]);
        }
    }
    cell.outer.bias = vanilla.b.clone();
    let mut vs = VanillaState {
        h: (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        c: (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect(),
    };
    let mut cs = ConvLstmState {
        h: Tensor::new([1, d, 1, 1], vs.h.clone()).unwrap(),
        c: Tensor::new([1, d, 1, 1], vs.c.clone()).unwrap(),
    };
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let x: Vec<f64> = (0..n_in).map(|_| rng.gen_range(-1.0..1.0)).collect();
        vs = vanilla_lstm_step(&x, &vs, &vanilla).unwrap();
        cs = convlstm_step(&Tensor::new([1, n_in, 1, 1], x).unwrap(), &cs, &cell).unwrap();
        worst = worst.max(max_diff(cs.h.data().iter().copied(), vs.h.iter().copied()));
        worst = worst.max(max_diff(cs.c.data().iter().copied(), vs.c.iter().copied()));
    }
    worst
}

/// Decay average against a direct weighted loop for several windows and factors.
pub fn decay_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let hist = random_frames(&mut rng, 15);
    let mut worst = 0.0f64;
    for &(window, gamma) in &[(12, 0.9), (1, 0.5), (5, 0.3), (12, 1.0)] {
        let pred = decay_average_predict(&hist, &DecayAverageConfig { window, gamma }, 3).unwrap();
        let norm: f64 = (0..window).map(|k| gamma.powi(k as i32)).sum();
        for idx in 0..hist[0].len() {
            let mut s = 0.0f64;
            for k in 0..window {
                s += gamma.powi(k as i32) * hist[hist.len() - 1 - k].data()[idx] as f64;
            }
            for p in &pred {
                worst = worst.max((p.data()[idx] as f64 - s / norm).abs());
            }
        }
    }
    worst
}

/// Decay average with gamma = 1 against the 12-frame mean.
pub fn unit_gamma_vs_mean_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let hist = random_frames(&mut rng, 12);
    let decay = decay_average_predict(&hist, &DecayAverageConfig { window: 12, gamma: 1.0 }, 2).unwrap();
    let mean = mean_predict(&hist, 12, 2).unwrap();
    decay
        .iter()
        .zip(&mean)
        .map(|(a, b)| max_diff(a.data().iter().map(|&v| v as f64), b.data().iter().map(|&v| v as f64)))
        .fold(0.0, f64::max)
}

/// Pixel-wise MSE against a scalar loop.
pub fn mse_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = random_frames(&mut rng, 3);
    let b = random_frames(&mut rng, 3);
    let (mut s, mut n) = (0.0f64, 0usize);
    for (x, y) in a.iter().zip(&b) {
        for (p, q) in x.data().iter().zip(y.data()) {
            s += (*p as f64 - *q as f64).powi(2);
            n += 1;
        }
    }
    (pixelwise_mse(&a, &b).unwrap() - s / n as f64).abs()
}
