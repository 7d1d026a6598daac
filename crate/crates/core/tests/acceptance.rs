//! One PASS/FAIL line per acceptance criterion, written straight to stderr so
//! it shows without `--nocapture`.

mod common;

use std::collections::HashSet;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use cascast::cli::{cmd_eval, cmd_gen, cmd_train, Overrides, RunConfig};
use cascast::data::*;
use cascast::gradcheck::{run_grad_checks, Precision, GRAD_GROUPS};
use cascast::seq2seq::*;
use cascast::{Error, Tensor, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn report(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

fn run(name: &str, failures: &mut Vec<String>, check: impl FnOnce() -> Outcome) {
    let started = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        outcome(false, format!("panicked: {msg}"))
    });
    let tag = if result.passed { "PASS" } else { "FAIL" };
    report(&format!(
        "{tag} {name}: {} [{:.1}s]",
        result.detail,
        started.elapsed().as_secs_f64()
    ));
    if !result.passed {
        failures.push(name.to_string());
    }
}

fn gradient_correctness() -> Outcome {
    let started = Instant::now();
    let mut worst = [0.0f64; 2];
    let mut failed = Vec::new();
    for (k, p) in [Precision::F32, Precision::F64].into_iter().enumerate() {
        let reports = run_grad_checks(p, &[]).unwrap();
        assert_eq!(reports.len(), GRAD_GROUPS.len());
        for r in reports {
            worst[k] = worst[k].max(r.rel_error);
            if !(r.passed && r.rel_error < p.tolerance()) {
                failed.push(format!("{}/{p}", r.group));
            }
        }
    }
    let elapsed = started.elapsed();
    outcome(
        failed.is_empty() && elapsed < Duration::from_secs(60),
        format!(
            "{} groups; worst f32 {:.2e} (< 1e-2), worst f64 {:.2e} (< 1e-5); {:.1}s (< 60s){}",
            GRAD_GROUPS.len(),
            worst[0],
            worst[1],
            elapsed.as_secs_f64(),
            if failed.is_empty() { String::new() } else { format!("; failing {failed:?}") }
        ),
    )
}

fn oracle_equivalences() -> Outcome {
    let checks = [
        ("conv2d", common::conv_error(), 1e-5),
        ("1x1 ConvLSTM vs LSTM", common::convlstm_vs_lstm_error(), 1e-6),
        ("decay vs loop", common::decay_error(), 1e-7),
        ("gamma=1 vs mean12", common::unit_gamma_vs_mean_error(), 1e-7),
        ("mse vs loop", common::mse_error(), 1e-9),
    ];
    let passed = checks.iter().all(|(_, e, tol)| e < tol);
    let detail = checks
        .iter()
        .map(|(n, e, tol)| format!("{n} {e:.1e} (< {tol:.0e})"))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(passed, detail)
}

fn geometry() -> Outcome {
    let g = plan_tiles(495, 436, 62, 73).unwrap();
    let shape_ok = g.num_tiles() == 48 && (g.rows, g.cols) == (8, 6) && (g.pad_h, g.pad_w) == (1, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut cases = 0;
    let mut bad = 0;
    while cases < 1000 {
        let (h, w) = (rng.gen_range(1..=100), rng.gen_range(1..=100));
        let (th, tw) = (rng.gen_range(1..=100), rng.gen_range(1..=100));
        if th > 2 * h || tw > 2 * w {
            continue;
        }
        let grid = plan_tiles(h, w, th, tw).unwrap();
        let f = Tensor4::from_fn([1, 3, h, w], |_, _, _, _| rng.gen::<f32>());
        let back = tile_join(&tile_split(&f, &grid).unwrap(), &grid).unwrap();
        if back.data() != f.data() {
            bad += 1;
        }
        cases += 1;
    }
    outcome(
        shape_ok && bad == 0,
        format!(
            "495x436 / 62x73 -> {}x{} = {} tiles, pads ({}, {}); {cases} random round trips, {bad} mismatches",
            g.rows,
            g.cols,
            g.num_tiles(),
            g.pad_h,
            g.pad_w
        ),
    )
}

fn learning(dir: &Path) -> Outcome {
    let started = Instant::now();
    let cfg = RunConfig {
        out: dir.to_path_buf(),
        ..RunConfig::default()
    };
    cmd_gen(&cfg).unwrap();
    cmd_train(&cfg, None).unwrap();
    let reports = cmd_eval(&cfg).unwrap();
    let elapsed = started.elapsed();
    let (model, persistence, decay) = (reports[0].overall_mse, reports[1].overall_mse, reports[3].overall_mse);
    let (rp, rd) = (model / persistence, model / decay);
    outcome(
        rp <= 0.7 && rd <= 0.9 && elapsed < Duration::from_secs(30 * 60),
        format!(
            "{}x{} synthetic, {} frames, {}-layer {}-channel cascaded, {} steps: model {model:.5}, persistence {persistence:.5} (ratio {rp:.3} <= 0.7), decay {decay:.5} (ratio {rd:.3} <= 0.9); {:.0}s (< 1800s)",
            cfg.synth.height,
            cfg.synth.width,
            cfg.synth.num_frames,
            cfg.model.num_layers,
            cfg.model.hidden_channels,
            cfg.train.max_steps,
            elapsed.as_secs_f64()
        ),
    )
}

fn overfit() -> Outcome {
    let seq = synth_generate(&SynthConfig {
        height: 32,
        width: 32,
        num_frames: 40,
        ..SynthConfig::default()
    })
    .unwrap();
    let ds = TiledDataset::new(&[seq], plan_tiles(32, 32, 8, 8).unwrap()).unwrap();
    let ws = ds.windows(4, 2);
    let b = ds.assemble(&[ws[5], ws[20]], 4, 2).unwrap();
    let model_cfg = StackConfig {
        in_len: 4,
        out_len: 2,
        attention_dim: 8,
        ..StackConfig::default()
    };
    let cfg = TrainConfig {
        lr: 1e-2,
        ..TrainConfig::default()
    };
    let mut tr = Trainer::new(Seq2Seq::init(&model_cfg, 1).unwrap(), cfg, TeacherForcingSchedule::always()).unwrap();
    let first = tr.train_step(&b.inputs, &b.targets).unwrap();
    let mut best = first;
    let mut reached = None;
    for step in 2..=500 {
        let l = tr.train_step(&b.inputs, &b.targets).unwrap();
        best = best.min(l);
        if l <= 1e-3 * first && reached.is_none() {
            reached = Some(step);
        }
    }
    outcome(
        reached.is_some(),
        format!(
            "initial {first:.3e}, best {best:.3e} (ratio {:.2e} <= 1e-3), first reached at step {}",
            best / first,
            reached.map_or("never".into(), |s| s.to_string())
        ),
    )
}

fn attention_contract() -> Outcome {
    let seq = synth_generate(&SynthConfig {
        height: 16,
        width: 16,
        num_frames: 20,
        ..SynthConfig::default()
    })
    .unwrap();
    let ds = TiledDataset::new(&[seq], plan_tiles(16, 16, 8, 8).unwrap()).unwrap();
    let ws = ds.windows(12, 3);
    let b = ds.assemble(&ws[..3], 12, 3).unwrap();
    let model = Seq2Seq::init(&StackConfig::default(), 7).unwrap();
    let enc = model.encode(&b.inputs).unwrap();
    let memory = EncoderMemory::new(enc.hidden.clone()).unwrap();
    let mut states = enc.states;
    let mut prev = b.inputs.last().unwrap().clone();
    let mut worst_sum = 0.0f64;
    for _ in 0..model.config.out_len {
        let (pred, next) = model.decode_step(&prev, &states, &memory).unwrap();
        let top = &next.last().unwrap().h;
        let (_, alphas) = attention_context(&enc.hidden, top, &model.attention).unwrap();
        for a in &alphas {
            assert_eq!(a.len(), 12);
            worst_sum = worst_sum.max((a.iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs());
        }
        states = next;
        prev = pred;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let hs: Vec<Tensor<f64>> = (0..5).map(|_| common::random_tensor(&mut rng, [2, 4, 3, 3])).collect();
    let d = common::random_tensor(&mut rng, [2, 4, 3, 3]);
    let (ctx, _) = attention_context(&hs, &d, &AttentionParams::zeros(4, 6)).unwrap();
    let mean_err = (0..ctx.len())
        .map(|i| (ctx.data()[i] - hs.iter().map(|h| h.data()[i]).sum::<f64>() / 5.0).abs())
        .fold(0.0, f64::max);
    outcome(
        worst_sum < 1e-6 && mean_err < 1e-6,
        format!("|sum(alpha) - 1| <= {worst_sum:.1e} over every decode step (< 1e-6); uniform-score context error {mean_err:.1e} (< 1e-6)"),
    )
}

fn batching_contract() -> Outcome {
    let frames = (0..20)
        .map(|t| Tensor4::from_fn([1, 3, 10, 10], |_, c, y, x| ((t * 11 + c * 3 + y * 10 + x) % 50) as f32 / 49.0))
        .collect();
    let seq = FrameSequence::from_pixels(0, 5, 10, 10, frames).unwrap();
    let grid = plan_tiles(10, 10, 4, 4).unwrap();
    let ds = TiledDataset::new(&[seq], grid).unwrap();
    let mut ok = true;
    let mut total = 0;
    for (in_len, out_len, batch, seed) in [(12, 3, 4, 0), (4, 2, 3, 1), (1, 1, 7, 2), (17, 3, 2, 3)] {
        let expected: HashSet<_> = ds
            .windows(in_len, out_len)
            .into_iter()
            .map(|w| (w.tile, w.sequence, w.start))
            .collect();
        assert_eq!(expected.len(), grid.num_tiles() * (20 - in_len - out_len + 1));
        let mut seen = HashSet::new();
        for b in make_batches(&ds, in_len, out_len, batch, seed).unwrap() {
            ok &= b.windows.iter().all(|w| w.tile == b.tile) && b.windows.len() <= batch;
            for w in &b.windows {
                ok &= seen.insert((w.tile, w.sequence, w.start));
            }
        }
        ok &= seen == expected;
        total += seen.len();
    }
    outcome(
        ok,
        format!("10x10 frames, 20 steps, 3x3 tiles: 4 epoch plans, {total} (tile, window) pairs each covered exactly once, all batches tile-homogeneous"),
    )
}

fn serialization() -> Outcome {
    let seq = synth_generate(&SynthConfig {
        height: 12,
        width: 9,
        num_frames: 5,
        ..SynthConfig::default()
    })
    .unwrap();
    let bytes = frames_to_bytes(&seq);
    let trf_ok = frames_from_bytes(&bytes).map(|s| frames_to_bytes(&s) == bytes).unwrap_or(false);
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    let mut bad_version = bytes.clone();
    bad_version[4] = 7;
    let trf_errors = matches!(frames_from_bytes(&bad_magic), Err(Error::BadMagic { .. }))
        && matches!(frames_from_bytes(&bad_version), Err(Error::UnsupportedVersion { .. }))
        && matches!(frames_from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Truncated { .. }))
        && matches!(frames_from_bytes(&bytes[..10]), Err(Error::Truncated { .. }));

    let model = Seq2Seq::init(&StackConfig::default(), 5).unwrap();
    let ck = checkpoint_to_bytes(&model);
    let ck_ok = checkpoint_from_bytes(&ck).map(|m| m == model && checkpoint_to_bytes(&m) == ck).unwrap_or(false);
    let mut ck_magic = ck.clone();
    ck_magic[1] = b'X';
    let mut ck_version = ck.clone();
    ck_version[4] = 2;
    let ck_errors = matches!(checkpoint_from_bytes(&ck_magic), Err(Error::BadMagic { .. }))
        && matches!(checkpoint_from_bytes(&ck_version), Err(Error::UnsupportedVersion { .. }))
        && matches!(checkpoint_from_bytes(&ck[..ck.len() - 4]), Err(Error::Truncated { .. }));
    outcome(
        trf_ok && trf_errors && ck_ok && ck_errors,
        format!(
            "TRF1 round trip {trf_ok}, header/truncation errors {trf_errors}; GCKP round trip {ck_ok}, header/truncation errors {ck_errors}"
        ),
    )
}

fn reproducibility(data_dir: &Path, root: &Path) -> Outcome {
    let run = |name: &str| {
        let mut cfg = RunConfig {
            out: root.join(name),
            manifest: Some(data_dir.join("data/manifest.toml")),
            seed: 17,
            ..RunConfig::default()
        };
        cfg.apply(&Overrides {
            steps: Some(25),
            ..Overrides::default()
        });
        cmd_train(&cfg, None).unwrap();
        let read = |f: &str| std::fs::read(root.join(name).join(f)).unwrap();
        (read("checkpoint.gckp"), read("loss.csv"))
    };
    let a = run("repro-a");
    let b = run("repro-b");
    outcome(
        a == b,
        format!(
            "two 25-step train runs, seed 17: checkpoints identical {} ({} bytes), loss logs identical {}",
            a.0 == b.0,
            a.0.len(),
            a.1 == b.1
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let learn_dir = dir.path().join("learning");
    let mut failures = Vec::new();
    run("gradient correctness", &mut failures, gradient_correctness);
    run("oracle equivalences", &mut failures, oracle_equivalences);
    run("geometry", &mut failures, geometry);
    run("learning behavior", &mut failures, || learning(&learn_dir));
    run("overfit check", &mut failures, overfit);
    run("attention contract", &mut failures, attention_contract);
    run("batching contract", &mut failures, batching_contract);
    run("serialization", &mut failures, serialization);
    run("reproducibility", &mut failures, || reproducibility(&learn_dir, dir.path()));
    report(&format!("acceptance: {} of 9 criteria passed", 9 - failures.len()));
    assert!(failures.is_empty(), "failed: {failures:?}");
}
