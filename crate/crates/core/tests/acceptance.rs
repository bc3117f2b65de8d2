//! Acceptance criteria 1-9. Runs as a plain binary (no libtest harness) so
//! every criterion prints exactly one PASS/FAIL line.

use std::path::Path;
use std::process::Command;
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::json;

use tsca::augment::{apply_crop_resize, sample_crop, CropResizeConfig};
use tsca::dataio::synthetic::{generate, Family, SyntheticSpec};
use tsca::dataio::Preprocess;
use tsca::encoder::{
    init_params, loss_and_gradients, EncoderConfig, EncoderParams, LossOptions, Tensor,
};
use tsca::evaluate::{
    ca_round_batches, ca_view_crops, contrastive_accuracy, contrastive_accuracy_with, fit_probe,
    CAConfig, ProbeConfig,
};
use tsca::harness::checkpoint::{decode_header, MAGIC};
use tsca::harness::{
    decode_checkpoint, load_checkpoint, run_subset_experiment, save_checkpoint, ExperimentConfig,
    Overrides,
};
use tsca::training::{
    adamw_update, info_nce, pretrain_with, AdamWConfig, Exec, LrSchedule, OptimizerState,
    TrainConfig,
};
use tsca::{CheckpointError, Error};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

// ---------------------------------------------------------------- 1

fn criterion_1() -> Outcome {
    let cfg = EncoderConfig::tiny();
    assert_eq!(
        (
            cfg.layers,
            cfg.token_dim,
            cfg.heads,
            cfg.head_dim,
            cfg.mlp_dim,
            cfg.tokens,
            cfg.stat_dim
        ),
        (2, 8, 2, 8, 16, 4, 4)
    );
    let params = init_params(&cfg, 11).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let batch: Vec<Vec<f64>> = (0..3).map(|_| gaussian(&mut rng, cfg.seq_len)).collect();
    let aug = CropResizeConfig {
        out_len: cfg.seq_len,
        ..CropResizeConfig::default()
    };
    let draws: Vec<_> = (0..6)
        .map(|_| sample_crop(&mut rng, &aug, cfg.seq_len))
        .collect();
    let opts = LossOptions::default();
    let loss = |p: &EncoderParams| loss_and_gradients(p, &batch, &draws, &opts).unwrap().0;
    let (_, grads) =
        loss_and_gradients(&params, &batch, &draws, &opts).map_err(|e| e.to_string())?;

    let h = 1e-4;
    let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
    let analytic: Vec<Tensor> = grads
        .named_tensors()
        .into_iter()
        .map(|(_, t)| t.clone())
        .collect();
    let mut worst = (0.0f64, String::new());
    let mut probe = params.clone();
    for (ti, name) in names.iter().enumerate() {
        let len = analytic[ti].data.len();
        let mut numeric = vec![0.0; len];
        for j in 0..len {
            let orig = probe.tensors_mut()[ti].data[j];
            probe.tensors_mut()[ti].data[j] = orig + h;
            let up = loss(&probe);
            probe.tensors_mut()[ti].data[j] = orig - h;
            let down = loss(&probe);
            probe.tensors_mut()[ti].data[j] = orig;
            numeric[j] = (up - down) / (2.0 * h);
        }
        let a = &analytic[ti].data;
        let diff = a
            .iter()
            .zip(&numeric)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let scale = a
            .iter()
            .chain(&numeric)
            .map(|v| v.abs())
            .fold(1e-6, f64::max);
        let rel = diff / scale;
        if rel > worst.0 {
            worst = (rel, name.clone());
        }
    }
    check(
        worst.0 < 1e-3,
        format!(
            "{} tensors, max relative error {:.2e} ({})",
            names.len(),
            worst.0,
            worst.1
        ),
    )
}

// ---------------------------------------------------------------- 2

fn explicit_info_nce(sim: &[Vec<f64>], t: f64) -> f64 {
    let mut total = 0.0;
    for (i, row) in sim.iter().enumerate() {
        let denom: f64 = row.iter().map(|s| (s / t).exp()).sum();
        let p = (row[i] / t).exp() / denom;
        total += -p.ln();
    }
    total
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for k in 0..100 {
        let b = rng.gen_range(2..=8);
        let t = if k % 2 == 0 { 0.1 } else { 1.0 };
        let sim: Vec<Vec<f64>> = (0..b)
            .map(|_| (0..b).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let got = info_nce(&sim, t).map_err(|e| e.to_string())?;
        worst = worst.max((got - explicit_info_nce(&sim, t)).abs());
    }
    let single = info_nce(&[vec![0.4]], 0.1).map_err(|e| e.to_string())?;
    let uniform_err = (2..=8)
        .map(|b| {
            let sim = vec![vec![0.3; b]; b];
            (info_nce(&sim, 0.1).unwrap() - b as f64 * (b as f64).ln()).abs()
        })
        .fold(0.0, f64::max);
    check(
        worst < 1e-6 && single.abs() < 1e-12 && uniform_err < 1e-6,
        format!(
            "max |diff| {worst:.2e}, b=1 loss {single:.1e}, uniform b ln b error {uniform_err:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- 3

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Exhaustive nearest-neighbour count over the same crops and batches.
fn nn_oracle(
    series: &[Vec<f64>],
    project: &dyn Fn(&[f64]) -> Vec<f64>,
    aug: &CropResizeConfig,
    cfg: &CAConfig,
) -> f64 {
    let mut acc = 0.0;
    for round in 0..cfg.draws {
        let (mut hits, mut seen) = (0usize, 0usize);
        for ids in ca_round_batches(series.len(), cfg, round) {
            let views: Vec<(Vec<f64>, Vec<f64>)> = ids
                .iter()
                .map(|&i| {
                    let (phi, psi) = ca_view_crops(aug, cfg, round, i, series[i].len());
                    (
                        project(&apply_crop_resize(&phi, &series[i]).unwrap()),
                        project(&apply_crop_resize(&psi, &series[i]).unwrap()),
                    )
                })
                .collect();
            for (i, (q, _)) in views.iter().enumerate() {
                let mut best = 0;
                let mut best_sim = f64::NEG_INFINITY;
                for (j, (_, k)) in views.iter().enumerate() {
                    let s = cosine(q, k);
                    if s > best_sim {
                        best_sim = s;
                        best = j;
                    }
                }
                hits += usize::from(best == i);
            }
            seen += ids.len();
        }
        acc += hits as f64 / seen as f64;
    }
    acc / cfg.draws as f64
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let len = 24;
    let aug = CropResizeConfig {
        out_len: len,
        ..CropResizeConfig::default()
    };
    // fixed random map from views to 6-dim "embeddings"
    let w: Vec<Vec<f64>> = (0..6).map(|_| gaussian(&mut rng, len)).collect();
    let stub = |v: &[f64]| -> Vec<f64> {
        w.iter()
            .map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    };
    let mut mismatches = Vec::new();
    let mut cases = 0;
    for n in [2usize, 3, 7, 16, 25, 32] {
        for batch in [2usize, 5, 8, 32] {
            let series: Vec<Vec<f64>> = (0..n).map(|_| gaussian(&mut rng, len)).collect();
            let cfg = CAConfig {
                draws: 4,
                eval_batch: batch,
                seed: (n * 100 + batch) as u64,
            };
            let proj = |v: &[f64]| -> tsca::Result<Vec<f64>> { Ok(stub(v)) };
            let got = contrastive_accuracy_with(&proj, &series, &aug, &cfg, 1)
                .map_err(|e| e.to_string())?;
            let want = nn_oracle(&series, &stub, &aug, &cfg);
            cases += 1;
            if got != want {
                mismatches.push(format!("n={n} batch={batch}: {got} vs {want}"));
            }
        }
    }
    let mut degenerate_ok = true;
    for n in [2usize, 9, 32] {
        let series: Vec<Vec<f64>> = (0..n).map(|_| gaussian(&mut rng, len)).collect();
        let same = |_: &[f64]| -> tsca::Result<Vec<f64>> { Ok(vec![1.0, -2.0, 0.5]) };
        let cfg = CAConfig {
            draws: 3,
            eval_batch: 256,
            seed: 1,
        };
        let ca =
            contrastive_accuracy_with(&same, &series, &aug, &cfg, 1).map_err(|e| e.to_string())?;
        degenerate_ok &= ca == 1.0 / n as f64;
    }
    check(
        mismatches.is_empty() && degenerate_ok,
        format!(
            "{cases} cases exact, identical-embedding case 1/n: {degenerate_ok}{}",
            if mismatches.is_empty() {
                String::new()
            } else {
                format!("; mismatches: {}", mismatches.join(", "))
            }
        ),
    )
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let n = 256;
    let draws = 40;
    let series: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64; 8]).collect();
    let rng = Mutex::new(ChaCha8Rng::seed_from_u64(4));
    let random =
        |_: &[f64]| -> tsca::Result<Vec<f64>> { Ok(gaussian(&mut rng.lock().unwrap(), 256)) };
    let cfg = CAConfig {
        draws,
        eval_batch: n,
        seed: 4,
    };
    let ca = contrastive_accuracy_with(&random, &series, &CropResizeConfig::identity(8), &cfg, 1)
        .map_err(|e| e.to_string())?;
    let trials = (n * draws) as f64;
    let p = 1.0 / n as f64;
    let se = (p * (1.0 - p) / trials).sqrt();
    let z = (ca - p) / se;
    check(
        z.abs() <= 3.0 && trials >= 1e4,
        format!("{trials} trials, estimate {ca:.5} vs 1/256 = {p:.5}, z = {z:.2}"),
    )
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let pre = Preprocess::default();
    let spec = SyntheticSpec {
        family: Family::Waveforms,
        train: 300,
        test: 200,
        seed: 0,
        ..SyntheticSpec::default()
    };
    let data = generate(&spec, &pre).map_err(|e| e.to_string())?;
    let mut cfg =
        ExperimentConfig::resolve(Some(json!({"profile": "desk"})), &Overrides::default())
            .map_err(|e| e.to_string())?;
    cfg.encoder = EncoderConfig::compact();
    cfg.train.epochs = 50;
    cfg.train.batch = 64;
    let ckpt = pretrain_with(
        &data,
        &cfg.train,
        &cfg.encoder,
        &cfg.augment,
        Exec::default(),
    )
    .map_err(|e| e.to_string())?;
    let losses = &ckpt.provenance.epoch_losses;
    let (first, last) = (losses[0], *losses.last().unwrap());
    let ca = contrastive_accuracy(&ckpt, &data.test, &cfg.ca).map_err(|e| e.to_string())?;
    // linear probe: frozen encoder, fresh norm + linear head
    let probe = ProbeConfig {
        freeze_encoder: true,
        lr: 1e-3,
        batch: 32,
        ..cfg.probe.clone()
    };
    let outcome = fit_probe(&ckpt, &data, &probe).map_err(|e| e.to_string())?;
    let baseline = 1.0 / cfg.train.batch as f64;
    let (a, b, c) = (
        last <= 0.7 * first,
        ca >= 5.0 * baseline,
        outcome.test_accuracy >= 0.90,
    );
    check(
        a && b && c,
        format!(
            "(a) loss {first:.2} -> {last:.2} ratio {:.3} [{}]; (b) CA {ca:.3} vs 5/64 = {:.3} [{}]; (c) probe test accuracy {:.3} [{}]; {:.0}s",
            last / first,
            if a { "ok" } else { "fail" },
            5.0 * baseline,
            if b { "ok" } else { "fail" },
            outcome.test_accuracy,
            if c { "ok" } else { "fail" },
            start.elapsed().as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let file = json!({
        "profile": "desk",
        "encoder": {"cnn_channels": 32, "token_dim": 32, "layers": 2, "heads": 4, "head_dim": 8,
                    "mlp_dim": 64, "stat_dim": 8, "proj_hidden": 64, "proj_out": 32},
        "subset": {
            "dataset": "synthetic:waveforms:300:100:0",
            "ratios": [0.25, 0.5, 0.75, 1.0],
            "downstream": [
                "synthetic:waveforms:90:300:11:0.5",
                "synthetic:waveforms:90:300:12:1.0",
                "synthetic:waveforms:90:300:13:1.5"
            ]
        }
    });
    let cfg =
        ExperimentConfig::resolve(Some(file), &Overrides::default()).map_err(|e| e.to_string())?;
    assert_eq!((cfg.train.epochs, cfg.probe.epochs), (100, 100));
    let report = run_subset_experiment(&cfg).map_err(|e| e.to_string())?;
    let rows: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{}: ca {:.3} p_test {:.3}", r.condition, r.ca, r.p_test))
        .collect();
    let rho = report.summary.get("rho_ca_p_test").copied();
    check(
        rho.is_some_and(|r| r > 0.0),
        format!(
            "rho(CA, P_test) = {:?}; {}; {:.0}s",
            rho,
            rows.join(", "),
            start.elapsed().as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("config.json");
    let body = json!({
        "encoder": {"seq_len": 64, "tokens": 4, "cnn_channels": 8, "token_dim": 16, "layers": 1, "heads": 2, "head_dim": 8,
                    "mlp_dim": 32, "stat_dim": 4, "proj_hidden": 32, "proj_out": 16},
        "preprocess": {"seq_len": 64},
        "augment": {"out_len": 64},
        "train": {"epochs": 4, "warmup_epochs": 1, "batch": 16}
    });
    std::fs::write(&config, body.to_string()).map_err(|e| e.to_string())?;
    let run = |out: &Path| -> Result<Vec<u8>, String> {
        let status = Command::new(env!("CARGO_BIN_EXE_tsca"))
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(out)
            .args([
                "--seed",
                "17",
                "--deterministic",
                "pretrain",
                "--dataset",
                "synthetic:chirp:48:8:5",
            ])
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        std::fs::read(out.join("checkpoint.tsca")).map_err(|e| e.to_string())
    };
    let a = run(&dir.path().join("a"))?;
    let b = run(&dir.path().join("b"))?;
    check(
        a == b,
        format!(
            "two CLI runs, {} bytes each, identical: {}",
            a.len(),
            a == b
        ),
    )
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = generate(
        &SyntheticSpec {
            family: Family::Bumps,
            train: 12,
            test: 3,
            seed: 8,
            ..SyntheticSpec::default()
        },
        &Preprocess {
            seq_len: 16,
            znormalize: true,
        },
    )
    .map_err(|e| e.to_string())?;
    let train = TrainConfig {
        epochs: 2,
        warmup_epochs: 1,
        batch: 6,
        ..TrainConfig::default()
    };
    let ckpt = pretrain_with(
        &data,
        &train,
        &EncoderConfig::tiny(),
        &CropResizeConfig {
            out_len: 16,
            ..Default::default()
        },
        Exec::default(),
    )
    .map_err(|e| e.to_string())?;
    let path = dir.path().join("m.tsca");
    save_checkpoint(&ckpt, &path).map_err(|e| e.to_string())?;
    let back = load_checkpoint(&path).map_err(|e| e.to_string())?;
    let bits = |p: &EncoderParams| -> Vec<u64> {
        p.named_tensors()
            .iter()
            .flat_map(|(_, t)| t.data.iter().map(|v| v.to_bits()))
            .collect()
    };
    let round_trip = bits(&back.params) == bits(&ckpt.params) && back.provenance == ckpt.provenance;

    let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
    let mut bad_magic = bytes.clone();
    bad_magic[2] ^= 0xff;
    let magic_ok = matches!(
        decode_checkpoint(&bad_magic),
        Err(CheckpointError::BadMagic { .. })
    );
    let truncated_ok = matches!(
        decode_checkpoint(&bytes[..bytes.len() - 5]),
        Err(CheckpointError::Truncated { .. })
    );
    std::fs::write(&path, &bytes[..bytes.len() - 5]).map_err(|e| e.to_string())?;
    let truncated_file_ok = matches!(
        load_checkpoint(&path),
        Err(Error::Checkpoint(CheckpointError::Truncated { .. }))
    );

    let (mut header, start) = decode_header(&bytes).map_err(|e| e.to_string())?;
    header.tensors.get_mut("final_norm.gamma").unwrap().shape = vec![4, 2];
    let h = serde_json::to_vec(&header).map_err(|e| e.to_string())?;
    let mut reshaped = MAGIC.to_vec();
    reshaped.extend_from_slice(&(h.len() as u32).to_le_bytes());
    reshaped.extend_from_slice(&h);
    reshaped.extend_from_slice(&bytes[start..]);
    let shape_ok = matches!(
        decode_checkpoint(&reshaped),
        Err(CheckpointError::ShapeMismatch { ref tensor, .. }) if tensor == "final_norm.gamma"
    );
    check(
        round_trip && magic_ok && truncated_ok && truncated_file_ok && shape_ok,
        format!(
            "round trip bit-exact {round_trip}, bad magic {magic_ok}, truncated {}, shape mismatch {shape_ok}",
            truncated_ok && truncated_file_ok
        ),
    )
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Outcome {
    let cfg = TrainConfig::default();
    let sched = LrSchedule {
        lr: cfg.lr,
        warmup_epochs: cfg.warmup_epochs,
        epochs: cfg.epochs,
    };
    let at10 = sched.lr_at(10);
    let exact = at10 == 2e-4;
    let (before, after) = (sched.lr_at(9), sched.lr_at(11));
    let continuous = (before - at10).abs() <= 1e-12 && at10 - after >= 0.0 && at10 - after < 1e-7;

    // one scalar AdamW step: p=1, g=0.5, lr=0.1, wd=0.05, betas (0.9, 0.999), eps 1e-8
    //   decay: 1 - 0.1*0.05 = 0.995
    //   m_hat = 0.05/0.1 = 0.5, v_hat = 0.00025/0.001 = 0.25
    //   p = 0.995 - 0.1 * 0.5 / (0.5 + 1e-8) = 0.895000002
    let mut p = Tensor {
        shape: vec![1],
        data: vec![1.0],
    };
    let g = Tensor {
        shape: vec![1],
        data: vec![0.5],
    };
    let mut state = OptimizerState::new();
    adamw_update(
        &mut [&mut p],
        &[&g],
        &mut state,
        0.1,
        &AdamWConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let adam_err = (p.data[0] - 0.895_000_002).abs();
    check(
        exact && continuous && adam_err < 1e-9,
        format!(
            "lr_at(10) = {at10:e} exact {exact}; lr_at(9) = {before:e}, lr_at(11) = {after:e}; AdamW step error {adam_err:.1e}"
        ),
    )
}

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 gradient check", criterion_1),
        ("2 InfoNCE oracle", criterion_2),
        ("3 CA oracle equivalence", criterion_3),
        ("4 CA chance baseline", criterion_4),
        ("5 training smoke", criterion_5),
        ("6 subset sign check", criterion_6),
        ("7 CLI determinism", criterion_7),
        ("8 checkpoint format", criterion_8),
        ("9 schedule and optimizer", criterion_9),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        if filter.as_ref().is_some_and(|f| !name.contains(f.as_str())) {
            continue;
        }
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(detail) => {
                failed += 1;
                println!("criterion {name}: FAIL ({detail})");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
