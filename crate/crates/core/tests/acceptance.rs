//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};

use amplify_core::data::{
    gen_synthetic, pad_batch, Batch, Example, NoiseKind, SyntheticSpec, Vocab,
};
use amplify_core::harness::{
    self, ablate_depth, compare, metrics_files, robustness, sweep_n, t_test, write_summary,
    Dataset, Output, RunResult, TrainConfig, SUMMARY_HEADER,
};
use amplify_core::mixup::{
    baseline_lambda, make_permutation, mix_features, mixed_loss, mixed_loss_soft, mixed_targets,
    sample_beta, sample_lambda_max, MixPlan, StrategyConfig, StrategyKind,
};
use amplify_core::model::{HookSite, Model, ModelConfig};
use amplify_core::tensor::{Float, Tensor};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn word_corpus(rng: &mut ChaCha8Rng, n: usize, max_words: usize, n_classes: usize) -> Vec<Example> {
    (0..n)
        .map(|_| {
            let len = rng.random_range(1..=max_words);
            Example {
                tokens: (0..len)
                    .map(|_| format!("t{}", rng.random_range(0..12)))
                    .collect(),
                label: rng.random_range(0..n_classes),
            }
        })
        .collect()
}

fn batch_of(examples: &[Example], vocab: &Vocab, len: usize) -> Batch {
    let refs: Vec<&Example> = examples.iter().collect();
    pad_batch(&refs, vocab, len).unwrap()
}

fn vocab_of(examples: &[Example]) -> Vocab {
    Vocab::build(examples.iter().map(|e| &e.tokens), 1).unwrap()
}

fn fixed_plan(
    strategy: StrategyConfig,
    index_r: Vec<usize>,
    lambda: f64,
    tmix_layer: Option<usize>,
) -> MixPlan {
    MixPlan {
        index_r: index_r.into(),
        lambda_max: lambda,
        strategy,
        tmix_layer,
    }
}

// 1 -------------------------------------------------------------------------

fn gradient_fidelity() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let examples = word_corpus(&mut rng, 4, 7, 2);
    let vocab = vocab_of(&examples);
    let batch = batch_of(&examples, &vocab, 8);
    let cfg = ModelConfig {
        vocab_size: vocab.len(),
        max_len: 8,
        d_model: 16,
        n_heads: 2,
        d_ff: 32,
        n_layers: 1,
        n_classes: 2,
        dropout: 0.1,
    };
    let model = Model::new(cfg, &mut rng).unwrap();
    let plan = fixed_plan(StrategyConfig::amplify(), vec![2, 0, 3, 1], 0.63, None);
    let gt_s = plan.permuted_labels(&batch.labels).unwrap();
    let loss = |m: &Model| {
        let logits = m.forward(&batch, Some(&plan), None, false).unwrap().logits;
        mixed_loss(&logits, &batch.labels, &gt_s, plan.lambda_max).unwrap()
    };
    loss(&model).backward().unwrap();

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut probe = model.clone();
    for pi in 0..model.parameters().len() {
        let analytic = model.parameters()[pi]
            .tensor
            .grad()
            .unwrap_or_else(|| vec![0.0; model.parameters()[pi].data().len()]);
        let base = model.parameters()[pi].data().to_vec();
        for i in 0..base.len() {
            let mut at = |delta: Float| {
                let mut d = base.clone();
                d[i] += delta;
                probe.parameters_mut()[pi].set_data(d).unwrap();
                loss(&probe).item()
            };
            let numeric = (at(h) - at(-h)) / (2.0 * h);
            let a = analytic[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel as f64);
            checked += 1;
        }
        probe.parameters_mut()[pi].set_data(base).unwrap();
    }
    let secs = started.elapsed().as_secs_f64();
    check(worst <= 1e-4, || {
        format!("max relative error {worst:.3e} over {checked} entries")
    })?;
    check(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "max relative error {worst:.2e} over {checked} entries, {secs:.1}s"
    ))
}

// 2 -------------------------------------------------------------------------

fn mixing_degeneracy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let examples = word_corpus(&mut rng, 64, 9, 3);
    let vocab = vocab_of(&examples);
    let models: Vec<Model> = (0..8)
        .map(|i| {
            let cfg = ModelConfig {
                vocab_size: vocab.len(),
                max_len: 10,
                d_model: 8,
                n_heads: 2,
                d_ff: 16,
                n_layers: 1 + i % 3,
                n_classes: 3,
                dropout: 0.1,
            };
            Model::new(cfg, &mut rng).unwrap()
        })
        .collect();
    let kinds = [
        StrategyKind::Amplify,
        StrategyKind::EmbedMix,
        StrategyKind::SentenceMix,
        StrategyKind::TMix,
    ];
    for case in 0..1000 {
        let model = &models[case % models.len()];
        let l = rng.random_range(1..=6);
        let start = rng.random_range(0..examples.len() - l);
        let batch = batch_of(&examples[start..start + l], &vocab, 10);
        let kind = kinds[rng.random_range(0..kinds.len())];
        let strategy = StrategyConfig::for_kind(kind, model.config.n_layers);
        let layer = (kind == StrategyKind::TMix)
            .then(|| strategy.tmix_layers[rng.random_range(0..strategy.tmix_layers.len())]);
        let plain = model.forward(&batch, None, None, false).unwrap().logits;

        let perm = make_permutation(l, &mut rng);
        let one = fixed_plan(strategy.clone(), perm, 1.0, layer);
        let out = model
            .forward(&batch, Some(&one), None, false)
            .unwrap()
            .logits;
        check(out.data() == plain.data(), || {
            format!("case {case}: λ=1 changed the logits ({kind})")
        })?;

        let lambda = rng.random::<f64>();
        let identity = fixed_plan(strategy, (0..l).collect(), lambda, layer);
        let out = model
            .forward(&batch, Some(&identity), None, false)
            .unwrap()
            .logits;
        check(out.data() == plain.data(), || {
            format!("case {case}: identity permutation changed the logits ({kind})")
        })?;

        let shape = [l, rng.random_range(1..5), rng.random_range(1..9)];
        let n: usize = shape.iter().product();
        let h = Tensor::new(
            (0..n).map(|_| rng.random_range(-5.0..5.0)).collect(),
            &shape,
        )
        .unwrap();
        let mixed = mix_features(&h, &h, rng.random::<f64>()).unwrap();
        check(mixed.data() == h.data(), || {
            format!("case {case}: mix(h, h, λ) != h")
        })?;
    }
    Ok("1000 cases bit-identical".into())
}

// 3 -------------------------------------------------------------------------

fn log_softmax_row(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

fn loss_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let l = rng.random_range(1..=16);
        let n_classes = rng.random_range(2..=6);
        let data: Vec<f64> = (0..l * n_classes)
            .map(|_| rng.random_range(-6.0..6.0))
            .collect();
        let logits =
            Tensor::new(data.iter().map(|&v| v as Float).collect(), &[l, n_classes]).unwrap();
        let gt_o: Vec<usize> = (0..l).map(|_| rng.random_range(0..n_classes)).collect();
        let perm = make_permutation(l, &mut rng);
        let gt_s: Vec<usize> = perm.iter().map(|&i| gt_o[i]).collect();
        let lambda = rng.random::<f64>();

        let hard = mixed_loss(&logits, &gt_o, &gt_s, lambda).unwrap().item() as f64;
        let targets = mixed_targets(&gt_o, &gt_s, lambda, n_classes).unwrap();
        let soft = mixed_loss_soft(&logits, &targets).unwrap().item() as f64;

        let mut oracle = 0.0;
        for r in 0..l {
            let lp = log_softmax_row(&data[r * n_classes..(r + 1) * n_classes]);
            oracle -= lambda * lp[gt_o[r]] + (1.0 - lambda) * lp[gt_s[r]];
        }
        oracle /= l as f64;
        let err = (hard - soft).abs().max((hard - oracle).abs());
        worst = worst.max(err);
        check(err <= 1e-9, || {
            format!("case {case}: hard {hard} soft {soft} oracle {oracle}")
        })?;
    }
    Ok(format!("100 cases, max deviation {worst:.1e}"))
}

// 4 -------------------------------------------------------------------------

fn sampler_statistics() -> Outcome {
    let trials = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let ours: f64 = (0..trials)
        .map(|_| sample_lambda_max(0.1, 5, &mut rng).unwrap().lambda_max)
        .sum::<f64>()
        / trials as f64;
    let beta = Beta::new(0.1, 0.1).unwrap();
    let mut orng = ChaCha8Rng::seed_from_u64(4044);
    let oracle: f64 = (0..trials)
        .map(|_| {
            (0..5)
                .map(|_| beta.sample(&mut orng))
                .fold(f64::MIN, f64::max)
        })
        .sum::<f64>()
        / trials as f64;
    check((ours - oracle).abs() <= 0.01, || {
        format!("E[λ_max] {ours:.4} vs oracle {oracle:.4}")
    })?;

    let below = (0..trials)
        .filter(|_| baseline_lambda(0.2, &mut rng).unwrap() < 0.5)
        .count();
    check(below == 0, || format!("{below} folded draws below 0.5"))?;

    let uniform_mean = (0..trials)
        .map(|_| sample_beta(1.0, &mut rng).unwrap())
        .sum::<f64>()
        / trials as f64;
    check((uniform_mean - 0.5).abs() <= 0.01, || {
        format!("Beta(1,1) mean {uniform_mean:.4}")
    })?;
    Ok(format!(
        "E[λ_max] {ours:.4} vs oracle {oracle:.4}; Beta(1,1) mean {uniform_mean:.4}"
    ))
}

// 5 -------------------------------------------------------------------------

fn desk_config() -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.model = ModelConfig {
        max_len: 32,
        d_model: 32,
        n_heads: 2,
        d_ff: 64,
        n_layers: 2,
        n_classes: 2,
        ..ModelConfig::default()
    };
    cfg.max_epochs = 20;
    cfg.seeds = vec![1, 2, 3];
    cfg
}

fn synthetic_dataset() -> Dataset {
    let spec = SyntheticSpec {
        n_classes: 2,
        vocab_size: 200,
        seq_len_range: (8, 24),
        n_train: 2000,
        n_test: 500,
        noise_rate: 0.05,
        ..SyntheticSpec::default()
    };
    let (train, test) = gen_synthetic(&spec, 0).unwrap();
    Dataset {
        train,
        val: None,
        test,
    }
}

fn accs(r: &RunResult) -> String {
    r.per_seed
        .iter()
        .map(|s| format!("{:.3}", s.test_accuracy))
        .collect::<Vec<_>>()
        .join("/")
}

fn desk_scale() -> Outcome {
    let cfg = desk_config();
    let data = synthetic_dataset();
    let rows = compare(
        &cfg,
        &[StrategyConfig::no_mixup(), StrategyConfig::amplify()],
        &data,
        None,
    )
    .unwrap();
    let (plain, amp) = (&rows[0], &rows[1]);
    for s in &plain.per_seed {
        check(s.test_accuracy >= 0.93, || {
            format!("no-mixup seed {} accuracy {:.3}", s.seed, s.test_accuracy)
        })?;
        check(s.epochs_run <= 20, || {
            format!("seed {} ran {} epochs", s.seed, s.epochs_run)
        })?;
        check(s.wall_time < 300.0, || {
            format!("seed {} took {:.0}s", s.seed, s.wall_time)
        })?;
    }
    check(amp.mean_accuracy >= plain.mean_accuracy - 0.02, || {
        format!(
            "amplify mean {:.4} vs no-mixup mean {:.4}",
            amp.mean_accuracy, plain.mean_accuracy
        )
    })?;
    let slowest = plain
        .per_seed
        .iter()
        .map(|s| s.wall_time)
        .fold(0.0, f64::max);
    Ok(format!(
        "no-mixup {} (mean {:.4}, slowest run {:.0}s); amplify {} (mean {:.4}, {:+.4})",
        accs(plain),
        plain.mean_accuracy,
        slowest,
        accs(amp),
        amp.mean_accuracy,
        amp.mean_accuracy - plain.mean_accuracy
    ))
}

// 6 -------------------------------------------------------------------------

fn robustness_protocol() -> Outcome {
    let started = Instant::now();
    let mut cfg = desk_config();
    cfg.max_epochs = 10;
    cfg.early_stop_patience = 3;
    let data = synthetic_dataset();
    let dir = tempfile::tempdir().unwrap();
    let out = Output::new(dir.path());
    let kinds = [NoiseKind::Delete, NoiseKind::Swap];
    let proportions = [0.05, 0.10, 0.15, 0.20];
    let strategies = [StrategyConfig::no_mixup(), StrategyConfig::amplify()];
    let rows = robustness(&cfg, &kinds, &proportions, &strategies, &data, Some(&out)).unwrap();
    write_summary(&out, "robustness", &cfg, &data, &rows).unwrap();

    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    check(lines[0] == SUMMARY_HEADER, || {
        format!("summary header {:?}", lines[0])
    })?;
    check(lines.len() == 1 + 16, || {
        format!("{} summary rows", lines.len() - 1)
    })?;
    for line in &lines[1..] {
        check(line.split(',').count() == 8, || {
            format!("malformed row {line:?}")
        })?;
    }
    let find = |kind: StrategyKind| {
        rows.iter()
            .find(|r| {
                r.strategy.kind == kind
                    && r.perturbation
                        .is_some_and(|p| p.kind == NoiseKind::Delete && p.proportion == 0.20)
            })
            .unwrap()
    };
    let (plain, amp) = (find(StrategyKind::NoMixup), find(StrategyKind::Amplify));
    let secs = started.elapsed().as_secs_f64();
    check(amp.mean_accuracy >= plain.mean_accuracy - 0.01, || {
        format!(
            "delete 20%: amplify {:.4} vs no-mixup {:.4}",
            amp.mean_accuracy, plain.mean_accuracy
        )
    })?;
    check(secs < 1800.0, || format!("took {secs:.0}s"))?;
    Ok(format!(
        "delete 20%: no-mixup {:.4}, amplify {:.4}; 16-row table in {secs:.0}s",
        plain.mean_accuracy, amp.mean_accuracy
    ))
}

// 7 -------------------------------------------------------------------------

fn hook_audit() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let examples = word_corpus(&mut rng, 32, 8, 2);
    let vocab = vocab_of(&examples);
    let n_layers = 3;
    let cfg = ModelConfig {
        vocab_size: vocab.len(),
        max_len: 9,
        d_model: 8,
        n_heads: 2,
        d_ff: 16,
        n_layers,
        n_classes: 2,
        dropout: 0.1,
    };
    let model = Model::new(cfg, &mut rng).unwrap();
    let tmix_set = StrategyConfig::tmix(n_layers).tmix_layers;
    for kind in StrategyKind::ALL {
        let strategy = StrategyConfig::for_kind(kind, n_layers);
        for step in 0..1000 {
            let start = rng.random_range(0..examples.len() - 4);
            let batch = batch_of(&examples[start..start + 4], &vocab, 9);
            let plan = MixPlan::sample(&strategy, batch.size, &mut rng).unwrap();
            let log = model
                .forward(&batch, plan.as_ref(), None, true)
                .unwrap()
                .trace
                .unwrap()
                .hook_log;
            let sites: Vec<HookSite> = log.iter().map(|r| r.site).collect();
            let ok = match kind {
                StrategyKind::NoMixup => plan.is_none() && log.is_empty(),
                StrategyKind::Amplify => {
                    sites == (0..n_layers).map(HookSite::MhaOutput).collect::<Vec<_>>()
                }
                StrategyKind::EmbedMix => sites == [HookSite::Embedding],
                StrategyKind::SentenceMix => sites == [HookSite::Pooled],
                StrategyKind::TMix => {
                    matches!(sites.as_slice(), [HookSite::BlockOutput(i)] if tmix_set.contains(i))
                }
            };
            let shared = plan.as_ref().is_none_or(|p| {
                log.iter()
                    .all(|r| r.lambda == p.lambda_max && r.index_r.as_slice() == &*p.index_r)
            });
            check(ok && shared, || {
                format!("{kind} step {step}: logged {sites:?}")
            })?;
        }
    }
    Ok(format!("5 strategies × 1000 steps, tmix set {tmix_set:?}"))
}

// 8 -------------------------------------------------------------------------

fn run_all_commands(dir: &Path, cfg: &TrainConfig, data: &Dataset) {
    let sub = |name: &str| Output::new(dir.join(name));
    let strategies: Vec<StrategyConfig> = StrategyKind::ALL
        .iter()
        .map(|&k| StrategyConfig::for_kind(k, cfg.model.n_layers))
        .collect();
    let out = sub("compare");
    let rows = compare(cfg, &strategies, data, Some(&out)).unwrap();
    write_summary(&out, "compare", cfg, data, &rows).unwrap();
    let out = sub("sweep");
    let rows = sweep_n(cfg, &[1, 3], data, Some(&out)).unwrap();
    write_summary(&out, "sweep-n", cfg, data, &rows).unwrap();
    let out = sub("ablate");
    let rows = ablate_depth(
        cfg,
        &harness::default_site_sets(cfg.model.n_layers),
        data,
        Some(&out),
    )
    .unwrap();
    write_summary(&out, "ablate-depth", cfg, data, &rows).unwrap();
    let out = sub("robust");
    let rows = robustness(
        cfg,
        &[NoiseKind::Swap],
        &[0.1],
        &strategies[..2],
        data,
        Some(&out),
    )
    .unwrap();
    write_summary(&out, "robustness", cfg, data, &rows).unwrap();
}

fn determinism() -> Outcome {
    let mut cfg = TrainConfig::default();
    cfg.model = ModelConfig {
        max_len: 32,
        d_model: 8,
        n_heads: 2,
        d_ff: 16,
        n_layers: 2,
        n_classes: 3,
        ..ModelConfig::default()
    };
    cfg.batch_size = 8;
    cfg.max_epochs = 2;
    cfg.seeds = vec![4, 9];
    let spec = SyntheticSpec {
        n_classes: 3,
        n_train: 80,
        n_test: 30,
        ..SyntheticSpec::default()
    };
    let (train, test) = gen_synthetic(&spec, 3).unwrap();
    let data = Dataset {
        train,
        val: None,
        test,
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_all_commands(a.path(), &cfg, &data);
    run_all_commands(b.path(), &cfg, &data);
    let mut compared = 0;
    for cmd in ["compare", "sweep", "ablate", "robust"] {
        let fa = metrics_files(&a.path().join(cmd)).unwrap();
        let fb = metrics_files(&b.path().join(cmd)).unwrap();
        check(!fa.is_empty() && fa.len() == fb.len(), || {
            format!("{cmd}: {} vs {} files", fa.len(), fb.len())
        })?;
        for (x, y) in fa.iter().zip(&fb) {
            check(x.file_name() == y.file_name(), || {
                format!("{cmd}: file sets differ")
            })?;
            check(fs::read(x).unwrap() == fs::read(y).unwrap(), || {
                format!("{} differs", x.display())
            })?;
            compared += 1;
        }
        let manifest = |d: &Path| fs::read(d.join(cmd).join("manifest.json")).unwrap();
        check(manifest(a.path()) == manifest(b.path()), || {
            format!("{cmd}: manifest differs")
        })?;
    }
    Ok(format!(
        "{compared} metrics files byte-identical across repeats"
    ))
}

// 9 -------------------------------------------------------------------------

/// ln Γ(x) for x > 0, Lanczos (g = 7, 9 terms).
fn ln_gamma(x: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let t = x + 7.5;
    let series: f64 = C[0] + (1..9).map(|i| C[i] / (x + i as f64)).sum::<f64>();
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + series.ln()
}

/// Two-sided Welch p by Simpson integration of the t density over [0, |t|].
fn welch_oracle(a: &[f64], b: &[f64]) -> f64 {
    let stats = |s: &[f64]| {
        let n = s.len() as f64;
        let m = s.iter().sum::<f64>() / n;
        (
            m,
            s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0),
            n,
        )
    };
    let (ma, va, na) = stats(a);
    let (mb, vb, nb) = stats(b);
    let se2 = va / na + vb / nb;
    let t = ((ma - mb) / se2.sqrt()).abs();
    let nu = se2.powi(2) / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let log_c =
        ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * std::f64::consts::PI).ln();
    let density = |x: f64| (log_c - (nu + 1.0) / 2.0 * (1.0 + x * x / nu).ln()).exp();
    let steps = 200_000;
    let h = t / steps as f64;
    let mut acc = density(0.0) + density(t);
    for i in 1..steps {
        acc += density(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - 2.0 * acc * h / 3.0
}

fn t_test_utility() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let draw = |rng: &mut ChaCha8Rng| {
            let n = rng.random_range(3..=30);
            let dist =
                Normal::new(rng.random_range(-1.0..1.0), rng.random_range(0.2..2.0)).unwrap();
            (0..n).map(|_| dist.sample(rng)).collect::<Vec<f64>>()
        };
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        let ours = t_test(&a, &b).unwrap().p;
        let oracle = welch_oracle(&a, &b);
        worst = worst.max((ours - oracle).abs());
        check((ours - oracle).abs() <= 1e-4, || {
            format!("case {case}: p {ours} vs oracle {oracle}")
        })?;
    }
    let same = [0.71, 0.74, 0.69, 0.73];
    let r = t_test(&same, &same).unwrap();
    check(r.t == 0.0 && r.p == 1.0, || {
        format!("identical samples gave t {} p {}", r.t, r.p)
    })?;
    let flat = t_test(&[0.9; 3], &[0.9; 3]).unwrap();
    check(flat.p == 1.0, || {
        format!("zero-variance identical samples gave p {}", flat.p)
    })?;
    Ok(format!(
        "50 pairs, max |Δp| {worst:.1e}; identical samples p = 1"
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient fidelity", gradient_fidelity),
        ("mixing degeneracy", mixing_degeneracy),
        ("loss formulation identity", loss_identity),
        ("weight sampler statistics", sampler_statistics),
        ("desk-scale end-to-end", desk_scale),
        ("robustness protocol", robustness_protocol),
        ("hook-site audit", hook_audit),
        ("determinism", determinism),
        ("t-test utility", t_test_utility),
    ];
    let order = [2, 3, 4, 1, 7, 9, 8, 5, 6];
    let mut failed = 0;
    let mut lines = vec![String::new(); 9];
    for &n in &order {
        let (name, f) = criteria[n - 1];
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        let line = match outcome {
            Ok(detail) => format!("criterion {n} {name}: PASS ({detail}) [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                format!("criterion {n} {name}: FAIL ({detail}) [{secs:.1}s]")
            }
        };
        println!("{line}");
        lines[n - 1] = line;
    }
    println!("\nacceptance summary:");
    for line in &lines {
        println!("{line}");
    }
    if failed > 0 {
        println!("{failed} of 9 criteria failed");
        std::process::exit(1);
    }
    println!("all 9 criteria passed");
}
