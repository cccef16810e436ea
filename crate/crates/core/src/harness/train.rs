use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;

use super::config::{Schedule, TrainConfig};
use crate::data::{build_vocab, pad_batch, Batch, Example, Vocab};
use crate::error::{Error, Result};
use crate::mixup::{mixed_loss, MixPlan};
use crate::model::{argmax_rows, write_attention_dump, Model, ModelConfig};
use crate::rng::{self, Stream};
use crate::tensor::{save_checkpoint, AdamW, AdamWConfig, Float};

pub const METRICS_HEADER: &str = "step,epoch,split,loss,accuracy,lr,lambda_max";
const EVAL_BATCH: usize = 256;

/// Linear warmup from 0 to `cfg.lr`, then cosine decay to 0 at
/// `total_steps` (or flat for the constant schedule).
pub fn lr_at(step: usize, total_steps: usize, cfg: &TrainConfig) -> f64 {
    let warmup = cfg.warmup_fraction * total_steps as f64;
    let s = step as f64;
    if s < warmup {
        return cfg.lr * s / warmup;
    }
    match cfg.schedule {
        Schedule::Constant => cfg.lr,
        Schedule::Cosine => {
            let span = total_steps as f64 - warmup;
            if span <= 0.0 {
                return cfg.lr;
            }
            let progress = ((s - warmup) / span).min(1.0);
            cfg.lr * 0.5 * (1.0 + (PI * progress).cos())
        }
    }
}

/// One line of a run's metrics file.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub step: usize,
    pub epoch: usize,
    pub split: &'static str,
    pub loss: f64,
    pub accuracy: f64,
    pub lr: f64,
    pub lambda_max: Option<f64>,
}

pub fn format_metrics(rows: &[MetricRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let lambda = r.lambda_max.map(|l| l.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.step, r.epoch, r.split, r.loss, r.accuracy, r.lr, lambda
        );
    }
    out
}

pub fn write_metrics(path: &Path, rows: &[MetricRow]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, format_metrics(rows)).map_err(|e| Error::io(path, e))
}

/// Train, validation and test examples for one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Vec<Example>,
}

/// Use `val` when given, otherwise hold out `fraction` of `train` chosen by
/// the seed's split stream.
pub fn make_splits(
    train: &[Example],
    val: Option<&[Example]>,
    test: &[Example],
    fraction: f64,
    seed: u64,
) -> Result<Splits> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Data(
            "training and test sets must be non-empty".into(),
        ));
    }
    if let Some(val) = val {
        if val.is_empty() {
            return Err(Error::Data("validation set is empty".into()));
        }
        return Ok(Splits {
            train: train.to_vec(),
            val: val.to_vec(),
            test: test.to_vec(),
        });
    }
    let n_val = ((train.len() as f64 * fraction).round() as usize).max(1);
    if n_val >= train.len() {
        return Err(Error::Data(format!(
            "cannot hold out {n_val} of {} training examples for validation",
            train.len()
        )));
    }
    let mut idx: Vec<usize> = (0..train.len()).collect();
    idx.shuffle(&mut rng::stream(seed, Stream::Split));
    let (v, t) = idx.split_at(n_val);
    let mut v = v.to_vec();
    let mut t = t.to_vec();
    v.sort_unstable();
    t.sort_unstable();
    Ok(Splits {
        train: t.iter().map(|&i| train[i].clone()).collect(),
        val: v.iter().map(|&i| train[i].clone()).collect(),
        test: test.to_vec(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub best_val_accuracy: f64,
    pub test_accuracy: f64,
    pub epochs_run: usize,
    pub steps: usize,
    pub wall_time: f64,
}

/// A finished run: result, metrics stream, and the best model.
pub struct TrainOutcome {
    pub result: SeedResult,
    pub metrics: Vec<MetricRow>,
    pub model: Model,
    pub vocab: Vocab,
}

// Pad to the longest example in the batch, capped at max_len.
fn make_batch(examples: &[&Example], vocab: &Vocab, max_len: usize) -> Result<Batch> {
    let longest = examples
        .iter()
        .map(|e| e.tokens.len() + 1)
        .max()
        .unwrap_or(1);
    pad_batch(examples, vocab, longest.min(max_len))
}

/// Mean cross entropy and accuracy without mixing or dropout.
pub fn evaluate(model: &Model, vocab: &Vocab, examples: &[Example]) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0;
    for chunk in examples.chunks(EVAL_BATCH) {
        let refs: Vec<&Example> = chunk.iter().collect();
        let batch = make_batch(&refs, vocab, model.config.max_len)?;
        let logits = model.forward(&batch, None, None, false)?.logits;
        loss += logits.cross_entropy(&batch.labels)?.item() as f64 * chunk.len() as f64;
        let pred = argmax_rows(logits.data(), model.config.n_classes);
        correct += pred
            .iter()
            .zip(&batch.labels)
            .filter(|(p, l)| p == l)
            .count();
    }
    let n = examples.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

fn check_labels(splits: &Splits, n_classes: usize) -> Result<()> {
    let all = splits.train.iter().chain(&splits.val).chain(&splits.test);
    if let Some(bad) = all.map(|e| e.label).find(|&l| l >= n_classes) {
        return Err(Error::Data(format!(
            "label {bad} but model.n_classes is {n_classes}"
        )));
    }
    Ok(())
}

fn snapshot(model: &Model) -> Vec<Vec<Float>> {
    model
        .parameters()
        .iter()
        .map(|p| p.data().to_vec())
        .collect()
}

fn restore(model: &mut Model, snap: Vec<Vec<Float>>) -> Result<()> {
    for (p, data) in model.parameters_mut().into_iter().zip(snap) {
        p.set_data(data)?;
    }
    Ok(())
}

/// One seed's training run.
///
/// Each step samples a plan from the strategy, runs the mixed forward pass,
/// and takes an AdamW step on the mixed loss. Validation runs once per
/// epoch without mixing; training stops after `early_stop_patience` epochs
/// without a new best, and the best parameters are used for the test split.
pub fn train(cfg: &TrainConfig, splits: &Splits, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    let vocab = build_vocab(&splits.train, 1)?;
    let model_cfg = ModelConfig {
        vocab_size: vocab.len(),
        ..cfg.model.clone()
    };
    check_labels(splits, model_cfg.n_classes)?;
    let mut model = Model::new(model_cfg, &mut rng::stream(seed, Stream::Init))?;
    let mut order_rng = rng::stream(seed, Stream::DataOrder);
    let mut plan_rng = rng::stream(seed, Stream::MixPlan);
    let mut dropout_rng = rng::stream(seed, Stream::Dropout);
    let mut opt = AdamW::new(AdamWConfig {
        eps: cfg.adam_eps,
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    });

    let steps_per_epoch = splits.train.len().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.max_epochs;
    let max_len = model.config.max_len;
    let mut metrics = Vec::new();
    let mut step = 0;
    let mut best: Option<(f64, Vec<Vec<Float>>)> = None;
    let mut stale = 0;
    let mut epochs_run = 0;
    let mut order: Vec<usize> = (0..splits.train.len()).collect();

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut order_rng);
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&Example> = chunk.iter().map(|&i| &splits.train[i]).collect();
            let batch = make_batch(&refs, &vocab, max_len)?;
            let plan = MixPlan::sample(&cfg.strategy, batch.size, &mut plan_rng)?;
            let logits = model
                .forward(&batch, plan.as_ref(), Some(&mut dropout_rng), false)?
                .logits;
            let loss = match &plan {
                Some(p) => mixed_loss(
                    &logits,
                    &batch.labels,
                    &p.permuted_labels(&batch.labels)?,
                    p.lambda_max,
                )?,
                None => logits.cross_entropy(&batch.labels)?,
            };
            let value = loss.item() as f64;
            let lambda = plan.as_ref().map(|p| p.lambda_max);
            if !value.is_finite() {
                return Err(Error::Divergence {
                    step,
                    epoch,
                    loss: value,
                    lambda,
                });
            }
            loss.backward()?;
            let lr = lr_at(step, total_steps, cfg);
            opt.step(model.parameters_mut(), lr)?;
            let pred = argmax_rows(logits.data(), model.config.n_classes);
            let correct = pred
                .iter()
                .zip(&batch.labels)
                .filter(|(p, l)| p == l)
                .count();
            metrics.push(MetricRow {
                step,
                epoch,
                split: "train",
                loss: value,
                accuracy: correct as f64 / batch.size as f64,
                lr,
                lambda_max: lambda,
            });
            step += 1;
        }
        epochs_run = epoch + 1;

        let (val_loss, val_acc) = evaluate(&model, &vocab, &splits.val)?;
        metrics.push(MetricRow {
            step,
            epoch,
            split: "val",
            loss: val_loss,
            accuracy: val_acc,
            lr: lr_at(step, total_steps, cfg),
            lambda_max: None,
        });
        if best.as_ref().is_none_or(|(b, _)| val_acc > *b) {
            best = Some((val_acc, snapshot(&model)));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.early_stop_patience {
                break;
            }
        }
    }

    let best_val_accuracy = match best {
        Some((acc, snap)) => {
            restore(&mut model, snap)?;
            acc
        }
        None => {
            let (val_loss, val_acc) = evaluate(&model, &vocab, &splits.val)?;
            metrics.push(MetricRow {
                step,
                epoch: 0,
                split: "val",
                loss: val_loss,
                accuracy: val_acc,
                lr: 0.0,
                lambda_max: None,
            });
            val_acc
        }
    };
    let (test_loss, test_acc) = evaluate(&model, &vocab, &splits.test)?;
    metrics.push(MetricRow {
        step,
        epoch: epochs_run.saturating_sub(1),
        split: "test",
        loss: test_loss,
        accuracy: test_acc,
        lr: lr_at(step, total_steps, cfg),
        lambda_max: None,
    });

    Ok(TrainOutcome {
        result: SeedResult {
            seed,
            best_val_accuracy,
            test_accuracy: test_acc,
            epochs_run,
            steps: step,
            wall_time: started.elapsed().as_secs_f64(),
        },
        metrics,
        model,
        vocab,
    })
}

/// Checkpoint directory with parameters, metadata and `vocab.txt`.
pub fn save_run(dir: &Path, outcome: &TrainOutcome, cfg: &TrainConfig) -> Result<()> {
    let mut meta = BTreeMap::new();
    let mut run_cfg = cfg.clone();
    run_cfg.model.vocab_size = outcome.vocab.len();
    for (k, v) in run_cfg.to_pairs() {
        meta.insert(k, v);
    }
    meta.insert("seed".into(), outcome.result.seed.to_string());
    meta.insert("step".into(), outcome.result.steps.to_string());
    save_checkpoint(dir, outcome.model.parameters(), &meta)?;
    outcome.vocab.save(&dir.join("vocab.txt"))
}

/// Attention maps of `examples` as JSON lines, one batch at a time.
pub fn dump_attention(
    path: &Path,
    model: &Model,
    vocab: &Vocab,
    examples: &[Example],
    batch_size: usize,
) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for (i, chunk) in examples.chunks(batch_size.max(1)).enumerate() {
        let refs: Vec<&Example> = chunk.iter().collect();
        let batch = make_batch(&refs, vocab, model.config.max_len)?;
        let trace = model
            .forward(&batch, None, None, true)?
            .trace
            .expect("tracing was requested");
        write_attention_dump(&mut out, i, &batch, vocab, &trace)?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
