use std::fmt::Write as _;
use std::fs;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::TrainConfig;
use super::stats::mean_variance;
use super::train::{dump_attention, make_splits, save_run, train, write_metrics, SeedResult};
use crate::data::{perturb, Example, NoiseKind, NoiseSpec};
use crate::error::{Error, Result};
use crate::mixup::{StrategyConfig, StrategyKind};

pub const SUMMARY_HEADER: &str =
    "strategy,kind,proportion,n,seed_count,mean_acc,variance,wall_time_s";

/// Corpora an experiment runs on. Without `val`, each seed holds out part
/// of `train`.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: Vec<Example>,
    pub val: Option<Vec<Example>>,
    pub test: Vec<Example>,
}

impl Dataset {
    /// Stable fingerprint of the examples, recorded with every table.
    pub fn fingerprint(&self) -> String {
        let mut h = DefaultHasher::new();
        self.train.hash(&mut h);
        self.val.hash(&mut h);
        self.test.hash(&mut h);
        format!("{:016x}", h.finish())
    }
}

/// Training-split perturbation applied per seed; the seed becomes the
/// perturbation seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Perturbation {
    pub kind: NoiseKind,
    pub proportion: f64,
}

/// Multi-seed result for one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub strategy: StrategyConfig,
    pub perturbation: Option<Perturbation>,
    pub per_seed: Vec<SeedResult>,
    pub mean_accuracy: f64,
    pub variance: f64,
    pub wall_time: f64,
}

impl RunResult {
    pub fn tag(&self) -> String {
        let base = match self.strategy.kind {
            StrategyKind::Amplify if self.strategy.n_samples != 5 => {
                format!("{}-n{}", self.strategy.label(), self.strategy.n_samples)
            }
            _ => self.strategy.label(),
        };
        match self.perturbation {
            Some(p) => format!("{}-{:.2}-{base}", p.kind, p.proportion),
            None => base,
        }
    }

    fn summary_line(&self) -> String {
        let (kind, proportion) = match self.perturbation {
            Some(p) => (p.kind.to_string(), p.proportion),
            None => ("none".to_string(), 0.0),
        };
        let n = match self.strategy.kind {
            StrategyKind::Amplify => self.strategy.n_samples.to_string(),
            _ => String::new(),
        };
        format!(
            "{},{kind},{proportion},{n},{},{},{},{:.3}",
            self.strategy.label(),
            self.per_seed.len(),
            self.mean_accuracy,
            self.variance,
            self.wall_time
        )
    }
}

pub fn format_summary(rows: &[RunResult]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.summary_line());
    }
    out
}

/// Where a command writes its files. Per-run metrics go to
/// `runs/<tag>_seed<seed>.csv`.
#[derive(Clone, Debug)]
pub struct Output {
    pub dir: PathBuf,
    pub checkpoints: bool,
}

impl Output {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Output {
            dir: dir.into(),
            checkpoints: false,
        }
    }

    fn run_path(&self, tag: &str, seed: u64, what: &str) -> PathBuf {
        self.dir
            .join("runs")
            .join(format!("{tag}_seed{seed}{what}"))
    }
}

/// Train every seed of `cfg` on `data`, optionally perturbing the training
/// split, and aggregate test accuracy.
pub fn run_seeds(
    cfg: &TrainConfig,
    data: &Dataset,
    perturbation: Option<Perturbation>,
    out: Option<&Output>,
) -> Result<RunResult> {
    cfg.validate()?;
    let started = Instant::now();
    let mut per_seed = Vec::with_capacity(cfg.seeds.len());
    let mut result = RunResult {
        strategy: cfg.strategy.clone(),
        perturbation,
        per_seed: Vec::new(),
        mean_accuracy: 0.0,
        variance: 0.0,
        wall_time: 0.0,
    };
    let tag = result.tag();
    for &seed in &cfg.seeds {
        let mut splits = make_splits(
            &data.train,
            data.val.as_deref(),
            &data.test,
            cfg.eval_split_fraction,
            seed,
        )?;
        if let Some(p) = perturbation {
            splits.train = perturb(
                &splits.train,
                &NoiseSpec {
                    kind: p.kind,
                    proportion: p.proportion,
                    seed,
                },
            )?;
        }
        let outcome = train(cfg, &splits, seed)?;
        if let Some(out) = out {
            write_metrics(&out.run_path(&tag, seed, ".csv"), &outcome.metrics)?;
            if out.checkpoints {
                save_run(&out.run_path(&tag, seed, "_checkpoint"), &outcome, cfg)?;
            }
            if cfg.trace_attention {
                let path = out.run_path(&tag, seed, "_attention.jsonl");
                dump_attention(
                    &path,
                    &outcome.model,
                    &outcome.vocab,
                    &splits.test,
                    cfg.batch_size,
                )?;
            }
        }
        per_seed.push(outcome.result);
    }
    let accs: Vec<f64> = per_seed.iter().map(|r| r.test_accuracy).collect();
    (result.mean_accuracy, result.variance) = mean_variance(&accs);
    result.per_seed = per_seed;
    result.wall_time = started.elapsed().as_secs_f64();
    Ok(result)
}

#[derive(Serialize)]
struct ManifestRow {
    strategy: String,
    kind: String,
    proportion: f64,
    perturbation_seeds: Vec<u64>,
    metrics_files: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    dataset: String,
    seeds: &'a [u64],
    config: Vec<(String, String)>,
    rows: Vec<ManifestRow>,
}

/// `summary.csv` plus `manifest.json` recording dataset fingerprint,
/// seeds and the perturbation seed of every row.
pub fn write_summary(
    out: &Output,
    command: &str,
    cfg: &TrainConfig,
    data: &Dataset,
    rows: &[RunResult],
) -> Result<()> {
    fs::create_dir_all(&out.dir).map_err(|e| Error::io(&out.dir, e))?;
    let path = out.dir.join("summary.csv");
    fs::write(&path, format_summary(rows)).map_err(|e| Error::io(&path, e))?;
    let manifest = Manifest {
        command,
        dataset: data.fingerprint(),
        seeds: &cfg.seeds,
        config: cfg.to_pairs(),
        rows: rows
            .iter()
            .map(|r| ManifestRow {
                strategy: r.strategy.label(),
                kind: r.perturbation.map_or("none".into(), |p| p.kind.to_string()),
                proportion: r.perturbation.map_or(0.0, |p| p.proportion),
                perturbation_seeds: if r.perturbation.is_some() {
                    cfg.seeds.clone()
                } else {
                    Vec::new()
                },
                metrics_files: cfg
                    .seeds
                    .iter()
                    .map(|s| format!("runs/{}_seed{s}.csv", r.tag()))
                    .collect(),
            })
            .collect(),
    };
    let path = out.dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("serializing manifest");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

fn with_strategy(cfg: &TrainConfig, strategy: StrategyConfig) -> TrainConfig {
    TrainConfig {
        strategy,
        ..cfg.clone()
    }
}

/// One multi-seed run per strategy, in the given order, on identical data
/// and seeds.
pub fn compare(
    cfg: &TrainConfig,
    strategies: &[StrategyConfig],
    data: &Dataset,
    out: Option<&Output>,
) -> Result<Vec<RunResult>> {
    if strategies.is_empty() {
        return Err(Error::Config("compare needs at least one strategy".into()));
    }
    strategies
        .iter()
        .map(|s| run_seeds(&with_strategy(cfg, s.clone()), data, None, out))
        .collect()
}

pub const DEFAULT_N_VALUES: [usize; 6] = [1, 3, 5, 7, 9, 20];

/// Amplify with each number of weight draws.
pub fn sweep_n(
    cfg: &TrainConfig,
    n_values: &[usize],
    data: &Dataset,
    out: Option<&Output>,
) -> Result<Vec<RunResult>> {
    if n_values.is_empty() {
        return Err(Error::Config("sweep-n needs at least one n".into()));
    }
    n_values
        .iter()
        .map(|&n| {
            let strategy = StrategyConfig {
                n_samples: n,
                ..StrategyConfig::amplify()
            };
            run_seeds(&with_strategy(cfg, strategy), data, None, out)
        })
        .collect()
}

/// First, middle and last attention layer, then all layers.
pub fn default_site_sets(n_layers: usize) -> Vec<Option<Vec<usize>>> {
    let mut sets: Vec<Vec<usize>> = vec![vec![0], vec![n_layers / 2], vec![n_layers - 1]];
    sets.dedup();
    let mut out: Vec<Option<Vec<usize>>> = sets.into_iter().map(Some).collect();
    out.push(None);
    out
}

/// Amplify restricted to each layer subset (`None` = every layer).
pub fn ablate_depth(
    cfg: &TrainConfig,
    site_sets: &[Option<Vec<usize>>],
    data: &Dataset,
    out: Option<&Output>,
) -> Result<Vec<RunResult>> {
    if site_sets.is_empty() {
        return Err(Error::Config(
            "ablate-depth needs at least one layer set".into(),
        ));
    }
    site_sets
        .iter()
        .map(|set| {
            let strategy = StrategyConfig {
                amplify_layers: set.clone(),
                ..cfg.strategy.clone()
            };
            let strategy = if cfg.strategy.kind == StrategyKind::Amplify {
                strategy
            } else {
                StrategyConfig {
                    amplify_layers: set.clone(),
                    ..StrategyConfig::amplify()
                }
            };
            strategy.validate(cfg.model.n_layers)?;
            run_seeds(&with_strategy(cfg, strategy), data, None, out)
        })
        .collect()
}

/// One row per (kind, proportion, strategy); only the training split is
/// perturbed.
pub fn robustness(
    cfg: &TrainConfig,
    kinds: &[NoiseKind],
    proportions: &[f64],
    strategies: &[StrategyConfig],
    data: &Dataset,
    out: Option<&Output>,
) -> Result<Vec<RunResult>> {
    if kinds.is_empty() || proportions.is_empty() || strategies.is_empty() {
        return Err(Error::Config(
            "robustness needs kinds, proportions and strategies".into(),
        ));
    }
    let mut rows = Vec::new();
    for &kind in kinds {
        for &proportion in proportions {
            NoiseSpec {
                kind,
                proportion,
                seed: 0,
            }
            .validate()?;
            for s in strategies {
                let p = Perturbation { kind, proportion };
                rows.push(run_seeds(
                    &with_strategy(cfg, s.clone()),
                    data,
                    Some(p),
                    out,
                )?);
            }
        }
    }
    Ok(rows)
}

/// Per-run metrics files of an output directory, sorted by name.
pub fn metrics_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let runs = dir.join("runs");
    let mut files: Vec<PathBuf> = fs::read_dir(&runs)
        .map_err(|e| Error::io(&runs, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, SyntheticSpec};

    fn setup() -> (TrainConfig, Dataset) {
        let mut cfg = TrainConfig::default();
        cfg.model.d_model = 8;
        cfg.model.d_ff = 16;
        cfg.model.n_layers = 2;
        cfg.model.max_len = 32;
        cfg.batch_size = 8;
        cfg.max_epochs = 1;
        cfg.seeds = vec![1, 2];
        let spec = SyntheticSpec {
            n_train: 40,
            n_test: 16,
            ..Default::default()
        };
        let (train, test) = gen_synthetic(&spec, 0).unwrap();
        (
            cfg,
            Dataset {
                train,
                val: None,
                test,
            },
        )
    }

    #[test]
    fn compare_keeps_order_and_writes_files() {
        let (cfg, data) = setup();
        let dir = tempfile::tempdir().unwrap();
        let out = Output::new(dir.path());
        let strategies = [StrategyConfig::amplify(), StrategyConfig::no_mixup()];
        let rows = compare(&cfg, &strategies, &data, Some(&out)).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].strategy.kind, StrategyKind::Amplify);
        assert_eq!(rows[1].strategy.kind, StrategyKind::NoMixup);
        write_summary(&out, "compare", &cfg, &data, &rows).unwrap();
        let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        let lines: Vec<&str> = summary.lines().collect();
        assert_eq!(lines[0], SUMMARY_HEADER);
        assert!(lines[1].starts_with("amplify,none,0,5,2,"));
        assert!(lines[2].starts_with("none,none,0,,2,"));
        assert_eq!(metrics_files(dir.path()).unwrap().len(), 4);
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(manifest["dataset"], data.fingerprint());
    }

    #[test]
    fn single_strategy_single_row() {
        let (cfg, data) = setup();
        let rows = compare(&cfg, &[StrategyConfig::no_mixup()], &data, None).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(compare(&cfg, &[], &data, None).is_err());
    }

    #[test]
    fn aggregate_uses_population_variance() {
        let (cfg, data) = setup();
        let r = run_seeds(&cfg, &data, None, None).unwrap();
        let accs: Vec<f64> = r.per_seed.iter().map(|s| s.test_accuracy).collect();
        let m = (accs[0] + accs[1]) / 2.0;
        assert!((r.mean_accuracy - m).abs() < 1e-15);
        assert!((r.variance - ((accs[0] - m).powi(2) + (accs[1] - m).powi(2)) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn depth_ablation_degenerate_sets() {
        let (cfg, data) = setup();
        let rows = ablate_depth(&cfg, &[Some(vec![]), None], &data, None).unwrap();
        let plain = run_seeds(
            &with_strategy(&cfg, StrategyConfig::no_mixup()),
            &data,
            None,
            None,
        )
        .unwrap();
        let full = run_seeds(
            &with_strategy(&cfg, StrategyConfig::amplify()),
            &data,
            None,
            None,
        )
        .unwrap();
        let accs = |r: &RunResult| {
            r.per_seed
                .iter()
                .map(|s| s.test_accuracy)
                .collect::<Vec<_>>()
        };
        assert_eq!(accs(&rows[0]), accs(&plain));
        assert_eq!(accs(&rows[1]), accs(&full));
        assert!(ablate_depth(&cfg, &[Some(vec![7])], &data, None).is_err());
        assert_eq!(
            default_site_sets(2),
            vec![Some(vec![0]), Some(vec![1]), None]
        );
        assert_eq!(
            default_site_sets(3),
            vec![Some(vec![0]), Some(vec![1]), Some(vec![2]), None]
        );
    }

    #[test]
    fn zero_proportion_matches_unperturbed() {
        let (cfg, data) = setup();
        let rows = robustness(
            &cfg,
            &[NoiseKind::Delete],
            &[0.0, 0.2],
            &[StrategyConfig::no_mixup()],
            &data,
            None,
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        let clean = run_seeds(
            &with_strategy(&cfg, StrategyConfig::no_mixup()),
            &data,
            None,
            None,
        )
        .unwrap();
        assert_eq!(rows[0].mean_accuracy, clean.mean_accuracy);
        assert!(rows[1].summary_line().starts_with("none,delete,0.2,,2,"));
    }

    #[test]
    fn sweep_rows_follow_n_values() {
        let (mut cfg, data) = setup();
        cfg.seeds = vec![1];
        let rows = sweep_n(&cfg, &[1, 20], &data, None).unwrap();
        assert_eq!(
            rows.iter()
                .map(|r| r.strategy.n_samples)
                .collect::<Vec<_>>(),
            vec![1, 20]
        );
        assert_eq!(rows[1].tag(), "amplify-n20");
    }
}
