use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use amplify_core::data::{
    gen_synthetic, load_corpus, write_synthetic, NoiseKind, SyntheticSpec, Vocab,
};
use amplify_core::harness::{
    self, format_summary, write_metrics, write_summary, Dataset, MetricRow, Output, RunResult,
    TrainConfig, DEFAULT_N_VALUES,
};
use amplify_core::mixup::{StrategyConfig, StrategyKind};
use amplify_core::model::{Model, ModelConfig};
use amplify_core::tensor::load_checkpoint;
use amplify_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "amplify",
    version,
    about = "Train and compare mixup strategies on a tiny transformer classifier"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one strategy over every seed and save checkpoints
    Train(RunArgs),
    /// Evaluate a saved checkpoint on a corpus
    Eval(EvalArgs),
    /// Run several strategies on identical data and seeds
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated strategy kinds
        #[arg(long, default_value = "none,amplify,embedmix,sentencemix,tmix")]
        strategies: String,
    },
    /// Amplify with different numbers of weight draws
    SweepN {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long = "n-values", value_delimiter = ',')]
        n_values: Option<Vec<usize>>,
    },
    /// Amplify restricted to subsets of attention layers
    AblateDepth {
        #[command(flatten)]
        run: RunArgs,
        /// Semicolon-separated layer sets, e.g. "0;1;0,1;all;none"
        #[arg(long)]
        layers: Option<String>,
    },
    /// Perturb the training split and compare strategies
    Robustness {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "delete,swap")]
        kinds: String,
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.10,0.15,0.20")]
        proportions: Vec<f64>,
        #[arg(long, default_value = "none,amplify")]
        strategies: String,
    },
    /// Write a synthetic keyword-classification corpus
    GenData(GenArgs),
    /// Welch's two-sample t-test
    Ttest {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        a: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        b: Vec<f64>,
    },
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Training corpus (JSON lines with "text" and "label")
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Generate the default synthetic corpus in memory instead of reading files
    #[arg(long, conflicts_with_all = ["train", "val", "test"])]
    synthetic: bool,
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output directory for metrics, summary and checkpoints
    #[arg(long)]
    out: PathBuf,
    /// `key = value` configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any configuration key, e.g. --set model.d_model=64
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    n_samples: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    warmup_fraction: Option<String>,
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    max_epochs: Option<String>,
    #[arg(long)]
    early_stop_patience: Option<String>,
    #[arg(long)]
    weight_decay: Option<String>,
    #[arg(long)]
    adam_eps: Option<String>,
    /// Comma-separated seeds
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    eval_split_fraction: Option<String>,
    #[arg(long)]
    trace_attention: bool,
    #[arg(long)]
    d_model: Option<String>,
    #[arg(long)]
    n_heads: Option<String>,
    #[arg(long)]
    d_ff: Option<String>,
    #[arg(long)]
    n_layers: Option<String>,
    #[arg(long)]
    n_classes: Option<String>,
    #[arg(long)]
    max_len: Option<String>,
    #[arg(long)]
    dropout: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Corpus to evaluate on
    #[arg(long)]
    data: PathBuf,
    /// Optional metrics file for the result
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    n_classes: usize,
    #[arg(long, default_value_t = 200)]
    vocab_size: usize,
    #[arg(long, default_value_t = 8)]
    min_len: usize,
    #[arg(long, default_value_t = 24)]
    max_len: usize,
    #[arg(long, default_value_t = 2000)]
    n_train: usize,
    #[arg(long, default_value_t = 500)]
    n_test: usize,
    #[arg(long, default_value_t = 5)]
    signal_tokens_per_class: usize,
    #[arg(long, default_value_t = 0.05)]
    noise_rate: f64,
}

impl RunArgs {
    fn config(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => TrainConfig::from_file(path)?,
            None => TrainConfig::default(),
        };
        let mut pairs: Vec<(String, String)> = Vec::new();
        let flags = [
            ("strategy.kind", &self.strategy),
            ("strategy.alpha", &self.alpha),
            ("strategy.n_samples", &self.n_samples),
            ("lr", &self.lr),
            ("warmup_fraction", &self.warmup_fraction),
            ("schedule", &self.schedule),
            ("batch_size", &self.batch_size),
            ("max_epochs", &self.max_epochs),
            ("early_stop_patience", &self.early_stop_patience),
            ("weight_decay", &self.weight_decay),
            ("adam_eps", &self.adam_eps),
            ("seeds", &self.seeds),
            ("eval_split_fraction", &self.eval_split_fraction),
            ("model.d_model", &self.d_model),
            ("model.n_heads", &self.n_heads),
            ("model.d_ff", &self.d_ff),
            ("model.n_layers", &self.n_layers),
            ("model.n_classes", &self.n_classes),
            ("model.max_len", &self.max_len),
            ("model.dropout", &self.dropout),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                pairs.push((key.to_string(), v.clone()));
            }
        }
        if self.trace_attention {
            pairs.push(("trace_attention".into(), "true".into()));
        }
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {s:?}")))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        cfg.apply(&pairs)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn dataset(&self) -> Result<Dataset> {
        let d = &self.data;
        if d.synthetic {
            let (train, test) = gen_synthetic(&SyntheticSpec::default(), d.data_seed)?;
            return Ok(Dataset {
                train,
                val: None,
                test,
            });
        }
        let (Some(train), Some(test)) = (&d.train, &d.test) else {
            return Err(Error::Config(
                "give --train and --test, or --synthetic".into(),
            ));
        };
        Ok(Dataset {
            train: load_corpus(train)?,
            val: d.val.as_deref().map(load_corpus).transpose()?,
            test: load_corpus(test)?,
        })
    }
}

fn parse_kinds(s: &str) -> Result<Vec<StrategyKind>> {
    s.split(',')
        .filter(|k| !k.trim().is_empty())
        .map(str::parse)
        .collect()
}

fn parse_noise(s: &str) -> Result<Vec<NoiseKind>> {
    s.split(',')
        .filter(|k| !k.trim().is_empty())
        .map(str::parse)
        .collect()
}

fn parse_layer_sets(s: &str) -> Result<Vec<Option<Vec<usize>>>> {
    s.split(';')
        .map(|set| match set.trim() {
            "all" => Ok(None),
            "none" | "" => Ok(Some(Vec::new())),
            list => list
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("bad layer index {v:?}")))
                })
                .collect::<Result<Vec<usize>>>()
                .map(Some),
        })
        .collect()
}

fn strategies_for(kinds: &[StrategyKind], base: &TrainConfig) -> Vec<StrategyConfig> {
    kinds
        .iter()
        .map(|&k| {
            if k == base.strategy.kind {
                base.strategy.clone()
            } else {
                StrategyConfig::for_kind(k, base.model.n_layers)
            }
        })
        .collect()
}

fn finish(
    run: &RunArgs,
    command: &str,
    cfg: &TrainConfig,
    data: &Dataset,
    rows: &[RunResult],
) -> Result<()> {
    write_summary(&Output::new(&run.out), command, cfg, data, rows)?;
    print!("{}", format_summary(rows));
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let pairs: Vec<(&String, &String)> = ckpt
        .metadata
        .iter()
        .filter(|(k, _)| k.starts_with("model."))
        .collect();
    let mut cfg = TrainConfig::default();
    cfg.apply(&pairs)?;
    let vocab = Vocab::load(&args.checkpoint.join("vocab.txt"))?;
    let model_cfg = ModelConfig {
        vocab_size: vocab.len(),
        ..cfg.model
    };
    let mut model = Model::new(
        model_cfg,
        &mut amplify_core::rng::stream(0, amplify_core::rng::Stream::Init),
    )?;
    ckpt.restore(model.parameters_mut())?;
    let examples = load_corpus(&args.data)?;
    if examples.is_empty() {
        return Err(Error::Data(format!("{} is empty", args.data.display())));
    }
    let (loss, accuracy) = harness::evaluate(&model, &vocab, &examples)?;
    println!(
        "examples,loss,accuracy\n{},{loss},{accuracy}",
        examples.len()
    );
    if let Some(out) = &args.out {
        let step = ckpt
            .metadata
            .get("step")
            .and_then(|s| s.parse().ok())
            .unwrap_or(0);
        let row = MetricRow {
            step,
            epoch: 0,
            split: "eval",
            loss,
            accuracy,
            lr: 0.0,
            lambda_max: None,
        };
        write_metrics(out, &[row])?;
    }
    Ok(())
}

fn gen_data(args: &GenArgs) -> Result<()> {
    let spec = SyntheticSpec {
        n_classes: args.n_classes,
        vocab_size: args.vocab_size,
        seq_len_range: (args.min_len, args.max_len),
        n_train: args.n_train,
        n_test: args.n_test,
        signal_tokens_per_class: args.signal_tokens_per_class,
        noise_rate: args.noise_rate,
    };
    write_synthetic(&args.out, &spec, args.seed).map_err(|e| match e {
        Error::Parameter(msg) => Error::Config(msg),
        other => other,
    })?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(run) => {
            let cfg = run.config()?;
            let data = run.dataset()?;
            let out = Output {
                dir: run.out.clone(),
                checkpoints: true,
            };
            let row = harness::run_seeds(&cfg, &data, None, Some(&out))?;
            finish(&run, "train", &cfg, &data, &[row])
        }
        Command::Eval(args) => eval(&args),
        Command::Compare { run, strategies } => {
            let cfg = run.config()?;
            let data = run.dataset()?;
            let strategies = strategies_for(&parse_kinds(&strategies)?, &cfg);
            for s in &strategies {
                s.validate(cfg.model.n_layers)?;
            }
            let rows = harness::compare(&cfg, &strategies, &data, Some(&Output::new(&run.out)))?;
            finish(&run, "compare", &cfg, &data, &rows)
        }
        Command::SweepN { run, n_values } => {
            let cfg = run.config()?;
            let data = run.dataset()?;
            let n_values = n_values.unwrap_or_else(|| DEFAULT_N_VALUES.to_vec());
            let rows = harness::sweep_n(&cfg, &n_values, &data, Some(&Output::new(&run.out)))?;
            finish(&run, "sweep-n", &cfg, &data, &rows)
        }
        Command::AblateDepth { run, layers } => {
            let cfg = run.config()?;
            let data = run.dataset()?;
            let sets = match layers {
                Some(s) => parse_layer_sets(&s)?,
                None => harness::default_site_sets(cfg.model.n_layers),
            };
            let rows = harness::ablate_depth(&cfg, &sets, &data, Some(&Output::new(&run.out)))?;
            finish(&run, "ablate-depth", &cfg, &data, &rows)
        }
        Command::Robustness {
            run,
            kinds,
            proportions,
            strategies,
        } => {
            let cfg = run.config()?;
            let data = run.dataset()?;
            let strategies = strategies_for(&parse_kinds(&strategies)?, &cfg);
            let rows = harness::robustness(
                &cfg,
                &parse_noise(&kinds)?,
                &proportions,
                &strategies,
                &data,
                Some(&Output::new(&run.out)),
            )
            .map_err(|e| match e {
                Error::Parameter(msg) => Error::Config(msg),
                other => other,
            })?;
            finish(&run, "robustness", &cfg, &data, &rows)
        }
        Command::GenData(args) => gen_data(&args),
        Command::Ttest { a, b } => {
            let r = harness::t_test(&a, &b).map_err(|e| match e {
                Error::Parameter(msg) => Error::Config(msg),
                other => other,
            })?;
            println!("t,df,p\n{},{},{}", r.t, r.df, r.p);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
