mod commands;
mod config;
mod data;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qttn_core::models::ModelKind;

use config::{RunConfig, SplitChoice};
use error::{usage, CliResult};

/// Lund-tree jet tagging with tree-topology quantum circuits.
#[derive(Parser, Debug)]
#[command(name = "qttn", version)]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (results are identical for any count).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cluster events and write one Lund tree per selected leading jet.
    Decluster(DeclusterArgs),
    /// Generate labelled toy jets.
    GenToy(GenToyArgs),
    /// Train a model and write checkpoint, history and metrics.
    Train(TrainArgs),
    /// Evaluate a checkpoint: metrics JSON and ROC curve.
    Eval(EvalArgs),
    /// Train on shrinking subsets and tabulate test AUC per size.
    Lowdata(LowdataArgs),
    /// Evaluate on another domain and report the relative AUC drop.
    Transfer(EvalArgs),
    /// Mean absolute logit gradient per parameter.
    Saliency(SaliencyArgs),
}

#[derive(Args, Debug, Default)]
struct LundArgs {
    /// Anti-kt jet radius.
    #[arg(long = "R", alias = "radius")]
    radius: Option<f64>,
    /// Lund-tree depth.
    #[arg(long)]
    depth: Option<usize>,
    /// Splittings with ln kt at or below this are trimmed.
    #[arg(long)]
    lnkt_cut: Option<f64>,
    /// Keep only jets with mass in LOW:HIGH (GeV).
    #[arg(long, value_parser = parse_window, value_name = "LOW:HIGH")]
    mass_window: Option<(f64, f64)>,
}

impl LundArgs {
    fn apply(self, c: &mut RunConfig) {
        set(&mut c.radius, self.radius);
        set(&mut c.depth, self.depth);
        set(&mut c.lnkt_cut, self.lnkt_cut);
        if self.mass_window.is_some() {
            c.mass_window = self.mass_window;
        }
    }
}

#[derive(Args, Debug, Default)]
struct DataArgs {
    #[arg(long, short)]
    input: Option<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Split fraction used when the input carries no split tags.
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    val_fraction: Option<f64>,
}

impl DataArgs {
    fn apply(self, c: &mut RunConfig) {
        if self.input.is_some() {
            c.input = self.input;
        }
        if self.output.is_some() {
            c.output = self.output;
        }
        set(&mut c.seed, self.seed);
        set(&mut c.train_fraction, self.train_fraction);
        set(&mut c.val_fraction, self.val_fraction);
    }
}

#[derive(Args, Debug, Default)]
struct ModelArgs {
    #[arg(long)]
    model: Option<ModelKind>,
    /// QTTN layers.
    #[arg(long)]
    layers: Option<usize>,
    /// MLP hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// 1P1Q qubits.
    #[arg(long)]
    n_qubits: Option<usize>,
}

impl ModelArgs {
    fn apply(self, c: &mut RunConfig) {
        set(&mut c.model, self.model);
        set(&mut c.layers, self.layers);
        set(&mut c.hidden, self.hidden);
        set(&mut c.n_qubits, self.n_qubits);
    }
}

#[derive(Args, Debug, Default)]
struct OptimArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    warmup_epochs: Option<usize>,
    /// Fixed learning rate instead of the warmup-cosine schedule.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Stop after this many epochs without validation-loss improvement.
    #[arg(long)]
    patience: Option<usize>,
}

impl OptimArgs {
    fn apply(self, c: &mut RunConfig) {
        let t = &mut c.train;
        set(&mut t.epochs, self.epochs);
        set(&mut t.batch_size, self.batch_size);
        set(&mut t.warmup_epochs, self.warmup_epochs);
        set(&mut t.weight_decay, self.weight_decay);
        if self.lr.is_some() {
            t.constant_lr = self.lr;
        }
        if self.patience.is_some() {
            t.patience = self.patience;
        }
    }
}

#[derive(Args, Debug)]
struct DeclusterArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    lund: LundArgs,
}

#[derive(Args, Debug)]
struct GenToyArgs {
    /// Events per class.
    #[arg(long, short)]
    n_events: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    lund: LundArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    optim: OptimArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, short)]
    checkpoint: Option<PathBuf>,
    /// Records to evaluate [default: test].
    #[arg(long, value_enum)]
    split: Option<SplitChoice>,
    /// AUC of the model on its own domain; enables the transfer gap.
    #[arg(long)]
    native_auc: Option<f64>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    lund: LundArgs,
}

#[derive(Args, Debug)]
struct LowdataArgs {
    /// Per-class training sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    folds: Option<usize>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    lund: LundArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    optim: OptimArgs,
}

#[derive(Args, Debug)]
struct SaliencyArgs {
    #[arg(long, short)]
    checkpoint: Option<PathBuf>,
    /// Events drawn from the split [default: 1024].
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long, value_enum)]
    split: Option<SplitChoice>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    lund: LundArgs,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected LOW:HIGH")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("low edge: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("high edge: {e}"))?;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(format!("need finite LOW <= HIGH, got {lo}:{hi}"));
    }
    Ok((lo, hi))
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(format!("cannot size the thread pool: {e}")))?;
    }
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Decluster(a) => {
            a.data.apply(&mut cfg);
            a.lund.apply(&mut cfg);
            commands::decluster(&cfg)
        }
        Command::GenToy(a) => {
            set(&mut cfg.toy.n_events, a.n_events);
            set(&mut cfg.seed, a.seed);
            if a.output.is_some() {
                cfg.output = a.output;
            }
            commands::gen_toy(&cfg)
        }
        Command::Train(a) => {
            a.data.apply(&mut cfg);
            a.lund.apply(&mut cfg);
            a.model.apply(&mut cfg);
            a.optim.apply(&mut cfg);
            commands::train(&cfg)
        }
        Command::Eval(a) => {
            apply_eval(a, &mut cfg);
            commands::eval(&cfg, false)
        }
        Command::Transfer(a) => {
            apply_eval(a, &mut cfg);
            commands::eval(&cfg, true)
        }
        Command::Lowdata(a) => {
            set(&mut cfg.sizes, a.sizes);
            set(&mut cfg.folds, a.folds);
            a.data.apply(&mut cfg);
            a.lund.apply(&mut cfg);
            a.model.apply(&mut cfg);
            a.optim.apply(&mut cfg);
            commands::lowdata(&cfg)
        }
        Command::Saliency(a) => {
            if a.checkpoint.is_some() {
                cfg.checkpoint = a.checkpoint;
            }
            set(&mut cfg.n_samples, a.n_samples);
            if a.split.is_some() {
                cfg.split = a.split;
            }
            a.data.apply(&mut cfg);
            a.lund.apply(&mut cfg);
            commands::saliency(&cfg)
        }
    }
}

fn apply_eval(a: EvalArgs, cfg: &mut RunConfig) {
    if a.checkpoint.is_some() {
        cfg.checkpoint = a.checkpoint;
    }
    if a.split.is_some() {
        cfg.split = a.split;
    }
    if a.native_auc.is_some() {
        cfg.native_auc = a.native_auc;
    }
    a.data.apply(cfg);
    a.lund.apply(cfg);
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
