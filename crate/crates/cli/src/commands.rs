use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::Path;

use qttn_core::io::{read_events, write_jsonl, EventRecord, TreeRecord};
use qttn_core::jets::event_to_tree;
use qttn_core::metrics::{
    roc_auc, saliency as grad_saliency, scored, transfer_gap, write_roc_csv, write_saliency_csv, MetricsSummary,
    ScoredSample,
};
use qttn_core::models::{checkpoint_of, mean_loss, predict_logits, AnyModel, Checkpoint, Mlp, Model, ModelSpec, P1q, Qttn};
use qttn_core::toy::generate;
use qttn_core::train::{kfold_lowdata, train_model, write_history_csv, write_lowdata_csv, Dataset, Split};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{RunConfig, SplitChoice};
use crate::data::{load, select, Loaded, Shape};
use crate::error::{data, io_error, usage, CliResult};

/// Runs `$body` with `$m` bound to the concrete model and `$d` to the
/// matching dataset.
macro_rules! with_model {
    ($model:expr, $loaded:expr, |$m:ident, $d:ident| $body:expr) => {
        match ($model, $loaded) {
            (AnyModel::Qttn($m), Loaded::Trees($d)) => $body,
            (AnyModel::Mlp($m), Loaded::Flat($d)) => $body,
            (AnyModel::P1q($m), Loaded::P1q($d)) => $body,
            _ => Err(usage("model and data shapes disagree")),
        }
    };
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| io_error(path, e))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| io_error(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut text = serde_json::to_vec_pretty(value).expect("serialisable report");
    text.push(b'\n');
    text
}

/// Writes to `path`, or to stdout when no path is given.
fn emit(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => write_file(p, bytes),
        None => io::stdout()
            .write_all(bytes)
            .map_err(|e| data(format!("writing to stdout: {e}"))),
    }
}

// ---------------------------------------------------------------- decluster

pub fn decluster(cfg: &RunConfig) -> CliResult<()> {
    cfg.validate_lund()?;
    let input = cfg.require_input()?;
    let file = File::open(input).map_err(|e| io_error(input, e))?;
    let events = read_events(BufReader::new(file)).map_err(|e| data(format!("{}: {e}", input.display())))?;
    let lund = cfg.lund();
    let mut out = Vec::new();
    for (k, e) in events.iter().enumerate() {
        let particles = e.to_particles()?;
        let tree = event_to_tree(&particles, &lund).map_err(|err| data(format!("event {}: {err}", k + 1)))?;
        if let Some(tree) = tree {
            out.push(TreeRecord::from_tree(e.label, &tree, e.split));
        }
    }
    if out.is_empty() {
        eprintln!("warning: no jet survived the selection; output is empty");
    } else {
        eprintln!("kept {} of {} events", out.len(), events.len());
    }
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &out)?;
    emit(cfg.output.as_deref(), &buf)
}

// ---------------------------------------------------------------- gen-toy

pub fn gen_toy(cfg: &RunConfig) -> CliResult<()> {
    let toy = cfg.toy_config();
    toy.validate().map_err(|e| usage(e.to_string()))?;
    let events: Vec<EventRecord> = generate(&toy)?
        .iter()
        .map(|e| EventRecord::from_particles(e.label, &e.particles, None))
        .collect();
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &events)?;
    eprintln!("generated {} events ({} per class)", events.len(), toy.n_events);
    emit(cfg.output.as_deref(), &buf)
}

// ---------------------------------------------------------------- shared evaluation

#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub split: SplitChoice,
    pub n_events: usize,
    /// Epoch the evaluated parameters come from.
    pub epoch: usize,
    pub loss: f64,
    #[serde(flatten)]
    pub summary: MetricsSummary,
}

fn score<M: Model>(model: &M, ds: &Dataset<M::Input>, idx: &[usize]) -> CliResult<(Vec<ScoredSample>, f64)> {
    let inputs: Vec<&M::Input> = idx.iter().map(|&i| &ds.records()[i].input).collect();
    let labels: Vec<u8> = idx.iter().map(|&i| ds.records()[i].label).collect();
    let logits = predict_logits(model, &inputs)?;
    let loss = mean_loss(model, &inputs, &labels)?;
    Ok((scored(&logits, &labels)?, loss))
}

fn report(samples: &[ScoredSample], loss: f64, split: SplitChoice, epoch: usize) -> CliResult<EvalReport> {
    let summary = MetricsSummary::from_samples(samples)
        .map_err(|e| data(format!("cannot evaluate the {split:?} split: {e}")))?;
    Ok(EvalReport {
        split,
        n_events: samples.len(),
        epoch,
        loss,
        summary,
    })
}

// ---------------------------------------------------------------- train

#[derive(Serialize)]
struct TrainMetrics {
    val: EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    test: Option<EvalReport>,
}

pub fn train(cfg: &RunConfig) -> CliResult<()> {
    cfg.validate_training()?;
    let input = cfg.require_input()?;
    let out_dir = cfg.require_output()?;
    let spec = cfg.model_spec();
    let loaded = load(input, Shape::of(&spec)?, cfg, cfg.seed)?;
    let model = AnyModel::new(&spec, cfg.seed)?;
    let tc = cfg.train_config();

    let (ckpt, history, metrics) = with_model!(model, loaded, |m, ds| {
        let outcome = train_model(m, &ds, &tc)?;
        let (val_samples, val_loss) = score(&outcome.best, &ds, &ds.indices(Split::Val))?;
        let val = report(&val_samples, val_loss, SplitChoice::Val, outcome.best_epoch)?;
        let test_idx = ds.indices(Split::Test);
        let test = if test_idx.is_empty() {
            None
        } else {
            let (s, l) = score(&outcome.best, &ds, &test_idx)?;
            Some(report(&s, l, SplitChoice::Test, outcome.best_epoch)?)
        };
        Ok((
            checkpoint_of(&outcome.best, cfg.seed, outcome.best_epoch),
            outcome.history,
            TrainMetrics { val, test },
        ))
    })?;

    let mut history_csv = Vec::new();
    write_history_csv(&mut history_csv, &history)?;
    create_dir(out_dir)?;
    ckpt.save(&out_dir.join("checkpoint.json"))?;
    write_file(&out_dir.join("history.csv"), &history_csv)?;
    write_file(&out_dir.join("metrics.json"), &to_json(&metrics))?;
    write_file(&out_dir.join("run_config.json"), &to_json(cfg))?;
    println!(
        "best epoch {}: val AUC {:.4} +- {:.4}",
        metrics.val.epoch, metrics.val.summary.auc, metrics.val.summary.auc_std
    );
    if let Some(t) = &metrics.test {
        println!("test AUC {:.4} +- {:.4}", t.summary.auc, t.summary.auc_std);
    }
    Ok(())
}

// ---------------------------------------------------------------- eval / transfer

fn load_checkpoint(cfg: &RunConfig) -> CliResult<(Checkpoint, AnyModel)> {
    let path = cfg.require_checkpoint()?;
    let ckpt = Checkpoint::load(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    let model = AnyModel::from_checkpoint(&ckpt).map_err(|e| data(format!("{}: {e}", path.display())))?;
    Ok((ckpt, model))
}

pub fn eval(cfg: &RunConfig, transfer: bool) -> CliResult<()> {
    cfg.validate_lund()?;
    cfg.validate_fractions()?;
    if transfer && cfg.native_auc.is_none() {
        return Err(usage("transfer needs the native-domain AUC (--native-auc)"));
    }
    if let Some(a) = cfg.native_auc {
        if !(a > 0.0 && a <= 1.0) {
            return Err(usage(format!("--native-auc must lie in (0, 1], got {a}")));
        }
    }
    let input = cfg.require_input()?;
    let out_dir = cfg.require_output()?;
    let split = cfg.split.unwrap_or(SplitChoice::Test);
    let (ckpt, model) = load_checkpoint(cfg)?;
    let loaded = load(input, Shape::of(&ckpt.spec)?, cfg, ckpt.seed)?;

    let (samples, loss) = with_model!(model, loaded, |m, ds| {
        let idx = select(&ds, split);
        if idx.is_empty() {
            return Err(data(format!("no records in the {split:?} split")));
        }
        score(&m, &ds, &idx)
    })?;
    let mut rep = report(&samples, loss, split, ckpt.epoch)?;
    if let Some(native) = cfg.native_auc {
        rep.summary.native_auc = Some(native);
        rep.summary.transfer_gap = Some(transfer_gap(native, rep.summary.auc)?);
    }
    let curve = roc_auc(&samples)?;
    let mut roc_csv = Vec::new();
    write_roc_csv(&mut roc_csv, &curve)?;

    create_dir(out_dir)?;
    write_file(&out_dir.join("metrics.json"), &to_json(&rep))?;
    write_file(&out_dir.join("roc.csv"), &roc_csv)?;
    println!(
        "AUC {:.4} +- {:.4} on {} events",
        rep.summary.auc, rep.summary.auc_std, rep.n_events
    );
    if let Some(gap) = rep.summary.transfer_gap {
        println!("transfer gap {:.2}% (native AUC {})", 100.0 * gap, cfg.native_auc.unwrap_or_default());
    }
    Ok(())
}

// ---------------------------------------------------------------- lowdata

pub fn lowdata(cfg: &RunConfig) -> CliResult<()> {
    cfg.validate_training()?;
    if cfg.sizes.is_empty() || cfg.sizes.contains(&0) {
        return Err(usage("--sizes needs positive per-class training sizes"));
    }
    if cfg.folds == 0 {
        return Err(usage("--folds must be at least 1"));
    }
    let input = cfg.require_input()?;
    let out_dir = cfg.require_output()?;
    let spec = cfg.model_spec();
    let loaded = load(input, Shape::of(&spec)?, cfg, cfg.seed)?;
    let tc = cfg.train_config();
    let (sizes, k) = (&cfg.sizes, cfg.folds);

    let points = match (spec, loaded) {
        (ModelSpec::Qttn(c), Loaded::Trees(ds)) => kfold_lowdata(&ds, sizes, k, |s| Qttn::new(c.clone(), s), &tc)?,
        (ModelSpec::Mlp(c), Loaded::Flat(ds)) => kfold_lowdata(&ds, sizes, k, |s| Mlp::new(c.clone(), s), &tc)?,
        (ModelSpec::P1q(c), Loaded::P1q(ds)) => kfold_lowdata(&ds, sizes, k, |s| P1q::new(c.clone(), s), &tc)?,
        _ => return Err(usage("model and data shapes disagree")),
    };
    let mut csv = Vec::new();
    write_lowdata_csv(&mut csv, &points)?;
    create_dir(out_dir)?;
    write_file(&out_dir.join("lowdata.csv"), &csv)?;
    for p in &points {
        println!("size {}: AUC {:.4} +- {:.4}", p.size, p.mean_auc, p.std_auc);
    }
    Ok(())
}

// ---------------------------------------------------------------- saliency

pub fn saliency(cfg: &RunConfig) -> CliResult<()> {
    cfg.validate_lund()?;
    cfg.validate_fractions()?;
    if cfg.n_samples == 0 {
        return Err(usage("--n-samples must be positive"));
    }
    let input = cfg.require_input()?;
    let out_dir = cfg.require_output()?;
    let split = cfg.split.unwrap_or(SplitChoice::Test);
    let (ckpt, model) = load_checkpoint(cfg)?;
    let loaded = load(input, Shape::of(&ckpt.spec)?, cfg, ckpt.seed)?;

    let rep = with_model!(model, loaded, |m, ds| {
        let mut idx = select(&ds, split);
        if idx.is_empty() {
            return Err(data(format!("no records in the {split:?} split")));
        }
        if idx.len() > cfg.n_samples {
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
            idx.truncate(cfg.n_samples);
            idx.sort_unstable();
        }
        let inputs: Vec<_> = idx.iter().map(|&i| &ds.records()[i].input).collect();
        Ok(grad_saliency(&m, &inputs)?)
    })?;
    let mut csv = Vec::new();
    write_saliency_csv(&mut csv, &rep)?;
    create_dir(out_dir)?;
    write_file(&out_dir.join("saliency.csv"), &csv)?;
    println!("saliency of {} parameters over {} events", rep.entries.len(), rep.n_samples);
    Ok(())
}
