//! Turns a JSONL file into a dataset shaped for a particular model.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use qttn_core::encodings::{p1q_input_from_event, P1qInput};
use qttn_core::io::{read_records, DataRecord};
use qttn_core::jets::{event_to_tree, LundConfig, LundTree};
use qttn_core::models::ModelSpec;
use qttn_core::train::{assign_splits, Dataset, Record, Split};

use crate::config::RunConfig;
use crate::error::{data, io_error, usage, CliResult};

/// The input each model family consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Tree { depth: usize },
    Flat { depth: usize },
    P1q { n_qubits: usize },
}

impl Shape {
    pub fn of(spec: &ModelSpec) -> CliResult<Shape> {
        Ok(match spec {
            ModelSpec::Qttn(c) => Shape::Tree { depth: c.depth },
            ModelSpec::P1q(c) => Shape::P1q { n_qubits: c.n_qubits },
            ModelSpec::Mlp(c) => {
                // flattened trees carry 2 (2^D - 1) features
                let nodes = c.input_dim / 2;
                if c.input_dim % 2 != 0 || !(nodes + 1).is_power_of_two() {
                    return Err(usage(format!(
                        "MLP input width {} is not a flattened Lund tree",
                        c.input_dim
                    )));
                }
                Shape::Flat {
                    depth: (nodes + 1).trailing_zeros() as usize,
                }
            }
        })
    }
}

pub enum Loaded {
    Trees(Dataset<LundTree>),
    Flat(Dataset<Vec<f64>>),
    P1q(Dataset<P1qInput>),
}

pub fn read_file(path: &Path) -> CliResult<Vec<DataRecord>> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    read_records(BufReader::new(file)).map_err(|e| data(format!("{}: {e}", path.display())))
}

/// Converts records and resolves splits. Events failing the mass window are
/// dropped; records without a split get one from the seeded stratified
/// assignment.
pub fn load(path: &Path, shape: Shape, cfg: &RunConfig, split_seed: u64) -> CliResult<Loaded> {
    let records = read_file(path)?;
    if records.is_empty() {
        return Err(data(format!("{}: no records", path.display())));
    }
    let lund = LundConfig {
        depth: match shape {
            Shape::Tree { depth } | Shape::Flat { depth } => depth,
            Shape::P1q { .. } => cfg.depth,
        },
        ..cfg.lund()
    };
    lund.validate().map_err(|e| usage(e.to_string()))?;

    let mut labels = Vec::new();
    let mut given = Vec::new();
    let loaded = match shape {
        Shape::Tree { .. } | Shape::Flat { .. } => {
            let mut trees = Vec::new();
            for (k, rec) in records.iter().enumerate() {
                let tree = match rec {
                    DataRecord::Event(e) => event_to_tree(&e.to_particles()?, &lund)?,
                    DataRecord::Tree(t) => Some(t.to_tree()?),
                };
                let Some(tree) = tree else { continue };
                if tree.depth() != lund.depth {
                    return Err(data(format!(
                        "record {}: depth-{} tree, model expects depth {}",
                        k + 1,
                        tree.depth(),
                        lund.depth
                    )));
                }
                trees.push(tree);
                labels.push(rec.label());
                given.push(rec.split());
            }
            let splits = resolve_splits(&labels, &given, cfg, split_seed)?;
            let ds = build(trees, &labels, splits)?;
            match shape {
                Shape::Tree { .. } => Loaded::Trees(ds),
                _ => Loaded::Flat(ds.map(|t| t.flatten())),
            }
        }
        Shape::P1q { n_qubits } => {
            let mut inputs = Vec::new();
            for (k, rec) in records.iter().enumerate() {
                let DataRecord::Event(e) = rec else {
                    return Err(data(format!(
                        "record {}: the 1P1Q model needs constituent events, not Lund trees",
                        k + 1
                    )));
                };
                let Some(input) = p1q_input_from_event(&e.to_particles()?, &lund, n_qubits)? else {
                    continue;
                };
                inputs.push(input);
                labels.push(rec.label());
                given.push(rec.split());
            }
            let splits = resolve_splits(&labels, &given, cfg, split_seed)?;
            Loaded::P1q(build(inputs, &labels, splits)?)
        }
    };
    if labels.is_empty() {
        return Err(data(format!("{}: no event passes the jet selection", path.display())));
    }
    Ok(loaded)
}

fn resolve_splits(labels: &[u8], given: &[Option<Split>], cfg: &RunConfig, seed: u64) -> CliResult<Vec<Split>> {
    let tagged = given.iter().filter(|s| s.is_some()).count();
    if tagged == given.len() {
        return Ok(given.iter().map(|s| s.expect("all tagged")).collect());
    }
    if tagged > 0 {
        return Err(data(format!(
            "{tagged} of {} records carry a split; tag all of them or none",
            given.len()
        )));
    }
    Ok(assign_splits(labels, cfg.train_fraction, cfg.val_fraction, seed)?)
}

fn build<T>(inputs: Vec<T>, labels: &[u8], splits: Vec<Split>) -> CliResult<Dataset<T>> {
    let records = inputs
        .into_iter()
        .zip(labels)
        .zip(splits)
        .map(|((input, &label), split)| Record { input, label, split })
        .collect();
    Ok(Dataset::new(records)?)
}

/// Indices of the records selected by `choice`.
pub fn select<T>(ds: &Dataset<T>, choice: crate::config::SplitChoice) -> Vec<usize> {
    (0..ds.len()).filter(|&i| choice.matches(ds.records()[i].split)).collect()
}
