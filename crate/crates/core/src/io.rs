//! JSONL readers and writers for events and Lund trees.
//!
//! Event line: `{"label": 1, "constituents": [[pt, y, phi], ...], "split": "train"}`
//! Tree line: `{"label": 1, "nodes": [[x1, x2], ...], "split": "val"}`
//!
//! `split` is optional on input. Blank lines are skipped; line numbers in
//! errors are 1-based.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jets::{LundNode, LundTree, Particle};
use crate::train::Split;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub label: u8,
    pub constituents: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl EventRecord {
    pub fn from_particles(label: u8, particles: &[Particle], split: Option<Split>) -> Self {
        EventRecord {
            label,
            constituents: particles.iter().map(|p| [p.pt, p.y, p.phi]).collect(),
            split,
        }
    }

    pub fn to_particles(&self) -> Result<Vec<Particle>> {
        self.constituents.iter().map(|&[pt, y, phi]| Particle::new(pt, y, phi)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeRecord {
    pub label: u8,
    pub nodes: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl TreeRecord {
    pub fn from_tree(label: u8, tree: &LundTree, split: Option<Split>) -> Self {
        TreeRecord {
            label,
            nodes: tree.nodes().iter().map(|n| [n.x1, n.x2]).collect(),
            split,
        }
    }

    pub fn to_tree(&self) -> Result<LundTree> {
        let n = self.nodes.len();
        if n == 0 || !(n + 1).is_power_of_two() {
            return Err(Error::validation(format!("a full binary tree needs 2^D - 1 nodes, got {n}")));
        }
        let depth = (n + 1).trailing_zeros() as usize;
        LundTree::from_nodes(depth, self.nodes.iter().map(|&[a, b]| LundNode::new(a, b)).collect())
    }
}

/// Either kind of input line.
#[derive(Clone, Debug, PartialEq)]
pub enum DataRecord {
    Event(EventRecord),
    Tree(TreeRecord),
}

impl DataRecord {
    pub fn label(&self) -> u8 {
        match self {
            DataRecord::Event(e) => e.label,
            DataRecord::Tree(t) => t.label,
        }
    }

    pub fn split(&self) -> Option<Split> {
        match self {
            DataRecord::Event(e) => e.split,
            DataRecord::Tree(t) => t.split,
        }
    }
}

fn parse_error(line: usize, message: impl std::fmt::Display) -> Error {
    Error::Parse {
        line,
        message: message.to_string(),
    }
}

fn check_label(line: usize, label: u8) -> Result<()> {
    if label > 1 {
        return Err(parse_error(line, format!("label must be 0 or 1, got {label}")));
    }
    Ok(())
}

fn for_each_line<R: BufRead>(reader: R, mut f: impl FnMut(usize, &str) -> Result<()>) -> Result<()> {
    for (k, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading line {}", k + 1), e))?;
        if line.trim().is_empty() {
            continue;
        }
        f(k + 1, &line)?;
    }
    Ok(())
}

fn parse_event(line: usize, text: &str) -> Result<EventRecord> {
    let rec: EventRecord = serde_json::from_str(text).map_err(|e| parse_error(line, e))?;
    check_label(line, rec.label)?;
    if rec.constituents.is_empty() {
        return Err(parse_error(line, "event has no constituents"));
    }
    rec.to_particles().map_err(|e| parse_error(line, e))?;
    Ok(rec)
}

fn parse_tree(line: usize, text: &str) -> Result<TreeRecord> {
    let rec: TreeRecord = serde_json::from_str(text).map_err(|e| parse_error(line, e))?;
    check_label(line, rec.label)?;
    rec.to_tree().map_err(|e| parse_error(line, e))?;
    Ok(rec)
}

pub fn read_events<R: BufRead>(reader: R) -> Result<Vec<EventRecord>> {
    let mut out = Vec::new();
    for_each_line(reader, |line, text| {
        out.push(parse_event(line, text)?);
        Ok(())
    })?;
    Ok(out)
}

pub fn read_trees<R: BufRead>(reader: R) -> Result<Vec<TreeRecord>> {
    let mut out = Vec::new();
    for_each_line(reader, |line, text| {
        out.push(parse_tree(line, text)?);
        Ok(())
    })?;
    Ok(out)
}

/// Reads a file of event lines or tree lines, telling them apart by the
/// `constituents` / `nodes` key. Mixing the two kinds is an error.
pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<DataRecord>> {
    let mut out: Vec<DataRecord> = Vec::new();
    for_each_line(reader, |line, text| {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| parse_error(line, e))?;
        let rec = if value.get("constituents").is_some() {
            DataRecord::Event(parse_event(line, text)?)
        } else if value.get("nodes").is_some() {
            DataRecord::Tree(parse_tree(line, text)?)
        } else {
            return Err(parse_error(line, "expected a 'constituents' or 'nodes' field"));
        };
        if let Some(first) = out.first() {
            if std::mem::discriminant(first) != std::mem::discriminant(&rec) {
                return Err(parse_error(line, "file mixes event and tree lines"));
            }
        }
        out.push(rec);
        Ok(())
    })?;
    Ok(out)
}

pub fn write_jsonl<W: Write, T: Serialize>(mut out: W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n").map_err(|e| Error::io("writing JSONL", e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_round_trip() {
        let rec = EventRecord {
            label: 1,
            constituents: vec![[100.0, 0.1, 0.2], [20.5, -0.3, 3.0]],
            split: Some(Split::Val),
        };
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &[rec.clone()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"split\":\"val\""));
        assert_eq!(read_events(buf.as_slice()).unwrap(), vec![rec]);
    }

    #[test]
    fn split_is_optional() {
        let recs = read_events("{\"label\":0,\"constituents\":[[5,0,0]]}\n\n".as_bytes()).unwrap();
        assert_eq!(recs[0].split, None);
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let text = "{\"label\":0,\"constituents\":[[5,0,0]]}\n{\"label\":1,\"constituents\":[[5,0]]}\n";
        match read_events(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let text = "{\"label\":2,\"constituents\":[[5,0,0]]}\n";
        assert!(matches!(read_events(text.as_bytes()), Err(Error::Parse { line: 1, .. })));
        let text = "{\"label\":0,\"constituents\":[[-5,0,0]]}\n";
        assert!(matches!(read_events(text.as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn tree_depth_is_inferred() {
        let rec = TreeRecord {
            label: 0,
            nodes: vec![[0.5, 1.0], [0.0, 0.0], [0.0, 0.0]],
            split: None,
        };
        assert_eq!(rec.to_tree().unwrap().depth(), 2);
        let bad = TreeRecord {
            nodes: vec![[0.5, 1.0]; 4],
            ..rec
        };
        assert!(bad.to_tree().is_err());
    }

    #[test]
    fn mixed_files_are_rejected() {
        let text = "{\"label\":0,\"constituents\":[[5,0,0]]}\n{\"label\":0,\"nodes\":[[0,0]]}\n";
        assert!(matches!(read_records(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let text = "{\"label\":0}\n";
        assert!(matches!(read_records(text.as_bytes()), Err(Error::Parse { line: 1, .. })));
    }
}
