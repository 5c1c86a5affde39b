use std::collections::BTreeMap;
use std::ops::Range;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
struct BlockSpec {
    name: String,
    range: Range<usize>,
}

/// Named, ordered blocks of trainable scalars over one flat vector.
///
/// Global indices are stable: block `k` starts where block `k - 1` ends, in
/// insertion order. Each scalar also carries a weight-decay flag.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterSet {
    values: Vec<f64>,
    decay: Vec<bool>,
    blocks: Vec<BlockSpec>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a block whose scalars are all decayed (or all exempt).
    pub fn push_block(&mut self, name: &str, values: Vec<f64>, decay: bool) {
        let mask = vec![decay; values.len()];
        self.push_block_masked(name, values, mask);
    }

    pub fn push_block_masked(&mut self, name: &str, values: Vec<f64>, decay: Vec<bool>) {
        assert_eq!(values.len(), decay.len(), "decay mask length");
        assert!(self.block_range(name).is_none(), "duplicate block {name}");
        let start = self.values.len();
        self.values.extend(values);
        self.decay.extend(decay);
        self.blocks.push(BlockSpec {
            name: name.to_string(),
            range: start..self.values.len(),
        });
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn decay_mask(&self) -> &[bool] {
        &self.decay
    }

    pub fn block_names(&self) -> impl Iterator<Item = &str> {
        self.blocks.iter().map(|b| b.name.as_str())
    }

    pub fn block_range(&self, name: &str) -> Option<Range<usize>> {
        self.blocks.iter().find(|b| b.name == name).map(|b| b.range.clone())
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.block_range(name).map(|r| &self.values[r])
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        self.block_range(name).map(move |r| &mut self.values[r])
    }

    /// Block name of every flat index.
    pub fn labels(&self) -> Vec<&str> {
        let mut out = Vec::with_capacity(self.len());
        for b in &self.blocks {
            out.extend(std::iter::repeat_n(b.name.as_str(), b.range.len()));
        }
        out
    }

    /// Replaces every value from a flat vector of the same length.
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.values.len() {
            return Err(Error::usage(format!(
                "expected {} parameters, got {}",
                self.values.len(),
                flat.len()
            )));
        }
        self.values.copy_from_slice(flat);
        Ok(())
    }

    pub fn to_named(&self) -> BTreeMap<String, Vec<f64>> {
        self.blocks
            .iter()
            .map(|b| (b.name.clone(), self.values[b.range.clone()].to_vec()))
            .collect()
    }

    /// Overwrites blocks from a name → values map. Every block must be
    /// present with the right length and no unknown names are allowed.
    pub fn fill_named(&mut self, named: &BTreeMap<String, Vec<f64>>) -> Result<()> {
        for name in named.keys() {
            if self.block_range(name).is_none() {
                return Err(Error::validation(format!("unknown parameter block '{name}'")));
            }
        }
        for b in &self.blocks {
            let values = named
                .get(&b.name)
                .ok_or_else(|| Error::validation(format!("missing parameter block '{}'", b.name)))?;
            if values.len() != b.range.len() {
                return Err(Error::validation(format!(
                    "block '{}' needs {} values, got {}",
                    b.name,
                    b.range.len(),
                    values.len()
                )));
            }
            self.values[b.range.clone()].copy_from_slice(values);
        }
        Ok(())
    }
}
