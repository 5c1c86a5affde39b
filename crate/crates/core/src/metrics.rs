//! ROC/AUC with DeLong uncertainties, the relative transfer gap and
//! gradient saliency.

use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Model;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub score: f64,
    /// 1 for signal, 0 for background.
    pub label: u8,
}

impl ScoredSample {
    pub fn new(score: f64, label: u8) -> Self {
        ScoredSample { score, label }
    }
}

/// Pairs scores with labels.
pub fn scored(scores: &[f64], labels: &[u8]) -> Result<Vec<ScoredSample>> {
    if scores.len() != labels.len() {
        return Err(Error::usage(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    Ok(scores.iter().zip(labels).map(|(&s, &l)| ScoredSample::new(s, l)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Samples with `score >= threshold` are called signal.
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    /// From `(0, 0)` at `threshold = +inf` to `(1, 1)`, one point per distinct score.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelongResult {
    pub auc: f64,
    pub variance: f64,
    pub std_error: f64,
}

fn check_samples(samples: &[ScoredSample], min_per_class: usize) -> Result<(usize, usize)> {
    let mut m = 0;
    let mut n = 0;
    for s in samples {
        if !s.score.is_finite() {
            return Err(Error::domain(format!("non-finite score {}", s.score)));
        }
        match s.label {
            1 => m += 1,
            0 => n += 1,
            other => return Err(Error::domain(format!("label must be 0 or 1, got {other}"))),
        }
    }
    if m < min_per_class || n < min_per_class {
        return Err(Error::domain(format!(
            "need at least {min_per_class} signal and {min_per_class} background samples, got {m} and {n}"
        )));
    }
    Ok((m, n))
}

/// 1-based midranks of `values` (ties share the mean of their ranks).
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mid = 0.5 * ((i + 1) + (j + 1)) as f64;
        for &k in &order[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    ranks
}

/// Structural components: per-signal placements `V10` and per-background
/// placements `V01`, ties counting one half.
fn placements(samples: &[ScoredSample], m: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let all: Vec<f64> = samples.iter().map(|s| s.score).collect();
    let sig: Vec<f64> = samples.iter().filter(|s| s.label == 1).map(|s| s.score).collect();
    let bkg: Vec<f64> = samples.iter().filter(|s| s.label == 0).map(|s| s.score).collect();
    let r_all = midranks(&all);
    let r_sig = midranks(&sig);
    let r_bkg = midranks(&bkg);

    let mut v10 = Vec::with_capacity(m);
    let mut v01 = Vec::with_capacity(n);
    let (mut is, mut ib) = (0, 0);
    for (k, s) in samples.iter().enumerate() {
        if s.label == 1 {
            v10.push((r_all[k] - r_sig[is]) / n as f64);
            is += 1;
        } else {
            v01.push(1.0 - (r_all[k] - r_bkg[ib]) / m as f64);
            ib += 1;
        }
    }
    (v10, v01)
}

/// Mann-Whitney AUC: the fraction of (signal, background) pairs ranked
/// correctly, ties counting one half.
pub fn auc(samples: &[ScoredSample]) -> Result<f64> {
    let (m, n) = check_samples(samples, 1)?;
    let scores: Vec<f64> = samples.iter().map(|s| s.score).collect();
    let ranks = midranks(&scores);
    let rank_sum: f64 = samples
        .iter()
        .zip(&ranks)
        .filter(|(s, _)| s.label == 1)
        .map(|(_, r)| r)
        .sum();
    let (m, n) = (m as f64, n as f64);
    Ok((rank_sum - m * (m + 1.0) / 2.0) / (m * n))
}

pub fn roc_auc(samples: &[ScoredSample]) -> Result<RocCurve> {
    let (m, n) = check_samples(samples, 1)?;
    let mut sorted: Vec<&ScoredSample> = samples.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].score;
        while i < sorted.len() && sorted[i].score == threshold {
            if sorted[i].label == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / n as f64,
            tpr: tp as f64 / m as f64,
            threshold,
        });
    }
    Ok(RocCurve {
        points,
        auc: auc(samples)?,
    })
}

/// Trapezoidal area under a list of ROC points.
pub fn trapezoid_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * 0.5 * (w[1].tpr + w[0].tpr))
        .sum()
}

fn sample_variance(xs: &[f64]) -> f64 {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64
}

/// AUC and its DeLong standard error, using unbiased sample variances of
/// the placement values.
pub fn delong_variance(samples: &[ScoredSample]) -> Result<DelongResult> {
    let (m, n) = check_samples(samples, 2)?;
    let (v10, v01) = placements(samples, m, n);
    let auc = v10.iter().sum::<f64>() / m as f64;
    let variance = (sample_variance(&v10) / m as f64 + sample_variance(&v01) / n as f64).max(0.0);
    Ok(DelongResult {
        auc,
        variance,
        std_error: variance.sqrt(),
    })
}

/// Relative AUC degradation `|native - transferred| / native`, as a fraction.
pub fn transfer_gap(auc_native: f64, auc_transferred: f64) -> Result<f64> {
    if !(auc_native > 0.0) || !auc_transferred.is_finite() || !auc_native.is_finite() {
        return Err(Error::domain(format!(
            "transfer gap needs a positive native AUC, got {auc_native} and {auc_transferred}"
        )));
    }
    Ok((auc_native - auc_transferred).abs() / auc_native)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaliencyEntry {
    pub index: usize,
    pub block: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaliencyReport {
    pub n_samples: usize,
    pub entries: Vec<SaliencyEntry>,
}

impl SaliencyReport {
    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.value).collect()
    }
}

/// Mean absolute gradient of the logit with respect to every flat parameter.
///
/// For each parameter the absolute values are summed in ascending order, so
/// the result does not depend on the order of `inputs`.
pub fn saliency<M: Model>(model: &M, inputs: &[&M::Input]) -> Result<SaliencyReport> {
    if inputs.is_empty() {
        return Err(Error::usage("saliency needs at least one input"));
    }
    let grads: Vec<Vec<f64>> = inputs
        .par_iter()
        .map(|x| model.logit_and_grad(x).map(|(_, g)| g))
        .collect::<Result<_>>()?;
    let labels = model.params().labels();
    let mut column = vec![0.0; grads.len()];
    let entries = labels
        .iter()
        .enumerate()
        .map(|(i, block)| {
            for (c, g) in column.iter_mut().zip(&grads) {
                *c = g[i].abs();
            }
            column.sort_by(f64::total_cmp);
            SaliencyEntry {
                index: i,
                block: block.to_string(),
                value: column.iter().sum::<f64>() / grads.len() as f64,
            }
        })
        .collect();
    Ok(SaliencyReport {
        n_samples: inputs.len(),
        entries,
    })
}

/// Summary written next to every evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub auc: f64,
    pub auc_std: f64,
    pub n_signal: usize,
    pub n_background: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub native_auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub transfer_gap: Option<f64>,
}

impl MetricsSummary {
    pub fn from_samples(samples: &[ScoredSample]) -> Result<Self> {
        let d = delong_variance(samples)?;
        let n_signal = samples.iter().filter(|s| s.label == 1).count();
        Ok(MetricsSummary {
            auc: d.auc,
            auc_std: d.std_error,
            n_signal,
            n_background: samples.len() - n_signal,
            native_auc: None,
            transfer_gap: None,
        })
    }
}

fn csv_error(e: std::io::Error) -> Error {
    Error::io("writing CSV", e)
}

pub fn write_roc_csv<W: Write>(mut out: W, curve: &RocCurve) -> Result<()> {
    writeln!(out, "fpr,tpr,threshold").map_err(csv_error)?;
    for p in &curve.points {
        writeln!(out, "{},{},{}", p.fpr, p.tpr, p.threshold).map_err(csv_error)?;
    }
    Ok(())
}

pub fn write_saliency_csv<W: Write>(mut out: W, report: &SaliencyReport) -> Result<()> {
    writeln!(out, "param_index,block,S_i").map_err(csv_error)?;
    for e in &report.entries {
        writeln!(out, "{},{},{}", e.index, e.block, e.value).map_err(csv_error)?;
    }
    Ok(())
}

/// Orders samples by score, breaking ties by label; handy for stable output.
pub fn sort_by_score(samples: &mut [ScoredSample]) {
    samples.sort_by(|a, b| match a.score.total_cmp(&b.score) {
        Ordering::Equal => a.label.cmp(&b.label),
        o => o,
    });
}
