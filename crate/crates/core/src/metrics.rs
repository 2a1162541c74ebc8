//! Binned calibration errors, Brier score and ROC AuC.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 10;

/// Bin edges `0 = e_0 < ... < e_K = 1`. Bins are `[e_k, e_{k+1})` except the
/// last, which is closed at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    edges: Vec<f64>,
}

impl Binning {
    pub fn uniform(bin_count: usize) -> Result<Self> {
        if bin_count == 0 {
            return Err(Error::InvalidArgument("bin count must be at least 1".into()));
        }
        let k = bin_count as f64;
        let mut edges: Vec<f64> = (0..=bin_count).map(|i| i as f64 / k).collect();
        edges[bin_count] = 1.0;
        Ok(Binning { edges })
    }

    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        let ok = edges.len() >= 2
            && edges[0] == 0.0
            && *edges.last().unwrap() == 1.0
            && edges.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(Error::InvalidArgument(
                "edges must increase strictly from 0 to 1".into(),
            ));
        }
        Ok(Binning { edges })
    }

    pub fn bin_count(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn index_of(&self, m: f64) -> usize {
        let k = self.bin_count();
        // first edge strictly greater than m, minus one
        let i = self.edges.partition_point(|&e| e <= m);
        i.saturating_sub(1).min(k - 1)
    }
}

impl Default for Binning {
    fn default() -> Self {
        Binning::uniform(DEFAULT_BINS).expect("non-zero bin count")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Mean confidence; `None` for empty bins.
    pub conf: Option<f64>,
    /// Occurrence rate; `None` for empty bins.
    pub occ: Option<f64>,
}

impl Bin {
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// `conf - occ` for non-empty bins.
    pub fn gap(&self) -> Option<f64> {
        Some(self.conf? - self.occ?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub bins: Vec<Bin>,
    pub total: usize,
}

impl BinSummary {
    pub fn non_empty(&self) -> impl Iterator<Item = &Bin> {
        self.bins.iter().filter(|b| !b.is_empty())
    }

    pub fn ece(&self) -> f64 {
        let n = self.total as f64;
        self.non_empty()
            .map(|b| b.count as f64 / n * b.gap().unwrap().abs())
            .sum()
    }

    pub fn mce(&self) -> f64 {
        self.non_empty()
            .map(|b| b.gap().unwrap().abs())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn cce(&self) -> f64 {
        self.non_empty()
            .map(|b| b.gap().unwrap())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `bin_lo,bin_hi,count,conf,occ`; empty bins leave conf/occ blank.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["bin_lo", "bin_hi", "count", "conf", "occ"])?;
        for b in &self.bins {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            out.write_record([
                b.lo.to_string(),
                b.hi.to_string(),
                b.count.to_string(),
                opt(b.conf),
                opt(b.occ),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_lengths(ms: &[f64], labels: &[bool]) -> Result<()> {
    if ms.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: ms.len(),
            right: labels.len(),
        });
    }
    if ms.is_empty() {
        return Err(Error::Empty("confidences"));
    }
    Ok(())
}

pub fn bin_summaries(ms: &[f64], labels: &[bool], b: &Binning) -> Result<BinSummary> {
    check_lengths(ms, labels)?;
    let k = b.bin_count();
    let mut count = vec![0usize; k];
    let mut sum_m = vec![0.0; k];
    let mut pos = vec![0usize; k];
    for (&m, &a) in ms.iter().zip(labels) {
        let i = b.index_of(m);
        count[i] += 1;
        sum_m[i] += m;
        pos[i] += usize::from(a);
    }
    let bins = (0..k)
        .map(|i| {
            let c = count[i];
            let (conf, occ) = if c == 0 {
                (None, None)
            } else {
                (Some(sum_m[i] / c as f64), Some(pos[i] as f64 / c as f64))
            };
            Bin {
                lo: b.edges[i],
                hi: b.edges[i + 1],
                count: c,
                conf,
                occ,
            }
        })
        .collect();
    Ok(BinSummary {
        bins,
        total: ms.len(),
    })
}

pub fn ece_hat(ms: &[f64], labels: &[bool], b: &Binning) -> Result<f64> {
    Ok(bin_summaries(ms, labels, b)?.ece())
}

pub fn mce_hat(ms: &[f64], labels: &[bool], b: &Binning) -> Result<f64> {
    Ok(bin_summaries(ms, labels, b)?.mce())
}

/// Largest signed overconfidence `conf - occ` over non-empty bins.
pub fn cce_hat(ms: &[f64], labels: &[bool], b: &Binning) -> Result<f64> {
    Ok(bin_summaries(ms, labels, b)?.cce())
}

pub fn brier(ms: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(ms, labels)?;
    let s: f64 = ms
        .iter()
        .zip(labels)
        .map(|(&m, &a)| {
            let d = m - f64::from(u8::from(a));
            d * d
        })
        .sum();
    Ok(s / ms.len() as f64)
}

/// Area under the ROC curve by trapezoidal integration over thresholds at
/// the distinct confidence values. Tied scores contribute one half per
/// positive/negative pair.
pub fn auc(ms: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(ms, labels)?;
    let positives = labels.iter().filter(|&&a| a).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedAuc);
    }
    let mut order: Vec<usize> = (0..ms.len()).collect();
    order.sort_by(|&i, &j| ms[j].total_cmp(&ms[i]));

    // Area in units of (pos × neg) pairs; integer-valued halves keep it exact.
    let mut twice_area: u128 = 0;
    let mut tp_before: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let score = ms[order[i]];
        let (mut tp, mut fp) = (0u128, 0u128);
        while i < order.len() && ms[order[i]] == score {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        twice_area += fp * (2 * tp_before + tp);
        tp_before += tp;
    }
    Ok(twice_area as f64 / (2.0 * positives as f64 * negatives as f64))
}

/// Every metric on one set of predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub ece: f64,
    pub mce: f64,
    pub cce: f64,
    pub brier: f64,
    pub auc: f64,
}

pub fn metric_set(ms: &[f64], labels: &[bool], b: &Binning) -> Result<MetricSet> {
    let s = bin_summaries(ms, labels, b)?;
    Ok(MetricSet {
        ece: s.ece(),
        mce: s.mce(),
        cce: s.cce(),
        brier: brier(ms, labels)?,
        auc: auc(ms, labels)?,
    })
}
