//! Aggregated result tables and their CSV, JSON and markdown forms.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{BinSummary, MetricSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// The monitor's own assumption, or the formula over all of them.
    Assumption,
    Safety,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Assumption => "assumption",
            Target::Safety => "safety",
        })
    }
}

impl std::str::FromStr for Target {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "assumption" => Ok(Target::Assumption),
            "safety" => Ok(Target::Safety),
            _ => Err(Error::Schema {
                row: 0,
                column: "target".into(),
                message: format!("unknown target `{s}`"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

impl Aggregate {
    /// Sample mean and standard deviation (`n - 1` denominator; 0 for a
    /// single value).
    pub fn of(values: &[f64]) -> Aggregate {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Aggregate { mean, std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricAggregate {
    pub ece: Aggregate,
    pub mce: Aggregate,
    pub cce: Aggregate,
    pub brier: Aggregate,
    pub auc: Aggregate,
}

impl MetricAggregate {
    pub fn of(sets: &[MetricSet]) -> MetricAggregate {
        let col = |f: fn(&MetricSet) -> f64| Aggregate::of(&sets.iter().map(f).collect::<Vec<_>>());
        MetricAggregate {
            ece: col(|m| m.ece),
            mce: col(|m| m.mce),
            cce: col(|m| m.cce),
            brier: col(|m| m.brier),
            auc: col(|m| m.auc),
        }
    }

    pub fn columns(&self) -> [Aggregate; 5] {
        [self.ece, self.mce, self.cce, self.brier, self.auc]
    }
}

pub const METRIC_NAMES: [&str; 5] = ["ece", "mce", "cce", "brier", "auc"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub lambda: f64,
    /// `m1`, `m2`, ... or a composition label.
    pub name: String,
    pub target: Target,
    pub metrics: MetricAggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRepetition {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub repetitions: usize,
    pub used: usize,
    pub skipped: Vec<SkippedRepetition>,
}

impl ResultTable {
    pub fn row(&self, lambda: f64, name: &str, target: Target) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| (r.lambda - lambda).abs() < 1e-12 && r.name == name && r.target == target)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["lambda".to_string(), "row".into(), "target".into()];
        for m in METRIC_NAMES {
            header.push(format!("{m}_mean"));
            header.push(format!("{m}_std"));
        }
        out.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.lambda.to_string(), r.name.clone(), r.target.to_string()];
            for a in r.metrics.columns() {
                rec.push(a.mean.to_string());
                rec.push(a.std.to_string());
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    /// One table per λ, values as `mean ± std` with six decimals.
    pub fn write_markdown<W: Write>(&self, mut w: W) -> Result<()> {
        let mut lambdas: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !lambdas.iter().any(|l| (l - r.lambda).abs() < 1e-12) {
                lambdas.push(r.lambda);
            }
        }
        writeln!(
            w,
            "Repetitions: {} requested, {} used, {} skipped.",
            self.repetitions,
            self.used,
            self.skipped.len()
        )?;
        for lambda in lambdas {
            writeln!(w)?;
            writeln!(w, "## lambda = {lambda}")?;
            writeln!(w)?;
            writeln!(w, "| Monitor | Target | ECE | MCE | CCE | Brier | AuC |")?;
            writeln!(w, "|---|---|---|---|---|---|---|")?;
            for r in self.rows.iter().filter(|r| (r.lambda - lambda).abs() < 1e-12) {
                write!(w, "| {} | {} |", r.name, r.target)?;
                for a in r.metrics.columns() {
                    write!(w, " {:.6} ± {:.6} |", a.mean, a.std)?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

/// Reads back the rows of [`ResultTable::write_markdown`] output.
pub fn parse_markdown(text: &str) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    let mut lambda = None;
    for line in text.lines() {
        if let Some(l) = line.strip_prefix("## lambda = ") {
            lambda = Some(l.trim().parse::<f64>().map_err(|e| Error::Config(e.to_string()))?);
            continue;
        }
        let cells: Vec<&str> = line.trim().trim_matches('|').split('|').map(str::trim).collect();
        if cells.len() != 7 || cells[0] == "Monitor" || cells[0].starts_with("---") {
            continue;
        }
        let lambda = lambda.ok_or_else(|| Error::Config("row before any lambda heading".into()))?;
        let mut aggs = Vec::with_capacity(5);
        for c in &cells[2..] {
            let (m, s) = c
                .split_once('±')
                .ok_or_else(|| Error::Config(format!("malformed cell `{c}`")))?;
            let num = |x: &str| x.trim().parse::<f64>().map_err(|e| Error::Config(e.to_string()));
            aggs.push(Aggregate { mean: num(m)?, std: num(s)? });
        }
        rows.push(ResultRow {
            lambda,
            name: cells[0].to_string(),
            target: cells[1].parse()?,
            metrics: MetricAggregate {
                ece: aggs[0],
                mce: aggs[1],
                cce: aggs[2],
                brier: aggs[3],
                auc: aggs[4],
            },
        });
    }
    Ok(rows)
}

/// Bin summary CSV with one line per non-empty bin.
pub fn write_reliability<W: Write>(summary: &BinSummary, w: W) -> Result<()> {
    let non_empty = BinSummary {
        bins: summary.non_empty().cloned().collect(),
        total: summary.total,
    };
    non_empty.write_csv(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{bin_summaries, Binning};

    fn set(v: f64) -> MetricSet {
        MetricSet {
            ece: v,
            mce: 2.0 * v,
            cce: -v,
            brier: v / 2.0,
            auc: 1.0 - v,
        }
    }

    fn table() -> ResultTable {
        ResultTable {
            rows: vec![
                ResultRow {
                    lambda: 0.5,
                    name: "m1".into(),
                    target: Target::Assumption,
                    metrics: MetricAggregate::of(&[set(0.1), set(0.2), set(0.6)]),
                },
                ResultRow {
                    lambda: 0.8,
                    name: "Weighted Avg.".into(),
                    target: Target::Safety,
                    metrics: MetricAggregate::of(&[set(0.125)]),
                },
            ],
            repetitions: 3,
            used: 3,
            skipped: vec![],
        }
    }

    #[test]
    fn aggregates_match_hand_computation() {
        // values 0.1, 0.2, 0.6: mean 0.3, deviations -0.2, -0.1, 0.3, sum of squares 0.14
        let a = MetricAggregate::of(&[set(0.1), set(0.2), set(0.6)]);
        assert!((a.ece.mean - 0.3).abs() < 1e-15);
        assert!((a.ece.std - 0.07f64.sqrt()).abs() < 1e-15);
        assert!((a.mce.std - 2.0 * 0.07f64.sqrt()).abs() < 1e-15);
        assert!((a.auc.mean - 0.7).abs() < 1e-15);
        let single = MetricAggregate::of(&[set(0.4)]);
        assert!(single.columns().iter().all(|c| c.std == 0.0));
    }

    #[test]
    fn csv_has_header_and_one_line_per_row() {
        let mut buf = Vec::new();
        table().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("lambda,row,target,ece_mean,ece_std,mce_mean"));
        assert!(lines[0].ends_with("auc_mean,auc_std"));
        let mut empty = Vec::new();
        ResultTable::default().write_csv(&mut empty).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap().lines().count(), 1);
    }

    #[test]
    fn markdown_round_trips_through_json() {
        let t = table();
        let mut json = Vec::new();
        t.write_json(&mut json).unwrap();
        let back: ResultTable = serde_json::from_slice(&json).unwrap();
        let mut md = Vec::new();
        t.write_markdown(&mut md).unwrap();
        let parsed = parse_markdown(std::str::from_utf8(&md).unwrap()).unwrap();
        assert_eq!(parsed.len(), back.rows.len());
        for (p, r) in parsed.iter().zip(&back.rows) {
            assert_eq!((p.lambda, &p.name, p.target), (r.lambda, &r.name, r.target));
            for (a, b) in p.metrics.columns().iter().zip(r.metrics.columns()) {
                assert!((a.mean - b.mean).abs() <= 5e-7 && (a.std - b.std).abs() <= 5e-7);
            }
        }
    }

    #[test]
    fn reliability_lists_non_empty_bins() {
        let b = Binning::uniform(10).unwrap();
        let s = bin_summaries(&[0.95, 0.97, 0.99], &[true, true, false], &b).unwrap();
        let mut buf = Vec::new();
        write_reliability(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("bin_lo,bin_hi,count,conf,occ"));
    }
}
