//! Shared domain types: confidences, per-step monitor samples, datasets,
//! trace-aware splitting, seeded randomness and CSV/JSON interchange.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A probability estimate in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Confidence(f64);

impl Confidence {
    pub const ZERO: Confidence = Confidence(0.0);
    pub const ONE: Confidence = Confidence(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Confidence(value))
        } else {
            Err(Error::NotAConfidence(value))
        }
    }

    /// Clamps into `[0, 1]`. NaN maps to 0.
    pub fn clamped(value: f64) -> Self {
        if value.is_nan() {
            Confidence(0.0)
        } else {
            Confidence(value.clamp(0.0, 1.0))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Confidence {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Confidence::new(value)
    }
}

impl From<Confidence> for f64 {
    fn from(c: Confidence) -> f64 {
        c.0
    }
}

impl fmt::Display for Confidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

pub fn confidences(values: &[f64]) -> Result<Vec<Confidence>> {
    values.iter().map(|&v| Confidence::new(v)).collect()
}

pub fn raw(values: &[Confidence]) -> Vec<f64> {
    values.iter().map(|c| c.get()).collect()
}

/// One time step of one trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSample {
    pub trace_id: u64,
    pub step: u32,
    pub monitor_values: Vec<Confidence>,
    pub assumption_flags: Vec<bool>,
    pub safety_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    samples: Vec<MonitorSample>,
    monitor_count: usize,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Dataset {
    /// Validates list lengths and per-trace constancy of the safety flag.
    pub fn new(monitor_count: usize, samples: Vec<MonitorSample>) -> Result<Self> {
        let mut safety: HashMap<u64, bool> = HashMap::new();
        for (i, s) in samples.iter().enumerate() {
            if s.monitor_values.len() != monitor_count {
                return Err(Error::Schema {
                    row: i + 1,
                    column: "m_*".into(),
                    message: format!(
                        "expected {monitor_count} monitor values, found {}",
                        s.monitor_values.len()
                    ),
                });
            }
            if s.assumption_flags.len() != monitor_count {
                return Err(Error::Schema {
                    row: i + 1,
                    column: "a_*".into(),
                    message: format!(
                        "expected {monitor_count} assumption flags, found {}",
                        s.assumption_flags.len()
                    ),
                });
            }
            if let Some(&prev) = safety.get(&s.trace_id) {
                if prev != s.safety_flag {
                    return Err(Error::Schema {
                        row: i + 1,
                        column: "phi".into(),
                        message: format!("safety flag changes within trace {}", s.trace_id),
                    });
                }
            } else {
                safety.insert(s.trace_id, s.safety_flag);
            }
        }
        Ok(Dataset {
            samples,
            monitor_count,
            metadata: BTreeMap::new(),
        })
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    pub fn samples(&self) -> &[MonitorSample] {
        &self.samples
    }

    pub fn monitor_count(&self) -> usize {
        self.monitor_count
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Distinct trace ids in order of first appearance.
    pub fn trace_ids(&self) -> Vec<u64> {
        let mut seen = HashSet::new();
        self.samples
            .iter()
            .filter(|s| seen.insert(s.trace_id))
            .map(|s| s.trace_id)
            .collect()
    }

    pub fn monitor_column(&self, index: usize) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| s.monitor_values[index].get())
            .collect()
    }

    pub fn assumption_column(&self, index: usize) -> Vec<bool> {
        self.samples
            .iter()
            .map(|s| s.assumption_flags[index])
            .collect()
    }

    pub fn safety_column(&self) -> Vec<bool> {
        self.samples.iter().map(|s| s.safety_flag).collect()
    }

    fn subset(&self, keep: &HashSet<u64>) -> Dataset {
        Dataset {
            samples: self
                .samples
                .iter()
                .filter(|s| keep.contains(&s.trace_id))
                .cloned()
                .collect(),
            monitor_count: self.monitor_count,
            metadata: self.metadata.clone(),
        }
    }
}

/// Seed plus stream selector for ChaCha-based generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngSeed {
    pub fn new(seed: u64) -> Self {
        RngSeed { seed, stream_id: 0 }
    }

    pub fn with_stream(seed: u64, stream_id: u64) -> Self {
        RngSeed { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Independent child seed for a labelled sub-computation.
    pub fn substream(&self, tag: u64) -> RngSeed {
        RngSeed {
            seed: splitmix64(self.seed ^ splitmix64(tag.wrapping_add(0x9e37_79b9))),
            stream_id: self.stream_id,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Partitions traces (never individual samples) into two datasets. The
/// first holds `round_half_up(fraction * traces)` traces.
pub fn split_by_trace(d: &Dataset, fraction: f64, seed: RngSeed) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Split(format!("fraction {fraction} not in (0, 1)")));
    }
    let mut ids = d.trace_ids();
    if ids.len() < 2 {
        return Err(Error::Split(format!(
            "need at least 2 traces, found {}",
            ids.len()
        )));
    }
    let first_count = (fraction * ids.len() as f64 + 0.5).floor() as usize;
    ids.shuffle(&mut seed.rng());
    let first: HashSet<u64> = ids[..first_count].iter().copied().collect();
    let second: HashSet<u64> = ids[first_count..].iter().copied().collect();
    Ok((d.subset(&first), d.subset(&second)))
}

/// Sample mean and unbiased variance of one monitor column.
pub fn monitor_stats(d: &Dataset, monitor_index: usize) -> Result<(f64, f64)> {
    if monitor_index >= d.monitor_count() {
        return Err(Error::MissingMonitor(monitor_index));
    }
    if d.is_empty() {
        return Err(Error::Statistics("empty dataset".into()));
    }
    mean_variance(&d.monitor_column(monitor_index))
}

pub fn mean_variance(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Statistics("no values".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok((mean, ss / (n - 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Json,
}

impl DataFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Ok(DataFormat::Csv),
            Some(e) if e.eq_ignore_ascii_case("json") => Ok(DataFormat::Json),
            _ => Err(Error::InvalidArgument(format!(
                "cannot infer data format from {}",
                path.display()
            ))),
        }
    }
}

pub fn load_dataset(path: &Path, format: DataFormat) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    match format {
        DataFormat::Csv => read_csv(file),
        DataFormat::Json => read_json(file),
    }
}

pub fn save_dataset(d: &Dataset, path: &Path, format: DataFormat) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    match format {
        DataFormat::Csv => write_csv(d, &mut w)?,
        DataFormat::Json => write_json(d, &mut w)?,
    }
    w.flush()?;
    Ok(())
}

fn header(k: usize) -> Vec<String> {
    let mut h = vec!["trace_id".to_string(), "step".to_string()];
    h.extend((1..=k).map(|i| format!("m_{i}")));
    h.extend((1..=k).map(|i| format!("a_{i}")));
    h.push("phi".into());
    h
}

pub fn write_csv<W: Write>(d: &Dataset, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header(d.monitor_count()))?;
    for s in d.samples() {
        let mut rec = vec![s.trace_id.to_string(), s.step.to_string()];
        rec.extend(s.monitor_values.iter().map(|m| m.get().to_string()));
        rec.extend(s.assumption_flags.iter().map(|&a| flag(a).to_string()));
        rec.push(flag(s.safety_flag).to_string());
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

fn flag(b: bool) -> u8 {
    u8::from(b)
}

pub fn read_csv<R: Read>(r: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if names.len() < 3 || !(names.len() - 3).is_multiple_of(2) {
        return Err(Error::Schema {
            row: 0,
            column: names.join(","),
            message: "header must be trace_id,step,m_1..m_k,a_1..a_k,phi".into(),
        });
    }
    let k = (names.len() - 3) / 2;
    let expected = header(k);
    for (got, want) in names.iter().zip(&expected) {
        if got != want {
            return Err(Error::Schema {
                row: 0,
                column: got.clone(),
                message: format!("expected column `{want}`"),
            });
        }
    }
    let mut samples = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        if rec.len() != expected.len() {
            return Err(Error::Schema {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", expected.len(), rec.len()),
            });
        }
        let field = |j: usize| (&expected[j], &rec[j]);
        let trace_id = parse_int::<u64>(row, field(0))?;
        let step = parse_int::<u32>(row, field(1))?;
        let monitor_values = (0..k)
            .map(|j| parse_confidence(row, field(2 + j)))
            .collect::<Result<Vec<_>>>()?;
        let assumption_flags = (0..k)
            .map(|j| parse_flag(row, field(2 + k + j)))
            .collect::<Result<Vec<_>>>()?;
        let safety_flag = parse_flag(row, field(2 + 2 * k))?;
        samples.push(MonitorSample {
            trace_id,
            step,
            monitor_values,
            assumption_flags,
            safety_flag,
        });
    }
    Dataset::new(k, samples)
}

fn parse_int<T: std::str::FromStr>(row: usize, (col, text): (&String, &str)) -> Result<T> {
    text.parse().map_err(|_| Error::Schema {
        row,
        column: col.clone(),
        message: format!("`{text}` is not a non-negative integer"),
    })
}

fn parse_confidence(row: usize, (col, text): (&String, &str)) -> Result<Confidence> {
    let v: f64 = text.parse().map_err(|_| Error::Schema {
        row,
        column: col.clone(),
        message: format!("`{text}` is not a number"),
    })?;
    Confidence::new(v).map_err(|_| Error::Range {
        row,
        column: col.clone(),
        value: v,
    })
}

fn parse_flag(row: usize, (col, text): (&String, &str)) -> Result<bool> {
    match text {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(Error::Schema {
            row,
            column: col.clone(),
            message: format!("`{text}` is not 0 or 1"),
        }),
    }
}

pub fn write_json<W: Write>(d: &Dataset, w: W) -> Result<()> {
    let k = d.monitor_count();
    let rows: Vec<serde_json::Value> = d
        .samples()
        .iter()
        .map(|s| {
            let mut obj = serde_json::Map::new();
            obj.insert("trace_id".into(), s.trace_id.into());
            obj.insert("step".into(), s.step.into());
            for i in 0..k {
                obj.insert(format!("m_{}", i + 1), s.monitor_values[i].get().into());
            }
            for i in 0..k {
                obj.insert(format!("a_{}", i + 1), flag(s.assumption_flags[i]).into());
            }
            obj.insert("phi".into(), flag(s.safety_flag).into());
            serde_json::Value::Object(obj)
        })
        .collect();
    serde_json::to_writer_pretty(w, &rows)?;
    Ok(())
}

pub fn read_json<R: Read>(r: R) -> Result<Dataset> {
    let rows: Vec<serde_json::Map<String, serde_json::Value>> = serde_json::from_reader(r)?;
    let k = rows
        .first()
        .map(|o| o.keys().filter(|key| key.starts_with("m_")).count())
        .unwrap_or(0);
    let names = header(k);
    let mut samples = Vec::with_capacity(rows.len());
    for (i, obj) in rows.iter().enumerate() {
        let row = i + 1;
        let get = |name: &String| {
            obj.get(name).ok_or_else(|| Error::Schema {
                row,
                column: name.clone(),
                message: "missing field".into(),
            })
        };
        let as_u64 = |name: &String| {
            get(name)?.as_u64().ok_or_else(|| Error::Schema {
                row,
                column: name.clone(),
                message: "expected a non-negative integer".into(),
            })
        };
        let as_flag = |name: &String| match as_u64(name)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::Schema {
                row,
                column: name.clone(),
                message: format!("`{other}` is not 0 or 1"),
            }),
        };
        let trace_id = as_u64(&names[0])?;
        let step = u32::try_from(as_u64(&names[1])?).map_err(|_| Error::Schema {
            row,
            column: names[1].clone(),
            message: "step out of range".into(),
        })?;
        let mut monitor_values = Vec::with_capacity(k);
        for name in &names[2..2 + k] {
            let v = get(name)?.as_f64().ok_or_else(|| Error::Schema {
                row,
                column: name.clone(),
                message: "expected a number".into(),
            })?;
            monitor_values.push(Confidence::new(v).map_err(|_| Error::Range {
                row,
                column: name.clone(),
                value: v,
            })?);
        }
        let assumption_flags = names[2 + k..2 + 2 * k]
            .iter()
            .map(as_flag)
            .collect::<Result<Vec<_>>>()?;
        let safety_flag = as_flag(&names[2 + 2 * k])?;
        samples.push(MonitorSample {
            trace_id,
            step,
            monitor_values,
            assumption_flags,
            safety_flag,
        });
    }
    Dataset::new(k, samples)
}
