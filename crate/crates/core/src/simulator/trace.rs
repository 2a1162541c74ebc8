//! Episode traces as JSON lines: a `trace` header line followed by one
//! `step` line per step.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::{mc_safety, McParams, McState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub trace_id: u64,
    pub seed: u64,
    pub stream: u64,
    pub p0: f64,
    pub params: McParams,
    pub process_noise: (f64, f64),
    pub safe: bool,
    pub assumptions: Vec<bool>,
    pub steps: usize,
    /// State after the last step (the goal state when the episode ended
    /// early).
    pub final_state: McState,
    pub clipped_actions: usize,
    /// How the first assumption's region was obtained.
    pub assumption_region: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u32,
    pub state: [f64; 2],
    pub observation: [f64; 2],
    pub action: f64,
    pub confidences: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub header: TraceHeader,
    pub steps: Vec<StepRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line {
    Trace(TraceHeader),
    Step(StepRecord),
}

impl TraceRecord {
    pub fn states(&self) -> Vec<McState> {
        let mut s: Vec<McState> = self
            .steps
            .iter()
            .map(|r| McState {
                p: r.state[0],
                v: r.state[1],
                t: r.t,
            })
            .collect();
        s.push(self.header.final_state);
        s
    }

    /// Checks step numbering, array lengths and the stored safety verdict.
    pub fn validate(&self) -> Result<()> {
        let h = &self.header;
        if self.steps.len() != h.steps {
            return Err(Error::MalformedTrace(format!(
                "trace {} declares {} steps but holds {}",
                h.trace_id,
                h.steps,
                self.steps.len()
            )));
        }
        let width = self.steps.first().map_or(0, |s| s.confidences.len());
        for (i, s) in self.steps.iter().enumerate() {
            if s.t as usize != i || s.confidences.len() != width {
                return Err(Error::MalformedTrace(format!("trace {} step {i} is inconsistent", h.trace_id)));
            }
        }
        if h.final_state.t as usize != self.steps.len() {
            return Err(Error::MalformedTrace(format!("trace {} final state out of sequence", h.trace_id)));
        }
        if mc_safety(&self.states())? != h.safe {
            return Err(Error::MalformedTrace(format!(
                "trace {} safety verdict disagrees with its states",
                h.trace_id
            )));
        }
        Ok(())
    }
}

pub fn write_traces<W: Write>(traces: &[TraceRecord], mut w: W) -> Result<()> {
    for tr in traces {
        serde_json::to_writer(&mut w, &Line::Trace(tr.header.clone()))?;
        w.write_all(b"\n")?;
        for s in &tr.steps {
            serde_json::to_writer(&mut w, &Line::Step(s.clone()))?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_traces<R: Read>(r: R) -> Result<Vec<TraceRecord>> {
    let mut out: Vec<TraceRecord> = Vec::new();
    for (n, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Line>(&line)? {
            Line::Trace(header) => out.push(TraceRecord {
                header,
                steps: Vec::new(),
            }),
            Line::Step(step) => match out.last_mut() {
                Some(tr) => tr.steps.push(step),
                None => return Err(Error::MalformedTrace(format!("line {}: step before any trace header", n + 1))),
            },
        }
    }
    for tr in &out {
        tr.validate()?;
    }
    Ok(out)
}
