use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Loss and conductivities were stable over the patience window.
    Converged,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    /// 1-based iteration index.
    pub iter: usize,
    pub loss: f64,
    pub sigma: Vec<f64>,
    pub mre: Option<f64>,
    pub t_forward_s: f64,
    pub t_grad_s: f64,
    pub t_update_s: f64,
}

impl IterRecord {
    pub fn new(iter: usize, loss: f64, sigma: Vec<f64>, mre: Option<f64>) -> Self {
        IterRecord { iter, loss, sigma, mre, t_forward_s: 0.0, t_grad_s: 0.0, t_update_s: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationTrace {
    pub num_slots: usize,
    pub records: Vec<IterRecord>,
    pub stop_reason: Option<StopReason>,
}

impl EstimationTrace {
    pub fn new(num_slots: usize) -> Self {
        EstimationTrace { num_slots, records: Vec::new(), stop_reason: None }
    }

    /// Final iteration index I.
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iter)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }

    pub fn final_mre(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.mre)
    }

    /// First iteration whose MRE is at or below `threshold`.
    pub fn iterations_to_mre(&self, threshold: f64) -> Option<usize> {
        self.records.iter().find(|r| r.mre.is_some_and(|m| m <= threshold)).map(|r| r.iter)
    }

    /// Mean per-iteration phase times (forward, gradient, update), seconds.
    pub fn mean_phase_times(&self) -> (f64, f64, f64) {
        let n = self.records.len().max(1) as f64;
        let sum = self.records.iter().fold((0.0, 0.0, 0.0), |a, r| (a.0 + r.t_forward_s, a.1 + r.t_grad_s, a.2 + r.t_update_s));
        (sum.0 / n, sum.1 / n, sum.2 / n)
    }

    pub fn csv_header(num_slots: usize) -> Vec<String> {
        let mut h = vec!["iter".to_string(), "loss".into(), "mre".into()];
        h.extend((1..=num_slots).map(|k| format!("sigma_{k}")));
        h.extend(["t_forward_s", "t_grad_s", "t_update_s"].map(String::from));
        h
    }

    /// Fixed-precision CSV: `iter, loss, mre, sigma_1..sigma_K, t_forward_s, t_grad_s, t_update_s`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::csv_header(self.num_slots))?;
        for r in &self.records {
            let mut row = vec![r.iter.to_string(), fmt(r.loss), r.mre.map(fmt).unwrap_or_default()];
            row.extend(r.sigma.iter().map(|&s| fmt(s)));
            row.extend([r.t_forward_s, r.t_grad_s, r.t_update_s].map(fmt));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is ascii"))
    }

    /// Parses the CSV form; the stop reason is not part of it.
    pub fn read_csv<R: Read>(input: R) -> Result<EstimationTrace> {
        let mut rd = csv::Reader::from_reader(input);
        let headers = rd.headers()?.clone();
        let k = headers
            .len()
            .checked_sub(6)
            .ok_or_else(|| Error::InvalidInput("trace csv has too few columns".into()))?;
        if headers.iter().collect::<Vec<_>>() != Self::csv_header(k) {
            return Err(Error::InvalidInput("unexpected trace csv header".into()));
        }
        let mut trace = EstimationTrace::new(k);
        for row in rd.records() {
            let row = row?;
            let num = |i: usize| -> Result<f64> {
                row[i].parse().map_err(|_| Error::InvalidInput(format!("bad number `{}`", &row[i])))
            };
            let iter = row[0].parse().map_err(|_| Error::InvalidInput(format!("bad iteration `{}`", &row[0])))?;
            let mre = if row[2].is_empty() { None } else { Some(num(2)?) };
            let sigma = (3..3 + k).map(num).collect::<Result<Vec<_>>>()?;
            let mut rec = IterRecord::new(iter, num(1)?, sigma, mre);
            rec.t_forward_s = num(3 + k)?;
            rec.t_grad_s = num(4 + k)?;
            rec.t_update_s = num(5 + k)?;
            trace.records.push(rec);
        }
        Ok(trace)
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}
