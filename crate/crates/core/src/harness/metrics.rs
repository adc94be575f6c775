//! Metrics rows for the supervised tasks and a generic CSV table reader.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const METRICS_HEADER: [&str; 8] = [
    "step",
    "epoch",
    "train_loss",
    "train_error",
    "running_error",
    "test_accuracy",
    "wallclock_ms",
    "peak_sequence_bytes",
];

/// One optimizer update.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    /// 1-based update counter.
    pub step: u64,
    /// 1-based epoch for the MNIST tasks.
    pub epoch: Option<usize>,
    pub train_loss: f64,
    /// Decision error of the batch.
    pub train_error: f64,
    /// Running mean of `train_error` over the configured window.
    pub running_error: f64,
    /// Test accuracy, on the last update of an evaluated epoch.
    pub test_accuracy: Option<f64>,
    pub wallclock_ms: Option<u128>,
    /// Largest per-sequence gradient state in the batch.
    pub peak_sequence_bytes: usize,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Append-only CSV writer that enforces a strictly increasing step index.
pub struct MetricsWriter<W: Write> {
    out: csv::Writer<W>,
    last_step: u64,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(METRICS_HEADER).map_err(csv_err)?;
        Ok(Self { out, last_step: 0 })
    }

    pub fn push(&mut self, row: &MetricsRow) -> Result<()> {
        if row.step <= self.last_step {
            return Err(Error::InvalidArgument(format!(
                "metrics step {} after step {}",
                row.step, self.last_step
            )));
        }
        self.last_step = row.step;
        let opt = |v: Option<String>| v.unwrap_or_default();
        self.out
            .write_record([
                row.step.to_string(),
                opt(row.epoch.map(|e| e.to_string())),
                row.train_loss.to_string(),
                row.train_error.to_string(),
                row.running_error.to_string(),
                opt(row.test_accuracy.map(|a| a.to_string())),
                opt(row.wallclock_ms.map(|w| w.to_string())),
                row.peak_sequence_bytes.to_string(),
            ])
            .map_err(csv_err)?;
        // Rows arrive at training pace, so flushing each one costs little and keeps
        // partial logs readable while a run is in progress.
        self.out.flush()?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        self.out.into_inner().map_err(|e| Error::Format(e.to_string()))
    }
}

pub fn write_metrics<W: Write>(rows: &[MetricsRow], w: W) -> Result<W> {
    let mut mw = MetricsWriter::new(w)?;
    for r in rows {
        mw.push(r)?;
    }
    mw.finish()
}

/// A CSV log read back as named numeric columns; empty cells are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl MetricsTable {
    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let row = rec
                .iter()
                .map(|cell| {
                    if cell.is_empty() {
                        Ok(None)
                    } else {
                        cell.parse::<f64>()
                            .map(Some)
                            .map_err(|_| Error::Format(format!("non-numeric cell '{cell}'")))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("no column '{name}' in [{}]", self.header.join(","))))
    }

    /// Non-empty values of a column in row order.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.column_index(name)?;
        Ok(self.rows.iter().filter_map(|r| r.get(i).copied().flatten()).collect())
    }
}

/// Mean of the last `window` values pushed.
#[derive(Debug, Clone)]
pub struct RunningMean {
    window: usize,
    buf: std::collections::VecDeque<f64>,
}

impl RunningMean {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            buf: std::collections::VecDeque::with_capacity(window),
        }
    }

    pub fn push(&mut self, v: f64) -> f64 {
        self.buf.push_back(v);
        if self.buf.len() > self.window {
            self.buf.pop_front();
        }
        self.mean()
    }

    /// Summed afresh from the window so rounding does not drift over long runs.
    pub fn mean(&self) -> f64 {
        if self.buf.is_empty() {
            return f64::NAN;
        }
        self.buf.iter().sum::<f64>() / self.buf.len() as f64
    }

    pub fn is_full(&self) -> bool {
        self.buf.len() == self.window
    }
}
