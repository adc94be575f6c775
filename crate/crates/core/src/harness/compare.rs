//! Side-by-side summaries of metrics logs from several runs.

use std::fmt::Write as _;

use super::metrics::MetricsTable;
use crate::error::{Error, Result};

/// Runs that share a configuration apart from the seed.
#[derive(Debug, Clone)]
pub struct RunGroup {
    pub label: String,
    pub runs: Vec<MetricsTable>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub label: String,
    pub runs: usize,
    /// Last value of the column in each run.
    pub final_value: MeanSd,
    /// Mean of the column over each run.
    pub curve_mean: MeanSd,
    /// Final mean minus the first group's final mean.
    pub diff_to_first: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub column: String,
    pub groups: Vec<GroupStats>,
}

/// Aligns the named column across groups. All logs must share one header.
pub fn compare(groups: &[RunGroup], column: &str) -> Result<Comparison> {
    let first = groups
        .iter()
        .flat_map(|g| g.runs.first())
        .next()
        .ok_or_else(|| Error::InvalidArgument("nothing to compare".into()))?;
    for g in groups {
        if g.runs.is_empty() {
            return Err(Error::InvalidArgument(format!("group '{}' has no runs", g.label)));
        }
        for r in &g.runs {
            if r.header != first.header {
                return Err(Error::Format(format!(
                    "schema mismatch in group '{}': [{}] vs [{}]",
                    g.label,
                    r.header.join(","),
                    first.header.join(",")
                )));
            }
        }
    }
    let mut stats = Vec::with_capacity(groups.len());
    for g in groups {
        let mut finals = Vec::new();
        let mut means = Vec::new();
        for r in &g.runs {
            let values = r.column(column)?;
            let last = *values
                .last()
                .ok_or_else(|| Error::Format(format!("column '{column}' is empty in group '{}'", g.label)))?;
            finals.push(last);
            means.push(values.iter().sum::<f64>() / values.len() as f64);
        }
        stats.push(GroupStats {
            label: g.label.clone(),
            runs: g.runs.len(),
            final_value: MeanSd::of(&finals),
            curve_mean: MeanSd::of(&means),
            diff_to_first: 0.0,
        });
    }
    let base = stats[0].final_value.mean;
    for s in &mut stats {
        s.diff_to_first = s.final_value.mean - base;
    }
    Ok(Comparison {
        column: column.to_string(),
        groups: stats,
    })
}

impl Comparison {
    /// Markdown table with one column per group.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "| {} |", self.column);
        for g in &self.groups {
            let _ = write!(s, " {} |", g.label);
        }
        s.push('\n');
        s.push_str(&"|---".repeat(self.groups.len() + 1));
        s.push_str("|\n");
        let mut row = |name: &str, cell: &dyn Fn(&GroupStats) -> String| {
            let _ = write!(s, "| {name} |");
            for g in &self.groups {
                let _ = write!(s, " {} |", cell(g));
            }
            s.push('\n');
        };
        row("final", &|g| {
            format!("{:.4} ± {:.4}", g.final_value.mean, g.final_value.sd)
        });
        row("curve mean", &|g| {
            format!("{:.4} ± {:.4}", g.curve_mean.mean, g.curve_mean.sd)
        });
        row("diff vs first", &|g| format!("{:+.4}", g.diff_to_first));
        row("runs", &|g| g.runs.to_string());
        s
    }
}
