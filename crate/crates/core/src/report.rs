//! Aggregated evaluation results and their CSV / markdown renderings.
//!
//! Standard deviations use the population convention (divide by the sample
//! count). Sums are compensated so a mean does not depend on sample order
//! beyond the last few ulps.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::metrics::{Metric, MetricSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Slicing,
    Random,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Slicing => "slicing",
            Algorithm::Random => "random",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Algorithm::Slicing => "Slicing",
            Algorithm::Random => "Random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Configuration {
    AllElements,
    Filtered,
}

impl Configuration {
    pub fn name(self) -> &'static str {
        match self {
            Configuration::AllElements => "all_elements",
            Configuration::Filtered => "filtered",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Configuration::AllElements => "All elements",
            Configuration::Filtered => "Filtered",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricStat {
    pub mean: f64,
    pub std: f64,
    pub samples: usize,
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

impl MetricStat {
    pub fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return MetricStat::default();
        }
        let n = values.len() as f64;
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = (compensated_sum(values.iter().copied()) / n).clamp(lo, hi);
        let var = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / n;
        MetricStat {
            mean,
            std: var.max(0.0).sqrt(),
            samples: values.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub algorithm: Algorithm,
    pub configuration: Configuration,
    /// Indexed like [`Metric::ALL`].
    pub stats: [MetricStat; 5],
}

impl ReportRow {
    pub fn from_samples(
        dataset: &str,
        algorithm: Algorithm,
        configuration: Configuration,
        samples: &[MetricSample],
    ) -> Self {
        let stats = Metric::ALL.map(|m| {
            let values: Vec<f64> = samples.iter().map(|s| s.get(m)).collect();
            MetricStat::from_values(&values)
        });
        ReportRow {
            dataset: dataset.to_string(),
            algorithm,
            configuration,
            stats,
        }
    }

    pub fn stat(&self, metric: Metric) -> MetricStat {
        let i = Metric::ALL.iter().position(|&m| m == metric).expect("all metrics listed");
        self.stats[i]
    }

    pub fn samples(&self) -> usize {
        self.stats[0].samples
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format `{other}` (expected csv or markdown)")),
        }
    }
}

pub const CSV_HEADER: [&str; 7] = ["dataset", "algorithm", "configuration", "metric", "mean", "std", "samples"];

pub fn emit_report(report: &EvalReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Csv => report_csv(report),
        ReportFormat::Markdown => report_markdown(report).into_bytes(),
    }
}

/// One line per (dataset, algorithm, configuration, metric).
pub fn report_csv(report: &EvalReport) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for row in &report.rows {
        for (m, s) in Metric::ALL.iter().zip(&row.stats) {
            w.write_record([
                row.dataset.as_str(),
                row.algorithm.name(),
                row.configuration.name(),
                m.name(),
                &s.mean.to_string(),
                &s.std.to_string(),
                &s.samples.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    w.into_inner().expect("in-memory flush")
}

/// A grid with one section per configuration and `mean±std` cells.
pub fn report_markdown(report: &EvalReport) -> String {
    let mut out = String::new();
    let mut configs: Vec<Configuration> = report.rows.iter().map(|r| r.configuration).collect();
    configs.sort();
    configs.dedup();
    for config in configs {
        let _ = writeln!(out, "### {}\n", config.title());
        out.push_str("| Dataset | Algorithm |");
        for m in Metric::ALL {
            let _ = write!(out, " {} |", m.heading(report.k));
        }
        out.push_str(" Samples |\n|---|---|");
        for _ in Metric::ALL {
            out.push_str("---|");
        }
        out.push_str("---|\n");
        for row in report.rows.iter().filter(|r| r.configuration == config) {
            let _ = write!(out, "| {} | {} |", row.dataset, row.algorithm.title());
            for s in &row.stats {
                let _ = write!(out, " {:.2}±{:.2} |", s.mean, s.std);
            }
            let _ = writeln!(out, " {} |", row.samples());
        }
        out.push('\n');
    }
    out
}

/// Slicing-to-random mean ratios per (dataset, configuration, metric).
/// The ratio is empty when the random mean is zero.
pub fn ratio_csv(report: &EvalReport) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dataset", "configuration", "metric", "slicing_mean", "random_mean", "ratio"])
        .expect("in-memory write");
    for s in report.rows.iter().filter(|r| r.algorithm == Algorithm::Slicing) {
        let Some(r) = report.rows.iter().find(|r| {
            r.algorithm == Algorithm::Random && r.dataset == s.dataset && r.configuration == s.configuration
        }) else {
            continue;
        };
        for m in Metric::ALL {
            let (a, b) = (s.stat(m).mean, r.stat(m).mean);
            let ratio = if b == 0.0 { String::new() } else { (a / b).to_string() };
            w.write_record([
                s.dataset.as_str(),
                s.configuration.name(),
                m.name(),
                &a.to_string(),
                &b.to_string(),
                &ratio,
            ])
            .expect("in-memory write");
        }
    }
    w.into_inner().expect("in-memory flush")
}

/// One line per slice length with the mean of each metric.
pub fn study_csv(rows: &[(usize, ReportRow)]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["slice_length".to_string()];
    header.extend(Metric::ALL.iter().map(|m| m.name().to_string()));
    header.push("samples".into());
    w.write_record(&header).expect("in-memory write");
    for (n, row) in rows {
        let mut rec = vec![n.to_string()];
        rec.extend(row.stats.iter().map(|s| s.mean.to_string()));
        rec.push(row.samples().to_string());
        w.write_record(&rec).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}
