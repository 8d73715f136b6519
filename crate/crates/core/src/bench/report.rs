//! CSV, JSON and markdown renderings of a sweep.

use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use serde::Serialize;

use super::summary::Summary;
use super::{BenchError, BenchmarkRecord, HostInfo, PlanOutcome, SweepResult, SweepSpec};

/// Header of `records.csv`. Times are seconds (medians) and sample lists
/// are nanoseconds separated by `;`.
pub const CSV_HEADER: [&str; 15] = [
    "kernel",
    "model",
    "strategy",
    "size",
    "threads",
    "status",
    "t_seq_s",
    "t_par_s",
    "speedup",
    "efficiency",
    "runs",
    "flagged",
    "seq_samples_ns",
    "par_samples_ns",
    "note",
];

/// Columns that carry wall-clock measurements and so differ between runs.
pub const MEASUREMENT_COLUMNS: [&str; 7] =
    ["t_seq_s", "t_par_s", "speedup", "efficiency", "flagged", "seq_samples_ns", "par_samples_ns"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvRow {
    pub kernel: String,
    pub model: String,
    pub strategy: String,
    pub size: u64,
    pub threads: usize,
    pub status: String,
    pub t_seq_s: Option<f64>,
    pub t_par_s: Option<f64>,
    pub speedup: Option<f64>,
    pub efficiency: Option<f64>,
    pub runs: usize,
    pub flagged: bool,
    pub seq_samples_ns: String,
    pub par_samples_ns: String,
    pub note: String,
}

fn join(v: &[u64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

impl From<&BenchmarkRecord> for CsvRow {
    fn from(r: &BenchmarkRecord) -> Self {
        CsvRow {
            kernel: r.kernel.clone(),
            model: r.model.clone(),
            strategy: r.strategy.as_str().to_string(),
            size: r.size,
            threads: r.threads,
            status: r.status.as_str().to_string(),
            t_seq_s: r.t_seq,
            t_par_s: r.t_par,
            speedup: r.speedup,
            efficiency: r.efficiency,
            runs: r.runs,
            flagged: r.flagged,
            seq_samples_ns: join(&r.seq_samples_ns),
            par_samples_ns: join(&r.par_samples_ns),
            note: r.note.clone(),
        }
    }
}

/// Appends rows and flushes after each, so an interrupted sweep leaves
/// every finished record on disk.
pub struct CsvSink {
    w: csv::Writer<File>,
}

impl CsvSink {
    pub fn create(path: &Path) -> Result<CsvSink, BenchError> {
        let io = |e: std::io::Error| BenchError::Io(format!("{}: {e}", path.display()));
        let f = File::create(path).map_err(io)?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(f);
        w.write_record(CSV_HEADER).map_err(|e| BenchError::Io(e.to_string()))?;
        w.flush().map_err(io)?;
        Ok(CsvSink { w })
    }

    pub fn push(&mut self, r: &BenchmarkRecord) -> Result<(), BenchError> {
        self.w.serialize(CsvRow::from(r)).map_err(|e| BenchError::Io(e.to_string()))?;
        self.w.flush().map_err(|e| BenchError::Io(e.to_string()))
    }
}

pub fn write_csv(records: &[BenchmarkRecord], path: &Path) -> Result<(), BenchError> {
    let mut sink = CsvSink::create(path)?;
    for r in records {
        sink.push(r)?;
    }
    Ok(())
}

/// The JSON summary document.
#[derive(Debug, Clone, Serialize)]
pub struct SweepReport<'a> {
    pub host: &'a HostInfo,
    pub spec: &'a SweepSpec,
    pub skipped_threads: &'a [usize],
    pub summary: &'a Summary,
    pub plans: &'a [PlanOutcome],
}

impl<'a> SweepReport<'a> {
    pub fn new(host: &'a HostInfo, spec: &'a SweepSpec, result: &'a SweepResult) -> Self {
        SweepReport { host, spec, skipped_threads: &result.skipped_threads, summary: &result.summary, plans: &result.plans }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn x(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |s| format!("{s:.2}x"))
}

fn pct(v: f64) -> String {
    format!("{:.0}%", v * 100.0)
}

/// Markdown tables for a summary.
pub fn render_markdown(summary: &Summary, host: &HostInfo) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Sweep summary\n");
    let _ = writeln!(s, "Host: {} logical cores, {}, {}.\n", host.logical_cores, host.cpu_model, host.compiler);
    let c = &summary.counts;
    let _ = writeln!(
        s,
        "Configurations: {} total, {} measured, {} rejected, {} runtime failures.\n",
        c.total, c.successes, c.rejections, c.runtime_failures
    );
    s.push_str("## Models\n\n| Model | Avg Speedup | Best Speedup | Analysis Quality | Response Time (s) |\n|---|---|---|---|---|\n");
    for r in &summary.per_model {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {:.2} | {:.3} |",
            r.model,
            x(r.avg_speedup),
            x(r.best_speedup),
            r.analysis_quality,
            r.response_time
        );
    }
    s.push_str("\n## Strategies\n\n| Strategy | Avg Speedup | Success Rate | Quality Score | Best Kernel |\n|---|---|---|---|---|\n");
    for r in &summary.per_strategy {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {:.2} | {} |",
            r.strategy,
            x(r.avg_speedup),
            pct(r.success_rate),
            r.quality_score,
            r.best_kernel.as_deref().unwrap_or("n/a")
        );
    }
    s.push_str("\n## Metrics\n\n| Metric | Average | Best |\n|---|---|---|\n");
    for m in &summary.metrics {
        let f = |v: Option<f64>| v.map_or("n/a".into(), |v| format!("{v:.3}"));
        let _ = writeln!(s, "| {} | {} | {} |", m.metric, f(m.average), f(m.best));
    }
    if !summary.scaling.is_empty() {
        s.push_str("\n## Scaling\n\n| Kernel | Size | Threads | Speedup | Efficiency |\n|---|---|---|---|---|\n");
        for p in &summary.scaling {
            let _ = writeln!(s, "| {} | {} | {} | {:.2}x | {} |", p.kernel, p.size, p.threads, p.speedup, pct(p.efficiency));
        }
    }
    s.push_str("\nQuality Score and Analysis Quality are the fraction of statically derived facts (carried dependences, reductions, privatizable scalars) that the plan states.\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{Measurement, Status};
    use crate::reasoner::Strategy;

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let m = Measurement { seq_samples_ns: vec![10, 20, 30], par_samples_ns: vec![5, 10, 15] };
        let records = vec![
            BenchmarkRecord::new("matmul", "m", Strategy::ZeroShot, 64, 2).with_measurement(m),
            BenchmarkRecord::new("dot", "m", Strategy::ZeroShot, 64, 2).failed(Status::Rejected, "plan rejected (R1)"),
        ];
        write_csv(&records, &p).unwrap();
        let mut rd = csv::Reader::from_path(&p).unwrap();
        assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>(), CSV_HEADER);
        let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(&rows[0][8], "2.0");
        assert_eq!(&rows[0][12], "10;20;30");
        assert_eq!(&rows[1][5], "rejected");
        assert_eq!(&rows[1][8], "");
    }
}
