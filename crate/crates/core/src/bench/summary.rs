//! Aggregates over a sweep, laid out like the per-model and per-strategy
//! tables plus the headline metrics and scaling tables.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{BenchmarkRecord, PlanOutcome, Status};
use crate::reasoner::Strategy;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub total: usize,
    pub successes: usize,
    pub rejections: usize,
    pub runtime_failures: usize,
}

impl Counts {
    fn add(&mut self, s: Status) {
        self.total += 1;
        match s {
            Status::Success => self.successes += 1,
            Status::Rejected => self.rejections += 1,
            Status::RuntimeFailure => self.runtime_failures += 1,
        }
    }

    pub fn conserved(&self) -> bool {
        self.successes + self.rejections + self.runtime_failures == self.total
    }

    pub fn success_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.successes as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelRow {
    #[serde(rename = "Model")]
    pub model: String,
    #[serde(rename = "Avg Speedup")]
    pub avg_speedup: Option<f64>,
    #[serde(rename = "Best Speedup")]
    pub best_speedup: Option<f64>,
    #[serde(rename = "Analysis Quality")]
    pub analysis_quality: f64,
    #[serde(rename = "Response Time (s)")]
    pub response_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyRow {
    #[serde(rename = "Strategy")]
    pub strategy: String,
    #[serde(rename = "Avg Speedup")]
    pub avg_speedup: Option<f64>,
    /// Fraction of attempted configurations that produced a measurement.
    #[serde(rename = "Success Rate")]
    pub success_rate: f64,
    #[serde(rename = "Quality Score")]
    pub quality_score: f64,
    #[serde(rename = "Best Kernel")]
    pub best_kernel: Option<String>,
}

/// Average and best of one headline metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub metric: String,
    pub average: Option<f64>,
    pub best: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub kernel: String,
    pub size: u64,
    pub threads: usize,
    pub speedup: f64,
    pub efficiency: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Summary {
    pub counts: Counts,
    pub counts_by_strategy: BTreeMap<String, Counts>,
    pub per_model: Vec<ModelRow>,
    pub per_strategy: Vec<StrategyRow>,
    pub metrics: Vec<MetricRow>,
    pub scaling: Vec<ScalingPoint>,
    pub flagged_records: usize,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn max(v: &[f64]) -> Option<f64> {
    v.iter().copied().reduce(f64::max)
}

/// Keys in first-seen order.
fn ordered<T, K: PartialEq + Clone>(items: &[T], key: impl Fn(&T) -> K) -> Vec<K> {
    let mut out: Vec<K> = vec![];
    for i in items {
        let k = key(i);
        if !out.contains(&k) {
            out.push(k);
        }
    }
    out
}

fn speedups<'a>(rs: impl Iterator<Item = &'a BenchmarkRecord>) -> Vec<f64> {
    rs.filter(|r| r.status == Status::Success).filter_map(|r| r.speedup).collect()
}

fn best_kernel(rs: &[&BenchmarkRecord]) -> Option<String> {
    let mut by_kernel: Vec<(String, Vec<f64>)> = vec![];
    for r in rs.iter().filter(|r| r.status == Status::Success) {
        let Some(s) = r.speedup else { continue };
        match by_kernel.iter_mut().find(|(k, _)| *k == r.kernel) {
            Some((_, v)) => v.push(s),
            None => by_kernel.push((r.kernel.clone(), vec![s])),
        }
    }
    let mut best: Option<(String, f64)> = None;
    for (k, v) in by_kernel {
        let peak = max(&v).unwrap_or(0.0);
        if best.as_ref().is_none_or(|(_, b)| peak > *b) {
            best = Some((k, peak));
        }
    }
    best.map(|(k, s)| format!("{k} ({s:.2}x)"))
}

pub fn summarize(records: &[BenchmarkRecord], plans: &[PlanOutcome]) -> Summary {
    let mut s = Summary::default();
    for r in records {
        s.counts.add(r.status);
        s.counts_by_strategy.entry(r.strategy.as_str().to_string()).or_default().add(r.status);
    }
    s.flagged_records = records.iter().filter(|r| r.flagged).count();

    for model in ordered(plans, |p| p.model.clone()) {
        let rs: Vec<f64> = speedups(records.iter().filter(|r| r.model == model));
        let ps: Vec<&PlanOutcome> = plans.iter().filter(|p| p.model == model).collect();
        s.per_model.push(ModelRow {
            model,
            avg_speedup: mean(&rs),
            best_speedup: max(&rs),
            analysis_quality: mean(&ps.iter().map(|p| p.quality).collect::<Vec<_>>()).unwrap_or(0.0),
            response_time: mean(&ps.iter().map(|p| p.response_secs).collect::<Vec<_>>()).unwrap_or(0.0),
        });
    }
    for strategy in ordered(plans, |p| p.strategy) {
        let rs: Vec<&BenchmarkRecord> = records.iter().filter(|r| r.strategy == strategy).collect();
        let ps: Vec<f64> = plans.iter().filter(|p| p.strategy == strategy).map(|p| p.quality).collect();
        let counts = s.counts_by_strategy.get(strategy.as_str()).cloned().unwrap_or_default();
        s.per_strategy.push(StrategyRow {
            strategy: strategy_title(strategy),
            avg_speedup: mean(&speedups(rs.iter().copied())),
            success_rate: counts.success_rate(),
            quality_score: mean(&ps).unwrap_or(0.0),
            best_kernel: best_kernel(&rs),
        });
    }

    let sp = speedups(records.iter());
    let eff: Vec<f64> = records.iter().filter(|r| r.status == Status::Success).filter_map(|r| r.efficiency).collect();
    let q: Vec<f64> = plans.iter().map(|p| p.quality).collect();
    let lat: Vec<f64> = plans.iter().map(|p| p.response_secs).collect();
    s.metrics = vec![
        MetricRow { metric: "Speedup".into(), average: mean(&sp), best: max(&sp) },
        MetricRow { metric: "Efficiency".into(), average: mean(&eff), best: max(&eff) },
        MetricRow { metric: "Analysis Quality".into(), average: mean(&q), best: max(&q) },
        MetricRow {
            metric: "Response Time (s)".into(),
            average: mean(&lat),
            best: lat.iter().copied().reduce(f64::min),
        },
    ];

    // (kernel, size, threads) -> (speedup, efficiency) samples.
    type Key = (String, u64, usize);
    let mut points: Vec<(Key, Vec<(f64, f64)>)> = vec![];
    for r in records.iter().filter(|r| r.status == Status::Success) {
        let (Some(sv), Some(ev)) = (r.speedup, r.efficiency) else { continue };
        let key = (r.kernel.clone(), r.size, r.threads);
        match points.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push((sv, ev)),
            None => points.push((key, vec![(sv, ev)])),
        }
    }
    s.scaling = points
        .into_iter()
        .map(|((kernel, size, threads), v)| ScalingPoint {
            kernel,
            size,
            threads,
            speedup: v.iter().map(|x| x.0).sum::<f64>() / v.len() as f64,
            efficiency: v.iter().map(|x| x.1).sum::<f64>() / v.len() as f64,
            samples: v.len(),
        })
        .collect();
    s
}

fn strategy_title(s: Strategy) -> String {
    s.title().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::Measurement;

    fn rec(kernel: &str, strategy: Strategy, threads: usize, seq: u64, par: u64) -> BenchmarkRecord {
        let m = Measurement { seq_samples_ns: vec![seq; 5], par_samples_ns: vec![par; 5] };
        BenchmarkRecord::new(kernel, "m", strategy, 10, threads).with_measurement(m)
    }

    fn outcome(kernel: &str, strategy: Strategy, quality: f64) -> PlanOutcome {
        PlanOutcome {
            kernel: kernel.into(),
            model: "m".into(),
            strategy,
            accepted: true,
            quality,
            response_secs: 0.5,
            reason: None,
        }
    }

    #[test]
    fn strategy_rows() {
        let records = vec![
            rec("a", Strategy::ZeroShot, 2, 100, 50),
            rec("b", Strategy::ZeroShot, 2, 100, 25),
            BenchmarkRecord::new("c", "m", Strategy::ZeroShot, 10, 2).failed(Status::Rejected, "no"),
            rec("a", Strategy::FewShot, 2, 100, 100),
        ];
        let plans = vec![
            outcome("a", Strategy::ZeroShot, 1.0),
            outcome("b", Strategy::ZeroShot, 0.5),
            outcome("c", Strategy::ZeroShot, 0.0),
            outcome("a", Strategy::FewShot, 1.0),
        ];
        let s = summarize(&records, &plans);
        assert_eq!(s.counts, Counts { total: 4, successes: 3, rejections: 1, runtime_failures: 0 });
        assert!(s.counts.conserved());
        let z = &s.per_strategy[0];
        assert_eq!(z.strategy, "Zero-shot");
        assert_eq!(z.avg_speedup, Some(3.0));
        assert!((z.success_rate - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(z.quality_score, 0.5);
        assert_eq!(z.best_kernel.as_deref(), Some("b (4.00x)"));
        assert_eq!(s.per_strategy[1].best_kernel.as_deref(), Some("a (1.00x)"));
        assert_eq!(s.per_model[0].best_speedup, Some(4.0));
        assert_eq!(s.metrics[1].best, Some(2.0));
        assert_eq!(s.scaling.len(), 2);
    }

    #[test]
    fn empty_sweep() {
        let s = summarize(&[], &[]);
        assert_eq!(s.counts.total, 0);
        assert!(s.per_strategy.is_empty() && s.per_model.is_empty() && s.scaling.is_empty());
        assert!(s.metrics.iter().all(|m| m.average.is_none()));
    }

    #[test]
    fn strategy_columns() {
        let v = serde_json::to_value(StrategyRow {
            strategy: "x".into(),
            avg_speedup: None,
            success_rate: 0.0,
            quality_score: 0.0,
            best_kernel: None,
        })
        .unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        keys.sort();
        assert_eq!(keys, ["Avg Speedup", "Best Kernel", "Quality Score", "Strategy", "Success Rate"]);
    }
}
