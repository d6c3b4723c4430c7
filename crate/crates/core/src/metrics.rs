//! Latency and throughput collection with warm-up exclusion.
//!
//! Samples are kept in full and summarized exactly; percentiles use the
//! nearest-rank rule on the ascending sort.

use serde::{Deserialize, Serialize};

use crate::sim::{Micros, SEC};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub warmup_us: Micros,
    pub duration_us: Micros,
    pub interval_us: Micros,
}

impl Window {
    pub fn measured(&self, t: Micros) -> bool {
        t >= self.warmup_us && t < self.duration_us
    }

    pub fn measured_secs(&self) -> f64 {
        self.duration_us.saturating_sub(self.warmup_us) as f64 / SEC as f64
    }

    pub fn num_intervals(&self) -> usize {
        let span = self.duration_us.saturating_sub(self.warmup_us);
        span.div_ceil(self.interval_us.max(1)) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalStats {
    pub start_s: f64,
    pub ops: u64,
    pub throughput_ops_s: f64,
    pub avg_latency_ms: Option<f64>,
    pub p99_latency_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub ops_completed: u64,
    pub throughput_ops_s: f64,
    pub mean_latency_us: Option<f64>,
    pub p50_latency_us: Option<u64>,
    pub p99_latency_us: Option<u64>,
    pub retries: u64,
    pub failures: u64,
    pub intervals: Vec<IntervalStats>,
}

impl Summary {
    pub fn mean_latency_ms(&self) -> Option<f64> {
        self.mean_latency_us.map(|v| v / 1_000.0)
    }

    pub fn p99_latency_ms(&self) -> Option<f64> {
        self.p99_latency_us.map(|v| v as f64 / 1_000.0)
    }
}

/// Nearest-rank percentile: the element at 1-based index `⌈p·N⌉` of the
/// ascending sort. `None` for an empty sample set.
pub fn percentile(samples: &[u64], p: f64) -> Option<u64> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    Some(sorted[nearest_rank(sorted.len(), p) - 1])
}

fn nearest_rank(n: usize, p: f64) -> usize {
    let p = p.clamp(0.0, 1.0);
    // Guard against p·N landing a hair above an integer.
    let rank = (p * n as f64 - 1e-9).ceil() as usize;
    rank.clamp(1, n)
}

fn sorted_percentile(sorted: &[u64], p: f64) -> Option<u64> {
    if sorted.is_empty() {
        None
    } else {
        Some(sorted[nearest_rank(sorted.len(), p) - 1])
    }
}

#[derive(Debug, Clone)]
pub struct Recorder {
    window: Window,
    /// `(completion time, latency)` for measured samples.
    samples: Vec<(Micros, u64)>,
    retries: u64,
    failures: u64,
}

impl Recorder {
    pub fn new(window: Window) -> Self {
        Self { window, samples: Vec::new(), retries: 0, failures: 0 }
    }

    pub fn window(&self) -> Window {
        self.window
    }

    /// Records one completed operation; ignored outside `[warmup, end)`.
    pub fn record(&mut self, latency_us: u64, at: Micros) {
        if self.window.measured(at) {
            self.samples.push((at, latency_us));
        }
    }

    pub fn retry(&mut self, at: Micros) {
        if self.window.measured(at) {
            self.retries += 1;
        }
    }

    pub fn failure(&mut self, at: Micros) {
        if self.window.measured(at) {
            self.failures += 1;
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn summarize(&self) -> Summary {
        let w = self.window;
        let mut lat: Vec<u64> = self.samples.iter().map(|s| s.1).collect();
        lat.sort_unstable();
        let ops = lat.len() as u64;
        let secs = w.measured_secs();
        let mean = if lat.is_empty() {
            None
        } else {
            Some(lat.iter().map(|v| *v as f64).sum::<f64>() / lat.len() as f64)
        };
        let nint = w.num_intervals();
        let mut buckets: Vec<Vec<u64>> = vec![Vec::new(); nint];
        for (at, l) in &self.samples {
            let i = ((at - w.warmup_us) / w.interval_us.max(1)) as usize;
            buckets[i.min(nint.saturating_sub(1))].push(*l);
        }
        let intervals = buckets
            .into_iter()
            .enumerate()
            .map(|(i, mut b)| {
                b.sort_unstable();
                let start = w.warmup_us + i as u64 * w.interval_us;
                let len = (w.duration_us.min(start + w.interval_us) - start) as f64 / SEC as f64;
                IntervalStats {
                    start_s: start as f64 / SEC as f64,
                    ops: b.len() as u64,
                    throughput_ops_s: if len > 0.0 { b.len() as f64 / len } else { 0.0 },
                    avg_latency_ms: if b.is_empty() {
                        None
                    } else {
                        Some(b.iter().map(|v| *v as f64).sum::<f64>() / b.len() as f64 / 1_000.0)
                    },
                    p99_latency_ms: sorted_percentile(&b, 0.99).map(|v| v as f64 / 1_000.0),
                }
            })
            .collect();
        Summary {
            ops_completed: ops,
            throughput_ops_s: if secs > 0.0 { ops as f64 / secs } else { 0.0 },
            mean_latency_us: mean,
            p50_latency_us: sorted_percentile(&lat, 0.5),
            p99_latency_us: sorted_percentile(&lat, 0.99),
            retries: self.retries,
            failures: self.failures,
            intervals,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn window() -> Window {
        Window { warmup_us: 10 * SEC, duration_us: 40 * SEC, interval_us: 10 * SEC }
    }

    #[test]
    fn nearest_rank_examples() {
        let v: Vec<u64> = (1..=100).collect();
        assert_eq!(percentile(&v, 0.99), Some(99));
        assert_eq!(percentile(&[1, 2, 3, 4], 0.5), Some(2));
        for p in [0.0, 0.01, 0.5, 0.99, 1.0] {
            assert_eq!(percentile(&[42], p), Some(42));
        }
        assert_eq!(percentile(&[], 0.5), None);
    }

    #[test]
    fn warmup_is_half_open() {
        let mut r = Recorder::new(window());
        r.record(5, 10 * SEC - 1);
        r.record(7, 10 * SEC);
        r.record(9, 40 * SEC);
        let s = r.summarize();
        assert_eq!(s.ops_completed, 1);
        assert_eq!(s.p50_latency_us, Some(7));
    }

    #[test]
    fn interval_counts() {
        let mut r = Recorder::new(window());
        for t in [11, 12, 19] {
            r.record(1, t * SEC);
        }
        r.record(1, 25 * SEC);
        let s = r.summarize();
        assert_eq!(s.intervals.len(), 3);
        assert_eq!(s.intervals[0].ops, 3);
        assert_eq!(s.intervals[1].ops, 1);
        assert_eq!(s.intervals[2].ops, 0);
        assert_eq!(s.intervals[2].avg_latency_ms, None);
    }

    #[test]
    fn mean_and_throughput() {
        let w = Window { warmup_us: 0, duration_us: SEC, interval_us: SEC };
        let mut r = Recorder::new(w);
        for (i, ms) in [10u64, 20, 30].iter().enumerate() {
            r.record(ms * 1_000, i as u64 * 1_000);
        }
        let s = r.summarize();
        assert_eq!(s.mean_latency_ms(), Some(20.0));
        assert_eq!(s.throughput_ops_s, 3.0);
    }

    #[test]
    fn empty_summary() {
        let s = Recorder::new(window()).summarize();
        assert_eq!(s.throughput_ops_s, 0.0);
        assert_eq!(s.mean_latency_us, None);
        assert_eq!(s.p99_latency_us, None);
    }

    proptest! {
        #[test]
        fn percentile_matches_sort_oracle(v in prop::collection::vec(0u64..10_000, 1..300), p in 0.0f64..=1.0) {
            let mut s = v.clone();
            s.sort();
            let mut k = 1usize;
            // smallest k with k >= p*N, checked in exact rational arithmetic on a 1e6 grid
            let pn = (p * 1e6).round() as u128 * s.len() as u128;
            while (k as u128) * 1_000_000 < pn { k += 1; }
            let expect = s[k.clamp(1, s.len()) - 1];
            let got = percentile(&v, (p * 1e6).round() / 1e6).unwrap();
            prop_assert_eq!(got, expect);
            prop_assert!(percentile(&v, 0.99) >= percentile(&v, 0.5));
        }
    }
}
