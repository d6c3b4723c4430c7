//! Access statistics and the policies built on them: locality-driven
//! placement, adaptive lease length and per-resource protocol choice.

use serde::{Deserialize, Serialize};

use crate::sim::{Micros, RegionId, MS, SEC};

/// Exponentially decayed event counter; reads give a rate.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RateEwma {
    acc: f64,
    last: Micros,
}

fn decay(dt: Micros, half_life: Micros) -> f64 {
    (-(dt as f64) / half_life as f64 * std::f64::consts::LN_2).exp()
}

impl RateEwma {
    fn advance(&mut self, now: Micros, half_life: Micros) {
        if now > self.last {
            self.acc *= decay(now - self.last, half_life);
            self.last = now;
        }
    }

    pub fn hit(&mut self, now: Micros, half_life: Micros) {
        self.advance(now, half_life);
        self.acc += 1.0;
    }

    /// Events per second.
    pub fn rate(&self, now: Micros, half_life: Micros) -> f64 {
        let acc = if now > self.last { self.acc * decay(now - self.last, half_life) } else { self.acc };
        acc * std::f64::consts::LN_2 / (half_life as f64 / SEC as f64)
    }
}

/// Exponentially time-weighted mean of samples.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanEwma {
    sum: f64,
    weight: f64,
    last: Micros,
}

impl MeanEwma {
    pub fn sample(&mut self, now: Micros, x: f64, half_life: Micros) {
        if now > self.last {
            let d = decay(now - self.last, half_life);
            self.sum *= d;
            self.weight *= d;
            self.last = now;
        }
        self.sum += x;
        self.weight += 1.0;
    }

    pub fn mean(&self) -> f64 {
        if self.weight > 0.0 {
            (self.sum / self.weight).max(0.0)
        } else {
            0.0
        }
    }
}

/// Per-resource statistics kept by the managing node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AccessStats {
    pub by_region: Vec<RateEwma>,
    pub total: RateEwma,
    /// Queue length seen at each grant.
    pub wait: MeanEwma,
    /// Leases that lapsed without a release, a proxy for holder crashes.
    pub failures: RateEwma,
}

impl AccessStats {
    pub fn new(regions: usize) -> Self {
        Self { by_region: vec![RateEwma::default(); regions], ..Self::default() }
    }

    pub fn access(&mut self, now: Micros, region: RegionId, half_life: Micros) {
        if region.index() >= self.by_region.len() {
            self.by_region.resize(region.index() + 1, RateEwma::default());
        }
        self.by_region[region.index()].hit(now, half_life);
        self.total.hit(now, half_life);
    }

    pub fn rate(&self, now: Micros, half_life: Micros) -> f64 {
        self.total.rate(now, half_life)
    }

    /// Crashes per minute.
    pub fn failure_rate(&self, now: Micros, half_life: Micros) -> f64 {
        self.failures.rate(now, half_life) * 60.0
    }

    pub fn region_rates(&self, now: Micros, half_life: Micros) -> Vec<f64> {
        self.by_region.iter().map(|r| r.rate(now, half_life)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LeaseController {
    pub t_base_us: Micros,
    pub t_min_us: Micros,
    pub t_max_us: Micros,
    pub k_c: f64,
    pub k_f: f64,
}

impl Default for LeaseController {
    fn default() -> Self {
        Self { t_base_us: 200 * MS, t_min_us: 20 * MS, t_max_us: 2 * SEC, k_c: 1.0, k_f: 0.5 }
    }
}

impl LeaseController {
    /// `T = clamp(T_min, T_max, T_base·(1 + k_f·f̂)/(1 + k_c·ŵ))`.
    pub fn duration(&self, w: f64, f: f64) -> Micros {
        let raw = self.t_base_us as f64 * (1.0 + self.k_f * f.max(0.0)) / (1.0 + self.k_c * w.max(0.0));
        (raw.round() as Micros).clamp(self.t_min_us, self.t_max_us)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ResourceClass {
    Optimistic,
    Quorum,
    Lease,
}

pub fn classify(critical: bool, rate: f64, w: f64, r_hot: f64) -> ResourceClass {
    if critical {
        ResourceClass::Quorum
    } else if rate >= r_hot && w >= 1.0 {
        ResourceClass::Optimistic
    } else {
        ResourceClass::Lease
    }
}

/// Manager-side compare-and-increment. `Ok(new)` on commit, `Err(current)`
/// on conflict.
pub fn occ_commit(version: &mut u64, expected: u64) -> Result<u64, u64> {
    if *version == expected {
        *version += 1;
        Ok(*version)
    } else {
        Err(*version)
    }
}

/// Region that should manage a resource, if its access share reaches `theta`
/// and it is not already `current`.
pub fn rebalance_target(region_rates: &[f64], current: RegionId, theta: f64) -> Option<RegionId> {
    let total: f64 = region_rates.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let (top, rate) = region_rates
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |best, (i, r)| if *r > best.1 { (i, *r) } else { best });
    let top = RegionId(top as u16);
    (rate / total >= theta && top != current).then_some(top)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptConfig {
    pub locality: bool,
    pub adaptive_lease: bool,
    pub hybrid: bool,
    pub critical_resources: Vec<u32>,
    pub half_life_us: Micros,
    pub epoch_us: Micros,
    pub theta: f64,
    pub r_hot: f64,
    pub lease: LeaseController,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            locality: false,
            adaptive_lease: false,
            hybrid: false,
            critical_resources: Vec::new(),
            half_life_us: 5 * SEC,
            epoch_us: 10 * SEC,
            theta: 0.6,
            r_hot: 100.0,
            lease: LeaseController::default(),
        }
    }
}
