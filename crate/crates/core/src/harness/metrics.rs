//! Per-replication metrics and their aggregation across replications.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::types::{ChannelModel, Mode, Scenario};

/// Everything one replication reports. Counts cover requests issued after warm-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub scenario: Scenario,
    pub model: ChannelModel,
    pub mode: Mode,
    pub seed: u64,
    pub speed_min: f64,
    pub speed_max: f64,
    /// Share of delivered contents that came over D2D.
    pub offloading_efficiency: f64,
    /// Radiated energy per delivered content, mJ.
    pub energy_per_content_mj: f64,
    /// Mean fraction of the CI's PRBs in use.
    pub spectrum_occupation: f64,
    /// Filled in when paired with the benchmark run.
    pub energy_saving_pct: Option<f64>,
    pub spectrum_saving_pct: Option<f64>,
    pub mean_latency_s: f64,
    /// Share of requests that were not repeats.
    pub gamma_nr: f64,
    /// Failed attempts over all attempts.
    pub failure_rate: f64,
    pub requests: u64,
    pub repeats: u64,
    pub delivered_d2d: u64,
    pub delivered_i2d: u64,
    pub cancelled: u64,
    pub dropped: u64,
    pub d2d_attempts: u64,
    pub d2d_failures: u64,
    pub i2d_attempts: u64,
    pub i2d_failures: u64,
    pub pruned_packets: u64,
    pub vehicles: u64,
    pub measured_cis: u64,
}

impl MetricsRecord {
    pub fn delivered(&self) -> u64 {
        self.delivered_d2d + self.delivered_i2d
    }

    /// Fills the savings against a benchmark run of the same model and seed.
    pub fn pair_with(&mut self, benchmark: &MetricsRecord) {
        self.energy_saving_pct = Some(saving_pct(self.energy_per_content_mj, benchmark.energy_per_content_mj));
        self.spectrum_saving_pct = Some(saving_pct(self.spectrum_occupation, benchmark.spectrum_occupation));
    }

    /// Named scalar metrics, in a stable order, for aggregation and CSV output.
    pub fn scalars(&self) -> Vec<(&'static str, f64)> {
        let mut v = vec![
            ("offloading_efficiency", self.offloading_efficiency),
            ("energy_per_content_mj", self.energy_per_content_mj),
            ("spectrum_occupation", self.spectrum_occupation),
        ];
        if let Some(e) = self.energy_saving_pct {
            v.push(("energy_saving_pct", e));
        }
        if let Some(s) = self.spectrum_saving_pct {
            v.push(("spectrum_saving_pct", s));
        }
        v.extend([
            ("mean_latency_s", self.mean_latency_s),
            ("gamma_nr", self.gamma_nr),
            ("failure_rate", self.failure_rate),
            ("requests", self.requests as f64),
            ("delivered", self.delivered() as f64),
            ("dropped", self.dropped as f64),
        ]);
        v
    }
}

/// `100 (1 - ours / reference)`; zero when the reference is zero.
pub fn saving_pct(ours: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        100.0 * (1.0 - ours / reference)
    } else {
        0.0
    }
}

/// Sample mean with a two-sided Student-t confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
    pub n: usize,
}

impl Estimate {
    pub fn lo(&self) -> f64 {
        self.mean - self.half_width
    }
    pub fn hi(&self) -> f64 {
        self.mean + self.half_width
    }
}

pub fn t_interval(xs: &[f64], confidence: f64) -> Estimate {
    let n = xs.len();
    if n == 0 {
        return Estimate {
            mean: f64::NAN,
            half_width: f64::NAN,
            n,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        log::warn!("one replication: reporting the mean without an interval");
        return Estimate {
            mean,
            half_width: f64::NAN,
            n,
        };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("valid dof")
        .inverse_cdf(0.5 + confidence / 2.0);
    Estimate {
        mean,
        half_width: t * (var / n as f64).sqrt(),
        n,
    }
}
