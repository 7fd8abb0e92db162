//! Vehicle arrivals and mobility, per-vehicle request processes, Zipf popularity,
//! and the analytical load formulas.

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use crate::engine::config::{CatalogSize, SimConfig};
use crate::types::{ContentId, NodeId, Position};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntryEnd {
    Left,
    Right,
}

/// A vehicle crossing the street at constant speed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Vehicle {
    pub id: NodeId,
    pub entry_end: EntryEnd,
    /// Reference instant for `x_ref`.
    pub entry_time: f64,
    /// Along-street position at `entry_time`.
    pub x_ref: f64,
    pub speed: f64,
    pub lateral: f64,
}

impl Vehicle {
    fn direction(&self) -> f64 {
        match self.entry_end {
            EntryEnd::Left => 1.0,
            EntryEnd::Right => -1.0,
        }
    }

    pub fn position(&self, t: f64) -> Position {
        Position::new(self.x_ref + self.direction() * self.speed * (t - self.entry_time), self.lateral)
    }

    /// Instant the vehicle leaves [0, roi_length].
    pub fn exit_time(&self, roi_length: f64) -> f64 {
        let remaining = match self.entry_end {
            EntryEnd::Left => roi_length - self.x_ref,
            EntryEnd::Right => self.x_ref,
        };
        self.entry_time + remaining.max(0.0) / self.speed
    }
}

/// Parameters of the arrival and mobility process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalProcess {
    /// Total arrival rate over both ends.
    pub rate: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub roi_length: f64,
    pub roi_width: f64,
}

impl ArrivalProcess {
    pub fn from_config(cfg: &SimConfig) -> Self {
        ArrivalProcess {
            rate: cfg.traffic.vehicle_rate,
            v_min: cfg.traffic.speed_min,
            v_max: cfg.traffic.speed_max,
            roi_length: cfg.roi.length,
            roi_width: cfg.roi.width,
        }
    }

    pub fn next_interarrival<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Exp::new(self.rate).expect("positive rate").sample(rng)
    }

    /// A vehicle entering at time `t`: entry end from `arrivals`, speed and lane offset from `speeds`.
    pub fn spawn<R1: Rng + ?Sized, R2: Rng + ?Sized>(&self, id: NodeId, t: f64, arrivals: &mut R1, speeds: &mut R2) -> Vehicle {
        let entry_end = if arrivals.random::<bool>() { EntryEnd::Left } else { EntryEnd::Right };
        let speed = self.v_min + (self.v_max - self.v_min) * speeds.random::<f64>();
        let lateral = self.roi_width * speeds.random::<f64>();
        Vehicle {
            id,
            entry_end,
            entry_time: t,
            x_ref: match entry_end {
                EntryEnd::Left => 0.0,
                EntryEnd::Right => self.roi_length,
            },
            speed,
            lateral,
        }
    }

    /// Vehicles already on the street at t = 0, drawn from the steady state:
    /// Poisson count, uniform positions, speed density proportional to 1/v.
    pub fn initial_population<R1: Rng + ?Sized, R2: Rng + ?Sized>(&self, first_id: NodeId, arrivals: &mut R1, speeds: &mut R2) -> Vec<Vehicle> {
        let mean = vehicle_density(self.rate, self.v_min, self.v_max) * self.roi_length;
        let n = if mean > 0.0 {
            Poisson::new(mean).expect("positive mean").sample(arrivals) as u32
        } else {
            0
        };
        (0..n)
            .map(|k| {
                let entry_end = if arrivals.random::<bool>() { EntryEnd::Left } else { EntryEnd::Right };
                let u: f64 = speeds.random();
                // Inverse CDF of the 1/v density on [v_min, v_max].
                let speed = self.v_min * (self.v_max / self.v_min).powf(u);
                let lateral = self.roi_width * speeds.random::<f64>();
                let x = self.roi_length * speeds.random::<f64>();
                Vehicle {
                    id: first_id + k,
                    entry_end,
                    entry_time: 0.0,
                    x_ref: x,
                    speed,
                    lateral,
                }
            })
            .collect()
    }
}

/// Steady-state linear density of vehicles, veh/m:
/// `lambda (ln v_b - ln v_a) / (v_b - v_a)`, or `lambda / v` for a single speed.
pub fn vehicle_density(rate: f64, v_a: f64, v_b: f64) -> f64 {
    if (v_b - v_a).abs() <= 1e-12 * v_a.abs().max(1.0) {
        rate / v_a
    } else {
        rate * (v_b.ln() - v_a.ln()) / (v_b - v_a)
    }
}

/// Content popularity with `p(k)` proportional to `k^-alpha`.
#[derive(Debug, Clone, PartialEq)]
pub enum Zipf {
    /// Cumulative probabilities over ids 1..=N.
    Finite { alpha: f64, cdf: Vec<f64> },
    /// Unbounded catalog, `alpha > 1`.
    Infinite { alpha: f64, zeta: f64 },
}

impl Zipf {
    pub fn new(alpha: f64, size: CatalogSize) -> Self {
        match size {
            CatalogSize::Finite(n) => {
                let mut acc = 0.0;
                let mut cdf: Vec<f64> = (1..=n)
                    .map(|k| {
                        acc += (k as f64).powf(-alpha);
                        acc
                    })
                    .collect();
                for c in &mut cdf {
                    *c /= acc;
                }
                Zipf::Finite { alpha, cdf }
            }
            CatalogSize::Infinite(_) => Zipf::Infinite {
                alpha,
                zeta: riemann_zeta(alpha),
            },
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            Zipf::Finite { alpha, .. } | Zipf::Infinite { alpha, .. } => *alpha,
        }
    }

    pub fn pmf(&self, k: ContentId) -> f64 {
        if k == 0 {
            return 0.0;
        }
        match self {
            Zipf::Finite { alpha, cdf } => {
                if k as usize > cdf.len() {
                    return 0.0;
                }
                let norm = 1.0 / cdf[0];
                (k as f64).powf(-alpha) / norm
            }
            Zipf::Infinite { alpha, zeta } => (k as f64).powf(-alpha) / zeta,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ContentId {
        match self {
            Zipf::Finite { cdf, .. } => {
                let u: f64 = rng.random();
                let i = cdf.partition_point(|&c| c < u);
                (i.min(cdf.len() - 1) + 1) as ContentId
            }
            Zipf::Infinite { alpha, .. } => {
                // Devroye's rejection sampler for the zeta distribution.
                let am1 = alpha - 1.0;
                let b = 2f64.powf(am1);
                loop {
                    let u: f64 = 1.0 - rng.random::<f64>();
                    let v: f64 = rng.random();
                    let x = u.powf(-1.0 / am1).floor();
                    if !(x.is_finite()) || x > u32::MAX as f64 {
                        continue;
                    }
                    let t = (1.0 + 1.0 / x).powf(am1);
                    if v * x * (t - 1.0) / (b - 1.0) <= t / b {
                        return x as ContentId;
                    }
                }
            }
        }
    }
}

/// Riemann zeta for s > 1 by direct summation plus an Euler-Maclaurin tail.
pub fn riemann_zeta(s: f64) -> f64 {
    let n = 1000u32;
    let head: f64 = (1..n).map(|k| (k as f64).powf(-s)).sum();
    let nf = n as f64;
    head + nf.powf(1.0 - s) / (s - 1.0) + 0.5 * nf.powf(-s) + s / 12.0 * nf.powf(-s - 1.0)
}

/// Per-vehicle Poisson request process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequestProcess {
    pub rate: f64,
}

impl RequestProcess {
    /// Next request instant after `t`, or `None` when the rate is zero.
    pub fn next_after<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> Option<f64> {
        if self.rate <= 0.0 {
            return None;
        }
        Some(t + Exp::new(self.rate).expect("positive rate").sample(rng))
    }
}

/// Offered load density, kbps/m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LoadDensity {
    /// `lambda_C rho_V D gamma_nr`.
    pub with_gamma: f64,
    /// The same without the non-repeat factor.
    pub without_gamma: f64,
}

pub fn offered_load_density(cfg: &SimConfig) -> LoadDensity {
    let t = &cfg.traffic;
    let rho_v = vehicle_density(t.vehicle_rate, t.speed_min, t.speed_max);
    let d = cfg.numerology().coded_bits;
    let base = t.request_rate * rho_v * d / 1e3;
    LoadDensity {
        with_gamma: base * t.gamma_nr,
        without_gamma: base,
    }
}

/// Reuse-1/3 cellular capacity density `W e / (3 d_c)`, kbps/m.
pub fn max_i2d_load_density(w: f64, e: f64, d_c: f64) -> f64 {
    w * e / (3.0 * d_c) / 1e3
}
