//! Power control with link margin, SNIR, the information-rate success test and energy.

pub mod calibration;

use std::ops::Range;

use crate::channel::Transfer;
use crate::engine::config::Numerology;
use crate::error::{Error, Result};

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Thermal noise per subcarrier, sigma^2 = w_c * F * N0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub n0_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub subcarrier_spacing: f64,
}

impl NoiseModel {
    pub fn sigma2_dbm(&self) -> f64 {
        self.n0_dbm_hz + self.noise_figure_db + 10.0 * self.subcarrier_spacing.log10()
    }

    pub fn sigma2_mw(&self) -> f64 {
        self.subcarrier_spacing * db_to_linear(self.noise_figure_db) * db_to_linear(self.n0_dbm_hz)
    }
}

/// Per-subcarrier transmit power in mW: `M * sigma2 / g * (2^e - 1)`.
pub fn tx_power_per_subcarrier(g: f64, e_bar: f64, margin_db: f64, sigma2_mw: f64) -> Result<f64> {
    if !(g > 0.0) {
        return Err(Error::Domain(format!("nominal gain must be positive, got {g}")));
    }
    if !(e_bar >= 0.0) {
        return Err(Error::Domain(format!("target rate must be non-negative, got {e_bar}")));
    }
    Ok(db_to_linear(margin_db) * sigma2_mw / g * (2f64.powf(e_bar) - 1.0))
}

/// The same power in dBm, built term by term in the log domain.
pub fn tx_power_per_subcarrier_dbm(g_db: f64, e_bar: f64, margin_db: f64, sigma2_dbm: f64) -> f64 {
    sigma2_dbm - g_db + margin_db + 10.0 * (2f64.powf(e_bar) - 1.0).log10()
}

/// Signal over noise plus the listed interference powers.
pub fn snir(sigma2: f64, signal: f64, interference: impl IntoIterator<Item = f64>) -> f64 {
    signal / (sigma2 + interference.into_iter().sum::<f64>())
}

/// Radiated energy of one attempt, mJ: PRBs * n_c * P * tau.
pub fn packet_energy(prbs: u64, subcarriers_per_prb: usize, power_mw: f64, prb_duration: f64) -> f64 {
    prbs as f64 * subcarriers_per_prb as f64 * power_mw * prb_duration
}

/// Resource-grid constants the success test needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhyGrid {
    /// PRBs per slot. PRB `k` sits in frequency column `k % n_freq`.
    pub n_freq: usize,
    pub n_c: usize,
    pub tau: f64,
    pub w_c: f64,
    pub sigma2: f64,
}

impl PhyGrid {
    pub fn from_numerology(n: &Numerology) -> Self {
        PhyGrid {
            n_freq: n.n_freq(),
            n_c: n.subcarriers_per_prb,
            tau: n.prb_duration,
            w_c: n.subcarrier_spacing,
            sigma2: n.sigma2_mw,
        }
    }

    /// How many PRBs of the range fall in each frequency column.
    pub fn column_counts(&self, r: Range<u64>) -> Vec<u64> {
        let nf = self.n_freq as u64;
        let len = r.end.saturating_sub(r.start);
        let mut counts = vec![len / nf; self.n_freq];
        let rem = len % nf;
        for i in 0..rem {
            counts[((r.start + i) % nf) as usize] += 1;
        }
        counts
    }
}

/// Another link transmitting on some PRBs, as seen at the receiver under test.
#[derive(Debug, Clone, Copy)]
pub struct Interferer<'a> {
    pub power: f64,
    /// Channel from the interfering transmitter to our receiver.
    pub channel: &'a Transfer,
    /// PRBs the interfering link occupies (any of its packets).
    pub prbs: &'a [Range<u64>],
}

impl Interferer<'_> {
    fn covers(&self, k: u64) -> bool {
        self.prbs.iter().any(|r| r.contains(&k))
    }
}

/// Information the packet conveys over its PRBs:
/// `tau * w_c * sum_k sum_q min(e, log2(1 + snir))`.
pub fn information_bits(
    grid: &PhyGrid,
    e_cap: f64,
    power: f64,
    channel: &Transfer,
    alloc: Range<u64>,
    interferers: &[Interferer<'_>],
) -> f64 {
    if alloc.is_empty() {
        return 0.0;
    }
    // Split the allocation where the set of active interferers changes.
    let mut cuts = vec![alloc.start, alloc.end];
    for it in interferers {
        for r in it.prbs {
            for b in [r.start, r.end] {
                if b > alloc.start && b < alloc.end {
                    cuts.push(b);
                }
            }
        }
    }
    cuts.sort_unstable();
    cuts.dedup();
    let mut total = 0.0;
    let mut active: Vec<&Interferer<'_>> = Vec::new();
    for seg in cuts.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        active.clear();
        active.extend(interferers.iter().filter(|it| it.covers(a)));
        let counts = grid.column_counts(a..b);
        let flat = channel.is_flat() && active.iter().all(|it| it.channel.is_flat());
        if flat {
            let xi = snir(grid.sigma2, power * channel.at(0), active.iter().map(|it| it.power * it.channel.at(0)));
            let per_sc = e_cap.min((1.0 + xi).log2());
            total += (b - a) as f64 * grid.n_c as f64 * per_sc;
            continue;
        }
        for (col, &cnt) in counts.iter().enumerate() {
            if cnt == 0 {
                continue;
            }
            let mut col_sum = 0.0;
            for q in 0..grid.n_c {
                let s = col * grid.n_c + q;
                let xi = snir(grid.sigma2, power * channel.at(s), active.iter().map(|it| it.power * it.channel.at(s)));
                col_sum += e_cap.min((1.0 + xi).log2());
            }
            total += cnt as f64 * col_sum;
        }
    }
    grid.tau * grid.w_c * total
}

/// Success iff the conveyed information reaches the payload size.
pub fn transmission_success(
    grid: &PhyGrid,
    e_cap: f64,
    payload_bits: f64,
    power: f64,
    channel: &Transfer,
    alloc: Range<u64>,
    interferers: &[Interferer<'_>],
) -> bool {
    meets_payload(information_bits(grid, e_cap, power, channel, alloc, interferers), payload_bits)
}

/// `bits >= payload`, forgiving only float noise far below one bit.
pub fn meets_payload(bits: f64, payload_bits: f64) -> bool {
    bits >= payload_bits * (1.0 - 1e-12)
}
