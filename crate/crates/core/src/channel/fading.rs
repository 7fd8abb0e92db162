//! Small-scale fading: flat Rician fades and multipath transfer functions.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// One propagation path: complex amplitude and excess delay (s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathComponent {
    pub amplitude: Complex64,
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GscmParams {
    pub n_paths: usize,
    pub delay_scaling: f64,
    pub path_shadow_db: f64,
}

/// Unit-variance circularly symmetric complex Gaussian.
fn cn01<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Split of unit power into (LOS, scattered) for Rician factor `k` (linear).
pub fn rician_split(k: f64) -> (f64, f64) {
    if k.is_infinite() {
        (1.0, 0.0)
    } else {
        (k / (k + 1.0), 1.0 / (k + 1.0))
    }
}

/// Power of one flat Rician fade with unit mean.
pub fn rician_power<R: Rng + ?Sized>(k: f64, rng: &mut R) -> f64 {
    let (los, sc) = rician_split(k);
    let h = Complex64::new(los.sqrt(), 0.0) + cn01(rng) * sc.sqrt();
    h.norm_sqr()
}

/// LOS ray plus `n_paths` scattered rays with exponential delays and an exponential
/// power-delay profile. Each scattered ray has a complex Gaussian gain, so |H(f)|^2 at
/// any single frequency is Rician with factor `k` and unit mean.
pub fn gscm_paths<R: Rng + ?Sized>(k: f64, delay_spread: f64, p: &GscmParams, rng: &mut R) -> Vec<PathComponent> {
    let (los, sc) = rician_split(k);
    let phi0 = rng.random::<f64>() * std::f64::consts::TAU;
    let mut paths = Vec::with_capacity(p.n_paths + 1);
    paths.push(PathComponent {
        amplitude: Complex64::from_polar(los.sqrt(), phi0),
        delay: 0.0,
    });
    if sc == 0.0 {
        return paths;
    }
    let r = p.delay_scaling;
    let mut delays: Vec<f64> = (0..p.n_paths)
        .map(|_| {
            let u: f64 = 1.0 - rng.random::<f64>();
            -r * delay_spread * u.ln()
        })
        .collect();
    let dmin = delays.iter().cloned().fold(f64::INFINITY, f64::min);
    for d in &mut delays {
        *d -= dmin;
    }
    let mut powers: Vec<f64> = delays
        .iter()
        .map(|&t| {
            let z: f64 = rng.sample(StandardNormal);
            let decay = if delay_spread > 0.0 {
                (-t * (r - 1.0) / (r * delay_spread)).exp()
            } else {
                1.0
            };
            decay * 10f64.powf(-p.path_shadow_db * z / 10.0)
        })
        .collect();
    let total: f64 = powers.iter().sum();
    for w in &mut powers {
        *w /= total;
    }
    for (t, w) in delays.into_iter().zip(powers) {
        paths.push(PathComponent {
            amplitude: cn01(rng) * (w * sc).sqrt(),
            delay: t,
        });
    }
    paths
}

/// |H(f)|^2 at `n` uniformly spaced frequencies `f0 + m * df`.
pub fn transfer_magnitudes(paths: &[PathComponent], f0: f64, df: f64, n: usize) -> Vec<f64> {
    let mut h = vec![Complex64::new(0.0, 0.0); n];
    for p in paths {
        let w = -std::f64::consts::TAU * p.delay;
        let mut ph = p.amplitude * Complex64::from_polar(1.0, w * f0);
        let rot = Complex64::from_polar(1.0, w * df);
        for (m, hm) in h.iter_mut().enumerate() {
            // Re-anchor periodically so the recurrence never drifts.
            if m % 64 == 0 && m > 0 {
                ph = p.amplitude * Complex64::from_polar(1.0, w * (f0 + m as f64 * df));
            }
            *hm += ph;
            ph *= rot;
        }
    }
    h.into_iter().map(|x| x.norm_sqr()).collect()
}

/// Baseband frequency of the first subcarrier and the spacing, band centred on zero.
pub fn subcarrier_grid(n_subcarriers: usize, spacing: f64) -> (f64, f64) {
    (-(n_subcarriers as f64 - 1.0) / 2.0 * spacing, spacing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::rng::RngStreams;

    fn params() -> GscmParams {
        GscmParams {
            n_paths: 16,
            delay_scaling: 3.0,
            path_shadow_db: 3.0,
        }
    }

    #[test]
    fn infinite_k_is_los_only() {
        let mut rng = RngStreams::new(1).stream("t");
        let paths = gscm_paths(f64::INFINITY, 1e-7, &params(), &mut rng);
        assert_eq!(paths.len(), 1);
        let (f0, df) = subcarrier_grid(600, 15e3);
        for g in transfer_magnitudes(&paths, f0, df, 600) {
            assert!((g - 1.0).abs() < 1e-12);
        }
        assert_eq!(rician_power(f64::INFINITY, &mut rng), 1.0);
    }

    #[test]
    fn zero_delay_spread_is_flat() {
        let mut rng = RngStreams::new(2).stream("t");
        let paths = gscm_paths(2.0, 0.0, &params(), &mut rng);
        let (f0, df) = subcarrier_grid(600, 15e3);
        let h = transfer_magnitudes(&paths, f0, df, 600);
        for g in &h {
            assert!((g / h[0] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn recurrence_matches_direct_sum() {
        let mut rng = RngStreams::new(3).stream("t");
        let paths = gscm_paths(1.0, 2e-7, &params(), &mut rng);
        let (f0, df) = subcarrier_grid(600, 15e3);
        let h = transfer_magnitudes(&paths, f0, df, 600);
        for m in [0usize, 1, 63, 64, 299, 599] {
            let f = f0 + m as f64 * df;
            let direct: Complex64 = paths
                .iter()
                .map(|p| p.amplitude * Complex64::from_polar(1.0, -std::f64::consts::TAU * f * p.delay))
                .sum();
            assert!((direct.norm_sqr() - h[m]).abs() < 1e-10 * (1.0 + h[m]));
        }
    }

    #[test]
    fn selective_channel_decorrelates_across_band() {
        // Large delay spread: subcarriers far apart should be nearly uncorrelated.
        let mut rng = RngStreams::new(4).stream("t");
        let (f0, df) = subcarrier_grid(600, 15e3);
        let (mut sa, mut sb, mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let n = 4000;
        for _ in 0..n {
            let paths = gscm_paths(0.5, 1e-6, &params(), &mut rng);
            let h = transfer_magnitudes(&paths, f0, df, 600);
            let (a, b) = (h[0], h[599]);
            sa += a;
            sb += b;
            sab += a * b;
            saa += a * a;
            sbb += b * b;
        }
        let nf = n as f64;
        let cov = sab / nf - sa / nf * sb / nf;
        let corr = cov / ((saa / nf - (sa / nf).powi(2)) * (sbb / nf - (sb / nf).powi(2))).sqrt();
        assert!(corr < 0.3, "{corr}");
    }
}
