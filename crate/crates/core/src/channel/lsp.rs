//! Spatially correlated large-scale parameters (shadowing, K-factor, delay spread).

use rand::Rng;
use rand_distr::StandardNormal;

use super::grid::Grid;
use crate::engine::config::LspParams;
use crate::types::Position;

/// Zero-mean, unit-variance Gaussian field on the lattice with separable
/// exponential correlation `a^|di| * a^|dj|`, `a = exp(-step / corr_dist)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianField {
    pub grid: Grid,
    /// One-step correlation coefficient.
    pub a: f64,
    values: Vec<f64>,
}

impl GaussianField {
    pub fn from_white(grid: Grid, corr_dist: f64, white: &[f64]) -> Self {
        assert_eq!(white.len(), grid.len());
        let a = step_correlation(grid.step, corr_dist);
        let s = (1.0 - a * a).sqrt();
        let mut v = white.to_vec();
        // First-order recursion along x, then along y. Each pass keeps unit variance.
        for j in 0..grid.ny {
            for i in 1..grid.nx {
                let prev = v[grid.index(i - 1, j)];
                let k = grid.index(i, j);
                v[k] = a * prev + s * v[k];
            }
        }
        for i in 0..grid.nx {
            for j in 1..grid.ny {
                let prev = v[grid.index(i, j - 1)];
                let k = grid.index(i, j);
                v[k] = a * prev + s * v[k];
            }
        }
        GaussianField { grid, a, values: v }
    }

    pub fn generate<R: Rng + ?Sized>(grid: Grid, corr_dist: f64, rng: &mut R) -> Self {
        let white = white_noise(grid.len(), rng);
        Self::from_white(grid, corr_dist, &white)
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Model correlation between two lattice points.
    pub fn correlation(&self, di: usize, dj: usize) -> f64 {
        self.a.powi(di as i32) * self.a.powi(dj as i32)
    }
}

pub fn step_correlation(step: f64, corr_dist: f64) -> f64 {
    if corr_dist <= 0.0 {
        0.0
    } else {
        (-step / corr_dist).exp()
    }
}

fn white_noise<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Large-scale parameters of one link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkLsp {
    pub shadow_db: f64,
    pub k_db: f64,
    /// RMS delay spread, seconds.
    pub delay_spread: f64,
}

impl LinkLsp {
    pub fn k_linear(&self) -> f64 {
        10f64.powf(self.k_db / 10.0)
    }
}

/// The three normalized fields for one link kind (and, for I2D, one site).
#[derive(Debug, Clone, PartialEq)]
pub struct LspSet {
    pub params: LspParams,
    pub sf: GaussianField,
    pub k: GaussianField,
    pub ds: GaussianField,
}

impl LspSet {
    pub fn generate<R: Rng + ?Sized>(grid: Grid, params: &LspParams, rng: &mut R) -> Self {
        let w_sf = white_noise(grid.len(), rng);
        let w_k_own = white_noise(grid.len(), rng);
        let w_ds = white_noise(grid.len(), rng);
        let rho = params.sf_k_corr;
        let c = (1.0 - rho * rho).max(0.0).sqrt();
        let w_k: Vec<f64> = w_sf.iter().zip(&w_k_own).map(|(s, k)| rho * s + c * k).collect();
        LspSet {
            params: params.clone(),
            sf: GaussianField::from_white(grid, params.shadow_corr_dist, &w_sf),
            k: GaussianField::from_white(grid, params.k_corr_dist, &w_k),
            ds: GaussianField::from_white(grid, params.ds_corr_dist, &w_ds),
        }
    }

    fn scale(&self, z_sf: f64, z_k: f64, z_ds: f64) -> LinkLsp {
        let p = &self.params;
        LinkLsp {
            shadow_db: p.shadow_sigma_db * z_sf,
            k_db: p.k_mean_db + p.k_sigma_db * z_k,
            delay_spread: 10f64.powf(p.ds_log10_mean + p.ds_log10_sigma * z_ds),
        }
    }

    /// Parameters of a link whose fixed end is a site and whose mobile end sits at `p`.
    pub fn at_point(&self, p: Position) -> LinkLsp {
        let (i, j) = self.sf.grid.snap(p);
        self.scale(self.sf.at(i, j), self.k.at(i, j), self.ds.at(i, j))
    }

    /// Parameters of a device-to-device link. Both endpoint values are combined as
    /// `(F(p) + F(q)) / sqrt(2 (1 + rho(p, q)))`, which is symmetric and keeps unit variance.
    pub fn between(&self, p: Position, q: Position) -> LinkLsp {
        let g = self.sf.grid;
        let (pi, pj) = g.snap(p);
        let (qi, qj) = g.snap(q);
        let (di, dj) = (pi.abs_diff(qi), pj.abs_diff(qj));
        let pair = |f: &GaussianField| {
            let rho = f.correlation(di, dj);
            (f.at(pi, pj) + f.at(qi, qj)) / (2.0 * (1.0 + rho)).sqrt()
        };
        self.scale(pair(&self.sf), pair(&self.k), pair(&self.ds))
    }
}

/// All large-scale fields of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct LspFields {
    pub d2d: LspSet,
    /// One independent set per base-station site.
    pub i2d: Vec<LspSet>,
}

/// Draws the D2D set, then one I2D set per site, all from `rng`.
pub fn generate_lsp_fields<R: Rng + ?Sized>(
    grid: Grid,
    d2d: &LspParams,
    i2d: &LspParams,
    n_sites: usize,
    rng: &mut R,
) -> LspFields {
    let d = LspSet::generate(grid, d2d, rng);
    let i = (0..n_sites).map(|_| LspSet::generate(grid, i2d, rng)).collect();
    LspFields { d2d: d, i2d: i }
}
