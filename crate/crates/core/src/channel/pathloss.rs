//! Deterministic path-loss laws.

use serde::{Deserialize, Serialize};

use crate::engine::config::SimConfig;
use crate::error::{Error, Result};
use crate::types::{LinkKind, PathLossModel};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathLossParams {
    pub model: PathLossModel,
    pub carrier_freq: f64,
    /// Free-space constant (lambda / 4 pi)^2.
    pub friis_constant: f64,
    /// Exponent beyond the close-in distance (M2).
    pub exponent: f64,
    pub close_in_distance: f64,
    pub breakpoint_distance: f64,
    pub intercept_db: f64,
    pub near_slope_db: f64,
    pub far_slope_db: f64,
    pub freq_coeff_db: f64,
    pub link_kind: LinkKind,
    pub tx_height: f64,
    pub rx_height: f64,
    pub min_distance: f64,
}

impl PathLossParams {
    pub fn from_config(cfg: &SimConfig, model: PathLossModel, kind: LinkKind) -> Self {
        let c = &cfg.channel;
        let lambda = SPEED_OF_LIGHT / c.carrier_freq;
        let kf = (lambda / (4.0 * std::f64::consts::PI)).powi(2);
        let dev = cfg.scenario.device_antenna_height;
        PathLossParams {
            model,
            carrier_freq: c.carrier_freq,
            friis_constant: kf,
            exponent: c.m2_exponent,
            close_in_distance: c.close_in_distance,
            breakpoint_distance: cfg.breakpoint(kind),
            intercept_db: c.dual_slope.intercept_db,
            near_slope_db: c.dual_slope.near_slope_db,
            far_slope_db: c.dual_slope.far_slope_db,
            freq_coeff_db: c.dual_slope.freq_coeff_db,
            link_kind: kind,
            tx_height: match kind {
                LinkKind::I2D => cfg.bs_height(),
                LinkKind::D2D => dev,
            },
            rx_height: dev,
            min_distance: c.min_distance,
        }
    }

    /// Antenna-to-antenna distance for a horizontal separation `d`.
    pub fn distance_3d(&self, d: f64) -> f64 {
        let dh = self.tx_height - self.rx_height;
        (d * d + dh * dh).sqrt()
    }

    fn friis_db(&self, d: f64) -> f64 {
        -10.0 * self.friis_constant.log10() + 20.0 * d.log10()
    }

    fn dual_slope_near_db(&self, d: f64) -> f64 {
        self.intercept_db + self.near_slope_db * d.log10() + self.freq_coeff_db * (self.carrier_freq / 1e9).log10()
    }
}

/// Path loss in dB for horizontal separation `d` metres. Distances in (0, min_distance)
/// are clamped up to `min_distance`.
pub fn path_loss(p: &PathLossParams, d: f64) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::Domain(format!("path loss needs a positive distance, got {d}")));
    }
    Ok(path_loss_clamped(p, d))
}

/// As [`path_loss`] but total: non-positive distances count as the minimum distance.
pub fn path_loss_clamped(p: &PathLossParams, d: f64) -> f64 {
    let d3 = p.distance_3d(d.max(p.min_distance)).max(p.min_distance);
    match p.model {
        PathLossModel::M1 => p.friis_db(d3),
        PathLossModel::M2 => {
            if d3 <= p.close_in_distance {
                p.friis_db(d3)
            } else {
                p.friis_db(p.close_in_distance) + 10.0 * p.exponent * (d3 / p.close_in_distance).log10()
            }
        }
        PathLossModel::M3 => {
            let bp = p.breakpoint_distance;
            if d3 <= bp {
                p.dual_slope_near_db(d3)
            } else {
                p.dual_slope_near_db(bp) + p.far_slope_db * (d3 / bp).log10()
            }
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
