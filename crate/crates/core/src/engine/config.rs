//! Simulation configuration: one TOML table per module, plus derived numerology.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ChannelModel, LinkKind, Mode, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub sim: SimSection,
    pub roi: RoiSection,
    pub scenario: ScenarioSection,
    pub channel: ChannelSection,
    pub radio: RadioSection,
    pub traffic: TrafficSection,
    pub cdms: CdmsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    /// Simulated time, seconds.
    pub duration: f64,
    /// Requests issued before this instant do not enter the metrics.
    pub warmup: f64,
    pub seed: u64,
    pub mode: Mode,
    /// Keep a per-request audit trail in the replication outcome.
    pub audit: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            duration: 300.0,
            warmup: 60.0,
            seed: 1,
            mode: Mode::Offloading,
            audit: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoiSection {
    pub length: f64,
    pub width: f64,
}

impl Default for RoiSection {
    fn default() -> Self {
        RoiSection {
            length: 1000.0,
            width: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub kind: Scenario,
    /// Overrides the scenario's cell diameter when set.
    pub cell_diameter: Option<f64>,
    pub bs_antenna_height: Option<f64>,
    pub device_antenna_height: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            kind: Scenario::A,
            cell_diameter: None,
            bs_antenna_height: None,
            device_antenna_height: 1.5,
        }
    }
}

/// Large-scale parameter statistics for one (scenario, link kind).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LspParams {
    pub shadow_sigma_db: f64,
    pub shadow_corr_dist: f64,
    pub k_mean_db: f64,
    pub k_sigma_db: f64,
    pub k_corr_dist: f64,
    /// Correlation between the shadowing and K-factor fields.
    pub sf_k_corr: f64,
    /// log10 of the RMS delay spread in seconds.
    pub ds_log10_mean: f64,
    pub ds_log10_sigma: f64,
    pub ds_corr_dist: f64,
}

impl LspParams {
    pub fn d2d_default() -> Self {
        LspParams {
            shadow_sigma_db: 3.0,
            shadow_corr_dist: 12.0,
            k_mean_db: 9.0,
            k_sigma_db: 5.0,
            k_corr_dist: 15.0,
            sf_k_corr: 0.5,
            ds_log10_mean: -7.19,
            ds_log10_sigma: 0.40,
            ds_corr_dist: 7.0,
        }
    }

    pub fn i2d_default(scenario: Scenario) -> Self {
        match scenario {
            Scenario::A => Self::d2d_default(),
            Scenario::B => LspParams {
                shadow_sigma_db: 4.0,
                shadow_corr_dist: 37.0,
                k_mean_db: 9.0,
                k_sigma_db: 3.5,
                k_corr_dist: 12.0,
                sf_k_corr: 0.0,
                ds_log10_mean: -7.03,
                ds_log10_sigma: 0.66,
                ds_corr_dist: 30.0,
            },
        }
    }
}

/// Coefficients of the dual-slope law: `intercept + near_slope*log10(d) + freq_coeff*log10(f_GHz)`
/// up to the breakpoint, `far_slope` dB/decade beyond it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualSlope {
    pub intercept_db: f64,
    pub near_slope_db: f64,
    pub far_slope_db: f64,
    pub freq_coeff_db: f64,
}

impl Default for DualSlope {
    fn default() -> Self {
        DualSlope {
            intercept_db: 28.0,
            near_slope_db: 22.0,
            far_slope_db: 40.0,
            freq_coeff_db: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub model: ChannelModel,
    pub carrier_freq: f64,
    pub grid_step: f64,
    pub min_distance: f64,
    /// Close-in reference distance of M2.
    pub close_in_distance: f64,
    /// Path-loss exponent of M2 beyond the close-in distance.
    pub m2_exponent: f64,
    pub dual_slope: DualSlope,
    pub breakpoint_d2d: f64,
    /// Defaults to 60 m in scenario A and 320 m in scenario B.
    pub breakpoint_i2d: Option<f64>,
    pub n_paths: usize,
    /// Ratio between the delay-distribution scale and the RMS delay spread.
    pub delay_scaling: f64,
    /// Per-path lognormal power spread of the scattered rays, dB.
    pub path_shadow_db: f64,
    pub lsp_d2d: LspParams,
    /// Defaults per scenario when absent.
    pub lsp_i2d: Option<LspParams>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection {
            model: ChannelModel::M6,
            carrier_freq: 2.0e9,
            grid_step: 5.0,
            min_distance: 1.0,
            close_in_distance: 10.0,
            m2_exponent: 3.0,
            dual_slope: DualSlope::default(),
            breakpoint_d2d: 60.0,
            breakpoint_i2d: None,
            n_paths: 16,
            delay_scaling: 3.0,
            path_shadow_db: 3.0,
            lsp_d2d: LspParams::d2d_default(),
            lsp_i2d: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioSection {
    /// Channel bandwidth W, Hz.
    pub system_bandwidth: f64,
    /// Fraction of W left as guard band; only the remainder carries PRBs.
    pub guard_fraction: f64,
    pub ci_duration: f64,
    pub prb_duration: f64,
    pub prb_bandwidth: f64,
    pub subcarriers_per_prb: u32,
    pub subcarrier_spacing: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
    /// Maximum transmit spectral efficiency e, bps/Hz. I2D links always target it.
    pub tx_spectral_efficiency: f64,
    /// Candidate D2D target rates, ascending.
    pub d2d_rate_ladder: Vec<f64>,
    pub fec_rate: f64,
    /// Fixed margins in dB. When absent the calibration table is consulted.
    pub link_margin_i2d: Option<f64>,
    pub link_margin_d2d: Option<f64>,
    pub outage_target: f64,
    pub max_attempts: u32,
}

impl Default for RadioSection {
    fn default() -> Self {
        RadioSection {
            system_bandwidth: 10.0e6,
            guard_fraction: 0.1,
            ci_duration: 1.0,
            prb_duration: 0.5e-3,
            prb_bandwidth: 180.0e3,
            subcarriers_per_prb: 12,
            subcarrier_spacing: 15.0e3,
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 9.0,
            tx_spectral_efficiency: 4.0,
            d2d_rate_ladder: vec![4.0],
            fec_rate: 0.8,
            link_margin_i2d: None,
            link_margin_d2d: None,
            outage_target: 0.005,
            max_attempts: 10,
        }
    }
}

/// Catalog size: a count, or the string "infinite".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CatalogSize {
    Finite(u64),
    Infinite(InfiniteTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfiniteTag {
    #[serde(rename = "infinite")]
    Infinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficSection {
    pub payload_bits: u64,
    /// Total vehicle arrival rate over both street ends, vehicles/s.
    pub vehicle_rate: f64,
    /// Per-vehicle request rate, requests/s.
    pub request_rate: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub zipf_alpha: f64,
    pub catalog_size: CatalogSize,
    /// Non-repeat fraction plugged into the offered-load formula.
    pub gamma_nr: f64,
}

impl Default for TrafficSection {
    fn default() -> Self {
        TrafficSection {
            payload_bits: 432_000 * 8,
            vehicle_rate: 20.0 / 60.0,
            request_rate: 0.1,
            speed_min: 6.0,
            speed_max: 16.0,
            zipf_alpha: 1.0,
            catalog_size: CatalogSize::Finite(1000),
            gamma_nr: 0.59,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CdmsSection {
    pub neighbor_range: f64,
    pub content_timeout: f64,
    pub sharing_timeout: f64,
}

impl Default for CdmsSection {
    fn default() -> Self {
        CdmsSection {
            neighbor_range: 100.0,
            content_timeout: 20.0,
            sharing_timeout: 60.0,
        }
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::desk(Scenario::A)
    }
}

impl SimConfig {
    /// 1 km street, 5 minutes.
    pub fn desk(scenario: Scenario) -> Self {
        SimConfig {
            sim: SimSection::default(),
            roi: RoiSection::default(),
            scenario: ScenarioSection {
                kind: scenario,
                ..ScenarioSection::default()
            },
            channel: ChannelSection::default(),
            radio: RadioSection::default(),
            traffic: TrafficSection::default(),
            cdms: CdmsSection::default(),
        }
    }

    /// 3 km street, 30 minutes.
    pub fn full(scenario: Scenario) -> Self {
        let mut c = Self::desk(scenario);
        c.roi.length = 3000.0;
        c.sim.duration = 1800.0;
        c.sim.warmup = 120.0;
        c
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(s)?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn cell_diameter(&self) -> f64 {
        self.scenario
            .cell_diameter
            .unwrap_or_else(|| self.scenario.kind.default_cell_diameter())
    }

    pub fn bs_height(&self) -> f64 {
        self.scenario
            .bs_antenna_height
            .unwrap_or_else(|| self.scenario.kind.default_bs_height())
    }

    pub fn breakpoint(&self, kind: LinkKind) -> f64 {
        match kind {
            LinkKind::D2D => self.channel.breakpoint_d2d,
            LinkKind::I2D => self.channel.breakpoint_i2d.unwrap_or(match self.scenario.kind {
                Scenario::A => 60.0,
                // 4 h'_BS h'_UT f / c with 1 m effective environment height.
                Scenario::B => 320.0,
            }),
        }
    }

    pub fn lsp(&self, kind: LinkKind) -> LspParams {
        match kind {
            LinkKind::D2D => self.channel.lsp_d2d.clone(),
            LinkKind::I2D => self
                .channel
                .lsp_i2d
                .clone()
                .unwrap_or_else(|| LspParams::i2d_default(self.scenario.kind)),
        }
    }

    pub fn numerology(&self) -> Numerology {
        Numerology::from_config(self)
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        let r = &self.radio;
        let mut pos = |name: &str, x: f64| {
            if !(x.is_finite() && x > 0.0) {
                v.push(format!("{name} must be positive and finite (got {x})"));
            }
        };
        pos("sim.duration", self.sim.duration);
        pos("roi.length", self.roi.length);
        pos("roi.width", self.roi.width);
        pos("scenario.cell_diameter", self.cell_diameter());
        pos("scenario.bs_antenna_height", self.bs_height());
        pos("scenario.device_antenna_height", self.scenario.device_antenna_height);
        pos("channel.carrier_freq", self.channel.carrier_freq);
        pos("channel.grid_step", self.channel.grid_step);
        pos("channel.min_distance", self.channel.min_distance);
        pos("channel.close_in_distance", self.channel.close_in_distance);
        pos("channel.breakpoint_d2d", self.channel.breakpoint_d2d);
        pos("channel.breakpoint_i2d", self.breakpoint(LinkKind::I2D));
        pos("channel.delay_scaling", self.channel.delay_scaling);
        pos("radio.system_bandwidth", r.system_bandwidth);
        pos("radio.ci_duration", r.ci_duration);
        pos("radio.prb_duration", r.prb_duration);
        pos("radio.prb_bandwidth", r.prb_bandwidth);
        pos("radio.subcarrier_spacing", r.subcarrier_spacing);
        pos("radio.tx_spectral_efficiency", r.tx_spectral_efficiency);
        pos("cdms.neighbor_range", self.cdms.neighbor_range);
        pos("cdms.sharing_timeout", self.cdms.sharing_timeout);
        pos("traffic.vehicle_rate", self.traffic.vehicle_rate);
        pos("traffic.speed_min", self.traffic.speed_min);

        if !(self.sim.warmup >= 0.0 && self.sim.warmup < self.sim.duration) {
            v.push(format!(
                "sim.warmup must lie in [0, duration) (got {})",
                self.sim.warmup
            ));
        }
        if r.subcarriers_per_prb == 0 {
            v.push("radio.subcarriers_per_prb must be at least 1".into());
        }
        let w = r.subcarriers_per_prb as f64 * r.subcarrier_spacing;
        if (w - r.prb_bandwidth).abs() > 1e-6 * r.prb_bandwidth {
            v.push(format!(
                "radio.prb_bandwidth ({}) must equal subcarriers_per_prb * subcarrier_spacing ({w})",
                r.prb_bandwidth
            ));
        }
        let slots = r.ci_duration / r.prb_duration;
        if (slots - slots.round()).abs() > 1e-6 || slots.round() < 1.0 {
            v.push(format!(
                "radio.ci_duration ({}) must be an integer multiple of prb_duration ({})",
                r.ci_duration, r.prb_duration
            ));
        }
        if !(0.0..1.0).contains(&r.guard_fraction) {
            v.push(format!("radio.guard_fraction must lie in [0, 1) (got {})", r.guard_fraction));
        }
        if r.system_bandwidth * (1.0 - r.guard_fraction) < r.prb_bandwidth {
            v.push("occupied bandwidth must hold at least one PRB".into());
        }
        if !(r.fec_rate > 0.0 && r.fec_rate <= 1.0) {
            v.push(format!("radio.fec_rate must lie in (0, 1] (got {})", r.fec_rate));
        }
        if r.d2d_rate_ladder.is_empty() {
            v.push("radio.d2d_rate_ladder must not be empty".into());
        }
        for (i, &e) in r.d2d_rate_ladder.iter().enumerate() {
            if !(e > 0.0 && e <= r.tx_spectral_efficiency) {
                v.push(format!(
                    "radio.d2d_rate_ladder[{i}] = {e} must lie in (0, tx_spectral_efficiency]"
                ));
            }
        }
        if r.d2d_rate_ladder.windows(2).any(|p| p[0] >= p[1]) {
            v.push("radio.d2d_rate_ladder must be strictly ascending".into());
        }
        for (name, m) in [("radio.link_margin_i2d", r.link_margin_i2d), ("radio.link_margin_d2d", r.link_margin_d2d)] {
            if let Some(m) = m {
                if !m.is_finite() {
                    v.push(format!("{name} must be finite"));
                }
            }
        }
        if !(r.outage_target > 0.0 && r.outage_target < 1.0) {
            v.push(format!("radio.outage_target must lie in (0, 1) (got {})", r.outage_target));
        }
        if r.max_attempts == 0 {
            v.push("radio.max_attempts must be at least 1".into());
        }
        let t = &self.traffic;
        if t.payload_bits == 0 {
            v.push("traffic.payload_bits must be positive".into());
        }
        if !(t.speed_min < t.speed_max) {
            v.push(format!(
                "traffic.speed_min ({}) must be below speed_max ({})",
                t.speed_min, t.speed_max
            ));
        }
        if !(t.request_rate >= 0.0 && t.request_rate.is_finite()) {
            v.push("traffic.request_rate must be non-negative".into());
        }
        if !(t.zipf_alpha >= 0.0 && t.zipf_alpha.is_finite()) {
            v.push("traffic.zipf_alpha must be non-negative".into());
        }
        match t.catalog_size {
            CatalogSize::Finite(0) => v.push("traffic.catalog_size must be at least 1".into()),
            CatalogSize::Infinite(_) if t.zipf_alpha <= 1.0 => {
                v.push("an infinite catalog needs zipf_alpha > 1".into())
            }
            _ => {}
        }
        if !(0.0..=1.0).contains(&t.gamma_nr) {
            v.push("traffic.gamma_nr must lie in [0, 1]".into());
        }
        if !(self.cdms.content_timeout >= 0.0) {
            v.push("cdms.content_timeout must be non-negative".into());
        }
        if self.channel.n_paths == 0 {
            v.push("channel.n_paths must be at least 1".into());
        }
        for kind in LinkKind::ALL {
            let l = self.lsp(kind);
            for (name, x) in [
                ("shadow_sigma_db", l.shadow_sigma_db),
                ("k_sigma_db", l.k_sigma_db),
                ("ds_log10_sigma", l.ds_log10_sigma),
                ("shadow_corr_dist", l.shadow_corr_dist),
                ("k_corr_dist", l.k_corr_dist),
                ("ds_corr_dist", l.ds_corr_dist),
            ] {
                if !(x >= 0.0 && x.is_finite()) {
                    v.push(format!("lsp_{kind}.{name} must be non-negative"));
                }
            }
            if !(-1.0..=1.0).contains(&l.sf_k_corr) {
                v.push(format!("lsp_{kind}.sf_k_corr must lie in [-1, 1]"));
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v))
        }
    }
}

/// Quantities derived from the radio section.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Numerology {
    pub slots_per_ci: u64,
    pub prbs_per_slot: u64,
    /// PRBs per control interval.
    pub n_prb: u64,
    pub subcarriers_per_prb: usize,
    pub subcarrier_spacing: f64,
    pub prb_duration: f64,
    /// Coded bits one PRB carries per bps/Hz of spectral efficiency (tau * w_c * n_c).
    pub bits_per_prb_per_e: f64,
    /// Coded packet size D = L / K_ec, bits.
    pub coded_bits: f64,
    pub payload_bits: f64,
    /// Per-subcarrier noise power, mW.
    pub sigma2_mw: f64,
    /// Noise over one PRB bandwidth without the noise figure, mW.
    pub w_n0_mw: f64,
}

impl Numerology {
    pub fn from_config(cfg: &SimConfig) -> Self {
        let r = &cfg.radio;
        let slots = (r.ci_duration / r.prb_duration).round() as u64;
        let per_slot = ((r.system_bandwidth * (1.0 - r.guard_fraction)) / r.prb_bandwidth + 1e-9).floor() as u64;
        let n0_mw = 10f64.powf(r.noise_psd_dbm_hz / 10.0);
        let f_lin = 10f64.powf(r.noise_figure_db / 10.0);
        Numerology {
            slots_per_ci: slots,
            prbs_per_slot: per_slot,
            n_prb: slots * per_slot,
            subcarriers_per_prb: r.subcarriers_per_prb as usize,
            subcarrier_spacing: r.subcarrier_spacing,
            prb_duration: r.prb_duration,
            bits_per_prb_per_e: r.prb_duration * r.subcarrier_spacing * r.subcarriers_per_prb as f64,
            coded_bits: coded_bits(cfg.traffic.payload_bits as f64, r.fec_rate),
            payload_bits: cfg.traffic.payload_bits as f64,
            sigma2_mw: r.subcarrier_spacing * f_lin * n0_mw,
            w_n0_mw: r.prb_bandwidth * n0_mw,
        }
    }

    /// PRBs one packet of `coded` bits needs at target rate `e`.
    pub fn prbs_needed(&self, coded: f64, e: f64) -> u64 {
        prbs_needed(coded, self.bits_per_prb_per_e, e)
    }

    /// Number of frequency columns (PRBs per slot).
    pub fn n_freq(&self) -> usize {
        self.prbs_per_slot as usize
    }
}

/// D = L / K_ec, snapped to the integer when float noise is all that separates them.
pub fn coded_bits(payload_bits: f64, fec_rate: f64) -> f64 {
    let d = payload_bits / fec_rate;
    if (d - d.round()).abs() < 1e-6 {
        d.round()
    } else {
        d
    }
}

/// ceil(D / (bits_per_e * e)), tolerant to float noise at exact multiples.
pub fn prbs_needed(coded: f64, bits_per_e: f64, e: f64) -> u64 {
    let x = coded / (bits_per_e * e);
    let r = x.round();
    if (x - r).abs() < 1e-9 * x.max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}
