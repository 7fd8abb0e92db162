//! Monte-Carlo link-margin calibration for the stochastic channel models.
//!
//! Power control inverts the nominal (M3) gain, so the interference-free SNR on
//! subcarrier `s` is `M (2^e - 1) * SH * |h_s|^2`, independent of distance. Each draw
//! samples large-scale parameters from their marginals and a small-scale realization,
//! then finds the smallest lattice margin that lets a lone packet pass.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{db_to_linear, meets_payload, PhyGrid};
use crate::channel::fading::GscmParams;
use crate::channel::grid::hex;
use crate::channel::lsp::LinkLsp;
use crate::channel::pathloss::{path_loss, PathLossParams};
use crate::channel::{realize, Transfer};
use crate::engine::config::{LspParams, SimConfig};
use crate::engine::rng::RngStreams;
use crate::error::{Error, Result};
use crate::types::{ChannelModel, LinkKind, PathLossModel, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSettings {
    pub draws: usize,
    pub lattice_step_db: f64,
    pub max_margin_db: f64,
    /// The chosen margin must keep the outage below target even for a verification
    /// run of this many draws: `p + z sqrt(p (1 - p) / n_verify) <= p_out`.
    pub verify_draws: usize,
    pub confidence_z: f64,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        CalibrationSettings {
            draws: 50_000,
            lattice_step_db: 0.5,
            max_margin_db: 40.0,
            verify_draws: 10_000,
            confidence_z: 2.326,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub model: ChannelModel,
    pub scenario: Scenario,
    pub link_kind: LinkKind,
    #[serde(rename = "margin_dB")]
    pub margin_db: f64,
    pub achieved_outage: f64,
}

/// Margins keyed by (model, scenario, link kind).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CalibrationTable {
    pub entries: Vec<CalibrationEntry>,
}

impl CalibrationTable {
    pub fn get(&self, model: ChannelModel, scenario: Scenario, kind: LinkKind) -> Result<&CalibrationEntry> {
        if !model.is_stochastic() {
            return Err(Error::UseM4Margin(model));
        }
        self.entries
            .iter()
            .find(|e| e.model == model && e.scenario == scenario && e.link_kind == kind)
            .ok_or(Error::MissingCalibration { model, scenario, kind })
    }

    /// Margin to apply under `model`; deterministic models borrow the M4 value.
    pub fn margin_db(&self, model: ChannelModel, scenario: Scenario, kind: LinkKind) -> Result<f64> {
        match self.get(model, scenario, kind) {
            Ok(e) => Ok(e.margin_db),
            Err(Error::UseM4Margin(_)) => Ok(self.get(ChannelModel::M4, scenario, kind)?.margin_db),
            Err(e) => Err(e),
        }
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.entries {
            w.serialize(e)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn from_csv_str(s: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(s.as_bytes());
        let entries = r.deserialize().collect::<std::result::Result<Vec<CalibrationEntry>, _>>()?;
        Ok(CalibrationTable { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv_string()?.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the CSV form, for run manifests.
    pub fn hash(&self) -> String {
        let s = self.to_csv_string().unwrap_or_default();
        hex(&Sha256::digest(s.as_bytes()))
    }
}

/// Worst-case design distance: D2D range limit, or the cell edge for I2D.
pub fn design_distance(cfg: &SimConfig, kind: LinkKind) -> f64 {
    match kind {
        LinkKind::D2D => cfg.cdms.neighbor_range,
        LinkKind::I2D => cfg.cell_diameter() / 2.0,
    }
}

/// Large-scale parameters drawn from their marginals (with the SF/K correlation).
pub fn draw_link_lsp<R: Rng + ?Sized>(p: &LspParams, rng: &mut R) -> LinkLsp {
    let z_sf: f64 = rng.sample(StandardNormal);
    let z_k0: f64 = rng.sample(StandardNormal);
    let z_ds: f64 = rng.sample(StandardNormal);
    let rho = p.sf_k_corr;
    let z_k = rho * z_sf + (1.0 - rho * rho).max(0.0).sqrt() * z_k0;
    LinkLsp {
        shadow_db: p.shadow_sigma_db * z_sf,
        k_db: p.k_mean_db + p.k_sigma_db * z_k,
        delay_spread: 10f64.powf(p.ds_log10_mean + p.ds_log10_sigma * z_ds),
    }
}

/// One link type being calibrated, with everything precomputed.
struct Setup {
    model: ChannelModel,
    lsp: LspParams,
    gscm: GscmParams,
    grid: PhyGrid,
    e: f64,
    n_req: u64,
    payload: f64,
    pl_gain: f64,
    /// Interference-free SNR per subcarrier at 0 dB margin, divided by |H|^2.
    snr_per_gain: f64,
    counts: Vec<u64>,
    n_sub: usize,
}

impl Setup {
    fn new(cfg: &SimConfig, model: ChannelModel, scenario: Scenario, kind: LinkKind) -> Result<Self> {
        let mut cfg = cfg.clone();
        cfg.scenario.kind = scenario;
        cfg.scenario.cell_diameter = None;
        cfg.scenario.bs_antenna_height = None;
        let num = cfg.numerology();
        let grid = PhyGrid::from_numerology(&num);
        let e = match kind {
            LinkKind::I2D => cfg.radio.tx_spectral_efficiency,
            LinkKind::D2D => cfg.radio.d2d_rate_ladder.first().copied().unwrap_or(cfg.radio.tx_spectral_efficiency),
        };
        let n_req = num.prbs_needed(num.coded_bits, e);
        let pl = PathLossParams::from_config(&cfg, PathLossModel::M3, kind);
        let pl_gain = db_to_linear(-path_loss(&pl, design_distance(&cfg, kind))?);
        Ok(Setup {
            model,
            lsp: cfg.lsp(kind),
            gscm: GscmParams {
                n_paths: cfg.channel.n_paths,
                delay_scaling: cfg.channel.delay_scaling,
                path_shadow_db: cfg.channel.path_shadow_db,
            },
            grid,
            e,
            n_req,
            payload: num.payload_bits,
            pl_gain,
            // P g_nominal = sigma^2 (2^e - 1) at 0 dB, so SNR_s = (2^e - 1) H_s / g.
            snr_per_gain: (2f64.powf(e) - 1.0) / pl_gain,
            counts: grid.column_counts(0..n_req),
            n_sub: num.n_freq() * num.subcarriers_per_prb,
        })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Transfer {
        let lsp = draw_link_lsp(&self.lsp, rng);
        realize(self.model, self.pl_gain, Some(lsp), &self.gscm, self.n_sub, self.grid.w_c, rng).transfer
    }

    fn bits(&self, t: &Transfer, margin_lin: f64) -> f64 {
        let g = &self.grid;
        let k = margin_lin * self.snr_per_gain;
        let total = match t {
            Transfer::Flat(h) => self.n_req as f64 * g.n_c as f64 * self.e.min((1.0 + k * h).log2()),
            Transfer::Selective(v) => {
                let mut s = 0.0;
                for (col, &cnt) in self.counts.iter().enumerate() {
                    if cnt == 0 {
                        continue;
                    }
                    let cs: f64 = v[col * g.n_c..(col + 1) * g.n_c]
                        .iter()
                        .map(|h| self.e.min((1.0 + k * h).log2()))
                        .sum();
                    s += cnt as f64 * cs;
                }
                s
            }
        };
        g.tau * g.w_c * total
    }

    /// Smallest lattice index whose margin lets this draw pass; `max_idx + 1` if none.
    fn required_index(&self, t: &Transfer, step_db: f64, max_idx: usize) -> usize {
        let ok = |i: usize| meets_payload(self.bits(t, db_to_linear(i as f64 * step_db)), self.payload);
        if ok(0) {
            return 0;
        }
        if !ok(max_idx) {
            return max_idx + 1;
        }
        let (mut lo, mut hi) = (0usize, max_idx);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

/// Smallest lattice margin meeting the outage target for one (model, scenario, kind).
pub fn calibrate_link_margin(
    cfg: &SimConfig,
    model: ChannelModel,
    scenario: Scenario,
    kind: LinkKind,
    settings: &CalibrationSettings,
    seed: u64,
) -> Result<CalibrationEntry> {
    if !model.is_stochastic() {
        return Err(Error::UseM4Margin(model));
    }
    let setup = Setup::new(cfg, model, scenario, kind)?;
    let max_idx = (settings.max_margin_db / settings.lattice_step_db).round() as usize;
    let mut hist = vec![0usize; max_idx + 2];
    let mut rng = RngStreams::new(seed).substream(&format!("calibration/{model}/{scenario}/{kind}"), 0);
    for _ in 0..settings.draws {
        let t = setup.draw(&mut rng);
        hist[setup.required_index(&t, settings.lattice_step_db, max_idx)] += 1;
    }
    let n = settings.draws as f64;
    let p_out = cfg.radio.outage_target;
    let nv = settings.verify_draws.max(1) as f64;
    // failing[i] = draws needing more than lattice point i.
    let mut above = settings.draws;
    for (i, &h) in hist.iter().enumerate().take(max_idx + 1) {
        above -= h;
        let p = above as f64 / n;
        if p + settings.confidence_z * (p * (1.0 - p) / nv).sqrt() <= p_out {
            return Ok(CalibrationEntry {
                model,
                scenario,
                link_kind: kind,
                margin_db: i as f64 * settings.lattice_step_db,
                achieved_outage: p,
            });
        }
    }
    Err(Error::Logic(format!(
        "no margin up to {} dB meets outage {p_out} for {model}/{scenario}/{kind}",
        settings.max_margin_db
    )))
}

/// Interference-free outage at a fixed margin, over `draws` fresh draws.
pub fn outage_at_margin(
    cfg: &SimConfig,
    model: ChannelModel,
    scenario: Scenario,
    kind: LinkKind,
    margin_db: f64,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    let setup = Setup::new(cfg, model, scenario, kind)?;
    let mut rng = RngStreams::new(seed).substream(&format!("verify/{model}/{scenario}/{kind}"), 0);
    let m = db_to_linear(margin_db);
    let mut fails = 0usize;
    for _ in 0..draws {
        let t = setup.draw(&mut rng);
        if !meets_payload(setup.bits(&t, m), setup.payload) {
            fails += 1;
        }
    }
    Ok(fails as f64 / draws as f64)
}

/// All twelve stochastic (model, scenario, kind) combinations.
pub fn calibrate_all(cfg: &SimConfig, settings: &CalibrationSettings, seed: u64) -> Result<CalibrationTable> {
    use rayon::prelude::*;
    let combos: Vec<_> = ChannelModel::STOCHASTIC
        .iter()
        .flat_map(|&m| Scenario::ALL.iter().flat_map(move |&s| LinkKind::ALL.iter().map(move |&k| (m, s, k))))
        .collect();
    let entries = combos
        .par_iter()
        .map(|&(m, s, k)| calibrate_link_margin(cfg, m, s, k, settings, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(CalibrationTable { entries })
}
