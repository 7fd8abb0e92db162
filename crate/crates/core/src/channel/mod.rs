//! Channel models M1 to M6: path loss, correlated shadowing, Rician and multipath fading.

pub mod fading;
pub mod grid;
pub mod lsp;
pub mod pathloss;

use rand::Rng;

use crate::engine::config::SimConfig;
use crate::engine::rng::{keyed_rng, streams, RngStreams};
use crate::types::{BsId, ChannelModel, Endpoint, LinkKind, NodeId, PathLossModel, Position};
use fading::{gscm_paths, rician_power, subcarrier_grid, transfer_magnitudes, GscmParams, PathComponent};
use grid::{Grid, PathLossGrid};
use lsp::{generate_lsp_fields, LinkLsp, LspFields};
use pathloss::db_to_linear;

pub use fading::PathComponent as Path;

/// Squared transfer-function magnitudes, already including path loss and shadowing.
#[derive(Debug, Clone, PartialEq)]
pub enum Transfer {
    /// Same gain on every subcarrier.
    Flat(f64),
    /// One value per subcarrier across the band, frequency ascending
    /// (PRB column `c`, subcarrier `q` lives at `c * n_c + q`).
    Selective(Vec<f64>),
}

impl Transfer {
    pub fn at(&self, subcarrier: usize) -> f64 {
        match self {
            Transfer::Flat(g) => *g,
            Transfer::Selective(v) => v[subcarrier],
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, Transfer::Flat(_))
    }

    pub fn mean(&self) -> f64 {
        match self {
            Transfer::Flat(g) => *g,
            Transfer::Selective(v) => v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// Deterministic gain of the active model's path-loss law.
    pub nominal_gain: f64,
    pub transfer: Transfer,
    /// Multipath components behind the transfer function (M6 only).
    pub paths: Vec<PathComponent>,
}

/// Transmitter location as the channel sees it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TxSite {
    Bs(BsId),
    Device(Position),
}

impl TxSite {
    pub fn kind(&self) -> LinkKind {
        match self {
            TxSite::Bs(_) => LinkKind::I2D,
            TxSite::Device(_) => LinkKind::D2D,
        }
    }
}

/// Draws one realization given the deterministic gain and (for M4 to M6) the link's
/// large-scale parameters. `pl_gain` must be the M3 gain for the stochastic models.
pub fn realize<R: Rng + ?Sized>(
    model: ChannelModel,
    pl_gain: f64,
    lsp: Option<LinkLsp>,
    gscm: &GscmParams,
    n_subcarriers: usize,
    spacing: f64,
    rng: &mut R,
) -> ChannelRealization {
    let composite = match (model, lsp) {
        (ChannelModel::M1 | ChannelModel::M2 | ChannelModel::M3, _) | (_, None) => pl_gain,
        (_, Some(l)) => pl_gain * db_to_linear(l.shadow_db),
    };
    let (transfer, paths) = match (model, lsp) {
        (ChannelModel::M5, Some(l)) => (Transfer::Flat(composite * rician_power(l.k_linear(), rng)), Vec::new()),
        (ChannelModel::M6, Some(l)) => {
            let paths = gscm_paths(l.k_linear(), l.delay_spread, gscm, rng);
            let (f0, df) = subcarrier_grid(n_subcarriers, spacing);
            let mut h = transfer_magnitudes(&paths, f0, df, n_subcarriers);
            for x in &mut h {
                *x *= composite;
            }
            (Transfer::Selective(h), paths)
        }
        _ => (Transfer::Flat(composite), Vec::new()),
    };
    ChannelRealization {
        nominal_gain: pl_gain,
        transfer,
        paths,
    }
}

/// Everything one replication needs to evaluate links: path-loss tables,
/// large-scale fields and the fading key.
#[derive(Debug, Clone)]
pub struct ChannelEnv {
    pub model: ChannelModel,
    /// M3 tables, used for nominal gains and as the base of M4 to M6.
    pub nominal: PathLossGrid,
    /// Tables of the active deterministic law when it is not M3.
    active: Option<PathLossGrid>,
    pub lsp: Option<LspFields>,
    pub gscm: GscmParams,
    pub n_subcarriers: usize,
    pub spacing: f64,
    fading_key: u64,
}

impl ChannelEnv {
    pub fn new(cfg: &SimConfig, rng: &RngStreams) -> Self {
        Self::with_grid(cfg, rng, PathLossGrid::build(cfg, PathLossModel::M3))
    }

    /// Reuses a prebuilt M3 grid (e.g. loaded from disk).
    pub fn with_grid(cfg: &SimConfig, rng: &RngStreams, nominal: PathLossGrid) -> Self {
        let model = cfg.channel.model;
        let active = match model.path_loss_model() {
            PathLossModel::M3 => None,
            m => Some(PathLossGrid::build(cfg, m)),
        };
        let lsp = model.is_stochastic().then(|| {
            let grid = Grid::for_config(cfg);
            let mut r = rng.stream(streams::SHADOWING);
            generate_lsp_fields(
                grid,
                &cfg.lsp(LinkKind::D2D),
                &cfg.lsp(LinkKind::I2D),
                nominal.sites.len(),
                &mut r,
            )
        });
        let num = cfg.numerology();
        ChannelEnv {
            model,
            nominal,
            active,
            lsp,
            gscm: GscmParams {
                n_paths: cfg.channel.n_paths,
                delay_scaling: cfg.channel.delay_scaling,
                path_shadow_db: cfg.channel.path_shadow_db,
            },
            n_subcarriers: num.n_freq() * num.subcarriers_per_prb,
            spacing: num.subcarrier_spacing,
            fading_key: rng.key(streams::FADING),
        }
    }

    pub fn sites(&self) -> &[Position] {
        &self.nominal.sites
    }

    /// Gain the CDMS ranks neighbours by: always the M3 law, whatever the active model.
    pub fn nominal_gain(&self, tx: TxSite, rx: Position) -> f64 {
        match tx {
            TxSite::Bs(b) => self.nominal.i2d_gain(b, rx),
            TxSite::Device(p) => self.nominal.d2d_gain(p, rx),
        }
    }

    /// Deterministic gain of the active model's own path-loss law (M3 for M4 to M6).
    pub fn model_gain(&self, tx: TxSite, rx: Position) -> f64 {
        let g = self.active.as_ref().unwrap_or(&self.nominal);
        match tx {
            TxSite::Bs(b) => g.i2d_gain(b, rx),
            TxSite::Device(p) => g.d2d_gain(p, rx),
        }
    }

    pub fn link_lsp(&self, tx: TxSite, rx: Position) -> Option<LinkLsp> {
        let f = self.lsp.as_ref()?;
        Some(match tx {
            TxSite::Bs(b) => f.i2d[b as usize].at_point(rx),
            TxSite::Device(p) => f.d2d.between(p, rx),
        })
    }

    /// Block-fading realization for (transmitter, receiver) in control interval `ci`.
    /// The draw depends only on the identities and the interval, never on call order.
    pub fn sample_channel(
        &self,
        tx: TxSite,
        tx_id: Endpoint,
        rx: Position,
        rx_id: NodeId,
        ci: u64,
    ) -> ChannelRealization {
        let code = match tx_id {
            Endpoint::Bs(b) => (1u64 << 63) | b as u64,
            Endpoint::Node(n) => n as u64,
        };
        let mut rng = keyed_rng(self.fading_key, &[ci, code, rx_id as u64]);
        realize(
            self.model,
            self.model_gain(tx, rx),
            self.link_lsp(tx, rx),
            &self.gscm,
            self.n_subcarriers,
            self.spacing,
            &mut rng,
        )
    }
}
