//! The 5 m street lattice and precomputed path-loss tables over it.

use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::pathloss::{db_to_linear, path_loss_clamped, PathLossParams};
use crate::engine::config::SimConfig;
use crate::error::{Error, Result};
use crate::types::{BsId, LinkKind, PathLossModel, Position};

/// Regular lattice covering [0, length] x [0, width].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    pub step: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn new(length: f64, width: f64, step: f64) -> Self {
        Grid {
            step,
            nx: (length / step).round() as usize + 1,
            ny: (width / step).round() as usize + 1,
        }
    }

    pub fn for_config(cfg: &SimConfig) -> Self {
        Self::new(cfg.roi.length, cfg.roi.width, cfg.channel.grid_step)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Nearest lattice point, clamped into the lattice.
    pub fn snap(&self, p: Position) -> (usize, usize) {
        let i = (p.x / self.step).round().clamp(0.0, (self.nx - 1) as f64) as usize;
        let j = (p.y / self.step).round().clamp(0.0, (self.ny - 1) as f64) as usize;
        (i, j)
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    pub fn point(&self, i: usize, j: usize) -> Position {
        Position::new(i as f64 * self.step, j as f64 * self.step)
    }
}

/// Base-station sites along the curb (y = 0), one per cell.
pub fn bs_sites(roi_length: f64, cell_diameter: f64) -> Vec<Position> {
    let n = (roi_length / cell_diameter).ceil().max(1.0) as usize;
    (0..n)
        .map(|m| Position::new(cell_diameter / 2.0 + m as f64 * cell_diameter, 0.0))
        .collect()
}

/// Index of the nearest site, lower index on ties.
pub fn nearest_bs(sites: &[Position], p: Position) -> BsId {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (b, s) in sites.iter().enumerate() {
        let d = s.distance(&p);
        if d < best_d {
            best_d = d;
            best = b;
        }
    }
    best as BsId
}

/// Path loss (dB) between lattice points and from every site to every lattice point.
#[derive(Debug, Clone, PartialEq)]
pub struct PathLossGrid {
    pub grid: Grid,
    pub model: PathLossModel,
    pub sites: Vec<Position>,
    /// Indexed by lattice offset (|di|, |dj|); the D2D law depends on separation only.
    d2d_db: Vec<f64>,
    /// `sites.len()` blocks of `grid.len()` entries.
    i2d_db: Vec<f64>,
    key: String,
}

impl PathLossGrid {
    pub fn build(cfg: &SimConfig, model: PathLossModel) -> Self {
        let grid = Grid::for_config(cfg);
        let sites = bs_sites(cfg.roi.length, cfg.cell_diameter());
        let d2d = PathLossParams::from_config(cfg, model, LinkKind::D2D);
        let i2d = PathLossParams::from_config(cfg, model, LinkKind::I2D);
        Self::build_with(grid, sites, &d2d, &i2d)
    }

    pub fn build_with(grid: Grid, sites: Vec<Position>, d2d: &PathLossParams, i2d: &PathLossParams) -> Self {
        let mut d2d_db = Vec::with_capacity(grid.len());
        for di in 0..grid.nx {
            for dj in 0..grid.ny {
                let d = grid.step * (di as f64).hypot(dj as f64);
                d2d_db.push(path_loss_clamped(d2d, d));
            }
        }
        let mut i2d_db = Vec::with_capacity(grid.len() * sites.len());
        for s in &sites {
            for i in 0..grid.nx {
                for j in 0..grid.ny {
                    i2d_db.push(path_loss_clamped(i2d, s.distance(&grid.point(i, j))));
                }
            }
        }
        let key = grid_key(&grid, &sites, d2d, i2d);
        PathLossGrid {
            grid,
            model: d2d.model,
            sites,
            d2d_db,
            i2d_db,
            key,
        }
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn d2d_db(&self, p: Position, q: Position) -> f64 {
        let (pi, pj) = self.grid.snap(p);
        let (qi, qj) = self.grid.snap(q);
        self.d2d_db_idx(pi.abs_diff(qi), pj.abs_diff(qj))
    }

    pub fn d2d_db_idx(&self, di: usize, dj: usize) -> f64 {
        self.d2d_db[self.grid.index(di, dj)]
    }

    pub fn i2d_db(&self, bs: BsId, p: Position) -> f64 {
        let (i, j) = self.grid.snap(p);
        self.i2d_db[bs as usize * self.grid.len() + self.grid.index(i, j)]
    }

    pub fn d2d_gain(&self, p: Position, q: Position) -> f64 {
        db_to_linear(-self.d2d_db(p, q))
    }

    pub fn i2d_gain(&self, bs: BsId, p: Position) -> f64 {
        db_to_linear(-self.i2d_db(bs, p))
    }

    /// Writes the tables in a small little-endian binary format tagged with the key.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(b"OSPLGRID")?;
        f.write_all(&(self.key.len() as u32).to_le_bytes())?;
        f.write_all(self.key.as_bytes())?;
        for n in [self.grid.nx, self.grid.ny, self.sites.len()] {
            f.write_all(&(n as u64).to_le_bytes())?;
        }
        f.write_all(&self.grid.step.to_le_bytes())?;
        f.write_all(&[self.model as u8])?;
        for s in &self.sites {
            f.write_all(&s.x.to_le_bytes())?;
            f.write_all(&s.y.to_le_bytes())?;
        }
        for v in self.d2d_db.iter().chain(&self.i2d_db) {
            f.write_all(&v.to_le_bytes())?;
        }
        f.flush()?;
        Ok(())
    }

    /// Loads a dump, refusing it unless its key equals `expected_key`.
    pub fn load(path: &Path, expected_key: &str) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        let mut r = Reader { buf: &buf, pos: 0 };
        if r.take(8)? != b"OSPLGRID" {
            return Err(Error::Parse("not a path-loss grid dump".into()));
        }
        let klen = r.u32()? as usize;
        let key = String::from_utf8(r.take(klen)?.to_vec()).map_err(|e| Error::Parse(e.to_string()))?;
        if key != expected_key {
            return Err(Error::Parse(format!("grid dump key {key} does not match {expected_key}")));
        }
        let nx = r.u64()? as usize;
        let ny = r.u64()? as usize;
        let nb = r.u64()? as usize;
        let step = r.f64()?;
        let model = match r.take(1)?[0] {
            0 => PathLossModel::M1,
            1 => PathLossModel::M2,
            2 => PathLossModel::M3,
            m => return Err(Error::Parse(format!("bad model tag {m}"))),
        };
        let grid = Grid { step, nx, ny };
        let mut sites = Vec::with_capacity(nb);
        for _ in 0..nb {
            let x = r.f64()?;
            let y = r.f64()?;
            sites.push(Position::new(x, y));
        }
        let d2d_db = (0..grid.len()).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let i2d_db = (0..grid.len() * nb).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        Ok(PathLossGrid {
            grid,
            model,
            sites,
            d2d_db,
            i2d_db,
            key,
        })
    }
}

/// Hash of everything the tables depend on.
pub fn grid_key(grid: &Grid, sites: &[Position], d2d: &PathLossParams, i2d: &PathLossParams) -> String {
    let blob = serde_json::to_vec(&(grid, sites, d2d, i2d)).expect("serializable");
    hex(&Sha256::digest(&blob))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Parse("truncated grid dump".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
