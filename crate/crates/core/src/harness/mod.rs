//! Replication sweeps, benchmark pairing, confidence intervals and result files.

pub mod metrics;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::grid::hex;
use crate::engine::config::SimConfig;
use crate::engine::sim::run_replication;
use crate::error::Result;
use crate::phy::calibration::CalibrationTable;
use crate::types::{ChannelModel, Mode, Scenario};
use metrics::{t_interval, Estimate, MetricsRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub scenarios: Vec<Scenario>,
    pub models: Vec<ChannelModel>,
    /// (v_a, v_b) pairs, m/s.
    pub speed_ranges: Vec<(f64, f64)>,
    pub replications: u32,
    /// Replication `r` uses seed `base_seed + r` under every model, so models see the same traffic.
    pub base_seed: u64,
    pub confidence: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            scenarios: Scenario::ALL.to_vec(),
            models: ChannelModel::ALL.to_vec(),
            speed_ranges: vec![(6.0, 16.0), (9.0, 24.0), (12.0, 32.0)],
            replications: 5,
            base_seed: 1,
            confidence: 0.95,
        }
    }
}

/// Runs the offloading system and the I2D-only benchmark on the same seed and fills the savings.
pub fn run_paired(cfg: &SimConfig, seed: u64, calib: Option<&CalibrationTable>) -> Result<(MetricsRecord, MetricsRecord)> {
    let mut off = cfg.clone();
    off.sim.mode = Mode::Offloading;
    let mut bench = cfg.clone();
    bench.sim.mode = Mode::BenchmarkI2dOnly;
    let b = run_replication(&bench, seed, calib)?.metrics;
    let mut o = run_replication(&off, seed, calib)?.metrics;
    o.pair_with(&b);
    Ok((o, b))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub scenario: Scenario,
    pub model: ChannelModel,
    pub speed_min: f64,
    pub speed_max: f64,
    pub estimates: BTreeMap<String, Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    /// Offloading runs with savings filled.
    pub records: Vec<MetricsRecord>,
    pub benchmarks: Vec<MetricsRecord>,
    pub summary: Vec<CellSummary>,
}

/// Every (scenario, model, replication) of the spec, in parallel.
pub fn run_sweep(base: &SimConfig, spec: &SweepSpec, calib: Option<&CalibrationTable>) -> Result<SweepResult> {
    let mut jobs = Vec::new();
    for &s in &spec.scenarios {
        for &m in &spec.models {
            for &v in &spec.speed_ranges {
                for r in 0..spec.replications {
                    jobs.push((s, m, v, spec.base_seed + r as u64));
                }
            }
        }
    }
    let out: Vec<(MetricsRecord, MetricsRecord)> = jobs
        .par_iter()
        .map(|&(s, m, (va, vb), seed)| {
            let mut cfg = base.clone();
            cfg.scenario.kind = s;
            cfg.channel.model = m;
            cfg.traffic.speed_min = va;
            cfg.traffic.speed_max = vb;
            log::info!("scenario {s} model {m} speeds [{va}, {vb}] seed {seed}");
            run_paired(&cfg, seed, calib)
        })
        .collect::<Result<_>>()?;
    let (records, benchmarks): (Vec<_>, Vec<_>) = out.into_iter().unzip();
    let summary = summarize(&records, spec.confidence);
    Ok(SweepResult {
        spec: spec.clone(),
        records,
        benchmarks,
        summary,
    })
}

/// Groups by (scenario, model, speed range) and puts a t interval on every scalar metric.
pub fn summarize(records: &[MetricsRecord], confidence: f64) -> Vec<CellSummary> {
    // Speeds are positive, so their bit patterns sort like the values.
    type Key = (Scenario, ChannelModel, u64, u64);
    let mut cells: BTreeMap<Key, BTreeMap<&'static str, Vec<f64>>> = BTreeMap::new();
    for r in records {
        let cell = cells
            .entry((r.scenario, r.model, r.speed_min.to_bits(), r.speed_max.to_bits()))
            .or_default();
        for (name, v) in r.scalars() {
            cell.entry(name).or_default().push(v);
        }
    }
    cells
        .into_iter()
        .map(|((scenario, model, va, vb), m)| CellSummary {
            scenario,
            model,
            speed_min: f64::from_bits(va),
            speed_max: f64::from_bits(vb),
            estimates: m
                .into_iter()
                .map(|(k, xs)| (k.to_string(), t_interval(&xs, confidence)))
                .collect(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub crate_version: String,
    pub config_sha256: String,
    pub calibration_sha256: Option<String>,
    pub spec: SweepSpec,
    /// File name to SHA-256 of its contents.
    pub files: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    scenario: Scenario,
    model: ChannelModel,
    speed_min: f64,
    speed_max: f64,
    metric: &'a str,
    mean: f64,
    ci_lo: f64,
    ci_hi: f64,
    n: usize,
}

fn sha(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Writes results.csv, replications.csv, benchmarks.csv, config.toml and manifest.json into `dir`.
pub fn write_outputs(dir: &Path, cfg: &SimConfig, result: &SweepResult, calib: Option<&CalibrationTable>) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let mut files = BTreeMap::new();

    let mut w = csv::Writer::from_writer(Vec::new());
    for c in &result.summary {
        for (metric, e) in &c.estimates {
            w.serialize(SummaryRow {
                scenario: c.scenario,
                model: c.model,
                speed_min: c.speed_min,
                speed_max: c.speed_max,
                metric,
                mean: e.mean,
                ci_lo: e.lo(),
                ci_hi: e.hi(),
                n: e.n,
            })?;
        }
    }
    let summary = w.into_inner().map_err(|e| crate::error::Error::Io(e.into_error()))?;

    let records_csv = |rs: &[MetricsRecord]| -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rs {
            w.serialize(r)?;
        }
        w.into_inner().map_err(|e| crate::error::Error::Io(e.into_error()))
    };
    let config = cfg.to_toml_string();
    let outputs: Vec<(&str, Vec<u8>)> = vec![
        ("results.csv", summary),
        ("replications.csv", records_csv(&result.records)?),
        ("benchmarks.csv", records_csv(&result.benchmarks)?),
        ("config.toml", config.clone().into_bytes()),
    ];
    for (name, bytes) in outputs {
        std::fs::write(dir.join(name), &bytes)?;
        files.insert(name.to_string(), sha(&bytes));
    }
    let manifest = Manifest {
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: sha(config.as_bytes()),
        calibration_sha256: calib.map(|c| c.hash()),
        spec: result.spec.clone(),
        files,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Reads a per-replication CSV written by [`write_outputs`].
pub fn read_records(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<MetricsRecord>, _>>()?)
}

/// Invariant self-checks over a finished sweep. Empty means all good.
pub fn self_check(records: &[MetricsRecord], benchmarks: &[MetricsRecord]) -> Vec<String> {
    let mut bad = Vec::new();
    for r in records.iter().chain(benchmarks) {
        if !(0.0..=1.0).contains(&r.offloading_efficiency) {
            bad.push(format!(
                "{} {} seed {}: offloading efficiency {} outside [0, 1]",
                r.scenario, r.model, r.seed, r.offloading_efficiency
            ));
        }
    }
    for b in benchmarks {
        if b.delivered_d2d != 0 {
            bad.push(format!("{} {} seed {}: benchmark delivered over D2D", b.scenario, b.model, b.seed));
        }
    }
    let mean_energy = |rs: &[MetricsRecord]| -> BTreeMap<(Scenario, ChannelModel, u64, u64), (f64, usize)> {
        let mut m = BTreeMap::new();
        for r in rs {
            let e = m
                .entry((r.scenario, r.model, r.speed_min.to_bits(), r.speed_max.to_bits()))
                .or_insert((0.0, 0));
            e.0 += r.energy_per_content_mj;
            e.1 += 1;
        }
        m
    };
    let bench = mean_energy(benchmarks);
    for (k, (sum, n)) in mean_energy(records) {
        if let Some(&(bsum, bn)) = bench.get(&k) {
            let (ours, theirs) = (sum / n as f64, bsum / bn as f64);
            if ours > theirs {
                bad.push(format!(
                    "{} {} speeds [{}, {}]: energy per content {ours:.4} mJ above the benchmark's {theirs:.4} mJ",
                    k.0,
                    k.1,
                    f64::from_bits(k.2),
                    f64::from_bits(k.3)
                ));
            }
        }
    }
    bad
}
