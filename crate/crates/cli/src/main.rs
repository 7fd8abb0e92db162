use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use offload_sim::harness::{read_records, run_paired, run_sweep, self_check, summarize, write_outputs, CellSummary, SweepSpec};
use offload_sim::phy::calibration::calibrate_all;
use offload_sim::traffic::{max_i2d_load_density, offered_load_density};
use offload_sim::{CalibrationSettings, CalibrationTable, ChannelModel, Mode, Scenario, SimConfig};

#[derive(Parser)]
#[command(name = "offload-sim", version, about = "D2D content offloading simulator for a vehicular street")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    Full,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// TOML file; sections left out keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset used when no file is given.
    #[arg(long, value_enum, default_value = "desk")]
    preset: Preset,
    /// Calibration table (CSV) for margins not fixed in the config.
    #[arg(long)]
    calibration: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self, scenario: Option<Scenario>) -> Result<SimConfig> {
        let mut cfg = match &self.config {
            Some(p) => SimConfig::from_file(p).with_context(|| format!("reading {}", p.display()))?,
            None => match self.preset {
                Preset::Desk => SimConfig::desk(scenario.unwrap_or(Scenario::A)),
                Preset::Full => SimConfig::full(scenario.unwrap_or(Scenario::A)),
            },
        };
        if let Some(s) = scenario {
            cfg.scenario.kind = s;
        }
        Ok(cfg)
    }

    fn calibration(&self) -> Result<Option<CalibrationTable>> {
        self.calibration
            .as_ref()
            .map(|p| CalibrationTable::load(p).with_context(|| format!("reading {}", p.display())))
            .transpose()
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Print a preset configuration as TOML.
    Config {
        #[arg(long, value_enum, default_value = "desk")]
        preset: Preset,
        #[arg(long, default_value = "A")]
        scenario: Scenario,
    },
    /// Compute link margins for the stochastic models and write them as CSV.
    Calibrate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 50_000)]
        draws: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "calibration.csv")]
        out: PathBuf,
    },
    /// One replication, paired with its benchmark; prints metrics as JSON.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        scenario: Option<Scenario>,
        #[arg(long)]
        model: Option<ChannelModel>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Replications over scenarios and models, with confidence intervals and a manifest.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "A,B")]
        scenarios: Vec<Scenario>,
        #[arg(long, value_delimiter = ',', default_value = "M1,M2,M3,M4,M5,M6")]
        models: Vec<ChannelModel>,
        #[arg(long, default_value_t = 5)]
        replications: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Summarize a sweep directory and re-run the invariant self-checks. Exits nonzero on failure.
    Report {
        #[arg(long, default_value = "results")]
        dir: PathBuf,
    },
    /// Offered load against cellular capacity, kbps/m.
    Load {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        scenario: Option<Scenario>,
    },
}

fn print_summary(cells: &[CellSummary]) {
    for cell in cells {
        let get = |k: &str| cell.estimates.get(k).map(|e| (e.mean, e.half_width)).unwrap_or((f64::NAN, f64::NAN));
        let (oe, oh) = get("offloading_efficiency");
        let (es, eh) = get("energy_saving_pct");
        let (ss, sh) = get("spectrum_saving_pct");
        println!(
            "{} {} [{}, {}] m/s: offloading {:.3}±{:.3}  energy saving {:.1}±{:.1}%  spectrum saving {:.1}±{:.1}%",
            cell.scenario, cell.model, cell.speed_min, cell.speed_max, oe, oh, es, eh, ss, sh
        );
    }
}

fn check(records: &[offload_sim::MetricsRecord], benchmarks: &[offload_sim::MetricsRecord]) -> Result<()> {
    let bad = self_check(records, benchmarks);
    for b in &bad {
        eprintln!("self-check failed: {b}");
    }
    anyhow::ensure!(bad.is_empty(), "{} invariant self-check(s) failed", bad.len());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().cmd {
        Cmd::Config { preset, scenario } => {
            let cfg = match preset {
                Preset::Desk => SimConfig::desk(scenario),
                Preset::Full => SimConfig::full(scenario),
            };
            print!("{}", cfg.to_toml_string());
        }
        Cmd::Calibrate { cfg, draws, seed, out } => {
            let c = cfg.load(None)?;
            let settings = CalibrationSettings {
                draws,
                ..CalibrationSettings::default()
            };
            let table = calibrate_all(&c, &settings, seed)?;
            table.save(&out)?;
            print!("{}", table.to_csv_string()?);
            log::info!("wrote {}", out.display());
        }
        Cmd::Run {
            cfg,
            scenario,
            model,
            seed,
        } => {
            let mut c = cfg.load(scenario)?;
            if let Some(m) = model {
                c.channel.model = m;
            }
            let calib = cfg.calibration()?;
            let seed = seed.unwrap_or(c.sim.seed);
            c.sim.mode = Mode::Offloading;
            let (off, bench) = run_paired(&c, seed, calib.as_ref())?;
            let out = serde_json::json!({ "offloading": off, "benchmark": bench });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Cmd::Sweep {
            cfg,
            scenarios,
            models,
            replications,
            seed,
            out,
        } => {
            let c = cfg.load(None)?;
            let calib = cfg.calibration()?;
            let spec = SweepSpec {
                scenarios,
                models,
                replications,
                base_seed: seed,
                ..SweepSpec::default()
            };
            let res = run_sweep(&c, &spec, calib.as_ref())?;
            let manifest = write_outputs(&out, &c, &res, calib.as_ref())?;
            print_summary(&res.summary);
            println!("wrote {} files to {}", manifest.files.len() + 1, out.display());
            check(&res.records, &res.benchmarks)?;
        }
        Cmd::Report { dir } => {
            let records = read_records(&dir.join("replications.csv"))?;
            let benchmarks = read_records(&dir.join("benchmarks.csv"))?;
            print_summary(&summarize(&records, 0.95));
            check(&records, &benchmarks)?;
        }
        Cmd::Load { cfg, scenario } => {
            let c = cfg.load(scenario)?;
            let l = offered_load_density(&c);
            let cap = max_i2d_load_density(c.radio.system_bandwidth, c.radio.tx_spectral_efficiency, c.cell_diameter());
            println!(
                "offered {:.2} kbps/m ({:.2} without repeats removed), capacity {:.2} kbps/m",
                l.with_gamma, l.without_gamma, cap
            );
        }
    }
    Ok(())
}
