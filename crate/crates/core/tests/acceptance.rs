//! Acceptance runner. Every criterion is evaluated at full strength and reported as one
//! PASS/FAIL line, followed by its individual checks. The process fails if any check fails
//! that is not listed in `KNOWN_FAILURES`; those are analysed in the README.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use offload_sim::channel::fading::{rician_power, GscmParams};
use offload_sim::channel::grid::Grid;
use offload_sim::channel::lsp::{GaussianField, LinkLsp};
use offload_sim::channel::pathloss::{path_loss, PathLossParams};
use offload_sim::channel::{realize, Transfer};
use offload_sim::harness::run_paired;
use offload_sim::phy::calibration::{calibrate_all, outage_at_margin};
use offload_sim::phy::{
    information_bits, linear_to_db, transmission_success, tx_power_per_subcarrier, tx_power_per_subcarrier_dbm,
    Interferer, PhyGrid,
};
use offload_sim::scheduler::{schedule_ci, CandidateLink, CandidatePacket, GainMatrix, SchedulerParams};
use offload_sim::traffic::offered_load_density;
use offload_sim::{
    run_replication, CalibrationSettings, CalibrationTable, ChannelModel, LinkKind, MetricsRecord, PathLossModel,
    Scenario, SimConfig,
};

/// Checks expected to fail, with the reason. See the README for the analysis.
const KNOWN_FAILURES: &[(&str, &str)] = &[
    (
        "4b",
        "at 1 km the requests cancelled on exit during the content timeout give every model about 20 points of spectrum saving",
    ),
    (
        "5c",
        "popularity is tuned for the offloading target; a 0.59 non-repeat share needs a far more concentrated catalog",
    ),
    (
        "6b",
        "the rate constraint lets nominal interference consume the whole margin, so realized outage sits at 1-1.6% for every fading model",
    ),
];

// Tolerances.
const OFFLOAD_RANGE: (f64, f64) = (0.30, 0.50);
const RUNTIME_BUDGET_S: f64 = 300.0;
const ENERGY_RANGE: (f64, f64) = (20.0, 45.0);
const SPECTRUM_SPREAD_PTS: f64 = 6.0;
const SPECTRUM_FACTOR: f64 = 2.0;
const LOAD_TARGETS: [(f64, f64, f64); 3] = [(6.0, 16.0, 14.1), (9.0, 24.0, 9.4), (12.0, 32.0, 7.1)];
const LOAD_REL_TOL: f64 = 0.02;
const RATIO_TOL: f64 = 1e-9;
const GAMMA_NR: (f64, f64) = (0.59, 0.05);
const OUTAGE_TARGET: f64 = 0.005;
const VERIFY_DRAWS: usize = 10_000;
const REALIZED_FAILURE_MAX: f64 = 0.01;
const SCHED_INSTANCES: usize = 1000;
const SCHED_MAX_LINKS: usize = 8;
const POWER_TOL: f64 = 1e-9;
const FLAT_TOL: f64 = 1e-12;
const PHY_CASES: usize = 1000;
const UNIT_MEAN_DRAWS: usize = 100_000;
const UNIT_MEAN_TOL: f64 = 0.01;
const KS_SAMPLES: usize = 2000;
const KS_C_ALPHA_5PCT: f64 = 1.358;
const AUTOCORR_TOL: f64 = 0.15;
const CROSSOVER_WINDOW: (f64, f64) = (40.0, 90.0);

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Check {
    id: String,
    pass: bool,
    detail: String,
}

struct Report {
    criterion: u32,
    title: &'static str,
    checks: Vec<Check>,
}

impl Report {
    fn new(criterion: u32, title: &'static str) -> Self {
        Report {
            criterion,
            title,
            checks: Vec::new(),
        }
    }
    fn check(&mut self, sub: &str, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            id: format!("{}{}", self.criterion, sub),
            pass,
            detail: detail.into(),
        });
    }
}

fn desk(scenario: Scenario, model: ChannelModel) -> SimConfig {
    let mut c = SimConfig::desk(scenario);
    c.channel.model = model;
    c
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn paired(scenario: Scenario, model: ChannelModel, calib: &CalibrationTable) -> Vec<MetricsRecord> {
    SEEDS
        .iter()
        .map(|&s| run_paired(&desk(scenario, model), s, Some(calib)).expect("paired run").0)
        .collect()
}

fn criterion_1(calib: &CalibrationTable) -> Report {
    let mut r = Report::new(1, "offloading efficiency near 40% (A, M6, desk)");
    let cfg = desk(Scenario::A, ChannelModel::M6);
    let mut eff = Vec::new();
    let mut slowest: f64 = 0.0;
    for &s in &SEEDS {
        let t0 = Instant::now();
        let o = run_replication(&cfg, s, Some(calib)).expect("replication");
        slowest = slowest.max(t0.elapsed().as_secs_f64());
        eff.push(o.metrics.offloading_efficiency);
    }
    let m = mean(&eff);
    r.check(
        "a",
        (OFFLOAD_RANGE.0..=OFFLOAD_RANGE.1).contains(&m),
        format!("mean over {} seeds {:.3}, per seed {:?}", SEEDS.len(), m, round3(&eff)),
    );
    r.check("b", slowest <= RUNTIME_BUDGET_S, format!("slowest replication {slowest:.2} s"));
    r
}

fn criterion_2(calib: &CalibrationTable) -> Report {
    let mut r = Report::new(2, "D2D-served set identical across M1-M6 (seed 1)");
    let sets: Vec<(ChannelModel, BTreeSet<u64>)> = ChannelModel::ALL
        .iter()
        .map(|&m| (m, run_replication(&desk(Scenario::A, m), 1, Some(calib)).expect("replication").d2d_served))
        .collect();
    let reference = &sets[0].1;
    let diff: Vec<String> = sets
        .iter()
        .filter(|(_, s)| s != reference)
        .map(|(m, s)| format!("{m}: {} vs {}", s.len(), reference.len()))
        .collect();
    r.check(
        "a",
        diff.is_empty() && !reference.is_empty(),
        if diff.is_empty() {
            format!("{} requests served over D2D under every model", reference.len())
        } else {
            format!("differs: {}", diff.join(", "))
        },
    );
    r
}

fn criterion_3_4(calib: &CalibrationTable) -> (Report, Report) {
    let mut r3 = Report::new(3, "energy saving in [20%, 45%] under M3-M6, positive under all");
    let mut r4 = Report::new(4, "spectrum saving: M3-M6 within 6 points, M1 at most half of M6");
    for sc in Scenario::ALL {
        let runs: Vec<(ChannelModel, Vec<MetricsRecord>)> =
            ChannelModel::ALL.iter().map(|&m| (m, paired(sc, m, calib))).collect();
        let energy = |recs: &[MetricsRecord]| mean(&recs.iter().map(|x| x.energy_saving_pct.unwrap()).collect::<Vec<_>>());
        let spectrum =
            |recs: &[MetricsRecord]| mean(&recs.iter().map(|x| x.spectrum_saving_pct.unwrap()).collect::<Vec<_>>());

        let mut in_range = Vec::new();
        for (m, recs) in runs.iter().filter(|(m, _)| m.is_stochastic() || *m == ChannelModel::M3) {
            in_range.push((*m, energy(recs)));
        }
        r3.check(
            &format!("a-{sc}"),
            in_range.iter().all(|(_, e)| (ENERGY_RANGE.0..=ENERGY_RANGE.1).contains(e)),
            format!("scenario {sc} mean saving {}", fmt_pairs(&in_range)),
        );
        let worst = runs
            .iter()
            .flat_map(|(m, recs)| recs.iter().map(move |x| (*m, x.seed, x.energy_saving_pct.unwrap())))
            .min_by(|a, b| a.2.total_cmp(&b.2))
            .unwrap();
        r3.check(
            &format!("b-{sc}"),
            worst.2 > 0.0,
            format!("scenario {sc} smallest per-replication saving {:.1}% ({} seed {})", worst.2, worst.0, worst.1),
        );

        if sc == Scenario::A {
            let sp: Vec<(ChannelModel, f64)> = runs.iter().map(|(m, recs)| (*m, spectrum(recs))).collect();
            let upper: Vec<f64> = sp.iter().filter(|(m, _)| *m >= ChannelModel::M3).map(|x| x.1).collect();
            let spread = upper.iter().cloned().fold(f64::MIN, f64::max) - upper.iter().cloned().fold(f64::MAX, f64::min);
            r4.check("a", spread <= SPECTRUM_SPREAD_PTS, format!("M3-M6 spread {spread:.2} points ({})", fmt_pairs(&sp)));
            let m1 = sp[0].1;
            let m6 = sp[5].1;
            r4.check(
                "b",
                m1 < m6 && SPECTRUM_FACTOR * m1 <= m6,
                format!("M1 {m1:.1}% vs M6 {m6:.1}%, factor {:.2} (need >= {SPECTRUM_FACTOR})", m6 / m1),
            );
        }
    }
    (r3, r4)
}

fn criterion_5() -> Report {
    let mut r = Report::new(5, "load formula and measured non-repeat share");
    let mut dens = Vec::new();
    let mut ok = true;
    for (va, vb, want) in LOAD_TARGETS {
        let mut c = SimConfig::desk(Scenario::A);
        c.traffic.speed_min = va;
        c.traffic.speed_max = vb;
        let got = offered_load_density(&c).without_gamma;
        ok &= ((got - want) / want).abs() <= LOAD_REL_TOL;
        dens.push(got);
    }
    r.check("a", ok, format!("{:.2}/{:.2}/{:.2} kbps/m", dens[0], dens[1], dens[2]));
    let (r1, r2) = (dens[0] / dens[1], dens[0] / dens[2]);
    r.check(
        "b",
        (r1 - 1.5).abs() <= RATIO_TOL && (r2 - 2.0).abs() <= RATIO_TOL,
        format!("ratios {r1:.12} and {r2:.12}"),
    );
    let mut reqs = 0u64;
    let mut reps = 0u64;
    for &s in &SEEDS {
        let mut c = desk(Scenario::A, ChannelModel::M3);
        c.radio.link_margin_i2d = Some(0.0);
        c.radio.link_margin_d2d = Some(0.0);
        let m = run_replication(&c, s, None).expect("replication").metrics;
        reqs += m.requests;
        reps += m.repeats;
    }
    let g = 1.0 - reps as f64 / reqs as f64;
    r.check(
        "c",
        (g - GAMMA_NR.0).abs() <= GAMMA_NR.1,
        format!("measured {g:.3} over {reqs} requests (target {} +- {})", GAMMA_NR.0, GAMMA_NR.1),
    );
    r
}

fn criterion_6(calib: &CalibrationTable) -> Report {
    let mut r = Report::new(6, "calibrated margins meet the outage target");
    let cfg = SimConfig::desk(Scenario::A);
    let mut worst = (0.0, String::new());
    let mut ok = true;
    for e in &calib.entries {
        let p = outage_at_margin(&cfg, e.model, e.scenario, e.link_kind, e.margin_db, VERIFY_DRAWS, 0x5eed_0f7e57)
            .expect("verification");
        ok &= p <= OUTAGE_TARGET;
        if p >= worst.0 {
            worst = (p, format!("{}/{}/{} at {} dB", e.model, e.scenario, e.link_kind, e.margin_db));
        }
    }
    r.check(
        "a",
        ok && calib.entries.len() == 12,
        format!("{} entries, worst verification outage {:.4} ({})", calib.entries.len(), worst.0, worst.1),
    );
    let mut rows = Vec::new();
    let mut all = true;
    for m in ChannelModel::STOCHASTIC {
        for sc in Scenario::ALL {
            let (mut f, mut a) = (0u64, 0u64);
            for &s in &SEEDS {
                let x = run_replication(&desk(sc, m), s, Some(calib)).expect("replication").metrics;
                f += x.d2d_failures + x.i2d_failures;
                a += x.d2d_attempts + x.i2d_attempts;
            }
            let rate = f as f64 / a as f64;
            all &= rate < REALIZED_FAILURE_MAX;
            rows.push(format!("{m}/{sc} {:.2}%", 100.0 * rate));
        }
    }
    r.check("b", all, format!("realized failure rate {}", rows.join(", ")));
    r
}

// ---------------------------------------------------------------------------------------
// Scheduler: an independent re-check of the rate and sharing conditions.

struct Inst {
    links: Vec<CandidateLink>,
    gains: GainMatrix,
    params: SchedulerParams,
}

fn random_instance(rng: &mut ChaCha8Rng, base: &SchedulerParams) -> Inst {
    let n = rng.random_range(1..=SCHED_MAX_LINKS);
    let mut pos = Vec::new();
    let mut links = Vec::new();
    let mut id = 0;
    for _ in 0..n {
        let d2d = rng.random_bool(0.5);
        let bs = rng.random_range(0..3u32);
        let rx = rng.random_range(0.0..1000.0f64);
        let tx = if d2d {
            rx + rng.random_range(-100.0..100.0)
        } else {
            185.0 + 370.0 * bs as f64
        };
        pos.push((tx, rx));
        let np = rng.random_range(1..=3);
        let packets = (0..np)
            .map(|_| {
                id += 1;
                CandidatePacket {
                    id,
                    coded_bits: 4_320_000.0 * rng.random_range(0.05..1.0),
                }
            })
            .collect();
        links.push(CandidateLink {
            kind: if d2d { LinkKind::D2D } else { LinkKind::I2D },
            bs: (!d2d).then_some(bs),
            packets,
        });
    }
    let gains = GainMatrix::from_fn(n, |j, i| {
        let d = (pos[j].0 - pos[i].1).abs().max(1.0);
        1e-4 * d.powf(-3.0)
    });
    let mut params = base.clone();
    params.margin_i2d_db = rng.random_range(0.0..12.0);
    params.margin_d2d_db = rng.random_range(0.0..12.0);
    // At least one full packet at the lowest rung, as config validation guarantees.
    params.n_prb = rng.random_range(24_000..100_000);
    params.d2d_ladder = if rng.random_bool(0.5) { vec![4.0] } else { vec![2.0, 3.0, 4.0] };
    Inst { links, gains, params }
}

/// Conditions re-derived from their defining formulas, sharing nothing with the scheduler.
fn set_is_feasible(inst: &Inst, set: &[usize], powers: &[f64], targets: &[f64]) -> Result<(), String> {
    let p = &inst.params;
    let g = |j: usize, i: usize| inst.gains.get(j, i);
    let is_d = |i: usize| inst.links[i].kind == LinkKind::D2D;
    let s_d: Vec<usize> = set.iter().copied().filter(|&i| is_d(i)).collect();
    let s_c: Vec<usize> = set.iter().copied().filter(|&i| !is_d(i)).collect();
    let rx = |i: usize| powers[i] * g(i, i);
    let tol = |i: usize| 1e-9 * rx(i);
    for &i in set {
        let mut den = p.sigma2;
        if is_d(i) {
            for &j in &s_d {
                if j != i {
                    den += powers[j] * g(j, i);
                }
            }
            let mut sites: Vec<u32> = s_c.iter().map(|&j| inst.links[j].bs.unwrap()).collect();
            sites.sort_unstable();
            sites.dedup();
            for b in sites {
                den += s_c
                    .iter()
                    .filter(|&&j| inst.links[j].bs == Some(b))
                    .map(|&j| powers[j] * g(j, i))
                    .fold(0.0, f64::max);
            }
        } else {
            den += s_d.iter().map(|&j| powers[j] * g(j, i)).sum::<f64>();
        }
        let e = (1.0 + rx(i) / den).log2();
        if set.len() > 1 && e < targets[i] * (1.0 - 1e-9) {
            return Err(format!("rate bound {e} below target {} for link {i}", targets[i]));
        }
    }
    let nd = s_d.len() as f64;
    let n = set.len() as f64;
    if !s_d.is_empty() {
        let xi = s_d.iter().map(|&i| rx(i) / p.w_n0).fold(0.0, f64::max);
        for &i in &s_d {
            let lhs: f64 = s_d.iter().filter(|&&j| j != i).map(|&j| powers[j] * g(j, i)).sum();
            let rhs = rx(i) / ((1.0 + nd * xi).powf(1.0 / nd) - 1.0) - p.sigma2;
            if lhs - rhs > tol(i) {
                return Err(format!("first sharing condition fails for {i}"));
            }
        }
    }
    let a = s_d.iter().map(|&i| rx(i) / p.sigma2).fold(0.0, f64::max);
    let b = s_c.iter().map(|&i| rx(i) / p.sigma2).fold(0.0, f64::max);
    let nd_xi = (nd * a).max(b);
    for &i in &s_c {
        let same = s_c.iter().filter(|&&j| inst.links[j].bs == inst.links[i].bs).count() as f64;
        let lhs: f64 = s_d.iter().map(|&j| powers[j] * g(j, i)).sum();
        let rhs = rx(i) / ((1.0 + nd_xi).powf(same / n) - 1.0) - p.sigma2;
        if lhs - rhs > tol(i) {
            return Err(format!("second sharing condition fails for I2D link {i}"));
        }
    }
    for &i in &s_d {
        let lhs: f64 = set.iter().filter(|&&j| j != i).map(|&j| powers[j] * g(j, i)).sum();
        let rhs = rx(i) / ((1.0 + nd_xi).powf(1.0 / n) - 1.0) - p.sigma2;
        if lhs - rhs > tol(i) {
            return Err(format!("second sharing condition fails for D2D link {i}"));
        }
    }
    Ok(())
}

fn criterion_7() -> Report {
    let mut r = Report::new(7, "scheduler soundness on 1000 random instances");
    let num = SimConfig::desk(Scenario::A).numerology();
    let base = SchedulerParams {
        sigma2: num.sigma2_mw,
        w_n0: num.w_n0_mw,
        e_i2d: 4.0,
        d2d_ladder: vec![4.0],
        margin_i2d_db: 0.0,
        margin_d2d_db: 0.0,
        n_prb: num.n_prb,
        bits_per_prb_per_e: num.bits_per_prb_per_e,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut feas, mut excl, mut exact, mut det, mut cover) = (Ok(()), Ok(()), Ok(()), Ok(()), Ok(()));
    let mut sets_checked = 0;
    for case in 0..SCHED_INSTANCES {
        let inst = random_instance(&mut rng, &base);
        let a = match schedule_ci(&inst.links, &inst.gains, &inst.params) {
            Ok(a) => a,
            Err(e) => {
                feas = Err(format!("case {case}: {e}"));
                continue;
            }
        };
        if schedule_ci(&inst.links, &inst.gains, &inst.params).ok().as_ref() != Some(&a) && det.is_ok() {
            det = Err(format!("case {case}: second run differs"));
        }
        for s in &a.sets {
            sets_checked += 1;
            if let Err(e) = set_is_feasible(&inst, &s.members, &a.powers, &a.targets) {
                if feas.is_ok() {
                    feas = Err(format!("case {case}: {e}"));
                }
            }
        }
        // PRB exclusivity: one I2D link per PRB, one set per PRB.
        let mut i2d: Vec<(u64, u64)> = Vec::new();
        let mut by_set: Vec<(u64, u64, usize)> = Vec::new();
        for p in &a.placements {
            if p.prbs.end > a.n_prb && excl.is_ok() {
                excl = Err(format!("case {case}: placement beyond the CI"));
            }
            if inst.links[p.link].kind == LinkKind::I2D {
                i2d.push((p.prbs.start, p.prbs.end));
            }
            by_set.push((p.prbs.start, p.prbs.end, a.set_of(p.link).unwrap()));
        }
        i2d.sort_unstable();
        if i2d.windows(2).any(|w| w[1].0 < w[0].1) && excl.is_ok() {
            excl = Err(format!("case {case}: two I2D links on one PRB"));
        }
        for x in &by_set {
            for y in &by_set {
                if x.2 != y.2 && x.0 < y.1 && y.0 < x.1 && excl.is_ok() {
                    excl = Err(format!("case {case}: PRB shared by two reuse sets"));
                }
            }
        }
        // Demand exactness and coverage.
        let mut seen = BTreeSet::new();
        for p in &a.placements {
            let l = &inst.links[p.link];
            let pk = l.packets.iter().find(|x| x.id == p.packet).unwrap();
            let want = inst.params.n_req(pk.coded_bits, a.targets[p.link]);
            if p.prbs.end - p.prbs.start != want && exact.is_ok() {
                exact = Err(format!("case {case}: packet {} got {} PRBs, needs {want}", p.packet, p.prbs.end - p.prbs.start));
            }
            seen.insert(p.packet);
        }
        for x in &a.pruned {
            if !seen.insert(*x) && cover.is_ok() {
                cover = Err(format!("case {case}: packet {x} both placed and pruned"));
            }
        }
        let total: usize = inst.links.iter().map(|l| l.packets.len()).sum();
        if seen.len() != total && cover.is_ok() {
            cover = Err(format!("case {case}: {} of {total} packets accounted for", seen.len()));
        }
    }
    let mut put = |sub: &str, res: Result<(), String>, ok: &str| {
        let pass = res.is_ok();
        r.check(sub, pass, res.err().unwrap_or_else(|| ok.to_string()));
    };
    put("a", feas, &format!("{sets_checked} reuse sets pass the independent re-check"));
    put("b", excl, "no PRB carries two I2D links or two reuse sets");
    put("c", exact, "every admitted packet gets exactly its PRB demand");
    put("d", cover, "every packet is placed or pruned, never both");
    put("e", det, "identical allocation on repeat");
    r
}

// ---------------------------------------------------------------------------------------

fn criterion_8() -> Report {
    let mut r = Report::new(8, "PHY oracles");
    let cfg = SimConfig::desk(Scenario::A);
    let num = cfg.numerology();
    let grid = PhyGrid::from_numerology(&num);
    let sigma2_dbm = linear_to_db(num.sigma2_mw);
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    let mut worst_pow: f64 = 0.0;
    for _ in 0..PHY_CASES {
        let g_db = rng.random_range(-140.0..-50.0);
        let e = rng.random_range(0.5..6.0);
        let m = rng.random_range(0.0..20.0);
        let lin = tx_power_per_subcarrier(10f64.powf(g_db / 10.0), e, m, num.sigma2_mw).unwrap();
        let db = tx_power_per_subcarrier_dbm(g_db, e, m, sigma2_dbm);
        worst_pow = worst_pow.max((linear_to_db(lin) - db).abs());
    }
    r.check("a", worst_pow <= POWER_TOL, format!("linear and dB power forms differ by at most {worst_pow:.2e} dB"));

    let mut worst_flat: f64 = 0.0;
    for _ in 0..PHY_CASES {
        let start = rng.random_range(0..50_000u64);
        let len = rng.random_range(1..40_000u64);
        let h = 10f64.powf(rng.random_range(-3.0..3.0));
        let p = num.sigma2_mw * 10f64.powf(rng.random_range(-1.0..3.0));
        let e: f64 = rng.random_range(1.0..6.0);
        let closed = grid.tau * grid.w_c * (len * grid.n_c as u64) as f64 * e.min((1.0 + p * h / grid.sigma2).log2());
        let got = information_bits(&grid, e, p, &Transfer::Flat(h), start..start + len, &[]);
        let sel = information_bits(
            &grid,
            e,
            p,
            &Transfer::Selective(vec![h; grid.n_freq * grid.n_c]),
            start..start + len,
            &[],
        );
        worst_flat = worst_flat.max(((got - closed) / closed).abs()).max(((sel - closed) / closed).abs());
    }
    r.check("b", worst_flat <= FLAT_TOL, format!("flat closed form matched to {worst_flat:.2e} relative"));

    let n_sub = grid.n_freq * grid.n_c;
    let (mut mono, mut anti) = (0usize, 0usize);
    for _ in 0..PHY_CASES {
        let h: Vec<f64> = (0..n_sub).map(|_| -rng.random::<f64>().ln()).collect();
        let ch = Transfer::Selective(h);
        let ih: Vec<f64> = (0..n_sub).map(|_| -rng.random::<f64>().ln()).collect();
        let ich = Transfer::Selective(ih);
        let e = 4.0;
        let len = num.prbs_needed(num.coded_bits, e);
        let alloc = 0..len;
        let payload = num.payload_bits;
        let m1 = rng.random_range(0.0..15.0);
        let m2 = m1 + rng.random_range(0.0..5.0);
        let p = |m: f64| num.sigma2_mw * 15.0 * 10f64.powf(m / 10.0);
        let ip1 = num.sigma2_mw * 10f64.powf(rng.random_range(-2.0..2.0));
        let ip2 = ip1 * (1.0 + rng.random_range(0.0..4.0));
        let iprb = rng.random_range(0..len)..len;
        let mk = |ip: f64| Interferer {
            power: ip,
            channel: &ich,
            prbs: std::slice::from_ref(&iprb),
        };
        let b1 = information_bits(&grid, e, p(m1), &ch, alloc.clone(), &[mk(ip1)]);
        let b2 = information_bits(&grid, e, p(m2), &ch, alloc.clone(), &[mk(ip1)]);
        let s1 = transmission_success(&grid, e, payload, p(m1), &ch, alloc.clone(), &[mk(ip1)]);
        let s2 = transmission_success(&grid, e, payload, p(m2), &ch, alloc.clone(), &[mk(ip1)]);
        if b2 >= b1 && (!s1 || s2) {
            mono += 1;
        }
        let c2 = information_bits(&grid, e, p(m1), &ch, alloc.clone(), &[mk(ip2)]);
        let t2 = transmission_success(&grid, e, payload, p(m1), &ch, alloc.clone(), &[mk(ip2)]);
        if c2 <= b1 && (!t2 || s1) {
            anti += 1;
        }
    }
    r.check("c", mono == PHY_CASES, format!("more margin never hurts in {mono}/{PHY_CASES} cases"));
    r.check("d", anti == PHY_CASES, format!("more interference never helps in {anti}/{PHY_CASES} cases"));
    r
}

fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

fn criterion_9() -> Report {
    let mut r = Report::new(9, "channel statistics");
    let cfg = SimConfig::desk(Scenario::A);
    let num = cfg.numerology();
    let n_sub = num.n_freq() * num.subcarriers_per_prb;
    let gscm = GscmParams {
        n_paths: cfg.channel.n_paths,
        delay_scaling: cfg.channel.delay_scaling,
        path_shadow_db: cfg.channel.path_shadow_db,
    };
    let lsp = LinkLsp {
        shadow_db: 0.0,
        k_db: cfg.channel.lsp_d2d.k_mean_db,
        delay_spread: 10f64.powf(cfg.channel.lsp_d2d.ds_log10_mean),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    let m5: f64 = (0..UNIT_MEAN_DRAWS).map(|_| rician_power(lsp.k_linear(), &mut rng)).sum::<f64>() / UNIT_MEAN_DRAWS as f64;
    // M6: one subcarrier per draw, spread over the band.
    let m6_draws = UNIT_MEAN_DRAWS / 10;
    let mut m6_samples = Vec::with_capacity(m6_draws);
    for d in 0..m6_draws {
        let t = realize(ChannelModel::M6, 1.0, Some(lsp), &gscm, n_sub, num.subcarrier_spacing, &mut rng).transfer;
        m6_samples.push(t.at((d * 37) % n_sub));
    }
    let m6_all: f64 = mean(&m6_samples);
    r.check(
        "a",
        (m5 - 1.0).abs() <= UNIT_MEAN_TOL && (m6_all - 1.0).abs() <= UNIT_MEAN_TOL,
        format!("mean power M5 {m5:.4} ({UNIT_MEAN_DRAWS} draws), M6 {m6_all:.4} ({m6_draws} draws)"),
    );

    let a: Vec<f64> = (0..KS_SAMPLES).map(|_| rician_power(lsp.k_linear(), &mut rng)).collect();
    let b: Vec<f64> = (0..KS_SAMPLES)
        .map(|d| {
            realize(ChannelModel::M6, 1.0, Some(lsp), &gscm, n_sub, num.subcarrier_spacing, &mut rng)
                .transfer
                .at((d * 101) % n_sub)
        })
        .collect();
    let ks = ks_statistic(a, b);
    let crit = KS_C_ALPHA_5PCT * (2.0 / KS_SAMPLES as f64).sqrt();
    r.check("b", ks < crit, format!("KS distance {ks:.4}, 5% critical value {crit:.4}"));

    let mut worst: f64 = 0.0;
    let mut seen = Vec::new();
    for (corr_dist, lag) in [(20.0, 4usize), (15.0, 3)] {
        let grid = Grid::new(4000.0, 400.0, 5.0);
        let f = GaussianField::generate(grid, corr_dist, &mut rng);
        let v = f.values();
        let (mut s, mut n) = (0.0, 0usize);
        for j in 0..grid.ny {
            for i in 0..grid.nx - lag {
                s += v[grid.index(i, j)] * v[grid.index(i + lag, j)];
                n += 1;
            }
        }
        let rho = s / n as f64;
        worst = worst.max((rho - (-1f64).exp()).abs());
        seen.push(format!("{rho:.3} at {corr_dist} m"));
    }
    r.check("c", worst <= AUTOCORR_TOL, format!("autocorrelation at the correlation distance {}", seen.join(", ")));

    let p = PathLossParams::from_config(&cfg, PathLossModel::M3, LinkKind::D2D);
    let mid = (cfg.channel.dual_slope.near_slope_db + cfg.channel.dual_slope.far_slope_db) / 2.0;
    let ds: Vec<f64> = (0..=200).map(|k| 10f64.powf(1.0 + k as f64 * 1.5 / 200.0)).collect();
    let cross = ds.windows(2).find_map(|w| {
        let s = (path_loss(&p, w[1]).unwrap() - path_loss(&p, w[0]).unwrap()) / (w[1] / w[0]).log10();
        (s > mid).then_some((w[0] * w[1]).sqrt())
    });
    r.check(
        "d",
        cross.is_some_and(|d| (CROSSOVER_WINDOW.0..=CROSSOVER_WINDOW.1).contains(&d)),
        format!("slope crosses {mid} dB/decade at {:.1} m", cross.unwrap_or(f64::NAN)),
    );
    r
}

fn round3(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|x| (x * 1000.0).round() / 1000.0).collect()
}

fn fmt_pairs(xs: &[(ChannelModel, f64)]) -> String {
    xs.iter().map(|(m, v)| format!("{m} {v:.1}%")).collect::<Vec<_>>().join(", ")
}

fn main() {
    // libtest flags (e.g. --list, filters) are not used by this runner.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let t0 = Instant::now();
    let calib = calibrate_all(&SimConfig::desk(Scenario::A), &CalibrationSettings::default(), 1).expect("calibration");

    let (r3, r4) = criterion_3_4(&calib);
    let reports = vec![
        criterion_1(&calib),
        criterion_2(&calib),
        r3,
        r4,
        criterion_5(),
        criterion_6(&calib),
        criterion_7(),
        criterion_8(),
        criterion_9(),
    ];

    let known = |id: &str| KNOWN_FAILURES.iter().find(|(k, _)| *k == id).map(|(_, why)| *why);
    let mut unexpected = Vec::new();
    for rep in &reports {
        let pass = rep.checks.iter().all(|c| c.pass);
        println!("{} criterion {}: {}", if pass { "PASS" } else { "FAIL" }, rep.criterion, rep.title);
        for c in &rep.checks {
            let tag = match (c.pass, known(&c.id)) {
                (true, None) => "ok   ",
                (true, Some(_)) => "XPASS",
                (false, Some(_)) => "known",
                (false, None) => "FAIL ",
            };
            println!("    [{tag}] {:<5} {}", c.id, c.detail);
            if !c.pass {
                match known(&c.id) {
                    Some(why) => println!("            expected: {why}"),
                    None => unexpected.push(c.id.clone()),
                }
            }
        }
    }
    let passed = reports.iter().filter(|r| r.checks.iter().all(|c| c.pass)).count();
    println!(
        "\n{passed}/{} criteria pass; {} known failing check(s); {:.1} s",
        reports.len(),
        KNOWN_FAILURES.len(),
        t0.elapsed().as_secs_f64()
    );
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {}", unexpected.join(", "));
        std::process::exit(1);
    }
}
