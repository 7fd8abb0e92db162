//! Per-CI radio-resource scheduling: reuse-set partitioning under the minimum-rate and
//! resource-sharing constraints, D2D rate escalation, pruning, and PRB assignment.

use std::ops::Range;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::phy::tx_power_per_subcarrier;
use crate::types::{BsId, LinkKind};

/// Relative slack on every constraint comparison.
pub const REL_TOL: f64 = 1e-9;

/// Nominal gains between every transmitter and every receiver of the candidate links.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix {
    n: usize,
    g: Vec<f64>,
}

impl GainMatrix {
    pub fn new(n: usize) -> Self {
        GainMatrix { n, g: vec![0.0; n * n] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::new(n);
        for j in 0..n {
            for i in 0..n {
                m.g[j * n + i] = f(j, i);
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Gain from the transmitter of link `j` to the receiver of link `i`.
    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.g[j * self.n + i]
    }

    pub fn set(&mut self, j: usize, i: usize, v: f64) {
        self.g[j * self.n + i] = v;
    }

    pub fn direct(&self, i: usize) -> f64 {
        self.get(i, i)
    }
}

/// Frozen per-link inputs of one partitioning pass.
#[derive(Debug, Clone, Copy)]
pub struct PartitionCtx<'a> {
    pub kinds: &'a [LinkKind],
    /// Serving site of each I2D link (ignored for D2D).
    pub bs: &'a [Option<BsId>],
    pub powers: &'a [f64],
    pub targets: &'a [f64],
    pub gains: &'a GainMatrix,
    /// Per-subcarrier noise.
    pub sigma2: f64,
    /// PRB bandwidth times N0, the reference of the first sharing condition.
    pub w_n0: f64,
}

impl PartitionCtx<'_> {
    fn rx_power(&self, i: usize) -> f64 {
        self.powers[i] * self.gains.direct(i)
    }

    fn interference(&self, j: usize, i: usize) -> f64 {
        self.powers[j] * self.gains.get(j, i)
    }

    fn is_d2d(&self, i: usize) -> bool {
        self.kinds[i] == LinkKind::D2D
    }
}

/// Lower bound on the nominal rate of member `i` of `set`.
///
/// I2D members see every D2D member. D2D members see the other D2D members plus,
/// for each site, the strongest I2D member served by that site.
pub fn e_check(ctx: &PartitionCtx<'_>, i: usize, set: &[usize]) -> f64 {
    let mut den = ctx.sigma2;
    match ctx.kinds[i] {
        LinkKind::I2D => {
            for &j in set {
                if j != i && ctx.is_d2d(j) {
                    den += ctx.interference(j, i);
                }
            }
        }
        LinkKind::D2D => {
            let mut per_bs: Vec<(BsId, f64)> = Vec::new();
            for &j in set {
                if j == i {
                    continue;
                }
                if ctx.is_d2d(j) {
                    den += ctx.interference(j, i);
                } else {
                    let b = ctx.bs[j].unwrap_or(BsId::MAX);
                    let v = ctx.interference(j, i);
                    match per_bs.iter_mut().find(|(bb, _)| *bb == b) {
                        Some(e) => e.1 = e.1.max(v),
                        None => per_bs.push((b, v)),
                    }
                }
            }
            den += per_bs.iter().map(|x| x.1).sum::<f64>();
        }
    }
    (1.0 + ctx.rx_power(i) / den).log2()
}

fn below_target(e: f64, target: f64) -> bool {
    e < target * (1.0 - REL_TOL)
}

/// `lhs <= rhs` with relative slack on the scale of the received signal.
fn within(lhs: f64, rhs: f64, scale: f64) -> bool {
    lhs - rhs <= REL_TOL * scale
}

/// Members of `set` violating either resource-sharing condition.
///
/// The second condition's `|S^d| xi_h` term is read as
/// `max(|S^d| max_d P g / sigma2, max_c P g / sigma2)`, which stays finite without D2D members.
pub fn check_rsc(ctx: &PartitionCtx<'_>, set: &[usize]) -> Vec<usize> {
    let d: Vec<usize> = set.iter().copied().filter(|&i| ctx.is_d2d(i)).collect();
    let c: Vec<usize> = set.iter().copied().filter(|&i| !ctx.is_d2d(i)).collect();
    let nd = d.len() as f64;
    let n = set.len() as f64;
    let mut bad = Vec::new();

    if !d.is_empty() {
        let xi_h = d.iter().map(|&i| ctx.rx_power(i)).fold(0.0, f64::max) / ctx.w_n0;
        let root = (1.0 + nd * xi_h).powf(1.0 / nd) - 1.0;
        for &i in &d {
            let lhs: f64 = d.iter().filter(|&&j| j != i).map(|&j| ctx.interference(j, i)).sum();
            let rhs = ctx.rx_power(i) / root - ctx.sigma2;
            if !within(lhs, rhs, ctx.rx_power(i)) && !bad.contains(&i) {
                bad.push(i);
            }
        }
    }

    let max_d = d.iter().map(|&i| ctx.rx_power(i) / ctx.sigma2).fold(0.0, f64::max);
    let max_c = c.iter().map(|&i| ctx.rx_power(i) / ctx.sigma2).fold(0.0, f64::max);
    let nd_xi = (nd * max_d).max(max_c);
    for &i in &c {
        let same_bs = c.iter().filter(|&&j| ctx.bs[j] == ctx.bs[i]).count() as f64;
        let lhs: f64 = d.iter().map(|&j| ctx.interference(j, i)).sum();
        let rhs = ctx.rx_power(i) / ((1.0 + nd_xi).powf(same_bs / n) - 1.0) - ctx.sigma2;
        if !within(lhs, rhs, ctx.rx_power(i)) && !bad.contains(&i) {
            bad.push(i);
        }
    }
    for &i in &d {
        let lhs: f64 = set.iter().filter(|&&j| j != i).map(|&j| ctx.interference(j, i)).sum();
        let rhs = ctx.rx_power(i) / ((1.0 + nd_xi).powf(1.0 / n) - 1.0) - ctx.sigma2;
        if !within(lhs, rhs, ctx.rx_power(i)) && !bad.contains(&i) {
            bad.push(i);
        }
    }
    bad.sort_unstable();
    bad
}

/// Member of `among` with the smallest rate bound; lower index on ties.
fn argmin_e(ctx: &PartitionCtx<'_>, set: &[usize], among: &[usize]) -> usize {
    let mut best = among[0];
    let mut best_e = f64::INFINITY;
    for &i in among {
        let e = e_check(ctx, i, set);
        if e < best_e || (e == best_e && i < best) {
            best = i;
            best_e = e;
        }
    }
    best
}

/// Greedy peeling: start from all remaining links, trim rate violators (weakest first),
/// then trim sharing-condition violators, emit the survivors as one set, repeat.
/// A set is never trimmed below one member.
pub fn partition_reuse_sets(ctx: &PartitionCtx<'_>, links: &[usize]) -> Vec<Vec<usize>> {
    let mut cl: Vec<usize> = links.to_vec();
    cl.sort_unstable();
    cl.dedup();
    let mut out = Vec::new();
    while !cl.is_empty() {
        let mut s = cl.clone();
        while s.len() > 1 {
            let violators: Vec<usize> = s
                .iter()
                .copied()
                .filter(|&i| below_target(e_check(ctx, i, &s), ctx.targets[i]))
                .collect();
            if violators.is_empty() {
                break;
            }
            let worst = argmin_e(ctx, &s, &violators);
            s.retain(|&x| x != worst);
        }
        while s.len() > 1 {
            let star = check_rsc(ctx, &s);
            if star.is_empty() {
                break;
            }
            let worst = argmin_e(ctx, &s, &star);
            s.retain(|&x| x != worst);
        }
        cl.retain(|x| !s.contains(x));
        out.push(s);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidatePacket {
    pub id: u64,
    pub coded_bits: f64,
}

/// A (transmitter, receiver) pair with packets queued for this CI.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateLink {
    pub kind: LinkKind,
    pub bs: Option<BsId>,
    pub packets: Vec<CandidatePacket>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchedulerParams {
    pub sigma2: f64,
    pub w_n0: f64,
    pub e_i2d: f64,
    pub d2d_ladder: Vec<f64>,
    pub margin_i2d_db: f64,
    pub margin_d2d_db: f64,
    pub n_prb: u64,
    pub bits_per_prb_per_e: f64,
}

impl SchedulerParams {
    pub fn n_req(&self, coded: f64, e: f64) -> u64 {
        crate::engine::config::prbs_needed(coded, self.bits_per_prb_per_e, e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReuseSet {
    pub members: Vec<usize>,
    pub start: u64,
    pub demand: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Placement {
    pub link: usize,
    pub packet: u64,
    pub prbs: Range<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CiAllocation {
    pub sets: Vec<ReuseSet>,
    pub placements: Vec<Placement>,
    /// Packets postponed to the next CI.
    pub pruned: Vec<u64>,
    /// Target rate of every candidate link.
    pub targets: Vec<f64>,
    /// Per-subcarrier power of every candidate link, mW.
    pub powers: Vec<f64>,
    pub d2d_rate: f64,
    pub n_prb: u64,
}

impl CiAllocation {
    pub fn empty(n_prb: u64) -> Self {
        CiAllocation {
            sets: Vec::new(),
            placements: Vec::new(),
            pruned: Vec::new(),
            targets: Vec::new(),
            powers: Vec::new(),
            d2d_rate: 0.0,
            n_prb,
        }
    }

    /// PRB ranges occupied by `link` (the union over its packets).
    pub fn link_prbs(&self, link: usize) -> Vec<Range<u64>> {
        self.placements.iter().filter(|p| p.link == link).map(|p| p.prbs.clone()).collect()
    }

    /// Reuse set index holding `link`, if admitted.
    pub fn set_of(&self, link: usize) -> Option<usize> {
        self.sets.iter().position(|s| s.members.contains(&link))
    }

    /// Number of PRBs carrying at least one transmission.
    pub fn used_prbs(&self) -> u64 {
        let mut r: Vec<Range<u64>> = self.placements.iter().map(|p| p.prbs.clone()).collect();
        r.sort_by_key(|x| x.start);
        let mut used = 0;
        let mut cur: Option<Range<u64>> = None;
        for x in r {
            match &mut cur {
                Some(c) if x.start <= c.end => c.end = c.end.max(x.end),
                _ => {
                    if let Some(c) = cur.take() {
                        used += c.end - c.start;
                    }
                    cur = Some(x);
                }
            }
        }
        if let Some(c) = cur {
            used += c.end - c.start;
        }
        used
    }
}

/// Fraction of the CI's PRBs used anywhere in the region.
pub fn spectrum_used(a: &CiAllocation) -> f64 {
    if a.n_prb == 0 {
        0.0
    } else {
        a.used_prbs() as f64 / a.n_prb as f64
    }
}

/// One full pass at a fixed D2D rate with the given per-link packet counts.
struct Pass {
    sets: Vec<Vec<usize>>,
    demand: Vec<u64>,
    targets: Vec<f64>,
    powers: Vec<f64>,
}

fn run_pass(links: &[CandidateLink], gains: &GainMatrix, p: &SchedulerParams, keep: &[usize], d2d_rate: f64) -> Result<Pass> {
    let n = links.len();
    let kinds: Vec<LinkKind> = links.iter().map(|l| l.kind).collect();
    let bs: Vec<Option<BsId>> = links.iter().map(|l| l.bs).collect();
    let targets: Vec<f64> = kinds
        .iter()
        .map(|k| match k {
            LinkKind::I2D => p.e_i2d,
            LinkKind::D2D => d2d_rate,
        })
        .collect();
    let mut powers = vec![0.0; n];
    for i in 0..n {
        let m = match kinds[i] {
            LinkKind::I2D => p.margin_i2d_db,
            LinkKind::D2D => p.margin_d2d_db,
        };
        powers[i] = tx_power_per_subcarrier(gains.direct(i), targets[i], m, p.sigma2)?;
    }
    let ctx = PartitionCtx {
        kinds: &kinds,
        bs: &bs,
        powers: &powers,
        targets: &targets,
        gains,
        sigma2: p.sigma2,
        w_n0: p.w_n0,
    };
    let active: Vec<usize> = (0..n).filter(|&i| keep[i] > 0).collect();
    let sets = partition_reuse_sets(&ctx, &active);
    let link_demand = |i: usize| -> u64 {
        links[i].packets[..keep[i]]
            .iter()
            .map(|pk| p.n_req(pk.coded_bits, targets[i]))
            .sum()
    };
    let demand = sets
        .iter()
        .map(|s| {
            let i2d: u64 = s.iter().filter(|&&i| kinds[i] == LinkKind::I2D).map(|&i| link_demand(i)).sum();
            let d2d = s.iter().filter(|&&i| kinds[i] == LinkKind::D2D).map(|&i| link_demand(i)).max().unwrap_or(0);
            i2d.max(d2d)
        })
        .collect();
    Ok(Pass {
        sets,
        demand,
        targets,
        powers,
    })
}

/// Picks the next packet to postpone: surplus D2D packets first, then whole D2D links,
/// then I2D packets, always starting from the weakest nominal link.
fn prune_one(links: &[CandidateLink], gains: &GainMatrix, keep: &mut [usize]) -> Option<Vec<u64>> {
    let weakest = |pred: &dyn Fn(usize) -> bool| -> Option<usize> {
        (0..links.len())
            .filter(|&i| pred(i))
            .min_by(|&a, &b| gains.direct(a).total_cmp(&gains.direct(b)).then(a.cmp(&b)))
    };
    let d2d = |i: usize| links[i].kind == LinkKind::D2D;
    if let Some(i) = weakest(&|i| d2d(i) && keep[i] >= 2) {
        keep[i] -= 1;
        return Some(vec![links[i].packets[keep[i]].id]);
    }
    if let Some(i) = weakest(&|i| d2d(i) && keep[i] == 1) {
        keep[i] = 0;
        return Some(vec![links[i].packets[0].id]);
    }
    if let Some(i) = weakest(&|i| !d2d(i) && keep[i] >= 1) {
        keep[i] -= 1;
        return Some(vec![links[i].packets[keep[i]].id]);
    }
    None
}

/// Schedules one control interval.
pub fn schedule_ci(links: &[CandidateLink], gains: &GainMatrix, p: &SchedulerParams) -> Result<CiAllocation> {
    assert_eq!(gains.len(), links.len(), "gain matrix must cover every link");
    if links.is_empty() {
        return Ok(CiAllocation::empty(p.n_prb));
    }
    for l in links.iter().filter(|l| l.kind == LinkKind::I2D) {
        for pk in &l.packets {
            let need = p.n_req(pk.coded_bits, p.e_i2d);
            if need > p.n_prb {
                return Err(Error::PacketTooLarge {
                    needed: need,
                    available: p.n_prb,
                });
            }
        }
    }
    let mut keep: Vec<usize> = links.iter().map(|l| l.packets.len()).collect();
    let mut pruned = Vec::new();
    let (pass, rate) = 'outer: loop {
        let mut last = None;
        for &rate in &p.d2d_ladder {
            let pass = run_pass(links, gains, p, &keep, rate)?;
            let total: u64 = pass.demand.iter().sum();
            if total <= p.n_prb {
                break 'outer (pass, rate);
            }
            last = Some((pass, rate));
        }
        match prune_one(links, gains, &mut keep) {
            Some(ids) => pruned.extend(ids),
            // Nothing left to prune: the last pass is empty and fits.
            None => break last.expect("ladder is non-empty"),
        }
    };

    let mut sets = Vec::with_capacity(pass.sets.len());
    let mut placements = Vec::new();
    let mut cursor = 0u64;
    for (members, &demand) in pass.sets.iter().zip(&pass.demand) {
        let start = cursor;
        let mut i2d_cursor = start;
        for &i in members {
            let mut local = if links[i].kind == LinkKind::I2D { i2d_cursor } else { start };
            for pk in &links[i].packets[..keep[i]] {
                let len = p.n_req(pk.coded_bits, pass.targets[i]);
                placements.push(Placement {
                    link: i,
                    packet: pk.id,
                    prbs: local..local + len,
                });
                local += len;
            }
            if links[i].kind == LinkKind::I2D {
                i2d_cursor = local;
            }
        }
        sets.push(ReuseSet {
            members: members.clone(),
            start,
            demand,
        });
        cursor += demand;
    }
    Ok(CiAllocation {
        sets,
        placements,
        pruned,
        targets: pass.targets,
        powers: pass.powers,
        d2d_rate: rate,
        n_prb: p.n_prb,
    })
}
