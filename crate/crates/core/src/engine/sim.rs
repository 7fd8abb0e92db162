//! One replication: the event loop tying traffic, CDMS, scheduler, channel and PHY together.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::cdms::{Cdms, CdmsParams, Disposition, I2dDelivery};
use crate::channel::grid::nearest_bs;
use crate::channel::{ChannelEnv, Transfer, TxSite};
use crate::engine::config::{Numerology, SimConfig};
use crate::engine::queue::EventQueue;
use crate::engine::rng::{streams, RngStreams, SimRng};
use crate::error::{Error, Result};
use crate::harness::metrics::MetricsRecord;
use crate::phy::calibration::CalibrationTable;
use crate::phy::{information_bits, meets_payload, packet_energy, Interferer, PhyGrid};
use crate::scheduler::{schedule_ci, spectrum_used, CandidateLink, CandidatePacket, GainMatrix, SchedulerParams};
use crate::traffic::{ArrivalProcess, RequestProcess, Vehicle, Zipf};
use crate::types::{BsId, ContentId, Endpoint, LinkKind, Mode, NodeId, Position, RequestId};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Event {
    Arrival,
    Request(NodeId),
    Exit(NodeId),
    Timeout { node: NodeId, content: ContentId, request: RequestId },
    CiTick(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RequestStatus {
    Pending,
    Repeat,
    ServedD2d,
    ServedI2d,
    Cancelled,
    Dropped,
}

/// Life of one request, kept when auditing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RequestRecord {
    pub id: RequestId,
    pub node: NodeId,
    pub content: ContentId,
    pub t_req: f64,
    pub counted: bool,
    pub status: RequestStatus,
    pub t_done: Option<f64>,
    /// Node that served it over D2D.
    pub source: Option<NodeId>,
    pub attempts: u32,
    pub energy_mj: f64,
}

/// Per-CI summary, kept when auditing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CiRecord {
    pub ci: u64,
    pub links: usize,
    pub reuse_sets: usize,
    pub placed: usize,
    pub pruned: usize,
    pub failures: usize,
    pub used_prbs: u64,
    pub d2d_rate: f64,
}

/// Traffic as it happened, independent of the radio side.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrafficTrace {
    /// (node, time) for every vehicle, the initial population at t = 0 first.
    pub arrivals: Vec<(NodeId, f64)>,
    /// (request, node, content, time).
    pub requests: Vec<(RequestId, NodeId, ContentId, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationOutcome {
    pub metrics: MetricsRecord,
    /// Counted requests served over D2D.
    pub d2d_served: BTreeSet<RequestId>,
    pub trace: TrafficTrace,
    /// Filled only with `sim.audit`.
    pub requests: Vec<RequestRecord>,
    pub cis: Vec<CiRecord>,
    pub margin_i2d_db: f64,
    pub margin_d2d_db: f64,
}

/// Link margins: fixed in the config, or looked up in the calibration table.
pub fn resolve_margins(cfg: &SimConfig, calib: Option<&CalibrationTable>) -> Result<(f64, f64)> {
    let one = |fixed: Option<f64>, kind: LinkKind| -> Result<f64> {
        if let Some(m) = fixed {
            return Ok(m);
        }
        match calib {
            Some(t) => t.margin_db(cfg.channel.model, cfg.scenario.kind, kind),
            None => Err(Error::MissingCalibration {
                model: cfg.channel.model,
                scenario: cfg.scenario.kind,
                kind,
            }),
        }
    };
    Ok((one(cfg.radio.link_margin_i2d, LinkKind::I2D)?, one(cfg.radio.link_margin_d2d, LinkKind::D2D)?))
}

/// Runs one replication with the given master seed (overriding `cfg.sim.seed`).
pub fn run_replication(cfg: &SimConfig, seed: u64, calib: Option<&CalibrationTable>) -> Result<ReplicationOutcome> {
    cfg.validate()?;
    let (mi, md) = resolve_margins(cfg, calib)?;
    Simulation::new(cfg, seed, mi, md)?.run()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TxJob {
    request: RequestId,
    node: NodeId,
    content: ContentId,
    kind: LinkKind,
    /// Serving node for D2D; the base station is chosen at scheduling time.
    source: Option<NodeId>,
    attempts: u32,
}

#[derive(Debug, Clone, Copy)]
struct InFlight {
    job: TxJob,
    success: bool,
}

struct Live {
    vehicle: Vehicle,
    requests_rng: SimRng,
    exit_at: f64,
}

pub struct Simulation<'a> {
    cfg: &'a SimConfig,
    seed: u64,
    num: Numerology,
    phy: PhyGrid,
    sched: SchedulerParams,
    queue: EventQueue<Event>,
    env: ChannelEnv,
    cdms: Cdms,
    streams: RngStreams,
    arrivals_rng: SimRng,
    speeds_rng: SimRng,
    arrival: ArrivalProcess,
    request: RequestProcess,
    zipf: Zipf,
    live: BTreeMap<NodeId, Live>,
    next_node: NodeId,
    next_request: RequestId,
    records: BTreeMap<RequestId, RequestRecord>,
    jobs: Vec<TxJob>,
    in_flight: Vec<InFlight>,
    trace: TrafficTrace,
    cis: Vec<CiRecord>,
    spectrum: Vec<f64>,
    attempts: [u64; 2],
    failures: [u64; 2],
    pruned: u64,
    n_cis: u64,
}

fn kind_index(k: LinkKind) -> usize {
    match k {
        LinkKind::I2D => 0,
        LinkKind::D2D => 1,
    }
}

impl<'a> Simulation<'a> {
    pub fn new(cfg: &'a SimConfig, seed: u64, margin_i2d_db: f64, margin_d2d_db: f64) -> Result<Self> {
        let streams = RngStreams::new(seed);
        let num = cfg.numerology();
        let env = ChannelEnv::new(cfg, &streams);
        let sched = SchedulerParams {
            sigma2: num.sigma2_mw,
            w_n0: num.w_n0_mw,
            e_i2d: cfg.radio.tx_spectral_efficiency,
            d2d_ladder: cfg.radio.d2d_rate_ladder.clone(),
            margin_i2d_db,
            margin_d2d_db,
            n_prb: num.n_prb,
            bits_per_prb_per_e: num.bits_per_prb_per_e,
        };
        let content_timeout = match cfg.sim.mode {
            Mode::Offloading => cfg.cdms.content_timeout,
            Mode::BenchmarkI2dOnly => 0.0,
        };
        let cdms = Cdms::new(CdmsParams {
            mode: cfg.sim.mode,
            d_max: cfg.cdms.neighbor_range,
            content_timeout,
            sharing_timeout: cfg.cdms.sharing_timeout,
        });
        Ok(Simulation {
            cfg,
            seed,
            phy: PhyGrid::from_numerology(&num),
            num,
            sched,
            queue: EventQueue::new(),
            env,
            cdms,
            arrivals_rng: streams.stream(streams::ARRIVALS),
            speeds_rng: streams.stream(streams::SPEEDS),
            streams,
            arrival: ArrivalProcess::from_config(cfg),
            request: RequestProcess {
                rate: cfg.traffic.request_rate,
            },
            zipf: Zipf::new(cfg.traffic.zipf_alpha, cfg.traffic.catalog_size),
            live: BTreeMap::new(),
            next_node: 0,
            next_request: 0,
            records: BTreeMap::new(),
            jobs: Vec::new(),
            in_flight: Vec::new(),
            trace: TrafficTrace::default(),
            cis: Vec::new(),
            spectrum: Vec::new(),
            attempts: [0; 2],
            failures: [0; 2],
            pruned: 0,
            n_cis: 0,
        })
    }

    fn ci_duration(&self) -> f64 {
        self.cfg.radio.ci_duration
    }

    fn position(&self, k: NodeId, t: f64) -> Option<Position> {
        self.live.get(&k).map(|l| l.vehicle.position(t))
    }

    fn bs_for(&self, p: Position) -> BsId {
        nearest_bs(self.env.sites(), p)
    }

    pub fn run(mut self) -> Result<ReplicationOutcome> {
        let duration = self.cfg.sim.duration;
        let initial = self
            .arrival
            .initial_population(0, &mut self.arrivals_rng, &mut self.speeds_rng);
        for v in initial {
            self.admit(v, 0.0)?;
        }
        let first = self.arrival.next_interarrival(&mut self.arrivals_rng);
        self.queue.schedule(first, Event::Arrival)?;
        self.n_cis = (duration / self.ci_duration() + 1e-9).floor() as u64;
        self.queue.schedule(0.0, Event::CiTick(0))?;

        while let Some(t) = self.queue.peek_time() {
            if t > duration {
                break;
            }
            let (t, ev) = self.queue.pop().expect("peeked");
            match ev {
                Event::Arrival => {
                    let v = self.arrival.spawn(self.next_node, t, &mut self.arrivals_rng, &mut self.speeds_rng);
                    self.admit(v, t)?;
                    let dt = self.arrival.next_interarrival(&mut self.arrivals_rng);
                    self.queue.schedule(t + dt, Event::Arrival)?;
                }
                Event::Request(k) => self.on_request(k, t)?,
                Event::Exit(k) => self.on_exit(k),
                Event::Timeout { node, content, request } => {
                    if let Some(d) = self.cdms.on_content_timeout(node, content, request) {
                        self.push_i2d(d);
                    }
                }
                Event::CiTick(n) => self.on_tick(n, t)?,
            }
        }
        Ok(self.finish())
    }

    fn admit(&mut self, v: Vehicle, t: f64) -> Result<()> {
        let id = v.id;
        debug_assert_eq!(id, self.next_node);
        self.next_node += 1;
        let exit_at = v.exit_time(self.cfg.roi.length);
        let p = v.position(t);
        self.cdms.add_node(id, p, self.bs_for(p));
        let mut rng = self.streams.substream(streams::REQUESTS, id as u64);
        self.trace.arrivals.push((id, t));
        self.queue.schedule(exit_at.max(t), Event::Exit(id))?;
        if let Some(tr) = self.request.next_after(t, &mut rng) {
            if tr < exit_at {
                self.queue.schedule(tr, Event::Request(id))?;
            }
        }
        self.live.insert(
            id,
            Live {
                vehicle: v,
                requests_rng: rng,
                exit_at,
            },
        );
        Ok(())
    }

    fn on_request(&mut self, k: NodeId, t: f64) -> Result<()> {
        let Some(live) = self.live.get_mut(&k) else {
            return Ok(());
        };
        let z = self.zipf.sample(&mut live.requests_rng);
        let next = self.request.next_after(t, &mut live.requests_rng);
        let exit_at = live.exit_at;
        if let Some(tr) = next {
            if tr < exit_at {
                self.queue.schedule(tr, Event::Request(k))?;
            }
        }
        let id = self.next_request;
        self.next_request += 1;
        self.trace.requests.push((id, k, z, t));
        let mut rec = RequestRecord {
            id,
            node: k,
            content: z,
            t_req: t,
            counted: t >= self.cfg.sim.warmup,
            status: RequestStatus::Pending,
            t_done: None,
            source: None,
            attempts: 0,
            energy_mj: 0.0,
        };
        match self.cdms.handle_request(k, z, t, id)? {
            Disposition::DiscardedRepeat | Disposition::Merged => rec.status = RequestStatus::Repeat,
            Disposition::Pending { timeout_at } => {
                self.queue.schedule(timeout_at, Event::Timeout { node: k, content: z, request: id })?;
            }
            Disposition::D2dTriggered { source, timeout_at } => {
                self.queue.schedule(timeout_at, Event::Timeout { node: k, content: z, request: id })?;
                self.jobs.push(TxJob {
                    request: id,
                    node: k,
                    content: z,
                    kind: LinkKind::D2D,
                    source: Some(source),
                    attempts: 0,
                });
            }
            Disposition::I2dImmediate { .. } => self.jobs.push(TxJob {
                request: id,
                node: k,
                content: z,
                kind: LinkKind::I2D,
                source: None,
                attempts: 0,
            }),
        }
        self.records.insert(id, rec);
        Ok(())
    }

    fn on_exit(&mut self, k: NodeId) {
        self.live.remove(&k);
        for (_, e) in self.cdms.remove_node(k) {
            if let Some(r) = self.records.get_mut(&e.request) {
                if r.status == RequestStatus::Pending {
                    r.status = RequestStatus::Cancelled;
                }
            }
        }
    }

    fn push_i2d(&mut self, d: I2dDelivery) {
        self.jobs.push(TxJob {
            request: d.request,
            node: d.node,
            content: d.content,
            kind: LinkKind::I2D,
            source: None,
            attempts: 0,
        });
    }

    fn is_pending(&self, id: RequestId) -> bool {
        self.records.get(&id).is_some_and(|r| r.status == RequestStatus::Pending)
    }

    fn on_tick(&mut self, n: u64, t: f64) -> Result<()> {
        self.complete_transmissions(t)?;

        let positions: Vec<(NodeId, Position, BsId)> = self
            .live
            .iter()
            .map(|(&k, l)| {
                let p = l.vehicle.position(t);
                (k, p, nearest_bs(self.env.sites(), p))
            })
            .collect();
        self.cdms.expire_caches(t);
        let env = &self.env;
        self.cdms
            .refresh(&positions, |q, p| env.nominal_gain(TxSite::Device(q), p))?;
        for trig in self.cdms.on_ci_tick_scan(t) {
            self.jobs.push(TxJob {
                request: trig.request,
                node: trig.node,
                content: trig.content,
                kind: LinkKind::D2D,
                source: Some(trig.source),
                attempts: 0,
            });
        }

        if n < self.n_cis {
            self.schedule_and_transmit(n, t)?;
            self.queue.schedule((n + 1) as f64 * self.ci_duration(), Event::CiTick(n + 1))?;
        }
        Ok(())
    }

    fn complete_transmissions(&mut self, t: f64) -> Result<()> {
        let done = std::mem::take(&mut self.in_flight);
        let max_attempts = self.cfg.radio.max_attempts;
        for f in done {
            let job = f.job;
            if !self.is_pending(job.request) || !self.cdms.contains(job.node) {
                continue;
            }
            if f.success {
                self.cdms.deliver(job.node, job.content, t)?;
                let r = self.records.get_mut(&job.request).expect("known request");
                r.status = match job.kind {
                    LinkKind::D2D => RequestStatus::ServedD2d,
                    LinkKind::I2D => RequestStatus::ServedI2d,
                };
                r.t_done = Some(t);
                r.source = job.source;
                continue;
            }
            if job.attempts < max_attempts {
                self.jobs.push(job);
                continue;
            }
            match job.kind {
                LinkKind::D2D => {
                    if let Some(d) = self.cdms.abort_d2d(job.node, job.content, t) {
                        self.push_i2d(d);
                    }
                }
                LinkKind::I2D => {
                    self.cdms.drop_request(job.node, job.content);
                    if let Some(r) = self.records.get_mut(&job.request) {
                        r.status = RequestStatus::Dropped;
                        r.t_done = Some(t);
                    }
                }
            }
        }
        Ok(())
    }

    fn schedule_and_transmit(&mut self, n: u64, t: f64) -> Result<()> {
        // Keep only jobs that can still go out this CI.
        let jobs = std::mem::take(&mut self.jobs);
        let mut valid = Vec::with_capacity(jobs.len());
        for job in jobs {
            if !self.is_pending(job.request) || !self.live.contains_key(&job.node) {
                continue;
            }
            if let (LinkKind::D2D, Some(src)) = (job.kind, job.source) {
                if !self.live.contains_key(&src) || !self.cdms.holds(src, job.content, t) {
                    if let Some(d) = self.cdms.abort_d2d(job.node, job.content, t) {
                        self.push_i2d(d);
                    }
                    continue;
                }
            }
            valid.push(job);
        }
        // Anything that `abort_d2d` just turned into I2D joins this CI too.
        valid.append(&mut self.jobs);

        // Group by (transmitter, receiver).
        let mut groups: BTreeMap<(Endpoint, NodeId), Vec<TxJob>> = BTreeMap::new();
        for job in valid {
            let rx = self.position(job.node, t).expect("live receiver");
            let tx = match job.source {
                Some(s) => Endpoint::Node(s),
                None => Endpoint::Bs(self.bs_for(rx)),
            };
            groups.entry((tx, job.node)).or_default().push(job);
        }
        let mut link_jobs: Vec<Vec<TxJob>> = Vec::with_capacity(groups.len());
        let mut tx_ep: Vec<Endpoint> = Vec::new();
        let mut tx_site: Vec<TxSite> = Vec::new();
        let mut rx_id: Vec<NodeId> = Vec::new();
        let mut rx_pos: Vec<Position> = Vec::new();
        let mut links: Vec<CandidateLink> = Vec::new();
        for ((tx, rx), mut js) in groups {
            js.sort_by_key(|j| j.request);
            let rxp = self.position(rx, t).expect("live receiver");
            let (site, kind, bs) = match tx {
                Endpoint::Bs(b) => (TxSite::Bs(b), LinkKind::I2D, Some(b)),
                Endpoint::Node(s) => (TxSite::Device(self.position(s, t).expect("live source")), LinkKind::D2D, None),
            };
            links.push(CandidateLink {
                kind,
                bs,
                packets: js
                    .iter()
                    .map(|j| CandidatePacket {
                        id: j.request,
                        coded_bits: self.num.coded_bits,
                    })
                    .collect(),
            });
            tx_ep.push(tx);
            tx_site.push(site);
            rx_id.push(rx);
            rx_pos.push(rxp);
            link_jobs.push(js);
        }
        let nl = links.len();
        let gains = GainMatrix::from_fn(nl, |j, i| self.env.model_gain(tx_site[j], rx_pos[i]));
        let alloc = schedule_ci(&links, &gains, &self.sched)?;

        // Pruned packets wait for the next CI.
        let pruned: BTreeSet<u64> = alloc.pruned.iter().copied().collect();
        for js in &link_jobs {
            for j in js {
                if pruned.contains(&j.request) {
                    self.jobs.push(*j);
                }
            }
        }

        // Channels are drawn lazily: direct links, and cross links inside a reuse set.
        let mut channels: HashMap<(usize, usize), Transfer> = HashMap::new();
        let mut chan = |j: usize, i: usize, env: &ChannelEnv| -> Transfer {
            channels
                .entry((j, i))
                .or_insert_with(|| env.sample_channel(tx_site[j], tx_ep[j], rx_pos[i], rx_id[i], n).transfer)
                .clone()
        };
        let link_prbs: Vec<Vec<std::ops::Range<u64>>> = (0..nl).map(|i| alloc.link_prbs(i)).collect();
        let mut failures = 0;
        let measured = t >= self.cfg.sim.warmup;
        for pl in &alloc.placements {
            let i = pl.link;
            let set = alloc.set_of(i).expect("placed link is in a set");
            let direct = chan(i, i, &self.env);
            let others: Vec<usize> = alloc.sets[set].members.iter().copied().filter(|&j| j != i).collect();
            let cross: Vec<Transfer> = others.iter().map(|&j| chan(j, i, &self.env)).collect();
            let interferers: Vec<Interferer<'_>> = others
                .iter()
                .zip(&cross)
                .map(|(&j, ch)| Interferer {
                    power: alloc.powers[j],
                    channel: ch,
                    prbs: &link_prbs[j],
                })
                .collect();
            let bits = information_bits(&self.phy, alloc.targets[i], alloc.powers[i], &direct, pl.prbs.clone(), &interferers);
            let success = meets_payload(bits, self.num.payload_bits);
            let mut job = *link_jobs[i].iter().find(|j| j.request == pl.packet).expect("placed packet");
            job.attempts += 1;
            let energy = packet_energy(pl.prbs.end - pl.prbs.start, self.phy.n_c, alloc.powers[i], self.phy.tau);
            let rec = self.records.get_mut(&job.request).expect("known request");
            rec.attempts += 1;
            rec.energy_mj += energy;
            if rec.counted {
                self.attempts[kind_index(job.kind)] += 1;
                if !success {
                    self.failures[kind_index(job.kind)] += 1;
                }
            }
            if !success {
                failures += 1;
            }
            self.in_flight.push(InFlight { job, success });
        }
        if measured {
            self.spectrum.push(spectrum_used(&alloc));
            self.pruned += alloc.pruned.len() as u64;
        }
        if self.cfg.sim.audit {
            self.cis.push(CiRecord {
                ci: n,
                links: nl,
                reuse_sets: alloc.sets.len(),
                placed: alloc.placements.len(),
                pruned: alloc.pruned.len(),
                failures,
                used_prbs: alloc.used_prbs(),
                d2d_rate: alloc.d2d_rate,
            });
        }
        Ok(())
    }

    fn finish(self) -> ReplicationOutcome {
        let counted: Vec<&RequestRecord> = self.records.values().filter(|r| r.counted).collect();
        let count = |s: RequestStatus| counted.iter().filter(|r| r.status == s).count() as u64;
        let d2d = count(RequestStatus::ServedD2d);
        let i2d = count(RequestStatus::ServedI2d);
        let delivered = d2d + i2d;
        let repeats = count(RequestStatus::Repeat);
        let requests = counted.len() as u64;
        let energy: f64 = counted.iter().map(|r| r.energy_mj).sum();
        let latency: Vec<f64> = counted
            .iter()
            .filter(|r| matches!(r.status, RequestStatus::ServedD2d | RequestStatus::ServedI2d))
            .map(|r| r.t_done.unwrap_or(r.t_req) - r.t_req)
            .collect();
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        let attempts = self.attempts[0] + self.attempts[1];
        let failures = self.failures[0] + self.failures[1];
        let metrics = MetricsRecord {
            scenario: self.cfg.scenario.kind,
            model: self.cfg.channel.model,
            mode: self.cfg.sim.mode,
            seed: self.seed,
            speed_min: self.cfg.traffic.speed_min,
            speed_max: self.cfg.traffic.speed_max,
            offloading_efficiency: ratio(d2d as f64, delivered as f64),
            energy_per_content_mj: ratio(energy, delivered as f64),
            spectrum_occupation: ratio(self.spectrum.iter().sum(), self.spectrum.len() as f64),
            energy_saving_pct: None,
            spectrum_saving_pct: None,
            mean_latency_s: ratio(latency.iter().sum(), latency.len() as f64),
            gamma_nr: 1.0 - ratio(repeats as f64, requests as f64),
            failure_rate: ratio(failures as f64, attempts as f64),
            requests,
            repeats,
            delivered_d2d: d2d,
            delivered_i2d: i2d,
            cancelled: count(RequestStatus::Cancelled),
            dropped: count(RequestStatus::Dropped),
            d2d_attempts: self.attempts[1],
            d2d_failures: self.failures[1],
            i2d_attempts: self.attempts[0],
            i2d_failures: self.failures[0],
            pruned_packets: self.pruned,
            vehicles: self.next_node as u64,
            measured_cis: self.spectrum.len() as u64,
        };
        let d2d_served = counted
            .iter()
            .filter(|r| r.status == RequestStatus::ServedD2d)
            .map(|r| r.id)
            .collect();
        ReplicationOutcome {
            metrics,
            d2d_served,
            trace: self.trace,
            requests: if self.cfg.sim.audit {
                self.records.into_values().collect()
            } else {
                Vec::new()
            },
            cis: self.cis,
            margin_i2d_db: self.sched.margin_i2d_db,
            margin_d2d_db: self.sched.margin_d2d_db,
        }
    }
}
