//! Fixtures shared by the benches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use offload_sim::scheduler::{CandidateLink, CandidatePacket, GainMatrix, SchedulerParams};
use offload_sim::{LinkKind, Scenario, SimConfig};

/// A street-like CI with `n` candidate links, roughly two thirds D2D.
pub fn scheduler_instance(n: usize, seed: u64) -> (Vec<CandidateLink>, GainMatrix, SchedulerParams) {
    let num = SimConfig::desk(Scenario::A).numerology();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = Vec::with_capacity(n);
    let links = (0..n)
        .map(|i| {
            let d2d = rng.random_bool(0.66);
            let bs = rng.random_range(0..3u32);
            let rx: f64 = rng.random_range(0.0..1000.0);
            let tx = if d2d { rx + rng.random_range(-100.0..100.0) } else { 185.0 + 370.0 * bs as f64 };
            pos.push((tx, rx));
            CandidateLink {
                kind: if d2d { LinkKind::D2D } else { LinkKind::I2D },
                bs: (!d2d).then_some(bs),
                packets: vec![CandidatePacket {
                    id: i as u64,
                    coded_bits: num.coded_bits,
                }],
            }
        })
        .collect();
    let gains = GainMatrix::from_fn(n, |j, i| 1e-4 * (pos[j].0 - pos[i].1).abs().max(1.0).powf(-3.0));
    let params = SchedulerParams {
        sigma2: num.sigma2_mw,
        w_n0: num.w_n0_mw,
        e_i2d: 4.0,
        d2d_ladder: vec![4.0],
        margin_i2d_db: 6.0,
        margin_d2d_db: 6.0,
        n_prb: num.n_prb,
        bits_per_prb_per_e: num.bits_per_prb_per_e,
    };
    (links, gains, params)
}
