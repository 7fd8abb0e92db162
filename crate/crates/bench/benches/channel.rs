use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use offload_sim::channel::fading::GscmParams;
use offload_sim::channel::grid::Grid;
use offload_sim::channel::lsp::{GaussianField, LinkLsp};
use offload_sim::channel::realize;
use offload_sim::phy::{information_bits, PhyGrid};
use offload_sim::{ChannelModel, Scenario, SimConfig};

fn channel(c: &mut Criterion) {
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
        k_db: 9.0,
        delay_spread: 1e-7,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    for m in [ChannelModel::M5, ChannelModel::M6] {
        c.bench_function(&format!("realize {m}"), |b| {
            b.iter(|| realize(m, 1e-9, Some(lsp), &gscm, n_sub, num.subcarrier_spacing, &mut rng))
        });
    }

    let grid = PhyGrid::from_numerology(&num);
    let h = realize(ChannelModel::M6, 1.0, Some(lsp), &gscm, n_sub, num.subcarrier_spacing, &mut rng).transfer;
    c.bench_function("information_bits 12000 PRBs", |b| {
        b.iter(|| information_bits(&grid, 4.0, black_box(1e-10), &h, 0..12_000, &[]))
    });

    c.bench_function("shadowing field 1 km", |b| {
        b.iter(|| GaussianField::generate(Grid::new(1000.0, 20.0, 5.0), 20.0, &mut rng))
    });
}

criterion_group!(benches, channel);
criterion_main!(benches);
