use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use graphair::autograd::Tape;
use graphair::graph::synthetic::PlantedBias;
use graphair::losses::{contrastive_loss, tape as loss_tape};
use graphair::nn::Propagator;
use graphair::seed::derive_rng;
use graphair::trainer::{train_step, TrainConfig, TrainState};
use ndarray::Array2;
use rand::Rng;

fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = derive_rng(seed, "bench");
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn contrastive(c: &mut Criterion) {
    let mut group = c.benchmark_group("contrastive");
    for n in [64usize, 256] {
        let (h, h2) = (random(n, 32, 1), random(n, 32, 2));
        group.bench_with_input(BenchmarkId::new("scalar", n), &n, |b, _| {
            b.iter(|| contrastive_loss(h.view(), h2.view(), 0.5).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("tape_fused", n), &n, |b, _| {
            b.iter(|| {
                let mut t = Tape::new();
                let (a, z) = (t.param(h.clone()), t.param(h2.clone()));
                let l = loss_tape::contrastive(&mut t, a, z, 0.5);
                t.backward(l)
            })
        });
        group.bench_with_input(BenchmarkId::new("tape_composed", n), &n, |b, _| {
            b.iter(|| {
                let mut t = Tape::new();
                let (a, z) = (t.param(h.clone()), t.param(h2.clone()));
                let l = loss_tape::contrastive_composed(&mut t, a, z, 0.5);
                t.backward(l)
            })
        });
    }
    group.finish();
}

fn propagation(c: &mut Criterion) {
    let g = PlantedBias { nodes: 1000, p_intra: 0.02, p_inter: 0.002, ..Default::default() }
        .generate(0)
        .unwrap();
    let x = random(g.num_nodes(), 64, 3);
    c.bench_function("propagate_1000x64", |b| {
        b.iter(|| {
            let mut t = Tape::new();
            let prop = Propagator::from_graph(&mut t, &g);
            let v = t.param(x.clone());
            let y = prop.propagate(&mut t, v);
            let s = t.sum(y);
            t.backward(s)
        })
    });
}

fn training(c: &mut Criterion) {
    let g = PlantedBias::default().generate(0).unwrap();
    let cfg = TrainConfig::default();
    let mut state = TrainState::new(&g, &cfg).unwrap();
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("step_200_nodes", |b| b.iter(|| train_step(&mut state, &g, &cfg).unwrap()));
    group.finish();
}

criterion_group!(benches, contrastive, propagation, training);
criterion_main!(benches);
