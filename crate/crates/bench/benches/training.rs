use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nnsysid::dynmodel::{apply_scaling, measured_initial_conditions};
use nnsysid::signals::{band_noise, chen_generate, held_gaussian_input, NoiseSpec};
use nnsysid::training::train;
use nnsysid::{DVector, Dataset, DynamicModel, FeedforwardNet, LmConfig, ModelOrders, NetStructure, TrainingMethod};

fn chen(n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let u = held_gaussian_input(n, 5, &mut rng).unwrap();
    let v = band_noise(n, &NoiseSpec::white(0.1), &mut rng).unwrap();
    let w = band_noise(n, &NoiseSpec::white(0.5), &mut rng).unwrap();
    chen_generate(&u, &v, &w, [0.0, 0.0]).unwrap().data
}

fn model(data: &Dataset, hidden: usize) -> (DynamicModel, Dataset) {
    let orders = ModelOrders::new(2, 2, 1).unwrap();
    let (scaled, scaling) = apply_scaling(data, None).unwrap();
    let structure = NetStructure::regression(orders.regressor_len(1, 1), &[hidden], 1).unwrap();
    let net = FeedforwardNet::init_params(&structure, &mut ChaCha8Rng::seed_from_u64(1));
    (DynamicModel::new(net, orders, scaling).unwrap(), scaled)
}

fn net_passes(c: &mut Criterion) {
    let structure = NetStructure::regression(4, &[10], 1).unwrap();
    let net = FeedforwardNet::init_params(&structure, &mut ChaCha8Rng::seed_from_u64(1));
    let x = DVector::from_vec(vec![0.1, -0.3, 0.7, 0.2]);
    c.bench_function("net/forward_4-10-1", |b| b.iter(|| net.forward(black_box(&x))));
    let cache = net.forward(&x);
    c.bench_function("net/backward_jacobian_4-10-1", |b| {
        b.iter(|| {
            let s = net.backward(black_box(&cache));
            net.param_jacobian(&cache, &s)
        })
    });
}

fn jacobians(c: &mut Criterion) {
    let data = chen(1000);
    let mut group = c.benchmark_group("jacobian_n1000");
    for hidden in [10, 30] {
        let (m, scaled) = model(&data, hidden);
        let y0 = measured_initial_conditions(&scaled, &m.orders);
        group.bench_with_input(BenchmarkId::new("sp", hidden), &hidden, |b, _| {
            b.iter(|| m.residuals_jacobian_sp(black_box(&scaled)))
        });
        group.bench_with_input(BenchmarkId::new("p-phi", hidden), &hidden, |b, _| {
            b.iter(|| m.residuals_jacobian_p(black_box(&scaled), &y0, true))
        });
    }
    group.finish();
}

fn lm_epochs(c: &mut Criterion) {
    let data = chen(1000);
    let (m, scaled) = model(&data, 10);
    let cfg = LmConfig {
        max_epochs: 5,
        ..LmConfig::default()
    };
    let mut group = c.benchmark_group("lm_5_epochs_n1000_h10");
    group.sample_size(10);
    for method in [TrainingMethod::SeriesParallel, TrainingMethod::ParallelPhi] {
        group.bench_function(method.as_str(), |b| {
            b.iter(|| train(&m, &scaled, method, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, net_passes, jacobians, lm_epochs);
criterion_main!(benches);
