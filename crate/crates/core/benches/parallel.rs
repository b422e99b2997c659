//! Sequential vs parallel execution of the data-parallel hot paths.
//! Without the `parallel` feature both variants run on one thread.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hiergi::metrics::dataset_seg_report;
use hiergi::models::{tta_classify_batch, Module, ModelSpec};
use hiergi::{Aggregation, Execution, HierLoss, LabelHierarchy};
use ndarray::{Array2, Array4, ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

fn random_batch(n: usize, c: usize, h: usize, w: usize, seed: u64) -> Array4<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array4::from_shape_fn((n, c, h, w), |_| rng.random_range(-1.0..1.0))
}

fn segmenter_forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("segmenter_forward");
    group.sample_size(10);
    let x = random_batch(8, 3, 64, 80, 1);
    for exec in MODES {
        let mut model = ModelSpec::DoubleTinyUnet { width: 8 }.build_segmenter(0).unwrap();
        model.set_exec(exec);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &x, |b, x| {
            b.iter(|| model.forward(x).unwrap())
        });
    }
    group.finish();
}

fn hierarchical_loss(c: &mut Criterion) {
    let h = LabelHierarchy::default_taxonomy();
    let loss = HierLoss::new(&h);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let z = Array2::from_shape_fn((512, h.n_find()), |_| rng.random_range(-5.0..5.0));
    let targets: Vec<_> = (0..512).map(|i| loss.target(i % h.n_find()).unwrap()).collect();
    let mut group = c.benchmark_group("hierarchical_loss_batch");
    for exec in MODES {
        group.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| loss.batch_loss_and_grad(z.view(), &targets, exec).unwrap())
        });
    }
    group.finish();
}

fn segmentation_metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let masks: Vec<(ArrayD<f32>, ArrayD<f32>)> = (0..64)
        .map(|_| {
            let mut m = || ArrayD::from_shape_fn(IxDyn(&[1, 256, 320]), |_| f32::from(rng.random_bool(0.3)));
            (m(), m())
        })
        .collect();
    let pairs: Vec<_> = masks.iter().map(|(p, g)| (p.view(), g.view())).collect();
    let mut group = c.benchmark_group("dataset_seg_report");
    for exec in MODES {
        group.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| dataset_seg_report(&pairs, Aggregation::PerImageMean, exec).unwrap())
        });
    }
    group.finish();
}

fn flip_tta(c: &mut Criterion) {
    let mut group = c.benchmark_group("tta_classify");
    group.sample_size(10);
    let x = random_batch(16, 3, 64, 80, 4);
    for exec in MODES {
        let mut model = ModelSpec::TinyCnn { width: 16 }.build_classifier(23, 0).unwrap();
        model.set_exec(exec);
        group.bench_function(format!("{exec:?}"), |b| b.iter(|| tta_classify_batch(&model, &x, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, segmenter_forward, hierarchical_loss, segmentation_metrics, flip_tta);
criterion_main!(benches);
