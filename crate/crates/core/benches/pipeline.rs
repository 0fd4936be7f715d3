use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cascade_stereo::*;

fn scene(side: usize) -> Stereogram {
    let model = DisparityModel::TwoLayer {
        foreground: 35.0,
        background: 12.0,
        x: side / 3,
        y: side / 4,
        width: side / 2,
        height: side / 2,
    };
    generate_stereogram(
        &StereogramSpec::new(side, side, model)
            .with_seed(7)
            .with_d_max(64.0),
    )
    .unwrap()
}

fn cascade(c: &mut Criterion) {
    let mut cfg = PipelineConfig::default();
    cfg.cascade.d_max = 64;
    let mut group = c.benchmark_group("run_cascade");
    group.sample_size(10);
    for side in [128usize, 256] {
        let st = scene(side);
        let run = || run_cascade(&st.left, &st.right, &cfg.features, &cfg.cascade).unwrap();

        #[cfg(feature = "parallel")]
        {
            let one = rayon::ThreadPoolBuilder::new()
                .num_threads(1)
                .build()
                .unwrap();
            group.bench_with_input(BenchmarkId::new("one_thread", side), &side, |b, _| {
                b.iter(|| one.install(run))
            });
            let label = format!("parallel_{}", rayon::current_num_threads());
            group.bench_with_input(BenchmarkId::new(label, side), &side, |b, _| b.iter(run));
        }
        #[cfg(not(feature = "parallel"))]
        group.bench_with_input(BenchmarkId::new("sequential", side), &side, |b, _| {
            b.iter(run)
        });
    }
    group.finish();
}

criterion_group!(benches, cascade);
criterion_main!(benches);
