//! Parallel vs sequential throughput on the pipeline's hot paths. With the
//! `parallel` feature off, both sides run the sequential code and should
//! coincide.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use flowlens_core::capture::PacketSample;
use flowlens_core::models::{app_forward, AppClassifier, Dataset, Sample};
use flowlens_core::par;
use flowlens_core::preprocess::{featurize, ENTRY_DIM};
use flowlens_core::synth::{default_config, gen_dataset, gen_stream, StreamEnv};
use flowlens_core::util::substream;
use rand::Rng;

fn random_samples(seed: u64, n: usize) -> Vec<PacketSample> {
    let mut rng = substream(seed, "bench/samples");
    let mut t = 0u64;
    (0..n)
        .map(|_| {
            t += rng.gen_range(1..50_000);
            PacketSample {
                ts_sec: (t / 1_000_000) as u32,
                ts_usec: (t % 1_000_000) as u32,
                outgoing: rng.gen_bool(0.5),
                size: rng.gen_range(40..1514),
            }
        })
        .collect()
}

fn bench_pooling(c: &mut Criterion) {
    let series: Vec<Vec<PacketSample>> =
        (0..64).map(|i| random_samples(i, 600)).collect();
    let mut group = c.benchmark_group("pooling_64_streams");
    group.bench_function("parallel", |b| {
        b.iter(|| par::map_collect(&series, |s| featurize(s).unwrap()))
    });
    group.bench_function("serial", |b| {
        b.iter(|| par::map_collect_serial(&series, |s| featurize(s).unwrap()))
    });
    group.finish();
}

fn bench_forward(c: &mut Criterion) {
    let mut rng = substream(5, "bench/forward");
    let model = AppClassifier::init(1, &mut rng);
    let pooled: Vec<Vec<[f64; ENTRY_DIM]>> = (0..16)
        .map(|i| featurize(&random_samples(100 + i, 400)).unwrap().entries)
        .collect();
    let mut group = c.benchmark_group("app_forward_16_streams");
    group.bench_function("parallel", |b| {
        b.iter(|| par::map_collect(&pooled, |p| app_forward(&model, p).softmax))
    });
    group.bench_function("serial", |b| {
        b.iter(|| par::map_collect_serial(&pooled, |p| app_forward(&model, p).softmax))
    });
    group.finish();
}

fn bench_stream_generation(c: &mut Criterion) {
    let config = default_config(1.0);
    let profile = &config.classes[1].profiles[0].0;
    let env = StreamEnv {
        device_ip: config.device_ip,
        server_ip: "203.0.113.11".parse().unwrap(),
        resolver_ip: config.resolver_ip,
        client_port: 4000,
        dns_ident: 1,
        start_micros: 0,
    };
    let mut group = c.benchmark_group("gen_64_streams");
    group.bench_function("parallel", |b| {
        b.iter(|| {
            par::map_indices(64, |g| {
                let mut rng = substream(g as u64, "bench/gen");
                gen_stream(profile, &env, &mut rng).records.len()
            })
        })
    });
    group.bench_function("serial", |b| {
        b.iter(|| {
            par::map_indices_serial(64, |g| {
                let mut rng = substream(g as u64, "bench/gen");
                gen_stream(profile, &env, &mut rng).records.len()
            })
        })
    });
    group.finish();
}

fn bench_dataset(c: &mut Criterion) {
    // Whole-dataset generation at a tiny scale, the synth command's core.
    let config = default_config(0.005);
    let mut group = c.benchmark_group("gen_dataset_scale_0005");
    group.sample_size(10);
    group.bench_function("default", |b| {
        b.iter_batched(
            || config.clone(),
            |cfg| gen_dataset(&cfg, 3).unwrap().pcap.len(),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

fn bench_batch_gradients(c: &mut Criterion) {
    use flowlens_core::models::app::{app_loss_grads, AppGrads};
    let mut rng = substream(9, "bench/grad");
    let model = AppClassifier::init(1, &mut rng);
    let samples: Vec<Sample> = (0..8)
        .map(|i| Sample {
            pooled: featurize(&random_samples(200 + i, 300)).unwrap().entries,
            app: (i % 5) as usize,
            activity: None,
        })
        .collect();
    let dataset = Dataset { samples };
    let mut group = c.benchmark_group("batch_gradients_8_samples");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| {
            par::map_collect(&dataset.samples, |s| {
                let mut grads = AppGrads::zeros(&model);
                let (loss, _) = app_loss_grads(&model, &s.pooled, s.app, 1.0, &mut grads);
                loss
            })
        })
    });
    group.bench_function("serial", |b| {
        b.iter(|| {
            par::map_collect_serial(&dataset.samples, |s| {
                let mut grads = AppGrads::zeros(&model);
                let (loss, _) = app_loss_grads(&model, &s.pooled, s.app, 1.0, &mut grads);
                loss
            })
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_pooling,
    bench_forward,
    bench_stream_generation,
    bench_dataset,
    bench_batch_gradients
);
criterion_main!(benches);
