//! Parallel versus single-thread throughput of the two hot paths: frame
//! composition over a dataset and one mini-batch gradient.
//!
//! The "parallel" variants use the global rayon pool; the "sequential" ones
//! run the same code inside a one-thread pool. Build with
//! `--no-default-features` to measure the plain sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lungsound::dataset::{synth_dataset, SynthSpec};
use lungsound::dsp::MfccConfig;
use lungsound::frames::{compose_frames, FrameSequence, SettingId};
use lungsound::rnn::{loss_and_grads, Architecture, Batch, ModelConfig, RnnModel};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let all = rayon::current_num_threads();
    vec![
        ("sequential", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("parallel", rayon::ThreadPoolBuilder::new().num_threads(all).build().unwrap()),
    ]
}

fn compose_all(c: &mut Criterion) {
    let cycles = synth_dataset(&SynthSpec::new(64, 4, 1)).unwrap();
    let cfg = MfccConfig::default();
    let mut group = c.benchmark_group("compose_frames");
    for id in [SettingId::S3, SettingId::S7] {
        let setting = id.setting();
        for (name, pool) in pools() {
            group.bench_with_input(BenchmarkId::new(name, id), &setting, |b, s| {
                b.iter(|| pool.install(|| lungsound::par::map(&cycles, |c| compose_frames(&c.cycle, s, &cfg).unwrap())))
            });
        }
    }
    group.finish();
}

fn gradients(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = MfccConfig::default();
    let seqs: Vec<FrameSequence> = synth_dataset(&SynthSpec::new(32, 2, 3))
        .unwrap()
        .iter()
        .map(|c| {
            let mut s = compose_frames(&c.cycle, &SettingId::S5.setting(), &cfg).unwrap();
            s.label = c.label;
            s
        })
        .collect();
    let batch = Batch::from_sequences(&seqs).unwrap();
    let mut group = c.benchmark_group("loss_and_grads");
    group.sample_size(10);
    for arch in [Architecture::Lstm, Architecture::BiGru] {
        let model_cfg = ModelConfig { hidden: 64, ..ModelConfig::new(arch, 65, 2) };
        let model = RnnModel::new(model_cfg, &mut rng).unwrap();
        for (name, pool) in pools() {
            group.bench_function(BenchmarkId::new(name, arch), |b| {
                b.iter(|| pool.install(|| loss_and_grads(&model, &batch, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, compose_all, gradients);
criterion_main!(benches);
