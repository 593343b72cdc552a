//! Results must not depend on how many threads do the work.

use lungsound::dataset::{synth_dataset, SynthSpec};
use lungsound::dsp::MfccConfig;
use lungsound::frames::{compose_frames, FrameSequence, SettingId};
use lungsound::rnn::{loss_and_grads, train, Architecture, Batch, ModelConfig, RnnModel, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn bits(model: &RnnModel) -> Vec<u64> {
    model.params.tensors().iter().flat_map(|t| t.iter().map(|x| x.to_bits())).collect()
}

fn sequences() -> Vec<FrameSequence> {
    synth_dataset(&SynthSpec::new(24, 3, 4))
        .unwrap()
        .iter()
        .map(|c| {
            let mut s = compose_frames(&c.cycle, &SettingId::S5.setting(), &MfccConfig::default()).unwrap();
            s.label = c.label;
            s
        })
        .collect()
}

#[test]
fn frames_gradients_and_training_ignore_thread_count() {
    let run = || {
        let seqs = sequences();
        let cfg = ModelConfig { hidden: 6, ..ModelConfig::new(Architecture::BiGru, 65, 3) };
        let model = RnnModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let batch = Batch::from_sequences(&seqs).unwrap();
        let g = loss_and_grads(&model, &batch, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let mut trained = model.clone();
        train(&mut trained, &seqs, &TrainConfig { epochs: 2, batch_size: 10, seed: 3, ..TrainConfig::default() })
            .unwrap();
        let grad_bits: Vec<u64> = g.grads.tensors().iter().flat_map(|t| t.iter().map(|x| x.to_bits())).collect();
        (seqs, g.loss.to_bits(), grad_bits, bits(&trained))
    };
    let one = in_pool(1, run);
    let four = in_pool(4, run);
    assert_eq!(one.0, four.0);
    assert_eq!(one.1, four.1);
    assert_eq!(one.2, four.2);
    assert_eq!(one.3, four.3);
}
