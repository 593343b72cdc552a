use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::network::{argmax, loss_and_grads, Batch, BN_MOMENTUM};
use super::params::ParamSet;
use super::{RnnError, RnnModel, TrainConfig};
use crate::frames::FrameSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean cross-entropy over the batches of the epoch, weighted by size.
    pub loss: f64,
    /// Accuracy of the train-mode predictions made during the epoch.
    pub accuracy: f64,
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`. Returns
/// the norm before clipping.
pub fn clip_global_norm(grads: &mut ParamSet, max_norm: f64) -> f64 {
    let norm = grads.l2_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

fn check_data(model: &RnnModel, data: &[FrameSequence]) -> Result<(), RnnError> {
    if data.is_empty() {
        return Err(RnnError::EmptyDataset);
    }
    let expected = model.config.n_features;
    for (index, s) in data.iter().enumerate() {
        if let Some(f) = s.frames.iter().find(|f| f.len() != expected) {
            return Err(RnnError::InconsistentFeatureDim { index, expected, found: f.len() });
        }
        if s.is_empty() {
            return Err(RnnError::ShapeMismatch(format!("sequence {index} is empty")));
        }
        if s.label >= model.config.n_classes {
            return Err(RnnError::LabelOutOfRange { label: s.label, n_classes: model.config.n_classes });
        }
    }
    Ok(())
}

/// Trains for `cfg.epochs` epochs and returns the per-epoch history.
pub fn train(model: &mut RnnModel, data: &[FrameSequence], cfg: &TrainConfig) -> Result<Vec<EpochStats>, RnnError> {
    train_with_callback(model, data, cfg, |_, _| ControlFlow::Continue(()))
}

/// Like [`train`], calling `on_epoch` after every epoch; `Break` stops early.
pub fn train_with_callback<F>(
    model: &mut RnnModel,
    data: &[FrameSequence],
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<Vec<EpochStats>, RnnError>
where
    F: FnMut(&EpochStats, &RnnModel) -> ControlFlow<()>,
{
    cfg.validate()?;
    check_data(model, data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(&model.params);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let seqs: Vec<&FrameSequence> = chunk.iter().map(|&i| &data[i]).collect();
            let batch = Batch::new(&seqs)?;
            let mut out = match loss_and_grads(model, &batch, &mut rng) {
                Err(RnnError::DegenerateBatch(n)) => {
                    log::debug!("epoch {epoch}: skipping batch with {n} frame(s)");
                    continue;
                }
                other => other?,
            };
            if !out.loss.is_finite() || !out.grads.all_finite() {
                return Err(RnnError::NumericFailure { epoch });
            }
            if let Some(max) = cfg.clip_norm {
                clip_global_norm(&mut out.grads, max);
            }
            adam_step(&mut model.params, &out.grads, &mut adam, cfg);
            if let Some((mean, var)) = &out.batch_stats {
                for j in 0..mean.len() {
                    model.running_mean[j] = BN_MOMENTUM * model.running_mean[j] + (1.0 - BN_MOMENTUM) * mean[j];
                    model.running_var[j] = BN_MOMENTUM * model.running_var[j] + (1.0 - BN_MOMENTUM) * var[j];
                }
            }
            loss_sum += out.loss * chunk.len() as f64;
            correct += out.probs.iter().zip(batch.labels()).filter(|(p, &l)| argmax(p) == l).count();
            seen += chunk.len();
        }
        if !model.params.all_finite() {
            return Err(RnnError::NumericFailure { epoch });
        }
        let stats = if seen == 0 {
            EpochStats { epoch, loss: f64::NAN, accuracy: 0.0 }
        } else {
            EpochStats { epoch, loss: loss_sum / seen as f64, accuracy: correct as f64 / seen as f64 }
        };
        log::info!("epoch {epoch}: loss {:.5} accuracy {:.4}", stats.loss, stats.accuracy);
        let flow = on_epoch(&stats, model);
        history.push(stats);
        if flow.is_break() {
            break;
        }
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rnn::{Architecture, ModelConfig};

    fn toy(n: usize) -> Vec<FrameSequence> {
        // Class decided by the sign of the first feature at the last step.
        (0..n)
            .map(|i| {
                let label = i % 2;
                let len = 2 + i % 3;
                let mut frames: Vec<Vec<f64>> = (0..len).map(|t| vec![((i * 7 + t) % 5) as f64 * 0.1, 0.3]).collect();
                frames[len - 1][0] = if label == 1 { 1.0 } else { -1.0 };
                FrameSequence { frames, label, id: format!("s{i}") }
            })
            .collect()
    }

    fn cfg() -> ModelConfig {
        ModelConfig {
            hidden: 6,
            layers: 1,
            dropout: 0.1,
            recurrent_dropout: 0.1,
            ..ModelConfig::new(Architecture::Gru, 2, 2)
        }
    }

    #[test]
    fn clip_scales_to_bound() {
        let mut g = ParamSet::zeros(&cfg());
        g.dense_b = vec![3.0, 4.0];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g.l2_norm() - 1.0).abs() < 1e-15);
        assert_eq!(clip_global_norm(&mut g, 2.0), g.l2_norm());
    }

    #[test]
    fn learns_toy_problem() {
        let data = toy(40);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = RnnModel::new(cfg(), &mut rng).unwrap();
        let tc = TrainConfig { epochs: 60, batch_size: 8, learning_rate: 0.02, ..TrainConfig::default() };
        let hist = train(&mut model, &data, &tc).unwrap();
        assert_eq!(hist.len(), 60);
        assert!(hist.iter().all(|h| h.loss.is_finite()));
        assert!(hist.last().unwrap().loss < hist[0].loss);
        assert!(hist.last().unwrap().accuracy >= 0.9, "{:?}", hist.last());
    }

    #[test]
    fn deterministic_per_seed() {
        let data = toy(20);
        let tc = TrainConfig { epochs: 3, batch_size: 6, seed: 11, ..TrainConfig::default() };
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut m = RnnModel::new(cfg(), &mut rng).unwrap();
            let h = train(&mut m, &data, &tc).unwrap();
            (m, h)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn callback_can_stop() {
        let data = toy(10);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut m = RnnModel::new(cfg(), &mut rng).unwrap();
        let hist = train_with_callback(&mut m, &data, &TrainConfig { epochs: 50, ..TrainConfig::default() }, |s, _| {
            if s.epoch == 2 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })
        .unwrap();
        assert_eq!(hist.len(), 2);
    }

    #[test]
    fn input_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut m = RnnModel::new(cfg(), &mut rng).unwrap();
        let tc = TrainConfig::default();
        assert_eq!(train(&mut m, &[], &tc), Err(RnnError::EmptyDataset));
        let mut data = toy(4);
        data[2].frames[0] = vec![0.0; 3];
        assert_eq!(
            train(&mut m, &data, &tc),
            Err(RnnError::InconsistentFeatureDim { index: 2, expected: 2, found: 3 })
        );
    }
}
