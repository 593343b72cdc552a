//! Backpropagation checked against central finite differences, plus the
//! masking, degeneracy and optimizer properties of the recurrent models.

mod oracle;

use lungsound::frames::FrameSequence;
use lungsound::rnn::{
    adam_step, forward_with, loss_and_grads_with, sample_masks, AdamState, Architecture, Batch, ModelConfig,
    NormSource, ParamSet, RnnModel, SequenceMasks, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;

fn tiny(arch: Architecture, dropout: f64) -> ModelConfig {
    ModelConfig { layers: 2, hidden: 4, dropout, recurrent_dropout: dropout, ..ModelConfig::new(arch, 3, 3) }
}

fn sequences(rng: &mut ChaCha8Rng, lens: &[usize]) -> Vec<FrameSequence> {
    lens.iter()
        .enumerate()
        .map(|(i, &n)| FrameSequence {
            frames: (0..n).map(|_| (0..3).map(|_| rng.random_range(-1.5..1.5)).collect()).collect(),
            label: i % 3,
            id: format!("seq{i}"),
        })
        .collect()
}

/// Random model whose batch-norm parameters are also perturbed away from
/// their initial values, so every tensor carries a non-trivial gradient.
fn random_model(arch: Architecture, dropout: f64, rng: &mut ChaCha8Rng) -> RnnModel {
    let mut m = RnnModel::new(tiny(arch, dropout), rng).unwrap();
    for t in m.params.tensors_mut() {
        t.iter_mut().for_each(|x| *x += rng.random_range(-0.3..0.3));
    }
    m
}

fn loss(model: &RnnModel, batch: &Batch, masks: Option<&[SequenceMasks]>) -> f64 {
    loss_and_grads_with(model, batch, masks, NormSource::Batch).unwrap().loss
}

/// Worst relative error over every parameter, denominator max(|a|, |b|, 1e-8).
fn worst_gradient_error(model: &RnnModel, batch: &Batch, masks: Option<&[SequenceMasks]>) -> (f64, String) {
    let analytic = loss_and_grads_with(model, batch, masks, NormSource::Batch).unwrap().grads;
    let names = ParamSet::names(&model.config);
    let mut worst = (0.0, String::new());
    let mut probe = model.clone();
    for (t, grad) in analytic.tensors().iter().enumerate() {
        for k in 0..grad.len() {
            let orig = probe.params.tensors()[t][k];
            probe.params.tensors_mut()[t][k] = orig + EPS;
            let up = loss(&probe, batch, masks);
            probe.params.tensors_mut()[t][k] = orig - EPS;
            let down = loss(&probe, batch, masks);
            probe.params.tensors_mut()[t][k] = orig;
            let numeric = (up - down) / (2.0 * EPS);
            let err = oracle::rel_err(grad[k], numeric);
            if err > worst.0 {
                worst = (err, format!("{}[{k}]: analytic {} numeric {numeric}", names[t], grad[k]));
            }
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for arch in Architecture::ALL {
        let model = random_model(arch, 0.0, &mut rng);
        let batch = Batch::from_sequences(&sequences(&mut rng, &[5, 5])).unwrap();
        let (err, at) = worst_gradient_error(&model, &batch, None);
        assert!(err <= 1e-4, "{arch}: {err:e} at {at}");
    }
}

#[test]
fn gradients_match_with_fixed_dropout_masks() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for arch in Architecture::ALL {
        let model = random_model(arch, 0.4, &mut rng);
        let batch = Batch::from_sequences(&sequences(&mut rng, &[5, 3])).unwrap();
        let masks = sample_masks(&model, batch.len(), &mut rng);
        assert!(masks.iter().flat_map(|m| &m.cells).any(|c| c.input.contains(&0.0)));
        let (err, at) = worst_gradient_error(&model, &batch, Some(&masks));
        assert!(err <= 1e-4, "{arch}: {err:e} at {at}");
    }
}

#[test]
fn padding_changes_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for arch in Architecture::ALL {
        let mut model = random_model(arch, 0.3, &mut rng);
        model.running_mean = vec![0.2, -0.1, 0.05];
        model.running_var = vec![1.5, 0.7, 1.1];
        let batch = Batch::from_sequences(&sequences(&mut rng, &[4, 7, 2])).unwrap();
        let padded = batch.padded(10);
        let masks = sample_masks(&model, batch.len(), &mut rng);

        let eval = forward_with(&model, &batch, None, NormSource::Running).unwrap();
        let eval_p = forward_with(&model, &padded, None, NormSource::Running).unwrap();
        assert!(oracle::max_rel_err(&eval.concat(), &eval_p.concat(), 1.0) <= 1e-12);

        let a = loss_and_grads_with(&model, &batch, Some(&masks), NormSource::Batch).unwrap();
        let b = loss_and_grads_with(&model, &padded, Some(&masks), NormSource::Batch).unwrap();
        assert!((a.loss - b.loss).abs() <= 1e-12);
        for (x, y) in a.grads.tensors().iter().zip(b.grads.tensors()) {
            assert!(x.iter().zip(y).all(|(p, q)| (p - q).abs() <= 1e-12));
        }
    }
}

#[test]
fn zero_backward_direction_reproduces_unidirectional() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for (uni_arch, bi_arch) in [(Architecture::Lstm, Architecture::BiLstm), (Architecture::Gru, Architecture::BiGru)] {
        let uni = random_model(uni_arch, 0.0, &mut rng);
        let mut bi = RnnModel::zeros(tiny(bi_arch, 0.0)).unwrap();
        let h = 4;
        bi.params.bn_gamma = uni.params.bn_gamma.clone();
        bi.params.bn_beta = uni.params.bn_beta.clone();
        for l in 0..2 {
            let (src, dst) = (&uni.params.cells[l], &mut bi.params.cells[2 * l]);
            dst.u = src.u.clone();
            dst.b = src.b.clone();
            for r in 0..src.w.rows {
                // Layer-2 inputs are [forward, backward]; only the forward half is used.
                dst.w.row_mut(r)[..src.w.cols].copy_from_slice(src.w.row(r));
            }
        }
        for r in 0..3 {
            bi.params.dense_w.row_mut(r)[..h].copy_from_slice(uni.params.dense_w.row(r));
        }
        bi.params.dense_b = uni.params.dense_b.clone();
        let batch = Batch::from_sequences(&sequences(&mut rng, &[6, 3])).unwrap();
        let a = forward_with(&uni, &batch, None, NormSource::Running).unwrap();
        let b = forward_with(&bi, &batch, None, NormSource::Running).unwrap();
        assert_eq!(a, b, "{bi_arch}");
    }
}

#[test]
fn train_mode_without_dropout_and_frozen_stats_equals_eval() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for arch in Architecture::ALL {
        let model = random_model(arch, 0.0, &mut rng);
        let batch = Batch::from_sequences(&sequences(&mut rng, &[3, 5])).unwrap();
        let masks = sample_masks(&model, batch.len(), &mut rng);
        assert!(masks.iter().flat_map(|m| &m.cells).all(|c| c.input.iter().chain(&c.recurrent).all(|&v| v == 1.0)));
        let train = forward_with(&model, &batch, Some(&masks), NormSource::Running).unwrap();
        let eval = forward_with(&model, &batch, None, NormSource::Running).unwrap();
        assert!(oracle::max_rel_err(&train.concat(), &eval.concat(), 1.0) <= 1e-12);
    }
}

#[test]
fn adam_zero_gradient_and_scalar_recursion() {
    let cfg = ModelConfig { layers: 1, hidden: 1, ..ModelConfig::new(Architecture::Gru, 1, 2) };
    let tc = TrainConfig::default();

    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let mut params = ParamSet::init(&cfg, &mut rng);
    let before = params.clone();
    let mut zero = params.clone();
    zero.scale(0.0);
    let mut state = AdamState::new(&params);
    adam_step(&mut params, &zero, &mut state, &tc);
    assert_eq!(params, before);

    // f(θ) = θ² from θ = 1, against a hand-rolled scalar Adam.
    let mut p = ParamSet::zeros(&cfg);
    p.dense_b[0] = 1.0;
    let mut state = AdamState::new(&p);
    let (mut theta, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
    for t in 1..=100 {
        let mut g = ParamSet::zeros(&cfg);
        g.dense_b[0] = 2.0 * p.dense_b[0];
        adam_step(&mut p, &g, &mut state, &tc);
        let grad = 2.0 * theta;
        m = 0.9 * m + 0.1 * grad;
        v = 0.999 * v + 0.001 * grad * grad;
        let (mh, vh) = (m / (1.0 - 0.9f64.powi(t)), v / (1.0 - 0.999f64.powi(t)));
        theta -= 0.002 * mh / (vh.sqrt() + 1e-8);
    }
    assert!((p.dense_b[0] - theta).abs() < 1e-12);
    assert!(theta.abs() < 1.0);
    assert_eq!(state.t, 100);
}
