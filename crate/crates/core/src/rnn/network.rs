use rand::Rng;

use super::cell::{gru_backward, gru_forward, lstm_backward, lstm_forward, CellMasks, GruCache, LstmCache};
use super::params::{axpy, ParamSet};
use super::{CellKind, RnnError, RnnModel};
use crate::frames::FrameSequence;

/// Variance guard inside batch normalization.
pub const BN_EPSILON: f64 = 1e-8;
/// Weight of the previous running statistic in each update.
pub const BN_MOMENTUM: f64 = 0.99;

/// Sequences per gradient partial sum. Fixed, so the reduction tree does not
/// depend on the thread count.
const GRAD_CHUNK: usize = 4;

/// Zero-padded mini-batch, `batch × max_len × n_features` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    features: Vec<f64>,
    lengths: Vec<usize>,
    labels: Vec<usize>,
    max_len: usize,
    n_features: usize,
}

impl Batch {
    /// Pads every sequence to the longest one.
    pub fn new(seqs: &[&FrameSequence]) -> Result<Self, RnnError> {
        let max_len = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        Self::with_max_len(seqs, max_len)
    }

    pub fn from_sequences(seqs: &[FrameSequence]) -> Result<Self, RnnError> {
        Self::new(&seqs.iter().collect::<Vec<_>>())
    }

    /// Pads every sequence to `max_len` steps.
    pub fn with_max_len(seqs: &[&FrameSequence], max_len: usize) -> Result<Self, RnnError> {
        let n_features = seqs.first().map_or(0, |s| s.n_features());
        let mut features = vec![0.0; seqs.len() * max_len * n_features];
        for (b, s) in seqs.iter().enumerate() {
            if s.is_empty() {
                return Err(RnnError::ShapeMismatch(format!("sequence {b} is empty")));
            }
            if s.len() > max_len {
                return Err(RnnError::ShapeMismatch(format!("sequence {b} longer than max_len {max_len}")));
            }
            for (t, frame) in s.frames.iter().enumerate() {
                if frame.len() != n_features {
                    return Err(RnnError::InconsistentFeatureDim {
                        index: b,
                        expected: n_features,
                        found: frame.len(),
                    });
                }
                let at = (b * max_len + t) * n_features;
                features[at..at + n_features].copy_from_slice(frame);
            }
        }
        Ok(Self {
            features,
            lengths: seqs.iter().map(|s| s.len()).collect(),
            labels: seqs.iter().map(|s| s.label).collect(),
            max_len,
            n_features,
        })
    }

    /// Same batch with `extra` more padding steps.
    pub fn padded(&self, extra: usize) -> Self {
        let max_len = self.max_len + extra;
        let f = self.n_features;
        let mut features = vec![0.0; self.len() * max_len * f];
        for b in 0..self.len() {
            let src = &self.features[b * self.max_len * f..(b + 1) * self.max_len * f];
            features[b * max_len * f..b * max_len * f + src.len()].copy_from_slice(src);
        }
        Self { features, max_len, ..self.clone() }
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn step(&self, b: usize, t: usize) -> &[f64] {
        let at = (b * self.max_len + t) * self.n_features;
        &self.features[at..at + self.n_features]
    }

    fn valid_positions(&self) -> usize {
        self.lengths.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Which statistics batch normalization uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormSource {
    Batch,
    Running,
}

/// Dropout masks of one sequence, one entry per cell (`layer * dirs + dir`).
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMasks {
    pub cells: Vec<CellMasks>,
}

fn sample_mask<R: Rng>(n: usize, p: f64, rng: &mut R) -> Vec<f64> {
    if p == 0.0 {
        return vec![1.0; n];
    }
    let keep = 1.0 / (1.0 - p);
    (0..n).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect()
}

/// Samples per-sequence dropout masks for every sequence of a batch.
pub fn sample_masks<R: Rng>(model: &RnnModel, batch_len: usize, rng: &mut R) -> Vec<SequenceMasks> {
    let cfg = &model.config;
    (0..batch_len)
        .map(|_| SequenceMasks {
            cells: (0..cfg.layers * cfg.directions())
                .map(|c| CellMasks {
                    input: sample_mask(cfg.layer_input(c / cfg.directions()), cfg.dropout, rng),
                    recurrent: sample_mask(cfg.hidden, cfg.recurrent_dropout, rng),
                })
                .collect(),
        })
        .collect()
}

struct Normalized {
    /// Normalized inputs of each sequence over its real steps.
    seqs: Vec<Vec<Vec<f64>>>,
    xhat: Vec<Vec<Vec<f64>>>,
    mean: Vec<f64>,
    var: Vec<f64>,
}

fn normalize(model: &RnnModel, batch: &Batch, source: NormSource) -> Result<Normalized, RnnError> {
    let f = batch.n_features();
    if f != model.config.n_features {
        return Err(RnnError::ShapeMismatch(format!(
            "batch has {f} features, model expects {}",
            model.config.n_features
        )));
    }
    let (mean, var) = match source {
        NormSource::Running => (model.running_mean.clone(), model.running_var.clone()),
        NormSource::Batch => {
            let n = batch.valid_positions();
            if n < 2 {
                return Err(RnnError::DegenerateBatch(n));
            }
            let mut mean = vec![0.0; f];
            for b in 0..batch.len() {
                for t in 0..batch.lengths[b] {
                    axpy(1.0, batch.step(b, t), &mut mean);
                }
            }
            mean.iter_mut().for_each(|m| *m /= n as f64);
            let mut var = vec![0.0; f];
            for b in 0..batch.len() {
                for t in 0..batch.lengths[b] {
                    for (j, x) in batch.step(b, t).iter().enumerate() {
                        var[j] += (x - mean[j]) * (x - mean[j]);
                    }
                }
            }
            var.iter_mut().for_each(|v| *v /= n as f64);
            (mean, var)
        }
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
    let p = &model.params;
    let mut seqs = Vec::with_capacity(batch.len());
    let mut xhat = Vec::with_capacity(batch.len());
    for b in 0..batch.len() {
        let xh: Vec<Vec<f64>> = (0..batch.lengths[b])
            .map(|t| batch.step(b, t).iter().enumerate().map(|(j, x)| (x - mean[j]) * inv_std[j]).collect())
            .collect();
        seqs.push(
            xh.iter()
                .map(|row: &Vec<f64>| row.iter().enumerate().map(|(j, v)| p.bn_gamma[j] * v + p.bn_beta[j]).collect())
                .collect(),
        );
        xhat.push(xh);
    }
    Ok(Normalized { seqs, xhat, mean, var })
}

/// Per-feature (mean, variance).
pub type FeatureStats = (Vec<f64>, Vec<f64>);

/// Batch normalization of the input features. Padding stays zero. Returns
/// the normalized batch and, for batch statistics, the (mean, variance) used.
pub fn batch_norm_inputs(
    model: &RnnModel,
    batch: &Batch,
    source: NormSource,
) -> Result<(Batch, Option<FeatureStats>), RnnError> {
    let norm = normalize(model, batch, source)?;
    let mut out = batch.clone();
    out.features.iter_mut().for_each(|x| *x = 0.0);
    let f = batch.n_features();
    for (b, seq) in norm.seqs.iter().enumerate() {
        for (t, row) in seq.iter().enumerate() {
            let at = (b * batch.max_len + t) * f;
            out.features[at..at + f].copy_from_slice(row);
        }
    }
    let stats = (source == NormSource::Batch).then_some((norm.mean, norm.var));
    Ok((out, stats))
}

enum StepCache {
    Lstm(LstmCache),
    Gru(GruCache),
}

struct DirPass {
    /// Caches in processing order (reversed time for the backward direction).
    caches: Vec<StepCache>,
    /// Hidden output indexed by time.
    outputs: Vec<Vec<f64>>,
}

struct Trace {
    /// `layers[l][dir]`
    layers: Vec<Vec<DirPass>>,
    summary: Vec<f64>,
    log_probs: Vec<f64>,
}

fn run_direction(
    model: &RnnModel,
    layer: usize,
    dir: usize,
    inputs: &[Vec<f64>],
    masks: Option<&CellMasks>,
    keep: bool,
) -> DirPass {
    let cell = model.cell(layer, dir);
    let h = model.config.hidden;
    let t_len = inputs.len();
    let mut outputs = vec![Vec::new(); t_len];
    let mut caches = Vec::with_capacity(if keep { t_len } else { 0 });
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    for step in 0..t_len {
        let t = if dir == 0 { step } else { t_len - 1 - step };
        match model.config.cell {
            CellKind::Lstm => {
                let (h_new, c_new, cache) = lstm_forward(cell, &inputs[t], &h_prev, &c_prev, masks);
                if keep {
                    caches.push(StepCache::Lstm(cache));
                }
                h_prev = h_new;
                c_prev = c_new;
            }
            CellKind::Gru => {
                let (h_new, cache) = gru_forward(cell, &inputs[t], &h_prev, masks);
                if keep {
                    caches.push(StepCache::Gru(cache));
                }
                h_prev = h_new;
            }
        }
        outputs[t] = h_prev.clone();
    }
    DirPass { caches, outputs }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

fn forward_sequence(model: &RnnModel, inputs: &[Vec<f64>], masks: Option<&SequenceMasks>, keep: bool) -> Trace {
    let cfg = &model.config;
    let dirs = cfg.directions();
    let h = cfg.hidden;
    let t_len = inputs.len();
    let mut layers: Vec<Vec<DirPass>> = Vec::with_capacity(cfg.layers);
    let mut current: Vec<Vec<f64>> = inputs.to_vec();
    for l in 0..cfg.layers {
        let passes: Vec<DirPass> = (0..dirs)
            .map(|d| run_direction(model, l, d, &current, masks.map(|m| &m.cells[l * dirs + d]), keep))
            .collect();
        current = (0..t_len).map(|t| passes.iter().flat_map(|p| p.outputs[t].iter().copied()).collect()).collect();
        layers.push(passes);
    }
    let top = &layers[cfg.layers - 1];
    let mut summary = top[0].outputs[t_len - 1].clone();
    if dirs == 2 {
        summary.extend_from_slice(&top[1].outputs[0]);
    }
    debug_assert_eq!(summary.len(), h * dirs);
    let mut logits = model.params.dense_b.clone();
    model.params.dense_w.matvec_acc(&summary, &mut logits);
    Trace { layers, summary, log_probs: log_softmax(&logits) }
}

/// Backpropagates `dlogits` through one sequence, accumulating into `grad`.
/// Returns the gradient with respect to the normalized inputs.
fn backward_sequence(
    model: &RnnModel,
    trace: &Trace,
    dlogits: &[f64],
    masks: Option<&SequenceMasks>,
    grad: &mut ParamSet,
) -> Vec<Vec<f64>> {
    let cfg = &model.config;
    let dirs = cfg.directions();
    let h = cfg.hidden;
    let t_len = trace.layers[0][0].outputs.len();

    grad.dense_w.outer_rows_acc(0..cfg.n_classes, dlogits, &trace.summary);
    axpy(1.0, dlogits, &mut grad.dense_b);
    let mut dsummary = vec![0.0; h * dirs];
    model.params.dense_w.tmatvec_rows_acc(0..cfg.n_classes, dlogits, &mut dsummary);

    let mut d_out = vec![vec![0.0; h * dirs]; t_len];
    d_out[t_len - 1][..h].copy_from_slice(&dsummary[..h]);
    if dirs == 2 {
        d_out[0][h..].copy_from_slice(&dsummary[h..]);
    }

    for l in (0..cfg.layers).rev() {
        let mut d_in = vec![vec![0.0; cfg.layer_input(l)]; t_len];
        for d in 0..dirs {
            let idx = l * dirs + d;
            let cell = &model.params.cells[idx];
            let cell_masks = masks.map(|m| &m.cells[idx]);
            let cell_grad = &mut grad.cells[idx];
            let pass = &trace.layers[l][d];
            let mut dh_next = vec![0.0; h];
            let mut dc_next = vec![0.0; h];
            for step in (0..t_len).rev() {
                let t = if d == 0 { step } else { t_len - 1 - step };
                let mut dh = d_out[t][d * h..(d + 1) * h].to_vec();
                axpy(1.0, &dh_next, &mut dh);
                let dx = match &pass.caches[step] {
                    StepCache::Lstm(cache) => {
                        let (dx, dh_prev, dc_prev) = lstm_backward(cell, cache, &dh, &dc_next, cell_masks, cell_grad);
                        dh_next = dh_prev;
                        dc_next = dc_prev;
                        dx
                    }
                    StepCache::Gru(cache) => {
                        let (dx, dh_prev) = gru_backward(cell, cache, &dh, cell_masks, cell_grad);
                        dh_next = dh_prev;
                        dx
                    }
                };
                axpy(1.0, &dx, &mut d_in[t]);
            }
        }
        d_out = d_in;
    }
    d_out
}

fn check_masks(model: &RnnModel, batch: &Batch, masks: Option<&[SequenceMasks]>) -> Result<(), RnnError> {
    if let Some(m) = masks {
        let cells = model.config.layers * model.config.directions();
        if m.len() != batch.len() || m.iter().any(|s| s.cells.len() != cells) {
            return Err(RnnError::ShapeMismatch("dropout masks do not match batch/model".into()));
        }
    }
    Ok(())
}

/// Class probabilities with explicit dropout masks and normalization source.
pub fn forward_with(
    model: &RnnModel,
    batch: &Batch,
    masks: Option<&[SequenceMasks]>,
    source: NormSource,
) -> Result<Vec<Vec<f64>>, RnnError> {
    check_masks(model, batch, masks)?;
    let norm = normalize(model, batch, source)?;
    Ok(crate::par::map_range(batch.len(), |b| {
        let trace = forward_sequence(model, &norm.seqs[b], masks.map(|m| &m[b]), false);
        trace.log_probs.iter().map(|v| v.exp()).collect()
    }))
}

/// Class probabilities, one row per sequence. Train mode samples dropout
/// masks from `rng` and normalizes with batch statistics.
pub fn forward<R: Rng>(model: &RnnModel, batch: &Batch, mode: Mode, rng: &mut R) -> Result<Vec<Vec<f64>>, RnnError> {
    match mode {
        Mode::Eval => forward_with(model, batch, None, NormSource::Running),
        Mode::Train => {
            let masks = sample_masks(model, batch.len(), rng);
            forward_with(model, batch, Some(&masks), NormSource::Batch)
        }
    }
}

pub fn forward_eval(model: &RnnModel, batch: &Batch) -> Result<Vec<Vec<f64>>, RnnError> {
    forward_with(model, batch, None, NormSource::Running)
}

#[derive(Debug, Clone)]
pub struct LossAndGrads {
    /// Mean cross-entropy over the batch.
    pub loss: f64,
    pub grads: ParamSet,
    pub probs: Vec<Vec<f64>>,
    /// Batch statistics, present when normalizing with them.
    pub batch_stats: Option<(Vec<f64>, Vec<f64>)>,
}

/// Loss and exact gradients with the given masks and normalization source.
pub fn loss_and_grads_with(
    model: &RnnModel,
    batch: &Batch,
    masks: Option<&[SequenceMasks]>,
    source: NormSource,
) -> Result<LossAndGrads, RnnError> {
    check_masks(model, batch, masks)?;
    let n_classes = model.config.n_classes;
    if let Some(&label) = batch.labels.iter().find(|&&l| l >= n_classes) {
        return Err(RnnError::LabelOutOfRange { label, n_classes });
    }
    if batch.is_empty() {
        return Err(RnnError::ShapeMismatch("empty batch".into()));
    }
    let norm = normalize(model, batch, source)?;
    let scale = 1.0 / batch.len() as f64;

    let chunks: Vec<std::ops::Range<usize>> =
        (0..batch.len()).step_by(GRAD_CHUNK).map(|s| s..(s + GRAD_CHUNK).min(batch.len())).collect();
    let partials = crate::par::map(&chunks, |range| {
        let mut grad = ParamSet::zeros(&model.config);
        let mut per_seq = Vec::with_capacity(range.len());
        for b in range.clone() {
            let seq_masks = masks.map(|m| &m[b]);
            let trace = forward_sequence(model, &norm.seqs[b], seq_masks, true);
            let label = batch.labels[b];
            let probs: Vec<f64> = trace.log_probs.iter().map(|v| v.exp()).collect();
            let mut dlogits: Vec<f64> = probs.iter().map(|p| p * scale).collect();
            dlogits[label] -= scale;
            let d_inputs = backward_sequence(model, &trace, &dlogits, seq_masks, &mut grad);
            per_seq.push((-trace.log_probs[label], probs, d_inputs));
        }
        (grad, per_seq)
    });

    let mut grads = ParamSet::zeros(&model.config);
    let mut loss = 0.0;
    let mut probs = Vec::with_capacity(batch.len());
    let mut b = 0;
    for (grad, per_seq) in partials {
        grads.add_assign(&grad);
        for (nll, p, d_inputs) in per_seq {
            loss += nll;
            probs.push(p);
            for (dy, xh) in d_inputs.iter().zip(&norm.xhat[b]) {
                for j in 0..dy.len() {
                    grads.bn_gamma[j] += dy[j] * xh[j];
                    grads.bn_beta[j] += dy[j];
                }
            }
            b += 1;
        }
    }
    let batch_stats = (source == NormSource::Batch).then_some((norm.mean, norm.var));
    Ok(LossAndGrads { loss: loss * scale, grads, probs, batch_stats })
}

/// Train-mode loss and gradients: masks sampled from `rng`, batch
/// statistics for normalization.
pub fn loss_and_grads<R: Rng>(model: &RnnModel, batch: &Batch, rng: &mut R) -> Result<LossAndGrads, RnnError> {
    let masks = sample_masks(model, batch.len(), rng);
    loss_and_grads_with(model, batch, Some(&masks), NormSource::Batch)
}

/// Index of the largest probability; ties go to the lowest index.
pub(crate) fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Eval-mode prediction for one sequence: (class, probabilities).
pub fn predict(model: &RnnModel, seq: &FrameSequence) -> Result<(usize, Vec<f64>), RnnError> {
    let batch = Batch::new(&[seq])?;
    let probs = forward_eval(model, &batch)?.pop().expect("one row per sequence");
    Ok((argmax(&probs), probs))
}

/// Eval-mode predictions for many sequences.
pub fn predict_many(model: &RnnModel, seqs: &[FrameSequence]) -> Result<Vec<(usize, Vec<f64>)>, RnnError> {
    crate::par::map(seqs, |s| predict(model, s)).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rnn::{Architecture, ModelConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seq(frames: Vec<Vec<f64>>, label: usize) -> FrameSequence {
        FrameSequence { frames, label, id: String::new() }
    }

    fn random_batch(rng: &mut ChaCha8Rng, lens: &[usize], f: usize, classes: usize) -> Vec<FrameSequence> {
        lens.iter()
            .enumerate()
            .map(|(i, &n)| {
                seq((0..n).map(|_| (0..f).map(|_| rng.random_range(-2.0..2.0)).collect()).collect(), i % classes)
            })
            .collect()
    }

    fn tiny(arch: Architecture) -> ModelConfig {
        ModelConfig { hidden: 4, layers: 2, dropout: 0.0, recurrent_dropout: 0.0, ..ModelConfig::new(arch, 3, 3) }
    }

    #[test]
    fn argmax_rules() {
        assert_eq!(argmax(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn rows_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for arch in Architecture::ALL {
            let model = RnnModel::new(tiny(arch), &mut rng).unwrap();
            let data = random_batch(&mut rng, &[3, 5, 1, 4], 3, 3);
            let batch = Batch::from_sequences(&data).unwrap();
            for mode in [Mode::Train, Mode::Eval] {
                for row in forward(&model, &batch, mode, &mut rng).unwrap() {
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                    assert!(row.iter().all(|&p| p > 0.0 && p < 1.0));
                }
            }
        }
    }

    #[test]
    fn zero_model_is_uniform() {
        let model = RnnModel::zeros(ModelConfig { n_classes: 4, ..tiny(Architecture::BiGru) }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch = Batch::from_sequences(&random_batch(&mut rng, &[2, 6], 3, 4)).unwrap();
        for row in forward_eval(&model, &batch).unwrap() {
            assert!(row.iter().all(|&p| (p - 0.25).abs() < 1e-12));
        }
        let out = loss_and_grads_with(&model, &batch, None, NormSource::Batch).unwrap();
        assert!((out.loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn eval_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = RnnModel::new(tiny(Architecture::Lstm), &mut rng).unwrap();
        let batch = Batch::from_sequences(&random_batch(&mut rng, &[4, 2, 7], 3, 3)).unwrap();
        assert_eq!(forward_eval(&model, &batch).unwrap(), forward_eval(&model, &batch).unwrap());
    }

    #[test]
    fn batch_norm_train_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = RnnModel::zeros(tiny(Architecture::Lstm)).unwrap();
        let data = random_batch(&mut rng, &[5, 3, 8], 3, 3);
        let batch = Batch::from_sequences(&data).unwrap();
        let (out, stats) = batch_norm_inputs(&model, &batch, NormSource::Batch).unwrap();
        assert!(stats.is_some());
        let n = 16.0;
        for j in 0..3 {
            let vals: Vec<f64> = (0..3)
                .flat_map(|b| (0..out.lengths()[b]).map(move |t| (b, t)))
                .map(|(b, t)| out.step(b, t)[j])
                .collect();
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-6 && (var - 1.0).abs() < 1e-6, "{mean} {var}");
        }
        // Padding rows stay zero.
        for b in 0..3 {
            for t in out.lengths()[b]..out.max_len() {
                assert!(out.step(b, t).iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn batch_norm_ignores_padding() {
        // Statistics over padded rows must equal statistics over the bare
        // concatenated frames.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = RnnModel::zeros(tiny(Architecture::Lstm)).unwrap();
        let data = random_batch(&mut rng, &[2, 9, 4], 3, 3);
        let (_, stats) = batch_norm_inputs(&model, &Batch::from_sequences(&data).unwrap(), NormSource::Batch).unwrap();
        let (mean, var) = stats.unwrap();
        let flat: Vec<&Vec<f64>> = data.iter().flat_map(|s| &s.frames).collect();
        for j in 0..3 {
            let m = flat.iter().map(|r| r[j]).sum::<f64>() / flat.len() as f64;
            let v = flat.iter().map(|r| (r[j] - m) * (r[j] - m)).sum::<f64>() / flat.len() as f64;
            assert!((m - mean[j]).abs() < 1e-12 && (v - var[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_norm_identity_with_unit_running_stats() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = RnnModel::zeros(tiny(Architecture::Gru)).unwrap();
        let batch = Batch::from_sequences(&random_batch(&mut rng, &[3, 3], 3, 3)).unwrap();
        let (out, stats) = batch_norm_inputs(&model, &batch, NormSource::Running).unwrap();
        assert!(stats.is_none());
        for (a, b) in out.features.iter().zip(&batch.features) {
            assert!((a - b).abs() <= 1e-8 * b.abs());
        }
    }

    #[test]
    fn degenerate_batch() {
        let model = RnnModel::zeros(tiny(Architecture::Lstm)).unwrap();
        let batch = Batch::from_sequences(&[seq(vec![vec![1.0, 2.0, 3.0]], 0)]).unwrap();
        assert_eq!(batch_norm_inputs(&model, &batch, NormSource::Batch).unwrap_err(), RnnError::DegenerateBatch(1));
    }

    #[test]
    fn label_and_shape_errors() {
        let model = RnnModel::zeros(tiny(Architecture::Lstm)).unwrap();
        let bad_label = Batch::from_sequences(&[seq(vec![vec![0.0; 3]; 2], 7)]).unwrap();
        assert!(matches!(
            loss_and_grads_with(&model, &bad_label, None, NormSource::Batch),
            Err(RnnError::LabelOutOfRange { label: 7, n_classes: 3 })
        ));
        let bad_dim = Batch::from_sequences(&[seq(vec![vec![0.0; 5]; 2], 0)]).unwrap();
        assert!(matches!(forward_eval(&model, &bad_dim), Err(RnnError::ShapeMismatch(_))));
        assert!(Batch::from_sequences(&[seq(vec![vec![0.0; 3], vec![0.0; 2]], 0)]).is_err());
    }

    #[test]
    fn confident_model_has_vanishing_gradient() {
        // Dense bias dominates: log-probability of the true class is 0 in
        // floating point.
        let cfg = ModelConfig { n_classes: 2, ..tiny(Architecture::Lstm) };
        let mut model = RnnModel::zeros(cfg).unwrap();
        model.params.dense_b = vec![800.0, -800.0];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut data = random_batch(&mut rng, &[3, 4], 3, 1);
        data.iter_mut().for_each(|s| s.label = 0);
        let out = loss_and_grads_with(&model, &Batch::from_sequences(&data).unwrap(), None, NormSource::Batch).unwrap();
        assert!(out.loss.abs() < 1e-12);
        assert!(out.grads.l2_norm() <= 1e-6);
    }

    #[test]
    fn predict_matches_forward_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for i in 0..50 {
            let arch = Architecture::ALL[i % 4];
            let model = RnnModel::new(tiny(arch), &mut rng).unwrap();
            let s = random_batch(&mut rng, &[1 + i % 6], 3, 3).pop().unwrap();
            let (label, probs) = predict(&model, &s).unwrap();
            let rows = forward_eval(&model, &Batch::new(&[&s]).unwrap()).unwrap();
            assert_eq!(probs, rows[0]);
            let best = rows[0].iter().copied().fold(f64::MIN, f64::max);
            assert_eq!(rows[0][label], best);
        }
    }
}
