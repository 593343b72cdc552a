//! Dense parameter storage and the few kernels the recurrent layers need.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CellKind, ModelConfig};

/// Dot product with four independent accumulators. The summation order is
/// fixed, so results do not depend on the caller or on threading.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// y += alpha * x
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self { rows: rows.len(), cols, data: rows.concat() }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// out[r] += Σ_c M[r][c]·x[c] for rows `range`.
    #[inline]
    pub fn matvec_rows_acc(&self, rows: std::ops::Range<usize>, x: &[f64], out: &mut [f64]) {
        for (o, r) in out.iter_mut().zip(rows) {
            *o += dot(self.row(r), x);
        }
    }

    /// out += M·x
    pub fn matvec_acc(&self, x: &[f64], out: &mut [f64]) {
        self.matvec_rows_acc(0..self.rows, x, out);
    }

    /// out += Mᵀ·v, restricted to rows `range` of M (v indexed from 0).
    #[inline]
    pub fn tmatvec_rows_acc(&self, rows: std::ops::Range<usize>, v: &[f64], out: &mut [f64]) {
        for (&vi, r) in v.iter().zip(rows) {
            if vi != 0.0 {
                axpy(vi, self.row(r), out);
            }
        }
    }

    /// M += a·bᵀ, restricted to rows `range` of M (a indexed from 0).
    #[inline]
    pub fn outer_rows_acc(&mut self, rows: std::ops::Range<usize>, a: &[f64], b: &[f64]) {
        for (&ai, r) in a.iter().zip(rows) {
            if ai != 0.0 {
                axpy(ai, b, self.row_mut(r));
            }
        }
    }
}

/// Weights of one recurrent cell, gate blocks stacked along the rows.
///
/// LSTM gate order is input, forget, cell candidate, output; GRU order is
/// update, reset, candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    /// gates·hidden × input
    pub w: Matrix,
    /// gates·hidden × hidden
    pub u: Matrix,
    pub b: Vec<f64>,
}

impl CellParams {
    pub fn zeros(kind: CellKind, input: usize, hidden: usize) -> Self {
        let g = kind.gates() * hidden;
        Self { w: Matrix::zeros(g, input), u: Matrix::zeros(g, hidden), b: vec![0.0; g] }
    }

    pub fn hidden(&self) -> usize {
        self.u.cols
    }

    pub fn input(&self) -> usize {
        self.w.cols
    }
}

/// Every trainable tensor of a model. Gradients and Adam moments use the
/// same type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub bn_gamma: Vec<f64>,
    pub bn_beta: Vec<f64>,
    /// Indexed by `layer * directions + direction`.
    pub cells: Vec<CellParams>,
    /// n_classes × summary width
    pub dense_w: Matrix,
    pub dense_b: Vec<f64>,
}

impl ParamSet {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let dirs = cfg.directions();
        let cells = (0..cfg.layers)
            .flat_map(|l| (0..dirs).map(move |_| l))
            .map(|l| CellParams::zeros(cfg.cell, cfg.layer_input(l), cfg.hidden))
            .collect();
        Self {
            bn_gamma: vec![0.0; cfg.n_features],
            bn_beta: vec![0.0; cfg.n_features],
            cells,
            dense_w: Matrix::zeros(cfg.n_classes, cfg.hidden * dirs),
            dense_b: vec![0.0; cfg.n_classes],
        }
    }

    /// Glorot-uniform input and dense weights, orthogonal recurrent blocks,
    /// zero biases except LSTM forget gates at 1, batch-norm scale 1.
    pub fn init<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let mut p = Self::zeros(cfg);
        p.bn_gamma.iter_mut().for_each(|g| *g = 1.0);
        let h = cfg.hidden;
        for cell in &mut p.cells {
            glorot(&mut cell.w, rng);
            for gate in 0..cfg.cell.gates() {
                let q = orthogonal(h, rng);
                for r in 0..h {
                    cell.u.row_mut(gate * h + r).copy_from_slice(q.row(r));
                }
            }
            if cfg.cell == CellKind::Lstm {
                cell.b[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
            }
        }
        glorot(&mut p.dense_w, rng);
        p
    }

    pub fn names(cfg: &ModelConfig) -> Vec<String> {
        let mut names = vec!["bn.gamma".to_string(), "bn.beta".to_string()];
        for l in 0..cfg.layers {
            for d in 0..cfg.directions() {
                let dir = if d == 0 { "fwd" } else { "bwd" };
                for t in ["w", "u", "b"] {
                    names.push(format!("layer{l}.{dir}.{t}"));
                }
            }
        }
        names.push("dense.w".into());
        names.push("dense.b".into());
        names
    }

    /// Tensors in canonical order: bn, cells (w, u, b each), dense.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.bn_gamma, &self.bn_beta];
        for c in &self.cells {
            out.extend([c.w.data.as_slice(), c.u.data.as_slice(), c.b.as_slice()]);
        }
        out.extend([self.dense_w.data.as_slice(), self.dense_b.as_slice()]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.bn_gamma, &mut self.bn_beta];
        for c in &mut self.cells {
            out.push(&mut c.w.data);
            out.push(&mut c.u.data);
            out.push(&mut c.b);
        }
        out.push(&mut self.dense_w.data);
        out.push(&mut self.dense_b);
        out
    }

    /// Shapes in canonical order, as (rows, cols); vectors have cols = 1.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        let mut out = vec![(self.bn_gamma.len(), 1), (self.bn_beta.len(), 1)];
        for c in &self.cells {
            out.extend([(c.w.rows, c.w.cols), (c.u.rows, c.u.cols), (c.b.len(), 1)]);
        }
        out.extend([(self.dense_w.rows, self.dense_w.cols), (self.dense_b.len(), 1)]);
        out
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn add_assign(&mut self, other: &ParamSet) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            axpy(1.0, b, a);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= k);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors().iter().map(|t| dot(t, t)).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

fn glorot<R: Rng>(m: &mut Matrix, rng: &mut R) {
    let limit = (6.0 / (m.rows + m.cols) as f64).sqrt();
    m.data.iter_mut().for_each(|x| *x = rng.random_range(-limit..=limit));
}

/// Square orthogonal matrix from modified Gram-Schmidt on Gaussian rows.
fn orthogonal<R: Rng>(n: usize, rng: &mut R) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for r in 0..n {
        loop {
            let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
            for prev in 0..r {
                let proj = dot(&v, m.row(prev));
                axpy(-proj, m.row(prev), &mut v);
            }
            let norm = dot(&v, &v).sqrt();
            if norm > 1e-8 {
                v.iter_mut().for_each(|x| *x /= norm);
                m.row_mut(r).copy_from_slice(&v);
                break;
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..11).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = orthogonal(16, &mut rng);
        for i in 0..16 {
            for j in 0..16 {
                let d = dot(q.row(i), q.row(j));
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn init_shapes_and_biases() {
        let cfg = ModelConfig { hidden: 5, n_features: 3, n_classes: 2, bidirectional: true, ..ModelConfig::default() };
        let p = ParamSet::init(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(p.cells.len(), 4);
        assert_eq!((p.cells[0].w.rows, p.cells[0].w.cols), (20, 3));
        assert_eq!((p.cells[2].w.rows, p.cells[2].w.cols), (20, 10));
        assert_eq!((p.dense_w.rows, p.dense_w.cols), (2, 10));
        assert!(p.cells.iter().all(|c| c.b[5..10].iter().all(|&b| b == 1.0) && c.b[..5].iter().all(|&b| b == 0.0)));
        assert_eq!(p.tensors().len(), ParamSet::names(&cfg).len());
        assert_eq!(p.shapes().iter().map(|(r, c)| r * c).sum::<usize>(), p.len());
    }
}
