//! LSTM and GRU steps with the caches needed for backpropagation through
//! time.
//!
//! Dropout is applied by elementwise multipliers: `x̃ = x ⊙ m_in` feeds the
//! input weights and `h̃ = h_prev ⊙ m_rec` feeds the recurrent weights. The
//! carried state (`c_prev` for LSTM, `h_prev` in the GRU interpolation) is
//! never masked.

use super::params::{axpy, CellParams};
use super::{CellKind, RnnError};

/// Per-sequence dropout multipliers for one cell (0 or 1/(1-p)).
#[derive(Debug, Clone, PartialEq)]
pub struct CellMasks {
    pub input: Vec<f64>,
    pub recurrent: Vec<f64>,
}

impl CellMasks {
    pub fn ones(input: usize, hidden: usize) -> Self {
        Self { input: vec![1.0; input], recurrent: vec![1.0; hidden] }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn masked(v: &[f64], mask: Option<&[f64]>) -> Vec<f64> {
    match mask {
        Some(m) => v.iter().zip(m).map(|(a, b)| a * b).collect(),
        None => v.to_vec(),
    }
}

fn check_shapes(
    p: &CellParams,
    kind: CellKind,
    x: &[f64],
    h_prev: &[f64],
    masks: Option<&CellMasks>,
) -> Result<(), RnnError> {
    let h = p.hidden();
    let gates = kind.gates() * h;
    let ok = p.w.rows == gates
        && p.u.rows == gates
        && p.b.len() == gates
        && x.len() == p.input()
        && h_prev.len() == h
        && masks.is_none_or(|m| m.input.len() == x.len() && m.recurrent.len() == h);
    if ok {
        Ok(())
    } else {
        Err(RnnError::ShapeMismatch(format!(
            "{kind:?} cell with W {}x{}, U {}x{}, b {}; x {}, h {}",
            p.w.rows,
            p.w.cols,
            p.u.rows,
            p.u.cols,
            p.b.len(),
            x.len(),
            h_prev.len()
        )))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LstmCache {
    x: Vec<f64>,
    h_in: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// One LSTM step; returns (h, c, cache).
pub(crate) fn lstm_forward(
    p: &CellParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    masks: Option<&CellMasks>,
) -> (Vec<f64>, Vec<f64>, LstmCache) {
    let h = p.hidden();
    let x = masked(x, masks.map(|m| m.input.as_slice()));
    let h_in = masked(h_prev, masks.map(|m| m.recurrent.as_slice()));
    let mut a = p.b.clone();
    p.w.matvec_acc(&x, &mut a);
    p.u.matvec_acc(&h_in, &mut a);
    let i: Vec<f64> = a[..h].iter().map(|&v| sigmoid(v)).collect();
    let f: Vec<f64> = a[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
    let g: Vec<f64> = a[2 * h..3 * h].iter().map(|&v| v.tanh()).collect();
    let o: Vec<f64> = a[3 * h..].iter().map(|&v| sigmoid(v)).collect();
    let c: Vec<f64> = (0..h).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h_out = (0..h).map(|k| o[k] * tanh_c[k]).collect();
    (h_out, c, LstmCache { x, h_in, c_prev: c_prev.to_vec(), i, f, g, o, tanh_c })
}

/// Backward through one LSTM step. Accumulates parameter gradients into
/// `grad` and returns (dx, dh_prev, dc_prev).
pub(crate) fn lstm_backward(
    p: &CellParams,
    cache: &LstmCache,
    dh: &[f64],
    dc_next: &[f64],
    masks: Option<&CellMasks>,
    grad: &mut CellParams,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let h = p.hidden();
    let LstmCache { x, h_in, c_prev, i, f, g, o, tanh_c } = cache;
    let mut da = vec![0.0; 4 * h];
    let mut dc_prev = vec![0.0; h];
    for k in 0..h {
        let dc = dc_next[k] + dh[k] * o[k] * (1.0 - tanh_c[k] * tanh_c[k]);
        da[k] = dc * g[k] * i[k] * (1.0 - i[k]);
        da[h + k] = dc * c_prev[k] * f[k] * (1.0 - f[k]);
        da[2 * h + k] = dc * i[k] * (1.0 - g[k] * g[k]);
        da[3 * h + k] = dh[k] * tanh_c[k] * o[k] * (1.0 - o[k]);
        dc_prev[k] = dc * f[k];
    }
    grad.w.outer_rows_acc(0..4 * h, &da, x);
    grad.u.outer_rows_acc(0..4 * h, &da, h_in);
    axpy(1.0, &da, &mut grad.b);

    let mut dx = vec![0.0; p.input()];
    p.w.tmatvec_rows_acc(0..4 * h, &da, &mut dx);
    let mut dh_prev = vec![0.0; h];
    p.u.tmatvec_rows_acc(0..4 * h, &da, &mut dh_prev);
    if let Some(m) = masks {
        dx.iter_mut().zip(&m.input).for_each(|(d, k)| *d *= k);
        dh_prev.iter_mut().zip(&m.recurrent).for_each(|(d, k)| *d *= k);
    }
    (dx, dh_prev, dc_prev)
}

#[derive(Debug, Clone)]
pub(crate) struct GruCache {
    x: Vec<f64>,
    h_in: Vec<f64>,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
    rh: Vec<f64>,
}

/// One GRU step: h = (1 - z) ⊙ n + z ⊙ h_prev, with the reset gate applied
/// before the candidate's recurrent product.
pub(crate) fn gru_forward(
    p: &CellParams,
    x: &[f64],
    h_prev: &[f64],
    masks: Option<&CellMasks>,
) -> (Vec<f64>, GruCache) {
    let h = p.hidden();
    let x = masked(x, masks.map(|m| m.input.as_slice()));
    let h_in = masked(h_prev, masks.map(|m| m.recurrent.as_slice()));
    let mut a = p.b.clone();
    p.w.matvec_acc(&x, &mut a);
    p.u.matvec_rows_acc(0..2 * h, &h_in, &mut a[..2 * h]);
    let z: Vec<f64> = a[..h].iter().map(|&v| sigmoid(v)).collect();
    let r: Vec<f64> = a[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
    let rh: Vec<f64> = r.iter().zip(&h_in).map(|(a, b)| a * b).collect();
    p.u.matvec_rows_acc(2 * h..3 * h, &rh, &mut a[2 * h..]);
    let n: Vec<f64> = a[2 * h..].iter().map(|v| v.tanh()).collect();
    let h_out = (0..h).map(|k| (1.0 - z[k]) * n[k] + z[k] * h_prev[k]).collect();
    (h_out, GruCache { x, h_in, h_prev: h_prev.to_vec(), z, r, n, rh })
}

/// Backward through one GRU step; returns (dx, dh_prev).
pub(crate) fn gru_backward(
    p: &CellParams,
    cache: &GruCache,
    dh: &[f64],
    masks: Option<&CellMasks>,
    grad: &mut CellParams,
) -> (Vec<f64>, Vec<f64>) {
    let h = p.hidden();
    let GruCache { x, h_in, h_prev, z, r, n, rh } = cache;
    let mut da = vec![0.0; 3 * h];
    let mut dh_prev: Vec<f64> = (0..h).map(|k| dh[k] * z[k]).collect();
    for k in 0..h {
        da[k] = dh[k] * (h_prev[k] - n[k]) * z[k] * (1.0 - z[k]);
        da[2 * h + k] = dh[k] * (1.0 - z[k]) * (1.0 - n[k] * n[k]);
    }
    // Through U_n (r ⊙ h̃).
    let mut d_rh = vec![0.0; h];
    p.u.tmatvec_rows_acc(2 * h..3 * h, &da[2 * h..], &mut d_rh);
    let mut dh_in: Vec<f64> = d_rh.iter().zip(r).map(|(a, b)| a * b).collect();
    for k in 0..h {
        da[h + k] = d_rh[k] * h_in[k] * r[k] * (1.0 - r[k]);
    }

    grad.w.outer_rows_acc(0..3 * h, &da, x);
    grad.u.outer_rows_acc(0..2 * h, &da[..2 * h], h_in);
    grad.u.outer_rows_acc(2 * h..3 * h, &da[2 * h..], rh);
    axpy(1.0, &da, &mut grad.b);

    let mut dx = vec![0.0; p.input()];
    p.w.tmatvec_rows_acc(0..3 * h, &da, &mut dx);
    p.u.tmatvec_rows_acc(0..2 * h, &da[..2 * h], &mut dh_in);
    if let Some(m) = masks {
        dx.iter_mut().zip(&m.input).for_each(|(d, k)| *d *= k);
        dh_in.iter_mut().zip(&m.recurrent).for_each(|(d, k)| *d *= k);
    }
    axpy(1.0, &dh_in, &mut dh_prev);
    (dx, dh_prev)
}

/// Single LSTM step, returning (h, c).
pub fn lstm_cell(
    params: &CellParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    masks: Option<&CellMasks>,
) -> Result<(Vec<f64>, Vec<f64>), RnnError> {
    check_shapes(params, CellKind::Lstm, x, h_prev, masks)?;
    if c_prev.len() != params.hidden() {
        return Err(RnnError::ShapeMismatch(format!(
            "c_prev has {} entries, hidden is {}",
            c_prev.len(),
            params.hidden()
        )));
    }
    let (h, c, _) = lstm_forward(params, x, h_prev, c_prev, masks);
    Ok((h, c))
}

/// Single GRU step, returning h.
pub fn gru_cell(
    params: &CellParams,
    x: &[f64],
    h_prev: &[f64],
    masks: Option<&CellMasks>,
) -> Result<Vec<f64>, RnnError> {
    check_shapes(params, CellKind::Gru, x, h_prev, masks)?;
    Ok(gru_forward(params, x, h_prev, masks).0)
}
