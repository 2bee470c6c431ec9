//! Vector-neuron layers. A feature is a list of C three-vectors; layers mix
//! channels but never coordinates, so rotating every input vector rotates
//! every output vector the same way.
//!
//! The batched kernels keep a feature set as a `C × 3P` matrix whose column
//! `3p + x` holds coordinate `x` of point `p`.

use ndarray::{Array2, ArrayView2, Axis};

use super::PolicyError;
use crate::geom3d::Vec3;

/// Squared key norm below which a gated channel is zeroed.
const KEY_EPS_SQ: f64 = 1e-24;

/// A `C × 3` list of 3D vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct VNFeature {
    pub channels: Array2<f64>,
}

impl VNFeature {
    pub fn new(channels: Array2<f64>) -> Result<Self, PolicyError> {
        if channels.ncols() != 3 {
            return Err(PolicyError::ShapeMismatch(format!(
                "vector-neuron feature needs 3 columns, got {}",
                channels.ncols()
            )));
        }
        Ok(Self { channels })
    }

    pub fn from_vectors(v: &[Vec3]) -> Self {
        let mut channels = Array2::zeros((v.len(), 3));
        for (c, p) in v.iter().enumerate() {
            for x in 0..3 {
                channels[(c, x)] = p[x];
            }
        }
        Self { channels }
    }

    pub fn len(&self) -> usize {
        self.channels.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `V·Rᵀ`: every channel vector rotated by `r`.
    pub fn rotated(&self, r: &nalgebra::Matrix3<f64>) -> Self {
        let rt = Array2::from_shape_fn((3, 3), |(i, j)| r[(j, i)]);
        Self {
            channels: self.channels.dot(&rt),
        }
    }
}

/// Channel-gating parameters of one activation.
#[derive(Debug, Clone, PartialEq)]
pub struct VnActivation {
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
}

/// `V' = W·V`.
pub fn vn_linear(weights: &Array2<f64>, v: &VNFeature) -> Result<VNFeature, PolicyError> {
    if weights.ncols() != v.len() {
        return Err(PolicyError::ShapeMismatch(format!(
            "weights are {}x{} but feature has {} channels",
            weights.nrows(),
            weights.ncols(),
            v.len()
        )));
    }
    Ok(VNFeature {
        channels: weights.dot(&v.channels),
    })
}

/// Per channel `q = W_q·V`, `k = W_k·V`: keep `q` when it points along `k`,
/// otherwise remove its component along `k`.
pub fn vn_activation(v: &VNFeature, params: &VnActivation) -> Result<VNFeature, PolicyError> {
    let c = v.len();
    for (name, w) in [("W_q", &params.w_q), ("W_k", &params.w_k)] {
        if w.dim() != (c, c) {
            return Err(PolicyError::ShapeMismatch(format!(
                "{name} is {:?}, expected {c}x{c}",
                w.dim()
            )));
        }
    }
    let q = params.w_q.dot(&v.channels);
    let k = params.w_k.dot(&v.channels);
    let mut out = q.clone();
    for ch in 0..c {
        let qv = [q[(ch, 0)], q[(ch, 1)], q[(ch, 2)]];
        let kv = [k[(ch, 0)], k[(ch, 1)], k[(ch, 2)]];
        let o = gate(qv, kv);
        for x in 0..3 {
            out[(ch, x)] = o[x];
        }
    }
    Ok(VNFeature { channels: out })
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn gate(q: [f64; 3], k: [f64; 3]) -> [f64; 3] {
    let s = dot3(q, k);
    if s >= 0.0 {
        return q;
    }
    let kk = dot3(k, k);
    if kk < KEY_EPS_SQ {
        return [0.0; 3];
    }
    let f = s / kk;
    [q[0] - f * k[0], q[1] - f * k[1], q[2] - f * k[2]]
}

/// Gradients of [`gate`] with respect to `q` and `k` given the output
/// gradient `g`.
fn gate_backward(q: [f64; 3], k: [f64; 3], g: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let s = dot3(q, k);
    if s >= 0.0 {
        return (g, [0.0; 3]);
    }
    let kk = dot3(k, k);
    if kk < KEY_EPS_SQ {
        return ([0.0; 3], [0.0; 3]);
    }
    let kg = dot3(k, g);
    let f = s / kk;
    let dq = std::array::from_fn(|x| g[x] - k[x] * kg / kk);
    let dk = std::array::from_fn(|x| -(f * g[x] + (q[x] / kk - 2.0 * s * k[x] / (kk * kk)) * kg));
    (dq, dk)
}

/// Batched gate over `C × 3P` query and key matrices.
pub(crate) fn gate_batch(q: &Array2<f64>, k: &Array2<f64>) -> Array2<f64> {
    let mut out = q.clone();
    let cols = q.ncols() / 3;
    for ((q_row, k_row), mut o_row) in q.axis_iter(Axis(0)).zip(k.axis_iter(Axis(0))).zip(out.axis_iter_mut(Axis(0))) {
        let (q_row, k_row) = (q_row.as_slice().expect("row-major"), k_row.as_slice().expect("row-major"));
        let o_row = o_row.as_slice_mut().expect("row-major");
        for p in 0..cols {
            let j = 3 * p;
            let o = gate([q_row[j], q_row[j + 1], q_row[j + 2]], [k_row[j], k_row[j + 1], k_row[j + 2]]);
            o_row[j..j + 3].copy_from_slice(&o);
        }
    }
    out
}

/// Backward of [`gate_batch`]: returns `(dq, dk)`.
pub(crate) fn gate_batch_backward(
    q: &Array2<f64>,
    k: &Array2<f64>,
    g: ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let mut dq = Array2::zeros(q.raw_dim());
    let mut dk = Array2::zeros(q.raw_dim());
    let cols = q.ncols() / 3;
    for c in 0..q.nrows() {
        for p in 0..cols {
            let j = 3 * p;
            let qv = [q[(c, j)], q[(c, j + 1)], q[(c, j + 2)]];
            let kv = [k[(c, j)], k[(c, j + 1)], k[(c, j + 2)]];
            let gv = [g[(c, j)], g[(c, j + 1)], g[(c, j + 2)]];
            let (a, b) = gate_backward(qv, kv, gv);
            for x in 0..3 {
                dq[(c, j + x)] = a[x];
                dk[(c, j + x)] = b[x];
            }
        }
    }
    (dq, dk)
}
