//! Dense building blocks with explicit backward passes. Row-major batches:
//! one row per token.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};

pub(crate) const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// `y = x·Wᵀ + b` with `W` stored `out × in` and `b` as a `1 × out` row.
pub(crate) fn linear(x: ArrayView2<f64>, w: &Array2<f64>, b: Option<&Array2<f64>>) -> Array2<f64> {
    let mut y = x.dot(&w.t());
    if let Some(b) = b {
        y += &b.row(0);
    }
    y
}

/// Accumulates `dW`, `db` and returns `dx`.
pub(crate) fn linear_backward(
    x: ArrayView2<f64>,
    w: &Array2<f64>,
    dy: ArrayView2<f64>,
    dw: &mut Array2<f64>,
    db: Option<&mut Array2<f64>>,
) -> Array2<f64> {
    general_mat_mul(1.0, &dy.t(), &x, 1.0, dw);
    if let Some(db) = db {
        let mut row = db.row_mut(0);
        row += &dy.sum_axis(Axis(0));
    }
    dy.dot(w)
}

pub(crate) struct LnCache {
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
}

pub(crate) fn layer_norm(x: ArrayView2<f64>, gamma: &Array2<f64>, beta: &Array2<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.to_owned();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, s) in xhat.axis_iter_mut(Axis(0)).zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        row *= inv;
        *s = inv;
    }
    let mut y = &xhat * &gamma.row(0);
    y += &beta.row(0);
    (y, LnCache { xhat, inv_std })
}

pub(crate) fn layer_norm_backward(
    cache: &LnCache,
    gamma: &Array2<f64>,
    dy: ArrayView2<f64>,
    dgamma: &mut Array2<f64>,
    dbeta: &mut Array2<f64>,
) -> Array2<f64> {
    {
        let mut g = dgamma.row_mut(0);
        g += &(&dy * &cache.xhat).sum_axis(Axis(0));
        let mut b = dbeta.row_mut(0);
        b += &dy.sum_axis(Axis(0));
    }
    let d = dy.ncols() as f64;
    let mut dx = &dy * &gamma.row(0);
    for ((mut row, xh), inv) in dx.axis_iter_mut(Axis(0)).zip(cache.xhat.axis_iter(Axis(0))).zip(cache.inv_std.iter()) {
        let mean_g = row.sum() / d;
        let mean_gx = row.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
        Zip::from(&mut row).and(&xh).for_each(|g, &xh| {
            *g = inv * (*g - mean_g - xh * mean_gx);
        });
    }
    dx
}

/// Tanh approximation of GELU.
pub(crate) fn gelu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| 0.5 * v * (1.0 + (GELU_C * (v + GELU_A * v * v * v)).tanh()))
}

pub(crate) fn gelu_backward(x: &Array2<f64>, dy: ArrayView2<f64>) -> Array2<f64> {
    let mut dx = dy.to_owned();
    Zip::from(&mut dx).and(x).for_each(|g, &v| {
        let t = (GELU_C * (v + GELU_A * v * v * v)).tanh();
        let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * v * v);
        *g *= 0.5 * (1.0 + t) + 0.5 * v * dt;
    });
    dx
}

/// Full self-attention over `batch` sequences of `seq` tokens each, split
/// into `heads` heads. Returns the concatenated head outputs and the
/// attention matrices (sequence-major, then head).
pub(crate) fn attention(
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
    batch: usize,
    seq: usize,
    heads: usize,
) -> (Array2<f64>, Vec<Array2<f64>>) {
    let d = q.ncols();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = Array2::zeros(q.raw_dim());
    let mut probs = Vec::with_capacity(batch * heads);
    for b in 0..batch {
        let rows = b * seq..(b + 1) * seq;
        for h in 0..heads {
            let cols = h * dh..(h + 1) * dh;
            let qh = q.slice(s![rows.clone(), cols.clone()]);
            let kh = k.slice(s![rows.clone(), cols.clone()]);
            let vh = v.slice(s![rows.clone(), cols.clone()]);
            let mut a = qh.dot(&kh.t());
            for mut row in a.axis_iter_mut(Axis(0)) {
                let m = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x * scale));
                let mut sum = 0.0;
                row.mapv_inplace(|x| {
                    let e = (x * scale - m).exp();
                    sum += e;
                    e
                });
                row /= sum;
            }
            out.slice_mut(s![rows.clone(), cols]).assign(&a.dot(&vh));
            probs.push(a);
        }
    }
    (out, probs)
}

/// Backward of [`attention`]: returns `(dq, dk, dv)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn attention_backward(
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
    probs: &[Array2<f64>],
    d_out: ArrayView2<f64>,
    batch: usize,
    seq: usize,
    heads: usize,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let d = q.ncols();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = Array2::zeros(q.raw_dim());
    let mut dk = Array2::zeros(q.raw_dim());
    let mut dv = Array2::zeros(q.raw_dim());
    for b in 0..batch {
        let rows = b * seq..(b + 1) * seq;
        for h in 0..heads {
            let cols = h * dh..(h + 1) * dh;
            let a = &probs[b * heads + h];
            let qh = q.slice(s![rows.clone(), cols.clone()]);
            let kh = k.slice(s![rows.clone(), cols.clone()]);
            let vh = v.slice(s![rows.clone(), cols.clone()]);
            let go = d_out.slice(s![rows.clone(), cols.clone()]);
            dv.slice_mut(s![rows.clone(), cols.clone()]).assign(&a.t().dot(&go));
            let da = go.dot(&vh.t());
            let mut ds = &da * a;
            for (mut row, arow) in ds.axis_iter_mut(Axis(0)).zip(a.axis_iter(Axis(0))) {
                let total = row.sum();
                Zip::from(&mut row).and(&arow).for_each(|g, &p| *g -= p * total);
            }
            ds *= scale;
            dq.slice_mut(s![rows.clone(), cols.clone()]).assign(&ds.dot(&kh));
            dk.slice_mut(s![rows.clone(), cols]).assign(&ds.t().dot(&qh));
        }
    }
    (dq, dk, dv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn fd_check(f: impl Fn(&Array2<f64>) -> f64, x: &Array2<f64>, grad: &Array2<f64>) {
        let h = 1e-6;
        for idx in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp.as_slice_mut().unwrap()[idx] += h;
            xm.as_slice_mut().unwrap()[idx] -= h;
            let num = (f(&xp) - f(&xm)) / (2.0 * h);
            let ana = grad.as_slice().unwrap()[idx];
            assert!((num - ana).abs() < 1e-6 * (1.0 + num.abs()), "{num} vs {ana}");
        }
    }

    #[test]
    fn layer_norm_gradient() {
        let x = array![[0.3, -1.2, 0.5, 2.0], [1.0, 0.1, -0.4, 0.2]];
        let g = array![[1.1, 0.9, 1.3, 0.7]];
        let b = array![[0.1, -0.2, 0.0, 0.3]];
        let w = array![[0.5, -1.0, 2.0, 0.3], [-0.7, 0.2, 0.1, 1.5]];
        let f = |x: &Array2<f64>| (&layer_norm(x.view(), &g, &b).0 * &w).sum();
        let (_, cache) = layer_norm(x.view(), &g, &b);
        let mut dg = Array2::zeros((1, 4));
        let mut db = Array2::zeros((1, 4));
        let dx = layer_norm_backward(&cache, &g, w.view(), &mut dg, &mut db);
        fd_check(f, &x, &dx);
    }

    #[test]
    fn gelu_gradient() {
        let x = array![[-2.0, -0.3, 0.0, 0.7, 3.0]];
        let w = array![[0.4, -1.0, 0.6, 1.2, 0.3]];
        let f = |x: &Array2<f64>| (&gelu(x) * &w).sum();
        fd_check(f, &x, &gelu_backward(&x, w.view()));
    }

    #[test]
    fn attention_gradient() {
        let q = Array2::from_shape_fn((6, 4), |(i, j)| ((i * 7 + j * 3) as f64 * 0.37).sin());
        let k = Array2::from_shape_fn((6, 4), |(i, j)| ((i * 5 + j) as f64 * 0.53).cos());
        let v = Array2::from_shape_fn((6, 4), |(i, j)| ((i + 2 * j) as f64 * 0.29).sin());
        let w = Array2::from_shape_fn((6, 4), |(i, j)| ((3 * i + j) as f64 * 0.11).cos());
        let (_, probs) = attention(&q, &k, &v, 2, 3, 2);
        let (dq, dk, dv) = attention_backward(&q, &k, &v, &probs, w.view(), 2, 3, 2);
        fd_check(|q| (&attention(q, &k, &v, 2, 3, 2).0 * &w).sum(), &q, &dq);
        fd_check(|k| (&attention(&q, k, &v, 2, 3, 2).0 * &w).sum(), &k, &dk);
        fd_check(|v| (&attention(&q, &k, v, 2, 3, 2).0 * &w).sum(), &v, &dv);
    }
}
