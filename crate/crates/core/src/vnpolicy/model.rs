use ndarray::{s, Array1, Array2, Array3, ArrayView2, ArrayView3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::nn::{self, LnCache};
use super::vn::{gate_batch, gate_batch_backward, VNFeature, VnActivation};
use super::{Params, PolicyConfig, PolicyError, TrainingSample};
use crate::demos::FINGERTIPS;

const INIT_STREAM: u64 = 7;

#[derive(Debug, Clone, PartialEq)]
struct VnIds {
    w: usize,
    wq: usize,
    wk: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct BlockIds {
    ln1_g: usize,
    ln1_b: usize,
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln2_g: usize,
    ln2_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Ids {
    vn: Vec<VnIds>,
    tok_w: usize,
    tok_b: usize,
    pos: usize,
    blocks: Vec<BlockIds>,
    lnf_g: usize,
    lnf_b: usize,
    /// (weight, bias) per head layer, output layer last.
    head: Vec<(usize, usize)>,
}

/// Parameter layout for `config`: names, shapes and initial values.
fn build(config: &PolicyConfig) -> (Params, Ids) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(INIT_STREAM);
    let mut p = Params::new();
    let mut normal = |rows: usize, cols: usize, std: f64| {
        let dist = Normal::new(0.0, std).expect("positive std");
        Array2::from_shape_fn((rows, cols), |_| dist.sample(&mut rng))
    };
    let d = config.token_dim;

    let mut vn = Vec::new();
    let mut c_in = config.T_o;
    for (l, &c) in config.vn_channels.iter().enumerate() {
        let w = p.push(format!("vn.{l}.w"), normal(c, c_in, (1.0 / c_in as f64).sqrt()));
        let std = (1.0 / c as f64).sqrt();
        let wq = p.push(format!("vn.{l}.w_q"), normal(c, c, std));
        let wk = p.push(format!("vn.{l}.w_k"), normal(c, c, std));
        vn.push(VnIds { w, wq, wk });
        c_in = c;
    }
    let flat = 3 * c_in;
    let tok_w = p.push("token.w", normal(d, flat, (1.0 / flat as f64).sqrt()));
    let tok_b = p.push("token.b", Array2::zeros((1, d)));
    let pos = p.push("fingertip_pos", normal(FINGERTIPS, d, 0.5));

    let ff = config.feedforward_dim();
    let mut blocks = Vec::new();
    for l in 0..config.transformer.layers {
        let n = |s: &str| format!("block.{l}.{s}");
        let sd = (1.0 / d as f64).sqrt();
        let ln1_g = p.push(n("ln1.g"), Array2::ones((1, d)));
        let ln1_b = p.push(n("ln1.b"), Array2::zeros((1, d)));
        let wq = p.push(n("attn.w_q"), normal(d, d, sd));
        let bq = p.push(n("attn.b_q"), Array2::zeros((1, d)));
        let wk = p.push(n("attn.w_k"), normal(d, d, sd));
        let bk = p.push(n("attn.b_k"), Array2::zeros((1, d)));
        let wv = p.push(n("attn.w_v"), normal(d, d, sd));
        let bv = p.push(n("attn.b_v"), Array2::zeros((1, d)));
        let wo = p.push(n("attn.w_o"), normal(d, d, sd));
        let bo = p.push(n("attn.b_o"), Array2::zeros((1, d)));
        let ln2_g = p.push(n("ln2.g"), Array2::ones((1, d)));
        let ln2_b = p.push(n("ln2.b"), Array2::zeros((1, d)));
        let w1 = p.push(n("ff.w1"), normal(ff, d, sd));
        let b1 = p.push(n("ff.b1"), Array2::zeros((1, ff)));
        let w2 = p.push(n("ff.w2"), normal(d, ff, (1.0 / ff as f64).sqrt()));
        let b2 = p.push(n("ff.b2"), Array2::zeros((1, d)));
        blocks.push(BlockIds {
            ln1_g,
            ln1_b,
            wq,
            bq,
            wk,
            bk,
            wv,
            bv,
            wo,
            bo,
            ln2_g,
            ln2_b,
            w1,
            b1,
            w2,
            b2,
        });
    }
    let lnf_g = p.push("final_ln.g", Array2::ones((1, d)));
    let lnf_b = p.push("final_ln.b", Array2::zeros((1, d)));

    let mut head = Vec::new();
    let mut width = d;
    let out = 3 * config.T_p;
    for (j, &h) in config.head_hidden.iter().chain(std::iter::once(&out)).enumerate() {
        let last = j == config.head_hidden.len();
        let std = (1.0 / width as f64).sqrt() * if last { 0.1 } else { 1.0 };
        let w = p.push(format!("head.{j}.w"), normal(h, width, std));
        let b = p.push(format!("head.{j}.b"), Array2::zeros((1, h)));
        head.push((w, b));
        width = h;
    }
    let ids = Ids {
        vn,
        tok_w,
        tok_b,
        pos,
        blocks,
        lnf_g,
        lnf_b,
        head,
    };
    (p, ids)
}

/// Vector-neuron point encoder, transformer over point tokens and a shared
/// per-fingertip prediction head.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    config: PolicyConfig,
    params: Params,
    ids: Ids,
}

/// One policy input: `T_o × 5 × 3` fingertips and `T_o × N × 3` objects.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Input<'a> {
    pub fingertips: ArrayView3<'a, f64>,
    pub objects: ArrayView3<'a, f64>,
}

struct VnCache {
    x: Array2<f64>,
    y: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
}

struct BlockCache {
    ln1: LnCache,
    h1: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    att: Array2<f64>,
    ln2: LnCache,
    h2: Array2<f64>,
    f1: Array2<f64>,
    g1: Array2<f64>,
}

pub(crate) struct Cache {
    batch: usize,
    seq: usize,
    vn: Vec<VnCache>,
    flat: Array2<f64>,
    blocks: Vec<BlockCache>,
    lnf: LnCache,
    head_x: Vec<Array2<f64>>,
    head_pre: Vec<Array2<f64>>,
}

impl PolicyModel {
    /// Freshly initialized model; initialization depends only on the config
    /// (including its seed).
    pub fn new(config: &PolicyConfig) -> Result<Self, PolicyError> {
        config.validate()?;
        let config = config.resolved();
        let (params, ids) = build(&config);
        Ok(Self { config, params, ids })
    }

    /// Model with the given parameters, which must match the layout the
    /// config implies (names and shapes).
    pub fn from_params(config: &PolicyConfig, params: Params) -> Result<Self, PolicyError> {
        let mut model = Self::new(config)?;
        if params.names() != model.params.names() {
            return Err(PolicyError::ShapeMismatch("parameter names differ from the config's layout".into()));
        }
        for (i, (a, b)) in params.values().iter().zip(model.params.values()).enumerate() {
            if a.dim() != b.dim() {
                return Err(PolicyError::ShapeMismatch(format!(
                    "parameter {} is {:?}, expected {:?}",
                    params.names()[i],
                    a.dim(),
                    b.dim()
                )));
            }
        }
        model.params = params;
        Ok(model)
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    /// Channel-mixing weights and activation of vector-neuron layer `l`.
    pub fn vn_layer(&self, l: usize) -> (&Array2<f64>, VnActivation) {
        let ids = &self.ids.vn[l];
        (
            self.params.get(ids.w),
            VnActivation {
                w_q: self.params.get(ids.wq).clone(),
                w_k: self.params.get(ids.wk).clone(),
            },
        )
    }

    fn p(&self, i: usize) -> &Array2<f64> {
        self.params.get(i)
    }

    fn vn_forward(&self, mut x: Array2<f64>) -> (Array2<f64>, Vec<VnCache>) {
        let mut caches = Vec::with_capacity(self.ids.vn.len());
        for ids in &self.ids.vn {
            let y = self.p(ids.w).dot(&x);
            let q = self.p(ids.wq).dot(&y);
            let k = self.p(ids.wk).dot(&y);
            let z = gate_batch(&q, &k);
            caches.push(VnCache { x, y, q, k });
            x = z;
        }
        (x, caches)
    }

    /// The vector-neuron stack applied to one point's `T_o × 3` history,
    /// before flattening.
    pub fn vn_stack(&self, history: ArrayView2<f64>) -> Result<VNFeature, PolicyError> {
        self.check_history(history)?;
        let (z, _) = self.vn_forward(history.to_owned());
        VNFeature::new(z)
    }

    /// Token for one point's `T_o × 3` history (no positional embedding).
    pub fn encode_point_history(&self, history: ArrayView2<f64>) -> Result<Array1<f64>, PolicyError> {
        let z = self.vn_stack(history)?.channels;
        let flat = z.into_shape_with_order((1, 3 * self.last_channels())).expect("contiguous");
        let tok = nn::linear(flat.view(), self.p(self.ids.tok_w), Some(self.p(self.ids.tok_b)));
        Ok(tok.row(0).to_owned())
    }

    fn last_channels(&self) -> usize {
        *self.config.vn_channels.last().expect("validated non-empty")
    }

    fn check_history(&self, history: ArrayView2<f64>) -> Result<(), PolicyError> {
        if history.dim() != (self.config.T_o, 3) {
            return Err(PolicyError::ShapeMismatch(format!(
                "history is {:?}, expected ({}, 3)",
                history.dim(),
                self.config.T_o
            )));
        }
        Ok(())
    }

    pub(crate) fn check_input(&self, fingertips: ArrayView3<f64>, objects: ArrayView3<f64>) -> Result<(), PolicyError> {
        let c = &self.config;
        if fingertips.dim() != (c.T_o, FINGERTIPS, 3) {
            return Err(PolicyError::ShapeMismatch(format!(
                "fingertips are {:?}, expected ({}, 5, 3)",
                fingertips.dim(),
                c.T_o
            )));
        }
        if objects.dim() != (c.T_o, c.N, 3) {
            return Err(PolicyError::ShapeMismatch(format!(
                "objects are {:?}, expected ({}, {}, 3)",
                objects.dim(),
                c.T_o,
                c.N
            )));
        }
        Ok(())
    }

    /// Predicts `T_p × 5 × 3` future fingertips.
    pub fn predict(&self, fingertips: ArrayView3<f64>, objects: ArrayView3<f64>) -> Result<Array3<f64>, PolicyError> {
        self.check_input(fingertips, objects)?;
        let (out, _) = self.forward(&[Input { fingertips, objects }]);
        Ok(self.unpack(&out, 0))
    }

    /// Sample `b` of a forward output as `T_p × 5 × 3`.
    pub(crate) fn unpack(&self, out: &Array2<f64>, b: usize) -> Array3<f64> {
        let tp = self.config.T_p;
        Array3::from_shape_fn((tp, FINGERTIPS, 3), |(t, i, x)| out[(b * FINGERTIPS + i, 3 * t + x)])
    }

    /// Packs targets into the forward output layout.
    pub(crate) fn pack(&self, samples: &[&TrainingSample]) -> Array2<f64> {
        let tp = self.config.T_p;
        let mut out = Array2::zeros((samples.len() * FINGERTIPS, 3 * tp));
        for (b, s) in samples.iter().enumerate() {
            for t in 0..tp {
                for i in 0..FINGERTIPS {
                    for x in 0..3 {
                        out[(b * FINGERTIPS + i, 3 * t + x)] = s.target_fingertips[(t, i, x)];
                    }
                }
            }
        }
        out
    }

    /// Batched forward pass. Output rows are `(sample, fingertip)`, columns
    /// `(step, coordinate)`.
    pub(crate) fn forward(&self, inputs: &[Input]) -> (Array2<f64>, Cache) {
        let c = &self.config;
        let batch = inputs.len();
        let seq = FINGERTIPS + c.N;
        let points = batch * seq;
        let d = c.token_dim;
        let heads = c.transformer.heads;

        let mut x0 = Array2::zeros((c.T_o, 3 * points));
        for (b, inp) in inputs.iter().enumerate() {
            for t in 0..c.T_o {
                for s in 0..seq {
                    let col = 3 * (b * seq + s);
                    for x in 0..3 {
                        x0[(t, col + x)] = if s < FINGERTIPS {
                            inp.fingertips[(t, s, x)]
                        } else {
                            inp.objects[(t, s - FINGERTIPS, x)]
                        };
                    }
                }
            }
        }
        let (z, vn) = self.vn_forward(x0);
        let cl = z.nrows();
        let mut flat = Array2::zeros((points, 3 * cl));
        for ch in 0..cl {
            for p in 0..points {
                for x in 0..3 {
                    flat[(p, 3 * ch + x)] = z[(ch, 3 * p + x)];
                }
            }
        }
        let mut h = nn::linear(flat.view(), self.p(self.ids.tok_w), Some(self.p(self.ids.tok_b)));
        let pos = self.p(self.ids.pos);
        for b in 0..batch {
            let mut rows = h.slice_mut(s![b * seq..b * seq + FINGERTIPS, ..]);
            rows += pos;
        }

        let mut blocks = Vec::with_capacity(self.ids.blocks.len());
        for ids in &self.ids.blocks {
            let (h1, ln1) = nn::layer_norm(h.view(), self.p(ids.ln1_g), self.p(ids.ln1_b));
            let q = nn::linear(h1.view(), self.p(ids.wq), Some(self.p(ids.bq)));
            let k = nn::linear(h1.view(), self.p(ids.wk), Some(self.p(ids.bk)));
            let v = nn::linear(h1.view(), self.p(ids.wv), Some(self.p(ids.bv)));
            let (att, probs) = nn::attention(&q, &k, &v, batch, seq, heads);
            h += &nn::linear(att.view(), self.p(ids.wo), Some(self.p(ids.bo)));
            let (h2, ln2) = nn::layer_norm(h.view(), self.p(ids.ln2_g), self.p(ids.ln2_b));
            let f1 = nn::linear(h2.view(), self.p(ids.w1), Some(self.p(ids.b1)));
            let g1 = nn::gelu(&f1);
            h += &nn::linear(g1.view(), self.p(ids.w2), Some(self.p(ids.b2)));
            blocks.push(BlockCache {
                ln1,
                h1,
                q,
                k,
                v,
                probs,
                att,
                ln2,
                h2,
                f1,
                g1,
            });
        }
        let (hf, lnf) = nn::layer_norm(h.view(), self.p(self.ids.lnf_g), self.p(self.ids.lnf_b));

        let mut x = Array2::zeros((batch * FINGERTIPS, d));
        for b in 0..batch {
            x.slice_mut(s![b * FINGERTIPS..(b + 1) * FINGERTIPS, ..])
                .assign(&hf.slice(s![b * seq..b * seq + FINGERTIPS, ..]));
        }
        let mut head_x = Vec::with_capacity(self.ids.head.len());
        let mut head_pre = Vec::with_capacity(self.ids.head.len());
        let n_head = self.ids.head.len();
        for (j, &(w, bias)) in self.ids.head.iter().enumerate() {
            let pre = nn::linear(x.view(), self.p(w), Some(self.p(bias)));
            head_x.push(x);
            if j + 1 < n_head {
                x = nn::gelu(&pre);
                head_pre.push(pre);
            } else {
                x = pre;
            }
        }
        let mut out = x;
        if c.residual_head {
            for (b, inp) in inputs.iter().enumerate() {
                for i in 0..FINGERTIPS {
                    let mut row = out.row_mut(b * FINGERTIPS + i);
                    for t in 0..c.T_p {
                        for xx in 0..3 {
                            row[3 * t + xx] += inp.fingertips[(c.T_o - 1, i, xx)];
                        }
                    }
                }
            }
        }
        let cache = Cache {
            batch,
            seq,
            vn,
            flat,
            blocks,
            lnf,
            head_x,
            head_pre,
        };
        (out, cache)
    }

    /// Accumulates into `grads` the gradient of `Σ d_out ⊙ out`.
    pub(crate) fn backward(&self, cache: &Cache, d_out: ArrayView2<f64>, grads: &mut Params) {
        let c = &self.config;
        let (batch, seq) = (cache.batch, cache.seq);
        let heads = c.transformer.heads;
        let d = c.token_dim;

        let mut dx = d_out.to_owned();
        for j in (0..self.ids.head.len()).rev() {
            let (w, b) = self.ids.head[j];
            let (gw, gb) = grads.pair_mut(w, b);
            let dprev = nn::linear_backward(cache.head_x[j].view(), self.p(w), dx.view(), gw, Some(gb));
            dx = if j > 0 { nn::gelu_backward(&cache.head_pre[j - 1], dprev.view()) } else { dprev };
        }
        let mut dhf = Array2::zeros((batch * seq, d));
        for b in 0..batch {
            dhf.slice_mut(s![b * seq..b * seq + FINGERTIPS, ..])
                .assign(&dx.slice(s![b * FINGERTIPS..(b + 1) * FINGERTIPS, ..]));
        }
        let (gg, gb) = grads.pair_mut(self.ids.lnf_g, self.ids.lnf_b);
        let mut dh = nn::layer_norm_backward(&cache.lnf, self.p(self.ids.lnf_g), dhf.view(), gg, gb);

        for (ids, bc) in self.ids.blocks.iter().zip(&cache.blocks).rev() {
            // Feed-forward residual branch.
            let (gw, gb) = grads.pair_mut(ids.w2, ids.b2);
            let dg1 = nn::linear_backward(bc.g1.view(), self.p(ids.w2), dh.view(), gw, Some(gb));
            let df1 = nn::gelu_backward(&bc.f1, dg1.view());
            let (gw, gb) = grads.pair_mut(ids.w1, ids.b1);
            let dh2 = nn::linear_backward(bc.h2.view(), self.p(ids.w1), df1.view(), gw, Some(gb));
            let (gg, gb) = grads.pair_mut(ids.ln2_g, ids.ln2_b);
            dh += &nn::layer_norm_backward(&bc.ln2, self.p(ids.ln2_g), dh2.view(), gg, gb);

            // Attention residual branch.
            let (gw, gb) = grads.pair_mut(ids.wo, ids.bo);
            let datt = nn::linear_backward(bc.att.view(), self.p(ids.wo), dh.view(), gw, Some(gb));
            let (dq, dk, dv) = nn::attention_backward(&bc.q, &bc.k, &bc.v, &bc.probs, datt.view(), batch, seq, heads);
            let (gw, gb) = grads.pair_mut(ids.wq, ids.bq);
            let mut dh1 = nn::linear_backward(bc.h1.view(), self.p(ids.wq), dq.view(), gw, Some(gb));
            let (gw, gb) = grads.pair_mut(ids.wk, ids.bk);
            dh1 += &nn::linear_backward(bc.h1.view(), self.p(ids.wk), dk.view(), gw, Some(gb));
            let (gw, gb) = grads.pair_mut(ids.wv, ids.bv);
            dh1 += &nn::linear_backward(bc.h1.view(), self.p(ids.wv), dv.view(), gw, Some(gb));
            let (gg, gb) = grads.pair_mut(ids.ln1_g, ids.ln1_b);
            dh += &nn::layer_norm_backward(&bc.ln1, self.p(ids.ln1_g), dh1.view(), gg, gb);
        }

        {
            let gpos = grads.get_mut(self.ids.pos);
            for b in 0..batch {
                *gpos += &dh.slice(s![b * seq..b * seq + FINGERTIPS, ..]);
            }
        }
        let (gw, gb) = grads.pair_mut(self.ids.tok_w, self.ids.tok_b);
        let dflat = nn::linear_backward(cache.flat.view(), self.p(self.ids.tok_w), dh.view(), gw, Some(gb));

        let points = batch * seq;
        let cl = self.last_channels();
        let mut dz = Array2::zeros((cl, 3 * points));
        for ch in 0..cl {
            for p in 0..points {
                for x in 0..3 {
                    dz[(ch, 3 * p + x)] = dflat[(p, 3 * ch + x)];
                }
            }
        }
        for (l, (ids, vc)) in self.ids.vn.iter().zip(&cache.vn).enumerate().rev() {
            let (dq, dk) = gate_batch_backward(&vc.q, &vc.k, dz.view());
            ndarray::linalg::general_mat_mul(1.0, &dq, &vc.y.t(), 1.0, grads.get_mut(ids.wq));
            ndarray::linalg::general_mat_mul(1.0, &dk, &vc.y.t(), 1.0, grads.get_mut(ids.wk));
            let mut dy = self.p(ids.wq).t().dot(&dq);
            dy += &self.p(ids.wk).t().dot(&dk);
            ndarray::linalg::general_mat_mul(1.0, &dy, &vc.x.t(), 1.0, grads.get_mut(ids.w));
            if l > 0 {
                dz = self.p(ids.w).t().dot(&dy);
            }
        }
    }
}

/// Mean loss of `samples` and its exact gradient with respect to every
/// parameter.
pub fn gradients(model: &PolicyModel, samples: &[TrainingSample]) -> Result<(f64, Params), PolicyError> {
    let refs: Vec<&TrainingSample> = samples.iter().collect();
    let mut grads = model.params().zeros_like();
    let loss = accumulate_gradients(model, &refs, refs.len(), &mut grads)?;
    Ok((loss, grads))
}

/// Adds to `grads` the gradient of this chunk's share of a mean loss taken
/// over `total` samples, returning the chunk's summed squared error divided
/// by the same normalizer.
pub(crate) fn accumulate_gradients(
    model: &PolicyModel,
    samples: &[&TrainingSample],
    total: usize,
    grads: &mut Params,
) -> Result<f64, PolicyError> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let c = model.config();
    let mut inputs = Vec::with_capacity(samples.len());
    for s in samples {
        model.check_input(s.input_fingertips.view(), s.input_objects.view())?;
        if s.target_fingertips.dim() != (c.T_p, FINGERTIPS, 3) {
            return Err(PolicyError::ShapeMismatch(format!(
                "targets are {:?}, expected ({}, 5, 3)",
                s.target_fingertips.dim(),
                c.T_p
            )));
        }
        inputs.push(Input {
            fingertips: s.input_fingertips.view(),
            objects: s.input_objects.view(),
        });
    }
    let (out, cache) = model.forward(&inputs);
    let diff = &out - &model.pack(samples);
    let norm = (total * c.T_p * FINGERTIPS * 3) as f64;
    let loss = diff.iter().map(|v| v * v).sum::<f64>() / norm;
    let d_out = diff.mapv(|v| 2.0 * v / norm);
    model.backward(&cache, d_out.view(), grads);
    Ok(loss)
}
