//! Encoder-only transformer with hand-written backpropagation.
//!
//! Input is a `window × n_features` matrix of normalised features. It is
//! embedded linearly, a sinusoidal positional encoding is added, and the
//! result goes through `layers` post-norm encoder blocks
//! (`x = LN(x + Attn(x))`, `x = LN(x + FF(x))`). A linear head maps the
//! flattened `window × model_dim` representation to `horizon` outputs.
//!
//! All parameters live in one flat vector; [`Layout`] records where each
//! tensor starts. Matrices are row-major with shape `(inputs, outputs)`.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ForecastError;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_features: usize,
    pub window: usize,
    pub horizon: usize,
    pub layers: usize,
    pub heads: usize,
    pub model_dim: usize,
    pub ff_dim: usize,
    pub dropout: f64,
}

impl ModelConfig {
    /// Solar radiation model: 3 layers, 4 heads, width 64, feedforward 256.
    pub fn solar(n_features: usize) -> Self {
        Self {
            n_features,
            window: 24,
            horizon: 24,
            layers: 3,
            heads: 4,
            model_dim: 64,
            ff_dim: 256,
            dropout: 0.1,
        }
    }

    /// Price model: as [`ModelConfig::solar`] with 4 layers.
    pub fn price(n_features: usize) -> Self {
        Self {
            layers: 4,
            ..Self::solar(n_features)
        }
    }

    /// Desk-scale variant: 2 layers of width 32.
    pub fn reduced(n_features: usize) -> Self {
        Self {
            layers: 2,
            model_dim: 32,
            ff_dim: 128,
            ..Self::solar(n_features)
        }
    }

    pub fn check(&self) -> Result<(), ForecastError> {
        let bad = |m: &str| Err(ForecastError::Config(m.to_string()));
        if self.n_features == 0 || self.window == 0 || self.horizon == 0 {
            return bad("features, window and horizon must be positive");
        }
        if self.layers == 0 || self.heads == 0 || self.model_dim == 0 || self.ff_dim == 0 {
            return bad("layers, heads, model_dim and ff_dim must be positive");
        }
        if self.model_dim % self.heads != 0 {
            return bad("model_dim must be divisible by heads");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }
}

/// Offsets of one encoder block's tensors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockLayout {
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
}

/// Tensor kinds, for gradient checks and weight initialisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Embedding,
    Attention,
    LayerNorm,
    FeedForward,
    Head,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub embed_w: usize,
    pub embed_b: usize,
    pub blocks: Vec<BlockLayout>,
    pub head_w: usize,
    pub head_b: usize,
    pub total: usize,
    /// `(offset, len, kind, is_matrix)` for every tensor.
    pub tensors: Vec<(usize, usize, TensorKind, Option<(usize, usize)>)>,
}

impl Layout {
    pub fn new(c: &ModelConfig) -> Self {
        let d = c.model_dim;
        let mut tensors = Vec::new();
        let mut at = 0;
        let mut take = |len: usize, kind: TensorKind, shape: Option<(usize, usize)>| {
            let o = at;
            tensors.push((o, len, kind, shape));
            at += len;
            o
        };
        let embed_w = take(c.n_features * d, TensorKind::Embedding, Some((c.n_features, d)));
        let embed_b = take(d, TensorKind::Embedding, None);
        let mut blocks = Vec::with_capacity(c.layers);
        for _ in 0..c.layers {
            let a = TensorKind::Attention;
            let f = TensorKind::FeedForward;
            let l = TensorKind::LayerNorm;
            blocks.push(BlockLayout {
                wq: take(d * d, a, Some((d, d))),
                bq: take(d, a, None),
                wk: take(d * d, a, Some((d, d))),
                bk: take(d, a, None),
                wv: take(d * d, a, Some((d, d))),
                bv: take(d, a, None),
                wo: take(d * d, a, Some((d, d))),
                bo: take(d, a, None),
                ln1_g: take(d, l, None),
                ln1_b: take(d, l, None),
                w1: take(d * c.ff_dim, f, Some((d, c.ff_dim))),
                b1: take(c.ff_dim, f, None),
                w2: take(c.ff_dim * d, f, Some((c.ff_dim, d))),
                b2: take(d, f, None),
                ln2_g: take(d, l, None),
                ln2_b: take(d, l, None),
            });
        }
        let flat = c.window * d;
        let head_w = take(flat * c.horizon, TensorKind::Head, Some((flat, c.horizon)));
        let head_b = take(c.horizon, TensorKind::Head, None);
        Self {
            embed_w,
            embed_b,
            blocks,
            head_w,
            head_b,
            total: at,
            tensors,
        }
    }
}

/// Model configuration plus its flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Transformer {
    pub config: ModelConfig,
    pub layout: Layout,
    pub params: Vec<f64>,
    pe: Array2<f64>,
}

fn mat(data: &[f64], off: usize, r: usize, c: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((r, c), &data[off..off + r * c]).expect("layout shape")
}

fn mat_mut(data: &mut [f64], off: usize, r: usize, c: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((r, c), &mut data[off..off + r * c]).expect("layout shape")
}

fn vecv(data: &[f64], off: usize, n: usize) -> ArrayView1<'_, f64> {
    ArrayView1::from(&data[off..off + n])
}

fn vec_mut(data: &mut [f64], off: usize, n: usize) -> ArrayViewMut1<'_, f64> {
    ArrayViewMut1::from(&mut data[off..off + n])
}

/// `x·W + b` for row-major `x`.
fn affine(x: &ArrayView2<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let mut y = x.dot(&w);
    y += &b;
    y
}

/// Sinusoidal positional encoding, `window × d`.
pub fn positional_encoding(window: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((window, d), |(t, j)| {
        let i = (j / 2) as f64;
        let angle = t as f64 / 10000f64.powf(2.0 * i / d as f64);
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

struct LnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, g: ArrayView1<f64>, b: ArrayView1<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mean = x.sum_axis(Axis(1)) / d;
    let mut xhat = x - &mean.view().insert_axis(Axis(1));
    let var = xhat.mapv(|v| v * v).sum_axis(Axis(1)) / d;
    let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
    xhat *= &inv_std.view().insert_axis(Axis(1));
    let mut y = &xhat * &g;
    y += &b;
    (y, LnCache { xhat, inv_std })
}

/// Returns `dx`, accumulating `dγ` and `dβ`.
fn layer_norm_back(
    dy: &Array2<f64>,
    cache: &LnCache,
    g: ArrayView1<f64>,
    mut dg: ArrayViewMut1<f64>,
    mut db: ArrayViewMut1<f64>,
) -> Array2<f64> {
    dg += &(dy * &cache.xhat).sum_axis(Axis(0));
    db += &dy.sum_axis(Axis(0));
    let d = dy.ncols() as f64;
    let dxhat = dy * &g;
    let mean_d = dxhat.sum_axis(Axis(1)) / d;
    let mean_dx = (&dxhat * &cache.xhat).sum_axis(Axis(1)) / d;
    let mut dx = dxhat - &mean_d.insert_axis(Axis(1));
    dx -= &(&cache.xhat * &mean_dx.insert_axis(Axis(1)));
    dx *= &cache.inv_std.view().insert_axis(Axis(1));
    dx
}

fn softmax_rows(s: &mut Array2<f64>) {
    for mut row in s.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row /= z;
    }
}

struct BlockCache {
    input: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    concat: Array2<f64>,
    mask1: Option<Array2<f64>>,
    ln1: LnCache,
    h1: Array2<f64>,
    pre_relu: Array2<f64>,
    relu: Array2<f64>,
    mask2: Option<Array2<f64>>,
    ln2: LnCache,
}

/// Everything the backward pass needs from one forward pass.
pub struct Trace {
    x: Array2<f64>,
    blocks: Vec<BlockCache>,
    last: Array2<f64>,
    pub output: Array1<f64>,
}

fn dropout_mask(rng: &mut ChaCha8Rng, shape: (usize, usize), p: f64) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_fn(shape, |_| if rng.random::<f64>() < p { 0.0 } else { keep })
}

impl Transformer {
    /// Glorot-uniform weights, zero biases, unit layer-norm gains.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ForecastError> {
        config.check()?;
        let layout = Layout::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; layout.total];
        for &(off, len, kind, shape) in &layout.tensors {
            match (kind, shape) {
                (_, Some((fan_in, fan_out))) => {
                    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    for p in &mut params[off..off + len] {
                        *p = rng.random_range(-a..a);
                    }
                }
                (TensorKind::LayerNorm, None) => {}
                _ => {}
            }
        }
        for b in &layout.blocks {
            params[b.ln1_g..b.ln1_g + config.model_dim].fill(1.0);
            params[b.ln2_g..b.ln2_g + config.model_dim].fill(1.0);
        }
        Self::from_params(config, params)
    }

    pub fn from_params(config: ModelConfig, params: Vec<f64>) -> Result<Self, ForecastError> {
        config.check()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(ForecastError::Shape {
                what: "parameter vector",
                expected: layout.total,
                got: params.len(),
            });
        }
        let pe = positional_encoding(config.window, config.model_dim);
        Ok(Self {
            config,
            layout,
            params,
            pe,
        })
    }

    pub fn n_params(&self) -> usize {
        self.layout.total
    }

    fn check_input(&self, x: &[f64]) -> Result<(), ForecastError> {
        let expected = self.config.window * self.config.n_features;
        if x.len() != expected {
            return Err(ForecastError::Shape {
                what: "input window",
                expected,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Inference: dropout off, deterministic.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, ForecastError> {
        self.check_input(x)?;
        Ok(self.forward(x, None).output.to_vec())
    }

    /// Forward pass keeping intermediate values. `dropout_seed = None`
    /// disables dropout.
    pub fn forward(&self, x: &[f64], dropout_seed: Option<u64>) -> Trace {
        let c = &self.config;
        let (t, d, f) = (c.window, c.model_dim, c.ff_dim);
        let p = &self.params;
        let lay = &self.layout;
        let mut rng = dropout_seed
            .filter(|_| c.dropout > 0.0)
            .map(ChaCha8Rng::seed_from_u64);
        let x = Array2::from_shape_vec((t, c.n_features), x.to_vec()).expect("checked shape");
        let mut h = affine(
            &x.view(),
            mat(p, lay.embed_w, c.n_features, d),
            vecv(p, lay.embed_b, d),
        );
        h += &self.pe;
        let dh = c.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut blocks = Vec::with_capacity(c.layers);
        for b in &lay.blocks {
            let input = h;
            let iv = input.view();
            let q = affine(&iv, mat(p, b.wq, d, d), vecv(p, b.bq, d));
            let k = affine(&iv, mat(p, b.wk, d, d), vecv(p, b.bk, d));
            let v = affine(&iv, mat(p, b.wv, d, d), vecv(p, b.bv, d));
            let mut concat = Array2::zeros((t, d));
            let mut probs = Vec::with_capacity(c.heads);
            for hd in 0..c.heads {
                let cols = s![.., hd * dh..(hd + 1) * dh];
                let mut sc = q.slice(cols).dot(&k.slice(cols).t());
                sc *= scale;
                softmax_rows(&mut sc);
                concat.slice_mut(cols).assign(&sc.dot(&v.slice(cols)));
                probs.push(sc);
            }
            let mut attn = affine(&concat.view(), mat(p, b.wo, d, d), vecv(p, b.bo, d));
            let mask1 = rng.as_mut().map(|r| dropout_mask(r, (t, d), c.dropout));
            if let Some(m) = &mask1 {
                attn *= m;
            }
            let u = &input + &attn;
            let (h1, ln1) = layer_norm(&u, vecv(p, b.ln1_g, d), vecv(p, b.ln1_b, d));
            let pre_relu = affine(&h1.view(), mat(p, b.w1, d, f), vecv(p, b.b1, f));
            let relu = pre_relu.mapv(|v| v.max(0.0));
            let mut g = affine(&relu.view(), mat(p, b.w2, f, d), vecv(p, b.b2, d));
            let mask2 = rng.as_mut().map(|r| dropout_mask(r, (t, d), c.dropout));
            if let Some(m) = &mask2 {
                g *= m;
            }
            let vsum = &h1 + &g;
            let (out, ln2) = layer_norm(&vsum, vecv(p, b.ln2_g, d), vecv(p, b.ln2_b, d));
            blocks.push(BlockCache {
                input,
                q,
                k,
                v,
                probs,
                concat,
                mask1,
                ln1,
                h1,
                pre_relu,
                relu,
                mask2,
                ln2,
            });
            h = out;
        }
        let flat = h.view().into_shape_with_order(t * d).expect("contiguous");
        let mut output = flat.dot(&mat(p, lay.head_w, t * d, c.horizon));
        output += &vecv(p, lay.head_b, c.horizon);
        Trace {
            x,
            blocks,
            last: h,
            output,
        }
    }

    /// Accumulates into `grad` the gradient of a loss whose derivative with
    /// respect to the outputs is `d_out`.
    pub fn backward(&self, trace: &Trace, d_out: &[f64], grad: &mut [f64]) {
        let c = &self.config;
        let (t, d, f) = (c.window, c.model_dim, c.ff_dim);
        let p = &self.params;
        let lay = &self.layout;
        let d_out = ArrayView1::from(d_out);

        // head
        let flat = trace.last.view().into_shape_with_order(t * d).expect("contiguous");
        {
            let mut gw = mat_mut(grad, lay.head_w, t * d, c.horizon);
            general_mat_mul(
                1.0,
                &flat.insert_axis(Axis(1)),
                &d_out.insert_axis(Axis(0)),
                1.0,
                &mut gw,
            );
        }
        vec_mut(grad, lay.head_b, c.horizon).scaled_add(1.0, &d_out);
        let mut dh = mat(p, lay.head_w, t * d, c.horizon)
            .dot(&d_out)
            .into_shape_with_order((t, d))
            .expect("contiguous");

        let dhd = c.head_dim();
        let scale = 1.0 / (dhd as f64).sqrt();
        for (b, cache) in lay.blocks.iter().zip(&trace.blocks).rev() {
            // second sublayer
            let mut dv_sum = {
                let (dg_ln, rest) = grad.split_at_mut(b.ln2_b);
                layer_norm_back(
                    &dh,
                    &cache.ln2,
                    vecv(p, b.ln2_g, d),
                    vec_mut(dg_ln, b.ln2_g, d),
                    vec_mut(rest, 0, d),
                )
            };
            let mut dh1 = dv_sum.clone();
            if let Some(m) = &cache.mask2 {
                dv_sum *= m;
            }
            let dg = dv_sum;
            general_mat_mul(1.0, &cache.relu.t(), &dg, 1.0, &mut mat_mut(grad, b.w2, f, d));
            vec_mut(grad, b.b2, d).scaled_add(1.0, &dg.sum_axis(Axis(0)));
            let mut dpre = dg.dot(&mat(p, b.w2, f, d).t());
            dpre.zip_mut_with(&cache.pre_relu, |g, &z| {
                if z <= 0.0 {
                    *g = 0.0
                }
            });
            general_mat_mul(1.0, &cache.h1.t(), &dpre, 1.0, &mut mat_mut(grad, b.w1, d, f));
            vec_mut(grad, b.b1, f).scaled_add(1.0, &dpre.sum_axis(Axis(0)));
            dh1 += &dpre.dot(&mat(p, b.w1, d, f).t());

            // first sublayer
            let mut du = {
                let (dg_ln, rest) = grad.split_at_mut(b.ln1_b);
                layer_norm_back(
                    &dh1,
                    &cache.ln1,
                    vecv(p, b.ln1_g, d),
                    vec_mut(dg_ln, b.ln1_g, d),
                    vec_mut(rest, 0, d),
                )
            };
            let mut d_in = du.clone();
            if let Some(m) = &cache.mask1 {
                du *= m;
            }
            let dattn = du;
            general_mat_mul(1.0, &cache.concat.t(), &dattn, 1.0, &mut mat_mut(grad, b.wo, d, d));
            vec_mut(grad, b.bo, d).scaled_add(1.0, &dattn.sum_axis(Axis(0)));
            let dconcat = dattn.dot(&mat(p, b.wo, d, d).t());
            let mut dq = Array2::zeros((t, d));
            let mut dk = Array2::zeros((t, d));
            let mut dv = Array2::zeros((t, d));
            for (hd, a) in cache.probs.iter().enumerate() {
                let cols = s![.., hd * dhd..(hd + 1) * dhd];
                let do_h = dconcat.slice(cols);
                let da = do_h.dot(&cache.v.slice(cols).t());
                dv.slice_mut(cols).assign(&a.t().dot(&do_h));
                let row = (&da * a).sum_axis(Axis(1));
                let mut ds = da - &row.insert_axis(Axis(1));
                ds *= a;
                ds *= scale;
                dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
                dk.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
            }
            for (dm, w, bias) in [(&dq, b.wq, b.bq), (&dk, b.wk, b.bk), (&dv, b.wv, b.bv)] {
                general_mat_mul(1.0, &cache.input.t(), dm, 1.0, &mut mat_mut(grad, w, d, d));
                vec_mut(grad, bias, d).scaled_add(1.0, &dm.sum_axis(Axis(0)));
                d_in += &dm.dot(&mat(p, w, d, d).t());
            }
            dh = d_in;
        }

        general_mat_mul(
            1.0,
            &trace.x.t(),
            &dh,
            1.0,
            &mut mat_mut(grad, lay.embed_w, c.n_features, d),
        );
        vec_mut(grad, lay.embed_b, d).scaled_add(1.0, &dh.sum_axis(Axis(0)));
    }

    /// Mean squared error of one window and its gradient, accumulated into
    /// `grad` with weight `weight`.
    pub fn loss_and_grad(
        &self,
        x: &[f64],
        target: &[f64],
        dropout_seed: Option<u64>,
        weight: f64,
        grad: &mut [f64],
    ) -> f64 {
        let trace = self.forward(x, dropout_seed);
        let h = self.config.horizon as f64;
        let mut loss = 0.0;
        let d_out: Vec<f64> = trace
            .output
            .iter()
            .zip(target)
            .map(|(y, t)| {
                let e = y - t;
                loss += e * e / h;
                weight * 2.0 * e / h
            })
            .collect();
        self.backward(&trace, &d_out, grad);
        loss
    }
}
