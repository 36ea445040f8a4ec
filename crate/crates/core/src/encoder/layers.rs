//! Forward and backward passes of the encoder building blocks, one
//! sequence at a time (rows are positions).

use ndarray::{s, Array1, Array2, Axis};

use super::Real;

pub const LN_EPS: f64 = 1e-5;

fn c<F: Real>(x: f64) -> F {
    F::from_f64(x).unwrap()
}

// ---------------------------------------------------------------- layer norm

pub struct LayerNormCache<F> {
    xhat: Array2<F>,
    inv_std: Array1<F>,
}

pub fn layer_norm_forward<F: Real>(
    x: &Array2<F>,
    gain: &Array1<F>,
    bias: &Array1<F>,
) -> (Array2<F>, LayerNormCache<F>) {
    let d = x.ncols();
    let mut xhat = Array2::zeros(x.raw_dim());
    let mut inv_std = Array1::zeros(x.nrows());
    for (i, row) in x.rows().into_iter().enumerate() {
        let mean = row.sum() / c(d as f64);
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / c(d as f64);
        let is = F::one() / (var + c(LN_EPS)).sqrt();
        inv_std[i] = is;
        for (j, &v) in row.iter().enumerate() {
            xhat[[i, j]] = (v - mean) * is;
        }
    }
    let y = &xhat * gain + bias;
    (y, LayerNormCache { xhat, inv_std })
}

/// Returns (dx, dgain, dbias).
pub fn layer_norm_backward<F: Real>(
    dy: &Array2<F>,
    cache: &LayerNormCache<F>,
    gain: &Array1<F>,
) -> (Array2<F>, Array1<F>, Array1<F>) {
    let d = dy.ncols();
    let dgain = (dy * &cache.xhat).sum_axis(Axis(0));
    let dbias = dy.sum_axis(Axis(0));
    let dxhat = dy * gain;
    let mut dx = Array2::zeros(dy.raw_dim());
    let df: F = c(d as f64);
    for i in 0..dy.nrows() {
        let row = dxhat.row(i);
        let xh = cache.xhat.row(i);
        let sum = row.sum();
        let sum_x = row.iter().zip(xh.iter()).map(|(&a, &b)| a * b).sum::<F>();
        let is = cache.inv_std[i];
        for j in 0..d {
            dx[[i, j]] = is / df * (df * row[j] - sum - xh[j] * sum_x);
        }
    }
    (dx, dgain, dbias)
}

// ----------------------------------------------------------------- attention

/// Weights of one multi-head self-attention block.
pub struct AttentionWeights<'a, F> {
    pub wq: &'a Array2<F>,
    pub bq: &'a Array1<F>,
    pub wk: &'a Array2<F>,
    pub bk: &'a Array1<F>,
    pub wv: &'a Array2<F>,
    pub bv: &'a Array1<F>,
    pub wo: &'a Array2<F>,
    pub bo: &'a Array1<F>,
}

pub struct AttentionGrads<F> {
    pub wq: Array2<F>,
    pub bq: Array1<F>,
    pub wk: Array2<F>,
    pub bk: Array1<F>,
    pub wv: Array2<F>,
    pub bv: Array1<F>,
    pub wo: Array2<F>,
    pub bo: Array1<F>,
}

pub struct AttentionCache<F> {
    input: Array2<F>,
    q: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    /// Per-head attention probabilities (queries × keys).
    pub probs: Vec<Array2<F>>,
    context: Array2<F>,
}

/// Masked keys (`mask[j] == false`) receive zero attention.
pub fn attention_forward<F: Real>(
    x: &Array2<F>,
    w: &AttentionWeights<F>,
    heads: usize,
    mask: &[bool],
) -> (Array2<F>, AttentionCache<F>) {
    let n = x.nrows();
    let d = x.ncols();
    let dh = d / heads;
    let scale: F = c(1.0 / (dh as f64).sqrt());
    let q = x.dot(w.wq) + w.bq;
    let k = x.dot(w.wk) + w.bk;
    let v = x.dot(w.wv) + w.bv;
    let mut context = Array2::zeros((n, d));
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let qh = q.slice(cols);
        let kh = k.slice(cols);
        let vh = v.slice(cols);
        let mut p = qh.dot(&kh.t()) * scale;
        for mut row in p.rows_mut() {
            let mut max = F::neg_infinity();
            for (j, val) in row.iter().enumerate() {
                if mask[j] && *val > max {
                    max = *val;
                }
            }
            let mut z = F::zero();
            for (j, val) in row.iter_mut().enumerate() {
                if mask[j] {
                    *val = (*val - max).exp();
                    z = z + *val;
                } else {
                    *val = F::zero();
                }
            }
            row.mapv_inplace(|e| e / z);
        }
        context.slice_mut(cols).assign(&p.dot(&vh));
        probs.push(p);
    }
    let out = context.dot(w.wo) + w.bo;
    (
        out,
        AttentionCache {
            input: x.clone(),
            q,
            k,
            v,
            probs,
            context,
        },
    )
}

pub fn attention_backward<F: Real>(
    dout: &Array2<F>,
    cache: &AttentionCache<F>,
    w: &AttentionWeights<F>,
    heads: usize,
) -> (Array2<F>, AttentionGrads<F>) {
    let d = dout.ncols();
    let dh = d / heads;
    let scale: F = c(1.0 / (dh as f64).sqrt());
    let gwo = cache.context.t().dot(dout);
    let gbo = dout.sum_axis(Axis(0));
    let dcontext = dout.dot(&w.wo.t());
    let mut dq = Array2::zeros(cache.q.raw_dim());
    let mut dk = Array2::zeros(cache.k.raw_dim());
    let mut dv = Array2::zeros(cache.v.raw_dim());
    for h in 0..heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let p = &cache.probs[h];
        let dctx = dcontext.slice(cols);
        let vh = cache.v.slice(cols);
        dv.slice_mut(cols).assign(&p.t().dot(&dctx));
        let dp = dctx.dot(&vh.t());
        // Softmax backward: dS = P ⊙ (dP − rowsum(dP ⊙ P)).
        let mut ds = Array2::zeros(p.raw_dim());
        for i in 0..p.nrows() {
            let dot: F = p.row(i).iter().zip(dp.row(i).iter()).map(|(&a, &b)| a * b).sum();
            for j in 0..p.ncols() {
                ds[[i, j]] = p[[i, j]] * (dp[[i, j]] - dot) * scale;
            }
        }
        dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
        dk.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
    }
    let x = &cache.input;
    let grads = AttentionGrads {
        wq: x.t().dot(&dq),
        bq: dq.sum_axis(Axis(0)),
        wk: x.t().dot(&dk),
        bk: dk.sum_axis(Axis(0)),
        wv: x.t().dot(&dv),
        bv: dv.sum_axis(Axis(0)),
        wo: gwo,
        bo: gbo,
    };
    let dx = dq.dot(&w.wq.t()) + dk.dot(&w.wk.t()) + dv.dot(&w.wv.t());
    (dx, grads)
}

// -------------------------------------------------------------- feed-forward

const GELU_K: f64 = 0.044_715;

fn gelu<F: Real>(x: F) -> F {
    let k: F = c((2.0 / std::f64::consts::PI).sqrt());
    let half: F = c(0.5);
    half * x * (F::one() + (k * (x + c::<F>(GELU_K) * x * x * x)).tanh())
}

fn gelu_grad<F: Real>(x: F) -> F {
    let k: F = c((2.0 / std::f64::consts::PI).sqrt());
    let half: F = c(0.5);
    let t = (k * (x + c::<F>(GELU_K) * x * x * x)).tanh();
    half * (F::one() + t) + half * x * (F::one() - t * t) * k * (F::one() + c::<F>(3.0 * GELU_K) * x * x)
}

pub struct FfnCache<F> {
    input: Array2<F>,
    pre: Array2<F>,
    act: Array2<F>,
}

pub fn ffn_forward<F: Real>(
    x: &Array2<F>,
    w1: &Array2<F>,
    b1: &Array1<F>,
    w2: &Array2<F>,
    b2: &Array1<F>,
) -> (Array2<F>, FfnCache<F>) {
    let pre = x.dot(w1) + b1;
    let act = pre.mapv(gelu);
    let out = act.dot(w2) + b2;
    (
        out,
        FfnCache {
            input: x.clone(),
            pre,
            act,
        },
    )
}

/// Returns (dx, dw1, db1, dw2, db2).
pub fn ffn_backward<F: Real>(
    dout: &Array2<F>,
    cache: &FfnCache<F>,
    w1: &Array2<F>,
    w2: &Array2<F>,
) -> (Array2<F>, Array2<F>, Array1<F>, Array2<F>, Array1<F>) {
    let dw2 = cache.act.t().dot(dout);
    let db2 = dout.sum_axis(Axis(0));
    let dact = dout.dot(&w2.t());
    let dpre = &dact * &cache.pre.mapv(gelu_grad);
    let dw1 = cache.input.t().dot(&dpre);
    let db1 = dpre.sum_axis(Axis(0));
    let dx = dpre.dot(&w1.t());
    (dx, dw1, db1, dw2, db2)
}

// ----------------------------------------------------------------- embedding

/// Token embedding plus learned position embedding.
pub fn embed_forward<F: Real>(ids: &[u32], tok: &Array2<F>, pos: &Array2<F>) -> Array2<F> {
    let d = tok.ncols();
    let mut x = Array2::zeros((ids.len(), d));
    for (t, &id) in ids.iter().enumerate() {
        let row = &tok.row(id as usize) + &pos.row(t);
        x.row_mut(t).assign(&row);
    }
    x
}

/// Scatter-adds `dx` into the token and position embedding gradients.
pub fn embed_backward<F: Real>(ids: &[u32], dx: &Array2<F>, dtok: &mut Array2<F>, dpos: &mut Array2<F>) {
    for (t, &id) in ids.iter().enumerate() {
        let g = dx.row(t);
        let mut tr = dtok.row_mut(id as usize);
        tr += &g;
        let mut pr = dpos.row_mut(t);
        pr += &g;
    }
}
