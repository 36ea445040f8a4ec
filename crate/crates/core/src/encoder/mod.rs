//! Compact transformer text encoder with per-role dense heads.
//!
//! Pre-layer-norm blocks, GELU feed-forward, learned positions and a final
//! layer norm; the `[CLS]` state (position 0) is the sequence vector.
//! Gradients are computed analytically by [`compute_gradients`].

pub mod layers;
mod checkpoint;
mod optim;

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textres::SEP;
use layers::{
    attention_backward, attention_forward, embed_backward, embed_forward, ffn_backward, ffn_forward,
    layer_norm_backward, layer_norm_forward, AttentionCache, AttentionWeights, FfnCache, LayerNormCache,
};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointManifest, CHECKPOINT_VERSION};
pub use optim::{Adam, AdamConfig};

/// Floating-point type the encoder can run in.
pub trait Real:
    ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + num_traits::Float
    + num_traits::FromPrimitive
    + std::iter::Sum
    + std::fmt::Debug
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    pub max_len: usize,
    pub d_out: usize,
}

impl EncoderConfig {
    pub fn with_vocab(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.vocab_size, self.d_model, self.layers, self.heads, self.ffn, self.max_len, self.d_out];
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidConfig("encoder dimensions must be >= 1".into()));
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "d_model {} is not divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if self.max_len < 2 {
            return Err(Error::InvalidConfig("max_len must be >= 2".into()));
        }
        Ok(())
    }
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            vocab_size: 0,
            d_model: 64,
            layers: 2,
            heads: 4,
            ffn: 256,
            max_len: 64,
            d_out: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<F> {
    pub ln1_g: Array1<F>,
    pub ln1_b: Array1<F>,
    pub wq: Array2<F>,
    pub bq: Array1<F>,
    pub wk: Array2<F>,
    pub bk: Array1<F>,
    pub wv: Array2<F>,
    pub bv: Array1<F>,
    pub wo: Array2<F>,
    pub bo: Array1<F>,
    pub ln2_g: Array1<F>,
    pub ln2_b: Array1<F>,
    pub w1: Array2<F>,
    pub b1: Array1<F>,
    pub w2: Array2<F>,
    pub b2: Array1<F>,
}

impl<F: Real> LayerParams<F> {
    fn attention(&self) -> AttentionWeights<'_, F> {
        AttentionWeights {
            wq: &self.wq,
            bq: &self.bq,
            wk: &self.wk,
            bk: &self.bk,
            wv: &self.wv,
            bv: &self.bv,
            wo: &self.wo,
            bo: &self.bo,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<F> {
    pub tok_emb: Array2<F>,
    pub pos_emb: Array2<F>,
    pub layers: Vec<LayerParams<F>>,
    pub lnf_g: Array1<F>,
    pub lnf_b: Array1<F>,
}

/// Affine projection `cls · W + b` with `W` of shape d_model × d_out.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseHead<F> {
    pub w: Array2<F>,
    pub b: Array1<F>,
}

/// A named tensor slot: name, shape, flat data.
pub type TensorRef<'a, F> = (String, Vec<usize>, &'a [F]);

/// Access to every trainable tensor in a fixed order.
pub trait Tensors<F> {
    fn tensors(&self) -> Vec<TensorRef<'_, F>>;
    fn tensors_mut(&mut self) -> Vec<&mut [F]>;
}

macro_rules! push_tensor {
    ($out:ident, $name:expr, $arr:expr) => {
        $out.push((
            $name,
            $arr.shape().to_vec(),
            $arr.as_slice().expect("standard layout tensor"),
        ))
    };
}

impl<F: Real> Tensors<F> for EncoderParams<F> {
    fn tensors(&self) -> Vec<TensorRef<'_, F>> {
        let mut out = Vec::new();
        push_tensor!(out, "tok_emb".to_string(), self.tok_emb);
        push_tensor!(out, "pos_emb".to_string(), self.pos_emb);
        for (i, l) in self.layers.iter().enumerate() {
            let p = |n: &str| format!("layers.{i}.{n}");
            push_tensor!(out, p("ln1_g"), l.ln1_g);
            push_tensor!(out, p("ln1_b"), l.ln1_b);
            push_tensor!(out, p("wq"), l.wq);
            push_tensor!(out, p("bq"), l.bq);
            push_tensor!(out, p("wk"), l.wk);
            push_tensor!(out, p("bk"), l.bk);
            push_tensor!(out, p("wv"), l.wv);
            push_tensor!(out, p("bv"), l.bv);
            push_tensor!(out, p("wo"), l.wo);
            push_tensor!(out, p("bo"), l.bo);
            push_tensor!(out, p("ln2_g"), l.ln2_g);
            push_tensor!(out, p("ln2_b"), l.ln2_b);
            push_tensor!(out, p("w1"), l.w1);
            push_tensor!(out, p("b1"), l.b1);
            push_tensor!(out, p("w2"), l.w2);
            push_tensor!(out, p("b2"), l.b2);
        }
        push_tensor!(out, "lnf_g".to_string(), self.lnf_g);
        push_tensor!(out, "lnf_b".to_string(), self.lnf_b);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut out: Vec<&mut [F]> = Vec::new();
        out.push(self.tok_emb.as_slice_mut().unwrap());
        out.push(self.pos_emb.as_slice_mut().unwrap());
        for l in self.layers.iter_mut() {
            out.push(l.ln1_g.as_slice_mut().unwrap());
            out.push(l.ln1_b.as_slice_mut().unwrap());
            out.push(l.wq.as_slice_mut().unwrap());
            out.push(l.bq.as_slice_mut().unwrap());
            out.push(l.wk.as_slice_mut().unwrap());
            out.push(l.bk.as_slice_mut().unwrap());
            out.push(l.wv.as_slice_mut().unwrap());
            out.push(l.bv.as_slice_mut().unwrap());
            out.push(l.wo.as_slice_mut().unwrap());
            out.push(l.bo.as_slice_mut().unwrap());
            out.push(l.ln2_g.as_slice_mut().unwrap());
            out.push(l.ln2_b.as_slice_mut().unwrap());
            out.push(l.w1.as_slice_mut().unwrap());
            out.push(l.b1.as_slice_mut().unwrap());
            out.push(l.w2.as_slice_mut().unwrap());
            out.push(l.b2.as_slice_mut().unwrap());
        }
        out.push(self.lnf_g.as_slice_mut().unwrap());
        out.push(self.lnf_b.as_slice_mut().unwrap());
        out
    }
}

impl<F: Real> Tensors<F> for DenseHead<F> {
    fn tensors(&self) -> Vec<TensorRef<'_, F>> {
        let mut out = Vec::new();
        push_tensor!(out, "w".to_string(), self.w);
        push_tensor!(out, "b".to_string(), self.b);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        vec![self.w.as_slice_mut().unwrap(), self.b.as_slice_mut().unwrap()]
    }
}

fn normal_matrix<F: Real>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<F> {
    let dist = Normal::new(0.0f64, 0.02).unwrap();
    Array2::from_shape_fn((rows, cols), |_| F::from_f64(dist.sample(rng)).unwrap())
}

impl<F: Real> EncoderParams<F> {
    /// Normal(0, 0.02) weights, zero biases, unit layer-norm gains.
    pub fn init(cfg: &EncoderConfig, rng: &mut ChaCha8Rng) -> Self {
        let d = cfg.d_model;
        let ones = || Array1::from_elem(d, F::one());
        let zeros = |n| Array1::zeros(n);
        let tok_emb = normal_matrix(cfg.vocab_size, d, rng);
        let pos_emb = normal_matrix(cfg.max_len, d, rng);
        let layers = (0..cfg.layers)
            .map(|_| LayerParams {
                ln1_g: ones(),
                ln1_b: zeros(d),
                wq: normal_matrix(d, d, rng),
                bq: zeros(d),
                wk: normal_matrix(d, d, rng),
                bk: zeros(d),
                wv: normal_matrix(d, d, rng),
                bv: zeros(d),
                wo: normal_matrix(d, d, rng),
                bo: zeros(d),
                ln2_g: ones(),
                ln2_b: zeros(d),
                w1: normal_matrix(d, cfg.ffn, rng),
                b1: zeros(cfg.ffn),
                w2: normal_matrix(cfg.ffn, d, rng),
                b2: zeros(d),
            })
            .collect();
        EncoderParams {
            tok_emb,
            pos_emb,
            layers,
            lnf_g: ones(),
            lnf_b: zeros(d),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z2 = |a: &Array2<F>| Array2::zeros(a.raw_dim());
        let z1 = |a: &Array1<F>| Array1::zeros(a.raw_dim());
        EncoderParams {
            tok_emb: z2(&self.tok_emb),
            pos_emb: z2(&self.pos_emb),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    ln1_g: z1(&l.ln1_g),
                    ln1_b: z1(&l.ln1_b),
                    wq: z2(&l.wq),
                    bq: z1(&l.bq),
                    wk: z2(&l.wk),
                    bk: z1(&l.bk),
                    wv: z2(&l.wv),
                    bv: z1(&l.bv),
                    wo: z2(&l.wo),
                    bo: z1(&l.bo),
                    ln2_g: z1(&l.ln2_g),
                    ln2_b: z1(&l.ln2_b),
                    w1: z2(&l.w1),
                    b1: z1(&l.b1),
                    w2: z2(&l.w2),
                    b2: z1(&l.b2),
                })
                .collect(),
            lnf_g: z1(&self.lnf_g),
            lnf_b: z1(&self.lnf_b),
        }
    }

    pub fn d_model(&self) -> usize {
        self.tok_emb.ncols()
    }

    pub fn max_len(&self) -> usize {
        self.pos_emb.nrows()
    }
}

impl<F: Real> DenseHead<F> {
    pub fn init(d_in: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Self {
        DenseHead {
            w: normal_matrix(d_in, d_out, rng),
            b: Array1::zeros(d_out),
        }
    }

    pub fn zeros_like(&self) -> Self {
        DenseHead {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }

    pub fn d_out(&self) -> usize {
        self.w.ncols()
    }

    /// `cls · W + b`.
    pub fn project(&self, cls: &[F]) -> Result<Array1<F>> {
        if cls.len() != self.w.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.w.nrows(),
                actual: cls.len(),
            });
        }
        let v = ndarray::ArrayView1::from(cls);
        Ok(v.dot(&self.w) + &self.b)
    }

    /// Row-wise projection of a matrix of [CLS] vectors.
    pub fn project_rows(&self, cls: &Array2<F>) -> Array2<F> {
        cls.dot(&self.w) + &self.b
    }
}

/// Result of running the encoder on one sequence.
#[derive(Debug, Clone)]
pub struct Encoded<F> {
    pub states: Array2<F>,
    pub cls: Array1<F>,
    /// Set when the input exceeded the maximum length and was truncated.
    pub truncated: bool,
}

struct LayerTrace<F> {
    ln1: LayerNormCache<F>,
    attn: AttentionCache<F>,
    ln2: LayerNormCache<F>,
    ffn: FfnCache<F>,
}

/// Intermediate values recorded by a forward pass for the backward pass.
pub struct Trace<F> {
    ids: Vec<u32>,
    layers: Vec<LayerTrace<F>>,
    lnf: LayerNormCache<F>,
}

impl<F> Trace<F> {
    /// Per-layer, per-head attention probability matrices.
    pub fn attention_probs(&self) -> Vec<&[Array2<F>]> {
        self.layers.iter().map(|l| l.attn.probs.as_slice()).collect()
    }
}

/// Cuts `ids` to `max_len`, keeping position 0 and a trailing [SEP] if the
/// sequence ended with one.
pub fn truncate_ids(ids: &[u32], max_len: usize) -> (Vec<u32>, bool) {
    if ids.len() <= max_len {
        return (ids.to_vec(), false);
    }
    let mut out = ids[..max_len].to_vec();
    if ids.last() == Some(&SEP) && max_len >= 2 {
        out[max_len - 1] = SEP;
    }
    (out, true)
}

fn forward_inner<F: Real>(
    params: &EncoderParams<F>,
    heads: usize,
    ids: &[u32],
    mask: &[bool],
) -> (Array2<F>, Trace<F>) {
    let mut x = embed_forward(ids, &params.tok_emb, &params.pos_emb);
    let mut traces = Vec::with_capacity(params.layers.len());
    for l in &params.layers {
        let (h1, ln1) = layer_norm_forward(&x, &l.ln1_g, &l.ln1_b);
        let (a, attn) = attention_forward(&h1, &l.attention(), heads, mask);
        x = x + a;
        let (h2, ln2) = layer_norm_forward(&x, &l.ln2_g, &l.ln2_b);
        let (f, ffn) = ffn_forward(&h2, &l.w1, &l.b1, &l.w2, &l.b2);
        x = x + f;
        traces.push(LayerTrace { ln1, attn, ln2, ffn });
    }
    let (out, lnf) = layer_norm_forward(&x, &params.lnf_g, &params.lnf_b);
    (
        out,
        Trace {
            ids: ids.to_vec(),
            layers: traces,
            lnf,
        },
    )
}

/// Forward pass with an attention mask over key positions (`false` =
/// padding). Over-length input is truncated per [`truncate_ids`].
pub fn encode_traced<F: Real>(
    params: &EncoderParams<F>,
    heads: usize,
    ids: &[u32],
    mask: Option<&[bool]>,
) -> Result<(Encoded<F>, Trace<F>)> {
    if ids.is_empty() {
        return Err(Error::InvalidConfig("cannot encode an empty sequence".into()));
    }
    let vocab = params.tok_emb.nrows();
    if let Some(&bad) = ids.iter().find(|&&id| id as usize >= vocab) {
        return Err(Error::DimensionMismatch {
            expected: vocab,
            actual: bad as usize,
        });
    }
    let (ids, truncated) = truncate_ids(ids, params.max_len());
    let full_mask;
    let mask = match mask {
        Some(m) => {
            if m.len() < ids.len() {
                return Err(Error::DimensionMismatch {
                    expected: ids.len(),
                    actual: m.len(),
                });
            }
            &m[..ids.len()]
        }
        None => {
            full_mask = vec![true; ids.len()];
            &full_mask
        }
    };
    let (states, trace) = forward_inner(params, heads, &ids, mask);
    let cls = states.row(0).to_owned();
    Ok((Encoded { states, cls, truncated }, trace))
}

pub fn encode<F: Real>(
    params: &EncoderParams<F>,
    heads: usize,
    ids: &[u32],
    mask: Option<&[bool]>,
) -> Result<Encoded<F>> {
    encode_traced(params, heads, ids, mask).map(|(e, _)| e)
}

/// Accumulates parameter gradients given the gradient of the loss with
/// respect to every output state.
pub fn backward<F: Real>(
    params: &EncoderParams<F>,
    heads: usize,
    trace: &Trace<F>,
    d_states: &Array2<F>,
    grads: &mut EncoderParams<F>,
) {
    let (mut dx, dg, db) = layer_norm_backward(d_states, &trace.lnf, &params.lnf_g);
    grads.lnf_g += &dg;
    grads.lnf_b += &db;
    for (li, (l, t)) in params.layers.iter().zip(&trace.layers).enumerate().rev() {
        let g = &mut grads.layers[li];
        let (dh2, dw1, db1, dw2, db2) = ffn_backward(&dx, &t.ffn, &l.w1, &l.w2);
        g.w1 += &dw1;
        g.b1 += &db1;
        g.w2 += &dw2;
        g.b2 += &db2;
        let (dx2, dg2, db2n) = layer_norm_backward(&dh2, &t.ln2, &l.ln2_g);
        g.ln2_g += &dg2;
        g.ln2_b += &db2n;
        dx = dx + dx2;
        let (dh1, ag) = attention_backward(&dx, &t.attn, &l.attention(), heads);
        g.wq += &ag.wq;
        g.bq += &ag.bq;
        g.wk += &ag.wk;
        g.bk += &ag.bk;
        g.wv += &ag.wv;
        g.bv += &ag.bv;
        g.wo += &ag.wo;
        g.bo += &ag.bo;
        let (dx1, dg1, db1n) = layer_norm_backward(&dh1, &t.ln1, &l.ln1_g);
        g.ln1_g += &dg1;
        g.ln1_b += &db1n;
        dx = dx + dx1;
    }
    embed_backward(&trace.ids, &dx, &mut grads.tok_emb, &mut grads.pos_emb);
}

/// Shared encoder with two projection heads that do not share parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DualHeadModel<F> {
    pub config: EncoderConfig,
    pub encoder: EncoderParams<F>,
    pub head_a: DenseHead<F>,
    pub head_b: DenseHead<F>,
}

impl<F: Real> DualHeadModel<F> {
    pub fn init(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = EncoderParams::init(&config, &mut rng);
        let head_a = DenseHead::init(config.d_model, config.d_out, &mut rng);
        let head_b = DenseHead::init(config.d_model, config.d_out, &mut rng);
        Ok(DualHeadModel {
            config,
            encoder,
            head_a,
            head_b,
        })
    }

    pub fn zeros_like(&self) -> Self {
        DualHeadModel {
            config: self.config.clone(),
            encoder: self.encoder.zeros_like(),
            head_a: self.head_a.zeros_like(),
            head_b: self.head_b.zeros_like(),
        }
    }

    /// [CLS] vector of one sequence.
    pub fn cls(&self, ids: &[u32]) -> Result<Array1<F>> {
        Ok(encode(&self.encoder, self.config.heads, ids, None)?.cls)
    }

    pub fn embed_a(&self, ids: &[u32]) -> Result<Array1<F>> {
        self.head_a.project(self.cls(ids)?.as_slice().unwrap())
    }

    pub fn embed_b(&self, ids: &[u32]) -> Result<Array1<F>> {
        self.head_b.project(self.cls(ids)?.as_slice().unwrap())
    }
}

impl<F: Real> Tensors<F> for DualHeadModel<F> {
    fn tensors(&self) -> Vec<TensorRef<'_, F>> {
        let mut out: Vec<TensorRef<'_, F>> = self
            .encoder
            .tensors()
            .into_iter()
            .map(|(n, s, d)| (format!("encoder.{n}"), s, d))
            .collect();
        out.extend(self.head_a.tensors().into_iter().map(|(n, s, d)| (format!("head_a.{n}"), s, d)));
        out.extend(self.head_b.tensors().into_iter().map(|(n, s, d)| (format!("head_b.{n}"), s, d)));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut out = self.encoder.tensors_mut();
        out.extend(self.head_a.tensors_mut());
        out.extend(self.head_b.tensors_mut());
        out
    }
}

/// Loss over the projected outputs of both sides: returns the loss and its
/// gradient with respect to each side's output rows.
pub type SideLoss<'a, F> = dyn FnOnce(&Array2<F>, &Array2<F>) -> Result<(F, Array2<F>, Array2<F>)> + 'a;

/// Runs the forward pass for two lists of sequences (side A through
/// `head_a`, side B through `head_b`), evaluates `loss` on the projected
/// outputs and back-propagates into every trainable tensor.
///
/// A non-finite loss is reported as an error and no gradients are returned.
pub fn compute_gradients<F: Real>(
    model: &DualHeadModel<F>,
    side_a: &[Vec<u32>],
    side_b: &[Vec<u32>],
    loss: Box<SideLoss<'_, F>>,
) -> Result<(F, DualHeadModel<F>)> {
    let heads = model.config.heads;
    let d = model.config.d_model;
    let run = |seqs: &[Vec<u32>]| -> Result<(Array2<F>, Vec<Trace<F>>)> {
        let mut cls = Array2::zeros((seqs.len(), d));
        let mut traces = Vec::with_capacity(seqs.len());
        for (i, ids) in seqs.iter().enumerate() {
            let (enc, trace) = encode_traced(&model.encoder, heads, ids, None)?;
            cls.row_mut(i).assign(&enc.cls);
            traces.push(trace);
        }
        Ok((cls, traces))
    };
    let (cls_a, traces_a) = run(side_a)?;
    let (cls_b, traces_b) = run(side_b)?;
    let out_a = model.head_a.project_rows(&cls_a);
    let out_b = model.head_b.project_rows(&cls_b);
    let (value, d_out_a, d_out_b) = loss(&out_a, &out_b)?;
    if !value.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    let mut grads = model.zeros_like();
    let side = |cls: &Array2<F>,
                    traces: &[Trace<F>],
                    d_out: &Array2<F>,
                    head: &DenseHead<F>,
                    head_grad: &mut DenseHead<F>,
                    enc_grad: &mut EncoderParams<F>| {
        head_grad.w += &cls.t().dot(d_out);
        head_grad.b += &d_out.sum_axis(Axis(0));
        let d_cls = d_out.dot(&head.w.t());
        for (i, trace) in traces.iter().enumerate() {
            let n = trace.ids.len();
            let mut d_states = Array2::zeros((n, d));
            d_states.row_mut(0).assign(&d_cls.row(i));
            backward(&model.encoder, heads, trace, &d_states, enc_grad);
        }
    };
    let DualHeadModel {
        encoder: enc_grad,
        head_a: ga,
        head_b: gb,
        ..
    } = &mut grads;
    side(&cls_a, &traces_a, &d_out_a, &model.head_a, ga, enc_grad);
    side(&cls_b, &traces_b, &d_out_b, &model.head_b, gb, enc_grad);
    Ok((value, grads))
}
