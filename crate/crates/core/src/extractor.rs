//! Transaction-sequence feature extraction with context-conditioned,
//! causally masked multi-head attention.
//!
//! Each window's transactions become 4-feature rows (price offset from the
//! window's grid anchor, log1p size, aggressor sign, time offset), encoded
//! by a bias-free two-layer perceptron. The window's context feature is
//! encoded the same way and tiled next to every transaction row, so queries
//! and keys see the market state while values stay purely transactional.
//!
//! The weighted mask keeps attention causal and re-weights same-sign versus
//! opposite-sign transaction pairs. The paper-literal multiplicative mode
//! zeroes masked logits before the softmax (which still leaks mass to
//! future positions, since exp(0) = 1); the default hybrid mode multiplies
//! the pair weight into unmasked logits and floors masked ones at -1e9 so
//! post-softmax leakage is below 1e-12. The diagonal is always visible with
//! weight 1; the time rule alone would blank out entire rows.
//!
//! Encoders here carry no bias terms: with a nonzero sphere center, a
//! bias-free network cannot satisfy the one-class objective by collapsing
//! to a constant output.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::fmath;
use crate::numerics::{Graph, ModelParams, NodeId, NumericsError, ParamCache, Tensor};
use crate::rng::{derive_seed, Rng};
use crate::segment::Segment;

/// How masked/unmasked attention logits are combined with pair weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskMode {
    /// Pair weights multiply unmasked logits; masked logits drop to -1e9.
    Hybrid,
    /// Literal elementwise product with the mask matrix (masked -> 0).
    Multiplicative,
}

impl MaskMode {
    pub fn parse(s: &str) -> Option<MaskMode> {
        match s {
            "hybrid" => Some(MaskMode::Hybrid),
            "multiplicative" => Some(MaskMode::Multiplicative),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            MaskMode::Hybrid => "hybrid",
            MaskMode::Multiplicative => "multiplicative",
        }
    }
}

/// Extractor architecture settings.
#[derive(Clone, Debug)]
pub struct ExtractorConfig {
    /// Feature width d_e (also the per-head key/value width).
    pub d_e: usize,
    pub heads: usize,
    /// Keep at most this many most-recent transactions per window.
    pub l_max: usize,
    /// Same-sign pair weight w in (0, 0.5); opposite sign gets 1 - w.
    pub mask_w: f64,
    pub mask_mode: MaskMode,
    /// Hidden width of the two-layer encoders.
    pub enc_hidden: usize,
    /// Context feature dimension (4K + 1 from the context encoder).
    pub context_dim: usize,
}

impl ExtractorConfig {
    pub fn validate(&self) -> Result<(), ExtractorError> {
        if !(self.mask_w > 0.0 && self.mask_w < 0.5) {
            return Err(ExtractorError::Config(alloc::format!(
                "mask weight must lie in (0, 0.5), got {}",
                self.mask_w
            )));
        }
        if self.d_e == 0 || self.heads == 0 || self.l_max == 0 {
            return Err(ExtractorError::Config("zero-sized extractor dimension".into()));
        }
        Ok(())
    }
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig {
            d_e: 16,
            heads: 4,
            l_max: 256,
            mask_w: 0.25,
            mask_mode: MaskMode::Hybrid,
            enc_hidden: 16,
            context_dim: 41,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExtractorError {
    Config(String),
    Numerics(NumericsError),
}

impl fmt::Display for ExtractorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtractorError::Config(m) => write!(f, "config error: {m}"),
            ExtractorError::Numerics(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for ExtractorError {}

impl From<NumericsError> for ExtractorError {
    fn from(e: NumericsError) -> Self {
        ExtractorError::Numerics(e)
    }
}

/// Raw per-transaction inputs for one window, already truncated to the most
/// recent `l_max` rows and ordered by time.
#[derive(Clone, Debug, PartialEq)]
pub struct TransactionInputs {
    /// L x 4 rows: price offset (ticks from grid anchor), log1p |size|,
    /// sign, time offset within the window in [0, 1).
    pub rows: Tensor,
    pub times: Vec<i64>,
    /// +1 active sell, -1 active buy (sign of the signed size).
    pub signs: Vec<i8>,
}

impl TransactionInputs {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

pub const TRANSACTION_FEATURES: usize = 4;

/// Builds the raw rows from a segment's transactions.
pub fn transaction_inputs(segment: &Segment, l_max: usize) -> TransactionInputs {
    let txs = &segment.transactions;
    let skip = txs.len().saturating_sub(l_max);
    let kept = &txs[skip..];
    let l = kept.len();
    let mut rows = Tensor::zeros(l, TRANSACTION_FEATURES);
    let mut times = Vec::with_capacity(l);
    let mut signs = Vec::with_capacity(l);
    let mid_ticks = segment.mid_x2 as f64 / 2.0;
    let span = (segment.end_ms - segment.start_ms).max(1) as f64;
    for (i, tx) in kept.iter().enumerate() {
        let price_ticks = tx.price_x10000 as f64 / crate::lob::PRICE_SCALE as f64;
        let sign = if tx.size > 0 { 1.0 } else { -1.0 };
        let row = rows.row_slice_mut(i);
        row[0] = price_ticks - mid_ticks;
        row[1] = fmath::ln_1p(tx.quantity() as f64);
        row[2] = sign;
        row[3] = (tx.time_ms - segment.start_ms) as f64 / span;
        times.push(tx.time_ms);
        signs.push(sign as i8);
    }
    TransactionInputs { rows, times, signs }
}

/// Symbolic mask entry, mostly for tests and dumps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MaskEntry {
    Masked,
    Weight(f64),
}

/// Weighted causal mask over an L-row transaction sequence.
///
/// Row i is the query, column j the key. Off-diagonal pairs with
/// `t_i <= t_j` are masked (no peeking at the same millisecond or later);
/// visible pairs weigh `w` when the aggressor signs match and `1 - w`
/// otherwise; the diagonal is always visible with weight 1.
#[derive(Clone, Debug)]
pub struct MaskMatrix {
    /// Multiplicative weights; masked entries are 0.
    pub weights: Tensor,
    /// Additive floor; masked entries are -1e9, visible ones 0.
    pub floor: Tensor,
}

pub const MASK_FLOOR: f64 = -1e9;

/// Builds the weighted mask from transaction times and signs.
pub fn build_mask(times: &[i64], signs: &[i8], w: f64) -> Result<MaskMatrix, ExtractorError> {
    if !(w > 0.0 && w < 0.5) {
        return Err(ExtractorError::Config(alloc::format!(
            "mask weight must lie in (0, 0.5), got {w}"
        )));
    }
    let l = times.len();
    let mut weights = Tensor::zeros(l, l);
    let mut floor = Tensor::zeros(l, l);
    for i in 0..l {
        for j in 0..l {
            if i == j {
                weights.set(i, j, 1.0);
            } else if times[i] <= times[j] {
                floor.set(i, j, MASK_FLOOR);
            } else if signs[i] == signs[j] {
                weights.set(i, j, w);
            } else {
                weights.set(i, j, 1.0 - w);
            }
        }
    }
    Ok(MaskMatrix { weights, floor })
}

impl MaskMatrix {
    pub fn entry(&self, i: usize, j: usize) -> MaskEntry {
        if self.floor.at(i, j) != 0.0 {
            MaskEntry::Masked
        } else {
            MaskEntry::Weight(self.weights.at(i, j))
        }
    }
}

const ENC_TRANS: &str = "ext.enc_trans";
const ENC_CTX: &str = "ext.enc_ctx";

fn head_name(head: usize, part: &str) -> String {
    alloc::format!("ext.attn.h{head}.{part}")
}

/// Creates extractor parameters (Xavier, no biases).
pub fn init_params(cfg: &ExtractorConfig, seed: u64) -> Result<ModelParams, NumericsError> {
    let mut rng = Rng::new(derive_seed(seed, "ext-init", 0, 0));
    let mut p = ModelParams::new();
    let (d, h) = (cfg.d_e, cfg.enc_hidden);
    p.insert(
        &alloc::format!("{ENC_TRANS}.w1"),
        Tensor::xavier(TRANSACTION_FEATURES, h, &mut rng),
    )?;
    p.insert(&alloc::format!("{ENC_TRANS}.w2"), Tensor::xavier(h, d, &mut rng))?;
    p.insert(&alloc::format!("{ENC_CTX}.w1"), Tensor::xavier(cfg.context_dim, h, &mut rng))?;
    p.insert(&alloc::format!("{ENC_CTX}.w2"), Tensor::xavier(h, d, &mut rng))?;
    for i in 0..cfg.heads {
        p.insert(&head_name(i, "wq"), Tensor::xavier(2 * d, d, &mut rng))?;
        p.insert(&head_name(i, "wk"), Tensor::xavier(2 * d, d, &mut rng))?;
        p.insert(&head_name(i, "wv"), Tensor::xavier(d, d, &mut rng))?;
    }
    p.insert("ext.attn.w_out", Tensor::xavier(cfg.heads * d, d, &mut rng))?;
    Ok(p)
}

/// Bias-free two-layer encoder (ReLU hidden, linear output). Without
/// biases the map is positively homogeneous, so the one-class objective
/// cannot collapse large-magnitude windows onto the ordinary mass without
/// rescaling every window on the same ray.
fn encoder_raw(params: &ModelParams, prefix: &str, x: &Tensor) -> Result<Tensor, NumericsError> {
    let hidden = x
        .matmul(params.get(&alloc::format!("{prefix}.w1"))?)?
        .map(|v| if v > 0.0 { v } else { 0.0 });
    hidden.matmul(params.get(&alloc::format!("{prefix}.w2"))?)
}

fn encoder_graph(
    g: &mut Graph,
    params: &ModelParams,
    bound: &mut ParamCache,
    prefix: &str,
    x: NodeId,
) -> Result<NodeId, NumericsError> {
    let w1 = bound.bind(g, params, &alloc::format!("{prefix}.w1"))?;
    let w2 = bound.bind(g, params, &alloc::format!("{prefix}.w2"))?;
    let h = g.matmul(x, w1)?;
    let h = g.relu(h);
    g.matmul(h, w2)
}

/// Encodes transaction rows to L x d_e (the spec's per-row map).
pub fn encode_transactions(
    params: &ModelParams,
    inputs: &TransactionInputs,
) -> Result<Tensor, NumericsError> {
    encoder_raw(params, ENC_TRANS, &inputs.rows)
}

/// Encodes a context feature to a d_e-vector.
pub fn encode_context(params: &ModelParams, feature: &[f64]) -> Result<Vec<f64>, NumericsError> {
    let out = encoder_raw(params, ENC_CTX, &Tensor::row(feature))?;
    Ok(out.data().to_vec())
}

/// Per-window attention rows (softmaxed), one matrix per head. Exposed for
/// the causality checks.
pub struct AttentionTrace {
    pub per_head: Vec<Tensor>,
}

fn masked_logits(
    logits: &Tensor,
    mask: &MaskMatrix,
    mode: MaskMode,
) -> Result<Tensor, NumericsError> {
    match mode {
        MaskMode::Hybrid => logits.mul(&mask.weights)?.add(&mask.floor),
        MaskMode::Multiplicative => logits.mul(&mask.weights),
    }
}

/// Frozen-inference conditional attention for one window. Returns the
/// d_e-dim window feature, plus attention matrices when `trace` is set.
pub fn extract_feature(
    params: &ModelParams,
    cfg: &ExtractorConfig,
    inputs: &TransactionInputs,
    context_feature: &[f64],
    trace: Option<&mut AttentionTrace>,
) -> Result<Option<Vec<f64>>, ExtractorError> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Ok(None);
    }
    let l = inputs.len();
    let e_trans = encode_transactions(params, inputs)?;
    let r = encoder_raw(params, ENC_CTX, &Tensor::row(context_feature))?;
    let mut r_rows = Tensor::zeros(l, cfg.d_e);
    for i in 0..l {
        r_rows.row_slice_mut(i).copy_from_slice(r.row_slice(0));
    }
    let x_tilde = Tensor::concat_cols(&[&e_trans, &r_rows])?;
    let mask = build_mask(&inputs.times, &inputs.signs, cfg.mask_w)?;
    let scale = 1.0 / fmath::sqrt(cfg.d_e as f64);

    let mut heads = Vec::with_capacity(cfg.heads);
    let mut traces = Vec::new();
    for i in 0..cfg.heads {
        let q = x_tilde.matmul(params.get(&head_name(i, "wq"))?)?;
        let k = x_tilde.matmul(params.get(&head_name(i, "wk"))?)?;
        let v = e_trans.matmul(params.get(&head_name(i, "wv"))?)?;
        let logits = q.matmul_tb(&k)?.scale(scale);
        let attn = masked_logits(&logits, &mask, cfg.mask_mode)?.row_softmax();
        let pooled = attn.matmul(&v)?.row_maxpool();
        if trace.is_some() {
            traces.push(attn);
        }
        heads.push(pooled);
    }
    if let Some(t) = trace {
        t.per_head = traces;
    }
    let head_refs: Vec<&Tensor> = heads.iter().collect();
    let joined = Tensor::concat_cols(&head_refs)?;
    let out = joined.matmul(params.get("ext.attn.w_out")?)?;
    Ok(Some(out.data().to_vec()))
}

/// Graph version of [`extract_feature`] for end-to-end training; the caller
/// guarantees a nonempty window.
pub fn feature_graph(
    g: &mut Graph,
    params: &ModelParams,
    bound: &mut ParamCache,
    cfg: &ExtractorConfig,
    inputs: &TransactionInputs,
    context_feature: &[f64],
) -> Result<NodeId, ExtractorError> {
    debug_assert!(!inputs.is_empty());
    let l = inputs.len();
    let rows = g.input(inputs.rows.clone())?;
    let e_trans = encoder_graph(g, params, bound, ENC_TRANS, rows)?;
    let ctx = g.input(Tensor::row(context_feature))?;
    let r = encoder_graph(g, params, bound, ENC_CTX, ctx)?;
    let r_rows = g.repeat_row(r, l)?;
    let x_tilde = g.concat_cols(&[e_trans, r_rows])?;
    let mask = build_mask(&inputs.times, &inputs.signs, cfg.mask_w)?;
    let weights = g.input(mask.weights.clone())?;
    let scale = 1.0 / fmath::sqrt(cfg.d_e as f64);

    let mut heads = Vec::with_capacity(cfg.heads);
    for i in 0..cfg.heads {
        let wq = bound.bind(g, params, &head_name(i, "wq"))?;
        let wk = bound.bind(g, params, &head_name(i, "wk"))?;
        let wv = bound.bind(g, params, &head_name(i, "wv"))?;
        let q = g.matmul(x_tilde, wq)?;
        let k = g.matmul(x_tilde, wk)?;
        let v = g.matmul(e_trans, wv)?;
        let logits = g.matmul_tb(q, k)?;
        let logits = g.scale(logits, scale);
        let combined = g.mul(logits, weights)?;
        let combined = match cfg.mask_mode {
            MaskMode::Hybrid => {
                let floor = g.input(mask.floor.clone())?;
                g.add(combined, floor)?
            }
            MaskMode::Multiplicative => combined,
        };
        let attn = g.row_softmax(combined);
        let av = g.matmul(attn, v)?;
        heads.push(g.row_maxpool(av));
    }
    let joined = g.concat_cols(&heads)?;
    let w_out = bound.bind(g, params, "ext.attn.w_out")?;
    Ok(g.matmul(joined, w_out)?)
}
