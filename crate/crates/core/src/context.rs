//! Context encoder: twin recurrent generators over historical accumulated
//! books.
//!
//! Two independent LSTM chains fold the last M windows' accumulated buy and
//! sell books. Their final hidden states cross-condition a pair of MLP
//! generators (each sees its own state first, the other side's second) that
//! emit the next window's accumulated books in nonnegative log1p-volume
//! space. The predicted end-of-window book is the boundary book plus both
//! generated deltas; its L1 gap to the realized book is the scalar `gamma`,
//! and the window's context feature is `[real | predicted | gamma]`.
//!
//! Training minimizes mean |gamma| with Adam and early-stops on a validation
//! set. Inference runs a batched sliding-window recurrence over a whole day
//! at once, which is arithmetic-identical to folding each window separately
//! (per-row matmul reductions do not mix rows).

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::data::{NormFitter, NormStats};
use crate::fmath;
use crate::lob::Side;
use crate::numerics::{Adam, Graph, ModelParams, NodeId, NumericsError, ParamCache, Tensor};
use crate::rng::{derive_seed, Rng};
use crate::segment::{accumulate_side, vectorize_book, vectorize_top, BookVector, Segment};

/// Architecture settings for the encoder and generators.
#[derive(Clone, Debug)]
pub struct ContextConfig {
    /// Price-grid levels per side.
    pub k_levels: usize,
    /// Grid spacing in ticks.
    pub tick: i64,
    /// History length M in windows.
    pub m_history: usize,
    /// LSTM hidden width per side.
    pub lstm_hidden: usize,
    /// Generator MLP hidden width.
    pub gen_hidden: usize,
    /// Feed the boundary book to the recurrence alongside the accumulated
    /// books (off by default: the printed recurrence sees deltas only).
    pub feed_book: bool,
}

impl Default for ContextConfig {
    fn default() -> Self {
        ContextConfig {
            k_levels: 10,
            tick: 1,
            m_history: 100,
            lstm_hidden: 64,
            gen_hidden: 64,
            feed_book: false,
        }
    }
}

impl ContextConfig {
    pub fn book_dim(&self) -> usize {
        2 * self.k_levels
    }

    pub fn input_dim(&self) -> usize {
        if self.feed_book {
            4 * self.k_levels
        } else {
            2 * self.k_levels
        }
    }

    /// Dimension of the context feature `[real | predicted | gamma]`.
    pub fn feature_dim(&self) -> usize {
        4 * self.k_levels + 1
    }
}

/// Final recurrent state for one window (both sides).
#[derive(Clone, Debug)]
pub struct EncoderState {
    pub h_buy: Vec<f64>,
    pub h_sell: Vec<f64>,
    pub c_buy: Vec<f64>,
    pub c_sell: Vec<f64>,
}

/// Per-day input/target matrices, one row per window.
#[derive(Clone, Debug)]
pub struct DayMatrices {
    /// Buy-side recurrence inputs (normalized in place by the pipeline).
    pub x_buy: Tensor,
    /// Sell-side recurrence inputs.
    pub x_sell: Tensor,
    /// Vectorized boundary books (raw log1p space).
    pub prev: Tensor,
    /// Vectorized end-of-window books (raw log1p space).
    pub real: Tensor,
}

impl DayMatrices {
    pub fn n_segments(&self) -> usize {
        self.real.rows()
    }
}

/// Builds raw (unnormalized) day matrices from segmented data.
pub fn build_day_matrices(segments: &[Segment], cfg: &ContextConfig) -> DayMatrices {
    let s = segments.len();
    let (k, tick) = (cfg.k_levels, cfg.tick);
    let mut x_buy = Tensor::zeros(s, cfg.input_dim());
    let mut x_sell = Tensor::zeros(s, cfg.input_dim());
    let mut prev = Tensor::zeros(s, cfg.book_dim());
    let mut real = Tensor::zeros(s, cfg.book_dim());
    for (i, seg) in segments.iter().enumerate() {
        let delta_buy = vectorize_book(&accumulate_side(seg, Side::Bid), seg.mid_x2, k, tick);
        let delta_sell = vectorize_book(&accumulate_side(seg, Side::Ask), seg.mid_x2, k, tick);
        let boundary = vectorize_top(&seg.boundary, seg.mid_x2, k, tick);
        x_buy.row_slice_mut(i)[..2 * k].copy_from_slice(delta_buy.values());
        x_sell.row_slice_mut(i)[..2 * k].copy_from_slice(delta_sell.values());
        if cfg.feed_book {
            x_buy.row_slice_mut(i)[2 * k..].copy_from_slice(boundary.values());
            x_sell.row_slice_mut(i)[2 * k..].copy_from_slice(boundary.values());
        }
        prev.row_slice_mut(i).copy_from_slice(boundary.values());
        real.row_slice_mut(i)
            .copy_from_slice(vectorize_top(&seg.end_book, seg.mid_x2, k, tick).values());
    }
    DayMatrices { x_buy, x_sell, prev, real }
}

/// Fits per-side input statistics over training days.
pub fn fit_input_stats(
    days: &[DayMatrices],
) -> Result<(NormStats, NormStats), crate::data::DataError> {
    let dim = days.first().map_or(0, |d| d.x_buy.cols());
    let mut fit_b = NormFitter::new(dim);
    let mut fit_s = NormFitter::new(dim);
    for day in days {
        for r in 0..day.n_segments() {
            fit_b.push(day.x_buy.row_slice(r));
            fit_s.push(day.x_sell.row_slice(r));
        }
    }
    Ok((fit_b.finish()?, fit_s.finish()?))
}

/// Normalizes a day's recurrence inputs in place (zero-variance columns to
/// zero, keeping dimensions).
pub fn normalize_day(day: &mut DayMatrices, stats_buy: &NormStats, stats_sell: &NormStats) {
    for r in 0..day.n_segments() {
        stats_buy.apply_keep_dims(day.x_buy.row_slice_mut(r));
        stats_sell.apply_keep_dims(day.x_sell.row_slice_mut(r));
    }
}

const SIDES: [&str; 2] = ["buy", "sell"];
const GATES: [&str; 4] = ["i", "f", "g", "o"];

/// Creates all encoder/generator parameters: Xavier weights, zero biases.
pub fn init_params(cfg: &ContextConfig, seed: u64) -> Result<ModelParams, NumericsError> {
    let mut rng = Rng::new(derive_seed(seed, "ctx-init", 0, 0));
    let mut params = ModelParams::new();
    let (ind, h, gh, out) = (cfg.input_dim(), cfg.lstm_hidden, cfg.gen_hidden, cfg.book_dim());
    for side in SIDES {
        for gate in GATES {
            params.insert(&lstm_name(side, "x", gate), Tensor::xavier(ind, h, &mut rng))?;
            params.insert(&lstm_name(side, "h", gate), Tensor::xavier(h, h, &mut rng))?;
            params.insert(&lstm_name(side, "b", gate), Tensor::zeros(1, h))?;
        }
    }
    for side in SIDES {
        params.insert(&gen_name(side, "w1"), Tensor::xavier(2 * h, gh, &mut rng))?;
        params.insert(&gen_name(side, "b1"), Tensor::zeros(1, gh))?;
        params.insert(&gen_name(side, "w2"), Tensor::xavier(gh, out, &mut rng))?;
        params.insert(&gen_name(side, "b2"), Tensor::zeros(1, out))?;
    }
    Ok(params)
}

fn lstm_name(side: &str, kind: &str, gate: &str) -> String {
    alloc::format!("ctx.lstm_{side}.{kind}{gate}")
}

fn gen_name(side: &str, part: &str) -> String {
    alloc::format!("ctx.gen_{side}.{part}")
}

/// One LSTM step on raw tensors; rows are independent chain instances.
fn lstm_cell_raw(
    params: &ModelParams,
    side: &str,
    x: &Tensor,
    h: &Tensor,
    c: &Tensor,
) -> Result<(Tensor, Tensor), NumericsError> {
    let gate = |g: &str, act: fn(f64) -> f64| -> Result<Tensor, NumericsError> {
        let wx = params.get(&lstm_name(side, "x", g))?;
        let wh = params.get(&lstm_name(side, "h", g))?;
        let b = params.get(&lstm_name(side, "b", g))?;
        let z = x.matmul(wx)?.add(&h.matmul(wh)?)?.add_row(b)?;
        Ok(z.map(act))
    };
    let i = gate("i", fmath::sigmoid)?;
    let f = gate("f", fmath::sigmoid)?;
    let g = gate("g", fmath::tanh)?;
    let o = gate("o", fmath::sigmoid)?;
    let c_next = f.mul(c)?.add(&i.mul(&g)?)?;
    let h_next = o.mul(&c_next.map(fmath::tanh))?;
    Ok((h_next, c_next))
}

/// Same cell as a graph fragment; arithmetic-identical to [`lstm_cell_raw`].
fn lstm_cell_graph(
    g: &mut Graph,
    params: &ModelParams,
    bound: &mut ParamCache,
    side: &str,
    x: NodeId,
    h: NodeId,
    c: NodeId,
) -> Result<(NodeId, NodeId), NumericsError> {
    let mut gate = |gr: &mut Graph, name: &str| -> Result<NodeId, NumericsError> {
        let wx = bound.bind(gr, params, &lstm_name(side, "x", name))?;
        let wh = bound.bind(gr, params, &lstm_name(side, "h", name))?;
        let b = bound.bind(gr, params, &lstm_name(side, "b", name))?;
        let xa = gr.matmul(x, wx)?;
        let ha = gr.matmul(h, wh)?;
        let z = gr.add(xa, ha)?;
        gr.add_row(z, b)
    };
    let zi = gate(g, "i")?;
    let zf = gate(g, "f")?;
    let zg = gate(g, "g")?;
    let zo = gate(g, "o")?;
    let i = g.sigmoid(zi);
    let f = g.sigmoid(zf);
    let gt = g.tanh(zg);
    let o = g.sigmoid(zo);
    let fc = g.mul(f, c)?;
    let ig = g.mul(i, gt)?;
    let c_next = g.add(fc, ig)?;
    let tc = g.tanh(c_next);
    let h_next = g.mul(o, tc)?;
    Ok((h_next, c_next))
}

/// Generator MLP on raw tensors: own state first, opposite state second.
fn generator_raw(
    params: &ModelParams,
    side: &str,
    own: &Tensor,
    other: &Tensor,
) -> Result<Tensor, NumericsError> {
    let joined = Tensor::concat_cols(&[own, other])?;
    let hidden = joined
        .matmul(params.get(&gen_name(side, "w1"))?)?
        .add_row(params.get(&gen_name(side, "b1"))?)?
        .map(fmath::tanh);
    Ok(hidden
        .matmul(params.get(&gen_name(side, "w2"))?)?
        .add_row(params.get(&gen_name(side, "b2"))?)?
        .map(fmath::softplus))
}

fn generator_graph(
    g: &mut Graph,
    params: &ModelParams,
    bound: &mut ParamCache,
    side: &str,
    own: NodeId,
    other: NodeId,
) -> Result<NodeId, NumericsError> {
    let joined = g.concat_cols(&[own, other])?;
    let w1 = bound.bind(g, params, &gen_name(side, "w1"))?;
    let b1 = bound.bind(g, params, &gen_name(side, "b1"))?;
    let w2 = bound.bind(g, params, &gen_name(side, "w2"))?;
    let b2 = bound.bind(g, params, &gen_name(side, "b2"))?;
    let h = g.matmul(joined, w1)?;
    let h = g.add_row(h, b1)?;
    let h = g.tanh(h);
    let out = g.matmul(h, w2)?;
    let out = g.add_row(out, b2)?;
    Ok(g.softplus(out))
}

/// Folds exactly M input vectors per side (callers left-pad with zeros when
/// fewer predecessors exist).
pub fn encode_history(
    params: &ModelParams,
    cfg: &ContextConfig,
    inputs_buy: &[Vec<f64>],
    inputs_sell: &[Vec<f64>],
) -> Result<EncoderState, NumericsError> {
    debug_assert_eq!(inputs_buy.len(), inputs_sell.len());
    let h = cfg.lstm_hidden;
    let mut hb = Tensor::zeros(1, h);
    let mut cb = Tensor::zeros(1, h);
    let mut hs = Tensor::zeros(1, h);
    let mut cs = Tensor::zeros(1, h);
    for (xb, xs) in inputs_buy.iter().zip(inputs_sell) {
        let xb = Tensor::row(xb);
        let xs = Tensor::row(xs);
        (hb, cb) = lstm_cell_raw(params, "buy", &xb, &hb, &cb)?;
        (hs, cs) = lstm_cell_raw(params, "sell", &xs, &hs, &cs)?;
    }
    Ok(EncoderState {
        h_buy: hb.data().to_vec(),
        h_sell: hs.data().to_vec(),
        c_buy: cb.data().to_vec(),
        c_sell: cs.data().to_vec(),
    })
}

/// Generated accumulated books for the next window, nonnegative by the
/// softplus head.
pub fn generate_accumulated(
    params: &ModelParams,
    state: &EncoderState,
) -> Result<(Vec<f64>, Vec<f64>), NumericsError> {
    let hb = Tensor::row(&state.h_buy);
    let hs = Tensor::row(&state.h_sell);
    let db = generator_raw(params, "buy", &hb, &hs)?;
    let ds = generator_raw(params, "sell", &hs, &hb)?;
    Ok((db.data().to_vec(), ds.data().to_vec()))
}

/// Predicted end-of-window book: boundary plus both generated deltas,
/// entrywise on a shared grid.
pub fn predict_book(
    prev: &BookVector,
    delta_buy: &[f64],
    delta_sell: &[f64],
) -> Result<BookVector, NumericsError> {
    if prev.dim() != delta_buy.len() || prev.dim() != delta_sell.len() {
        return Err(NumericsError::ShapeMismatch {
            op: "predict_book",
            left: (1, prev.dim()),
            right: (1, delta_buy.len()),
        });
    }
    let values = prev
        .values()
        .iter()
        .zip(delta_buy.iter().zip(delta_sell))
        .map(|(p, (b, s))| p + b + s)
        .collect();
    Ok(BookVector::from_values(prev.k(), values))
}

/// L1 gap between two books on the same grid.
pub fn book_distance(a: &[f64], b: &[f64]) -> Result<f64, NumericsError> {
    if a.len() != b.len() {
        return Err(NumericsError::ShapeMismatch {
            op: "book_distance",
            left: (1, a.len()),
            right: (1, b.len()),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| fmath::abs(x - y)).sum())
}

/// Per-window context outputs for one day.
#[derive(Clone, Debug)]
pub struct DayContext {
    /// Prediction gap per window.
    pub gamma: Vec<f64>,
    /// `[real | predicted | gamma]` rows, one per window.
    pub features: Vec<Vec<f64>>,
}

/// Batched inference over a whole day: a sliding window of M steps feeds
/// every window's chain simultaneously; missing history is zero-padded.
pub fn infer_day(
    params: &ModelParams,
    cfg: &ContextConfig,
    day: &DayMatrices,
) -> Result<DayContext, NumericsError> {
    let s = day.n_segments();
    let h = cfg.lstm_hidden;
    let m = cfg.m_history;
    let ind = cfg.input_dim();
    let mut hb = Tensor::zeros(s, h);
    let mut cb = Tensor::zeros(s, h);
    let mut hs = Tensor::zeros(s, h);
    let mut cs = Tensor::zeros(s, h);
    for j in 0..m {
        // Window step j for chain n reads absolute row n - (m - j).
        let mut xb = Tensor::zeros(s, ind);
        let mut xs = Tensor::zeros(s, ind);
        let lead = m - j;
        for n in lead.min(s)..s {
            xb.row_slice_mut(n).copy_from_slice(day.x_buy.row_slice(n - lead));
            xs.row_slice_mut(n).copy_from_slice(day.x_sell.row_slice(n - lead));
        }
        (hb, cb) = lstm_cell_raw(params, "buy", &xb, &hb, &cb)?;
        (hs, cs) = lstm_cell_raw(params, "sell", &xs, &hs, &cs)?;
    }
    let delta_buy = generator_raw(params, "buy", &hb, &hs)?;
    let delta_sell = generator_raw(params, "sell", &hs, &hb)?;

    let mut gamma = Vec::with_capacity(s);
    let mut features = Vec::with_capacity(s);
    for n in 0..s {
        let prev = day.prev.row_slice(n);
        let real = day.real.row_slice(n);
        let mut predicted: Vec<f64> = prev.to_vec();
        for (p, (b, sd)) in predicted
            .iter_mut()
            .zip(delta_buy.row_slice(n).iter().zip(delta_sell.row_slice(n)))
        {
            *p += b + sd;
        }
        let g = book_distance(real, &predicted)?;
        let mut feat = Vec::with_capacity(cfg.feature_dim());
        feat.extend_from_slice(real);
        feat.extend_from_slice(&predicted);
        feat.push(g);
        gamma.push(g);
        features.push(feat);
    }
    Ok(DayContext { gamma, features })
}

/// A (day, window) pair selected into a training batch.
#[derive(Clone, Copy, Debug)]
pub struct SegmentRef {
    pub day: usize,
    pub segment: usize,
}

/// Builds the batched generation-loss graph for a set of windows and
/// returns the loss node (mean |gamma| over the batch).
pub fn generation_loss_graph(
    g: &mut Graph,
    params: &ModelParams,
    cfg: &ContextConfig,
    days: &[DayMatrices],
    batch: &[SegmentRef],
) -> Result<NodeId, NumericsError> {
    let bsz = batch.len();
    let m = cfg.m_history;
    let ind = cfg.input_dim();
    let h = cfg.lstm_hidden;
    let mut bound = ParamCache::default();

    let zeros = g.input(Tensor::zeros(bsz, h))?;
    let (mut hb, mut cb, mut hs, mut cs) = (zeros, zeros, zeros, zeros);
    for j in 0..m {
        let mut xb = Tensor::zeros(bsz, ind);
        let mut xs = Tensor::zeros(bsz, ind);
        for (row, sref) in batch.iter().enumerate() {
            let day = &days[sref.day];
            let lead = m - j;
            if sref.segment >= lead {
                let src = sref.segment - lead;
                xb.row_slice_mut(row).copy_from_slice(day.x_buy.row_slice(src));
                xs.row_slice_mut(row).copy_from_slice(day.x_sell.row_slice(src));
            }
        }
        let xb = g.input(xb)?;
        let xs = g.input(xs)?;
        (hb, cb) = lstm_cell_graph(g, params, &mut bound, "buy", xb, hb, cb)?;
        (hs, cs) = lstm_cell_graph(g, params, &mut bound, "sell", xs, hs, cs)?;
    }
    let delta_buy = generator_graph(g, params, &mut bound, "buy", hb, hs)?;
    let delta_sell = generator_graph(g, params, &mut bound, "sell", hs, hb)?;

    let mut prev = Tensor::zeros(bsz, cfg.book_dim());
    let mut real = Tensor::zeros(bsz, cfg.book_dim());
    for (row, sref) in batch.iter().enumerate() {
        prev.row_slice_mut(row)
            .copy_from_slice(days[sref.day].prev.row_slice(sref.segment));
        real.row_slice_mut(row)
            .copy_from_slice(days[sref.day].real.row_slice(sref.segment));
    }
    let prev = g.input(prev)?;
    let real = g.input(real)?;
    let predicted = {
        let p = g.add(prev, delta_buy)?;
        g.add(p, delta_sell)?
    };
    let diff = g.sub(real, predicted)?;
    let absdiff = g.abs(diff);
    let per_row = g.row_sum(absdiff);
    Ok(g.mean_all(per_row))
}

/// Mean |gamma| over whole days, via the inference path.
pub fn validation_loss(
    params: &ModelParams,
    cfg: &ContextConfig,
    days: &[DayMatrices],
) -> Result<f64, NumericsError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for day in days {
        let ctx = infer_day(params, cfg, day)?;
        total += ctx.gamma.iter().sum::<f64>();
        count += ctx.gamma.len();
    }
    if count == 0 {
        return Err(NumericsError::NonFinite { context: "empty validation set" });
    }
    Ok(total / count as f64)
}

/// Training-stage errors.
#[derive(Clone, Debug, PartialEq)]
pub enum TrainError {
    Numerics(NumericsError),
    /// Loss became NaN; carries the epoch for the diagnostic.
    NanLoss { epoch: usize },
    /// Loss exceeded the divergence guard.
    Diverged { epoch: usize, loss_bits: u64 },
    EmptySplit(&'static str),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Numerics(e) => write!(f, "{e}"),
            TrainError::NanLoss { epoch } => write!(f, "NaN loss at epoch {epoch}"),
            TrainError::Diverged { epoch, loss_bits } => {
                write!(f, "diverged at epoch {epoch} (loss {})", f64::from_bits(*loss_bits))
            }
            TrainError::EmptySplit(which) => write!(f, "empty {which} split"),
        }
    }
}

impl core::error::Error for TrainError {}

impl From<NumericsError> for TrainError {
    fn from(e: NumericsError) -> Self {
        TrainError::Numerics(e)
    }
}

/// Optimization settings shared by the training stages.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub patience: usize,
    pub batch: usize,
    pub segments_per_epoch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            patience: 10,
            batch: 64,
            segments_per_epoch: 512,
            lr: 1e-3,
            seed: 42,
        }
    }
}

/// One row of the training log. Epoch 0 is the pre-training validation
/// baseline (no train loss).
#[derive(Clone, Copy, Debug)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub valid_loss: f64,
}

/// Training output: the log plus the optimizer (so checkpoints can carry
/// its moment state for exact resumption).
#[derive(Clone, Debug)]
pub struct ContextFit {
    pub log: Vec<TrainLogRow>,
    pub optimizer: Adam,
}

/// Trains the encoder/generator stack; early-stops on validation loss and
/// restores the best parameters.
pub fn train_context_encoder(
    params: &mut ModelParams,
    cfg: &ContextConfig,
    tcfg: &TrainConfig,
    train_days: &[DayMatrices],
    valid_days: &[DayMatrices],
) -> Result<ContextFit, TrainError> {
    if train_days.iter().map(DayMatrices::n_segments).sum::<usize>() == 0 {
        return Err(TrainError::EmptySplit("train"));
    }
    if valid_days.iter().map(DayMatrices::n_segments).sum::<usize>() == 0 {
        return Err(TrainError::EmptySplit("valid"));
    }
    let mut rng = Rng::new(derive_seed(tcfg.seed, "ctx-train", 0, 0));
    let mut opt = Adam::new(tcfg.lr);
    let mut log = Vec::new();

    let pool: Vec<SegmentRef> = train_days
        .iter()
        .enumerate()
        .flat_map(|(d, day)| (0..day.n_segments()).map(move |s| SegmentRef { day: d, segment: s }))
        .collect();

    let val0 = validation_loss(params, cfg, valid_days)?;
    log.push(TrainLogRow { epoch: 0, train_loss: None, valid_loss: val0 });
    let mut best = (val0, params.clone());
    let mut since_best = 0usize;

    for epoch in 1..=tcfg.epochs {
        let picks = tcfg.segments_per_epoch.min(pool.len());
        let chosen = rng.sample_indices(pool.len(), picks);
        let mut train_loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in chosen.chunks(tcfg.batch) {
            let batch: Vec<SegmentRef> = chunk.iter().map(|&i| pool[i]).collect();
            let mut g = Graph::new();
            let loss = generation_loss_graph(&mut g, params, cfg, train_days, &batch)?;
            let loss_val = g.value(loss).item();
            if loss_val.is_nan() {
                return Err(TrainError::NanLoss { epoch });
            }
            if loss_val > 1e9 {
                return Err(TrainError::Diverged { epoch, loss_bits: loss_val.to_bits() });
            }
            let grads = g.backward(loss)?;
            opt.step(params, &grads)?;
            train_loss_sum += loss_val;
            batches += 1;
        }
        let valid_loss = validation_loss(params, cfg, valid_days)?;
        log.push(TrainLogRow {
            epoch,
            train_loss: Some(train_loss_sum / batches.max(1) as f64),
            valid_loss,
        });
        if valid_loss < best.0 {
            best = (valid_loss, params.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= tcfg.patience {
                break;
            }
        }
    }
    *params = best.1;
    Ok(ContextFit { log, optimizer: opt })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lob::Order;
    use crate::numerics::grad_check;
    use crate::segment::segment_day;

    fn tiny_cfg() -> ContextConfig {
        ContextConfig {
            k_levels: 2,
            tick: 1,
            m_history: 2,
            lstm_hidden: 3,
            gen_hidden: 4,
            feed_book: false,
        }
    }

    #[test]
    fn zero_weights_zero_inputs_give_zero_state() {
        let cfg = tiny_cfg();
        let mut params = init_params(&cfg, 1).unwrap();
        for (_, t) in params.iter_mut() {
            t.data_mut().fill(0.0);
        }
        let zeros = vec![vec![0.0; cfg.input_dim()]; cfg.m_history];
        let state = encode_history(&params, &cfg, &zeros, &zeros).unwrap();
        assert!(state.h_buy.iter().all(|&v| v == 0.0));
        assert!(state.h_sell.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn state_shape_is_hidden_size_regardless_of_k() {
        for k in [2, 5, 9] {
            let cfg = ContextConfig { k_levels: k, ..tiny_cfg() };
            let params = init_params(&cfg, 3).unwrap();
            let inputs = vec![vec![0.1; cfg.input_dim()]; cfg.m_history];
            let state = encode_history(&params, &cfg, &inputs, &inputs).unwrap();
            assert_eq!(state.h_buy.len(), cfg.lstm_hidden);
            assert_eq!(state.h_sell.len(), cfg.lstm_hidden);
        }
    }

    #[test]
    fn single_step_matches_closed_form_cell() {
        // One step on a 2-input / 2-hidden cell, checked against the gate
        // formulas evaluated directly.
        let cfg = ContextConfig {
            k_levels: 1,
            tick: 1,
            m_history: 1,
            lstm_hidden: 2,
            gen_hidden: 2,
            feed_book: false,
        };
        let mut params = init_params(&cfg, 5).unwrap();
        let wx = [[0.3, -0.2], [0.1, 0.4]];
        let wh = [[0.0, 0.1], [-0.3, 0.2]];
        for gate in GATES {
            *params.get_mut(&lstm_name("buy", "x", gate)).unwrap() =
                Tensor::from_vec(2, 2, wx.iter().flatten().copied().collect()).unwrap();
            *params.get_mut(&lstm_name("buy", "h", gate)).unwrap() =
                Tensor::from_vec(2, 2, wh.iter().flatten().copied().collect()).unwrap();
            *params.get_mut(&lstm_name("buy", "b", gate)).unwrap() = Tensor::row(&[0.05, -0.05]);
        }
        let x = [0.7, -1.1];
        let state = encode_history(&params, &cfg, &[x.to_vec()], &[vec![0.0, 0.0]]).unwrap();

        // All four gates share weights here, so z is the same for each.
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        for j in 0..2 {
            let z = x[0] * wx[0][j] + x[1] * wx[1][j] + if j == 0 { 0.05 } else { -0.05 };
            let c = sig(z) * z.tanh(); // i*g with c_prev = 0
            let h = sig(z) * c.tanh(); // o * tanh(c)
            assert!((state.h_buy[j] - h).abs() < 1e-12, "{} vs {}", state.h_buy[j], h);
            assert!((state.c_buy[j] - c).abs() < 1e-12);
        }
    }

    #[test]
    fn generator_outputs_nonnegative_and_cross_conditioned() {
        let cfg = tiny_cfg();
        let params = init_params(&cfg, 11).unwrap();
        let state = EncoderState {
            h_buy: vec![0.4, -0.2, 0.9],
            h_sell: vec![-0.7, 0.3, 0.1],
            c_buy: vec![0.0; 3],
            c_sell: vec![0.0; 3],
        };
        let (db, ds) = generate_accumulated(&params, &state).unwrap();
        assert_eq!(db.len(), cfg.book_dim());
        assert_eq!(ds.len(), cfg.book_dim());
        assert!(db.iter().all(|&v| v >= 0.0));
        assert!(ds.iter().all(|&v| v >= 0.0));

        // Swapping the argument order changes the buy generator's output.
        let swapped = EncoderState {
            h_buy: state.h_sell.clone(),
            h_sell: state.h_buy.clone(),
            c_buy: vec![0.0; 3],
            c_sell: vec![0.0; 3],
        };
        let (db_swapped, _) = generate_accumulated(&params, &swapped).unwrap();
        assert_ne!(db, db_swapped);
    }

    #[test]
    fn predict_book_is_entrywise_sum() {
        let prev = BookVector::from_values(2, vec![1.0, 0.0, 2.0, 0.5]);
        let db = [0.5, 0.0, 0.0, 0.0];
        let ds = [0.0, 0.0, 1.5, 0.25];
        let predicted = predict_book(&prev, &db, &ds).unwrap();
        assert_eq!(predicted.values(), &[1.5, 0.0, 3.5, 0.75]);
        // Zero deltas leave the boundary book unchanged.
        let same = predict_book(&prev, &[0.0; 4], &[0.0; 4]).unwrap();
        assert_eq!(same.values(), prev.values());
        // Grid mismatch is an error.
        assert!(predict_book(&prev, &[0.0; 3], &[0.0; 4]).is_err());
    }

    #[test]
    fn gamma_examples_and_pseudometric() {
        assert_eq!(book_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(book_distance(&[4.0, 0.0], &[1.0, 0.0]).unwrap(), 3.0);
        assert_eq!(book_distance(&[4.0, 5.0], &[1.0, 1.0]).unwrap(), 7.0);

        let mut rng = Rng::new(9);
        for _ in 0..200 {
            let a: Vec<f64> = (0..6).map(|_| rng.uniform_in(0.0, 5.0)).collect();
            let b: Vec<f64> = (0..6).map(|_| rng.uniform_in(0.0, 5.0)).collect();
            let c: Vec<f64> = (0..6).map(|_| rng.uniform_in(0.0, 5.0)).collect();
            let dab = book_distance(&a, &b).unwrap();
            let dba = book_distance(&b, &a).unwrap();
            let dac = book_distance(&a, &c).unwrap();
            let dcb = book_distance(&c, &b).unwrap();
            assert!(dab >= 0.0);
            assert_eq!(dab, dba);
            assert!(dab <= dac + dcb + 1e-12);
        }
    }

    #[test]
    fn generation_loss_gradient_matches_finite_differences() {
        // Full chain (recurrence -> generators -> sum -> gamma) on a
        // 2-window toy.
        let cfg = tiny_cfg();
        let params = init_params(&cfg, 17).unwrap();
        let mut rng = Rng::new(23);
        let mut mk = |rows: usize, cols: usize| {
            let mut t = Tensor::zeros(rows, cols);
            for v in t.data_mut() {
                *v = rng.uniform_in(0.0, 2.0);
            }
            t
        };
        let day = DayMatrices {
            x_buy: mk(4, cfg.input_dim()),
            x_sell: mk(4, cfg.input_dim()),
            prev: mk(4, cfg.book_dim()),
            real: mk(4, cfg.book_dim()),
        };
        let batch =
            [SegmentRef { day: 0, segment: 1 }, SegmentRef { day: 0, segment: 3 }];
        let days = [day];
        let err = grad_check(&params, 1e-5, |p, g| {
            generation_loss_graph(g, p, &cfg, &days, &batch)
        })
        .unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn batched_inference_matches_per_window_fold() {
        let cfg = tiny_cfg();
        let params = init_params(&cfg, 31).unwrap();
        let mut rng = Rng::new(37);
        let s = 5;
        let mut day = DayMatrices {
            x_buy: Tensor::zeros(s, cfg.input_dim()),
            x_sell: Tensor::zeros(s, cfg.input_dim()),
            prev: Tensor::zeros(s, cfg.book_dim()),
            real: Tensor::zeros(s, cfg.book_dim()),
        };
        for t in [&mut day.x_buy, &mut day.x_sell, &mut day.prev, &mut day.real] {
            for v in t.data_mut() {
                *v = rng.uniform_in(0.0, 3.0);
            }
        }
        let ctx = infer_day(&params, &cfg, &day).unwrap();

        for n in 0..s {
            // Re-fold window n in isolation with explicit zero padding.
            let m = cfg.m_history;
            let mut ib = Vec::new();
            let mut is = Vec::new();
            for j in 0..m {
                let lead = m - j;
                if n >= lead {
                    ib.push(day.x_buy.row_slice(n - lead).to_vec());
                    is.push(day.x_sell.row_slice(n - lead).to_vec());
                } else {
                    ib.push(vec![0.0; cfg.input_dim()]);
                    is.push(vec![0.0; cfg.input_dim()]);
                }
            }
            let state = encode_history(&params, &cfg, &ib, &is).unwrap();
            let (db, ds) = generate_accumulated(&params, &state).unwrap();
            let prev = BookVector::from_values(cfg.k_levels, day.prev.row_slice(n).to_vec());
            let predicted = predict_book(&prev, &db, &ds).unwrap();
            let gamma = book_distance(day.real.row_slice(n), predicted.values()).unwrap();
            assert!(
                (gamma - ctx.gamma[n]).abs() < 1e-12,
                "window {n}: {gamma} vs {}",
                ctx.gamma[n]
            );
        }
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let cfg = tiny_cfg();
        let mk_days = || {
            let mut days = Vec::new();
            for d in 0..3 {
                let mut orders = Vec::new();
                let mut id = 1;
                for t in 0..400i64 {
                    let time = t * 100;
                    let price = 100 + ((t + d) % 3);
                    orders.push(Order::add(id, price + 2, 3, time));
                    id += 1;
                    orders.push(Order::add(id, price - 2, -3, time));
                    id += 1;
                }
                let segs = segment_day(&orders, 0, 40_000, 4_000, 8, 200).unwrap();
                days.push(build_day_matrices(&segs, &cfg));
            }
            days
        };
        let days = mk_days();
        let (train, valid) = days.split_at(2);
        let tcfg = TrainConfig {
            epochs: 8,
            patience: 10,
            batch: 8,
            segments_per_epoch: 16,
            lr: 5e-3,
            seed: 7,
        };

        let run = || {
            let mut params = init_params(&cfg, 99).unwrap();
            let fit = train_context_encoder(&mut params, &cfg, &tcfg, train, valid).unwrap();
            (params, fit.log)
        };
        let (params_a, log_a) = run();
        let (params_b, log_b) = run();

        // Deterministic: identical loss curves and final parameters.
        assert_eq!(log_a.len(), log_b.len());
        for (a, b) in log_a.iter().zip(&log_b) {
            assert_eq!(a.valid_loss.to_bits(), b.valid_loss.to_bits());
        }
        assert_eq!(params_a, params_b);

        // Learning: best validation loss beats the untrained baseline.
        let val0 = log_a[0].valid_loss;
        let best = log_a.iter().map(|r| r.valid_loss).fold(f64::INFINITY, f64::min);
        assert!(best < val0, "no improvement: {best} vs {val0}");
    }
}
