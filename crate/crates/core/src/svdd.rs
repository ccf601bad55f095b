//! Soft-boundary hypersphere objective, uniqueness ranking, and factor
//! selection.
//!
//! A kernel network maps window features into an output space where a fixed
//! random center and a learned radius describe the mass of ordinary
//! windows. The loss is
//!
//! ```text
//! R^2 + (1/(mu N)) * sum_i max(0, ||f_i - c||^2 - R^2) + (lambda/2) * ||theta||^2
//! ```
//!
//! optimized jointly over the kernel weights and R (R clamped at zero).
//! Each window's distance from the center is its uniqueness score; the top
//! `mu` fraction of valid windows become the selected factors.
//!
//! Two trainers are provided: the end-to-end one drives the attention
//! extractor from raw window inputs, and a plain-feature one trains a small
//! bias-free MLP kernel directly on feature vectors.

use alloc::string::String;
use alloc::vec::Vec;

use crate::extractor::{self, ExtractorConfig, ExtractorError, TransactionInputs};
use crate::fmath;
use crate::numerics::{Adam, Grads, Graph, ModelParams, NodeId, NumericsError, ParamCache, Tensor};
use crate::rng::{derive_seed, Rng};

pub use crate::context::{TrainConfig, TrainError, TrainLogRow};

/// Hypersphere settings and state. The center is fixed at initialization;
/// only the radius trains.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypersphere {
    pub center: Vec<f64>,
    pub radius: f64,
    /// Boundary-violation trade-off, in (0, 1]; also the selection rate.
    pub mu: f64,
    /// Weight-decay coefficient.
    pub lambda: f64,
}

impl Hypersphere {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return Err(TrainError::Numerics(NumericsError::NonFinite {
                context: "mu outside (0, 1]",
            }));
        }
        if self.lambda < 0.0 {
            return Err(TrainError::Numerics(NumericsError::NonFinite {
                context: "negative lambda",
            }));
        }
        Ok(())
    }
}

/// Seeded uniform(-1, 1) center with every coordinate pushed at least 0.1
/// from zero, so a bias-free kernel cannot trivially collapse onto it.
pub fn init_center(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = Rng::new(derive_seed(seed, "svdd-center", 0, 0));
    (0..dim)
        .map(|_| {
            let v = rng.uniform_in(-1.0, 1.0);
            if fmath::abs(v) >= 0.1 {
                v
            } else if v >= 0.0 {
                0.1
            } else {
                -0.1
            }
        })
        .collect()
}

/// Euclidean distance of one feature from the center.
pub fn distance(feature: &[f64], center: &[f64]) -> f64 {
    debug_assert_eq!(feature.len(), center.len());
    fmath::sqrt(
        feature
            .iter()
            .zip(center)
            .map(|(f, c)| (f - c) * (f - c))
            .sum::<f64>(),
    )
}

/// Plain-value loss for a fixed feature batch (no gradients). `theta_l2_sq`
/// carries the squared parameter norm for the decay term.
pub fn svdd_loss_value(
    features: &[Vec<f64>],
    sphere: &Hypersphere,
    theta_l2_sq: f64,
) -> Result<f64, TrainError> {
    sphere.validate()?;
    let n = features.len();
    if n == 0 {
        return Err(TrainError::EmptySplit("svdd loss batch"));
    }
    let r2 = sphere.radius * sphere.radius;
    let mut penalty = 0.0;
    for f in features {
        let d = distance(f, &sphere.center);
        penalty += (d * d - r2).max(0.0);
    }
    Ok(r2 + penalty / (sphere.mu * n as f64) + 0.5 * sphere.lambda * theta_l2_sq)
}

const RADIUS: &str = "svdd.radius";

/// Appends the loss to a graph whose `feature_rows` node stacks one window
/// feature per row. Binds the radius parameter and every `theta_prefix`
/// parameter (for weight decay).
pub fn svdd_loss_graph(
    g: &mut Graph,
    params: &ModelParams,
    bound: &mut ParamCache,
    feature_rows: NodeId,
    center: &[f64],
    mu: f64,
    lambda: f64,
    theta_prefix: &str,
) -> Result<NodeId, NumericsError> {
    let n = g.value(feature_rows).rows();
    let r = bound.bind(g, params, RADIUS)?;
    let r2 = g.mul(r, r)?;
    let c = g.input(Tensor::row(center))?;
    let c_rows = g.repeat_row(c, n)?;
    let diff = g.sub(feature_rows, c_rows)?;
    let sq = g.mul(diff, diff)?;
    let d2 = g.row_sum(sq); // n x 1
    let neg_r2 = g.scale(r2, -1.0);
    let excess = g.add_row(d2, neg_r2)?;
    let hinge = g.relu(excess);
    let penalty_sum = g.sum_all(hinge);
    let penalty = g.scale(penalty_sum, 1.0 / (mu * n as f64));
    let mut loss = g.add(r2, penalty)?;
    if lambda > 0.0 {
        let names: Vec<String> = params
            .iter()
            .filter(|(name, _)| name.starts_with(theta_prefix))
            .map(|(name, _)| String::from(name))
            .collect();
        let mut reg_total: Option<NodeId> = None;
        for name in &names {
            let p = bound.bind(g, params, name)?;
            let sq = g.l2_sq(p);
            reg_total = Some(match reg_total {
                None => sq,
                Some(acc) => g.add(acc, sq)?,
            });
        }
        if let Some(reg) = reg_total {
            let scaled = g.scale(reg, 0.5 * lambda);
            loss = g.add(loss, scaled)?;
        }
    }
    Ok(loss)
}

/// One window's training inputs for the end-to-end trainer.
#[derive(Clone, Debug)]
pub struct WindowSample {
    pub inputs: TransactionInputs,
    pub context: Vec<f64>,
}

/// Output of either trainer.
#[derive(Clone, Debug)]
pub struct SvddFit {
    pub sphere: Hypersphere,
    pub log: Vec<TrainLogRow>,
    pub optimizer: Adam,
    pub radius_optimizer: Adam,
}

/// Starting radius for the plain-feature trainer: one percent of the
/// median initial distance. Starting near zero puts every point far
/// outside the boundary, so the early epochs behave like the pure
/// one-class objective and compress the whole training mass toward the
/// center, while the radius climbs by gradient until it meets the
/// compressed envelope; training stops at that stationarity point.
fn radius_init_quantile(distances: &mut [f64], _mu: f64) -> f64 {
    if distances.is_empty() {
        return 0.0;
    }
    distances.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    0.01 * distances[distances.len() / 2]
}

/// The radius trains with a larger step than the network: its gradient is
/// a single scalar balancing the in/out counts, and Adam's normalized
/// steps would otherwise take thousands of batches to traverse the
/// distance scale.
const RADIUS_LR_MULT: f64 = 200.0;

/// Trains the attention extractor end to end under the hypersphere
/// objective. `params` must hold the extractor weights; the radius is added
/// here. The context encoder is already frozen into the per-window context
/// features.
pub fn train_svdd_extractor(
    params: &mut ModelParams,
    ecfg: &ExtractorConfig,
    mut sphere: Hypersphere,
    tcfg: &TrainConfig,
    train: &[WindowSample],
    valid: &[WindowSample],
) -> Result<SvddFit, TrainError> {
    sphere.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if valid.is_empty() {
        return Err(TrainError::EmptySplit("valid"));
    }

    // Radius init: near zero, like the plain-feature trainer. The radius
    // races to its stationarity point at RADIUS_LR_MULT times the network
    // rate, so the hinge stops training (and stops digesting the farthest
    // windows, which on contaminated streams are exactly the planted
    // anomalies) after only a handful of network steps.
    let probe = stride_sample(train.len(), 512);
    let mut probe_d: Vec<f64> = Vec::with_capacity(probe.len());
    for &i in &probe {
        let f = extract_one(params, ecfg, &train[i])?;
        probe_d.push(distance(&f, &sphere.center));
    }
    sphere.radius = radius_init_quantile(&mut probe_d, sphere.mu);
    if !params.contains(RADIUS) {
        params.insert(RADIUS, Tensor::scalar(sphere.radius)).map_err(TrainError::Numerics)?;
    } else {
        *params.get_mut(RADIUS).map_err(TrainError::Numerics)? = Tensor::scalar(sphere.radius);
    }

    let mut rng = Rng::new(derive_seed(tcfg.seed, "svdd-train", 0, 0));
    let mut opt = Adam::new(tcfg.lr);
    let mut opt_radius = Adam::new(tcfg.lr * RADIUS_LR_MULT);
    let mut log = Vec::new();

    let eval_loss = |params: &ModelParams, set: &[WindowSample], sphere: &Hypersphere| {
        let radius = params.get(RADIUS).map(|t| t.item()).unwrap_or(0.0);
        let sp = Hypersphere { radius, ..sphere.clone() };
        let mut feats = Vec::with_capacity(set.len());
        for w in set {
            feats.push(extract_one(params, ecfg, w)?);
        }
        svdd_loss_value(&feats, &sp, params.l2_sq_matching("ext."))
    };

    let val0 = eval_loss(params, valid, &sphere)?;
    log.push(TrainLogRow { epoch: 0, train_loss: None, valid_loss: val0 });
    let mut best = (val0, params.clone());
    let mut since_best = 0usize;
    let mut at_equilibrium = false;

    for epoch in 1..=tcfg.epochs {
        let picks = tcfg.segments_per_epoch.min(train.len());
        let chosen = rng.sample_indices(train.len(), picks);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in chosen.chunks(tcfg.batch) {
            let mut g = Graph::new();
            let mut bound = ParamCache::default();
            let mut rows = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let w = &train[i];
                let f = extractor::feature_graph(&mut g, params, &mut bound, ecfg, &w.inputs, &w.context)
                    .map_err(flatten_ext)?;
                rows.push(f);
            }
            let stacked = g.concat_rows(&rows).map_err(TrainError::Numerics)?;
            let loss = svdd_loss_graph(
                &mut g,
                params,
                &mut bound,
                stacked,
                &sphere.center,
                sphere.mu,
                sphere.lambda,
                "ext.",
            )
            .map_err(TrainError::Numerics)?;
            let loss_val = g.value(loss).item();
            if loss_val.is_nan() {
                return Err(TrainError::NanLoss { epoch });
            }
            if loss_val > 1e6 {
                return Err(TrainError::Diverged { epoch, loss_bits: loss_val.to_bits() });
            }
            let mut grads = g.backward(loss).map_err(TrainError::Numerics)?;
            let radius_grad = grads.remove(RADIUS);
            opt.step(params, &grads).map_err(TrainError::Numerics)?;
            if let Some(rg) = radius_grad {
                let mut only_r = Grads::new();
                only_r.insert(RADIUS.into(), rg);
                opt_radius.step(params, &only_r).map_err(TrainError::Numerics)?;
            }
            clamp_radius(params)?;
            loss_sum += loss_val;
            batches += 1;
        }
        let valid_loss = eval_loss(params, valid, &sphere)?;
        log.push(TrainLogRow {
            epoch,
            train_loss: Some(loss_sum / batches.max(1) as f64),
            valid_loss,
        });

        // Radius stationarity: dL/dR vanishes when the fraction outside
        // equals mu. Past that point the hinge only digests the remaining
        // far windows (the would-be anomalies), so stop there.
        let radius = params.get(RADIUS).map_err(TrainError::Numerics)?.item();
        let mut outside = 0usize;
        for &i in &chosen {
            let f = extract_one(params, ecfg, &train[i])?;
            if distance(&f, &sphere.center) > radius {
                outside += 1;
            }
        }
        if (outside as f64) <= sphere.mu * chosen.len() as f64 {
            at_equilibrium = true;
            break;
        }

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
    if !at_equilibrium {
        *params = best.1;
    }
    sphere.radius = params.get(RADIUS).map_err(TrainError::Numerics)?.item();
    Ok(SvddFit { sphere, log, optimizer: opt, radius_optimizer: opt_radius })
}

fn flatten_ext(e: ExtractorError) -> TrainError {
    match e {
        ExtractorError::Numerics(n) => TrainError::Numerics(n),
        ExtractorError::Config(_) => {
            TrainError::Numerics(NumericsError::NonFinite { context: "extractor config" })
        }
    }
}

fn extract_one(
    params: &ModelParams,
    ecfg: &ExtractorConfig,
    w: &WindowSample,
) -> Result<Vec<f64>, TrainError> {
    extractor::extract_feature(params, ecfg, &w.inputs, &w.context, None)
        .map_err(flatten_ext)?
        .ok_or(TrainError::EmptySplit("window without transactions"))
}

fn clamp_radius(params: &mut ModelParams) -> Result<(), TrainError> {
    let r = params.get_mut(RADIUS).map_err(TrainError::Numerics)?;
    if r.data()[0] < 0.0 {
        r.data_mut()[0] = 0.0;
    }
    Ok(())
}

fn stride_sample(n: usize, want: usize) -> Vec<usize> {
    if n <= want {
        return (0..n).collect();
    }
    let stride = n / want;
    (0..want).map(|i| i * stride).collect()
}

/// Kernel-MLP parameter names for the plain-feature trainer.
fn kernel_names() -> (&'static str, &'static str) {
    ("svdd.kernel.w1", "svdd.kernel.w2")
}

/// Creates a bias-free two-layer kernel for the plain-feature trainer.
pub fn init_kernel(in_dim: usize, hidden: usize, out_dim: usize, seed: u64) -> Result<ModelParams, NumericsError> {
    let mut rng = Rng::new(derive_seed(seed, "svdd-kernel", 0, 0));
    let mut p = ModelParams::new();
    let (w1, w2) = kernel_names();
    p.insert(w1, Tensor::xavier(in_dim, hidden, &mut rng))?;
    p.insert(w2, Tensor::xavier(hidden, out_dim, &mut rng))?;
    Ok(p)
}

fn kernel_forward(params: &ModelParams, x: &Tensor) -> Result<Tensor, NumericsError> {
    let (w1, w2) = kernel_names();
    let h = x.matmul(params.get(w1)?)?.map(|v| if v > 0.0 { v } else { 0.0 });
    h.matmul(params.get(w2)?)
}

fn kernel_graph(
    g: &mut Graph,
    params: &ModelParams,
    bound: &mut ParamCache,
    x: NodeId,
) -> Result<NodeId, NumericsError> {
    let (w1, w2) = kernel_names();
    let w1 = bound.bind(g, params, w1)?;
    let w2 = bound.bind(g, params, w2)?;
    let h = g.matmul(x, w1)?;
    let h = g.relu(h);
    g.matmul(h, w2)
}

/// Trains the MLP kernel directly on feature vectors (the feature-space
/// route of the objective). Returns the fitted sphere and per-point output
/// distances computed with the final weights.
pub fn train_svdd_on_features(
    params: &mut ModelParams,
    mut sphere: Hypersphere,
    tcfg: &TrainConfig,
    train: &[Vec<f64>],
    valid: &[Vec<f64>],
) -> Result<(SvddFit, Vec<f64>), TrainError> {
    sphere.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if valid.is_empty() {
        return Err(TrainError::EmptySplit("valid"));
    }
    let dim = train[0].len();
    let as_tensor = |rows: &[Vec<f64>]| {
        let mut t = Tensor::zeros(rows.len(), dim);
        for (i, r) in rows.iter().enumerate() {
            t.row_slice_mut(i).copy_from_slice(r);
        }
        t
    };
    let train_t = as_tensor(train);
    let valid_t = as_tensor(valid);

    let probe_out = kernel_forward(params, &train_t).map_err(TrainError::Numerics)?;
    let mut probe_d: Vec<f64> = (0..probe_out.rows())
        .map(|i| distance(probe_out.row_slice(i), &sphere.center))
        .collect();
    sphere.radius = radius_init_quantile(&mut probe_d, sphere.mu);
    params
        .insert(RADIUS, Tensor::scalar(sphere.radius))
        .or_else(|_| {
            params
                .get_mut(RADIUS)
                .map(|t| *t = Tensor::scalar(sphere.radius))
        })
        .map_err(TrainError::Numerics)?;

    let mut rng = Rng::new(derive_seed(tcfg.seed, "svdd-feat-train", 0, 0));
    let mut opt = Adam::new(tcfg.lr);
    let mut opt_radius = Adam::new(tcfg.lr * RADIUS_LR_MULT);
    let mut log = Vec::new();

    let eval_loss = |params: &ModelParams, t: &Tensor, sphere: &Hypersphere| {
        let out = kernel_forward(params, t).map_err(TrainError::Numerics)?;
        let feats: Vec<Vec<f64>> = (0..out.rows()).map(|i| out.row_slice(i).to_vec()).collect();
        let radius = params.get(RADIUS).map(|r| r.item()).unwrap_or(0.0);
        let sp = Hypersphere { radius, ..sphere.clone() };
        svdd_loss_value(&feats, &sp, params.l2_sq_matching("svdd.kernel."))
    };

    let val0 = eval_loss(params, &valid_t, &sphere)?;
    log.push(TrainLogRow { epoch: 0, train_loss: None, valid_loss: val0 });
    let mut best = (val0, params.clone());
    let mut since_best = 0usize;
    let mut at_equilibrium = false;

    for epoch in 1..=tcfg.epochs {
        let picks = tcfg.segments_per_epoch.min(train.len());
        let chosen = rng.sample_indices(train.len(), picks);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in chosen.chunks(tcfg.batch) {
            let mut batch_t = Tensor::zeros(chunk.len(), dim);
            for (row, &i) in chunk.iter().enumerate() {
                batch_t.row_slice_mut(row).copy_from_slice(&train[i]);
            }
            let mut g = Graph::new();
            let mut bound = ParamCache::default();
            let x = g.input(batch_t).map_err(TrainError::Numerics)?;
            let out = kernel_graph(&mut g, params, &mut bound, x).map_err(TrainError::Numerics)?;
            let loss = svdd_loss_graph(
                &mut g,
                params,
                &mut bound,
                out,
                &sphere.center,
                sphere.mu,
                sphere.lambda,
                "svdd.kernel.",
            )
            .map_err(TrainError::Numerics)?;
            let loss_val = g.value(loss).item();
            if loss_val.is_nan() {
                return Err(TrainError::NanLoss { epoch });
            }
            if loss_val > 1e6 {
                return Err(TrainError::Diverged { epoch, loss_bits: loss_val.to_bits() });
            }
            let mut grads = g.backward(loss).map_err(TrainError::Numerics)?;
            let radius_grad = grads.remove(RADIUS);
            opt.step(params, &grads).map_err(TrainError::Numerics)?;
            if let Some(rg) = radius_grad {
                let mut only_r = Grads::new();
                only_r.insert(RADIUS.into(), rg);
                opt_radius.step(params, &only_r).map_err(TrainError::Numerics)?;
            }
            clamp_radius(params)?;
            loss_sum += loss_val;
            batches += 1;
        }
        let valid_loss = eval_loss(params, &valid_t, &sphere)?;
        log.push(TrainLogRow {
            epoch,
            train_loss: Some(loss_sum / batches.max(1) as f64),
            valid_loss,
        });

        // Stop at the radius-stationarity point (fraction outside <= mu);
        // see the extractor trainer.
        let radius = params.get(RADIUS).map_err(TrainError::Numerics)?.item();
        let out = kernel_forward(params, &train_t).map_err(TrainError::Numerics)?;
        let outside = (0..out.rows())
            .filter(|&i| distance(out.row_slice(i), &sphere.center) > radius)
            .count();
        if (outside as f64) <= sphere.mu * out.rows() as f64 {
            at_equilibrium = true;
            break;
        }

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
    if !at_equilibrium {
        *params = best.1;
    }
    sphere.radius = params.get(RADIUS).map_err(TrainError::Numerics)?.item();

    let out = kernel_forward(params, &train_t).map_err(TrainError::Numerics)?;
    let distances = (0..out.rows())
        .map(|i| distance(out.row_slice(i), &sphere.center))
        .collect();
    Ok((SvddFit { sphere, log, optimizer: opt, radius_optimizer: opt_radius }, distances))
}

/// Maps plain features through the fitted kernel to distances.
pub fn kernel_distances(
    params: &ModelParams,
    center: &[f64],
    rows: &[Vec<f64>],
) -> Result<Vec<f64>, NumericsError> {
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let mut t = Tensor::zeros(rows.len(), rows[0].len());
    for (i, r) in rows.iter().enumerate() {
        t.row_slice_mut(i).copy_from_slice(r);
    }
    let out = kernel_forward(params, &t)?;
    Ok((0..out.rows()).map(|i| distance(out.row_slice(i), center)).collect())
}

/// Uniqueness ranking over valid windows.
#[derive(Clone, Debug)]
pub struct UniquenessRanking {
    /// (window index, distance) for every valid window, input order.
    pub scores: Vec<(usize, f64)>,
    /// Selected window indices, ascending.
    pub selected: Vec<usize>,
}

impl UniquenessRanking {
    pub fn is_selected(&self, index: usize) -> bool {
        self.selected.binary_search(&index).is_ok()
    }
}

/// Ranks valid window features by distance from the center and selects the
/// top `max(1, floor(mu * n_valid))`, breaking ties toward earlier windows.
pub fn rank_and_select(
    features: &[(usize, Vec<f64>)],
    center: &[f64],
    mu: f64,
) -> UniquenessRanking {
    let scores: Vec<(usize, f64)> = features
        .iter()
        .map(|(idx, f)| (*idx, distance(f, center)))
        .collect();
    let n_valid = scores.len();
    if n_valid == 0 {
        return UniquenessRanking { scores, selected: Vec::new() };
    }
    let want = ((mu * n_valid as f64 + 1e-9) as usize).max(1).min(n_valid);
    let mut order: Vec<usize> = (0..n_valid).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .1
            .partial_cmp(&scores[a].1)
            .expect("finite distances")
            .then(scores[a].0.cmp(&scores[b].0))
    });
    let mut selected: Vec<usize> = order[..want].iter().map(|&i| scores[i].0).collect();
    selected.sort_unstable();
    UniquenessRanking { scores, selected }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;

    fn sphere(center: Vec<f64>, radius: f64, mu: f64, lambda: f64) -> Hypersphere {
        Hypersphere { center, radius, mu, lambda }
    }

    #[test]
    fn center_is_seeded_and_bounded_away_from_zero() {
        let a = init_center(16, 7);
        let b = init_center(16, 7);
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| v.abs() >= 0.1 && v.abs() <= 1.0));
        assert_ne!(a, init_center(16, 8));
    }

    #[test]
    fn loss_zero_at_center_with_zero_radius() {
        let c = alloc::vec![0.3, -0.4];
        let feats = alloc::vec![c.clone(), c.clone()];
        let s = sphere(c, 0.0, 0.5, 0.0);
        assert_eq!(svdd_loss_value(&feats, &s, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn loss_hand_example() {
        // One point at distance 2, R = 1, mu = 0.5, lambda = 0:
        // 1 + (1/0.5) * max(0, 4 - 1) = 7.
        let s = sphere(alloc::vec![0.0, 0.0], 1.0, 0.5, 0.0);
        let feats = alloc::vec![alloc::vec![2.0, 0.0]];
        assert_eq!(svdd_loss_value(&feats, &s, 0.0).unwrap(), 7.0);
    }

    #[test]
    fn penalty_vanishes_beyond_max_distance() {
        let feats = alloc::vec![alloc::vec![1.0, 0.0], alloc::vec![0.0, 2.0]];
        let c = alloc::vec![0.0, 0.0];
        let d_max = 2.0;
        // Beyond the largest distance the loss is exactly R^2 (+ decay).
        for r in [d_max, 2.5, 4.0] {
            let s = sphere(c.clone(), r, 0.1, 0.0);
            let loss = svdd_loss_value(&feats, &s, 0.0).unwrap();
            assert!((loss - r * r).abs() < 1e-12);
        }
        // And the penalty term is nonincreasing in R below that.
        let loss_at = |r: f64| {
            let s = sphere(c.clone(), r, 0.1, 0.0);
            svdd_loss_value(&feats, &s, 0.0).unwrap() - r * r
        };
        assert!(loss_at(0.0) >= loss_at(1.0));
        assert!(loss_at(1.0) >= loss_at(1.9));
    }

    #[test]
    fn loss_graph_matches_value_and_gradcheck() {
        let mut rng = Rng::new(3);
        let mut params = init_kernel(4, 6, 3, 5).unwrap();
        params.insert(RADIUS, Tensor::scalar(0.7)).unwrap();
        let feats: Vec<Vec<f64>> =
            (0..8).map(|_| (0..4).map(|_| rng.uniform_in(-2.0, 2.0)).collect()).collect();
        let center = init_center(3, 1);
        let mu = 0.25;
        let lambda = 0.1;

        // Graph value equals the plain computation through the kernel.
        let mut t = Tensor::zeros(8, 4);
        for (i, f) in feats.iter().enumerate() {
            t.row_slice_mut(i).copy_from_slice(f);
        }
        let out = kernel_forward(&params, &t).unwrap();
        let out_rows: Vec<Vec<f64>> =
            (0..8).map(|i| out.row_slice(i).to_vec()).collect();
        let want = svdd_loss_value(
            &out_rows,
            &sphere(center.clone(), 0.7, mu, lambda),
            params.l2_sq_matching("svdd.kernel."),
        )
        .unwrap();

        let mut g = Graph::new();
        let mut bound = ParamCache::default();
        let x = g.input(t.clone()).unwrap();
        let o = kernel_graph(&mut g, &params, &mut bound, x).unwrap();
        let loss =
            svdd_loss_graph(&mut g, &params, &mut bound, o, &center, mu, lambda, "svdd.kernel.")
                .unwrap();
        assert!((g.value(loss).item() - want).abs() < 1e-12);

        // Gradient check over kernel weights and the radius.
        let err = grad_check(&params, 1e-5, |p, g| {
            let mut bound = ParamCache::default();
            let x = g.input(t.clone())?;
            let o = kernel_graph(g, p, &mut bound, x)?;
            svdd_loss_graph(g, p, &mut bound, o, &center, mu, lambda, "svdd.kernel.")
        })
        .unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn feature_space_training_separates_planted_outliers() {
        // 98% tight cluster + 2% dispersed outliers; the trained distance
        // must rank outliers essentially perfectly.
        let mut rng = Rng::new(31);
        let dim = 8;
        let mut feats: Vec<Vec<f64>> = Vec::new();
        let mut labels: Vec<bool> = Vec::new();
        let cluster_center: Vec<f64> =
            (0..dim).map(|j| 0.5 + 0.1 * (j as f64 % 3.0)).collect();
        for i in 0..1500 {
            if i % 50 == 0 {
                // Dispersed outliers: resample until well clear of the
                // cluster so the planted labels mean what they say.
                let outlier = loop {
                    let x: Vec<f64> = (0..dim).map(|_| rng.uniform_in(-4.0, 4.0)).collect();
                    if distance(&x, &cluster_center) >= 2.5 {
                        break x;
                    }
                };
                feats.push(outlier);
                labels.push(true);
            } else {
                feats.push((0..dim).map(|j| 0.5 + 0.1 * (j as f64 % 3.0) + 0.05 * rng.normal()).collect());
                labels.push(false);
            }
        }
        let mut params = init_kernel(dim, 16, 8, 11).unwrap();
        let s = Hypersphere { center: init_center(8, 2), radius: 0.0, mu: 0.02, lambda: 1e-3 };
        let tcfg = TrainConfig {
            epochs: 40,
            patience: 40,
            batch: 64,
            segments_per_epoch: 1500,
            lr: 3e-3,
            seed: 3,
        };
        let (fit, distances) =
            train_svdd_on_features(&mut params, s, &tcfg, &feats, &feats).unwrap();
        assert!(fit.sphere.radius >= 0.0);

        let auc = crate::eval::roc_auc(&distances, &labels).unwrap();
        assert!(auc >= 0.95, "AUC {auc}");
    }

    #[test]
    fn ranking_examples() {
        let center = alloc::vec![0.0];
        // 3600 valid windows, distances descending in index.
        let feats: Vec<(usize, Vec<f64>)> =
            (0..3600).map(|i| (i, alloc::vec![(3600 - i) as f64])).collect();
        let r = rank_and_select(&feats, &center, 0.02);
        assert_eq!(r.selected.len(), 72);
        assert_eq!(r.selected[0], 0);

        // All-equal distances: first max(1, floor(mu n)) indices win.
        let flat: Vec<(usize, Vec<f64>)> = (0..10).map(|i| (i, alloc::vec![1.0])).collect();
        let r = rank_and_select(&flat, &center, 0.25);
        assert_eq!(r.selected, alloc::vec![0, 1]);

        // mu = 1 selects everything.
        let r = rank_and_select(&flat, &center, 1.0);
        assert_eq!(r.selected.len(), 10);

        // Tiny mu still selects one.
        let r = rank_and_select(&flat, &center, 1e-6);
        assert_eq!(r.selected, alloc::vec![0]);
    }

    #[test]
    fn ranking_is_permutation_invariant_in_scores() {
        let center = alloc::vec![0.0, 0.0];
        let feats: Vec<(usize, Vec<f64>)> = alloc::vec![
            (0, alloc::vec![1.0, 0.0]),
            (1, alloc::vec![3.0, 0.0]),
            (2, alloc::vec![2.0, 0.0]),
        ];
        let mut shuffled = feats.clone();
        shuffled.swap(0, 2);
        let a = rank_and_select(&feats, &center, 0.5);
        let b = rank_and_select(&shuffled, &center, 0.5);
        assert_eq!(a.selected, b.selected);
        assert!(a.is_selected(1));
    }
}
