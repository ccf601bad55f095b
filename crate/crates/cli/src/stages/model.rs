//! Training stages: the context encoder first, then the factor extractor
//! under the hypersphere objective with the encoder frozen.

use anyhow::{anyhow, Context, Result};
use microflow_core::context::{
    self, build_day_matrices, fit_input_stats, normalize_day, train_context_encoder, DayMatrices,
};
use microflow_core::data::{NormFitter, NormStats};
use microflow_core::extractor::{self, transaction_inputs};
use microflow_core::numerics::{ModelParams, Tensor};
use microflow_core::svdd::{self, Hypersphere, WindowSample};

use super::{load_day, Ctx};
use crate::files;

/// Packs normalization statistics into checkpoint records.
pub fn pack_norm(params: &mut ModelParams, prefix: &str, stats: &NormStats) -> Result<()> {
    let (mean, std, mask) = stats.to_rows();
    params
        .insert(&format!("{prefix}.mean"), Tensor::row(&mean))
        .and_then(|_| params.insert(&format!("{prefix}.std"), Tensor::row(&std)))
        .and_then(|_| params.insert(&format!("{prefix}.mask"), Tensor::row(&mask)))
        .map_err(|e| anyhow!("{e}"))
}

pub fn unpack_norm(params: &ModelParams, prefix: &str) -> Result<NormStats> {
    let get = |suffix: &str| -> Result<&[f64]> {
        Ok(params
            .get(&format!("{prefix}.{suffix}"))
            .map_err(|e| anyhow!("{e}"))?
            .data())
    };
    Ok(NormStats::from_rows(get("mean")?, get("std")?, get("mask")?))
}

struct PreparedSplit {
    train: Vec<DayMatrices>,
    valid: Vec<DayMatrices>,
}

/// Loads, segments, vectorizes, and normalizes the train and valid days;
/// returns the fitted input statistics as well.
fn prepare_context_inputs(ctx: &Ctx) -> Result<(PreparedSplit, NormStats, NormStats)> {
    let days = ctx.discover()?;
    let (train_dates, valid_dates, _) = ctx.date_splits(&days)?;
    let wanted: Vec<(String, String)> = days
        .iter()
        .filter(|(_, d)| train_dates.contains(d) || valid_dates.contains(d))
        .cloned()
        .collect();
    let ctx_cfg = ctx.cfg.context();
    let prepared = ctx.for_each_day(&wanted, |inst, date| {
        let day = load_day(ctx, inst, date)?;
        Ok((date.to_string(), build_day_matrices(&day.segments, &ctx_cfg)))
    })?;

    let mut train: Vec<DayMatrices> = Vec::new();
    let mut valid: Vec<DayMatrices> = Vec::new();
    for (date, m) in prepared {
        if train_dates.contains(&date) {
            train.push(m);
        } else {
            valid.push(m);
        }
    }
    anyhow::ensure!(!train.is_empty() && !valid.is_empty(), "empty train or valid split");

    let (stats_buy, stats_sell) = fit_input_stats(&train).map_err(|e| anyhow!("{e}"))?;
    for day in train.iter_mut().chain(valid.iter_mut()) {
        normalize_day(day, &stats_buy, &stats_sell);
    }
    Ok((PreparedSplit { train, valid }, stats_buy, stats_sell))
}

pub fn train_context(ctx: &Ctx) -> Result<()> {
    let (split, stats_buy, stats_sell) = prepare_context_inputs(ctx)?;
    let ctx_cfg = ctx.cfg.context();
    let mut params =
        context::init_params(&ctx_cfg, ctx.cfg.seed).map_err(|e| anyhow!("{e}"))?;
    let fit = train_context_encoder(
        &mut params,
        &ctx_cfg,
        &ctx.cfg.context_train(),
        &split.train,
        &split.valid,
    )
    .map_err(|e| anyhow!("training context encoder: {e}"))?;

    pack_norm(&mut params, "ctx.norm_buy", &stats_buy)?;
    pack_norm(&mut params, "ctx.norm_sell", &stats_sell)?;
    fit.optimizer
        .save_into(&mut params, "opt_ctx")
        .map_err(|e| anyhow!("{e}"))?;
    files::save_checkpoint(&ctx.context_ckpt_path(), &params, &ctx.hash)?;
    files::write_train_log(
        &ctx.out_dir.join("model").join("context_log.csv"),
        &ctx.hash,
        "train-context",
        &fit.log,
    )?;
    Ok(())
}

/// Per-window inputs shared by the SVDD trainer and the extract stage.
pub struct ContextArtifacts {
    pub params: ModelParams,
    pub stats_buy: NormStats,
    pub stats_sell: NormStats,
}

pub fn load_context_ckpt(ctx: &Ctx) -> Result<ContextArtifacts> {
    let path = ctx.context_ckpt_path();
    files::require(&path, "train-context")?;
    let params = files::load_checkpoint(&path, Some(&ctx.hash))?;
    let stats_buy = unpack_norm(&params, "ctx.norm_buy")?;
    let stats_sell = unpack_norm(&params, "ctx.norm_sell")?;
    Ok(ContextArtifacts { params, stats_buy, stats_sell })
}

/// Valid windows of one day with raw (not yet normalized) inputs.
pub struct DayWindows {
    pub date: String,
    /// (segment index, raw context feature, raw transaction inputs).
    pub windows: Vec<(usize, Vec<f64>, extractor::TransactionInputs)>,
    pub n_segments: usize,
}

/// Runs the frozen context encoder over one day and pairs each non-empty
/// window with its context feature.
pub fn day_windows(
    ctx: &Ctx,
    art: &ContextArtifacts,
    inst: &str,
    date: &str,
) -> Result<DayWindows> {
    let day = load_day(ctx, inst, date)?;
    let ctx_cfg = ctx.cfg.context();
    let mut matrices = build_day_matrices(&day.segments, &ctx_cfg);
    normalize_day(&mut matrices, &art.stats_buy, &art.stats_sell);
    let inferred =
        context::infer_day(&art.params, &ctx_cfg, &matrices).map_err(|e| anyhow!("{e}"))?;
    let mut windows = Vec::new();
    for seg in &day.segments {
        let inputs = transaction_inputs(seg, ctx.cfg.l_max);
        if inputs.is_empty() {
            continue;
        }
        windows.push((seg.index, inferred.features[seg.index].clone(), inputs));
    }
    Ok(DayWindows { date: date.to_string(), windows, n_segments: day.segments.len() })
}

pub fn normalize_windows(
    windows: &mut [(usize, Vec<f64>, extractor::TransactionInputs)],
    ctx_stats: &NormStats,
    tx_stats: &NormStats,
) {
    for (_, feat, inputs) in windows.iter_mut() {
        ctx_stats.apply_keep_dims(feat);
        for r in 0..inputs.rows.rows() {
            tx_stats.apply_keep_dims(inputs.rows.row_slice_mut(r));
        }
    }
}

pub fn train_svdd(ctx: &Ctx) -> Result<()> {
    let art = load_context_ckpt(ctx)?;
    let days = ctx.discover()?;
    let (train_dates, valid_dates, _) = ctx.date_splits(&days)?;
    let wanted: Vec<(String, String)> = days
        .iter()
        .filter(|(_, d)| train_dates.contains(d) || valid_dates.contains(d))
        .cloned()
        .collect();
    let prepared = ctx.for_each_day(&wanted, |inst, date| day_windows(ctx, &art, inst, date))?;

    // Fit context-feature and transaction-row statistics on train windows.
    let ctx_dim = ctx.cfg.extractor().context_dim;
    let mut fit_ctx = NormFitter::new(ctx_dim);
    let mut fit_tx = NormFitter::new(extractor::TRANSACTION_FEATURES);
    for day in &prepared {
        if !train_dates.contains(&day.date) {
            continue;
        }
        for (_, feat, inputs) in &day.windows {
            fit_ctx.push(feat);
            for r in 0..inputs.rows.rows() {
                fit_tx.push(inputs.rows.row_slice(r));
            }
        }
    }
    let ctx_stats = fit_ctx.finish().map_err(|e| anyhow!("{e}"))?;
    let tx_stats = fit_tx.finish().map_err(|e| anyhow!("{e}"))?;

    let mut train: Vec<WindowSample> = Vec::new();
    let mut valid: Vec<WindowSample> = Vec::new();
    for mut day in prepared {
        normalize_windows(&mut day.windows, &ctx_stats, &tx_stats);
        let bucket = if train_dates.contains(&day.date) {
            &mut train
        } else if valid_dates.contains(&day.date) {
            &mut valid
        } else {
            continue;
        };
        for (_, feat, inputs) in day.windows {
            bucket.push(WindowSample { inputs, context: feat });
        }
    }
    anyhow::ensure!(!train.is_empty(), "no non-empty training windows");
    anyhow::ensure!(!valid.is_empty(), "no non-empty validation windows");

    let ecfg = ctx.cfg.extractor();
    let mut params = extractor::init_params(&ecfg, ctx.cfg.seed).map_err(|e| anyhow!("{e}"))?;
    let center = svdd::init_center(ctx.cfg.d_e, ctx.cfg.seed);
    let sphere = Hypersphere {
        center: center.clone(),
        radius: 0.0,
        mu: ctx.cfg.mu,
        lambda: ctx.cfg.lambda,
    };
    let fit = svdd::train_svdd_extractor(
        &mut params,
        &ecfg,
        sphere,
        &ctx.cfg.svdd_train(),
        &train,
        &valid,
    )
    .map_err(|e| anyhow!("training hypersphere objective: {e}"))?;

    params
        .insert("svdd.center", Tensor::row(&center))
        .map_err(|e| anyhow!("{e}"))?;
    pack_norm(&mut params, "svdd.norm_ctx", &ctx_stats)?;
    pack_norm(&mut params, "svdd.norm_trans", &tx_stats)?;
    fit.optimizer
        .save_into(&mut params, "opt_svdd")
        .map_err(|e| anyhow!("{e}"))?;
    fit.radius_optimizer
        .save_into(&mut params, "opt_svdd_radius")
        .map_err(|e| anyhow!("{e}"))?;
    files::save_checkpoint(&ctx.svdd_ckpt_path(), &params, &ctx.hash)?;
    files::write_train_log(
        &ctx.out_dir.join("model").join("svdd_log.csv"),
        &ctx.hash,
        "train-svdd",
        &fit.log,
    )
    .context("writing svdd training log")?;
    Ok(())
}

/// Extractor-side artifacts for the extract/select stages.
pub struct SvddArtifacts {
    pub params: ModelParams,
    pub center: Vec<f64>,
    pub ctx_stats: NormStats,
    pub tx_stats: NormStats,
}

pub fn load_svdd_ckpt(ctx: &Ctx) -> Result<SvddArtifacts> {
    let path = ctx.svdd_ckpt_path();
    files::require(&path, "train-svdd")?;
    let params = files::load_checkpoint(&path, Some(&ctx.hash))?;
    let center = params
        .get("svdd.center")
        .map_err(|e| anyhow!("{e}"))?
        .data()
        .to_vec();
    let ctx_stats = unpack_norm(&params, "svdd.norm_ctx")?;
    let tx_stats = unpack_norm(&params, "svdd.norm_trans")?;
    Ok(SvddArtifacts { params, center, ctx_stats, tx_stats })
}

