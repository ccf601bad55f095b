//! Feature extraction, uniqueness ranking/selection, and the rule-based
//! baseline selections.

use anyhow::{anyhow, Result};
use microflow_core::baselines as bl;
use microflow_core::extractor::extract_feature;
use microflow_core::rng::derive_seed;
use microflow_core::svdd::rank_and_select;

use super::model::{day_windows, load_context_ckpt, load_svdd_ckpt, normalize_windows};
use super::{day_indices, load_day, Ctx};
use crate::files::{self, BaselineRow, FeatureRow, RankingRow};

/// Runs the frozen encoder + extractor over every window of every day and
/// dumps the per-window features.
pub fn extract(ctx: &Ctx) -> Result<()> {
    let context_art = load_context_ckpt(ctx)?;
    let svdd_art = load_svdd_ckpt(ctx)?;
    let ecfg = ctx.cfg.extractor();
    let d_e = ctx.cfg.d_e;
    let days = ctx.discover()?;
    ctx.for_each_day(&days, |inst, date| {
        let mut day = day_windows(ctx, &context_art, inst, date)?;
        normalize_windows(&mut day.windows, &svdd_art.ctx_stats, &svdd_art.tx_stats);
        let mut by_segment: Vec<FeatureRow> = (0..day.n_segments)
            .map(|i| FeatureRow {
                date: date.to_string(),
                segment_index: i,
                valid: false,
                values: vec![0.0; d_e],
            })
            .collect();
        for (seg_idx, feat, inputs) in &day.windows {
            let out = extract_feature(&svdd_art.params, &ecfg, inputs, feat, None)
                .map_err(|e| anyhow!("{inst}/{date} segment {seg_idx}: {e}"))?;
            if let Some(values) = out {
                by_segment[*seg_idx].valid = true;
                by_segment[*seg_idx].values = values;
            }
        }
        files::write_features(&ctx.features_path(inst, date), &ctx.hash, d_e, &by_segment)
    })?;
    Ok(())
}

/// Ranks valid windows by distance from the hypersphere center and selects
/// the top `mu` fraction per day.
pub fn select(ctx: &Ctx) -> Result<()> {
    let svdd_art = load_svdd_ckpt(ctx)?;
    let d_e = ctx.cfg.d_e;
    let days = ctx.discover()?;
    ctx.for_each_day(&days, |inst, date| {
        let fpath = ctx.features_path(inst, date);
        files::require(&fpath, "extract")?;
        let rows = files::read_features(&fpath, d_e, Some(&ctx.hash))?;
        let valid: Vec<(usize, Vec<f64>)> = rows
            .iter()
            .filter(|r| r.valid)
            .map(|r| (r.segment_index, r.values.clone()))
            .collect();
        let ranking = rank_and_select(&valid, &svdd_art.center, ctx.cfg.mu);
        let out: Vec<RankingRow> = ranking
            .scores
            .iter()
            .map(|(idx, d)| RankingRow {
                date: date.to_string(),
                segment_index: *idx,
                uniqueness: *d,
                selected: ranking.is_selected(*idx),
            })
            .collect();
        files::write_rankings(&ctx.rankings_path(inst, date), &ctx.hash, &out)?;

        let plot: Vec<(usize, i64, f64, bool)> = out
            .iter()
            .map(|r| {
                (
                    r.segment_index,
                    ctx.cfg.synth_t0_ms + r.segment_index as i64 * ctx.cfg.delta_t_ms,
                    r.uniqueness,
                    r.selected,
                )
            })
            .collect();
        files::write_plot(&ctx.plot_path(inst, date), &ctx.hash, &plot)
    })?;
    Ok(())
}

/// Computes every rule-based baseline selection at the shared budget.
pub fn baselines(ctx: &Ctx) -> Result<()> {
    let days = ctx.discover()?;
    let indices = day_indices(&days);
    ctx.for_each_day(&days, |inst, date| {
        let day = load_day(ctx, inst, date)?;
        let n = day.segments.len();
        let budget = bl::selection_budget(n, ctx.cfg.mu);
        let (inst_idx, day_idx) = indices(inst, date);
        let day_seed = derive_seed(ctx.cfg.seed, "baseline-day", inst_idx, day_idx);

        let mut rows: Vec<BaselineRow> = Vec::new();
        let mut push = |method: &str, selection: Vec<usize>, scores: Option<&[f64]>| {
            for idx in selection {
                rows.push(BaselineRow {
                    method: method.to_string(),
                    date: date.to_string(),
                    segment_index: idx,
                    score: scores.map_or(1.0, |s| s[idx]),
                    selected: true,
                });
            }
        };

        push("random_sample", bl::random_sample(n, budget.min(n), day_seed), None);
        push("uniform_sample", bl::uniform_sample(n, budget.min(n)), None);
        push("price_based", bl::price_based_selection(&day.segments, budget), None);
        push("volume_based", bl::volume_based_selection(&day.segments, budget), None);

        let oi_scores: Vec<f64> = day
            .segments
            .iter()
            .map(|s| {
                let v = bl::order_imbalance(&s.boundary);
                if v.is_finite() {
                    v.abs()
                } else {
                    0.0
                }
            })
            .collect();
        push(
            "order_imbalance",
            bl::order_imbalance_selection(&day.segments, budget),
            Some(&oi_scores),
        );

        let tsoi = bl::time_sensitive_order_imbalance(&day.segments);
        let tsoi_scores: Vec<f64> = tsoi
            .iter()
            .map(|d| d.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        push("tsoi", bl::tsoi_selection(&day.segments, budget), Some(&tsoi_scores));

        let mut prev = None;
        let mut hflob_scores = Vec::with_capacity(n);
        for seg in &day.segments {
            let f = bl::high_freq_lob_features(&seg.boundary, prev);
            hflob_scores.push(f[30..].iter().map(|v| v * v).sum::<f64>().sqrt());
            prev = Some(&seg.boundary);
        }
        // Scores borrow boundaries; recompute selection before push.
        let hflob_sel = bl::hflob_selection(&day.segments, budget);
        push("hflob", hflob_sel, Some(&hflob_scores));

        files::write_baselines(&ctx.baselines_path(inst, date), &ctx.hash, &rows)
    })?;
    Ok(())
}
