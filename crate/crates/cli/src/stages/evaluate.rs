//! Downstream evaluation: a ridge prediction head over pooled selected-
//! window factors per method, a factor-driven execution policy versus day
//! VWAP, and (when ground-truth labels exist) anomaly-recovery AUC.
//!
//! Pooling is identical across methods: the same per-window descriptors are
//! aggregated over each method's selected windows, so differences in the
//! report isolate the quality of the selection itself.

use std::collections::{BTreeMap, BTreeSet};

use anyhow::{anyhow, Result};
use microflow_core::data::split_days;
use microflow_core::eval::{
    self, daily_labels, execute_threshold_policy, execute_uniform, fit_ridge, roc_auc,
    ExecutionRecord,
};
use serde::Serialize;

use super::Ctx;
use crate::files::{self, FeatureRow};

pub const METHODS: &[&str] = &[
    "ours",
    "random_sample",
    "uniform_sample",
    "price_based",
    "volume_based",
    "order_imbalance",
    "tsoi",
    "hflob",
];

#[derive(Serialize)]
struct MethodMetrics {
    ic: Option<f64>,
    rank_ic: Option<f64>,
    rank_ir: Option<f64>,
    pa: Option<f64>,
    glr: Option<f64>,
}

#[derive(Serialize)]
struct AucReport {
    train: Option<f64>,
    valid: Option<f64>,
    test: Option<f64>,
}

#[derive(Serialize)]
struct MetricsReport {
    config_hash: String,
    n_instruments: usize,
    n_dates: usize,
    methods: BTreeMap<String, MethodMetrics>,
    anomaly_auc: Option<AucReport>,
    execution_twap_pa: Option<f64>,
}

struct DayEval {
    instrument: String,
    date: String,
    n_segments: usize,
    mid_ticks: Vec<f64>,
    seg_volume: Vec<f64>,
    minute_vwap: Vec<Option<f64>>,
    features: Vec<FeatureRow>,
    our_scores: Vec<Option<f64>>,
    selections: BTreeMap<String, BTreeSet<usize>>,
    labels: Option<Vec<bool>>,
    summary: microflow_core::data::DaySummary,
}

fn load_day_eval(ctx: &Ctx, inst: &str, date: &str, summary: microflow_core::data::DaySummary) -> Result<DayEval> {
    let seg_path = ctx.segments_path(inst, date);
    files::require(&seg_path, "segment")?;
    let dump = files::read_segment_dump(&seg_path, Some(&ctx.hash))?;
    let n_segments = dump.len();
    let mid_ticks: Vec<f64> = dump.iter().map(|r| r.mid_ticks).collect();

    let trades_path = ctx.trades_path(inst, date);
    files::require(&trades_path, "replay")?;
    let trades = files::read_trades(&trades_path, Some(&ctx.hash))?;
    let mut seg_volume = vec![0.0; n_segments];
    let n_minutes = ((ctx.cfg.synth_session_ms + 59_999) / 60_000) as usize;
    let mut minute_pv = vec![0.0f64; n_minutes];
    let mut minute_v = vec![0.0f64; n_minutes];
    for t in &trades {
        let off = t.time_ms - ctx.cfg.synth_t0_ms;
        let seg = ((off / ctx.cfg.delta_t_ms) as usize).min(n_segments.saturating_sub(1));
        seg_volume[seg] += t.quantity() as f64;
        let minute = ((off / 60_000) as usize).min(n_minutes.saturating_sub(1));
        minute_pv[minute] += t.price() * t.quantity() as f64;
        minute_v[minute] += t.quantity() as f64;
    }
    let minute_vwap: Vec<Option<f64>> = minute_pv
        .iter()
        .zip(&minute_v)
        .map(|(pv, v)| if *v > 0.0 { Some(pv / v) } else { None })
        .collect();

    let features_path = ctx.features_path(inst, date);
    files::require(&features_path, "extract")?;
    let features = files::read_features(&features_path, ctx.cfg.d_e, Some(&ctx.hash))?;
    anyhow::ensure!(
        features.len() == n_segments,
        "{inst}/{date}: feature rows ({}) disagree with segment dump ({n_segments})",
        features.len()
    );

    let rank_path = ctx.rankings_path(inst, date);
    files::require(&rank_path, "select")?;
    let rankings = files::read_rankings(&rank_path, Some(&ctx.hash))?;
    let mut our_scores = vec![None; n_segments];
    let mut ours = BTreeSet::new();
    for r in &rankings {
        our_scores[r.segment_index] = Some(r.uniqueness);
        if r.selected {
            ours.insert(r.segment_index);
        }
    }

    let base_path = ctx.baselines_path(inst, date);
    files::require(&base_path, "baselines")?;
    let mut selections: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    selections.insert("ours".into(), ours);
    for row in files::read_baselines(&base_path, Some(&ctx.hash))? {
        if row.selected {
            selections.entry(row.method).or_default().insert(row.segment_index);
        }
    }
    for m in METHODS {
        selections.entry((*m).into()).or_default();
    }

    let labels_path = files::labels_path(&ctx.data_dir, inst, date);
    let labels = if labels_path.exists() {
        Some(files::read_labels(&labels_path, Some(&ctx.hash))?)
    } else {
        None
    };

    Ok(DayEval {
        instrument: inst.to_string(),
        date: date.to_string(),
        n_segments,
        mid_ticks,
        seg_volume,
        minute_vwap,
        features,
        our_scores,
        selections,
        labels,
        summary,
    })
}

/// Pooled day feature for one method: 6 daily stats, mean/max/min of the
/// window features over the selected set, and mean/max/min of per-window
/// (mid price, log volume, time fraction) descriptors.
fn day_feature(day: &DayEval, method: &str, d_e: usize) -> Vec<f64> {
    let s = &day.summary;
    let mut out = vec![
        s.open_x10000 as f64 / 1e4,
        s.high_x10000 as f64 / 1e4,
        s.low_x10000 as f64 / 1e4,
        s.close_x10000 as f64 / 1e4,
        s.vwap_x10000 as f64 / 1e4,
        (s.volume as f64).ln_1p(),
    ];
    let selected = &day.selections[method];

    // Pool the extracted window features over selected, valid windows.
    let mut pooled_rows: Vec<&[f64]> = Vec::new();
    for &idx in selected {
        let row = &day.features[idx];
        if row.valid {
            pooled_rows.push(&row.values);
        }
    }
    out.extend(pool3(&pooled_rows, d_e));

    // Pool per-window descriptors over the whole selected set.
    let descriptors: Vec<Vec<f64>> = selected
        .iter()
        .map(|&idx| {
            vec![
                day.mid_ticks[idx],
                day.seg_volume[idx].ln_1p(),
                idx as f64 / day.n_segments.max(1) as f64,
            ]
        })
        .collect();
    let refs: Vec<&[f64]> = descriptors.iter().map(|v| v.as_slice()).collect();
    out.extend(pool3(&refs, 3));
    out
}

/// Columnwise mean/max/min over rows; zeros when no rows.
fn pool3(rows: &[&[f64]], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; 3 * dim];
    if rows.is_empty() {
        return out;
    }
    for c in 0..dim {
        let mut sum = 0.0;
        let mut max = f64::NEG_INFINITY;
        let mut min = f64::INFINITY;
        for r in rows {
            sum += r[c];
            max = max.max(r[c]);
            min = min.min(r[c]);
        }
        out[c] = sum / rows.len() as f64;
        out[dim + c] = max;
        out[2 * dim + c] = min;
    }
    out
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len().max(1) as f64
}

pub fn evaluate(ctx: &Ctx) -> Result<()> {
    let meta_path = ctx.data_dir.join("meta.csv");
    files::require(&meta_path, "gen-data")?;
    let meta = files::read_meta(&meta_path, Some(&ctx.hash))?;
    anyhow::ensure!(!meta.is_empty(), "meta.csv is empty");

    let day_list: Vec<(String, String)> =
        meta.iter().map(|m| (m.instrument.clone(), m.date.clone())).collect();
    let evals: Vec<DayEval> = {
        let by_key: BTreeMap<(String, String), microflow_core::data::DaySummary> = meta
            .iter()
            .map(|m| ((m.instrument.clone(), m.date.clone()), m.summary))
            .collect();
        ctx.for_each_day(&day_list, |inst, date| {
            let summary = by_key[&(inst.to_string(), date.to_string())];
            load_day_eval(ctx, inst, date, summary)
        })?
    };

    // Two-day-forward labels per instrument from the close series.
    let mut labels_by_day: BTreeMap<(String, String), f64> = BTreeMap::new();
    let mut instruments: Vec<String> = meta.iter().map(|m| m.instrument.clone()).collect();
    instruments.sort();
    instruments.dedup();
    for inst in &instruments {
        let rows: Vec<&files::MetaRow> =
            meta.iter().filter(|m| &m.instrument == inst).collect();
        let closes: Vec<f64> =
            rows.iter().map(|m| m.summary.close_x10000 as f64 / 1e4).collect();
        for (m, label) in rows.iter().zip(daily_labels(&closes)) {
            if let Some(y) = label {
                labels_by_day.insert((inst.clone(), m.date.clone()), y);
            }
        }
    }

    let mut dates: Vec<String> = meta.iter().map(|m| m.date.clone()).collect();
    dates.sort();
    dates.dedup();
    let (train_dates, _valid_dates, test_dates) = {
        let (tr, va, te) = split_days(&dates).map_err(|e| anyhow!("{e}"))?;
        (
            tr.iter().cloned().collect::<BTreeSet<_>>(),
            va.iter().cloned().collect::<BTreeSet<_>>(),
            te.iter().cloned().collect::<BTreeSet<_>>(),
        )
    };

    let mut methods_out: BTreeMap<String, MethodMetrics> = BTreeMap::new();
    let mut twap_records: Vec<ExecutionRecord> = Vec::new();

    for &method in METHODS {
        // Prediction head: pooled day features -> two-day-forward return.
        let mut train_rows: Vec<Vec<f64>> = Vec::new();
        let mut train_y: Vec<f64> = Vec::new();
        let mut test_rows: Vec<Vec<f64>> = Vec::new();
        let mut test_y: Vec<f64> = Vec::new();
        let mut test_keys: Vec<(String, String)> = Vec::new();
        for day in &evals {
            let key = (day.instrument.clone(), day.date.clone());
            let Some(&y) = labels_by_day.get(&key) else { continue };
            let row = day_feature(day, method, ctx.cfg.d_e);
            if train_dates.contains(&day.date) {
                train_rows.push(row);
                train_y.push(y);
            } else if test_dates.contains(&day.date) {
                test_rows.push(row);
                test_y.push(y);
                test_keys.push(key);
            }
        }

        let (ic, rank_ic, rank_ir) = if train_rows.len() >= 3 && test_rows.len() >= 3 {
            match microflow_core::data::zscore_fit_apply(&train_rows, &test_rows) {
                Ok((norm_train, norm_test, _)) => {
                    match fit_ridge(&norm_train, &train_y, ctx.cfg.ridge_alpha) {
                        Ok(ridge) => {
                            let preds: Vec<f64> =
                                norm_test.iter().map(|r| ridge.predict(r)).collect();
                            cross_sectional_metrics(&preds, &test_y, &test_keys, instruments.len())
                        }
                        Err(_) => (None, None, None),
                    }
                }
                Err(_) => (None, None, None),
            }
        } else {
            (None, None, None)
        };

        // Execution policy on test days.
        let mut records: Vec<ExecutionRecord> = Vec::new();
        for day in &evals {
            if !test_dates.contains(&day.date) {
                continue;
            }
            if day.minute_vwap.iter().all(|m| m.is_none()) {
                continue; // no trades at all; no execution comparison
            }
            let n_minutes = day.minute_vwap.len();
            let segs_per_minute = (60_000 / ctx.cfg.delta_t_ms).max(1) as usize;
            let mut scores = vec![0.0f64; n_minutes];
            for minute in 0..n_minutes {
                let lo = minute * segs_per_minute;
                let hi = ((minute + 1) * segs_per_minute).min(day.n_segments);
                if lo >= hi {
                    continue;
                }
                let mut total = 0.0;
                for idx in lo..hi {
                    total += if method == "ours" {
                        day.our_scores[idx].unwrap_or(0.0)
                    } else {
                        f64::from(day.selections[method].contains(&idx) as u8)
                    };
                }
                scores[minute] = total / (hi - lo) as f64;
            }
            let market = day.summary.vwap_x10000 as f64 / 1e4;
            if let Ok(price) = execute_threshold_policy(&scores, &day.minute_vwap) {
                records.push(ExecutionRecord { strategy_price: price, market_vwap: market });
            }
            if method == "ours" {
                if let Ok(price) = execute_uniform(&day.minute_vwap) {
                    twap_records.push(ExecutionRecord { strategy_price: price, market_vwap: market });
                }
            }
        }
        let pa = eval::pa(&records).ok();
        let series: Vec<f64> = records.iter().map(|r| r.pa()).collect();
        let glr = eval::glr(&series).ok();

        methods_out.insert(method.to_string(), MethodMetrics { ic, rank_ic, rank_ir, pa, glr });
    }

    // Anomaly recovery (needs label files for every day).
    let anomaly_auc = if evals.iter().all(|d| d.labels.is_some()) {
        let split_auc = |dates: &BTreeSet<String>| -> Option<f64> {
            let mut scores = Vec::new();
            let mut labels = Vec::new();
            for day in &evals {
                if !dates.contains(&day.date) {
                    continue;
                }
                let lab = day.labels.as_ref().expect("checked above");
                for idx in 0..day.n_segments {
                    if let Some(s) = day.our_scores[idx] {
                        scores.push(s);
                        labels.push(lab[idx]);
                    }
                }
            }
            roc_auc(&scores, &labels).ok()
        };
        Some(AucReport {
            train: split_auc(&train_dates),
            valid: split_auc(&_valid_dates),
            test: split_auc(&test_dates),
        })
    } else {
        None
    };

    let report = MetricsReport {
        config_hash: ctx.hash.clone(),
        n_instruments: instruments.len(),
        n_dates: dates.len(),
        methods: methods_out,
        anomaly_auc,
        execution_twap_pa: eval::pa(&twap_records).ok(),
    };
    let json = serde_json::to_string_pretty(&report)?;
    files::write_file(&ctx.metrics_path(), format!("{json}\n").as_bytes())
}

/// Mean per-date cross-sectional correlations over the test split; falls
/// back to pooled correlations when there are too few instruments per date.
fn cross_sectional_metrics(
    preds: &[f64],
    truth: &[f64],
    keys: &[(String, String)],
    n_instruments: usize,
) -> (Option<f64>, Option<f64>, Option<f64>) {
    if n_instruments >= 3 {
        let mut by_date: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
        for ((_, date), (p, y)) in keys.iter().zip(preds.iter().zip(truth)) {
            by_date.entry(date).or_default().push((*p, *y));
        }
        let mut ics = Vec::new();
        let mut rics = Vec::new();
        for rows in by_date.values() {
            let p: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
            if let Ok(v) = eval::ic(&p, &y) {
                ics.push(v);
            }
            if let Ok(v) = eval::rank_ic(&p, &y) {
                rics.push(v);
            }
        }
        let ic = (!ics.is_empty()).then(|| mean(&ics));
        let rank_ic = (!rics.is_empty()).then(|| mean(&rics));
        let rank_ir = eval::rank_ir(&rics).ok();
        (ic, rank_ic, rank_ir)
    } else {
        (eval::ic(preds, truth).ok(), eval::rank_ic(preds, truth).ok(), None)
    }
}
