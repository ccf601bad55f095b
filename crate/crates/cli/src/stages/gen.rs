//! Synthetic dataset generation.
//!
//! Days chain per instrument: each day opens at the previous close, and the
//! label-coupling knob tilts day T+2's buy/sell arrival mix by day T's
//! realized anomaly intensity, so two-day-forward returns carry a signal
//! that factor selection can recover.

use anyhow::Result;
use microflow_core::data::generate_synthetic_day;
use microflow_core::lob::{div_round_half_even, PRICE_SCALE};

use super::Ctx;
use crate::files::{self, MetaRow};

pub fn gen_data(ctx: &Ctx) -> Result<()> {
    let synth = ctx.cfg.synth();
    synth.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    anyhow::ensure!(synth.instruments > 0 && synth.days > 0, "need at least one instrument-day");

    let mut meta: Vec<MetaRow> = Vec::new();
    for inst_idx in 0..synth.instruments {
        let mut start_price = synth.init_price_ticks;
        let mut intensities: Vec<f64> = Vec::new();
        for day_idx in 0..synth.days {
            // Day T's anomaly intensity drives day T+2's drift.
            let bias = if day_idx >= 2 && synth.label_coupling != 0.0 {
                let base = synth.anomaly_frac.max(1e-9);
                let rel = (intensities[day_idx - 2] - synth.anomaly_frac) / base;
                (synth.label_coupling * rel).clamp(-0.45, 0.45)
            } else {
                0.0
            };
            let day = generate_synthetic_day(&synth, ctx.cfg.seed, inst_idx, day_idx, start_price, bias)
                .map_err(|e| anyhow::anyhow!("instrument {inst_idx} day {day_idx}: {e}"))?;

            let inst = day.stream.instrument.clone();
            let date = day.stream.date.clone();
            files::write_orders(
                &files::orders_path(&ctx.data_dir, &inst, &date),
                &ctx.hash,
                &day.stream.orders,
            )?;
            files::write_labels(
                &files::labels_path(&ctx.data_dir, &inst, &date),
                &ctx.hash,
                &day.labels,
            )?;
            meta.push(MetaRow {
                instrument: inst,
                date,
                summary: day.summary,
                n_anomalous: day.labels.iter().filter(|&&l| l).count(),
            });
            start_price =
                div_round_half_even(day.summary.close_x10000 as i128, PRICE_SCALE as i128) as i64;
            start_price = start_price.max(2);
            intensities.push(day.intensity);
        }
    }
    meta.sort_by(|a, b| (&a.instrument, &a.date).cmp(&(&b.instrument, &b.date)));
    files::write_meta(&ctx.data_dir.join("meta.csv"), &ctx.hash, &meta)
}
