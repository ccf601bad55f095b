//! Pipeline stages. Each stage is a pure function of (config, disk state):
//! it reads its predecessors' artifacts, checks their config hashes, and
//! writes stamped outputs. `run_all` chains every stage in order.

mod evaluate;
mod features;
mod gen;
mod model;

pub use evaluate::evaluate;
pub use features::{baselines, extract, select};
pub use gen::gen_data;
pub use model::{train_context, train_svdd};

use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::{Context, Result};
use microflow_core::config::RunConfig;
use microflow_core::data::split_days;
use microflow_core::lob::{Order, OrderKind};
use microflow_core::segment::{segment_day, Segment};
use rayon::prelude::*;

use crate::files;

/// Shared stage context: validated config plus its hash and directories.
pub struct Ctx {
    pub cfg: RunConfig,
    pub hash: String,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Ctx {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        let hash = cfg.config_hash();
        let data_dir = PathBuf::from(&cfg.data_dir);
        let out_dir = PathBuf::from(&cfg.out_dir);
        Ok(Ctx { cfg, hash, data_dir, out_dir })
    }

    pub fn trades_path(&self, inst: &str, date: &str) -> PathBuf {
        self.out_dir.join("trades").join(inst).join(format!("{date}.csv"))
    }

    pub fn segments_path(&self, inst: &str, date: &str) -> PathBuf {
        self.out_dir.join("segments").join(inst).join(format!("{date}.csv"))
    }

    pub fn features_path(&self, inst: &str, date: &str) -> PathBuf {
        self.out_dir.join("features").join(inst).join(format!("{date}.csv"))
    }

    pub fn rankings_path(&self, inst: &str, date: &str) -> PathBuf {
        self.out_dir.join("rankings").join(inst).join(format!("{date}.csv"))
    }

    pub fn baselines_path(&self, inst: &str, date: &str) -> PathBuf {
        self.out_dir.join("baselines").join(inst).join(format!("{date}.csv"))
    }

    pub fn plot_path(&self, inst: &str, date: &str) -> PathBuf {
        self.out_dir.join("plot").join(inst).join(format!("{date}.csv"))
    }

    pub fn context_ckpt_path(&self) -> PathBuf {
        self.out_dir.join("model").join("context.ckpt")
    }

    pub fn svdd_ckpt_path(&self) -> PathBuf {
        self.out_dir.join("model").join("svdd.ckpt")
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.out_dir.join("metrics.json")
    }

    /// Sorted (instrument, date) pairs found in the data directory.
    pub fn discover(&self) -> Result<Vec<(String, String)>> {
        files::require(&self.data_dir, "gen-data")?;
        let days = files::discover_days(&self.data_dir)?;
        anyhow::ensure!(!days.is_empty(), "no order-flow files under {}", self.data_dir.display());
        Ok(days)
    }

    /// Chronological date split over the unique dates of the dataset.
    pub fn date_splits(
        &self,
        days: &[(String, String)],
    ) -> Result<(BTreeSet<String>, BTreeSet<String>, BTreeSet<String>)> {
        let mut dates: Vec<String> = days.iter().map(|(_, d)| d.clone()).collect();
        dates.sort();
        dates.dedup();
        let (tr, va, te) = split_days(&dates).map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok((
            tr.iter().cloned().collect(),
            va.iter().cloned().collect(),
            te.iter().cloned().collect(),
        ))
    }

    /// Runs `f` over days with the configured parallelism; output order
    /// follows input order regardless of scheduling.
    pub fn for_each_day<T, F>(&self, days: &[(String, String)], f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&str, &str) -> Result<T> + Sync,
    {
        let jobs = self.cfg.jobs.max(1);
        if jobs == 1 {
            return days.iter().map(|(i, d)| f(i, d)).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .context("building worker pool")?;
        pool.install(|| days.par_iter().map(|(i, d)| f(i, d)).collect())
    }
}

/// One day loaded and segmented.
pub struct LoadedDay {
    pub instrument: String,
    pub date: String,
    pub segments: Vec<Segment>,
}

/// Reads, optionally de-cancels, and segments one day of order flow.
pub fn load_day(ctx: &Ctx, inst: &str, date: &str) -> Result<LoadedDay> {
    let path = files::orders_path(&ctx.data_dir, inst, date);
    files::require(&path, "gen-data")?;
    let mut orders = files::read_orders(&path, Some(&ctx.hash))?;
    if ctx.cfg.drop_cancels {
        orders.retain(|o| o.kind == OrderKind::Add);
    }
    let segments = segment_orders(ctx, &orders)?;
    Ok(LoadedDay { instrument: inst.to_string(), date: date.to_string(), segments })
}

/// Segments a raw order stream under the run config. The grid fallback
/// anchor is the day's first add price, then the configured initial price.
pub fn segment_orders(ctx: &Ctx, orders: &[Order]) -> Result<Vec<Segment>> {
    let fallback = orders
        .iter()
        .find(|o| o.kind == OrderKind::Add)
        .map(|o| 2 * o.price_ticks)
        .unwrap_or(2 * ctx.cfg.synth_init_price_ticks);
    let depth = ctx.cfg.k_levels + 8;
    segment_day(
        orders,
        ctx.cfg.synth_t0_ms,
        ctx.cfg.synth_session_ms,
        ctx.cfg.delta_t_ms,
        depth,
        fallback,
    )
    .map_err(|e| anyhow::anyhow!("segmenting: {e}"))
}

/// Replays one day into its transaction log.
pub fn replay(ctx: &Ctx) -> Result<()> {
    let days = ctx.discover()?;
    ctx.for_each_day(&days, |inst, date| {
        let path = files::orders_path(&ctx.data_dir, inst, date);
        let mut orders = files::read_orders(&path, Some(&ctx.hash))?;
        if ctx.cfg.drop_cancels {
            orders.retain(|o| o.kind == OrderKind::Add);
        }
        let replayed = microflow_core::lob::replay(&orders)
            .map_err(|e| anyhow::anyhow!("{inst}/{date}: {e}"))?;
        files::write_trades(&ctx.trades_path(inst, date), &ctx.hash, &replayed.transactions)
    })?;
    Ok(())
}

/// Writes the per-day segment dumps.
pub fn segment(ctx: &Ctx) -> Result<()> {
    let days = ctx.discover()?;
    ctx.for_each_day(&days, |inst, date| {
        let day = load_day(ctx, inst, date)?;
        let rows: Vec<files::SegmentDumpRow> = day
            .segments
            .iter()
            .map(|s| files::SegmentDumpRow {
                segment_index: s.index,
                n_orders: s.orders.len(),
                n_transactions: s.transactions.len(),
                mid_ticks: s.mid_ticks(),
            })
            .collect();
        files::write_segment_dump(&ctx.segments_path(inst, date), &ctx.hash, &rows)
    })?;
    Ok(())
}

/// Stage names in execution order.
pub const STAGES: &[&str] = &[
    "gen-data", "replay", "segment", "train-context", "train-svdd", "extract", "select",
    "baselines", "evaluate",
];

/// Runs one named stage.
pub fn run_stage(ctx: &Ctx, name: &str) -> Result<()> {
    match name {
        "gen-data" => gen_data(ctx),
        "replay" => replay(ctx),
        "segment" => segment(ctx),
        "train-context" => train_context(ctx),
        "train-svdd" => train_svdd(ctx),
        "extract" => extract(ctx),
        "select" => select(ctx),
        "baselines" => baselines(ctx),
        "evaluate" => evaluate(ctx),
        other => anyhow::bail!("unknown stage {other:?}"),
    }
}

/// Chains every stage; fails fast with the stage name attached.
pub fn run_all(ctx: &Ctx) -> Result<()> {
    for name in STAGES {
        let started = std::time::Instant::now();
        run_stage(ctx, name).with_context(|| format!("stage {name}"))?;
        eprintln!("[{name}] done in {:.1}s", started.elapsed().as_secs_f64());
    }
    Ok(())
}

/// Stable map from (instrument, date) to its position among instruments and
/// dates, used to derive per-day seeds.
pub fn day_indices(days: &[(String, String)]) -> impl Fn(&str, &str) -> (u64, u64) + '_ {
    let mut instruments: Vec<&str> = days.iter().map(|(i, _)| i.as_str()).collect();
    instruments.sort();
    instruments.dedup();
    let mut dates: Vec<&str> = days.iter().map(|(_, d)| d.as_str()).collect();
    dates.sort();
    dates.dedup();
    move |inst, date| {
        let i = instruments.binary_search(&inst).unwrap_or(0) as u64;
        let d = dates.binary_search(&date).unwrap_or(0) as u64;
        (i, d)
    }
}
