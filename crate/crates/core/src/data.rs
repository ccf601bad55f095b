//! In-memory dataset model: day streams, z-score normalization, dataset
//! splitting, and the synthetic order-flow generator.
//!
//! The generator is a zero-intelligence market: limit orders arrive as a
//! per-segment Poisson process on each side, prices are placed geometrically
//! around the prevailing best quotes (or cross them for the marketable
//! fraction), resting orders cancel at a per-order hazard rate, and the
//! whole stream is driven by the crate's own seeded RNG so identical
//! (config, seed) pairs reproduce byte-identical days. Anomaly windows
//! multiply arrival rates and skew the buy/sell mix; ground-truth labels
//! come back with the stream.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::fmath;
use crate::lob::{Order, OrderBook, OrderKind};
use crate::rng::{derive_seed, Rng};

/// Data-layer errors.
#[derive(Clone, Debug, PartialEq)]
pub enum DataError {
    /// Malformed row in an order-flow file; 1-based line number.
    Parse { line: usize, message: String },
    /// Structurally broken stream (e.g. unsorted timestamps).
    Format(String),
    /// Invalid configuration value.
    Config(String),
    /// Too few days to honor the split ratio.
    TooFewDays { days: usize, need: usize },
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataError::Parse { line, message } => write!(f, "line {line}: {message}"),
            DataError::Format(m) => write!(f, "format error: {m}"),
            DataError::Config(m) => write!(f, "config error: {m}"),
            DataError::TooFewDays { days, need } => {
                write!(f, "cannot split {days} days (need at least {need})")
            }
        }
    }
}

impl core::error::Error for DataError {}

/// One instrument-day of time-sorted order flow.
#[derive(Clone, Debug, PartialEq)]
pub struct DayStream {
    pub instrument: String,
    /// ISO calendar date, e.g. "2024-03-07".
    pub date: String,
    /// Session start in milliseconds.
    pub t0_ms: i64,
    pub session_ms: i64,
    pub orders: Vec<Order>,
}

impl DayStream {
    /// Checks the stream invariants: sorted timestamps inside the session,
    /// nonzero sizes on adds.
    pub fn validate(&self) -> Result<(), DataError> {
        let mut last = i64::MIN;
        for (i, o) in self.orders.iter().enumerate() {
            if o.time_ms < last {
                return Err(DataError::Format(format!(
                    "orders not sorted by time at index {i}"
                )));
            }
            last = o.time_ms;
            if o.time_ms < self.t0_ms || o.time_ms > self.t0_ms + self.session_ms {
                return Err(DataError::Format(format!(
                    "order {} at {} ms outside session",
                    o.id, o.time_ms
                )));
            }
            if o.kind == OrderKind::Add && o.size == 0 {
                return Err(DataError::Format(format!("order {} has zero size", o.id)));
            }
        }
        Ok(())
    }

    /// Copy without cancel events (ingestion option for feeds that
    /// pre-filter cancellations).
    pub fn without_cancels(&self) -> DayStream {
        DayStream {
            orders: self
                .orders
                .iter()
                .filter(|o| o.kind == OrderKind::Add)
                .copied()
                .collect(),
            ..self.clone()
        }
    }
}

/// Per-feature train-split statistics for z-scoring.
///
/// `kept` lists the retained column indices; columns whose population
/// standard deviation is (numerically) zero are dropped. [`NormStats::apply`]
/// removes dropped columns, matching the fit contract;
/// [`NormStats::apply_keep_dims`] instead zeroes them in place, which is what
/// the fixed-width neural inputs use.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub kept: Vec<usize>,
}

/// Streaming Welford accumulator for [`NormStats`]; lets callers fit over
/// large row sets without collecting them.
#[derive(Clone, Debug)]
pub struct NormFitter {
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl NormFitter {
    pub fn new(dim: usize) -> Self {
        NormFitter { n: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn push(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.mean.len());
        self.n += 1;
        let n = self.n as f64;
        for c in 0..row.len() {
            let d = row[c] - self.mean[c];
            self.mean[c] += d / n;
            self.m2[c] += d * (row[c] - self.mean[c]);
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn finish(self) -> Result<NormStats, DataError> {
        if self.n == 0 {
            return Err(DataError::Config("empty training split".into()));
        }
        let dim = self.mean.len();
        let mut std = vec![0.0; dim];
        let mut kept = Vec::with_capacity(dim);
        for c in 0..dim {
            std[c] = fmath::sqrt((self.m2[c] / self.n as f64).max(0.0));
            // Constant columns accumulate only rounding noise; treat
            // anything at that scale as zero variance.
            if std[c] > 1e-12 * (1.0 + fmath::abs(self.mean[c])) {
                kept.push(c);
            } else {
                std[c] = 0.0;
            }
        }
        Ok(NormStats { mean: self.mean, std, kept })
    }
}

impl NormStats {
    /// Population-deviation fit over the training rows.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self, DataError> {
        if rows.is_empty() {
            return Err(DataError::Config("empty training split".into()));
        }
        let mut fitter = NormFitter::new(rows[0].len());
        for r in rows {
            fitter.push(r);
        }
        fitter.finish()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.kept.len()
    }

    pub fn dropped(&self) -> Vec<usize> {
        (0..self.mean.len()).filter(|c| !self.kept.contains(c)).collect()
    }

    /// Normalizes one row, dropping zero-variance columns.
    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        debug_assert_eq!(row.len(), self.mean.len());
        self.kept
            .iter()
            .map(|&c| (row[c] - self.mean[c]) / self.std[c])
            .collect()
    }

    /// Normalizes in place, keeping dimensionality: zero-variance columns
    /// map to 0.
    pub fn apply_keep_dims(&self, row: &mut [f64]) {
        debug_assert_eq!(row.len(), self.mean.len());
        for c in 0..row.len() {
            row[c] = if self.std[c] > 0.0 {
                (row[c] - self.mean[c]) / self.std[c]
            } else {
                0.0
            };
        }
    }

    /// Flattens to (mean row, std row, kept-mask row) for checkpointing.
    pub fn to_rows(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mask = (0..self.mean.len())
            .map(|c| if self.kept.contains(&c) { 1.0 } else { 0.0 })
            .collect();
        (self.mean.clone(), self.std.clone(), mask)
    }

    pub fn from_rows(mean: &[f64], std: &[f64], mask: &[f64]) -> Self {
        let kept = mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m != 0.0)
            .map(|(c, _)| c)
            .collect();
        NormStats { mean: mean.to_vec(), std: std.to_vec(), kept }
    }
}

/// Fits stats on `train` and normalizes both splits with them (columns with
/// zero variance dropped everywhere).
pub fn zscore_fit_apply(
    train: &[Vec<f64>],
    other: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, NormStats), DataError> {
    let stats = NormStats::fit(train)?;
    let t = train.iter().map(|r| stats.apply(r)).collect();
    let o = other.iter().map(|r| stats.apply(r)).collect();
    Ok((t, o, stats))
}

/// Chronological split counts: floor for train and valid, remainder to
/// test. Errors unless every split gets at least one day.
pub fn split_counts(
    days: usize,
    ratio: (usize, usize, usize),
) -> Result<(usize, usize, usize), DataError> {
    let total = ratio.0 + ratio.1 + ratio.2;
    let train = days * ratio.0 / total;
    let valid = days * ratio.1 / total;
    let test = days - train - valid;
    if train == 0 || valid == 0 || test == 0 {
        return Err(DataError::TooFewDays { days, need: total });
    }
    Ok((train, valid, test))
}

/// Splits a chronologically sorted day list 7/1/4 without shuffling.
pub fn split_days<T>(days: &[T]) -> Result<(&[T], &[T], &[T]), DataError> {
    let (tr, va, _te) = split_counts(days.len(), (7, 1, 4))?;
    Ok((&days[..tr], &days[tr..tr + va], &days[tr + va..]))
}

/// Daily OHLC/VWAP summary derived from the day's transactions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DaySummary {
    pub open_x10000: i64,
    pub high_x10000: i64,
    pub low_x10000: i64,
    pub close_x10000: i64,
    pub vwap_x10000: i64,
    pub volume: u64,
}

/// Synthetic market configuration.
#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub instruments: usize,
    pub days: usize,
    pub session_ms: i64,
    pub delta_t_ms: i64,
    pub t0_ms: i64,
    /// Starting price in ticks for day 0.
    pub init_price_ticks: i64,
    /// Limit-order arrivals per second per side.
    pub order_rate_per_s: f64,
    /// Per-resting-order cancellation hazard per second.
    pub cancel_rate_per_order_s: f64,
    /// Fraction of arrivals priced to cross the spread.
    pub marketable_frac: f64,
    /// Mean order size in units (geometric distribution).
    pub mean_size: f64,
    /// Geometric tail parameter for limit-price offsets from the quotes.
    pub offset_q: f64,
    /// Target fraction of anomalous segments per day.
    pub anomaly_frac: f64,
    /// Relative day-to-day variation of the anomaly fraction in [0, 1].
    pub anomaly_jitter: f64,
    /// Segments per anomaly run.
    pub anomaly_run_len: usize,
    /// Arrival-rate multiplier inside anomaly windows.
    pub anomaly_rate_mult: f64,
    /// Buy (or sell) share of arrivals inside anomaly windows, in (0.5, 1).
    pub anomaly_imbalance: f64,
    /// Marketable-fraction multiplier inside anomaly windows (aggressive
    /// flow walks the book and moves the price within the window).
    pub anomaly_marketable_mult: f64,
    /// Strength of the day T anomaly intensity -> day T+2 drift coupling.
    pub label_coupling: f64,
    /// ISO date of day index 0.
    pub base_date: (i32, u32, u32),
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            instruments: 2,
            days: 24,
            session_ms: 14_400_000,
            delta_t_ms: 4_000,
            t0_ms: 0,
            init_price_ticks: 10_000,
            order_rate_per_s: 3.0,
            cancel_rate_per_order_s: 0.01,
            marketable_frac: 0.15,
            mean_size: 4.0,
            offset_q: 0.35,
            anomaly_frac: 0.02,
            anomaly_jitter: 0.0,
            anomaly_run_len: 6,
            anomaly_rate_mult: 6.0,
            anomaly_imbalance: 0.85,
            anomaly_marketable_mult: 2.5,
            label_coupling: 0.0,
            base_date: (2024, 1, 1),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.order_rate_per_s <= 0.0 {
            return Err(DataError::Config("order_rate_per_s must be positive".into()));
        }
        if self.cancel_rate_per_order_s < 0.0 {
            return Err(DataError::Config("cancel rate must be nonnegative".into()));
        }
        if self.session_ms <= 0 || self.delta_t_ms <= 0 {
            return Err(DataError::Config(
                "session and segment lengths must be positive".into(),
            ));
        }
        if self.init_price_ticks <= 0 {
            return Err(DataError::Config("initial price must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.anomaly_frac) {
            return Err(DataError::Config("anomaly_frac must be in [0, 1]".into()));
        }
        if !(0.5..1.0).contains(&self.anomaly_imbalance) {
            return Err(DataError::Config("anomaly_imbalance must be in [0.5, 1)".into()));
        }
        if self.anomaly_run_len == 0 {
            return Err(DataError::Config("anomaly_run_len must be positive".into()));
        }
        Ok(())
    }

    pub fn segments_per_day(&self) -> usize {
        ((self.session_ms + self.delta_t_ms - 1) / self.delta_t_ms) as usize
    }
}

/// One generated instrument-day.
#[derive(Clone, Debug)]
pub struct SynthDay {
    pub stream: DayStream,
    /// Ground-truth anomaly flag per segment.
    pub labels: Vec<bool>,
    /// Realized anomalous-segment fraction.
    pub intensity: f64,
    pub summary: DaySummary,
}

/// Generates one day. `start_price_ticks` chains from the previous close;
/// `drift_bias` shifts the buy/sell arrival mix for the whole day (used to
/// couple future returns to past anomaly intensity).
pub fn generate_synthetic_day(
    cfg: &SynthConfig,
    seed: u64,
    instrument_idx: usize,
    day_idx: usize,
    start_price_ticks: i64,
    drift_bias: f64,
) -> Result<SynthDay, DataError> {
    cfg.validate()?;
    let mut rng = Rng::new(derive_seed(
        seed,
        "synth-day",
        instrument_idx as u64,
        day_idx as u64,
    ));
    let n_segments = cfg.segments_per_day();

    // Anomalous segment placement: contiguous runs, exact floor count.
    let frac = if cfg.anomaly_jitter > 0.0 {
        let u = rng.uniform();
        (cfg.anomaly_frac * (1.0 + cfg.anomaly_jitter * (2.0 * u - 1.0))).clamp(0.0, 1.0)
    } else {
        cfg.anomaly_frac
    };
    let target = (frac * n_segments as f64 + 1e-9) as usize;
    let mut labels = vec![false; n_segments];
    // Per-segment anomaly parameters; runs draw their own intensity and
    // direction so planted anomalies are heterogeneous rather than one
    // repeated signature.
    let mut seg_rate_mult = vec![1.0f64; n_segments];
    let mut seg_buy_share = vec![f64::NAN; n_segments];
    let mut placed = 0usize;
    let mut attempts = 0usize;
    while placed < target && attempts < 10_000 {
        attempts += 1;
        let run = cfg.anomaly_run_len.min(target - placed);
        let start = rng.below((n_segments - run + 1) as u64) as usize;
        if labels[start..start + run].iter().any(|&l| l) {
            continue;
        }
        let dir_buy = rng.uniform() < 0.5;
        let rate = cfg.anomaly_rate_mult * rng.uniform_in(0.6, 1.4);
        let excess = (cfg.anomaly_imbalance - 0.5) * rng.uniform_in(0.6, 1.3);
        let heavy = (0.5 + excess).min(0.97);
        let share = if dir_buy { heavy } else { 1.0 - heavy };
        for s in start..start + run {
            labels[s] = true;
            seg_rate_mult[s] = rate.max(1.0);
            seg_buy_share[s] = share;
        }
        placed += run;
    }

    let mut book = OrderBook::new();
    let mut orders: Vec<Order> = Vec::new();
    let mut live_ids: Vec<u64> = Vec::new();
    let mut next_id: u64 = 1;
    let anchor = start_price_ticks.max(2) as f64;
    let size_p = 1.0 / cfg.mean_size.max(1.0);

    // Day summary accumulators over transactions.
    let mut first_px: Option<i64> = None;
    let mut last_px: i64 = start_price_ticks * crate::lob::PRICE_SCALE;
    let mut high_px = i64::MIN;
    let mut low_px = i64::MAX;
    let mut pv_sum: i128 = 0;
    let mut vol_sum: u64 = 0;

    let dt_s = cfg.delta_t_ms as f64 / 1000.0;
    for seg in 0..n_segments {
        let win_start = cfg.t0_ms + seg as i64 * cfg.delta_t_ms;
        let win_len = cfg.delta_t_ms.min(cfg.t0_ms + cfg.session_ms - win_start);
        if win_len <= 0 {
            break;
        }
        let burst = seg_rate_mult[seg];
        let (buy_share, sell_share) = if labels[seg] {
            (seg_buy_share[seg], 1.0 - seg_buy_share[seg])
        } else {
            // Baseline mix tilted by the day drift bias.
            (0.5 * (1.0 + drift_bias), 0.5 * (1.0 - drift_bias))
        };
        let marketable_frac = if labels[seg] {
            (cfg.marketable_frac * cfg.anomaly_marketable_mult).min(0.8)
        } else {
            cfg.marketable_frac
        };
        let total_rate = 2.0 * cfg.order_rate_per_s * burst;
        let n_buy = poisson(&mut rng, total_rate * buy_share * dt_s);
        let n_sell = poisson(&mut rng, total_rate * sell_share * dt_s);
        let n_cancel = poisson(
            &mut rng,
            cfg.cancel_rate_per_order_s * burst * live_ids.len() as f64 * dt_s,
        );

        // (time, kind) events sorted by time; ties keep generation order.
        let mut events: Vec<(i64, u8)> =
            Vec::with_capacity((n_buy + n_sell + n_cancel) as usize);
        for _ in 0..n_buy {
            events.push((win_start + rng.below(win_len as u64) as i64, 0));
        }
        for _ in 0..n_sell {
            events.push((win_start + rng.below(win_len as u64) as i64, 1));
        }
        for _ in 0..n_cancel {
            events.push((win_start + rng.below(win_len as u64) as i64, 2));
        }
        events.sort_by_key(|e| e.0);

        for (t, kind) in events {
            match kind {
                0 | 1 => {
                    let is_buy = kind == 0;
                    let qty = 1 + rng.geometric(size_p) as i64;
                    let marketable = rng.uniform() < marketable_frac;
                    let price =
                        place_price(&book, &mut rng, anchor, cfg.offset_q, is_buy, marketable);
                    let size = if is_buy { -qty } else { qty };
                    let order = Order::add(next_id, price, size, t);
                    next_id += 1;
                    orders.push(order);
                    let tx = book
                        .apply_order(&order)
                        .map_err(|e| DataError::Format(format!("generator self-replay: {e}")))?;
                    if book.resting_remaining(order.id).is_some() {
                        live_ids.push(order.id);
                    }
                    if let Some(tx) = tx {
                        let px = tx.price_x10000;
                        first_px.get_or_insert(px);
                        last_px = px;
                        high_px = high_px.max(px);
                        low_px = low_px.min(px);
                        pv_sum += px as i128 * tx.quantity() as i128;
                        vol_sum += tx.quantity();
                    }
                }
                _ => {
                    // Cancel a random live order; skip ids that filled since.
                    while !live_ids.is_empty() {
                        let pick = rng.below(live_ids.len() as u64) as usize;
                        let id = live_ids.swap_remove(pick);
                        if book.resting_remaining(id).is_some() {
                            orders.push(Order::cancel(id, t));
                            book.cancel_order(id).map_err(|e| {
                                DataError::Format(format!("generator cancel: {e}"))
                            })?;
                            break;
                        }
                    }
                }
            }
        }

        // Filled ids are dropped from the pool lazily; prune now and then to
        // keep the cancel hazard tied to the true resting count.
        if seg % 64 == 63 {
            live_ids.retain(|id| book.resting_remaining(*id).is_some());
        }
    }

    let open = first_px.unwrap_or(start_price_ticks * crate::lob::PRICE_SCALE);
    let summary = DaySummary {
        open_x10000: open,
        high_x10000: if high_px == i64::MIN { open } else { high_px },
        low_x10000: if low_px == i64::MAX { open } else { low_px },
        close_x10000: last_px,
        vwap_x10000: if vol_sum > 0 { (pv_sum / vol_sum as i128) as i64 } else { open },
        volume: vol_sum,
    };

    let stream = DayStream {
        instrument: format!("SYN{instrument_idx:03}"),
        date: iso_date(cfg.base_date, day_idx as i64),
        t0_ms: cfg.t0_ms,
        session_ms: cfg.session_ms,
        orders,
    };
    let intensity = labels.iter().filter(|&&l| l).count() as f64 / n_segments as f64;
    Ok(SynthDay { stream, labels, intensity, summary })
}

/// Geometric placement relative to the opposite best (falling back to the
/// anchor when that side is empty). Marketable orders cross the spread.
fn place_price(
    book: &OrderBook,
    rng: &mut Rng,
    anchor: f64,
    offset_q: f64,
    is_buy: bool,
    marketable: bool,
) -> i64 {
    let offset = rng.geometric(offset_q) as i64;
    let price = if is_buy {
        match (book.best_ask(), marketable) {
            (Some(ask), true) => ask + offset, // crosses at least the top level
            (Some(ask), false) => ask - 1 - offset,
            (None, _) => anchor as i64 - 1 - offset,
        }
    } else {
        match (book.best_bid(), marketable) {
            (Some(bid), true) => bid - offset,
            (Some(bid), false) => bid + 1 + offset,
            (None, _) => anchor as i64 + 1 + offset,
        }
    };
    price.max(1)
}

/// Knuth's Poisson sampler; fine for the per-segment means used here.
fn poisson(rng: &mut Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let l = fmath::exp(-mean);
    let mut k = 0u64;
    let mut p = 1.0;
    loop {
        p *= rng.uniform();
        if p <= l {
            return k;
        }
        k += 1;
        if k > 100_000 {
            return k; // guard against pathological configs
        }
    }
}

/// Proleptic-Gregorian date arithmetic (civil-from-days), enough to label
/// consecutive synthetic days with ISO dates.
pub fn iso_date(base: (i32, u32, u32), offset_days: i64) -> String {
    let days = days_from_civil(base.0, base.1, base.2) + offset_days;
    let (y, m, d) = civil_from_days(days);
    format!("{y:04}-{m:02}-{d:02}")
}

fn days_from_civil(y: i32, m: u32, d: u32) -> i64 {
    let y = y as i64 - if m <= 2 { 1 } else { 0 };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = y - era * 400;
    let mp = (m as i64 + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

fn civil_from_days(z: i64) -> (i32, u32, u32) {
    let z = z + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    ((y + if m <= 2 { 1 } else { 0 }) as i32, m, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zscore_hand_example() {
        // train {1,2,3}: mean 2, population std sqrt(2/3).
        let train = vec![vec![1.0], vec![2.0], vec![3.0]];
        let (norm, other, stats) = zscore_fit_apply(&train, &[vec![2.0]]).unwrap();
        let sigma = (2.0f64 / 3.0).sqrt();
        assert!((stats.mean[0] - 2.0).abs() < 1e-15);
        assert!((stats.std[0] - sigma).abs() < 1e-15);
        assert!((norm[0][0] + 1.0 / sigma).abs() < 1e-12);
        assert!(norm[1][0].abs() < 1e-12);
        assert!((norm[2][0] - 1.0 / sigma).abs() < 1e-12);
        // Unseen value equal to the mean normalizes to 0.
        assert!(other[0][0].abs() < 1e-12);
    }

    #[test]
    fn constant_feature_dropped() {
        let train = vec![vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]];
        let stats = NormStats::fit(&train).unwrap();
        assert_eq!(stats.kept, vec![0]);
        assert_eq!(stats.dropped(), vec![1]);
        assert_eq!(stats.apply(&[2.0, 5.0]), vec![0.0]);
        let mut row = [2.0, 5.0];
        stats.apply_keep_dims(&mut row);
        assert_eq!(row, [0.0, 0.0]);
    }

    #[test]
    fn norm_stats_checkpoint_rows_round_trip() {
        let train = vec![vec![1.0, 5.0, -2.0], vec![2.0, 5.0, 4.0], vec![4.0, 5.0, 0.0]];
        let stats = NormStats::fit(&train).unwrap();
        let (m, s, k) = stats.to_rows();
        assert_eq!(NormStats::from_rows(&m, &s, &k), stats);
    }

    #[test]
    fn normalized_train_is_standard() {
        let mut rng = Rng::new(4);
        let train: Vec<Vec<f64>> = (0..500)
            .map(|_| vec![rng.uniform_in(-3.0, 9.0), rng.normal() * 0.2 + 1.0])
            .collect();
        let (norm, _, _) = zscore_fit_apply(&train, &[]).unwrap();
        for c in 0..2 {
            let n = norm.len() as f64;
            let mean: f64 = norm.iter().map(|r| r[c]).sum::<f64>() / n;
            let var: f64 =
                norm.iter().map(|r| (r[c] - mean) * (r[c] - mean)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9, "mean {mean}");
            assert!((fmath::sqrt(var) - 1.0).abs() < 1e-9, "std {}", fmath::sqrt(var));
        }
    }

    #[test]
    fn split_ratios() {
        assert_eq!(split_counts(12, (7, 1, 4)).unwrap(), (7, 1, 4));
        assert_eq!(split_counts(24, (7, 1, 4)).unwrap(), (14, 2, 8));
        assert!(matches!(split_counts(3, (7, 1, 4)), Err(DataError::TooFewDays { .. })));
        let days: Vec<u32> = (0..12).collect();
        let (tr, va, te) = split_days(&days).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (7, 1, 4));
        assert_eq!(tr.last(), Some(&6));
        assert_eq!(va[0], 7);
        assert_eq!(te[0], 8);
    }

    #[test]
    fn generator_is_deterministic() {
        let cfg = SynthConfig { session_ms: 120_000, ..Default::default() };
        let a = generate_synthetic_day(&cfg, 7, 0, 0, cfg.init_price_ticks, 0.0).unwrap();
        let b = generate_synthetic_day(&cfg, 7, 0, 0, cfg.init_price_ticks, 0.0).unwrap();
        assert_eq!(a.stream, b.stream);
        assert_eq!(a.labels, b.labels);
        let c = generate_synthetic_day(&cfg, 8, 0, 0, cfg.init_price_ticks, 0.0).unwrap();
        assert_ne!(a.stream.orders, c.stream.orders);
    }

    #[test]
    fn anomaly_fraction_zero_gives_no_labels() {
        let cfg = SynthConfig { session_ms: 240_000, anomaly_frac: 0.0, ..Default::default() };
        let day = generate_synthetic_day(&cfg, 3, 0, 0, cfg.init_price_ticks, 0.0).unwrap();
        assert!(day.labels.iter().all(|&l| !l));
        assert_eq!(day.intensity, 0.0);
    }

    #[test]
    fn anomaly_count_is_floor_of_fraction() {
        // 2% of a 4-hour day at 4 s windows: floor(0.02 * 3600) = 72.
        let cfg = SynthConfig::default();
        assert_eq!(cfg.segments_per_day(), 3600);
        let day = generate_synthetic_day(&cfg, 5, 0, 0, cfg.init_price_ticks, 0.0).unwrap();
        assert_eq!(day.labels.iter().filter(|&&l| l).count(), 72);
    }

    #[test]
    fn generated_stream_validates_and_replays() {
        let cfg = SynthConfig { session_ms: 300_000, ..Default::default() };
        let day = generate_synthetic_day(&cfg, 11, 1, 2, cfg.init_price_ticks, 0.0).unwrap();
        day.stream.validate().unwrap();
        let replayed = crate::lob::replay(&day.stream.orders).unwrap();
        // The generator checks liveness before emitting cancels.
        assert_eq!(replayed.noop_cancels, 0);
        assert!(!day.stream.orders.is_empty());
    }

    #[test]
    fn config_errors() {
        let cfg = SynthConfig { order_rate_per_s: 0.0, ..Default::default() };
        assert!(matches!(
            generate_synthetic_day(&cfg, 1, 0, 0, 100, 0.0),
            Err(DataError::Config(_))
        ));
    }

    #[test]
    fn iso_dates_advance() {
        assert_eq!(iso_date((2024, 1, 1), 0), "2024-01-01");
        assert_eq!(iso_date((2024, 1, 1), 31), "2024-02-01");
        assert_eq!(iso_date((2024, 2, 28), 1), "2024-02-29"); // leap year
        assert_eq!(iso_date((2023, 12, 31), 1), "2024-01-01");
    }
}
