//! Fixed-width day segmentation.
//!
//! A day is split into `ceil(session / dt)` windows. A running replay
//! provides each window's boundary snapshot (book state at window start),
//! its transactions, and the end-of-window book. Each window also gets a
//! price-grid anchor (the boundary mid, falling back to the last trade and
//! then to a caller-supplied reference) against which books are vectorized.
//!
//! Accumulated side books replay only one side's window flow into an empty
//! book: nothing can match, so adds deposit their full size and a cancel
//! removes the full size of an add from the same window.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::fmath;
use crate::lob::{LobError, Order, OrderBook, OrderKind, Side, Ticks, Transaction};

/// Truncated ladder snapshot: enough levels for grid vectorization and the
/// five-level baseline features, without cloning whole books.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BookTop {
    /// Best-first (price, volume), descending prices.
    pub bids: Vec<(Ticks, u64)>,
    /// Best-first (price, volume), ascending prices.
    pub asks: Vec<(Ticks, u64)>,
}

impl BookTop {
    pub fn capture(book: &OrderBook, depth: usize) -> Self {
        let mut bids = book.levels(Side::Bid);
        bids.truncate(depth);
        let mut asks = book.levels(Side::Ask);
        asks.truncate(depth);
        BookTop { bids, asks }
    }

    pub fn mid_x2(&self) -> Option<i64> {
        Some(self.bids.first()?.0 + self.asks.first()?.0)
    }

    pub fn volume_at(&self, side: Side, price: Ticks) -> u64 {
        let levels = match side {
            Side::Bid => &self.bids,
            Side::Ask => &self.asks,
        };
        levels.iter().find(|(p, _)| *p == price).map_or(0, |(_, v)| *v)
    }
}

/// One fixed-width window of a trading day.
#[derive(Clone, Debug)]
pub struct Segment {
    pub index: usize,
    pub start_ms: i64,
    pub end_ms: i64,
    /// Order events whose timestamps fall in the window.
    pub orders: Vec<Order>,
    /// Trades triggered inside the window.
    pub transactions: Vec<Transaction>,
    /// Book state when the window opened.
    pub boundary: BookTop,
    /// Book state when the window closed.
    pub end_book: BookTop,
    /// Grid anchor in half-ticks for this window.
    pub mid_x2: i64,
}

impl Segment {
    pub fn mid_ticks(&self) -> f64 {
        self.mid_x2 as f64 / 2.0
    }
}

/// 2K-dimensional log1p volume vector: K bid slots below the grid anchor,
/// then K ask slots above it.
#[derive(Clone, Debug, PartialEq)]
pub struct BookVector {
    values: Vec<f64>,
    k: usize,
}

impl BookVector {
    pub fn zeros(k: usize) -> Self {
        BookVector { values: alloc::vec![0.0; 2 * k], k }
    }

    pub fn from_values(k: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), 2 * k);
        BookVector { values, k }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Bid slot `k` (0 = one tick below the anchor).
    pub fn bid(&self, slot: usize) -> f64 {
        self.values[slot]
    }

    /// Ask slot `k` (0 = one tick above the anchor).
    pub fn ask(&self, slot: usize) -> f64 {
        self.values[self.k + slot]
    }

    /// Entrywise sum with another vector on the same grid.
    pub fn merge(&self, other: &BookVector) -> BookVector {
        debug_assert_eq!(self.k, other.k);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        BookVector { values, k: self.k }
    }
}

/// Grid anchors derived from a half-tick mid. The bid side anchors at
/// ceil(mid), the ask side at floor(mid), so a one-tick spread keeps both
/// best quotes on-grid; integer mids make the two coincide.
#[inline]
fn grid_anchors(mid_x2: i64, _tick: i64) -> (Ticks, Ticks) {
    debug_assert!(mid_x2 > 0);
    let bid_anchor = (mid_x2 + 1).div_euclid(2);
    let ask_anchor = mid_x2.div_euclid(2);
    (bid_anchor, ask_anchor)
}

/// Fixed-grid vectorization of a ladder pair: bid slot k reads the volume
/// exactly at `anchor - (k+1)*tick`, ask slot k at `anchor + (k+1)*tick`;
/// volumes are log1p-scaled and off-grid levels are dropped.
pub fn vectorize_levels(
    bids: &[(Ticks, u64)],
    asks: &[(Ticks, u64)],
    mid_x2: i64,
    k: usize,
    tick: i64,
) -> BookVector {
    let (bid_anchor, ask_anchor) = grid_anchors(mid_x2, tick);
    let mut out = BookVector::zeros(k);
    for (price, volume) in bids {
        let off = bid_anchor - price;
        if off >= tick && off <= k as i64 * tick && off % tick == 0 {
            out.values[(off / tick - 1) as usize] = fmath::ln_1p(*volume as f64);
        }
    }
    for (price, volume) in asks {
        let off = price - ask_anchor;
        if off >= tick && off <= k as i64 * tick && off % tick == 0 {
            out.values[k + (off / tick - 1) as usize] = fmath::ln_1p(*volume as f64);
        }
    }
    out
}

/// [`vectorize_levels`] over a full book.
pub fn vectorize_book(book: &OrderBook, mid_x2: i64, k: usize, tick: i64) -> BookVector {
    vectorize_levels(&book.levels(Side::Bid), &book.levels(Side::Ask), mid_x2, k, tick)
}

/// [`vectorize_levels`] over a snapshot.
pub fn vectorize_top(top: &BookTop, mid_x2: i64, k: usize, tick: i64) -> BookVector {
    vectorize_levels(&top.bids, &top.asks, mid_x2, k, tick)
}

/// Splits a day into `ceil(session/dt)` windows via a running replay.
/// `fallback_mid_x2` anchors windows that open before any quote or trade
/// exists (typically twice the previous close).
pub fn segment_day(
    orders: &[Order],
    t0_ms: i64,
    session_ms: i64,
    dt_ms: i64,
    snapshot_depth: usize,
    fallback_mid_x2: i64,
) -> Result<Vec<Segment>, LobError> {
    debug_assert!(dt_ms > 0 && session_ms > 0);
    let n_segments = ((session_ms + dt_ms - 1) / dt_ms) as usize;
    let mut book = OrderBook::new();
    let mut segments = Vec::with_capacity(n_segments);
    let mut cursor = 0usize;
    let mut last_trade_x2: Option<i64> = None;
    let mut last_time = i64::MIN;

    for index in 0..n_segments {
        let start_ms = t0_ms + index as i64 * dt_ms;
        let end_ms = (start_ms + dt_ms).min(t0_ms + session_ms);
        let boundary = BookTop::capture(&book, snapshot_depth);
        let mid_x2 = boundary
            .mid_x2()
            .or(last_trade_x2)
            .unwrap_or(fallback_mid_x2)
            .max(2);

        let mut seg_orders = Vec::new();
        let mut seg_txs = Vec::new();
        // Timestamps equal to the session end close into the last window.
        let take_until = if index + 1 == n_segments { i64::MAX } else { end_ms };
        while cursor < orders.len() && orders[cursor].time_ms < take_until {
            let order = orders[cursor];
            cursor += 1;
            if order.time_ms < last_time {
                return Err(LobError::UnsortedOrders { index: cursor - 1 });
            }
            last_time = order.time_ms;
            match order.kind {
                OrderKind::Add => {
                    if let Some(tx) = book.apply_order(&order)? {
                        // Round the fixed-point trade price to whole ticks
                        // for the anchor fallback.
                        last_trade_x2 = Some(
                            2 * crate::lob::div_round_half_even(
                                tx.price_x10000 as i128,
                                crate::lob::PRICE_SCALE as i128,
                            ) as i64,
                        );
                        seg_txs.push(tx);
                    }
                }
                OrderKind::Cancel => {
                    book.cancel_order(order.id)?;
                }
            }
            seg_orders.push(order);
        }

        segments.push(Segment {
            index,
            start_ms,
            end_ms,
            orders: seg_orders,
            transactions: seg_txs,
            boundary,
            end_book: BookTop::capture(&book, snapshot_depth),
            mid_x2,
        });
    }
    Ok(segments)
}

/// Accumulated one-side book: fold of the window's `side` adds into an empty
/// book without matching; a cancel inside the window reverses its add.
pub fn accumulate_side(segment: &Segment, side: Side) -> OrderBook {
    let mut volumes: BTreeMap<Ticks, i64> = BTreeMap::new();
    let mut window_adds: BTreeMap<u64, (Ticks, i64)> = BTreeMap::new();
    for order in &segment.orders {
        match order.kind {
            OrderKind::Add if order.side() == side => {
                let qty = order.quantity() as i64;
                *volumes.entry(order.price_ticks).or_insert(0) += qty;
                window_adds.insert(order.id, (order.price_ticks, qty));
            }
            OrderKind::Cancel => {
                if let Some((price, qty)) = window_adds.remove(&order.id) {
                    *volumes.entry(price).or_insert(0) -= qty;
                }
            }
            _ => {}
        }
    }
    let levels: Vec<(Ticks, u64)> = volumes
        .into_iter()
        .filter(|(_, v)| *v > 0)
        .map(|(p, v)| (p, v as u64))
        .collect();
    match side {
        Side::Bid => OrderBook::from_levels(&levels, &[]),
        Side::Ask => OrderBook::from_levels(&[], &levels),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lob::replay;

    fn sell(id: u64, price: Ticks, qty: i64, t: i64) -> Order {
        Order::add(id, price, qty, t)
    }

    fn buy(id: u64, price: Ticks, qty: i64, t: i64) -> Order {
        Order::add(id, price, -qty, t)
    }

    #[test]
    fn four_hour_session_at_4s_gives_3600_segments() {
        let segs = segment_day(&[], 0, 14_400_000, 4_000, 12, 200).unwrap();
        assert_eq!(segs.len(), 3600);
        assert_eq!(segs[0].start_ms, 0);
        assert_eq!(segs[0].end_ms, 4_000);
        assert_eq!(segs[3599].end_ms, 14_400_000);
    }

    #[test]
    fn windows_partition_the_day() {
        let orders = [
            buy(1, 99, 5, 500),
            sell(2, 101, 5, 4_500),
            buy(3, 101, 2, 8_200), // trades
            sell(4, 102, 1, 11_900),
        ];
        let segs = segment_day(&orders, 0, 12_000, 4_000, 12, 200).unwrap();
        assert_eq!(segs.len(), 3);
        let counts: Vec<usize> = segs.iter().map(|s| s.orders.len()).collect();
        assert_eq!(counts, alloc::vec![1, 1, 2]);
        let total: usize = counts.iter().sum();
        assert_eq!(total, orders.len());

        // Concatenated per-segment logs equal the full-day replay log.
        let full = replay(&orders).unwrap();
        let concat: Vec<_> = segs.iter().flat_map(|s| s.transactions.clone()).collect();
        assert_eq!(concat, full.transactions);
    }

    #[test]
    fn empty_segment_has_empty_accumulations() {
        let segs = segment_day(&[], 0, 8_000, 4_000, 12, 200).unwrap();
        let seg = &segs[0];
        assert!(seg.transactions.is_empty());
        assert!(accumulate_side(seg, Side::Bid).is_empty());
        assert!(accumulate_side(seg, Side::Ask).is_empty());
    }

    #[test]
    fn boundary_snapshot_is_window_start_state() {
        let orders = [buy(1, 99, 5, 1_000), sell(2, 103, 4, 5_000)];
        let segs = segment_day(&orders, 0, 12_000, 4_000, 12, 200).unwrap();
        assert!(segs[0].boundary.bids.is_empty());
        assert_eq!(segs[1].boundary.bids, alloc::vec![(99, 5)]);
        assert!(segs[1].boundary.asks.is_empty());
        assert_eq!(segs[2].boundary.asks, alloc::vec![(103, 4)]);
        // Both sides quoted from segment 2 on: mid = (99 + 103) / 2 = 101.
        assert_eq!(segs[2].mid_x2, 202);
    }

    #[test]
    fn accumulate_sums_same_price_and_splits_sides() {
        let orders = [
            buy(1, 100, 3, 100),
            buy(2, 100, 4, 200),
            sell(3, 104, 2, 300),
        ];
        let segs = segment_day(&orders, 0, 4_000, 4_000, 12, 200).unwrap();
        let buys = accumulate_side(&segs[0], Side::Bid);
        assert_eq!(buys.levels(Side::Bid), alloc::vec![(100, 7)]);
        assert!(buys.levels(Side::Ask).is_empty());
        let sells = accumulate_side(&segs[0], Side::Ask);
        assert_eq!(sells.levels(Side::Ask), alloc::vec![(104, 2)]);
    }

    #[test]
    fn accumulate_reverses_same_window_cancel() {
        let orders = [buy(1, 100, 3, 100), Order::cancel(1, 200)];
        let segs = segment_day(&orders, 0, 4_000, 4_000, 12, 200).unwrap();
        let buys = accumulate_side(&segs[0], Side::Bid);
        assert!(buys.is_empty());
    }

    #[test]
    fn accumulate_ignores_cancel_of_prior_window_order() {
        let orders = [buy(1, 100, 3, 100), Order::cancel(1, 5_000)];
        let segs = segment_day(&orders, 0, 8_000, 4_000, 12, 200).unwrap();
        // The cancel's add lives in window 0, so window 1 accumulates nothing
        // and the subtraction does not go negative.
        let buys = accumulate_side(&segs[1], Side::Bid);
        assert!(buys.is_empty());
    }

    #[test]
    fn vectorize_empty_book_is_zero() {
        let v = vectorize_levels(&[], &[], 200, 10, 1);
        assert_eq!(v.dim(), 20);
        assert!(v.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn vectorize_places_volume_one_tick_below_mid() {
        // Integer mid 100 (mid_x2 = 200): bid slot 0 reads price 99.
        let v = vectorize_levels(&[(99, 5)], &[], 200, 10, 1);
        assert_eq!(v.bid(0), fmath::ln_1p(5.0));
        assert!(v.values()[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn vectorize_drops_off_grid_volume() {
        let base = vectorize_levels(&[(99, 5)], &[], 200, 10, 1);
        // Volume at mid - (K+1) ticks = 89 is off-grid.
        let with_far = vectorize_levels(&[(99, 5), (89, 50)], &[], 200, 10, 1);
        assert_eq!(base, with_far);
    }

    #[test]
    fn vectorize_half_tick_mid_keeps_both_bests() {
        // Best bid 100, best ask 101: mid_x2 = 201. Bid anchor ceil(100.5) =
        // 101, ask anchor floor(100.5) = 100, so both quotes land on slot 0.
        let v = vectorize_levels(&[(100, 2)], &[(101, 3)], 201, 4, 1);
        assert_eq!(v.bid(0), fmath::ln_1p(2.0));
        assert_eq!(v.ask(0), fmath::ln_1p(3.0));
    }

    #[test]
    fn vectorize_is_monotone_in_volume() {
        let lo = vectorize_levels(&[(98, 3)], &[(102, 1)], 200, 10, 1);
        let hi = vectorize_levels(&[(98, 9)], &[(102, 1)], 200, 10, 1);
        for (a, b) in lo.values().iter().zip(hi.values()) {
            assert!(b >= a);
        }
    }

    #[test]
    fn merge_is_entrywise_sum() {
        let a = vectorize_levels(&[(99, 2)], &[], 200, 4, 1);
        let b = vectorize_levels(&[(99, 5)], &[(101, 1)], 200, 4, 1);
        let m = a.merge(&b);
        assert_eq!(m.bid(0), a.bid(0) + b.bid(0));
        assert_eq!(m.ask(0), b.ask(0));
    }
}
