//! Limit-order-book state machine.
//!
//! Orders carry signed sizes: positive means sell, negative means buy. An
//! incoming order that crosses the opposite side consumes resting volume
//! best-price-first and, within a price level, oldest-first. A matched order
//! emits exactly one transaction whose price is the volume-weighted average
//! of the consumed levels, held as fixed-point with 4 decimal places
//! (round-half-even) so replays are bit-exact. Any unmatched remainder rests
//! at the order's limit price.
//!
//! Cancellation removes the unfilled remainder of a resting order; volume
//! that already traded stays traded.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;
use core::fmt;

/// Price in integer ticks.
pub type Ticks = i64;

/// Scale factor for fixed-point transaction prices.
pub const PRICE_SCALE: i64 = 10_000;

/// Book side. `Bid` holds buy interest, `Ask` holds sell interest.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Bid => Side::Ask,
            Side::Ask => Side::Bid,
        }
    }
}

/// Order event kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrderKind {
    Add,
    Cancel,
}

/// A tick-level order event.
///
/// `size > 0` is a sell commitment, `size < 0` a buy commitment; zero is
/// invalid. A `Cancel` references a previously added order through `id`
/// (its price/size fields are ignored on replay).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Order {
    pub id: u64,
    pub kind: OrderKind,
    pub price_ticks: Ticks,
    pub size: i64,
    pub time_ms: i64,
}

impl Order {
    pub fn add(id: u64, price_ticks: Ticks, size: i64, time_ms: i64) -> Self {
        Order { id, kind: OrderKind::Add, price_ticks, size, time_ms }
    }

    pub fn cancel(id: u64, time_ms: i64) -> Self {
        Order { id, kind: OrderKind::Cancel, price_ticks: 0, size: 0, time_ms }
    }

    /// Side the order would rest on.
    pub fn side(&self) -> Side {
        if self.size > 0 {
            Side::Ask
        } else {
            Side::Bid
        }
    }

    pub fn quantity(&self) -> u64 {
        self.size.unsigned_abs()
    }
}

/// A completed trade. `size` keeps the aggressor's sign convention
/// (positive = active sell, negative = active buy); `price_x10000` is the
/// consumed-level VWAP in fixed point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transaction {
    pub time_ms: i64,
    pub price_x10000: i64,
    pub size: i64,
}

impl Transaction {
    pub fn quantity(&self) -> u64 {
        self.size.unsigned_abs()
    }

    pub fn price(&self) -> f64 {
        self.price_x10000 as f64 / PRICE_SCALE as f64
    }
}

/// Engine errors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LobError {
    /// Zero size, nonpositive price, or a `Cancel` passed to `apply_order`.
    InvalidOrder { id: u64, reason: &'static str },
    /// Order id re-used by a second `Add`.
    DuplicateId(u64),
    /// Cancel of an id never seen by this book.
    UnknownOrder(u64),
    /// Replay input not sorted by time.
    UnsortedOrders { index: usize },
}

impl fmt::Display for LobError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LobError::InvalidOrder { id, reason } => {
                write!(f, "invalid order {id}: {reason}")
            }
            LobError::DuplicateId(id) => write!(f, "duplicate order id {id}"),
            LobError::UnknownOrder(id) => write!(f, "unknown order id {id}"),
            LobError::UnsortedOrders { index } => {
                write!(f, "orders not sorted by time at index {index}")
            }
        }
    }
}

impl core::error::Error for LobError {}

/// Outcome of a cancel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CancelOutcome {
    /// The unfilled remainder that was removed from the book.
    Removed { remaining: u64 },
    /// The order was already fully filled (or previously cancelled); no-op.
    AlreadyGone,
}

#[derive(Clone, Debug, Default)]
struct Level {
    volume: u64,
    /// Resting order ids in arrival order; remainders live in the id index.
    queue: VecDeque<u64>,
}

#[derive(Clone, Debug)]
struct OrderRef {
    side: Side,
    price_ticks: Ticks,
    /// Unfilled quantity still resting; 0 once filled or cancelled.
    remaining: u64,
}

/// Price-level ladder pair with FIFO queues and an order-id index.
#[derive(Clone, Debug, Default)]
pub struct OrderBook {
    bids: BTreeMap<Ticks, Level>,
    asks: BTreeMap<Ticks, Level>,
    index: BTreeMap<u64, OrderRef>,
}

/// Result of replaying a day of order flow.
#[derive(Clone, Debug)]
pub struct Replay {
    pub book: OrderBook,
    pub transactions: Vec<Transaction>,
    /// Cancels that referenced an already-gone (fully filled) order.
    pub noop_cancels: usize,
}

/// Integer division rounding half to even; `num >= 0`, `den > 0`.
pub fn div_round_half_even(num: i128, den: i128) -> i128 {
    debug_assert!(num >= 0 && den > 0);
    let q = num / den;
    let r = num % den;
    match (2 * r).cmp(&den) {
        core::cmp::Ordering::Less => q,
        core::cmp::Ordering::Greater => q + 1,
        core::cmp::Ordering::Equal => {
            if q % 2 == 0 {
                q
            } else {
                q + 1
            }
        }
    }
}

impl OrderBook {
    pub fn new() -> Self {
        Self::default()
    }

    /// Diagnostic book from bare (price, volume) levels: no queues, no ids,
    /// not usable as matching state. Zero-volume levels are skipped.
    pub fn from_levels(bids: &[(Ticks, u64)], asks: &[(Ticks, u64)]) -> Self {
        let mut book = OrderBook::new();
        for (p, v) in bids {
            if *v > 0 {
                book.bids.entry(*p).or_default().volume += v;
            }
        }
        for (p, v) in asks {
            if *v > 0 {
                book.asks.entry(*p).or_default().volume += v;
            }
        }
        book
    }

    pub fn best_bid(&self) -> Option<Ticks> {
        self.bids.keys().next_back().copied()
    }

    pub fn best_ask(&self) -> Option<Ticks> {
        self.asks.keys().next().copied()
    }

    /// Midpoint in half-ticks (`best_bid + best_ask`), if both sides exist.
    /// Half-tick units keep one-tick spreads exact.
    pub fn mid_x2(&self) -> Option<i64> {
        Some(self.best_bid()? + self.best_ask()?)
    }

    /// Best-first (price, volume) pairs: descending bids, ascending asks.
    pub fn levels(&self, side: Side) -> Vec<(Ticks, u64)> {
        match side {
            Side::Bid => self.bids.iter().rev().map(|(p, l)| (*p, l.volume)).collect(),
            Side::Ask => self.asks.iter().map(|(p, l)| (*p, l.volume)).collect(),
        }
    }

    pub fn volume_at(&self, side: Side, price_ticks: Ticks) -> u64 {
        let ladder = match side {
            Side::Bid => &self.bids,
            Side::Ask => &self.asks,
        };
        ladder.get(&price_ticks).map_or(0, |l| l.volume)
    }

    /// Unfilled quantity of a resting order; `None` once gone or never seen.
    pub fn resting_remaining(&self, id: u64) -> Option<u64> {
        match self.index.get(&id) {
            Some(r) if r.remaining > 0 => Some(r.remaining),
            _ => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.bids.is_empty() && self.asks.is_empty()
    }

    /// Full per-side snapshot including queue contents, best price first.
    /// Used by tests that check price-time priority against an oracle.
    pub fn snapshot(&self, side: Side) -> Vec<(Ticks, u64, Vec<(u64, u64)>)> {
        let collect = |(price, level): (&Ticks, &Level)| {
            let queue = level
                .queue
                .iter()
                .map(|id| (*id, self.index[id].remaining))
                .collect();
            (*price, level.volume, queue)
        };
        match side {
            Side::Bid => self.bids.iter().rev().map(collect).collect(),
            Side::Ask => self.asks.iter().map(collect).collect(),
        }
    }

    /// Applies an `Add` order: match against the opposite side, then rest
    /// any remainder at the limit price. Returns the aggregate transaction
    /// if anything traded.
    pub fn apply_order(&mut self, order: &Order) -> Result<Option<Transaction>, LobError> {
        if order.kind != OrderKind::Add {
            return Err(LobError::InvalidOrder { id: order.id, reason: "expected Add" });
        }
        if order.size == 0 {
            return Err(LobError::InvalidOrder { id: order.id, reason: "size is zero" });
        }
        if order.price_ticks <= 0 {
            return Err(LobError::InvalidOrder { id: order.id, reason: "nonpositive price" });
        }
        if self.index.contains_key(&order.id) {
            return Err(LobError::DuplicateId(order.id));
        }

        let side = order.side();
        let mut qty = order.quantity();
        let mut consumed_value: i128 = 0; // sum of price * quantity over fills
        let mut lo_price = Ticks::MAX;
        let mut hi_price = Ticks::MIN;
        let filled_total;

        {
            let (ladder, crosses): (&mut BTreeMap<Ticks, Level>, fn(Ticks, Ticks) -> bool) =
                match side {
                    // Buy order consumes asks priced at or below its limit.
                    Side::Bid => (&mut self.asks, |best, limit| best <= limit),
                    // Sell order consumes bids priced at or above its limit.
                    Side::Ask => (&mut self.bids, |best, limit| best >= limit),
                };
            let start_qty = qty;
            while qty > 0 {
                let best = match side {
                    Side::Bid => ladder.keys().next().copied(),
                    Side::Ask => ladder.keys().next_back().copied(),
                };
                let Some(best) = best else { break };
                if !crosses(best, order.price_ticks) {
                    break;
                }
                let level = ladder.get_mut(&best).expect("best level exists");
                while qty > 0 {
                    let Some(&front_id) = level.queue.front() else { break };
                    let entry = self.index.get_mut(&front_id).expect("queued id indexed");
                    let take = entry.remaining.min(qty);
                    entry.remaining -= take;
                    level.volume -= take;
                    qty -= take;
                    consumed_value += best as i128 * take as i128;
                    lo_price = lo_price.min(best);
                    hi_price = hi_price.max(best);
                    if entry.remaining == 0 {
                        level.queue.pop_front();
                    }
                }
                if level.volume == 0 {
                    ladder.remove(&best);
                }
            }
            filled_total = start_qty - qty;
        }

        // Remainder rests at the limit price on the order's own side.
        self.index.insert(
            order.id,
            OrderRef { side, price_ticks: order.price_ticks, remaining: qty },
        );
        if qty > 0 {
            let ladder = match side {
                Side::Bid => &mut self.bids,
                Side::Ask => &mut self.asks,
            };
            let level = ladder.entry(order.price_ticks).or_default();
            level.volume += qty;
            level.queue.push_back(order.id);
        }

        if let (Some(bb), Some(ba)) = (self.best_bid(), self.best_ask()) {
            assert!(bb < ba, "book crossed after apply: bid {bb} >= ask {ba}");
        }

        if filled_total == 0 {
            return Ok(None);
        }
        let price_x10000 = div_round_half_even(
            consumed_value * PRICE_SCALE as i128,
            filled_total as i128,
        ) as i64;
        debug_assert!(
            price_x10000 >= lo_price * PRICE_SCALE && price_x10000 <= hi_price * PRICE_SCALE
        );
        let signed = if side == Side::Ask {
            filled_total as i64
        } else {
            -(filled_total as i64)
        };
        Ok(Some(Transaction { time_ms: order.time_ms, price_x10000, size: signed }))
    }

    /// Removes the unfilled remainder of a previously added order.
    pub fn cancel_order(&mut self, id: u64) -> Result<CancelOutcome, LobError> {
        let entry = self.index.get_mut(&id).ok_or(LobError::UnknownOrder(id))?;
        if entry.remaining == 0 {
            return Ok(CancelOutcome::AlreadyGone);
        }
        let remaining = entry.remaining;
        entry.remaining = 0;
        let (side, price) = (entry.side, entry.price_ticks);
        let ladder = match side {
            Side::Bid => &mut self.bids,
            Side::Ask => &mut self.asks,
        };
        let level = ladder.get_mut(&price).expect("resting order has a level");
        let pos = level
            .queue
            .iter()
            .position(|&q| q == id)
            .expect("resting order queued at its level");
        level.queue.remove(pos);
        level.volume -= remaining;
        if level.volume == 0 {
            ladder.remove(&price);
        }
        Ok(CancelOutcome::Removed { remaining })
    }

    /// Volume-sum of two books, per side and price. The result is a
    /// diagnostic object: queues are dropped and the sum may be crossed.
    pub fn merged(&self, other: &OrderBook) -> OrderBook {
        let mut out = OrderBook::new();
        for (ladder, side) in [(&mut out.bids, Side::Bid), (&mut out.asks, Side::Ask)] {
            for src in [self, other] {
                let src_ladder = match side {
                    Side::Bid => &src.bids,
                    Side::Ask => &src.asks,
                };
                for (p, l) in src_ladder {
                    if l.volume > 0 {
                        ladder.entry(*p).or_default().volume += l.volume;
                    }
                }
            }
        }
        out
    }

    /// Total resting volume on one side.
    pub fn total_volume(&self, side: Side) -> u64 {
        let ladder = match side {
            Side::Bid => &self.bids,
            Side::Ask => &self.asks,
        };
        ladder.values().map(|l| l.volume).sum()
    }
}

/// Replays a time-sorted order stream (ties keep input order) from an empty
/// book. Errors from individual orders propagate; cancels of already-filled
/// orders are counted, not failed.
pub fn replay(orders: &[Order]) -> Result<Replay, LobError> {
    let mut book = OrderBook::new();
    let mut transactions = Vec::new();
    let mut noop_cancels = 0usize;
    let mut last_time = i64::MIN;
    for (i, order) in orders.iter().enumerate() {
        if order.time_ms < last_time {
            return Err(LobError::UnsortedOrders { index: i });
        }
        last_time = order.time_ms;
        match order.kind {
            OrderKind::Add => {
                if let Some(tx) = book.apply_order(order)? {
                    transactions.push(tx);
                }
            }
            OrderKind::Cancel => match book.cancel_order(order.id)? {
                CancelOutcome::Removed { .. } => {}
                CancelOutcome::AlreadyGone => noop_cancels += 1,
            },
        }
    }
    Ok(Replay { book, transactions, noop_cancels })
}
