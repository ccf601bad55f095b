//! Independent reference implementations used as test oracles.
//!
//! Gated behind the `testkit` feature: nothing here ships in a normal
//! build, and nothing here may call into the implementations it checks.
//! The naive book keeps every resting order in one flat vector and scans it
//! for each event; the metric functions use direct (quadratic where that is
//! simplest) formulations.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::lob::{div_round_half_even, Order, OrderKind, Side, Ticks, Transaction, PRICE_SCALE};
use crate::rng::Rng;

/// Scan-based limit-order-book with the same external semantics as the
/// incremental engine.
#[derive(Clone, Debug, Default)]
pub struct NaiveBook {
    resting: Vec<NaiveResting>,
    seen: BTreeSet<u64>,
    next_seq: u64,
}

#[derive(Clone, Debug)]
struct NaiveResting {
    id: u64,
    side: Side,
    price: Ticks,
    remaining: u64,
    seq: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NaiveCancel {
    Removed { remaining: u64 },
    AlreadyGone,
    Unknown,
}

impl NaiveBook {
    pub fn new() -> Self {
        Self::default()
    }

    /// Applies an add order by scanning for the best crossing counterparty
    /// until the order is filled or nothing crosses.
    pub fn apply(&mut self, order: &Order) -> Option<Transaction> {
        assert_eq!(order.kind, OrderKind::Add);
        assert!(self.seen.insert(order.id), "duplicate id {}", order.id);
        let side = order.side();
        let mut qty = order.quantity();
        let mut consumed: i128 = 0;
        let mut filled: u64 = 0;
        loop {
            if qty == 0 {
                break;
            }
            // Best opposing order: best price first, then arrival order.
            let mut best: Option<usize> = None;
            for (i, r) in self.resting.iter().enumerate() {
                if r.side == side || r.remaining == 0 {
                    continue;
                }
                let crosses = match side {
                    Side::Bid => r.price <= order.price_ticks,
                    Side::Ask => r.price >= order.price_ticks,
                };
                if !crosses {
                    continue;
                }
                best = Some(match best {
                    None => i,
                    Some(b) => {
                        let rb = &self.resting[b];
                        let better = match side {
                            Side::Bid => {
                                (r.price, r.seq) < (rb.price, rb.seq)
                            }
                            Side::Ask => {
                                (core::cmp::Reverse(r.price), r.seq)
                                    < (core::cmp::Reverse(rb.price), rb.seq)
                            }
                        };
                        if better {
                            i
                        } else {
                            b
                        }
                    }
                });
            }
            let Some(i) = best else { break };
            let take = self.resting[i].remaining.min(qty);
            self.resting[i].remaining -= take;
            consumed += self.resting[i].price as i128 * take as i128;
            qty -= take;
            filled += take;
            if self.resting[i].remaining == 0 {
                self.resting.remove(i);
            }
        }
        if qty > 0 {
            self.resting.push(NaiveResting {
                id: order.id,
                side,
                price: order.price_ticks,
                remaining: qty,
                seq: self.next_seq,
            });
        }
        self.next_seq += 1;
        if filled == 0 {
            return None;
        }
        let price_x10000 =
            div_round_half_even(consumed * PRICE_SCALE as i128, filled as i128) as i64;
        let signed = if side == Side::Ask { filled as i64 } else { -(filled as i64) };
        Some(Transaction { time_ms: order.time_ms, price_x10000, size: signed })
    }

    pub fn cancel(&mut self, id: u64) -> NaiveCancel {
        if let Some(pos) = self.resting.iter().position(|r| r.id == id) {
            let remaining = self.resting[pos].remaining;
            self.resting.remove(pos);
            return NaiveCancel::Removed { remaining };
        }
        if self.seen.contains(&id) {
            NaiveCancel::AlreadyGone
        } else {
            NaiveCancel::Unknown
        }
    }

    /// Snapshot in the engine's format: best-first levels with FIFO queues.
    pub fn snapshot(&self, side: Side) -> Vec<(Ticks, u64, Vec<(u64, u64)>)> {
        let mut prices: Vec<Ticks> = self
            .resting
            .iter()
            .filter(|r| r.side == side)
            .map(|r| r.price)
            .collect();
        prices.sort_unstable();
        prices.dedup();
        if side == Side::Bid {
            prices.reverse();
        }
        prices
            .into_iter()
            .map(|p| {
                let mut queue: Vec<&NaiveResting> = self
                    .resting
                    .iter()
                    .filter(|r| r.side == side && r.price == p)
                    .collect();
                queue.sort_by_key(|r| r.seq);
                let volume = queue.iter().map(|r| r.remaining).sum();
                (p, volume, queue.into_iter().map(|r| (r.id, r.remaining)).collect())
            })
            .collect()
    }
}

/// Random mixed order stream: adds with prices random-walking around an
/// anchor, a marketable share priced through the touch, and cancels aimed
/// at previously added ids (possibly already filled).
pub fn random_order_stream(seed: u64, n: usize, marketable_frac: f64) -> Vec<Order> {
    let mut rng = Rng::new(seed);
    let mut orders = Vec::with_capacity(n);
    let mut ids: Vec<u64> = Vec::new();
    let mut anchor: i64 = 1_000;
    let mut next_id: u64 = 1;
    let mut t: i64 = 0;
    for _ in 0..n {
        t += rng.below(40) as i64;
        anchor = (anchor + rng.below(5) as i64 - 2).max(200);
        if !ids.is_empty() && rng.uniform() < 0.25 {
            let id = ids[rng.below(ids.len() as u64) as usize];
            orders.push(Order::cancel(id, t));
            continue;
        }
        let is_buy = rng.uniform() < 0.5;
        let qty = 1 + rng.below(20) as i64;
        let aggressive = rng.uniform() < marketable_frac;
        let off = rng.below(6) as i64;
        let price = match (is_buy, aggressive) {
            (true, false) => anchor - 1 - off,
            (true, true) => anchor + 3 + off, // prices through the touch
            (false, false) => anchor + 1 + off,
            (false, true) => anchor - 3 - off,
        };
        let size = if is_buy { -qty } else { qty };
        orders.push(Order::add(next_id, price.max(1), size, t));
        ids.push(next_id);
        next_id += 1;
    }
    orders
}

/// Direct two-pass Pearson correlation.
pub fn pearson_naive(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    cov / (libm::sqrt(vx) * libm::sqrt(vy))
}

/// Quadratic-time average ranks: rank_i = #(smaller) + (#(equal) + 1) / 2.
pub fn ranks_naive(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|&v| {
            let smaller = values.iter().filter(|&&o| o < v).count();
            let equal = values.iter().filter(|&&o| o == v).count();
            smaller as f64 + (equal as f64 + 1.0) / 2.0
        })
        .collect()
}

pub fn spearman_naive(x: &[f64], y: &[f64]) -> f64 {
    pearson_naive(&ranks_naive(x), &ranks_naive(y))
}

pub fn rank_ir_naive(series: &[f64]) -> f64 {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    mean / libm::sqrt(var)
}

pub fn pa_naive(strategy: &[f64], market: &[f64]) -> f64 {
    let n = strategy.len() as f64;
    let total: f64 = strategy
        .iter()
        .zip(market)
        .map(|(s, m)| 1e4 * (s / m - 1.0))
        .sum();
    total / n
}

pub fn glr_naive(pa_series: &[f64]) -> f64 {
    let gains: Vec<f64> = pa_series.iter().copied().filter(|v| *v > 0.0).collect();
    let losses: Vec<f64> = pa_series.iter().copied().filter(|v| *v < 0.0).collect();
    let g = gains.iter().sum::<f64>() / gains.len() as f64;
    let l = losses.iter().sum::<f64>() / losses.len() as f64;
    g / libm::fabs(l)
}

/// Pair-counting AUC: ties count half.
pub fn auc_naive(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}
