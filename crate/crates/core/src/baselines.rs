//! Rule-based intraday selectors and features used as comparison baselines.
//!
//! Every baseline reduces to a segment-index selection of the same budget
//! as the main method (`max(1, floor(mu * N))`), so downstream pooling is
//! identical across methods. Value-producing baselines (order imbalance and
//! its time-sensitive and book-feature variants) select by score magnitude;
//! the repo fixes their exact formulas below since the source methods only
//! sketch them.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::fmath;
use crate::rng::{derive_seed, Rng};
use crate::segment::{BookTop, Segment};

/// Selection budget shared with the main method.
pub fn selection_budget(n_segments: usize, mu: f64) -> usize {
    ((mu * n_segments as f64 + 1e-9) as usize).max(1).min(n_segments)
}

/// Seeded uniform sample of segment indices without replacement (sorted).
pub fn random_sample(n_segments: usize, count: usize, seed: u64) -> Vec<usize> {
    debug_assert!(count <= n_segments);
    let mut rng = Rng::new(derive_seed(seed, "baseline-random", 0, 0));
    let mut picks = rng.sample_indices(n_segments, count);
    picks.sort_unstable();
    picks
}

/// Evenly spaced segment indices: 0, stride, 2*stride, ...
pub fn uniform_sample(n_segments: usize, count: usize) -> Vec<usize> {
    debug_assert!(count <= n_segments && count > 0);
    let stride = (n_segments / count).max(1);
    (0..count).map(|i| i * stride).collect()
}

/// Segments holding the day's most extreme trade prices: alternate the
/// highest and lowest remaining trades, deduplicating segments, until the
/// budget fills or trades run out.
pub fn price_based_selection(segments: &[Segment], budget: usize) -> Vec<usize> {
    extreme_selection(segments, budget, |tx| tx.price_x10000 as f64)
}

/// Same as [`price_based_selection`] on absolute trade volume.
pub fn volume_based_selection(segments: &[Segment], budget: usize) -> Vec<usize> {
    extreme_selection(segments, budget, |tx| tx.quantity() as f64)
}

fn extreme_selection(
    segments: &[Segment],
    budget: usize,
    key: impl Fn(&crate::lob::Transaction) -> f64,
) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize, usize)> = Vec::new(); // (key, seq, segment)
    let mut seq = 0usize;
    for seg in segments {
        for tx in &seg.transactions {
            keyed.push((key(tx), seq, seg.index));
            seq += 1;
        }
    }
    if keyed.is_empty() {
        return Vec::new();
    }
    let mut by_high = keyed.clone();
    by_high.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite keys").then(a.1.cmp(&b.1)));
    let mut by_low = keyed;
    by_low.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite keys").then(a.1.cmp(&b.1)));

    let mut chosen: BTreeSet<usize> = BTreeSet::new();
    let mut hi = by_high.iter();
    let mut lo = by_low.iter();
    loop {
        if chosen.len() >= budget {
            break;
        }
        let Some(h) = hi.next() else { break };
        chosen.insert(h.2);
        if chosen.len() >= budget {
            break;
        }
        let Some(l) = lo.next() else { break };
        chosen.insert(l.2);
    }
    chosen.into_iter().collect()
}

/// Five-level depth imbalance: ln of total bid depth over the five best
/// levels minus ln of total ask depth. Fewer than five levels contribute
/// what they have; an empty side makes the value undefined (NaN sentinel).
pub fn order_imbalance(book: &BookTop) -> f64 {
    let bid: u64 = book.bids.iter().take(5).map(|(_, v)| v).sum();
    let ask: u64 = book.asks.iter().take(5).map(|(_, v)| v).sum();
    if bid == 0 || ask == 0 {
        return f64::NAN;
    }
    fmath::ln(bid as f64) - fmath::ln(ask as f64)
}

/// Per-level log1p depth imbalance over the five best levels.
fn level_imbalance(book: &BookTop) -> [f64; 5] {
    let mut out = [0.0; 5];
    for (k, slot) in out.iter_mut().enumerate() {
        let b = book.bids.get(k).map_or(0, |(_, v)| *v);
        let a = book.asks.get(k).map_or(0, |(_, v)| *v);
        *slot = fmath::ln_1p(b as f64) - fmath::ln_1p(a as f64);
    }
    out
}

/// Time-differenced per-level imbalance: for each segment, the change in
/// each of the five level imbalances versus the previous segment boundary.
/// The first segment has no predecessor and reports zeros.
pub fn time_sensitive_order_imbalance(segments: &[Segment]) -> Vec<[f64; 5]> {
    let mut out = Vec::with_capacity(segments.len());
    let mut prev: Option<[f64; 5]> = None;
    for seg in segments {
        let cur = level_imbalance(&seg.boundary);
        let diff = match prev {
            Some(p) => {
                let mut d = [0.0; 5];
                for k in 0..5 {
                    d[k] = cur[k] - p[k];
                }
                d
            }
            None => [0.0; 5],
        };
        out.push(diff);
        prev = Some(cur);
    }
    out
}

pub const HFLOB_DIM: usize = 50;

/// Book-snapshot feature vector: a time-insensitive block (per level
/// k = 0..4: bid price, bid volume, ask price, ask volume, spread, mid; 30
/// values) and a time-sensitive block (first differences of per-level
/// prices and volumes versus the previous boundary; 20 values). Missing
/// levels are zero-filled so the width is fixed.
pub fn high_freq_lob_features(boundary: &BookTop, prev_boundary: Option<&BookTop>) -> [f64; HFLOB_DIM] {
    let mut out = [0.0; HFLOB_DIM];
    let level = |book: &BookTop, side_bid: bool, k: usize| -> (f64, f64) {
        let levels = if side_bid { &book.bids } else { &book.asks };
        levels.get(k).map_or((0.0, 0.0), |(p, v)| (*p as f64, *v as f64))
    };
    for k in 0..5 {
        let (bp, bv) = level(boundary, true, k);
        let (ap, av) = level(boundary, false, k);
        out[k * 6] = bp;
        out[k * 6 + 1] = bv;
        out[k * 6 + 2] = ap;
        out[k * 6 + 3] = av;
        out[k * 6 + 4] = if bp > 0.0 && ap > 0.0 { ap - bp } else { 0.0 };
        out[k * 6 + 5] = if bp > 0.0 && ap > 0.0 { 0.5 * (ap + bp) } else { 0.0 };
    }
    if let Some(prev) = prev_boundary {
        for k in 0..5 {
            let (bp, bv) = level(boundary, true, k);
            let (ap, av) = level(boundary, false, k);
            let (pbp, pbv) = level(prev, true, k);
            let (pap, pav) = level(prev, false, k);
            let base = 30 + k * 4;
            out[base] = bp - pbp;
            out[base + 1] = bv - pbv;
            out[base + 2] = ap - pap;
            out[base + 3] = av - pav;
        }
    }
    out
}

fn top_by_score(scores: Vec<(usize, f64)>, budget: usize) -> Vec<usize> {
    let mut valid: Vec<(usize, f64)> =
        scores.into_iter().filter(|(_, s)| s.is_finite()).collect();
    valid.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite scores").then(a.0.cmp(&b.0)));
    let mut out: Vec<usize> = valid.into_iter().take(budget).map(|(i, _)| i).collect();
    out.sort_unstable();
    out
}

/// Selection by absolute boundary-book imbalance (NaN boundaries excluded).
pub fn order_imbalance_selection(segments: &[Segment], budget: usize) -> Vec<usize> {
    top_by_score(
        segments
            .iter()
            .map(|s| (s.index, fmath::abs(order_imbalance(&s.boundary))))
            .collect(),
        budget,
    )
}

/// Selection by Euclidean norm of the time-differenced imbalance vector.
pub fn tsoi_selection(segments: &[Segment], budget: usize) -> Vec<usize> {
    let tsoi = time_sensitive_order_imbalance(segments);
    top_by_score(
        segments
            .iter()
            .zip(&tsoi)
            .map(|(s, d)| (s.index, fmath::sqrt(d.iter().map(|v| v * v).sum())))
            .collect(),
        budget,
    )
}

/// Selection by norm of the time-sensitive block of the book features.
pub fn hflob_selection(segments: &[Segment], budget: usize) -> Vec<usize> {
    let mut prev: Option<&BookTop> = None;
    let mut scores = Vec::with_capacity(segments.len());
    for seg in segments {
        let f = high_freq_lob_features(&seg.boundary, prev);
        let change: f64 = f[30..].iter().map(|v| v * v).sum();
        scores.push((seg.index, fmath::sqrt(change)));
        prev = Some(&seg.boundary);
    }
    top_by_score(scores, budget)
}
