//! Engine-versus-oracle equivalence: the incremental book must match a
//! naive scan-based rematcher order by order, including FIFO queue state.

use microflow_core::lob::{replay, CancelOutcome, Order, OrderBook, OrderKind, Side};
use microflow_core::testkit::{random_order_stream, NaiveBook, NaiveCancel};

fn assert_books_equal(engine: &OrderBook, naive: &NaiveBook, step: usize) {
    for side in [Side::Bid, Side::Ask] {
        assert_eq!(
            engine.snapshot(side),
            naive.snapshot(side),
            "books diverge on {side:?} after order {step}"
        );
    }
}

#[test]
fn incremental_engine_matches_naive_rematcher_at_every_prefix() {
    let orders = random_order_stream(2024, 3_000, 0.3);
    let mut engine = OrderBook::new();
    let mut naive = NaiveBook::new();
    for (step, order) in orders.iter().enumerate() {
        match order.kind {
            OrderKind::Add => {
                let tx_engine = engine.apply_order(order).expect("engine add");
                let tx_naive = naive.apply(order);
                assert_eq!(tx_engine, tx_naive, "transactions diverge at order {step}");
            }
            OrderKind::Cancel => {
                let out_engine = engine.cancel_order(order.id).expect("known id");
                let out_naive = naive.cancel(order.id);
                match (out_engine, out_naive) {
                    (CancelOutcome::Removed { remaining: a }, NaiveCancel::Removed { remaining: b }) => {
                        assert_eq!(a, b, "cancel remainders diverge at order {step}")
                    }
                    (CancelOutcome::AlreadyGone, NaiveCancel::AlreadyGone) => {}
                    (e, n) => panic!("cancel outcomes diverge at order {step}: {e:?} vs {n:?}"),
                }
            }
        }
        assert_books_equal(&engine, &naive, step);
    }
}

#[test]
fn volume_conservation_over_replay() {
    // Every unit is accounted for: posted = resting + cancelled + 2x traded
    // (each trade consumes one resting unit and one aggressor unit).
    let orders = random_order_stream(77, 2_000, 0.35);
    let mut book = OrderBook::new();
    let mut posted: u64 = 0;
    let mut cancelled: u64 = 0;
    let mut traded: u64 = 0;
    for order in &orders {
        match order.kind {
            OrderKind::Add => {
                posted += order.quantity();
                if let Some(tx) = book.apply_order(order).unwrap() {
                    traded += tx.quantity();
                }
            }
            OrderKind::Cancel => {
                if let CancelOutcome::Removed { remaining } = book.cancel_order(order.id).unwrap()
                {
                    cancelled += remaining;
                }
            }
        }
    }
    let resting = book.total_volume(Side::Bid) + book.total_volume(Side::Ask);
    assert_eq!(posted, resting + cancelled + 2 * traded);
    assert!(traded > 0, "stream should actually trade");
}

#[test]
fn replay_matches_incremental_application() {
    let orders = random_order_stream(5, 800, 0.3);
    let replayed = replay(&orders).unwrap();

    let mut book = OrderBook::new();
    let mut txs = Vec::new();
    for order in &orders {
        match order.kind {
            OrderKind::Add => {
                if let Some(tx) = book.apply_order(order).unwrap() {
                    txs.push(tx);
                }
            }
            OrderKind::Cancel => {
                book.cancel_order(order.id).unwrap();
            }
        }
    }
    assert_eq!(replayed.transactions, txs);
    for side in [Side::Bid, Side::Ask] {
        assert_eq!(replayed.book.snapshot(side), book.snapshot(side));
    }
}

#[test]
fn replay_is_deterministic() {
    let orders = random_order_stream(99, 1_500, 0.3);
    let a = replay(&orders).unwrap();
    let b = replay(&orders).unwrap();
    assert_eq!(a.transactions, b.transactions);
    for side in [Side::Bid, Side::Ask] {
        assert_eq!(a.book.snapshot(side), b.book.snapshot(side));
    }
}

#[test]
fn transaction_prices_stay_within_consumed_range() {
    let orders = random_order_stream(13, 2_000, 0.4);
    let mut book = OrderBook::new();
    for order in &orders {
        if order.kind != OrderKind::Add {
            book.cancel_order(order.id).unwrap();
            continue;
        }
        // Bound the fill price by the opposite side's best and the order's
        // own limit before applying.
        let (best, _own) = match order.side() {
            Side::Bid => (book.best_ask(), book.best_bid()),
            Side::Ask => (book.best_bid(), book.best_ask()),
        };
        if let Some(tx) = book.apply_order(order).unwrap() {
            let best = best.expect("a trade implies an opposing best");
            let (lo, hi) = match order.side() {
                Side::Bid => (best, order.price_ticks),
                Side::Ask => (order.price_ticks, best),
            };
            assert!(
                tx.price_x10000 >= lo * 10_000 && tx.price_x10000 <= hi * 10_000,
                "vwap {} outside [{lo}, {hi}]",
                tx.price_x10000
            );
        }
    }
}

mod merge_props {
    use super::*;
    use proptest::prelude::*;

    fn arb_levels() -> impl Strategy<Value = Vec<(i64, u64)>> {
        proptest::collection::vec((90i64..110, 1u64..50), 0..8)
    }

    fn book(bids: Vec<(i64, u64)>, asks: Vec<(i64, u64)>) -> OrderBook {
        OrderBook::from_levels(&bids, &asks)
    }

    proptest! {
        #[test]
        fn merge_commutes(b1 in arb_levels(), a1 in arb_levels(),
                          b2 in arb_levels(), a2 in arb_levels()) {
            let x = book(b1, a1);
            let y = book(b2, a2);
            let xy = x.merged(&y);
            let yx = y.merged(&x);
            prop_assert_eq!(xy.levels(Side::Bid), yx.levels(Side::Bid));
            prop_assert_eq!(xy.levels(Side::Ask), yx.levels(Side::Ask));
        }

        #[test]
        fn merge_associates(b1 in arb_levels(), b2 in arb_levels(), b3 in arb_levels()) {
            let x = book(b1, vec![]);
            let y = book(b2, vec![]);
            let z = book(b3, vec![]);
            let left = x.merged(&y).merged(&z);
            let right = x.merged(&y.merged(&z));
            prop_assert_eq!(left.levels(Side::Bid), right.levels(Side::Bid));
        }

        #[test]
        fn empty_book_is_identity(b in arb_levels(), a in arb_levels()) {
            let x = book(b, a);
            let e = OrderBook::new();
            let m = x.merged(&e);
            prop_assert_eq!(m.levels(Side::Bid), x.levels(Side::Bid));
            prop_assert_eq!(m.levels(Side::Ask), x.levels(Side::Ask));
        }
    }
}
