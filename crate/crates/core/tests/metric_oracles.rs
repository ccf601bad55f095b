//! Metric functions against independent brute-force implementations, plus
//! the invariance properties correlations must satisfy.

use microflow_core::eval::{glr, ic, pa, rank_ic, rank_ir, roc_auc, ExecutionRecord};
use microflow_core::rng::Rng;
use microflow_core::testkit::{
    auc_naive, glr_naive, pa_naive, pearson_naive, rank_ir_naive, spearman_naive,
};

fn random_vec(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform_in(lo, hi)).collect()
}

#[test]
fn metrics_match_brute_force_on_random_inputs() {
    let mut rng = Rng::new(404);
    for round in 0..20 {
        let x = random_vec(&mut rng, 50, -3.0, 3.0);
        let y = random_vec(&mut rng, 50, -3.0, 3.0);
        assert!(
            (ic(&x, &y).unwrap() - pearson_naive(&x, &y)).abs() < 1e-12,
            "pearson diverges in round {round}"
        );
        assert!(
            (rank_ic(&x, &y).unwrap() - spearman_naive(&x, &y)).abs() < 1e-12,
            "spearman diverges in round {round}"
        );
        assert!((rank_ir(&x).unwrap() - rank_ir_naive(&x)).abs() < 1e-12);

        let strategy = random_vec(&mut rng, 50, 95.0, 105.0);
        let market = random_vec(&mut rng, 50, 95.0, 105.0);
        let records: Vec<ExecutionRecord> = strategy
            .iter()
            .zip(&market)
            .map(|(s, m)| ExecutionRecord { strategy_price: *s, market_vwap: *m })
            .collect();
        assert!((pa(&records).unwrap() - pa_naive(&strategy, &market)).abs() < 1e-12);

        let pa_series: Vec<f64> = records.iter().map(|r| r.pa()).collect();
        if pa_series.iter().any(|v| *v > 0.0) && pa_series.iter().any(|v| *v < 0.0) {
            assert!((glr(&pa_series).unwrap() - glr_naive(&pa_series)).abs() < 1e-12);
        }

        let labels: Vec<bool> = (0..50).map(|_| rng.uniform() < 0.3).collect();
        if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
            assert!((roc_auc(&x, &labels).unwrap() - auc_naive(&x, &labels)).abs() < 1e-12);
        }
    }
}

#[test]
fn metrics_match_brute_force_with_ties() {
    // Quantized values force rank ties through the averaging path.
    let mut rng = Rng::new(808);
    for _ in 0..10 {
        let x: Vec<f64> = (0..50).map(|_| rng.below(8) as f64).collect();
        let y: Vec<f64> = (0..50).map(|_| rng.below(8) as f64).collect();
        if rank_ic(&x, &y).is_err() {
            continue; // constant draw
        }
        assert!((rank_ic(&x, &y).unwrap() - spearman_naive(&x, &y)).abs() < 1e-12);
        let labels: Vec<bool> = (0..50).map(|i| i % 5 == 0).collect();
        assert!((roc_auc(&x, &labels).unwrap() - auc_naive(&x, &labels)).abs() < 1e-12);
    }
}

#[test]
fn worked_examples_hold_exactly() {
    // Gains {2, 4}, losses {-3}: 3 / 3 = 1.
    assert_eq!(glr(&[2.0, 4.0, -3.0]).unwrap(), 1.0);
    // A single order executed 1% above VWAP is 100 bps.
    let rec = ExecutionRecord { strategy_price: 101.0, market_vwap: 100.0 };
    assert!((pa(&[rec]).unwrap() - 100.0).abs() < 1e-9);
}

mod invariance {
    use super::*;
    use proptest::prelude::*;

    fn arb_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (5usize..40).prop_flat_map(|n| {
            (
                proptest::collection::vec(-100.0f64..100.0, n),
                proptest::collection::vec(-100.0f64..100.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn rank_ic_invariant_under_monotone_transforms((x, y) in arb_pair(),
                                                       a in 0.1f64..4.0, b in -5.0f64..5.0) {
            let base = match rank_ic(&x, &y) {
                Ok(v) => v,
                Err(_) => return Ok(()),
            };
            // Strictly increasing map: exp(a * x) + b preserves order.
            let tx: Vec<f64> = x.iter().map(|v| (a * v / 100.0).exp() + b).collect();
            let got = rank_ic(&tx, &y).unwrap();
            prop_assert!((got - base).abs() < 1e-9, "{got} vs {base}");
        }

        #[test]
        fn ic_invariant_under_positive_affine((x, y) in arb_pair(),
                                              a in 0.1f64..7.0, b in -9.0f64..9.0) {
            let base = match ic(&x, &y) {
                Ok(v) => v,
                Err(_) => return Ok(()),
            };
            let tx: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let got = ic(&tx, &y).unwrap();
            prop_assert!((got - base).abs() < 1e-9, "{got} vs {base}");
        }
    }
}
