//! Evaluation metrics and downstream heads: Pearson/Spearman correlations,
//! their mean/deviation ratio, execution price advantage and gain-loss
//! ratio, daily return labels, a ridge prediction head, and the simple
//! factor-driven execution policy.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::fmath;

#[derive(Clone, Debug, PartialEq)]
pub enum EvalError {
    /// Input shorter than the metric's minimum length.
    TooShort { len: usize, need: usize },
    /// Correlation of a constant vector is undefined.
    ConstantInput,
    /// Zero standard deviation where a ratio is required.
    ZeroStd,
    /// Gain-loss ratio needs both gains and losses.
    UndefinedGlr { gains: usize, losses: usize },
    /// Mismatched vector lengths.
    Mismatch { left: usize, right: usize },
    /// Normal matrix stayed singular even after ridge escalation.
    Singular,
    /// A price or weight that must be positive was not.
    BadRecord(&'static str),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::TooShort { len, need } => {
                write!(f, "need at least {need} points, got {len}")
            }
            EvalError::ConstantInput => write!(f, "correlation undefined for constant input"),
            EvalError::ZeroStd => write!(f, "zero standard deviation"),
            EvalError::UndefinedGlr { gains, losses } => {
                write!(f, "gain-loss ratio undefined ({gains} gains, {losses} losses)")
            }
            EvalError::Mismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
            EvalError::Singular => write!(f, "singular normal matrix"),
            EvalError::BadRecord(what) => write!(f, "invalid record: {what}"),
        }
    }
}

impl core::error::Error for EvalError {}

fn check_pair(a: &[f64], b: &[f64], need: usize) -> Result<(), EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::Mismatch { left: a.len(), right: b.len() });
    }
    if a.len() < need {
        return Err(EvalError::TooShort { len: a.len(), need });
    }
    Ok(())
}

/// Pearson correlation; errors on constant input.
pub fn ic(pred: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    check_pair(pred, truth, 3)?;
    let n = pred.len() as f64;
    let mx = pred.iter().sum::<f64>() / n;
    let my = truth.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in pred.iter().zip(truth) {
        let dx = x - mx;
        let dy = y - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(EvalError::ConstantInput);
    }
    Ok(cov / (fmath::sqrt(vx) * fmath::sqrt(vy)))
}

/// Average ranks (1-based), ties averaged.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j share the same value; average their ranks.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation: Pearson over average ranks.
pub fn rank_ic(pred: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    check_pair(pred, truth, 3)?;
    ic(&average_ranks(pred), &average_ranks(truth))
}

/// Mean over population standard deviation of a correlation series.
pub fn rank_ir(series: &[f64]) -> Result<f64, EvalError> {
    if series.len() < 2 {
        return Err(EvalError::TooShort { len: series.len(), need: 2 });
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = fmath::sqrt(var);
    // Constant series accumulate only rounding noise; treat that as zero.
    if std <= 1e-12 * (1.0 + fmath::abs(mean)) {
        return Err(EvalError::ZeroStd);
    }
    Ok(mean / std)
}

/// One execution comparison: the strategy's average fill price for an order
/// versus the instrument's day VWAP.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExecutionRecord {
    pub strategy_price: f64,
    pub market_vwap: f64,
}

impl ExecutionRecord {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.strategy_price <= 0.0 || self.market_vwap <= 0.0 {
            return Err(EvalError::BadRecord("nonpositive price"));
        }
        Ok(())
    }

    /// Basis-point edge for a sell-side order (higher is better).
    pub fn pa(&self) -> f64 {
        1e4 * (self.strategy_price / self.market_vwap - 1.0)
    }
}

/// Mean price advantage in basis points over a record set.
pub fn pa(records: &[ExecutionRecord]) -> Result<f64, EvalError> {
    if records.is_empty() {
        return Err(EvalError::TooShort { len: 0, need: 1 });
    }
    let mut total = 0.0;
    for r in records {
        r.validate()?;
        total += r.pa();
    }
    Ok(total / records.len() as f64)
}

/// Gain-loss ratio of a per-order advantage series:
/// mean of positive entries over |mean of negative entries|.
pub fn glr(pa_series: &[f64]) -> Result<f64, EvalError> {
    let gains: Vec<f64> = pa_series.iter().copied().filter(|v| *v > 0.0).collect();
    let losses: Vec<f64> = pa_series.iter().copied().filter(|v| *v < 0.0).collect();
    if gains.is_empty() || losses.is_empty() {
        return Err(EvalError::UndefinedGlr { gains: gains.len(), losses: losses.len() });
    }
    let gain_mean = gains.iter().sum::<f64>() / gains.len() as f64;
    let loss_mean = losses.iter().sum::<f64>() / losses.len() as f64;
    Ok(gain_mean / fmath::abs(loss_mean))
}

/// Two-day-forward return labels from a close series:
/// `y[t] = close[t+2] / close[t+1] - 1`, undefined for the last two days.
pub fn daily_labels(closes: &[f64]) -> Vec<Option<f64>> {
    let n = closes.len();
    (0..n)
        .map(|t| {
            if t + 2 < n && closes[t + 1] > 0.0 {
                Some(closes[t + 2] / closes[t + 1] - 1.0)
            } else {
                None
            }
        })
        .collect()
}

/// Ridge-regularized linear predictor fit by normal equations.
#[derive(Clone, Debug)]
pub struct RidgePredictor {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Ridge value actually used (escalated if the matrix was singular).
    pub alpha_used: f64,
    pub escalated: bool,
}

impl RidgePredictor {
    pub fn predict(&self, row: &[f64]) -> f64 {
        debug_assert_eq!(row.len(), self.weights.len());
        self.intercept
            + row
                .iter()
                .zip(&self.weights)
                .map(|(x, w)| x * w)
                .sum::<f64>()
    }
}

/// Fits centered ridge regression; on a numerically singular normal matrix
/// the ridge is multiplied by 10 (up to a few times) before giving up.
pub fn fit_ridge(rows: &[Vec<f64>], targets: &[f64], alpha: f64) -> Result<RidgePredictor, EvalError> {
    if rows.len() != targets.len() {
        return Err(EvalError::Mismatch { left: rows.len(), right: targets.len() });
    }
    if rows.is_empty() {
        return Err(EvalError::TooShort { len: 0, need: 1 });
    }
    let n = rows.len();
    let d = rows[0].len();
    let nf = n as f64;

    let mut x_mean = vec![0.0; d];
    for r in rows {
        for (m, v) in x_mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in x_mean.iter_mut() {
        *m /= nf;
    }
    let y_mean = targets.iter().sum::<f64>() / nf;

    // Centered normal matrix and right-hand side.
    let mut xtx = vec![0.0; d * d];
    let mut xty = vec![0.0; d];
    for (r, &y) in rows.iter().zip(targets) {
        let yc = y - y_mean;
        for i in 0..d {
            let xi = r[i] - x_mean[i];
            xty[i] += xi * yc;
            for j in i..d {
                xtx[i * d + j] += xi * (r[j] - x_mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            xtx[i * d + j] = xtx[j * d + i];
        }
    }

    let mut alpha_used = alpha.max(0.0);
    let mut escalated = false;
    for _attempt in 0..6 {
        let mut a = xtx.clone();
        for i in 0..d {
            a[i * d + i] += alpha_used;
        }
        if let Some(weights) = cholesky_solve(&a, &xty, d) {
            let intercept =
                y_mean - weights.iter().zip(&x_mean).map(|(w, m)| w * m).sum::<f64>();
            return Ok(RidgePredictor { weights, intercept, alpha_used, escalated });
        }
        alpha_used = if alpha_used == 0.0 { 1e-8 } else { alpha_used * 10.0 };
        escalated = true;
    }
    Err(EvalError::Singular)
}

/// Cholesky solve for a symmetric positive-definite system; `None` when a
/// pivot is not strictly positive.
fn cholesky_solve(a: &[f64], b: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * d + i] = fmath::sqrt(s);
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    // Forward then back substitution.
    let mut y = vec![0.0; d];
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * d + k] * y[k];
        }
        y[i] = s / l[i * d + i];
    }
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        let mut s = y[i];
        for k in i + 1..d {
            s -= l[k * d + i] * x[k];
        }
        x[i] = s / l[i * d + i];
    }
    Some(x)
}

/// Median (average of the middle two for even lengths).
pub fn median(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Factor-driven execution of one sell order over a day of minutes.
///
/// Minutes whose factor aggregate strictly exceeds the day median share the
/// order uniformly; if none qualify (e.g. a flat factor) the policy falls
/// back to a uniform schedule over all minutes. Minutes without a price are
/// skipped and the remaining weights renormalized.
pub fn execute_threshold_policy(
    minute_scores: &[f64],
    minute_prices: &[Option<f64>],
) -> Result<f64, EvalError> {
    if minute_scores.len() != minute_prices.len() {
        return Err(EvalError::Mismatch {
            left: minute_scores.len(),
            right: minute_prices.len(),
        });
    }
    if minute_scores.is_empty() {
        return Err(EvalError::TooShort { len: 0, need: 1 });
    }
    let med = median(minute_scores);
    let mut chosen: Vec<usize> = (0..minute_scores.len())
        .filter(|&m| minute_scores[m] > med && minute_prices[m].is_some())
        .collect();
    if chosen.is_empty() {
        chosen = (0..minute_scores.len()).filter(|&m| minute_prices[m].is_some()).collect();
    }
    if chosen.is_empty() {
        return Err(EvalError::BadRecord("no priced minutes"));
    }
    let w = 1.0 / chosen.len() as f64;
    let price = chosen
        .iter()
        .map(|&m| w * minute_prices[m].expect("chosen minutes are priced"))
        .sum();
    Ok(price)
}

/// Uniform (time-weighted) execution over every priced minute.
pub fn execute_uniform(minute_prices: &[Option<f64>]) -> Result<f64, EvalError> {
    let priced: Vec<f64> = minute_prices.iter().flatten().copied().collect();
    if priced.is_empty() {
        return Err(EvalError::BadRecord("no priced minutes"));
    }
    Ok(priced.iter().sum::<f64>() / priced.len() as f64)
}

/// Rank-based ROC-AUC of scores against boolean labels (ties averaged).
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::Mismatch { left: scores.len(), right: labels.len() });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::ConstantInput);
    }
    let ranks = average_ranks(scores);
    let pos_rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(r, _)| *r)
        .sum();
    let auc = (pos_rank_sum - pos as f64 * (pos as f64 + 1.0) / 2.0) / (pos as f64 * neg as f64);
    Ok(auc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn perfect_and_inverse_correlation() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((ic(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        assert!((rank_ic(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((ic(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!((rank_ic(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_but_nonlinear_example() {
        let pred = [1.0, 2.0, 3.0];
        let truth = [2.0, 4.0, 9.0];
        assert!((rank_ic(&pred, &truth).unwrap() - 1.0).abs() < 1e-12);
        // Hand Pearson: cov = 7/3, vx = 2/3, vy = 26/3 (population sums).
        let want = 7.0 / (2.0f64 * 26.0).sqrt();
        assert!((ic(&pred, &truth).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn correlation_guards() {
        assert!(matches!(ic(&[1.0, 2.0], &[1.0, 2.0]), Err(EvalError::TooShort { .. })));
        assert!(matches!(
            ic(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(EvalError::ConstantInput)
        ));
    }

    #[test]
    fn ranks_average_ties() {
        let r = average_ranks(&[10.0, 20.0, 10.0, 5.0]);
        assert_eq!(r, vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn rank_ir_examples() {
        assert!(matches!(rank_ir(&[0.1, 0.1, 0.1]), Err(EvalError::ZeroStd)));
        assert!((rank_ir(&[0.0, 0.2]).unwrap() - 1.0).abs() < 1e-12);
        let series = [0.05, -0.02, 0.11, 0.03];
        let neg: Vec<f64> = series.iter().map(|v| -v).collect();
        assert!((rank_ir(&series).unwrap() + rank_ir(&neg).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn pa_examples() {
        let zero = ExecutionRecord { strategy_price: 50.0, market_vwap: 50.0 };
        assert_eq!(pa(&[zero]).unwrap(), 0.0);
        // 1% above VWAP = 100 bps.
        let one_pct = ExecutionRecord { strategy_price: 101.0, market_vwap: 100.0 };
        assert!((pa(&[one_pct]).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn glr_examples() {
        assert!((glr(&[2.0, 4.0, -3.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(glr(&[1.0, 2.0]), Err(EvalError::UndefinedGlr { .. })));
        assert!(matches!(glr(&[-1.0]), Err(EvalError::UndefinedGlr { .. })));
    }

    #[test]
    fn labels_from_closes() {
        let closes = [100.0, 110.0, 99.0, 132.0];
        let labels = daily_labels(&closes);
        assert!((labels[0].unwrap() - (99.0 / 110.0 - 1.0)).abs() < 1e-12);
        assert!((labels[1].unwrap() - (132.0 / 99.0 - 1.0)).abs() < 1e-12);
        assert_eq!(labels[2], None);
        assert_eq!(labels[3], None);
    }

    #[test]
    fn ridge_recovers_exact_linear_target() {
        let mut rng = Rng::new(5);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..3).map(|_| rng.uniform_in(-2.0, 2.0)).collect())
            .collect();
        let targets: Vec<f64> =
            rows.iter().map(|r| 0.5 + 2.0 * r[0] - 1.5 * r[1] + 0.25 * r[2]).collect();
        let fit = fit_ridge(&rows, &targets, 1e-10).unwrap();
        let preds: Vec<f64> = rows.iter().map(|r| fit.predict(r)).collect();
        let corr = ic(&preds, &targets).unwrap();
        assert!((corr - 1.0).abs() < 1e-6, "IC {corr}");
    }

    #[test]
    fn ridge_escalates_on_singular_features() {
        // Duplicate column makes X^T X singular at alpha = 0.
        let rows: Vec<Vec<f64>> =
            (0..10).map(|i| vec![i as f64, i as f64]).collect();
        let targets: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let fit = fit_ridge(&rows, &targets, 0.0).unwrap();
        assert!(fit.escalated);
        assert!(fit.alpha_used > 0.0);
    }

    #[test]
    fn execution_policy_prefers_marked_minutes() {
        // Highest prices in minutes 2 and 3; factor marks them.
        let prices: Vec<Option<f64>> =
            vec![Some(100.0), Some(100.5), Some(103.0), Some(104.0), Some(99.0)];
        let scores = vec![0.0, 0.0, 5.0, 5.0, 0.0];
        let smart = execute_threshold_policy(&scores, &prices).unwrap();
        let twap = execute_uniform(&prices).unwrap();
        assert!(smart > twap, "{smart} vs {twap}");
        assert!((smart - 103.5).abs() < 1e-12);

        // A flat factor degenerates to the uniform schedule.
        let flat = vec![1.0; 5];
        assert_eq!(execute_threshold_policy(&flat, &prices).unwrap(), twap);

        // Constant prices give zero advantage for any policy.
        let const_prices: Vec<Option<f64>> = vec![Some(42.0); 5];
        let p = execute_threshold_policy(&scores, &const_prices).unwrap();
        let rec = ExecutionRecord { strategy_price: p, market_vwap: 42.0 };
        assert_eq!(rec.pa(), 0.0);
    }

    #[test]
    fn execution_skips_unpriced_minutes() {
        let prices = vec![Some(100.0), None, Some(104.0), Some(90.0)];
        let scores = vec![0.0, 9.0, 5.0, 0.0];
        // Minute 1 is marked but unpriced; weight renormalizes onto minute 2.
        let p = execute_threshold_policy(&scores, &prices).unwrap();
        assert!((p - 104.0).abs() < 1e-12);
    }

    #[test]
    fn auc_basics() {
        let labels = [true, true, false, false];
        assert_eq!(roc_auc(&[4.0, 3.0, 2.0, 1.0], &labels).unwrap(), 1.0);
        assert_eq!(roc_auc(&[1.0, 2.0, 3.0, 4.0], &labels).unwrap(), 0.0);
        let auc = roc_auc(&[1.0, 1.0, 1.0, 1.0], &labels).unwrap();
        assert!((auc - 0.5).abs() < 1e-12);
    }
}
