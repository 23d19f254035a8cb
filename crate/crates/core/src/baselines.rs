//! Statistical reference forecasters: last value, exponential moving
//! average, and ARIMA with stepwise AIC order search.

use crate::metrics::{smape, MetricInput};
use crate::series::ForecastTask;
use log::warn;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

pub fn naive_forecast(context: &[f64], horizon: usize) -> Vec<f64> {
    let last = *context.last().expect("naive forecast needs a nonempty context");
    vec![last; horizon]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmaConfig {
    pub alpha: f64,
}

impl EmaConfig {
    pub fn new(alpha: f64) -> Option<Self> {
        (alpha > 0.0 && alpha <= 1.0).then_some(Self { alpha })
    }
}

/// Final smoothed level held flat over the horizon.
pub fn ema_forecast(context: &[f64], horizon: usize, cfg: &EmaConfig) -> Vec<f64> {
    let (first, rest) = context
        .split_first()
        .expect("ema forecast needs a nonempty context");
    let a = cfg.alpha;
    let level = rest.iter().fold(*first, |e, &x| a * x + (1.0 - a) * e);
    vec![level; horizon]
}

pub const EMA_ALPHA_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Smoothing constant with the lowest mean SMAPE on `tasks`; ties go to the
/// earlier grid entry.
pub fn select_ema_alpha(tasks: &[ForecastTask], grid: &[f64]) -> EmaConfig {
    let mut best = (f64::INFINITY, grid.first().copied().unwrap_or(0.5));
    for &alpha in grid {
        let cfg = EmaConfig { alpha };
        let total: f64 = tasks
            .iter()
            .map(|t| {
                let f = ema_forecast(t.context(), t.horizon(), &cfg);
                smape(&MetricInput::new(t.context(), t.target(), &f)).unwrap_or(0.0)
            })
            .sum();
        let score = total / tasks.len().max(1) as f64;
        if score < best.0 {
            best = (score, alpha);
        }
    }
    EmaConfig { alpha: best.1 }
}

pub const MAX_P: usize = 5;
pub const MAX_D: usize = 2;
pub const MAX_Q: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaOrder {
    pub fn new(p: usize, d: usize, q: usize) -> Option<Self> {
        (p <= MAX_P && d <= MAX_D && q <= MAX_Q).then_some(Self { p, d, q })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArimaError {
    #[error("order {order:?} needs at least {needed} points, got {got}")]
    TooShort {
        order: ArimaOrder,
        needed: usize,
        got: usize,
    },
    #[error("fitted AR polynomial is not stationary")]
    NonStationary,
    #[error("fitted MA polynomial is not invertible")]
    NonInvertible,
    #[error("conditional sum of squares could not be minimized")]
    SingularFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaFit {
    pub order: ArimaOrder,
    /// Mean of the differenced series: the level when `d = 0`, a drift when
    /// `d = 1`. Never fitted for `d = 2`.
    pub mean: Option<f64>,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub sigma2: f64,
    pub aic: f64,
}

pub fn difference(values: &[f64], d: usize) -> Vec<f64> {
    let mut out = values.to_vec();
    for _ in 0..d {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    out
}

/// Conditional residuals for `(w_t - mu) = sum phi_i (w_{t-i} - mu) + e_t + sum theta_j e_{t-j}`,
/// starting at `t = p` with pre-sample errors set to zero. Index `t` of the
/// returned vector is the residual at time `t` (zero for `t < p`).
fn css_residuals(w: &[f64], mu: f64, ar: &[f64], ma: &[f64]) -> Vec<f64> {
    let p = ar.len();
    let mut e = vec![0.0; w.len()];
    for t in p..w.len() {
        let mut pred = mu;
        for (i, phi) in ar.iter().enumerate() {
            pred += phi * (w[t - 1 - i] - mu);
        }
        for (j, theta) in ma.iter().enumerate() {
            if t > j {
                pred += theta * e[t - 1 - j];
            }
        }
        e[t] = w[t] - pred;
    }
    e
}

fn css(w: &[f64], mu: f64, ar: &[f64], ma: &[f64]) -> f64 {
    let e = css_residuals(w, mu, ar, ma);
    let sse: f64 = e[ar.len()..].iter().map(|v| v * v).sum();
    if sse.is_finite() {
        sse
    } else {
        f64::INFINITY
    }
}

/// Stationarity of `1 - a_1 z - ... - a_k z^k` via the step-down recursion:
/// every reflection coefficient must lie strictly inside the unit interval.
pub fn is_stationary(coeffs: &[f64]) -> bool {
    let mut a = coeffs.to_vec();
    while let Some(&k) = a.last() {
        if !k.is_finite() || k.abs() >= 1.0 {
            return false;
        }
        let m = a.len();
        let denom = 1.0 - k * k;
        a = (0..m - 1).map(|j| (a[j] + k * a[m - 2 - j]) / denom).collect();
    }
    true
}

/// Invertibility of `1 + b_1 z + ... + b_k z^k`.
pub fn is_invertible(coeffs: &[f64]) -> bool {
    let negated: Vec<f64> = coeffs.iter().map(|c| -c).collect();
    is_stationary(&negated)
}

/// Quasi-Newton (BFGS) minimizer with central-difference gradients and
/// backtracking line search. Returns the best point found.
fn bfgs_minimize<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], max_iter: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    let grad = |x: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; n];
        let mut xp = x.to_vec();
        for i in 0..n {
            let h = 1e-6 * x[i].abs().max(1.0);
            let orig = xp[i];
            xp[i] = orig + h;
            let fp = f(&xp);
            xp[i] = orig - h;
            let fm = f(&xp);
            xp[i] = orig;
            g[i] = (fp - fm) / (2.0 * h);
        }
        g
    };

    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if n == 0 || !fx.is_finite() {
        return (x, fx);
    }
    let mut g = grad(&x);
    let mut hinv = identity(n);

    for _ in 0..max_iter {
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !gnorm.is_finite() || gnorm <= 1e-10 * fx.abs().max(1e-12) {
            break;
        }
        let mut dir: Vec<f64> = (0..n)
            .map(|i| -(0..n).map(|j| hinv[i][j] * g[j]).sum::<f64>())
            .collect();
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, g)| d * g).sum();
        if slope >= 0.0 {
            hinv = identity(n);
            dir = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = x.iter().zip(&dir).map(|(x, d)| x + step * d).collect();
            let fc = f(&cand);
            if fc.is_finite() && fc <= fx + 1e-4 * step * slope {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fxn)) = accepted else { break };

        let gn = grad(&xn);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let improvement = fx - fxn;
        x = xn;
        g = gn;
        fx = fxn;
        if sy > 1e-12 {
            let hy: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| hinv[i][j] * y[j]).sum())
                .collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    hinv[i][j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
        }
        if improvement.abs() <= 1e-14 * fx.abs().max(1e-300) {
            break;
        }
    }
    (x, fx)
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Fits ARIMA(p, d, q) by conditional sum of squares on the `d`-times
/// differenced series, with a mean term when `d = 0` and none otherwise.
pub fn arima_fit(context: &[f64], order: ArimaOrder) -> Result<ArimaFit, ArimaError> {
    arima_fit_with(context, order, order.d == 0)
}

/// As [`arima_fit`], choosing explicitly whether the differenced series gets
/// a constant. A constant is ignored for `d = 2`.
pub fn arima_fit_with(
    context: &[f64],
    order: ArimaOrder,
    constant: bool,
) -> Result<ArimaFit, ArimaError> {
    let ArimaOrder { p, d, q } = order;
    let needed = p + q + d + 10;
    if context.len() < needed {
        return Err(ArimaError::TooShort {
            order,
            needed,
            got: context.len(),
        });
    }
    let w = difference(context, d);
    let with_mean = constant && d < 2;
    let sample_mean = w.iter().sum::<f64>() / w.len() as f64;

    let unpack = |x: &[f64]| -> (f64, Vec<f64>, Vec<f64>) {
        let (mu, rest) = if with_mean {
            (x[0], &x[1..])
        } else {
            (0.0, x)
        };
        (mu, rest[..p].to_vec(), rest[p..].to_vec())
    };

    let mut x0 = Vec::with_capacity(p + q + 1);
    if with_mean {
        x0.push(sample_mean);
    }
    x0.extend(std::iter::repeat_n(0.0, p + q));

    let (x, sse) = if p + q == 0 {
        let x = x0.clone();
        let (mu, ar, ma) = unpack(&x);
        let sse = css(&w, mu, &ar, &ma);
        (x, sse)
    } else {
        bfgs_minimize(
            |x| {
                let (mu, ar, ma) = unpack(x);
                css(&w, mu, &ar, &ma)
            },
            &x0,
            200,
        )
    };
    if !sse.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(ArimaError::SingularFit);
    }
    let (mu, ar, ma) = unpack(&x);
    if !is_stationary(&ar) {
        return Err(ArimaError::NonStationary);
    }
    if !is_invertible(&ma) {
        return Err(ArimaError::NonInvertible);
    }

    let n = (w.len() - p) as f64;
    // A perfectly fitted window would give ln(0); floor the variance.
    let sigma2 = (sse / n).max(1e-300);
    let drift = usize::from(with_mean && d > 0);
    let aic = n * sigma2.ln() + 2.0 * (p + q + 1 + drift) as f64;
    Ok(ArimaFit {
        order,
        mean: with_mean.then_some(mu),
        ar,
        ma,
        sigma2,
        aic,
    })
}

impl ArimaFit {
    /// Mean forecasts `horizon` steps past the end of `context`, which must
    /// be the series the model was fitted on.
    pub fn forecast(&self, context: &[f64], horizon: usize) -> Vec<f64> {
        let d = self.order.d;
        let mut levels = vec![context.to_vec()];
        for k in 0..d {
            levels.push(difference(&levels[k], 1));
        }
        let w = &levels[d];
        let mu = self.mean.unwrap_or(0.0);
        let e = css_residuals(w, mu, &self.ar, &self.ma);

        let mut hist = w.clone();
        let mut errs = e;
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let t = hist.len();
            let mut pred = mu;
            for (i, phi) in self.ar.iter().enumerate() {
                pred += phi * (hist[t - 1 - i] - mu);
            }
            for (j, theta) in self.ma.iter().enumerate() {
                pred += theta * errs[t - 1 - j];
            }
            hist.push(pred);
            errs.push(0.0);
            out.push(pred);
        }

        for k in (0..d).rev() {
            let mut last = *levels[k].last().expect("nonempty level");
            for v in out.iter_mut() {
                last += *v;
                *v = last;
            }
        }
        out
    }
}

/// KPSS level-stationarity statistic with a Bartlett-weighted long-run
/// variance using `trunc(3 sqrt(n) / 13)` lags.
pub fn kpss_statistic(values: &[f64]) -> f64 {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let e: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let lags = (3.0 * (n as f64).sqrt() / 13.0) as usize;
    let mut lrv = e.iter().map(|v| v * v).sum::<f64>() / n as f64;
    for l in 1..=lags.min(n.saturating_sub(1)) {
        let w = 1.0 - l as f64 / (lags + 1) as f64;
        let cov: f64 = (l..n).map(|t| e[t] * e[t - l]).sum::<f64>() / n as f64;
        lrv += 2.0 * w * cov;
    }
    if lrv <= 0.0 {
        return 0.0;
    }
    let mut partial = 0.0;
    let eta: f64 = e
        .iter()
        .map(|v| {
            partial += v;
            partial * partial
        })
        .sum();
    eta / ((n * n) as f64 * lrv)
}

/// 5% critical value of the KPSS level-stationarity test.
pub const KPSS_CRITICAL_5PCT: f64 = 0.463;

/// Number of differences (at most 2) needed before the KPSS test stops
/// rejecting level stationarity.
pub fn choose_d(context: &[f64]) -> usize {
    let mut d = 0;
    let mut series = context.to_vec();
    while d < MAX_D && series.len() > 3 && kpss_statistic(&series) > KPSS_CRITICAL_5PCT {
        series = difference(&series, 1);
        d += 1;
    }
    d
}

/// Outcome of a stepwise order search.
#[derive(Debug, Clone)]
pub struct StepwiseResult {
    pub best: Option<ArimaFit>,
    /// Every (order, constant) candidate that was fitted, successful or not.
    pub visited: BTreeSet<(ArimaOrder, bool)>,
}

/// Stepwise AIC search: start from (2,d,2), (0,d,0), (1,d,0), (0,d,1), then
/// repeatedly move to the best neighbour obtained by changing p and/or q by
/// one, or toggling the constant when `d < 2`, until no neighbour lowers the
/// AIC.
pub fn stepwise_search(context: &[f64]) -> StepwiseResult {
    let d = choose_d(context);
    let mut visited = BTreeSet::new();
    let mut best: Option<ArimaFit> = None;

    let mut try_order = |order: ArimaOrder, constant: bool, best: &mut Option<ArimaFit>| -> bool {
        let constant = constant && order.d < 2;
        if !visited.insert((order, constant)) {
            return false;
        }
        match arima_fit_with(context, order, constant) {
            Ok(fit) if best.as_ref().is_none_or(|b| fit.aic < b.aic) => {
                *best = Some(fit);
                true
            }
            _ => false,
        }
    };

    for (p, q) in [(2, 2), (0, 0), (1, 0), (0, 1)] {
        try_order(ArimaOrder { p, d, q }, true, &mut best);
    }
    if d > 0 {
        try_order(ArimaOrder { p: 0, d, q: 0 }, false, &mut best);
    }
    while let Some((current, constant)) = best.as_ref().map(|b| (b.order, b.mean.is_some())) {
        let mut improved = try_order(current, !constant, &mut best);
        for (dp, dq) in [(-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (1, 1), (-1, 1), (1, -1)] {
            let p = current.p as i64 + dp;
            let q = current.q as i64 + dq;
            if p < 0 || q < 0 || p > MAX_P as i64 || q > MAX_Q as i64 {
                continue;
            }
            let order = ArimaOrder {
                p: p as usize,
                d,
                q: q as usize,
            };
            improved |= try_order(order, constant, &mut best);
        }
        if !improved {
            break;
        }
    }
    StepwiseResult { best, visited }
}

/// Forecast from the stepwise-selected model, or the last value if no
/// candidate could be fitted.
pub fn arima_auto(context: &[f64], horizon: usize) -> Vec<f64> {
    match stepwise_search(context).best {
        Some(fit) => fit.forecast(context, horizon),
        None => {
            warn!("no ARIMA candidate could be fitted; falling back to naive");
            naive_forecast(context, horizon)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{sample_harmonic_params, synth_series};
    use crate::rng::derive_rng;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn naive_examples() {
        assert_eq!(naive_forecast(&[1.0, 2.0, 3.0], 2), vec![3.0, 3.0]);
        assert!(naive_forecast(&[1.0], 0).is_empty());
        assert_eq!(naive_forecast(&[4.5; 6], 3), vec![4.5; 3]);
    }

    #[test]
    fn ema_examples() {
        let half = EmaConfig::new(0.5).unwrap();
        assert_eq!(ema_forecast(&[2.0, 4.0], 3, &half), vec![3.0; 3]);
        let ctx = [1.0, 5.0, -2.0, 8.0];
        assert_eq!(
            ema_forecast(&ctx, 4, &EmaConfig::new(1.0).unwrap()),
            naive_forecast(&ctx, 4)
        );
        assert_eq!(ema_forecast(&[6.0; 10], 2, &half), vec![6.0; 2]);
        assert!(EmaConfig::new(0.0).is_none());
        assert!(EmaConfig::new(1.5).is_none());
    }

    #[test]
    fn ema_alpha_grid_prefers_responsive_on_trends() {
        let tasks: Vec<_> = (0..5)
            .map(|k| {
                let ctx: Vec<f64> = (0..30).map(|i| 10.0 + (i + k) as f64).collect();
                let tgt: Vec<f64> = (30..35).map(|i| 10.0 + (i + k) as f64).collect();
                ForecastTask::new(format!("t{k}"), ctx, tgt)
            })
            .collect();
        assert_eq!(select_ema_alpha(&tasks, &EMA_ALPHA_GRID).alpha, 0.9);
    }

    #[test]
    fn reflection_checks() {
        assert!(is_stationary(&[0.7]));
        assert!(!is_stationary(&[1.2]));
        assert!(is_stationary(&[0.5, 0.3]));
        assert!(!is_stationary(&[0.5, 0.6]));
        assert!(is_stationary(&[]));
        assert!(is_invertible(&[0.4]));
        assert!(!is_invertible(&[-1.5]));
    }

    fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = derive_rng(seed, 0);
        let mut x = 0.0;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n + 100 {
            let e: f64 = StandardNormal.sample(&mut rng);
            x = phi * x + e;
            out.push(x);
        }
        out.split_off(100)
    }

    #[test]
    fn recovers_ar1_coefficient() {
        let data = ar1(0.7, 2000, 11);
        let fit = arima_fit(&data, ArimaOrder::new(1, 0, 0).unwrap()).unwrap();
        assert!((fit.ar[0] - 0.7).abs() < 0.1, "phi {}", fit.ar[0]);
        assert!((fit.sigma2 - 1.0).abs() < 0.15, "sigma2 {}", fit.sigma2);
    }

    #[test]
    fn intercept_only_forecasts_mean() {
        let mut rng = derive_rng(5, 1);
        let data: Vec<f64> = (0..60).map(|_| rng.random::<f64>()).collect();
        let fit = arima_fit(&data, ArimaOrder::new(0, 0, 0).unwrap()).unwrap();
        let mean = data.iter().sum::<f64>() / data.len() as f64;
        assert_eq!(fit.forecast(&data, 3), vec![mean; 3]);
    }

    #[test]
    fn random_walk_is_naive() {
        let data = ar1(0.3, 80, 3);
        let fit = arima_fit(&data, ArimaOrder::new(0, 1, 0).unwrap()).unwrap();
        assert_eq!(fit.forecast(&data, 20), naive_forecast(&data, 20));
    }

    #[test]
    fn short_context_rejected() {
        let err = arima_fit(&[1.0; 12], ArimaOrder::new(2, 1, 2).unwrap()).unwrap_err();
        assert!(matches!(err, ArimaError::TooShort { needed: 15, .. }));
    }

    #[test]
    fn differencing_inverts() {
        let ramp: Vec<f64> = (0..40).map(|i| 3.0 + 0.5 * i as f64).collect();
        let fit = arima_fit(&ramp, ArimaOrder::new(0, 2, 0).unwrap()).unwrap();
        let f = fit.forecast(&ramp, 3);
        for (k, v) in f.iter().enumerate() {
            assert!((v - (3.0 + 0.5 * (40 + k) as f64)).abs() < 1e-9);
        }
    }

    #[test]
    fn auto_is_deterministic() {
        let data = ar1(0.6, 80, 8);
        let a = stepwise_search(&data);
        let b = stepwise_search(&data);
        assert_eq!(a.best, b.best);
        assert_eq!(arima_auto(&data, 5), arima_auto(&data, 5));
    }

    #[test]
    fn stepwise_stays_in_bounds() {
        for seed in 0..10 {
            let data = ar1(0.5, 80, seed);
            let r = stepwise_search(&data);
            assert!(!r.visited.is_empty());
            for (o, _) in &r.visited {
                assert!(o.p <= MAX_P && o.d <= MAX_D && o.q <= MAX_Q);
            }
        }
    }

    #[test]
    fn harmonic_forecasts_stay_bounded() {
        let mut rng = derive_rng(42, 77);
        for _ in 0..100 {
            let params = sample_harmonic_params(&mut rng, 100).unwrap();
            let s = synth_series(&params);
            let (ctx, _) = s.values().split_at(80);
            let f = arima_auto(ctx, 20);
            let bound = 10.0 * ctx.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(f.iter().all(|v| v.is_finite() && v.abs() <= bound), "{f:?}");
        }
    }

    #[test]
    fn kpss_separates_noise_from_walks() {
        let noise = ar1(0.0, 200, 21);
        assert!(kpss_statistic(&noise) < KPSS_CRITICAL_5PCT);
        assert_eq!(choose_d(&noise), 0);
        let mut walk = noise.clone();
        for i in 1..walk.len() {
            walk[i] += walk[i - 1];
        }
        assert!(kpss_statistic(&walk) > KPSS_CRITICAL_5PCT);
        assert_eq!(choose_d(&walk), 1);
    }

    #[test]
    fn ramp_trend_continues() {
        for (slope, noise_seed) in [(0.8, 1u64), (-0.5, 2), (2.0, 3)] {
            let mut rng = derive_rng(noise_seed, 0);
            let ctx: Vec<f64> = (0..80)
                .map(|i| 5.0 + slope * i as f64 + 0.01 * (rng.random::<f64>() - 0.5))
                .collect();
            let f = arima_auto(&ctx, 20);
            assert!(choose_d(&ctx) >= 1);
            assert_eq!((f[1] - f[0]).signum(), slope.signum(), "{f:?}");
        }
    }
}
