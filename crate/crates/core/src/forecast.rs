//! ARIMA(p, d, q) modelling of an hourly price series.
//!
//! Model form, on the d-times differenced series `w` (demeaned when d = 0):
//!
//! ```text
//! w_t = phi_1 w_{t-1} + ... + phi_p w_{t-p} + e_t + theta_1 e_{t-1} + ... + theta_q e_{t-q}
//! ```
//!
//! Parameters minimise the conditional sum of squares (pre-sample shocks set
//! to zero, the first `p` values of `w` taken as given) with a Nelder-Mead
//! search. The search runs over unconstrained values mapped through `tanh`
//! to partial autocorrelations and then to polynomial coefficients, so every
//! candidate is stationary and invertible.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pricing::{read_series_csv, write_series_csv, PricingError};

/// Two-sided 5% significance multiplier for the ACF/PACF band.
pub const BARTLETT_Z: f64 = 1.96;
/// 5% critical value of chi-squared with 2 degrees of freedom.
pub const JB_CRITICAL_5PCT: f64 = 5.991;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("series too short: need more than {need} points, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("degenerate series: {0}")]
    Degenerate(String),
    #[error("no differencing order up to {max_d} makes the series stationary")]
    NotStationary { max_d: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("{what}: expected length {expected}, got {actual}")]
    Length { what: &'static str, expected: usize, actual: usize },
    #[error(transparent)]
    Io(#[from] PricingError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    values: Vec<f64>,
    start_hour: usize,
}

impl PriceSeries {
    pub fn new(values: Vec<f64>, start_hour: usize) -> Result<Self, ForecastError> {
        if values.is_empty() {
            return Err(ForecastError::TooShort { need: 0, got: 0 });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ForecastError::NonFinite(format!("value at index {i}")));
        }
        Ok(Self { values, start_hour })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn start_hour(&self) -> usize {
        self.start_hour
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// First `train` points and the rest.
    pub fn split(&self, train: usize) -> Result<(PriceSeries, PriceSeries), ForecastError> {
        if train == 0 || train >= self.len() {
            return Err(ForecastError::TooShort { need: train, got: self.len() });
        }
        Ok((
            PriceSeries { values: self.values[..train].to_vec(), start_hour: self.start_hour },
            PriceSeries { values: self.values[train..].to_vec(), start_hour: self.start_hour + train },
        ))
    }

    pub fn load_csv(path: &Path) -> Result<Self, ForecastError> {
        Self::new(read_series_csv(path, "price")?, 0)
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), ForecastError> {
        Ok(write_series_csv(path, "price", &self.values)?)
    }
}

/// Applies the first difference `d` times.
pub fn difference(x: &[f64], d: usize) -> Result<Vec<f64>, ForecastError> {
    if x.len() <= d {
        return Err(ForecastError::TooShort { need: d, got: x.len() });
    }
    let mut w = x.to_vec();
    for _ in 0..d {
        w = w.windows(2).map(|p| p[1] - p[0]).collect();
    }
    Ok(w)
}

/// Values `x[0], (∇x)[0], ..., (∇^{d-1}x)[0]` needed to undo [`difference`].
pub fn difference_heads(x: &[f64], d: usize) -> Result<Vec<f64>, ForecastError> {
    (0..d).map(|k| difference(x, k).map(|w| w[0])).collect()
}

/// Inverse of [`difference`] given the heads from [`difference_heads`].
pub fn integrate(w: &[f64], heads: &[f64]) -> Vec<f64> {
    let mut out = w.to_vec();
    for &h in heads.iter().rev() {
        let mut level = Vec::with_capacity(out.len() + 1);
        let mut acc = h;
        level.push(acc);
        for v in &out {
            acc += v;
            level.push(acc);
        }
        out = level;
    }
    out
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn is_constant(x: &[f64]) -> bool {
    x.iter().all(|&v| v == x[0])
}

/// Least squares by Householder QR. `cols` are the regressor columns.
/// Returns coefficients, their standard errors and the residual sum of squares.
fn ols(cols: &[Vec<f64>], y: &[f64]) -> Option<(Vec<f64>, Vec<f64>, f64)> {
    let n = y.len();
    let m = cols.len();
    if n <= m {
        return None;
    }
    let mut a: Vec<Vec<f64>> = cols.to_vec();
    let mut b = y.to_vec();
    for k in 0..m {
        let norm = a[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return None;
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for col in a.iter_mut().skip(k) {
            let dot: f64 = v.iter().zip(&col[k..]).map(|(p, q)| p * q).sum();
            let f = 2.0 * dot / vnorm2;
            for (c, vi) in col[k..].iter_mut().zip(&v) {
                *c -= f * vi;
            }
        }
        let dot: f64 = v.iter().zip(&b[k..]).map(|(p, q)| p * q).sum();
        let f = 2.0 * dot / vnorm2;
        for (c, vi) in b[k..].iter_mut().zip(&v) {
            *c -= f * vi;
        }
    }
    // R is a[col][row] for row <= col
    let r = |i: usize, j: usize| a[j][i];
    if (0..m).any(|i| r(i, i).abs() < 1e-12 * norm_scale(&a, m)) {
        return None;
    }
    let mut beta = vec![0.0; m];
    for i in (0..m).rev() {
        let s: f64 = (i + 1..m).map(|j| r(i, j) * beta[j]).sum();
        beta[i] = (b[i] - s) / r(i, i);
    }
    let rss: f64 = b[m..].iter().map(|v| v * v).sum();
    let s2 = rss / (n - m) as f64;
    // rows of R^{-1}
    let mut rinv = vec![vec![0.0; m]; m];
    for j in 0..m {
        rinv[j][j] = 1.0 / r(j, j);
        for i in (0..j).rev() {
            let s: f64 = (i + 1..=j).map(|k| r(i, k) * rinv[k][j]).sum();
            rinv[i][j] = -s / r(i, i);
        }
    }
    let se = (0..m).map(|i| (s2 * rinv[i].iter().map(|v| v * v).sum::<f64>()).sqrt()).collect();
    Some((beta, se, rss))
}

fn norm_scale(a: &[Vec<f64>], m: usize) -> f64 {
    (0..m).map(|i| a[i][i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub statistic: f64,
    pub critical_5pct: f64,
    pub lags: usize,
    pub n_obs: usize,
    pub reject_unit_root: bool,
}

/// 5% critical value of the constant-only Dickey-Fuller t statistic,
/// from MacKinnon's response surface: -2.8621 - 2.738/T - 8.36/T².
pub fn adf_critical_5pct(n_obs: usize) -> f64 {
    let t = n_obs as f64;
    -2.8621 - 2.738 / t - 8.36 / (t * t)
}

/// Lag length `floor(12 (n/100)^{1/4})`.
pub fn schwert_lags(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

/// Augmented Dickey-Fuller test with a constant and `max_lag` lagged differences:
/// `Δy_t = a + g y_{t-1} + Σ b_i Δy_{t-i} + e_t`, statistic `g / se(g)`.
pub fn adf_test(x: &[f64], max_lag: usize) -> Result<AdfResult, ForecastError> {
    let n = x.len();
    if n <= max_lag + 2 {
        return Err(ForecastError::TooShort { need: max_lag + 2, got: n });
    }
    if is_constant(x) {
        return Err(ForecastError::Degenerate("constant series has no ADF statistic".into()));
    }
    let dy: Vec<f64> = x.windows(2).map(|p| p[1] - p[0]).collect();
    // dy[t-1] = x[t] - x[t-1]; regress for t = max_lag+1 ..= n-1
    let rows: Vec<usize> = (max_lag + 1..n).collect();
    let y: Vec<f64> = rows.iter().map(|&t| dy[t - 1]).collect();
    let mut cols = vec![vec![1.0; rows.len()], rows.iter().map(|&t| x[t - 1]).collect()];
    for i in 1..=max_lag {
        cols.push(rows.iter().map(|&t| dy[t - 1 - i]).collect());
    }
    if rows.len() <= cols.len() {
        return Err(ForecastError::TooShort { need: 2 * max_lag + 3, got: n });
    }
    let Some((beta, se, rss)) = ols(&cols, &y) else {
        return Err(ForecastError::Degenerate("ADF regressors are collinear".into()));
    };
    if rss <= 0.0 || se[1] == 0.0 {
        return Err(ForecastError::Degenerate("ADF regression fits exactly".into()));
    }
    let statistic = beta[1] / se[1];
    let critical_5pct = adf_critical_5pct(rows.len());
    Ok(AdfResult {
        statistic,
        critical_5pct,
        lags: max_lag,
        n_obs: rows.len(),
        reject_unit_root: statistic < critical_5pct,
    })
}

/// Sample autocorrelations for lags `0..=max_lag`.
pub fn acf(x: &[f64], max_lag: usize) -> Result<Vec<f64>, ForecastError> {
    let n = x.len();
    if n <= max_lag {
        return Err(ForecastError::TooShort { need: max_lag, got: n });
    }
    let m = mean(x);
    let c: Vec<f64> = x.iter().map(|v| v - m).collect();
    let c0: f64 = c.iter().map(|v| v * v).sum();
    if c0 == 0.0 {
        return Err(ForecastError::Degenerate("zero variance".into()));
    }
    Ok((0..=max_lag).map(|k| c[k..].iter().zip(&c).map(|(a, b)| a * b).sum::<f64>() / c0).collect())
}

/// Partial autocorrelations for lags `1..=max_lag` (Durbin-Levinson).
pub fn pacf(x: &[f64], max_lag: usize) -> Result<Vec<f64>, ForecastError> {
    let r = acf(x, max_lag)?;
    Ok(durbin_levinson(&r))
}

fn durbin_levinson(r: &[f64]) -> Vec<f64> {
    let max_lag = r.len() - 1;
    let mut out = Vec::with_capacity(max_lag);
    let mut phi: Vec<f64> = Vec::new();
    for k in 1..=max_lag {
        let num = r[k] - (1..k).map(|j| phi[j - 1] * r[k - j]).sum::<f64>();
        let den = 1.0 - (1..k).map(|j| phi[j - 1] * r[j]).sum::<f64>();
        let kk = if den.abs() < 1e-300 { 0.0 } else { num / den };
        let prev = phi.clone();
        phi.push(kk);
        for j in 1..k {
            phi[j - 1] = prev[j - 1] - kk * prev[k - j - 1];
        }
        out.push(kk);
    }
    out
}

/// Number of leading lags (from lag 1) outside the `±1.96/√n` band.
fn leading_significant(values: &[f64], n: usize) -> usize {
    let band = BARTLETT_Z / (n as f64).sqrt();
    values.iter().take_while(|v| v.abs() > band).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSelection {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub adf: Vec<AdfResult>,
    /// `(p, q)` from the correlogram cut-offs, before the AIC refinement.
    pub correlogram_pq: (usize, usize),
    pub candidates: Vec<(usize, usize, f64)>,
}

/// Picks `d` by ADF, initial `p`/`q` from PACF/ACF cut-offs, then the lowest
/// AIC among `{0, p-1, p, p+1} x {0, q-1, q, q+1}` (ties go to fewer parameters).
pub fn select_order(x: &[f64], max_p: usize, max_d: usize, max_q: usize) -> Result<OrderSelection, ForecastError> {
    let mut adf = Vec::new();
    let mut chosen = None;
    for d in 0..=max_d {
        let w = difference(x, d)?;
        if w.len() > 1 && is_constant(&w) {
            chosen = Some((d, w));
            break;
        }
        let lags = schwert_lags(w.len()).min(w.len().saturating_sub(3) / 3);
        match adf_test(&w, lags) {
            Ok(res) => {
                adf.push(res);
                if res.reject_unit_root {
                    chosen = Some((d, w));
                    break;
                }
            }
            Err(ForecastError::Degenerate(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let Some((d, w)) = chosen else {
        return Err(ForecastError::NotStationary { max_d });
    };
    if is_constant(&w) {
        return Ok(OrderSelection { p: 0, d, q: 0, adf, correlogram_pq: (0, 0), candidates: Vec::new() });
    }

    let lags = max_p.max(max_q).max(1).min(w.len() - 1);
    let p0 = leading_significant(&pacf(&w, lags)?, w.len()).min(max_p);
    let q0 = leading_significant(&acf(&w, lags)?[1..], w.len()).min(max_q);

    let around = |c: usize, hi: usize| {
        let mut v = vec![0, c.saturating_sub(1), c, (c + 1).min(hi)];
        v.sort_unstable();
        v.dedup();
        v
    };
    let grid: Vec<(usize, usize)> =
        around(p0, max_p).into_iter().flat_map(|p| around(q0, max_q).into_iter().map(move |q| (p, q))).collect();
    let start = grid.iter().map(|g| g.0).max().unwrap_or(0);
    if w.len() <= start + grid.iter().map(|g| g.0 + g.1).max().unwrap_or(0) + 1 {
        return Err(ForecastError::TooShort { need: start + max_p + max_q + 1, got: w.len() });
    }
    let (demeaned, _) = center(&w, d == 0);
    let candidates: Vec<(usize, usize, f64)> = grid
        .par_iter()
        .map(|&(p, q)| {
            let (_, _, css) = fit_css(&demeaned, p, q, start);
            let n_eff = (demeaned.len() - start) as f64;
            let k = (p + q + usize::from(d == 0)) as f64;
            (p, q, n_eff * (css / n_eff).ln() + 2.0 * (k + 1.0))
        })
        .collect();
    let &(p, q, _) = candidates
        .iter()
        .min_by(|a, b| a.2.total_cmp(&b.2).then((a.0 + a.1).cmp(&(b.0 + b.1))).then(a.0.cmp(&b.0)))
        .expect("candidate grid is non-empty");
    Ok(OrderSelection { p, d, q, adf, correlogram_pq: (p0, q0), candidates })
}

fn center(w: &[f64], with_mean: bool) -> (Vec<f64>, f64) {
    if with_mean {
        let m = mean(w);
        (w.iter().map(|v| v - m).collect(), m)
    } else {
        (w.to_vec(), 0.0)
    }
}

/// Partial autocorrelations in (-1, 1) to the coefficients of a stationary
/// AR polynomial.
fn pacf_to_coeffs(partials: &[f64]) -> Vec<f64> {
    let mut phi: Vec<f64> = Vec::with_capacity(partials.len());
    for (k, &r) in partials.iter().enumerate() {
        let prev = phi.clone();
        for j in 0..k {
            phi[j] = prev[j] - r * prev[k - 1 - j];
        }
        phi.push(r);
    }
    phi
}

fn unpack(u: &[f64], p: usize) -> (Vec<f64>, Vec<f64>) {
    let phi = pacf_to_coeffs(&u[..p].iter().map(|v| v.tanh()).collect::<Vec<_>>());
    // theta is invertible iff -theta is a stationary AR polynomial
    let theta = pacf_to_coeffs(&u[p..].iter().map(|v| v.tanh()).collect::<Vec<_>>()).into_iter().map(|v| -v).collect();
    (phi, theta)
}

/// One-step residuals of `w` from index `start` (must be ≥ p), pre-sample shocks zero.
fn residuals_from(w: &[f64], phi: &[f64], theta: &[f64], start: usize) -> Vec<f64> {
    let mut e = vec![0.0; w.len()];
    for t in start..w.len() {
        let mut pred = 0.0;
        for (i, ph) in phi.iter().enumerate() {
            pred += ph * w[t - 1 - i];
        }
        for (j, th) in theta.iter().enumerate() {
            if t > j && t - 1 - j >= start {
                pred += th * e[t - 1 - j];
            }
        }
        e[t] = w[t] - pred;
    }
    e.drain(..start);
    e
}

fn css(w: &[f64], phi: &[f64], theta: &[f64], start: usize) -> f64 {
    residuals_from(w, phi, theta, start).iter().map(|v| v * v).sum()
}

fn fit_css(w: &[f64], p: usize, q: usize, start: usize) -> (Vec<f64>, Vec<f64>, f64) {
    if p + q == 0 {
        return (Vec::new(), Vec::new(), css(w, &[], &[], start));
    }
    let objective = |u: &[f64]| {
        let (phi, theta) = unpack(u, p);
        let v = css(w, &phi, &theta, start);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut u = nelder_mead(&objective, &vec![0.0; p + q], 0.5);
    // restart from the optimum to escape a collapsed simplex
    u = nelder_mead(&objective, &u, 0.1);
    let (phi, theta) = unpack(&u, p);
    let value = css(w, &phi, &theta, start);
    (phi, theta, value)
}

/// Derivative-free simplex minimiser.
fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: f64) -> Vec<f64> {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let fx = f(&x);
        simplex.push((x, fx));
    }
    let max_iter = 500 * (n + 1);
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[n].1);
        let size = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if (worst - best).abs() <= 1e-12 * (best.abs() + 1e-300) && size < 1e-9 {
            break;
        }
        let centroid: Vec<f64> =
            (0..n).map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (c - w)).collect() };
        let xr = along(1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = f(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst {
                let xc = along(0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < fr.min(worst) {
                simplex[n] = (xc, fc);
            } else {
                let x0 = simplex[0].0.clone();
                for (x, fx) in simplex.iter_mut().skip(1) {
                    for (xi, bi) in x.iter_mut().zip(&x0) {
                        *xi = bi + 0.5 * (*xi - bi);
                    }
                    *fx = f(x);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0).0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaModel {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub sigma2: f64,
    /// True when the mean of the differenced series was estimated and removed.
    pub mean_adjusted: bool,
    pub mean: f64,
    pub css: f64,
    pub n_obs: usize,
}

impl ArimaModel {
    pub fn aic(&self) -> f64 {
        let n = self.n_obs as f64;
        let k = (self.p + self.q + usize::from(self.mean_adjusted) + 1) as f64;
        n * (self.css / n).ln() + 2.0 * k
    }
}

/// CSS fit of ARIMA(p, d, q). The sample mean is removed only when d = 0.
pub fn fit(x: &[f64], p: usize, d: usize, q: usize) -> Result<ArimaModel, ForecastError> {
    fit_with_mean(x, p, d, q, d == 0)
}

/// As [`fit`], choosing whether the mean of the differenced series is
/// estimated. With d > 0 that mean is a drift: d = 2 with a mean reproduces
/// a quadratic trend exactly.
pub fn fit_with_mean(x: &[f64], p: usize, d: usize, q: usize, with_mean: bool) -> Result<ArimaModel, ForecastError> {
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(ForecastError::NonFinite(format!("value at index {i}")));
    }
    let need = d + p + q + 1;
    if x.len() <= need {
        return Err(ForecastError::TooShort { need, got: x.len() });
    }
    let (w, m) = center(&difference(x, d)?, with_mean);
    let (phi, theta, css) = fit_css(&w, p, q, p);
    if !css.is_finite() {
        return Err(ForecastError::NonFinite("conditional sum of squares".into()));
    }
    let n_obs = w.len() - p;
    Ok(ArimaModel { p, d, q, phi, theta, sigma2: css / n_obs as f64, mean_adjusted: with_mean, mean: m, css, n_obs })
}

/// In-sample one-step residuals on the differenced scale.
pub fn residuals(m: &ArimaModel, x: &[f64]) -> Result<Vec<f64>, ForecastError> {
    let w = model_scale(m, x)?;
    Ok(residuals_from(&w, &m.phi, &m.theta, m.p))
}

fn model_scale(m: &ArimaModel, x: &[f64]) -> Result<Vec<f64>, ForecastError> {
    let need = m.d + m.p;
    if x.len() <= need {
        return Err(ForecastError::TooShort { need, got: x.len() });
    }
    Ok(difference(x, m.d)?.into_iter().map(|v| v - m.mean).collect())
}

/// One-step-ahead predictions of `x[t]` from `x[..t]` for every
/// `t >= d + p`, with the parameters held fixed.
pub fn one_step_predictions(m: &ArimaModel, x: &[f64]) -> Result<Vec<f64>, ForecastError> {
    let w = model_scale(m, x)?;
    let e = residuals_from(&w, &m.phi, &m.theta, m.p);
    // w_hat = w - e; map back to levels one step at a time
    Ok((m.p..w.len())
        .map(|k| {
            let w_hat = w[k] - e[k - m.p] + m.mean;
            let t = k + m.d;
            w_hat + level_offset(&x[..t], m.d)
        })
        .collect())
}

/// `x_t - ∇^d x_t`, which depends only on `x[..t]`.
fn level_offset(past: &[f64], d: usize) -> f64 {
    // ∇^d x_t = Σ_k (-1)^k C(d,k) x_{t-k}
    let mut c = 1.0;
    let mut acc = 0.0;
    for k in 1..=d {
        c = c * (d + 1 - k) as f64 / k as f64;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        acc += sign * c * past[past.len() - k];
    }
    acc
}

/// Iterated forecasts `steps` ahead with future shocks zero, integrated back to levels.
pub fn forecast(m: &ArimaModel, history: &[f64], steps: usize) -> Result<Vec<f64>, ForecastError> {
    let mut w = model_scale(m, history)?;
    let mut e = residuals_from(&w, &m.phi, &m.theta, m.p);
    let base = w.len();
    for _ in 0..steps {
        let t = w.len();
        let mut pred = 0.0;
        for (i, ph) in m.phi.iter().enumerate() {
            pred += ph * w[t - 1 - i];
        }
        for (j, th) in m.theta.iter().enumerate() {
            if t - 1 - j >= m.p {
                pred += th * e[t - 1 - j - m.p];
            }
        }
        w.push(pred);
        e.push(0.0);
    }
    // last value at each differencing level
    let mut tails: Vec<f64> =
        (0..m.d).map(|k| *difference(history, k).expect("checked length").last().unwrap()).collect();
    Ok(w[base..]
        .iter()
        .map(|&dw| {
            let mut v = dw + m.mean;
            for k in (0..m.d).rev() {
                v += tails[k];
                tails[k] = v;
            }
            v
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastScores {
    pub rmse: f64,
    pub mae: f64,
    /// `None` when the actual values are constant.
    pub r2: Option<f64>,
}

pub fn score(pred: &[f64], actual: &[f64]) -> Result<ForecastScores, ForecastError> {
    if pred.len() != actual.len() {
        return Err(ForecastError::Length { what: "predictions", expected: actual.len(), actual: pred.len() });
    }
    if actual.len() < 2 {
        return Err(ForecastError::TooShort { need: 1, got: actual.len() });
    }
    let n = actual.len() as f64;
    let ss_res: f64 = pred.iter().zip(actual).map(|(p, a)| (a - p).powi(2)).sum();
    let mae = pred.iter().zip(actual).map(|(p, a)| (a - p).abs()).sum::<f64>() / n;
    let m = mean(actual);
    let ss_tot: f64 = actual.iter().map(|a| (a - m).powi(2)).sum();
    let r2 = (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot);
    Ok(ForecastScores { rmse: (ss_res / n).sqrt(), mae, r2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityTest {
    pub jb_statistic: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub gaussian_5pct: bool,
}

/// Jarque-Bera test.
pub fn jarque_bera(resid: &[f64]) -> Result<NormalityTest, ForecastError> {
    if resid.len() < 8 {
        return Err(ForecastError::TooShort { need: 7, got: resid.len() });
    }
    let n = resid.len() as f64;
    let m = mean(resid);
    let m2 = resid.iter().map(|r| (r - m).powi(2)).sum::<f64>() / n;
    if m2 == 0.0 {
        return Err(ForecastError::Degenerate("residuals have zero variance".into()));
    }
    let m3 = resid.iter().map(|r| (r - m).powi(3)).sum::<f64>() / n;
    let m4 = resid.iter().map(|r| (r - m).powi(4)).sum::<f64>() / n;
    let skewness = m3 / m2.powf(1.5);
    let excess_kurtosis = m4 / (m2 * m2) - 3.0;
    let jb = n / 6.0 * (skewness * skewness + excess_kurtosis * excess_kurtosis / 4.0);
    Ok(NormalityTest { jb_statistic: jb, skewness, excess_kurtosis, gaussian_5pct: jb < JB_CRITICAL_5PCT })
}

/// Jarque-Bera test of the model's in-sample residuals.
pub fn residual_normality(m: &ArimaModel, x: &[f64]) -> Result<NormalityTest, ForecastError> {
    jarque_bera(&residuals(m, x)?)
}
