//! Augmented Dickey-Fuller unit-root test.
//!
//! Ordinary least squares of the first difference on a constant, a linear
//! trend, the lagged level, and `max_lag` lagged differences. The statistic
//! is the t-ratio of the lagged-level coefficient; its p-value comes from
//! linear interpolation in the tabulated finite-sample critical values for
//! the trend-included statistic, clamped to `[0.01, 0.99]`.

#[cfg(not(feature = "std"))]
use num_traits::Float as _;

use alloc::{vec, vec::Vec};

use crate::linalg::{solve_gauss, Mat};
use crate::series::Series;
use crate::{Error, Result};

/// Outcome of the ADF regression.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdfResult {
    /// t-ratio of the lagged-level coefficient.
    pub statistic: f64,
    /// Interpolated p-value, clamped to `[0.01, 0.99]`.
    pub p_value: f64,
    /// Number of lagged differences included.
    pub lags: usize,
    /// True when the p-value hit a clamp bound, i.e. the statistic fell
    /// outside the tabulated range.
    pub clamped: bool,
}

/// Sample sizes of the tabulated rows.
const TABLE_N: [f64; 6] = [25.0, 50.0, 100.0, 250.0, 500.0, 100_000.0];
/// Cumulative probabilities of the tabulated columns.
const TABLE_P: [f64; 8] = [0.01, 0.025, 0.05, 0.10, 0.90, 0.95, 0.975, 0.99];
/// Critical values of the trend-included statistic, rows by sample size.
const TABLE_CRIT: [[f64; 8]; 6] = [
    [-4.38, -3.95, -3.60, -3.24, -1.14, -0.80, -0.50, -0.15],
    [-4.15, -3.80, -3.50, -3.18, -1.19, -0.87, -0.58, -0.24],
    [-4.04, -3.73, -3.45, -3.15, -1.22, -0.90, -0.62, -0.28],
    [-3.99, -3.69, -3.43, -3.13, -1.23, -0.92, -0.64, -0.31],
    [-3.98, -3.68, -3.42, -3.13, -1.24, -0.93, -0.65, -0.32],
    [-3.96, -3.66, -3.41, -3.12, -1.25, -0.94, -0.66, -0.33],
];

/// Piecewise-linear interpolation with flat extrapolation at the ends.
fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    for w in 0..xs.len() - 1 {
        if x <= xs[w + 1] {
            let f = (x - xs[w]) / (xs[w + 1] - xs[w]);
            return ys[w] + f * (ys[w + 1] - ys[w]);
        }
    }
    ys[ys.len() - 1]
}

/// Default lag order: `trunc((T - 1)^(1/3))`.
pub fn default_max_lag(len: usize) -> usize {
    ((len.saturating_sub(1)) as f64).powf(1.0 / 3.0).floor() as usize
}

/// Runs the ADF test with the given lag order, or the default when `None`.
pub fn adf_test(series: &Series, max_lag: Option<usize>) -> Result<AdfResult> {
    let y = series.values();
    let t_len = y.len();
    let k = max_lag.unwrap_or_else(|| default_max_lag(t_len));
    let ncoef = 3 + k;
    // rows of the regression: t in k..T-1 indexes the difference d[t]
    if t_len < k + 2 || t_len - 1 - k < ncoef + 1 {
        return Err(Error::SeriesTooShort {
            have: t_len,
            need: k + ncoef + 2,
        });
    }
    let d: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let nobs = d.len() - k;

    let mut x = Mat::zeros(nobs, ncoef);
    let mut resp = vec![0.0; nobs];
    for (row, t) in (k..d.len()).enumerate() {
        let r = x.row_mut(row);
        r[0] = 1.0;
        r[1] = (t + 1) as f64; // linear trend
        r[2] = y[t]; // lagged level
        for j in 1..=k {
            r[2 + j] = d[t - j];
        }
        resp[row] = d[t];
    }

    // normal equations
    let mut xtx = Mat::zeros(ncoef, ncoef);
    let mut xty = vec![0.0; ncoef];
    for row in 0..nobs {
        let xr = x.row(row);
        for i in 0..ncoef {
            xty[i] += xr[i] * resp[row];
            for j in i..ncoef {
                let v = xtx.get(i, j) + xr[i] * xr[j];
                xtx.set(i, j, v);
            }
        }
    }
    for i in 0..ncoef {
        for j in 0..i {
            xtx.set(i, j, xtx.get(j, i));
        }
    }

    let beta = solve_gauss(&xtx, &xty)?;
    let mut rss = 0.0;
    for row in 0..nobs {
        let xr = x.row(row);
        let fitted: f64 = xr.iter().zip(&beta).map(|(a, b)| a * b).sum();
        let e = resp[row] - fitted;
        rss += e * e;
    }
    let dof = nobs - ncoef;
    if dof == 0 {
        return Err(Error::SeriesTooShort {
            have: t_len,
            need: k + ncoef + 2,
        });
    }
    let sigma2 = rss / dof as f64;

    // (X'X)^-1 diagonal entry for the lagged-level coefficient
    let mut e2 = vec![0.0; ncoef];
    e2[2] = 1.0;
    let col = solve_gauss(&xtx, &e2)?;
    let var = sigma2 * col[2];
    if var <= 0.0 || !var.is_finite() {
        return Err(Error::SingularRegression);
    }
    let statistic = beta[2] / var.sqrt();

    // interpolate the critical-value table at this sample size, then invert
    let n_interp = (t_len - 1) as f64;
    let mut crit = [0.0; 8];
    for (j, c) in crit.iter_mut().enumerate() {
        let col_vals: Vec<f64> = TABLE_CRIT.iter().map(|row| row[j]).collect();
        *c = interp(&TABLE_N, &col_vals, n_interp);
    }
    let raw_p = interp(&crit, &TABLE_P, statistic);
    let p_value = raw_p.clamp(0.01, 0.99);
    let clamped = statistic <= crit[0] || statistic >= crit[7];

    Ok(AdfResult {
        statistic,
        p_value,
        lags: k,
        clamped,
    })
}
