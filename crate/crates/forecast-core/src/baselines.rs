//! Reference forecasters for the model comparison: seasonal naive and
//! additive Holt-Winters with grid-searched smoothing parameters.

#[cfg(not(feature = "std"))]
use num_traits::Float as _;

use alloc::vec::Vec;

use crate::series::Series;
use crate::{Error, Result};

/// Repeats the most recent full season: the forecast for step `h` is the
/// observation one period (or a whole number of periods) earlier.
pub fn seasonal_naive(history: &Series, horizon: usize) -> Result<Vec<f64>> {
    let p = history.period();
    let n = history.len();
    if n < p {
        return Err(Error::SeriesTooShort { have: n, need: p });
    }
    let last_season = &history.values()[n - p..];
    Ok((0..horizon).map(|h| last_season[h % p]).collect())
}

/// Additive Holt-Winters smoothing parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HoltWintersParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub period: usize,
}

/// A fitted additive Holt-Winters model: final level, trend, and seasonal
/// state plus the in-sample one-step mean squared error.
#[derive(Debug, Clone, PartialEq)]
pub struct HoltWintersFit {
    pub params: HoltWintersParams,
    pub level: f64,
    pub trend: f64,
    pub seasonal: Vec<f64>,
    pub in_sample_mse: f64,
    /// Length of the fitted history; fixes the seasonal phase of forecasts.
    n: usize,
}

impl HoltWintersFit {
    /// Point forecasts from the end of the fitted history.
    pub fn forecast(&self, horizon: usize) -> Vec<f64> {
        let p = self.params.period;
        (1..=horizon)
            .map(|h| self.level + h as f64 * self.trend + self.seasonal[(self.n + h - 1) % p])
            .collect()
    }
}

/// Runs the additive level/trend/seasonal recursions for fixed parameters.
///
/// Initialization: level = mean of the first season, trend = the per-step
/// difference between the first two seasonal means, seasonal = deviations of
/// the first season from its mean.
pub fn holt_winters_fixed(history: &Series, params: HoltWintersParams) -> Result<HoltWintersFit> {
    let p = params.period;
    let y = history.values();
    let n = y.len();
    if n < 2 * p {
        return Err(Error::SeriesTooShort { have: n, need: 2 * p });
    }
    let mean1: f64 = y[..p].iter().sum::<f64>() / p as f64;
    let mean2: f64 = y[p..2 * p].iter().sum::<f64>() / p as f64;
    let mut level = mean1;
    let mut trend = (mean2 - mean1) / p as f64;
    let mut seasonal: Vec<f64> = y[..p].iter().map(|v| v - mean1).collect();

    let (alpha, beta, gamma) = (params.alpha, params.beta, params.gamma);
    let mut sse = 0.0;
    for t in p..n {
        let s_idx = t % p;
        let fitted = level + trend + seasonal[s_idx];
        let e = y[t] - fitted;
        sse += e * e;
        let new_level = alpha * (y[t] - seasonal[s_idx]) + (1.0 - alpha) * (level + trend);
        trend = beta * (new_level - level) + (1.0 - beta) * trend;
        seasonal[s_idx] = gamma * (y[t] - new_level) + (1.0 - gamma) * seasonal[s_idx];
        level = new_level;
    }
    Ok(HoltWintersFit {
        params,
        level,
        trend,
        seasonal,
        in_sample_mse: sse / (n - p) as f64,
        n,
    })
}

/// Grid step of the smoothing-parameter search.
const GRID_STEP: f64 = 0.05;

/// Fits additive Holt-Winters by exhaustive grid search of
/// `(alpha, beta, gamma)` over `{0.0, 0.05, ..., 1.0}^3`, minimizing the
/// one-step in-sample MSE. Ties break toward the lexicographically smallest
/// triple, so the search is fully deterministic.
pub fn holt_winters_fit(history: &Series) -> Result<HoltWintersFit> {
    let steps = (1.0 / GRID_STEP).round() as usize; // 20 -> 21 grid points
    let mut best: Option<HoltWintersFit> = None;
    for ai in 0..=steps {
        for bi in 0..=steps {
            for gi in 0..=steps {
                let params = HoltWintersParams {
                    alpha: ai as f64 * GRID_STEP,
                    beta: bi as f64 * GRID_STEP,
                    gamma: gi as f64 * GRID_STEP,
                    period: history.period(),
                };
                let fit = holt_winters_fixed(history, params)?;
                let better = match &best {
                    None => true,
                    Some(b) => fit.in_sample_mse < b.in_sample_mse,
                };
                if better {
                    best = Some(fit);
                }
            }
        }
    }
    Ok(best.expect("grid is never empty"))
}

/// Grid-search fit plus forecast in one call.
pub fn holt_winters_fit_forecast(history: &Series, horizon: usize) -> Result<Vec<f64>> {
    Ok(holt_winters_fit(history)?.forecast(horizon))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: Vec<f64>) -> Series {
        Series::monthly(values).unwrap()
    }

    #[test]
    fn seasonal_naive_copies_last_season() {
        let mut values = vec![0.0; 24];
        for (i, v) in values.iter_mut().enumerate() {
            *v = (i % 12) as f64 + if i >= 12 { 100.0 } else { 0.0 };
        }
        let s = series(values);
        let f = seasonal_naive(&s, 12).unwrap();
        let want: Vec<f64> = (0..12).map(|k| k as f64 + 100.0).collect();
        assert_eq!(f, want);
        // step 13 wraps to the start of the season again
        let f = seasonal_naive(&s, 13).unwrap();
        assert_eq!(f[12], want[0]);
    }

    #[test]
    fn seasonal_naive_tiles_whole_horizon() {
        let values: Vec<f64> = (0..36).map(|i| ((i % 12) as f64 * 0.7).sin()).collect();
        let s = series(values.clone());
        let f = seasonal_naive(&s, 60).unwrap();
        // index arithmetic oracle: position n + h maps to n - 12 + (h mod 12)
        for (h, v) in f.iter().enumerate() {
            assert_eq!(*v, values[36 - 12 + h % 12]);
        }
    }

    #[test]
    fn seasonal_naive_exact_on_periodic_series() {
        let values: Vec<f64> = (0..48).map(|i| ((i % 12) as f64).powi(2)).collect();
        let s = series(values.clone());
        let f = seasonal_naive(&s, 24).unwrap();
        for (h, v) in f.iter().enumerate() {
            assert_eq!(*v, ((h % 12) as f64).powi(2), "step {h}");
        }
    }

    #[test]
    fn seasonal_naive_needs_one_season() {
        let s = series(vec![1.0; 11]);
        assert!(matches!(
            seasonal_naive(&s, 5),
            Err(Error::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn holt_winters_constant_series_forecasts_constant() {
        let s = series(vec![7.25; 60]);
        let f = holt_winters_fit_forecast(&s, 24).unwrap();
        for v in f {
            assert!((v - 7.25).abs() < 1e-9, "forecast {v}");
        }
    }

    #[test]
    fn holt_winters_tracks_linear_trend() {
        let s = series((0..120).map(|t| 2.0 * t as f64).collect());
        let f = holt_winters_fit_forecast(&s, 60).unwrap();
        // least-squares slope over five whole seasons of forecasts
        let h = f.len() as f64;
        let tbar = (h - 1.0) / 2.0;
        let ybar = f.iter().sum::<f64>() / h;
        let num: f64 = f
            .iter()
            .enumerate()
            .map(|(t, y)| (t as f64 - tbar) * (y - ybar))
            .sum();
        let den: f64 = (0..f.len()).map(|t| (t as f64 - tbar).powi(2)).sum();
        let slope = num / den;
        assert!((slope - 2.0).abs() < 0.1, "forecast slope {slope}");
    }

    #[test]
    fn holt_winters_learns_sinusoid() {
        let s = series(
            (0..144)
                .map(|t| 10.0 + 5.0 * (core::f64::consts::TAU * t as f64 / 12.0).sin())
                .collect(),
        );
        let f = holt_winters_fit_forecast(&s, 12).unwrap();
        let truth: Vec<f64> = (144..156)
            .map(|t| 10.0 + 5.0 * (core::f64::consts::TAU * t as f64 / 12.0).sin())
            .collect();
        // correlation over one forecast cycle
        let mf = f.iter().sum::<f64>() / 12.0;
        let mt = truth.iter().sum::<f64>() / 12.0;
        let mut num = 0.0;
        let mut df = 0.0;
        let mut dt = 0.0;
        for (a, b) in f.iter().zip(&truth) {
            num += (a - mf) * (b - mt);
            df += (a - mf) * (a - mf);
            dt += (b - mt) * (b - mt);
        }
        let corr = num / (df * dt).sqrt();
        assert!(corr > 0.95, "correlation {corr}");
    }

    #[test]
    fn grid_search_minimum_beats_other_vertices() {
        let s = series(
            (0..96)
                .map(|t| {
                    20.0 + 0.3 * t as f64
                        + 6.0 * (core::f64::consts::TAU * t as f64 / 12.0).cos()
                        + ((t * 37 % 11) as f64 - 5.0) * 0.3
                })
                .collect(),
        );
        let best = holt_winters_fit(&s).unwrap();
        for (a, b, g) in [
            (0.0, 0.0, 0.0),
            (1.0, 1.0, 1.0),
            (0.5, 0.05, 0.3),
            (0.2, 0.0, 0.9),
            (0.95, 0.5, 0.05),
        ] {
            let other = holt_winters_fixed(
                &s,
                HoltWintersParams {
                    alpha: a,
                    beta: b,
                    gamma: g,
                    period: 12,
                },
            )
            .unwrap();
            assert!(best.in_sample_mse <= other.in_sample_mse + 1e-12);
        }
    }

    #[test]
    fn holt_winters_needs_two_seasons() {
        let s = series(vec![1.0; 23]);
        assert!(matches!(
            holt_winters_fit_forecast(&s, 4),
            Err(Error::SeriesTooShort { .. })
        ));
    }
}
