//! Time-series data model: ordered univariate series with an optional monthly
//! start label, train/validation/test splitting, min-max normalization,
//! sliding lag-window datasets, classical additive seasonal decomposition, and
//! the augmented Dickey-Fuller stationarity test.

pub mod adf;

use alloc::{vec, vec::Vec};
use core::fmt;
use core::str::FromStr;

use crate::linalg::Mat;
use crate::{Error, Result};

/// A year-month label such as `1948-01`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct MonthStamp {
    pub year: i32,
    /// 1-based month.
    pub month: u8,
}

impl MonthStamp {
    pub fn new(year: i32, month: u8) -> Option<Self> {
        (1..=12).contains(&month).then_some(MonthStamp { year, month })
    }

    /// The stamp `n` months later.
    pub fn plus_months(self, n: usize) -> MonthStamp {
        let total = self.year as i64 * 12 + i64::from(self.month) - 1 + n as i64;
        MonthStamp {
            year: (total.div_euclid(12)) as i32,
            month: (total.rem_euclid(12) + 1) as u8,
        }
    }

    /// Number of months from `self` to `other`; `None` when `other` is earlier.
    pub fn months_until(self, other: MonthStamp) -> Option<usize> {
        let a = self.year as i64 * 12 + i64::from(self.month);
        let b = other.year as i64 * 12 + i64::from(other.month);
        (b >= a).then_some((b - a) as usize)
    }
}

impl fmt::Display for MonthStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for MonthStamp {
    type Err = &'static str;

    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        let (y, m) = s.split_once('-').ok_or("expected YYYY-MM")?;
        if y.len() != 4 || m.len() != 2 {
            return Err("expected YYYY-MM");
        }
        let year: i32 = y.parse().map_err(|_| "invalid year")?;
        let month: u8 = m.parse().map_err(|_| "invalid month")?;
        MonthStamp::new(year, month).ok_or("month out of range")
    }
}

/// An ordered univariate series with a seasonal period and an optional start
/// label. All values are finite; this is enforced on construction.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Series {
    values: Vec<f64>,
    period: usize,
    start: Option<MonthStamp>,
}

impl Series {
    pub fn new(values: Vec<f64>, period: usize) -> Result<Self> {
        if period == 0 {
            return Err(Error::DomainError("seasonal period must be positive"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DomainError("series contains non-finite values"));
        }
        Ok(Series {
            values,
            period,
            start: None,
        })
    }

    /// Monthly series (period 12).
    pub fn monthly(values: Vec<f64>) -> Result<Self> {
        Series::new(values, 12)
    }

    pub fn with_start(mut self, start: MonthStamp) -> Self {
        self.start = Some(start);
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn start(&self) -> Option<MonthStamp> {
        self.start
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Label of the observation at `index`, when the series has a start.
    pub fn label_at(&self, index: usize) -> Option<MonthStamp> {
        self.start.map(|s| s.plus_months(index))
    }

    /// A contiguous sub-series keeping period and shifted start label.
    pub fn slice(&self, start: usize, len: usize) -> Series {
        Series {
            values: self.values[start..start + len].to_vec(),
            period: self.period,
            start: self.start.map(|s| s.plus_months(start)),
        }
    }

    /// Same metadata, new values. Lengths must match.
    pub fn with_values(&self, values: Vec<f64>) -> Series {
        assert_eq!(values.len(), self.values.len());
        Series {
            values,
            period: self.period,
            start: self.start,
        }
    }
}

/// Lengths of the validation and test partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub validation_len: usize,
    pub test_len: usize,
}

impl SplitSpec {
    /// The usual choice: validation and test of equal length.
    pub fn equal(len: usize) -> Self {
        SplitSpec {
            validation_len: len,
            test_len: len,
        }
    }

    pub fn holdout_len(&self) -> usize {
        self.validation_len + self.test_len
    }
}

/// Which observations the normalization statistics were computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum NormSource {
    TrainOnly,
    TrainPlusValidation,
}

/// Min-max statistics for normalization. `max > min` is guaranteed.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormStats {
    pub min: f64,
    pub max: f64,
    pub source: NormSource,
}

impl NormStats {
    pub fn from_values(values: &[f64], source: NormSource) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max <= min {
            return Err(Error::DegenerateRange { value: min });
        }
        Ok(NormStats { min, max, source })
    }

    #[inline]
    pub fn range(&self) -> f64 {
        self.max - self.min
    }
}

/// Train/validation/test partition with the train-only normalization
/// statistics attached. Concatenating the three parts reproduces the source.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSeries {
    pub train: Series,
    pub validation: Series,
    pub test: Series,
    pub norm: NormStats,
}

/// Splits a series into contiguous train/validation/test parts and computes
/// min-max statistics from the train part only.
pub fn split(series: &Series, spec: SplitSpec) -> Result<SplitSeries> {
    let t = series.len();
    let holdout = spec.holdout_len();
    if t <= holdout {
        return Err(Error::SeriesTooShort {
            have: t,
            need: holdout + 1,
        });
    }
    let train_len = t - holdout;
    let train = series.slice(0, train_len);
    let validation = series.slice(train_len, spec.validation_len);
    let test = series.slice(train_len + spec.validation_len, spec.test_len);
    let norm = NormStats::from_values(train.values(), NormSource::TrainOnly)?;
    Ok(SplitSeries {
        train,
        validation,
        test,
        norm,
    })
}

/// `z = (y - min) / (max - min)` on a raw slice.
pub fn normalize_slice(values: &[f64], stats: &NormStats) -> Vec<f64> {
    let r = stats.range();
    values.iter().map(|y| (y - stats.min) / r).collect()
}

/// `y = z * (max - min) + min` on a raw slice.
pub fn denormalize_slice(values: &[f64], stats: &NormStats) -> Vec<f64> {
    let r = stats.range();
    values.iter().map(|z| z * r + stats.min).collect()
}

/// Min-max normalization. Values outside the training range map outside
/// `[0, 1]` and are deliberately not clipped.
pub fn normalize(series: &Series, stats: &NormStats) -> Series {
    series.with_values(normalize_slice(series.values(), stats))
}

/// Exact inverse of [`normalize`] up to floating-point roundoff.
pub fn denormalize(series: &Series, stats: &NormStats) -> Series {
    series.with_values(denormalize_slice(series.values(), stats))
}

/// Supervised dataset of stride-1 sliding windows: row `i` of `inputs` is
/// `source[i..i+m]` and `targets[i] = source[i+m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagDataset {
    pub inputs: Mat,
    pub targets: Vec<f64>,
    pub m: usize,
}

impl LagDataset {
    pub fn n_samples(&self) -> usize {
        self.targets.len()
    }
}

/// Builds the lag-window dataset for lag count `m`.
pub fn make_lag_dataset(values: &[f64], m: usize) -> Result<LagDataset> {
    assert!(m >= 1, "lag count must be at least 1");
    let len = values.len();
    if m >= len {
        return Err(Error::LagTooLarge { lag: m, len });
    }
    let n = len - m;
    let mut inputs = Mat::zeros(n, m);
    for i in 0..n {
        inputs.row_mut(i).copy_from_slice(&values[i..i + m]);
    }
    let targets = values[m..].to_vec();
    Ok(LagDataset { inputs, targets, m })
}

/// Additive seasonal decomposition: a length-`period` vector of seasonal
/// indices summing to zero, and the deseasonalized (trend plus remainder)
/// series with `deseasonalized[t] + seasonal[t mod period] == original[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub seasonal: Vec<f64>,
    pub deseasonalized: Series,
}

/// Classical additive decomposition: trend by a centered moving average over
/// one period (split-weight endpoints when the period is even), seasonal
/// indices as the mean detrended value per position, adjusted to sum to zero.
pub fn decompose(series: &Series) -> Result<Decomposition> {
    let p = series.period();
    let t = series.len();
    if t < 2 * p {
        return Err(Error::SeriesTooShort { have: t, need: 2 * p });
    }
    let y = series.values();

    let half = p / 2;
    let trend_range = half..t - half;
    let mut sums = vec![0.0; p];
    let mut counts = vec![0usize; p];
    for i in trend_range {
        let trend = if p % 2 == 0 {
            let mut s = 0.5 * y[i - half] + 0.5 * y[i + half];
            for j in (i - half + 1)..(i + half) {
                s += y[j];
            }
            s / p as f64
        } else {
            let mut s = 0.0;
            for j in (i - half)..=(i + half) {
                s += y[j];
            }
            s / p as f64
        };
        sums[i % p] += y[i] - trend;
        counts[i % p] += 1;
    }
    let mut seasonal: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s / c as f64)
        .collect();
    let mean = seasonal.iter().sum::<f64>() / p as f64;
    seasonal.iter_mut().for_each(|s| *s -= mean);

    let deseason: Vec<f64> = y
        .iter()
        .enumerate()
        .map(|(i, v)| v - seasonal[i % p])
        .collect();
    Ok(Decomposition {
        seasonal,
        deseasonalized: series.with_values(deseason),
    })
}

/// Adds the seasonal component back: `out[t] = values[t] + seasonal[(phase + t) mod period]`.
///
/// `phase` is the seasonal position of the first element of `values`, i.e.
/// its index in the decomposed series modulo the period.
pub fn reseasonalize_slice(values: &[f64], seasonal: &[f64], phase: usize) -> Vec<f64> {
    let p = seasonal.len();
    values
        .iter()
        .enumerate()
        .map(|(t, v)| v + seasonal[(phase + t) % p])
        .collect()
}

/// [`reseasonalize_slice`] on a series, keeping its metadata.
pub fn reseasonalize(series: &Series, decomposition: &Decomposition, phase: usize) -> Series {
    series.with_values(reseasonalize_slice(
        series.values(),
        &decomposition.seasonal,
        phase,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: &[f64]) -> Series {
        Series::monthly(values.to_vec()).unwrap()
    }

    #[test]
    fn month_stamp_arithmetic_and_parsing() {
        let s: MonthStamp = "1948-01".parse().unwrap();
        assert_eq!(s, MonthStamp::new(1948, 1).unwrap());
        assert_eq!(s.plus_months(6).to_string(), "1948-07");
        assert_eq!(s.plus_months(12).to_string(), "1949-01");
        assert_eq!(s.plus_months(23).to_string(), "1949-12");
        assert_eq!(s.months_until("1950-03".parse().unwrap()), Some(26));
        assert!("1948-13".parse::<MonthStamp>().is_err());
        assert!("194801".parse::<MonthStamp>().is_err());
    }

    #[test]
    fn series_rejects_non_finite() {
        assert!(Series::monthly(vec![1.0, f64::NAN]).is_err());
        assert!(Series::monthly(vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn split_partitions_in_order() {
        let s = series(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
        let parts = split(&s, SplitSpec::equal(2)).unwrap();
        assert_eq!(parts.train.values(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(parts.validation.values(), &[7.0, 8.0]);
        assert_eq!(parts.test.values(), &[9.0, 10.0]);
        assert_eq!(parts.norm.source, NormSource::TrainOnly);
        assert_eq!(parts.norm.min, 1.0);
        assert_eq!(parts.norm.max, 6.0);
        // partition property: concatenation reproduces the source
        let mut cat = parts.train.values().to_vec();
        cat.extend_from_slice(parts.validation.values());
        cat.extend_from_slice(parts.test.values());
        assert_eq!(cat, s.values());
    }

    #[test]
    fn split_station_sized() {
        // 872 monthly observations with a 60/60 holdout leaves 752 for training
        let s = series(&(0..872).map(|i| i as f64).collect::<Vec<_>>());
        assert_eq!(s.len(), 872);
        let parts = split(&s, SplitSpec::equal(60)).unwrap();
        assert_eq!(parts.train.len(), 752);
        assert_eq!(parts.validation.len(), 60);
        assert_eq!(parts.test.len(), 60);
    }

    #[test]
    fn split_too_short() {
        let s = series(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(
            split(&s, SplitSpec::equal(3)),
            Err(Error::SeriesTooShort { have: 5, need: 7 })
        );
        // exactly equal to the holdout is also too short: train would be empty
        let s6 = series(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert!(split(&s6, SplitSpec::equal(3)).is_err());
    }

    #[test]
    fn split_labels_follow_offsets() {
        let s = series(&(0..10).map(|i| i as f64).collect::<Vec<_>>())
            .with_start("2000-01".parse().unwrap());
        let parts = split(&s, SplitSpec::equal(2)).unwrap();
        assert_eq!(parts.validation.start().unwrap().to_string(), "2000-07");
        assert_eq!(parts.test.start().unwrap().to_string(), "2000-09");
    }

    #[test]
    fn normalize_endpoints_and_out_of_range() {
        let s = series(&[0.0, 5.0, 10.0]);
        let stats = NormStats::from_values(s.values(), NormSource::TrainOnly).unwrap();
        assert_eq!(normalize(&s, &stats).values(), &[0.0, 0.5, 1.0]);

        let stats = NormStats {
            min: 0.0,
            max: 10.0,
            source: NormSource::TrainOnly,
        };
        let z = normalize(&series(&[12.0]), &stats);
        assert!((z.values()[0] - 1.2).abs() < 1e-15);
        // out-of-range values pass through denormalize unchanged too
        let back = denormalize(&series(&[-0.1]), &stats);
        assert!((back.values()[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn normalize_degenerate_range() {
        assert_eq!(
            NormStats::from_values(&[3.0, 3.0, 3.0], NormSource::TrainOnly),
            Err(Error::DegenerateRange { value: 3.0 })
        );
    }

    #[test]
    fn denormalize_midpoint() {
        let stats = NormStats {
            min: 0.0,
            max: 10.0,
            source: NormSource::TrainOnly,
        };
        assert_eq!(denormalize_slice(&[0.5], &stats), vec![5.0]);
    }

    #[test]
    fn lag_dataset_windows() {
        let d = make_lag_dataset(&[1.0, 2.0, 3.0, 4.0, 5.0], 2).unwrap();
        assert_eq!(d.n_samples(), 3);
        assert_eq!(d.inputs.row(0), &[1.0, 2.0]);
        assert_eq!(d.inputs.row(1), &[2.0, 3.0]);
        assert_eq!(d.inputs.row(2), &[3.0, 4.0]);
        assert_eq!(d.targets, vec![3.0, 4.0, 5.0]);
    }

    #[test]
    fn lag_dataset_boundaries() {
        // m = len - 1 leaves exactly one sample
        let d = make_lag_dataset(&[1.0, 2.0, 3.0], 2).unwrap();
        assert_eq!(d.n_samples(), 1);
        assert_eq!(
            make_lag_dataset(&[1.0, 2.0, 3.0], 3),
            Err(Error::LagTooLarge { lag: 3, len: 3 })
        );
        // shape check at training scale
        let vals: Vec<f64> = (0..752).map(|i| (i as f64).sin()).collect();
        let d = make_lag_dataset(&vals, 34).unwrap();
        assert_eq!(d.n_samples(), 718);
        assert_eq!(d.inputs.cols(), 34);
    }

    // independent double-loop window builder used as the oracle
    fn brute_force_windows(values: &[f64], m: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut ins = Vec::new();
        let mut outs = Vec::new();
        for start in 0..values.len() {
            if start + m < values.len() {
                let mut w = Vec::new();
                for j in 0..m {
                    w.push(values[start + j]);
                }
                ins.push(w);
                outs.push(values[start + m]);
            }
        }
        (ins, outs)
    }

    #[test]
    fn lag_dataset_matches_brute_force() {
        for len in 2..=50usize {
            let values: Vec<f64> = (0..len).map(|i| ((i * i) as f64 * 0.1).sin()).collect();
            for m in 1..len {
                let d = make_lag_dataset(&values, m).unwrap();
                let (ins, outs) = brute_force_windows(&values, m);
                assert_eq!(d.n_samples(), ins.len());
                assert_eq!(d.targets, outs);
                for (i, w) in ins.iter().enumerate() {
                    assert_eq!(d.inputs.row(i), w.as_slice());
                }
            }
        }
    }

    #[test]
    fn decompose_recovers_known_seasonal() {
        // pure seasonal signal with zero-sum indices
        let mut s_idx: Vec<f64> = (0..12).map(|k| ((k as f64) * 0.7).sin() * 5.0).collect();
        let mean = s_idx.iter().sum::<f64>() / 12.0;
        s_idx.iter_mut().for_each(|v| *v -= mean);
        let y: Vec<f64> = (0..120).map(|t| s_idx[t % 12]).collect();
        let d = decompose(&series(&y)).unwrap();
        for k in 0..12 {
            assert!(
                (d.seasonal[k] - s_idx[k]).abs() < 1e-6,
                "seasonal index {k}: {} vs {}",
                d.seasonal[k],
                s_idx[k]
            );
        }
        for v in d.deseasonalized.values() {
            assert!(v.abs() < 1e-6);
        }
    }

    #[test]
    fn decompose_constant_series() {
        let y = vec![7.5; 48];
        let d = decompose(&series(&y)).unwrap();
        for s in &d.seasonal {
            assert!(s.abs() < 1e-12);
        }
        assert_eq!(d.deseasonalized.values(), y.as_slice());
    }

    #[test]
    fn decompose_too_short() {
        assert!(matches!(
            decompose(&series(&vec![1.0; 23])),
            Err(Error::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn reseasonalize_inverts_decompose() {
        let y: Vec<f64> = (0..100)
            .map(|t| 10.0 + 0.05 * t as f64 + ((t % 12) as f64 * 0.5).cos() * 3.0)
            .collect();
        let s = series(&y);
        let d = decompose(&s).unwrap();
        // seasonal indices sum to zero
        assert!(d.seasonal.iter().sum::<f64>().abs() < 1e-10);
        let back = reseasonalize(&d.deseasonalized, &d, 0);
        for (a, b) in back.values().iter().zip(&y) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn reseasonalize_phase_indexing() {
        let seasonal: Vec<f64> = (0..12).map(|k| k as f64).collect();
        // zero input with phase 0 reproduces the seasonal pattern
        let out = reseasonalize_slice(&[0.0; 24], &seasonal, 0);
        for (t, v) in out.iter().enumerate() {
            assert_eq!(*v, seasonal[t % 12]);
        }
        // a single point at phase 11 picks up the last index
        let out = reseasonalize_slice(&[2.0], &seasonal, 11);
        assert_eq!(out, vec![2.0 + 11.0]);
    }
}
