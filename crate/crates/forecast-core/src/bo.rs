//! Bayesian optimization over a mixed continuous/discrete hyperparameter box:
//! the search-space definition with its continuous-to-mixed rounding map,
//! expected improvement, acquisition maximization by random multi-start plus
//! golden-section refinement, and the sequential optimize loop.

#[cfg(not(feature = "std"))]
use num_traits::Float as _;

use alloc::collections::BTreeMap;
use alloc::{string::String, vec, vec::Vec};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::gp::{GpState, KernelKind, Posterior};
use crate::linalg::Mat;
use crate::rng::{standard_normal, ChaCha20Rng};
use crate::stats::special::{normal_cdf, normal_pdf};
use crate::{Error, Result};

/// How a dimension's unit-cube coordinate maps to its natural value, and
/// whether the realized value is rounded to an integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DimKind {
    Continuous,
    /// Searched on a log scale; the unit coordinate interpolates between the
    /// logs of the bounds before exponentiation.
    LogContinuous,
    /// Continuous pre-image, rounded half-up when realized.
    Integer,
}

/// One search dimension.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DimSpec {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: DimKind,
}

impl DimSpec {
    pub fn new(name: &str, lower: f64, upper: f64, kind: DimKind) -> Self {
        assert!(lower < upper, "dimension {name}: lower must be below upper");
        if kind == DimKind::LogContinuous {
            assert!(lower > 0.0, "dimension {name}: log scale needs positive bounds");
        }
        if kind == DimKind::Integer {
            assert!(
                lower.fract() == 0.0 && upper.fract() == 0.0,
                "dimension {name}: integer bounds must be integral"
            );
        }
        DimSpec {
            name: String::from(name),
            lower,
            upper,
            kind,
        }
    }
}

/// An ordered set of search dimensions.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SearchSpace {
    dims: Vec<DimSpec>,
}

impl SearchSpace {
    pub fn new(dims: Vec<DimSpec>) -> Self {
        assert!(!dims.is_empty(), "search space needs at least one dimension");
        SearchSpace { dims }
    }

    /// The full six-dimensional space: lag count `m`, dropout `dr`, learning
    /// rate `lr` (log-scaled), hidden units `hu1` and `hu2`, batch size `b`.
    pub fn canonical() -> Self {
        SearchSpace::new(vec![
            DimSpec::new("m", 2.0, 60.0, DimKind::Integer),
            DimSpec::new("dr", 0.0, 0.5, DimKind::Continuous),
            DimSpec::new("lr", 1e-4, 1e-1, DimKind::LogContinuous),
            DimSpec::new("hu1", 4.0, 128.0, DimKind::Integer),
            DimSpec::new("hu2", 4.0, 128.0, DimKind::Integer),
            DimSpec::new("b", 8.0, 128.0, DimKind::Integer),
        ])
    }

    /// The canonical space with the lag dimension removed, for variants that
    /// pin the lag a priori.
    pub fn structural() -> Self {
        let mut dims = SearchSpace::canonical().dims;
        dims.remove(0);
        SearchSpace::new(dims)
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[DimSpec] {
        &self.dims
    }

    /// Maps a unit-cube point to natural-scale coordinates (the continuous
    /// pre-image of the hyperparameters).
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        debug_assert_eq!(u.len(), self.dim());
        self.dims
            .iter()
            .zip(u)
            .map(|(d, &c)| {
                let c = c.clamp(0.0, 1.0);
                match d.kind {
                    DimKind::LogContinuous => {
                        (d.lower.ln() + c * (d.upper.ln() - d.lower.ln())).exp()
                    }
                    _ => d.lower + c * (d.upper - d.lower),
                }
            })
            .collect()
    }

    /// Inverse of [`from_unit`].
    pub fn to_unit(&self, raw: &[f64]) -> Vec<f64> {
        debug_assert_eq!(raw.len(), self.dim());
        self.dims
            .iter()
            .zip(raw)
            .map(|(d, &v)| {
                let u = match d.kind {
                    DimKind::LogContinuous => {
                        (v.ln() - d.lower.ln()) / (d.upper.ln() - d.lower.ln())
                    }
                    _ => (v - d.lower) / (d.upper - d.lower),
                };
                u.clamp(0.0, 1.0)
            })
            .collect()
    }

    /// The element-wise rounding map from the continuous pre-image to the
    /// realized hyperparameters: integer dimensions round half-up, everything
    /// else passes through unchanged.
    pub fn g_map(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: raw.len(),
            });
        }
        self.dims
            .iter()
            .enumerate()
            .zip(raw)
            .map(|((i, d), &v)| {
                if v < d.lower || v > d.upper {
                    return Err(Error::OutOfBounds {
                        dim: i,
                        value: v,
                        lower: d.lower,
                        upper: d.upper,
                    });
                }
                Ok(match d.kind {
                    DimKind::Integer => v.round(),
                    _ => v,
                })
            })
            .collect()
    }

    /// Latin hypercube sample of `n` unit-cube points.
    pub fn latin_hypercube(&self, n: usize, rng: &mut ChaCha20Rng) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mut columns: Vec<Vec<f64>> = Vec::with_capacity(d);
        for _ in 0..d {
            let mut strata: Vec<usize> = (0..n).collect();
            strata.shuffle(rng);
            columns.push(
                strata
                    .into_iter()
                    .map(|s| (s as f64 + rng.gen::<f64>()) / n as f64)
                    .collect(),
            );
        }
        (0..n)
            .map(|i| columns.iter().map(|c| c[i]).collect())
            .collect()
    }
}

/// Realized hyperparameters for one LSTM training run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HyperParams {
    /// Lag count: how many past observations form the input window.
    pub m: usize,
    pub dr: f64,
    pub lr: f64,
    pub hu1: usize,
    pub hu2: usize,
    pub b: usize,
}

impl HyperParams {
    /// From a realized vector of the canonical six-dimensional space.
    pub fn from_full(realized: &[f64]) -> Self {
        assert_eq!(realized.len(), 6);
        HyperParams {
            m: realized[0] as usize,
            dr: realized[1],
            lr: realized[2],
            hu1: realized[3] as usize,
            hu2: realized[4] as usize,
            b: realized[5] as usize,
        }
    }

    /// From a realized vector of the structural space plus a pinned lag.
    pub fn from_structural(realized: &[f64], m: usize) -> Self {
        assert_eq!(realized.len(), 5);
        HyperParams {
            m,
            dr: realized[0],
            lr: realized[1],
            hu1: realized[2] as usize,
            hu2: realized[3] as usize,
            b: realized[4] as usize,
        }
    }
}

/// Closed-form expected improvement of a Gaussian posterior over `f_best`.
///
/// `(mu - f*) Phi(u) + sigma phi(u)` with `u = (mu - f*) / sigma`; when the
/// posterior is deterministic this degenerates to `max(0, mu - f*)`. Always
/// non-negative.
pub fn expected_improvement(posterior: &Posterior, f_best: f64) -> f64 {
    let sigma = posterior.variance.sqrt();
    let delta = posterior.mean - f_best;
    if sigma <= 0.0 {
        return delta.max(0.0);
    }
    let u = delta / sigma;
    (delta * normal_cdf(u) + sigma * normal_pdf(u)).max(0.0)
}

const N_CANDIDATES: usize = 2048;
const N_PERTURBED: usize = 10;
const PERTURB_SIGMA: f64 = 0.05;
const REFINE_STEPS: usize = 50;
const GOLDEN_ITERS: usize = 24;
const GOLDEN_RADIUS: f64 = 0.25;

/// The candidate set scanned by [`maximize_acquisition`]: 2048 uniform
/// unit-cube points plus Gaussian perturbations of the best observed points.
/// Exposed so tests can replay the exact set from a cloned rng.
pub fn acquisition_candidates(state: &GpState, rng: &mut ChaCha20Rng) -> Vec<Vec<f64>> {
    let d = state.dim();
    let mut candidates: Vec<Vec<f64>> = (0..N_CANDIDATES)
        .map(|_| (0..d).map(|_| rng.gen::<f64>()).collect())
        .collect();

    // indices of the best observed values, descending
    let n = state.n_observations();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        state.values()[b]
            .partial_cmp(&state.values()[a])
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    for &i in order.iter().take(N_PERTURBED) {
        let point = state.points().row(i);
        candidates.push(
            point
                .iter()
                .map(|&x| (x + PERTURB_SIGMA * standard_normal(rng)).clamp(0.0, 1.0))
                .collect(),
        );
    }
    candidates
}

fn ei_at(state: &GpState, f_best: f64, x: &[f64]) -> f64 {
    let post = state.posterior(x).expect("dimension checked by caller");
    expected_improvement(&post, f_best)
}

/// Picks the next evaluation point by maximizing expected improvement over
/// the candidate set, then refining the winner with coordinate-wise
/// golden-section line searches. Falls back to a uniform random point when
/// the acquisition surface is identically zero at machine precision.
pub fn maximize_acquisition(
    state: &GpState,
    f_best: f64,
    rng: &mut ChaCha20Rng,
) -> Vec<f64> {
    let d = state.dim();
    let candidates = acquisition_candidates(state, rng);
    let mut best = candidates[0].clone();
    let mut best_ei = f64::NEG_INFINITY;
    for c in &candidates {
        let ei = ei_at(state, f_best, c);
        if ei > best_ei {
            best_ei = ei;
            best = c.clone();
        }
    }

    if best_ei <= 0.0 {
        // flat acquisition: explore blindly
        return (0..d).map(|_| rng.gen::<f64>()).collect();
    }

    let invphi = (5.0f64.sqrt() - 1.0) / 2.0;
    for step in 0..REFINE_STEPS {
        let dim = step % d;
        let center = best[dim];
        let mut a = (center - GOLDEN_RADIUS).max(0.0);
        let mut b = (center + GOLDEN_RADIUS).min(1.0);
        let mut probe = best.clone();
        let eval = |coord: f64, probe: &mut Vec<f64>| {
            probe[dim] = coord;
            ei_at(state, f_best, probe)
        };
        let mut c = b - invphi * (b - a);
        let mut dpt = a + invphi * (b - a);
        let mut fc = eval(c, &mut probe);
        let mut fd = eval(dpt, &mut probe);
        for _ in 0..GOLDEN_ITERS {
            if fc > fd {
                b = dpt;
                dpt = c;
                fd = fc;
                c = b - invphi * (b - a);
                fc = eval(c, &mut probe);
            } else {
                a = c;
                c = dpt;
                fc = fd;
                dpt = a + invphi * (b - a);
                fd = eval(dpt, &mut probe);
            }
        }
        let (coord, value) = if fc > fd { (c, fc) } else { (dpt, fd) };
        if value > best_ei {
            best_ei = value;
            best[dim] = coord;
        }
    }
    best
}

/// One evaluated proposal in a BO run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoRecord {
    pub iteration: usize,
    /// Natural-scale continuous pre-image of the proposal.
    pub raw: Vec<f64>,
    /// Rounded (realized) coordinates actually evaluated.
    pub realized: Vec<f64>,
    /// Objective value; `-inf` marks a failed evaluation.
    pub value: f64,
    /// Running maximum of the objective.
    pub best_so_far: f64,
}

/// The full evaluation history of a BO run.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoTrace {
    pub records: Vec<BoRecord>,
}

impl BoTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn realized_key(realized: &[f64]) -> Vec<u64> {
    realized.iter().map(|v| v.to_bits()).collect()
}

struct EvalLoop<'a, F> {
    objective: F,
    space: &'a SearchSpace,
    cache: BTreeMap<Vec<u64>, f64>,
    unit_points: Vec<Vec<f64>>,
    values_raw: Vec<f64>,
    trace: BoTrace,
    best_value: f64,
    best_realized: Option<Vec<f64>>,
}

impl<F: FnMut(&[f64]) -> f64> EvalLoop<'_, F> {
    /// Evaluates the proposal at unit-cube point `u`, reusing the cached
    /// value when the rounded coordinates have been seen before. The raw
    /// point still joins the surrogate's observations either way.
    fn evaluate(&mut self, u: Vec<f64>) {
        let raw = self.space.from_unit(&u);
        let realized = self.space.g_map(&raw).expect("from_unit stays in bounds");
        let key = realized_key(&realized);
        let value = match self.cache.get(&key) {
            Some(&v) => v,
            None => {
                let v = (self.objective)(&realized);
                let v = if v.is_nan() { f64::NEG_INFINITY } else { v };
                self.cache.insert(key, v);
                v
            }
        };
        if value.is_finite() && value > self.best_value {
            self.best_value = value;
            self.best_realized = Some(realized.clone());
        }
        self.unit_points.push(u);
        self.values_raw.push(value);
        self.trace.records.push(BoRecord {
            iteration: self.trace.records.len(),
            raw,
            realized,
            value,
            best_so_far: self.best_value,
        });
    }

    /// Observed values with failures imputed below the finite minimum, so a
    /// diverged run repels the surrogate without poisoning it.
    fn gp_values(&self) -> Option<Vec<f64>> {
        let finite: Vec<f64> = self.values_raw.iter().copied().filter(|v| v.is_finite()).collect();
        if finite.is_empty() {
            return None;
        }
        let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let imputed = min - (max - min) - 1.0;
        Some(
            self.values_raw
                .iter()
                .map(|v| if v.is_finite() { *v } else { imputed })
                .collect(),
        )
    }
}

/// Runs Bayesian optimization of a black-box objective over `space`.
///
/// `n_initial` Latin-hypercube evaluations seed the surrogate, then each of
/// the `n_iterations` rounds refits the GP on all raw points, maximizes
/// expected improvement, rounds the proposal through [`SearchSpace::g_map`],
/// and evaluates. An objective returning NaN or `-inf` counts as a failed
/// evaluation: it is recorded at `-inf` and the loop continues. Returns the
/// realized coordinates with the best observed value and the full trace.
///
/// Deterministic for a fixed `rng` state and deterministic objective.
pub fn bo_optimize<F: FnMut(&[f64]) -> f64>(
    objective: F,
    space: &SearchSpace,
    n_initial: usize,
    n_iterations: usize,
    kernel: KernelKind,
    rng: &mut ChaCha20Rng,
) -> Result<(Vec<f64>, BoTrace)> {
    if n_initial < 2 {
        return Err(Error::InsufficientData("bo needs at least two initial points"));
    }
    let mut state = EvalLoop {
        objective,
        space,
        cache: BTreeMap::new(),
        unit_points: Vec::new(),
        values_raw: Vec::new(),
        trace: BoTrace::default(),
        best_value: f64::NEG_INFINITY,
        best_realized: None,
    };

    for u in space.latin_hypercube(n_initial, rng) {
        state.evaluate(u);
    }

    for _ in 0..n_iterations {
        let next = match state.gp_values() {
            Some(values) => {
                let n = state.unit_points.len();
                let d = space.dim();
                let points = Mat::from_fn(n, d, |i, j| state.unit_points[i][j]);
                let gp = GpState::fit(points, values, kernel)?;
                maximize_acquisition(&gp, state.best_value, rng)
            }
            // every evaluation so far failed: keep sampling blindly
            None => (0..space.dim()).map(|_| rng.gen::<f64>()).collect(),
        };
        state.evaluate(next);
    }

    let best = state.best_realized.ok_or(Error::AllEvaluationsFailed)?;
    Ok((best, state.trace))
}
