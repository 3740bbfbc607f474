//! Gaussian-process regression over the (unit-cube scaled) hyperparameter
//! space: kernel evaluation, marginal-likelihood fitting of the kernel
//! hyperparameters, and closed-form posterior mean/variance queries backed by
//! a cached Cholesky factor.

#[cfg(not(feature = "std"))]
use num_traits::Float as _;

use alloc::{vec, vec::Vec};
use rand::Rng;

use crate::linalg::{cholesky, solve_lower, solve_lower_transpose, Mat};
use crate::rng::rng_from;
use crate::{Error, Result};

/// Stationary covariance families offered by the surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum KernelKind {
    SquaredExponential,
    /// Matern with smoothness 5/2, the default for hyperparameter surfaces.
    Matern52,
}

/// A kernel with per-dimension length scales and a signal variance, plus the
/// diagonal jitter applied when factorizing covariance matrices.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Kernel {
    pub kind: KernelKind,
    pub length_scales: Vec<f64>,
    pub signal_variance: f64,
    pub jitter: f64,
}

pub const JITTER_INITIAL: f64 = 1e-8;
pub const JITTER_MAX: f64 = 1e-4;

/// Log-parameter search bounds for the marginal-likelihood fit.
const LOG_BOUND: f64 = 5.0;
const FIT_STARTS: usize = 8;
/// Internal seed for the multi-start sampler; fixed so fitting is a pure
/// function of its inputs.
const FIT_SEED: u64 = 0x67AF_1E2D_0B5C_4483;

impl Kernel {
    pub fn new(kind: KernelKind, length_scales: Vec<f64>, signal_variance: f64) -> Self {
        assert!(
            length_scales.iter().all(|l| *l > 0.0) && signal_variance > 0.0,
            "kernel parameters must be strictly positive"
        );
        Kernel {
            kind,
            length_scales,
            signal_variance,
            jitter: JITTER_INITIAL,
        }
    }

    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }

    /// Scaled Euclidean distance between two points.
    #[inline]
    fn scaled_dist(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut r2 = 0.0;
        for ((x, y), l) in a.iter().zip(b).zip(&self.length_scales) {
            let d = (x - y) / l;
            r2 += d * d;
        }
        r2.sqrt()
    }

    #[inline]
    fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        let r = self.scaled_dist(a, b);
        match self.kind {
            KernelKind::SquaredExponential => self.signal_variance * (-0.5 * r * r).exp(),
            KernelKind::Matern52 => {
                let s5r = 5.0f64.sqrt() * r;
                self.signal_variance * (1.0 + s5r + s5r * s5r / 3.0) * (-s5r).exp()
            }
        }
    }

    /// Covariance between two points. `k(a, a)` equals the signal variance
    /// and the value decreases strictly as the scaled distance grows.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != self.dim() || b.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: if a.len() != self.dim() { a.len() } else { b.len() },
            });
        }
        Ok(self.eval_unchecked(a, b))
    }
}

/// Posterior mean and variance at a query point.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Posterior {
    pub mean: f64,
    /// Clamped at zero after the numerical subtraction.
    pub variance: f64,
}

/// A fitted Gaussian process: observed points and values, the kernel, the
/// constant prior mean, and the cached Cholesky factor with the presolved
/// weight vector `alpha = (K + jitter I)^-1 (f - mean)`.
#[derive(Debug, Clone)]
pub struct GpState {
    points: Mat,
    values: Vec<f64>,
    kernel: Kernel,
    mean_const: f64,
    chol: Mat,
    alpha: Vec<f64>,
}

fn kernel_matrix(kernel: &Kernel, points: &Mat) -> Mat {
    let n = points.rows();
    let mut k = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval_unchecked(points.row(i), points.row(j));
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    k
}

/// Cholesky of `K + jitter I`, doubling the jitter on failure up to the cap.
/// Returns the factor and the jitter that succeeded.
fn cholesky_with_escalation(k: &Mat, start_jitter: f64) -> Result<(Mat, f64)> {
    let n = k.rows();
    let mut jitter = start_jitter;
    loop {
        let mut kj = k.clone();
        for i in 0..n {
            let v = kj.get(i, i) + jitter;
            kj.set(i, i, v);
        }
        match cholesky(&kj) {
            Ok(l) => return Ok((l, jitter)),
            Err(_) => {
                jitter *= 2.0;
                if jitter > JITTER_MAX {
                    return Err(Error::CholeskyFailure { jitter });
                }
            }
        }
    }
}

/// Negative log marginal likelihood for the given log-parameters, or
/// `INFINITY` when the covariance cannot be factorized at the base jitter.
fn neg_log_ml(log_params: &[f64], kind: KernelKind, points: &Mat, centered: &[f64]) -> f64 {
    let d = points.cols();
    let kernel = Kernel {
        kind,
        length_scales: log_params[..d].iter().map(|p| p.exp()).collect(),
        signal_variance: log_params[d].exp(),
        jitter: JITTER_INITIAL,
    };
    let k = kernel_matrix(&kernel, points);
    let Ok((l, _)) = cholesky_with_escalation(&k, JITTER_INITIAL) else {
        return f64::INFINITY;
    };
    let y = solve_lower(&l, centered);
    let n = centered.len() as f64;
    let quad: f64 = y.iter().map(|v| v * v).sum();
    let log_det: f64 = (0..l.rows()).map(|i| l.get(i, i).ln()).sum();
    0.5 * quad + log_det + 0.5 * n * core::f64::consts::TAU.ln()
}

fn clamp_params(p: &mut [f64]) {
    for v in p.iter_mut() {
        *v = v.clamp(-LOG_BOUND, LOG_BOUND);
    }
}

/// Derivative-free Nelder-Mead minimization in the clamped log-parameter box.
fn nelder_mead(
    start: &[f64],
    mut f: impl FnMut(&[f64]) -> f64,
    max_iter: usize,
) -> (Vec<f64>, f64) {
    let dim = start.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(start.to_vec());
    for i in 0..dim {
        let mut v = start.to_vec();
        v[i] += 0.5;
        clamp_params(&mut v);
        simplex.push(v);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    for _ in 0..max_iter {
        // order ascending by objective
        let mut idx: Vec<usize> = (0..simplex.len()).collect();
        idx.sort_by(|&a, &b| {
            fvals[a]
                .partial_cmp(&fvals[b])
                .unwrap_or(core::cmp::Ordering::Equal)
        });
        let ordered: Vec<Vec<f64>> = idx.iter().map(|&i| simplex[i].clone()).collect();
        let ordered_f: Vec<f64> = idx.iter().map(|&i| fvals[i]).collect();
        simplex = ordered;
        fvals = ordered_f;

        if (fvals[dim] - fvals[0]).abs() < 1e-10 {
            break;
        }

        let mut centroid = vec![0.0; dim];
        for v in &simplex[..dim] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / dim as f64;
            }
        }
        let worst = simplex[dim].clone();
        let mut reflect: Vec<f64> = centroid
            .iter()
            .zip(&worst)
            .map(|(c, w)| c + (c - w))
            .collect();
        clamp_params(&mut reflect);
        let fr = f(&reflect);

        if fr < fvals[0] {
            let mut expand: Vec<f64> = centroid
                .iter()
                .zip(&worst)
                .map(|(c, w)| c + 2.0 * (c - w))
                .collect();
            clamp_params(&mut expand);
            let fe = f(&expand);
            if fe < fr {
                simplex[dim] = expand;
                fvals[dim] = fe;
            } else {
                simplex[dim] = reflect;
                fvals[dim] = fr;
            }
        } else if fr < fvals[dim - 1] {
            simplex[dim] = reflect;
            fvals[dim] = fr;
        } else {
            let mut contract: Vec<f64> = centroid
                .iter()
                .zip(&worst)
                .map(|(c, w)| c + 0.5 * (w - c))
                .collect();
            clamp_params(&mut contract);
            let fc = f(&contract);
            if fc < fvals[dim] {
                simplex[dim] = contract;
                fvals[dim] = fc;
            } else {
                // shrink toward the best vertex
                let best = simplex[0].clone();
                for i in 1..=dim {
                    for (v, b) in simplex[i].iter_mut().zip(&best) {
                        *v = b + 0.5 * (*v - b);
                    }
                    fvals[i] = f(&simplex[i]);
                }
            }
        }
    }
    let mut best = 0;
    for i in 1..fvals.len() {
        if fvals[i] < fvals[best] {
            best = i;
        }
    }
    (simplex[best].clone(), fvals[best])
}

impl GpState {
    /// Fits kernel hyperparameters by maximizing the log marginal likelihood
    /// with a multi-start Nelder-Mead search in log-parameter space, then
    /// caches the Cholesky factor. The prior mean is the sample mean of the
    /// observed values. Deterministic: the start sampler uses a fixed seed.
    pub fn fit(points: Mat, values: Vec<f64>, kind: KernelKind) -> Result<GpState> {
        let n = points.rows();
        if n != values.len() {
            return Err(Error::LengthMismatch {
                left: n,
                right: values.len(),
            });
        }
        if n < 2 {
            return Err(Error::InsufficientData("gp fit needs at least two points"));
        }
        let d = points.cols();
        let mean_const = values.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = values.iter().map(|v| v - mean_const).collect();

        let mut rng = rng_from(FIT_SEED, &[n as u64, d as u64]);
        let mut best_params: Option<Vec<f64>> = None;
        let mut best_obj = f64::INFINITY;
        for s in 0..FIT_STARTS {
            let start: Vec<f64> = if s == 0 {
                vec![0.0; d + 1]
            } else {
                (0..d + 1).map(|_| rng.gen_range(-3.0..3.0)).collect()
            };
            let (params, obj) =
                nelder_mead(&start, |p| neg_log_ml(p, kind, &points, &centered), 200);
            if obj < best_obj {
                best_obj = obj;
                best_params = Some(params);
            }
        }
        if !best_obj.is_finite() {
            return Err(Error::CholeskyFailure { jitter: JITTER_MAX });
        }
        let params = best_params.expect("at least one start ran");

        let kernel = Kernel {
            kind,
            length_scales: params[..d].iter().map(|p| p.exp()).collect(),
            signal_variance: params[d].exp(),
            jitter: JITTER_INITIAL,
        };
        GpState::with_kernel_impl(points, values, kernel, mean_const, centered)
    }

    /// Builds a state around an explicitly chosen kernel, skipping the
    /// marginal-likelihood fit. The jitter still escalates if the covariance
    /// resists factorization.
    pub fn with_kernel(points: Mat, values: Vec<f64>, kernel: Kernel) -> Result<GpState> {
        let n = points.rows();
        if n != values.len() {
            return Err(Error::LengthMismatch {
                left: n,
                right: values.len(),
            });
        }
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if kernel.dim() != points.cols() {
            return Err(Error::DimensionMismatch {
                expected: points.cols(),
                got: kernel.dim(),
            });
        }
        let mean_const = values.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = values.iter().map(|v| v - mean_const).collect();
        GpState::with_kernel_impl(points, values, kernel, mean_const, centered)
    }

    fn with_kernel_impl(
        points: Mat,
        values: Vec<f64>,
        mut kernel: Kernel,
        mean_const: f64,
        centered: Vec<f64>,
    ) -> Result<GpState> {
        let k = kernel_matrix(&kernel, &points);
        let (chol, jitter) = cholesky_with_escalation(&k, kernel.jitter)?;
        kernel.jitter = jitter;
        let y = solve_lower(&chol, &centered);
        let alpha = solve_lower_transpose(&chol, &y);
        Ok(GpState {
            points,
            values,
            kernel,
            mean_const,
            chol,
            alpha,
        })
    }

    pub fn n_observations(&self) -> usize {
        self.values.len()
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn mean_const(&self) -> f64 {
        self.mean_const
    }

    pub fn points(&self) -> &Mat {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Log marginal likelihood of the observations under the cached kernel.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let centered: Vec<f64> = self.values.iter().map(|v| v - self.mean_const).collect();
        let y = solve_lower(&self.chol, &centered);
        let quad: f64 = y.iter().map(|v| v * v).sum();
        let log_det: f64 = (0..self.chol.rows())
            .map(|i| self.chol.get(i, i).ln())
            .sum();
        let n = self.values.len() as f64;
        -0.5 * quad - log_det - 0.5 * n * core::f64::consts::TAU.ln()
    }

    /// Posterior mean and variance at `x`.
    ///
    /// At an observed point this interpolates the observation up to jitter;
    /// far from all data it reverts to the prior mean and signal variance.
    pub fn posterior(&self, x: &[f64]) -> Result<Posterior> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let n = self.n_observations();
        let mut k_star = vec![0.0; n];
        for i in 0..n {
            k_star[i] = self.kernel.eval_unchecked(x, self.points.row(i));
        }
        let mean = self.mean_const
            + k_star
                .iter()
                .zip(&self.alpha)
                .map(|(k, a)| k * a)
                .sum::<f64>();
        let v = solve_lower(&self.chol, &k_star);
        let var = self.kernel.signal_variance - v.iter().map(|x| x * x).sum::<f64>();
        Ok(Posterior {
            mean,
            variance: var.max(0.0),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::invert_gauss;
    use crate::rng::rng_from;
    use rand::Rng;

    fn unit_points(rows: &[&[f64]]) -> Mat {
        let d = rows[0].len();
        Mat::from_fn(rows.len(), d, |i, j| rows[i][j])
    }

    #[test]
    fn kernel_at_zero_distance_is_signal_variance() {
        for kind in [KernelKind::SquaredExponential, KernelKind::Matern52] {
            let k = Kernel::new(kind, vec![0.3, 0.7], 2.5);
            let x = [0.2, 0.9];
            assert!((k.eval(&x, &x).unwrap() - 2.5).abs() < 1e-15);
        }
    }

    #[test]
    fn matern52_at_unit_scaled_distance() {
        let k = Kernel::new(KernelKind::Matern52, vec![1.0], 1.0);
        let got = k.eval(&[0.0], &[1.0]).unwrap();
        // direct formula evaluation
        let s5 = 5.0f64.sqrt();
        let want = (1.0 + s5 + 5.0 / 3.0) * (-s5).exp();
        assert!((got - want).abs() < 1e-15);
        assert!((got - 0.52399410883182031).abs() < 1e-12);
    }

    #[test]
    fn kernel_monotone_in_distance() {
        let mut rng = rng_from(11, &[]);
        for kind in [KernelKind::SquaredExponential, KernelKind::Matern52] {
            let k = Kernel::new(kind, vec![0.4, 0.9, 0.2], 1.3);
            for _ in 0..50 {
                let a: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
                let near: Vec<f64> = a.iter().map(|v| v + 0.01 * rng.gen::<f64>()).collect();
                let far: Vec<f64> = a.iter().map(|v| v + 0.5 + rng.gen::<f64>()).collect();
                assert!(k.eval(&a, &near).unwrap() > k.eval(&a, &far).unwrap());
            }
        }
    }

    #[test]
    fn kernel_dimension_mismatch() {
        let k = Kernel::new(KernelKind::Matern52, vec![1.0, 1.0], 1.0);
        assert!(matches!(
            k.eval(&[0.0], &[0.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn fit_survives_duplicate_points() {
        let points = unit_points(&[&[0.5, 0.5], &[0.5, 0.5], &[0.2, 0.8]]);
        let state = GpState::fit(points, vec![1.0, 2.0, 0.5], KernelKind::Matern52).unwrap();
        // duplicate rows force the jitter up but the fit must succeed
        assert!(state.kernel().jitter <= JITTER_MAX);
        let p = state.posterior(&[0.5, 0.5]).unwrap();
        assert!(p.mean.is_finite() && p.variance.is_finite());
    }

    #[test]
    fn fit_constant_values_reverts_to_constant_mean() {
        let points = unit_points(&[&[0.1], &[0.4], &[0.9]]);
        let state = GpState::fit(points, vec![3.0, 3.0, 3.0], KernelKind::Matern52).unwrap();
        assert!(state.log_marginal_likelihood().is_finite());
        for q in [0.0, 0.25, 0.66, 1.0] {
            let p = state.posterior(&[q]).unwrap();
            assert!((p.mean - 3.0).abs() < 1e-9, "mean at {q}: {}", p.mean);
        }
    }

    #[test]
    fn fit_length_scales_stay_in_bounds() {
        let points = unit_points(&[&[0.0], &[0.25], &[0.5], &[0.75], &[1.0]]);
        let values: Vec<f64> = points
            .as_slice()
            .iter()
            .map(|x| (x * core::f64::consts::PI).sin())
            .collect();
        let state = GpState::fit(points, values, KernelKind::Matern52).unwrap();
        for l in &state.kernel().length_scales {
            assert!(*l > 1e-3 && *l < 1e3, "length scale {l}");
        }
    }

    #[test]
    fn posterior_interpolates_observations() {
        let points = unit_points(&[&[0.1, 0.2], &[0.8, 0.3], &[0.4, 0.9]]);
        let values = vec![1.0, -0.5, 0.7];
        let state = GpState::fit(points.clone(), values.clone(), KernelKind::Matern52).unwrap();
        for i in 0..3 {
            let p = state.posterior(points.row(i)).unwrap();
            assert!(
                (p.mean - values[i]).abs() < 1e-6,
                "mean at obs {i}: {} vs {}",
                p.mean,
                values[i]
            );
            assert!(p.variance <= 1e-6, "variance at obs {i}: {}", p.variance);
        }
    }

    #[test]
    fn posterior_reverts_to_prior_far_away() {
        let kernel = Kernel::new(KernelKind::Matern52, vec![0.05], 1.7);
        let points = unit_points(&[&[0.1], &[0.15], &[0.2]]);
        let state = GpState::with_kernel(points, vec![2.0, 2.5, 1.5], kernel).unwrap();
        let mu0 = state.mean_const();
        let p = state.posterior(&[0.9]).unwrap(); // 14 length scales away
        assert!((p.mean - mu0).abs() < 1e-4, "mean {} vs {}", p.mean, mu0);
        assert!((p.variance - 1.7).abs() < 1e-4, "variance {}", p.variance);
    }

    #[test]
    fn posterior_tracks_linear_function_between_points() {
        let points = unit_points(&[&[0.2], &[0.5], &[0.8]]);
        let values = vec![0.2, 0.5, 0.8];
        let state = GpState::fit(points, values, KernelKind::Matern52).unwrap();
        for q in [0.3, 0.4, 0.6, 0.7] {
            let p = state.posterior(&[q]).unwrap();
            assert!((p.mean - q).abs() < 0.05, "mean at {q}: {}", p.mean);
        }
    }

    // explicit-inverse posterior, the independent route against the solves
    fn posterior_by_inverse(state: &GpState, x: &[f64]) -> (f64, f64) {
        let n = state.n_observations();
        let kernel = state.kernel();
        let mut k = kernel_matrix(kernel, state.points());
        for i in 0..n {
            let v = k.get(i, i) + kernel.jitter;
            k.set(i, i, v);
        }
        let kinv = invert_gauss(&k).unwrap();
        let k_star: Vec<f64> = (0..n)
            .map(|i| kernel.eval_unchecked(x, state.points().row(i)))
            .collect();
        let centered: Vec<f64> = state
            .values()
            .iter()
            .map(|v| v - state.mean_const())
            .collect();
        let mut mean = state.mean_const();
        let mut quad = 0.0;
        for i in 0..n {
            let mut kinv_row_dot_c = 0.0;
            let mut kinv_row_dot_k = 0.0;
            for j in 0..n {
                kinv_row_dot_c += kinv.get(i, j) * centered[j];
                kinv_row_dot_k += kinv.get(i, j) * k_star[j];
            }
            mean += k_star[i] * kinv_row_dot_c;
            quad += k_star[i] * kinv_row_dot_k;
        }
        (mean, kernel.signal_variance - quad)
    }

    #[test]
    fn cholesky_route_matches_explicit_inverse() {
        let mut rng = rng_from(23, &[]);
        for _ in 0..20 {
            let n = rng.gen_range(2..8);
            let d = rng.gen_range(1..4);
            let points = Mat::from_fn(n, d, |_, _| rng.gen::<f64>());
            let values: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let state = GpState::fit(points, values, KernelKind::Matern52).unwrap();
            for _ in 0..5 {
                let q: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
                let p = state.posterior(&q).unwrap();
                let (mean, var) = posterior_by_inverse(&state, &q);
                assert!((p.mean - mean).abs() < 1e-8, "{} vs {mean}", p.mean);
                assert!((p.variance - var.max(0.0)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn log_ml_invariant_under_permutation() {
        let points = unit_points(&[&[0.1], &[0.5], &[0.9], &[0.3]]);
        let values = vec![1.0, 2.0, 0.5, 1.5];
        let kernel = Kernel::new(KernelKind::Matern52, vec![0.4], 1.2);
        let a = GpState::with_kernel(points, values, kernel.clone())
            .unwrap()
            .log_marginal_likelihood();
        let perm_points = unit_points(&[&[0.3], &[0.9], &[0.1], &[0.5]]);
        let perm_values = vec![1.5, 0.5, 1.0, 2.0];
        let b = GpState::with_kernel(perm_points, perm_values, kernel)
            .unwrap()
            .log_marginal_likelihood();
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn posterior_variance_never_negative() {
        let mut rng = rng_from(31, &[]);
        let points = Mat::from_fn(10, 3, |_, _| rng.gen::<f64>());
        let values: Vec<f64> = (0..10).map(|_| rng.gen::<f64>()).collect();
        let state = GpState::fit(points, values, KernelKind::SquaredExponential).unwrap();
        for _ in 0..500 {
            let q: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() * 2.0 - 0.5).collect();
            assert!(state.posterior(&q).unwrap().variance >= 0.0);
        }
    }
}
