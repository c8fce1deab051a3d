//! Gaussian kernel density estimators used as comparison baselines.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HtfError, Result};
use crate::scalar::Scalar;

/// Gaussian KDE `f(x) = (1 / (n h)) Σ φ((x - y_i) / h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeEstimate<T> {
    sample: Vec<T>,
    bandwidth: T,
}

impl<T: Scalar> KdeEstimate<T> {
    pub fn new(sample: Vec<T>, bandwidth: T) -> Result<Self> {
        if sample.is_empty() || sample.iter().any(|v| !v.is_finite()) {
            return Err(HtfError::InvalidArgument(
                "a KDE needs at least one finite observation".into(),
            ));
        }
        if !(bandwidth > T::zero()) || !bandwidth.is_finite() {
            return Err(HtfError::InvalidArgument(format!(
                "bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Ok(Self { sample, bandwidth })
    }

    pub fn bandwidth(&self) -> T {
        self.bandwidth
    }

    pub fn sample(&self) -> &[T] {
        &self.sample
    }

    pub fn evaluate(&self, x: T) -> T {
        kde_evaluate(self, x)
    }

    pub fn evaluate_many(&self, xs: &[T]) -> Vec<T> {
        xs.iter().map(|&x| kde_evaluate(self, x)).collect()
    }
}

/// Direct `O(n)` evaluation of the estimate at `x`.
pub fn kde_evaluate<T: Scalar>(est: &KdeEstimate<T>, x: T) -> T {
    let h = est.bandwidth;
    let half = T::c(0.5);
    let sum: T = est
        .sample
        .iter()
        .map(|&y| {
            let z = (x - y) / h;
            (-half * z * z).exp()
        })
        .sum();
    sum / (T::from_usize_(est.sample.len()) * h * (T::TAU()).sqrt())
}

/// Linear-interpolation (type 7) quantile of sorted data.
fn quantile_sorted<T: Scalar>(sorted: &[T], p: T) -> T {
    let h = T::from_usize_(sorted.len() - 1) * p;
    let lo = h.floor();
    let i = lo.to_usize().unwrap_or(0).min(sorted.len() - 1);
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (h - lo) * (sorted[j] - sorted[i])
}

fn sorted_copy<T: Scalar>(values: &[T]) -> Result<Vec<T>> {
    if values.len() < 2 {
        return Err(HtfError::InvalidArgument(format!(
            "at least 2 observations are required, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(HtfError::InvalidArgument(
            "observations must be finite".into(),
        ));
    }
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite values are ordered"));
    Ok(s)
}

/// Normal reference rule `0.9 min(sd, IQR / 1.34) n^{-1/5}`.
///
/// The IQR uses type-7 quantiles. When the IQR vanishes but the standard
/// deviation does not, the standard deviation alone is used.
pub fn reference_bandwidth<T: Scalar>(values: &[T]) -> Result<T> {
    let sorted = sorted_copy(values)?;
    let n = T::from_usize_(sorted.len());
    let mean = sorted.iter().copied().sum::<T>() / n;
    let var = sorted.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / (n - T::one());
    let sd = var.sqrt();
    let iqr = quantile_sorted(&sorted, T::c(0.75)) - quantile_sorted(&sorted, T::c(0.25));
    let spread = if iqr > T::zero() {
        sd.min(iqr / T::c(1.34))
    } else {
        sd
    };
    if !(spread > T::zero()) {
        return Err(HtfError::DegenerateSample("sample has zero spread".into()));
    }
    Ok(T::c(0.9) * spread * n.powf(T::c(-0.2)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOptions<T> {
    pub folds: usize,
    /// Candidate bandwidths; `None` means `grid_points` log-spaced values
    /// over `[h_ref / 10, 10 h_ref]`.
    pub grid: Option<Vec<T>>,
    pub grid_points: usize,
    pub seed: u64,
}

impl<T> Default for CvOptions<T> {
    fn default() -> Self {
        Self {
            folds: 5,
            grid: None,
            grid_points: 30,
            seed: 0,
        }
    }
}

/// Log-spaced candidate grid `[h / 10, 10 h]`, ascending.
pub fn cv_grid<T: Scalar>(h_ref: T, points: usize) -> Vec<T> {
    if points == 1 {
        return vec![h_ref];
    }
    let last = T::from_usize_(points - 1);
    (0..points)
        .map(|i| h_ref * T::c(10.0).powf(T::c(-1.0) + T::c(2.0) * T::from_usize_(i) / last))
        .collect()
}

/// Mean held-out log-likelihood of `h` under the fold assignment `fold`.
///
/// Each held-out point is scored by the KDE of the other folds, computed in
/// log space so that far-away points stay finite.
pub fn cv_score<T: Scalar>(sorted: &[T], fold: &[usize], folds: usize, h: T) -> T {
    let log_norm = (h * T::TAU().sqrt()).ln();
    let mut total = T::zero();
    for f in 0..folds {
        let train: Vec<T> = sorted
            .iter()
            .zip(fold)
            .filter(|(_, &g)| g != f)
            .map(|(&v, _)| v)
            .collect();
        let log_m = T::from_usize_(train.len()).ln();
        for (&x, _) in sorted.iter().zip(fold).filter(|(_, &g)| g == f) {
            let e: Vec<T> = train
                .iter()
                .map(|&y| {
                    let z = (x - y) / h;
                    -T::c(0.5) * z * z
                })
                .collect();
            let mx = e.iter().copied().fold(T::neg_infinity(), T::max);
            let s: T = e.iter().map(|&v| (v - mx).exp()).sum();
            total += mx + s.ln() - log_m - log_norm;
        }
    }
    total / T::from_usize_(sorted.len())
}

/// Fold labels for the canonically sorted sample: a seeded shuffle of
/// `0, 1, …, folds - 1, 0, 1, …`.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|i| i % folds).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    labels
}

/// Bandwidth maximizing the `folds`-fold held-out log-likelihood over the
/// grid. Ties go to the smallest candidate.
pub fn cv_bandwidth<T: Scalar>(values: &[T], opts: &CvOptions<T>) -> Result<T> {
    let sorted = sorted_copy(values)?;
    let n = sorted.len();
    if opts.folds < 2 || opts.folds > n {
        return Err(HtfError::InvalidArgument(format!(
            "need 2 <= folds <= n, got folds = {} with n = {n}",
            opts.folds
        )));
    }
    let grid = match &opts.grid {
        Some(g) => g.clone(),
        None => {
            if opts.grid_points == 0 {
                return Err(HtfError::InvalidArgument("bandwidth grid is empty".into()));
            }
            cv_grid(reference_bandwidth(&sorted)?, opts.grid_points)
        }
    };
    if grid.is_empty() || grid.iter().any(|&h| !(h > T::zero()) || !h.is_finite()) {
        return Err(HtfError::InvalidArgument(
            "bandwidth grid must be nonempty, positive and finite".into(),
        ));
    }
    let fold = fold_assignment(n, opts.folds, opts.seed);
    let scores: Vec<T> = grid
        .par_iter()
        .map(|&h| cv_score(&sorted, &fold, opts.folds, h))
        .collect();
    let mut best: Option<(T, T)> = None;
    for (&h, &s) in grid.iter().zip(&scores) {
        if s.is_finite() && best.is_none_or(|(_, b)| s > b) {
            best = Some((h, s));
        }
    }
    best.map(|(h, _)| h).ok_or_else(|| {
        HtfError::DegenerateSample("held-out likelihood is degenerate for every bandwidth".into())
    })
}
