//! Penalized Poisson fits of histogram counts.
//!
//! The problem solved is
//!
//! ```text
//! minimize  Σ_j (exp(θ_j) - x_j θ_j) + tau * P(Δ θ)
//! ```
//!
//! with `P` either the ℓ1 norm or the squared ℓ2 norm of the order-`k+1`
//! differences, optionally restricted to the box `|θ_j - log(n δ)| <= n^b`.
//! `tau` multiplies the penalty as written; no implicit factor of 1/2.

mod admm;
mod barrier;
mod kkt;
mod polish;
mod smooth;

use serde::{Deserialize, Serialize};

use crate::binning::Histogram;
use crate::diffops::DiffOperator;
use crate::error::{check_len, HtfError, Result};
use crate::scalar::Scalar;

pub use kkt::kkt_residual;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    #[default]
    L1,
    L2Sq,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec<T> {
    /// Polynomial degree; the penalty acts on differences of order `k + 1`.
    pub k: usize,
    pub tau: T,
    pub norm: Penalty,
}

impl<T: Scalar> PenaltySpec<T> {
    pub fn l1(k: usize, tau: T) -> Self {
        Self {
            k,
            tau,
            norm: Penalty::L1,
        }
    }

    pub fn l2sq(k: usize, tau: T) -> Self {
        Self {
            k,
            tau,
            norm: Penalty::L2Sq,
        }
    }
}

/// Algorithm used for the ℓ1 penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum L1Method {
    /// Log-barrier Newton method on the dual problem.
    #[default]
    Barrier,
    /// ADMM on the splitting `z = Δθ`.
    Admm,
}

/// Optional box `|θ_j - log(n δ)| <= n^b` around the uniform log-intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec<T> {
    pub enabled: bool,
    pub b: T,
}

impl<T: Scalar> BoxSpec<T> {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            b: T::c(0.25),
        }
    }

    pub fn with_exponent(b: T) -> Self {
        Self { enabled: true, b }
    }

    /// Lower and upper bounds for `hist`, or `None` when disabled.
    pub fn bounds(&self, hist: &Histogram<T>) -> Option<(T, T)> {
        if !self.enabled {
            return None;
        }
        let center = hist.log_scale();
        let radius = T::from_count(hist.n).powf(self.b);
        Some((center - radius, center + radius))
    }

    fn validate(&self) -> Result<()> {
        if self.enabled && !(self.b > T::zero() && self.b < T::c(0.5)) {
            return Err(HtfError::InvalidArgument(format!(
                "box exponent b must lie in (0, 1/2), got {}",
                self.b
            )));
        }
        Ok(())
    }
}

impl<T: Scalar> Default for BoxSpec<T> {
    fn default() -> Self {
        Self::with_exponent(T::c(0.25))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions<T> {
    /// KKT tolerance per observation; the effective threshold is `tol * n`.
    pub tol: T,
    pub max_iters: usize,
    #[serde(default)]
    pub l1_method: L1Method,
    /// Initial augmented-Lagrangian weight; `None` means `max(tau, 1)`.
    pub admm_rho: Option<T>,
    pub newton_inner_tol: T,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::c(1e-6),
            max_iters: 5000,
            l1_method: L1Method::Barrier,
            admm_rho: None,
            newton_inner_tol: T::c(1e-12),
        }
    }
}

impl<T: Scalar> SolverOptions<T> {
    fn validate(&self) -> Result<()> {
        if !(self.tol > T::zero()) {
            return Err(HtfError::InvalidArgument("tol must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(HtfError::InvalidArgument(
                "max_iters must be at least 1".into(),
            ));
        }
        if let Some(rho) = self.admm_rho {
            if !(rho > T::zero()) {
                return Err(HtfError::InvalidArgument(
                    "admm_rho must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    pub(crate) fn effective_tol(&self, n: u64) -> T {
        self.tol * T::from_count(n.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult<T> {
    pub theta: Vec<T>,
    /// Poisson negative log-likelihood part of `objective`.
    pub nll: T,
    pub objective: T,
    pub kkt_residual: T,
    pub active_diffs: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Poisson negative log-likelihood `Σ exp(θ_j) - x_j θ_j`.
pub fn poisson_nll<T: Scalar>(theta: &[T], counts: &[u64]) -> Result<T> {
    check_len(theta.len(), counts.len())?;
    Ok(nll_unchecked(theta, counts))
}

pub(crate) fn nll_unchecked<T: Scalar>(theta: &[T], counts: &[u64]) -> T {
    theta
        .iter()
        .zip(counts)
        .map(|(&t, &x)| {
            // 0 * (-inf) would poison the sum for empty bins
            if x == 0 {
                t.exp()
            } else {
                t.exp() - T::from_count(x) * t
            }
        })
        .sum()
}

fn penalty_value<T: Scalar>(op: &DiffOperator, theta: &[T], norm: Penalty) -> T {
    let d = op.apply_unchecked(theta);
    match norm {
        Penalty::L1 => d.iter().map(|v| v.abs()).sum(),
        Penalty::L2Sq => d.iter().map(|&v| v * v).sum(),
    }
}

/// Full objective `l(θ) + tau * P(Δθ)`.
pub fn objective<T: Scalar>(hist: &Histogram<T>, pen: &PenaltySpec<T>, theta: &[T]) -> Result<T> {
    check_len(hist.num_bins(), theta.len())?;
    let op = DiffOperator::new(pen.k + 1, hist.num_bins())?;
    Ok(objective_with(&op, &hist.counts, pen, theta))
}

pub(crate) fn objective_with<T: Scalar>(
    op: &DiffOperator,
    counts: &[u64],
    pen: &PenaltySpec<T>,
    theta: &[T],
) -> T {
    let l = nll_unchecked(theta, counts);
    if pen.tau == T::zero() {
        return l;
    }
    l + pen.tau * penalty_value(op, theta, pen.norm)
}

/// Gradient of the smooth objective `l(θ) + tau ‖Δθ‖₂²`:
/// `exp(θ) - x + 2 tau ΔᵀΔθ`.
pub fn l2sq_gradient<T: Scalar>(
    hist: &Histogram<T>,
    k: usize,
    tau: T,
    theta: &[T],
) -> Result<Vec<T>> {
    check_len(hist.num_bins(), theta.len())?;
    let op = DiffOperator::new(k + 1, hist.num_bins())?;
    let dd = op.apply_transpose_unchecked(&op.apply_unchecked(theta));
    Ok(theta
        .iter()
        .zip(&hist.counts)
        .zip(dd)
        .map(|((&t, &x), v)| t.exp() - T::from_count(x) + T::c(2.0) * tau * v)
        .collect())
}

/// Number of differences with `|(Δθ)_i| > 1e-6 * max(1, ‖Δθ‖_∞)`.
pub fn count_active_diffs<T: Scalar>(op: &DiffOperator, theta: &[T]) -> usize {
    let d = op.apply_unchecked(theta);
    let thr = active_threshold(&d);
    d.iter().filter(|v| v.abs() > thr).count()
}

pub(crate) fn active_threshold<T: Scalar>(diffs: &[T]) -> T {
    let big = diffs.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    T::c(1e-6) * big.max(T::one())
}

/// Fits the penalized Poisson model from the default starting point
/// `θ_j = log(x_j + 1/2)`.
pub fn fit<T: Scalar>(
    hist: &Histogram<T>,
    pen: &PenaltySpec<T>,
    bx: &BoxSpec<T>,
    opts: &SolverOptions<T>,
) -> Result<FitResult<T>> {
    fit_from(hist, pen, bx, opts, None)
}

/// As [`fit`], but starting from `init` when given (warm start).
pub fn fit_from<T: Scalar>(
    hist: &Histogram<T>,
    pen: &PenaltySpec<T>,
    bx: &BoxSpec<T>,
    opts: &SolverOptions<T>,
    init: Option<&[T]>,
) -> Result<FitResult<T>> {
    let d = hist.num_bins();
    if pen.k + 1 >= d {
        return Err(HtfError::Dimension(format!(
            "order-{} differences need more than {} bins, got {d}",
            pen.k + 1,
            pen.k + 1
        )));
    }
    if !(pen.tau >= T::zero()) || !pen.tau.is_finite() {
        return Err(HtfError::InvalidArgument(format!(
            "tau must be finite and nonnegative, got {}",
            pen.tau
        )));
    }
    bx.validate()?;
    opts.validate()?;
    if let Some(init) = init {
        check_len(d, init.len())?;
    }
    let bounds = bx.bounds(hist);
    if pen.tau == T::zero() && bounds.is_none() && hist.counts.iter().any(|&c| c == 0) {
        return Err(HtfError::Unbounded(
            "tau = 0 without a box constraint diverges on empty bins".into(),
        ));
    }
    let op = DiffOperator::new(pen.k + 1, d)?;
    let problem = Problem {
        op: &op,
        counts: &hist.counts,
        n: hist.n,
        tau: pen.tau,
        bounds,
        opts,
    };

    let theta0: Vec<T> = match init {
        Some(t) => t.to_vec(),
        None => hist
            .counts
            .iter()
            .map(|&c| (T::from_count(c) + T::c(0.5)).ln())
            .collect(),
    };
    let theta0 = problem.clip(theta0);

    let (theta, iterations) = if pen.tau == T::zero() {
        (problem.unpenalized(), 0)
    } else {
        match pen.norm {
            Penalty::L1 => match opts.l1_method {
                L1Method::Barrier => barrier::solve(&problem),
                L1Method::Admm => admm::solve(&problem, theta0),
            },
            Penalty::L2Sq => smooth::solve(&problem, theta0),
        }
    };

    let kkt_residual = kkt_residual(&op, &hist.counts, &theta, pen.tau, pen.norm, bounds);
    let nll = nll_unchecked(&theta, &hist.counts);
    let objective = objective_with(&op, &hist.counts, pen, &theta);
    let tol = opts.effective_tol(hist.n);
    let converged = kkt_residual <= tol && objective.is_finite();
    Ok(FitResult {
        active_diffs: count_active_diffs(&op, &theta),
        theta,
        nll,
        objective,
        kkt_residual,
        iterations,
        converged,
    })
}

/// Everything the individual algorithms need, borrowed from the caller.
pub(crate) struct Problem<'a, T> {
    pub op: &'a DiffOperator,
    pub counts: &'a [u64],
    pub n: u64,
    pub tau: T,
    pub bounds: Option<(T, T)>,
    pub opts: &'a SolverOptions<T>,
}

impl<T: Scalar> Problem<'_, T> {
    pub fn clip(&self, mut theta: Vec<T>) -> Vec<T> {
        if let Some((lo, hi)) = self.bounds {
            for t in theta.iter_mut() {
                *t = t.max(lo).min(hi);
            }
        }
        theta
    }

    pub fn x(&self, j: usize) -> T {
        T::from_count(self.counts[j])
    }

    /// Separable closed form for `tau = 0`.
    fn unpenalized(&self) -> Vec<T> {
        let theta = self
            .counts
            .iter()
            .map(|&c| {
                if c == 0 {
                    T::neg_infinity()
                } else {
                    T::from_count(c).ln()
                }
            })
            .collect();
        self.clip(theta)
    }

    /// Adds the constant that makes `Σ exp(θ_j) = n`. The penalty is blind to
    /// constants, so this never increases the objective. Skipped when a
    /// coordinate sits on a bound or the shifted vector would leave the box.
    pub fn recenter(&self, theta: &mut [T]) {
        let mass: T = theta.iter().map(|t| t.exp()).sum();
        if !(mass > T::zero()) || !mass.is_finite() {
            return;
        }
        let shift = (T::from_count(self.n) / mass).ln();
        if let Some((lo, hi)) = self.bounds {
            if kkt::bound_states(theta, self.bounds)
                .iter()
                .any(|s| *s != kkt::BoundState::Free)
            {
                return;
            }
            let (mn, mx) = theta
                .iter()
                .fold((T::infinity(), T::neg_infinity()), |(a, b), &t| {
                    (a.min(t), b.max(t))
                });
            if mn + shift < lo || mx + shift > hi {
                return;
            }
        }
        for t in theta.iter_mut() {
            *t += shift;
        }
    }
}

#[cfg(test)]
mod tests;
