//! Tuning-parameter selection: the surrogate AIC, the default scale `λ*`
//! for `tau`, and warm-started solution paths over a grid of `tau` values.

use serde::{Deserialize, Serialize};

use crate::binning::Histogram;
use crate::diffops::{DiffOperator, NormKind};
use crate::error::{HtfError, Result};
use crate::scalar::Scalar;
use crate::solver::{fit_from, BoxSpec, FitResult, PenaltySpec, SolverOptions};

/// Which information criterion ranks the path entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AicRule {
    /// `l(θ) + (k + 1) + #active`, with the raw negative log-likelihood.
    #[default]
    Surrogate,
    /// Twice the surrogate, the conventional AIC scaling.
    Doubled,
}

/// Surrogate AIC `l(θ) + (k + 1) + #{i : (Δθ)_i ≠ 0}` of a converged fit.
pub fn aic<T: Scalar>(fit: &FitResult<T>, k: usize) -> Result<T> {
    aic_with(fit, k, AicRule::Surrogate)
}

pub fn aic_with<T: Scalar>(fit: &FitResult<T>, k: usize, rule: AicRule) -> Result<T> {
    if !fit.converged {
        return Err(HtfError::InvalidArgument(
            "AIC of an unconverged fit is undefined".into(),
        ));
    }
    let v = fit.nll + T::from_usize_(k + 1 + fit.active_diffs);
    Ok(match rule {
        AicRule::Surrogate => v,
        AicRule::Doubled => T::c(2.0) * v,
    })
}

/// Default penalty scale `λ* = n ‖(Δ^{(k+1)})⁺‖ / D`.
pub fn lambda_star<T: Scalar>(n: u64, d: usize, k: usize, norm: NormKind) -> Result<T> {
    let op = DiffOperator::new(k + 1, d)?;
    let p: T = op.pinv_norm(norm);
    Ok(T::from_count(n) * p / T::from_usize_(d))
}

/// `count` values log-spaced over `[λ*/100, 100 λ*]`, descending.
pub fn dense_path_grid<T: Scalar>(lstar: T, count: usize) -> Result<Vec<T>> {
    check_lstar(lstar)?;
    if count < 2 {
        return Err(HtfError::InvalidArgument(format!(
            "a path grid needs at least 2 points, got {count}"
        )));
    }
    let ten = T::c(10.0);
    let last = T::from_usize_(count - 1);
    Ok((0..count)
        .map(|i| {
            let e = T::c(2.0) - T::c(4.0) * T::from_usize_(i) / last;
            lstar * ten.powf(e)
        })
        .collect())
}

/// The five-point grid `λ* × {1/100, 1/10, 1, 10, 100}`, ascending.
pub fn default_grid<T: Scalar>(lstar: T) -> Result<Vec<T>> {
    let mut g = dense_path_grid(lstar, 5)?;
    g.reverse();
    Ok(g)
}

fn check_lstar<T: Scalar>(lstar: T) -> Result<()> {
    if !(lstar > T::zero()) || !lstar.is_finite() {
        return Err(HtfError::InvalidArgument(format!(
            "lambda* must be positive and finite, got {lstar}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEntry<T> {
    pub tau: T,
    pub fit: FitResult<T>,
    /// `None` when the fit did not converge; such entries are never selected.
    pub aic: Option<T>,
}

/// Fits along a descending `tau` grid. `selected` indexes the AIC minimizer;
/// among tied minimizers the largest `tau` (first in order) wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathResult<T> {
    pub k: usize,
    pub entries: Vec<PathEntry<T>>,
    pub selected: usize,
}

impl<T: Scalar> PathResult<T> {
    pub fn best(&self) -> &PathEntry<T> {
        &self.entries[self.selected]
    }
}

/// ℓ1 path over `taus` (non-increasing), each fit warm-started from the
/// previous one.
pub fn fit_path<T: Scalar>(
    hist: &Histogram<T>,
    k: usize,
    taus: &[T],
    bx: &BoxSpec<T>,
    opts: &SolverOptions<T>,
) -> Result<PathResult<T>> {
    fit_path_with(hist, k, taus, bx, opts, AicRule::Surrogate)
}

pub fn fit_path_with<T: Scalar>(
    hist: &Histogram<T>,
    k: usize,
    taus: &[T],
    bx: &BoxSpec<T>,
    opts: &SolverOptions<T>,
    rule: AicRule,
) -> Result<PathResult<T>> {
    if taus.is_empty() {
        return Err(HtfError::InvalidArgument("tau grid is empty".into()));
    }
    if taus.iter().any(|&t| !(t > T::zero()) || !t.is_finite()) {
        return Err(HtfError::InvalidArgument(
            "tau values must be positive and finite".into(),
        ));
    }
    if taus.windows(2).any(|w| w[1] > w[0]) {
        return Err(HtfError::InvalidArgument(
            "tau grid must be sorted descending".into(),
        ));
    }

    let mut entries: Vec<PathEntry<T>> = Vec::with_capacity(taus.len());
    let mut warm: Option<Vec<T>> = None;
    for &tau in taus {
        let fit = fit_from(hist, &PenaltySpec::l1(k, tau), bx, opts, warm.as_deref())?;
        let aic = aic_with(&fit, k, rule).ok();
        if fit.converged {
            warm = Some(fit.theta.clone());
        }
        entries.push(PathEntry { tau, fit, aic });
    }

    let mut selected: Option<(usize, T)> = None;
    for (i, e) in entries.iter().enumerate() {
        if let Some(a) = e.aic {
            if selected.is_none_or(|(_, best)| a < best) {
                selected = Some((i, a));
            }
        }
    }
    let (selected, _) = selected.ok_or(HtfError::PathFailure {
        attempted: taus.len(),
    })?;
    Ok(PathResult {
        k,
        entries,
        selected,
    })
}
