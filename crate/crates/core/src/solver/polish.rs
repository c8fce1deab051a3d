//! Exact re-solve of the ℓ1 problem on a guessed sparsity pattern.
//!
//! With the signs of the nonzero differences fixed, the zero differences
//! imposed as linear equalities and the box-active coordinates frozen, the
//! remaining problem is smooth with a diagonal Hessian. Each Newton step then
//! reduces to a weighted banded least-squares problem in the multipliers of
//! `Δ_I θ = 0`, solved by Givens QR so that high difference orders on long
//! grids stay accurate.

use crate::banded::BandedQr;
use crate::scalar::Scalar;

use super::kkt::{bound_states, kkt_residual, l1_stationarity, BoundState};
use super::{Penalty, PenaltySpec, Problem};

const MAX_NEWTON: usize = 100;
const MAX_ROUNDS: usize = 4;
const MAX_REPAIRS: usize = 4;

/// `signs[i]` is `+1`/`-1` for an active difference, `0` for one held at
/// zero; `fixed[j]` pins coordinate `j`. Returns `None` when the pattern is
/// degenerate (dependent constraints) or Newton fails.
pub(crate) fn polish<T: Scalar>(
    p: &Problem<'_, T>,
    theta0: &[T],
    signs: &[i8],
    fixed: &[Option<T>],
) -> Option<Vec<T>> {
    let mut fixed = fixed.to_vec();
    let mut theta = theta0.to_vec();
    for _ in 0..MAX_ROUNDS {
        theta = solve_pattern(p, &theta, signs, &fixed)?;
        let Some((lo, hi)) = p.bounds else {
            return Some(theta);
        };
        let mut violated = false;
        for (j, t) in theta.iter_mut().enumerate() {
            if fixed[j].is_none() && (*t < lo || *t > hi) {
                let b = if *t < lo { lo } else { hi };
                fixed[j] = Some(b);
                *t = b;
                violated = true;
            }
        }
        if !violated {
            return Some(theta);
        }
    }
    None
}

fn solve_pattern<T: Scalar>(
    p: &Problem<'_, T>,
    theta0: &[T],
    signs: &[i8],
    fixed: &[Option<T>],
) -> Option<Vec<T>> {
    let op = p.op;
    let m = op.order();
    let d = op.dim();
    let mut theta = theta0.to_vec();
    for (t, f) in theta.iter_mut().zip(fixed) {
        if let Some(v) = f {
            *t = *v;
        }
    }
    let free: Vec<usize> = (0..d).filter(|&j| fixed[j].is_none()).collect();
    if free.is_empty() {
        return Some(theta);
    }
    let rows: Vec<usize> = (0..op.rows())
        .filter(|&i| signs[i] == 0 && (i..=i + m).any(|c| fixed[c].is_none()))
        .collect();
    let s: Vec<T> = signs.iter().map(|&v| T::c(v as f64)).collect();
    let lin: Vec<T> = op
        .apply_transpose_unchecked(&s)
        .into_iter()
        .map(|v| v * p.tau)
        .collect();

    // rows of Δ_Iᵀ restricted to the free coordinates
    let pattern: Vec<(usize, Vec<T>)> = {
        let mut cursor = 0;
        free.iter()
            .map(|&j| op.transpose_row(&rows, j, &mut cursor))
            .collect()
    };
    let expand = |nu: &[T]| -> Vec<T> {
        let mut full = vec![T::zero(); op.rows()];
        for (&i, &v) in rows.iter().zip(nu) {
            full[i] = v;
        }
        op.apply_transpose_unchecked(&full)
    };
    let gram = (!rows.is_empty()).then(|| {
        let mut qr = BandedQr::new(rows.len(), m);
        for (lo, v) in &pattern {
            qr.push_row(*lo, v.clone(), T::zero());
        }
        qr
    });
    // least-norm move of the free coordinates onto {Δ_I θ = 0}
    let project = |theta: &mut Vec<T>| {
        let Some(qr) = &gram else { return };
        for _ in 0..2 {
            let full = op.apply_unchecked(theta);
            let c: Vec<T> = rows.iter().map(|&i| full[i]).collect();
            let corr = expand(&qr.solve_normal(&c));
            for &j in &free {
                theta[j] -= corr[j];
            }
        }
    };

    let phi = |th: &[T]| -> T {
        free.iter()
            .map(|&j| th[j].exp() - p.x(j) * th[j] + lin[j] * th[j])
            .sum()
    };

    for _ in 0..MAX_NEWTON {
        project(&mut theta);
        let f = phi(&theta);
        let e: Vec<T> = theta.iter().map(|t| t.exp()).collect();
        if free
            .iter()
            .any(|&j| !(e[j] > T::zero()) || !e[j].is_finite())
        {
            return None;
        }
        let g: Vec<T> = (0..d).map(|j| e[j] - p.x(j) + lin[j]).collect();
        let back = if rows.is_empty() {
            vec![T::zero(); d]
        } else {
            // ν = argmin ‖H^{-1/2} (g + Δ_Iᵀ ν)‖ over the free coordinates
            let mut qr = BandedQr::new(rows.len(), m);
            for (&j, (lo, v)) in free.iter().zip(&pattern) {
                let w = e[j].sqrt().recip();
                qr.push_row(*lo, v.iter().map(|&a| a * w).collect(), -w * g[j]);
            }
            expand(&qr.solve())
        };
        let mut dir = vec![T::zero(); d];
        for &j in &free {
            dir[j] = -(g[j] + back[j]) / e[j];
        }
        let dec: T = -free.iter().map(|&j| g[j] * dir[j]).sum::<T>();
        if dec.is_nan() {
            return None;
        }
        // rounding can leave a tiny negative decrement at the optimum
        if dec / T::c(2.0) <= p.opts.newton_inner_tol * (T::one() + f.abs()) {
            break;
        }
        let mut t = T::one();
        let mut accepted = false;
        while t > T::c(1e-14) {
            let trial: Vec<T> = theta.iter().zip(&dir).map(|(&a, &b)| a + t * b).collect();
            let ft = phi(&trial);
            if ft.is_finite() && ft <= f - T::c(1e-4) * t * dec {
                theta = trial;
                accepted = true;
                break;
            }
            t = t / T::c(2.0);
        }
        if !accepted {
            break;
        }
    }
    project(&mut theta);
    if theta.iter().all(|t| t.is_finite()) {
        Some(theta)
    } else {
        None
    }
}

/// Sign pattern of the differences above the activity threshold, and the
/// coordinates sitting on a bound.
pub(crate) fn pattern_of<T: Scalar>(p: &Problem<'_, T>, theta: &[T]) -> (Vec<i8>, Vec<Option<T>>) {
    let diffs = p.op.apply_unchecked(theta);
    let thr = super::active_threshold(&diffs);
    let signs = diffs
        .iter()
        .map(|&a| {
            if a > thr {
                1
            } else if a < -thr {
                -1
            } else {
                0
            }
        })
        .collect();
    (signs, fixed_of(p, theta))
}

pub(crate) fn fixed_of<T: Scalar>(p: &Problem<'_, T>, theta: &[T]) -> Vec<Option<T>> {
    bound_states(theta, p.bounds)
        .into_iter()
        .map(|s| match (s, p.bounds) {
            (BoundState::Lower, Some((lo, _))) => Some(lo),
            (BoundState::Upper, Some((_, hi))) => Some(hi),
            _ => None,
        })
        .collect()
}

fn l1_kkt<T: Scalar>(p: &Problem<'_, T>, theta: &[T]) -> T {
    kkt_residual(p.op, p.counts, theta, p.tau, Penalty::L1, p.bounds)
}

/// Polishes on a pattern and returns the result only if it is certified.
/// A failed certificate is used to repair the pattern a few times: pinned
/// coordinates whose box multiplier has the wrong sign are released, and
/// active differences whose sign the polished point contradicts are zeroed.
pub(crate) fn certify<T: Scalar>(
    p: &Problem<'_, T>,
    theta: &[T],
    signs: &[i8],
    fixed: &[Option<T>],
    tol: T,
) -> Result<Vec<T>, Option<(Vec<T>, T)>> {
    let mut signs = signs.to_vec();
    let mut fixed = fixed.to_vec();
    let mut best: Option<(Vec<T>, T)> = None;
    for _ in 0..MAX_REPAIRS {
        let Some(mut cand) = polish(p, theta, &signs, &fixed) else {
            break;
        };
        p.recenter(&mut cand);
        let (r, v) = l1_stationarity(p.op, p.counts, &cand, p.tau, p.bounds, tol);
        if r <= tol {
            return Ok(refine(p, cand, tol));
        }
        let states = bound_states(&cand, p.bounds);
        let mut changed = false;
        for (j, st) in states.iter().enumerate() {
            let wrong = match st {
                BoundState::Free => false,
                BoundState::Lower => v[j] < -tol,
                BoundState::Upper => v[j] > tol,
            };
            if wrong {
                // leaving the bound moves every difference through j
                let dir: i64 = if *st == BoundState::Lower { 1 } else { -1 };
                let m = p.op.order();
                for i in j.saturating_sub(m)..=j.min(signs.len() - 1) {
                    if signs[i] == 0 {
                        signs[i] = (dir * p.op.coefficients()[j - i]).signum() as i8;
                        changed = true;
                    }
                }
                if fixed[j].is_some() {
                    fixed[j] = None;
                    changed = true;
                }
            }
        }
        let diffs = p.op.apply_unchecked(&cand);
        for (sg, &dv) in signs.iter_mut().zip(&diffs) {
            if (*sg > 0 && dv < T::zero()) || (*sg < 0 && dv > T::zero()) {
                *sg = 0;
                changed = true;
            }
        }
        if best.as_ref().is_none_or(|b| r < b.1) {
            best = Some((cand, r));
        }
        if !changed {
            break;
        }
    }
    Err(best)
}

/// Re-polishes an accepted iterate on the pattern read off its own
/// differences and keeps whichever certified point has the lower objective.
pub(crate) fn refine<T: Scalar>(p: &Problem<'_, T>, theta: Vec<T>, tol: T) -> Vec<T> {
    let (signs, fixed) = pattern_of(p, &theta);
    let Some(mut cand) = polish(p, &theta, &signs, &fixed) else {
        return theta;
    };
    p.recenter(&mut cand);
    let pen = PenaltySpec::l1(p.op.order() - 1, p.tau);
    let obj = |th: &[T]| super::objective_with(p.op, p.counts, &pen, th);
    if l1_kkt(p, &cand) <= tol && obj(&cand) <= obj(&theta) {
        cand
    } else {
        theta
    }
}
