use crate::banded::banded_lstsq;
use crate::diffops::DiffOperator;
use crate::scalar::Scalar;

use super::{active_threshold, Penalty};

const MAX_ACTIVE_SET_ROUNDS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BoundState {
    Free,
    Lower,
    Upper,
}

pub(crate) fn bound_states<T: Scalar>(theta: &[T], bounds: Option<(T, T)>) -> Vec<BoundState> {
    match bounds {
        None => vec![BoundState::Free; theta.len()],
        Some((lo, hi)) => {
            let eps = T::c(1e-10) * T::one().max(lo.abs()).max(hi.abs());
            theta
                .iter()
                .map(|&t| {
                    if t <= lo + eps {
                        BoundState::Lower
                    } else if t >= hi - eps {
                        BoundState::Upper
                    } else {
                        BoundState::Free
                    }
                })
                .collect()
        }
    }
}

/// Stationarity violation of `v` after absorbing box multipliers of the
/// correct sign.
fn box_residual<T: Scalar>(v: &[T], states: &[BoundState]) -> T {
    v.iter()
        .zip(states)
        .map(|(&g, s)| match s {
            BoundState::Free => g.abs(),
            BoundState::Upper => g.max(T::zero()),
            BoundState::Lower => (-g).max(T::zero()),
        })
        .fold(T::zero(), T::max)
}

/// Infinity-norm KKT residual of `theta`.
///
/// For the ℓ1 penalty the subgradient on differences above the activity
/// threshold is pinned to their sign; on the rest it is fitted by least
/// squares and clipped to `[-1, 1]`, so the returned value is an upper bound
/// on the smallest achievable residual. For the squared ℓ2 penalty this is
/// the projected gradient norm.
pub fn kkt_residual<T: Scalar>(
    op: &DiffOperator,
    counts: &[u64],
    theta: &[T],
    tau: T,
    norm: Penalty,
    bounds: Option<(T, T)>,
) -> T {
    if theta.iter().any(|t| t.is_nan() || *t == T::infinity()) {
        return T::infinity();
    }
    let states = bound_states(theta, bounds);
    let r: Vec<T> = theta
        .iter()
        .zip(counts)
        .map(|(&t, &x)| t.exp() - T::from_count(x))
        .collect();
    if tau == T::zero() {
        return box_residual(&r, &states);
    }
    match norm {
        Penalty::L2Sq => {
            let dd = op.apply_transpose_unchecked(&op.apply_unchecked(theta));
            let g: Vec<T> = r
                .iter()
                .zip(&dd)
                .map(|(&a, &b)| a + T::c(2.0) * tau * b)
                .collect();
            box_residual(&g, &states)
        }
        Penalty::L1 => l1_certificate(op, theta, &r, tau, &states, T::zero()).0,
    }
}

/// ℓ1 KKT residual together with the stationarity vector `∇ + tau Δᵀ s`
/// that attains it; entries on bound coordinates are the box multipliers.
/// The search stops early once the residual is at most `target`.
pub(crate) fn l1_stationarity<T: Scalar>(
    op: &DiffOperator,
    counts: &[u64],
    theta: &[T],
    tau: T,
    bounds: Option<(T, T)>,
    target: T,
) -> (T, Vec<T>) {
    let states = bound_states(theta, bounds);
    let r: Vec<T> = theta
        .iter()
        .zip(counts)
        .map(|(&t, &x)| t.exp() - T::from_count(x))
        .collect();
    l1_certificate(op, theta, &r, tau, &states, target)
}

fn l1_certificate<T: Scalar>(
    op: &DiffOperator,
    theta: &[T],
    r: &[T],
    tau: T,
    states: &[BoundState],
    target: T,
) -> (T, Vec<T>) {
    let diffs = op.apply_unchecked(theta);
    let thr = active_threshold(&diffs);
    let mut s = vec![T::zero(); diffs.len()];
    let mut inactive = Vec::new();
    for (i, &d) in diffs.iter().enumerate() {
        if d.abs() > thr {
            s[i] = d.signum();
        } else {
            inactive.push(i);
        }
    }
    let residual = |s: &[T]| -> (Vec<T>, T) {
        let full = op.apply_transpose_unchecked(s);
        let v: Vec<T> = r.iter().zip(&full).map(|(&a, &b)| a + tau * b).collect();
        let res = box_residual(&v, states);
        (v, res)
    };
    if inactive.is_empty() {
        let (v, res) = residual(&s);
        return (res, v);
    }
    // Bounded least squares for s_I, by an active-set loop. Rows of free
    // coordinates are always fitted; a bound coordinate's row joins when its
    // multiplier has the wrong sign and leaves when the fit would rather give
    // it slack. Entries leaving [-1, 1] are clamped and released the same
    // way. Every iterate is a valid subgradient, so the smallest residual
    // seen counts.
    let d = theta.len();
    let mut clamp = vec![0i8; inactive.len()];
    let mut pinned = vec![false; d];
    let mut best = (T::infinity(), Vec::new());
    let eps = T::c(1e-12) * (T::one() + tau);
    for _ in 0..MAX_ACTIVE_SET_ROUNDS {
        let unknown: Vec<usize> = inactive
            .iter()
            .zip(&clamp)
            .filter(|(_, &c)| c == 0)
            .map(|(&i, _)| i)
            .collect();
        for (&i, &c) in inactive.iter().zip(&clamp) {
            s[i] = T::c(c as f64);
        }
        // w = r / tau + Δᵀ s over the known entries
        let mut w = op.apply_transpose_unchecked(&s);
        for (wj, &rj) in w.iter_mut().zip(r) {
            *wj += rj / tau;
        }
        let used: Vec<usize> = (0..d)
            .filter(|&j| states[j] == BoundState::Free || pinned[j])
            .collect();
        let mut cursor = 0;
        let rows: Vec<_> = used
            .iter()
            .map(|&j| {
                let (lo, v) = op.transpose_row(&unknown, j, &mut cursor);
                (lo, v, -w[j])
            })
            .collect();
        let fitted = banded_lstsq(unknown.len(), op.order(), rows);
        let mut changed = false;
        let mut k = 0;
        for (c, &i) in clamp.iter_mut().zip(&inactive) {
            if *c != 0 {
                continue;
            }
            let si = fitted[k];
            k += 1;
            s[i] = si.max(-T::one()).min(T::one());
            if si.abs() > T::one() {
                *c = if si > T::zero() { 1 } else { -1 };
                changed = true;
            }
        }
        let (v, res) = residual(&s);
        if res < best.0 {
            best = (res, v.clone());
        }
        if best.0 <= target {
            break;
        }
        for j in 0..d {
            let wrong = match states[j] {
                BoundState::Free => false,
                BoundState::Upper => v[j] > T::zero(),
                BoundState::Lower => v[j] < T::zero(),
            };
            if wrong && !pinned[j] {
                pinned[j] = true;
                changed = true;
            }
        }
        if changed {
            continue;
        }
        // release the constraint whose multiplier points the wrong way most
        let mut release: Option<(T, usize, bool)> = None;
        for j in 0..d {
            let slack = match states[j] {
                BoundState::Free => T::zero(),
                BoundState::Upper => -v[j],
                BoundState::Lower => v[j],
            };
            if pinned[j] && slack > eps && release.is_none_or(|b| slack > b.0) {
                release = Some((slack, j, true));
            }
        }
        let vu: Vec<T> = (0..d)
            .map(|j| {
                if states[j] == BoundState::Free || pinned[j] {
                    v[j]
                } else {
                    T::zero()
                }
            })
            .collect();
        let grad = op.apply_unchecked(&vu);
        for (idx, (&i, &c)) in inactive.iter().zip(&clamp).enumerate() {
            let pull = T::c(c as f64) * grad[i] * tau;
            if c != 0 && pull > eps && release.is_none_or(|b| pull > b.0) {
                release = Some((pull, idx, false));
            }
        }
        match release {
            Some((_, j, true)) => pinned[j] = false,
            Some((_, idx, false)) => clamp[idx] = 0,
            None => break,
        }
    }
    best
}
