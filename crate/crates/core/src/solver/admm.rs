//! ADMM for the ℓ1 problem with the splitting `z = Δθ` (and `w = θ` when
//! the box is on).
//!
//! The θ-update is a smooth Poisson problem with a banded quadratic term,
//! solved by damped Newton; the z-update is soft-thresholding and the
//! w-update a projection. ρ is rebalanced every 10 iterations. At the same
//! cadence the sparsity pattern read off `z` is handed to [`polish`], which
//! usually lands on the exact solution long before ADMM itself would.

use crate::banded::BandedSpd;
use crate::scalar::Scalar;

use super::kkt::kkt_residual;
use super::polish::{polish, refine};
use super::{Penalty, Problem};

const CHECK_EVERY: usize = 10;
const MAX_INNER: usize = 50;

fn soft_threshold<T: Scalar>(a: T, k: T) -> T {
    if a > k {
        a - k
    } else if a < -k {
        a + k
    } else {
        T::zero()
    }
}

fn norm2<T: Scalar>(v: impl Iterator<Item = T>) -> T {
    v.map(|x| x * x).sum::<T>().sqrt()
}

pub(crate) fn solve<T: Scalar>(p: &Problem<'_, T>, theta0: Vec<T>) -> (Vec<T>, usize) {
    let op = p.op;
    let tau = p.tau;
    let tol = p.opts.effective_tol(p.n);
    let kkt = |th: &[T]| kkt_residual(op, p.counts, th, tau, Penalty::L1, p.bounds);

    let mut rho = p.opts.admm_rho.unwrap_or_else(|| tau.max(T::one()));
    let mut theta = theta0;
    let mut z = op.apply_unchecked(&theta);
    let mut u = vec![T::zero(); z.len()];
    let mut w = theta.clone();
    let mut v = vec![T::zero(); theta.len()];

    let mut best = (theta.clone(), kkt(&theta));
    let mut tried: Option<(Vec<i8>, Vec<Option<T>>)> = None;

    for it in 1..=p.opts.max_iters {
        let cz: Vec<T> = z.iter().zip(&u).map(|(&a, &b)| a - b).collect();
        let cw: Option<Vec<T>> = p
            .bounds
            .map(|_| w.iter().zip(&v).map(|(&a, &b)| a - b).collect());
        theta = theta_update(p, theta, &cz, cw.as_deref(), rho);

        let dth = op.apply_unchecked(&theta);
        let z_old = std::mem::take(&mut z);
        let kappa = tau / rho;
        z = dth
            .iter()
            .zip(&u)
            .map(|(&a, &b)| soft_threshold(a + b, kappa))
            .collect();
        for i in 0..u.len() {
            u[i] += dth[i] - z[i];
        }
        let mut box_primal = T::zero();
        let mut box_dual = T::zero();
        if let Some((lo, hi)) = p.bounds {
            let w_old = std::mem::take(&mut w);
            w = theta
                .iter()
                .zip(&v)
                .map(|(&a, &b)| (a + b).max(lo).min(hi))
                .collect();
            for j in 0..v.len() {
                v[j] += theta[j] - w[j];
            }
            box_primal = norm2(theta.iter().zip(&w).map(|(&a, &b)| a - b));
            box_dual = rho * norm2(w.iter().zip(&w_old).map(|(&a, &b)| a - b));
        }

        if it % CHECK_EVERY != 0 {
            continue;
        }

        let signs: Vec<i8> = z
            .iter()
            .map(|&a| {
                if a > T::zero() {
                    1
                } else if a < T::zero() {
                    -1
                } else {
                    0
                }
            })
            .collect();
        let fixed: Vec<Option<T>> = match p.bounds {
            None => vec![None; theta.len()],
            Some((lo, hi)) => w
                .iter()
                .map(|&a| {
                    if a <= lo {
                        Some(lo)
                    } else if a >= hi {
                        Some(hi)
                    } else {
                        None
                    }
                })
                .collect(),
        };
        let pattern = (signs, fixed);
        if tried.as_ref() != Some(&pattern) {
            if let Some(mut cand) = polish(p, &theta, &pattern.0, &pattern.1) {
                p.recenter(&mut cand);
                let r = kkt(&cand);
                if r <= tol {
                    return (refine(p, cand, tol), it);
                }
                if r < best.1 {
                    best = (cand, r);
                }
            }
            tried = Some(pattern);
        }

        let mut cand = theta.clone();
        p.recenter(&mut cand);
        let r = kkt(&cand);
        if r <= tol {
            return (refine(p, cand, tol), it);
        }
        if r < best.1 {
            best = (cand, r);
        }

        let primal = norm2(dth.iter().zip(&z).map(|(&a, &b)| a - b)).hypot(box_primal);
        let dz: Vec<T> = z.iter().zip(&z_old).map(|(&a, &b)| a - b).collect();
        let dual = (rho * norm2(op.apply_transpose_unchecked(&dz).into_iter())).hypot(box_dual);
        let ten = T::c(10.0);
        let two = T::c(2.0);
        if primal > ten * dual {
            rho *= two;
            u.iter_mut().for_each(|x| *x /= two);
            v.iter_mut().for_each(|x| *x /= two);
        } else if dual > ten * primal {
            rho /= two;
            u.iter_mut().for_each(|x| *x *= two);
            v.iter_mut().for_each(|x| *x *= two);
        }
    }
    (best.0, p.opts.max_iters)
}

/// Minimizes `Σ(exp θ - xθ) + ρ/2 ‖Δθ - cz‖² [+ ρ/2 ‖θ - cw‖²]` by Newton.
fn theta_update<T: Scalar>(
    p: &Problem<'_, T>,
    mut theta: Vec<T>,
    cz: &[T],
    cw: Option<&[T]>,
    rho: T,
) -> Vec<T> {
    let op = p.op;
    let d = theta.len();
    let half = T::c(0.5);
    let phi = |th: &[T]| -> T {
        let mut acc = super::nll_unchecked(th, p.counts);
        let dth = op.apply_unchecked(th);
        acc += half
            * rho
            * dth
                .iter()
                .zip(cz)
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum::<T>();
        if let Some(cw) = cw {
            acc += half
                * rho
                * th.iter()
                    .zip(cw)
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .sum::<T>();
        }
        acc
    };
    let mut f = phi(&theta);
    for _ in 0..MAX_INNER {
        let e: Vec<T> = theta.iter().map(|t| t.exp()).collect();
        let dth = op.apply_unchecked(&theta);
        let resid: Vec<T> = dth.iter().zip(cz).map(|(&a, &b)| rho * (a - b)).collect();
        let mut g = op.apply_transpose_unchecked(&resid);
        for j in 0..d {
            g[j] += e[j] - p.x(j);
            if let Some(cw) = cw {
                g[j] += rho * (theta[j] - cw[j]);
            }
        }
        let mut h = BandedSpd::zeros(d, op.order());
        let diag: Vec<T> = e
            .iter()
            .map(|&ej| if cw.is_some() { ej + rho } else { ej })
            .collect();
        h.add_diag(&diag);
        op.add_normal_matrix(&mut h, rho);
        let Some(chol) = h.cholesky() else { break };
        let mut dir = g.clone();
        chol.solve_in_place(&mut dir);
        dir.iter_mut().for_each(|x| *x = -*x);
        let dec: T = -g.iter().zip(&dir).map(|(&a, &b)| a * b).sum::<T>();
        if !(dec > T::zero()) || dec * half <= p.opts.newton_inner_tol * (T::one() + f.abs()) {
            break;
        }
        let mut t = T::one();
        let mut accepted = false;
        while t > T::c(1e-14) {
            let trial: Vec<T> = theta.iter().zip(&dir).map(|(&a, &b)| a + t * b).collect();
            let ft = phi(&trial);
            if ft.is_finite() && ft <= f - T::c(1e-4) * t * dec {
                theta = trial;
                f = ft;
                accepted = true;
                break;
            }
            t *= half;
        }
        if !accepted {
            break;
        }
    }
    theta
}
