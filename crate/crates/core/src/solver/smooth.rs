//! Projected Newton for the squared ℓ2 penalty.

use crate::banded::BandedSpd;
use crate::scalar::Scalar;

use super::kkt::kkt_residual;
use super::{Penalty, Problem};

pub(crate) fn solve<T: Scalar>(p: &Problem<'_, T>, theta0: Vec<T>) -> (Vec<T>, usize) {
    let op = p.op;
    let d = theta0.len();
    let tau = p.tau;
    let two = T::c(2.0);
    // keep iterating past the certificate; Newton is cheap near the optimum
    let target = p.opts.effective_tol(p.n) * T::c(1e-3);

    let f = |th: &[T]| -> T {
        let dth = op.apply_unchecked(th);
        super::nll_unchecked(th, p.counts) + tau * dth.iter().map(|&a| a * a).sum::<T>()
    };
    let mut theta = theta0;
    let mut fv = f(&theta);
    let mut iters = 0;
    for it in 1..=p.opts.max_iters {
        iters = it;
        let e: Vec<T> = theta.iter().map(|t| t.exp()).collect();
        let mut g = op.apply_transpose_unchecked(&op.apply_unchecked(&theta));
        for j in 0..d {
            g[j] = e[j] - p.x(j) + two * tau * g[j];
        }
        if kkt_residual(op, p.counts, &theta, tau, Penalty::L2Sq, p.bounds) <= target {
            break;
        }

        // coordinates held at a bound by a gradient pointing outward
        let free: Vec<usize> = match p.bounds {
            None => (0..d).collect(),
            Some((lo, hi)) => (0..d)
                .filter(|&j| {
                    !((theta[j] <= lo && g[j] > T::zero()) || (theta[j] >= hi && g[j] < T::zero()))
                })
                .collect(),
        };
        let mut dir = vec![T::zero(); d];
        if !free.is_empty() {
            let mut h = BandedSpd::zeros(d, op.order());
            h.add_diag(&e);
            op.add_normal_matrix(&mut h, two * tau);
            let Some(chol) = h.principal(&free).cholesky() else {
                break;
            };
            let mut rhs: Vec<T> = free.iter().map(|&j| -g[j]).collect();
            chol.solve_in_place(&mut rhs);
            for (&j, &v) in free.iter().zip(&rhs) {
                dir[j] = v;
            }
        }

        let mut t = T::one();
        let mut accepted = false;
        while t > T::c(1e-14) {
            let trial = p.clip(theta.iter().zip(&dir).map(|(&a, &b)| a + t * b).collect());
            let slope: T = trial
                .iter()
                .zip(&theta)
                .zip(&g)
                .map(|((&a, &b), &gj)| gj * (a - b))
                .sum();
            let ft = f(&trial);
            if ft.is_finite() && ft <= fv + T::c(1e-4) * slope {
                theta = trial;
                fv = ft;
                accepted = true;
                break;
            }
            t = t / two;
        }
        if !accepted {
            break;
        }
    }
    let mut shifted = theta.clone();
    p.recenter(&mut shifted);
    if f(&shifted) <= fv {
        theta = shifted;
    }
    (theta, iters)
}
