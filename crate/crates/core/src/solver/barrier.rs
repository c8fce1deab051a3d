//! Log-barrier method on the dual of the ℓ1 problem.
//!
//! With `s = x - Δᵀu` the dual is
//!
//! ```text
//! minimize  Σ_j h(s_j)   subject to  |u_i| <= tau
//! ```
//!
//! where `h` is the convex conjugate of `θ ↦ exp(θ)` restricted to the box:
//! `s log s - s` between `exp(lo)` and `exp(hi)`, extended linearly outside,
//! so `h'(s) = clip(log s, lo, hi)` recovers θ. Without a box a finite floor
//! far below any plausible solution stands in for `lo`. Each Newton step is
//! one banded solve with `Δ diag(h'') Δᵀ` plus the barrier diagonal. After
//! every barrier stage the sparsity pattern is handed to the polishing step,
//! which certifies the exact solution.

use crate::scalar::Scalar;

use super::kkt::kkt_residual;
use super::polish::{certify, fixed_of, pattern_of, refine};
use super::{Penalty, Problem};

const MU: f64 = 10.0;
const MAX_STAGES: usize = 30;
const MAX_NEWTON: usize = 60;
/// Distances from a bound, relative to the box width, below which a
/// coordinate is tried as pinned.
const SNAP: [f64; 2] = [1e-6, 1e-3];
/// Distances of the artificial floor below `log n` when no box is set,
/// tried in order until one certifies. A deep floor makes `h''` stiff.
const FLOORS: [f64; 2] = [20.0, 40.0];

struct Conj<T> {
    lo: T,
    hi: T,
    elo: T,
    ehi: T,
}

impl<T: Scalar> Conj<T> {
    fn h(&self, s: T) -> T {
        if s < self.elo {
            s * self.lo - self.elo
        } else if s > self.ehi {
            s * self.hi - self.ehi
        } else {
            s * s.ln() - s
        }
    }

    fn h1(&self, s: T) -> T {
        if s < self.elo {
            self.lo
        } else if s > self.ehi {
            self.hi
        } else {
            s.ln()
        }
    }

    fn h2(&self, s: T) -> T {
        if s < self.elo || s > self.ehi {
            T::zero()
        } else {
            T::one() / s
        }
    }
}

pub(crate) fn solve<T: Scalar>(p: &Problem<'_, T>) -> (Vec<T>, usize) {
    if let Some((lo, hi)) = p.bounds {
        let (theta, steps, _) = solve_within(p, lo, hi);
        return (theta, steps);
    }
    let ln_n = T::from_count(p.n).ln();
    let mut total = 0;
    let mut best: Option<(Vec<T>, T)> = None;
    for floor in FLOORS {
        let (theta, steps, res) = solve_within(p, ln_n - T::c(floor), T::infinity());
        total += steps;
        if res <= p.opts.effective_tol(p.n) {
            return (theta, total);
        }
        if best.as_ref().is_none_or(|b| res < b.1) {
            best = Some((theta, res));
        }
    }
    (best.expect("at least one floor is tried").0, total)
}

/// One barrier run with `h'` clipped to `[lo, hi]`; also returns the KKT
/// residual of the returned point.
fn solve_within<T: Scalar>(p: &Problem<'_, T>, lo: T, hi: T) -> (Vec<T>, usize, T) {
    let op = p.op;
    let r = op.rows();
    let tau = p.tau;
    let tol = p.opts.effective_tol(p.n);
    let n = T::from_count(p.n);
    let conj = Conj {
        lo,
        hi,
        elo: lo.exp(),
        ehi: hi.exp(),
    };
    let x: Vec<T> = (0..op.dim()).map(|j| p.x(j)).collect();
    let all: Vec<usize> = (0..r).collect();

    let s_of = |u: &[T]| -> Vec<T> {
        let du = op.apply_transpose_unchecked(u);
        x.iter().zip(du).map(|(&a, b)| a - b).collect()
    };
    let barrier = |u: &[T], t: T| -> T {
        let mut acc = t * s_of(u).into_iter().map(|s| conj.h(s)).sum::<T>();
        for &ui in u {
            let (a, b) = (tau - ui, tau + ui);
            if !(a > T::zero() && b > T::zero()) {
                return T::infinity();
            }
            acc -= a.ln() + b.ln();
        }
        acc
    };
    let kkt = |th: &[T]| kkt_residual(op, p.counts, th, tau, Penalty::L1, p.bounds);

    let mut u = vec![T::zero(); r];
    let mut t = T::c(2.0) * T::from_usize_(r) / n.max(T::one());
    let gap_floor = T::c(1e-6) * tol;
    let mut best: Option<(Vec<T>, T)> = None;
    let mut tried: Vec<(Vec<i8>, Vec<Option<T>>)> = Vec::new();
    let mut steps = 0usize;

    for _ in 0..MAX_STAGES {
        let mut f = barrier(&u, t);
        for _ in 0..MAX_NEWTON {
            if steps >= p.opts.max_iters {
                break;
            }
            let s = s_of(&u);
            let g1: Vec<T> = s.iter().map(|&v| conj.h1(v)).collect();
            let w: Vec<T> = s.iter().map(|&v| t * conj.h2(v)).collect();
            let dg = op.apply_unchecked(&g1);
            let mut grad = vec![T::zero(); r];
            let mut bdiag = vec![T::zero(); r];
            for i in 0..r {
                let (a, b) = (T::one() / (tau - u[i]), T::one() / (tau + u[i]));
                grad[i] = -t * dg[i] + a - b;
                bdiag[i] = a * a + b * b;
            }
            let mut h = op.weighted_row_gram(&all, &w);
            h.add_diag(&bdiag);
            let Some(chol) = h.cholesky_shifted() else {
                break;
            };
            let mut du: Vec<T> = grad.iter().map(|&g| -g).collect();
            chol.solve_in_place(&mut du);
            let dec = -grad.iter().zip(&du).map(|(&a, &b)| a * b).sum::<T>();
            steps += 1;
            if !(dec > T::c(1e-10)) {
                break;
            }
            let mut step = T::one();
            for (&ui, &di) in u.iter().zip(&du) {
                if di > T::zero() {
                    step = step.min(T::c(0.99) * (tau - ui) / di);
                } else if di < T::zero() {
                    step = step.min(T::c(0.99) * (tau + ui) / -di);
                }
            }
            let mut accepted = false;
            while step > T::c(1e-14) {
                let trial: Vec<T> = u.iter().zip(&du).map(|(&a, &b)| a + step * b).collect();
                let ft = barrier(&trial, t);
                if ft.is_finite() && ft <= f - T::c(1e-4) * step * dec {
                    u = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
                step = step / T::c(2.0);
            }
            if !accepted {
                break;
            }
        }
        let theta: Vec<T> = s_of(&u).into_iter().map(|v| conj.h1(v)).collect();
        let by_dual: Vec<i8> = u
            .iter()
            .map(|&ui| {
                if tau - ui.abs() > T::c(1e-3) * tau {
                    0
                } else if ui > T::zero() {
                    1
                } else {
                    -1
                }
            })
            .collect();
        let mut patterns = vec![pattern_of(p, &theta), (by_dual, fixed_of(p, &theta))];
        if let Some((blo, bhi)) = p.bounds {
            // the iterate only approaches a bound asymptotically
            for rel in SNAP {
                let eps = T::c(rel) * (bhi - blo);
                let snapped: Vec<T> = theta
                    .iter()
                    .map(|&v| {
                        if v <= blo + eps {
                            blo
                        } else if v >= bhi - eps {
                            bhi
                        } else {
                            v
                        }
                    })
                    .collect();
                patterns.push(pattern_of(p, &snapped));
            }
        }
        for pat in patterns {
            if tried.contains(&pat) {
                continue;
            }
            match certify(p, &theta, &pat.0, &pat.1, tol) {
                Ok(sol) => {
                    let rc = kkt(&sol);
                    return (sol, steps, rc);
                }
                Err(Some((cand, rc))) => {
                    if best.as_ref().is_none_or(|b| rc < b.1) {
                        best = Some((cand, rc));
                    }
                }
                Err(None) => {}
            }
            tried.push(pat);
        }

        // the raw iterate only counts when no pattern certifies
        let mut plain = theta.clone();
        p.recenter(&mut plain);
        let rp = kkt(&plain);
        if rp <= tol {
            let sol = refine(p, plain, tol);
            let rc = kkt(&sol);
            return (sol, steps, rc);
        }
        if best.as_ref().is_none_or(|b| rp < b.1) {
            best = Some((plain, rp));
        }

        if steps >= p.opts.max_iters || T::c(2.0) * T::from_usize_(r) / t < gap_floor {
            break;
        }
        t *= T::c(MU);
    }
    let (theta, rc) = best.expect("at least one stage runs");
    (theta, steps, rc)
}
