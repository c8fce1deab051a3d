//! Test-only oracles, independent of the library's solver paths.
#![allow(dead_code)]

use htf::Histogram;

/// Histogram with unit-width bins on `[0, D]` holding `counts`.
pub fn hist_from_counts(counts: &[u64]) -> Histogram<f64> {
    let d = counts.len();
    let edges: Vec<f64> = (0..=d).map(|j| j as f64).collect();
    Histogram {
        centers: edges.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect(),
        edges,
        counts: counts.to_vec(),
        delta: 1.0,
        n: counts.iter().sum(),
    }
}

/// Dense order-`m` difference matrix built by repeated first differencing.
pub fn dense_diff(m: usize, d: usize) -> Vec<Vec<f64>> {
    let mut a: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _ in 0..m {
        a = a
            .windows(2)
            .map(|w| w[0].iter().zip(&w[1]).map(|(x, y)| x - y).collect())
            .collect();
    }
    a
}

pub fn true_objective(counts: &[u64], m: usize, tau: f64, theta: &[f64]) -> f64 {
    let a = dense_diff(m, counts.len());
    let nll: f64 = theta
        .iter()
        .zip(counts)
        .map(|(t, &x)| t.exp() - x as f64 * t)
        .sum();
    let pen: f64 = a
        .iter()
        .map(|row| row.iter().zip(theta).map(|(r, t)| r * t).sum::<f64>().abs())
        .sum();
    nll + tau * pen
}

/// Slow first-order reference solution of the ℓ1 problem.
///
/// The absolute values are replaced by `sqrt(v² + ε²)`; the smoothed problem
/// is minimized by accelerated gradient descent with backtracking and
/// gradient-based restarts, while `ε` is lowered geometrically from 1e-2 to
/// 1e-11. The best point under the exact objective is returned.
pub fn smoothed_l1_oracle(counts: &[u64], m: usize, tau: f64, iters: usize) -> Vec<f64> {
    let d = counts.len();
    let a = dense_diff(m, d);
    let x: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let apply = |t: &[f64]| -> Vec<f64> {
        a.iter()
            .map(|row| row.iter().zip(t).map(|(r, v)| r * v).sum())
            .collect()
    };
    let apply_t = |u: &[f64]| -> Vec<f64> {
        (0..d)
            .map(|j| a.iter().zip(u).map(|(row, ui)| row[j] * ui).sum())
            .collect()
    };
    let smooth_val = |t: &[f64], eps: f64| -> f64 {
        let nll: f64 = t.iter().zip(&x).map(|(ti, xi)| ti.exp() - xi * ti).sum();
        nll + tau
            * apply(t)
                .iter()
                .map(|v| (v * v + eps * eps).sqrt())
                .sum::<f64>()
    };
    let smooth_grad = |t: &[f64], eps: f64| -> Vec<f64> {
        let dv = apply(t);
        let s: Vec<f64> = dv.iter().map(|v| v / (v * v + eps * eps).sqrt()).collect();
        let pt = apply_t(&s);
        (0..d).map(|j| t[j].exp() - x[j] + tau * pt[j]).collect()
    };

    let mut theta: Vec<f64> = x.iter().map(|v| (v + 0.5).ln()).collect();
    let mut best = theta.clone();
    let mut best_val = true_objective(counts, m, tau, &theta);
    let stages: Vec<f64> = (2..=11).map(|e| 10f64.powi(-e)).collect();
    let per_stage = iters / stages.len();
    for &eps in &stages {
        let mut y = theta.clone();
        let mut t_mom: f64 = 1.0;
        let mut step = 1.0;
        for _ in 0..per_stage {
            let g = smooth_grad(&y, eps);
            let fy = smooth_val(&y, eps);
            let gg: f64 = g.iter().map(|v| v * v).sum();
            if gg < 1e-30 {
                break;
            }
            let mut next;
            loop {
                next = y
                    .iter()
                    .zip(&g)
                    .map(|(a, b)| a - step * b)
                    .collect::<Vec<_>>();
                let fn_ = smooth_val(&next, eps);
                if fn_.is_finite() && fn_ <= fy - 0.5 * step * gg {
                    break;
                }
                step *= 0.5;
                if step < 1e-300 {
                    break;
                }
            }
            let t_next = (1.0 + (1.0 + 4.0 * t_mom * t_mom).sqrt()) / 2.0;
            let restart: f64 = g
                .iter()
                .zip(next.iter().zip(&theta))
                .map(|(gi, (a, b))| gi * (a - b))
                .sum();
            if restart > 0.0 {
                t_mom = 1.0;
                y = next.clone();
            } else {
                let beta = (t_mom - 1.0) / t_next;
                y = next
                    .iter()
                    .zip(&theta)
                    .map(|(a, b)| a + beta * (a - b))
                    .collect();
                t_mom = t_next;
            }
            theta = next;
            step *= 1.5;
        }
        let v = true_objective(counts, m, tau, &theta);
        if v < best_val {
            best_val = v;
            best = theta.clone();
        }
    }
    best
}

/// Composite Simpson rule with `intervals` (rounded up to even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let m = intervals + intervals % 2;
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Tabulated CDF by cumulative trapezoid on `points` nodes over `[a, b]`.
pub struct TabulatedCdf {
    a: f64,
    h: f64,
    cum: Vec<f64>,
}

impl TabulatedCdf {
    pub fn new<F: Fn(f64) -> f64>(pdf: F, a: f64, b: f64, points: usize) -> Self {
        let h = (b - a) / (points - 1) as f64;
        let mut cum = vec![0.0; points];
        let mut prev = pdf(a);
        for i in 1..points {
            let cur = pdf(a + i as f64 * h);
            cum[i] = cum[i - 1] + 0.5 * h * (prev + cur);
            prev = cur;
        }
        Self { a, h, cum }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = (x - self.a) / self.h;
        if t <= 0.0 {
            return 0.0;
        }
        let i = t.floor() as usize;
        if i + 1 >= self.cum.len() {
            return *self.cum.last().unwrap();
        }
        let f = t - i as f64;
        self.cum[i] * (1.0 - f) + self.cum[i + 1] * f
    }
}

/// Two-sided Kolmogorov–Smirnov statistic of `sample` against `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}
