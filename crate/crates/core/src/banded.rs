//! Symmetric positive-definite banded matrices and their Cholesky factors.
//!
//! Row `i` stores the lower band `A[i][i-bw..=i]`, left-padded with zeros for
//! the first `bw` rows.

use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub(crate) struct BandedSpd<T> {
    n: usize,
    bw: usize,
    data: Vec<T>,
}

impl<T: Scalar> BandedSpd<T> {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![T::zero(); n * (bw + 1)],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (self.bw - (i - j))
    }

    /// Entry `(i, j)` with `j <= i`; zero outside the band.
    #[cfg(test)]
    pub fn get(&self, i: usize, j: usize) -> T {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        if i - j > self.bw {
            T::zero()
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Adds `v` to entry `(i, j)` (and implicitly its mirror).
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn add_diag(&mut self, d: &[T]) {
        for (i, &v) in d.iter().enumerate() {
            self.add(i, i, v);
        }
    }

    #[cfg(test)]
    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let a = self.data[self.idx(i, j)];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// Principal submatrix on the sorted index set `idx`. Positions in `idx`
    /// are never further apart than the original indices, so the band holds.
    pub fn principal(&self, idx: &[usize]) -> Self {
        let mut out = Self::zeros(idx.len(), self.bw);
        for (p, &ip) in idx.iter().enumerate() {
            for q in (0..=p).rev() {
                let iq = idx[q];
                if ip - iq > self.bw {
                    break;
                }
                let k = out.idx(p, q);
                out.data[k] = self.data[self.idx(ip, iq)];
            }
        }
        out
    }

    /// In-place banded Cholesky `A = L Lᵀ`. Fails on a non-positive pivot.
    pub fn cholesky(mut self) -> Option<BandedCholesky<T>> {
        let n = self.n;
        let bw = self.bw;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = self.data[self.idx(i, j)];
                let kl = lo.max(j.saturating_sub(bw));
                for k in kl..j {
                    s -= self.data[self.idx(i, k)] * self.data[self.idx(j, k)];
                }
                if i == j {
                    if !(s > T::zero()) || !s.is_finite() {
                        return None;
                    }
                    let d = s.sqrt();
                    let k = self.idx(i, i);
                    self.data[k] = d;
                } else {
                    let d = self.data[self.idx(j, j)];
                    let k = self.idx(i, j);
                    self.data[k] = s / d;
                }
            }
        }
        Some(BandedCholesky { factor: self })
    }

    /// Cholesky of `A + σI` for the smallest `σ` in `{0, 1e-12, 1e-10, …}`
    /// times the largest diagonal entry that factors.
    pub fn cholesky_shifted(self) -> Option<BandedCholesky<T>> {
        let scale = (0..self.n)
            .map(|i| self.data[self.idx(i, i)].abs())
            .fold(T::zero(), T::max);
        if let Some(c) = self.clone().cholesky() {
            return Some(c);
        }
        let mut sigma = T::c(1e-12) * scale.max(T::min_positive_value());
        for _ in 0..6 {
            let mut shifted = self.clone();
            shifted.add_diag(&vec![sigma; self.n]);
            if let Some(c) = shifted.cholesky() {
                return Some(c);
            }
            sigma *= T::c(100.0);
        }
        None
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BandedCholesky<T> {
    factor: BandedSpd<T>,
}

impl<T: Scalar> BandedCholesky<T> {
    pub fn solve_in_place(&self, b: &mut [T]) {
        let l = &self.factor;
        let n = l.n;
        let bw = l.bw;
        // forward: L y = b
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = b[i];
            for k in lo..i {
                s -= l.data[l.idx(i, k)] * b[k];
            }
            b[i] = s / l.data[l.idx(i, i)];
        }
        // backward: Lᵀ x = y
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let mut s = b[i];
            for k in (i + 1)..=hi {
                s -= l.data[l.idx(k, i)] * b[k];
            }
            b[i] = s / l.data[l.idx(i, i)];
        }
    }

    #[cfg(test)]
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solves against the standard basis vector `e_c`, writing into `out`.
    /// Forward substitution starts at `c` since earlier entries stay zero.
    pub fn solve_unit(&self, c: usize, out: &mut [T]) {
        let l = &self.factor;
        let n = l.n;
        let bw = l.bw;
        for v in out.iter_mut() {
            *v = T::zero();
        }
        out[c] = T::one() / l.data[l.idx(c, c)];
        for i in (c + 1)..n {
            let lo = i.saturating_sub(bw).max(c);
            let mut s = T::zero();
            for k in lo..i {
                s -= l.data[l.idx(i, k)] * out[k];
            }
            out[i] = s / l.data[l.idx(i, i)];
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let mut s = out[i];
            for k in (i + 1)..=hi {
                s -= l.data[l.idx(k, i)] * out[k];
            }
            out[i] = s / l.data[l.idx(i, i)];
        }
    }
}

/// Triangular factor `R` of a banded matrix `A = QR`, accumulated one row at
/// a time by Givens rotations, together with `Qᵀb`. Rows are pushed as
/// `(lo, values, b)` with `values[k]` the entry in column `lo + k`
/// (`values.len() == bw + 1`) and `lo` nondecreasing. Columns that end up
/// rank deficient are skipped by the solves and get a zero coefficient.
#[derive(Debug, Clone)]
pub(crate) struct BandedQr<T> {
    ncols: usize,
    bw: usize,
    r: Vec<T>,
    rb: Vec<T>,
    used: Vec<bool>,
}

impl<T: Scalar> BandedQr<T> {
    pub fn new(ncols: usize, bw: usize) -> Self {
        Self {
            ncols,
            bw,
            r: vec![T::zero(); ncols * (bw + 1)],
            rb: vec![T::zero(); ncols],
            used: vec![false; ncols],
        }
    }

    pub fn push_row(&mut self, lo: usize, mut v: Vec<T>, mut b: T) {
        let w = self.bw + 1;
        debug_assert_eq!(v.len(), w);
        let mut base = lo;
        while base < self.ncols {
            let a = v[0];
            if a != T::zero() {
                let row = &mut self.r[base * w..(base + 1) * w];
                if !self.used[base] {
                    row.copy_from_slice(&v);
                    self.rb[base] = b;
                    self.used[base] = true;
                    return;
                }
                let rho = row[0].hypot(a);
                let (c, s) = (row[0] / rho, a / rho);
                for k in 0..w {
                    let (x, y) = (row[k], v[k]);
                    row[k] = c * x + s * y;
                    v[k] = c * y - s * x;
                }
                let (x, y) = (self.rb[base], b);
                self.rb[base] = c * x + s * y;
                b = c * y - s * x;
            }
            v.rotate_left(1);
            v[self.bw] = T::zero();
            base += 1;
            if v.iter().all(|&e| e == T::zero()) {
                return;
            }
        }
    }

    fn pivots(&self) -> Vec<bool> {
        let w = self.bw + 1;
        let big = (0..self.ncols)
            .map(|p| self.r[p * w].abs())
            .fold(T::zero(), T::max);
        let floor = T::c(100.0) * T::epsilon() * big;
        (0..self.ncols)
            .map(|p| self.used[p] && self.r[p * w].abs() > floor)
            .collect()
    }

    fn back_substitute(&self, ok: &[bool], mut y: Vec<T>) -> Vec<T> {
        let w = self.bw + 1;
        for p in (0..self.ncols).rev() {
            if !ok[p] {
                y[p] = T::zero();
                continue;
            }
            let mut acc = y[p];
            for k in 1..w {
                if p + k < self.ncols {
                    acc -= self.r[p * w + k] * y[p + k];
                }
            }
            y[p] = acc / self.r[p * w];
        }
        y
    }

    /// Least-squares coefficients `argmin ‖A x - b‖₂`.
    pub fn solve(&self) -> Vec<T> {
        let ok = self.pivots();
        self.back_substitute(&ok, self.rb.clone())
    }

    /// Solves `AᵀA x = c` as `RᵀR x = c`.
    pub fn solve_normal(&self, c: &[T]) -> Vec<T> {
        let w = self.bw + 1;
        let ok = self.pivots();
        let mut y = c.to_vec();
        for p in 0..self.ncols {
            if !ok[p] {
                y[p] = T::zero();
                continue;
            }
            let mut acc = y[p];
            for k in 1..w.min(p + 1) {
                acc -= self.r[(p - k) * w + k] * y[p - k];
            }
            y[p] = acc / self.r[p * w];
        }
        self.back_substitute(&ok, y)
    }
}

/// Least-squares solution of `min ‖A s - b‖₂` for rows given as in
/// [`BandedQr::push_row`]. Accuracy depends on the condition number of `A`
/// rather than its square.
pub(crate) fn banded_lstsq<T: Scalar>(
    ncols: usize,
    bw: usize,
    rows: impl IntoIterator<Item = (usize, Vec<T>, T)>,
) -> Vec<T> {
    let mut qr = BandedQr::new(ncols, bw);
    for (lo, v, b) in rows {
        qr.push_row(lo, v, b);
    }
    qr.solve()
}
