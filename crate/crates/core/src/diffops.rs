//! Banded discrete difference operators and norms of their pseudo-inverses.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::banded::BandedSpd;
use crate::error::{check_len, HtfError, Result};
use crate::scalar::Scalar;

/// Order-`m` difference operator on `D` uniformly spaced points.
///
/// Row `i` holds `(-1)^j C(m, j)` at column `i + j`, so the leading entry of
/// every row is `+1` and the next one is `-m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffOperator {
    order: usize,
    dim: usize,
    coef: Vec<i64>,
}

fn binomial(m: usize, j: usize) -> i64 {
    let j = j.min(m - j);
    let mut c: i64 = 1;
    for t in 0..j {
        c = c * (m - t) as i64 / (t + 1) as i64;
    }
    c
}

impl DiffOperator {
    pub fn new(order: usize, dim: usize) -> Result<Self> {
        if order == 0 {
            return Err(HtfError::InvalidArgument(
                "difference order must be at least 1".into(),
            ));
        }
        if dim <= order {
            return Err(HtfError::Dimension(format!(
                "order-{order} differences need more than {order} points, got {dim}"
            )));
        }
        let coef = (0..=order)
            .map(|j| if j % 2 == 0 { 1 } else { -1 } * binomial(order, j))
            .collect();
        Ok(Self { order, dim, coef })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.dim - self.order
    }

    /// Signed binomial stencil shared by every row.
    pub fn coefficients(&self) -> &[i64] {
        &self.coef
    }

    /// Dense row-major copy, for inspection and small-scale checks.
    pub fn to_dense(&self) -> Vec<Vec<i64>> {
        (0..self.rows())
            .map(|i| {
                let mut row = vec![0; self.dim];
                row[i..=i + self.order].copy_from_slice(&self.coef);
                row
            })
            .collect()
    }

    pub fn apply<T: Scalar>(&self, v: &[T]) -> Result<Vec<T>> {
        check_len(self.dim, v.len())?;
        Ok(self.apply_unchecked(v))
    }

    pub(crate) fn apply_unchecked<T: Scalar>(&self, v: &[T]) -> Vec<T> {
        let coef: Vec<T> = self.coef.iter().map(|&c| T::c(c as f64)).collect();
        (0..self.rows())
            .map(|i| {
                coef.iter()
                    .zip(&v[i..=i + self.order])
                    .fold(T::zero(), |acc, (&c, &x)| acc + c * x)
            })
            .collect()
    }

    pub fn apply_transpose<T: Scalar>(&self, u: &[T]) -> Result<Vec<T>> {
        check_len(self.rows(), u.len())?;
        Ok(self.apply_transpose_unchecked(u))
    }

    pub(crate) fn apply_transpose_unchecked<T: Scalar>(&self, u: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        for (i, &ui) in u.iter().enumerate() {
            for (j, &c) in self.coef.iter().enumerate() {
                out[i + j] += T::c(c as f64) * ui;
            }
        }
        out
    }

    /// Adds `scale * ΔᵀΔ` into a `D x D` banded matrix of half-bandwidth `>= m`.
    pub(crate) fn add_normal_matrix<T: Scalar>(&self, h: &mut BandedSpd<T>, scale: T) {
        let m = self.order;
        for i in 0..self.rows() {
            for a in 0..=m {
                for b in 0..=a {
                    let v = T::c((self.coef[a] * self.coef[b]) as f64) * scale;
                    h.add(i + a, i + b, v);
                }
            }
        }
    }

    /// Row `j` of `Δ_Rᵀ` for the sorted row subset `rows`, in the banded
    /// form taken by the least-squares solver: the first position in `rows`
    /// it can touch and `m + 1` coefficients from there on. `cursor` must
    /// start at 0 and be reused across calls with increasing `j`.
    pub(crate) fn transpose_row<T: Scalar>(
        &self,
        rows: &[usize],
        j: usize,
        cursor: &mut usize,
    ) -> (usize, Vec<T>) {
        let m = self.order;
        while *cursor < rows.len() && rows[*cursor] + m < j {
            *cursor += 1;
        }
        let lo = *cursor;
        let v = (0..=m)
            .map(|k| match rows.get(lo + k) {
                Some(&i) if i <= j => T::c(self.coef[j - i] as f64),
                _ => T::zero(),
            })
            .collect();
        (lo, v)
    }

    /// Banded Gram matrix `Δ_R W Δ_Rᵀ` for the sorted row subset `rows`,
    /// with diagonal column weights `w`.
    pub(crate) fn weighted_row_gram<T: Scalar>(&self, rows: &[usize], w: &[T]) -> BandedSpd<T> {
        let m = self.order;
        let mut g = BandedSpd::zeros(rows.len(), m);
        for (p, &rp) in rows.iter().enumerate() {
            for q in (0..=p).rev() {
                let rq = rows[q];
                if rp - rq > m {
                    break;
                }
                // columns shared by rows rq..rq+m and rp..rp+m
                let mut s = T::zero();
                for c in rp..=rq + m {
                    let a = self.coef[c - rp];
                    let b = self.coef[c - rq];
                    s += T::c((a * b) as f64) * w[c];
                }
                g.add(p, q, s);
            }
        }
        g
    }

    /// All three pseudo-inverse norms from one sweep over the Gram solves.
    ///
    /// The operator has full row rank, so `pinv = Δᵀ (ΔΔᵀ)⁻¹`; column `c` of
    /// the pseudo-inverse is `Δᵀ` applied to the `c`-th column of the inverse
    /// Gram matrix. Nothing dense is ever stored.
    pub fn pinv_norms<T: Scalar>(&self) -> PinvNorms<T> {
        let r = self.rows();
        let ones = vec![T::one(); self.dim];
        let all: Vec<usize> = (0..r).collect();
        let chol = self
            .weighted_row_gram(&all, &ones)
            .cholesky()
            .expect("difference operators have full row rank");
        let mut row_sums = vec![T::zero(); self.dim];
        let mut one = T::zero();
        let mut max = T::zero();
        let mut g = vec![T::zero(); r];
        for c in 0..r {
            chol.solve_unit(c, &mut g);
            let col = self.apply_transpose_unchecked(&g);
            let mut col_sum = T::zero();
            for (rs, &v) in row_sums.iter_mut().zip(&col) {
                let a = v.abs();
                *rs += a;
                col_sum += a;
                max = max.max(a);
            }
            one = one.max(col_sum);
        }
        let inf = row_sums.into_iter().fold(T::zero(), T::max);
        PinvNorms { inf, one, max }
    }

    pub fn pinv_norm<T: Scalar>(&self, which: NormKind) -> T {
        self.pinv_norms().get(which)
    }
}

/// Which matrix norm of the pseudo-inverse to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    /// Induced infinity norm: maximum absolute row sum.
    Inf,
    /// Induced 1-norm: maximum absolute column sum.
    #[default]
    One,
    /// Largest absolute entry.
    Max,
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormKind::Inf => "inf",
            NormKind::One => "one",
            NormKind::Max => "max",
        })
    }
}

impl FromStr for NormKind {
    type Err = HtfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inf" => Ok(NormKind::Inf),
            "one" | "1" => Ok(NormKind::One),
            "max" => Ok(NormKind::Max),
            other => Err(HtfError::InvalidArgument(format!(
                "unknown norm '{other}' (expected inf, one or max)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinvNorms<T> {
    pub inf: T,
    pub one: T,
    pub max: T,
}

impl<T: Copy> PinvNorms<T> {
    pub fn get(&self, which: NormKind) -> T {
        match which {
            NormKind::Inf => self.inf,
            NormKind::One => self.one,
            NormKind::Max => self.max,
        }
    }
}

/// Empirical band reported for `‖pinv(Δ^(2))‖ / D` with `500 <= D <= 10000`.
pub const PINV_RATIO_BAND: (f64, f64) = (0.1474, 0.1482);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PinvRatioRow {
    pub dim: usize,
    pub norm: f64,
    pub ratio: f64,
    pub inside: bool,
}

/// Tabulates `‖pinv(Δ^(k+1))‖ / D` for each `D` and flags membership in
/// [`PINV_RATIO_BAND`] (open interval).
pub fn pinv_ratio_table(k: usize, dims: &[usize], which: NormKind) -> Result<Vec<PinvRatioRow>> {
    dims.iter()
        .map(|&d| {
            let op = DiffOperator::new(k + 1, d)?;
            let norm: f64 = op.pinv_norm(which);
            let ratio = norm / d as f64;
            Ok(PinvRatioRow {
                dim: d,
                norm,
                ratio,
                inside: ratio > PINV_RATIO_BAND.0 && ratio < PINV_RATIO_BAND.1,
            })
        })
        .collect()
}
