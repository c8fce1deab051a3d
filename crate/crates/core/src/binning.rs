//! Equal-width binning of one-dimensional samples.

use serde::{Deserialize, Serialize};

use crate::error::{HtfError, Result};
use crate::scalar::Scalar;

/// Observations together with the closed interval they are assumed to live on.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    values: Vec<T>,
    support: (T, T),
}

impl<T: Scalar> Sample<T> {
    /// Builds a sample whose support is `[min, max]` of the observations.
    pub fn new(values: Vec<T>) -> Result<Self> {
        Self::validate_values(&values)?;
        let (lo, hi) = values
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        Ok(Self {
            values,
            support: (lo, hi),
        })
    }

    /// Builds a sample on an explicitly declared support `[a, b]`.
    pub fn with_support(values: Vec<T>, a: T, b: T) -> Result<Self> {
        Self::validate_values(&values)?;
        if !(a.is_finite() && b.is_finite()) || a > b {
            return Err(HtfError::InvalidArgument(format!(
                "support [{a}, {b}] is not a finite interval"
            )));
        }
        if let Some(v) = values.iter().find(|&&v| v < a || v > b) {
            return Err(HtfError::InvalidArgument(format!(
                "observation {v} lies outside the support [{a}, {b}]"
            )));
        }
        Ok(Self {
            values,
            support: (a, b),
        })
    }

    fn validate_values(values: &[T]) -> Result<()> {
        if values.len() < 2 {
            return Err(HtfError::InvalidArgument(format!(
                "at least 2 observations are required, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HtfError::InvalidArgument(
                "observations must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn support(&self) -> (T, T) {
        self.support
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Equal-width histogram over a compact support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram<T> {
    pub edges: Vec<T>,
    pub centers: Vec<T>,
    pub counts: Vec<u64>,
    pub delta: T,
    pub n: u64,
}

impl<T: Scalar> Histogram<T> {
    /// Number of bins `D`.
    pub fn num_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn support(&self) -> (T, T) {
        (self.edges[0], self.edges[self.edges.len() - 1])
    }

    /// `log(n * delta)`, the log-intensity of a uniform density.
    pub fn log_scale(&self) -> T {
        (T::from_count(self.n) * self.delta).ln()
    }

    /// Index of the bin containing `x`, or `None` outside the support.
    pub fn bin_of(&self, x: T) -> Option<usize> {
        let (a, b) = self.support();
        if !(x >= a && x <= b) {
            return None;
        }
        Some(locate(&self.edges, x))
    }
}

/// Locates `x` in `edges` with half-open bins and a closed last bin.
/// Assumes `edges[0] <= x <= edges[last]`.
pub(crate) fn locate<T: Scalar>(edges: &[T], x: T) -> usize {
    let d = edges.len() - 1;
    let a = edges[0];
    let width = edges[d] - a;
    let guess = ((x - a) / width * T::from_usize_(d)).floor();
    let mut j = guess.to_usize().unwrap_or(0).min(d - 1);
    while j > 0 && x < edges[j] {
        j -= 1;
    }
    while j + 1 < d && x >= edges[j + 1] {
        j += 1;
    }
    j
}

pub(crate) fn uniform_edges<T: Scalar>(a: T, b: T, d: usize) -> Vec<T> {
    let dd = T::from_usize_(d);
    let mut edges: Vec<T> = (0..=d)
        .map(|j| a + (b - a) * (T::from_usize_(j) / dd))
        .collect();
    edges[d] = b;
    edges
}

/// Bins `sample` into `d` equal-width intervals over its support.
pub fn make_histogram<T: Scalar>(sample: &Sample<T>, d: usize) -> Result<Histogram<T>> {
    if d < 2 {
        return Err(HtfError::InvalidArgument(format!(
            "bins must be >= 2, got {d}"
        )));
    }
    let (a, b) = sample.support();
    if a == b {
        return Err(HtfError::DegenerateSupport(a.to_f64_()));
    }
    let edges = uniform_edges(a, b, d);
    let mut counts = vec![0u64; d];
    for &y in sample.values() {
        counts[locate(&edges, y)] += 1;
    }
    let centers = edges
        .windows(2)
        .map(|w| (w[0] + w[1]) / T::c(2.0))
        .collect();
    Ok(Histogram {
        delta: (b - a) / T::from_usize_(d),
        edges,
        centers,
        counts,
        n: sample.len() as u64,
    })
}

/// Default number of bins, `ceil(10 n^0.4)` capped at `n`.
pub fn default_num_bins(n: usize) -> Result<usize> {
    if n < 2 {
        return Err(HtfError::InvalidArgument(format!(
            "need n >= 2 to choose a bin count, got {n}"
        )));
    }
    let d = (10.0 * (n as f64).powf(0.4)).ceil() as usize;
    Ok(d.min(n))
}
