//! End-to-end density estimation: sample in, normalized density out.

use serde::{Deserialize, Serialize};

use crate::binning::{default_num_bins, make_histogram, Histogram, Sample};
use crate::diffops::NormKind;
use crate::error::{check_len, HtfError, Result};
use crate::model_select::{aic, default_grid, dense_path_grid, fit_path, lambda_star};
use crate::scalar::Scalar;
use crate::solver::{fit, BoxSpec, FitResult, PenaltySpec, SolverOptions};

/// Schema version written by [`to_json`] and required by [`from_json`].
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bins {
    /// `min(ceil(10 n^{2/5}), n)` bins.
    #[default]
    Auto,
    Explicit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauRule<T> {
    /// AIC over the five-point grid around `λ*`.
    AutoGrid,
    /// AIC over a dense log-spaced path around `λ*`.
    #[default]
    AutoPath,
    Explicit(T),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HtfConfig<T> {
    pub k: usize,
    pub bins: Bins,
    pub tau: TauRule<T>,
    pub box_spec: BoxSpec<T>,
    pub solver: SolverOptions<T>,
    /// Norm of the pseudo-inverse used in `λ*`. The largest absolute entry
    /// gives `λ* ≈ 0.148 n` for `k = 1`; the induced norms grow like `D²`
    /// and place `λ*` orders of magnitude above the AIC minimizer.
    pub lambda_norm: NormKind,
    /// Number of grid points for [`TauRule::AutoPath`].
    pub path_points: usize,
}

impl<T: Scalar> Default for HtfConfig<T> {
    fn default() -> Self {
        Self {
            k: 1,
            bins: Bins::Auto,
            tau: TauRule::AutoPath,
            box_spec: BoxSpec::default(),
            solver: SolverOptions::default(),
            lambda_norm: NormKind::Max,
            path_points: 41,
        }
    }
}

impl<T: Scalar> HtfConfig<T> {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics<T> {
    pub tau: T,
    pub num_bins: usize,
    /// Surrogate AIC of the reported fit; absent if it did not converge.
    pub aic: Option<T>,
    pub kkt_residual: T,
    pub converged: bool,
    pub active_diffs: usize,
    pub iterations: usize,
}

/// Density values at the bin centers of an equal-width grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate<T> {
    pub support: (T, T),
    pub delta: T,
    /// Interpolation order: `0` is piecewise constant, anything else log-linear.
    pub k: usize,
    pub centers: Vec<T>,
    pub values: Vec<T>,
    pub diagnostics: Diagnostics<T>,
}

/// Maps fitted log-intensities to density values `exp(θ_j) / (n δ)`,
/// rescaled so that `Σ δ f_j = 1`.
pub fn recover_density<T: Scalar>(hist: &Histogram<T>, theta: &[T]) -> Result<Vec<T>> {
    check_len(hist.num_bins(), theta.len())?;
    let shift = hist.log_scale();
    let mut values: Vec<T> = theta.iter().map(|&t| (t - shift).exp()).collect();
    let mass: T = values.iter().map(|&v| v * hist.delta).sum();
    if !(mass > T::zero()) || !mass.is_finite() {
        return Err(HtfError::Numerical(format!("fitted mass is {mass}")));
    }
    values.iter_mut().for_each(|v| *v /= mass);
    Ok(values)
}

/// Bins `sample`, selects `tau` and fits the trend-filtered log-intensity.
/// Returns the histogram and the reported fit next to its `tau`.
pub fn fit_histogram<T: Scalar>(
    sample: &Sample<T>,
    cfg: &HtfConfig<T>,
) -> Result<(Histogram<T>, T, FitResult<T>)> {
    let d = match cfg.bins {
        Bins::Auto => default_num_bins(sample.len())?,
        Bins::Explicit(d) => d,
    };
    let hist = make_histogram(sample, d)?;
    let taus = match cfg.tau {
        TauRule::Explicit(tau) => {
            let f = fit(
                &hist,
                &PenaltySpec::l1(cfg.k, tau),
                &cfg.box_spec,
                &cfg.solver,
            )?;
            return Ok((hist, tau, f));
        }
        TauRule::AutoGrid => {
            let mut g = default_grid(lambda_star(hist.n, d, cfg.k, cfg.lambda_norm)?)?;
            g.reverse();
            g
        }
        TauRule::AutoPath => dense_path_grid(
            lambda_star(hist.n, d, cfg.k, cfg.lambda_norm)?,
            cfg.path_points,
        )?,
    };
    let path = fit_path(&hist, cfg.k, &taus, &cfg.box_spec, &cfg.solver)?;
    let best = path
        .entries
        .into_iter()
        .nth(path.selected)
        .expect("selected index in range");
    Ok((hist, best.tau, best.fit))
}

pub fn fit_density<T: Scalar>(
    sample: &Sample<T>,
    cfg: &HtfConfig<T>,
) -> Result<DensityEstimate<T>> {
    let (hist, tau, f) = fit_histogram(sample, cfg)?;
    let values = recover_density(&hist, &f.theta)?;
    Ok(DensityEstimate {
        support: hist.support(),
        delta: hist.delta,
        k: cfg.k,
        centers: hist.centers,
        values,
        diagnostics: Diagnostics {
            tau,
            num_bins: hist.counts.len(),
            aic: aic(&f, cfg.k).ok(),
            kkt_residual: f.kkt_residual,
            converged: f.converged,
            active_diffs: f.active_diffs,
            iterations: f.iterations,
        },
    })
}

impl<T: Scalar> DensityEstimate<T> {
    /// Density at `x`; zero outside the support.
    pub fn evaluate(&self, x: T) -> T {
        let (a, b) = self.support;
        if !(x >= a && x <= b) {
            return T::zero();
        }
        let d = self.values.len();
        if self.k == 0 {
            return self.values[self.bin_index(x)];
        }
        let c = &self.centers;
        if x <= c[0] {
            return self.values[0];
        }
        if x >= c[d - 1] {
            return self.values[d - 1];
        }
        let j = c.partition_point(|&v| v <= x) - 1;
        if x == c[j] {
            return self.values[j];
        }
        let t = (x - c[j]) / (c[j + 1] - c[j]);
        let (l0, l1) = (self.values[j].ln(), self.values[j + 1].ln());
        (l0 + t * (l1 - l0)).exp()
    }

    pub fn evaluate_many(&self, xs: &[T]) -> Vec<T> {
        xs.iter().map(|&x| self.evaluate(x)).collect()
    }

    /// Bin containing `x`, with the same edges and conventions as binning.
    fn bin_index(&self, x: T) -> usize {
        let (a, b) = self.support;
        let d = self.values.len();
        let dd = T::from_usize_(d);
        let edge = |j: usize| {
            if j == d {
                b
            } else {
                a + (b - a) * (T::from_usize_(j) / dd)
            }
        };
        let mut j = ((x - a) / (b - a) * dd)
            .floor()
            .to_usize()
            .unwrap_or(0)
            .min(d - 1);
        while j > 0 && x < edge(j) {
            j -= 1;
        }
        while j + 1 < d && x >= edge(j + 1) {
            j += 1;
        }
        j
    }

    fn validate(&self) -> Result<()> {
        let (a, b) = self.support;
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(HtfError::Validation(format!("invalid support [{a}, {b}]")));
        }
        if self.values.is_empty() || self.centers.len() != self.values.len() {
            return Err(HtfError::Validation(format!(
                "{} centers for {} values",
                self.centers.len(),
                self.values.len()
            )));
        }
        if !(self.delta > T::zero()) || !self.delta.is_finite() {
            return Err(HtfError::Validation(format!(
                "invalid bin width {}",
                self.delta
            )));
        }
        if let Some(v) = self
            .values
            .iter()
            .find(|v| !(**v >= T::zero()) || !v.is_finite())
        {
            return Err(HtfError::Validation(format!(
                "density value {v} is not a finite nonnegative number"
            )));
        }
        if self.centers.windows(2).any(|w| !(w[0] < w[1]))
            || self.centers.iter().any(|&c| !(c > a && c < b))
        {
            return Err(HtfError::Validation(
                "centers must increase strictly inside the support".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct DocOut<'a, T> {
    version: u32,
    #[serde(flatten)]
    est: &'a DensityEstimate<T>,
}

#[derive(Deserialize)]
struct DocIn<T> {
    #[allow(dead_code)]
    version: u32,
    #[serde(flatten)]
    est: DensityEstimate<T>,
}

pub fn to_json<T: Scalar>(est: &DensityEstimate<T>) -> String {
    serde_json::to_string_pretty(&DocOut {
        version: SCHEMA_VERSION,
        est,
    })
    .expect("estimate serializes")
}

pub fn from_json<T: Scalar>(doc: &str) -> Result<DensityEstimate<T>> {
    let raw: serde_json::Value =
        serde_json::from_str(doc).map_err(|e| HtfError::Schema(e.to_string()))?;
    match raw.get("version").and_then(|v| v.as_u64()) {
        None => {
            return Err(HtfError::Schema(
                "missing or non-integer version field".into(),
            ))
        }
        Some(v) if v != SCHEMA_VERSION as u64 => {
            return Err(HtfError::Schema(format!("unsupported schema version {v}")));
        }
        Some(_) => {}
    }
    let doc: DocIn<T> = serde_json::from_value(raw).map_err(|e| HtfError::Schema(e.to_string()))?;
    doc.est.validate()?;
    Ok(doc.est)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> DensityEstimate<f64> {
        DensityEstimate {
            support: (0.0, 4.0),
            delta: 1.0,
            k: 1,
            centers: vec![0.5, 1.5, 2.5, 3.5],
            values: vec![0.1, 0.4, 0.3, 0.2],
            diagnostics: Diagnostics {
                tau: 1.0,
                num_bins: 4,
                aic: Some(3.0),
                kkt_residual: 0.0,
                converged: true,
                active_diffs: 2,
                iterations: 10,
            },
        }
    }

    #[test]
    fn evaluate_examples() {
        let e = toy();
        for (c, v) in e.centers.iter().zip(&e.values) {
            assert_eq!(e.evaluate(*c), *v);
        }
        assert_eq!(e.evaluate(5.0), 0.0);
        assert_eq!(e.evaluate(-0.1), 0.0);
        assert!((e.evaluate(1.0) - (0.1f64 * 0.4).sqrt()).abs() < 1e-15);
        assert_eq!(e.evaluate(0.0), 0.1);
        assert_eq!(e.evaluate(4.0), 0.2);
        let mut pc = toy();
        pc.k = 0;
        assert_eq!(pc.evaluate(1.0), 0.4);
        assert_eq!(pc.evaluate(0.999), 0.1);
        assert_eq!(pc.evaluate(4.0), 0.2);
    }

    #[test]
    fn json_round_trip_and_errors() {
        let e = toy();
        let s = to_json(&e);
        assert_eq!(from_json::<f64>(&s).unwrap(), e);

        let mut v: serde_json::Value = serde_json::from_str(&s).unwrap();
        v.as_object_mut().unwrap().remove("version");
        assert!(matches!(
            from_json::<f64>(&v.to_string()),
            Err(HtfError::Schema(_))
        ));

        let mut neg = toy();
        neg.values[2] = -0.3;
        assert!(matches!(
            from_json::<f64>(&to_json(&neg)),
            Err(HtfError::Validation(_))
        ));
        assert!(matches!(
            from_json::<f64>("{\"version\": 1}"),
            Err(HtfError::Schema(_))
        ));
    }

    #[test]
    fn constant_theta_recovers_uniform() {
        let s = Sample::with_support(vec![1.0f64, 2.0, 3.5, 4.0], 1.0, 5.0).unwrap();
        let h = make_histogram(&s, 8).unwrap();
        let theta = vec![h.log_scale(); 8];
        for v in recover_density(&h, &theta).unwrap() {
            assert!((v - 0.25).abs() < 1e-14);
        }
    }
}
