//! Synthetic test densities, the grid MSE metric and a seeded Monte Carlo
//! benchmark comparing trend filtering against the KDE baselines.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{cv_bandwidth, reference_bandwidth, CvOptions, KdeEstimate};
use crate::binning::Sample;
use crate::error::{HtfError, Result};
use crate::estimator::{fit_density, HtfConfig, TauRule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Component {
    Normal {
        mean: f64,
        sd: f64,
    },
    /// `rate · exp(-rate (x - shift))` for `x >= shift`.
    ShiftedExp {
        shift: f64,
        rate: f64,
    },
    /// Beta(a, b) mapped affinely onto `[lo, hi]`.
    Beta {
        a: f64,
        b: f64,
        lo: f64,
        hi: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
}

impl Component {
    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Component::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                (-0.5 * z * z).exp() / (sd * std::f64::consts::TAU.sqrt())
            }
            Component::ShiftedExp { shift, rate } => {
                if x < shift {
                    0.0
                } else {
                    rate * (-rate * (x - shift)).exp()
                }
            }
            Component::Beta { a, b, lo, hi } => {
                if x <= lo || x >= hi {
                    return 0.0;
                }
                let w = hi - lo;
                let u = (x - lo) / w;
                let ln_beta = libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b);
                ((a - 1.0) * u.ln() + (b - 1.0) * (1.0 - u).ln() - ln_beta).exp() / w
            }
            Component::Uniform { lo, hi } => {
                if x < lo || x > hi {
                    0.0
                } else {
                    1.0 / (hi - lo)
                }
            }
        }
    }

    /// Probability of `[a, b]`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        let cdf = |x: f64| -> f64 {
            match *self {
                Component::Normal { mean, sd } => {
                    0.5 * libm::erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2))
                }
                Component::ShiftedExp { shift, rate } => {
                    if x <= shift {
                        0.0
                    } else {
                        -libm::expm1(-rate * (x - shift))
                    }
                }
                // only used for supports that contain the whole component
                Component::Beta { lo, hi, .. } | Component::Uniform { lo, hi } => {
                    ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
                }
            }
        };
        cdf(b) - cdf(a)
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Component::Normal { mean, sd } => {
                Normal::new(mean, sd).expect("valid normal").sample(rng)
            }
            Component::ShiftedExp { shift, rate } => {
                shift + Exp::new(rate).expect("valid rate").sample(rng)
            }
            Component::Beta { a, b, lo, hi } => {
                lo + (hi - lo) * Beta::new(a, b).expect("valid beta").sample(rng)
            }
            Component::Uniform { lo, hi } => rng.random_range(lo..=hi),
        }
    }
}

/// Finite mixture truncated to `support` and renormalized there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueDensity {
    pub name: String,
    pub weights: Vec<f64>,
    pub components: Vec<Component>,
    pub support: (f64, f64),
    /// Mixture mass inside `support` after normalizing the weights.
    mass: f64,
}

impl TrueDensity {
    /// Weights are normalized by their sum.
    pub fn new(
        name: &str,
        weights: Vec<f64>,
        components: Vec<Component>,
        support: (f64, f64),
    ) -> Result<Self> {
        if weights.len() != components.len() || weights.is_empty() {
            return Err(HtfError::InvalidArgument(
                "a mixture needs one positive weight per component".into(),
            ));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(HtfError::InvalidArgument(
                "mixture weights must be positive".into(),
            ));
        }
        if !(support.0 < support.1) {
            return Err(HtfError::InvalidArgument(format!(
                "support [{}, {}] is empty",
                support.0, support.1
            )));
        }
        let total: f64 = weights.iter().sum();
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mass = weights
            .iter()
            .zip(&components)
            .map(|(w, c)| w * c.mass(support.0, support.1))
            .sum();
        Ok(Self {
            name: name.to_string(),
            weights,
            components,
            support,
            mass,
        })
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.support.0 || x > self.support.1 {
            return 0.0;
        }
        let v: f64 = self
            .weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| w * c.pdf(x))
            .sum();
        v / self.mass
    }

    /// `n` draws, rejecting those outside the support.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = self.components.len() - 1;
            for (i, w) in self.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            let x = self.components[pick].draw(rng);
            if x >= self.support.0 && x <= self.support.1 {
                out.push(x);
            }
        }
        out
    }
}

/// `0.9 N(0, 1) + 0.1 N(-2, 0.1²) + 0.1 N(3, 0.5²)`, weights divided by 1.1,
/// on `[-5, 6]`.
pub fn density_f1() -> TrueDensity {
    TrueDensity::new(
        "f1",
        vec![0.9, 0.1, 0.1],
        vec![
            Component::Normal { mean: 0.0, sd: 1.0 },
            Component::Normal {
                mean: -2.0,
                sd: 0.1,
            },
            Component::Normal { mean: 3.0, sd: 0.5 },
        ],
        (-5.0, 6.0),
    )
    .expect("valid mixture")
}

/// Rate-2 exponentials shifted to `-1, 0, 1, 2, 3` with weights
/// `(1, 2, 1, 2, 1) / 7`, on `[-1, 13]`.
pub fn density_f2() -> TrueDensity {
    let weights = [1.0, 2.0, 1.0, 2.0, 1.0].iter().map(|w| w / 7.0).collect();
    let components = (-1..=3)
        .map(|m| Component::ShiftedExp {
            shift: m as f64,
            rate: 2.0,
        })
        .collect();
    TrueDensity::new("f2", weights, components, (-1.0, 13.0)).expect("valid mixture")
}

/// `3/5 Beta(4, 4) on [0, 3/5] + 1/10 Beta(4000, 4000) on [2/5, 1]
/// + 1/40 U[0, 1] + 11/40 U[4/5, 1]`.
pub fn density_f3() -> TrueDensity {
    TrueDensity::new(
        "f3",
        vec![0.6, 0.1, 0.025, 0.275],
        vec![
            Component::Beta {
                a: 4.0,
                b: 4.0,
                lo: 0.0,
                hi: 0.6,
            },
            Component::Beta {
                a: 4000.0,
                b: 4000.0,
                lo: 0.4,
                hi: 1.0,
            },
            Component::Uniform { lo: 0.0, hi: 1.0 },
            Component::Uniform { lo: 0.8, hi: 1.0 },
        ],
        (0.0, 1.0),
    )
    .expect("valid mixture")
}

/// Mean of `(est(x) - pdf(x))²` over `grid_size` equally spaced points
/// spanning the support, endpoints included.
pub fn mse<F: Fn(f64) -> f64>(est: F, truth: &TrueDensity, grid_size: usize) -> Result<f64> {
    if grid_size < 2 {
        return Err(HtfError::InvalidArgument(format!(
            "the MSE grid needs at least 2 points, got {grid_size}"
        )));
    }
    let (a, b) = truth.support;
    let last = (grid_size - 1) as f64;
    let total: f64 = (0..grid_size)
        .map(|i| {
            let x = a + (b - a) * i as f64 / last;
            let e = est(x) - truth.pdf(x);
            e * e
        })
        .sum();
    Ok(total / grid_size as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityId {
    F1,
    F2,
    F3,
}

impl DensityId {
    pub fn density(self) -> TrueDensity {
        match self {
            DensityId::F1 => density_f1(),
            DensityId::F2 => density_f2(),
            DensityId::F3 => density_f3(),
        }
    }

    /// Factor the reported MSE is multiplied by.
    pub fn scale(self) -> f64 {
        match self {
            DensityId::F1 | DensityId::F2 => 100.0,
            DensityId::F3 => 10.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DensityId::F1 => "f1",
            DensityId::F2 => "f2",
            DensityId::F3 => "f3",
        }
    }

    fn index(self) -> u64 {
        match self {
            DensityId::F1 => 1,
            DensityId::F2 => 2,
            DensityId::F3 => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Linear trend filtering, `tau` by AIC along the dense path.
    #[serde(rename = "htf-k1")]
    HtfK1,
    #[serde(rename = "htf-k2")]
    HtfK2,
    /// Linear trend filtering, `tau` by AIC over the five-point grid.
    #[serde(rename = "htf-k1-grid")]
    HtfK1Grid,
    #[serde(rename = "kde-cv")]
    KdeCv,
    #[serde(rename = "kde-ref")]
    KdeRef,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::HtfK1 => "htf-k1",
            Method::HtfK2 => "htf-k2",
            Method::HtfK1Grid => "htf-k1-grid",
            Method::KdeCv => "kde-cv",
            Method::KdeRef => "kde-ref",
        }
    }

    /// Fits the method to `values` and returns its evaluator.
    pub fn fit(self, values: &[f64], seed: u64) -> Result<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
        let htf = |cfg: HtfConfig<f64>| -> Result<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
            let est = fit_density(&Sample::new(values.to_vec())?, &cfg)?;
            Ok(Box::new(move |x| est.evaluate(x)))
        };
        match self {
            Method::HtfK1 => htf(HtfConfig::with_k(1)),
            Method::HtfK2 => htf(HtfConfig::with_k(2)),
            Method::HtfK1Grid => htf(HtfConfig {
                tau: TauRule::AutoGrid,
                ..HtfConfig::with_k(1)
            }),
            Method::KdeCv | Method::KdeRef => {
                let h = if self == Method::KdeCv {
                    cv_bandwidth(
                        values,
                        &CvOptions {
                            seed,
                            ..CvOptions::default()
                        },
                    )?
                } else {
                    reference_bandwidth(values)?
                };
                let est = KdeEstimate::new(values.to_vec(), h)?;
                Ok(Box::new(move |x| est.evaluate(x)))
            }
        }
    }
}

fn default_replicates() -> usize {
    25
}

fn default_grid_size() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub densities: Vec<DensityId>,
    pub sizes: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    pub methods: Vec<Method>,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default)]
    pub seed: u64,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.densities.is_empty() || self.sizes.is_empty() || self.methods.is_empty() {
            return Err(HtfError::InvalidArgument(
                "densities, sizes and methods must all be nonempty".into(),
            ));
        }
        if self.replicates == 0 {
            return Err(HtfError::InvalidArgument(
                "replicates must be at least 1".into(),
            ));
        }
        if let Some(n) = self.sizes.iter().find(|&&n| n < 10) {
            return Err(HtfError::InvalidArgument(format!(
                "sample size {n} is below 10"
            )));
        }
        if self.grid_size < 2 {
            return Err(HtfError::InvalidArgument(
                "grid_size must be at least 2".into(),
            ));
        }
        Ok(())
    }

    pub fn from_json(doc: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(doc).map_err(|e| HtfError::Schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Seed of the sample drawn for `(density, n, replicate)`. Every method sees
/// the same sample, so comparisons within a replicate are paired.
pub fn replicate_seed(seed: u64, density: DensityId, n: usize, replicate: usize) -> u64 {
    let mut h = seed;
    for v in [density.index(), n as u64, replicate as u64] {
        h = splitmix64(h ^ v.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub density: DensityId,
    pub n: usize,
    pub method: Method,
    /// `None` when no replicate completed.
    pub mean_mse: Option<f64>,
    pub scale: f64,
    pub scaled_mse: Option<f64>,
    pub mean_seconds: Option<f64>,
    /// Replicates that completed.
    pub replicates: usize,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub cells: Vec<BenchCell>,
}

struct Outcome {
    cell: usize,
    replicate: usize,
    result: Result<(f64, f64)>,
}

/// Runs every `(density, n, method, replicate)` combination. Replicates run
/// in parallel; aggregation follows the configuration order, so the MSE
/// fields do not depend on scheduling. Failed replicates are recorded in
/// their cell and never abort the run.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let mut cells = Vec::new();
    let mut jobs = Vec::new();
    for &density in &cfg.densities {
        for &n in &cfg.sizes {
            let first = cells.len();
            for &method in &cfg.methods {
                cells.push(BenchCell {
                    density,
                    n,
                    method,
                    mean_mse: None,
                    scale: density.scale(),
                    scaled_mse: None,
                    mean_seconds: None,
                    replicates: 0,
                    failures: Vec::new(),
                });
            }
            for r in 0..cfg.replicates {
                jobs.push((density, n, r, first));
            }
        }
    }

    let outcomes: Vec<Vec<Outcome>> = jobs
        .par_iter()
        .map(|&(density, n, r, first)| {
            let truth = density.density();
            let seed = replicate_seed(cfg.seed, density, n, r);
            let values = truth.sample(n, &mut ChaCha8Rng::seed_from_u64(seed));
            cfg.methods
                .iter()
                .enumerate()
                .map(|(m, &method)| {
                    let start = Instant::now();
                    let fitted = method.fit(&values, seed);
                    let secs = start.elapsed().as_secs_f64();
                    let result = fitted.and_then(|f| Ok((mse(f, &truth, cfg.grid_size)?, secs)));
                    Outcome {
                        cell: first + m,
                        replicate: r,
                        result,
                    }
                })
                .collect()
        })
        .collect();

    let mut sums = vec![(0.0f64, 0.0f64); cells.len()];
    for o in outcomes.into_iter().flatten() {
        match o.result {
            Ok((e, s)) => {
                sums[o.cell].0 += e;
                sums[o.cell].1 += s;
                cells[o.cell].replicates += 1;
            }
            Err(err) => cells[o.cell]
                .failures
                .push(format!("replicate {}: {err}", o.replicate)),
        }
    }
    for (c, (e, s)) in cells.iter_mut().zip(sums) {
        if c.replicates > 0 {
            let k = c.replicates as f64;
            c.mean_mse = Some(e / k);
            c.scaled_mse = Some(c.scale * e / k);
            c.mean_seconds = Some(s / k);
        }
    }
    Ok(BenchReport {
        config: cfg.clone(),
        cells,
    })
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Tab-separated table, columns padded to a common width.
    pub fn to_tsv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6e}"));
        let mut rows = vec![[
            "density",
            "n",
            "method",
            "mean_mse",
            "scaled_mse",
            "mean_seconds",
            "replicates",
        ]
        .map(String::from)];
        for c in &self.cells {
            rows.push([
                c.density.name().to_string(),
                c.n.to_string(),
                c.method.name().to_string(),
                fmt(c.mean_mse),
                fmt(c.scaled_mse),
                fmt(c.mean_seconds),
                c.replicates.to_string(),
            ]);
        }
        let mut width = [0usize; 7];
        for r in &rows {
            for (w, s) in width.iter_mut().zip(r) {
                *w = (*w).max(s.len());
            }
        }
        let mut out = String::new();
        for r in &rows {
            let line: Vec<String> = r
                .iter()
                .zip(&width)
                .map(|(s, &w)| format!("{s:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", line.join("\t").trim_end());
        }
        out
    }

    pub fn cell(&self, density: DensityId, n: usize, method: Method) -> Option<&BenchCell> {
        self.cells
            .iter()
            .find(|c| c.density == density && c.n == n && c.method == method)
    }
}
