//! `htf`: fit, evaluate and benchmark histogram trend filtering density
//! estimates from the command line.

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand, ValueEnum};
use htf::{
    dense_path_grid, fit_density, from_json, lambda_star, make_histogram, pinv_ratio_table,
    run_benchmark, to_json, BenchConfig, Bins, BoxSpec, DensityEstimate64, HtfConfig64, HtfError,
    NormKind, Sample64, SolverOptions64, TauRule, PINV_RATIO_BAND,
};

const CURVE_POINTS: usize = 1000;

#[derive(Parser)]
#[command(
    name = "htf",
    version,
    about = "Histogram trend filtering density estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a density to a file of observations.
    Fit(FitArgs),
    /// Evaluate a saved estimate at the points in a file.
    Eval(EvalArgs),
    /// Fit the regularization path and report AIC per tau.
    Path(PathArgs),
    /// Run a simulation benchmark described by a JSON config.
    Bench(BenchArgs),
    /// Tabulate the pseudo-inverse norm ratio of the difference operator.
    Check(CheckArgs),
}

#[derive(Args)]
struct SampleArgs {
    /// File with one observation per line.
    #[arg(long)]
    input: PathBuf,
    /// Order of the trend filter.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Number of bins, or `auto`.
    #[arg(long, default_value = "auto")]
    bins: BinsArg,
    /// Support as `A,B`; defaults to the sample range.
    #[arg(long, allow_hyphen_values = true)]
    support: Option<SupportArg>,
    /// Pseudo-inverse norm used for the reference penalty `λ*`.
    #[arg(long, value_enum, default_value_t = NormArg::Max)]
    lambda_norm: NormArg,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    sample: SampleArgs,
    /// Penalty weight, `auto` (dense AIC path) or `grid` (five-point AIC grid).
    #[arg(long, default_value = "auto")]
    tau: TauArg,
    /// Accepted for interface stability; fitting is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the JSON estimate; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Where to write `x,fhat` on a uniform grid over the support.
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// JSON estimate written by `htf fit`.
    #[arg(long)]
    estimate: PathBuf,
    /// File with one evaluation point per line.
    #[arg(long)]
    points: PathBuf,
    /// Where to write `x,fhat`; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PathArgs {
    #[command(flatten)]
    sample: SampleArgs,
    /// Number of tau values on the path.
    #[arg(long, default_value_t = 41)]
    points: usize,
    /// Where to write the full path as JSON.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long)]
    dmin: usize,
    #[arg(long)]
    dmax: usize,
    #[arg(long, default_value_t = 1)]
    step: usize,
    #[arg(long, value_enum, default_value_t = NormArg::Max)]
    norm: NormArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    Max,
    One,
    Inf,
}

impl From<NormArg> for NormKind {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::Max => NormKind::Max,
            NormArg::One => NormKind::One,
            NormArg::Inf => NormKind::Inf,
        }
    }
}

#[derive(Clone, Copy)]
struct BinsArg(Bins);

impl FromStr for BinsArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(Self(Bins::Auto));
        }
        let d: usize = s
            .parse()
            .map_err(|_| format!("expected an integer or `auto`, got `{s}`"))?;
        if d < 2 {
            return Err("bins must be ≥ 2".into());
        }
        Ok(Self(Bins::Explicit(d)))
    }
}

#[derive(Clone, Copy)]
struct TauArg(TauRule<f64>);

impl FromStr for TauArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(Self(TauRule::AutoPath)),
            "grid" => Ok(Self(TauRule::AutoGrid)),
            _ => match s.parse::<f64>() {
                Ok(t) if t >= 0.0 && t.is_finite() => Ok(Self(TauRule::Explicit(t))),
                _ => Err(format!(
                    "expected a nonnegative number, `auto` or `grid`, got `{s}`"
                )),
            },
        }
    }
}

#[derive(Clone, Copy)]
struct SupportArg(f64, f64);

impl FromStr for SupportArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("expected `A,B` with finite A < B, got `{s}`");
        let (a, b) = s.split_once(',').ok_or_else(bad)?;
        let a: f64 = a.trim().parse().map_err(|_| bad())?;
        let b: f64 = b.trim().parse().map_err(|_| bad())?;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(bad());
        }
        Ok(Self(a, b))
    }
}

/// A failure together with its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn usage(msg: impl Display) -> Self {
        Self {
            code: 2,
            error: anyhow!("{msg}"),
        }
    }

    fn runtime(error: anyhow::Error) -> Self {
        Self { code: 1, error }
    }
}

impl From<HtfError> for Failure {
    fn from(e: HtfError) -> Self {
        let code = match e {
            HtfError::Unbounded(_) | HtfError::PathFailure { .. } | HtfError::Numerical(_) => 1,
            _ => 2,
        };
        Self {
            code,
            error: e.into(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn read_input(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

fn write_output(path: &Path, contents: &str) -> CmdResult {
    fs::write(path, contents)
        .map_err(|e| Failure::runtime(anyhow!("cannot write {}: {e}", path.display())))
}

fn emit(path: Option<&Path>, contents: &str) -> CmdResult {
    match path {
        Some(p) => write_output(p, contents),
        None => std::io::stdout()
            .write_all(contents.as_bytes())
            .map_err(|e| Failure::runtime(e.into())),
    }
}

/// Parses one number per line; blank lines are skipped.
fn parse_numbers(text: &str, path: &Path) -> Result<Vec<f64>, Failure> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match line.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            _ => {
                return Err(Failure::usage(format!(
                    "{}: line {}: `{line}` is not a finite number",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

fn load_sample(args: &SampleArgs) -> Result<Sample64, Failure> {
    let values = parse_numbers(&read_input(&args.input)?, &args.input)?;
    Ok(match args.support {
        Some(SupportArg(a, b)) => Sample64::with_support(values, a, b)?,
        None => Sample64::new(values)?,
    })
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn curve_csv(est: &DensityEstimate64, xs: &[f64]) -> String {
    let mut s = String::from("x,fhat\n");
    for &x in xs {
        s.push_str(&format!("{},{}\n", fmt_f64(x), fmt_f64(est.evaluate(x))));
    }
    s
}

fn cmd_fit(args: FitArgs) -> CmdResult {
    let sample = load_sample(&args.sample)?;
    let cfg = HtfConfig64 {
        k: args.sample.k,
        bins: args.sample.bins.0,
        tau: args.tau.0,
        lambda_norm: args.sample.lambda_norm.into(),
        ..HtfConfig64::default()
    };
    let est = fit_density(&sample, &cfg)?;
    let mut json = to_json(&est);
    json.push('\n');
    emit(args.output.as_deref(), &json)?;
    if let Some(path) = &args.curve {
        let (a, b) = est.support;
        let last = (CURVE_POINTS - 1) as f64;
        let xs: Vec<f64> = (0..CURVE_POINTS)
            .map(|i| a + (b - a) * i as f64 / last)
            .collect();
        write_output(path, &curve_csv(&est, &xs))?;
    }
    if !est.diagnostics.converged {
        eprintln!(
            "warning: fit did not converge (KKT residual {:e})",
            est.diagnostics.kkt_residual
        );
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CmdResult {
    let est: DensityEstimate64 = from_json(&read_input(&args.estimate)?)?;
    let xs = parse_numbers(&read_input(&args.points)?, &args.points)?;
    emit(args.output.as_deref(), &curve_csv(&est, &xs))
}

fn cmd_path(args: PathArgs) -> CmdResult {
    let sample = load_sample(&args.sample)?;
    let k = args.sample.k;
    let d = match args.sample.bins.0 {
        Bins::Auto => htf::default_num_bins(sample.len())?,
        Bins::Explicit(d) => d,
    };
    let hist = make_histogram(&sample, d)?;
    let lstar: f64 = lambda_star(hist.n, d, k, args.sample.lambda_norm.into())?;
    let taus = dense_path_grid(lstar, args.points)?;
    let path = htf::fit_path(
        &hist,
        k,
        &taus,
        &BoxSpec::default(),
        &SolverOptions64::default(),
    )?;
    let mut s = String::from("tau\taic\tactive_diffs\tconverged\tkkt_residual\tselected\n");
    for (i, e) in path.entries.iter().enumerate() {
        let aic = e.aic.map_or_else(|| "NA".to_string(), fmt_f64);
        s.push_str(&format!(
            "{}\t{aic}\t{}\t{}\t{}\t{}\n",
            fmt_f64(e.tau),
            e.fit.active_diffs,
            e.fit.converged,
            fmt_f64(e.fit.kkt_residual),
            if i == path.selected { "*" } else { "" }
        ));
    }
    print!("{s}");
    if let Some(p) = &args.output {
        let json = serde_json::to_string_pretty(&path).map_err(|e| Failure::runtime(e.into()))?;
        write_output(p, &json)?;
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> CmdResult {
    let mut cfg = BenchConfig::from_json(&read_input(&args.config)?)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let report = run_benchmark(&cfg)?;
    fs::create_dir_all(&args.out_dir)
        .map_err(|e| Failure::runtime(anyhow!("cannot create {}: {e}", args.out_dir.display())))?;
    let tsv = report.to_tsv();
    write_output(&args.out_dir.join("report.json"), &report.to_json())?;
    write_output(&args.out_dir.join("report.tsv"), &tsv)?;
    print!("{tsv}");
    let failed: usize = report.cells.iter().map(|c| c.failures.len()).sum();
    if failed > 0 {
        eprintln!("warning: {failed} replicate fits failed; see report.json");
    }
    Ok(())
}

fn cmd_check(args: CheckArgs) -> CmdResult {
    if args.dmin > args.dmax {
        return Err(Failure::usage(format!(
            "dmin ({}) exceeds dmax ({})",
            args.dmin, args.dmax
        )));
    }
    if args.step == 0 {
        return Err(Failure::usage("step must be positive"));
    }
    let dims: Vec<usize> = (args.dmin..=args.dmax).step_by(args.step).collect();
    let rows = pinv_ratio_table(args.k, &dims, args.norm.into())?;
    let (lo, hi) = PINV_RATIO_BAND;
    println!("D\tnorm\tratio\tverdict");
    for r in &rows {
        let verdict = if r.inside { "inside" } else { "outside" };
        println!(
            "{}\t{}\t{}\t{verdict}",
            r.dim,
            fmt_f64(r.norm),
            fmt_f64(r.ratio)
        );
    }
    let all = rows.iter().all(|r| r.inside);
    println!(
        "all ratios in ({lo}, {hi}): {}",
        if all { "yes" } else { "no" }
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Path(a) => cmd_path(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Check(a) => cmd_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
