use super::*;
use proptest::prelude::*;

fn hist(counts: &[u64]) -> Histogram<f64> {
    let d = counts.len();
    let edges: Vec<f64> = (0..=d).map(|j| j as f64 / d as f64).collect();
    Histogram {
        centers: edges.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect(),
        edges,
        counts: counts.to_vec(),
        delta: 1.0 / d as f64,
        n: counts.iter().sum(),
    }
}

fn opts() -> SolverOptions<f64> {
    SolverOptions::default()
}

#[test]
fn nll_examples() {
    assert_eq!(poisson_nll(&[0.0, 0.0], &[1, 2]).unwrap(), 2.0);
    let v = poisson_nll(&[1f64.ln(), 2f64.ln()], &[1, 2]).unwrap();
    assert!((v - (3.0 - 2.0 * 2f64.ln())).abs() < 1e-14);
    assert!((v - 1.61371).abs() < 1e-5);
    let x = [3u64, 5, 7];
    let theta: Vec<f64> = x.iter().map(|&c| (c as f64).ln()).collect();
    let expect: f64 = x.iter().map(|&c| c as f64 * (1.0 - (c as f64).ln())).sum();
    let got = poisson_nll(&theta, &x).unwrap();
    assert!((got - expect).abs() < 1e-12);
    assert!((got + 9.96440).abs() < 1e-5);
    assert!(poisson_nll(&[0.0], &[1, 2]).is_err());
}

#[test]
fn objective_examples() {
    let h = hist(&[1, 4, 2, 6, 3]);
    let theta = [0.3, -0.2, 1.1, 0.7, 0.0];
    let nll = poisson_nll(&theta, &h.counts).unwrap();
    assert_eq!(
        objective(&h, &PenaltySpec::l1(1, 0.0), &theta).unwrap(),
        nll
    );
    let c = [0.8; 5];
    let nll_c = poisson_nll(&c, &h.counts).unwrap();
    assert_eq!(objective(&h, &PenaltySpec::l1(0, 7.0), &c).unwrap(), nll_c);
    assert_eq!(
        objective(&h, &PenaltySpec::l2sq(2, 7.0), &c).unwrap(),
        nll_c
    );

    let op = DiffOperator::new(2, 5).unwrap();
    let d = op.apply(&theta).unwrap();
    let quad: f64 = d.iter().map(|v| v * v).sum();
    let got = objective(&h, &PenaltySpec::l2sq(1, 3.0), &theta).unwrap();
    assert!((got - (nll + 3.0 * quad)).abs() < 1e-12);
    assert!(objective(&h, &PenaltySpec::l1(1, 1.0), &theta[..4]).is_err());
}

#[test]
fn huge_tau_gives_constant_mean() {
    let h = hist(&[2, 4, 6]);
    let r = fit(&h, &PenaltySpec::l1(0, 1e6), &BoxSpec::disabled(), &opts()).unwrap();
    assert!(r.converged);
    for t in &r.theta {
        assert!((t - 4f64.ln()).abs() < 1e-4);
    }
    assert_eq!(r.active_diffs, 0);
}

#[test]
fn zero_tau_gives_unpenalized_mle() {
    let h = hist(&[3, 5, 7]);
    for norm in [Penalty::L1, Penalty::L2Sq] {
        let pen = PenaltySpec {
            k: 0,
            tau: 0.0,
            norm,
        };
        let r = fit(&h, &pen, &BoxSpec::disabled(), &opts()).unwrap();
        assert!(r.converged);
        for (t, c) in r.theta.iter().zip([3.0f64, 5.0, 7.0]) {
            assert!((t - c.ln()).abs() < 1e-8);
        }
    }
}

#[test]
fn unbounded_and_dimension_errors() {
    let h = hist(&[3, 0, 7]);
    assert!(matches!(
        fit(&h, &PenaltySpec::l1(0, 0.0), &BoxSpec::disabled(), &opts()),
        Err(HtfError::Unbounded(_))
    ));
    // the box makes the same problem well posed
    let r = fit(&h, &PenaltySpec::l1(0, 0.0), &BoxSpec::default(), &opts()).unwrap();
    let (lo, _) = BoxSpec::default().bounds(&h).unwrap();
    assert_eq!(r.theta[1], lo);
    assert!(r.converged);

    assert!(matches!(
        fit(&h, &PenaltySpec::l1(2, 1.0), &BoxSpec::disabled(), &opts()),
        Err(HtfError::Dimension(_))
    ));
    assert!(fit(&h, &PenaltySpec::l1(0, -1.0), &BoxSpec::disabled(), &opts()).is_err());
    let bad_box = BoxSpec::with_exponent(0.7);
    assert!(fit(&h, &PenaltySpec::l1(0, 1.0), &bad_box, &opts()).is_err());
    let bad_opts = SolverOptions {
        max_iters: 0,
        ..opts()
    };
    assert!(fit(
        &h,
        &PenaltySpec::l1(0, 1.0),
        &BoxSpec::disabled(),
        &bad_opts
    )
    .is_err());
}

#[test]
fn iteration_cap_reports_nonconvergence() {
    let h = hist(&[1, 9, 0, 14, 2, 11, 3, 17, 5, 1, 0, 8]);
    let capped = SolverOptions {
        max_iters: 1,
        tol: 1e-14,
        ..opts()
    };
    let r = fit(&h, &PenaltySpec::l1(1, 3.0), &BoxSpec::disabled(), &capped).unwrap();
    assert!(!r.converged);
    assert!(r.kkt_residual > 1e-14 * 71.0);
}

#[test]
fn objective_field_is_recomputable() {
    let h = hist(&[1, 6, 2, 8, 3, 9]);
    for pen in [
        PenaltySpec::l1(1, 2.0),
        PenaltySpec::l2sq(1, 2.0),
        PenaltySpec::l1(0, 0.5),
    ] {
        let r = fit(&h, &pen, &BoxSpec::disabled(), &opts()).unwrap();
        let again = objective(&h, &pen, &r.theta).unwrap();
        assert!((r.objective - again).abs() <= 1e-10 * again.abs());
        assert!(r.converged);
        assert!(r.kkt_residual <= opts().effective_tol(h.n));
    }
}

#[test]
fn deterministic() {
    let h = hist(&[4, 0, 3, 12, 7, 7, 1, 0, 2, 9]);
    for pen in [PenaltySpec::l1(1, 1.5), PenaltySpec::l2sq(2, 0.4)] {
        let a = fit(&h, &pen, &BoxSpec::default(), &opts()).unwrap();
        let b = fit(&h, &pen, &BoxSpec::default(), &opts()).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn box_constraint_is_respected() {
    let h = hist(&[0, 0, 0, 0, 50, 0, 0, 0, 0, 0, 0, 0]);
    let bx = BoxSpec::with_exponent(0.1);
    let (lo, hi) = bx.bounds(&h).unwrap();
    for pen in [
        PenaltySpec::l1(0, 0.05),
        PenaltySpec::l1(1, 0.05),
        PenaltySpec::l2sq(1, 0.05),
    ] {
        let r = fit(&h, &pen, &bx, &opts()).unwrap();
        assert!(r.converged, "{pen:?} {r:?}");
        assert!(r.theta.iter().all(|&t| t >= lo && t <= hi));
        assert!(
            r.theta.iter().any(|&t| t == lo),
            "expected the lower bound to bind"
        );
    }
}

#[test]
fn l2_gradient_vanishes_at_solution() {
    let h = hist(&[1, 6, 2, 8, 3, 9, 4, 4]);
    let r = fit(
        &h,
        &PenaltySpec::l2sq(1, 2.0),
        &BoxSpec::disabled(),
        &opts(),
    )
    .unwrap();
    let g = l2sq_gradient(&h, 1, 2.0, &r.theta).unwrap();
    assert!(g.iter().all(|v| v.abs() < 1e-8));
}

#[test]
fn single_precision_fit() {
    let counts = [1u64, 6, 2, 8, 3, 9];
    let edges: Vec<f32> = (0..=6).map(|j| j as f32).collect();
    let h = Histogram {
        centers: edges.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect(),
        edges,
        counts: counts.to_vec(),
        delta: 1.0f32,
        n: 29,
    };
    let r = fit(
        &h,
        &PenaltySpec::l1(1, 2.0f32),
        &BoxSpec::disabled(),
        &SolverOptions::default(),
    )
    .unwrap();
    let r64 = fit(
        &hist(&counts),
        &PenaltySpec::l1(1, 2.0),
        &BoxSpec::disabled(),
        &opts(),
    )
    .unwrap();
    assert!(r.converged);
    for (a, b) in r.theta.iter().zip(&r64.theta) {
        assert!((*a as f64 - b).abs() < 1e-3);
    }
}

#[test]
fn warm_start_reaches_same_optimum() {
    let h = hist(&[3, 8, 1, 0, 5, 12, 9, 2, 2, 6]);
    let pen = PenaltySpec::l1(1, 0.7);
    let cold = fit(&h, &pen, &BoxSpec::disabled(), &opts()).unwrap();
    let init = vec![2.0; 10];
    let warm = fit_from(&h, &pen, &BoxSpec::disabled(), &opts(), Some(&init)).unwrap();
    assert!((cold.objective - warm.objective).abs() < 1e-8);
    assert!(fit_from(&h, &pen, &BoxSpec::disabled(), &opts(), Some(&init[..3])).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mass_is_conserved_without_box(counts in prop::collection::vec(0u64..12, 4..40), k in 0usize..3, tau_i in 0usize..3) {
        prop_assume!(counts.len() > k + 1 && counts.iter().sum::<u64>() > 0);
        let tau = [0.1, 1.0, 10.0][tau_i];
        let h = hist(&counts);
        let r = fit(&h, &PenaltySpec::l1(k, tau), &BoxSpec::disabled(), &opts()).unwrap();
        prop_assert!(r.converged);
        let mass: f64 = r.theta.iter().map(|t| t.exp()).sum();
        prop_assert!((mass - h.n as f64).abs() <= 1e-6 * h.n as f64);
        // shifted log-density integrates to one on the grid
        let g: f64 = r.theta.iter().map(|t| h.delta * (t - h.log_scale()).exp()).sum();
        prop_assert!((g - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn larger_tau_never_lowers_optimum(counts in prop::collection::vec(0u64..12, 5..25), k in 0usize..2) {
        prop_assume!(counts.iter().sum::<u64>() > 0);
        let h = hist(&counts);
        let op = DiffOperator::new(k + 1, counts.len()).unwrap();
        let mut last_obj = f64::NEG_INFINITY;
        let mut last_pen = f64::INFINITY;
        for tau in [0.05, 0.2, 1.0, 5.0, 25.0] {
            let r = fit(&h, &PenaltySpec::l1(k, tau), &BoxSpec::disabled(), &opts()).unwrap();
            prop_assert!(r.converged);
            let pen: f64 = op.apply(&r.theta).unwrap().iter().map(|v| v.abs()).sum();
            prop_assert!(r.objective >= last_obj - 1e-8 * (1.0 + last_obj.abs()));
            prop_assert!(pen <= last_pen + 1e-8);
            last_obj = r.objective;
            last_pen = pen;
        }
    }

    #[test]
    fn l2_gradient_matches_finite_differences(theta in prop::collection::vec(-2.0f64..3.0, 3..30), k in 0usize..3, tau in 0.01f64..20.0, seed in 0u64..1000) {
        prop_assume!(theta.len() > k + 1);
        let counts: Vec<u64> = (0..theta.len() as u64).map(|j| (j * 7 + seed) % 13).collect();
        let h = hist(&counts);
        let pen = PenaltySpec::l2sq(k, tau);
        let g = l2sq_gradient(&h, k, tau, &theta).unwrap();
        for j in 0..theta.len() {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[j] += 1e-6;
            tm[j] -= 1e-6;
            let fd = (objective(&h, &pen, &tp).unwrap() - objective(&h, &pen, &tm).unwrap()) / 2e-6;
            prop_assert!((fd - g[j]).abs() <= 1e-4 * g[j].abs().max(1.0), "j={} fd={} g={}", j, fd, g[j]);
        }
    }
}
