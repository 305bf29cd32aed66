mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use robust4ws_core::lmi::{AffineExpr, ConstraintBlock, Sense, VariableSet};
use robust4ws_core::sdpsolve::{check_solution, dump, parse_dump, solve, SdpOptions, SdpProblem, SdpStatus};
use robust4ws_core::uncertainty::{PolytopicPlant, UncertaintyBox};
use robust4ws_core::VehicleParams;

fn test_gain() -> DMatrix<f64> {
    DMatrix::from_row_slice(4, 2, &[-0.2, -0.3, -0.2, -0.3, -0.1, 0.4, -0.1, 0.4])
}

#[test]
fn scalar_first_order_bound_is_unity() {
    let one = DMatrix::from_element(1, 1, 1.0);
    let (p, gi) = bounded_real_problem(&(-&one), &one, &one, &DMatrix::zeros(1, 1));
    let sol = solve(&p, &SdpOptions::default()).unwrap();
    assert_eq!(sol.status, SdpStatus::Optimal);
    assert!((sol.x[gi] - 1.0).abs() < 1e-4, "gamma {}", sol.x[gi]);
}

#[test]
fn bounded_real_lemma_agrees_with_hamiltonian_bisection() {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -4.0, -0.4]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let d = DMatrix::zeros(1, 1);
    let (p, gi) = bounded_real_problem(&a, &b, &c, &d);
    let sol = solve(&p, &SdpOptions::default()).unwrap();
    let exact = robust4ws_core::analysis::hinf_norm(&a, &b, &c, &d, 1e-10).unwrap();
    assert!((sol.x[gi] - exact).abs() < 1e-4 * exact, "{} vs {exact}", sol.x[gi]);
}

#[test]
fn synthesis_blocks_with_fixed_gain_reproduce_vertex_norms() {
    let p = VehicleParams::nigel();
    let poly = PolytopicPlant::build(&p, &UncertaintyBox::default()).unwrap();
    for k in [DMatrix::zeros(4, 2), test_gain()] {
        for vi in [0, 5, 15] {
            let v = &poly.vertices[vi];
            let cl = closed_loop(v, &k);
            let sol = fixed_gain_bound(v, &k, false, &exact_opts());
            assert!(sol.is_optimal());
            let gi = sol.x.len() - 1;
            let g = sol.x[gi].sqrt();
            assert!((g - cl.hinf()).abs() < 1e-4 * cl.hinf(), "vertex {vi}: H-inf {g} vs {}", cl.hinf());

            let sol = fixed_gain_bound(v, &k, true, &exact_opts());
            assert!(sol.is_optimal());
            // variables: X (3), g (1), Z (21)
            let g = sol.x[3].sqrt();
            assert!((g - cl.h2()).abs() < 1e-4 * cl.h2(), "vertex {vi}: H2 {g} vs {}", cl.h2());
        }
    }
}

#[test]
fn default_shift_bias_is_bounded() {
    let p = VehicleParams::nigel();
    let poly = PolytopicPlant::build(&p, &UncertaintyBox::default()).unwrap();
    let k = DMatrix::zeros(4, 2);
    for v in &poly.vertices {
        let exact = closed_loop(v, &k).hinf().powi(2);
        let opts = SdpOptions::default();
        let g = fixed_gain_bound(v, &k, false, &opts).x[3];
        // the shift only ever tightens the constraint
        assert!(g >= exact * (1.0 - 1e-6), "{g} < {exact}");
        assert!(g - exact < 20.0 * opts.strict_eps, "bias {}", g - exact);
    }
}

#[test]
fn optimum_is_bracketed_by_feasibility_bisection() {
    let p = VehicleParams::nigel();
    let poly = PolytopicPlant::build(&p, &UncertaintyBox::default()).unwrap();
    let v = &poly.vertices[9];
    let k = test_gain();
    let opts = SdpOptions::default();
    let sol = fixed_gain_bound(v, &k, false, &opts);
    let g_opt = sol.x[3];
    let (mut lo, mut hi) = (0.0, 1.0);
    assert!(fixed_gain_feasible(v, &k, hi, &opts));
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if fixed_gain_feasible(v, &k, mid, &opts) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    assert!((hi - g_opt).abs() < 1e-4 * g_opt, "bisection {hi} vs solver {g_opt}");
    assert!(fixed_gain_feasible(v, &k, g_opt * 1.001, &opts));
    assert!(!fixed_gain_feasible(v, &k, g_opt * 0.999, &opts));
}

#[test]
fn lyapunov_inequality_feasible_for_hurwitz_matrix() {
    let a = DMatrix::from_row_slice(3, 3, &[-1.0, 5.0, 0.0, 0.0, -2.0, 3.0, 0.0, 0.0, -0.5]);
    assert!(region_lmi_feasible(&a, &[robust4ws_core::lmi::region_alpha(0.0)]));
    let unstable = DMatrix::from_row_slice(2, 2, &[0.1, 1.0, 0.0, -1.0]);
    assert!(!region_lmi_feasible(&unstable, &[robust4ws_core::lmi::region_alpha(0.0)]));
}

#[test]
fn weighted_least_trace_problem() {
    // min tr(C X) s.t. X >= A, for diagonal data the optimum is tr(C A)
    let mut vars = VariableSet::new();
    let x = vars.symmetric("X", 3);
    let mut p = SdpProblem::new(&vars);
    let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 0.5]));
    let c = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 2.0]));
    p.add(ConstraintBlock::new("X >= A", x.expr.add_constant(&-&a), Sense::PositiveSemidefinite).unwrap());
    p.minimize(&x.expr.lmul(&c).trace()).unwrap();
    let sol = solve(&p, &SdpOptions::default()).unwrap();
    assert!((sol.objective - 6.0).abs() < 1e-6, "{}", sol.objective);
    assert!(check_solution(&p, &sol.x).unwrap().all_satisfied());
    assert!(sol.kkt.dual < 1e-7 && sol.kkt.complementarity < 1e-7, "{:?}", sol.kkt);
}

#[test]
fn dumped_problem_solves_identically() {
    let one = DMatrix::from_element(1, 1, 1.0);
    let (p, _) = bounded_real_problem(&(-&one * 2.0), &one, &one, &DMatrix::zeros(1, 1));
    let q = parse_dump(&dump(&p)).unwrap();
    let a = solve(&p, &SdpOptions::default()).unwrap();
    let b = solve(&q, &SdpOptions::default()).unwrap();
    assert_eq!(a.x, b.x);
    assert!((a.objective - 0.5).abs() < 1e-4);
}

#[test]
fn unbounded_direction_is_capped_by_the_box() {
    // min x with only x < 0: the box bound keeps the iterate finite
    let mut p = SdpProblem::with_n_vars(1);
    p.add(ConstraintBlock::new("neg", AffineExpr::var(0), Sense::NegativeDefinite).unwrap());
    p.minimize(&AffineExpr::var(0)).unwrap();
    let opts = SdpOptions::default();
    let sol = solve(&p, &opts).unwrap();
    assert!(sol.x[0].is_finite() && sol.x[0] >= -opts.variable_bound);
}

fn arb_matrix(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-4.0f64..4.0, n * n).prop_map(move |v| DMatrix::from_vec(n, n, v))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, max_global_rejects: 4096, ..ProptestConfig::default() })]

    #[test]
    fn region_lmi_matches_spectrum_2x2(a in arb_matrix(2), alpha in -1.5f64..0.5, phi in 0.5f64..3.0) {
        let rs = regions(alpha, phi);
        let (inside, margin) = spectrum_membership(&a, &rs);
        prop_assume!(margin > 1e-3);
        prop_assert_eq!(region_lmi_feasible(&a, &rs), inside);
    }

    #[test]
    fn region_lmi_matches_spectrum_4x4(a in arb_matrix(4), alpha in -1.5f64..0.5, phi in 0.5f64..3.0) {
        let rs = regions(alpha, phi);
        let (inside, margin) = spectrum_membership(&a, &rs);
        prop_assume!(margin > 1e-3);
        prop_assert_eq!(region_lmi_feasible(&a, &rs), inside);
    }
}
