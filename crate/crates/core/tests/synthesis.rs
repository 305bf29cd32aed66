mod common;

use common::closed_loop;
use nalgebra::DMatrix;
use robust4ws_core::analysis::eigenvalues;
use robust4ws_core::lmi::{region_alpha, region_cone};
use robust4ws_core::model::{ackermann_input_map, generalized_plant, linearize};
use robust4ws_core::synthesis::{
    certificate_margin, certify, existence_certificate, export_controller, parse_controller, synthesize_pole_placement,
    synthesize_robust, ControllerFile, ControllerKind,
};
use robust4ws_core::{Error, PolytopicPlant, SynthesisSpec, UncertaintyBox, VehicleParams};

fn poly(bounds: &UncertaintyBox) -> PolytopicPlant {
    PolytopicPlant::build(&VehicleParams::nigel(), bounds).unwrap()
}

fn objective(spec: &SynthesisSpec, g1: f64, g2: f64) -> f64 {
    spec.weight_ee * g1 * g1 + spec.weight_ep * g2 * g2
}

#[test]
fn robust_controller_is_certified_on_every_vertex() {
    let poly = poly(&UncertaintyBox::default());
    let spec = SynthesisSpec::default();
    let c = synthesize_robust(&poly, &spec).unwrap();
    assert_eq!(c.kind, ControllerKind::Robust);
    assert!(c.certified);
    assert!(certificate_margin(&c).unwrap() > 0.0);
    let (g1, g2) = (c.gamma1.unwrap(), c.gamma2.unwrap());
    let alpha = region_alpha(spec.alpha);
    let cone = region_cone(spec.cone_angle).unwrap();
    for v in &poly.vertices {
        let cl = closed_loop(v, &c.k);
        assert!(cl.hinf() <= g1 * 1.001);
        assert!(cl.h2() <= g2 * 1.001);
        for z in eigenvalues(&cl.a) {
            assert!(alpha.contains(z) && cone.contains(z), "pole {z}");
        }
    }
    let meta = c.meta.unwrap();
    assert_eq!(meta.n_vars, 34);
    assert_eq!(meta.n_blocks, 67);
    assert!(meta.recheck_margin < 0.0);
}

#[test]
fn scaling_both_weights_leaves_the_design_unchanged() {
    let poly = poly(&UncertaintyBox::default());
    let a = synthesize_robust(&poly, &SynthesisSpec::default()).unwrap();
    let spec = SynthesisSpec { weight_ee: 4.0, weight_ep: 4.0, ..Default::default() };
    let b = synthesize_robust(&poly, &spec).unwrap();
    assert!((a.gamma1.unwrap() - b.gamma1.unwrap()).abs() < 1e-3 * a.gamma1.unwrap());
    assert!((a.gamma2.unwrap() - b.gamma2.unwrap()).abs() < 1e-3 * a.gamma2.unwrap());
}

#[test]
fn shifting_weight_trades_one_bound_for_the_other() {
    let poly = poly(&UncertaintyBox::default());
    let ee = synthesize_robust(&poly, &SynthesisSpec { weight_ee: 10.0, weight_ep: 1.0, ..Default::default() }).unwrap();
    let ep = synthesize_robust(&poly, &SynthesisSpec { weight_ee: 1.0, weight_ep: 10.0, ..Default::default() }).unwrap();
    assert!(ee.gamma1.unwrap() <= ep.gamma1.unwrap() * (1.0 + 1e-4));
    assert!(ep.gamma2.unwrap() <= ee.gamma2.unwrap() * (1.0 + 1e-4));
}

#[test]
fn nested_boxes_give_monotone_optima() {
    let spec = SynthesisSpec::default();
    let boxes = [UncertaintyBox::uniform(0.35, 0.45), UncertaintyBox::uniform(0.2, 0.8), UncertaintyBox::default()];
    let objs: Vec<f64> = boxes
        .iter()
        .map(|b| {
            let c = synthesize_robust(&poly(b), &spec).unwrap();
            objective(&spec, c.gamma1.unwrap(), c.gamma2.unwrap())
        })
        .collect();
    assert!(objs.windows(2).all(|w| w[0] <= w[1] * (1.0 + 1e-4)), "{objs:?}");
}

#[test]
fn degenerate_box_reduces_to_a_single_plant() {
    let p = VehicleParams::nigel();
    let b = UncertaintyBox::point(p.nominal_friction());
    let poly = poly(&b);
    assert!(poly.vertices.windows(2).all(|w| w[0] == w[1]));
    let c = synthesize_robust(&poly, &SynthesisSpec::default()).unwrap();
    assert!(c.certified);
    let robust = synthesize_robust(&self::poly(&UncertaintyBox::default()), &SynthesisSpec::default()).unwrap();
    assert!(c.gamma1.unwrap() <= robust.gamma1.unwrap() && c.gamma2.unwrap() <= robust.gamma2.unwrap());
}

#[test]
fn zero_gain_certification_reports_open_loop_behaviour() {
    let poly = poly(&UncertaintyBox::default());
    let spec = SynthesisSpec::default();
    let k = DMatrix::zeros(4, 2);
    let rep = certify(&k, &poly, &spec, None).unwrap();
    assert!(rep.norms_ok);
    for (v, cert) in poly.vertices.iter().zip(&rep.vertices) {
        let cl = closed_loop(v, &k);
        assert!((cert.hinf - cl.hinf()).abs() < 1e-5 * cl.hinf());
        assert!((cert.h2 - cl.h2()).abs() < 1e-9 * cl.h2());
        let mut expect = eigenvalues(&v.a_p);
        let mut got = cert.poles.clone();
        expect.sort_by(|a, b| a.re.total_cmp(&b.re));
        got.sort_by(|a, b| a.re.total_cmp(&b.re));
        for (a, b) in expect.iter().zip(&got) {
            assert!((a - b).norm() < 1e-9);
        }
    }
    // tight bounds on the open loop must fail
    let rep = certify(&k, &poly, &spec, Some((0.1, 0.1))).unwrap();
    assert!(!rep.norms_ok && !rep.pass());
    assert!(!rep.norm_violations(0.1, 0.1).is_empty());
}

#[test]
fn certify_rejects_wrong_gain_shape() {
    let poly = poly(&UncertaintyBox::default());
    assert!(matches!(
        certify(&DMatrix::zeros(2, 2), &poly, &SynthesisSpec::default(), None),
        Err(Error::DimensionMismatch(_))
    ));
}

#[test]
fn ackermann_design_is_no_better_than_independent_steering() {
    let full = poly(&UncertaintyBox::default());
    let ack = full.restrict_inputs(&ackermann_input_map()).unwrap();
    let spec = SynthesisSpec::default();
    let a = synthesize_robust(&full, &spec).unwrap();
    let b = synthesize_robust(&ack, &spec).unwrap();
    assert_eq!(b.k.shape(), (1, 2));
    assert!(b.certified);
    assert!(a.gamma1.unwrap() < b.gamma1.unwrap() && a.gamma2.unwrap() < b.gamma2.unwrap());
    // the reduced gain acts on the physical wheels through the map
    let phys = ackermann_input_map() * &b.k;
    let rep = certify(&phys, &full, &spec, Some((b.gamma1.unwrap(), b.gamma2.unwrap()))).unwrap();
    assert!(rep.pass());
}

#[test]
fn pole_placement_meets_nominal_region_only() {
    let p = VehicleParams::nigel();
    let nominal = generalized_plant(&linearize(&p, &p.nominal_friction()).unwrap());
    let c = synthesize_pole_placement(&nominal, -2.0).unwrap();
    assert_eq!(c.kind, ControllerKind::PolePlacement);
    let poles = eigenvalues(&(&nominal.a_p + &nominal.b_p * &c.k));
    assert!(poles.iter().all(|z| z.re < -2.0));
    // a demanding decay rate forces a nonzero gain
    let fast = synthesize_pole_placement(&nominal, -60.0).unwrap();
    let poles = eigenvalues(&(&nominal.a_p + &nominal.b_p * &fast.k));
    assert!(poles.iter().all(|z| z.re < -60.0), "{poles:?}");
    assert!(fast.k.norm() > 1e-3);
    assert!(synthesize_pole_placement(&nominal, 0.5).is_err());
}

#[test]
fn infeasible_norm_cap_is_reported() {
    let spec = SynthesisSpec { gamma1_max: Some(0.01), ..Default::default() };
    let err = synthesize_robust(&poly(&UncertaintyBox::default()), &spec).unwrap_err();
    assert!(matches!(err, Error::Infeasible(_)), "{err}");
}

#[test]
fn existence_conditions_hold_above_the_synthesized_bounds() {
    let poly = poly(&UncertaintyBox::default());
    let c = synthesize_robust(&poly, &SynthesisSpec::default()).unwrap();
    let cert = existence_certificate(&poly, c.gamma1.unwrap() * 1.01, c.gamma2.unwrap() * 1.01).unwrap();
    assert!(cert.all_pass(), "{:?}", cert.hinf.iter().chain(&cert.h2).flat_map(|r| r.failing()).collect::<Vec<_>>());
    assert!(existence_certificate(&poly, 0.0, 1.0).is_err());
    assert!(existence_certificate(&poly, 0.01, 0.01).is_err());
}

#[test]
fn exported_controller_round_trips() {
    let poly = poly(&UncertaintyBox::default());
    let c = synthesize_robust(&poly, &SynthesisSpec::default()).unwrap();
    let file = ControllerFile::from(&c);
    let text = export_controller(&file);
    let back = parse_controller(&text).unwrap();
    assert_eq!(back, file);
    assert_eq!(back.polytope_hash, poly.hash());
    assert_eq!(export_controller(&back), text);
}
