//! Shared fixtures for the benchmarks.

use nalgebra::DMatrix;
use robust4ws_core::bench::{generate_reference, Maneuver, ManeuverSpec, Reference, SimSettings};
use robust4ws_core::synthesis::{build_robust_problem, synthesize_robust};
use robust4ws_core::{PolytopicPlant, SynthesisSpec, UncertaintyBox, VehicleParams};

/// The 16-vertex polytope of the default vehicle and friction box.
pub fn default_polytope() -> PolytopicPlant {
    PolytopicPlant::build(&VehicleParams::nigel(), &UncertaintyBox::default()).expect("default polytope")
}

/// The robust SDP assembled for the default polytope and design targets.
pub fn robust_problem() -> robust4ws_core::sdpsolve::SdpProblem {
    build_robust_problem(&default_polytope(), &SynthesisSpec::default()).expect("robust problem").problem
}

pub fn robust_gain() -> DMatrix<f64> {
    synthesize_robust(&default_polytope(), &SynthesisSpec::default()).expect("robust synthesis").k
}

pub fn reference(m: Maneuver) -> Reference {
    let p = VehicleParams::nigel();
    generate_reference(&ManeuverSpec::default_for(m, p.v), &p, &SimSettings::default()).expect("reference")
}
