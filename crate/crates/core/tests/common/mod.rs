#![allow(dead_code)]

use nalgebra::DMatrix;
use robust4ws_core::analysis::{eigenvalues, h2_norm, hinf_norm};
use robust4ws_core::lmi::{dstab_block, h2_blocks, hinf_block, region_alpha, region_cone, AffineExpr, ConstraintBlock, LmiRegion, Sense, VariableSet};
use robust4ws_core::sdpsolve::{find_feasible, solve, SdpOptions, SdpProblem, SdpSolution};
use robust4ws_core::GeneralizedPlant;

pub fn regions(alpha: f64, phi: f64) -> Vec<LmiRegion> {
    vec![region_alpha(alpha), region_cone(phi).unwrap()]
}

/// Smallest normalized distance of the spectrum of `a` to the boundary of
/// any region, and whether the whole spectrum lies inside all of them.
pub fn spectrum_membership(a: &DMatrix<f64>, regions: &[LmiRegion]) -> (bool, f64) {
    let mut inside = true;
    let mut margin = f64::INFINITY;
    for z in eigenvalues(a) {
        for r in regions {
            let t = r.test_value(z);
            inside &= t < 0.0;
            margin = margin.min(t.abs() / (1.0 + z.norm()));
        }
    }
    (inside, margin)
}

/// Whether some X > 0 certifies every region for the fixed matrix `a`.
pub fn region_lmi_feasible(a: &DMatrix<f64>, regions: &[LmiRegion]) -> bool {
    let n = a.nrows();
    let mut vars = VariableSet::new();
    let x = vars.symmetric("X", n).expr;
    let mut p = SdpProblem::new(&vars);
    p.add(ConstraintBlock::new("X > 0", x.scale(-1.0), Sense::NegativeDefinite).unwrap());
    let ax = x.lmul(a);
    for (i, r) in regions.iter().enumerate() {
        p.add(dstab_block(r, &ax, &x, format!("region {i}")).unwrap());
    }
    find_feasible(&p, &SdpOptions::default()).unwrap().feasible
}

/// min gamma s.t. the bounded-real LMI of (a, b, c, d) holds, in the form
/// that is linear in gamma itself.
pub fn bounded_real_problem(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>) -> (SdpProblem, usize) {
    let (n, m, q) = (a.nrows(), b.ncols(), c.nrows());
    let mut vars = VariableSet::new();
    let pm = vars.symmetric("P", n).expr;
    let g = vars.scalar("gamma");
    let gi = g.indices[0];
    let mut p = SdpProblem::new(&vars);
    let pa = pm.rmul(a);
    let pb = pm.rmul(b);
    let expr = AffineExpr::blocks(&[
        vec![pa.sym(), pb.clone(), AffineExpr::constant(c.transpose())],
        vec![pb.transpose(), g.expr.kron_left(&DMatrix::identity(m, m)).scale(-1.0), AffineExpr::constant(d.transpose())],
        vec![AffineExpr::constant(c.clone()), AffineExpr::constant(d.clone()), g.expr.kron_left(&DMatrix::identity(q, q)).scale(-1.0)],
    ])
    .unwrap();
    p.add(ConstraintBlock::new("bounded real", expr, Sense::NegativeDefinite).unwrap());
    p.add(ConstraintBlock::new("P > 0", pm.scale(-1.0), Sense::NegativeDefinite).unwrap());
    p.minimize(&g.expr).unwrap();
    (p, gi)
}

pub struct ClosedLoop {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c1: DMatrix<f64>,
    pub d1: DMatrix<f64>,
    pub c2: DMatrix<f64>,
}

pub fn closed_loop(v: &GeneralizedPlant, k: &DMatrix<f64>) -> ClosedLoop {
    ClosedLoop {
        a: &v.a_p + &v.b_p * k,
        b: v.d_p.clone(),
        c1: &v.c_p1 + &v.b_y1 * k,
        d1: v.d_y.clone(),
        c2: &v.c_p2 + &v.b_y2 * k,
    }
}

impl ClosedLoop {
    pub fn hinf(&self) -> f64 {
        hinf_norm(&self.a, &self.b, &self.c1, &self.d1, 1e-9).unwrap()
    }

    pub fn h2(&self) -> f64 {
        let d = DMatrix::zeros(self.c2.nrows(), self.b.ncols());
        h2_norm(&self.a, &self.b, &self.c2, &d).unwrap()
    }
}

/// Squared-norm bound of the synthesis blocks with the gain fixed through
/// W = K X, so that only X and the bound remain free.
pub fn fixed_gain_bound(v: &GeneralizedPlant, k: &DMatrix<f64>, h2: bool, opts: &SdpOptions) -> SdpSolution {
    let n = v.n_states();
    let mut vars = VariableSet::new();
    let x = vars.symmetric("X", n).expr;
    let g = vars.scalar("g").expr;
    let z = if h2 { Some(vars.symmetric("Z", v.c_p2.nrows()).expr) } else { None };
    let w = x.lmul(k);
    let mut p = SdpProblem::new(&vars);
    p.add(ConstraintBlock::new("X > 0", x.scale(-1.0), Sense::NegativeDefinite).unwrap());
    match &z {
        Some(z) => p.extend(h2_blocks(v, &x, &w, z, &g, "fixed").unwrap()),
        None => p.add(hinf_block(v, &x, &w, &g, "fixed").unwrap()),
    }
    p.minimize(&g).unwrap();
    solve(&p, opts).unwrap()
}

/// Feasibility of the same blocks with the bound frozen at `g`.
pub fn fixed_gain_feasible(v: &GeneralizedPlant, k: &DMatrix<f64>, g: f64, opts: &SdpOptions) -> bool {
    let n = v.n_states();
    let mut vars = VariableSet::new();
    let x = vars.symmetric("X", n).expr;
    let w = x.lmul(k);
    let mut p = SdpProblem::new(&vars);
    p.add(ConstraintBlock::new("X > 0", x.scale(-1.0), Sense::NegativeDefinite).unwrap());
    let g = AffineExpr::constant(DMatrix::from_element(1, 1, g));
    p.add(hinf_block(v, &x, &w, &g, "fixed").unwrap());
    find_feasible(&p, opts).unwrap().feasible
}

/// Solver options for comparing block optima against exact norms. The
/// default strictness shift biases a squared bound upward by about
/// `strict_eps * (1 + ||F0||)`, which is visible at 1e-4 relative once the
/// bound itself is below 1e-3.
pub fn exact_opts() -> SdpOptions {
    SdpOptions { strict_eps: 1e-10, ..SdpOptions::default() }
}

/// Deterministic test matrices with entries in [-scale, scale].
pub fn lcg_matrix(seed: u64, n: usize, scale: f64) -> DMatrix<f64> {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    DMatrix::from_fn(n, n, |_, _| {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let u = (s >> 11) as f64 / (1u64 << 53) as f64;
        scale * (2.0 * u - 1.0)
    })
}
