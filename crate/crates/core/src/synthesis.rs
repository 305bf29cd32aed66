//! Robust multi-objective state-feedback synthesis over the friction
//! polytope, the nominal pole-placement baseline, and a-posteriori
//! certification of any gain against every vertex.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{eigenvalues, h2_norm, hinf_norm, min_eig_symmetric, sym_eigen, C64};
use crate::error::{Error, Result};
use crate::lmi::{
    dstab_block, h2_blocks, hinf_block, left_null_basis, region_alpha, region_cone, AffineExpr, ConstraintBlock,
    ExistenceReport, Sense, VariableSet,
};
use crate::model::GeneralizedPlant;
use crate::sdpsolve::{check_solution, solve, KktResiduals, SdpOptions, SdpProblem, SdpStatus};
use crate::uncertainty::PolytopicPlant;

/// Relative slack allowed between certified bounds and recomputed norms.
pub const CERT_REL_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisSpec {
    /// Decay-rate bound: closed-loop poles satisfy Re < alpha.
    pub alpha: f64,
    /// Inner angle of the conic sector (half-angle phi / 2 off the negative real axis).
    pub cone_angle: f64,
    pub weight_ee: f64,
    pub weight_ep: f64,
    /// Optional hard caps on gamma1 / gamma2.
    pub gamma1_max: Option<f64>,
    pub gamma2_max: Option<f64>,
}

impl Default for SynthesisSpec {
    fn default() -> Self {
        Self {
            alpha: -0.1,
            cone_angle: 3.0 * PI / 4.0,
            weight_ee: 1.0,
            weight_ep: 1.0,
            gamma1_max: None,
            gamma2_max: None,
        }
    }
}

impl SynthesisSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha < 0.0) {
            return Err(Error::InvalidParams(format!("alpha must be negative, got {}", self.alpha)));
        }
        if !(self.cone_angle > 0.0 && self.cone_angle < PI) {
            return Err(Error::InvalidAngle(self.cone_angle));
        }
        if !(self.weight_ee >= 0.0 && self.weight_ep >= 0.0) || self.weight_ee + self.weight_ep <= 0.0 {
            return Err(Error::InvalidParams("tradeoff weights must be nonnegative and not both zero".into()));
        }
        for g in [self.gamma1_max, self.gamma2_max].into_iter().flatten() {
            if !(g > 0.0) {
                return Err(Error::InvalidParams(format!("gamma cap must be positive, got {g}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    Robust,
    PolePlacement,
    OpenLoop,
}

impl ControllerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerKind::Robust => "robust",
            ControllerKind::PolePlacement => "pole-placement",
            ControllerKind::OpenLoop => "open-loop",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexCertificate {
    pub rho: [f64; 4],
    pub poles: Vec<C64>,
    pub in_alpha: bool,
    pub in_cone: bool,
    /// Closed-loop H-infinity norm w -> y1 (infinite if unstable).
    pub hinf: f64,
    /// Closed-loop H2 norm w -> y2 (infinite if unstable).
    pub h2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificationReport {
    pub alpha: f64,
    pub cone_angle: f64,
    pub vertices: Vec<VertexCertificate>,
    pub worst_hinf: f64,
    pub worst_h2: f64,
    /// Largest closed-loop real part over all vertices.
    pub worst_real: f64,
    pub region_ok: bool,
    /// Whether recomputed norms respect the bounds passed to `certify` (true when none given).
    pub norms_ok: bool,
}

impl CertificationReport {
    pub fn pass(&self) -> bool {
        self.region_ok && self.norms_ok
    }

    /// Indices of vertices whose poles leave the region.
    pub fn region_violations(&self) -> Vec<usize> {
        self.vertices
            .iter()
            .enumerate()
            .filter(|(_, v)| !(v.in_alpha && v.in_cone))
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices of vertices whose norms exceed the given bounds by more than the tolerance.
    pub fn norm_violations(&self, gamma1: f64, gamma2: f64) -> Vec<usize> {
        self.vertices
            .iter()
            .enumerate()
            .filter(|(_, v)| v.hinf > gamma1 * (1.0 + CERT_REL_TOL) || v.h2 > gamma2 * (1.0 + CERT_REL_TOL))
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveMetadata {
    pub status: SdpStatus,
    pub n_vars: usize,
    pub n_blocks: usize,
    pub iterations: usize,
    pub newton_steps: usize,
    pub objective: f64,
    pub kkt: KktResiduals,
    pub x_condition: f64,
    /// Worst block margin on an independent re-evaluation of the solver output.
    pub recheck_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustController {
    pub kind: ControllerKind,
    /// Gain in physical actuator coordinates (n_u x n_x).
    pub k: DMatrix<f64>,
    /// Lyapunov certificate.
    pub x: DMatrix<f64>,
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
    pub vertex_poles: Vec<Vec<C64>>,
    pub certification: Option<CertificationReport>,
    pub certified: bool,
    pub spec: Option<SynthesisSpec>,
    pub polytope_hash: String,
    pub meta: Option<SolveMetadata>,
}

impl RobustController {
    /// Zero gain; the open-loop "controller" of the benchmark.
    pub fn open_loop(n_inputs: usize, n_states: usize) -> Self {
        Self {
            kind: ControllerKind::OpenLoop,
            k: DMatrix::zeros(n_inputs, n_states),
            x: DMatrix::identity(n_states, n_states),
            gamma1: None,
            gamma2: None,
            vertex_poles: Vec::new(),
            certification: None,
            certified: false,
            spec: None,
            polytope_hash: String::new(),
            meta: None,
        }
    }
}

/// `K = W X^-1` with an explicit inverse of the (2x2) certificate.
fn recover_gain(w: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let (vals, _) = sym_eigen(x)?;
    let lmin = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let lmax = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lmin > 0.0) {
        return Err(Error::NumericFailure(format!("Lyapunov certificate not positive definite (min eig {lmin:.3e})")));
    }
    let cond = lmax / lmin;
    if cond > 1e8 {
        log::warn!("Lyapunov certificate is ill-conditioned (cond {cond:.3e})");
    }
    let xinv = if x.nrows() == 2 {
        let det = x[(0, 0)] * x[(1, 1)] - x[(0, 1)] * x[(1, 0)];
        DMatrix::from_row_slice(2, 2, &[x[(1, 1)] / det, -x[(0, 1)] / det, -x[(1, 0)] / det, x[(0, 0)] / det])
    } else {
        x.clone().try_inverse().ok_or(Error::NumericFailure("singular Lyapunov certificate".into()))?
    };
    Ok((w * xinv, cond))
}

fn push_unique(p: &mut SdpProblem, b: ConstraintBlock) {
    let dup = p
        .blocks
        .iter()
        .any(|q| q.sense == b.sense && q.constant == b.constant && q.terms == b.terms);
    if !dup {
        p.add(b);
    }
}

/// Closed-loop poles and norms of `A + B K` at every vertex.
pub fn certify(k: &DMatrix<f64>, poly: &PolytopicPlant, spec: &SynthesisSpec, bounds: Option<(f64, f64)>) -> Result<CertificationReport> {
    let v0 = poly.vertices.first().ok_or_else(|| Error::InvalidParams("empty polytope".into()))?;
    if k.shape() != (v0.n_inputs(), v0.n_states()) {
        return Err(Error::DimensionMismatch(format!(
            "gain is {:?}, plant needs {:?}",
            k.shape(),
            (v0.n_inputs(), v0.n_states())
        )));
    }
    if k.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParams("gain has non-finite entries".into()));
    }
    let alpha = region_alpha(spec.alpha);
    let cone = region_cone(spec.cone_angle)?;
    let vertices: Vec<VertexCertificate> = poly
        .vertices
        .par_iter()
        .zip(poly.corners.par_iter())
        .map(|(v, rho)| {
            let a = &v.a_p + &v.b_p * k;
            let poles = eigenvalues(&a);
            let in_alpha = poles.iter().all(|z| alpha.contains(*z));
            let in_cone = poles.iter().all(|z| cone.contains(*z));
            let c1 = &v.c_p1 + &v.b_y1 * k;
            let c2 = &v.c_p2 + &v.b_y2 * k;
            let hinf = hinf_norm(&a, &v.d_p, &c1, &v.d_y, 1e-6).unwrap_or(f64::INFINITY);
            let zero = DMatrix::zeros(c2.nrows(), v.d_p.ncols());
            let h2 = h2_norm(&a, &v.d_p, &c2, &zero).unwrap_or(f64::INFINITY);
            VertexCertificate { rho: *rho, poles, in_alpha, in_cone, hinf, h2 }
        })
        .collect();
    let worst_hinf = vertices.iter().map(|v| v.hinf).fold(0.0, f64::max);
    let worst_h2 = vertices.iter().map(|v| v.h2).fold(0.0, f64::max);
    let worst_real = vertices
        .iter()
        .flat_map(|v| v.poles.iter().map(|z| z.re))
        .fold(f64::NEG_INFINITY, f64::max);
    let region_ok = vertices.iter().all(|v| v.in_alpha && v.in_cone);
    let norms_ok = match bounds {
        Some((g1, g2)) => worst_hinf <= g1 * (1.0 + CERT_REL_TOL) && worst_h2 <= g2 * (1.0 + CERT_REL_TOL),
        None => true,
    };
    Ok(CertificationReport {
        alpha: spec.alpha,
        cone_angle: spec.cone_angle,
        vertices,
        worst_hinf,
        worst_h2,
        worst_real,
        region_ok,
        norms_ok,
    })
}

/// The assembled robust synthesis SDP and handles to its variables.
pub struct RobustProblem {
    pub problem: SdpProblem,
    pub x: AffineExpr,
    pub w: AffineExpr,
    pub z: AffineExpr,
    pub g1: AffineExpr,
    pub g2: AffineExpr,
}

/// Assembles variables (X, W, Z, g1 = gamma1^2, g2 = gamma2^2) and, for every
/// vertex, the decay-rate, cone, H-infinity and H2 blocks with a common X.
pub fn build_robust_problem(poly: &PolytopicPlant, spec: &SynthesisSpec) -> Result<RobustProblem> {
    spec.validate()?;
    let v0 = poly.vertices.first().ok_or_else(|| Error::InvalidParams("empty polytope".into()))?;
    let (n, nu, ny2) = (v0.n_states(), v0.n_inputs(), v0.c_p2.nrows());
    let mut vars = VariableSet::new();
    let x = vars.symmetric("X", n).expr;
    let w = vars.matrix("W", nu, n).expr;
    let z = vars.symmetric("Z", ny2).expr;
    let g1 = vars.scalar("g1").expr;
    let g2 = vars.scalar("g2").expr;
    let mut p = SdpProblem::new(&vars);

    let ra = region_alpha(spec.alpha);
    let rc = region_cone(spec.cone_angle)?;
    p.add(ConstraintBlock::new("X > 0", x.scale(-1.0), Sense::NegativeDefinite)?);
    for (i, v) in poly.vertices.iter().enumerate() {
        let ax = crate::lmi::closed_loop_ax(v, &x, &w);
        push_unique(&mut p, dstab_block(&ra, &ax, &x, format!("v{i} alpha"))?);
        push_unique(&mut p, dstab_block(&rc, &ax, &x, format!("v{i} cone"))?);
        push_unique(&mut p, hinf_block(v, &x, &w, &g1, format!("v{i} hinf"))?);
        for b in h2_blocks(v, &x, &w, &z, &g2, &format!("v{i}"))? {
            push_unique(&mut p, b);
        }
    }
    if let Some(cap) = spec.gamma1_max {
        let e = g1.add_constant(&DMatrix::from_element(1, 1, -cap * cap));
        p.add(ConstraintBlock::new("gamma1 cap", e, Sense::NegativeDefinite)?);
    }
    if let Some(cap) = spec.gamma2_max {
        let e = g2.add_constant(&DMatrix::from_element(1, 1, -cap * cap));
        p.add(ConstraintBlock::new("gamma2 cap", e, Sense::NegativeDefinite)?);
    }
    p.minimize(&g1.scale(spec.weight_ee).add(&g2.scale(spec.weight_ep)))?;
    Ok(RobustProblem { problem: p, x, w, z, g1, g2 })
}

fn metadata(p: &SdpProblem, sol: &crate::sdpsolve::SdpSolution, cond: f64) -> Result<SolveMetadata> {
    Ok(SolveMetadata {
        status: sol.status,
        n_vars: p.n_vars,
        n_blocks: p.blocks.len(),
        iterations: sol.iterations,
        newton_steps: sol.newton_steps,
        objective: sol.objective,
        kkt: sol.kkt,
        x_condition: cond,
        recheck_margin: check_solution(p, &sol.x)?.worst(),
    })
}

pub fn synthesize_robust(poly: &PolytopicPlant, spec: &SynthesisSpec) -> Result<RobustController> {
    synthesize_robust_with(poly, spec, &SdpOptions::default())
}

pub fn synthesize_robust_with(poly: &PolytopicPlant, spec: &SynthesisSpec, opts: &SdpOptions) -> Result<RobustController> {
    let rp = build_robust_problem(poly, spec)?;
    let sol = solve(&rp.problem, opts)?.into_result()?;
    let x = rp.x.eval(&sol.x);
    let w = rp.w.eval(&sol.x);
    let (k, cond) = recover_gain(&w, &x)?;
    let gamma1 = rp.g1.eval(&sol.x)[(0, 0)].max(0.0).sqrt();
    let gamma2 = rp.g2.eval(&sol.x)[(0, 0)].max(0.0).sqrt();
    let meta = metadata(&rp.problem, &sol, cond)?;
    if meta.recheck_margin > 0.0 {
        return Err(Error::CertificationFailed(format!(
            "solver output violates a block on re-evaluation (margin {:.3e})",
            meta.recheck_margin
        )));
    }
    let report = certify(&k, poly, spec, Some((gamma1, gamma2)))?;
    let certified = report.pass();
    if !certified {
        log::warn!(
            "a-posteriori certification failed: region {}, worst hinf {:.6e} vs {:.6e}, worst h2 {:.6e} vs {:.6e}",
            report.region_ok,
            report.worst_hinf,
            gamma1,
            report.worst_h2,
            gamma2
        );
    }
    Ok(RobustController {
        kind: ControllerKind::Robust,
        k,
        x,
        gamma1: Some(gamma1),
        gamma2: Some(gamma2),
        vertex_poles: report.vertices.iter().map(|v| v.poles.clone()).collect(),
        certification: Some(report),
        certified,
        spec: Some(spec.clone()),
        polytope_hash: poly.hash(),
        meta: Some(meta),
    })
}

/// Non-robust baseline: nominal plant only, poles in `Re < alpha`, smallest
/// `trace(W W^T)` with `X >= I` fixing the scale of the certificate.
pub fn synthesize_pole_placement(nominal: &GeneralizedPlant, alpha: f64) -> Result<RobustController> {
    if !(alpha < 0.0) {
        return Err(Error::InvalidParams(format!("alpha must be negative, got {alpha}")));
    }
    let (n, nu) = (nominal.n_states(), nominal.n_inputs());
    let mut vars = VariableSet::new();
    let x = vars.symmetric("X", n).expr;
    let w = vars.matrix("W", nu, n).expr;
    let t = vars.symmetric("T", nu).expr;
    let mut p = SdpProblem::new(&vars);
    let ax = crate::lmi::closed_loop_ax(nominal, &x, &w);
    p.add(dstab_block(&region_alpha(alpha), &ax, &x, "nominal alpha")?);
    p.add(ConstraintBlock::new(
        "X >= I",
        x.add_constant(&-DMatrix::<f64>::identity(n, n)),
        Sense::PositiveSemidefinite,
    )?);
    // T >= W W^T by Schur complement
    let epi = AffineExpr::blocks(&[vec![t.clone(), w.clone()], vec![w.transpose(), AffineExpr::identity(n)]])?;
    p.add(ConstraintBlock::new("gain epigraph", epi, Sense::PositiveSemidefinite)?);
    p.minimize(&t.trace())?;
    let sol = solve(&p, &SdpOptions::default())?.into_result()?;
    let xv = x.eval(&sol.x);
    let (k, cond) = recover_gain(&w.eval(&sol.x), &xv)?;
    let meta = metadata(&p, &sol, cond)?;
    let poles = eigenvalues(&(&nominal.a_p + &nominal.b_p * &k));
    Ok(RobustController {
        kind: ControllerKind::PolePlacement,
        k,
        x: xv,
        gamma1: None,
        gamma2: None,
        vertex_poles: vec![poles],
        certification: None,
        certified: false,
        spec: Some(SynthesisSpec { alpha, ..SynthesisSpec::default() }),
        polytope_hash: String::new(),
        meta: Some(meta),
    })
}

/// Result of the (X, Y) existence-certificate diagnostic at a fixed gamma pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ExistenceCertificate {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub hinf: Vec<ExistenceReport>,
    pub h2: Vec<ExistenceReport>,
}

impl ExistenceCertificate {
    pub fn all_pass(&self) -> bool {
        self.hinf.iter().chain(&self.h2).all(ExistenceReport::all_pass)
    }
}

fn perp_stack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    s.view_mut((0, 0), top.shape()).copy_from(top);
    s.view_mut((top.nrows(), 0), bottom.shape()).copy_from(bottom);
    left_null_basis(&s)
}

/// Minimizes `trace(X + Y)` subject to the projected H-infinity and H2
/// existence inequalities at every vertex for fixed (gamma1, gamma2), then
/// re-evaluates the full existence conditions at the optimum. The rank test
/// is taken at full controller order; a static gain comes from the
/// W-substitution path instead.
pub fn existence_certificate(poly: &PolytopicPlant, gamma1: f64, gamma2: f64) -> Result<ExistenceCertificate> {
    if !(gamma1 > 0.0 && gamma2 > 0.0) {
        return Err(Error::InvalidParams("gamma values must be positive".into()));
    }
    let v0 = poly.vertices.first().ok_or_else(|| Error::InvalidParams("empty polytope".into()))?;
    let n = v0.n_states();
    let mut vars = VariableSet::new();
    let x = vars.symmetric("X", n).expr;
    let y = vars.symmetric("Y", n).expr;
    let mut p = SdpProblem::new(&vars);
    let g1sq = gamma1 * gamma1;
    for (i, v) in poly.vertices.iter().enumerate() {
        let ny = v.c_p1.nrows();
        let nw = v.d_p.ncols();
        // hinf (a): in X
        let na = perp_stack(&v.b_p, &v.b_y1);
        if na.nrows() > 0 {
            let tl = x.lmul(&v.a_p).sym().add_constant(&(&v.d_p * v.d_p.transpose()));
            let tr = x.rmul(&v.c_p1.transpose()).add_constant(&(&v.d_p * v.d_y.transpose()));
            let br = AffineExpr::constant(&v.d_y * v.d_y.transpose() - DMatrix::identity(ny, ny) * g1sq);
            let q = AffineExpr::blocks(&[vec![tl, tr.clone()], vec![tr.transpose(), br]])?;
            push_unique(&mut p, ConstraintBlock::new(format!("v{i} hinf-a"), q.lmul(&na).rmul(&na.transpose()), Sense::NegativeDefinite)?);
        }
        // hinf (b): in Y
        let nb = perp_stack(&v.m_p.transpose(), &v.d_z.transpose());
        if nb.nrows() > 0 {
            let tl = y.rmul(&v.a_p).sym().add_constant(&(v.c_p1.transpose() * &v.c_p1));
            let tr = y.rmul(&v.d_p).add_constant(&(v.c_p1.transpose() * &v.d_y));
            let br = AffineExpr::constant(v.d_y.transpose() * &v.d_y - DMatrix::identity(nw, nw) * g1sq);
            let q = AffineExpr::blocks(&[vec![tl, tr.clone()], vec![tr.transpose(), br]])?;
            push_unique(&mut p, ConstraintBlock::new(format!("v{i} hinf-b"), q.lmul(&nb).rmul(&nb.transpose()), Sense::NegativeDefinite)?);
        }
        // h2 (a): projected Lyapunov and output bound, in X
        let n2 = left_null_basis(&v.b_p);
        if n2.nrows() > 0 {
            let lyap = x.lmul(&v.a_p).sym().add_constant(&(&v.d_p * v.d_p.transpose()));
            push_unique(&mut p, ConstraintBlock::new(format!("v{i} h2-a"), lyap.lmul(&n2).rmul(&n2.transpose()), Sense::NegativeDefinite)?);
        }
        let ny2 = v.c_p2.nrows();
        let out = x
            .lmul(&v.c_p2)
            .rmul(&v.c_p2.transpose())
            .add_constant(&(-DMatrix::<f64>::identity(ny2, ny2) * (gamma2 * gamma2)));
        push_unique(&mut p, ConstraintBlock::new(format!("v{i} h2-output"), out, Sense::NegativeDefinite)?);
        // h2 (b): in Y
        if nb.nrows() > 0 {
            let q = AffineExpr::blocks(&[
                vec![y.rmul(&v.a_p).sym(), y.rmul(&v.d_p)],
                vec![y.rmul(&v.d_p).transpose(), AffineExpr::identity(nw).scale(-1.0)],
            ])?;
            push_unique(&mut p, ConstraintBlock::new(format!("v{i} h2-b"), q.lmul(&nb).rmul(&nb.transpose()), Sense::NegativeDefinite)?);
        }
    }
    let eye = AffineExpr::identity(n);
    let couple = |g: f64| AffineExpr::blocks(&[vec![x.clone(), eye.scale(g)], vec![eye.scale(g), y.clone()]]);
    p.add(ConstraintBlock::new("hinf coupling", couple(gamma1)?, Sense::PositiveSemidefinite)?);
    p.add(ConstraintBlock::new("h2 coupling", couple(1.0)?, Sense::PositiveSemidefinite)?);
    p.minimize(&x.add(&y).trace())?;
    let sol = solve(&p, &SdpOptions::default())?.into_result()?;
    let (xv, yv) = (x.eval(&sol.x), y.eval(&sol.x));
    let hinf = poly
        .vertices
        .iter()
        .map(|v| crate::lmi::existence_check_hinf(v, &xv, &yv, gamma1, n))
        .collect::<Result<Vec<_>>>()?;
    let h2 = poly
        .vertices
        .iter()
        .map(|v| crate::lmi::existence_check_h2(v, &xv, &yv, gamma2, n))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExistenceCertificate { x: xv, y: yv, hinf, h2 })
}

/// Contents of an exported controller file.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerFile {
    pub kind: ControllerKind,
    pub k: DMatrix<f64>,
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
    pub spec: Option<SynthesisSpec>,
    pub polytope_hash: String,
}

impl From<&RobustController> for ControllerFile {
    fn from(c: &RobustController) -> Self {
        Self {
            kind: c.kind,
            k: c.k.clone(),
            gamma1: c.gamma1,
            gamma2: c.gamma2,
            spec: c.spec.clone(),
            polytope_hash: c.polytope_hash.clone(),
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |g| format!("{g:e}"))
}

pub fn export_controller(c: &ControllerFile) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# state-feedback gain u = K x, x = [beta, yaw_rate]");
    let _ = writeln!(s, "kind {}", c.kind.as_str());
    let _ = writeln!(s, "K {} {}", c.k.nrows(), c.k.ncols());
    for r in 0..c.k.nrows() {
        let row: Vec<String> = (0..c.k.ncols()).map(|j| format!("{:e}", c.k[(r, j)])).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    let _ = writeln!(s, "gamma1 {}", opt(c.gamma1));
    let _ = writeln!(s, "gamma2 {}", opt(c.gamma2));
    if let Some(sp) = &c.spec {
        let _ = writeln!(s, "alpha {:e}", sp.alpha);
        let _ = writeln!(s, "cone_angle {:e}", sp.cone_angle);
        let _ = writeln!(s, "weight_ee {:e}", sp.weight_ee);
        let _ = writeln!(s, "weight_ep {:e}", sp.weight_ep);
        let _ = writeln!(s, "gamma1_max {}", opt(sp.gamma1_max));
        let _ = writeln!(s, "gamma2_max {}", opt(sp.gamma2_max));
    }
    let _ = writeln!(s, "polytope {}", if c.polytope_hash.is_empty() { "none" } else { &c.polytope_hash });
    s
}

pub fn parse_controller(text: &str) -> Result<ControllerFile> {
    let err = |m: String| Error::Parse(m);
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
    let mut kind = None;
    let mut k = None;
    let (mut gamma1, mut gamma2) = (None, None);
    let mut spec = SynthesisSpec::default();
    let mut has_spec = false;
    let mut hash = String::new();
    let parse_f = |v: &str| v.parse::<f64>().map_err(|e| err(format!("bad number '{v}': {e}")));
    let parse_opt = |v: &str| if v == "none" { Ok(None) } else { parse_f(v).map(Some) };
    while let Some(line) = lines.next() {
        let (key, val) = line.split_once(' ').map_or((line, ""), |(a, b)| (a, b.trim()));
        match key {
            "kind" => {
                kind = Some(match val {
                    "robust" => ControllerKind::Robust,
                    "pole-placement" => ControllerKind::PolePlacement,
                    "open-loop" => ControllerKind::OpenLoop,
                    other => return Err(err(format!("unknown controller kind '{other}'"))),
                })
            }
            "K" => {
                let dims: Vec<usize> = val
                    .split_whitespace()
                    .map(|d| d.parse().map_err(|e| err(format!("bad K dimension: {e}"))))
                    .collect::<Result<_>>()?;
                let [r, c] = dims[..] else {
                    return Err(err("K header needs rows and cols".into()));
                };
                let mut m = DMatrix::zeros(r, c);
                for i in 0..r {
                    let row = lines.next().ok_or_else(|| err("truncated K".into()))?;
                    let vals: Vec<f64> = row.split_whitespace().map(parse_f).collect::<Result<_>>()?;
                    if vals.len() != c {
                        return Err(err(format!("K row {i} has {} entries, expected {c}", vals.len())));
                    }
                    for (j, v) in vals.into_iter().enumerate() {
                        m[(i, j)] = v;
                    }
                }
                k = Some(m);
            }
            "gamma1" => gamma1 = parse_opt(val)?,
            "gamma2" => gamma2 = parse_opt(val)?,
            "alpha" => (spec.alpha, has_spec) = (parse_f(val)?, true),
            "cone_angle" => (spec.cone_angle, has_spec) = (parse_f(val)?, true),
            "weight_ee" => (spec.weight_ee, has_spec) = (parse_f(val)?, true),
            "weight_ep" => (spec.weight_ep, has_spec) = (parse_f(val)?, true),
            "gamma1_max" => (spec.gamma1_max, has_spec) = (parse_opt(val)?, true),
            "gamma2_max" => (spec.gamma2_max, has_spec) = (parse_opt(val)?, true),
            "polytope" => hash = if val == "none" { String::new() } else { val.to_string() },
            other => return Err(err(format!("unknown key '{other}'"))),
        }
    }
    let k = k.ok_or_else(|| err("missing K".into()))?;
    if k.iter().any(|v| !v.is_finite()) {
        return Err(err("K has non-finite entries".into()));
    }
    Ok(ControllerFile {
        kind: kind.ok_or_else(|| err("missing kind".into()))?,
        k,
        gamma1,
        gamma2,
        spec: has_spec.then_some(spec),
        polytope_hash: hash,
    })
}

/// Smallest eigenvalue of the certificate; positive for a valid controller.
pub fn certificate_margin(c: &RobustController) -> Result<f64> {
    min_eig_symmetric(&c.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generalized_plant, linearize, VehicleParams};
    use crate::uncertainty::UncertaintyBox;

    #[test]
    fn spec_validation() {
        assert!(SynthesisSpec::default().validate().is_ok());
        assert!(SynthesisSpec { alpha: 0.1, ..Default::default() }.validate().is_err());
        assert!(SynthesisSpec { cone_angle: PI, ..Default::default() }.validate().is_err());
        assert!(SynthesisSpec { weight_ee: 0.0, weight_ep: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn robust_problem_size() {
        let poly = PolytopicPlant::build(&VehicleParams::nigel(), &UncertaintyBox::default()).unwrap();
        let rp = build_robust_problem(&poly, &SynthesisSpec::default()).unwrap();
        assert_eq!(rp.problem.n_vars, 3 + 8 + 21 + 2);
        // per vertex: alpha, cone, hinf, h2 Lyapunov; shared: X > 0, H2 output, trace
        assert_eq!(rp.problem.blocks.len(), 16 * 4 + 3);
    }

    #[test]
    fn pole_placement_nominal() {
        let g = generalized_plant(&linearize(&VehicleParams::nigel(), &[0.4; 4]).unwrap());
        let c = synthesize_pole_placement(&g, -2.0).unwrap();
        assert!(c.vertex_poles[0].iter().all(|z| z.re < -2.0));
        assert!(c.gamma1.is_none());
    }

    #[test]
    fn controller_file_round_trip() {
        let f = ControllerFile {
            kind: ControllerKind::Robust,
            k: DMatrix::from_row_slice(4, 2, &[0.1, -0.2, 0.3, 1e-9, -4.0, 5.5, 6.0, -7.25]),
            gamma1: Some(0.198),
            gamma2: None,
            spec: Some(SynthesisSpec::default()),
            polytope_hash: "abc123".into(),
        };
        let text = export_controller(&f);
        assert_eq!(parse_controller(&text).unwrap(), f);
        assert!(parse_controller("kind robust\nK 1 2\n1.0\n").is_err());
        assert!(parse_controller("kind robust\nfoo 1\n").is_err());
    }
}
