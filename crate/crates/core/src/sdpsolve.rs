//! Dense primal log-det barrier solver for small semidefinite programs.
//!
//! Every constraint block is rewritten as `S_k(x) = G_k0 + sum_i x_i G_ki > 0`:
//! negative-definite blocks are negated and shifted by `eps_k I`, PSD blocks
//! are used as-is. A box `|x_i| <= R` keeps the sublevel sets bounded.
//!
//! Phase 1 minimizes a slack `s` with every block relaxed to `S_k + s I > 0`
//! and stops once a centered point with `s < 0` is found. Phase 2 follows
//! the central path of `t c^T x - sum log det S_k` with `t <- growth * t`
//! until the duality-gap estimate `m / t` falls below the tolerance.
//! Dual matrices are recovered from the last Newton step,
//! `Z_k = (S^-1 - S^-1 dS S^-1) / t`, which makes the reported dual
//! residual a linear-algebra residual rather than a centering residual.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analysis::{max_eig_symmetric, min_eig_symmetric};
use crate::error::{Error, Result};
use crate::lmi::{AffineExpr, ConstraintBlock, Sense, VarDescriptor, VarKind, VariableSet};

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub blocks: Vec<ConstraintBlock>,
    pub vars: Vec<VarDescriptor>,
}

impl SdpProblem {
    pub fn new(vars: &VariableSet) -> Self {
        Self {
            n_vars: vars.len(),
            objective: vec![0.0; vars.len()],
            blocks: Vec::new(),
            vars: vars.descriptors().to_vec(),
        }
    }

    /// Problem over `n` anonymous scalar variables `x0 .. x{n-1}`.
    pub fn with_n_vars(n: usize) -> Self {
        let vars = (0..n)
            .map(|i| VarDescriptor { name: format!("x{i}"), kind: VarKind::Scalar })
            .collect();
        Self { n_vars: n, objective: vec![0.0; n], blocks: Vec::new(), vars }
    }

    pub fn add(&mut self, block: ConstraintBlock) {
        self.blocks.push(block);
    }

    pub fn extend(&mut self, blocks: impl IntoIterator<Item = ConstraintBlock>) {
        self.blocks.extend(blocks);
    }

    /// Sets the objective to the (1x1) expression; its constant part is dropped.
    pub fn minimize(&mut self, expr: &AffineExpr) -> Result<()> {
        if expr.shape() != (1, 1) {
            return Err(Error::DimensionMismatch("objective must be scalar".into()));
        }
        let mut c = vec![0.0; self.n_vars];
        for (k, m) in &expr.terms {
            if *k >= self.n_vars {
                return Err(Error::DimensionMismatch(format!("objective references variable {k}")));
            }
            c[*k] = m[(0, 0)];
        }
        self.objective = c;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.n_vars || self.vars.len() != self.n_vars {
            return Err(Error::DimensionMismatch("objective/descriptor length differs from n_vars".into()));
        }
        for b in &self.blocks {
            if let Some(k) = b.max_var() {
                if k >= self.n_vars {
                    return Err(Error::DimensionMismatch(format!(
                        "block '{}' references variable {k} >= {}",
                        b.label, self.n_vars
                    )));
                }
            }
            let d = b.dim();
            if b.constant.shape() != (d, d) || b.terms.values().any(|m| m.shape() != (d, d)) {
                return Err(Error::DimensionMismatch(format!("block '{}' has inconsistent shapes", b.label)));
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, x)| c * x).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpOptions {
    /// Duality-gap target.
    pub tol: f64,
    /// Maximum number of path-following (outer) iterations per phase.
    pub max_iter: usize,
    /// Maximum Newton steps per centering.
    pub max_newton: usize,
    /// Strictness shift for "< 0" blocks, scaled by `1 + ||F_0||_F`.
    pub strict_eps: f64,
    /// Box bound `|x_i| <= R`.
    pub variable_bound: f64,
    /// Barrier parameter growth factor.
    pub growth: f64,
    /// Optional phase-1 starting point.
    pub x0: Option<Vec<f64>>,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            max_newton: 100,
            strict_eps: 1e-7,
            variable_bound: 1e4,
            growth: 20.0,
            x0: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    MaxIter,
    NumericFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktResiduals {
    /// Largest violation of the (shifted) primal constraints; zero in the interior.
    pub primal: f64,
    /// Relative stationarity residual plus any negative dual eigenvalue.
    pub dual: f64,
    /// `sum_k <Z_k, S_k>` including the box multipliers.
    pub complementarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Per block, the largest eigenvalue of the "should be <= 0" form.
    pub margins: Vec<f64>,
    /// Outer iterations of phase 2.
    pub iterations: usize,
    pub phase1_iterations: usize,
    pub newton_steps: usize,
    /// Phase-1 slack at termination (negative means strictly feasible).
    pub phase1_slack: f64,
    pub kkt: KktResiduals,
    pub gap: f64,
    /// Objective at the end of every phase-2 centering.
    pub objective_trace: Vec<f64>,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }

    /// Maps non-optimal statuses onto the crate error type.
    pub fn into_result(self) -> Result<Self> {
        match self.status {
            SdpStatus::Optimal => Ok(self),
            SdpStatus::Infeasible => Err(Error::Infeasible(format!(
                "phase-1 slack converged to {:.3e} >= 0",
                self.phase1_slack
            ))),
            SdpStatus::MaxIter => Err(Error::MaxIter),
            SdpStatus::NumericFailure => Err(Error::NumericFailure("Newton system not positive definite".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockMargin {
    pub label: String,
    pub sense: Sense,
    /// Largest eigenvalue of `F` (negative-definite) or of `-F` (PSD).
    pub margin: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginReport {
    pub blocks: Vec<BlockMargin>,
}

impl MarginReport {
    pub fn all_satisfied(&self) -> bool {
        self.blocks.iter().all(|b| b.satisfied)
    }

    pub fn worst(&self) -> f64 {
        self.blocks.iter().map(|b| b.margin).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn violated(&self) -> Vec<&BlockMargin> {
        self.blocks.iter().filter(|b| !b.satisfied).collect()
    }
}

/// Evaluates every block at `x` independently of the solver.
pub fn check_solution(p: &SdpProblem, x: &[f64]) -> Result<MarginReport> {
    if x.len() != p.n_vars {
        return Err(Error::DimensionMismatch(format!("x has {} entries, problem has {}", x.len(), p.n_vars)));
    }
    let blocks = p
        .blocks
        .iter()
        .map(|b| {
            let f = b.eval(x);
            let margin = match b.sense {
                Sense::NegativeDefinite => max_eig_symmetric(&f)?,
                Sense::PositiveSemidefinite => -min_eig_symmetric(&f)?,
            };
            let satisfied = match b.sense {
                Sense::NegativeDefinite => margin < 0.0,
                Sense::PositiveSemidefinite => margin <= 0.0,
            };
            Ok(BlockMargin { label: b.label.clone(), sense: b.sense, margin, satisfied })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MarginReport { blocks })
}

/// `S(x) = g0 + sum x_i g_i`, required positive definite.
#[derive(Debug, Clone)]
struct Lmi {
    g0: DMatrix<f64>,
    terms: Vec<(usize, DMatrix<f64>)>,
}

impl Lmi {
    fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut s = self.g0.clone();
        for (k, g) in &self.terms {
            s += g * x[*k];
        }
        s
    }
}

fn block_shift(b: &ConstraintBlock, eps: f64) -> f64 {
    eps * (1.0 + b.constant.norm())
}

fn to_lmis(p: &SdpProblem, eps: f64) -> Vec<Lmi> {
    p.blocks
        .iter()
        .map(|b| match b.sense {
            Sense::NegativeDefinite => {
                let n = b.dim();
                Lmi {
                    g0: -&b.constant - DMatrix::identity(n, n) * block_shift(b, eps),
                    terms: b.terms.iter().map(|(k, m)| (*k, -m)).collect(),
                }
            }
            Sense::PositiveSemidefinite => Lmi {
                g0: b.constant.clone(),
                terms: b.terms.iter().map(|(k, m)| (*k, m.clone())).collect(),
            },
        })
        .collect()
}

/// Barrier for a fixed set of LMIs plus a per-variable box.
struct Barrier<'a> {
    lmis: &'a [Lmi],
    bounds: Vec<f64>,
    c: Vec<f64>,
}

struct Local {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
    /// Per LMI: (lower Cholesky factor of S, S^-1).
    factors: Vec<(DMatrix<f64>, DMatrix<f64>)>,
}

impl<'a> Barrier<'a> {
    fn n(&self) -> usize {
        self.c.len()
    }

    fn m(&self) -> f64 {
        (self.lmis.iter().map(|l| l.g0.nrows()).sum::<usize>() + 2 * self.n()) as f64
    }

    fn in_box(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.bounds).all(|(x, r)| x.abs() < *r)
    }

    /// `t c^T x - log det`, or None outside the domain.
    fn value(&self, x: &[f64], t: f64) -> Option<f64> {
        if !self.in_box(x) {
            return None;
        }
        let mut f = t * self.c.iter().zip(x).map(|(c, x)| c * x).sum::<f64>();
        for lmi in self.lmis {
            let chol = lmi.eval(x).cholesky()?;
            f -= 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        }
        for (x, r) in x.iter().zip(&self.bounds) {
            f -= (r - x).ln() + (r + x).ln();
        }
        Some(f)
    }

    fn local(&self, x: &[f64], t: f64) -> Option<Local> {
        let n = self.n();
        let value = self.value(x, t)?;
        let mut grad = DVector::from_iterator(n, self.c.iter().map(|c| t * c));
        let mut hess = DMatrix::zeros(n, n);
        let mut factors = Vec::with_capacity(self.lmis.len());
        for lmi in self.lmis {
            let s = lmi.eval(x);
            let chol = s.cholesky()?;
            let l = chol.l();
            // P_i = L^-1 G_i L^-T
            let ps: Vec<(usize, DMatrix<f64>)> = lmi
                .terms
                .iter()
                .map(|(k, g)| {
                    let t1 = l.solve_lower_triangular(g).expect("Cholesky factor is nonsingular");
                    let p = l
                        .solve_lower_triangular(&t1.transpose())
                        .expect("Cholesky factor is nonsingular");
                    (*k, p)
                })
                .collect();
            for (a, (i, pi)) in ps.iter().enumerate() {
                grad[*i] -= pi.trace();
                for (j, pj) in ps.iter().skip(a) {
                    let h = pi.dot(pj);
                    hess[(*i, *j)] += h;
                    if i != j {
                        hess[(*j, *i)] += h;
                    }
                }
            }
            let sinv = chol.inverse();
            factors.push((l, sinv));
        }
        for i in 0..n {
            let (lo, hi) = (self.bounds[i] + x[i], self.bounds[i] - x[i]);
            grad[i] += 1.0 / hi - 1.0 / lo;
            hess[(i, i)] += 1.0 / (hi * hi) + 1.0 / (lo * lo);
        }
        Some(Local { value, grad, hess, factors })
    }
}

fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = hess.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs())).max(1e-300);
    let mut reg = 1e-12 * scale;
    for _ in 0..4 {
        let h = hess + DMatrix::identity(hess.nrows(), hess.ncols()) * reg;
        if let Some(ch) = h.cholesky() {
            let dx = ch.solve(&(-grad));
            if dx.iter().all(|v| v.is_finite()) {
                return Some(dx);
            }
        }
        reg *= 100.0;
    }
    None
}

enum Centering {
    Done { steps: usize },
    NumericFailure,
}

/// Newton's method with backtracking on the barrier at fixed `t`.
/// `stop` is checked after every accepted step.
fn center(b: &Barrier, x: &mut Vec<f64>, t: f64, max_newton: usize, stop: &dyn Fn(&[f64]) -> bool) -> Centering {
    const ARMIJO: f64 = 0.01;
    const DECREMENT_TOL: f64 = 1e-10;
    for step in 0..max_newton {
        let Some(loc) = b.local(x, t) else {
            return Centering::NumericFailure;
        };
        let Some(dx) = newton_direction(&loc.hess, &loc.grad) else {
            return Centering::NumericFailure;
        };
        let slope = loc.grad.dot(&dx);
        if -slope / 2.0 <= DECREMENT_TOL {
            return Centering::Done { steps: step };
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha > 1e-14 {
            let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(x, d)| x + alpha * d).collect();
            if let Some(f) = b.value(&trial, t) {
                if f <= loc.value + ARMIJO * alpha * slope {
                    *x = trial;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            // no representable decrease left at this t
            return Centering::Done { steps: step };
        }
        if stop(x) {
            return Centering::Done { steps: step + 1 };
        }
    }
    Centering::Done { steps: max_newton }
}

/// Result of the feasibility phase.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase1 {
    pub feasible: bool,
    pub x: Vec<f64>,
    pub slack: f64,
    pub iterations: usize,
    pub newton_steps: usize,
    pub numeric_failure: bool,
}

fn min_eig_over(lmis: &[Lmi], x: &[f64]) -> f64 {
    lmis.iter()
        .map(|l| {
            let s = l.eval(x);
            min_eig_symmetric(&((&s + s.transpose()) * 0.5)).unwrap_or(f64::NEG_INFINITY)
        })
        .fold(f64::INFINITY, f64::min)
}

fn phase1_on(lmis: &[Lmi], n: usize, opts: &SdpOptions) -> Phase1 {
    let mut x: Vec<f64> = opts.x0.clone().unwrap_or_else(|| vec![0.0; n]);
    x.resize(n, 0.0);
    let r = opts.variable_bound;
    for v in x.iter_mut() {
        *v = v.clamp(-0.5 * r, 0.5 * r);
    }
    let lmin = min_eig_over(lmis, &x);
    if lmis.is_empty() || (lmin > 0.0 && lmin.is_finite()) {
        return Phase1 { feasible: true, x, slack: -lmin, iterations: 0, newton_steps: 0, numeric_failure: false };
    }
    let s0 = (-lmin).max(0.0) + 1.0;
    let relaxed: Vec<Lmi> = lmis
        .iter()
        .map(|l| {
            let d = l.g0.nrows();
            let mut terms = l.terms.clone();
            terms.push((n, DMatrix::identity(d, d)));
            Lmi { g0: l.g0.clone(), terms }
        })
        .collect();
    let mut bounds = vec![r; n];
    bounds.push((4.0 * s0).max(r));
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let barrier = Barrier { lmis: &relaxed, bounds, c };
    x.push(s0);

    let m = barrier.m();
    let mut t = 1.0 / s0;
    let mut newton_steps = 0;
    let stop = |z: &[f64]| z[n] < 0.0;
    for it in 1..=opts.max_iter {
        match center(&barrier, &mut x, t, opts.max_newton, &stop) {
            Centering::Done { steps } => newton_steps += steps,
            Centering::NumericFailure => {
                let slack = x[n];
                x.truncate(n);
                return Phase1 { feasible: false, x, slack, iterations: it, newton_steps, numeric_failure: true };
            }
        }
        let slack = x[n];
        if slack < 0.0 {
            x.truncate(n);
            return Phase1 { feasible: true, x, slack, iterations: it, newton_steps, numeric_failure: false };
        }
        if m / t < opts.tol {
            x.truncate(n);
            return Phase1 { feasible: false, x, slack, iterations: it, newton_steps, numeric_failure: false };
        }
        t *= opts.growth;
    }
    let slack = x[n];
    x.truncate(n);
    Phase1 { feasible: false, x, slack, iterations: opts.max_iter, newton_steps, numeric_failure: false }
}

/// Runs only the feasibility phase: is there `x` with every block strictly satisfied?
pub fn find_feasible(p: &SdpProblem, opts: &SdpOptions) -> Result<Phase1> {
    p.validate()?;
    let lmis = to_lmis(p, opts.strict_eps);
    Ok(phase1_on(&lmis, p.n_vars, opts))
}

fn kkt_residuals(b: &Barrier, x: &[f64], t: f64) -> Option<KktResiduals> {
    let n = b.n();
    let loc = b.local(x, t)?;
    let dx = newton_direction(&loc.hess, &loc.grad)?;
    // stationarity: c - sum_k A_k^*(Z_k) - box multipliers
    let mut resid: Vec<f64> = b.c.clone();
    let mut comp = 0.0;
    let mut dual_neg = 0.0f64;
    for (lmi, (_, sinv)) in b.lmis.iter().zip(&loc.factors) {
        let mut ds = DMatrix::zeros(lmi.g0.nrows(), lmi.g0.ncols());
        for (k, g) in &lmi.terms {
            ds += g * dx[*k];
        }
        let z = (sinv - sinv * &ds * sinv) / t;
        let z = (&z + z.transpose()) * 0.5;
        for (k, g) in &lmi.terms {
            resid[*k] -= z.dot(g);
        }
        comp += z.dot(&lmi.eval(x));
        if let Ok(l) = min_eig_symmetric(&z) {
            dual_neg = dual_neg.max(-l);
        }
    }
    for i in 0..n {
        let (lo, hi) = (b.bounds[i] + x[i], b.bounds[i] - x[i]);
        // multipliers of r - x_i >= 0 and r + x_i >= 0
        let z_hi = (1.0 / hi + dx[i] / (hi * hi)) / t;
        let z_lo = (1.0 / lo - dx[i] / (lo * lo)) / t;
        resid[i] -= z_lo - z_hi;
        comp += z_hi * hi + z_lo * lo;
        dual_neg = dual_neg.max(-z_hi).max(-z_lo);
    }
    let cnorm = b.c.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let stat = resid.iter().fold(0.0f64, |m, r| m.max(r.abs())) / (1.0 + cnorm);
    Some(KktResiduals {
        primal: (-min_eig_over(b.lmis, x)).max(0.0),
        dual: stat + dual_neg,
        complementarity: comp,
    })
}

/// Minimizes `c^T x` subject to every block. Returns `Err` only for a
/// malformed problem; solver outcomes are reported through `status`.
pub fn solve(p: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution> {
    p.validate()?;
    let n = p.n_vars;
    let lmis = to_lmis(p, opts.strict_eps);
    let ph1 = phase1_on(&lmis, n, opts);
    let finish = |status, x: Vec<f64>, iterations, newton_steps, kkt, gap, trace| -> Result<SdpSolution> {
        let margins = check_solution(p, &x)?.blocks.iter().map(|b| b.margin).collect();
        Ok(SdpSolution {
            status,
            objective: p.objective_value(&x),
            x,
            margins,
            iterations,
            phase1_iterations: ph1.iterations,
            newton_steps,
            phase1_slack: ph1.slack,
            kkt,
            gap,
            objective_trace: trace,
        })
    };
    if !ph1.feasible {
        let status = if ph1.numeric_failure {
            SdpStatus::NumericFailure
        } else if ph1.iterations >= opts.max_iter {
            SdpStatus::MaxIter
        } else {
            SdpStatus::Infeasible
        };
        return finish(status, ph1.x.clone(), 0, ph1.newton_steps, KktResiduals::default(), f64::INFINITY, vec![]);
    }

    let barrier = Barrier { lmis: &lmis, bounds: vec![opts.variable_bound; n], c: p.objective.clone() };
    let m = barrier.m();
    let mut x = ph1.x.clone();
    let mut newton_steps = ph1.newton_steps;

    // initial t: best fit of t c to -grad(phi) in the Hessian norm
    let mut t = match barrier.local(&x, 0.0) {
        Some(loc) => {
            let c = DVector::from_vec(p.objective.clone());
            let chol = (&loc.hess + DMatrix::identity(n, n) * 1e-12 * loc.hess.diagonal().amax().max(1e-300)).cholesky();
            match chol {
                Some(ch) => {
                    let hc = ch.solve(&c);
                    let num = -hc.dot(&loc.grad);
                    let den = hc.dot(&c);
                    if den > 0.0 && num > 0.0 { (num / den).clamp(1e-3, 1e3) } else { 1.0 }
                }
                None => 1.0,
            }
        }
        None => 1.0,
    };

    let mut trace = Vec::new();
    let never = |_: &[f64]| false;
    for it in 1..=opts.max_iter {
        match center(&barrier, &mut x, t, opts.max_newton, &never) {
            Centering::Done { steps } => newton_steps += steps,
            Centering::NumericFailure => {
                return finish(SdpStatus::NumericFailure, x, it, newton_steps, KktResiduals::default(), m / t, trace);
            }
        }
        trace.push(p.objective_value(&x));
        let gap = m / t;
        if gap < opts.tol {
            let Some(kkt) = kkt_residuals(&barrier, &x, t) else {
                return finish(SdpStatus::NumericFailure, x, it, newton_steps, KktResiduals::default(), gap, trace);
            };
            let mut status = SdpStatus::Optimal;
            let report = check_solution(p, &x)?;
            let strict_ok = report
                .blocks
                .iter()
                .zip(&p.blocks)
                .all(|(r, b)| b.sense == Sense::PositiveSemidefinite || r.margin < -0.5 * opts.strict_eps);
            if !strict_ok {
                status = SdpStatus::NumericFailure;
            }
            return finish(status, x, it, newton_steps, kkt, gap, trace);
        }
        t *= opts.growth;
    }
    let kkt = kkt_residuals(&barrier, &x, t).unwrap_or_default();
    finish(SdpStatus::MaxIter, x, opts.max_iter, newton_steps, kkt, m / t, trace)
}

fn sense_tag(s: Sense) -> &'static str {
    match s {
        Sense::NegativeDefinite => "nd",
        Sense::PositiveSemidefinite => "psd",
    }
}

/// Plain-text dump: variable names, objective, then one section per block
/// with `var row col value` triplets (1-based variables, 0 for the
/// constant term; 1-based rows/cols; upper triangle only).
pub fn dump(p: &SdpProblem) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "sdp {} {}", p.n_vars, p.blocks.len());
    for (i, v) in p.vars.iter().enumerate() {
        let kind = match v.kind {
            VarKind::Scalar => "s".to_string(),
            VarKind::SymmetricEntry { row, col } => format!("y {row} {col}"),
            VarKind::Entry { row, col } => format!("e {row} {col}"),
        };
        let _ = writeln!(s, "var {} {} {}", i + 1, v.name, kind);
    }
    let _ = write!(s, "objective");
    for (i, c) in p.objective.iter().enumerate() {
        if *c != 0.0 {
            let _ = write!(s, " {}:{:e}", i + 1, c);
        }
    }
    let _ = writeln!(s);
    for b in &p.blocks {
        let _ = writeln!(s, "block {} {} {}", b.dim(), sense_tag(b.sense), b.label);
        let mut emit = |var: usize, m: &DMatrix<f64>| {
            for r in 0..m.nrows() {
                for c in r..m.ncols() {
                    if m[(r, c)] != 0.0 {
                        let _ = writeln!(s, "{} {} {} {:e}", var, r + 1, c + 1, m[(r, c)]);
                    }
                }
            }
        };
        emit(0, &b.constant);
        for (k, m) in &b.terms {
            emit(k + 1, m);
        }
        let _ = writeln!(s, "end");
    }
    s
}

fn perr(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("line {line}: {msg}"))
}

/// Inverse of [`dump`].
pub fn parse_dump(text: &str) -> Result<SdpProblem> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let num = |ln: usize, tok: Option<&str>| -> Result<usize> {
        tok.ok_or_else(|| perr(ln, "missing field"))?.parse().map_err(|e| perr(ln, e))
    };
    let (ln, head) = lines.next().ok_or_else(|| Error::Parse("empty dump".into()))?;
    let mut it = head.split_whitespace();
    if it.next() != Some("sdp") {
        return Err(perr(ln, "expected 'sdp' header"));
    }
    let n_vars = num(ln, it.next())?;
    let n_blocks = num(ln, it.next())?;

    let mut vars = Vec::with_capacity(n_vars);
    for i in 0..n_vars {
        let (ln, l) = lines.next().ok_or_else(|| Error::Parse("truncated variable list".into()))?;
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() < 4 || t[0] != "var" || t[1].parse::<usize>().ok() != Some(i + 1) {
            return Err(perr(ln, "malformed variable line"));
        }
        let kind = match t[3] {
            "s" => VarKind::Scalar,
            "y" | "e" => {
                let row = num(ln, t.get(4).copied())?;
                let col = num(ln, t.get(5).copied())?;
                if t[3] == "y" { VarKind::SymmetricEntry { row, col } } else { VarKind::Entry { row, col } }
            }
            other => return Err(perr(ln, format!("unknown variable kind '{other}'"))),
        };
        vars.push(VarDescriptor { name: t[2].to_string(), kind });
    }

    let (ln, l) = lines.next().ok_or_else(|| Error::Parse("missing objective".into()))?;
    let mut it = l.split_whitespace();
    if it.next() != Some("objective") {
        return Err(perr(ln, "expected objective line"));
    }
    let mut objective = vec![0.0; n_vars];
    for tok in it {
        let (k, v) = tok.split_once(':').ok_or_else(|| perr(ln, "expected index:value"))?;
        let k: usize = k.parse().map_err(|e| perr(ln, e))?;
        if k == 0 || k > n_vars {
            return Err(perr(ln, format!("objective index {k} out of range")));
        }
        objective[k - 1] = v.parse().map_err(|e| perr(ln, e))?;
    }

    let mut blocks = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        let (ln, l) = lines.next().ok_or_else(|| Error::Parse("truncated block list".into()))?;
        let mut parts = l.splitn(4, ' ');
        if parts.next() != Some("block") {
            return Err(perr(ln, "expected block header"));
        }
        let dim = num(ln, parts.next())?;
        let sense = match parts.next() {
            Some("nd") => Sense::NegativeDefinite,
            Some("psd") => Sense::PositiveSemidefinite,
            _ => return Err(perr(ln, "unknown block sense")),
        };
        let label = parts.next().unwrap_or("").to_string();
        let mut constant = DMatrix::zeros(dim, dim);
        let mut terms = std::collections::BTreeMap::new();
        loop {
            let (ln, l) = lines.next().ok_or_else(|| Error::Parse("block without 'end'".into()))?;
            if l == "end" {
                break;
            }
            let t: Vec<&str> = l.split_whitespace().collect();
            if t.len() != 4 {
                return Err(perr(ln, "expected 'var row col value'"));
            }
            let var: usize = t[0].parse().map_err(|e| perr(ln, e))?;
            let r: usize = t[1].parse().map_err(|e| perr(ln, e))?;
            let c: usize = t[2].parse().map_err(|e| perr(ln, e))?;
            let v: f64 = t[3].parse().map_err(|e| perr(ln, e))?;
            if r == 0 || c == 0 || r > dim || c > dim || var > n_vars {
                return Err(perr(ln, "triplet index out of range"));
            }
            let m = if var == 0 {
                &mut constant
            } else {
                terms.entry(var - 1).or_insert_with(|| DMatrix::zeros(dim, dim))
            };
            m[(r - 1, c - 1)] = v;
            m[(c - 1, r - 1)] = v;
        }
        blocks.push(ConstraintBlock { label, constant, terms, sense });
    }
    let p = SdpProblem { n_vars, objective, blocks, vars };
    p.validate()?;
    Ok(p)
}
