//! Matrix-valued affine expressions in scalar decision variables, LMI
//! regions, and the constraint blocks for D-stability, H-infinity and H2
//! state-feedback synthesis.
//!
//! Synthesis blocks use the linearizing substitution `W = K X`, so the
//! closed-loop product `(A + B K) X` becomes `A X + B W`, affine in (X, W).

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::analysis::{max_eig_symmetric, min_eig_symmetric, sym_eigen};
use crate::error::{Error, Result};
use crate::model::GeneralizedPlant;

/// `constant + sum_i x_i * terms[i]`, every matrix of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr {
    pub constant: DMatrix<f64>,
    pub terms: BTreeMap<usize, DMatrix<f64>>,
}

impl AffineExpr {
    pub fn constant(m: DMatrix<f64>) -> Self {
        Self { constant: m, terms: BTreeMap::new() }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(DMatrix::identity(n, n))
    }

    /// The 1x1 expression `x_var`.
    pub fn var(var: usize) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(var, DMatrix::from_element(1, 1, 1.0));
        Self { constant: DMatrix::zeros(1, 1), terms }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    pub fn nrows(&self) -> usize {
        self.constant.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.constant.ncols()
    }

    fn map(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Self {
        Self {
            constant: f(&self.constant),
            terms: self.terms.iter().map(|(k, m)| (*k, f(m))).collect(),
        }
    }

    pub fn add(&self, other: &AffineExpr) -> Self {
        assert_eq!(self.shape(), other.shape(), "AffineExpr::add shape mismatch");
        let mut out = self.clone();
        out.constant += &other.constant;
        for (k, m) in &other.terms {
            out.terms
                .entry(*k)
                .and_modify(|acc| *acc += m)
                .or_insert_with(|| m.clone());
        }
        out
    }

    pub fn sub(&self, other: &AffineExpr) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn add_constant(&self, m: &DMatrix<f64>) -> Self {
        let mut out = self.clone();
        out.constant += m;
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|m| m * s)
    }

    /// `m * self`
    pub fn lmul(&self, m: &DMatrix<f64>) -> Self {
        self.map(|t| m * t)
    }

    /// `self * m`
    pub fn rmul(&self, m: &DMatrix<f64>) -> Self {
        self.map(|t| t * m)
    }

    pub fn transpose(&self) -> Self {
        self.map(|t| t.transpose())
    }

    /// `self + self^T`
    pub fn sym(&self) -> Self {
        self.add(&self.transpose())
    }

    /// `m kron self`
    pub fn kron_left(&self, m: &DMatrix<f64>) -> Self {
        self.map(|t| m.kronecker(t))
    }

    /// Trace of a square expression, as a 1x1 expression.
    pub fn trace(&self) -> Self {
        self.map(|t| DMatrix::from_element(1, 1, t.trace()))
    }

    /// Assembles a block matrix; every row of blocks must have consistent
    /// heights and every column consistent widths.
    pub fn blocks(grid: &[Vec<AffineExpr>]) -> Result<Self> {
        let heights: Vec<usize> = grid.iter().map(|row| row.first().map_or(0, |b| b.nrows())).collect();
        let ncols = grid.first().map_or(0, Vec::len);
        let widths: Vec<usize> = (0..ncols).map(|j| grid[0][j].ncols()).collect();
        for (i, row) in grid.iter().enumerate() {
            if row.len() != ncols {
                return Err(Error::DimensionMismatch("ragged block grid".into()));
            }
            for (j, b) in row.iter().enumerate() {
                if b.shape() != (heights[i], widths[j]) {
                    return Err(Error::DimensionMismatch(format!(
                        "block ({i},{j}) is {:?}, expected {:?}",
                        b.shape(),
                        (heights[i], widths[j])
                    )));
                }
            }
        }
        let (rows, cols) = (heights.iter().sum(), widths.iter().sum());
        let mut out = AffineExpr::zeros(rows, cols);
        let mut r0 = 0;
        for (i, row) in grid.iter().enumerate() {
            let mut c0 = 0;
            for (j, b) in row.iter().enumerate() {
                let shape = (heights[i], widths[j]);
                out.constant.view_mut((r0, c0), shape).copy_from(&b.constant);
                for (k, m) in &b.terms {
                    out.terms
                        .entry(*k)
                        .or_insert_with(|| DMatrix::zeros(rows, cols))
                        .view_mut((r0, c0), shape)
                        .copy_from(m);
                }
                c0 += widths[j];
            }
            r0 += heights[i];
        }
        Ok(out)
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (k, m) in &self.terms {
            out += m * x[*k];
        }
        out
    }

    /// Drops coefficient matrices that are identically zero.
    pub fn pruned(mut self) -> Self {
        self.terms.retain(|_, m| m.iter().any(|x| *x != 0.0));
        self
    }
}

/// How a flattened scalar maps back into a matrix-valued variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VarKind {
    Scalar,
    /// Upper-triangle entry of a symmetric matrix; off-diagonal entries
    /// contribute to both (row, col) and (col, row) with coefficient 1.
    SymmetricEntry { row: usize, col: usize },
    Entry { row: usize, col: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarDescriptor {
    pub name: String,
    pub kind: VarKind,
}

impl fmt::Display for VarDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            VarKind::Scalar => write!(f, "{}", self.name),
            VarKind::SymmetricEntry { row, col } | VarKind::Entry { row, col } => {
                write!(f, "{}[{},{}]", self.name, row, col)
            }
        }
    }
}

/// Registry that hands out scalar decision-variable indices.
#[derive(Debug, Clone, Default)]
pub struct VariableSet {
    descriptors: Vec<VarDescriptor>,
}

/// A matrix-valued decision variable and its affine expression.
#[derive(Debug, Clone)]
pub struct MatrixVar {
    pub expr: AffineExpr,
    pub indices: Vec<usize>,
}

impl MatrixVar {
    pub fn value(&self, x: &[f64]) -> DMatrix<f64> {
        self.expr.eval(x)
    }
}

impl VariableSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn descriptors(&self) -> &[VarDescriptor] {
        &self.descriptors
    }

    fn push(&mut self, name: &str, kind: VarKind) -> usize {
        self.descriptors.push(VarDescriptor { name: name.to_string(), kind });
        self.descriptors.len() - 1
    }

    pub fn scalar(&mut self, name: &str) -> MatrixVar {
        let idx = self.push(name, VarKind::Scalar);
        MatrixVar { expr: AffineExpr::var(idx), indices: vec![idx] }
    }

    pub fn symmetric(&mut self, name: &str, n: usize) -> MatrixVar {
        let mut expr = AffineExpr::zeros(n, n);
        let mut indices = Vec::new();
        for i in 0..n {
            for j in i..n {
                let idx = self.push(name, VarKind::SymmetricEntry { row: i, col: j });
                let mut e = DMatrix::zeros(n, n);
                e[(i, j)] = 1.0;
                e[(j, i)] = 1.0;
                expr.terms.insert(idx, e);
                indices.push(idx);
            }
        }
        MatrixVar { expr, indices }
    }

    pub fn matrix(&mut self, name: &str, rows: usize, cols: usize) -> MatrixVar {
        let mut expr = AffineExpr::zeros(rows, cols);
        let mut indices = Vec::new();
        for i in 0..rows {
            for j in 0..cols {
                let idx = self.push(name, VarKind::Entry { row: i, col: j });
                let mut e = DMatrix::zeros(rows, cols);
                e[(i, j)] = 1.0;
                expr.terms.insert(idx, e);
                indices.push(idx);
            }
        }
        MatrixVar { expr, indices }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    /// `F(x) < 0`, enforced as `F(x) <= -eps I`.
    NegativeDefinite,
    /// `F(x) >= 0`.
    PositiveSemidefinite,
}

/// One symmetric affine matrix inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintBlock {
    pub label: String,
    pub constant: DMatrix<f64>,
    pub terms: BTreeMap<usize, DMatrix<f64>>,
    pub sense: Sense,
}

impl ConstraintBlock {
    pub fn new(label: impl Into<String>, expr: AffineExpr, sense: Sense) -> Result<Self> {
        let label = label.into();
        let (r, c) = expr.shape();
        if r != c {
            return Err(Error::DimensionMismatch(format!("block '{label}' is {r}x{c}, not square")));
        }
        let check = |m: &DMatrix<f64>| -> Result<DMatrix<f64>> {
            let scale = m.iter().fold(1.0f64, |a, x| a.max(x.abs()));
            let asym = (m - m.transpose()).abs().max();
            if asym > 1e-12 * scale {
                return Err(Error::NotSymmetric(asym));
            }
            Ok((m + m.transpose()) * 0.5)
        };
        let expr = expr.pruned();
        let constant = check(&expr.constant)?;
        let terms = expr
            .terms
            .iter()
            .map(|(k, m)| Ok((*k, check(m)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(Self { label, constant, terms, sense })
    }

    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (k, m) in &self.terms {
            out += m * x[*k];
        }
        out
    }

    /// Largest eigenvalue of the block written as "should be <= 0":
    /// `F(x)` for negative-definite blocks, `-F(x)` for PSD blocks.
    pub fn margin(&self, x: &[f64]) -> Result<f64> {
        let f = self.eval(x);
        match self.sense {
            Sense::NegativeDefinite => max_eig_symmetric(&f),
            Sense::PositiveSemidefinite => min_eig_symmetric(&f).map(|l| -l),
        }
    }

    pub fn max_var(&self) -> Option<usize> {
        self.terms.keys().next_back().copied()
    }
}

/// `{ z : L + M z + M^T conj(z) < 0 }`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiRegion {
    pub l: DMatrix<f64>,
    pub m: DMatrix<f64>,
}

impl LmiRegion {
    pub fn order(&self) -> usize {
        self.l.nrows()
    }

    /// Largest eigenvalue of the Hermitian region test f(z); z is inside iff negative.
    pub fn test_value(&self, z: Complex<f64>) -> f64 {
        let n = self.order();
        // f(z) = L + (M + M^T) re(z) + i (M - M^T) im(z), realified as [[Re, -Im],[Im, Re]]
        let re = &self.l + (&self.m + self.m.transpose()) * z.re;
        let im = (&self.m - self.m.transpose()) * z.im;
        let mut real = DMatrix::zeros(2 * n, 2 * n);
        real.view_mut((0, 0), (n, n)).copy_from(&re);
        real.view_mut((n, n), (n, n)).copy_from(&re);
        real.view_mut((0, n), (n, n)).copy_from(&(-&im));
        real.view_mut((n, 0), (n, n)).copy_from(&im);
        let real = (&real + real.transpose()) * 0.5;
        max_eig_symmetric(&real).expect("realified region test is symmetric")
    }

    pub fn contains(&self, z: Complex<f64>) -> bool {
        self.test_value(z) < 0.0
    }
}

/// Half-plane `Re(z) < alpha`.
pub fn region_alpha(alpha: f64) -> LmiRegion {
    LmiRegion {
        l: DMatrix::from_element(1, 1, -2.0 * alpha),
        m: DMatrix::from_element(1, 1, 1.0),
    }
}

/// Conic sector around the negative real axis with inner angle `phi`
/// (half-angle `theta = phi / 2`): `|Im z| < tan(theta) |Re z|`, `Re z < 0`.
pub fn region_cone(phi: f64) -> Result<LmiRegion> {
    if !(phi > 0.0 && phi < std::f64::consts::PI) {
        return Err(Error::InvalidAngle(phi));
    }
    let theta = phi / 2.0;
    // cos(theta) = -b / sqrt(a^2 + b^2), sin(theta) = a / sqrt(a^2 + b^2), normalized
    let a = theta.sin();
    let b = -theta.cos();
    Ok(LmiRegion {
        l: DMatrix::zeros(2, 2),
        m: DMatrix::from_row_slice(2, 2, &[a, -b, b, a]),
    })
}

/// `L kron X + M kron (AX) + M^T kron (AX)^T < 0`.
pub fn dstab_block(region: &LmiRegion, ax: &AffineExpr, x: &AffineExpr, label: impl Into<String>) -> Result<ConstraintBlock> {
    if ax.shape() != x.shape() || x.nrows() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "dstab_block: AX is {:?}, X is {:?}",
            ax.shape(),
            x.shape()
        )));
    }
    let expr = x
        .kron_left(&region.l)
        .add(&ax.kron_left(&region.m))
        .add(&ax.transpose().kron_left(&region.m.transpose()));
    ConstraintBlock::new(label, expr, Sense::NegativeDefinite)
}

fn check_synthesis_shapes(vertex: &GeneralizedPlant, x: &AffineExpr, w: &AffineExpr) -> Result<()> {
    let n = vertex.n_states();
    if x.shape() != (n, n) || w.shape() != (vertex.n_inputs(), n) {
        return Err(Error::DimensionMismatch(format!(
            "plant has {} states and {} inputs; X is {:?}, W is {:?}",
            n,
            vertex.n_inputs(),
            x.shape(),
            w.shape()
        )));
    }
    if vertex.c_p1.shape() != (vertex.b_y1.nrows(), n) || vertex.d_y.shape() != (vertex.b_y1.nrows(), vertex.n_disturbances()) {
        return Err(Error::DimensionMismatch("inconsistent output matrices".into()));
    }
    Ok(())
}

/// Closed-loop `(A_p + B_p K) X` as `A_p X + B_p W`.
pub fn closed_loop_ax(vertex: &GeneralizedPlant, x: &AffineExpr, w: &AffineExpr) -> AffineExpr {
    x.lmul(&vertex.a_p).add(&w.lmul(&vertex.b_p))
}

/// Bounded-real block for `||w -> y1||_inf < sqrt(g1)`:
///
/// ```text
/// [ AX + (AX)^T     D_p    (C X)^T ]
/// [ D_p^T           -I     D_y^T   ]  < 0,   C X = C_p1 X + B_y1 W
/// [ C X             D_y    -g1 I   ]
/// ```
pub fn hinf_block(vertex: &GeneralizedPlant, x: &AffineExpr, w: &AffineExpr, g1: &AffineExpr, label: impl Into<String>) -> Result<ConstraintBlock> {
    check_synthesis_shapes(vertex, x, w)?;
    if g1.shape() != (1, 1) {
        return Err(Error::DimensionMismatch("gamma variable must be scalar".into()));
    }
    let nw = vertex.n_disturbances();
    let ny = vertex.n_outputs();
    let ax = closed_loop_ax(vertex, x, w);
    let cx = x.lmul(&vertex.c_p1).add(&w.lmul(&vertex.b_y1));
    let dp = AffineExpr::constant(vertex.d_p.clone());
    let dy = AffineExpr::constant(vertex.d_y.clone());
    let expr = AffineExpr::blocks(&[
        vec![ax.sym(), dp.clone(), cx.transpose()],
        vec![dp.transpose(), AffineExpr::identity(nw).scale(-1.0), dy.transpose()],
        vec![cx, dy, g1.kron_left(&DMatrix::identity(ny, ny)).scale(-1.0)],
    ])?;
    ConstraintBlock::new(label, expr, Sense::NegativeDefinite)
}

/// H2 conditions for `||w -> y2||_2 < sqrt(g2)` in controllability-Gramian form:
/// `AX + (AX)^T + D_p D_p^T < 0`, `[Z, C X; (C X)^T, X] >= 0`, `trace(Z) < g2`.
pub fn h2_blocks(
    vertex: &GeneralizedPlant,
    x: &AffineExpr,
    w: &AffineExpr,
    z: &AffineExpr,
    g2: &AffineExpr,
    label: &str,
) -> Result<Vec<ConstraintBlock>> {
    check_synthesis_shapes(vertex, x, w)?;
    let ny = vertex.c_p2.nrows();
    if z.shape() != (ny, ny) || g2.shape() != (1, 1) {
        return Err(Error::DimensionMismatch(format!("Z must be {ny}x{ny} and g2 scalar")));
    }
    let ax = closed_loop_ax(vertex, x, w);
    let lyap = ax.sym().add_constant(&(&vertex.d_p * vertex.d_p.transpose()));
    let cx = x.lmul(&vertex.c_p2).add(&w.lmul(&vertex.b_y2));
    let schur = AffineExpr::blocks(&[vec![z.clone(), cx.clone()], vec![cx.transpose(), x.clone()]])?;
    let trace = z.trace().sub(g2);
    Ok(vec![
        ConstraintBlock::new(format!("{label} h2-lyapunov"), lyap, Sense::NegativeDefinite)?,
        ConstraintBlock::new(format!("{label} h2-output"), schur, Sense::PositiveSemidefinite)?,
        ConstraintBlock::new(format!("{label} h2-trace"), trace, Sense::NegativeDefinite)?,
    ])
}

/// Rows spanning the orthogonal complement of the column space of `b`
/// (so that `N b = 0` and `N N^T = I`), by Gram-Schmidt against the
/// standard basis.
pub fn left_null_basis(b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = b.nrows();
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::new();
    let orthonormalize = |v: nalgebra::DVector<f64>, tol: f64, basis: &mut Vec<nalgebra::DVector<f64>>| -> Option<nalgebra::DVector<f64>> {
        let mut v = v;
        for _ in 0..2 {
            for q in basis.iter() {
                let proj = q.dot(&v);
                v -= q * proj;
            }
        }
        let norm = v.norm();
        (norm > tol).then(|| v / norm)
    };
    for j in 0..b.ncols() {
        if let Some(q) = orthonormalize(b.column(j).into_owned(), 1e-10 * scale, &mut basis) {
            basis.push(q);
        }
    }
    let range_dim = basis.len();
    for i in 0..n {
        if basis.len() == n {
            break;
        }
        let e = nalgebra::DVector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 });
        if let Some(q) = orthonormalize(e, 1e-8, &mut basis) {
            basis.push(q);
        }
    }
    let comp = &basis[range_dim..];
    DMatrix::from_fn(comp.len(), n, |r, c| comp[r][c])
}

/// Outcome of one existence condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionCheck {
    pub name: String,
    /// For inequalities: the largest eigenvalue of the "should be < 0" form
    /// (or minus the smallest eigenvalue for ">= 0"). For rank tests: the rank.
    pub value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExistenceReport {
    pub checks: Vec<ConditionCheck>,
}

impl ExistenceReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect()
    }
}

fn projected_max_eig(n: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<Option<f64>> {
    if n.nrows() == 0 {
        return Ok(None);
    }
    let m = n * q * n.transpose();
    max_eig_symmetric(&((&m + m.transpose()) * 0.5)).map(Some)
}

fn negative_check(name: &str, value: Option<f64>) -> ConditionCheck {
    match value {
        Some(v) => ConditionCheck { name: name.into(), value: v, pass: v < 0.0 },
        // empty complement: the condition is vacuous
        None => ConditionCheck { name: name.into(), value: f64::NEG_INFINITY, pass: true },
    }
}

fn coupling_checks(x: &DMatrix<f64>, y: &DMatrix<f64>, coupling: f64, n_c: usize, tag: &str) -> Result<Vec<ConditionCheck>> {
    let n = x.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(x);
    m.view_mut((n, n), (n, n)).copy_from(y);
    m.view_mut((0, n), (n, n)).fill_with_identity();
    m.view_mut((n, 0), (n, n)).fill_with_identity();
    for i in 0..n {
        m[(i, n + i)] *= coupling;
        m[(n + i, i)] *= coupling;
    }
    let m = (&m + m.transpose()) * 0.5;
    let (vals, _) = sym_eigen(&m)?;
    let smax = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let lmin = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let rank = vals.iter().filter(|v| v.abs() > 1e-8 * smax).count();
    Ok(vec![
        ConditionCheck {
            name: format!("{tag}c coupling >= 0"),
            value: -lmin,
            pass: lmin >= -1e-9 * smax.max(1.0),
        },
        ConditionCheck {
            name: format!("{tag}d rank <= n_p + n_c"),
            value: rank as f64,
            pass: rank <= n + n_c,
        },
    ])
}

fn stacked(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    s.view_mut((0, 0), top.shape()).copy_from(top);
    s.view_mut((top.nrows(), 0), bottom.shape()).copy_from(bottom);
    s
}

fn sym2x2(tl: &DMatrix<f64>, tr: &DMatrix<f64>, br: &DMatrix<f64>) -> DMatrix<f64> {
    let (a, b) = (tl.nrows(), br.nrows());
    let mut m = DMatrix::zeros(a + b, a + b);
    m.view_mut((0, 0), (a, a)).copy_from(tl);
    m.view_mut((0, a), (a, b)).copy_from(tr);
    m.view_mut((a, 0), (b, a)).copy_from(&tr.transpose());
    m.view_mut((a, a), (b, b)).copy_from(br);
    m
}

/// Evaluates the four conditions for existence of an H-infinity controller
/// of order `n_c` with performance `gamma1`, at candidate (X, Y).
pub fn existence_check_hinf(plant: &GeneralizedPlant, x: &DMatrix<f64>, y: &DMatrix<f64>, gamma1: f64, n_c: usize) -> Result<ExistenceReport> {
    let n = plant.n_states();
    if x.shape() != (n, n) || y.shape() != (n, n) {
        return Err(Error::DimensionMismatch("X and Y must be n_p x n_p".into()));
    }
    let (a, d, c1, dy) = (&plant.a_p, &plant.d_p, &plant.c_p1, &plant.d_y);
    let ny = c1.nrows();
    let nw = d.ncols();
    let g2 = gamma1 * gamma1;

    let perp_a = left_null_basis(&stacked(&plant.b_p, &plant.b_y1));
    let qa = sym2x2(
        &(a * x + x * a.transpose() + d * d.transpose()),
        &(x * c1.transpose() + d * dy.transpose()),
        &(dy * dy.transpose() - DMatrix::identity(ny, ny) * g2),
    );
    let perp_b = left_null_basis(&stacked(&plant.m_p.transpose(), &plant.d_z.transpose()));
    let qb = sym2x2(
        &(y * a + a.transpose() * y + c1.transpose() * c1),
        &(y * d + c1.transpose() * dy),
        &(dy.transpose() * dy - DMatrix::identity(nw, nw) * g2),
    );
    let mut checks = vec![
        negative_check("hinf-a projected bounded-real", projected_max_eig(&perp_a, &qa)?),
        negative_check("hinf-b projected dual bounded-real", projected_max_eig(&perp_b, &qb)?),
    ];
    checks.extend(coupling_checks(x, y, gamma1, n_c, "hinf-")?);
    Ok(ExistenceReport { checks })
}

/// Evaluates the four conditions for existence of an H2 controller of
/// order `n_c` with performance `gamma2`, at candidate (X, Y).
pub fn existence_check_h2(plant: &GeneralizedPlant, x: &DMatrix<f64>, y: &DMatrix<f64>, gamma2: f64, n_c: usize) -> Result<ExistenceReport> {
    let n = plant.n_states();
    if x.shape() != (n, n) || y.shape() != (n, n) {
        return Err(Error::DimensionMismatch("X and Y must be n_p x n_p".into()));
    }
    let (a, d, c2) = (&plant.a_p, &plant.d_p, &plant.c_p2);
    let ny = c2.nrows();
    let nw = d.ncols();

    let perp_a = left_null_basis(&plant.b_p);
    let lyap = a * x + x * a.transpose() + d * d.transpose();
    let out = c2 * x * c2.transpose() - DMatrix::identity(ny, ny) * (gamma2 * gamma2);
    let perp_b = left_null_basis(&stacked(&plant.m_p.transpose(), &plant.d_z.transpose()));
    let qb = sym2x2(
        &(y * a + a.transpose() * y),
        &(y * d),
        &(-DMatrix::<f64>::identity(nw, nw)),
    );
    let mut checks = vec![
        negative_check("h2-a projected Lyapunov", projected_max_eig(&perp_a, &lyap)?),
        negative_check("h2-a output bound", Some(max_eig_symmetric(&((&out + out.transpose()) * 0.5))?)),
        negative_check("h2-b projected dual Lyapunov", projected_max_eig(&perp_b, &qb)?),
    ];
    checks.extend(coupling_checks(x, y, 1.0, n_c, "h2-")?);
    Ok(ExistenceReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generalized_plant, linearize, VehicleParams};

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn alpha_region_membership() {
        let r = region_alpha(0.0);
        assert!(r.contains(Complex::new(-1e-3, 4.0)));
        assert!(!r.contains(Complex::new(1e-3, 0.0)));
        let r = region_alpha(-0.1);
        assert!(r.contains(Complex::new(-0.11, 0.0)));
        assert!(!r.contains(Complex::new(-0.09, 0.0)));
        let r = region_alpha(-2.0);
        assert!(!r.contains(Complex::new(-1.5, 0.0)));
    }

    #[test]
    fn cone_region_membership() {
        let phi = 3.0 * std::f64::consts::PI / 4.0;
        let r = region_cone(phi).unwrap();
        assert!(r.contains(Complex::new(-1.0, 0.0)));
        assert!(!r.contains(Complex::new(1.0, 0.0)));
        let edge = (phi / 2.0).tan();
        assert!((edge - 2.414_213_562_373_095).abs() < 1e-12);
        assert!(r.test_value(Complex::new(-1.0, edge)).abs() < 1e-12);
        assert!(r.contains(Complex::new(-1.0, 2.41)));
        assert!(!r.contains(Complex::new(-1.0, -2.42)));
        assert!(matches!(region_cone(0.0), Err(Error::InvalidAngle(_))));
        assert!(matches!(region_cone(std::f64::consts::PI), Err(Error::InvalidAngle(_))));
    }

    #[test]
    fn dstab_scalar_values() {
        let r = region_alpha(0.0);
        let x = AffineExpr::constant(scalar(1.0));
        let blk = dstab_block(&r, &x.scale(-1.0), &x, "stable").unwrap();
        assert_eq!(blk.eval(&[])[(0, 0)], -2.0);
        let blk = dstab_block(&r, &x, &x, "unstable").unwrap();
        assert_eq!(blk.eval(&[])[(0, 0)], 2.0);
        assert!(dstab_block(&r, &AffineExpr::zeros(2, 2), &x, "bad").is_err());
    }

    #[test]
    fn nominal_plant_satisfies_decay_region_with_identity() {
        let g = generalized_plant(&linearize(&VehicleParams::nigel(), &[0.4; 4]).unwrap());
        let x = AffineExpr::identity(2);
        let ax = x.lmul(&g.a_p);
        let blk = dstab_block(&region_alpha(-0.1), &ax, &x, "alpha").unwrap();
        assert!(blk.margin(&[]).unwrap() < 0.0);
    }

    #[test]
    fn block_assembly_and_variables() {
        let mut vars = VariableSet::new();
        let x = vars.symmetric("X", 2);
        let g = vars.scalar("g");
        assert_eq!(vars.len(), 4);
        let e = AffineExpr::blocks(&[
            vec![x.expr.clone(), AffineExpr::zeros(2, 1)],
            vec![AffineExpr::zeros(1, 2), g.expr.clone()],
        ])
        .unwrap();
        let val = e.eval(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(val, DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, 3.0, 0.0, 0.0, 0.0, 4.0]));
        assert!(AffineExpr::blocks(&[vec![x.expr.clone(), g.expr.clone()]]).is_err());
    }

    #[test]
    fn hinf_block_dimensions() {
        let g = generalized_plant(&linearize(&VehicleParams::nigel(), &[0.4; 4]).unwrap());
        let mut vars = VariableSet::new();
        let x = vars.symmetric("X", 2);
        let w = vars.matrix("W", 4, 2);
        let g1 = vars.scalar("g1");
        let blk = hinf_block(&g, &x.expr, &w.expr, &g1.expr, "hinf").unwrap();
        assert_eq!(blk.dim(), 9);
        let bad = vars.matrix("W2", 3, 2);
        assert!(matches!(hinf_block(&g, &x.expr, &bad.expr, &g1.expr, "hinf"), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn left_null_basis_is_orthonormal_complement() {
        let b = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 2.0]);
        let n = left_null_basis(&b);
        assert_eq!(n.shape(), (2, 3));
        assert!((&n * &b).norm() < 1e-12);
        assert!((&n * n.transpose() - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
        assert_eq!(left_null_basis(&DMatrix::identity(2, 2)).nrows(), 0);
    }

    #[test]
    fn full_state_feedback_auto_satisfies_measurement_conditions() {
        let g = generalized_plant(&linearize(&VehicleParams::nigel(), &[0.4; 4]).unwrap());
        let gamma = 1e3;
        let x = DMatrix::identity(2, 2);
        let y = DMatrix::identity(2, 2) * (gamma * gamma);
        let rep = existence_check_hinf(&g, &x, &y, gamma, 0).unwrap();
        assert!(rep.all_pass(), "{:?}", rep);
        let rep = existence_check_h2(&g, &x, &y, gamma, 0).unwrap();
        assert!(rep.checks.iter().any(|c| c.name.starts_with("h2-b") && c.pass));
    }

    #[test]
    fn rank_condition_admits_static_gain() {
        let g = generalized_plant(&linearize(&VehicleParams::nigel(), &[0.4; 4]).unwrap());
        let gamma = 0.5;
        let x = DMatrix::identity(2, 2) * gamma;
        let rep = existence_check_hinf(&g, &x, &x, gamma, 0).unwrap();
        let rank = rep.checks.iter().find(|c| c.name.contains("rank")).unwrap();
        assert!(rank.pass && rank.value <= 2.0);
    }
}
