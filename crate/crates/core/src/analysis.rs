//! Linear-systems analysis: eigenvalues, damping, Lyapunov equations and
//! the H-infinity / H2 norms used to certify synthesized controllers.

use nalgebra::{Complex, DMatrix, DVector, Matrix2};

use crate::error::{Error, Result};
use crate::model::{linearize, VehicleParams};

pub type C64 = Complex<f64>;

/// One eigenvalue lambda = re + i*im.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenPair {
    pub lambda_re: f64,
    pub lambda_im: f64,
}

impl EigenPair {
    pub fn new(re: f64, im: f64) -> Self {
        Self { lambda_re: re, lambda_im: im }
    }

    pub fn as_complex(&self) -> C64 {
        C64::new(self.lambda_re, self.lambda_im)
    }
}

/// Closed-form eigenvalues of a 2x2 matrix, sorted by real part (then imaginary part).
pub fn eig2(a: &Matrix2<f64>) -> [EigenPair; 2] {
    let tr = a[(0, 0)] + a[(1, 1)];
    let half = 0.5 * tr;
    // discriminant of l^2 - tr l + det, written to avoid cancellation
    let diff = 0.5 * (a[(0, 0)] - a[(1, 1)]);
    let disc = diff * diff + a[(0, 1)] * a[(1, 0)];
    let mut pair = if disc >= 0.0 {
        let s = disc.sqrt();
        [EigenPair::new(half - s, 0.0), EigenPair::new(half + s, 0.0)]
    } else {
        let s = (-disc).sqrt();
        [EigenPair::new(half, -s), EigenPair::new(half, s)]
    };
    pair.sort_by(|x, y| {
        x.lambda_re
            .total_cmp(&y.lambda_re)
            .then(x.lambda_im.total_cmp(&y.lambda_im))
    });
    pair
}

/// zeta = -re / |lambda|.
pub fn damping_ratio(e: &EigenPair) -> Result<f64> {
    let modulus = e.lambda_re.hypot(e.lambda_im);
    if modulus == 0.0 {
        return Err(Error::ZeroEigenvalue);
    }
    Ok((-e.lambda_re / modulus).clamp(-1.0, 1.0))
}

/// Damping ratio over a (mu, v) grid; `zeta[i][j]` belongs to `(mu[i], v[j])`.
#[derive(Debug, Clone)]
pub struct DampingSurface {
    pub mu: Vec<f64>,
    pub v: Vec<f64>,
    pub zeta: Vec<Vec<Result<f64>>>,
}

/// Evaluates the damping ratio of the slower (rightmost) eigenpair of the
/// uniform-friction linear model at every grid point.
pub fn damping_surface(p: &VehicleParams, mu_grid: &[f64], v_grid: &[f64]) -> Result<DampingSurface> {
    if mu_grid.is_empty() || v_grid.is_empty() {
        return Err(Error::InvalidParams("damping grid must be nonempty".into()));
    }
    if mu_grid.iter().chain(v_grid).any(|x| !(x.is_finite() && *x >= 0.0)) || v_grid.iter().any(|v| *v <= 0.0) {
        return Err(Error::InvalidParams("damping grid values must be positive".into()));
    }
    let zeta = mu_grid
        .iter()
        .map(|&mu| {
            v_grid
                .iter()
                .map(|&v| {
                    let lp = linearize(&p.with_speed(v), &[mu; 4])?;
                    let [_, slow] = eig2(&lp.a);
                    damping_ratio(&slow)
                })
                .collect()
        })
        .collect();
    Ok(DampingSurface { mu: mu_grid.to_vec(), v: v_grid.to_vec(), zeta })
}

fn asymmetry(s: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..s.nrows() {
        for j in 0..i {
            worst = worst.max((s[(i, j)] - s[(j, i)]).abs());
        }
    }
    worst
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as columns.
pub fn sym_eigen(s: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = s.nrows();
    if s.ncols() != n {
        return Err(Error::DimensionMismatch(format!("{}x{} matrix is not square", n, s.ncols())));
    }
    let scale = s.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    let asym = asymmetry(s);
    if asym > 1e-10 * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let mut a = (s + s.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..i {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off.sqrt() <= 1e-15 * a.norm().max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| a[(i, i)]));
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &v.column(i));
    }
    Ok((values, vectors))
}

pub fn min_eig_symmetric(s: &DMatrix<f64>) -> Result<f64> {
    let (vals, _) = sym_eigen(s)?;
    Ok(vals.iter().copied().fold(f64::INFINITY, f64::min))
}

pub fn max_eig_symmetric(s: &DMatrix<f64>) -> Result<f64> {
    let (vals, _) = sym_eigen(s)?;
    Ok(vals.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Eigenvalues of a general real square matrix.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<C64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    if a.nrows() == 2 {
        let m = Matrix2::new(a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
        return eig2(&m).iter().map(EigenPair::as_complex).collect();
    }
    a.clone().complex_eigenvalues().iter().copied().collect()
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a).iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

fn require_hurwitz(a: &DMatrix<f64>) -> Result<()> {
    let sa = spectral_abscissa(a);
    if !(sa < 0.0) {
        return Err(Error::UnstableSystem(sa));
    }
    Ok(())
}

/// Solves A P + P A^T + Q = 0 through the vectorized Kronecker system.
pub fn lyap_solve(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || q.shape() != (n, n) {
        return Err(Error::DimensionMismatch("lyap_solve needs square A and Q of equal size".into()));
    }
    let eye = DMatrix::<f64>::identity(n, n);
    // vec(A P) = (I kron A) vec P, vec(P A^T) = (A kron I) vec P (column-major)
    let op = eye.kronecker(a) + a.kronecker(&eye);
    let lu = op.clone().lu();
    let u = lu.u();
    let (mut umin, mut umax) = (f64::INFINITY, 0.0f64);
    for i in 0..u.nrows() {
        umin = umin.min(u[(i, i)].abs());
        umax = umax.max(u[(i, i)].abs());
    }
    if n > 0 && !(umin > 1e-13 * umax.max(f64::MIN_POSITIVE)) {
        return Err(Error::SingularSylvester);
    }
    let rhs = DVector::from_column_slice(q.as_slice()) * -1.0;
    let x = lu.solve(&rhs).ok_or(Error::SingularSylvester)?;
    let p = DMatrix::from_column_slice(n, n, x.as_slice());
    Ok((&p + p.transpose()) * 0.5)
}

/// H2 norm sqrt(trace(C P C^T)) with A P + P A^T + B B^T = 0.
pub fn h2_norm(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<f64> {
    if d.iter().any(|x| *x != 0.0) {
        return Err(Error::NonzeroFeedthrough);
    }
    require_hurwitz(a)?;
    let p = lyap_solve(a, &(b * b.transpose()))?;
    Ok((c * p * c.transpose()).trace().max(0.0).sqrt())
}

/// Transfer matrix G(jw) = C (jwI - A)^-1 B + D.
pub fn freq_response(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>, w: f64) -> Result<DMatrix<C64>> {
    let n = a.nrows();
    let mut m = a.map(|x| C64::new(-x, 0.0));
    for i in 0..n {
        m[(i, i)] += C64::new(0.0, w);
    }
    let bc = b.map(|x| C64::new(x, 0.0));
    let sol = m.lu().solve(&bc).ok_or_else(|| Error::NumericFailure(format!("jwI - A singular at w = {w}")))?;
    Ok(c.map(|x| C64::new(x, 0.0)) * sol + d.map(|x| C64::new(x, 0.0)))
}

/// Largest singular value of a complex matrix, via the realified Gram matrix.
pub fn sigma_max_complex(g: &DMatrix<C64>) -> f64 {
    let gram = g.adjoint() * g;
    let k = gram.nrows();
    if k == 0 {
        return 0.0;
    }
    let mut real = DMatrix::zeros(2 * k, 2 * k);
    for i in 0..k {
        for j in 0..k {
            let z = gram[(i, j)];
            real[(i, j)] = z.re;
            real[(i + k, j + k)] = z.re;
            real[(i, j + k)] = -z.im;
            real[(i + k, j)] = z.im;
        }
    }
    let real = (&real + real.transpose()) * 0.5;
    max_eig_symmetric(&real).map(|l| l.max(0.0).sqrt()).unwrap_or(f64::NAN)
}

fn sigma_max_real(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    max_eig_symmetric(&(m.transpose() * m)).map(|l| l.max(0.0).sqrt()).unwrap_or(0.0)
}

/// Hamiltonian whose imaginary-axis eigenvalues are the frequencies where
/// gamma is a singular value of G.
fn hamiltonian(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>, gamma: f64) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let m = b.ncols();
    let p = c.nrows();
    let r = DMatrix::<f64>::identity(m, m) * (gamma * gamma) - d.transpose() * d;
    let r_inv = r.try_inverse()?;
    let a_h = a + b * &r_inv * d.transpose() * c;
    let top_right = b * &r_inv * b.transpose();
    let bottom_left = -(c.transpose() * (DMatrix::<f64>::identity(p, p) + d * &r_inv * d.transpose()) * c);
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&a_h);
    h.view_mut((0, n), (n, n)).copy_from(&top_right);
    h.view_mut((n, 0), (n, n)).copy_from(&bottom_left);
    h.view_mut((n, n), (n, n)).copy_from(&(-a_h.transpose()));
    Some(h)
}

/// Positive frequencies of the imaginary-axis eigenvalues of the Hamiltonian.
fn imaginary_frequencies(h: &DMatrix<f64>) -> Vec<f64> {
    let mut freqs: Vec<f64> = eigenvalues(h)
        .into_iter()
        .filter(|z| z.re.abs() <= 1e-8 * (1.0 + z.norm()))
        .map(|z| z.im.abs())
        .collect();
    freqs.sort_by(f64::total_cmp);
    freqs.dedup_by(|x, y| (*x - *y).abs() <= 1e-10 * (1.0 + y.abs()));
    freqs
}

/// H-infinity norm by a level-set iteration on the Hamiltonian.
///
/// Each level `gamma = (1 + 2 tol) * lower` is tested for imaginary-axis
/// Hamiltonian eigenvalues; when present the lower bound is raised to the
/// largest gain at the midpoints of the crossing intervals, otherwise the
/// norm is bracketed to relative `tol`.
pub fn hinf_norm(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>, tol: f64) -> Result<f64> {
    let n = a.nrows();
    if b.nrows() != n || c.ncols() != n || d.shape() != (c.nrows(), b.ncols()) {
        return Err(Error::DimensionMismatch("hinf_norm: inconsistent (A, B, C, D)".into()));
    }
    require_hurwitz(a)?;
    let sigma_d = sigma_max_real(d);
    if b.iter().all(|x| *x == 0.0) || c.iter().all(|x| *x == 0.0) {
        return Ok(sigma_d);
    }
    let tol = tol.max(1e-12);

    let mut lower = sigma_d.max(sigma_max_complex(&freq_response(a, b, c, d, 0.0)?));
    for z in eigenvalues(a) {
        for w in [z.im.abs(), z.norm()] {
            lower = lower.max(sigma_max_complex(&freq_response(a, b, c, d, w)?));
        }
    }
    if lower == 0.0 {
        return Ok(0.0);
    }
    for _ in 0..100 {
        let gamma = (1.0 + 2.0 * tol) * lower;
        let h = hamiltonian(a, b, c, d, gamma)
            .ok_or_else(|| Error::NumericFailure("singular gamma^2 I - D^T D".into()))?;
        let freqs = imaginary_frequencies(&h);
        if freqs.is_empty() {
            return Ok(lower * (1.0 + tol));
        }
        let mut candidates = Vec::with_capacity(freqs.len() + 1);
        if freqs.len() == 1 {
            candidates.push(freqs[0]);
        }
        candidates.extend(freqs.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        let mut next = lower;
        for w in candidates {
            next = next.max(sigma_max_complex(&freq_response(a, b, c, d, w)?));
        }
        if next <= lower * (1.0 + tol * 1e-3) {
            // crossings found but no higher gain between them: numerical noise at the peak
            return Ok(gamma);
        }
        lower = next;
    }
    Err(Error::MaxIter)
}
