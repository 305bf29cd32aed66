//! Polytopic description of the friction-uncertain plant.
//!
//! Only `A_p` and `B_p` depend on the per-wheel friction coefficients, and
//! they do so affinely: `A_p(rho) = A_0 + sum_j mu_j A_j`. The polytope has
//! one vertex per corner of the friction box.

use nalgebra::{DMatrix, Matrix2, SMatrix};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{generalized_from_matrices, GeneralizedPlant, VehicleParams, FL, FR, RL, RR};

/// Per-wheel friction intervals, FL, FR, RL, RR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UncertaintyBox {
    pub mu_lo: [f64; 4],
    pub mu_hi: [f64; 4],
}

impl Default for UncertaintyBox {
    fn default() -> Self {
        Self::uniform(0.1, 1.0)
    }
}

impl UncertaintyBox {
    pub fn uniform(lo: f64, hi: f64) -> Self {
        Self { mu_lo: [lo; 4], mu_hi: [hi; 4] }
    }

    /// A degenerate box collapsed onto a single friction value.
    pub fn point(mu: [f64; 4]) -> Self {
        Self { mu_lo: mu, mu_hi: mu }
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..4 {
            let (lo, hi) = (self.mu_lo[i], self.mu_hi[i]);
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::InvalidParams(format!("friction interval [{lo}, {hi}] is invalid")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, rho: &[f64; 4]) -> bool {
        (0..4).all(|i| rho[i] >= self.mu_lo[i] && rho[i] <= self.mu_hi[i])
    }

    pub fn centroid(&self) -> [f64; 4] {
        std::array::from_fn(|i| 0.5 * (self.mu_lo[i] + self.mu_hi[i]))
    }

    /// Corner `k`: bit `j` of `k` selects the upper bound for wheel `j`
    /// (FL is the least significant bit).
    pub fn corner(&self, k: usize) -> [f64; 4] {
        std::array::from_fn(|j| if (k >> j) & 1 == 1 { self.mu_hi[j] } else { self.mu_lo[j] })
    }
}

/// A(rho) = A0 + sum mu_j A_j, B(rho) = B0 + sum mu_j B_j; D is constant.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineBasis {
    pub a: [Matrix2<f64>; 5],
    pub b: [SMatrix<f64, 2, 4>; 5],
    pub d: nalgebra::Vector2<f64>,
}

/// Splits the closed-form linear coefficients into their constant part and
/// the part proportional to each wheel's friction.
pub fn affine_decomposition(p: &VehicleParams) -> Result<AffineBasis> {
    if !(p.v > 0.0) {
        return Err(Error::InvalidParams(format!("affine decomposition needs v > 0, got {}", p.v)));
    }
    let (m, v, iz, c) = (p.m, p.v, p.iz, p.c);
    // signed longitudinal position of each axle
    let arm = |wheel: usize| if wheel == FL || wheel == FR { p.lf } else { -p.lr };

    let mut a = [Matrix2::zeros(); 5];
    let mut b = [SMatrix::<f64, 2, 4>::zeros(); 5];
    a[0] = Matrix2::new(0.0, -1.0, 0.0, 0.0);
    for wheel in [FL, FR, RL, RR] {
        let s = arm(wheel);
        a[wheel + 1] = Matrix2::new(
            -c / (m * v),
            -s * c / (m * v * v),
            -s * c / iz,
            -s * s * c / (iz * v),
        );
        b[wheel + 1][(0, wheel)] = c / (m * v);
        b[wheel + 1][(1, wheel)] = s * c / iz;
    }
    let d = nalgebra::Vector2::new(1.0 / (m * v), (p.lf - p.lr) / 2.0);
    Ok(AffineBasis { a, b, d })
}

impl AffineBasis {
    pub fn a_at(&self, rho: &[f64; 4]) -> Matrix2<f64> {
        (0..4).fold(self.a[0], |acc, j| acc + self.a[j + 1] * rho[j])
    }

    pub fn b_at(&self, rho: &[f64; 4]) -> SMatrix<f64, 2, 4> {
        (0..4).fold(self.b[0], |acc, j| acc + self.b[j + 1] * rho[j])
    }
}

/// Affine evaluation of the generalized plant at friction `rho`.
pub fn evaluate_at(basis: &AffineBasis, rho: &[f64; 4]) -> GeneralizedPlant {
    let a = basis.a_at(rho);
    let b = basis.b_at(rho);
    generalized_from_matrices(
        DMatrix::from_column_slice(2, 2, a.as_slice()),
        DMatrix::from_column_slice(2, 4, b.as_slice()),
        DMatrix::from_column_slice(2, 1, basis.d.as_slice()),
    )
}

/// The 16-vertex polytopic plant.
#[derive(Debug, Clone, PartialEq)]
pub struct PolytopicPlant {
    pub vertices: Vec<GeneralizedPlant>,
    /// Per vertex, whether each wheel (FL..RR) sits at its upper bound.
    pub vertex_labels: Vec<[bool; 4]>,
    pub corners: Vec<[f64; 4]>,
    pub basis: AffineBasis,
    pub bounds: UncertaintyBox,
}

pub fn enumerate_vertices(basis: &AffineBasis, bounds: &UncertaintyBox) -> Result<PolytopicPlant> {
    bounds.validate()?;
    let corners: Vec<[f64; 4]> = (0..16).map(|k| bounds.corner(k)).collect();
    Ok(PolytopicPlant {
        vertices: corners.iter().map(|rho| evaluate_at(basis, rho)).collect(),
        vertex_labels: (0..16).map(|k| std::array::from_fn(|j| (k >> j) & 1 == 1)).collect(),
        corners,
        basis: basis.clone(),
        bounds: *bounds,
    })
}

impl PolytopicPlant {
    /// Polytope of the given vehicle over the friction box.
    pub fn build(p: &VehicleParams, bounds: &UncertaintyBox) -> Result<Self> {
        enumerate_vertices(&affine_decomposition(p)?, bounds)
    }

    /// Applies an actuator map `u = map * v` to every vertex.
    pub fn restrict_inputs(&self, map: &DMatrix<f64>) -> Result<Self> {
        let vertices = self
            .vertices
            .iter()
            .map(|v| v.restrict_inputs(map))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { vertices, ..self.clone() })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Product-form (multilinear) barycentric weights of `rho` w.r.t. the corners.
    pub fn barycentric_weights(&self, rho: &[f64; 4]) -> Vec<f64> {
        let t: [f64; 4] = std::array::from_fn(|j| {
            let w = self.bounds.mu_hi[j] - self.bounds.mu_lo[j];
            if w == 0.0 {
                0.0
            } else {
                (rho[j] - self.bounds.mu_lo[j]) / w
            }
        });
        (0..16)
            .map(|k| (0..4).map(|j| if (k >> j) & 1 == 1 { t[j] } else { 1.0 - t[j] }).product())
            .collect()
    }

    /// Stable fingerprint of the vertex matrices, hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.vertices {
            for m in [&v.a_p, &v.b_p, &v.d_p, &v.c_p1, &v.b_y1] {
                h.update((m.nrows() as u64).to_le_bytes());
                h.update((m.ncols() as u64).to_le_bytes());
                for x in m.iter() {
                    h.update(x.to_bits().to_le_bytes());
                }
            }
        }
        h.finalize().iter().take(16).map(|b| format!("{b:02x}")).collect()
    }
}
