//! Yaw-plane dynamics of an independent four-wheel-drive, four-wheel-steer
//! vehicle: nonlinear model, RK4 propagation, constant-speed linearization
//! and the generalized plant used for synthesis.
//!
//! Wheel-indexed arrays are always ordered FL, FR, RL, RR.

use nalgebra::{DMatrix, Matrix2, SMatrix, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FL: usize = 0;
pub const FR: usize = 1;
pub const RL: usize = 2;
pub const RR: usize = 3;
pub const WHEEL_NAMES: [&str; 4] = ["FL", "FR", "RL", "RR"];

/// Smallest admissible magnitude of a slip-angle denominator.
const MIN_DENOMINATOR: f64 = 1e-9;

/// Physical constants of the vehicle plus the operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    /// Mass [kg].
    pub m: f64,
    /// Yaw moment of inertia [kg m^2].
    pub iz: f64,
    /// CG to front axle [m].
    pub lf: f64,
    /// CG to rear axle [m].
    pub lr: f64,
    /// Half track width, the lateral wheel offset [m].
    pub lt: f64,
    /// Wheel radius [m].
    pub r: f64,
    /// Tire cornering stiffness [N/rad].
    pub c: f64,
    /// Nominal road-tire friction coefficient.
    pub mu_nominal: f64,
    /// Forward speed [m/s].
    pub v: f64,
    /// Gravitational acceleration [m/s^2].
    pub g: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self::nigel()
    }
}

impl VehicleParams {
    /// Measured and identified parameters of the 1:14 scale Nigel platform
    /// at its nominal operating point (mu = 0.4, v = 0.35 m/s).
    pub fn nigel() -> Self {
        Self {
            m: 2.68,
            iz: 0.01944,
            lf: 0.06226,
            lr: 0.07929,
            lt: 0.14724 / 2.0,
            r: 0.0325,
            c: 22.4768,
            mu_nominal: 0.4,
            v: 0.35,
            g: 9.81,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m", self.m),
            ("iz", self.iz),
            ("lf", self.lf),
            ("lr", self.lr),
            ("lt", self.lt),
            ("r", self.r),
            ("c", self.c),
            ("v", self.v),
            ("g", self.g),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.mu_nominal > 0.0 && self.mu_nominal <= 1.5) {
            return Err(Error::InvalidParams(format!(
                "mu_nominal must lie in (0, 1.5], got {}",
                self.mu_nominal
            )));
        }
        Ok(())
    }

    pub fn wheelbase(&self) -> f64 {
        self.lf + self.lr
    }

    /// Angular location of the front wheels w.r.t. the CG.
    pub fn theta_front(&self) -> f64 {
        self.lt.atan2(self.lf)
    }

    /// Angular location of the rear wheels w.r.t. the CG.
    pub fn theta_rear(&self) -> f64 {
        self.lt.atan2(self.lr)
    }

    /// Static normal loads per wheel (front/rear weight split).
    pub fn normal_loads(&self) -> [f64; 4] {
        let l = self.wheelbase();
        let front = self.m * self.g * self.lr / (2.0 * l);
        let rear = self.m * self.g * self.lf / (2.0 * l);
        [front, front, rear, rear]
    }

    pub fn with_speed(mut self, v: f64) -> Self {
        self.v = v;
        self
    }

    pub fn nominal_friction(&self) -> [f64; 4] {
        [self.mu_nominal; 4]
    }
}

/// Body-frame chassis state plus global pose.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChassisState {
    /// Body slip angle [rad].
    pub beta: f64,
    /// Yaw rate [rad/s].
    pub psi_dot: f64,
    /// Speed [m/s].
    pub v: f64,
    /// Heading [rad], wrapped to (-pi, pi].
    pub psi: f64,
    pub pose_x: f64,
    pub pose_y: f64,
}

impl ChassisState {
    /// Straight-ahead cruise at speed `v` from the origin.
    pub fn cruising(v: f64) -> Self {
        Self { v, ..Self::default() }
    }

    /// The linear-model state vector (beta, psi_dot).
    pub fn xp(&self) -> Vector2<f64> {
        Vector2::new(self.beta, self.psi_dot)
    }
}

/// Steering angles and drive torques, FL, FR, RL, RR.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub delta: [f64; 4],
    pub tau: [f64; 4],
}

impl ControlInput {
    pub fn steering(delta: [f64; 4]) -> Self {
        Self { delta, tau: [0.0; 4] }
    }

    /// Clamp every steering angle to the +/-90 degree actuator limit.
    pub fn saturated(mut self) -> Self {
        let lim = std::f64::consts::FRAC_PI_2;
        for d in &mut self.delta {
            *d = d.clamp(-lim, lim);
        }
        self
    }
}

/// Head and side wind forces [N].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Disturbance {
    pub f_hw: f64,
    pub f_sw: f64,
}

/// Time derivatives of the chassis states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivatives {
    pub v_dot: f64,
    pub beta_dot: f64,
    pub psi_ddot: f64,
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Tire slip angles alpha_i = delta_i - atan((y' +/- psi' l_f/r) / (x' +/- psi' l_t)).
pub fn tire_slip_angles(state: &ChassisState, input: &ControlInput, p: &VehicleParams) -> Result<[f64; 4]> {
    let xd = state.v * state.beta.cos();
    let yd = state.v * state.beta.sin();
    let r = state.psi_dot;
    // (lateral numerator, longitudinal denominator) per wheel
    let geometry = [
        (yd + r * p.lf, xd - r * p.lt),
        (yd + r * p.lf, xd + r * p.lt),
        (yd - r * p.lr, xd - r * p.lt),
        (yd - r * p.lr, xd + r * p.lt),
    ];
    let mut alpha = [0.0; 4];
    for (i, (num, den)) in geometry.into_iter().enumerate() {
        if den.abs() < MIN_DENOMINATOR {
            return Err(Error::DegenerateVelocity(den));
        }
        alpha[i] = input.delta[i] - (num / den).atan();
    }
    Ok(alpha)
}

/// Drive force tau/r saturated at the traction limit mu*N.
fn drive_force(tau: f64, r: f64, mu: f64, normal: f64) -> f64 {
    let f = tau / r;
    let limit = mu * normal;
    if f.abs() <= limit {
        f
    } else {
        limit.copysign(f)
    }
}

/// Nonlinear yaw-plane dynamics with per-wheel friction `mu`.
///
/// The longitudinal and lateral force balances are linear in (v', beta')
/// once the tire forces are known, so that 2x2 system is solved directly;
/// the yaw moment balance then gives psi''.
pub fn nonlinear_derivatives(
    state: &ChassisState,
    input: &ControlInput,
    dist: &Disturbance,
    mu: &[f64; 4],
    p: &VehicleParams,
) -> Result<Derivatives> {
    let alpha = tire_slip_angles(state, input, p)?;
    let normal = p.normal_loads();
    let delta = &input.delta;

    let mut fy = [0.0; 4];
    let mut fd = [0.0; 4];
    for i in 0..4 {
        fy[i] = mu[i] * p.c * alpha[i];
        fd[i] = drive_force(input.tau[i], p.r, mu[i], normal[i]);
    }

    let mut sum_x = -dist.f_hw;
    let mut sum_y = dist.f_sw;
    for i in 0..4 {
        let (s, c) = delta[i].sin_cos();
        sum_x += fd[i] * c - fy[i] * s;
        sum_y += fd[i] * s + fy[i] * c;
    }

    let tf = p.theta_front();
    let tr = p.theta_rear();
    let arm_f = p.lf.hypot(p.lt);
    let arm_r = p.lr.hypot(p.lt);
    let front = fd[FL] * (delta[FL] - tf).sin()
        + fd[FR] * (delta[FR] + tf).sin()
        + fy[FL] * (delta[FL] - tf).cos()
        + fy[FR] * (delta[FR] + tf).cos();
    let rear = fd[RL] * (delta[RL] + tr).sin() - fd[RR] * (tr - delta[RR]).sin()
        + fy[RL] * (delta[RL] + tr).cos()
        + fy[RR] * (tr - delta[RR]).cos();
    let mz = arm_f * front - arm_r * rear + 0.5 * (p.lf - p.lr) * dist.f_sw;

    // m [cos b, -v sin b; sin b, v cos b] [v'; b'] = rhs
    let (sb, cb) = state.beta.sin_cos();
    let v = state.v;
    let m = p.m;
    let det = m * m * v;
    if det.abs() < 1e-12 {
        return Err(Error::SingularMassMatrix(det));
    }
    let rhs_x = sum_x + m * state.psi_dot * v * sb;
    let rhs_y = sum_y - m * state.psi_dot * v * cb;
    let v_dot = (m * v * cb * rhs_x + m * v * sb * rhs_y) / det;
    let beta_dot = (-m * sb * rhs_x + m * cb * rhs_y) / det;

    Ok(Derivatives { v_dot, beta_dot, psi_ddot: mz / p.iz })
}

fn state_rates(
    s: &ChassisState,
    input: &ControlInput,
    dist: &Disturbance,
    mu: &[f64; 4],
    p: &VehicleParams,
) -> Result<[f64; 6]> {
    let d = nonlinear_derivatives(s, input, dist, mu, p)?;
    let heading = s.psi + s.beta;
    Ok([
        d.beta_dot,
        d.psi_ddot,
        d.v_dot,
        s.psi_dot,
        s.v * heading.cos(),
        s.v * heading.sin(),
    ])
}

fn offset(s: &ChassisState, k: &[f64; 6], h: f64) -> ChassisState {
    ChassisState {
        beta: s.beta + h * k[0],
        psi_dot: s.psi_dot + h * k[1],
        v: s.v + h * k[2],
        psi: s.psi + h * k[3],
        pose_x: s.pose_x + h * k[4],
        pose_y: s.pose_y + h * k[5],
    }
}

/// One classical RK4 step of the nonlinear model and the pose kinematics,
/// holding input, disturbance and friction constant over the step.
pub fn integrate_step(
    state: &ChassisState,
    input: &ControlInput,
    dist: &Disturbance,
    mu: &[f64; 4],
    p: &VehicleParams,
    dt: f64,
) -> Result<ChassisState> {
    if !(dt > 0.0 && dt <= 0.01) {
        return Err(Error::InvalidParams(format!("dt must lie in (0, 0.01], got {dt}")));
    }
    let k1 = state_rates(state, input, dist, mu, p)?;
    let k2 = state_rates(&offset(state, &k1, dt / 2.0), input, dist, mu, p)?;
    let k3 = state_rates(&offset(state, &k2, dt / 2.0), input, dist, mu, p)?;
    let k4 = state_rates(&offset(state, &k3, dt), input, dist, mu, p)?;
    let mut inc = [0.0; 6];
    for i in 0..6 {
        inc[i] = (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0;
    }
    let mut next = offset(state, &inc, dt);
    next.psi = wrap_angle(next.psi);
    Ok(next)
}

/// Linearized yaw-plane model x' = A x + B u + D F_w around straight driving.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPlant {
    pub a: Matrix2<f64>,
    pub b: SMatrix<f64, 2, 4>,
    pub d: Vector2<f64>,
    pub params: VehicleParams,
    pub mu: [f64; 4],
}

/// Small-angle, constant-speed linearization with per-wheel friction.
pub fn linearize(p: &VehicleParams, mu: &[f64; 4]) -> Result<LinearPlant> {
    if !(p.v > 0.0) {
        return Err(Error::InvalidParams(format!("linearization needs v > 0, got {}", p.v)));
    }
    let k: Vec<f64> = mu.iter().map(|m| m * p.c).collect();
    let front = k[FL] + k[FR];
    let rear = k[RL] + k[RR];
    let (m, v, iz, lf, lr) = (p.m, p.v, p.iz, p.lf, p.lr);
    let moment = lr * rear - lf * front;

    let a = Matrix2::new(
        -(front + rear) / (m * v),
        moment / (m * v * v) - 1.0,
        moment / iz,
        -(lf * lf * front + lr * lr * rear) / (iz * v),
    );
    let b = SMatrix::<f64, 2, 4>::new(
        k[FL] / (m * v),
        k[FR] / (m * v),
        k[RL] / (m * v),
        k[RR] / (m * v),
        lf * k[FL] / iz,
        lf * k[FR] / iz,
        -lr * k[RL] / iz,
        -lr * k[RR] / iz,
    );
    let d = Vector2::new(1.0 / (m * v), (lf - lr) / 2.0);
    Ok(LinearPlant { a, b, d, params: *p, mu: *mu })
}

/// Open-loop plant with performance outputs y1 = y2 = [x_p; u] and
/// full-state measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedPlant {
    pub a_p: DMatrix<f64>,
    pub b_p: DMatrix<f64>,
    pub d_p: DMatrix<f64>,
    pub c_p1: DMatrix<f64>,
    pub c_p2: DMatrix<f64>,
    pub b_y1: DMatrix<f64>,
    pub b_y2: DMatrix<f64>,
    pub d_y: DMatrix<f64>,
    pub m_p: DMatrix<f64>,
    pub d_z: DMatrix<f64>,
}

/// Lumped form [A~ B~; C~ D~] with B~ = [D_p B_p], C~ = [C_p1; C_p2] and
/// D~ = [D_y B_y1; 0 B_y2].
#[derive(Debug, Clone, PartialEq)]
pub struct LumpedPlant {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl GeneralizedPlant {
    pub fn n_states(&self) -> usize {
        self.a_p.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b_p.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c_p1.nrows()
    }

    pub fn n_disturbances(&self) -> usize {
        self.d_p.ncols()
    }

    /// Re-parameterize the actuators through `u = map * v`, keeping the
    /// performance outputs on the physical actuators.
    pub fn restrict_inputs(&self, map: &DMatrix<f64>) -> Result<GeneralizedPlant> {
        if map.nrows() != self.n_inputs() {
            return Err(Error::DimensionMismatch(format!(
                "input map has {} rows, plant has {} inputs",
                map.nrows(),
                self.n_inputs()
            )));
        }
        Ok(GeneralizedPlant {
            b_p: &self.b_p * map,
            b_y1: &self.b_y1 * map,
            b_y2: &self.b_y2 * map,
            ..self.clone()
        })
    }

    pub fn lumped(&self) -> LumpedPlant {
        let n = self.n_states();
        let nw = self.n_disturbances();
        let nu = self.n_inputs();
        let ny = self.n_outputs();
        let mut b = DMatrix::zeros(n, nw + nu);
        b.view_mut((0, 0), (n, nw)).copy_from(&self.d_p);
        b.view_mut((0, nw), (n, nu)).copy_from(&self.b_p);
        let mut c = DMatrix::zeros(2 * ny, n);
        c.view_mut((0, 0), (ny, n)).copy_from(&self.c_p1);
        c.view_mut((ny, 0), (ny, n)).copy_from(&self.c_p2);
        let mut d = DMatrix::zeros(2 * ny, nw + nu);
        d.view_mut((0, 0), (ny, nw)).copy_from(&self.d_y);
        d.view_mut((0, nw), (ny, nu)).copy_from(&self.b_y1);
        d.view_mut((ny, nw), (ny, nu)).copy_from(&self.b_y2);
        LumpedPlant { a: self.a_p.clone(), b, c, d }
    }
}

/// Build the generalized plant from a linear state-space model with the
/// fixed output and measurement structure.
pub fn generalized_from_matrices(a: DMatrix<f64>, b: DMatrix<f64>, d: DMatrix<f64>) -> GeneralizedPlant {
    let n = a.nrows();
    let nu = b.ncols();
    let nw = d.ncols();
    let ny = n + nu;
    let mut c = DMatrix::zeros(ny, n);
    c.view_mut((0, 0), (n, n)).fill_with_identity();
    let mut by = DMatrix::zeros(ny, nu);
    by.view_mut((n, 0), (nu, nu)).fill_with_identity();
    GeneralizedPlant {
        a_p: a,
        b_p: b,
        d_p: d,
        c_p1: c.clone(),
        c_p2: c,
        b_y1: by.clone(),
        b_y2: by,
        d_y: DMatrix::zeros(ny, nw),
        m_p: DMatrix::identity(n, n),
        d_z: DMatrix::zeros(n, nw),
    }
}

pub fn generalized_plant(lp: &LinearPlant) -> GeneralizedPlant {
    generalized_from_matrices(
        DMatrix::from_column_slice(2, 2, lp.a.as_slice()),
        DMatrix::from_column_slice(2, 4, lp.b.as_slice()),
        DMatrix::from_column_slice(2, 1, lp.d.as_slice()),
    )
}

/// Conventional front-steer architecture: one steering command drives both
/// front wheels, rear wheels fixed.
pub fn ackermann_input_map() -> DMatrix<f64> {
    DMatrix::from_column_slice(4, 1, &[1.0, 1.0, 0.0, 0.0])
}
