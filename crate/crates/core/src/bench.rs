//! Maneuver references, friction and wind schedules, closed-loop nonlinear
//! simulation, and the pose-RMSE benchmark.
//!
//! References come from the linear model at nominal friction. Closed-loop
//! runs integrate the nonlinear model at the physics rate while the
//! steering law `u = u_ref + K (x_p - x_ref)` is held between control ticks.
//! Forward speed is held by a PI loop on the drive torques, which the
//! yaw-plane controller does not command.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix2, SMatrix, Vector2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{integrate_step, linearize, wrap_angle, ChassisState, ControlInput, Disturbance, VehicleParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Maneuver {
    Straight,
    LaneChange,
    Skidpad,
    Fishhook,
    Slalom,
    #[serde(rename = "figure-8")]
    Figure8,
}

impl Maneuver {
    pub const ALL: [Maneuver; 6] = [
        Maneuver::Straight,
        Maneuver::LaneChange,
        Maneuver::Skidpad,
        Maneuver::Fishhook,
        Maneuver::Slalom,
        Maneuver::Figure8,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Maneuver::Straight => "straight",
            Maneuver::LaneChange => "lane-change",
            Maneuver::Skidpad => "skidpad",
            Maneuver::Fishhook => "fishhook",
            Maneuver::Slalom => "slalom",
            Maneuver::Figure8 => "figure-8",
        }
    }

    /// Row label used in the results table.
    pub fn title(&self) -> &'static str {
        match self {
            Maneuver::Straight => "Straight",
            Maneuver::LaneChange => "Lane-Change",
            Maneuver::Skidpad => "Skidpad",
            Maneuver::Fishhook => "Fishhook",
            Maneuver::Slalom => "Slalom",
            Maneuver::Figure8 => "Figure-8",
        }
    }
}

impl fmt::Display for Maneuver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Maneuver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Maneuver::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown maneuver '{s}'")))
    }
}

/// Elementary test signals; a program is their sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Signal {
    /// Rectangular pulse of the given width.
    Impulse { t0: f64, width: f64, amplitude: f64 },
    Step { t0: f64, amplitude: f64 },
    /// Linear ramp from 0 at `t0` to `amplitude` at `t1`, held afterwards.
    Ramp { t0: f64, t1: f64, amplitude: f64 },
    /// `amplitude * sin(2 pi freq (t - t0))` for `t >= t0`.
    Sine { t0: f64, amplitude: f64, freq: f64 },
    /// `+amplitude` on `[t0, t0 + width/2)`, `-amplitude` on `[t0 + width/2, t0 + width)`.
    Doublet { t0: f64, width: f64, amplitude: f64 },
}

impl Signal {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Signal::Impulse { t0, width, amplitude } => {
                if t >= t0 && t < t0 + width {
                    amplitude
                } else {
                    0.0
                }
            }
            Signal::Step { t0, amplitude } => {
                if t >= t0 {
                    amplitude
                } else {
                    0.0
                }
            }
            Signal::Ramp { t0, t1, amplitude } => {
                if t < t0 {
                    0.0
                } else if t >= t1 {
                    amplitude
                } else {
                    amplitude * (t - t0) / (t1 - t0)
                }
            }
            Signal::Sine { t0, amplitude, freq } => {
                if t >= t0 {
                    amplitude * (2.0 * PI * freq * (t - t0)).sin()
                } else {
                    0.0
                }
            }
            Signal::Doublet { t0, width, amplitude } => {
                if t < t0 || t >= t0 + width {
                    0.0
                } else if t < t0 + width / 2.0 {
                    amplitude
                } else {
                    -amplitude
                }
            }
        }
    }

    fn validate(&self, duration: f64) -> Result<()> {
        let ok = match *self {
            Signal::Impulse { t0, width, .. } | Signal::Doublet { t0, width, .. } => t0 >= 0.0 && width > 0.0 && t0 < duration,
            Signal::Step { t0, .. } | Signal::Sine { t0, .. } => t0 >= 0.0 && t0 < duration,
            Signal::Ramp { t0, t1, .. } => t0 >= 0.0 && t1 > t0 && t0 < duration,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("signal {self:?} does not fit a {duration} s maneuver")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManeuverSpec {
    pub name: Maneuver,
    pub duration: f64,
    /// Front steering angle program [rad].
    pub program: Vec<Signal>,
    pub v: f64,
    /// Rear steering as a multiple of front steering.
    pub rear_ratio: f64,
}

impl ManeuverSpec {
    pub fn default_for(name: Maneuver, v: f64) -> Self {
        let (duration, program) = match name {
            Maneuver::Straight => (10.0, vec![]),
            Maneuver::LaneChange => (10.0, vec![Signal::Doublet { t0: 2.0, width: 2.0, amplitude: 0.075 }]),
            Maneuver::Skidpad => (20.0, vec![Signal::Step { t0: 1.0, amplitude: 0.1 }]),
            Maneuver::Fishhook => (10.0, vec![Signal::Ramp { t0: 1.0, t1: 3.0, amplitude: 0.125 }]),
            Maneuver::Slalom => (30.0, vec![Signal::Sine { t0: 0.0, amplitude: 0.1, freq: 0.25 }]),
            // one period: heading sweeps up by about 2 pi, then back down
            Maneuver::Figure8 => (40.0, vec![Signal::Sine { t0: 0.0, amplitude: 0.1, freq: 1.0 / 40.0 }]),
        };
        Self { name, duration, program, v, rear_ratio: -1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Config(format!("maneuver duration must be positive, got {}", self.duration)));
        }
        if !(self.v > 0.0) {
            return Err(Error::Config(format!("maneuver speed must be positive, got {}", self.v)));
        }
        self.program.iter().try_for_each(|s| s.validate(self.duration))
    }

    pub fn front_steering(&self, t: f64) -> f64 {
        self.program.iter().map(|s| s.eval(t)).sum()
    }

    pub fn steering(&self, t: f64) -> [f64; 4] {
        let f = self.front_steering(t);
        let r = self.rear_ratio * f;
        [f, f, r, r]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrictionSchedule {
    /// When false, every wheel sees the nominal friction.
    pub enabled: bool,
    pub amplitude: f64,
    pub offset: f64,
    /// Multiplies 2 pi theta inside the sine, theta = 2 pi t / T.
    pub frequency: f64,
    /// Per-wheel phase lags FL, FR, RL, RR.
    pub lags: [f64; 4],
    /// Uniform noise half-width.
    pub noise: f64,
    /// Range of the noiseless sinusoid.
    pub pre_clip: [f64; 2],
    /// Hard box applied after noise.
    pub clip: [f64; 2],
}

impl Default for FrictionSchedule {
    fn default() -> Self {
        Self {
            enabled: true,
            amplitude: 0.35,
            offset: 0.55,
            frequency: 12.0,
            lags: [0.0, PI / 2.0, PI, 3.0 * PI / 2.0],
            noise: 0.05,
            pre_clip: [0.2, 0.9],
            clip: [0.1, 1.0],
        }
    }
}

impl FrictionSchedule {
    /// Noise-free per-wheel friction at time `t` of a mission of length `t_end`.
    pub fn deterministic_at(&self, t: f64, t_end: f64) -> [f64; 4] {
        let theta = 2.0 * PI * t / t_end;
        std::array::from_fn(|i| {
            let mu = self.amplitude * (2.0 * PI * self.frequency * theta - self.lags[i]).sin() + self.offset;
            mu.clamp(self.pre_clip[0], self.pre_clip[1])
        })
    }

    /// Friction with noise: `mu - noise + 2 noise chi`, chi uniform in [0, 1).
    pub fn friction_at(&self, t: f64, t_end: f64, chi: &[f64; 4]) -> [f64; 4] {
        let base = self.deterministic_at(t, t_end);
        std::array::from_fn(|i| (base[i] - self.noise + 2.0 * self.noise * chi[i]).clamp(self.clip[0], self.clip[1]))
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.amplitude >= 0.0
            && self.noise >= 0.0
            && self.frequency.is_finite()
            && self.pre_clip[0] <= self.pre_clip[1]
            && self.clip[0] > 0.0
            && self.clip[0] <= self.clip[1];
        if ok {
            Ok(())
        } else {
            Err(Error::Config("invalid friction schedule".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindSchedule {
    pub enabled: bool,
    /// Side-wind step amplitude [N].
    pub amplitude: f64,
    pub onset: f64,
    /// Noise as a fraction of the amplitude.
    pub noise_scale: f64,
}

impl Default for WindSchedule {
    fn default() -> Self {
        Self { enabled: true, amplitude: 0.25, onset: 1.0, noise_scale: 0.1 }
    }
}

impl WindSchedule {
    /// `F_w + noise_scale * chi * amplitude` after onset, zero before.
    pub fn wind_at(&self, t: f64, chi: f64) -> f64 {
        if !self.enabled || t < self.onset {
            0.0
        } else {
            self.amplitude + self.noise_scale * chi * self.amplitude
        }
    }
}

/// Open-loop linear reference sampled at the control rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub maneuver: Maneuver,
    pub dt: f64,
    pub v: f64,
    pub t: Vec<f64>,
    /// (beta, yaw rate)
    pub x: Vec<Vector2<f64>>,
    pub u: Vec<[f64; 4]>,
    /// (x, y, psi); psi is not wrapped.
    pub pose: Vec<[f64; 3]>,
}

impl Reference {
    pub fn duration(&self) -> f64 {
        self.t.last().copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSettings {
    pub physics_dt: f64,
    pub control_dt: f64,
    /// Speed-hold PI gains [1/s], [1/s^2].
    pub speed_kp: f64,
    pub speed_ki: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self { physics_dt: 1e-3, control_dt: 1e-2, speed_kp: 5.0, speed_ki: 5.0 }
    }
}

impl SimSettings {
    /// Physics steps per control tick.
    pub fn substeps(&self) -> Result<usize> {
        if !(self.physics_dt > 0.0 && self.control_dt >= self.physics_dt) {
            return Err(Error::Config("need 0 < physics_dt <= control_dt".into()));
        }
        let n = (self.control_dt / self.physics_dt).round();
        if ((n * self.physics_dt) - self.control_dt).abs() > 1e-9 * self.control_dt {
            return Err(Error::Config("control_dt must be an integer multiple of physics_dt".into()));
        }
        Ok(n as usize)
    }
}

fn linear_rates(a: &Matrix2<f64>, b: &SMatrix<f64, 2, 4>, x: &Vector2<f64>, u: &Vector4<f64>, psi: f64, v: f64) -> [f64; 5] {
    let xd = a * x + b * u;
    let heading = psi + x[0];
    [xd[0], xd[1], x[1], v * heading.cos(), v * heading.sin()]
}

/// Simulates the linear model at nominal friction under the maneuver's
/// steering program (held at the control rate), with pose kinematics.
pub fn generate_reference(m: &ManeuverSpec, p: &VehicleParams, sim: &SimSettings) -> Result<Reference> {
    m.validate()?;
    let substeps = sim.substeps()?;
    let params = p.with_speed(m.v);
    let lp = linearize(&params, &params.nominal_friction())?;
    let n_ticks = (m.duration / sim.control_dt).round() as usize;
    let h = sim.physics_dt;

    let mut s = [0.0f64; 5]; // beta, r, psi, x, y
    let mut out = Reference {
        maneuver: m.name,
        dt: sim.control_dt,
        v: m.v,
        t: Vec::with_capacity(n_ticks + 1),
        x: Vec::with_capacity(n_ticks + 1),
        u: Vec::with_capacity(n_ticks + 1),
        pose: Vec::with_capacity(n_ticks + 1),
    };
    for k in 0..=n_ticks {
        let t = k as f64 * sim.control_dt;
        let u = m.steering(t);
        out.t.push(t);
        out.x.push(Vector2::new(s[0], s[1]));
        out.u.push(u);
        out.pose.push([s[3], s[4], s[2]]);
        if k == n_ticks {
            break;
        }
        let uv = Vector4::from(u);
        for _ in 0..substeps {
            let f = |s: &[f64; 5]| linear_rates(&lp.a, &lp.b, &Vector2::new(s[0], s[1]), &uv, s[2], m.v);
            let add = |s: &[f64; 5], k: &[f64; 5], c: f64| -> [f64; 5] { std::array::from_fn(|i| s[i] + c * k[i]) };
            let k1 = f(&s);
            let k2 = f(&add(&s, &k1, h / 2.0));
            let k3 = f(&add(&s, &k2, h / 2.0));
            let k4 = f(&add(&s, &k3, h));
            s = std::array::from_fn(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    OpenLoop,
    Feedback,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LogRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub beta: f64,
    pub psi_dot: f64,
    pub v: f64,
    pub delta_fl: f64,
    pub delta_fr: f64,
    pub delta_rl: f64,
    pub delta_rr: f64,
    pub mu_fl: f64,
    pub mu_fr: f64,
    pub mu_rl: f64,
    pub mu_rr: f64,
    pub f_w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub log: Vec<LogRow>,
    /// (eps_x, eps_y, eps_psi)
    pub rmse: [f64; 3],
    pub epsilon: f64,
    pub max_abs_beta: f64,
}

/// Disturbance and uncertainty settings for one closed-loop run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Schedules {
    pub friction: FrictionSchedule,
    pub wind: WindSchedule,
}

impl Schedules {
    /// No friction variation, no noise, no wind.
    pub fn quiet() -> Self {
        Self {
            friction: FrictionSchedule { enabled: false, ..Default::default() },
            wind: WindSchedule { enabled: false, ..Default::default() },
        }
    }
}

/// Streaming pose RMSE over paired samples; psi errors are wrapped.
pub fn pose_rmse(actual: &[[f64; 3]], reference: &[[f64; 3]]) -> [f64; 3] {
    let n = actual.len().min(reference.len());
    if n == 0 {
        return [0.0; 3];
    }
    let mut acc = [0.0; 3];
    for (a, r) in actual.iter().zip(reference) {
        let e = [a[0] - r[0], a[1] - r[1], wrap_angle(a[2] - r[2])];
        for i in 0..3 {
            acc[i] += e[i] * e[i];
        }
    }
    acc.map(|s| (s / n as f64).sqrt())
}

pub fn combined_error(rmse: &[f64; 3]) -> f64 {
    (rmse[0] * rmse[0] + rmse[1] * rmse[1] + rmse[2] * rmse[2]).sqrt()
}

/// Closed-loop nonlinear simulation against a reference.
pub fn run_closed_loop(
    reference: &Reference,
    k: &DMatrix<f64>,
    p: &VehicleParams,
    schedules: &Schedules,
    mode: Mode,
    sim: &SimSettings,
    seed: u64,
) -> Result<RunResult> {
    if k.shape() != (4, 2) {
        return Err(Error::DimensionMismatch(format!("gain must be 4x2, got {:?}", k.shape())));
    }
    if reference.is_empty() {
        return Err(Error::InvalidParams("empty reference".into()));
    }
    if ((reference.dt - sim.control_dt) / sim.control_dt).abs() > 1e-9 {
        return Err(Error::InvalidParams("reference is not sampled at the control rate".into()));
    }
    schedules.friction.validate()?;
    let substeps = sim.substeps()?;
    let params = p.with_speed(reference.v);
    let t_end = reference.duration();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut state = ChassisState::cruising(reference.v);
    let mut speed_int = 0.0;
    let mut log = Vec::with_capacity(reference.len());
    let mut actual = Vec::with_capacity(reference.len());
    let mut max_abs_beta = 0.0f64;
    for (i, &t) in reference.t.iter().enumerate() {
        let chi: [f64; 4] = std::array::from_fn(|_| rng.gen::<f64>());
        let chi_w: f64 = rng.gen();
        let mu = if schedules.friction.enabled {
            schedules.friction.friction_at(t, t_end, &chi)
        } else {
            params.nominal_friction()
        };
        let f_w = schedules.wind.wind_at(t, chi_w);

        let mut delta = reference.u[i];
        if mode == Mode::Feedback {
            let dx = state.xp() - reference.x[i];
            for (w, d) in delta.iter_mut().enumerate() {
                *d += k[(w, 0)] * dx[0] + k[(w, 1)] * dx[1];
            }
        }
        let ev = reference.v - state.v;
        let accel = sim.speed_kp * ev + sim.speed_ki * speed_int;
        let tau = params.m * accel * params.r / 4.0;
        let input = ControlInput { delta, tau: [tau; 4] }.saturated();

        log.push(LogRow {
            t,
            x: state.pose_x,
            y: state.pose_y,
            psi: state.psi,
            beta: state.beta,
            psi_dot: state.psi_dot,
            v: state.v,
            delta_fl: input.delta[0],
            delta_fr: input.delta[1],
            delta_rl: input.delta[2],
            delta_rr: input.delta[3],
            mu_fl: mu[0],
            mu_fr: mu[1],
            mu_rl: mu[2],
            mu_rr: mu[3],
            f_w,
        });
        actual.push([state.pose_x, state.pose_y, state.psi]);
        max_abs_beta = max_abs_beta.max(state.beta.abs());

        if i + 1 == reference.len() {
            break;
        }
        let dist = Disturbance { f_hw: 0.0, f_sw: f_w };
        for _ in 0..substeps {
            state = integrate_step(&state, &input, &dist, &mu, &params, sim.physics_dt)
                .map_err(|e| Error::NumericBlowup { t, reason: e.to_string() })?;
            let finite = [state.beta, state.psi_dot, state.v, state.pose_x, state.pose_y].iter().all(|v| v.is_finite());
            if !finite || state.beta.abs() > PI / 2.0 {
                return Err(Error::NumericBlowup { t, reason: format!("|beta| = {:.3} exceeds pi/2", state.beta.abs()) });
            }
        }
        speed_int += ev * sim.control_dt;
    }
    let rmse = pose_rmse(&actual, &reference.pose);
    Ok(RunResult { log, rmse, epsilon: combined_error(&rmse), max_abs_beta })
}

/// Per-run seed: first 8 bytes (little endian) of SHA-256("maneuver|controller|seed").
pub fn derive_seed(maneuver: &str, controller: &str, seed: u64) -> u64 {
    let digest = Sha256::digest(format!("{maneuver}|{controller}|{seed}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn write_log_csv<W: Write>(w: W, log: &[LogRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for row in log {
        wr.serialize(row).map_err(|e| Error::Parse(e.to_string()))?;
    }
    wr.flush().map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_log_csv<R: Read>(r: R) -> Result<Vec<LogRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(|e| Error::Parse(e.to_string())))
        .collect()
}

/// A named gain participating in the benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchController {
    pub name: String,
    pub k: DMatrix<f64>,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub maneuver: Maneuver,
    pub controller: String,
    pub seed: u64,
    pub outcome: std::result::Result<RunResult, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub median: Option<f64>,
    pub epsilons: Vec<Option<f64>>,
    pub failures: Vec<String>,
}

/// Median-over-seeds results, rows = maneuvers, columns = controllers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub seeds: Vec<u64>,
    pub controllers: Vec<String>,
    pub rows: Vec<BenchRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub maneuver: Maneuver,
    pub cells: BTreeMap<String, TableCell>,
}

impl BenchTable {
    pub fn median(&self, maneuver: Maneuver, controller: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.maneuver == maneuver)
            .and_then(|r| r.cells.get(controller))
            .and_then(|c| c.median)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Aligned text table of the medians.
    pub fn to_text(&self) -> String {
        let mut cols = vec!["Error (eps)".to_string()];
        cols.extend(self.controllers.iter().cloned());
        let mut grid = vec![cols];
        for r in &self.rows {
            let mut line = vec![r.maneuver.title().to_string()];
            for c in &self.controllers {
                line.push(match r.cells.get(c).and_then(|c| c.median) {
                    Some(v) => format!("{v:.2e}"),
                    None => "failed".to_string(),
                });
            }
            grid.push(line);
        }
        let widths: Vec<usize> = (0..grid[0].len()).map(|j| grid.iter().map(|l| l[j].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for (i, line) in grid.iter().enumerate() {
            let cells: Vec<String> = line
                .iter()
                .enumerate()
                .map(|(j, c)| if j == 0 { format!("{c:<w$}", w = widths[j]) } else { format!("{c:>w$}", w = widths[j]) })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
                out.push('\n');
            }
        }
        out
    }
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

/// Runs every (maneuver, controller, seed) combination in parallel and
/// tabulates the median combined error. Failed runs are recorded, not fatal.
pub fn benchmark_suite(
    controllers: &[BenchController],
    maneuvers: &[ManeuverSpec],
    seeds: &[u64],
    p: &VehicleParams,
    schedules: &Schedules,
    sim: &SimSettings,
) -> Result<(BenchTable, Vec<RunRecord>)> {
    let references = maneuvers
        .iter()
        .map(|m| generate_reference(m, p, sim))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize, u64)> = (0..maneuvers.len())
        .flat_map(|m| (0..controllers.len()).flat_map(move |c| seeds.iter().map(move |s| (m, c, *s))))
        .collect();
    let records: Vec<RunRecord> = jobs
        .par_iter()
        .map(|&(mi, ci, seed)| {
            let m = maneuvers[mi].name;
            let c = &controllers[ci];
            let run_seed = derive_seed(m.name(), &c.name, seed);
            let outcome = run_closed_loop(&references[mi], &c.k, p, schedules, c.mode, sim, run_seed).map_err(|e| e.to_string());
            RunRecord { maneuver: m, controller: c.name.clone(), seed, outcome }
        })
        .collect();

    let rows = maneuvers
        .iter()
        .map(|m| {
            let cells = controllers
                .iter()
                .map(|c| {
                    let runs: Vec<&RunRecord> = records
                        .iter()
                        .filter(|r| r.maneuver == m.name && r.controller == c.name)
                        .collect();
                    let epsilons: Vec<Option<f64>> = runs.iter().map(|r| r.outcome.as_ref().ok().map(|o| o.epsilon)).collect();
                    let failures = runs
                        .iter()
                        .filter_map(|r| r.outcome.as_ref().err().map(|e| format!("seed {}: {e}", r.seed)))
                        .collect();
                    let mut ok: Vec<f64> = epsilons.iter().flatten().copied().collect();
                    (c.name.clone(), TableCell { median: median(&mut ok), epsilons, failures })
                })
                .collect();
            BenchRow { maneuver: m.name, cells }
        })
        .collect();
    Ok((
        BenchTable { seeds: seeds.to_vec(), controllers: controllers.iter().map(|c| c.name.clone()).collect(), rows },
        records,
    ))
}
