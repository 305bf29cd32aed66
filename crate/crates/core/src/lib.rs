//! Robust LPV state-feedback control for a scale four-wheel-drive,
//! four-wheel-steering vehicle under per-wheel friction uncertainty.

pub mod analysis;
pub mod bench;
pub mod config;
pub mod error;
pub mod lmi;
pub mod model;
pub mod sdpsolve;
pub mod synthesis;
pub mod uncertainty;

pub use error::{Error, Result};
pub use model::{ChassisState, ControlInput, Disturbance, GeneralizedPlant, LinearPlant, VehicleParams};
pub use synthesis::{RobustController, SynthesisSpec};
pub use uncertainty::{PolytopicPlant, UncertaintyBox};
