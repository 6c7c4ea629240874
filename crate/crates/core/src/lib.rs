//! Uncertainty-aware language agent.
//!
//! A question is first answered by a plain Standard or CoT prompt. When the
//! answer's uncertainty exceeds a calibrated threshold the agent runs a ReAct
//! tool loop, and when that answer is still too uncertain it defers to an
//! oracle. [`agent::Agent`] wires the stages together; the other modules are
//! usable on their own.

pub mod agent;
pub mod calibration;
pub mod canonical;
pub mod eval;
pub mod gateway;
pub mod tools;
pub mod uncertainty;

pub type Uncertainty64 = uncertainty::Uncertainty<f64>;
pub type Uncertainty32 = uncertainty::Uncertainty<f32>;
pub type ScoredAnswer64 = uncertainty::ScoredAnswer<f64>;
pub type ScoredAnswer32 = uncertainty::ScoredAnswer<f32>;
pub type CalibrationSet64 = calibration::CalibrationSet<f64>;
pub type CalibrationSet32 = calibration::CalibrationSet<f32>;
pub type CalibrationProfile64 = calibration::CalibrationProfile<f64>;
pub type CalibrationProfile32 = calibration::CalibrationProfile<f32>;
