//! Sheath and lumen boundary conditions and the crimp / deploy / beat protocol.

pub mod bc;
pub mod scenarios;

pub use bc::{DiameterSchedule, LumenModel, MotionProfile, NodeContact, SheathBC};
pub use scenarios::{
    anchorage_force, default_lumen, french_to_mm, BeatOutcome, EnergySample, PhaseLog, Protocol, ProtocolConfig,
    RadialForceCurve, StrainHistoryStore,
};
