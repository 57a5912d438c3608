//! Joint transmit/receive beamforming and reflection design for radar-communication
//! coexistence systems assisted by two active reconfigurable intelligent surfaces.
//!
//! The crate is organised bottom-up:
//!
//! * [`channel`] draws geometry-dependent Rician channels and target responses.
//! * [`model`] evaluates radar SINR, communication SNR, rate and RIS powers.
//! * [`pdd`] is the penalty-dual-decomposition solver for the active design.
//! * [`passive`] is the unit-modulus benchmark driven by minorize-maximize steps.
//! * [`scenarios`] masks channels for the benchmark schemes and splits the power budget.
//! * [`experiment`] runs seeded sweeps (in parallel with the `parallel` feature) and
//!   writes CSV/JSON results.

pub mod channel;
pub mod config;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod model;
pub mod par;
pub mod passive;
pub mod pdd;
pub mod scenarios;

pub use error::{Error, Result};

/// Complex double.
pub type C64 = num_complex::Complex64;
/// Dense complex column vector.
pub type CVec = nalgebra::DVector<C64>;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;

/// Converts a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Converts a ratio in dB to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
