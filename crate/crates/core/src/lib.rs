//! Photon-level discrete-event simulation of a frequency-multiplexed telecom
//! photon-pair link: two-photon comb source, fiber, sum-frequency conversion,
//! herald-gated noise shutter, atomic-frequency-comb memory, detection and
//! start-stop histogramming, plus the offset-lock chain that keeps the
//! converted photons on the comb.

pub mod channel;
pub mod detection;
pub mod error;
pub mod harness;
pub mod lockchain;
pub mod memory;
pub mod rng;
pub mod source;
pub mod spectral;

pub use error::{Error, Result};
