//! Spiking-neural-network phase unwrapping for 2D interferograms.
//!
//! Wrapped phase, its gradient and its coherence are spike-encoded, pushed
//! through a leaky integrate-and-fire processing layer with coherence-gated
//! lateral connections, and read out by a competitive decision layer that picks
//! a wrap count `k` per pixel. A hybrid STDP / surrogate-gradient rule trains
//! the feedforward weights, and an energy ledger converts spike activity into
//! joule estimates.

pub mod encoding;
pub mod energy;
pub mod error;
pub mod lif;
pub mod network;
pub mod plasticity;
pub mod raster;

pub use error::{Error, FormatError, Result};
