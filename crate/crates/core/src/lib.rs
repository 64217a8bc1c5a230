//! Low range-sidelobe pulse compression.
//!
//! - [`waveform`]: tapered LFM chirps, Bezier-shaped NLFM sweeps, Barker codes
//! - [`filter_design`]: convolution matrices, minimum-ISL and matched filters, ISL/PSL/SNR-loss
//! - [`rls`]: RLS refinement of a mismatched filter toward a sidelobe-free response
//! - [`clean`]: range-profile simulation, detection and CLEAN amplitude estimation
//! - [`bga`]: breeder genetic algorithm over NLFM Bezier control points
//! - [`io`]: table and sidecar file formats

pub mod bga;
pub mod clean;
pub mod error;
pub mod filter_design;
pub mod io;
pub mod linalg;
pub mod rls;
pub mod waveform;

pub use error::{Error, Result};
pub use linalg::C64;
