//! Design and analysis tools for millimeter-wave cavities built from intersecting
//! evanescent tubes.
//!
//! The crate covers the full chain from geometry to figures of merit:
//!
//! * [`geometry`]: tube unions, waveguide cutoff and preset cavities
//! * [`modesolver`]: vector eigenmodes on a conformal Yee grid, mode volume, wall tuning
//! * [`resonfit`]: one-port reflection model and quality-factor extraction
//! * [`cryo`]: thermal occupation, BCS surface loss and kinetic-inductance shifts
//! * [`duffing`]: driven Kerr response and the two-state empirical lineshape
//! * [`hybridqed`]: per-photon fields, couplings, cooperativities and cavity EIT spectra

pub mod consts;
pub mod cryo;
pub mod duffing;
pub mod error;
pub mod geometry;
pub mod hybridqed;
pub mod modesolver;
pub mod resonfit;

pub use error::{Error, Result};
