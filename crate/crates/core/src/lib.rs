//! Modeling and parameter extraction for 3D-cavity optomechanical devices.
//!
//! The crate is organised around the analysis chain of a cavity
//! optomechanics experiment:
//!
//! - [`netfoster`]: lossless one-port admittance, resonant modes as
//!   positive-slope zero crossings, equivalent lumped elements.
//! - [`omresponse`]: bare and two-tone (OMIT/OMIA) cavity transmission,
//!   cooperativity, photon-number calibration and coupling estimates.
//! - [`fitkit`]: Levenberg-Marquardt least squares and the extraction chain
//!   bare cavity → per-power OMIA fit → cooperativity-vs-photon-number → g₀.
//! - [`electrotune`]: DC-bias drive force and capacitive spring softening.
//! - [`formats`], [`simulate`], [`plot`] and [`cli`]: file formats,
//!   synthetic data, plot output and the `omcavity` command line.
//!
//! All frequencies are angular (rad/s) inside the library. Files carry
//! ordinary frequencies in Hz and are converted at the boundary.

pub mod cli;
pub mod electrotune;
pub mod fitkit;
pub mod formats;
pub mod netfoster;
pub mod omresponse;
pub mod plot;
pub mod simulate;
pub mod units;

pub use num_complex::Complex64;
