//! Breathing-rate and heart-rate traces from ordinary video.
//!
//! The processing chain is:
//!
//! 1. [`media`]: read P6 frames and convert them to luminance,
//! 2. [`flow`]: dense coarse-to-fine Horn–Schunck flow against the first frame,
//! 3. [`roi`]: propagate rectangular sample grids and reduce each frame to one
//!    motion or colour sample,
//! 4. [`refine`]: detrend, clip and window-standardize the raw signal,
//! 5. [`spectral`]: short-time spectrum restricted to a physiological band,
//! 6. [`amtc`]: dynamic-programming ridge tracking with online backtracking and
//!    iterative multi-trace extraction,
//! 7. [`eval`]: alignment and RMSE / SD|error| / MeRate metrics.
//!
//! [`synth`] renders videos with known embedded rates and [`pipeline`] wires
//! everything together behind a TOML configuration.

pub mod amtc;
pub mod error;
pub mod eval;
pub mod flow;
pub mod io;
pub mod media;
pub mod pipeline;
pub mod refine;
pub mod roi;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
