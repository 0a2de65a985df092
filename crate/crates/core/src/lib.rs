//! Spectral target detection on multiband images.
//!
//! Given an image cube with L bands and a known target signature d, a linear
//! detector assigns each pixel r a scalar score w'r (or w'(r - m) after mean
//! centering). Three classical detectors are implemented:
//!
//! - CEM: minimizes average output energy subject to w'd = 1, built from the
//!   sample correlation matrix R.
//! - MF: the Gaussian matched filter, built from the sample covariance K and
//!   the centered signature d - m.
//! - ACEM: CEM run on the cube augmented with a constant all-one band.
//!
//! The [`verify`] module certifies, numerically and per scene, the two facts
//! that motivate the augmented detector: adding a linearly independent band
//! strictly lowers the optimal CEM output energy, and augmenting with the
//! all-one band makes CEM equivalent to the matched filter (the two score
//! maps are affinely related, so rankings and ROC curves coincide).
//!
//! [`synth`] generates seeded, bit-reproducible test scenes, and [`io`]
//! reads and writes ENVI-format cubes plus csv/pgm detection-map exports.

pub mod detectors;
pub mod io;
pub mod linalg;
pub mod stats;
pub mod synth;
pub mod verify;

pub use detectors::{DetectionMap, DetectorKind, DetectorWeights, TargetSignature};
pub use linalg::SymMatrix;
pub use stats::{SceneStats, SpectralCube};
pub use synth::{generate_scene, GeneratedScene, SceneConfig};
