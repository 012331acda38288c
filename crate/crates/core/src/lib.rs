//! Exponential Euler simulation of parabolic SPDEs on (0,1) with
//! multiplicative Q-Wiener noise, and the machinery to check its strong
//! rate and the limit law of its normalized error.

pub mod catalog;
pub mod collocation;
pub mod error;
pub mod fem;
pub mod limit_law;
pub mod schemes;
pub mod sode;
pub mod spectral;
pub mod stats;
pub mod stochastics;

pub use collocation::{Collocation, NemytskiiCoeffs, PhysicalField, SineTransform};
pub use error::{Error, Result};
pub use fem::{FemField, FemMesh, FemOperators};
pub use schemes::{MonteCarlo, ProblemSpec, SchemePath, TimeGrid};
pub use spectral::{AnalysisParams, OperatorSpec, SpectralField};
pub use stats::{RateFit, SampleSet};
pub use stochastics::{NoisePath, QSpec, Role};
