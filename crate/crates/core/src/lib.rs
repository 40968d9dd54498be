//! Numerical toolkit for the resource theory of EPR steering.
//!
//! The crate covers assemblages and their validation, steering
//! non-increasing operations (SNIOs), membership in the unsteerable (LHS)
//! set, three steering monotones (steerable weight, robustness and the
//! relative entropy of steering), and the pure-state conversion criterion
//! for qubit assemblages with two inputs and two outputs.

pub mod assemblage;
pub mod conversions;
pub mod error;
pub mod io;
pub mod lhs;
pub mod monotones;
pub mod linalg;
pub mod par;
pub mod random;
pub mod sdp;
pub mod snio;
pub mod suite;

pub use assemblage::{Assemblage, PureAssemblage};
pub use error::{Result, SteeringError};
pub use linalg::{Divergence, HermitianMatrix, ProbTable, Spectrum};
