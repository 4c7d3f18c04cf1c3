//! Covariance-matrix toolkit for two-mode Gaussian states of light.
//!
//! Conventions: quadrature order `(X1, Y1, X2, Y2)`, vacuum variance 1/2,
//! entropies in nats.

pub mod channel;
pub mod error;
pub mod gaussian;
pub mod homodyne;
pub mod io;
pub mod markers;
pub mod reconstruction;

pub use channel::{evolve, infer_transmission, marker_trajectory, ChannelSpec, InferOptions};
pub use error::{Error, Result};
pub use gaussian::{
    entropy_f, CovarianceMatrix4, Invariants, LocalSymplectic, StandardFormCM, SymplecticData,
    TwoModeGaussian,
};
pub use homodyne::{simulate_all, HomodyneTrace, ModeSelector, SimConfig, TraceKind};
pub use markers::{classify, classify_cm, MarkerReport};
pub use reconstruction::{bootstrap_markers, reconstruct, ReconstructedCM, TraceSet};
