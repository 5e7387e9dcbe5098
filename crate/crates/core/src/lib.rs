//! Multi-model spectral clustering for rigid motion segmentation of sparse
//! feature trajectories.
//!
//! The pipeline samples affine, homography and fundamental-matrix hypotheses
//! on consecutive frame pairs, turns each model's residuals into an ordered
//! residual kernel, fuses the kernels by spectral clustering and, when the
//! number of motions is unknown, picks it by normalized cut plus
//! reconstruction error.

pub mod binio;
pub mod eval;
pub mod geometry;
pub mod hypgen;
pub mod linalg;
pub mod modelsel;
pub mod ork;
pub mod pipeline;
pub mod spectral;
pub mod stats;
pub mod synth;
pub mod trajdata;

use thiserror::Error;

/// Any library error, tagged with the module it came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error("trajdata: {0}")]
    Traj(#[from] trajdata::TrajError),
    #[error("geometry: {0}")]
    Geometry(#[from] geometry::GeometryError),
    #[error("hypgen: {0}")]
    HypGen(#[from] hypgen::HypGenError),
    #[error("ork: {0}")]
    Kernel(#[from] ork::KernelError),
    #[error("spectral: {0}")]
    Spectral(#[from] spectral::SpectralError),
    #[error("modelsel: {0}")]
    ModelSel(#[from] modelsel::ModelSelError),
    #[error("eval: {0}")]
    Eval(#[from] eval::EvalError),
    #[error("synth: {0}")]
    Synth(#[from] synth::SynthError),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical machinery rather than of the input.
    pub fn is_numerical(&self) -> bool {
        use modelsel::ModelSelError as M;
        use spectral::SpectralError as S;
        matches!(
            self,
            Error::Spectral(S::Eigen(_))
                | Error::ModelSel(M::NoCandidate)
                | Error::ModelSel(M::Spectral(S::Eigen(_)))
        )
    }
}
