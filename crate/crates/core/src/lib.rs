//! Approximately Einstein ACH metrics on homogeneous almost pseudohermitian
//! models.
//!
//! The crate builds the asymptotically complex hyperbolic metric
//!
//! ```text
//! g = (2φ)⁻² dφ² + φ⁻² s θ² − φ⁻¹ h̃_AB θ̃^A θ̃^B,   θ̃^A = θ^A + φ η̃^A θ
//! ```
//!
//! on the collar `M × (-1, 0)` of a homogeneous model `M` as a truncated
//! Laurent series in φ, solves the Einstein equation `Ric = -2(n+2) g` order by
//! order, reads off the obstruction tensors and renormalizes the volume.
//!
//! Module overview:
//!
//! * [`ljet`]: truncated Laurent series, the scalar type of everything else.
//! * [`model`]: homogeneous models (structure constants + Levi form), their
//!   validation, constructors, contact rescaling and changes of J.
//! * [`twt`]: Tanaka–Webster–Tanno connection, torsion, Tanno tensor and
//!   curvature forms of a model.
//! * [`curvature`]: metric jet, Levi-Civita connection, Riemann/Ricci/Einstein.
//! * [`solver`]: the order-by-order Einstein recursion and obstructions.
//! * [`volume`]: volume density expansion, log coefficient `L`, numeric profile.
//!
//! Conventions used throughout:
//!
//! * `(x∧y)(X,Y) = x(X)y(Y) − x(Y)y(X)`, `x⊙y = (x⊗y + y⊗x)/2`.
//! * For invariant forms `dθ(X,Y) = −θ([X,Y])`, so `dθ = i h_{αβ̄} θ^α∧θ^β̄`
//!   means the T-component of `[W_α, W_β̄]` is `−i h_{αβ̄}`.
//! * Model basis: index 0 is `T`, `1..=n` are `W_1..W_n`, `n+1..=2n` are
//!   `W_1̄..W_n̄`. Horizontal indices `A ∈ 0..2n` refer to `W_A = E_{A+1}`.
//! * Collar basis: index 0 is `∂_φ`, followed by the model basis shifted by 1.

pub mod curvature;
pub mod linalg;
pub mod ljet;
pub mod model;
pub mod solver;
pub mod twt;
pub mod volume;

pub use curvature::{ConnectionJet, CurvatureJet, MetricJet};
pub use ljet::LaurentJet;
pub use model::{FrameChange, JFamily, PhmModel, ValidationReport};
pub use solver::{Obstructions, SolverOptions, SolverState};
pub use twt::{TwtConnection, TwtCurvature};
pub use volume::VolumeReport;

use num_complex::Complex64;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("jet is identically zero to its truncation; cannot invert")]
    LeadingZero,

    #[error("square root of a jet with odd leading degree {0}")]
    OddLeadingDegree(i32),

    #[error("square root of a jet with non-positive leading coefficient {0}")]
    NonPositiveLeading(Complex64),

    #[error("coefficient of φ^{order} requested but jet is only known below φ^{trunc}")]
    OutOfWindow { order: i32, trunc: i32 },

    #[error("Levi matrix is not positive definite (smallest eigenvalue {0:.3e})")]
    NonPositiveLevi(f64),

    #[error("Jacobi identity violated (residual {0:.3e})")]
    JacobiViolation(f64),

    #[error("invalid model: {0}")]
    InvalidModel(Box<ValidationReport>),

    #[error("incompatible almost CR structure: {0}")]
    IncompatibleJ(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular linear system ({0})")]
    SingularSystem(String),

    #[error("boundary data mismatch: {0}")]
    BoundaryMismatch(String),

    #[error("singular probe matrix at stage {stage} (pivot ratio {ratio:.3e})")]
    SingularStage { stage: i32, ratio: f64 },

    #[error("ε = {0} lies outside the trusted window")]
    WindowTooLarge(f64),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
