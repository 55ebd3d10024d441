//! Construction and numerical certification of the harmonic family
//! `u = |X|^2 - ell*y^2 + eta*exp(lambda*x1)*cos(lambda*z)` on the unit ball of
//! `R^n`: bounded Almgren frequency, regular nodal set, and `2m` independent
//! `ell`-cycles in the nodal set.

pub mod error;
pub mod field;
pub mod frequency;
pub mod holes;
pub mod homology;
pub mod interval;
pub mod mesh;
pub mod nodal_mesh;
pub mod quadrature;
pub mod regularity;
pub mod report;

pub use error::{Error, Result};
pub use field::{
    derive_params, eval_phi, eval_u, eval_u_rescaled, EvalResult, FamilyParams, Point,
};
pub use holes::HoleDescriptor;
pub use homology::BettiVector;
pub use mesh::SimplicialMesh;
pub use nodal_mesh::WindowSpec;
pub use report::{
    emit_figures, run_verification, ClaimStatus, RunConfig, Task, VerificationReport,
};
