//! AIMD matrices, their window lifts and block forms, the norms in which they
//! are non-expansive, and randomized verification of those properties.

mod aimd;
mod dense;
mod lifted;
mod norms;
pub mod verify;

pub use aimd::{
    build_aimd_matrix, full_backoff_matrix, matrix_probability, sample_pattern, AimdMatrix, BackoffPattern,
};
pub use dense::Matrix;
pub use lifted::{apply_lifted, build_d, build_e, build_u, lifted_product, BlockMatrix, LiftedMatrix};
pub use norms::{norm_1, norm_combined, norm_t, project_w, NormKind};
pub use verify::{verify_norm_property, NormReport, Space};
