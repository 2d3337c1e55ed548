//! Joint-sparse recovery for multiple measurement vectors.
//!
//! Given `Y = ΦX + E` with `X` row sparse, [`solver::osnst_solve`] alternates a
//! projection onto the feasible set, row selection from an orthonormal basis of the
//! iterate's column space, and least-squares feedback on the selected rows. The
//! number of rows kept at iteration `k` follows a [`FeedbackSchedule`].
//!
//! ```
//! use osnst_core::{osnst_solve, FeedbackSchedule, Mat, ProblemInstance, SolverConfig};
//!
//! // any matrix in general position works; a xorshift stream keeps the example self-contained
//! let mut state = 0x2545_f491_4f6c_dd1d_u64;
//! let phi = Mat::from_fn(12, 30, |_, _| {
//!     state ^= state << 13;
//!     state ^= state >> 7;
//!     state ^= state << 17;
//!     (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
//! });
//! let mut x = Mat::zeros(30, 2);
//! x[(4, 0)] = 1.0;
//! x[(4, 1)] = -0.5;
//! x[(17, 0)] = 2.0;
//! x[(17, 1)] = 1.5;
//! let p = ProblemInstance::from_truth(phi, x.clone(), None).unwrap();
//!
//! let cfg = SolverConfig::with_schedule(FeedbackSchedule::Linear(2));
//! let r = osnst_solve(&p, &cfg).unwrap();
//! assert!(r.converged);
//! assert!((r.estimate - x).norm() < 1e-8);
//! ```
//!
//! [`diagnostics`] evaluates restricted isometry constants by subset enumeration
//! and assembles the contraction certificate for small problems.

pub mod diagnostics;
pub mod error;
pub mod instance_io;
pub mod linalg;
pub mod model;
pub mod solver;

pub use error::{Error, Result};
pub use linalg::{Mat, RowPseudoInverse};
pub use model::{
    FeedbackSchedule, ProblemInstance, RecoveryResult, SolveStatus, SolverConfig, TieBreak,
    Tolerance,
};
pub use solver::{osnst_solve, somp_solve};
