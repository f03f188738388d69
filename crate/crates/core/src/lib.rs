//! Constraint-aware analysis of a controlled vector-borne infection model.
//!
//! Given infection caps on the human and mosquito compartments, the crate
//! classifies the scenario, traces the barrier curves bounding the admissible
//! set and the maximal robust positively invariant set, assembles both sets
//! as polygons and checks them against a brute-force grid oracle.

pub mod analysis;
pub mod barrier;
pub mod classifier;
pub mod error;
pub mod geometry;
pub mod model;
pub mod ode;
pub mod oracle;
pub mod policy;
pub mod region;
pub mod scenario;
pub mod tangency;

pub use analysis::Analysis;
pub use barrier::{compute_barrier, verify_barrier, BarrierCurve, Termination};
pub use classifier::{classify, Case, Classification};
pub use error::{Error, Result};
pub use model::{ConstraintCaps, ConstraintFace, Costate, ModelParams, State};
pub use region::{build_regions, Membership, MembershipKind, RegionSet, Regions};
pub use tangency::{SetKind, TangentPoint};
