//! Bi-impulsive Earth-Moon transfers in the planar circular restricted
//! three-body problem: construction by grid search plus differential
//! correction, a persistent solution catalog, and analysis of the
//! discontinuous time-of-flight band structure of the solution space.
//!
//! # Pipeline
//!
//! 1. [`search::GridSpec`] enumerates construction parameters — departure
//!    phase angle on the Earth parking orbit, initial-to-circular velocity
//!    ratio, and time of flight — deterministically by index.
//! 2. [`transfer::departure_state`] turns a parameter triple into a
//!    rotating-frame state that satisfies the departure constraints exactly;
//!    [`dynamics::propagate`] integrates it with Earth/Moon collision
//!    events armed.
//! 3. [`corrector::correct`] drives the two-component insertion residual to
//!    zero by adjusting the velocity ratio and time of flight inside box
//!    bounds (the phase angle is frozen).
//! 4. [`sweep::run_search`] runs the whole pipeline over a grid with
//!    checkpointing; [`catalog`] persists solutions, deduplicates, exports
//!    the four solution-space maps, and detects the time-of-flight branches
//!    spaced roughly one lunar month apart.
//!
//! Everything dynamical is dimensionless (LU/TU/VU); [`SystemConstants`]
//! owns the conversions to km, km/s, and days.
//!
//! # Quick start
//!
//! ```
//! use cislunar::{
//!     ConstructionParams, CorrectionSettings, OrbitSpec, SystemConstants,
//! };
//!
//! let constants = SystemConstants::default();
//! let orbit = OrbitSpec::default();
//! let guess = ConstructionParams::new(0.0, 1.405, 2.0);
//! let outcome = cislunar::corrector::correct(
//!     &constants, &orbit, guess, None, &CorrectionSettings::default(),
//! );
//! println!("{:?}: |psi_f| = {:.2e}", outcome.status, outcome.residual_norm);
//! ```
//!
//! The `examples/` directory has one runnable example per capability:
//! propagation with events, departure geometry, a single correction, a
//! miniature end-to-end sweep, branch detection, and map export.

pub mod catalog;
pub mod config;
pub mod constants;
pub mod corrector;
pub mod dynamics;
pub mod ode;
pub mod search;
pub mod sweep;
pub mod transfer;

pub use catalog::{
    band_slopes, branch_reports, deduplicate, detect_branches, export_maps, load_catalog,
    Band, BranchReport, CatalogData, CatalogHeader, DedupTolerances, SolutionMap,
    TransferSolution,
};
pub use config::RunConfig;
pub use constants::SystemConstants;
pub use corrector::{correct, CorrectionOutcome, CorrectionSettings, CorrectionStatus};
pub use dynamics::{
    jacobi_energy, propagate, propagate_with_stm, vector_field, AugmentedState, CollisionMode,
    PlanarState, PropagationOptions, PropagationResult, TerminationCause,
};
pub use search::{evaluate_candidate, AxisSpec, Candidate, CandidateStatus, GridSpec};
pub use sweep::{resume_search, run_search, SweepSummary};
pub use transfer::{
    departure_residual, departure_state, impulses, insertion_residual, ConstructionParams,
    ImpulseSummary, OrbitSpec,
};
