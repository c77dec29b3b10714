//! Optimal-cost dynamics of one-dimensional controlled random walks in
//! random potential.
//!
//! The library computes, cross-validates and explores three families of
//! quantities for a nearest-neighbor walk on `Z` moving through a bounded
//! random potential `V`:
//!
//! * the tilted free energy `Lambda_beta(theta)` of the uncontrolled walk, obtained
//!   either by direct dynamic programming or through a corrector fixed
//!   point and an implicit root equation ([`tfe`]);
//! * the effective Hamiltonian `H_bar(theta)` of the controlled problem,
//!   with closed-form regime dispatch (no / weak / strong / full control)
//!   and exact finite-horizon Bellman dynamic programming ([`effham`],
//!   [`bellman`]);
//! * the corrector-driven toolkit behind both: cocycles and sublinearity
//!   diagnostics, the induced random walk in random environment with its
//!   velocity, variational-formula verification and nondifferentiability
//!   bounds ([`corrector`]), plus simple-walk primitives such as hitting
//!   time transforms, confinement exponents and excursion large deviations
//!   ([`walk`]).
//!
//! Environments (periodic, i.i.d., two-state Markov, glued pairs) are
//! generated reproducibly from seeds in [`env`]. Every module exposes the
//! independent cross-checks used by its test suite; [`verify`] bundles them
//! into runnable invariant suites.

pub mod bellman;
pub mod corrector;
pub mod effham;
pub mod env;
pub mod error;
pub mod numeric;
pub mod tfe;
pub mod verify;
pub mod walk;

pub use bellman::{ControlProblem, PolicySpec, ValueTable};
pub use corrector::{Cocycle, RwreProfile};
pub use effham::RegimeReport;
pub use env::{Environment, IntervalFeature};
pub use error::CoreError;
pub use tfe::{FreeEnergyQuery, FreeEnergyResult};
