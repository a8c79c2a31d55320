//! Numerical operator calculus for fractional powers of hypoelliptic
//! Kolmogorov–Fokker–Planck operators.
//!
//! The crate evaluates, for operators `K u = tr(Q ∇²u) + <BX, ∇u> - ∂_t u`
//! with constant coefficients and Hörmander-positive covariance:
//!
//! * the Gaussian fundamental solution and the stationary / evolutive
//!   semigroups ([`semigroup`]);
//! * fractional powers `(-K)^s` by subordination, the direct fractional
//!   Laplacian, the nonlocal carré du champ in both its integral and
//!   semigroup forms, Besov seminorms, the Aronszajn energy, and the
//!   chain-rule remainder ([`fractional`]);
//! * executable checks of the nonlocal chain-rule identities, inequalities
//!   and `s -> 1` limits ([`verify`]);
//! * a batch scenario runner with deterministic CSV/JSON reports
//!   ([`scenario`]), exposed through the `kolfrac-cli` binary.
//!
//! Everything is desk scale by design: dense matrices up to `N = 6`,
//! quadrature grids that fit in memory, pure functions throughout. The
//! `examples/` directory has one runnable example per capability.

pub mod error;
pub mod fractional;
pub mod hormander;
pub mod linalg;
pub mod phi;
pub mod quadrature;
pub mod scenario;
pub mod semigroup;
pub mod testfn;
pub mod verify;

pub use error::{Error, Result};
pub use fractional::FracOrder;
pub use hormander::HormanderPair;
pub use phi::PhiFunction;
pub use quadrature::QuadratureSpec;
pub use semigroup::Engine;
pub use testfn::{SpaceTimePoint, TestFunction};
