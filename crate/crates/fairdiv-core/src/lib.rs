//! Exact-arithmetic algorithms and verifiers for discrete fair division.
//!
//! The crate implements four allocation algorithms over additive valuations —
//! a complete EF2X algorithm and a √2⁄2-EFX algorithm for instances where
//! agent pairs share at most one relevant good, and a √2⁄2-EFX algorithm and
//! an exact EFX algorithm for restricted-additive instances — together with
//! the machinery they share: weighted envy graphs, exact rank and
//! virtual-value computation, fairness verifiers producing re-checkable
//! violation witnesses, potential functions, a brute-force oracle, and seeded
//! instance generators.  All arithmetic is arbitrary-precision rational; the
//! √2 threshold is handled by squared comparisons.

pub mod allocation;
pub mod fairness;
pub mod fixtures;
pub mod framework;
pub mod generator;
pub mod graph;
pub mod instance;
pub mod oracle;
pub mod rational;

pub mod algorithms;

pub use algorithms::{run_cxxra, run_pqrax, run_sqrt2_pq, run_sqrt2_ra};
pub use allocation::Allocation;
pub use generator::{generate, GenError, GenSpec, Model, XorShift64Star};
pub use instance::{BoundProfile, CoreError, GoodSet, Instance, RestrictedCertificate};
pub use rational::{Beta, Rational};
