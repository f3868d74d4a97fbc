//! Dual representations of increasing convex functionals on finite and
//! truncated-countable spaces.
//!
//! * [`space`]: ground spaces, functions, measures and the pairing `⟨f, μ⟩`.
//! * [`functional`]: a catalog of increasing convex functionals and probes for
//!   their domain, interior, directional derivatives and translation property.
//! * [`duality`]: numerical conjugates, subgradients from directional
//!   derivatives, and certification of `φ(f) = max_μ ⟨f, μ⟩ - φ*(μ)`.
//! * [`limits`]: monotone-continuity checks, mass escape along truncation
//!   ladders, tightness, regularity and step-function approximation.
//! * [`suite`]: config-driven runner and line-delimited JSON reports.

pub mod duality;
pub mod error;
pub mod ext_real;
pub mod functional;
pub mod limits;
pub mod sampling;
pub mod space;
pub mod suite;

pub use error::{Error, Result};
pub use ext_real::ExtReal;
pub use functional::{DomainProbe, Functional, KindTag};
pub use space::{make_truncation_ladder, pairing, Func, Measure, Space, SpaceRef};
