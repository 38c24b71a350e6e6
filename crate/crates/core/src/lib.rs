//! Discrete optimal-transport analysis on embedded point samples.
//!
//! The crate solves the Kantorovich problem exactly on finite instances,
//! extracts the alternant-chain dynamics living on the support of optimal
//! plans (match graph, levels, cyclic chains), decomposes supports into
//! numbered limb systems and reconstructs the unique coupling by descent,
//! and builds the geometric cost families (circles, nested convex
//! boundaries, the lake scene, simplex-to-sphere bouquets) on which the
//! chain-length bounds can be checked.
//!
//! Entry points:
//! - [`geometry`]: embedded samples and the geometric maps.
//! - [`costs`]: cost evaluation, tangent-frame gradients, twist diagnostics.
//! - [`measure`]: rational-weight discrete measures.
//! - [`transport`]: exact solver, duals, c-transforms, optimal-face probes.
//! - [`chains`]: match graph, chain enumeration, levels, cyclic chains.
//! - [`limbs`]: level classes, limb systems, descent, uniqueness verdict.
//! - [`instance`]: bundled problem instances and generators.
//! - [`oracle`]: brute-force reference implementations used by tests.

pub mod chains;
pub mod costs;
pub mod error;
pub mod geometry;
pub mod instance;
pub mod limbs;
pub mod measure;
pub mod oracle;
pub mod ratio;
pub mod transport;

pub use error::{Error, Result};
pub use measure::DiscreteMeasure;
pub use transport::{solve_kantorovich, DualPotentials, Solution, TransportPlan};
