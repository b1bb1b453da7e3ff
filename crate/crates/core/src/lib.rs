//! Desk-scale Wasserstein-Sobolev calculus on discrete measures.
//!
//! - [`norms`]: norms on R^d, dual norms, duality maps, smoothed norm families
//! - [`measures`]: discrete measures, moments, mollification
//! - [`transport`]: exact discrete optimal transport and Kantorovich potentials
//! - [`cylinder`]: cylinder functions, their differential and metric slope probes
//! - [`energy`]: pre-Cheeger energy, Sobolev surrogate, Boas inequalities
//! - [`approx`]: max-of-potentials approximation and coordinate projections

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod approx;
pub mod cylinder;
pub mod energy;
pub mod error;
pub mod measures;
pub mod norms;
pub mod quadrature;
pub mod rng;
pub mod transport;

pub use approx::PotentialDictionary;
pub use cylinder::CylinderFunction;
pub use error::{Error, Result};
pub use measures::{DiscreteMeasure, MetaAtom, MetaMeasure, MollifierSpec};
pub use norms::{CostSpec, NormKind, NormSpec};
pub use transport::{KantorovichPotentials, TransportSolution};
