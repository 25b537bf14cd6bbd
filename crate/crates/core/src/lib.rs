//! Exact solvers for equilibria of the Arctic Auction, a linear Fisher market in
//! which buyers may take back unspent money at one util per dollar.
//!
//! Two algorithms are provided: a Δ-scaling method ([`weak`]) and a
//! committed-refund variant with compressed restarts ([`strong`]). Both work on
//! a randomly perturbed copy of the instance so that the equilibrium is unique
//! and all intermediate equality graphs are forests. [`oracle`] certifies
//! outputs independently.

pub mod basic_solution;
pub mod error;
pub mod graph;
pub mod instance;
pub mod oracle;
pub mod par;
pub mod perturb;
pub mod rational;
pub mod solve;
pub mod state;
pub mod strong;
pub mod trace;
pub mod weak;

pub use error::SolverError;
pub use instance::{load_instance, MarketInstance};
pub use rational::Rational;
pub use state::MarketState;
