//! Optimal dispatch of phase-switching devices (PSDs) and a static var
//! compensator (SVC) for current-unbalance mitigation in low-voltage radial
//! feeders.
//!
//! The dispatch problem is assembled as a mixed-integer second-order-cone
//! program ([`formulation`]), solved with an in-repo interior-point cone solver
//! ([`conesolver`]) inside a best-first branch-and-bound ([`bnb`]), and
//! validated against an exact backward/forward-sweep power flow
//! ([`pforacle`]). [`scenario`] drives whole-horizon runs and sweeps.

pub mod bnb;
pub mod conesolver;
pub mod fixtures;
pub mod formulation;
pub mod linearize;
pub mod netmodel;
pub mod pforacle;
pub mod scenario;
pub mod seqcomp;

pub use netmodel::{Complex, Network, Phase};
