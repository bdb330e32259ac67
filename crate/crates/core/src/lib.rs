//! Priority-queue task models with general priority-based selection.
//!
//! Tasks arrive one per step with i.i.d. priorities; a selection protocol
//! v(x, y) picks which of the buffered tasks runs. The crate provides:
//!
//! - [`sim`]: an exact discrete-time Monte Carlo of the queue with
//!   deterministic seeding, replica streams, and event/renewal tracking;
//! - [`analytic`]: closed forms for the coin-flip protocol (stationary law,
//!   waiting-time pmf, expected waiting time) and the quadrature form of the
//!   waiting-time pmf for arbitrary protocols;
//! - [`solver`]: the stationary old-task density for smooth protocols via a
//!   Neumann series with a Hilbert-Schmidt convergence certificate, a direct
//!   grid solve as cross-check, a (p, c) convergence-region scan, and
//!   closed-form pmf envelopes with the cutoff scale k0;
//! - [`records`]: the p = 1 regime as a lower-record process — exact
//!   indicator enumeration, conditional gap laws, and SLLN/CLT/LIL test
//!   batteries driven by the gap law instead of e^k stream steps.
//!
//! All model types are immutable after construction and safe to share
//! across threads; operations are pure given their inputs.

pub mod analytic;
pub mod dist;
pub mod error;
pub mod protocol;
pub mod quad;
pub mod records;
pub mod sim;
pub mod solver;
pub mod stats;

pub use dist::{GridDensity, PriorityDistribution};
pub use error::{Error, Result};
pub use protocol::{q, q1, Discontinuity, SelectionProtocol};
pub use quad::QuadratureGrid;
