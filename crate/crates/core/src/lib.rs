//! Cache-aided MIMO content delivery.
//!
//! The crate covers the whole pipeline of a coded-caching MIMO downlink:
//!
//! - [`model`]: network configuration, cache placement, subpacket bookkeeping
//!   and the per-transmission stream layout shared by the optimizers.
//! - [`dofopt`]: the achievable degrees-of-freedom bound and its `(Ω, β)`
//!   optimizer.
//! - [`scheduling`]: multicast codeword scheduling (hypergraph factorization
//!   plus the concatenate-and-repartition extension).
//! - [`channel`]: seeded i.i.d. Rayleigh channel generation.
//! - [`beamform`]: zero-forcing unicast delivery and the linear multicast
//!   design with MMSE receivers and a KKT/subgradient transmitter update.
//! - [`covdesign`]: max-min transmit covariance design over MAC rate regions.
//! - [`rate`]: symmetric-rate accounting and DoF slope estimation.
//! - [`harness`]: Monte Carlo experiment driver and result persistence.

pub mod beamform;
pub mod channel;
pub mod covdesign;
pub mod dofopt;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod rate;
pub mod scheduling;

mod error;

pub use error::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;
