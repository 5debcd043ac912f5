//! Circuit-QED simulator for cyclic three-level atoms coupled to cavity modes.
//!
//! The crate builds device Hamiltonians, diagonalizes them across parameter
//! sweeps, evaluates virtual-photon effective couplings by summing
//! perturbative paths, and integrates the Lindblad master equation.

pub mod device;
pub mod dynamics;
pub mod error;
pub mod hilbert;
pub mod perturbation;
pub mod scenario;
pub mod spectrum;

pub use device::{AtomSpec, CavitySpec, CouplingEdge, DeviceSpec, Transition};
pub use error::{Error, Result};
pub use hilbert::{BareState, CompositeSpace, Level, OperatorMatrix, C64};
