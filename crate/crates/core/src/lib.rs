//! Variational Monte Carlo engine for Rydberg atoms on the ruby lattice.
//!
//! Neural-network quantum states evolved by TDVP, an exact-diagonalization
//! oracle for small systems, and the spin-liquid diagnostic suite.

pub mod ansatz;
pub mod config;
pub mod entropy;
pub mod hamiltonian;
pub mod lattice;
pub mod observables;
pub mod oracle;
pub mod sampler;
pub mod scalar;
pub mod stats;
pub mod tdvp;
pub mod workflow;

pub use lattice::{Boundary, Configuration, LatticeError, LatticeSpec, ParityCharges, RubyLattice};
pub use scalar::{Cplx, Real};
pub use ansatz::{AnsatzHyper, FullRank, Nqs, VariationalState};
pub use config::{Checkpoint, RunConfig};
pub use hamiltonian::{Hamiltonian, RampProtocol, RydbergHamiltonian, StabilizerHamiltonian};
pub use sampler::{SampleSet, SamplerConfig};
pub use stats::EstimateRecord;
pub use tdvp::{Driver, TdvpConfig};

pub type Nqs64 = Nqs<f64>;
pub type Nqs32 = Nqs<f32>;
pub type FullRank64 = FullRank<f64>;
pub type FullRank32 = FullRank<f32>;
pub type Driver64 = Driver<f64, Nqs<f64>>;
pub type Driver32 = Driver<f32, Nqs<f32>>;
pub type C64 = num_complex::Complex<f64>;
