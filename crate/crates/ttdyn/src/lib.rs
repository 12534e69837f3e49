//! Tensor-train time propagation for one-dimensional exciton-phonon chains.
//!
//! States are tensor trains, Hamiltonians are assembled from the SLIM
//! decomposition (one on-site term plus a few bond channels per site), and
//! four integrator families advance the state: symmetric differencing,
//! odd/even splitting with compositions, single-site TDVP and global Krylov.
//! Dense and classical oracles cover small systems.

pub mod error;
pub mod linalg;
pub mod observables;
pub mod propagators;
pub mod reference;
pub mod slim;
pub mod tt;

pub use error::{Error, Result};
pub use observables::{build_initial_state, InitialStateSpec, MetricsReport, ObservableSet, Sample};
pub use propagators::{integrator, Integrator, PropagatorConfig, Scheme};
pub use slim::{build_slim, hamiltonian, ChainParameters, SlimComponents, SystemKind};
pub use tt::{TensorTrain, TruncationPolicy, TtOperator};
