//! Ground-truth oracles for small systems.

mod bessel;
mod classical;
mod dense;

pub use bessel::{bessel_j, bessel_populations};
pub use classical::{classical_propagate, ClassicalChain, ClassicalPhasePoint};
pub use dense::{
    conserved_labels, dense_hamiltonian, dense_propagate, DensePropagator, DenseState, DENSE_CAP,
};
