//! Sensory and observer state construction.

mod layout;
mod state;

pub use layout::{build_layout, FeatureSpec, HilbertLayout, ObserverFeatureSpec, Oscillator, Owner};
pub use state::{
    compose_sensory, oscillator_hamiltonian, product_amplitudes, pure_state, thermal_state, DensityMatrix,
    GibbsSign,
};
