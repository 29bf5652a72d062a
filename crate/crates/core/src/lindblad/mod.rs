//! Markovian evolution of the sensory state under observer coupling.
//!
//! The sensory system couples to the observer bath through
//! `H_int = Σ_j g_j S_j ⊗ O_j`. System operators are split into
//! eigenoperators of `H_sens`, the bath enters through its cross spectral
//! density `γ_kl(ω)` (Lorentzian-broadened), and the resulting jump
//! operators drive a GKSL master equation. The Lamb shift is not modelled.

mod bath;
mod eigen;
mod integrate;
mod jumps;

pub use bath::{bath_spectrum, lorentzian, BathSpectrum};
pub use eigen::{eigenoperators, EigenOperator, FREQUENCY_TOL};
pub use integrate::{evolve, Evolver, RK_TOL};
pub use jumps::{jump_operators, JumpOperator};

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::encoding::{thermal_state, DensityMatrix, GibbsSign};
use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, C64};

/// One coupling term `g · S ⊗ O`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionTerm {
    pub g: C64,
    pub system: ComplexMatrix,
    pub observer: ComplexMatrix,
}

impl InteractionTerm {
    pub fn new(g: C64, system: ComplexMatrix, observer: ComplexMatrix) -> Self {
        Self { g, system, observer }
    }

    /// `g* · S† ⊗ O†`.
    pub fn conjugate(&self) -> Self {
        Self { g: self.g.conj(), system: self.system.adjoint(), observer: self.observer.adjoint() }
    }

    /// Entrywise comparison of `g S ⊗ O` without forming the product.
    fn product_close(&self, other: &Self, tol: f64) -> bool {
        let (s1, o1, s2, o2) = (&self.system, &self.observer, &other.system, &other.observer);
        for (a1, a2) in s1.iter().zip(s2.iter()) {
            let (x1, x2) = (self.g * a1, other.g * a2);
            for (b1, b2) in o1.iter().zip(o2.iter()) {
                if (x1 * b1 - x2 * b2).norm() > tol {
                    return false;
                }
            }
        }
        true
    }
}

/// Everything needed to evolve the sensory state.
#[derive(Debug, Clone)]
pub struct LindbladModel {
    h_sens: ComplexMatrix,
    h_obs: ComplexMatrix,
    interactions: Vec<InteractionTerm>,
    temperature: f64,
    tau_corr: f64,
    rho_obs_0: DensityMatrix,
    bath: BathSpectrum,
}

impl LindbladModel {
    /// Builds the model with the observer in its thermal state.
    pub fn new(
        h_sens: ComplexMatrix,
        h_obs: ComplexMatrix,
        interactions: Vec<InteractionTerm>,
        temperature: f64,
        tau_corr: f64,
        gibbs_sign: GibbsSign,
    ) -> Result<Self> {
        let rho_obs_0 = thermal_state(&h_obs, temperature, gibbs_sign)?;
        Self::with_observer_state(h_sens, h_obs, interactions, temperature, tau_corr, rho_obs_0)
    }

    /// Builds the model with an explicit initial observer state.
    pub fn with_observer_state(
        h_sens: ComplexMatrix,
        h_obs: ComplexMatrix,
        interactions: Vec<InteractionTerm>,
        temperature: f64,
        tau_corr: f64,
        rho_obs_0: DensityMatrix,
    ) -> Result<Self> {
        linalg::ensure_hermitian(&h_sens)?;
        linalg::ensure_hermitian(&h_obs)?;
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
        }
        if !(tau_corr > 0.0 && tau_corr.is_finite()) {
            return Err(Error::invalid(format!("correlation time must be positive, got {tau_corr}")));
        }
        let (ds, dobs) = (h_sens.nrows(), h_obs.nrows());
        if rho_obs_0.dim() != dobs {
            return Err(Error::DimensionMismatch { expected: dobs, found: rho_obs_0.dim() });
        }
        for (j, term) in interactions.iter().enumerate() {
            if term.system.shape() != (ds, ds) {
                return Err(Error::invalid(format!("interaction {j}: system operator must be {ds}x{ds}")));
            }
            if term.observer.shape() != (dobs, dobs) {
                return Err(Error::invalid(format!("interaction {j}: observer operator must be {dobs}x{dobs}")));
            }
        }
        check_conjugate_pairs(&interactions)?;
        warn_if_strong(&h_sens, &h_obs, &interactions);
        let bath = BathSpectrum::new(&h_obs, &rho_obs_0, &interactions, tau_corr)?;
        Ok(Self { h_sens, h_obs, interactions, temperature, tau_corr, rho_obs_0, bath })
    }

    pub fn h_sens(&self) -> &ComplexMatrix {
        &self.h_sens
    }

    pub fn h_obs(&self) -> &ComplexMatrix {
        &self.h_obs
    }

    pub fn interactions(&self) -> &[InteractionTerm] {
        &self.interactions
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn tau_corr(&self) -> f64 {
        self.tau_corr
    }

    pub fn rho_obs_0(&self) -> &DensityMatrix {
        &self.rho_obs_0
    }

    pub fn bath(&self) -> &BathSpectrum {
        &self.bath
    }

    pub fn sensory_dim(&self) -> usize {
        self.h_sens.nrows()
    }
}

const PAIR_TOL: f64 = 1e-10;

fn check_conjugate_pairs(terms: &[InteractionTerm]) -> Result<()> {
    for (j, term) in terms.iter().enumerate() {
        let conj = term.conjugate();
        if !terms.iter().any(|other| other.product_close(&conj, PAIR_TOL)) {
            return Err(Error::invalid(format!(
                "interaction {j} has no Hermitian-conjugate partner; the interaction Hamiltonian would not be Hermitian"
            )));
        }
    }
    Ok(())
}

/// Logs a warning when the interaction exceeds a tenth of the free
/// Hamiltonian (Frobenius norms).
fn warn_if_strong(h_sens: &ComplexMatrix, h_obs: &ComplexMatrix, terms: &[InteractionTerm]) {
    let (ds, dobs) = (h_sens.nrows() as f64, h_obs.nrows() as f64);
    let free = (linalg::frobenius_norm(h_sens).powi(2) * dobs + linalg::frobenius_norm(h_obs).powi(2) * ds).sqrt();
    let int: f64 = terms
        .iter()
        .map(|t| t.g.norm() * linalg::frobenius_norm(&t.system) * linalg::frobenius_norm(&t.observer))
        .sum();
    if int > 0.1 * free {
        log::warn!("interaction norm {int:.3e} exceeds 10% of the free Hamiltonian norm {free:.3e}; weak-coupling assumption is doubtful");
    }
}

/// Waiting time before classification, exponential with the given mean.
pub fn sample_duration<R: Rng + ?Sized>(lambda_mean: f64, rng: &mut R) -> Result<f64> {
    if !(lambda_mean > 0.0 && lambda_mean.is_finite()) {
        return Err(Error::invalid(format!("mean duration must be positive, got {lambda_mean}")));
    }
    let exp = Exp::new(1.0 / lambda_mean).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(exp.sample(rng))
}
