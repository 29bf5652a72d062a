use std::f64::consts::PI;

use super::{InteractionTerm, LindbladModel};
use crate::encoding::DensityMatrix;
use crate::error::Result;
use crate::linalg::{herm_eig, ComplexMatrix, C64};

/// Unit-area Lorentzian with full width at half maximum `fwhm`.
pub fn lorentzian(x: f64, fwhm: f64) -> f64 {
    let half = 0.5 * fwhm;
    half / (PI * (x * x + half * half))
}

/// Precomputed bath data for evaluating `γ_kl(ω)`.
///
/// Observer operators carry the phase of their coupling, so that
/// `g_k O_k = |g_k| Õ_k`. The observer state is dephased in the `H_obs`
/// eigenbasis.
#[derive(Debug, Clone)]
pub struct BathSpectrum {
    energies: Vec<f64>,
    populations: Vec<f64>,
    ops: Vec<ComplexMatrix>,
    fwhm: f64,
}

impl BathSpectrum {
    pub fn new(
        h_obs: &ComplexMatrix,
        rho_obs: &DensityMatrix,
        interactions: &[InteractionTerm],
        tau_corr: f64,
    ) -> Result<Self> {
        let eig = herm_eig(h_obs)?;
        let v = &eig.vectors;
        let rho_eig = v.adjoint() * rho_obs.matrix() * v;
        let populations = (0..rho_eig.nrows()).map(|i| rho_eig[(i, i)].re.max(0.0)).collect();
        let ops = interactions
            .iter()
            .map(|term| {
                let phase = if term.g.norm() > 0.0 { term.g / term.g.norm() } else { C64::new(1.0, 0.0) };
                (v.adjoint() * &term.observer * v).map(|z| z * phase)
            })
            .collect();
        Ok(Self { energies: eig.values, populations, ops, fwhm: 1.0 / tau_corr })
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// `γ_kl(ω) = 2π Σ_ab conj(Õ_k)_ba (Õ_l)_ba p_a L(ω − (E_b − E_a))`.
    pub fn gamma(&self, omega: f64) -> ComplexMatrix {
        self.gamma_for(omega, &(0..self.ops.len()).collect::<Vec<_>>())
    }

    /// Spectrum restricted to the listed terms.
    pub(crate) fn gamma_for(&self, omega: f64, terms: &[usize]) -> ComplexMatrix {
        let n = self.energies.len();
        let mut weights = Vec::with_capacity(n * n);
        for b in 0..n {
            for a in 0..n {
                let p = self.populations[a];
                let w = if p > 0.0 { 2.0 * PI * p * lorentzian(omega - (self.energies[b] - self.energies[a]), self.fwhm) } else { 0.0 };
                weights.push(w);
            }
        }
        let k = terms.len();
        let mut out = ComplexMatrix::zeros(k, k);
        for (i, &ti) in terms.iter().enumerate() {
            for (j, &tj) in terms.iter().enumerate().skip(i) {
                let (ok, ol) = (&self.ops[ti], &self.ops[tj]);
                let mut acc = C64::new(0.0, 0.0);
                for b in 0..n {
                    for a in 0..n {
                        let w = weights[b * n + a];
                        if w != 0.0 {
                            acc += ok[(b, a)].conj() * ol[(b, a)] * w;
                        }
                    }
                }
                out[(i, j)] = acc;
                out[(j, i)] = acc.conj();
            }
        }
        out
    }
}

/// Cross spectral density of the observer bath at `omega`.
pub fn bath_spectrum(model: &LindbladModel, omega: f64) -> ComplexMatrix {
    model.bath().gamma(omega)
}
