use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, diag_real, herm_eig, kron, outer, trace, ComplexMatrix, ComplexVector, SubsystemDims, C64, CLOSURE_TOL,
};

use super::layout::HilbertLayout;

/// A validated density matrix together with its tensor-factor structure.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
    dims: SubsystemDims,
}

impl DensityMatrix {
    /// Checks Hermiticity, unit trace and positivity.
    pub fn new(matrix: ComplexMatrix, dims: SubsystemDims) -> Result<Self> {
        let n = linalg::ensure_square(&matrix)?;
        if n != dims.total() {
            return Err(Error::DimensionMismatch { expected: dims.total(), found: n });
        }
        if !linalg::is_finite(&matrix) {
            return Err(Error::invalid("density matrix has non-finite entries"));
        }
        linalg::ensure_hermitian(&matrix)?;
        let tr = trace(&matrix).re;
        if (tr - 1.0).abs() > CLOSURE_TOL {
            return Err(Error::TraceNotUnit { trace: tr, tol: CLOSURE_TOL });
        }
        linalg::ensure_psd(&matrix)?;
        Ok(Self { matrix, dims })
    }

    /// Skips the spectral positivity check; the caller guarantees a valid
    /// state (e.g. the output of a CPTP map on a valid state).
    pub(crate) fn trusted(matrix: ComplexMatrix, dims: SubsystemDims) -> Self {
        debug_assert_eq!(matrix.nrows(), dims.total());
        Self { matrix, dims }
    }

    /// Single-factor state of dimension `n`.
    pub fn from_matrix(matrix: ComplexMatrix) -> Result<Self> {
        let n = linalg::ensure_square(&matrix)?;
        Self::new(matrix, SubsystemDims::new(vec![n])?)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn dims(&self) -> &SubsystemDims {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn with_dims(self, dims: SubsystemDims) -> Result<Self> {
        if dims.total() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: dims.total() });
        }
        Ok(Self { matrix: self.matrix, dims })
    }

    pub fn trace(&self) -> f64 {
        trace(&self.matrix).re
    }

    /// `Tr(ρ²)`.
    pub fn purity(&self) -> f64 {
        linalg::trace_of_product(&self.matrix, &self.matrix).re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::herm_eigenvalues(&self.matrix).map(|v| v[0]).unwrap_or(f64::NAN)
    }

    /// Reduced state on the listed subsystems.
    pub fn reduce(&self, keep: &[usize]) -> Result<Self> {
        let m = linalg::partial_trace(&self.matrix, &self.dims, keep)?;
        let mut kept = keep.to_vec();
        kept.sort_unstable();
        let dims = SubsystemDims::new(kept.iter().map(|&k| self.dims.as_slice()[k]).collect())?;
        Ok(Self::trusted(m, dims))
    }

    pub fn tensor(&self, other: &Self) -> Self {
        let dims = [self.dims.as_slice(), other.dims.as_slice()].concat();
        Self::trusted(self.matrix.kronecker(&other.matrix), SubsystemDims::new(dims).expect("valid factors"))
    }
}

/// Normalized `|ψ⟩⟨ψ|`.
pub fn pure_state(amplitudes: &ComplexVector, dims: SubsystemDims) -> Result<DensityMatrix> {
    if amplitudes.len() != dims.total() {
        return Err(Error::DimensionMismatch { expected: dims.total(), found: amplitudes.len() });
    }
    let norm = amplitudes.norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::invalid("state vector has zero or non-finite norm"));
    }
    let psi = amplitudes / C64::new(norm, 0.0);
    Ok(DensityMatrix::trusted(outer(&psi), dims))
}

/// Kronecker product of per-oscillator amplitude vectors (layout order).
pub fn product_amplitudes(parts: &[ComplexVector]) -> Result<ComplexVector> {
    if parts.is_empty() {
        return Err(Error::invalid("no amplitude vectors given"));
    }
    let mut out = ComplexVector::from_element(1, C64::new(1.0, 0.0));
    for p in parts {
        out = out.kronecker(p);
    }
    Ok(out)
}

/// Kronecker sum of truncated oscillators `ω (n + ½)`, `n = 0..levels`.
pub fn oscillator_hamiltonian(frequencies: &[f64], levels: &[usize]) -> Result<ComplexMatrix> {
    if frequencies.len() != levels.len() {
        return Err(Error::DimensionMismatch { expected: frequencies.len(), found: levels.len() });
    }
    let terms = frequencies
        .iter()
        .zip(levels)
        .map(|(&w, &n)| {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::invalid(format!("oscillator frequency {w} must be positive")));
            }
            if n < 2 {
                return Err(Error::invalid(format!("oscillator needs at least 2 levels, got {n}")));
            }
            let diag: Vec<f64> = (0..n).map(|m| w * (m as f64 + 0.5)).collect();
            Ok(diag_real(&diag))
        })
        .collect::<Result<Vec<_>>>()?;
    linalg::kron_sum(&terms)
}

/// Sign of the exponent in the equilibrium observer state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GibbsSign {
    /// `exp(-H/T)`: populations fall with energy.
    #[default]
    Minus,
    /// `exp(+H/T)`: populations rise with energy.
    Paper,
}

/// Gibbs state of `h` at temperature `temperature` (k_B = 1).
pub fn thermal_state(h: &ComplexMatrix, temperature: f64, sign: GibbsSign) -> Result<DensityMatrix> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
    }
    let eig = herm_eig(h)?;
    let s = match sign {
        GibbsSign::Minus => -1.0,
        GibbsSign::Paper => 1.0,
    };
    // shift by the dominant energy so the largest weight is exactly 1
    let reference = match sign {
        GibbsSign::Minus => eig.min(),
        GibbsSign::Paper => eig.max(),
    };
    let weights: Vec<f64> = eig.values.iter().map(|&e| (s * (e - reference) / temperature).exp()).collect();
    let z: f64 = weights.iter().sum();
    let mut rho = ComplexMatrix::zeros(h.nrows(), h.nrows());
    for (j, w) in weights.iter().enumerate() {
        let v = eig.vectors.column(j);
        rho += (&v * v.adjoint()).scale(w / z);
    }
    let rho = linalg::hermitian_part(&rho);
    Ok(DensityMatrix::trusted(rho, SubsystemDims::new(vec![h.nrows()])?))
}

/// Tensor product of per-oscillator states, checked against the sensory
/// oscillator dimensions of `layout`.
pub fn compose_sensory(per_oscillator: &[DensityMatrix], layout: &HilbertLayout) -> Result<DensityMatrix> {
    let osc = layout.sensory_oscillators();
    if per_oscillator.len() != osc.len() {
        return Err(Error::DimensionMismatch { expected: osc.len(), found: per_oscillator.len() });
    }
    for (state, o) in per_oscillator.iter().zip(osc) {
        if state.dim() != o.dim {
            return Err(Error::invalid(format!(
                "state for oscillator {} has dimension {}, layout expects {}",
                o.label(),
                state.dim(),
                o.dim
            )));
        }
        let tr = state.trace();
        if (tr - 1.0).abs() > CLOSURE_TOL {
            return Err(Error::TraceNotUnit { trace: tr, tol: CLOSURE_TOL });
        }
    }
    let mut out = per_oscillator[0].matrix().clone();
    for s in &per_oscillator[1..] {
        out = kron(&out, s.matrix())?;
    }
    Ok(DensityMatrix::trusted(out, layout.sensory_dims()))
}
