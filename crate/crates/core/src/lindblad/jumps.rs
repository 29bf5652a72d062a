use super::eigen::{component_at, eigenoperators, merge_frequencies, EigenOperator};
use super::LindbladModel;
use crate::error::{Error, Result};
use crate::linalg::{self, herm_eig, ComplexMatrix, C64, PSD_TOL};

/// Norm below which a jump operator is dropped.
const ZERO_JUMP: f64 = 1e-14;

/// `L = √γ′ Σ_k conj(V_ki) |g_k| S_k(ω)`; `op` already includes `√rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpOperator {
    pub frequency: f64,
    pub rate: f64,
    pub op: ComplexMatrix,
}

/// Jump operators of the model, grouped by increasing frequency.
pub fn jump_operators(model: &LindbladModel) -> Result<Vec<JumpOperator>> {
    let mut active: Vec<usize> = Vec::new();
    let mut decompositions: Vec<Vec<EigenOperator>> = Vec::new();
    for (k, term) in model.interactions().iter().enumerate() {
        if term.g.norm() == 0.0 {
            continue;
        }
        let mut ops = eigenoperators(model.h_sens(), &term.system)?;
        for op in &mut ops {
            op.source_index = k;
        }
        active.push(k);
        decompositions.push(ops);
    }
    let freqs = merge_frequencies(decompositions.iter().flatten().map(|e| e.frequency).collect());

    let mut out = Vec::new();
    for omega in freqs {
        let mut terms = Vec::new();
        let mut comps = Vec::new();
        for (&k, ops) in active.iter().zip(&decompositions) {
            if let Some(c) = component_at(ops, omega) {
                terms.push(k);
                comps.push(c.scale(model.interactions()[k].g.norm()));
            }
        }
        let gamma = model.bath().gamma_for(omega, &terms);
        let eig = herm_eig(&linalg::hermitian_part(&gamma))?;
        for (i, &rate) in eig.values.iter().enumerate() {
            if rate < -PSD_TOL {
                return Err(Error::NotPsd { min_eigenvalue: rate, tol: PSD_TOL });
            }
            if rate <= 0.0 {
                continue;
            }
            let mut l = ComplexMatrix::zeros(model.sensory_dim(), model.sensory_dim());
            for (k, c) in comps.iter().enumerate() {
                let coef = eig.vectors[(k, i)].conj() * rate.sqrt();
                if coef != C64::new(0.0, 0.0) {
                    l += c.map(|z| z * coef);
                }
            }
            if linalg::frobenius_norm(&l) > ZERO_JUMP {
                out.push(JumpOperator { frequency: omega, rate, op: l });
            }
        }
    }
    Ok(out)
}
