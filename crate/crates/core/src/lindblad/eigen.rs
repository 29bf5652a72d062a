use crate::error::Result;
use crate::linalg::{self, herm_eig, ComplexMatrix};

/// Bohr frequencies closer than this are merged.
pub const FREQUENCY_TOL: f64 = 1e-9;
/// Matrix elements below this magnitude are dropped.
const ELEMENT_TOL: f64 = 1e-12;

/// Component of a system operator oscillating at one Bohr frequency.
///
/// `op` is normalized (unit Frobenius norm); the component itself is
/// `weight · op` and satisfies `[H, A(ω)] = -ω A(ω)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenOperator {
    pub frequency: f64,
    pub weight: f64,
    pub op: ComplexMatrix,
    pub source_index: usize,
}

impl EigenOperator {
    pub fn component(&self) -> ComplexMatrix {
        self.op.scale(self.weight)
    }
}

/// Splits `s` into eigenoperators of `[h, ·]`, sorted by frequency.
///
/// For eigenpairs `(E_α, φ_α)` the component at `ω = E_α − E_β` collects
/// `|φ_β⟩⟨φ_β|s|φ_α⟩⟨φ_α|`, so that it lowers the energy by `ω`.
pub fn eigenoperators(h: &ComplexMatrix, s: &ComplexMatrix) -> Result<Vec<EigenOperator>> {
    let eig = herm_eig(h)?;
    let n = h.nrows();
    if s.shape() != (n, n) {
        return Err(crate::error::Error::DimensionMismatch { expected: n, found: s.nrows() });
    }
    let v = &eig.vectors;
    let s_eig = v.adjoint() * s * v;

    // (ω, β, α) for every retained element s̃[β, α]
    let mut entries: Vec<(f64, usize, usize)> = Vec::new();
    for beta in 0..n {
        for alpha in 0..n {
            if s_eig[(beta, alpha)].norm() > ELEMENT_TOL {
                entries.push((eig.values[alpha] - eig.values[beta], beta, alpha));
            }
        }
    }
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut out = Vec::new();
    let mut start = 0;
    while start < entries.len() {
        let mut end = start + 1;
        while end < entries.len() && entries[end].0 - entries[end - 1].0 <= FREQUENCY_TOL {
            end += 1;
        }
        let group = &entries[start..end];
        let frequency = group.iter().map(|e| e.0).sum::<f64>() / group.len() as f64;
        let mut block = ComplexMatrix::zeros(n, n);
        for &(_, beta, alpha) in group {
            block[(beta, alpha)] = s_eig[(beta, alpha)];
        }
        let component = v * block * v.adjoint();
        let weight = linalg::frobenius_norm(&component);
        out.push(EigenOperator {
            frequency,
            weight,
            op: component.unscale(weight),
            source_index: 0,
        });
        start = end;
    }
    Ok(out)
}

/// Collects distinct frequencies (merged within [`FREQUENCY_TOL`]).
pub(crate) fn merge_frequencies(mut freqs: Vec<f64>) -> Vec<f64> {
    freqs.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::new();
    for f in freqs {
        match out.last() {
            Some(&last) if f - last <= FREQUENCY_TOL => {}
            _ => out.push(f),
        }
    }
    out
}

/// Component of `ops` at `frequency`, or `None` if absent.
pub(crate) fn component_at(ops: &[EigenOperator], frequency: f64) -> Option<ComplexMatrix> {
    ops.iter()
        .find(|e| (e.frequency - frequency).abs() <= FREQUENCY_TOL)
        .map(EigenOperator::component)
}
