//! Dense complex linear algebra used by every other module.
//!
//! Tensor factors follow a single ordering convention throughout the crate:
//! the leftmost factor is the slowest-varying (most significant) digit of a
//! basis index.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;
pub type ComplexVector = DVector<C64>;

/// Max-entry tolerance on `A - A^dagger`.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalues in `[-PSD_TOL, 0)` are treated as zero.
pub const PSD_TOL: f64 = 1e-9;
/// Tolerance on POVM closure and unit trace.
pub const CLOSURE_TOL: f64 = 1e-9;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Ordered per-subsystem dimensions of a tensor-product space.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SubsystemDims(Vec<usize>);

impl SubsystemDims {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::invalid("subsystem list is empty"));
        }
        if let Some(d) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::invalid(format!("subsystem dimension {d} is below 2")));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::invalid("total dimension overflows usize"))?;
        Ok(Self(dims))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> usize {
        self.0.iter().product()
    }

    /// Row-major strides: the last subsystem has stride 1.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.0.len()];
        for i in (0..self.0.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.0[i + 1];
        }
        strides
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self(perm.iter().map(|&p| self.0[p]).collect())
    }
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

pub fn ensure_square(a: &ComplexMatrix) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    Ok(a.nrows())
}

pub fn trace(a: &ComplexMatrix) -> C64 {
    a.diagonal().iter().sum()
}

/// `Tr(a b)` without forming the product.
pub fn trace_of_product(a: &ComplexMatrix, b: &ComplexMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn frobenius_norm(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermiticity_deviation(a: &ComplexMatrix) -> f64 {
    let n = a.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    dev
}

pub fn ensure_hermitian(a: &ComplexMatrix) -> Result<()> {
    ensure_square(a)?;
    let deviation = hermiticity_deviation(a);
    if deviation > HERMITIAN_TOL || !deviation.is_finite() {
        return Err(Error::NotHermitian { deviation, tol: HERMITIAN_TOL });
    }
    Ok(())
}

pub fn hermitian_part(a: &ComplexMatrix) -> ComplexMatrix {
    (a + a.adjoint()).scale(0.5)
}

pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a * b - b * a
}

/// `|v><v|`.
pub fn outer(v: &ComplexVector) -> ComplexMatrix {
    v * v.adjoint()
}

/// `|i><j|` in dimension `n`.
pub fn ket_bra(n: usize, i: usize, j: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(n, n);
    m[(i, j)] = ONE;
    m
}

pub fn diag_real(values: &[f64]) -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&ComplexVector::from_iterator(
        values.len(),
        values.iter().map(|&x| C64::new(x, 0.0)),
    ))
}

/// Kronecker product `a ⊗ b` of square matrices.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    ensure_square(a)?;
    ensure_square(b)?;
    Ok(a.kronecker(b))
}

/// Kronecker sum `Σ_n I ⊗ … ⊗ term_n ⊗ … ⊗ I`.
pub fn kron_sum(terms: &[ComplexMatrix]) -> Result<ComplexMatrix> {
    if terms.is_empty() {
        return Err(Error::invalid("Kronecker sum of an empty list is undefined"));
    }
    let dims = terms.iter().map(ensure_square).collect::<Result<Vec<_>>>()?;
    let total: usize = dims.iter().product();
    let mut out = ComplexMatrix::zeros(total, total);
    for (n, term) in terms.iter().enumerate() {
        let left: usize = dims[..n].iter().product();
        let right: usize = dims[n + 1..].iter().product();
        let block = identity(left).kronecker(term).kronecker(&identity(right));
        out += block;
    }
    Ok(out)
}

/// Reduced operator on the subsystems listed in `keep` (kept in their
/// original relative order).
pub fn partial_trace(rho: &ComplexMatrix, dims: &SubsystemDims, keep: &[usize]) -> Result<ComplexMatrix> {
    let n = ensure_square(rho)?;
    if n != dims.total() {
        return Err(Error::DimensionMismatch { expected: dims.total(), found: n });
    }
    let count = dims.len();
    let mut kept = keep.to_vec();
    kept.sort_unstable();
    for w in kept.windows(2) {
        if w[0] == w[1] {
            return Err(Error::invalid(format!("subsystem {} listed twice", w[0])));
        }
    }
    if let Some(&bad) = kept.iter().find(|&&k| k >= count) {
        return Err(Error::SubsystemOutOfRange { index: bad, count });
    }
    let traced: Vec<usize> = (0..count).filter(|i| !kept.contains(i)).collect();
    let d = dims.as_slice();
    let strides = dims.strides();
    let kept_dim: usize = kept.iter().map(|&i| d[i]).product();
    let traced_dim: usize = traced.iter().map(|&i| d[i]).product();

    // full index of (kept digit a, traced digit t)
    let offsets = |subs: &[usize], mut flat: usize| -> usize {
        let mut idx = 0;
        for &s in subs.iter().rev() {
            idx += (flat % d[s]) * strides[s];
            flat /= d[s];
        }
        idx
    };
    let kept_off: Vec<usize> = (0..kept_dim).map(|a| offsets(&kept, a)).collect();
    let traced_off: Vec<usize> = (0..traced_dim).map(|t| offsets(&traced, t)).collect();

    let mut out = ComplexMatrix::zeros(kept_dim, kept_dim);
    for a in 0..kept_dim {
        for b in 0..kept_dim {
            let mut acc = ZERO;
            for &t in &traced_off {
                acc += rho[(kept_off[a] + t, kept_off[b] + t)];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(out)
}

/// Map from new basis index to old basis index when subsystem `perm[i]`
/// is moved to position `i`.
pub(crate) fn permutation_index_map(dims: &SubsystemDims, perm: &[usize]) -> Result<Vec<usize>> {
    let count = dims.len();
    let mut seen = vec![false; count];
    if perm.len() != count || perm.iter().any(|&p| p >= count || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::InvalidPermutation { perm: perm.to_vec(), count });
    }
    let old_strides = dims.strides();
    let new_dims = dims.permuted(perm);
    let nd = new_dims.as_slice();
    let total = dims.total();
    let mut map = Vec::with_capacity(total);
    for new_index in 0..total {
        let mut rem = new_index;
        let mut old = 0;
        for pos in (0..count).rev() {
            let digit = rem % nd[pos];
            rem /= nd[pos];
            old += digit * old_strides[perm[pos]];
        }
        map.push(old);
    }
    Ok(map)
}

/// `R rho R^dagger` where `R` moves subsystem `perm[i]` to position `i`.
pub fn reorder_subsystems(rho: &ComplexMatrix, dims: &SubsystemDims, perm: &[usize]) -> Result<ComplexMatrix> {
    let n = ensure_square(rho)?;
    if n != dims.total() {
        return Err(Error::DimensionMismatch { expected: dims.total(), found: n });
    }
    let map = permutation_index_map(dims, perm)?;
    Ok(ComplexMatrix::from_fn(n, n, |i, j| rho[(map[i], map[j])]))
}

/// Same reordering applied to a state vector.
pub fn reorder_vector(v: &ComplexVector, dims: &SubsystemDims, perm: &[usize]) -> Result<ComplexVector> {
    if v.len() != dims.total() {
        return Err(Error::DimensionMismatch { expected: dims.total(), found: v.len() });
    }
    let map = permutation_index_map(dims, perm)?;
    Ok(ComplexVector::from_fn(v.len(), |i, _| v[map[i]]))
}

pub fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Spectral decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Columns are the normalized eigenvectors.
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    /// `V f(Λ) V^dagger`.
    pub fn map(&self, f: impl Fn(f64) -> C64) -> ComplexMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &lam) in self.values.iter().enumerate() {
            let s = f(lam);
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        scaled * self.vectors.adjoint()
    }

    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

pub fn herm_eig(a: &ComplexMatrix) -> Result<HermitianEigen> {
    ensure_hermitian(a)?;
    let eig = hermitian_part(a).symmetric_eigen();
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(HermitianEigen { values, vectors })
}

/// Eigenvalues only, ascending.
pub fn herm_eigenvalues(a: &ComplexMatrix) -> Result<Vec<f64>> {
    ensure_hermitian(a)?;
    let mut values: Vec<f64> = hermitian_part(a).symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// General matrix exponential (scaling and squaring with a Padé approximant).
pub fn matrix_exp(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    ensure_square(a)?;
    Ok(a.exp())
}

/// `exp(i·scale·h)` for Hermitian `h`, computed spectrally so the result is
/// unitary to rounding.
pub fn unitary_exp(h: &ComplexMatrix, scale: f64) -> Result<ComplexMatrix> {
    let eig = herm_eig(h)?;
    Ok(eig.map(|lam| C64::from_polar(1.0, scale * lam)))
}

/// Hermitian square root of a PSD matrix; eigenvalues in `[-PSD_TOL, 0)`
/// and roundoff-level positive eigenvalues are clamped to zero.
pub fn psd_sqrt(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if is_diagonal(a) {
        let n = ensure_square(a)?;
        let mut out = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            let z = a[(i, i)];
            if z.im.abs() > HERMITIAN_TOL {
                return Err(Error::NotHermitian { deviation: z.im.abs(), tol: HERMITIAN_TOL });
            }
            if z.re < -PSD_TOL {
                return Err(Error::NotPsd { min_eigenvalue: z.re, tol: PSD_TOL });
            }
            out[(i, i)] = C64::new(z.re.max(0.0).sqrt(), 0.0);
        }
        return Ok(out);
    }
    let eig = herm_eig(a)?;
    if eig.min() < -PSD_TOL {
        return Err(Error::NotPsd { min_eigenvalue: eig.min(), tol: PSD_TOL });
    }
    let floor = eig.max().abs() * f64::EPSILON * a.nrows() as f64;
    Ok(hermitian_part(&eig.map(|lam| C64::new(if lam > floor { lam.sqrt() } else { 0.0 }, 0.0))))
}

/// True when every off-diagonal entry is exactly zero.
pub fn is_diagonal(a: &ComplexMatrix) -> bool {
    a.nrows() == a.ncols()
        && (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| i == j || a[(i, j)] == ZERO))
}

/// Errors unless `a` is Hermitian with no eigenvalue below `-PSD_TOL`.
pub fn ensure_psd(a: &ComplexMatrix) -> Result<f64> {
    let min = herm_eigenvalues(a)?.first().copied().unwrap_or(0.0);
    if min < -PSD_TOL {
        return Err(Error::NotPsd { min_eigenvalue: min, tol: PSD_TOL });
    }
    Ok(min)
}

pub fn is_finite(a: &ComplexMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}
