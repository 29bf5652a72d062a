//! Brute-force reference implementations for cross-checking.
//!
//! Density matrices are vectorized column by column:
//! `vec(ρ)[i + j·d] = ρ_ij`, so `vec(AρB) = (Bᵀ ⊗ A) vec(ρ)`.

use std::f64::consts::PI;

use rand::Rng;

use crate::encoding::{DensityMatrix, GibbsSign};
use crate::error::{Error, Result};
use crate::lindblad::{InteractionTerm, LindbladModel};
use crate::linalg::{self, herm_eig, ComplexMatrix, ComplexVector, C64};

/// Largest system dimension accepted by the superoperator paths.
pub const MAX_ORACLE_DIM: usize = 16;
const GAP_TOL: f64 = 1e-9;

/// Liouvillian matrix acting on column-vectorized density matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    pub matrix: ComplexMatrix,
    pub dim: usize,
}

pub fn vectorize(rho: &ComplexMatrix) -> ComplexVector {
    ComplexVector::from_column_slice(rho.as_slice())
}

pub fn unvectorize(v: &ComplexVector, dim: usize) -> ComplexMatrix {
    ComplexMatrix::from_column_slice(dim, dim, v.as_slice())
}

/// Spectral projectors of `h` grouped by (nearly) equal eigenvalues.
fn spectral_projectors(h: &ComplexMatrix) -> Result<Vec<(f64, ComplexMatrix)>> {
    let eig = herm_eig(h)?;
    let n = h.nrows();
    let mut out: Vec<(f64, ComplexMatrix)> = Vec::new();
    for i in 0..n {
        let v = eig.vectors.column(i).into_owned();
        let p = &v * v.adjoint();
        match out.last_mut() {
            Some((e, proj)) if (eig.values[i] - *e).abs() <= GAP_TOL => *proj += p,
            _ => out.push((eig.values[i], p)),
        }
    }
    Ok(out)
}

/// Bath correlation spectrum from the full (non-dephased) observer state.
fn reference_spectrum(model: &LindbladModel, omega: f64) -> Result<ComplexMatrix> {
    let eig = herm_eig(model.h_obs())?;
    let v = &eig.vectors;
    let rho = v.adjoint() * model.rho_obs_0().matrix() * v;
    let half = 0.5 / model.tau_corr();
    let terms = model.interactions();
    let ops: Vec<ComplexMatrix> = terms
        .iter()
        .map(|t| {
            let phase = if t.g.norm() > 0.0 { t.g / t.g.norm() } else { C64::new(1.0, 0.0) };
            (v.adjoint() * &t.observer * v).map(|z| z * phase)
        })
        .collect();
    let n = eig.values.len();
    let mut gamma = ComplexMatrix::zeros(terms.len(), terms.len());
    for k in 0..terms.len() {
        let ok_dag = ops[k].adjoint();
        for l in 0..terms.len() {
            let ol_rho = &ops[l] * &rho;
            let mut acc = C64::new(0.0, 0.0);
            for a in 0..n {
                for b in 0..n {
                    let x = omega - (eig.values[b] - eig.values[a]);
                    acc += ok_dag[(a, b)] * ol_rho[(b, a)] * (2.0 * PI * half / (PI * (x * x + half * half)));
                }
            }
            gamma[(k, l)] = acc;
        }
    }
    Ok(gamma)
}

/// GKSL generator with the cross-rate (non-diagonalized) dissipator
/// `Σ_ω Σ_kl γ_kl(ω) (A_l ρ A_k† − ½{A_k† A_l, ρ})`, `A_k = |g_k| S_k(ω)`.
pub fn liouvillian_matrix(model: &LindbladModel) -> Result<Superoperator> {
    let d = model.sensory_dim();
    if d > MAX_ORACLE_DIM {
        return Err(Error::TooLarge(d));
    }
    let h = model.h_sens();
    let id = linalg::identity(d);
    let minus_i = C64::new(0.0, -1.0);
    let mut l = (linalg::kron(&id, h)? - linalg::kron(&h.transpose(), &id)?).map(|z| z * minus_i);

    let projectors = spectral_projectors(h)?;
    let mut freqs: Vec<f64> = Vec::new();
    for (e1, _) in &projectors {
        for (e2, _) in &projectors {
            let w = e2 - e1;
            if !freqs.iter().any(|f| (f - w).abs() <= GAP_TOL) {
                freqs.push(w);
            }
        }
    }
    let terms: Vec<(usize, &InteractionTerm)> =
        model.interactions().iter().enumerate().filter(|(_, t)| t.g.norm() > 0.0).collect();
    for &omega in &freqs {
        // A_k(ω) = Σ_{E'−E=ω} P_E S_k P_E'
        let comps: Vec<ComplexMatrix> = terms
            .iter()
            .map(|(_, t)| {
                let mut a = ComplexMatrix::zeros(d, d);
                for (e1, p1) in &projectors {
                    for (e2, p2) in &projectors {
                        if ((e2 - e1) - omega).abs() <= GAP_TOL {
                            a += p1 * &t.system * p2;
                        }
                    }
                }
                a.scale(t.g.norm())
            })
            .collect();
        if comps.iter().all(|a| linalg::max_abs(a) < 1e-14) {
            continue;
        }
        let full = reference_spectrum(model, omega)?;
        for (ki, &(k, _)) in terms.iter().enumerate() {
            for (li, &(lidx, _)) in terms.iter().enumerate() {
                let g = full[(k, lidx)];
                if g.norm() == 0.0 {
                    continue;
                }
                let (ak, al) = (&comps[ki], &comps[li]);
                let akd_al = ak.adjoint() * al;
                let term = linalg::kron(&ak.map(|z| z.conj()), al)?
                    - linalg::kron(&id, &akd_al)?.scale(0.5)
                    - linalg::kron(&akd_al.transpose(), &id)?.scale(0.5);
                l += term.map(|z| z * g);
            }
        }
    }
    Ok(Superoperator { matrix: l, dim: d })
}

/// `unvec(exp(ℒt) vec(ρ))`.
pub fn evolve_exact(rho: &DensityMatrix, model: &LindbladModel, t: f64) -> Result<DensityMatrix> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("evolution time must be nonnegative, got {t}")));
    }
    let sup = liouvillian_matrix(model)?;
    if rho.dim() != sup.dim {
        return Err(Error::DimensionMismatch { expected: sup.dim, found: rho.dim() });
    }
    let prop = linalg::matrix_exp(&sup.matrix.scale(t))?;
    let out = unvectorize(&(prop * vectorize(rho.matrix())), sup.dim);
    DensityMatrix::new(linalg::hermitian_part(&out), rho.dims().clone())
}

/// Eigenvalues of a general complex matrix via the Schur form.
pub fn general_eigenvalues(m: &ComplexMatrix) -> Result<Vec<C64>> {
    let schur = nalgebra::Schur::new(m.clone());
    let values = schur.eigenvalues().ok_or_else(|| Error::invalid("Schur decomposition did not converge"))?;
    Ok(values.iter().copied().collect())
}

/// `[[Re A, −Im A], [Im A, Re A]]`, positive definite iff `A` is.
fn real_embedding(a: &ComplexMatrix) -> nalgebra::DMatrix<f64> {
    let n = a.nrows();
    nalgebra::DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let z = a[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Grid minimizer of `[Tr(I − δm) − δβ₀]²` over `(0, d]` subject to
/// `I − δm ⪰ −1e-9`.
pub fn delta_scan(m: &ComplexMatrix, beta_0: f64, grid_step: f64) -> Result<f64> {
    if !(grid_step > 0.0 && grid_step <= 1e-3) {
        return Err(Error::invalid(format!("grid step must lie in (0, 1e-3], got {grid_step}")));
    }
    let d = m.nrows();
    let id = linalg::identity(d);
    let tr_m = linalg::trace(m).re;
    let steps = (d as f64 / grid_step).floor() as usize;
    let mut best: Option<(f64, f64)> = None;
    for k in 1..=steps + 1 {
        let delta = if k > steps { d as f64 } else { k as f64 * grid_step };
        let shifted = &id - m.scale(delta) + id.scale(1e-9);
        if nalgebra::Cholesky::new(real_embedding(&shifted)).is_none() {
            continue;
        }
        let o = (d as f64 - delta * tr_m - delta * beta_0).powi(2);
        if best.is_none_or(|(_, b)| o < b) {
            best = Some((delta, o));
        }
    }
    best.map(|(d, _)| d).ok_or_else(|| Error::invalid("no feasible delta on the grid"))
}

fn random_hermitian<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> ComplexMatrix {
    let a = ComplexMatrix::from_fn(n, n, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    linalg::hermitian_part(&a).scale(scale)
}

/// Random valid model with one coupling term and its conjugate partner.
pub fn random_model<R: Rng + ?Sized>(sensory_dim: usize, observer_dim: usize, rng: &mut R) -> Result<LindbladModel> {
    let h_sens = random_hermitian(sensory_dim, 2.0, rng);
    let h_obs = random_hermitian(observer_dim, 2.0, rng);
    let s = ComplexMatrix::from_fn(sensory_dim, sensory_dim, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let o = ComplexMatrix::from_fn(observer_dim, observer_dim, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let g = C64::from_polar(0.05 + 0.25 * rng.random::<f64>(), 2.0 * PI * rng.random::<f64>());
    let term = InteractionTerm::new(g, s, o);
    let terms = vec![term.clone(), term.conjugate()];
    let temperature = 0.2 + 2.0 * rng.random::<f64>();
    let tau = 0.05 + 0.5 * rng.random::<f64>();
    LindbladModel::new(h_sens, h_obs, terms, temperature, tau, GibbsSign::Minus)
}

/// Random density matrix of the given rank.
pub fn random_density<R: Rng + ?Sized>(dim: usize, rank: usize, rng: &mut R) -> DensityMatrix {
    let a = ComplexMatrix::from_fn(dim, rank, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let m = &a * a.adjoint();
    let t = linalg::trace(&m).re;
    DensityMatrix::from_matrix(linalg::hermitian_part(&m.unscale(t))).expect("valid by construction")
}
