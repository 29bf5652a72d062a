use super::jumps::jump_operators;
use super::LindbladModel;
use crate::encoding::DensityMatrix;
use crate::error::{Error, Result};
use crate::linalg::{self, herm_eig, ComplexMatrix, C64};

/// Mixed absolute/relative error tolerance per Runge–Kutta step.
pub const RK_TOL: f64 = 1e-9;
const MAX_STEPS: usize = 1_000_000;
const DROP: f64 = 1e-15;

/// Nonzero entries `(row, col, value)` of a matrix.
#[derive(Debug, Clone)]
struct Sparse(Vec<(usize, usize, C64)>);

impl Sparse {
    fn from_dense(m: &ComplexMatrix) -> Self {
        let mut entries = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)].norm() > DROP {
                    entries.push((i, j, m[(i, j)]));
                }
            }
        }
        Self(entries)
    }
}

/// Propagator for a fixed model.
///
/// Jump operators are eigenoperators of `H_sens`, so the dissipator commutes
/// with the free evolution. The dissipative part is integrated with an
/// adaptive Dormand–Prince 5(4) scheme in the `H_sens` eigenbasis and the
/// unitary phases are applied afterwards in closed form.
#[derive(Debug, Clone)]
pub struct Evolver {
    dim: usize,
    energies: Vec<f64>,
    vectors: ComplexMatrix,
    /// `H` already diagonal, so no basis change is needed.
    diagonal: bool,
    jumps: Vec<Sparse>,
    half_decay: Sparse,
    rate_scale: f64,
}

impl Evolver {
    pub fn new(model: &LindbladModel) -> Result<Self> {
        let jumps: Vec<ComplexMatrix> = jump_operators(model)?.into_iter().map(|j| j.op).collect();
        Self::from_parts(model.h_sens(), &jumps)
    }

    /// Propagator for `H` and explicit jump operators, which must be
    /// eigenoperators of `H`.
    pub fn from_parts(h: &ComplexMatrix, jumps: &[ComplexMatrix]) -> Result<Self> {
        let dim = h.nrows();
        let diagonal = linalg::is_diagonal(h);
        let (energies, vectors) = if diagonal {
            ((0..dim).map(|i| h[(i, i)].re).collect(), linalg::identity(dim))
        } else {
            let eig = herm_eig(h)?;
            (eig.values, eig.vectors)
        };
        let v = &vectors;
        let mut decay = ComplexMatrix::zeros(dim, dim);
        let mut sparse = Vec::with_capacity(jumps.len());
        let mut rate_scale = 0.0;
        for l in jumps {
            if l.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch { expected: dim, found: l.nrows() });
            }
            let le = if diagonal { l.clone() } else { v.adjoint() * l * v };
            decay += le.adjoint() * &le;
            rate_scale += le.iter().map(|z| z.norm_sqr()).sum::<f64>();
            sparse.push(Sparse::from_dense(&le));
        }
        Ok(Self {
            dim,
            energies,
            vectors,
            diagonal,
            jumps: sparse,
            half_decay: Sparse::from_dense(&decay.scale(0.5)),
            rate_scale,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_unitary(&self) -> bool {
        self.jumps.is_empty()
    }

    pub fn evolve(&self, rho: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::invalid(format!("evolution time must be nonnegative, got {t}")));
        }
        if rho.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: rho.dim() });
        }
        if t == 0.0 {
            return Ok(rho.clone());
        }
        let d = self.dim;
        let v = &self.vectors;
        let rho_eig = if self.diagonal { rho.matrix().clone() } else { v.adjoint() * rho.matrix() * v };
        let mut y: Vec<C64> = (0..d * d).map(|k| rho_eig[(k / d, k % d)]).collect();
        if !self.jumps.is_empty() {
            self.integrate(&mut y, t)?;
        }
        let mut out = ComplexMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let phase = C64::from_polar(1.0, -(self.energies[i] - self.energies[j]) * t);
                out[(i, j)] = y[i * d + j] * phase;
            }
        }
        let lab = if self.diagonal { out } else { v * out * v.adjoint() };
        let lab = (&lab + lab.adjoint()).scale(0.5);
        Ok(DensityMatrix::trusted(lab, rho.dims().clone()))
    }

    /// `out = Σ L ρ L† − ½{L†L, ρ}` on a row-major `ρ`.
    fn dissipator(&self, rho: &[C64], out: &mut [C64], scratch: &mut [C64]) {
        let d = self.dim;
        out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for l in &self.jumps {
            scratch.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            for &(i, a, val) in &l.0 {
                let (dst, src) = (&mut scratch[i * d..(i + 1) * d], &rho[a * d..(a + 1) * d]);
                for (x, &r) in dst.iter_mut().zip(src) {
                    *x += val * r;
                }
            }
            for &(j, b, val) in &l.0 {
                let c = val.conj();
                for i in 0..d {
                    out[i * d + j] += scratch[i * d + b] * c;
                }
            }
        }
        for &(i, a, val) in &self.half_decay.0 {
            for c in 0..d {
                out[i * d + c] -= val * rho[a * d + c];
            }
        }
        for &(a, j, val) in &self.half_decay.0 {
            for i in 0..d {
                out[i * d + j] -= rho[i * d + a] * val;
            }
        }
    }

    fn integrate(&self, y: &mut [C64], t_end: f64) -> Result<()> {
        const A: [[f64; 6]; 7] = [
            [0.0; 6],
            [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
            [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
            [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
            [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
            [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
        ];
        // fifth-order weights minus embedded fourth-order weights
        const E: [f64; 7] = [
            71.0 / 57600.0,
            0.0,
            -71.0 / 16695.0,
            71.0 / 1920.0,
            -17253.0 / 339200.0,
            22.0 / 525.0,
            -1.0 / 40.0,
        ];
        let n = y.len();
        let mut k: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); n]; 7];
        let mut stage = vec![C64::new(0.0, 0.0); n];
        let mut scratch = vec![C64::new(0.0, 0.0); n];
        let mut y_new = vec![C64::new(0.0, 0.0); n];

        let mut t = 0.0;
        let mut h = (0.05 / self.rate_scale.max(1e-300)).min(t_end);
        self.dissipator(y, &mut k[0], &mut scratch);
        let mut steps = 0;
        while t < t_end {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::invalid("Runge-Kutta integration did not converge"));
            }
            let last = t + h >= t_end;
            if last {
                h = t_end - t;
            }
            for s in 1..7 {
                for idx in 0..n {
                    let mut acc = y[idx];
                    for (r, &a) in A[s].iter().enumerate().take(s) {
                        if a != 0.0 {
                            acc += k[r][idx] * (a * h);
                        }
                    }
                    stage[idx] = acc;
                }
                let (_, tail) = k.split_at_mut(s);
                self.dissipator(&stage, &mut tail[0], &mut scratch);
            }
            // stage 6 evaluated at the fifth-order solution (FSAL)
            y_new.copy_from_slice(&stage);
            let mut err: f64 = 0.0;
            for idx in 0..n {
                let mut e = C64::new(0.0, 0.0);
                for (r, &w) in E.iter().enumerate() {
                    if w != 0.0 {
                        e += k[r][idx] * w;
                    }
                }
                let scale = RK_TOL * (1.0 + y[idx].norm().max(y_new[idx].norm()));
                err = err.max((e * h).norm() / scale);
            }
            if err <= 1.0 {
                t = if last { t_end } else { t + h };
                y.copy_from_slice(&y_new);
                k.swap(0, 6);
                if last {
                    break;
                }
            }
            h *= if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) } else { 0.2 };
        }
        Ok(())
    }
}

/// Evolves `rho` for time `t` under the model's master equation.
pub fn evolve(rho: &DensityMatrix, model: &LindbladModel, t: f64) -> Result<DensityMatrix> {
    Evolver::new(model)?.evolve(rho, t)
}
