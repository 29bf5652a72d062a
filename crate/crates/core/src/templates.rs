//! Category operators as mixtures of randomly transformed prototypes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, ComplexVector, C64};

/// Default standard deviation of the unitary parameters.
pub const DEFAULT_SIGMA: f64 = 0.1;

/// Tensor product of Paulis stored as bit masks; qubit 0 is the most
/// significant bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PauliString {
    pub x: usize,
    pub z: usize,
}

impl PauliString {
    /// `P|j⟩ = i^{#Y} (−1)^{|j ∧ z|} |j ⊕ x⟩`.
    fn column(&self, j: usize) -> (usize, C64) {
        let ny = (self.x & self.z).count_ones() % 4;
        let mut phase = [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)][ny as usize];
        if (j & self.z).count_ones() % 2 == 1 {
            phase = -phase;
        }
        (j ^ self.x, phase)
    }

    pub fn to_matrix(&self, n: usize) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(n, n);
        for j in 0..n {
            let (i, v) = self.column(j);
            m[(i, j)] = v;
        }
        m
    }
}

fn qubit_count(n: usize) -> Result<u32> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::invalid(format!("generator dimension must be a power of 2 (at least 2), got {n}")));
    }
    Ok(n.trailing_zeros())
}

/// The `n² − 1` non-identity Pauli strings in lexicographic `I, X, Y, Z`
/// order.
pub fn pauli_strings(n: usize) -> Result<Vec<PauliString>> {
    let q = qubit_count(n)?;
    let mut out = Vec::with_capacity(n * n - 1);
    for code in 1..n * n {
        let (mut x, mut z) = (0, 0);
        for b in 0..q {
            let digit = (code >> (2 * (q - 1 - b))) & 3;
            let bit = 1 << (q - 1 - b);
            if digit == 1 || digit == 2 {
                x |= bit;
            }
            if digit == 2 || digit == 3 {
                z |= bit;
            }
        }
        out.push(PauliString { x, z });
    }
    Ok(out)
}

/// Dense generators `T_j`.
pub fn pauli_string_generators(n: usize) -> Result<Vec<ComplexMatrix>> {
    Ok(pauli_strings(n)?.iter().map(|p| p.to_matrix(n)).collect())
}

/// `exp(i Σ_j ξ_j T_j)`.
pub fn random_unitary(xi: &[f64], generators: &[ComplexMatrix]) -> Result<ComplexMatrix> {
    if xi.len() != generators.len() {
        return Err(Error::DimensionMismatch { expected: generators.len(), found: xi.len() });
    }
    let n = generators.first().map(|g| g.nrows()).ok_or_else(|| Error::invalid("no generators"))?;
    let mut h = ComplexMatrix::zeros(n, n);
    for (x, g) in xi.iter().zip(generators) {
        h += g.scale(*x);
    }
    linalg::unitary_exp(&h, 1.0)
}

fn unitary_from_strings(xi: &[f64], strings: &[PauliString], n: usize) -> Result<ComplexMatrix> {
    let mut h = ComplexMatrix::zeros(n, n);
    for (x, p) in xi.iter().zip(strings) {
        if *x == 0.0 {
            continue;
        }
        for j in 0..n {
            let (i, v) = p.column(j);
            h[(i, j)] += v * *x;
        }
    }
    linalg::unitary_exp(&h, 1.0)
}

/// Covariance of the unitary parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Isotropic(f64),
    Full(DMatrix<f64>),
}

impl Default for Covariance {
    fn default() -> Self {
        Covariance::Isotropic(DEFAULT_SIGMA)
    }
}

/// Multivariate normal sampler over `R^len`.
#[derive(Debug, Clone)]
struct Gaussian {
    mean: DVector<f64>,
    factor: Option<DMatrix<f64>>,
    sigma: f64,
}

impl Gaussian {
    fn new(mean: &[f64], cov: &Covariance, len: usize) -> Result<Self> {
        let mean = if mean.is_empty() { DVector::zeros(len) } else { DVector::from_column_slice(mean) };
        if mean.len() != len {
            return Err(Error::DimensionMismatch { expected: len, found: mean.len() });
        }
        match cov {
            Covariance::Isotropic(sigma) => {
                if !(*sigma >= 0.0 && sigma.is_finite()) {
                    return Err(Error::invalid(format!("sigma must be nonnegative, got {sigma}")));
                }
                Ok(Self { mean, factor: None, sigma: *sigma })
            }
            Covariance::Full(c) => {
                if c.shape() != (len, len) {
                    return Err(Error::DimensionMismatch { expected: len, found: c.nrows() });
                }
                let chol = c
                    .clone()
                    .cholesky()
                    .ok_or_else(|| Error::invalid("covariance matrix is not positive definite"))?;
                Ok(Self { mean, factor: Some(chol.l()), sigma: 1.0 })
            }
        }
    }

    fn is_trivial(&self) -> bool {
        self.factor.is_none() && self.sigma == 0.0 && self.mean.iter().all(|&m| m == 0.0)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let len = self.mean.len();
        if self.factor.is_none() && self.sigma == 0.0 {
            return self.mean.as_slice().to_vec();
        }
        let z = DVector::from_fn(len, |_, _| rng.sample::<f64, _>(StandardNormal));
        let draw = match &self.factor {
            Some(l) => &self.mean + l * z,
            None => &self.mean + z * self.sigma,
        };
        draw.as_slice().to_vec()
    }
}

/// Prototype and sampling parameters of one category (or observer state).
#[derive(Debug, Clone, PartialEq)]
pub struct CategorySpec {
    pub name: String,
    pub prototype: ComplexVector,
    pub features: Vec<String>,
    pub template_count: usize,
    pub xi_covariance: Covariance,
    /// Mean of the weight-operator parameters; empty means zero.
    pub weight_mean: Vec<f64>,
    pub weight_sigma: f64,
}

impl CategorySpec {
    pub fn new(name: impl Into<String>, prototype: ComplexVector, features: Vec<String>, template_count: usize) -> Self {
        Self {
            name: name.into(),
            prototype,
            features,
            template_count,
            xi_covariance: Covariance::default(),
            weight_mean: Vec::new(),
            weight_sigma: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.prototype.len()
    }

    /// Dimension in which templates are generated.
    pub fn generator_dim(&self) -> usize {
        self.dim().next_power_of_two().max(2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() < 2 {
            return Err(Error::invalid(format!("category {}: prototype dimension must be at least 2", self.name)));
        }
        if self.template_count == 0 {
            return Err(Error::invalid(format!("category {}: template count must be positive", self.name)));
        }
        let norm = self.prototype.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("category {}: prototype norm is {norm}, expected 1", self.name)));
        }
        let len = self.generator_dim().pow(2) - 1;
        Gaussian::new(&[], &self.xi_covariance, len)?;
        Gaussian::new(&self.weight_mean, &Covariance::Isotropic(self.weight_sigma), len)?;
        Ok(())
    }
}

/// `Π″_c`, unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryOperator {
    pub name: String,
    pub matrix: ComplexMatrix,
    /// Set when templates were generated in a padded power-of-two space.
    pub embedded: bool,
}

/// Draws `N_c` pure templates `W U |τ̄⟩`.
pub fn sample_templates<R: Rng + ?Sized>(spec: &CategorySpec, rng: &mut R) -> Result<Vec<ComplexVector>> {
    spec.validate()?;
    let (n, big) = (spec.dim(), spec.generator_dim());
    let strings = pauli_strings(big)?;
    let xi = Gaussian::new(&[], &spec.xi_covariance, strings.len())?;
    let w = Gaussian::new(&spec.weight_mean, &Covariance::Isotropic(spec.weight_sigma), strings.len())?;
    let mut proto = ComplexVector::zeros(big);
    proto.rows_mut(0, n).copy_from(&spec.prototype);

    let mut out = Vec::with_capacity(spec.template_count);
    while out.len() < spec.template_count {
        let mut v = unitary_from_strings(&xi.sample(rng), &strings, big)? * &proto;
        if !w.is_trivial() {
            v = unitary_from_strings(&w.sample(rng), &strings, big)? * v;
        }
        let mut t = v.rows(0, n).into_owned();
        let norm = t.norm();
        if norm < 1e-12 {
            log::debug!("category {}: template vanished after projection, redrawing", spec.name);
            continue;
        }
        t.unscale_mut(norm);
        out.push(t);
    }
    Ok(out)
}

/// Normalized mixture of sampled templates.
pub fn make_category_operator<R: Rng + ?Sized>(spec: &CategorySpec, rng: &mut R) -> Result<CategoryOperator> {
    let templates = sample_templates(spec, rng)?;
    let n = spec.dim();
    let mut m = ComplexMatrix::zeros(n, n);
    for t in &templates {
        m += linalg::outer(t);
    }
    let tr = linalg::trace(&m).re;
    let matrix = linalg::hermitian_part(&m.unscale(tr));
    let embedded = n != spec.generator_dim();
    if embedded {
        log::info!("category {}: dimension {n} embedded in {} for template generation", spec.name, spec.generator_dim());
    }
    Ok(CategoryOperator { name: spec.name.clone(), matrix, embedded })
}
