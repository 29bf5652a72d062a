//! Born probabilities, sampling and post-measurement states.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::DensityMatrix;
use crate::error::{Error, Result};
use crate::icm::{IcmLabel, IcmPovm};
use crate::linalg::{self, ComplexMatrix, SubsystemDims, C64, CLOSURE_TOL};

/// How outcome probabilities are computed from the matching POVM.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BornMode {
    /// `p_m = Tr(Π_m ρ)`; sums to one by closure.
    #[default]
    Closure,
    /// `p_m ∝ δβ_m Tr(Π_m ρ)`, renormalized for sampling.
    Paper,
}

/// Probabilities over labelled outcomes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeDistribution<L> {
    pub labels: Vec<L>,
    pub probabilities: Vec<f64>,
    /// Sum before any renormalization.
    pub raw_total: f64,
}

impl<L: Clone> OutcomeDistribution<L> {
    /// Clamps tiny negative values and checks the total.
    pub fn new(labels: Vec<L>, probabilities: Vec<f64>, mode: BornMode) -> Result<Self> {
        if labels.len() != probabilities.len() || labels.is_empty() {
            return Err(Error::invalid("labels and probabilities must be non-empty and of equal length"));
        }
        let mut probabilities = probabilities;
        for p in &mut probabilities {
            if *p < -CLOSURE_TOL || !p.is_finite() {
                return Err(Error::invalid(format!("negative outcome probability {p}")));
            }
            *p = p.max(0.0);
        }
        let raw_total: f64 = probabilities.iter().sum();
        match mode {
            BornMode::Closure => {
                if (raw_total - 1.0).abs() > CLOSURE_TOL {
                    return Err(Error::ClosureViolated { deviation: (raw_total - 1.0).abs(), tol: CLOSURE_TOL });
                }
            }
            BornMode::Paper => {
                if raw_total <= 0.0 {
                    return Err(Error::ZeroProbability { probability: raw_total });
                }
                probabilities.iter_mut().for_each(|p| *p /= raw_total);
            }
        }
        Ok(Self { labels, probabilities, raw_total })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }
}

/// Index drawn by inverse CDF for a uniform `u ∈ [0, 1)`; weights need not
/// be normalized.
pub fn inverse_cdf(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

/// Index of the sampled outcome.
pub fn sample_index<L, R: Rng + ?Sized>(dist: &OutcomeDistribution<L>, rng: &mut R) -> usize {
    inverse_cdf(&dist.probabilities, rng.random::<f64>())
}

pub fn sample_outcome<L: Clone, R: Rng + ?Sized>(dist: &OutcomeDistribution<L>, rng: &mut R) -> L {
    dist.labels[sample_index(dist, rng)].clone()
}

/// `Tr((A ⊗ B) ρ)` without forming the product.
fn trace_kron_product(a: &ComplexMatrix, b: &ComplexMatrix, rho: &ComplexMatrix) -> C64 {
    let (na, nb) = (a.nrows(), b.nrows());
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..na {
        for j in 0..na {
            let aij = a[(i, j)];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            let mut inner = C64::new(0.0, 0.0);
            for k in 0..nb {
                for l in 0..nb {
                    inner += b[(k, l)] * rho[(j * nb + l, i * nb + k)];
                }
            }
            acc += aij * inner;
        }
    }
    acc
}

/// Born distribution of the matching POVM on a composite state.
pub fn born_probabilities(povm: &IcmPovm, rho: &DensityMatrix, mode: BornMode) -> Result<OutcomeDistribution<IcmLabel>> {
    if rho.dim() != povm.dim() {
        return Err(Error::DimensionMismatch { expected: povm.dim(), found: rho.dim() });
    }
    let delta = povm.delta.delta;
    let matches: Vec<f64> = povm
        .elements
        .iter()
        .map(|e| delta * e.beta * trace_kron_product(&e.pi_c, &e.pi_o, rho.matrix()).re)
        .collect();
    finish(povm, rho.trace(), matches, mode)
}

/// Born distribution for the product state `ρ_s ⊗ ρ_o`.
pub fn born_probabilities_product(
    povm: &IcmPovm,
    rho_s: &ComplexMatrix,
    rho_o: &ComplexMatrix,
    mode: BornMode,
) -> Result<OutcomeDistribution<IcmLabel>> {
    if rho_s.nrows() != povm.sensory_dims().total() || rho_o.nrows() != povm.observer_dims().total() {
        return Err(Error::DimensionMismatch { expected: povm.dim(), found: rho_s.nrows() * rho_o.nrows() });
    }
    let delta = povm.delta.delta;
    let matches: Vec<f64> = povm
        .elements
        .iter()
        .map(|e| {
            delta * e.beta * linalg::trace_of_product(&e.pi_c, rho_s).re * linalg::trace_of_product(&e.pi_o, rho_o).re
        })
        .collect();
    let total = linalg::trace(rho_s).re * linalg::trace(rho_o).re;
    finish(povm, total, matches, mode)
}

fn finish(povm: &IcmPovm, total: f64, matches: Vec<f64>, mode: BornMode) -> Result<OutcomeDistribution<IcmLabel>> {
    let null = total - matches.iter().sum::<f64>();
    let mut probs = Vec::with_capacity(matches.len() + 1);
    probs.push(null);
    probs.extend(matches);
    if mode == BornMode::Paper {
        for (i, p) in probs.iter_mut().enumerate() {
            *p *= povm.weight(i);
        }
    }
    OutcomeDistribution::new(povm.labels(), probs, mode)
}

/// `K ρ K† / Tr(·)` with `K = √element`.
pub fn kraus_update(rho: &DensityMatrix, element: &ComplexMatrix) -> Result<DensityMatrix> {
    if element.shape() != rho.matrix().shape() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: element.nrows() });
    }
    let k = linalg::psd_sqrt(element)?;
    apply_kraus(rho.matrix(), &k, rho.dims())
}

fn apply_kraus(rho: &ComplexMatrix, k: &ComplexMatrix, dims: &SubsystemDims) -> Result<DensityMatrix> {
    let post = k * rho * k.adjoint();
    let p = linalg::trace(&post).re;
    if p <= 1e-12 {
        return Err(Error::ZeroProbability { probability: p });
    }
    Ok(DensityMatrix::trusted(linalg::hermitian_part(&post.unscale(p)), dims.clone()))
}

fn composite_dims(povm: &IcmPovm) -> Result<SubsystemDims> {
    let mut dims = povm.sensory_dims().as_slice().to_vec();
    dims.extend_from_slice(povm.observer_dims().as_slice());
    SubsystemDims::new(dims)
}

/// Post-measurement state for the outcome at `index` (in label order).
pub fn icm_update(povm: &IcmPovm, index: usize, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let dims = composite_dims(povm)?;
    if index == 0 {
        return apply_kraus(rho.matrix(), povm.null_root()?, &dims);
    }
    let (rc, ro) = povm.elements[index - 1].roots()?;
    apply_kraus(rho.matrix(), &linalg::kron(rc, ro)?, &dims)
}

/// [`icm_update`] for the product state `ρ_s ⊗ ρ_o`; match outcomes stay
/// in product form.
pub fn icm_update_product(
    povm: &IcmPovm,
    index: usize,
    rho_s: &ComplexMatrix,
    rho_o: &ComplexMatrix,
) -> Result<DensityMatrix> {
    let dims = composite_dims(povm)?;
    if index == 0 {
        let rho = linalg::kron(rho_s, rho_o)?;
        return apply_kraus(&rho, povm.null_root()?, &dims);
    }
    let (rc, ro) = povm.elements[index - 1].roots()?;
    let s = rc * rho_s * rc;
    let o = ro * rho_o * ro;
    let p = linalg::trace(&s).re * linalg::trace(&o).re;
    if p <= 1e-12 {
        return Err(Error::ZeroProbability { probability: p });
    }
    let post = linalg::kron(&s, &o)?.unscale(p);
    Ok(DensityMatrix::trusted(linalg::hermitian_part(&post), dims))
}

/// Which half of the composite state to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Sensory,
    Observer,
}

/// Partial trace onto the leading `sensory_count` subsystems or onto the
/// remaining ones.
pub fn extract_subsystem(rho_icm: &DensityMatrix, which: Part, sensory_count: usize) -> Result<DensityMatrix> {
    let n = rho_icm.dims().len();
    if sensory_count == 0 || sensory_count >= n {
        return Err(Error::SubsystemOutOfRange { index: sensory_count, count: n });
    }
    let keep: Vec<usize> = match which {
        Part::Sensory => (0..sensory_count).collect(),
        Part::Observer => (sensory_count..n).collect(),
    };
    rho_icm.reduce(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::icm::{assemble_icm_povm, BiasStructure, CategoryBias};
    use crate::linalg::{identity, ket_bra, max_abs, outer, ComplexVector};
    use rand::SeedableRng;
    use rand_chacha::{ChaCha20Rng, ChaCha8Rng};

    fn dims(v: &[usize]) -> SubsystemDims {
        SubsystemDims::new(v.to_vec()).unwrap()
    }

    fn random_state(n: usize, rank: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
        use rand::Rng;
        let a = ComplexMatrix::from_fn(n, rank, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let m = &a * a.adjoint();
        let t = linalg::trace(&m).re;
        m.unscale(t)
    }

    fn example_povm(rng: &mut ChaCha8Rng) -> IcmPovm {
        let bias = BiasStructure {
            beta_0: 0.2,
            categories: vec![
                CategoryBias { category: "a".into(), beta: 0.5, observers: vec![("x".into(), 0.5), ("y".into(), 0.5)] },
                CategoryBias { category: "b".into(), beta: 0.3, observers: vec![("x".into(), 1.0)] },
            ],
        };
        assemble_icm_povm(
            &[("a".into(), random_state(4, 2, rng)), ("b".into(), random_state(4, 4, rng))],
            &[("x".into(), random_state(2, 2, rng)), ("y".into(), random_state(2, 1, rng))],
            &bias,
            dims(&[4]),
            dims(&[2]),
        )
        .unwrap()
    }

    #[test]
    fn maximally_mixed_state_gives_trace_ratios() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let povm = example_povm(&mut rng);
        let rho = DensityMatrix::new(identity(8).unscale(8.0), dims(&[4, 2])).unwrap();
        let dist = born_probabilities(&povm, &rho, BornMode::Closure).unwrap();
        for i in 0..dist.len() {
            let e = povm.element(i).unwrap();
            assert!((dist.probabilities[i] - linalg::trace(&e).re / 8.0).abs() < 1e-12);
        }
        assert!((dist.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn product_and_dense_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let povm = example_povm(&mut rng);
        for _ in 0..5 {
            let (s, o) = (random_state(4, 2, &mut rng), random_state(2, 2, &mut rng));
            let rho = DensityMatrix::new(linalg::kron(&s, &o).unwrap(), dims(&[4, 2])).unwrap();
            let dense = born_probabilities(&povm, &rho, BornMode::Closure).unwrap();
            let fast = born_probabilities_product(&povm, &s, &o, BornMode::Closure).unwrap();
            let set = povm.to_povm_set().unwrap();
            for i in 0..dense.len() {
                let direct = linalg::trace_of_product(&set.elements()[i].1, rho.matrix()).re;
                assert!((dense.probabilities[i] - direct).abs() < 1e-12);
                assert!((fast.probabilities[i] - direct).abs() < 1e-12);
            }
            for i in 0..dense.len() {
                let a = icm_update(&povm, i, &rho).unwrap();
                let b = icm_update_product(&povm, i, &s, &o).unwrap();
                assert!(max_abs(&(a.matrix() - b.matrix())) < 1e-10);
                assert!((a.trace() - 1.0).abs() < 1e-12);
            }
            let paper = born_probabilities(&povm, &rho, BornMode::Paper).unwrap();
            assert!((paper.total() - 1.0).abs() < 1e-12);
            let raw: f64 = (0..dense.len()).map(|i| dense.probabilities[i] * povm.weight(i)).sum();
            assert!((paper.raw_total - raw).abs() < 1e-12);
        }
    }

    #[test]
    fn kraus_completeness() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let povm = example_povm(&mut rng);
        let rho = random_state(8, 3, &mut rng);
        let mut total = 0.0;
        for i in 0..povm.labels().len() {
            let k = if i == 0 {
                povm.null_root().unwrap().clone()
            } else {
                let (a, b) = povm.elements[i - 1].roots().unwrap();
                linalg::kron(a, b).unwrap().scale((povm.weight(i)).sqrt())
            };
            assert!(max_abs(&(k.adjoint() * &k - povm.element(i).unwrap())) < 1e-8);
            total += linalg::trace(&(&k * &rho * k.adjoint())).re;
        }
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rank_one_element_reaches_its_bound() {
        let bias = BiasStructure {
            beta_0: 0.1,
            categories: vec![CategoryBias { category: "c".into(), beta: 0.9, observers: vec![("o".into(), 1.0)] }],
        };
        let povm = assemble_icm_povm(&[("c".into(), ket_bra(2, 0, 0))], &[("o".into(), ket_bra(2, 0, 0))], &bias, dims(&[2]), dims(&[2])).unwrap();
        let rho = DensityMatrix::new(ket_bra(4, 0, 0), dims(&[2, 2])).unwrap();
        let dist = born_probabilities(&povm, &rho, BornMode::Closure).unwrap();
        assert!((dist.probabilities[1] - povm.weight(1)).abs() < 1e-12);
    }

    #[test]
    fn sampling() {
        let dist = OutcomeDistribution::new(vec!['a', 'b', 'c'], vec![0.0, 1.0, 0.0], BornMode::Closure).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        assert!((0..100).all(|_| sample_outcome(&dist, &mut rng) == 'b'));

        let uniform = OutcomeDistribution::new(vec![0, 1, 2, 3], vec![0.25; 4], BornMode::Closure).unwrap();
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[sample_outcome(&uniform, &mut rng)] += 1;
        }
        let sigma = (0.25f64 * 0.75 / n as f64).sqrt();
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 3.0 * sigma);
        }
        let draw = |seed| {
            let mut r = ChaCha20Rng::seed_from_u64(seed);
            (0..20).map(|_| sample_outcome(&uniform, &mut r)).collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
        assert_eq!(inverse_cdf(&[0.5, 0.5, 0.0], 0.999_999_999_999), 1);
        assert!(OutcomeDistribution::new(vec![0], vec![0.5], BornMode::Closure).is_err());
    }

    #[test]
    fn kraus_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rho = DensityMatrix::new(random_state(3, 3, &mut rng), dims(&[3])).unwrap();
        assert!(max_abs(&(kraus_update(&rho, &identity(3)).unwrap().matrix() - rho.matrix())) < 1e-14);
        assert!(max_abs(&(kraus_update(&rho, &identity(3).scale(0.5)).unwrap().matrix() - rho.matrix())) < 1e-14);
        let v = ComplexVector::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8), C64::new(0.0, 0.0)]);
        let got = kraus_update(&rho, &outer(&v)).unwrap();
        assert!(max_abs(&(got.matrix() - outer(&v))) < 1e-12);
        let zero = DensityMatrix::new(ket_bra(3, 2, 2), dims(&[3])).unwrap();
        assert!(matches!(kraus_update(&zero, &outer(&v)), Err(Error::ZeroProbability { .. })));
    }

    #[test]
    fn subsystem_extraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (a, b) = (random_state(3, 2, &mut rng), random_state(2, 1, &mut rng));
        let rho = DensityMatrix::new(linalg::kron(&a, &b).unwrap(), dims(&[3, 2])).unwrap();
        let s = extract_subsystem(&rho, Part::Sensory, 1).unwrap();
        let o = extract_subsystem(&rho, Part::Observer, 1).unwrap();
        assert!(max_abs(&(s.matrix() - &a)) < 1e-14);
        assert!(max_abs(&(o.matrix() - &b)) < 1e-14);
        assert!(linalg::frobenius_norm(&(s.tensor(&o).matrix() - rho.matrix())) < 1e-10);

        let bell = ComplexVector::from_vec(vec![C64::new(0.5f64.sqrt(), 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.5f64.sqrt(), 0.0)]);
        let rho = DensityMatrix::new(outer(&bell), dims(&[2, 2])).unwrap();
        let s = extract_subsystem(&rho, Part::Sensory, 1).unwrap();
        assert!(s.purity() < 1.0 - 1e-6);
        assert!((s.trace() - 1.0).abs() < 1e-14);
        assert!(extract_subsystem(&rho, Part::Sensory, 2).is_err());
    }
}
