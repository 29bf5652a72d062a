//! Similarity/dissimilarity strategy measurement.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::DensityMatrix;
use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, SubsystemDims, C64};
use crate::measurement::inverse_cdf;
use crate::povm::PovmSet;

/// Orientation of an observer feature inside the strategy POVM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    /// Favors similarity when collapsed onto `|1⟩`.
    Trust,
    /// Favors similarity when collapsed onto `|0⟩`.
    Mistrust,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyLabel {
    Lambda1,
    Lambda2,
}

/// Result of the strategy measurement.
#[derive(Debug, Clone)]
pub struct StrategyOutcome {
    pub label: StrategyLabel,
    pub probability: f64,
    pub rho_sdm: DensityMatrix,
    pub sim_weight: f64,
    pub diss_weight: f64,
    pub observer_post: DensityMatrix,
}

/// Three-qubit strategy POVM on `sdm ⊗ trust ⊗ mistrust`.
pub fn build_strategy_povm(epsilon: f64, k: f64) -> Result<PovmSet<StrategyLabel>> {
    build_strategy_povm_for(epsilon, k, &[Polarity::Trust, Polarity::Mistrust])
}

/// Strategy POVM with one two-level factor per listed observer feature.
///
/// `Λ₁ = k · diag(ε, 1−ε) ⊗ ⨂_f D_f` with `D_f = diag(1−ε, ε)` for trust
/// and `diag(ε, 1−ε)` for mistrust; `Λ₂ = I − Λ₁`.
pub fn build_strategy_povm_for(epsilon: f64, k: f64, polarities: &[Polarity]) -> Result<PovmSet<StrategyLabel>> {
    if !(0.5..=1.0).contains(&epsilon) {
        return Err(Error::invalid(format!("epsilon must lie in [1/2, 1], got {epsilon}")));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::invalid(format!("norm-scaling constant k must be positive, got {k}")));
    }
    let top = k * epsilon.powi(1 + polarities.len() as i32);
    if top > 1.0 + 1e-12 {
        return Err(Error::invalid(format!(
            "k * epsilon^{} = {top} exceeds 1; the complementary element would not be positive",
            1 + polarities.len()
        )));
    }
    let mut diag = vec![k * epsilon, k * (1.0 - epsilon)];
    for p in polarities {
        let factor = match p {
            Polarity::Trust => [1.0 - epsilon, epsilon],
            Polarity::Mistrust => [epsilon, 1.0 - epsilon],
        };
        diag = diag.iter().flat_map(|&d| factor.iter().map(move |&f| d * f)).collect();
    }
    let lambda1 = linalg::diag_real(&diag);
    let lambda2 = linalg::diag_real(&diag.iter().map(|d| 1.0 - d).collect::<Vec<_>>());
    PovmSet::new(vec![(StrategyLabel::Lambda1, lambda1), (StrategyLabel::Lambda2, lambda2)])
}

/// Default sdm input, the uniform superposition `|+⟩`.
pub fn default_sdm_state() -> DensityMatrix {
    let half = C64::new(0.5, 0.0);
    DensityMatrix::trusted(
        ComplexMatrix::from_element(2, 2, half),
        SubsystemDims::new(vec![2]).expect("valid dims"),
    )
}

/// Born probabilities of the strategy POVM for `sdm ⊗ observer_factors`.
pub fn strategy_probabilities(
    sdm_state: &DensityMatrix,
    observer_factors: &DensityMatrix,
    povm: &PovmSet<StrategyLabel>,
) -> Result<Vec<(StrategyLabel, f64)>> {
    let rho = composite(sdm_state, observer_factors, povm)?;
    Ok(povm
        .elements()
        .iter()
        .map(|(l, e)| (*l, linalg::trace_of_product(e, rho.matrix()).re.max(0.0)))
        .collect())
}

/// Deterministic post-measurement update for a given outcome.
pub fn strategy_update(
    sdm_state: &DensityMatrix,
    observer_factors: &DensityMatrix,
    povm: &PovmSet<StrategyLabel>,
    label: StrategyLabel,
) -> Result<StrategyOutcome> {
    let rho = composite(sdm_state, observer_factors, povm)?;
    let element = povm.element(&label).ok_or_else(|| Error::invalid(format!("unknown strategy outcome {label:?}")))?;
    let kraus = linalg::psd_sqrt(element)?;
    let post = &kraus * rho.matrix() * &kraus;
    let probability = linalg::trace(&post).re;
    if probability <= 1e-12 {
        return Err(Error::ZeroProbability { probability });
    }
    let post = DensityMatrix::trusted(post.unscale(probability), rho.dims().clone());
    let rest: Vec<usize> = (1..rho.dims().len()).collect();
    let rho_sdm = post.reduce(&[0])?;
    let observer_post = post.reduce(&rest)?;
    let sim_weight = rho_sdm.matrix()[(0, 0)].re;
    let diss_weight = rho_sdm.matrix()[(1, 1)].re;
    Ok(StrategyOutcome { label, probability, rho_sdm, sim_weight, diss_weight, observer_post })
}

/// Samples an outcome of the strategy POVM and applies the update.
pub fn measure_strategy<R: Rng + ?Sized>(
    sdm_state: &DensityMatrix,
    observer_factors: &DensityMatrix,
    povm: &PovmSet<StrategyLabel>,
    rng: &mut R,
) -> Result<StrategyOutcome> {
    let probs = strategy_probabilities(sdm_state, observer_factors, povm)?;
    let weights: Vec<f64> = probs.iter().map(|p| p.1).collect();
    let idx = inverse_cdf(&weights, rng.random::<f64>());
    strategy_update(sdm_state, observer_factors, povm, probs[idx].0)
}

fn composite(
    sdm_state: &DensityMatrix,
    observer_factors: &DensityMatrix,
    povm: &PovmSet<StrategyLabel>,
) -> Result<DensityMatrix> {
    if sdm_state.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: sdm_state.dim() });
    }
    let rho = sdm_state.tensor(observer_factors);
    if rho.dim() != povm.dim() {
        return Err(Error::DimensionMismatch { expected: povm.dim(), found: rho.dim() });
    }
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{diag_real, identity, max_abs};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn basis(bits: &[usize]) -> DensityMatrix {
        let mut idx = 0;
        for &b in bits {
            idx = idx * 2 + b;
        }
        let n = 1 << bits.len();
        DensityMatrix::new(linalg::ket_bra(n, idx, idx), SubsystemDims::new(vec![2; bits.len()]).unwrap()).unwrap()
    }

    fn mixed(n_qubits: usize) -> DensityMatrix {
        let n = 1 << n_qubits;
        DensityMatrix::new(identity(n).unscale(n as f64), SubsystemDims::new(vec![2; n_qubits]).unwrap()).unwrap()
    }

    #[test]
    fn endpoints() {
        let half = build_strategy_povm(0.5, 1.0).unwrap();
        assert_eq!(half.element(&StrategyLabel::Lambda1).unwrap(), &identity(8).unscale(8.0));
        assert!(max_abs(&(half.element(&StrategyLabel::Lambda2).unwrap() - identity(8).scale(7.0 / 8.0))) < 1e-15);

        let full = build_strategy_povm(1.0, 1.0).unwrap();
        // |0⟩_sdm ⊗ |1⟩_trust ⊗ |0⟩_mistrust is index 0b010
        assert_eq!(full.element(&StrategyLabel::Lambda1).unwrap(), &linalg::ket_bra(8, 2, 2));

        let quarter = build_strategy_povm(0.75, 1.0).unwrap();
        let top = linalg::herm_eigenvalues(quarter.element(&StrategyLabel::Lambda1).unwrap()).unwrap();
        assert!((top[7] - 0.421875).abs() < 1e-15);
    }

    #[test]
    fn legality() {
        assert!(build_strategy_povm(0.4, 1.0).is_err());
        assert!(build_strategy_povm(1.01, 1.0).is_err());
        assert!(build_strategy_povm(0.9, 0.0).is_err());
        assert!(build_strategy_povm(0.9, 1.0 / 0.729 + 1e-6).is_err());
        assert!(build_strategy_povm(0.9, 1.0 / 0.729).is_ok());
        for i in 0..=10 {
            let eps = 0.5 + 0.05 * i as f64;
            for n in 0..4 {
                let povm = build_strategy_povm_for(eps, 1.0, &vec![Polarity::Trust; n]).unwrap();
                assert!(povm.closure_deviation() <= 1e-15);
                assert!(povm.is_positive().unwrap());
            }
        }
    }

    #[test]
    fn uniform_input_probabilities() {
        let povm = build_strategy_povm(0.5, 1.0).unwrap();
        let probs = strategy_probabilities(&mixed(1), &mixed(2), &povm).unwrap();
        assert!((probs[0].1 - 0.125).abs() < 1e-15);
        assert!((probs[1].1 - 0.875).abs() < 1e-15);
    }

    #[test]
    fn collapsed_eigenstate() {
        let povm = build_strategy_povm(1.0, 1.0).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..20 {
            let out = measure_strategy(&basis(&[0]), &basis(&[1, 0]), &povm, &mut rng).unwrap();
            assert_eq!(out.label, StrategyLabel::Lambda1);
            assert!((out.probability - 1.0).abs() < 1e-15);
            assert_eq!(out.sim_weight, 1.0);
            assert!(max_abs(&(out.rho_sdm.matrix() - linalg::ket_bra(2, 0, 0))) < 1e-15);
        }
    }

    #[test]
    fn weights_sum_to_one_and_are_monotone() {
        let obs = basis(&[1, 0]);
        let mut previous = 0.0;
        for i in 0..=5 {
            let eps = 0.5 + 0.1 * i as f64;
            let povm = build_strategy_povm(eps, 1.0).unwrap();
            let out = strategy_update(&default_sdm_state(), &obs, &povm, StrategyLabel::Lambda1).unwrap();
            assert!((out.sim_weight + out.diss_weight - 1.0).abs() < 1e-12);
            assert!((out.sim_weight - eps).abs() < 1e-12);
            assert!(out.sim_weight >= previous);
            previous = out.sim_weight;
            if eps < 1.0 {
                let other = strategy_update(&default_sdm_state(), &obs, &povm, StrategyLabel::Lambda2).unwrap();
                assert!((other.sim_weight + other.diss_weight - 1.0).abs() < 1e-12);
                assert!(other.rho_sdm.min_eigenvalue() >= -1e-12);
                assert!((other.observer_post.trace() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sampling_matches_born_probabilities() {
        let povm = build_strategy_povm(0.8, 1.0).unwrap();
        let obs = DensityMatrix::new(diag_real(&[0.1, 0.2, 0.3, 0.4]), SubsystemDims::new(vec![2, 2]).unwrap()).unwrap();
        let p = strategy_probabilities(&default_sdm_state(), &obs, &povm).unwrap()[0].1;
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| measure_strategy(&default_sdm_state(), &obs, &povm, &mut rng).unwrap().label == StrategyLabel::Lambda1)
            .count();
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - p).abs() < 3.0 * sigma);
    }

    #[test]
    fn rejects_mismatched_dims() {
        let povm = build_strategy_povm(0.8, 1.0).unwrap();
        assert!(strategy_probabilities(&default_sdm_state(), &basis(&[0]), &povm).is_err());
        assert!(strategy_probabilities(&basis(&[0, 0]), &basis(&[0]), &povm).is_err());
    }
}
