//! Instance–category matching POVM.
//!
//! Every category operator is aligned to the union feature space `U`
//! (sensory features plus all category features, ordered by label). Match
//! elements are `δ β_{c,o} Π̂_c ⊗ Π̂_o` with trace-normalized factors; the
//! null element closes the set.

use std::fmt;
use std::sync::OnceLock;

use serde::{Serialize, Serializer};

use crate::encoding::DensityMatrix;
use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, SubsystemDims, C64, PSD_TOL};
use crate::povm::PovmSet;
use crate::strategy::StrategyOutcome;

/// Tolerance on the bias normalization `β₀ + Σ β_{c,o} = 1`.
pub const BIAS_TOL: f64 = 1e-12;
/// Below this trace an operator cannot be normalized.
const TRACE_FLOOR: f64 = 1e-12;

/// Degree of openness `η ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpennessParams {
    eta: f64,
}

impl OpennessParams {
    pub fn new(eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::invalid(format!("openness eta must lie in [0, 1], got {eta}")));
        }
        Ok(Self { eta })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

/// `(1−η) ⨂_f |0⟩⟨0| + η ⨂_f I/n_f` over the absent features.
pub fn external_feature_operator(openness: OpennessParams, absent_dims: &[usize]) -> Result<ComplexMatrix> {
    if absent_dims.is_empty() {
        return Err(Error::invalid("external-feature operator needs at least one absent feature"));
    }
    Ok(external_operator(openness.eta(), absent_dims))
}

fn external_operator(eta: f64, dims: &[usize]) -> ComplexMatrix {
    let n: usize = dims.iter().product();
    let mut m = linalg::identity(n).scale(eta / n as f64);
    m[(0, 0)] += C64::new(1.0 - eta, 0.0);
    m
}

/// Union feature space in canonical (lexicographic) order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpace {
    names: Vec<String>,
    dims: Vec<usize>,
}

impl FeatureSpace {
    /// Merges named features; repeated names must agree on dimension.
    pub fn new(features: impl IntoIterator<Item = (String, usize)>) -> Result<Self> {
        let mut all: Vec<(String, usize)> = features.into_iter().collect();
        all.sort();
        all.dedup();
        for w in all.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::invalid(format!(
                    "feature {} declared with dimensions {} and {}",
                    w[0].0, w[0].1, w[1].1
                )));
            }
        }
        if all.is_empty() {
            return Err(Error::invalid("feature space is empty"));
        }
        if let Some((name, d)) = all.iter().find(|(_, d)| *d < 2) {
            return Err(Error::invalid(format!("feature {name} has dimension {d}, expected at least 2")));
        }
        let (names, dims) = all.into_iter().unzip();
        Ok(Self { names, dims })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn total(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn subsystem_dims(&self) -> SubsystemDims {
        SubsystemDims::new(self.dims.clone()).expect("feature dims validated")
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .binary_search_by(|n| n.as_str().cmp(name))
            .map_err(|_| Error::invalid(format!("feature {name} is not part of the feature space")))
    }

    fn indices(&self, names: &[String]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.index_of(n)).collect()
    }

    fn dims_of(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.dims[i]).collect()
    }

    /// Tensors the given blocks (each on the listed features, in that
    /// order), fills every other feature with its ground projector and
    /// permutes into canonical order.
    fn place(&self, parts: &[(&[usize], &ComplexMatrix)]) -> Result<ComplexMatrix> {
        let mut order: Vec<usize> = Vec::new();
        let mut acc = ComplexMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        for (idx, m) in parts {
            if idx.is_empty() {
                acc = acc.scale(linalg::trace(m).re);
                continue;
            }
            let expected: usize = self.dims_of(idx).iter().product();
            if m.nrows() != expected {
                return Err(Error::DimensionMismatch { expected, found: m.nrows() });
            }
            acc = linalg::kron(&acc, m)?;
            order.extend_from_slice(idx);
        }
        let rest: Vec<usize> = (0..self.names.len()).filter(|i| !order.contains(i)).collect();
        if !rest.is_empty() {
            let n: usize = self.dims_of(&rest).iter().product();
            acc = linalg::kron(&acc, &linalg::ket_bra(n, 0, 0))?;
            order.extend(rest);
        }
        if order.len() != self.names.len() {
            return Err(Error::invalid("feature blocks overlap"));
        }
        if order.iter().enumerate().all(|(i, &o)| i == o) {
            return Ok(acc);
        }
        let current = SubsystemDims::new(self.dims_of(&order))?;
        let perm = linalg::inverse_permutation(&order);
        linalg::reorder_subsystems(&acc, &current, &perm)
    }
}

fn sorted(names: &[String]) -> Vec<String> {
    let mut v = names.to_vec();
    v.sort();
    v.dedup();
    v
}

/// `R(Π″_c ⊗ F_c)`: the category operator (on its features in canonical
/// order) expanded by `f_c` on every other feature of the space.
pub fn align_category(
    pi_cc: &ComplexMatrix,
    f_c: &ComplexMatrix,
    category_features: &[String],
    space: &FeatureSpace,
) -> Result<ComplexMatrix> {
    let own = space.indices(&sorted(category_features))?;
    let absent: Vec<usize> = (0..space.names.len()).filter(|i| !own.contains(i)).collect();
    space.place(&[(&own, pi_cc), (&absent, f_c)])
}

/// Similarity channel: the full category with ground states elsewhere.
pub fn category_similarity_operator(
    pi_cc: &ComplexMatrix,
    category_features: &[String],
    space: &FeatureSpace,
) -> Result<ComplexMatrix> {
    let own = space.indices(&sorted(category_features))?;
    space.place(&[(&own, pi_cc)])
}

/// Dissimilarity channel: the category truncated to the sensory features,
/// expanded by the external-feature operator on sensory-only features.
pub fn category_dissimilarity_operator(
    pi_cc: &ComplexMatrix,
    category_features: &[String],
    sensory_features: &[String],
    openness: OpennessParams,
    space: &FeatureSpace,
) -> Result<ComplexMatrix> {
    let cat = sorted(category_features);
    let own = space.indices(&cat)?;
    let keep_local: Vec<usize> = cat.iter().enumerate().filter(|(_, n)| sensory_features.contains(n)).map(|(i, _)| i).collect();
    let common: Vec<usize> = keep_local.iter().map(|&i| own[i]).collect();
    let truncated = if keep_local.len() == cat.len() {
        pi_cc.clone()
    } else if keep_local.is_empty() {
        ComplexMatrix::from_element(1, 1, linalg::trace(pi_cc))
    } else {
        linalg::partial_trace(pi_cc, &SubsystemDims::new(space.dims_of(&own))?, &keep_local)?
    };
    let sens = space.indices(&sorted(sensory_features))?;
    let exclusive: Vec<usize> = sens.iter().copied().filter(|i| !own.contains(i)).collect();
    let f = external_operator(openness.eta(), &space.dims_of(&exclusive));
    space.place(&[(&common, &truncated), (&exclusive, &f)])
}

/// Similarity or dissimilarity treatment of the sensory state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Similarity,
    Dissimilarity,
}

/// Expresses the sensory state (per-feature subsystems, in
/// `sensory_features` order) on the feature space.
pub fn transform_sensory(
    rho_sens: &DensityMatrix,
    sensory_features: &[String],
    category_features: &[String],
    channel: Channel,
    space: &FeatureSpace,
) -> Result<DensityMatrix> {
    if rho_sens.dims().len() != sensory_features.len() {
        return Err(Error::DimensionMismatch { expected: sensory_features.len(), found: rho_sens.dims().len() });
    }
    let sens = space.indices(sensory_features)?;
    let matrix = match channel {
        Channel::Dissimilarity => space.place(&[(&sens, rho_sens.matrix())])?,
        Channel::Similarity => {
            let keep: Vec<usize> = (0..sensory_features.len())
                .filter(|&i| category_features.contains(&sensory_features[i]))
                .collect();
            if keep.is_empty() {
                return Err(Error::invalid("similarity channel needs at least one feature shared with the category"));
            }
            let reduced = if keep.len() == sens.len() {
                rho_sens.matrix().clone()
            } else {
                linalg::partial_trace(rho_sens.matrix(), rho_sens.dims(), &keep)?
            };
            let idx: Vec<usize> = keep.iter().map(|&i| sens[i]).collect();
            space.place(&[(&idx, &reduced)])?
        }
    };
    Ok(DensityMatrix::trusted(matrix, space.subsystem_dims()))
}

/// Uniform mixture of the similarity-channel states over the categories
/// sharing at least one feature with the sensory input.
pub fn similarity_state(
    rho_sens: &DensityMatrix,
    sensory_features: &[String],
    categories: &[Vec<String>],
    space: &FeatureSpace,
) -> Result<DensityMatrix> {
    let mut acc = ComplexMatrix::zeros(space.total(), space.total());
    let mut count = 0usize;
    for features in categories {
        if !features.iter().any(|f| sensory_features.contains(f)) {
            continue;
        }
        acc += transform_sensory(rho_sens, sensory_features, features, Channel::Similarity, space)?.into_matrix();
        count += 1;
    }
    if count == 0 {
        return Err(Error::invalid("no category shares a feature with the sensory input"));
    }
    Ok(DensityMatrix::trusted(acc.unscale(count as f64), space.subsystem_dims()))
}

/// `w_sim · sim + w_diss · diss`.
pub fn mix_weighted(sim_weight: f64, diss_weight: f64, sim: &ComplexMatrix, diss: &ComplexMatrix) -> Result<ComplexMatrix> {
    if sim.shape() != diss.shape() {
        return Err(Error::DimensionMismatch { expected: sim.nrows(), found: diss.nrows() });
    }
    log::debug!("pre-mix traces: sim {:.6e}, diss {:.6e}", linalg::trace(sim).re, linalg::trace(diss).re);
    Ok(sim.scale(sim_weight) + diss.scale(diss_weight))
}

/// Mixes by the strategy weights of `outcome`.
pub fn mix_by_strategy(outcome: &StrategyOutcome, sim: &ComplexMatrix, diss: &ComplexMatrix) -> Result<ComplexMatrix> {
    mix_weighted(outcome.sim_weight, outcome.diss_weight, sim, diss)
}

/// Observer operator `Π_o ∝ √ρ Π″_o √ρ`, falling back to `Π″_o` when the
/// inherited state has no overlap with the template mixture.
pub fn observer_operator(pi_oo: &ComplexMatrix, observer_post: &DensityMatrix) -> Result<ComplexMatrix> {
    if pi_oo.shape() != observer_post.matrix().shape() {
        return Err(Error::DimensionMismatch { expected: observer_post.dim(), found: pi_oo.nrows() });
    }
    let s = linalg::psd_sqrt(observer_post.matrix())?;
    let x = &s * pi_oo * &s;
    let tr = linalg::trace(&x).re;
    if tr < TRACE_FLOOR {
        log::warn!("observer state has no overlap with the observer templates; using the template mixture");
        let t = linalg::trace(pi_oo).re;
        return Ok(pi_oo.unscale(t));
    }
    Ok(linalg::hermitian_part(&x.unscale(tr)))
}

/// Prior bias of one category and its conditional observer-state biases.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryBias {
    pub category: String,
    pub beta: f64,
    pub observers: Vec<(String, f64)>,
}

/// `β₀` and the factored biases `β_{c,o} = β_c β_{o|c}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasStructure {
    pub beta_0: f64,
    pub categories: Vec<CategoryBias>,
}

impl BiasStructure {
    pub fn pairs(&self) -> Vec<(String, String, f64)> {
        self.categories
            .iter()
            .flat_map(|c| c.observers.iter().map(move |(o, b)| (c.category.clone(), o.clone(), c.beta * b)))
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.beta_0 + self.pairs().iter().map(|p| p.2).sum::<f64>()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_0 > 0.0 && self.beta_0 < 1.0) {
            return Err(Error::invalid(format!("beta_0 must lie strictly between 0 and 1, got {}", self.beta_0)));
        }
        for c in &self.categories {
            if !(c.beta >= 0.0) {
                return Err(Error::invalid(format!("beta of category {} must be nonnegative", c.category)));
            }
            if c.observers.is_empty() {
                return Err(Error::invalid(format!("category {} lists no observer states", c.category)));
            }
            if let Some((o, _)) = c.observers.iter().find(|(_, b)| !(*b >= 0.0)) {
                return Err(Error::invalid(format!("beta of observer state {o} in category {} must be nonnegative", c.category)));
            }
        }
        let total = self.total();
        if (total - 1.0).abs() > BIAS_TOL {
            return Err(Error::invalid(format!(
                "bias weights must satisfy beta_0 + sum beta_c * beta_o|c = 1, got {total}"
            )));
        }
        Ok(())
    }
}

/// Optimal δ and whether the positivity constraint was active.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaSolution {
    pub delta: f64,
    pub constrained: bool,
    pub lambda_max: f64,
}

/// Minimizes `[Tr(I − δm) − δβ₀]²` subject to `I − δm ⪰ 0`.
pub fn solve_delta(m: &ComplexMatrix, beta_0: f64) -> Result<DeltaSolution> {
    let values = linalg::herm_eigenvalues(m)?;
    if values[0] < -PSD_TOL {
        return Err(Error::NotPsd { min_eigenvalue: values[0], tol: PSD_TOL });
    }
    delta_from_spectrum(m.nrows(), linalg::trace(m).re, beta_0, *values.last().expect("non-empty"))
}

fn delta_from_spectrum(dim: usize, trace: f64, beta_0: f64, lambda_max: f64) -> Result<DeltaSolution> {
    if (trace + beta_0 - 1.0).abs() > linalg::CLOSURE_TOL {
        return Err(Error::invalid(format!("Tr m + beta_0 = {} must equal 1", trace + beta_0)));
    }
    let free = dim as f64 / (trace + beta_0);
    if lambda_max <= 0.0 || free * lambda_max <= 1.0 {
        return Ok(DeltaSolution { delta: free, constrained: false, lambda_max });
    }
    Ok(DeltaSolution { delta: 1.0 / lambda_max, constrained: true, lambda_max })
}

/// Outcome label of the matching POVM.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IcmLabel {
    Null,
    Match { category: String, observer: String },
}

impl fmt::Display for IcmLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IcmLabel::Null => write!(f, "null"),
            IcmLabel::Match { category, observer } => write!(f, "{category}/{observer}"),
        }
    }
}

impl Serialize for IcmLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// One match element `δ β Π̂_c ⊗ Π̂_o`.
#[derive(Debug)]
pub struct MatchElement {
    pub category: String,
    pub observer: String,
    pub beta: f64,
    pub pi_c: ComplexMatrix,
    pub pi_o: ComplexMatrix,
    roots: OnceLock<(ComplexMatrix, ComplexMatrix)>,
}

impl Clone for MatchElement {
    fn clone(&self) -> Self {
        Self {
            category: self.category.clone(),
            observer: self.observer.clone(),
            beta: self.beta,
            pi_c: self.pi_c.clone(),
            pi_o: self.pi_o.clone(),
            roots: OnceLock::new(),
        }
    }
}

impl MatchElement {
    pub fn label(&self) -> IcmLabel {
        IcmLabel::Match { category: self.category.clone(), observer: self.observer.clone() }
    }

    /// `(√Π̂_c, √Π̂_o)`, computed once.
    pub fn roots(&self) -> Result<&(ComplexMatrix, ComplexMatrix)> {
        if let Some(r) = self.roots.get() {
            return Ok(r);
        }
        let r = (linalg::psd_sqrt(&self.pi_c)?, linalg::psd_sqrt(&self.pi_o)?);
        Ok(self.roots.get_or_init(|| r))
    }
}

/// Assembled matching POVM on `U ⊗ O`.
#[derive(Debug, Clone)]
pub struct IcmPovm {
    pub delta: DeltaSolution,
    pub beta_0: f64,
    pub elements: Vec<MatchElement>,
    sensory_dims: SubsystemDims,
    observer_dims: SubsystemDims,
    m: ComplexMatrix,
    null_root: OnceLock<ComplexMatrix>,
}

/// Builds the matching POVM from aligned category operators (on `U`),
/// observer operators (on `O`) and the bias structure.
pub fn assemble_icm_povm(
    categories: &[(String, ComplexMatrix)],
    observer_ops: &[(String, ComplexMatrix)],
    bias: &BiasStructure,
    sensory_dims: SubsystemDims,
    observer_dims: SubsystemDims,
) -> Result<IcmPovm> {
    bias.validate()?;
    let (du, dobs) = (sensory_dims.total(), observer_dims.total());
    let normalize = |name: &str, m: &ComplexMatrix, n: usize| -> Result<ComplexMatrix> {
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::invalid(format!("operator {name} must be {n}x{n}, got {}x{}", m.nrows(), m.ncols())));
        }
        let tr = linalg::trace(m).re;
        if tr < TRACE_FLOOR {
            return Err(Error::invalid(format!("operator {name} has vanishing trace {tr}")));
        }
        Ok(m.unscale(tr))
    };
    let mut elements = Vec::new();
    let mut m = ComplexMatrix::zeros(du * dobs, du * dobs);
    for (c, o, beta) in bias.pairs() {
        let pc = categories.iter().find(|(n, _)| *n == c).ok_or_else(|| Error::invalid(format!("no operator for category {c}")))?;
        let po = observer_ops.iter().find(|(n, _)| *n == o).ok_or_else(|| Error::invalid(format!("no operator for observer state {o}")))?;
        let pi_c = normalize(&c, &pc.1, du)?;
        let pi_o = normalize(&o, &po.1, dobs)?;
        m += linalg::kron(&pi_c, &pi_o)?.scale(beta);
        elements.push(MatchElement { category: c, observer: o, beta, pi_c, pi_o, roots: OnceLock::new() });
    }
    let m = linalg::hermitian_part(&m);
    let delta = solve_delta(&m, bias.beta_0)?;
    let min_null = 1.0 - delta.delta * delta.lambda_max;
    if min_null < -PSD_TOL {
        return Err(Error::NotPsd { min_eigenvalue: min_null, tol: PSD_TOL });
    }
    if delta.constrained {
        log::warn!(
            "delta constrained by positivity (delta = {:.6}, lambda_max = {:.6}); the null element has a zero eigenvalue",
            delta.delta,
            delta.lambda_max
        );
    }
    Ok(IcmPovm { delta, beta_0: bias.beta_0, elements, sensory_dims, observer_dims, m, null_root: OnceLock::new() })
}

impl IcmPovm {
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn sensory_dims(&self) -> &SubsystemDims {
        &self.sensory_dims
    }

    pub fn observer_dims(&self) -> &SubsystemDims {
        &self.observer_dims
    }

    /// Null label first, then matches in bias order.
    pub fn labels(&self) -> Vec<IcmLabel> {
        std::iter::once(IcmLabel::Null).chain(self.elements.iter().map(MatchElement::label)).collect()
    }

    /// `δ β_{c,o}`, or `δ β₀` for the null label.
    pub fn weight(&self, index: usize) -> f64 {
        if index == 0 {
            self.delta.delta * self.beta_0
        } else {
            self.delta.delta * self.elements[index - 1].beta
        }
    }

    pub fn null_element(&self) -> ComplexMatrix {
        linalg::identity(self.dim()) - self.m.scale(self.delta.delta)
    }

    pub fn match_element(&self, index: usize) -> Result<ComplexMatrix> {
        let e = &self.elements[index];
        Ok(linalg::kron(&e.pi_c, &e.pi_o)?.scale(self.delta.delta * e.beta))
    }

    /// Element for the label at `index` in [`IcmPovm::labels`] order.
    pub fn element(&self, index: usize) -> Result<ComplexMatrix> {
        if index == 0 {
            Ok(self.null_element())
        } else {
            self.match_element(index - 1)
        }
    }

    /// `√Π₀`, computed once.
    pub fn null_root(&self) -> Result<&ComplexMatrix> {
        if let Some(r) = self.null_root.get() {
            return Ok(r);
        }
        let r = linalg::psd_sqrt(&self.null_element())?;
        Ok(self.null_root.get_or_init(|| r))
    }

    /// Dense POVM with closure verified.
    pub fn to_povm_set(&self) -> Result<PovmSet<IcmLabel>> {
        let labels = self.labels();
        let mut elements = Vec::with_capacity(labels.len());
        for (i, l) in labels.into_iter().enumerate() {
            elements.push((l, self.element(i)?));
        }
        PovmSet::closed(elements)
    }
}
