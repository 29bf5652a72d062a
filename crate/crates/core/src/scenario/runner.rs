//! Trial pipeline and Monte-Carlo aggregation.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{category_spec, LocalOp, OperatorRef, ScenarioConfig, TemplateMode, Violation};
use super::output::{config_hash, round_sig};
use super::{ScenarioError, Stage, StageExt};
use crate::encoding::{oscillator_hamiltonian, pure_state, product_amplitudes, DensityMatrix, HilbertLayout, Oscillator, Owner};
use crate::error::Error;
use crate::icm::{
    assemble_icm_povm, category_dissimilarity_operator, category_similarity_operator, mix_by_strategy, mix_weighted,
    observer_operator, similarity_state, transform_sensory, BiasStructure, CategoryBias, Channel, FeatureSpace, IcmPovm,
    OpennessParams,
};
use crate::lindblad::{sample_duration, Evolver, InteractionTerm, LindbladModel};
use crate::linalg::{self, ComplexMatrix, ComplexVector, SubsystemDims, C64};
use crate::measurement::{born_probabilities_product, extract_subsystem, icm_update_product, inverse_cdf, sample_index, Part};
use crate::oracle::{self, Superoperator};
use crate::povm::PovmSet;
use crate::strategy::{build_strategy_povm_for, default_sdm_state, strategy_probabilities, strategy_update, StrategyLabel, StrategyOutcome};
use crate::templates::{make_category_operator, CategorySpec};

/// Name of the random generator recorded in every summary.
pub const GENERATOR: &str = "ChaCha20Rng";
const STREAMS: &str = "seed_from_u64(seed); stream 0 draws per-run templates, trial i uses stream i + 1";
/// Allowed gap between fast and exact evolution in oracle-check mode.
const ORACLE_TOL: f64 = 1e-6;

fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Strategy outcome together with the matching POVM it induces.
#[derive(Debug, Clone)]
pub struct Branch {
    pub outcome: StrategyOutcome,
    pub povm: IcmPovm,
}

/// Sampled `Π″` for each category and observer state, in config order.
struct Operators {
    categories: Vec<ComplexMatrix>,
    observers: Vec<ComplexMatrix>,
}

/// Everything that does not change between trials.
#[derive(Debug)]
pub struct Scenario {
    config: ScenarioConfig,
    layout: HilbertLayout,
    model: LindbladModel,
    evolver: Evolver,
    exact: Option<Superoperator>,
    rho_sens_0: DensityMatrix,
    feature_dims: SubsystemDims,
    sensory_names: Vec<String>,
    category_features: Vec<Vec<String>>,
    space: FeatureSpace,
    openness: OpennessParams,
    bias: BiasStructure,
    sdm_state: DensityMatrix,
    observer_factors: DensityMatrix,
    strategy_povm: PovmSet<StrategyLabel>,
    strategy_probs: Vec<(StrategyLabel, f64)>,
    category_specs: Vec<CategorySpec>,
    observer_specs: Vec<CategorySpec>,
    branches: Vec<Option<Branch>>,
    labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub stream: u64,
    pub duration: f64,
    pub strategy: StrategyLabel,
    pub strategy_probability: f64,
    pub sim_weight: f64,
    pub diss_weight: f64,
    pub delta: f64,
    pub delta_constrained: bool,
    pub outcome: String,
    /// In the order of [`RunSummary::labels`].
    pub probabilities: Vec<f64>,
    pub raw_total: f64,
    pub purity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_deviation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensory_state: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer_state: Option<Vec<Vec<[f64; 2]>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.collect();
        let n = v.len().max(1) as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub generator: String,
    pub seed: u64,
    pub streams: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub trials: usize,
    pub labels: Vec<String>,
    pub counts: Vec<u64>,
    pub frequencies: Vec<f64>,
    pub mean_probabilities: Vec<f64>,
    /// Empirical frequencies of the two strategy outcomes.
    pub strategy_frequencies: [f64; 2],
    pub delta: Stats,
    pub delta_constrained_fraction: f64,
    pub sim_weight: Stats,
    pub duration: Stats,
    pub purity: Stats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_oracle_deviation: Option<f64>,
    pub wall_clock_seconds: f64,
    pub provenance: Provenance,
}

impl RunSummary {
    pub fn from_records(records: &[TrialRecord], labels: Vec<String>, provenance: Provenance, wall_clock_seconds: f64) -> Self {
        let n = records.len().max(1) as f64;
        let mut counts = vec![0u64; labels.len()];
        let mut mean = vec![0.0; labels.len()];
        let mut lambda1 = 0usize;
        for r in records {
            if let Some(i) = labels.iter().position(|l| *l == r.outcome) {
                counts[i] += 1;
            }
            for (m, p) in mean.iter_mut().zip(&r.probabilities) {
                *m += p;
            }
            lambda1 += usize::from(r.strategy == StrategyLabel::Lambda1);
        }
        let oracle = records.iter().filter_map(|r| r.oracle_deviation).fold(None, |a: Option<f64>, x| Some(a.map_or(x, |a| a.max(x))));
        Self {
            trials: records.len(),
            frequencies: counts.iter().map(|&c| round_sig(c as f64 / n, 12)).collect(),
            counts,
            mean_probabilities: mean.into_iter().map(|m| round_sig(m / n, 12)).collect(),
            labels,
            strategy_frequencies: [lambda1 as f64 / n, (records.len() - lambda1) as f64 / n],
            delta: Stats::of(records.iter().map(|r| r.delta)),
            delta_constrained_fraction: records.iter().filter(|r| r.delta_constrained).count() as f64 / n,
            sim_weight: Stats::of(records.iter().map(|r| r.sim_weight)),
            duration: Stats::of(records.iter().map(|r| r.duration)),
            purity: Stats::of(records.iter().map(|r| r.purity)),
            max_oracle_deviation: oracle,
            wall_clock_seconds,
            provenance,
        }
    }
}

/// Summary plus every trial record.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub records: Vec<TrialRecord>,
}

/// Prepares the scenario and runs `config.run.trials` trials.
pub fn run_monte_carlo(config: &ScenarioConfig) -> Result<RunOutput, ScenarioError> {
    let start = Instant::now();
    let scenario = Scenario::prepare(config)?;
    let records = scenario.run_trials(config.run.trials)?;
    let summary = RunSummary::from_records(&records, scenario.labels().to_vec(), scenario.provenance(), start.elapsed().as_secs_f64());
    Ok(RunOutput { summary, records })
}

fn invalid(path: &str, message: &str) -> ScenarioError {
    ScenarioError::Invalid(vec![Violation { path: path.into(), message: message.into() }])
}

fn local_op(op: LocalOp, n: usize) -> ComplexMatrix {
    let lower = ComplexMatrix::from_fn(n, n, |i, j| if j == i + 1 { C64::new((j as f64).sqrt(), 0.0) } else { C64::new(0.0, 0.0) });
    match op {
        LocalOp::Lowering => lower,
        LocalOp::Raising => lower.adjoint(),
        LocalOp::Number => linalg::diag_real(&(0..n).map(|m| m as f64).collect::<Vec<_>>()),
        LocalOp::Position => &lower + lower.adjoint(),
    }
}

/// `I ⊗ … ⊗ op ⊗ … ⊗ I` on the given oscillator list.
fn embed(oscillators: &[Oscillator], r: &OperatorRef) -> crate::Result<ComplexMatrix> {
    let k = oscillators
        .iter()
        .position(|o| o.label() == r.oscillator)
        .ok_or_else(|| Error::invalid(format!("unknown oscillator '{}'", r.oscillator)))?;
    let before: usize = oscillators[..k].iter().map(|o| o.dim).product();
    let after: usize = oscillators[k + 1..].iter().map(|o| o.dim).product();
    let m = linalg::kron(&linalg::identity(before), &local_op(r.op, oscillators[k].dim))?;
    linalg::kron(&m, &linalg::identity(after))
}

fn hamiltonian(oscillators: &[Oscillator]) -> crate::Result<ComplexMatrix> {
    let freqs: Vec<f64> = oscillators.iter().map(|o| o.frequency).collect();
    let levels: Vec<usize> = oscillators.iter().map(|o| o.dim).collect();
    oscillator_hamiltonian(&freqs, &levels)
}

fn matrix_rows(m: &ComplexMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

impl Scenario {
    /// Validates the config and builds all per-run objects.
    pub fn prepare(config: &ScenarioConfig) -> Result<Self, ScenarioError> {
        config.check()?;
        if config.sweep.is_some() {
            return Err(invalid("sweep", "expand sweep points before preparing a scenario"));
        }
        if config.run.layout_only {
            return Err(invalid("run.layout_only", "layout-only configs describe dimensions only and cannot be run"));
        }
        let (Some(strategy), Some(icm), Some(state)) = (&config.strategy, &config.icm, &config.sensory.state) else {
            return Err(invalid("strategy", "strategy, icm and sensory.state sections are required"));
        };
        let layout = config.layout().stage(Stage::Encode)?;
        let sens_osc = layout.sensory_oscillators();
        let obs_osc = layout.observer_oscillators();

        let parts: Vec<ComplexVector> = match (&state.levels, &state.amplitudes) {
            (Some(levels), _) => levels
                .iter()
                .zip(sens_osc)
                .map(|(&m, o)| {
                    let mut v = ComplexVector::zeros(o.dim);
                    v[m] = C64::new(1.0, 0.0);
                    v
                })
                .collect(),
            (None, Some(amps)) => amps.iter().map(|a| ComplexVector::from_iterator(a.len(), a.iter().map(|&x| C64::new(x, 0.0)))).collect(),
            (None, None) => unreachable!("validated"),
        };
        let psi = product_amplitudes(&parts).stage(Stage::Encode)?;
        let rho_sens_0 = pure_state(&psi, layout.sensory_dims()).stage(Stage::Encode)?;

        let mut terms = Vec::new();
        for t in &config.dynamics.interactions {
            let term = InteractionTerm::new(
                C64::new(t.g[0], t.g[1]),
                embed(sens_osc, &t.system).stage(Stage::Encode)?,
                embed(obs_osc, &t.observer).stage(Stage::Encode)?,
            );
            if t.conjugate {
                terms.push(term.conjugate());
            }
            terms.push(term);
        }
        let model = LindbladModel::new(
            hamiltonian(sens_osc).stage(Stage::Encode)?,
            hamiltonian(obs_osc).stage(Stage::Encode)?,
            terms,
            config.observer.temperature,
            config.dynamics.tau_corr,
            config.run.gibbs_sign,
        )
        .stage(Stage::Encode)?;
        let evolver = Evolver::new(&model).stage(Stage::Evolve)?;
        let exact = if config.run.oracle_check { Some(oracle::liouvillian_matrix(&model).stage(Stage::Oracle)?) } else { None };

        let feature_dims =
            SubsystemDims::new(layout.sensory_features().iter().map(|f| f.dim()).collect::<crate::Result<Vec<_>>>().stage(Stage::Encode)?)
                .stage(Stage::Encode)?;
        let sensory_names: Vec<String> = layout.sensory_features().iter().map(|f| f.name.clone()).collect();
        let space = FeatureSpace::new(config.feature_dims()).stage(Stage::Align)?;
        let openness = OpennessParams::new(icm.eta).stage(Stage::Align)?;

        // strategy factors: the top-level oscillator of each polarity feature
        let mut keep = Vec::new();
        let mut polarities = Vec::new();
        for (f, p) in config.polarity_features() {
            let range = layout.observer_feature_range(&f.name).ok_or_else(|| invalid("observer.features", "polarity feature missing from layout"))?;
            keep.push(range.end - 1);
            polarities.push(p);
        }
        let observer_factors = model
            .rho_obs_0()
            .clone()
            .with_dims(layout.observer_dims())
            .and_then(|r| r.reduce(&keep))
            .stage(Stage::Strategy)?;
        let sdm_state = match strategy.sdm_state {
            Some(a) => pure_state(&ComplexVector::from_vec(vec![C64::new(a[0], 0.0), C64::new(a[1], 0.0)]), SubsystemDims::new(vec![2]).stage(Stage::Strategy)?)
                .stage(Stage::Strategy)?,
            None => default_sdm_state(),
        };
        let strategy_povm = build_strategy_povm_for(strategy.epsilon, strategy.k, &polarities).stage(Stage::Strategy)?;
        let strategy_probs = strategy_probabilities(&sdm_state, &observer_factors, &strategy_povm).stage(Stage::Strategy)?;

        let spec_err = |e: String| ScenarioError::Stage { stage: Stage::Templates, trial: None, source: Error::invalid(e) };
        let dims = config.feature_dims();
        let mut category_specs = Vec::new();
        let mut category_features = Vec::new();
        for c in &config.categories {
            let mut feats = c.features.clone();
            feats.sort();
            let dim: usize = feats.iter().map(|f| dims.iter().find(|d| d.0 == *f).map_or(1, |d| d.1)).product();
            let proto = c.prototype.to_vector(dim).ok_or_else(|| invalid("categories", "malformed prototype"))?;
            category_specs.push(category_spec(&c.name, proto, feats, &c.sampling).map_err(spec_err)?);
            category_features.push(c.features.clone());
        }
        let obs_dim = 1usize << polarities.len();
        let mut observer_specs = Vec::new();
        for o in &config.observer_states {
            let proto = o.prototype.to_vector(obs_dim).ok_or_else(|| invalid("observer_states", "malformed prototype"))?;
            observer_specs.push(category_spec(&o.name, proto, Vec::new(), &o.sampling).map_err(spec_err)?);
        }
        let bias = BiasStructure {
            beta_0: icm.beta_0,
            categories: config
                .categories
                .iter()
                .map(|c| CategoryBias {
                    category: c.name.clone(),
                    beta: c.beta,
                    observers: c.observers.iter().map(|o| (o.state.clone(), o.beta)).collect(),
                })
                .collect(),
        };
        let labels = std::iter::once("null".to_string()).chain(bias.pairs().into_iter().map(|(c, o, _)| format!("{c}/{o}"))).collect();

        let mut scenario = Self {
            config: config.clone(),
            layout,
            model,
            evolver,
            exact,
            rho_sens_0,
            feature_dims,
            sensory_names,
            category_features,
            space,
            openness,
            bias,
            sdm_state,
            observer_factors,
            strategy_povm,
            strategy_probs,
            category_specs,
            observer_specs,
            branches: Vec::new(),
            labels,
        };
        if config.run.templates == TemplateMode::PerRun {
            let ops = scenario.sample_operators(&mut stream_rng(config.run.seed, 0))?;
            let mut branches = Vec::new();
            for &(label, p) in &scenario.strategy_probs {
                branches.push(if p > 1e-12 { Some(scenario.branch(label, &ops)?) } else { None });
            }
            scenario.branches = branches;
        }
        Ok(scenario)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn layout(&self) -> &HilbertLayout {
        &self.layout
    }

    pub fn model(&self) -> &LindbladModel {
        &self.model
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn strategy_povm(&self) -> &PovmSet<StrategyLabel> {
        &self.strategy_povm
    }

    pub fn strategy_probabilities(&self) -> &[(StrategyLabel, f64)] {
        &self.strategy_probs
    }

    /// Per-run branches (empty in per-trial template mode); `None` marks a
    /// strategy outcome of zero probability.
    pub fn branches(&self) -> &[Option<Branch>] {
        &self.branches
    }

    pub fn feature_space(&self) -> &FeatureSpace {
        &self.space
    }

    /// Reduced initial observer state on the strategy factors.
    pub fn observer_factors(&self) -> &DensityMatrix {
        &self.observer_factors
    }

    pub fn initial_sensory_state(&self) -> &DensityMatrix {
        &self.rho_sens_0
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            config_hash: config_hash(&self.config),
            generator: GENERATOR.into(),
            seed: self.config.run.seed,
            streams: STREAMS.into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    fn sample_operators<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Operators, ScenarioError> {
        let mut draw = |specs: &[CategorySpec]| -> Result<Vec<ComplexMatrix>, ScenarioError> {
            specs.iter().map(|s| make_category_operator(s, rng).map(|c| c.matrix).stage(Stage::Templates)).collect()
        };
        Ok(Operators { categories: draw(&self.category_specs)?, observers: draw(&self.observer_specs)? })
    }

    fn branch(&self, label: StrategyLabel, ops: &Operators) -> Result<Branch, ScenarioError> {
        let outcome = strategy_update(&self.sdm_state, &self.observer_factors, &self.strategy_povm, label).stage(Stage::Strategy)?;
        let mut categories = Vec::new();
        for ((spec, feats), pi) in self.category_specs.iter().zip(&self.category_features).zip(&ops.categories) {
            let sim = category_similarity_operator(pi, feats, &self.space).stage(Stage::Align)?;
            let diss = category_dissimilarity_operator(pi, feats, &self.sensory_names, self.openness, &self.space).stage(Stage::Align)?;
            log::debug!(
                "category {}: similarity trace {:.6}, dissimilarity trace {:.6}",
                spec.name,
                linalg::trace(&sim).re,
                linalg::trace(&diss).re
            );
            categories.push((spec.name.clone(), mix_by_strategy(&outcome, &sim, &diss).stage(Stage::Align)?));
        }
        let mut observers = Vec::new();
        for (spec, pi) in self.observer_specs.iter().zip(&ops.observers) {
            observers.push((spec.name.clone(), observer_operator(pi, &outcome.observer_post).stage(Stage::Icm)?));
        }
        let obs_dims = outcome.observer_post.dims().clone();
        let povm = assemble_icm_povm(&categories, &observers, &self.bias, self.space.subsystem_dims(), obs_dims).stage(Stage::Icm)?;
        Ok(Branch { outcome, povm })
    }

    /// `ρ′_sens`: strategy-weighted mix of the similarity and
    /// dissimilarity views of the sensory state on the feature space.
    pub fn sensory_prime(&self, rho_sens: &DensityMatrix, outcome: &StrategyOutcome) -> crate::Result<ComplexMatrix> {
        let rho = DensityMatrix::trusted(rho_sens.matrix().clone(), self.feature_dims.clone());
        let n = self.space.total();
        let sim = if outcome.sim_weight > 0.0 {
            similarity_state(&rho, &self.sensory_names, &self.category_features, &self.space)?.into_matrix()
        } else {
            ComplexMatrix::zeros(n, n)
        };
        let diss = if outcome.diss_weight > 0.0 {
            transform_sensory(&rho, &self.sensory_names, &[], Channel::Dissimilarity, &self.space)?.into_matrix()
        } else {
            ComplexMatrix::zeros(n, n)
        };
        let mixed = mix_weighted(outcome.sim_weight, outcome.diss_weight, &sim, &diss)?;
        let tr = linalg::trace(&mixed).re;
        if tr <= 0.0 {
            return Err(Error::TraceNotUnit { trace: tr, tol: linalg::CLOSURE_TOL });
        }
        Ok(mixed.unscale(tr))
    }

    pub fn run_trials(&self, trials: usize) -> Result<Vec<TrialRecord>, ScenarioError> {
        (0..trials).into_par_iter().map(|i| self.run_trial(i)).collect()
    }

    /// One pass through the pipeline on the substream of trial `index`.
    pub fn run_trial(&self, index: usize) -> Result<TrialRecord, ScenarioError> {
        self.trial_inner(index).map_err(|e| match e {
            ScenarioError::Stage { stage, source, .. } => ScenarioError::Stage { stage, trial: Some(index), source },
            other => other,
        })
    }

    fn trial_inner(&self, index: usize) -> Result<TrialRecord, ScenarioError> {
        let stream = index as u64 + 1;
        let mut rng = stream_rng(self.config.run.seed, stream);
        let duration = sample_duration(self.config.dynamics.lambda_mean, &mut rng).stage(Stage::Duration)?;
        let evolved = self.evolver.evolve(&self.rho_sens_0, duration).stage(Stage::Evolve)?;
        let oracle_deviation = match &self.exact {
            Some(l) => {
                let prop = linalg::matrix_exp(&l.matrix.scale(duration)).stage(Stage::Oracle)?;
                let exact = oracle::unvectorize(&(prop * oracle::vectorize(self.rho_sens_0.matrix())), l.dim);
                let dev = linalg::frobenius_norm(&(exact - evolved.matrix()));
                if dev > ORACLE_TOL {
                    return Err(ScenarioError::Stage {
                        stage: Stage::Oracle,
                        trial: None,
                        source: Error::invalid(format!("fast and exact evolution differ by {dev:e} (tolerance {ORACLE_TOL:e})")),
                    });
                }
                Some(dev)
            }
            None => None,
        };

        let weights: Vec<f64> = self.strategy_probs.iter().map(|p| p.1).collect();
        let s = inverse_cdf(&weights, rng.random::<f64>());
        let (label, strategy_probability) = self.strategy_probs[s];
        let owned;
        let branch = match self.config.run.templates {
            TemplateMode::PerRun => self.branches[s].as_ref().ok_or_else(|| ScenarioError::Stage {
                stage: Stage::Strategy,
                trial: None,
                source: Error::ZeroProbability { probability: strategy_probability },
            })?,
            TemplateMode::PerTrial => {
                let ops = self.sample_operators(&mut rng)?;
                owned = self.branch(label, &ops)?;
                &owned
            }
        };

        let rho_prime = self.sensory_prime(&evolved, &branch.outcome).stage(Stage::Align)?;
        let obs = self.observer_factors.matrix();
        let dist = born_probabilities_product(&branch.povm, &rho_prime, obs, self.config.run.born_mode).stage(Stage::Born)?;
        let idx = sample_index(&dist, &mut rng);
        let purity = post_purity(&branch.povm, idx, &rho_prime, obs).stage(Stage::Kraus)?;
        let d = branch.povm.dim() as f64;
        if !(purity >= 1.0 / d - 1e-9 && purity <= 1.0 + 1e-9) {
            return Err(ScenarioError::Stage {
                stage: Stage::Kraus,
                trial: None,
                source: Error::invalid(format!("post-measurement purity {purity} outside [1/{d}, 1]")),
            });
        }
        let (sensory_state, observer_state) = if self.config.run.record_states {
            let post = icm_update_product(&branch.povm, idx, &rho_prime, obs).stage(Stage::Kraus)?;
            let n = branch.povm.sensory_dims().len();
            let s = extract_subsystem(&post, Part::Sensory, n).stage(Stage::Extract)?;
            let o = extract_subsystem(&post, Part::Observer, n).stage(Stage::Extract)?;
            (Some(matrix_rows(s.matrix())), Some(matrix_rows(o.matrix())))
        } else {
            (None, None)
        };

        Ok(TrialRecord {
            trial: index,
            stream,
            duration,
            strategy: label,
            strategy_probability,
            sim_weight: branch.outcome.sim_weight,
            diss_weight: branch.outcome.diss_weight,
            delta: branch.povm.delta.delta,
            delta_constrained: branch.povm.delta.constrained,
            outcome: dist.labels[idx].to_string(),
            probabilities: dist.probabilities.iter().map(|&p| round_sig(p, 12)).collect(),
            raw_total: dist.raw_total,
            purity,
            oracle_deviation,
            sensory_state,
            observer_state,
        })
    }
}

/// Purity of the post-measurement state without forming `U ⊗ O` matrices.
///
/// For a match `A ⊗ B`: `Tr(ASAS)Tr(BOBO) / (Tr(AS)Tr(BO))²`. For the null
/// element `Π₀ = I − δm`: `Tr(Π₀ρΠ₀ρ) / Tr(Π₀ρ)²` expanded over the
/// product terms of `m`.
fn post_purity(povm: &IcmPovm, index: usize, s: &ComplexMatrix, o: &ComplexMatrix) -> crate::Result<f64> {
    let tp = |a: &ComplexMatrix, b: &ComplexMatrix| linalg::trace_of_product(a, b).re;
    if index > 0 {
        let e = &povm.elements[index - 1];
        let (xs, xo) = (&e.pi_c * s, &e.pi_o * o);
        let p = linalg::trace(&xs).re * linalg::trace(&xo).re;
        if p <= 1e-12 {
            return Err(Error::ZeroProbability { probability: p });
        }
        return Ok(tp(&xs, &xs) * tp(&xo, &xo) / (p * p));
    }
    let delta = povm.delta.delta;
    let xs: Vec<ComplexMatrix> = povm.elements.iter().map(|e| &e.pi_c * s).collect();
    let xo: Vec<ComplexMatrix> = povm.elements.iter().map(|e| &e.pi_o * o).collect();
    let mut p0 = linalg::trace(s).re * linalg::trace(o).re;
    let mut cross = 0.0;
    let mut quad = 0.0;
    for (i, ei) in povm.elements.iter().enumerate() {
        p0 -= delta * ei.beta * linalg::trace(&xs[i]).re * linalg::trace(&xo[i]).re;
        cross += ei.beta * tp(&xs[i], s) * tp(&xo[i], o);
        for (j, ej) in povm.elements.iter().enumerate() {
            quad += ei.beta * ej.beta * tp(&xs[i], &xs[j]) * tp(&xo[i], &xo[j]);
        }
    }
    if p0 <= 1e-12 {
        return Err(Error::ZeroProbability { probability: p0 });
    }
    let num = tp(s, s) * tp(o, o) - 2.0 * delta * cross + delta * delta * quad;
    Ok(num / (p0 * p0))
}

/// Integer dimension arithmetic for a config; never builds a matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimsReport {
    pub sensory_dim: usize,
    pub observer_dim: usize,
    pub sensory_features: Vec<(String, usize)>,
    pub observer_features: Vec<(String, usize)>,
    pub sensory_oscillators: usize,
    pub observer_oscillators: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matching_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy_observer_dim: Option<usize>,
}

pub fn dims_report(config: &ScenarioConfig) -> Result<DimsReport, ScenarioError> {
    let layout = config.layout().map_err(|e| invalid("sensory", &e.to_string()))?;
    let pol = config.polarity_features().len();
    let matching = config.icm.as_ref().map(|_| config.feature_dims().iter().map(|d| d.1).product());
    Ok(DimsReport {
        sensory_dim: layout.sensory_dim(),
        observer_dim: layout.observer_dim(),
        sensory_features: layout.sensory_features().iter().map(|f| (f.name.clone(), f.dim().unwrap_or(0))).collect(),
        observer_features: layout.observer_features().iter().map(|f| (f.name.clone(), f.dim().unwrap_or(0))).collect(),
        sensory_oscillators: layout.factors().iter().filter(|o| o.owner == Owner::Sensory).count(),
        observer_oscillators: layout.factors().iter().filter(|o| o.owner == Owner::Observer).count(),
        matching_dim: matching,
        strategy_observer_dim: (pol > 0).then(|| 1usize << pol),
    })
}
