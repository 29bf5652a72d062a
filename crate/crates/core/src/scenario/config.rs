//! Declarative scenario description (TOML) and its validation.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ScenarioError;
use crate::encoding::{build_layout, FeatureSpec, GibbsSign, HilbertLayout, ObserverFeatureSpec};
use crate::icm::BIAS_TOL;
use crate::measurement::BornMode;
use crate::strategy::Polarity;
use crate::templates::{CategorySpec, Covariance};

/// Largest sensory or observer dimension that may be evolved with dissipation.
pub const MAX_EVOLVED_DIM: usize = 64;
/// Largest `U ⊗ O` dimension for which the matching POVM is built.
pub const MAX_COMPOSITE_DIM: usize = 1024;
/// Largest sensory dimension accepted by the exact-exponential check.
pub const MAX_ORACLE_DIM: usize = crate::oracle::MAX_ORACLE_DIM;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub run: RunSection,
    pub sensory: SensorySection,
    pub observer: ObserverSection,
    #[serde(default)]
    pub dynamics: DynamicsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<StrategySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub icm: Option<IcmSection>,
    #[serde(default)]
    pub categories: Vec<CategoryConfig>,
    #[serde(default)]
    pub observer_states: Vec<ObserverStateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateMode {
    /// Category and observer operators drawn once per run.
    #[default]
    PerRun,
    /// Fresh operators for every trial.
    PerTrial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub trials: usize,
    pub seed: u64,
    pub gibbs_sign: GibbsSign,
    pub born_mode: BornMode,
    pub oracle_check: bool,
    pub layout_only: bool,
    pub templates: TemplateMode,
    pub record_states: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            trials: 1000,
            seed: 0,
            gibbs_sign: GibbsSign::Minus,
            born_mode: BornMode::Closure,
            oracle_check: false,
            layout_only: false,
            templates: TemplateMode::PerRun,
            record_states: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorySection {
    pub features: Vec<FeatureSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<SensoryState>,
}

/// Initial sensory product state: either one relevance level per
/// oscillator or one (real) amplitude vector per oscillator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensoryState {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverSection {
    pub features: Vec<ObserverFeatureConfig>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

fn default_temperature() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverFeatureConfig {
    pub name: String,
    pub levels: usize,
    pub relevance_levels: usize,
    pub frequency: f64,
    /// Marks the feature as a factor of the strategy measurement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polarity: Option<Polarity>,
}

impl ObserverFeatureConfig {
    pub fn spec(&self) -> ObserverFeatureSpec {
        ObserverFeatureSpec {
            name: self.name.clone(),
            levels: self.levels,
            relevance_levels: self.relevance_levels,
            frequency: self.frequency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsSection {
    pub tau_corr: f64,
    pub lambda_mean: f64,
    pub interactions: Vec<InteractionConfig>,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self { tau_corr: 0.1, lambda_mean: 1.0, interactions: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocalOp {
    Lowering,
    Raising,
    Number,
    Position,
}

impl LocalOp {
    fn adjoint(self) -> Self {
        match self {
            LocalOp::Lowering => LocalOp::Raising,
            LocalOp::Raising => LocalOp::Lowering,
            other => other,
        }
    }

    fn is_hermitian(self) -> bool {
        matches!(self, LocalOp::Number | LocalOp::Position)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorRef {
    /// Oscillator label, `feature/attribute/truth` or `feature/level`.
    pub oscillator: String,
    pub op: LocalOp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionConfig {
    /// Coupling as `[re, im]`.
    pub g: [f64; 2],
    pub system: OperatorRef,
    pub observer: OperatorRef,
    /// Also add the Hermitian-conjugate term.
    #[serde(default = "yes")]
    pub conjugate: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySection {
    pub epsilon: f64,
    #[serde(default = "default_k")]
    pub k: f64,
    /// Real amplitudes of the strategy qubit; `|+⟩` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sdm_state: Option<[f64; 2]>,
}

fn default_k() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcmSection {
    pub eta: f64,
    pub beta_0: f64,
    /// Features known only to categories.
    #[serde(default)]
    pub extra_features: Vec<ExtraFeature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtraFeature {
    pub name: String,
    pub dim: usize,
}

/// A basis vector or explicit real amplitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<f64>>,
}

/// Template sampling parameters shared by categories and observer states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling {
    #[serde(default = "one")]
    pub templates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weight_mean: Vec<f64>,
    #[serde(default)]
    pub weight_sigma: f64,
}

fn one() -> usize {
    1
}

impl Default for Sampling {
    fn default() -> Self {
        Self { templates: 1, sigma: None, covariance: None, weight_mean: Vec::new(), weight_sigma: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryConfig {
    pub name: String,
    pub features: Vec<String>,
    pub prototype: VectorSpec,
    #[serde(default)]
    pub sampling: Sampling,
    pub beta: f64,
    pub observers: Vec<ObserverBias>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverBias {
    pub state: String,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverStateConfig {
    pub name: String,
    pub prototype: VectorSpec,
    #[serde(default)]
    pub sampling: Sampling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    Eta,
    Epsilon,
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParameter::Eta => "eta",
            SweepParameter::Epsilon => "epsilon",
        })
    }
}

/// Runs the scenario once per listed value of one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

/// One validation failure with the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Reads, parses and validates a scenario file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
    let cfg = parse_config(&text)?;
    cfg.check()?;
    Ok(cfg)
}

/// Parses without validating.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
}

struct Report(Vec<Violation>);

impl Report {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Violation { path: path.into(), message: message.into() });
    }

    fn check(&mut self, ok: bool, path: impl Into<String>, message: impl Into<String>) {
        if !ok {
            self.push(path, message);
        }
    }
}

impl ScenarioConfig {
    /// Every violation, for the base config and each sweep point.
    pub fn validate(&self) -> Vec<Violation> {
        let points = self.sweep_points();
        let mut out = self.validate_point();
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                out.push(Violation { path: "sweep.values".into(), message: "must list at least one value".into() });
            }
            for (i, (_, cfg)) in points.iter().enumerate() {
                for v in cfg.validate_point() {
                    let tagged = Violation { path: format!("sweep.values[{i}] -> {}", v.path), message: v.message };
                    if !out.iter().any(|o| o.path == v.path && o.message == tagged.message) {
                        out.push(tagged);
                    }
                }
            }
        }
        out
    }

    /// `Ok` or every violation at once.
    pub fn check(&self) -> Result<(), ScenarioError> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(v))
        }
    }

    /// The config for each sweep value (tagged `parameter=value`), or the
    /// config itself.
    pub fn sweep_points(&self) -> Vec<(Option<String>, ScenarioConfig)> {
        let Some(sweep) = &self.sweep else {
            return vec![(None, self.clone())];
        };
        sweep
            .values
            .iter()
            .map(|&v| {
                let mut cfg = self.clone();
                cfg.sweep = None;
                match sweep.parameter {
                    SweepParameter::Eta => {
                        if let Some(icm) = &mut cfg.icm {
                            icm.eta = v;
                        }
                    }
                    SweepParameter::Epsilon => {
                        if let Some(s) = &mut cfg.strategy {
                            s.epsilon = v;
                        }
                    }
                }
                (Some(format!("{}={v}", sweep.parameter)), cfg)
            })
            .collect()
    }

    pub fn layout(&self) -> crate::Result<HilbertLayout> {
        let obs: Vec<ObserverFeatureSpec> = self.observer.features.iter().map(ObserverFeatureConfig::spec).collect();
        build_layout(&self.sensory.features, &obs)
    }

    /// Observer features entering the strategy measurement, in config order.
    pub fn polarity_features(&self) -> Vec<(&ObserverFeatureConfig, Polarity)> {
        self.observer.features.iter().filter_map(|f| f.polarity.map(|p| (f, p))).collect()
    }

    /// Dimension of each feature of the matching space (sensory and extra).
    pub fn feature_dims(&self) -> Vec<(String, usize)> {
        let mut out: Vec<(String, usize)> =
            self.sensory.features.iter().filter_map(|f| f.dim().ok().map(|d| (f.name.clone(), d))).collect();
        if let Some(icm) = &self.icm {
            out.extend(icm.extra_features.iter().map(|e| (e.name.clone(), e.dim)));
        }
        out
    }

    fn validate_point(&self) -> Vec<Violation> {
        let mut r = Report(Vec::new());
        self.validate_layout(&mut r);
        if self.run.layout_only || !r.0.is_empty() {
            return r.0;
        }
        let layout = match self.layout() {
            Ok(l) => l,
            Err(e) => {
                r.push("sensory", e.to_string());
                return r.0;
            }
        };
        r.check(self.run.trials >= 1, "run.trials", "must be at least 1");
        self.validate_state(&layout, &mut r);
        self.validate_dynamics(&layout, &mut r);
        self.validate_strategy(&mut r);
        self.validate_icm(&layout, &mut r);
        r.0
    }

    fn validate_layout(&self, r: &mut Report) {
        r.check(!self.sensory.features.is_empty(), "sensory.features", "at least one sensory feature is required");
        r.check(!self.observer.features.is_empty(), "observer.features", "at least one observer feature is required");
        let mut seen = HashSet::new();
        for (i, f) in self.sensory.features.iter().enumerate() {
            if let Err(e) = f.validate().and_then(|_| f.dim()) {
                r.push(format!("sensory.features[{i}]"), e.to_string());
            }
            r.check(seen.insert(f.name.as_str()), format!("sensory.features[{i}].name"), format!("duplicate feature '{}'", f.name));
        }
        let mut seen = HashSet::new();
        for (i, f) in self.observer.features.iter().enumerate() {
            if let Err(e) = f.spec().validate().and_then(|_| f.spec().dim()) {
                r.push(format!("observer.features[{i}]"), e.to_string());
            }
            r.check(seen.insert(f.name.as_str()), format!("observer.features[{i}].name"), format!("duplicate feature '{}'", f.name));
        }
        if r.0.is_empty() {
            if let Err(e) = self.layout() {
                r.push("sensory", e.to_string());
            }
        }
    }

    fn validate_state(&self, layout: &HilbertLayout, r: &mut Report) {
        let osc = layout.sensory_oscillators();
        let Some(state) = &self.sensory.state else {
            r.push("sensory.state", "an initial sensory state is required (levels or amplitudes)");
            return;
        };
        match (&state.levels, &state.amplitudes) {
            (Some(levels), None) => {
                if levels.len() != osc.len() {
                    r.push("sensory.state.levels", format!("expected {} entries (one per oscillator), got {}", osc.len(), levels.len()));
                }
                for (i, (m, o)) in levels.iter().zip(osc).enumerate() {
                    r.check(*m < o.dim, format!("sensory.state.levels[{i}]"), format!("level {m} out of range for oscillator {}", o.label()));
                }
            }
            (None, Some(amps)) => {
                if amps.len() != osc.len() {
                    r.push("sensory.state.amplitudes", format!("expected {} vectors (one per oscillator), got {}", osc.len(), amps.len()));
                }
                for (i, (a, o)) in amps.iter().zip(osc).enumerate() {
                    let path = format!("sensory.state.amplitudes[{i}]");
                    r.check(a.len() == o.dim, &path, format!("expected {} amplitudes for oscillator {}", o.dim, o.label()));
                    r.check(a.iter().all(|x| x.is_finite()) && a.iter().any(|x| *x != 0.0), &path, "amplitudes must be finite and not all zero");
                }
            }
            _ => r.push("sensory.state", "give exactly one of levels or amplitudes"),
        }
    }

    fn validate_dynamics(&self, layout: &HilbertLayout, r: &mut Report) {
        let d = &self.dynamics;
        r.check(self.observer.temperature > 0.0 && self.observer.temperature.is_finite(), "observer.temperature", "must be positive");
        r.check(d.tau_corr > 0.0 && d.tau_corr.is_finite(), "dynamics.tau_corr", "must be positive");
        r.check(d.lambda_mean > 0.0 && d.lambda_mean.is_finite(), "dynamics.lambda_mean", "must be positive");
        let sens: Vec<String> = layout.sensory_oscillators().iter().map(|o| o.label()).collect();
        let obs: Vec<String> = layout.observer_oscillators().iter().map(|o| o.label()).collect();
        let mut dissipative = false;
        for (i, t) in d.interactions.iter().enumerate() {
            let path = format!("dynamics.interactions[{i}]");
            r.check(t.g.iter().all(|x| x.is_finite()), format!("{path}.g"), "coupling must be finite");
            r.check(sens.contains(&t.system.oscillator), format!("{path}.system.oscillator"), format!("unknown sensory oscillator '{}'", t.system.oscillator));
            r.check(obs.contains(&t.observer.oscillator), format!("{path}.observer.oscillator"), format!("unknown observer oscillator '{}'", t.observer.oscillator));
            dissipative |= t.g != [0.0, 0.0];
            if !t.conjugate && !self.has_partner(i) {
                r.push(format!("{path}.conjugate"), "term is not self-adjoint and has no listed conjugate partner; set conjugate = true");
            }
        }
        if dissipative {
            r.check(
                layout.sensory_dim() <= MAX_EVOLVED_DIM,
                "sensory.features",
                format!("evolved sensory dimension {} exceeds {MAX_EVOLVED_DIM}; use layout_only or remove the couplings", layout.sensory_dim()),
            );
        }
        r.check(
            layout.observer_dim() <= MAX_EVOLVED_DIM,
            "observer.features",
            format!("observer dimension {} exceeds {MAX_EVOLVED_DIM}; use layout_only", layout.observer_dim()),
        );
        if self.run.oracle_check {
            r.check(
                layout.sensory_dim() <= MAX_ORACLE_DIM,
                "run.oracle_check",
                format!("exact-exponential check needs sensory dimension <= {MAX_ORACLE_DIM}, got {}", layout.sensory_dim()),
            );
        }
    }

    fn has_partner(&self, i: usize) -> bool {
        let t = &self.dynamics.interactions[i];
        if t.system.op.is_hermitian() && t.observer.op.is_hermitian() && t.g[1] == 0.0 {
            return true;
        }
        self.dynamics.interactions.iter().any(|o| {
            o.system.oscillator == t.system.oscillator
                && o.observer.oscillator == t.observer.oscillator
                && o.system.op == t.system.op.adjoint()
                && o.observer.op == t.observer.op.adjoint()
                && o.g == [t.g[0], -t.g[1]]
        })
    }

    fn validate_strategy(&self, r: &mut Report) {
        let Some(s) = &self.strategy else {
            r.push("strategy", "section is required unless run.layout_only is set");
            return;
        };
        let pol = self.polarity_features();
        r.check(!pol.is_empty(), "observer.features", "at least one observer feature needs a polarity (trust or mistrust)");
        for (i, f) in self.observer.features.iter().enumerate() {
            if f.polarity.is_some() {
                r.check(
                    f.relevance_levels == 2,
                    format!("observer.features[{i}].relevance_levels"),
                    "features with a polarity must have 2 relevance levels",
                );
            }
        }
        let eps = s.epsilon;
        r.check((0.5..=1.0).contains(&eps), "strategy.epsilon", format!("must lie in [0.5, 1], got {eps}"));
        r.check(s.k > 0.0 && s.k.is_finite(), "strategy.k", format!("must be positive, got {}", s.k));
        let top = s.k * eps.powi(1 + pol.len() as i32);
        r.check(
            top <= 1.0 + 1e-12,
            "strategy.k",
            format!("k * epsilon^{} = {top} exceeds 1; the complementary strategy element would not be positive", 1 + pol.len()),
        );
        if let Some(a) = s.sdm_state {
            r.check(a.iter().all(|x| x.is_finite()) && a != [0.0, 0.0], "strategy.sdm_state", "amplitudes must be finite and not both zero");
        }
    }

    fn validate_icm(&self, layout: &HilbertLayout, r: &mut Report) {
        let Some(icm) = &self.icm else {
            r.push("icm", "section is required unless run.layout_only is set");
            return;
        };
        r.check((0.0..=1.0).contains(&icm.eta), "icm.eta", format!("openness must lie in [0, 1], got {}", icm.eta));
        r.check(icm.beta_0 > 0.0 && icm.beta_0 < 1.0, "icm.beta_0", format!("must lie strictly between 0 and 1, got {}", icm.beta_0));

        let sens_names: Vec<&str> = self.sensory.features.iter().map(|f| f.name.as_str()).collect();
        for (i, e) in icm.extra_features.iter().enumerate() {
            let path = format!("icm.extra_features[{i}]");
            r.check(e.dim >= 2, format!("{path}.dim"), "must be at least 2");
            r.check(!sens_names.contains(&e.name.as_str()), format!("{path}.name"), format!("'{}' is already a sensory feature", e.name));
            r.check(
                !icm.extra_features[..i].iter().any(|o| o.name == e.name),
                format!("{path}.name"),
                format!("duplicate feature '{}'", e.name),
            );
        }
        let dims = self.feature_dims();
        let dim_of = |n: &str| dims.iter().find(|(f, _)| f == n).map(|x| x.1);

        let union: usize = dims.iter().map(|d| d.1).try_fold(1usize, |a, d| a.checked_mul(d)).unwrap_or(usize::MAX);
        let pol = self.polarity_features().len();
        let obs_dim = 1usize << pol.min(20);
        let composite = union.saturating_mul(obs_dim);
        r.check(
            composite <= MAX_COMPOSITE_DIM,
            "icm",
            format!("matching space dimension {composite} (features {union} x observer {obs_dim}) exceeds {MAX_COMPOSITE_DIM}"),
        );
        if !self.dynamics.interactions.iter().any(|t| t.g != [0.0, 0.0]) {
            r.check(
                layout.sensory_dim() <= MAX_COMPOSITE_DIM,
                "sensory.features",
                format!("sensory dimension {} exceeds {MAX_COMPOSITE_DIM}", layout.sensory_dim()),
            );
        }

        r.check(!self.categories.is_empty(), "categories", "at least one category is required");
        r.check(!self.observer_states.is_empty(), "observer_states", "at least one observer state is required");
        let state_names: Vec<&str> = self.observer_states.iter().map(|o| o.name.as_str()).collect();
        for (i, o) in self.observer_states.iter().enumerate() {
            let path = format!("observer_states[{i}]");
            r.check(!state_names[..i].contains(&o.name.as_str()), format!("{path}.name"), format!("duplicate observer state '{}'", o.name));
            check_vector(&o.prototype, obs_dim, &format!("{path}.prototype"), r);
            check_sampling(&o.name, &o.prototype, &o.sampling, obs_dim, &path, r);
        }

        let mut total = icm.beta_0;
        let mut shares_feature = false;
        for (i, c) in self.categories.iter().enumerate() {
            let path = format!("categories[{i}]");
            r.check(
                !self.categories[..i].iter().any(|o| o.name == c.name),
                format!("{path}.name"),
                format!("duplicate category '{}'", c.name),
            );
            r.check(!c.name.contains('/'), format!("{path}.name"), "category names may not contain '/'");
            r.check(!c.features.is_empty(), format!("{path}.features"), "a category needs at least one feature");
            let mut dim = Some(1usize);
            for (j, f) in c.features.iter().enumerate() {
                match dim_of(f) {
                    Some(d) => dim = dim.and_then(|x| x.checked_mul(d)),
                    None => r.push(format!("{path}.features[{j}]"), format!("unknown feature '{f}'")),
                }
                r.check(!c.features[..j].contains(f), format!("{path}.features[{j}]"), format!("duplicate feature '{f}'"));
            }
            shares_feature |= c.features.iter().any(|f| sens_names.contains(&f.as_str()));
            if let Some(d) = dim.filter(|_| c.features.iter().all(|f| dim_of(f).is_some())) {
                if d <= MAX_COMPOSITE_DIM {
                    check_vector(&c.prototype, d, &format!("{path}.prototype"), r);
                    check_sampling(&c.name, &c.prototype, &c.sampling, d, &path, r);
                }
            }
            r.check(c.beta >= 0.0 && c.beta.is_finite(), format!("{path}.beta"), "must be nonnegative");
            r.check(!c.observers.is_empty(), format!("{path}.observers"), "list at least one observer state");
            for (j, o) in c.observers.iter().enumerate() {
                let p = format!("{path}.observers[{j}]");
                r.check(state_names.contains(&o.state.as_str()), format!("{p}.state"), format!("unknown observer state '{}'", o.state));
                r.check(o.beta >= 0.0 && o.beta.is_finite(), format!("{p}.beta"), "must be nonnegative");
                r.check(
                    !c.observers[..j].iter().any(|x| x.state == o.state),
                    format!("{p}.state"),
                    format!("observer state '{}' listed twice", o.state),
                );
                total += c.beta * o.beta;
            }
        }
        if !self.categories.is_empty() {
            r.check(shares_feature, "categories", "no category shares a feature with the sensory input");
        }
        r.check(
            (total - 1.0).abs() <= BIAS_TOL,
            "icm.beta_0",
            format!("bias normalization violated: beta_0 + sum over categories of beta_c * beta_o|c = {total}, expected 1"),
        );
    }
}

fn check_vector(v: &VectorSpec, dim: usize, path: &str, r: &mut Report) {
    match (v.basis, &v.amplitudes) {
        (Some(b), None) => r.check(b < dim, format!("{path}.basis"), format!("index {b} out of range for dimension {dim}")),
        (None, Some(a)) => {
            r.check(a.len() == dim, format!("{path}.amplitudes"), format!("expected {dim} amplitudes, got {}", a.len()));
            r.check(
                a.iter().all(|x| x.is_finite()) && a.iter().any(|x| *x != 0.0),
                format!("{path}.amplitudes"),
                "amplitudes must be finite and not all zero",
            );
        }
        _ => r.push(path, "give exactly one of basis or amplitudes"),
    }
}

fn check_sampling(name: &str, proto: &VectorSpec, s: &Sampling, dim: usize, path: &str, r: &mut Report) {
    r.check(s.templates >= 1, format!("{path}.templates"), "must be at least 1");
    if s.sigma.is_some() && s.covariance.is_some() {
        r.push(path, "give at most one of sigma or covariance");
        return;
    }
    let Some(prototype) = proto.to_vector(dim) else {
        return;
    };
    match category_spec(name, prototype, Vec::new(), s) {
        Ok(spec) => {
            if let Err(e) = spec.validate() {
                r.push(path, e.to_string());
            }
        }
        Err(e) => r.push(path, e),
    }
}

impl VectorSpec {
    /// Normalized vector, or `None` when the spec is malformed.
    pub fn to_vector(&self, dim: usize) -> Option<crate::linalg::ComplexVector> {
        use crate::linalg::{ComplexVector, C64};
        match (self.basis, &self.amplitudes) {
            (Some(b), None) if b < dim => {
                let mut v = ComplexVector::zeros(dim);
                v[b] = C64::new(1.0, 0.0);
                Some(v)
            }
            (None, Some(a)) if a.len() == dim => {
                let v = ComplexVector::from_iterator(dim, a.iter().map(|&x| C64::new(x, 0.0)));
                let n = v.norm();
                (n > 0.0 && n.is_finite()).then(|| v.unscale(n))
            }
            _ => None,
        }
    }
}

/// Template-engine spec from the config fields.
pub fn category_spec(
    name: &str,
    prototype: crate::linalg::ComplexVector,
    features: Vec<String>,
    s: &Sampling,
) -> Result<CategorySpec, String> {
    let mut spec = CategorySpec::new(name, prototype, features, s.templates);
    if let Some(sigma) = s.sigma {
        spec.xi_covariance = Covariance::Isotropic(sigma);
    }
    if let Some(rows) = &s.covariance {
        let n = rows.len();
        if rows.iter().any(|row| row.len() != n) {
            return Err("covariance must be a square matrix".into());
        }
        spec.xi_covariance = Covariance::Full(nalgebra::DMatrix::from_fn(n, n, |i, j| rows[i][j]));
    }
    spec.weight_mean = s.weight_mean.clone();
    spec.weight_sigma = s.weight_sigma;
    Ok(spec)
}
