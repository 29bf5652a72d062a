//! Index hierarchy of the sensory and observer oscillator spaces.
//!
//! A sensory feature owns one oscillator per (attribute, truth value) pair;
//! the oscillator's number state is the relevance level. An observer
//! feature owns one oscillator per level. All dimension arithmetic here is
//! integer-only, so very large layouts can be described without building
//! any matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SubsystemDims;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub attributes: Vec<String>,
    /// Truth levels shared by every attribute, strictly increasing in [0, 1].
    pub truth_values: Vec<f64>,
    /// Relevance levels per truth-value oscillator.
    pub relevance_levels: usize,
    /// Oscillator angular frequency.
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverFeatureSpec {
    pub name: String,
    pub levels: usize,
    pub relevance_levels: usize,
    pub frequency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Owner {
    Sensory,
    Observer,
}

/// One tensor factor of the layout.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Oscillator {
    pub owner: Owner,
    pub feature: String,
    /// Attribute label for sensory oscillators.
    pub attribute: Option<String>,
    /// Truth-value label (sensory) or level index (observer).
    pub level: String,
    pub dim: usize,
    pub frequency: f64,
}

impl Oscillator {
    /// `feature/attribute/truth` for sensory, `feature/level` for observer.
    pub fn label(&self) -> String {
        match &self.attribute {
            Some(a) => format!("{}/{}/{}", self.feature, a, self.level),
            None => format!("{}/{}", self.feature, self.level),
        }
    }
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<()> {
        let name = &self.name;
        if self.attributes.len() < 2 {
            return Err(Error::invalid(format!("feature '{name}': needs at least 2 attributes, got {}", self.attributes.len())));
        }
        if self.truth_values.len() < 2 {
            return Err(Error::invalid(format!("feature '{name}': needs at least 2 truth values, got {}", self.truth_values.len())));
        }
        if self.relevance_levels < 2 {
            return Err(Error::invalid(format!("feature '{name}': needs at least 2 relevance levels, got {}", self.relevance_levels)));
        }
        if self.truth_values.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::invalid(format!("feature '{name}': truth values must lie in [0, 1]")));
        }
        if self.truth_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!("feature '{name}': truth values must be strictly increasing")));
        }
        if !(self.frequency > 0.0 && self.frequency.is_finite()) {
            return Err(Error::invalid(format!("feature '{name}': frequency must be positive")));
        }
        Ok(())
    }

    pub fn oscillator_count(&self) -> usize {
        self.attributes.len() * self.truth_values.len()
    }

    /// `relevance_levels^(attributes × truth values)`.
    pub fn dim(&self) -> Result<usize> {
        checked_pow(self.relevance_levels, self.oscillator_count())
            .ok_or_else(|| Error::invalid(format!("feature '{}': dimension overflows", self.name)))
    }

    fn oscillators(&self) -> impl Iterator<Item = Oscillator> + '_ {
        self.attributes.iter().flat_map(move |a| {
            self.truth_values.iter().map(move |t| Oscillator {
                owner: Owner::Sensory,
                feature: self.name.clone(),
                attribute: Some(a.clone()),
                level: format!("{t}"),
                dim: self.relevance_levels,
                frequency: self.frequency,
            })
        })
    }
}

impl ObserverFeatureSpec {
    pub fn validate(&self) -> Result<()> {
        let name = &self.name;
        if self.levels < 2 {
            return Err(Error::invalid(format!("observer feature '{name}': needs at least 2 levels, got {}", self.levels)));
        }
        if self.relevance_levels < 2 {
            return Err(Error::invalid(format!(
                "observer feature '{name}': needs at least 2 relevance levels, got {}",
                self.relevance_levels
            )));
        }
        if !(self.frequency > 0.0 && self.frequency.is_finite()) {
            return Err(Error::invalid(format!("observer feature '{name}': frequency must be positive")));
        }
        Ok(())
    }

    pub fn dim(&self) -> Result<usize> {
        checked_pow(self.relevance_levels, self.levels)
            .ok_or_else(|| Error::invalid(format!("observer feature '{}': dimension overflows", self.name)))
    }

    fn oscillators(&self) -> impl Iterator<Item = Oscillator> + '_ {
        (0..self.levels).map(move |q| Oscillator {
            owner: Owner::Observer,
            feature: self.name.clone(),
            attribute: None,
            level: q.to_string(),
            dim: self.relevance_levels,
            frequency: self.frequency,
        })
    }
}

fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    (0..exp).try_fold(1usize, |acc, _| acc.checked_mul(base))
}

/// Sensory factors first (feature order, then attribute, then truth
/// value), followed by observer factors (feature order, then level).
#[derive(Debug, Clone, PartialEq)]
pub struct HilbertLayout {
    sensory: Vec<FeatureSpec>,
    observer: Vec<ObserverFeatureSpec>,
    factors: Vec<Oscillator>,
    sensory_dim: usize,
    observer_dim: usize,
}

pub fn build_layout(sensory: &[FeatureSpec], observer: &[ObserverFeatureSpec]) -> Result<HilbertLayout> {
    if sensory.is_empty() {
        return Err(Error::invalid("at least one sensory feature is required"));
    }
    if observer.is_empty() {
        return Err(Error::invalid("at least one observer feature is required"));
    }
    let mut names = std::collections::HashSet::new();
    for f in sensory {
        f.validate()?;
        if !names.insert(f.name.as_str()) {
            return Err(Error::invalid(format!("duplicate sensory feature '{}'", f.name)));
        }
    }
    let mut obs_names = std::collections::HashSet::new();
    for f in observer {
        f.validate()?;
        if !obs_names.insert(f.name.as_str()) {
            return Err(Error::invalid(format!("duplicate observer feature '{}'", f.name)));
        }
    }
    let product = |dims: Vec<usize>| {
        dims.into_iter()
            .try_fold(1usize, |acc, d| acc.checked_mul(d))
            .ok_or_else(|| Error::invalid("layout dimension overflows"))
    };
    let sensory_dim = product(sensory.iter().map(FeatureSpec::dim).collect::<Result<_>>()?)?;
    let observer_dim = product(observer.iter().map(ObserverFeatureSpec::dim).collect::<Result<_>>()?)?;
    let factors = sensory
        .iter()
        .flat_map(FeatureSpec::oscillators)
        .chain(observer.iter().flat_map(ObserverFeatureSpec::oscillators))
        .collect();
    Ok(HilbertLayout { sensory: sensory.to_vec(), observer: observer.to_vec(), factors, sensory_dim, observer_dim })
}

impl HilbertLayout {
    pub fn sensory_features(&self) -> &[FeatureSpec] {
        &self.sensory
    }

    pub fn observer_features(&self) -> &[ObserverFeatureSpec] {
        &self.observer
    }

    pub fn factors(&self) -> &[Oscillator] {
        &self.factors
    }

    pub fn sensory_oscillators(&self) -> &[Oscillator] {
        let n = self.sensory.iter().map(FeatureSpec::oscillator_count).sum();
        &self.factors[..n]
    }

    pub fn observer_oscillators(&self) -> &[Oscillator] {
        &self.factors[self.sensory_oscillators().len()..]
    }

    pub fn sensory_dim(&self) -> usize {
        self.sensory_dim
    }

    pub fn observer_dim(&self) -> usize {
        self.observer_dim
    }

    /// Sensory × observer dimension, if it fits in `usize`.
    pub fn total_dim(&self) -> Option<usize> {
        self.sensory_dim.checked_mul(self.observer_dim)
    }

    pub fn sensory_dims(&self) -> SubsystemDims {
        SubsystemDims::new(self.sensory_oscillators().iter().map(|o| o.dim).collect()).expect("validated layout")
    }

    pub fn observer_dims(&self) -> SubsystemDims {
        SubsystemDims::new(self.observer_oscillators().iter().map(|o| o.dim).collect()).expect("validated layout")
    }

    /// Position of the oscillator with the given label.
    pub fn oscillator_index(&self, owner: Owner, label: &str) -> Option<usize> {
        let (slice, offset) = match owner {
            Owner::Sensory => (self.sensory_oscillators(), 0),
            Owner::Observer => (self.observer_oscillators(), 0),
        };
        slice.iter().position(|o| o.label() == label).map(|i| i + offset)
    }

    /// Oscillator positions (within the sensory factor list) of a feature.
    pub fn sensory_feature_range(&self, feature: &str) -> Option<std::ops::Range<usize>> {
        let mut start = 0;
        for f in &self.sensory {
            let n = f.oscillator_count();
            if f.name == feature {
                return Some(start..start + n);
            }
            start += n;
        }
        None
    }

    /// Oscillator positions (within the observer factor list) of a feature.
    pub fn observer_feature_range(&self, feature: &str) -> Option<std::ops::Range<usize>> {
        let mut start = 0;
        for f in &self.observer {
            if f.name == feature {
                return Some(start..start + f.levels);
            }
            start += f.levels;
        }
        None
    }

    /// Sensory basis index of the given relevance levels (one per sensory
    /// oscillator, layout order).
    pub fn sensory_index(&self, relevance: &[usize]) -> Result<usize> {
        let osc = self.sensory_oscillators();
        if relevance.len() != osc.len() {
            return Err(Error::DimensionMismatch { expected: osc.len(), found: relevance.len() });
        }
        let mut index = 0usize;
        for (m, o) in relevance.iter().zip(osc) {
            if *m >= o.dim {
                return Err(Error::invalid(format!("relevance {m} out of range for oscillator {}", o.label())));
            }
            index = index * o.dim + m;
        }
        Ok(index)
    }

    /// Inverse of [`Self::sensory_index`]: the conjunction of (oscillator,
    /// relevance) pairs labelling a sensory basis vector.
    pub fn sensory_basis_label(&self, mut index: usize) -> Result<Vec<(String, usize)>> {
        if index >= self.sensory_dim {
            return Err(Error::invalid(format!("basis index {index} out of range")));
        }
        let osc = self.sensory_oscillators();
        let mut out = vec![(String::new(), 0); osc.len()];
        for (slot, o) in out.iter_mut().zip(osc).rev() {
            *slot = (o.label(), index % o.dim);
            index /= o.dim;
        }
        Ok(out)
    }
}
