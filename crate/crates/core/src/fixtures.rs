//! Bundled scenario files (`crates/core/fixtures/*.toml`).

/// A property every run of the fixture must show.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Expectation {
    SensoryDim(usize),
    ObserverDim(usize),
    /// Population of the named oscillator's first excited level decays as
    /// `exp(-gamma t)`.
    Decay { oscillator: &'static str, gamma: f64 },
    /// Every configured strategy weight pair sums to one.
    WeightsSumToOne,
    /// Match probabilities vanish at `eta = 0` on states outside the ground
    /// sector of each category's absent features and are positive at
    /// `eta = 1`.
    OpennessEndpoints,
    /// Empirical outcome frequencies agree with the mean Born distribution.
    BornFrequencies,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fixture {
    pub name: &'static str,
    pub file: &'static str,
    pub source: &'static str,
    pub expected: &'static [Expectation],
    pub notes: &'static str,
}

macro_rules! fixture {
    ($name:literal, $expected:expr, $notes:literal) => {
        Fixture {
            name: $name,
            file: concat!("fixtures/", $name, ".toml"),
            source: include_str!(concat!("../fixtures/", $name, ".toml")),
            expected: $expected,
            notes: $notes,
        }
    };
}

const FIXTURES: &[Fixture] = &[
    fixture!(
        "minimal",
        &[Expectation::SensoryDim(16), Expectation::ObserverDim(16), Expectation::BornFrequencies],
        "one feature, two categories, two-level oscillators throughout"
    ),
    fixture!(
        "paper-dims",
        &[Expectation::SensoryDim(4096), Expectation::ObserverDim(4096)],
        "2 attributes x 3 truth values x 4 relevance levels; six two-level observer features; layout only"
    ),
    fixture!(
        "damping",
        &[Expectation::SensoryDim(16), Expectation::Decay { oscillator: "color/red/1", gamma: 0.02 }],
        "resonant exchange with a cold observer oscillator, gamma = 4 g^2 tau_corr"
    ),
    fixture!(
        "skeptic-sweep",
        &[Expectation::SensoryDim(256), Expectation::OpennessEndpoints],
        "two features, one per category, openness grid"
    ),
    fixture!(
        "strategy-sweep",
        &[Expectation::SensoryDim(16), Expectation::WeightsSumToOne],
        "the minimal scenario over an epsilon grid"
    ),
];

pub fn list_fixtures() -> &'static [Fixture] {
    FIXTURES
}

pub fn fixture(name: &str) -> Option<&'static Fixture> {
    FIXTURES.iter().find(|f| f.name == name)
}
