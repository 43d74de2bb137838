//! Run configuration: one JSON file with a section per command, every
//! section optional and defaulted, unknown fields rejected.
//!
//! Exponents may be written as numbers or as the string `"inf"`.

use std::path::Path;

use cocompact::audit::{AuditConfig, ChiVariant};
use cocompact::profiles::ExtractionConfig;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub threads: Option<usize>,
    pub norms: NormsConfig,
    pub counterexample: CounterexampleConfig,
    pub decompose: DecomposeConfig,
    pub audit: AuditSection,
    pub fixture: FixtureConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            threads: None,
            norms: NormsConfig::default(),
            counterexample: CounterexampleConfig::default(),
            decompose: DecomposeConfig::default(),
            audit: AuditSection::default(),
            fixture: FixtureConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormsConfig {
    /// Builtin name, `.grid` file or radial `.csv` file.
    pub input: String,
    #[serde(with = "exponent")]
    pub p: f64,
    #[serde(with = "exponent")]
    pub q: f64,
    /// Dimension of radial CSV input.
    pub dim: usize,
}

impl Default for NormsConfig {
    fn default() -> Self {
        Self {
            input: "annulus2d".into(),
            p: 2.0,
            q: 1.0,
            dim: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CounterexampleConfig {
    pub dim: usize,
    pub n_max: u32,
    #[serde(with = "exponent_list")]
    pub q_list: Vec<f64>,
    pub nonvanishing_floor: f64,
    /// Allowed gap between fitted and expected decay exponents.
    pub rate_tolerance: f64,
    /// Random lattice shifts added to the probe's aligned elements.
    pub probe_random_shifts: usize,
    pub seed: u64,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            n_max: 12,
            q_list: vec![1.0, 1.5, 2.0],
            nonvanishing_floor: cocompact::counterexample::DEFAULT_NONVANISHING_FLOOR,
            rate_tolerance: 0.1,
            probe_random_shifts: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecomposeConfig {
    pub extraction: ExtractionConfig,
    /// Bound on the element variations; the observed maximum when absent.
    pub declared_bound: Option<f64>,
    pub separation_floor: f64,
    pub energy_delta: f64,
    /// Absolute slack of the lower energy inequality; `delta * TV(u_K)`
    /// when absent.
    pub energy_slack: Option<f64>,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self {
            extraction: ExtractionConfig::default(),
            declared_bound: None,
            separation_floor: 4.0,
            energy_delta: 0.1,
            energy_slack: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditSection {
    pub corpus_size: usize,
    pub seed: u64,
    pub chi_variant: ChiVariant,
    pub profile_samples: usize,
    /// Suites to run; all when absent.
    pub suites: Option<Vec<String>>,
}

impl Default for AuditSection {
    fn default() -> Self {
        let a = AuditConfig::default();
        Self {
            corpus_size: a.corpus_size,
            seed: a.seed,
            chi_variant: a.chi_variant,
            profile_samples: a.profile_samples,
            suites: None,
        }
    }
}

impl AuditSection {
    pub fn audit_config(&self) -> AuditConfig {
        AuditConfig {
            corpus_size: self.corpus_size,
            seed: self.seed,
            chi_variant: self.chi_variant,
            profile_samples: self.profile_samples,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FixtureKind {
    /// `u_k = w1 + g[k, k e1] w2`, `k = 1..k_max`.
    TwoProfile,
    /// The same bump for every `k`.
    StaticBump,
    /// Gridded staircase `u_n`, `n = 1..k_max`.
    Staircase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixtureConfig {
    pub kind: FixtureKind,
    pub level: i32,
    pub k_max: i64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            kind: FixtureKind::TwoProfile,
            level: 6,
            k_max: 8,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| {
            format!("{}:{}:{}: {e}", path.display(), e.line(), e.column())
        })?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "{}: schema_version {} is not supported (expected {SCHEMA_VERSION})",
                path.display(),
                cfg.schema_version
            ));
        }
        Ok(cfg)
    }

    /// Range checks that do not depend on the command's inputs.
    pub fn validate(&self) -> Result<(), String> {
        if self.threads == Some(0) {
            return Err("threads must be at least 1".into());
        }
        let c = &self.counterexample;
        if !(2..=3).contains(&c.dim) {
            return Err(format!("counterexample.dim must be 2 or 3, got {}", c.dim));
        }
        if c.n_max == 0 {
            return Err("counterexample.n_max must be at least 1".into());
        }
        if let Some(q) = c.q_list.iter().find(|q| !(**q >= 1.0)) {
            return Err(format!("index error: counterexample.q_list entries must lie in [1, inf], got {q}"));
        }
        if !(c.nonvanishing_floor > 0.0 && c.nonvanishing_floor <= 1.0) {
            return Err(format!("counterexample.nonvanishing_floor must lie in (0, 1], got {}", c.nonvanishing_floor));
        }
        if !(c.rate_tolerance >= 0.0) {
            return Err("counterexample.rate_tolerance must be nonnegative".into());
        }
        let d = &self.decompose;
        if !(d.energy_delta >= 0.0) || d.energy_slack.is_some_and(|s| !(s >= 0.0)) {
            return Err("decompose.energy_delta and energy_slack must be nonnegative".into());
        }
        if d.declared_bound.is_some_and(|b| !(b >= 0.0)) {
            return Err("decompose.declared_bound must be nonnegative".into());
        }
        let e = &d.extraction;
        if !(e.epsilon > 0.0) || !(e.q > 1.0) || e.stride == 0 || e.window_radius < 1 || e.max_profiles == 0 {
            return Err(
                "decompose.extraction: need epsilon > 0, q > 1, stride >= 1, window_radius >= 1, max_profiles >= 1"
                    .into(),
            );
        }
        if e.scale_window.0 > e.scale_window.1 || e.scale_window.0.abs().max(e.scale_window.1.abs()) > 20 {
            return Err(format!("decompose.extraction.scale_window {:?} must be ordered within [-20, 20]", e.scale_window));
        }
        if !(2..=3).contains(&self.norms.dim) {
            return Err(format!("norms.dim must be 2 or 3, got {}", self.norms.dim));
        }
        let f = &self.fixture;
        if !(0..=9).contains(&f.level) || !(1..=64).contains(&f.k_max) {
            return Err(format!("fixture: level must lie in [0, 9] and k_max in [1, 64], got {} and {}", f.level, f.k_max));
        }
        Ok(())
    }
}

fn parse_exponent(s: &str) -> Option<f64> {
    match s {
        "inf" | "infinity" => Some(f64::INFINITY),
        _ => s.parse().ok(),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawExponent {
    Number(f64),
    Text(String),
}

impl RawExponent {
    fn value<E: serde::de::Error>(self) -> Result<f64, E> {
        match self {
            RawExponent::Number(x) => Ok(x),
            RawExponent::Text(s) => parse_exponent(&s).ok_or_else(|| E::custom(format!("bad exponent `{s}`"))),
        }
    }
}

fn exponent_json(x: f64) -> serde_json::Value {
    if x.is_infinite() {
        serde_json::Value::from("inf")
    } else {
        serde_json::Value::from(x)
    }
}

mod exponent {
    use super::*;

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        exponent_json(*x).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        RawExponent::deserialize(d)?.value()
    }
}

mod exponent_list {
    use super::*;

    pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
        xs.iter().map(|x| exponent_json(*x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<RawExponent>::deserialize(d)?.into_iter().map(RawExponent::value).collect()
    }
}

/// `"inf"` or a number, for command-line flags.
pub fn exponent_arg(s: &str) -> Result<f64, String> {
    parse_exponent(s).ok_or_else(|| format!("`{s}` is not a number or `inf`"))
}
