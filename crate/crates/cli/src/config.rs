//! JSON experiment configuration.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use relaynet::channel::{GainModel, NetworkTopology, Node, PathLoss};
use relaynet::outage::MIN_DECISION_SAMPLE;
use relaynet::{DecisionRule, Estimator, OutageSetup, StrategyAssignment};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },
}

impl ConfigError {
    fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Validation { field: field.into(), message: message.into() }
    }

    /// Field named by a validation error.
    pub fn field(&self) -> Option<&str> {
        match self {
            Self::Validation { field, .. } => Some(field),
            Self::Parse { .. } => None,
        }
    }
}

/// Node label in configs: `S`, `R1`, `R2`, …, `D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NodeName(pub Node);

impl FromStr for NodeName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "S" => Ok(Self(Node::Source)),
            "D" => Ok(Self(Node::Destination)),
            _ => s
                .strip_prefix('R')
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|k| *k >= 1)
                .map(|k| Self(Node::Relay(k)))
                .ok_or_else(|| format!("unknown node {s:?} (expected S, R<k> or D)")),
        }
    }
}

impl TryFrom<String> for NodeName {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl fmt::Display for NodeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Node::Source => write!(f, "S"),
            Node::Relay(k) => write!(f, "R{k}"),
            Node::Destination => write!(f, "D"),
        }
    }
}

impl From<NodeName> for String {
    fn from(n: NodeName) -> String {
        n.to_string()
    }
}

/// Random distance law for one link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceConfig {
    pub d_min: f64,
    pub d_max: f64,
    #[serde(default = "one")]
    pub exponent: f64,
}

/// Override for one link; unspecified fields keep the Rayleigh default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub from: NodeName,
    pub to: NodeName,
    /// Rayleigh fading variance; ignored when `constant` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
    /// Deterministic gain `[re, im]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<DistanceConfig>,
    /// Whether relays know this gain. Defaults to true except for links
    /// into the destination.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visible_to_relays: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologyConfig {
    pub source_power: f64,
    pub relay_powers: Vec<f64>,
    pub relay_noise: Vec<f64>,
    pub destination_noise: f64,
    pub fading_variance: f64,
    pub links: Vec<LinkConfig>,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            source_power: 1.0,
            relay_powers: vec![10.0, 10.0],
            relay_noise: vec![1.0, 1.0],
            destination_noise: 1.0,
            fading_variance: 1.0,
            links: vec![LinkConfig {
                from: NodeName(Node::Source),
                to: NodeName(Node::Relay(1)),
                variance: None,
                constant: None,
                distance: Some(DistanceConfig { d_min: 0.0, d_max: 0.1, exponent: 1.0 }),
                visible_to_relays: None,
            }],
        }
    }
}

impl TopologyConfig {
    pub fn build(&self) -> Result<NetworkTopology, ConfigError> {
        let positive = |field: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::invalid(field, format!("must be > 0, got {x}")))
            }
        };
        positive("source_power", self.source_power)?;
        positive("destination_noise", self.destination_noise)?;
        positive("fading_variance", self.fading_variance)?;
        let n = self.relay_powers.len();
        if n == 0 || n > relaynet::rate::MAX_RELAYS {
            return Err(ConfigError::invalid("relay_powers", format!("need 1..={} relays, got {n}", relaynet::rate::MAX_RELAYS)));
        }
        if self.relay_noise.len() != n {
            return Err(ConfigError::invalid("relay_noise", format!("expected {n} entries, got {}", self.relay_noise.len())));
        }
        for &p in &self.relay_powers {
            positive("relay_powers", p)?;
        }
        for &s in &self.relay_noise {
            positive("relay_noise", s)?;
        }
        let mut topo = NetworkTopology::rayleigh(
            n,
            self.source_power,
            self.relay_powers.clone(),
            self.relay_noise.clone(),
            self.destination_noise,
            self.fading_variance,
        )
        .map_err(|e| ConfigError::invalid("topology", e.to_string()))?;
        for (i, l) in self.links.iter().enumerate() {
            let field = format!("links[{i}]");
            let mut model = match l.constant {
                Some([re, im]) => GainModel::constant(Complex64::new(re, im)),
                None => GainModel::rayleigh(l.variance.unwrap_or(self.fading_variance)),
            };
            if let Some(d) = l.distance {
                model = model.with_path_loss(PathLoss { d_min: d.d_min, d_max: d.d_max, exponent: d.exponent });
            }
            topo.set_link(l.from.0, l.to.0, model).map_err(|e| ConfigError::invalid(&field, e.to_string()))?;
            if let Some(vis) = l.visible_to_relays {
                topo.set_visibility(l.from.0, l.to.0, vis).map_err(|e| ConfigError::invalid(&field, e.to_string()))?;
            }
        }
        topo.validate().map_err(|e| ConfigError::invalid("links", e.to_string()))?;
        Ok(topo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScsRule {
    EmpiricalArgmin,
    FeasibilityHeuristic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixedConfig {
    pub df_relays: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyConfig {
    FullDf,
    FullCf,
    Mixed(MixedConfig),
    Scs(ScsRule),
    CutsetLb,
}

impl StrategyConfig {
    /// Label used in result rows.
    pub fn label(&self) -> String {
        match self {
            Self::FullDf => "full_df".into(),
            Self::FullCf => "full_cf".into(),
            Self::Mixed(m) => {
                let mut ks = m.df_relays.clone();
                ks.sort_unstable();
                let ks: Vec<String> = ks.iter().map(|k| k.to_string()).collect();
                format!("mixed_df_{}", ks.join("_"))
            }
            Self::Scs(ScsRule::EmpiricalArgmin) => "scs_empirical_argmin".into(),
            Self::Scs(ScsRule::FeasibilityHeuristic) => "scs_feasibility_heuristic".into(),
            Self::CutsetLb => "cutset_lb".into(),
        }
    }

    pub fn estimator(&self, n_relays: usize, n_inner: usize) -> Estimator {
        let all = StrategyAssignment::full(n_relays);
        match self {
            Self::FullDf => Estimator::Fixed(StrategyAssignment::EMPTY),
            Self::FullCf => Estimator::Fixed(all),
            Self::Mixed(m) => Estimator::Fixed(all.minus(StrategyAssignment::from_relays(&m.df_relays))),
            Self::Scs(ScsRule::EmpiricalArgmin) => Estimator::Selective(DecisionRule::EmpiricalArgmin { n_inner }),
            Self::Scs(ScsRule::FeasibilityHeuristic) => Estimator::Selective(DecisionRule::FeasibilityHeuristic),
            Self::CutsetLb => Estimator::CutsetLowerBound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub topology: TopologyConfig,
    pub rate_grid: Vec<f64>,
    pub strategies: Vec<StrategyConfig>,
    pub n_outer: usize,
    pub n_inner: usize,
    /// Compression-noise candidates as multiples of receiver noise.
    pub compression_grid: Vec<f64>,
    pub rho_grid: Vec<f64>,
    pub seed: u64,
    pub output_path: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let base = OutageSetup::new(NetworkTopology::two_relay_default());
        Self {
            topology: TopologyConfig::default(),
            rate_grid: vec![0.25, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0],
            strategies: vec![
                StrategyConfig::FullDf,
                StrategyConfig::FullCf,
                StrategyConfig::Mixed(MixedConfig { df_relays: vec![1] }),
                StrategyConfig::Scs(ScsRule::EmpiricalArgmin),
                StrategyConfig::Scs(ScsRule::FeasibilityHeuristic),
                StrategyConfig::CutsetLb,
            ],
            n_outer: base.n_outer,
            n_inner: base.n_inner,
            compression_grid: base.compression_grid,
            rho_grid: base.rho_grid,
            seed: 0,
            output_path: "outage.csv".into(),
        }
    }
}

fn one() -> f64 {
    1.0
}

/// Smallest outer sample accepted in a config.
pub const MIN_OUTER: usize = 100;

impl ExperimentConfig {
    /// Parses and validates; missing fields take their defaults and unknown
    /// fields are rejected.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical pretty JSON with every field present.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let topo = self.topology.build()?;
        let n = topo.n_relays();
        if self.rate_grid.is_empty() {
            return Err(ConfigError::invalid("rate_grid", "must not be empty"));
        }
        if self.rate_grid.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(ConfigError::invalid("rate_grid", "values must be finite and >= 0"));
        }
        if self.rate_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConfigError::invalid("rate_grid", "must be strictly increasing"));
        }
        if self.n_outer < MIN_OUTER {
            return Err(ConfigError::invalid("n_outer", format!("must be >= {MIN_OUTER}, got {}", self.n_outer)));
        }
        if self.n_inner == 0 {
            return Err(ConfigError::invalid("n_inner", "must be >= 1"));
        }
        if self.strategies.is_empty() {
            return Err(ConfigError::invalid("strategies", "must not be empty"));
        }
        let mut labels = Vec::new();
        for s in &self.strategies {
            match s {
                StrategyConfig::Mixed(m) => {
                    if let Some(k) = m.df_relays.iter().find(|k| !(1..=n).contains(*k)) {
                        return Err(ConfigError::invalid("strategies", format!("mixed: relay {k} outside 1..={n}")));
                    }
                }
                StrategyConfig::Scs(ScsRule::EmpiricalArgmin) if self.n_inner < MIN_DECISION_SAMPLE => {
                    return Err(ConfigError::invalid(
                        "n_inner",
                        format!("empirical argmin needs >= {MIN_DECISION_SAMPLE}, got {}", self.n_inner),
                    ));
                }
                _ => {}
            }
            let label = s.label();
            if labels.contains(&label) {
                return Err(ConfigError::invalid("strategies", format!("duplicate strategy {label}")));
            }
            labels.push(label);
        }
        if self.compression_grid.is_empty() || self.compression_grid.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(ConfigError::invalid("compression_grid", "must be nonempty and strictly positive"));
        }
        if self.rho_grid.is_empty() || self.rho_grid.iter().any(|r| !(*r >= 0.0 && *r < 1.0)) {
            return Err(ConfigError::invalid("rho_grid", "must be nonempty with values in [0, 1)"));
        }
        if self.output_path.is_empty() {
            return Err(ConfigError::invalid("output_path", "must not be empty"));
        }
        Ok(())
    }

    /// Simulation setup; assumes a validated config.
    pub fn setup(&self) -> Result<OutageSetup, ConfigError> {
        let mut s = OutageSetup::new(self.topology.build()?);
        s.n_outer = self.n_outer;
        s.n_inner = self.n_inner;
        s.compression_grid = self.compression_grid.clone();
        s.rho_grid = self.rho_grid.clone();
        s.seed = self.seed;
        Ok(s)
    }
}
