//! Experiment configuration in TOML.
//!
//! ```toml
//! n_list = [256, 512, 1024]
//! d = 2
//! nu_list = [4.0]
//! delta = [0, 8, "n^0.5", "fwd+8"]
//! policies = ["alg2", "pi_agg", "pi_clq", "mst", "raw"]
//! function = "knng:3"
//! trials = 20
//! base_seed = 1
//! path_mode = "exact"        # optional
//! exact_cap = 65536          # optional
//! output = "results.csv"     # optional; .json selects JSON
//! workers = 4                # optional
//! record_wall_time = false   # optional
//! ```
//!
//! `AGGSIM_OUTPUT_DIR` replaces the directory of `output`, and
//! `AGGSIM_WORKERS` replaces `workers`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clique::FunctionKind;
use crate::error::{Error, Result};
use crate::tradeoff::PathMode;

/// Policies the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Bisection tree at minimum latency.
    Alg2,
    /// Tradeoff plan for the sum function.
    PiAgg,
    /// Two-stage clique policy.
    PiClq,
    Mst,
    /// Raw forwarding without computation.
    Raw,
}

impl Policy {
    pub const ALL: [Policy; 5] = [Self::Alg2, Self::PiAgg, Self::PiClq, Self::Mst, Self::Raw];

    pub fn name(self) -> &'static str {
        match self {
            Self::Alg2 => "alg2",
            Self::PiAgg => "pi_agg",
            Self::PiClq => "pi_clq",
            Self::Mst => "mst",
            Self::Raw => "raw",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::param(format!("unknown policy `{s}` (alg2|pi_agg|pi_clq|mst|raw)")))
    }
}

/// Latency budget, possibly depending on `n` or on the realized
/// forwarding requirement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaSpec {
    Value(f64),
    /// `n^a`.
    Power(f64),
    /// `Δ + 1 + c` for the clique policy and `c` for every other policy.
    Forwarding(f64),
}

impl DeltaSpec {
    /// Budget for a policy on `n` nodes whose clique stage needs `reserve`.
    pub fn resolve(&self, n: usize, policy: Policy, reserve: usize) -> f64 {
        match *self {
            Self::Value(v) => v,
            Self::Power(a) => (n as f64).powf(a),
            Self::Forwarding(c) if policy == Policy::PiClq => reserve as f64 + c,
            Self::Forwarding(c) => c,
        }
    }
}

impl fmt::Display for DeltaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Value(v) => write!(f, "{v}"),
            Self::Power(a) => write!(f, "n^{a}"),
            Self::Forwarding(c) => write!(f, "fwd+{c}"),
        }
    }
}

impl FromStr for DeltaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::param(format!("bad latency budget `{s}` (number, n^a or fwd+c)"));
        let num = |t: &str| t.trim().parse::<f64>().ok().filter(|v| v.is_finite());
        let spec = if let Some(a) = s.strip_prefix("n^") {
            Self::Power(num(a).ok_or_else(bad)?)
        } else if let Some(c) = s.strip_prefix("fwd+") {
            Self::Forwarding(num(c).ok_or_else(bad)?)
        } else if s == "fwd" {
            Self::Forwarding(0.0)
        } else {
            Self::Value(num(s).ok_or_else(bad)?)
        };
        let v = match spec {
            Self::Value(v) | Self::Power(v) | Self::Forwarding(v) => v,
        };
        if v < 0.0 {
            return Err(bad());
        }
        Ok(spec)
    }
}

impl Serialize for DeltaSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Value(v) => s.serialize_f64(*v),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for DeltaSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Float(f64),
            Text(String),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Int(i) => i.to_string(),
            Raw::Float(f) => f.to_string(),
            Raw::Text(t) => t,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

fn function_kind<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<FunctionKind, D::Error> {
    String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
}

fn default_function() -> FunctionKind {
    FunctionKind::Sum
}

fn default_cap() -> usize {
    crate::tradeoff::PlanOptions::default().exact_cap
}

/// A full experiment description.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_list: Vec<usize>,
    pub d: usize,
    pub nu_list: Vec<f64>,
    #[serde(rename = "delta", default = "default_delta")]
    pub delta_list: Vec<DeltaSpec>,
    pub policies: Vec<Policy>,
    #[serde(default = "default_function", deserialize_with = "function_kind")]
    pub function: FunctionKind,
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub path_mode: PathMode,
    #[serde(default = "default_cap")]
    pub exact_cap: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub record_wall_time: bool,
}

fn default_delta() -> Vec<DeltaSpec> {
    vec![DeltaSpec::Value(0.0)]
}

impl ExperimentConfig {
    /// A configuration with one value per list and no output file.
    pub fn single(policy: Policy, n: usize, d: usize, nu: f64, delta: DeltaSpec, trials: usize) -> Self {
        Self {
            n_list: vec![n],
            d,
            nu_list: vec![nu],
            delta_list: vec![delta],
            policies: vec![policy],
            function: FunctionKind::Sum,
            trials,
            base_seed: 0,
            path_mode: PathMode::Exact,
            exact_cap: default_cap(),
            output: None,
            workers: None,
            record_wall_time: false,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and applies environment overrides.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.apply_env(
            std::env::var_os("AGGSIM_OUTPUT_DIR").map(PathBuf::from),
            std::env::var("AGGSIM_WORKERS").ok(),
        )?;
        Ok(cfg)
    }

    /// Output directory and worker count overrides.
    pub fn apply_env(&mut self, output_dir: Option<PathBuf>, workers: Option<String>) -> Result<()> {
        if let Some(dir) = output_dir {
            let name = self
                .output
                .as_deref()
                .and_then(Path::file_name)
                .map_or_else(|| PathBuf::from("results.csv"), PathBuf::from);
            self.output = Some(dir.join(name));
        }
        if let Some(w) = workers {
            let w: usize = w
                .parse()
                .map_err(|_| Error::param(format!("AGGSIM_WORKERS must be a positive integer, got `{w}`")))?;
            self.workers = Some(w);
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let empty = |name: &str| Error::param(format!("`{name}` must not be empty"));
        if self.n_list.is_empty() {
            return Err(empty("n_list"));
        }
        if self.nu_list.is_empty() {
            return Err(empty("nu_list"));
        }
        if self.delta_list.is_empty() {
            return Err(empty("delta"));
        }
        if self.policies.is_empty() {
            return Err(empty("policies"));
        }
        if self.trials == 0 {
            return Err(Error::param("`trials` must be at least 1"));
        }
        if self.d == 0 {
            return Err(Error::param("`d` must be at least 1"));
        }
        if let Some(&n) = self.n_list.iter().find(|&&n| n < 2) {
            return Err(Error::param(format!("every n must be at least 2, got {n}")));
        }
        if let Some(&nu) = self.nu_list.iter().find(|&&v| v < 1.0 || !v.is_finite()) {
            return Err(Error::param(format!("path-loss exponents must be >= 1, got {nu}")));
        }
        if self.workers == Some(0) {
            return Err(Error::param("`workers` must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
n_list = [16, 32]
d = 2
nu_list = [2, 4.0]
delta = [0, 2.5, "n^0.5", "fwd+8"]
policies = ["alg2", "pi_agg", "pi_clq", "mst", "raw"]
function = "knng:3"
trials = 3
base_seed = 7
path_mode = "heuristic"
output = "out/results.csv"
"#;

    #[test]
    fn parses_a_full_config() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.n_list, vec![16, 32]);
        assert_eq!(cfg.nu_list, vec![2.0, 4.0]);
        assert_eq!(
            cfg.delta_list,
            vec![
                DeltaSpec::Value(0.0),
                DeltaSpec::Value(2.5),
                DeltaSpec::Power(0.5),
                DeltaSpec::Forwarding(8.0)
            ]
        );
        assert_eq!(cfg.policies.len(), 5);
        assert_eq!(cfg.function, FunctionKind::Knng(3));
        assert_eq!(cfg.path_mode, PathMode::Heuristic);
        assert!(!cfg.record_wall_time);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            SAMPLE.replace("trials = 3", "trials = 0"),
            SAMPLE.replace("n_list = [16, 32]", "n_list = []"),
            SAMPLE.replace("\"alg2\",", "\"greedy\","),
            SAMPLE.replace("\"n^0.5\"", "\"n^x\""),
            SAMPLE.replace("base_seed = 7", "base_seed = 7\ncolour = 1"),
            SAMPLE.replace("delta = [0,", "delta = [-1,"),
            SAMPLE.replace("nu_list = [2, 4.0]", "nu_list = [0.5]"),
        ];
        for text in bad {
            assert!(ExperimentConfig::from_toml(&text).is_err(), "{text}");
        }
    }

    #[test]
    fn delta_resolution() {
        assert_eq!(DeltaSpec::Power(0.5).resolve(256, Policy::PiAgg, 0), 16.0);
        assert_eq!(DeltaSpec::Forwarding(8.0).resolve(256, Policy::PiClq, 7), 15.0);
        assert_eq!(DeltaSpec::Forwarding(8.0).resolve(256, Policy::PiAgg, 7), 8.0);
        for s in ["3", "n^0.25", "fwd+2"] {
            assert_eq!(s.parse::<DeltaSpec>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn environment_overrides() {
        let mut cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        cfg.apply_env(Some(PathBuf::from("/tmp/x")), Some("3".into())).unwrap();
        assert_eq!(cfg.output, Some(PathBuf::from("/tmp/x/results.csv")));
        assert_eq!(cfg.workers, Some(3));
        assert!(cfg.apply_env(None, Some("zero".into())).is_err());
        assert!(cfg.apply_env(None, Some("0".into())).is_err());
    }
}
