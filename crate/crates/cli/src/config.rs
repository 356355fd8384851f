use std::path::{Path, PathBuf};

use serde::Deserialize;

use sepnet::classify::OracleConfig;
use sepnet::nqs::TargetDocument;
use sepnet::states::{from_descriptor, tensor, NamedTarget};
use sepnet::{
    ArchitectureConfig, Backend, LearningConfig, PartitionSpec, ProtocolConfig, SamplerConfig,
    TargetState,
};

use crate::error::CliError;

/// One experiment, as read from a JSON file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Free-form note echoed at the start of a run.
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub target: Option<TargetSpec>,
    #[serde(default)]
    pub learners: Vec<String>,
    #[serde(default)]
    pub learning: LearningConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub architecture: ArchitectureConfig,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Gaussian smoothing variance. Unset means 0 on the exact backend and
    /// 0.1 on the Markov-chain backend.
    #[serde(default)]
    pub sigma2: Option<f64>,
    #[serde(default = "default_min_half_width")]
    pub min_half_width: f64,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub sweep: Option<Sweep>,
}

fn default_trials() -> usize {
    5
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_min_half_width() -> f64 {
    ProtocolConfig::default().min_half_width
}

/// A named state, a tensor product of named states, or explicit amplitudes.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum TargetSpec {
    Descriptor(String),
    Tensor { tensor: Vec<Factor> },
    Explicit(ExplicitTarget),
}

/// A named state placed on the listed (1-based, ascending) qubits.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Factor {
    pub target: String,
    pub qubits: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitTarget {
    pub n: usize,
    pub entries: Vec<(usize, f64, f64)>,
    #[serde(default)]
    pub sigma2: Option<f64>,
}

/// A one-parameter state family evaluated on a grid.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub family: String,
    pub values: Vec<f64>,
}

/// Command-line values that replace config fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub backend: Option<Backend>,
    pub trials: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(backend) = o.backend {
            self.sampler.backend = backend;
        }
        if let Some(trials) = o.trials {
            self.trials = trials;
        }
    }

    pub fn protocol(&self) -> Result<ProtocolConfig, CliError> {
        self.learning.validate()?;
        self.sampler.validate()?;
        if self.trials < 2 {
            return Err(CliError::Config(format!(
                "trials must be at least 2, got {}",
                self.trials
            )));
        }
        if !(self.min_half_width >= 0.0 && self.min_half_width.is_finite()) {
            return Err(CliError::Config(format!(
                "min_half_width must be a nonnegative number, got {}",
                self.min_half_width
            )));
        }
        Ok(ProtocolConfig {
            trials: self.trials,
            architecture: self.architecture.clone(),
            learning: self.learning.clone(),
            sampler: self.sampler.clone(),
            min_half_width: self.min_half_width,
            oracle: self.oracle.clone(),
        })
    }

    /// The configured target with its smoothing applied, and a label for it.
    pub fn target(&self) -> Result<(String, TargetState), CliError> {
        let spec = self
            .target
            .as_ref()
            .ok_or_else(|| CliError::Config("no target given".into()))?;
        let (label, state, declared_sigma2) = match spec {
            TargetSpec::Descriptor(text) => {
                let t = from_descriptor(text)?;
                (text.clone(), t.state, None)
            }
            TargetSpec::Tensor { tensor } => {
                let (label, state) = tensor_target(tensor)?;
                (label, state, None)
            }
            TargetSpec::Explicit(doc) => {
                let plain = TargetDocument {
                    n: doc.n,
                    entries: doc.entries.clone(),
                    sigma2: 0.0,
                };
                ("explicit".to_string(), plain.to_target()?, doc.sigma2)
            }
        };
        let state = self.smooth(state, declared_sigma2)?;
        Ok((label, state))
    }

    /// The sweep family at parameter `p`, smoothed like [`Self::target`].
    pub fn family_member(&self, p: f64) -> Result<(String, TargetState), CliError> {
        let sweep = self
            .sweep
            .as_ref()
            .ok_or_else(|| CliError::Config("measure needs a \"sweep\" section".into()))?;
        let label = format!("{}:{p}", sweep.family);
        let state = from_descriptor(&label)?.state;
        Ok((label, self.smooth(state, None)?))
    }

    fn smooth(&self, state: TargetState, declared: Option<f64>) -> Result<TargetState, CliError> {
        let sigma2 = self.sigma2.or(declared).unwrap_or_else(|| {
            match self.sampler.resolved_backend(state.n_visible()) {
                Backend::Mcmc => 0.1,
                _ => 0.0,
            }
        });
        if sigma2 == 0.0 {
            return Ok(state);
        }
        Ok(state.smoothed(sigma2)?)
    }

    /// Parse the learner list for an `n`-qubit register; an empty list is an error.
    pub fn learner_specs(&self, n: usize) -> Result<Vec<PartitionSpec>, CliError> {
        if self.learners.is_empty() {
            return Err(CliError::Config("learner list is empty".into()));
        }
        self.learners
            .iter()
            .map(|text| {
                PartitionSpec::parse(text, n)
                    .map_err(|e| CliError::Config(format!("learner \"{text}\": {e}")))
            })
            .collect()
    }
}

fn tensor_target(factors: &[Factor]) -> Result<(String, TargetState), CliError> {
    if factors.is_empty() {
        return Err(CliError::Config(
            "tensor target needs at least one factor".into(),
        ));
    }
    let mut blocks = Vec::with_capacity(factors.len());
    for f in factors {
        if f.qubits.is_empty() || f.qubits.contains(&0) {
            return Err(CliError::Config(format!(
                "factor {}: qubits must be a nonempty list of 1-based indices",
                f.target
            )));
        }
        if f.qubits.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Config(format!(
                "factor {}: qubits must be ascending",
                f.target
            )));
        }
        blocks.push(f.qubits.iter().map(|q| q - 1).collect::<Vec<_>>());
    }
    let n = blocks.iter().map(Vec::len).sum();
    let assignment = PartitionSpec::new(n, blocks.clone())?;

    // `tensor` places factor m on canonical block m.
    let mut named: Vec<NamedTarget> = Vec::with_capacity(factors.len());
    for block in assignment.blocks() {
        let idx = blocks
            .iter()
            .position(|b| b == block)
            .expect("block came from a factor");
        named.push(from_descriptor(&factors[idx].target)?);
    }
    let label = factors
        .iter()
        .map(|f| {
            let qs: Vec<String> = f.qubits.iter().map(usize::to_string).collect();
            format!("{}@{}", f.target, qs.join(","))
        })
        .collect::<Vec<_>>()
        .join(" x ");
    Ok((label, tensor(&named, &assignment)?.state))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = ExperimentConfig::from_json(r#"{"target": "bell", "learners": ["free", "1|2"]}"#)
            .unwrap();
        assert_eq!(c.trials, 5);
        assert_eq!(c.output_dir, PathBuf::from("out"));
        let (label, t) = c.target().unwrap();
        assert_eq!(label, "bell");
        assert_eq!(t.smoothing_variance(), 0.0);
        assert_eq!(c.learner_specs(2).unwrap().len(), 2);
    }

    #[test]
    fn smoothing_default_follows_backend() {
        let mut c = ExperimentConfig::from_json(r#"{"target": "bell"}"#).unwrap();
        c.apply(&Overrides {
            backend: Some(Backend::Mcmc),
            ..Overrides::default()
        });
        assert_eq!(c.target().unwrap().1.smoothing_variance(), 0.1);
        c.sigma2 = Some(0.0);
        assert_eq!(c.target().unwrap().1.smoothing_variance(), 0.0);
    }

    #[test]
    fn tensor_factors_land_on_their_qubits() {
        let c = ExperimentConfig::from_json(
            r#"{"target": {"tensor": [{"target": "plus", "qubits": [3]}, {"target": "bell:psi-", "qubits": [1, 2]}]}}"#,
        )
        .unwrap();
        let (_, t) = c.target().unwrap();
        // (|01> - |10>)/sqrt2 on qubits 1,2 times |+> on qubit 3.
        let a = t.amplitudes();
        let h = 0.5;
        for (i, want) in [0.0, 0.0, h, h, -h, -h, 0.0, 0.0].iter().enumerate() {
            assert!(
                (a[i].re - want).abs() < 1e-12 && a[i].im.abs() < 1e-12,
                "index {i}"
            );
        }
    }

    #[test]
    fn explicit_target_keeps_its_smoothing() {
        let c = ExperimentConfig::from_json(
            r#"{"target": {"n": 1, "entries": [[0, 1.0, 0.0], [1, 0.0, 1.0]], "sigma2": 0.5}}"#,
        )
        .unwrap();
        let (label, t) = c.target().unwrap();
        assert_eq!(label, "explicit");
        assert_eq!(t.smoothing_variance(), 0.5);
    }

    #[test]
    fn bad_configs_are_config_errors() {
        for text in [
            r#"{"target": "bell", "unknown": 1}"#,
            r#"{"target": "bell", "learning": {"eta": 0.1}}"#,
            "not json",
        ] {
            assert!(
                matches!(ExperimentConfig::from_json(text), Err(CliError::Config(_))),
                "{text}"
            );
        }
        let c =
            ExperimentConfig::from_json(r#"{"target": "bell", "learners": ["1|2|3"]}"#).unwrap();
        assert!(matches!(c.learner_specs(2), Err(CliError::Config(_))));
        let c = ExperimentConfig::from_json(r#"{"target": "bell"}"#).unwrap();
        assert!(matches!(c.learner_specs(2), Err(CliError::Config(_))));
        let c = ExperimentConfig::from_json(r#"{"target": "nonsense"}"#).unwrap();
        assert!(matches!(c.target(), Err(CliError::Config(_))));
    }
}
