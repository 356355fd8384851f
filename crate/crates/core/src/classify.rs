//! Repeated-trial comparison of free and segmented learners.
//!
//! Each learner class yields a performance set: the mean of the final
//! fidelities of `M` independent trials and their population spread. A
//! segmented learner whose window meets the free learner's window is taken
//! as evidence that the target admits that separable form.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::{build_learner, train, ArchitectureConfig, FidelityTrace, LearningConfig};
use crate::nqs::TargetState;
use crate::sampling::SamplerConfig;
use crate::separability::{PartitionSpec, MAX_ENUMERATION_QUBITS};
use crate::states::local_index;

/// Everything needed to run one learner class on one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub trials: usize,
    pub architecture: ArchitectureConfig,
    pub learning: LearningConfig,
    pub sampler: SamplerConfig,
    /// Lower bound on the half-width of a performance window. Zero gives
    /// the bare `mean ± spread` rule.
    pub min_half_width: f64,
    pub oracle: OracleConfig,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            trials: 5,
            architecture: ArchitectureConfig::default(),
            learning: LearningConfig::default(),
            sampler: SamplerConfig::default(),
            min_half_width: 1e-3,
            oracle: OracleConfig::default(),
        }
    }
}

/// Final fidelities of repeated trials of one learner class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceSet {
    pub spec: PartitionSpec,
    pub mean: f64,
    /// `sqrt(⟨F²⟩ − ⟨F⟩²)` over the surviving trials.
    pub spread: f64,
    pub fidelities: Vec<f64>,
    pub requested_trials: usize,
    /// `(trial seed, error message)` of trials that failed.
    pub failures: Vec<(u64, String)>,
    pub min_half_width: f64,
}

impl PerformanceSet {
    /// Aggregate final fidelities; at least two are required.
    pub fn from_fidelities(
        spec: PartitionSpec,
        fidelities: Vec<f64>,
        min_half_width: f64,
    ) -> Result<Self> {
        if fidelities.len() < 2 {
            return Err(Error::TooFewTrials {
                survived: fidelities.len(),
                requested: fidelities.len(),
            });
        }
        let m = fidelities.len() as f64;
        let mean = fidelities.iter().sum::<f64>() / m;
        let second = fidelities.iter().map(|f| f * f).sum::<f64>() / m;
        let spread = (second - mean * mean).max(0.0).sqrt();
        Ok(Self {
            spec,
            mean,
            spread,
            requested_trials: fidelities.len(),
            fidelities,
            failures: Vec::new(),
            min_half_width,
        })
    }

    pub fn trials(&self) -> usize {
        self.fidelities.len()
    }

    pub fn half_width(&self) -> f64 {
        self.spread.max(self.min_half_width)
    }

    /// `[mean − w, mean + w]` clipped to `[0, 1]`.
    pub fn window(&self) -> (f64, f64) {
        let w = self.half_width();
        ((self.mean - w).max(0.0), (self.mean + w).min(1.0))
    }

    fn bare_window(&self) -> (f64, f64) {
        (
            (self.mean - self.spread).max(0.0),
            (self.mean + self.spread).min(1.0),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    WitnessedSeparable,
    EntangledAcrossPartition,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::WitnessedSeparable => "witnessed-separable",
            Self::EntangledAcrossPartition => "entangled-across-partition",
        })
    }
}

fn intersect(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.1 && b.0 <= a.1
}

/// Closed-interval test: touching windows count as intersecting.
pub fn witness_decision(free: &PerformanceSet, restricted: &PerformanceSet) -> Verdict {
    if intersect(free.window(), restricted.window()) {
        Verdict::WitnessedSeparable
    } else {
        Verdict::EntangledAcrossPartition
    }
}

/// A verdict that hangs on the window floor or on touching endpoints.
pub fn is_borderline(free: &PerformanceSet, restricted: &PerformanceSet) -> bool {
    let (a, b) = (free.window(), restricted.window());
    let touching = intersect(a, b) && (a.0 == b.1 || b.0 == a.1);
    let floor_only = intersect(a, b) && !intersect(free.bare_window(), restricted.bare_window());
    touching || floor_only
}

/// `⟨F_restricted⟩ / ⟨F_free⟩` clipped to `[0, 1]`.
pub fn relative_fidelity(free: &PerformanceSet, restricted: &PerformanceSet) -> Result<f64> {
    if free.mean.is_nan() || free.mean <= 0.0 {
        return Err(Error::FreeLearnerFailed);
    }
    Ok((restricted.mean / free.mean).clamp(0.0, 1.0))
}

/// `1 − R²`.
pub fn gme(r: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::InvalidArgument(format!(
            "relative fidelity {r} outside [0, 1]"
        )));
    }
    Ok(1.0 - r * r)
}

/// Train `config.trials` learners of class `spec` with seeds
/// `base_seed, base_seed + 1, ...`, keeping each trial's full trace.
///
/// Trials run in parallel; per-trial failures are returned, not raised.
pub fn train_trials(
    target: &TargetState,
    spec: &PartitionSpec,
    config: &ProtocolConfig,
    base_seed: u64,
) -> Result<Vec<(u64, Result<FidelityTrace>)>> {
    if config.trials < 2 {
        return Err(Error::InvalidArgument(format!(
            "at least 2 trials are required, got {}",
            config.trials
        )));
    }
    if spec.n() != target.n_visible() {
        return Err(Error::Dimension(format!(
            "partition over {} qubits, target has {}",
            spec.n(),
            target.n_visible()
        )));
    }
    config.learning.validate()?;
    config.sampler.validate()?;
    Ok((0..config.trials as u64)
        .into_par_iter()
        .map(|k| {
            let seed = base_seed.wrapping_add(k);
            let outcome = build_learner(spec, &config.architecture, seed).and_then(|mut state| {
                train(&mut state, target, &config.learning, &config.sampler, seed)
            });
            (seed, outcome)
        })
        .collect())
}

/// [`train_trials`] reduced to a performance set over the surviving trials.
pub fn run_trials(
    target: &TargetState,
    spec: &PartitionSpec,
    config: &ProtocolConfig,
    base_seed: u64,
) -> Result<PerformanceSet> {
    let outcomes: Vec<(u64, Result<f64>)> = train_trials(target, spec, config, base_seed)?
        .into_iter()
        .map(|(seed, r)| (seed, r.map(|t| t.final_fidelity())))
        .collect();
    let mut fidelities = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in outcomes {
        match outcome {
            Ok(f) => fidelities.push(f),
            Err(e) => {
                log::warn!("trial {seed} of learner {spec} failed: {e}");
                failures.push((seed, e.to_string()));
            }
        }
    }
    if fidelities.len() < 2 {
        return Err(Error::TooFewTrials {
            survived: fidelities.len(),
            requested: config.trials,
        });
    }
    let mut set = PerformanceSet::from_fidelities(spec.clone(), fidelities, config.min_half_width)?;
    set.requested_trials = config.trials;
    set.failures = failures;
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub restarts: usize,
    pub max_sweeps: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            restarts: 20,
            max_sweeps: 500,
            tol: 1e-10,
            seed: 0,
        }
    }
}

/// Best overlap of the target with a product of normalized block states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalFidelityResult {
    pub value: f64,
    /// Maximizing block states, in the block order of the spec.
    pub blocks: Vec<Vec<Complex64>>,
    pub converged: bool,
}

fn normalize(v: &mut [Complex64]) -> f64 {
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        for z in v.iter_mut() {
            *z /= n;
        }
    }
    n
}

/// `max |⟨φ| ⊗_m ψ_m⟩|` over normalized block states, by alternating
/// maximization: with all blocks but one fixed, the best remaining block is
/// the normalized contraction of `φ` against the others.
pub fn critical_fidelity_oracle(
    target: &TargetState,
    spec: &PartitionSpec,
    config: &OracleConfig,
) -> Result<CriticalFidelityResult> {
    let n = target.n_visible();
    if spec.n() != n {
        return Err(Error::Dimension(format!(
            "partition over {} qubits, target has {n}",
            spec.n()
        )));
    }
    if n > MAX_ENUMERATION_QUBITS {
        return Err(Error::Capacity {
            what: "oracle register size",
            value: n,
            cap: MAX_ENUMERATION_QUBITS,
        });
    }
    let phi = target.amplitudes();
    let blocks = spec.blocks();
    if blocks.len() == 1 {
        return Ok(CriticalFidelityResult {
            value: 1.0,
            blocks: vec![phi.to_vec()],
            converged: true,
        });
    }
    let dim = 1usize << n;
    let local: Vec<Vec<usize>> = blocks
        .iter()
        .map(|block| (0..dim).map(|b| local_index(b, n, block)).collect())
        .collect();

    let overlap = |psi: &[Vec<Complex64>]| -> f64 {
        (0..dim)
            .map(|b| {
                let prod: Complex64 = psi.iter().zip(&local).map(|(p, loc)| p[loc[b]]).product();
                phi[b].conj() * prod
            })
            .sum::<Complex64>()
            .norm()
    };

    let sweep = |psi: &mut Vec<Vec<Complex64>>| -> f64 {
        let mut value = 0.0;
        for m in 0..blocks.len() {
            let mut u = vec![Complex64::new(0.0, 0.0); psi[m].len()];
            for b in 0..dim {
                if phi[b].norm_sqr() == 0.0 {
                    continue;
                }
                let others: Complex64 = psi
                    .iter()
                    .zip(&local)
                    .enumerate()
                    .filter(|&(k, _)| k != m)
                    .map(|(_, (p, loc))| p[loc[b]].conj())
                    .product();
                u[local[m][b]] += phi[b] * others;
            }
            value = normalize(&mut u);
            if value > 0.0 {
                psi[m] = u;
            }
        }
        value
    };

    // largest-amplitude basis product as one deterministic start
    let peak = (0..dim)
        .max_by(|&a, &b| phi[a].norm_sqr().total_cmp(&phi[b].norm_sqr()))
        .unwrap_or(0);
    let basis_start: Vec<Vec<Complex64>> = blocks
        .iter()
        .zip(&local)
        .map(|(block, loc)| {
            let mut v = vec![Complex64::new(0.0, 0.0); 1 << block.len()];
            v[loc[peak]] = Complex64::new(1.0, 0.0);
            v
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut starts = vec![basis_start];
    for _ in 0..config.restarts {
        starts.push(
            blocks
                .iter()
                .map(|block| {
                    let mut v: Vec<Complex64> = (0..1usize << block.len())
                        .map(|_| {
                            Complex64::new(
                                StandardNormal.sample(&mut rng),
                                StandardNormal.sample(&mut rng),
                            )
                        })
                        .collect();
                    normalize(&mut v);
                    v
                })
                .collect(),
        );
    }

    let mut best: Option<CriticalFidelityResult> = None;
    for mut psi in starts {
        let mut previous = overlap(&psi);
        let mut converged = false;
        for _ in 0..config.max_sweeps {
            let value = sweep(&mut psi);
            if (value - previous).abs() < config.tol {
                converged = true;
                previous = value;
                break;
            }
            previous = value;
        }
        let value = overlap(&psi).max(previous.min(1.0)).min(1.0);
        if best.as_ref().is_none_or(|b| value > b.value) {
            best = Some(CriticalFidelityResult {
                value,
                blocks: psi,
                converged,
            });
        }
    }
    Ok(best.expect("at least one start"))
}

/// One candidate learner's line in a classification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerReport {
    pub spec: PartitionSpec,
    pub mean: f64,
    pub spread: f64,
    pub window: (f64, f64),
    pub verdict: Verdict,
    #[serde(rename = "R")]
    pub relative_fidelity: f64,
    #[serde(rename = "E")]
    pub gme: f64,
    pub alpha_oracle: f64,
    pub borderline: bool,
    pub fidelities: Vec<f64>,
    pub failures: Vec<(u64, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub target: String,
    pub free: LearnerReport,
    pub learners: Vec<LearnerReport>,
    pub notes: Vec<String>,
}

impl ClassificationReport {
    pub fn learner(&self, spec: &PartitionSpec) -> Option<&LearnerReport> {
        self.learners.iter().find(|l| &l.spec == spec)
    }

    pub fn witnessed(&self) -> Vec<&PartitionSpec> {
        self.learners
            .iter()
            .filter(|l| l.verdict == Verdict::WitnessedSeparable)
            .map(|l| &l.spec)
            .collect()
    }

    /// Fixed-width verdict table.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<16} {:>8} {:>8} {:>8} {:>8} {:>8}  {}\n",
            "learner", "mean", "spread", "R", "E", "alpha", "verdict"
        );
        for l in std::iter::once(&self.free).chain(&self.learners) {
            out.push_str(&format!(
                "{:<16} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}  {}{}\n",
                l.spec.to_string(),
                l.mean,
                l.spread,
                l.relative_fidelity,
                l.gme,
                l.alpha_oracle,
                l.verdict,
                if l.borderline { " (borderline)" } else { "" }
            ));
        }
        out
    }
}

fn learner_report(
    target: &TargetState,
    free: &PerformanceSet,
    set: &PerformanceSet,
    config: &ProtocolConfig,
) -> Result<LearnerReport> {
    let r = relative_fidelity(free, set)?;
    Ok(LearnerReport {
        spec: set.spec.clone(),
        mean: set.mean,
        spread: set.spread,
        window: set.window(),
        verdict: witness_decision(free, set),
        relative_fidelity: r,
        gme: gme(r)?,
        alpha_oracle: critical_fidelity_oracle(target, &set.spec, &config.oracle)?.value,
        borderline: is_borderline(free, set),
        fidelities: set.fidelities.clone(),
        failures: set.failures.clone(),
    })
}

/// Run the free learner and every candidate, and compare their windows.
pub fn classify(
    target: &TargetState,
    target_id: &str,
    candidates: &[PartitionSpec],
    config: &ProtocolConfig,
    base_seed: u64,
) -> Result<ClassificationReport> {
    let n = target.n_visible();
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidate learners given".into()));
    }
    if let Some(bad) = candidates.iter().find(|c| c.n() != n) {
        return Err(Error::Dimension(format!(
            "candidate {bad} covers {} qubits, target has {n}",
            bad.n()
        )));
    }
    let free_spec = PartitionSpec::free(n);
    let mut specs = vec![free_spec.clone()];
    for c in candidates {
        if !specs.contains(c) {
            specs.push(c.clone());
        }
    }
    let sets = specs
        .par_iter()
        .map(|spec| run_trials(target, spec, config, base_seed))
        .collect::<Result<Vec<_>>>()?;
    let free = &sets[0];
    if free.mean.is_nan() || free.mean <= 0.0 {
        return Err(Error::FreeLearnerFailed);
    }
    let free_report = learner_report(target, free, free, config)?;
    // A free candidate is the free learner itself and is reported trivially.
    let mut learners = Vec::with_capacity(candidates.len());
    for c in candidates {
        if learners.iter().any(|l: &LearnerReport| &l.spec == c) {
            continue;
        }
        let set = sets
            .iter()
            .find(|s| &s.spec == c)
            .expect("every candidate was run");
        learners.push(learner_report(target, free, set, config)?);
    }

    let mut notes = Vec::new();
    for l in &learners {
        if l.verdict == Verdict::EntangledAcrossPartition {
            notes.push(format!(
                "{} not witnessed: the target carries entanglement across at least one of its blocks",
                l.spec
            ));
        }
        if l.borderline {
            notes.push(format!(
                "{}: verdict rests on touching or minimum-width windows",
                l.spec
            ));
        }
    }
    if learners.iter().all(|l| l.spec.is_free()) {
        notes.push("no restricted candidates; the report is trivially witnessed".into());
    }
    Ok(ClassificationReport {
        target: target_id.to_string(),
        free: free_report,
        learners,
        notes,
    })
}

/// Relative fidelity, GME and oracle value for one segmented learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmeMeasurement {
    pub free: PerformanceSet,
    pub restricted: PerformanceSet,
    pub relative_fidelity: f64,
    pub gme: f64,
    pub alpha_oracle: f64,
}

impl GmeMeasurement {
    /// `1 − α²`, the value `E` should approach.
    pub fn oracle_gme(&self) -> f64 {
        1.0 - self.alpha_oracle * self.alpha_oracle
    }
}

pub fn measure_gme(
    target: &TargetState,
    spec: &PartitionSpec,
    config: &ProtocolConfig,
    base_seed: u64,
) -> Result<GmeMeasurement> {
    let (free, restricted) = rayon::join(
        || {
            run_trials(
                target,
                &PartitionSpec::free(target.n_visible()),
                config,
                base_seed,
            )
        },
        || run_trials(target, spec, config, base_seed),
    );
    let (free, restricted) = (free?, restricted?);
    let r = relative_fidelity(&free, &restricted)?;
    Ok(GmeMeasurement {
        relative_fidelity: r,
        gme: gme(r)?,
        alpha_oracle: critical_fidelity_oracle(target, spec, &config.oracle)?.value,
        free,
        restricted,
    })
}
