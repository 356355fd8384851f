//! Expectation values over distributions on spin configurations, either by
//! exact enumeration of all `2^n` configurations or by Metropolis sampling.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nqs::{check_dense, SpinConfiguration};

/// Registers up to this size use exact enumeration under [`Backend::Auto`].
pub const EXACT_BACKEND_MAX_QUBITS: usize = 12;

const BATCHES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Exact for small registers, Markov chain above.
    #[default]
    Auto,
    Exact,
    Mcmc,
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Backend::Auto),
            "exact" => Ok(Backend::Exact),
            "mcmc" => Ok(Backend::Mcmc),
            other => Err(Error::InvalidArgument(format!(
                "unknown backend \"{other}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub backend: Backend,
    pub n_samples: usize,
    pub burn_in: usize,
    /// Keep every `thinning`-th chain state; `None` uses the qubit count.
    pub thinning: Option<usize>,
    pub seed: u64,
    /// Probability of proposing a uniformly random configuration instead of a
    /// single spin flip. Zero gives a pure single-flip chain.
    pub restart_probability: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Auto,
            n_samples: 5000,
            burn_in: 1000,
            thinning: None,
            seed: 0,
            restart_probability: 0.1,
        }
    }
}

impl SamplerConfig {
    pub fn exact() -> Self {
        Self {
            backend: Backend::Exact,
            ..Self::default()
        }
    }

    pub fn mcmc(seed: u64) -> Self {
        Self {
            backend: Backend::Mcmc,
            seed,
            ..Self::default()
        }
    }

    /// Concrete backend for an `n`-qubit register.
    pub fn resolved_backend(&self, n: usize) -> Backend {
        match self.backend {
            Backend::Auto if n <= EXACT_BACKEND_MAX_QUBITS => Backend::Exact,
            Backend::Auto => Backend::Mcmc,
            b => b,
        }
    }

    pub fn thinning_for(&self, n: usize) -> usize {
        self.thinning.unwrap_or(n).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidArgument(
                "n_samples must be at least 1".into(),
            ));
        }
        if self.thinning == Some(0) {
            return Err(Error::InvalidArgument("thinning must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.restart_probability) {
            return Err(Error::InvalidArgument(
                "restart_probability must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Copy with the chain seed replaced.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// A (possibly statistical) estimate of an expectation value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectationEstimate {
    pub value: Complex64,
    /// Zero for exact enumeration.
    pub std_error: f64,
}

impl ExpectationEstimate {
    pub fn exact(value: Complex64) -> Self {
        Self {
            value,
            std_error: 0.0,
        }
    }
}

/// Mix a base seed with a stream number (splitmix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// All `2^n` configurations in basis-index order.
pub fn enumerate_configs(n: usize) -> Result<Vec<SpinConfiguration>> {
    check_dense(n)?;
    Ok((0..1usize << n)
        .map(|b| SpinConfiguration::from_index(b, n))
        .collect())
}

/// `⟨f⟩_w = Σ f w / Σ w` over configurations of `n` spins.
///
/// The Markov-chain backend averages `f` over states drawn proportionally
/// to `w` and attaches a batch-means standard error.
pub fn expectation<F, W>(
    f: F,
    weight: W,
    cfg: &SamplerConfig,
    n: usize,
) -> Result<ExpectationEstimate>
where
    F: Fn(&SpinConfiguration) -> Complex64,
    W: Fn(&SpinConfiguration) -> f64,
{
    cfg.validate()?;
    check_dense(n)?;
    match cfg.resolved_backend(n) {
        Backend::Mcmc => {
            let logweight = |s: &SpinConfiguration| weight(s).ln();
            let chain = metropolis_chain(logweight, n, cfg)?;
            let mut values = Vec::with_capacity(chain.len());
            for s in &chain {
                let v = f(s);
                if !(v.re.is_finite() && v.im.is_finite()) {
                    return Err(Error::NonFinite {
                        index: s.basis_index(),
                    });
                }
                values.push(v);
            }
            Ok(mean_with_error(&values))
        }
        _ => {
            let mut total_w = 0.0;
            let mut acc = Complex64::new(0.0, 0.0);
            for b in 0..1usize << n {
                let s = SpinConfiguration::from_index(b, n);
                let w = weight(&s);
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::NonFinite { index: b });
                }
                if w == 0.0 {
                    continue;
                }
                let v = f(&s);
                if !(v.re.is_finite() && v.im.is_finite()) {
                    return Err(Error::NonFinite { index: b });
                }
                total_w += w;
                acc += v * w;
            }
            if total_w == 0.0 {
                return Err(Error::ZeroWeight);
            }
            Ok(ExpectationEstimate::exact(acc / total_w))
        }
    }
}

/// Sample mean and batch-means standard error of a chain of values.
pub fn mean_with_error(values: &[Complex64]) -> ExpectationEstimate {
    let n = values.len();
    let mean: Complex64 = values.iter().sum::<Complex64>() / n as f64;
    ExpectationEstimate {
        value: mean,
        std_error: batch_means_error(values, mean),
    }
}

pub(crate) fn batch_means_error(values: &[Complex64], mean: Complex64) -> f64 {
    let n = values.len();
    let batches = BATCHES.min(n);
    if batches < 2 {
        return 0.0;
    }
    let size = n / batches;
    let var: f64 = (0..batches)
        .map(|b| {
            let chunk = &values[b * size..(b + 1) * size];
            let m: Complex64 = chunk.iter().sum::<Complex64>() / size as f64;
            (m - mean).norm_sqr()
        })
        .sum::<f64>()
        / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

/// Metropolis chain over configurations with the given log-weight.
///
/// Each step proposes a single uniformly chosen spin flip (or, with
/// probability `restart_probability`, a uniformly random configuration) and
/// accepts with `min(1, exp(Δ logweight))`. States with `logweight = -∞`
/// are never entered.
pub fn metropolis_chain<L>(
    logweight: L,
    n: usize,
    cfg: &SamplerConfig,
) -> Result<Vec<SpinConfiguration>>
where
    L: Fn(&SpinConfiguration) -> f64,
{
    let indices = metropolis_indices(|b| logweight(&SpinConfiguration::from_index(b, n)), n, cfg)?;
    Ok(indices
        .into_iter()
        .map(|b| SpinConfiguration::from_index(b, n))
        .collect())
}

/// Index-level chain used by the learning loop.
pub(crate) fn metropolis_indices<L>(
    mut logweight: L,
    n: usize,
    cfg: &SamplerConfig,
) -> Result<Vec<usize>>
where
    L: FnMut(usize) -> f64,
{
    cfg.validate()?;
    check_dense(n)?;
    if n == 0 {
        return Err(Error::InvalidArgument(
            "chain needs at least one spin".into(),
        ));
    }
    let dim = 1usize << n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let usable = |lw: f64| lw.is_finite() || lw == f64::INFINITY;
    let mut current = None;
    for _ in 0..dim {
        let b = rng.random_range(0..dim);
        let lw = logweight(b);
        if usable(lw) {
            current = Some((b, lw));
            break;
        }
    }
    if current.is_none() {
        current = (0..dim)
            .map(|b| (b, logweight(b)))
            .find(|&(_, lw)| usable(lw));
    }
    let (mut state, mut lw) = current.ok_or(Error::ZeroWeight)?;

    let thinning = cfg.thinning_for(n);
    let total = cfg.burn_in + cfg.n_samples * thinning;
    let mut out = Vec::with_capacity(cfg.n_samples);
    for step in 0..total {
        let proposal = if rng.random::<f64>() < cfg.restart_probability {
            rng.random_range(0..dim)
        } else {
            state ^ (1 << rng.random_range(0..n))
        };
        let lw_new = logweight(proposal);
        if lw_new.is_nan() {
            return Err(Error::NonFinite { index: proposal });
        }
        let delta = lw_new - lw;
        if delta >= 0.0 || rng.random::<f64>().ln() < delta {
            state = proposal;
            lw = lw_new;
        }
        if step >= cfg.burn_in && (step - cfg.burn_in) % thinning == thinning - 1 {
            out.push(state);
        }
    }
    Ok(out)
}
