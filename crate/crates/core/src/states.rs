//! Benchmark target states.
//!
//! Qubit 1 is the most significant bit of the basis index, so `|01⟩` is
//! index 1 and `|10⟩` is index 2.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nqs::{check_dense, TargetState};
use crate::separability::PartitionSpec;

/// A target state together with the descriptor that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTarget {
    pub name: String,
    pub state: TargetState,
}

impl NamedTarget {
    fn new(name: impl Into<String>, n: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        Ok(Self {
            name: name.into(),
            state: TargetState::from_amplitudes(n, amplitudes)?,
        })
    }

    pub fn n_visible(&self) -> usize {
        self.state.n_visible()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        self.state.amplitudes()
    }
}

fn real(values: &[f64]) -> Vec<Complex64> {
    values.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BellKind {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl FromStr for BellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "phi+" | "phi_plus" => Ok(Self::PhiPlus),
            "phi-" | "phi_minus" => Ok(Self::PhiMinus),
            "psi+" | "psi_plus" => Ok(Self::PsiPlus),
            "psi-" | "psi_minus" => Ok(Self::PsiMinus),
            other => Err(Error::Target(format!("unknown Bell state '{other}'"))),
        }
    }
}

impl fmt::Display for BellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PhiPlus => "phi+",
            Self::PhiMinus => "phi-",
            Self::PsiPlus => "psi+",
            Self::PsiMinus => "psi-",
        })
    }
}

pub fn bell(which: BellKind) -> NamedTarget {
    let r = FRAC_1_SQRT_2;
    let amps = match which {
        BellKind::PhiPlus => [r, 0.0, 0.0, r],
        // (1 ⊗ σ_z) Φ⁺
        BellKind::PhiMinus => [r, 0.0, 0.0, -r],
        BellKind::PsiPlus => [0.0, r, r, 0.0],
        BellKind::PsiMinus => [0.0, r, -r, 0.0],
    };
    NamedTarget::new(format!("bell:{which}"), 2, real(&amps)).expect("valid Bell vector")
}

fn check_size(n: usize, min: usize, what: &str) -> Result<()> {
    if n < min {
        return Err(Error::Target(format!(
            "{what} needs at least {min} qubits, got {n}"
        )));
    }
    check_dense(n)
}

pub fn ghz(n: usize) -> Result<NamedTarget> {
    check_size(n, 2, "GHZ")?;
    let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
    amps[0] = Complex64::new(FRAC_1_SQRT_2, 0.0);
    amps[(1 << n) - 1] = Complex64::new(FRAC_1_SQRT_2, 0.0);
    NamedTarget::new(format!("ghz:{n}"), n, amps)
}

fn weight_class(n: usize, ones: u32) -> Vec<Complex64> {
    let count = (0..1usize << n).filter(|b| b.count_ones() == ones).count() as f64;
    (0..1usize << n)
        .map(|b| {
            if b.count_ones() == ones {
                Complex64::new(1.0 / count.sqrt(), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect()
}

/// Equal superposition of all single-excitation basis states.
pub fn w(n: usize) -> Result<NamedTarget> {
    check_size(n, 3, "W")?;
    NamedTarget::new(format!("w:{n}"), n, weight_class(n, 1))
}

/// Bit-flipped W state (single holes).
pub fn wbar(n: usize) -> Result<NamedTarget> {
    check_size(n, 3, "W-bar")?;
    NamedTarget::new(format!("wbar:{n}"), n, weight_class(n, n as u32 - 1))
}

pub fn plus() -> NamedTarget {
    NamedTarget::new("plus", 1, real(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2])).unwrap()
}

pub fn minus() -> NamedTarget {
    NamedTarget::new("minus", 1, real(&[FRAC_1_SQRT_2, -FRAC_1_SQRT_2])).unwrap()
}

pub fn zero() -> NamedTarget {
    NamedTarget::new("zero", 1, real(&[1.0, 0.0])).unwrap()
}

pub fn one() -> NamedTarget {
    NamedTarget::new("one", 1, real(&[0.0, 1.0])).unwrap()
}

/// Kronecker product with factor `m` placed on block `m` of `assignment`
/// (blocks in canonical order). Inside a block the lowest qubit index is the
/// factor's most significant bit.
pub fn tensor(factors: &[NamedTarget], assignment: &PartitionSpec) -> Result<NamedTarget> {
    let blocks = assignment.blocks();
    if factors.len() != blocks.len() {
        return Err(Error::Dimension(format!(
            "{} factors for {} blocks",
            factors.len(),
            blocks.len()
        )));
    }
    for (f, b) in factors.iter().zip(blocks) {
        if f.n_visible() != b.len() {
            return Err(Error::Dimension(format!(
                "factor '{}' has {} qubits but its block has {}",
                f.name,
                f.n_visible(),
                b.len()
            )));
        }
    }
    let n = assignment.n();
    check_dense(n)?;
    let amps = (0..1usize << n)
        .map(|b| {
            factors
                .iter()
                .zip(blocks)
                .map(|(f, block)| f.state.amplitude(local_index(b, n, block)))
                .product()
        })
        .collect();
    let name = factors
        .iter()
        .zip(blocks)
        .map(|(f, block)| {
            let qubits: Vec<String> = block.iter().map(|q| (q + 1).to_string()).collect();
            format!("{}@{}", f.name, qubits.join(","))
        })
        .collect::<Vec<_>>()
        .join(" * ");
    NamedTarget::new(name, n, amps)
}

/// Index of the basis state of `block` (0-based qubits) inside global index `b`.
pub(crate) fn local_index(b: usize, n: usize, block: &[usize]) -> usize {
    block
        .iter()
        .fold(0, |acc, &q| (acc << 1) | ((b >> (n - 1 - q)) & 1))
}

/// `√p|00⟩ + √(1−p)|11⟩`.
pub fn variable_bell(p: f64) -> Result<NamedTarget> {
    check_probability(p)?;
    NamedTarget::new(
        format!("variable_bell:{p}"),
        2,
        real(&[p.sqrt(), 0.0, 0.0, (1.0 - p).sqrt()]),
    )
}

/// `p|W⟩ + √(1−p)|W̄⟩` on three qubits, renormalized.
pub fn variable_w(p: f64) -> Result<NamedTarget> {
    check_probability(p)?;
    let wv = weight_class(3, 1);
    let wb = weight_class(3, 2);
    let q = (1.0 - p).sqrt();
    let amps = wv.iter().zip(&wb).map(|(a, b)| a * p + b * q).collect();
    NamedTarget::new(format!("variable_w:{p}"), 3, amps)
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Target(format!("parameter p = {p} outside [0, 1]")));
    }
    Ok(())
}

/// Controlled-phase gates between neighbours of an open chain, applied to `|+⟩^n`.
pub fn cluster_1d(n: usize) -> Result<NamedTarget> {
    check_size(n, 2, "cluster state")?;
    let scale = (0.5f64).powf(n as f64 / 2.0);
    let amps = (0..1usize << n)
        .map(|b| {
            // adjacent pairs both in |1⟩ pick up a sign
            let pairs = (b & (b >> 1)).count_ones();
            let sign = if pairs % 2 == 0 { 1.0 } else { -1.0 };
            Complex64::new(sign * scale, 0.0)
        })
        .collect();
    NamedTarget::new(format!("cluster_1d:{n}"), n, amps)
}

/// The four-qubit chain in its Hadamard-rotated form
/// `(|0000⟩ + |0011⟩ + |1100⟩ − |1111⟩)/2 = (|00⟩Φ⁺ + |11⟩Φ⁻)/√2`.
pub fn cluster_c4() -> NamedTarget {
    let mut amps = vec![0.0; 16];
    amps[0b0000] = 0.5;
    amps[0b0011] = 0.5;
    amps[0b1100] = 0.5;
    amps[0b1111] = -0.5;
    NamedTarget::new("c4", 4, real(&amps)).unwrap()
}

/// Independent complex-Gaussian states on contiguous blocks of the given sizes.
pub fn random_biseparable(block_sizes: &[usize], seed: u64) -> Result<NamedTarget> {
    if block_sizes.is_empty() || block_sizes.contains(&0) {
        return Err(Error::Target("block sizes must be positive".into()));
    }
    let spec = PartitionSpec::contiguous(block_sizes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factors = block_sizes
        .iter()
        .map(|&k| {
            let amps: Vec<Complex64> = (0..1usize << k)
                .map(|_| {
                    Complex64::new(
                        StandardNormal.sample(&mut rng),
                        StandardNormal.sample(&mut rng),
                    )
                })
                .collect();
            NamedTarget::new(format!("random:{k}"), k, amps)
        })
        .collect::<Result<Vec<_>>>()?;
    let sizes: Vec<String> = block_sizes.iter().map(usize::to_string).collect();
    Ok(NamedTarget {
        name: format!("random_biseparable:{}@{seed}", sizes.join(",")),
        ..tensor(&factors, &spec)?
    })
}

/// Build a target from a descriptor such as `ghz:3`, `bell:phi+`,
/// `variable_bell:0.3`, `cluster_1d:4` or `random_biseparable:3,3@7`.
pub fn from_descriptor(text: &str) -> Result<NamedTarget> {
    let text = text.trim();
    let (name, arg) = match text.split_once(':') {
        Some((n, a)) => (n.trim(), Some(a.trim())),
        None => (text, None),
    };
    let need =
        || arg.ok_or_else(|| Error::Target(format!("'{name}' needs a parameter, e.g. '{name}:3'")));
    let count = |a: &str| {
        a.parse::<usize>()
            .map_err(|_| Error::Target(format!("'{a}' is not a qubit count")))
    };
    let real_param = |a: &str| {
        a.parse::<f64>()
            .map_err(|_| Error::Target(format!("'{a}' is not a number")))
    };
    let no_arg = |t: NamedTarget| match arg {
        None => Ok(t),
        Some(_) => Err(Error::Target(format!("'{name}' takes no parameter"))),
    };
    match name {
        "bell" => Ok(bell(arg.unwrap_or("phi+").parse()?)),
        "ghz" => ghz(count(need()?)?),
        "w" => w(count(need()?)?),
        "wbar" => wbar(count(need()?)?),
        "plus" => no_arg(plus()),
        "minus" => no_arg(minus()),
        "zero" => no_arg(zero()),
        "c4" => no_arg(cluster_c4()),
        "one" => no_arg(one()),
        "variable_bell" => variable_bell(real_param(need()?)?),
        "variable_w" => variable_w(real_param(need()?)?),
        "cluster_1d" => cluster_1d(count(need()?)?),
        "random_biseparable" => {
            let a = need()?;
            let (sizes, seed) = a.split_once('@').unwrap_or((a, "0"));
            let sizes = sizes
                .split(',')
                .map(|s| count(s.trim()))
                .collect::<Result<Vec<_>>>()?;
            let seed = seed
                .trim()
                .parse::<u64>()
                .map_err(|_| Error::Target(format!("'{seed}' is not a seed")))?;
            random_biseparable(&sizes, seed)
        }
        other => Err(Error::Target(format!("unknown target '{other}'"))),
    }
}
