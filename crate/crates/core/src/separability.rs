//! Partitions of the qubit register, segmentation masks for separable
//! learners, and counting of separability classes.
//!
//! A [`PartitionSpec`] lists `K` disjoint blocks of qubits. A learner built on
//! it couples each block only to its own hidden units, so the network can
//! only represent products of block states.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest register for explicit set-partition enumeration.
pub const MAX_ENUMERATION_QUBITS: usize = 10;
/// Largest register for exact Bell numbers and block counts.
pub const MAX_COUNT_QUBITS: usize = 25;

/// `K` disjoint, nonempty qubit blocks covering `{0..n}`.
///
/// Indices are 0-based internally; the text form is 1-based (`"1,2|3"`).
/// Blocks are kept sorted internally and ordered by their smallest element.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PartitionSpec {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

impl PartitionSpec {
    /// Build from 0-based blocks, validating coverage and canonicalizing.
    pub fn new(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Partition(
                "register must contain at least one qubit".into(),
            ));
        }
        let mut seen = vec![false; n];
        for block in &blocks {
            if block.is_empty() {
                return Err(Error::Partition("empty block".into()));
            }
            for &q in block {
                if q >= n {
                    return Err(Error::Partition(format!(
                        "qubit {} outside a register of {n}",
                        q + 1
                    )));
                }
                if std::mem::replace(&mut seen[q], true) {
                    return Err(Error::Partition(format!("qubit {} appears twice", q + 1)));
                }
            }
        }
        if let Some(q) = seen.iter().position(|&s| !s) {
            return Err(Error::Partition(format!(
                "qubit {} is not assigned to a block",
                q + 1
            )));
        }
        Ok(Self::canonical(n, blocks))
    }

    fn canonical(n: usize, mut blocks: Vec<Vec<usize>>) -> Self {
        for b in &mut blocks {
            b.sort_unstable();
        }
        blocks.sort_by_key(|b| b[0]);
        Self { n, blocks }
    }

    /// The single-block (unrestricted) partition.
    pub fn free(n: usize) -> Self {
        Self {
            n,
            blocks: vec![(0..n).collect()],
        }
    }

    /// Every qubit in its own block.
    pub fn fully_separable(n: usize) -> Self {
        Self {
            n,
            blocks: (0..n).map(|q| vec![q]).collect(),
        }
    }

    /// Contiguous blocks of the given sizes: `[3, 3]` is `1,2,3|4,5,6`.
    pub fn contiguous(sizes: &[usize]) -> Result<Self> {
        let mut start = 0;
        let mut blocks = Vec::with_capacity(sizes.len());
        for &size in sizes {
            blocks.push((start..start + size).collect());
            start += size;
        }
        Self::new(start, blocks)
    }

    /// Parse `"1,2|3"` (1-based) or `"free"` for a register of `n` qubits.
    pub fn parse(text: &str, n: usize) -> Result<Self> {
        if text.trim() == "free" {
            return Ok(Self::free(n));
        }
        let spec: Self = text.parse()?;
        if spec.n != n {
            return Err(Error::Partition(format!(
                "\"{text}\" covers {} qubits, register has {n}",
                spec.n
            )));
        }
        Ok(spec)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn is_free(&self) -> bool {
        self.blocks.len() == 1
    }

    pub fn shape(&self) -> PartitionShape {
        PartitionShape::new(self.blocks.iter().map(Vec::len).collect())
    }

    /// Index of the block containing qubit `q` (0-based).
    pub fn block_of(&self, q: usize) -> usize {
        self.blocks
            .iter()
            .position(|b| b.contains(&q))
            .expect("qubit outside register")
    }

    /// True when every block of `self` lies inside a block of `coarser`.
    pub fn refines(&self, coarser: &PartitionSpec) -> bool {
        self.n == coarser.n
            && self.blocks.iter().all(|b| {
                let home = coarser.block_of(b[0]);
                b.iter().all(|&q| coarser.block_of(q) == home)
            })
    }
}

impl PartitionSpec {
    /// The explicit 1-based form, also for the single-block partition.
    pub fn block_text(&self) -> String {
        let text: Vec<String> = self
            .blocks
            .iter()
            .map(|b| {
                b.iter()
                    .map(|q| (q + 1).to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect();
        text.join("|")
    }
}

impl fmt::Display for PartitionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_free() {
            return f.write_str("free");
        }
        f.write_str(&self.block_text())
    }
}

impl FromStr for PartitionSpec {
    type Err = Error;

    /// Parses the explicit block form; `"free"` needs a register size and is
    /// only accepted through [`PartitionSpec::parse`].
    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        if text == "free" {
            return Err(Error::Partition("\"free\" needs a register size".into()));
        }
        let mut blocks = Vec::new();
        for part in text.split('|') {
            let mut block = Vec::new();
            for tok in part.split(',') {
                let tok = tok.trim();
                let q: usize = tok.parse().map_err(|_| {
                    Error::Partition(format!("bad qubit index \"{tok}\" in \"{text}\""))
                })?;
                if q == 0 {
                    return Err(Error::Partition("qubit indices are 1-based".into()));
                }
                block.push(q - 1);
            }
            blocks.push(block);
        }
        let n = blocks.iter().flatten().max().map_or(0, |&m| m + 1);
        Self::new(n, blocks)
    }
}

impl Serialize for PartitionSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.block_text())
    }
}

/// Deserializes only the explicit block form (the register size of `"free"`
/// is not recoverable from the text alone, so serialization never emits it).
impl<'de> Deserialize<'de> for PartitionSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Which couplings of an `n × h` weight matrix a segmented learner may use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationMask {
    n: usize,
    h_total: usize,
    allocation: Vec<Vec<usize>>,
    allowed: Vec<bool>,
}

impl SegmentationMask {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h_total(&self) -> usize {
        self.h_total
    }

    /// Hidden units dedicated to each block, in block order.
    pub fn allocation(&self) -> &[Vec<usize>] {
        &self.allocation
    }

    /// Row-major `n × h_total` table; `true` where the coupling may be nonzero.
    pub fn allowed(&self) -> &[bool] {
        &self.allowed
    }

    pub fn is_allowed(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.h_total + j]
    }

    pub(crate) fn check_layer(&self, n: usize, h: usize) -> Result<()> {
        if self.n != n || self.h_total != h {
            return Err(Error::Dimension(format!(
                "mask is {}×{}, layer is {n}×{h}",
                self.n, self.h_total
            )));
        }
        Ok(())
    }
}

/// Segment an RBM layer according to `spec`: block `m` receives
/// `neurons_per_qubit · |S_m|` hidden units, and couplings between a qubit
/// and another block's hidden units are forbidden.
pub fn make_mask(spec: &PartitionSpec, neurons_per_qubit: usize) -> Result<SegmentationMask> {
    if neurons_per_qubit == 0 {
        return Err(Error::InvalidArgument(
            "neurons per qubit must be at least 1".into(),
        ));
    }
    let n = spec.n();
    let h_total = neurons_per_qubit * n;
    let mut allocation = Vec::with_capacity(spec.k());
    let mut allowed = vec![false; n * h_total];
    let mut next = 0;
    for block in spec.blocks() {
        let hidden: Vec<usize> = (next..next + neurons_per_qubit * block.len()).collect();
        next += hidden.len();
        for &q in block {
            for &j in &hidden {
                allowed[q * h_total + j] = true;
            }
        }
        allocation.push(hidden);
    }
    Ok(SegmentationMask {
        n,
        h_total,
        allocation,
        allowed,
    })
}

/// Complex parameters of a segmented layer: `N + H + Σ_m |H_m||S_m|`.
pub fn count_free_params(mask: &SegmentationMask) -> usize {
    mask.n + mask.h_total + mask.allowed.iter().filter(|&&a| a).count()
}

/// Sizes of the blocks of a partition, largest first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PartitionShape {
    parts: Vec<usize>,
}

impl PartitionShape {
    pub fn new(mut parts: Vec<usize>) -> Self {
        parts.sort_unstable_by(|a, b| b.cmp(a));
        Self { parts }
    }

    pub fn parts(&self) -> &[usize] {
        &self.parts
    }

    pub fn total(&self) -> usize {
        self.parts.iter().sum()
    }
}

/// All set partitions of `n` qubits (exactly `k` blocks when given), canonical
/// and duplicate-free, generated from restricted growth strings.
pub fn enumerate_set_partitions(n: usize, k: Option<usize>) -> Result<Vec<PartitionSpec>> {
    if n == 0 || n > MAX_ENUMERATION_QUBITS {
        return Err(Error::Capacity {
            what: "qubits to enumerate",
            value: n,
            cap: MAX_ENUMERATION_QUBITS,
        });
    }
    let mut out = Vec::new();
    // growth[i] = block label of qubit i, growth[0] = 0, growth[i] <= 1 + max(growth[..i])
    let mut growth = vec![0usize; n];
    let mut maxes = vec![0usize; n];
    loop {
        let blocks_used = maxes[n - 1] + 1;
        if k.is_none_or(|k| k == blocks_used) {
            let mut blocks = vec![Vec::new(); blocks_used];
            for (q, &label) in growth.iter().enumerate() {
                blocks[label].push(q);
            }
            out.push(PartitionSpec { n, blocks });
        }
        // advance to the next restricted growth string
        let mut i = n - 1;
        loop {
            if i == 0 {
                return Ok(out);
            }
            if growth[i] <= maxes[i - 1] {
                growth[i] += 1;
                maxes[i] = maxes[i - 1].max(growth[i]);
                for j in i + 1..n {
                    growth[j] = 0;
                    maxes[j] = maxes[i];
                }
                break;
            }
            i -= 1;
        }
    }
}

fn factorial(n: usize) -> Result<u128> {
    (1..=n as u128).try_fold(1u128, |acc, x| {
        acc.checked_mul(x).ok_or(Error::Overflow("factorial"))
    })
}

/// `n! / Π m_j!`, the number of ordered fillings of blocks with sizes `shape`.
pub fn multinomial(n: usize, shape: &PartitionShape) -> Result<u128> {
    if shape.total() != n {
        return Err(Error::InvalidArgument(format!(
            "shape {:?} does not sum to {n}",
            shape.parts()
        )));
    }
    // product of binomials keeps intermediates small
    let mut remaining = n as u128;
    let mut acc: u128 = 1;
    for &m in shape.parts() {
        acc = acc
            .checked_mul(binomial(remaining, m as u128)?)
            .ok_or(Error::Overflow("multinomial"))?;
        remaining -= m as u128;
    }
    Ok(acc)
}

fn binomial(n: u128, k: u128) -> Result<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i).ok_or(Error::Overflow("binomial"))? / (i + 1);
    }
    Ok(acc)
}

/// Number of distinct set partitions with block sizes `shape`: the
/// multinomial divided by `Π_l g(l)!`, with `g(l)` blocks of size `l`.
pub fn shape_degeneracy(n: usize, shape: &PartitionShape) -> Result<u128> {
    let mut total = multinomial(n, shape)?;
    let parts = shape.parts();
    let mut i = 0;
    while i < parts.len() {
        let run = parts[i..].iter().take_while(|&&p| p == parts[i]).count();
        total /= factorial(run)?;
        i += run;
    }
    Ok(total)
}

/// Integer partitions of `n` into exactly `k` positive parts, largest part first.
pub fn partitions_exactly_k(n: usize, k: usize) -> Vec<PartitionShape> {
    fn rec(
        remaining: usize,
        slots: usize,
        cap: usize,
        prefix: &mut Vec<usize>,
        out: &mut Vec<PartitionShape>,
    ) {
        if slots == 0 {
            if remaining == 0 {
                out.push(PartitionShape {
                    parts: prefix.clone(),
                });
            }
            return;
        }
        // each remaining slot needs at least 1
        let hi = cap.min(remaining + 1 - slots);
        let lo = remaining.div_ceil(slots);
        for part in (lo..=hi).rev() {
            prefix.push(part);
            rec(remaining - part, slots - 1, part, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if k >= 1 && k <= n {
        rec(n, k, n, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

/// Number of ways to split `n` qubits into exactly `k` blocks, summed over
/// block shapes. `k = 1` counts the single genuinely entangled arrangement.
pub fn count_gk(n: usize, k: usize) -> Result<u128> {
    if n == 0 || n > MAX_COUNT_QUBITS {
        return Err(Error::Capacity {
            what: "qubits to count",
            value: n,
            cap: MAX_COUNT_QUBITS,
        });
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "block count {k} outside 1..={n}"
        )));
    }
    partitions_exactly_k(n, k)
        .iter()
        .try_fold(0u128, |acc, shape| {
            acc.checked_add(shape_degeneracy(n, shape)?)
                .ok_or(Error::Overflow("block count"))
        })
}

/// Bell number `B_n` via the Bell triangle in exact integer arithmetic.
pub fn bell_number(n: usize) -> Result<u128> {
    if n > MAX_COUNT_QUBITS {
        return Err(Error::Capacity {
            what: "Bell number index",
            value: n,
            cap: MAX_COUNT_QUBITS,
        });
    }
    if n == 0 {
        return Ok(1);
    }
    let mut row = vec![1u128];
    for _ in 1..n {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(*row.last().expect("nonempty row"));
        for &x in &row {
            let v = next
                .last()
                .expect("nonempty row")
                .checked_add(x)
                .ok_or(Error::Overflow("Bell number"))?;
            next.push(v);
        }
        row = next;
    }
    Ok(*row.last().expect("nonempty row"))
}
