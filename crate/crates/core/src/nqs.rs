//! Restricted-Boltzmann-machine wavefunctions and dense target states.
//!
//! A network state assigns an unnormalized complex amplitude to every spin
//! configuration of `n` visible qubits:
//!
//! ```text
//! Ψ(s) = exp(Σ_i a_i s_i) · Π_j 2 cosh(Σ_i W_ij s_i + b_j)
//! ```
//!
//! An optional second hidden layer learns a local phase, multiplying the
//! amplitude by `exp(2πi Φ(s))` with `Φ(s) ∈ [0, 1)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::separability::SegmentationMask;

/// Largest qubit count for which dense 2^n vectors are built.
pub const MAX_DENSE_QUBITS: usize = 20;

/// An assignment of ±1 to each of `n` visible qubits.
///
/// Spin −1 is bit 0 and spin +1 is bit 1. Qubit 1 (index 0) is the most
/// significant bit of the basis index.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinConfiguration {
    values: Vec<i8>,
}

impl SpinConfiguration {
    pub fn new(values: Vec<i8>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|&&v| v != 1 && v != -1) {
            return Err(Error::InvalidArgument(format!(
                "spin value {bad} is not ±1"
            )));
        }
        Ok(Self { values })
    }

    /// The configuration whose basis index is `index`.
    pub fn from_index(index: usize, n: usize) -> Self {
        debug_assert!(n <= MAX_DENSE_QUBITS && index < (1 << n));
        let values = (0..n).map(|i| spin_of(index, n, i) as i8).collect();
        Self { values }
    }

    pub fn basis_index(&self) -> usize {
        let n = self.values.len();
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1)
            .fold(0usize, |acc, (i, _)| acc | (1 << (n - 1 - i)))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn flip(&mut self, i: usize) {
        self.values[i] = -self.values[i];
    }

    fn as_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }
}

/// Spin (±1) of qubit `i` (0-based) in basis state `index` of an `n`-qubit register.
#[inline]
pub fn spin_of(index: usize, n: usize, i: usize) -> f64 {
    if (index >> (n - 1 - i)) & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Spins of every qubit of basis state `index`.
pub fn spins_of_index(index: usize, n: usize) -> Vec<f64> {
    (0..n).map(|i| spin_of(index, n, i)).collect()
}

/// `ln(2 cosh z)` without overflow for large `|Re z|` and without
/// cancellation near the zeros of `cosh`.
///
/// The result agrees with the principal logarithm up to a multiple of `2πi`,
/// which is all that matters once exponentiated.
pub fn log_2cosh(z: Complex64) -> Complex64 {
    if z.re.abs() < 1.0 {
        // |2cosh z|² = 4(sinh²x + cos²y)
        let (x, y) = (z.re, z.im);
        let modulus_sqr = 4.0 * (x.sinh().powi(2) + y.cos().powi(2));
        let arg = (x.sinh() * y.sin()).atan2(x.cosh() * y.cos());
        return Complex64::new(0.5 * modulus_sqr.ln(), arg);
    }
    // 2cosh z = e^{±z} (1 + e^{∓2z}); pick the sign that keeps the exponent small.
    let (lead, tail) = if z.re >= 0.0 {
        (z, -2.0 * z)
    } else {
        (-z, 2.0 * z)
    };
    lead + (Complex64::new(1.0, 0.0) + tail.exp()).ln()
}

/// Complex `tanh` that saturates for large `|Re z|` and stays accurate
/// near its poles.
pub fn tanh_stable(z: Complex64) -> Complex64 {
    if z.re > 20.0 {
        Complex64::new(1.0, 0.0)
    } else if z.re < -20.0 {
        Complex64::new(-1.0, 0.0)
    } else {
        let (x, y) = (z.re, z.im);
        // cosh 2x + cos 2y written without cancellation
        let denom = 2.0 * (x.sinh().powi(2) + y.cos().powi(2));
        Complex64::new((2.0 * x).sinh(), (2.0 * y).sin()) / denom
    }
}

/// Visible biases, hidden biases and couplings of one RBM layer.
///
/// Used both for the amplitude layer (`a`, `b`, `W`) and the phase layer
/// (`c`, `d`, `U`). Weights are stored row-major with shape `n_visible × n_hidden`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbmParams {
    pub visible_bias: Vec<Complex64>,
    pub hidden_bias: Vec<Complex64>,
    pub weights: Vec<Complex64>,
}

pub type NetworkParams = RbmParams;
pub type PhaseParams = RbmParams;

impl RbmParams {
    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        Self {
            visible_bias: vec![zero; n_visible],
            hidden_bias: vec![zero; n_hidden],
            weights: vec![zero; n_visible * n_hidden],
        }
    }

    pub fn n_visible(&self) -> usize {
        self.visible_bias.len()
    }

    pub fn n_hidden(&self) -> usize {
        self.hidden_bias.len()
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> Complex64 {
        self.weights[i * self.n_hidden() + j]
    }

    #[inline]
    pub fn weight_mut(&mut self, i: usize, j: usize) -> &mut Complex64 {
        let h = self.n_hidden();
        &mut self.weights[i * h + j]
    }

    pub fn is_finite(&self) -> bool {
        self.visible_bias
            .iter()
            .chain(&self.hidden_bias)
            .chain(&self.weights)
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    fn check_dims(&self) -> Result<()> {
        if self.weights.len() != self.n_visible() * self.n_hidden() {
            return Err(Error::Dimension(format!(
                "weight matrix has {} entries, expected {}×{}",
                self.weights.len(),
                self.n_visible(),
                self.n_hidden()
            )));
        }
        Ok(())
    }

    fn check_spins(&self, len: usize) -> Result<()> {
        self.check_dims()?;
        if len != self.n_visible() {
            return Err(Error::Dimension(format!(
                "configuration has {len} spins, network has {} visible units",
                self.n_visible()
            )));
        }
        Ok(())
    }

    /// Hidden-unit activations `θ_j = Σ_i W_ij s_i + b_j`.
    pub(crate) fn activations(&self, spins: &[f64]) -> Vec<Complex64> {
        let h = self.n_hidden();
        let mut theta = self.hidden_bias.clone();
        for (i, &s) in spins.iter().enumerate() {
            let row = &self.weights[i * h..(i + 1) * h];
            for (t, w) in theta.iter_mut().zip(row) {
                *t += w * s;
            }
        }
        theta
    }

    /// `Σ_i a_i s_i + Σ_j ln 2cosh θ_j`, the log of the traced-out RBM.
    pub(crate) fn free_energy(&self, spins: &[f64]) -> Complex64 {
        let visible: Complex64 = self
            .visible_bias
            .iter()
            .zip(spins)
            .map(|(a, &s)| a * s)
            .sum();
        let hidden: Complex64 = self.activations(spins).into_iter().map(log_2cosh).sum();
        visible + hidden
    }

    fn randomize(&mut self, scale: f64, rng: &mut ChaCha8Rng) {
        for z in self
            .visible_bias
            .iter_mut()
            .chain(self.hidden_bias.iter_mut())
            .chain(self.weights.iter_mut())
        {
            *z = Complex64::new(
                rng.random_range(-scale..=scale),
                rng.random_range(-scale..=scale),
            );
        }
    }
}

/// Unnormalized RBM amplitude of one configuration.
pub fn amplitude(params: &NetworkParams, s: &SpinConfiguration) -> Result<Complex64> {
    Ok(log_amplitude(params, s)?.exp())
}

/// Natural logarithm of [`amplitude`], safe against overflow.
pub fn log_amplitude(params: &NetworkParams, s: &SpinConfiguration) -> Result<Complex64> {
    params.check_spins(s.len())?;
    Ok(params.free_energy(&s.as_f64()))
}

/// An RBM network state, optionally with a phase layer and segmentation masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralState {
    n_visible: usize,
    pub amplitude_params: NetworkParams,
    pub phase_params: Option<PhaseParams>,
    mask: Option<SegmentationMask>,
    phase_mask: Option<SegmentationMask>,
}

impl NeuralState {
    pub fn new(amplitude_params: NetworkParams, phase_params: Option<PhaseParams>) -> Result<Self> {
        amplitude_params.check_dims()?;
        let n = amplitude_params.n_visible();
        if n == 0 {
            return Err(Error::Dimension(
                "network needs at least one visible unit".into(),
            ));
        }
        if let Some(phase) = &phase_params {
            phase.check_dims()?;
            if phase.n_visible() != n {
                return Err(Error::Dimension(format!(
                    "phase layer has {} visible units, amplitude layer has {n}",
                    phase.n_visible()
                )));
            }
        }
        Ok(Self {
            n_visible: n,
            amplitude_params,
            phase_params,
            mask: None,
            phase_mask: None,
        })
    }

    pub fn n_visible(&self) -> usize {
        self.n_visible
    }

    pub fn mask(&self) -> Option<&SegmentationMask> {
        self.mask.as_ref()
    }

    pub fn phase_mask(&self) -> Option<&SegmentationMask> {
        self.phase_mask.as_ref()
    }

    /// Attach segmentation masks and zero every disallowed coupling.
    pub fn with_masks(
        mut self,
        mask: Option<SegmentationMask>,
        phase_mask: Option<SegmentationMask>,
    ) -> Result<Self> {
        if let Some(m) = &mask {
            m.check_layer(self.n_visible, self.amplitude_params.n_hidden())?;
        }
        match (&phase_mask, &self.phase_params) {
            (Some(m), Some(p)) => m.check_layer(self.n_visible, p.n_hidden())?,
            (Some(_), None) => {
                return Err(Error::Dimension(
                    "phase mask given without a phase layer".into(),
                ))
            }
            _ => {}
        }
        self.mask = mask;
        self.phase_mask = phase_mask;
        self.enforce_masks();
        Ok(self)
    }

    /// Reset every masked coupling to exactly zero.
    pub(crate) fn enforce_masks(&mut self) {
        let zero = Complex64::new(0.0, 0.0);
        if let Some(mask) = &self.mask {
            for (w, &ok) in self.amplitude_params.weights.iter_mut().zip(mask.allowed()) {
                if !ok {
                    *w = zero;
                }
            }
        }
        if let (Some(mask), Some(phase)) = (&self.phase_mask, self.phase_params.as_mut()) {
            for (w, &ok) in phase.weights.iter_mut().zip(mask.allowed()) {
                if !ok {
                    *w = zero;
                }
            }
        }
    }

    /// True when every masked coupling is exactly zero.
    pub fn masks_respected(&self) -> bool {
        let zero = Complex64::new(0.0, 0.0);
        let amp_ok = self.mask.as_ref().is_none_or(|m| {
            self.amplitude_params
                .weights
                .iter()
                .zip(m.allowed())
                .all(|(w, &ok)| ok || *w == zero)
        });
        let phase_ok = match (&self.phase_mask, &self.phase_params) {
            (Some(m), Some(p)) => p
                .weights
                .iter()
                .zip(m.allowed())
                .all(|(w, &ok)| ok || *w == zero),
            _ => true,
        };
        amp_ok && phase_ok
    }

    pub fn is_finite(&self) -> bool {
        self.amplitude_params.is_finite()
            && self.phase_params.as_ref().is_none_or(RbmParams::is_finite)
    }

    /// Phase value `Φ(s) ∈ [0, 1)`: the fractional part of the real phase-layer
    /// free energy. Zero when no phase layer is present.
    pub fn phase_value(&self, s: &SpinConfiguration) -> Result<f64> {
        self.check_len(s.len())?;
        Ok(self.phase_turns(&s.as_f64()).rem_euclid(1.0))
    }

    /// `Re F_Ξ(s)`, the phase in units of full turns before wrapping.
    fn phase_turns(&self, spins: &[f64]) -> f64 {
        self.phase_params
            .as_ref()
            .map_or(0.0, |p| p.free_energy(spins).re)
    }

    /// `ln Ψ(s)` of the combined amplitude and phase layers.
    pub fn log_global_amplitude(&self, s: &SpinConfiguration) -> Result<Complex64> {
        self.check_len(s.len())?;
        Ok(self.log_psi_spins(&s.as_f64()))
    }

    pub fn global_amplitude(&self, s: &SpinConfiguration) -> Result<Complex64> {
        Ok(self.log_global_amplitude(s)?.exp())
    }

    pub(crate) fn log_psi_spins(&self, spins: &[f64]) -> Complex64 {
        let log_amp = self.amplitude_params.free_energy(spins);
        match &self.phase_params {
            // exp(2πi·frac(x)) = exp(2πi·x)
            Some(_) => log_amp + Complex64::new(0.0, 2.0 * PI * self.phase_turns(spins)),
            None => log_amp,
        }
    }

    pub(crate) fn log_psi_index(&self, index: usize) -> Complex64 {
        self.log_psi_spins(&spins_of_index(index, self.n_visible))
    }

    /// `ln Ψ` for every basis state, in basis-index order.
    pub fn log_state_vector(&self) -> Result<Vec<Complex64>> {
        check_dense(self.n_visible)?;
        Ok((0..1usize << self.n_visible)
            .map(|b| self.log_psi_index(b))
            .collect())
    }

    /// Dense state vector rescaled so the largest amplitude has modulus 1.
    pub fn state_vector(&self) -> Result<Vec<Complex64>> {
        let logs = self.log_state_vector()?;
        Ok(rescaled_exp(&logs))
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n_visible {
            return Err(Error::Dimension(format!(
                "configuration has {len} spins, state has {} visible units",
                self.n_visible
            )));
        }
        Ok(())
    }
}

/// Exponentiate log-amplitudes after shifting the largest real part to zero.
pub(crate) fn rescaled_exp(logs: &[Complex64]) -> Vec<Complex64> {
    let shift = logs
        .iter()
        .map(|z| z.re)
        .filter(|r| r.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let shift = if shift.is_finite() { shift } else { 0.0 };
    logs.iter()
        .map(|z| (z - Complex64::new(shift, 0.0)).exp())
        .collect()
}

pub(crate) fn check_dense(n: usize) -> Result<()> {
    if n > MAX_DENSE_QUBITS {
        return Err(Error::Capacity {
            what: "qubit count",
            value: n,
            cap: MAX_DENSE_QUBITS,
        });
    }
    Ok(())
}

/// Random network with `n` visible units, `h` amplitude hidden units and `m`
/// phase hidden units (`m = 0` omits the phase layer).
///
/// Real and imaginary parts are i.i.d. uniform in `[-scale, scale]`.
pub fn init_random(n: usize, h: usize, m: usize, scale: f64, seed: u64) -> Result<NeuralState> {
    if n == 0 || h == 0 {
        return Err(Error::InvalidArgument("n and h must be at least 1".into()));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "init scale {scale} must be positive"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut amp = RbmParams::zeros(n, h);
    amp.randomize(scale, &mut rng);
    let phase = (m > 0).then(|| {
        let mut p = RbmParams::zeros(n, m);
        p.randomize(scale, &mut rng);
        p
    });
    NeuralState::new(amp, phase)
}

/// A dense, normalized target wavefunction over `2^n` basis states.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetState {
    n_visible: usize,
    amplitudes: Vec<Complex64>,
    smoothing_variance: f64,
    declared: Vec<(usize, Complex64)>,
}

impl TargetState {
    /// Build from an explicit dense vector (normalized on construction).
    pub fn from_amplitudes(n: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        check_dense(n)?;
        if amplitudes.len() != 1 << n {
            return Err(Error::Dimension(format!(
                "{} amplitudes given for {n} qubits",
                amplitudes.len()
            )));
        }
        let entries: Vec<_> = amplitudes
            .iter()
            .enumerate()
            .filter(|(_, z)| z.norm_sqr() > 0.0)
            .map(|(i, &z)| (i, z))
            .collect();
        build_target(&entries, n, 0.0)
    }

    pub fn n_visible(&self) -> usize {
        self.n_visible
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, index: usize) -> Complex64 {
        self.amplitudes[index]
    }

    pub fn smoothing_variance(&self) -> f64 {
        self.smoothing_variance
    }

    /// Entries as declared at construction, before smoothing.
    pub fn declared_entries(&self) -> &[(usize, Complex64)] {
        &self.declared
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &TargetState) -> Result<Complex64> {
        if self.n_visible != other.n_visible {
            return Err(Error::Dimension(
                "targets act on different qubit counts".into(),
            ));
        }
        Ok(inner(&self.amplitudes, &other.amplitudes))
    }

    /// Same ray, smoothed with Gaussian packets of variance `sigma2`.
    pub fn smoothed(&self, sigma2: f64) -> Result<Self> {
        build_target(&self.declared, self.n_visible, sigma2)
    }

    pub fn to_document(&self) -> TargetDocument {
        TargetDocument {
            n: self.n_visible,
            entries: self
                .declared
                .iter()
                .map(|&(i, z)| (i, z.re, z.im))
                .collect(),
            sigma2: self.smoothing_variance,
        }
    }
}

/// `Σ conj(a_i) b_i`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Build a normalized target from sparse `(basis_index, amplitude)` entries.
///
/// With `sigma2 > 0` every basis state `j` receives
/// `Σ_i α_i exp(-(β_i - β_j)² / σ²)` where `β` is the basis index.
pub fn build_target(entries: &[(usize, Complex64)], n: usize, sigma2: f64) -> Result<TargetState> {
    check_dense(n)?;
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::Target(format!(
            "smoothing variance {sigma2} must be nonnegative"
        )));
    }
    let dim = 1usize << n;
    let mut dense = vec![Complex64::new(0.0, 0.0); dim];
    for &(i, z) in entries {
        if i >= dim {
            return Err(Error::Target(format!(
                "basis index {i} out of range for {n} qubits"
            )));
        }
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::Target(format!("non-finite amplitude at index {i}")));
        }
        dense[i] += z;
    }
    let declared_norm = norm(&dense);
    if declared_norm == 0.0 {
        return Err(Error::Target("all amplitudes are zero".into()));
    }
    let declared: Vec<(usize, Complex64)> = dense
        .iter()
        .enumerate()
        .filter(|(_, z)| z.norm_sqr() > 0.0)
        .map(|(i, &z)| (i, z / declared_norm))
        .collect();

    let mut amplitudes = if sigma2 == 0.0 {
        dense
    } else {
        (0..dim)
            .map(|j| {
                declared
                    .iter()
                    .map(|&(i, a)| {
                        let d = i as f64 - j as f64;
                        a * (-d * d / sigma2).exp()
                    })
                    .sum()
            })
            .collect()
    };
    let total = norm(&amplitudes);
    if total == 0.0 {
        return Err(Error::Target("smoothed target vanishes".into()));
    }
    for z in &mut amplitudes {
        *z /= total;
    }
    Ok(TargetState {
        n_visible: n,
        amplitudes,
        smoothing_variance: sigma2,
        declared,
    })
}

/// Serialized target layout: `{n, entries: [[index, re, im], ...], sigma2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetDocument {
    pub n: usize,
    pub entries: Vec<(usize, f64, f64)>,
    #[serde(default)]
    pub sigma2: f64,
}

impl TargetDocument {
    pub fn to_target(&self) -> Result<TargetState> {
        let entries: Vec<_> = self
            .entries
            .iter()
            .map(|&(i, re, im)| (i, Complex64::new(re, im)))
            .collect();
        build_target(&entries, self.n, self.sigma2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Product over hidden units evaluated directly, without the log domain.
    fn direct_amplitude(p: &RbmParams, s: &[f64]) -> Complex64 {
        let mut out: Complex64 = p
            .visible_bias
            .iter()
            .zip(s)
            .map(|(a, &si)| a * si)
            .sum::<Complex64>()
            .exp();
        for j in 0..p.n_hidden() {
            let mut theta = p.hidden_bias[j];
            for (i, &si) in s.iter().enumerate() {
                theta += p.weight(i, j) * si;
            }
            out *= 2.0 * theta.cosh();
        }
        out
    }

    #[test]
    fn zero_params_single_unit() {
        let p = RbmParams::zeros(1, 1);
        let s = SpinConfiguration::new(vec![1]).unwrap();
        assert_eq!(amplitude(&p, &s).unwrap(), c(2.0, 0.0));
        assert!((log_amplitude(&p, &s).unwrap() - c(LN_2, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn hand_evaluated_amplitude() {
        let mut p = RbmParams::zeros(2, 1);
        *p.weight_mut(0, 0) = c(LN_2, 0.0);
        let s = SpinConfiguration::new(vec![1, -1]).unwrap();
        let psi = amplitude(&p, &s).unwrap();
        assert!((psi - c(2.5, 0.0)).norm() < 1e-14);
        assert!((psi - direct_amplitude(&p, &[1.0, -1.0])).norm() < 1e-14);
        assert_eq!(psi, amplitude(&p, &s).unwrap());
    }

    #[test]
    fn log_amplitude_survives_huge_activation() {
        let mut p = RbmParams::zeros(1, 1);
        p.hidden_bias[0] = c(300.0, 0.7);
        let s = SpinConfiguration::new(vec![1]).unwrap();
        let l = log_amplitude(&p, &s).unwrap();
        assert!(l.re.is_finite() && l.im.is_finite());
        assert!((l.re - 300.0).abs() < 1e-12);
        p.hidden_bias[0] = c(-300.0, 0.0);
        assert!((log_amplitude(&p, &s).unwrap().re - 300.0).abs() < 1e-12);
    }

    #[test]
    fn log_amplitude_matches_direct_product() {
        let state = init_random(3, 5, 0, 0.8, 11).unwrap();
        for b in 0..8 {
            let s = SpinConfiguration::from_index(b, 3);
            let direct = direct_amplitude(&state.amplitude_params, &s.as_f64());
            let via_log = log_amplitude(&state.amplitude_params, &s).unwrap().exp();
            assert!((direct - via_log).norm() <= 1e-12 * direct.norm());
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let p = RbmParams::zeros(2, 1);
        let s = SpinConfiguration::new(vec![1, 1, 1]).unwrap();
        assert!(matches!(amplitude(&p, &s), Err(Error::Dimension(_))));
    }

    #[test]
    fn spin_configuration_rejects_non_spins() {
        assert!(SpinConfiguration::new(vec![1, 0]).is_err());
    }

    #[test]
    fn basis_index_convention() {
        // qubit 1 is the most significant bit, spin +1 is bit 1
        let s = SpinConfiguration::new(vec![1, -1, -1]).unwrap();
        assert_eq!(s.basis_index(), 4);
        for b in 0..64 {
            assert_eq!(SpinConfiguration::from_index(b, 6).basis_index(), b);
        }
    }

    #[test]
    fn real_parameters_give_positive_amplitudes() {
        let mut state = init_random(4, 6, 0, 0.5, 3).unwrap();
        for z in state
            .amplitude_params
            .visible_bias
            .iter_mut()
            .chain(state.amplitude_params.hidden_bias.iter_mut())
            .chain(state.amplitude_params.weights.iter_mut())
        {
            z.im = 0.0;
        }
        for b in 0..16 {
            let psi = state
                .global_amplitude(&SpinConfiguration::from_index(b, 4))
                .unwrap();
            assert!(psi.re > 0.0 && psi.im.abs() < 1e-12 * psi.re);
        }
    }

    #[test]
    fn phase_layer_preserves_modulus() {
        let with_phase = init_random(4, 4, 3, 0.7, 5).unwrap();
        let plain = NeuralState::new(with_phase.amplitude_params.clone(), None).unwrap();
        for b in 0..16 {
            let s = SpinConfiguration::from_index(b, 4);
            let a = with_phase.global_amplitude(&s).unwrap();
            let p = plain.global_amplitude(&s).unwrap();
            assert!((a.norm() - p.norm()).abs() <= 1e-12 * p.norm());
            let phi = with_phase.phase_value(&s).unwrap();
            assert!((0.0..1.0).contains(&phi));
        }
    }

    #[test]
    fn zero_phase_layer_is_a_global_phase() {
        let amp = init_random(3, 2, 0, 0.4, 8).unwrap().amplitude_params;
        let state = NeuralState::new(amp.clone(), Some(RbmParams::zeros(3, 2))).unwrap();
        let plain = NeuralState::new(amp, None).unwrap();
        let ratio0 = state
            .global_amplitude(&SpinConfiguration::from_index(0, 3))
            .unwrap()
            / plain
                .global_amplitude(&SpinConfiguration::from_index(0, 3))
                .unwrap();
        for b in 1..8 {
            let s = SpinConfiguration::from_index(b, 3);
            let ratio = state.global_amplitude(&s).unwrap() / plain.global_amplitude(&s).unwrap();
            assert!((ratio - ratio0).norm() < 1e-12);
        }
    }

    #[test]
    fn init_random_is_reproducible_and_bounded() {
        let a = init_random(2, 4, 0, 0.01, 42).unwrap();
        let b = init_random(2, 4, 0, 0.01, 42).unwrap();
        let other = init_random(2, 4, 0, 0.01, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, other);
        let p = &a.amplitude_params;
        for z in p
            .visible_bias
            .iter()
            .chain(&p.hidden_bias)
            .chain(&p.weights)
        {
            assert!(z.norm() <= 0.01 * 2f64.sqrt());
        }
        assert!(a.phase_params.is_none());
    }

    #[test]
    fn exhaustive_vector_is_finite_and_nonzero() {
        for n in 1..=6 {
            let state = init_random(n, 2 * n, n, 0.05, n as u64).unwrap();
            let v = state.state_vector().unwrap();
            assert_eq!(v.len(), 1 << n);
            assert!(v.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
            assert!(norm(&v) > 0.0);
        }
    }

    #[test]
    fn build_target_exact_and_bell() {
        let t = build_target(&[(0, c(1.0, 0.0))], 1, 0.0).unwrap();
        assert_eq!(t.amplitudes(), &[c(1.0, 0.0), c(0.0, 0.0)]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let bell = build_target(&[(0, c(h, 0.0)), (3, c(h, 0.0))], 2, 0.0).unwrap();
        assert!((bell.amplitude(0) - c(h, 0.0)).norm() < 1e-15);
        assert!((bell.amplitude(3) - c(h, 0.0)).norm() < 1e-15);
        assert_eq!(bell.amplitude(1), c(0.0, 0.0));
    }

    #[test]
    fn build_target_gaussian_smoothing() {
        let t = build_target(&[(0, c(1.0, 0.0))], 1, 0.1).unwrap();
        // direct evaluation: α ∝ (1, e^{-10})
        let leak = (-10.0f64).exp();
        let expected = leak / (1.0 + leak * leak).sqrt();
        assert!((t.amplitude(1).re - expected).abs() < 1e-15);
        assert!(t.amplitude(1).norm() <= 5e-5);
        assert!((norm(t.amplitudes()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn build_target_errors() {
        assert!(matches!(
            build_target(&[(0, c(0.0, 0.0))], 1, 0.0),
            Err(Error::Target(_))
        ));
        assert!(matches!(
            build_target(&[(4, c(1.0, 0.0))], 2, 0.0),
            Err(Error::Target(_))
        ));
    }

    #[test]
    fn target_document_round_trip() {
        let t = build_target(&[(1, c(0.6, 0.0)), (2, c(0.0, 0.8))], 2, 0.0).unwrap();
        let json = serde_json::to_string(&t.to_document()).unwrap();
        let back: TargetDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_target().unwrap(), t);
    }

    #[test]
    fn hyperbolic_helpers_match_direct_formulas() {
        for k in 0..200 {
            let z = c(-3.0 + 0.03 * k as f64, 4.0 - 0.041 * k as f64);
            let direct = (z.cosh() * 2.0).ln();
            let diff = log_2cosh(z) - direct;
            assert!(diff.re.abs() < 1e-12, "{z}");
            let turns = diff.im / (2.0 * std::f64::consts::PI);
            assert!((turns - turns.round()).abs() < 1e-12, "{z}");
            assert!(
                (tanh_stable(z) - z.tanh()).norm() < 1e-10 * z.tanh().norm().max(1.0),
                "{z}"
            );
        }
    }

    #[test]
    fn hyperbolic_helpers_near_poles() {
        let half_pi = std::f64::consts::FRAC_PI_2;
        for z in [c(0.0, half_pi), c(1e-12, half_pi), c(0.0, -3.0 * half_pi)] {
            let t = tanh_stable(z);
            assert!(t.re.is_finite() && t.im.is_finite());
            assert!(t.norm() > 1e10);
            let l = log_2cosh(z);
            assert!(l.re.is_finite() && l.re < -20.0);
        }
        // d/dz ln 2cosh z = tanh z holds close to a pole
        let z = c(1e-3, half_pi + 2e-3);
        let h = 1e-9;
        let fd = (log_2cosh(z + h) - log_2cosh(z - h)) / (2.0 * h);
        assert!((fd - tanh_stable(z)).norm() < 1e-4 * tanh_stable(z).norm());
    }
}
