//! Fidelity-driven reconstruction of a target state by a network state.
//!
//! Every complex parameter contributes two real coordinates (real and
//! imaginary part, interleaved in the flattened vector). For each real
//! coordinate `p` the log-derivative `O_p(s) = ∂_p ln Ψ(s)` is complex, and
//! the gradient of `-ln F` is
//!
//! ```text
//! ∂_p L = Re[ ⟨O_p*⟩ - ⟨(φ/Ψ) O_p*⟩ / ⟨φ/Ψ⟩ ]
//! ```
//!
//! with averages over `|Ψ|²`. Masked couplings are not parameters at all:
//! they never appear in the flattened vector and stay exactly zero.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nqs::{
    check_dense, init_random, rescaled_exp, spins_of_index, tanh_stable, NeuralState, RbmParams,
    SpinConfiguration, TargetState,
};
use crate::sampling::{
    batch_means_error, derive_seed, metropolis_indices, Backend, ExpectationEstimate, SamplerConfig,
};
use crate::separability::{make_mask, PartitionSpec};

/// Consecutive small-change iterations required before training stops.
pub const CONVERGENCE_PATIENCE: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    #[default]
    Natural,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningConfig {
    pub optimizer: Optimizer,
    /// `None` picks 0.05 for SGD and 0.02 for natural gradient.
    pub learning_rate: Option<f64>,
    pub max_iters: usize,
    pub convergence_tol: f64,
    /// Diagonal shift added to the SR matrix before inversion.
    pub sr_shift: f64,
    /// Relative singular-value cutoff of the pseudo-inverse.
    pub pinv_cutoff: f64,
    /// Subtract `⟨O_k*⟩⟨O_l⟩` from the SR matrix.
    pub centered_sr: bool,
    /// Parameter scale used if a zero-overlap start forces re-initialization.
    pub reinit_scale: f64,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::Natural,
            learning_rate: None,
            max_iters: 2000,
            convergence_tol: 1e-7,
            sr_shift: 1e-3,
            pinv_cutoff: 1e-10,
            centered_sr: false,
            reinit_scale: 0.05,
        }
    }
}

impl LearningConfig {
    pub fn sgd() -> Self {
        Self {
            optimizer: Optimizer::Sgd,
            ..Self::default()
        }
    }

    pub fn eta(&self) -> f64 {
        self.learning_rate.unwrap_or(match self.optimizer {
            Optimizer::Sgd => 0.05,
            Optimizer::Natural => 0.02,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let eta = self.eta();
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {eta} must be positive"
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument(
                "max_iters must be at least 1".into(),
            ));
        }
        if self.convergence_tol < 0.0 || self.sr_shift < 0.0 || self.pinv_cutoff < 0.0 {
            return Err(Error::InvalidArgument(
                "tolerances, shift and cutoff must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Layer sizes of a learner relative to the register size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchitectureConfig {
    /// Amplitude hidden units per qubit (`H = ρN`).
    pub hidden_per_qubit: usize,
    /// Phase hidden units per qubit; zero disables the phase layer.
    pub phase_hidden_per_qubit: usize,
    pub init_scale: f64,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            hidden_per_qubit: 2,
            phase_hidden_per_qubit: 0,
            init_scale: 0.05,
        }
    }
}

/// A random learner segmented according to `spec` (unmasked when `spec` is free).
pub fn build_learner(
    spec: &PartitionSpec,
    arch: &ArchitectureConfig,
    seed: u64,
) -> Result<NeuralState> {
    let n = spec.n();
    let h = arch.hidden_per_qubit * n;
    let m = arch.phase_hidden_per_qubit * n;
    let state = init_random(n, h, m, arch.init_scale, seed)?;
    if spec.is_free() {
        return Ok(state);
    }
    let mask = make_mask(spec, arch.hidden_per_qubit)?;
    let phase_mask = (m > 0)
        .then(|| make_mask(spec, arch.phase_hidden_per_qubit))
        .transpose()?;
    state.with_masks(Some(mask), phase_mask)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layer {
    Amplitude,
    Phase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Visible(usize),
    Hidden(usize),
    Weight(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSlot {
    pub layer: Layer,
    pub kind: ParamKind,
}

/// Map between the flattened real parameter vector and the network slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    slots: Vec<ParamSlot>,
}

impl ParamLayout {
    pub fn for_state(state: &NeuralState) -> Self {
        let mut slots = Vec::new();
        let mut push_layer = |layer, p: &RbmParams, allowed: Option<&[bool]>| {
            let n = p.n_visible();
            let h = p.n_hidden();
            slots.extend((0..n).map(|i| ParamSlot {
                layer,
                kind: ParamKind::Visible(i),
            }));
            slots.extend((0..h).map(|j| ParamSlot {
                layer,
                kind: ParamKind::Hidden(j),
            }));
            for i in 0..n {
                for j in 0..h {
                    if allowed.is_none_or(|a| a[i * h + j]) {
                        slots.push(ParamSlot {
                            layer,
                            kind: ParamKind::Weight(i, j),
                        });
                    }
                }
            }
        };
        push_layer(
            Layer::Amplitude,
            &state.amplitude_params,
            state.mask().map(|m| m.allowed()),
        );
        if let Some(phase) = &state.phase_params {
            push_layer(Layer::Phase, phase, state.phase_mask().map(|m| m.allowed()));
        }
        Self { slots }
    }

    pub fn slots(&self) -> &[ParamSlot] {
        &self.slots
    }

    /// Complex parameters (each holds two real coordinates).
    pub fn n_complex(&self) -> usize {
        self.slots.len()
    }

    pub fn n_real(&self) -> usize {
        2 * self.slots.len()
    }

    fn slot_mut<'a>(&self, state: &'a mut NeuralState, q: usize) -> &'a mut Complex64 {
        let slot = self.slots[q];
        let params = match slot.layer {
            Layer::Amplitude => &mut state.amplitude_params,
            Layer::Phase => state
                .phase_params
                .as_mut()
                .expect("layout built for this state"),
        };
        match slot.kind {
            ParamKind::Visible(i) => &mut params.visible_bias[i],
            ParamKind::Hidden(j) => &mut params.hidden_bias[j],
            ParamKind::Weight(i, j) => params.weight_mut(i, j),
        }
    }

    /// Flattened `[re_0, im_0, re_1, im_1, ...]`.
    pub fn flatten(&self, state: &NeuralState) -> Vec<f64> {
        let mut copy = state.clone();
        (0..self.n_complex())
            .flat_map(|q| {
                let z = *self.slot_mut(&mut copy, q);
                [z.re, z.im]
            })
            .collect()
    }

    /// Add `scale · delta` to every parameter; masked couplings are untouched.
    pub fn apply(&self, state: &mut NeuralState, delta: &[f64], scale: f64) {
        debug_assert_eq!(delta.len(), self.n_real());
        for q in 0..self.n_complex() {
            *self.slot_mut(state, q) +=
                Complex64::new(scale * delta[2 * q], scale * delta[2 * q + 1]);
        }
    }

    pub fn assign(&self, state: &mut NeuralState, values: &[f64]) {
        for q in 0..self.n_complex() {
            *self.slot_mut(state, q) = Complex64::new(values[2 * q], values[2 * q + 1]);
        }
    }
}

/// Log-derivatives of every configuration in an evaluation, row-major.
#[derive(Debug, Clone)]
pub struct GradientWorkspace {
    pub layout: ParamLayout,
    /// `rows × layout.n_real()`
    pub log_derivs: Vec<Complex64>,
    pub rows: usize,
}

impl GradientWorkspace {
    pub fn row(&self, r: usize) -> &[Complex64] {
        let p = self.layout.n_real();
        &self.log_derivs[r * p..(r + 1) * p]
    }
}

fn fill_log_derivs(
    state: &NeuralState,
    layout: &ParamLayout,
    spins: &[f64],
    out: &mut [Complex64],
) {
    let tanh_amp: Vec<Complex64> = state
        .amplitude_params
        .activations(spins)
        .into_iter()
        .map(tanh_stable)
        .collect();
    let tanh_phase: Vec<Complex64> = state
        .phase_params
        .as_ref()
        .map(|p| p.activations(spins).into_iter().map(tanh_stable).collect())
        .unwrap_or_default();
    let i_unit = Complex64::new(0.0, 1.0);
    let two_pi_i = Complex64::new(0.0, 2.0 * PI);
    for (q, slot) in layout.slots().iter().enumerate() {
        let tanh = match slot.layer {
            Layer::Amplitude => &tanh_amp,
            Layer::Phase => &tanh_phase,
        };
        // holomorphic derivative of the layer's free energy
        let g = match slot.kind {
            ParamKind::Visible(i) => Complex64::new(spins[i], 0.0),
            ParamKind::Hidden(j) => tanh[j],
            ParamKind::Weight(i, j) => tanh[j] * spins[i],
        };
        let (d_re, d_im) = match slot.layer {
            Layer::Amplitude => (g, i_unit * g),
            // ln Ψ gains 2πi·Re F_Ξ: ∂_x Re F = Re g, ∂_y Re F = -Im g
            Layer::Phase => (two_pi_i * g.re, -two_pi_i * g.im),
        };
        out[2 * q] = d_re;
        out[2 * q + 1] = d_im;
    }
}

/// `∂ ln Ψ(s)` with respect to every real parameter coordinate, ordered as
/// in [`ParamLayout::for_state`].
pub fn log_derivatives(state: &NeuralState, s: &SpinConfiguration) -> Result<Vec<Complex64>> {
    if s.len() != state.n_visible() {
        return Err(Error::Dimension(format!(
            "configuration has {} spins, state has {}",
            s.len(),
            state.n_visible()
        )));
    }
    let layout = ParamLayout::for_state(state);
    let spins: Vec<f64> = s.values().iter().map(|&v| v as f64).collect();
    let mut out = vec![Complex64::new(0.0, 0.0); layout.n_real()];
    fill_log_derivs(state, &layout, &spins, &mut out);
    Ok(out)
}

/// Per-iteration quantities shared by fidelity, gradient and SR system.
struct Evaluation {
    /// Probability of each row under `|Ψ|²` (sums to one).
    weights: Vec<f64>,
    /// `p(s) · φ(s)/Ψ(s)` per row, with `Ψ` on a common arbitrary scale.
    weighted_ratio: Vec<Complex64>,
    fidelity: ExpectationEstimate,
    workspace: Option<GradientWorkspace>,
}

fn check_pair(state: &NeuralState, target: &TargetState) -> Result<()> {
    if state.n_visible() != target.n_visible() {
        return Err(Error::Dimension(format!(
            "state has {} qubits, target has {}",
            state.n_visible(),
            target.n_visible()
        )));
    }
    check_dense(state.n_visible())
}

impl Evaluation {
    fn new(
        state: &NeuralState,
        target: &TargetState,
        sampler: &SamplerConfig,
        layout: Option<&ParamLayout>,
    ) -> Result<Self> {
        check_pair(state, target)?;
        match sampler.resolved_backend(state.n_visible()) {
            Backend::Mcmc => Self::sampled(state, target, sampler, layout),
            _ => Self::exact(state, target, layout),
        }
    }

    fn exact(
        state: &NeuralState,
        target: &TargetState,
        layout: Option<&ParamLayout>,
    ) -> Result<Self> {
        let n = state.n_visible();
        let psi = rescaled_exp(&state.log_state_vector()?);
        let z: f64 = psi.iter().map(|p| p.norm_sqr()).sum();
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::NonFinite { index: 0 });
        }
        let rows: Vec<usize> = (0..psi.len())
            .filter(|&b| psi[b].norm_sqr() > 0.0)
            .collect();
        let weights: Vec<f64> = rows.iter().map(|&b| psi[b].norm_sqr() / z).collect();
        let weighted_ratio: Vec<Complex64> = rows
            .iter()
            .map(|&b| psi[b].conj() * target.amplitude(b) / z)
            .collect();
        let overlap: Complex64 = weighted_ratio.iter().sum();
        // |⟨Ψ|φ⟩| / (‖Ψ‖‖φ‖) with ‖φ‖ = 1 and Σ weighted_ratio = ⟨Ψ|φ⟩/‖Ψ‖²
        let fidelity = overlap.norm() * z.sqrt();
        let workspace = layout.map(|layout| {
            let p = layout.n_real();
            let mut log_derivs = vec![Complex64::new(0.0, 0.0); rows.len() * p];
            for (r, &b) in rows.iter().enumerate() {
                fill_log_derivs(
                    state,
                    layout,
                    &spins_of_index(b, n),
                    &mut log_derivs[r * p..(r + 1) * p],
                );
            }
            GradientWorkspace {
                layout: layout.clone(),
                log_derivs,
                rows: rows.len(),
            }
        });
        Ok(Self {
            weights,
            weighted_ratio,
            fidelity: ExpectationEstimate::exact(Complex64::new(fidelity, 0.0)),
            workspace,
        })
    }

    fn sampled(
        state: &NeuralState,
        target: &TargetState,
        sampler: &SamplerConfig,
        layout: Option<&ParamLayout>,
    ) -> Result<Self> {
        let n = state.n_visible();
        let psi_chain = metropolis_indices(
            |b| 2.0 * state.log_psi_index(b).re,
            n,
            &sampler.with_seed(derive_seed(sampler.seed, 0)),
        )?;
        let phi_chain = metropolis_indices(
            |b| 2.0 * target.amplitude(b).norm().ln(),
            n,
            &sampler.with_seed(derive_seed(sampler.seed, 1)),
        )?;
        let log_psi_rows: Vec<Complex64> =
            psi_chain.iter().map(|&b| state.log_psi_index(b)).collect();
        let shift = log_psi_rows
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        let scaled = |l: Complex64| (l - Complex64::new(shift, 0.0)).exp();

        let ratios: Vec<Complex64> = psi_chain
            .iter()
            .zip(&log_psi_rows)
            .map(|(&b, &l)| target.amplitude(b) / scaled(l))
            .collect();
        let inverse_ratios: Vec<Complex64> = phi_chain
            .iter()
            .map(|&b| scaled(state.log_psi_index(b)) / target.amplitude(b))
            .collect();
        for (&b, r) in psi_chain
            .iter()
            .zip(&ratios)
            .chain(phi_chain.iter().zip(&inverse_ratios))
        {
            if !(r.re.is_finite() && r.im.is_finite()) {
                return Err(Error::NonFinite { index: b });
            }
        }
        let rows = psi_chain.len();
        let mean = |v: &[Complex64]| v.iter().sum::<Complex64>() / v.len() as f64;
        let a = mean(&ratios);
        let b = mean(&inverse_ratios);
        let fidelity = (a * b).norm().sqrt();
        let err_a = batch_means_error(&ratios, a);
        let err_b = batch_means_error(&inverse_ratios, b);
        let rel = |e: f64, m: Complex64| if m.norm() > 0.0 { e / m.norm() } else { 0.0 };
        let std_error = 0.5 * fidelity * (rel(err_a, a).powi(2) + rel(err_b, b).powi(2)).sqrt();

        let workspace = layout.map(|layout| {
            let p = layout.n_real();
            let mut log_derivs = vec![Complex64::new(0.0, 0.0); rows * p];
            for (r, &s) in psi_chain.iter().enumerate() {
                fill_log_derivs(
                    state,
                    layout,
                    &spins_of_index(s, n),
                    &mut log_derivs[r * p..(r + 1) * p],
                );
            }
            GradientWorkspace {
                layout: layout.clone(),
                log_derivs,
                rows,
            }
        });
        let w = 1.0 / rows as f64;
        Ok(Self {
            weights: vec![w; rows],
            weighted_ratio: ratios.iter().map(|r| r * w).collect(),
            fidelity: ExpectationEstimate {
                value: Complex64::new(fidelity, 0.0),
                std_error,
            },
            workspace,
        })
    }

    fn workspace(&self) -> &GradientWorkspace {
        self.workspace
            .as_ref()
            .expect("evaluation built with a layout")
    }

    /// `⟨O_p*⟩` for every coordinate.
    fn mean_log_derivs(&self) -> Vec<Complex64> {
        let ws = self.workspace();
        let p = ws.layout.n_real();
        let mut m = vec![Complex64::new(0.0, 0.0); p];
        for (r, &w) in self.weights.iter().enumerate() {
            for (acc, o) in m.iter_mut().zip(ws.row(r)) {
                *acc += o * w;
            }
        }
        m
    }

    fn gradient(&self) -> Result<Vec<f64>> {
        let ws = self.workspace();
        let p = ws.layout.n_real();
        let ratio_mean: Complex64 = self.weighted_ratio.iter().sum();
        if ratio_mean.norm() == 0.0 || !ratio_mean.norm().is_finite() {
            return Err(Error::ZeroOverlap);
        }
        let mean_o = self.mean_log_derivs();
        let mut mixed = vec![Complex64::new(0.0, 0.0); p];
        for (r, pr) in self.weighted_ratio.iter().enumerate() {
            for (acc, o) in mixed.iter_mut().zip(ws.row(r)) {
                *acc += pr * o.conj();
            }
        }
        let grad: Vec<f64> = mean_o
            .iter()
            .zip(&mixed)
            .map(|(m, x)| (m.conj() - x / ratio_mean).re)
            .collect();
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        Ok(grad)
    }

    fn sr_matrix(&self, centered: bool) -> DMatrix<f64> {
        let ws = self.workspace();
        let p = ws.layout.n_real();
        let mean_o = if centered {
            self.mean_log_derivs()
        } else {
            vec![Complex64::new(0.0, 0.0); p]
        };
        let rows = ws.rows;
        let mut re = DMatrix::<f64>::zeros(rows, p);
        let mut im = DMatrix::<f64>::zeros(rows, p);
        for r in 0..rows {
            let sw = self.weights[r].sqrt();
            for (k, o) in ws.row(r).iter().enumerate() {
                let d = (o - mean_o[k]) * sw;
                re[(r, k)] = d.re;
                im[(r, k)] = d.im;
            }
        }
        // Re Σ_s w (O_k - m_k)* (O_l - m_l)
        let mut s = re.tr_mul(&re);
        s += im.tr_mul(&im);
        s
    }
}

/// Fidelity `|⟨Ψ|φ⟩| / (‖Ψ‖‖φ‖)`, exact or estimated from two Markov chains
/// as `sqrt|⟨φ/Ψ⟩_{|Ψ|²} ⟨Ψ/φ⟩_{|φ|²}|`. The value is stored in `.value.re`.
pub fn fidelity(
    state: &NeuralState,
    target: &TargetState,
    sampler: &SamplerConfig,
) -> Result<ExpectationEstimate> {
    Ok(Evaluation::new(state, target, sampler, None)?.fidelity)
}

/// Loss `-ln F` and its gradient over the flattened real parameters.
pub fn loss_and_gradient(
    state: &NeuralState,
    target: &TargetState,
    sampler: &SamplerConfig,
) -> Result<(f64, Vec<f64>)> {
    let layout = ParamLayout::for_state(state);
    let eval = Evaluation::new(state, target, sampler, Some(&layout))?;
    let grad = eval.gradient()?;
    Ok((-eval.fidelity.value.re.ln(), grad))
}

/// `parameter ← parameter − η · gradient` on unmasked coordinates.
pub fn sgd_step(state: &mut NeuralState, gradient: &[f64], eta: f64) -> Result<()> {
    let layout = ParamLayout::for_state(state);
    if gradient.len() != layout.n_real() {
        return Err(Error::Dimension(format!(
            "gradient has {} entries, state has {} real parameters",
            gradient.len(),
            layout.n_real()
        )));
    }
    if gradient.iter().any(|g| !g.is_finite()) || !eta.is_finite() {
        return Err(Error::NonFiniteGradient);
    }
    layout.apply(state, gradient, -eta);
    Ok(())
}

/// Covariance matrix `S` and force vector `f` of the natural-gradient update.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalGradientSystem {
    /// `S_kl = Re⟨O_k* O_l⟩` (optionally centered).
    pub s: DMatrix<f64>,
    /// `f_k = Re⟨O_k* R⟩` for the diagonal residual `R(s) = 1 − (φ/Ψ)(s)/⟨φ/Ψ⟩`.
    pub f: DVector<f64>,
}

/// Assemble the SR system at the current parameters.
///
/// The residual `R` compares `Ψ` with the target rescaled so that its
/// projection on `Ψ` equals `Ψ` itself; the force then coincides with the
/// loss gradient and vanishes when `Ψ ∝ φ`.
pub fn build_sr_system(
    state: &NeuralState,
    target: &TargetState,
    sampler: &SamplerConfig,
    centered: bool,
) -> Result<NaturalGradientSystem> {
    let layout = ParamLayout::for_state(state);
    let eval = Evaluation::new(state, target, sampler, Some(&layout))?;
    sr_system_from(&eval, centered)
}

fn sr_system_from(eval: &Evaluation, centered: bool) -> Result<NaturalGradientSystem> {
    let f = DVector::from_vec(eval.gradient()?);
    let mut s = eval.sr_matrix(centered);
    // symmetrize round-off
    let st = s.transpose();
    s += st;
    s *= 0.5;
    Ok(NaturalGradientSystem { s, f })
}

/// Minimum-norm solution of `(S + λI) x = f`, discarding singular values
/// below `cutoff · σ_max`.
pub fn solve_sr(system: &NaturalGradientSystem, shift: f64, cutoff: f64) -> Result<DVector<f64>> {
    let p = system.f.len();
    if system.s.nrows() != p || system.s.ncols() != p {
        return Err(Error::Dimension(
            "SR matrix and force vector disagree".into(),
        ));
    }
    let mut a = system.s.clone();
    for k in 0..p {
        a[(k, k)] += shift;
    }
    // Eigenvalues of a PSD S + λI lie in [λ, tr(S) + pλ]; when λ clears the
    // cutoff against that bound nothing is discarded and a Cholesky solve
    // gives the same answer.
    let trace_bound: f64 = (0..p).map(|k| a[(k, k)].abs()).sum();
    if shift > 0.0 && shift >= cutoff * trace_bound {
        if let Some(chol) = a.clone().cholesky() {
            let x = chol.solve(&system.f);
            if x.iter().all(|v| v.is_finite()) {
                return Ok(x);
            }
        }
    }
    let eig = a.symmetric_eigen();
    let sigma_max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if sigma_max.is_nan() || sigma_max <= 0.0 {
        return Err(Error::DegenerateSystem);
    }
    let threshold = cutoff * sigma_max;
    let q = &eig.eigenvectors;
    let coeffs = q.tr_mul(&system.f);
    let mut x = DVector::<f64>::zeros(p);
    let mut kept = 0;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() > threshold {
            x += q.column(k) * (coeffs[k] / lambda);
            kept += 1;
        }
    }
    if kept == 0 {
        return Err(Error::DegenerateSystem);
    }
    Ok(x)
}

/// `α ← α − η (S + λI)⁺ f`.
pub fn natural_gradient_step(
    state: &mut NeuralState,
    system: &NaturalGradientSystem,
    config: &LearningConfig,
) -> Result<()> {
    let layout = ParamLayout::for_state(state);
    if system.f.len() != layout.n_real() {
        return Err(Error::Dimension(format!(
            "SR system has {} coordinates, state has {}",
            system.f.len(),
            layout.n_real()
        )));
    }
    let delta = solve_sr(system, config.sr_shift, config.pinv_cutoff)?;
    if delta.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    layout.apply(state, delta.as_slice(), -config.eta());
    Ok(())
}

/// Fidelity at every iteration of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityTrace {
    pub fidelities: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub final_state: NeuralState,
    /// True when a zero-overlap start forced a fresh random state.
    pub reinitialized: bool,
}

impl FidelityTrace {
    pub fn final_fidelity(&self) -> f64 {
        *self
            .fidelities
            .last()
            .expect("trace has at least one entry")
    }

    pub fn iterations(&self) -> usize {
        self.fidelities.len()
    }

    /// `iteration,fidelity,std_error` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,fidelity,std_error\n");
        for (k, (f, e)) in self.fidelities.iter().zip(&self.std_errors).enumerate() {
            out.push_str(&format!("{k},{f},{e}\n"));
        }
        out
    }
}

fn reinitialize(state: &NeuralState, scale: f64, seed: u64) -> Result<NeuralState> {
    let phase_m = state.phase_params.as_ref().map_or(0, RbmParams::n_hidden);
    init_random(
        state.n_visible(),
        state.amplitude_params.n_hidden(),
        phase_m,
        scale,
        seed,
    )?
    .with_masks(state.mask().cloned(), state.phase_mask().cloned())
}

/// Drive `state` toward `target` until `max_iters` or until the fidelity
/// changes by less than `convergence_tol` for [`CONVERGENCE_PATIENCE`]
/// consecutive iterations. Recorded fidelities are clipped to `[0, 1]`.
pub fn train(
    state: &mut NeuralState,
    target: &TargetState,
    learn_cfg: &LearningConfig,
    sampler_cfg: &SamplerConfig,
    trial_seed: u64,
) -> Result<FidelityTrace> {
    learn_cfg.validate()?;
    sampler_cfg.validate()?;
    check_pair(state, target)?;
    let layout = ParamLayout::for_state(state);
    let chain_base = derive_seed(sampler_cfg.seed, trial_seed);
    let mut fidelities = Vec::with_capacity(learn_cfg.max_iters + 1);
    let mut std_errors = Vec::with_capacity(learn_cfg.max_iters + 1);
    let mut reinitialized = false;
    let mut streak = 0;
    let mut converged = false;

    for iter in 0..learn_cfg.max_iters {
        let sampler = sampler_cfg.with_seed(derive_seed(chain_base, iter as u64));
        let eval = Evaluation::new(state, target, &sampler, Some(&layout))?;
        let f = eval.fidelity.value.re.clamp(0.0, 1.0);
        if let Some(&prev) = fidelities.last() {
            let prev: f64 = prev;
            streak = if (f - prev).abs() < learn_cfg.convergence_tol {
                streak + 1
            } else {
                0
            };
        }
        fidelities.push(f);
        std_errors.push(eval.fidelity.std_error);
        if streak >= CONVERGENCE_PATIENCE {
            converged = true;
            break;
        }
        let step = match learn_cfg.optimizer {
            Optimizer::Sgd => eval.gradient().and_then(|g| {
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFiniteGradient);
                }
                layout.apply(state, &g, -learn_cfg.eta());
                Ok(())
            }),
            Optimizer::Natural => sr_system_from(&eval, learn_cfg.centered_sr)
                .and_then(|sys| solve_sr(&sys, learn_cfg.sr_shift, learn_cfg.pinv_cutoff))
                .and_then(|delta| {
                    if delta.iter().any(|x| !x.is_finite()) {
                        return Err(Error::NonFiniteGradient);
                    }
                    layout.apply(state, delta.as_slice(), -learn_cfg.eta());
                    Ok(())
                }),
        };
        match step {
            Ok(()) => {}
            Err(Error::ZeroOverlap) if !reinitialized => {
                log::warn!("zero overlap at iteration {iter}; re-initializing the learner");
                *state = reinitialize(
                    state,
                    learn_cfg.reinit_scale,
                    derive_seed(trial_seed, u64::MAX),
                )?;
                reinitialized = true;
                streak = 0;
            }
            Err(e) => return Err(e),
        }
        if !state.is_finite() {
            return Err(Error::NonFiniteGradient);
        }
    }
    if !converged {
        let sampler = sampler_cfg.with_seed(derive_seed(chain_base, learn_cfg.max_iters as u64));
        let est = fidelity(state, target, &sampler)?;
        fidelities.push(est.value.re.clamp(0.0, 1.0));
        std_errors.push(est.std_error);
    }
    Ok(FidelityTrace {
        fidelities,
        std_errors,
        final_state: state.clone(),
        reinitialized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nqs::{build_target, inner, norm};
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn phi_plus() -> TargetState {
        build_target(&[(0, c(1.0, 0.0)), (3, c(1.0, 0.0))], 2, 0.0).unwrap()
    }

    fn random_target(n: usize, seed: u64) -> TargetState {
        let s = init_random(n, n, 0, 0.8, seed).unwrap();
        TargetState::from_amplitudes(n, s.state_vector().unwrap()).unwrap()
    }

    fn neg_log_f(state: &NeuralState, target: &TargetState) -> f64 {
        -fidelity(state, target, &SamplerConfig::exact())
            .unwrap()
            .value
            .re
            .ln()
    }

    /// Central differences of −ln F on each real coordinate.
    fn finite_difference_gradient(state: &NeuralState, target: &TargetState, h: f64) -> Vec<f64> {
        let layout = ParamLayout::for_state(state);
        let base = layout.flatten(state);
        (0..base.len())
            .map(|k| {
                let mut plus = state.clone();
                let mut minus = state.clone();
                let mut v = base.clone();
                v[k] += h;
                layout.assign(&mut plus, &v);
                v[k] -= 2.0 * h;
                layout.assign(&mut minus, &v);
                (neg_log_f(&plus, target) - neg_log_f(&minus, target)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn zero_params_log_derivatives() {
        let state = NeuralState::new(RbmParams::zeros(1, 1), None).unwrap();
        for s in [-1i8, 1] {
            let o = log_derivatives(&state, &SpinConfiguration::new(vec![s]).unwrap()).unwrap();
            // [a_re, a_im, b_re, b_im, W_re, W_im]
            assert_eq!(o[0], c(s as f64, 0.0));
            assert_eq!(o[1], c(0.0, s as f64));
            assert_eq!(o[2], c(0.0, 0.0));
            assert_eq!(o[4], c(0.0, 0.0));
        }
    }

    #[test]
    fn log_derivatives_match_finite_differences() {
        for (seed, m) in [(1u64, 0usize), (2, 3), (3, 2)] {
            let state = init_random(3, 4, m, 0.6, seed).unwrap();
            let layout = ParamLayout::for_state(&state);
            let base = layout.flatten(&state);
            let h = 1e-5;
            for b in 0..8 {
                let s = SpinConfiguration::from_index(b, 3);
                let analytic = log_derivatives(&state, &s).unwrap();
                for k in 0..base.len() {
                    let mut v = base.clone();
                    let mut plus = state.clone();
                    let mut minus = state.clone();
                    v[k] += h;
                    layout.assign(&mut plus, &v);
                    v[k] -= 2.0 * h;
                    layout.assign(&mut minus, &v);
                    // ln Ψ is only defined mod 2πi; difference the amplitudes instead
                    let psi = state.global_amplitude(&s).unwrap();
                    let d = (plus.global_amplitude(&s).unwrap()
                        - minus.global_amplitude(&s).unwrap())
                        / (2.0 * h)
                        / psi;
                    let err = (d - analytic[k]).norm();
                    assert!(
                        err <= 1e-6 * analytic[k].norm().max(1.0),
                        "seed {seed} b {b} k {k}: {d} vs {}",
                        analytic[k]
                    );
                }
            }
        }
    }

    #[test]
    fn masked_derivative_length_follows_parameter_count() {
        let spec: PartitionSpec = "1,2|3".parse().unwrap();
        let state = build_learner(&spec, &ArchitectureConfig::default(), 0).unwrap();
        let o = log_derivatives(&state, &SpinConfiguration::from_index(5, 3)).unwrap();
        let mask = make_mask(&spec, 2).unwrap();
        assert_eq!(o.len(), 2 * crate::separability::count_free_params(&mask));
        assert_eq!(o.len(), 2 * 19);
    }

    #[test]
    fn exact_fidelity_matches_inner_product() {
        for seed in 0..10 {
            let n = 1 + (seed as usize % 4);
            let state = init_random(n, 2 * n, seed as usize % 2, 0.7, seed).unwrap();
            let target = random_target(n, 100 + seed);
            let v = state.state_vector().unwrap();
            let direct = inner(&v, target.amplitudes()).norm() / norm(&v);
            let f = fidelity(&state, &target, &SamplerConfig::exact()).unwrap();
            assert!((f.value.re - direct).abs() < 1e-12);
            assert!(f.value.re <= 1.0 + 1e-12 && f.value.re >= 0.0);
            assert_eq!(f.std_error, 0.0);
        }
    }

    #[test]
    fn fidelity_of_product_with_bell() {
        // |+⟩|0⟩ as an RBM: a_1 = 0, a_2 → strongly favour spin −1
        let mut p = RbmParams::zeros(2, 1);
        p.visible_bias[1] = c(-30.0, 0.0);
        let state = NeuralState::new(p, None).unwrap();
        let f = fidelity(&state, &phi_plus(), &SamplerConfig::exact()).unwrap();
        assert!((f.value.re - 0.5).abs() < 1e-12);

        // |00⟩ is a best separable approximation
        let mut p = RbmParams::zeros(2, 1);
        p.visible_bias = vec![c(-30.0, 0.0), c(-30.0, 0.0)];
        let state = NeuralState::new(p, None).unwrap();
        let f = fidelity(&state, &phi_plus(), &SamplerConfig::exact()).unwrap();
        assert!((f.value.re - FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn fidelity_of_exact_representation_is_one() {
        let state = init_random(3, 3, 2, 0.5, 4).unwrap();
        let target = TargetState::from_amplitudes(3, state.state_vector().unwrap()).unwrap();
        let f = fidelity(&state, &target, &SamplerConfig::exact()).unwrap();
        assert!((f.value.re - 1.0).abs() < 1e-12);
        let (loss, grad) = loss_and_gradient(&state, &target, &SamplerConfig::exact()).unwrap();
        assert!(loss.abs() < 1e-12);
        assert!(grad.iter().map(|g| g * g).sum::<f64>().sqrt() <= 1e-6);
        let sys = build_sr_system(&state, &target, &SamplerConfig::exact(), false).unwrap();
        assert!(sys.f.norm() <= 1e-6);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..6u64 {
            let n = 1 + (seed as usize % 3);
            let state = init_random(n, n + 1, (seed as usize) % 2 * 2, 0.5, seed).unwrap();
            let target = random_target(n, 50 + seed);
            let (_, grad) = loss_and_gradient(&state, &target, &SamplerConfig::exact()).unwrap();
            let fd = finite_difference_gradient(&state, &target, 1e-5);
            let diff: f64 = grad
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let scale: f64 = fd.iter().map(|b| b * b).sum::<f64>().sqrt();
            assert!(
                diff <= 1e-5 * scale,
                "seed {seed}: rel err {}",
                diff / scale
            );
        }
    }

    #[test]
    fn masked_coordinates_are_absent_from_the_gradient() {
        let spec: PartitionSpec = "1|2".parse().unwrap();
        let state = build_learner(&spec, &ArchitectureConfig::default(), 3).unwrap();
        let (_, grad) = loss_and_gradient(&state, &phi_plus(), &SamplerConfig::exact()).unwrap();
        // 2 visible + 4 hidden + 2·2 allowed couplings
        assert_eq!(grad.len(), 2 * (2 + 4 + 4));
    }

    #[test]
    fn sgd_degenerate_steps_leave_state_unchanged() {
        let mut state = init_random(2, 2, 0, 0.1, 1).unwrap();
        let before = state.clone();
        let p = ParamLayout::for_state(&state).n_real();
        sgd_step(&mut state, &vec![0.0; p], 0.3).unwrap();
        assert_eq!(state, before);
        sgd_step(&mut state, &vec![1.0; p], 0.0).unwrap();
        assert_eq!(state, before);
        assert_eq!(
            sgd_step(&mut state, &vec![f64::NAN; p], 0.1),
            Err(Error::NonFiniteGradient)
        );
    }

    #[test]
    fn sgd_step_descends() {
        let target = build_target(&[(0, c(0.6, 0.0)), (1, c(0.0, 0.8))], 1, 0.0).unwrap();
        let mut state = init_random(1, 2, 0, 0.3, 7).unwrap();
        let (loss, grad) = loss_and_gradient(&state, &target, &SamplerConfig::exact()).unwrap();
        sgd_step(&mut state, &grad, 1e-3).unwrap();
        let (after, _) = loss_and_gradient(&state, &target, &SamplerConfig::exact()).unwrap();
        assert!(after < loss);
    }

    #[test]
    fn sr_matrix_is_symmetric_and_matches_hand_sums() {
        let state = init_random(2, 1, 0, 0.4, 9).unwrap();
        let target = phi_plus();
        let sys = build_sr_system(&state, &target, &SamplerConfig::exact(), false).unwrap();
        assert!((&sys.s - sys.s.transpose()).norm() <= 1e-10);

        // exhaustive-sum oracle
        let psi = state.state_vector().unwrap();
        let z: f64 = psi.iter().map(|p| p.norm_sqr()).sum();
        let rows: Vec<Vec<Complex64>> = (0..4)
            .map(|b| log_derivatives(&state, &SpinConfiguration::from_index(b, 2)).unwrap())
            .collect();
        let p = rows[0].len();
        for k in 0..p {
            for l in 0..p {
                let expected: f64 = (0..4)
                    .map(|b| psi[b].norm_sqr() / z * (rows[b][k].conj() * rows[b][l]).re)
                    .sum();
                assert!((sys.s[(k, l)] - expected).abs() < 1e-12);
            }
        }
        let overlap: Complex64 = (0..4).map(|b| psi[b].conj() * target.amplitude(b)).sum();
        for k in 0..p {
            let mean: Complex64 = (0..4)
                .map(|b| rows[b][k].conj() * psi[b].norm_sqr() / z)
                .sum();
            let mixed: Complex64 = (0..4)
                .map(|b| psi[b].conj() * target.amplitude(b) * rows[b][k].conj())
                .sum();
            let expected = (mean - mixed / overlap).re;
            assert!((sys.f[k] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_metric_reproduces_sgd() {
        let target = phi_plus();
        let state = init_random(2, 4, 0, 0.2, 12).unwrap();
        let mut sys = build_sr_system(&state, &target, &SamplerConfig::exact(), false).unwrap();
        let p = sys.f.len();
        sys.s = DMatrix::identity(p, p);
        let cfg = LearningConfig {
            sr_shift: 0.0,
            learning_rate: Some(0.05),
            ..LearningConfig::default()
        };
        let mut natural = state.clone();
        natural_gradient_step(&mut natural, &sys, &cfg).unwrap();
        let mut plain = state.clone();
        sgd_step(&mut plain, sys.f.as_slice(), 0.05).unwrap();
        let a = ParamLayout::for_state(&natural).flatten(&natural);
        let b = ParamLayout::for_state(&plain).flatten(&plain);
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-15));
    }

    #[test]
    fn pseudo_inverse_is_minimum_norm() {
        // rank-2 PSD matrix in 4 dimensions
        let v = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 2.0, 1.0, 0.0, 3.0, 1.0, 1.0]);
        let s = &v * v.transpose();
        let f = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let sys = NaturalGradientSystem {
            s: s.clone(),
            f: f.clone(),
        };
        let x = solve_sr(&sys, 0.0, 1e-10).unwrap();
        let oracle = s.pseudo_inverse(1e-9).unwrap() * &f;
        assert!((x - oracle).norm() < 1e-10);

        let zero = NaturalGradientSystem {
            s: DMatrix::zeros(3, 3),
            f: DVector::zeros(3),
        };
        assert_eq!(solve_sr(&zero, 0.0, 1e-10), Err(Error::DegenerateSystem));
    }

    #[test]
    fn cholesky_and_eigen_paths_agree() {
        let state = init_random(3, 6, 0, 0.3, 21).unwrap();
        let target = random_target(3, 22);
        let sys = build_sr_system(&state, &target, &SamplerConfig::exact(), true).unwrap();
        let fast = solve_sr(&sys, 1e-3, 1e-10).unwrap();
        // a cutoff too large for the fast path forces the eigen route
        let mut shifted = sys.clone();
        for k in 0..shifted.f.len() {
            shifted.s[(k, k)] += 1e-3;
        }
        let slow = solve_sr(&shifted, 0.0, 1e-14).unwrap();
        assert!((&fast - &slow).norm() < 1e-8 * slow.norm().max(1.0));
    }

    #[test]
    fn natural_gradient_learns_bell_state() {
        let mut state =
            build_learner(&PartitionSpec::free(2), &ArchitectureConfig::default(), 1).unwrap();
        let trace = train(
            &mut state,
            &phi_plus(),
            &LearningConfig::default(),
            &SamplerConfig::exact(),
            1,
        )
        .unwrap();
        assert!(trace.iterations() <= 501 || trace.fidelities[500] >= 0.999);
        assert!(
            trace.final_fidelity() >= 0.999,
            "{}",
            trace.final_fidelity()
        );
    }

    #[test]
    fn separable_learner_plateaus_at_best_product_overlap() {
        let spec: PartitionSpec = "1|2".parse().unwrap();
        let mut state = build_learner(&spec, &ArchitectureConfig::default(), 2).unwrap();
        let trace = train(
            &mut state,
            &phi_plus(),
            &LearningConfig::default(),
            &SamplerConfig::exact(),
            2,
        )
        .unwrap();
        assert!(
            (trace.final_fidelity() - FRAC_1_SQRT_2).abs() < 0.02,
            "{}",
            trace.final_fidelity()
        );
        assert!(trace.final_state.masks_respected());
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let mut state =
                build_learner(&PartitionSpec::free(2), &ArchitectureConfig::default(), 5).unwrap();
            let cfg = LearningConfig {
                max_iters: 50,
                ..LearningConfig::default()
            };
            train(&mut state, &phi_plus(), &cfg, &SamplerConfig::exact(), 5).unwrap()
        };
        assert_eq!(run().to_csv(), run().to_csv());
    }

    #[test]
    fn trace_csv_layout() {
        let mut state =
            build_learner(&PartitionSpec::free(1), &ArchitectureConfig::default(), 0).unwrap();
        let target = build_target(&[(0, c(1.0, 0.0))], 1, 0.0).unwrap();
        let cfg = LearningConfig {
            max_iters: 2,
            ..LearningConfig::default()
        };
        let trace = train(&mut state, &target, &cfg, &SamplerConfig::exact(), 0).unwrap();
        let csv = trace.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "iteration,fidelity,std_error");
        assert_eq!(lines.len(), 1 + trace.iterations());
        assert!(lines[1].starts_with("0,"));
        assert!(csv.ends_with('\n'));
    }

    #[test]
    fn config_validation() {
        let bad = LearningConfig {
            learning_rate: Some(0.0),
            ..LearningConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = LearningConfig {
            max_iters: 0,
            ..LearningConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(LearningConfig::sgd().eta(), 0.05);
        assert_eq!(LearningConfig::default().eta(), 0.02);
    }
}
