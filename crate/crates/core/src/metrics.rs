//! Figures of merit: Haar-averaged gate fidelity, relative gate fidelity,
//! Uhlmann state fidelity, heralded states and optimal-time search.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evolution::{
    dephasing_signs, propagate_unitary, propagate_unitary_observed, EvolutionError,
    EvolutionResult, PropagationOptions, StepView, TimeDependentHamiltonian,
};
use crate::gates::{herald_outcomes, GhzOutcome};
use crate::linalg::{
    c, inner_product, projector, sqrt_psd, trace, ComplexMatrix, DensityMatrix, HaarSampler,
    LinalgError, StateVector,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("reference fidelity F(V†V) vanishes")]
    DegenerateTarget,
    #[error("state has zero trace")]
    ZeroTrace,
    #[error("reference value must be non-zero")]
    ZeroReference,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("trace is empty or has no samples in the window")]
    EmptyTrace,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
}

pub type Result<T> = std::result::Result<T, MetricError>;

/// Normalization of the average gate fidelity for non-trace-preserving operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FidelityConvention {
    /// `(Σ|Tr A_i|² + Σ Tr A_i†A_i) / (d(d+1))`: the Haar integral of `⟨ψ|·|ψ⟩` overlaps.
    #[default]
    Haar,
    /// `(d + Σ|Tr A_i|²) / (d(d+1))`: the trace-preserving Kraus-form expression.
    Kraus,
}

impl FidelityConvention {
    pub const BOTH: [FidelityConvention; 2] = [FidelityConvention::Haar, FidelityConvention::Kraus];

    pub fn label(self) -> &'static str {
        match self {
            FidelityConvention::Haar => "haar",
            FidelityConvention::Kraus => "kraus",
        }
    }
}

/// Kraus-sum ingredients of an average gate fidelity with `A_i = V†K_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FidelitySums {
    pub dim: usize,
    /// `Σ |Tr A_i|²`.
    pub trace_sq: f64,
    /// `Σ Tr A_i†A_i`.
    pub frobenius_sq: f64,
}

impl FidelitySums {
    pub fn of(a: &ComplexMatrix) -> Self {
        Self {
            dim: a.nrows(),
            trace_sq: trace(a).norm_sqr(),
            frobenius_sq: inner_product(a, a).re,
        }
    }

    pub fn fidelity(&self, conv: FidelityConvention) -> f64 {
        let d = self.dim as f64;
        match conv {
            FidelityConvention::Haar => (self.trace_sq + self.frobenius_sq) / (d * (d + 1.0)),
            FidelityConvention::Kraus => (d + self.trace_sq) / (d * (d + 1.0)),
        }
    }
}

/// Closed-form `∫dψ |⟨ψ|E|ψ⟩|²` over Haar-random pure states.
pub fn avg_gate_fidelity(e: &ComplexMatrix) -> f64 {
    FidelitySums::of(e).fidelity(FidelityConvention::Haar)
}

/// Monte-Carlo estimate of [`avg_gate_fidelity`]: `(mean, standard error)`.
pub fn avg_gate_fidelity_monte_carlo(e: &ComplexMatrix, samples: usize, seed: u64) -> (f64, f64) {
    let mut sampler = HaarSampler::new(e.nrows(), seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let psi = sampler.sample();
        let v = psi.dotc(&(e * &psi)).norm_sqr();
        sum += v;
        sum_sq += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `F(V†E)/F(V†V)` for a single operation `E`.
pub fn relative_avg_gate_fidelity(
    e: &ComplexMatrix,
    v: &ComplexMatrix,
    conv: FidelityConvention,
) -> Result<f64> {
    if e.shape() != v.shape() {
        return Err(MetricError::DimensionMismatch(e.nrows(), v.nrows()));
    }
    relative_from_sums(&FidelitySums::of(&(v.adjoint() * e)), v, conv)
}

/// Relative fidelity from precomputed sums of `A_i = V†K_i`.
pub fn relative_from_sums(
    sums: &FidelitySums,
    v: &ComplexMatrix,
    conv: FidelityConvention,
) -> Result<f64> {
    let reference = FidelitySums::of(&(v.adjoint() * v)).fidelity(conv);
    if reference <= 0.0 {
        return Err(MetricError::DegenerateTarget);
    }
    Ok(sums.fidelity(conv) / reference)
}

/// Uhlmann fidelity `Tr √(√σ ρ √σ)` after normalizing both arguments.
pub fn state_fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(MetricError::DimensionMismatch(rho.dim(), sigma.dim()));
    }
    let (tr, ts) = (rho.trace(), sigma.trace());
    if tr <= 0.0 || ts <= 0.0 {
        return Err(MetricError::ZeroTrace);
    }
    let rs = sqrt_psd(sigma.matrix())?;
    let inner = &rs * rho.matrix() * &rs;
    let inner = (&inner + inner.adjoint()) * c(0.5, 0.0);
    let root = sqrt_psd(&inner)?;
    Ok((trace(&root).re / (tr * ts).sqrt()).clamp(0.0, 1.0))
}

/// `√(⟨ψ|ρ|ψ⟩ / Tr ρ)` for a normalized pure target.
pub fn state_fidelity_pure(rho: &DensityMatrix, psi: &StateVector) -> Result<f64> {
    if rho.dim() != psi.len() {
        return Err(MetricError::DimensionMismatch(rho.dim(), psi.len()));
    }
    let tr = rho.trace();
    if tr <= 0.0 {
        return Err(MetricError::ZeroTrace);
    }
    let v = psi.dotc(&(rho.matrix() * psi)).re / (tr * psi.norm_squared());
    Ok(v.clamp(0.0, 1.0).sqrt())
}

/// Heralded nuclear branches of `U(t)|ψ₀⟩` at every snapshot.
pub fn heralded_states(
    evo: &EvolutionResult<ComplexMatrix>,
    psi0: &StateVector,
) -> Vec<[GhzOutcome; 2]> {
    evo.snapshots
        .iter()
        .map(|u| herald_outcomes(&projector(&(u * psi0))))
        .collect()
}

/// Heralded nuclear branches of every density-matrix snapshot.
pub fn heralded_density_states(evo: &EvolutionResult<DensityMatrix>) -> Vec<[GhzOutcome; 2]> {
    evo.snapshots
        .iter()
        .map(|r| herald_outcomes(r.matrix()))
        .collect()
}

/// `(F_ref − F_noise)/F_ref`.
pub fn relative_deviation(f_ref: f64, f_noise: f64) -> Result<f64> {
    if f_ref == 0.0 || !f_ref.is_finite() {
        return Err(MetricError::ZeroReference);
    }
    Ok((f_ref - f_noise) / f_ref)
}

/// Fidelity sampled on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityTrace {
    pub label: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub reference_time: f64,
}

/// Location of a trace maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceMaximum {
    pub time: f64,
    pub value: f64,
    /// `|t* − t_ref|·a_z`.
    pub deviation_az: f64,
}

impl FidelityTrace {
    pub fn new(
        label: impl Into<String>,
        times: Vec<f64>,
        values: Vec<f64>,
        reference_time: f64,
    ) -> Self {
        assert_eq!(times.len(), values.len(), "one value per time");
        Self {
            label: label.into(),
            times,
            values,
            reference_time,
        }
    }

    /// Value at the grid point closest to the reference time.
    pub fn value_at_reference(&self) -> Option<f64> {
        self.value_near(self.reference_time)
    }

    pub fn value_near(&self, t: f64) -> Option<f64> {
        self.times
            .iter()
            .zip(&self.values)
            .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
            .map(|(_, &v)| v)
    }

    /// Largest spacing between consecutive samples.
    pub fn grid_step(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

/// First global maximum of `trace` on the samples within `window` (inclusive).
pub fn trace_maximum(trace: &FidelityTrace, window: (f64, f64), a_z: f64) -> Result<TraceMaximum> {
    let mut best: Option<(f64, f64)> = None;
    for (&t, &v) in trace.times.iter().zip(&trace.values) {
        if t < window.0 || t > window.1 {
            continue;
        }
        if best.map_or(true, |(_, bv)| v > bv) {
            best = Some((t, v));
        }
    }
    let (time, value) = best.ok_or(MetricError::EmptyTrace)?;
    Ok(TraceMaximum {
        time,
        value,
        deviation_az: (time - trace.reference_time).abs() * a_z,
    })
}

/// First-order quantum-jump expansion of a gate under electron dephasing.
///
/// With `L = σz ⊗ 1` and `W = V†U(T)`, the channel to first order in `Γ` has
/// Kraus operators `e^{−ΓT/2}U(T)` and `√(Γe^{−ΓT}ds)·U(T)L_H(s)`, where
/// `L_H(s) = U(s)†LU(s)`. The `Γ`-independent pieces are stored so one
/// propagation serves any rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpExpansion {
    pub dim: usize,
    pub duration: f64,
    /// `|Tr W|²`.
    pub trace_sq: f64,
    /// `Tr W†W`.
    pub frobenius_sq: f64,
    /// `∫₀ᵀ |Tr(W L_H(s))|² ds`.
    pub kick_integral: f64,
}

impl JumpExpansion {
    /// Sums at rate `gamma_per_us`, truncated after one jump.
    pub fn sums(&self, gamma_per_us: f64) -> FidelitySums {
        let g = gamma_per_us * 1e-3;
        let decay = (-g * self.duration).exp();
        FidelitySums {
            dim: self.dim,
            trace_sq: decay * (self.trace_sq + g * self.kick_integral),
            frobenius_sq: decay * (1.0 + g * self.duration) * self.frobenius_sq,
        }
    }

    /// Probability weight of two or more jumps, omitted by [`Self::sums`].
    pub fn truncation_weight(&self, gamma_per_us: f64) -> f64 {
        let x = gamma_per_us * 1e-3 * self.duration;
        1.0 - (-x).exp() * (1.0 + x)
    }
}

/// Propagates to `t1` twice: once for `U(T)`, once accumulating the jump integral.
pub fn jump_expansion<H: TimeDependentHamiltonian + ?Sized>(
    ham: &H,
    v: &ComplexMatrix,
    t1: f64,
    step: f64,
) -> Result<JumpExpansion> {
    let dim = ham.dim();
    let u_t = propagate_unitary(ham, 0.0, t1, &PropagationOptions::new(step))?
        .snapshots
        .pop()
        .expect("final propagator");
    let w = v.adjoint() * &u_t;
    let signs = dephasing_signs(dim);
    let mut kick = 0.0;
    propagate_unitary_observed(ham, 0.0, t1, step, |view: &StepView<'_>| {
        let mut tr = C64::new(0.0, 0.0);
        for (b, ub) in view.midpoint.iter().enumerate() {
            let idx = view.sectors.block(b);
            let mut lu = ub.clone();
            for (r, &g) in idx.iter().enumerate() {
                if signs[g] < 0.0 {
                    for z in lu.row_mut(r).iter_mut() {
                        *z = -*z;
                    }
                }
            }
            let lh = ub.adjoint() * lu;
            for (i, &gi) in idx.iter().enumerate() {
                for (j, &gj) in idx.iter().enumerate() {
                    tr += w[(gj, gi)] * lh[(i, j)];
                }
            }
        }
        kick += view.h * tr.norm_sqr();
    })?;
    Ok(JumpExpansion {
        dim,
        duration: t1,
        trace_sq: trace(&w).norm_sqr(),
        frobenius_sq: inner_product(&w, &w).re,
        kick_integral: kick,
    })
}
