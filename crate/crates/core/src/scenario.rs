//! Scenario configuration and the runners behind each figure-level dataset.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evolution::{
    default_step, gate_duration, propagate_lindblad, propagate_unitary, rotation_time,
    EvolutionError, EvolutionResult, GateKind, PropagationOptions, RotatingFrameModel, StepRule,
};
use crate::gates::{
    ghz_initial_state, ghz_state, herald_amplitudes, synchronous_gate, GateError, Herald, Subspace,
    SynchronousKind,
};
use crate::linalg::{projector, ComplexMatrix, DensityMatrix};
use crate::metrics::{
    jump_expansion, relative_deviation, relative_from_sums, state_fidelity_pure, trace_maximum,
    FidelityConvention, FidelitySums, FidelityTrace, MetricError, TraceMaximum,
};
use crate::pulse::{cpmg_period, cpmg_schedule, filters_from_schedule, FilterSet, PulseError};
use crate::spin::{
    b_op, derive_params, DerivedParams, HyperfineSet, ModelError, PhysicalConstants,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pulse(#[from] PulseError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Gate(#[from] GateError),
}

pub type Result<T> = std::result::Result<T, ScenarioError>;

fn config_err(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Constants,
    GateX,
    GateZ,
    Hadamard,
    Ghz,
    Dephasing,
    Sweep,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Constants => "constants",
            ScenarioKind::GateX => "gate_x",
            ScenarioKind::GateZ => "gate_z",
            ScenarioKind::Hadamard => "hadamard",
            ScenarioKind::Ghz => "ghz",
            ScenarioKind::Dephasing => "dephasing",
            ScenarioKind::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConfig {
    pub constants: PhysicalConstants,
    pub hyperfine: HyperfineSet,
    /// Adds the static nuclear quadrupole term.
    pub quadrupole: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ControlConfig {
    pub revolutions: Option<Vec<u32>>,
    pub harmonic: Option<u32>,
    /// Target rotation angle; defaults depend on the scenario.
    pub phi: Option<f64>,
    /// Explicit fields in mT; otherwise derived from `phi` and `revolutions`.
    pub field_mt: Option<Vec<f64>>,
    /// Nuclear polarization `m_I` of the GHZ input.
    pub polarization: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Dephasing times `Γ⁻¹` in μs.
    pub gamma_inv_us: Option<Vec<f64>>,
    /// Field used for the Z gate in deviation runs.
    pub z_field_mt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    /// Step in ns; defaults to 50 points per fastest period.
    pub step: Option<f64>,
    /// Half-step rerun tolerance; `0` disables the rerun.
    pub tolerance: Option<f64>,
    pub grid_points: Option<usize>,
    /// Trace horizon as a multiple of the reference time.
    pub horizon: Option<f64>,
    pub rule: Option<StepRule>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepGate {
    X,
    Hadamard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub gate: Option<SweepGate>,
    pub revolutions: Option<Vec<u32>>,
    pub harmonics: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub convention: Option<FidelityConvention>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub svg: Option<bool>,
}

/// A complete scenario description. Missing values are filled by [`ScenarioConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    #[serde(default)]
    pub physics: PhysicsConfig,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

pub const DEFAULT_GRID_POINTS: usize = 600;
pub const DEFAULT_HORIZON: f64 = 1.2;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

impl ScenarioConfig {
    pub fn new(kind: ScenarioKind) -> Self {
        Self {
            kind,
            physics: PhysicsConfig::default(),
            control: ControlConfig::default(),
            noise: NoiseConfig::default(),
            integrator: IntegratorConfig::default(),
            sweep: SweepConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Fills every default for this kind and validates the result.
    pub fn resolve(&self) -> Result<Self> {
        let mut c = self.clone();
        let kind = c.kind;
        let ctl = &mut c.control;
        let cpmg = matches!(
            kind,
            ScenarioKind::GateX
                | ScenarioKind::Hadamard
                | ScenarioKind::Ghz
                | ScenarioKind::Dephasing
        );
        if ctl.revolutions.is_none() {
            ctl.revolutions = Some(match kind {
                ScenarioKind::Constants => (1..=20).map(|i| 10 * i).collect(),
                ScenarioKind::GateX | ScenarioKind::Hadamard | ScenarioKind::Ghz => {
                    vec![10, 20, 50]
                }
                ScenarioKind::Dephasing => vec![50],
                ScenarioKind::GateZ | ScenarioKind::Sweep => vec![],
            });
        }
        if ctl.harmonic.is_none() && (cpmg || kind == ScenarioKind::Constants) {
            ctl.harmonic = Some(5);
        }
        if ctl.phi.is_none() {
            ctl.phi = Some(match kind {
                ScenarioKind::GateZ => PI,
                ScenarioKind::Hadamard => PI / 4.0,
                ScenarioKind::Sweep => match c.sweep.gate.unwrap_or(SweepGate::X) {
                    SweepGate::X => PI / 2.0,
                    SweepGate::Hadamard => PI / 4.0,
                },
                _ => PI / 2.0,
            });
        }
        if kind == ScenarioKind::GateZ && ctl.field_mt.is_none() {
            ctl.field_mt = Some(vec![0.0, 100.0, 500.0, 700.0]);
        }
        if kind == ScenarioKind::Ghz || kind == ScenarioKind::Dephasing {
            ctl.polarization.get_or_insert(1);
        }
        if kind == ScenarioKind::Dephasing {
            c.noise.gamma_inv_us.get_or_insert_with(|| vec![2.0, 4.0]);
            c.noise.z_field_mt.get_or_insert(500.0);
        }
        if kind == ScenarioKind::Sweep {
            c.sweep.gate.get_or_insert(SweepGate::X);
            c.sweep
                .revolutions
                .get_or_insert_with(|| vec![10, 20, 50, 100]);
            c.sweep.harmonics.get_or_insert_with(|| vec![1, 3, 5, 7]);
        }
        let i = &mut c.integrator;
        i.grid_points.get_or_insert(DEFAULT_GRID_POINTS);
        i.horizon.get_or_insert(DEFAULT_HORIZON);
        i.rule.get_or_insert(StepRule::Magnus4);
        i.tolerance.get_or_insert(if kind == ScenarioKind::Sweep {
            0.0
        } else {
            DEFAULT_TOLERANCE
        });
        let o = &mut c.output;
        o.convention.get_or_insert(FidelityConvention::Haar);
        o.seed.get_or_insert(0);
        o.jobs.get_or_insert(1);
        o.svg.get_or_insert(false);
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        self.physics
            .constants
            .validate()
            .map_err(|e| config_err("physics.constants", e.to_string()))?;
        self.physics
            .hyperfine
            .validate()
            .map_err(|e| config_err("physics.hyperfine", e.to_string()))?;
        let ctl = &self.control;
        if let Some(p) = ctl.harmonic {
            if p % 2 == 0 {
                return Err(config_err(
                    "control.harmonic",
                    format!("must be odd, got {p}"),
                ));
            }
        }
        if let Some(ns) = &ctl.revolutions {
            if ns.iter().any(|&n| n == 0) {
                return Err(config_err(
                    "control.revolutions",
                    "entries must be positive",
                ));
            }
        }
        if let Some(phi) = ctl.phi {
            if phi == 0.0 || !phi.is_finite() {
                return Err(config_err("control.phi", "must be finite and non-zero"));
            }
        }
        if let Some(m) = ctl.polarization {
            if m != 1 && m != -1 {
                return Err(config_err("control.polarization", "must be +1 or -1"));
            }
        }
        if let Some(fields) = &ctl.field_mt {
            if fields.iter().any(|&b| !(b >= 0.0) || !b.is_finite()) {
                return Err(config_err(
                    "control.field_mt",
                    "fields must be finite and non-negative",
                ));
            }
            let revs = ctl.revolutions.as_ref().map_or(0, Vec::len);
            let paired = matches!(
                self.kind,
                ScenarioKind::GateX
                    | ScenarioKind::Hadamard
                    | ScenarioKind::Ghz
                    | ScenarioKind::Dephasing
            );
            if paired && fields.len() != revs {
                return Err(config_err(
                    "control.field_mt",
                    "explicit fields replace the derived operating field and need one entry per revolution count",
                ));
            }
            if matches!(self.kind, ScenarioKind::Sweep | ScenarioKind::Constants) {
                return Err(config_err(
                    "control.field_mt",
                    "fields are derived for this kind",
                ));
            }
        }
        if self.kind == ScenarioKind::Dephasing && ctl.revolutions.as_ref().map_or(0, Vec::len) != 1
        {
            return Err(config_err(
                "control.revolutions",
                "dephasing runs take exactly one revolution count",
            ));
        }
        if let Some(g) = &self.noise.gamma_inv_us {
            if g.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return Err(config_err("noise.gamma_inv_us", "entries must be positive"));
            }
        }
        if let Some(b) = self.noise.z_field_mt {
            if !(b >= 0.0) {
                return Err(config_err("noise.z_field_mt", "must be non-negative"));
            }
        }
        let i = &self.integrator;
        if let Some(s) = i.step {
            if !(s > 0.0) || !s.is_finite() {
                return Err(config_err("integrator.step", "must be positive"));
            }
        }
        if let Some(t) = i.tolerance {
            if !(t >= 0.0) {
                return Err(config_err("integrator.tolerance", "must be non-negative"));
            }
        }
        if let Some(n) = i.grid_points {
            if n < 2 {
                return Err(config_err(
                    "integrator.grid_points",
                    "need at least 2 points",
                ));
            }
        }
        if let Some(h) = i.horizon {
            if !(h >= 1.0) || !h.is_finite() {
                return Err(config_err("integrator.horizon", "must be at least 1"));
            }
        }
        if let Some(ps) = &self.sweep.harmonics {
            if ps.is_empty() || ps.iter().any(|p| p % 2 == 0) {
                return Err(config_err(
                    "sweep.harmonics",
                    "must be a non-empty list of odd integers",
                ));
            }
        }
        if let Some(ns) = &self.sweep.revolutions {
            if ns.is_empty() || ns.iter().any(|&n| n == 0) {
                return Err(config_err(
                    "sweep.revolutions",
                    "must be a non-empty list of positive integers",
                ));
            }
        }
        if self.output.jobs == Some(0) {
            return Err(config_err("output.jobs", "must be at least 1"));
        }
        Ok(())
    }

    fn revolutions(&self) -> &[u32] {
        self.control.revolutions.as_deref().unwrap_or(&[])
    }

    fn harmonic(&self) -> u32 {
        self.control.harmonic.unwrap_or(5)
    }

    fn phi(&self) -> f64 {
        self.control.phi.unwrap_or(PI / 2.0)
    }

    pub fn integration(&self) -> Integration {
        let i = &self.integrator;
        Integration {
            step: i.step,
            tolerance: i.tolerance.filter(|&t| t > 0.0),
            grid_points: i.grid_points.unwrap_or(DEFAULT_GRID_POINTS),
            horizon: i.horizon.unwrap_or(DEFAULT_HORIZON),
            rule: i.rule.unwrap_or_default(),
        }
    }
}

/// Resolved integrator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integration {
    pub step: Option<f64>,
    pub tolerance: Option<f64>,
    pub grid_points: usize,
    pub horizon: f64,
    pub rule: StepRule,
}

impl Default for Integration {
    fn default() -> Self {
        Self {
            step: None,
            tolerance: Some(DEFAULT_TOLERANCE),
            grid_points: DEFAULT_GRID_POINTS,
            horizon: DEFAULT_HORIZON,
            rule: StepRule::Magnus4,
        }
    }
}

impl Integration {
    pub fn step_for(&self, p: &DerivedParams) -> f64 {
        self.step.unwrap_or_else(|| default_step(p))
    }

    /// Uniform grid on `[0, horizon·t_ref]` plus the given landmark times.
    pub fn grid(&self, t_ref: f64, landmarks: &[f64]) -> Vec<f64> {
        let end = self.horizon * t_ref;
        let n = self.grid_points;
        let mut g: Vec<f64> = (0..n).map(|i| end * i as f64 / (n - 1) as f64).collect();
        g.extend(landmarks.iter().copied().filter(|&t| t >= 0.0 && t <= end));
        g.sort_by(f64::total_cmp);
        g.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
        g
    }
}

/// Physical setting of a single gate or state run.
#[derive(Debug, Clone, PartialEq)]
pub struct Setup {
    pub physics: PhysicsConfig,
    pub revolutions: u32,
    pub harmonic: u32,
    pub phi: f64,
    /// `None` derives the operating field from `phi` and `revolutions`.
    pub field_mt: Option<f64>,
}

impl Setup {
    pub fn new(revolutions: u32, harmonic: u32, phi: f64) -> Self {
        Self {
            physics: PhysicsConfig::default(),
            revolutions,
            harmonic,
            phi,
            field_mt: None,
        }
    }

    pub fn with_field(mut self, field_mt: f64) -> Self {
        self.field_mt = Some(field_mt);
        self
    }

    pub fn with_quadrupole(mut self, on: bool) -> Self {
        self.physics.quadrupole = on;
        self
    }

    pub fn field(&self) -> Result<f64> {
        match self.field_mt {
            Some(b) => Ok(b),
            None => Ok(b_op(
                self.phi,
                self.revolutions,
                &self.physics.constants,
                &self.physics.hyperfine,
            )?),
        }
    }

    pub fn params(&self) -> Result<DerivedParams> {
        Ok(derive_params(
            &self.physics.constants,
            &self.physics.hyperfine,
            self.field()?,
        )?)
    }

    fn finish(&self, model: RotatingFrameModel, rule: StepRule) -> RotatingFrameModel {
        let model = model.with_step_rule(rule);
        if self.physics.quadrupole {
            model.with_quadrupole(&self.physics.constants)
        } else {
            model
        }
    }

    /// CPMG-driven model continued periodically up to `horizon`.
    pub fn cpmg_model(&self, horizon: f64, rule: StepRule) -> Result<RotatingFrameModel> {
        let p = self.params()?;
        let s = cpmg_schedule(self.harmonic, self.revolutions, p.delta)?.extend_periodic(horizon);
        Ok(self.finish(RotatingFrameModel::new(p, filters_from_schedule(&s)), rule))
    }

    /// Pulse-free model.
    pub fn free_model(&self, rule: StepRule) -> Result<RotatingFrameModel> {
        let p = self.params()?;
        Ok(self.finish(RotatingFrameModel::new(p, FilterSet::free()), rule))
    }
}

/// Target gate of a gate run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateTarget {
    X,
    Z,
    Hadamard,
}

impl GateTarget {
    pub fn sync_kind(self) -> SynchronousKind {
        match self {
            GateTarget::X => SynchronousKind::X,
            GateTarget::Z => SynchronousKind::Z,
            GateTarget::Hadamard => SynchronousKind::H,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            GateTarget::X => "X",
            GateTarget::Z => "Z",
            GateTarget::Hadamard => "H",
        }
    }
}

/// Time-resolved gate fidelity sums and integration metadata.
#[derive(Debug, Clone)]
pub struct GateRun {
    pub target: GateTarget,
    pub label: String,
    /// `(N, p)` for pulsed gates.
    pub cpmg: Option<(u32, u32)>,
    pub field_mt: f64,
    pub params: DerivedParams,
    pub reference_time: f64,
    /// `N·T` for pulsed gates.
    pub cpmg_duration: Option<f64>,
    pub times: Vec<f64>,
    pub sums: Vec<FidelitySums>,
    pub rotation_target: ComplexMatrix,
    /// `V†U(t_ref)`.
    pub reference_overlap: ComplexMatrix,
    pub step: f64,
    pub convergence_estimate: Option<f64>,
    pub converged: bool,
}

impl GateRun {
    pub fn trace(&self, conv: FidelityConvention) -> FidelityTrace {
        let values = self
            .sums
            .iter()
            .map(|s| relative_from_sums(s, &self.rotation_target, conv).unwrap_or(f64::NAN))
            .collect();
        FidelityTrace::new(
            self.label.clone(),
            self.times.clone(),
            values,
            self.reference_time,
        )
    }

    pub fn maximum(&self, conv: FidelityConvention) -> Result<TraceMaximum> {
        let tr = self.trace(conv);
        let end = *tr.times.last().unwrap_or(&0.0);
        Ok(trace_maximum(&tr, (0.0, end), self.params.a_z)?)
    }

    pub fn value_at(&self, conv: FidelityConvention, t: f64) -> Option<f64> {
        self.trace(conv).value_near(t)
    }
}

/// Step halvings tried on a default-step run that misses the tolerance.
pub const MAX_REFINEMENTS: u32 = 3;

/// Propagates on `grid`; with the default step, halves it until the half-step check passes.
fn propagate_grid(
    model: &RotatingFrameModel,
    integ: &Integration,
    grid: Vec<f64>,
) -> Result<EvolutionResult<ComplexMatrix>> {
    let end = *grid.last().expect("grid is non-empty");
    let mut step = integ.step_for(model.params());
    let refinements = if integ.step.is_some() {
        0
    } else {
        MAX_REFINEMENTS
    };
    let mut tries = 0;
    loop {
        let mut opts = PropagationOptions::new(step).with_snapshots(grid.clone());
        opts.tolerance = integ.tolerance;
        let evo = propagate_unitary(model, 0.0, end, &opts)?;
        if evo.converged || tries == refinements {
            return Ok(evo);
        }
        tries += 1;
        step /= 2.0;
    }
}

/// Relative gate fidelity of a pulsed (X, H) or free (Z) gate over `[0, horizon·t_ref]`.
pub fn simulate_gate(target: GateTarget, setup: &Setup, integ: &Integration) -> Result<GateRun> {
    let p = setup.params()?;
    let (model, t_ref, cpmg_duration, label) = match target {
        GateTarget::Z => {
            let t_ref = gate_duration(GateKind::Z { phi: setup.phi }, &p)?;
            (
                setup.free_model(integ.rule)?,
                t_ref,
                None,
                format!("B={} mT", fmt_field(p.field_mt)),
            )
        }
        GateTarget::X | GateTarget::Hadamard => {
            let t_ref = rotation_time(setup.phi, setup.harmonic, &p);
            let horizon = integ.horizon * t_ref;
            let nt = cpmg_duration(setup, &p);
            (
                setup.cpmg_model(horizon, integ.rule)?,
                t_ref,
                Some(nt),
                format!("N={}", setup.revolutions),
            )
        }
    };
    let landmarks: Vec<f64> = std::iter::once(t_ref).chain(cpmg_duration).collect();
    let grid = integ.grid(t_ref, &landmarks);
    let evo = propagate_grid(&model, integ, grid)?;
    let gate = synchronous_gate(target.sync_kind(), Subspace::Yz);
    let v = gate.rotation_target();
    let vd = v.adjoint();
    let sums = evo
        .snapshots
        .iter()
        .map(|u| FidelitySums::of(&(&vd * u)))
        .collect();
    let i_ref = nearest_index(&evo.times, t_ref);
    let reference_overlap = &vd * &evo.snapshots[i_ref];
    Ok(GateRun {
        target,
        label,
        cpmg: cpmg_duration.map(|_| (setup.revolutions, setup.harmonic)),
        field_mt: p.field_mt,
        params: p,
        reference_time: t_ref,
        cpmg_duration,
        times: evo.times,
        sums,
        rotation_target: v,
        reference_overlap,
        step: evo.step,
        convergence_estimate: evo.convergence_estimate,
        converged: evo.converged,
    })
}

/// `N·T` at the setup's field. Operating fields derived from `phi` leave
/// `N·δ_Δ` slightly short of `phi`, so the strict resolution check is not applied.
pub fn cpmg_duration(setup: &Setup, p: &DerivedParams) -> f64 {
    cpmg_period(setup.harmonic, p.delta) * setup.revolutions as f64
}

/// Rotation angle `N·δ_Δ` actually reached after `N` periods.
pub fn achieved_angle(revolutions: u32, p: &DerivedParams) -> f64 {
    revolutions as f64 * p.resolution()
}

fn nearest_index(times: &[f64], t: f64) -> usize {
    times
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
        .map_or(0, |(i, _)| i)
}

fn fmt_field(b: f64) -> String {
    let r = (b * 100.0).round() / 100.0;
    format!("{r}")
}

/// Heralded GHZ fidelities over `[0, horizon·t_ref]`.
#[derive(Debug, Clone)]
pub struct GhzRun {
    pub label: String,
    pub revolutions: u32,
    pub harmonic: u32,
    pub field_mt: f64,
    pub params: DerivedParams,
    pub reference_time: f64,
    pub cpmg_duration: f64,
    pub times: Vec<f64>,
    /// Root fidelity of the herald-|0⟩ branch to `|GHZ⟩_0`.
    pub fidelity_zero: Vec<f64>,
    /// Root fidelity of the herald-|−1⟩ branch to `|GHZ⟩_π`.
    pub fidelity_pi: Vec<f64>,
    pub probability_zero: Vec<f64>,
    pub step: f64,
    pub convergence_estimate: Option<f64>,
    pub converged: bool,
}

impl GhzRun {
    pub fn trace(&self, herald: Herald) -> FidelityTrace {
        let (values, tag) = match herald {
            Herald::Zero => (self.fidelity_zero.clone(), "nu=0"),
            Herald::MinusOne => (self.fidelity_pi.clone(), "nu=pi"),
        };
        FidelityTrace::new(
            format!("{} {tag}", self.label),
            self.times.clone(),
            values,
            self.reference_time,
        )
    }

    pub fn maximum(&self, herald: Herald) -> Result<TraceMaximum> {
        let tr = self.trace(herald);
        let end = *tr.times.last().unwrap_or(&0.0);
        Ok(trace_maximum(&tr, (0.0, end), self.params.a_z)?)
    }
}

fn ghz_fidelities(psi: &crate::linalg::StateVector, m: i32) -> Result<(f64, f64, f64)> {
    let mut f = [0.0; 2];
    let mut p0 = 0.0;
    for h in Herald::BOTH {
        let amp = herald_amplitudes(psi, h);
        let prob = amp.norm_squared();
        if h == Herald::Zero {
            p0 = prob;
        }
        let target = ghz_state(h.ghz_phase(), m)?;
        f[h.index()] = if prob > 0.0 {
            (target.dotc(&amp).norm_sqr() / prob).sqrt()
        } else {
            0.0
        };
    }
    Ok((f[0], f[1], p0))
}

pub fn simulate_ghz(setup: &Setup, polarization: i32, integ: &Integration) -> Result<GhzRun> {
    let p = setup.params()?;
    let t_ref = rotation_time(setup.phi, setup.harmonic, &p);
    let nt = cpmg_duration(setup, &p);
    let model = setup.cpmg_model(integ.horizon * t_ref, integ.rule)?;
    let grid = integ.grid(t_ref, &[t_ref, nt]);
    let evo = propagate_grid(&model, integ, grid)?;
    let psi0 = ghz_initial_state(polarization)?;
    let mut fz = Vec::with_capacity(evo.times.len());
    let mut fp = Vec::with_capacity(evo.times.len());
    let mut pz = Vec::with_capacity(evo.times.len());
    for u in &evo.snapshots {
        let (a, b, p0) = ghz_fidelities(&(u * &psi0), polarization)?;
        fz.push(a);
        fp.push(b);
        pz.push(p0);
    }
    Ok(GhzRun {
        label: format!("N={}", setup.revolutions),
        revolutions: setup.revolutions,
        harmonic: setup.harmonic,
        field_mt: p.field_mt,
        params: p,
        reference_time: t_ref,
        cpmg_duration: nt,
        times: evo.times,
        fidelity_zero: fz,
        fidelity_pi: fp,
        probability_zero: pz,
        step: evo.step,
        convergence_estimate: evo.convergence_estimate,
        converged: evo.converged,
    })
}

/// Noise-induced relative fidelity change of one target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Deviation {
    pub target: String,
    pub source: String,
    pub gamma_inv_us: Option<f64>,
    pub time: f64,
    pub f_ref: f64,
    pub f_noise: f64,
    pub deviation: f64,
    /// Neglected probability weight of the expansion, when one is used.
    pub truncation: Option<f64>,
}

/// Model of a gate and its reference time: `|φ|/a_z` for Z, the rotation time otherwise.
pub fn gate_model(
    target: GateTarget,
    setup: &Setup,
    integ: &Integration,
) -> Result<(RotatingFrameModel, f64)> {
    let p = setup.params()?;
    Ok(match target {
        GateTarget::Z => (
            setup.free_model(integ.rule)?,
            gate_duration(GateKind::Z { phi: setup.phi }, &p)?,
        ),
        _ => {
            let t = rotation_time(setup.phi, setup.harmonic, &p);
            (setup.cpmg_model(integ.horizon * t, integ.rule)?, t)
        }
    })
}

/// Dephasing deviations of a gate at its reference time, one per rate.
pub fn gate_dephasing(
    target: GateTarget,
    setup: &Setup,
    gamma_inv_us: &[f64],
    conv: FidelityConvention,
    integ: &Integration,
) -> Result<Vec<Deviation>> {
    let (model, t) = gate_model(target, setup, integ)?;
    let v = synchronous_gate(target.sync_kind(), Subspace::Yz).rotation_target();
    let je = jump_expansion(&model, &v, t, integ.step_for(model.params()))?;
    let f_ref = relative_from_sums(&je.sums(0.0), &v, conv)?;
    gamma_inv_us
        .iter()
        .map(|&g_inv| {
            let gamma = 1.0 / g_inv;
            let f_noise = relative_from_sums(&je.sums(gamma), &v, conv)?;
            Ok(Deviation {
                target: target.label().to_string(),
                source: "dephasing".into(),
                gamma_inv_us: Some(g_inv),
                time: t,
                f_ref,
                f_noise,
                deviation: relative_deviation(f_ref, f_noise)?,
                truncation: Some(je.truncation_weight(gamma)),
            })
        })
        .collect()
}

/// GHZ fidelities of both heralds at `t_ref`, from a Lindblad run at rate `1/gamma_inv_us`.
pub fn ghz_at_reference(
    setup: &Setup,
    polarization: i32,
    gamma_inv_us: Option<f64>,
    integ: &Integration,
) -> Result<(f64, [f64; 2])> {
    let p = setup.params()?;
    let t = rotation_time(setup.phi, setup.harmonic, &p);
    let model = setup.cpmg_model(integ.horizon * t, integ.rule)?;
    let psi0 = ghz_initial_state(polarization)?;
    let step = integ.step_for(&p);
    let rho = match gamma_inv_us {
        None => {
            let u = propagate_unitary(&model, 0.0, t, &PropagationOptions::new(step))?
                .snapshots
                .pop()
                .expect("final propagator");
            projector(&(u * &psi0))
        }
        Some(g_inv) => {
            let evo = propagate_lindblad(
                &model,
                1.0 / g_inv,
                &DensityMatrix::from_pure(&psi0),
                0.0,
                t,
                &PropagationOptions::new(step),
            )?;
            evo.snapshots
                .into_iter()
                .last()
                .expect("final state")
                .into_matrix()
        }
    };
    let mut f = [0.0; 2];
    for h in Herald::BOTH {
        let block = DensityMatrix::from_matrix_unchecked(crate::gates::herald_block(&rho, h));
        f[h.index()] = state_fidelity_pure(&block, &ghz_state(h.ghz_phase(), polarization)?)?;
    }
    Ok((t, f))
}

/// Dephasing deviations of both GHZ heralds, one pair per rate.
pub fn ghz_dephasing(
    setup: &Setup,
    polarization: i32,
    gamma_inv_us: &[f64],
    integ: &Integration,
) -> Result<Vec<Deviation>> {
    let (t, f_ref) = ghz_at_reference(setup, polarization, None, integ)?;
    let mut out = Vec::new();
    for &g_inv in gamma_inv_us {
        let (_, f_noise) = ghz_at_reference(setup, polarization, Some(g_inv), integ)?;
        for h in Herald::BOTH {
            let i = h.index();
            out.push(Deviation {
                target: ghz_label(h).into(),
                source: "dephasing".into(),
                gamma_inv_us: Some(g_inv),
                time: t,
                f_ref: f_ref[i],
                f_noise: f_noise[i],
                deviation: relative_deviation(f_ref[i], f_noise[i])?,
                truncation: None,
            });
        }
    }
    Ok(out)
}

fn ghz_label(h: Herald) -> &'static str {
    match h {
        Herald::Zero => "GHZ_0",
        Herald::MinusOne => "GHZ_pi",
    }
}

/// Relative fidelity change from switching on the quadrupole term.
pub fn quadrupole_deviations(
    gates: &[(GateTarget, Setup)],
    ghz: Option<(&Setup, i32)>,
    conv: FidelityConvention,
    integ: &Integration,
) -> Result<Vec<Deviation>> {
    let mut out = Vec::new();
    for (target, setup) in gates {
        let (off_model, t) = gate_model(*target, &setup.clone().with_quadrupole(false), integ)?;
        let (on_model, _) = gate_model(*target, &setup.clone().with_quadrupole(true), integ)?;
        let v = synchronous_gate(target.sync_kind(), Subspace::Yz).rotation_target();
        let step = integ.step_for(off_model.params());
        let f = |m: &RotatingFrameModel| -> Result<f64> {
            let u = propagate_unitary(m, 0.0, t, &PropagationOptions::new(step))?
                .snapshots
                .pop()
                .expect("final propagator");
            Ok(relative_from_sums(
                &FidelitySums::of(&(v.adjoint() * u)),
                &v,
                conv,
            )?)
        };
        let (f_ref, f_noise) = (f(&off_model)?, f(&on_model)?);
        out.push(Deviation {
            target: target.label().into(),
            source: "quadrupole".into(),
            gamma_inv_us: None,
            time: t,
            f_ref,
            f_noise,
            deviation: relative_deviation(f_ref, f_noise)?,
            truncation: None,
        });
    }
    if let Some((setup, m)) = ghz {
        let (t, f_ref) = ghz_at_reference(&setup.clone().with_quadrupole(false), m, None, integ)?;
        let (_, f_noise) = ghz_at_reference(&setup.clone().with_quadrupole(true), m, None, integ)?;
        for h in Herald::BOTH {
            let i = h.index();
            out.push(Deviation {
                target: ghz_label(h).into(),
                source: "quadrupole".into(),
                gamma_inv_us: None,
                time: t,
                f_ref: f_ref[i],
                f_noise: f_noise[i],
                deviation: relative_deviation(f_ref[i], f_noise[i])?,
                truncation: None,
            });
        }
    }
    Ok(out)
}

/// One cell of an `N × p` sweep; `None` marks a failed cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub revolutions: u32,
    pub harmonic: u32,
    pub field_mt: Option<f64>,
    pub max_fidelity: Option<f64>,
    pub optimal_time: Option<f64>,
    pub reference_time: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub gate: SweepGate,
    pub revolutions: Vec<u32>,
    pub harmonics: Vec<u32>,
    /// Row-major over `revolutions × harmonics`.
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn cell(&self, revolutions: u32, harmonic: u32) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.revolutions == revolutions && c.harmonic == harmonic)
    }
}

/// Maximum relative fidelity for every `(N, p)` at `B = b_op(φ, N)`; cells run in parallel.
pub fn run_sweep(
    gate: SweepGate,
    revolutions: &[u32],
    harmonics: &[u32],
    physics: &PhysicsConfig,
    phi: f64,
    conv: FidelityConvention,
    integ: &Integration,
) -> SweepResult {
    let coords: Vec<(u32, u32)> = revolutions
        .iter()
        .flat_map(|&n| harmonics.iter().map(move |&p| (n, p)))
        .collect();
    let target = match gate {
        SweepGate::X => GateTarget::X,
        SweepGate::Hadamard => GateTarget::Hadamard,
    };
    let cells = coords
        .par_iter()
        .map(|&(n, p)| {
            let mut setup = Setup::new(n, p, phi);
            setup.physics = physics.clone();
            let run = simulate_gate(target, &setup, integ).and_then(|r| Ok((r.maximum(conv)?, r)));
            match run {
                Ok((m, r)) => SweepCell {
                    revolutions: n,
                    harmonic: p,
                    field_mt: Some(r.field_mt),
                    max_fidelity: Some(m.value),
                    optimal_time: Some(m.time),
                    reference_time: Some(r.reference_time),
                    error: None,
                },
                Err(e) => SweepCell {
                    revolutions: n,
                    harmonic: p,
                    field_mt: setup.field().ok(),
                    max_fidelity: None,
                    optimal_time: None,
                    reference_time: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    SweepResult {
        gate,
        revolutions: revolutions.to_vec(),
        harmonics: harmonics.to_vec(),
        cells,
    }
}

/// Row of the constants table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsRow {
    pub revolutions: u32,
    pub field_mt: f64,
    pub params: DerivedParams,
    pub resolution: f64,
}

pub fn constants_table(
    physics: &PhysicsConfig,
    phi: f64,
    revolutions: &[u32],
) -> Result<Vec<ConstantsRow>> {
    revolutions
        .iter()
        .map(|&n| {
            let b = b_op(phi, n, &physics.constants, &physics.hyperfine)?;
            let p = derive_params(&physics.constants, &physics.hyperfine, b)?;
            Ok(ConstantsRow {
                revolutions: n,
                field_mt: b,
                resolution: p.resolution(),
                params: p,
            })
        })
        .collect()
}

/// Everything a scenario produced, before serialization.
#[derive(Debug, Clone)]
pub enum ScenarioData {
    Constants(Vec<ConstantsRow>),
    Gates(Vec<GateRun>),
    Ghz(Vec<GhzRun>),
    Deviations(Vec<Deviation>),
    Sweep(SweepResult),
}

impl ScenarioData {
    /// `false` when any run reported a convergence failure.
    pub fn converged(&self) -> bool {
        match self {
            ScenarioData::Gates(r) => r.iter().all(|g| g.converged),
            ScenarioData::Ghz(r) => r.iter().all(|g| g.converged),
            _ => true,
        }
    }
}

/// Runs a resolved config. `jobs` bounds the worker threads.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioData> {
    let jobs = cfg.output.jobs.unwrap_or(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| config_err("output.jobs", e.to_string()))?;
    pool.install(|| run_resolved(cfg))
}

fn setups(cfg: &ScenarioConfig) -> Vec<Setup> {
    let fields = cfg.control.field_mt.clone();
    cfg.revolutions()
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let mut s = Setup::new(n, cfg.harmonic(), cfg.phi());
            s.physics = cfg.physics.clone();
            s.field_mt = fields.as_ref().map(|f| f[i]);
            s
        })
        .collect()
}

fn run_resolved(cfg: &ScenarioConfig) -> Result<ScenarioData> {
    let integ = cfg.integration();
    let conv = cfg.output.convention.unwrap_or_default();
    match cfg.kind {
        ScenarioKind::Constants => Ok(ScenarioData::Constants(constants_table(
            &cfg.physics,
            cfg.phi(),
            cfg.revolutions(),
        )?)),
        ScenarioKind::GateX | ScenarioKind::Hadamard => {
            let target = if cfg.kind == ScenarioKind::GateX {
                GateTarget::X
            } else {
                GateTarget::Hadamard
            };
            let runs: Result<Vec<GateRun>> = setups(cfg)
                .par_iter()
                .map(|s| simulate_gate(target, s, &integ))
                .collect();
            Ok(ScenarioData::Gates(runs?))
        }
        ScenarioKind::GateZ => {
            let fields = cfg.control.field_mt.clone().unwrap_or_default();
            let runs: Result<Vec<GateRun>> = fields
                .par_iter()
                .map(|&b| {
                    let mut s = Setup::new(1, 1, cfg.phi()).with_field(b);
                    s.physics = cfg.physics.clone();
                    simulate_gate(GateTarget::Z, &s, &integ)
                })
                .collect();
            Ok(ScenarioData::Gates(runs?))
        }
        ScenarioKind::Ghz => {
            let m = cfg.control.polarization.unwrap_or(1);
            let runs: Result<Vec<GhzRun>> = setups(cfg)
                .par_iter()
                .map(|s| simulate_ghz(s, m, &integ))
                .collect();
            Ok(ScenarioData::Ghz(runs?))
        }
        ScenarioKind::Dephasing => {
            let base = setups(cfg).remove(0);
            let m = cfg.control.polarization.unwrap_or(1);
            let gammas = cfg.noise.gamma_inv_us.clone().unwrap_or_default();
            let z_field = cfg.noise.z_field_mt.unwrap_or(500.0);
            let x = base.clone();
            let mut h = base.clone();
            h.phi = PI / 4.0;
            if cfg.control.field_mt.is_none() {
                h.field_mt = None;
            }
            let mut z = Setup::new(1, 1, PI).with_field(z_field);
            z.physics = cfg.physics.clone();
            let gates = [
                (GateTarget::X, x.clone()),
                (GateTarget::Z, z),
                (GateTarget::Hadamard, h),
            ];
            let parts: Vec<Result<Vec<Deviation>>> = (0..gates.len() + 2)
                .into_par_iter()
                .map(|i| match i {
                    i if i < gates.len() => {
                        gate_dephasing(gates[i].0, &gates[i].1, &gammas, conv, &integ)
                    }
                    3 => ghz_dephasing(&x, m, &gammas, &integ),
                    _ => quadrupole_deviations(&gates, Some((&x, m)), conv, &integ),
                })
                .collect();
            let mut out = Vec::new();
            for p in parts {
                out.extend(p?);
            }
            Ok(ScenarioData::Deviations(out))
        }
        ScenarioKind::Sweep => Ok(ScenarioData::Sweep(run_sweep(
            cfg.sweep.gate.unwrap_or(SweepGate::X),
            cfg.sweep.revolutions.as_deref().unwrap_or(&[]),
            cfg.sweep.harmonics.as_deref().unwrap_or(&[]),
            &cfg.physics,
            cfg.phi(),
            conv,
            &integ,
        ))),
    }
}
