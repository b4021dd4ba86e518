//! Time-ordered propagation under piecewise-smooth Hamiltonians.
//!
//! Unitaries use midpoint-exponential steps; density matrices use RK4 on the
//! dephasing master equation. Steps never straddle a control breakpoint. When
//! a Hamiltonian declares invariant sectors, every exponential is taken block
//! by block.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{
    frobenius_distance, identity, ComplexMatrix, DensityMatrix, LinalgError, FULL_DIM,
};
use crate::pulse::FilterSet;
use crate::spin::{
    moment_coefficients, parity_sectors, quadrupole_term, rotating_coefficients, term_operators,
    windowed_coefficients, Coupling, DerivedParams, HamiltonianPart, PhysicalConstants,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolutionError {
    #[error("step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("interval [{t0}, {t1}] is empty or not finite")]
    InvalidInterval { t0: f64, t1: f64 },
    #[error("snapshot time {0} lies outside the propagation interval")]
    SnapshotOutOfRange(f64),
    #[error("initial state has dimension {found}, Hamiltonian has {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dephasing rate must be non-negative, got {0}")]
    NegativeRate(f64),
    #[error(
        "requested rotation {phi:.6} rad but {revolutions} revolutions give {achieved:.6} rad"
    )]
    ResolutionMismatch {
        phi: f64,
        revolutions: u32,
        achieved: f64,
    },
    #[error("harmonic must be odd, got {0}")]
    EvenHarmonic(u32),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, EvolutionError>;

/// Partition of the basis into subspaces left invariant by a Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct Sectors {
    dim: usize,
    blocks: Vec<Vec<usize>>,
}

impl Sectors {
    pub fn new(dim: usize, blocks: Vec<Vec<usize>>) -> Self {
        let mut seen = vec![false; dim];
        for &i in blocks.iter().flatten() {
            assert!(
                i < dim && !seen[i],
                "sector indices must partition 0..{dim}"
            );
            seen[i] = true;
        }
        assert!(
            seen.iter().all(|&s| s),
            "sector indices must cover 0..{dim}"
        );
        Self { dim, blocks }
    }

    pub fn whole(dim: usize) -> Self {
        Self {
            dim,
            blocks: vec![(0..dim).collect()],
        }
    }

    /// Electron-plus-nuclear parity split of the 54-dimensional space.
    pub fn parity() -> Self {
        let [even, odd] = parity_sectors();
        Self::new(FULL_DIM, vec![even, odd])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block(&self, b: usize) -> &[usize] {
        &self.blocks[b]
    }

    pub fn extract(&self, m: &ComplexMatrix, b: usize) -> ComplexMatrix {
        let idx = &self.blocks[b];
        ComplexMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
    }

    pub fn split(&self, m: &ComplexMatrix) -> Vec<ComplexMatrix> {
        (0..self.len()).map(|b| self.extract(m, b)).collect()
    }

    pub fn assemble(&self, blocks: &[ComplexMatrix]) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.dim, self.dim);
        for (idx, blk) in self.blocks.iter().zip(blocks) {
            for (i, &gi) in idx.iter().enumerate() {
                for (j, &gj) in idx.iter().enumerate() {
                    out[(gi, gj)] = blk[(i, j)];
                }
            }
        }
        out
    }

    /// `diag(blocks) · m`.
    pub fn left_mul(&self, blocks: &[ComplexMatrix], m: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.dim, m.ncols());
        for (idx, blk) in self.blocks.iter().zip(blocks) {
            let rows = m.select_rows(idx.iter());
            let prod = blk * rows;
            for (i, &gi) in idx.iter().enumerate() {
                out.row_mut(gi).copy_from(&prod.row(i));
            }
        }
        out
    }

    /// `m · diag(blocks)`.
    pub fn right_mul(&self, m: &ComplexMatrix, blocks: &[ComplexMatrix]) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(m.nrows(), self.dim);
        for (idx, blk) in self.blocks.iter().zip(blocks) {
            let cols = m.select_columns(idx.iter());
            let prod = cols * blk;
            for (j, &gj) in idx.iter().enumerate() {
                out.column_mut(gj).copy_from(&prod.column(j));
            }
        }
        out
    }

    pub fn identity_blocks(&self) -> Vec<ComplexMatrix> {
        self.blocks.iter().map(|b| identity(b.len())).collect()
    }
}

/// A Hermitian generator `H(t)` with optional piecewise-constant controls.
pub trait TimeDependentHamiltonian: Sync {
    fn dim(&self) -> usize;

    /// `H(t)` with piecewise-constant controls read at `segment_time`, a time
    /// inside the same control segment as the current step.
    fn evaluate(&self, t: f64, segment_time: f64) -> ComplexMatrix;

    /// Control discontinuities inside `(t0, t1)`.
    fn breakpoints(&self, _t0: f64, _t1: f64) -> Vec<f64> {
        Vec::new()
    }

    fn sectors(&self) -> Option<&Sectors> {
        None
    }

    fn evaluate_sector(&self, t: f64, segment_time: f64, b: usize) -> ComplexMatrix {
        let full = self.evaluate(t, segment_time);
        match self.sectors() {
            Some(s) => s.extract(&full, b),
            None => full,
        }
    }

    /// Generator used for the unitary step `[t_mid − h/2, t_mid + h/2]` on sector `b`.
    ///
    /// Defaults to the midpoint value; models with closed-form time dependence may
    /// return the step average instead.
    fn step_generator(&self, t_mid: f64, _h: f64, b: usize) -> ComplexMatrix {
        self.evaluate_sector(t_mid, t_mid, b)
    }
}

/// Wraps a closure `t ↦ H(t)`.
pub struct FnHamiltonian<F> {
    dim: usize,
    f: F,
    breakpoints: Vec<f64>,
}

impl<F: Fn(f64) -> ComplexMatrix + Sync> FnHamiltonian<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self {
            dim,
            f,
            breakpoints: Vec::new(),
        }
    }

    pub fn with_breakpoints(mut self, breakpoints: Vec<f64>) -> Self {
        self.breakpoints = breakpoints;
        self
    }
}

impl<F: Fn(f64) -> ComplexMatrix + Sync> TimeDependentHamiltonian for FnHamiltonian<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, t: f64, _segment_time: f64) -> ComplexMatrix {
        (self.f)(t)
    }

    fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        self.breakpoints
            .iter()
            .copied()
            .filter(|&b| b > t0 && b < t1)
            .collect()
    }
}

/// One sector's nonzero entries of an embedded operator.
#[derive(Debug, Clone, Default)]
struct SparseBlock {
    entries: Vec<(usize, usize, C64)>,
}

impl SparseBlock {
    fn from_dense(m: &ComplexMatrix) -> Self {
        let mut entries = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if m[(i, j)] != C64::new(0.0, 0.0) {
                    entries.push((i, j, m[(i, j)]));
                }
            }
        }
        Self { entries }
    }

    fn add_to(&self, target: &mut ComplexMatrix, scale: f64) {
        for &(i, j, v) in &self.entries {
            target[(i, j)] += v * scale;
        }
    }
}

/// Generator of one unitary step of a [`RotatingFrameModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `H(t_mid)`; second order.
    Midpoint,
    /// Exact step average of `H`; second order.
    Average,
    /// Exact average plus first-moment commutator correction; fourth order.
    #[default]
    Magnus4,
}

/// Rotating-frame Hamiltonian driven by a filter set, with an optional static
/// nuclear quadrupole term.
#[derive(Debug, Clone)]
pub struct RotatingFrameModel {
    params: DerivedParams,
    filters: FilterSet,
    part: HamiltonianPart,
    coupling: Coupling,
    quadrupole: Option<ComplexMatrix>,
    rule: StepRule,
    sectors: Sectors,
    // [k][slot][sector]
    terms: Vec<[Vec<SparseBlock>; 5]>,
    static_blocks: Vec<SparseBlock>,
}

impl RotatingFrameModel {
    pub fn new(params: DerivedParams, filters: FilterSet) -> Self {
        let sectors = Sectors::parity();
        let terms = term_operators()
            .iter()
            .map(|ops| {
                ops.each_ref().map(|op| {
                    (0..sectors.len())
                        .map(|b| SparseBlock::from_dense(&sectors.extract(op, b)))
                        .collect()
                })
            })
            .collect();
        let static_blocks = vec![SparseBlock::default(); sectors.len()];
        Self {
            params,
            filters,
            part: HamiltonianPart::All,
            coupling: Coupling::PerNucleus,
            quadrupole: None,
            rule: StepRule::Magnus4,
            sectors,
            terms,
            static_blocks,
        }
    }

    pub fn with_part(mut self, part: HamiltonianPart, coupling: Coupling) -> Self {
        self.part = part;
        self.coupling = coupling;
        self
    }

    pub fn with_quadrupole(mut self, consts: &PhysicalConstants) -> Self {
        let q = quadrupole_term(consts);
        self.static_blocks = (0..self.sectors.len())
            .map(|b| SparseBlock::from_dense(&self.sectors.extract(&q, b)))
            .collect();
        self.quadrupole = Some(q);
        self
    }

    pub fn with_step_rule(mut self, rule: StepRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn step_rule(&self) -> StepRule {
        self.rule
    }

    fn sector_from_coefficients(
        &self,
        coeffs: &[[f64; 5]; 3],
        b: usize,
        with_static: bool,
    ) -> ComplexMatrix {
        let n = self.sectors.block(b).len();
        let mut h = ComplexMatrix::zeros(n, n);
        for (k, slots) in self.terms.iter().enumerate() {
            for (s, per_sector) in slots.iter().enumerate() {
                if coeffs[k][s] != 0.0 {
                    per_sector[b].add_to(&mut h, coeffs[k][s]);
                }
            }
        }
        if with_static {
            self.static_blocks[b].add_to(&mut h, 1.0);
        }
        h
    }

    pub fn params(&self) -> &DerivedParams {
        &self.params
    }

    pub fn filters(&self) -> &FilterSet {
        &self.filters
    }

    pub fn has_quadrupole(&self) -> bool {
        self.quadrupole.is_some()
    }
}

impl TimeDependentHamiltonian for RotatingFrameModel {
    fn dim(&self) -> usize {
        FULL_DIM
    }

    fn evaluate(&self, t: f64, segment_time: f64) -> ComplexMatrix {
        let blocks: Vec<ComplexMatrix> = (0..self.sectors.len())
            .map(|b| self.evaluate_sector(t, segment_time, b))
            .collect();
        self.sectors.assemble(&blocks)
    }

    fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        self.filters
            .breakpoints()
            .into_iter()
            .filter(|&b| b > t0 && b < t1)
            .collect()
    }

    fn sectors(&self) -> Option<&Sectors> {
        Some(&self.sectors)
    }

    fn evaluate_sector(&self, t: f64, segment_time: f64, b: usize) -> ComplexMatrix {
        let f = self.filters.at(segment_time);
        let coeffs = rotating_coefficients(t, &self.params, f, self.part, self.coupling);
        self.sector_from_coefficients(&coeffs, b, true)
    }

    fn step_generator(&self, t_mid: f64, h: f64, b: usize) -> ComplexMatrix {
        let f = self.filters.at(t_mid);
        let (p, part, coupling) = (&self.params, self.part, self.coupling);
        match self.rule {
            StepRule::Midpoint => self.evaluate_sector(t_mid, t_mid, b),
            StepRule::Average => {
                let c = windowed_coefficients(t_mid, h, p, f, part, coupling);
                self.sector_from_coefficients(&c, b, true)
            }
            StepRule::Magnus4 => {
                let m0 = self.sector_from_coefficients(
                    &windowed_coefficients(t_mid, h, p, f, part, coupling),
                    b,
                    true,
                );
                let m1 = self.sector_from_coefficients(
                    &moment_coefficients(t_mid, h, p, f, part, coupling),
                    b,
                    false,
                );
                let comm = &m1 * &m0 - &m0 * &m1;
                m0 - comm * C64::new(0.0, h)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationOptions {
    pub step: f64,
    /// Times at which to record the state; sorted and deduplicated internally.
    pub snapshots: Vec<f64>,
    /// Maximum accepted Frobenius distance to a half-step rerun; `None` skips the rerun.
    pub tolerance: Option<f64>,
}

impl PropagationOptions {
    pub fn new(step: f64) -> Self {
        Self {
            step,
            snapshots: Vec::new(),
            tolerance: None,
        }
    }

    pub fn with_snapshots(mut self, snapshots: Vec<f64>) -> Self {
        self.snapshots = snapshots;
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = Some(tol);
        self
    }
}

/// Recorded snapshots together with integration metadata.
#[derive(Debug, Clone, Serialize)]
pub struct EvolutionResult<T> {
    pub times: Vec<f64>,
    #[serde(skip)]
    pub snapshots: Vec<T>,
    pub step: f64,
    /// Frobenius distance between full-step and half-step final states.
    pub convergence_estimate: Option<f64>,
    pub converged: bool,
    pub steps_taken: usize,
}

impl<T> EvolutionResult<T> {
    pub fn last(&self) -> Option<&T> {
        self.snapshots.last()
    }
}

/// Default step: 50 points per period of the fastest frame frequency.
pub fn default_step(params: &DerivedParams) -> f64 {
    2.0 * PI / (50.0 * params.max_frequency())
}

#[derive(Debug, Clone, Copy)]
struct Step {
    start: f64,
    h: f64,
    /// Snapshot slot filled after this step.
    snapshot: Option<usize>,
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Steps of length ≤ `step` on `[t0, t1]`, cut at every breakpoint and snapshot.
fn plan_steps(
    t0: f64,
    t1: f64,
    step: f64,
    breakpoints: &[f64],
    snapshots: &[f64],
) -> Result<(Vec<Step>, Vec<f64>, bool)> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(EvolutionError::InvalidStep(step));
    }
    if !(t1 >= t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(EvolutionError::InvalidInterval { t0, t1 });
    }
    let mut snaps: Vec<f64> = snapshots.to_vec();
    snaps.sort_by(f64::total_cmp);
    snaps.dedup_by(|a, b| same_time(*a, *b));
    for &s in &snaps {
        if s < t0 && !same_time(s, t0) || s > t1 && !same_time(s, t1) {
            return Err(EvolutionError::SnapshotOutOfRange(s));
        }
    }
    let initial_snapshot = snaps.first().is_some_and(|&s| same_time(s, t0));

    let mut cuts: Vec<(f64, Option<usize>)> = Vec::new();
    for &b in breakpoints {
        if b > t0 && b < t1 {
            cuts.push((b, None));
        }
    }
    for (i, &s) in snaps.iter().enumerate() {
        if !same_time(s, t0) {
            cuts.push((s.min(t1), Some(i)));
        }
    }
    cuts.push((t1, None));
    cuts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, Option<usize>)> = Vec::with_capacity(cuts.len());
    for (t, snap) in cuts {
        match merged.last_mut() {
            Some(last) if same_time(last.0, t) => {
                if snap.is_some() {
                    last.1 = snap;
                }
            }
            _ => merged.push((t, snap)),
        }
    }

    let mut steps = Vec::new();
    let mut a = t0;
    for (b, snap) in merged {
        let len = b - a;
        if len <= 0.0 {
            if let Some(i) = snap {
                // Zero-length segment at the start: record without stepping.
                steps.push(Step {
                    start: a,
                    h: 0.0,
                    snapshot: Some(i),
                });
            }
            continue;
        }
        let n = ((len / step) - 1e-9).ceil().max(1.0) as usize;
        let h = len / n as f64;
        for i in 0..n {
            steps.push(Step {
                start: a + i as f64 * h,
                h,
                snapshot: if i + 1 == n { snap } else { None },
            });
        }
        a = b;
    }
    Ok((steps, snaps, initial_snapshot))
}

fn phase_scaled(v: &ComplexMatrix, values: &[f64], t: f64) -> ComplexMatrix {
    let mut scaled = v.clone();
    for (j, &lambda) in values.iter().enumerate() {
        let phase = C64::from_polar(1.0, -lambda * t);
        for z in scaled.column_mut(j).iter_mut() {
            *z *= phase;
        }
    }
    scaled
}

/// Information handed to step observers.
pub struct StepView<'a> {
    pub t_mid: f64,
    pub h: f64,
    /// Propagator from `t0` to the step midpoint, one block per sector.
    pub midpoint: &'a [ComplexMatrix],
    pub sectors: &'a Sectors,
}

/// Core midpoint-exponential loop over sector blocks.
fn drive_unitary<H, F>(
    ham: &H,
    t0: f64,
    t1: f64,
    step: f64,
    snapshots: &[f64],
    mut observer: Option<F>,
) -> Result<(Vec<f64>, Vec<ComplexMatrix>, usize)>
where
    H: TimeDependentHamiltonian + ?Sized,
    F: FnMut(&StepView<'_>),
{
    let whole;
    let sectors = match ham.sectors() {
        Some(s) => s,
        None => {
            whole = Sectors::whole(ham.dim());
            &whole
        }
    };
    let breakpoints = ham.breakpoints(t0, t1);
    let (steps, snap_times, initial) = plan_steps(t0, t1, step, &breakpoints, snapshots)?;
    let mut u = sectors.identity_blocks();
    let mut out = Vec::with_capacity(snap_times.len());
    if initial {
        out.push(sectors.assemble(&u));
    }
    let mut taken = 0;
    for st in &steps {
        if st.h > 0.0 {
            let t_mid = st.start + 0.5 * st.h;
            for b in 0..sectors.len() {
                let hb = ham.step_generator(t_mid, st.h, b);
                let eig = nalgebra::SymmetricEigen::new(hb);
                let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
                let v = eig.eigenvectors;
                if observer.is_some() {
                    let half = phase_scaled(&v, &values, 0.5 * st.h) * v.adjoint();
                    u[b] = &half * &u[b];
                    // Second half applied after the observer has seen the midpoint.
                    u.push(half);
                } else {
                    let full = phase_scaled(&v, &values, st.h) * v.adjoint();
                    u[b] = full * &u[b];
                }
            }
            if let Some(obs) = observer.as_mut() {
                let halves: Vec<ComplexMatrix> = u.drain(sectors.len()..).collect();
                obs(&StepView {
                    t_mid,
                    h: st.h,
                    midpoint: &u,
                    sectors,
                });
                for (ub, half) in u.iter_mut().zip(halves) {
                    *ub = half * &*ub;
                }
            }
            taken += 1;
        }
        if st.snapshot.is_some() {
            out.push(sectors.assemble(&u));
        }
    }
    if out.is_empty() || snap_times.is_empty() {
        // Always expose the final propagator.
        if snap_times.is_empty() {
            out.push(sectors.assemble(&u));
            return Ok((vec![t1], out, taken));
        }
    }
    Ok((snap_times, out, taken))
}

/// Composes `U ← exp(−i·H̄·h)·U` from `t0` to `t1`, where `H̄` is the
/// [`TimeDependentHamiltonian::step_generator`] of each step.
///
/// With no snapshots requested, only the final propagator is recorded.
pub fn propagate_unitary<H: TimeDependentHamiltonian + ?Sized>(
    ham: &H,
    t0: f64,
    t1: f64,
    opts: &PropagationOptions,
) -> Result<EvolutionResult<ComplexMatrix>> {
    let (times, snapshots, steps_taken) = drive_unitary(
        ham,
        t0,
        t1,
        opts.step,
        &opts.snapshots,
        None::<fn(&StepView<'_>)>,
    )?;
    let mut result = EvolutionResult {
        times,
        snapshots,
        step: opts.step,
        convergence_estimate: None,
        converged: true,
        steps_taken,
    };
    if let Some(tol) = opts.tolerance {
        let (_, fine, _) =
            drive_unitary(ham, t0, t1, opts.step / 2.0, &[], None::<fn(&StepView<'_>)>)?;
        let coarse_final = final_snapshot(&result, t1);
        let est = frobenius_distance(coarse_final, &fine[0]);
        result.convergence_estimate = Some(est);
        result.converged = est <= tol;
    }
    Ok(result)
}

fn final_snapshot<T>(r: &EvolutionResult<T>, t1: f64) -> &T {
    match r.times.last() {
        Some(&t) if same_time(t, t1) => r.snapshots.last().expect("snapshot present"),
        _ => panic!("final time must be among the snapshots for a convergence check"),
    }
}

/// Like [`propagate_unitary`], additionally handing `U(t_mid)` of every step to `observer`.
pub fn propagate_unitary_observed<H, F>(
    ham: &H,
    t0: f64,
    t1: f64,
    step: f64,
    observer: F,
) -> Result<ComplexMatrix>
where
    H: TimeDependentHamiltonian + ?Sized,
    F: FnMut(&StepView<'_>),
{
    let (_, mut out, _) = drive_unitary(ham, t0, t1, step, &[], Some(observer))?;
    Ok(out.pop().expect("final propagator"))
}

/// Electron dephasing signs `diag(σz ⊗ 1)`.
pub fn dephasing_signs(dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| if i < dim / 2 { 1.0 } else { -1.0 })
        .collect()
}

fn lindblad_rhs(
    h: &[ComplexMatrix],
    sectors: &Sectors,
    rho: &ComplexMatrix,
    gamma: f64,
    signs: &[f64],
) -> ComplexMatrix {
    let hr = sectors.left_mul(h, rho);
    let rh = sectors.right_mul(rho, h);
    let mut d = (hr - rh) * C64::new(0.0, -1.0);
    if gamma > 0.0 {
        let n = rho.nrows();
        for j in 0..n {
            for i in 0..n {
                let factor = signs[i] * signs[j] - 1.0;
                if factor != 0.0 {
                    d[(i, j)] += rho[(i, j)] * (gamma * factor);
                }
            }
        }
    }
    d
}

fn drive_lindblad<H: TimeDependentHamiltonian + ?Sized>(
    ham: &H,
    gamma_per_ns: f64,
    rho0: &ComplexMatrix,
    t0: f64,
    t1: f64,
    step: f64,
    snapshots: &[f64],
) -> Result<(Vec<f64>, Vec<ComplexMatrix>, usize)> {
    let whole;
    let sectors = match ham.sectors() {
        Some(s) => s,
        None => {
            whole = Sectors::whole(ham.dim());
            &whole
        }
    };
    let signs = dephasing_signs(ham.dim());
    let breakpoints = ham.breakpoints(t0, t1);
    let (steps, snap_times, initial) = plan_steps(t0, t1, step, &breakpoints, snapshots)?;
    let eval = |t: f64, seg: f64| -> Vec<ComplexMatrix> {
        (0..sectors.len())
            .map(|b| ham.evaluate_sector(t, seg, b))
            .collect()
    };
    let mut rho = rho0.clone();
    let mut out = Vec::new();
    if initial {
        out.push(rho.clone());
    }
    let mut taken = 0;
    for st in &steps {
        if st.h > 0.0 {
            let h = st.h;
            let seg = st.start + 0.5 * h;
            let h0 = eval(st.start, seg);
            let hm = eval(seg, seg);
            let h1 = eval(st.start + h, seg);
            let k1 = lindblad_rhs(&h0, sectors, &rho, gamma_per_ns, &signs);
            let k2 = lindblad_rhs(
                &hm,
                sectors,
                &(&rho + &k1 * C64::from(0.5 * h)),
                gamma_per_ns,
                &signs,
            );
            let k3 = lindblad_rhs(
                &hm,
                sectors,
                &(&rho + &k2 * C64::from(0.5 * h)),
                gamma_per_ns,
                &signs,
            );
            let k4 = lindblad_rhs(
                &h1,
                sectors,
                &(&rho + &k3 * C64::from(h)),
                gamma_per_ns,
                &signs,
            );
            rho += (k1 + k2 * C64::from(2.0) + k3 * C64::from(2.0) + k4) * C64::from(h / 6.0);
            taken += 1;
        }
        if st.snapshot.is_some() {
            out.push(rho.clone());
        }
    }
    if snap_times.is_empty() {
        out.push(rho);
        return Ok((vec![t1], out, taken));
    }
    Ok((snap_times, out, taken))
}

/// RK4 integration of `dρ/dt = −i[H, ρ] + Γ(LρL − ρ)` with `L = σz ⊗ 1`.
///
/// `gamma_per_us` is the pure dephasing rate in 1/μs.
pub fn propagate_lindblad<H: TimeDependentHamiltonian + ?Sized>(
    ham: &H,
    gamma_per_us: f64,
    rho0: &DensityMatrix,
    t0: f64,
    t1: f64,
    opts: &PropagationOptions,
) -> Result<EvolutionResult<DensityMatrix>> {
    if !(gamma_per_us >= 0.0) {
        return Err(EvolutionError::NegativeRate(gamma_per_us));
    }
    if rho0.dim() != ham.dim() {
        return Err(EvolutionError::DimensionMismatch {
            expected: ham.dim(),
            found: rho0.dim(),
        });
    }
    let gamma = gamma_per_us * 1e-3;
    let (times, states, steps_taken) = drive_lindblad(
        ham,
        gamma,
        rho0.matrix(),
        t0,
        t1,
        opts.step,
        &opts.snapshots,
    )?;
    let tr0 = rho0.trace();
    let drift = states
        .iter()
        .map(|r| (crate::linalg::trace(r).re - tr0).abs())
        .fold(0.0, f64::max);
    let mut result = EvolutionResult {
        times,
        snapshots: states
            .into_iter()
            .map(DensityMatrix::from_matrix_unchecked)
            .collect(),
        step: opts.step,
        convergence_estimate: None,
        converged: drift <= TRACE_DRIFT_LIMIT,
        steps_taken,
    };
    if let Some(tol) = opts.tolerance {
        let (_, fine, _) = drive_lindblad(ham, gamma, rho0.matrix(), t0, t1, opts.step / 2.0, &[])?;
        let est = frobenius_distance(final_snapshot(&result, t1).matrix(), &fine[0]);
        result.convergence_estimate = Some(est);
        result.converged &= est <= tol;
    }
    Ok(result)
}

/// Largest accepted trace drift before a Lindblad run is flagged.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-6;

/// Relative mismatch accepted between a requested rotation and `N·δ_Δ`.
pub const RESOLUTION_REL_TOL: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateKind {
    /// `exp(−iφ σz Σ Iz)` by free evolution.
    Z { phi: f64 },
    /// `exp(−iφ σx Σ Ix)` by a CPMG train.
    X {
        phi: f64,
        revolutions: u32,
        harmonic: u32,
    },
}

/// Evolution time of a gate: `|φ|/a_z` for Z, `N·T` for X.
pub fn gate_duration(kind: GateKind, params: &DerivedParams) -> Result<f64> {
    match kind {
        GateKind::Z { phi } => Ok(phi.abs() / params.a_z),
        GateKind::X {
            phi,
            revolutions,
            harmonic,
        } => {
            if harmonic % 2 == 0 {
                return Err(EvolutionError::EvenHarmonic(harmonic));
            }
            let achieved = revolutions as f64 * params.resolution();
            if ((phi.abs() - achieved) / phi.abs()).abs() > RESOLUTION_REL_TOL {
                return Err(EvolutionError::ResolutionMismatch {
                    phi,
                    revolutions,
                    achieved,
                });
            }
            Ok(crate::pulse::cpmg_period(harmonic, params.delta) * revolutions as f64)
        }
    }
}

/// Time at which the CPMG-filtered flip-flop coupling has rotated by `|φ|`.
///
/// The effective rate `2a⊥ sin(pπ/2)/(pπ)` does not depend on the field.
pub fn rotation_time(phi: f64, harmonic: u32, params: &DerivedParams) -> f64 {
    phi.abs() * PI * harmonic as f64 / (2.0 * params.a_perp)
}

/// Signed rotation angle accumulated after time `t` under harmonic `p`.
pub fn effective_rotation(t: f64, harmonic: u32, params: &DerivedParams) -> f64 {
    let p = harmonic as f64;
    2.0 * params.a_perp * t * (p * PI / 2.0).sin() / (PI * p)
}
