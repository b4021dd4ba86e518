//! Ideal target operators, the spin-1 qubit-subspace algebra and the
//! protocol compositions built from the entangling rotations.
//!
//! Single-nucleus basis order is `|+1⟩, |0⟩, |−1⟩`; electron order is `|0⟩, |−1⟩`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{
    c, identity, inner_product, kron, kron_all, kron_vec, outer, projector, trace, ComplexMatrix,
    DensityMatrix, StateVector, FULL_DIM, NUCLEAR_DIM,
};
use crate::spin::{pauli, Axis};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GateError {
    #[error("amplitudes must satisfy |α|²+|β|² = 1, got {0}")]
    NotNormalized(f64),
    #[error("m_I must be +1 or −1, got {0}")]
    BadPolarization(i32),
    #[error("electron must be in |0⟩; |−1⟩ weight is {0:e}")]
    ElectronNotInZero(f64),
    #[error("state has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

pub type Result<T> = std::result::Result<T, GateError>;

fn ket3(v: [f64; 3]) -> StateVector {
    StateVector::from_iterator(3, v.iter().map(|&x| c(x, 0.0)))
}

/// Spin-1 ket `|m⟩` for `m ∈ {+1, 0, −1}`.
pub fn ket_m(m: i32) -> StateVector {
    match m {
        1 => ket3([1.0, 0.0, 0.0]),
        0 => ket3([0.0, 1.0, 0.0]),
        -1 => ket3([0.0, 0.0, 1.0]),
        _ => panic!("spin-1 projection must be in {{-1, 0, 1}}"),
    }
}

/// Cartesian ket `|α⟩`, annihilated by `I_α`.
pub fn ket_axis(axis: Axis) -> StateVector {
    let s = FRAC_1_SQRT_2;
    match axis {
        Axis::X => ket3([s, 0.0, -s]),
        Axis::Y => ket3([s, 0.0, s]),
        Axis::Z => ket3([0.0, 1.0, 0.0]),
    }
}

/// `P^α = |α⟩⟨α|`.
pub fn proj_axis(axis: Axis) -> ComplexMatrix {
    projector(&ket_axis(axis))
}

/// Two-level subspace of a spin-1 nucleus spanned by two Cartesian kets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subspace {
    Yz,
    Zx,
    Xy,
}

impl Subspace {
    pub const ALL: [Subspace; 3] = [Subspace::Yz, Subspace::Zx, Subspace::Xy];

    /// `(α, β, γ)`: the spanning axes and the axis whose spin operator flips within the subspace.
    pub fn axes(self) -> (Axis, Axis, Axis) {
        match self {
            Subspace::Yz => (Axis::Y, Axis::Z, Axis::X),
            Subspace::Zx => (Axis::Z, Axis::X, Axis::Y),
            Subspace::Xy => (Axis::X, Axis::Y, Axis::Z),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Subspace::Yz => "yz",
            Subspace::Zx => "zx",
            Subspace::Xy => "xy",
        }
    }

    /// `P^{αβ}`.
    pub fn projector(self) -> ComplexMatrix {
        let (a, b, _) = self.axes();
        proj_axis(a) + proj_axis(b)
    }

    /// `X^{αβ} = |α⟩⟨β| + |β⟩⟨α|`.
    pub fn flip_x(self) -> ComplexMatrix {
        let (a, b, _) = self.axes();
        let (ka, kb) = (ket_axis(a), ket_axis(b));
        outer(&ka, &kb) + outer(&kb, &ka)
    }

    /// `Y^{αβ} = −i|α⟩⟨β| + i|β⟩⟨α|`.
    pub fn flip_y(self) -> ComplexMatrix {
        let (a, b, _) = self.axes();
        let (ka, kb) = (ket_axis(a), ket_axis(b));
        outer(&ka, &kb) * c(0.0, -1.0) + outer(&kb, &ka) * c(0.0, 1.0)
    }

    /// `Z^{αβ} = P^α − P^β`.
    pub fn flip_z(self) -> ComplexMatrix {
        let (a, b, _) = self.axes();
        proj_axis(a) - proj_axis(b)
    }

    /// Collective projector `P_{αβ}` on the 27-dim register.
    pub fn collective_projector(self) -> ComplexMatrix {
        synchronous(&self.projector())
    }
}

/// `A ⊗ A ⊗ A`.
pub fn synchronous(op: &ComplexMatrix) -> ComplexMatrix {
    kron_all(&[op, op, op])
}

/// Collective `X_yz`.
pub fn x_yz() -> ComplexMatrix {
    synchronous(&Subspace::Yz.flip_x())
}

/// Collective `Z_yz`.
pub fn z_yz() -> ComplexMatrix {
    synchronous(&Subspace::Yz.flip_z())
}

/// Collective Hadamard-type gate `2^{−3/2} ∏_k (P^{yz}_k + i X^{yz}_k)`.
pub fn hadamard_yz() -> ComplexMatrix {
    let s = Subspace::Yz;
    let single = (s.projector() + s.flip_x() * c(0.0, 1.0)) * c(FRAC_1_SQRT_2, 0.0);
    synchronous(&single)
}

/// Collective rotation `∏_k (cos φ P^{yz}_k + i sin φ X^{yz}_k)`.
pub fn rotation_yz(phi: f64) -> ComplexMatrix {
    let s = Subspace::Yz;
    let single = s.projector() * c(phi.cos(), 0.0) + s.flip_x() * c(0.0, phi.sin());
    synchronous(&single)
}

/// Closed form of `exp(−iφ I_α)` as a projector decomposition.
pub fn euler_form(axis: Axis, phi: f64) -> ComplexMatrix {
    let (sub, flip) = match axis {
        Axis::X => (Subspace::Yz, Subspace::Yz.flip_x()),
        Axis::Y => (Subspace::Zx, Subspace::Zx.flip_y() * c(-1.0, 0.0)),
        Axis::Z => (Subspace::Xy, Subspace::Xy.flip_x()),
    };
    // `flip` equals `I_α` on the subspace and squares to its projector.
    proj_axis(axis) + sub.projector() * c(phi.cos(), 0.0) - flip * c(0.0, phi.sin())
}

/// Electron eigenkets of `σ_α` with eigenvalue `+1` and `−1`.
pub fn electron_eigenkets(axis: Axis) -> [StateVector; 2] {
    let s = FRAC_1_SQRT_2;
    let v = |a: C64, b: C64| StateVector::from_vec(vec![a, b]);
    match axis {
        Axis::X => [v(c(s, 0.0), c(s, 0.0)), v(c(s, 0.0), c(-s, 0.0))],
        Axis::Y => [v(c(s, 0.0), c(0.0, s)), v(c(s, 0.0), c(0.0, -s))],
        Axis::Z => [v(c(1.0, 0.0), c(0.0, 0.0)), v(c(0.0, 0.0), c(1.0, 0.0))],
    }
}

/// `exp(−iφ σ_α ⊗ Σ_k I^α_k)` in conditional product form.
pub fn entangling_gate(axis: Axis, phi: f64) -> ComplexMatrix {
    let [plus, minus] = electron_eigenkets(axis);
    let branch = |ket: &StateVector, s: f64| {
        let r = euler_form(axis, s * phi);
        kron(&projector(ket), &synchronous(&r))
    };
    branch(&plus, 1.0) + branch(&minus, -1.0)
}

/// `min_θ ‖A − e^{iθ}B‖_F`.
pub fn distance_up_to_phase(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let na = inner_product(a, a).re;
    let nb = inner_product(b, b).re;
    (na + nb - 2.0 * inner_product(a, b).norm()).max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "phi", rename_all = "lowercase")]
pub enum SynchronousKind {
    X,
    Z,
    H,
    R(f64),
}

/// Ideal synchronous gate and the entangling rotation that realizes it.
#[derive(Debug, Clone)]
pub struct SyncGate {
    pub label: String,
    /// Target on the full space, already multiplied by the domain projector.
    pub target: ComplexMatrix,
    pub domain: ComplexMatrix,
    /// Perfect electron gate applied after the rotation.
    pub electron_correction: ComplexMatrix,
    pub rotation_axis: Axis,
    pub rotation_angle: f64,
}

impl SyncGate {
    /// Operator the bare entangling rotation must match on the domain.
    pub fn rotation_target(&self) -> ComplexMatrix {
        kron(&self.electron_correction.adjoint(), &identity(NUCLEAR_DIM)) * &self.target
    }

    /// Ideal rotation restricted to the domain.
    pub fn ideal_rotation(&self) -> ComplexMatrix {
        entangling_gate(self.rotation_axis, self.rotation_angle) * &self.domain
    }
}

/// Synchronous gate `kind` on collective subspace `sub`, with its protocol recipe.
///
/// X uses `U_γ(π/2)` on `1 ⊗ P_αβ`; Z uses `−U_β(π)`; H and R(φ) use `U_γ(φ)` on the
/// `σ_γ = −1` electron branch, with `φ = π/4` for H.
pub fn synchronous_gate(kind: SynchronousKind, sub: Subspace) -> SyncGate {
    let (_, beta, gamma) = sub.axes();
    let p = sub.collective_projector();
    let e1 = identity(2);
    let (label, axis, angle, e_domain, correction) = match kind {
        SynchronousKind::X => (
            "X",
            gamma,
            PI / 2.0,
            e1.clone(),
            pauli(gamma) * c(0.0, -1.0),
        ),
        SynchronousKind::Z => ("Z", beta, PI, e1.clone(), e1 * c(-1.0, 0.0)),
        SynchronousKind::H => {
            let minus = projector(&electron_eigenkets(gamma)[1]);
            ("H", gamma, PI / 4.0, minus, identity(2))
        }
        SynchronousKind::R(phi) => {
            let minus = projector(&electron_eigenkets(gamma)[1]);
            ("R", gamma, phi, minus, identity(2))
        }
    };
    let domain = kron(&e_domain, &p);
    let raw = entangling_gate(axis, angle) * &domain;
    let target = kron(&correction, &identity(NUCLEAR_DIM)) * raw;
    SyncGate {
        label: format!("{label}_{}", sub.label()),
        target,
        domain,
        electron_correction: correction,
        rotation_axis: axis,
        rotation_angle: angle,
    }
}

/// Electron measurement outcome in the `{|0⟩, |−1⟩}` basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Herald {
    Zero,
    MinusOne,
}

impl Herald {
    pub const BOTH: [Herald; 2] = [Herald::Zero, Herald::MinusOne];

    pub fn index(self) -> usize {
        match self {
            Herald::Zero => 0,
            Herald::MinusOne => 1,
        }
    }

    /// GHZ phase heralded by this outcome.
    pub fn ghz_phase(self) -> f64 {
        match self {
            Herald::Zero => 0.0,
            Herald::MinusOne => PI,
        }
    }
}

/// One heralded branch: sub-normalized nuclear state and its probability.
#[derive(Debug, Clone)]
pub struct GhzOutcome {
    pub herald: Herald,
    pub nuclear: DensityMatrix,
    pub probability: f64,
    pub phase: f64,
}

impl GhzOutcome {
    pub fn normalized_state(&self) -> Option<DensityMatrix> {
        (self.probability > 0.0).then(|| {
            DensityMatrix::from_matrix_unchecked(self.nuclear.matrix() / c(self.probability, 0.0))
        })
    }
}

/// Sub-normalized nuclear block of a 54-dim density matrix for one herald.
pub fn herald_block(rho: &ComplexMatrix, herald: Herald) -> ComplexMatrix {
    let o = herald.index() * NUCLEAR_DIM;
    rho.view((o, o), (NUCLEAR_DIM, NUCLEAR_DIM)).into_owned()
}

/// Nuclear amplitudes of a 54-dim pure state for one herald.
pub fn herald_amplitudes(psi: &StateVector, herald: Herald) -> StateVector {
    psi.rows(herald.index() * NUCLEAR_DIM, NUCLEAR_DIM)
        .into_owned()
}

/// Both heralded branches of a 54-dim density matrix.
pub fn herald_outcomes(rho: &ComplexMatrix) -> [GhzOutcome; 2] {
    Herald::BOTH.map(|h| {
        let block = herald_block(rho, h);
        GhzOutcome {
            herald: h,
            probability: trace(&block).re,
            nuclear: DensityMatrix::from_matrix_unchecked(block),
            phase: h.ghz_phase(),
        }
    })
}

fn check_polarization(m: i32) -> Result<f64> {
    match m {
        1 | -1 => Ok(m as f64),
        _ => Err(GateError::BadPolarization(m)),
    }
}

/// `|0̄⟩ = (m|x⟩ − i|z⟩)/√2` and `|1̄⟩ = (m|x⟩ + i|z⟩)/√2`.
pub fn logical_kets(m: i32) -> Result<[StateVector; 2]> {
    let m = check_polarization(m)?;
    let (x, z) = (ket_axis(Axis::X), ket_axis(Axis::Z));
    let zero = (&x * c(m, 0.0) + &z * c(0.0, -1.0)) * c(FRAC_1_SQRT_2, 0.0);
    let one = (&x * c(m, 0.0) + &z * c(0.0, 1.0)) * c(FRAC_1_SQRT_2, 0.0);
    Ok([zero, one])
}

fn triple(k: &StateVector) -> StateVector {
    kron_vec(&kron_vec(k, k), k)
}

/// `α|0̄0̄0̄⟩ + β|1̄1̄1̄⟩`.
pub fn collective_state(alpha: C64, beta: C64, m: i32) -> Result<StateVector> {
    let [zero, one] = logical_kets(m)?;
    Ok(triple(&zero) * alpha + triple(&one) * beta)
}

/// `(|0̄0̄0̄⟩ + e^{iν}|1̄1̄1̄⟩)/√2`.
pub fn ghz_state(nu: f64, m: i32) -> Result<StateVector> {
    collective_state(c(FRAC_1_SQRT_2, 0.0), C64::from_polar(FRAC_1_SQRT_2, nu), m)
}

/// Initial state `|0⟩ ⊗ |m⟩^⊗3`.
pub fn ghz_initial_state(m: i32) -> Result<StateVector> {
    check_polarization(m)?;
    let e0 = electron_eigenkets(Axis::Z)[0].clone();
    Ok(kron_vec(&e0, &triple(&ket_m(m))))
}

/// Source of the `U_x(π/2)` propagator used by a protocol.
#[derive(Debug, Clone, Copy)]
pub enum UnitarySource<'a> {
    Ideal,
    Simulated(&'a ComplexMatrix),
}

impl UnitarySource<'_> {
    fn matrix(&self) -> ComplexMatrix {
        match self {
            UnitarySource::Ideal => entangling_gate(Axis::X, PI / 2.0),
            UnitarySource::Simulated(u) => (*u).clone(),
        }
    }
}

/// Applies `U_x(π/2)` to `|0⟩⊗|m⟩^⊗3` and splits on the electron outcome.
pub fn ghz_protocol(m: i32, source: UnitarySource<'_>) -> Result<[GhzOutcome; 2]> {
    let psi = source.matrix() * ghz_initial_state(m)?;
    Ok(herald_outcomes(&projector(&psi)))
}

/// `U_y(π/2)` applied to `|−⟩ ⊗ ψ`; maps `|GHZ⟩_π` onto `|GHZ⟩_0` up to an electron factor.
pub fn ghz_phase_correction(nuclear: &StateVector) -> StateVector {
    let minus = electron_eigenkets(Axis::X)[1].clone();
    entangling_gate(Axis::Y, PI / 2.0) * kron_vec(&minus, nuclear)
}

/// Applies `U_z(π/2)`, moving a zx-subspace GHZ state with the electron in `|0⟩` to the yz subspace.
pub fn ghz_transfer_to_yz(state: &StateVector) -> Result<StateVector> {
    if state.len() != FULL_DIM {
        return Err(GateError::DimensionMismatch {
            expected: FULL_DIM,
            found: state.len(),
        });
    }
    let leak = herald_amplitudes(state, Herald::MinusOne).norm_squared();
    if leak > 1e-12 {
        return Err(GateError::ElectronNotInZero(leak));
    }
    Ok(entangling_gate(Axis::Z, PI / 2.0) * state)
}

/// Heralded nuclear state and probability produced by the write map.
#[derive(Debug, Clone)]
pub struct WriteOutcome {
    pub herald: Herald,
    pub probability: f64,
    /// Normalized nuclear state.
    pub state: StateVector,
}

/// Writes `(α, β)` from the electron state `α|+⟩ + β|−⟩` onto the collective qubit.
pub fn collective_write(
    alpha: C64,
    beta: C64,
    m: i32,
    source: UnitarySource<'_>,
) -> Result<[WriteOutcome; 2]> {
    let norm = alpha.norm_sqr() + beta.norm_sqr();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(GateError::NotNormalized(norm));
    }
    let [plus, minus] = electron_eigenkets(Axis::X);
    let electron = plus * alpha + minus * beta;
    let nuclear = triple(&ket_m(m));
    check_polarization(m)?;
    let psi = source.matrix() * kron_vec(&electron, &nuclear);
    Ok(Herald::BOTH.map(|h| {
        let amp = herald_amplitudes(&psi, h);
        let p = amp.norm_squared();
        let state = if p > 0.0 { amp / c(p.sqrt(), 0.0) } else { amp };
        WriteOutcome {
            herald: h,
            probability: p,
            state,
        }
    }))
}

/// Result of the read map with its measured departure from a product state.
#[derive(Debug, Clone)]
pub struct ReadOutcome {
    /// Dominant electron factor of the output state.
    pub electron: StateVector,
    /// Claimed electron state `α̃|0⟩ − i m β̃|−1⟩`.
    pub claimed: StateVector,
    /// `1 − s₁²` for the largest Schmidt coefficient `s₁`.
    pub factorization_error: f64,
    /// `|⟨claimed|electron⟩|²`.
    pub overlap: f64,
    /// Purity of the reduced electron state.
    pub purity: f64,
}

/// Largest tolerated factorization error before a read is reported as failed.
pub const READ_FACTORIZATION_TOL: f64 = 1e-6;

impl ReadOutcome {
    pub fn factorizes(&self) -> bool {
        self.factorization_error <= READ_FACTORIZATION_TOL
    }
}

/// Applies `U_z(π/12) U_x(π/2)` to `|0⟩ ⊗ (α|0̄0̄0̄⟩ + β|1̄1̄1̄⟩)` and measures the product structure.
pub fn collective_read(alpha: C64, beta: C64, m: i32) -> Result<ReadOutcome> {
    let norm = alpha.norm_sqr() + beta.norm_sqr();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(GateError::NotNormalized(norm));
    }
    let e0 = electron_eigenkets(Axis::Z)[0].clone();
    let input = kron_vec(&e0, &collective_state(alpha, beta, m)?);
    let out = entangling_gate(Axis::Z, PI / 12.0) * entangling_gate(Axis::X, PI / 2.0) * input;
    let amp = ComplexMatrix::from_fn(2, NUCLEAR_DIM, |e, n| out[e * NUCLEAR_DIM + n]);
    let rho_e = &amp * amp.adjoint();
    let svd = amp.svd(true, false);
    let (k, s1) = svd
        .singular_values
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |acc, (i, s)| if s > acc.1 { (i, s) } else { acc });
    let electron = svd
        .u
        .expect("left vectors requested")
        .column(k)
        .into_owned();
    let (at, bt) = (
        (alpha + beta) * FRAC_1_SQRT_2,
        (alpha - beta) * FRAC_1_SQRT_2,
    );
    let claimed = StateVector::from_vec(vec![at, bt * c(0.0, -(m as f64))]);
    let claimed = &claimed / c(claimed.norm().max(f64::MIN_POSITIVE), 0.0);
    Ok(ReadOutcome {
        overlap: claimed.dotc(&electron).norm_sqr(),
        factorization_error: (1.0 - s1 * s1).max(0.0),
        purity: trace(&(&rho_e * &rho_e)).re,
        electron,
        claimed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{
        expm_generator, frobenius_distance, hermitian_eigen, partial_trace_leading,
        unitarity_defect,
    };
    use crate::spin::{collective_spin, embed_electron, spin1};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-12;

    fn close(a: &ComplexMatrix, b: &ComplexMatrix) -> bool {
        frobenius_distance(a, b) < TOL
    }

    #[test]
    fn basis_relations() {
        let kets = [Axis::X, Axis::Y, Axis::Z].map(ket_axis);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((kets[i].dotc(&kets[j]) - c(want, 0.0)).norm() < TOL);
            }
        }
        assert!(close(&spin1(Axis::X), &Subspace::Yz.flip_x()));
        assert!(close(
            &spin1(Axis::Y),
            &(Subspace::Zx.flip_y() * c(-1.0, 0.0))
        ));
        assert!(close(&spin1(Axis::Z), &Subspace::Xy.flip_x()));
        for a in Axis::ALL {
            assert!((spin1(a) * ket_axis(a)).norm() < TOL);
        }
        assert!(close(
            &(proj_axis(Axis::X) + Subspace::Yz.projector()),
            &identity(3)
        ));
    }

    #[test]
    fn euler_forms_match_exponentials() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for axis in Axis::ALL {
            for _ in 0..20 {
                let phi = rng.gen_range(-PI..PI);
                let want = expm_generator(&spin1(axis), phi).unwrap();
                assert!(close(&euler_form(axis, phi), &want), "{axis:?} {phi}");
                let k = ket_axis(axis);
                assert!((k.dotc(&(euler_form(axis, phi) * &k)) - c(1.0, 0.0)).norm() < TOL);
            }
        }
        let x = euler_form(Axis::X, PI / 2.0);
        assert!(close(
            &x,
            &(proj_axis(Axis::X) - Subspace::Yz.flip_x() * c(0.0, 1.0))
        ));
        let z = euler_form(Axis::Z, PI);
        assert!(close(&z, &(proj_axis(Axis::Z) - Subspace::Xy.projector())));
    }

    #[test]
    fn entangling_gate_matches_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for axis in Axis::ALL {
            let gen = kron(&pauli(axis), &collective_spin(axis));
            for _ in 0..20 {
                let phi = rng.gen_range(-PI..PI);
                let u = entangling_gate(axis, phi);
                assert!(unitarity_defect(&u) < TOL);
                assert!(frobenius_distance(&u, &expm_generator(&gen, phi).unwrap()) < 1e-11);
            }
            assert!(close(&entangling_gate(axis, 0.0), &identity(FULL_DIM)));
        }
    }

    #[test]
    fn pauli_identities_on_yz() {
        let p = kron(&identity(2), &Subspace::Yz.collective_projector());
        let ux = entangling_gate(Axis::X, PI / 2.0) * &p;
        let want_x = kron(&(pauli(Axis::X) * c(0.0, 1.0)), &x_yz());
        assert!(close(&ux, &want_x));
        let uz = entangling_gate(Axis::Z, PI) * &p;
        assert!(close(&uz, &(kron(&identity(2), &z_yz()) * c(-1.0, 0.0))));
        assert!(close(&(z_yz() * x_yz()), &(x_yz() * z_yz() * c(-1.0, 0.0))));
        let minus = projector(&electron_eigenkets(Axis::X)[1]);
        let d = kron(&minus, &Subspace::Yz.collective_projector());
        let uh = entangling_gate(Axis::X, PI / 4.0) * &d;
        assert!(close(&uh, &kron(&minus, &hadamard_yz())));
    }

    #[test]
    fn hadamard_and_rotation_algebra() {
        let pyz = Subspace::Yz.collective_projector();
        let h = hadamard_yz();
        // Unitary on the subspace, squares to X_yz up to a phase.
        assert!(close(&(h.adjoint() * &h), &pyz));
        assert!(close(&(&h * &h), &(x_yz() * c(0.0, -1.0))));
        assert!(close(&h, &(rotation_yz(PI / 4.0))));
        // R(π/2) = (i X)^⊗3 on the subspace.
        assert!(close(&rotation_yz(PI / 2.0), &(x_yz() * c(0.0, -1.0))));
        assert!(distance_up_to_phase(&rotation_yz(PI / 2.0), &x_yz()) < TOL);
    }

    #[test]
    fn synchronous_gate_targets() {
        let one = identity(2);
        let x = synchronous_gate(SynchronousKind::X, Subspace::Yz);
        assert!(close(&x.target, &kron(&one, &x_yz())));
        assert!(close(
            &x.rotation_target(),
            &(kron(&pauli(Axis::X), &x_yz()) * c(0.0, 1.0))
        ));
        assert!(close(&x.rotation_target(), &x.ideal_rotation()));
        let z = synchronous_gate(SynchronousKind::Z, Subspace::Yz);
        assert!(close(&z.target, &kron(&one, &z_yz())));
        let h = synchronous_gate(SynchronousKind::H, Subspace::Yz);
        let minus = projector(&electron_eigenkets(Axis::X)[1]);
        assert!(close(&h.target, &kron(&minus, &hadamard_yz())));
        let r = synchronous_gate(SynchronousKind::R(0.3), Subspace::Yz);
        assert!(close(&r.target, &kron(&minus, &rotation_yz(0.3))));
        for sub in Subspace::ALL {
            for kind in [
                SynchronousKind::X,
                SynchronousKind::Z,
                SynchronousKind::H,
                SynchronousKind::R(0.7),
            ] {
                let g = synchronous_gate(kind, sub);
                let p = kron(&one, &sub.collective_projector());
                let comp = identity(FULL_DIM) - &p;
                // Block diagonal with respect to the collective projector.
                assert!(
                    frobenius_distance(&(&comp * &g.target), &ComplexMatrix::zeros(54, 54)) < TOL
                );
                assert!(close(&(&g.target * &g.domain), &g.target));
            }
            let xs = synchronous_gate(SynchronousKind::X, sub).target;
            let zs = synchronous_gate(SynchronousKind::Z, sub).target;
            assert!(close(&(&zs * &xs), &(&xs * &zs * c(-1.0, 0.0))), "{sub:?}");
        }
    }

    #[test]
    fn ideal_ghz_protocol() {
        for m in [1, -1] {
            let out = ghz_protocol(m, UnitarySource::Ideal).unwrap();
            let total: f64 = out.iter().map(|o| o.probability).sum();
            assert!((total - 1.0).abs() < 1e-10);
            for o in &out {
                assert!((o.probability - 0.5).abs() < 1e-12);
                let target = ghz_state(o.phase, m).unwrap();
                let rho = o.normalized_state().unwrap();
                let f = target.dotc(&(rho.matrix() * &target)).re;
                assert!((f - 1.0).abs() < TOL);
            }
        }
        assert!(ghz_protocol(0, UnitarySource::Ideal).is_err());
    }

    #[test]
    fn logical_kets_are_rotated_polarizations() {
        for m in [1, -1] {
            let [zero, one] = logical_kets(m).unwrap();
            let km = ket_m(m);
            assert!((euler_form(Axis::X, PI / 2.0) * &km - &zero).norm() < TOL);
            assert!((euler_form(Axis::X, -PI / 2.0) * &km - &one).norm() < TOL);
            let diff = projector(&zero) - projector(&one);
            assert!(close(&diff, &(Subspace::Zx.flip_y() * c(m as f64, 0.0))));
        }
    }

    #[test]
    fn ghz_reduced_states_are_maximally_mixed() {
        for nu in [0.0, PI] {
            let psi = ghz_state(nu, 1).unwrap();
            let rho = projector(&psi);
            // Trace out nuclei 2 and 3 (trailing factors) by permuting through the leading trace.
            let mut single = ComplexMatrix::zeros(3, 3);
            for a in 0..3 {
                for b in 0..3 {
                    let mut s = c(0.0, 0.0);
                    for r in 0..9 {
                        s += rho[(a * 9 + r, b * 9 + r)];
                    }
                    single[(a, b)] = s;
                }
            }
            let (vals, _) = hermitian_eigen(&single);
            let mut nonzero: Vec<f64> = vals.into_iter().filter(|v| v.abs() > 1e-9).collect();
            nonzero.sort_by(f64::total_cmp);
            assert_eq!(nonzero.len(), 2);
            for v in nonzero {
                assert!((v - 0.5).abs() < TOL);
            }
            let traced = partial_trace_leading(&rho, 3).unwrap();
            assert!((trace(&traced).re - 1.0).abs() < TOL);
        }
    }

    #[test]
    fn phase_correction_maps_pi_to_zero() {
        let ghz_pi = ghz_state(PI, 1).unwrap();
        let out = ghz_phase_correction(&ghz_pi);
        let minus = electron_eigenkets(Axis::X)[1].clone();
        let e = pauli(Axis::Y) * minus * c(0.0, -1.0);
        let want = kron_vec(&e, &ghz_state(0.0, 1).unwrap());
        assert!((out - want).norm() < TOL);
    }

    #[test]
    fn transfer_to_yz() {
        let e0 = electron_eigenkets(Axis::Z)[0].clone();
        let u_block = synchronous(&(proj_axis(Axis::Z) - Subspace::Xy.flip_x() * c(0.0, 1.0)));
        let uz = entangling_gate(Axis::Z, PI / 2.0);
        assert!(close(&uz.view((0, 0), (27, 27)).into_owned(), &u_block));
        for nu in [0.0, PI] {
            let ghz = ghz_state(nu, 1).unwrap();
            let out = ghz_transfer_to_yz(&kron_vec(&e0, &ghz)).unwrap();
            // |x⟩ → −i|y⟩ on every nucleus.
            let y = ket_axis(Axis::Y) * c(0.0, -1.0);
            let z = ket_axis(Axis::Z);
            let zero = (&y + &z * c(0.0, -1.0)) * c(FRAC_1_SQRT_2, 0.0);
            let one = (&y + &z * c(0.0, 1.0)) * c(FRAC_1_SQRT_2, 0.0);
            let want =
                (triple(&zero) + triple(&one) * C64::from_polar(1.0, nu)) * c(FRAC_1_SQRT_2, 0.0);
            assert!((out.clone() - kron_vec(&e0, &want)).norm() < TOL);
            let twice = ghz_transfer_to_yz(&out).unwrap();
            let via_pi = entangling_gate(Axis::Z, PI) * kron_vec(&e0, &ghz);
            assert!((twice - via_pi).norm() < TOL);
        }
        let e1 = electron_eigenkets(Axis::Z)[1].clone();
        assert!(ghz_transfer_to_yz(&kron_vec(&e1, &ghz_state(0.0, 1).unwrap())).is_err());
    }

    #[test]
    fn collective_write_maps() {
        let out = collective_write(c(1.0, 0.0), c(0.0, 0.0), 1, UnitarySource::Ideal).unwrap();
        let [zero, _] = logical_kets(1).unwrap();
        for o in &out {
            assert!(o.state.dotc(&triple(&zero)).norm_sqr() > 1.0 - TOL);
        }
        let s = c(FRAC_1_SQRT_2, 0.0);
        let out = collective_write(s, s, 1, UnitarySource::Ideal).unwrap();
        let ghz = ghz_protocol(1, UnitarySource::Ideal).unwrap();
        for (w, g) in out.iter().zip(&ghz) {
            let rho = g.normalized_state().unwrap();
            let f = w.state.dotc(&(rho.matrix() * &w.state)).re;
            assert!((f - 1.0).abs() < TOL);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let v = crate::linalg::haar_state(2, rng.gen());
            for m in [1, -1] {
                let out = collective_write(v[0], v[1], m, UnitarySource::Ideal).unwrap();
                for (o, sign) in out.iter().zip([1.0, -1.0]) {
                    assert!((o.probability - 0.5).abs() < 1e-12);
                    let want = collective_state(v[0], v[1] * sign, m).unwrap();
                    assert!((o.state.dotc(&want).norm_sqr() - 1.0).abs() < TOL);
                }
            }
        }
        assert!(collective_write(c(1.0, 0.0), c(1.0, 0.0), 1, UnitarySource::Ideal).is_err());
    }

    #[test]
    fn collective_read_reports_factorization() {
        let s = FRAC_1_SQRT_2;
        for (a, b) in [(s, s), (s, -s), (0.6, 0.8)] {
            let r = collective_read(c(a, 0.0), c(b, 0.0), 1).unwrap();
            assert!(r.factorizes(), "{}", r.factorization_error);
            assert!((r.overlap - 1.0).abs() < 1e-10);
            assert!((r.purity - 1.0).abs() < 1e-10);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let v = crate::linalg::haar_state(2, rng.gen());
            for m in [1, -1] {
                let r = collective_read(v[0], v[1], m).unwrap();
                assert!(r.factorizes());
                assert!((r.overlap - 1.0).abs() < 1e-10);
            }
        }
        assert!(collective_read(c(1.0, 0.0), c(1.0, 0.0), 1).is_err());
    }

    #[test]
    fn electron_embedding_consistent() {
        let sz = embed_electron(&pauli(Axis::Z));
        let [p, m] = electron_eigenkets(Axis::Z);
        let want = kron(&(projector(&p) - projector(&m)), &identity(27));
        assert!(close(&sz, &want));
    }
}
