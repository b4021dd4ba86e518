//! Physical constants, hyperfine data and the Hamiltonians of the electron
//! qubit coupled to three spin-1 nuclei.
//!
//! Configuration values are given in units of 2π×MHz. Everything returned by
//! [`derive_params`] and the Hamiltonian builders is in rad/ns.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{c, identity, kron, kron_all, ComplexMatrix, FULL_DIM, NUCLEAR_DIM};

/// rad/ns per 2π×MHz.
pub const RAD_PER_NS_PER_MHZ: f64 = 2.0 * PI * 1e-3;

pub fn from_mhz(x: f64) -> f64 {
    x * RAD_PER_NS_PER_MHZ
}

pub fn to_mhz(x: f64) -> f64 {
    x / RAD_PER_NS_PER_MHZ
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("magnetic field must be non-negative, got {0} mT")]
    NegativeField(f64),
    #[error("rotation angle must be non-zero")]
    ZeroAngle,
    #[error("revolution count must be at least 1")]
    ZeroRevolutions,
    #[error("invalid constants: {0}")]
    InvalidConstants(String),
    #[error("invalid hyperfine tensor for nucleus {nucleus}: {reason}")]
    InvalidHyperfine { nucleus: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];
}

/// Constants in 2π×MHz (and 2π×MHz/mT for the gyromagnetic ratios).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalConstants {
    pub zero_field_splitting: f64,
    pub gamma_e: f64,
    pub gamma_n: f64,
    pub quadrupole: [f64; 3],
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            zero_field_splitting: 3471.0,
            gamma_e: 28.025,
            gamma_n: 3.077e-3,
            quadrupole: [0.383; 3],
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<(), ModelError> {
        let all = [self.zero_field_splitting, self.gamma_e, self.gamma_n];
        if all
            .iter()
            .chain(self.quadrupole.iter())
            .any(|x| !x.is_finite())
        {
            return Err(ModelError::InvalidConstants("non-finite value".into()));
        }
        if self.zero_field_splitting <= 0.0 {
            return Err(ModelError::InvalidConstants(
                "zero_field_splitting must be positive".into(),
            ));
        }
        if !(self.gamma_e > self.gamma_n && self.gamma_n > 0.0) {
            return Err(ModelError::InvalidConstants(
                "require gamma_e > gamma_n > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Three symmetric 3×3 hyperfine tensors in 2π×MHz, block form `A⊥ ⊕ [Azz]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HyperfineSet {
    pub tensors: [[[f64; 3]; 3]; 3],
}

impl Default for HyperfineSet {
    fn default() -> Self {
        Self {
            tensors: [
                [
                    [79.406, 18.391, 0.0],
                    [18.391, 58.170, 0.0],
                    [0.0, 0.0, 48.159],
                ],
                [[46.944, 0.0, 0.0], [0.0, 90.025, 0.0], [0.0, 0.0, 48.158]],
                [
                    [79.406, -18.391, 0.0],
                    [-18.391, 58.170, 0.0],
                    [0.0, 0.0, 48.159],
                ],
            ],
        }
    }
}

impl HyperfineSet {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (k, a) in self.tensors.iter().enumerate() {
            let bad = |reason: &str| ModelError::InvalidHyperfine {
                nucleus: k,
                reason: reason.into(),
            };
            if a.iter().flatten().any(|x| !x.is_finite()) {
                return Err(bad("non-finite entry"));
            }
            for i in 0..3 {
                for j in 0..3 {
                    if (a[i][j] - a[j][i]).abs() > 1e-12 {
                        return Err(bad("tensor is not symmetric"));
                    }
                }
            }
            if a[0][2] != 0.0 || a[1][2] != 0.0 {
                return Err(bad("xz and yz entries must vanish"));
            }
        }
        let zz: Vec<f64> = self.tensors.iter().map(|a| a[2][2]).collect();
        let spread = zz.iter().cloned().fold(f64::MIN, f64::max)
            - zz.iter().cloned().fold(f64::MAX, f64::min);
        if spread > 0.01 {
            return Err(ModelError::InvalidHyperfine {
                nucleus: 0,
                reason: format!("zz couplings differ by {spread:.4} (limit 0.01)"),
            });
        }
        Ok(())
    }
}

/// Frequencies derived at a given field, all in rad/ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedParams {
    pub field_mt: f64,
    pub omega_0: f64,
    pub omega_k: [f64; 3],
    /// `ω0 − ωk`.
    pub delta_k: [f64; 3],
    /// `ω0 + ωk`.
    pub sigma_k: [f64; 3],
    /// Mean of `delta_k`; carries a sign.
    pub delta: f64,
    pub sigma: f64,
    pub a_z: f64,
    pub a_perp: f64,
    /// `Azz/2` per nucleus.
    pub a_zz_half_k: [f64; 3],
    /// `(Axx + Ayy)/(2√2)`.
    pub a_perp_k: [f64; 3],
    /// `(Axx − Ayy)/(2√2)`.
    pub b_perp_k: [f64; 3],
    /// Off-diagonal in-plane coupling coefficient `Axy/(2√2)`.
    pub a_xy_k: [f64; 3],
}

impl DerivedParams {
    /// Largest rotating or counter-rotating frequency magnitude.
    pub fn max_frequency(&self) -> f64 {
        self.delta_k
            .iter()
            .chain(self.sigma_k.iter())
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Rotation-angle increment per CPMG period, `4a⊥/|Δ|`.
    pub fn resolution(&self) -> f64 {
        4.0 * self.a_perp / self.delta.abs()
    }
}

pub fn derive_params(
    consts: &PhysicalConstants,
    hyperfine: &HyperfineSet,
    field_mt: f64,
) -> Result<DerivedParams, ModelError> {
    if !(field_mt >= 0.0) {
        return Err(ModelError::NegativeField(field_mt));
    }
    let omega_0 = from_mhz(consts.zero_field_splitting - consts.gamma_e * field_mt);
    let mut p = DerivedParams {
        field_mt,
        omega_0,
        omega_k: [0.0; 3],
        delta_k: [0.0; 3],
        sigma_k: [0.0; 3],
        delta: 0.0,
        sigma: 0.0,
        a_z: 0.0,
        a_perp: 0.0,
        a_zz_half_k: [0.0; 3],
        a_perp_k: [0.0; 3],
        b_perp_k: [0.0; 3],
        a_xy_k: [0.0; 3],
    };
    for (k, a) in hyperfine.tensors.iter().enumerate() {
        let omega_k = from_mhz(consts.gamma_n * field_mt + a[2][2] / 2.0);
        p.omega_k[k] = omega_k;
        p.delta_k[k] = omega_0 - omega_k;
        p.sigma_k[k] = omega_0 + omega_k;
        p.a_zz_half_k[k] = from_mhz(a[2][2] / 2.0);
        p.a_perp_k[k] = from_mhz((a[0][0] + a[1][1]) / (2.0 * SQRT_2));
        p.b_perp_k[k] = from_mhz((a[0][0] - a[1][1]) / (2.0 * SQRT_2));
        p.a_xy_k[k] = from_mhz(a[0][1] / (2.0 * SQRT_2));
    }
    p.delta = p.delta_k.iter().sum::<f64>() / 3.0;
    p.sigma = p.sigma_k.iter().sum::<f64>() / 3.0;
    p.a_z = from_mhz(hyperfine.tensors.iter().map(|a| a[2][2]).sum::<f64>() / 6.0);
    p.a_perp = from_mhz(
        hyperfine
            .tensors
            .iter()
            .map(|a| a[0][0] + a[1][1])
            .sum::<f64>()
            / (6.0 * SQRT_2),
    );
    Ok(p)
}

/// Field (mT) at which `N` CPMG revolutions accumulate the rotation angle `phi`.
pub fn b_op(
    phi: f64,
    revolutions: u32,
    consts: &PhysicalConstants,
    hyperfine: &HyperfineSet,
) -> Result<f64, ModelError> {
    if phi == 0.0 || !phi.is_finite() {
        return Err(ModelError::ZeroAngle);
    }
    if revolutions == 0 {
        return Err(ModelError::ZeroRevolutions);
    }
    let a_z = hyperfine.tensors.iter().map(|a| a[2][2]).sum::<f64>() / 6.0;
    let a_perp = hyperfine
        .tensors
        .iter()
        .map(|a| a[0][0] + a[1][1])
        .sum::<f64>()
        / (6.0 * SQRT_2);
    Ok(
        (4.0 * revolutions as f64 * a_perp / phi + consts.zero_field_splitting + a_z)
            / (consts.gamma_e - consts.gamma_n),
    )
}

// ---------------------------------------------------------------------------
// operators

/// Electron Pauli matrix on `{|0⟩, |−1⟩}`.
pub fn pauli(axis: Axis) -> ComplexMatrix {
    let z = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    match axis {
        Axis::X => ComplexMatrix::from_row_slice(2, 2, &[z, one, one, z]),
        Axis::Y => ComplexMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        Axis::Z => ComplexMatrix::from_row_slice(2, 2, &[one, z, z, -one]),
    }
}

/// Spin-1 operator in the `|+1⟩, |0⟩, |−1⟩` basis.
pub fn spin1(axis: Axis) -> ComplexMatrix {
    let z = c(0.0, 0.0);
    let r = c(1.0 / SQRT_2, 0.0);
    let i = c(0.0, 1.0 / SQRT_2);
    match axis {
        Axis::X => ComplexMatrix::from_row_slice(3, 3, &[z, r, z, r, z, r, z, r, z]),
        Axis::Y => ComplexMatrix::from_row_slice(3, 3, &[z, -i, z, i, z, -i, z, i, z]),
        Axis::Z => {
            ComplexMatrix::from_row_slice(3, 3, &[c(1.0, 0.0), z, z, z, z, z, z, z, c(-1.0, 0.0)])
        }
    }
}

/// Single-nucleus operator placed on nucleus `k` of the 27-dimensional register.
pub fn nuclear_operator(k: usize, op: &ComplexMatrix) -> ComplexMatrix {
    assert!(k < 3, "nucleus index {k} out of range");
    let id = identity(3);
    let mut factors = [&id, &id, &id];
    factors[k] = op;
    kron_all(&factors)
}

pub fn embed_electron(op: &ComplexMatrix) -> ComplexMatrix {
    kron(op, &identity(NUCLEAR_DIM))
}

pub fn embed_nucleus(k: usize, op: &ComplexMatrix) -> ComplexMatrix {
    kron(&identity(2), &nuclear_operator(k, op))
}

/// `e_op ⊗ op_k` on the full space.
pub fn embed(e_op: &ComplexMatrix, k: usize, op: &ComplexMatrix) -> ComplexMatrix {
    kron(e_op, &nuclear_operator(k, op))
}

/// `Σ_k I_k^axis` on the nuclear register.
pub fn collective_spin(axis: Axis) -> ComplexMatrix {
    let s = spin1(axis);
    (0..3).fold(ComplexMatrix::zeros(NUCLEAR_DIM, NUCLEAR_DIM), |acc, k| {
        acc + nuclear_operator(k, &s)
    })
}

/// Magnetic quantum number of each spin-1 basis index.
pub const SPIN1_M: [i32; 3] = [1, 0, -1];

/// Splits the 54 basis states by the parity of (electron index + Σ m_k).
///
/// Every coupling in the model flips the electron together with a single
/// Δm = ±1 nuclear step, so all Hamiltonians here are block diagonal in this
/// partition.
pub fn parity_sectors() -> [Vec<usize>; 2] {
    let mut even = Vec::with_capacity(FULL_DIM / 2);
    let mut odd = Vec::with_capacity(FULL_DIM / 2);
    for idx in 0..FULL_DIM {
        let e = idx / NUCLEAR_DIM;
        let n = idx % NUCLEAR_DIM;
        let digits = [n / 9, (n / 3) % 3, n % 3];
        let m_sum: i32 = digits.iter().map(|&d| SPIN1_M[d].abs()).sum();
        if (e as i32 + m_sum) % 2 == 0 {
            even.push(idx);
        } else {
            odd.push(idx);
        }
    }
    [even, odd]
}

// ---------------------------------------------------------------------------
// Hamiltonians

/// `−(ω0/2)σz − Σ_k (ωk − (Azz/2)σz) Izk + (1/√2) Σ_k σ⊥·A⊥k·I⊥k`.
pub fn lab_hamiltonian(
    consts: &PhysicalConstants,
    hyperfine: &HyperfineSet,
    field_mt: f64,
) -> Result<ComplexMatrix, ModelError> {
    let p = derive_params(consts, hyperfine, field_mt)?;
    let sz = pauli(Axis::Z);
    let mut h = embed_electron(&sz) * C64::from(-p.omega_0 / 2.0);
    for (k, a) in hyperfine.tensors.iter().enumerate() {
        let iz = spin1(Axis::Z);
        h -= embed_nucleus(k, &iz) * C64::from(p.omega_k[k]);
        h += embed(&sz, k, &iz) * C64::from(p.a_zz_half_k[k]);
        let perp = [Axis::X, Axis::Y];
        for (i, &ea) in perp.iter().enumerate() {
            for (j, &na) in perp.iter().enumerate() {
                let coupling = from_mhz(a[i][j]) / SQRT_2;
                if coupling != 0.0 {
                    h += embed(&pauli(ea), k, &spin1(na)) * C64::from(coupling);
                }
            }
        }
    }
    Ok(h)
}

/// `Σ_k Q_k (I_k^z)²` on the full space.
pub fn quadrupole_term(consts: &PhysicalConstants) -> ComplexMatrix {
    let iz = spin1(Axis::Z);
    let iz2 = &iz * &iz;
    (0..3).fold(ComplexMatrix::zeros(FULL_DIM, FULL_DIM), |acc, k| {
        acc + embed_nucleus(k, &iz2) * C64::from(from_mhz(consts.quadrupole[k]))
    })
}

/// Which pieces of the rotating-frame Hamiltonian to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianPart {
    /// Secular σz·Iz term plus the cos(Δt) flip-flop terms.
    Effective,
    /// sin(Δt) flip-flop terms.
    RotatingOdd,
    /// Terms oscillating at the sum frequencies.
    CounterRotating,
    All,
}

/// Coefficients of the effective part: averaged over nuclei, or per nucleus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    Averaged,
    PerNucleus,
}

/// Instantaneous filter signs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterValues {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl FilterValues {
    pub const FREE: FilterValues = FilterValues {
        x: 1.0,
        y: 1.0,
        z: 1.0,
    };
}

/// Operator slots per nucleus: σzIz, σxIx, σyIy, σxIy, σyIx.
pub const TERM_OPERATORS: [(Axis, Axis); 5] = [
    (Axis::Z, Axis::Z),
    (Axis::X, Axis::X),
    (Axis::Y, Axis::Y),
    (Axis::X, Axis::Y),
    (Axis::Y, Axis::X),
];

/// Coefficients multiplying [`TERM_OPERATORS`] for each nucleus.
pub fn rotating_coefficients(
    t: f64,
    p: &DerivedParams,
    f: FilterValues,
    part: HamiltonianPart,
    coupling: Coupling,
) -> [[f64; 5]; 3] {
    windowed_coefficients(t, 0.0, p, f, part, coupling)
}

/// `(sin ωt, cos ωt)` averaged over `[t − w/2, t + w/2]`.
fn windowed_sin_cos(omega: f64, t: f64, w: f64) -> (f64, f64) {
    let x = 0.5 * omega * w;
    let sinc = if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    };
    let (s, c) = (omega * t).sin_cos();
    (s * sinc, c * sinc)
}

/// `(1/w²)∫ u·(sin, cos)(ω(t + u)) du` over `u ∈ [−w/2, w/2]`.
fn moment_sin_cos(omega: f64, t: f64, w: f64) -> (f64, f64) {
    let a = 0.5 * w;
    let x = omega * a;
    // ∫ u sin(ωu) du over [−a, a]
    let j = if x.abs() < 1e-3 {
        2.0 * omega * a.powi(3) * (1.0 / 3.0 - x * x / 30.0)
    } else {
        2.0 * (x.sin() / (omega * omega) - a * x.cos() / omega)
    };
    let (s, c) = (omega * t).sin_cos();
    (c * j / (w * w), -s * j / (w * w))
}

/// Coefficients averaged over the window `[t − w/2, t + w/2]` at fixed filter signs.
///
/// `w = 0` reproduces [`rotating_coefficients`].
pub fn windowed_coefficients(
    t: f64,
    w: f64,
    p: &DerivedParams,
    f: FilterValues,
    part: HamiltonianPart,
    coupling: Coupling,
) -> [[f64; 5]; 3] {
    coefficients_with(p, f, part, coupling, 1.0, |omega| {
        windowed_sin_cos(omega, t, w)
    })
}

/// Normalized first moment `(1/w²)∫(s − t)·c(s) ds` of the coefficients over the window.
pub fn moment_coefficients(
    t: f64,
    w: f64,
    p: &DerivedParams,
    f: FilterValues,
    part: HamiltonianPart,
    coupling: Coupling,
) -> [[f64; 5]; 3] {
    coefficients_with(p, f, part, coupling, 0.0, |omega| {
        moment_sin_cos(omega, t, w)
    })
}

fn coefficients_with(
    p: &DerivedParams,
    f: FilterValues,
    part: HamiltonianPart,
    coupling: Coupling,
    static_weight: f64,
    trig: impl Fn(f64) -> (f64, f64),
) -> [[f64; 5]; 3] {
    let mut out = [[0.0; 5]; 3];
    let eff = matches!(part, HamiltonianPart::Effective | HamiltonianPart::All);
    let odd = matches!(part, HamiltonianPart::RotatingOdd | HamiltonianPart::All);
    let crw = matches!(
        part,
        HamiltonianPart::CounterRotating | HamiltonianPart::All
    );
    let averaged = coupling == Coupling::Averaged && part == HamiltonianPart::Effective;
    for k in 0..3 {
        let o = &mut out[k];
        if eff {
            if averaged {
                let cd = trig(p.delta).1;
                o[0] += static_weight * f.z * p.a_z;
                o[1] += f.x * p.a_perp * cd;
                o[2] += f.y * p.a_perp * cd;
            } else {
                let cd = trig(p.delta_k[k]).1;
                o[0] += static_weight * f.z * p.a_zz_half_k[k];
                o[1] += f.x * p.a_perp_k[k] * cd;
                o[2] += f.y * p.a_perp_k[k] * cd;
            }
        }
        if odd {
            let sd = trig(p.delta_k[k]).0;
            o[3] -= f.x * p.a_perp_k[k] * sd;
            o[4] += f.y * p.a_perp_k[k] * sd;
        }
        if crw {
            let (ss, cs) = trig(p.sigma_k[k]);
            let (b, axy) = (p.b_perp_k[k], p.a_xy_k[k]);
            o[1] += f.x * (b * cs - axy * ss);
            o[2] += f.y * (-b * cs + axy * ss);
            o[3] += f.x * (b * ss + axy * cs);
            o[4] += f.y * (b * ss + axy * cs);
        }
    }
    out
}

/// Embedded operators for [`TERM_OPERATORS`], indexed `[k][slot]`.
pub fn term_operators() -> Vec<[ComplexMatrix; 5]> {
    (0..3)
        .map(|k| TERM_OPERATORS.map(|(ea, na)| embed(&pauli(ea), k, &spin1(na))))
        .collect()
}

/// Rotating-frame Hamiltonian at time `t` for the given filter signs.
pub fn rotating_hamiltonian(
    t: f64,
    p: &DerivedParams,
    f: FilterValues,
    part: HamiltonianPart,
    coupling: Coupling,
) -> ComplexMatrix {
    let coeffs = rotating_coefficients(t, p, f, part, coupling);
    let ops = term_operators();
    let mut h = ComplexMatrix::zeros(FULL_DIM, FULL_DIM);
    for k in 0..3 {
        for s in 0..5 {
            if coeffs[k][s] != 0.0 {
                h += &ops[k][s] * C64::from(coeffs[k][s]);
            }
        }
    }
    h
}
