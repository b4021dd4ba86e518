//! Dense complex linear algebra on small Hilbert spaces.
//!
//! Everything here works on `nalgebra::DMatrix<C64>`. Dimensions never exceed
//! 54, so no sparse or blocked storage is used at this layer.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

pub type ComplexMatrix = DMatrix<C64>;
pub type StateVector = DVector<C64>;

pub const ELECTRON_DIM: usize = 2;
pub const NUCLEAR_DIM: usize = 27;
pub const FULL_DIM: usize = ELECTRON_DIM * NUCLEAR_DIM;

/// Hermiticity tolerance, scaled by `max(1, ‖h‖_F)`.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalues in `[-PSD_REJECT, 0)` are clamped to zero; below that the input is rejected.
pub const PSD_CLAMP: f64 = 1e-10;
pub const PSD_REJECT: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not Hermitian: anti-Hermitian part has Frobenius norm {residual:.3e}")]
    NotHermitian { residual: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("eigenvalue {value:.3e} is below the PSD tolerance")]
    NegativeEigenvalue { value: f64 },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

pub fn zeros(n: usize) -> ComplexMatrix {
    ComplexMatrix::zeros(n, n)
}

/// Standard Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Left-to-right Kronecker product of a list of factors.
pub fn kron_all(factors: &[&ComplexMatrix]) -> ComplexMatrix {
    let mut iter = factors.iter();
    let first = match iter.next() {
        Some(m) => (*m).clone(),
        None => return identity(1),
    };
    iter.fold(first, |acc, m| acc.kronecker(*m))
}

pub fn kron_vec(a: &StateVector, b: &StateVector) -> StateVector {
    a.kronecker(b)
}

pub fn frobenius(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn frobenius_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Frobenius norm of `(h − h†)/2`.
pub fn anti_hermitian_norm(h: &ComplexMatrix) -> f64 {
    let n = h.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += ((h[(i, j)] - h[(j, i)].conj()) * 0.5).norm_sqr();
        }
    }
    acc.sqrt()
}

/// `‖U†U − I‖_F`.
pub fn unitarity_defect(u: &ComplexMatrix) -> f64 {
    let g = u.adjoint() * u;
    frobenius_distance(&g, &identity(u.ncols()))
}

pub fn trace(m: &ComplexMatrix) -> C64 {
    m.diagonal().iter().sum()
}

/// `Tr(a† b)` without forming the product.
pub fn inner_product(a: &ComplexMatrix, b: &ComplexMatrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn outer(ket: &StateVector, bra: &StateVector) -> ComplexMatrix {
    ket * bra.adjoint()
}

pub fn projector(ket: &StateVector) -> ComplexMatrix {
    outer(ket, ket)
}

fn check_square(m: &ComplexMatrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    Ok(())
}

pub fn check_hermitian(h: &ComplexMatrix) -> Result<()> {
    check_square(h)?;
    let residual = anti_hermitian_norm(h);
    if residual > HERMITIAN_TOL * frobenius(h).max(1.0) {
        return Err(LinalgError::NotHermitian { residual });
    }
    Ok(())
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(h: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let eig = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = ComplexMatrix::from_fn(h.nrows(), order.len(), |i, j| {
        eig.eigenvectors[(i, order[j])]
    });
    (values, vectors)
}

/// `exp(−i·h·t)` for Hermitian `h`, without input validation.
pub(crate) fn exp_hermitian(h: &ComplexMatrix, t: f64) -> ComplexMatrix {
    let eig = SymmetricEigen::new(h.clone());
    let v = eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let phase = C64::from_polar(1.0, -lambda * t);
        for z in scaled.column_mut(j).iter_mut() {
            *z *= phase;
        }
    }
    scaled * v.adjoint()
}

/// `exp(−i·h·t)` through the Hermitian eigendecomposition of `h`.
pub fn expm_generator(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    check_hermitian(h)?;
    Ok(exp_hermitian(h, t))
}

/// Trace over a leading factor of dimension `lead`.
pub fn partial_trace_leading(rho: &ComplexMatrix, lead: usize) -> Result<ComplexMatrix> {
    check_square(rho)?;
    let n = rho.nrows();
    if lead == 0 || n % lead != 0 {
        return Err(LinalgError::DimensionMismatch {
            expected: lead,
            found: n,
        });
    }
    let rest = n / lead;
    Ok(ComplexMatrix::from_fn(rest, rest, |i, j| {
        (0..lead).map(|a| rho[(a * rest + i, a * rest + j)]).sum()
    }))
}

/// Trace over the electron factor of a 54-dimensional operator.
pub fn partial_trace_electron(rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    if rho.nrows() != FULL_DIM || rho.ncols() != FULL_DIM {
        return Err(LinalgError::DimensionMismatch {
            expected: FULL_DIM,
            found: rho.nrows(),
        });
    }
    partial_trace_leading(rho, ELECTRON_DIM)
}

/// Principal square root of a positive semidefinite matrix.
pub fn sqrt_psd(rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_hermitian(rho)?;
    let (values, vectors) = hermitian_eigen(rho);
    let mut scaled = vectors.clone();
    for (j, &lambda) in values.iter().enumerate() {
        if lambda < -PSD_REJECT {
            return Err(LinalgError::NegativeEigenvalue { value: lambda });
        }
        let root = lambda.max(0.0).sqrt();
        for z in scaled.column_mut(j).iter_mut() {
            *z *= root;
        }
    }
    Ok(scaled * vectors.adjoint())
}

pub fn normalize(psi: &StateVector) -> StateVector {
    let n = psi.norm();
    if n == 0.0 {
        psi.clone()
    } else {
        psi / C64::from(n)
    }
}

/// Reproducible stream of Haar-random pure states.
pub struct HaarSampler {
    dim: usize,
    rng: ChaCha8Rng,
}

impl HaarSampler {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn sample(&mut self) -> StateVector {
        let v = StateVector::from_fn(self.dim, |_, _| {
            let re: f64 = StandardNormal.sample(&mut self.rng);
            let im: f64 = StandardNormal.sample(&mut self.rng);
            c(re, im)
        });
        normalize(&v)
    }
}

/// Normalized complex-Gaussian vector, deterministic in `seed`.
pub fn haar_state(dim: usize, seed: u64) -> StateVector {
    HaarSampler::new(dim, seed).sample()
}

/// A Hermitian, positive semidefinite operator with trace at most one.
///
/// Heralded branches are sub-normalized, so the trace is only bounded above.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(ComplexMatrix);

impl DensityMatrix {
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        check_hermitian(&m)?;
        let tr = trace(&m);
        if tr.im.abs() > HERMITIAN_TOL || tr.re < -PSD_CLAMP || tr.re > 1.0 + PSD_CLAMP {
            return Err(LinalgError::InvalidDensity(format!(
                "trace {:.3e}{:+.3e}i outside [0, 1]",
                tr.re, tr.im
            )));
        }
        let (values, _) = hermitian_eigen(&m);
        if let Some(&low) = values.first() {
            if low < -PSD_CLAMP {
                return Err(LinalgError::NegativeEigenvalue { value: low });
            }
        }
        Ok(Self(m))
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        Self(projector(psi))
    }

    /// Wraps a matrix produced by trusted dynamics without re-checking.
    pub fn from_matrix_unchecked(m: ComplexMatrix) -> Self {
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> f64 {
        trace(&self.0).re
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn normalized(&self) -> Result<Self> {
        let tr = self.trace();
        if tr <= 0.0 {
            return Err(LinalgError::InvalidDensity("zero trace".into()));
        }
        Ok(Self(&self.0 / C64::from(tr)))
    }
}
