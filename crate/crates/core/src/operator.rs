//! Dense complex-matrix foundation: Hermitian and density operators, tensor
//! products, partial traces, trace norms and the qubit Bloch representation.
//!
//! Subsystem ordering follows the Kronecker convention: in `a ⊗ b` the first
//! factor is the most significant index.

use nalgebra::{DMatrix, SymmetricEigen, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix used throughout the crate.
pub type CMatrix = DMatrix<Complex64>;

/// Largest supported Hilbert-space dimension.
pub const MAX_DIM: usize = 4096;

/// Trace tolerance for density operators.
pub const TRACE_TOL: f64 = 1e-9;

/// Eigenvalue floor below which an operator is not considered positive.
pub const PSD_FLOOR: f64 = -1e-10;

/// Negative eigenvalues above this value are treated as solver noise and
/// clamped by [`DensityOperator::from_numerical`].
const CLAMP_FLOOR: f64 = -1e-8;

pub(crate) fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Eigen-decomposition of a Hermitian operator, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    /// Columns are the normalized eigenvectors, in the order of `values`.
    pub vectors: CMatrix,
}

/// Complex square matrix equal to its conjugate transpose.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    entries: CMatrix,
}

impl HermitianOperator {
    /// Builds a Hermitian operator from `m`, replacing it by `(m + m†)/2`.
    pub fn new(m: CMatrix) -> Result<Self> {
        let (rows, cols) = m.shape();
        if rows != cols {
            return Err(Error::NotSquare { rows, cols });
        }
        if rows == 0 || rows > MAX_DIM {
            return Err(Error::BadDimension {
                dim: rows,
                max: MAX_DIM,
            });
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        let entries = (&m + m.adjoint()).scale(0.5);
        Ok(Self { entries })
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(CMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(CMatrix::identity(dim, dim))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Result<Self> {
        let d = diag.len();
        Self::new(CMatrix::from_fn(d, d, |r, col| {
            if r == col {
                c(diag[r])
            } else {
                Complex64::ZERO
            }
        }))
    }

    /// `Σ_i values[i] |v_i⟩⟨v_i|` where `|v_i⟩` is column `i` of `vectors`.
    pub fn from_spectral(values: &[f64], vectors: &CMatrix) -> Result<Self> {
        if vectors.ncols() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: values.len(),
                found: vectors.ncols(),
            });
        }
        let scaled = CMatrix::from_fn(vectors.nrows(), vectors.ncols(), |r, col| {
            vectors[(r, col)] * values[col]
        });
        Self::new(&scaled * vectors.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_matrix(self) -> CMatrix {
        self.entries
    }

    /// Real part of the trace (the imaginary part vanishes by Hermiticity).
    pub fn trace(&self) -> f64 {
        self.entries.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn spectrum(&self) -> Spectrum {
        let eig = SymmetricEigen::new(self.entries.clone());
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = CMatrix::from_fn(self.dim(), self.dim(), |r, col| {
            eig.eigenvectors[(r, order[col])]
        });
        Spectrum { values, vectors }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.spectrum().values
    }

    pub fn trace_norm(&self) -> f64 {
        trace_norm(self)
    }

    pub fn kron(&self, other: &HermitianOperator) -> HermitianOperator {
        HermitianOperator {
            entries: self.entries.kronecker(&other.entries),
        }
    }

    pub fn scale(&self, s: f64) -> HermitianOperator {
        HermitianOperator {
            entries: self.entries.scale(s),
        }
    }

    pub fn sub(&self, other: &HermitianOperator) -> Result<HermitianOperator> {
        self.check_same_dim(other)?;
        Ok(HermitianOperator {
            entries: &self.entries - &other.entries,
        })
    }

    pub fn add(&self, other: &HermitianOperator) -> Result<HermitianOperator> {
        self.check_same_dim(other)?;
        Ok(HermitianOperator {
            entries: &self.entries + &other.entries,
        })
    }

    /// Applies `f` to the eigenvalues.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> HermitianOperator {
        let s = self.spectrum();
        let values: Vec<f64> = s.values.iter().map(|&v| f(v)).collect();
        // dimensions already validated
        HermitianOperator::from_spectral(&values, &s.vectors).expect("same shape")
    }

    /// Largest entry of `self − self†`.
    pub fn hermiticity_error(&self) -> f64 {
        (&self.entries - self.entries.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    fn check_same_dim(&self, other: &HermitianOperator) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }
}

/// Unit-trace positive-semidefinite Hermitian operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    op: HermitianOperator,
}

impl DensityOperator {
    pub fn new(op: HermitianOperator) -> Result<Self> {
        let tr = op.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::BadTrace(tr));
        }
        let min = op.eigenvalues()[0];
        if min < PSD_FLOOR {
            return Err(Error::NotPositive(min));
        }
        Ok(Self { op })
    }

    pub fn from_matrix(m: CMatrix) -> Result<Self> {
        Self::new(HermitianOperator::new(m)?)
    }

    /// Accepts the output of a numerical computation: eigenvalues slightly
    /// below zero are clamped and the result renormalized.
    pub fn from_numerical(op: HermitianOperator) -> Result<Self> {
        let s = op.spectrum();
        if s.values[0] >= 0.0 {
            let tr = op.trace();
            if (tr - 1.0).abs() > TRACE_TOL {
                return Err(Error::BadTrace(tr));
            }
            return Ok(Self { op });
        }
        if s.values[0] < CLAMP_FLOOR {
            return Err(Error::NotPositive(s.values[0]));
        }
        let clamped: Vec<f64> = s.values.iter().map(|&v| v.max(0.0)).collect();
        let total: f64 = clamped.iter().sum();
        if (total - 1.0).abs() > TRACE_TOL {
            return Err(Error::BadTrace(total));
        }
        let normalized: Vec<f64> = clamped.iter().map(|v| v / total).collect();
        Self::new(HermitianOperator::from_spectral(&normalized, &s.vectors)?)
    }

    /// `|ψ⟩⟨ψ|` for the normalized `psi`.
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if psi.is_empty() || norm < 1e-15 {
            return Err(Error::InvalidParameter("zero state vector".into()));
        }
        let v = nalgebra::DVector::from_iterator(psi.len(), psi.iter().map(|z| z / norm));
        Self::from_matrix(&v * v.adjoint())
    }

    /// Computational basis projector `|k⟩⟨k|`.
    pub fn basis_state(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::InvalidParameter(format!(
                "basis index {k} out of range for dimension {dim}"
            )));
        }
        let mut diag = vec![0.0; dim];
        diag[k] = 1.0;
        Self::diagonal(&diag)
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        Self::diagonal(&vec![1.0 / dim as f64; dim])
    }

    pub fn diagonal(probs: &[f64]) -> Result<Self> {
        Self::new(HermitianOperator::from_real_diagonal(probs)?)
    }

    /// `Σ_i probs[i] |v_i⟩⟨v_i|` for orthonormal columns `|v_i⟩` of `vectors`.
    pub fn from_spectral(probs: &[f64], vectors: &CMatrix) -> Result<Self> {
        Self::new(HermitianOperator::from_spectral(probs, vectors)?)
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn operator(&self) -> &HermitianOperator {
        &self.op
    }

    pub fn matrix(&self) -> &CMatrix {
        self.op.matrix()
    }

    pub fn into_operator(self) -> HermitianOperator {
        self.op
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.op.eigenvalues()
    }

    /// `‖self − other‖₁`.
    pub fn trace_distance(&self, other: &DensityOperator) -> Result<f64> {
        Ok(trace_norm(&self.op.sub(&other.op)?))
    }
}

/// Kronecker product `a ⊗ b`.
pub fn tensor(a: &DensityOperator, b: &DensityOperator) -> DensityOperator {
    DensityOperator {
        op: a.op.kron(&b.op),
    }
}

/// Kronecker product of all factors, in order.
pub fn tensor_all<'a>(
    factors: impl IntoIterator<Item = &'a DensityOperator>,
) -> Option<DensityOperator> {
    factors
        .into_iter()
        .fold(None, |acc: Option<DensityOperator>, f| match acc {
            None => Some(f.clone()),
            Some(a) => Some(tensor(&a, f)),
        })
}

/// Partial trace of a square matrix over all subsystems not listed in `keep`.
///
/// `keep` holds 0-based subsystem indices; the output keeps them in ascending
/// order regardless of the order given.
pub fn partial_trace_matrix(m: &CMatrix, dims: &[usize], keep: &[usize]) -> Result<CMatrix> {
    let total: usize = dims.iter().product();
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if dims.is_empty() || total != m.nrows() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: total,
        });
    }
    let mut kept = vec![false; dims.len()];
    for &k in keep {
        if k >= dims.len() {
            return Err(Error::InvalidParameter(format!(
                "subsystem {k} out of range for {} subsystems",
                dims.len()
            )));
        }
        kept[k] = true;
    }

    let mut strides = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let offsets = |want: bool| -> Vec<usize> {
        let mut offs = vec![0usize];
        for k in 0..dims.len() {
            if kept[k] != want {
                continue;
            }
            offs = offs
                .iter()
                .flat_map(|&o| {
                    let stride = strides[k];
                    (0..dims[k]).map(move |x| o + x * stride)
                })
                .collect();
        }
        offs
    };
    let keep_offs = offsets(true);
    let trace_offs = offsets(false);

    let n = keep_offs.len();
    Ok(CMatrix::from_fn(n, n, |a, b| {
        trace_offs
            .iter()
            .map(|&t| m[(keep_offs[a] + t, keep_offs[b] + t)])
            .sum()
    }))
}

/// Reduced state on the subsystems in `keep` (0-based).
pub fn partial_trace(
    rho: &DensityOperator,
    dims: &[usize],
    keep: &[usize],
) -> Result<DensityOperator> {
    let reduced = partial_trace_matrix(rho.matrix(), dims, keep)?;
    DensityOperator::from_numerical(HermitianOperator::new(reduced)?)
}

/// Sum of absolute eigenvalues.
pub fn trace_norm(a: &HermitianOperator) -> f64 {
    a.eigenvalues().iter().map(|v| v.abs()).sum()
}

/// Pauli expectations `(tr σx ρ, tr σy ρ, tr σz ρ)` of a qubit state.
///
/// Convention: `σz|0⟩ = +|0⟩`, so `|0⟩⟨0|` sits at the north pole.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub const ORIGIN: BlochVector = BlochVector {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let v = BlochVector { x, y, z };
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(Error::NonFinite);
        }
        if v.norm() > 1.0 + 1e-9 {
            return Err(Error::OutsideBlochBall(v.norm()));
        }
        Ok(v)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Result<Self> {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

pub fn to_bloch(rho: &DensityOperator) -> Result<BlochVector> {
    if rho.dim() != 2 {
        return Err(Error::NotQubit(rho.dim()));
    }
    let m = rho.matrix();
    BlochVector::new(
        2.0 * m[(0, 1)].re,
        -2.0 * m[(0, 1)].im,
        m[(0, 0)].re - m[(1, 1)].re,
    )
}

pub fn from_bloch(v: BlochVector) -> Result<DensityOperator> {
    let v = BlochVector::new(v.x, v.y, v.z)?;
    let m = CMatrix::from_row_slice(
        2,
        2,
        &[
            c((1.0 + v.z) / 2.0),
            Complex64::new(v.x / 2.0, -v.y / 2.0),
            Complex64::new(v.x / 2.0, v.y / 2.0),
            c((1.0 - v.z) / 2.0),
        ],
    );
    DensityOperator::from_matrix(m)
}

/// Largest entry-wise deviation of `u†u` from the identity.
pub fn unitarity_error(u: &CMatrix) -> f64 {
    let gram = u.adjoint() * u;
    let id = CMatrix::identity(gram.nrows(), gram.ncols());
    (gram - id).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Matrix square root of a positive-semidefinite operator.
pub(crate) fn psd_sqrt(a: &HermitianOperator) -> HermitianOperator {
    a.map_spectrum(|v| v.max(0.0).sqrt())
}
