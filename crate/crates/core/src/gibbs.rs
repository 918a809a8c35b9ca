//! Partition functions, Gibbs states, and the inverse problem of reading any
//! full-rank state as a thermal one.

use std::fmt;

use crate::error::{Error, Result};
use crate::operator::{unitarity_error, CMatrix, DensityOperator, HermitianOperator};

/// Tolerance on `basis† basis = I` for a Hamiltonian eigenbasis.
pub const UNITARY_TOL: f64 = 1e-10;

/// Energies closer than this (relative to the energy scale) to the minimum
/// count as ground levels in the zero-temperature limit.
const GROUND_TOL: f64 = 1e-12;

/// Minimum eigenvalue a state needs for [`fit_thermal`].
pub const FULL_RANK_TOL: f64 = 1e-10;

/// Inverse temperature `β = 1/k_B T`, with zero temperature represented
/// exactly rather than as a large float.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InverseTemperature {
    Finite(f64),
    Infinite,
}

impl InverseTemperature {
    pub fn finite(beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "inverse temperature must be finite and nonnegative, got {beta}"
            )));
        }
        Ok(InverseTemperature::Finite(beta))
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, InverseTemperature::Infinite)
    }

    pub fn value(&self) -> Option<f64> {
        match *self {
            InverseTemperature::Finite(b) => Some(b),
            InverseTemperature::Infinite => None,
        }
    }
}

impl fmt::Display for InverseTemperature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InverseTemperature::Finite(b) => write!(f, "{b}"),
            InverseTemperature::Infinite => write!(f, "inf"),
        }
    }
}

impl std::str::FromStr for InverseTemperature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinite" | "Infinity" => Ok(InverseTemperature::Infinite),
            other => {
                let b: f64 = other.parse().map_err(|_| {
                    Error::InvalidParameter(format!("not an inverse temperature: {other}"))
                })?;
                InverseTemperature::finite(b)
            }
        }
    }
}

/// Hamiltonian in eigen-decomposed form: `Σ_i energies[i] |b_i⟩⟨b_i|` with
/// `|b_i⟩` the columns of `basis`.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianSpec {
    energies: Vec<f64>,
    basis: CMatrix,
}

impl HamiltonianSpec {
    pub fn new(energies: Vec<f64>, basis: CMatrix) -> Result<Self> {
        if basis.nrows() != basis.ncols() {
            return Err(Error::NotSquare {
                rows: basis.nrows(),
                cols: basis.ncols(),
            });
        }
        if energies.len() != basis.ncols() {
            return Err(Error::DimensionMismatch {
                expected: basis.ncols(),
                found: energies.len(),
            });
        }
        if energies.is_empty() {
            return Err(Error::BadDimension {
                dim: 0,
                max: crate::operator::MAX_DIM,
            });
        }
        if energies.iter().any(|e| !e.is_finite()) {
            return Err(Error::NonFinite);
        }
        let err = unitarity_error(&basis);
        if err > UNITARY_TOL {
            return Err(Error::NotUnitary(err));
        }
        Ok(Self { energies, basis })
    }

    /// Hamiltonian diagonal in the computational basis.
    pub fn diagonal(energies: Vec<f64>) -> Result<Self> {
        let d = energies.len();
        Self::new(energies, CMatrix::identity(d, d))
    }

    /// Diagonalizes `h`; energies come out ascending.
    pub fn from_operator(h: &HermitianOperator) -> Result<Self> {
        let s = h.spectrum();
        Self::new(s.values, s.vectors)
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn basis(&self) -> &CMatrix {
        &self.basis
    }

    pub fn operator(&self) -> HermitianOperator {
        HermitianOperator::from_spectral(&self.energies, &self.basis).expect("validated shape")
    }

    /// Same eigenbasis, every energy shifted by `c`.
    pub fn shifted(&self, c: f64) -> HamiltonianSpec {
        HamiltonianSpec {
            energies: self.energies.iter().map(|e| e + c).collect(),
            basis: self.basis.clone(),
        }
    }

    pub fn min_energy(&self) -> f64 {
        self.energies.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Normalized Boltzmann weights `e^{−β E_i} / Z`.
///
/// Energies are measured from their minimum before exponentiating, so the
/// weights are invariant under a uniform shift. At infinite `β` the weight is
/// spread uniformly over the ground levels.
pub fn boltzmann_weights(energies: &[f64], beta: InverseTemperature) -> Vec<f64> {
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = match beta {
        InverseTemperature::Finite(b) => energies.iter().map(|e| (-b * (e - min)).exp()).collect(),
        InverseTemperature::Infinite => {
            let scale = energies.iter().fold(1.0f64, |m, e| m.max(e.abs()));
            energies
                .iter()
                .map(|e| {
                    if e - min <= GROUND_TOL * scale {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        }
    };
    let z: f64 = raw.iter().sum();
    raw.iter().map(|w| w / z).collect()
}

/// `Z = Σ_j e^{−β h_j}`.
pub fn partition_function(h: &HamiltonianSpec, beta: InverseTemperature) -> Result<f64> {
    match beta {
        InverseTemperature::Finite(b) => Ok(h.energies.iter().map(|e| (-b * e).exp()).sum()),
        InverseTemperature::Infinite => Err(Error::InfiniteBeta),
    }
}

/// `γ = e^{−βH}/Z`, diagonal in the Hamiltonian eigenbasis.
pub fn gibbs_state(h: &HamiltonianSpec, beta: InverseTemperature) -> DensityOperator {
    let w = boltzmann_weights(&h.energies, beta);
    DensityOperator::from_numerical(
        HermitianOperator::from_spectral(&w, &h.basis).expect("validated shape"),
    )
    .expect("Boltzmann weights form a distribution")
}

/// Finds a Hamiltonian whose Gibbs state at `β = 1` is `rho`, with the lowest
/// energy fixed at zero: `E_i = ln p_max − ln p_i`.
///
/// Energies are returned ascending, with the eigenbasis of `rho` as basis.
pub fn fit_thermal(rho: &DensityOperator) -> Result<(HamiltonianSpec, InverseTemperature)> {
    let s = rho.operator().spectrum();
    let min = s.values[0];
    if min <= FULL_RANK_TOL {
        return Err(Error::NotFullRank(min));
    }
    let d = rho.dim();
    let p_max = s.values[d - 1];
    // descending populations give ascending energies
    let energies: Vec<f64> = (0..d).rev().map(|k| p_max.ln() - s.values[k].ln()).collect();
    let basis = CMatrix::from_fn(d, d, |r, col| s.vectors[(r, d - 1 - col)]);
    Ok((
        HamiltonianSpec::new(energies, basis)?,
        InverseTemperature::Finite(1.0),
    ))
}
