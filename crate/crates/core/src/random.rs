//! Seeded random sampling of states, unitaries and Hamiltonians.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::operator::{CMatrix, DensityOperator, HermitianOperator};

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn ginibre<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// Full-rank mixed state `G G† / tr(G G†)` with Gaussian `G`.
pub fn random_state<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DensityOperator {
    let g = ginibre(rng, dim, dim);
    let m = &g * g.adjoint();
    let tr: f64 = m.diagonal().iter().map(|z| z.re).sum();
    DensityOperator::from_numerical(HermitianOperator::new(m.unscale(tr)).expect("square"))
        .expect("Ginibre states are positive")
}

pub fn random_pure_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DVector<Complex64> {
    let v = DVector::from_fn(dim, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let n = v.norm();
    v.unscale(n)
}

/// Haar-distributed unitary via QR of a Gaussian matrix with phase correction.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CMatrix {
    let qr = ginibre(rng, dim, dim).qr();
    let (q, r) = (qr.q(), qr.r());
    CMatrix::from_fn(dim, dim, |row, col| {
        let d = r[(col, col)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::ONE };
        q[(row, col)] * phase
    })
}

/// Hermitian matrix from the Gaussian unitary ensemble, scaled by `scale`.
pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, dim: usize, scale: f64) -> HermitianOperator {
    HermitianOperator::new(ginibre(rng, dim, dim).scale(scale)).expect("square")
}

/// Probability vector with i.i.d. exponential weights (flat Dirichlet).
pub fn random_probs<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}
