//! Qubit thermalization channels: point channel, CNOT broadcasting,
//! generalized amplitude damping and affine maps of the Bloch ball.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operator::{
    c, from_bloch, to_bloch, BlochVector, CMatrix, DensityOperator, HermitianOperator,
};

/// Tolerance on `Σ K†K = I`.
pub const KRAUS_TOL: f64 = 1e-10;

/// Slack on the norm and ball-preservation checks of affine Bloch maps.
pub const BALL_TOL: f64 = 1e-9;

/// Default residual tolerance for [`iterate_to_fixpoint`].
pub const FIXPOINT_TOL: f64 = 1e-10;

/// Default iteration cap for [`iterate_to_fixpoint`].
pub const FIXPOINT_MAX_ITERS: usize = 100_000;

/// Number of sphere points sampled by the ball-preservation check.
const BALL_SAMPLES: usize = 1000;

pub trait Channel {
    fn apply(&self, rho: &DensityOperator) -> Result<DensityOperator>;
}

fn check_dim(expected: usize, rho: &DensityOperator) -> Result<()> {
    if rho.dim() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: rho.dim(),
        });
    }
    Ok(())
}

/// `ρ ↦ Σ_m K_m ρ K_m†`.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausChannel {
    ops: Vec<CMatrix>,
}

impl KrausChannel {
    pub fn new(ops: Vec<CMatrix>) -> Result<Self> {
        let Some(first) = ops.first() else {
            return Err(Error::InvalidParameter("no Kraus operators".into()));
        };
        let (d_out, d_in) = first.shape();
        for k in &ops {
            if k.shape() != (d_out, d_in) {
                return Err(Error::DimensionMismatch {
                    expected: d_out * d_in,
                    found: k.nrows() * k.ncols(),
                });
            }
            if k.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        let ch = Self { ops };
        let err = ch.completeness_error();
        if err > KRAUS_TOL {
            return Err(Error::NotTracePreserving(err));
        }
        Ok(ch)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            ops: vec![CMatrix::identity(dim, dim)],
        }
    }

    /// Conjugation by a unitary.
    pub fn unitary(u: CMatrix) -> Result<Self> {
        Self::new(vec![u])
    }

    pub fn ops(&self) -> &[CMatrix] {
        &self.ops
    }

    pub fn dim_in(&self) -> usize {
        self.ops[0].ncols()
    }

    pub fn dim_out(&self) -> usize {
        self.ops[0].nrows()
    }

    /// Largest entry of `Σ K†K − I`.
    pub fn completeness_error(&self) -> f64 {
        let d = self.dim_in();
        let sum = self
            .ops
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, k| acc + k.adjoint() * k);
        (sum - CMatrix::identity(d, d))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    fn apply_matrix(&self, m: &CMatrix) -> CMatrix {
        let d = self.dim_out();
        self.ops
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, k| acc + k * m * k.adjoint())
    }
}

impl Channel for KrausChannel {
    fn apply(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        check_dim(self.dim_in(), rho)?;
        DensityOperator::from_numerical(HermitianOperator::new(self.apply_matrix(rho.matrix()))?)
    }
}

/// Replaces every input by a fixed target state.
#[derive(Clone, Debug, PartialEq)]
pub struct PointChannel {
    target: DensityOperator,
}

pub fn point_channel(target: DensityOperator) -> PointChannel {
    PointChannel { target }
}

impl PointChannel {
    pub fn target(&self) -> &DensityOperator {
        &self.target
    }

    /// Kraus operators `√λ_j |t_j⟩⟨k|` over the eigenpairs of the target.
    pub fn to_kraus(&self) -> KrausChannel {
        let d = self.target.dim();
        let s = self.target.operator().spectrum();
        let mut ops = Vec::new();
        for (j, &lambda) in s.values.iter().enumerate() {
            if lambda <= 0.0 {
                continue;
            }
            for k in 0..d {
                let mut op = CMatrix::zeros(d, d);
                op.set_column(k, &s.vectors.column(j).scale(lambda.sqrt()));
                ops.push(op);
            }
        }
        KrausChannel { ops }
    }
}

impl Channel for PointChannel {
    fn apply(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        check_dim(self.target.dim(), rho)?;
        Ok(self.target.clone())
    }
}

/// CNOT with the first qubit as control.
pub fn cnot_unitary() -> CMatrix {
    let mut u = CMatrix::zeros(4, 4);
    for (row, col) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
        u[(row, col)] = c(1.0);
    }
    u
}

/// Conjugation of a system ⊗ environment qubit pair by the CNOT, copying the
/// system's computational basis into an environment prepared in `|0⟩`.
pub fn cnot_broadcast(rho_se: &DensityOperator) -> Result<DensityOperator> {
    check_dim(4, rho_se)?;
    KrausChannel::unitary(cnot_unitary())?.apply(rho_se)
}

/// Boson occupation number `N̄ = 1/(e^{1/T} − 1)` at temperature `T > 0`.
pub fn occupation_number(temperature: f64) -> Result<f64> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    Ok(1.0 / (1.0 / temperature).exp_m1())
}

/// `η_t = 1 − e^{−(1+2N̄)t}`.
pub fn eta_from_time(t: f64, n_bar: f64) -> f64 {
    -(-(1.0 + 2.0 * n_bar) * t).exp_m1()
}

/// Parameters of the generalized amplitude damping channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GadParams {
    p: f64,
    eta: f64,
    /// `(t, N̄)` when `eta` was derived from a bath interaction time.
    time: Option<(f64, f64)>,
}

impl GadParams {
    pub fn new(p: f64, eta: f64) -> Result<Self> {
        for (name, v) in [("p", p), ("eta", eta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        Ok(Self { p, eta, time: None })
    }

    /// `η` from interaction time `t ≥ 0` and occupation `N̄ ≥ 0`.
    pub fn from_time(p: f64, t: f64, n_bar: f64) -> Result<Self> {
        if !(t >= 0.0 && n_bar >= 0.0 && t.is_finite() && n_bar.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need t >= 0 and occupation >= 0, got t={t}, occupation={n_bar}"
            )));
        }
        let mut out = Self::new(p, eta_from_time(t, n_bar))?;
        out.time = Some((t, n_bar));
        Ok(out)
    }

    /// Explicit `η` that must agree with `(t, N̄)` to 1e-12.
    pub fn with_time(p: f64, eta: f64, t: f64, n_bar: f64) -> Result<Self> {
        let derived = Self::from_time(p, t, n_bar)?;
        if (derived.eta - eta).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "eta {eta} does not match the bath value {}",
                derived.eta
            )));
        }
        Ok(Self {
            eta,
            ..derived
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn time(&self) -> Option<(f64, f64)> {
        self.time
    }

    /// `diag(p, 1 − p)`.
    pub fn stationary_state(&self) -> DensityOperator {
        DensityOperator::diagonal(&[self.p, 1.0 - self.p]).expect("p in [0, 1]")
    }
}

/// Generalized amplitude damping with Kraus operators
/// `E_1 = √p diag(1, √η)`, `E_2 = √p √(1−η) |0⟩⟨1|`,
/// `E_3 = √(1−p) diag(√η, 1)`, `E_4 = √(1−p) √(1−η) |1⟩⟨0|`.
pub fn gad_channel(params: GadParams) -> Result<KrausChannel> {
    let (p, eta) = (params.p, params.eta);
    let (sp, sq) = (p.sqrt(), (1.0 - p).sqrt());
    let (se, sd) = (eta.sqrt(), (1.0 - eta).sqrt());
    let m = |a: f64, b: f64, cc: f64, d: f64| {
        CMatrix::from_row_slice(2, 2, &[c(a), c(b), c(cc), c(d)])
    };
    KrausChannel::new(vec![
        m(sp, 0.0, 0.0, sp * se),
        m(0.0, sp * sd, 0.0, 0.0),
        m(sq * se, 0.0, 0.0, sq),
        m(0.0, 0.0, sq * sd, 0.0),
    ])
}

/// Qubit channel `r ↦ A r + t` on Bloch vectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineBlochChannel {
    a: Matrix3<f64>,
    t: Vector3<f64>,
}

/// Roughly uniform points on the unit sphere (Fibonacci lattice).
fn sphere_points(n: usize) -> impl Iterator<Item = Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n).map(move |k| {
        let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
        let r = (1.0 - z * z).sqrt();
        let phi = golden * k as f64;
        Vector3::new(r * phi.cos(), r * phi.sin(), z)
    })
}

impl AffineBlochChannel {
    /// Validates `‖A‖ ≤ 1` in spectral norm and that sampled unit vectors
    /// together with the singular directions of `A` stay in the ball.
    pub fn new(a: Matrix3<f64>, t: Vector3<f64>) -> Result<Self> {
        if a.iter().chain(t.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let ch = Self { a, t };
        let norm = ch.spectral_norm();
        if norm > 1.0 + BALL_TOL {
            return Err(Error::NotBallPreserving(format!(
                "spectral norm {norm} exceeds 1"
            )));
        }
        let svd = a.svd(false, true);
        let v_t = svd.v_t.expect("requested");
        let singular = (0..3).flat_map(|k| {
            let v: Vector3<f64> = v_t.row(k).transpose();
            [v, -v]
        });
        for r in sphere_points(BALL_SAMPLES).chain(singular) {
            let len = (a * r + t).norm();
            if len > 1.0 + BALL_TOL {
                return Err(Error::NotBallPreserving(format!(
                    "unit vector {:?} maps to length {len}",
                    r.as_slice()
                )));
            }
        }
        Ok(ch)
    }

    /// `r ↦ A r + (I − A) t_S`, which fixes `t_S`.
    pub fn partial_thermalization(a: Matrix3<f64>, t_s: BlochVector) -> Result<Self> {
        let t = (Matrix3::identity() - a) * t_s.to_vector();
        Self::new(a, t)
    }

    pub fn a(&self) -> &Matrix3<f64> {
        &self.a
    }

    pub fn t(&self) -> &Vector3<f64> {
        &self.t
    }

    pub fn spectral_norm(&self) -> f64 {
        self.a.singular_values().max()
    }

    pub fn map(&self, r: BlochVector) -> Result<BlochVector> {
        BlochVector::from_vector(&(self.a * r.to_vector() + self.t))
    }

    /// `(I − A)⁻¹ t`, if `I − A` is invertible.
    pub fn fixed_point(&self) -> Option<BlochVector> {
        let inv = (Matrix3::identity() - self.a).try_inverse()?;
        BlochVector::from_vector(&(inv * self.t)).ok()
    }
}

impl Channel for AffineBlochChannel {
    fn apply(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        from_bloch(self.map(to_bloch(rho)?)?)
    }
}

fn pauli(k: usize) -> CMatrix {
    let i = Complex64::i();
    let z = c(0.0);
    match k {
        0 => CMatrix::from_row_slice(2, 2, &[z, c(1.0), c(1.0), z]),
        1 => CMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        _ => CMatrix::from_row_slice(2, 2, &[c(1.0), z, z, c(-1.0)]),
    }
}

/// Affine Bloch representation of a qubit channel, read off from its action
/// on `I/2` and `(I + σ_k)/2`.
pub fn bloch_of_channel(ch: &KrausChannel) -> Result<AffineBlochChannel> {
    if ch.dim_in() != 2 {
        return Err(Error::NotQubit(ch.dim_in()));
    }
    if ch.dim_out() != 2 {
        return Err(Error::NotQubit(ch.dim_out()));
    }
    let half_id = CMatrix::identity(2, 2).scale(0.5);
    let bloch = |m: &CMatrix| -> Vector3<f64> {
        let out = ch.apply_matrix(m);
        Vector3::from_fn(|k, _| (pauli(k) * &out).trace().re)
    };
    let t = bloch(&half_id);
    let mut a = Matrix3::zeros();
    for k in 0..3 {
        let col = bloch(&(&half_id + pauli(k).scale(0.5))) - t;
        a.set_column(k, &col);
    }
    AffineBlochChannel::new(a, t)
}

/// Iterates `r ↦ A r + t` until `‖Λ(r) − r‖₂ ≤ tol`, returning the final
/// vector and the number of applications.
pub fn iterate_to_fixpoint(
    ch: &AffineBlochChannel,
    r0: BlochVector,
    tol: f64,
    max_iters: usize,
) -> Result<(BlochVector, usize)> {
    let norm = ch.spectral_norm();
    if norm >= 1.0 {
        return Err(Error::NotStrictContraction(norm));
    }
    let step = |r: Vector3<f64>| ch.a * r + ch.t;
    let mut r = r0.to_vector();
    for iters in 1..=max_iters {
        r = step(r);
        if (step(r) - r).norm() <= tol {
            return Ok((BlochVector::from_vector(&r)?, iters));
        }
    }
    Err(Error::NoConvergence(max_iters))
}
