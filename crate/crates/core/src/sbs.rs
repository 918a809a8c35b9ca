//! Objective states with spectrum broadcast structure: construction,
//! certification, thermal-objective families and distance estimates.

use std::fmt;

use nalgebra::DVector;
use num_bigint::BigUint;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gibbs::{boltzmann_weights, gibbs_state, HamiltonianSpec, InverseTemperature};
use crate::operator::{
    c, partial_trace_matrix, psd_sqrt, trace_norm, unitarity_error, CMatrix, DensityOperator,
    HermitianOperator,
};
use crate::random::{random_hermitian, seeded_rng};

/// Default tolerance for [`SbsState::new`].
pub const SBS_TOL: f64 = 1e-9;

/// Default tolerance for [`certify_sbs`].
pub const CERTIFY_TOL: f64 = 1e-8;

/// Fixed seed for the random observable that resolves degenerate system
/// eigenspaces during certification.
const CERTIFY_SEED: u64 = 0x5eed_ce27;

/// Fixed seed for the rotation generator of [`distance_to_tso`].
const GRID_SEED: u64 = 0x5eed_6e1d;

/// Above this many label assignments [`distance_to_tso`] stops enumerating
/// and labels each environment vector by its largest joint mass.
const EXHAUSTIVE_LIMIT: usize = 4096;

/// Largest environment dimension for which [`InfiniteTemperatureStates`]
/// enumerates assignments.
pub const ENUMERATION_LIMIT: usize = 12;

/// `tr(√a b √a)`, zero exactly when `a` and `b` have orthogonal supports.
pub fn support_overlap(a: &DensityOperator, b: &DensityOperator) -> Result<f64> {
    let s = psd_sqrt(a.operator());
    let prod = s.matrix() * b.matrix() * s.matrix();
    Ok(trace_norm(&HermitianOperator::new(prod)?))
}

/// Clamps negative eigenvalues and normalizes the trace.
fn normalize_psd(m: CMatrix) -> Result<DensityOperator> {
    let op = HermitianOperator::new(m)?;
    let s = op.spectrum();
    let clamped: Vec<f64> = s.values.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if total <= 0.0 {
        return Err(Error::BadTrace(total));
    }
    let probs: Vec<f64> = clamped.iter().map(|v| v / total).collect();
    DensityOperator::from_spectral(&probs, &s.vectors)
}

fn kron_all(ms: &[&CMatrix]) -> CMatrix {
    let mut out = CMatrix::from_element(1, 1, c(1.0));
    for m in ms {
        out = out.kronecker(m);
    }
    out
}

fn check_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::BadProbabilities("empty".into()));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::BadProbabilities(format!("{probs:?}")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > SBS_TOL {
        return Err(Error::BadProbabilities(format!("sum is {total}")));
    }
    Ok(())
}

/// `Σ_i p_i |i⟩⟨i| ⊗ ⊗_k ρ_{E_k|i}` with pairwise disjoint conditional
/// supports on every subenvironment.
#[derive(Clone, Debug)]
pub struct SbsState {
    probs: Vec<f64>,
    /// `d_S × n` matrix with orthonormal columns `|i⟩`.
    sys_basis: CMatrix,
    /// `cond_states[k][i] = ρ_{E_k|i}`.
    cond_states: Vec<Vec<DensityOperator>>,
}

impl SbsState {
    pub fn new(
        probs: Vec<f64>,
        sys_basis: CMatrix,
        cond_states: Vec<Vec<DensityOperator>>,
    ) -> Result<Self> {
        Self::with_tolerance(probs, sys_basis, cond_states, SBS_TOL)
    }

    /// As [`SbsState::new`] with `tol` as the largest accepted support overlap.
    pub fn with_tolerance(
        probs: Vec<f64>,
        sys_basis: CMatrix,
        cond_states: Vec<Vec<DensityOperator>>,
        tol: f64,
    ) -> Result<Self> {
        check_probs(&probs)?;
        let n = probs.len();
        if sys_basis.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: sys_basis.ncols(),
            });
        }
        if sys_basis.nrows() < n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: sys_basis.nrows(),
            });
        }
        let err = unitarity_error(&sys_basis);
        if err > SBS_TOL {
            return Err(Error::NotUnitary(err));
        }
        if cond_states.is_empty() {
            return Err(Error::InvalidParameter("no subenvironments".into()));
        }
        for (k, conds) in cond_states.iter().enumerate() {
            if conds.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: conds.len(),
                });
            }
            let d = conds[0].dim();
            if let Some(bad) = conds.iter().find(|r| r.dim() != d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: bad.dim(),
                });
            }
            for i in 0..n {
                for j in i + 1..n {
                    let overlap = support_overlap(&conds[i], &conds[j])?;
                    if overlap > tol {
                        return Err(Error::NotObjective {
                            subenv: k,
                            i,
                            j,
                            overlap,
                        });
                    }
                }
            }
        }
        Ok(Self {
            probs,
            sys_basis,
            cond_states,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn sys_basis(&self) -> &CMatrix {
        &self.sys_basis
    }

    /// Conditional states of subenvironment `k`, indexed by pointer value.
    pub fn conditionals(&self, k: usize) -> &[DensityOperator] {
        &self.cond_states[k]
    }

    pub fn num_indices(&self) -> usize {
        self.probs.len()
    }

    pub fn num_subenvs(&self) -> usize {
        self.cond_states.len()
    }

    pub fn sys_dim(&self) -> usize {
        self.sys_basis.nrows()
    }

    pub fn env_dims(&self) -> Vec<usize> {
        self.cond_states.iter().map(|c| c[0].dim()).collect()
    }

    /// `[d_S, d_{E_1}, …, d_{E_N}]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.sys_dim()];
        d.extend(self.env_dims());
        d
    }

    pub fn assemble(&self) -> DensityOperator {
        let total: usize = self.dims().iter().product();
        let mut m = CMatrix::zeros(total, total);
        for (i, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let v = self.sys_basis.column(i);
            let proj = v * v.adjoint();
            let mut factors = vec![&proj];
            factors.extend(self.cond_states.iter().map(|c| c[i].matrix()));
            m += kron_all(&factors).scale(p);
        }
        DensityOperator::from_numerical(HermitianOperator::new(m).expect("square"))
            .expect("convex combination of states")
    }

    /// `Σ_i p_i |i⟩⟨i|`.
    pub fn system_marginal(&self) -> DensityOperator {
        let d = self.sys_dim();
        let mut m = CMatrix::zeros(d, d);
        for (i, &p) in self.probs.iter().enumerate() {
            let v = self.sys_basis.column(i);
            m += (v * v.adjoint()).scale(p);
        }
        DensityOperator::from_numerical(HermitianOperator::new(m).expect("square"))
            .expect("convex combination of states")
    }

    /// `Σ_i p_i ρ_{E_k|i}`.
    pub fn env_marginal(&self, k: usize) -> DensityOperator {
        let d = self.cond_states[k][0].dim();
        let mut m = CMatrix::zeros(d, d);
        for (i, &p) in self.probs.iter().enumerate() {
            m += self.cond_states[k][i].matrix().scale(p);
        }
        DensityOperator::from_numerical(HermitianOperator::new(m).expect("square"))
            .expect("convex combination of states")
    }
}

/// Disjoint index sets `C_i` over environment eigenvector indices, one per
/// system index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionAssignment {
    sets: Vec<Vec<usize>>,
    env_dim: usize,
}

impl PartitionAssignment {
    pub fn new(sets: Vec<Vec<usize>>, env_dim: usize) -> Result<Self> {
        let mut seen = vec![false; env_dim];
        for set in &sets {
            for &j in set {
                if j >= env_dim {
                    return Err(Error::InvalidParameter(format!(
                        "index {j} out of range for environment dimension {env_dim}"
                    )));
                }
                if seen[j] {
                    return Err(Error::InvalidParameter(format!(
                        "index {j} assigned twice"
                    )));
                }
                seen[j] = true;
            }
        }
        Ok(Self { sets, env_dim })
    }

    /// `labels[j]` is the set that index `j` belongs to.
    pub fn from_labels(labels: &[usize], num_sets: usize) -> Result<Self> {
        let mut sets = vec![Vec::new(); num_sets];
        for (j, &l) in labels.iter().enumerate() {
            if l >= num_sets {
                return Err(Error::InvalidParameter(format!(
                    "label {l} out of range for {num_sets} sets"
                )));
            }
            sets[l].push(j);
        }
        Self::new(sets, labels.len())
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    pub fn num_sets(&self) -> usize {
        self.sets.len()
    }

    pub fn env_dim(&self) -> usize {
        self.env_dim
    }

    /// Set index of every environment index, `None` if unassigned.
    pub fn labels(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.env_dim];
        for (k, set) in self.sets.iter().enumerate() {
            for &j in set {
                out[j] = Some(k);
            }
        }
        out
    }

    pub fn is_complete(&self) -> bool {
        self.labels().iter().all(Option::is_some)
    }

    /// Sum of `weights[j]` over each set.
    pub fn bin_weights(&self, weights: &[f64]) -> Vec<f64> {
        self.sets
            .iter()
            .map(|s| s.iter().map(|&j| weights[j]).sum())
            .collect()
    }
}

impl fmt::Display for PartitionAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .sets
            .iter()
            .map(|s| {
                let idx: Vec<String> = s.iter().map(|j| j.to_string()).collect();
                format!("{{{}}}", idx.join(","))
            })
            .collect();
        write!(f, "{}", parts.join(" | "))
    }
}

/// Reason a state failed certification.
#[derive(Clone, Debug, PartialEq)]
pub enum Witness {
    /// No system basis makes the state block diagonal; `magnitude` is the
    /// trace norm of the off-diagonal blocks in the best basis found.
    NonDiagonalSystemBlock { magnitude: f64 },
    /// The conditional environment state for pointer `index` is not a
    /// product over subenvironments.
    NonProductConditional { index: usize, deviation: f64 },
    OverlappingSupports {
        subenv: usize,
        i: usize,
        j: usize,
        overlap: f64,
    },
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Witness::NonDiagonalSystemBlock { magnitude } => {
                write!(f, "non-diagonal system block (off-diagonal norm {magnitude:e})")
            }
            Witness::NonProductConditional { index, deviation } => write!(
                f,
                "conditional state {index} is not a product over subenvironments (deviation {deviation:e})"
            ),
            Witness::OverlappingSupports {
                subenv,
                i,
                j,
                overlap,
            } => write!(
                f,
                "overlapping supports on subenvironment {subenv}: conditionals {i} and {j} (overlap {overlap:e})"
            ),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Certificate {
    Objective(SbsState),
    NotObjective(Witness),
}

impl Certificate {
    pub fn is_objective(&self) -> bool {
        matches!(self, Certificate::Objective(_))
    }

    pub fn state(&self) -> Option<&SbsState> {
        match self {
            Certificate::Objective(s) => Some(s),
            Certificate::NotObjective(_) => None,
        }
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            Certificate::Objective(_) => None,
            Certificate::NotObjective(w) => Some(w),
        }
    }
}

/// `(V ⊗ I)† m (V ⊗ I)`.
fn rotate_system(m: &CMatrix, v: &CMatrix, d_e: usize) -> CMatrix {
    let big = v.kronecker(&CMatrix::identity(d_e, d_e));
    big.adjoint() * m * big
}

fn block(m: &CMatrix, a: usize, b: usize, d: usize) -> CMatrix {
    m.view((a * d, b * d), (d, d)).into_owned()
}

/// Decides whether `rho` on subsystems `dims = [d_S, d_{E_1}, …]` has
/// spectrum broadcast structure, returning the recovered state or a witness.
///
/// The pointer basis is the eigenbasis of the system marginal. Inside
/// eigenspaces degenerate to within `√tol`, it is fixed by diagonalizing
/// `tr(X ⟨a|ρ|b⟩)` for a fixed generic observable `X` on the environment.
/// Pointer values with weight at most `tol` are dropped.
pub fn certify_sbs(rho: &DensityOperator, dims: &[usize], tol: f64) -> Result<Certificate> {
    if dims.len() < 2 {
        return Err(Error::InvalidParameter(
            "need a system and at least one subenvironment".into(),
        ));
    }
    if dims.contains(&0) {
        return Err(Error::InvalidParameter("zero subsystem dimension".into()));
    }
    let total: usize = dims.iter().product();
    if total != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: total,
            found: rho.dim(),
        });
    }
    let d_s = dims[0];
    let env_dims = &dims[1..];
    let d_e = total / d_s;
    let m = rho.matrix();

    let rho_s = HermitianOperator::new(partial_trace_matrix(m, dims, &[0])?)?;
    let spec = rho_s.spectrum();
    let mut basis = spec.vectors;

    let deg_tol = tol.sqrt();
    let x = random_hermitian(&mut seeded_rng(CERTIFY_SEED), d_e, 1.0);
    let rot = rotate_system(m, &basis, d_e);
    let mut start = 0;
    while start < d_s {
        let mut end = start + 1;
        while end < d_s && spec.values[end] - spec.values[end - 1] <= deg_tol {
            end += 1;
        }
        let g = end - start;
        if g > 1 {
            let mix = CMatrix::from_fn(g, g, |a, b| {
                (x.matrix() * block(&rot, start + a, start + b, d_e)).trace()
            });
            let r = HermitianOperator::new(mix)?.spectrum().vectors;
            let cols = basis.columns(start, g) * r;
            basis.columns_mut(start, g).copy_from(&cols);
        }
        start = end;
    }

    let mut rot = rotate_system(m, &basis, d_e);
    let diag_blocks: Vec<CMatrix> = (0..d_s).map(|a| block(&rot, a, a, d_e)).collect();
    for a in 0..d_s {
        rot.view_mut((a * d_e, a * d_e), (d_e, d_e)).fill(c(0.0));
    }
    let magnitude = trace_norm(&HermitianOperator::new(rot)?);
    if magnitude > tol {
        return Ok(Certificate::NotObjective(Witness::NonDiagonalSystemBlock {
            magnitude,
        }));
    }

    let mut probs = Vec::new();
    let mut kept_cols = Vec::new();
    let mut conds: Vec<Vec<DensityOperator>> = vec![Vec::new(); env_dims.len()];
    for (a, b) in diag_blocks.into_iter().enumerate() {
        let p: f64 = b.trace().re;
        if p <= tol {
            continue;
        }
        let joint = normalize_psd(b.unscale(p))?;
        if env_dims.len() == 1 {
            conds[0].push(joint);
        } else {
            let marginals = (0..env_dims.len())
                .map(|k| normalize_psd(partial_trace_matrix(joint.matrix(), env_dims, &[k])?))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&CMatrix> = marginals.iter().map(|r| r.matrix()).collect();
            let product = HermitianOperator::new(kron_all(&refs))?;
            let deviation = trace_norm(&joint.operator().sub(&product)?);
            if p * deviation > tol {
                return Ok(Certificate::NotObjective(
                    Witness::NonProductConditional {
                        index: probs.len(),
                        deviation,
                    },
                ));
            }
            for (k, r) in marginals.into_iter().enumerate() {
                conds[k].push(r);
            }
        }
        probs.push(p);
        kept_cols.push(a);
    }

    for (k, ck) in conds.iter().enumerate() {
        for i in 0..ck.len() {
            for j in i + 1..ck.len() {
                let overlap = support_overlap(&ck[i], &ck[j])?;
                if overlap > tol {
                    return Ok(Certificate::NotObjective(Witness::OverlappingSupports {
                        subenv: k,
                        i,
                        j,
                        overlap,
                    }));
                }
            }
        }
    }

    let total_p: f64 = probs.iter().sum();
    let probs: Vec<f64> = probs.iter().map(|p| p / total_p).collect();
    let cols: Vec<_> = kept_cols.iter().map(|&a| basis.column(a)).collect();
    let sys_basis = CMatrix::from_columns(&cols);
    let state = SbsState::with_tolerance(probs, sys_basis, conds, tol)?;
    Ok(Certificate::Objective(state))
}

/// Objective state whose pointer basis is the eigenbasis of `hs` and whose
/// pointer probabilities are its Gibbs weights, so the system marginal is
/// thermal. `cond_states[k][i]` is the conditional state of subenvironment `k`.
pub fn thermal_system_sbs(
    hs: &HamiltonianSpec,
    beta: InverseTemperature,
    cond_states: Vec<Vec<DensityOperator>>,
) -> Result<SbsState> {
    let probs = boltzmann_weights(hs.energies(), beta);
    SbsState::new(probs, hs.basis().clone(), cond_states)
}

pub fn thermal_system_objective(
    hs: &HamiltonianSpec,
    beta: InverseTemperature,
    cond_states: Vec<Vec<DensityOperator>>,
) -> Result<DensityOperator> {
    Ok(thermal_system_sbs(hs, beta, cond_states)?.assemble())
}

/// Outcome of [`check_equal_dim_coexistence`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coexistence {
    /// Sorted environment energies equal the system energies plus `shift`.
    Shifted { shift: f64 },
    /// No uniform shift exists, but at this temperature both Gibbs states
    /// still admit an exact thermal-objective state: at `β = 0` both are
    /// maximally mixed, at `β = ∞` the environment ground degeneracy is a
    /// multiple of the system one.
    SpectraMatchAtLimit,
    Incompatible,
}

impl Coexistence {
    pub fn is_compatible(&self) -> bool {
        !matches!(self, Coexistence::Incompatible)
    }
}

fn ground_degeneracy(energies: &[f64]) -> usize {
    let w = boltzmann_weights(energies, InverseTemperature::Infinite);
    w.iter().filter(|&&x| x > 0.0).count()
}

/// Whether system and environment Hamiltonians of equal dimension admit an
/// exact thermal-objective state at `beta`, which at finite nonzero `β`
/// requires `h_i = E_i + c` on sorted energies.
pub fn check_equal_dim_coexistence(
    hs: &HamiltonianSpec,
    he: &HamiltonianSpec,
    beta: InverseTemperature,
    tol: f64,
) -> Result<Coexistence> {
    if hs.dim() != he.dim() {
        return Err(Error::DimensionMismatch {
            expected: hs.dim(),
            found: he.dim(),
        });
    }
    let mut es = hs.energies().to_vec();
    let mut eh = he.energies().to_vec();
    es.sort_by(f64::total_cmp);
    eh.sort_by(f64::total_cmp);
    let diffs: Vec<f64> = es.iter().zip(&eh).map(|(e, h)| h - e).collect();
    let lo = diffs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shift = 0.5 * (lo + hi);
    if 0.5 * (hi - lo) <= tol {
        return Ok(Coexistence::Shifted { shift });
    }
    Ok(match beta {
        InverseTemperature::Finite(0.0) => Coexistence::SpectraMatchAtLimit,
        InverseTemperature::Finite(_) => Coexistence::Incompatible,
        InverseTemperature::Infinite => {
            if ground_degeneracy(&eh).is_multiple_of(ground_degeneracy(&es)) {
                Coexistence::SpectraMatchAtLimit
            } else {
                Coexistence::Incompatible
            }
        }
    })
}

/// Hamiltonian `Σ_i (E_i + c) U|i⟩⟨i|U†` of a subenvironment that copies the
/// system spectrum; `U` acts on the system eigenvectors `|i⟩`.
pub fn copied_env_hamiltonian(hs: &HamiltonianSpec, shift: f64, u: &CMatrix) -> Result<HamiltonianSpec> {
    if u.nrows() != hs.dim() || u.ncols() != hs.dim() {
        return Err(Error::DimensionMismatch {
            expected: hs.dim(),
            found: u.nrows(),
        });
    }
    let err = unitarity_error(u);
    if err > crate::gibbs::UNITARY_TOL {
        return Err(Error::NotUnitary(err));
    }
    HamiltonianSpec::new(
        hs.energies().iter().map(|e| e + shift).collect(),
        u * hs.basis(),
    )
}

/// `Σ_i (e^{−βE_i}/Z_S) |i⟩⟨i| ⊗ ⊗_k U_k|i⟩⟨i|U_k†` as an objective state.
pub fn exact_thermal_objective_sbs(
    hs: &HamiltonianSpec,
    subenvs: &[(f64, CMatrix)],
    beta: InverseTemperature,
) -> Result<SbsState> {
    if subenvs.is_empty() {
        return Err(Error::InvalidParameter("no subenvironments".into()));
    }
    let mut conds = Vec::with_capacity(subenvs.len());
    for (shift, u) in subenvs {
        let he = copied_env_hamiltonian(hs, *shift, u)?;
        let b = he.basis();
        let ck = (0..hs.dim())
            .map(|i| {
                let v: Vec<Complex64> = b.column(i).iter().copied().collect();
                DensityOperator::pure(&v)
            })
            .collect::<Result<Vec<_>>>()?;
        conds.push(ck);
    }
    thermal_system_sbs(hs, beta, conds)
}

pub fn exact_thermal_objective_state(
    hs: &HamiltonianSpec,
    subenvs: &[(f64, CMatrix)],
    beta: InverseTemperature,
) -> Result<DensityOperator> {
    Ok(exact_thermal_objective_sbs(hs, subenvs, beta)?.assemble())
}

/// Exact objective states with maximally mixed marginals on `d_S ⊗ d_E`:
/// every assignment of environment basis vectors to equal groups of size
/// `M = d_E/d_S`, one group per system basis vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InfiniteTemperatureStates {
    d_s: usize,
    d_e: usize,
}

impl InfiniteTemperatureStates {
    pub fn new(d_s: usize, d_e: usize) -> Result<Self> {
        if d_s == 0 || d_e == 0 {
            return Err(Error::InvalidParameter("dimensions must be positive".into()));
        }
        Ok(Self { d_s, d_e })
    }

    pub fn group_size(&self) -> Option<usize> {
        self.d_e.is_multiple_of(self.d_s).then(|| self.d_e / self.d_s)
    }

    /// `(M d_S)! / (M!)^{d_S}`, or zero when `d_S` does not divide `d_E`.
    pub fn count(&self) -> BigUint {
        let Some(m) = self.group_size() else {
            return BigUint::from(0u32);
        };
        let fact = |n: usize| (1..=n).fold(BigUint::from(1u32), |acc, k| acc * k);
        fact(self.d_e) / fact(m).pow(self.d_s as u32)
    }

    /// Trace distance bound `d_S/d_E` to the nearest exact state, zero when
    /// one exists.
    pub fn distance_bound(&self) -> f64 {
        if self.group_size().is_some() {
            0.0
        } else {
            self.d_s as f64 / self.d_e as f64
        }
    }

    /// All assignments in lexicographic order of their label sequences.
    pub fn enumerate(&self) -> Result<impl Iterator<Item = PartitionAssignment>> {
        if self.d_e > ENUMERATION_LIMIT {
            return Err(Error::OracleScaleExceeded(format!(
                "enumeration needs d_E <= {ENUMERATION_LIMIT}, got {}",
                self.d_e
            )));
        }
        let start = self
            .group_size()
            .map(|m| (0..self.d_e).map(|j| j / m).collect::<Vec<_>>());
        let d_s = self.d_s;
        Ok(MultisetPermutations { next: start }.map(move |labels| {
            PartitionAssignment::from_labels(&labels, d_s).expect("labels in range")
        }))
    }

    /// `Σ_i (1/d_S) |i⟩⟨i| ⊗ (1/M) Σ_{j∈C_i} |j⟩⟨j|`.
    pub fn state(&self, assignment: &PartitionAssignment) -> Result<DensityOperator> {
        let m = self.group_size().ok_or_else(|| {
            Error::InvalidParameter(format!("{} does not divide {}", self.d_s, self.d_e))
        })?;
        if assignment.num_sets() != self.d_s
            || assignment.env_dim() != self.d_e
            || assignment.sets().iter().any(|s| s.len() != m)
        {
            return Err(Error::InvalidParameter(format!(
                "assignment {assignment} does not split {} into {} groups of {m}",
                self.d_e, self.d_s
            )));
        }
        let w = 1.0 / (self.d_s * m) as f64;
        let mut diag = vec![0.0; self.d_s * self.d_e];
        for (i, set) in assignment.sets().iter().enumerate() {
            for &j in set {
                diag[i * self.d_e + j] = w;
            }
        }
        DensityOperator::diagonal(&diag)
    }
}

/// Distinct permutations of a sorted multiset, in lexicographic order.
struct MultisetPermutations {
    next: Option<Vec<usize>>,
}

impl Iterator for MultisetPermutations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut a = current.clone();
        let n = a.len();
        if let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| a[i] < a[i + 1]) {
            let j = (i + 1..n).rev().find(|&j| a[j] > a[i]).expect("exists");
            a.swap(i, j);
            a[i + 1..].reverse();
            self.next = Some(a);
        }
        Some(current)
    }
}

/// Which Hamiltonian of the two worked global-Hamiltonian constructions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GlobalKind {
    /// `Σ_i E_i |i⟩⟨i| ⊗ |φ_i⟩⟨φ_i|`.
    PerfectCorrelation,
    /// `Σ_i E_i |i⟩⟨i| ⊗ Σ_a q_{a|i} |φ_a⟩⟨φ_a|`.
    WeightedCorrelation,
}

/// Global Hamiltonian coupling system pointer states to disjoint environment
/// subspaces.
///
/// Product states `|i⟩|φ_a⟩` with `q_{a|i} = 0` have zero energy in
/// [`Self::operator`], so the Gibbs state over the full space is not
/// objective. [`Self::gibbs_state`] is the Gibbs state restricted to the
/// correlated sector spanned by `|i⟩|φ_a⟩` with `q_{a|i} > 0`, where the
/// energy of `|i⟩|φ_a⟩` is `E_i q_{a|i}`.
#[derive(Clone, Debug)]
pub struct GlobalObjectiveHamiltonian {
    kind: GlobalKind,
    energies: Vec<f64>,
    sys_basis: CMatrix,
    env_basis: CMatrix,
    /// `q[i][a]`.
    q: Vec<Vec<f64>>,
}

impl GlobalObjectiveHamiltonian {
    pub fn perfect_correlation(
        energies: Vec<f64>,
        sys_basis: CMatrix,
        env_basis: CMatrix,
    ) -> Result<Self> {
        let d = energies.len();
        let q = (0..d)
            .map(|i| (0..env_basis.ncols()).map(|a| if a == i { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::build(GlobalKind::PerfectCorrelation, energies, sys_basis, env_basis, q)
    }

    pub fn weighted_correlation(
        energies: Vec<f64>,
        sys_basis: CMatrix,
        env_basis: CMatrix,
        q: Vec<Vec<f64>>,
    ) -> Result<Self> {
        Self::build(GlobalKind::WeightedCorrelation, energies, sys_basis, env_basis, q)
    }

    fn build(
        kind: GlobalKind,
        energies: Vec<f64>,
        sys_basis: CMatrix,
        env_basis: CMatrix,
        q: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let d_s = energies.len();
        if sys_basis.nrows() != d_s || sys_basis.ncols() != d_s {
            return Err(Error::DimensionMismatch {
                expected: d_s,
                found: sys_basis.ncols(),
            });
        }
        if env_basis.nrows() != env_basis.ncols() {
            return Err(Error::NotSquare {
                rows: env_basis.nrows(),
                cols: env_basis.ncols(),
            });
        }
        if env_basis.ncols() < d_s {
            return Err(Error::EnvironmentTooSmall {
                d_s,
                d_e: env_basis.ncols(),
            });
        }
        for b in [&sys_basis, &env_basis] {
            let err = unitarity_error(b);
            if err > crate::gibbs::UNITARY_TOL {
                return Err(Error::NotUnitary(err));
            }
        }
        if energies.iter().any(|e| !e.is_finite()) {
            return Err(Error::NonFinite);
        }
        if q.len() != d_s {
            return Err(Error::DimensionMismatch {
                expected: d_s,
                found: q.len(),
            });
        }
        let d_e = env_basis.ncols();
        let mut owner: Vec<Option<usize>> = vec![None; d_e];
        for (i, row) in q.iter().enumerate() {
            if row.len() != d_e {
                return Err(Error::DimensionMismatch {
                    expected: d_e,
                    found: row.len(),
                });
            }
            if row.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "weights of pointer {i} must be finite and nonnegative"
                )));
            }
            if row.iter().all(|&x| x == 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "pointer {i} has no environment support"
                )));
            }
            for (a, &x) in row.iter().enumerate() {
                if x > 0.0 {
                    if let Some(j) = owner[a] {
                        return Err(Error::NotObjective {
                            subenv: 0,
                            i: j,
                            j: i,
                            overlap: q[j][a] * x,
                        });
                    }
                    owner[a] = Some(i);
                }
            }
        }
        Ok(Self {
            kind,
            energies,
            sys_basis,
            env_basis,
            q,
        })
    }

    pub fn kind(&self) -> GlobalKind {
        self.kind
    }

    pub fn dims(&self) -> [usize; 2] {
        [self.energies.len(), self.env_basis.ncols()]
    }

    fn product_vector(&self, i: usize, a: usize) -> DVector<Complex64> {
        self.sys_basis.column(i).kronecker(&self.env_basis.column(a))
    }

    pub fn operator(&self) -> HermitianOperator {
        let [d_s, d_e] = self.dims();
        let mut m = CMatrix::zeros(d_s * d_e, d_s * d_e);
        for (i, row) in self.q.iter().enumerate() {
            for (a, &qa) in row.iter().enumerate() {
                if qa > 0.0 {
                    let v = self.product_vector(i, a);
                    m += (&v * v.adjoint()).scale(self.energies[i] * qa);
                }
            }
        }
        HermitianOperator::new(m).expect("square")
    }

    /// `(i, a, E_i q_{a|i})` for every correlated product state.
    pub fn sector(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (i, row) in self.q.iter().enumerate() {
            for (a, &qa) in row.iter().enumerate() {
                if qa > 0.0 {
                    out.push((i, a, self.energies[i] * qa));
                }
            }
        }
        out
    }

    /// Gibbs weights over the correlated sector, in [`Self::sector`] order.
    fn sector_weights(&self, beta: InverseTemperature) -> Vec<f64> {
        let e: Vec<f64> = self.sector().iter().map(|s| s.2).collect();
        boltzmann_weights(&e, beta)
    }

    /// `p_i = Σ_{b∈supp_i} e^{−βE_i q_{b|i}}/Z` and `c_{a|i}`, the latter
    /// indexed `[i][a]` over all environment basis vectors.
    pub fn pointer_distribution(&self, beta: InverseTemperature) -> (Vec<f64>, Vec<Vec<f64>>) {
        let [d_s, d_e] = self.dims();
        let mut p = vec![0.0; d_s];
        let mut cond = vec![vec![0.0; d_e]; d_s];
        for ((i, a, _), w) in self.sector().into_iter().zip(self.sector_weights(beta)) {
            p[i] += w;
            cond[i][a] = w;
        }
        for i in 0..d_s {
            if p[i] > 0.0 {
                for x in cond[i].iter_mut() {
                    *x /= p[i];
                }
            }
        }
        (p, cond)
    }

    pub fn sbs_state(&self, beta: InverseTemperature) -> Result<SbsState> {
        let (p, cond) = self.pointer_distribution(beta);
        let conds = cond
            .into_iter()
            .zip(&self.q)
            .map(|(w, row)| {
                if w.iter().sum::<f64>() > 0.0 {
                    return DensityOperator::from_spectral(&w, &self.env_basis);
                }
                // pointer with zero weight at zero temperature
                let n = row.iter().filter(|&&x| x > 0.0).count() as f64;
                let uniform: Vec<f64> =
                    row.iter().map(|&x| if x > 0.0 { 1.0 / n } else { 0.0 }).collect();
                DensityOperator::from_spectral(&uniform, &self.env_basis)
            })
            .collect::<Result<Vec<_>>>()?;
        SbsState::new(p, self.sys_basis.clone(), vec![conds])
    }

    /// Gibbs state on the correlated sector.
    pub fn gibbs_state(&self, beta: InverseTemperature) -> Result<DensityOperator> {
        Ok(self.sbs_state(beta)?.assemble())
    }

    /// Gibbs state of [`Self::operator`] over the full product space.
    pub fn full_space_gibbs_state(&self, beta: InverseTemperature) -> Result<DensityOperator> {
        Ok(gibbs_state(&HamiltonianSpec::from_operator(&self.operator())?, beta))
    }
}

/// Upper bound on the trace distance from `rho` to the set of objective
/// states with thermal system marginal `γ_S(hs, beta)`.
///
/// `rho` lives on `d_S ⊗ d_E` with `d_S = hs.dim()`, the environment treated as
/// a single factor. Candidates are `Σ_i p_i |i⟩⟨i| ⊗ Σ_{j∈C_i} c_{j|i}|e_j⟩⟨e_j|`
/// with `p` the Gibbs weights, `|i⟩` the eigenbasis of `hs`, nonempty
/// disjoint `C_i` and `c_{j|i}` proportional to the mass `⟨i,e_j|ρ|i,e_j⟩`.
/// The bases `{e_j}` are `B exp(iθ_g G)` for `θ_g = 2πg/search_budget`, a fixed
/// generic Hermitian `G` and three anchors `B`: the identity, the eigenbasis
/// of a generic combination of the conditional blocks `⟨i|ρ|i⟩`, and the
/// eigenbasis of the environment marginal. Label assignments are exhaustive
/// when there are at most 4096 of them, otherwise each `e_j` goes to the
/// pointer with the largest mass. Returns 2 when `d_E < d_S`.
pub fn distance_to_tso(
    rho: &DensityOperator,
    hs: &HamiltonianSpec,
    beta: InverseTemperature,
    search_budget: usize,
) -> Result<f64> {
    let d_s = hs.dim();
    if !rho.dim().is_multiple_of(d_s) {
        return Err(Error::DimensionMismatch {
            expected: d_s,
            found: rho.dim(),
        });
    }
    let d_e = rho.dim() / d_s;
    if d_e < d_s {
        return Ok(2.0);
    }
    let p = boltzmann_weights(hs.energies(), beta);
    let rot = rotate_system(rho.matrix(), hs.basis(), d_e);

    let mix = (0..d_s).fold(CMatrix::zeros(d_e, d_e), |acc, i| {
        acc + block(&rot, i, i, d_e).scale(1.0 / (i as f64 + std::f64::consts::E))
    });
    let env_marginal = (0..d_s).fold(CMatrix::zeros(d_e, d_e), |acc, i| {
        acc + block(&rot, i, i, d_e)
    });
    let anchors = [
        CMatrix::identity(d_e, d_e),
        HermitianOperator::new(mix)?.spectrum().vectors,
        HermitianOperator::new(env_marginal)?.spectrum().vectors,
    ];
    let g = random_hermitian(&mut seeded_rng(GRID_SEED), d_e, 1.0).spectrum();
    let budget = search_budget.max(1);
    let rotation = |theta: f64| -> CMatrix {
        let phases = CMatrix::from_diagonal(&DVector::from_iterator(
            d_e,
            g.values.iter().map(|&v| Complex64::from_polar(1.0, theta * v)),
        ));
        &g.vectors * phases * g.vectors.adjoint()
    };

    let exhaustive = d_s
        .checked_pow(d_e as u32)
        .filter(|&n| n <= EXHAUSTIVE_LIMIT);
    let points: Vec<(usize, usize)> = (0..anchors.len())
        .flat_map(|a| (0..budget).map(move |k| (a, k)))
        .collect();
    let best = points
        .par_iter()
        .map(|&(a, k)| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / budget as f64;
            let u = &anchors[a] * rotation(theta);
            let big = CMatrix::identity(d_s, d_s).kronecker(&u);
            let local = big.adjoint() * &rot * big;
            let mass: Vec<Vec<f64>> = (0..d_s)
                .map(|i| (0..d_e).map(|j| local[(i * d_e + j, i * d_e + j)].re.max(0.0)).collect())
                .collect();
            let eval = |labels: &[usize]| -> f64 {
                let mut diff = local.clone();
                for i in 0..d_s {
                    let members: Vec<usize> = (0..d_e).filter(|&j| labels[j] == i).collect();
                    let total: f64 = members.iter().map(|&j| mass[i][j]).sum();
                    for &j in &members {
                        let cj = if total > 0.0 {
                            mass[i][j] / total
                        } else {
                            1.0 / members.len() as f64
                        };
                        diff[(i * d_e + j, i * d_e + j)] -= c(p[i] * cj);
                    }
                }
                trace_norm(&HermitianOperator::new(diff).expect("square"))
            };
            match exhaustive {
                Some(n) => {
                    let mut best = f64::INFINITY;
                    let mut labels = vec![0usize; d_e];
                    for code in 0..n {
                        let mut x = code;
                        for l in labels.iter_mut() {
                            *l = x % d_s;
                            x /= d_s;
                        }
                        let mut used = vec![false; d_s];
                        labels.iter().for_each(|&l| used[l] = true);
                        if used.iter().all(|&u| u) {
                            best = best.min(eval(&labels));
                        }
                    }
                    best
                }
                None => eval(&argmax_labels(&mass, d_s, d_e)),
            }
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(best.min(2.0))
}

/// Labels each environment index by its largest-mass pointer, then moves
/// indices into empty labels until every label is used.
fn argmax_labels(mass: &[Vec<f64>], d_s: usize, d_e: usize) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..d_e)
        .map(|j| {
            (0..d_s)
                .max_by(|&a, &b| mass[a][j].total_cmp(&mass[b][j]).then(b.cmp(&a)))
                .expect("d_s > 0")
        })
        .collect();
    loop {
        let mut counts = vec![0usize; d_s];
        labels.iter().for_each(|&l| counts[l] += 1);
        let Some(empty) = counts.iter().position(|&n| n == 0) else {
            return labels;
        };
        let j = (0..d_e)
            .filter(|&j| counts[labels[j]] > 1)
            .max_by(|&a, &b| mass[empty][a].total_cmp(&mass[empty][b]).then(b.cmp(&a)))
            .expect("d_e >= d_s leaves a donor");
        labels[j] = empty;
    }
}
