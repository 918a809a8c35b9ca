//! Upper bounds on the distance between thermal and objective states: the
//! energy-deviation bound, macrofraction bounds, and the greedy assignment of
//! environment levels to pointer states with its `d_S/Z_E` guarantee.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gibbs::{boltzmann_weights, gibbs_state, HamiltonianSpec, InverseTemperature};
use crate::operator::{trace_norm, DensityOperator, HermitianOperator};
use crate::sbs::{PartitionAssignment, SbsState};

/// Largest number of joint levels a macrofraction bound will enumerate.
pub const MAX_JOINT_LEVELS: usize = 1 << 24;

/// Tolerance when matching a [`GreedyResult`] against the spectra it is
/// assembled with.
const MATCH_TOL: f64 = 1e-12;

/// Environment whose levels copy the system's up to a shift and per-level
/// errors: `h_i = E_i + c + δ_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviationModel {
    base_energies: Vec<f64>,
    shift: f64,
    deviations: Vec<f64>,
    beta: InverseTemperature,
}

impl DeviationModel {
    pub fn new(
        base_energies: Vec<f64>,
        shift: f64,
        deviations: Vec<f64>,
        beta: InverseTemperature,
    ) -> Result<Self> {
        if base_energies.is_empty() {
            return Err(Error::InvalidParameter("no energy levels".into()));
        }
        if deviations.len() != base_energies.len() {
            return Err(Error::DimensionMismatch {
                expected: base_energies.len(),
                found: deviations.len(),
            });
        }
        let all = base_energies.iter().chain(&deviations).chain([&shift]);
        if all.into_iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            base_energies,
            shift,
            deviations,
            beta,
        })
    }

    pub fn base_energies(&self) -> &[f64] {
        &self.base_energies
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn deviations(&self) -> &[f64] {
        &self.deviations
    }

    pub fn beta(&self) -> InverseTemperature {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.base_energies.len()
    }

    pub fn env_energies(&self) -> Vec<f64> {
        self.base_energies
            .iter()
            .zip(&self.deviations)
            .map(|(e, d)| e + self.shift + d)
            .collect()
    }

    pub fn system_weights(&self) -> Vec<f64> {
        boltzmann_weights(&self.base_energies, self.beta)
    }

    pub fn env_weights(&self) -> Vec<f64> {
        boltzmann_weights(&self.env_energies(), self.beta)
    }
}

/// `Σ_i |e^{−(E_i+c+δ_i)β}/Z_E − e^{−E_iβ}/Z_S|`.
pub fn deviation_bound(model: &DeviationModel) -> f64 {
    model
        .env_weights()
        .iter()
        .zip(model.system_weights())
        .map(|(e, s)| (e - s).abs())
        .sum()
}

/// Ways of combining several deviated subenvironments into one bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MacrofractionVariant {
    /// `Σ_{i_1..i_N} |Σ_k w^{E_k}_{i_k} − Π_k w^S_{i_k}|`, environment
    /// terms added.
    AsPrinted,
    /// `Σ_{i_1..i_N} |Π_k w^{E_k}_{i_k} − Π_k w^S_{i_k}|`, the trace norm of
    /// the difference of the two diagonal product states.
    ProductForm,
    /// The subenvironments as one environment with levels
    /// `Σ_k (E_{j_k} + c_k + δ_{j_k|k})`, bounded by the greedy partition.
    /// The smallest greedy total over leading groups `1..n` of the
    /// subenvironments is used, since a partition of a group extends to any
    /// larger group with the same total.
    GroupedGreedy,
}

impl MacrofractionVariant {
    pub const ALL: [MacrofractionVariant; 3] = [
        MacrofractionVariant::AsPrinted,
        MacrofractionVariant::ProductForm,
        MacrofractionVariant::GroupedGreedy,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MacrofractionVariant::AsPrinted => "as_printed",
            MacrofractionVariant::ProductForm => "product_form",
            MacrofractionVariant::GroupedGreedy => "grouped_greedy",
        }
    }
}

impl fmt::Display for MacrofractionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MacrofractionVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s.trim())
            .ok_or_else(|| Error::InvalidParameter(format!("unknown variant {s}")))
    }
}

fn check_shared(models: &[DeviationModel]) -> Result<()> {
    let Some(first) = models.first() else {
        return Err(Error::InvalidParameter("no subenvironments".into()));
    };
    for m in &models[1..] {
        if m.base_energies != first.base_energies || m.beta != first.beta {
            return Err(Error::InvalidParameter(
                "subenvironment models must share base energies and inverse temperature".into(),
            ));
        }
    }
    let levels = (first.dim() as f64).powi(models.len() as i32);
    if levels > MAX_JOINT_LEVELS as f64 {
        return Err(Error::InvalidParameter(format!(
            "{levels} joint levels exceed the limit of {MAX_JOINT_LEVELS}"
        )));
    }
    Ok(())
}

/// Calls `f` with the per-factor indices of every joint level, first factor
/// most significant.
fn for_each_tuple(d: usize, n: usize, mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; n];
    loop {
        f(&idx);
        let mut k = n;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < d {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Levels of the combined environment, in Kronecker order.
pub fn macro_env_energies(models: &[DeviationModel]) -> Vec<f64> {
    let per: Vec<Vec<f64>> = models.iter().map(DeviationModel::env_energies).collect();
    let mut out = Vec::new();
    for_each_tuple(models[0].dim(), models.len(), |idx| {
        out.push(idx.iter().zip(&per).map(|(&i, h)| h[i]).sum());
    });
    out
}

pub fn macrofraction_bound(
    models: &[DeviationModel],
    variant: MacrofractionVariant,
) -> Result<f64> {
    check_shared(models)?;
    let ws = models[0].system_weights();
    let we: Vec<Vec<f64>> = models.iter().map(DeviationModel::env_weights).collect();
    let d = models[0].dim();
    match variant {
        MacrofractionVariant::AsPrinted | MacrofractionVariant::ProductForm => {
            let mut total = 0.0;
            for_each_tuple(d, models.len(), |idx| {
                let sys: f64 = idx.iter().map(|&i| ws[i]).product();
                let env: f64 = if variant == MacrofractionVariant::AsPrinted {
                    idx.iter().zip(&we).map(|(&i, w)| w[i]).sum()
                } else {
                    idx.iter().zip(&we).map(|(&i, w)| w[i]).product()
                };
                total += (env - sys).abs();
            });
            Ok(total)
        }
        MacrofractionVariant::GroupedGreedy => Ok(*grouped_greedy_profile(models)?
            .last()
            .expect("at least one model")),
    }
}

/// Grouped-greedy bound for the leading `1, 2, …, N` subenvironments.
pub fn grouped_greedy_profile(models: &[DeviationModel]) -> Result<Vec<f64>> {
    check_shared(models)?;
    let ws = models[0].system_weights();
    let beta = models[0].beta;
    let mut best = f64::INFINITY;
    (1..=models.len())
        .map(|n| {
            let h = macro_env_energies(&models[..n]);
            best = best.min(greedy_partition(&ws, &h, beta)?.total);
            Ok(best)
        })
        .collect()
}

/// Output of [`greedy_partition`].
#[derive(Clone, Debug, PartialEq)]
pub struct GreedyResult {
    /// Pointer probabilities `p_k`.
    pub probs: Vec<f64>,
    /// Normalized environment weights `w_j`.
    pub weights: Vec<f64>,
    pub assignment: PartitionAssignment,
    /// `|p_k − W_k|` with `W_k = Σ_{j∈C_k} w_j`.
    pub per_bin_error: Vec<f64>,
    pub total: f64,
    pub unassigned_weight: f64,
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() || p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::BadProbabilities(format!("{what}: {p:?}")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::BadProbabilities(format!("{what} sum to {s}")));
    }
    Ok(())
}

/// Greedy assignment of environment levels to pointer states so that each
/// bin's Boltzmann weight `W_k` approximates `p_k`.
///
/// Bins are filled in order of decreasing `p_k` from the levels in order of
/// decreasing weight. A bin takes levels until `W_k ≥ p_k`, then gives the
/// last one back if that leaves `|p_k − W_k|` strictly smaller; a returned
/// level is set aside. A bin stops early when the remaining levels are
/// needed to give every later bin one, and never returns its only level.
/// Set-aside and unused levels go to the bin with the largest deficit
/// `p_k − W_k`.
pub fn greedy_partition(
    probs: &[f64],
    env_energies: &[f64],
    beta: InverseTemperature,
) -> Result<GreedyResult> {
    if env_energies.iter().any(|h| !h.is_finite()) {
        return Err(Error::NonFinite);
    }
    greedy_partition_weights(probs, &boltzmann_weights(env_energies, beta))
}

/// [`greedy_partition`] on normalized weights.
pub fn greedy_partition_weights(probs: &[f64], weights: &[f64]) -> Result<GreedyResult> {
    check_distribution(probs, "pointer probabilities")?;
    check_distribution(weights, "environment weights")?;
    let d_s = probs.len();
    let d_e = weights.len();
    if d_e < d_s {
        return Err(Error::EnvironmentTooSmall { d_s, d_e });
    }

    let mut bin_order: Vec<usize> = (0..d_s).collect();
    bin_order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    let mut level_order: Vec<usize> = (0..d_e).collect();
    level_order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]));
    let mut pool: VecDeque<usize> = level_order.into();

    let mut sets = vec![Vec::new(); d_s];
    let mut w = vec![0.0; d_s];
    let mut aside = Vec::new();
    for (pos, &k) in bin_order.iter().enumerate() {
        let later = d_s - pos - 1;
        while pool.len() > later {
            let j = pool.pop_front().expect("nonempty");
            sets[k].push(j);
            w[k] += weights[j];
            if w[k] >= probs[k] {
                break;
            }
        }
        if w[k] >= probs[k] && sets[k].len() > 1 {
            let j = *sets[k].last().expect("nonempty");
            if (probs[k] - (w[k] - weights[j])).abs() < (probs[k] - w[k]).abs() {
                sets[k].pop();
                w[k] -= weights[j];
                aside.push(j);
            }
        }
    }
    aside.extend(pool);
    if !aside.is_empty() {
        let m = (0..d_s)
            .max_by(|&a, &b| (probs[a] - w[a]).total_cmp(&(probs[b] - w[b])).then(b.cmp(&a)))
            .expect("d_s > 0");
        for j in aside {
            sets[m].push(j);
            w[m] += weights[j];
        }
    }

    let per_bin_error: Vec<f64> = (0..d_s).map(|k| (probs[k] - w[k]).abs()).collect();
    let total = per_bin_error.iter().sum();
    let assignment = PartitionAssignment::new(sets, d_e)?;
    let unassigned_weight = assignment
        .labels()
        .iter()
        .zip(weights)
        .filter(|(l, _)| l.is_none())
        .map(|(_, w)| w)
        .sum();
    Ok(GreedyResult {
        probs: probs.to_vec(),
        weights: weights.to_vec(),
        assignment,
        per_bin_error,
        total,
        unassigned_weight,
    })
}

/// `d_S / Z_E` with the lowest environment level gauged to zero.
pub fn theorem1_bound(d_s: usize, env_energies: &[f64], beta: InverseTemperature) -> f64 {
    let min = env_energies.iter().copied().fold(f64::INFINITY, f64::min);
    let z: f64 = match beta {
        InverseTemperature::Finite(b) => env_energies.iter().map(|h| (-b * (h - min)).exp()).sum(),
        InverseTemperature::Infinite => boltzmann_weights(env_energies, beta)
            .iter()
            .filter(|&&w| w > 0.0)
            .count() as f64,
    };
    d_s as f64 / z
}

/// Objective state `Σ_i p_i |i⟩⟨i| ⊗ Σ_{j∈C_i} (w_j/W_i) |ψ_j⟩⟨ψ_j|` built from
/// a greedy partition, and the trace distance of its environment marginal
/// from `γ_E`.
pub fn assemble_greedy_state(
    result: &GreedyResult,
    sys: &HamiltonianSpec,
    env: &HamiltonianSpec,
    beta: InverseTemperature,
) -> Result<(SbsState, f64)> {
    let p = boltzmann_weights(sys.energies(), beta);
    let w = boltzmann_weights(env.energies(), beta);
    for (name, ours, theirs) in [("system", &p, &result.probs), ("environment", &w, &result.weights)] {
        if ours.len() != theirs.len() {
            return Err(Error::DimensionMismatch {
                expected: theirs.len(),
                found: ours.len(),
            });
        }
        if ours.iter().zip(theirs.iter()).any(|(a, b)| (a - b).abs() > MATCH_TOL) {
            return Err(Error::InvalidParameter(format!(
                "{name} Gibbs weights do not match the partition instance"
            )));
        }
    }
    let conds = result
        .assignment
        .sets()
        .iter()
        .enumerate()
        .map(|(i, set)| {
            if set.is_empty() {
                return Err(Error::EmptyBin(i));
            }
            let total: f64 = set.iter().map(|&j| w[j]).sum();
            let mut c = vec![0.0; w.len()];
            for &j in set {
                c[j] = if total > 0.0 { w[j] / total } else { 1.0 / set.len() as f64 };
            }
            DensityOperator::from_spectral(&c, env.basis())
        })
        .collect::<Result<Vec<_>>>()?;
    let state = SbsState::new(p, sys.basis().clone(), vec![conds])?;
    let marginal = state.env_marginal(0);
    let gamma = gibbs_state(env, beta);
    let diff: HermitianOperator = marginal.operator().sub(gamma.operator())?;
    Ok((state, trace_norm(&diff)))
}
