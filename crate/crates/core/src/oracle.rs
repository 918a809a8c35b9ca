//! Brute-force reference computations, kept independent of the bounds module
//! so that agreement between the two is evidence rather than repetition.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gibbs::{gibbs_state, HamiltonianSpec, InverseTemperature};
use crate::operator::{tensor_all, DensityOperator, MAX_DIM};
use crate::sbs::PartitionAssignment;

/// Largest environment dimension for [`brute_force_partition`].
pub const PARTITION_MAX_ENV: usize = 12;

/// Largest number of assignments [`brute_force_partition`] will scan.
pub const PARTITION_MAX_ASSIGNMENTS: u64 = 1 << 24;

/// Largest environment dimension for [`enumerate_inf_t`].
pub const ENUMERATE_MAX_ENV: usize = 8;

fn decode(mut code: u64, d_s: usize, labels: &mut [usize]) {
    for l in labels.iter_mut() {
        *l = (code % d_s as u64) as usize;
        code /= d_s as u64;
    }
}

fn assignment_count(d_s: usize, d_e: usize, max_env: usize) -> Result<u64> {
    if d_e > max_env {
        return Err(Error::OracleScaleExceeded(format!(
            "environment dimension {d_e} exceeds {max_env}"
        )));
    }
    (d_s as u64)
        .checked_pow(d_e as u32)
        .filter(|&n| n <= PARTITION_MAX_ASSIGNMENTS)
        .ok_or_else(|| {
            Error::OracleScaleExceeded(format!("{d_s}^{d_e} assignments exceed the scan limit"))
        })
}

/// Minimizes `Σ_k |p_k − Σ_{j∈C_k} w_j|` over every assignment of all
/// environment indices to nonempty bins. Ties go to the assignment whose
/// label sequence, read with index 0 least significant, is smallest.
pub fn brute_force_partition(
    probs: &[f64],
    weights: &[f64],
) -> Result<(PartitionAssignment, f64)> {
    let d_s = probs.len();
    let d_e = weights.len();
    if d_s == 0 {
        return Err(Error::InvalidParameter("no bins".into()));
    }
    if d_e < d_s {
        return Err(Error::EnvironmentTooSmall { d_s, d_e });
    }
    let count = assignment_count(d_s, d_e, PARTITION_MAX_ENV)?;
    let (total, code) = (0..count)
        .into_par_iter()
        .map_init(
            || (vec![0usize; d_e], vec![0.0f64; d_s], vec![0usize; d_s]),
            |(labels, w, n), code| {
                decode(code, d_s, labels);
                w.iter_mut().for_each(|x| *x = 0.0);
                n.iter_mut().for_each(|x| *x = 0);
                for (j, &l) in labels.iter().enumerate() {
                    w[l] += weights[j];
                    n[l] += 1;
                }
                if n.contains(&0) {
                    return (f64::INFINITY, code);
                }
                let total: f64 = probs.iter().zip(w.iter()).map(|(p, w)| (p - w).abs()).sum();
                (total, code)
            },
        )
        .reduce(
            || (f64::INFINITY, u64::MAX),
            |a, b| match a.0.total_cmp(&b.0) {
                std::cmp::Ordering::Less => a,
                std::cmp::Ordering::Greater => b,
                std::cmp::Ordering::Equal => {
                    if a.1 <= b.1 {
                        a
                    } else {
                        b
                    }
                }
            },
        );
    let mut labels = vec![0usize; d_e];
    decode(code, d_s, &mut labels);
    Ok((PartitionAssignment::from_labels(&labels, d_s)?, total))
}

/// `‖a − b‖₁` as the sum of singular values of the difference.
pub fn direct_trace_distance(a: &DensityOperator, b: &DensityOperator) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let diff = a.matrix() - b.matrix();
    Ok(diff.singular_values().iter().sum())
}

/// `‖⊗_k γ(H_k) − γ(H_S)^{⊗N}‖₁` for diagonal Hamiltonians, with every
/// Gibbs state built as an operator and the distance taken by
/// [`direct_trace_distance`]. `env_levels[k]` holds the levels of `H_k`.
pub fn assembled_product_distance(
    sys_levels: &[f64],
    env_levels: &[Vec<f64>],
    beta: InverseTemperature,
) -> Result<f64> {
    if env_levels.is_empty() {
        return Err(Error::InvalidParameter("no subenvironments".into()));
    }
    let gamma = |levels: &[f64]| -> Result<DensityOperator> {
        Ok(gibbs_state(&HamiltonianSpec::diagonal(levels.to_vec())?, beta))
    };
    let sys = gamma(sys_levels)?;
    let envs = env_levels
        .iter()
        .map(|h| gamma(h))
        .collect::<Result<Vec<_>>>()?;
    let dim = envs.iter().try_fold(1usize, |acc, e| acc.checked_mul(e.dim()));
    if dim.is_none_or(|d| d > MAX_DIM) {
        return Err(Error::OracleScaleExceeded("assembled operator too large".into()));
    }
    let sys_copies = vec![sys; envs.len()];
    let a = tensor_all(&envs).expect("at least one factor");
    let b = tensor_all(&sys_copies).expect("at least one factor");
    direct_trace_distance(&a, &b)
}

/// Number of ways to split `d_E` equally weighted environment levels into
/// `d_S` labelled groups each holding weight exactly `1/d_S`, by scanning all
/// `d_S^{d_E}` labelings.
pub fn enumerate_inf_t(d_s: usize, d_e: usize) -> Result<u64> {
    if d_s == 0 || d_e == 0 {
        return Err(Error::InvalidParameter("dimensions must be positive".into()));
    }
    let count = assignment_count(d_s, d_e, ENUMERATE_MAX_ENV)?;
    let mut labels = vec![0usize; d_e];
    let mut sizes = vec![0usize; d_s];
    let mut found = 0;
    for code in 0..count {
        decode(code, d_s, &mut labels);
        sizes.iter_mut().for_each(|x| *x = 0);
        labels.iter().for_each(|&l| sizes[l] += 1);
        // group weight n/d_E equals 1/d_S exactly when n·d_S = d_E
        if sizes.iter().all(|&n| n * d_s == d_e) {
            found += 1;
        }
    }
    Ok(found)
}

/// Comparison of a reference value with the value under test.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub instance: String,
    pub oracle: f64,
    pub tested: f64,
    pub gap: f64,
}

impl OracleReport {
    pub fn new(instance: impl Into<String>, oracle: f64, tested: f64) -> Self {
        Self {
            instance: instance.into(),
            oracle,
            tested,
            gap: (oracle - tested).abs(),
        }
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "instance: {}", self.instance)?;
        writeln!(f, "oracle:   {}", self.oracle)?;
        writeln!(f, "tested:   {}", self.tested)?;
        write!(f, "gap:      {:e}", self.gap)
    }
}
