//! Plain-text file formats for matrices, states, Hamiltonians, objective
//! states and bound instances.
//!
//! A matrix is written as a line `dim d` followed by `d` rows of `d`
//! whitespace-separated complex entries `a+bi`. Blank lines and lines starting
//! with `#` are ignored everywhere.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gibbs::{boltzmann_weights, HamiltonianSpec, InverseTemperature};
use crate::operator::{unitarity_error, CMatrix, DensityOperator, MAX_DIM};
use crate::sbs::SbsState;

/// Line cursor that skips blanks and comments and remembers line numbers.
struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        for (n, raw) in self.inner.by_ref() {
            self.last = n + 1;
            let line = raw.trim();
            if !line.is_empty() && !line.starts_with('#') {
                return Ok((n + 1, line));
            }
        }
        Err(Error::parse(self.last + 1, "unexpected end of input"))
    }

    fn finish(mut self) -> Result<()> {
        match self.next_line() {
            Ok((n, _)) => Err(Error::parse(n, "unexpected trailing content")),
            Err(_) => Ok(()),
        }
    }
}

/// Parses the words after `keyword` on one line.
fn keyword_line<'a>(lines: &mut Lines<'a>, keyword: &str) -> Result<(usize, Vec<&'a str>)> {
    let (n, line) = lines.next_line()?;
    let mut words = line.split_whitespace();
    if words.next() != Some(keyword) {
        return Err(Error::parse(n, format!("expected `{keyword}`")));
    }
    Ok((n, words.collect()))
}

fn parse_usize(n: usize, s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::parse(n, format!("not a nonnegative integer: {s}")))
}

fn parse_f64(n: usize, s: &str) -> Result<f64> {
    let x: f64 = s
        .parse()
        .map_err(|_| Error::parse(n, format!("not a number: {s}")))?;
    if !x.is_finite() {
        return Err(Error::parse(n, format!("not finite: {s}")));
    }
    Ok(x)
}

fn parse_reals(n: usize, words: &[&str]) -> Result<Vec<f64>> {
    words.iter().map(|w| parse_f64(n, w)).collect()
}

/// Parses `a`, `bi`, `a+bi`, `a-bi` or `a+-bi`, where `a` and `b` may use exponents
/// and `i` alone means a unit coefficient.
pub fn parse_complex(s: &str) -> Option<Complex64> {
    let b = s.as_bytes();
    let split = (1..b.len())
        .rev()
        .find(|&k| matches!(b[k], b'+' | b'-') && !matches!(b[k - 1], b'e' | b'E'));
    let imag = |t: &str| -> Option<f64> {
        match t.strip_suffix('i')? {
            "" | "+" => Some(1.0),
            "-" => Some(-1.0),
            x => x.parse().ok(),
        }
    };
    let z = match (split, s.ends_with('i')) {
        // `+-` is how a negative imaginary part is joined by some writers
        (Some(k), true) if k > 1 && b[k - 1] == b'+' => {
            Complex64::new(s[..k - 1].parse().ok()?, imag(&s[k..])?)
        }
        (Some(k), true) => Complex64::new(s[..k].parse().ok()?, imag(&s[k..])?),
        (_, true) => Complex64::new(0.0, imag(s)?),
        (_, false) => Complex64::new(s.parse().ok()?, 0.0),
    };
    (z.re.is_finite() && z.im.is_finite()).then_some(z)
}

/// `a+bi` with each part in shortest round-trip form.
pub fn format_complex(z: Complex64) -> String {
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{:?}{sign}{:?}i", z.re, z.im.abs())
}

fn read_matrix(lines: &mut Lines) -> Result<CMatrix> {
    let (n, words) = keyword_line(lines, "dim")?;
    let [d] = words[..] else {
        return Err(Error::parse(n, "expected `dim d`"));
    };
    let d = parse_usize(n, d)?;
    if d == 0 || d > MAX_DIM {
        return Err(Error::parse(n, format!("dimension {d} out of range")));
    }
    let mut m = CMatrix::zeros(d, d);
    for r in 0..d {
        let (n, line) = lines.next_line()?;
        let entries: Vec<&str> = line.split_whitespace().collect();
        if entries.len() != d {
            return Err(Error::parse(n, format!("expected {d} entries, found {}", entries.len())));
        }
        for (c, e) in entries.iter().enumerate() {
            m[(r, c)] = parse_complex(e)
                .ok_or_else(|| Error::parse(n, format!("not a finite complex number: {e}")))?;
        }
    }
    Ok(m)
}

fn write_matrix(out: &mut String, m: &CMatrix) {
    let _ = writeln!(out, "dim {}", m.nrows());
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format_complex(m[(r, c)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

/// Parses a single square matrix.
pub fn parse_matrix(text: &str) -> Result<CMatrix> {
    let mut lines = Lines::new(text);
    let m = read_matrix(&mut lines)?;
    lines.finish()?;
    Ok(m)
}

/// Formats a square matrix; entries are printed exactly, so parsing the
/// output gives back the same matrix.
pub fn format_matrix(m: &CMatrix) -> String {
    let mut s = String::new();
    write_matrix(&mut s, m);
    s
}

pub fn parse_state(text: &str) -> Result<DensityOperator> {
    DensityOperator::from_matrix(parse_matrix(text)?)
}

pub fn format_state(rho: &DensityOperator) -> String {
    format_matrix(rho.matrix())
}

pub fn read_state(path: &Path) -> Result<DensityOperator> {
    parse_state(&std::fs::read_to_string(path)?)
}

pub fn write_state(rho: &DensityOperator, path: &Path) -> Result<()> {
    std::fs::write(path, format_state(rho))?;
    Ok(())
}

/// `dim d`, a line of `d` energies, then the eigenvector matrix whose
/// columns pair with the energies in order.
pub fn parse_hamiltonian(text: &str) -> Result<HamiltonianSpec> {
    let mut lines = Lines::new(text);
    let (n, words) = keyword_line(&mut lines, "dim")?;
    let [d] = words[..] else {
        return Err(Error::parse(n, "expected `dim d`"));
    };
    let d = parse_usize(n, d)?;
    let (n, line) = lines.next_line()?;
    let energies = parse_reals(n, &line.split_whitespace().collect::<Vec<_>>())?;
    if energies.len() != d {
        return Err(Error::parse(n, format!("expected {d} energies, found {}", energies.len())));
    }
    let basis = read_matrix(&mut lines)?;
    lines.finish()?;
    HamiltonianSpec::new(energies, basis)
}

pub fn format_hamiltonian(h: &HamiltonianSpec) -> String {
    let mut s = format!("dim {}\n", h.dim());
    let e: Vec<String> = h.energies().iter().map(f64::to_string).collect();
    let _ = writeln!(s, "{}", e.join(" "));
    write_matrix(&mut s, h.basis());
    s
}

/// Objective state file:
///
/// ```text
/// sbs <n> <N>
/// dims <d_S> <d_E1> … <d_EN>
/// probs <p_1> … <p_n>
/// <d_S × d_S unitary whose first n columns are the pointer states>
/// <ρ_{E_1|1}> … <ρ_{E_1|n}> <ρ_{E_2|1}> … <ρ_{E_N|n}>
/// ```
pub fn parse_sbs(text: &str) -> Result<SbsState> {
    let mut lines = Lines::new(text);
    let (n0, words) = keyword_line(&mut lines, "sbs")?;
    let [n, big_n] = words[..] else {
        return Err(Error::parse(n0, "expected `sbs n N`"));
    };
    let (n, big_n) = (parse_usize(n0, n)?, parse_usize(n0, big_n)?);
    if n == 0 || big_n == 0 {
        return Err(Error::parse(n0, "n and N must be positive"));
    }
    let (n1, words) = keyword_line(&mut lines, "dims")?;
    let dims = words
        .iter()
        .map(|w| parse_usize(n1, w))
        .collect::<Result<Vec<_>>>()?;
    if dims.len() != big_n + 1 {
        return Err(Error::parse(n1, format!("expected {} dimensions", big_n + 1)));
    }
    if dims[0] < n {
        return Err(Error::parse(n1, format!("system dimension below {n} indices")));
    }
    let (n2, words) = keyword_line(&mut lines, "probs")?;
    let probs = parse_reals(n2, &words)?;
    if probs.len() != n {
        return Err(Error::parse(n2, format!("expected {n} probabilities")));
    }
    let basis = read_matrix(&mut lines)?;
    if basis.nrows() != dims[0] {
        return Err(Error::DimensionMismatch {
            expected: dims[0],
            found: basis.nrows(),
        });
    }
    let mut conds = Vec::with_capacity(big_n);
    for &d in &dims[1..] {
        let mut per = Vec::with_capacity(n);
        for _ in 0..n {
            let m = read_matrix(&mut lines)?;
            if m.nrows() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: m.nrows(),
                });
            }
            per.push(DensityOperator::from_matrix(m)?);
        }
        conds.push(per);
    }
    lines.finish()?;
    SbsState::new(probs, basis.columns(0, n).into_owned(), conds)
}

/// Writes the format read by [`parse_sbs`], completing the pointer states to
/// a unitary when there are fewer of them than system levels.
pub fn format_sbs(state: &SbsState) -> String {
    let n = state.num_indices();
    let mut s = format!("sbs {n} {}\n", state.num_subenvs());
    let dims: Vec<String> = state.dims().iter().map(usize::to_string).collect();
    let _ = writeln!(s, "dims {}", dims.join(" "));
    let p: Vec<String> = state.probs().iter().map(f64::to_string).collect();
    let _ = writeln!(s, "probs {}", p.join(" "));
    write_matrix(&mut s, &complete_unitary(state.sys_basis()));
    for k in 0..state.num_subenvs() {
        for rho in state.conditionals(k) {
            write_matrix(&mut s, rho.matrix());
        }
    }
    s
}

/// Extends orthonormal columns to a square unitary by Gram–Schmidt against
/// the standard basis.
fn complete_unitary(cols: &CMatrix) -> CMatrix {
    let d = cols.nrows();
    let mut out: Vec<nalgebra::DVector<Complex64>> =
        cols.column_iter().map(|c| c.into_owned()).collect();
    for e in 0..d {
        if out.len() == d {
            break;
        }
        let mut v = nalgebra::DVector::<Complex64>::zeros(d);
        v[e] = Complex64::new(1.0, 0.0);
        for u in &out {
            let proj = u.dotc(&v);
            v -= u * proj;
        }
        let norm = v.norm();
        if norm > 1e-6 {
            out.push(v / Complex64::new(norm, 0.0));
        }
    }
    let m = CMatrix::from_columns(&out);
    debug_assert!(unitarity_error(&m) < 1e-9);
    m
}

pub fn read_sbs(path: &Path) -> Result<SbsState> {
    parse_sbs(&std::fs::read_to_string(path)?)
}

/// Inputs to the bound calculations, read from `key = value` lines.
///
/// | key | meaning |
/// |---|---|
/// | `beta` | inverse temperature, `inf` allowed (default 1) |
/// | `energies` | system levels `E_i` |
/// | `shift` | uniform environment shift `c` (default 0) |
/// | `deviations` | errors `δ_i`, one comma list per subenvironment separated by `;` |
/// | `env_energies` | environment levels `h_j` for the partition bounds |
/// | `probs` | pointer probabilities; defaults to the Gibbs weights of `energies` |
#[derive(Clone, Debug, PartialEq)]
pub struct BoundInstance {
    pub beta: InverseTemperature,
    pub energies: Vec<f64>,
    pub shift: f64,
    pub deviations: Vec<Vec<f64>>,
    pub env_energies: Option<Vec<f64>>,
    pub probs: Option<Vec<f64>>,
}

impl Default for BoundInstance {
    fn default() -> Self {
        Self {
            beta: InverseTemperature::Finite(1.0),
            energies: Vec::new(),
            shift: 0.0,
            deviations: Vec::new(),
            env_energies: None,
            probs: None,
        }
    }
}

fn parse_list(n: usize, s: &str) -> Result<Vec<f64>> {
    s.split([',', ' ', '\t'])
        .filter(|w| !w.is_empty())
        .map(|w| parse_f64(n, w))
        .collect()
}

impl BoundInstance {
    pub fn parse(text: &str) -> Result<Self> {
        let mut inst = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(n, "expected key = value"))?;
            let value = value.trim();
            match key.trim() {
                "beta" => {
                    inst.beta = value
                        .parse()
                        .map_err(|e: Error| Error::parse(n, e.to_string()))?
                }
                "energies" => inst.energies = parse_list(n, value)?,
                "shift" => inst.shift = parse_f64(n, value)?,
                "deviations" => {
                    inst.deviations = value
                        .split(';')
                        .map(|part| parse_list(n, part))
                        .collect::<Result<_>>()?
                }
                "env_energies" => inst.env_energies = Some(parse_list(n, value)?),
                "probs" => inst.probs = Some(parse_list(n, value)?),
                other => return Err(Error::parse(n, format!("unknown key {other}"))),
            }
        }
        Ok(inst)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Pointer probabilities: `probs` if given, else the Gibbs weights of
    /// `energies`.
    pub fn pointer_probs(&self) -> Result<Vec<f64>> {
        match (&self.probs, self.energies.is_empty()) {
            (Some(p), _) => Ok(p.clone()),
            (None, false) => Ok(boltzmann_weights(&self.energies, self.beta)),
            (None, true) => Err(Error::InvalidParameter(
                "need `probs` or `energies`".into(),
            )),
        }
    }
}
