//! Seeded Monte Carlo sweeps of the deviation and macrofraction bounds, with
//! CSV and SVG output.

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::bounds::{
    deviation_bound, grouped_greedy_profile, macrofraction_bound, DeviationModel,
    MacrofractionVariant,
};
use crate::error::{Error, Result};
use crate::gibbs::InverseTemperature;

/// Stream index reserved for macrofraction trials, keeping them apart from
/// the `(grid index, trial)` streams of the sigma sweep.
const MACRO_STREAM_TAG: u64 = 1 << 63;

pub const CSV_HEADER: [&str; 7] = [
    "grid_value",
    "mean",
    "stderr",
    "variant",
    "trials",
    "beta",
    "seed",
];

/// Variant label used in tables of the sigma sweep.
pub const DEVIATION_LABEL: &str = "deviation";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Deviation bound against the spread `σ` of the level errors.
    SigmaSweep,
    /// Macrofraction bounds against the number of grouped subenvironments.
    MacrofractionSweep,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::SigmaSweep => "sigma_sweep",
            ExperimentKind::MacrofractionSweep => "macrofraction_sweep",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sigma_sweep" => Ok(ExperimentKind::SigmaSweep),
            "macrofraction_sweep" => Ok(ExperimentKind::MacrofractionSweep),
            other => Err(Error::InvalidParameter(format!("unknown experiment kind {other}"))),
        }
    }
}

/// Whether trials run on the rayon pool or on the calling thread. Both give
/// identical tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Serial,
    Parallel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub beta: f64,
    pub d_s: usize,
    /// Dimension of each subenvironment; must equal `d_s`, since each
    /// environment copies the system spectrum up to errors.
    pub d_e: usize,
    /// Values of `σ` (sigma sweep) or of the group size (macrofraction sweep).
    pub grid: Vec<f64>,
    pub trials: usize,
    /// Spread of the level errors in the macrofraction sweep.
    pub sigma: f64,
    pub base_energies: Vec<f64>,
    pub seed: u64,
    /// Bounds evaluated by the macrofraction sweep.
    pub variants: Vec<MacrofractionVariant>,
}

impl ExperimentConfig {
    /// Qubits at `β = 1` with `E = (0, 1)`, `σ ∈ {0, 0.025, …, 0.25}` and
    /// 1000 trials per point.
    pub fn sigma_sweep() -> Self {
        Self {
            kind: ExperimentKind::SigmaSweep,
            beta: 1.0,
            d_s: 2,
            d_e: 2,
            grid: (0..=10).map(|k| k as f64 * 0.025).collect(),
            trials: 1000,
            sigma: 0.05,
            base_energies: vec![0.0, 1.0],
            seed: 0,
            variants: vec![],
        }
    }

    /// Qubits at `β = 1` with `E = (0, 1)`, `σ = 0.05`, group sizes 1..8 and
    /// 500 trials per point.
    pub fn macrofraction_sweep() -> Self {
        Self {
            kind: ExperimentKind::MacrofractionSweep,
            grid: (1..=8).map(f64::from).collect(),
            trials: 500,
            variants: MacrofractionVariant::ALL.to_vec(),
            ..Self::sigma_sweep()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.grid.is_empty() {
            return bad("grid is empty".into());
        }
        if self.grid.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite);
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("grid must be strictly increasing".into());
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return bad(format!("beta must be finite and nonnegative, got {}", self.beta));
        }
        if self.base_energies.len() != self.d_s {
            return bad(format!(
                "{} base energies for system dimension {}",
                self.base_energies.len(),
                self.d_s
            ));
        }
        if self.d_e != self.d_s {
            return bad(format!(
                "environment dimension {} must equal system dimension {}",
                self.d_e, self.d_s
            ));
        }
        match self.kind {
            ExperimentKind::SigmaSweep => {
                if self.grid.iter().any(|&s| s < 0.0) {
                    return bad("sigma values must be nonnegative".into());
                }
            }
            ExperimentKind::MacrofractionSweep => {
                if self.grid.iter().any(|&n| n < 1.0 || n.fract() != 0.0) {
                    return bad("group sizes must be positive integers".into());
                }
                if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
                    return bad(format!("sigma must be nonnegative, got {}", self.sigma));
                }
                if self.variants.is_empty() {
                    return bad("no macrofraction variants requested".into());
                }
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment. Keys not given keep
    /// the defaults of the chosen `kind`, which must come first.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg: Option<Self> = None;
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(line_no, "expected key = value"))?;
            let (key, value) = (key.trim(), value.trim());
            let err = |e: Error| Error::parse(line_no, format!("{key}: {e}"));
            if key == "kind" {
                cfg = Some(match value.parse::<ExperimentKind>().map_err(err)? {
                    ExperimentKind::SigmaSweep => Self::sigma_sweep(),
                    ExperimentKind::MacrofractionSweep => Self::macrofraction_sweep(),
                });
                continue;
            }
            let c = cfg
                .as_mut()
                .ok_or_else(|| Error::parse(line_no, "`kind` must be set first"))?;
            match key {
                "beta" => c.beta = parse_num(value).map_err(err)?,
                "d_s" => c.d_s = parse_num(value).map_err(err)?,
                "d_e" => c.d_e = parse_num(value).map_err(err)?,
                "grid" => c.grid = parse_list(value).map_err(err)?,
                "trials" => c.trials = parse_num(value).map_err(err)?,
                "sigma" => c.sigma = parse_num(value).map_err(err)?,
                "energies" => c.base_energies = parse_list(value).map_err(err)?,
                "seed" => c.seed = parse_num(value).map_err(err)?,
                "variants" => {
                    c.variants = value
                        .split(',')
                        .map(str::parse)
                        .collect::<Result<Vec<_>>>()
                        .map_err(err)?
                }
                _ => return Err(Error::parse(line_no, format!("unknown key {key}"))),
            }
        }
        let cfg = cfg.ok_or_else(|| Error::parse(0, "missing `kind`"))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_num<T: FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::InvalidParameter(format!("not a number: {s}")))
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|x| parse_num(x.trim())).collect()
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "kind = {}", self.kind.name())?;
        writeln!(f, "beta = {}", self.beta)?;
        writeln!(f, "d_s = {}", self.d_s)?;
        writeln!(f, "d_e = {}", self.d_e)?;
        writeln!(f, "grid = {}", join(&self.grid))?;
        writeln!(f, "trials = {}", self.trials)?;
        writeln!(f, "sigma = {}", self.sigma)?;
        writeln!(f, "energies = {}", join(&self.base_energies))?;
        writeln!(f, "seed = {}", self.seed)?;
        if self.kind == ExperimentKind::MacrofractionSweep {
            writeln!(f, "variants = {}", join(&self.variants))?;
        }
        Ok(())
    }
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// One evaluated bound.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub grid_value: f64,
    pub trial: usize,
    /// Sampled errors, subenvironment-major for macrofractions.
    pub deviations: Vec<f64>,
    pub variant: String,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub grid_value: f64,
    pub mean: f64,
    pub stderr: f64,
    pub variant: String,
    pub trials: usize,
    pub beta: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultTable {
    pub kind: ExperimentKind,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    /// Rows of one variant, in grid order.
    pub fn series(&self, variant: &str) -> Vec<&ResultRow> {
        self.rows.iter().filter(|r| r.variant == variant).collect()
    }

    /// Distinct variants in order of first appearance.
    pub fn variants(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.variant) {
                out.push(r.variant.clone());
            }
        }
        out
    }
}

/// Independent generator for one `(seed, stream)` pair.
fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normals(rng: &mut ChaCha8Rng, n: usize, sigma: f64) -> Vec<f64> {
    (0..n)
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn map_trials<T: Send>(
    exec: Execution,
    n: usize,
    f: impl Fn(usize) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    match exec {
        Execution::Serial => (0..n).map(f).collect(),
        Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
    }
}

/// Mean and standard error `s/√n` with the `n − 1` sample deviation.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn aggregate(cfg: &ExperimentConfig, records: &[TrialRecord], variants: &[String]) -> ResultTable {
    let mut rows = Vec::new();
    for v in variants {
        for &g in &cfg.grid {
            let xs: Vec<f64> = records
                .iter()
                .filter(|r| r.grid_value == g && &r.variant == v)
                .map(|r| r.bound)
                .collect();
            let (mean, stderr) = mean_stderr(&xs);
            rows.push(ResultRow {
                grid_value: g,
                mean,
                stderr,
                variant: v.clone(),
                trials: cfg.trials,
                beta: cfg.beta,
                seed: cfg.seed,
            });
        }
    }
    ResultTable {
        kind: cfg.kind,
        rows,
    }
}

/// Every trial of a sigma sweep. Trial `t` at grid index `g` draws from the
/// stream `(g << 32) | t` of the configured seed.
pub fn sigma_sweep_records(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<TrialRecord>> {
    check_kind(cfg, ExperimentKind::SigmaSweep)?;
    let beta = InverseTemperature::finite(cfg.beta)?;
    let per_grid = map_trials(exec, cfg.grid.len() * cfg.trials, |n| {
        let (g, t) = (n / cfg.trials, n % cfg.trials);
        let sigma = cfg.grid[g];
        let mut rng = trial_rng(cfg.seed, ((g as u64) << 32) | t as u64);
        let deviations = normals(&mut rng, cfg.d_s, sigma);
        let model = DeviationModel::new(cfg.base_energies.clone(), 0.0, deviations.clone(), beta)?;
        Ok(TrialRecord {
            grid_value: sigma,
            trial: t,
            deviations,
            variant: DEVIATION_LABEL.into(),
            bound: deviation_bound(&model),
        })
    })?;
    Ok(per_grid)
}

pub fn run_sigma_sweep(cfg: &ExperimentConfig) -> Result<ResultTable> {
    run_sigma_sweep_with(cfg, Execution::Parallel)
}

pub fn run_sigma_sweep_with(cfg: &ExperimentConfig, exec: Execution) -> Result<ResultTable> {
    let records = sigma_sweep_records(cfg, exec)?;
    Ok(aggregate(cfg, &records, &[DEVIATION_LABEL.to_string()]))
}

/// Every trial of a macrofraction sweep. Trial `t` draws the errors of
/// subenvironments `1, 2, …` in order from one stream, so the subenvironment
/// lists for different group sizes are nested within a trial.
pub fn macrofraction_sweep_records(
    cfg: &ExperimentConfig,
    exec: Execution,
) -> Result<Vec<TrialRecord>> {
    check_kind(cfg, ExperimentKind::MacrofractionSweep)?;
    let beta = InverseTemperature::finite(cfg.beta)?;
    let n_max = cfg.grid.iter().copied().fold(1.0, f64::max) as usize;
    let d = cfg.d_s;
    let per_trial = map_trials(exec, cfg.trials, |t| {
        let mut rng = trial_rng(cfg.seed, MACRO_STREAM_TAG | t as u64);
        let all = normals(&mut rng, n_max * d, cfg.sigma);
        let models = all
            .chunks(d)
            .map(|dev| DeviationModel::new(cfg.base_energies.clone(), 0.0, dev.to_vec(), beta))
            .collect::<Result<Vec<_>>>()?;
        let profile = if cfg.variants.contains(&MacrofractionVariant::GroupedGreedy) {
            grouped_greedy_profile(&models)?
        } else {
            Vec::new()
        };
        let mut out = Vec::new();
        for &g in &cfg.grid {
            let n = g as usize;
            for &v in &cfg.variants {
                let bound = match v {
                    MacrofractionVariant::GroupedGreedy => profile[n - 1],
                    _ => macrofraction_bound(&models[..n], v)?,
                };
                out.push(TrialRecord {
                    grid_value: g,
                    trial: t,
                    deviations: all[..n * d].to_vec(),
                    variant: v.name().into(),
                    bound,
                });
            }
        }
        Ok(out)
    })?;
    Ok(per_trial.into_iter().flatten().collect())
}

pub fn run_macrofraction_sweep(cfg: &ExperimentConfig) -> Result<ResultTable> {
    run_macrofraction_sweep_with(cfg, Execution::Parallel)
}

pub fn run_macrofraction_sweep_with(cfg: &ExperimentConfig, exec: Execution) -> Result<ResultTable> {
    let records = macrofraction_sweep_records(cfg, exec)?;
    let variants: Vec<String> = cfg.variants.iter().map(|v| v.name().to_string()).collect();
    Ok(aggregate(cfg, &records, &variants))
}

pub fn run(cfg: &ExperimentConfig) -> Result<ResultTable> {
    run_with(cfg, Execution::Parallel)
}

pub fn run_with(cfg: &ExperimentConfig, exec: Execution) -> Result<ResultTable> {
    cfg.validate()?;
    match cfg.kind {
        ExperimentKind::SigmaSweep => run_sigma_sweep_with(cfg, exec),
        ExperimentKind::MacrofractionSweep => run_macrofraction_sweep_with(cfg, exec),
    }
}

fn check_kind(cfg: &ExperimentConfig, want: ExperimentKind) -> Result<()> {
    if cfg.kind != want {
        return Err(Error::InvalidParameter(format!(
            "expected a {} configuration, got {}",
            want.name(),
            cfg.kind.name()
        )));
    }
    cfg.validate()
}

fn empty_table() -> Error {
    Error::InvalidParameter("table has no rows".into())
}

pub fn csv_string(table: &ResultTable) -> Result<String> {
    if table.rows.is_empty() {
        return Err(empty_table());
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in &table.rows {
        w.write_record([
            r.grid_value.to_string(),
            r.mean.to_string(),
            r.stderr.to_string(),
            r.variant.clone(),
            r.trials.to_string(),
            r.beta.to_string(),
            r.seed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("ASCII output"))
}

pub fn emit_csv(table: &ResultTable, path: &Path) -> Result<()> {
    std::fs::write(path, csv_string(table)?)?;
    Ok(())
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 400.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn axis_label(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::SigmaSweep => "sigma",
        ExperimentKind::MacrofractionSweep => "subenvironments per macrofraction",
    }
}

/// Line plot of mean against grid value, one polyline per variant.
pub fn svg_string(table: &ResultTable) -> Result<String> {
    if table.rows.is_empty() {
        return Err(empty_table());
    }
    let (x_min, x_max) = min_max(table.rows.iter().map(|r| r.grid_value));
    let (_, y_max) = min_max(table.rows.iter().map(|r| r.mean));
    let y_top = if y_max > 0.0 { y_max * 1.05 } else { 1.0 };
    let x_span = if x_max > x_min { x_max - x_min } else { 1.0 };
    let plot_w = SVG_W - MARGIN_L - MARGIN_R;
    let plot_h = SVG_H - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + (x - x_min) / x_span * plot_w;
    let py = |y: f64| MARGIN_T + plot_h - y / y_top * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, y0, x1, y1) = (MARGIN_L, MARGIN_T + plot_h, MARGIN_L + plot_w, MARGIN_T);
    let _ = writeln!(
        s,
        r#"<path d="M{x0:.3},{y1:.3} L{x0:.3},{y0:.3} L{x1:.3},{y0:.3}" fill="none" stroke="black"/>"#
    );
    for (v, label) in [(x_min, x_min), (x_max, x_max)] {
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{:.3}" font-size="11" text-anchor="middle">{label}</text>"#,
            px(v),
            y0 + 15.0
        );
    }
    for v in [0.0, y_top] {
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{:.3}" font-size="11" text-anchor="end">{:.4}</text>"#,
            x0 - 5.0,
            py(v) + 4.0,
            v
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.3}" y="{:.3}" font-size="13" text-anchor="middle">{}</text>"#,
        MARGIN_L + plot_w / 2.0,
        SVG_H - 12.0,
        axis_label(table.kind)
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.3}" font-size="13" text-anchor="middle" transform="rotate(-90 15 {:.3})">mean bound</text>"#,
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0
    );
    for (k, v) in table.variants().iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = table
            .series(v)
            .iter()
            .map(|r| format!("{:.3},{:.3}", px(r.grid_value), py(r.mean)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline data-variant="{v}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            points.join(" ")
        );
        let ly = MARGIN_T + 15.0 + 18.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{ly:.3}" font-size="12" fill="{color}">{v}</text>"#,
            x1 + 10.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn min_max(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(x), hi.max(x))
    })
}

pub fn emit_svg_lineplot(table: &ResultTable, path: &Path) -> Result<()> {
    std::fs::write(path, svg_string(table)?)?;
    Ok(())
}

/// Paths written by [`write_outputs`].
#[derive(Clone, Debug, PartialEq)]
pub struct OutputFiles {
    pub csv: PathBuf,
    pub svg: PathBuf,
    pub config: PathBuf,
}

/// Writes `<kind>.csv`, `<kind>.svg` and the resolved configuration as
/// `<kind>.config` into `dir`, creating it if needed.
pub fn write_outputs(cfg: &ExperimentConfig, table: &ResultTable, dir: &Path) -> Result<OutputFiles> {
    std::fs::create_dir_all(dir)?;
    let name = cfg.kind.name();
    let files = OutputFiles {
        csv: dir.join(format!("{name}.csv")),
        svg: dir.join(format!("{name}.svg")),
        config: dir.join(format!("{name}.config")),
    };
    emit_csv(table, &files.csv)?;
    emit_svg_lineplot(table, &files.svg)?;
    std::fs::write(&files.config, cfg.to_string())?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_sigma() -> ExperimentConfig {
        ExperimentConfig {
            grid: vec![0.0, 0.05, 0.1],
            trials: 50,
            seed: 7,
            ..ExperimentConfig::sigma_sweep()
        }
    }

    fn small_macro() -> ExperimentConfig {
        ExperimentConfig {
            grid: vec![1.0, 2.0, 3.0],
            trials: 40,
            seed: 3,
            ..ExperimentConfig::macrofraction_sweep()
        }
    }

    #[test]
    fn zero_sigma_gives_zero() {
        let t = run_sigma_sweep(&small_sigma()).unwrap();
        assert_eq!(t.rows[0].mean, 0.0);
        assert_eq!(t.rows[0].stderr, 0.0);
        assert!(t.rows[1].mean > 0.0);
    }

    #[test]
    fn serial_equals_parallel() {
        for cfg in [small_sigma(), small_macro()] {
            let a = run_with(&cfg, Execution::Serial).unwrap();
            let b = run_with(&cfg, Execution::Parallel).unwrap();
            assert_eq!(a, b);
            assert_eq!(csv_string(&a).unwrap(), csv_string(&b).unwrap());
        }
    }

    #[test]
    fn zero_spread_macrofraction() {
        let cfg = ExperimentConfig {
            sigma: 0.0,
            ..small_macro()
        };
        let t = run(&cfg).unwrap();
        for r in t.series("product_form") {
            assert_eq!(r.mean, 0.0);
        }
        for r in t.series("grouped_greedy") {
            assert!(r.mean < 1e-15);
        }
    }

    #[test]
    fn macro_models_are_nested() {
        let cfg = small_macro();
        let recs = macrofraction_sweep_records(&cfg, Execution::Serial).unwrap();
        let by = |n: f64| {
            recs.iter()
                .find(|r| r.trial == 5 && r.grid_value == n)
                .unwrap()
                .deviations
                .clone()
        };
        assert_eq!(by(3.0)[..2], by(1.0)[..]);
        assert_eq!(by(3.0)[..4], by(2.0)[..]);
    }

    #[test]
    fn means_in_trace_distance_range() {
        for cfg in [small_sigma(), small_macro()] {
            // the as-printed sum form adds unnormalized weights, so it can exceed 2
            for r in run(&cfg).unwrap().rows.iter().filter(|r| r.variant != "as_printed") {
                assert!((0.0..=2.0).contains(&r.mean), "{r:?}");
            }
        }
    }

    #[test]
    fn stderr_formula() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let cfg = ExperimentConfig {
            grid: vec![0.1],
            trials: 3,
            ..small_sigma()
        };
        let t = run(&cfg).unwrap();
        let s = csv_string(&t).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "grid_value,mean,stderr,variant,trials,beta,seed");
        assert!(lines[1].starts_with("0.1,"));
        assert!(lines[1].ends_with(",deviation,3,1,7"));
        assert_eq!(s, csv_string(&run(&cfg).unwrap()).unwrap());
    }

    #[test]
    fn svg_has_one_polyline_per_variant() {
        let t = run(&small_macro()).unwrap();
        let s = svg_string(&t).unwrap();
        assert_eq!(s.matches("<polyline").count(), 3);
        assert!(s.contains("mean bound"));
        assert_eq!(s, svg_string(&t).unwrap());
        let empty = ResultTable {
            kind: ExperimentKind::SigmaSweep,
            rows: vec![],
        };
        assert!(svg_string(&empty).is_err());
        assert!(csv_string(&empty).is_err());
    }

    #[test]
    fn config_round_trip() {
        for cfg in [small_sigma(), small_macro()] {
            let text = cfg.to_string();
            assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn config_parsing() {
        let cfg = ExperimentConfig::parse(
            "# sweep\nkind = macrofraction_sweep\ntrials = 10 # few\nvariants = product_form\n",
        )
        .unwrap();
        assert_eq!(cfg.trials, 10);
        assert_eq!(cfg.variants, vec![MacrofractionVariant::ProductForm]);
        assert_eq!(cfg.grid.len(), 8);

        assert!(matches!(
            ExperimentConfig::parse("trials = 3\nkind = sigma_sweep"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse("kind = sigma_sweep\ncolour = red"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(ExperimentConfig::parse("kind = sigma_sweep\ngrid = 0.1, 0.05").is_err());
        assert!(ExperimentConfig::parse("kind = sigma_sweep\ntrials = 0").is_err());
        assert!(ExperimentConfig::parse("kind = macrofraction_sweep\ngrid = 1.5").is_err());
        assert!(ExperimentConfig::parse("kind = sigma_sweep\nd_e = 3").is_err());
    }

    #[test]
    fn wrong_kind_rejected() {
        assert!(run_sigma_sweep(&small_macro()).is_err());
        assert!(run_macrofraction_sweep(&small_sigma()).is_err());
    }

    #[test]
    fn outputs_written() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_sigma();
        let t = run(&cfg).unwrap();
        let files = write_outputs(&cfg, &t, &dir.path().join("out")).unwrap();
        assert!(files.csv.ends_with("sigma_sweep.csv"));
        let echoed = std::fs::read_to_string(&files.config).unwrap();
        assert_eq!(ExperimentConfig::parse(&echoed).unwrap(), cfg);
        assert!(std::fs::read_to_string(&files.svg).unwrap().starts_with("<svg"));
        assert!(emit_csv(&t, &dir.path().join("missing/dir/x.csv")).is_err());
    }
}
