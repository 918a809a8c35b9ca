use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{Matrix3, Vector3};

use thermobj::bounds::{
    deviation_bound, greedy_partition, macro_env_energies, macrofraction_bound, theorem1_bound,
    DeviationModel, MacrofractionVariant,
};
use thermobj::channels::{
    cnot_broadcast, gad_channel, point_channel, AffineBlochChannel, Channel, GadParams,
};
use thermobj::experiments::{self, ExperimentConfig};
use thermobj::gibbs::{boltzmann_weights, gibbs_state, InverseTemperature};
use thermobj::io::{self, BoundInstance};
use thermobj::operator::DensityOperator;
use thermobj::oracle::{assembled_product_distance, brute_force_partition, OracleReport};
use thermobj::sbs::{certify_sbs, Certificate, CERTIFY_TOL};

#[derive(Parser)]
#[command(name = "thermobj", version, about = "Thermal states versus objective states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide whether a state has spectrum broadcast structure.
    Certify(CertifyArgs),
    /// Quantum channels on states in matrix files.
    Channel {
        #[command(subcommand)]
        action: ChannelAction,
    },
    /// Evaluate a bound on the distance from thermal to objective states.
    Bound(BoundArgs),
    /// Compare a bound with a brute-force reference value.
    Oracle(BoundArgs),
    /// Seeded Monte Carlo sweeps.
    Experiments {
        #[command(subcommand)]
        action: ExperimentAction,
    },
    /// Gibbs state of a Hamiltonian file.
    Gibbs {
        #[arg(long)]
        hamiltonian: PathBuf,
        /// Inverse temperature; `inf` for the ground-state limit.
        #[arg(long)]
        beta: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CertifyArgs {
    /// Density matrix file.
    #[arg(long, conflicts_with = "sbs", requires = "dims")]
    state: Option<PathBuf>,
    /// Comma-separated subsystem dimensions, system first.
    #[arg(long, value_delimiter = ',')]
    dims: Vec<usize>,
    /// Objective state file; it is assembled and then certified.
    #[arg(long)]
    sbs: Option<PathBuf>,
    #[arg(long, default_value_t = CERTIFY_TOL)]
    tol: f64,
}

#[derive(Subcommand)]
enum ChannelAction {
    Apply(ApplyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ChannelKind {
    Point,
    Cnot,
    Gad,
    Affine,
}

#[derive(Args)]
struct ApplyArgs {
    #[arg(long, value_enum)]
    kind: ChannelKind,
    #[arg(long)]
    input: PathBuf,
    /// Output file; the state is printed when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Ground-state population of the damping fixed point.
    #[arg(long)]
    p: Option<f64>,
    /// Damping strength; may instead come from `--time` and `--occupation`.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, requires = "occupation")]
    time: Option<f64>,
    #[arg(long)]
    occupation: Option<f64>,
    /// Number of applications.
    #[arg(long, default_value_t = 1)]
    iters: usize,
    /// Target state file of the point channel.
    #[arg(long)]
    target: Option<PathBuf>,
    /// Nine comma-separated entries of the Bloch matrix, row by row.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    a: Vec<f64>,
    /// Three comma-separated entries of the Bloch translation.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    t: Vec<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundKind {
    Deviation,
    Macrofraction,
    Greedy,
    Theorem1,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long, value_enum)]
    kind: BoundKind,
    /// Macrofraction variant: as_printed, product_form or grouped_greedy.
    #[arg(long)]
    variant: Option<String>,
    /// Instance file of `key = value` lines.
    instance: PathBuf,
}

#[derive(Subcommand)]
enum ExperimentAction {
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Certify(args) => certify(args),
        Command::Channel {
            action: ChannelAction::Apply(args),
        } => apply(args),
        Command::Bound(args) => bound(args),
        Command::Oracle(args) => oracle(args),
        Command::Experiments {
            action: ExperimentAction::Run { config, out },
        } => run_experiment(&config, &out),
        Command::Gibbs {
            hamiltonian,
            beta,
            output,
        } => {
            let h = io::parse_hamiltonian(&read(&hamiltonian)?)?;
            let beta: InverseTemperature = beta.parse()?;
            emit_state(&gibbs_state(&h, beta), output.as_deref())
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit_state(rho: &DensityOperator, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => io::write_state(rho, p).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{}", io::format_state(rho)),
    }
    Ok(())
}

fn certify(args: CertifyArgs) -> Result<()> {
    let (rho, dims) = match (&args.state, &args.sbs) {
        (Some(path), None) => (io::parse_state(&read(path)?)?, args.dims.clone()),
        (None, Some(path)) => {
            let st = io::parse_sbs(&read(path)?)?;
            (st.assemble(), st.dims())
        }
        _ => bail!("give either --state with --dims, or --sbs"),
    };
    match certify_sbs(&rho, &dims, args.tol)? {
        Certificate::Objective(st) => {
            println!("yes");
            let p: Vec<String> = st.probs().iter().map(|p| format!("{p:.12}")).collect();
            println!("pointer probabilities: {}", p.join(" "));
        }
        Certificate::NotObjective(w) => {
            println!("no");
            println!("witness: {w}");
        }
    }
    Ok(())
}

fn apply(args: ApplyArgs) -> Result<()> {
    let mut rho = io::parse_state(&read(&args.input)?)?;
    let channel: Box<dyn Channel> = match args.kind {
        ChannelKind::Cnot => {
            for _ in 0..args.iters {
                rho = cnot_broadcast(&rho)?;
            }
            return emit_state(&rho, args.output.as_deref());
        }
        ChannelKind::Point => {
            let target = args.target.as_ref().context("point channel needs --target")?;
            Box::new(point_channel(io::parse_state(&read(target)?)?))
        }
        ChannelKind::Gad => {
            let p = args.p.context("gad needs --p")?;
            let params = match (args.eta, args.time, args.occupation) {
                (Some(eta), None, _) => GadParams::new(p, eta)?,
                (None, Some(t), Some(n)) => GadParams::from_time(p, t, n)?,
                (Some(eta), Some(t), Some(n)) => GadParams::with_time(p, eta, t, n)?,
                _ => bail!("gad needs --eta or --time with --occupation"),
            };
            Box::new(gad_channel(params)?)
        }
        ChannelKind::Affine => {
            if args.a.len() != 9 || args.t.len() != 3 {
                bail!("affine needs --a with 9 entries and --t with 3");
            }
            Box::new(AffineBlochChannel::new(
                Matrix3::from_row_slice(&args.a),
                Vector3::from_column_slice(&args.t),
            )?)
        }
    };
    for _ in 0..args.iters {
        rho = channel.apply(&rho)?;
    }
    emit_state(&rho, args.output.as_deref())
}

fn models(inst: &BoundInstance) -> Result<Vec<DeviationModel>> {
    if inst.energies.is_empty() || inst.deviations.is_empty() {
        bail!("instance needs `energies` and `deviations`");
    }
    inst.deviations
        .iter()
        .map(|d| {
            DeviationModel::new(inst.energies.clone(), inst.shift, d.clone(), inst.beta)
                .map_err(Into::into)
        })
        .collect()
}

fn single_model(inst: &BoundInstance) -> Result<DeviationModel> {
    let mut m = models(inst)?;
    if m.len() != 1 {
        bail!("deviation bound takes one subenvironment, found {}", m.len());
    }
    Ok(m.remove(0))
}

/// Environment levels for the partition bounds: `env_energies` if given,
/// otherwise the combined levels of the deviated subenvironments.
fn partition_env(inst: &BoundInstance) -> Result<Vec<f64>> {
    match &inst.env_energies {
        Some(h) => Ok(h.clone()),
        None => Ok(macro_env_energies(&models(inst)?)),
    }
}

fn variants(arg: &Option<String>) -> Result<Vec<MacrofractionVariant>> {
    match arg {
        Some(v) => Ok(vec![v.parse()?]),
        None => Ok(MacrofractionVariant::ALL.to_vec()),
    }
}

fn bound(args: BoundArgs) -> Result<()> {
    let inst = BoundInstance::parse(&read(&args.instance)?)?;
    match args.kind {
        BoundKind::Deviation => println!("bound: {}", deviation_bound(&single_model(&inst)?)),
        BoundKind::Macrofraction => {
            let ms = models(&inst)?;
            for v in variants(&args.variant)? {
                println!("{v}: {}", macrofraction_bound(&ms, v)?);
            }
        }
        BoundKind::Greedy => {
            let r = greedy_partition(&inst.pointer_probs()?, &partition_env(&inst)?, inst.beta)?;
            println!("bound: {}", r.total);
            println!("assignment: {}", r.assignment);
        }
        BoundKind::Theorem1 => {
            let d_s = inst.pointer_probs()?.len();
            println!("bound: {}", theorem1_bound(d_s, &partition_env(&inst)?, inst.beta));
        }
    }
    Ok(())
}

fn oracle(args: BoundArgs) -> Result<()> {
    let inst = BoundInstance::parse(&read(&args.instance)?)?;
    let env_levels = |ms: &[DeviationModel]| -> Vec<Vec<f64>> {
        ms.iter().map(DeviationModel::env_energies).collect()
    };
    let partition_oracle = |label: &str, tested: f64| -> Result<OracleReport> {
        let probs = inst.pointer_probs()?;
        let weights = boltzmann_weights(&partition_env(&inst)?, inst.beta);
        let (best, total) = brute_force_partition(&probs, &weights)?;
        Ok(OracleReport::new(format!("{label}; optimal assignment {best}"), total, tested))
    };
    let report = match args.kind {
        BoundKind::Deviation => {
            let m = single_model(&inst)?;
            let oracle = assembled_product_distance(&inst.energies, &env_levels(std::slice::from_ref(&m)), inst.beta)?;
            OracleReport::new("deviation bound vs assembled diagonal states", oracle, deviation_bound(&m))
        }
        BoundKind::Macrofraction => {
            let ms = models(&inst)?;
            let v = match &args.variant {
                Some(v) => v.parse()?,
                None => MacrofractionVariant::ProductForm,
            };
            let tested = macrofraction_bound(&ms, v)?;
            match v {
                MacrofractionVariant::ProductForm => OracleReport::new(
                    format!("{v} macrofraction of {} vs assembled diagonal states", ms.len()),
                    assembled_product_distance(&inst.energies, &env_levels(&ms), inst.beta)?,
                    tested,
                ),
                MacrofractionVariant::GroupedGreedy => {
                    partition_oracle(&format!("{v} macrofraction of {} vs exhaustive partition", ms.len()), tested)?
                }
                MacrofractionVariant::AsPrinted => bail!("no reference value for the as_printed variant"),
            }
        }
        BoundKind::Greedy => {
            let r = greedy_partition(&inst.pointer_probs()?, &partition_env(&inst)?, inst.beta)?;
            partition_oracle(&format!("greedy assignment {}", r.assignment), r.total)?
        }
        BoundKind::Theorem1 => {
            let d_s = inst.pointer_probs()?.len();
            let tested = theorem1_bound(d_s, &partition_env(&inst)?, inst.beta);
            partition_oracle("d_S/Z_E vs exhaustive partition", tested)?
        }
    };
    println!("{report}");
    Ok(())
}

fn run_experiment(config: &Path, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::parse(&read(config)?)?;
    let table = experiments::run(&cfg)?;
    let files = experiments::write_outputs(&cfg, &table, out)?;
    for row in &table.rows {
        println!(
            "{:<14} {:>6} mean {:.6e} stderr {:.2e}",
            row.variant, row.grid_value, row.mean, row.stderr
        );
    }
    println!("wrote {}", files.csv.display());
    println!("wrote {}", files.svg.display());
    println!("wrote {}", files.config.display());
    Ok(())
}
