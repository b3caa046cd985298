//! Command-line front end.
//!
//! Six file-based workflows over the library: `solve` a model or FCIDUMP
//! into a ground-state chain, `spectrum` the bond singular values of a
//! stored chain, `project` a stored chain onto its leading modes,
//! `canonicalize` a chain into the closure gauge, `pair` spin rails into
//! spatial sites, and `ladder` the full basis-convergence study. Every
//! command is deterministic given its flags and seed; text artifacts carry
//! the tool version and a configuration hash so reruns can be diffed
//! byte for byte.
//!
//! Exit codes: 0 success, 2 bad usage or malformed input, 3 solver
//! failure, 4 file I/O failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::convergence::{run_ladder, write_spectrum_table, ConvergenceError, LadderConfig};
use crate::dmrg::{dmrg_ground_state, mpo_from_integrals, SweepConfig};
use crate::fock::FockSector;
use crate::hamiltonian::{build_model, ed_ground_state, HamiltonianError, HamiltonianOperator, ModelSpec};
use crate::mps::{CanonicalForm, Mps, MpsError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug)]
enum CliError {
    Usage(String),
    Solver(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Solver(_) => EXIT_SOLVER,
            CliError::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Solver(m) | CliError::Io(m) => m,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn io_err(context: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{context}: {e}"))
}

/// File-reading and format errors: I/O stays I/O, everything else is a
/// malformed input.
fn input_err(e: MpsError) -> CliError {
    match e {
        MpsError::Io(e) => CliError::Io(e.to_string()),
        other => CliError::Usage(other.to_string()),
    }
}

#[derive(Parser)]
#[command(
    name = "fockmps",
    version,
    about = "Exact matrix-product representations of fermionic states on growing basis chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a model's ground state and store the resulting chain
    Solve(SolveArgs),
    /// Print or store the singular-value spectrum of a stored chain at a bond
    Spectrum(SpectrumArgs),
    /// Expand the leading modes of a stored chain into basis amplitudes
    Project(ProjectArgs),
    /// Rewrite a stored chain in left-canonical closure gauge
    Canonicalize(CanonicalizeArgs),
    /// Contract spin-rail pairs of a stored chain into spatial sites
    Pair(PairArgs),
    /// Run the basis-ladder convergence study
    Ladder(LadderArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Model description, e.g. "hubbard:L=2,t=1,U=4" or "decay:L=8,seed=7"
    #[arg(long, conflicts_with = "fcidump")]
    model: Option<String>,
    /// FCIDUMP integral file
    #[arg(long)]
    fcidump: Option<PathBuf>,
    /// Electron count (default: one per spatial orbital)
    #[arg(long)]
    nelec: Option<usize>,
    /// Twice the spin projection (default: nelec mod 2)
    #[arg(long)]
    ms2: Option<i64>,
    /// Solver: "ed", "dmrg", or "auto" (exact up to --ed-max modes)
    #[arg(long, default_value = "auto")]
    solver: String,
    /// Largest chain the auto solver treats exactly
    #[arg(long, default_value_t = 20)]
    ed_max: usize,
    /// Bond cap for sweep runs
    #[arg(long, default_value_t = 32)]
    max_bond: usize,
    /// Sweep-energy convergence tolerance
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Sweep budget
    #[arg(long, default_value_t = 16)]
    sweeps: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output base path; writes <out>.mps and <out>.energy
    #[arg(long, default_value = "solve")]
    out: PathBuf,
}

#[derive(Args)]
struct SpectrumArgs {
    /// Stored chain to analyze
    #[arg(long)]
    input: PathBuf,
    /// Bond to cut at (1-based, interior)
    #[arg(long)]
    bond: usize,
    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProjectArgs {
    /// Stored chain to project
    #[arg(long)]
    input: PathBuf,
    /// Keep the state's weight on the leading `bond` modes
    #[arg(long)]
    bond: usize,
    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CanonicalizeArgs {
    /// Stored chain to rewrite
    #[arg(long)]
    input: PathBuf,
    /// Output chain file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PairArgs {
    /// Stored spin-resolved chain (even length)
    #[arg(long)]
    input: PathBuf,
    /// Output spatial chain file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LadderArgs {
    /// Directory for spectrum tables and the JSON report
    #[arg(long, default_value = "ladder_out")]
    out: PathBuf,
    /// Override the default model
    #[arg(long)]
    model: Option<String>,
    /// Chain lengths, comma separated
    #[arg(long, value_delimiter = ',')]
    basis: Option<Vec<usize>>,
    /// Bond caps, comma separated
    #[arg(long, value_delimiter = ',')]
    caps: Option<Vec<usize>>,
    #[arg(long)]
    probe: Option<usize>,
    #[arg(long)]
    nelec: Option<usize>,
    #[arg(long)]
    ms2: Option<i64>,
    /// Largest chain solved exactly
    #[arg(long)]
    ed_max: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Parse and dispatch; returns the process exit code. Help and version
/// requests exit 0, any other parse problem exits 2.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Solve(args) => cmd_solve(&args),
        Command::Spectrum(args) => cmd_spectrum(&args),
        Command::Project(args) => cmd_project(&args),
        Command::Canonicalize(args) => cmd_canonicalize(&args),
        Command::Pair(args) => cmd_pair(&args),
        Command::Ladder(args) => cmd_ladder(&args),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn sha_hex(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Two comment lines carried at the top of every text artifact.
fn metadata_header(config: &str) -> String {
    format!(
        "# fockmps {}\n# config {}\n",
        env!("CARGO_PKG_VERSION"),
        sha_hex(config)
    )
}

fn read_chain_file(path: &Path) -> CliResult<Mps> {
    let mut file = fs::File::open(path)
        .map_err(|e| io_err(&format!("cannot open {}", path.display()), e))?;
    Mps::read_from(&mut file).map_err(input_err)
}

fn write_chain_file(path: &Path, mps: &Mps) -> CliResult<()> {
    let mut file = fs::File::create(path)
        .map_err(|e| io_err(&format!("cannot create {}", path.display()), e))?;
    mps.write_to(&mut file)
        .map_err(|e| io_err(&format!("cannot write {}", path.display()), e))
}

/// Left-canonicalize a stored chain that arrives without a canonical form.
fn ensure_left(mps: Mps) -> CliResult<Mps> {
    if mps.canonical_form != CanonicalForm::None {
        return Ok(mps);
    }
    let cap = mps.max_bond_dim().max(1);
    let (left, _) = mps.truncate(cap).map_err(input_err)?;
    Ok(left)
}

/// Bring a stored chain all the way into the closure gauge.
fn ensure_gauge(mps: Mps) -> CliResult<Mps> {
    let left = ensure_left(mps)?;
    if left.canonical_form == CanonicalForm::ClosureGauge {
        return Ok(left);
    }
    let (gauged, _) = left.fix_closure_gauge().map_err(input_err)?;
    Ok(gauged)
}

fn write_text(out: &Option<PathBuf>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| io_err(&format!("cannot write {}", path.display()), e)),
        None => {
            print!("{text}");
            std::io::stdout().flush().map_err(|e| io_err("stdout", e))
        }
    }
}

fn resolve_model(model: &Option<String>, fcidump: &Option<PathBuf>) -> CliResult<ModelSpec> {
    match (model, fcidump) {
        (Some(text), None) => text
            .parse::<ModelSpec>()
            .map_err(|e| CliError::Usage(e.to_string())),
        (None, Some(path)) => {
            if !path.is_file() {
                return Err(CliError::Io(format!(
                    "FCIDUMP file not found: {}",
                    path.display()
                )));
            }
            Ok(ModelSpec::FciDump { path: path.clone() })
        }
        (None, None) => Err(CliError::Usage(
            "give a model with --model or integrals with --fcidump".into(),
        )),
        (Some(_), Some(_)) => unreachable!("clap enforces the exclusion"),
    }
}

fn cmd_solve(args: &SolveArgs) -> CliResult<()> {
    let spec = resolve_model(&args.model, &args.fcidump)?;
    let table = build_model(&spec).map_err(|e| match e {
        HamiltonianError::Io(e) => CliError::Io(e.to_string()),
        HamiltonianError::Parse { .. } | HamiltonianError::Model(_) => {
            CliError::Usage(e.to_string())
        }
        other => CliError::Solver(other.to_string()),
    })?;
    let modes = 2 * table.n_orb();
    let nelec = args.nelec.unwrap_or(table.n_orb());
    let ms2 = args.ms2.unwrap_or((nelec % 2) as i64);
    let sector = FockSector::new(modes, Some(nelec), Some(ms2))
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let exact = match args.solver.as_str() {
        "ed" => true,
        "dmrg" => false,
        "auto" => modes <= args.ed_max,
        other => {
            return Err(CliError::Usage(format!(
                "unknown solver \"{other}\" (expected ed, dmrg, or auto)"
            )))
        }
    };

    let config_line = format!(
        "solve;model={spec};nelec={nelec};ms2={ms2};solver={};edmax={};D={};tol={:e};sweeps={};seed={}",
        args.solver, args.ed_max, args.max_bond, args.tol, args.sweeps, args.seed
    );

    let (energy, chain, converged, solver_name) = if exact {
        let op = HamiltonianOperator::new(&table, sector)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let ground = ed_ground_state(&op).map_err(|e| CliError::Solver(e.to_string()))?;
        let (mps, _) = Mps::from_dense(&ground.state, None).map_err(|e| match e {
            MpsError::DenseTooLarge { .. } => CliError::Usage(e.to_string()),
            other => CliError::Solver(other.to_string()),
        })?;
        if ground.degenerate {
            eprintln!("warning: ground space is degenerate; stored state is one arbitrary member");
        }
        (ground.energy, mps, true, "ed")
    } else {
        let mpo = mpo_from_integrals(&table, modes)
            .map_err(|e| CliError::Solver(e.to_string()))?;
        let mut sweep = SweepConfig::with_max_bond(args.max_bond);
        sweep.energy_tol = args.tol;
        sweep.max_sweeps = args.sweeps;
        let run = dmrg_ground_state(&mpo, sector, &sweep, args.seed)
            .map_err(|e| CliError::Solver(e.to_string()))?;
        (run.energy, run.mps, run.converged, "dmrg")
    };

    let (gauged, _) = chain
        .fix_closure_gauge()
        .map_err(|e| CliError::Solver(e.to_string()))?;

    let mps_path = args.out.with_extension("mps");
    let energy_path = args.out.with_extension("energy");
    write_chain_file(&mps_path, &gauged)?;
    let record = format!(
        "{}# solver {solver_name}\nenergy {energy:.16e}\nconverged {converged}\nmodes {modes}\nnelec {nelec}\nms2 {ms2}\nmax_bond_dim {}\n",
        metadata_header(&config_line),
        gauged.max_bond_dim(),
    );
    fs::write(&energy_path, record)
        .map_err(|e| io_err(&format!("cannot write {}", energy_path.display()), e))?;

    println!("energy {energy:.12}");
    println!("state {}", mps_path.display());
    if !converged {
        return Err(CliError::Solver(format!(
            "sweeps exhausted before the energy settled (best {energy:.12})"
        )));
    }
    Ok(())
}

fn cmd_spectrum(args: &SpectrumArgs) -> CliResult<()> {
    let mps = ensure_left(read_chain_file(&args.input)?)?;
    let spectrum = mps
        .schmidt_spectrum(args.bond)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let config_line = format!("spectrum;input={};bond={}", args.input.display(), args.bond);
    let mut text = metadata_header(&config_line).into_bytes();
    write_spectrum_table(&mut text, &spectrum).map_err(|e| io_err("spectrum table", e))?;
    write_text(&args.out, &String::from_utf8(text).expect("ascii table"))
}

fn cmd_project(args: &ProjectArgs) -> CliResult<()> {
    let mps = ensure_gauge(read_chain_file(&args.input)?)?;
    let closure_norm = mps
        .closure_vector(args.bond)
        .map_err(|e| CliError::Usage(e.to_string()))?
        .norm();
    let projected = mps
        .project_truncated(args.bond)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let config_line = format!("project;input={};bond={}", args.input.display(), args.bond);
    let mut text = metadata_header(&config_line);
    text.push_str(&format!(
        "# projection modes={} bond={} closure_norm={closure_norm:.16e}\n",
        mps.modes(),
        args.bond
    ));
    if projected.norm() == 0.0 {
        text.push_str("# empty projection: the closure vector vanishes at this bond\n");
    } else {
        for (label, amp) in projected.basis().iter().zip(projected.amplitudes()) {
            text.push_str(&format!(
                "{:0width$b} {:.16e} {:.16e}\n",
                label.bits(),
                amp.re,
                amp.im,
                width = args.bond
            ));
        }
    }
    write_text(&args.out, &text)
}

fn cmd_canonicalize(args: &CanonicalizeArgs) -> CliResult<()> {
    let mps = ensure_left(read_chain_file(&args.input)?)?;
    let (gauged, report) = mps
        .fix_closure_gauge()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    write_chain_file(&args.out, &gauged)?;
    println!(
        "canonicalized {} modes, max bond {}, rotated {} bonds, {} vanishing",
        gauged.modes(),
        gauged.max_bond_dim(),
        report.rotated_bonds,
        report.zero_bonds.len()
    );
    Ok(())
}

fn cmd_pair(args: &PairArgs) -> CliResult<()> {
    let mps = ensure_left(read_chain_file(&args.input)?)?;
    let paired = mps.pair_spin().map_err(|e| match e {
        MpsError::OddChainLength { .. } => CliError::Usage(format!("pairing error: {e}")),
        other => input_err(other),
    })?;
    let mut file = fs::File::create(&args.out)
        .map_err(|e| io_err(&format!("cannot create {}", args.out.display()), e))?;
    paired
        .write_to(&mut file)
        .map_err(|e| io_err(&format!("cannot write {}", args.out.display()), e))?;
    println!(
        "paired {} modes into {} spatial sites",
        mps.modes(),
        paired.len()
    );
    Ok(())
}

fn cmd_ladder(args: &LadderArgs) -> CliResult<()> {
    let mut config = LadderConfig::default();
    if let Some(text) = &args.model {
        config.model = text
            .parse::<ModelSpec>()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(basis) = &args.basis {
        config.basis_sizes = basis.clone();
    }
    if let Some(caps) = &args.caps {
        config.caps = caps.clone();
    }
    if let Some(probe) = args.probe {
        config.probe_bond = probe;
    }
    if args.nelec.is_some() {
        config.particles = args.nelec;
    }
    if args.ms2.is_some() {
        config.two_sz = args.ms2;
    }
    if let Some(ed_max) = args.ed_max {
        config.ed_max_modes = ed_max;
    }
    if let Some(tol) = args.tol {
        config.energy_tol = tol;
    }
    if let Some(sweeps) = args.sweeps {
        config.max_sweeps = sweeps;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.output_dir = Some(args.out.clone());

    let report = run_ladder(&config).map_err(|e| match e {
        ConvergenceError::Config(_) => CliError::Usage(e.to_string()),
        ConvergenceError::Io(e) => CliError::Io(e.to_string()),
        ConvergenceError::Encode(e) => CliError::Io(e.to_string()),
        other => CliError::Solver(other.to_string()),
    })?;

    if report
        .references
        .iter()
        .any(|r| r.degenerate == Some(true))
    {
        eprintln!(
            "warning: a degenerate ground space was flagged; cross-K comparisons pick arbitrary members"
        );
    }
    let failures = report.points.iter().filter(|p| p.error.is_some()).count();
    let tables = report
        .points
        .iter()
        .filter(|p| p.spectrum_file.is_some())
        .count();
    println!(
        "ladder complete: {} points ({} failed), {} spectrum tables and report.json in {}",
        report.points.len(),
        failures,
        tables,
        args.out.display()
    );
    if let Some(step) = report.spectrum_distances.last() {
        match step.distance {
            Some(d) => println!(
                "spectrum distance K={} -> K={}: {d:.3e}",
                step.from_modes, step.to_modes
            ),
            None => println!(
                "spectrum distance K={} -> K={}: undefined",
                step.from_modes, step.to_modes
            ),
        }
    }
    if let Some(fit) = &report.tail_fit {
        println!("tail slope {:.4} (rms {:.2e})", fit.slope, fit.rms_residual);
    }
    Ok(())
}
