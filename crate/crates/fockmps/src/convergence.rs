//! Basis-ladder convergence studies.
//!
//! The harness solves one model in the same symmetry sector over a growing
//! chain of spin orbitals, brings every ground state into closure gauge,
//! and quantifies how the bond spectrum at a fixed probe bond settles as
//! the basis grows: consecutive-K spectrum distances, best-effort site
//! tensor distances, the exponential decay rate of the spectrum tail, and
//! the weight retained under each bond cap. Small chains are solved
//! exactly, large ones by capped sweeps, and every (K, D) grid point is
//! recorded — failures included — so one run yields the full convergence
//! picture plus plottable spectrum tables.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use num_complex::Complex64 as C64;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dmrg::{dmrg_ground_state, mpo_from_integrals, DmrgError, SweepConfig};
use crate::fock::{project_mask, FockError, FockSector, OccupationLabel, StateVector};
use crate::hamiltonian::{
    build_model, ed_ground_state, HamiltonianError, HamiltonianOperator, IntegralTable, ModelSpec,
};
use crate::kernel::DenseMatrix;
use crate::mps::{Mps, MpsError, SchmidtSpectrum};

#[derive(Debug, Error)]
pub enum ConvergenceError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
    #[error(transparent)]
    Mps(#[from] MpsError),
    #[error(transparent)]
    Dmrg(#[from] DmrgError),
    #[error("ladder configuration: {0}")]
    Config(String),
    #[error("report i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("report encoding: {0}")]
    Encode(#[from] serde_json::Error),
}

pub type ConvergenceResult<T> = Result<T, ConvergenceError>;

/// One basis/bond-cap ladder over a single model and sector.
#[derive(Debug, Clone)]
pub struct LadderConfig {
    pub model: ModelSpec,
    /// Spin-orbital bond probed for spectra and tensor distances.
    pub probe_bond: usize,
    /// Chain lengths K, even and strictly increasing, all above the probe.
    pub basis_sizes: Vec<usize>,
    pub particles: Option<usize>,
    pub two_sz: Option<i64>,
    /// Chains up to this length are solved exactly, longer ones by sweeps.
    pub ed_max_modes: usize,
    /// Bond caps D studied at every chain length, ascending.
    pub caps: Vec<usize>,
    /// Sweep stopping rules for the capped runs.
    pub energy_tol: f64,
    pub max_sweeps: usize,
    pub seed: u64,
    /// When set, spectrum tables and the report land here as files.
    pub output_dir: Option<PathBuf>,
}

impl Default for LadderConfig {
    /// Desk-scale ladder: a gapped twelve-orbital model whose interaction
    /// decays fast enough that the probe spectrum settles within the K
    /// range, solved exactly up to twenty modes and by sweeps above.
    fn default() -> Self {
        Self {
            model: ModelSpec::DecayingInteraction {
                l: 12,
                a: 1.0,
                g: 0.5,
                gamma: 1.0,
                seed: 7,
            },
            probe_bond: 4,
            basis_sizes: vec![8, 12, 16, 20, 24],
            particles: Some(4),
            two_sz: Some(0),
            ed_max_modes: 20,
            caps: vec![8, 16, 32],
            energy_tol: 1e-9,
            max_sweeps: 16,
            seed: 1,
            output_dir: None,
        }
    }
}

impl LadderConfig {
    pub fn validate(&self) -> ConvergenceResult<()> {
        if self.probe_bond == 0 {
            return Err(ConvergenceError::Config("probe bond must be positive".into()));
        }
        if self.basis_sizes.is_empty() {
            return Err(ConvergenceError::Config("no chain lengths given".into()));
        }
        if self.basis_sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ConvergenceError::Config(
                "chain lengths must be strictly increasing".into(),
            ));
        }
        if self.basis_sizes.iter().any(|&k| k % 2 != 0) {
            return Err(ConvergenceError::Config("chain lengths must be even".into()));
        }
        if self.basis_sizes.iter().any(|&k| k <= self.probe_bond) {
            return Err(ConvergenceError::Config(
                "every chain length must exceed the probe bond".into(),
            ));
        }
        if self.caps.is_empty() || self.caps.iter().any(|&d| d == 0) {
            return Err(ConvergenceError::Config("bond caps must be positive".into()));
        }
        if self.caps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ConvergenceError::Config(
                "bond caps must be strictly increasing".into(),
            ));
        }
        if !(self.energy_tol > 0.0) {
            return Err(ConvergenceError::Config("energy tolerance must be positive".into()));
        }
        if self.max_sweeps == 0 {
            return Err(ConvergenceError::Config("need at least one sweep".into()));
        }
        Ok(())
    }

    /// Canonical one-line description; hashed into report metadata so
    /// artifacts can be traced back to the exact configuration.
    pub fn canonical_string(&self) -> String {
        let fmt_list = |xs: &[usize]| {
            xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        };
        format!(
            "model={};probe={};K={};N={:?};twoSz={:?};edmax={};D={};tol={:e};sweeps={};seed={}",
            self.model,
            self.probe_bond,
            fmt_list(&self.basis_sizes),
            self.particles,
            self.two_sz,
            self.ed_max_modes,
            fmt_list(&self.caps),
            self.energy_tol,
            self.max_sweeps,
            self.seed,
        )
    }

    pub fn config_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_string().as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Euclidean distance between two sorted spectra, the shorter one padded
/// with zeros.
pub fn spectrum_distance(a: &SchmidtSpectrum, b: &SchmidtSpectrum) -> f64 {
    let n = a.values.len().max(b.values.len());
    (0..n)
        .map(|i| {
            let x = a.values.get(i).copied().unwrap_or(0.0);
            let y = b.values.get(i).copied().unwrap_or(0.0);
            (x - y) * (x - y)
        })
        .sum::<f64>()
        .sqrt()
}

/// Least-squares fit of `ln σ_α` against `α`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TailFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square deviation of `ln σ_α` from the fitted line.
    pub rms_residual: f64,
    pub points_used: usize,
}

/// Values at or below this play no part in the tail fit.
const TAIL_FLOOR: f64 = 1e-12;

/// Log-linear fit over the values above the floor; `None` when fewer than
/// two survive.
pub fn exponential_tail_fit(values: &[f64]) -> Option<TailFit> {
    let pts: Vec<(f64, f64)> = values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > TAIL_FLOOR)
        .map(|(i, &s)| (i as f64, s.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom == 0.0 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let ss: f64 = pts
        .iter()
        .map(|&(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    Some(TailFit {
        slope,
        intercept,
        rms_residual: (ss / n).sqrt(),
        points_used: pts.len(),
    })
}

/// Per-site Frobenius distances of the first `upto` site tensors of two
/// chains. Each chain's bond columns are first rotated to a canonical
/// phase (largest-magnitude entry real positive, the convention the
/// factorization kernel uses), then the smaller tensor is zero-padded on
/// the grown bond. Residual unitary mixing between runs is not removed, so
/// the distances are reported evidence, never a convergence proof.
pub fn tensor_distance(a: &Mps, b: &Mps, upto: usize) -> ConvergenceResult<Vec<f64>> {
    if upto == 0 || upto >= a.modes() || upto >= b.modes() {
        return Err(ConvergenceError::Config(format!(
            "cannot compare {upto} leading sites of chains with {} and {} modes",
            a.modes(),
            b.modes()
        )));
    }
    let fa = phase_fixed_blocks(a, upto);
    let fb = phase_fixed_blocks(b, upto);
    Ok(fa
        .iter()
        .zip(&fb)
        .map(|(x, y)| {
            let rows = x[0].nrows().max(y[0].nrows());
            let cols = x[0].ncols().max(y[0].ncols());
            let mut ss = 0.0;
            for mu in 0..2 {
                for i in 0..rows {
                    for j in 0..cols {
                        let u = *x[mu].get((i, j)).unwrap_or(&C64::new(0.0, 0.0));
                        let v = *y[mu].get((i, j)).unwrap_or(&C64::new(0.0, 0.0));
                        ss += (u - v).norm_sqr();
                    }
                }
            }
            ss.sqrt()
        })
        .collect())
}

/// Clone the first `upto` site tensors and rotate every bond column to the
/// canonical phase, compensating on the following site where it is still
/// inside the window.
fn phase_fixed_blocks(mps: &Mps, upto: usize) -> Vec<[DenseMatrix; 2]> {
    let mut blocks: Vec<[DenseMatrix; 2]> = (1..=upto)
        .map(|k| {
            let site = mps.site(k);
            [site.block(0).clone(), site.block(1).clone()]
        })
        .collect();
    for idx in 0..upto {
        let cols = blocks[idx][0].ncols();
        for j in 0..cols {
            let mut best = C64::new(0.0, 0.0);
            let mut best_mag = 0.0;
            for mu in 0..2 {
                for v in blocks[idx][mu].column(j).iter() {
                    if v.norm() > best_mag {
                        best_mag = v.norm();
                        best = *v;
                    }
                }
            }
            if best_mag == 0.0 {
                continue;
            }
            let phase = best / best_mag;
            let conj = phase.conj();
            for mu in 0..2 {
                blocks[idx][mu].column_mut(j).mapv_inplace(|z| z * conj);
            }
            if idx + 1 < upto && j < blocks[idx + 1][0].nrows() {
                for mu in 0..2 {
                    blocks[idx + 1][mu].row_mut(j).mapv_inplace(|z| z * phase);
                }
            }
        }
    }
    blocks
}

/// One solved or failed grid point.
#[derive(Debug, Clone, Serialize)]
pub struct LadderPoint {
    pub modes: usize,
    pub cap: usize,
    /// `"ed"` rows carry the exact ground state truncated to the cap;
    /// `"dmrg"` rows a capped sweep run.
    pub solver: String,
    /// Ground energy of the solve (exact for `"ed"` rows at every cap).
    pub energy: Option<f64>,
    pub converged: Option<bool>,
    pub degenerate: Option<bool>,
    /// Squared-norm fraction the capped state keeps of the solve.
    pub retained_weight: Option<f64>,
    /// Probe-bond singular values of the capped, renormalized state.
    pub schmidt_values: Vec<f64>,
    /// `‖v_k‖` of the capped state at every interior bond.
    pub closure_norms: Vec<f64>,
    pub spectrum_file: Option<String>,
    pub error: Option<String>,
}

/// Best state available at one chain length: the exact solve where there
/// is one, otherwise the widest sweep run. Consecutive-K distances, the
/// tail fit, and the projection check are all taken between these.
#[derive(Debug, Clone, Serialize)]
pub struct ReferenceRecord {
    pub modes: usize,
    pub solver: String,
    /// Cap the reference ran under; `None` for an exact state.
    pub cap: Option<usize>,
    pub energy: Option<f64>,
    pub degenerate: Option<bool>,
    pub schmidt_values: Vec<f64>,
    pub closure_norms: Vec<f64>,
    /// Largest amplitude mismatch between the gauge-read truncation and the
    /// brute-force projection at the probe bond; exact references only.
    pub projection_deviation: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumStep {
    pub from_modes: usize,
    pub to_modes: usize,
    /// `None` when either endpoint failed to solve.
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TensorStep {
    pub from_modes: usize,
    pub to_modes: usize,
    /// Frobenius distance per leading site; `None` when either endpoint
    /// failed to solve.
    pub per_site: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub tool_version: String,
    pub config: String,
    pub config_hash: String,
    pub model: String,
    pub seed: u64,
    pub probe_bond: usize,
    pub particles: Option<usize>,
    pub two_sz: Option<i64>,
    pub points: Vec<LadderPoint>,
    pub references: Vec<ReferenceRecord>,
    pub spectrum_distances: Vec<SpectrumStep>,
    pub tensor_distances: Vec<TensorStep>,
    /// Log-linear tail of the largest solved chain's reference spectrum.
    pub tail_fit: Option<TailFit>,
}

/// Spec-format spectrum table: one header line, one value per line in
/// full precision. A cap of zero marks an uncapped spectrum.
pub fn write_spectrum_table<W: Write>(
    w: &mut W,
    spectrum: &SchmidtSpectrum,
) -> std::io::Result<()> {
    writeln!(
        w,
        "# K={} D={} bond={}",
        spectrum.modes,
        spectrum.cap.unwrap_or(0),
        spectrum.k
    )?;
    for v in &spectrum.values {
        writeln!(w, "{v:.16e}")?;
    }
    Ok(())
}

/// Worker count for the ladder, from `FOCKMPS_WORKERS`; defaults to one.
fn worker_count() -> usize {
    std::env::var("FOCKMPS_WORKERS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// Everything one chain length produces before report assembly.
struct KOutcome {
    rows: Vec<LadderPoint>,
    reference: ReferenceRecord,
    /// Gauge-fixed reference chain, kept for tensor distances.
    reference_mps: Option<Mps>,
    reference_spectrum: Option<SchmidtSpectrum>,
}

fn failed_outcome(cfg: &LadderConfig, modes: usize, solver: &str, err: String) -> KOutcome {
    let rows = cfg
        .caps
        .iter()
        .map(|&cap| LadderPoint {
            modes,
            cap,
            solver: solver.into(),
            energy: None,
            converged: None,
            degenerate: None,
            retained_weight: None,
            schmidt_values: Vec::new(),
            closure_norms: Vec::new(),
            spectrum_file: None,
            error: Some(err.clone()),
        })
        .collect();
    KOutcome {
        rows,
        reference: ReferenceRecord {
            modes,
            solver: solver.into(),
            cap: None,
            energy: None,
            degenerate: None,
            schmidt_values: Vec::new(),
            closure_norms: Vec::new(),
            projection_deviation: None,
            error: Some(err),
        },
        reference_mps: None,
        reference_spectrum: None,
    }
}

fn closure_norms(mps: &Mps) -> ConvergenceResult<Vec<f64>> {
    (1..mps.modes())
        .map(|k| Ok(mps.closure_vector(k)?.norm()))
        .collect()
}

/// Largest amplitude mismatch between `project_truncated` at the probe
/// bond and the mask-and-rescale oracle on the dense state.
fn projection_deviation(
    gauged: &Mps,
    state: &StateVector,
    probe: usize,
) -> ConvergenceResult<f64> {
    let full = state.to_full()?;
    let masked = project_mask(&full, probe)?;
    let scale = gauged.norm_factor * gauged.closure_vector(probe)?.norm();
    let projected = gauged.project_truncated(probe)?;
    let modes = gauged.modes();
    let mut worst = 0.0f64;
    for label in projected.basis().iter() {
        let padded = OccupationLabel::new(modes, label.bits() << (modes - probe))?;
        let want = masked.amplitude_of(&padded).unwrap_or_default();
        let got = projected.amplitude_of(&label).unwrap_or_default() * scale;
        worst = worst.max((want - got).norm());
    }
    Ok(worst)
}

fn solve_exact_k(
    cfg: &LadderConfig,
    table: &IntegralTable,
    modes: usize,
) -> ConvergenceResult<KOutcome> {
    let cut = table.truncated(modes / 2)?;
    let sector = FockSector::new(modes, cfg.particles, cfg.two_sz)?;
    let op = HamiltonianOperator::new(&cut, sector)?;
    let ground = ed_ground_state(&op)?;
    let (exact, _) = Mps::from_dense(&ground.state, None)?;
    let (gauged, _) = exact.fix_closure_gauge()?;
    let reference_spectrum = gauged.schmidt_spectrum(cfg.probe_bond)?;
    let deviation = projection_deviation(&gauged, &ground.state, cfg.probe_bond)?;

    let mut rows = Vec::with_capacity(cfg.caps.len());
    for &cap in &cfg.caps {
        let row = (|| -> ConvergenceResult<LadderPoint> {
            let (mut capped, trunc) = exact.truncate(cap)?;
            capped.norm_factor = 1.0;
            let mut spec = capped.schmidt_spectrum(cfg.probe_bond)?;
            spec.cap = Some(cap);
            Ok(LadderPoint {
                modes,
                cap,
                solver: "ed".into(),
                energy: Some(ground.energy),
                converged: Some(true),
                degenerate: Some(ground.degenerate),
                retained_weight: Some(1.0 - trunc.total()),
                schmidt_values: spec.values.clone(),
                closure_norms: closure_norms(&capped)?,
                spectrum_file: None,
                error: None,
            })
        })();
        rows.push(row.unwrap_or_else(|e| LadderPoint {
            modes,
            cap,
            solver: "ed".into(),
            energy: None,
            converged: None,
            degenerate: None,
            retained_weight: None,
            schmidt_values: Vec::new(),
            closure_norms: Vec::new(),
            spectrum_file: None,
            error: Some(e.to_string()),
        }));
    }

    Ok(KOutcome {
        rows,
        reference: ReferenceRecord {
            modes,
            solver: "ed".into(),
            cap: None,
            energy: Some(ground.energy),
            degenerate: Some(ground.degenerate),
            schmidt_values: reference_spectrum.values.clone(),
            closure_norms: closure_norms(&gauged)?,
            projection_deviation: Some(deviation),
            error: None,
        },
        reference_mps: Some(gauged),
        reference_spectrum: Some(reference_spectrum),
    })
}

fn solve_sweep_k(
    cfg: &LadderConfig,
    table: &IntegralTable,
    modes: usize,
) -> ConvergenceResult<KOutcome> {
    let cut = table.truncated(modes / 2)?;
    let sector = FockSector::new(modes, cfg.particles, cfg.two_sz)?;
    let mpo = mpo_from_integrals(&cut, modes)?;

    let mut rows = Vec::with_capacity(cfg.caps.len());
    let mut last_good: Option<(Mps, SchmidtSpectrum, usize, f64)> = None;
    for &cap in &cfg.caps {
        let row = (|| -> ConvergenceResult<(LadderPoint, Mps, SchmidtSpectrum)> {
            let mut sweep = SweepConfig::with_max_bond(cap);
            sweep.energy_tol = cfg.energy_tol;
            sweep.max_sweeps = cfg.max_sweeps;
            let seed = cfg
                .seed
                .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                .wrapping_add((modes * 4096 + cap) as u64);
            let run = dmrg_ground_state(&mpo, sector.clone(), &sweep, seed)?;
            let dropped: f64 = run
                .truncated_weights
                .last()
                .map(|w| w.iter().sum())
                .unwrap_or(0.0);
            let mut spec = run.mps.schmidt_spectrum(cfg.probe_bond)?;
            spec.cap = Some(cap);
            let point = LadderPoint {
                modes,
                cap,
                solver: "dmrg".into(),
                energy: Some(run.energy),
                converged: Some(run.converged),
                degenerate: None,
                retained_weight: Some(1.0 - dropped),
                schmidt_values: spec.values.clone(),
                closure_norms: closure_norms(&run.mps)?,
                spectrum_file: None,
                error: None,
            };
            Ok((point, run.mps, spec))
        })();
        match row {
            Ok((point, mps, spec)) => {
                let energy = point.energy.expect("solved row carries its energy");
                rows.push(point);
                last_good = Some((mps, spec, cap, energy));
            }
            Err(e) => rows.push(LadderPoint {
                modes,
                cap,
                solver: "dmrg".into(),
                energy: None,
                converged: None,
                degenerate: None,
                retained_weight: None,
                schmidt_values: Vec::new(),
                closure_norms: Vec::new(),
                spectrum_file: None,
                error: Some(e.to_string()),
            }),
        }
    }

    match last_good {
        Some((mps, spectrum, cap, energy)) => {
            let (gauged, _) = mps.fix_closure_gauge()?;
            Ok(KOutcome {
                reference: ReferenceRecord {
                    modes,
                    solver: "dmrg".into(),
                    cap: Some(cap),
                    energy: Some(energy),
                    degenerate: None,
                    schmidt_values: spectrum.values.clone(),
                    closure_norms: closure_norms(&gauged)?,
                    projection_deviation: None,
                    error: None,
                },
                rows,
                reference_mps: Some(gauged),
                reference_spectrum: Some(spectrum),
            })
        }
        None => {
            let err = rows
                .iter()
                .find_map(|r| r.error.clone())
                .unwrap_or_else(|| "all capped runs failed".into());
            Ok(KOutcome {
                rows,
                reference: ReferenceRecord {
                    modes,
                    solver: "dmrg".into(),
                    cap: None,
                    energy: None,
                    degenerate: None,
                    schmidt_values: Vec::new(),
                    closure_norms: Vec::new(),
                    projection_deviation: None,
                    error: Some(err),
                },
                reference_mps: None,
                reference_spectrum: None,
            })
        }
    }
}

fn solve_k(cfg: &LadderConfig, table: &IntegralTable, modes: usize) -> KOutcome {
    let exact = modes <= cfg.ed_max_modes;
    let solver = if exact { "ed" } else { "dmrg" };
    let run = if exact {
        solve_exact_k(cfg, table, modes)
    } else {
        solve_sweep_k(cfg, table, modes)
    };
    run.unwrap_or_else(|e| failed_outcome(cfg, modes, solver, e.to_string()))
}

/// Solve every grid point, assemble the report, and (when an output
/// directory is configured) write one spectrum table per point plus the
/// JSON report. Points at different chain lengths are independent; the
/// `FOCKMPS_WORKERS` environment variable lets them run concurrently.
/// Deterministic given the configuration: reruns produce byte-identical
/// artifacts at any worker count.
pub fn run_ladder(config: &LadderConfig) -> ConvergenceResult<ConvergenceReport> {
    config.validate()?;
    let table = build_model(&config.model)?;
    let largest = *config.basis_sizes.last().expect("validated non-empty");
    if table.n_orb() < largest / 2 {
        return Err(ConvergenceError::Config(format!(
            "model provides {} spatial orbitals but the ladder needs {}",
            table.n_orb(),
            largest / 2
        )));
    }

    let n_jobs = config.basis_sizes.len();
    let outcomes: Vec<KOutcome> = {
        let workers = worker_count().min(n_jobs);
        if workers <= 1 {
            config
                .basis_sizes
                .iter()
                .map(|&modes| solve_k(config, &table, modes))
                .collect()
        } else {
            let slots: Mutex<Vec<Option<KOutcome>>> =
                Mutex::new((0..n_jobs).map(|_| None).collect());
            let next = AtomicUsize::new(0);
            std::thread::scope(|scope| {
                for _ in 0..workers {
                    scope.spawn(|| loop {
                        let job = next.fetch_add(1, Ordering::Relaxed);
                        if job >= n_jobs {
                            break;
                        }
                        let outcome = solve_k(config, &table, config.basis_sizes[job]);
                        slots.lock().expect("worker poisoned the slots")[job] = Some(outcome);
                    });
                }
            });
            slots
                .into_inner()
                .expect("worker poisoned the slots")
                .into_iter()
                .map(|s| s.expect("every job ran"))
                .collect()
        }
    };

    // Single-threaded reduction: files and distance sequences in K order.
    let mut points = Vec::with_capacity(n_jobs * config.caps.len());
    let mut references = Vec::with_capacity(n_jobs);
    let mut anchors: Vec<Option<(Mps, SchmidtSpectrum)>> = Vec::with_capacity(n_jobs);

    if let Some(dir) = &config.output_dir {
        fs::create_dir_all(dir)?;
    }

    for outcome in outcomes {
        let KOutcome {
            mut rows,
            reference,
            reference_mps,
            reference_spectrum,
        } = outcome;
        if let Some(dir) = &config.output_dir {
            for row in &mut rows {
                if row.error.is_some() {
                    continue;
                }
                let name = format!("spectrum_K{}_D{}.txt", row.modes, row.cap);
                let spec = SchmidtSpectrum {
                    k: config.probe_bond,
                    values: row.schmidt_values.clone(),
                    modes: row.modes,
                    cap: Some(row.cap),
                };
                let mut file = fs::File::create(dir.join(&name))?;
                write_spectrum_table(&mut file, &spec)?;
                row.spectrum_file = Some(name);
            }
        }
        points.extend(rows);
        references.push(reference);
        anchors.push(reference_mps.zip(reference_spectrum));
    }

    // One step per consecutive chain-length pair, solved or not.
    let mut spectrum_distances = Vec::with_capacity(n_jobs.saturating_sub(1));
    let mut tensor_distances = Vec::with_capacity(n_jobs.saturating_sub(1));
    for i in 1..n_jobs {
        let from_modes = config.basis_sizes[i - 1];
        let to_modes = config.basis_sizes[i];
        let pair = anchors[i - 1].as_ref().zip(anchors[i].as_ref());
        spectrum_distances.push(SpectrumStep {
            from_modes,
            to_modes,
            distance: pair.map(|(a, b)| spectrum_distance(&a.1, &b.1)),
        });
        tensor_distances.push(TensorStep {
            from_modes,
            to_modes,
            per_site: pair.and_then(|(a, b)| {
                tensor_distance(&a.0, &b.0, config.probe_bond).ok()
            }),
        });
    }
    let tail_source: Option<&SchmidtSpectrum> =
        anchors.iter().rev().find_map(|a| a.as_ref().map(|(_, s)| s));

    let report = ConvergenceReport {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config: config.canonical_string(),
        config_hash: config.config_hash(),
        model: config.model.to_string(),
        seed: config.seed,
        probe_bond: config.probe_bond,
        particles: config.particles,
        two_sz: config.two_sz,
        points,
        references,
        spectrum_distances,
        tensor_distances,
        tail_fit: tail_source.and_then(|s| exponential_tail_fit(&s.values)),
    };

    if let Some(dir) = &config.output_dir {
        let file = fs::File::create(dir.join("report.json"))?;
        serde_json::to_writer_pretty(file, &report)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::hubbard_dimer_energy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spectrum_of(values: &[f64]) -> SchmidtSpectrum {
        SchmidtSpectrum {
            k: 1,
            values: values.to_vec(),
            modes: 2,
            cap: None,
        }
    }

    #[test]
    fn identical_spectra_are_at_distance_zero() {
        let a = spectrum_of(&[0.9, 0.3, 0.1]);
        assert_eq!(spectrum_distance(&a, &a), 0.0);
    }

    #[test]
    fn padded_distance_matches_the_closed_form() {
        let a = spectrum_of(&[1.0]);
        let s = 1.0 / 2.0f64.sqrt();
        let b = spectrum_of(&[s, s]);
        let expect = ((1.0 - s) * (1.0 - s) + 0.5).sqrt();
        assert!((spectrum_distance(&a, &b) - expect).abs() <= 1e-15);
    }

    #[test]
    fn distance_is_symmetric_on_random_spectra() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let la = rng.gen_range(1..6);
            let lb = rng.gen_range(1..6);
            let a = spectrum_of(&(0..la).map(|_| rng.gen_range(0.0..1.0)).collect::<Vec<_>>());
            let b = spectrum_of(&(0..lb).map(|_| rng.gen_range(0.0..1.0)).collect::<Vec<_>>());
            assert_eq!(spectrum_distance(&a, &b), spectrum_distance(&b, &a));
        }
    }

    #[test]
    fn tail_fit_recovers_a_pure_exponential() {
        let values: Vec<f64> = (0..12).map(|i| (-0.7 * i as f64).exp()).collect();
        let fit = exponential_tail_fit(&values).unwrap();
        assert!((fit.slope + 0.7).abs() <= 1e-12, "slope {}", fit.slope);
        assert!(fit.rms_residual <= 1e-12);
        assert_eq!(fit.points_used, 12);
    }

    #[test]
    fn tail_fit_ignores_floor_noise_and_degenerate_inputs() {
        let mut values: Vec<f64> = (0..6).map(|i| (-0.5 * i as f64).exp()).collect();
        values.extend([1e-14, 1e-15]);
        let fit = exponential_tail_fit(&values).unwrap();
        assert_eq!(fit.points_used, 6);
        assert!(exponential_tail_fit(&[0.5]).is_none());
        assert!(exponential_tail_fit(&[1e-13, 1e-14]).is_none());
    }

    #[test]
    fn tensor_distance_vanishes_for_the_same_chain_and_its_phase_twin() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let basis = crate::fock::SectorBasis::new(FockSector::new(6, None, None).unwrap()).unwrap();
        let state = StateVector::random_normalized(basis, &mut rng);
        let (mps, _) = Mps::from_dense(&state, None).unwrap();
        let (gauged, _) = mps.fix_closure_gauge().unwrap();
        let zero = tensor_distance(&gauged, &gauged, 3).unwrap();
        assert!(zero.iter().all(|&d| d == 0.0));

        // Rotate one bond by diagonal phases and undo it on the next site:
        // the same state, different raw tensors, distance still zero.
        let mut sites: Vec<_> = gauged.sites().to_vec();
        let cols = sites[1].block(0).ncols();
        let phases: Vec<C64> = (0..cols)
            .map(|j| C64::from_polar(1.0, 0.3 + 0.9 * j as f64))
            .collect();
        let mut twisted = Vec::new();
        for (idx, site) in sites.iter_mut().enumerate() {
            let mut blocks = [site.block(0).clone(), site.block(1).clone()];
            for (mu, b) in blocks.iter_mut().enumerate() {
                let _ = mu;
                if idx == 1 {
                    for (j, phase) in phases.iter().enumerate() {
                        b.column_mut(j).mapv_inplace(|z| z * phase);
                    }
                }
                if idx == 2 {
                    for (j, phase) in phases.iter().enumerate() {
                        b.row_mut(j).mapv_inplace(|z| z * phase.conj());
                    }
                }
            }
            twisted.push(
                crate::mps::SiteTensor::new(idx + 1, vec![blocks[0].clone(), blocks[1].clone()])
                    .unwrap(),
            );
        }
        let twin = Mps::new(twisted, gauged.norm_factor, crate::mps::CanonicalForm::Left).unwrap();
        let dist = tensor_distance(&gauged, &twin, 3).unwrap();
        assert!(
            dist.iter().all(|&d| d <= 1e-12),
            "phase twin distances {dist:?}"
        );
    }

    #[test]
    fn bad_ladder_configurations_are_rejected() {
        let mut cfg = LadderConfig::default();
        cfg.basis_sizes = vec![8, 8];
        assert!(cfg.validate().is_err());
        cfg.basis_sizes = vec![7, 9];
        assert!(cfg.validate().is_err());
        cfg.basis_sizes = vec![4];
        cfg.probe_bond = 4;
        assert!(cfg.validate().is_err());
        cfg = LadderConfig::default();
        cfg.caps = vec![8, 8];
        assert!(cfg.validate().is_err());
        cfg = LadderConfig::default();
        cfg.caps.clear();
        assert!(cfg.validate().is_err());
    }

    fn tiny_ladder(dir: Option<PathBuf>) -> LadderConfig {
        LadderConfig {
            model: ModelSpec::HubbardChain { l: 3, t: 1.0, u: 2.0 },
            probe_bond: 2,
            basis_sizes: vec![4, 6],
            particles: Some(2),
            two_sz: Some(0),
            ed_max_modes: 6,
            caps: vec![2, 4],
            energy_tol: 1e-9,
            max_sweeps: 12,
            seed: 3,
            output_dir: dir,
        }
    }

    #[test]
    fn tiny_exact_ladder_produces_a_complete_report() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_ladder(Some(dir.path().to_path_buf()));
        let report = run_ladder(&cfg).unwrap();

        assert_eq!(report.points.len(), 4);
        assert_eq!(report.references.len(), 2);
        assert_eq!(report.spectrum_distances.len(), 1);
        assert_eq!(report.tensor_distances.len(), 1);
        assert!(report.spectrum_distances[0].distance.unwrap() >= 0.0);
        assert!(report.tensor_distances[0].per_site.is_some());
        assert!(report.tail_fit.is_some());

        for point in &report.points {
            assert!(point.error.is_none(), "{:?}", point.error);
            let spec = &point.schmidt_values;
            assert!(spec.windows(2).all(|w| w[0] >= w[1]), "spectrum sorted");
            let sum: f64 = spec.iter().map(|s| s * s).sum();
            assert!((sum - 1.0).abs() <= 1e-8, "weight {sum} at D={}", point.cap);
            assert!(spec.len() <= point.cap.min(4));
            let file = dir.path().join(point.spectrum_file.as_ref().unwrap());
            let text = std::fs::read_to_string(file).unwrap();
            let header = text.lines().next().unwrap();
            assert_eq!(
                header,
                format!("# K={} D={} bond=2", point.modes, point.cap)
            );
            assert_eq!(text.lines().count(), 1 + spec.len());
        }
        // The dimer column of the grid is exactly solvable.
        let dimer = report
            .points
            .iter()
            .find(|p| p.modes == 4 && p.cap == 4)
            .unwrap();
        assert!(
            (dimer.energy.unwrap() - hubbard_dimer_energy(1.0, 2.0)).abs() <= 1e-10
        );
        for reference in &report.references {
            assert!(reference.projection_deviation.unwrap() <= 1e-10);
        }
        // Retained weight grows with the cap at fixed K.
        for &modes in &cfg.basis_sizes {
            let weights: Vec<f64> = report
                .points
                .iter()
                .filter(|p| p.modes == modes)
                .map(|p| p.retained_weight.unwrap())
                .collect();
            assert!(weights.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        }
    }

    #[test]
    fn sweep_and_exact_rungs_agree_through_the_harness() {
        let mut cfg = tiny_ladder(None);
        cfg.ed_max_modes = 4;
        cfg.caps = vec![8];
        let report = run_ladder(&cfg).unwrap();
        let sweep_row = report
            .points
            .iter()
            .find(|p| p.modes == 6)
            .expect("sweep rung present");
        assert_eq!(sweep_row.solver, "dmrg");
        assert!(sweep_row.converged.unwrap());

        let mut exact_cfg = tiny_ladder(None);
        exact_cfg.basis_sizes = vec![6];
        exact_cfg.caps = vec![8];
        let exact = run_ladder(&exact_cfg).unwrap();
        let exact_row = &exact.points[0];
        assert_eq!(exact_row.solver, "ed");
        assert!(
            (sweep_row.energy.unwrap() - exact_row.energy.unwrap()).abs() <= 1e-8,
            "{} vs {}",
            sweep_row.energy.unwrap(),
            exact_row.energy.unwrap()
        );
    }

    #[test]
    fn reruns_write_byte_identical_artifacts() {
        let run = || {
            let dir = tempfile::tempdir().unwrap();
            let cfg = tiny_ladder(Some(dir.path().to_path_buf()));
            run_ladder(&cfg).unwrap();
            let mut blobs: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.path())
                .unwrap()
                .map(|e| {
                    let e = e.unwrap();
                    (
                        e.file_name().into_string().unwrap(),
                        std::fs::read(e.path()).unwrap(),
                    )
                })
                .collect();
            blobs.sort();
            blobs
        };
        let first = run();
        let second = run();
        assert_eq!(first.len(), 5, "four tables and a report");
        assert_eq!(first, second);
    }

    #[test]
    fn an_infeasible_rung_is_recorded_and_the_ladder_continues() {
        let mut cfg = tiny_ladder(None);
        cfg.model = ModelSpec::HubbardChain { l: 4, t: 1.0, u: 2.0 };
        cfg.basis_sizes = vec![4, 8];
        cfg.ed_max_modes = 8;
        cfg.particles = Some(6);
        let report = run_ladder(&cfg).unwrap();
        let failed: Vec<_> = report.points.iter().filter(|p| p.modes == 4).collect();
        assert!(failed.iter().all(|p| p.error.is_some()));
        assert!(failed.iter().all(|p| p.schmidt_values.is_empty()));
        let solved: Vec<_> = report.points.iter().filter(|p| p.modes == 8).collect();
        assert!(solved.iter().all(|p| p.error.is_none()));
        // No distance is defined against a missing endpoint.
        assert_eq!(report.spectrum_distances.len(), 1);
        assert!(report.spectrum_distances[0].distance.is_none());
        assert!(report.tensor_distances[0].per_site.is_none());
    }

    #[test]
    fn config_hash_tracks_the_configuration() {
        let a = LadderConfig::default();
        let mut b = LadderConfig::default();
        assert_eq!(a.config_hash(), b.config_hash());
        b.seed += 1;
        assert_ne!(a.config_hash(), b.config_hash());
    }
}
