//! Second-quantized electronic Hamiltonians on occupation-number chains.
//!
//! The operator form is fixed to
//! `H = e_core + Σ_{pq,σ} h_pq a†_{pσ} a_{qσ}
//!            + ½ Σ_{pqrs,στ} (pq|rs) a†_{pσ} a†_{rτ} a_{sτ} a_{qσ}`
//! with real one-electron integrals `h_pq` and real two-electron integrals
//! `(pq|rs)` in chemist notation. Spatial orbital `p` occupies chain
//! positions `2p−1` (spin up) and `2p` (spin down), so restricting a table
//! to its first `K/2` orbitals realizes the Hamiltonian on a `K`-mode
//! chain. For the matrix-free action and the operator-chain construction
//! the Hamiltonian is rewritten over spin orbitals as
//! `H = e_core + Σ_{IJ} T_IJ a†_I a_J
//!            + Σ_{I<J, K<L} G_{IJ,KL} a†_I a†_J a_K a_L`,
//! which [`SpinOrbitalTerms`] exposes.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::prelude::*;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fock::{FockError, FockSector, SectorBasis, StateVector};
use crate::kernel::{self, KernelError};
use crate::tol;

#[derive(Debug, Error)]
pub enum HamiltonianError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("model description is invalid: {0}")]
    Model(String),
    #[error("table holds {have} orbitals but {need} were requested")]
    TooFewOrbitals { have: usize, need: usize },
    #[error("a chain of {modes} modes cannot host spin-paired orbitals")]
    OddModes { modes: usize },
    #[error("sector dimension {dim} exceeds the {max} limit for this solver")]
    SectorTooLarge { dim: u128, max: u128 },
    #[error("integral table violates its declared symmetry by {deviation:.3e}")]
    Asymmetric { deviation: f64 },
}

pub type HamiltonianResult<T> = Result<T, HamiltonianError>;

/// One- and two-electron integrals over spatial orbitals, with the scalar
/// core shift. Orbital indices are 1-based throughout the public API.
#[derive(Debug, Clone)]
pub struct IntegralTable {
    n_orb: usize,
    h: Array2<f64>,
    /// `(pq|rs)` addressed as `((p·n+q)·n+r)·n+s` with 0-based indices.
    v: Vec<f64>,
    pub e_core: f64,
    /// Electron count declared by the source, if any.
    pub declared_electrons: Option<usize>,
    /// Twice the spin projection declared by the source, if any.
    pub declared_two_sz: Option<i64>,
}

impl IntegralTable {
    /// Zero-filled table over `n_orb` spatial orbitals.
    pub fn new(n_orb: usize) -> HamiltonianResult<Self> {
        if n_orb == 0 {
            return Err(HamiltonianError::Model("orbital count must be at least 1".into()));
        }
        Ok(Self::empty(n_orb))
    }

    fn empty(n_orb: usize) -> Self {
        Self {
            n_orb,
            h: Array2::zeros((n_orb, n_orb)),
            v: vec![0.0; n_orb.pow(4)],
            e_core: 0.0,
            declared_electrons: None,
            declared_two_sz: None,
        }
    }

    pub fn n_orb(&self) -> usize {
        self.n_orb
    }

    fn check_orbitals(&self, indices: &[usize]) {
        for &i in indices {
            assert!(
                i >= 1 && i <= self.n_orb,
                "orbital index {i} outside 1..={}",
                self.n_orb
            );
        }
    }

    /// `h_pq`, 1-based.
    pub fn h(&self, p: usize, q: usize) -> f64 {
        self.check_orbitals(&[p, q]);
        self.h[[p - 1, q - 1]]
    }

    /// `(pq|rs)`, 1-based.
    pub fn v(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        self.check_orbitals(&[p, q, r, s]);
        let n = self.n_orb;
        self.v[(((p - 1) * n + (q - 1)) * n + (r - 1)) * n + (s - 1)]
    }

    /// Store `h_pq = h_qp = value`, 1-based.
    pub fn set_h(&mut self, p: usize, q: usize, value: f64) {
        self.check_orbitals(&[p, q]);
        self.h[[p - 1, q - 1]] = value;
        self.h[[q - 1, p - 1]] = value;
    }

    /// Store `(pq|rs)` together with its eight-fold symmetry partners.
    pub fn set_v(&mut self, p: usize, q: usize, r: usize, s: usize, value: f64) {
        self.check_orbitals(&[p, q, r, s]);
        let n = self.n_orb;
        let mut put = |a: usize, b: usize, c: usize, d: usize| {
            self.v[(((a - 1) * n + (b - 1)) * n + (c - 1)) * n + (d - 1)] = value;
        };
        put(p, q, r, s);
        put(q, p, r, s);
        put(p, q, s, r);
        put(q, p, s, r);
        put(r, s, p, q);
        put(s, r, p, q);
        put(r, s, q, p);
        put(s, r, q, p);
    }

    /// Largest violation of `h` symmetry and the two-electron permutation
    /// relations over all stored entries.
    pub fn symmetry_deviation(&self) -> f64 {
        let n = self.n_orb;
        let mut dev = 0.0f64;
        for p in 0..n {
            for q in 0..n {
                dev = dev.max((self.h[[p, q]] - self.h[[q, p]]).abs());
            }
        }
        let at = |p: usize, q: usize, r: usize, s: usize| self.v[((p * n + q) * n + r) * n + s];
        for p in 0..n {
            for q in 0..n {
                for r in 0..n {
                    for s in 0..n {
                        let base = at(p, q, r, s);
                        for other in [
                            at(q, p, r, s),
                            at(p, q, s, r),
                            at(r, s, p, q),
                        ] {
                            dev = dev.max((base - other).abs());
                        }
                    }
                }
            }
        }
        dev
    }

    pub fn validate(&self) -> HamiltonianResult<()> {
        let dev = self.symmetry_deviation();
        if dev > 1e-12 {
            return Err(HamiltonianError::Asymmetric { deviation: dev });
        }
        Ok(())
    }

    /// Restriction to the first `n_keep` spatial orbitals.
    pub fn truncated(&self, n_keep: usize) -> HamiltonianResult<Self> {
        if n_keep > self.n_orb {
            return Err(HamiltonianError::TooFewOrbitals {
                have: self.n_orb,
                need: n_keep,
            });
        }
        let mut out = Self::empty(n_keep);
        out.e_core = self.e_core;
        out.declared_electrons = self.declared_electrons;
        out.declared_two_sz = self.declared_two_sz;
        for p in 1..=n_keep {
            for q in 1..=n_keep {
                out.h[[p - 1, q - 1]] = self.h(p, q);
                for r in 1..=n_keep {
                    for s in 1..=n_keep {
                        let n = n_keep;
                        out.v[(((p - 1) * n + (q - 1)) * n + (r - 1)) * n + (s - 1)] =
                            self.v(p, q, r, s);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Spin-orbital rewrite on a `modes`-long chain (`modes = 2·n` even,
    /// truncating to the first `n` spatial orbitals).
    pub fn spin_orbital_terms(&self, modes: usize) -> HamiltonianResult<SpinOrbitalTerms> {
        if modes % 2 != 0 {
            return Err(HamiltonianError::OddModes { modes });
        }
        let n = modes / 2;
        if n > self.n_orb {
            return Err(HamiltonianError::TooFewOrbitals {
                have: self.n_orb,
                need: n,
            });
        }
        let spatial = |i: usize| (i + 1) / 2; // chain position (1-based) -> orbital
        let spin_up = |i: usize| i % 2 == 1;
        let mut t = Array2::zeros((modes, modes));
        for i in 1..=modes {
            for j in 1..=modes {
                if spin_up(i) == spin_up(j) {
                    t[[i - 1, j - 1]] = self.h(spatial(i), spatial(j));
                }
            }
        }
        let pairs = PairIndex::new(modes);
        // W(A,B,C,D) = (p_A p_D | p_B p_C) with matching spins on (A,D), (B,C).
        let w = |a: usize, b: usize, c: usize, d: usize| -> f64 {
            if spin_up(a) == spin_up(d) && spin_up(b) == spin_up(c) {
                self.v(spatial(a), spatial(d), spatial(b), spatial(c))
            } else {
                0.0
            }
        };
        let np = pairs.count();
        let mut g = Array2::zeros((np, np));
        for (row, &(a, b)) in pairs.pairs().iter().enumerate() {
            for (col, &(c, d)) in pairs.pairs().iter().enumerate() {
                g[[row, col]] = 0.5 * (w(a, b, c, d) - w(b, a, c, d) - w(a, b, d, c) + w(b, a, d, c));
            }
        }
        Ok(SpinOrbitalTerms {
            modes,
            e_core: self.e_core,
            t,
            g,
            pairs,
        })
    }
}

/// Enumeration of ordered chain-position pairs `A < B` (1-based).
#[derive(Debug, Clone)]
pub struct PairIndex {
    modes: usize,
    pairs: Vec<(usize, usize)>,
}

impl PairIndex {
    pub fn new(modes: usize) -> Self {
        let mut pairs = Vec::with_capacity(modes * (modes.saturating_sub(1)) / 2);
        for a in 1..=modes {
            for b in a + 1..=modes {
                pairs.push((a, b));
            }
        }
        Self { modes, pairs }
    }

    pub fn count(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Index of the pair `(a, b)` with `a < b`.
    pub fn index(&self, a: usize, b: usize) -> usize {
        debug_assert!(a < b && b <= self.modes);
        (a - 1) * self.modes - (a - 1) * a / 2 + (b - a - 1)
    }
}

/// Hamiltonian coefficients over chain positions: scalar, one-body matrix
/// `T_IJ` (term `a†_I a_J`), and the antisymmetrized two-body matrix
/// `G_{(I,J),(K,L)}` over ordered pairs (term `a†_I a†_J a_K a_L`).
#[derive(Debug, Clone)]
pub struct SpinOrbitalTerms {
    pub modes: usize,
    pub e_core: f64,
    pub t: Array2<f64>,
    pub g: Array2<f64>,
    pub pairs: PairIndex,
}

impl SpinOrbitalTerms {
    /// `T_IJ` for 1-based chain positions.
    pub fn t_at(&self, i: usize, j: usize) -> f64 {
        self.t[[i - 1, j - 1]]
    }

    /// `G` coupling the creation pair `(i, j)` to the annihilation pair
    /// `(k, l)`, all 1-based with `i < j`, `k < l`.
    pub fn g_at(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.g[[self.pairs.index(i, j), self.pairs.index(k, l)]]
    }
}

/// Built-in model families and integral-file input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelSpec {
    /// Open chain with nearest-neighbour hopping `t` and on-site repulsion `u`.
    HubbardChain { l: usize, t: f64, u: f64 },
    /// Diagonal one-body ladder `h_pp = a·p` with seeded random two-body
    /// integrals damped as `g·exp(−γ·(p+q+r+s))`.
    DecayingInteraction {
        l: usize,
        a: f64,
        g: f64,
        gamma: f64,
        seed: u64,
    },
    /// Integrals read from an FCIDUMP file.
    FciDump { path: PathBuf },
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::HubbardChain { l, t, u } => write!(f, "hubbard:L={l},t={t},U={u}"),
            ModelSpec::DecayingInteraction { l, a, g, gamma, seed } => {
                write!(f, "decay:L={l},a={a},g={g},gamma={gamma},seed={seed}")
            }
            ModelSpec::FciDump { path } => write!(f, "fcidump:{}", path.display()),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = HamiltonianError;

    /// Parse `hubbard:L=4,t=1,U=2`, `decay:L=6,a=1,g=0.5,gamma=1,seed=7`,
    /// or `fcidump:<path>`. Keys are case-insensitive; `L` is required and
    /// the remaining parameters default to `t=1, U=0` and
    /// `a=1, g=0.5, gamma=1, seed=0`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| HamiltonianError::Model(format!("missing ':' in `{s}`")))?;
        match kind.to_ascii_lowercase().as_str() {
            "fcidump" => Ok(ModelSpec::FciDump {
                path: PathBuf::from(rest),
            }),
            family @ ("hubbard" | "decay") => {
                let mut l: Option<usize> = None;
                let mut fields: Vec<(String, f64)> = Vec::new();
                for item in rest.split(',').filter(|i| !i.is_empty()) {
                    let (key, value) = item.split_once('=').ok_or_else(|| {
                        HamiltonianError::Model(format!("expected key=value, got `{item}`"))
                    })?;
                    let key = key.trim().to_ascii_lowercase();
                    let value = value.trim();
                    if key == "l" {
                        l = Some(value.parse().map_err(|_| {
                            HamiltonianError::Model(format!("bad orbital count `{value}`"))
                        })?);
                    } else {
                        let parsed = value.parse().map_err(|_| {
                            HamiltonianError::Model(format!("bad number `{value}` for `{key}`"))
                        })?;
                        fields.push((key, parsed));
                    }
                }
                let l = l.ok_or_else(|| HamiltonianError::Model("missing L=<orbitals>".into()))?;
                if l == 0 {
                    return Err(HamiltonianError::Model("L must be at least 1".into()));
                }
                let fetch = |name: &str, default: f64| {
                    fields
                        .iter()
                        .find(|(k, _)| k == name)
                        .map(|(_, v)| *v)
                        .unwrap_or(default)
                };
                for (k, _) in &fields {
                    let known: &[&str] = if family == "hubbard" {
                        &["t", "u"]
                    } else {
                        &["a", "g", "gamma", "seed"]
                    };
                    if !known.contains(&k.as_str()) {
                        return Err(HamiltonianError::Model(format!(
                            "unknown parameter `{k}` for `{family}`"
                        )));
                    }
                }
                if family == "hubbard" {
                    Ok(ModelSpec::HubbardChain {
                        l,
                        t: fetch("t", 1.0),
                        u: fetch("u", 0.0),
                    })
                } else {
                    let gamma = fetch("gamma", 1.0);
                    if gamma <= 0.0 {
                        return Err(HamiltonianError::Model("gamma must be positive".into()));
                    }
                    Ok(ModelSpec::DecayingInteraction {
                        l,
                        a: fetch("a", 1.0),
                        g: fetch("g", 0.5),
                        gamma,
                        seed: fetch("seed", 0.0) as u64,
                    })
                }
            }
            other => Err(HamiltonianError::Model(format!("unknown model family `{other}`"))),
        }
    }
}

/// Materialize a model description into an integral table.
pub fn build_model(spec: &ModelSpec) -> HamiltonianResult<IntegralTable> {
    match spec {
        ModelSpec::HubbardChain { l, t, u } => {
            if *l == 0 {
                return Err(HamiltonianError::Model("L must be at least 1".into()));
            }
            let mut table = IntegralTable::empty(*l);
            for p in 1..*l {
                table.set_h(p, p + 1, -t);
            }
            for p in 1..=*l {
                table.set_v(p, p, p, p, *u);
            }
            Ok(table)
        }
        ModelSpec::DecayingInteraction { l, a, g, gamma, seed } => {
            if *l == 0 {
                return Err(HamiltonianError::Model("L must be at least 1".into()));
            }
            if *gamma <= 0.0 {
                return Err(HamiltonianError::Model("gamma must be positive".into()));
            }
            let mut table = IntegralTable::empty(*l);
            for p in 1..=*l {
                table.set_h(p, p, a * p as f64);
            }
            // One draw per symmetry orbit, visited in lexicographic order of
            // the canonical representative, keeps the table seed-stable.
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            for p in 1..=*l {
                for q in p..=*l {
                    for r in 1..=*l {
                        for s in r..=*l {
                            if (r, s) < (p, q) {
                                continue;
                            }
                            let u: f64 = rng.gen_range(-1.0..1.0);
                            let damp = (-gamma * (p + q + r + s) as f64).exp();
                            table.set_v(p, q, r, s, g * damp * u);
                        }
                    }
                }
            }
            Ok(table)
        }
        ModelSpec::FciDump { path } => parse_fcidump(path),
    }
}

/// Read an FCIDUMP integral file.
///
/// The header `&FCI NORB=…,NELEC=…,MS2=…` may span several lines and ends
/// with `&END` or `/`; unknown header keys are skipped. Data lines hold
/// `value p q r s` with 1-based indices and accept Fortran `D` exponents:
/// all-zero indices set the core shift, `p q 0 0` sets `h_pq`, four nonzero
/// indices set `(pq|rs)`, and single-index lines (orbital energies, an
/// extension some programs emit) are ignored.
pub fn parse_fcidump(path: &Path) -> HamiltonianResult<IntegralTable> {
    let text = std::fs::read_to_string(path)?;
    parse_fcidump_text(&text)
}

fn parse_fcidump_text(text: &str) -> HamiltonianResult<IntegralTable> {
    let fail = |line: usize, message: String| HamiltonianError::Parse { line, message };
    let mut lines = text.lines().enumerate();

    // Collect the header through its terminator.
    let mut header = String::new();
    let mut header_done = false;
    let mut body_start = 0;
    for (idx, line) in lines.by_ref() {
        let trimmed = line.trim();
        if header.is_empty() && !trimmed.to_ascii_uppercase().starts_with("&FCI") {
            return Err(fail(idx + 1, "expected header starting with &FCI".into()));
        }
        header.push(' ');
        header.push_str(trimmed);
        let upper = trimmed.to_ascii_uppercase();
        if upper.contains("&END") || upper.ends_with('/') || upper == "/" {
            header_done = true;
            body_start = idx + 1;
            break;
        }
    }
    if !header_done {
        return Err(fail(1, "header never terminated by &END or /".into()));
    }

    let mut n_orb: Option<usize> = None;
    let mut n_elec: Option<usize> = None;
    let mut ms2: Option<i64> = None;
    let cleaned = header
        .replace("&FCI", " ")
        .replace("&fci", " ")
        .replace("&END", " ")
        .replace("&end", " ")
        .replace('/', " ");
    for token in cleaned.split([',', ' ']).filter(|t| !t.trim().is_empty()) {
        if let Some((key, value)) = token.split_once('=') {
            let value = value.trim();
            match key.trim().to_ascii_uppercase().as_str() {
                "NORB" => {
                    n_orb = Some(value.parse().map_err(|_| {
                        fail(1, format!("bad NORB value `{value}`"))
                    })?)
                }
                "NELEC" => {
                    n_elec = Some(value.parse().map_err(|_| {
                        fail(1, format!("bad NELEC value `{value}`"))
                    })?)
                }
                "MS2" => {
                    ms2 = Some(value.parse().map_err(|_| {
                        fail(1, format!("bad MS2 value `{value}`"))
                    })?)
                }
                _ => {}
            }
        }
    }
    let n_orb = n_orb.ok_or_else(|| fail(1, "header does not declare NORB".into()))?;
    if n_orb == 0 {
        return Err(fail(1, "NORB must be at least 1".into()));
    }

    let mut table = IntegralTable::empty(n_orb);
    table.declared_electrons = n_elec;
    table.declared_two_sz = ms2;

    for (idx, line) in lines {
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(fail(
                lineno,
                format!("expected `value p q r s`, found {} fields", fields.len()),
            ));
        }
        let value: f64 = fields[0]
            .replace(['D', 'd'], "E")
            .parse()
            .map_err(|_| fail(lineno, format!("bad value `{}`", fields[0])))?;
        let mut ix = [0usize; 4];
        for (slot, raw) in ix.iter_mut().zip(&fields[1..]) {
            *slot = raw
                .parse()
                .map_err(|_| fail(lineno, format!("bad index `{raw}`")))?;
            if *slot > n_orb {
                return Err(fail(
                    lineno,
                    format!("index {slot} exceeds NORB={n_orb}"),
                ));
            }
        }
        match ix {
            [0, 0, 0, 0] => table.e_core = value,
            [_, 0, 0, 0] => {} // orbital-energy extension line
            [p, q, 0, 0] if p > 0 && q > 0 => table.set_h(p, q, value),
            [p, q, r, s] if p > 0 && q > 0 && r > 0 && s > 0 => table.set_v(p, q, r, s, value),
            _ => {
                return Err(fail(
                    lineno,
                    format!("unsupported index pattern {ix:?}"),
                ))
            }
        }
    }
    let _ = body_start;
    Ok(table)
}

/// Matrix-free Hamiltonian bound to one symmetry sector.
#[derive(Debug, Clone)]
pub struct HamiltonianOperator {
    terms: SpinOrbitalTerms,
    basis: SectorBasis,
    /// For each annihilation-pair column, the creation pairs it couples to.
    couplings: Vec<Vec<(usize, f64)>>,
}

impl HamiltonianOperator {
    /// Bind `table` (truncated to `sector.modes / 2` orbitals) to a sector.
    pub fn new(table: &IntegralTable, sector: FockSector) -> HamiltonianResult<Self> {
        let terms = table.spin_orbital_terms(sector.modes)?;
        let basis = SectorBasis::new(sector)?;
        let np = terms.pairs.count();
        let mut couplings = vec![Vec::new(); np];
        for col in 0..np {
            for row in 0..np {
                let gval = terms.g[[row, col]];
                if gval != 0.0 {
                    couplings[col].push((row, gval));
                }
            }
        }
        Ok(Self {
            terms,
            basis,
            couplings,
        })
    }

    pub fn basis(&self) -> &SectorBasis {
        &self.basis
    }

    pub fn sector(&self) -> FockSector {
        self.basis.sector()
    }

    pub fn terms(&self) -> &SpinOrbitalTerms {
        &self.terms
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// `H · state`, staying inside the bound sector.
    pub fn apply(&self, state: &StateVector) -> HamiltonianResult<StateVector> {
        if state.sector() != self.basis.sector() {
            return Err(HamiltonianError::Fock(FockError::BasisMismatch));
        }
        let amps = self.apply_amplitudes(state.amplitudes());
        Ok(StateVector::from_amplitudes(self.basis.clone(), amps)?)
    }

    /// Action on raw amplitude slices, for iterative solvers.
    pub fn apply_amplitudes(&self, amps: &[C64]) -> Vec<C64> {
        let modes = self.terms.modes;
        let e_core = C64::new(self.terms.e_core, 0.0);
        let mut out: Vec<C64> = amps.iter().map(|a| a * e_core).collect();
        let pairs = &self.terms.pairs;
        for (rank, label) in self.basis.iter().enumerate() {
            let amp = amps[rank];
            if amp == C64::new(0.0, 0.0) {
                continue;
            }
            // One-body: a†_I a_J over positions with matching spin.
            let occupied = label.occupied_modes();
            for &j in &occupied {
                let (after_j, sign_j) = label
                    .apply_annihilation(j)
                    .expect("index in range")
                    .expect("mode is occupied");
                for i in 1..=modes {
                    let coeff = self.terms.t[[i - 1, j - 1]];
                    if coeff == 0.0 {
                        continue;
                    }
                    if let Some((target, sign_i)) =
                        after_j.apply_creation(i).expect("index in range")
                    {
                        if let Some(dest) = self.basis.rank_of(&target) {
                            out[dest] += amp * (coeff * sign_j * sign_i);
                        }
                    }
                }
            }
            // Two-body: a†_I a†_J a_K a_L with I<J, K<L; apply a_L first.
            for (ci, &k) in occupied.iter().enumerate() {
                for &l in &occupied[ci + 1..] {
                    let (after_l, sign_l) = label
                        .apply_annihilation(l)
                        .expect("index in range")
                        .expect("mode is occupied");
                    let (after_kl, sign_k) = after_l
                        .apply_annihilation(k)
                        .expect("index in range")
                        .expect("mode is occupied");
                    let col = pairs.index(k, l);
                    let base = sign_l * sign_k;
                    for &(row, gval) in &self.couplings[col] {
                        let (i, j) = pairs.pairs()[row];
                        let Some((after_create_j, sign_cj)) =
                            after_kl.apply_creation(j).expect("index in range")
                        else {
                            continue;
                        };
                        let Some((target, sign_ci)) =
                            after_create_j.apply_creation(i).expect("index in range")
                        else {
                            continue;
                        };
                        if let Some(dest) = self.basis.rank_of(&target) {
                            out[dest] += amp * (gval * base * sign_cj * sign_ci);
                        }
                    }
                }
            }
        }
        out
    }
}

/// Result of a sector ground-state solve.
#[derive(Debug, Clone)]
pub struct GroundState {
    pub energy: f64,
    pub state: StateVector,
    /// Gap to the next eigenvalue when the solver exposed one.
    pub gap: Option<f64>,
    /// Set when the gap falls below the degeneracy threshold; the returned
    /// eigenvector is then one arbitrary member of the ground space.
    pub degenerate: bool,
    pub residual: f64,
}

/// Dimension up to which the dense eigensolver is preferred.
const DENSE_ED_MAX: usize = 800;
/// Hard dimension limit for the iterative path.
const ITERATIVE_ED_MAX: u128 = 2_000_000;

/// Ground state of the Hamiltonian restricted to the operator's sector.
pub fn ed_ground_state(op: &HamiltonianOperator) -> HamiltonianResult<GroundState> {
    let sector_dim = op.sector().dim();
    if sector_dim == 0 {
        return Err(HamiltonianError::Fock(FockError::EmptySector));
    }
    if sector_dim > ITERATIVE_ED_MAX {
        return Err(HamiltonianError::SectorTooLarge {
            dim: sector_dim,
            max: ITERATIVE_ED_MAX,
        });
    }
    let dim = op.dim();
    if dim <= DENSE_ED_MAX {
        let mut h = Array2::zeros((dim, dim));
        let mut unit = vec![C64::new(0.0, 0.0); dim];
        for col in 0..dim {
            unit[col] = C64::new(1.0, 0.0);
            let column = op.apply_amplitudes(&unit);
            unit[col] = C64::new(0.0, 0.0);
            for (row, value) in column.into_iter().enumerate() {
                h[[row, col]] = value;
            }
        }
        let (vals, vecs) = kernel::eigh_full(&h)?;
        let vector: Vec<C64> = vecs.column(0).to_vec();
        let hx = op.apply_amplitudes(&vector);
        let residual = hx
            .iter()
            .zip(&vector)
            .map(|(y, x)| (y - x * C64::new(vals[0], 0.0)).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let gap = (dim > 1).then(|| vals[1] - vals[0]);
        let state = StateVector::from_amplitudes(op.basis().clone(), vector)?;
        Ok(GroundState {
            energy: vals[0],
            state,
            gap,
            degenerate: gap.is_some_and(|g| g < tol::DEGENERACY_GAP),
            residual,
        })
    } else {
        let result = kernel::lanczos_smallest(
            |x| op.apply_amplitudes(x),
            dim,
            1e-12,
            600,
            None,
        )?;
        let gap = result.second_value.map(|s| s - result.value);
        let state = StateVector::from_amplitudes(op.basis().clone(), result.vector)?;
        Ok(GroundState {
            energy: result.value,
            state,
            gap,
            degenerate: gap.is_some_and(|g| g < tol::DEGENERACY_GAP),
            residual: result.residual,
        })
    }
}

/// Ground energy of the two-site Hubbard chain at half filling and zero
/// spin projection, in closed form. Useful as an independent check.
pub fn hubbard_dimer_energy(t: f64, u: f64) -> f64 {
    0.5 * (u - (u * u + 16.0 * t * t).sqrt())
}
