//! Occupation-number basis for a finite chain of fermionic modes.
//!
//! A chain of `K` modes (spin orbitals) carries the basis of occupation
//! labels `(mu_1, ..., mu_K)` with `mu_i` in `{0, 1}`. Labels are packed
//! into a `u64` with `mu_1` as the most significant bit, so that ascending
//! packed values enumerate labels in lexicographic order and the packed
//! value of a label equals its row-major position in the `2^K`-dimensional
//! coefficient tensor with `mu_1` slowest.
//!
//! Creation and annihilation act with the string sign
//! `(-1)^(mu_1 + ... + mu_{i-1})`, i.e. the parity of the occupied modes
//! strictly below the target mode.

use num_complex::Complex64 as C64;
use rand::Rng;
use thiserror::Error;

/// One-based position of a mode on the chain.
pub type OrbitalIndex = usize;

/// Largest chain length that fits the packed-label representation.
pub const MAX_MODES: usize = 63;

/// Largest chain length for which dense `2^K` vectors are permitted.
pub const MAX_DENSE_MODES: usize = 24;

#[derive(Debug, Error, PartialEq)]
pub enum FockError {
    /// Orbital index outside `1..=K`.
    #[error("orbital index {index} outside 1..={modes}")]
    OrbitalOutOfRange { index: usize, modes: usize },
    /// Chain length outside the representable range.
    #[error("chain length {modes} outside 1..={MAX_MODES}")]
    BadChainLength { modes: usize },
    /// Sector constraints are structurally invalid (e.g. spin label on an
    /// odd chain, or more particles than modes).
    #[error("invalid sector: {reason}")]
    InvalidSector { reason: String },
    /// Sector constraints are valid but admit no labels.
    #[error("sector contains no labels")]
    EmptySector,
    /// A dense enumeration or embedding would exceed the desk-scale guard.
    #[error("basis dimension {dim} exceeds the dense guard {max}")]
    DimensionTooLarge { dim: u128, max: usize },
    /// Two state vectors over different bases were combined.
    #[error("state vectors belong to different sectors")]
    BasisMismatch,
    /// An operation required a nonzero state.
    #[error("state vector has zero norm")]
    ZeroState,
    /// A label does not satisfy the sector constraints.
    #[error("label {label} not contained in the sector")]
    LabelNotInSector { label: String },
}

pub type FockResult<T> = Result<T, FockError>;

/// Packed occupation label for a chain of `modes` fermionic modes.
///
/// Bit `modes - i` of `bits` holds `mu_i`, so `mu_1` is the most
/// significant occupied position and the packed value orders labels
/// lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OccupationLabel {
    bits: u64,
    modes: usize,
}

impl OccupationLabel {
    /// Wraps a packed value; bits beyond the chain must be clear.
    pub fn new(modes: usize, bits: u64) -> FockResult<Self> {
        if modes == 0 || modes > MAX_MODES {
            return Err(FockError::BadChainLength { modes });
        }
        if bits >> modes != 0 {
            return Err(FockError::InvalidSector {
                reason: format!("packed value {bits} has bits beyond mode {modes}"),
            });
        }
        Ok(Self { bits, modes })
    }

    /// The empty chain (all modes unoccupied).
    pub fn vacuum(modes: usize) -> FockResult<Self> {
        Self::new(modes, 0)
    }

    /// Builds a label from the list of occupied modes.
    pub fn from_occupied(modes: usize, occupied: &[OrbitalIndex]) -> FockResult<Self> {
        let mut label = Self::vacuum(modes)?;
        for &i in occupied {
            label.check_index(i)?;
            label.bits |= label.mask(i);
        }
        Ok(label)
    }

    /// Parses a bitstring such as `"0101"`, `mu_1` first.
    pub fn from_bitstring(s: &str) -> FockResult<Self> {
        let modes = s.len();
        let mut bits = 0u64;
        if modes == 0 || modes > MAX_MODES {
            return Err(FockError::BadChainLength { modes });
        }
        for c in s.chars() {
            bits <<= 1;
            match c {
                '0' => {}
                '1' => bits |= 1,
                _ => {
                    return Err(FockError::InvalidSector {
                        reason: format!("bitstring character {c:?}"),
                    })
                }
            }
        }
        Self::new(modes, bits)
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Packed value; doubles as the label's rank in the full basis.
    pub fn bits(&self) -> u64 {
        self.bits
    }

    fn check_index(&self, i: OrbitalIndex) -> FockResult<()> {
        if i == 0 || i > self.modes {
            return Err(FockError::OrbitalOutOfRange {
                index: i,
                modes: self.modes,
            });
        }
        Ok(())
    }

    fn mask(&self, i: OrbitalIndex) -> u64 {
        1u64 << (self.modes - i)
    }

    pub fn occupied(&self, i: OrbitalIndex) -> bool {
        debug_assert!(i >= 1 && i <= self.modes);
        self.bits & self.mask(i) != 0
    }

    /// Total particle number.
    pub fn particle_count(&self) -> usize {
        self.bits.count_ones() as usize
    }

    /// Occupation of odd chain positions minus even ones; the chain
    /// convention places spin-up on odd and spin-down on even positions.
    pub fn two_sz(&self) -> i64 {
        let mut s = 0i64;
        for i in 1..=self.modes {
            if self.occupied(i) {
                s += if i % 2 == 1 { 1 } else { -1 };
            }
        }
        s
    }

    /// Occupied modes in ascending order.
    pub fn occupied_modes(&self) -> Vec<OrbitalIndex> {
        (1..=self.modes).filter(|&i| self.occupied(i)).collect()
    }

    /// Number of occupied modes strictly below `i`.
    fn parity_below(&self, i: OrbitalIndex) -> u32 {
        // Modes j < i live at bit positions strictly above modes - i.
        (self.bits >> (self.modes - i + 1)).count_ones()
    }

    /// String sign `(-1)^(mu_1 + ... + mu_{i-1})`.
    pub fn string_sign(&self, i: OrbitalIndex) -> f64 {
        if self.parity_below(i) % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Applies the creation operator for mode `i`; `None` when the mode is
    /// already occupied.
    pub fn apply_creation(&self, i: OrbitalIndex) -> FockResult<Option<(Self, f64)>> {
        self.check_index(i)?;
        if self.occupied(i) {
            return Ok(None);
        }
        let mut out = *self;
        out.bits |= self.mask(i);
        Ok(Some((out, self.string_sign(i))))
    }

    /// Applies the annihilation operator for mode `i`; `None` when the mode
    /// is empty.
    pub fn apply_annihilation(&self, i: OrbitalIndex) -> FockResult<Option<(Self, f64)>> {
        self.check_index(i)?;
        if !self.occupied(i) {
            return Ok(None);
        }
        let mut out = *self;
        out.bits &= !self.mask(i);
        Ok(Some((out, self.string_sign(i))))
    }

    /// True when no mode above `k` is occupied.
    pub fn supported_below(&self, k: usize) -> bool {
        debug_assert!(k <= self.modes);
        self.bits >> (self.modes - k) << (self.modes - k) == self.bits
    }
}

impl std::fmt::Display for OccupationLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for i in 1..=self.modes {
            write!(f, "{}", if self.occupied(i) { '1' } else { '0' })?;
        }
        Ok(())
    }
}

/// Exact binomial coefficient in `u128` to keep desk-scale counts exact.
fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        acc = acc * (n - j) as u128 / (j + 1) as u128;
    }
    acc
}

/// A symmetry sector of the chain: fixed length, optionally fixed particle
/// number, optionally fixed spin label `twoSz` (odd positions count as
/// spin-up, even as spin-down; only defined for even chains).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FockSector {
    pub modes: usize,
    pub particles: Option<usize>,
    pub two_sz: Option<i64>,
}

impl FockSector {
    pub fn full(modes: usize) -> FockResult<Self> {
        let s = Self {
            modes,
            particles: None,
            two_sz: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_particles(modes: usize, particles: usize) -> FockResult<Self> {
        let s = Self {
            modes,
            particles: Some(particles),
            two_sz: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn new(modes: usize, particles: Option<usize>, two_sz: Option<i64>) -> FockResult<Self> {
        let s = Self {
            modes,
            particles,
            two_sz,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> FockResult<()> {
        if self.modes == 0 || self.modes > MAX_MODES {
            return Err(FockError::BadChainLength { modes: self.modes });
        }
        if let Some(n) = self.particles {
            if n > self.modes {
                return Err(FockError::InvalidSector {
                    reason: format!("{n} particles on {} modes", self.modes),
                });
            }
        }
        if let Some(s) = self.two_sz {
            if self.modes % 2 != 0 {
                return Err(FockError::InvalidSector {
                    reason: "spin label on an odd chain".into(),
                });
            }
            let half = (self.modes / 2) as i64;
            if let Some(n) = self.particles {
                let n = n as i64;
                // n_up = (n + s) / 2 must be an integer within each rail.
                if (n + s) % 2 != 0 {
                    return Err(FockError::EmptySector);
                }
                let up = (n + s) / 2;
                let down = (n - s) / 2;
                if up < 0 || down < 0 || up > half || down > half {
                    return Err(FockError::EmptySector);
                }
            } else if s.abs() > half {
                return Err(FockError::EmptySector);
            }
        }
        Ok(())
    }

    pub fn contains(&self, label: &OccupationLabel) -> bool {
        label.modes == self.modes
            && self.particles.is_none_or(|n| label.particle_count() == n)
            && self.two_sz.is_none_or(|s| label.two_sz() == s)
    }

    /// Number of labels in the sector.
    pub fn dim(&self) -> u128 {
        match (self.particles, self.two_sz) {
            (None, None) => 1u128 << self.modes,
            (Some(n), None) => binomial(self.modes, n),
            (particles, Some(s)) => {
                let half = self.modes / 2;
                let mut total = 0u128;
                for up in 0..=half {
                    let down = up as i64 - s;
                    if down < 0 || down as usize > half {
                        continue;
                    }
                    let down = down as usize;
                    if particles.is_none_or(|n| up + down == n) {
                        total += binomial(half, up) * binomial(half, down);
                    }
                }
                total
            }
        }
    }

    /// Whether the full `2^modes` space is small enough for dense vectors.
    pub fn dense_ok(&self) -> bool {
        self.modes <= MAX_DENSE_MODES
    }
}

/// Next larger integer with the same popcount (Gosper); `None` past the top.
fn next_same_popcount(v: u64, modes: usize) -> Option<u64> {
    debug_assert!(v != 0);
    let t = v | (v - 1);
    let w = t.wrapping_add(1);
    let next = w | (((!t & w) - 1) >> (v.trailing_zeros() + 1));
    if next >> modes != 0 {
        None
    } else {
        Some(next)
    }
}

/// Enumerated basis of a sector, labels in ascending packed order.
///
/// The full sector of a chain keeps its labels implicit (rank equals packed
/// value); constrained sectors carry the sorted label list.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    sector: FockSector,
    labels: Option<Vec<u64>>,
}

impl SectorBasis {
    /// Enumerates the sector; errors when the label list would exceed the
    /// dense guard.
    pub fn new(sector: FockSector) -> FockResult<Self> {
        sector.validate()?;
        if sector.particles.is_none() && sector.two_sz.is_none() {
            if !sector.dense_ok() {
                return Err(FockError::DimensionTooLarge {
                    dim: sector.dim(),
                    max: 1 << MAX_DENSE_MODES,
                });
            }
            return Ok(Self {
                sector,
                labels: None,
            });
        }
        let dim = sector.dim();
        if dim > (1u128 << MAX_DENSE_MODES).max(4_000_000) {
            return Err(FockError::DimensionTooLarge {
                dim,
                max: 1 << MAX_DENSE_MODES,
            });
        }
        let mut labels = Vec::with_capacity(dim as usize);
        match sector.particles {
            Some(0) => {
                if sector.two_sz.unwrap_or(0) == 0 {
                    labels.push(0);
                }
            }
            Some(n) => {
                let mut v = (1u64 << n) - 1;
                loop {
                    let label = OccupationLabel {
                        bits: v,
                        modes: sector.modes,
                    };
                    if sector.two_sz.is_none_or(|s| label.two_sz() == s) {
                        labels.push(v);
                    }
                    match next_same_popcount(v, sector.modes) {
                        Some(next) => v = next,
                        None => break,
                    }
                }
            }
            None => {
                // twoSz constraint alone: filter the full range.
                for v in 0..(1u64 << sector.modes) {
                    let label = OccupationLabel {
                        bits: v,
                        modes: sector.modes,
                    };
                    if label.two_sz() == sector.two_sz.unwrap() {
                        labels.push(v);
                    }
                }
            }
        }
        if labels.is_empty() {
            return Err(FockError::EmptySector);
        }
        debug_assert_eq!(labels.len() as u128, dim);
        Ok(Self {
            sector,
            labels: Some(labels),
        })
    }

    pub fn sector(&self) -> FockSector {
        self.sector
    }

    pub fn dim(&self) -> usize {
        match &self.labels {
            Some(l) => l.len(),
            None => 1usize << self.sector.modes,
        }
    }

    /// Label at a rank (ascending packed order).
    pub fn label_at(&self, rank: usize) -> FockResult<OccupationLabel> {
        if rank >= self.dim() {
            return Err(FockError::OrbitalOutOfRange {
                index: rank,
                modes: self.dim(),
            });
        }
        let bits = match &self.labels {
            Some(l) => l[rank],
            None => rank as u64,
        };
        Ok(OccupationLabel {
            bits,
            modes: self.sector.modes,
        })
    }

    /// Rank of a label, `None` when it lies outside the sector.
    pub fn rank_of(&self, label: &OccupationLabel) -> Option<usize> {
        if label.modes != self.sector.modes {
            return None;
        }
        match &self.labels {
            Some(l) => l.binary_search(&label.bits).ok(),
            None => Some(label.bits as usize),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = OccupationLabel> + '_ {
        (0..self.dim()).map(|r| self.label_at(r).expect("rank in range"))
    }
}

/// Complex amplitudes over the enumerated basis of a sector.
#[derive(Debug, Clone)]
pub struct StateVector {
    basis: SectorBasis,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn zero(basis: SectorBasis) -> Self {
        let dim = basis.dim();
        Self {
            basis,
            amps: vec![C64::new(0.0, 0.0); dim],
        }
    }

    pub fn from_amplitudes(basis: SectorBasis, amps: Vec<C64>) -> FockResult<Self> {
        if amps.len() != basis.dim() {
            return Err(FockError::BasisMismatch);
        }
        Ok(Self { basis, amps })
    }

    /// A random normalized state with independent Gaussian amplitudes.
    pub fn random_normalized<R: Rng>(basis: SectorBasis, rng: &mut R) -> Self {
        let dim = basis.dim();
        let mut amps = Vec::with_capacity(dim);
        for _ in 0..dim {
            // Box-Muller from uniform draws keeps the dependency surface small.
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let r = (-2.0 * u1.ln()).sqrt();
            amps.push(C64::new(r * u2.cos(), r * u2.sin()));
        }
        let mut state = Self { basis, amps };
        let n = state.norm();
        for a in &mut state.amps {
            *a /= n;
        }
        state
    }

    pub fn basis(&self) -> &SectorBasis {
        &self.basis
    }

    pub fn sector(&self) -> FockSector {
        self.basis.sector()
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn amplitude_of(&self, label: &OccupationLabel) -> Option<C64> {
        self.basis.rank_of(label).map(|r| self.amps[r])
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// True when the norm is within `tol` of one.
    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    pub fn normalized(&self) -> FockResult<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(FockError::ZeroState);
        }
        let mut out = self.clone();
        for a in &mut out.amps {
            *a /= n;
        }
        Ok(out)
    }

    pub fn inner(&self, other: &Self) -> FockResult<C64> {
        if self.basis.sector() != other.basis.sector() {
            // States over the same modes but different sectors compare
            // through their common embedding.
            if self.sector().modes != other.sector().modes {
                return Err(FockError::BasisMismatch);
            }
            return self.to_full()?.inner(&other.to_full()?);
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Squared overlap of the normalized states; zero when either vanishes.
    pub fn fidelity(&self, other: &Self) -> FockResult<f64> {
        let (na, nb) = (self.norm(), other.norm());
        if na == 0.0 || nb == 0.0 {
            return Ok(0.0);
        }
        Ok((self.inner(other)?.norm() / (na * nb)).powi(2))
    }

    /// Embeds a sector state into the full `2^K` basis.
    pub fn to_full(&self) -> FockResult<Self> {
        let sector = self.basis.sector();
        if !sector.dense_ok() {
            return Err(FockError::DimensionTooLarge {
                dim: 1u128 << sector.modes,
                max: 1 << MAX_DENSE_MODES,
            });
        }
        let full = SectorBasis::new(FockSector::full(sector.modes)?)?;
        let mut amps = vec![C64::new(0.0, 0.0); full.dim()];
        for (rank, label) in self.basis.iter().enumerate() {
            amps[label.bits() as usize] = self.amps[rank];
        }
        Ok(Self { basis: full, amps })
    }
}

/// Zeroes every amplitude whose label occupies a mode above `k`; the result
/// is not renormalized.
pub fn project_mask(state: &StateVector, k: usize) -> FockResult<StateVector> {
    let modes = state.sector().modes;
    if k > modes {
        return Err(FockError::OrbitalOutOfRange {
            index: k,
            modes,
        });
    }
    let mut out = state.clone();
    for (rank, label) in state.basis.iter().enumerate() {
        if !label.supported_below(k) {
            out.amps[rank] = C64::new(0.0, 0.0);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::prelude::*;

    fn kron(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
        let (ar, ac) = a.dim();
        let (br, bc) = b.dim();
        let mut out = Array2::zeros((ar * br, ac * bc));
        for i in 0..ar {
            for j in 0..ac {
                for p in 0..br {
                    for q in 0..bc {
                        out[[i * br + p, j * bc + q]] = a[[i, j]] * b[[p, q]];
                    }
                }
            }
        }
        out
    }

    /// Dense matrix of the creation operator for mode `i` on `modes` modes,
    /// built purely from Kronecker products of string and ladder blocks.
    fn dense_creation(modes: usize, i: usize) -> Array2<f64> {
        let z = array![[1.0, 0.0], [0.0, -1.0]];
        let id = Array2::eye(2);
        let cdag = array![[0.0, 0.0], [1.0, 0.0]];
        let mut m = Array2::eye(1);
        for site in 1..=modes {
            let factor = if site < i {
                &z
            } else if site == i {
                &cdag
            } else {
                &id
            };
            m = kron(&m, factor);
        }
        m
    }

    #[test]
    fn creation_matches_dense_string_oracle() {
        let modes = 4;
        for i in 1..=modes {
            let m = dense_creation(modes, i);
            for bits in 0..(1u64 << modes) {
                let label = OccupationLabel::new(modes, bits).unwrap();
                let applied = label.apply_creation(i).unwrap();
                for out_bits in 0..(1u64 << modes) {
                    let expect = m[[out_bits as usize, bits as usize]];
                    let got = match applied {
                        Some((ref l, s)) if l.bits() == out_bits => s,
                        _ => 0.0,
                    };
                    assert_eq!(got, expect, "i={i} bits={bits:04b} out={out_bits:04b}");
                }
            }
        }
    }

    #[test]
    fn anticommutators_on_dense_matrices() {
        let modes = 4;
        for i in 1..=modes {
            for j in 1..=modes {
                let ci = dense_creation(modes, i);
                let cj = dense_creation(modes, j);
                let anti = ci.dot(&cj.t()) + cj.t().dot(&ci);
                let expect: Array2<f64> = if i == j {
                    Array2::eye(1 << modes)
                } else {
                    Array2::zeros((1 << modes, 1 << modes))
                };
                assert_eq!(anti, expect);
                let both = ci.dot(&cj) + cj.dot(&ci);
                assert_eq!(both, Array2::<f64>::zeros((1 << modes, 1 << modes)));
            }
        }
    }

    #[test]
    fn annihilation_is_adjoint_of_creation() {
        let modes = 5;
        for i in 1..=modes {
            for bits in 0..(1u64 << modes) {
                let label = OccupationLabel::new(modes, bits).unwrap();
                if let Some((up, s)) = label.apply_creation(i).unwrap() {
                    let (down, s2) = up.apply_annihilation(i).unwrap().unwrap();
                    assert_eq!(down, label);
                    assert_eq!(s * s2, 1.0);
                }
            }
        }
    }

    #[test]
    fn string_sign_example() {
        // Creating mode 2 on |101> crosses the single occupied mode 1.
        let label = OccupationLabel::from_bitstring("101").unwrap();
        let (out, sign) = label.apply_creation(2).unwrap().unwrap();
        assert_eq!(out.to_string(), "111");
        assert_eq!(sign, -1.0);
    }

    #[test]
    fn full_enumeration_is_lexicographic() {
        let basis = SectorBasis::new(FockSector::full(2).unwrap()).unwrap();
        let strings: Vec<String> = basis.iter().map(|l| l.to_string()).collect();
        assert_eq!(strings, ["00", "01", "10", "11"]);
    }

    #[test]
    fn sector_enumeration_matches_brute_filter() {
        for modes in [4usize, 6] {
            for n in 0..=modes {
                for two_sz in [-2i64, -1, 0, 1, 2] {
                    let sector = FockSector {
                        modes,
                        particles: Some(n),
                        two_sz: Some(two_sz),
                    };
                    let brute: Vec<u64> = (0..(1u64 << modes))
                        .filter(|&b| {
                            let l = OccupationLabel::new(modes, b).unwrap();
                            l.particle_count() == n && l.two_sz() == two_sz
                        })
                        .collect();
                    match SectorBasis::new(sector) {
                        Ok(basis) => {
                            let got: Vec<u64> = basis.iter().map(|l| l.bits()).collect();
                            assert_eq!(got, brute);
                            assert_eq!(sector.dim() as usize, brute.len());
                        }
                        Err(FockError::EmptySector) => assert!(brute.is_empty()),
                        Err(e) => panic!("unexpected error {e}"),
                    }
                }
            }
        }
    }

    #[test]
    fn particle_sector_counts() {
        let sector = FockSector::with_particles(6, 3).unwrap();
        assert_eq!(sector.dim(), 20);
        let with_spin = FockSector::new(6, Some(3), Some(1)).unwrap();
        // Two up among three odd rails, one down among three even rails.
        assert_eq!(with_spin.dim(), 9);
    }

    #[test]
    fn rank_label_round_trip_exhaustive() {
        for modes in 1..=8usize {
            let basis = SectorBasis::new(FockSector::full(modes).unwrap()).unwrap();
            for rank in 0..basis.dim() {
                let label = basis.label_at(rank).unwrap();
                assert_eq!(basis.rank_of(&label), Some(rank));
            }
        }
        let basis = SectorBasis::new(FockSector::with_particles(8, 4).unwrap()).unwrap();
        for rank in 0..basis.dim() {
            let label = basis.label_at(rank).unwrap();
            assert_eq!(basis.rank_of(&label), Some(rank));
        }
    }

    #[test]
    fn mask_projection_keeps_low_support() {
        // (|100> + |011>)/sqrt(2) masked at k=1 keeps only |100>.
        let basis = SectorBasis::new(FockSector::full(3).unwrap()).unwrap();
        let mut state = StateVector::zero(basis);
        let a = OccupationLabel::from_bitstring("100").unwrap();
        let b = OccupationLabel::from_bitstring("011").unwrap();
        let amp = C64::new(1.0 / 2.0f64.sqrt(), 0.0);
        let ra = state.basis().rank_of(&a).unwrap();
        let rb = state.basis().rank_of(&b).unwrap();
        state.amplitudes_mut()[ra] = amp;
        state.amplitudes_mut()[rb] = amp;

        let masked = project_mask(&state, 1).unwrap();
        assert_eq!(masked.amplitude_of(&a), Some(amp));
        assert_eq!(masked.amplitude_of(&b), Some(C64::new(0.0, 0.0)));
        assert!((masked.norm() - amp.re).abs() < 1e-15);
    }

    #[test]
    fn mask_norm_is_monotone() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let basis = SectorBasis::new(FockSector::full(6).unwrap()).unwrap();
        let state = StateVector::random_normalized(basis, &mut rng);
        let mut prev = 0.0;
        for k in 0..=6 {
            let n = project_mask(&state, k).unwrap().norm();
            assert!(n >= prev - 1e-15);
            prev = n;
        }
        assert!((prev - 1.0).abs() < 1e-12);
    }

    #[test]
    fn embedding_preserves_amplitudes() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let basis = SectorBasis::new(FockSector::new(6, Some(2), Some(0)).unwrap()).unwrap();
        let state = StateVector::random_normalized(basis, &mut rng);
        let full = state.to_full().unwrap();
        assert!((full.norm() - 1.0).abs() < 1e-12);
        for label in state.basis().iter() {
            assert_eq!(state.amplitude_of(&label), full.amplitude_of(&label));
        }
        assert_eq!(
            full.amplitudes().iter().filter(|a| a.norm() > 0.0).count(),
            state.dim()
        );
    }

    #[test]
    fn invalid_sectors_are_rejected() {
        assert!(matches!(
            FockSector::new(5, None, Some(1)),
            Err(FockError::InvalidSector { .. })
        ));
        assert!(matches!(
            FockSector::new(4, Some(2), Some(1)),
            Err(FockError::EmptySector)
        ));
        assert!(matches!(
            FockSector::with_particles(4, 5),
            Err(FockError::InvalidSector { .. })
        ));
    }
}
