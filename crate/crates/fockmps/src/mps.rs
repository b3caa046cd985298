//! Matrix product states over occupation-number chains.
//!
//! A state on `K` modes is stored as a chain of site tensors `A_k[μ]`
//! (`μ ∈ {0,1}`, matrices of shape `r_{k−1} × r_k` with `r_0 = r_K = 1`)
//! together with a non-negative `norm_factor`; the coefficient of the
//! occupation label `μ₁…μ_K` is `norm_factor · A₁[μ₁]⋯A_K[μ_K]`.
//!
//! Two normal forms matter here. *Left-canonical*: every site satisfies
//! `Σ_μ A[μ]†A[μ] = I`. *Closure gauge*: additionally, at every interior
//! bond the product of the unoccupied blocks to the right,
//! `v_k = A_{k+1}[0]⋯A_K[0]`, is a non-negative multiple of the last basis
//! vector `(0,…,0,1)`. In that gauge the state restricted to its first `k`
//! modes is read off by contracting the first `k` sites against that last
//! basis vector — no reference to the tail of the chain — which is what
//! [`Mps::project_truncated`] computes. Bonds where `v_k` vanishes carry no
//! such restriction (the restricted state is zero) and are left untouched.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::prelude::*;
use ndarray::{concatenate, s};
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::fock::{FockError, FockSector, SectorBasis, StateVector, MAX_DENSE_MODES};
use crate::kernel::{self, DenseMatrix, KernelError};
use crate::tol;

#[derive(Debug, Error)]
pub enum MpsError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("chain has no sites")]
    EmptyChain,
    #[error("dense expansion of {modes} modes exceeds the {max}-mode limit")]
    DenseTooLarge { modes: usize, max: usize },
    #[error("bond {bond} out of range for a {modes}-mode chain")]
    BondOutOfRange { bond: usize, modes: usize },
    #[error("operation requires a left-canonical chain (deviation {deviation:.3e})")]
    NotLeftCanonical { deviation: f64 },
    #[error("operation requires the closure gauge")]
    NotClosureGauge,
    #[error("spin pairing requires an even chain length, got {modes}")]
    OddChainLength { modes: usize },
    #[error("cannot factorize the zero state")]
    ZeroState,
    #[error("inconsistent tensor shapes: {0}")]
    Shape(String),
    #[error("serialized chain is malformed: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type MpsResult<T> = Result<T, MpsError>;

/// Canonical-form marker carried by a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CanonicalForm {
    None,
    Left,
    ClosureGauge,
}

// --- matricization helpers -------------------------------------------------
//
// Row composite: index (a·d + μ) pairs the incoming bond with the physical
// index, matching the bit order of the dense coefficient tensor (earlier
// modes more significant). Column composite: index (μ·r + b).

fn reshape2(m: DenseMatrix, rows: usize, cols: usize) -> DenseMatrix {
    kernel::canonical_layout(m)
        .into_shape((rows, cols))
        .expect("element count preserved by reshape")
}

fn stacked_rows(blocks: &[DenseMatrix]) -> DenseMatrix {
    let d = blocks.len();
    let (r, c) = blocks[0].dim();
    let mut m = Array2::zeros((r * d, c));
    for (mu, b) in blocks.iter().enumerate() {
        m.slice_mut(s![mu..; d, ..]).assign(b);
    }
    m
}

fn unstack_rows(m: &DenseMatrix, d: usize) -> Vec<DenseMatrix> {
    (0..d).map(|mu| m.slice(s![mu..; d, ..]).to_owned()).collect()
}

fn stacked_cols(blocks: &[DenseMatrix]) -> DenseMatrix {
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    concatenate(Axis(1), &views).expect("uniform block heights")
}

fn unstack_cols(m: &DenseMatrix, d: usize) -> Vec<DenseMatrix> {
    let c = m.ncols() / d;
    (0..d)
        .map(|mu| m.slice(s![.., mu * c..(mu + 1) * c]).to_owned())
        .collect()
}

fn left_deviation(blocks: &[DenseMatrix]) -> f64 {
    let r = blocks[0].ncols();
    let mut gram: DenseMatrix = Array2::zeros((r, r));
    for b in blocks {
        gram = gram + b.t().mapv(|x| x.conj()).dot(b);
    }
    let mut dev = 0.0f64;
    for i in 0..r {
        for j in 0..r {
            let expect = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((gram[[i, j]] - C64::new(expect, 0.0)).norm());
        }
    }
    dev
}

// --- site tensors ----------------------------------------------------------

/// One site of a spin-orbital chain: two blocks `A[0]`, `A[1]` of equal shape.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteTensor {
    /// 1-based position in the chain.
    pub k: usize,
    blocks: Vec<DenseMatrix>,
}

impl SiteTensor {
    pub fn new(k: usize, blocks: Vec<DenseMatrix>) -> MpsResult<Self> {
        if blocks.len() != 2 {
            return Err(MpsError::Shape(format!(
                "site {k}: expected 2 physical blocks, got {}",
                blocks.len()
            )));
        }
        if blocks[0].dim() != blocks[1].dim() {
            return Err(MpsError::Shape(format!("site {k}: block shapes differ")));
        }
        Ok(Self { k, blocks })
    }

    /// Block for occupation `μ`.
    pub fn block(&self, mu: usize) -> &DenseMatrix {
        &self.blocks[mu]
    }

    pub fn left_dim(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn right_dim(&self) -> usize {
        self.blocks[0].ncols()
    }

    /// Max-entry deviation of `Σ_μ A[μ]†A[μ]` from the identity.
    pub fn left_normalization_deviation(&self) -> f64 {
        left_deviation(&self.blocks)
    }
}

/// One site of a spatial-orbital chain: four blocks indexed by the local
/// occupation `ν` (empty, up, down, doubly occupied).
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialSiteTensor {
    /// 1-based spatial position.
    pub l: usize,
    blocks: Vec<DenseMatrix>,
}

/// Occupation pair `(μ_up, μ_down)` encoded by the spatial index `ν`.
pub fn spin_pair_occupations(nu: usize) -> (usize, usize) {
    match nu {
        0 => (0, 0),
        1 => (1, 0),
        2 => (0, 1),
        3 => (1, 1),
        _ => panic!("spatial occupation index out of range"),
    }
}

impl SpatialSiteTensor {
    pub fn new(l: usize, blocks: Vec<DenseMatrix>) -> MpsResult<Self> {
        if blocks.len() != 4 {
            return Err(MpsError::Shape(format!(
                "spatial site {l}: expected 4 physical blocks, got {}",
                blocks.len()
            )));
        }
        if blocks.iter().any(|b| b.dim() != blocks[0].dim()) {
            return Err(MpsError::Shape(format!("spatial site {l}: block shapes differ")));
        }
        Ok(Self { l, blocks })
    }

    pub fn block(&self, nu: usize) -> &DenseMatrix {
        &self.blocks[nu]
    }

    pub fn left_dim(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn right_dim(&self) -> usize {
        self.blocks[0].ncols()
    }

    pub fn left_normalization_deviation(&self) -> f64 {
        left_deviation(&self.blocks)
    }
}

// --- reports ---------------------------------------------------------------

/// Product of the unoccupied blocks right of bond `k`.
#[derive(Debug, Clone)]
pub struct ClosureVector {
    pub k: usize,
    pub v: Array1<C64>,
}

impl ClosureVector {
    pub fn norm(&self) -> f64 {
        self.v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Mass carried by every component except the last.
    pub fn off_last_mass(&self) -> f64 {
        let n = self.v.len();
        self.v
            .iter()
            .take(n - 1)
            .map(|x| x.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// Outcome of a gauge-fixing sweep.
#[derive(Debug, Clone, Default)]
pub struct GaugeReport {
    /// Bonds whose closure vector vanished; left untouched.
    pub zero_bonds: Vec<usize>,
    /// Number of bonds actually rotated.
    pub rotated_bonds: usize,
}

/// Squared singular values dropped at each interior bond (index `k−1`
/// holds bond `k`), measured for the unit-normalized state.
#[derive(Debug, Clone)]
pub struct TruncationReport {
    pub per_bond: Vec<f64>,
}

impl TruncationReport {
    pub fn total(&self) -> f64 {
        self.per_bond.iter().sum()
    }
}

/// Singular values across one bipartition of the chain.
#[derive(Debug, Clone)]
pub struct SchmidtSpectrum {
    pub k: usize,
    pub values: Vec<f64>,
    /// Chain length the spectrum was computed on.
    pub modes: usize,
    /// Bond cap in force when the state was produced, if any.
    pub cap: Option<usize>,
}

impl SchmidtSpectrum {
    /// `Σ σ_α²` — equals the squared norm of the represented state.
    pub fn weight_sum(&self) -> f64 {
        self.values.iter().map(|s| s * s).sum()
    }
}

// --- the chain -------------------------------------------------------------

/// Matrix product state on a spin-orbital chain.
#[derive(Debug, Clone)]
pub struct Mps {
    sites: Vec<SiteTensor>,
    /// Norm of the represented state when the chain is left-canonical.
    pub norm_factor: f64,
    pub canonical_form: CanonicalForm,
}

impl Mps {
    pub fn new(
        sites: Vec<SiteTensor>,
        norm_factor: f64,
        canonical_form: CanonicalForm,
    ) -> MpsResult<Self> {
        if sites.is_empty() {
            return Err(MpsError::EmptyChain);
        }
        if sites[0].left_dim() != 1 || sites[sites.len() - 1].right_dim() != 1 {
            return Err(MpsError::Shape("chain must start and end on bond dimension 1".into()));
        }
        for w in sites.windows(2) {
            if w[0].right_dim() != w[1].left_dim() {
                return Err(MpsError::Shape(format!(
                    "bond mismatch between sites {} and {}",
                    w[0].k, w[1].k
                )));
            }
        }
        Ok(Self {
            sites,
            norm_factor,
            canonical_form,
        })
    }

    pub fn modes(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[SiteTensor] {
        &self.sites
    }

    /// Site tensor at 1-based position `k`.
    pub fn site(&self, k: usize) -> &SiteTensor {
        &self.sites[k - 1]
    }

    /// Bond dimension `r_k` for `0 ≤ k ≤ K`.
    pub fn bond_dim(&self, k: usize) -> usize {
        if k == 0 {
            self.sites[0].left_dim()
        } else {
            self.sites[k - 1].right_dim()
        }
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.bond_dim(0)];
        dims.extend(self.sites.iter().map(|s| s.right_dim()));
        dims
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Factorize a dense state into a left-canonical chain.
    ///
    /// Sector states are scattered into the full basis first. With `cap`
    /// set, each bond keeps at most that many singular values and the
    /// squared values dropped are reported per bond; `norm_factor` becomes
    /// the norm of the represented (possibly truncated) state.
    pub fn from_dense(state: &StateVector, cap: Option<usize>) -> MpsResult<(Self, TruncationReport)> {
        let modes = state.sector().modes;
        if modes > MAX_DENSE_MODES {
            return Err(MpsError::DenseTooLarge {
                modes,
                max: MAX_DENSE_MODES,
            });
        }
        let norm = state.norm();
        if norm == 0.0 {
            return Err(MpsError::ZeroState);
        }
        let full = state.to_full()?;
        let dim = 1usize << modes;
        let amps = Array1::from_iter(full.amplitudes().iter().map(|a| a / norm));
        let cap = cap.unwrap_or(usize::MAX).max(1);

        let mut remainder = reshape2(amps.into_shape((1, dim)).unwrap().to_owned(), 1, dim);
        let mut sites = Vec::with_capacity(modes);
        let mut per_bond = vec![0.0f64; modes.saturating_sub(1)];
        for k in 1..=modes {
            let rows = remainder.nrows() * 2;
            let cols = remainder.ncols() / 2;
            let m = reshape2(remainder, rows, cols);
            let svd = kernel::thin_svd(m)?;
            let keep = svd.effective_rank().min(cap).max(1);
            let dropped: f64 = svd.sigma[keep..].iter().map(|s| s * s).sum();
            if k < modes {
                per_bond[k - 1] = dropped;
            }
            let u = svd.u.slice(s![.., ..keep]).to_owned();
            sites.push(SiteTensor::new(k, unstack_rows(&u, 2))?);
            let mut vh = svd.vh.slice(s![..keep, ..]).to_owned();
            for (i, sv) in svd.sigma[..keep].iter().enumerate() {
                vh.row_mut(i).mapv_inplace(|x| x * *sv);
            }
            remainder = vh;
        }
        // The 1×1 residue is the norm of what survived; its phase belongs
        // to the last site, its magnitude to the norm factor.
        let residue = remainder[[0, 0]];
        let mag = residue.norm();
        if mag > 0.0 {
            let phase = residue / mag;
            let last = sites.last_mut().unwrap();
            for b in &mut last.blocks {
                b.mapv_inplace(|x| x * phase);
            }
        }
        let mps = Mps::new(sites, norm * mag, CanonicalForm::Left)?;
        Ok((mps, TruncationReport { per_bond }))
    }

    /// Expand the chain into a dense state over the full basis.
    pub fn to_dense(&self) -> MpsResult<StateVector> {
        let modes = self.modes();
        if modes > MAX_DENSE_MODES {
            return Err(MpsError::DenseTooLarge {
                modes,
                max: MAX_DENSE_MODES,
            });
        }
        let mut acc: DenseMatrix = Array2::ones((1, 1));
        for site in &self.sites {
            let rows = acc.nrows();
            let mut next: DenseMatrix = Array2::zeros((rows * 2, site.right_dim()));
            for mu in 0..2 {
                next.slice_mut(s![mu..; 2, ..]).assign(&acc.dot(site.block(mu)));
            }
            acc = next;
        }
        let basis = SectorBasis::new(FockSector::full(modes)?)?;
        let scale = C64::new(self.norm_factor, 0.0);
        let amps = acc.column(0).iter().map(|x| x * scale).collect();
        Ok(StateVector::from_amplitudes(basis, amps)?)
    }

    /// Per-site deviation from `Σ_μ A[μ]†A[μ] = I`.
    pub fn left_normalization_deviations(&self) -> Vec<f64> {
        self.sites
            .iter()
            .map(|s| s.left_normalization_deviation())
            .collect()
    }

    /// Largest per-site left-normalization deviation.
    pub fn check_left_normalized(&self) -> f64 {
        self.left_normalization_deviations()
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// `v_k = A_{k+1}[0]⋯A_K[0]` for `0 ≤ k < K`.
    ///
    /// For a left-canonical chain `norm_factor · ‖v_k‖` is the norm of the
    /// state's component supported on the first `k` modes.
    pub fn closure_vector(&self, k: usize) -> MpsResult<ClosureVector> {
        let modes = self.modes();
        if k >= modes {
            return Err(MpsError::BondOutOfRange { bond: k, modes });
        }
        let mut v: Array1<C64> = Array1::ones(1);
        for site in self.sites[k..].iter().rev() {
            v = site.block(0).dot(&v);
        }
        Ok(ClosureVector { k, v })
    }

    fn require_left_canonical(&self) -> MpsResult<()> {
        if self.canonical_form == CanonicalForm::None {
            return Err(MpsError::NotLeftCanonical {
                deviation: self.check_left_normalized(),
            });
        }
        let dev = self.check_left_normalized();
        if dev > 1e-10 {
            return Err(MpsError::NotLeftCanonical { deviation: dev });
        }
        Ok(())
    }

    /// Rotate bond bases so every nonzero closure vector points along the
    /// last basis direction.
    ///
    /// Sweeps right to left: the rotation at bond `k` does not disturb
    /// bonds already fixed, and the next closure vector follows from the
    /// gauged one as `v_{k−1} = A_k[0] v_k`. Bonds with a vanishing closure
    /// vector are recorded and left alone. Left-normalization and the
    /// represented state are preserved exactly (unitary gauge).
    pub fn fix_closure_gauge(&self) -> MpsResult<(Self, GaugeReport)> {
        self.require_left_canonical()?;
        let modes = self.modes();
        let mut sites = self.sites.clone();
        let mut report = GaugeReport::default();
        // Closure vector at bond K−1, then walk leftward.
        let mut v: Array1<C64> = sites[modes - 1].blocks[0].column(0).to_owned();
        for k in (1..modes).rev() {
            let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            if norm <= tol::ZERO_CLOSURE {
                report.zero_bonds.push(k);
                // A vanishing closure vector propagates leftward exactly.
                v = sites[k - 1].blocks[0].dot(&v);
                continue;
            }
            let q = kernel::householder_to_last(v.view())?;
            let qh = q.t().mapv(|x| x.conj());
            for b in &mut sites[k - 1].blocks {
                *b = b.dot(&q);
            }
            for b in &mut sites[k].blocks {
                *b = qh.dot(b);
            }
            report.rotated_bonds += 1;
            // Gauged closure vector is norm · e_last; push through A_k[0].
            let r = sites[k - 1].blocks[0].ncols();
            let mut gauged: Array1<C64> = Array1::zeros(r);
            gauged[r - 1] = C64::new(norm, 0.0);
            v = sites[k - 1].blocks[0].dot(&gauged);
        }
        report.zero_bonds.reverse();
        let mps = Mps::new(sites, self.norm_factor, CanonicalForm::ClosureGauge)?;
        Ok((mps, report))
    }

    /// State restricted to the first `k` modes and normalized, read off a
    /// closure-gauge chain by contracting sites `1…k` against the last
    /// basis vector of bond `k`. Returns the zero vector over the `k`-mode
    /// basis when the restriction vanishes.
    pub fn project_truncated(&self, k: usize) -> MpsResult<StateVector> {
        if self.canonical_form != CanonicalForm::ClosureGauge {
            return Err(MpsError::NotClosureGauge);
        }
        let modes = self.modes();
        if k == 0 || k >= modes {
            return Err(MpsError::BondOutOfRange { bond: k, modes });
        }
        if k > MAX_DENSE_MODES {
            return Err(MpsError::DenseTooLarge {
                modes: k,
                max: MAX_DENSE_MODES,
            });
        }
        let basis = SectorBasis::new(FockSector::full(k)?)?;
        if self.closure_vector(k)?.norm() <= tol::ZERO_CLOSURE {
            return Ok(StateVector::zero(basis));
        }
        let mut acc: DenseMatrix = Array2::ones((1, 1));
        for site in &self.sites[..k] {
            let rows = acc.nrows();
            let mut next: DenseMatrix = Array2::zeros((rows * 2, site.right_dim()));
            for mu in 0..2 {
                next.slice_mut(s![mu..; 2, ..]).assign(&acc.dot(site.block(mu)));
            }
            acc = next;
        }
        let amps = acc.column(acc.ncols() - 1).to_vec();
        Ok(StateVector::from_amplitudes(basis, amps)?)
    }

    /// Carry the chain into right-isometry form from the far end down to
    /// `stop_bond`, returning the carry matrix sitting at that bond and the
    /// squared singular values dropped per bond (empty when `cap` is off).
    fn right_sweep(
        sites: &mut [SiteTensor],
        stop_bond: usize,
        cap: Option<usize>,
    ) -> MpsResult<(DenseMatrix, Vec<f64>)> {
        let modes = sites.len();
        let cap = cap.unwrap_or(usize::MAX).max(1);
        let mut carry: DenseMatrix = Array2::ones((1, 1));
        let mut dropped = vec![0.0f64; modes];
        for j in (stop_bond + 1..=modes).rev() {
            let site = &sites[j - 1];
            let absorbed: Vec<DenseMatrix> =
                (0..2).map(|mu| site.block(mu).dot(&carry)).collect();
            let m = stacked_cols(&absorbed);
            let svd = kernel::thin_svd(m)?;
            let keep = svd.effective_rank().min(cap).max(1);
            dropped[j - 1] = svd.sigma[keep..].iter().map(|s| s * s).sum();
            let vh = svd.vh.slice(s![..keep, ..]).to_owned();
            sites[j - 1] = SiteTensor::new(j, unstack_cols(&vh, 2))?;
            let mut us = svd.u.slice(s![.., ..keep]).to_owned();
            for (i, sv) in svd.sigma[..keep].iter().enumerate() {
                us.column_mut(i).mapv_inplace(|x| x * *sv);
            }
            carry = us;
        }
        Ok((carry, dropped))
    }

    /// Singular values of the bipartition at bond `k` (`1 ≤ k < K`),
    /// scaled so their squares sum to the squared norm of the state.
    ///
    /// Requires a left-canonical chain; sites right of the bond are brought
    /// into right-isometry form and the bond carry is diagonalized.
    pub fn schmidt_spectrum(&self, k: usize) -> MpsResult<SchmidtSpectrum> {
        self.require_left_canonical()?;
        let modes = self.modes();
        if k == 0 || k >= modes {
            return Err(MpsError::BondOutOfRange { bond: k, modes });
        }
        let mut sites = self.sites.clone();
        let (carry, _) = Self::right_sweep(&mut sites, k, None)?;
        let svd = kernel::thin_svd(carry)?;
        let keep = svd.effective_rank();
        let values = svd.sigma[..keep]
            .iter()
            .map(|s| s * self.norm_factor)
            .collect();
        Ok(SchmidtSpectrum {
            k,
            values,
            modes,
            cap: None,
        })
    }

    /// Combine chain sites pairwise into spatial-orbital tensors
    /// `B_ℓ[ν] = A_{2ℓ−1}[μ] · A_{2ℓ}[μ′]` with `ν` enumerating
    /// (empty, up, down, double) as in [`spin_pair_occupations`].
    pub fn pair_spin(&self) -> MpsResult<SpatialChain> {
        let modes = self.modes();
        if modes % 2 != 0 {
            return Err(MpsError::OddChainLength { modes });
        }
        let mut sites = Vec::with_capacity(modes / 2);
        for l in 1..=modes / 2 {
            let odd = self.site(2 * l - 1);
            let even = self.site(2 * l);
            let blocks = (0..4)
                .map(|nu| {
                    let (mu_up, mu_down) = spin_pair_occupations(nu);
                    odd.block(mu_up).dot(even.block(mu_down))
                })
                .collect();
            sites.push(SpatialSiteTensor::new(l, blocks)?);
        }
        SpatialChain::new(sites, self.norm_factor)
    }

    /// Cap every bond at `cap`, reporting the squared singular values
    /// dropped per interior bond for the unit-normalized state. The result
    /// is left-canonical; its `norm_factor` shrinks by the weight removed.
    pub fn truncate(&self, cap: usize) -> MpsResult<(Self, TruncationReport)> {
        let cap = cap.max(1);
        let modes = self.modes();
        let base = if self.canonical_form == CanonicalForm::None {
            self.left_canonicalized()?
        } else {
            self.clone()
        };
        let mut sites = base.sites.clone();
        let (carry, dropped) = Self::right_sweep(&mut sites, 0, Some(cap))?;
        // carry is 1×1: the surviving amplitude of the unit-norm chain.
        let survived = carry[[0, 0]];
        // Interior bonds 1…K−1; the sweep recorded bond b at index b.
        let per_bond = dropped[1..modes].to_vec();
        // Restore left-canonical form; ranks are already within the cap.
        let mut left_carry: DenseMatrix = Array2::ones((1, 1)) * survived;
        for j in 1..=modes {
            let absorbed: Vec<DenseMatrix> = (0..2)
                .map(|mu| left_carry.dot(sites[j - 1].block(mu)))
                .collect();
            let m = stacked_rows(&absorbed);
            let svd = kernel::thin_svd(m)?;
            let keep = svd.effective_rank().max(1);
            let u = svd.u.slice(s![.., ..keep]).to_owned();
            sites[j - 1] = SiteTensor::new(j, unstack_rows(&u, 2))?;
            let mut vh = svd.vh.slice(s![..keep, ..]).to_owned();
            for (i, sv) in svd.sigma[..keep].iter().enumerate() {
                vh.row_mut(i).mapv_inplace(|x| x * *sv);
            }
            left_carry = vh;
        }
        let residue = left_carry[[0, 0]];
        let mag = residue.norm();
        if mag > 0.0 {
            let phase = residue / mag;
            let last = sites.last_mut().unwrap();
            for b in &mut last.blocks {
                b.mapv_inplace(|x| x * phase);
            }
        }
        let mps = Mps::new(sites, base.norm_factor * mag, CanonicalForm::Left)?;
        Ok((mps, TruncationReport { per_bond }))
    }

    /// Left-canonicalize an arbitrary chain without capping ranks.
    fn left_canonicalized(&self) -> MpsResult<Self> {
        let modes = self.modes();
        let mut sites = self.sites.clone();
        let mut carry: DenseMatrix = Array2::ones((1, 1));
        for j in 1..=modes {
            let absorbed: Vec<DenseMatrix> =
                (0..2).map(|mu| carry.dot(sites[j - 1].block(mu))).collect();
            let m = stacked_rows(&absorbed);
            let svd = kernel::thin_svd(m)?;
            let keep = svd.effective_rank().max(1);
            let u = svd.u.slice(s![.., ..keep]).to_owned();
            sites[j - 1] = SiteTensor::new(j, unstack_rows(&u, 2))?;
            let mut vh = svd.vh.slice(s![..keep, ..]).to_owned();
            for (i, sv) in svd.sigma[..keep].iter().enumerate() {
                vh.row_mut(i).mapv_inplace(|x| x * *sv);
            }
            carry = vh;
        }
        let residue = carry[[0, 0]];
        let mag = residue.norm();
        if mag == 0.0 {
            return Err(MpsError::ZeroState);
        }
        let phase = residue / mag;
        let last = sites.last_mut().unwrap();
        for b in &mut last.blocks {
            b.mapv_inplace(|x| x * phase);
        }
        Mps::new(sites, self.norm_factor * mag, CanonicalForm::Left)
    }

    /// Serialize into the binary chain container.
    pub fn write_to<W: Write>(&self, w: &mut W) -> MpsResult<()> {
        let blocks: Vec<&[DenseMatrix]> = self.sites.iter().map(|s| s.blocks.as_slice()).collect();
        write_chain(w, 2, self.canonical_form, self.norm_factor, &blocks)
    }

    /// Deserialize from the binary chain container.
    pub fn read_from<R: Read>(r: &mut R) -> MpsResult<Self> {
        let raw = read_chain(r, 2)?;
        let sites = raw
            .blocks
            .into_iter()
            .enumerate()
            .map(|(i, b)| SiteTensor::new(i + 1, b))
            .collect::<MpsResult<Vec<_>>>()?;
        Mps::new(sites, raw.norm_factor, raw.canonical_form)
    }
}

/// Matrix product state over spatial orbitals (four local occupations).
#[derive(Debug, Clone)]
pub struct SpatialChain {
    sites: Vec<SpatialSiteTensor>,
    pub norm_factor: f64,
}

impl SpatialChain {
    pub fn new(sites: Vec<SpatialSiteTensor>, norm_factor: f64) -> MpsResult<Self> {
        if sites.is_empty() {
            return Err(MpsError::EmptyChain);
        }
        if sites[0].left_dim() != 1 || sites[sites.len() - 1].right_dim() != 1 {
            return Err(MpsError::Shape("chain must start and end on bond dimension 1".into()));
        }
        for w in sites.windows(2) {
            if w[0].right_dim() != w[1].left_dim() {
                return Err(MpsError::Shape(format!(
                    "bond mismatch between spatial sites {} and {}",
                    w[0].l, w[1].l
                )));
            }
        }
        Ok(Self { sites, norm_factor })
    }

    pub fn spatial_sites(&self) -> &[SpatialSiteTensor] {
        &self.sites
    }

    /// Spatial site at 1-based position `ℓ`.
    pub fn site(&self, l: usize) -> &SpatialSiteTensor {
        &self.sites[l - 1]
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.sites[0].left_dim()];
        dims.extend(self.sites.iter().map(|s| s.right_dim()));
        dims
    }

    pub fn left_normalization_deviations(&self) -> Vec<f64> {
        self.sites
            .iter()
            .map(|s| s.left_normalization_deviation())
            .collect()
    }

    pub fn check_left_normalized(&self) -> f64 {
        self.left_normalization_deviations()
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// Dense expansion as a state on the underlying `2·L` mode chain, with
    /// each spatial occupation decoded into its (up, down) mode pair.
    pub fn to_state_vector(&self) -> MpsResult<StateVector> {
        let spatial = self.len();
        let modes = 2 * spatial;
        if modes > MAX_DENSE_MODES {
            return Err(MpsError::DenseTooLarge {
                modes,
                max: MAX_DENSE_MODES,
            });
        }
        let mut acc: DenseMatrix = Array2::ones((1, 1));
        for site in &self.sites {
            let rows = acc.nrows();
            let mut next: DenseMatrix = Array2::zeros((rows * 4, site.right_dim()));
            for nu in 0..4 {
                next.slice_mut(s![nu..; 4, ..]).assign(&acc.dot(site.block(nu)));
            }
            acc = next;
        }
        let basis = SectorBasis::new(FockSector::full(modes)?)?;
        let scale = C64::new(self.norm_factor, 0.0);
        let mut amps = vec![C64::new(0.0, 0.0); 1usize << modes];
        for (q, x) in acc.column(0).iter().enumerate() {
            // Decode base-4 digits (earliest spatial site most significant)
            // into the occupation bit pattern of the spin chain.
            let mut bits = 0u64;
            for l in 0..spatial {
                let digit = (q >> (2 * (spatial - 1 - l))) & 3;
                let (up, down) = spin_pair_occupations(digit);
                bits |= (up as u64) << (modes - (2 * l + 1));
                bits |= (down as u64) << (modes - (2 * l + 2));
            }
            amps[bits as usize] = x * scale;
        }
        Ok(StateVector::from_amplitudes(basis, amps)?)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> MpsResult<()> {
        let blocks: Vec<&[DenseMatrix]> = self.sites.iter().map(|s| s.blocks.as_slice()).collect();
        write_chain(w, 4, CanonicalForm::None, self.norm_factor, &blocks)
    }

    pub fn read_from<R: Read>(r: &mut R) -> MpsResult<Self> {
        let raw = read_chain(r, 4)?;
        let sites = raw
            .blocks
            .into_iter()
            .enumerate()
            .map(|(i, b)| SpatialSiteTensor::new(i + 1, b))
            .collect::<MpsResult<Vec<_>>>()?;
        SpatialChain::new(sites, raw.norm_factor)
    }
}

// --- binary container ------------------------------------------------------
//
// Layout (little-endian): magic "FMPS", version u32, physical dimension u32,
// site count u32, canonical-form tag u8, norm_factor f64, then per site
// r_prev u32, r_next u32 and d·r_prev·r_next (re, im) f64 pairs, blocks in
// physical-index order, entries row-major. Floats round-trip bit-exactly.

const CHAIN_MAGIC: &[u8; 4] = b"FMPS";
const CHAIN_VERSION: u32 = 1;
const MAX_SERIALIZED_SITES: u32 = 4096;
const MAX_SERIALIZED_BOND: u32 = 1 << 20;

struct RawChain {
    canonical_form: CanonicalForm,
    norm_factor: f64,
    blocks: Vec<Vec<DenseMatrix>>,
}

fn write_chain<W: Write>(
    w: &mut W,
    phys_dim: u32,
    form: CanonicalForm,
    norm_factor: f64,
    sites: &[&[DenseMatrix]],
) -> MpsResult<()> {
    w.write_all(CHAIN_MAGIC)?;
    w.write_u32::<LittleEndian>(CHAIN_VERSION)?;
    w.write_u32::<LittleEndian>(phys_dim)?;
    w.write_u32::<LittleEndian>(sites.len() as u32)?;
    let tag = match form {
        CanonicalForm::None => 0u8,
        CanonicalForm::Left => 1,
        CanonicalForm::ClosureGauge => 2,
    };
    w.write_u8(tag)?;
    w.write_f64::<LittleEndian>(norm_factor)?;
    for blocks in sites {
        let (r, c) = blocks[0].dim();
        w.write_u32::<LittleEndian>(r as u32)?;
        w.write_u32::<LittleEndian>(c as u32)?;
        for b in *blocks {
            for x in b.iter() {
                w.write_f64::<LittleEndian>(x.re)?;
                w.write_f64::<LittleEndian>(x.im)?;
            }
        }
    }
    Ok(())
}

fn read_chain<R: Read>(r: &mut R, expect_phys_dim: u32) -> MpsResult<RawChain> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHAIN_MAGIC {
        return Err(MpsError::Format("bad magic bytes".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != CHAIN_VERSION {
        return Err(MpsError::Format(format!("unsupported container version {version}")));
    }
    let phys_dim = r.read_u32::<LittleEndian>()?;
    if phys_dim != expect_phys_dim {
        return Err(MpsError::Format(format!(
            "physical dimension {phys_dim} where {expect_phys_dim} was expected"
        )));
    }
    let nsites = r.read_u32::<LittleEndian>()?;
    if nsites == 0 || nsites > MAX_SERIALIZED_SITES {
        return Err(MpsError::Format(format!("implausible site count {nsites}")));
    }
    let tag = r.read_u8()?;
    let canonical_form = match tag {
        0 => CanonicalForm::None,
        1 => CanonicalForm::Left,
        2 => CanonicalForm::ClosureGauge,
        _ => return Err(MpsError::Format(format!("unknown canonical-form tag {tag}"))),
    };
    let norm_factor = r.read_f64::<LittleEndian>()?;
    if !norm_factor.is_finite() || norm_factor < 0.0 {
        return Err(MpsError::Format("norm factor must be finite and non-negative".into()));
    }
    let mut blocks = Vec::with_capacity(nsites as usize);
    for _ in 0..nsites {
        let rows = r.read_u32::<LittleEndian>()?;
        let cols = r.read_u32::<LittleEndian>()?;
        if rows == 0 || cols == 0 || rows > MAX_SERIALIZED_BOND || cols > MAX_SERIALIZED_BOND {
            return Err(MpsError::Format(format!("implausible block shape {rows}×{cols}")));
        }
        let count = rows as usize * cols as usize;
        let mut site = Vec::with_capacity(phys_dim as usize);
        for _ in 0..phys_dim {
            let mut data = Vec::with_capacity(count);
            for _ in 0..count {
                let re = r.read_f64::<LittleEndian>()?;
                let im = r.read_f64::<LittleEndian>()?;
                data.push(C64::new(re, im));
            }
            site.push(
                Array2::from_shape_vec((rows as usize, cols as usize), data)
                    .expect("shape matches element count"),
            );
        }
        blocks.push(site);
    }
    Ok(RawChain {
        canonical_form,
        norm_factor,
        blocks,
    })
}
