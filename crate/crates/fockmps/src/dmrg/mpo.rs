//! Matrix-product operator construction for chain Hamiltonians.
//!
//! Every Hamiltonian handled here is a sum of fermionic strings: the scalar
//! shift, one-body terms `T_IJ a†_I a_J`, and antisymmetrized two-body terms
//! `G a†_I a†_J a_K a_L`. Instead of stacking one operator bond per string
//! (whose count grows with the fourth power of the chain length) the builder
//! runs a finite-state machine across the chain: a bond channel remembers
//! only what the strings passing through it still need. Strings that have
//! placed all but one elementary operator collapse into a shared
//! "completion" channel per remaining (site, kind), folding their
//! coefficients into the transition that enters it; strings still owing two
//! or more operators stay keyed by what they have already placed, which is
//! shared state as well. This keeps the operator-bond dimension quadratic
//! in the chain length while reproducing the exact sum.
//!
//! Parity bookkeeping never happens symbolically: each transition's 2×2
//! block is the literal product of local creation/annihilation matrices and
//! the parity factors demanded by the anticommutation strings, so signs are
//! produced by arithmetic, not by case analysis.

use std::collections::BTreeMap;

use ndarray::prelude::*;
use num_complex::Complex64 as C64;

use crate::hamiltonian::{HamiltonianError, HamiltonianResult, IntegralTable, SpinOrbitalTerms};
use crate::kernel::DenseMatrix;

/// 2×2 real physical block, indexed `[out][in]`.
pub type Block2 = [[f64; 2]; 2];

const IDENT: Block2 = [[1.0, 0.0], [0.0, 1.0]];
const PARITY: Block2 = [[1.0, 0.0], [0.0, -1.0]];
const CREATE: Block2 = [[0.0, 0.0], [1.0, 0.0]];
const ANNIHILATE: Block2 = [[0.0, 1.0], [0.0, 0.0]];

fn mul2(a: Block2, b: Block2) -> Block2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn add_assign2(a: &mut Block2, b: &Block2, scale: f64) {
    for i in 0..2 {
        for j in 0..2 {
            a[i][j] += scale * b[i][j];
        }
    }
}

fn is_zero2(a: &Block2) -> bool {
    a.iter().flatten().all(|x| *x == 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Piece {
    Create,
    Annihilate,
}

/// Bond channel of the construction machine. Ordering is part of the MPO
/// layout contract: bond 0 holds exactly `Vac`, the last bond exactly
/// `Done`, and interior channels are sorted `Vac < Raw < Comp < Done`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Channel {
    /// Nothing placed yet; strings pass with identity (even parity ahead).
    Vac,
    /// Placed pieces of a string still owing at least two more.
    Raw(Vec<(usize, Piece)>),
    /// Everything but one (site, kind) placed; coefficients already folded.
    Comp(usize, Piece),
    /// String finished; identity to the right edge.
    Done,
}

impl Channel {
    fn passthrough(&self) -> Block2 {
        match self {
            Channel::Vac | Channel::Done => IDENT,
            Channel::Raw(placed) => {
                if placed.len() % 2 == 1 {
                    PARITY
                } else {
                    IDENT
                }
            }
            Channel::Comp(_, _) => PARITY,
        }
    }
}

/// One site of the operator chain, stored sparsely.
#[derive(Debug, Clone)]
pub struct MpoSite {
    pub rows: usize,
    pub cols: usize,
    /// `(row, col, block)` triples; at most one triple per position.
    pub entries: Vec<(usize, usize, Block2)>,
}

/// Sparse matrix-product operator over a chain of two-level modes.
#[derive(Debug, Clone)]
pub struct Mpo {
    sites: Vec<MpoSite>,
    bond_dims: Vec<usize>,
    /// Coarse magnitude of the represented operator, for penalty scaling.
    pub energy_scale: f64,
}

impl Mpo {
    pub fn modes(&self) -> usize {
        self.sites.len()
    }

    /// 1-based site access.
    pub fn site(&self, k: usize) -> &MpoSite {
        &self.sites[k - 1]
    }

    /// Operator-bond dimensions, length `modes + 1`.
    pub fn bond_dims(&self) -> &[usize] {
        &self.bond_dims
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims.iter().copied().max().unwrap_or(0)
    }

    /// Dense matrix of the operator on the full occupation basis, with the
    /// first chain site as the most significant bit. Guarded to short
    /// chains; intended for oracle checks.
    pub fn dense_operator(&self) -> HamiltonianResult<DenseMatrix> {
        let modes = self.modes();
        if modes > 12 {
            return Err(HamiltonianError::SectorTooLarge {
                dim: 1u128 << modes,
                max: 1 << 12,
            });
        }
        // Carry one dense prefix operator per live channel; site k extends
        // the prefix by one physical factor, so earlier sites end up on the
        // more significant bits.
        let mut carry: Vec<Array2<f64>> = vec![Array2::ones((1, 1))];
        for site in &self.sites {
            let dim = carry
                .first()
                .map(|m| m.nrows())
                .unwrap_or(0);
            let mut next: Vec<Array2<f64>> = vec![Array2::zeros((dim * 2, dim * 2)); site.cols];
            for &(row, col, block) in &site.entries {
                let prev = &carry[row];
                let target = &mut next[col];
                for mu in 0..2 {
                    for nu in 0..2 {
                        let w = block[mu][nu];
                        if w == 0.0 {
                            continue;
                        }
                        for x in 0..dim {
                            for y in 0..dim {
                                target[[x * 2 + mu, y * 2 + nu]] += w * prev[[x, y]];
                            }
                        }
                    }
                }
            }
            carry = next;
        }
        let last = carry
            .into_iter()
            .next()
            .expect("final bond has one channel");
        Ok(last.mapv(|x| C64::new(x, 0.0)))
    }
}

/// Direct sum of two operators on the same chain: boundary channels are
/// identified, interior channel spaces concatenate.
pub fn mpo_sum(a: &Mpo, b: &Mpo) -> HamiltonianResult<Mpo> {
    if a.modes() != b.modes() {
        return Err(HamiltonianError::Model(format!(
            "cannot add operators on {} and {} modes",
            a.modes(),
            b.modes()
        )));
    }
    let modes = a.modes();
    let mut bond_dims = vec![1usize; modes + 1];
    for k in 1..modes {
        bond_dims[k] = a.bond_dims[k] + b.bond_dims[k];
    }
    let mut sites = Vec::with_capacity(modes);
    for k in 1..=modes {
        let row_off = if k == 1 { 0 } else { a.bond_dims[k - 1] };
        let col_off = if k == modes { 0 } else { a.bond_dims[k] };
        let sa = a.site(k);
        let sb = b.site(k);
        let mut entries = sa.entries.clone();
        entries.extend(
            sb.entries
                .iter()
                .map(|&(r, c, blk)| (r + row_off, c + col_off, blk)),
        );
        sites.push(MpoSite {
            rows: bond_dims[k - 1],
            cols: bond_dims[k],
            entries,
        });
    }
    Ok(Mpo {
        sites,
        bond_dims,
        energy_scale: a.energy_scale + b.energy_scale,
    })
}

/// A fermionic string scheduled for the machine: coefficient and elementary
/// pieces in operator order (creations by ascending site, then
/// annihilations by ascending site).
struct TermString {
    coeff: f64,
    pieces: Vec<(usize, Piece)>,
}

struct Assembler {
    modes: usize,
    /// Channel lifetime as a bond interval `[lo, hi]`; intervals are
    /// contiguous because every channel pins one of its endpoints.
    presence: BTreeMap<Channel, (usize, usize)>,
    /// Coefficient-carrying transitions, accumulated.
    weighted: BTreeMap<(usize, Channel, Channel), Block2>,
    /// Shared structural transitions, written once.
    structural: BTreeMap<(usize, Channel, Channel), Block2>,
}

impl Assembler {
    fn new(modes: usize) -> Self {
        Self {
            modes,
            presence: BTreeMap::new(),
            weighted: BTreeMap::new(),
            structural: BTreeMap::new(),
        }
    }

    fn note_presence(&mut self, ch: Channel, lo: usize, hi: usize) {
        let slot = self.presence.entry(ch).or_insert((lo, hi));
        slot.0 = slot.0.min(lo);
        slot.1 = slot.1.max(hi);
    }

    /// The physical factor a string emits at `site`, given how many of its
    /// pieces lie before, at, and after the site. The factor is the product
    /// of the at-site pieces (creation first) with one parity matrix for
    /// each odd block of pieces still ahead, mirroring the anticommutation
    /// strings of the underlying modes.
    fn site_factor(at_site: &[Piece], future_creations: usize, future_annihilations: usize) -> Block2 {
        let mut factor = IDENT;
        if at_site.contains(&Piece::Create) {
            factor = mul2(factor, CREATE);
        }
        if future_creations % 2 == 1 {
            factor = mul2(factor, PARITY);
        }
        if at_site.contains(&Piece::Annihilate) {
            factor = mul2(factor, ANNIHILATE);
        }
        if future_annihilations % 2 == 1 {
            factor = mul2(factor, PARITY);
        }
        factor
    }

    fn feed(&mut self, term: &TermString) {
        if term.coeff == 0.0 {
            return;
        }
        let total_cr = term
            .pieces
            .iter()
            .filter(|(_, p)| *p == Piece::Create)
            .count();
        let total_an = term.pieces.len() - total_cr;

        // Group pieces by site, ascending; per-site order is create-first.
        let mut groups: Vec<(usize, Vec<Piece>)> = Vec::new();
        let mut sorted = term.pieces.clone();
        sorted.sort();
        for (site, kind) in sorted {
            match groups.last_mut() {
                Some((s, kinds)) if *s == site => kinds.push(kind),
                _ => groups.push((site, vec![kind])),
            }
        }

        let channel_for = |placed: &[(usize, Piece)], future: &[(usize, Piece)]| -> Channel {
            if placed.is_empty() {
                Channel::Vac
            } else if future.is_empty() {
                Channel::Done
            } else if future.len() == 1 {
                Channel::Comp(future[0].0, future[0].1)
            } else {
                Channel::Raw(placed.to_vec())
            }
        };

        let mut placed: Vec<(usize, Piece)> = Vec::new();
        let mut remaining: Vec<(usize, Piece)> = {
            let mut r = term.pieces.clone();
            r.sort();
            r
        };
        let mut current = Channel::Vac;
        let mut segment_lo = 0usize;
        let mut coeff_pending = true;

        for (site, kinds) in &groups {
            let site = *site;
            // Close the running segment at the bond left of this site.
            self.note_presence(current.clone(), segment_lo, site - 1);

            let placed_cr = placed.iter().filter(|(_, p)| *p == Piece::Create).count();
            let placed_an = placed.len() - placed_cr;
            let at_cr = kinds.iter().filter(|p| **p == Piece::Create).count();
            let at_an = kinds.len() - at_cr;
            let future_cr = total_cr - placed_cr - at_cr;
            let future_an = total_an - placed_an - at_an;
            let factor = Self::site_factor(kinds, future_cr, future_an);

            for kind in kinds {
                let pos = remaining
                    .iter()
                    .position(|&(s, p)| s == site && p == *kind)
                    .expect("piece still pending");
                placed.push(remaining.remove(pos));
            }
            placed.sort();
            let next = channel_for(&placed, &remaining);

            let folds_here = coeff_pending
                && matches!(next, Channel::Comp(_, _) | Channel::Done);
            let key = (site, current.clone(), next.clone());
            if folds_here {
                coeff_pending = false;
                let slot = self.weighted.entry(key).or_insert([[0.0; 2]; 2]);
                add_assign2(slot, &factor, term.coeff);
            } else {
                let prev = self.structural.insert(key, factor);
                debug_assert!(
                    prev.is_none_or(|p| p == factor),
                    "structural transition disagreement at site {site}"
                );
            }

            current = next;
            segment_lo = site;
        }
        debug_assert!(matches!(current, Channel::Done));
        debug_assert!(!coeff_pending);
        self.note_presence(current, segment_lo, self.modes);
    }

    fn feed_scalar(&mut self, value: f64) {
        // The scalar rides the Vac→Done transition at the first site.
        self.note_presence(Channel::Vac, 0, 0);
        self.note_presence(Channel::Done, 1, self.modes);
        if value != 0.0 {
            let key = (1usize, Channel::Vac, Channel::Done);
            let slot = self.weighted.entry(key).or_insert([[0.0; 2]; 2]);
            add_assign2(slot, &IDENT, value);
        }
    }

    fn finish(mut self, energy_scale: f64) -> Mpo {
        let modes = self.modes;
        // Passthrough entries over each channel's interior bonds.
        let plan: Vec<(Channel, usize, usize)> = self
            .presence
            .iter()
            .map(|(ch, &(lo, hi))| (ch.clone(), lo, hi))
            .collect();
        for (ch, lo, hi) in plan {
            let block = ch.passthrough();
            for site in lo + 1..=hi {
                self.structural
                    .insert((site, ch.clone(), ch.clone()), block);
            }
        }

        // Channel index per bond, in Channel order.
        let mut index: Vec<BTreeMap<Channel, usize>> = vec![BTreeMap::new(); modes + 1];
        for (ch, &(lo, hi)) in &self.presence {
            for slot in index.iter_mut().take(hi + 1).skip(lo) {
                let next = slot.len();
                slot.insert(ch.clone(), next);
            }
        }
        debug_assert_eq!(index[0].len(), 1);
        debug_assert_eq!(index[modes].len(), 1);

        let mut sites: Vec<MpoSite> = (1..=modes)
            .map(|k| MpoSite {
                rows: index[k - 1].len(),
                cols: index[k].len(),
                entries: Vec::new(),
            })
            .collect();
        for map in [&self.structural, &self.weighted] {
            for ((site, from, to), block) in map {
                if is_zero2(block) {
                    continue;
                }
                let row = index[site - 1][from];
                let col = index[*site][to];
                sites[site - 1].entries.push((row, col, *block));
            }
        }
        for site in &mut sites {
            site.entries.sort_by_key(|&(r, c, _)| (r, c));
        }

        let bond_dims = index.iter().map(|m| m.len()).collect();
        Mpo {
            sites,
            bond_dims,
            energy_scale,
        }
    }
}

/// Build the operator chain for a coefficient set over chain positions.
pub fn mpo_from_terms(terms: &SpinOrbitalTerms) -> Mpo {
    let modes = terms.modes;
    let mut asm = Assembler::new(modes);
    asm.feed_scalar(terms.e_core);
    let mut scale = terms.e_core.abs();
    for i in 1..=modes {
        for j in 1..=modes {
            let coeff = terms.t_at(i, j);
            if coeff == 0.0 {
                continue;
            }
            scale += coeff.abs();
            asm.feed(&TermString {
                coeff,
                pieces: vec![(i, Piece::Create), (j, Piece::Annihilate)],
            });
        }
    }
    let pair_list = terms.pairs.pairs().to_vec();
    for (row, &(i, j)) in pair_list.iter().enumerate() {
        for (col, &(k, l)) in pair_list.iter().enumerate() {
            let coeff = terms.g[[row, col]];
            if coeff == 0.0 {
                continue;
            }
            scale += coeff.abs();
            asm.feed(&TermString {
                coeff,
                pieces: vec![
                    (i, Piece::Create),
                    (j, Piece::Create),
                    (k, Piece::Annihilate),
                    (l, Piece::Annihilate),
                ],
            });
        }
    }
    asm.finish(scale.max(1.0))
}

/// Operator chain for the Hamiltonian of `table` restricted to a chain of
/// `modes` positions (the first `modes / 2` spatial orbitals).
pub fn mpo_from_integrals(table: &IntegralTable, modes: usize) -> HamiltonianResult<Mpo> {
    let terms = table.spin_orbital_terms(modes)?;
    Ok(mpo_from_terms(&terms))
}

/// Quadratic sector penalty `λ(N̂−n)² + λ(Ŝz−sz)²` as an operator chain.
/// Either target may be absent. Expanding the squares gives a scalar, a
/// diagonal one-body piece, and density-density couplings; the latter enter
/// the antisymmetrized two-body matrix as `G_{(i,j),(i,j)} = −d_ij` since
/// `a†_i a†_j a_i a_j = −n_i n_j`.
pub fn sector_penalty_mpo(
    modes: usize,
    particles: Option<usize>,
    two_sz: Option<i64>,
    lambda: f64,
) -> HamiltonianResult<Mpo> {
    if modes % 2 != 0 {
        return Err(HamiltonianError::OddModes { modes });
    }
    let pairs = crate::hamiltonian::PairIndex::new(modes);
    let np = pairs.count();
    let mut t = Array2::zeros((modes, modes));
    let mut g = Array2::zeros((np, np));
    let mut e_core = 0.0;
    let spin_of = |i: usize| if i % 2 == 1 { 0.5 } else { -0.5 };

    if let Some(n) = particles {
        let n = n as f64;
        e_core += lambda * n * n;
        for i in 1..=modes {
            t[[i - 1, i - 1]] += lambda * (1.0 - 2.0 * n);
        }
        for (idx, &(_i, _j)) in pairs.pairs().iter().enumerate() {
            g[[idx, idx]] += -(2.0 * lambda);
        }
    }
    if let Some(ms) = two_sz {
        let sz = ms as f64 / 2.0;
        e_core += lambda * sz * sz;
        for i in 1..=modes {
            let s = spin_of(i);
            t[[i - 1, i - 1]] += lambda * (s * s - 2.0 * sz * s);
        }
        for (idx, &(i, j)) in pairs.pairs().iter().enumerate() {
            g[[idx, idx]] += -(2.0 * lambda * spin_of(i) * spin_of(j));
        }
    }

    let terms = SpinOrbitalTerms {
        modes,
        e_core,
        t,
        g,
        pairs,
    };
    Ok(mpo_from_terms(&terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{FockSector, SectorBasis, StateVector};
    use crate::hamiltonian::{build_model, HamiltonianOperator, ModelSpec};

    /// Dense matrix of a sector-bound operator via its matrix-free action.
    fn dense_from_apply(op: &HamiltonianOperator) -> DenseMatrix {
        let dim = op.dim();
        let mut h = Array2::zeros((dim, dim));
        let mut unit = vec![C64::new(0.0, 0.0); dim];
        for col in 0..dim {
            unit[col] = C64::new(1.0, 0.0);
            for (row, value) in op.apply_amplitudes(&unit).into_iter().enumerate() {
                h[[row, col]] = value;
            }
            unit[col] = C64::new(0.0, 0.0);
        }
        h
    }

    fn assert_matches_apply(table: &IntegralTable, modes: usize, tol: f64) {
        let mpo = mpo_from_integrals(table, modes).unwrap();
        let dense = mpo.dense_operator().unwrap();
        let full = FockSector::full(modes).unwrap();
        let op = HamiltonianOperator::new(table, full).unwrap();
        let oracle = dense_from_apply(&op);
        let mut worst = 0.0f64;
        for ((a, b), _) in dense.indexed_iter() {
            worst = worst.max((dense[[a, b]] - oracle[[a, b]]).norm());
        }
        assert!(
            worst <= tol,
            "operator chain deviates from the direct action by {worst:.3e}"
        );
    }

    #[test]
    fn scalar_only_operator_has_unit_bond_dimension() {
        let mut table = build_model(&ModelSpec::HubbardChain { l: 3, t: 0.0, u: 0.0 }).unwrap();
        table.e_core = 1.0;
        let mpo = mpo_from_integrals(&table, 6).unwrap();
        assert!(mpo.bond_dims().iter().all(|&d| d == 1));
        let dense = mpo.dense_operator().unwrap();
        for ((a, b), v) in dense.indexed_iter() {
            let expect = if a == b { 1.0 } else { 0.0 };
            assert!((v - C64::new(expect, 0.0)).norm() <= 1e-14);
        }
    }

    #[test]
    fn single_level_shift_acts_as_the_number_operator() {
        // h_11 = 0.9 on one orbital counts occupation of both spin modes.
        let mut table = IntegralTable::new(1).unwrap();
        table.set_h(1, 1, 0.9);
        let mpo = mpo_from_integrals(&table, 2).unwrap();
        let dense = mpo.dense_operator().unwrap();
        // Basis order: |00⟩, |01⟩, |10⟩, |11⟩ with site 1 as the high bit.
        let diag: Vec<f64> = (0..4).map(|i| dense[[i, i]].re).collect();
        assert_eq!(diag, vec![0.0, 0.9, 0.9, 1.8]);
        assert_matches_apply(&table, 2, 1e-12);
    }

    #[test]
    fn hubbard_chain_expansion_matches_the_direct_action() {
        let table = build_model(&ModelSpec::HubbardChain { l: 3, t: 1.0, u: 2.0 }).unwrap();
        assert_matches_apply(&table, 6, 1e-10);
    }

    #[test]
    fn random_interaction_expansion_matches_the_direct_action() {
        let spec = ModelSpec::DecayingInteraction {
            l: 4,
            a: 1.0,
            g: 0.9,
            gamma: 0.3,
            seed: 11,
        };
        let table = build_model(&spec).unwrap();
        assert_matches_apply(&table, 8, 1e-10);
        // Truncated chain of the same table.
        assert_matches_apply(&table, 6, 1e-10);
    }

    #[test]
    fn expansion_is_hermitian() {
        let spec = ModelSpec::DecayingInteraction {
            l: 3,
            a: 0.5,
            g: 1.3,
            gamma: 0.4,
            seed: 13,
        };
        let table = build_model(&spec).unwrap();
        let mpo = mpo_from_integrals(&table, 6).unwrap();
        let dense = mpo.dense_operator().unwrap();
        for a in 0..dense.nrows() {
            for b in 0..dense.ncols() {
                assert!((dense[[a, b]] - dense[[b, a]].conj()).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn bond_dimensions_grow_quadratically_not_quartically() {
        let spec = ModelSpec::DecayingInteraction {
            l: 6,
            a: 1.0,
            g: 0.5,
            gamma: 0.2,
            seed: 17,
        };
        let table = build_model(&spec).unwrap();
        let mpo = mpo_from_integrals(&table, 12).unwrap();
        let max = mpo.max_bond_dim();
        // Pair channels dominate, so the worst bond stays near
        // (2K choose 2) + a linear tail; a term-per-channel layout would sit
        // in the thousands for 12 modes.
        let quadratic_cap = 2 + 2 * 24 + 24 * 23 / 2;
        assert!(
            max < quadratic_cap,
            "operator bond dimension {max} beyond the pair-channel budget"
        );
        assert!(max > 24, "operator bond dimension {max} suspiciously small");
    }

    #[test]
    fn penalty_chain_is_diagonal_with_quadratic_values() {
        let lambda = 3.0;
        let mpo = sector_penalty_mpo(6, Some(2), Some(0), lambda).unwrap();
        let dense = mpo.dense_operator().unwrap();
        let full = SectorBasis::new(FockSector::full(6).unwrap()).unwrap();
        for (rank, label) in full.iter().enumerate() {
            let n = label.particle_count() as f64;
            let sz = label.two_sz() as f64 / 2.0;
            let expect = lambda * ((n - 2.0) * (n - 2.0) + sz * sz);
            assert!(
                (dense[[rank, rank]].re - expect).abs() <= 1e-10,
                "label {label}: {} vs {expect}",
                dense[[rank, rank]].re
            );
            for other in 0..full.dim() {
                if other != rank {
                    assert!(dense[[rank, other]].norm() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn direct_sum_reproduces_the_operator_sum() {
        let table = build_model(&ModelSpec::HubbardChain { l: 2, t: 1.0, u: 4.0 }).unwrap();
        let h = mpo_from_integrals(&table, 4).unwrap();
        let pen = sector_penalty_mpo(4, Some(2), Some(0), 2.5).unwrap();
        let total = mpo_sum(&h, &pen).unwrap();
        let dense = total.dense_operator().unwrap();
        let ha = h.dense_operator().unwrap();
        let hb = pen.dense_operator().unwrap();
        for a in 0..dense.nrows() {
            for b in 0..dense.ncols() {
                assert!((dense[[a, b]] - ha[[a, b]] - hb[[a, b]]).norm() <= 1e-12);
            }
        }
        assert_eq!(total.bond_dims()[0], 1);
        assert_eq!(total.bond_dims()[4], 1);
    }

    #[test]
    fn sector_states_see_no_penalty() {
        use rand::SeedableRng;
        let pen = sector_penalty_mpo(8, Some(3), Some(1), 7.0).unwrap();
        let dense = pen.dense_operator().unwrap();
        let sector = FockSector::new(8, Some(3), Some(1)).unwrap();
        let basis = SectorBasis::new(sector).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let state = StateVector::random_normalized(basis, &mut rng).to_full().unwrap();
        let amps = Array1::from(state.amplitudes().to_vec());
        let image = dense.dot(&amps);
        let norm: f64 = image.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        assert!(norm <= 1e-10, "penalty leaked {norm:.3e} into its own sector");
    }

    #[test]
    fn mixed_two_body_string_matches_on_a_bespoke_table() {
        // One cross term (12|12) exercises strings with all four pieces on
        // distinct chain positions and both spin channels.
        let mut table = IntegralTable::new(2).unwrap();
        table.set_h(1, 2, -0.6);
        table.set_v(1, 2, 1, 2, 0.8);
        table.set_v(1, 1, 2, 2, 0.3);
        assert_matches_apply(&table, 4, 1e-12);
    }
}
