//! Dense linear-algebra contracts shared by the numeric modules.
//!
//! Matrices are complex, row-major [`ndarray::Array2`] values. Thin SVD and
//! Hermitian eigensolvers delegate to LAPACK; the Householder construction
//! and the iterative extremal eigensolver are implemented here. All
//! factorizations obey the tolerances in [`crate::tol`] and the SVD applies
//! a deterministic phase convention so repeated runs of the same input
//! produce identical factors.

use ndarray::prelude::*;
use ndarray_linalg::{Eigh, JobSvd, SVDDCInto, UPLO};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tol;

// The LAPACK entry points ndarray-linalg calls resolve from the system
// OpenBLAS; recording the dependency here propagates it to every binary
// that links this library.
#[link(name = "openblas")]
extern "C" {}

/// Complex dense matrix in standard row-major layout.
pub type DenseMatrix = Array2<C64>;

#[derive(Debug, Error)]
pub enum KernelError {
    /// The LAPACK backend reported a failure.
    #[error("linear-algebra backend failure: {0}")]
    Backend(String),
    /// An operation required a nonzero vector.
    #[error("vector has zero norm")]
    ZeroVector,
    /// A matrix expected to be Hermitian deviated beyond tolerance.
    #[error("matrix deviates from Hermitian by {deviation:.3e}")]
    NotHermitian { deviation: f64 },
    /// The iterative eigensolver exhausted its iteration budget.
    #[error(
        "extremal eigensolver did not reach tolerance {tol:.3e} in {iterations} iterations \
         (best residual {best_residual:.3e})"
    )]
    NoConvergence {
        tol: f64,
        iterations: usize,
        best_residual: f64,
    },
    /// An empty matrix or vector was supplied.
    #[error("empty operand")]
    EmptyOperand,
}

pub type KernelResult<T> = Result<T, KernelError>;

/// Economy-size singular value decomposition `a = u * diag(sigma) * vh`.
///
/// `u` has orthonormal columns, `vh` orthonormal rows, and `sigma` is
/// non-increasing. Each column of `u` is rotated so its entry of largest
/// magnitude is real and positive (ties resolved by the first such entry),
/// with the inverse rotation applied to the matching row of `vh`.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub vh: DenseMatrix,
}

impl ThinSvd {
    /// Number of singular values above `RANK_CUT` relative to the largest.
    pub fn effective_rank(&self) -> usize {
        effective_rank(&self.sigma)
    }

    /// `u * diag(sigma) * vh`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut scaled = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            scaled.column_mut(j).mapv_inplace(|x| x * *s);
        }
        scaled.dot(&self.vh)
    }
}

/// Number of entries of a non-increasing singular value list that exceed
/// the relative zero cutoff.
pub fn effective_rank(sigma: &[f64]) -> usize {
    match sigma.first() {
        None => 0,
        Some(&s0) if s0 <= 0.0 => 0,
        Some(&s0) => sigma.iter().take_while(|&&s| s > tol::RANK_CUT * s0).count(),
    }
}

/// Rebuild with C-contiguous strides. Owned arrays produced by slicing can
/// carry zero strides on singleton axes, which the LAPACK layout check
/// rejects.
pub fn canonical_layout(m: DenseMatrix) -> DenseMatrix {
    let (r, c) = m.dim();
    if m.strides() == [c as isize, 1] {
        m
    } else {
        Array2::from_shape_vec((r, c), m.iter().cloned().collect())
            .expect("element count preserved")
    }
}

/// Thin SVD with the deterministic phase convention.
pub fn thin_svd(a: DenseMatrix) -> KernelResult<ThinSvd> {
    let (rows, cols) = a.dim();
    if rows == 0 || cols == 0 {
        return Err(KernelError::EmptyOperand);
    }
    let (u, sigma, vh) = canonical_layout(a)
        .svddc_into(JobSvd::Some)
        .map_err(|e| KernelError::Backend(e.to_string()))?;
    let mut u = u.expect("economy SVD returns U");
    let mut vh = vh.expect("economy SVD returns VH");
    let sigma: Vec<f64> = sigma.to_vec();
    for j in 0..u.ncols() {
        let mut best = 0usize;
        let mut best_mag = 0.0f64;
        for (i, x) in u.column(j).iter().enumerate() {
            let m = x.norm();
            if m > best_mag {
                best_mag = m;
                best = i;
            }
        }
        if best_mag == 0.0 {
            continue;
        }
        let phase = u[[best, j]] / best_mag;
        let conj = phase.conj();
        u.column_mut(j).mapv_inplace(|x| x * conj);
        if j < vh.nrows() {
            vh.row_mut(j).mapv_inplace(|x| x * phase);
        }
    }
    Ok(ThinSvd { u, sigma, vh })
}

/// Unitary `q` with `q^H v = ||v|| e_last`, built from a single Householder
/// reflection and a phase. The zero vector has no such gauge and is an
/// error.
pub fn householder_to_last(v: ArrayView1<C64>) -> KernelResult<DenseMatrix> {
    let n = v.len();
    if n == 0 {
        return Err(KernelError::EmptyOperand);
    }
    let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(KernelError::ZeroVector);
    }
    let u = v.mapv(|x| x / norm);
    // Reflect u onto alpha * e_last with |alpha| = 1 chosen to avoid
    // cancellation, then absorb alpha by scaling the last column.
    let tail = u[n - 1];
    let alpha = if tail.norm() > 0.0 {
        -tail / tail.norm()
    } else {
        -C64::new(1.0, 0.0)
    };
    let mut w = u.to_owned();
    w[n - 1] -= alpha;
    let wsq = w.iter().map(|x| x.norm_sqr()).sum::<f64>();
    let mut h = Array2::from_diag_elem(n, C64::new(1.0, 0.0));
    if wsq > 0.0 {
        let scale = C64::new(2.0 / wsq, 0.0);
        for i in 0..n {
            for j in 0..n {
                h[[i, j]] -= scale * w[i] * w[j].conj();
            }
        }
    }
    // h * u = alpha * e_last and h is Hermitian unitary; q = h * diag(..., alpha)
    // then satisfies q^H v = ||v|| e_last.
    h.column_mut(n - 1).mapv_inplace(|x| x * alpha);
    Ok(h)
}

fn check_hermitian(h: &DenseMatrix) -> KernelResult<()> {
    let n = h.nrows();
    if n == 0 || h.ncols() != n {
        return Err(KernelError::EmptyOperand);
    }
    let mut scale = 0.0f64;
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            scale = scale.max(h[[i, j]].norm());
            dev = dev.max((h[[i, j]] - h[[j, i]].conj()).norm());
        }
    }
    if dev > 1e-10 * scale.max(1.0) {
        return Err(KernelError::NotHermitian { deviation: dev });
    }
    Ok(())
}

/// Full Hermitian eigendecomposition, eigenvalues ascending.
pub fn eigh_full(h: &DenseMatrix) -> KernelResult<(Vec<f64>, DenseMatrix)> {
    check_hermitian(h)?;
    let (vals, vecs) = canonical_layout(h.clone())
        .eigh(UPLO::Lower)
        .map_err(|e| KernelError::Backend(e.to_string()))?;
    // Depending on how the backend maps row-major storage onto LAPACK's
    // column-major convention, the returned columns can be eigenvectors of
    // the conjugated matrix instead (invisible on real input). Decide by
    // residual on the extremal pair and conjugate back when needed.
    let resid = |v: ArrayView1<C64>| -> f64 {
        let hv = h.dot(&v);
        hv.iter()
            .zip(v.iter())
            .map(|(y, x)| (y - x * C64::new(vals[0], 0.0)).norm_sqr())
            .sum::<f64>()
            .sqrt()
    };
    let plain = resid(vecs.column(0));
    let conjugated = vecs.mapv(|z| z.conj());
    let flipped = resid(conjugated.column(0));
    if flipped < plain {
        return Ok((vals.to_vec(), conjugated));
    }
    Ok((vals.to_vec(), vecs))
}

/// Smallest eigenpair of a Hermitian matrix.
pub fn eigh_smallest(h: &DenseMatrix) -> KernelResult<(f64, Array1<C64>)> {
    let (vals, vecs) = eigh_full(h)?;
    Ok((vals[0], vecs.column(0).to_owned()))
}

/// Result of the iterative extremal eigensolver.
#[derive(Debug, Clone)]
pub struct ExtremalEig {
    pub value: f64,
    pub vector: Vec<C64>,
    /// Second-lowest Ritz value, when the Krylov space exposed one.
    pub second_value: Option<f64>,
    /// Final residual norm `||H x - value x||`.
    pub residual: f64,
    pub iterations: usize,
}

fn dotc(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm2(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Smallest eigenpair of a Hermitian operator given through its action.
///
/// Lanczos iteration with full reorthogonalization against the entire
/// Krylov basis; the returned residual satisfies
/// `||H x - value x|| <= tol * scale` with `scale` the largest Ritz value
/// magnitude seen (a lower bound on `||H||`). An invariant subspace is
/// escaped with a deterministic random restart vector. `init` seeds the
/// first Krylov vector when supplied and nonzero.
pub fn lanczos_smallest<F>(
    mut apply: F,
    dim: usize,
    tol_rel: f64,
    max_iter: usize,
    init: Option<&[C64]>,
) -> KernelResult<ExtremalEig>
where
    F: FnMut(&[C64]) -> Vec<C64>,
{
    if dim == 0 {
        return Err(KernelError::EmptyOperand);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x9d2c_5681_0b4f_3f1d ^ dim as u64);
    let random_unit = |rng: &mut ChaCha8Rng| -> Vec<C64> {
        let v: Vec<C64> = (0..dim)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let n = norm2(&v);
        v.into_iter().map(|x| x / n).collect()
    };
    let mut q = match init {
        Some(v) if v.len() == dim && norm2(v) > 0.0 => {
            let n = norm2(v);
            v.iter().map(|x| x / n).collect()
        }
        _ => random_unit(&mut rng),
    };

    let basis_cap = max_iter.min(dim).max(1);
    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(basis_cap);
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut best_residual = f64::INFINITY;
    let mut scale = 0.0f64;

    let reorthogonalize = |v: &mut Vec<C64>, basis: &[Vec<C64>]| {
        for _ in 0..2 {
            for b in basis {
                let c = dotc(b, v);
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= c * y;
                }
            }
        }
    };

    for iteration in 1..=max_iter {
        basis.push(q.clone());
        let mut w = apply(&q);
        let alpha = dotc(&q, &w).re;
        alphas.push(alpha);
        reorthogonalize(&mut w, &basis);
        let beta = norm2(&w);

        // Ritz data from the tridiagonal projection.
        let m = alphas.len();
        let mut t = Array2::<f64>::zeros((m, m));
        for i in 0..m {
            t[[i, i]] = alphas[i];
            if i + 1 < m {
                t[[i, i + 1]] = betas[i];
                t[[i + 1, i]] = betas[i];
            }
        }
        let (tvals, tvecs) = t
            .eigh(UPLO::Lower)
            .map_err(|e| KernelError::Backend(e.to_string()))?;
        scale = scale
            .max(tvals[0].abs())
            .max(tvals[m - 1].abs())
            .max(f64::MIN_POSITIVE);
        let resid_est = beta * tvecs[[m - 1, 0]].abs();
        best_residual = best_residual.min(resid_est);

        let full_space = basis.len() == dim;
        let exhausted = basis.len() == basis_cap;
        let breakdown = beta <= f64::EPSILON * scale.max(1.0) * 16.0;
        // A breakdown before the basis spans the whole space means the
        // Krylov space is invariant but possibly misses the ground state;
        // restart instead of accepting its Ritz pair.
        let accept = (resid_est <= tol_rel * scale && (!breakdown || full_space))
            || exhausted
            || iteration == max_iter;
        if accept {
            // Assemble the Ritz vector and measure the true residual.
            let mut x = vec![C64::new(0.0, 0.0); dim];
            for (j, b) in basis.iter().enumerate() {
                let c = tvecs[[j, 0]];
                for (xi, bi) in x.iter_mut().zip(b) {
                    *xi += C64::new(c, 0.0) * bi;
                }
            }
            let n = norm2(&x);
            for xi in &mut x {
                *xi /= n;
            }
            let hx = apply(&x);
            let value = dotc(&x, &hx).re;
            let mut r = hx;
            for (ri, xi) in r.iter_mut().zip(&x) {
                *ri -= C64::new(value, 0.0) * xi;
            }
            let residual = norm2(&r);
            best_residual = best_residual.min(residual);
            if residual <= tol_rel * scale {
                return Ok(ExtremalEig {
                    value,
                    vector: x,
                    second_value: if m > 1 { Some(tvals[1]) } else { None },
                    residual,
                    iterations: iteration,
                });
            }
            if exhausted || iteration == max_iter {
                return Err(KernelError::NoConvergence {
                    tol: tol_rel,
                    iterations: iteration,
                    best_residual,
                });
            }
        }

        if breakdown {
            // Invariant subspace: restart orthogonally to everything seen.
            let mut fresh = random_unit(&mut rng);
            reorthogonalize(&mut fresh, &basis);
            let n = norm2(&fresh);
            if n <= f64::EPSILON {
                return Err(KernelError::NoConvergence {
                    tol: tol_rel,
                    iterations: iteration,
                    best_residual,
                });
            }
            for x in &mut fresh {
                *x /= n;
            }
            betas.push(0.0);
            q = fresh;
        } else {
            betas.push(beta);
            q = w.into_iter().map(|x| x / beta).collect();
        }
    }
    Err(KernelError::NoConvergence {
        tol: tol_rel,
        iterations: max_iter,
        best_residual,
    })
}
