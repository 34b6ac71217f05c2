//! Dense complex linear algebra used by the decomposition and the baselines.
//!
//! The singular value decomposition is a one-sided (Hestenes) Jacobi method.
//! It is slower than bidiagonalization for large matrices but computes small
//! singular values to high relative accuracy, and the orthogonality of the
//! right vectors does not degrade with the condition number.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

const MAX_SWEEPS: usize = 80;

/// Thin singular value decomposition `A = U diag(sigma) V^H`.
///
/// With `k = min(m, n)`, `u` is `m x k`, `v` is `n x k`, and `sigma` holds `k`
/// non-negative values in descending order. Columns of `u` and `v` are
/// orthonormal, including those paired with zero singular values.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMatrix,
    pub sigma: Vec<f64>,
    pub v: CMatrix,
}

impl Svd {
    pub fn rank_k(&self) -> usize {
        self.sigma.len()
    }

    /// Rebuilds `U diag(sigma) V^H`.
    pub fn reconstruct(&self) -> CMatrix {
        let mut us = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.adjoint()
    }
}

pub fn svd(a: &CMatrix) -> Result<Svd> {
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numeric(
            "singular value decomposition of a matrix with non-finite entries".into(),
        ));
    }
    let (m, n) = a.shape();
    if m >= n {
        jacobi_tall(a)
    } else {
        // A^H = U' S V'^H  =>  A = V' S U'^H
        let t = jacobi_tall(&a.adjoint())?;
        Ok(Svd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        })
    }
}

fn jacobi_tall(a: &CMatrix) -> Result<Svd> {
    let (m, n) = a.shape();
    // Column-major storage: column j occupies work[j*m..(j+1)*m].
    let mut work: Vec<Complex64> = a.as_slice().to_vec();
    let mut vwork: Vec<Complex64> = CMatrix::identity(n, n).as_slice().to_vec();
    let mut norms: Vec<f64> = (0..n).map(|j| sq_norm(&work[j * m..(j + 1) * m])).collect();

    let tol = f64::EPSILON * (m as f64).sqrt();
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for i in 0..n - 1 {
            for j in i + 1..n {
                let alpha = norms[i];
                let beta = norms[j];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let (ci, cj) = pair_mut(&mut work, m, i, j);
                let gamma = dot_conj(ci, cj);
                let g = gamma.norm();
                if g <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let phase = (gamma / g).conj();
                rotate(ci, cj, c, s, phase);
                let (vi, vj) = pair_mut(&mut vwork, n, i, j);
                rotate(vi, vj, c, s, phase);
                norms[i] = (alpha - t * g).max(0.0);
                norms[j] = beta + t * g;
            }
        }
        // Refresh the running norms so rounding in the updates cannot accumulate.
        for (j, nj) in norms.iter_mut().enumerate() {
            *nj = sq_norm(&work[j * m..(j + 1) * m]);
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::Numeric(format!(
            "Jacobi SVD did not converge in {MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let sig: Vec<f64> = norms.iter().map(|x| x.sqrt()).collect();
    order.sort_by(|&x, &y| sig[y].total_cmp(&sig[x]));

    let smax = order.first().map(|&j| sig[j]).unwrap_or(0.0);
    let null_tol = smax * (m.max(n) as f64) * f64::EPSILON;
    let mut u = CMatrix::zeros(m, n);
    let mut v = CMatrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        let col = &work[j * m..(j + 1) * m];
        let s = sig[j];
        if s > null_tol {
            for r in 0..m {
                u[(r, k)] = col[r] / s;
            }
            sigma.push(s);
        } else {
            deficient.push(k);
            sigma.push(if s > 0.0 { s } else { 0.0 });
        }
        for r in 0..n {
            v[(r, k)] = vwork[j * n + r];
        }
    }
    for k in deficient {
        complete_column(&mut u, k);
    }
    reorthogonalize(&mut u);
    Ok(Svd { u, sigma, v })
}

/// Left vectors are recovered as `A v_j / sigma_j`, whose orthogonality is
/// only `eps * sigma_1 / sigma_j`. Two passes of modified Gram-Schmidt in
/// descending-sigma order restore it; the change to `sigma_j u_j` stays at
/// the rounding level of `A v_j`.
fn reorthogonalize(q: &mut CMatrix) {
    let n = q.ncols();
    for _ in 0..2 {
        for k in 1..n {
            for j in 0..k {
                let (head, mut tail) = q.columns_range_pair_mut(j, k..);
                let mut col = tail.column_mut(0);
                let proj = head.dotc(&col);
                col.axpy(-proj, &head, Complex64::new(1.0, 0.0));
            }
            let nrm = q.column(k).norm();
            if nrm < 0.5 {
                complete_column(q, k);
            } else {
                q.column_mut(k).unscale_mut(nrm);
            }
        }
    }
}

/// Replaces column `k` of `q` with a unit vector orthogonal to every other
/// non-zero column, trying standard basis vectors in turn.
fn complete_column(q: &mut CMatrix, k: usize) {
    let (m, n) = q.shape();
    for e in 0..m {
        let mut cand = nalgebra::DVector::<Complex64>::zeros(m);
        cand[e] = Complex64::new(1.0, 0.0);
        // Two passes of classical Gram-Schmidt.
        for _ in 0..2 {
            for j in 0..n {
                if j == k {
                    continue;
                }
                let qj = q.column(j);
                if qj.norm_squared() == 0.0 {
                    continue;
                }
                let proj = qj.dotc(&cand);
                cand -= qj * proj;
            }
        }
        let nrm = cand.norm();
        if nrm > 0.5 {
            q.set_column(k, &(cand / Complex64::new(nrm, 0.0)));
            return;
        }
    }
}

#[inline]
fn pair_mut(buf: &mut [Complex64], len: usize, i: usize, j: usize) -> (&mut [Complex64], &mut [Complex64]) {
    debug_assert!(i < j);
    let (lo, hi) = buf.split_at_mut(j * len);
    (&mut lo[i * len..(i + 1) * len], &mut hi[..len])
}

#[inline]
fn sq_norm(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

/// `x^H y`
#[inline]
fn dot_conj(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (a, b) in x.iter().zip(y) {
        re += a.re * b.re + a.im * b.im;
        im += a.re * b.im - a.im * b.re;
    }
    Complex64::new(re, im)
}

/// x' = c x - s p y,  y' = s x + c p y
#[inline]
fn rotate(x: &mut [Complex64], y: &mut [Complex64], c: f64, s: f64, p: Complex64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let pb = p * *b;
        let na = *a * c - pb * s;
        let nb = *a * s + pb * c;
        *a = na;
        *b = nb;
    }
}

/// Moore-Penrose pseudo-inverse of a full-row-rank `m x n` matrix (`m <= n`),
/// `A^H (A A^H + eps I)^-1`. `eps = 0` gives the exact right inverse.
///
/// Returns `None` when the Gram matrix cannot be factored or its Cholesky
/// pivots span more than 12 decades, which signals a rank-deficient input to
/// callers that want to retry with `eps > 0`.
pub fn right_pinv(a: &CMatrix, eps: f64) -> Option<CMatrix> {
    let (m, _) = a.shape();
    let mut gram = a * a.adjoint();
    for i in 0..m {
        gram[(i, i)] += Complex64::new(eps, 0.0);
    }
    let chol = gram.cholesky()?;
    let pivots: Vec<f64> = chol.l_dirty().diagonal().iter().map(|z| z.norm_sqr()).collect();
    let max = pivots.iter().copied().fold(0.0, f64::max);
    let min = pivots.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 1e-12 * max) {
        return None;
    }
    Some(a.adjoint() * chol.inverse())
}

pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest absolute entry of `Q^H Q - I`.
pub fn gram_defect(q: &CMatrix) -> f64 {
    let g = q.adjoint() * q;
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(m: usize, n: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMatrix::from_fn(m, n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn reconstructs_tall_wide_square() {
        for (m, n) in [(6, 4), (4, 6), (5, 5), (1, 3), (3, 1)] {
            let a = random(m, n, (m * 10 + n) as u64);
            let d = svd(&a).unwrap();
            let err = frobenius(&(d.reconstruct() - &a)) / frobenius(&a);
            assert!(err < 1e-13, "{m}x{n}: {err}");
            assert!(gram_defect(&d.u) < 1e-13);
            assert!(gram_defect(&d.v) < 1e-13);
            assert!(d.sigma.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rank_deficient_completes_basis() {
        let a = random(5, 1, 3);
        let b = random(1, 5, 4);
        let rank1 = &a * &b;
        let d = svd(&rank1).unwrap();
        assert!(d.sigma[1] < 1e-12 * d.sigma[0]);
        assert!(gram_defect(&d.u) < 1e-12);
        assert!(gram_defect(&d.v) < 1e-12);
        let zero = CMatrix::zeros(3, 3);
        let d = svd(&zero).unwrap();
        assert_eq!(d.sigma, vec![0.0; 3]);
        assert!(gram_defect(&d.u) < 1e-14);
    }

    #[test]
    fn rejects_nan() {
        let mut a = random(2, 2, 1);
        a[(0, 1)] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(svd(&a), Err(Error::Numeric(_))));
    }

    #[test]
    fn right_pinv_is_right_inverse() {
        let a = random(3, 5, 9);
        let p = right_pinv(&a, 0.0).unwrap();
        let id = &a * &p;
        assert!(frobenius(&(id - CMatrix::identity(3, 3))) < 1e-12);
    }
}
