//! Symmetric eigensolver at arbitrary precision.
//!
//! Two routes share the same entry point. Cyclic Jacobi handles small
//! matrices and every request for eigenvectors. Larger eigenvalue-only
//! problems go through Householder tridiagonalization followed by implicit
//! QL, which does roughly a tenth of the work of Jacobi at the same width.
//! Rows that are exactly zero are split off first and contribute exact zero
//! eigenvalues.

use serde::Serialize;

use crate::error::{capacity, domain, Error, Result};
use crate::real::{Precision, Real};

/// Largest accepted dimension.
pub const MAX_DIM: usize = 1 << 14;

/// Jacobi is used up to this (deflated) dimension when no vectors are needed.
pub const JACOBI_MAX_DIM: usize = 48;

const MAX_SWEEPS: u32 = 100;
const QL_MAX_ITER: u32 = 60;

/// Relative gap that starts a new degeneracy cluster.
pub const CLUSTER_GAP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Jacobi when small or vectors are wanted, QL otherwise.
    Auto,
    Jacobi,
    TridiagonalQl,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumResult<T> {
    /// Ascending.
    pub eigenvalues: Vec<T>,
    /// `(mean value, multiplicity)` per cluster, ascending.
    pub degeneracy_clusters: Vec<(T, usize)>,
    /// Off-diagonal Frobenius norm at exit (Jacobi) or largest remaining
    /// subdiagonal entry (QL).
    pub offdiag_residual: T,
    /// Jacobi sweeps, or QL iterations.
    pub sweeps: u32,
    pub method: Method,
    /// Row-major `dim x dim`; column `j` belongs to `eigenvalues[j]`.
    #[serde(skip)]
    pub vectors: Option<Vec<T>>,
    /// Frobenius norm of the input.
    pub input_norm: T,
    pub precision: Precision,
}

impl<T: Real> SpectrumResult<T> {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Column `j` of the eigenvector matrix.
    pub fn vector(&self, j: usize) -> Option<Vec<T>> {
        let v = self.vectors.as_ref()?;
        let n = self.dim();
        Some((0..n).map(|i| v[i * n + j].clone()).collect())
    }

    /// Eigenvalues at most this size count as exact zeros.
    pub fn clamp_threshold(&self) -> T {
        let top = self.eigenvalues.iter().fold(T::zero(self.precision), |m, x| m.max_of(&x.abs()));
        let mut t = top;
        t.mul_assign(&T::from_f64(self.dim() as f64 * self.precision.ulp_scale(15), self.precision));
        t
    }

    /// Eigenvalues above the clamp threshold, descending.
    pub fn clamped(&self) -> Vec<T> {
        let thr = self.clamp_threshold();
        let mut v: Vec<T> = self.eigenvalues.iter().filter(|x| **x > thr).cloned().collect();
        v.reverse();
        v
    }
}

fn frobenius<T: Real>(a: &[T], prec: Precision) -> T {
    let mut s = T::zero(prec);
    for x in a {
        s.mul_add_assign(x, x);
    }
    s.sqrt()
}

/// Eigen-decomposition of the symmetric row-major `dim x dim` matrix `a`.
pub fn symmetric_eigen<T: Real>(a: &[T], dim: usize, prec: Precision, want_vectors: bool) -> Result<SpectrumResult<T>> {
    symmetric_eigen_with(a, dim, prec, want_vectors, Method::Auto)
}

pub fn symmetric_eigen_with<T: Real>(
    a: &[T],
    dim: usize,
    prec: Precision,
    want_vectors: bool,
    method: Method,
) -> Result<SpectrumResult<T>> {
    if dim == 0 || a.len() != dim * dim {
        return Err(domain(format!("expected a non-empty square matrix, got {} entries for dim {dim}", a.len())));
    }
    if dim > MAX_DIM {
        return Err(capacity(format!("dimension {dim} exceeds the eigensolver cap {MAX_DIM}")));
    }
    if want_vectors && method == Method::TridiagonalQl {
        return Err(domain("the QL route computes eigenvalues only"));
    }
    let norm = frobenius(a, prec);
    check_symmetric(a, dim, &norm, prec)?;

    // Exactly zero rows give exact zero eigenvalues.
    let live: Vec<usize> = (0..dim).filter(|&i| a[i * dim..(i + 1) * dim].iter().any(|x| !x.is_zero())).collect();
    let k = live.len();
    let mut sub = Vec::with_capacity(k * k);
    for &i in &live {
        for &j in &live {
            sub.push(a[i * dim + j].clone());
        }
    }
    let use_jacobi = match method {
        Method::Jacobi => true,
        Method::TridiagonalQl => false,
        Method::Auto => want_vectors || k <= JACOBI_MAX_DIM,
    };
    let (vals, vecs, residual, sweeps, used) = if k == 0 {
        (Vec::new(), want_vectors.then(Vec::new), T::zero(prec), 0, Method::Jacobi)
    } else if use_jacobi {
        let (v, w, r, s) = jacobi(sub, k, &norm, prec, want_vectors)?;
        (v, w, r, s, Method::Jacobi)
    } else {
        let (v, r, s) = tridiagonal_ql(sub, k, prec)?;
        (v, None, r, s, Method::TridiagonalQl)
    };

    // merge the zero block back in
    let mut pairs: Vec<(T, Option<Vec<T>>)> = Vec::with_capacity(dim);
    for (j, v) in vals.into_iter().enumerate() {
        let col = vecs.as_ref().map(|w| {
            let mut c = vec![T::zero(prec); dim];
            for (r, &i) in live.iter().enumerate() {
                c[i] = w[r * k + j].clone();
            }
            c
        });
        pairs.push((v, col));
    }
    let mut is_live = vec![false; dim];
    for &i in &live {
        is_live[i] = true;
    }
    for i in (0..dim).filter(|&i| !is_live[i]) {
        let col = want_vectors.then(|| {
            let mut c = vec![T::zero(prec); dim];
            c[i] = T::one(prec);
            c
        });
        pairs.push((T::zero(prec), col));
    }
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(std::cmp::Ordering::Equal));

    let vectors = want_vectors.then(|| {
        let mut v = vec![T::zero(prec); dim * dim];
        for (j, (_, col)) in pairs.iter().enumerate() {
            for (i, x) in col.as_ref().unwrap().iter().enumerate() {
                v[i * dim + j] = x.clone();
            }
        }
        v
    });
    let eigenvalues: Vec<T> = pairs.into_iter().map(|p| p.0).collect();
    let degeneracy_clusters = clusters(&eigenvalues, &norm, prec);
    Ok(SpectrumResult {
        eigenvalues,
        degeneracy_clusters,
        offdiag_residual: residual,
        sweeps,
        method: used,
        vectors,
        input_norm: norm,
        precision: prec,
    })
}

fn check_symmetric<T: Real>(a: &[T], n: usize, norm: &T, prec: Precision) -> Result<()> {
    let mut tol = norm.clone();
    tol.mul_assign(&T::from_f64(n as f64 * prec.ulp_scale(15), prec));
    for i in 0..n {
        for j in i + 1..n {
            if a[i * n + j].sub(&a[j * n + i]).abs() > tol {
                return Err(domain(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Groups ascending eigenvalues whose consecutive relative gap is below
/// [`CLUSTER_GAP`].
pub fn clusters<T: Real>(sorted: &[T], norm: &T, prec: Precision) -> Vec<(T, usize)> {
    let mut floor = norm.clone();
    floor.mul_assign(&T::from_f64(sorted.len() as f64 * prec.ulp_scale(15), prec));
    let gap = T::from_f64(CLUSTER_GAP, prec);
    let mut out: Vec<(T, usize)> = Vec::new();
    let mut sum = T::zero(prec);
    let mut count = 0usize;
    for (i, x) in sorted.iter().enumerate() {
        if i > 0 {
            let prev = &sorted[i - 1];
            let mut scale = prev.abs().max_of(&x.abs());
            scale.mul_assign(&gap);
            let scale = scale.max_of(&floor);
            if x.sub(prev) > scale {
                let mut mean = sum.clone();
                mean.div_assign(&T::from_i64(count as i64, prec));
                out.push((mean, count));
                sum = T::zero(prec);
                count = 0;
            }
        }
        sum.add_assign(x);
        count += 1;
    }
    if count > 0 {
        sum.div_assign(&T::from_i64(count as i64, prec));
        out.push((sum, count));
    }
    out
}

type JacobiOut<T> = (Vec<T>, Option<Vec<T>>, T, u32);

/// Cyclic Jacobi on a full row-major copy.
fn jacobi<T: Real>(mut a: Vec<T>, n: usize, norm: &T, prec: Precision, want_vectors: bool) -> Result<JacobiOut<T>> {
    let mut v = want_vectors.then(|| {
        let mut v = vec![T::zero(prec); n * n];
        for i in 0..n {
            v[i * n + i] = T::one(prec);
        }
        v
    });
    let mut tol = norm.clone();
    tol.mul_assign(&T::from_f64(prec.ulp_scale(12), prec));
    let one = T::one(prec);
    let (mut theta, mut t, mut c, mut s, mut tau, mut tmp) =
        (T::zero(prec), T::zero(prec), T::zero(prec), T::zero(prec), T::zero(prec), T::zero(prec));
    let (mut g, mut h, mut apq) = (T::zero(prec), T::zero(prec), T::zero(prec));

    let off_norm = |a: &[T]| {
        let mut s = T::zero(prec);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s.mul_add_assign(&a[i * n + j], &a[i * n + j]);
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    loop {
        let off = off_norm(&a);
        if off <= tol || n == 1 {
            let vals = (0..n).map(|i| a[i * n + i].clone()).collect();
            return Ok((vals, v, off, sweeps));
        }
        if sweeps >= MAX_SWEEPS {
            return Err(Error::Convergence(format!("Jacobi did not converge in {MAX_SWEEPS} sweeps (off = {})", off.to_f64())));
        }
        sweeps += 1;
        // skip small entries early on; they are cleaned up in later sweeps
        let mut skip = off.clone();
        if sweeps <= 3 {
            skip.mul_assign(&T::from_f64(0.2 / (n * n) as f64, prec));
        } else {
            skip = T::zero(prec);
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                apq.assign(&a[p * n + q]);
                if apq.is_zero() || apq.abs() <= skip {
                    continue;
                }
                // theta = (a_qq - a_pp) / (2 a_pq)
                theta.assign(&a[q * n + q]);
                theta.sub_assign(&a[p * n + p]);
                tmp.assign(&apq);
                tmp.add_assign(&apq);
                theta.div_assign(&tmp);
                // t = sgn(theta) / (|theta| + sqrt(theta^2 + 1))
                tmp.assign(&theta);
                tmp.mul_assign(&theta);
                tmp.add_assign(&one);
                tmp.sqrt_assign();
                tmp.add_assign(&theta.abs());
                t.assign(&one);
                t.div_assign(&tmp);
                if theta.is_negative() {
                    t.neg_assign();
                }
                // c = 1/sqrt(t^2+1), s = t c, tau = s/(1+c)
                c.assign(&t);
                c.mul_assign(&t);
                c.add_assign(&one);
                c.sqrt_assign();
                tmp.assign(&one);
                tmp.div_assign(&c);
                c.assign(&tmp);
                s.assign(&t);
                s.mul_assign(&c);
                tau.assign(&one);
                tau.add_assign(&c);
                tmp.assign(&s);
                tmp.div_assign(&tau);
                tau.assign(&tmp);

                // h = t a_pq
                h.assign(&t);
                h.mul_assign(&apq);
                a[p * n + p].sub_assign(&h);
                a[q * n + q].add_assign(&h);
                a[p * n + q] = T::zero(prec);
                a[q * n + p] = T::zero(prec);
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    g.assign(&a[p * n + r]);
                    h.assign(&a[q * n + r]);
                    rotate(&mut a[p * n + r], &g, &h, &s, &tau, &mut tmp, true);
                    rotate(&mut a[q * n + r], &h, &g, &s, &tau, &mut tmp, false);
                    g.assign(&a[p * n + r]);
                    a[r * n + p].assign(&g);
                    g.assign(&a[q * n + r]);
                    a[r * n + q].assign(&g);
                }
                if let Some(v) = v.as_mut() {
                    for r in 0..n {
                        g.assign(&v[r * n + p]);
                        h.assign(&v[r * n + q]);
                        rotate(&mut v[r * n + p], &g, &h, &s, &tau, &mut tmp, true);
                        rotate(&mut v[r * n + q], &h, &g, &s, &tau, &mut tmp, false);
                    }
                }
            }
        }
    }
}

/// `first`: `x = g - s (h + g tau)`, else `x = g + s (h - g tau)` with the
/// roles `(g, h) = (a_q, a_p)`.
#[inline]
fn rotate<T: Real>(x: &mut T, g: &T, h: &T, s: &T, tau: &T, tmp: &mut T, first: bool) {
    tmp.assign(g);
    tmp.mul_assign(tau);
    if first {
        tmp.add_assign(h);
        tmp.mul_assign(s);
        x.assign(g);
        x.sub_assign(tmp);
    } else {
        tmp.neg_assign();
        tmp.add_assign(h);
        tmp.mul_assign(s);
        x.assign(g);
        x.add_assign(tmp);
    }
}

/// Householder reduction to tridiagonal form. Returns `(diag, subdiag)` with
/// `subdiag.len() == n` and a trailing zero.
///
/// Only the lower triangle is read or written. Rows are eliminated from the
/// bottom up so every Householder vector is a contiguous row prefix.
pub fn tridiagonalize<T: Real>(mut a: Vec<T>, n: usize, prec: Precision) -> (Vec<T>, Vec<T>) {
    let mut d = vec![T::zero(prec); n];
    let mut e = vec![T::zero(prec); n];
    let mut v = vec![T::zero(prec); n];
    let mut p = vec![T::zero(prec); n];
    let two = T::from_i64(2, prec);
    let mut tmp = T::zero(prec);
    // Reflections whose head is below rounding level of the whole matrix are
    // skipped; otherwise low-rank inputs shrink to underflow.
    let mut negligible = T::zero(prec);
    for x in &a {
        negligible.mul_add_assign(x, x);
    }
    let eps = T::from_f64(prec.ulp_scale(0), prec);
    negligible.mul_assign(&eps.square());
    for i in (2..n).rev() {
        d[i] = a[i * n + i].clone();
        let x = &a[i * n..i * n + i];
        let head = T::dot(&x[..i - 1], &x[..i - 1]);
        if head <= negligible {
            e[i - 1] = x[i - 1].clone();
            continue;
        }
        let mut alpha = head.add(&x[i - 1].square()).sqrt();
        if !x[i - 1].is_negative() {
            alpha.neg_assign();
        }
        let v = &mut v[..i];
        v.clone_from_slice(x);
        v[i - 1].sub_assign(&alpha);
        e[i - 1] = alpha;
        let mut tau = two.clone();
        tau.div_assign(&T::dot(v, v));

        // p = tau A v over the leading i x i block, lower triangle only
        let p = &mut p[..i];
        for pr in p.iter_mut() {
            *pr = T::zero(prec);
        }
        for r in 0..i {
            let row = &a[r * n..r * n + r];
            let mut acc = a[r * n + r].mul(&v[r]);
            if r > 0 {
                acc.add_assign(&T::dot(row, &v[..r]));
            }
            p[r].add_assign(&acc);
            T::axpy(&mut p[..r], &v[r], row);
        }
        for pr in p.iter_mut() {
            pr.mul_assign(&tau);
        }
        // w = p - (tau/2)(p.v) v, stored in p
        let mut k = T::dot(p, v);
        k.mul_assign(&tau);
        k.div_assign(&two);
        k.neg_assign();
        T::axpy(p, &k, v);
        // A -= v w^T + w v^T
        for r in 0..i {
            let row = &mut a[r * n..r * n + r + 1];
            tmp.assign(&v[r]);
            tmp.neg_assign();
            T::axpy(row, &tmp, &p[..=r]);
            tmp.assign(&p[r]);
            tmp.neg_assign();
            T::axpy(row, &tmp, &v[..=r]);
        }
    }
    if n >= 2 {
        d[1] = a[n + 1].clone();
        e[0] = a[n].clone();
    }
    d[0] = a[0].clone();
    (d, e)
}

fn hypot<T: Real>(a: &T, b: &T) -> T {
    let mut s = a.square();
    s.mul_add_assign(b, b);
    s.sqrt()
}

/// Eigenvalues of a symmetric tridiagonal matrix by implicit QL with Wilkinson
/// shifts. Returns `(ascending eigenvalues, residual, iterations)`.
pub fn tridiagonal_eigenvalues<T: Real>(mut d: Vec<T>, mut e: Vec<T>, prec: Precision) -> Result<(Vec<T>, T, u32)> {
    let n = d.len();
    assert_eq!(e.len(), n);
    let eps = T::from_f64(prec.ulp_scale(0), prec);
    // absolute floor so that clusters of (near) zero eigenvalues deflate
    let mut floor = T::zero(prec);
    for (x, y) in d.iter().zip(&e) {
        floor.mul_add_assign(x, x);
        floor.mul_add_assign(y, y);
        floor.mul_add_assign(y, y);
    }
    floor = floor.sqrt();
    floor.mul_assign(&eps);
    let one = T::one(prec);
    let two = T::from_i64(2, prec);
    let mut total = 0u32;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let mut dd = d[m].abs();
                dd.add_assign(&d[m + 1].abs());
                dd.mul_assign(&eps);
                let em = e[m].abs();
                if em <= dd || em <= floor {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            total += 1;
            if iter > QL_MAX_ITER {
                return Err(Error::Convergence(format!("QL did not converge for eigenvalue {l}")));
            }
            let mut g = d[l + 1].sub(&d[l]);
            g.div_assign(&two.mul(&e[l]));
            let mut r = hypot(&g, &one);
            let mut shift = r.abs();
            if g.is_negative() {
                shift.neg_assign();
            }
            shift.add_assign(&g);
            let mut gg = e[l].div(&shift);
            gg.add_assign(&d[m]);
            gg.sub_assign(&d[l]);
            g = gg;
            let (mut s, mut c, mut p) = (one.clone(), one.clone(), T::zero(prec));
            let mut underflow = false;
            for i in (l..m).rev() {
                let f = s.mul(&e[i]);
                let b = c.mul(&e[i]);
                r = hypot(&f, &g);
                e[i + 1] = r.clone();
                if r.is_zero() {
                    d[i + 1].sub_assign(&p);
                    e[m] = T::zero(prec);
                    underflow = true;
                    break;
                }
                s = f.div(&r);
                c = g.div(&r);
                g = d[i + 1].sub(&p);
                r = d[i].sub(&g);
                r.mul_assign(&s);
                let mut cb = c.mul(&b);
                cb.mul_assign(&two);
                r.add_assign(&cb);
                p = s.mul(&r);
                d[i + 1] = g.add(&p);
                g = c.mul(&r);
                g.sub_assign(&b);
            }
            if underflow {
                continue;
            }
            d[l].sub_assign(&p);
            e[l] = g;
            e[m] = T::zero(prec);
        }
    }
    let residual = e.iter().fold(T::zero(prec), |acc, x| acc.max_of(&x.abs()));
    d.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    Ok((d, residual, total))
}

fn tridiagonal_ql<T: Real>(a: Vec<T>, n: usize, prec: Precision) -> Result<(Vec<T>, T, u32)> {
    let (d, e) = tridiagonalize(a, n, prec);
    tridiagonal_eigenvalues(d, e, prec)
}

/// Entanglement energies `-ln lambda` for eigenvalues above the clamp
/// threshold, ascending.
pub fn entanglement_spectrum<T: Real>(eigs: &SpectrumResult<T>) -> Result<Vec<T>> {
    let kept = eigs.clamped();
    if kept.is_empty() {
        return Err(domain("every eigenvalue is below the clamp threshold"));
    }
    Ok(kept
        .into_iter()
        .map(|mut x| {
            x.ln_assign();
            x.neg_assign();
            x
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::ExtReal;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const Q: Precision = Precision::QUAD;

    fn random_sym<T: Real>(n: usize, seed: u64, prec: Precision) -> Vec<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = vec![T::zero(prec); n * n];
        for i in 0..n {
            for j in i..n {
                let x = T::from_ratio(rng.random_range(-1_000_000i128..=1_000_000), 1_000_000, prec);
                a[i * n + j] = x.clone();
                a[j * n + i] = x;
            }
        }
        a
    }

    fn trace<T: Real>(a: &[T], n: usize, prec: Precision) -> T {
        let mut t = T::zero(prec);
        for i in 0..n {
            t.add_assign(&a[i * n + i]);
        }
        t
    }

    #[test]
    fn identity_and_pauli() {
        let mut id = vec![ExtReal::zero(Q); 64];
        for i in 0..8 {
            id[i * 8 + i] = ExtReal::one(Q);
        }
        let r = symmetric_eigen(&id, 8, Q, true).unwrap();
        assert!(r.eigenvalues.iter().all(|x| *x == ExtReal::one(Q)));
        assert_eq!(r.degeneracy_clusters.len(), 1);
        assert_eq!(r.degeneracy_clusters[0].1, 8);

        let x = [0.0, 1.0, 1.0, 0.0];
        let r = symmetric_eigen(&x, 2, Precision::DOUBLE, true).unwrap();
        assert!((r.eigenvalues[0] + 1.0).abs() < 1e-15 && (r.eigenvalues[1] - 1.0).abs() < 1e-15);
        let v = r.vector(1).unwrap();
        assert!((v[0] - v[1]).abs() < 1e-15);
    }

    #[test]
    fn zero_rows_deflate_exactly() {
        let a = [2.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 2.0];
        let r = symmetric_eigen(&a, 3, Precision::DOUBLE, true).unwrap();
        assert_eq!(r.eigenvalues[0], 0.0);
        assert!((r.eigenvalues[1] - 1.0).abs() < 1e-15 && (r.eigenvalues[2] - 3.0).abs() < 1e-15);
        assert_eq!(r.vector(0).unwrap(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn rejects_bad_input() {
        let a = [1.0, 2.0, 0.0, 1.0];
        assert!(matches!(symmetric_eigen(&a, 2, Precision::DOUBLE, false), Err(Error::Domain(_))));
        assert!(matches!(symmetric_eigen(&a, 3, Precision::DOUBLE, false), Err(Error::Domain(_))));
        let big = vec![0.0f64; 0];
        assert!(matches!(symmetric_eigen(&big, MAX_DIM + 1, Precision::DOUBLE, false), Err(Error::Domain(_))));
    }

    #[test]
    fn routes_agree() {
        for (n, seed) in [(5usize, 1u64), (40, 2), (90, 3)] {
            let a: Vec<ExtReal> = random_sym(n, seed, Q);
            let j = symmetric_eigen_with(&a, n, Q, false, Method::Jacobi).unwrap();
            let t = symmetric_eigen_with(&a, n, Q, false, Method::TridiagonalQl).unwrap();
            for (x, y) in j.eigenvalues.iter().zip(&t.eigenvalues) {
                assert!(x.sub(y).abs().to_f64() < 1e-28, "n={n}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn agrees_with_reference_solver() {
        for seed in 0..10 {
            let n = 20 + 20 * seed as usize;
            let a: Vec<f64> = random_sym(n, seed, Precision::DOUBLE);
            let r = symmetric_eigen(&a, n, Precision::DOUBLE, false).unwrap();
            let m = nalgebra::DMatrix::from_row_slice(n, n, &a);
            let mut reference: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
            reference.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for (x, y) in r.eigenvalues.iter().zip(&reference) {
                assert!((x - y).abs() < 1e-10, "seed {seed}");
            }
        }
    }

    #[test]
    fn precision_scaling() {
        let n = 12;
        let lo: Vec<ExtReal> = random_sym(n, 9, Q);
        let hi: Vec<ExtReal> = lo.iter().map(|x| x.with_precision(Q.doubled())).collect();
        let a = symmetric_eigen_with(&lo, n, Q, false, Method::Jacobi).unwrap();
        let b = symmetric_eigen_with(&hi, n, Q.doubled(), false, Method::Jacobi).unwrap();
        let ratio = a.offdiag_residual.to_f64() / b.offdiag_residual.to_f64().max(f64::MIN_POSITIVE);
        assert!(ratio >= 2f64.powi(40), "ratio {ratio:e}");
    }

    #[test]
    fn clusters_and_energies() {
        let d = [0.5, 0.25, 0.125, 0.125];
        let mut a = vec![0.0; 16];
        for i in 0..4 {
            a[i * 4 + i] = d[i];
        }
        let r = symmetric_eigen(&a, 4, Precision::DOUBLE, false).unwrap();
        let cl: Vec<usize> = r.degeneracy_clusters.iter().map(|c| c.1).collect();
        assert_eq!(cl, vec![2, 1, 1]);
        let e = entanglement_spectrum(&r).unwrap();
        assert!((e[0] - 2f64.ln()).abs() < 1e-15);
        assert!((e[3] - 8f64.ln()).abs() < 1e-15);

        let half = [0.5, 0.0, 0.0, 0.5];
        let r = symmetric_eigen(&half, 2, Precision::DOUBLE, false).unwrap();
        let e = entanglement_spectrum(&r).unwrap();
        assert!(e.iter().all(|x| (x - 2f64.ln()).abs() < 1e-15));

        let zero = [0.0; 4];
        let r = symmetric_eigen(&zero, 2, Precision::DOUBLE, false).unwrap();
        assert!(matches!(entanglement_spectrum(&r), Err(Error::Domain(_))));
    }

    #[test]
    fn low_rank_matrices_stay_finite() {
        // rank 2: u u^T + w w^T; the QL route must not underflow into NaN
        let n = 200;
        let u: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64).collect();
        let w: Vec<f64> = (0..n).map(|i| ((i * 104_729) % 5) as f64 - 2.0).collect();
        let a: Vec<f64> = (0..n * n).map(|k| u[k / n] * u[k % n] + w[k / n] * w[k % n]).collect();
        let r = symmetric_eigen_with(&a, n, Precision::DOUBLE, false, Method::TridiagonalQl).unwrap();
        let uu: f64 = u.iter().map(|x| x * x).sum();
        let ww: f64 = w.iter().map(|x| x * x).sum();
        let uw: f64 = u.iter().zip(&w).map(|(x, y)| x * y).sum();
        // non-zero eigenvalues of [[uu, uw], [uw, ww]]
        let (tr, det) = (uu + ww, uu * ww - uw * uw);
        let top = tr / 2.0 + (tr * tr / 4.0 - det).sqrt();
        let second = tr - top;
        assert!(r.eigenvalues.iter().all(|x| x.is_finite()));
        assert!((r.eigenvalues[n - 1] - top).abs() < 1e-9 * top);
        assert!((r.eigenvalues[n - 2] - second).abs() < 1e-9 * top);
        assert!(r.eigenvalues[..n - 2].iter().all(|x| x.abs() < 1e-10 * top));
    }

    fn check_invariants<T: Real>(n: usize, seed: u64, prec: Precision) {
        let a: Vec<T> = random_sym(n, seed, prec);
        let r = symmetric_eigen(&a, n, prec, true).unwrap();
        let nn = n as f64;
        let scale = r.input_norm.to_f64().max(1.0);
        let mut sum = T::zero(prec);
        for x in &r.eigenvalues {
            sum.add_assign(x);
        }
        let tr = trace(&a, n, prec);
        assert!(sum.sub(&tr).abs().to_f64() < nn * nn * prec.ulp_scale(15) * scale);
        assert!(r.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(r.degeneracy_clusters.iter().map(|c| c.1).sum::<usize>(), n);
        let v = r.vectors.as_ref().unwrap();
        for i in 0..n {
            for j in 0..n {
                // (V^T V)_{ij} and (V L V^T)_{ij}
                let mut g = T::zero(prec);
                let mut rec = T::zero(prec);
                for k in 0..n {
                    g.mul_add_assign(&v[k * n + i], &v[k * n + j]);
                    let mut t = v[i * n + k].mul(&v[j * n + k]);
                    t.mul_assign(&r.eigenvalues[k]);
                    rec.add_assign(&t);
                }
                if i == j {
                    g.sub_assign(&T::one(prec));
                }
                assert!(g.abs().to_f64() < nn * prec.ulp_scale(15));
                assert!(rec.sub(&a[i * n + j]).abs().to_f64() < nn * prec.ulp_scale(12) * scale);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn invariants_quad(n in 1usize..24, seed in any::<u64>()) {
            check_invariants::<ExtReal>(n, seed, Q);
        }

        #[test]
        fn invariants_double(n in 1usize..96, seed in any::<u64>()) {
            check_invariants::<f64>(n, seed, Precision::DOUBLE);
        }
    }
}
