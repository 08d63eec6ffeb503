//! Reduced density matrices for natural bi-partitions, and the analytic
//! Hardy-Littlewood model matrices that approximate them.
//!
//! A natural bi-partition splits a register value `v = h q^m + a` into its
//! `m` low digits `a` and the remaining high digits `h`. For a sparse state
//! with signs `s(v)` the reduced matrix over the low digits is
//! `rho_A = G G^T / M` with the incidence matrix `G[a][h] = s(h q^m + a)`.
//! The entries are integer co-occurrence counts over the support size.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::eigh::{symmetric_eigen, SpectrumResult, MAX_DIM};
use crate::error::{capacity, domain, Error, Result};
use crate::io::write_atomic;
use crate::numtheory::{ell, gcd, is_squarefree, mobius, ramanujan_sum, totient, HLConstants};
use crate::real::{ExtReal, Precision, Real};
use crate::states::{DenseState, NumberState};

/// Above this many incidence entries the Gram product is accumulated
/// sparsely instead of through a dense matrix product.
const DENSE_GRAM_LIMIT: u64 = 1 << 25;

const MAGIC: &[u8; 5] = b"NTQS3";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    ExactPartialTrace,
    /// Toeplitz matrix `C_m` or its `D`-dimensional analogue.
    HLMatrix,
    HLModel,
    ArithModel { alpha: u64 },
    CompositeModel,
    RamanujanTilde { d: u64 },
}

/// Which side of the bi-partition is kept.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// The `m` least significant digits.
    Low,
    /// The `n - m` most significant digits.
    High,
}

/// Symmetric matrix with a target trace: 1 for density matrices, 0 for the
/// traceless `C` matrices.
#[derive(Clone, Debug)]
pub struct DensityMatrix<T> {
    pub dim: usize,
    /// Row-major.
    pub entries: Vec<T>,
    pub provenance: Provenance,
    pub trace_target: i64,
    pub precision: Precision,
}

impl<T: Real> DensityMatrix<T> {
    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.entries[i * self.dim + j]
    }

    pub fn trace(&self) -> T {
        let mut t = T::zero(self.precision);
        for i in 0..self.dim {
            t.add_assign(self.get(i, i));
        }
        t
    }

    /// `|trace - trace_target| <= dim 2^(20 - prec)`
    pub fn trace_ok(&self) -> bool {
        let t = self.trace().sub(&T::from_i64(self.trace_target, self.precision));
        t.abs().to_f64() <= self.dim as f64 * self.precision.ulp_scale(20)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| (i + 1..self.dim).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn eigen(&self, want_vectors: bool) -> Result<SpectrumResult<T>> {
        symmetric_eigen(&self.entries, self.dim, self.precision, want_vectors)
    }

    /// Entries rounded to `f64`.
    pub fn to_f64(&self) -> DensityMatrix<f64> {
        DensityMatrix {
            dim: self.dim,
            entries: self.entries.iter().map(Real::to_f64).collect(),
            provenance: self.provenance,
            trace_target: self.trace_target,
            precision: Precision::DOUBLE,
        }
    }

    /// `row col value` lines for every non-zero entry.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# dim {} prec {}", self.dim, self.precision.bits())?;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let x = self.get(i, j);
                if !x.is_zero() {
                    writeln!(w, "{i} {j} {}", x.to_decimal())?;
                }
            }
        }
        Ok(())
    }

    /// `NTQS3`, u64 dim, u32 precision bits, then each entry row-major as a
    /// u16 length and its decimal string (little-endian).
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        w.write_all(&self.precision.bits().to_le_bytes())?;
        for x in &self.entries {
            let s = x.to_decimal();
            w.write_all(&(s.len() as u16).to_le_bytes())?;
            w.write_all(s.as_bytes())?;
        }
        Ok(())
    }

    pub fn save_triplets(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_triplets(&mut buf)?;
        write_atomic(path, &buf)
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_binary(&mut buf)?;
        write_atomic(path, &buf)
    }
}

/// Reads an `NTQS3` matrix; provenance is not stored and comes back as
/// `provenance`.
pub fn read_binary<T: Real, R: Read>(mut r: R, provenance: Provenance, trace_target: i64) -> Result<DensityMatrix<T>> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not an NTQS3 matrix".into()));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let dim = u64::from_le_bytes(b8) as usize;
    if dim > MAX_DIM {
        return Err(Error::Format(format!("matrix dimension {dim} too large")));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let prec = Precision::new(u32::from_le_bytes(b4))?;
    let mut entries = Vec::with_capacity(dim * dim);
    let mut b2 = [0u8; 2];
    for _ in 0..dim * dim {
        r.read_exact(&mut b2)?;
        let mut s = vec![0u8; u16::from_le_bytes(b2) as usize];
        r.read_exact(&mut s)?;
        let s = std::str::from_utf8(&s).map_err(|e| Error::Format(e.to_string()))?;
        entries.push(T::parse_decimal(s, prec)?);
    }
    Ok(DensityMatrix { dim, entries, provenance, trace_target, precision: prec })
}

/// Reads the triplet text format into a dense matrix.
pub fn read_triplets<T: Real, R: Read>(r: R, provenance: Provenance, trace_target: i64) -> Result<DensityMatrix<T>> {
    let mut lines = BufReader::new(r).lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty triplet file".into()))??;
    let parts: Vec<&str> = header.split_whitespace().collect();
    let (dim, bits) = match parts.as_slice() {
        ["#", "dim", d, "prec", p] => (
            d.parse::<usize>().map_err(|e| Error::Format(e.to_string()))?,
            p.parse::<u32>().map_err(|e| Error::Format(e.to_string()))?,
        ),
        _ => return Err(Error::Format(format!("bad triplet header {header:?}"))),
    };
    if dim > MAX_DIM {
        return Err(Error::Format(format!("matrix dimension {dim} too large")));
    }
    let prec = Precision::new(bits)?;
    let mut entries = vec![T::zero(prec); dim * dim];
    for line in lines {
        let line = line?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        let [i, j, v] = f.as_slice() else {
            return Err(Error::Format(format!("bad triplet line {line:?}")));
        };
        let i: usize = i.parse().map_err(|_| Error::Format(format!("bad row in {line:?}")))?;
        let j: usize = j.parse().map_err(|_| Error::Format(format!("bad column in {line:?}")))?;
        if i >= dim || j >= dim {
            return Err(Error::Format(format!("index out of range in {line:?}")));
        }
        entries[i * dim + j] = T::parse_decimal(v, prec)?;
    }
    Ok(DensityMatrix { dim, entries, provenance, trace_target, precision: prec })
}

fn split_dims(q: u32, n: u32, m: u32) -> Result<(u64, u64)> {
    if m == 0 || m >= n {
        return Err(domain(format!("bi-partition needs 1 <= m < n, got m={m}, n={n}")));
    }
    let low = (q as u64).checked_pow(m).ok_or_else(|| capacity("low register too large"))?;
    let high = (q as u64).checked_pow(n - m).ok_or_else(|| capacity("high register too large"))?;
    Ok((low, high))
}

/// Integer co-occurrence matrix `G G^T` (side `Low`) or `G^T G` (side
/// `High`), row-major, with its dimension.
pub fn cooccurrence_counts(state: &NumberState, m: u32, side: Side) -> Result<(Vec<i64>, usize)> {
    counts_with_limit(state, m, side, DENSE_GRAM_LIMIT)
}

fn counts_with_limit(state: &NumberState, m: u32, side: Side, dense_limit: u64) -> Result<(Vec<i64>, usize)> {
    let (low, high) = split_dims(state.q(), state.n(), m)?;
    let (rows, cols) = match side {
        Side::Low => (low, high),
        Side::High => (high, low),
    };
    if rows > MAX_DIM as u64 {
        return Err(capacity(format!("reduced dimension {rows} exceeds {MAX_DIM}")));
    }
    let rows = rows as usize;
    // (row index, column index) of each support element
    let split = |v: u64| match side {
        Side::Low => ((v % low) as usize, (v / low) as usize),
        Side::High => ((v / low) as usize, (v % low) as usize),
    };
    if rows as u64 * cols <= dense_limit {
        let cols = cols as usize;
        let mut g = vec![0.0f64; rows * cols];
        for (v, s) in state.support() {
            let (r, c) = split(v);
            g[r * cols + c] = s as f64;
        }
        let mut out = vec![0.0f64; rows * rows];
        // Integer entries and partial sums stay far below 2^53, so the
        // floating-point product is exact.
        unsafe {
            matrixmultiply::dgemm(
                rows,
                cols,
                rows,
                1.0,
                g.as_ptr(),
                cols as isize,
                1,
                g.as_ptr(),
                1,
                cols as isize,
                0.0,
                out.as_mut_ptr(),
                rows as isize,
                1,
            );
        }
        return Ok((out.into_iter().map(|x| x as i64).collect(), rows));
    }
    // Sparse: bucket the support by column and add outer products.
    let mut items: Vec<(u64, usize, i8)> = state
        .support()
        .map(|(v, s)| {
            let (r, c) = split(v);
            (c as u64, r, s)
        })
        .collect();
    items.sort_unstable();
    let mut out = vec![0i64; rows * rows];
    let mut start = 0;
    while start < items.len() {
        let mut end = start;
        while end < items.len() && items[end].0 == items[start].0 {
            end += 1;
        }
        let block = &items[start..end];
        for &(_, r1, s1) in block {
            for &(_, r2, s2) in block {
                out[r1 * rows + r2] += (s1 * s2) as i64;
            }
        }
        start = end;
    }
    Ok((out, rows))
}

fn from_counts<T: Real>(counts: &[i64], dim: usize, support: usize, prec: Precision) -> DensityMatrix<T> {
    let m = T::from_i64(support as i64, prec);
    let entries = counts
        .iter()
        .map(|&c| {
            let mut x = T::from_i64(c, prec);
            x.div_assign(&m);
            x
        })
        .collect();
    DensityMatrix { dim, entries, provenance: Provenance::ExactPartialTrace, trace_target: 1, precision: prec }
}

/// `rho_A` over the `m` least significant digits.
pub fn reduced_density<T: Real>(state: &NumberState, m: u32, prec: Precision) -> Result<DensityMatrix<T>> {
    reduced_density_side(state, m, Side::Low, prec)
}

/// Reduced density of either side of the `m`-digit cut.
pub fn reduced_density_side<T: Real>(state: &NumberState, m: u32, side: Side, prec: Precision) -> Result<DensityMatrix<T>> {
    let (counts, dim) = cooccurrence_counts(state, m, side)?;
    Ok(from_counts(&counts, dim, state.len(), prec))
}

/// The smaller of the two reduced matrices; both carry the same non-zero
/// spectrum.
pub fn smaller_reduced_density<T: Real>(state: &NumberState, m: u32, prec: Precision) -> Result<DensityMatrix<T>> {
    let side = if m <= state.n() - m.min(state.n()) { Side::Low } else { Side::High };
    reduced_density_side(state, m, side, prec)
}

/// Eigenvalues (ascending) of `rho_A` for a dense random state, over the `m`
/// low digits or the complement, whichever is smaller.
///
/// A complex Hermitian `X + iY` is diagonalized through the real symmetric
/// embedding `[[X, -Y], [Y, X]]`, whose spectrum is that of `X + iY` with
/// every eigenvalue doubled in multiplicity.
pub fn dense_reduced_spectrum(state: &DenseState, m: u32) -> Result<Vec<f64>> {
    let (low, high) = split_dims(state.q, state.n, m)?;
    dense_spectrum_side(state, m, low <= high)
}

fn dense_spectrum_side(state: &DenseState, m: u32, low_side: bool) -> Result<Vec<f64>> {
    let (low, high) = split_dims(state.q, state.n, m)?;
    let (rows, cols) = if low_side { (low as usize, high as usize) } else { (high as usize, low as usize) };
    if rows > MAX_DIM / 2 {
        return Err(capacity(format!("reduced dimension {rows} too large for a dense state")));
    }
    let at = |v: &[f64], r: usize, c: usize| {
        if low_side {
            v[c * rows + r]
        } else {
            v[r * cols + c]
        }
    };
    let gram = |x: &[f64], y: &[f64]| {
        let mut out = vec![0.0; rows * rows];
        for i in 0..rows {
            for j in 0..rows {
                out[i * rows + j] = (0..cols).map(|c| at(x, i, c) * at(y, j, c)).sum();
            }
        }
        out
    };
    let norm = state.norm_sqr();
    let re = gram(&state.re, &state.re);
    let (matrix, dim) = match &state.im {
        None => (re, rows),
        Some(im) => {
            // X = Re Re^T + Im Im^T, Y = Im Re^T - Re Im^T
            let ii = gram(im, im);
            let ir = gram(im, &state.re);
            let ri = gram(&state.re, im);
            let d = 2 * rows;
            let mut e = vec![0.0; d * d];
            for i in 0..rows {
                for j in 0..rows {
                    let x = re[i * rows + j] + ii[i * rows + j];
                    let y = ir[i * rows + j] - ri[i * rows + j];
                    e[i * d + j] = x;
                    e[(i + rows) * d + j + rows] = x;
                    e[(i + rows) * d + j] = y;
                    e[i * d + j + rows] = -y;
                }
            }
            (e, d)
        }
    };
    let matrix: Vec<f64> = matrix.into_iter().map(|x| x / norm).collect();
    let r = symmetric_eigen(&matrix, dim, Precision::DOUBLE, false)?;
    let vals = r.eigenvalues;
    Ok(if state.im.is_some() { vals.into_iter().step_by(2).collect() } else { vals })
}

fn toeplitz(d: usize, prec: Precision, f: impl Fn(usize) -> ExtReal) -> Vec<ExtReal> {
    let diag: Vec<ExtReal> = (0..d).map(|h| if h == 0 { ExtReal::zero(prec) } else { f(h) }).collect();
    let mut e = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            e.push(diag[i.abs_diff(j)].clone());
        }
    }
    e
}

/// `(1 - delta_ij) C(2|i-j|)` of size `d`.
pub fn hl_toeplitz(d: usize, consts: &HLConstants) -> Result<DensityMatrix<ExtReal>> {
    if d == 0 || d > MAX_DIM {
        return Err(capacity(format!("Toeplitz size {d} out of range")));
    }
    let prec = consts.precision();
    Ok(DensityMatrix {
        dim: d,
        entries: toeplitz(d, prec, |h| consts.c(2 * h as u64)),
        provenance: Provenance::HLMatrix,
        trace_target: 0,
        precision: prec,
    })
}

/// `C_m`, of size `2^(m-1)`.
pub fn hl_model_matrix(m: u32, consts: &HLConstants) -> Result<DensityMatrix<ExtReal>> {
    if !(2..=15).contains(&m) {
        return Err(domain(format!("C_m needs 2 <= m <= 15, got {m}")));
    }
    hl_toeplitz(1 << (m - 1), consts)
}

/// `l_N = Li2(N)/Li(N)` at `N = 2^n`, or its leading form `1/(n ln 2)`.
pub fn ell_n(n: u32, exact: bool, prec: Precision) -> Result<ExtReal> {
    if n < 2 {
        return Err(domain("l_N needs n >= 2"));
    }
    if exact {
        let mut x = ExtReal::one(prec);
        x.mul_assign(&ExtReal::from_i64(2, prec).powi(n as i32));
        ell(&x, prec)
    } else {
        let mut d = ExtReal::ln2(prec);
        d.mul_assign(&ExtReal::from_i64(n as i64, prec));
        Ok(ExtReal::one(prec).div(&d))
    }
}

fn model_density(c: DensityMatrix<ExtReal>, l: &ExtReal, provenance: Provenance) -> DensityMatrix<ExtReal> {
    let d = c.dim;
    let prec = c.precision;
    let inv_d = ExtReal::from_ratio(1, d as i128, prec);
    let mut entries = c.entries;
    for (idx, x) in entries.iter_mut().enumerate() {
        x.mul_assign(l);
        if idx / d == idx % d {
            x.add_assign(&ExtReal::one(prec));
        }
        x.mul_assign(&inv_d);
    }
    DensityMatrix { dim: d, entries, provenance, trace_target: 1, precision: prec }
}

/// `(1/d)(I + l_N C_m)`.
pub fn hl_model_density(n: u32, m: u32, consts: &HLConstants, exact_ln: bool) -> Result<DensityMatrix<ExtReal>> {
    let c = hl_model_matrix(m, consts)?;
    let l = ell_n(n, exact_ln, consts.precision())?;
    Ok(model_density(c, &l, Provenance::HLModel))
}

/// `(1/d_a)(I + l_N C_m(alpha))` with `(C_m(alpha))_ij = (1 - delta_ij)
/// C(alpha |i - j|)` over the `d_a = 2^m / alpha` low residues compatible with
/// a fixed class mod `alpha`. `1/d_a = phi(alpha)/2^(m-1)` for powers of two.
pub fn arithmetic_model(n: u32, m: u32, alpha: u64, consts: &HLConstants, exact_ln: bool) -> Result<DensityMatrix<ExtReal>> {
    if alpha < 2 || !alpha.is_power_of_two() {
        return Err(domain(format!("the arithmetic model needs alpha a power of 2, got {alpha}")));
    }
    if m > 15 || alpha > 1 << m {
        return Err(domain(format!("alpha = {alpha} does not fit in {m} digits")));
    }
    let d = ((1u64 << m) / alpha) as usize;
    if d < 1 {
        return Err(domain("empty arithmetic model"));
    }
    let prec = consts.precision();
    let c = DensityMatrix {
        dim: d,
        entries: toeplitz(d, prec, |h| consts.c(alpha * h as u64)),
        provenance: Provenance::HLMatrix,
        trace_target: 0,
        precision: prec,
    };
    let l = ell_n(n, exact_ln, prec)?;
    Ok(model_density(c, &l, Provenance::ArithModel { alpha }))
}

/// `(1/d)(I + P_m) = J/d` with `P_m` the all-ones off-diagonal matrix.
pub fn composite_model(m: u32, prec: Precision) -> Result<DensityMatrix<ExtReal>> {
    if !(1..=15).contains(&m) {
        return Err(domain(format!("composite model needs 1 <= m <= 15, got {m}")));
    }
    let d = 1usize << m.saturating_sub(1);
    let v = ExtReal::from_ratio(1, d as i128, prec);
    Ok(DensityMatrix {
        dim: d,
        entries: vec![v; d * d],
        provenance: Provenance::CompositeModel,
        trace_target: 1,
        precision: prec,
    })
}

fn check_odd_squarefree(d: u64) -> Result<()> {
    if d == 0 || d % 2 == 0 || !is_squarefree(d) {
        return Err(domain(format!("D = {d} must be odd and square-free")));
    }
    if d as usize > MAX_DIM {
        return Err(capacity(format!("D = {d} too large")));
    }
    Ok(())
}

/// Divisors of `d`, ascending.
pub fn divisors(d: u64) -> Vec<u64> {
    let mut out: Vec<u64> = (1..).take_while(|k| k * k <= d).filter(|k| d % k == 0).flat_map(|k| [k, d / k]).collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// `R_{k,D}`: `(1 - delta_ij) c_k(2|i-j|)`, row-major `D x D`.
pub fn ramanujan_matrix(k: u64, d: u64) -> Result<Vec<i64>> {
    check_odd_squarefree(d)?;
    if k == 0 || d % k != 0 {
        return Err(domain(format!("k = {k} must divide D = {d}")));
    }
    let n = d as usize;
    let row: Vec<i64> = (0..n).map(|h| if h == 0 { Ok(0) } else { ramanujan_sum(k, 2 * h as i64) }).collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(row[i.abs_diff(j)]);
        }
    }
    Ok(out)
}

/// `r_{k,D}(a) = D #{l coprime to k : 2 l D/k = a mod D}`, the eigenvalue of
/// the circulant part of `R_{k,D}` on the Fourier mode `a`.
pub fn ramanujan_eigenvalue(k: u64, d: u64, a: u64) -> u64 {
    let step = d / k;
    let hits = (1..=k).filter(|&l| gcd(l, k) == 1 && (2 * l * step) % d == a % d).count() as u64;
    d * hits
}

/// `r_{k,D}(a) / D` for every divisor `k` (rows) and `a = 1..=D` (columns).
pub fn eigenvalue_location_table(d: u64) -> Result<Vec<(u64, Vec<u64>)>> {
    check_odd_squarefree(d)?;
    Ok(divisors(d)
        .into_iter()
        .map(|k| (k, (1..=d).map(|a| ramanujan_eigenvalue(k, d, a) / d).collect()))
        .collect())
}

/// Spectrum of `R_{k,D}` from the eigenvalue table: `D - phi(k)` with
/// multiplicity `phi(k)`, and `-phi(k)` on the remaining modes. Ascending
/// `(value, multiplicity)`.
pub fn ramanujan_spectrum(k: u64, d: u64) -> Result<Vec<(i64, u64)>> {
    check_odd_squarefree(d)?;
    let phi = totient(k)? as i64;
    let hits = (1..=d).filter(|&a| ramanujan_eigenvalue(k, d, a) > 0).count() as u64;
    let mut out = vec![(-phi, d - hits), (d as i64 - phi, hits)];
    out.retain(|x| x.1 > 0);
    Ok(out)
}

/// `2 sum_{k | D} (mu(k)/phi(k))^2 R_{k,D}`.
pub fn tilde_c(d: u64, prec: Precision) -> Result<DensityMatrix<ExtReal>> {
    check_odd_squarefree(d)?;
    let n = d as usize;
    let mut entries = vec![ExtReal::zero(prec); n * n];
    for k in divisors(d) {
        let mu = mobius(k)?;
        if mu == 0 {
            continue;
        }
        let phi = totient(k)? as i128;
        let w = ExtReal::from_ratio(2, phi * phi, prec);
        for (x, r) in entries.iter_mut().zip(ramanujan_matrix(k, d)?) {
            if r != 0 {
                x.mul_add_assign(&w, &ExtReal::from_i64(r, prec));
            }
        }
    }
    Ok(DensityMatrix { dim: n, entries, provenance: Provenance::RamanujanTilde { d }, trace_target: 0, precision: prec })
}

/// Exact Hardy-Littlewood matrix of size `D`.
pub fn hl_exact_matrix(d: u64, consts: &HLConstants) -> Result<DensityMatrix<ExtReal>> {
    hl_toeplitz(d as usize, consts)
}
