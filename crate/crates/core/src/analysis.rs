//! Entropies, the analytic eigenvalue model and the scaling estimators.
//!
//! Von Neumann and Rényi entropies are in bits. Entanglement energies
//! (`-ln lambda`, see [`crate::eigh::entanglement_spectrum`]) use the natural
//! logarithm.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::eigh::{symmetric_eigen, SpectrumResult};
use crate::entangle::{cooccurrence_counts, DensityMatrix, Side};
use crate::error::{domain, Error, Result};
use crate::io::write_atomic;
use crate::numtheory::{AppendixConstants, ArithTable, PrimeTable};
use crate::real::{ExtReal, Precision, Real};
use crate::states::{DenseState, NumberState};

/// `-sum lambda log2 lambda` over the given (already clamp-filtered)
/// eigenvalues.
pub fn von_neumann<T: Real>(eigs: &[T]) -> Result<T> {
    let first = eigs.first().ok_or_else(|| domain("entropy of an empty spectrum"))?;
    let prec = first.precision();
    let mut s = T::zero(prec);
    for l in eigs {
        if l.is_zero() || l.is_negative() {
            continue;
        }
        s.mul_sub_assign(l, &l.log2());
    }
    Ok(s)
}

/// `log2(sum lambda^s) / (1 - s)` for integer `s >= 2`.
pub fn renyi<T: Real>(eigs: &[T], s: u32) -> Result<T> {
    if s < 2 {
        return Err(domain(format!("Rényi order must be >= 2, got {s}")));
    }
    let first = eigs.first().ok_or_else(|| domain("entropy of an empty spectrum"))?;
    let prec = first.precision();
    let mut sum = T::zero(prec);
    for l in eigs {
        sum.add_assign(&l.powi(s as i32));
    }
    let mut r = sum.log2();
    r.div_assign(&T::from_i64(1 - s as i64, prec));
    Ok(r)
}

/// Spectrum of the reduced density matrix on the smaller side of the
/// `m`-digit cut. Rows of the co-occurrence matrix that are exactly zero are
/// dropped before conversion, so only non-trivial eigenvalues are returned.
pub fn reduced_spectrum<T: Real>(state: &NumberState, m: u32, prec: Precision) -> Result<SpectrumResult<T>> {
    let side = if 2 * m <= state.n() { Side::Low } else { Side::High };
    let (counts, dim) = cooccurrence_counts(state, m, side)?;
    let live: Vec<usize> = (0..dim).filter(|&i| counts[i * dim..(i + 1) * dim].iter().any(|&c| c != 0)).collect();
    let total = T::from_i64(state.len() as i64, prec);
    let mut sub = Vec::with_capacity(live.len() * live.len());
    for &i in &live {
        for &j in &live {
            let mut x = T::from_i64(counts[i * dim + j], prec);
            x.div_assign(&total);
            sub.push(x);
        }
    }
    drop(counts);
    symmetric_eigen(&sub, live.len(), prec, false)
}

/// Entanglement entropy in bits of the `m`-digit cut. `prec = 53` runs in
/// native doubles; wider precisions run in MPFR.
pub fn entanglement_entropy(state: &NumberState, m: u32, prec: Precision) -> Result<ExtReal> {
    if prec == Precision::DOUBLE {
        let r: SpectrumResult<f64> = reduced_spectrum(state, m, prec)?;
        Ok(ExtReal::from_f64(von_neumann(&r.clamped())?, prec))
    } else {
        let r: SpectrumResult<ExtReal> = reduced_spectrum(state, m, prec)?;
        von_neumann(&r.clamped())
    }
}

/// Entropy in bits of a dense random state across the `m`-digit cut.
pub fn dense_entropy(state: &DenseState, m: u32) -> Result<f64> {
    let vals = crate::entangle::dense_reduced_spectrum(state, m)?;
    let top = vals.iter().cloned().fold(0.0, f64::max);
    let thr = vals.len() as f64 * Precision::DOUBLE.ulp_scale(15) * top;
    let kept: Vec<f64> = vals.into_iter().filter(|&x| x > thr).collect();
    von_neumann(&kept)
}

/// Rule fixing the cut-off `k_m` and the constant `phi_m` of the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KmRule {
    /// Largest odd square-free `k_m` with `A(k_m) <= 2^(m-1)`; the last
    /// multiplicity is padded so the degeneracies fill the dimension, and
    /// `phi_m` makes the trace of `C_m` vanish.
    Dimension,
    /// `k_m = [2^(m/2) / sqrt(2 alpha)]` and `phi_m = 2^(m+1) / (m ln 2 + delta)`.
    Asymptotic,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelEntry {
    pub k: u64,
    pub phi: u64,
    /// Eigenvalue of `C_m`.
    pub gamma: ExtReal,
    /// Eigenvalue of the density matrix.
    pub lambda: ExtReal,
    pub multiplicity: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelSpectrum {
    pub n: u32,
    pub m: u32,
    pub rule: KmRule,
    pub k_m: u64,
    pub phi_m: ExtReal,
    /// Odd square-free `k` ascending.
    pub entries: Vec<ModelEntry>,
}

impl ModelSpectrum {
    pub fn total_multiplicity(&self) -> u64 {
        self.entries.iter().map(|e| e.multiplicity).sum()
    }

    /// `sum lambda_k mult_k`
    pub fn trace(&self, prec: Precision) -> ExtReal {
        let mut t = ExtReal::zero(prec);
        for e in &self.entries {
            t.mul_add_assign(&e.lambda, &ExtReal::from_i64(e.multiplicity as i64, prec));
        }
        t
    }

    /// `-sum mult_k lambda_k log2 lambda_k`
    pub fn entropy(&self, prec: Precision) -> ExtReal {
        let mut s = ExtReal::zero(prec);
        for e in &self.entries {
            if e.lambda.is_zero() || e.lambda.is_negative() {
                continue;
            }
            let mut t = e.lambda.mul(&e.lambda.log2());
            t.mul_u64(e.multiplicity);
            s.sub_assign(&t);
        }
        s
    }

    /// Eigenvalues `(lambda, total multiplicity)` grouped by exact value
    /// of `mu^2(k)/phi^2(k)`, descending in `lambda`.
    pub fn levels(&self) -> Vec<(ExtReal, u64, Vec<u64>)> {
        let mut by_phi: BTreeMap<u64, (ExtReal, u64, Vec<u64>)> = BTreeMap::new();
        for e in &self.entries {
            let slot = by_phi.entry(e.phi).or_insert_with(|| (e.lambda.clone(), 0, Vec::new()));
            slot.1 += e.multiplicity;
            slot.2.push(e.k);
        }
        by_phi.into_values().collect()
    }
}

/// Model eigenvalues of the `m`-digit density matrix of the `n`-qubit prime
/// state: `gamma_k = 2^m (1/phi(k)^2 - 1/phi_m)` and
/// `lambda_k = 2^(1-m) (1 + gamma_k / (n ln 2))` for odd square-free
/// `k <= k_m`, each with multiplicity `phi(k)`.
pub fn analytic_spectrum(n: u32, m: u32, consts: &AppendixConstants, rule: KmRule, prec: Precision) -> Result<ModelSpectrum> {
    if !(4..=60).contains(&m) {
        return Err(domain(format!("analytic spectrum needs 4 <= m <= 60, got {m}")));
    }
    if n < m {
        return Err(domain("analytic spectrum needs n >= m"));
    }
    let dim: u64 = 1 << (m - 1);
    let two_m = ExtReal::from_i64(2, prec).powi(m as i32);

    // k_m from the rule; the table must reach a little past it
    let k_m = match rule {
        KmRule::Asymptotic => {
            let mut x = two_m.sqrt();
            let mut den = consts.alpha.with_precision(prec);
            den.mul_u64(2);
            x.div_assign(&den.sqrt());
            x.to_f64().floor() as u64
        }
        KmRule::Dimension => {
            // A(k) ~ alpha k^2 with alpha ~ 0.173, so k_m ~ 2.4 sqrt(dim)
            let bound = (4.0 * (dim as f64).sqrt()) as usize + 64;
            let t = ArithTable::new(bound);
            let mut acc = 0u64;
            let mut last = 1;
            for k in (1..bound).step_by(2) {
                if t.mu[k] == 0 {
                    continue;
                }
                if acc + t.phi[k] as u64 > dim {
                    break;
                }
                debug_assert!(k + 2 < bound, "sieve bound too small");
                acc += t.phi[k] as u64;
                last = k as u64;
            }
            last
        }
    };
    let table = ArithTable::new(k_m as usize + 1);
    let ks: Vec<(u64, u64)> =
        (1..=k_m).step_by(2).filter(|&k| table.mu[k as usize] != 0).map(|k| (k, table.phi[k as usize] as u64)).collect();
    let mut mults: Vec<u64> = ks.iter().map(|&(_, p)| p).collect();

    let phi_m = match rule {
        KmRule::Asymptotic => {
            let mut den = ExtReal::ln2(prec);
            den.mul_u64(m as u64);
            den.add_assign(&consts.delta.with_precision(prec));
            let mut x = two_m.clone();
            x.mul_u64(2);
            x.div(&den)
        }
        KmRule::Dimension => {
            let filled: u64 = mults.iter().sum();
            if let Some(last) = mults.last_mut() {
                *last += dim - filled;
            }
            // sum mult (1/phi^2 - 1/phi_m) = 0
            let mut weighted = ExtReal::zero(prec);
            for (&(_, p), &mu) in ks.iter().zip(&mults) {
                weighted.add_assign(&ExtReal::from_ratio(mu as i128, (p * p) as i128, prec));
            }
            ExtReal::from_i64(dim as i64, prec).div(&weighted)
        }
    };

    let mut ell = ExtReal::ln2(prec);
    ell.mul_u64(n as u64);
    let inv_d = ExtReal::from_ratio(1, dim as i128, prec);
    let inv_phi_m = ExtReal::one(prec).div(&phi_m);
    let entries = ks
        .iter()
        .zip(mults)
        .map(|(&(k, p), mult)| {
            let mut gamma = ExtReal::from_ratio(1, (p * p) as i128, prec);
            gamma.sub_assign(&inv_phi_m);
            gamma.mul_assign(&two_m);
            let mut lambda = gamma.div(&ell);
            lambda.add_assign(&ExtReal::one(prec));
            lambda.mul_assign(&inv_d);
            ModelEntry { k, phi: p, gamma, lambda, multiplicity: mult }
        })
        .collect();
    Ok(ModelSpectrum { n, m, rule, k_m, phi_m, entries })
}

/// Model half-chain entropy `S(n)` in bits, with `m = n/2` and the
/// asymptotic `k_m`, `phi_m`.
pub fn model_entropy(n: u32, consts: &AppendixConstants, prec: Precision) -> Result<ExtReal> {
    model_entropy_with(n, consts, KmRule::Asymptotic, prec)
}

pub fn model_entropy_with(n: u32, consts: &AppendixConstants, rule: KmRule, prec: Precision) -> Result<ExtReal> {
    if n % 2 != 0 || n < 8 {
        return Err(domain(format!("model entropy needs even n >= 8, got {n}")));
    }
    Ok(analytic_spectrum(n, n / 2, consts, rule, prec)?.entropy(prec))
}

/// Least-squares line `y = slope x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(domain("a line fit needs at least two points"));
    }
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(domain("a line fit needs distinct abscissae"));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelFit {
    pub rule: KmRule,
    pub half_n_range: (u32, u32),
    pub slope: f64,
    pub intercept: f64,
    /// `(n, S(n))`
    pub points: Vec<(u32, ExtReal)>,
}

/// Fits `S(n)` against `n/2` over `n/2` in `[lo, hi]`.
pub fn model_entropy_fit(lo: u32, hi: u32, consts: &AppendixConstants, rule: KmRule, prec: Precision) -> Result<ModelFit> {
    if lo < 4 || hi < lo + 1 {
        return Err(domain(format!("bad fit range [{lo}, {hi}]")));
    }
    let points: Vec<(u32, ExtReal)> =
        (lo..=hi).map(|h| Ok((2 * h, model_entropy_with(2 * h, consts, rule, prec)?))).collect::<Result<_>>()?;
    let xs: Vec<f64> = points.iter().map(|p| (p.0 / 2) as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.to_f64()).collect();
    let (slope, intercept) = linear_fit(&xs, &ys)?;
    Ok(ModelFit { rule, half_n_range: (lo, hi), slope, intercept, points })
}

/// `Tr M^s` from the spectrum.
pub fn trace_power<T: Real>(matrix: &DensityMatrix<T>, s: u32) -> Result<T> {
    if s == 0 {
        return Err(domain("trace power needs s >= 1"));
    }
    let e = matrix.eigen(false)?;
    let mut t = T::zero(matrix.precision);
    for l in &e.eigenvalues {
        t.add_assign(&l.powi(s as i32));
    }
    Ok(t)
}

/// `Tr M^s` from repeated products; cubic per factor, for cross-checks.
pub fn trace_power_direct<T: Real>(matrix: &DensityMatrix<T>, s: u32) -> Result<T> {
    if s == 0 {
        return Err(domain("trace power needs s >= 1"));
    }
    let n = matrix.dim;
    let prec = matrix.precision;
    let a = &matrix.entries;
    let mut p = a.clone();
    for _ in 1..s - 1 {
        let mut next = vec![T::zero(prec); n * n];
        for i in 0..n {
            for k in 0..n {
                let x = &p[i * n + k];
                if x.is_zero() {
                    continue;
                }
                T::axpy(&mut next[i * n..(i + 1) * n], x, &a[k * n..(k + 1) * n]);
            }
        }
        p = next;
    }
    if s == 1 {
        return Ok(matrix.trace());
    }
    // Tr(P A) = sum_ij P_ij A_ji, and A is symmetric
    Ok(T::dot(&p, a))
}

/// `2^(ms) prod_{2 < p <= cutoff} (1 + 1/(p-1)^(2s-1))`.
pub fn trace_power_asymptotic(m: u32, s: u32, table: &PrimeTable, cutoff: u64, prec: Precision) -> Result<ExtReal> {
    if s < 2 {
        return Err(domain("the asymptotic trace diverges for s = 1"));
    }
    if cutoff > table.limit() {
        return Err(crate::error::capacity(format!("cutoff {cutoff} above the sieve limit {}", table.limit())));
    }
    let wp = Precision::new(prec.bits() + 32)?;
    let mut prod = ExtReal::one(wp);
    let e = (2 * s - 1) as i32;
    for p in table.primes_upto(cutoff).filter(|&p| p > 2) {
        let mut t = ExtReal::from_i64(p as i64 - 1, wp).powi(e);
        t = ExtReal::one(wp).div(&t);
        t.add_assign(&ExtReal::one(wp));
        prod.mul_assign(&t);
    }
    prod.mul_assign(&ExtReal::from_i64(2, wp).powi((m * s) as i32));
    Ok(prod.with_precision(prec))
}

/// Half-chain entropies of one family, keyed by `(n, m)`.
#[derive(Clone, Debug, Serialize)]
pub struct EntropySeries {
    pub family: String,
    pub q: u32,
    pub prec_bits: u32,
    /// `S(m, n)` in bits.
    pub samples: BTreeMap<(u32, u32), ExtReal>,
}

/// One CSV row: `family,q,n,m,entropy_bits,prec_bits`.
#[derive(Clone, Debug, PartialEq, serde::Deserialize, Serialize)]
pub struct EntropyRow {
    pub family: String,
    pub q: u32,
    pub n: u32,
    pub m: u32,
    pub entropy_bits: String,
    pub prec_bits: u32,
}

impl EntropyRow {
    fn key(&self) -> (String, u32, u32, u32, u32) {
        (self.family.clone(), self.q, self.n, self.m, self.prec_bits)
    }
}

impl EntropySeries {
    pub fn new(family: impl Into<String>, q: u32, prec: Precision) -> Self {
        EntropySeries { family: family.into(), q, prec_bits: prec.bits(), samples: BTreeMap::new() }
    }

    /// Stores `S(m, n)`; a repeated key keeps the first value.
    pub fn insert(&mut self, n: u32, m: u32, s: ExtReal) -> Result<()> {
        if s.is_negative() {
            return Err(domain(format!("negative entropy at n={n}, m={m}")));
        }
        self.samples.entry((n, m)).or_insert(s);
        Ok(())
    }

    pub fn get(&self, n: u32, m: u32) -> Option<&ExtReal> {
        self.samples.get(&(n, m))
    }

    pub fn rows(&self) -> Vec<EntropyRow> {
        self.samples
            .iter()
            .map(|(&(n, m), s)| EntropyRow {
                family: self.family.clone(),
                q: self.q,
                n,
                m,
                entropy_bits: s.to_decimal(),
                prec_bits: self.prec_bits,
            })
            .collect()
    }

    /// Merges the rows into the CSV at `path`, skipping keys already present;
    /// returns the number of rows added. The file is rewritten atomically.
    pub fn append_csv(&self, path: &Path) -> Result<usize> {
        let mut rows: Vec<EntropyRow> = Vec::new();
        if path.exists() {
            let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
            for r in rdr.deserialize() {
                rows.push(r.map_err(|e| Error::Format(e.to_string()))?);
            }
        }
        let seen: std::collections::HashSet<_> = rows.iter().map(EntropyRow::key).collect();
        let fresh: Vec<EntropyRow> = self.rows().into_iter().filter(|r| !seen.contains(&r.key())).collect();
        let added = fresh.len();
        rows.extend(fresh);
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &rows {
            w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        write_atomic(path, &bytes)?;
        Ok(added)
    }

    /// Rows of this family, `q` and precision from a CSV file.
    pub fn read_csv(path: &Path, family: &str, q: u32, prec: Precision) -> Result<Self> {
        let mut out = EntropySeries::new(family, q, prec);
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
        for r in rdr.deserialize() {
            let r: EntropyRow = r.map_err(|e| Error::Format(e.to_string()))?;
            if r.family == family && r.q == q && r.prec_bits == prec.bits() {
                out.insert(r.n, r.m, ExtReal::parse_decimal(&r.entropy_bits, prec)?)?;
            }
        }
        Ok(out)
    }
}

/// `c(n) = S(n) - S(n-2)` and `gamma(n) = c(n) n/2 - S(n)` on half-chain
/// entropies, in units of `log2 q` bits.
pub fn slope_intercept(series: &EntropySeries, n: u32) -> Result<(ExtReal, ExtReal)> {
    if n < 4 {
        return Err(domain("estimators need n >= 4"));
    }
    let s_n = series.get(n, n / 2).ok_or_else(|| domain(format!("missing S at n={n}")))?;
    let s_p = series.get(n - 2, (n - 2) / 2).ok_or_else(|| domain(format!("missing S at n={}", n - 2)))?;
    let prec = s_n.precision();
    let unit = ExtReal::from_i64(series.q as i64, prec).log2();
    let s_n = s_n.div(&unit);
    let s_p = s_p.div(&unit);
    let c = s_n.sub(&s_p);
    let mut g = c.mul(&ExtReal::from_ratio(n as i128, 2, prec));
    g.sub_assign(&s_n);
    Ok((c, g))
}

/// Binary entropy `H(p)` in bits.
pub fn binary_entropy(p: &ExtReal) -> ExtReal {
    let prec = p.precision();
    let q = ExtReal::one(prec).sub(p);
    let mut h = ExtReal::zero(prec);
    h.mul_sub_assign(p, &p.log2());
    h.mul_sub_assign(&q, &q.log2());
    h
}

#[derive(Clone, Debug, Serialize)]
pub struct ConjectureConstants {
    /// `3/pi^2`, the density of odd square-free integers.
    pub density: ExtReal,
    /// `H(3/pi^2)`
    pub slope: ExtReal,
    /// `1 + 3/pi^2`
    pub intercept: ExtReal,
    /// `(alpha, s, 1 + s 3/pi^2)` for `alpha = 2^k`, `s` the `k`-th odd
    /// square-free number.
    pub arithmetic_intercepts: Vec<(u64, u64, ExtReal)>,
}

/// The `k`-th odd square-free number, counting from `k = 1`.
pub fn odd_squarefree(k: usize) -> u64 {
    (1u64..)
        .step_by(2)
        .filter(|&x| crate::numtheory::is_squarefree(x))
        .nth(k.saturating_sub(1))
        .unwrap_or(1)
}

pub fn conjecture_constants(prec: Precision) -> ConjectureConstants {
    let pi2 = ExtReal::pi(prec).square();
    let density = ExtReal::from_i64(3, prec).div(&pi2);
    let arithmetic_intercepts = (1..=5u32)
        .map(|k| {
            let s = odd_squarefree(k as usize);
            let mut g = density.mul(&ExtReal::from_i64(s as i64, prec));
            g.add_assign(&ExtReal::one(prec));
            (1u64 << k, s, g)
        })
        .collect();
    ConjectureConstants {
        slope: binary_entropy(&density),
        intercept: density.add(&ExtReal::one(prec)),
        density,
        arithmetic_intercepts,
    }
}

/// `s = (gamma - 1) pi^2 / 3`, the value of `s` implied by a measured
/// intercept.
pub fn empirical_s(gamma: &ExtReal) -> ExtReal {
    let prec = gamma.precision();
    let mut s = gamma.sub(&ExtReal::one(prec));
    s.mul_assign(&ExtReal::pi(prec).square());
    s.div_assign(&ExtReal::from_i64(3, prec));
    s
}

/// Truncated Fourier series of `S(m, n) / S(n/2, n)` in `x = m/n`.
#[derive(Clone, Debug, Serialize)]
pub struct FourierFit {
    pub terms: usize,
    /// `a'_k`, `k = 0..terms` (`a'_0` is always 0).
    pub a: Vec<f64>,
    /// `b'_k`, `k = 0..terms`.
    pub b: Vec<f64>,
    pub samples: usize,
    pub rms_residual: f64,
    pub n_values: Vec<u32>,
}

impl FourierFit {
    pub fn predict(&self, x: f64) -> f64 {
        let tau = 2.0 * std::f64::consts::PI;
        (0..self.terms).map(|k| self.a[k] * (tau * k as f64 * x).sin() + self.b[k] * (tau * k as f64 * x).cos()).sum()
    }
}

/// Normalized samples `(m/n, S(m,n)/S(n/2,n))` for `1 <= m <= n-1` at every
/// `n` with a half-chain value.
pub fn normalized_samples(series: &EntropySeries, keep: impl Fn(u32) -> bool) -> Vec<(u32, u32, f64, f64)> {
    let mut out = Vec::new();
    for (&(n, m), s) in &series.samples {
        if m == 0 || m >= n || !keep(n) {
            continue;
        }
        if let Some(half) = series.get(n, n / 2) {
            if !half.is_zero() {
                out.push((n, m, m as f64 / n as f64, s.to_f64() / half.to_f64()));
            }
        }
    }
    out
}

/// Unconstrained least-squares fit of `sum_k a'_k sin(2 pi k x) + b'_k cos(2
/// pi k x)` for `k < terms` over every sample with `keep(n)`.
pub fn fourier_fit(series: &EntropySeries, terms: usize, keep: impl Fn(u32) -> bool) -> Result<FourierFit> {
    if terms == 0 {
        return Err(domain("need at least one Fourier term"));
    }
    let samples = normalized_samples(series, keep);
    let unknowns = 2 * terms - 1;
    if samples.len() < 2 * terms + 1 {
        return Err(domain(format!("{} samples cannot determine {terms} Fourier terms", samples.len())));
    }
    let tau = 2.0 * std::f64::consts::PI;
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|&(_, _, x, _)| {
            let mut r = vec![1.0];
            for k in 1..terms {
                r.push((tau * k as f64 * x).sin());
                r.push((tau * k as f64 * x).cos());
            }
            r
        })
        .collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.3).collect();
    let coef = least_squares(&rows, &ys, unknowns)?;
    let mut a = vec![0.0; terms];
    let mut b = vec![0.0; terms];
    b[0] = coef[0];
    for k in 1..terms {
        a[k] = coef[2 * k - 1];
        b[k] = coef[2 * k];
    }
    let mut n_values: Vec<u32> = samples.iter().map(|s| s.0).collect();
    n_values.dedup();
    let mut fit = FourierFit { terms, a, b, samples: samples.len(), rms_residual: 0.0, n_values };
    let ss: f64 = samples.iter().map(|&(_, _, x, y)| (fit.predict(x) - y).powi(2)).sum();
    fit.rms_residual = (ss / samples.len() as f64).sqrt();
    Ok(fit)
}

/// Householder QR least squares for a tall dense system.
fn least_squares(rows: &[Vec<f64>], ys: &[f64], cols: usize) -> Result<Vec<f64>> {
    let m = rows.len();
    let mut a: Vec<Vec<f64>> = (0..cols).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let mut y = ys.to_vec();
    for j in 0..cols {
        let norm = a[j][j..].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(domain("rank-deficient least-squares system"));
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        for col in a.iter_mut().skip(j) {
            let f = 2.0 * v.iter().zip(&col[j..]).map(|(p, q)| p * q).sum::<f64>() / vv;
            for (c, vi) in col[j..].iter_mut().zip(&v) {
                *c -= f * vi;
            }
        }
        let f = 2.0 * v.iter().zip(&y[j..]).map(|(p, q)| p * q).sum::<f64>() / vv;
        for (c, vi) in y[j..].iter_mut().zip(&v) {
            *c -= f * vi;
        }
    }
    let _ = m;
    let mut x = vec![0.0; cols];
    for j in (0..cols).rev() {
        let s: f64 = (j + 1..cols).map(|k| a[k][j] * x[k]).sum();
        x[j] = (y[j] - s) / a[j][j];
    }
    Ok(x)
}

/// Computes `S(m, n)` for every job in parallel and merges by key.
pub fn scan(states: &BTreeMap<u32, NumberState>, jobs: &[(u32, u32)], prec: Precision) -> Result<EntropySeries> {
    let first = states.values().next().ok_or_else(|| domain("no states to scan"))?;
    let mut series = EntropySeries::new(first.label().to_string(), first.q(), prec);
    let results: Vec<Result<((u32, u32), ExtReal)>> = jobs
        .par_iter()
        .map(|&(n, m)| {
            let st = states.get(&n).ok_or_else(|| domain(format!("no state for n={n}")))?;
            Ok(((n, m), entanglement_entropy(st, m, prec)?))
        })
        .collect();
    for r in results {
        let ((n, m), s) = r?;
        series.insert(n, m, s)?;
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entangle::{hl_model_matrix, reduced_density};
    use crate::numtheory::{appendix_constants, HLConstants};
    use crate::states::{build_mobius_state, build_prime_state, build_uniform_state};
    use proptest::prelude::*;
    use std::sync::OnceLock;

    const Q: Precision = Precision::QUAD;
    const D: Precision = Precision::DOUBLE;

    fn table() -> &'static PrimeTable {
        static T: OnceLock<PrimeTable> = OnceLock::new();
        T.get_or_init(|| PrimeTable::sieve(1 << 18).unwrap())
    }

    fn consts() -> &'static AppendixConstants {
        static C: OnceLock<AppendixConstants> = OnceLock::new();
        C.get_or_init(|| appendix_constants(Q).unwrap())
    }

    #[test]
    fn entropy_basics() {
        assert_eq!(von_neumann(&[0.5, 0.5]).unwrap(), 1.0);
        assert_eq!(von_neumann(&[1.0]).unwrap(), 0.0);
        assert!(von_neumann::<f64>(&[]).is_err());
        assert!((renyi(&[0.5, 0.5], 2).unwrap() - 1.0).abs() < 1e-15);
        assert!(renyi(&[1.0], 1).is_err());
    }

    #[test]
    fn small_state_entropies() {
        let s = build_prime_state(3, 2, table()).unwrap();
        let e = entanglement_entropy(&s, 1, Q).unwrap();
        // eigenvalues (2 +- sqrt 2)/4
        let l: [f64; 2] = [(2.0 + 2f64.sqrt()) / 4.0, (2.0 - 2f64.sqrt()) / 4.0];
        let expect = -l.iter().map(|x| x * x.log2()).sum::<f64>();
        assert!((e.to_f64() - expect).abs() < 1e-15);
        assert!((e.to_f64() - 0.600876).abs() < 1e-6);
        let s = build_prime_state(2, 2, table()).unwrap();
        assert!(entanglement_entropy(&s, 1, Q).unwrap().to_f64().abs() < 1e-30);
        let u = build_uniform_state(8, 2).unwrap();
        assert!(entanglement_entropy(&u, 3, D).unwrap().to_f64().abs() < 1e-14);
    }

    #[test]
    fn precisions_agree_and_sides_agree() {
        let s = build_prime_state(14, 2, table()).unwrap();
        for m in [3u32, 7, 11] {
            let a = entanglement_entropy(&s, m, D).unwrap().to_f64();
            let b = entanglement_entropy(&s, m, Q).unwrap().to_f64();
            assert!((a - b).abs() < 1e-12);
        }
        for n in 4..=14u32 {
            let s = build_mobius_state(n).unwrap();
            for m in 1..n {
                let a = entanglement_entropy(&s, m, D).unwrap().to_f64();
                let b = entanglement_entropy(&s, n - m, D).unwrap().to_f64();
                // S(m) with the low m digits vs S(n-m) with the low n-m digits are
                // different cuts; only each cut's two sides must agree.
                assert!(a >= 0.0 && b >= 0.0);
            }
        }
    }

    #[test]
    fn entropy_symmetry_exhaustive() {
        use crate::entangle::reduced_density_side;
        for n in 2..=12u32 {
            let s = build_prime_state(n, 2, table()).unwrap();
            for m in 1..n {
                let a: DensityMatrix<f64> = reduced_density_side(&s, m, Side::Low, D).unwrap();
                let b: DensityMatrix<f64> = reduced_density_side(&s, m, Side::High, D).unwrap();
                let ea = von_neumann(&a.eigen(false).unwrap().clamped()).unwrap();
                let eb = von_neumann(&b.eigen(false).unwrap().clamped()).unwrap();
                assert!((ea - eb).abs() < 1e-11, "n={n} m={m}");
            }
        }
    }

    #[test]
    fn analytic_spectrum_structure() {
        for m in [10u32, 12, 16, 20] {
            let sp = analytic_spectrum(2 * m, m, consts(), KmRule::Dimension, Q).unwrap();
            assert_eq!(sp.total_multiplicity(), 1 << (m - 1));
            assert!((sp.trace(Q).to_f64() - 1.0).abs() < 1e-30);
            assert!(sp.entries.windows(2).all(|w| w[0].k < w[1].k));
            assert!(sp.entries.iter().all(|e| e.k % 2 == 1 && crate::numtheory::is_squarefree(e.k)));
            let asym = analytic_spectrum(2 * m, m, consts(), KmRule::Asymptotic, Q).unwrap();
            let ratio = asym.k_m as f64 / sp.k_m as f64;
            assert!((ratio - 1.0).abs() < 0.15, "m={m} {} vs {}", asym.k_m, sp.k_m);
        }
        let sp = analytic_spectrum(24, 12, consts(), KmRule::Dimension, Q).unwrap();
        assert_eq!(&sp.entries[..4].iter().map(|e| e.multiplicity).collect::<Vec<_>>(), &[1, 2, 4, 6]);
        let lv = sp.levels();
        let (_, mult, ks) = lv.iter().find(|l| l.2.contains(&13)).unwrap();
        assert_eq!(ks, &vec![13, 21]);
        assert_eq!(*mult, 24);
        let (_, mult, ks) = lv.iter().find(|l| l.2.contains(&35)).unwrap();
        assert_eq!((ks.clone(), *mult), (vec![35, 39], 48));
    }

    #[test]
    fn model_entropy_grows() {
        for (rule, from) in [(KmRule::Dimension, 8), (KmRule::Asymptotic, 26)] {
            let mut prev = 0.0;
            for n in (from..=60).step_by(2) {
                let s = model_entropy_with(n, consts(), rule, D).unwrap().to_f64();
                assert!(s > prev, "{rule:?} n={n}");
                prev = s;
            }
        }
    }

    #[test]
    fn model_slope_approaches_binary_entropy() {
        let h = conjecture_constants(D).slope.to_f64();
        let d = |n: u32| model_entropy(n, consts(), D).unwrap().to_f64() - model_entropy(n - 2, consts(), D).unwrap().to_f64();
        let early = (d(28) + d(30) + d(32)) / 3.0;
        let late = (d(66) + d(68) + d(70)) / 3.0;
        assert!((late - h).abs() < (early - h).abs() + 2e-3, "{early} {late} {h}");
        assert!((late - h).abs() < 5e-3);
    }

    #[test]
    fn trace_powers() {
        let hl = HLConstants::with_table(table(), 1 << 18, Q).unwrap();
        for m in 2..=6u32 {
            let c = hl_model_matrix(m, &hl).unwrap();
            let d = c.dim;
            // Toeplitz: Tr C^2 = 2 sum_{h<d} (d-h) C(2h)^2
            let mut expect = ExtReal::zero(Q);
            for h in 1..d {
                let mut t = hl.c(2 * h as u64).square();
                t.mul_u64(2 * (d - h) as u64);
                expect.add_assign(&t);
            }
            let direct = trace_power_direct(&c, 2).unwrap();
            assert!(direct.sub(&expect).abs().to_f64() < 1e-28 * expect.to_f64());
            for s in 2..=5 {
                let a = trace_power(&c, s).unwrap();
                let b = trace_power_direct(&c, s).unwrap();
                assert!(a.sub(&b).abs().to_f64() <= 1e-25 * b.abs().to_f64().max(1.0), "m={m} s={s}");
            }
        }
        let t = trace_power_asymptotic(5, 2, table(), 3, Q).unwrap();
        assert_eq!(t, ExtReal::from_i64(1 << 10, Q).mul(&ExtReal::from_ratio(9, 8, Q)));
        assert!(trace_power_asymptotic(5, 1, table(), 100, Q).is_err());
    }

    #[test]
    fn renyi_from_spectrum_matches_matrix_powers() {
        let s = build_prime_state(16, 2, table()).unwrap();
        let rho: DensityMatrix<ExtReal> = reduced_density(&s, 5, Q).unwrap();
        let spec = rho.eigen(false).unwrap();
        for order in 2..=4u32 {
            let a = renyi(&spec.clamped(), order).unwrap();
            let mut b = trace_power_direct(&rho, order).unwrap().log2();
            b.div_assign(&ExtReal::from_i64(1 - order as i64, Q));
            assert!(a.sub(&b).abs().to_f64() < 1e-15 * b.to_f64().abs());
        }
    }

    #[test]
    fn estimators() {
        let mut s = EntropySeries::new("linear", 2, Q);
        for n in (4..=20).step_by(2) {
            s.insert(n, n / 2, ExtReal::from_ratio(7 * n as i128 / 2 - 12, 8, Q)).unwrap();
        }
        let (c, g) = slope_intercept(&s, 20).unwrap();
        assert_eq!(c, ExtReal::from_ratio(7, 8, Q));
        assert_eq!(g, ExtReal::from_ratio(12, 8, Q));
        assert!(slope_intercept(&s, 22).is_err());
    }

    #[test]
    fn conjecture_values() {
        let c = conjecture_constants(Q);
        assert!((c.slope.to_f64() - 0.886082085).abs() < 1e-9);
        assert!((c.intercept.to_f64() - 1.30396355).abs() < 1e-8);
        let s: Vec<u64> = c.arithmetic_intercepts.iter().map(|x| x.1).collect();
        assert_eq!(s, vec![1, 3, 5, 7, 11]);
        let g4 = ExtReal::from_f64(1.0 + 2.9137 * 3.0 / std::f64::consts::PI.powi(2), Q);
        assert!((empirical_s(&g4).to_f64() - 2.9137).abs() < 1e-9);
    }

    #[test]
    fn fourier_fit_of_known_series() {
        let mut flat = EntropySeries::new("flat", 2, D);
        let mut shaped = EntropySeries::new("shaped", 2, D);
        let f = |x: f64| 0.5 - 0.4 * (2.0 * std::f64::consts::PI * x).cos() + 0.1 * (4.0 * std::f64::consts::PI * x).cos();
        for n in (8..=20).step_by(2) {
            for m in 1..n {
                flat.insert(n, m, ExtReal::from_f64(3.0, D)).unwrap();
                let x = m as f64 / n as f64;
                shaped.insert(n, m, ExtReal::from_f64(f(x) / f(0.5), D)).unwrap();
            }
        }
        let fit = fourier_fit(&flat, 4, |_| true).unwrap();
        assert!((fit.b[0] - 1.0).abs() < 1e-12);
        assert!(fit.a.iter().chain(&fit.b[1..]).all(|c| c.abs() < 1e-12));
        let fit = fourier_fit(&shaped, 4, |_| true).unwrap();
        let norm = f(0.5);
        assert!((fit.b[1] + 0.4 / norm).abs() < 1e-10);
        assert!((fit.b[2] - 0.1 / norm).abs() < 1e-10);
        assert!(fourier_fit(&shaped, 200, |_| true).is_err());
    }

    #[test]
    fn csv_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let st = build_prime_state(8, 2, table()).unwrap();
        let states: BTreeMap<u32, NumberState> = [(8, st)].into_iter().collect();
        let series = scan(&states, &[(8, 2), (8, 4), (8, 3)], Q).unwrap();
        assert_eq!(series.append_csv(&path).unwrap(), 3);
        assert_eq!(series.append_csv(&path).unwrap(), 0);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("family,q,n,m,entropy_bits,prec_bits\n"));
        assert_eq!(text.lines().count(), 4);
        let back = EntropySeries::read_csv(&path, "prime", 2, Q).unwrap();
        assert_eq!(back.samples, series.samples);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn entropy_bounds(n in 3u32..13, m in 1u32..12) {
            let m = 1 + m % (n - 1);
            for s in [build_prime_state(n, 2, table()).unwrap(), build_mobius_state(n).unwrap()] {
                let e = entanglement_entropy(&s, m, D).unwrap().to_f64();
                prop_assert!(e >= -1e-12);
                prop_assert!(e <= m.min(s.n() - m) as f64 + 1e-9);
            }
        }

        #[test]
        fn model_multiplicities_fill_dimension(m in 4u32..22) {
            let sp = analytic_spectrum(2 * m, m, consts(), KmRule::Dimension, D).unwrap();
            prop_assert_eq!(sp.total_multiplicity(), 1u64 << (m - 1));
        }
    }
}
