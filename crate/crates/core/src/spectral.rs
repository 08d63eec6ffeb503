//! Fourier probabilities of number-theoretical states.
//!
//! `P(k) = |sum_v sign(v) e^{2 pi i v k / N}|^2 / (N M)` for a state with
//! support size `M` over a register of size `N`. The frequency `k` may be
//! rational; phases are reduced exactly before any rounding.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{capacity, domain, Error, Result};
use crate::numtheory::PrimeTable;
use crate::real::{CompensatedSum, Complex, ExtReal, Precision, Real};
use crate::states::NumberState;

/// Largest register for full spectra.
pub const MAX_SPECTRUM_DIM: u64 = 1 << 20;

fn gcd128(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Frequency `k = numerator / denominator`, optionally truncated to `t`
/// binary fraction digits as an ancilla register would.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Frequency {
    pub numerator: u128,
    pub denominator: u128,
    pub ancilla_bits: Option<u32>,
}

impl Frequency {
    pub fn integer(k: u64) -> Self {
        Frequency { numerator: k as u128, denominator: 1, ancilla_bits: None }
    }

    /// `N / den`
    pub fn fraction_of(n_dim: u64, den: u64) -> Self {
        Frequency { numerator: n_dim as u128, denominator: den as u128, ancilla_bits: None }
    }

    pub fn with_ancilla(self, t: u32) -> Self {
        Frequency { ancilla_bits: Some(t), ..self }
    }

    /// The evaluated frequency as an exact fraction `(num, den)`.
    pub fn effective(&self) -> Result<(u128, u128)> {
        if self.denominator == 0 {
            return Err(domain("frequency denominator must be positive"));
        }
        match self.ancilla_bits {
            None => Ok((self.numerator, self.denominator)),
            Some(t) => {
                if t == 0 || t > 60 {
                    return Err(domain(format!("ancilla bits must be in [1, 60], got {t}")));
                }
                let scaled = self.numerator.checked_shl(t).filter(|s| s >> t == self.numerator);
                let scaled = scaled.ok_or_else(|| capacity("frequency too large for ancilla scaling"))?;
                Ok((scaled / self.denominator, 1u128 << t))
            }
        }
    }
}

/// Caches `e^{2 pi i r / b}` for small moduli.
struct Roots<T> {
    b: u128,
    prec: Precision,
    table: Option<Vec<Option<Complex<T>>>>,
}

impl<T: Real> Roots<T> {
    fn new(b: u128, prec: Precision, expected_uses: usize) -> Self {
        let table = (b <= 1 << 16 && (b as usize) <= 4 * expected_uses.max(1)).then(|| vec![None; b as usize]);
        Roots { b, prec, table }
    }

    fn get(&mut self, r: u128) -> Complex<T> {
        match &mut self.table {
            Some(t) => t[r as usize].get_or_insert_with(|| Complex::unit_root(r, self.b, self.prec)).clone(),
            None => Complex::unit_root(r, self.b, self.prec),
        }
    }
}

/// `sum_v sign(v) e^{2 pi i v k / N}` with Neumaier-compensated accumulation
/// in support order.
pub fn exponential_sum<T: Real>(state: &NumberState, f: Frequency, prec: Precision) -> Result<Complex<T>> {
    let (num, den) = f.effective()?;
    let big_n = state.dim() as u128;
    let modulus = den.checked_mul(big_n).ok_or_else(|| capacity("frequency modulus overflow"))?;
    let g = gcd128(num % modulus, modulus);
    let (a, b) = if g == 0 { (0, 1) } else { ((num % modulus) / g, modulus / g) };
    let mut roots = Roots::<T>::new(b, prec, state.len());
    let mut re = CompensatedSum::<T>::new(prec);
    let mut im = CompensatedSum::<T>::new(prec);
    for (v, s) in state.support() {
        // v < 2^34 and a < b <= 2^94 would overflow; reduce v first
        let r = mulmod(v as u128 % b, a, b);
        let mut z = roots.get(r);
        if s < 0 {
            z.re.neg_assign();
            z.im.neg_assign();
        }
        re.add(&z.re);
        im.add(&z.im);
    }
    Ok(Complex { re: re.value(), im: im.value() })
}

fn mulmod(x: u128, y: u128, m: u128) -> u128 {
    if let Some(p) = x.checked_mul(y) {
        return p % m;
    }
    // double-and-add; only reached for very long ancilla registers
    let (mut acc, mut x, mut y) = (0u128, x % m, y);
    while y > 0 {
        if y & 1 == 1 {
            acc = (acc + x) % m;
        }
        x = (x << 1) % m;
        y >>= 1;
    }
    acc
}

/// `P(k)` by a direct exponential sum.
pub fn qft_probability<T: Real>(state: &NumberState, f: Frequency, prec: Precision) -> Result<T> {
    let s: Complex<T> = exponential_sum(state, f, prec)?;
    let mut p = s.norm_sqr();
    let mut d = T::from_i64(state.dim() as i64, prec);
    d.mul_assign(&T::from_i64(state.len() as i64, prec));
    p.div_assign(&d);
    Ok(p)
}

/// `P(k)` for every integer `k < N` by a radix-`q` FFT.
pub fn full_qft_spectrum<T: Real>(state: &NumberState, prec: Precision) -> Result<Vec<T>> {
    let n_dim = state.dim();
    if n_dim > MAX_SPECTRUM_DIM {
        return Err(capacity(format!("full spectrum of dimension {n_dim} exceeds 2^20")));
    }
    let n_dim = n_dim as usize;
    let mut x: Vec<Complex<T>> = vec![Complex::zero(prec); n_dim];
    for (v, s) in state.support() {
        x[v as usize].re = T::from_i64(s as i64, prec);
    }
    let spec = fft(&x, state.q() as usize, prec);
    let mut norm = T::from_i64(n_dim as i64, prec);
    norm.mul_assign(&T::from_i64(state.len() as i64, prec));
    Ok(spec
        .into_iter()
        .map(|z| {
            let mut p = z.norm_sqr();
            p.div_assign(&norm);
            p
        })
        .collect())
}

/// `X_k = sum_j x_j e^{+2 pi i j k / N}` for `N` a power of `q`.
pub fn fft<T: Real>(x: &[Complex<T>], q: usize, prec: Precision) -> Vec<Complex<T>> {
    let n = x.len();
    assert!(q >= 2 && n >= 1);
    let mut len = 1;
    while len < n {
        len *= q;
    }
    assert_eq!(len, n, "FFT length must be a power of the radix");
    let tw: Vec<Complex<T>> = (0..n).map(|j| Complex::unit_root(j as u128, n as u128, prec)).collect();
    let mut out = vec![Complex::zero(prec); n];
    fft_rec(x, 0, 1, n, &mut out, q, &tw, prec);
    out
}

#[allow(clippy::too_many_arguments)]
fn fft_rec<T: Real>(
    x: &[Complex<T>],
    offset: usize,
    stride: usize,
    len: usize,
    out: &mut [Complex<T>],
    q: usize,
    tw: &[Complex<T>],
    prec: Precision,
) {
    if len == 1 {
        out[0] = x[offset].clone();
        return;
    }
    let m = len / q;
    for r in 0..q {
        fft_rec(x, offset + r * stride, stride * q, m, &mut out[r * m..(r + 1) * m], q, tw, prec);
    }
    // W_len^j = W_N^{j * stride}
    let big_n = tw.len();
    if q == 2 {
        for k in 0..m {
            let t = out[m + k].mul(&tw[k * stride]);
            let mut hi = out[k].clone();
            hi.sub_assign(&t);
            out[k].add_assign(&t);
            out[m + k] = hi;
        }
        return;
    }
    let mut y: Vec<Complex<T>> = vec![Complex::zero(prec); q];
    for k in 0..m {
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = out[r * m + k].clone();
        }
        for s in 0..q {
            let j = k + s * m;
            let mut acc = y[0].clone();
            for (r, yr) in y.iter().enumerate().skip(1) {
                acc.add_assign(&yr.mul(&tw[(r * j * stride) % big_n]));
            }
            out[j] = acc;
        }
    }
}

/// Distinguished peak frequencies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Peak {
    P0,
    PN2,
    PN3,
    PN4,
    PN6,
}

impl Peak {
    pub const ALL: [Peak; 5] = [Peak::P0, Peak::PN2, Peak::PN3, Peak::PN4, Peak::PN6];

    /// `k = N / divisor` (`P0` has divisor 0, meaning `k = 0`).
    pub fn divisor(self) -> u64 {
        match self {
            Peak::P0 => 0,
            Peak::PN2 => 2,
            Peak::PN3 => 3,
            Peak::PN4 => 4,
            Peak::PN6 => 6,
        }
    }

    pub fn frequency(self, n_dim: u64) -> Frequency {
        match self.divisor() {
            0 => Frequency::integer(0),
            d => Frequency::fraction_of(n_dim, d),
        }
    }
}

/// Exact prime counts entering the peak formulas.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BiasCounts {
    pub pi61: u64,
    pub pi65: u64,
    pub pi31: u64,
    pub pi32: u64,
    /// `pi_{4,3} - pi_{4,1}`
    pub delta: i64,
    /// `pi_{3,2} - pi_{3,1}`
    pub delta3: i64,
    /// `pi_{6,5} - pi_{6,1}`
    pub delta6: i64,
}

impl BiasCounts {
    pub fn count(table: &PrimeTable, x: u64) -> Result<Self> {
        let pi61 = table.pi_mod(6, 1, x)?;
        let pi65 = table.pi_mod(6, 5, x)?;
        let pi31 = table.pi_mod(3, 1, x)?;
        let pi32 = table.pi_mod(3, 2, x)?;
        Ok(BiasCounts {
            pi61,
            pi65,
            pi31,
            pi32,
            delta: table.chebyshev_bias(x)?,
            delta3: pi32 as i64 - pi31 as i64,
            delta6: pi65 as i64 - pi61 as i64,
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PeakValue {
    pub formula: ExtReal,
    pub direct: Option<ExtReal>,
}

/// Peak values of the prime state on `n` qubits.
#[derive(Clone, Debug, Serialize)]
pub struct PeakReport {
    pub n: u32,
    pub big_n: u64,
    pub pi_n: u64,
    pub peaks: BTreeMap<Peak, PeakValue>,
    /// `P(N/6)` with the `-3 pi_{6,1} + 3` ending; kept for comparison.
    pub pn6_alternative: ExtReal,
    pub counts: BiasCounts,
    /// Counts recovered from the `P(N/3)`, `P(N/6)` and `P(N/4)` values.
    pub extracted: Option<ExtractedCounts>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ExtractedCounts {
    pub pi61: u64,
    pub pi65: u64,
    pub pi31: u64,
    pub pi32: u64,
    pub abs_delta: u64,
    pub delta3: i64,
    pub delta6: i64,
}

/// Which ending of the `P(N/6)` closed form to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SixthPeakForm {
    /// `(D6^2 + pi61 pi65 - 3 pi65 + 3) / (N pi)`
    Pi65,
    /// `(D6^2 + pi61 pi65 - 3 pi61 + 3) / (N pi)`
    Pi61,
}

/// Closed-form `P(N/d) N pi(N)` as an exact integer.
pub fn peak_numerator(peak: Peak, pi_n: u64, c: &BiasCounts, form: SixthPeakForm) -> i128 {
    let p = pi_n as i128;
    match peak {
        Peak::P0 => p * p,
        Peak::PN2 => (p - 2) * (p - 2),
        Peak::PN3 => (c.delta3 as i128).pow(2) + c.pi31 as i128 * c.pi32 as i128 - p + 2,
        Peak::PN4 => 1 + (c.delta as i128).pow(2),
        Peak::PN6 => {
            let tail = match form {
                SixthPeakForm::Pi65 => c.pi65 as i128,
                SixthPeakForm::Pi61 => c.pi61 as i128,
            };
            (c.delta6 as i128).pow(2) + c.pi61 as i128 * c.pi65 as i128 - 3 * tail + 3
        }
    }
}

/// Closed-form peaks of the `n`-qubit prime state from exact modular counts.
pub fn closed_form_peaks(n: u32, table: &PrimeTable, prec: Precision) -> Result<PeakReport> {
    if !(2..=34).contains(&n) {
        return Err(domain(format!("peak formulas need 2 <= n <= 34, got {n}")));
    }
    let big_n = 1u64 << n;
    if table.limit() < big_n - 1 {
        return Err(capacity(format!("sieve limit {} below 2^{n}", table.limit())));
    }
    let pi_n = table.pi(big_n - 1)?;
    let counts = BiasCounts::count(table, big_n - 1)?;
    let den = big_n as i128 * pi_n as i128;
    let value = |num: i128| ExtReal::from_ratio(num, den, prec);
    let mut peaks = BTreeMap::new();
    for pk in Peak::ALL {
        let num = peak_numerator(pk, pi_n, &counts, SixthPeakForm::Pi65);
        peaks.insert(pk, PeakValue { formula: value(num), direct: None });
    }
    let alt = value(peak_numerator(Peak::PN6, pi_n, &counts, SixthPeakForm::Pi61));
    Ok(PeakReport { n, big_n, pi_n, peaks, pn6_alternative: alt, counts, extracted: None })
}

impl PeakReport {
    /// Fills in the direct exponential sums from the prime state.
    pub fn add_direct_sums(&mut self, state: &NumberState, prec: Precision) -> Result<()> {
        if state.dim() != self.big_n || state.len() as u64 != self.pi_n {
            return Err(domain("state does not match the report"));
        }
        for (pk, v) in self.peaks.iter_mut() {
            v.direct = Some(qft_probability(state, pk.frequency(self.big_n), prec)?);
        }
        Ok(())
    }

    /// Runs the bias extraction on the formula values.
    pub fn extract(&mut self) -> Result<()> {
        let p3 = &self.peaks[&Peak::PN3].formula;
        let p6 = &self.peaks[&Peak::PN6].formula;
        let p4 = &self.peaks[&Peak::PN4].formula;
        let (u, v) = extract_biases(p3, p6, self.pi_n, self.big_n)?;
        let abs_delta = chebyshev_from_peak(p4, self.pi_n, self.big_n)?;
        self.extracted = Some(ExtractedCounts {
            pi61: u,
            pi65: v,
            pi31: u,
            pi32: v + 1,
            abs_delta,
            delta3: v as i64 + 1 - u as i64,
            delta6: v as i64 - u as i64,
        });
        Ok(())
    }
}

/// `P N pi(N)` at the precision of `p`.
fn scaled(p: &ExtReal, pi_n: u64, big_n: u64) -> ExtReal {
    let mut x = p.clone();
    x.mul_u64(big_n);
    x.mul_u64(pi_n);
    x
}

/// Recovers `(pi_{6,1}(N), pi_{6,5}(N))` from `P(N/3)` and `P(N/6)`.
///
/// With `u = pi_{6,1} = pi_{3,1}` and `v = pi_{6,5} = pi_{3,2} - 1`, the two
/// closed forms give `X3 - X6 = 5v - u - pi` (`X = P N pi`), so each candidate
/// `v` in the search window fixes `u`; candidates whose `X6` residual vanishes
/// are solutions. Ties go to the one with `u + v + 2 = pi`.
pub fn extract_biases(p3: &ExtReal, p6: &ExtReal, pi_n: u64, big_n: u64) -> Result<(u64, u64)> {
    if pi_n < 4 {
        return Err(domain("bias extraction needs pi(N) >= 4"));
    }
    let prec = p3.precision().min(p6.precision());
    let x3 = scaled(p3, pi_n, big_n);
    let x6 = scaled(p6, pi_n, big_n);
    let scale = x3.abs().to_f64().max(x6.abs().to_f64()).max(1.0);
    let tol = (scale * prec.ulp_scale(24)).max(1e-9);
    let tol = tol.min(0.25);

    let diff = x3.sub(&x6);
    let d = diff.to_f64().round();
    if (diff.to_f64() - d).abs() > tol {
        return Err(Error::Extraction(format!("X3 - X6 = {} is not an integer", diff.to_f64())));
    }
    let d = d as i128;
    let x6r = x6.to_f64().round();
    if (x6.to_f64() - x6r).abs() > tol {
        return Err(Error::Extraction(format!("X6 = {} is not an integer", x6.to_f64())));
    }
    let x6i = x6r as i128;

    let nf = big_n as f64;
    let half = (4.0 * nf.sqrt() * nf.ln()).ceil() as i128;
    let center = pi_n as i128 / 2;
    let p = pi_n as i128;
    let mut sols = Vec::new();
    for v in (center - half).max(0)..=(center + half).min(p) {
        let u = 5 * v - p - d;
        if u < 0 || u > p {
            continue;
        }
        let f6 = (v - u) * (v - u) + u * v - 3 * v + 3;
        if f6 == x6i {
            sols.push((u as u64, v as u64));
        }
    }
    match sols.len() {
        0 => Err(Error::Extraction("no integer solution in the search window".into())),
        1 => Ok(sols[0]),
        _ => sols
            .iter()
            .copied()
            .find(|&(u, v)| u + v + 2 == pi_n)
            .ok_or_else(|| Error::Extraction(format!("ambiguous solutions {sols:?}"))),
    }
}

/// `|Delta(N)| = round(sqrt(P(N/4) N pi - 1))`; the sign is not recoverable.
pub fn chebyshev_from_peak(p4: &ExtReal, pi_n: u64, big_n: u64) -> Result<u64> {
    let prec = p4.precision();
    let mut r = scaled(p4, pi_n, big_n);
    r.sub_assign(&ExtReal::one(prec));
    let tol = (r.abs().to_f64().max(1.0) * prec.ulp_scale(24)).max(1e-9);
    if r.to_f64() < -tol {
        return Err(domain(format!("P(N/4) N pi - 1 = {} is negative", r.to_f64())));
    }
    if r.is_negative() {
        return Ok(0);
    }
    Ok(r.sqrt().to_f64().round() as u64)
}

/// Result of evaluating a peak at a truncated frequency.
#[derive(Clone, Debug, Serialize)]
pub struct AncillaPeak {
    pub denom: u64,
    pub bits: u32,
    pub value: ExtReal,
    pub exact: ExtReal,
    pub relative_error: ExtReal,
}

/// `P` at the `t`-bit truncation of `N/denom`, and its relative error
/// against `P(N/denom)`.
pub fn ancilla_peak(state: &NumberState, denom: u64, t: u32, prec: Precision) -> Result<AncillaPeak> {
    if t == 0 {
        return Err(domain("need at least one ancilla bit"));
    }
    if denom == 0 {
        return Err(domain("peak denominator must be positive"));
    }
    let f = Frequency::fraction_of(state.dim(), denom);
    let exact: ExtReal = qft_probability(state, f, prec)?;
    let value: ExtReal = qft_probability(state, f.with_ancilla(t), prec)?;
    let mut rel = value.sub(&exact).abs();
    if !exact.is_zero() {
        rel.div_assign(&exact);
    }
    Ok(AncillaPeak { denom, bits: t, value, exact, relative_error: rel })
}

/// Number of support terms recovered as `P(0) N`.
pub fn count_terms_via_qft(state: &NumberState, prec: Precision) -> Result<u64> {
    if !state.is_unsigned() {
        return Err(domain("term counting needs a state with uniform signs"));
    }
    let p0: ExtReal = qft_probability(state, Frequency::integer(0), prec)?;
    let mut x = p0;
    x.mul_u64(state.dim());
    x.round_to_i128().map(|v| v as u64).ok_or_else(|| domain("P(0) N is not finite"))
}

/// Empirical estimate of one outcome from simulated measurements.
#[derive(Clone, Debug, Serialize)]
pub struct ShotEstimate {
    pub k: u64,
    pub exact: f64,
    pub count: u64,
    pub estimate: f64,
    /// `sqrt(p (1 - p) / M)` at the estimate
    pub std_error: f64,
}

/// Draws `shots` samples from `spectrum` and reports the outcomes in `ks`.
pub fn sample_shots(spectrum: &[f64], shots: u64, seed: u64, ks: &[u64]) -> Result<Vec<ShotEstimate>> {
    if shots == 0 {
        return Err(domain("need at least one shot"));
    }
    let dist = WeightedIndex::new(spectrum.iter().map(|&p| p.max(0.0)))
        .map_err(|e| domain(format!("invalid spectrum: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; ks.len()];
    for _ in 0..shots {
        let k = dist.sample(&mut rng) as u64;
        if let Some(i) = ks.iter().position(|&x| x == k) {
            counts[i] += 1;
        }
    }
    Ok(ks
        .iter()
        .zip(counts)
        .map(|(&k, count)| {
            let est = count as f64 / shots as f64;
            ShotEstimate {
                k,
                exact: spectrum.get(k as usize).copied().unwrap_or(0.0),
                count,
                estimate: est,
                std_error: (est * (1.0 - est) / shots as f64).sqrt(),
            }
        })
        .collect())
}
