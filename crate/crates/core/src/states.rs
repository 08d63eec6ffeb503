//! Number-theoretical states as exact sparse signed supports.
//!
//! A state over `n` base-`q` digits is the uniform superposition
//! `sum_v sign(v) |v> / sqrt(M)` over its support of size `M`. Digit 0 is the
//! least significant, so the "first m digits" of `v` are `v mod q^m`.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{capacity, domain, Error, Result};
use crate::numtheory::{gcd, ArithTable, PrimeTable};
use crate::real::{ExtReal, Precision, Real};

/// Largest support stored in memory.
pub const MAX_SUPPORT: usize = 1 << 28;
/// Largest register for sparse states.
pub const MAX_SPARSE_DIM: u64 = 1 << 34;
/// Largest register for dense random states.
pub const MAX_DENSE_DIM: u64 = 1 << 26;

const BINARY_MAGIC: &[u8; 5] = b"NTQS2";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomKind {
    Complex,
    Positive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Label {
    Prime,
    ArithPrime { alpha: u64, beta: u64 },
    OddComposite,
    OddSquareFree,
    Mobius,
    Starry { seed: u64 },
    Uniform,
    Random { kind: RandomKind, seed: u64 },
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Prime => write!(f, "prime"),
            Label::ArithPrime { alpha, beta } => write!(f, "arith_{alpha}_{beta}"),
            Label::OddComposite => write!(f, "composite"),
            Label::OddSquareFree => write!(f, "squarefree"),
            Label::Mobius => write!(f, "mobius"),
            Label::Starry { seed } => write!(f, "starry_{seed}"),
            Label::Uniform => write!(f, "uniform"),
            Label::Random { kind: RandomKind::Complex, seed } => write!(f, "random_complex_{seed}"),
            Label::Random { kind: RandomKind::Positive, seed } => write!(f, "random_positive_{seed}"),
        }
    }
}

/// Uniform-magnitude state with signs in `{-1, +1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct NumberState {
    q: u32,
    n: u32,
    label: Label,
    values: Vec<u64>,
    /// `None` when every sign is `+1`.
    signs: Option<Vec<i8>>,
}

#[derive(Serialize, Deserialize)]
struct StateJson {
    q: u32,
    n: u32,
    label: Label,
    support: Vec<(u64, i8)>,
}

impl NumberState {
    /// Checks every invariant; used by all builders and by the importers.
    pub fn new(q: u32, n: u32, label: Label, values: Vec<u64>, signs: Option<Vec<i8>>) -> Result<Self> {
        let dim = register_dim(q, n)?;
        if values.is_empty() {
            return Err(Error::EmptyState(format!("{label} with q={q}, n={n}")));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(domain("support values must be strictly increasing"));
        }
        if *values.last().unwrap() >= dim {
            return Err(domain(format!("support value beyond {q}^{n}")));
        }
        if let Some(s) = &signs {
            if s.len() != values.len() || s.iter().any(|&x| x != 1 && x != -1) {
                return Err(domain("signs must be +1 or -1, one per support value"));
            }
        }
        let signs = signs.filter(|s| s.iter().any(|&x| x < 0));
        Ok(NumberState { q, n, label, values, signs })
    }

    pub fn q(&self) -> u32 {
        self.q
    }
    pub fn n(&self) -> u32 {
        self.n
    }
    pub fn label(&self) -> Label {
        self.label
    }
    /// `q^n`
    pub fn dim(&self) -> u64 {
        (self.q as u64).pow(self.n)
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn values(&self) -> &[u64] {
        &self.values
    }
    pub fn is_unsigned(&self) -> bool {
        self.signs.is_none()
    }
    pub fn sign(&self, i: usize) -> i8 {
        self.signs.as_ref().map_or(1, |s| s[i])
    }
    pub fn support(&self) -> impl Iterator<Item = (u64, i8)> + '_ {
        self.values.iter().enumerate().map(|(i, &v)| (v, self.sign(i)))
    }
    pub fn contains(&self, v: u64) -> bool {
        self.values.binary_search(&v).is_ok()
    }

    /// Common amplitude magnitude `1/sqrt(M)`.
    pub fn amplitude<T: Real>(&self, prec: Precision) -> T {
        let mut a = T::from_i64(self.len() as i64, prec);
        a.sqrt_assign();
        T::one(prec).div(&a)
    }

    /// Dense amplitude vector; only for small registers.
    pub fn to_dense(&self) -> Result<Vec<f64>> {
        if self.dim() > MAX_DENSE_DIM {
            return Err(capacity(format!("dense vector of dimension {}", self.dim())));
        }
        let a = 1.0 / (self.len() as f64).sqrt();
        let mut out = vec![0.0; self.dim() as usize];
        for (v, s) in self.support() {
            out[v as usize] = s as f64 * a;
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        let j = StateJson { q: self.q, n: self.n, label: self.label, support: self.support().collect() };
        Ok(serde_json::to_string(&j)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: StateJson = serde_json::from_str(s)?;
        let (values, signs): (Vec<u64>, Vec<i8>) = j.support.into_iter().unzip();
        NumberState::new(j.q, j.n, j.label, values, Some(signs))
    }

    /// Binary form: magic `NTQS2`, `u32 q`, `u32 n`, `u32` length and bytes of
    /// the JSON label, `u64` support size, then `(u64 value, i8 sign)` records,
    /// all little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&self.q.to_le_bytes())?;
        w.write_all(&self.n.to_le_bytes())?;
        let label = serde_json::to_vec(&self.label)?;
        w.write_all(&(label.len() as u32).to_le_bytes())?;
        w.write_all(&label)?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for (v, s) in self.support() {
            w.write_all(&v.to_le_bytes())?;
            w.write_all(&[s as u8])?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::Format("not a binary state file".into()));
        }
        let q = read_u32(&mut r)?;
        let n = read_u32(&mut r)?;
        let llen = read_u32(&mut r)? as usize;
        if llen > 4096 {
            return Err(Error::Format("label too long".into()));
        }
        let mut lbuf = vec![0u8; llen];
        r.read_exact(&mut lbuf)?;
        let label: Label = serde_json::from_slice(&lbuf)?;
        let count = read_u64(&mut r)? as usize;
        if count > MAX_SUPPORT {
            return Err(capacity(format!("support of {count} values")));
        }
        let mut values = Vec::with_capacity(count);
        let mut signs = Vec::with_capacity(count);
        let mut rec = [0u8; 9];
        for _ in 0..count {
            r.read_exact(&mut rec)?;
            values.push(u64::from_le_bytes(rec[..8].try_into().unwrap()));
            signs.push(rec[8] as i8);
        }
        NumberState::new(q, n, label, values, Some(signs))
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_binary(&mut buf)?;
        crate::io::write_atomic(path, &buf)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// `q^n`, checked against [`MAX_SPARSE_DIM`].
pub fn register_dim(q: u32, n: u32) -> Result<u64> {
    if q < 2 {
        return Err(domain(format!("base must be at least 2, got {q}")));
    }
    if n < 1 {
        return Err(domain("need at least one digit"));
    }
    let mut d = 1u64;
    for _ in 0..n {
        d = d.checked_mul(q as u64).filter(|&d| d <= MAX_SPARSE_DIM).ok_or_else(|| {
            capacity(format!("register {q}^{n} exceeds 2^34"))
        })?;
    }
    Ok(d)
}

fn need_table(table: &PrimeTable, top: u64) -> Result<()> {
    if table.limit() < top {
        return Err(capacity(format!("sieve limit {} below {top}", table.limit())));
    }
    Ok(())
}

fn check_support_size(count: u64) -> Result<()> {
    if count as usize > MAX_SUPPORT {
        return Err(capacity(format!("support of {count} values exceeds 2^28")));
    }
    Ok(())
}

/// Uniform superposition of the primes below `q^n`.
pub fn build_prime_state(n: u32, q: u32, table: &PrimeTable) -> Result<NumberState> {
    let dim = register_dim(q, n)?;
    need_table(table, dim - 1)?;
    check_support_size(table.pi(dim - 1)?)?;
    let values: Vec<u64> = table.primes_upto(dim - 1).collect();
    NumberState::new(q, n, Label::Prime, values, None)
}

/// Primes below `2^n` congruent to `beta` modulo `alpha`.
pub fn build_arithmetic_prime_state(n: u32, alpha: u64, beta: u64, table: &PrimeTable) -> Result<NumberState> {
    if alpha == 0 || gcd(alpha, beta % alpha) != 1 {
        return Err(domain(format!("alpha={alpha} and beta={beta} must be coprime")));
    }
    let dim = register_dim(2, n)?;
    need_table(table, dim - 1)?;
    let b = beta % alpha;
    let values: Vec<u64> = table.primes_upto(dim - 1).filter(|p| p % alpha == b).collect();
    check_support_size(values.len() as u64)?;
    NumberState::new(2, n, Label::ArithPrime { alpha, beta }, values, None)
}

/// Odd non-primes in `[3, 2^n)`; 1 is a unit and is left out.
pub fn build_odd_composite_state(n: u32, table: &PrimeTable) -> Result<NumberState> {
    let dim = register_dim(2, n)?;
    need_table(table, dim - 1)?;
    check_support_size(dim / 2)?;
    let values: Vec<u64> = (9..dim).step_by(2).filter(|&v| !table.is_prime(v)).collect();
    NumberState::new(2, n, Label::OddComposite, values, None)
}

/// Odd square-free numbers in `[1, 2^n]`, 1 included.
pub fn build_squarefree_state(n: u32) -> Result<NumberState> {
    let dim = register_dim(2, n)?;
    check_support_size(dim / 2)?;
    let t = squarefree_sieve(dim);
    let values: Vec<u64> = (1..dim).step_by(2).filter(|&v| t[v as usize]).collect();
    NumberState::new(2, n, Label::OddSquareFree, values, None)
}

/// Square-free `s` in `[1, 2^n]` with amplitude sign `mu(s)`.
///
/// `2^n` itself is square-free only for `n = 1`; in that case the register is
/// widened to two qubits so the value 2 is representable.
pub fn build_mobius_state(n: u32) -> Result<NumberState> {
    let top = register_dim(2, n)?;
    check_support_size(top)?;
    let t = ArithTable::new(top as usize);
    let mut values = Vec::new();
    let mut signs = Vec::new();
    for s in 1..=top {
        let mu = t.mu[s as usize];
        if mu != 0 {
            values.push(s);
            signs.push(mu);
        }
    }
    let width = if *values.last().unwrap() >= top { n + 1 } else { n };
    NumberState::new(2, width, Label::Mobius, values, Some(signs))
}

/// One starry prime per prime `p_i < 2^n`, drawn uniformly from
/// `[p_i, p_{i+1})` with ChaCha8 seeded by `seed`; the last interval is
/// clipped to `2^n - 1`.
pub fn build_starry_state(n: u32, seed: u64, table: &PrimeTable) -> Result<NumberState> {
    if n < 2 {
        return Err(domain("starry states need n >= 2"));
    }
    let dim = register_dim(2, n)?;
    need_table(table, dim - 1)?;
    check_support_size(table.pi(dim - 1)?)?;
    let primes: Vec<u64> = table.primes_upto(dim - 1).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(primes.len());
    for (i, &p) in primes.iter().enumerate() {
        let hi = primes.get(i + 1).copied().unwrap_or(dim);
        values.push(rng.random_range(p..hi));
    }
    NumberState::new(2, n, Label::Starry { seed }, values, None)
}

/// Every value in `[0, q^n)`.
pub fn build_uniform_state(n: u32, q: u32) -> Result<NumberState> {
    let dim = register_dim(q, n)?;
    check_support_size(dim)?;
    NumberState::new(q, n, Label::Uniform, (0..dim).collect(), None)
}

/// Dense random state used as a volume-law baseline.
#[derive(Clone, Debug)]
pub struct DenseState {
    pub q: u32,
    pub n: u32,
    pub kind: RandomKind,
    pub seed: u64,
    pub re: Vec<f64>,
    /// Present for complex states.
    pub im: Option<Vec<f64>>,
}

impl DenseState {
    pub fn dim(&self) -> usize {
        self.re.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        let r: f64 = self.re.iter().map(|x| x * x).sum();
        r + self.im.as_ref().map_or(0.0, |im| im.iter().map(|x| x * x).sum())
    }
}

/// I.i.d. standard normal amplitudes (complex: independent real and imaginary
/// parts; positive: absolute values), normalized.
pub fn build_random_state(n: u32, q: u32, kind: RandomKind, seed: u64) -> Result<DenseState> {
    let dim = register_dim(q, n)?;
    if dim > MAX_DENSE_DIM {
        return Err(capacity(format!("dense register {q}^{n} exceeds 2^26")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |len: u64| -> Vec<f64> { (0..len).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let mut s = match kind {
        RandomKind::Complex => {
            let re = draw(dim);
            let im = draw(dim);
            DenseState { q, n, kind, seed, re, im: Some(im) }
        }
        RandomKind::Positive => {
            let re = draw(dim).into_iter().map(f64::abs).collect();
            DenseState { q, n, kind, seed, re, im: None }
        }
    };
    let norm = s.norm_sqr().sqrt();
    s.re.iter_mut().for_each(|x| *x /= norm);
    if let Some(im) = s.im.as_mut() {
        im.iter_mut().for_each(|x| *x /= norm);
    }
    Ok(s)
}

/// `out[v]` is true iff `v` is square-free, for `v <= top`.
fn squarefree_sieve(top: u64) -> Vec<bool> {
    let top = top as usize;
    let mut sf = vec![true; top + 1];
    sf[0] = false;
    let mut d = 2usize;
    while d * d <= top {
        let sq = d * d;
        let mut j = sq;
        while j <= top {
            sf[j] = false;
            j += sq;
        }
        d += 1;
    }
    sf
}

/// `sum amplitude^2` evaluated at `prec`.
pub fn norm_sqr(state: &NumberState, prec: Precision) -> ExtReal {
    let a: ExtReal = state.amplitude(prec);
    let mut s = a.square();
    s.mul_u64(state.len() as u64);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numtheory::mobius;
    use proptest::prelude::*;

    fn table() -> PrimeTable {
        PrimeTable::sieve((1 << 20) + 64).unwrap()
    }

    #[test]
    fn prime_states() {
        let t = table();
        assert_eq!(build_prime_state(2, 2, &t).unwrap().values(), &[2, 3]);
        assert_eq!(build_prime_state(5, 2, &t).unwrap().len(), 11);
        let s = build_prime_state(3, 3, &t).unwrap();
        assert_eq!(s.len(), 9);
        assert_eq!(s.dim(), 27);
        assert!(matches!(build_prime_state(1, 2, &t), Err(Error::EmptyState(_))));
        assert!(matches!(build_prime_state(21, 2, &t), Err(Error::Capacity(_))));
        for n in 2..=20 {
            assert_eq!(build_prime_state(n, 2, &t).unwrap().len() as u64, t.pi((1 << n) - 1).unwrap());
        }
    }

    #[test]
    fn arithmetic_states() {
        let t = table();
        assert_eq!(build_arithmetic_prime_state(4, 4, 3, &t).unwrap().values(), &[3, 7, 11]);
        assert_eq!(build_arithmetic_prime_state(4, 4, 1, &t).unwrap().values(), &[5, 13]);
        assert_eq!(build_arithmetic_prime_state(3, 2, 1, &t).unwrap().values(), &[3, 5, 7]);
        assert!(matches!(build_arithmetic_prime_state(4, 4, 2, &t), Err(Error::Domain(_))));
        assert!(matches!(build_arithmetic_prime_state(2, 8, 5, &t), Err(Error::EmptyState(_))));
    }

    #[test]
    fn arithmetic_supports_cover_primes() {
        let t = table();
        for alpha in [4u64, 8] {
            for n in [5u32, 10, 16, 20] {
                let mut all: Vec<u64> = vec![2];
                for beta in (1..alpha).step_by(2) {
                    if let Ok(s) = build_arithmetic_prime_state(n, alpha, beta, &t) {
                        all.extend_from_slice(s.values());
                    }
                }
                all.sort_unstable();
                assert_eq!(all, build_prime_state(n, 2, &t).unwrap().values());
            }
        }
    }

    #[test]
    fn composite_states() {
        let t = table();
        assert_eq!(build_odd_composite_state(4, &t).unwrap().values(), &[9, 15]);
        assert_eq!(build_odd_composite_state(5, &t).unwrap().values(), &[9, 15, 21, 25, 27]);
        assert!(matches!(build_odd_composite_state(3, &t), Err(Error::EmptyState(_))));
        for n in 4..=20u32 {
            let c = build_odd_composite_state(n, &t).unwrap();
            assert_eq!(c.len() as u64, (1 << (n - 1)) - t.pi(1 << n).unwrap());
        }
    }

    #[test]
    fn partition_of_register() {
        let t = table();
        for n in [4u32, 8, 13, 20] {
            let dim = 1u64 << n;
            let p = build_prime_state(n, 2, &t).unwrap();
            let c = build_odd_composite_state(n, &t).unwrap();
            let mut hit = vec![0u8; dim as usize];
            for &v in p.values().iter().chain(c.values()) {
                hit[v as usize] += 1;
            }
            hit[1] += 1;
            for v in (0..dim).step_by(2) {
                if v != 2 {
                    hit[v as usize] += 1;
                }
            }
            assert!(hit.iter().all(|&h| h == 1), "n={n}");
        }
    }

    #[test]
    fn squarefree_and_mobius() {
        assert_eq!(build_squarefree_state(3).unwrap().values(), &[1, 3, 5, 7]);
        assert_eq!(build_squarefree_state(1).unwrap().values(), &[1]);
        assert_eq!(build_squarefree_state(4).unwrap().values(), &[1, 3, 5, 7, 11, 13, 15]);

        let m = build_mobius_state(3).unwrap();
        assert_eq!(m.values(), &[1, 2, 3, 5, 6, 7]);
        let signs: Vec<i8> = m.support().map(|(_, s)| s).collect();
        assert_eq!(signs, vec![1, -1, -1, -1, 1, -1]);
        let m1 = build_mobius_state(1).unwrap();
        assert_eq!(m1.support().collect::<Vec<_>>(), vec![(1, 1), (2, -1)]);
        assert_eq!(m1.n(), 2);
        assert_eq!(build_mobius_state(4).unwrap().len(), 11);

        for n in [5u32, 12, 16] {
            let m = build_mobius_state(n).unwrap();
            for (v, s) in m.support() {
                assert_eq!(s as i64, mobius(v).unwrap());
            }
            let odd: Vec<u64> = m.values().iter().copied().filter(|v| v % 2 == 1).collect();
            assert_eq!(odd, build_squarefree_state(n).unwrap().values());
        }
    }

    #[test]
    fn starry_states() {
        let t = table();
        let s = build_starry_state(4, 7, &t).unwrap();
        assert_eq!(s.len(), 6);
        let primes = [2u64, 3, 5, 7, 11, 13];
        for (i, &v) in s.values().iter().enumerate() {
            assert!(v >= primes[i]);
            let hi = if i + 1 < primes.len() { primes[i + 1] } else { 16 };
            assert!(v < hi);
        }
        assert_eq!(s.values()[0], 2);
        assert!(s.values()[1] == 3 || s.values()[1] == 4);
        assert_eq!(build_starry_state(16, 99, &t).unwrap(), build_starry_state(16, 99, &t).unwrap());
        assert_ne!(build_starry_state(16, 1, &t).unwrap(), build_starry_state(16, 2, &t).unwrap());
    }

    #[test]
    fn uniform_and_random() {
        assert_eq!(build_uniform_state(2, 2).unwrap().values(), &[0, 1, 2, 3]);
        let r = build_random_state(10, 2, RandomKind::Complex, 3).unwrap();
        assert!((r.norm_sqr() - 1.0).abs() < 1e-12);
        let p = build_random_state(10, 2, RandomKind::Positive, 3).unwrap();
        assert!(p.re.iter().all(|&x| x >= 0.0));
        assert!(build_random_state(27, 2, RandomKind::Positive, 3).is_err());
    }

    #[test]
    fn export_round_trips() {
        let t = table();
        let s = build_mobius_state(6).unwrap();
        let j = s.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&j).unwrap();
        assert_eq!(v["q"], 2);
        assert_eq!(v["support"][1], serde_json::json!([2, -1]));
        assert_eq!(NumberState::from_json(&j).unwrap(), s);
        let p = build_arithmetic_prime_state(12, 8, 3, &t).unwrap();
        let mut buf = Vec::new();
        p.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..5], b"NTQS2");
        assert_eq!(NumberState::read_binary(buf.as_slice()).unwrap(), p);
        assert!(NumberState::read_binary(&buf[..buf.len() - 3]).is_err());
    }

    proptest! {
        #[test]
        fn normalization_is_exact(n in 2u32..16) {
            let t = PrimeTable::sieve(1 << 16).unwrap();
            let s = build_prime_state(n, 2, &t).unwrap();
            let term = rug::Rational::from((1, s.len() as u64));
            let mut exact = rug::Rational::new();
            for _ in s.support() {
                exact += &term;
            }
            prop_assert_eq!(exact, 1);
            let nrm = norm_sqr(&s, Precision::QUAD);
            prop_assert!((nrm.to_f64() - 1.0).abs() < 1e-30);
        }

        #[test]
        fn starry_values_bracketed(n in 2u32..14, seed in any::<u64>()) {
            let t = PrimeTable::sieve(1 << 14).unwrap();
            let s = build_starry_state(n, seed, &t).unwrap();
            let primes: Vec<u64> = t.primes_upto((1 << n) - 1).collect();
            prop_assert_eq!(s.len(), primes.len());
            for (i, &v) in s.values().iter().enumerate() {
                prop_assert!(v >= primes[i] && v < (1 << n));
                if i + 1 < primes.len() {
                    prop_assert!(v < primes[i + 1]);
                }
            }
        }
    }
}
