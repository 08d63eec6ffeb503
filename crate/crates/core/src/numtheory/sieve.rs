use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{capacity, domain, Error, Result};

/// Largest sieve limit accepted.
pub const MAX_LIMIT: u64 = 1 << 34;

const CACHE_MAGIC: &[u8; 5] = b"NTQS1";

/// Words per sieve segment; 4096 words cover 2^19 consecutive integers.
const SEGMENT_WORDS: usize = 4096;

/// Primality bitset over `[0, limit]` with constant-time prime counting.
///
/// Only odd numbers are stored: bit `i` stands for `2i + 1`. The prime 2 is
/// implicit.
#[derive(Clone, Debug)]
pub struct PrimeTable {
    limit: u64,
    words: Vec<u64>,
    /// Number of set bits in `words[..i]`.
    rank: Vec<u32>,
}

impl PrimeTable {
    /// Segmented sieve of Eratosthenes up to and including `limit`.
    pub fn sieve(limit: u64) -> Result<Self> {
        if !(2..=MAX_LIMIT).contains(&limit) {
            return Err(capacity(format!("sieve limit {limit} outside [2, 2^34]")));
        }
        let nbits = limit.div_ceil(2) as usize;
        let mut words = vec![!0u64; nbits.div_ceil(64)];

        let root = isqrt(limit);
        let base = small_odd_primes(root);

        words.par_chunks_mut(SEGMENT_WORDS).enumerate().for_each(|(seg, chunk)| {
            let first_idx = (seg * SEGMENT_WORDS * 64) as u64;
            let last_idx = first_idx + chunk.len() as u64 * 64 - 1;
            let lo = 2 * first_idx + 1;
            let hi = 2 * last_idx + 1;
            for &p in &base {
                if p * p > hi {
                    break;
                }
                // first odd multiple of p that is >= max(p^2, lo)
                let mut m = (p * p).max(lo.div_ceil(p) * p);
                if m % 2 == 0 {
                    m += p;
                }
                let mut i = (m - 1) / 2 - first_idx;
                let span = last_idx - first_idx;
                while i <= span {
                    chunk[(i / 64) as usize] &= !(1u64 << (i % 64));
                    i += p;
                }
            }
        });

        words[0] &= !1; // 1 is not prime
        let tail = nbits % 64;
        if tail != 0 {
            *words.last_mut().unwrap() &= (1u64 << tail) - 1;
        }
        Ok(Self::from_words(limit, words))
    }

    fn from_words(limit: u64, words: Vec<u64>) -> Self {
        let mut rank = Vec::with_capacity(words.len() + 1);
        let mut acc = 0u32;
        for w in &words {
            rank.push(acc);
            acc += w.count_ones();
        }
        rank.push(acc);
        PrimeTable { limit, words, rank }
    }

    /// Loads `<dir>/sieve_<limit>.bin` if present and valid, otherwise
    /// sieves and writes it.
    pub fn load_or_sieve(limit: u64, dir: Option<&Path>) -> Result<Self> {
        let Some(dir) = dir else {
            return Self::sieve(limit);
        };
        let path = cache_path(dir, limit);
        if let Ok(t) = Self::read_cache(&path) {
            if t.limit == limit {
                return Ok(t);
            }
        }
        let t = Self::sieve(limit)?;
        fs::create_dir_all(dir)?;
        t.write_cache(&path)?;
        Ok(t)
    }

    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(13 + self.words.len() * 8);
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&self.limit.to_le_bytes());
        for w in &self.words {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        crate::io::write_atomic(path, &buf)
    }

    pub fn read_cache(path: &Path) -> Result<Self> {
        let mut f = fs::File::open(path)?;
        let mut head = [0u8; 13];
        f.read_exact(&mut head)?;
        if &head[..5] != CACHE_MAGIC {
            return Err(Error::Format(format!("{} is not a sieve cache", path.display())));
        }
        let limit = u64::from_le_bytes(head[5..13].try_into().unwrap());
        if !(2..=MAX_LIMIT).contains(&limit) {
            return Err(Error::Format(format!("sieve cache limit {limit} out of range")));
        }
        let nwords = (limit.div_ceil(2) as usize).div_ceil(64);
        let mut body = Vec::with_capacity(nwords * 8);
        f.read_to_end(&mut body)?;
        if body.len() != nwords * 8 {
            return Err(Error::Format(format!("sieve cache {} is truncated", path.display())));
        }
        let words = body.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self::from_words(limit, words))
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn is_prime(&self, v: u64) -> bool {
        if v > self.limit || v < 2 {
            return false;
        }
        if v % 2 == 0 {
            return v == 2;
        }
        let i = (v - 1) / 2;
        self.words[(i / 64) as usize] >> (i % 64) & 1 == 1
    }

    fn check(&self, x: u64) -> Result<()> {
        if x > self.limit {
            return Err(capacity(format!("{x} exceeds sieve limit {}", self.limit)));
        }
        Ok(())
    }

    /// Number of primes `<= x`.
    pub fn pi(&self, x: u64) -> Result<u64> {
        self.check(x)?;
        if x < 2 {
            return Ok(0);
        }
        let i = (x - 1) / 2;
        let w = (i / 64) as usize;
        let mask = if i % 64 == 63 { !0 } else { (1u64 << (i % 64 + 1)) - 1 };
        Ok(1 + self.rank[w] as u64 + (self.words[w] & mask).count_ones() as u64)
    }

    /// Primes in ascending order.
    pub fn primes(&self) -> impl Iterator<Item = u64> + '_ {
        std::iter::once(2).chain(self.words.iter().enumerate().flat_map(|(wi, &w)| {
            BitIter(w).map(move |b| 2 * (wi as u64 * 64 + b as u64) + 1)
        }))
    }

    /// Primes `<= x`.
    pub fn primes_upto(&self, x: u64) -> impl Iterator<Item = u64> + '_ {
        self.primes().take_while(move |&p| p <= x)
    }

    pub fn prime_list(&self) -> Vec<u64> {
        self.primes().collect()
    }

    /// Number of primes `p <= x` with `p = beta (mod alpha)`.
    pub fn pi_mod(&self, alpha: u64, beta: u64, x: u64) -> Result<u64> {
        if alpha == 0 {
            return Err(domain("modulus must be positive"));
        }
        self.check(x)?;
        let b = beta % alpha;
        Ok(self.primes_upto(x).filter(|p| p % alpha == b).count() as u64)
    }

    /// `pi_{4,3}(x) - pi_{4,1}(x)`.
    pub fn chebyshev_bias(&self, x: u64) -> Result<i64> {
        self.check(x)?;
        let mut d = 0i64;
        for p in self.primes_upto(x) {
            match p % 4 {
                3 => d += 1,
                1 => d -= 1,
                _ => {}
            }
        }
        Ok(d)
    }

    /// Number of primes `p <= x` such that `p + k` is also prime.
    pub fn prime_pair_count(&self, k: u64, x: u64) -> Result<u64> {
        if k < 2 || k % 2 == 1 {
            return Err(domain(format!("pair gap must be even and positive, got {k}")));
        }
        self.check(x.saturating_add(k))?;
        Ok(self.primes_upto(x).filter(|&p| self.is_prime(p + k)).count() as u64)
    }

    /// Number of ordered prime pairs `p < p' <= x` with `p = beta1` and
    /// `p' = beta2 (mod alpha)`.
    pub fn pi_mod_pair(&self, alpha: u64, beta1: u64, beta2: u64, x: u64) -> Result<u64> {
        if alpha == 0 {
            return Err(domain("modulus must be positive"));
        }
        self.check(x)?;
        let (b1, b2) = (beta1 % alpha, beta2 % alpha);
        let mut seen = 0u64;
        let mut pairs = 0u64;
        for p in self.primes_upto(x) {
            let r = p % alpha;
            if r == b2 {
                pairs += seen;
            }
            if r == b1 {
                seen += 1;
            }
        }
        Ok(pairs)
    }

    /// Number of primes `p <= x`, `p = beta (mod alpha)`, with `p + h` prime.
    ///
    /// This is the fixed-gap count whose density is `C(h) / phi(alpha)` times
    /// `Li2(x)` under the Hardy-Littlewood conjecture.
    pub fn pi_mod_pair_gap(&self, alpha: u64, beta: u64, h: u64, x: u64) -> Result<u64> {
        if alpha == 0 {
            return Err(domain("modulus must be positive"));
        }
        self.check(x.saturating_add(h))?;
        let b = beta % alpha;
        Ok(self.primes_upto(x).filter(|&p| p % alpha == b && self.is_prime(p + h)).count() as u64)
    }
}

pub fn cache_path(dir: &Path, limit: u64) -> PathBuf {
    dir.join(format!("sieve_{limit}.bin"))
}

struct BitIter(u64);

impl Iterator for BitIter {
    type Item = u32;
    #[inline]
    fn next(&mut self) -> Option<u32> {
        if self.0 == 0 {
            return None;
        }
        let b = self.0.trailing_zeros();
        self.0 &= self.0 - 1;
        Some(b)
    }
}

pub(crate) fn isqrt(x: u64) -> u64 {
    let mut r = (x as f64).sqrt() as u64;
    while r * r > x {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= x {
        r += 1;
    }
    r
}

/// Odd primes `<= n` by a plain sieve; used for the base primes.
pub(crate) fn small_odd_primes(n: u64) -> Vec<u64> {
    let n = n as usize;
    let mut comp = vec![false; n + 1];
    let mut out = Vec::new();
    let mut i = 3;
    while i <= n {
        if !comp[i] {
            out.push(i as u64);
            let mut j = i * i;
            while j <= n {
                comp[j] = true;
                j += 2 * i;
            }
        }
        i += 2;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial_division(v: u64) -> bool {
        v >= 2 && (2..).take_while(|d| d * d <= v).all(|d| v % d != 0)
    }

    #[test]
    fn small_limits_match_trial_division() {
        for limit in [2u64, 3, 16, 32, 63, 64, 65, 127, 128, 129, 1000] {
            let t = PrimeTable::sieve(limit).unwrap();
            let expect: Vec<u64> = (0..=limit).filter(|&v| trial_division(v)).collect();
            assert_eq!(t.prime_list(), expect, "limit {limit}");
            for x in 0..=limit {
                assert_eq!(t.pi(x).unwrap(), expect.iter().filter(|&&p| p <= x).count() as u64);
            }
        }
        assert_eq!(PrimeTable::sieve(16).unwrap().prime_list(), vec![2, 3, 5, 7, 11, 13]);
        assert_eq!(PrimeTable::sieve(2).unwrap().prime_list(), vec![2]);
        assert_eq!(PrimeTable::sieve(32).unwrap().pi(32).unwrap(), 11);
    }

    #[test]
    fn segment_boundaries() {
        // limit spans several segments
        let limit = 3 * SEGMENT_WORDS as u64 * 128 + 77;
        let t = PrimeTable::sieve(limit).unwrap();
        let mut comp = vec![false; limit as usize + 1];
        let mut count = 0;
        for i in 2..=limit as usize {
            if !comp[i] {
                count += 1;
                assert!(t.is_prime(i as u64), "{i}");
                let mut j = i * i;
                while j <= limit as usize {
                    comp[j] = true;
                    j += i;
                }
            } else {
                assert!(!t.is_prime(i as u64), "{i}");
            }
        }
        assert_eq!(t.pi(limit).unwrap(), count);
    }

    #[test]
    fn out_of_range() {
        assert!(matches!(PrimeTable::sieve(1), Err(Error::Capacity(_))));
        assert!(matches!(PrimeTable::sieve(MAX_LIMIT + 1), Err(Error::Capacity(_))));
        let t = PrimeTable::sieve(100).unwrap();
        assert!(matches!(t.pi(101), Err(Error::Capacity(_))));
        assert_eq!(t.pi(1).unwrap(), 0);
    }

    #[test]
    fn modular_counts() {
        let t = PrimeTable::sieve(1 << 10).unwrap();
        assert_eq!(t.pi_mod(4, 3, 16).unwrap(), 3);
        assert_eq!(t.pi_mod(4, 1, 16).unwrap(), 2);
        for x in 2..100 {
            assert_eq!(t.pi_mod(2, 0, x).unwrap(), 1);
        }
        assert!(t.pi_mod(0, 1, 10).is_err());
        assert_eq!(t.chebyshev_bias(16).unwrap(), 1);
        assert_eq!(t.chebyshev_bias(3).unwrap(), 1);
        assert_eq!(t.chebyshev_bias(2).unwrap(), 0);
    }

    #[test]
    fn pair_counts() {
        let t = PrimeTable::sieve(1 << 10).unwrap();
        assert_eq!(t.prime_pair_count(2, 32).unwrap(), 5);
        assert_eq!(t.prime_pair_count(2, 4).unwrap(), 1);
        // 5, 7, 11, 13, 17, 23 and 31 (31 + 6 = 37)
        assert_eq!(t.prime_pair_count(6, 32).unwrap(), 7);
        assert_eq!(t.prime_pair_count(6, 30).unwrap(), 6);
        assert!(matches!(t.prime_pair_count(3, 32), Err(Error::Domain(_))));
        assert!(matches!(t.prime_pair_count(2, 1023), Err(Error::Capacity(_))));

        assert_eq!(t.pi_mod_pair(4, 1, 3, 16).unwrap(), 2);
        assert_eq!(t.pi_mod_pair(4, 1, 1, 8).unwrap(), 0);
        assert_eq!(t.pi_mod_pair(2, 1, 1, 8).unwrap(), 3);
        assert_eq!(t.pi_mod_pair_gap(2, 1, 2, 32).unwrap(), 5);
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let t = PrimeTable::load_or_sieve(10_007, Some(dir.path())).unwrap();
        let path = cache_path(dir.path(), 10_007);
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..5], b"NTQS1");
        assert_eq!(u64::from_le_bytes(bytes[5..13].try_into().unwrap()), 10_007);
        let u = PrimeTable::load_or_sieve(10_007, Some(dir.path())).unwrap();
        assert_eq!(t.words, u.words);
        fs::write(&path, &bytes[..20]).unwrap();
        assert!(PrimeTable::read_cache(&path).is_err());
        // a corrupt cache is rebuilt
        let v = PrimeTable::load_or_sieve(10_007, Some(dir.path())).unwrap();
        assert_eq!(v.pi(10_007).unwrap(), 1230);
    }
}
