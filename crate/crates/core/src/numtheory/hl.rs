use std::collections::HashMap;
use std::sync::Mutex;

use super::arith::{factorize, gcd, ArithTable};
use super::sieve::PrimeTable;
use crate::error::{domain, Result};
use crate::real::{ExtReal, Precision, Real};

/// Default largest prime used in Euler products.
pub const DEFAULT_CUTOFF: u64 = 10_000_000;

/// Partial twin prime constant `prod_{2 < p <= cutoff} (1 - 1/(p-1)^2)`.
pub fn twin_prime_constant(cutoff: u64, prec: Precision) -> Result<ExtReal> {
    if cutoff < 2 {
        return Err(domain("Euler product cutoff must be at least 2"));
    }
    let table = PrimeTable::sieve(cutoff)?;
    Ok(twin_prime_product(&table, cutoff, prec))
}

fn twin_prime_product(table: &PrimeTable, cutoff: u64, prec: Precision) -> ExtReal {
    let wp = Precision::new(prec.bits() + 32).unwrap();
    let mut acc = ExtReal::one(wp);
    for p in table.primes_upto(cutoff).skip(1) {
        // 1 - 1/(p-1)^2 = p (p-2) / (p-1)^2
        acc.mul_u64(p * (p - 2));
        acc.div_u64((p - 1) * (p - 1));
    }
    acc.with_precision(prec)
}

/// Hardy-Littlewood constants `C(h)` built on a fixed twin prime constant.
///
/// Immutable apart from an internal memo; safe to share between threads.
#[derive(Debug)]
pub struct HLConstants {
    c2: ExtReal,
    cutoff: u64,
    cache: Mutex<HashMap<u64, ExtReal>>,
}

impl Clone for HLConstants {
    fn clone(&self) -> Self {
        HLConstants::from_c2(self.c2.clone(), self.cutoff)
    }
}

impl HLConstants {
    pub fn new(cutoff: u64, prec: Precision) -> Result<Self> {
        Ok(Self::from_c2(twin_prime_constant(cutoff, prec)?, cutoff))
    }

    /// Same as [`HLConstants::new`] reusing an existing sieve that reaches `cutoff`.
    pub fn with_table(table: &PrimeTable, cutoff: u64, prec: Precision) -> Result<Self> {
        if cutoff > table.limit() {
            return Err(crate::error::capacity(format!(
                "cutoff {cutoff} beyond sieve limit {}",
                table.limit()
            )));
        }
        Ok(Self::from_c2(twin_prime_product(table, cutoff, prec), cutoff))
    }

    pub fn from_c2(c2: ExtReal, cutoff: u64) -> Self {
        HLConstants { c2, cutoff, cache: Mutex::new(HashMap::new()) }
    }

    pub fn c2(&self) -> &ExtReal {
        &self.c2
    }

    pub fn cutoff(&self) -> u64 {
        self.cutoff
    }

    pub fn precision(&self) -> Precision {
        self.c2.precision()
    }

    /// `C(h) = 2 C2 prod_{p | h, p > 2} (p-1)/(p-2)` for even `h`, zero for odd `h`.
    pub fn c(&self, h: u64) -> ExtReal {
        let prec = self.precision();
        if h % 2 == 1 {
            return ExtReal::zero(prec);
        }
        if h == 0 {
            // Never used by the model matrices; the diagonal is excluded.
            return ExtReal::zero(prec);
        }
        if let Some(v) = self.cache.lock().unwrap().get(&h) {
            return v.clone();
        }
        let mut v = self.c2.clone();
        v.mul_u64(2);
        for (p, _) in factorize(h).expect("h within factorization range") {
            if p > 2 {
                v.mul_u64(p - 1);
                v.div_u64(p - 2);
            }
        }
        self.cache.lock().unwrap().insert(h, v.clone());
        v
    }
}

/// `sum_{k <= kmax} (mu(k)/phi(k))^2 c_k(h)`, which converges to `C(h)`.
pub fn hl_constant_series(h: u64, kmax: u64, prec: Precision) -> Result<ExtReal> {
    if h % 2 == 1 || h == 0 {
        return Err(domain(format!("series defined for positive even h, got {h}")));
    }
    if kmax == 0 {
        return Err(domain("kmax must be at least 1"));
    }
    let t = ArithTable::new(kmax as usize);
    let wp = Precision::new(prec.bits() + 16).unwrap();
    let mut acc = ExtReal::zero(wp);
    for k in 1..=kmax as usize {
        if t.mu[k] == 0 {
            continue;
        }
        let g = gcd(k as u64, h) as usize;
        let q = k / g;
        if t.mu[q] == 0 {
            continue;
        }
        let phi = t.phi[k] as u64;
        // c_k(h) / phi(k)^2 = mu(q) / (phi(q) phi(k))
        let mut term = ExtReal::from_i64(t.mu[q] as i64, wp);
        term.div_u64(t.phi[q] as u64 * phi);
        acc.add_assign(&term);
    }
    Ok(acc.with_precision(prec))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_cutoffs() {
        let p = Precision::QUAD;
        assert_eq!(twin_prime_constant(3, p).unwrap().to_f64(), 0.75);
        assert_eq!(twin_prime_constant(2, p).unwrap().to_f64(), 1.0);
        // monotone decreasing
        let a = twin_prime_constant(100, p).unwrap();
        let b = twin_prime_constant(1000, p).unwrap();
        assert!(b < a);
    }

    #[test]
    fn twin_prime_constant_limit() {
        // Independent accumulation: f64 log-sum with Kahan compensation.
        let t = PrimeTable::sieve(DEFAULT_CUTOFF).unwrap();
        let mut s = 0.0f64;
        let mut c = 0.0f64;
        for p in t.primes().skip(1) {
            let y = (-1.0 / ((p - 1) as f64).powi(2)).ln_1p() - c;
            let z = s + y;
            c = (z - s) - y;
            s = z;
        }
        let oracle = s.exp();
        let c2 = twin_prime_constant(DEFAULT_CUTOFF, Precision::QUAD).unwrap().to_f64();
        assert!((c2 - oracle).abs() < 1e-13, "{c2} {oracle}");
        assert!((c2 - 0.66016).abs() < 5e-6, "{c2}");
    }

    #[test]
    fn constants_by_offset() {
        let k = HLConstants::new(10_000, Precision::QUAD).unwrap();
        let c2 = k.c2().to_f64();
        assert_eq!(k.c(3).to_f64(), 0.0);
        assert_eq!(k.c(2), {
            let mut v = k.c2().clone();
            v.mul_u64(2);
            v
        });
        assert!((k.c(4).to_f64() - 2.0 * c2).abs() < 1e-15);
        assert!((k.c(6).to_f64() - 4.0 * c2).abs() < 1e-15);
        assert!((k.c(30).to_f64() - 2.0 * c2 * 2.0 * 4.0 / 3.0).abs() < 1e-15);
        for h in 1..200 {
            assert!(k.c(h).to_f64() >= 0.0);
        }
    }

    #[test]
    fn series_converges() {
        let p = Precision::QUAD;
        assert_eq!(hl_constant_series(2, 1, p).unwrap().to_f64(), 1.0);
        assert!(hl_constant_series(3, 10, p).is_err());
        let k = HLConstants::new(DEFAULT_CUTOFF, p).unwrap();
        for h in [2u64, 6, 10] {
            let target = k.c(h).to_f64();
            let mut last = f64::INFINITY;
            for kmax in [10u64, 100, 1000, 10_000, 100_000] {
                let d = (hl_constant_series(h, kmax, p).unwrap().to_f64() - target).abs();
                assert!(d < last, "h={h} kmax={kmax} {d} {last}");
                last = d;
            }
            assert!(last < 1e-3);
        }
    }
}
