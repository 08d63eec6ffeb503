use std::sync::OnceLock;

use super::sieve::small_odd_primes;
use crate::error::{domain, Result};

/// Largest argument accepted by the factorization-based functions.
const MAX_ARG: u64 = 1 << 34;

fn trial_primes() -> &'static [u64] {
    static P: OnceLock<Vec<u64>> = OnceLock::new();
    P.get_or_init(|| {
        let mut v = vec![2];
        v.extend(small_odd_primes(1 << 17));
        v
    })
}

/// Prime factorization as `(prime, exponent)` pairs in ascending order.
pub fn factorize(mut x: u64) -> Result<Vec<(u64, u32)>> {
    if x == 0 {
        return Err(domain("cannot factor 0"));
    }
    if x > MAX_ARG {
        return Err(domain(format!("{x} exceeds the factorization range 2^34")));
    }
    let mut out = Vec::new();
    for &p in trial_primes() {
        if p * p > x {
            break;
        }
        if x % p == 0 {
            let mut e = 0;
            while x % p == 0 {
                x /= p;
                e += 1;
            }
            out.push((p, e));
        }
    }
    if x > 1 {
        out.push((x, 1));
    }
    Ok(out)
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn mobius(x: u64) -> Result<i64> {
    let f = factorize(x)?;
    if f.iter().any(|&(_, e)| e > 1) {
        return Ok(0);
    }
    Ok(if f.len() % 2 == 0 { 1 } else { -1 })
}

pub fn totient(x: u64) -> Result<u64> {
    let f = factorize(x)?;
    Ok(f.iter().fold(x, |acc, &(p, _)| acc / p * (p - 1)))
}

pub fn is_squarefree(x: u64) -> bool {
    matches!(mobius(x), Ok(m) if m != 0)
}

/// Ramanujan sum `c_k(h)`, by the closed form
/// `mu(k/g) phi(k) / phi(k/g)` with `g = gcd(k, h)`.
pub fn ramanujan_sum(k: u64, h: i64) -> Result<i64> {
    if k == 0 {
        return Err(domain("Ramanujan sum needs k >= 1"));
    }
    let g = gcd(k, h.unsigned_abs() % k);
    let g = if g == 0 { k } else { g };
    let q = k / g;
    let mu = mobius(q)?;
    if mu == 0 {
        return Ok(0);
    }
    Ok(mu * (totient(k)? / totient(q)?) as i64)
}

/// `mu(j)` and `phi(j)` for every `j <= n`, by a linear sieve.
#[derive(Clone, Debug)]
pub struct ArithTable {
    pub mu: Vec<i8>,
    pub phi: Vec<u32>,
}

impl ArithTable {
    pub fn new(n: usize) -> Self {
        let mut mu = vec![0i8; n + 1];
        let mut phi = vec![0u32; n + 1];
        let mut primes: Vec<usize> = Vec::new();
        if n >= 1 {
            mu[1] = 1;
            phi[1] = 1;
        }
        for i in 2..=n {
            if phi[i] == 0 {
                primes.push(i);
                mu[i] = -1;
                phi[i] = (i - 1) as u32;
            }
            for &p in &primes {
                let ip = i * p;
                if ip > n {
                    break;
                }
                if i % p == 0 {
                    mu[ip] = 0;
                    phi[ip] = phi[i] * p as u32;
                    break;
                }
                mu[ip] = -mu[i];
                phi[ip] = phi[i] * (p - 1) as u32;
            }
        }
        ArithTable { mu, phi }
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.len() <= 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn direct_ramanujan(k: u64, h: i64) -> f64 {
        let mut s = 0.0;
        for l in 1..=k {
            if gcd(l, k) == 1 {
                let x = (h.rem_euclid(k as i64) as u64 * l % k) as f64 / k as f64;
                s += (2.0 * std::f64::consts::PI * x).cos();
            }
        }
        s
    }

    #[test]
    fn spot_values() {
        assert_eq!(mobius(1).unwrap(), 1);
        assert_eq!(mobius(12).unwrap(), 0);
        assert_eq!(mobius(30).unwrap(), -1);
        assert!(mobius(0).is_err());
        assert_eq!(totient(13).unwrap(), 12);
        assert_eq!(totient(1).unwrap(), 1);
        assert_eq!(totient(21).unwrap(), 12);
        assert!(totient(0).is_err());
        assert_eq!(totient((1 << 34) - 1).unwrap(), 11_452_896_600);
    }

    #[test]
    fn ramanujan_spot_values() {
        for h in -5..20 {
            assert_eq!(ramanujan_sum(1, h).unwrap(), 1);
            assert_eq!(ramanujan_sum(2, h).unwrap(), if h % 2 == 0 { 1 } else { -1 });
        }
        assert_eq!(ramanujan_sum(2, 3).unwrap(), -1);
        assert_eq!(ramanujan_sum(15, 0).unwrap(), 8);
    }

    #[test]
    fn ramanujan_matches_direct_sum() {
        // exhaustive for small k, strided up to 10^4
        let ks = (1..=200u64).chain((201..=10_000).step_by(397));
        for k in ks {
            for h in [0i64, 1, 2, 3, 6, 10, 12, 30, 105, 210, 1001, 4096] {
                let c = ramanujan_sum(k, h).unwrap() as f64;
                let d = direct_ramanujan(k, h);
                assert!((c - d).abs() < 1e-10, "k={k} h={h} {c} {d}");
                assert_eq!(c, d.round());
            }
        }
    }

    #[test]
    fn even_index_reduction() {
        // c_{2k}(2h) = c_k(2h) for odd k
        for k in (1..=99).step_by(2) {
            for h in 0..=99 {
                assert_eq!(ramanujan_sum(2 * k, 2 * h).unwrap(), ramanujan_sum(k, 2 * h).unwrap());
            }
        }
    }

    #[test]
    fn divisor_identities() {
        // sum_{d|n} mu^2(d)/phi(d) = n/phi(n) and sum_{d|n} phi(d) = n
        let t = ArithTable::new(10_000);
        for n in 1..=10_000usize {
            let (mut num, mut den) = (0u128, 1u128);
            let mut phisum = 0u64;
            for d in (1..=n).filter(|d| n % d == 0) {
                phisum += t.phi[d] as u64;
                if t.mu[d] != 0 {
                    let p = t.phi[d] as u128;
                    num = num * p + den;
                    den *= p;
                    let g = gcd(num as u64, den as u64) as u128;
                    num /= g;
                    den /= g;
                }
            }
            assert_eq!(phisum, n as u64);
            assert_eq!(num * t.phi[n] as u128, den * n as u128, "n={n}");
        }
    }

    #[test]
    fn table_matches_factorization() {
        let t = ArithTable::new(5000);
        for j in 1..=5000u64 {
            assert_eq!(t.mu[j as usize] as i64, mobius(j).unwrap());
            assert_eq!(t.phi[j as usize] as u64, totient(j).unwrap());
        }
    }

    proptest! {
        #[test]
        fn ramanujan_multiplicative(a in 1u64..1000, b in 1u64..1000, h in -2000i64..2000) {
            prop_assume!(gcd(a, b) == 1);
            prop_assert_eq!(
                ramanujan_sum(a * b, h).unwrap(),
                ramanujan_sum(a, h).unwrap() * ramanujan_sum(b, h).unwrap()
            );
        }

        #[test]
        fn totient_counts_coprimes(x in 1u64..3000) {
            let direct = (1..=x).filter(|&l| gcd(l, x) == 1).count() as u64;
            prop_assert_eq!(totient(x).unwrap(), direct);
        }
    }
}
