use serde::Serialize;

use super::arith::ArithTable;
use super::hl::DEFAULT_CUTOFF;
use super::sieve::PrimeTable;
use crate::error::{domain, Result};
use crate::real::{ExtReal, Precision, Real};

fn check_odd(k: u64) -> Result<()> {
    if k == 0 || k % 2 == 0 {
        return Err(domain(format!("sum index must be odd and positive, got {k}")));
    }
    Ok(())
}

/// `A(k) = sum_{odd j <= k} mu^2(j) phi(j)`.
pub fn a_sum(k: u64) -> Result<u128> {
    check_odd(k)?;
    let t = ArithTable::new(k as usize);
    Ok((1..=k as usize).step_by(2).filter(|&j| t.mu[j] != 0).map(|j| t.phi[j] as u128).sum())
}

/// `B(k) = sum_{odd j <= k} mu^2(j) / phi(j)`.
pub fn b_sum(k: u64, prec: Precision) -> Result<ExtReal> {
    check_odd(k)?;
    let t = ArithTable::new(k as usize);
    let wp = Precision::new(prec.bits() + 24).unwrap();
    let mut acc = ExtReal::zero(wp);
    for j in (1..=k as usize).step_by(2) {
        if t.mu[j] != 0 {
            let mut r = ExtReal::one(wp);
            r.div_u64(t.phi[j] as u64);
            acc.add_assign(&r);
        }
    }
    Ok(acc.with_precision(prec))
}

/// The constants governing `A(k) ~ alpha k^2`, `B(k) ~ (ln k + beta)/2` and
/// the asymptotic `phi_m = 2^{m+1} / (m ln 2 + delta)`.
#[derive(Clone, Debug, Serialize)]
pub struct AppendixConstants {
    pub alpha: ExtReal,
    pub beta: ExtReal,
    pub delta: ExtReal,
    pub cutoff: u64,
    pub tail: Tail,
}

/// Treatment of the primes above the cutoff.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Tail {
    /// Plain partial products and sums.
    Truncated,
    /// Partial results plus the leading analytic estimate of the tail.
    Corrected,
}

/// Truncated at [`DEFAULT_CUTOFF`].
pub fn appendix_constants(prec: Precision) -> Result<AppendixConstants> {
    appendix_constants_with(DEFAULT_CUTOFF, Tail::Truncated, prec)
}

/// Euler products and prime sums over `p <= cutoff`.
///
/// `alpha = 1/4 prod_{p>2} (1 - 2/p^2 + 1/p^3)`, whose tail factor is
/// `exp(-2 sum_{p>x} 1/p^2)`, and
/// `beta = gamma + ln 2 / 2 + sum_p ln p / (p(p-1))`, whose tail is
/// `2/x - theta(x)/x^2` to leading order. Truncation overestimates alpha by a
/// relative `~2/(x ln x)` and underestimates beta by `~1/x`.
pub fn appendix_constants_with(cutoff: u64, tail: Tail, prec: Precision) -> Result<AppendixConstants> {
    if cutoff < 100 {
        return Err(domain("Euler product cutoff must be at least 100"));
    }
    let table = PrimeTable::sieve(cutoff)?;
    let wp = Precision::new(prec.bits() + 32).unwrap();

    let mut prod = ExtReal::one(wp);
    let mut lsum = ExtReal::zero(wp);
    let mut theta = ExtReal::zero(wp);
    for p in table.primes() {
        let lp = ExtReal::from_i64(p as i64, wp).ln();
        theta.add_assign(&lp);
        let mut t = lp;
        t.div_u64(p);
        t.div_u64(p - 1);
        lsum.add_assign(&t);
        if p > 2 {
            // 1 - (2p - 1)/p^3
            let mut f = ExtReal::from_i64(2 * p as i64 - 1, wp);
            f.div_u64(p);
            f.div_u64(p);
            f.div_u64(p);
            let mut g = ExtReal::one(wp);
            g.sub_assign(&f);
            prod.mul_assign(&g);
        }
    }

    let x = ExtReal::from_i64(cutoff as i64, wp);
    let lx = x.ln();
    let on = tail == Tail::Corrected;
    // sum_{p > x} 1/p^2 ~ E1(ln x) ~ (1/(x ln x)) (1 - 1/ln x + 2/ln^2 x)
    let inv_l = ExtReal::one(wp).div(&lx);
    let mut series = ExtReal::one(wp);
    series.sub_assign(&inv_l);
    let mut two_l2 = inv_l.square();
    two_l2.mul_u64(2);
    series.add_assign(&two_l2);
    let mut inv_tail = series.div(&x.mul(&lx));
    inv_tail.mul_u64(2);
    inv_tail.neg_assign();
    if on {
        prod.mul_assign(&inv_tail.exp());
    }
    let mut alpha = prod;
    alpha.div_u64(4);

    // 2/x - theta(x)/x^2 + 1/(2 x^2)
    let mut tail_b = ExtReal::from_i64(2, wp).div(&x);
    let x2 = x.square();
    tail_b.sub_assign(&theta.div(&x2));
    let mut h = ExtReal::one(wp).div(&x2);
    h.div_u64(2);
    tail_b.add_assign(&h);

    let mut beta = ExtReal::euler_gamma(wp);
    let mut half_ln2 = ExtReal::ln2(wp);
    half_ln2.div_u64(2);
    beta.add_assign(&half_ln2);
    beta.add_assign(&lsum);
    if on {
        beta.add_assign(&tail_b);
    }

    let mut delta = beta.clone();
    delta.mul_u64(2);
    let mut two_alpha = alpha.clone();
    two_alpha.mul_u64(2);
    delta.sub_assign(&two_alpha.ln());

    Ok(AppendixConstants {
        alpha: alpha.with_precision(prec),
        beta: beta.with_precision(prec),
        delta: delta.with_precision(prec),
        cutoff,
        tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_terms() {
        assert_eq!(a_sum(1).unwrap(), 1);
        assert_eq!(b_sum(1, Precision::QUAD).unwrap().to_f64(), 1.0);
        // 1 + phi(3) + phi(5) + phi(7) + phi(11) + phi(13) + phi(15), 9 excluded
        assert_eq!(a_sum(15).unwrap(), 1 + 2 + 4 + 6 + 10 + 12 + 8);
        assert!(a_sum(4).is_err());
        assert!(b_sum(0, Precision::QUAD).is_err());
    }

    #[test]
    fn asymptotics_of_sums() {
        let k = 1_000_001u64;
        let a = a_sum(k).unwrap() as f64 / (k as f64 * k as f64);
        assert!((a - 0.171299873).abs() < 2e-3, "{a}");
        let b = b_sum(k, Precision::QUAD).unwrap().to_f64();
        let beta = 2.0 * b - (k as f64).ln();
        assert!((beta - 1.679135304).abs() < 1e-2, "{beta}");
    }

    // Limits from an independent 30-digit evaluation (partial products to
    // 10^7 in mpmath plus the same tail estimates).
    const ALPHA: f64 = 0.171_299_802_268;
    const BETA: f64 = 1.679_155_866_06;
    const DELTA: f64 = 4.429_504_579_5;

    #[test]
    fn corrected_constants_converge() {
        let p = Precision::QUAD;
        let a = appendix_constants_with(100_000, Tail::Corrected, p).unwrap();
        let b = appendix_constants_with(1_000_000, Tail::Corrected, p).unwrap();
        assert!((a.alpha.to_f64() - ALPHA).abs() < 5e-9);
        assert!((b.alpha.to_f64() - ALPHA).abs() < 1e-9);
        assert!((a.beta.to_f64() - BETA).abs() < 1e-7);
        assert!((b.beta.to_f64() - BETA).abs() < 2e-9);
        assert!((b.delta.to_f64() - DELTA).abs() < 5e-9);
    }

    #[test]
    fn truncation_error_has_predicted_size() {
        let p = Precision::QUAD;
        let x = 100_000u64;
        let t = appendix_constants_with(x, Tail::Truncated, p).unwrap();
        let c = appendix_constants_with(x, Tail::Corrected, p).unwrap();
        let db = c.beta.to_f64() - t.beta.to_f64();
        assert!((db * x as f64 - 1.0).abs() < 0.05, "{db}");
        let da = t.alpha.to_f64() / c.alpha.to_f64() - 1.0;
        let lx = (x as f64).ln();
        assert!((da * x as f64 * lx / 2.0 - 1.0).abs() < 0.2, "{da}");
    }
}
