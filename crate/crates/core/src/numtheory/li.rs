use crate::error::{domain, Result};
use crate::real::{ExtReal, Precision, Real};

/// Offset logarithmic integral `Li(x) = int_2^x dt / ln t`.
///
/// Evaluated as `li(x) - li(2)` with the convergent series
/// `li(x) = gamma + ln ln x + sum_k (ln x)^k / (k k!)`, all terms positive.
pub fn li(x: &ExtReal, prec: Precision) -> Result<ExtReal> {
    check(x)?;
    let wp = working(prec, x);
    let two = ExtReal::from_i64(2, wp);
    let mut v = li_series(&x.with_precision(wp));
    v.sub_assign(&li_series(&two));
    Ok(v.with_precision(prec))
}

/// `Li2(x) = int_2^x dt / (ln t)^2 = Li(x) - x / ln x + 2 / ln 2`.
pub fn li2(x: &ExtReal, prec: Precision) -> Result<ExtReal> {
    check(x)?;
    let wp = working(prec, x);
    let xw = x.with_precision(wp);
    let mut v = li(&xw, wp)?;
    v.sub_assign(&xw.div(&xw.ln()));
    let mut b = ExtReal::from_i64(2, wp);
    b.div_assign(&ExtReal::ln2(wp));
    v.add_assign(&b);
    Ok(v.with_precision(prec))
}

/// `l_N = Li2(N) / Li(N)`.
pub fn ell(x: &ExtReal, prec: Precision) -> Result<ExtReal> {
    let wp = Precision::new(prec.bits() + 16).unwrap();
    Ok(li2(x, wp)?.div(&li(x, wp)?).with_precision(prec))
}

fn check(x: &ExtReal) -> Result<()> {
    if x.to_f64() < 2.0 || x.to_f64().is_nan() {
        return Err(domain(format!("logarithmic integral needs x >= 2, got {x}")));
    }
    Ok(())
}

fn working(prec: Precision, x: &ExtReal) -> Precision {
    // x / ln x cancels against Li(x) in li2; guard bits cover the lost digits.
    let guard = 32 + x.to_f64().log2().max(1.0) as u32;
    Precision::new(prec.bits() + guard).unwrap()
}

fn li_series(x: &ExtReal) -> ExtReal {
    let wp = x.precision();
    let l = x.ln();
    let mut sum = ExtReal::euler_gamma(wp);
    sum.add_assign(&l.ln());
    let mut term = ExtReal::one(wp);
    let eps = wp.ulp_scale(-4);
    let mut k = 1i64;
    loop {
        term.mul_assign(&l);
        term.div_u64(k as u64);
        let mut t = term.clone();
        t.div_u64(k as u64);
        sum.add_assign(&t);
        if k as f64 > l.to_f64() && t.to_f64() < eps * sum.to_f64().abs() {
            break;
        }
        k += 1;
    }
    sum
}
