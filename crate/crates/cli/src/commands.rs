use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use ntqs_core::analysis::{
    analytic_spectrum, conjecture_constants, dense_entropy, fourier_fit, model_entropy_fit, scan, EntropySeries, KmRule,
};
use ntqs_core::entangle::eigenvalue_location_table;
use ntqs_core::io::write_atomic;
use ntqs_core::numtheory::{appendix_constants_with, twin_prime_constant, Tail};
use ntqs_core::spectral::{ancilla_peak, closed_form_peaks, full_qft_spectrum, qft_probability, sample_shots, Peak};
use ntqs_core::states::{
    build_arithmetic_prime_state, build_mobius_state, build_odd_composite_state, build_prime_state,
    build_random_state, build_squarefree_state, build_starry_state, build_uniform_state, register_dim, RandomKind,
};
use ntqs_core::{Error, ExtReal, NumberState, Precision, Real, Result};
use serde_json::{json, Value};

use crate::config::{OutputFormat, RunConfig};
use crate::{Family, Kind, RuleArg, StateArgs};

fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

fn family_name(f: Family) -> &'static str {
    match f {
        Family::Prime => "prime",
        Family::Arith => "arith",
        Family::Composite => "composite",
        Family::Squarefree => "squarefree",
        Family::Mobius => "mobius",
        Family::Starry => "starry",
        Family::Uniform => "uniform",
        Family::Random => "random",
    }
}

fn random_kind(k: Kind) -> RandomKind {
    match k {
        Kind::Complex => RandomKind::Complex,
        Kind::Positive => RandomKind::Positive,
    }
}

pub fn build_state(cfg: &RunConfig, a: &StateArgs) -> Result<NumberState> {
    if a.q != 2 && !matches!(a.family, Family::Prime | Family::Uniform) {
        return Err(domain(format!("the {} family is defined on qubits only", family_name(a.family))));
    }
    let top = register_dim(a.q, a.n)? - 1;
    match a.family {
        Family::Prime => build_prime_state(a.n, a.q, &cfg.primes(top)?),
        Family::Arith => build_arithmetic_prime_state(a.n, a.alpha, a.beta, &cfg.primes(top)?),
        Family::Composite => build_odd_composite_state(a.n, &cfg.primes(top)?),
        Family::Squarefree => build_squarefree_state(a.n),
        Family::Mobius => build_mobius_state(a.n),
        Family::Starry => build_starry_state(a.n, cfg.seed, &cfg.primes(top)?),
        Family::Uniform => build_uniform_state(a.n, a.q),
        Family::Random => Err(domain("random states are dense and have no support export")),
    }
}

fn emit_json(v: &Value) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

pub fn state(cfg: &RunConfig, a: &StateArgs, output: Option<PathBuf>, binary: bool) -> Result<()> {
    let st = build_state(cfg, a)?;
    let format = cfg.format_or(OutputFormat::Json);
    let ext = if binary {
        "bin"
    } else {
        match format {
            OutputFormat::Json => "json",
            OutputFormat::Csv => "csv",
            OutputFormat::Dat => "dat",
        }
    };
    let path = output.unwrap_or_else(|| cfg.out_path(&format!("{}_q{}_n{}.{ext}", st.label(), st.q(), st.n())));
    RunConfig::ensure_parent(&path)?;
    if binary {
        st.save_binary(&path)?;
    } else {
        let text = match format {
            OutputFormat::Json => st.to_json()?,
            OutputFormat::Csv => {
                let mut s = String::from("value,sign\n");
                for (v, sg) in st.support() {
                    let _ = writeln!(s, "{v},{sg}");
                }
                s
            }
            OutputFormat::Dat => {
                let mut s = format!("# {} q={} n={}\n# value sign\n", st.label(), st.q(), st.n());
                for (v, sg) in st.support() {
                    let _ = writeln!(s, "{v} {sg}");
                }
                s
            }
        };
        write_atomic(&path, text.as_bytes())?;
    }
    println!("{}", st.len());
    eprintln!("wrote {}", path.display());
    Ok(())
}

/// The full spectrum as f64 (for sampling) and as decimal strings at the working precision.
fn spectrum(st: &NumberState, prec: Precision) -> Result<(Vec<f64>, Vec<String>)> {
    if prec == Precision::DOUBLE {
        let s = full_qft_spectrum::<f64>(st, prec)?;
        let text = s.iter().map(|p| format!("{p:e}")).collect();
        Ok((s, text))
    } else {
        let s = full_qft_spectrum::<ExtReal>(st, prec)?;
        Ok((s.iter().map(Real::to_f64).collect(), s.iter().map(ExtReal::to_decimal).collect()))
    }
}

pub fn peaks(cfg: &RunConfig, a: &StateArgs, full: bool, ancilla: Option<u32>, shots: Option<u64>) -> Result<()> {
    let st = build_state(cfg, a)?;
    let prec = cfg.precision;
    let big_n = st.dim();
    let mut out = if a.family == Family::Prime && a.q == 2 {
        let table = cfg.primes(big_n - 1)?;
        let mut rep = closed_form_peaks(a.n, &table, prec)?;
        rep.add_direct_sums(&st, prec)?;
        rep.extract()?;
        serde_json::to_value(&rep)?
    } else {
        let mut peaks = serde_json::Map::new();
        for pk in Peak::ALL {
            let p: ExtReal = qft_probability(&st, pk.frequency(big_n), prec)?;
            peaks.insert(format!("{pk:?}"), json!({ "direct": p }));
        }
        json!({ "n": st.n(), "big_n": big_n, "support": st.len(), "label": st.label().to_string(), "peaks": peaks })
    };

    if let Some(t) = ancilla {
        let list: Vec<_> = [3u64, 4, 6].iter().map(|&d| ancilla_peak(&st, d, t, prec)).collect::<Result<_>>()?;
        out["ancilla"] = serde_json::to_value(list)?;
    }

    let spec_data = if full || shots.is_some() { Some(spectrum(&st, prec)?) } else { None };
    let stem = format!("peaks_{}_q{}_n{}", st.label(), st.q(), st.n());
    if full {
        let (_, spec) = spec_data.as_ref().unwrap();
        let dat = cfg.out_path(&format!("{stem}.dat"));
        RunConfig::ensure_parent(&dat)?;
        let mut s = format!("# QFT probabilities of {} on {} digits\n# k P(k)\n", st.label(), st.n());
        for (k, p) in spec.iter().enumerate() {
            let _ = writeln!(s, "{k} {p}");
        }
        write_atomic(&dat, s.as_bytes())?;
        let gp = cfg.out_path(&format!("{stem}.gp"));
        let script = format!(
            "set terminal pngcairo size 1000,600\nset output '{stem}.png'\nset xlabel 'k'\nset ylabel 'P(k)'\nset logscale y\nplot '{stem}.dat' using 1:2 with impulses notitle\n"
        );
        write_atomic(&gp, script.as_bytes())?;
        out["spectrum_file"] = json!(dat.display().to_string());
        out["plot_script"] = json!(gp.display().to_string());
    }
    if let Some(m) = shots {
        let (spec, _) = spec_data.as_ref().unwrap();
        let ks = [0, big_n / 2, (big_n + 1) / 3, big_n / 4, (big_n + 3) / 6];
        out["shots"] = serde_json::to_value(sample_shots(spec, m, cfg.seed, &ks)?)?;
    }

    match cfg.format_or(OutputFormat::Json) {
        OutputFormat::Json => {
            let text = emit_json(&out)?;
            write_atomic(&cfg.out_path(&format!("{stem}.json")), text.as_bytes())?;
            print!("{text}");
        }
        OutputFormat::Csv | OutputFormat::Dat => {
            let sep = if cfg.format == Some(OutputFormat::Csv) { "," } else { " " };
            println!("{}", ["peak", "formula", "direct"].join(sep));
            if let Some(map) = out["peaks"].as_object() {
                for (k, v) in map {
                    let f = v.get("formula").and_then(Value::as_str).unwrap_or("");
                    let d = v.get("direct").and_then(Value::as_str).unwrap_or("");
                    println!("{}", [k.as_str(), f, d].join(sep));
                }
            }
        }
    }
    Ok(())
}

pub fn entropy(cfg: &RunConfig, a: &StateArgs, m: Option<u32>, scan_all: bool, csv: Option<PathBuf>) -> Result<()> {
    let cuts: Vec<u32> = if scan_all { (1..a.n).collect() } else { vec![m.unwrap()] };
    if cuts.is_empty() || cuts.iter().any(|&c| c == 0 || c >= a.n) {
        return Err(domain(format!("cuts must satisfy 1 <= m < n = {}", a.n)));
    }
    let series = if a.family == Family::Random {
        let st = build_random_state(a.n, a.q, random_kind(a.kind), cfg.seed)?;
        let label = format!("random_{}_{}", if a.kind == Kind::Complex { "complex" } else { "positive" }, cfg.seed);
        let mut series = EntropySeries::new(label, a.q, Precision::DOUBLE);
        for &c in &cuts {
            series.insert(a.n, c, ExtReal::from_f64(dense_entropy(&st, c)?, Precision::DOUBLE))?;
        }
        series
    } else {
        let st = build_state(cfg, a)?;
        let jobs: Vec<(u32, u32)> = cuts.iter().map(|&c| (a.n, c)).collect();
        let states: BTreeMap<u32, NumberState> = [(a.n, st)].into_iter().collect();
        scan(&states, &jobs, cfg.precision)?
    };
    let path = csv.unwrap_or_else(|| cfg.out_path("entropy.csv"));
    RunConfig::ensure_parent(&path)?;
    let added = series.append_csv(&path)?;
    eprintln!("{added} new row(s) in {}", path.display());

    match cfg.format_or(OutputFormat::Dat) {
        OutputFormat::Json => print!("{}", emit_json(&serde_json::to_value(series.rows())?)?),
        OutputFormat::Csv => {
            println!("family,q,n,m,entropy_bits,prec_bits");
            for r in series.rows() {
                println!("{},{},{},{},{},{}", r.family, r.q, r.n, r.m, r.entropy_bits, r.prec_bits);
            }
        }
        OutputFormat::Dat => {
            for r in series.rows() {
                println!("{} {} {}", r.n, r.m, r.entropy_bits);
            }
        }
    }
    Ok(())
}

pub fn model(cfg: &RunConfig, n: u32, m: Option<u32>, fit: Option<Vec<u32>>, rule: RuleArg) -> Result<()> {
    let prec = cfg.precision;
    let rule = match rule {
        RuleArg::Asymptotic => KmRule::Asymptotic,
        RuleArg::Dimension => KmRule::Dimension,
    };
    let consts = appendix_constants_with(ntqs_core::numtheory::DEFAULT_CUTOFF, Tail::Truncated, prec)?;
    if let Some(range) = fit {
        let (lo, hi) = (range[0], range[1]);
        if lo % 2 != 0 || hi % 2 != 0 || lo >= hi {
            return Err(domain(format!("fit range needs even n with LO < HI, got {lo} {hi}")));
        }
        let fit = model_entropy_fit(lo / 2, hi / 2, &consts, rule, prec)?;
        match cfg.format_or(OutputFormat::Json) {
            OutputFormat::Json => print!("{}", emit_json(&serde_json::to_value(&fit)?)?),
            OutputFormat::Csv | OutputFormat::Dat => {
                let csv = cfg.format == Some(OutputFormat::Csv);
                println!("# slope {:.17} intercept {:.17}", fit.slope, fit.intercept);
                for (nn, s) in &fit.points {
                    if csv {
                        println!("{},{}", nn / 2, s.to_decimal());
                    } else {
                        println!("{} {}", nn / 2, s.to_decimal());
                    }
                }
            }
        }
        return Ok(());
    }
    let m = m.unwrap_or(n / 2);
    let sp = analytic_spectrum(n, m, &consts, rule, prec)?;
    let levels: Vec<Value> = sp
        .levels()
        .into_iter()
        .map(|(lambda, mult, ks)| {
            let energy = lambda.ln().neg();
            json!({ "lambda": lambda, "energy": energy, "multiplicity": mult, "k": ks })
        })
        .collect();
    let out = json!({
        "n": n,
        "m": m,
        "rule": rule,
        "k_m": sp.k_m,
        "phi_m": sp.phi_m,
        "trace": sp.trace(prec),
        "entropy_bits": sp.entropy(prec),
        "levels": levels,
    });
    print!("{}", emit_json(&out)?);
    Ok(())
}

pub fn constants(cfg: &RunConfig, cutoff: u64, tail: bool) -> Result<()> {
    let prec = cfg.precision;
    let c = appendix_constants_with(cutoff, if tail { Tail::Corrected } else { Tail::Truncated }, prec)?;
    let out = json!({
        "cutoff": cutoff,
        "tail": c.tail,
        "alpha": c.alpha,
        "beta": c.beta,
        "delta": c.delta,
        "twin_prime_constant": twin_prime_constant(cutoff, prec)?,
        "conjecture": conjecture_constants(prec),
    });
    print!("{}", emit_json(&out)?);
    Ok(())
}

pub fn fit(cfg: &RunConfig, csv: Option<PathBuf>, family: &str, q: u32, terms: usize) -> Result<()> {
    let path = csv.unwrap_or_else(|| cfg.out_path("entropy.csv"));
    if !path.exists() {
        return Err(domain(format!("no entropy table at {}", path.display())));
    }
    let series = EntropySeries::read_csv(&path, family, q, cfg.precision)?;
    let f = fourier_fit(&series, terms, |_| true)?;
    match cfg.format_or(OutputFormat::Json) {
        OutputFormat::Json => print!("{}", emit_json(&serde_json::to_value(&f)?)?),
        OutputFormat::Csv => {
            println!("k,a,b");
            for k in 0..f.terms {
                println!("{k},{:e},{:e}", f.a[k], f.b[k]);
            }
        }
        OutputFormat::Dat => {
            for k in 0..f.terms {
                println!("{k} {:e} {:e}", f.a[k], f.b[k]);
            }
        }
    }
    Ok(())
}

pub fn table15(cfg: &RunConfig) -> Result<()> {
    let t = eigenvalue_location_table(15)?;
    match cfg.format_or(OutputFormat::Dat) {
        OutputFormat::Json => {
            let rows: Vec<Value> = t.iter().map(|(k, row)| json!({ "k": k, "row": row })).collect();
            print!("{}", emit_json(&json!(rows))?);
        }
        OutputFormat::Csv => {
            println!("k,{}", (1..=15).map(|a| a.to_string()).collect::<Vec<_>>().join(","));
            for (k, row) in &t {
                println!("{k},{}", row.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
            }
        }
        OutputFormat::Dat => {
            println!("k\\a {}", (1..=15).map(|a| format!("{a:>2}")).collect::<Vec<_>>().join(" "));
            for (k, row) in &t {
                println!("{k:>3} {}", row.iter().map(|x| format!("{x:>2}")).collect::<Vec<_>>().join(" "));
            }
        }
    }
    Ok(())
}
