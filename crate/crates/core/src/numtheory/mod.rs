//! Exact integer arithmetic: sieving, prime counting, multiplicative
//! functions, Ramanujan sums and Hardy-Littlewood constants.

mod arith;
mod hl;
mod li;
mod sieve;
mod sums;

pub use arith::{factorize, gcd, is_squarefree, mobius, ramanujan_sum, totient, ArithTable};
pub use hl::{hl_constant_series, twin_prime_constant, HLConstants, DEFAULT_CUTOFF};
pub use li::{ell, li, li2};
pub use sieve::{cache_path, PrimeTable, MAX_LIMIT};
pub use sums::{a_sum, appendix_constants, appendix_constants_with, b_sum, AppendixConstants, Tail};
