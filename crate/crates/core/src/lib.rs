//! Number-theoretical quantum states and their spectra.
//!
//! Builds prime-like states as exact sparse vectors, evaluates their Fourier
//! peaks, reduced density matrices and entanglement entropies, and the
//! Hardy-Littlewood analytic models that approximate them. All non-integer
//! values are carried by [`Real`], either `f64` or the MPFR-backed [`ExtReal`].

pub mod analysis;
pub mod eigh;
pub mod entangle;
pub mod error;
pub mod io;
pub mod numtheory;
pub mod real;
pub mod spectral;
pub mod states;

pub use error::{Error, Result};
pub use numtheory::{HLConstants, PrimeTable};
pub use states::{Label, NumberState};
pub use real::{CompensatedSum, Complex, ExtReal, Precision, Real};
