//! Real-number backends.
//!
//! Every model computation is generic over [`Real`]. Two backends exist:
//! plain IEEE `f64` ("standard") and MPFR floats through `rug` ("extended"),
//! whose mantissa width is a process-wide setting and whose exponent range is
//! MPFR's (about ±2^62 on 64-bit targets), so probabilities far below 10^-308
//! stay representable.

use std::fmt;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;
use std::sync::atomic::{AtomicU32, Ordering};

use rug::Float;

use crate::error::{Error, Result};

/// Default mantissa width of the extended backend, in bits.
pub const DEFAULT_EXTENDED_BITS: u32 = 128;

static EXTENDED_BITS: AtomicU32 = AtomicU32::new(DEFAULT_EXTENDED_BITS);

/// Sets the mantissa width used by every extended-precision value created afterwards.
pub fn set_extended_bits(bits: u32) {
    EXTENDED_BITS.store(bits.max(64), Ordering::SeqCst);
}

/// Current mantissa width of the extended backend.
pub fn extended_bits() -> u32 {
    EXTENDED_BITS.load(Ordering::SeqCst)
}

/// Backend tag carried by pmfs and reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Precision {
    Standard,
    Extended { bits: u32 },
}

impl Precision {
    /// Skip floor for syndrome weights whose probability is negligible.
    pub fn default_floor(&self) -> f64 {
        match self {
            Precision::Standard => 1e-15,
            Precision::Extended { .. } => 1e-300,
        }
    }

    /// Tolerance on the total mass of a normalized pmf.
    pub fn normalization_tol(&self) -> f64 {
        match self {
            Precision::Standard => 1e-9,
            Precision::Extended { .. } => 1e-30,
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Precision::Standard => write!(f, "standard"),
            Precision::Extended { bits } => write!(f, "extended:{bits}"),
        }
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "standard" {
            return Ok(Precision::Standard);
        }
        if s == "extended" {
            return Ok(Precision::Extended { bits: DEFAULT_EXTENDED_BITS });
        }
        if let Some(bits) = s.strip_prefix("extended:") {
            let bits: u32 = bits
                .parse()
                .map_err(|_| Error::param(format!("bad precision width `{bits}`")))?;
            if bits < 100 {
                return Err(Error::param("extended precision needs at least 100 mantissa bits"));
            }
            return Ok(Precision::Extended { bits });
        }
        Err(Error::param(format!(
            "unknown precision `{s}` (expected standard | extended[:bits])"
        )))
    }
}

/// Arithmetic needed by the models. `0^0` evaluates to 1 in [`Real::powu`].
pub trait Real:
    Clone
    + Send
    + Sync
    + fmt::Debug
    + PartialOrd
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + for<'a> Add<&'a Self, Output = Self>
    + for<'a> Sub<&'a Self, Output = Self>
    + for<'a> Mul<&'a Self, Output = Self>
    + for<'a> Div<&'a Self, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + for<'a> AddAssign<&'a Self>
    + for<'a> SubAssign<&'a Self>
    + for<'a> MulAssign<&'a Self>
    + for<'a> DivAssign<&'a Self>
{
    fn precision() -> Precision;
    fn from_f64(x: f64) -> Self;
    fn from_u64(x: u64) -> Self;
    fn from_u128(x: u128) -> Self;
    fn to_f64(&self) -> f64;
    fn ln(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln_1p(&self) -> Self;
    fn exp_m1(&self) -> Self;
    fn powu(&self, k: u64) -> Self;
    /// `ln(n choose k)`; callers guarantee `k <= n`.
    fn ln_choose(n: u64, k: u64) -> Self;
    /// Full-precision decimal rendering used by CSV exports.
    fn to_decimal(&self) -> String;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }
    fn is_zero(&self) -> bool {
        self.to_f64() == 0.0 && *self == Self::zero()
    }
    /// Base-2 logarithm as a double; finite even where the value underflows `f64`.
    fn log2(&self) -> f64 {
        if *self <= Self::zero() {
            return f64::NEG_INFINITY;
        }
        self.ln().to_f64() / std::f64::consts::LN_2
    }
    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
    /// Clamp into `[0, 1]`, absorbing round-off outside the unit interval.
    fn clamp_unit(self) -> Self {
        if self < Self::zero() {
            Self::zero()
        } else if self > Self::one() {
            Self::one()
        } else {
            self
        }
    }
}

/// Exact binomial coefficient when it fits in 128 bits.
pub fn choose_exact(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        // c * (n - i) / (i + 1) stays integral at each step
        let num = c.checked_mul((n - i) as u128)?;
        c = num / (i as u128 + 1);
    }
    Some(c)
}

impl Real for f64 {
    fn precision() -> Precision {
        Precision::Standard
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn from_u64(x: u64) -> Self {
        x as f64
    }
    fn from_u128(x: u128) -> Self {
        x as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln_1p(&self) -> Self {
        f64::ln_1p(*self)
    }
    fn exp_m1(&self) -> Self {
        f64::exp_m1(*self)
    }
    fn powu(&self, k: u64) -> Self {
        if k == 0 {
            1.0
        } else if k <= i32::MAX as u64 {
            self.powi(k as i32)
        } else {
            self.powf(k as f64)
        }
    }
    fn ln_choose(n: u64, k: u64) -> Self {
        let k = k.min(n - k);
        if let Some(c) = choose_exact(n, k) {
            return (c as f64).ln();
        }
        if k <= 256 {
            let mut s = 0.0;
            for i in 0..k {
                s += ((n - i) as f64 / (i + 1) as f64).ln();
            }
            return s;
        }
        libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
    }
    fn to_decimal(&self) -> String {
        format!("{:.17e}", self)
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn log2(&self) -> f64 {
        f64::log2(*self)
    }
}

fn fl(x: impl Into<FloatSrc>) -> Float {
    let bits = extended_bits();
    match x.into() {
        FloatSrc::F(v) => Float::with_val(bits, v),
        FloatSrc::U(v) => Float::with_val(bits, v),
        FloatSrc::W(v) => Float::with_val(bits, v),
    }
}

enum FloatSrc {
    F(f64),
    U(u64),
    W(u128),
}

impl From<f64> for FloatSrc {
    fn from(v: f64) -> Self {
        FloatSrc::F(v)
    }
}
impl From<u64> for FloatSrc {
    fn from(v: u64) -> Self {
        FloatSrc::U(v)
    }
}
impl From<u128> for FloatSrc {
    fn from(v: u128) -> Self {
        FloatSrc::W(v)
    }
}

impl Real for Float {
    fn precision() -> Precision {
        Precision::Extended { bits: extended_bits() }
    }
    fn from_f64(x: f64) -> Self {
        fl(x)
    }
    fn from_u64(x: u64) -> Self {
        fl(x)
    }
    fn from_u128(x: u128) -> Self {
        fl(x)
    }
    fn to_f64(&self) -> f64 {
        Float::to_f64(self)
    }
    fn ln(&self) -> Self {
        self.clone().ln()
    }
    fn exp(&self) -> Self {
        self.clone().exp()
    }
    fn ln_1p(&self) -> Self {
        self.clone().ln_1p()
    }
    fn exp_m1(&self) -> Self {
        self.clone().exp_m1()
    }
    fn powu(&self, k: u64) -> Self {
        if k == 0 {
            return fl(1.0);
        }
        if k <= u32::MAX as u64 {
            Float::with_val(self.prec(), rug::ops::Pow::pow(self, k as u32))
        } else {
            (self.clone().ln() * fl(k)).exp()
        }
    }
    fn ln_choose(n: u64, k: u64) -> Self {
        let k = k.min(n - k);
        if let Some(c) = choose_exact(n, k) {
            return fl(c).ln();
        }
        // guard bits absorb the cancellation between the three log-gamma terms
        let bits = extended_bits() + 64;
        let g = |x: u64| Float::with_val(bits, x + 1).ln_gamma();
        let r = g(n) - g(k) - g(n - k);
        Float::with_val(extended_bits(), r)
    }
    fn to_decimal(&self) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let digits = (self.prec() as f64 * std::f64::consts::LOG10_2).ceil() as usize + 1;
        self.to_string_radix(10, Some(digits))
    }
    fn is_zero(&self) -> bool {
        Float::is_zero(self)
    }
}

/// `C(n, k)` in the requested backend (exact when it fits in 128 bits).
pub fn choose<R: Real>(n: u64, k: u64) -> R {
    if k > n {
        return R::zero();
    }
    match choose_exact(n, k) {
        Some(c) => R::from_u128(c),
        None => R::ln_choose(n, k).exp(),
    }
}
