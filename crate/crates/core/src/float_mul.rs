//! Single-precision multiplier datapath with a pluggable mantissa multiplier,
//! a Bfloat16 multiply path and the native reference multiply.
//!
//! The datapath flushes subnormal operands and results to signed zero and
//! rounds to nearest, ties to even. Exponent handling is always exact; only
//! the 24x24 significand product goes through the emulated array.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::approx::{multiply_lanes, AdderKind, CellRoles};
use crate::error::{Error, Result};

/// Canonical quiet NaN produced by every emulated path.
pub const QUIET_NAN_BITS: u32 = 0x7fc0_0000;

const FRACTION_BITS: u32 = 23;
const FRACTION_MASK: u32 = (1 << FRACTION_BITS) - 1;
const EXPONENT_BIAS: i32 = 127;
const SIGNIFICAND_WIDTH: u8 = 24;

/// Sign, biased exponent and fraction fields of a binary32 value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FloatParts {
    sign: bool,
    biased_exponent: u8,
    fraction: u32,
}

impl FloatParts {
    pub fn new(sign: bool, biased_exponent: u8, fraction: u32) -> Result<Self> {
        if fraction > FRACTION_MASK {
            return Err(Error::InvalidConfig(format!("fraction {fraction:#x} exceeds 23 bits")));
        }
        Ok(FloatParts {
            sign,
            biased_exponent,
            fraction,
        })
    }

    pub fn sign(self) -> bool {
        self.sign
    }

    pub fn biased_exponent(self) -> u8 {
        self.biased_exponent
    }

    pub fn fraction(self) -> u32 {
        self.fraction
    }

    pub fn is_nan(self) -> bool {
        self.biased_exponent == 0xff && self.fraction != 0
    }

    pub fn is_infinite(self) -> bool {
        self.biased_exponent == 0xff && self.fraction == 0
    }

    /// Zero or subnormal: both read as zero on the flush-to-zero datapath.
    pub fn is_flushed_zero(self) -> bool {
        self.biased_exponent == 0
    }

    /// Significand with the hidden bit prepended (normal numbers only).
    pub fn significand(self) -> u32 {
        (1 << FRACTION_BITS) | self.fraction
    }
}

pub fn decompose(x: f32) -> FloatParts {
    let bits = x.to_bits();
    FloatParts {
        sign: bits >> 31 == 1,
        biased_exponent: (bits >> FRACTION_BITS) as u8,
        fraction: bits & FRACTION_MASK,
    }
}

pub fn compose(p: FloatParts) -> f32 {
    f32::from_bits(((p.sign as u32) << 31) | ((p.biased_exponent as u32) << FRACTION_BITS) | p.fraction)
}

#[inline]
fn signed_zero(sign: bool) -> f32 {
    if sign {
        -0.0
    } else {
        0.0
    }
}

#[inline]
fn signed_infinity(sign: bool) -> f32 {
    if sign {
        f32::NEG_INFINITY
    } else {
        f32::INFINITY
    }
}

/// Mantissa-multiplier configuration of the floating-point datapath.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct FpmConfig {
    pub adder: AdderKind,
    pub roles: CellRoles,
}

impl FpmConfig {
    pub fn exact() -> Self {
        FpmConfig {
            adder: AdderKind::Exact,
            roles: CellRoles::default(),
        }
    }

    pub fn ama5(roles: CellRoles) -> Self {
        FpmConfig {
            adder: AdderKind::Ama5,
            roles,
        }
    }
}

/// Multiplies through the emulated datapath.
pub fn fpm_multiply(x: f32, y: f32, cfg: FpmConfig) -> f32 {
    let (px, py) = (decompose(x), decompose(y));
    let sign = px.sign ^ py.sign;

    if px.is_nan() || py.is_nan() {
        return f32::from_bits(QUIET_NAN_BITS);
    }
    if px.is_infinite() || py.is_infinite() {
        if px.is_flushed_zero() || py.is_flushed_zero() {
            return f32::from_bits(QUIET_NAN_BITS);
        }
        return signed_infinity(sign);
    }
    if px.is_flushed_zero() || py.is_flushed_zero() {
        return signed_zero(sign);
    }

    let product = multiply_lanes(
        px.significand() as u64,
        py.significand() as u64,
        SIGNIFICAND_WIDTH,
        cfg.adder,
        cfg.roles,
    );

    let mut exponent = px.biased_exponent as i32 + py.biased_exponent as i32 - EXPONENT_BIAS;
    // product bit 47 set: fraction is bits 46..24, else bits 45..23
    let shift = if product >> 47 & 1 == 1 {
        exponent += 1;
        24
    } else {
        23
    };
    if exponent < 0 {
        return signed_zero(sign);
    }
    // normalized significand, hidden bit at position shift + 23
    let significand = (product & ((1u64 << (shift + 23)) - 1)) | (1u64 << (shift + 23));
    // at exponent 0 the result can only survive by rounding up to the
    // smallest normal, so round on the subnormal grid (one bit coarser)
    let drop = if exponent == 0 { shift + 1 } else { shift };
    let mut kept = significand >> drop;
    let discarded = significand & ((1u64 << drop) - 1);
    let half = 1u64 << (drop - 1);
    if discarded > half || (discarded == half && kept & 1 == 1) {
        kept += 1;
    }
    if exponent == 0 {
        return if kept >> FRACTION_BITS == 1 {
            compose(FloatParts {
                sign,
                biased_exponent: 1,
                fraction: 0,
            })
        } else {
            signed_zero(sign)
        };
    }
    if kept >> (FRACTION_BITS + 1) == 1 {
        kept >>= 1;
        exponent += 1;
    }
    if exponent >= 0xff {
        return signed_infinity(sign);
    }
    let fraction = kept as u32 & FRACTION_MASK;
    compose(FloatParts {
        sign,
        biased_exponent: exponent as u8,
        fraction,
    })
}

/// A binary32 value whose low 16 bits are zero, i.e. an exact Bfloat16.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Bf16Value(f32);

impl Bf16Value {
    pub fn get(self) -> f32 {
        self.0
    }

    pub fn to_bits(self) -> u32 {
        self.0.to_bits()
    }
}

/// Truncates the low 16 fraction bits. NaN stays NaN (canonical).
pub fn bf16_truncate(x: f32) -> Bf16Value {
    if x.is_nan() {
        return Bf16Value(f32::from_bits(QUIET_NAN_BITS));
    }
    Bf16Value(f32::from_bits(x.to_bits() & 0xffff_0000))
}

/// Rounds a binary32 value to the nearest Bfloat16, ties to even.
pub fn bf16_round(x: f32) -> Bf16Value {
    if x.is_nan() {
        return Bf16Value(f32::from_bits(QUIET_NAN_BITS));
    }
    let bits = x.to_bits();
    let lsb = (bits >> 16) & 1;
    let rounded = bits.wrapping_add(0x7fff + lsb) & 0xffff_0000;
    Bf16Value(f32::from_bits(rounded))
}

/// Bfloat16 multiply: truncate both operands, multiply exactly, round the
/// product to Bfloat16.
pub fn bf16_multiply(x: f32, y: f32) -> f32 {
    let (a, b) = (bf16_truncate(x).get(), bf16_truncate(y).get());
    // 8-bit significands: the f64 product is exact, and so is its binary32
    // conversion unless the product leaves the normal range
    let exact = (a as f64 * b as f64) as f32;
    bf16_round(exact).get()
}

#[inline]
pub fn reference_multiply(x: f32, y: f32) -> f32 {
    x * y
}

/// Scalar multiplier backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Backend {
    /// Platform IEEE multiply.
    #[default]
    Native,
    /// Emulated datapath with exact full adders.
    ExactFpm,
    /// Emulated datapath with AMA5 full adders.
    AxFpm(CellRoles),
    Bfloat16,
}

impl Backend {
    pub fn ax_fpm() -> Self {
        Backend::AxFpm(CellRoles::default())
    }

    #[inline]
    pub fn multiply(self, x: f32, y: f32) -> f32 {
        match self {
            Backend::Native => reference_multiply(x, y),
            Backend::ExactFpm => fpm_multiply(x, y, FpmConfig::exact()),
            Backend::AxFpm(roles) => fpm_multiply(x, y, FpmConfig::ama5(roles)),
            Backend::Bfloat16 => bf16_multiply(x, y),
        }
    }

    /// Short identifier; AMA5 with non-default roles carries them as a suffix.
    pub fn name(self) -> String {
        match self {
            Backend::Native => "exact".into(),
            Backend::ExactFpm => "exact-fpm".into(),
            Backend::AxFpm(roles) if roles == CellRoles::default() => "ama5".into(),
            Backend::AxFpm(roles) => format!("ama5:{roles}"),
            Backend::Bfloat16 => "bf16".into(),
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Backend {
    type Err = Error;

    /// Accepts `exact`, `exact-fpm`, `bf16`, `ama5` and `ama5:<a>,<b>,<cin>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" | "native" => Ok(Backend::Native),
            "exact-fpm" => Ok(Backend::ExactFpm),
            "bf16" | "bfloat16" => Ok(Backend::Bfloat16),
            "ama5" => Ok(Backend::ax_fpm()),
            other => match other.strip_prefix("ama5:") {
                Some(roles) => Ok(Backend::AxFpm(roles.parse()?)),
                None => Err(Error::InvalidConfig(format!("unknown backend `{other}`"))),
            },
        }
    }
}

impl From<Backend> for String {
    fn from(b: Backend) -> String {
        b.name()
    }
}

impl TryFrom<String> for Backend {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parts(sign: bool, e: u8, f: u32) -> FloatParts {
        FloatParts::new(sign, e, f).unwrap()
    }

    #[test]
    fn decompose_examples() {
        assert_eq!(decompose(1.0), parts(false, 127, 0));
        assert_eq!(decompose(-0.75), parts(true, 126, 0x40_0000));
        assert_eq!(decompose(0.0), parts(false, 0, 0));
    }

    #[test]
    fn compose_examples() {
        assert_eq!(compose(parts(false, 127, 0)), 1.0);
        assert_eq!(compose(parts(true, 128, 0)), -2.0);
        assert_eq!(compose(parts(false, 255, 0)), f32::INFINITY);
        assert!(FloatParts::new(false, 1, 1 << 23).is_err());
    }

    #[test]
    fn exact_fpm_examples() {
        let cfg = FpmConfig::exact();
        assert_eq!(fpm_multiply(0.5, 0.5, cfg), 0.25);
        for x in [1.0f32, -3.25, 1.0e-30, 7.0e37, std::f32::consts::PI] {
            assert_eq!(fpm_multiply(x, 1.0, cfg).to_bits(), x.to_bits());
        }
    }

    #[test]
    fn ax_fpm_examples() {
        let cfg = FpmConfig::ama5(CellRoles::default());
        assert_eq!(fpm_multiply(0.75, 0.75, cfg), 0.75);
        assert_eq!(fpm_multiply(0.0, 0.9, cfg), 0.0);
    }

    #[test]
    fn special_operands() {
        for cfg in [FpmConfig::exact(), FpmConfig::ama5(CellRoles::default())] {
            let nan = fpm_multiply(f32::NAN, 2.0, cfg);
            assert_eq!(nan.to_bits(), QUIET_NAN_BITS);
            assert_eq!(fpm_multiply(f32::INFINITY, 0.0, cfg).to_bits(), QUIET_NAN_BITS);
            assert_eq!(fpm_multiply(f32::INFINITY, 1.0e-40, cfg).to_bits(), QUIET_NAN_BITS);
            assert_eq!(fpm_multiply(f32::INFINITY, -2.0, cfg), f32::NEG_INFINITY);
            assert_eq!(fpm_multiply(-0.0, 2.0, cfg).to_bits(), (-0.0f32).to_bits());
            // subnormal operand flushes
            assert_eq!(fpm_multiply(1.0e-40, 1.0e10, cfg), 0.0);
            // overflow and underflow
            assert_eq!(fpm_multiply(3.0e38, -3.0e38, cfg), f32::NEG_INFINITY);
            assert_eq!(fpm_multiply(1.0e-30, 1.0e-30, cfg), 0.0);
        }
    }

    #[test]
    fn exact_fpm_rounds_into_min_normal() {
        // (1 - 2^-24) * 2^-126 sits on the tie between the largest subnormal
        // and the smallest normal; ties-to-even picks the normal
        let x = f32::from_bits(0x3f7f_ffff);
        let native = x * f32::MIN_POSITIVE;
        assert_eq!(native, f32::MIN_POSITIVE);
        assert_eq!(fpm_multiply(x, f32::MIN_POSITIVE, FpmConfig::exact()), native);
        assert_eq!(fpm_multiply(-x, f32::MIN_POSITIVE, FpmConfig::exact()), -native);
        // one ulp lower lands on a subnormal, which flushes
        let below = f32::from_bits(0x3f7f_fffe);
        assert!(!(below * f32::MIN_POSITIVE).is_normal());
        assert_eq!(fpm_multiply(below, f32::MIN_POSITIVE, FpmConfig::exact()), 0.0);
    }

    #[test]
    fn bf16_truncate_examples() {
        assert_eq!(bf16_truncate(1.0).get(), 1.0);
        assert_eq!(0.1f32.to_bits(), 0x3dcc_cccd);
        assert_eq!(bf16_truncate(0.1).to_bits(), 0x3dcc_0000);
        assert_eq!(bf16_truncate(0.1).get(), 0.099_609_375);
        assert_eq!(bf16_truncate(-2.5).get(), -2.5);
        assert!(bf16_truncate(f32::from_bits(0x7f80_0001)).get().is_nan());
    }

    #[test]
    fn bf16_multiply_examples() {
        assert_eq!(bf16_multiply(1.0, 1.0), 1.0);
        for x in [1.5f32, -0.375, 96.0, 0.0078125] {
            assert_eq!(bf16_multiply(0.5, x), x / 2.0);
        }
        // 0.099609375^2 = 1.27001953125 * 2^-7; fraction 34.5625/128 rounds up to 35/128
        assert_eq!(bf16_multiply(0.1, 0.1).to_bits(), 0x3c23_0000);
    }

    #[test]
    fn reference_examples() {
        assert_eq!(reference_multiply(0.5, 0.5), 0.25);
        assert_eq!(reference_multiply(1.5, 2.0), 3.0);
        let third = 1.0f32 / 3.0;
        assert_eq!(reference_multiply(3.0, third), 3.0 * third);
    }

    #[test]
    fn backend_names_round_trip() {
        let alt = CellRoles::all()[3];
        for b in [
            Backend::Native,
            Backend::ExactFpm,
            Backend::ax_fpm(),
            Backend::AxFpm(alt),
            Backend::Bfloat16,
        ] {
            assert_eq!(b.name().parse::<Backend>().unwrap(), b);
        }
        assert!("fast".parse::<Backend>().is_err());
    }
}
