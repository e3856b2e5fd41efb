//! Gate-level full adders and the carry-save array multiplier built from them.
//!
//! Every adder cell of the array is one full adder, either the exact cell or
//! the AMA5 approximate cell (`Sum = B`, `Cout = A`, carry-in unused). Rows of
//! the array are evaluated bit-sliced: all cells in a row read the same
//! pre-update sum and carry vectors, so one machine word holds one signal
//! wire for every cell of the row, and the logic equations are applied to all
//! lanes at once. The final vector-merge row is a true ripple chain and is
//! evaluated cell by cell.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Widest operand accepted by [`array_multiply`]; the product needs `2 * W` bits.
pub const MAX_MULTIPLY_WIDTH: u8 = 32;

/// A single logic level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Bit(bool);

impl Bit {
    pub const ZERO: Bit = Bit(false);
    pub const ONE: Bit = Bit(true);

    pub const fn new(value: bool) -> Self {
        Bit(value)
    }

    pub const fn is_set(self) -> bool {
        self.0
    }

    pub const fn as_u64(self) -> u64 {
        self.0 as u64
    }
}

impl From<bool> for Bit {
    fn from(value: bool) -> Self {
        Bit(value)
    }
}

impl fmt::Display for Bit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u64())
    }
}

/// Fixed-width unsigned bit vector (1 to 64 bits).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Word {
    width: u8,
    bits: u64,
}

impl Word {
    /// Builds a word, rejecting widths outside `1..=64` and values that do not fit.
    pub fn new(width: u8, bits: u64) -> Result<Self> {
        if width == 0 || width > 64 {
            return Err(Error::InvalidWidth(width));
        }
        if bits & !low_mask(width) != 0 {
            return Err(Error::ValueTooWide { width, value: bits });
        }
        Ok(Word { width, bits })
    }

    /// Builds a word keeping only the low `width` bits of `bits`.
    pub fn truncating(width: u8, bits: u64) -> Result<Self> {
        if width == 0 || width > 64 {
            return Err(Error::InvalidWidth(width));
        }
        Ok(Word {
            width,
            bits: bits & low_mask(width),
        })
    }

    pub const fn width(self) -> u8 {
        self.width
    }

    pub const fn value(self) -> u64 {
        self.bits
    }

    /// Bit `k` (0 = least significant). Positions at or above the width read as zero.
    pub fn bit(self, k: u8) -> Bit {
        Bit(k < self.width && (self.bits >> k) & 1 == 1)
    }
}

#[inline]
const fn low_mask(width: u8) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// Exact full adder: `sum = a ^ b ^ cin`, `cout = majority(a, b, cin)`.
pub fn full_add_exact(a: Bit, b: Bit, cin: Bit) -> (Bit, Bit) {
    let (a, b, c) = (a.0, b.0, cin.0);
    (Bit(a ^ b ^ c), Bit((a & b) | (a & c) | (b & c)))
}

/// AMA5 approximate mirror adder: two buffers, `sum = b`, `cout = a`.
pub fn full_add_ama5(a: Bit, b: Bit, _cin: Bit) -> (Bit, Bit) {
    (b, a)
}

/// Full-adder cell type used throughout a multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum AdderKind {
    #[default]
    Exact,
    Ama5,
}

impl AdderKind {
    /// Evaluates one cell.
    pub fn add(self, a: Bit, b: Bit, cin: Bit) -> (Bit, Bit) {
        match self {
            AdderKind::Exact => full_add_exact(a, b, cin),
            AdderKind::Ama5 => full_add_ama5(a, b, cin),
        }
    }

    /// Evaluates 64 independent cells at once, lane `k` of each word being
    /// the corresponding port of cell `k`.
    #[inline]
    pub fn add_lanes(self, a: u64, b: u64, cin: u64) -> (u64, u64) {
        match self {
            AdderKind::Exact => (a ^ b ^ cin, (a & b) | (a & cin) | (b & cin)),
            AdderKind::Ama5 => (b, a),
        }
    }
}

impl fmt::Display for AdderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdderKind::Exact => "exact",
            AdderKind::Ama5 => "ama5",
        })
    }
}

/// One of the three signals entering a carry-save cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellSignal {
    /// Partial-product bit of the row being accumulated.
    PartialProduct,
    /// Running sum-vector bit.
    Sum,
    /// Running carry-vector bit.
    Carry,
}

impl CellSignal {
    fn token(self) -> &'static str {
        match self {
            CellSignal::PartialProduct => "pp",
            CellSignal::Sum => "sum",
            CellSignal::Carry => "carry",
        }
    }
}

impl FromStr for CellSignal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "pp" => Ok(CellSignal::PartialProduct),
            "sum" => Ok(CellSignal::Sum),
            "carry" => Ok(CellSignal::Carry),
            other => Err(Error::InvalidConfig(format!(
                "unknown cell signal `{other}` (expected pp, sum or carry)"
            ))),
        }
    }
}

/// Assignment of the three cell signals to the adder ports `(A, B, Cin)`.
///
/// Always a bijection. The default wires the partial product to `A`, the
/// running sum to `B` and the running carry to `Cin`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellRoles {
    a: CellSignal,
    b: CellSignal,
    cin: CellSignal,
}

impl Default for CellRoles {
    fn default() -> Self {
        CellRoles::DEFAULT
    }
}

impl CellRoles {
    /// `pp -> A`, `sum -> B`, `carry -> Cin`.
    pub const DEFAULT: CellRoles = CellRoles {
        a: CellSignal::PartialProduct,
        b: CellSignal::Sum,
        cin: CellSignal::Carry,
    };

    pub fn new(a: CellSignal, b: CellSignal, cin: CellSignal) -> Result<Self> {
        if a == b || a == cin || b == cin {
            return Err(Error::InvalidConfig(format!(
                "cell roles must be a permutation of pp,sum,carry; got {},{},{}",
                a.token(),
                b.token(),
                cin.token()
            )));
        }
        Ok(CellRoles { a, b, cin })
    }

    /// All six port assignments.
    pub fn all() -> [CellRoles; 6] {
        use CellSignal::*;
        [
            CellRoles {
                a: PartialProduct,
                b: Sum,
                cin: Carry,
            },
            CellRoles {
                a: PartialProduct,
                b: Carry,
                cin: Sum,
            },
            CellRoles {
                a: Sum,
                b: PartialProduct,
                cin: Carry,
            },
            CellRoles {
                a: Sum,
                b: Carry,
                cin: PartialProduct,
            },
            CellRoles {
                a: Carry,
                b: PartialProduct,
                cin: Sum,
            },
            CellRoles {
                a: Carry,
                b: Sum,
                cin: PartialProduct,
            },
        ]
    }

    pub fn a(self) -> CellSignal {
        self.a
    }

    pub fn b(self) -> CellSignal {
        self.b
    }

    pub fn cin(self) -> CellSignal {
        self.cin
    }

    /// Routes `(partial product, sum, carry)` values onto `(A, B, Cin)`.
    #[inline]
    pub fn route<T: Copy>(self, pp: T, sum: T, carry: T) -> (T, T, T) {
        let pick = |s: CellSignal| match s {
            CellSignal::PartialProduct => pp,
            CellSignal::Sum => sum,
            CellSignal::Carry => carry,
        };
        (pick(self.a), pick(self.b), pick(self.cin))
    }
}

impl fmt::Display for CellRoles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.a.token(), self.b.token(), self.cin.token())
    }
}

impl FromStr for CellRoles {
    type Err = Error;

    /// Parses `"pp,sum,carry"`-style lists naming the signals on `A,B,Cin`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::InvalidConfig(format!(
                "cell roles need three comma-separated signals, got `{s}`"
            )));
        }
        CellRoles::new(parts[0].parse()?, parts[1].parse()?, parts[2].parse()?)
    }
}

/// Ripple-carry adder built from `x.width()` cells of the given kind.
///
/// Cell `k` sees `A = x_k`, `B = y_k` and the carry of cell `k - 1` (zero for
/// cell 0). The sum keeps the operand width; the last cell's carry-out is
/// returned separately.
pub fn ripple_add(x: Word, y: Word, adder: AdderKind) -> Result<(Word, Bit)> {
    if x.width != y.width {
        return Err(Error::WidthMismatch {
            left: x.width,
            right: y.width,
        });
    }
    let (sum, carry) = ripple_lanes(x.bits, y.bits, x.width, adder);
    Ok((
        Word {
            width: x.width,
            bits: sum,
        },
        Bit(carry == 1),
    ))
}

#[inline]
fn ripple_lanes(x: u64, y: u64, width: u8, adder: AdderKind) -> (u64, u64) {
    match adder {
        // no cell reads its carry-in, so every cell can be evaluated at once
        AdderKind::Ama5 => (y, (x >> (width - 1)) & 1),
        AdderKind::Exact => {
            let mut carry = 0u64;
            let mut sum = 0u64;
            for k in 0..width {
                let (s, c) = adder.add_lanes((x >> k) & 1, (y >> k) & 1, carry);
                sum |= s << k;
                carry = c;
            }
            (sum, carry)
        }
    }
}

/// Carry-save array multiplier over `W`-bit operands, returning a `2W`-bit word.
///
/// Partial rows `R_i = (a if b_i else 0) << i` are folded into a sum vector
/// `S` (initially `R_0`) and carry vector `C` (initially zero). For each later
/// row, cell `k` takes `{R_i[k], S[k], C[k]}` routed through `roles`; its sum
/// becomes the new `S[k]` and its carry the new `C[k + 1]`. A ripple row of
/// the same adder kind then merges `A = S`, `B = C`, dropping the final carry.
pub fn array_multiply(a: Word, b: Word, adder: AdderKind, roles: CellRoles) -> Result<Word> {
    if a.width != b.width {
        return Err(Error::WidthMismatch {
            left: a.width,
            right: b.width,
        });
    }
    if a.width > MAX_MULTIPLY_WIDTH {
        return Err(Error::InvalidWidth(a.width));
    }
    let product = multiply_lanes(a.bits, b.bits, a.width, adder, roles);
    Ok(Word {
        width: 2 * a.width,
        bits: product,
    })
}

/// Unchecked core of [`array_multiply`]; operands must already fit in `width <= 32` bits.
#[inline]
pub(crate) fn multiply_lanes(a: u64, b: u64, width: u8, adder: AdderKind, roles: CellRoles) -> u64 {
    let mask = low_mask(2 * width);
    let row = |i: u8| if (b >> i) & 1 == 1 { a << i } else { 0 };
    let mut sum = row(0);
    let mut carry = 0u64;
    for i in 1..width {
        let (pa, pb, pc) = roles.route(row(i), sum, carry);
        let (s, c) = adder.add_lanes(pa, pb, pc);
        sum = s & mask;
        carry = (c << 1) & mask;
    }
    ripple_lanes(sum, carry, 2 * width, adder).0
}
