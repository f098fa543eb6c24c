//! The precision lattice `Half < Single < Double` and every transfer between
//! its levels.
//!
//! Element types implement [`Real`]; `f16` arithmetic is emulated by computing
//! each operation in binary32 and rounding once to binary16. Binary32 carries
//! at least `2 * 11 + 2` significand bits, so that second rounding never
//! differs from a single correctly rounded binary16 operation.

use std::fmt;
use std::str::FromStr;

use half::f16;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mparray::{AnyMatrix, AnyVector, PMatrix, PVector};

/// One of the three supported IEEE binary formats, ordered by precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Half,
    Single,
    Double,
}

impl Precision {
    pub const ALL: [Precision; 3] = [Precision::Half, Precision::Single, Precision::Double];

    /// Significand width in bits, counting the implicit leading bit.
    pub const fn significand_bits(self) -> i32 {
        match self {
            Precision::Half => 11,
            Precision::Single => 24,
            Precision::Double => 53,
        }
    }

    /// Unit roundoff `2^-p`, half the spacing of the format just above 1.
    pub fn unit_roundoff(self) -> f64 {
        match self {
            Precision::Half => 4.8828125e-4,           // 2^-11
            Precision::Single => 5.960464477539063e-8, // 2^-24
            Precision::Double => f64::EPSILON / 2.0,   // 2^-53
        }
    }

    pub fn max_finite(self) -> f64 {
        match self {
            Precision::Half => 65504.0,
            Precision::Single => f32::MAX as f64,
            Precision::Double => f64::MAX,
        }
    }

    /// Smallest positive normal number of the format.
    pub fn min_positive_normal(self) -> f64 {
        match self {
            Precision::Half => 6.103515625e-5, // 2^-14
            Precision::Single => f32::MIN_POSITIVE as f64,
            Precision::Double => f64::MIN_POSITIVE,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            Precision::Half => "half",
            Precision::Single => "single",
            Precision::Double => "double",
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "half" => Ok(Precision::Half),
            "single" => Ok(Precision::Single),
            "double" => Ok(Precision::Double),
            other => Err(Error::InvalidConfig(format!(
                "unknown precision `{other}` (expected half, single or double)"
            ))),
        }
    }
}

/// Exceptions raised by a rounding transfer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CastFlags {
    pub inexact: bool,
    /// Result is a nonzero subnormal and was rounded.
    pub underflow_subnormal: bool,
    /// A nonzero finite input rounded to zero.
    pub underflow_zero: bool,
    /// A finite input rounded to infinity.
    pub overflow: bool,
}

impl CastFlags {
    pub fn is_exact(&self) -> bool {
        !(self.inexact || self.underflow_subnormal || self.underflow_zero || self.overflow)
    }
}

/// Elementwise tally of [`CastFlags`] over an array transfer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CastReport {
    pub elements: usize,
    pub inexact: usize,
    pub underflow_subnormal: usize,
    pub underflow_zero: usize,
    pub overflow: usize,
}

impl CastReport {
    pub fn record(&mut self, flags: CastFlags) {
        self.elements += 1;
        self.inexact += flags.inexact as usize;
        self.underflow_subnormal += flags.underflow_subnormal as usize;
        self.underflow_zero += flags.underflow_zero as usize;
        self.overflow += flags.overflow as usize;
    }

    pub fn is_exact(&self) -> bool {
        self.inexact == 0 && self.underflow_subnormal == 0 && self.underflow_zero == 0 && self.overflow == 0
    }
}

mod sealed {
    pub trait Sealed {}
    impl Sealed for half::f16 {}
    impl Sealed for f32 {}
    impl Sealed for f64 {}
}

/// A floating-point element type on the precision lattice.
///
/// Arithmetic methods perform one correctly rounded operation in the type's
/// own format. Operands must already share the format; mixing formats goes
/// through [`Promote`] or [`promote_op`].
pub trait Real:
    sealed::Sealed + Copy + PartialEq + PartialOrd + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    const PRECISION: Precision;
    const ZERO: Self;
    const ONE: Self;

    /// Exact widening to binary64.
    fn to_f64(self) -> f64;
    /// Round a binary64 value to this format, ties to even. NaN becomes the
    /// format's canonical quiet NaN.
    fn round_from_f64(x: f64) -> Self;

    fn add(self, rhs: Self) -> Self;
    fn sub(self, rhs: Self) -> Self;
    fn mul(self, rhs: Self) -> Self;
    fn div(self, rhs: Self) -> Self;
    fn abs(self) -> Self;
    fn is_finite(self) -> bool;
    fn is_nan(self) -> bool;

    /// Bit pattern widened to 64 bits, for bitwise comparisons in tests and
    /// determinism checks.
    fn to_bits_u64(self) -> u64;

    fn into_any_vector(v: PVector<Self>) -> AnyVector;
    fn into_any_matrix(m: PMatrix<Self>) -> AnyMatrix;
    fn vector_ref(v: &AnyVector) -> Option<&PVector<Self>>;
    fn matrix_ref(m: &AnyMatrix) -> Option<&PMatrix<Self>>;
}

impl Real for f16 {
    const PRECISION: Precision = Precision::Half;
    const ZERO: Self = f16::ZERO;
    const ONE: Self = f16::ONE;

    fn to_f64(self) -> f64 {
        f16::to_f64(self)
    }
    fn round_from_f64(x: f64) -> Self {
        if x.is_nan() {
            f16::NAN
        } else {
            f16::from_f64(round_to_half_grid(x))
        }
    }
    fn add(self, rhs: Self) -> Self {
        f16::from_f32(self.to_f32() + rhs.to_f32())
    }
    fn sub(self, rhs: Self) -> Self {
        f16::from_f32(self.to_f32() - rhs.to_f32())
    }
    fn mul(self, rhs: Self) -> Self {
        f16::from_f32(self.to_f32() * rhs.to_f32())
    }
    fn div(self, rhs: Self) -> Self {
        f16::from_f32(self.to_f32() / rhs.to_f32())
    }
    fn abs(self) -> Self {
        f16::from_bits(self.to_bits() & 0x7fff)
    }
    fn is_finite(self) -> bool {
        f16::is_finite(self)
    }
    fn is_nan(self) -> bool {
        f16::is_nan(self)
    }
    fn to_bits_u64(self) -> u64 {
        self.to_bits() as u64
    }
    fn into_any_vector(v: PVector<Self>) -> AnyVector {
        AnyVector::Half(v)
    }
    fn into_any_matrix(m: PMatrix<Self>) -> AnyMatrix {
        AnyMatrix::Half(m)
    }
    fn vector_ref(v: &AnyVector) -> Option<&PVector<Self>> {
        match v {
            AnyVector::Half(v) => Some(v),
            _ => None,
        }
    }
    fn matrix_ref(m: &AnyMatrix) -> Option<&PMatrix<Self>> {
        match m {
            AnyMatrix::Half(m) => Some(m),
            _ => None,
        }
    }
}

macro_rules! native_real {
    ($t:ty, $prec:expr, $variant:ident) => {
        impl Real for $t {
            const PRECISION: Precision = $prec;
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;

            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn round_from_f64(x: f64) -> Self {
                if x.is_nan() {
                    <$t>::NAN
                } else {
                    x as $t
                }
            }
            #[inline]
            fn add(self, rhs: Self) -> Self {
                self + rhs
            }
            #[inline]
            fn sub(self, rhs: Self) -> Self {
                self - rhs
            }
            #[inline]
            fn mul(self, rhs: Self) -> Self {
                self * rhs
            }
            #[inline]
            fn div(self, rhs: Self) -> Self {
                self / rhs
            }
            #[inline]
            fn abs(self) -> Self {
                <$t>::abs(self)
            }
            #[inline]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
            #[inline]
            fn is_nan(self) -> bool {
                <$t>::is_nan(self)
            }
            fn to_bits_u64(self) -> u64 {
                self.to_bits() as u64
            }
            fn into_any_vector(v: PVector<Self>) -> AnyVector {
                AnyVector::$variant(v)
            }
            fn into_any_matrix(m: PMatrix<Self>) -> AnyMatrix {
                AnyMatrix::$variant(m)
            }
            fn vector_ref(v: &AnyVector) -> Option<&PVector<Self>> {
                match v {
                    AnyVector::$variant(v) => Some(v),
                    _ => None,
                }
            }
            fn matrix_ref(m: &AnyMatrix) -> Option<&PMatrix<Self>> {
                match m {
                    AnyMatrix::$variant(m) => Some(m),
                    _ => None,
                }
            }
        }
    };
}

native_real!(f32, Precision::Single, Single);
native_real!(f64, Precision::Double, Double);

/// Exact upcast from a lower (or equal) lattice level.
///
/// Implemented only for lattice-consistent pairs, so a downcast can never be
/// spelled as a promotion.
pub trait Promote<Lo: Real>: Real {
    fn promote(lo: Lo) -> Self;
}

impl<T: Real> Promote<T> for T {
    #[inline]
    fn promote(lo: T) -> T {
        lo
    }
}

impl Promote<f16> for f32 {
    #[inline]
    fn promote(lo: f16) -> f32 {
        lo.to_f32()
    }
}

impl Promote<f16> for f64 {
    #[inline]
    fn promote(lo: f16) -> f64 {
        lo.to_f64()
    }
}

impl Promote<f32> for f64 {
    #[inline]
    fn promote(lo: f32) -> f64 {
        lo as f64
    }
}

/// Flags for rounding the binary64 value `x` to `rounded`'s format.
fn classify<T: Real>(x: f64, rounded: T) -> CastFlags {
    if x.is_nan() {
        return CastFlags::default();
    }
    let back = rounded.to_f64();
    let inexact = back != x;
    CastFlags {
        inexact,
        underflow_subnormal: inexact && back != 0.0 && back.abs() < T::PRECISION.min_positive_normal(),
        underflow_zero: x != 0.0 && back == 0.0,
        overflow: x.is_finite() && back.is_infinite(),
    }
}

/// Transfer between any two lattice levels: exact when widening, rounded to
/// nearest even when narrowing.
#[inline]
pub fn transfer<S: Real, T: Real>(x: S) -> (T, CastFlags) {
    let wide = x.to_f64();
    let out = T::round_from_f64(wide);
    (out, classify(wide, out))
}

/// Round `x` to the nearest binary16 value (ties to even) while staying in
/// binary64. `half`'s own f64 conversion either goes through f32 or drops the
/// low mantissa word before rounding; both can round incorrectly.
fn round_to_half_grid(x: f64) -> f64 {
    const OVERFLOW: f64 = 65520.0;
    const MIN_NORMAL: f64 = 6.103515625e-5;
    let mag = x.abs();
    if mag >= OVERFLOW {
        return f64::INFINITY.copysign(x);
    }
    let exp = if mag < MIN_NORMAL {
        -14
    } else {
        ((mag.to_bits() >> 52) as i32) - 1023
    };
    let quantum = 2f64.powi(exp - 10);
    (x / quantum).round_ties_even() * quantum
}

/// Rounding-free transfer, skipping flag computation. Only for widening or
/// for callers that do not observe exceptions.
#[inline]
pub fn transfer_unflagged<S: Real, T: Real>(x: S) -> T {
    T::round_from_f64(x.to_f64())
}

/// A scalar together with the format it is stored in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggedScalar {
    value: f64,
    tag: Precision,
}

impl TaggedScalar {
    /// Returns `None` unless `value` is representable at `tag`.
    pub fn exact(value: f64, tag: Precision) -> Option<Self> {
        let (rounded, flags) = round_to(value, tag);
        if flags.is_exact() && (rounded.value.to_bits() == value.to_bits() || value.is_nan()) {
            Some(rounded)
        } else {
            None
        }
    }

    /// Round `value` to `tag`.
    pub fn rounded(value: f64, tag: Precision) -> Self {
        round_to(value, tag).0
    }

    pub fn of<T: Real>(x: T) -> Self {
        TaggedScalar {
            value: x.to_f64(),
            tag: T::PRECISION,
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn tag(&self) -> Precision {
        self.tag
    }

    /// Bit pattern in the scalar's own format.
    pub fn bits(&self) -> u64 {
        match self.tag {
            Precision::Half => f16::from_f64(self.value).to_bits() as u64,
            Precision::Single => (self.value as f32).to_bits() as u64,
            Precision::Double => self.value.to_bits(),
        }
    }
}

fn round_to(value: f64, tag: Precision) -> (TaggedScalar, CastFlags) {
    let (value, flags) = match tag {
        Precision::Half => {
            let (v, f) = transfer::<f64, f16>(value);
            (v.to_f64(), f)
        }
        Precision::Single => {
            let (v, f) = transfer::<f64, f32>(value);
            (v as f64, f)
        }
        Precision::Double => (value, CastFlags::default()),
    };
    (TaggedScalar { value, tag }, flags)
}

/// Move `x` to a higher (or equal) precision. The value is unchanged.
pub fn upcast(x: TaggedScalar, target: Precision) -> Result<TaggedScalar> {
    if target < x.tag {
        return Err(Error::Domain(format!("cannot upcast {} to {}", x.tag, target)));
    }
    Ok(TaggedScalar {
        value: x.value,
        tag: target,
    })
}

/// Round `x` to a lower (or equal) precision, reporting exceptions.
pub fn downcast(x: TaggedScalar, target: Precision) -> Result<(TaggedScalar, CastFlags)> {
    if target > x.tag {
        return Err(Error::Domain(format!("cannot downcast {} to {}", x.tag, target)));
    }
    Ok(round_to(x.value, target))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 4] = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div];

    #[inline]
    pub fn apply<T: Real>(self, a: T, b: T) -> T {
        match self {
            BinaryOp::Add => a.add(b),
            BinaryOp::Sub => a.sub(b),
            BinaryOp::Mul => a.mul(b),
            BinaryOp::Div => a.div(b),
        }
    }
}

/// Mixed-precision binary operation: the lower operand is promoted to the
/// higher format, then one operation is performed and rounded there.
pub fn promote_op(a: TaggedScalar, b: TaggedScalar, op: BinaryOp) -> TaggedScalar {
    let tag = a.tag.max(b.tag);
    // Both values are exact at `tag`, so reading them as that format is the upcast.
    let value = match tag {
        Precision::Half => op.apply(f16::from_f64(a.value), f16::from_f64(b.value)).to_f64(),
        Precision::Single => op.apply(a.value as f32, b.value as f32) as f64,
        Precision::Double => op.apply(a.value, b.value),
    };
    TaggedScalar { value, tag }
}

/// Emulated binary16 operation with a single rounding.
pub fn half_op(a: TaggedScalar, b: TaggedScalar, op: BinaryOp) -> Result<TaggedScalar> {
    if a.tag != Precision::Half || b.tag != Precision::Half {
        return Err(Error::Domain(format!(
            "half_op needs half operands, got {} and {}",
            a.tag, b.tag
        )));
    }
    Ok(promote_op(a, b, op))
}
