//! Mixed-precision iterative refinement for dense linear systems.
//!
//! Every change of precision in this crate is an explicit call: values are
//! upcast with [`precision::Promote`], rounded down with
//! [`precision::Real::round_from_f64`], and mixed binary operations go through
//! [`precision::promote_op`]. Vectors and matrices carry their precision in
//! their element type, so a solve at one precision can never silently read
//! data stored at another.
//!
//! The modules follow the flow of a refinement solve:
//!
//! - [`precision`]: the half/single/double lattice, casts, and emulated half arithmetic.
//! - [`mparray`]: precision-tagged vectors and matrices, promoted products, residuals.
//! - [`factor`]: LU with partial pivoting and the on-the-fly / in-place triangular solves.
//! - [`ir`]: the refinement driver, termination rules and iteration matrices.
//! - [`problems`]: the Green's-operator benchmark, condition and eigenvalue oracles,
//!   Matrix Market input.

// `!(a < b)` is used on purpose so that NaN takes the stopping branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod factor;
pub mod ir;
pub mod mparray;
pub mod precision;
pub mod problems;

pub use error::{Error, Result};
pub use half::f16;
pub use precision::{Precision, Promote, Real};

/// Expands `$body` with `$f`, `$w`, `$r` bound to the element types of a
/// factorization/working/residual precision triple.
///
/// Evaluates to `Some(body)` for lattice-consistent triples (`tf <= tw <= tr`)
/// and `None` otherwise.
#[macro_export]
macro_rules! dispatch_lattice {
    ($tf:expr, $tw:expr, $tr:expr, |$f:ident, $w:ident, $r:ident| $body:expr) => {{
        use $crate::precision::Precision as __P;
        match ($tf, $tw, $tr) {
            (__P::Half, __P::Half, __P::Half) => $crate::dispatch_lattice!(@arm $f = $crate::f16, $w = $crate::f16, $r = $crate::f16, $body),
            (__P::Half, __P::Half, __P::Single) => $crate::dispatch_lattice!(@arm $f = $crate::f16, $w = $crate::f16, $r = f32, $body),
            (__P::Half, __P::Half, __P::Double) => $crate::dispatch_lattice!(@arm $f = $crate::f16, $w = $crate::f16, $r = f64, $body),
            (__P::Half, __P::Single, __P::Single) => $crate::dispatch_lattice!(@arm $f = $crate::f16, $w = f32, $r = f32, $body),
            (__P::Half, __P::Single, __P::Double) => $crate::dispatch_lattice!(@arm $f = $crate::f16, $w = f32, $r = f64, $body),
            (__P::Half, __P::Double, __P::Double) => $crate::dispatch_lattice!(@arm $f = $crate::f16, $w = f64, $r = f64, $body),
            (__P::Single, __P::Single, __P::Single) => $crate::dispatch_lattice!(@arm $f = f32, $w = f32, $r = f32, $body),
            (__P::Single, __P::Single, __P::Double) => $crate::dispatch_lattice!(@arm $f = f32, $w = f32, $r = f64, $body),
            (__P::Single, __P::Double, __P::Double) => $crate::dispatch_lattice!(@arm $f = f32, $w = f64, $r = f64, $body),
            (__P::Double, __P::Double, __P::Double) => $crate::dispatch_lattice!(@arm $f = f64, $w = f64, $r = f64, $body),
            _ => None,
        }
    }};
    (@arm $f:ident = $ft:ty, $w:ident = $wt:ty, $r:ident = $rt:ty, $body:expr) => {{
        #[allow(dead_code)]
        type $f = $ft;
        #[allow(dead_code)]
        type $w = $wt;
        #[allow(dead_code)]
        type $r = $rt;
        Some($body)
    }};
}
