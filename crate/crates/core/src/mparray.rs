//! Dense vectors and matrices whose element type fixes their precision.
//!
//! All reductions accumulate in strictly ascending index order with separate
//! multiply and add roundings, so results are bitwise reproducible.

use crate::error::{Error, Result};
use crate::precision::{transfer, CastReport, Precision, Promote, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct PVector<T: Real> {
    data: Vec<T>,
}

impl<T: Real> PVector<T> {
    pub fn from_vec(data: Vec<T>) -> Self {
        PVector { data }
    }

    pub fn zeros(n: usize) -> Self {
        PVector { data: vec![T::ZERO; n] }
    }

    pub fn filled(n: usize, value: T) -> Self {
        PVector { data: vec![value; n] }
    }

    /// Rounds each entry of `values` to `T`.
    pub fn from_f64(values: &[f64]) -> (Self, CastReport) {
        let mut report = CastReport::default();
        let data = values
            .iter()
            .map(|&x| {
                let (y, flags) = transfer::<f64, T>(x);
                report.record(flags);
                y
            })
            .collect();
        (PVector { data }, report)
    }

    pub fn tag(&self) -> Precision {
        T::PRECISION
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.to_f64()).collect()
    }

    /// True when both vectors hold identical bit patterns.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.len() == other.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits_u64() == b.to_bits_u64())
    }

    /// `self += other`, elementwise at `T`.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        check_len("add_assign", self.len(), other.len())?;
        for (x, &d) in self.data.iter_mut().zip(&other.data) {
            *x = x.add(d);
        }
        Ok(())
    }

    /// `self - other`, elementwise at `T`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_len("sub", self.len(), other.len())?;
        Ok(PVector {
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a.sub(b)).collect(),
        })
    }

    /// Multiplies every entry by `s` at `T`.
    pub fn scale(&self, s: T) -> Self {
        PVector {
            data: self.data.iter().map(|&x| x.mul(s)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PMatrix<T: Real> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> PMatrix<T> {
    /// Wraps row-major `data`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(PMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Ok(PMatrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        PMatrix {
            rows,
            cols,
            data: vec![T::ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        PMatrix { rows, cols, data }
    }

    pub fn tag(&self) -> Precision {
        T::PRECISION
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: T) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits_u64() == b.to_bits_u64())
    }

    /// Column `j` as a vector.
    pub fn column(&self, j: usize) -> PVector<T> {
        PVector::from_vec((0..self.rows).map(|i| self.get(i, j)).collect())
    }
}

fn check_len(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch(format!(
            "{what}: expected length {expected}, got {got}"
        )));
    }
    Ok(())
}

/// Copies `v` to precision `T`, tallying rounding exceptions.
pub fn cast_vector<S: Real, T: Real>(v: &PVector<S>) -> (PVector<T>, CastReport) {
    let mut report = CastReport::default();
    let data = v
        .data
        .iter()
        .map(|&x| {
            let (y, flags) = transfer::<S, T>(x);
            report.record(flags);
            y
        })
        .collect();
    (PVector { data }, report)
}

/// Copies `a` into a newly allocated matrix at precision `T`, tallying
/// rounding exceptions. Overflowed entries become infinities; the caller
/// decides whether that is fatal.
pub fn cast_matrix<S: Real, T: Real>(a: &PMatrix<S>) -> (PMatrix<T>, CastReport) {
    let mut report = CastReport::default();
    let data = a
        .data
        .iter()
        .map(|&x| {
            let (y, flags) = transfer::<S, T>(x);
            report.record(flags);
            y
        })
        .collect();
    (
        PMatrix {
            rows: a.rows,
            cols: a.cols,
            data,
        },
        report,
    )
}

/// `A x` at the precision of `x`, promoting each entry of `A` as it is read.
pub fn matvec_promoted<W: Real, R: Promote<W>>(a: &PMatrix<W>, x: &PVector<R>) -> Result<PVector<R>> {
    check_len("matvec", a.cols, x.len())?;
    let data = (0..a.rows)
        .map(|i| {
            a.row(i)
                .iter()
                .zip(&x.data)
                .fold(R::ZERO, |acc, (&aij, &xj)| acc.add(R::promote(aij).mul(xj)))
        })
        .collect();
    Ok(PVector { data })
}

/// Residual `b - A x` of the promoted problem, evaluated at the precision of `x`.
pub fn residual<W: Real, R: Promote<W>>(a: &PMatrix<W>, b: &PVector<W>, x: &PVector<R>) -> Result<PVector<R>> {
    check_len("residual", a.rows, b.len())?;
    let ax = matvec_promoted(a, x)?;
    let data = b
        .data
        .iter()
        .zip(ax.data)
        .map(|(&bi, axi)| R::promote(bi).sub(axi))
        .collect();
    Ok(PVector { data })
}

/// `max_i |v_i|`; NaN if any entry is NaN.
pub fn norm_inf<T: Real>(v: &PVector<T>) -> Result<T> {
    if v.is_empty() {
        return Err(Error::Empty("norm of an empty vector"));
    }
    let mut best = T::ZERO;
    for &x in &v.data {
        if x.is_nan() {
            return Ok(x);
        }
        let ax = x.abs();
        if ax > best {
            best = ax;
        }
    }
    Ok(best)
}

/// Maximum absolute row sum, accumulated in binary64 whatever the storage.
pub fn matrix_norm_inf<T: Real>(a: &PMatrix<T>) -> Result<f64> {
    if a.rows == 0 {
        return Err(Error::Empty("norm of an empty matrix"));
    }
    Ok((0..a.rows)
        .map(|i| a.row(i).iter().map(|x| x.to_f64().abs()).sum::<f64>())
        .fold(0.0, f64::max))
}

/// A vector whose precision is only known at run time.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyVector {
    Half(PVector<half::f16>),
    Single(PVector<f32>),
    Double(PVector<f64>),
}

impl AnyVector {
    /// Rounds binary64 data to `tag`.
    pub fn from_f64(values: &[f64], tag: Precision) -> (Self, CastReport) {
        match tag {
            Precision::Half => {
                let (v, r) = PVector::from_f64(values);
                (AnyVector::Half(v), r)
            }
            Precision::Single => {
                let (v, r) = PVector::from_f64(values);
                (AnyVector::Single(v), r)
            }
            Precision::Double => (
                AnyVector::Double(PVector::from_vec(values.to_vec())),
                CastReport::default(),
            ),
        }
    }

    pub fn tag(&self) -> Precision {
        match self {
            AnyVector::Half(_) => Precision::Half,
            AnyVector::Single(_) => Precision::Single,
            AnyVector::Double(_) => Precision::Double,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            AnyVector::Half(v) => v.len(),
            AnyVector::Single(v) => v.len(),
            AnyVector::Double(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        match self {
            AnyVector::Half(v) => v.to_f64_vec(),
            AnyVector::Single(v) => v.to_f64_vec(),
            AnyVector::Double(v) => v.to_f64_vec(),
        }
    }

    pub fn bitwise_eq(&self, other: &AnyVector) -> bool {
        match (self, other) {
            (AnyVector::Half(a), AnyVector::Half(b)) => a.bitwise_eq(b),
            (AnyVector::Single(a), AnyVector::Single(b)) => a.bitwise_eq(b),
            (AnyVector::Double(a), AnyVector::Double(b)) => a.bitwise_eq(b),
            _ => false,
        }
    }
}

/// A matrix whose precision is only known at run time.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyMatrix {
    Half(PMatrix<half::f16>),
    Single(PMatrix<f32>),
    Double(PMatrix<f64>),
}

impl AnyMatrix {
    /// Rounds a binary64 matrix to `tag`.
    pub fn from_f64(a: &PMatrix<f64>, tag: Precision) -> (Self, CastReport) {
        match tag {
            Precision::Half => {
                let (m, r) = cast_matrix(a);
                (AnyMatrix::Half(m), r)
            }
            Precision::Single => {
                let (m, r) = cast_matrix(a);
                (AnyMatrix::Single(m), r)
            }
            Precision::Double => (AnyMatrix::Double(a.clone()), CastReport::default()),
        }
    }

    pub fn tag(&self) -> Precision {
        match self {
            AnyMatrix::Half(_) => Precision::Half,
            AnyMatrix::Single(_) => Precision::Single,
            AnyMatrix::Double(_) => Precision::Double,
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            AnyMatrix::Half(m) => m.rows(),
            AnyMatrix::Single(m) => m.rows(),
            AnyMatrix::Double(m) => m.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            AnyMatrix::Half(m) => m.cols(),
            AnyMatrix::Single(m) => m.cols(),
            AnyMatrix::Double(m) => m.cols(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use half::f16;
    use proptest::prelude::*;

    fn mat<T: Real>(rows: &[&[f64]]) -> PMatrix<T> {
        PMatrix::from_rows(
            &rows
                .iter()
                .map(|r| r.iter().map(|&x| T::round_from_f64(x)).collect())
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn cast_matrix_examples() {
        let (a, rep) = cast_matrix::<f64, f32>(&PMatrix::identity(4));
        assert!(rep.is_exact());
        assert_eq!(a, PMatrix::identity(4));

        let big = mat::<f64>(&[&[1.0, 1e39], &[0.0, 1.0]]);
        let (a, rep) = cast_matrix::<f64, f32>(&big);
        assert_eq!(rep.overflow, 1);
        assert_eq!(a.get(0, 1), f32::INFINITY);

        let s = mat::<f32>(&[&[0.1, -3.7], &[1e-30, 12345.678]]);
        let (up, rep) = cast_matrix::<f32, f64>(&s);
        assert!(rep.is_exact());
        let (back, rep) = cast_matrix::<f64, f32>(&up);
        assert!(rep.is_exact());
        assert!(back.bitwise_eq(&s));
    }

    #[test]
    fn cast_vector_examples() {
        let v = PVector::from_vec(vec![1.0f64, 2.0]);
        let (s, rep) = cast_vector::<f64, f32>(&v);
        assert!(rep.is_exact());
        assert_eq!(s.as_slice(), &[1.0f32, 2.0]);

        let (_, rep) = cast_vector::<f64, f16>(&PVector::zeros(5));
        assert!(rep.is_exact());

        let v = PVector::from_vec(vec![0.1f32, -2.5e-20, 7.0]);
        let (up, _) = cast_vector::<f32, f64>(&v);
        let (back, _) = cast_vector::<f64, f32>(&up);
        assert!(back.bitwise_eq(&v));
    }

    #[test]
    fn matvec_examples() {
        let x = PVector::from_vec(vec![0.1f64, -7.25, 1e-3]);
        let y = matvec_promoted(&PMatrix::<f32>::identity(3), &x).unwrap();
        assert!(y.bitwise_eq(&x));

        let a = mat::<f32>(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let y = matvec_promoted(&a, &PVector::from_vec(vec![1.0f64, 1.0])).unwrap();
        assert_eq!(y.as_slice(), &[3.0, 7.0]);

        let a = mat::<f64>(&[&[0.1, 0.2], &[0.3, 0.4]]);
        let y = matvec_promoted(&a, &PVector::from_vec(vec![0.5f64, 0.7])).unwrap();
        assert_eq!(y.as_slice(), &[0.1 * 0.5 + 0.2 * 0.7, 0.3 * 0.5 + 0.4 * 0.7]);

        assert!(matvec_promoted(&a, &PVector::<f64>::zeros(3)).is_err());
    }

    #[test]
    fn residual_examples() {
        let a = mat::<f32>(&[&[2.0, 1.0], &[0.5, 2.0]]);
        let b = PVector::from_vec(vec![0.1f32, 3.0]);
        let r = residual(&a, &b, &PVector::<f64>::zeros(2)).unwrap();
        assert!(r.bitwise_eq(&cast_vector::<f32, f64>(&b).0));

        let b = PVector::from_vec(vec![0.1f64, -4.0]);
        let r = residual(&PMatrix::<f64>::identity(2), &b, &b).unwrap();
        assert_eq!(r.as_slice(), &[0.0, 0.0]);

        let a = mat::<f32>(&[&[2.0, 0.0], &[0.0, 2.0]]);
        let b = PVector::from_vec(vec![2.0f32, 2.0]);
        let r = residual(&a, &b, &PVector::from_vec(vec![1.0f64, 1.0])).unwrap();
        assert_eq!(r.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn norm_examples() {
        assert_eq!(norm_inf(&PVector::from_vec(vec![1.0f64, -3.0, 2.0])).unwrap(), 3.0);
        assert_eq!(norm_inf(&PVector::<f32>::zeros(4)).unwrap(), 0.0);
        assert_eq!(norm_inf(&PVector::from_vec(vec![-5.0f64])).unwrap(), 5.0);
        assert!(norm_inf(&PVector::from_vec(vec![1.0f64, f64::NAN, 9.0]))
            .unwrap()
            .is_nan());
        assert!(matches!(norm_inf(&PVector::<f64>::zeros(0)), Err(Error::Empty(_))));

        assert_eq!(matrix_norm_inf(&PMatrix::<f16>::identity(7)).unwrap(), 1.0);
        assert_eq!(matrix_norm_inf(&mat::<f64>(&[&[1.0, -2.0], &[3.0, 4.0]])).unwrap(), 7.0);
        assert_eq!(matrix_norm_inf(&PMatrix::<f32>::zeros(3, 3)).unwrap(), 0.0);
        assert!(matrix_norm_inf(&PMatrix::<f32>::zeros(0, 0)).is_err());
    }

    #[test]
    fn promoted_product_differs_from_low_precision_product() {
        // (I_W^R A) x != A x once x carries bits the working precision cannot hold.
        let a = mat::<f32>(&[&[1.0, 1.0 / 3.0], &[0.7, 0.1]]);
        let x = PVector::from_vec(vec![1.0 / 3.0, 0.2f64]);
        let promoted = matvec_promoted(&a, &x).unwrap();
        let low = matvec_promoted(&a, &cast_vector::<f64, f32>(&x).0).unwrap();
        let low_up = cast_vector::<f32, f64>(&low).0;
        assert!(!promoted.bitwise_eq(&low_up));
    }

    fn matrix_and_vector() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
        (1usize..12).prop_flat_map(|n| {
            (
                Just(n),
                prop::collection::vec(-100.0..100.0f64, n * n),
                prop::collection::vec(-100.0..100.0f64, n),
            )
        })
    }

    fn implicit_equals_explicit<W: Real, R: Promote<W>>(n: usize, a: &[f64], x: &[f64]) -> bool {
        let (a, _) = cast_matrix::<f64, W>(&PMatrix::from_row_major(n, n, a.to_vec()).unwrap());
        let (x, _) = PVector::<R>::from_f64(x);
        let implicit = matvec_promoted(&a, &x).unwrap();
        let explicit = matvec_promoted(&cast_matrix::<W, R>(&a).0, &x).unwrap();
        implicit.bitwise_eq(&explicit)
    }

    proptest! {
        #[test]
        fn implicit_promotion_is_explicit_upcast((n, a, x) in matrix_and_vector()) {
            prop_assert!(implicit_equals_explicit::<f16, f16>(n, &a, &x));
            prop_assert!(implicit_equals_explicit::<f16, f32>(n, &a, &x));
            prop_assert!(implicit_equals_explicit::<f16, f64>(n, &a, &x));
            prop_assert!(implicit_equals_explicit::<f32, f32>(n, &a, &x));
            prop_assert!(implicit_equals_explicit::<f32, f64>(n, &a, &x));
            prop_assert!(implicit_equals_explicit::<f64, f64>(n, &a, &x));
        }

        #[test]
        fn norm_commutes_with_upcast(v in prop::collection::vec(-1e6..1e6f64, 1..40)) {
            let (s, _) = PVector::<f32>::from_f64(&v);
            let up = cast_vector::<f32, f64>(&s).0;
            prop_assert_eq!(norm_inf(&up).unwrap(), norm_inf(&s).unwrap() as f64);
        }

        #[test]
        fn residual_at_zero_is_upcast_rhs((n, a, b) in matrix_and_vector()) {
            let (a, _) = cast_matrix::<f64, f32>(&PMatrix::from_row_major(n, n, a).unwrap());
            let (b, _) = PVector::<f32>::from_f64(&b);
            let r = residual(&a, &b, &PVector::<f64>::zeros(n)).unwrap();
            prop_assert!(r.bitwise_eq(&cast_vector::<f32, f64>(&b).0));
        }
    }
}
