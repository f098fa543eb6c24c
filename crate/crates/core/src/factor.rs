//! LU factorization with partial pivoting and the two ways of applying the
//! factors to a residual held at a higher precision.
//!
//! * [`solve_otf`] promotes each factor entry at the moment it is used, so
//!   the substitution runs entirely at the residual precision. This costs
//!   `N^2 + N` promotions per solve (the implicit unit diagonal of `L` is
//!   promoted like any other entry).
//! * [`solve_inplace`] scales the residual by its infinity norm, rounds it
//!   down once, solves at the factorization precision, and lifts the result
//!   back: `N` downcasts and `N` upcasts.

use crate::error::{Error, Result};
use crate::mparray::{norm_inf, PMatrix, PVector};
use crate::precision::{transfer, CastReport, Precision, Promote, Real};

/// Packed `PA = LU`: `L` strictly below the diagonal with an implicit unit
/// diagonal, `U` on and above it.
#[derive(Debug, Clone, PartialEq)]
pub struct LuFactors<T: Real> {
    packed: PMatrix<T>,
    /// `pivots[k]` is the row swapped with row `k` at step `k` (zero-based).
    pivots: Vec<usize>,
}

impl<T: Real> LuFactors<T> {
    /// Assembles factors from their parts, checking the pivot sequence and the
    /// diagonal of `U`.
    pub fn from_parts(packed: PMatrix<T>, pivots: Vec<usize>) -> Result<Self> {
        let n = packed.rows();
        if !packed.is_square() || pivots.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} packed factors with {} pivots",
                n,
                packed.cols(),
                pivots.len()
            )));
        }
        if let Some(k) = pivots.iter().enumerate().position(|(k, &p)| p < k || p >= n) {
            return Err(Error::InvalidConfig(format!("invalid pivot {} at step {k}", pivots[k])));
        }
        for k in 0..n {
            let d = packed.get(k, k);
            if d == T::ZERO {
                return Err(Error::ZeroPivot { column: k });
            }
            if !d.is_finite() {
                return Err(Error::NonFinite { column: k });
            }
        }
        Ok(LuFactors { packed, pivots })
    }

    pub fn dim(&self) -> usize {
        self.packed.rows()
    }

    pub fn tag(&self) -> Precision {
        T::PRECISION
    }

    pub fn packed(&self) -> &PMatrix<T> {
        &self.packed
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    /// Unit lower triangular factor as a full matrix.
    pub fn lower(&self) -> PMatrix<T> {
        let n = self.dim();
        PMatrix::from_fn(n, n, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Greater => self.packed.get(i, j),
            std::cmp::Ordering::Equal => T::ONE,
            std::cmp::Ordering::Less => T::ZERO,
        })
    }

    /// Upper triangular factor as a full matrix.
    pub fn upper(&self) -> PMatrix<T> {
        let n = self.dim();
        PMatrix::from_fn(n, n, |i, j| if i <= j { self.packed.get(i, j) } else { T::ZERO })
    }

    /// Applies the row interchanges to `v` in place.
    pub fn permute<R: Real>(&self, v: &mut [R]) {
        for (k, &p) in self.pivots.iter().enumerate() {
            v.swap(k, p);
        }
    }
}

/// Factors `a` in its own precision, overwriting it.
///
/// The pivot is the entry of largest magnitude in the current column; ties go
/// to the smallest row index.
pub fn lu_factor<T: Real>(mut a: PMatrix<T>) -> Result<LuFactors<T>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "LU needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();
    if let Some(idx) = a.as_slice().iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { column: idx % n.max(1) });
    }
    let mut pivots = Vec::with_capacity(n);
    let data = a.as_mut_slice();

    for k in 0..n {
        let mut p = k;
        let mut best = data[k * n + k].abs();
        for i in k + 1..n {
            let v = data[i * n + k].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best == T::ZERO {
            return Err(Error::ZeroPivot { column: k });
        }
        pivots.push(p);
        if p != k {
            for j in 0..n {
                data.swap(k * n + j, p * n + j);
            }
        }

        let (top, bottom) = data.split_at_mut((k + 1) * n);
        let pivot_row = &top[k * n..];
        let pivot = pivot_row[k];
        for row in bottom.chunks_exact_mut(n) {
            let l = row[k].div(pivot);
            row[k] = l;
            let mut finite = l.is_finite();
            for (x, &u) in row[k + 1..].iter_mut().zip(&pivot_row[k + 1..]) {
                *x = x.sub(l.mul(u));
                finite &= x.is_finite();
            }
            if !finite {
                return Err(Error::NonFinite { column: k });
            }
        }
    }
    Ok(LuFactors { packed: a, pivots })
}

/// Interprecision transfer counts observed during a solve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TransferCounts {
    /// Factor entries promoted to the residual precision.
    pub promotions: usize,
    /// Elementwise vector casts in either direction.
    pub casts: usize,
}

/// Hook invoked on every interprecision transfer inside the solve kernels.
pub trait TransferProbe {
    fn promotion(&mut self);
    fn cast(&mut self);
}

/// Probe that records nothing; compiles away.
pub struct NoProbe;

impl TransferProbe for NoProbe {
    #[inline(always)]
    fn promotion(&mut self) {}
    #[inline(always)]
    fn cast(&mut self) {}
}

impl TransferProbe for TransferCounts {
    fn promotion(&mut self) {
        self.promotions += 1;
    }
    fn cast(&mut self) {
        self.casts += 1;
    }
}

#[inline(always)]
fn lift<F: Real, R: Promote<F>, P: TransferProbe>(probe: &mut P, x: F) -> R {
    probe.promotion();
    R::promote(x)
}

/// Forward then back substitution on an already permuted right-hand side,
/// reading factor entries through `lift`.
fn substitute<F: Real, R: Promote<F>, P: TransferProbe>(lu: &PMatrix<F>, y: &mut [R], probe: &mut P) {
    let n = y.len();
    for i in 0..n {
        let row = lu.row(i);
        let mut acc = y[i];
        for j in 0..i {
            acc = acc.sub(lift::<F, R, P>(probe, row[j]).mul(y[j]));
        }
        y[i] = acc.div(lift::<F, R, P>(probe, F::ONE));
    }
    for i in (0..n).rev() {
        let row = lu.row(i);
        let mut acc = y[i];
        for j in i + 1..n {
            acc = acc.sub(lift::<F, R, P>(probe, row[j]).mul(y[j]));
        }
        y[i] = acc.div(lift::<F, R, P>(probe, row[i]));
    }
}

fn check_dim<F: Real, R: Real>(f: &LuFactors<F>, r: &PVector<R>) -> Result<()> {
    if f.dim() != r.len() {
        return Err(Error::DimensionMismatch(format!(
            "factors are {n}x{n}, right-hand side has length {}",
            r.len(),
            n = f.dim()
        )));
    }
    Ok(())
}

fn otf_with<F: Real, R: Promote<F>, P: TransferProbe>(
    f: &LuFactors<F>,
    r: &PVector<R>,
    probe: &mut P,
) -> Result<PVector<R>> {
    check_dim(f, r)?;
    let mut y = r.clone();
    f.permute(y.as_mut_slice());
    substitute(&f.packed, y.as_mut_slice(), probe);
    Ok(y)
}

/// `(LU)^{-1} r` at the residual precision with factor entries promoted on
/// the fly.
pub fn solve_otf<F: Real, R: Promote<F>>(f: &LuFactors<F>, r: &PVector<R>) -> Result<PVector<R>> {
    otf_with(f, r, &mut NoProbe)
}

/// [`solve_otf`] with every promotion counted.
pub fn solve_otf_counted<F: Real, R: Promote<F>>(
    f: &LuFactors<F>,
    r: &PVector<R>,
) -> Result<(PVector<R>, TransferCounts)> {
    let mut counts = TransferCounts::default();
    let y = otf_with(f, r, &mut counts)?;
    Ok((y, counts))
}

/// Correction from an in-place solve, with the exceptions raised while
/// rounding the scaled residual down.
#[derive(Debug, Clone, PartialEq)]
pub struct InPlaceSolve<R: Real> {
    pub correction: PVector<R>,
    pub downcast: CastReport,
}

impl<R: Real> InPlaceSolve<R> {
    pub fn underflows(&self) -> usize {
        self.downcast.underflow_zero
    }
}

fn inplace_with<F: Real, R: Promote<F>, P: TransferProbe>(
    f: &LuFactors<F>,
    r: &PVector<R>,
    probe: &mut P,
) -> Result<InPlaceSolve<R>> {
    check_dim(f, r)?;
    let n = r.len();
    let scale = norm_inf(r).unwrap_or(R::ZERO);
    if scale == R::ZERO {
        return Ok(InPlaceSolve {
            correction: PVector::zeros(n),
            downcast: CastReport::default(),
        });
    }

    let mut permuted = r.clone();
    f.permute(permuted.as_mut_slice());

    let mut report = CastReport::default();
    let mut low: Vec<F> = permuted
        .as_slice()
        .iter()
        .map(|&v| {
            probe.cast();
            let (x, flags) = transfer::<R, F>(v.div(scale));
            report.record(flags);
            x
        })
        .collect();

    substitute::<F, F, _>(&f.packed, &mut low, &mut NoProbe);
    if let Some(column) = low.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { column });
    }

    let correction = low
        .into_iter()
        .map(|x| {
            probe.cast();
            R::promote(x).mul(scale)
        })
        .collect();
    Ok(InPlaceSolve {
        correction: PVector::from_vec(correction),
        downcast: report,
    })
}

/// `||r|| * upcast((LU)^{-1} downcast(r / ||r||))`, with the substitution done
/// entirely at the factorization precision.
pub fn solve_inplace<F: Real, R: Promote<F>>(f: &LuFactors<F>, r: &PVector<R>) -> Result<InPlaceSolve<R>> {
    inplace_with(f, r, &mut NoProbe)
}

/// [`solve_inplace`] with every elementwise cast counted.
pub fn solve_inplace_counted<F: Real, R: Promote<F>>(
    f: &LuFactors<F>,
    r: &PVector<R>,
) -> Result<(InPlaceSolve<R>, TransferCounts)> {
    let mut counts = TransferCounts::default();
    let out = inplace_with(f, r, &mut counts)?;
    Ok((out, counts))
}

/// Exact elementwise upcast of the packed factors; pivots are unchanged.
pub fn promote_factors<F: Real, R: Promote<F>>(f: &LuFactors<F>) -> LuFactors<R> {
    let n = f.dim();
    let data = f.packed.as_slice().iter().map(|&x| R::promote(x)).collect();
    LuFactors {
        packed: PMatrix::from_row_major(n, n, data).expect("square"),
        pivots: f.pivots.clone(),
    }
}
