//! Benchmark systems and the dense oracles used to check them.
//!
//! The benchmark operator is `A = I - c G`, where `G` is the composite
//! trapezoid discretization of the Green's operator of `-d^2/dx^2` on
//! `[0, 1]` with homogeneous Dirichlet conditions. The grid has `n` nodes
//! including both endpoints, `h = 1 / (n - 1)`.

use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::{lu_factor, solve_otf};
use crate::mparray::{cast_vector, matrix_norm_inf, matvec_promoted, norm_inf, PMatrix, PVector};
use crate::precision::{Promote, Real};

pub const DEFAULT_SHIFT: f64 = 800.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhsKind {
    /// `b = (1, ..., 1)`.
    Ones,
    /// `x_true = (1, ..., 1)`, `b = A x_true`.
    Manufactured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Source {
    Greens,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub n: usize,
    /// Shift coefficient `c` in `A = I - c G`.
    pub c: f64,
    pub rhs: RhsKind,
    pub source: Source,
}

impl ProblemSpec {
    pub fn greens(n: usize) -> Self {
        ProblemSpec {
            n,
            c: DEFAULT_SHIFT,
            rhs: RhsKind::Ones,
            source: Source::Greens,
        }
    }

    pub fn with_rhs(mut self, rhs: RhsKind) -> Self {
        self.rhs = rhs;
        self
    }
}

/// `g(x, y) = y (1 - x)` for `x > y`, `x (1 - y)` otherwise.
pub fn greens_kernel(x: f64, y: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
        return Err(Error::Domain(format!("kernel arguments ({x}, {y}) outside [0, 1]")));
    }
    Ok(if x > y { y * (1.0 - x) } else { x * (1.0 - y) })
}

/// `G_ij = w_j g(x_i, x_j)` with trapezoid weights `h/2, h, ..., h, h/2`.
pub fn greens_matrix(n: usize) -> Result<PMatrix<f64>> {
    if n < 3 {
        return Err(Error::Domain(format!("Green's operator needs n >= 3, got {n}")));
    }
    let h = 1.0 / (n - 1) as f64;
    let nodes: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
    let weight = |j: usize| if j == 0 || j == n - 1 { h / 2.0 } else { h };
    let mut g = PMatrix::zeros(n, n);
    for (i, &xi) in nodes.iter().enumerate() {
        for (j, &xj) in nodes.iter().enumerate() {
            g.set(i, j, weight(j) * greens_kernel(xi, xj)?);
        }
    }
    Ok(g)
}

/// `A = I - c G`, elementwise in binary64.
pub fn shifted_identity(g: &PMatrix<f64>, c: f64) -> PMatrix<f64> {
    PMatrix::from_fn(g.rows(), g.cols(), |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - c * g.get(i, j)
    })
}

/// Builds the system matrix for `spec`.
pub fn build_operator(spec: &ProblemSpec) -> Result<PMatrix<f64>> {
    if !spec.c.is_finite() {
        return Err(Error::Domain(format!("shift must be finite, got {}", spec.c)));
    }
    match &spec.source {
        Source::Greens => Ok(shifted_identity(&greens_matrix(spec.n)?, spec.c)),
        Source::File(path) => load_matrix_market(path),
    }
}

/// Right-hand side for `a`. For [`RhsKind::Manufactured`], `b` is `A * ones`
/// computed in binary64 and rounded to the storage precision; the exact
/// solution is returned with it.
pub fn make_rhs<T: Real>(a: &PMatrix<T>, kind: RhsKind) -> (PVector<T>, Option<PVector<f64>>)
where
    f64: Promote<T>,
{
    let n = a.rows();
    match kind {
        RhsKind::Ones => (PVector::filled(n, T::ONE), None),
        RhsKind::Manufactured => {
            let x_true = PVector::filled(n, 1.0f64);
            let b = matvec_promoted(a, &x_true).expect("square matrix");
            (PVector::from_f64(b.as_slice()).0, Some(x_true))
        }
    }
}

/// Inverse of `a` by LU solves against the unit vectors.
pub fn inverse(a: &PMatrix<f64>) -> Result<PMatrix<f64>> {
    let n = a.rows();
    let f = lu_factor(a.clone())?;
    let mut inv = PMatrix::zeros(n, n);
    let mut e = PVector::<f64>::zeros(n);
    for j in 0..n {
        e.as_mut_slice().fill(0.0);
        e.as_mut_slice()[j] = 1.0;
        let col = solve_otf(&f, &e)?;
        for (i, &v) in col.as_slice().iter().enumerate() {
            inv.set(i, j, v);
        }
    }
    Ok(inv)
}

/// `||A||_inf ||A^{-1}||_inf` with an explicitly formed inverse.
pub fn cond_inf_exact(a: &PMatrix<f64>) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(
            "condition number of a non-square matrix".into(),
        ));
    }
    Ok(matrix_norm_inf(a)? * matrix_norm_inf(&inverse(a)?)?)
}

/// Power iteration from the all-ones vector; returns the Rayleigh quotient
/// once successive quotients differ by less than `tol`.
pub fn dominant_eigenvalue(g: &PMatrix<f64>, tol: f64, max_iters: usize) -> Result<f64> {
    if !g.is_square() || g.rows() == 0 {
        return Err(Error::DimensionMismatch(
            "power iteration needs a nonempty square matrix".into(),
        ));
    }
    let n = g.rows();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut previous = f64::NAN;
    for _ in 0..max_iters {
        let w = matvec_promoted(g, &PVector::from_vec(v.clone()))?.into_vec();
        let lambda = dot(&v, &w) / dot(&v, &v);
        let norm = dot(&w, &w).sqrt();
        if norm == 0.0 {
            return Ok(0.0);
        }
        if (lambda - previous).abs() < tol {
            return Ok(lambda);
        }
        previous = lambda;
        v = w.into_iter().map(|x| x / norm).collect();
    }
    Err(Error::NoConvergence(max_iters))
}

/// Relative error `||x - x_ref||_inf / ||x_ref||_inf`, in binary64.
pub fn relative_error<R: Real>(x: &PVector<R>, x_ref: &PVector<f64>) -> Result<f64>
where
    f64: Promote<R>,
{
    let x = cast_vector::<R, f64>(x).0;
    Ok(norm_inf(&x.sub(x_ref)?)? / norm_inf(x_ref)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MmFormat {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MmSymmetry {
    General,
    Symmetric,
}

/// Reads a real square Matrix Market file into a dense matrix.
pub fn load_matrix_market(path: impl AsRef<Path>) -> Result<PMatrix<f64>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_matrix_market(file, path)
}

/// Parses Matrix Market text: `coordinate` or `array`, field `real` or
/// `integer`, symmetry `general` or `symmetric`. Symmetric storage is
/// expanded and duplicate coordinate entries are summed.
pub fn parse_matrix_market(reader: impl Read, path: &Path) -> Result<PMatrix<f64>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = BufReader::new(reader).lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next_line = || -> Result<Option<(usize, String)>> {
        match lines.next() {
            Some((no, Ok(text))) => Ok(Some((no, text))),
            Some((no, Err(e))) => Err(parse_err(no, e.to_string())),
            None => Ok(None),
        }
    };

    let (no, banner) = next_line()?.ok_or_else(|| parse_err(1, "empty file".into()))?;
    let tokens: Vec<String> = banner.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(no, format!("bad banner `{banner}`")));
    }
    let format = match tokens[2].as_str() {
        "coordinate" => MmFormat::Coordinate,
        "array" => MmFormat::Array,
        other => return Err(parse_err(no, format!("unsupported format `{other}`"))),
    };
    match tokens[3].as_str() {
        "real" | "double" | "integer" => {}
        other => return Err(parse_err(no, format!("unsupported field `{other}`"))),
    }
    let symmetry = match tokens[4].as_str() {
        "general" => MmSymmetry::General,
        "symmetric" => MmSymmetry::Symmetric,
        other => return Err(parse_err(no, format!("unsupported symmetry `{other}`"))),
    };

    let mut content = || -> Result<Option<(usize, String)>> {
        while let Some((no, text)) = next_line()? {
            let t = text.trim();
            if !t.is_empty() && !t.starts_with('%') {
                return Ok(Some((no, t.to_string())));
            }
        }
        Ok(None)
    };

    let (no, size_line) = content()?.ok_or_else(|| parse_err(no + 1, "missing size line".into()))?;
    let sizes: Vec<usize> = size_line
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(no, format!("bad size `{t}`"))))
        .collect::<Result<_>>()?;
    let expected = if format == MmFormat::Coordinate { 3 } else { 2 };
    if sizes.len() != expected {
        return Err(parse_err(no, format!("expected {expected} sizes, got {}", sizes.len())));
    }
    let (rows, cols) = (sizes[0], sizes[1]);
    if rows != cols {
        return Err(parse_err(no, format!("matrix is {rows}x{cols}, not square")));
    }
    let n = rows;
    let mut a = PMatrix::<f64>::zeros(n, n);
    let number =
        |no: usize, t: &str| -> Result<f64> { t.parse::<f64>().map_err(|_| parse_err(no, format!("bad value `{t}`"))) };

    match format {
        MmFormat::Coordinate => {
            for _ in 0..sizes[2] {
                let (no, line) = content()?.ok_or_else(|| parse_err(no, "fewer entries than declared".into()))?;
                let parts: Vec<&str> = line.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(parse_err(no, format!("expected `row col value`, got `{line}`")));
                }
                let index = |t: &str| -> Result<usize> {
                    match t.parse::<usize>() {
                        Ok(k) if (1..=n).contains(&k) => Ok(k - 1),
                        _ => Err(parse_err(no, format!("index `{t}` out of range 1..={n}"))),
                    }
                };
                let (i, j, v) = (index(parts[0])?, index(parts[1])?, number(no, parts[2])?);
                a.set(i, j, a.get(i, j) + v);
                if symmetry == MmSymmetry::Symmetric && i != j {
                    a.set(j, i, a.get(j, i) + v);
                }
            }
        }
        MmFormat::Array => {
            // Column-major; symmetric files list only the lower triangle.
            for j in 0..n {
                let start = if symmetry == MmSymmetry::Symmetric { j } else { 0 };
                for i in start..n {
                    let (no, line) = content()?.ok_or_else(|| parse_err(no, "fewer entries than declared".into()))?;
                    let v = number(no, line.trim())?;
                    a.set(i, j, v);
                    if symmetry == MmSymmetry::Symmetric {
                        a.set(j, i, v);
                    }
                }
            }
        }
    }
    if let Some((no, line)) = content()? {
        return Err(parse_err(no, format!("unexpected trailing data `{line}`")));
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<PMatrix<f64>> {
        parse_matrix_market(text.as_bytes(), Path::new("test.mtx"))
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(greens_kernel(0.25, 0.5).unwrap(), 0.125);
        assert_eq!(greens_kernel(0.5, 0.25).unwrap(), 0.125);
        for x in [0.0, 0.1, 0.5, 0.9, 1.0] {
            assert_eq!(greens_kernel(x, 0.0).unwrap(), 0.0);
            assert_eq!(greens_kernel(x, 1.0).unwrap(), 0.0);
        }
        assert!(greens_kernel(-0.1, 0.5).is_err());
        assert!(greens_kernel(0.5, 1.5).is_err());
    }

    #[test]
    fn greens_matrix_n3() {
        // h = 1/2; only the interior node sees a nonzero kernel: 0.5 * g(0.5, 0.5).
        let g = greens_matrix(3).unwrap();
        let expected = 0.5 * (0.5 * (1.0 - 0.5));
        assert_eq!(expected, 0.125);
        for i in 0..3 {
            for j in 0..3 {
                let want = if (i, j) == (1, 1) { expected } else { 0.0 };
                assert_eq!(g.get(i, j), want, "G[{i}][{j}]");
            }
        }
        assert!(greens_matrix(2).is_err());
    }

    #[test]
    fn greens_matrix_structure() {
        for n in [3, 10, 57] {
            let g = greens_matrix(n).unwrap();
            for i in 0..n {
                assert_eq!(g.get(i, 0), 0.0);
                assert_eq!(g.get(i, n - 1), 0.0);
                for j in 1..n - 1 {
                    if (1..n - 1).contains(&i) {
                        assert_eq!(g.get(i, j), g.get(j, i));
                    }
                }
            }
        }
    }

    #[test]
    fn operator_examples() {
        let a = build_operator(&ProblemSpec::greens(3)).unwrap();
        let expected = PMatrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, -99.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(a, expected);

        let spec = ProblemSpec {
            c: 0.0,
            ..ProblemSpec::greens(20)
        };
        assert_eq!(build_operator(&spec).unwrap(), PMatrix::identity(20));
        let spec = ProblemSpec {
            c: f64::NAN,
            ..ProblemSpec::greens(20)
        };
        assert!(build_operator(&spec).is_err());
    }

    #[test]
    fn rhs_examples() {
        let (b, x) = make_rhs(&PMatrix::<f64>::identity(4), RhsKind::Ones);
        assert_eq!(b.as_slice(), &[1.0; 4]);
        assert!(x.is_none());

        let (b, x) = make_rhs(&PMatrix::<f32>::identity(3), RhsKind::Manufactured);
        assert_eq!(b.as_slice(), &[1.0f32; 3]);
        assert_eq!(x.unwrap().as_slice(), &[1.0; 3]);

        let two = PMatrix::from_fn(3, 3, |i, j| if i == j { 2.0f64 } else { 0.0 });
        let (b, _) = make_rhs(&two, RhsKind::Manufactured);
        assert_eq!(b.as_slice(), &[2.0; 3]);
    }

    #[test]
    fn condition_examples() {
        assert_eq!(cond_inf_exact(&PMatrix::identity(5)).unwrap(), 1.0);
        let d = PMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 10.0]]).unwrap();
        assert_eq!(cond_inf_exact(&d).unwrap(), 10.0);
        let singular = PMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(cond_inf_exact(&singular).is_err());
        let a = build_operator(&ProblemSpec::greens(30)).unwrap();
        assert!(cond_inf_exact(&a).unwrap() >= 1.0);
    }

    #[test]
    fn eigenvalue_examples() {
        let d = PMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((dominant_eigenvalue(&d, 1e-14, 1000).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(dominant_eigenvalue(&PMatrix::zeros(4, 4), 1e-12, 10).unwrap(), 0.0);
        let close = PMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.999]]).unwrap();
        assert!(matches!(
            dominant_eigenvalue(&close, 1e-15, 5),
            Err(Error::NoConvergence(5))
        ));
    }

    #[test]
    fn matrix_market_coordinate() {
        let a = parse("%%MatrixMarket matrix coordinate real general\n% comment\n2 2 2\n1 1 1.0\n2 2 1.0\n").unwrap();
        assert_eq!(a, PMatrix::identity(2));

        let a = parse("%%MatrixMarket matrix coordinate real symmetric\n2 2 3\n1 1 1\n2 1 5.0\n2 2 2\n").unwrap();
        assert_eq!((a.get(0, 1), a.get(1, 0)), (5.0, 5.0));

        let a = parse("%%MatrixMarket matrix coordinate real general\n1 1 2\n1 1 1.5\n1 1 2.0\n").unwrap();
        assert_eq!(a.get(0, 0), 3.5);
    }

    #[test]
    fn matrix_market_array() {
        let a = parse("%%MatrixMarket matrix array real general\n2 2\n1\n3\n2\n4\n").unwrap();
        assert_eq!(a.as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        let a = parse("%%MatrixMarket matrix array real symmetric\n2 2\n1\n5\n2\n").unwrap();
        assert_eq!(a.as_slice(), &[1.0, 5.0, 5.0, 2.0]);
    }

    #[test]
    fn matrix_market_rejections() {
        let err = parse("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        assert!(parse("%%MatrixMarket matrix coordinate pattern general\n1 1 1\n1 1\n").is_err());
        assert!(parse("%%MatrixMarket matrix coordinate real general\n2 3 0\n").is_err());
        let err = parse("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 abc\n").unwrap_err();
        assert!(err.to_string().contains("test.mtx:3"), "{err}");
        assert!(parse("").is_err());
        assert!(parse("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n").is_err());
        assert!(matches!(
            load_matrix_market("/nonexistent/file.mtx"),
            Err(Error::Io { .. })
        ));
    }
}
