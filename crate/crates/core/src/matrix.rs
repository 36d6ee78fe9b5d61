//! Dense statistics and decompositions shared by every other module.
//!
//! Everything here is a pure function of its inputs. Eigendecompositions are
//! returned in a canonical form (descending eigenvalues, each eigenvector's
//! largest-magnitude entry non-negative) so that PCA projections and
//! PCA-whitening are bitwise reproducible.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance (relative to the largest entry) under which a matrix counts as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Columns with stddev below this fraction of the largest stddev are degenerate.
pub const DEGENERATE_STDDEV_RATIO: f64 = 1e-12;

/// An `N x d` matrix of sentence embeddings, one sentence per row.
///
/// Construction guarantees `N >= 1`, `d >= 1` and that every entry is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    data: Array2<f64>,
}

impl EmbeddingMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (n, d) = data.dim();
        if n == 0 || d == 0 {
            return Err(Error::invalid(format!(
                "embedding matrix must be non-empty, got {n}x{d}"
            )));
        }
        if let Some(((i, j), v)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite entry {v} at row {i}, column {j}"
            )));
        }
        Ok(EmbeddingMatrix { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("ragged rows"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| Error::invalid(e.to_string()))?;
        Self::new(data)
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        Self::new(self.data.select(Axis(0), idx))
    }

    /// Vertically stack `self` on top of `other`.
    pub fn stack(&self, other: &Self) -> Result<Self> {
        if self.ncols() != other.ncols() {
            return Err(Error::invalid(format!(
                "cannot stack {} columns onto {}",
                other.ncols(),
                self.ncols()
            )));
        }
        let data = ndarray::concatenate(Axis(0), &[self.view(), other.view()])
            .map_err(|e| Error::Internal(e.to_string()))?;
        Ok(EmbeddingMatrix { data })
    }
}

/// Column means of an embedding matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanVector {
    pub values: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Divide by `N`.
    #[default]
    Population,
    /// Divide by `N - 1`.
    Sample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    pub values: Array2<f64>,
    pub normalization: Normalization,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub values: Array2<f64>,
    /// Per-dimension standard deviations used for standardization.
    pub source_stddevs: Array1<f64>,
}

/// Canonical symmetric eigendecomposition `M = V diag(values) V^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    /// Columns are eigenvectors.
    pub eigenvectors: Array2<f64>,
    /// Sorted descending.
    pub eigenvalues: Array1<f64>,
}

/// Lower-triangular `L` with `L L^T = M`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    pub lower: Array2<f64>,
}

pub fn compute_mean(x: &EmbeddingMatrix) -> MeanVector {
    let n = x.nrows() as f64;
    let values = x.view().sum_axis(Axis(0)) / n;
    MeanVector { values }
}

/// `X - 1 mu^T`.
pub(crate) fn center(x: ArrayView2<'_, f64>, mean: ArrayView1<'_, f64>) -> Array2<f64> {
    &x - &mean.insert_axis(Axis(0))
}

pub fn compute_covariance(
    x: &EmbeddingMatrix,
    normalization: Normalization,
) -> Result<CovarianceMatrix> {
    let n = x.nrows();
    let denom = match normalization {
        Normalization::Population => n as f64,
        Normalization::Sample => {
            if n < 2 {
                return Err(Error::invalid(
                    "sample covariance needs at least two rows",
                ));
            }
            (n - 1) as f64
        }
    };
    let mean = compute_mean(x);
    let centered = center(x.view(), mean.values.view());
    let mut values = centered.t().dot(&centered) / denom;
    symmetrize(&mut values);
    Ok(CovarianceMatrix {
        values,
        normalization,
    })
}

/// Correlation matrix `D^-1/2 Sigma D^-1/2` of the population covariance.
pub fn compute_correlation(x: &EmbeddingMatrix) -> Result<CorrelationMatrix> {
    let cov = compute_covariance(x, Normalization::Population)?;
    correlation_from_covariance(&cov.values)
}

pub(crate) fn correlation_from_covariance(cov: &Array2<f64>) -> Result<CorrelationMatrix> {
    let stddevs = cov.diag().mapv(|v| v.max(0.0).sqrt());
    let max_sd = stddevs.fold(0.0_f64, |m, &v| m.max(v));
    if let Some(column) = stddevs
        .iter()
        .position(|&s| !(s > DEGENERATE_STDDEV_RATIO * max_sd) || s == 0.0)
    {
        return Err(Error::DegenerateDimension { column });
    }
    let d = cov.nrows();
    let mut values = Array2::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            values[[i, j]] = if i == j {
                1.0
            } else {
                cov[[i, j]] / (stddevs[i] * stddevs[j])
            };
        }
    }
    symmetrize(&mut values);
    Ok(CorrelationMatrix {
        values,
        source_stddevs: stddevs,
    })
}

/// Replaces `m` with `(m + m^T) / 2`.
pub(crate) fn symmetrize(m: &mut Array2<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (m[[i, j]] + m[[j, i]]);
            m[[i, j]] = avg;
            m[[j, i]] = avg;
        }
    }
}

fn max_abs(m: &Array2<f64>) -> f64 {
    m.fold(0.0_f64, |acc, &v| acc.max(v.abs()))
}

fn check_square_symmetric(m: &Array2<f64>) -> Result<()> {
    let (r, c) = m.dim();
    if r != c || r == 0 {
        return Err(Error::invalid(format!(
            "expected a non-empty square matrix, got {r}x{c}"
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let tol = SYMMETRY_TOL * max_abs(m);
    for i in 0..r {
        for j in (i + 1)..r {
            if (m[[i, j]] - m[[j, i]]).abs() > tol {
                return Err(Error::invalid(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Symmetric eigendecomposition by Householder tridiagonalization followed by
/// implicit QL iterations.
pub fn sym_eig(m: &Array2<f64>) -> Result<SymmetricEigen> {
    check_square_symmetric(m)?;
    let n = m.nrows();
    let mut sym = m.clone();
    symmetrize(&mut sym);

    let mut v: Vec<f64> = sym.iter().copied().collect();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(n, &mut v, &mut d, &mut e);
    tridiagonal_ql(n, &mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]));

    let mut eigenvectors = Array2::zeros((n, n));
    let mut eigenvalues = Array1::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        eigenvalues[col] = d[src];
        let mut pivot = 0;
        for k in 1..n {
            if v[k * n + src].abs() > v[pivot * n + src].abs() {
                pivot = k;
            }
        }
        let sign = if v[pivot * n + src] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            eigenvectors[[k, col]] = sign * v[k * n + src];
        }
    }
    Ok(SymmetricEigen {
        eigenvectors,
        eigenvalues,
    })
}

// Householder reduction to tridiagonal form. On exit `v` holds the
// accumulated orthogonal transform (row-major n x n), `d` the diagonal and
// `e[1..]` the sub-diagonal.
fn tridiagonalize(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let at = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in &d[..i] {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for dk in &mut d[..i] {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in &mut e[..i] {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n.saturating_sub(1) {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

// Implicit QL on the tridiagonal matrix, accumulating rotations into `v`.
fn tridiagonal_ql(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let at = |i: usize, j: usize| i * n + j;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let eps = f64::EPSILON;
    let max_iter = 64 * n.max(8);
    let mut f = 0.0;
    let mut tst1 = 0.0_f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > max_iter {
                    return Err(Error::Internal(
                        "eigenvalue iteration did not converge".into(),
                    ));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in &mut d[(l + 2)..n] {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[at(k, i + 1)];
                        v[at(k, i + 1)] = s * v[at(k, i)] + c * h;
                        v[at(k, i)] = c * v[at(k, i)] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Cholesky factorization of a symmetric positive-definite matrix.
pub fn cholesky_spd(m: &Array2<f64>) -> Result<CholeskyFactor> {
    check_square_symmetric(m)?;
    let n = m.nrows();
    let mut lower = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut diag = m[[j, j]];
        for k in 0..j {
            diag -= lower[[j, k]] * lower[[j, k]];
        }
        if !(diag > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let ljj = diag.sqrt();
        lower[[j, j]] = ljj;
        for i in (j + 1)..n {
            let mut s = m[[i, j]];
            for k in 0..j {
                s -= lower[[i, k]] * lower[[j, k]];
            }
            lower[[i, j]] = s / ljj;
        }
    }
    Ok(CholeskyFactor { lower })
}

/// Projects the centered data onto its top `k` principal axes.
pub fn pca_project(x: &EmbeddingMatrix, k: usize) -> Result<EmbeddingMatrix> {
    let d = x.ncols();
    if k == 0 || k > d {
        return Err(Error::invalid(format!(
            "projection rank must be in 1..={d}, got {k}"
        )));
    }
    let mean = compute_mean(x);
    let cov = compute_covariance(x, Normalization::Population)?;
    let eig = sym_eig(&cov.values)?;
    let basis = eig.eigenvectors.slice(ndarray::s![.., ..k]);
    let projected = center(x.view(), mean.values.view()).dot(&basis);
    EmbeddingMatrix::new(projected)
}

/// Solves `A X = B` by LU decomposition with partial pivoting.
pub fn solve(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::invalid(format!(
            "solve shape mismatch: A is {:?}, B is {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let mut lu = a.clone();
    let mut x = b.clone();
    let scale = max_abs(a);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| lu[[i, col]].abs().total_cmp(&lu[[j, col]].abs()))
            .unwrap_or(col);
        if !(lu[[pivot, col]].abs() > f64::EPSILON * scale * n as f64) {
            return Err(Error::Internal(format!("singular matrix at column {col}")));
        }
        if pivot != col {
            for j in 0..n {
                lu.swap([pivot, j], [col, j]);
            }
            for j in 0..x.ncols() {
                x.swap([pivot, j], [col, j]);
            }
        }
        let p = lu[[col, col]];
        for i in (col + 1)..n {
            let factor = lu[[i, col]] / p;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                lu[[i, j]] -= factor * lu[[col, j]];
            }
            for j in 0..x.ncols() {
                x[[i, j]] -= factor * x[[col, j]];
            }
        }
    }
    for col in (0..n).rev() {
        let p = lu[[col, col]];
        for j in 0..x.ncols() {
            let mut s = x[[col, j]];
            for k in (col + 1)..n {
                s -= lu[[col, k]] * x[[k, j]];
            }
            x[[col, j]] = s / p;
        }
    }
    Ok(x)
}

pub fn invert(a: &Array2<f64>) -> Result<Array2<f64>> {
    solve(a, &Array2::eye(a.nrows()))
}

/// Least-squares `Q` minimizing `||A Q - B||_F` via the normal equations.
pub fn least_squares(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    let mut gram = a.t().dot(a);
    symmetrize(&mut gram);
    solve(&gram, &a.t().dot(b))
}
