//! Small dense complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{MedError, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(m: usize) -> CMat {
    CMat::identity(m, m)
}

/// `(A + A†) / 2`.
pub fn hermitize(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

/// Frobenius norm of `(A − A†) / 2`.
pub fn anti_hermitian_norm(a: &CMat) -> f64 {
    (a - a.adjoint()).scale(0.5).norm()
}

/// Largest entrywise deviation from hermiticity.
pub fn hermiticity_defect(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Hilbert–Schmidt (Frobenius) norm.
pub fn hs_norm(a: &CMat) -> f64 {
    a.norm()
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

pub fn trace_re(a: &CMat) -> f64 {
    a.trace().re
}

/// Eigendecomposition of the hermitian part of `a`, eigenvalues ascending.
pub fn eigh(a: &CMat) -> (DVector<f64>, CMat) {
    let eig = SymmetricEigen::new(hermitize(a));
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn eigvalsh(a: &CMat) -> DVector<f64> {
    eigh(a).0
}

pub fn min_eig(a: &CMat) -> f64 {
    let vals = eigvalsh(a);
    vals.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Applies `func` to the spectrum of a hermitian matrix.
pub fn hermitian_function(a: &CMat, func: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = eigh(a);
    let n = a.nrows();
    let mut scaled = vecs.clone();
    for j in 0..n {
        let f = func(vals[j]);
        for i in 0..n {
            scaled[(i, j)] *= f;
        }
    }
    &scaled * vecs.adjoint()
}

/// Principal square root of a positive-definite hermitian matrix.
///
/// Fails with `NearLinearDependence` when the smallest eigenvalue is at or
/// below `floor`.
pub fn sqrtm_pd(a: &CMat, floor: f64) -> Result<CMat> {
    check_pd(a, floor)?;
    Ok(hermitian_function(a, f64::sqrt))
}

/// Inverse of the principal square root.
pub fn inv_sqrtm_pd(a: &CMat, floor: f64) -> Result<CMat> {
    check_pd(a, floor)?;
    Ok(hermitian_function(a, |x| 1.0 / x.sqrt()))
}

fn check_pd(a: &CMat, floor: f64) -> Result<()> {
    let lo = min_eig(a);
    if lo <= floor {
        return Err(MedError::NearLinearDependence {
            quantity: "minimum eigenvalue",
            value: lo,
            threshold: floor,
        });
    }
    Ok(())
}

/// Max-entry deviation of `U†U` from the identity.
pub fn unitarity_residual(u: &CMat) -> f64 {
    let n = u.ncols();
    max_abs(&(u.adjoint() * u - identity(n)))
}

/// Unitary factor of the polar decomposition `A = W P`.
pub fn polar_unitary(a: &CMat) -> CMat {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    u * v_t
}

pub fn inverse(a: &CMat) -> Option<CMat> {
    a.clone().try_inverse()
}

/// Conjugates every column phase so the diagonal becomes real non-negative.
pub fn fix_diagonal_phases(a: &CMat) -> CMat {
    let mut out = a.clone();
    for j in 0..a.ncols() {
        let d = a[(j, j)];
        if d.norm() > 0.0 {
            let phase = d.conj() / d.norm();
            for i in 0..a.nrows() {
                out[(i, j)] *= phase;
            }
        }
    }
    out
}

/// Outer product `|x⟩⟨y|`.
pub fn outer(x: &CVec, y: &CVec) -> CMat {
    x * y.adjoint()
}

/// Builds a complex matrix from row-major real and imaginary parts.
pub fn from_parts(re: &[Vec<f64>], im: Option<&[Vec<f64>]>) -> std::result::Result<CMat, String> {
    let rows = re.len();
    let cols = re.first().map_or(0, Vec::len);
    if re.iter().any(|r| r.len() != cols) {
        return Err("real part rows have unequal lengths".into());
    }
    if let Some(im) = im {
        if im.len() != rows || im.iter().any(|r| r.len() != cols) {
            return Err("imaginary part shape differs from real part".into());
        }
    }
    Ok(CMat::from_fn(rows, cols, |i, j| {
        c(re[i][j], im.map_or(0.0, |im| im[i][j]))
    }))
}

/// Splits a complex matrix into row-major real and imaginary parts.
pub fn to_parts(a: &CMat) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let re = (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)].re).collect())
        .collect();
    let im = (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)].im).collect())
        .collect();
    (re, im)
}

/// 1-norm condition number of a real square matrix, `None` when singular.
pub fn condition_1norm(a: &RMat) -> Option<f64> {
    let inv = a.clone().try_inverse()?;
    Some(one_norm(a) * one_norm(&inv))
}

fn one_norm(a: &RMat) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
