//! Thin SVD by one-sided (Hestenes) Jacobi rotations, and the Moore-Penrose
//! pseudoinverse built on it.

use crate::error::{Error, Result};
use crate::numerics::matrix::{dot, Matrix};

/// Default relative cut-off: singular values below `DEFAULT_PINV_TOL · σ_max`
/// are treated as zero.
pub const DEFAULT_PINV_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 80;
const ORTHO_EPS: f64 = 1e-15;

/// `A = U · diag(σ) · Vᵀ` with `U` m×r, `V` n×r, `r = min(m, n)`.
/// Singular values are sorted in decreasing order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

/// Computes the thin SVD of `a`.
pub fn svd(a: &Matrix) -> Result<Svd> {
    if !a.is_finite() {
        return Err(Error::Numerical(
            "svd input contains non-finite entries".into(),
        ));
    }
    if a.rows() >= a.cols() {
        jacobi_tall(a)
    } else {
        // Aᵀ = U Σ Vᵀ  ⇒  A = V Σ Uᵀ
        let t = jacobi_tall(&a.transpose())?;
        Ok(Svd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        })
    }
}

/// Rotates the columns of a tall matrix until they are mutually orthogonal.
fn jacobi_tall(a: &Matrix) -> Result<Svd> {
    let (m, n) = a.shape();
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..m).map(|i| a.get(i, j)).collect())
        .collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= ORTHO_EPS * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut vcols, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "jacobi svd did not converge within {MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));

    let mut u = Matrix::zeros(m, n);
    let mut v = Matrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        let s = norms[j];
        sigma.push(s);
        if s > 0.0 {
            for i in 0..m {
                u.set(i, k, cols[j][i] / s);
            }
        }
        for i in 0..n {
            v.set(i, k, vcols[j][i]);
        }
    }
    Ok(Svd { u, sigma, v })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let cp = &mut left[p];
    let cq = &mut right[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Moore-Penrose pseudoinverse. Singular values below `tol · σ_max` are
/// dropped. The result has the transposed shape of `h`.
pub fn pinv(h: &Matrix, tol: f64) -> Result<Matrix> {
    if !(tol > 0.0) {
        return Err(Error::InvalidRequest(format!(
            "pinv tolerance must be positive, got {tol}"
        )));
    }
    let (m, n) = h.shape();
    let d = svd(h)?;
    let mut out = Matrix::zeros(n, m);
    let smax = d.sigma.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(out);
    }
    let cutoff = tol * smax;
    for (k, &s) in d.sigma.iter().enumerate() {
        if s <= cutoff {
            continue;
        }
        let inv = 1.0 / s;
        for i in 0..n {
            let vik = d.v.get(i, k) * inv;
            if vik == 0.0 {
                continue;
            }
            let row = out.row_mut(i);
            for (j, r) in row.iter_mut().enumerate() {
                *r += vik * d.u.get(j, k);
            }
        }
    }
    Ok(out)
}

/// Numerical rank: number of singular values above `tol · σ_max`.
pub fn rank(h: &Matrix, tol: f64) -> Result<usize> {
    let d = svd(h)?;
    let smax = d.sigma.first().copied().unwrap_or(0.0);
    Ok(d.sigma
        .iter()
        .filter(|&&s| smax > 0.0 && s > tol * smax)
        .count())
}
