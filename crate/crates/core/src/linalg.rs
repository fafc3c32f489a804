//! Small dense linear algebra helpers: complex solves with pivot diagnostics,
//! and determinant / inverse of matrices whose entries are power-series jets.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::ljet::LaurentJet;
use crate::{Error, Result};

/// Square matrix of jets, row-major.
pub type JetMatrix = Vec<Vec<LaurentJet>>;

/// Smallest eigenvalue of a Hermitian matrix.
pub fn hermitian_min_eigenvalue(h: &DMatrix<Complex64>) -> f64 {
    if h.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
    sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Result of a square solve by LU with partial pivoting.
#[derive(Debug, Clone)]
pub struct LuSolve {
    pub x: DVector<Complex64>,
    /// Smallest over largest pivot magnitude.
    pub pivot_ratio: f64,
}

/// Ratio of smallest to largest pivot of the LU factorization of `a`.
pub fn pivot_ratio(a: &DMatrix<Complex64>) -> f64 {
    if a.nrows() == 0 {
        return 1.0;
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let mags: Vec<f64> = u.diagonal().iter().map(|p| p.norm()).collect();
    let max = mags.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0.0;
    }
    mags.iter().copied().fold(f64::INFINITY, f64::min) / max
}

/// Solves `a x = b`, failing when the pivot ratio drops below `threshold`.
pub fn lu_solve(a: &DMatrix<Complex64>, b: &DVector<Complex64>, threshold: f64) -> Result<LuSolve> {
    let ratio = pivot_ratio(a);
    if ratio < threshold {
        return Err(Error::SingularSystem(format!("pivot ratio {ratio:.3e}")));
    }
    let x = a
        .clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::SingularSystem("LU solve failed".into()))?;
    Ok(LuSolve { x, pivot_ratio: ratio })
}

/// Least-squares solution of an overdetermined system via SVD.
pub fn least_squares(a: &DMatrix<Complex64>, b: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    let svd = a.clone().svd(true, true);
    svd.solve(b, 1e-13).map_err(|e| Error::SingularSystem(e.to_string()))
}

/// Singular values of `a`, descending.
pub fn singular_values(a: &DMatrix<Complex64>) -> Vec<f64> {
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

fn pivot_row(m: &JetMatrix, col: usize, from: usize) -> Option<usize> {
    let mut best = None;
    let mut best_mag = 0.0;
    for (r, row) in m.iter().enumerate().skip(from) {
        let mag = row[col].coeff_or_zero(0).norm();
        if mag > best_mag {
            best_mag = mag;
            best = Some(r);
        }
    }
    best
}

/// Determinant of a matrix of power series with invertible constant part.
///
/// Gaussian elimination pivots on the constant coefficients, so every pivot
/// is a unit in the power-series ring.
pub fn jet_det(m: &JetMatrix) -> Result<LaurentJet> {
    let dim = m.len();
    let trunc = m.iter().flatten().map(LaurentJet::trunc).min().unwrap_or(i32::MAX);
    if dim == 0 {
        return Ok(LaurentJet::one(trunc));
    }
    let mut a = m.clone();
    let mut det = LaurentJet::one(trunc);
    for col in 0..dim {
        let p = pivot_row(&a, col, col).ok_or(Error::LeadingZero)?;
        if p != col {
            a.swap(p, col);
            det = det.neg();
        }
        let pivot = a[col][col].clone();
        det = &det * &pivot;
        let inv = pivot.invert()?;
        for r in col + 1..dim {
            let f = &a[r][col] * &inv;
            if f.is_zero() {
                continue;
            }
            for c in col..dim {
                let upd = &f * &a[col][c];
                a[r][c] = &a[r][c] - &upd;
            }
        }
    }
    Ok(det)
}

/// Inverse of a matrix of power series with invertible constant part
/// (Gauss–Jordan with the same pivoting rule as [`jet_det`]).
pub fn jet_inverse(m: &JetMatrix) -> Result<JetMatrix> {
    let dim = m.len();
    let trunc = m.iter().flatten().map(LaurentJet::trunc).min().unwrap_or(0);
    let mut a = m.clone();
    let mut inv: JetMatrix = (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| if i == j { LaurentJet::one(trunc) } else { LaurentJet::zero(trunc) })
                .collect()
        })
        .collect();
    for col in 0..dim {
        let p = pivot_row(&a, col, col).ok_or(Error::LeadingZero)?;
        a.swap(p, col);
        inv.swap(p, col);
        let pinv = a[col][col].invert()?;
        for c in 0..dim {
            a[col][c] = &a[col][c] * &pinv;
            inv[col][c] = &inv[col][c] * &pinv;
        }
        for r in 0..dim {
            if r == col {
                continue;
            }
            let f = a[r][col].clone();
            if f.is_zero() {
                continue;
            }
            for c in 0..dim {
                let ua = &f * &a[col][c];
                a[r][c] = &a[r][c] - &ua;
                let ui = &f * &inv[col][c];
                inv[r][c] = &inv[r][c] - &ui;
            }
        }
    }
    Ok(inv)
}

/// Product of two jet matrices.
pub fn jet_matmul(a: &JetMatrix, b: &JetMatrix) -> JetMatrix {
    let n = a.len();
    let m = b.first().map_or(0, Vec::len);
    let k = b.len();
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let mut acc = &a[i][0] * &b[0][j];
                    for l in 1..k {
                        acc = &acc + &(&a[i][l] * &b[l][j]);
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sample(trunc: i32) -> JetMatrix {
        let e = |a: &[Complex64]| LaurentJet::polynomial(a, trunc);
        vec![
            vec![e(&[c(0.1, 0.0), c(1.0, 0.0)]), e(&[c(2.0, 0.5), c(0.0, 1.0)]), e(&[c(0.3, 0.0)])],
            vec![e(&[c(2.0, -0.5), c(0.2, 0.0)]), e(&[c(0.0, 0.0), c(1.0, 1.0)]), e(&[c(1.0, 0.0)])],
            vec![e(&[c(0.3, 0.0)]), e(&[c(1.0, 0.0), c(0.5, 0.0)]), e(&[c(3.0, 0.0), c(0.0, 2.0)])],
        ]
    }

    #[test]
    fn inverse_round_trip() {
        let m = sample(6);
        let inv = jet_inverse(&m).unwrap();
        let id = jet_matmul(&m, &inv);
        for (i, row) in id.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                let target = if i == j { LaurentJet::one(e.trunc()) } else { LaurentJet::zero(e.trunc()) };
                assert!(e.max_diff(&target) < 1e-12, "({i},{j}) {e:?}");
            }
        }
    }

    #[test]
    fn determinant_matches_cofactor_expansion_pointwise() {
        // a polynomial matrix evaluated at a small φ: det of values vs value of det
        let m = sample(12);
        let det = jet_det(&m).unwrap();
        let phi = 0.01;
        let vals = DMatrix::from_fn(3, 3, |i, j| m[i][j].eval(phi));
        let direct = vals.determinant();
        assert!((det.eval(phi) - direct).norm() < 1e-12 * (1.0 + direct.norm()));
    }

    #[test]
    fn singular_solve_is_reported() {
        let a = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)]);
        let b = DVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(lu_solve(&a, &b, 1e-8), Err(Error::SingularSystem(_))));
    }
}
