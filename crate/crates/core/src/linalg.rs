//! Small structured solvers used by the forward model and the smoother.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Factorization of the symmetric tridiagonal matrix `I − r·A`, where `A` is the
/// second-difference matrix (−2 on the diagonal, 1 off it). Diagonally dominant for
/// any r > 0, so the Thomas elimination never pivots.
#[derive(Debug, Clone)]
pub struct ImplicitDiffusionFactor {
    r: f64,
    /// Reciprocal pivots of the forward elimination.
    inv_pivot: Vec<f64>,
    /// Modified super-diagonal `c'_i` of the Thomas algorithm.
    upper: Vec<f64>,
}

impl ImplicitDiffusionFactor {
    pub fn new(n: usize, r: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::numerical(format!(
                "implicit diffusion step needs eta*lambda > 0, got {r}"
            )));
        }
        if n == 0 {
            return Err(Error::config("empty tridiagonal system"));
        }
        let diag = 1.0 + 2.0 * r;
        let off = -r;
        let mut inv_pivot = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        let mut prev_upper = 0.0;
        for i in 0..n {
            let pivot = if i == 0 { diag } else { diag - off * prev_upper };
            let ip = 1.0 / pivot;
            inv_pivot.push(ip);
            prev_upper = off * ip;
            upper.push(prev_upper);
        }
        Ok(ImplicitDiffusionFactor {
            r,
            inv_pivot,
            upper,
        })
    }

    pub fn dim(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Overwrites `x` (the right-hand side) with `(I − rA)⁻¹ x`.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        let off = -self.r;
        x[0] *= self.inv_pivot[0];
        for i in 1..n {
            x[i] = (x[i] - off * x[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.upper[i] * x[i + 1];
        }
    }
}

/// Symmetric banded matrix with half-bandwidth 2, stored by diagonals:
/// `d0[i] = M[i][i]`, `d1[i] = M[i][i+1]`, `d2[i] = M[i][i+2]`.
#[derive(Debug, Clone)]
pub struct SymPentadiagonal {
    pub d0: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

impl SymPentadiagonal {
    pub fn zeros(n: usize) -> Self {
        SymPentadiagonal {
            d0: vec![0.0; n],
            d1: vec![0.0; n.saturating_sub(1)],
            d2: vec![0.0; n.saturating_sub(2)],
        }
    }

    pub fn dim(&self) -> usize {
        self.d0.len()
    }

    /// Solves `M x = b` via an LDLᵀ factorization; fails if a pivot is not positive.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::numerical("pentadiagonal rhs length mismatch"));
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        // L has unit diagonal with sub-diagonals l1 (i, i-1) and l2 (i, i-2).
        let mut d = vec![0.0; n];
        let mut l1 = vec![0.0; n];
        let mut l2 = vec![0.0; n];
        for i in 0..n {
            if i >= 2 {
                l2[i] = self.d2[i - 2] / d[i - 2];
            }
            if i >= 1 {
                let mut v = self.d1[i - 1];
                if i >= 2 {
                    v -= l2[i] * d[i - 2] * l1[i - 1];
                }
                l1[i] = v / d[i - 1];
            }
            let mut di = self.d0[i];
            if i >= 1 {
                di -= l1[i] * l1[i] * d[i - 1];
            }
            if i >= 2 {
                di -= l2[i] * l2[i] * d[i - 2];
            }
            if !(di > 0.0) || !di.is_finite() {
                return Err(Error::numerical(format!(
                    "pentadiagonal system not positive definite at row {i}"
                )));
            }
            d[i] = di;
        }
        let mut y = b.to_vec();
        for i in 0..n {
            if i >= 1 {
                y[i] -= l1[i] * y[i - 1];
            }
            if i >= 2 {
                y[i] -= l2[i] * y[i - 2];
            }
        }
        for i in 0..n {
            y[i] /= d[i];
        }
        for i in (0..n).rev() {
            if i + 1 < n {
                y[i] -= l1[i + 1] * y[i + 1];
            }
            if i + 2 < n {
                y[i] -= l2[i + 2] * y[i + 2];
            }
        }
        Ok(y)
    }
}

/// Lower-triangular n×n matrix whose columns j ≥ 1 are shifted copies of one kernel:
/// `M[i][0] = first_col[i]`, `M[i][j] = kernel[i − j]` for 1 ≤ j ≤ i, zero above the
/// diagonal. The boundary-to-flux operators have exactly this shape.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerToeplitzOperator {
    pub first_col: Vec<f64>,
    pub kernel: Vec<f64>,
}

impl LowerToeplitzOperator {
    pub fn dim(&self) -> usize {
        self.first_col.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j == 0 {
            self.first_col[i]
        } else if j <= i {
            self.kernel[i - j]
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    pub fn scaled(&self, s: f64) -> Self {
        LowerToeplitzOperator {
            first_col: self.first_col.iter().map(|v| v * s).collect(),
            kernel: self.kernel.iter().map(|v| v * s).collect(),
        }
    }

    /// `M v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        debug_assert_eq!(v.len(), n);
        (0..n)
            .map(|i| {
                let mut acc = self.first_col[i] * v[0];
                for j in 1..=i {
                    acc += self.kernel[i - j] * v[j];
                }
                acc
            })
            .collect()
    }

    /// `Mᵀ v`.
    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        debug_assert_eq!(v.len(), n);
        (0..n)
            .map(|j| {
                if j == 0 {
                    self.first_col.iter().zip(v).map(|(a, b)| a * b).sum()
                } else {
                    (j..n).map(|i| self.kernel[i - j] * v[i]).sum()
                }
            })
            .collect()
    }

    /// Accumulates `scale · Xᵀ Y` into `out` in O(n²), using
    /// `(XᵀY)[a][b] = (XᵀY)[a+1][b+1] + x(n−1−a)·y(n−1−b)` for a, b ≥ 1.
    pub fn add_cross_gram(x: &Self, y: &Self, scale: f64, out: &mut DMatrix<f64>) {
        let n = x.dim();
        debug_assert_eq!(y.dim(), n);
        debug_assert_eq!(out.nrows(), n);
        if n == 0 {
            return;
        }
        let xk = &x.kernel;
        let yk = &y.kernel;
        let mut z = DMatrix::<f64>::zeros(n, n);
        if n > 1 {
            // Last row and column of the Toeplitz block.
            for b in 1..n {
                z[(n - 1, b)] = xk[0] * yk[n - 1 - b];
            }
            for a in 1..n - 1 {
                z[(a, n - 1)] = xk[n - 1 - a] * yk[0];
            }
            for a in (1..n - 1).rev() {
                for b in (1..n - 1).rev() {
                    z[(a, b)] = z[(a + 1, b + 1)] + xk[n - 1 - a] * yk[n - 1 - b];
                }
            }
        }
        // Terms involving the special first columns.
        z[(0, 0)] = x.first_col.iter().zip(&y.first_col).map(|(a, b)| a * b).sum();
        for b in 1..n {
            z[(0, b)] = (b..n).map(|i| x.first_col[i] * yk[i - b]).sum();
        }
        for a in 1..n {
            z[(a, 0)] = (a..n).map(|i| xk[i - a] * y.first_col[i]).sum();
        }
        *out += z * scale;
    }
}

/// Cholesky factor with the log-determinant of the factored matrix.
pub fn cholesky_logdet(m: DMatrix<f64>) -> Option<(nalgebra::Cholesky<f64, nalgebra::Dyn>, f64)> {
    let chol = m.cholesky()?;
    let l = chol.l_dirty();
    let mut logdet = 0.0;
    for i in 0..l.nrows() {
        let d = l[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        logdet += 2.0 * d.ln();
    }
    Some((chol, logdet))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn to_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Maximum of |mᵢⱼ − mⱼᵢ|.
pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn implicit_factor_matches_hand_inverse() {
        // (I − A) for two unknowns is [[3, −1], [−1, 3]].
        let f = ImplicitDiffusionFactor::new(2, 1.0).unwrap();
        let mut x = vec![1.0, 0.0];
        f.solve_in_place(&mut x);
        assert!((x[0] - 3.0 / 8.0).abs() < 1e-15);
        assert!((x[1] - 1.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn implicit_factor_rejects_nonpositive_r() {
        assert!(ImplicitDiffusionFactor::new(4, 0.0).is_err());
        assert!(ImplicitDiffusionFactor::new(4, -1.0).is_err());
    }

    #[test]
    fn pentadiagonal_matches_dense_solve() {
        let n = 9;
        let mut m = SymPentadiagonal::zeros(n);
        for i in 0..n {
            m.d0[i] = 6.0 + i as f64 * 0.1;
        }
        for i in 0..n - 1 {
            m.d1[i] = -2.0 + 0.05 * i as f64;
        }
        for i in 0..n - 2 {
            m.d2[i] = 0.7;
        }
        let dense = DMatrix::from_fn(n, n, |i, j| {
            let k = i.abs_diff(j);
            let lo = i.min(j);
            match k {
                0 => m.d0[i],
                1 => m.d1[lo],
                2 => m.d2[lo],
                _ => 0.0,
            }
        });
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = m.solve(&b).unwrap();
        let r = &dense * DVector::from_column_slice(&x) - DVector::from_column_slice(&b);
        assert!(r.amax() < 1e-12);
    }

    #[test]
    fn toeplitz_gram_matches_dense() {
        let n = 7;
        let x = LowerToeplitzOperator {
            first_col: (0..n).map(|i| 1.0 + i as f64).collect(),
            kernel: (0..n).map(|i| (0.3 * i as f64).cos()).collect(),
        };
        let y = LowerToeplitzOperator {
            first_col: (0..n).map(|i| -(i as f64) * 0.5).collect(),
            kernel: (0..n).map(|i| 2.0 / (1.0 + i as f64)).collect(),
        };
        let mut z = DMatrix::zeros(n, n);
        LowerToeplitzOperator::add_cross_gram(&x, &y, 2.0, &mut z);
        let expect = x.to_dense().transpose() * y.to_dense() * 2.0;
        assert!((z - expect).amax() < 1e-12);

        let v: Vec<f64> = (0..n).map(|i| (i as f64).sqrt()).collect();
        let dv = DVector::from_column_slice(&v);
        let a = x.apply(&v);
        let at = x.apply_transpose(&v);
        assert!((DVector::from_vec(a) - x.to_dense() * &dv).amax() < 1e-12);
        assert!((DVector::from_vec(at) - x.to_dense().transpose() * &dv).amax() < 1e-12);
    }
}
