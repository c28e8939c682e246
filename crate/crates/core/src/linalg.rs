//! Small dense linear algebra on fiber matrices and exterior powers.
//!
//! Path-level matrices live on the stack (`FiberMatrix`); anything that needs
//! an eigen- or singular-value decomposition goes through nalgebra.

use nalgebra::DMatrix;

use crate::geometry::{SquareMatrix, MAX_DIM};

/// Largest fiber rank: `C(4, 2)` two-forms in dimension four.
pub const MAX_RANK: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiberMatrix {
    pub n: usize,
    pub a: [[f64; MAX_RANK]; MAX_RANK],
}

impl FiberMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!(n <= MAX_RANK, "fiber rank {n} exceeds {MAX_RANK}");
        FiberMatrix {
            n,
            a: [[0.0; MAX_RANK]; MAX_RANK],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i][i] = 1.0;
        }
        m
    }

    pub fn from_dmatrix(d: &DMatrix<f64>) -> Self {
        assert_eq!(d.nrows(), d.ncols());
        let mut m = Self::zeros(d.nrows());
        for i in 0..m.n {
            for j in 0..m.n {
                m.a[i][j] = d[(i, j)];
            }
        }
        m
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.a[i][j])
    }

    #[inline]
    pub fn mul(&self, rhs: &FiberMatrix) -> FiberMatrix {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let x = self.a[i][k];
                if x == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.a[i][j] += x * rhs.a[k][j];
                }
            }
        }
        out
    }

    #[inline]
    pub fn scale(&mut self, s: f64) {
        for row in self.a.iter_mut().take(self.n) {
            for x in row.iter_mut().take(self.n) {
                *x *= s;
            }
        }
    }

    #[inline]
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            out[i] = (0..self.n).map(|j| self.a[i][j] * v[j]).sum();
        }
    }

    pub fn transpose(&self) -> FiberMatrix {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.a[i][j] = self.a[j][i];
            }
        }
        t
    }

    pub fn is_finite(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.a[i][j].is_finite()))
    }

    pub fn max_abs_diff(&self, other: &FiberMatrix) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                d = d.max((self.a[i][j] - other.a[i][j]).abs());
            }
        }
        d
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        if self.n == 1 {
            return self.a[0][0].abs();
        }
        spectral_norm(&self.to_dmatrix())
    }
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// `exp(s * A)` for symmetric `A`, by eigendecomposition.
pub fn sym_exp(a: &DMatrix<f64>, s: f64) -> DMatrix<f64> {
    let eig = a.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| (s * l).exp()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.clone().symmetric_eigen().eigenvalues.min()
}

pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    (a - a.transpose()).abs().max()
}

/// Multi-indices `i_1 < ... < i_p` in `0..n`, lexicographic.
pub fn subsets(n: usize, p: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, p: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == p {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, p, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, p, &mut Vec::with_capacity(p), &mut out);
    out
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn det_small(m: &[[f64; MAX_DIM]; MAX_DIM], k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        _ => {
            let mut total = 0.0;
            for c in 0..k {
                let mut minor = [[0.0; MAX_DIM]; MAX_DIM];
                for i in 1..k {
                    let mut cj = 0;
                    for j in 0..k {
                        if j != c {
                            minor[i - 1][cj] = m[i][j];
                            cj += 1;
                        }
                    }
                }
                let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                total += sign * m[0][c] * det_small(&minor, k - 1);
            }
            total
        }
    }
}

/// `p`-th compound matrix: entry `(I, J)` is the minor `det A[I, J]`.
pub fn compound(a: &SquareMatrix, basis: &[Vec<usize>]) -> FiberMatrix {
    let mut out = FiberMatrix::zeros(basis.len());
    for (r, rows) in basis.iter().enumerate() {
        for (c, cols) in basis.iter().enumerate() {
            let mut sub = [[0.0; MAX_DIM]; MAX_DIM];
            for (i, &ri) in rows.iter().enumerate() {
                for (j, &cj) in cols.iter().enumerate() {
                    sub[i][j] = a[ri][cj];
                }
            }
            out.a[r][c] = det_small(&sub, rows.len());
        }
    }
    out
}

/// Sorts a multi-index, returning its permutation sign, or `None` on a repeat.
fn sort_with_sign(idx: &mut [usize]) -> Option<f64> {
    let mut sign = 1.0;
    for i in 1..idx.len() {
        let mut j = i;
        while j > 0 && idx[j - 1] > idx[j] {
            idx.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    if idx.windows(2).any(|w| w[0] == w[1]) {
        None
    } else {
        Some(sign)
    }
}

/// Derivation extension of `A` to `p`-vectors:
/// `A(e_1 ∧ ... ∧ e_p) = Σ_k e_1 ∧ ... ∧ A e_k ∧ ... ∧ e_p`.
pub fn derivation(a: &SquareMatrix, n: usize, basis: &[Vec<usize>]) -> FiberMatrix {
    let mut out = FiberMatrix::zeros(basis.len());
    for (c, cols) in basis.iter().enumerate() {
        for k in 0..cols.len() {
            for i in 0..n {
                let coef = a[i][cols[k]];
                if coef == 0.0 {
                    continue;
                }
                let mut idx = cols.clone();
                idx[k] = i;
                if let Some(sign) = sort_with_sign(&mut idx) {
                    let r = basis
                        .iter()
                        .position(|b| *b == idx)
                        .expect("sorted multi-index is a basis element");
                    out.a[r][c] += sign * coef;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rotation(theta: f64) -> SquareMatrix {
        let mut r = [[0.0; MAX_DIM]; MAX_DIM];
        let (s, c) = theta.sin_cos();
        r[0][0] = c;
        r[0][1] = -s;
        r[1][0] = s;
        r[1][1] = c;
        r[2][2] = 1.0;
        r
    }

    #[test]
    fn subset_counts_match_binomials() {
        for n in 1..=4 {
            for p in 0..=n {
                assert_eq!(subsets(n, p).len(), binomial(n, p));
            }
        }
        assert_eq!(subsets(3, 2), vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
    }

    #[test]
    fn compound_of_rotation_is_orthogonal_and_multiplicative() {
        let basis = subsets(3, 2);
        let a = rotation(0.3);
        let b = rotation(-1.1);
        let mut ab = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..3 {
            for j in 0..3 {
                ab[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        let ca = compound(&a, &basis);
        let cb = compound(&b, &basis);
        let cab = compound(&ab, &basis);
        assert!(ca.mul(&cb).max_abs_diff(&cab) < 1e-14);
        let ident = ca.mul(&ca.transpose());
        assert!(ident.max_abs_diff(&FiberMatrix::identity(3)) < 1e-14);
    }

    #[test]
    fn derivation_of_projector_counts_normal_indices() {
        let mut p = [[0.0; MAX_DIM]; MAX_DIM];
        p[1][1] = 1.0;
        let basis = subsets(3, 2);
        let d = derivation(&p, 3, &basis);
        // {0,1} and {1,2} contain index 1
        assert_eq!(d.a[0][0], 1.0);
        assert_eq!(d.a[1][1], 0.0);
        assert_eq!(d.a[2][2], 1.0);
    }

    #[test]
    fn derivation_of_identity_is_degree() {
        let mut id = [[0.0; MAX_DIM]; MAX_DIM];
        for (i, row) in id.iter_mut().enumerate().take(4) {
            row[i] = 1.0;
        }
        let basis = subsets(4, 3);
        let d = derivation(&id, 4, &basis);
        let mut expect = FiberMatrix::identity(4);
        expect.scale(3.0);
        assert!(d.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn sym_exp_of_diagonal() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 3.0]));
        let e = sym_exp(&a, -0.5);
        assert_abs_diff_eq!(e[(0, 0)], (-0.5f64).exp(), epsilon = 1e-14);
        assert_abs_diff_eq!(e[(1, 1)], (-1.5f64).exp(), epsilon = 1e-14);
        assert_abs_diff_eq!(e[(0, 1)], 0.0, epsilon = 1e-14);
    }
}
