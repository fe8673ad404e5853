//! Dense Cholesky and pivoted symmetric-indefinite (Bunch–Kaufman) factorizations.

use super::dense::{axpy, dot, DenseMatrix};
use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `M = L·Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DenseMatrix,
}

impl Cholesky {
    /// Factor a symmetric positive definite matrix. Only the lower triangle is read.
    pub fn new(m: &DenseMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch { expected: m.rows(), got: m.cols() });
        }
        let n = m.rows();
        let mut l = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let s = m[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j]);
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::NotPositiveDefinite { pivot: i, value: s });
                    }
                    l[(i, i)] = s.sqrt();
                } else {
                    l[(i, j)] = s / l[(j, j)];
                }
            }
        }
        Ok(Cholesky { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn factor(&self) -> &DenseMatrix {
        &self.l
    }

    /// Solve `L y = b` in place.
    pub fn forward(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let row = self.l.row(i);
            b[i] = (b[i] - dot(&row[..i], &b[..i])) / row[i];
        }
    }

    /// Solve `Lᵀ x = y` in place.
    pub fn backward(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in (0..n).rev() {
            let xi = b[i] / self.l[(i, i)];
            b[i] = xi;
            let row = &self.l.row(i)[..i];
            axpy(-xi, row, &mut b[..i]);
        }
    }

    /// Overwrite `b` with `M⁻¹ b`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.forward(b);
        self.backward(b);
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: b.len() });
        }
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        Ok(x)
    }

    /// `L⁻¹ · X`, applied row-block-wise (each row of X is a right-hand-side component).
    pub fn forward_matrix(&self, x: &mut DenseMatrix) {
        let n = self.dim();
        assert_eq!(x.rows(), n);
        for i in 0..n {
            for k in 0..i {
                let lik = self.l[(i, k)];
                if lik != 0.0 {
                    let (ri, rk) = x.rows_mut2(i, k);
                    axpy(-lik, rk, ri);
                }
            }
            let inv = 1.0 / self.l[(i, i)];
            x.row_mut(i).iter_mut().for_each(|v| *v *= inv);
        }
    }

    /// `L⁻ᵀ · X`.
    pub fn backward_matrix(&self, x: &mut DenseMatrix) {
        let n = self.dim();
        assert_eq!(x.rows(), n);
        for i in (0..n).rev() {
            let inv = 1.0 / self.l[(i, i)];
            x.row_mut(i).iter_mut().for_each(|v| *v *= inv);
            for k in 0..i {
                let lik = self.l[(i, k)];
                if lik != 0.0 {
                    let (rk, ri) = x.rows_mut2(k, i);
                    axpy(-lik, ri, rk);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Pivot {
    One(f64),
    /// symmetric 2×2 block [[a, b], [b, c]]
    Two(f64, f64, f64),
}

/// `P·M·Pᵀ = L·D·Lᵀ` with 1×1 and 2×2 diagonal blocks.
#[derive(Debug, Clone)]
pub struct Ldlt {
    /// unit lower-triangular multipliers, stored strictly below the diagonal
    l: DenseMatrix,
    pivots: Vec<(usize, Pivot)>,
    /// row `i` of the factored matrix is row `perm[i]` of the input
    perm: Vec<usize>,
}

impl Ldlt {
    pub fn new(m: &DenseMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch { expected: m.rows(), got: m.cols() });
        }
        let n = m.rows();
        let alpha = (1.0 + 17f64.sqrt()) / 8.0;
        let scale = m.max_abs();
        let tiny = f64::EPSILON * (n.max(1) as f64) * scale;
        let mut a = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut pivots = Vec::new();

        let swap = |a: &mut DenseMatrix, perm: &mut Vec<usize>, p: usize, q: usize| {
            if p == q {
                return;
            }
            perm.swap(p, q);
            let (rp, rq) = a.rows_mut2(p, q);
            rp.swap_with_slice(rq);
            for i in 0..a.rows() {
                let t = a[(i, p)];
                a[(i, p)] = a[(i, q)];
                a[(i, q)] = t;
            }
        };

        let mut k = 0;
        while k < n {
            let akk = a[(k, k)].abs();
            let (mut r, mut lambda) = (k, 0.0f64);
            for i in k + 1..n {
                if a[(i, k)].abs() > lambda {
                    lambda = a[(i, k)].abs();
                    r = i;
                }
            }
            if akk.max(lambda) <= tiny {
                return Err(Error::Singular { pivot: k });
            }
            let two_by_two = if akk >= alpha * lambda {
                false
            } else {
                let mut sigma = 0.0f64;
                for j in k..n {
                    if j != r {
                        sigma = sigma.max(a[(j, r)].abs());
                    }
                }
                if akk * sigma >= alpha * lambda * lambda {
                    false
                } else if a[(r, r)].abs() >= alpha * sigma {
                    swap(&mut a, &mut perm, k, r);
                    false
                } else {
                    swap(&mut a, &mut perm, k + 1, r);
                    true
                }
            };

            if !two_by_two {
                let d = a[(k, k)];
                if d.abs() <= tiny {
                    return Err(Error::Singular { pivot: k });
                }
                let pivot_row: Vec<f64> = a.row(k)[k + 1..].to_vec();
                for i in k + 1..n {
                    let lik = a[(i, k)] / d;
                    if lik != 0.0 {
                        axpy(-lik, &pivot_row, &mut a.row_mut(i)[k + 1..]);
                    }
                    a[(i, k)] = lik;
                }
                pivots.push((k, Pivot::One(d)));
                k += 1;
            } else {
                let (d11, d21, d22) = (a[(k, k)], a[(k + 1, k)], a[(k + 1, k + 1)]);
                let det = d11 * d22 - d21 * d21;
                if det.abs() <= tiny * scale {
                    return Err(Error::Singular { pivot: k });
                }
                let row0: Vec<f64> = a.row(k)[k + 2..].to_vec();
                let row1: Vec<f64> = a.row(k + 1)[k + 2..].to_vec();
                for i in k + 2..n {
                    let (x0, x1) = (a[(i, k)], a[(i, k + 1)]);
                    let l0 = (x0 * d22 - x1 * d21) / det;
                    let l1 = (x1 * d11 - x0 * d21) / det;
                    let tail = &mut a.row_mut(i)[k + 2..];
                    axpy(-l0, &row0, tail);
                    axpy(-l1, &row1, tail);
                    a[(i, k)] = l0;
                    a[(i, k + 1)] = l1;
                }
                pivots.push((k, Pivot::Two(d11, d21, d22)));
                k += 2;
            }
        }
        Ok(Ldlt { l: a, pivots, perm })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Number of negative eigenvalues of the factored matrix (Sylvester inertia).
    pub fn negative_count(&self) -> usize {
        self.pivots
            .iter()
            .map(|(_, p)| match *p {
                Pivot::One(d) => usize::from(d < 0.0),
                Pivot::Two(a, b, c) => {
                    let det = a * c - b * b;
                    if det < 0.0 {
                        1
                    } else if a + c < 0.0 {
                        2
                    } else {
                        0
                    }
                }
            })
            .sum()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: b.len() });
        }
        let mut z: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        // L z' = z
        for &(k, piv) in &self.pivots {
            let width = match piv {
                Pivot::One(_) => 1,
                Pivot::Two(..) => 2,
            };
            for i in k + width..n {
                let mut s = 0.0;
                for c in k..k + width {
                    s += self.l[(i, c)] * z[c];
                }
                z[i] -= s;
            }
        }
        // D w = z'
        for &(k, piv) in &self.pivots {
            match piv {
                Pivot::One(d) => z[k] /= d,
                Pivot::Two(a, b, c) => {
                    let det = a * c - b * b;
                    let (z0, z1) = (z[k], z[k + 1]);
                    z[k] = (c * z0 - b * z1) / det;
                    z[k + 1] = (a * z1 - b * z0) / det;
                }
            }
        }
        // Lᵀ u = w
        for &(k, piv) in self.pivots.iter().rev() {
            let width = match piv {
                Pivot::One(_) => 1,
                Pivot::Two(..) => 2,
            };
            for c in k..k + width {
                let mut s = 0.0;
                for i in k + width..n {
                    s += self.l[(i, c)] * z[i];
                }
                z[c] -= s;
            }
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = z[i];
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::testing::{random_spd, random_symmetric, Lcg};

    fn rel_residual(m: &DenseMatrix, x: &[f64], b: &[f64]) -> f64 {
        let r = m.matvec(x).unwrap();
        let num: f64 = r.iter().zip(b).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        num / (m.frobenius_norm() * crate::linalg::norm2(x))
    }

    #[test]
    fn cholesky_identity() {
        let c = Cholesky::new(&DenseMatrix::identity(4)).unwrap();
        assert_eq!(c.factor(), &DenseMatrix::identity(4));
    }

    #[test]
    fn cholesky_hand_2x2() {
        let m = DenseMatrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 5.0]]).unwrap();
        let c = Cholesky::new(&m).unwrap();
        assert_eq!(c.factor().as_slice(), &[2.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn cholesky_random_30() {
        let mut rng = Lcg::new(7);
        let m = random_spd(30, &mut rng);
        let c = Cholesky::new(&m).unwrap();
        let llt = c.factor().matmul(&c.factor().transpose()).unwrap();
        assert!(llt.sub(&m).unwrap().frobenius_norm() <= 1e-12 * m.frobenius_norm());
        let b: Vec<f64> = (0..30).map(|_| rng.normal()).collect();
        let x = c.solve(&b).unwrap();
        assert!(rel_residual(&m, &x, &b) <= 1e-12);
    }

    #[test]
    fn cholesky_reports_pivot() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        match Cholesky::new(&m) {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn matrix_triangular_solves() {
        let mut rng = Lcg::new(3);
        let m = random_spd(9, &mut rng);
        let c = Cholesky::new(&m).unwrap();
        let mut x = random_symmetric(9, &mut rng);
        let orig = x.clone();
        c.forward_matrix(&mut x);
        c.backward_matrix(&mut x);
        let back = m.matmul(&x).unwrap();
        assert!(back.sub(&orig).unwrap().max_abs() < 1e-10 * orig.max_abs());
    }

    #[test]
    fn ldlt_indefinite_diag() {
        let m = DenseMatrix::from_diag(&[1.0, -1.0]);
        let f = Ldlt::new(&m).unwrap();
        assert_eq!(f.solve(&[2.0, 2.0]).unwrap(), vec![2.0, -2.0]);
        assert_eq!(f.negative_count(), 1);
    }

    #[test]
    fn ldlt_identity() {
        let f = Ldlt::new(&DenseMatrix::identity(5)).unwrap();
        let b = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(f.solve(&b).unwrap(), b.to_vec());
    }

    #[test]
    fn ldlt_needs_two_by_two_pivot() {
        let m = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let f = Ldlt::new(&m).unwrap();
        assert_eq!(f.solve(&[3.0, 5.0]).unwrap(), vec![5.0, 3.0]);
    }

    #[test]
    fn ldlt_singular() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(Ldlt::new(&m), Err(Error::Singular { .. })));
    }

    #[test]
    fn ldlt_random_vs_inverse_oracle() {
        // oracle: Gauss-Jordan inverse with partial pivoting, independent of the factorization
        let mut rng = Lcg::new(11);
        let m = random_symmetric(20, &mut rng);
        let inv = crate::linalg::testing::gauss_jordan_inverse(&m);
        let b: Vec<f64> = (0..20).map(|_| rng.normal()).collect();
        let x = Ldlt::new(&m).unwrap().solve(&b).unwrap();
        let x_ref = inv.matvec(&b).unwrap();
        let err = x.iter().zip(&x_ref).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = x_ref.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err <= 1e-10 * scale, "err {err} scale {scale}");
        assert!(rel_residual(&m, &x, &b) <= 1e-11);
    }
}
