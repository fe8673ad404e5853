//! Dense symmetric eigensolvers.
//!
//! Small matrices go through cyclic Jacobi rotations, which are accurate and simple.
//! Above [`JACOBI_MAX_DIM`] the cubic cost per sweep of Jacobi becomes prohibitive for
//! subdomain-sized blocks, so the matrix is reduced to tridiagonal form with Householder
//! reflections and diagonalized by the implicit QL algorithm.

use super::dense::{axpy, dot, norm2, DenseMatrix};
use super::factor::Cholesky;
use crate::error::{Error, Result};

/// Largest dimension handled by cyclic Jacobi.
pub const JACOBI_MAX_DIM: usize = 64;

const JACOBI_TOL: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 50;
const QL_MAX_ITER: usize = 60;

/// Eigen-decomposition `M = V·diag(λ)·Vᵀ` with non-decreasing eigenvalues.
#[derive(Debug, Clone)]
pub struct EigenSym {
    values: Vec<f64>,
    /// column k pairs with `values[k]`
    vectors: DenseMatrix,
}

impl EigenSym {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vectors(&self) -> &DenseMatrix {
        &self.vectors
    }

    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k)
    }

    fn from_unsorted(values: Vec<f64>, rows_are_vectors: DenseMatrix) -> Self {
        let m = values.len();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let mut vectors = DenseMatrix::zeros(m, m);
        for (col, &k) in order.iter().enumerate() {
            let src = rows_are_vectors.row(k);
            for i in 0..m {
                vectors[(i, col)] = src[i];
            }
        }
        let values = order.iter().map(|&k| values[k]).collect();
        EigenSym { values, vectors }
    }
}

fn check_input(m: &DenseMatrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch { expected: m.rows(), got: m.cols() });
    }
    if m.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NoConvergence { iterations: 0 });
    }
    Ok(())
}

/// Full eigen-decomposition of a symmetric matrix.
pub fn eig_sym(m: &DenseMatrix) -> Result<EigenSym> {
    check_input(m)?;
    if m.rows() <= JACOBI_MAX_DIM {
        jacobi(m)
    } else {
        householder_ql(m)
    }
}

/// Cyclic Jacobi; stops once the off-diagonal Frobenius norm is below 1e-13·‖M‖_F.
pub fn jacobi(m: &DenseMatrix) -> Result<EigenSym> {
    check_input(m)?;
    let n = m.rows();
    let mut a = m.clone();
    let mut v = DenseMatrix::identity(n);
    let threshold = JACOBI_TOL * m.frobenius_norm();

    let off = |a: &DenseMatrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[(i, j)] * a[(i, j)];
                }
            }
        }
        s.sqrt()
    };

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off(&a) <= threshold {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                {
                    let (rp, rq) = a.rows_mut2(p, q);
                    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
                        let (ap, aq) = (*x, *y);
                        *x = c * ap - s * aq;
                        *y = s * ap + c * aq;
                    }
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged && off(&a) > threshold {
        return Err(Error::NoConvergence { iterations: JACOBI_MAX_SWEEPS });
    }
    Ok(EigenSym::from_unsorted(a.diag(), v.transpose()))
}

/// Householder tridiagonalization followed by implicit QL with Wilkinson-type shifts.
pub fn householder_ql(m: &DenseMatrix) -> Result<EigenSym> {
    check_input(m)?;
    let n = m.rows();
    if n == 0 {
        return Ok(EigenSym { values: vec![], vectors: DenseMatrix::zeros(0, 0) });
    }
    let mut a = m.clone();
    let mut d = vec![0.0; n];
    // e[i] couples i and i+1
    let mut e = vec![0.0; n];
    let mut betas = vec![0.0; n];

    let mut p = vec![0.0; n];
    for k in 0..n.saturating_sub(2) {
        let len = n - k - 1;
        let x = &a.row(k)[k + 1..];
        let xnorm = norm2(x);
        d[k] = a[(k, k)];
        if xnorm == 0.0 || x[1..].iter().all(|&v| v == 0.0) {
            e[k] = x[0];
            betas[k] = 0.0;
            continue;
        }
        let alpha = if x[0] >= 0.0 { -xnorm } else { xnorm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let beta = 2.0 / dot(&v, &v);

        let p = &mut p[..len];
        for i in 0..len {
            p[i] = beta * dot(&a.row(k + 1 + i)[k + 1..], &v);
        }
        let kappa = 0.5 * beta * dot(p, &v);
        axpy(-kappa, &v, p);
        for i in 0..len {
            let row = &mut a.row_mut(k + 1 + i)[k + 1..];
            axpy(-v[i], p, row);
            axpy(-p[i], &v, row);
        }
        e[k] = alpha;
        a.row_mut(k)[k + 1..].copy_from_slice(&v);
        betas[k] = beta;
    }
    if n >= 2 {
        d[n - 2] = a[(n - 2, n - 2)];
        e[n - 2] = a[(n - 2, n - 1)];
    }
    d[n - 1] = a[(n - 1, n - 1)];
    e[n - 1] = 0.0;

    // Q = H_0 H_1 ... H_{n-3}, accumulated backwards so each reflector only touches
    // the trailing block.
    let mut q = DenseMatrix::identity(n);
    let mut u = vec![0.0; n];
    for k in (0..n.saturating_sub(2)).rev() {
        let beta = betas[k];
        if beta == 0.0 {
            continue;
        }
        let v = &a.row(k)[k + 1..];
        let u = &mut u[k + 1..];
        u.iter_mut().for_each(|x| *x = 0.0);
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 {
                axpy(vi, &q.row(k + 1 + i)[k + 1..], u);
            }
        }
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 {
                axpy(-beta * vi, u, &mut q.row_mut(k + 1 + i)[k + 1..]);
            }
        }
    }
    drop(a);

    // rows of zt are the eigenvectors
    let mut zt = q.transpose();
    drop(q);

    // Deflation is relative to the neighbouring diagonal or, for clusters of eigenvalues
    // at rounding level, to the whole matrix; the latter is within the backward error of
    // the reduction anyway.
    let tnorm = (0..n).map(|i| d[i].abs() + e[i].abs()).fold(0.0, f64::max);
    let floor = f64::EPSILON * tnorm;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut mm = l;
            while mm < n - 1 {
                let dd = d[mm].abs() + d[mm + 1].abs();
                if e[mm].abs() <= f64::EPSILON * dd || e[mm].abs() <= floor {
                    break;
                }
                mm += 1;
            }
            if mm == l {
                break;
            }
            iter += 1;
            if iter > QL_MAX_ITER {
                return Err(Error::NoConvergence { iterations: iter });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[mm] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0f64, 1.0f64, 0.0f64);
            let mut split = false;
            let mut i = mm;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[mm] = 0.0;
                    split = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let (zi, zi1) = zt.rows_mut2(i, i + 1);
                for (x, y) in zi.iter_mut().zip(zi1.iter_mut()) {
                    let f = *y;
                    *y = s * *x + c * f;
                    *x = c * *x - s * f;
                }
            }
            if split {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[mm] = 0.0;
        }
    }
    Ok(EigenSym::from_unsorted(d, zt))
}

/// Generalized problem `left·y = λ·right·y` with `right` spd.
///
/// Reduced through `right = L·Lᵀ` to the standard problem for `L⁻¹·left·L⁻ᵀ`; the
/// returned vectors are `right`-orthonormal.
pub fn eig_gen_sym(left: &DenseMatrix, right: &DenseMatrix) -> Result<EigenSym> {
    if !left.is_square() || left.rows() != right.rows() || !right.is_square() {
        return Err(Error::DimensionMismatch { expected: left.rows(), got: right.rows() });
    }
    let chol = Cholesky::new(right)?;
    let mut x = left.clone();
    chol.forward_matrix(&mut x);
    let mut c = x.transpose();
    drop(x);
    chol.forward_matrix(&mut c);
    c.symmetrize();
    let EigenSym { values, mut vectors } = eig_sym(&c)?;
    drop(c);
    chol.backward_matrix(&mut vectors);
    Ok(EigenSym { values, vectors })
}
