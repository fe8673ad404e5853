//! Dense and sparse symmetric kernels.

mod dense;
mod eigen;
mod factor;
mod sparse;

#[cfg(test)]
pub(crate) mod testing;

pub use dense::{axpy, dot, max_abs, norm2, DenseMatrix};
pub use eigen::{eig_gen_sym, eig_sym, householder_ql, jacobi, EigenSym, JACOBI_MAX_DIM};
pub use factor::{Cholesky, Ldlt};
pub use sparse::SparseSym;

/// A symmetric linear operator `y = M·x` on ℝⁿ.
pub trait Operator {
    fn dim(&self) -> usize;
    fn apply_into(&self, x: &[f64], y: &mut [f64]);

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply_into(x, &mut y);
        y
    }
}

impl Operator for SparseSym {
    fn dim(&self) -> usize {
        SparseSym::dim(self)
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.spmv_into(x, y)
    }
}

impl Operator for DenseMatrix {
    fn dim(&self) -> usize {
        self.rows()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = dot(self.row(i), x);
        }
    }
}

impl<T: Operator + ?Sized> Operator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply_into(x, y)
    }
}

/// The identity on ℝⁿ.
#[derive(Debug, Clone, Copy)]
pub struct IdentityOp(pub usize);

impl Operator for IdentityOp {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

/// Densify an operator column by column. Oracle-scale only.
pub fn to_dense(op: &dyn Operator) -> DenseMatrix {
    let n = op.dim();
    let mut out = DenseMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut y = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply_into(&e, &mut y);
        for i in 0..n {
            out[(i, j)] = y[i];
        }
        e[j] = 0.0;
    }
    out
}
