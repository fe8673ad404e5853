//! Preconditioned conjugate gradients with convergence history and Ritz estimates of the
//! preconditioned spectrum taken from the CG coefficients.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, eig_sym, norm2, to_dense, Cholesky, DenseMatrix, Operator};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcgOptions {
    /// stop once ‖b − A·x‖ ≤ tol·‖b‖
    pub tol: f64,
    pub maxit: usize,
}

impl PcgOptions {
    /// 1e-8 and `100·⌈n/1000⌉` iterations.
    pub fn for_dim(n: usize) -> Self {
        PcgOptions { tol: 1e-8, maxit: 100 * n.div_ceil(1000).max(1) }
    }
}

/// Eigenvalues of the CG Lanczos tridiagonal.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RitzEstimate {
    pub values: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
    /// fewer than two steps recorded, so the extremes are not separated
    pub partial: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    /// ‖b − A·x_k‖/‖b‖ for k = 0..=iterations (recurrence residual)
    pub rel_residuals: Vec<f64>,
    /// (r_kᵀ H r_k / r_0ᵀ H r_0)^{1/2}
    pub precond_residuals: Vec<f64>,
    /// ‖x_k − x*‖_A when a reference solution is known
    pub anorm_errors: Option<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub ritz: RitzEstimate,
}

/// Solve `A·x = b` from `x = 0` with preconditioner `H`.
///
/// Stops when the unpreconditioned relative residual reaches `opts.tol`; hitting
/// `opts.maxit` returns a report with `converged = false`. A non-positive curvature
/// `⟨p, A·p⟩` or `⟨r, H·r⟩` is reported as an error.
pub fn pcg(
    a: &dyn Operator,
    h: &dyn Operator,
    b: &[f64],
    opts: PcgOptions,
    x_star: Option<&[f64]>,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = a.dim();
    if b.len() != n || h.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.len().min(h.dim()) });
    }
    if let Some(xs) = x_star {
        if xs.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: xs.len() });
        }
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let bnorm = norm2(b);
    let mut report = SolveReport::default();
    let mut ap = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let anorm_err = |x: &[f64], tmp: &mut Vec<f64>| -> Option<f64> {
        let xs = x_star?;
        let e: Vec<f64> = x.iter().zip(xs).map(|(a, b)| a - b).collect();
        a.apply_into(&e, tmp);
        Some(dot(&e, tmp).max(0.0).sqrt())
    };
    let mut errors = x_star.map(|_| Vec::new());
    if let Some(e) = errors.as_mut() {
        e.push(anorm_err(&x, &mut tmp).unwrap());
    }
    if bnorm == 0.0 {
        report.rel_residuals.push(0.0);
        report.precond_residuals.push(0.0);
        report.converged = true;
        report.anorm_errors = errors;
        report.ritz = ritz_spectrum(&[], &[]);
        return Ok((x, report));
    }
    report.rel_residuals.push(1.0);
    report.precond_residuals.push(1.0);

    let mut z = h.apply(&r);
    let mut rz = dot(&r, &z);
    if !(rz > 0.0) {
        return Err(Error::IndefiniteOperator { iteration: 0, value: rz });
    }
    let rz0 = rz;
    let mut p = z.clone();
    for k in 0..opts.maxit {
        a.apply_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::IndefiniteOperator { iteration: k, value: pap });
        }
        let alpha = rz / pap;
        report.alphas.push(alpha);
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        report.iterations = k + 1;
        let rel = norm2(&r) / bnorm;
        report.rel_residuals.push(rel);
        if let Some(e) = errors.as_mut() {
            e.push(anorm_err(&x, &mut tmp).unwrap());
        }
        h.apply_into(&r, &mut z);
        let rz_new = dot(&r, &z);
        report.precond_residuals.push((rz_new.max(0.0) / rz0).sqrt());
        if rel <= opts.tol {
            report.converged = true;
            break;
        }
        if k + 1 == opts.maxit {
            break;
        }
        if !(rz_new > 0.0) {
            return Err(Error::IndefiniteOperator { iteration: k + 1, value: rz_new });
        }
        let beta = rz_new / rz;
        report.betas.push(beta);
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    report.anorm_errors = errors;
    report.ritz = ritz_spectrum(&report.alphas, &report.betas);
    Ok((x, report))
}

/// Lanczos tridiagonal of CG: `T_jj = 1/α_j + β_{j−1}/α_{j−1}`,
/// `T_{j,j+1} = √β_j / α_j`.
pub fn lanczos_tridiagonal(alphas: &[f64], betas: &[f64]) -> DenseMatrix {
    let k = alphas.len();
    let mut t = DenseMatrix::zeros(k, k);
    for j in 0..k {
        t[(j, j)] = 1.0 / alphas[j];
        if j > 0 {
            t[(j, j)] += betas[j - 1] / alphas[j - 1];
        }
        if j + 1 < k {
            let off = betas[j].sqrt() / alphas[j];
            t[(j, j + 1)] = off;
            t[(j + 1, j)] = off;
        }
    }
    t
}

/// Extreme Ritz values of the preconditioned operator. These lie inside its spectrum,
/// so the interval they span is an inner estimate.
pub fn ritz_spectrum(alphas: &[f64], betas: &[f64]) -> RitzEstimate {
    if alphas.is_empty() {
        return RitzEstimate { partial: true, ..Default::default() };
    }
    let t = lanczos_tridiagonal(alphas, &betas[..betas.len().min(alphas.len() - 1)]);
    let values = match eig_sym(&t) {
        Ok(e) => e.values().to_vec(),
        Err(_) => return RitzEstimate { partial: true, ..Default::default() },
    };
    let lambda_min = values[0];
    let lambda_max = *values.last().unwrap();
    RitzEstimate {
        kappa: lambda_max / lambda_min,
        lambda_min,
        lambda_max,
        partial: alphas.len() < 2,
        values,
    }
}

/// Extreme Ritz values of `A` after `steps` Lanczos steps with full
/// reorthogonalization from a seeded random start.
pub fn lanczos_extremes(a: &dyn Operator, steps: usize, seed: u64) -> Result<(f64, f64)> {
    let n = a.dim();
    if n == 0 {
        return Err(Error::Config("empty operator".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut diag = Vec::new();
    let mut off: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    for _ in 0..steps.min(n) {
        a.apply_into(&v, &mut w);
        let alpha = dot(&v, &w);
        basis.push(v.clone());
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                axpy(-c, q, &mut w);
            }
        }
        diag.push(alpha);
        let beta = norm2(&w);
        if beta <= 1e-14 * alpha.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        off.push(beta);
        v = w.iter().map(|x| x / beta).collect();
    }
    let k = diag.len();
    let mut t = DenseMatrix::zeros(k, k);
    for j in 0..k {
        t[(j, j)] = diag[j];
        if j + 1 < k {
            t[(j, j + 1)] = off[j];
            t[(j + 1, j)] = off[j];
        }
    }
    let e = eig_sym(&t)?;
    Ok((e.values()[0], e.values()[k - 1]))
}

/// All eigenvalues of `H·A` by dense assembly, ascending: with `A = L·Lᵀ` they are the
/// eigenvalues of the symmetric `Lᵀ·H·L`. Meant for small oracle checks.
pub fn dense_preconditioned_spectrum(a: &dyn Operator, h: &dyn Operator) -> Result<Vec<f64>> {
    if a.dim() != h.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: h.dim() });
    }
    let mut ad = to_dense(a);
    ad.symmetrize();
    let mut hd = to_dense(h);
    hd.symmetrize();
    let l = Cholesky::new(&ad)?.factor().clone();
    let mut m = l.transpose().matmul(&hd.matmul(&l)?)?;
    m.symmetrize();
    Ok(eig_sym(&m)?.values().to_vec())
}

/// Convergence history as CSV rows `iter,rel_residual,anorm_error`.
pub fn write_history_csv(report: &SolveReport, mut w: impl Write) -> Result<()> {
    writeln!(w, "iter,rel_residual,anorm_error")?;
    for (k, r) in report.rel_residuals.iter().enumerate() {
        match report.anorm_errors.as_ref().and_then(|e| e.get(k)) {
            Some(e) => writeln!(w, "{k},{r:.17e},{e:.17e}")?,
            None => writeln!(w, "{k},{r:.17e},")?,
        }
    }
    Ok(())
}
