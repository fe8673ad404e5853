//! Two-level additive Schwarz `H₊` for `A₊` and the low-rank Woodbury correction turning
//! it into a preconditioner for `A = A₊ − V₋Λ₋V₋ᵀ`.

use std::time::Instant;

use serde::Serialize;

use crate::coarse::{coarse_operator, CoarseBasis, CoarseOperator};
use crate::error::{Error, Result};
use crate::krylov::{pcg, PcgOptions};
use crate::linalg::{dot, Cholesky, DenseMatrix, Ldlt, Operator, SparseSym};
use crate::parallel;
use crate::partition::Partition;
use crate::splitting::NegativeSpectrum;

/// Local solver on one subdomain: indices and the factor of the extracted block.
#[derive(Debug, Clone)]
struct LocalSolver {
    indices: Vec<usize>,
    factor: Cholesky,
}

/// `Σ Rˢᵀ(Rˢ M Rˢᵀ)⁻¹Rˢ + R⁰ᵀ(R⁰ M R⁰ᵀ)⁻¹R⁰` for an spd `M`.
#[derive(Debug, Clone)]
pub struct TwoLevelPrec {
    n: usize,
    locals: Vec<LocalSolver>,
    coarse: Option<(CoarseBasis, CoarseOperator)>,
}

impl TwoLevelPrec {
    /// Factor every local block of `matrix` and, for a non-empty basis, the Galerkin
    /// matrix built with `op` (the same operator as `matrix`, possibly applied faster).
    pub fn new(
        matrix: &SparseSym,
        op: &dyn Operator,
        p: &Partition,
        basis: CoarseBasis,
        threads: usize,
    ) -> Result<Self> {
        if matrix.dim() != p.dim() || op.dim() != p.dim() {
            return Err(Error::DimensionMismatch { expected: p.dim(), got: matrix.dim() });
        }
        let locals = parallel::try_map_indexed(threads, p.num_domains(), |s| {
            let indices = p.domain(s).to_vec();
            let factor = Cholesky::new(&matrix.submatrix(&indices)).map_err(|e| {
                Error::Setup(format!("local block {s} is not positive definite: {e}"))
            })?;
            Ok::<_, Error>(LocalSolver { indices, factor })
        })?;
        let coarse = if basis.dim() > 0 {
            let c = coarse_operator(&basis, op)?;
            Some((basis, c))
        } else {
            None
        };
        Ok(TwoLevelPrec { n: p.dim(), locals, coarse })
    }

    pub fn coarse_dim(&self) -> usize {
        self.coarse.as_ref().map_or(0, |(b, _)| b.dim())
    }

    pub fn coarse_basis(&self) -> Option<&CoarseBasis> {
        self.coarse.as_ref().map(|(b, _)| b)
    }

    pub fn num_domains(&self) -> usize {
        self.locals.len()
    }
}

impl Operator for TwoLevelPrec {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        let mut buf = Vec::new();
        for l in &self.locals {
            buf.clear();
            buf.extend(l.indices.iter().map(|&g| x[g]));
            l.factor.solve_in_place(&mut buf);
            for (&g, &v) in l.indices.iter().zip(&buf) {
                y[g] += v;
            }
        }
        if let Some((basis, op)) = &self.coarse {
            let mut c = basis.restrict(x);
            op.solve_in_place(&mut c);
            basis.prolong_add(&c, y);
        }
    }
}

/// `H₊(τ)` for the surrogate: local blocks of `A₊` plus the coarse correction.
pub fn build_h_plus(
    a_plus_matrix: &SparseSym,
    a_plus_op: &dyn Operator,
    p: &Partition,
    basis: CoarseBasis,
    threads: usize,
) -> Result<TwoLevelPrec> {
    TwoLevelPrec::new(a_plus_matrix, a_plus_op, p, basis, threads)
}

/// One-level additive Schwarz `Σ Rˢᵀ(Rˢ A Rˢᵀ)⁻¹Rˢ` on `A`.
pub fn one_level_as(a: &SparseSym, p: &Partition, threads: usize) -> Result<TwoLevelPrec> {
    TwoLevelPrec::new(a, a, p, CoarseBasis::empty(f64::INFINITY), threads)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SetupMode {
    Iterative,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WoodburyOptions {
    /// `None` picks dense when `n ≤ dense_cutoff`
    pub mode: Option<SetupMode>,
    pub dense_cutoff: usize,
    pub tol: f64,
    /// defaults to `10·n`
    pub maxit: Option<usize>,
}

impl Default for WoodburyOptions {
    fn default() -> Self {
        WoodburyOptions { mode: None, dense_cutoff: 2000, tol: 1e-12, maxit: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnSolve {
    pub iterations: usize,
    /// ‖A₊·w − v‖/‖v‖ recomputed after the solve
    pub rel_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetupReport {
    pub mode: SetupMode,
    pub n_minus: usize,
    pub columns: Vec<ColumnSolve>,
    /// max |S − Sᵀ| / max |S| before symmetrization
    pub s_asymmetry: f64,
    pub seconds: f64,
}

/// `W = A₊⁻¹V₋` and a factorization of `S = Λ₋⁻¹ − V₋ᵀW`.
#[derive(Debug, Clone)]
pub struct WoodburyCorrection {
    w: Vec<Vec<f64>>,
    s: DenseMatrix,
    factor: Option<Ldlt>,
    report: SetupReport,
}

impl WoodburyCorrection {
    pub fn n_minus(&self) -> usize {
        self.w.len()
    }

    pub fn w(&self) -> &[Vec<f64>] {
        &self.w
    }

    pub fn s(&self) -> &DenseMatrix {
        &self.s
    }

    pub fn report(&self) -> &SetupReport {
        &self.report
    }

    /// `y += W·S⁻¹·Wᵀ·x`
    pub fn add_apply(&self, x: &[f64], y: &mut [f64]) {
        let Some(f) = &self.factor else { return };
        let c: Vec<f64> = self.w.iter().map(|w| dot(w, x)).collect();
        let c = f.solve(&c).expect("dimension fixed at setup");
        for (w, ck) in self.w.iter().zip(&c) {
            for (yi, wi) in y.iter_mut().zip(w) {
                *yi += ck * wi;
            }
        }
    }
}

/// Solve `A₊·W = V₋` column by column and factor `S`.
pub fn woodbury_setup(
    a_plus_matrix: &SparseSym,
    a_plus_op: &dyn Operator,
    h_plus: &dyn Operator,
    neg: &NegativeSpectrum,
    opts: &WoodburyOptions,
) -> Result<WoodburyCorrection> {
    let start = Instant::now();
    let n = a_plus_matrix.dim();
    let mode = opts
        .mode
        .unwrap_or(if n <= opts.dense_cutoff { SetupMode::Dense } else { SetupMode::Iterative });
    let k = neg.n_minus();
    let mut w = Vec::with_capacity(k);
    let mut columns = Vec::with_capacity(k);
    if k > 0 {
        let dense = match mode {
            SetupMode::Dense => Some(
                Cholesky::new(&a_plus_matrix.to_dense())
                    .map_err(|e| Error::WoodburySetup { column: 0, reason: e.to_string() })?,
            ),
            SetupMode::Iterative => None,
        };
        let pcg_opts = PcgOptions { tol: opts.tol, maxit: opts.maxit.unwrap_or(10 * n) };
        for (j, v) in neg.vectors().iter().enumerate() {
            let (wj, iterations) = match &dense {
                Some(f) => (f.solve(v)?, 0),
                None => {
                    let (x, rep) = pcg(a_plus_op, h_plus, v, pcg_opts, None)
                        .map_err(|e| Error::WoodburySetup { column: j, reason: e.to_string() })?;
                    if !rep.converged {
                        return Err(Error::WoodburySetup {
                            column: j,
                            reason: format!("no convergence in {} iterations", rep.iterations),
                        });
                    }
                    (x, rep.iterations)
                }
            };
            let aw = a_plus_op.apply(&wj);
            let res: f64 = aw.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            columns.push(ColumnSolve { iterations, rel_residual: res / dot(v, v).sqrt() });
            w.push(wj);
        }
    }
    let mut s = DenseMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            s[(i, j)] = -dot(&neg.vectors()[i], &w[j]);
        }
        s[(i, i)] += 1.0 / neg.values()[i];
    }
    let s_asymmetry = if k > 0 { s.asymmetry() / s.max_abs() } else { 0.0 };
    s.symmetrize();
    let factor = if k > 0 {
        Some(Ldlt::new(&s).map_err(|e| Error::WoodburySetup {
            column: k,
            reason: format!("Λ₋⁻¹ − V₋ᵀA₊⁻¹V₋ is singular ({e}); raise the drop tolerance"),
        })?)
    } else {
        None
    };
    let report = SetupReport {
        mode,
        n_minus: k,
        columns,
        s_asymmetry,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok(WoodburyCorrection { w, s, factor, report })
}

/// `H(τ) = H₊(τ) + W·S⁻¹·Wᵀ`.
#[derive(Debug, Clone)]
pub struct CorrectedPrec {
    pub h_plus: TwoLevelPrec,
    pub correction: WoodburyCorrection,
}

impl Operator for CorrectedPrec {
    fn dim(&self) -> usize {
        self.h_plus.dim()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.h_plus.apply_into(x, y);
        self.correction.add_apply(x, y);
    }
}

/// `H(τ)·x`
pub fn apply_h(h_plus: &TwoLevelPrec, corr: &WoodburyCorrection, x: &[f64]) -> Vec<f64> {
    let mut y = h_plus.apply(x);
    corr.add_apply(x, &mut y);
    y
}

fn dense_inverse(m: &DenseMatrix) -> Result<DenseMatrix> {
    let f = Cholesky::new(m)?;
    let n = m.rows();
    let mut inv = DenseMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        f.solve_in_place(&mut e);
        for i in 0..n {
            inv[(i, j)] = e[i];
        }
    }
    Ok(inv)
}

/// Dense check of `A⁻¹ = A₊⁻¹ + A₊⁻¹V₋(Λ₋⁻¹ − V₋ᵀA₊⁻¹V₋)⁻¹V₋ᵀA₊⁻¹`; returns the
/// max-norm discrepancy relative to `max|A⁻¹|`. Oracle scale only.
pub fn verify_woodbury(a: &SparseSym, a_plus: &SparseSym, neg: &NegativeSpectrum) -> Result<f64> {
    let n = a.dim();
    let a_inv = dense_inverse(&a.to_dense()).map_err(|_| Error::Singular { pivot: 0 })?;
    let ap_inv = dense_inverse(&a_plus.to_dense())?;
    let k = neg.n_minus();
    let mut rhs = ap_inv.clone();
    if k > 0 {
        let v = DenseMatrix::from_columns(n, neg.vectors())?;
        let w = ap_inv.matmul(&v)?;
        let mut s = v.transpose().matmul(&w)?;
        s.scale(-1.0);
        for i in 0..k {
            s[(i, i)] += 1.0 / neg.values()[i];
        }
        s.symmetrize();
        let f = Ldlt::new(&s)?;
        let wt = w.transpose();
        // S⁻¹·Wᵀ column by column
        let mut sw = DenseMatrix::zeros(k, n);
        for j in 0..n {
            let col: Vec<f64> = (0..k).map(|i| wt[(i, j)]).collect();
            let sol = f.solve(&col)?;
            for i in 0..k {
                sw[(i, j)] = sol[i];
            }
        }
        rhs = rhs.add(&w.matmul(&sw)?)?;
    }
    Ok(rhs.sub(&a_inv)?.max_abs() / a_inv.max_abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarse::{all_gevp, build_coarse_basis};
    use crate::linalg::testing::{random_spd, Lcg};
    use crate::linalg::to_dense;
    use crate::partition::{ensure_minimal_overlap, partition_graph};
    use crate::problems::{elasticity_2d, laplacian_2d, ElasticityConfig};
    use crate::splitting::{assemble_a_plus, build_b, negative_spectrum, split_all, DROP_TOL, ZERO_TOL};

    struct Setup {
        a: SparseSym,
        p: Partition,
        a_plus: crate::splitting::SurrogateMatrix,
        neg: NegativeSpectrum,
        basis: CoarseBasis,
    }

    fn setup(a: SparseSym, parts: usize, tau: f64) -> Setup {
        let classes = partition_graph(&a, parts, 2).unwrap();
        let p = ensure_minimal_overlap(&a, &classes).unwrap();
        let b = build_b(&a, &p).unwrap();
        let locals = split_all(&b, &p, ZERO_TOL, 1).unwrap();
        let neg = negative_spectrum(&locals, a.dim(), DROP_TOL).unwrap();
        let a_plus = assemble_a_plus(&a, locals, &p).unwrap();
        let gevp = all_gevp(&a_plus, &p, 1).unwrap();
        let basis = build_coarse_basis(&gevp, &p, tau).unwrap();
        Setup { a, p, a_plus, neg, basis }
    }

    fn elasticity_homogeneous(nx: usize, ny: usize) -> SparseSym {
        let mut cfg = ElasticityConfig::testcase2(nx);
        cfg.ny = ny;
        elasticity_2d(&cfg).unwrap().a
    }

    fn elasticity_small() -> SparseSym {
        let mut cfg = ElasticityConfig::testcase1();
        cfg.nx = 12;
        cfg.ny = 4;
        elasticity_2d(&cfg).unwrap().a
    }

    #[test]
    fn single_domain_is_exact() {
        let a = laplacian_2d(6, 5).unwrap().a;
        let p = Partition::single(30).unwrap();
        let h = one_level_as(&a, &p, 1).unwrap();
        let mut rng = Lcg::new(1);
        let x: Vec<f64> = (0..30).map(|_| rng.normal()).collect();
        let ax = a.spmv(&x).unwrap();
        let hax = h.apply(&ax);
        for (u, v) in hax.iter().zip(&x) {
            assert!((u - v).abs() < 1e-10 * crate::linalg::max_abs(&x));
        }
    }

    #[test]
    fn diagonal_hand_computed() {
        // 4×4 diagonal, two domains sharing index 1: H x = Σ_{s∋i} x_i / a_ii
        let a = SparseSym::from_triplets(4, &[(0, 0, 2.0), (1, 1, 4.0), (2, 2, 5.0), (3, 3, 8.0)]).unwrap();
        let p = Partition::new(4, vec![vec![0, 1], vec![1, 2, 3]]).unwrap();
        let h = one_level_as(&a, &p, 1).unwrap();
        let y = h.apply(&[1.0, 1.0, 1.0, 1.0]);
        for (u, v) in y.iter().zip([0.5, 0.5, 0.2, 0.125]) {
            assert!((u - v).abs() < 1e-15);
        }
    }

    #[test]
    fn h_plus_symmetric_definite() {
        let s = setup(elasticity_small(), 3, 10.0);
        let h = build_h_plus(s.a_plus.matrix(), &s.a_plus, &s.p, s.basis.clone(), 1).unwrap();
        let mut rng = Lcg::new(3);
        let n = s.a.dim();
        for _ in 0..5 {
            let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let (hx, hy) = (h.apply(&x), h.apply(&y));
            let (l, r) = (dot(&y, &hx), dot(&x, &hy));
            assert!((l - r).abs() <= 1e-12 * l.abs().max(r.abs()).max(dot(&x, &hx)));
            assert!(dot(&x, &hx) > 0.0);
        }
    }

    #[test]
    fn h_matches_dense_assembly() {
        let s = setup(elasticity_homogeneous(7, 6), 3, 10.0);
        assert!(s.neg.n_minus() > 0);
        let h_plus = build_h_plus(s.a_plus.matrix(), &s.a_plus, &s.p, s.basis.clone(), 1).unwrap();
        let corr = woodbury_setup(s.a_plus.matrix(), &s.a_plus, &h_plus, &s.neg, &WoodburyOptions::default())
            .unwrap();
        assert_eq!(corr.report().mode, SetupMode::Dense);
        assert!(corr.report().s_asymmetry < 1e-12);
        let n = s.a.dim();

        // H₊ from explicit dense blocks
        let ap = s.a_plus.matrix().to_dense();
        let mut hd = DenseMatrix::zeros(n, n);
        for dom in s.p.domains() {
            let block = s.a_plus.matrix().submatrix(dom);
            let inv = dense_inverse(&block).unwrap();
            for (li, &i) in dom.iter().enumerate() {
                for (lj, &j) in dom.iter().enumerate() {
                    hd[(i, j)] += inv[(li, lj)];
                }
            }
        }
        if s.basis.dim() > 0 {
            let r0 = DenseMatrix::from_columns(n, s.basis.vectors()).unwrap();
            let g = r0.transpose().matmul(&ap.matmul(&r0).unwrap()).unwrap();
            let gi = dense_inverse(&g).unwrap();
            hd = hd.add(&r0.matmul(&gi).unwrap().matmul(&r0.transpose()).unwrap()).unwrap();
        }
        let ap_inv = dense_inverse(&ap).unwrap();
        let v = DenseMatrix::from_columns(n, s.neg.vectors()).unwrap();
        let w = ap_inv.matmul(&v).unwrap();
        let mut sm = v.transpose().matmul(&w).unwrap();
        sm.scale(-1.0);
        for i in 0..s.neg.n_minus() {
            sm[(i, i)] += 1.0 / s.neg.values()[i];
        }
        let sinv = crate::linalg::testing::gauss_jordan_inverse(&sm);
        hd = hd.add(&w.matmul(&sinv).unwrap().matmul(&w.transpose()).unwrap()).unwrap();

        let mut rng = Lcg::new(5);
        for _ in 0..5 {
            let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let fast = apply_h(&h_plus, &corr, &x);
            let slow = hd.matvec(&x).unwrap();
            let scale = crate::linalg::max_abs(&slow);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-10 * scale);
            }
            assert!((dot(&x, &fast) - dot(&x, &slow)).abs() <= 1e-10 * dot(&x, &slow).abs());
        }
        assert!(apply_h(&h_plus, &corr, &vec![0.0; n]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn iterative_and_dense_setup_agree() {
        let s = setup(elasticity_small(), 4, 10.0);
        let h_plus = build_h_plus(s.a_plus.matrix(), &s.a_plus, &s.p, s.basis.clone(), 1).unwrap();
        let dense = woodbury_setup(
            s.a_plus.matrix(),
            &s.a_plus,
            &h_plus,
            &s.neg,
            &WoodburyOptions { mode: Some(SetupMode::Dense), ..Default::default() },
        )
        .unwrap();
        let iter = woodbury_setup(
            s.a_plus.matrix(),
            &s.a_plus,
            &h_plus,
            &s.neg,
            &WoodburyOptions { mode: Some(SetupMode::Iterative), ..Default::default() },
        )
        .unwrap();
        assert_eq!(iter.report().columns.len(), s.neg.n_minus());
        for (a, b) in dense.w().iter().zip(iter.w()) {
            let scale = crate::linalg::max_abs(a);
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-8 * scale);
            }
        }
        for c in &iter.report().columns {
            assert!(c.rel_residual <= 1e-11);
        }
    }

    #[test]
    fn no_negative_part_gives_h_plus() {
        let a = laplacian_2d(5, 5).unwrap().a;
        let p = Partition::single(25).unwrap();
        let h = one_level_as(&a, &p, 1).unwrap();
        let corr = woodbury_setup(&a, &a, &h, &NegativeSpectrum::empty(), &WoodburyOptions::default()).unwrap();
        assert_eq!(corr.n_minus(), 0);
        let x: Vec<f64> = (0..25).map(|i| i as f64).collect();
        assert_eq!(apply_h(&h, &corr, &x), h.apply(&x));
        assert_eq!(verify_woodbury(&a, &a, &NegativeSpectrum::empty()).unwrap(), 0.0);
    }

    #[test]
    fn woodbury_identity_on_elasticity_block() {
        let s = setup(elasticity_homogeneous(7, 7), 3, 10.0);
        assert!(s.neg.n_minus() > 0);
        let r = verify_woodbury(&s.a, s.a_plus.matrix(), &s.neg).unwrap();
        assert!(r < 1e-9, "discrepancy {r}");
        let h = build_h_plus(s.a_plus.matrix(), &s.a_plus, &s.p, s.basis, 1).unwrap();
        assert!(to_dense(&h).asymmetry() < 1e-10 * to_dense(&h).max_abs());
    }

    #[test]
    fn woodbury_identity_at_high_contrast() {
        // with a 1e5 coefficient jump both dense inverses carry O(eps·κ(A)) error
        let s = setup(elasticity_small(), 3, 10.0);
        let e = crate::linalg::eig_sym(&s.a.to_dense()).unwrap();
        let kappa = e.values()[e.dim() - 1] / e.values()[0];
        let r = verify_woodbury(&s.a, s.a_plus.matrix(), &s.neg).unwrap();
        assert!(r < 10.0 * f64::EPSILON * kappa, "discrepancy {r}, kappa {kappa:e}");
    }

    #[test]
    fn rank_one_modification() {
        let mut rng = Lcg::new(12);
        let ap = random_spd(10, &mut rng);
        let a_plus = SparseSym::from_dense(&ap).unwrap();
        // A = A₊ − λ·v·vᵀ with ‖v‖ = 1
        let mut v: Vec<f64> = (0..10).map(|_| rng.normal()).collect();
        let nv = crate::linalg::norm2(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let lam = 2.0;
        let mut t = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                t.push((i, j, ap[(i, j)] - lam * v[i] * v[j]));
            }
        }
        let a = SparseSym::from_triplets(10, &t).unwrap();
        let neg = NegativeSpectrum::from_parts(vec![v], vec![lam]).unwrap();
        let r = verify_woodbury(&a, &a_plus, &neg).unwrap();
        assert!(r < 1e-11, "discrepancy {r}");
    }
}
