//! GenEO coarse space for the surrogate `A₊`.
//!
//! For each subdomain the pencil `(diag(μ)·Aˢ₊·diag(μ), Rˢ A₊ Rˢᵀ)` is diagonalized and
//! eigenvectors with `λ < 1/τ` are zero-extended into the global coarse space.

use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg::{dot, eig_gen_sym, Cholesky, DenseMatrix, EigenSym, Operator};
use crate::parallel;
use crate::partition::Partition;
use crate::splitting::{LocalSplit, SurrogateMatrix};

/// Relative tolerance on squared residual norms in the dependence filter.
pub const DEPENDENCE_TOL: f64 = 1e-10;

/// Full generalized spectrum of one subdomain, eigenvalues non-decreasing.
#[derive(Debug, Clone)]
pub struct GevpResult {
    s: usize,
    indices: Vec<usize>,
    eig: EigenSym,
}

impl GevpResult {
    pub fn domain_id(&self) -> usize {
        self.s
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        self.eig.values()
    }

    /// Local eigenvector `yˢ_k`, normalized in the `Rˢ A₊ Rˢᵀ` inner product.
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.eig.vector(k)
    }

    /// Indices `k` with `λ_k < 1/τ`; a prefix of the spectrum.
    pub fn selected(&self, tau: f64) -> Vec<usize> {
        let cut = 1.0 / tau;
        (0..self.values().len()).take_while(|&k| self.values()[k] < cut).collect()
    }
}

/// Left and right matrices of the subdomain pencil.
pub fn gevp_matrices(local: &LocalSplit, a_plus: &SurrogateMatrix, p: &Partition) -> (DenseMatrix, DenseMatrix) {
    let mu: Vec<f64> = local.indices().iter().map(|&i| p.multiplicity()[i] as f64).collect();
    let mut left = local.a_plus();
    left.scale_symmetric(&mu);
    let right = a_plus.matrix().submatrix(local.indices());
    (left, right)
}

/// Solve `diag(μ)·Aˢ₊·diag(μ)·y = λ·(Rˢ A₊ Rˢᵀ)·y` for subdomain `s`.
pub fn subdomain_gevp(a_plus: &SurrogateMatrix, p: &Partition, s: usize) -> Result<GevpResult> {
    let local = a_plus
        .locals()
        .get(s)
        .ok_or_else(|| Error::Config(format!("subdomain {s} out of range")))?;
    let (left, right) = gevp_matrices(local, a_plus, p);
    let eig = eig_gen_sym(&left, &right).map_err(|e| match e {
        Error::NotPositiveDefinite { pivot, value } => Error::Setup(format!(
            "block of A+ on subdomain {s} is not positive definite (pivot {pivot} = {value:e})"
        )),
        other => other,
    })?;
    Ok(GevpResult { s, indices: local.indices().to_vec(), eig })
}

pub fn all_gevp(a_plus: &SurrogateMatrix, p: &Partition, threads: usize) -> Result<Vec<GevpResult>> {
    parallel::try_map_indexed(threads, p.num_domains(), |s| subdomain_gevp(a_plus, p, s))
}

/// Basis of `V⁰(τ)`: selected eigenvectors zero-extended and scaled to unit norm.
#[derive(Debug, Clone)]
pub struct CoarseBasis {
    tau: f64,
    vectors: Vec<Vec<f64>>,
    /// `(s, k)` of each kept vector
    origin: Vec<(usize, usize)>,
    candidates: usize,
}

impl CoarseBasis {
    pub fn empty(tau: f64) -> Self {
        CoarseBasis { tau, vectors: Vec::new(), origin: Vec::new(), candidates: 0 }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn origin(&self) -> &[(usize, usize)] {
        &self.origin
    }

    /// Number of selected eigenvectors before the dependence filter.
    pub fn candidates(&self) -> usize {
        self.candidates
    }

    pub fn dropped(&self) -> usize {
        self.candidates - self.vectors.len()
    }

    /// `R⁰·x`
    pub fn restrict(&self, x: &[f64]) -> Vec<f64> {
        self.vectors.iter().map(|v| dot(v, x)).collect()
    }

    /// `y += R⁰ᵀ·c`
    pub fn prolong_add(&self, c: &[f64], y: &mut [f64]) {
        for (v, &ck) in self.vectors.iter().zip(c) {
            for (yi, vi) in y.iter_mut().zip(v) {
                *yi += ck * vi;
            }
        }
    }
}

/// Select `λ < 1/τ` in every subdomain and extract a basis of their span.
///
/// Candidates are scaled to unit norm and filtered by pivoted Gram–Schmidt: the
/// candidate with the largest residual against the kept span is taken next, and the
/// process stops once every remaining squared residual is at most `DEPENDENCE_TOL`. The
/// kept vectors themselves (not their orthogonalized residuals) form the basis.
pub fn build_coarse_basis(results: &[GevpResult], p: &Partition, tau: f64) -> Result<CoarseBasis> {
    if !(tau > 1.0) {
        return Err(Error::Config(format!("threshold tau = {tau} must exceed 1")));
    }
    let n = p.dim();
    let mut cands = Vec::new();
    let mut origin = Vec::new();
    for r in results {
        for k in r.selected(tau) {
            let y = r.vector(k);
            let mut v = vec![0.0; n];
            for (&g, &yi) in r.indices.iter().zip(&y) {
                v[g] = yi;
            }
            let norm = dot(&v, &v).sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|x| *x /= norm);
            }
            cands.push(v);
            origin.push((r.s, k));
        }
    }
    let kept = pivoted_gram_schmidt(&cands, DEPENDENCE_TOL);
    let candidates = cands.len();
    let mut vectors = Vec::with_capacity(kept.len());
    let mut kept_origin = Vec::with_capacity(kept.len());
    let mut keep = vec![false; candidates];
    kept.iter().for_each(|&c| keep[c] = true);
    for (c, v) in cands.into_iter().enumerate() {
        if keep[c] {
            vectors.push(v);
            kept_origin.push(origin[c]);
        }
    }
    Ok(CoarseBasis { tau, vectors, origin: kept_origin, candidates })
}

/// Indices of a maximal well-conditioned subset, in pivot order.
fn pivoted_gram_schmidt(cands: &[Vec<f64>], tol: f64) -> Vec<usize> {
    let mut res: Vec<Vec<f64>> = cands.to_vec();
    let mut norms2: Vec<f64> = res.iter().map(|r| dot(r, r)).collect();
    let mut active = vec![true; cands.len()];
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    loop {
        let pick = (0..cands.len())
            .filter(|&c| active[c])
            .max_by(|&a, &b| norms2[a].total_cmp(&norms2[b]).then(b.cmp(&a)));
        let Some(c) = pick else { break };
        if !(norms2[c] > tol) {
            break;
        }
        active[c] = false;
        let mut u = std::mem::take(&mut res[c]);
        for qv in &q {
            let d = dot(qv, &u);
            u.iter_mut().zip(qv).for_each(|(ui, qi)| *ui -= d * qi);
        }
        let norm = dot(&u, &u).sqrt();
        u.iter_mut().for_each(|x| *x /= norm);
        for d in 0..cands.len() {
            if active[d] {
                let h = dot(&u, &res[d]);
                res[d].iter_mut().zip(&u).for_each(|(ri, ui)| *ri -= h * ui);
                norms2[d] = dot(&res[d], &res[d]);
            }
        }
        q.push(u);
        kept.push(c);
    }
    kept
}

/// Cholesky-factored Galerkin matrix `R⁰ A₊ R⁰ᵀ`.
#[derive(Debug, Clone)]
pub struct CoarseOperator {
    galerkin: DenseMatrix,
    factor: Cholesky,
}

impl CoarseOperator {
    pub fn galerkin(&self) -> &DenseMatrix {
        &self.galerkin
    }

    pub fn solve_in_place(&self, c: &mut [f64]) {
        self.factor.solve_in_place(c)
    }
}

pub fn coarse_operator(basis: &CoarseBasis, a_plus: &dyn Operator) -> Result<CoarseOperator> {
    let d = basis.dim();
    if d == 0 {
        return Err(Error::Config("coarse operator of an empty basis".into()));
    }
    let av: Vec<Vec<f64>> = basis.vectors.iter().map(|v| a_plus.apply(v)).collect();
    let mut g = DenseMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            let v = 0.5 * (dot(&basis.vectors[i], &av[j]) + dot(&basis.vectors[j], &av[i]));
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    let factor = Cholesky::new(&g).map_err(|e| {
        Error::CoarseNotDefinite(format!("dimension {d}, {e}"))
    })?;
    Ok(CoarseOperator { galerkin: g, factor })
}

/// Debug dump of every generalized spectrum as CSV rows `s,k,lambda`.
pub fn write_gevp_csv(results: &[GevpResult], mut w: impl Write) -> Result<()> {
    writeln!(w, "s,k,lambda")?;
    for r in results {
        for (k, lam) in r.values().iter().enumerate() {
            writeln!(w, "{},{},{:.17e}", r.s, k, lam)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{norm2, SparseSym};
    use crate::partition::{ensure_minimal_overlap, partition_graph};
    use crate::problems::laplacian_2d;
    use crate::splitting::{assemble_a_plus, build_b, split_all, ZERO_TOL};

    fn surrogate(a: &SparseSym, p: &Partition) -> SurrogateMatrix {
        let b = build_b(a, p).unwrap();
        let locals = split_all(&b, p, ZERO_TOL, 1).unwrap();
        assemble_a_plus(a, locals, p).unwrap()
    }

    fn setup(nx: usize, ny: usize, parts: usize) -> (SparseSym, Partition, SurrogateMatrix) {
        let a = laplacian_2d(nx, ny).unwrap().a;
        let classes = partition_graph(&a, parts, 1).unwrap();
        let p = ensure_minimal_overlap(&a, &classes).unwrap();
        let s = surrogate(&a, &p);
        (a, p, s)
    }

    #[test]
    fn single_domain_has_unit_spectrum() {
        let a = laplacian_2d(4, 3).unwrap().a;
        let p = Partition::single(12).unwrap();
        let s = surrogate(&a, &p);
        let r = subdomain_gevp(&s, &p, 0).unwrap();
        assert!(r.values().iter().all(|&l| (l - 1.0).abs() < 1e-12));
        assert!(r.selected(10.0).is_empty());
        assert_eq!(build_coarse_basis(&[r], &p, 10.0).unwrap().dim(), 0);
    }

    #[test]
    fn residuals_ordering_and_sign() {
        let (_, p, s) = setup(8, 6, 4);
        let results = all_gevp(&s, &p, 2).unwrap();
        for r in &results {
            let (left, right) = gevp_matrices(&s.locals()[r.domain_id()], &s, &p);
            let scale = left.max_abs().max(right.max_abs());
            assert!(r.values().windows(2).all(|w| w[0] <= w[1]));
            assert!(r.values()[0] >= -1e-10);
            for k in 0..r.values().len() {
                let y = r.vector(k);
                let ly = left.matvec(&y).unwrap();
                let ry = right.matvec(&y).unwrap();
                let res: Vec<f64> = ly.iter().zip(&ry).map(|(a, b)| a - r.values()[k] * b).collect();
                assert!(norm2(&res) <= 1e-9 * scale * norm2(&y));
            }
        }
    }

    #[test]
    fn interior_subdomain_spectrum_is_bounded_by_one() {
        // two decoupled 1D Laplacians, one per subdomain: μ ≡ 1 and no negative parts,
        // so left = Bˢ = Rˢ A Rˢᵀ = right
        let mut t = Vec::new();
        for off in [0, 5] {
            for i in 0..5 {
                t.push((off + i, off + i, 2.0));
                if i + 1 < 5 {
                    t.push((off + i, off + i + 1, -1.0));
                    t.push((off + i + 1, off + i, -1.0));
                }
            }
        }
        let a = SparseSym::from_triplets(10, &t).unwrap();
        let p = Partition::new(10, vec![(0..5).collect(), (5..10).collect()]).unwrap();
        let s = surrogate(&a, &p);
        assert_eq!(s.matrix(), &a);
        for r in all_gevp(&s, &p, 1).unwrap() {
            assert!(*r.values().last().unwrap() <= 1.0 + 1e-12);
            assert!(r.values().iter().all(|&l| (l - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn tau_monotone_selection_and_support() {
        let (_, p, s) = setup(10, 10, 5);
        let results = all_gevp(&s, &p, 1).unwrap();
        // a larger threshold lowers the cut 1/τ, so selections shrink as τ grows
        let mut last = usize::MAX;
        for tau in [1.5, 3.0, 10.0, 50.0, 1e3] {
            let total: usize = results.iter().map(|r| r.selected(tau).len()).sum();
            assert!(total <= last);
            last = total;
            for r in &results {
                let small = r.selected(tau);
                let large = r.selected(tau * 2.0);
                assert!(large.iter().all(|k| small.contains(k)));
            }
            let basis = build_coarse_basis(&results, &p, tau).unwrap();
            for (v, &(s_id, _)) in basis.vectors().iter().zip(basis.origin()) {
                let dom = p.domain(s_id);
                for (i, &vi) in v.iter().enumerate() {
                    if vi != 0.0 {
                        assert!(dom.binary_search(&i).is_ok());
                    }
                }
                assert!((norm2(v) - 1.0).abs() < 1e-14);
            }
        }
        assert!(build_coarse_basis(&results, &p, 1.0).is_err());
    }

    #[test]
    fn duplicate_candidates_are_filtered() {
        let mut cands = vec![vec![1.0, 0.0, 0.0], vec![0.6, 0.8, 0.0]];
        cands.push(cands[1].clone());
        assert_eq!(pivoted_gram_schmidt(&cands, DEPENDENCE_TOL).len(), 2);
        cands.push(vec![0.0, 0.0, 1.0]);
        let kept = pivoted_gram_schmidt(&cands, DEPENDENCE_TOL);
        assert_eq!(kept.len(), 3);
        assert!(!(kept.contains(&1) && kept.contains(&2)));
    }

    #[test]
    fn basis_gram_is_well_conditioned() {
        let (_, p, s) = setup(12, 12, 6);
        let results = all_gevp(&s, &p, 1).unwrap();
        let basis = build_coarse_basis(&results, &p, 10.0).unwrap();
        assert!(basis.dim() > 0);
        let d = basis.dim();
        let mut g = DenseMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                g[(i, j)] = dot(&basis.vectors()[i], &basis.vectors()[j]);
            }
        }
        let e = crate::linalg::eig_sym(&g).unwrap();
        assert!(e.values()[0] > 1e-10 * e.values()[d - 1]);
        assert_eq!(basis.dropped() + d, basis.candidates());
    }

    #[test]
    fn galerkin_matches_triple_product() {
        let a = laplacian_2d(10, 5).unwrap().a;
        let mut rng = crate::linalg::testing::Lcg::new(9);
        let vectors: Vec<Vec<f64>> = (0..5).map(|_| (0..50).map(|_| rng.normal()).collect()).collect();
        let basis = CoarseBasis {
            tau: 10.0,
            vectors: vectors.clone(),
            origin: vec![(0, 0); 5],
            candidates: 5,
        };
        let op = coarse_operator(&basis, &a).unwrap();
        let v = DenseMatrix::from_columns(50, &vectors).unwrap();
        let expected = v.transpose().matmul(&a.to_dense().matmul(&v).unwrap()).unwrap();
        let diff = op.galerkin().sub(&expected).unwrap().max_abs();
        assert!(diff <= 1e-12 * expected.max_abs());

        let one = CoarseBasis { tau: 10.0, vectors: vec![vectors[0].clone()], origin: vec![(0, 0)], candidates: 1 };
        let op1 = coarse_operator(&one, &a).unwrap();
        let av = a.spmv(&vectors[0]).unwrap();
        assert!((op1.galerkin()[(0, 0)] - dot(&vectors[0], &av)).abs() < 1e-12 * dot(&vectors[0], &av));

        assert!(coarse_operator(&CoarseBasis::empty(10.0), &a).is_err());
    }

    #[test]
    fn a_orthonormal_basis_gives_identity() {
        let a = laplacian_2d(6, 1).unwrap().a;
        let e = crate::linalg::eig_sym(&a.to_dense()).unwrap();
        let vectors: Vec<Vec<f64>> = (0..3)
            .map(|k| e.vector(k).iter().map(|x| x / e.values()[k].sqrt()).collect())
            .collect();
        let basis = CoarseBasis { tau: 10.0, vectors, origin: vec![(0, 0); 3], candidates: 3 };
        let op = coarse_operator(&basis, &a).unwrap();
        let diff = op.galerkin().sub(&DenseMatrix::identity(3)).unwrap().max_abs();
        assert!(diff < 1e-13);
    }
}
