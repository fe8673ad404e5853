//! Algebraic local splitting `A = Σ Rˢᵀ Bˢ Rˢ`, the signed eigen-splitting of each `Bˢ`,
//! the spd surrogate `A₊` and the low-rank remainder `A₋ = A₊ − A`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg::{dot, eig_sym, DenseMatrix, EigenSym, Operator, SparseSym};
use crate::parallel;
use crate::partition::Partition;

/// Relative cutoff below which an eigenvalue of `Bˢ` counts as non-positive.
pub const ZERO_TOL: f64 = 1e-12;
/// Relative cutoff for the eigenvalues of the global negative part.
pub const DROP_TOL: f64 = 1e-10;

/// `B_ij = A_ij / #{s : i, j ∈ Ωˢ}` on the pattern of `A`.
pub fn build_b(a: &SparseSym, p: &Partition) -> Result<SparseSym> {
    if a.dim() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: a.dim() });
    }
    for (i, j, _) in a.entries() {
        if p.shared_count(i, j) == 0 {
            return Err(Error::UncoveredEntry { row: i, col: j });
        }
    }
    Ok(a.map_values(|i, j, v| v / p.shared_count(i, j) as f64))
}

/// Eigen-splitting `Bˢ = Aˢ₊ − Aˢ₋` of one subdomain matrix.
#[derive(Debug, Clone)]
pub struct LocalSplit {
    s: usize,
    indices: Vec<usize>,
    b_local: DenseMatrix,
    eig: EigenSym,
    k_neg: usize,
    /// `Vneg·(−Λneg)^{1/2}`, so that `Aˢ₋ = F·Fᵀ`
    factor: DenseMatrix,
}

impl LocalSplit {
    pub fn domain_id(&self) -> usize {
        self.s
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// `Bˢ = Rˢ B Rˢᵀ`
    pub fn b_local(&self) -> &DenseMatrix {
        &self.b_local
    }

    pub fn eigen(&self) -> &EigenSym {
        &self.eig
    }

    /// Number of eigenvalues classified non-positive.
    pub fn k_neg(&self) -> usize {
        self.k_neg
    }

    pub fn negative_values(&self) -> &[f64] {
        &self.eig.values()[..self.k_neg]
    }

    pub fn positive_values(&self) -> &[f64] {
        &self.eig.values()[self.k_neg..]
    }

    /// Local factor `F` with `Aˢ₋ = F·Fᵀ` (nˢ × k_neg).
    pub fn factor(&self) -> &DenseMatrix {
        &self.factor
    }

    /// `Aˢ₋ = −Vneg·Λneg·Vnegᵀ`, spsd.
    pub fn a_minus(&self) -> DenseMatrix {
        gram_rows(&self.factor)
    }

    /// `Aˢ₊ = Bˢ + Aˢ₋`, which equals `Vpos·Λpos·Vposᵀ`.
    pub fn a_plus(&self) -> DenseMatrix {
        let mut m = self.a_minus();
        for i in 0..m.rows() {
            for (v, b) in m.row_mut(i).iter_mut().zip(self.b_local.row(i)) {
                *v += b;
            }
        }
        m
    }

    /// `Vpos·Λpos·Vposᵀ` evaluated from the eigenpairs.
    pub fn positive_part(&self) -> DenseMatrix {
        let v = self.eig.vectors();
        let m = self.len();
        let mut out = DenseMatrix::zeros(m, m);
        for k in self.k_neg..m {
            let lam = self.eig.values()[k];
            for i in 0..m {
                let vi = lam * v[(i, k)];
                for j in 0..m {
                    out[(i, j)] += vi * v[(j, k)];
                }
            }
        }
        out
    }
}

/// `F·Fᵀ` for a row-major `F`.
fn gram_rows(f: &DenseMatrix) -> DenseMatrix {
    let m = f.rows();
    let mut out = DenseMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let v = dot(f.row(i), f.row(j));
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Eigen-split `Bˢ`. An eigenvalue `λ` is non-positive iff `λ ≤ zero_tol·max|λ|`.
pub fn split_local(b: &SparseSym, p: &Partition, s: usize, zero_tol: f64) -> Result<LocalSplit> {
    if s >= p.num_domains() {
        return Err(Error::Config(format!("subdomain {s} out of range")));
    }
    let indices = p.domain(s).to_vec();
    let b_local = b.submatrix(&indices);
    let eig = eig_sym(&b_local)?;
    let scale = eig.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let k_neg = eig.values().iter().take_while(|&&l| l <= zero_tol * scale).count();
    let m = indices.len();
    let mut factor = DenseMatrix::zeros(m, k_neg);
    for k in 0..k_neg {
        let w = (-eig.values()[k]).max(0.0).sqrt();
        for i in 0..m {
            factor[(i, k)] = w * eig.vectors()[(i, k)];
        }
    }
    Ok(LocalSplit { s, indices, b_local, eig, k_neg, factor })
}

/// Split every subdomain on up to `threads` workers.
pub fn split_all(b: &SparseSym, p: &Partition, zero_tol: f64, threads: usize) -> Result<Vec<LocalSplit>> {
    parallel::try_map_indexed(threads, p.num_domains(), |s| split_local(b, p, s, zero_tol))
}

/// `y += Σ Rˢᵀ Aˢ₋ Rˢ x` through the local factors.
fn add_a_minus(locals: &[LocalSplit], x: &[f64], y: &mut [f64]) {
    for l in locals {
        let k = l.k_neg;
        if k == 0 {
            continue;
        }
        let mut c = vec![0.0; k];
        for (li, &g) in l.indices.iter().enumerate() {
            let xi = x[g];
            for (ck, fk) in c.iter_mut().zip(l.factor.row(li)) {
                *ck += fk * xi;
            }
        }
        for (li, &g) in l.indices.iter().enumerate() {
            y[g] += dot(l.factor.row(li), &c);
        }
    }
}

/// `A₋·x` applied through the local factors.
pub fn apply_a_minus(locals: &[LocalSplit], x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    add_a_minus(locals, x, &mut y);
    y
}

/// The assembled spd surrogate `A₊ = Σ Rˢᵀ Aˢ₊ Rˢ = A + A₋`.
#[derive(Debug, Clone)]
pub struct SurrogateMatrix {
    matrix: SparseSym,
    a: SparseSym,
    locals: Vec<LocalSplit>,
}

impl SurrogateMatrix {
    /// Explicit `A₊` (pattern = union of the subdomain-block fills and `A`).
    pub fn matrix(&self) -> &SparseSym {
        &self.matrix
    }

    pub fn locals(&self) -> &[LocalSplit] {
        &self.locals
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn into_parts(self) -> (SparseSym, Vec<LocalSplit>) {
        (self.matrix, self.locals)
    }
}

/// Applied as `A·x + Σ Rˢᵀ Fˢ Fˢᵀ Rˢ x`, which is much cheaper than the explicit
/// product once the blocks fill in.
impl Operator for SurrogateMatrix {
    fn dim(&self) -> usize {
        self.matrix.dim()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.a.spmv_into(x, y);
        add_a_minus(&self.locals, x, y);
    }
}

/// Scatter every `Aˢ₊` into a global sparse matrix.
pub fn assemble_a_plus(a: &SparseSym, locals: Vec<LocalSplit>, p: &Partition) -> Result<SurrogateMatrix> {
    let n = a.dim();
    if n != p.dim() || locals.len() != p.num_domains() {
        return Err(Error::DimensionMismatch { expected: p.num_domains(), got: locals.len() });
    }
    let maps: Vec<Vec<usize>> = locals
        .iter()
        .map(|l| {
            let mut m = vec![usize::MAX; n];
            for (li, &g) in l.indices.iter().enumerate() {
                m[g] = li;
            }
            m
        })
        .collect();

    let mut acc = vec![0.0; n];
    let mut mark = vec![false; n];
    let mut cols: Vec<usize> = Vec::new();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    let mut vals = Vec::new();
    row_ptr.push(0);
    for i in 0..n {
        cols.clear();
        for &s in p.memberships(i) {
            let l = &locals[s];
            if l.k_neg == 0 {
                continue;
            }
            let fi = l.factor.row(maps[s][i]);
            for (lj, &j) in l.indices.iter().enumerate() {
                if !mark[j] {
                    mark[j] = true;
                    cols.push(j);
                }
                acc[j] += dot(fi, l.factor.row(lj));
            }
        }
        let (acols, avals) = a.row(i);
        for (&j, &v) in acols.iter().zip(avals) {
            if !mark[j] {
                mark[j] = true;
                cols.push(j);
            }
            acc[j] += v;
        }
        cols.sort_unstable();
        for &j in &cols {
            if acc[j] != 0.0 {
                col_idx.push(j);
                vals.push(acc[j]);
            }
            acc[j] = 0.0;
            mark[j] = false;
        }
        row_ptr.push(col_idx.len());
    }
    let matrix = SparseSym::from_csr_unchecked(n, row_ptr, col_idx, vals);
    Ok(SurrogateMatrix { matrix, a: a.clone(), locals })
}

/// Orthonormal eigen-factorization `A₋ = V₋·Λ₋·V₋ᵀ` with `Λ₋ > 0`.
#[derive(Debug, Clone, Default)]
pub struct NegativeSpectrum {
    vectors: Vec<Vec<f64>>,
    values: Vec<f64>,
    candidates: usize,
}

impl NegativeSpectrum {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Wrap an explicit factorization; `vectors` must be orthonormal and `values` positive.
    pub fn from_parts(vectors: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if vectors.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: values.len(), got: vectors.len() });
        }
        if let Some(v) = vectors.first() {
            if vectors.iter().any(|u| u.len() != v.len()) {
                return Err(Error::Config("columns of V₋ differ in length".into()));
            }
        }
        if values.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::Config("Λ₋ must be positive".into()));
        }
        let candidates = values.len();
        Ok(NegativeSpectrum { vectors, values, candidates })
    }

    /// Rank `n₋` of `A₋`.
    pub fn n_minus(&self) -> usize {
        self.values.len()
    }

    /// Columns of `V₋`.
    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    /// Diagonal of `Λ₋`, ascending.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `Σ k_neg`, the width of the concatenated local factor.
    pub fn candidates(&self) -> usize {
        self.candidates
    }

    /// `V₋·Λ₋·V₋ᵀ·x`
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for (v, &lam) in self.vectors.iter().zip(&self.values) {
            let c = lam * dot(v, x);
            for (yi, vi) in y.iter_mut().zip(v) {
                *yi += c * vi;
            }
        }
        y
    }
}

/// Compress the concatenated local factors `F = [Rˢᵀ Fˢ]` into `A₋ = V₋Λ₋V₋ᵀ`.
///
/// The Gram matrix `FᵀF` is diagonalized and eigenpairs with `σ > drop_tol·σ_max` give
/// `F·Y·σ^{-1/2}`. Those columns are then re-orthonormalized and rotated by a small
/// Rayleigh–Ritz step, so that `V₋` is orthonormal to working precision even when some
/// kept `σ` are tiny.
pub fn negative_spectrum(locals: &[LocalSplit], n: usize, drop_tol: f64) -> Result<NegativeSpectrum> {
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for l in locals {
        for k in 0..l.k_neg {
            let mut c = vec![0.0; n];
            for (li, &g) in l.indices.iter().enumerate() {
                c[g] = l.factor[(li, k)];
            }
            columns.push(c);
        }
    }
    let m = columns.len();
    if m == 0 {
        return Ok(NegativeSpectrum::empty());
    }
    let mut gram = DenseMatrix::zeros(m, m);
    for a in 0..m {
        for b in 0..=a {
            let v = dot(&columns[a], &columns[b]);
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
    }
    let eig = eig_sym(&gram)?;
    let sigma_max = eig.values().iter().copied().fold(0.0f64, f64::max);
    if sigma_max <= 0.0 {
        return Ok(NegativeSpectrum { vectors: Vec::new(), values: Vec::new(), candidates: m });
    }
    let kept: Vec<usize> = (0..m).filter(|&k| eig.values()[k] > drop_tol * sigma_max).collect();

    let mut q: Vec<Vec<f64>> = Vec::with_capacity(kept.len());
    for &k in &kept {
        let scale = 1.0 / eig.values()[k].sqrt();
        let mut v = vec![0.0; n];
        for (a, col) in columns.iter().enumerate() {
            let y = eig.vectors()[(a, k)] * scale;
            if y != 0.0 {
                for (vi, ci) in v.iter_mut().zip(col) {
                    *vi += y * ci;
                }
            }
        }
        for _ in 0..2 {
            for u in &q {
                let c = dot(u, &v);
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= c * ui;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        q.push(v);
    }

    // Rayleigh–Ritz of A₋ = F·Fᵀ on span(q)
    let r = q.len();
    let c: Vec<Vec<f64>> = q.iter().map(|u| columns.iter().map(|col| dot(u, col)).collect()).collect();
    let mut proj = DenseMatrix::zeros(r, r);
    for a in 0..r {
        for b in 0..=a {
            let v = dot(&c[a], &c[b]);
            proj[(a, b)] = v;
            proj[(b, a)] = v;
        }
    }
    let ritz = eig_sym(&proj)?;
    let mut vectors = Vec::with_capacity(r);
    let mut values = Vec::with_capacity(r);
    for k in 0..r {
        let lam = ritz.values()[k];
        if !(lam > drop_tol * sigma_max) {
            continue;
        }
        let mut v = vec![0.0; n];
        for (a, u) in q.iter().enumerate() {
            let z = ritz.vectors()[(a, k)];
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi += z * ui;
            }
        }
        vectors.push(v);
        values.push(lam);
    }
    Ok(NegativeSpectrum { vectors, values, candidates: m })
}

/// Debug dump of every local spectrum as CSV rows `s,k,lambda`.
pub fn write_local_spectra_csv(locals: &[LocalSplit], mut w: impl Write) -> Result<()> {
    writeln!(w, "s,k,lambda")?;
    for l in locals {
        for (k, lam) in l.eig.values().iter().enumerate() {
            writeln!(w, "{},{},{:.17e}", l.s, k, lam)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::testing::{random_spd, Lcg};
    use crate::partition::{ensure_minimal_overlap, partition_graph};
    use crate::problems::laplacian_2d;

    fn rel_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
        a.sub(b).unwrap().max_abs() / b.max_abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn b_equals_a_without_overlap_sharing() {
        let a = SparseSym::from_triplets(3, &[(0, 0, 2.0), (1, 1, 3.0), (2, 2, 4.0)]).unwrap();
        let p = Partition::new(3, vec![vec![0, 1], vec![2]]).unwrap();
        assert_eq!(build_b(&a, &p).unwrap(), a);
    }

    #[test]
    fn shared_entry_is_halved() {
        let a = laplacian_2d(4, 1).unwrap().a;
        let p = Partition::new(4, vec![vec![0, 1, 2], vec![1, 2, 3]]).unwrap();
        let b = build_b(&a, &p).unwrap();
        assert_eq!(b.get(1, 2), -0.5);
        assert_eq!(b.get(1, 1), 1.0);
        assert_eq!(b.get(0, 1), -1.0);
        assert_eq!(b.get(3, 3), 2.0);
    }

    #[test]
    fn uncovered_entry_is_rejected() {
        let a = laplacian_2d(4, 1).unwrap().a;
        let p = Partition::new(4, vec![vec![0, 1], vec![2, 3]]).unwrap();
        assert_eq!(build_b(&a, &p), Err(Error::UncoveredEntry { row: 1, col: 2 }));
    }

    #[test]
    fn two_by_two_swap_split() {
        let a = SparseSym::from_triplets(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let p = Partition::single(2).unwrap();
        let l = split_local(&a, &p, 0, ZERO_TOL).unwrap();
        assert_eq!(l.k_neg(), 1);
        let half = |s: f64| DenseMatrix::from_rows(&[vec![0.5, 0.5 * s], vec![0.5 * s, 0.5]]).unwrap();
        assert!(rel_diff(&l.a_plus(), &half(1.0)) < 1e-14);
        assert!(rel_diff(&l.a_minus(), &half(-1.0)) < 1e-14);
    }

    #[test]
    fn spd_block_has_no_negative_part() {
        let a = laplacian_2d(5, 1).unwrap().a;
        let p = Partition::single(5).unwrap();
        let l = split_local(&a, &p, 0, ZERO_TOL).unwrap();
        assert_eq!(l.k_neg(), 0);
        let s = assemble_a_plus(&a, vec![l], &p).unwrap();
        assert_eq!(s.matrix(), &a);
    }

    fn random_instance(seed: u64, n: usize, parts: usize) -> (SparseSym, Partition) {
        let mut rng = Lcg::new(seed);
        let mut t = Vec::new();
        let dense = random_spd(n, &mut rng);
        for i in 0..n {
            for j in 0..=i {
                if i == j || rng.uniform() < 0.15 {
                    t.push((i, j, dense[(i, j)]));
                    if i != j {
                        t.push((j, i, dense[(i, j)]));
                    }
                }
            }
        }
        // diagonal dominance keeps the sparsified matrix spd
        for i in 0..n {
            t.push((i, i, n as f64));
        }
        let a = SparseSym::from_triplets(n, &t).unwrap();
        let classes = partition_graph(&a, parts, seed).unwrap();
        let p = ensure_minimal_overlap(&a, &classes).unwrap();
        (a, p)
    }

    #[test]
    fn local_reconstruction_and_signs() {
        let (a, p) = random_instance(3, 40, 3);
        let b = build_b(&a, &p).unwrap();
        for s in 0..3 {
            let l = split_local(&b, &p, s, ZERO_TOL).unwrap();
            assert!(rel_diff(&l.a_plus(), &l.positive_part()) < 1e-10);
            let rec = l.a_plus().sub(&l.a_minus()).unwrap();
            assert!(rel_diff(&rec, l.b_local()) < 1e-10);
            let scale = l.b_local().max_abs();
            for m in [l.a_plus(), l.a_minus()] {
                assert!(eig_sym(&m).unwrap().values()[0] >= -1e-10 * scale);
            }
        }
    }

    #[test]
    fn surrogate_identities_and_rank() {
        let (a, p) = random_instance(5, 60, 4);
        let b = build_b(&a, &p).unwrap();
        let locals = split_all(&b, &p, ZERO_TOL, 2).unwrap();
        let neg = negative_spectrum(&locals, 60, DROP_TOL).unwrap();
        let sur = assemble_a_plus(&a, locals, &p).unwrap();
        assert!(sur.matrix().is_symmetric());
        assert!(neg.n_minus() <= p.overlap_excess());
        let mut rng = Lcg::new(1);
        for _ in 0..5 {
            let x: Vec<f64> = (0..60).map(|_| rng.normal()).collect();
            let ap = sur.matrix().spmv(&x).unwrap();
            let fast = sur.apply(&x);
            let ax = a.spmv(&x).unwrap();
            let am = apply_a_minus(sur.locals(), &x);
            let lowrank = neg.apply(&x);
            let scale = crate::linalg::norm2(&ap);
            for i in 0..60 {
                assert!((ap[i] - ax[i] - am[i]).abs() <= 1e-10 * scale);
                assert!((ap[i] - fast[i]).abs() <= 1e-10 * scale);
                assert!((am[i] - lowrank[i]).abs() <= 1e-10 * scale);
            }
        }
        for (i, u) in neg.vectors().iter().enumerate() {
            for (j, v) in neg.vectors().iter().enumerate() {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((dot(u, v) - e).abs() < 1e-12);
            }
        }
        assert!(crate::linalg::Cholesky::new(&sur.matrix().to_dense()).is_ok());
    }

    #[test]
    fn identical_rank_one_parts_collapse() {
        // F has two identical columns, so A₋ = 2·w·wᵀ has rank 1
        let w = [0.0, 0.6, 0.8, 0.0];
        let mut factor = DenseMatrix::zeros(4, 1);
        for i in 0..4 {
            factor[(i, 0)] = w[i];
        }
        let eig = eig_sym(&DenseMatrix::identity(4)).unwrap();
        let mk = |s| LocalSplit {
            s,
            indices: vec![0, 1, 2, 3],
            b_local: DenseMatrix::identity(4),
            eig: eig.clone(),
            k_neg: 1,
            factor: factor.clone(),
        };
        let neg = negative_spectrum(&[mk(0), mk(1)], 4, DROP_TOL).unwrap();
        assert_eq!(neg.candidates(), 2);
        assert_eq!(neg.n_minus(), 1);
        assert!((neg.values()[0] - 2.0).abs() < 1e-14);
        let v = &neg.vectors()[0];
        assert!((dot(v, &w).abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn empty_negative_part() {
        let a = laplacian_2d(3, 3).unwrap().a;
        let p = Partition::single(9).unwrap();
        let locals = split_all(&a, &p, ZERO_TOL, 1).unwrap();
        let neg = negative_spectrum(&locals, 9, DROP_TOL).unwrap();
        assert_eq!(neg.n_minus(), 0);
        assert_eq!(neg.candidates(), 0);
    }

    #[test]
    fn lower_drop_tolerance_never_shrinks_rank() {
        let (a, p) = random_instance(11, 50, 5);
        let b = build_b(&a, &p).unwrap();
        let locals = split_all(&b, &p, ZERO_TOL, 1).unwrap();
        let mut last = 0;
        for tol in [1e-2, 1e-4, 1e-8, 1e-10, 1e-13] {
            let r = negative_spectrum(&locals, 50, tol).unwrap().n_minus();
            assert!(r >= last);
            last = r;
        }
    }

    #[test]
    fn spectra_csv_layout() {
        let a = laplacian_2d(2, 1).unwrap().a;
        let p = Partition::single(2).unwrap();
        let locals = split_all(&a, &p, ZERO_TOL, 1).unwrap();
        let mut out = Vec::new();
        write_local_spectra_csv(&locals, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "s,k,lambda");
        assert_eq!(lines.len(), 3);
        let lam: f64 = lines[1].rsplit(',').next().unwrap().parse().unwrap();
        assert!(lines[1].starts_with("0,0,"));
        assert!((lam - 1.0).abs() < 1e-14);
    }
}
