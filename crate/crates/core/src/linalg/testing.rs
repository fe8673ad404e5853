//! Test-only generators and dense oracles.

use super::dense::DenseMatrix;

/// Small deterministic generator so unit tests need no extra dependency.
pub struct Lcg(u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Lcg(seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut x = self.0;
        x ^= x >> 33;
        x = x.wrapping_mul(0xff51afd7ed558ccd);
        x ^= x >> 33;
        x
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform().max(1e-300);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

pub fn random_symmetric(m: usize, rng: &mut Lcg) -> DenseMatrix {
    let mut a = DenseMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let v = rng.normal();
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

pub fn random_matrix(r: usize, c: usize, rng: &mut Lcg) -> DenseMatrix {
    let mut a = DenseMatrix::zeros(r, c);
    for i in 0..r {
        for j in 0..c {
            a[(i, j)] = rng.normal();
        }
    }
    a
}

/// GᵀG + m·I
pub fn random_spd(m: usize, rng: &mut Lcg) -> DenseMatrix {
    let g = random_matrix(m, m, rng);
    let mut a = g.transpose().matmul(&g).unwrap();
    for i in 0..m {
        a[(i, i)] += m as f64;
    }
    a.symmetrize();
    a
}

/// Gauss–Jordan with partial pivoting.
pub fn gauss_jordan_inverse(m: &DenseMatrix) -> DenseMatrix {
    let n = m.rows();
    let mut a = m.clone();
    let mut inv = DenseMatrix::identity(n);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[(x, col)].abs().partial_cmp(&a[(y, col)].abs()).unwrap())
            .unwrap();
        if piv != col {
            for j in 0..n {
                let t = a[(col, j)];
                a[(col, j)] = a[(piv, j)];
                a[(piv, j)] = t;
                let t = inv[(col, j)];
                inv[(col, j)] = inv[(piv, j)];
                inv[(piv, j)] = t;
            }
        }
        let d = a[(col, col)];
        for j in 0..n {
            a[(col, j)] /= d;
            inv[(col, j)] /= d;
        }
        for i in 0..n {
            if i != col {
                let f = a[(i, col)];
                if f != 0.0 {
                    for j in 0..n {
                        a[(i, j)] -= f * a[(col, j)];
                        inv[(i, j)] -= f * inv[(col, j)];
                    }
                }
            }
        }
    }
    inv
}
