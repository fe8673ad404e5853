//! Test matrices: 2D P1 linear elasticity on structured triangulated rectangles and a
//! 5-point Laplacian.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::SparseSym;

/// Structured node layout and the free dofs attached to each node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeGrid {
    pub nodes_x: usize,
    pub nodes_y: usize,
    /// row-major over nodes, `ix` fastest; eliminated dofs are absent
    dofs: Vec<Vec<usize>>,
    coords: Vec<[f64; 2]>,
}

impl NodeGrid {
    pub fn node_index(&self, ix: usize, iy: usize) -> usize {
        ix + self.nodes_x * iy
    }

    pub fn node_dofs(&self, ix: usize, iy: usize) -> &[usize] {
        &self.dofs[self.node_index(ix, iy)]
    }

    pub fn coords(&self, ix: usize, iy: usize) -> [f64; 2] {
        self.coords[self.node_index(ix, iy)]
    }

    pub fn num_nodes(&self) -> usize {
        self.dofs.len()
    }
}

/// Young's modulus as a function of position.
#[derive(Debug, Clone, PartialEq)]
pub enum YoungModulus {
    Uniform(f64),
    /// `stiff` on the closed horizontal bands `[y0, y1]`, `soft` elsewhere
    Layered { stiff: f64, soft: f64, bands: Vec<(f64, f64)> },
}

impl YoungModulus {
    pub fn at(&self, _x: f64, y: f64) -> f64 {
        match self {
            YoungModulus::Uniform(e) => *e,
            YoungModulus::Layered { stiff, soft, bands } => {
                if bands.iter().any(|&(lo, hi)| y >= lo && y <= hi) {
                    *stiff
                } else {
                    *soft
                }
            }
        }
    }

    fn is_positive(&self) -> bool {
        match self {
            YoungModulus::Uniform(e) => *e > 0.0,
            YoungModulus::Layered { stiff, soft, .. } => *stiff > 0.0 && *soft > 0.0,
        }
    }
}

/// 1e8 on y ∈ [1/7,2/7] ∪ [3/7,4/7] ∪ [5/7,6/7], 1e3 otherwise.
pub fn coefficient_field_testcase1() -> YoungModulus {
    YoungModulus::Layered {
        stiff: 1e8,
        soft: 1e3,
        bands: vec![(1.0 / 7.0, 2.0 / 7.0), (3.0 / 7.0, 4.0 / 7.0), (5.0 / 7.0, 6.0 / 7.0)],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlaneModel {
    Stress,
    Strain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// all dofs on x = 0 eliminated
    ClampedLeft,
    /// no elimination; the matrix keeps the three rigid-body modes in its kernel
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Load {
    /// constant body force per unit area
    BodyForce([f64; 2]),
    /// seeded standard-normal `x*` and `b = A·x*`
    Manufactured { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElasticityConfig {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub young: YoungModulus,
    pub nu: f64,
    pub model: PlaneModel,
    pub boundary: Boundary,
    pub load: Load,
}

impl ElasticityConfig {
    /// Layered beam on [0,4]×[0,1], 112×28 elements, clamped at x = 0 (n = 6496).
    pub fn testcase1() -> Self {
        ElasticityConfig {
            lx: 4.0,
            ly: 1.0,
            nx: 112,
            ny: 28,
            young: coefficient_field_testcase1(),
            nu: 0.3,
            model: PlaneModel::Stress,
            boundary: Boundary::ClampedLeft,
            load: Load::Manufactured { seed: 0 },
        }
    }

    /// Homogeneous unit square, E = 1e8, clamped at x = 0. The default 55×55 elements
    /// give a 56×56 node grid, divisible into 4×4 regular blocks.
    pub fn testcase2(elements_per_side: usize) -> Self {
        ElasticityConfig {
            lx: 1.0,
            ly: 1.0,
            nx: elements_per_side,
            ny: elements_per_side,
            young: YoungModulus::Uniform(1e8),
            nu: 0.3,
            model: PlaneModel::Stress,
            boundary: Boundary::ClampedLeft,
            load: Load::Manufactured { seed: 0 },
        }
    }

    fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::Config("element counts must be at least 1".into()));
        }
        if !(self.lx > 0.0 && self.ly > 0.0) {
            return Err(Error::Config("domain extents must be positive".into()));
        }
        if !(self.nu > 0.0 && self.nu < 0.5) && !(self.nu == 0.0) {
            return Err(Error::Config(format!("Poisson ratio {} outside [0, 0.5)", self.nu)));
        }
        if !self.young.is_positive() {
            return Err(Error::Config("Young's modulus must be positive".into()));
        }
        Ok(())
    }
}

/// An assembled system `A x = b`.
#[derive(Debug, Clone)]
pub struct GeneratedProblem {
    pub a: SparseSym,
    pub b: Vec<f64>,
    pub x_star: Option<Vec<f64>>,
    pub grid: NodeGrid,
}

impl GeneratedProblem {
    pub fn dim(&self) -> usize {
        self.a.dim()
    }
}

/// Constitutive matrix for isotropic elasticity in Voigt form (xx, yy, xy).
pub fn constitutive(e: f64, nu: f64, model: PlaneModel) -> [[f64; 3]; 3] {
    match model {
        PlaneModel::Stress => {
            let f = e / (1.0 - nu * nu);
            [[f, f * nu, 0.0], [f * nu, f, 0.0], [0.0, 0.0, f * (1.0 - nu) / 2.0]]
        }
        PlaneModel::Strain => {
            let f = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
            [
                [f * (1.0 - nu), f * nu, 0.0],
                [f * nu, f * (1.0 - nu), 0.0],
                [0.0, 0.0, f * (1.0 - 2.0 * nu) / 2.0],
            ]
        }
    }
}

/// P1 triangle stiffness `area·BᵀDB`, dofs ordered (u₁, v₁, u₂, v₂, u₃, v₃).
pub fn element_stiffness(p: [[f64; 2]; 3], d: &[[f64; 3]; 3]) -> [[f64; 6]; 6] {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let area = 0.5 * det.abs();
    let mut bmat = [[0.0; 6]; 3];
    for a in 0..3 {
        let (j, k) = ((a + 1) % 3, (a + 2) % 3);
        let dndx = (p[j][1] - p[k][1]) / det;
        let dndy = (p[k][0] - p[j][0]) / det;
        bmat[0][2 * a] = dndx;
        bmat[1][2 * a + 1] = dndy;
        bmat[2][2 * a] = dndy;
        bmat[2][2 * a + 1] = dndx;
    }
    let mut db = [[0.0; 6]; 3];
    for r in 0..3 {
        for c in 0..6 {
            db[r][c] = (0..3).map(|k| d[r][k] * bmat[k][c]).sum();
        }
    }
    let mut ke = [[0.0; 6]; 6];
    for r in 0..6 {
        for c in 0..6 {
            ke[r][c] = area * (0..3).map(|k| bmat[k][r] * db[k][c]).sum::<f64>();
        }
    }
    ke
}

/// Assemble a structured P1 elasticity problem. Each grid square is split along its
/// lower-left to upper-right diagonal; E is sampled at element centroids.
pub fn elasticity_2d(cfg: &ElasticityConfig) -> Result<GeneratedProblem> {
    cfg.validate()?;
    let (nodes_x, nodes_y) = (cfg.nx + 1, cfg.ny + 1);
    let (hx, hy) = (cfg.lx / cfg.nx as f64, cfg.ly / cfg.ny as f64);
    let mut dofs = Vec::with_capacity(nodes_x * nodes_y);
    let mut coords = Vec::with_capacity(nodes_x * nodes_y);
    let mut next = 0;
    for iy in 0..nodes_y {
        for ix in 0..nodes_x {
            coords.push([ix as f64 * hx, iy as f64 * hy]);
            if cfg.boundary == Boundary::ClampedLeft && ix == 0 {
                dofs.push(Vec::new());
            } else {
                dofs.push(vec![next, next + 1]);
                next += 2;
            }
        }
    }
    let n = next;
    let grid = NodeGrid { nodes_x, nodes_y, dofs, coords };

    let mut triplets = Vec::with_capacity(cfg.nx * cfg.ny * 2 * 36);
    let mut body = vec![0.0; n];
    for iy in 0..cfg.ny {
        for ix in 0..cfg.nx {
            let n00 = grid.node_index(ix, iy);
            let n10 = grid.node_index(ix + 1, iy);
            let n01 = grid.node_index(ix, iy + 1);
            let n11 = grid.node_index(ix + 1, iy + 1);
            for tri in [[n00, n10, n11], [n00, n11, n01]] {
                let p = tri.map(|k| grid.coords[k]);
                let cx = (p[0][0] + p[1][0] + p[2][0]) / 3.0;
                let cy = (p[0][1] + p[1][1] + p[2][1]) / 3.0;
                let d = constitutive(cfg.young.at(cx, cy), cfg.nu, cfg.model);
                let ke = element_stiffness(p, &d);
                let area = 0.5 * hx * hy;
                let local: Vec<Option<usize>> = tri
                    .iter()
                    .flat_map(|&k| {
                        let ds = &grid.dofs[k];
                        [ds.first().copied(), ds.get(1).copied()]
                    })
                    .collect();
                for r in 0..6 {
                    let Some(gr) = local[r] else { continue };
                    if let Load::BodyForce(f) = cfg.load {
                        body[gr] += f[r % 2] * area / 3.0;
                    }
                    for c in 0..6 {
                        if let Some(gc) = local[c] {
                            triplets.push((gr, gc, ke[r][c]));
                        }
                    }
                }
            }
        }
    }
    let a = SparseSym::from_triplets(n, &triplets)?;
    let (b, x_star) = match cfg.load {
        Load::BodyForce(_) => (body, None),
        Load::Manufactured { seed } => manufactured(&a, seed),
    };
    Ok(GeneratedProblem { a, b, x_star, grid })
}

fn manufactured(a: &SparseSym, seed: u64) -> (Vec<f64>, Option<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..a.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b = a.spmv(&x).expect("dimension matches by construction");
    (b, Some(x))
}

/// Unscaled 5-point stencil on an `nx × ny` grid of interior nodes with homogeneous
/// Dirichlet conditions. A direction of extent 1 drops out, so `1 × k` is the 1D
/// `[-1, 2, -1]` matrix. Eigenvalues are `Σ (2 − 2cos(π·i/(n+1)))` over the active
/// directions; multiply by `h⁻²` for the PDE operator. `b` is all ones.
pub fn laplacian_2d(nx: usize, ny: usize) -> Result<GeneratedProblem> {
    if nx == 0 || ny == 0 {
        return Err(Error::Config("grid extents must be at least 1".into()));
    }
    let n = nx * ny;
    let idx = |ix: usize, iy: usize| ix + nx * iy;
    let mut t = Vec::with_capacity(5 * n);
    for iy in 0..ny {
        for ix in 0..nx {
            let i = idx(ix, iy);
            let mut diag = 0.0;
            if nx > 1 || ny == 1 {
                diag += 2.0;
                if ix > 0 {
                    t.push((i, idx(ix - 1, iy), -1.0));
                }
                if ix + 1 < nx {
                    t.push((i, idx(ix + 1, iy), -1.0));
                }
            }
            if ny > 1 {
                diag += 2.0;
                if iy > 0 {
                    t.push((i, idx(ix, iy - 1), -1.0));
                }
                if iy + 1 < ny {
                    t.push((i, idx(ix, iy + 1), -1.0));
                }
            }
            t.push((i, i, diag));
        }
    }
    let a = SparseSym::from_triplets(n, &t)?;
    let (hx, hy) = (1.0 / (nx + 1) as f64, 1.0 / (ny + 1) as f64);
    let grid = NodeGrid {
        nodes_x: nx,
        nodes_y: ny,
        dofs: (0..n).map(|i| vec![i]).collect(),
        coords: (0..n).map(|i| [((i % nx) + 1) as f64 * hx, ((i / nx) + 1) as f64 * hy]).collect(),
    };
    Ok(GeneratedProblem { a, b: vec![1.0; n], x_star: None, grid })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eig_sym, Cholesky, DenseMatrix};

    #[test]
    fn testcase1_size() {
        let p = elasticity_2d(&ElasticityConfig::testcase1()).unwrap();
        assert_eq!(p.dim(), 2 * 113 * 29 - 2 * 29);
        assert_eq!(p.dim(), 6496);
        assert!(p.a.is_symmetric());
    }

    #[test]
    fn testcase2_parameters() {
        let c = ElasticityConfig::testcase2(55);
        assert_eq!(c.young, YoungModulus::Uniform(1e8));
        assert_eq!(c.nu, 0.3);
        let p = elasticity_2d(&c).unwrap();
        assert_eq!(p.dim(), 2 * 56 * 55);
    }

    #[test]
    fn layered_field() {
        let e = coefficient_field_testcase1();
        assert_eq!(e.at(1.0, 0.2), 1e8);
        assert_eq!(e.at(1.0, 0.0), 1e3);
        assert_eq!(e.at(0.0, 3.0 / 7.0), 1e8);
        assert_eq!(e.at(0.0, 0.5), 1e8);
        assert_eq!(e.at(0.0, 0.99), 1e3);
    }

    #[test]
    fn single_element_hand_computed() {
        // (0,0), (1,0), (1,1) with E = 1, ν = 0: D = diag(1, 1, 1/2), area 1/2.
        // gradients: N1 = 1-x, N2 = x-y, N3 = y
        let d = constitutive(1.0, 0.0, PlaneModel::Stress);
        let ke = element_stiffness([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]], &d);
        let grads = [[-1.0, 0.0], [1.0, -1.0], [0.0, 1.0]];
        for a in 0..3 {
            for b in 0..3 {
                let (ga, gb) = (grads[a], grads[b]);
                // uu: ∂x∂x + ½ ∂y∂y ; vv: ∂y∂y + ½ ∂x∂x ; uv: ½ ∂y_a ∂x_b
                let uu = 0.5 * (ga[0] * gb[0] + 0.5 * ga[1] * gb[1]);
                let vv = 0.5 * (ga[1] * gb[1] + 0.5 * ga[0] * gb[0]);
                let uv = 0.5 * (0.5 * ga[1] * gb[0]);
                let vu = 0.5 * (0.5 * ga[0] * gb[1]);
                assert!((ke[2 * a][2 * b] - uu).abs() < 1e-15);
                assert!((ke[2 * a + 1][2 * b + 1] - vv).abs() < 1e-15);
                assert!((ke[2 * a][2 * b + 1] - uv).abs() < 1e-15);
                assert!((ke[2 * a + 1][2 * b] - vu).abs() < 1e-15);
            }
        }
        assert_eq!(ke[0], [0.5, 0.0, -0.5, 0.0, 0.0, 0.0]);
        assert_eq!(ke[3], [0.0, -0.25, -0.25, 0.75, 0.25, -0.5]);
    }

    fn small_free(nx: usize, ny: usize) -> GeneratedProblem {
        let cfg = ElasticityConfig {
            lx: 1.0,
            ly: 1.0,
            nx,
            ny,
            young: YoungModulus::Uniform(1.0),
            nu: 0.3,
            model: PlaneModel::Stress,
            boundary: Boundary::Free,
            load: Load::BodyForce([0.0, -1.0]),
        };
        elasticity_2d(&cfg).unwrap()
    }

    #[test]
    fn rigid_body_nullity() {
        let p = small_free(4, 3);
        let e = eig_sym(&p.a.to_dense()).unwrap();
        let top = *e.values().last().unwrap();
        let near_null = e.values().iter().filter(|&&l| l.abs() < 1e-10 * top).count();
        assert_eq!(near_null, 3);
        assert!(e.values()[3] > 1e-4 * top);
    }

    #[test]
    fn patch_test_linear_field() {
        let p = small_free(4, 4);
        let g = &p.grid;
        let exact = |x: f64, y: f64| [0.1 + 0.2 * x - 0.3 * y, -0.2 + 0.05 * x + 0.4 * y];
        let mut boundary_vals = vec![None; p.dim()];
        let mut u_exact = vec![0.0; p.dim()];
        for iy in 0..g.nodes_y {
            for ix in 0..g.nodes_x {
                let [x, y] = g.coords(ix, iy);
                let u = exact(x, y);
                let ds = g.node_dofs(ix, iy);
                let on_boundary = ix == 0 || iy == 0 || ix + 1 == g.nodes_x || iy + 1 == g.nodes_y;
                for c in 0..2 {
                    u_exact[ds[c]] = u[c];
                    if on_boundary {
                        boundary_vals[ds[c]] = Some(u[c]);
                    }
                }
            }
        }
        let interior: Vec<usize> = (0..p.dim()).filter(|&i| boundary_vals[i].is_none()).collect();
        let dense = p.a.to_dense();
        let mut k = DenseMatrix::zeros(interior.len(), interior.len());
        let mut rhs = vec![0.0; interior.len()];
        for (li, &i) in interior.iter().enumerate() {
            for (lj, &j) in interior.iter().enumerate() {
                k[(li, lj)] = dense[(i, j)];
            }
            for j in 0..p.dim() {
                if let Some(v) = boundary_vals[j] {
                    rhs[li] -= dense[(i, j)] * v;
                }
            }
        }
        let u = Cholesky::new(&k).unwrap().solve(&rhs).unwrap();
        for (li, &i) in interior.iter().enumerate() {
            assert!((u[li] - u_exact[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn clamped_is_spd_and_manufactured_consistent() {
        let mut cfg = ElasticityConfig::testcase2(6);
        cfg.young = coefficient_field_testcase1();
        let p = elasticity_2d(&cfg).unwrap();
        Cholesky::new(&p.a.to_dense()).unwrap();
        let x = p.x_star.as_ref().unwrap();
        let ax = p.a.spmv(x).unwrap();
        let scale = crate::linalg::max_abs(&p.b);
        assert!(ax.iter().zip(&p.b).all(|(a, b)| (a - b).abs() <= 1e-12 * scale));
    }

    #[test]
    fn bad_config() {
        let mut c = ElasticityConfig::testcase2(4);
        c.nu = 0.5;
        assert!(elasticity_2d(&c).is_err());
        c.nu = 0.3;
        c.nx = 0;
        assert!(elasticity_2d(&c).is_err());
    }

    #[test]
    fn laplacian_spectrum_and_shape() {
        let p = laplacian_2d(3, 3).unwrap();
        assert!(p.a.is_symmetric());
        let e = eig_sym(&p.a.to_dense()).unwrap();
        let expected = 2.0 * (2.0 - 2.0 * (std::f64::consts::PI / 4.0).cos());
        assert!((e.values()[0] - expected).abs() < 1e-13);

        let p = laplacian_2d(1, 5).unwrap();
        let d = p.a.to_dense();
        for i in 0..5 {
            assert_eq!(d[(i, i)], 2.0);
            if i + 1 < 5 {
                assert_eq!(d[(i, i + 1)], -1.0);
            }
        }
        assert_eq!(laplacian_2d(10, 10).unwrap().dim(), 100);
    }
}
