//! Algebraic partitions of the index set with at least minimal overlap.
//!
//! A partition is minimally overlapping with respect to `A` when every stored nonzero
//! `A_ij` has both endpoints inside at least one subdomain. Disjoint classes come from
//! greedy graph growing on the sparsity graph (or from a structured grid), and the
//! overlap is then added one-sidedly: for a cross edge between classes `s < t`, the
//! endpoint in `t` joins `Ωˢ`.

use std::collections::{BTreeSet, VecDeque};
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::SparseSym;
use crate::problems::NodeGrid;

/// Subdomain index sets `Ωˢ` covering `{0..n}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    n: usize,
    domains: Vec<Vec<usize>>,
    multiplicity: Vec<usize>,
    /// subdomains containing each index, ascending
    memberships: Vec<Vec<usize>>,
}

impl Partition {
    /// Validate and normalize: each domain is sorted and deduplicated, the union must
    /// cover `{0..n}` and no domain may be empty.
    pub fn new(n: usize, mut domains: Vec<Vec<usize>>) -> Result<Self> {
        if domains.is_empty() {
            return Err(Error::InvalidPartition("no subdomains".into()));
        }
        let mut multiplicity = vec![0; n];
        let mut memberships = vec![Vec::new(); n];
        for (s, d) in domains.iter_mut().enumerate() {
            d.sort_unstable();
            d.dedup();
            if d.is_empty() {
                return Err(Error::InvalidPartition(format!("subdomain {s} is empty")));
            }
            if let Some(&last) = d.last() {
                if last >= n {
                    return Err(Error::InvalidPartition(format!(
                        "subdomain {s} contains index {last} >= n = {n}"
                    )));
                }
            }
            for &i in d.iter() {
                multiplicity[i] += 1;
                memberships[i].push(s);
            }
        }
        if let Some(i) = multiplicity.iter().position(|&m| m == 0) {
            return Err(Error::InvalidPartition(format!("index {i} is not covered")));
        }
        Ok(Partition { n, domains, multiplicity, memberships })
    }

    pub fn single(n: usize) -> Result<Self> {
        Self::new(n, vec![(0..n).collect()])
    }

    /// Build from a class label per index.
    pub fn from_labels(labels: &[usize], num_domains: usize) -> Result<Self> {
        let mut domains = vec![Vec::new(); num_domains];
        for (i, &c) in labels.iter().enumerate() {
            if c >= num_domains {
                return Err(Error::InvalidPartition(format!("label {c} out of range")));
            }
            domains[c].push(i);
        }
        Self::new(labels.len(), domains)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn num_domains(&self) -> usize {
        self.domains.len()
    }

    pub fn domain(&self, s: usize) -> &[usize] {
        &self.domains[s]
    }

    pub fn domains(&self) -> &[Vec<usize>] {
        &self.domains
    }

    /// μ_i = #{s : i ∈ Ωˢ}
    pub fn multiplicity(&self) -> &[usize] {
        &self.multiplicity
    }

    pub fn memberships(&self, i: usize) -> &[usize] {
        &self.memberships[i]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.domains.iter().map(Vec::len).collect()
    }

    /// Σ nˢ − n, an upper bound on rank(A₋).
    pub fn overlap_excess(&self) -> usize {
        self.domains.iter().map(Vec::len).sum::<usize>() - self.n
    }

    pub fn is_disjoint(&self) -> bool {
        self.multiplicity.iter().all(|&m| m == 1)
    }

    /// #{s : {i, j} ⊆ Ωˢ}
    pub fn shared_count(&self, i: usize, j: usize) -> usize {
        let (a, b) = (&self.memberships[i], &self.memberships[j]);
        let (mut x, mut y, mut count) = (0, 0, 0);
        while x < a.len() && y < b.len() {
            match a[x].cmp(&b[y]) {
                std::cmp::Ordering::Less => x += 1,
                std::cmp::Ordering::Greater => y += 1,
                std::cmp::Ordering::Equal => {
                    count += 1;
                    x += 1;
                    y += 1;
                }
            }
        }
        count
    }

    /// Exhaustive scan for a stored nonzero whose endpoints share no subdomain.
    pub fn check_minimal_overlap(&self, a: &SparseSym) -> Result<()> {
        if a.dim() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: a.dim() });
        }
        for (i, j, v) in a.entries() {
            if v != 0.0 && self.shared_count(i, j) == 0 {
                return Err(Error::UncoveredEntry { row: i, col: j });
            }
        }
        Ok(())
    }

    pub fn restriction(&self, s: usize) -> Restriction {
        Restriction::new(s, self.n, &self.domains[s])
    }

    /// Plain-text format: `N n`, then one line `s nˢ i₁ … i_nˢ` per subdomain (0-based).
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{} {}", self.num_domains(), self.n)?;
        for (s, d) in self.domains.iter().enumerate() {
            write!(w, "{} {}", s, d.len())?;
            for i in d {
                write!(w, " {i}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines().enumerate().filter(|(_, l)| {
            l.as_ref().map_or(true, |l| !l.trim().is_empty())
        });
        let parse = |line: usize, tok: Option<&str>| -> Result<usize> {
            tok.ok_or(Error::Parse { line, msg: "missing field".into() })?
                .parse()
                .map_err(|e| Error::Parse { line, msg: format!("{e}") })
        };
        let (ln, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
        let header = header?;
        let mut toks = header.split_whitespace();
        let count = parse(ln + 1, toks.next())?;
        let n = parse(ln + 1, toks.next())?;
        let mut domains = vec![Vec::new(); count];
        let mut seen = vec![false; count];
        for _ in 0..count {
            let (ln, line) =
                lines.next().ok_or(Error::Parse { line: 0, msg: "missing subdomain line".into() })?;
            let line = line?;
            let mut toks = line.split_whitespace();
            let s = parse(ln + 1, toks.next())?;
            let len = parse(ln + 1, toks.next())?;
            if s >= count || seen[s] {
                return Err(Error::Parse { line: ln + 1, msg: format!("bad subdomain id {s}") });
            }
            seen[s] = true;
            let idx: Vec<usize> = toks.map(|t| parse(ln + 1, Some(t))).collect::<Result<_>>()?;
            if idx.len() != len {
                return Err(Error::Parse {
                    line: ln + 1,
                    msg: format!("expected {len} indices, found {}", idx.len()),
                });
            }
            domains[s] = idx;
        }
        Self::new(n, domains)
    }
}

/// Index maps realizing `Rˢ` without forming it.
#[derive(Debug, Clone)]
pub struct Restriction {
    s: usize,
    local_to_global: Vec<usize>,
    global_to_local: Vec<Option<usize>>,
}

impl Restriction {
    fn new(s: usize, n: usize, indices: &[usize]) -> Self {
        let mut global_to_local = vec![None; n];
        for (l, &g) in indices.iter().enumerate() {
            global_to_local[g] = Some(l);
        }
        Restriction { s, local_to_global: indices.to_vec(), global_to_local }
    }

    pub fn domain_id(&self) -> usize {
        self.s
    }

    pub fn len(&self) -> usize {
        self.local_to_global.len()
    }

    pub fn is_empty(&self) -> bool {
        self.local_to_global.is_empty()
    }

    pub fn global(&self, local: usize) -> usize {
        self.local_to_global[local]
    }

    pub fn local(&self, global: usize) -> Option<usize> {
        self.global_to_local[global]
    }

    pub fn indices(&self) -> &[usize] {
        &self.local_to_global
    }

    /// Rˢ·x
    pub fn restrict(&self, x: &[f64]) -> Vec<f64> {
        self.local_to_global.iter().map(|&g| x[g]).collect()
    }

    /// y += Rˢᵀ·x_local
    pub fn prolong_add(&self, x_local: &[f64], y: &mut [f64]) {
        for (&g, &v) in self.local_to_global.iter().zip(x_local) {
            y[g] += v;
        }
    }

    /// Rˢᵀ·x_local as a full-length vector.
    pub fn extend(&self, x_local: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.global_to_local.len()];
        self.prolong_add(x_local, &mut y);
        y
    }
}

fn adjacency(a: &SparseSym) -> Vec<Vec<usize>> {
    (0..a.dim())
        .map(|i| a.row(i).0.iter().copied().filter(|&j| j != i).collect())
        .collect()
}

fn bfs_distances(adj: &[Vec<usize>], sources: &[usize]) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    let mut queue = VecDeque::new();
    for &s in sources {
        dist[s] = 0;
        queue.push_back(s);
    }
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Farthest vertex from `sources`; unreachable vertices count as infinitely far.
fn farthest(dist: &[usize]) -> usize {
    let mut best = 0;
    for (v, &d) in dist.iter().enumerate() {
        if d > dist[best] {
            best = v;
        }
    }
    best
}

/// Disjoint classes from greedy graph growing plus boundary refinement.
///
/// Seeds are spread by repeated farthest-vertex searches from a seeded random start.
/// Regions then grow breadth-first, the currently smallest region claiming next, and a
/// refinement pass moves boundary vertices when that lowers the edge cut without
/// breaking balance or improves balance at no cut cost. Deterministic for fixed inputs.
pub fn partition_graph(a: &SparseSym, num_parts: usize, seed: u64) -> Result<Partition> {
    let n = a.dim();
    if num_parts == 0 {
        return Err(Error::Config("number of subdomains must be at least 1".into()));
    }
    if num_parts > n {
        return Err(Error::Config(format!("{num_parts} subdomains requested for n = {n}")));
    }
    if num_parts == 1 {
        return Partition::single(n);
    }
    let adj = adjacency(a);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.gen_range(0..n);

    let mut seeds = vec![farthest(&bfs_distances(&adj, &[start]))];
    while seeds.len() < num_parts {
        let dist = bfs_distances(&adj, &seeds);
        seeds.push(farthest(&dist));
    }

    const UNSET: usize = usize::MAX;
    let mut label = vec![UNSET; n];
    let mut sizes = vec![0usize; num_parts];
    let mut queues: Vec<VecDeque<usize>> = seeds.iter().map(|&s| VecDeque::from([s])).collect();
    let mut assigned = 0;
    while assigned < n {
        let part = (0..num_parts)
            .filter(|&p| !queues[p].is_empty())
            .min_by_key(|&p| (sizes[p], p));
        let Some(part) = part else {
            // disconnected remainder: hand the first free vertex to the smallest class
            let v = label.iter().position(|&l| l == UNSET).unwrap();
            let p = (0..num_parts).min_by_key(|&p| (sizes[p], p)).unwrap();
            queues[p].push_back(v);
            continue;
        };
        while let Some(v) = queues[part].pop_front() {
            if label[v] != UNSET {
                continue;
            }
            label[v] = part;
            sizes[part] += 1;
            assigned += 1;
            for &w in &adj[v] {
                if label[w] == UNSET {
                    queues[part].push_back(w);
                }
            }
            break;
        }
    }

    refine(&adj, &mut label, &mut sizes);
    Partition::from_labels(&label, num_parts)
}

fn refine(adj: &[Vec<usize>], label: &mut [usize], sizes: &mut [usize]) {
    let n = label.len();
    let parts = sizes.len();
    let max_size = (n as f64 * 1.03 / parts as f64).ceil() as usize;
    let mut conn = vec![0usize; parts];
    for _ in 0..20 {
        let mut moved = 0;
        for v in 0..n {
            let s = label[v];
            if adj[v].iter().all(|&w| label[w] == s) || sizes[s] <= 1 {
                continue;
            }
            for &w in &adj[v] {
                conn[label[w]] += 1;
            }
            let mut best: Option<(usize, isize)> = None;
            for &w in &adj[v] {
                let t = label[w];
                if t == s {
                    continue;
                }
                let gain = conn[t] as isize - conn[s] as isize;
                let allowed = (gain > 0 && sizes[t] < max_size)
                    || (gain == 0 && sizes[s] > sizes[t] + 1)
                    || (sizes[s] > max_size && sizes[t] + 1 < sizes[s] && gain >= -1);
                if allowed && best.map_or(true, |(bt, bg)| gain > bg || (gain == bg && t < bt)) {
                    best = Some((t, gain));
                }
            }
            for &w in &adj[v] {
                conn[label[w]] = 0;
            }
            if let Some((t, _)) = best {
                label[v] = t;
                sizes[s] -= 1;
                sizes[t] += 1;
                moved += 1;
            }
        }
        if moved == 0 {
            break;
        }
    }
}

/// Add one-sided overlap to disjoint classes so that every nonzero of `A` is interior
/// to some subdomain. The smaller subdomain id owns each cross edge.
pub fn ensure_minimal_overlap(a: &SparseSym, classes: &Partition) -> Result<Partition> {
    if !classes.is_disjoint() {
        return Err(Error::InvalidPartition("classes must be disjoint".into()));
    }
    if a.dim() != classes.dim() {
        return Err(Error::DimensionMismatch { expected: classes.dim(), got: a.dim() });
    }
    let class_of: Vec<usize> = (0..a.dim()).map(|i| classes.memberships(i)[0]).collect();
    let mut domains: Vec<BTreeSet<usize>> =
        classes.domains().iter().map(|d| d.iter().copied().collect()).collect();
    for (i, j, v) in a.entries() {
        if v == 0.0 {
            continue;
        }
        let (s, t) = (class_of[i], class_of[j]);
        if s < t {
            domains[s].insert(j);
        }
    }
    Partition::new(a.dim(), domains.into_iter().map(|d| d.into_iter().collect()).collect())
}

/// Checkerboard of `k × k` node blocks on a structured grid (`num_parts = k²`), with all
/// free dofs of a node in its block, followed by [`ensure_minimal_overlap`].
pub fn regular_partition(a: &SparseSym, grid: &NodeGrid, num_parts: usize) -> Result<Partition> {
    let k = (num_parts as f64).sqrt().round() as usize;
    if k == 0 || k * k != num_parts {
        return Err(Error::Config(format!("{num_parts} is not a perfect square")));
    }
    if grid.nodes_x % k != 0 || grid.nodes_y % k != 0 {
        return Err(Error::Config(format!(
            "node grid {}x{} is not divisible into {k}x{k} blocks",
            grid.nodes_x, grid.nodes_y
        )));
    }
    let (bx, by) = (grid.nodes_x / k, grid.nodes_y / k);
    let mut labels = vec![usize::MAX; a.dim()];
    for iy in 0..grid.nodes_y {
        for ix in 0..grid.nodes_x {
            let block = (ix / bx) + k * (iy / by);
            for &dof in grid.node_dofs(ix, iy) {
                labels[dof] = block;
            }
        }
    }
    if labels.iter().any(|&l| l == usize::MAX) {
        return Err(Error::Config("grid does not describe every dof".into()));
    }
    let classes = Partition::from_labels(&labels, num_parts)?;
    ensure_minimal_overlap(a, &classes)
}

/// Greedy colour count of the subdomain interaction graph: `s` and `t` interact when
/// some stored entry of `pattern` couples an index of `Ωˢ` with one of `Ωᵗ` (shared
/// indices interact through the diagonal). The result bounds the minimal colouring
/// constant from above.
pub fn coloring_bound(pattern: &SparseSym, p: &Partition) -> usize {
    let nd = p.num_domains();
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); nd];
    for i in 0..pattern.dim() {
        let (cols, _) = pattern.row(i);
        for &j in cols {
            for &s in p.memberships(i) {
                for &t in p.memberships(j) {
                    if s != t {
                        adj[s].insert(t);
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..nd).collect();
    order.sort_by_key(|&s| (std::cmp::Reverse(adj[s].len()), s));
    let mut color = vec![usize::MAX; nd];
    for &s in &order {
        let used: BTreeSet<usize> = adj[s].iter().map(|&t| color[t]).collect();
        color[s] = (0..).find(|c| !used.contains(c)).unwrap();
    }
    color.iter().max().map_or(0, |&c| c + 1)
}
