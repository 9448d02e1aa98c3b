//! Periodically perforated domain `D_ε`, its background mesh of `D`, and the
//! two extension operators from `D_ε` to `D`.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::fem::{element_stiffness, solve_spd, DofMap};
use crate::geometry::cell::PeriodicCell;
use crate::geometry::cell_mesh::{structured_block, CellTemplate};
use crate::geometry::mesh::{lexicographic_order, EdgeTag, TaggedEdge, TriMesh};
use crate::scalar::{Point2, Real};

/// Axis-aligned rectangle `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect<T> {
    pub min: Point2<T>,
    pub max: Point2<T>,
}

impl<T: Real> Rect<T> {
    pub fn new(min: Point2<T>, max: Point2<T>) -> Result<Self> {
        if !(max[0] > min[0] && max[1] > min[1]) {
            return Err(Error::Geometry("rectangle must have positive extents".into()));
        }
        Ok(Self { min, max })
    }

    pub fn unit() -> Self {
        Self { min: [T::zero(); 2], max: [T::one(); 2] }
    }

    pub fn extent(&self) -> Point2<T> {
        [self.max[0] - self.min[0], self.max[1] - self.min[1]]
    }

    pub fn area(&self) -> T {
        let e = self.extent();
        e[0] * e[1]
    }
}

/// Background-mesh indices of one hole: interior nodes and the `∂S` ring, both
/// in template order so a single extension matrix serves every hole.
#[derive(Debug, Clone)]
pub struct HolePatch {
    pub interior: Vec<usize>,
    pub ring: Vec<usize>,
}

#[derive(Debug, Clone)]
struct HarmonicTemplate<T> {
    nodes: Vec<Point2<T>>,
    triangles: Vec<[usize; 3]>,
    interior: Vec<usize>,
    ring: Vec<usize>,
}

/// Dense discrete-harmonic extension `x_I = E · x_ring` shared by all holes
/// (the P1 Laplacian is invariant under the isotropic scaling of the tiles).
#[derive(Debug, Clone)]
struct ExtensionMatrix<T> {
    cols: usize,
    data: Vec<T>,
}

/// Mesh of `D_ε` plus the unperforated background mesh of `D`.
///
/// Every `D_ε` node is also a background node (`embedding`), so zero extension
/// is an exact nodal injection.
#[derive(Debug)]
pub struct PerforatedMesh<T> {
    pub mesh: TriMesh<T>,
    pub eps: T,
    pub domain: Rect<T>,
    pub background: TriMesh<T>,
    /// `D_ε` node index → background node index.
    pub embedding: Vec<usize>,
    /// Background triangles belonging to `D_ε`.
    pub solid: Vec<bool>,
    pub holes: Vec<HolePatch>,
    /// Number of tiles (complete or partial) covering `D`.
    pub candidate_cells: usize,
    harmonic: Option<HarmonicTemplate<T>>,
    extension: OnceLock<std::result::Result<Arc<ExtensionMatrix<T>>, Error>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum NodeKey {
    Lattice(usize, usize),
    Local(usize, usize),
}

struct Strip {
    first: usize,
    segments: usize,
    full: bool,
}

/// Structured `nx × ny` triangulation of `domain` with every boundary edge
/// tagged `DirichletOuter`. Nodes are numbered row by row.
pub fn rect_mesh<T: Real>(domain: Rect<T>, nx: usize, ny: usize) -> Result<TriMesh<T>> {
    if nx == 0 || ny == 0 {
        return Err(Error::Mesh("rectangle mesh needs at least one segment per side".into()));
    }
    let e = domain.extent();
    let (nodes, tris) = structured_block(nx, ny, |a, b| {
        [
            domain.min[0] + e[0] * T::from_count(a) / T::from_count(nx),
            domain.min[1] + e[1] * T::from_count(b) / T::from_count(ny),
        ]
    });
    let idx = |a: usize, b: usize| b * (nx + 1) + a;
    let mut edges = Vec::with_capacity(2 * (nx + ny));
    for a in 0..nx {
        edges.push(TaggedEdge { nodes: [idx(a, 0), idx(a + 1, 0)], tag: EdgeTag::DirichletOuter });
        edges.push(TaggedEdge { nodes: [idx(a, ny), idx(a + 1, ny)], tag: EdgeTag::DirichletOuter });
    }
    for b in 0..ny {
        edges.push(TaggedEdge { nodes: [idx(0, b), idx(0, b + 1)], tag: EdgeTag::DirichletOuter });
        edges.push(TaggedEdge { nodes: [idx(nx, b), idx(nx, b + 1)], tag: EdgeTag::DirichletOuter });
    }
    TriMesh::new(nodes, tris, edges)
}

fn lattice_lines<T: Real>(lo: T, hi: T, period: T, n: usize) -> (Vec<T>, Vec<Strip>) {
    let extent = hi - lo;
    let tol = T::lit(1e-9);
    let ratio = extent / period;
    let mut full = ratio.floor();
    if ratio - full > T::one() - tol {
        full += T::one();
    }
    let n_full = full.to_f64_lossy() as usize;
    let step = period / T::from_count(n);
    let mut lines = Vec::new();
    let mut strips = Vec::new();
    for c in 0..n_full {
        strips.push(Strip { first: lines.len(), segments: n, full: true });
        let start = lo + T::from_count(c) * period;
        for a in 0..n {
            lines.push(start + T::from_count(a) * step);
        }
    }
    let rest = extent - T::from_count(n_full) * period;
    if rest > tol * period {
        let m = (rest / step).ceil().to_f64_lossy().max(1.0) as usize;
        strips.push(Strip { first: lines.len(), segments: m, full: false });
        let start = lo + T::from_count(n_full) * period;
        for a in 0..m {
            lines.push(start + T::from_count(a) * rest / T::from_count(m));
        }
    }
    lines.push(hi);
    (lines, strips)
}

/// Tile `domain` with `ε`-scaled copies of the cell template at target size `h`
/// (domain units). Complete tiles carry a hole; partial tiles at the upper
/// edges of `D` are left unperforated.
pub fn build_perforated_mesh<T: Real>(
    domain: Rect<T>,
    cell: &PeriodicCell<T>,
    eps: T,
    h: T,
) -> Result<PerforatedMesh<T>> {
    let ext = domain.extent();
    if !(eps > T::zero()) || eps > ext[0].min(ext[1]) {
        return Err(Error::Geometry(format!("period {eps} must be positive and at most the domain extent")));
    }
    let tpl = CellTemplate::build(cell, h / eps)?;
    let l = cell.lengths();
    let (xs, cols) = lattice_lines(domain.min[0], domain.max[0], eps * l[0], tpl.nx);
    let (ys, rows) = lattice_lines(domain.min[1], domain.max[1], eps * l[1], tpl.ny);

    let mut keys: HashMap<NodeKey, usize> = HashMap::new();
    let mut nodes: Vec<Point2<T>> = Vec::new();
    let mut node = |key: NodeKey, p: Point2<T>, nodes: &mut Vec<Point2<T>>| -> usize {
        *keys.entry(key).or_insert_with(|| {
            nodes.push(p);
            nodes.len() - 1
        })
    };
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let mut solid: Vec<bool> = Vec::new();
    let mut holes = Vec::new();
    let mut cell_id = 0usize;
    for row in &rows {
        for col in &cols {
            let id = cell_id;
            cell_id += 1;
            if col.full && row.full {
                let origin = [xs[col.first], ys[row.first]];
                let map: Vec<usize> = (0..tpl.nodes.len())
                    .map(|i| match tpl.lattice[i] {
                        Some((a, b)) => {
                            let (gx, gy) = (col.first + a, row.first + b);
                            node(NodeKey::Lattice(gx, gy), [xs[gx], ys[gy]], &mut nodes)
                        }
                        None => {
                            let y = tpl.nodes[i];
                            let p = [origin[0] + eps * y[0], origin[1] + eps * y[1]];
                            node(NodeKey::Local(id, i), p, &mut nodes)
                        }
                    })
                    .collect();
                for t in &tpl.solid {
                    triangles.push([map[t[0]], map[t[1]], map[t[2]]]);
                    solid.push(true);
                }
                for t in &tpl.fill {
                    triangles.push([map[t[0]], map[t[1]], map[t[2]]]);
                    solid.push(false);
                }
                if !tpl.hole_ring.is_empty() {
                    holes.push(HolePatch {
                        interior: (0..tpl.nodes.len()).filter(|&i| tpl.in_hole[i]).map(|i| map[i]).collect(),
                        ring: tpl.hole_ring.iter().map(|&i| map[i]).collect(),
                    });
                }
            } else {
                let (bn, bt) = structured_block(col.segments, row.segments, |a, b| {
                    [xs[col.first + a], ys[row.first + b]]
                });
                let mx = col.segments;
                let map: Vec<usize> = (0..bn.len())
                    .map(|i| {
                        let (a, b) = (i % (mx + 1), i / (mx + 1));
                        let (gx, gy) = (col.first + a, row.first + b);
                        node(NodeKey::Lattice(gx, gy), bn[i], &mut nodes)
                    })
                    .collect();
                for t in bt {
                    triangles.push([map[t[0]], map[t[1]], map[t[2]]]);
                    solid.push(true);
                }
            }
        }
    }

    let order = lexicographic_order(&nodes);
    let mut renum = vec![0usize; nodes.len()];
    for (new, &old) in order.iter().enumerate() {
        renum[old] = new;
    }
    let bg_nodes: Vec<Point2<T>> = order.iter().map(|&o| nodes[o]).collect();
    let bg_tris: Vec<[usize; 3]> = triangles.iter().map(|t| [renum[t[0]], renum[t[1]], renum[t[2]]]).collect();
    for h in holes.iter_mut() {
        h.interior.iter_mut().for_each(|i| *i = renum[*i]);
        h.ring.iter_mut().for_each(|i| *i = renum[*i]);
    }
    let mut background = TriMesh::new(bg_nodes, bg_tris, Vec::new())?;
    background.edges = background
        .boundary_edges()
        .into_iter()
        .map(|e| TaggedEdge { nodes: e, tag: EdgeTag::DirichletOuter })
        .collect();

    let mut used = vec![false; background.n_nodes()];
    for (t, tri) in background.triangles.iter().enumerate() {
        if solid[t] {
            tri.iter().for_each(|&i| used[i] = true);
        }
    }
    let embedding: Vec<usize> = (0..used.len()).filter(|&i| used[i]).collect();
    let mut local = vec![usize::MAX; used.len()];
    for (k, &g) in embedding.iter().enumerate() {
        local[g] = k;
    }
    let perf_nodes: Vec<Point2<T>> = embedding.iter().map(|&g| background.nodes[g]).collect();
    let perf_tris: Vec<[usize; 3]> = background
        .triangles
        .iter()
        .zip(&solid)
        .filter(|(_, &s)| s)
        .map(|(t, _)| [local[t[0]], local[t[1]], local[t[2]]])
        .collect();
    let mut mesh = TriMesh::new(perf_nodes, perf_tris, Vec::new())?;
    let (x0, x1, y0, y1) = (xs[0], *xs.last().unwrap(), ys[0], *ys.last().unwrap());
    let on_outer = |p: Point2<T>| p[0] == x0 || p[0] == x1 || p[1] == y0 || p[1] == y1;
    mesh.edges = mesh
        .boundary_edges()
        .into_iter()
        .map(|e| {
            let outer = on_outer(mesh.nodes[e[0]]) && on_outer(mesh.nodes[e[1]]);
            TaggedEdge { nodes: e, tag: if outer { EdgeTag::DirichletOuter } else { EdgeTag::NeumannHole } }
        })
        .collect();

    let harmonic = (!tpl.hole_ring.is_empty()).then(|| HarmonicTemplate {
        nodes: tpl.nodes.clone(),
        triangles: tpl.fill.clone(),
        interior: (0..tpl.nodes.len()).filter(|&i| tpl.in_hole[i]).collect(),
        ring: tpl.hole_ring.clone(),
    });

    Ok(PerforatedMesh {
        mesh,
        eps,
        domain,
        background,
        embedding,
        solid,
        holes,
        candidate_cells: cols.len() * rows.len(),
        harmonic,
        extension: OnceLock::new(),
    })
}

impl<T: Real> PerforatedMesh<T> {
    pub fn hole_count(&self) -> usize {
        self.holes.len()
    }

    /// `|D_ε| / |D|` measured on the mesh.
    pub fn measure_ratio(&self) -> T {
        self.mesh.total_area() / self.background.total_area()
    }

    fn check_len(&self, field: &[T]) -> Result<()> {
        if field.len() != self.mesh.n_nodes() {
            return Err(Error::Dimension { expected: self.mesh.n_nodes(), found: field.len() });
        }
        Ok(())
    }

    /// Extension by zero: nodal values copied onto the background mesh, zero at
    /// hole-interior nodes. The extended function is understood as vanishing on
    /// the hole triangles (see [`Self::l2_norm_sq_zero_extended`]).
    pub fn zero_extend(&self, field: &[T]) -> Result<Vec<T>> {
        self.check_len(field)?;
        let mut out = vec![T::zero(); self.background.n_nodes()];
        for (v, &g) in field.iter().zip(&self.embedding) {
            out[g] = *v;
        }
        Ok(out)
    }

    /// Restriction of a background field to the `D_ε` nodes.
    pub fn restrict(&self, background_field: &[T]) -> Result<Vec<T>> {
        if background_field.len() != self.background.n_nodes() {
            return Err(Error::Dimension { expected: self.background.n_nodes(), found: background_field.len() });
        }
        Ok(self.embedding.iter().map(|&g| background_field[g]).collect())
    }

    /// `‖ṽ‖²_{L²(D)}` of a zero-extended field: exact P1 mass quadrature on the
    /// solid triangles, zero on the holes.
    pub fn l2_norm_sq_zero_extended(&self, extended: &[T]) -> T {
        let mut parts = Vec::with_capacity(self.background.n_triangles());
        for (t, tri) in self.background.triangles.iter().enumerate() {
            if self.solid[t] {
                let u = [extended[tri[0]], extended[tri[1]], extended[tri[2]]];
                parts.push(crate::fem::element_mass_form(self.background.triangle_area(t), u, u));
            }
        }
        crate::scalar::pairwise_sum(&parts)
    }

    fn extension(&self) -> Result<Option<Arc<ExtensionMatrix<T>>>> {
        let Some(tpl) = &self.harmonic else { return Ok(None) };
        self.extension
            .get_or_init(|| build_extension(tpl).map(Arc::new))
            .clone()
            .map(Some)
    }

    /// Extension by discrete harmonic fill: hole-interior values solve the P1
    /// Laplace problem on each hole with the field's trace on `∂S` as data.
    pub fn fill_extend(&self, field: &[T]) -> Result<Vec<T>> {
        let mut out = self.zero_extend(field)?;
        let Some(e) = self.extension()? else { return Ok(out) };
        let mut ring_vals = vec![T::zero(); e.cols];
        for hole in &self.holes {
            for (v, &g) in ring_vals.iter_mut().zip(&hole.ring) {
                *v = out[g];
            }
            for (r, &g) in hole.interior.iter().enumerate() {
                let row = &e.data[r * e.cols..(r + 1) * e.cols];
                out[g] = crate::scalar::dot(row, &ring_vals);
            }
        }
        Ok(out)
    }
}

fn build_extension<T: Real>(tpl: &HarmonicTemplate<T>) -> Result<ExtensionMatrix<T>> {
    let mesh = TriMesh::new(tpl.nodes.clone(), tpl.triangles.clone(), Vec::new())?;
    let mut node_to_dof = vec![None; mesh.n_nodes()];
    for (k, &i) in tpl.interior.iter().enumerate() {
        node_to_dof[i] = Some(k);
    }
    let dofs = DofMap::from_parts(node_to_dof, tpl.interior.len(), Vec::new());
    let identity = |_: Point2<T>| [[T::one(), T::zero()], [T::zero(), T::one()]];
    let k_ii = crate::fem::assemble_stiffness(&mesh, &identity, &dofs)?;
    let mut ring_pos = vec![usize::MAX; mesh.n_nodes()];
    for (k, &i) in tpl.ring.iter().enumerate() {
        ring_pos[i] = k;
    }
    // Coupling columns -K_{I,ring}.
    let (rows, cols) = (tpl.interior.len(), tpl.ring.len());
    let mut coupling = vec![vec![T::zero(); rows]; cols];
    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangles[t];
        let ke = element_stiffness(mesh.vertices(t), &identity)?;
        for (a, &i) in tri.iter().enumerate() {
            let Some(row) = dofs.dof(i) else { continue };
            for (b, &j) in tri.iter().enumerate() {
                if ring_pos[j] != usize::MAX {
                    coupling[ring_pos[j]][row] -= ke[a][b];
                }
            }
        }
    }
    let mut data = vec![T::zero(); rows * cols];
    let tol = T::lit(1e-12).max(T::epsilon() * T::lit(100.0));
    for (c, rhs) in coupling.iter().enumerate() {
        let sol = solve_spd(&k_ii, rhs, tol, 10 * rows.max(10))
            .map_err(|e| Error::Solver(format!("hole-local harmonic solve failed: {e}")))?;
        for r in 0..rows {
            data[r * cols + c] = sol.solution[r];
        }
    }
    Ok(ExtensionMatrix { cols, data })
}
