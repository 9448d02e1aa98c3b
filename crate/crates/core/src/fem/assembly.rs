use crate::error::{Error, Result};
use crate::fem::{DofMap, SparseOperator};
use crate::geometry::TriMesh;
use crate::scalar::{pairwise_sum, Mat2, Point2, Real};

/// Gradients of the three P1 basis functions and the (positive) area.
pub fn p1_gradients<T: Real>(v: [Point2<T>; 3]) -> Result<([Point2<T>; 3], T)> {
    let [a, b, c] = v;
    let twice = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let scale = crate::scalar::norm(crate::scalar::sub(b, a)).max(crate::scalar::norm(crate::scalar::sub(c, a)));
    if !(twice.abs() > T::epsilon() * T::lit(16.0) * scale * scale) {
        return Err(Error::Assembly(format!("degenerate triangle {v:?}")));
    }
    let g = [
        [(b[1] - c[1]) / twice, (c[0] - b[0]) / twice],
        [(c[1] - a[1]) / twice, (a[0] - c[0]) / twice],
        [(a[1] - b[1]) / twice, (b[0] - a[0]) / twice],
    ];
    Ok((g, twice.abs() / T::lit(2.0)))
}

/// Interior three-point rule, exact for quadratics: barycentric points
/// `(2/3, 1/6, 1/6)` and permutations, equal weights.
pub(crate) fn quadrature_points<T: Real>(v: [Point2<T>; 3]) -> [Point2<T>; 3] {
    let big = T::lit(2.0 / 3.0);
    let small = T::lit(1.0 / 6.0);
    let mut out = [[T::zero(); 2]; 3];
    for (q, p) in out.iter_mut().enumerate() {
        for d in 0..2 {
            p[d] = (0..3).map(|k| if k == q { big } else { small } * v[k][d]).sum();
        }
    }
    out
}

/// Element matrix `K_e[i][j] = ∫_e a∇φ_j·∇φ_i`, coefficient sampled at the
/// three interior quadrature points.
pub fn element_stiffness<T: Real, F>(v: [Point2<T>; 3], coefficient: &F) -> Result<[[T; 3]; 3]>
where
    F: Fn(Point2<T>) -> Mat2<T> + ?Sized,
{
    let (g, area) = p1_gradients(v)?;
    let mut abar = [[T::zero(); 2]; 2];
    for x in quadrature_points(v) {
        let a = coefficient(x);
        for r in 0..2 {
            for c in 0..2 {
                abar[r][c] += a[r][c];
            }
        }
    }
    let w = area / T::lit(3.0);
    let mut k = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let agj = [abar[0][0] * g[j][0] + abar[0][1] * g[j][1], abar[1][0] * g[j][0] + abar[1][1] * g[j][1]];
            k[i][j] = w * (agj[0] * g[i][0] + agj[1] * g[i][1]);
        }
    }
    Ok(k)
}

/// `∫_e u v` for P1 fields given by their vertex values.
#[inline]
pub fn element_mass_form<T: Real>(area: T, u: [T; 3], v: [T; 3]) -> T {
    let diag = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    let sums = (u[0] + u[1] + u[2]) * (v[0] + v[1] + v[2]);
    area / T::lit(12.0) * (diag + sums)
}

fn scatter_element<T: Real>(
    tri: [usize; 3],
    local: [[T; 3]; 3],
    dofs: &DofMap,
    triplets: &mut Vec<(usize, usize, T)>,
) {
    for a in 0..3 {
        let Some(r) = dofs.dof(tri[a]) else { continue };
        for b in 0..3 {
            if let Some(c) = dofs.dof(tri[b]) {
                triplets.push((r, c, local[a][b]));
            }
        }
    }
}

fn check_dofs<T: Real>(mesh: &TriMesh<T>, dofs: &DofMap) -> Result<()> {
    if dofs.n_nodes() != mesh.n_nodes() {
        return Err(Error::Dimension { expected: mesh.n_nodes(), found: dofs.n_nodes() });
    }
    Ok(())
}

/// Stiffness operator of `∫ a∇u·∇v` on the free DOFs. Neumann boundaries need
/// no treatment (natural condition).
pub fn assemble_stiffness<T: Real, F>(mesh: &TriMesh<T>, coefficient: &F, dofs: &DofMap) -> Result<SparseOperator<T>>
where
    F: Fn(Point2<T>) -> Mat2<T> + ?Sized,
{
    check_dofs(mesh, dofs)?;
    let mut triplets = Vec::with_capacity(9 * mesh.n_triangles());
    let mut symmetric = true;
    for t in 0..mesh.n_triangles() {
        let v = mesh.vertices(t);
        if symmetric {
            symmetric = quadrature_points(v).iter().all(|&x| {
                let a = coefficient(x);
                a[0][1] == a[1][0]
            });
        }
        let ke = element_stiffness(v, coefficient)?;
        scatter_element(mesh.triangles[t], ke, dofs, &mut triplets);
    }
    let mut op = SparseOperator::from_triplets(dofs.n_dofs(), triplets, symmetric)?;
    op.eliminated = dofs.eliminated().to_vec();
    Ok(op)
}

/// Consistent P1 mass operator on the free DOFs.
pub fn assemble_mass<T: Real>(mesh: &TriMesh<T>, dofs: &DofMap) -> Result<SparseOperator<T>> {
    check_dofs(mesh, dofs)?;
    let mut triplets = Vec::with_capacity(9 * mesh.n_triangles());
    for t in 0..mesh.n_triangles() {
        let area = mesh.triangle_area(t);
        if !(area > T::zero()) {
            return Err(Error::Assembly(format!("degenerate triangle {t}")));
        }
        let d = area / T::lit(6.0);
        let o = area / T::lit(12.0);
        let me = [[d, o, o], [o, d, o], [o, o, d]];
        scatter_element(mesh.triangles[t], me, dofs, &mut triplets);
    }
    let mut op = SparseOperator::from_triplets(dofs.n_dofs(), triplets, true)?;
    op.eliminated = dofs.eliminated().to_vec();
    Ok(op)
}

/// `∫ u v` for two nodal P1 fields.
pub fn l2_inner<T: Real>(mesh: &TriMesh<T>, u: &[T], v: &[T]) -> T {
    let parts: Vec<T> = mesh
        .triangles
        .iter()
        .enumerate()
        .map(|(t, tri)| {
            element_mass_form(
                mesh.triangle_area(t),
                [u[tri[0]], u[tri[1]], u[tri[2]]],
                [v[tri[0]], v[tri[1]], v[tri[2]]],
            )
        })
        .collect();
    pairwise_sum(&parts)
}

/// `uᵀ M φ_h` with `φ_h` the nodal interpolant of `phi`.
pub fn l2_pairing<T: Real>(mesh: &TriMesh<T>, u: &[T], phi: impl Fn(Point2<T>) -> T) -> T {
    let samples = mesh.interpolate(phi);
    l2_inner(mesh, u, &samples)
}

/// `∫ a∇u·∇u` of a nodal field over the whole mesh.
pub fn energy_norm_sq<T: Real, F>(mesh: &TriMesh<T>, coefficient: &F, u: &[T]) -> Result<T>
where
    F: Fn(Point2<T>) -> Mat2<T> + ?Sized,
{
    let mut parts = Vec::with_capacity(mesh.n_triangles());
    for t in 0..mesh.n_triangles() {
        let ke = element_stiffness(mesh.vertices(t), coefficient)?;
        let tri = mesh.triangles[t];
        let ue = [u[tri[0]], u[tri[1]], u[tri[2]]];
        let mut s = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                s += ue[i] * ke[i][j] * ue[j];
            }
        }
        parts.push(s);
    }
    Ok(pairwise_sum(&parts))
}
