//! Periodic cell problems and the homogenized coefficient matrix.
//!
//! The corrector `χ^i` solves, for every periodic test function `v`,
//! `∫_{Y*} aᵀ∇(χ^i − y_i)·∇v = 0` with the natural condition on the hole
//! boundary, normalized to zero mean over `Y*`. With that convention
//!
//! ```text
//! β_ij = (1/|Y|) [ ∫_{Y*} a_ij − ∫_{Y*} Σ_k a_kj ∂_k χ^i ]
//! ```
//!
//! equals the energy form `(1/|Y|) ∫_{Y*} a(e_j − ∇χ^j)·(e_i − ∇χ^i)`; for
//! symmetric `a` the transpose is immaterial. The integrals over `Y` are taken
//! over `Y*` (the coefficient is only defined there).

use std::io::Write;

use crate::error::{Error, Result};
use crate::fem::{assemble_mass, assemble_stiffness, p1_gradients, quadrature_points, solve_general, solve_spd, DofMap, LinearOperator, SparseOperator};
use crate::geometry::{build_cell_mesh, sym_min_eigenvalue, CellMesh, PeriodicCell};
use crate::scalar::{pairwise_sum, Mat2, Real};

/// Correctors, homogenized matrix and volume fraction of one cell mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSolution<T> {
    /// Nodal `χ¹`, `χ²` on the cell mesh (periodic partners carry equal values).
    pub chi: [Vec<T>; 2],
    pub b: Mat2<T>,
    pub theta: T,
    /// Relative residual `‖Kχ − r‖/‖r‖` of each corrector system (zero when the
    /// load vanishes).
    pub residuals: [T; 2],
    /// Lattice spacing `l₁/n₁` of the mesh.
    pub h: T,
}

impl<T: Real> CellSolution<T> {
    pub fn ellipticity(&self) -> T {
        ellipticity_constant(self.b)
    }

    /// Text block: `theta`, `B` row-major, residuals and `h`, 17 significant digits.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let f = |x: T| format!("{:.16e}", x.to_f64_lossy());
        writeln!(w, "theta {}", f(self.theta))?;
        writeln!(w, "B {} {} {} {}", f(self.b[0][0]), f(self.b[0][1]), f(self.b[1][0]), f(self.b[1][1]))?;
        writeln!(w, "residuals {} {}", f(self.residuals[0]), f(self.residuals[1]))?;
        writeln!(w, "h {}", f(self.h))
    }

    /// Both correctors in the mesh-field format.
    pub fn write_correctors<W: Write>(&self, mesh: &CellMesh<T>, mut w: W) -> std::io::Result<()> {
        mesh.mesh.write_field(&mut w, "chi1", &self.chi[0])?;
        mesh.mesh.write_field(&mut w, "chi2", &self.chi[1])
    }
}

/// `min eig((B + Bᵀ)/2)`.
pub fn ellipticity_constant<T: Real>(b: Mat2<T>) -> T {
    let off = (b[0][1] + b[1][0]) * T::lit(0.5);
    sym_min_eigenvalue([[b[0][0], off], [off, b[1][1]]])
}

/// `K + ρ c cᵀ`: the periodic stiffness bordered by the mean-value constraint.
///
/// For a compatible load (`1ᵀr = 0`) its unique solution satisfies `Kχ = r`
/// and `cᵀχ = 0`, i.e. it is the solution of the Lagrange-multiplier system
/// with vanishing multiplier. (Nonsymmetric `K`: the same holds when the
/// constants also span the left kernel, which they do since the rows of a
/// periodic stiffness sum to zero, and so do its columns.)
struct Bordered<'a, T> {
    k: &'a SparseOperator<T>,
    c: &'a [T],
    rho: T,
}

impl<T: Real> LinearOperator<T> for Bordered<'_, T> {
    fn dim(&self) -> usize {
        self.k.dim()
    }

    fn apply_into(&self, x: &[T], y: &mut [T]) {
        self.k.apply_into(x, y);
        let s = self.rho * self.c.iter().zip(x).map(|(a, b)| *a * *b).sum::<T>();
        for (yi, ci) in y.iter_mut().zip(self.c) {
            *yi += s * *ci;
        }
    }

    fn diagonal(&self) -> Vec<T> {
        self.k.diagonal().into_iter().zip(self.c).map(|(d, c)| d + self.rho * *c * *c).collect()
    }
}

/// Load `r_v = ∫ aᵀe_i·∇v` on the periodic DOFs, with the sum of the
/// magnitudes of all element contributions as a round-off scale.
fn corrector_load<T: Real>(cell: &CellMesh<T>, coef: &PeriodicCell<T>, dofs: &DofMap, i: usize) -> Result<(Vec<T>, T)> {
    let mut load = vec![T::zero(); dofs.n_dofs()];
    let mut magnitude = T::zero();
    let third = T::one() / T::lit(3.0);
    for (t, tri) in cell.mesh.triangles.iter().enumerate() {
        let v = cell.mesh.vertices(t);
        let (g, area) = p1_gradients(v)?;
        // flux = Σ_q aᵀ(x_q) e_i / 3
        let mut flux = [T::zero(); 2];
        for x in quadrature_points(v) {
            let a = coef.coefficient_at(x);
            flux[0] += a[i][0] * third;
            flux[1] += a[i][1] * third;
        }
        for (a, &node) in tri.iter().enumerate() {
            if let Some(d) = dofs.dof(node) {
                let c = area * (flux[0] * g[a][0] + flux[1] * g[a][1]);
                load[d] += c;
                magnitude += c.abs();
            }
        }
    }
    Ok((load, magnitude))
}

struct CellSystem<T> {
    dofs: DofMap,
    stiffness: SparseOperator<T>,
    /// `c_d = ∫ φ_d`, so `cᵀχ = ∫_{Y*} χ`.
    weights: Vec<T>,
}

impl<T: Real> CellSystem<T> {
    fn new(cell: &CellMesh<T>, coef: &PeriodicCell<T>) -> Result<Self> {
        let dofs = DofMap::periodic(cell)?;
        let at = coef.coefficient().transposed();
        let l = coef.lengths();
        let wrapped = move |y: [T; 2]| at.eval([wrap(y[0], l[0]), wrap(y[1], l[1])]);
        let stiffness = assemble_stiffness(&cell.mesh, &wrapped, &dofs)?;
        let mass = assemble_mass(&cell.mesh, &dofs)?;
        let weights = mass.apply(&vec![T::one(); dofs.n_dofs()]);
        Ok(Self { dofs, stiffness, weights })
    }

    fn solve(&self, load: &[T], magnitude: T) -> Result<(Vec<T>, T)> {
        let n = self.dofs.n_dofs();
        let roundoff = T::epsilon() * T::lit(64.0) * magnitude;
        if load.iter().all(|x| x.abs() <= roundoff) {
            // Cancelling element contributions: the exact load is zero.
            return Ok((vec![T::zero(); n], T::zero()));
        }
        let total = pairwise_sum(load);
        if total.abs() > T::epsilon().sqrt() * magnitude {
            return Err(Error::SingularSystem(format!(
                "load is not orthogonal to the constants (sum {total})"
            )));
        }
        // Remove the round-off component along the kernel.
        let mean = total / T::from_count(n);
        let rhs: Vec<T> = load.iter().map(|x| *x - mean).collect();

        let kdiag = self.stiffness.diagonal();
        let kavg = pairwise_sum(&kdiag) / T::from_count(n);
        let csq: T = self.weights.iter().map(|c| *c * *c).sum();
        let rho = kavg * T::from_count(n) / csq.max(T::min_positive_value());
        let op = Bordered { k: &self.stiffness, c: &self.weights, rho };
        let inner_tol = T::lit(1e-12).max(T::epsilon() * T::lit(64.0));
        let sol = if self.stiffness.symmetric {
            solve_spd(&op, &rhs, inner_tol, 20 * n.max(100))?
        } else {
            solve_general(&op, &rhs, inner_tol, 20 * n.max(100))?
        };
        let mut chi = sol.solution;

        let area: T = pairwise_sum(&self.weights);
        let m: T = self.weights.iter().zip(&chi).map(|(a, b)| *a * *b).sum::<T>() / area;
        for x in chi.iter_mut() {
            *x -= m;
        }
        let kchi = self.stiffness.apply(&chi);
        let num: T = kchi.iter().zip(load).map(|(a, b)| (*a - *b) * (*a - *b)).sum::<T>().sqrt();
        let den: T = load.iter().map(|x| *x * *x).sum::<T>().sqrt();
        Ok((chi, num / den))
    }
}

fn wrap<T: Real>(x: T, l: T) -> T {
    if x < T::zero() || x > l {
        x - (x / l).floor() * l
    } else {
        x
    }
}

/// Corrector `χ^i` (`i ∈ {0, 1}` for the directions `e₁`, `e₂`) as a nodal field
/// on `cell_mesh`, with its relative residual.
pub fn solve_corrector<T: Real>(cell_mesh: &CellMesh<T>, cell: &PeriodicCell<T>, i: usize) -> Result<(Vec<T>, T)> {
    if i > 1 {
        return Err(Error::Invalid(format!("direction index {i} outside {{0, 1}}")));
    }
    let sys = CellSystem::new(cell_mesh, cell)?;
    solve_with(&sys, cell_mesh, cell, i)
}

fn solve_with<T: Real>(sys: &CellSystem<T>, cell_mesh: &CellMesh<T>, cell: &PeriodicCell<T>, i: usize) -> Result<(Vec<T>, T)> {
    let (load, magnitude) = corrector_load(cell_mesh, cell, &sys.dofs, i)?;
    let (chi, res) = sys.solve(&load, magnitude)?;
    let residual_cap = T::lit(1e-9).max(T::epsilon() * T::lit(1e4));
    if res > residual_cap {
        return Err(Error::Convergence { iterations: 0, residual: res.to_f64_lossy() });
    }
    Ok((sys.dofs.scatter(&chi), res))
}

/// `B` and `ϑ` from nodal correctors on the same mesh.
pub fn homogenized_matrix<T: Real>(cell_mesh: &CellMesh<T>, cell: &PeriodicCell<T>, chi: &[Vec<T>; 2]) -> Result<(Mat2<T>, T)> {
    let n = cell_mesh.mesh.n_nodes();
    for c in chi {
        if c.len() != n {
            return Err(Error::Dimension { expected: n, found: c.len() });
        }
    }
    let third = T::one() / T::lit(3.0);
    let mut parts: [[Vec<T>; 2]; 2] = Default::default();
    let mut symmetric = true;
    for (t, tri) in cell_mesh.mesh.triangles.iter().enumerate() {
        let v = cell_mesh.mesh.vertices(t);
        let (g, area) = p1_gradients(v)?;
        let mut grad = [[T::zero(); 2]; 2];
        for (i, gi) in grad.iter_mut().enumerate() {
            for a in 0..3 {
                gi[0] += chi[i][tri[a]] * g[a][0];
                gi[1] += chi[i][tri[a]] * g[a][1];
            }
        }
        let mut abar = [[T::zero(); 2]; 2];
        for x in quadrature_points(v) {
            let a = cell.coefficient_at(x);
            symmetric &= a[0][1] == a[1][0];
            for r in 0..2 {
                for c in 0..2 {
                    abar[r][c] += a[r][c] * third;
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                let corr = abar[0][j] * grad[i][0] + abar[1][j] * grad[i][1];
                parts[i][j].push(area * (abar[i][j] - corr));
            }
        }
    }
    let measure = cell.measure();
    let mut b = [[T::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            b[i][j] = pairwise_sum(&parts[i][j]) / measure;
        }
    }
    if symmetric {
        // exact B is symmetric here; drop the solver's round-off so the
        // effective operator is recognized as symmetric downstream
        let off = T::lit(0.5) * (b[0][1] + b[1][0]);
        b[0][1] = off;
        b[1][0] = off;
    }
    Ok((b, cell_mesh.theta()))
}

/// Mesh the cell at size `h`, solve both correctors and assemble `B`.
pub fn solve_cell<T: Real>(cell: &PeriodicCell<T>, h: T) -> Result<(CellMesh<T>, CellSolution<T>)> {
    let mesh = build_cell_mesh(cell, h)?;
    let sol = solve_cell_on(&mesh, cell)?;
    Ok((mesh, sol))
}

/// Correctors and `B` on an existing cell mesh. The two corrector solves run
/// concurrently.
pub fn solve_cell_on<T: Real>(mesh: &CellMesh<T>, cell: &PeriodicCell<T>) -> Result<CellSolution<T>> {
    let sys = CellSystem::new(mesh, cell)?;
    let (r0, r1) = rayon::join(|| solve_with(&sys, mesh, cell, 0), || solve_with(&sys, mesh, cell, 1));
    let (c0, res0) = r0?;
    let (c1, res1) = r1?;
    let chi = [c0, c1];
    let (b, theta) = homogenized_matrix(mesh, cell, &chi)?;
    let h = mesh.lengths[0] / T::from_count(mesh.segments.0);
    Ok(CellSolution { chi, b, theta, residuals: [res0, res1], h })
}

/// One row of a mesh-refinement study.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementRow<T> {
    pub h: T,
    pub n_nodes: usize,
    pub b: Mat2<T>,
    pub theta: T,
}

/// Cell solutions for each target size in `hs`.
pub fn refinement_study<T: Real>(cell: &PeriodicCell<T>, hs: &[T]) -> Result<Vec<RefinementRow<T>>> {
    hs.iter()
        .map(|&h| {
            let (mesh, sol) = solve_cell(cell, h)?;
            Ok(RefinementRow { h: sol.h, n_nodes: mesh.mesh.n_nodes(), b: sol.b, theta: sol.theta })
        })
        .collect()
}

/// Observed convergence order `p` from values at three mesh sizes, assuming
/// `v(h) = v* + C h^p`: solves `(v₁ − v₂)/(v₂ − v₃) = (h₁^p − h₂^p)/(h₂^p − h₃^p)`
/// for `p ∈ (0.1, 10)`. `None` when the differences do not have a common sign.
pub fn observed_order(h: [f64; 3], v: [f64; 3]) -> Option<f64> {
    let d1 = v[0] - v[1];
    let d2 = v[1] - v[2];
    if !(d1 * d2 > 0.0) || !(h[0] > h[1] && h[1] > h[2] && h[2] > 0.0) {
        return None;
    }
    let target = d1 / d2;
    let g = |p: f64| (h[0].powf(p) - h[1].powf(p)) / (h[1].powf(p) - h[2].powf(p)) - target;
    let (mut lo, mut hi) = (0.1, 10.0);
    if g(lo) * g(hi) > 0.0 {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(lo) * g(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Richardson extrapolation of an order-`p` sequence from its two finest values.
pub fn richardson(h: [f64; 2], v: [f64; 2], p: f64) -> f64 {
    let r = (h[0] / h[1]).powf(p);
    (r * v[1] - v[0]) / (r - 1.0)
}
