use std::f64::consts::PI;

use perfhom_core::fem::{
    assemble_mass, assemble_stiffness, element_mass_form, element_stiffness, l2_inner, l2_pairing, p1_gradients,
    smallest_generalized_eigenvalue, solve_general, solve_spd, DofMap, SparseOperator, DEFAULT_TOL,
};
use perfhom_core::geometry::{build_cell_mesh, rect_mesh, CoefficientField, EdgeTag, Hole, PeriodicCell, Rect, TriMesh};
use perfhom_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn identity(_: [f64; 2]) -> [[f64; 2]; 2] {
    [[1.0, 0.0], [0.0, 1.0]]
}

const QUAD: [[f64; 3]; 3] = [[2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0]];

fn at(v: [[f64; 2]; 3], w: [f64; 3]) -> [f64; 2] {
    [w[0] * v[0][0] + w[1] * v[1][0] + w[2] * v[2][0], w[0] * v[0][1] + w[1] * v[1][1] + w[2] * v[2][1]]
}

#[test]
fn reference_element_matrices() {
    let v = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let k = element_stiffness(v, &identity).unwrap();
    let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
    for i in 0..3 {
        for j in 0..3 {
            assert!((k[i][j] - expected[i][j]).abs() < 1e-15);
        }
    }
    let mesh = TriMesh::new(v.to_vec(), vec![[0, 1, 2]], vec![]).unwrap();
    let m = assemble_mass(&mesh, &DofMap::identity(3)).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let e = 0.5 / 12.0 * if i == j { 2.0 } else { 1.0 };
            assert!((m.get(i, j) - e).abs() < 1e-15);
        }
    }
    assert!((element_mass_form(0.5f64, [1.0; 3], [1.0; 3]) - 0.5).abs() < 1e-15);
    assert!(matches!(element_stiffness([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], &identity), Err(Error::Assembly(_))));
}

#[test]
fn stiffness_is_linear_in_coefficient_and_kills_constants() {
    let cell = PeriodicCell::new([1.0, 1.0], Hole::Disk { center: [0.5, 0.5], radius: 0.3 }, CoefficientField::identity()).unwrap();
    let cm = build_cell_mesh(&cell, 0.1).unwrap();
    let dofs = DofMap::identity(cm.mesh.n_nodes());
    let k1 = assemble_stiffness(&cm.mesh, &identity, &dofs).unwrap();
    let k3 = assemble_stiffness(&cm.mesh, &|_: [f64; 2]| [[3.0, 0.0], [0.0, 3.0]], &dofs).unwrap();
    for (i, j, v) in k1.entries() {
        assert!((k3.get(i, j) - 3.0 * v).abs() < 1e-12);
    }
    let ku = k1.apply(&vec![1.0; dofs.n_dofs()]);
    assert!(ku.iter().all(|x| x.abs() < 1e-12));
    assert!(k1.symmetric && k1.asymmetry() < 1e-12);
    let skew = assemble_stiffness(&cm.mesh, &|_: [f64; 2]| [[1.0, 0.3], [0.0, 1.0]], &dofs).unwrap();
    assert!(!skew.symmetric);
    let m = assemble_mass(&cm.mesh, &dofs).unwrap();
    let total: f64 = m.entries().map(|e| e.2).sum();
    assert!((total - cm.mesh.total_area()).abs() < 1e-12);
}

#[test]
fn unit_square_mass_of_one_is_one() {
    let mesh = rect_mesh(Rect::<f64>::unit(), 7, 5).unwrap();
    let m = assemble_mass(&mesh, &DofMap::identity(mesh.n_nodes())).unwrap();
    let one = vec![1.0; mesh.n_nodes()];
    assert!((m.quadratic_form(&one) - 1.0).abs() < 1e-12);
    assert!((l2_pairing(&mesh, &one, |_| 1.0) - 1.0).abs() < 1e-12);
    assert!((l2_pairing(&mesh, &one, |x| x[0]) - 0.5).abs() < 1e-12);
}

#[test]
fn pairing_matches_direct_quadrature() {
    let cell = PeriodicCell::new([1.0, 1.0], Hole::Disk { center: [0.5, 0.5], radius: 0.25 }, CoefficientField::identity()).unwrap();
    let mesh = build_cell_mesh(&cell, 0.05).unwrap().mesh;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let u: Vec<f64> = (0..mesh.n_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let phi = |x: [f64; 2]| (3.0 * x[0]).sin() + x[1] * x[1];
    let mut direct = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let v = mesh.vertices(t);
        let area = mesh.triangle_area(t);
        for w in QUAD {
            let uh: f64 = (0..3).map(|a| w[a] * u[tri[a]]).sum();
            let ph: f64 = (0..3).map(|a| w[a] * phi(v[a])).sum();
            direct += area / 3.0 * uh * ph;
        }
    }
    assert!((l2_pairing(&mesh, &u, phi) - direct).abs() < 1e-10);
    // linear in u
    let u2: Vec<f64> = u.iter().map(|x| 2.0 * x).collect();
    assert!((l2_pairing(&mesh, &u2, phi) - 2.0 * direct).abs() < 1e-10);
}

#[test]
fn assembly_is_independent_of_element_order() {
    let cell = PeriodicCell::new([1.0, 1.0], Hole::Disk { center: [0.5, 0.5], radius: 0.25 }, CoefficientField::identity()).unwrap();
    let mesh = build_cell_mesh(&cell, 0.05).unwrap().mesh;
    let mut tris = mesh.triangles.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in (1..tris.len()).rev() {
        let j = rng.random_range(0..=i);
        tris.swap(i, j);
    }
    let permuted = TriMesh::new(mesh.nodes.clone(), tris, mesh.edges.clone()).unwrap();
    let coef = |x: [f64; 2]| [[1.0 + x[0], 0.2], [0.2, 2.0 + x[1] * x[1]]];
    let dofs = DofMap::identity(mesh.n_nodes());
    let a = assemble_stiffness(&mesh, &coef, &dofs).unwrap();
    let b = assemble_stiffness(&permuted, &coef, &dofs).unwrap();
    for (i, j, v) in a.entries() {
        assert!((b.get(i, j) - v).abs() < 1e-12);
    }
    assert_eq!(a.nnz(), b.nnz());
}

struct Errors {
    l2: f64,
    h1: f64,
}

fn poisson_errors(n: usize) -> Errors {
    let mesh = rect_mesh(Rect::unit(), n, n).unwrap();
    let dofs = DofMap::dirichlet(&mesh, &[EdgeTag::DirichletOuter]);
    let k = assemble_stiffness(&mesh, &identity, &dofs).unwrap();
    let m_full = assemble_mass(&mesh, &DofMap::identity(mesh.n_nodes())).unwrap();
    let u = |x: [f64; 2]| (PI * x[0]).sin() * (PI * x[1]).sin();
    let grad = |x: [f64; 2]| [PI * (PI * x[0]).cos() * (PI * x[1]).sin(), PI * (PI * x[0]).sin() * (PI * x[1]).cos()];
    let f = mesh.interpolate(|x| 2.0 * PI * PI * u(x));
    let rhs = dofs.gather(&m_full.apply(&f));
    let sol = solve_spd(&k, &rhs, DEFAULT_TOL, 10 * dofs.n_dofs()).unwrap();
    assert!(sol.relative_residual <= DEFAULT_TOL);
    let uh = dofs.scatter(&sol.solution);
    let (mut l2, mut h1) = (0.0, 0.0);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let v = mesh.vertices(t);
        let (g, area) = p1_gradients(v).unwrap();
        let gh = [(0..3).map(|a| uh[tri[a]] * g[a][0]).sum::<f64>(), (0..3).map(|a| uh[tri[a]] * g[a][1]).sum::<f64>()];
        for w in QUAD {
            let x = at(v, w);
            let e = u(x) - (0..3).map(|a| w[a] * uh[tri[a]]).sum::<f64>();
            let ge = grad(x);
            l2 += area / 3.0 * e * e;
            h1 += area / 3.0 * ((ge[0] - gh[0]).powi(2) + (ge[1] - gh[1]).powi(2));
        }
    }
    Errors { l2: l2.sqrt(), h1: h1.sqrt() }
}

#[test]
fn manufactured_solution_rates() {
    let e: Vec<Errors> = [8, 16, 32].iter().map(|&n| poisson_errors(n)).collect();
    let l2_rate = (e[0].l2 / e[2].l2).log2() / 2.0;
    let h1_rate = (e[0].h1 / e[2].h1).log2() / 2.0;
    assert!((l2_rate - 2.0).abs() < 0.2, "{l2_rate}");
    assert!((h1_rate - 1.0).abs() < 0.2, "{h1_rate}");
    assert!(e[1].l2 < 2.0 * (1.0 / 16.0f64).powi(2), "{}", e[1].l2);
}

#[test]
fn solver_trivia() {
    let id = SparseOperator::identity(5);
    let b = vec![1.0, -2.0, 3.0, 0.5, 0.0];
    let s = solve_spd(&id, &b, 1e-12, 10).unwrap();
    assert_eq!(s.solution, b);
    assert_eq!(s.iterations, 1);
    let z = solve_spd(&id, &[0.0; 5], 1e-12, 10).unwrap();
    assert!(z.solution.iter().all(|&x| x == 0.0));
    let mesh = rect_mesh(Rect::unit(), 16, 16).unwrap();
    let dofs = DofMap::dirichlet(&mesh, &[EdgeTag::DirichletOuter]);
    let k = assemble_stiffness(&mesh, &identity, &dofs).unwrap();
    let rhs = vec![1.0; dofs.n_dofs()];
    assert!(matches!(solve_spd(&k, &rhs, 1e-14, 3), Err(Error::Convergence { iterations: 3, .. })));
    let g = solve_general(&k, &rhs, 1e-10, 1000).unwrap();
    let c = solve_spd(&k, &rhs, 1e-12, 1000).unwrap();
    assert!(g.solution.iter().zip(&c.solution).all(|(a, b)| (a - b).abs() < 1e-8));
}

#[test]
fn smallest_eigenvalue_of_dirichlet_square() {
    let mesh = rect_mesh(Rect::unit(), 32, 32).unwrap();
    let dofs = DofMap::dirichlet(&mesh, &[EdgeTag::DirichletOuter]);
    let k = assemble_stiffness(&mesh, &identity, &dofs).unwrap();
    let m = assemble_mass(&mesh, &dofs).unwrap();
    let lam = smallest_generalized_eigenvalue(&k, &m, 500, 1e-12).unwrap();
    let exact = 2.0 * PI * PI;
    assert!(lam > exact && (lam - exact) / exact < 0.02, "{lam}");
}

#[test]
fn coordinate_export() {
    let mesh = TriMesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]], vec![]).unwrap();
    let k = assemble_stiffness(&mesh, &identity, &DofMap::identity(3)).unwrap();
    let mut out = Vec::new();
    k.write_coordinate(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().count(), k.nnz());
    assert!(text.lines().next().unwrap().starts_with("0 0 "));
}

#[test]
fn l2_inner_is_symmetric() {
    let mesh = rect_mesh(Rect::<f64>::unit(), 4, 4).unwrap();
    let u = mesh.interpolate(|x| x[0]);
    let v = mesh.interpolate(|x| x[1]);
    assert!((l2_inner(&mesh, &u, &v) - l2_inner(&mesh, &v, &u)).abs() < 1e-15);
    assert!((l2_inner(&mesh, &u, &v) - 0.25).abs() < 1e-12);
}
