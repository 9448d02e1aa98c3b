use std::f64::consts::PI;
use std::sync::Arc;

use perfhom_core::geometry::{build_perforated_mesh, rect_mesh, CoefficientField, Hole, PeriodicCell, Rect};
use perfhom_core::scalar::dot;
use perfhom_core::spde::{
    coarse_increments, energy_diagnostics, run_ensemble, simulate_path, sine_mode, sine_mode_indices,
    wiener_increments, Equation, NoiseModel, ProblemSpec, ScalarField, SolverKind, SpdeSystem,
};
use perfhom_core::Error;

const IDENTITY: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];

fn zero() -> ScalarField<f64> {
    Arc::new(|_| 0.0)
}

fn macro_spec(noise: NoiseModel<f64>, initial: ScalarField<f64>, t: f64, dt: f64) -> ProblemSpec<f64> {
    ProblemSpec {
        forcing: Arc::new(|_, _| 0.0),
        forcing_is_static: true,
        noise,
        initial,
        t_final: t,
        dt,
        substeps: 1,
        equation: Equation::Macro { b: IDENTITY, theta: 1.0 },
        source_weight: 1.0,
    }
}

fn sine11() -> ScalarField<f64> {
    sine_mode(1, 1, Rect::unit())
}

#[test]
fn zero_data_stay_zero() {
    let mesh = rect_mesh(Rect::unit(), 8, 8).unwrap();
    let sys = SpdeSystem::assemble(&macro_spec(NoiseModel::none(1), zero(), 0.1, 0.01), &mesh, SolverKind::Direct).unwrap();
    let path = simulate_path(&sys, 7, 1).unwrap();
    assert_eq!(path.states.len(), 11);
    assert!(path.states.iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn mode_indices_follow_wavenumber_order() {
    assert_eq!(sine_mode_indices(6), vec![(1, 1), (1, 2), (2, 1), (2, 2), (1, 3), (3, 1)]);
    assert_eq!(sine_mode_indices(0), vec![]);
    let many = sine_mode_indices(40);
    assert!(many.windows(2).all(|w| w[0].0 * w[0].0 + w[0].1 * w[0].1 <= w[1].0 * w[1].0 + w[1].1 * w[1].1));
}

#[test]
fn increments_are_standard_gaussian_and_refine_consistently() {
    let noise = NoiseModel::sine_series(3, 1.0, 1.0, Rect::unit(), 42).unwrap();
    let seed = noise.path_seed(3);
    let dt = 0.01;
    let n = 20_000u64;
    let (mut s1, mut s2) = (0.0, 0.0);
    for step in 0..n {
        for w in wiener_increments(&noise, dt, step, seed) {
            s1 += w;
            s2 += w * w;
        }
    }
    let count = (3 * n) as f64;
    let mean = s1 / count;
    let var = s2 / count;
    // SE of the mean is sqrt(dt/count); of the variance sqrt(2/count)·dt.
    assert!(mean.abs() < 4.0 * (dt / count).sqrt(), "{mean}");
    assert!((var / dt - 1.0).abs() < 4.0 * (2.0 / count).sqrt(), "{var}");

    for step in 0..50 {
        let coarse = coarse_increments(&noise, dt, step, 2, seed);
        let a = wiener_increments(&noise, dt / 2.0, 2 * step, seed);
        let b = wiener_increments(&noise, dt / 2.0, 2 * step + 1, seed);
        for i in 0..3 {
            assert!((coarse[i] - a[i] - b[i]).abs() < 1e-15);
        }
    }
    assert_ne!(noise.path_seed(0), noise.path_seed(1));
    assert_ne!(wiener_increments(&noise, dt, 0, seed), wiener_increments(&noise, dt, 1, seed));
}

#[test]
fn paths_are_deterministic_per_seed() {
    let mesh = rect_mesh(Rect::unit(), 8, 8).unwrap();
    let noise = NoiseModel::sine_series(4, 0.5, 1.0, Rect::unit(), 9).unwrap();
    let sys = SpdeSystem::assemble(&macro_spec(noise, sine11(), 0.05, 0.01), &mesh, SolverKind::Direct).unwrap();
    let a = simulate_path(&sys, 11, 1).unwrap();
    let b = simulate_path(&sys, 11, 1).unwrap();
    let c = simulate_path(&sys, 12, 1).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.states.last(), c.states.last());
    let mut text = Vec::new();
    a.write_table(&mut text, 1).unwrap();
    assert_eq!(String::from_utf8(text).unwrap().lines().count(), 6);
}

#[test]
fn ensemble_matches_single_paths_for_any_batch() {
    let mesh = rect_mesh(Rect::unit(), 8, 8).unwrap();
    let noise = NoiseModel::sine_series(4, 0.5, 1.0, Rect::unit(), 9).unwrap();
    let spec = macro_spec(noise, sine11(), 0.05, 0.01);
    let direct = SpdeSystem::assemble(&spec, &mesh, SolverKind::Direct).unwrap();
    let iterative = SpdeSystem::assemble(&spec, &mesh, SolverKind::Iterative).unwrap();
    let seeds: Vec<u64> = (0..5).map(|p| spec.noise.path_seed(p)).collect();
    let obs = |_: usize, s: &[&[f64]]| s.iter().map(|v| v.to_vec()).collect::<Vec<_>>();
    let r3 = run_ensemble(&[&direct, &iterative], &seeds, 3, obs).unwrap();
    let r1 = run_ensemble(&[&direct, &iterative], &seeds, 1, obs).unwrap();
    assert_eq!(r3, r1);
    for (p, &seed) in seeds.iter().enumerate() {
        let path = simulate_path(&direct, seed, 1).unwrap();
        for (n, state) in path.states.iter().enumerate() {
            assert_eq!(&direct.nodal(&r3[p][n][0]), state);
            let diff = r3[p][n][0].iter().zip(&r3[p][n][1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-8, "direct vs iterative {diff}");
        }
    }
}

#[test]
fn mismatched_grids_are_rejected() {
    let mesh = rect_mesh(Rect::unit(), 4, 4).unwrap();
    let a = SpdeSystem::assemble(&macro_spec(NoiseModel::none(0), zero(), 0.1, 0.01), &mesh, SolverKind::Direct).unwrap();
    let b = SpdeSystem::assemble(&macro_spec(NoiseModel::none(0), zero(), 0.1, 0.02), &mesh, SolverKind::Direct).unwrap();
    let r = run_ensemble(&[&a, &b], &[1], 1, |_, _| ());
    assert!(matches!(r, Err(Error::GridMismatch(_))));
    let bad = macro_spec(NoiseModel::none(0), zero(), 0.1, 0.03);
    assert!(matches!(SpdeSystem::assemble(&bad, &mesh, SolverKind::Direct), Err(Error::Invalid(_))));
}

#[test]
fn understated_noise_bound_is_rejected() {
    let mesh = rect_mesh(Rect::unit(), 8, 8).unwrap();
    let mode = sine11();
    let noise = NoiseModel::new(vec![mode], 0, 0.5, None, "understated").unwrap();
    let r = SpdeSystem::assemble(&macro_spec(noise, zero(), 0.1, 0.01), &mesh, SolverKind::Direct);
    assert!(matches!(r, Err(Error::Invalid(_))));
    assert!(NoiseModel::<f64>::new(vec![sine11()], 0, 0.0, None, "zero").is_err());
}

/// Manufactured solution `u = (1 + t) sin(πx) sin(πy)`: the error at `T`
/// is first order in `Δt` plus second order in `h`.
#[test]
fn deterministic_heat_equation_manufactured_solution() {
    let exact = |x: [f64; 2], t: f64| (1.0 + t) * (PI * x[0]).sin() * (PI * x[1]).sin();
    let run = |n: usize, dt: f64| {
        let mesh = rect_mesh(Rect::unit(), n, n).unwrap();
        let spec = ProblemSpec {
            forcing: Arc::new(move |x: [f64; 2], t: f64| {
                (PI * x[0]).sin() * (PI * x[1]).sin() * (1.0 + 2.0 * PI * PI * (1.0 + t))
            }),
            forcing_is_static: false,
            ..macro_spec(NoiseModel::none(0), Arc::new(move |x| exact(x, 0.0)), 0.5, dt)
        };
        let sys = SpdeSystem::assemble(&spec, &mesh, SolverKind::Direct).unwrap();
        let path = simulate_path(&sys, 0, sys.steps).unwrap();
        let u = path.states.last().unwrap();
        let err = mesh.nodes.iter().zip(u).map(|(&x, &v)| (v - exact(x, 0.5)).abs()).fold(0.0, f64::max);
        assert!(path.residuals.iter().all(|&r| r < 1e-12));
        err
    };
    let e1 = run(32, 0.01);
    let e2 = run(32, 0.005);
    assert!(e1 < 0.02, "{e1}");
    let ratio = e1 / e2;
    assert!((1.6..2.3).contains(&ratio), "time order ratio {ratio}");
}

#[test]
fn noise_free_energy_is_nonincreasing() {
    let pm = build_perforated_mesh(
        Rect::unit(),
        &PeriodicCell::new([1.0, 1.0], Hole::Disk { center: [0.5, 0.5], radius: 0.25 }, CoefficientField::identity())
            .unwrap(),
        0.25,
        0.25 / 8.0,
    )
    .unwrap();
    let cell = PeriodicCell::new([1.0, 1.0], Hole::Disk { center: [0.5, 0.5], radius: 0.25 }, CoefficientField::identity())
        .unwrap();
    let init: ScalarField<f64> = Arc::new(|x| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]) * 16.0);
    let spec = ProblemSpec::micro(cell, 0.25, [0.0, 0.0], zero(), init, NoiseModel::none(0), 1.0, 0.05);
    let sys = SpdeSystem::assemble(&spec, &pm.mesh, SolverKind::Direct).unwrap();
    let path = simulate_path(&sys, 0, 1).unwrap();
    let diag = energy_diagnostics(&path, &sys).unwrap();
    assert!(diag.mass_sq.windows(2).all(|w| w[1] <= w[0]));
    // Discrete energy identity: ‖u^{n+1}‖² + 2Δt (u^{n+1})ᵀK u^{n+1} ≤ ‖u^n‖².
    let mut budget = diag.mass_sq[0];
    for n in 1..diag.mass_sq.len() {
        let u = sys.dofs.gather(&path.states[n]);
        budget -= 2.0 * sys.dt * sys.energy(&u);
        assert!(diag.mass_sq[n] <= budget + 1e-12);
    }
    assert!(diag.cumulative_energy.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn solution_is_linear_in_the_noise() {
    let mesh = rect_mesh(Rect::unit(), 8, 8).unwrap();
    let noise = NoiseModel::sine_series(3, 1.0, 1.0, Rect::unit(), 5).unwrap();
    let one = SpdeSystem::assemble(&macro_spec(noise.clone(), zero(), 0.1, 0.01), &mesh, SolverKind::Direct).unwrap();
    let two = SpdeSystem::assemble(&macro_spec(noise.scaled(2.0), zero(), 0.1, 0.01), &mesh, SolverKind::Direct).unwrap();
    let a = simulate_path(&one, 3, 10).unwrap();
    let b = simulate_path(&two, 3, 10).unwrap();
    let scale = a.states[1].iter().map(|v| v.abs()).fold(0.0, f64::max);
    assert!(scale > 0.0);
    for (x, y) in a.states[1].iter().zip(&b.states[1]) {
        assert!((2.0 * x - y).abs() < 1e-12 * scale);
    }
}

#[test]
fn unit_inertia_macro_equals_unperforated_micro() {
    let cell = PeriodicCell::new([1.0, 1.0], Hole::Empty, CoefficientField::identity()).unwrap();
    let pm = build_perforated_mesh(Rect::unit(), &cell, 0.25, 0.25 / 4.0).unwrap();
    let noise = NoiseModel::sine_series(2, 1.0, 1.0, Rect::unit(), 1).unwrap();
    let micro = ProblemSpec::micro(cell, 0.25, [0.0, 0.0], Arc::new(|x| x[0]), sine11(), noise, 0.1, 0.01);
    let mac = micro.with_effective(IDENTITY, 1.0);
    let a = SpdeSystem::assemble(&micro, &pm.mesh, SolverKind::Direct).unwrap();
    let b = SpdeSystem::assemble(&mac, &pm.mesh, SolverKind::Direct).unwrap();
    assert_eq!(simulate_path(&a, 4, 1).unwrap(), simulate_path(&b, 4, 1).unwrap());
}

/// Exact second moment of `(u_h^n, φ)` for the scheme started at zero:
/// `Σ_k Δt Σ_i (s_iᵀ A⁻¹ v_k)²` with `v_0 = w`, `v_{k+1} = θ M A⁻¹ v_k`,
/// using a dense factorization of `A = θM + ΔtK`.
fn exact_discrete_second_moment(sys: &SpdeSystem<f64>, w: &[f64]) -> f64 {
    let n = sys.n_dofs();
    let mut a = vec![0.0; n * n];
    let (m, k) = (&sys.mass, &sys.stiffness);
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let mi = m.apply(&e);
        let ki = k.apply(&e);
        for j in 0..n {
            a[j * n + i] = sys.inertia * mi[j] + sys.dt * ki[j];
        }
    }
    // Dense LU without pivoting (A is SPD).
    for p in 0..n {
        for r in p + 1..n {
            let f = a[r * n + p] / a[p * n + p];
            a[r * n + p] = f;
            for c in p + 1..n {
                a[r * n + c] -= f * a[p * n + c];
            }
        }
    }
    let solve = |b: &[f64]| {
        let mut x = b.to_vec();
        for r in 0..n {
            for c in 0..r {
                x[r] -= a[r * n + c] * x[c];
            }
        }
        for r in (0..n).rev() {
            for c in r + 1..n {
                x[r] -= a[r * n + c] * x[c];
            }
            x[r] /= a[r * n + r];
        }
        x
    };
    let mut v = w.to_vec();
    let mut total = 0.0;
    for _ in 0..sys.steps {
        let y = solve(&v);
        for s in sys.noise_loads() {
            total += sys.dt * dot(&y, s).powi(2);
        }
        v = m.apply(&y).iter().map(|x| x * sys.inertia).collect();
    }
    total
}

#[test]
fn single_mode_ou_matches_closed_form() {
    let sigma = 1.0;
    let t = 0.2;
    let lambda = 2.0 * PI * PI;
    let closed = sigma * sigma * (1.0 - (-2.0 * lambda * t).exp()) / (2.0 * lambda);
    let mesh = rect_mesh(Rect::unit(), 16, 16).unwrap();
    let noise = NoiseModel::single_sine(sigma, 1, 1, Rect::unit(), 2024).unwrap();
    let mut exact = Vec::new();
    for dt in [0.004, 0.002, 0.001] {
        let sys = SpdeSystem::assemble(&macro_spec(noise.clone(), zero(), t, dt), &mesh, SolverKind::Direct).unwrap();
        let w = sys.pairing_weights(|x| sine11()(x));
        exact.push(exact_discrete_second_moment(&sys, &w));
    }
    // Deterministic weak error of the scheme is first order in Δt once the
    // spatial part (common to all three) is removed.
    let slope = ((exact[0] - exact[1]) / (exact[1] - exact[2])).log2();
    assert!((slope - 1.0).abs() < 0.15, "{slope} {exact:?}");
    // h = 1/16 and Δt = 1e-3 together leave a few percent of bias.
    assert!((exact[2] / closed - 1.0).abs() < 0.05, "{} vs {closed}", exact[2]);

    // Monte Carlo agrees with the exact discrete moment.
    let sys = SpdeSystem::assemble(&macro_spec(noise.clone(), zero(), t, 0.004), &mesh, SolverKind::Direct).unwrap();
    let w = sys.pairing_weights(|x| sine11()(x));
    let seeds: Vec<u64> = (0..1000).map(|p| noise.path_seed(p)).collect();
    let last = sys.steps;
    let out = run_ensemble(&[&sys], &seeds, 16, |n, s| if n == last { dot(s[0], &w).powi(2) } else { 0.0 }).unwrap();
    let samples: Vec<f64> = out.iter().map(|p| p[last]).collect();
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64;
    let se = (var / samples.len() as f64).sqrt();
    assert!((mean - exact[0]).abs() < 3.5 * se, "{mean} vs {} (se {se})", exact[0]);
}
