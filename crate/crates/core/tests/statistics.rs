use std::f64::consts::PI;
use std::sync::Arc;

use perfhom_core::fem::l2_pairing;
use perfhom_core::geometry::{build_perforated_mesh, rect_mesh, CoefficientField, Hole, PeriodicCell, Rect};
use perfhom_core::spde::{
    sine_mode, simulate_path, Equation, NoiseModel, ProblemSpec, SamplePath, ScalarField, SolverKind, SpdeSystem,
};
use perfhom_core::statistics::{
    est1_check, estimate, fit_exponential, observe_ensemble, run_comparison, stationary_experiment, strong_l2_gap,
    weak_pairing_gap, write_convergence_csv, EnsembleResult, EnsembleSeries, Est1Bound, MicroMember,
    StationaryMember,
};
use perfhom_core::Error;

const IDENTITY: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];

fn spec(noise: NoiseModel<f64>, initial: ScalarField<f64>, f: f64, t: f64, dt: f64) -> ProblemSpec<f64> {
    ProblemSpec {
        forcing: Arc::new(move |_, _| f),
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

fn phi(k: usize, l: usize) -> ScalarField<f64> {
    sine_mode(k, l, Rect::unit())
}

fn seeds(noise: &NoiseModel<f64>, n: u64) -> Vec<u64> {
    (0..n).map(|p| noise.path_seed(p)).collect()
}

fn disk_cell() -> PeriodicCell<f64> {
    PeriodicCell::new([1.0, 1.0], Hole::Disk { center: [0.5, 0.5], radius: 0.25 }, CoefficientField::identity()).unwrap()
}

#[test]
fn zero_ensemble_has_zero_energy_both_ways() {
    let mesh = rect_mesh(Rect::unit(), 6, 6).unwrap();
    let sys = SpdeSystem::assemble(&spec(NoiseModel::none(3), Arc::new(|_| 0.0), 0.0, 0.1, 0.01), &mesh, SolverKind::Direct)
        .unwrap();
    let (series, _) = observe_ensemble(&[&sys], &[], &[1, 2, 3], 2, &[]).unwrap();
    let e = series[0].energy_series();
    assert!(e.values.iter().chain(&e.ito).chain(&e.stderr).all(|&v| v == 0.0));
}

#[test]
fn deterministic_energy_is_conserved_to_first_order() {
    let mesh = rect_mesh(Rect::unit(), 16, 16).unwrap();
    let init = phi(1, 1);
    let run = |dt: f64| {
        let sys =
            SpdeSystem::assemble(&spec(NoiseModel::none(0), init.clone(), 0.0, 0.2, dt), &mesh, SolverKind::Direct).unwrap();
        let paths = vec![simulate_path(&sys, 0, 1).unwrap()];
        let series = EnsembleSeries::from_paths(&sys, &paths, &[]).unwrap();
        let e = series.energy_series();
        let e0 = e.ito[0];
        assert!(e.ito.iter().all(|&v| v == e0), "identity side is constant without sources");
        e.calibrate(dt) * dt
    };
    let (a, b) = (run(0.01), run(0.005));
    assert!(a < 0.1 && (1.6..2.4).contains(&(a / b)), "{a} {b}");
}

#[test]
fn ito_identity_holds_for_noisy_forced_ensemble() {
    let mesh = rect_mesh(Rect::unit(), 12, 12).unwrap();
    let noise = NoiseModel::sine_series(6, 1.0, 1.5, Rect::unit(), 77).unwrap();
    let dt = 0.005;
    let det = SpdeSystem::assemble(&spec(NoiseModel::none(0), phi(1, 1), 2.0, 0.5, dt), &mesh, SolverKind::Direct).unwrap();
    let sto = SpdeSystem::assemble(&spec(noise.clone(), phi(1, 1), 2.0, 0.5, dt), &mesh, SolverKind::Direct).unwrap();
    let c = observe_ensemble(&[&det], &[], &[0], 1, &[]).unwrap().0[0].energy_series().calibrate(dt);
    let (series, _) = observe_ensemble(&[&sto], &[], &seeds(&noise, 200), 8, &[]).unwrap();
    let check = series[0].energy_series().ito_check(2.0, c, dt);
    assert!(check.passed, "{check:?}");
    assert!(c > 0.0);
}

#[test]
fn pairing_gap_vanishes_for_identical_equations_and_scales_linearly() {
    let cell = PeriodicCell::new([1.0, 1.0], Hole::Empty, CoefficientField::identity()).unwrap();
    let pm = build_perforated_mesh(Rect::unit(), &cell, 0.25, 0.25 / 4.0).unwrap();
    let noise = NoiseModel::sine_series(4, 1.0, 1.5, Rect::unit(), 5).unwrap();
    let micro = ProblemSpec::micro(cell, 0.25, [0.0, 0.0], Arc::new(|x| 1.0 + x[0]), phi(1, 1), noise.clone(), 0.2, 0.01);
    let mac = micro.with_effective(IDENTITY, 1.0);
    let a = SpdeSystem::assemble(&micro, &pm.mesh, SolverKind::Direct).unwrap();
    let b = SpdeSystem::assemble(&mac, &pm.mesh, SolverKind::Direct).unwrap();
    let base = phi(1, 2);
    let tf: Vec<ScalarField<f64>> = vec![
        base.clone(),
        Arc::new(|_| 0.0),
        { let g = base.clone(); Arc::new(move |x| 2.0 * g(x)) },
        { let g = base.clone(); Arc::new(move |x| -3.0 * g(x)) },
    ];
    let (s, _) = observe_ensemble(&[&a, &b], &tf, &seeds(&noise, 20), 4, &[]).unwrap();
    let psi = |t: f64| (PI * t / 0.2).sin().powi(2);
    let same = weak_pairing_gap(&s[0], &s[1], 1.0, &psi).unwrap();
    assert!(same.iter().all(|g| g.mean == 0.0 && g.se == 0.0));

    // A different macro coefficient gives a real gap; test linearity there.
    let other = micro.with_effective([[0.7, 0.0], [0.0, 0.7]], 1.0);
    let c = SpdeSystem::assemble(&other, &pm.mesh, SolverKind::Direct).unwrap();
    let (s, _) = observe_ensemble(&[&a, &c], &tf, &seeds(&noise, 20), 4, &[]).unwrap();
    let g = weak_pairing_gap(&s[0], &s[1], 1.0, &psi).unwrap();
    assert!(g[0].mean > 0.0);
    assert_eq!(g[1].mean, 0.0);
    assert!((g[2].mean - 2.0 * g[0].mean).abs() <= 1e-12 * g[0].mean);
    assert!((g[3].mean - 3.0 * g[0].mean).abs() <= 1e-12 * g[0].mean);
    assert!((g[2].se - 2.0 * g[0].se).abs() <= 1e-9 * g[0].se);
}

#[test]
fn misaligned_ensembles_are_rejected() {
    let mesh = rect_mesh(Rect::unit(), 4, 4).unwrap();
    let noise = NoiseModel::sine_series(2, 1.0, 1.5, Rect::unit(), 5).unwrap();
    let sys = SpdeSystem::assemble(&spec(noise.clone(), phi(1, 1), 0.0, 0.1, 0.01), &mesh, SolverKind::Direct).unwrap();
    let (a, _) = observe_ensemble(&[&sys], &[phi(1, 1)], &[1, 2], 1, &[]).unwrap();
    let (b, _) = observe_ensemble(&[&sys], &[phi(1, 1)], &[1, 3], 1, &[]).unwrap();
    assert!(matches!(weak_pairing_gap(&a[0], &b[0], 1.0, &|_| 1.0), Err(Error::GridMismatch(_))));
}

#[test]
fn strong_gap_of_constant_shift_is_exact() {
    let cell = disk_cell();
    let pm = build_perforated_mesh(Rect::unit(), &cell, 0.25, 0.25 / 8.0).unwrap();
    let macro_mesh = rect_mesh(Rect::unit(), 8, 8).unwrap();
    let times: Vec<f64> = (0..=4).map(|k| k as f64 * 0.25).collect();
    let c = 0.3;
    let path = |mesh_nodes: usize, v: f64| SamplePath {
        times: times.clone(),
        states: vec![vec![v; mesh_nodes]; times.len()],
        path_seed: 9,
        residuals: vec![0.0; 4],
    };
    let micro = vec![path(pm.mesh.n_nodes(), 1.0 + c)];
    let mac = vec![path(macro_mesh.n_nodes(), 1.0)];
    let gap = strong_l2_gap(&pm, &micro, &macro_mesh, &mac).unwrap();
    // The harmonic fill reproduces constants, so the gap is c²·T·|D|.
    assert!((gap.mean - c * c).abs() < 1e-12, "{}", gap.mean);
    let same = strong_l2_gap(&pm, &micro, &macro_mesh, &vec![path(macro_mesh.n_nodes(), 1.0 + c)]).unwrap();
    assert!(same.mean < 1e-24);
}

#[test]
fn zero_extension_pairing_tends_to_theta_weighted_integral() {
    let cell = disk_cell();
    let theta = 1.0 - PI / 16.0;
    let f = phi(1, 1);
    let target = theta * 8.0 / (PI * PI);
    let mut errs = Vec::new();
    for n in [4usize, 8, 16] {
        let eps = 1.0 / n as f64;
        let pm = build_perforated_mesh(Rect::unit(), &cell, eps, eps / 8.0).unwrap();
        let ones = vec![1.0; pm.mesh.n_nodes()];
        errs.push((l2_pairing(&pm.mesh, &ones, |x| f(x)) - target).abs());
    }
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
}

#[test]
fn comparison_table_and_strong_gap_for_unperforated_family_vanish() {
    let cell = PeriodicCell::new([1.0, 1.0], Hole::Empty, CoefficientField::identity()).unwrap();
    let pm = build_perforated_mesh(Rect::unit(), &cell, 0.25, 0.25 / 4.0).unwrap();
    let noise = NoiseModel::sine_series(3, 1.0, 1.5, Rect::unit(), 8).unwrap();
    let micro = ProblemSpec::micro(cell, 0.25, [0.0, 0.0], Arc::new(|_| 1.0), phi(1, 1), noise.clone(), 0.1, 0.01);
    let a = SpdeSystem::assemble(&micro, &pm.mesh, SolverKind::Direct).unwrap();
    let b = SpdeSystem::assemble(&micro.with_effective(IDENTITY, 1.0), &pm.mesh, SolverKind::Direct).unwrap();
    let members = [MicroMember { eps: 0.25, mesh: &pm, system: &a }];
    let tf = [phi(1, 1), phi(1, 2)];
    let cmp = run_comparison(&members, &b, 1.0, &tf, &seeds(&noise, 6), 4, true).unwrap();
    let rows = cmp.convergence_table(&|_| 1.0).unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r.metric.as_str()).collect();
    assert_eq!(names, ["energy_sup_gap", "pairing_gap_1", "pairing_gap_2", "strong_l2_gap"]);
    assert!(rows.iter().all(|r| r.value.abs() < 1e-20), "{rows:?}");
    let mut csv = Vec::new();
    write_convergence_csv(&rows, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("epsilon,metric,value,stderr\n2.5000000000e-1,energy_sup_gap,"));
}

#[test]
fn ensembles_are_reproducible_across_threads_and_batches() {
    let mesh = rect_mesh(Rect::unit(), 10, 10).unwrap();
    let noise = NoiseModel::sine_series(5, 1.0, 1.5, Rect::unit(), 31).unwrap();
    let sys = SpdeSystem::assemble(&spec(noise.clone(), phi(1, 1), 1.0, 0.1, 0.01), &mesh, SolverKind::Direct).unwrap();
    let s = seeds(&noise, 17);
    let run = |threads: usize, batch: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| observe_ensemble(&[&sys], &[phi(2, 1)], &s, batch, &[]).unwrap().0)
    };
    let reference = run(1, 4);
    assert_eq!(reference, run(3, 4));
    assert_eq!(reference, run(2, 5));
    let mut a = Vec::new();
    let mut b = Vec::new();
    reference[0].energy_series().write_csv(&mut a).unwrap();
    run(3, 1)[0].energy_series().write_csv(&mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn exponential_fit_recovers_synthetic_parameters() {
    let t: Vec<f64> = (0..=400).map(|k| k as f64 * 0.01).collect();
    let v: Vec<f64> = t.iter().map(|x| 2.5 * (-3.0 * x).exp() + 0.7).collect();
    let fit = fit_exponential(&t, &v).unwrap();
    assert!((fit.gamma - 3.0).abs() < 1e-6 && (fit.amplitude - 2.5).abs() < 1e-6 && (fit.offset - 0.7).abs() < 1e-8);
    assert!(fit_exponential(&t[..3], &v[..3]).is_err());
}

#[test]
fn ou_stationary_moments_and_rate() {
    let sigma = 1.0;
    let lambda = 2.0 * PI * PI;
    let mesh = rect_mesh(Rect::unit(), 16, 16).unwrap();
    let noise = NoiseModel::single_sine(sigma, 1, 1, Rect::unit(), 4242).unwrap();
    let init: ScalarField<f64> = { let p = phi(1, 1); Arc::new(move |x| 0.5 * p(x)) };
    let sys = SpdeSystem::assemble(&spec(noise.clone(), init, 0.0, 2.0, 0.002), &mesh, SolverKind::Direct).unwrap();
    let report = stationary_experiment(
        &[StationaryMember { system: &sys, weight: 1.0 }],
        &[phi(1, 1)],
        0.5,
        &seeds(&noise, 200),
        8,
    )
    .unwrap();
    let target = sigma * sigma / (2.0 * lambda);
    let row = report.rows.iter().find(|r| r.functional == "mode_1_sq").unwrap();
    let e = row.estimates[0];
    // The exact moment of the discrete scheme sits about 5 % below the
    // closed form at h = 1/16, Δt = 2e-3 (mesh and time step contribute
    // about equally).
    assert!((e.mean - target).abs() < 3.0 * e.se + 0.06 * target, "{e:?} vs {target}");
    let mean_row = report.rows.iter().find(|r| r.functional == "mode_1").unwrap();
    assert!(mean_row.estimates[0].mean.abs() < 3.0 * mean_row.estimates[0].se);
    let gamma = report.fits[0].gamma;
    assert!((gamma / (2.0 * lambda) - 1.0).abs() < 0.3, "{gamma}");
}

#[test]
fn stationary_checks_burn_in_and_trivial_case() {
    let mesh = rect_mesh(Rect::unit(), 8, 8).unwrap();
    let zero = SpdeSystem::assemble(&spec(NoiseModel::none(0), Arc::new(|_| 0.0), 0.0, 1.0, 0.01), &mesh, SolverKind::Direct)
        .unwrap();
    let r = stationary_experiment(&[StationaryMember { system: &zero, weight: 1.0 }], &[phi(1, 1)], 0.5, &[1, 2], 1)
        .unwrap();
    assert!(r.rows.iter().all(|row| row.estimates[0].mean == 0.0));

    let noise = NoiseModel::single_sine(0.1, 1, 1, Rect::unit(), 1).unwrap();
    let big: ScalarField<f64> = { let p = phi(1, 1); Arc::new(move |x| 10.0 * p(x)) };
    let slow = SpdeSystem::assemble(&spec(noise.clone(), big, 0.0, 1.0, 0.01), &mesh, SolverKind::Direct).unwrap();
    let r = stationary_experiment(&[StationaryMember { system: &slow, weight: 1.0 }], &[phi(1, 1)], 0.05, &seeds(&noise, 20), 4);
    assert!(matches!(r, Err(Error::InsufficientBurnIn { .. })), "{r:?}");
}

#[test]
fn est1_bound_holds_and_detects_understated_inputs() {
    let cell = disk_cell();
    let pm = build_perforated_mesh(Rect::unit(), &cell, 0.25, 0.25 / 8.0).unwrap();
    let noise = NoiseModel::sine_series(8, 1.0, 1.5, Rect::unit(), 3).unwrap();
    let f0 = 2.0;
    let micro = ProblemSpec::micro(cell, 0.25, [0.0, 0.0], Arc::new(move |_| f0), phi(1, 1), noise.clone(), 0.5, 0.01);
    let sys = SpdeSystem::assemble(&micro, &pm.mesh, SolverKind::Direct).unwrap();
    let (series, _) = observe_ensemble(&[&sys], &[], &seeds(&noise, 50), 8, &[]).unwrap();
    let lambda = sys.smallest_eigenvalue().unwrap();
    // The homogenized decay rate 2π²β/ϑ is a sanity range for λ on D_ε.
    assert!(lambda > 10.0 && lambda < 2.0 * PI * PI, "{lambda}");
    let bound = Est1Bound { inertia: 1.0, weight: 1.0, initial_sq: 1.0, forcing_sq: f0 * f0, poincare: lambda, noise_bound: noise.hs_bound };
    let ok = est1_check(&series[0], &bound, 2.0);
    assert!(ok.passed && ok.max_ratio > 0.1, "{ok:?}");
    let lie = Est1Bound { initial_sq: 0.1, noise_bound: 0.0, forcing_sq: 0.0, ..bound };
    assert!(!est1_check(&series[0], &lie, 2.0).passed);
}

#[test]
fn ensemble_result_collects_named_estimates() {
    let r = EnsembleResult::new(7, vec!["a".into(), "b".into()], vec![vec![1.0, 2.0], vec![3.0, 2.0]]).unwrap();
    assert_eq!(r.n_paths(), 2);
    assert_eq!(r.get("a").unwrap().mean, 2.0);
    assert_eq!(r.get("b").unwrap().se, 0.0);
    assert!(r.get("c").is_none());
    assert!(EnsembleResult::new(7, vec!["a".into()], vec![vec![1.0, 2.0]]).is_err());
    assert_eq!(estimate(&[1.0, 1.0]).se, 0.0);
}
