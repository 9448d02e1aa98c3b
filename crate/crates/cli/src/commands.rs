//! The `cell`, `simulate` and `compare` commands.
//!
//! Each command writes its CSVs into the output directory together with a
//! `manifest_<command>.txt`: comment lines (command, config hash, version,
//! thread count, seeds) followed by the canonical configuration, so the
//! manifest can be passed back as `--config` to repeat the run.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use perfhom_core::cell_problem::{ellipticity_constant, refinement_study, solve_cell, CellSolution};
use perfhom_core::geometry::{build_perforated_mesh, rect_mesh, PerforatedMesh, TriMesh};
use perfhom_core::spde::{sine_mode, sine_mode_indices, Equation, NoiseModel, ProblemSpec, ScalarField, SolverKind, SpdeSystem};
use perfhom_core::statistics::{
    est1_check, observe_ensemble, run_comparison, stationary_experiment, strictly_decreasing, write_convergence_csv,
    Comparison, EnsembleResult, EnsembleSeries, Est1Bound, Est1Check, Estimate, ItoCheck, MicroMember,
    StationaryMember, StationaryReport,
};
use perfhom_core::Error as CoreError;

use crate::config::RunConfig;
use crate::error::{CliError, Stage};

type Result<T> = std::result::Result<T, CliError>;
type Mat2 = [[f64; 2]; 2];

/// Command-line overrides applied on top of the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(out) = &overrides.out {
        cfg.out_dir = out.clone();
    }
    if let Some(t) = overrides.threads {
        if t == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        cfg.threads = t;
    }
    Ok(cfg)
}

/// Runs `f` on a pool with `cfg.threads` workers.
pub fn with_threads<R: Send>(cfg: &RunConfig, f: impl FnOnce() -> Result<R> + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    pool.install(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pass => "PASS",
            Self::Fail => "FAIL",
            Self::NotApplicable => "N/A",
        })
    }
}

impl From<bool> for Status {
    fn from(ok: bool) -> Self {
        if ok {
            Self::Pass
        } else {
            Self::Fail
        }
    }
}

/// One line of a run report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, status: Status, detail: impl Into<String>) -> Self {
        Self { name: name.into(), status, detail: detail.into() }
    }
}

fn any_failed(checks: &[Check]) -> bool {
    checks.iter().any(|c| c.status == Status::Fail)
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

fn write_report(path: &Path, checks: &[Check]) -> Result<()> {
    write_file(path, |w| {
        for c in checks {
            writeln!(w, "{} {} {}", c.name, c.status, c.detail)?;
        }
        let overall = Status::from(!any_failed(checks));
        writeln!(w, "overall {overall}")
    })
}

fn prepare_out(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::io(&cfg.out_dir, e))?;
    Ok(&cfg.out_dir)
}

fn write_manifest(cfg: &RunConfig, name: &str, command: &str, seeds: &[u64]) -> Result<()> {
    let path = cfg.out_dir.join(format!("manifest_{name}.txt"));
    write_file(&path, |w| {
        writeln!(w, "# command = {command}")?;
        writeln!(w, "# config_sha256 = {}", cfg.hash())?;
        writeln!(w, "# version = perfhom {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(w, "# threads = {}", cfg.threads)?;
        writeln!(w, "# master_seed = {}", cfg.seed)?;
        if !seeds.is_empty() {
            let list: Vec<String> = seeds.iter().map(|s| format!("{s:016x}")).collect();
            writeln!(w, "# path_seeds = {}", list.join(" "))?;
        }
        w.write_all(cfg.canonical().as_bytes())
    })
}

fn tag(eps: f64) -> String {
    format!("eps{eps}")
}

// ---------------------------------------------------------------- cell

const CELL_FILE: &str = "cell.txt";

/// Solves the cell problem, writes `cell.txt` and, when `refinement` is set,
/// `cell_refinement.csv`.
pub fn cmd_cell(cfg: &RunConfig) -> Result<CellSolution<f64>> {
    let out = prepare_out(cfg)?;
    let cell = cfg.cell()?;
    let (_, sol) = with_threads(cfg, || solve_cell(&cell, cfg.cell_h).stage(|| format!("cell problem at h = {}", cfg.cell_h)))?;
    write_file(&out.join(CELL_FILE), |w| {
        sol.write_text(&mut *w)?;
        writeln!(w, "cell_sha256 {}", cfg.cell_hash())
    })?;
    if !cfg.refinement.is_empty() {
        let rows = refinement_study(&cell, &cfg.refinement).stage(|| "cell refinement study".into())?;
        write_file(&out.join("cell_refinement.csv"), |w| {
            writeln!(w, "h,n_nodes,b11,b12,b21,b22,theta")?;
            for r in &rows {
                writeln!(
                    w,
                    "{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    r.h, r.n_nodes, r.b[0][0], r.b[0][1], r.b[1][0], r.b[1][1], r.theta
                )?;
            }
            Ok(())
        })?;
    }
    write_manifest(cfg, "cell", "cell", &[])?;
    let ell = sol.ellipticity();
    if !(ell > 0.0) {
        return Err(CliError::Core {
            stage: "cell problem".into(),
            source: CoreError::Solver(format!("homogenized matrix is not elliptic (constant {ell:e})")),
        });
    }
    Ok(sol)
}

/// `(B, ϑ)` from the `cell.txt` of the output directory.
pub fn read_cell(cfg: &RunConfig) -> Result<(Mat2, f64)> {
    let path = cfg.out_dir.join(CELL_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|_| CliError::MissingArtifact(format!("{} not found; run `perfhom cell` first", path.display())))?;
    let mut theta = None;
    let mut b = None;
    for line in text.lines() {
        let mut it = line.split_whitespace();
        let key = it.next();
        let nums: Vec<&str> = it.collect();
        let parse = |s: &str| s.parse::<f64>().map_err(|_| CliError::MissingArtifact(format!("{}: bad number '{s}'", path.display())));
        match (key, nums.len()) {
            (Some("theta"), 1) => theta = Some(parse(nums[0])?),
            (Some("B"), 4) => b = Some([[parse(nums[0])?, parse(nums[1])?], [parse(nums[2])?, parse(nums[3])?]]),
            (Some("cell_sha256"), 1) if nums[0] != cfg.cell_hash() => {
                return Err(CliError::MissingArtifact(format!(
                    "{} was computed for a different cell configuration; rerun `perfhom cell`",
                    path.display()
                )));
            }
            _ => {}
        }
    }
    match (b, theta) {
        (Some(b), Some(t)) if ellipticity_constant(b) > 0.0 && t > 0.0 => Ok((b, t)),
        (Some(_), Some(_)) => Err(CliError::Validation(format!("{}: B is not elliptic or theta <= 0", path.display()))),
        _ => Err(CliError::MissingArtifact(format!("{} lacks theta or B", path.display()))),
    }
}

// ---------------------------------------------------------- ensembles

/// Time grid of one ensemble.
#[derive(Debug, Clone, Copy)]
struct Grid {
    t_final: f64,
    dt: f64,
    substeps: usize,
}

impl Grid {
    fn finite(cfg: &RunConfig) -> Self {
        Self { t_final: cfg.t_final, dt: cfg.dt, substeps: cfg.substeps() }
    }

    fn long(cfg: &RunConfig) -> Self {
        Self { t_final: cfg.t_long, dt: cfg.dt_long, substeps: 1 }
    }
}

/// Problem data shared by every member of a run.
struct Inputs {
    spec: ProblemSpec<f64>,
    tests: Vec<ScalarField<f64>>,
    seeds: Vec<u64>,
}

impl Inputs {
    fn new(cfg: &RunConfig, paths: usize) -> Result<Self> {
        let noise = cfg.noise()?;
        let (forcing, forcing_is_static) = cfg.forcing()?;
        let spec = ProblemSpec {
            forcing,
            forcing_is_static,
            noise: noise.clone(),
            initial: cfg.initial_field()?,
            t_final: cfg.t_final,
            dt: cfg.dt,
            substeps: 1,
            equation: Equation::Macro { b: [[1.0, 0.0], [0.0, 1.0]], theta: 1.0 },
            source_weight: 1.0,
        };
        let rect = cfg.rect();
        let tests = sine_mode_indices(cfg.test_functions).into_iter().map(|(k, l)| sine_mode(k, l, rect)).collect();
        let seeds = (0..paths as u64).map(|p| noise.path_seed(p)).collect();
        Ok(Self { spec, tests, seeds })
    }

    fn on_grid(&self, g: Grid) -> ProblemSpec<f64> {
        ProblemSpec { t_final: g.t_final, dt: g.dt, substeps: g.substeps, ..self.spec.clone() }
    }

    fn micro_spec(&self, cfg: &RunConfig, eps: f64, g: Grid) -> Result<ProblemSpec<f64>> {
        let equation = Equation::Micro { cell: cfg.cell()?, eps, origin: [cfg.domain[0], cfg.domain[1]] };
        Ok(ProblemSpec { equation, ..self.on_grid(g) })
    }

    fn macro_spec(&self, b: Mat2, theta: f64, g: Grid) -> ProblemSpec<f64> {
        self.on_grid(g).with_effective(b, theta)
    }
}

fn micro_mesh(cfg: &RunConfig, eps: f64) -> Result<PerforatedMesh<f64>> {
    let cell = cfg.cell()?;
    build_perforated_mesh(cfg.rect(), &cell, eps, eps * cfg.micro_h_ratio).stage(|| format!("perforated mesh for eps = {eps}"))
}

fn macro_mesh(cfg: &RunConfig) -> Result<TriMesh<f64>> {
    let r = cfg.rect();
    let e = r.extent();
    let n = |len: f64| ((len / cfg.h).round() as usize).max(1);
    rect_mesh(r, n(e[0]), n(e[1])).stage(|| "macro mesh".into())
}

fn assemble(spec: &ProblemSpec<f64>, mesh: &TriMesh<f64>, what: &str) -> Result<SpdeSystem<f64>> {
    SpdeSystem::assemble(spec, mesh, SolverKind::Direct).stage(|| format!("assembling the {what} system"))
}

/// `C` in the allowance `C·Δt` of the Itô check: the same system without noise.
fn ito_calibration(spec: &ProblemSpec<f64>, mesh: &TriMesh<f64>, what: &str) -> Result<f64> {
    let quiet = ProblemSpec { noise: NoiseModel::none(spec.noise.master_seed), ..spec.clone() };
    let sys = assemble(&quiet, mesh, what)?;
    let (series, _) = observe_ensemble(&[&sys], &[], &[0], 1, &[]).stage(|| format!("noise-free {what} run"))?;
    Ok(series[0].energy_series().calibrate(sys.dt))
}

/// Constants of the energy bound shared by all `systems`: smallest `λ` and
/// largest `‖u⁰‖²`, `sup_t ‖f(t)‖²` over the members.
fn est1_bounds(systems: &[&SpdeSystem<f64>], static_forcing: bool) -> Result<Vec<Est1Bound<f64>>> {
    let mut lambda = f64::INFINITY;
    let mut initial_sq = 0.0_f64;
    let mut forcing_sq = 0.0_f64;
    for sys in systems {
        lambda = lambda.min(sys.smallest_eigenvalue().stage(|| "smallest eigenvalue".into())?);
        initial_sq = initial_sq.max(sys.mass_norm_sq(&sys.initial));
        let steps = if static_forcing { 0 } else { sys.steps };
        for n in 0..=steps {
            forcing_sq = forcing_sq.max(sys.forcing_norm_sq(sys.time(n)));
        }
    }
    Ok(systems
        .iter()
        .map(|sys| Est1Bound {
            inertia: sys.inertia,
            weight: sys.source_weight,
            initial_sq,
            forcing_sq,
            poincare: lambda,
            noise_bound: sys.noise.hs_bound,
        })
        .collect())
}

fn write_energy(out: &Path, name: &str, series: &EnsembleSeries<f64>) -> Result<()> {
    write_file(&out.join(format!("energy_{name}.csv")), |w| series.energy_series().write_csv(w))
}

fn write_est1(out: &Path, rows: &[(String, Est1Check<f64>)]) -> Result<()> {
    write_file(&out.join("est1.csv"), |w| {
        writeln!(w, "ensemble,max_ratio,sup_estimate,constant,passed")?;
        for (name, c) in rows {
            writeln!(w, "{name},{:.12e},{:.12e},{:.12e},{}", c.max_ratio, c.sup_estimate, c.constant, c.passed)?;
        }
        Ok(())
    })
}

// ------------------------------------------------------------ simulate

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Micro,
    Macro,
}

/// Outcome of [`cmd_simulate`].
#[derive(Debug, Clone)]
pub struct SimulateOutcome {
    pub tag: String,
    pub series: EnsembleSeries<f64>,
    pub summary: EnsembleResult<f64>,
    pub est1: Est1Check<f64>,
    pub bound: Est1Bound<f64>,
    pub checks: Vec<Check>,
}

/// One ensemble of the micro problem at `eps` or of the effective problem,
/// written to `energy_<tag>.csv`, `summary_<tag>.csv` and `est1_<tag>.csv`.
pub fn cmd_simulate(cfg: &RunConfig, which: Which, eps: Option<f64>) -> Result<SimulateOutcome> {
    let out = prepare_out(cfg)?;
    let inputs = Inputs::new(cfg, cfg.paths)?;
    let grid = Grid::finite(cfg);
    let (tag, mesh, spec) = match which {
        Which::Micro => {
            let eps = match eps {
                Some(e) => cfg
                    .eps
                    .iter()
                    .copied()
                    .find(|x| (x - e).abs() <= 1e-12 * e.abs().max(1.0))
                    .ok_or_else(|| CliError::Validation(format!("--eps {e} is not in the configured list {:?}", cfg.eps)))?,
                None if cfg.eps.len() == 1 => cfg.eps[0],
                None => return Err(CliError::Validation("micro simulation needs --eps when the list has several values".into())),
            };
            (tag(eps), micro_mesh(cfg, eps)?.mesh, inputs.micro_spec(cfg, eps, grid)?)
        }
        Which::Macro => {
            let (b, theta) = read_cell(cfg)?;
            ("macro".to_string(), macro_mesh(cfg)?, inputs.macro_spec(b, theta, grid))
        }
    };
    let outcome = with_threads(cfg, || {
        let sys = assemble(&spec, &mesh, &tag)?;
        let (mut series, _) = observe_ensemble(&[&sys], &inputs.tests, &inputs.seeds, cfg.batch, &[])
            .stage(|| format!("{tag} ensemble"))?;
        let series = series.remove(0);
        let bound = est1_bounds(&[&sys], spec.forcing_is_static)?[0];
        let est1 = est1_check(&series, &bound, cfg.se_factor);
        let summary = final_summary(cfg, &series, sys.source_weight)?;
        let c = ito_calibration(&spec, &mesh, &tag)?;
        let ito = series.energy_series().ito_check(cfg.se_factor, c, sys.dt);
        let checks = vec![
            Check::new("est1_bound", est1.passed.into(), format!("max_ratio={:.6e}", est1.max_ratio)),
            ito_line(&tag, &ito, c),
        ];
        Ok(SimulateOutcome { tag: tag.clone(), series, summary, est1, bound, checks })
    })?;
    write_energy(out, &tag, &outcome.series)?;
    write_file(&out.join(format!("summary_{tag}.csv")), |w| {
        writeln!(w, "functional,estimate,stderr,n")?;
        for (name, e) in outcome.summary.names.iter().zip(&outcome.summary.estimates) {
            writeln!(w, "{name},{:.12e},{:.12e},{}", e.mean, e.se, e.n)?;
        }
        writeln!(w, "est1_max_ratio,{:.12e},0,{}", outcome.est1.max_ratio, outcome.series.n_paths())
    })?;
    write_file(&out.join(format!("est1_{tag}.csv")), |w| {
        writeln!(w, "t,estimate,stderr,bound")?;
        let est = outcome.series.pointwise(|p| outcome.series.est1_functional(p));
        for (t, e) in outcome.series.times.iter().zip(&est) {
            writeln!(w, "{t:.6e},{:.12e},{:.12e},{:.12e}", e.mean, e.se, outcome.bound.at(*t))?;
        }
        Ok(())
    })?;
    write_report(&out.join(format!("report_{tag}.txt")), &outcome.checks)?;
    let command = match which {
        Which::Micro => format!("simulate --which micro --eps {}", outcome.tag.trim_start_matches("eps")),
        Which::Macro => "simulate --which macro".into(),
    };
    write_manifest(cfg, &format!("simulate_{tag}"), &command, &inputs.seeds)?;
    Ok(outcome)
}

/// Final-time `‖u‖²`, energy form, `(u, φ_k)` and `(u, φ_k)²`, with the
/// macro quantities multiplied by the source weight so both sides estimate
/// the same limits.
fn final_summary(cfg: &RunConfig, series: &EnsembleSeries<f64>, w: f64) -> Result<EnsembleResult<f64>> {
    let k = series.n_test_functions();
    let mut names = vec!["sq_norm".to_string(), "energy_form".to_string()];
    names.extend((1..=k).map(|i| format!("mode_{i}")));
    names.extend((1..=k).map(|i| format!("mode_{i}_sq")));
    let last = series.times.len() - 1;
    let rows = series
        .paths
        .iter()
        .map(|p| {
            let mut v = vec![w * p.mass_sq[last], w * p.energy[last]];
            v.extend((0..k).map(|i| w * p.pairings[i][last]));
            v.extend((0..k).map(|i| (w * p.pairings[i][last]).powi(2)));
            v
        })
        .collect();
    EnsembleResult::new(cfg.seed, names, rows).stage(|| "ensemble summary".into())
}

fn ito_line(name: &str, c: &ItoCheck<f64>, calibration: f64) -> Check {
    Check::new(
        format!("ito_identity_{name}"),
        c.passed.into(),
        format!("worst_ratio={:.6e} at t={:.6e} (C={calibration:.6e})", c.worst_ratio, c.worst_time),
    )
}

// ------------------------------------------------------------- compare

/// Outcome of [`cmd_compare`].
#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub comparison: Option<Comparison<f64>>,
    pub stationary: Option<StationaryReport<f64>>,
    pub ito: Vec<(String, ItoCheck<f64>)>,
    pub est1: Vec<(String, Est1Check<f64>)>,
    pub checks: Vec<Check>,
}

impl CompareOutcome {
    pub fn passed(&self) -> bool {
        !any_failed(&self.checks)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Decrease of `gaps` along the family: each step by more than `k` combined
/// standard errors, unless every gap is already converged (within `k` SE of
/// zero or below `tolerance`). `N/A` with fewer than two members.
fn decrease_check(name: &str, gaps: &[Estimate<f64>], k: f64, tolerance: f64, first_last_only: bool) -> Check {
    let values: Vec<String> = gaps.iter().map(|g| format!("{:.4e}±{:.2e}", g.mean, g.se)).collect();
    let detail = values.join(" ");
    let pair;
    let seq = if first_last_only && gaps.len() > 2 {
        pair = [gaps[0], gaps[gaps.len() - 1]];
        &pair[..]
    } else {
        gaps
    };
    let status = match strictly_decreasing(seq, k) {
        None => Status::NotApplicable,
        Some(true) => Status::Pass,
        Some(false) => {
            let converged = gaps.iter().all(|g| g.mean <= (k * g.se).max(tolerance));
            if converged {
                return Check::new(name, Status::Pass, format!("{detail} (all at tolerance)"));
            }
            Status::Fail
        }
    };
    Check::new(name, status, detail)
}

/// Runs the micro family and the effective equation with common random
/// numbers (`convergence.csv`, energy series, Itô and energy-bound checks)
/// and the long-time experiment (`stationary.csv`); `report.txt` lists every
/// check.
pub fn cmd_compare(cfg: &RunConfig) -> Result<CompareOutcome> {
    let out = prepare_out(cfg)?;
    let (b, theta) = read_cell(cfg)?;
    let psi = Arc::new(cfg.time_weight()?);
    let outcome = with_threads(cfg, || {
        let mut outcome = CompareOutcome { comparison: None, stationary: None, ito: Vec::new(), est1: Vec::new(), checks: Vec::new() };
        if cfg.convergence {
            convergence(cfg, out, b, theta, psi.as_ref(), &mut outcome)?;
        }
        if cfg.stationary {
            stationary(cfg, out, b, theta, &mut outcome)?;
        }
        Ok(outcome)
    })?;
    let mut checks = outcome.checks.clone();
    let est1_ok = outcome.est1.iter().all(|(_, c)| c.passed);
    let worst = outcome.est1.iter().map(|(_, c)| c.max_ratio).fold(0.0, f64::max);
    let status = if outcome.est1.is_empty() { Status::NotApplicable } else { est1_ok.into() };
    checks.push(Check::new("est1_bound", status, format!("max_ratio={worst:.6e}")));
    write_est1(out, &outcome.est1)?;
    write_report(&out.join("report.txt"), &checks)?;
    let inputs_seeds: Vec<u64> = Inputs::new(cfg, cfg.paths.max(cfg.stationary_paths))?.seeds;
    write_manifest(cfg, "compare", "compare", &inputs_seeds)?;
    Ok(CompareOutcome { checks, ..outcome })
}

fn convergence(
    cfg: &RunConfig,
    out: &Path,
    b: Mat2,
    theta: f64,
    psi: &(dyn Fn(f64) -> f64 + Send + Sync),
    outcome: &mut CompareOutcome,
) -> Result<()> {
    let inputs = Inputs::new(cfg, cfg.paths)?;
    let grid = Grid::finite(cfg);
    let meshes: Vec<PerforatedMesh<f64>> = cfg.eps.iter().map(|&e| micro_mesh(cfg, e)).collect::<Result<_>>()?;
    let mut specs = Vec::new();
    let mut systems = Vec::new();
    for (&eps, pm) in cfg.eps.iter().zip(&meshes) {
        let spec = inputs.micro_spec(cfg, eps, grid)?;
        systems.push(assemble(&spec, &pm.mesh, &tag(eps))?);
        specs.push(spec);
    }
    let mmesh = macro_mesh(cfg)?;
    let mspec = inputs.macro_spec(b, theta, grid);
    let msys = assemble(&mspec, &mmesh, "macro")?;
    let members: Vec<MicroMember<'_, f64>> =
        cfg.eps.iter().zip(&meshes).zip(&systems).map(|((&eps, mesh), system)| MicroMember { eps, mesh, system }).collect();
    let cmp = run_comparison(&members, &msys, theta, &inputs.tests, &inputs.seeds, cfg.batch, cfg.strong_gap)
        .stage(|| "micro/macro comparison".into())?;

    let rows = cmp.convergence_table(psi).stage(|| "convergence table".into())?;
    write_file(&out.join("convergence.csv"), |w| write_convergence_csv(&rows, w))?;
    for (eps, s) in cfg.eps.iter().zip(&cmp.micro) {
        write_energy(out, &tag(*eps), s)?;
    }
    write_energy(out, "macro", &cmp.macro_series)?;

    let k = cfg.se_factor;
    let energy: Vec<Estimate<f64>> = cmp.energy_gaps().stage(|| "energy gaps".into())?.iter().map(|g| g.value).collect();
    outcome.checks.push(decrease_check("energy_gap_decreasing", &energy, k, cfg.gap_tolerance, false));
    let pairing = cmp.pairing_gaps(psi).stage(|| "pairing gaps".into())?;
    for j in 0..inputs.tests.len() {
        let col: Vec<Estimate<f64>> = pairing.iter().map(|g| g[j]).collect();
        outcome.checks.push(decrease_check(&format!("pairing_gap_{}_decreasing", j + 1), &col, k, cfg.gap_tolerance, true));
    }
    if cfg.strong_gap {
        let strong = cmp.strong_gaps();
        outcome.checks.push(decrease_check("strong_gap_decreasing", &strong, k, cfg.gap_tolerance, false));
    }

    let mut ito_rows = Vec::new();
    let names: Vec<String> = cfg.eps.iter().map(|&e| tag(e)).chain(["macro".to_string()]).collect();
    let all_series: Vec<&EnsembleSeries<f64>> = cmp.micro.iter().chain([&cmp.macro_series]).collect();
    for (i, (name, series)) in names.iter().zip(&all_series).enumerate() {
        let (spec, mesh) = if i < specs.len() { (&specs[i], &meshes[i].mesh) } else { (&mspec, &mmesh) };
        let c = ito_calibration(spec, mesh, name)?;
        let check = series.energy_series().ito_check(k, c, grid.dt);
        outcome.checks.push(ito_line(name, &check, c));
        ito_rows.push((name.clone(), check, c));
        outcome.ito.push((name.clone(), check));
    }
    write_file(&out.join("ito.csv"), |w| {
        writeln!(w, "ensemble,worst_ratio,worst_time,calibration,passed")?;
        for (name, c, cal) in &ito_rows {
            writeln!(w, "{name},{:.12e},{:.6e},{cal:.12e},{}", c.worst_ratio, c.worst_time, c.passed)?;
        }
        Ok(())
    })?;

    let sys_refs: Vec<&SpdeSystem<f64>> = systems.iter().chain([&msys]).collect();
    let bounds = est1_bounds(&sys_refs, inputs.spec.forcing_is_static)?;
    for ((name, series), bound) in names.iter().zip(&all_series).zip(&bounds) {
        outcome.est1.push((name.clone(), est1_check(series, bound, k)));
    }
    outcome.comparison = Some(cmp);
    Ok(())
}

fn stationary(cfg: &RunConfig, out: &Path, b: Mat2, theta: f64, outcome: &mut CompareOutcome) -> Result<()> {
    let inputs = Inputs::new(cfg, cfg.stationary_paths)?;
    let grid = Grid::long(cfg);
    let eps = cfg.stationary_eps();
    let pm = micro_mesh(cfg, eps)?;
    let micro = assemble(&inputs.micro_spec(cfg, eps, grid)?, &pm.mesh, &format!("stationary {}", tag(eps)))?;
    let mmesh = macro_mesh(cfg)?;
    let mac = assemble(&inputs.macro_spec(b, theta, grid), &mmesh, "stationary macro")?;
    let members = [StationaryMember { system: &micro, weight: 1.0 }, StationaryMember { system: &mac, weight: theta }];
    let report = match stationary_experiment(&members, &inputs.tests, cfg.burn_in, &inputs.seeds, cfg.batch) {
        Ok(r) => r,
        Err(CoreError::InsufficientBurnIn { transient, floor }) => {
            outcome.checks.push(Check::new(
                "stationary_burn_in",
                Status::Fail,
                format!("transient {transient:.4e} exceeds noise floor {floor:.4e} at burn_in = {}", cfg.burn_in),
            ));
            return Ok(());
        }
        Err(e) => return Err(CliError::Core { stage: "stationary experiment".into(), source: e }),
    };
    write_file(&out.join("stationary.csv"), |w| report.write_csv(0, 1, w))?;
    outcome.checks.push(Check::new(
        "stationary_burn_in",
        Status::Pass,
        format!("transients {:.4e} {:.4e}", report.transients[0], report.transients[1]),
    ));
    let k = cfg.stationary_se_factor;
    let wanted: Vec<String> = ["sq_norm", "mode_1", "mode_2"].iter().map(|s| s.to_string()).collect();
    for row in report.rows.iter().filter(|r| wanted.contains(&r.functional)) {
        let (a, m) = (row.estimates[0], row.estimates[1]);
        outcome.checks.push(Check::new(
            format!("stationary_{}", row.functional),
            row.agrees(0, 1, k).into(),
            format!("micro={:.6e}±{:.2e} macro={:.6e}±{:.2e}", a.mean, a.se, m.mean, m.se),
        ));
    }
    let gammas: Vec<String> = report.fits.iter().map(|f| format!("{:.4e}", f.gamma)).collect();
    outcome.checks.push(Check::new("stationary_gamma_positive", report.fits.iter().all(|f| f.gamma > 0.0).into(), gammas.join(" ")));
    let bounds = est1_bounds(&[&micro, &mac], inputs.spec.forcing_is_static)?;
    for (name, (series, bound)) in [format!("stationary_{}", tag(eps)), "stationary_macro".into()].into_iter().zip(report.series.iter().zip(&bounds)) {
        outcome.est1.push((name, est1_check(series, bound, cfg.se_factor)));
    }
    outcome.stationary = Some(report);
    Ok(())
}
