//! Acceptance run: every criterion end to end through the command layer, one
//! `PASS`/`FAIL` line each with its wall time.
//!
//! Criteria run one after another in a single test so that the timings are
//! not disturbed by other tests. Artifacts stay under
//! `target/tmp/acceptance/` for inspection; the lines are also collected in
//! `acceptance.txt` there.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use perfhom::commands::{cmd_cell, cmd_compare, cmd_simulate, CompareOutcome, Status, Which};
use perfhom::RunConfig;
use perfhom_core::statistics::{strictly_decreasing, Estimate};

const SE_FACTOR: f64 = 2.0;

struct Line {
    id: u32,
    name: &'static str,
    passed: bool,
    detail: String,
    seconds: f64,
}

#[derive(Default)]
struct Harness {
    lines: Vec<Line>,
}

impl Harness {
    fn record(&mut self, id: u32, name: &'static str, passed: bool, detail: String, seconds: f64) {
        let line = Line { id, name, passed, detail, seconds };
        // straight to the terminal, past the test harness's capture
        let mut out = std::io::stdout();
        let _ = writeln!(out, "{}", render(&line));
        let _ = out.flush();
        self.lines.push(line);
    }
}

fn render(l: &Line) -> String {
    let status = if l.passed { "PASS" } else { "FAIL" };
    format!("criterion {} {}: {status} ({}; {:.1} s)", l.id, l.name, l.detail, l.seconds)
}

fn root() -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    if dir.exists() {
        fs::remove_dir_all(&dir).unwrap();
    }
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn config(out: &Path, body: &str) -> RunConfig {
    RunConfig::parse(&format!("{body}\n[output]\ndir = {}\n", out.display())).unwrap_or_else(|e| panic!("{e}\n{body}"))
}

fn timed<R>(f: impl FnOnce() -> R) -> (R, f64) {
    let t = Instant::now();
    let r = f();
    (r, t.elapsed().as_secs_f64())
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn csv_names(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    names
}

fn same_csvs(a: &Path, b: &Path) -> Result<usize, String> {
    let names = csv_names(a);
    if names != csv_names(b) {
        return Err(format!("file sets differ in {}", b.display()));
    }
    for n in &names {
        if fs::read(a.join(n)).unwrap() != fs::read(b.join(n)).unwrap() {
            return Err(format!("{n} differs"));
        }
    }
    Ok(names.len())
}

fn check_passed(o: &CompareOutcome, name: &str) -> bool {
    o.check(name).is_some_and(|c| c.status == Status::Pass)
}

fn eig_min(b: [[f64; 2]; 2]) -> f64 {
    let s = 0.5 * (b[0][1] + b[1][0]);
    let m = 0.5 * (b[0][0] + b[1][1]);
    let r = (0.25 * (b[0][0] - b[1][1]).powi(2) + s * s).sqrt();
    m - r
}

const CELL_EXACT: &str = "[geometry]\nhole = none\n[cell]\nh = 0.02\n[coefficient]\npreset = diag(2, 3)";
const CELL_DISK: &str = "[cell]\nrefinement = 0.04, 0.02, 0.01";

fn ou(dt: &str) -> String {
    format!(
        "[geometry]\nhole = none\nh = 0.03125\n[noise]\nm = 1\nsigma = 1\n\
         [problem]\nf = 0\nu0 = 0\nT = 0.5\ndt = {dt}\nnoise_dt = 0.001\n\
         [experiment]\npaths = 2000\ntest_functions = 1\nbatch = 16"
    )
}

const FAMILY: &str = "[experiment]\nstationary = false";
const LONG_TIME: &str = "[experiment]\nconvergence = false";
const FAMILY_REPLAY: &str = "[experiment]\npaths = 8\nstationary_paths = 8";

#[test]
fn acceptance() {
    let root = root();
    let mut h = Harness::default();

    // 1: constant coefficient without hole
    let dir1 = root.join("c1");
    let cfg = config(&dir1, CELL_EXACT);
    let (sol, secs) = timed(|| cmd_cell(&cfg).unwrap());
    let b_err = [sol.b[0][0] - 2.0, sol.b[1][1] - 3.0, sol.b[0][1], sol.b[1][0]].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let t_err = (sol.theta - 1.0).abs();
    h.record(
        1,
        "cell exactness",
        b_err <= 1e-10 && t_err <= 1e-12 && secs < 5.0,
        format!("|B - diag(2,3)| = {b_err:.2e}, |theta - 1| = {t_err:.2e}"),
        secs,
    );

    // 2: disk hole refinement
    let dir2 = root.join("c2");
    let cfg = config(&dir2, CELL_DISK);
    let (sol, secs) = timed(|| cmd_cell(&cfg).unwrap());
    let rows = read_csv(&dir2.join("cell_refinement.csv"));
    let num = |r: &Vec<String>, i: usize| r[i].parse::<f64>().unwrap();
    let beta: Vec<f64> = rows.iter().map(|r| num(r, 2)).collect();
    let off = rows.iter().map(|r| num(r, 3).abs().max(num(r, 4).abs()).max((num(r, 2) - num(r, 5)).abs())).fold(0.0, f64::max);
    let order = ((beta[0] - beta[1]) / (beta[1] - beta[2])).log2();
    let limit = 1.0 - PI / 16.0;
    let bounded = beta.iter().all(|b| *b > 0.0 && *b < limit);
    let ell = eig_min(sol.b);
    h.record(
        2,
        "cell refinement",
        off <= 1e-6 && (order - 2.0).abs() <= 0.3 && bounded && ell > 0.0 && secs < 120.0,
        format!(
            "beta = {:.8} {:.8} {:.8}, order {order:.3}, off-diagonal {off:.1e}, ellipticity {ell:.6}",
            beta[0], beta[1], beta[2]
        ),
        secs,
    );

    // 3: single-mode Ornstein-Uhlenbeck weak accuracy
    let lambda = 2.0 * PI * PI;
    let t = 0.5;
    let closed = (1.0 - (-2.0 * lambda * t).exp()) / (2.0 * lambda);
    let start = Instant::now();
    let mut moments: Vec<Estimate<f64>> = Vec::new();
    for (i, dt) in ["0.004", "0.002", "0.001"].iter().enumerate() {
        let cfg = config(&root.join(format!("c3_{i}")), &ou(dt));
        cmd_cell(&cfg).unwrap();
        let out = cmd_simulate(&cfg, Which::Macro, None).unwrap();
        moments.push(*out.summary.get("mode_1_sq").unwrap());
    }
    let secs = start.elapsed().as_secs_f64();
    let fine = moments[2];
    let within = (fine.mean - closed).abs() <= 3.0 * fine.se;
    let slope = ((moments[0].mean - moments[1].mean) / (moments[1].mean - moments[2].mean)).log2();
    h.record(
        3,
        "OU weak accuracy",
        within && (slope - 1.0).abs() <= 0.4 && secs < 300.0,
        format!(
            "E = {:.6e} +- {:.1e} vs {closed:.6e} ({:.2} SE), slope {slope:.3}",
            fine.mean,
            fine.se,
            (fine.mean - closed).abs() / fine.se
        ),
        secs,
    );

    // 4 and 5: the perforated family against the effective equation
    let dir4 = root.join("c4");
    let cfg = config(&dir4, FAMILY);
    let (family, secs) = timed(|| {
        cmd_cell(&cfg).unwrap();
        cmd_compare(&cfg).unwrap()
    });
    let cmp = family.comparison.as_ref().unwrap();
    let energy: Vec<Estimate<f64>> = cmp.energy_gaps().unwrap().iter().map(|g| g.value).collect();
    let decreasing = strictly_decreasing(&energy, SE_FACTOR) == Some(true);
    let ito_ok = family.ito.iter().all(|(_, c)| c.passed);
    let worst_ito = family.ito.iter().map(|(_, c)| c.worst_ratio).fold(0.0, f64::max);
    let gaps: Vec<String> = energy.iter().map(|g| format!("{:.3e}+-{:.1e}", g.mean, g.se)).collect();
    h.record(
        4,
        "energy convergence",
        decreasing && ito_ok && secs < 1800.0,
        format!("sup gaps {}, Ito worst ratio {worst_ito:.3}", gaps.join(" ")),
        secs,
    );

    let psi = cfg.time_weight().unwrap();
    let pairing = cmp.pairing_gaps(&psi).unwrap();
    let last = pairing.len() - 1;
    let mut detail = String::new();
    let mut all = true;
    for j in 0..pairing[0].len() {
        let (a, b) = (pairing[0][j], pairing[last][j]);
        let ok = strictly_decreasing(&[a, b], SE_FACTOR) == Some(true);
        all &= ok;
        let _ = write!(detail, "{}{}: {:.2e} -> {:.2e}", if j > 0 { ", " } else { "" }, j + 1, a.mean, b.mean);
    }
    let table_ok = check_passed(&family, "pairing_gap_1_decreasing");
    h.record(5, "weak pairings", all && table_ok, detail, secs);

    // 6: stationary moments
    let dir6 = root.join("c6");
    let cfg6 = config(&dir6, LONG_TIME);
    let (long, secs) = timed(|| {
        cmd_cell(&cfg6).unwrap();
        cmd_compare(&cfg6).unwrap()
    });
    let names = ["stationary_burn_in", "stationary_sq_norm", "stationary_mode_1", "stationary_mode_2", "stationary_gamma_positive"];
    let ok6 = names.iter().all(|n| check_passed(&long, n));
    let detail: Vec<String> = names[1..4]
        .iter()
        .map(|n| format!("{} {}", n.trim_start_matches("stationary_"), long.check(n).map_or("missing".into(), |c| c.detail.clone())))
        .collect();
    let gamma = long.check("stationary_gamma_positive").map_or(String::new(), |c| c.detail.clone());
    h.record(6, "long-time effectivity", ok6 && secs < 1200.0, format!("{}; gamma {gamma}", detail.join("; ")), secs);

    // 7: energy bound on every ensemble of 4 to 6
    let est1: Vec<_> = family.est1.iter().chain(&long.est1).collect();
    let worst = est1.iter().map(|(_, c)| c.max_ratio).fold(0.0, f64::max);
    let ok7 = !est1.is_empty() && est1.iter().all(|(_, c)| c.passed);
    let names: Vec<&str> = est1.iter().map(|(n, _)| n.as_str()).collect();
    h.record(7, "energy bound", ok7, format!("{} ensembles ({}), worst ratio {worst:.4}", est1.len(), names.join(" ")), 0.0);

    // 8: replay from manifests. The long runs of 4 to 6 are replayed at a
    // reduced path count; every other run is replayed as is.
    let start = Instant::now();
    let dir8 = root.join("c8");
    let cfg8 = config(&dir8, FAMILY_REPLAY);
    cmd_cell(&cfg8).unwrap();
    cmd_compare(&cfg8).unwrap();
    let mut runs: Vec<(PathBuf, &str)> = vec![(dir1, "cell"), (dir2, "cell"), (dir8, "compare")];
    runs.extend((0..3).map(|i| (root.join(format!("c3_{i}")), "simulate_macro")));
    let mut problems = Vec::new();
    let mut files = 0;
    for (dir, manifest) in &runs {
        let text = fs::read_to_string(dir.join(format!("manifest_{manifest}.txt"))).unwrap();
        let mut again = RunConfig::parse(&text).unwrap();
        let replay = dir.with_extension("replay");
        again.out_dir = replay.clone();
        cmd_cell(&again).unwrap();
        match *manifest {
            "compare" => drop(cmd_compare(&again).unwrap()),
            "simulate_macro" => drop(cmd_simulate(&again, Which::Macro, None).unwrap()),
            _ => {}
        }
        let cell_same = fs::read(dir.join("cell.txt")).unwrap() == fs::read(replay.join("cell.txt")).unwrap();
        match same_csvs(dir, &replay) {
            Ok(n) if cell_same => files += n + 1,
            Ok(_) => problems.push(format!("{}: cell.txt differs", dir.display())),
            Err(e) => problems.push(format!("{}: {e}", dir.display())),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = if problems.is_empty() {
        format!("{} runs, {files} files byte-identical", runs.len())
    } else {
        problems.join("; ")
    };
    h.record(8, "reproducibility", problems.is_empty(), detail, secs);

    let summary: String = h.lines.iter().map(|l| render(l) + "\n").collect();
    fs::write(root.join("acceptance.txt"), &summary).unwrap();
    let failed: Vec<String> = h.lines.iter().filter(|l| !l.passed).map(|l| format!("{} {}", l.id, l.name)).collect();
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
