//! Line-oriented run configuration: `[section]` headers, `key = value`
//! lines, `#` comments. Every key has a default; unknown sections and keys
//! are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use perfhom_core::geometry::{CoefficientField, Hole, PeriodicCell, Rect};
use perfhom_core::spde::{NoiseModel, ScalarField, SourceField};

use crate::error::{CliError, Stage};
use crate::expr::Expr;

#[derive(Debug, Clone, PartialEq)]
pub enum HoleSpec {
    None,
    Disk { center: [f64; 2], radius: f64 },
    Polygon(Vec<[f64; 2]>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientSpec {
    Identity,
    Diag(f64, f64),
    Checker(f64, f64),
    /// Entries `a11 a12 a21 a22` as expressions in `y1, y2`.
    Inline([String; 4]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub domain: [f64; 4],
    pub cell_lengths: [f64; 2],
    pub hole: HoleSpec,
    pub eps: Vec<f64>,
    /// Mesh size of the macro mesh of `D`.
    pub h: f64,
    /// Micro mesh size as a fraction of `ε`.
    pub micro_h_ratio: f64,

    pub cell_h: f64,
    pub refinement: Vec<f64>,

    pub coefficient: CoefficientSpec,
    pub alpha: Option<f64>,
    pub bound: Option<f64>,

    pub m: usize,
    pub sigma: f64,
    pub decay: f64,
    pub seed: u64,

    pub forcing: String,
    pub initial: String,
    pub t_final: f64,
    pub dt: f64,
    /// Step of the underlying Brownian grid (common random numbers across
    /// `Δt`); defaults to `dt`.
    pub noise_dt: Option<f64>,
    pub t_long: f64,
    pub dt_long: f64,
    pub burn_in: f64,

    pub paths: usize,
    pub stationary_paths: usize,
    pub test_functions: usize,
    pub psi: String,
    pub batch: usize,
    pub threads: usize,
    pub strong_gap: bool,
    pub convergence: bool,
    pub stationary: bool,
    pub stationary_eps: Option<f64>,
    pub se_factor: f64,
    pub stationary_se_factor: f64,
    /// Gaps at or below this level count as converged in the monotonicity
    /// checks (alongside gaps within `se_factor` standard errors of zero).
    pub gap_tolerance: f64,

    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            domain: [0.0, 0.0, 1.0, 1.0],
            cell_lengths: [1.0, 1.0],
            hole: HoleSpec::Disk { center: [0.5, 0.5], radius: 0.25 },
            eps: vec![0.25, 0.125, 0.0625],
            h: 1.0 / 64.0,
            micro_h_ratio: 0.125,
            cell_h: 0.02,
            refinement: Vec::new(),
            coefficient: CoefficientSpec::Identity,
            alpha: None,
            bound: None,
            m: 16,
            sigma: 1.0,
            decay: 1.5,
            seed: 20240611,
            forcing: "1 + 8*x1*x2".into(),
            initial: "sin(pi*x1)*sin(pi*x2)".into(),
            t_final: 1.0,
            dt: 1e-3,
            noise_dt: None,
            t_long: 20.0,
            dt_long: 0.01,
            burn_in: 5.0,
            paths: 200,
            stationary_paths: 200,
            test_functions: 6,
            psi: "sin(pi*t/T)^2".into(),
            batch: 8,
            threads: 1,
            strong_gap: true,
            convergence: true,
            stationary: true,
            stationary_eps: None,
            se_factor: 2.0,
            stationary_se_factor: 3.0,
            gap_tolerance: 0.0,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn fmt_f(x: f64) -> String {
    format!("{x:?}")
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f(*x)).collect::<Vec<_>>().join(" ")
}

struct Field<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
}

impl Field<'_> {
    fn err(&self, msg: impl std::fmt::Display) -> CliError {
        CliError::Config { line: self.line, message: format!("{}: {msg}", self.key) }
    }

    fn f64(&self) -> Result<f64, CliError> {
        let v: f64 = self.value.parse().map_err(|_| self.err(format!("expected a number, got '{}'", self.value)))?;
        if !v.is_finite() {
            return Err(self.err("must be finite"));
        }
        Ok(v)
    }

    fn positive(&self) -> Result<f64, CliError> {
        let v = self.f64()?;
        if v <= 0.0 {
            return Err(self.err(format!("must be positive, got {v}")));
        }
        Ok(v)
    }

    fn list(&self) -> Result<Vec<f64>, CliError> {
        self.value
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| self.err(format!("bad number '{s}'"))))
            .collect()
    }

    fn array<const N: usize>(&self) -> Result<[f64; N], CliError> {
        let v = self.list()?;
        v.try_into().map_err(|v: Vec<f64>| self.err(format!("expected {N} numbers, got {}", v.len())))
    }

    fn usize(&self) -> Result<usize, CliError> {
        self.value.parse().map_err(|_| self.err(format!("expected a non-negative integer, got '{}'", self.value)))
    }

    fn bool(&self) -> Result<bool, CliError> {
        match self.value {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(self.err(format!("expected true/false, got '{}'", self.value))),
        }
    }

    fn expr(&self, vars: &[&str]) -> Result<String, CliError> {
        Expr::parse(self.value, vars).map_err(|e| self.err(e))?;
        Ok(self.value.to_string())
    }
}

/// Parses `name(a, b)` into its two arguments.
fn call2(value: &str, name: &str) -> Option<(f64, f64)> {
    let inner = value.strip_prefix(name)?.trim().strip_prefix('(')?.strip_suffix(')')?;
    let mut it = inner.split(',').map(|s| s.trim().parse::<f64>());
    match (it.next(), it.next(), it.next()) {
        (Some(Ok(a)), Some(Ok(b)), None) => Some((a, b)),
        _ => None,
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        let mut section = String::new();
        let mut inline: [Option<String>; 4] = Default::default();
        let mut seen: BTreeMap<(String, String), usize> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| CliError::Config { line, message: "unterminated section header".into() })?
                    .trim();
                if !["geometry", "cell", "coefficient", "noise", "problem", "experiment", "output"].contains(&name) {
                    return Err(CliError::Config { line, message: format!("unknown section [{name}]") });
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| CliError::Config { line, message: format!("expected 'key = value', got '{content}'") })?;
            let f = Field { line, key: key.trim(), value: value.trim() };
            if section.is_empty() {
                return Err(f.err("key outside of any section"));
            }
            if let Some(first) = seen.insert((section.clone(), f.key.to_string()), line) {
                return Err(f.err(format!("duplicate key (first set on line {first})")));
            }
            match (section.as_str(), f.key) {
                ("geometry", "domain") => cfg.domain = f.array::<4>()?,
                ("geometry", "cell") => cfg.cell_lengths = f.array::<2>()?,
                ("geometry", "hole") => cfg.hole = parse_hole(&f)?,
                ("geometry", "eps") => cfg.eps = f.list()?,
                ("geometry", "h") => cfg.h = f.positive()?,
                ("geometry", "micro_h_ratio") => cfg.micro_h_ratio = f.positive()?,
                ("cell", "h") => cfg.cell_h = f.positive()?,
                ("cell", "refinement") => cfg.refinement = f.list()?,
                ("coefficient", "preset") => cfg.coefficient = parse_preset(&f, cfg.cell_lengths)?,
                ("coefficient", k @ ("a11" | "a12" | "a21" | "a22")) => {
                    let i = ["a11", "a12", "a21", "a22"].iter().position(|n| *n == k).unwrap_or(0);
                    inline[i] = Some(f.expr(&["y1", "y2"])?);
                }
                ("coefficient", "alpha") => cfg.alpha = Some(f.f64()?),
                ("coefficient", "bound") => cfg.bound = Some(f.f64()?),
                ("noise", "m") => cfg.m = f.usize()?,
                ("noise", "sigma") => cfg.sigma = f.f64()?,
                ("noise", "p") => cfg.decay = f.f64()?,
                ("noise", "seed") => cfg.seed = f.value.parse().map_err(|_| f.err("expected an unsigned integer"))?,
                ("problem", "f") => cfg.forcing = f.expr(&["x1", "x2", "t"])?,
                ("problem", "u0") => cfg.initial = f.expr(&["x1", "x2"])?,
                ("problem", "T") => cfg.t_final = f.positive()?,
                ("problem", "dt") => cfg.dt = f.positive()?,
                ("problem", "noise_dt") => cfg.noise_dt = Some(f.positive()?),
                ("problem", "T_long") => cfg.t_long = f.positive()?,
                ("problem", "dt_long") => cfg.dt_long = f.positive()?,
                ("problem", "burn_in") => cfg.burn_in = f.f64()?,
                ("experiment", "paths") => cfg.paths = f.usize()?,
                ("experiment", "stationary_paths") => cfg.stationary_paths = f.usize()?,
                ("experiment", "test_functions") => cfg.test_functions = f.usize()?,
                ("experiment", "psi") => cfg.psi = f.expr(&["t", "T"])?,
                ("experiment", "batch") => cfg.batch = f.usize()?,
                ("experiment", "threads") => cfg.threads = f.usize()?,
                ("experiment", "strong_gap") => cfg.strong_gap = f.bool()?,
                ("experiment", "convergence") => cfg.convergence = f.bool()?,
                ("experiment", "stationary") => cfg.stationary = f.bool()?,
                ("experiment", "stationary_eps") => cfg.stationary_eps = Some(f.positive()?),
                ("experiment", "se_factor") => cfg.se_factor = f.positive()?,
                ("experiment", "stationary_se_factor") => cfg.stationary_se_factor = f.positive()?,
                ("experiment", "gap_tolerance") => {
                    cfg.gap_tolerance = f.f64()?;
                    if cfg.gap_tolerance < 0.0 {
                        return Err(f.err("must be non-negative"));
                    }
                }
                ("output", "dir") => cfg.out_dir = PathBuf::from(f.value),
                _ => return Err(f.err(format!("unknown key in [{section}]"))),
            }
        }
        match inline {
            [Some(a), Some(b), Some(c), Some(d)] => {
                if seen.contains_key(&("coefficient".into(), "preset".into())) {
                    return Err(CliError::Validation("give either a coefficient preset or inline a11..a22, not both".into()));
                }
                cfg.coefficient = CoefficientSpec::Inline([a, b, c, d]);
            }
            [None, None, None, None] => {}
            _ => return Err(CliError::Validation("inline coefficient needs all of a11, a12, a21, a22".into())),
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        if !(self.domain[2] > self.domain[0] && self.domain[3] > self.domain[1]) {
            return bad(format!("domain {:?} must be xmin ymin xmax ymax with positive extent", self.domain));
        }
        if self.cell_lengths.iter().any(|&l| l <= 0.0) {
            return bad("cell lengths must be positive".into());
        }
        if self.eps.is_empty() {
            return bad("eps list must not be empty".into());
        }
        if self.eps.iter().any(|&e| e <= 0.0) {
            return bad("eps values must be positive".into());
        }
        if self.eps.windows(2).any(|w| w[0] <= w[1]) {
            return bad(format!("eps list must be strictly descending, got {:?}", self.eps));
        }
        if let Some(e) = self.stationary_eps {
            if !self.eps.iter().any(|x| (x - e).abs() <= 1e-12 * e) {
                return bad(format!("stationary_eps {e} is not in the eps list"));
            }
        }
        divides(self.dt, self.t_final, "dt", "T")?;
        if let Some(n) = self.noise_dt {
            divides(n, self.dt, "noise_dt", "dt")?;
        }
        divides(self.dt_long, self.t_long, "dt_long", "T_long")?;
        if !(self.burn_in >= 0.0 && self.burn_in < self.t_long) {
            return bad(format!("burn_in {} must lie in [0, T_long)", self.burn_in));
        }
        if self.sigma < 0.0 {
            return bad("noise sigma must be non-negative".into());
        }
        if self.decay <= 0.5 {
            return bad(format!("noise decay p = {} must exceed 1/2", self.decay));
        }
        if let CoefficientSpec::Inline(_) = self.coefficient {
            match (self.alpha, self.bound) {
                (Some(a), Some(b)) if a > 0.0 && b > 0.0 => {}
                _ => return bad("inline coefficient needs declared alpha > 0 and bound > 0".into()),
            }
        }
        if self.paths == 0 || self.batch == 0 || self.threads == 0 {
            return bad("paths, batch and threads must be at least 1".into());
        }
        if self.stationary && self.forcing_expr()?.uses("t") {
            return bad("the stationary experiment needs a time-independent forcing".into());
        }
        Ok(())
    }

    /// The `ε` of the stationary experiment: `stationary_eps` if set, else
    /// the middle entry of the list.
    pub fn stationary_eps(&self) -> f64 {
        self.stationary_eps.unwrap_or(self.eps[self.eps.len() / 2])
    }

    /// Hash of the configuration with the output directory and thread count
    /// normalized away: two runs with equal hashes produce equal CSVs.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.threads = 1;
        c.out_dir = PathBuf::from("out");
        sha256_hex(&c.canonical())
    }

    /// Hash of the inputs of the cell problem alone.
    pub fn cell_hash(&self) -> String {
        let c = Self {
            cell_lengths: self.cell_lengths,
            hole: self.hole.clone(),
            cell_h: self.cell_h,
            coefficient: self.coefficient.clone(),
            alpha: self.alpha,
            bound: self.bound,
            ..Self::default()
        };
        sha256_hex(&c.canonical())
    }

    /// Substeps per step on the Brownian grid.
    pub fn substeps(&self) -> usize {
        self.noise_dt.map_or(1, |n| (self.dt / n).round() as usize)
    }

    pub fn rect(&self) -> Rect<f64> {
        Rect::new([self.domain[0], self.domain[1]], [self.domain[2], self.domain[3]]).expect("validated domain")
    }

    pub fn core_hole(&self) -> Hole<f64> {
        match &self.hole {
            HoleSpec::None => Hole::Empty,
            HoleSpec::Disk { center, radius } => Hole::Disk { center: *center, radius: *radius },
            HoleSpec::Polygon(v) => Hole::Polygon(v.clone()),
        }
    }

    pub fn coefficient_field(&self) -> Result<CoefficientField<f64>, CliError> {
        let mut field = match &self.coefficient {
            CoefficientSpec::Identity => CoefficientField::identity(),
            CoefficientSpec::Diag(a, b) => CoefficientField::diagonal(*a, *b),
            CoefficientSpec::Checker(a, b) => CoefficientField::checker(*a, *b, self.cell_lengths),
            CoefficientSpec::Inline(src) => {
                let parse = |s: &str| Expr::parse(s, &["y1", "y2"]).map(Expr::shared);
                let e = [parse(&src[0]), parse(&src[1]), parse(&src[2]), parse(&src[3])];
                let [Ok(a), Ok(b), Ok(c), Ok(d)] = e else {
                    return Err(CliError::Validation("inline coefficient does not parse".into()));
                };
                CoefficientField::new("inline", self.alpha.unwrap_or(0.0), self.bound.unwrap_or(0.0), move |y| {
                    [[a.eval(&y), b.eval(&y)], [c.eval(&y), d.eval(&y)]]
                })
            }
        };
        if let Some(a) = self.alpha {
            field.alpha = a;
        }
        if let Some(b) = self.bound {
            field.bound = b;
        }
        Ok(field)
    }

    pub fn cell(&self) -> Result<PeriodicCell<f64>, CliError> {
        PeriodicCell::new(self.cell_lengths, self.core_hole(), self.coefficient_field()?).stage(|| "cell".into())
    }

    pub fn noise(&self) -> Result<NoiseModel<f64>, CliError> {
        NoiseModel::sine_series(self.m, self.sigma, self.decay, self.rect(), self.seed).stage(|| "noise".into())
    }

    fn forcing_expr(&self) -> Result<Expr, CliError> {
        Expr::parse(&self.forcing, &["x1", "x2", "t"]).map_err(|e| CliError::Validation(format!("f: {e}")))
    }

    /// `(f, f is time independent)`.
    pub fn forcing(&self) -> Result<(SourceField<f64>, bool), CliError> {
        let e = self.forcing_expr()?.shared();
        let is_static = !e.uses("t");
        Ok((Arc::new(move |x: [f64; 2], t: f64| e.eval(&[x[0], x[1], t])), is_static))
    }

    pub fn initial_field(&self) -> Result<ScalarField<f64>, CliError> {
        let e = Expr::parse(&self.initial, &["x1", "x2"]).map_err(|e| CliError::Validation(format!("u0: {e}")))?.shared();
        Ok(Arc::new(move |x: [f64; 2]| e.eval(&x)))
    }

    pub fn time_weight(&self) -> Result<impl Fn(f64) -> f64 + Send + Sync + 'static, CliError> {
        let e = Expr::parse(&self.psi, &["t", "T"]).map_err(|e| CliError::Validation(format!("psi: {e}")))?;
        let t_final = self.t_final;
        Ok(move |t: f64| e.eval(&[t, t_final]))
    }

    /// Normalized text: every key in a fixed order. Parsing it yields the same
    /// configuration, and its hash identifies the run.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = if k.starts_with('[') { writeln!(s, "\n{k}") } else { writeln!(s, "{k} = {v}") };
        };
        let hole = match &self.hole {
            HoleSpec::None => "none".to_string(),
            HoleSpec::Disk { center, radius } => format!("disk {} {} {}", fmt_f(center[0]), fmt_f(center[1]), fmt_f(*radius)),
            HoleSpec::Polygon(v) => {
                format!("polygon {}", fmt_list(&v.iter().flat_map(|p| [p[0], p[1]]).collect::<Vec<_>>()))
            }
        };
        kv("[geometry]", String::new());
        kv("domain", fmt_list(&self.domain));
        kv("cell", fmt_list(&self.cell_lengths));
        kv("hole", hole);
        kv("eps", fmt_list(&self.eps));
        kv("h", fmt_f(self.h));
        kv("micro_h_ratio", fmt_f(self.micro_h_ratio));
        kv("[cell]", String::new());
        kv("h", fmt_f(self.cell_h));
        if !self.refinement.is_empty() {
            kv("refinement", fmt_list(&self.refinement));
        }
        kv("[coefficient]", String::new());
        match &self.coefficient {
            CoefficientSpec::Identity => kv("preset", "identity".into()),
            CoefficientSpec::Diag(a, b) => kv("preset", format!("diag({}, {})", fmt_f(*a), fmt_f(*b))),
            CoefficientSpec::Checker(a, b) => kv("preset", format!("checker({}, {})", fmt_f(*a), fmt_f(*b))),
            CoefficientSpec::Inline(src) => {
                for (k, v) in ["a11", "a12", "a21", "a22"].iter().zip(src) {
                    kv(k, v.clone());
                }
            }
        }
        if let Some(a) = self.alpha {
            kv("alpha", fmt_f(a));
        }
        if let Some(b) = self.bound {
            kv("bound", fmt_f(b));
        }
        kv("[noise]", String::new());
        kv("m", self.m.to_string());
        kv("sigma", fmt_f(self.sigma));
        kv("p", fmt_f(self.decay));
        kv("seed", self.seed.to_string());
        kv("[problem]", String::new());
        kv("f", self.forcing.clone());
        kv("u0", self.initial.clone());
        kv("T", fmt_f(self.t_final));
        kv("dt", fmt_f(self.dt));
        if let Some(n) = self.noise_dt {
            kv("noise_dt", fmt_f(n));
        }
        kv("T_long", fmt_f(self.t_long));
        kv("dt_long", fmt_f(self.dt_long));
        kv("burn_in", fmt_f(self.burn_in));
        kv("[experiment]", String::new());
        kv("paths", self.paths.to_string());
        kv("stationary_paths", self.stationary_paths.to_string());
        kv("test_functions", self.test_functions.to_string());
        kv("psi", self.psi.clone());
        kv("batch", self.batch.to_string());
        kv("threads", self.threads.to_string());
        kv("strong_gap", self.strong_gap.to_string());
        kv("convergence", self.convergence.to_string());
        kv("stationary", self.stationary.to_string());
        if let Some(e) = self.stationary_eps {
            kv("stationary_eps", fmt_f(e));
        }
        kv("se_factor", fmt_f(self.se_factor));
        kv("stationary_se_factor", fmt_f(self.stationary_se_factor));
        kv("gap_tolerance", fmt_f(self.gap_tolerance));
        kv("[output]", String::new());
        kv("dir", self.out_dir.display().to_string());
        s.trim_start().to_string()
    }
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn divides(step: f64, total: f64, a: &str, b: &str) -> Result<(), CliError> {
    let r = total / step;
    if (r - r.round()).abs() > 1e-9 * r.max(1.0) || r.round() < 1.0 {
        return Err(CliError::Validation(format!("{a} = {step} must divide {b} = {total}")));
    }
    Ok(())
}

fn parse_hole(f: &Field<'_>) -> Result<HoleSpec, CliError> {
    let mut parts = f.value.split_whitespace();
    let kind = parts.next().unwrap_or("");
    let nums: Vec<f64> = parts
        .flat_map(|s| s.split(','))
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| f.err(format!("bad number '{s}'"))))
        .collect::<Result<_, _>>()?;
    match (kind, nums.len()) {
        ("none", 0) => Ok(HoleSpec::None),
        ("disk", 3) => Ok(HoleSpec::Disk { center: [nums[0], nums[1]], radius: nums[2] }),
        ("polygon", n) if n >= 6 && n % 2 == 0 => Ok(HoleSpec::Polygon(nums.chunks(2).map(|c| [c[0], c[1]]).collect())),
        _ => Err(f.err("expected 'none', 'disk cx cy r' or 'polygon x1 y1 x2 y2 ...' (at least 3 vertices)")),
    }
}

fn parse_preset(f: &Field<'_>, _lengths: [f64; 2]) -> Result<CoefficientSpec, CliError> {
    let v = f.value.replace(' ', "");
    if v == "identity" {
        return Ok(CoefficientSpec::Identity);
    }
    if let Some((a, b)) = call2(&v, "diag") {
        return Ok(CoefficientSpec::Diag(a, b));
    }
    if let Some((a, b)) = call2(&v, "checker") {
        return Ok(CoefficientSpec::Checker(a, b));
    }
    Err(f.err(format!("unknown preset '{}' (identity, diag(a1,a2), checker(a1,a2))", f.value)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_text_round_trips() {
        let src = "[geometry]\nhole = polygon 0.3 0.3, 0.7 0.3, 0.5 0.7\neps = 0.5 0.25\n[coefficient]\npreset = checker(1, 4)\n\
                   [problem]\nf = 1 + t*x1\nnoise_dt = 5e-4\n[experiment]\nstationary = false\n";
        let cfg = RunConfig::parse(src).unwrap();
        assert_eq!(cfg.coefficient, CoefficientSpec::Checker(1.0, 4.0));
        assert_eq!(cfg.substeps(), 2);
        let again = RunConfig::parse(&cfg.canonical()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.canonical(), cfg.canonical());
        assert_eq!(RunConfig::default().canonical(), RunConfig::parse("").unwrap().canonical());
    }

    #[test]
    fn hash_ignores_output_location_and_threads() {
        let a = RunConfig::parse("[experiment]\nthreads = 4\n[output]\ndir = /tmp/x\n").unwrap();
        let b = RunConfig::default();
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig::parse("[noise]\nseed = 1\n").unwrap();
        assert_ne!(c.hash(), b.hash());
        assert_eq!(c.cell_hash(), b.cell_hash());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let line = |src: &str| match RunConfig::parse(src) {
            Err(CliError::Config { line, .. }) => line,
            other => panic!("{other:?}"),
        };
        assert_eq!(line("[geometry]\n\nh = abc\n"), 3);
        assert_eq!(line("[nope]\n"), 1);
        assert_eq!(line("[noise]\nm = 3\nm = 4\n"), 3);
        assert_eq!(line("h = 1\n"), 1);
        assert_eq!(line("[problem]\n# comment\nf = sin(x3)\n"), 3);
        assert_eq!(line("[geometry]\nhole = disk 0.5\n"), 2);
    }

    #[test]
    fn validation_rejects_inconsistent_settings() {
        let invalid = |src: &str| matches!(RunConfig::parse(src), Err(CliError::Validation(_)));
        assert!(invalid("[geometry]\neps = 0.125 0.25\n"));
        assert!(invalid("[problem]\ndt = 0.3\n"));
        assert!(invalid("[problem]\nnoise_dt = 0.0003\n"));
        assert!(invalid("[problem]\nf = t\n"));
        assert!(invalid("[coefficient]\na11 = 1\na12 = 0\na21 = 0\na22 = 1\n"));
        assert!(invalid("[coefficient]\na11 = 1\n"));
        assert!(invalid("[experiment]\nstationary_eps = 0.3\n"));
        assert!(!invalid("[problem]\nf = t\n[experiment]\nstationary = false\n"));
    }

    #[test]
    fn inline_coefficient_evaluates_expressions() {
        let cfg = RunConfig::parse(
            "[geometry]\nhole = none\n[coefficient]\na11 = 2 + sin(2*pi*y1)\na12 = 0\na21 = 0\na22 = 2\nalpha = 1\nbound = 3\n",
        )
        .unwrap();
        let a = cfg.coefficient_field().unwrap();
        assert!((a.eval([0.25, 0.0])[0][0] - 3.0).abs() < 1e-14);
        assert!(cfg.cell().is_ok());
        let zero = RunConfig::parse("[coefficient]\npreset = diag(0, 0)\n").unwrap();
        assert_eq!(zero.cell().unwrap_err().exit_code(), 2);
    }
}
