//! Convergence and conservation studies, their CSV output, and the
//! self-test report behind the `cnfem` command line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::assembly::{assemble_load, assemble_mass, assemble_stiffness};
use crate::error::{Error, Result};
use crate::fe_space::{monomial_error, quadrature};
use crate::fe_space::{Degree, FeSpace};
use crate::manufactured::{
    example1, example2, example3, max_residuals, sample_points, Model, ProblemSpec,
};
use crate::mesh::Mesh;
use crate::projection::{observed_order, ErrorNorm};
use crate::scheme::{
    run, AssembledOperators, InitialPotential, InvariantReport, SchemeParams,
    DEFAULT_PICARD_MAX_ITER, DEFAULT_PICARD_TOL,
};

/// Parses a mesh size `1/n` (or a decimal equal to `1/n`) into `n`.
pub fn parse_mesh_size(s: &str) -> Result<usize> {
    let s = s.trim();
    let bad = || Error::InvalidArgument(format!("mesh size '{s}' is not of the form 1/n"));
    if let Some(den) = s.strip_prefix("1/") {
        let n: usize = den.trim().parse().map_err(|_| bad())?;
        return if n == 0 { Err(bad()) } else { Ok(n) };
    }
    let h: f64 = s.parse().map_err(|_| bad())?;
    if !(h > 0.0 && h <= 1.0) {
        return Err(bad());
    }
    let n = (1.0 / h).round();
    if (n * h - 1.0).abs() > 1e-9 {
        return Err(bad());
    }
    Ok(n as usize)
}

pub fn parse_mesh_sizes(s: &str) -> Result<Vec<usize>> {
    s.split(',').map(parse_mesh_size).collect()
}

/// Nominal time step as a function of the mesh size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauRule {
    /// `tau = h`
    H,
    /// `tau = h^(3/2)`
    H15,
    Fixed(f64),
}

impl TauRule {
    pub fn nominal(self, h: f64) -> f64 {
        match self {
            TauRule::H => h,
            TauRule::H15 => h.powf(1.5),
            TauRule::Fixed(tau) => tau,
        }
    }
}

impl std::str::FromStr for TauRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "h" => Ok(TauRule::H),
            "h1.5" | "h^1.5" | "h^(3/2)" | "h^3/2" => Ok(TauRule::H15),
            other => match other.parse::<f64>() {
                Ok(tau) if tau > 0.0 && tau.is_finite() => Ok(TauRule::Fixed(tau)),
                _ => Err(Error::InvalidArgument(format!(
                    "tau rule '{other}' is not h, h1.5 or a positive number"
                ))),
            },
        }
    }
}

/// Reads `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected key = value, got '{line}'"),
        })?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: "empty key".into(),
            });
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    parse_config(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example {
    One,
    Two,
}

impl Example {
    pub fn spec(self) -> ProblemSpec {
        match self {
            Example::One => example1(),
            Example::Two => example2(),
        }
    }
}

impl std::str::FromStr for Example {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" => Ok(Example::One),
            "2" => Ok(Example::Two),
            other => Err(Error::InvalidArgument(format!(
                "unknown example '{other}' (expected 1 or 2)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceConfig {
    pub example: Example,
    pub degree: Degree,
    /// Mesh levels as `n` with `h = 1/n`, coarsest first.
    pub levels: Vec<usize>,
    pub tau_rule: TauRule,
    pub final_time: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
}

impl ConvergenceConfig {
    pub fn new(example: Example, degree: Degree, levels: Vec<usize>, tau_rule: TauRule) -> Self {
        ConvergenceConfig {
            example,
            degree,
            levels,
            tau_rule,
            final_time: 0.5,
            picard_tol: DEFAULT_PICARD_TOL,
            picard_max_iter: DEFAULT_PICARD_MAX_ITER,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::InvalidArgument("no mesh levels given".into()));
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "mesh sizes must be strictly decreasing".into(),
            ));
        }
        if !(self.final_time > 0.0 && self.final_time.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "invalid final time {}",
                self.final_time
            )));
        }
        if !(self.picard_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "invalid tolerance {}",
                self.picard_tol
            )));
        }
        if self.picard_max_iter == 0 {
            return Err(Error::InvalidArgument(
                "Picard iteration cap must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelResult {
    pub err_u: f64,
    pub err_phi: f64,
    pub n_steps: usize,
    pub picard_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub h: f64,
    pub outcome: std::result::Result<LevelResult, String>,
    pub order_u: Option<f64>,
    pub order_phi: Option<f64>,
}

impl ConvergenceRow {
    pub fn failed(&self) -> bool {
        self.outcome.is_err()
    }
}

#[derive(Debug)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    /// Numerical failures, by level, with their messages.
    pub failures: Vec<(usize, Error)>,
}

impl ConvergenceStudy {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs one manufactured problem to `T` on the `n x n` mesh and measures the
/// final L2 errors.
pub fn run_level(spec: &ProblemSpec, cfg: &ConvergenceConfig, n: usize) -> Result<LevelResult> {
    let space = Arc::new(FeSpace::new(Arc::new(Mesh::structured(n)?), cfg.degree));
    let tau = cfg.tau_rule.nominal(1.0 / n as f64);
    let mut params = SchemeParams::new(spec.alpha, spec.beta, spec.final_time, tau)?
        .with_picard_tol(cfg.picard_tol);
    params.picard_max_iter = cfg.picard_max_iter;
    params.validate()?;
    let ops = AssembledOperators::new(space.clone(), &params)?;
    let mut picard_iterations = 0;
    let out = run(spec, &params, &ops, |_, _, trace| {
        picard_iterations += trace.map_or(0, |t| t.iterations);
    })?;
    let norm = ErrorNorm::new(space)?;
    let (u, phi) = match (&spec.u_exact, &spec.phi_exact) {
        (Some(u), Some(phi)) => (u, phi),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "{} has no exact solution",
                spec.name
            )))
        }
    };
    Ok(LevelResult {
        err_u: norm.l2_error(&out.state.u, u, out.state.t),
        err_phi: norm.l2_error(&out.state.phi, phi, out.state.t),
        n_steps: params.n_steps,
        picard_iterations,
    })
}

/// Runs every level (in parallel) and tabulates errors and observed orders.
/// Configuration errors abort; numerical failures mark their row.
pub fn run_convergence(cfg: &ConvergenceConfig) -> Result<ConvergenceStudy> {
    cfg.validate()?;
    let mut spec = cfg.example.spec();
    spec.final_time = cfg.final_time;
    let results: Vec<Result<LevelResult>> = cfg
        .levels
        .par_iter()
        .map(|&n| run_level(&spec, cfg, n))
        .collect();

    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(results.len());
    let mut failures = vec![];
    for (&n, result) in cfg.levels.iter().zip(results) {
        let h = 1.0 / n as f64;
        let outcome = match result {
            Ok(level) => Ok(level),
            Err(e) if e.is_numerical() => {
                let msg = e.to_string();
                failures.push((n, e));
                Err(msg)
            }
            Err(e) => return Err(e),
        };
        let (mut order_u, mut order_phi) = (None, None);
        if let (Some(prev), Ok(cur)) = (rows.last(), &outcome) {
            if let Ok(p) = &prev.outcome {
                order_u = Some(observed_order(&[(prev.h, p.err_u), (h, cur.err_u)])?[0]);
                order_phi = Some(observed_order(&[(prev.h, p.err_phi), (h, cur.err_phi)])?[0]);
            }
        }
        rows.push(ConvergenceRow {
            h,
            outcome,
            order_u,
            order_phi,
        });
    }
    Ok(ConvergenceStudy { rows, failures })
}

fn fmt_sci(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.6e}")
    }
}

fn fmt_order(x: Option<f64>) -> String {
    x.map(fmt_sci).unwrap_or_default()
}

pub const CONVERGENCE_HEADER: &str = "h,err_u,order_u,err_phi,order_phi";

pub fn write_convergence_csv(study: &ConvergenceStudy, mut w: impl Write) -> Result<()> {
    writeln!(w, "{CONVERGENCE_HEADER}")?;
    for row in &study.rows {
        match &row.outcome {
            Ok(level) => writeln!(
                w,
                "{},{},{},{},{}",
                fmt_sci(row.h),
                fmt_sci(level.err_u),
                fmt_order(row.order_u),
                fmt_sci(level.err_phi),
                fmt_order(row.order_phi)
            )?,
            Err(_) => writeln!(w, "{},failed,,failed,", fmt_sci(row.h))?,
        }
    }
    Ok(())
}

/// Human-readable table with the Picard iteration counts.
pub fn render_convergence(study: &ConvergenceStudy) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>8}  {:>12}  {:>6}  {:>12}  {:>6}  {:>6}  {:>7}",
        "h", "err_u", "order", "err_phi", "order", "steps", "picard"
    );
    let order = |o: Option<f64>| o.map_or("/".to_string(), |o| format!("{o:.2}"));
    for row in &study.rows {
        let h = format!("1/{}", (1.0 / row.h).round());
        match &row.outcome {
            Ok(l) => {
                let _ = writeln!(
                    s,
                    "{h:>8}  {:>12.4e}  {:>6}  {:>12.4e}  {:>6}  {:>6}  {:>7}",
                    l.err_u,
                    order(row.order_u),
                    l.err_phi,
                    order(row.order_phi),
                    l.n_steps,
                    l.picard_iterations
                );
            }
            Err(msg) => {
                let _ = writeln!(s, "{h:>8}  failed: {msg}");
            }
        }
    }
    s
}

#[derive(Debug, Clone)]
pub struct ConservationConfig {
    pub model: Model,
    pub degree: Degree,
    pub n: usize,
    pub tau: f64,
    pub final_time: f64,
    pub picard_tol: f64,
    pub initial_potential: InitialPotential,
}

impl ConservationConfig {
    pub fn new(model: Model, n: usize, tau: f64, final_time: f64) -> Self {
        ConservationConfig {
            model,
            degree: Degree::Linear,
            n,
            tau,
            final_time,
            picard_tol: 1e-12,
            initial_potential: InitialPotential::Consistent,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConservationRun {
    pub records: Vec<InvariantReport>,
    pub max_picard_iterations: usize,
    /// Whether every step's Picard increments decreased monotonically.
    pub contracting: bool,
}

impl ConservationRun {
    /// `max_n |M^n - M^0| / M^0`
    pub fn mass_drift(&self) -> f64 {
        relative_drift(self.records.iter().map(|r| r.mass))
    }

    pub fn energy_drift(&self) -> f64 {
        relative_drift(self.records.iter().map(|r| r.energy))
    }
}

fn relative_drift(mut values: impl Iterator<Item = f64>) -> f64 {
    let Some(first) = values.next() else {
        return 0.0;
    };
    values.fold(0.0f64, |d, v| d.max((v - first).abs())) / first.abs()
}

/// The unforced problem from the smooth initial data, recording mass and
/// energy after every step.
pub fn run_conservation(cfg: &ConservationConfig) -> Result<ConservationRun> {
    let spec = example3(cfg.model);
    let space = Arc::new(FeSpace::new(Arc::new(Mesh::structured(cfg.n)?), cfg.degree));
    let params = SchemeParams::new(spec.alpha, spec.beta, cfg.final_time, cfg.tau)?
        .with_picard_tol(cfg.picard_tol)
        .with_initial_potential(cfg.initial_potential);
    let ops = AssembledOperators::new(space, &params)?;
    let mut max_picard_iterations = 0;
    let mut contracting = true;
    let out = run(&spec, &params, &ops, |_, _, trace| {
        if let Some(t) = trace {
            max_picard_iterations = max_picard_iterations.max(t.iterations);
            contracting &= t.is_contracting();
        }
    })?;
    Ok(ConservationRun {
        records: out.invariants,
        max_picard_iterations,
        contracting,
    })
}

pub fn write_conservation_csv(run: &ConservationRun, mut w: impl Write) -> Result<()> {
    writeln!(w, "t,mass,energy")?;
    for r in &run.records {
        writeln!(w, "{:.6e},{:.15e},{:.15e}", r.t, r.mass, r.energy)?;
    }
    Ok(())
}

/// Path of the plot script written next to a CSV file.
pub fn plot_script_path(csv: &Path) -> PathBuf {
    csv.with_extension("py")
}

/// A matplotlib script drawing mass and energy against time from `csv`.
pub fn plot_script(csv: &Path, title: &str) -> String {
    let name = csv
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "conserve.csv".into());
    let png = Path::new(&name).with_extension("png");
    format!(
        r#"import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
t, mass, energy = [], [], []
with open(os.path.join(here, "{name}")) as f:
    for row in csv.DictReader(f):
        t.append(float(row["t"]))
        mass.append(float(row["mass"]))
        energy.append(float(row["energy"]))

fig, axes = plt.subplots(1, 2, figsize=(10, 4))
for ax, values, label in ((axes[0], mass, "discrete mass"), (axes[1], energy, "discrete energy")):
    ax.plot(t, values)
    ax.set_xlabel("t")
    ax.set_ylabel(label)
    ax.ticklabel_format(useOffset=False)
fig.suptitle("{title}")
fig.tight_layout()
fig.savefig(os.path.join(here, "{png}"), dpi=150)
"#,
        png = png.display()
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Perturbs one assembled stiffness entry by `1e-6`.
    Stiffness,
}

impl std::str::FromStr for Fault {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "stiffness" => Ok(Fault::Stiffness),
            other => Err(Error::InvalidArgument(format!("unknown fault '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
    /// `(degree, points, largest monomial error)` for every rule.
    pub quadrature: Vec<(usize, usize, f64)>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }

    pub fn render(&self) -> String {
        let mut s = String::from("quadrature exactness\n  degree  points  max monomial error\n");
        for (d, np, err) in &self.quadrature {
            let _ = writeln!(s, "  {d:>6}  {np:>6}  {err:>18.3e}");
        }
        for c in &self.checks {
            let tag = if c.passed { "ok  " } else { "FAIL" };
            let _ = writeln!(s, "{tag} {}: {}", c.name, c.detail);
        }
        let _ = if self.passed() {
            writeln!(s, "all {} checks passed", self.checks.len())
        } else {
            writeln!(s, "failed: {}", self.failures().join(", "))
        };
        s
    }
}

/// Hand-assembly oracles, quadrature exactness and residual identities.
pub fn selftest(fault: Option<Fault>) -> Result<SelftestReport> {
    let mut checks = vec![];
    let mut check = |name: &str, passed: bool, detail: String| {
        checks.push(Check {
            name: name.to_string(),
            passed,
            detail,
        })
    };

    // One interior vertex on the 2 x 2 mesh: its six triangles give
    // M = 6 * (1/8) * (2/12) and K = 4 exactly.
    let space = Arc::new(FeSpace::new(Arc::new(Mesh::structured(2)?), Degree::Linear));
    let m = assemble_mass(&space);
    check(
        "assemble_mass",
        m.to_dense() == vec![vec![0.125]],
        format!("n = 2 P1 mass {:?}, expected [[0.125]]", m.to_dense()),
    );
    let mut k = assemble_stiffness(&space);
    if fault == Some(Fault::Stiffness) {
        k.values[0] += 1e-6;
    }
    check(
        "assemble_stiffness",
        k.to_dense() == vec![vec![4.0]],
        format!("n = 2 P1 stiffness {:?}, expected [[4.0]]", k.to_dense()),
    );
    let full = Arc::new(FeSpace::new(
        Arc::new(Mesh::structured(3)?),
        Degree::Quadratic,
    ));
    let ones: f64 = crate::assembly::Assembler::new(full, crate::assembly::DofSet::All)?
        .load(|_| 1.0f64)?
        .iter()
        .sum();
    check(
        "assemble_load",
        (ones - 1.0).abs() <= 1e-14,
        format!("integral of 1 over the square = {ones}"),
    );
    let interior_load: Vec<f64> = assemble_load(&space, |_| 1.0)?;
    check(
        "assemble_load (interior)",
        (interior_load[0] - 0.25).abs() <= 1e-15,
        format!("hat-function integral {} (expected 0.25)", interior_load[0]),
    );

    let mut table = vec![];
    for degree in 1..=6 {
        let rule = quadrature(degree)?;
        let err = monomial_error(&rule, rule.exactness_degree as u32);
        table.push((degree, rule.points.len(), err));
    }
    let worst = table.iter().map(|r| r.2).fold(0.0, f64::max);
    check(
        "quadrature",
        worst <= 1e-14,
        format!("largest monomial error {worst:.2e} for degrees 1-6"),
    );

    for spec in [example1(), example2()] {
        let (r1, r2) = max_residuals(&spec, &sample_points(7, 200, spec.final_time))
            .expect("manufactured problems carry exact solutions");
        check(
            &format!("residual identity {}", spec.name),
            r1 <= 1e-8 && r2 <= 1e-8,
            format!("max residuals {r1:.2e}, {r2:.2e} at 200 samples"),
        );
    }
    Ok(SelftestReport {
        checks,
        quadrature: table,
    })
}
