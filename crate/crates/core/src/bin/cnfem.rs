use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use cnfem::fe_space::Degree;
use cnfem::harness::{self, ConservationConfig, ConvergenceConfig, Example, Fault, TauRule};
use cnfem::manufactured::Model;
use cnfem::scheme::InitialPotential;
use cnfem::Error;

/// Crank-Nicolson finite elements for the Schrodinger-Helmholtz and
/// Schrodinger-Poisson systems on the unit square.
#[derive(Parser)]
#[command(name = "cnfem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// L2 errors and observed orders for a manufactured solution.
    Converge(ConvergeArgs),
    /// Discrete mass and energy of the unforced problem over time.
    Conserve(ConserveArgs),
    /// Assembly oracles, quadrature exactness and residual identities.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct ConvergeArgs {
    /// key = value file; command-line flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// Benchmark problem: 1 (Helmholtz) or 2 (Poisson) [default: 1]
    #[arg(long)]
    example: Option<String>,
    /// Polynomial degree, 1 or 2 [default: 1]
    #[arg(long)]
    degree: Option<String>,
    /// Comma-separated mesh sizes [default: 1/10,1/20,1/40]
    #[arg(long = "h")]
    h: Option<String>,
    /// Time step: h, h1.5 or a number [default: h for P1, h1.5 for P2]
    #[arg(long = "tau-rule")]
    tau_rule: Option<String>,
    /// Final time [default: 0.5]
    #[arg(long = "T")]
    final_time: Option<String>,
    /// Picard tolerance [default: 1e-7]
    #[arg(long)]
    tol: Option<String>,
    /// Picard iteration cap [default: 100]
    #[arg(long = "max-iter")]
    max_iter: Option<String>,
    /// CSV output; printed to stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConserveArgs {
    /// key = value file; command-line flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// helmholtz (alpha = beta = 1) or poisson (alpha = 0, beta = 1) [default: helmholtz]
    #[arg(long)]
    model: Option<String>,
    /// Polynomial degree, 1 or 2 [default: 1]
    #[arg(long)]
    degree: Option<String>,
    /// Mesh size [default: 1/20]
    #[arg(long = "h")]
    h: Option<String>,
    /// Time step [default: 0.1]
    #[arg(long)]
    tau: Option<String>,
    /// Final time [default: 100]
    #[arg(long = "T")]
    final_time: Option<String>,
    /// Picard tolerance [default: 1e-12]
    #[arg(long)]
    tol: Option<String>,
    /// consistent (solve for the potential of u0) or ritz (project phi0) [default: consistent]
    #[arg(long = "initial-potential")]
    initial_potential: Option<String>,
    /// CSV output, with a plot script next to it; printed to stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    /// Deliberately corrupt one component to check that the test notices
    #[arg(long = "inject-fault", value_parser = ["stiffness"])]
    inject_fault: Option<String>,
}

enum Failure {
    Config(String),
    Numerical(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            e if e.is_numerical() => Failure::Numerical(e.to_string()),
            Error::Io(e) => Failure::Other(e.to_string()),
            e => Failure::Config(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

/// Flag values with a fallback to the config file.
struct Settings {
    config: BTreeMap<String, String>,
}

impl Settings {
    fn load(path: Option<&Path>, allowed: &[&str]) -> Result<Self, Failure> {
        let config = match path {
            Some(p) => harness::read_config(p).map_err(|e| match e {
                Error::Io(io) => Failure::Config(format!("cannot read {}: {io}", p.display())),
                e => Failure::Config(format!("{}: {e}", p.display())),
            })?,
            None => BTreeMap::new(),
        };
        if let Some(key) = config.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Failure::Config(format!("unknown config key '{key}'")));
        }
        Ok(Settings { config })
    }

    fn raw(&self, key: &str, flag: &Option<String>) -> Option<String> {
        flag.clone().or_else(|| self.config.get(key).cloned())
    }

    fn get<T: FromStr>(&self, key: &str, flag: &Option<String>, default: T) -> Result<T, Failure>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key, flag) {
            Some(v) => v
                .parse()
                .map_err(|e| Failure::Config(format!("invalid --{key} '{v}': {e}"))),
            None => Ok(default),
        }
    }

    fn path(&self, key: &str, flag: &Option<PathBuf>) -> Option<PathBuf> {
        flag.clone()
            .or_else(|| self.config.get(key).map(PathBuf::from))
    }
}

fn degree(v: usize) -> Result<Degree, Failure> {
    Degree::try_from(v).map_err(|e| Failure::Config(e.to_string()))
}

fn converge(args: ConvergeArgs) -> Result<(), Failure> {
    let s = Settings::load(
        args.config.as_deref(),
        &[
            "example", "degree", "h", "tau-rule", "T", "tol", "max-iter", "out",
        ],
    )?;
    let example: Example = s.get("example", &args.example, Example::One)?;
    let degree = degree(s.get("degree", &args.degree, 1usize)?)?;
    let levels = harness::parse_mesh_sizes(
        &s.raw("h", &args.h)
            .unwrap_or_else(|| "1/10,1/20,1/40".into()),
    )?;
    let default_rule = match degree {
        Degree::Linear => TauRule::H,
        Degree::Quadratic => TauRule::H15,
    };
    let mut cfg = ConvergenceConfig::new(
        example,
        degree,
        levels,
        s.get("tau-rule", &args.tau_rule, default_rule)?,
    );
    cfg.final_time = s.get("T", &args.final_time, cfg.final_time)?;
    cfg.picard_tol = s.get("tol", &args.tol, cfg.picard_tol)?;
    cfg.picard_max_iter = s.get("max-iter", &args.max_iter, cfg.picard_max_iter)?;
    let out = s.path("out", &args.out);

    let start = Instant::now();
    let study = harness::run_convergence(&cfg)?;
    let table = harness::render_convergence(&study);
    match &out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            harness::write_convergence_csv(&study, &mut w)?;
            w.flush()?;
            print!("{table}");
            println!("wrote {} ({:.1?})", path.display(), start.elapsed());
        }
        None => {
            harness::write_convergence_csv(&study, io::stdout().lock())?;
            eprint!("{table}");
        }
    }
    match study.failures.first() {
        Some((n, e)) => Err(Failure::Numerical(format!("h = 1/{n}: {e}"))),
        None => Ok(()),
    }
}

fn conserve(args: ConserveArgs) -> Result<(), Failure> {
    let s = Settings::load(
        args.config.as_deref(),
        &[
            "model",
            "degree",
            "h",
            "tau",
            "T",
            "tol",
            "initial-potential",
            "out",
        ],
    )?;
    let model: Model = s.get("model", &args.model, Model::Helmholtz)?;
    let n = harness::parse_mesh_size(&s.raw("h", &args.h).unwrap_or_else(|| "1/20".into()))?;
    let mut cfg = ConservationConfig::new(
        model,
        n,
        s.get("tau", &args.tau, 0.1)?,
        s.get("T", &args.final_time, 100.0)?,
    );
    cfg.degree = degree(s.get("degree", &args.degree, 1usize)?)?;
    cfg.picard_tol = s.get("tol", &args.tol, cfg.picard_tol)?;
    cfg.initial_potential = match s
        .raw("initial-potential", &args.initial_potential)
        .as_deref()
    {
        None | Some("consistent") => InitialPotential::Consistent,
        Some("ritz") => InitialPotential::Ritz,
        Some(other) => {
            return Err(Failure::Config(format!(
                "invalid --initial-potential '{other}' (expected consistent or ritz)"
            )))
        }
    };
    let out = s.path("out", &args.out);

    let start = Instant::now();
    let run = harness::run_conservation(&cfg)?;
    let summary = format!(
        "{model:?}: {} steps, relative drift mass {:.3e}, energy {:.3e}, at most {} Picard iterations per step",
        run.records.len() - 1,
        run.mass_drift(),
        run.energy_drift(),
        run.max_picard_iterations
    );
    match &out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            harness::write_conservation_csv(&run, &mut w)?;
            w.flush()?;
            let script = harness::plot_script_path(path);
            std::fs::write(
                &script,
                harness::plot_script(path, &format!("{model:?} model")),
            )?;
            println!("{summary}");
            println!(
                "wrote {} and {} ({:.1?})",
                path.display(),
                script.display(),
                start.elapsed()
            );
        }
        None => {
            harness::write_conservation_csv(&run, io::stdout().lock())?;
            eprintln!("{summary}");
        }
    }
    Ok(())
}

fn selftest(args: SelftestArgs) -> Result<(), Failure> {
    let fault = args
        .inject_fault
        .as_deref()
        .map(Fault::from_str)
        .transpose()?;
    let report = harness::selftest(fault)?;
    print!("{}", report.render());
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Other(format!(
            "selftest failed: {}",
            report.failures().join(", ")
        )))
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("SOLVER_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Failure::Config(format!(
            "SOLVER_THREADS must be a positive integer, got '{v}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Other(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Converge(a) => converge(a),
        Command::Conserve(a) => conserve(a),
        Command::Selftest(a) => selftest(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
