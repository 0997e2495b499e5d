mod format;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use etrs::nalgebra::DMatrix;
use etrs::oracle::{grid_polish, kkt_enumerate, OracleMethod};
use etrs::sdpcheck::{certify_tightness, check_dc, check_newdc, gap};
use etrs::{gen, solve_extended, Error, ProblemInstance, SolverConfig};
use serde_json::json;

use crate::format::{read_instance, read_json, vec_of, InputError, InstanceFile, ResultFile};

#[derive(Parser)]
#[command(
    name = "etrs",
    version,
    about = "Quadratic minimisation over a ball cut by halfspaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct SolverFlags {
    /// Feasibility tolerance; root tolerance is set a thousand times tighter.
    #[arg(long, allow_hyphen_values = true)]
    tol: Option<f64>,
    /// Evaluate sibling facet subproblems concurrently.
    #[arg(long)]
    parallel: bool,
    /// Cap on combinatorial enumerations.
    #[arg(long)]
    max_vertex_enum: Option<usize>,
}

impl SolverFlags {
    fn config(&self) -> Result<SolverConfig, Failure> {
        let mut cfg = SolverConfig::default();
        if let Some(tol) = self.tol {
            cfg = cfg.with_tolerance(tol);
        }
        if let Some(cap) = self.max_vertex_enum {
            cfg.max_vertex_enum = cap;
        }
        cfg.parallel_facets = self.parallel;
        cfg.check().map_err(|e| Failure::Input(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Kkt,
    Grid,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance file.
    Solve {
        path: PathBuf,
        #[command(flatten)]
        flags: SolverFlags,
        /// Print a table instead of JSON.
        #[arg(long)]
        text: bool,
    },
    /// Report the rank conditions and the convex surrogate.
    Check {
        path: PathBuf,
        #[command(flatten)]
        flags: SolverFlags,
    },
    /// Solve with a brute-force reference method.
    Oracle {
        path: PathBuf,
        #[arg(long, value_enum, default_value = "kkt")]
        method: Method,
        /// Grid points per unit of radius along each axis.
        #[arg(long, default_value_t = 50)]
        density: usize,
    },
    /// Exact value, surrogate value and their difference.
    Gap {
        path: PathBuf,
        #[command(flatten)]
        flags: SolverFlags,
    },
    /// Generate an instance.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Solve every JSON file in a directory.
    Bench {
        dir: PathBuf,
        #[command(flatten)]
        flags: SolverFlags,
    },
}

#[derive(Subcommand)]
enum GenKind {
    /// Gaussian data with a strictly feasible point.
    Random {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Simplex-constrained quadratic program rewritten over the ball.
    Qps {
        /// JSON file holding the n×n matrix as an array of rows.
        #[arg(long)]
        q: PathBuf,
    },
}

enum Failure {
    Input(String),
    Infeasible(String),
    Budget(String),
}

impl From<InputError> for Failure {
    fn from(e: InputError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Infeasible => Failure::Infeasible(e.to_string()),
            Error::BudgetExceeded { .. } => Failure::Budget(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

fn load(path: &Path) -> Result<ProblemInstance, Failure> {
    read_instance(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn print_json(value: &impl serde::Serialize) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("serialisable")
    );
}

fn solve_report(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<ResultFile, Failure> {
    let infeasible = ResultFile {
        status: "infeasible".into(),
        value: None,
        x: Vec::new(),
        multiplier: None,
        active_set: Vec::new(),
        trs0_solves: 0,
        dc: check_dc(inst, cfg)?,
        newdc: check_newdc(inst, cfg)?,
        surrogate_value: None,
    };
    let rep = match solve_extended(inst, cfg) {
        Ok(rep) => rep,
        Err(Error::Infeasible) => return Ok(infeasible),
        Err(e) => return Err(e.into()),
    };
    let conditions = certify_tightness(inst, cfg)?;
    Ok(ResultFile {
        status: "optimal".into(),
        value: Some(rep.value),
        x: rep.x.as_ref().map(vec_of).unwrap_or_default(),
        multiplier: rep.multiplier,
        active_set: rep.active_set,
        trs0_solves: rep.trs0_solves,
        dc: conditions.dc_holds,
        newdc: conditions.newdc_holds,
        surrogate_value: conditions.surrogate_value,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| v.to_string())
}

fn print_text(r: &ResultFile) {
    let x: Vec<String> = r.x.iter().map(|v| v.to_string()).collect();
    let active: Vec<String> = r.active_set.iter().map(|v| v.to_string()).collect();
    println!("{:<16}{}", "status", r.status);
    println!("{:<16}{}", "value", fmt_opt(r.value));
    println!("{:<16}[{}]", "x", x.join(", "));
    println!("{:<16}{}", "multiplier", fmt_opt(r.multiplier));
    println!("{:<16}[{}]", "active set", active.join(", "));
    println!("{:<16}{}", "trs0 solves", r.trs0_solves);
    println!("{:<16}{}", "dc", r.dc);
    println!("{:<16}{}", "newdc", r.newdc);
    println!("{:<16}{}", "surrogate", fmt_opt(r.surrogate_value));
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    match cli.command {
        Command::Solve { path, flags, text } => {
            let cfg = flags.config()?;
            let report = solve_report(&load(&path)?, &cfg)?;
            if text {
                print_text(&report);
            } else {
                print_json(&report);
            }
            Ok(ExitCode::from(if report.status == "optimal" {
                0
            } else {
                2
            }))
        }
        Command::Check { path, flags } => {
            let cfg = flags.config()?;
            let r = certify_tightness(&load(&path)?, &cfg)?;
            print_json(&json!({
                "lambda_min": r.lambda_min,
                "dc": r.dc_holds,
                "newdc": r.newdc_holds,
                "rank": r.rank_bracket.0,
                "rank_bound": r.rank_bracket.1,
                "surrogate_value": r.surrogate_value,
                "lifted_point": r.lifted_point.as_ref().map(vec_of),
            }));
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle {
            path,
            method,
            density,
        } => {
            let inst = load(&path)?;
            let cfg = SolverConfig::default();
            let r = match method {
                Method::Kkt => kkt_enumerate(&inst, &cfg)?,
                Method::Grid => grid_polish(&inst, density, &cfg)?,
            };
            let method = match r.method {
                OracleMethod::KktEnum => "kkt",
                OracleMethod::GridPolish => "grid",
            };
            print_json(&json!({
                "method": method,
                "value": r.value,
                "x": vec_of(&r.x),
                "candidates_examined": r.candidates_examined,
            }));
            Ok(ExitCode::SUCCESS)
        }
        Command::Gap { path, flags } => {
            let cfg = flags.config()?;
            let g = gap(&load(&path)?, &cfg)?;
            print_json(&json!({"exact": g.exact, "surrogate": g.surrogate, "gap": g.gap}));
            Ok(ExitCode::SUCCESS)
        }
        Command::Gen { kind } => {
            let inst = match kind {
                GenKind::Random { n, m, seed } => {
                    if n == 0 {
                        return Err(Failure::Input("--n must be positive".into()));
                    }
                    gen::random_instance(n, m, seed)
                }
                GenKind::Qps { q } => {
                    let rows: Vec<Vec<f64>> = read_json(&q)
                        .map_err(|e| Failure::Input(format!("{}: {e}", q.display())))?;
                    let n = rows.len();
                    if rows.iter().any(|r| r.len() != n) {
                        return Err(Failure::Input("Q must be square".into()));
                    }
                    let q = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
                    gen::qps_instance(&q)?
                }
            };
            print_json(&InstanceFile::from_instance(&inst));
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench { dir, flags } => {
            let cfg = flags.config()?;
            bench(&dir, &cfg)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn bench(dir: &Path, cfg: &SolverConfig) -> Result<(), Failure> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Failure::Input(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    println!(
        "{:<28} {:<12} {:>22} {:>6} {:>10}",
        "instance", "status", "value", "trs0", "ms"
    );
    for path in files {
        let name = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let start = Instant::now();
        let (status, value, solves) = match read_instance(&path) {
            Err(_) => ("bad input".to_string(), None, 0),
            Ok(inst) => match solve_extended(&inst, cfg) {
                Ok(rep) => ("optimal".to_string(), Some(rep.value), rep.trs0_solves),
                Err(Error::Infeasible) => ("infeasible".to_string(), None, 0),
                Err(e @ Error::BudgetExceeded { .. }) => (format!("budget: {e}"), None, 0),
                Err(e) => (format!("error: {e}"), None, 0),
            },
        };
        let ms = start.elapsed().as_secs_f64() * 1e3;
        println!(
            "{:<28} {:<12} {:>22} {:>6} {:>10.3}",
            name,
            status,
            fmt_opt(value),
            solves,
            ms
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Infeasible(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Budget(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
