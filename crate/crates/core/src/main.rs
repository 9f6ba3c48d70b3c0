use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use slod::basis::Method;
use slod::harness::run::{write_report, write_steklov, RunReport};
use slod::harness::{
    emit_plot, run_basis, run_check, run_convergence, run_decay, run_steklov, CoefficientSpec, ExperimentConfig,
    PlotKind,
};
use slod::homogenize::Solver;
use slod::mesh::GroupingRule;
use slod::SlodError;

/// Exit code for runs in which some cell failed (typically a stability failure).
const EXIT_CELL_FAILED: u8 = 2;

#[derive(Parser)]
#[command(name = "slod", version, about = "Super-localized numerical homogenization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build bases and write per-element tables.
    Basis {
        #[command(flatten)]
        common: Common,
        /// Also write the source and basis function of this element.
        #[arg(long)]
        export: Option<usize>,
    },
    /// Energy error against the oversampling parameter.
    Decay(Common),
    /// Energy error against the coarse mesh size.
    Convergence(Common),
    /// Steklov eigenvalues and interior mass of one patch.
    Steklov(Common),
    /// Quick invariant suite on a small problem.
    Check(Common),
    /// Render a results CSV to SVG and a gnuplot script.
    Plot {
        csv: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Decay,
    Convergence,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupingArg {
    BoundaryLayer,
    InnerLayer,
}

#[derive(Args)]
struct Common {
    /// JSON configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    coarse_levels: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    ell: Option<Vec<usize>>,
    #[arg(long)]
    fine_level: Option<u32>,
    #[arg(long)]
    eps_level: Option<u32>,
    /// `constant:<c>`, `checkerboard:<alpha>:<beta>:<seed>` or `file:<path>`.
    #[arg(long)]
    coeff: Option<String>,
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_solver)]
    solvers: Option<Vec<Solver>>,
    #[arg(long, value_enum)]
    grouping: Option<GroupingArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, env = "SLOD_THREADS")]
    threads: Option<usize>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    match s {
        "slod" => Ok(Method::Slod),
        "lod" => Ok(Method::Lod),
        _ => Err(format!("unknown method {s:?}")),
    }
}

fn parse_solver(s: &str) -> Result<Solver, String> {
    match s {
        "galerkin" => Ok(Solver::Galerkin),
        "collocation" => Ok(Solver::Collocation),
        _ => Err(format!("unknown solver {s:?}")),
    }
}

impl Common {
    fn config(&self) -> slod::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(d) = self.d {
            cfg.d = d;
        }
        if let Some(v) = &self.coarse_levels {
            cfg.coarse_levels = v.clone();
        }
        if let Some(v) = &self.ell {
            cfg.ell = v.clone();
        }
        if let Some(v) = self.fine_level {
            cfg.fine_level = v;
        }
        if let Some(v) = self.eps_level {
            cfg.eps_level = v;
        }
        if let Some(c) = &self.coeff {
            cfg.coefficient = CoefficientSpec::parse(c)?;
        }
        if let Some(v) = &self.methods {
            cfg.methods = v.clone();
        }
        if let Some(v) = &self.solvers {
            cfg.solvers = v.clone();
        }
        if let Some(g) = self.grouping {
            cfg.grouping = match g {
                GroupingArg::BoundaryLayer => GroupingRule::BoundaryLayer,
                GroupingArg::InnerLayer => GroupingRule::InnerLayer,
            };
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = self.threads {
            cfg.threads = v;
        }
        Ok(cfg)
    }
}

fn grid_result(cfg: &ExperimentConfig, name: &str, report: slod::Result<RunReport>) -> slod::Result<ExitCode> {
    let report = report?;
    let csv = write_report(&cfg.out, name, &report)?;
    if report.failures.is_empty() {
        println!("{}", json!({"status": "ok", "results": csv, "rows": report.rows.len()}));
        Ok(ExitCode::SUCCESS)
    } else {
        println!(
            "{}",
            json!({"status": "failed", "results": csv, "rows": report.rows.len(), "failures": report.failures})
        );
        Ok(ExitCode::from(EXIT_CELL_FAILED))
    }
}

fn run(cli: Cli) -> slod::Result<ExitCode> {
    match cli.command {
        Command::Basis { common, export } => {
            let cfg = common.config()?;
            let summary = run_basis(&cfg, export)?;
            println!("{}", json!({"status": "ok", "bases": summary}));
            Ok(ExitCode::SUCCESS)
        }
        Command::Decay(common) => {
            let cfg = common.config()?;
            grid_result(&cfg, "decay", run_decay(&cfg))
        }
        Command::Convergence(common) => {
            let cfg = common.config()?;
            grid_result(&cfg, "convergence", run_convergence(&cfg))
        }
        Command::Steklov(common) => {
            let cfg = common.config()?;
            let report = run_steklov(&cfg)?;
            let path = cfg.out.join("steklov.csv");
            write_steklov(&path, &report)?;
            println!(
                "{}",
                json!({"status": "ok", "results": path, "center": report.center, "spearman": report.spearman})
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Check(common) => {
            let cfg = common.config()?;
            let results = run_check(&cfg)?;
            for r in &results {
                eprintln!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            let status = if failed == 0 { "ok" } else { "failed" };
            println!("{}", json!({"status": status, "checks": results.len(), "failed": failed}));
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(EXIT_CELL_FAILED) })
        }
        Command::Plot { csv, kind } => {
            let kind = match kind {
                KindArg::Decay => PlotKind::Decay,
                KindArg::Convergence => PlotKind::Convergence,
            };
            let files = emit_plot(&csv, kind)?;
            println!("{}", json!({"status": "ok", "files": files}));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            let mut record = json!({"status": "failed", "kind": e.kind(), "message": e.to_string()});
            if let SlodError::Stability { condition, limit, sigma, .. } = &e {
                record["condition"] = json!(condition);
                record["limit"] = json!(limit);
                record["sigma"] = json!(sigma);
            }
            println!("{record}");
            ExitCode::FAILURE
        }
    }
}
