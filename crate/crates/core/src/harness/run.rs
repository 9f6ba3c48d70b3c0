use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::cache::{CacheKey, SourceCache};
use super::config::ExperimentConfig;
use super::csv::{save_results, sort_rows, ResultRow};
use crate::basis::{basis_from_sources, build_lod_basis, patch_residual, slod_sources, LocalBasis, Method};
use crate::coefficient::{CoefficientField, FineCoefficient};
use crate::error::{Result, SlodError};
use crate::fem::FineFunction;
use crate::homogenize::{energy_error, reference_solve, riesz_condition, solve};
use crate::localizer::{interior_mass_ratio, spearman, steklov_spectrum};
use crate::mesh::{patch, CartesianMesh};

/// A failed experiment cell, reported in the CLI failure record.
#[derive(Clone, Debug, Serialize)]
pub struct CellFailure {
    pub level: u32,
    pub ell: usize,
    pub method: Method,
    pub solver: Option<crate::homogenize::Solver>,
    pub kind: &'static str,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<CellFailure>,
}

/// Runs `f` on a pool with `threads` workers (0 = one per core).
pub fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SlodError::Config(format!("cannot start thread pool: {e}")))?;
    Ok(pool.install(f))
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    field: CoefficientField,
    coeff: FineCoefficient,
    reference: FineFunction,
    reference_energy: f64,
    cache: Option<SourceCache>,
}

impl<'a> Context<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let field = cfg.coefficient_field()?;
        let fine = CartesianMesh::new(cfg.d, cfg.fine_level)?;
        let coeff = field.eval_on_fine(&fine)?;
        let reference = reference_solve(&cfg.rhs, &coeff)?;
        let reference_energy = reference.energy_norm(&coeff);
        Ok(Self {
            cfg,
            field,
            coeff,
            reference,
            reference_energy,
            cache: SourceCache::from_env(),
        })
    }

    fn basis(&self, coarse: &CartesianMesh, ell: usize, method: Method) -> Result<Vec<LocalBasis>> {
        match method {
            Method::Lod => build_lod_basis(coarse, &self.coeff, ell),
            Method::Slod => {
                let opts = self.cfg.slod_options();
                let key = CacheKey::new(coarse.level(), ell, self.cfg.fine_level, &self.field, opts);
                let cached = self.cache.as_ref().and_then(|c| c.get(&key));
                let sources = match cached {
                    Some(s) => s,
                    None => {
                        let s = slod_sources(coarse, &self.coeff, ell, &opts)?;
                        if let Some(c) = &self.cache {
                            c.put(&key, &s)?;
                        }
                        s
                    }
                };
                basis_from_sources(coarse, &self.coeff, ell, &sources, Method::Slod)
            }
        }
    }

    fn cell(&self, level: u32, ell: usize, method: Method) -> (Vec<ResultRow>, Vec<CellFailure>) {
        let cfg = self.cfg;
        let start = Instant::now();
        let row = |solver| ResultRow {
            d: cfg.d,
            level,
            h: 0.5f64.powi(level as i32),
            ell,
            method,
            solver,
            energy_error: f64::NAN,
            relative_error: f64::NAN,
            sigma_max: f64::NAN,
            riesz_condition: f64::NAN,
            rate: None,
            status: "ok".into(),
            wall_time: 0.0,
        };
        let mut rows = Vec::new();
        let mut failures = Vec::new();
        let basis = CartesianMesh::new(cfg.d, level).and_then(|coarse| self.basis(&coarse, ell, method));
        let basis = match basis {
            Ok(b) => b,
            Err(e) => {
                for &solver in &cfg.solvers {
                    let mut r = row(solver);
                    r.status = e.kind().into();
                    r.wall_time = start.elapsed().as_secs_f64();
                    rows.push(r);
                }
                failures.push(CellFailure {
                    level,
                    ell,
                    method,
                    solver: None,
                    kind: e.kind(),
                    message: e.to_string(),
                });
                return (rows, failures);
            }
        };
        let basis_time = start.elapsed().as_secs_f64();
        let riesz = riesz_condition(&basis);
        let sigma_max = basis.iter().map(|b| b.sigma).fold(f64::NAN, f64::max);
        for &solver in &cfg.solvers {
            let t = Instant::now();
            let mut r = row(solver);
            r.riesz_condition = riesz;
            r.sigma_max = sigma_max;
            let outcome = solve(solver, &basis, &cfg.rhs, &self.coeff)
                .and_then(|u| energy_error(&u.fine, &self.reference, &self.coeff));
            match outcome {
                Ok(err) => {
                    r.energy_error = err;
                    r.relative_error = err / self.reference_energy;
                }
                Err(e) => {
                    r.status = e.kind().into();
                    failures.push(CellFailure {
                        level,
                        ell,
                        method,
                        solver: Some(solver),
                        kind: e.kind(),
                        message: e.to_string(),
                    });
                }
            }
            r.wall_time = basis_time + t.elapsed().as_secs_f64();
            rows.push(r);
        }
        (rows, failures)
    }
}

fn run_grid(cfg: &ExperimentConfig) -> Result<RunReport> {
    with_pool(cfg.threads, || {
        let ctx = Context::new(cfg)?;
        let mut cells = Vec::new();
        for &level in &cfg.coarse_levels {
            for &ell in &cfg.ell {
                for &method in &cfg.methods {
                    cells.push((level, ell, method));
                }
            }
        }
        let results: Vec<_> = cells
            .par_iter()
            .map(|&(level, ell, method)| ctx.cell(level, ell, method))
            .collect();
        let mut rows = Vec::new();
        let mut failures = Vec::new();
        for (r, f) in results {
            rows.extend(r);
            failures.extend(f);
        }
        sort_rows(&mut rows);
        Ok(RunReport { rows, failures })
    })?
}

/// Error against `ell` for every coarse level, method and solver.
pub fn run_decay(cfg: &ExperimentConfig) -> Result<RunReport> {
    run_grid(cfg)
}

/// Error against `H`, with observed rates between consecutive levels.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<RunReport> {
    let mut report = run_grid(cfg)?;
    fill_rates(&mut report.rows);
    Ok(report)
}

/// Rates `log2(e_prev / e) / (level - level_prev)` within each series of
/// canonically sorted rows.
pub fn fill_rates(rows: &mut [ResultRow]) {
    for i in 1..rows.len() {
        let (prev, cur) = (&rows[i - 1], &rows[i]);
        let same = prev.method == cur.method && prev.solver == cur.solver && prev.ell == cur.ell;
        let usable = |r: &ResultRow| !r.failed() && r.energy_error.is_finite() && r.energy_error > 0.0;
        if same && usable(prev) && usable(cur) && cur.level > prev.level {
            let rate = (prev.energy_error / cur.energy_error).log2() / f64::from(cur.level - prev.level);
            rows[i].rate = Some(rate);
        }
    }
}

/// Writes `<out>/<name>.csv` and its timings sidecar, returning the CSV path.
pub fn write_report(out: &Path, name: &str, report: &RunReport) -> Result<PathBuf> {
    std::fs::create_dir_all(out)?;
    let path = out.join(format!("{name}.csv"));
    save_results(&path, &report.rows)?;
    Ok(path)
}

#[derive(Clone, Debug, Serialize)]
pub struct SteklovReport {
    pub center: usize,
    pub eigenvalues: Vec<f64>,
    pub interior_mass_ratios: Vec<f64>,
    pub spearman: f64,
}

/// Steklov eigenvalues of one patch and how much of each eigenfunction
/// lives in the inner half of the patch.
pub fn run_steklov(cfg: &ExperimentConfig) -> Result<SteklovReport> {
    cfg.validate_fine()?;
    let spec = &cfg.steklov;
    with_pool(cfg.threads, || {
        let coarse = CartesianMesh::new(cfg.d, spec.coarse_level)?;
        if cfg.fine_level < spec.coarse_level + 2 {
            return Err(SlodError::Config("fine level too coarse for the Steklov patch".into()));
        }
        let n = coarse.per_axis();
        let center = match spec.center {
            Some(c) => {
                if c.iter().take(cfg.d).any(|&x| x >= n) {
                    return Err(SlodError::Config(format!("Steklov center {c:?} outside the mesh")));
                }
                coarse.element_index(c)
            }
            None => coarse.element_index([n / 2, if cfg.d == 2 { n / 2 } else { 0 }]),
        };
        let p = patch(&coarse, center, spec.ell)?;
        let coeff = cfg
            .coefficient_field()?
            .eval_on_fine(&CartesianMesh::new(cfg.d, cfg.fine_level)?)?;
        let spec_out = steklov_spectrum(&coarse, &p, &coeff, spec.count)?;
        let ratios = spec_out
            .functions
            .iter()
            .map(|psi| interior_mass_ratio(&coarse, &p, psi))
            .collect::<Result<Vec<_>>>()?;
        let ks: Vec<f64> = (0..ratios.len()).map(|k| k as f64).collect();
        let rho = spearman(&ks, &ratios);
        Ok(SteklovReport {
            center,
            eigenvalues: spec_out.eigenvalues,
            interior_mass_ratios: ratios,
            spearman: rho,
        })
    })?
}

pub fn write_steklov(path: &Path, report: &SteklovReport) -> Result<()> {
    use std::fmt::Write;
    let mut s = String::from("# slod steklov v1\nk,eigenvalue,interior_mass_ratio\n");
    for (k, (l, r)) in report.eigenvalues.iter().zip(&report.interior_mass_ratios).enumerate() {
        let _ = writeln!(s, "{k},{l:e},{r:e}");
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Summary of one basis, as written by the `basis` command.
#[derive(Clone, Debug, Serialize)]
pub struct BasisSummary {
    pub level: u32,
    pub ell: usize,
    pub method: Method,
    pub functions: usize,
    pub riesz_condition: f64,
    pub sigma_max: f64,
    pub max_residual: f64,
    pub file: PathBuf,
}

/// Builds every basis of the configuration and writes one table per basis
/// (`element,representative,sigma,g_l2,phi_energy,residual`). With `export`,
/// the source and the basis function of that element are written as well.
pub fn run_basis(cfg: &ExperimentConfig, export: Option<usize>) -> Result<Vec<BasisSummary>> {
    use std::fmt::Write;
    with_pool(cfg.threads, || {
        let ctx = Context::new(cfg)?;
        std::fs::create_dir_all(&cfg.out)?;
        let mut out = Vec::new();
        for &level in &cfg.coarse_levels {
            let coarse = CartesianMesh::new(cfg.d, level)?;
            for &ell in &cfg.ell {
                for &method in &cfg.methods {
                    let basis = ctx.basis(&coarse, ell, method)?;
                    let residuals = basis
                        .par_iter()
                        .map(|b| patch_residual(b, &ctx.coeff))
                        .collect::<Result<Vec<_>>>()?;
                    let stem = format!("basis_{}_d{}_p{level}_l{ell}", method.as_str(), cfg.d);
                    let mut s = String::from("element,representative,sigma,g_l2,phi_energy,residual\n");
                    for (b, res) in basis.iter().zip(&residuals) {
                        let _ = writeln!(
                            s,
                            "{},{},{:e},{:e},{:e},{:e}",
                            b.element,
                            b.representative,
                            b.sigma,
                            b.g.l2_norm(),
                            b.phi.energy_norm(&ctx.coeff),
                            res
                        );
                    }
                    let file = cfg.out.join(format!("{stem}.csv"));
                    std::fs::write(&file, s)?;
                    if let Some(e) = export {
                        let b = basis
                            .get(e)
                            .ok_or_else(|| SlodError::Config(format!("element {e} out of range")))?;
                        let gn = b.g.l2_norm();
                        let mut g = String::from("element,value,l2_normalized\n");
                        for (k, v) in b.g.to_global().iter().enumerate() {
                            let _ = writeln!(g, "{k},{v:e},{:e}", v / gn);
                        }
                        std::fs::write(cfg.out.join(format!("{stem}_g{e}.csv")), g)?;
                        let mut f = std::fs::File::create(cfg.out.join(format!("{stem}_phi{e}.csv")))?;
                        b.phi.write_csv(&mut f)?;
                        let pn = b.phi.l2_norm();
                        let normalized = FineFunction::new(b.phi.region, b.phi.values.iter().map(|v| v / pn).collect());
                        let mut f = std::fs::File::create(cfg.out.join(format!("{stem}_phi{e}_l2.csv")))?;
                        normalized.write_csv(&mut f)?;
                    }
                    out.push(BasisSummary {
                        level,
                        ell,
                        method,
                        functions: basis.len(),
                        riesz_condition: riesz_condition(&basis),
                        sigma_max: basis.iter().map(|b| b.sigma).fold(f64::NAN, f64::max),
                        max_residual: residuals.iter().copied().fold(0.0, f64::max),
                        file,
                    });
                }
            }
        }
        Ok(out)
    })?
}

/// Outcome of one invariant of the `check` command.
#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Quick invariant suite on a small version of the configured problem.
pub fn run_check(cfg: &ExperimentConfig) -> Result<Vec<CheckResult>> {
    let small = ExperimentConfig {
        coarse_levels: vec![2, 3],
        ell: vec![1, 2],
        fine_level: cfg.eps_level.max(5),
        methods: vec![Method::Slod, Method::Lod],
        ..cfg.clone()
    };
    let mut out = Vec::new();
    let mut record = |name: String, passed: bool, detail: String| out.push(CheckResult { name, passed, detail });
    with_pool(small.threads, || -> Result<()> {
        let ctx = Context::new(&small)?;
        for &level in &small.coarse_levels {
            let coarse = CartesianMesh::new(small.d, level)?;
            for &ell in &small.ell {
                for &method in &small.methods {
                    let tag = format!("{} p={level} ell={ell}", method.as_str());
                    let basis = ctx.basis(&coarse, ell, method)?;
                    let covered = basis.len() == coarse.num_elements()
                        && basis.iter().enumerate().all(|(i, b)| b.element == i);
                    record(format!("{tag}: one function per element"), covered, format!("{} functions", basis.len()));
                    let res = basis
                        .par_iter()
                        .map(|b| patch_residual(b, &ctx.coeff))
                        .collect::<Result<Vec<_>>>()?
                        .into_iter()
                        .fold(0.0, f64::max);
                    record(format!("{tag}: patch residual"), res < 1e-8, format!("{res:e}"));
                    if method == Method::Slod {
                        let norm_err = basis.iter().map(|b| (b.g.l2_norm() - 1.0).abs()).fold(0.0, f64::max);
                        record(format!("{tag}: unit sources"), norm_err < 1e-10, format!("{norm_err:e}"));
                    }
                    let riesz = riesz_condition(&basis);
                    record(format!("{tag}: Riesz condition"), riesz.is_finite(), format!("{riesz:e}"));
                }
            }
        }
        let report = run_grid(&small)?;
        let rel = report
            .rows
            .iter()
            .filter(|r| r.method == Method::Slod)
            .map(|r| r.relative_error)
            .fold(0.0, f64::max);
        record(
            "slod grid solves without failures".into(),
            report.failures.is_empty() && rel.is_finite(),
            format!("{} failures, max relative error {rel:e}", report.failures.len()),
        );
        Ok(())
    })??;
    Ok(out)
}
