//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slod::basis::{bubble, build_slod_basis, lod_basis_function, patch_residual, Method, SlodOptions};
use slod::coefficient::{CoefficientField, FineCoefficient};
use slod::fem::{p0_projection_matrix, project_p0, FineFunction, FineRegion};
use slod::harness::{run_convergence, run_decay, CoefficientSpec, ExperimentConfig, ResultRow, RunReport};
use slod::homogenize::{energy_error, reference_solve, solve_galerkin, Rhs, Solver};
use slod::localizer::{
    principal_angles, sample_harmonic_space, select_sources, spearman, steklov_spectrum, interior_mass_ratio,
    ExactHarmonicSpace, SamplingOptions,
};
use slod::mesh::{group_patches, patch, CartesianMesh, GroupingRule};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok { Ok(detail) } else { Err(detail) }
}

fn fine_coeff(field: &CoefficientField, level: u32) -> FineCoefficient {
    let fine = CartesianMesh::new(field.dim(), level).unwrap();
    field.eval_on_fine(&fine).unwrap()
}

fn unit_coeff(dim: usize, level: u32) -> FineCoefficient {
    fine_coeff(&CoefficientField::constant(dim, 1.0).unwrap(), level)
}

/// Uniform quadratic B-spline on [0, 3].
fn quadratic_bspline(t: f64) -> f64 {
    if !(0.0..=3.0).contains(&t) {
        0.0
    } else if t <= 1.0 {
        0.5 * t * t
    } else if t <= 2.0 {
        0.5 * (-2.0 * t * t + 6.0 * t - 3.0)
    } else {
        0.5 * (3.0 - t) * (3.0 - t)
    }
}

fn one_dimensional_locality() -> Outcome {
    let coarse = CartesianMesh::new(1, 4).unwrap();
    let coeff = unit_coeff(1, 8);
    let basis = build_slod_basis(&coarse, &coeff, 1, &SlodOptions::default()).map_err(|e| e.to_string())?;
    let h = coarse.size();
    let (mut worst_sigma, mut worst_err, mut count) = (0.0f64, 0.0f64, 0);
    for b in basis.iter().filter(|b| b.patch.on_domain[..1].iter().flatten().all(|&x| !x)) {
        count += 1;
        worst_sigma = worst_sigma.max(b.sigma);
        let region = b.phi.region;
        let x0 = b.patch.bounds.lo[0] as f64 * h;
        let spline = FineFunction::new(
            region,
            (0..region.num_nodes())
                .map(|v| quadratic_bspline((region.node_position(v)[0] - x0) / h))
                .collect(),
        );
        let (ns, np) = (spline.l2_norm(), b.phi.l2_norm());
        let sign = if b.phi.values.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        let err = spline
            .values
            .iter()
            .zip(&b.phi.values)
            .map(|(s, p)| (s / ns - sign * p / np).abs())
            .fold(0.0, f64::max);
        worst_err = worst_err.max(err);
    }
    check(
        count > 0 && worst_sigma <= 1e-10 && worst_err <= 1e-8,
        format!("{count} interior functions, max sigma {worst_sigma:.2e}, max nodal error {worst_err:.2e}"),
    )
}

fn oracle_equivalence() -> Outcome {
    let coarse = CartesianMesh::new(2, 3).unwrap();
    let fields = [
        ("A=1", CoefficientField::constant(2, 1.0).unwrap()),
        ("checkerboard", CoefficientField::random_checkerboard(2, 5, 0.01, 1.0, 1).unwrap()),
    ];
    let groups = group_patches(&coarse, 2, GroupingRule::BoundaryLayer).unwrap();
    let corner = groups.iter().find(|g| g.members.contains(&0)).unwrap();
    let interior = groups
        .iter()
        .find(|g| g.representative.center == coarse.element_index([4, 4]))
        .unwrap();
    let mut details = Vec::new();
    let mut ok = true;
    for (name, field) in &fields {
        let coeff = fine_coeff(field, 6);
        for (label, group) in [("corner", corner), ("interior", interior)] {
            let p = &group.representative;
            let k = group.k();
            let anchor = p.local_index(&coarse, group.members[0]).unwrap();
            let x = sample_harmonic_space(&coarse, p, &coeff, &SamplingOptions::default()).map_err(|e| e.to_string())?;
            let sel = select_sources(&coarse, &x, k, anchor).map_err(|e| e.to_string())?;
            let (sig_o, u_o) = ExactHarmonicSpace::new(&coarse, p, &coeff)
                .and_then(|o| o.svd())
                .map_err(|e| e.to_string())?;
            let n = p.len();
            let u_s = DMatrix::from_fn(n, k, |i, j| sel.g[j].orthonormal_coords()[i]);
            let u_ok = u_o.columns(0, k).clone_owned();
            let angle = principal_angles(&u_s, &u_ok).into_iter().fold(0.0, f64::max);
            let dev = sel
                .sigma
                .iter()
                .zip(&sig_o)
                .map(|(s, o)| (s - o).abs() / o)
                .fold(0.0, f64::max);
            ok &= angle <= 1e-3 && dev <= 0.25;
            details.push(format!("{name} {label} k={k}: angle {angle:.2e}, sigma dev {dev:.2}"));
        }
    }
    check(ok, details.join("; "))
}

fn p0_exactness() -> Outcome {
    let field = CoefficientField::random_checkerboard(2, 4, 0.01, 1.0, 11).unwrap();
    let coeff = fine_coeff(&field, 6);
    let coarse = CartesianMesh::new(2, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let values: Vec<f64> = (0..coarse.num_elements()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let rhs = Rhs::P0 { level: 2, values };
    let basis = build_slod_basis(&coarse, &coeff, 4, &SlodOptions::default()).map_err(|e| e.to_string())?;
    let u = solve_galerkin(&basis, &rhs, &coeff).map_err(|e| e.to_string())?;
    let reference = reference_solve(&rhs, &coeff).map_err(|e| e.to_string())?;
    let rel = energy_error(&u.fine, &reference, &coeff).map_err(|e| e.to_string())? / reference.energy_norm(&coeff);
    check(rel <= 1e-8, format!("relative energy error {rel:.2e}"))
}

fn errors_of(rows: &[ResultRow], method: Method, solver: Solver) -> Vec<&ResultRow> {
    rows.iter().filter(|r| r.method == method && r.solver == solver).collect()
}

fn decay_trend() -> Outcome {
    let cfg = ExperimentConfig {
        d: 2,
        coarse_levels: vec![4],
        ell: vec![1, 2, 3],
        fine_level: 7,
        eps_level: 5,
        coefficient: CoefficientSpec::Checkerboard { alpha: 0.01, beta: 1.0, seed: 1 },
        rhs: Rhs::Constant { value: 1.0 },
        ..Default::default()
    };
    let report = run_decay(&cfg).map_err(|e| e.to_string())?;
    if !report.failures.is_empty() {
        return Err(format!("failed cells: {:?}", report.failures));
    }
    let slod: Vec<f64> = errors_of(&report.rows, Method::Slod, Solver::Galerkin).iter().map(|r| r.energy_error).collect();
    let lod: Vec<f64> = errors_of(&report.rows, Method::Lod, Solver::Galerkin).iter().map(|r| r.energy_error).collect();
    let decreasing = slod.windows(2).all(|w| w[1] < w[0]);
    let ten_x = slod[2] * 10.0 <= slod[0];
    let beats_lod = slod[2] <= lod[2];
    // Least-squares line through (ell^2, log err).
    let xs: Vec<f64> = [1.0f64, 2.0, 3.0].iter().map(|l| l * l).collect();
    let ys: Vec<f64> = slod.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = 1.0 - ss_res / ss_tot;
    check(
        decreasing && ten_x && beats_lod && slope < 0.0 && r2 >= 0.9,
        format!(
            "slod {:.2e} {:.2e} {:.2e}, lod {:.2e} {:.2e} {:.2e}, slope {slope:.3}, R2 {r2:.4}",
            slod[0], slod[1], slod[2], lod[0], lod[1], lod[2]
        ),
    )
}

fn convergence_report() -> &'static Result<RunReport, String> {
    static REPORT: OnceLock<Result<RunReport, String>> = OnceLock::new();
    REPORT.get_or_init(|| {
        let cfg = ExperimentConfig {
            d: 2,
            coarse_levels: vec![2, 3, 4],
            ell: vec![3],
            fine_level: 7,
            eps_level: 5,
            coefficient: CoefficientSpec::Checkerboard { alpha: 0.01, beta: 1.0, seed: 1 },
            rhs: Rhs::SinSin,
            methods: vec![Method::Slod],
            solvers: vec![Solver::Galerkin, Solver::Collocation],
            ..Default::default()
        };
        run_convergence(&cfg).map_err(|e| e.to_string())
    })
}

fn order_two_convergence() -> Outcome {
    let report = convergence_report().as_ref().map_err(Clone::clone)?;
    let rows = errors_of(&report.rows, Method::Slod, Solver::Galerkin);
    if rows.len() != 3 || rows.iter().any(|r| r.failed()) {
        return Err(format!("incomplete results: {:?}", report.failures));
    }
    let rates: Vec<f64> = rows.iter().filter_map(|r| r.rate).collect();
    let last = rows[2].relative_error;
    let errs: Vec<String> = rows.iter().map(|r| format!("{:.2e}", r.energy_error)).collect();
    check(
        rates.len() == 2 && rates.iter().all(|&r| r >= 1.8) && last <= 1e-2,
        format!("errors {}, rates {rates:.2?}, final relative error {last:.2e}", errs.join(" ")),
    )
}

fn collocation_parity() -> Outcome {
    let report = convergence_report().as_ref().map_err(Clone::clone)?;
    let gal = errors_of(&report.rows, Method::Slod, Solver::Galerkin);
    let col = errors_of(&report.rows, Method::Slod, Solver::Collocation);
    if col.len() != gal.len() || col.iter().any(|r| r.failed()) {
        return Err(format!("incomplete results: {:?}", report.failures));
    }
    let ratios: Vec<f64> = gal.iter().zip(&col).map(|(g, c)| c.energy_error / g.energy_error).collect();
    check(
        ratios.iter().all(|r| (0.1..=10.0).contains(r)),
        format!("collocation/galerkin error ratios {ratios:.2?}"),
    )
}

/// Random smooth function: a few products of shifted sines.
fn smooth_function(rng: &mut ChaCha8Rng, dim: usize) -> impl Fn([f64; 2]) -> f64 {
    let terms: Vec<(f64, [f64; 2], [f64; 2])> = (0..4)
        .map(|_| {
            (
                rng.random_range(-1.0..1.0),
                [rng.random_range(0.5..6.0), rng.random_range(0.5..6.0)],
                [rng.random_range(0.0..PI), rng.random_range(0.0..PI)],
            )
        })
        .collect();
    move |x| {
        terms
            .iter()
            .map(|(a, k, s)| {
                let y = if dim == 2 { (k[1] * x[1] + s[1]).sin() } else { 1.0 };
                a * (k[0] * x[0] + s[0]).sin() * y
            })
            .sum()
    }
}

fn projection_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst_global = 0.0f64;
    let mut worst_local = 0.0f64;
    for dim in [1, 2] {
        let coarse = CartesianMesh::new(dim, 3).unwrap();
        let fine = CartesianMesh::new(dim, if dim == 1 { 10 } else { 7 }).unwrap();
        let region = FineRegion::whole(fine);
        for _ in 0..20 {
            let f = smooth_function(&mut rng, dim);
            let v = FineFunction::new(region, (0..region.num_nodes()).map(|n| f(region.node_position(n))).collect());
            let pv = project_p0(&v, &coarse).map_err(|e| e.to_string())?;
            let mut diff = 0.0;
            for c in fine.full_box().coords() {
                let e = fine.element_index(c);
                let shift = fine.level() - coarse.level();
                let t = coarse.element_index([c[0] >> shift, c[1] >> shift]);
                // Exact L2 norm of (Q1 - constant) over one fine element via the local mass matrix.
                let local = FineRegion::of_coarse_box(
                    &fine,
                    &slod::mesh::ElementBox { lo: fine.element_coords(e), hi: fine.element_coords(e) },
                    fine,
                );
                let w = FineFunction::new(
                    local,
                    (0..local.num_nodes()).map(|n| f(local.node_position(n)) - pv.values[t]).collect(),
                );
                diff += w.l2_norm().powi(2);
            }
            let bound = coarse.size() / PI * v.h1_seminorm();
            worst_global = worst_global.max(diff.sqrt() / bound);
            for t in 0..coarse.num_elements() {
                let c = coarse.element_coords(t);
                let local = FineRegion::of_coarse_box(&coarse, &slod::mesh::ElementBox { lo: c, hi: c }, fine);
                let w = FineFunction::new(local, (0..local.num_nodes()).map(|n| f(local.node_position(n))).collect());
                let mean = (p0_projection_matrix(&local, &coarse, &local_box(&coarse, t))
                    * DVector::from_column_slice(&w.values))[0];
                let proj = mean.abs() * coarse.element_volume().sqrt();
                worst_local = worst_local.max(proj / w.l2_norm());
            }
        }
    }
    check(
        worst_global <= 1.0 + 1e-6 && worst_local <= 1.0 + 1e-12,
        format!("max |v - Pv| / (H/pi |grad v|) = {worst_global:.4}, max |Pv|_T / |v|_T = {worst_local:.6}"),
    )
}

fn local_box(coarse: &CartesianMesh, t: usize) -> slod::mesh::ElementBox {
    let c = coarse.element_coords(t);
    slod::mesh::ElementBox { lo: c, hi: c }
}

fn lod_baseline() -> Outcome {
    let coarse = CartesianMesh::new(2, 4).unwrap();
    let field = CoefficientField::random_checkerboard(2, 5, 0.01, 1.0, 1).unwrap();
    let coeff = fine_coeff(&field, 7);
    let center = coarse.element_index([8, 8]);
    let ell = 4;
    let b = lod_basis_function(&coarse, &coeff, center, ell).map_err(|e| e.to_string())?;
    let residual = patch_residual(&b, &coeff).map_err(|e| e.to_string())?;
    // |g|_{L2(omega \ N^m(T))} for m = 1..ell-1
    let c = coarse.element_coords(center);
    let tails: Vec<f64> = (1..ell)
        .map(|m| {
            let inner = patch(&coarse, center, m).unwrap();
            b.patch
                .bounds
                .coords()
                .filter(|&x| !inner.bounds.contains(x))
                .map(|x| b.g.at(coarse.element_index(x)).powi(2) * coarse.element_volume())
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let decreasing = tails.windows(2).all(|w| w[1] < w[0]);
    let bub = bubble(&coarse, coarse.element_index(c), coeff.mesh).map_err(|e| e.to_string())?;
    let lhs = PI * bub.l2_norm();
    let rhs = coarse.size() * bub.h1_seminorm();
    let tails_s: Vec<String> = tails.iter().map(|t| format!("{t:.3e}")).collect();
    check(
        residual <= 1e-9 && decreasing && lhs <= rhs,
        format!(
            "residual {residual:.2e}, tails [{}], pi|b| {lhs:.4e} <= H|grad b| {rhs:.4e}",
            tails_s.join(", ")
        ),
    )
}

fn steklov_probe() -> Outcome {
    let coarse = CartesianMesh::new(2, 4).unwrap();
    let coeff = unit_coeff(2, 7);
    let p = patch(&coarse, coarse.element_index([8, 8]), 4).unwrap();
    let spec = steklov_spectrum(&coarse, &p, &coeff, 40).map_err(|e| e.to_string())?;
    let ratios: Vec<f64> = spec
        .functions
        .iter()
        .map(|psi| interior_mass_ratio(&coarse, &p, psi))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let ks: Vec<f64> = (0..ratios.len()).map(|k| k as f64).collect();
    let rho = spearman(&ks, &ratios);
    let lambda0 = spec.eigenvalues[0];
    let monotone = spec.eigenvalues.windows(2).all(|w| w[0] <= w[1]);
    check(
        lambda0.abs() <= 1e-9 && monotone && rho <= -0.5,
        format!("lambda0 {lambda0:.2e}, {} eigenvalues nondecreasing: {monotone}, spearman {rho:.3}", ratios.len()),
    )
}

fn run_cli(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_slod")).args(args).output().expect("slod binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn determinism_and_stability() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let base = [
        "convergence", "--d", "2", "--coarse-levels", "2,3", "--ell", "1,2", "--fine-level", "6", "--eps-level", "5",
        "--coeff", "checkerboard:0.01:1:5", "--seed", "9", "--solvers", "galerkin,collocation",
    ];
    let mut csvs = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("t{threads}"));
        let mut args = base.to_vec();
        let out_s = out.to_string_lossy().into_owned();
        args.extend(["--threads", threads, "--out", &out_s]);
        let (code, stdout) = run_cli(&args);
        if code != 0 {
            return Err(format!("run with {threads} threads exited {code}: {stdout}"));
        }
        csvs.push(std::fs::read(out.join("convergence.csv")).map_err(|e| e.to_string())?);
    }
    let identical = csvs[0] == csvs[1];
    let rows = slod::harness::csv::read_results(&csvs[0][..]).map_err(|e| e.to_string())?;
    let riesz_finite = !rows.is_empty() && rows.iter().all(|r| r.riesz_condition.is_finite());

    let cfg_path = dir.path().join("rank_deficient.json");
    write_config(
        &cfg_path,
        &ExperimentConfig {
            d: 2,
            coarse_levels: vec![3],
            ell: vec![2],
            fine_level: 5,
            eps_level: 4,
            methods: vec![Method::Slod],
            grouping: GroupingRule::InnerLayer,
            out: dir.path().join("rank_deficient"),
            ..Default::default()
        },
    )?;
    let (code, stdout) = run_cli(&["decay", "--config", &cfg_path.to_string_lossy()]);
    let record: serde_json::Value = serde_json::from_str(stdout.trim()).map_err(|e| format!("{e}: {stdout}"))?;
    let flagged = code != 0
        && record["status"] == "failed"
        && record["failures"].as_array().is_some_and(|f| f.iter().any(|x| x["kind"] == "stability"));
    check(
        identical && riesz_finite && flagged,
        format!(
            "byte-identical: {identical}, {} rows with finite Riesz condition: {riesz_finite}, rank-deficient run exit {code}",
            rows.len()
        ),
    )
}

fn write_config(path: &Path, cfg: &ExperimentConfig) -> Result<(), String> {
    std::fs::write(path, serde_json::to_string_pretty(cfg).unwrap()).map_err(|e| e.to_string())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("1d locality", one_dimensional_locality),
        ("oracle equivalence", oracle_equivalence),
        ("p0 exactness", p0_exactness),
        ("decay trend", decay_trend),
        ("order-2 convergence", order_two_convergence),
        ("collocation parity", collocation_parity),
        ("projection bounds", projection_bounds),
        ("lod baseline", lod_baseline),
        ("steklov probe", steklov_probe),
        ("determinism and stability", determinism_and_stability),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|s| name.contains(s.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {:>2} {name} ({secs:.1}s): {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.1}s): {d}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
