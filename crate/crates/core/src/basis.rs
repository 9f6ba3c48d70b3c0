//! Localized basis functions: the super-localized basis from selected
//! sources and the classical LOD basis as a baseline.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficient::FineCoefficient;
use crate::error::{Result, SlodError};
use crate::fem::assembly::assemble_load_piecewise;
use crate::fem::functions::{p0_projection_matrix, FineFunction, P0Function};
use crate::fem::grid::FineRegion;
use crate::fem::harmonic::PatchSystem;
use crate::localizer::{sample_with_system, select_sources, SamplingOptions};
use crate::mesh::{group_patches, patch, CartesianMesh, ElementBox, GroupingRule, Patch, PatchGroup};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Slod,
    Lod,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Slod => "slod",
            Method::Lod => "lod",
        }
    }
}

/// One basis function together with the source that defines it.
#[derive(Clone, Debug)]
pub struct LocalBasis {
    /// Coarse element the function is attached to.
    pub element: usize,
    /// Center of the patch the function was computed on.
    pub representative: usize,
    pub ell: usize,
    pub patch: Patch,
    /// Source term; `a(phi, v) = (g, v)` for all `v` vanishing on the patch boundary.
    pub g: P0Function,
    pub phi: FineFunction,
    /// Singular value of the source (0 for the global fallback, NaN when not measured).
    pub sigma: f64,
    pub method: Method,
}

/// Load vector of a patch-local P0 function on `region`.
fn p0_load(region: &FineRegion, g: &P0Function) -> Vec<f64> {
    let shift = region.mesh.level() - g.mesh.level();
    let mesh = g.mesh;
    assemble_load_piecewise(region, |c| g.at(mesh.element_index([c[0] >> shift, c[1] >> shift])))
}

fn solve_with_system(sys: &PatchSystem, g: &P0Function) -> Result<FineFunction> {
    let load = p0_load(&sys.region, g);
    let rhs: Vec<f64> = sys.interior.iter().map(|&v| load[v]).collect();
    sys.solve_interior(&rhs)
}

/// Solves `a(phi, v) = (g, v)` on the patch with zero boundary values.
pub fn solve_patch_problem(
    coarse: &CartesianMesh,
    patch: &Patch,
    coeff: &FineCoefficient,
    g: &P0Function,
) -> Result<FineFunction> {
    let sys = PatchSystem::for_patch(coarse, patch, coeff)?;
    solve_with_system(&sys, g)
}

/// Stored sources of a basis, enough to rebuild it with patch solves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub element: usize,
    pub representative: usize,
    pub sigma: f64,
    pub g: Vec<f64>,
}

fn group_sources(
    coarse: &CartesianMesh,
    group: &PatchGroup,
    sys: &PatchSystem,
    opts: &SamplingOptions,
) -> Result<Vec<SourceRecord>> {
    let rep = &group.representative;
    if group.global {
        let scale = 1.0 / coarse.element_volume().sqrt();
        return Ok(group
            .members
            .iter()
            .map(|&e| {
                let mut g = vec![0.0; rep.len()];
                g[rep.local_index(coarse, e).unwrap()] = scale;
                SourceRecord {
                    element: e,
                    representative: rep.center,
                    sigma: 0.0,
                    g,
                }
            })
            .collect());
    }
    let x = sample_with_system(coarse, rep, sys, opts)?;
    let anchor = rep.local_index(coarse, group.members[0]).unwrap();
    let sel = select_sources(coarse, &x, group.k(), anchor)?;
    Ok(group
        .members
        .iter()
        .zip(sel.g.iter().zip(&sel.sigma))
        .map(|(&e, (g, &s))| SourceRecord {
            element: e,
            representative: rep.center,
            sigma: s,
            g: g.values.clone(),
        })
        .collect())
}

/// Options of the super-localized basis construction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlodOptions {
    pub sampling: SamplingOptions,
    pub grouping: GroupingRule,
}

/// Computes the sources of every group (in parallel), ordered by element.
pub fn slod_sources(
    coarse: &CartesianMesh,
    coeff: &FineCoefficient,
    ell: usize,
    opts: &SlodOptions,
) -> Result<Vec<SourceRecord>> {
    let groups = group_patches(coarse, ell, opts.grouping)?;
    let per_group: Vec<Vec<SourceRecord>> = groups
        .par_iter()
        .map(|g| {
            let sys = PatchSystem::for_patch(coarse, &g.representative, coeff)?;
            group_sources(coarse, g, &sys, &opts.sampling)
        })
        .collect::<Result<_>>()?;
    let mut all: Vec<SourceRecord> = per_group.into_iter().flatten().collect();
    all.sort_by_key(|r| r.element);
    Ok(all)
}

/// Rebuilds basis functions from stored sources with one patch solve each;
/// sources sharing a patch share its factorization.
pub fn basis_from_sources(
    coarse: &CartesianMesh,
    coeff: &FineCoefficient,
    ell: usize,
    sources: &[SourceRecord],
    method: Method,
) -> Result<Vec<LocalBasis>> {
    let mut reps: Vec<usize> = sources.iter().map(|s| s.representative).collect();
    reps.sort_unstable();
    reps.dedup();
    let built: Vec<Vec<LocalBasis>> = reps
        .par_iter()
        .map(|&rep| {
            let p = patch(coarse, rep, ell)?;
            let sys = PatchSystem::for_patch(coarse, &p, coeff)?;
            sources
                .iter()
                .filter(|s| s.representative == rep)
                .map(|s| {
                    if s.g.len() != p.len() {
                        return Err(SlodError::Format(format!(
                            "source of element {} has {} entries, patch has {}",
                            s.element,
                            s.g.len(),
                            p.len()
                        )));
                    }
                    let g = P0Function::on_box(*coarse, p.bounds, s.g.clone());
                    let phi = solve_with_system(&sys, &g)?;
                    Ok(LocalBasis {
                        element: s.element,
                        representative: rep,
                        ell,
                        patch: p.clone(),
                        g,
                        phi,
                        sigma: s.sigma,
                        method,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut all: Vec<LocalBasis> = built.into_iter().flatten().collect();
    all.sort_by_key(|b| b.element);
    Ok(all)
}

/// One super-localized basis function per coarse element.
pub fn build_slod_basis(
    coarse: &CartesianMesh,
    coeff: &FineCoefficient,
    ell: usize,
    opts: &SlodOptions,
) -> Result<Vec<LocalBasis>> {
    let sources = slod_sources(coarse, coeff, ell, opts)?;
    basis_from_sources(coarse, coeff, ell, &sources, Method::Slod)
}

/// Nonnegative tensor-product bubble on `element` with mean exactly 1.
pub fn bubble(coarse: &CartesianMesh, element: usize, fine: CartesianMesh) -> Result<FineFunction> {
    if fine.level() < coarse.level() + 1 {
        return Err(SlodError::Config("bubble needs at least one refinement of the coarse mesh".into()));
    }
    let c = coarse.element_coords(element);
    let cb = ElementBox { lo: c, hi: c };
    let region = FineRegion::of_coarse_box(coarse, &cb, fine);
    let h_half = coarse.size() / 2.0;
    let values: Vec<f64> = (0..region.num_nodes())
        .map(|v| {
            let x = region.node_position(v);
            (0..coarse.dim())
                .map(|a| {
                    let mid = (c[a] as f64 + 0.5) * coarse.size();
                    (1.0 - (x[a] - mid).abs() / h_half).max(0.0)
                })
                .product()
        })
        .collect();
    let mean = (p0_projection_matrix(&region, coarse, &cb) * DVector::from_column_slice(&values))[0];
    Ok(FineFunction::new(region, values.iter().map(|v| v / mean).collect()))
}

/// Classical LOD basis function of `element`: minimal energy on the patch
/// subject to having element means `1` on `element` and `0` on the other
/// patch elements. The multiplier of the mean constraints is stored as `g`.
pub fn lod_basis_function(
    coarse: &CartesianMesh,
    coeff: &FineCoefficient,
    element: usize,
    ell: usize,
) -> Result<LocalBasis> {
    let p = patch(coarse, element, ell)?;
    let sys = PatchSystem::for_patch(coarse, &p, coeff)?;
    let n = p.len();
    // L[j, K] = integral of the hat j over K, interior nodes only.
    let proj = p0_projection_matrix(&sys.region, coarse, &p.bounds) * coarse.element_volume();
    let mut l = DMatrix::zeros(sys.interior.len(), n);
    for (row, &v) in sys.interior.iter().enumerate() {
        for k in 0..n {
            l[(row, k)] = proj[(k, v)];
        }
    }
    let w = sys.a0.solve_many(&l)?;
    let schur = l.transpose() * &w;
    let schur = (&schur + schur.transpose()) * 0.5;
    let local = p.local_index(coarse, element).unwrap();
    let mut rhs = DVector::zeros(n);
    rhs[local] = coarse.element_volume();
    let lambda = schur
        .cholesky()
        .ok_or_else(|| SlodError::Solver("LOD constraint system is not positive definite".into()))?
        .solve(&rhs);
    let phi_interior = &w * &lambda;
    let phi = FineFunction::scatter(sys.region, &sys.interior, phi_interior.as_slice());
    Ok(LocalBasis {
        element,
        representative: element,
        ell,
        g: P0Function::on_box(*coarse, p.bounds, lambda.iter().copied().collect()),
        patch: p,
        phi,
        sigma: f64::NAN,
        method: Method::Lod,
    })
}

pub fn build_lod_basis(coarse: &CartesianMesh, coeff: &FineCoefficient, ell: usize) -> Result<Vec<LocalBasis>> {
    (0..coarse.num_elements())
        .into_par_iter()
        .map(|e| lod_basis_function(coarse, coeff, e, ell))
        .collect()
}

pub fn build_basis(
    method: Method,
    coarse: &CartesianMesh,
    coeff: &FineCoefficient,
    ell: usize,
    opts: &SlodOptions,
) -> Result<Vec<LocalBasis>> {
    match method {
        Method::Slod => build_slod_basis(coarse, coeff, ell, opts),
        Method::Lod => build_lod_basis(coarse, coeff, ell),
    }
}

/// Interior residual `max |a(phi, phi_j) - (g, phi_j)|` of a basis function.
pub fn patch_residual(b: &LocalBasis, coeff: &FineCoefficient) -> Result<f64> {
    let sys = PatchSystem::new(b.phi.region, coeff)?;
    let kphi = sys.stiffness.mul_vec(&b.phi.values);
    let load = p0_load(&sys.region, &b.g);
    Ok(sys
        .interior
        .iter()
        .map(|&v| (kphi[v] - load[v]).abs())
        .fold(0.0, f64::max))
}
