//! Coarse Galerkin and collocation solves in a localized basis, fine
//! reference solves and error diagnostics.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::LocalBasis;
use crate::coefficient::FineCoefficient;
use crate::error::{Result, SlodError};
use crate::fem::assembly::{assemble_load_fn, assemble_load_piecewise, assemble_stiffness_operator, element_stiffness};
use crate::fem::functions::{project_p0_fn, FineFunction, P0Function};
use crate::fem::grid::FineRegion;
use crate::fem::sparse::{solve_dirichlet, CG_RTOL};
use crate::mesh::{CartesianMesh, ElementBox};

/// Condition number above which a coarse system is rejected.
pub const STABILITY_LIMIT: f64 = 1e12;

/// Right-hand side of the model problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Rhs {
    Constant { value: f64 },
    /// `sin(x1) sin(x2)` (just `sin(x1)` in one dimension).
    SinSin,
    /// Piecewise constant on the mesh of the given level, values in
    /// lexicographic element order.
    P0 { level: u32, values: Vec<f64> },
}

impl Rhs {
    pub fn eval(&self, x: [f64; 2], dim: usize) -> f64 {
        match self {
            Rhs::Constant { value } => *value,
            Rhs::SinSin => {
                if dim == 1 {
                    x[0].sin()
                } else {
                    x[0].sin() * x[1].sin()
                }
            }
            Rhs::P0 { level, values } => {
                let n = 1usize << level;
                let idx = |t: f64| ((t * n as f64).floor().max(0.0) as usize).min(n - 1);
                let e = if dim == 1 { idx(x[0]) } else { idx(x[0]) + n * idx(x[1]) };
                values[e]
            }
        }
    }

    fn check(&self, mesh: &CartesianMesh) -> Result<()> {
        if let Rhs::P0 { level, values } = self {
            let m = CartesianMesh::new(mesh.dim(), *level)?;
            if values.len() != m.num_elements() {
                return Err(SlodError::Config(format!(
                    "piecewise constant right-hand side needs {} values, got {}",
                    m.num_elements(),
                    values.len()
                )));
            }
            if *level > mesh.level() {
                return Err(SlodError::Config("right-hand side is finer than the fine mesh".into()));
            }
        }
        Ok(())
    }

    /// Load vector `(f, phi_j)` on a fine region; exact for piecewise
    /// constant data.
    pub fn load(&self, region: &FineRegion) -> Result<Vec<f64>> {
        self.check(&region.mesh)?;
        let dim = region.dim();
        Ok(match self {
            Rhs::Constant { value } => assemble_load_piecewise(region, |_| *value),
            Rhs::P0 { level, values } => {
                let shift = region.mesh.level() - level;
                let n = 1usize << level;
                assemble_load_piecewise(region, |c| values[(c[0] >> shift) + n * (c[1] >> shift)])
            }
            Rhs::SinSin => assemble_load_fn(region, &|x| self.eval(x, dim), 3),
        })
    }

    /// Element means on a coarse mesh.
    pub fn project(&self, coarse: &CartesianMesh) -> Result<P0Function> {
        self.check(coarse)?;
        Ok(match self {
            Rhs::Constant { value } => P0Function::new(*coarse, vec![*value; coarse.num_elements()]),
            Rhs::P0 { level, values } if *level <= coarse.level() => {
                let shift = coarse.level() - level;
                let n = 1usize << level;
                let v = (0..coarse.num_elements())
                    .map(|e| {
                        let c = coarse.element_coords(e);
                        values[(c[0] >> shift) + n * (c[1] >> shift)]
                    })
                    .collect();
                P0Function::new(*coarse, v)
            }
            _ => project_p0_fn(coarse, &|x| self.eval(x, coarse.dim()), 4, 4),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Galerkin,
    Collocation,
}

impl Solver {
    pub fn as_str(&self) -> &'static str {
        match self {
            Solver::Galerkin => "galerkin",
            Solver::Collocation => "collocation",
        }
    }
}

/// Coarse solution and its fine-grid realization.
#[derive(Clone, Debug)]
pub struct HomogenizedSolution {
    pub coefficients: Vec<f64>,
    /// `sum_T c_T phi_T` on the whole fine mesh.
    pub fine: FineFunction,
    pub solver: Solver,
    /// Condition number of the solved coarse system.
    pub system_condition: f64,
    pub riesz_condition: f64,
    pub energy_error: Option<f64>,
}

fn mesh_of(basis: &[LocalBasis]) -> Result<(CartesianMesh, CartesianMesh)> {
    let first = basis
        .first()
        .ok_or_else(|| SlodError::Config("empty basis".into()))?;
    Ok((first.g.mesh, first.phi.region.mesh))
}

fn realize(basis: &[LocalBasis], c: &[f64], fine: CartesianMesh) -> FineFunction {
    let mut u = FineFunction::zeros(FineRegion::whole(fine));
    for (b, &ci) in basis.iter().zip(c) {
        b.phi.add_scaled_into(&mut u, ci);
    }
    u.zero_on_boundary = true;
    u
}

/// Nodal box of a region in global fine node coordinates.
fn node_box(r: &FineRegion) -> ElementBox {
    let mut hi = r.bounds.hi;
    for a in 0..r.dim() {
        hi[a] += 1;
    }
    ElementBox { lo: r.bounds.lo, hi }
}

/// `K phi` over the nodes of the function's region, element by element.
fn apply_stiffness(phi: &FineFunction, coeff: &FineCoefficient) -> Vec<f64> {
    let r = &phi.region;
    let k = element_stiffness(r.dim(), r.mesh.size());
    let nv = r.nodes_per_element();
    let mut out = vec![0.0; r.num_nodes()];
    for c in r.bounds.coords() {
        let a = coeff.values[r.mesh.element_index(c)];
        let nodes = r.element_nodes(c);
        for i in 0..nv {
            let mut s = 0.0;
            for j in 0..nv {
                s += k[i][j] * phi.values[nodes[j]];
            }
            out[nodes[i]] += a * s;
        }
    }
    out
}

fn dot_on_overlap(ri: &FineRegion, yi: &[f64], rj: &FineRegion, vj: &[f64]) -> f64 {
    let Some(common) = node_box(ri).intersection(&node_box(rj)) else {
        return 0.0;
    };
    common
        .coords()
        .map(|c| yi[ri.local_node(c).unwrap()] * vj[rj.local_node(c).unwrap()])
        .sum()
}

/// Condition number of a symmetric matrix (infinite if not positive definite).
pub fn spd_condition(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn stability_error(what: &'static str, condition: f64, basis: &[LocalBasis]) -> SlodError {
    SlodError::Stability {
        what,
        condition,
        limit: STABILITY_LIMIT,
        sigma: basis.iter().map(|b| b.sigma).collect(),
    }
}

/// Coarse stiffness matrix `a(phi_i, phi_j)`.
pub fn coarse_stiffness(basis: &[LocalBasis], coeff: &FineCoefficient) -> DMatrix<f64> {
    let y: Vec<Vec<f64>> = basis.par_iter().map(|b| apply_stiffness(&b.phi, coeff)).collect();
    let n = basis.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if j < i {
                        0.0
                    } else {
                        dot_on_overlap(&basis[i].phi.region, &y[i], &basis[j].phi.region, &basis[j].phi.values)
                    }
                })
                .collect()
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| if j >= i { rows[i][j] } else { rows[j][i] })
}

/// Galerkin solution in the span of the basis.
pub fn solve_galerkin(basis: &[LocalBasis], rhs: &Rhs, coeff: &FineCoefficient) -> Result<HomogenizedSolution> {
    let (_, fine) = mesh_of(basis)?;
    let g = coarse_stiffness(basis, coeff);
    let cond = spd_condition(&g);
    if !(cond <= STABILITY_LIMIT) {
        return Err(stability_error("coarse stiffness matrix", cond, basis));
    }
    let whole = FineRegion::whole(fine);
    let f = rhs.load(&whole)?;
    let l: Vec<f64> = basis
        .iter()
        .map(|b| dot_on_overlap(&b.phi.region, &b.phi.values, &whole, &f))
        .collect();
    let c = g
        .clone()
        .cholesky()
        .ok_or_else(|| stability_error("coarse stiffness matrix", f64::INFINITY, basis))?
        .solve(&DVector::from_vec(l));
    let coefficients: Vec<f64> = c.iter().copied().collect();
    Ok(HomogenizedSolution {
        fine: realize(basis, &coefficients, fine),
        coefficients,
        solver: Solver::Galerkin,
        system_condition: cond,
        riesz_condition: riesz_condition(basis),
        energy_error: None,
    })
}

/// Matrix whose column `T` holds the element values of `g_T` on the whole mesh.
pub fn source_matrix(basis: &[LocalBasis]) -> DMatrix<f64> {
    let n = basis.len();
    let ne = basis.first().map_or(0, |b| b.g.mesh.num_elements());
    let mut m = DMatrix::zeros(ne, n);
    for (j, b) in basis.iter().enumerate() {
        m.set_column(j, &DVector::from_vec(b.g.to_global()));
    }
    m
}

/// Solves `sum_T c_T g_T = Pi_H f` and combines the basis functions with
/// the resulting coefficients.
pub fn solve_collocation(basis: &[LocalBasis], rhs: &Rhs) -> Result<HomogenizedSolution> {
    let (coarse, fine) = mesh_of(basis)?;
    let riesz = riesz_condition(basis);
    if !(riesz <= STABILITY_LIMIT) || basis.len() != coarse.num_elements() {
        return Err(stability_error("source Gram matrix", riesz, basis));
    }
    let b = source_matrix(basis);
    let pf = rhs.project(&coarse)?;
    let c = b
        .clone()
        .lu()
        .solve(&DVector::from_vec(pf.values.clone()))
        .ok_or_else(|| stability_error("source matrix", f64::INFINITY, basis))?;
    let coefficients: Vec<f64> = c.iter().copied().collect();
    let sv = b.singular_values();
    Ok(HomogenizedSolution {
        fine: realize(basis, &coefficients, fine),
        coefficients,
        solver: Solver::Collocation,
        system_condition: sv.max() / sv.min(),
        riesz_condition: riesz,
        energy_error: None,
    })
}

pub fn solve(solver: Solver, basis: &[LocalBasis], rhs: &Rhs, coeff: &FineCoefficient) -> Result<HomogenizedSolution> {
    match solver {
        Solver::Galerkin => solve_galerkin(basis, rhs, coeff),
        Solver::Collocation => solve_collocation(basis, rhs),
    }
}

/// Condition number of the Gram matrix of the L2-normalized sources.
pub fn riesz_condition(basis: &[LocalBasis]) -> f64 {
    if basis.is_empty() {
        return f64::INFINITY;
    }
    let mut b = source_matrix(basis);
    let vol = basis[0].g.mesh.element_volume();
    for mut col in b.column_iter_mut() {
        let n = (col.norm_squared() * vol).sqrt();
        if n > 0.0 {
            col /= n;
        }
    }
    let gram = b.transpose() * b * vol;
    spd_condition(&gram)
}

/// Fine Q1 solution of the full problem with zero boundary values.
pub fn reference_solve(rhs: &Rhs, coeff: &FineCoefficient) -> Result<FineFunction> {
    let region = FineRegion::whole(coeff.mesh);
    let dirichlet: Vec<bool> = (0..region.num_nodes()).map(|v| region.on_region_boundary(v)).collect();
    let (op, free) = assemble_stiffness_operator(&region, coeff, &dirichlet)?;
    let f = rhs.load(&region)?;
    let b: Vec<f64> = free.iter().map(|&v| f[v]).collect();
    let x = solve_dirichlet(&op, &b, CG_RTOL)?;
    Ok(FineFunction::scatter(region, &free, &x))
}

/// Energy norm of `u - reference`.
pub fn energy_error(u: &FineFunction, reference: &FineFunction, coeff: &FineCoefficient) -> Result<f64> {
    if u.region != reference.region {
        return Err(SlodError::Config("solutions live on different fine meshes".into()));
    }
    let diff = FineFunction::new(
        u.region,
        u.values.iter().zip(&reference.values).map(|(a, b)| a - b).collect(),
    );
    Ok(diff.energy_norm(coeff))
}
