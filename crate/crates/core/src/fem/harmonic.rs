//! Node classification on a patch and discrete harmonic extension.

use nalgebra::DMatrix;

use crate::coefficient::FineCoefficient;
use crate::error::{Result, SlodError};
use crate::fem::assembly::assemble_stiffness;
use crate::fem::functions::FineFunction;
use crate::fem::grid::FineRegion;
use crate::fem::sparse::{CsrMatrix, SparseOperator, CG_RTOL};
use crate::mesh::{CartesianMesh, Patch};

/// Which part of the region a node belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Interior,
    /// Boundary of the region away from the domain boundary.
    Gamma1,
    /// Boundary of the region on the domain boundary, including the points
    /// where it meets `Gamma1`.
    Gamma2,
}

/// Stiffness blocks of one patch, shared by harmonic extensions and
/// zero-Dirichlet patch solves.
#[derive(Debug)]
pub struct PatchSystem {
    pub region: FineRegion,
    pub kinds: Vec<NodeKind>,
    pub interior: Vec<usize>,
    pub gamma1: Vec<usize>,
    pub gamma2: Vec<usize>,
    /// Full stiffness matrix over all region nodes.
    pub stiffness: CsrMatrix,
    /// Interior block.
    pub a0: SparseOperator,
    /// Interior rows, `Gamma1` columns.
    pub a0_gamma1: CsrMatrix,
}

impl PatchSystem {
    pub fn new(region: FineRegion, coeff: &FineCoefficient) -> Result<Self> {
        let kinds: Vec<NodeKind> = (0..region.num_nodes())
            .map(|v| {
                if !region.on_region_boundary(v) {
                    NodeKind::Interior
                } else if region.on_domain_boundary(v) {
                    NodeKind::Gamma2
                } else {
                    NodeKind::Gamma1
                }
            })
            .collect();
        let pick = |k: NodeKind| -> Vec<usize> { (0..kinds.len()).filter(|&v| kinds[v] == k).collect() };
        let interior = pick(NodeKind::Interior);
        let gamma1 = pick(NodeKind::Gamma1);
        let gamma2 = pick(NodeKind::Gamma2);
        if interior.is_empty() {
            return Err(SlodError::Config("patch region has no interior nodes".into()));
        }
        let stiffness = assemble_stiffness(&region, coeff)?;
        let a0 = SparseOperator::new(stiffness.submatrix(&interior, &interior));
        let a0_gamma1 = stiffness.submatrix(&interior, &gamma1);
        Ok(Self {
            region,
            kinds,
            interior,
            gamma1,
            gamma2,
            stiffness,
            a0,
            a0_gamma1,
        })
    }

    pub fn for_patch(coarse: &CartesianMesh, patch: &Patch, coeff: &FineCoefficient) -> Result<Self> {
        Self::new(FineRegion::of_patch(coarse, patch, coeff.mesh), coeff)
    }

    /// Zero-Dirichlet solve `A0 x = b` on interior nodes, returned as a
    /// function on the whole region.
    pub fn solve_interior(&self, rhs_interior: &[f64]) -> Result<FineFunction> {
        let x = self.a0.solve(rhs_interior, CG_RTOL)?;
        Ok(FineFunction::scatter(self.region, &self.interior, &x))
    }

    /// Discrete A-harmonic extension of values given on `Gamma1`, zero on
    /// `Gamma2`.
    pub fn extend(&self, gamma1_values: &[f64]) -> Result<FineFunction> {
        let m = DMatrix::from_column_slice(gamma1_values.len(), 1, gamma1_values);
        let ext = self.extend_many(&m)?;
        Ok(FineFunction::new(self.region, ext.column(0).iter().copied().collect()))
    }

    /// Harmonic extension of every column; rows of the result are region nodes.
    pub fn extend_many(&self, gamma1_values: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if self.gamma1.is_empty() {
            return Err(SlodError::GlobalPatch {
                center: usize::MAX,
            });
        }
        if gamma1_values.nrows() != self.gamma1.len() {
            return Err(SlodError::Config(format!(
                "expected {} boundary values, got {}",
                self.gamma1.len(),
                gamma1_values.nrows()
            )));
        }
        let rhs = -self.a0_gamma1.mul_dense(gamma1_values);
        let inner = self.a0.solve_many(&rhs)?;
        let mut out = DMatrix::zeros(self.region.num_nodes(), gamma1_values.ncols());
        for c in 0..gamma1_values.ncols() {
            for (k, &v) in self.interior.iter().enumerate() {
                out[(v, c)] = inner[(k, c)];
            }
            for (k, &v) in self.gamma1.iter().enumerate() {
                out[(v, c)] = gamma1_values[(k, c)];
            }
        }
        Ok(out)
    }
}

/// Harmonic extension on a coarse patch.
pub fn harmonic_extension(
    coarse: &CartesianMesh,
    patch: &Patch,
    coeff: &FineCoefficient,
    gamma1_values: &[f64],
) -> Result<FineFunction> {
    let sys = PatchSystem::for_patch(coarse, patch, coeff)?;
    sys.extend(gamma1_values).map_err(|e| match e {
        SlodError::GlobalPatch { .. } => SlodError::GlobalPatch { center: patch.center },
        other => other,
    })
}
