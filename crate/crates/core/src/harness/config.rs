use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis::{Method, SlodOptions};
use crate::coefficient::CoefficientField;
use crate::error::{Result, SlodError};
use crate::homogenize::{Rhs, Solver};
use crate::localizer::{SampleNormalization, SamplingOptions};
use crate::mesh::{CartesianMesh, GroupingRule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CoefficientSpec {
    Constant { value: f64 },
    /// I.i.d. uniform values on the mesh of level `eps_level`.
    Checkerboard { alpha: f64, beta: f64, seed: u64 },
    /// Binary or CSV coefficient file.
    File { path: PathBuf },
}

impl CoefficientSpec {
    /// Parses `constant:<c>`, `checkerboard:<alpha>:<beta>:<seed>` or `file:<path>`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || SlodError::Config(format!("cannot parse coefficient spec {s:?}"));
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        match kind {
            "constant" => Ok(Self::Constant {
                value: if rest.is_empty() { 1.0 } else { rest.parse().map_err(|_| bad())? },
            }),
            "checkerboard" => {
                let parts: Vec<&str> = rest.split(':').collect();
                let [alpha, beta, seed] = parts.as_slice() else {
                    return Err(bad());
                };
                Ok(Self::Checkerboard {
                    alpha: alpha.parse().map_err(|_| bad())?,
                    beta: beta.parse().map_err(|_| bad())?,
                    seed: seed.parse().map_err(|_| bad())?,
                })
            }
            "file" if !rest.is_empty() => Ok(Self::File { path: rest.into() }),
            _ => Err(bad()),
        }
    }
}

/// Patch used by the Steklov probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteklovSpec {
    pub coarse_level: u32,
    pub ell: usize,
    /// Element multi-index of the patch center; the middle element if absent.
    pub center: Option<[usize; 2]>,
    pub count: usize,
}

impl Default for SteklovSpec {
    fn default() -> Self {
        Self {
            coarse_level: 4,
            ell: 4,
            center: None,
            count: 40,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d: usize,
    pub coarse_levels: Vec<u32>,
    pub ell: Vec<usize>,
    pub fine_level: u32,
    pub eps_level: u32,
    pub coefficient: CoefficientSpec,
    pub rhs: Rhs,
    pub methods: Vec<Method>,
    pub solvers: Vec<Solver>,
    /// Harmonic samples per patch element.
    pub samples_multiplier: usize,
    pub sampling: SampleNormalization,
    pub grouping: GroupingRule,
    pub seed: u64,
    /// Worker threads; 0 picks the number of cores.
    pub threads: usize,
    pub out: PathBuf,
    pub steklov: SteklovSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            d: 2,
            coarse_levels: vec![2, 3, 4, 5],
            ell: vec![1, 2, 3],
            fine_level: 7,
            eps_level: 5,
            coefficient: CoefficientSpec::Checkerboard {
                alpha: 0.01,
                beta: 1.0,
                seed: 1,
            },
            rhs: Rhs::Constant { value: 1.0 },
            methods: vec![Method::Slod, Method::Lod],
            solvers: vec![Solver::Galerkin],
            samples_multiplier: 5,
            sampling: SampleNormalization::Orthonormal,
            grouping: GroupingRule::BoundaryLayer,
            seed: 0,
            threads: 0,
            out: PathBuf::from("results"),
            steklov: SteklovSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    /// Checks the fine mesh and coefficient settings shared by every command.
    pub fn validate_fine(&self) -> Result<()> {
        CartesianMesh::new(self.d, self.fine_level)?;
        if matches!(self.coefficient, CoefficientSpec::Checkerboard { .. }) && self.fine_level < self.eps_level {
            return Err(SlodError::Config(format!(
                "fine level {} does not resolve coefficient level {}",
                self.fine_level, self.eps_level
            )));
        }
        Ok(())
    }

    /// Full check for the experiment grid.
    pub fn validate(&self) -> Result<()> {
        self.validate_fine()?;
        if self.coarse_levels.is_empty() || self.ell.is_empty() {
            return Err(SlodError::Config("need at least one coarse level and one ell".into()));
        }
        if self.ell.contains(&0) {
            return Err(SlodError::Config("ell must be at least 1".into()));
        }
        let max_coarse = *self.coarse_levels.iter().max().unwrap();
        if self.fine_level < max_coarse + 2 {
            return Err(SlodError::Config(format!(
                "fine level {} must exceed the finest coarse level {max_coarse} by at least 2",
                self.fine_level
            )));
        }
        if self.samples_multiplier == 0 {
            return Err(SlodError::Config("samples multiplier must be positive".into()));
        }
        if self.methods.is_empty() || self.solvers.is_empty() {
            return Err(SlodError::Config("need at least one method and one solver".into()));
        }
        Ok(())
    }

    pub fn coefficient_field(&self) -> Result<CoefficientField> {
        let field = match &self.coefficient {
            CoefficientSpec::Constant { value } => CoefficientField::constant(self.d, *value)?,
            CoefficientSpec::Checkerboard { alpha, beta, seed } => {
                CoefficientField::random_checkerboard(self.d, self.eps_level, *alpha, *beta, *seed)?
            }
            CoefficientSpec::File { path } => CoefficientField::load(path)?,
        };
        if field.dim() != self.d {
            return Err(SlodError::Config("coefficient dimension does not match d".into()));
        }
        Ok(field)
    }

    pub fn slod_options(&self) -> SlodOptions {
        SlodOptions {
            sampling: SamplingOptions {
                multiplier: self.samples_multiplier,
                normalization: self.sampling,
                seed: self.seed,
            },
            grouping: self.grouping,
        }
    }
}
