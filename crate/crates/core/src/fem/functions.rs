//! Fine Q1 functions, coarse piecewise constants and the projection between them.

use std::io::Write;

use nalgebra::DMatrix;

use crate::coefficient::FineCoefficient;
use crate::error::{Result, SlodError};
use crate::fem::assembly::{element_mass, element_stiffness, gauss_legendre};
use crate::fem::grid::FineRegion;
use crate::mesh::{CartesianMesh, ElementBox};

/// Nodal Q1 function on a fine region. Norms and inner products integrate
/// over the region only.
#[derive(Clone, Debug, PartialEq)]
pub struct FineFunction {
    pub region: FineRegion,
    pub values: Vec<f64>,
    /// The function vanishes on the region boundary, so its zero extension
    /// is continuous.
    pub zero_on_boundary: bool,
}

impl FineFunction {
    pub fn zeros(region: FineRegion) -> Self {
        Self {
            values: vec![0.0; region.num_nodes()],
            region,
            zero_on_boundary: true,
        }
    }

    pub fn new(region: FineRegion, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), region.num_nodes());
        let zero_on_boundary = (0..region.num_nodes())
            .all(|v| !region.on_region_boundary(v) || values[v] == 0.0);
        Self {
            region,
            values,
            zero_on_boundary,
        }
    }

    /// Builds a function from values on a subset of nodes; all other nodes are 0.
    pub fn scatter(region: FineRegion, nodes: &[usize], values: &[f64]) -> Self {
        let mut v = vec![0.0; region.num_nodes()];
        for (&n, &x) in nodes.iter().zip(values) {
            v[n] = x;
        }
        Self::new(region, v)
    }

    /// Value at a global fine node (zero outside the region).
    pub fn at(&self, c: [usize; 2]) -> f64 {
        self.region.local_node(c).map_or(0.0, |v| self.values[v])
    }

    /// Zero extension to the whole fine mesh.
    pub fn to_global(&self) -> FineFunction {
        let whole = FineRegion::whole(self.region.mesh);
        let mut values = vec![0.0; whole.num_nodes()];
        self.region.embed(&whole, &self.values, &mut values, 1.0);
        FineFunction::new(whole, values)
    }

    /// `target += scale * self` where `target` covers this function's region.
    pub fn add_scaled_into(&self, target: &mut FineFunction, scale: f64) {
        self.region.embed(&target.region, &self.values, &mut target.values, scale);
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn quadratic(&self, other: &FineFunction, local: &[[f64; 4]; 4], weight: impl Fn([usize; 2]) -> f64) -> f64 {
        let Some(common) = self.region.bounds.intersection(&other.region.bounds) else {
            return 0.0;
        };
        let nv = self.region.nodes_per_element();
        let mut total = 0.0;
        for c in common.coords() {
            let a = self.region.element_nodes(c);
            let b = other.region.element_nodes(c);
            let mut s = 0.0;
            for i in 0..nv {
                let ui = self.values[a[i]];
                if ui == 0.0 {
                    continue;
                }
                for j in 0..nv {
                    s += ui * local[i][j] * other.values[b[j]];
                }
            }
            total += weight(c) * s;
        }
        total
    }

    /// `a(self, other)` with the given coefficient.
    pub fn energy_inner(&self, other: &FineFunction, coeff: &FineCoefficient) -> f64 {
        let k = element_stiffness(self.region.dim(), self.region.mesh.size());
        let mesh = self.region.mesh;
        self.quadratic(other, &k, |c| coeff.values[mesh.element_index(c)])
    }

    pub fn l2_inner(&self, other: &FineFunction) -> f64 {
        let m = element_mass(self.region.dim(), self.region.mesh.size());
        self.quadratic(other, &m, |_| 1.0)
    }

    pub fn energy_norm(&self, coeff: &FineCoefficient) -> f64 {
        self.energy_inner(self, coeff).max(0.0).sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_inner(self).max(0.0).sqrt()
    }

    pub fn h1_seminorm(&self) -> f64 {
        let k = element_stiffness(self.region.dim(), self.region.mesh.size());
        self.quadratic(self, &k, |_| 1.0).max(0.0).sqrt()
    }

    /// Full H1 norm, `sqrt(|v|_1^2 + |v|_0^2)`.
    pub fn h1_norm(&self) -> f64 {
        (self.h1_seminorm().powi(2) + self.l2_norm().powi(2)).sqrt()
    }

    /// `node,x,y,value` rows for plotting.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "node,x,y,value")?;
        for v in 0..self.region.num_nodes() {
            let x = self.region.node_position(v);
            let g = self.region.mesh.node_index(self.region.node_coords(v));
            writeln!(w, "{g},{},{},{}", x[0], x[1], self.values[v])?;
        }
        Ok(())
    }
}

/// Piecewise constant function on a box of coarse elements, zero elsewhere.
/// Values are coordinates with respect to the indicator functions.
#[derive(Clone, Debug, PartialEq)]
pub struct P0Function {
    pub mesh: CartesianMesh,
    pub bounds: ElementBox,
    pub values: Vec<f64>,
}

impl P0Function {
    pub fn new(mesh: CartesianMesh, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), mesh.num_elements());
        Self {
            bounds: mesh.full_box(),
            mesh,
            values,
        }
    }

    pub fn on_box(mesh: CartesianMesh, bounds: ElementBox, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), bounds.len());
        Self { mesh, bounds, values }
    }

    /// Value on a global coarse element.
    pub fn at(&self, e: usize) -> f64 {
        let c = self.mesh.element_coords(e);
        if self.bounds.contains(c) {
            self.values[self.bounds.local_index(c)]
        } else {
            0.0
        }
    }

    /// Extension by zero to all coarse elements.
    pub fn to_global(&self) -> Vec<f64> {
        (0..self.mesh.num_elements()).map(|e| self.at(e)).collect()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.mesh.element_volume()).sqrt()
    }

    /// Coordinates in the L2-orthonormal basis `1_K / sqrt|K|`.
    pub fn orthonormal_coords(&self) -> Vec<f64> {
        let s = self.mesh.element_volume().sqrt();
        self.values.iter().map(|v| v * s).collect()
    }

    pub fn from_orthonormal_coords(mesh: CartesianMesh, bounds: ElementBox, coords: &[f64]) -> Self {
        let s = mesh.element_volume().sqrt();
        Self::on_box(mesh, bounds, coords.iter().map(|v| v / s).collect())
    }
}

/// Matrix mapping nodal values on `region` to the element means over the
/// coarse elements of `coarse_box` (rows ordered as in the box).
///
/// The mean of a Q1 function over a fine element is the average of its
/// corner values, so the map is exact.
pub fn p0_projection_matrix(region: &FineRegion, coarse: &CartesianMesh, coarse_box: &ElementBox) -> DMatrix<f64> {
    let dim = coarse.dim();
    let shift = region.mesh.level() - coarse.level();
    let per = (1usize << shift).pow(dim as u32) as f64;
    let nv = region.nodes_per_element();
    let w = 1.0 / (per * nv as f64);
    let mut p = DMatrix::zeros(coarse_box.len(), region.num_nodes());
    let fine_box = coarse_box.refine(1 << shift, dim);
    for c in fine_box.coords() {
        let k = coarse_box.local_index([c[0] >> shift, c[1] >> shift]);
        for &v in &region.element_nodes(c)[..nv] {
            p[(k, v)] += w;
        }
    }
    p
}

/// L2 projection onto piecewise constants over the coarse elements covered
/// by the function's region.
pub fn project_p0(v: &FineFunction, coarse: &CartesianMesh) -> Result<P0Function> {
    let r = &v.region;
    if r.mesh.level() < coarse.level() || r.dim() != coarse.dim() {
        return Err(SlodError::Config("fine function is not on a refinement of the coarse mesh".into()));
    }
    let shift = r.mesh.level() - coarse.level();
    let ratio = 1usize << shift;
    let mut lo = [0; 2];
    let mut hi = [0; 2];
    for a in 0..coarse.dim() {
        if !r.bounds.lo[a].is_multiple_of(ratio) || !(r.bounds.hi[a] + 1).is_multiple_of(ratio) {
            return Err(SlodError::Config("fine region is not aligned with the coarse mesh".into()));
        }
        lo[a] = r.bounds.lo[a] / ratio;
        hi[a] = r.bounds.hi[a] / ratio;
    }
    let cbox = ElementBox { lo, hi };
    let p = p0_projection_matrix(r, coarse, &cbox);
    let values = (&p * nalgebra::DVector::from_column_slice(&v.values)).as_slice().to_vec();
    Ok(P0Function::on_box(*coarse, cbox, values))
}

/// Element means of an analytic function, using `q` Gauss points per axis
/// on each of `sub^d` sub-cells of every coarse element.
pub fn project_p0_fn(coarse: &CartesianMesh, f: &dyn Fn([f64; 2]) -> f64, q: usize, sub: usize) -> P0Function {
    let (pts, wts) = gauss_legendre(q);
    let dim = coarse.dim();
    let h = coarse.size() / sub as f64;
    let (qy, sy) = if dim == 2 { (q, sub) } else { (1, 1) };
    let values = (0..coarse.num_elements())
        .map(|e| {
            let c = coarse.element_coords(e);
            let mut s = 0.0;
            for bj in 0..sy {
                for bi in 0..sub {
                    let x0 = c[0] as f64 * coarse.size() + bi as f64 * h;
                    let y0 = c[1] as f64 * coarse.size() + bj as f64 * h;
                    for j in 0..qy {
                        for i in 0..q {
                            let (y, wy) = if dim == 2 { (y0 + pts[j] * h, wts[j]) } else { (0.0, 1.0) };
                            s += wts[i] * wy * f([x0 + pts[i] * h, y]);
                        }
                    }
                }
            }
            s / (sub.pow(dim as u32)) as f64
        })
        .collect();
    P0Function::new(*coarse, values)
}
