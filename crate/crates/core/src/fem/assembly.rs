//! Closed-form Q1 element integrals and their assembly on fine regions.

use crate::coefficient::FineCoefficient;
use crate::fem::grid::FineRegion;
use crate::fem::sparse::{CsrMatrix, SparseOperator};
use crate::error::{Result, SlodError};

type ElementMatrix = [[f64; 4]; 4];

fn tensor(dim: usize, h: f64, stiff: bool) -> ElementMatrix {
    let k1 = [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]];
    let m1 = [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
    let mut out = [[0.0; 4]; 4];
    if dim == 1 {
        let src = if stiff { k1 } else { m1 };
        for a in 0..2 {
            for b in 0..2 {
                out[a][b] = src[a][b];
            }
        }
        return out;
    }
    for a in 0..4 {
        for b in 0..4 {
            let (ax, ay, bx, by) = (a & 1, a >> 1, b & 1, b >> 1);
            out[a][b] = if stiff {
                k1[ax][bx] * m1[ay][by] + m1[ax][bx] * k1[ay][by]
            } else {
                m1[ax][bx] * m1[ay][by]
            };
        }
    }
    out
}

/// Unit-coefficient Q1 stiffness matrix of one element of side `h`.
pub fn element_stiffness(dim: usize, h: f64) -> ElementMatrix {
    tensor(dim, h, true)
}

pub fn element_mass(dim: usize, h: f64) -> ElementMatrix {
    tensor(dim, h, false)
}

fn assemble(region: &FineRegion, local: &ElementMatrix, weight: impl Fn([usize; 2]) -> f64) -> CsrMatrix {
    let dim = region.dim();
    let nv = region.nodes_per_element();
    let s = region.node_shape();
    let n = region.num_nodes();
    // 3^d neighbour stencil per node, slot (dx+1) + 3(dy+1).
    let mut stencil = vec![0.0; n * 9];
    for c in region.bounds.coords() {
        let w = weight(c);
        let nodes = region.element_nodes(c);
        for a in 0..nv {
            for b in 0..nv {
                let dx = (b & 1) as isize - (a & 1) as isize;
                let dy = if dim == 2 { (b >> 1) as isize - (a >> 1) as isize } else { 0 };
                let slot = (dx + 1 + 3 * (dy + 1)) as usize;
                stencil[nodes[a] * 9 + slot] += w * local[a][b];
            }
        }
    }
    let rows = (0..n)
        .map(|v| {
            let (vx, vy) = (v % s[0], v / s[0]);
            let mut row = Vec::with_capacity(9);
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let slot = (dx + 1 + 3 * (dy + 1)) as usize;
                    let val = stencil[v * 9 + slot];
                    if val == 0.0 {
                        continue;
                    }
                    let (x, y) = (vx as isize + dx, vy as isize + dy);
                    row.push(((x + y * s[0] as isize) as usize, val));
                }
            }
            row
        })
        .collect();
    CsrMatrix::from_rows(n, rows)
}

/// Stiffness matrix over all nodes of `region`.
pub fn assemble_stiffness(region: &FineRegion, coeff: &FineCoefficient) -> Result<CsrMatrix> {
    if coeff.mesh != region.mesh {
        return Err(SlodError::Config("coefficient and region live on different meshes".into()));
    }
    let k = element_stiffness(region.dim(), region.mesh.size());
    let mesh = region.mesh;
    Ok(assemble(region, &k, |c| coeff.values[mesh.element_index(c)]))
}

pub fn assemble_unit_stiffness(region: &FineRegion) -> CsrMatrix {
    assemble(region, &element_stiffness(region.dim(), region.mesh.size()), |_| 1.0)
}

pub fn assemble_mass(region: &FineRegion) -> CsrMatrix {
    assemble(region, &element_mass(region.dim(), region.mesh.size()), |_| 1.0)
}

/// Stiffness restricted to the nodes not flagged as Dirichlet. Returns the
/// operator and the retained local node indices.
pub fn assemble_stiffness_operator(
    region: &FineRegion,
    coeff: &FineCoefficient,
    dirichlet: &[bool],
) -> Result<(SparseOperator, Vec<usize>)> {
    let full = assemble_stiffness(region, coeff)?;
    let free: Vec<usize> = (0..region.num_nodes()).filter(|&v| !dirichlet[v]).collect();
    if free.is_empty() {
        return Err(SlodError::Config("region has no free nodes".into()));
    }
    Ok((SparseOperator::new(full.submatrix(&free, &free)), free))
}

/// Load vector `(g, phi_j)` for a function constant on each fine element.
/// Exact: every hat integrates to `h^d / 2^d` over each element it touches.
pub fn assemble_load_piecewise(region: &FineRegion, value: impl Fn([usize; 2]) -> f64) -> Vec<f64> {
    let nv = region.nodes_per_element();
    let w = region.mesh.element_volume() / nv as f64;
    let mut out = vec![0.0; region.num_nodes()];
    for c in region.bounds.coords() {
        let g = value(c);
        if g == 0.0 {
            continue;
        }
        for &v in &region.element_nodes(c)[..nv] {
            out[v] += g * w;
        }
    }
    out
}

/// Load vector for an analytic right-hand side with `q` Gauss points per axis.
pub fn assemble_load_fn(region: &FineRegion, f: &dyn Fn([f64; 2]) -> f64, q: usize) -> Vec<f64> {
    let dim = region.dim();
    let h = region.mesh.size();
    let (pts, wts) = gauss_legendre(q);
    let nv = region.nodes_per_element();
    let mut out = vec![0.0; region.num_nodes()];
    let qy = if dim == 2 { q } else { 1 };
    for c in region.bounds.coords() {
        let x0 = [c[0] as f64 * h, c[1] as f64 * h];
        let nodes = region.element_nodes(c);
        for j in 0..qy {
            for i in 0..q {
                let (s, t) = (pts[i], if dim == 2 { pts[j] } else { 0.0 });
                let w = wts[i] * if dim == 2 { wts[j] } else { 1.0 } * region.mesh.element_volume();
                let fx = f([x0[0] + s * h, x0[1] + t * h]) * w;
                for (a, &v) in nodes[..nv].iter().enumerate() {
                    let sx = if a & 1 == 1 { s } else { 1.0 - s };
                    let sy = if dim == 1 { 1.0 } else if a >> 1 == 1 { t } else { 1.0 - t };
                    out[v] += fx * sx * sy;
                }
            }
        }
    }
    out
}

/// Gauss-Legendre points and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = 0.5 * (1.0 - z);
        w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::CoefficientField;
    use crate::mesh::CartesianMesh;

    #[test]
    fn one_dimensional_two_elements() {
        let mesh = CartesianMesh::new(1, 1).unwrap();
        let region = FineRegion::whole(mesh);
        let coeff = CoefficientField::constant(1, 1.0).unwrap().eval_on_fine(&mesh).unwrap();
        let dirichlet = [true, false, true];
        let (op, free) = assemble_stiffness_operator(&region, &coeff, &dirichlet).unwrap();
        assert_eq!(free, vec![1]);
        assert_eq!(op.matrix().to_dense()[(0, 0)], 4.0);
        let load = assemble_load_piecewise(&region, |_| 1.0);
        assert_eq!(load[1], 0.5);
    }

    /// Element matrix from 2-point Gauss integration of the bilinear shape
    /// gradients, independent of the tensor formula.
    fn gauss_element_stiffness(h: f64) -> [[f64; 4]; 4] {
        let g = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
        let grad = |a: usize, s: f64, t: f64| -> [f64; 2] {
            let (ax, ay) = ((a & 1) as f64, (a >> 1) as f64);
            let fx = if ax == 1.0 { s } else { 1.0 - s };
            let fy = if ay == 1.0 { t } else { 1.0 - t };
            let dfx = if ax == 1.0 { 1.0 } else { -1.0 };
            let dfy = if ay == 1.0 { 1.0 } else { -1.0 };
            [dfx * fy / h, fx * dfy / h]
        };
        let mut k = [[0.0; 4]; 4];
        for &s in &g {
            for &t in &g {
                for a in 0..4 {
                    for b in 0..4 {
                        let (ga, gb) = (grad(a, s, t), grad(b, s, t));
                        k[a][b] += 0.25 * h * h * (ga[0] * gb[0] + ga[1] * gb[1]);
                    }
                }
            }
        }
        k
    }

    #[test]
    fn closed_form_matches_quadrature() {
        for h in [1.0, 0.125] {
            let k = element_stiffness(2, h);
            let q = gauss_element_stiffness(h);
            for a in 0..4 {
                for b in 0..4 {
                    assert!((k[a][b] - q[a][b]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn interior_stencil() {
        for level in [2, 4] {
            let mesh = CartesianMesh::new(2, level).unwrap();
            let region = FineRegion::whole(mesh);
            let k = assemble_unit_stiffness(&region);
            assert!(k.is_symmetric());
            let v = region.local_node([2, 2]).unwrap();
            let row: Vec<(usize, f64)> = k.row(v).collect();
            assert_eq!(row.len(), 9);
            for (j, val) in row {
                let expect = if j == v { 8.0 / 3.0 } else { -1.0 / 3.0 };
                assert!((val - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn coefficient_scaling() {
        let mesh = CartesianMesh::new(2, 3).unwrap();
        let region = FineRegion::whole(mesh);
        let a = CoefficientField::random_checkerboard(2, 2, 0.1, 1.0, 1).unwrap().eval_on_fine(&mesh).unwrap();
        let k1 = assemble_stiffness(&region, &a).unwrap();
        let k2 = assemble_stiffness(&region, &a.scaled(2.0)).unwrap();
        for i in 0..k1.nrows() {
            for (j, v) in k1.row(i) {
                assert_eq!(k2.get(i, j), 2.0 * v);
            }
        }
        assert!(k1.is_symmetric());
    }

    #[test]
    fn loads() {
        let mesh = CartesianMesh::new(2, 3).unwrap();
        let region = FineRegion::whole(mesh);
        let h = mesh.size();
        let l = assemble_load_piecewise(&region, |_| 1.0);
        let v = region.local_node([3, 4]).unwrap();
        assert!((l[v] - h * h).abs() < 1e-15);
        assert!(assemble_load_piecewise(&region, |_| 0.0).iter().all(|&x| x == 0.0));
        let lf = assemble_load_fn(&region, &|_| 1.0, 2);
        assert!((lf[v] - h * h).abs() < 1e-15);
        // Mass row sums reproduce the constant load.
        let m = assemble_mass(&region);
        let ones = vec![1.0; region.num_nodes()];
        let ml = m.mul_vec(&ones);
        for (a, b) in ml.iter().zip(&l) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn gauss_rules_integrate_polynomials() {
        for n in 1..=6 {
            let (x, w) = gauss_legendre(n);
            for p in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                assert!((q - 1.0 / (p as f64 + 1.0)).abs() < 1e-13, "n={n} p={p}");
            }
        }
    }
}
