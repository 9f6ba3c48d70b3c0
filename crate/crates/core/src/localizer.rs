//! Source selection on patches: sample the space of discrete A-harmonic
//! functions, project it onto piecewise constants and keep the directions
//! that are least visible to it.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::coefficient::FineCoefficient;
use crate::error::{Result, SlodError};
use crate::fem::assembly::{assemble_mass, assemble_unit_stiffness};
use crate::fem::functions::{p0_projection_matrix, FineFunction, P0Function};
use crate::fem::grid::FineRegion;
use crate::fem::harmonic::PatchSystem;
use crate::mesh::{patch, CartesianMesh, ElementBox, Patch};

/// How sampled harmonic functions are scaled before projection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleNormalization {
    /// Replace the samples by an H1-orthonormal basis of their span, so the
    /// singular values are exact suprema over the sampled subspace.
    #[default]
    Orthonormal,
    /// Scale each sample to unit H1 norm.
    Column,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SamplingOptions {
    /// Samples per coarse element of the patch.
    pub multiplier: usize,
    pub normalization: SampleNormalization,
    pub seed: u64,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self {
            multiplier: 5,
            normalization: SampleNormalization::default(),
            seed: 0,
        }
    }
}

/// Projected harmonic samples of one patch.
#[derive(Clone, Debug)]
pub struct HarmonicSampleMatrix {
    pub patch: Patch,
    /// `N x m`, rows in L2-orthonormal P0 coordinates of the patch elements.
    pub x: DMatrix<f64>,
}

impl HarmonicSampleMatrix {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.x.ncols()
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one sample column; depends only on its identity, not on the
/// order in which columns are generated.
pub fn column_seed(seed: u64, center: usize, column: usize) -> u64 {
    splitmix(splitmix(seed ^ splitmix(center as u64)) ^ column as u64)
}

/// H1(region) Gram matrix `S^T (K + M) S` of nodal columns.
fn h1_gram(region: &FineRegion, s: &DMatrix<f64>) -> DMatrix<f64> {
    let q = assemble_unit_stiffness(region);
    let m = assemble_mass(region);
    let qs = q.mul_dense(s) + m.mul_dense(s);
    let g = s.transpose() * qs;
    (&g + g.transpose()) * 0.5
}

/// Samples the harmonic space of `sys` (built on `patch`).
pub fn sample_with_system(
    coarse: &CartesianMesh,
    patch: &Patch,
    sys: &PatchSystem,
    opts: &SamplingOptions,
) -> Result<HarmonicSampleMatrix> {
    if sys.gamma1.is_empty() {
        return Err(SlodError::GlobalPatch { center: patch.center });
    }
    let n = patch.len();
    let m = opts.multiplier.max(1) * n;
    let n1 = sys.gamma1.len();
    let mut boundary = DMatrix::zeros(n1, m);
    for c in 0..m {
        let mut rng = ChaCha8Rng::seed_from_u64(column_seed(opts.seed, patch.center, c));
        for r in 0..n1 {
            boundary[(r, c)] = StandardNormal.sample(&mut rng);
        }
    }
    let s = sys.extend_many(&boundary)?;
    let gram = h1_gram(&sys.region, &s);
    let scale = match opts.normalization {
        SampleNormalization::Orthonormal => inverse_sqrt(&gram),
        SampleNormalization::Column => {
            DMatrix::from_diagonal(&DVector::from_iterator(m, (0..m).map(|j| 1.0 / gram[(j, j)].sqrt())))
        }
    };
    let p = p0_projection_matrix(&sys.region, coarse, &patch.bounds) * coarse.element_volume().sqrt();
    let x = p * s * scale;
    Ok(HarmonicSampleMatrix {
        patch: patch.clone(),
        x,
    })
}

/// Builds the patch system and samples its harmonic space.
pub fn sample_harmonic_space(
    coarse: &CartesianMesh,
    patch: &Patch,
    coeff: &FineCoefficient,
    opts: &SamplingOptions,
) -> Result<HarmonicSampleMatrix> {
    let sys = PatchSystem::for_patch(coarse, patch, coeff)?;
    sample_with_system(coarse, patch, &sys, opts)
}

/// Symmetric pseudo inverse square root; eigenvalues below `1e-12` of the
/// largest are dropped.
fn inverse_sqrt(g: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(g.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
    let d = DVector::from_iterator(
        g.nrows(),
        eig.eigenvalues
            .iter()
            .map(|&v| if v > 1e-12 * max { 1.0 / v.sqrt() } else { 0.0 }),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Sources chosen on one patch.
#[derive(Clone, Debug)]
pub struct SourceSelection {
    pub patch: Patch,
    /// L2-normalized sources, in order of increasing singular value.
    pub g: Vec<P0Function>,
    /// Singular value belonging to each source.
    pub sigma: Vec<f64>,
    /// All singular values, increasing.
    pub full_spectrum: Vec<f64>,
}

impl SourceSelection {
    /// Largest selected singular value.
    pub fn sigma_t(&self) -> f64 {
        self.sigma.iter().copied().fold(0.0, f64::max)
    }
}

/// Singular values (increasing) and the matching left singular vectors.
fn ascending_svd(x: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = x.nrows();
    // Pad to at least square so that U has n columns.
    let padded = if x.ncols() < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (n, x.ncols())).copy_from(x);
        p
    } else {
        x.clone()
    };
    let svd = SVD::try_new(padded, true, false, f64::EPSILON, 0)
        .ok_or_else(|| SlodError::Eigen("SVD did not converge".into()))?;
    let u = svd.u.ok_or_else(|| SlodError::Eigen("SVD returned no left vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]).then(a.cmp(&b)));
    let sigma = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut sorted = DMatrix::zeros(n, order.len());
    for (k, &i) in order.iter().enumerate() {
        sorted.set_column(k, &u.column(i));
    }
    Ok((sigma, sorted))
}

/// Fixes the sign of a singular vector: the entry at `anchor` becomes
/// nonnegative, or if it vanishes the first nonzero entry becomes positive.
fn fix_sign(v: &mut [f64], anchor: usize) {
    let tol = 1e-12 * v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let pivot = if v[anchor].abs() > tol {
        v[anchor]
    } else {
        v.iter().copied().find(|x| x.abs() > tol).unwrap_or(0.0)
    };
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Keeps the `k` left singular vectors of `x` with the smallest singular
/// values. `anchor` is the patch-local index of the element used for the
/// sign convention.
pub fn select_sources(
    coarse: &CartesianMesh,
    x: &HarmonicSampleMatrix,
    k: usize,
    anchor: usize,
) -> Result<SourceSelection> {
    let n = x.n();
    if k == 0 || k > n {
        return Err(SlodError::Config(format!("cannot select {k} sources on a patch of {n} elements")));
    }
    let (sigma, u) = ascending_svd(&x.x)?;
    let mut g = Vec::with_capacity(k);
    for j in 0..k {
        let mut col: Vec<f64> = u.column(j).iter().copied().collect();
        fix_sign(&mut col, anchor);
        g.push(P0Function::from_orthonormal_coords(*coarse, x.patch.bounds, &col));
    }
    Ok(SourceSelection {
        patch: x.patch.clone(),
        g,
        sigma: sigma[..k].to_vec(),
        full_spectrum: sigma,
    })
}

/// The projection restricted to the harmonic space, built from the
/// extension of every boundary hat function rather than from samples.
#[derive(Clone, Debug)]
pub struct ExactHarmonicSpace {
    pub patch: Patch,
    mesh: CartesianMesh,
    /// H1-orthonormal basis of the harmonic space (rows: region nodes).
    pub basis: DMatrix<f64>,
    /// Projection of the basis in L2-orthonormal P0 coordinates, `N x dim Y`.
    pub operator: DMatrix<f64>,
    pub region: FineRegion,
}

impl ExactHarmonicSpace {
    pub fn new(coarse: &CartesianMesh, patch: &Patch, coeff: &FineCoefficient) -> Result<Self> {
        let sys = PatchSystem::for_patch(coarse, patch, coeff)?;
        Self::with_system(coarse, patch, &sys)
    }

    pub fn with_system(coarse: &CartesianMesh, patch: &Patch, sys: &PatchSystem) -> Result<Self> {
        if sys.gamma1.is_empty() {
            return Err(SlodError::GlobalPatch { center: patch.center });
        }
        let n1 = sys.gamma1.len();
        let e = sys.extend_many(&DMatrix::identity(n1, n1))?;
        let gram = h1_gram(&sys.region, &e);
        let chol = Cholesky::new(gram)
            .ok_or_else(|| SlodError::Solver("harmonic Gram matrix is not positive definite".into()))?;
        // basis = E L^{-T} = (L^{-1} E^T)^T
        let basis = chol
            .l()
            .solve_lower_triangular(&e.transpose())
            .ok_or_else(|| SlodError::Solver("singular Cholesky factor".into()))?
            .transpose();
        let p = p0_projection_matrix(&sys.region, coarse, &patch.bounds) * coarse.element_volume().sqrt();
        let operator = p * &basis;
        Ok(Self {
            patch: patch.clone(),
            mesh: *coarse,
            basis,
            operator,
            region: sys.region,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Singular values (increasing) and left singular vectors.
    pub fn svd(&self) -> Result<(Vec<f64>, DMatrix<f64>)> {
        ascending_svd(&self.operator)
    }

    /// `sup (g, v)` over harmonic `v` with unit H1 norm, for `g` supported
    /// on the patch.
    pub fn measure_sigma(&self, g: &P0Function) -> f64 {
        let coords: Vec<f64> = self.patch.bounds.coords().map(|c| g.at(self.mesh.element_index(c))).collect();
        let s = self.mesh.element_volume().sqrt();
        let gv = DVector::from_iterator(coords.len(), coords.iter().map(|v| v * s));
        (self.operator.transpose() * gv).norm()
    }
}

/// Convenience wrapper around [`ExactHarmonicSpace::measure_sigma`].
pub fn measure_sigma(coarse: &CartesianMesh, g: &P0Function, patch: &Patch, coeff: &FineCoefficient) -> Result<f64> {
    Ok(ExactHarmonicSpace::new(coarse, patch, coeff)?.measure_sigma(g))
}

/// Principal angles (radians, increasing) between the column spaces of two
/// matrices with orthonormal columns.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    // sin of the angles are the singular values of (I - B B^T) A.
    let r = a - b * (b.transpose() * a);
    let mut s: Vec<f64> = r.singular_values().iter().map(|v| v.clamp(0.0, 1.0).asin()).collect();
    s.sort_by(f64::total_cmp);
    s
}

/// Eigenpairs of the discrete Steklov problem on a patch.
#[derive(Clone, Debug)]
pub struct SteklovSpectrum {
    pub eigenvalues: Vec<f64>,
    /// Eigenfunctions extended harmonically into the patch.
    pub functions: Vec<FineFunction>,
}

/// Boundary mass matrix on the artificial boundary nodes.
fn gamma1_mass(sys: &PatchSystem) -> DMatrix<f64> {
    let n1 = sys.gamma1.len();
    let region = &sys.region;
    let mut pos = vec![usize::MAX; region.num_nodes()];
    for (k, &v) in sys.gamma1.iter().enumerate() {
        pos[v] = k;
    }
    let mut b = DMatrix::zeros(n1, n1);
    if region.dim() == 1 {
        for k in 0..n1 {
            b[(k, k)] = 1.0;
        }
        return b;
    }
    let h = region.mesh.size();
    let n = region.mesh.per_axis();
    let shape = region.node_shape();
    let lo = region.bounds.lo;
    let hi = [region.bounds.hi[0] + 1, region.bounds.hi[1] + 1];
    // Edges along each side of the box that is not part of the domain boundary.
    for axis in 0..2 {
        let other = 1 - axis;
        for side in [lo[axis], hi[axis]] {
            if side == 0 || side == n {
                continue;
            }
            for t in 0..shape[other] - 1 {
                let mut c0 = [0; 2];
                c0[axis] = side;
                c0[other] = lo[other] + t;
                let mut c1 = c0;
                c1[other] += 1;
                let ends = [region.local_node(c0).unwrap(), region.local_node(c1).unwrap()];
                let local = [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
                for i in 0..2 {
                    for j in 0..2 {
                        let (pi, pj) = (pos[ends[i]], pos[ends[j]]);
                        if pi != usize::MAX && pj != usize::MAX {
                            b[(pi, pj)] += local[i][j];
                        }
                    }
                }
            }
        }
    }
    b
}

/// Smallest `count` eigenpairs of `a(psi, v) = lambda (psi, v)_{Gamma1}`,
/// computed on the trace through the Dirichlet-to-Neumann matrix.
pub fn steklov_spectrum(
    coarse: &CartesianMesh,
    patch: &Patch,
    coeff: &FineCoefficient,
    count: usize,
) -> Result<SteklovSpectrum> {
    let sys = PatchSystem::for_patch(coarse, patch, coeff)?;
    if sys.gamma1.is_empty() {
        return Err(SlodError::GlobalPatch { center: patch.center });
    }
    let n1 = sys.gamma1.len();
    let e = sys.extend_many(&DMatrix::identity(n1, n1))?;
    let ke = sys.stiffness.mul_dense(&e);
    let dtn = e.transpose() * ke;
    let dtn = (&dtn + dtn.transpose()) * 0.5;
    let mass = gamma1_mass(&sys);
    let chol = Cholesky::new(mass).ok_or_else(|| SlodError::Eigen("boundary mass is singular".into()))?;
    let l = chol.l();
    let linv_d = l
        .solve_lower_triangular(&dtn)
        .ok_or_else(|| SlodError::Eigen("singular boundary mass factor".into()))?;
    let c = l
        .solve_lower_triangular(&linv_d.transpose())
        .ok_or_else(|| SlodError::Eigen("singular boundary mass factor".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(c, f64::EPSILON, 0)
        .ok_or_else(|| SlodError::Eigen("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n1).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lt = l.transpose();
    let mut eigenvalues = Vec::new();
    let mut functions = Vec::new();
    for &i in order.iter().take(count) {
        let y = eig.eigenvectors.column(i).clone_owned();
        let mut trace = lt
            .solve_upper_triangular(&y)
            .ok_or_else(|| SlodError::Eigen("singular boundary mass factor".into()))?;
        let mut tv: Vec<f64> = trace.iter().copied().collect();
        fix_sign(&mut tv, 0);
        trace.copy_from_slice(&tv);
        let values = &e * trace;
        eigenvalues.push(eig.eigenvalues[i]);
        functions.push(FineFunction::new(sys.region, values.iter().copied().collect()));
    }
    Ok(SteklovSpectrum { eigenvalues, functions })
}

/// `|psi|_{L2(N^r(T))} / |psi|_{L2(omega)}` with `r = floor(ell / 2)`.
pub fn interior_mass_ratio(coarse: &CartesianMesh, patch: &Patch, psi: &FineFunction) -> Result<f64> {
    let r = patch.ell / 2;
    let c = coarse.element_coords(patch.center);
    let inner = if r == 0 {
        ElementBox { lo: c, hi: c }
    } else {
        crate::mesh::patch(coarse, patch.center, r)?.bounds
    };
    let sub = FineRegion::of_coarse_box(coarse, &inner, psi.region.mesh);
    let vals = (0..sub.num_nodes()).map(|v| psi.at(sub.node_coords(v))).collect();
    let restricted = FineFunction::new(sub, vals);
    Ok(restricted.l2_norm() / psi.l2_norm())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Sources of the element patch `N^ell(T)` with default options; mostly
/// useful for inspection.
pub fn element_sources(
    coarse: &CartesianMesh,
    element: usize,
    ell: usize,
    coeff: &FineCoefficient,
    k: usize,
    opts: &SamplingOptions,
) -> Result<SourceSelection> {
    let p = patch(coarse, element, ell)?;
    let x = sample_harmonic_space(coarse, &p, coeff, opts)?;
    let anchor = p.local_index(coarse, element).unwrap();
    select_sources(coarse, &x, k, anchor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::CoefficientField;
    use crate::mesh::{group_patches, GroupingRule};

    fn unit(dim: usize, level: u32) -> FineCoefficient {
        let m = CartesianMesh::new(dim, level).unwrap();
        CoefficientField::constant(dim, 1.0).unwrap().eval_on_fine(&m).unwrap()
    }

    #[test]
    fn one_dimensional_interior_patch() {
        let coarse = CartesianMesh::new(1, 3).unwrap();
        let coeff = unit(1, 7);
        let p = patch(&coarse, 3, 1).unwrap();
        let x = sample_harmonic_space(&coarse, &p, &coeff, &SamplingOptions::default()).unwrap();
        assert_eq!((x.n(), x.m()), (3, 15));
        let sv = x.x.singular_values();
        let rank = sv.iter().filter(|&&s| s > 1e-10 * sv.max()).count();
        assert_eq!(rank, 2);
        let sel = select_sources(&coarse, &x, 1, 1).unwrap();
        assert!(sel.sigma[0] <= 1e-10);
        let g = sel.g[0].orthonormal_coords();
        let expect = [-1.0 / 6f64.sqrt(), 2.0 / 6f64.sqrt(), -1.0 / 6f64.sqrt()];
        for (a, b) in g.iter().zip(expect) {
            assert!((a - b).abs() < 1e-8, "{g:?}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let coarse = CartesianMesh::new(2, 3).unwrap();
        let a = CoefficientField::random_checkerboard(2, 4, 0.01, 1.0, 5).unwrap();
        let coeff = a.eval_on_fine(&coarse.refined(2).unwrap()).unwrap();
        let p = patch(&coarse, 0, 1).unwrap();
        let opts = SamplingOptions { seed: 9, ..Default::default() };
        let x1 = sample_harmonic_space(&coarse, &p, &coeff, &opts).unwrap();
        let x2 = sample_harmonic_space(&coarse, &p, &coeff, &opts).unwrap();
        assert_eq!(x1.x, x2.x);
        assert_ne!(column_seed(1, 2, 3), column_seed(1, 3, 2));
    }

    #[test]
    fn selection_invariants() {
        let coarse = CartesianMesh::new(2, 3).unwrap();
        let a = CoefficientField::random_checkerboard(2, 4, 0.01, 1.0, 5).unwrap();
        let coeff = a.eval_on_fine(&coarse.refined(3).unwrap()).unwrap();
        let p = patch(&coarse, coarse.element_index([3, 3]), 1).unwrap();
        let x = sample_harmonic_space(&coarse, &p, &coeff, &SamplingOptions::default()).unwrap();
        let svd = x.x.clone().svd(true, true);
        let recon = svd.recompose().unwrap();
        assert!((recon - &x.x).norm() <= 1e-10 * x.x.norm());
        let full = select_sources(&coarse, &x, 9, 4).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                let gi = full.g[i].orthonormal_coords();
                let gj = full.g[j].orthonormal_coords();
                let d: f64 = gi.iter().zip(&gj).map(|(a, b)| a * b).sum();
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
            assert!((full.g[i].l2_norm() - 1.0).abs() < 1e-12);
        }
        assert!(full.sigma.windows(2).all(|w| w[0] <= w[1]));
        assert!(select_sources(&coarse, &x, 10, 4).is_err());
    }

    #[test]
    fn oracle_agrees_with_sampling_and_beats_indicator() {
        let coarse = CartesianMesh::new(2, 3).unwrap();
        let coeff = unit(2, 5);
        let p = patch(&coarse, coarse.element_index([4, 3]), 1).unwrap();
        let exact = ExactHarmonicSpace::new(&coarse, &p, &coeff).unwrap();
        let (sig, u) = exact.svd().unwrap();
        let largest = u.column(sig.len() - 1).iter().copied().collect::<Vec<_>>();
        let g_big = P0Function::from_orthonormal_coords(coarse, p.bounds, &largest);
        assert!((exact.measure_sigma(&g_big) - sig[sig.len() - 1]).abs() < 1e-10);
        let x = sample_harmonic_space(&coarse, &p, &coeff, &SamplingOptions::default()).unwrap();
        let sel = select_sources(&coarse, &x, 1, 4).unwrap();
        let s_slod = exact.measure_sigma(&sel.g[0]);
        let mut ind = vec![0.0; 9];
        ind[4] = 1.0;
        let g_ind = P0Function::from_orthonormal_coords(coarse, p.bounds, &ind);
        assert!(exact.measure_sigma(&g_ind) > s_slod);
    }

    #[test]
    fn oracle_basis_is_h1_orthonormal_and_matches_full_sampling() {
        let coarse = CartesianMesh::new(2, 3).unwrap();
        let a = CoefficientField::random_checkerboard(2, 4, 0.01, 1.0, 5).unwrap();
        let coeff = a.eval_on_fine(&CartesianMesh::new(2, 5).unwrap()).unwrap();
        let p = patch(&coarse, coarse.element_index([4, 4]), 1).unwrap();
        let exact = ExactHarmonicSpace::new(&coarse, &p, &coeff).unwrap();
        let gram = h1_gram(&exact.region, &exact.basis);
        let dev = (gram - DMatrix::identity(exact.dim(), exact.dim())).amax();
        assert!(dev < 1e-10, "{dev}");
        // With more samples than the dimension of the harmonic space, the
        // sampled spectrum is the exact one.
        let opts = SamplingOptions { multiplier: 12, ..Default::default() };
        let x = sample_harmonic_space(&coarse, &p, &coeff, &opts).unwrap();
        assert!(x.m() > exact.dim());
        let (s_exact, _) = exact.svd().unwrap();
        let (s_sampled, _) = ascending_svd(&x.x).unwrap();
        for (a, b) in s_exact.iter().zip(&s_sampled) {
            assert!((a - b).abs() < 1e-10 * s_exact[s_exact.len() - 1], "{a} vs {b}");
        }
    }

    #[test]
    fn grouped_selection_counts() {
        let coarse = CartesianMesh::new(2, 3).unwrap();
        let coeff = unit(2, 5);
        let groups = group_patches(&coarse, 2, GroupingRule::BoundaryLayer).unwrap();
        let g = groups.iter().find(|g| g.members.contains(&0)).unwrap();
        let x = sample_harmonic_space(&coarse, &g.representative, &coeff, &SamplingOptions::default()).unwrap();
        let sel = select_sources(&coarse, &x, g.k(), 0).unwrap();
        assert_eq!(sel.g.len(), g.k());
        assert!(sel.sigma_t() >= sel.sigma[0]);
    }

    #[test]
    fn steklov_interior_patch() {
        let coarse = CartesianMesh::new(2, 3).unwrap();
        let coeff = unit(2, 5);
        let p = patch(&coarse, coarse.element_index([4, 4]), 2).unwrap();
        let s = steklov_spectrum(&coarse, &p, &coeff, 10).unwrap();
        assert!(s.eigenvalues[0].abs() < 1e-9);
        assert!(s.eigenvalues.iter().all(|&l| l >= -1e-10));
        assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        let first = &s.functions[0];
        let v0 = first.values[0];
        assert!(first.values.iter().all(|v| (v - v0).abs() < 1e-9));
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 4.0, 9.0, 16.0]) - 1.0).abs() < 1e-15);
        assert_eq!(ranks(&[2.0, 1.0, 2.0]), vec![2.5, 1.0, 2.5]);
    }
}
