//! Uniform Cartesian meshes of the unit cube, element patches and the
//! grouping of nested boundary patches.
//!
//! Elements and nodes are numbered lexicographically with axis 0 running
//! fastest. In one dimension the second multi-index component is always 0.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SlodError};

/// Largest supported refinement level.
pub const MAX_LEVEL: u32 = 12;

/// Uniform mesh of `(0,1)^d` with `2^level` elements per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CartesianMesh {
    dim: usize,
    level: u32,
}

impl CartesianMesh {
    pub fn new(dim: usize, level: u32) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(SlodError::Config(format!(
                "dimension must be 1 or 2, got {dim}"
            )));
        }
        if level > MAX_LEVEL {
            return Err(SlodError::Config(format!(
                "mesh level must be at most {MAX_LEVEL}, got {level}"
            )));
        }
        Ok(Self { dim, level })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Elements per axis.
    pub fn per_axis(&self) -> usize {
        1 << self.level
    }

    /// Number of elements along `axis` (1 for axes beyond the dimension).
    pub fn extent(&self, axis: usize) -> usize {
        if axis < self.dim {
            self.per_axis()
        } else {
            1
        }
    }

    /// Element side length `H = 2^-level`.
    pub fn size(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    /// Ratio of element diameter to inscribed ball diameter.
    pub fn shape_parameter(&self) -> f64 {
        (self.dim as f64).sqrt()
    }

    pub fn element_volume(&self) -> f64 {
        self.size().powi(self.dim as i32)
    }

    pub fn num_elements(&self) -> usize {
        self.per_axis().pow(self.dim as u32)
    }

    pub fn num_nodes(&self) -> usize {
        (self.per_axis() + 1).pow(self.dim as u32)
    }

    pub fn element_coords(&self, e: usize) -> [usize; 2] {
        let n = self.per_axis();
        if self.dim == 1 {
            [e, 0]
        } else {
            [e % n, e / n]
        }
    }

    pub fn element_index(&self, c: [usize; 2]) -> usize {
        c[0] + self.per_axis() * c[1]
    }

    pub fn node_coords(&self, v: usize) -> [usize; 2] {
        let n = self.per_axis() + 1;
        if self.dim == 1 {
            [v, 0]
        } else {
            [v % n, v / n]
        }
    }

    pub fn node_index(&self, c: [usize; 2]) -> usize {
        c[0] + (self.per_axis() + 1) * c[1]
    }

    /// Number of element layers between `e` and the domain boundary.
    pub fn distance_to_boundary(&self, e: usize) -> usize {
        let c = self.element_coords(e);
        let n = self.per_axis();
        (0..self.dim).map(|a| c[a].min(n - 1 - c[a])).min().unwrap_or(0)
    }

    /// The mesh obtained by `levels` uniform refinements.
    pub fn refined(&self, levels: u32) -> Result<Self> {
        Self::new(self.dim, self.level + levels)
    }

    /// Bounding box of the whole mesh.
    pub fn full_box(&self) -> ElementBox {
        ElementBox {
            lo: [0, 0],
            hi: [self.extent(0) - 1, self.extent(1) - 1],
        }
    }
}

/// Inclusive axis-aligned box of elements `lo..=hi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ElementBox {
    pub lo: [usize; 2],
    pub hi: [usize; 2],
}

impl ElementBox {
    pub fn shape(&self) -> [usize; 2] {
        [self.hi[0] - self.lo[0] + 1, self.hi[1] - self.lo[1] + 1]
    }

    pub fn len(&self) -> usize {
        let s = self.shape();
        s[0] * s[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, c: [usize; 2]) -> bool {
        (0..2).all(|a| self.lo[a] <= c[a] && c[a] <= self.hi[a])
    }

    pub fn contains_box(&self, other: &ElementBox) -> bool {
        (0..2).all(|a| self.lo[a] <= other.lo[a] && other.hi[a] <= self.hi[a])
    }

    pub fn intersection(&self, other: &ElementBox) -> Option<ElementBox> {
        let mut lo = [0; 2];
        let mut hi = [0; 2];
        for a in 0..2 {
            lo[a] = self.lo[a].max(other.lo[a]);
            hi[a] = self.hi[a].min(other.hi[a]);
            if lo[a] > hi[a] {
                return None;
            }
        }
        Some(ElementBox { lo, hi })
    }

    /// Position of the global coordinate `c` in the box's own lexicographic numbering.
    pub fn local_index(&self, c: [usize; 2]) -> usize {
        let s = self.shape();
        (c[0] - self.lo[0]) + s[0] * (c[1] - self.lo[1])
    }

    /// Global multi-indices in the box, axis 0 fastest.
    pub fn coords(&self) -> impl Iterator<Item = [usize; 2]> + '_ {
        (self.lo[1]..=self.hi[1])
            .flat_map(move |j| (self.lo[0]..=self.hi[0]).map(move |i| [i, j]))
    }

    /// The same region on a mesh refined by `ratio` per axis (in `dim` axes).
    pub fn refine(&self, ratio: usize, dim: usize) -> ElementBox {
        let mut lo = self.lo;
        let mut hi = self.hi;
        for a in 0..dim {
            lo[a] *= ratio;
            hi[a] = (hi[a] + 1) * ratio - 1;
        }
        ElementBox { lo, hi }
    }
}

/// The `ell`-th order element patch around `center`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patch {
    pub center: usize,
    pub ell: usize,
    pub bounds: ElementBox,
    /// Coarse elements in the patch, sorted by global index.
    pub elements: Vec<usize>,
    /// `on_domain[axis][side]`: whether the low (0) / high (1) face of the
    /// patch lies on the boundary of the domain.
    pub on_domain: [[bool; 2]; 2],
    dim: usize,
}

impl Patch {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// True when every face of the patch lies on the domain boundary, i.e.
    /// the patch is the whole domain and has no artificial boundary.
    pub fn is_global(&self) -> bool {
        (0..self.dim).all(|a| self.on_domain[a][0] && self.on_domain[a][1])
    }

    /// Index of a global coarse element within the patch's local numbering.
    pub fn local_index(&self, mesh: &CartesianMesh, e: usize) -> Option<usize> {
        let c = mesh.element_coords(e);
        self.bounds
            .contains(c)
            .then(|| self.bounds.local_index(c))
    }

    pub fn contains_patch(&self, other: &Patch) -> bool {
        self.bounds.contains_box(&other.bounds)
    }
}

/// Builds `N^ell(T)`: on a Cartesian mesh this is the box of Chebyshev
/// radius `ell` around `T`, clipped to the domain.
pub fn patch(mesh: &CartesianMesh, center: usize, ell: usize) -> Result<Patch> {
    if ell == 0 {
        return Err(SlodError::Config("oversampling parameter must be >= 1".into()));
    }
    if center >= mesh.num_elements() {
        return Err(SlodError::Config(format!(
            "element {center} out of range for mesh with {} elements",
            mesh.num_elements()
        )));
    }
    let c = mesh.element_coords(center);
    let mut lo = [0; 2];
    let mut hi = [0; 2];
    let mut on_domain = [[true; 2]; 2];
    for a in 0..mesh.dim() {
        let n = mesh.per_axis();
        lo[a] = c[a].saturating_sub(ell);
        hi[a] = (c[a] + ell).min(n - 1);
        on_domain[a] = [lo[a] == 0, hi[a] == n - 1];
    }
    let bounds = ElementBox { lo, hi };
    let mut elements: Vec<usize> = bounds.coords().map(|c| mesh.element_index(c)).collect();
    elements.sort_unstable();
    Ok(Patch {
        center,
        ell,
        bounds,
        elements,
        on_domain,
        dim: mesh.dim(),
    })
}

/// How patches near the domain boundary are grouped.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupingRule {
    /// Every patch that reaches the domain boundary is grouped: elements at
    /// distance `ell` are representatives, closer elements join the nearest
    /// representative and only patches strictly inside the domain stand alone.
    #[default]
    BoundaryLayer,
    /// Representatives at distance `ell - 1`; elements at distance `>= ell`
    /// stand alone even if their patch reaches the boundary. Patches of those
    /// elements contain the corner patches and tend to reproduce the corner
    /// sources, so this rule can yield a numerically dependent basis.
    InnerLayer,
}

/// Patches whose sources are computed together on the representative patch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGroup {
    pub representative: Patch,
    /// Coarse elements of the group, sorted ascending.
    pub members: Vec<usize>,
    /// The representative patch is the whole domain.
    pub global: bool,
}

impl PatchGroup {
    pub fn k(&self) -> usize {
        self.members.len()
    }
}

/// Partitions the coarse elements into patch groups.
///
/// Groups are returned sorted by representative element index. If every
/// patch equals the domain a single global group holding all elements is
/// returned.
pub fn group_patches(mesh: &CartesianMesh, ell: usize, rule: GroupingRule) -> Result<Vec<PatchGroup>> {
    let all_global = (0..mesh.num_elements())
        .map(|e| patch(mesh, e, ell).map(|p| p.is_global()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .all(|g| g);
    if all_global {
        return Ok(vec![PatchGroup {
            representative: patch(mesh, 0, ell)?,
            members: (0..mesh.num_elements()).collect(),
            global: true,
        }]);
    }

    let n = mesh.per_axis();
    let max_dist = (n - 1) / 2;
    let rep_dist = match rule {
        GroupingRule::BoundaryLayer => ell,
        GroupingRule::InnerLayer => ell - 1,
    }
    .min(max_dist);

    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut slot = vec![usize::MAX; mesh.num_elements()];
    for e in 0..mesh.num_elements() {
        if mesh.distance_to_boundary(e) >= rep_dist {
            slot[e] = groups.len();
            groups.push((e, vec![e]));
        }
    }
    for e in 0..mesh.num_elements() {
        if mesh.distance_to_boundary(e) < rep_dist {
            let mut c = mesh.element_coords(e);
            for a in 0..mesh.dim() {
                c[a] = c[a].clamp(rep_dist, n - 1 - rep_dist);
            }
            let rep = mesh.element_index(c);
            debug_assert_eq!(mesh.distance_to_boundary(rep), rep_dist);
            groups[slot[rep]].1.push(e);
        }
    }

    groups
        .into_iter()
        .map(|(rep, mut members)| {
            members.sort_unstable();
            let representative = patch(mesh, rep, ell)?;
            let global = representative.is_global();
            Ok(PatchGroup {
                representative,
                members,
                global,
            })
        })
        .collect()
}
