use crate::mesh::{CartesianMesh, ElementBox, Patch};

/// A box of fine elements together with its nodes, numbered
/// lexicographically within the box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FineRegion {
    pub mesh: CartesianMesh,
    pub bounds: ElementBox,
}

impl FineRegion {
    pub fn whole(mesh: CartesianMesh) -> Self {
        Self {
            mesh,
            bounds: mesh.full_box(),
        }
    }

    /// The fine-grid region covering a coarse patch.
    pub fn of_patch(coarse: &CartesianMesh, patch: &Patch, fine: CartesianMesh) -> Self {
        Self::of_coarse_box(coarse, &patch.bounds, fine)
    }

    pub fn of_coarse_box(coarse: &CartesianMesh, b: &ElementBox, fine: CartesianMesh) -> Self {
        assert!(fine.level() >= coarse.level() && fine.dim() == coarse.dim());
        let ratio = 1usize << (fine.level() - coarse.level());
        Self {
            mesh: fine,
            bounds: b.refine(ratio, coarse.dim()),
        }
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    /// Nodes per axis.
    pub fn node_shape(&self) -> [usize; 2] {
        let s = self.bounds.shape();
        let mut out = [1, 1];
        for a in 0..self.dim() {
            out[a] = s[a] + 1;
        }
        out
    }

    pub fn num_nodes(&self) -> usize {
        let s = self.node_shape();
        s[0] * s[1]
    }

    pub fn num_elements(&self) -> usize {
        self.bounds.len()
    }

    /// Global fine node multi-index of a local node.
    pub fn node_coords(&self, v: usize) -> [usize; 2] {
        let s = self.node_shape();
        [self.bounds.lo[0] + v % s[0], self.bounds.lo[1] + v / s[0]]
    }

    pub fn local_node(&self, c: [usize; 2]) -> Option<usize> {
        let s = self.node_shape();
        let mut l = [0; 2];
        for a in 0..2 {
            let rel = c[a].checked_sub(self.bounds.lo[a])?;
            if rel >= s[a] {
                return None;
            }
            l[a] = rel;
        }
        Some(l[0] + s[0] * l[1])
    }

    pub fn node_position(&self, v: usize) -> [f64; 2] {
        let h = self.mesh.size();
        let c = self.node_coords(v);
        let mut x = [0.0; 2];
        for a in 0..self.dim() {
            x[a] = c[a] as f64 * h;
        }
        x
    }

    /// Node lies on the boundary of the region.
    pub fn on_region_boundary(&self, v: usize) -> bool {
        let c = self.node_coords(v);
        (0..self.dim()).any(|a| c[a] == self.bounds.lo[a] || c[a] == self.bounds.hi[a] + 1)
    }

    /// Node lies on the boundary of the unit cube.
    pub fn on_domain_boundary(&self, v: usize) -> bool {
        let c = self.node_coords(v);
        let n = self.mesh.per_axis();
        (0..self.dim()).any(|a| c[a] == 0 || c[a] == n)
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&v| !self.on_region_boundary(v))
            .collect()
    }

    /// Local node indices of the corners of a fine element given by its
    /// global multi-index, ordered lexicographically (axis 0 fastest).
    pub fn element_nodes(&self, c: [usize; 2]) -> [usize; 4] {
        let s = self.node_shape();
        let base = (c[0] - self.bounds.lo[0]) + s[0] * (c[1] - self.bounds.lo[1]);
        if self.dim() == 1 {
            [base, base + 1, usize::MAX, usize::MAX]
        } else {
            [base, base + 1, base + s[0], base + s[0] + 1]
        }
    }

    pub fn nodes_per_element(&self) -> usize {
        1 << self.dim()
    }

    /// Maps this region's nodal values onto `other`, which must contain it.
    pub fn embed(&self, other: &FineRegion, values: &[f64], out: &mut [f64], scale: f64) {
        debug_assert!(other.bounds.contains_box(&self.bounds));
        let s = self.node_shape();
        let so = other.node_shape();
        let off = [self.bounds.lo[0] - other.bounds.lo[0], self.bounds.lo[1] - other.bounds.lo[1]];
        for j in 0..s[1] {
            for i in 0..s[0] {
                out[(off[0] + i) + so[0] * (off[1] + j)] += scale * values[i + s[0] * j];
            }
        }
    }
}
