//! Taylor–Hood P2–P1 degree-of-freedom maps.

use super::mesh::{BoundaryTag, Mesh};

/// Velocity dofs are numbered `component · n_vnodes + node`; pressure dofs
/// coincide with mesh vertices.
#[derive(Debug, Clone)]
pub struct TaylorHoodSpace {
    /// Half-grid index of each P2 node.
    vnode_grid: Vec<(usize, usize)>,
    vnode_tag: Vec<Option<BoundaryTag>>,
    /// Six P2 nodes per triangle, local order of [`super::fem`].
    elem_vnodes: Vec<[usize; 6]>,
    dirichlet: Vec<bool>,
    free_to_full: Vec<usize>,
    full_to_free: Vec<Option<usize>>,
    n_p: usize,
    lookup_width: usize,
    lookup: Vec<usize>,
}

impl TaylorHoodSpace {
    pub fn new(mesh: &Mesh) -> Self {
        let (nx, ny) = mesh.grid_cells();
        let width = 2 * nx + 1;
        let mut lookup = vec![usize::MAX; width * (2 * ny + 1)];
        let mut vnode_grid = Vec::new();
        let vg = mesh.vertex_grid();
        let mut elem_vnodes = Vec::with_capacity(mesh.triangles().len());
        // Number nodes row by row for a banded-ish ordering.
        let mut nodes_needed: Vec<(usize, usize)> = Vec::new();
        for t in mesh.triangles() {
            let g = [vg[t[0]], vg[t[1]], vg[t[2]]];
            nodes_needed.extend(g);
            for (a, b) in super::fem::P2_EDGES {
                nodes_needed.push(((g[a].0 + g[b].0) / 2, (g[a].1 + g[b].1) / 2));
            }
        }
        let mut sorted = nodes_needed.clone();
        sorted.sort_unstable_by_key(|&(i, j)| (j, i));
        sorted.dedup();
        for (i, j) in sorted {
            lookup[j * width + i] = vnode_grid.len();
            vnode_grid.push((i, j));
        }
        for chunk in nodes_needed.chunks(6) {
            let mut e = [0usize; 6];
            for (k, &(i, j)) in chunk.iter().enumerate() {
                e[k] = lookup[j * width + i];
            }
            elem_vnodes.push(e);
        }

        let (i0, i1, j1) = mesh.obstacle_cells();
        let vnode_tag: Vec<Option<BoundaryTag>> = vnode_grid
            .iter()
            .map(|&(i, j)| {
                if i == 0 {
                    Some(BoundaryTag::Inflow)
                } else if j == 0 || j == 2 * ny {
                    Some(BoundaryTag::Wall)
                } else if 2 * i0 <= i && i <= 2 * i1 && j <= 2 * j1 {
                    Some(BoundaryTag::Obstacle)
                } else if i == 2 * nx {
                    Some(BoundaryTag::Outflow)
                } else {
                    None
                }
            })
            .collect();
        let n_v = vnode_grid.len();
        let mut dirichlet = vec![false; 2 * n_v];
        for (k, tag) in vnode_tag.iter().enumerate() {
            if matches!(tag, Some(BoundaryTag::Inflow | BoundaryTag::Wall | BoundaryTag::Obstacle)) {
                dirichlet[k] = true;
                dirichlet[n_v + k] = true;
            }
        }
        let mut free_to_full = Vec::new();
        let mut full_to_free = vec![None; 2 * n_v];
        for (d, &fixed) in dirichlet.iter().enumerate() {
            if !fixed {
                full_to_free[d] = Some(free_to_full.len());
                free_to_full.push(d);
            }
        }
        Self {
            vnode_grid,
            vnode_tag,
            elem_vnodes,
            dirichlet,
            free_to_full,
            full_to_free,
            n_p: mesh.n_vertices(),
            lookup_width: width,
            lookup,
        }
    }

    pub fn n_vnodes(&self) -> usize {
        self.vnode_grid.len()
    }

    /// All velocity dofs, Dirichlet ones included.
    pub fn n_u_full(&self) -> usize {
        2 * self.vnode_grid.len()
    }

    /// Free velocity dofs (`N_X` of the truth space).
    pub fn n_u(&self) -> usize {
        self.free_to_full.len()
    }

    /// Pressure dofs (`N_Y` of the truth space).
    pub fn n_p(&self) -> usize {
        self.n_p
    }

    /// Total truth dimension `N_X + N_Y`.
    pub fn n_total(&self) -> usize {
        self.n_u() + self.n_p
    }

    pub fn vnode_grid(&self) -> &[(usize, usize)] {
        &self.vnode_grid
    }

    pub fn vnode_tag(&self) -> &[Option<BoundaryTag>] {
        &self.vnode_tag
    }

    pub fn elem_vnodes(&self) -> &[[usize; 6]] {
        &self.elem_vnodes
    }

    pub fn dirichlet(&self) -> &[bool] {
        &self.dirichlet
    }

    pub fn free_to_full(&self) -> &[usize] {
        &self.free_to_full
    }

    pub fn full_to_free(&self) -> &[Option<usize>] {
        &self.full_to_free
    }

    /// P2 node at half-grid position `(I, J)`.
    pub fn vnode_at(&self, g: (usize, usize)) -> Option<usize> {
        let k = self.lookup[g.1 * self.lookup_width + g.0];
        (k != usize::MAX).then_some(k)
    }

    /// Free coefficients → full velocity vector with the given Dirichlet values.
    pub fn expand(&self, free: &[f64], dirichlet_values: &[f64]) -> Vec<f64> {
        let mut full = dirichlet_values.to_vec();
        for (k, &d) in self.free_to_full.iter().enumerate() {
            full[d] = free[k];
        }
        full
    }

    /// Full velocity vector → free coefficients.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free_to_full.iter().map(|&d| full[d]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stokes::mesh::Geometry;

    #[test]
    fn counts_match_grid() {
        let mesh = Mesh::build(&Geometry::default()).unwrap();
        let s = TaylorHoodSpace::new(&mesh);
        // half-grid 101 × 21 minus the 15 × 8 nodes inside or under the obstacle
        assert_eq!(s.n_vnodes(), 101 * 21 - 15 * 8);
        assert_eq!(s.n_p(), 51 * 11 - 7 * 4);
        assert_eq!(s.n_total(), s.n_u() + s.n_p());
        assert!(s.elem_vnodes().iter().flatten().all(|&k| k < s.n_vnodes()));
    }
}
