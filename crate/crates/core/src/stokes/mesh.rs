//! Structured triangulation of the microchannel with a rectangular obstacle.
//!
//! The channel `(0, L) × (0, H)` is cut by the vertical lines
//! `x = left_break`, `x = c − µ₁`, `x = c + µ₁`, `x = right_break` and the
//! horizontal line `y = µ₂` into a 5 × 2 array of rectangles; the one over
//! `[c − µ₁, c + µ₁] × [0, µ₂]` is the obstacle and is removed. Every
//! remaining rectangle is a subdomain on which the map from the reference
//! configuration `µ̄` is a diagonal affine stretch.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::affine::{ParameterDomain, ThetaExpr};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Geometry {
    pub length: f64,
    pub height: f64,
    pub obstacle_center: f64,
    pub left_break: f64,
    pub right_break: f64,
    pub mu_lower: [f64; 2],
    pub mu_upper: [f64; 2],
    pub reference_mu: [f64; 2],
    /// Target cell size at refinement 0.
    pub base_h: f64,
    /// Each level halves the cell size.
    pub refinement: u32,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            length: 5.0,
            height: 1.0,
            obstacle_center: 1.5,
            left_break: 0.5,
            right_break: 2.5,
            mu_lower: [0.2, 0.2],
            mu_upper: [0.6, 0.6],
            reference_mu: [0.4, 0.4],
            base_h: 0.1,
            refinement: 0,
        }
    }
}

impl Geometry {
    pub fn domain(&self) -> Result<ParameterDomain> {
        ParameterDomain::new(self.mu_lower.to_vec(), self.mu_upper.to_vec())
    }

    /// Rejects configurations in which the obstacle touches a wall or a
    /// fixed break line for the reference parameter or anywhere in the box.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidGeometry(msg));
        if !(self.length > 0.0 && self.height > 0.0 && self.base_h > 0.0) {
            return bad("length, height and base_h must be positive".into());
        }
        if !(0.0 < self.left_break
            && self.left_break < self.obstacle_center
            && self.obstacle_center < self.right_break
            && self.right_break < self.length)
        {
            return bad("need 0 < left_break < obstacle_center < right_break < length".into());
        }
        if self.refinement > 6 {
            return bad(format!("refinement {} is too large", self.refinement));
        }
        self.domain().map_err(|e| Error::InvalidGeometry(e.to_string()))?;
        let mut probes = vec![self.reference_mu];
        for a in [self.mu_lower[0], self.mu_upper[0]] {
            for b in [self.mu_lower[1], self.mu_upper[1]] {
                probes.push([a, b]);
            }
        }
        for mu in probes {
            let [half, h] = mu;
            if !(half > 0.0 && h > 0.0) {
                return bad(format!("obstacle size {mu:?} must be positive"));
            }
            if h >= self.height {
                return bad(format!("obstacle height {h} reaches the top wall {}", self.height));
            }
            if self.obstacle_center - half <= self.left_break || self.obstacle_center + half >= self.right_break {
                return bad(format!("obstacle half-width {half} crosses a fixed break line"));
            }
        }
        Ok(())
    }

    /// Vertical break lines as affine forms `(c₀, [c₁, c₂])` in µ.
    fn x_breaks(&self) -> [(f64, [f64; 2]); 6] {
        let c = self.obstacle_center;
        [
            (0.0, [0.0, 0.0]),
            (self.left_break, [0.0, 0.0]),
            (c, [-1.0, 0.0]),
            (c, [1.0, 0.0]),
            (self.right_break, [0.0, 0.0]),
            (self.length, [0.0, 0.0]),
        ]
    }

    fn y_breaks(&self) -> [(f64, [f64; 2]); 3] {
        [(0.0, [0.0, 0.0]), (0.0, [0.0, 1.0]), (self.height, [0.0, 0.0])]
    }
}

type AffineForm = (f64, [f64; 2]);

fn diff(a: AffineForm, b: AffineForm) -> AffineForm {
    (a.0 - b.0, [a.1[0] - b.1[0], a.1[1] - b.1[1]])
}

fn eval_form(f: AffineForm, mu: &[f64]) -> f64 {
    f.0 + f.1[0] * mu[0] + f.1[1] * mu[1]
}

/// One direction of the tensor grid: segments between break lines.
#[derive(Debug, Clone)]
struct Axis {
    breaks: Vec<AffineForm>,
    widths: Vec<AffineForm>,
    ref_widths: Vec<f64>,
    cells: Vec<usize>,
    /// Segment index and local half-step of every half-grid line.
    lines: Vec<(usize, usize)>,
}

impl Axis {
    fn new(breaks: &[AffineForm], reference: &[f64], base_h: f64, level: u32) -> Self {
        let widths: Vec<AffineForm> = breaks.windows(2).map(|w| diff(w[1], w[0])).collect();
        let ref_widths: Vec<f64> = widths.iter().map(|&w| eval_form(w, reference)).collect();
        let cells: Vec<usize> =
            ref_widths.iter().map(|w| ((w / base_h).round() as usize).max(1) << level).collect();
        let mut lines = vec![(0, 0)];
        for (s, &n) in cells.iter().enumerate() {
            for k in 1..=2 * n {
                lines.push((s, k));
            }
        }
        Self { breaks: breaks.to_vec(), widths, ref_widths, cells, lines }
    }

    fn n_cells(&self) -> usize {
        self.cells.iter().sum()
    }

    fn coord(&self, line: usize, mu: &[f64]) -> f64 {
        let (s, k) = self.lines[line];
        let w = eval_form(self.widths[s], mu);
        eval_form(self.breaks[s], mu) + w * (k as f64) / (2 * self.cells[s]) as f64
    }

    /// Segment containing cell `i`.
    fn segment_of_cell(&self, i: usize) -> usize {
        self.lines[2 * i + 1].0
    }

    /// First cell index of segment `s`.
    fn first_cell(&self, s: usize) -> usize {
        self.cells[..s].iter().sum()
    }

    /// `w_s(µ) / w_s(µ̄)` as an affine expression.
    fn scale_expr(&self, s: usize) -> ThetaExpr {
        let (c0, c) = self.widths[s];
        let r = self.ref_widths[s];
        ThetaExpr::affine(c0 / r, &[c[0] / r, c[1] / r])
    }

    fn scale(&self, s: usize, mu: &[f64]) -> f64 {
        eval_form(self.widths[s], mu) / self.ref_widths[s]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryTag {
    Inflow,
    Outflow,
    Wall,
    Obstacle,
}

impl BoundaryTag {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryTag::Inflow => "inflow",
            BoundaryTag::Outflow => "outflow",
            BoundaryTag::Wall => "wall",
            BoundaryTag::Obstacle => "obstacle",
        }
    }
}

/// Triangulated reference configuration.
#[derive(Debug, Clone)]
pub struct Mesh {
    geometry: Geometry,
    ax: Axis,
    ay: Axis,
    /// Obstacle cells: `i0 ≤ i < i1`, `j < j1`.
    obstacle: (usize, usize, usize),
    /// (column segment, row segment) of each subdomain.
    subdomains: Vec<(usize, usize)>,
    /// Half-grid index of each P1 vertex.
    vertex_grid: Vec<(usize, usize)>,
    triangles: Vec<[usize; 3]>,
    tri_subdomain: Vec<usize>,
    boundary_edges: Vec<([usize; 2], BoundaryTag)>,
}

impl Mesh {
    pub fn build(geometry: &Geometry) -> Result<Self> {
        geometry.validate()?;
        let reference = geometry.reference_mu;
        let ax = Axis::new(&geometry.x_breaks(), &reference, geometry.base_h, geometry.refinement);
        let ay = Axis::new(&geometry.y_breaks(), &reference, geometry.base_h, geometry.refinement);
        let (nx, ny) = (ax.n_cells(), ay.n_cells());
        let obstacle = (ax.first_cell(2), ax.first_cell(3), ay.first_cell(1));

        let mut subdomains = Vec::new();
        for r in 0..2 {
            for c in 0..5 {
                if (c, r) != (2, 0) {
                    subdomains.push((c, r));
                }
            }
        }
        let cell_active = |i: usize, j: usize| !(obstacle.0 <= i && i < obstacle.1 && j < obstacle.2);

        let mut vid = vec![usize::MAX; (nx + 1) * (ny + 1)];
        let mut vertex_grid = Vec::new();
        for j in 0..=ny {
            for i in 0..=nx {
                let touches = [(i.wrapping_sub(1), j.wrapping_sub(1)), (i, j.wrapping_sub(1)), (i.wrapping_sub(1), j), (i, j)]
                    .iter()
                    .any(|&(a, b)| a < nx && b < ny && cell_active(a, b));
                if touches {
                    vid[j * (nx + 1) + i] = vertex_grid.len();
                    vertex_grid.push((2 * i, 2 * j));
                }
            }
        }
        let v = |i: usize, j: usize| vid[j * (nx + 1) + i];

        let mut triangles = Vec::new();
        let mut tri_subdomain = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                if !cell_active(i, j) {
                    continue;
                }
                let seg = (ax.segment_of_cell(i), ay.segment_of_cell(j));
                let sd = subdomains.iter().position(|&s| s == seg).expect("active cell in a subdomain");
                triangles.push([v(i, j), v(i + 1, j), v(i + 1, j + 1)]);
                triangles.push([v(i, j), v(i + 1, j + 1), v(i, j + 1)]);
                tri_subdomain.extend([sd, sd]);
            }
        }

        let mut boundary_edges = Vec::new();
        for i in 0..nx {
            if cell_active(i, 0) {
                boundary_edges.push(([v(i, 0), v(i + 1, 0)], BoundaryTag::Wall));
            }
            boundary_edges.push(([v(i + 1, ny), v(i, ny)], BoundaryTag::Wall));
        }
        for j in 0..ny {
            boundary_edges.push(([v(0, j + 1), v(0, j)], BoundaryTag::Inflow));
            boundary_edges.push(([v(nx, j), v(nx, j + 1)], BoundaryTag::Outflow));
        }
        let (i0, i1, j1) = obstacle;
        for j in 0..j1 {
            boundary_edges.push(([v(i0, j), v(i0, j + 1)], BoundaryTag::Obstacle));
            boundary_edges.push(([v(i1, j + 1), v(i1, j)], BoundaryTag::Obstacle));
        }
        for i in i0..i1 {
            boundary_edges.push(([v(i, j1), v(i + 1, j1)], BoundaryTag::Obstacle));
        }

        Ok(Self {
            geometry: geometry.clone(),
            ax,
            ay,
            obstacle,
            subdomains,
            vertex_grid,
            triangles,
            tri_subdomain,
            boundary_edges,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    /// Number of cells in x and y.
    pub fn grid_cells(&self) -> (usize, usize) {
        (self.ax.n_cells(), self.ay.n_cells())
    }

    /// Obstacle cell range `(i0, i1, j1)`.
    pub fn obstacle_cells(&self) -> (usize, usize, usize) {
        self.obstacle
    }

    pub fn n_vertices(&self) -> usize {
        self.vertex_grid.len()
    }

    pub fn n_subdomains(&self) -> usize {
        self.subdomains.len()
    }

    pub fn vertex_grid(&self) -> &[(usize, usize)] {
        &self.vertex_grid
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn tri_subdomain(&self) -> &[usize] {
        &self.tri_subdomain
    }

    pub fn boundary_edges(&self) -> &[([usize; 2], BoundaryTag)] {
        &self.boundary_edges
    }

    /// Physical coordinates of half-grid node `(I, J)` at `µ`.
    pub fn grid_point(&self, g: (usize, usize), mu: &[f64]) -> [f64; 2] {
        [self.ax.coord(g.0, mu), self.ay.coord(g.1, mu)]
    }

    pub fn reference_mu(&self) -> [f64; 2] {
        self.geometry.reference_mu
    }

    pub fn vertex_coords(&self, mu: &[f64]) -> Vec<[f64; 2]> {
        self.vertex_grid.iter().map(|&g| self.grid_point(g, mu)).collect()
    }

    /// Stretch factors `(s_x, s_y)` of subdomain `sd` at `µ`.
    pub fn subdomain_scales(&self, sd: usize, mu: &[f64]) -> (f64, f64) {
        let (c, r) = self.subdomains[sd];
        (self.ax.scale(c, mu), self.ay.scale(r, mu))
    }

    /// Stretch factors of subdomain `sd` as expressions in µ.
    pub fn subdomain_scale_exprs(&self, sd: usize) -> (ThetaExpr, ThetaExpr) {
        let (c, r) = self.subdomains[sd];
        (self.ax.scale_expr(c), self.ay.scale_expr(r))
    }

    /// (column, row) position of subdomain `sd` in the 5 × 2 block layout.
    pub fn subdomain_block(&self, sd: usize) -> (usize, usize) {
        self.subdomains[sd]
    }

    /// SHA-256 of the reference triangulation (coordinates and connectivity).
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for p in self.vertex_coords(&self.geometry.reference_mu) {
            h.update(p[0].to_le_bytes());
            h.update(p[1].to_le_bytes());
        }
        for (t, sd) in self.triangles.iter().zip(&self.tri_subdomain) {
            for &v in t {
                h.update((v as u64).to_le_bytes());
            }
            h.update((*sd as u64).to_le_bytes());
        }
        h.finalize().iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Plain-text dump of the mesh mapped to `µ`:
    ///
    /// ```text
    /// mesh 1
    /// vertices <n>
    /// <x> <y>            (n lines)
    /// triangles <m>
    /// <a> <b> <c> <sd>   (m lines, 0-based, counter-clockwise)
    /// edges <k>
    /// <a> <b> <tag>      (k lines)
    /// ```
    pub fn export_text(&self, mu: &[f64]) -> String {
        let mut s = String::new();
        let coords = self.vertex_coords(mu);
        let _ = writeln!(s, "mesh 1");
        let _ = writeln!(s, "vertices {}", coords.len());
        for p in &coords {
            let _ = writeln!(s, "{:.12} {:.12}", p[0], p[1]);
        }
        let _ = writeln!(s, "triangles {}", self.triangles.len());
        for (t, sd) in self.triangles.iter().zip(&self.tri_subdomain) {
            let _ = writeln!(s, "{} {} {} {}", t[0], t[1], t[2], sd);
        }
        let _ = writeln!(s, "edges {}", self.boundary_edges.len());
        for (e, tag) in &self.boundary_edges {
            let _ = writeln!(s, "{} {} {}", e[0], e[1], tag.name());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stokes::fem::signed_area;

    #[test]
    fn default_layout() {
        let m = Mesh::build(&Geometry::default()).unwrap();
        assert_eq!(m.n_subdomains(), 9);
        assert_eq!(m.grid_cells(), (50, 10));
        assert_eq!(m.obstacle_cells(), (11, 19, 4));
        assert_eq!(m.triangles().len(), 2 * (500 - 32));
    }

    #[test]
    fn triangles_stay_positive_across_domain() {
        let g = Geometry::default();
        let m = Mesh::build(&g).unwrap();
        for mu in [[0.2, 0.2], [0.6, 0.6], [0.2, 0.6], [0.6, 0.2], [0.4, 0.4]] {
            let xy = m.vertex_coords(&mu);
            for t in m.triangles() {
                assert!(signed_area(&[xy[t[0]], xy[t[1]], xy[t[2]]]) > 0.0);
            }
        }
    }

    #[test]
    fn obstacle_reaching_the_lid_is_rejected() {
        let g = Geometry { reference_mu: [0.4, 1.0], ..Default::default() };
        assert!(matches!(Mesh::build(&g), Err(Error::InvalidGeometry(_))));
        let g = Geometry { mu_upper: [0.6, 1.0], ..Default::default() };
        assert!(matches!(Mesh::build(&g), Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn identical_columns_share_scale_expression() {
        let m = Mesh::build(&Geometry::default()).unwrap();
        let sx = |c| m.ax.scale_expr(c);
        assert_eq!(sx(1), sx(3));
        assert_eq!(sx(0), ThetaExpr::Const(1.0));
    }
}
