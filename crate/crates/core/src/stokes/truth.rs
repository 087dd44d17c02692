//! Affine truth discretization and full-order solves.

use crate::affine::{AffineDecomposition, ParameterDomain, ThetaExpr};
use crate::error::{Error, Result};
use crate::numerics::{norm2, SaddleFactor, SparseMatrix, TripletBuilder};

use super::fem::element_matrices;
use super::mesh::{BoundaryTag, Geometry, Mesh};
use super::space::TaylorHoodSpace;

/// Truth matrices and vectors, all in homogeneous (lift-removed) form.
#[derive(Debug, Clone)]
pub struct TruthDiscretization {
    mesh: Mesh,
    space: TaylorHoodSpace,
    domain: ParameterDomain,
    /// a(·,·;µ) on free velocity dofs.
    a: AffineDecomposition<SparseMatrix>,
    /// b(·,·;µ): pressure rows, free velocity columns.
    b: AffineDecomposition<SparseMatrix>,
    /// f(·;µ) = −a(lift, ·; µ)
    f: AffineDecomposition<Vec<f64>>,
    /// g(·;µ) = −b(lift, ·; µ)
    g: AffineDecomposition<Vec<f64>>,
    a_full: AffineDecomposition<SparseMatrix>,
    b_full: AffineDecomposition<SparseMatrix>,
    x_gram: SparseMatrix,
    y_gram: SparseMatrix,
    lift: Vec<f64>,
}

/// Full-order solution at one parameter.
#[derive(Debug, Clone)]
pub struct TruthSolution {
    pub mu: Vec<f64>,
    /// Homogeneous velocity on free dofs.
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    /// Velocity on all P2 dofs with the lift added back.
    pub u_full: Vec<f64>,
    /// Relative block residual of the saddle solve.
    pub residual: f64,
}

fn both_components(scalar: &SparseMatrix, n_v: usize) -> SparseMatrix {
    let mut b = TripletBuilder::with_capacity(2 * n_v, 2 * n_v, 2 * scalar.nnz());
    for (r, c, v) in scalar.triplets() {
        b.push(r, c, v);
        b.push(n_v + r, n_v + c, v);
    }
    b.build().with_symmetric(true)
}

fn divergence_block(scalar: &SparseMatrix, comp: usize, n_v: usize) -> SparseMatrix {
    let mut b = TripletBuilder::with_capacity(scalar.rows(), 2 * n_v, scalar.nnz());
    for (r, c, v) in scalar.triplets() {
        b.push(r, comp * n_v + c, v);
    }
    b.build()
}

impl TruthDiscretization {
    /// Meshes the geometry and assembles every affine term.
    pub fn build(geometry: &Geometry) -> Result<Self> {
        let mesh = Mesh::build(geometry)?;
        let space = TaylorHoodSpace::new(&mesh);
        Self::assemble(mesh, space)
    }

    /// Assembles on the reference configuration; the per-subdomain stretch
    /// factors become the θ coefficients.
    pub fn assemble(mesh: Mesh, space: TaylorHoodSpace) -> Result<Self> {
        let domain = mesh.geometry().domain()?;
        let reference = mesh.reference_mu();
        let xy = mesh.vertex_coords(&reference);
        let (n_v, n_p, n_sd) = (space.n_vnodes(), space.n_p(), mesh.n_subdomains());

        let mut kxx: Vec<TripletBuilder> = (0..n_sd).map(|_| TripletBuilder::new(n_v, n_v)).collect();
        let mut kyy: Vec<TripletBuilder> = (0..n_sd).map(|_| TripletBuilder::new(n_v, n_v)).collect();
        let mut bx: Vec<TripletBuilder> = (0..n_sd).map(|_| TripletBuilder::new(n_p, n_v)).collect();
        let mut by: Vec<TripletBuilder> = (0..n_sd).map(|_| TripletBuilder::new(n_p, n_v)).collect();
        let mut stiff = TripletBuilder::new(n_v, n_v);
        let mut mass = TripletBuilder::new(n_v, n_v);
        let mut pmass = TripletBuilder::new(n_p, n_p);

        for (t, (tri, vn)) in mesh.triangles().iter().zip(space.elem_vnodes()).enumerate() {
            let sd = mesh.tri_subdomain()[t];
            let e = element_matrices(&[xy[tri[0]], xy[tri[1]], xy[tri[2]]]);
            for i in 0..6 {
                for j in 0..6 {
                    kxx[sd].push(vn[i], vn[j], e.kxx[i][j]);
                    kyy[sd].push(vn[i], vn[j], e.kyy[i][j]);
                    stiff.push(vn[i], vn[j], e.kxx[i][j] + e.kyy[i][j]);
                    mass.push(vn[i], vn[j], e.mass[i][j]);
                }
            }
            for k in 0..3 {
                for j in 0..6 {
                    bx[sd].push(tri[k], vn[j], e.bx[k][j]);
                    by[sd].push(tri[k], vn[j], e.by[k][j]);
                }
                for m in 0..3 {
                    pmass.push(tri[k], tri[m], e.pmass[k][m]);
                }
            }
        }

        let mut a_parts = Vec::new();
        let mut b_parts = Vec::new();
        for (sd, ((kx, ky), (dx, dy))) in kxx.into_iter().zip(kyy).zip(bx.into_iter().zip(by)).enumerate() {
            let (sx, sy) = mesh.subdomain_scale_exprs(sd);
            a_parts.push((sy.clone().div(sx.clone()), both_components(&kx.build(), n_v)));
            a_parts.push((sx.clone().div(sy.clone()), both_components(&ky.build(), n_v)));
            b_parts.push((sy, divergence_block(&dx.build(), 0, n_v)));
            b_parts.push((sx, divergence_block(&dy.build(), 1, n_v)));
        }
        let a_full = AffineDecomposition::new(domain.clone(), a_parts)?;
        let b_full = AffineDecomposition::new(domain.clone(), b_parts)?;

        let lift = inflow_lift(&mesh, &space);
        let free = space.full_to_free();
        let n_u = space.n_u();
        let identity_p: Vec<Option<usize>> = (0..n_p).map(Some).collect();

        let restrict_a = |m: &SparseMatrix| m.restrict(free, n_u, free, n_u);
        let a = AffineDecomposition::new(
            domain.clone(),
            a_full.thetas().iter().cloned().zip(a_full.terms().iter().map(restrict_a)).collect(),
        )?;
        let b = AffineDecomposition::new(
            domain.clone(),
            b_full
                .thetas()
                .iter()
                .cloned()
                .zip(b_full.terms().iter().map(|m| m.restrict(&identity_p, n_p, free, n_u)))
                .collect(),
        )?;

        let nonzero = |v: &Vec<f64>| v.iter().any(|x| *x != 0.0);
        let f_parts: Vec<(ThetaExpr, Vec<f64>)> = a_full
            .thetas()
            .iter()
            .zip(a_full.terms())
            .map(|(th, m)| (th.clone(), space.restrict(&m.mul_vec(&lift)).into_iter().map(|v| -v).collect()))
            .filter(|(_, v)| nonzero(v))
            .collect();
        let g_parts: Vec<(ThetaExpr, Vec<f64>)> = b_full
            .thetas()
            .iter()
            .zip(b_full.terms())
            .map(|(th, m)| (th.clone(), m.mul_vec(&lift).into_iter().map(|v| -v).collect::<Vec<f64>>()))
            .filter(|(_, v)| nonzero(v))
            .collect();
        let f = if f_parts.is_empty() {
            AffineDecomposition::new(domain.clone(), vec![(ThetaExpr::one(), vec![0.0; n_u])])?
        } else {
            AffineDecomposition::new(domain.clone(), f_parts)?
        };
        let g = if g_parts.is_empty() {
            AffineDecomposition::new(domain.clone(), vec![(ThetaExpr::one(), vec![0.0; n_p])])?
        } else {
            AffineDecomposition::new(domain.clone(), g_parts)?
        };

        let h1 = SparseMatrix::linear_combination(&[1.0, 1.0], &[&stiff.build(), &mass.build()])?;
        let x_gram = both_components(&h1, n_v).restrict(free, n_u, free, n_u).with_symmetric(true);
        let y_gram = pmass.build().with_symmetric(true);

        Ok(Self { mesh, space, domain, a, b, f, g, a_full, b_full, x_gram, y_gram, lift })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn space(&self) -> &TaylorHoodSpace {
        &self.space
    }

    pub fn domain(&self) -> &ParameterDomain {
        &self.domain
    }

    pub fn a(&self) -> &AffineDecomposition<SparseMatrix> {
        &self.a
    }

    pub fn b(&self) -> &AffineDecomposition<SparseMatrix> {
        &self.b
    }

    pub fn f(&self) -> &AffineDecomposition<Vec<f64>> {
        &self.f
    }

    pub fn g(&self) -> &AffineDecomposition<Vec<f64>> {
        &self.g
    }

    /// a on all P2 dofs (Dirichlet rows kept).
    pub fn a_full(&self) -> &AffineDecomposition<SparseMatrix> {
        &self.a_full
    }

    /// b on all P2 dofs.
    pub fn b_full(&self) -> &AffineDecomposition<SparseMatrix> {
        &self.b_full
    }

    pub fn x_gram(&self) -> &SparseMatrix {
        &self.x_gram
    }

    pub fn y_gram(&self) -> &SparseMatrix {
        &self.y_gram
    }

    /// Dirichlet lift on all P2 dofs.
    pub fn lift(&self) -> &[f64] {
        &self.lift
    }

    pub fn n_u(&self) -> usize {
        self.space.n_u()
    }

    pub fn n_p(&self) -> usize {
        self.space.n_p()
    }

    /// `𝒩 = N_X + N_Y`.
    pub fn n_total(&self) -> usize {
        self.space.n_total()
    }

    /// A(µ), B(µ), f(µ), g(µ).
    pub fn assemble_system(&self, mu: &[f64]) -> Result<(SparseMatrix, SparseMatrix, Vec<f64>, Vec<f64>)> {
        Ok((self.a.assemble_at(mu)?, self.b.assemble_at(mu)?, self.f.assemble_at(mu)?, self.g.assemble_at(mu)?))
    }

    pub fn solve(&self, mu: &[f64]) -> Result<TruthSolution> {
        self.solve_forced(mu, None, None)
    }

    /// Solve with extra right-hand sides added to f and g (manufactured sources).
    pub fn solve_forced(&self, mu: &[f64], f_extra: Option<&[f64]>, g_extra: Option<&[f64]>) -> Result<TruthSolution> {
        let (a, b, mut f, mut g) = self.assemble_system(mu)?;
        if let Some(fe) = f_extra {
            if fe.len() != f.len() {
                return Err(Error::DimensionMismatch("velocity source length".into()));
            }
            f.iter_mut().zip(fe).for_each(|(x, y)| *x += y);
        }
        if let Some(ge) = g_extra {
            if ge.len() != g.len() {
                return Err(Error::DimensionMismatch("pressure source length".into()));
            }
            g.iter_mut().zip(ge).for_each(|(x, y)| *x += y);
        }
        let factor = SaddleFactor::new(&a, &b)?;
        let (u, p) = factor.solve(&f, &g)?;
        let residual = saddle_residual(&a, &b, &u, &p, &f, &g);
        let u_full = self.space.expand(&u, &self.lift);
        Ok(TruthSolution { mu: mu.to_vec(), u, p, u_full, residual })
    }

    /// Outward flux `∫ u·n ds` of a full velocity vector over boundary part `tag` at `µ`.
    pub fn boundary_flux(&self, u_full: &[f64], mu: &[f64], tag: BoundaryTag) -> f64 {
        let n_v = self.space.n_vnodes();
        let vg = self.mesh.vertex_grid();
        let mut flux = 0.0;
        for (e, t) in self.mesh.boundary_edges() {
            if *t != tag {
                continue;
            }
            let (ga, gb) = (vg[e[0]], vg[e[1]]);
            let gm = ((ga.0 + gb.0) / 2, (ga.1 + gb.1) / 2);
            let nodes = [ga, gm, gb].map(|g| self.space.vnode_at(g).expect("boundary node"));
            let (pa, pb) = (self.mesh.grid_point(ga, mu), self.mesh.grid_point(gb, mu));
            let normal = [pb[1] - pa[1], pa[0] - pb[0]];
            let avg = |c: usize| (u_full[c * n_v + nodes[0]] + 4.0 * u_full[c * n_v + nodes[1]] + u_full[c * n_v + nodes[2]]) / 6.0;
            flux += avg(0) * normal[0] + avg(1) * normal[1];
        }
        flux
    }
}

/// Parabolic profile `4ŷ(H − ŷ)/H²` in the x-component on inflow nodes,
/// prescribed in reference coordinates so the lift is µ-independent.
fn inflow_lift(mesh: &Mesh, space: &TaylorHoodSpace) -> Vec<f64> {
    let h = mesh.geometry().height;
    let reference = mesh.reference_mu();
    let mut lift = vec![0.0; space.n_u_full()];
    for (k, (&g, tag)) in space.vnode_grid().iter().zip(space.vnode_tag()).enumerate() {
        if *tag == Some(BoundaryTag::Inflow) {
            let y = mesh.grid_point(g, &reference)[1];
            lift[k] = 4.0 * y * (h - y) / (h * h);
        }
    }
    lift
}

/// ‖K x − rhs‖ / ‖rhs‖ for the block system.
pub fn saddle_residual(a: &SparseMatrix, b: &SparseMatrix, u: &[f64], p: &[f64], f: &[f64], g: &[f64]) -> f64 {
    let mut r1 = a.mul_vec(u);
    let btp = b.mul_transpose_vec(p);
    r1.iter_mut().zip(btp.iter().zip(f)).for_each(|(r, (x, y))| *r += x - y);
    let mut r2 = b.mul_vec(u);
    r2.iter_mut().zip(g).for_each(|(r, y)| *r -= y);
    let num = (norm2(&r1).powi(2) + norm2(&r2).powi(2)).sqrt();
    let den = (norm2(f).powi(2) + norm2(g).powi(2)).sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn term_counts_of_default_benchmark() {
        let d = TruthDiscretization::build(&Geometry::default()).unwrap();
        assert_eq!(d.a().len(), 10);
        assert_eq!(d.b().len(), 5);
        assert_eq!(d.f().len(), 4);
        assert_eq!(d.g().len(), 2);
    }

    #[test]
    fn reference_parameter_gives_plain_stiffness() {
        let d = TruthDiscretization::build(&Geometry::default()).unwrap();
        let thetas = d.a().eval_thetas(&[0.4, 0.4]).unwrap();
        for t in thetas {
            assert!((t - 1.0).abs() < 1e-15);
        }
    }
}
