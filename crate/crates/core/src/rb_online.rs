//! Galerkin projection onto the RB spaces, the reduced saddle solve and
//! residual dual norms through precomputed Riesz representers.
//!
//! Residual norms are evaluated as `‖R w‖₂`, where `R` is the triangular
//! factor of the representers orthonormalized in the X (resp. Y) inner
//! product and `w` collects θ-weighted reduced coefficients. The plain Gram
//! expansion `wᵀ G w` is evaluated alongside as an integrity check; it loses
//! relative accuracy once the residual is small, the factor does not.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::affine::{ParameterDomain, ThetaExpr};
use crate::error::{Error, Result};
use crate::numerics::{dot, norm2, SparseMatrix, SpdFactor};
use crate::rb_space::{Field, RBSpace};
use crate::stokes::TruthDiscretization;

/// Relative tolerance for negative values of the Gram expansion.
pub const NEGATIVE_SQUARE_TOL: f64 = 1e-12;

/// What a Riesz representer belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RieszTerm {
    /// Right-hand side term `q`.
    Rhs(usize),
    /// Operator term `q` applied to velocity basis column `n`.
    Velocity(usize, usize),
    /// Operator term `q` applied to pressure basis column `m`.
    Pressure(usize, usize),
}

/// Gram tensor and triangular factor of one residual's representers.
#[derive(Debug, Clone)]
pub struct RieszExpansion {
    pub(crate) terms: Vec<RieszTerm>,
    pub(crate) gram: DMatrix<f64>,
    /// `rank × terms`; column `j` is zero below `rank_after[j]`.
    pub(crate) factor: DMatrix<f64>,
    pub(crate) rank_after: Vec<usize>,
}

impl RieszExpansion {
    fn empty() -> Self {
        Self { terms: Vec::new(), gram: DMatrix::zeros(0, 0), factor: DMatrix::zeros(0, 0), rank_after: Vec::new() }
    }

    pub(crate) fn from_parts(terms: Vec<RieszTerm>, gram: DMatrix<f64>, factor: DMatrix<f64>, rank_after: Vec<usize>) -> Self {
        Self { terms, gram, factor, rank_after }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[RieszTerm] {
        &self.terms
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn rank_after(&self) -> &[usize] {
        &self.rank_after
    }

    /// The factor is left as is.
    pub fn gram_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.gram
    }

    /// Dual norm for coefficient vector `w` over the first `w.len()` terms.
    fn norm(&self, w: &[f64]) -> Result<f64> {
        let t = w.len();
        if t == 0 {
            return Ok(0.0);
        }
        // Column-major storage; only the upper triangle of the symmetric
        // Gram and the nonzero head of each factor column are read.
        let g = self.gram.as_slice();
        let ld = self.gram.nrows();
        let (mut quad, mut scale) = (0.0, 0.0);
        for (j, &wj) in w.iter().enumerate() {
            let col = &g[j * ld..j * ld + j];
            let (mut off, mut off_abs) = (0.0, 0.0);
            for (c, wi) in col.iter().zip(w) {
                let v = c * wi;
                off += v;
                off_abs += v.abs();
            }
            let d = g[j * ld + j] * wj;
            quad += wj * (d + 2.0 * off);
            scale += wj.abs() * (d.abs() + 2.0 * off_abs);
        }
        if quad < -NEGATIVE_SQUARE_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NegativeNormSquare { value: quad });
        }
        let rank = self.rank_after[t - 1];
        let f = self.factor.as_slice();
        let ld = self.factor.nrows();
        let mut s = vec![0.0; rank];
        for (j, &wj) in w.iter().enumerate() {
            let head = self.rank_after[j].min(rank);
            let col = &f[j * ld..j * ld + head];
            for (acc, c) in s.iter_mut().zip(col) {
                *acc += c * wj;
            }
        }
        let acc: f64 = s.iter().map(|v| v * v).sum();
        Ok(acc.sqrt())
    }
}

/// Truth-size data needed to add basis columns to an existing model.
#[derive(Clone)]
struct OfflineState {
    x_factor: Arc<SpdFactor>,
    y_factor: Arc<SpdFactor>,
    a_terms: Vec<SparseMatrix>,
    b_terms: Vec<SparseMatrix>,
    f_terms: Vec<Vec<f64>>,
    g_terms: Vec<Vec<f64>>,
    x_gram: SparseMatrix,
    y_gram: SparseMatrix,
    /// Per residual: representers, orthonormal vectors and their Gram images.
    reps: [Vec<Vec<f64>>; 2],
    ortho: [Vec<Vec<f64>>; 2],
    g_ortho: [Vec<Vec<f64>>; 2],
}

/// The µ-independent reduced operators; everything online needs.
#[derive(Clone)]
pub struct ReducedModel {
    pub(crate) domain: ParameterDomain,
    pub(crate) a_thetas: Vec<ThetaExpr>,
    pub(crate) b_thetas: Vec<ThetaExpr>,
    pub(crate) f_thetas: Vec<ThetaExpr>,
    pub(crate) g_thetas: Vec<ThetaExpr>,
    pub(crate) an: Vec<DMatrix<f64>>,
    pub(crate) bn: Vec<DMatrix<f64>>,
    pub(crate) fnv: Vec<DVector<f64>>,
    pub(crate) gnv: Vec<DVector<f64>>,
    pub(crate) generations: Vec<(usize, usize)>,
    pub(crate) r1: RieszExpansion,
    pub(crate) r2: RieszExpansion,
    pub(crate) processed: usize,
    offline: Option<OfflineState>,
}

/// Reduced solution for one `(µ, N)`.
#[derive(Debug, Clone)]
pub struct RBSolution {
    pub mu: Vec<f64>,
    pub n: usize,
    pub n_x: usize,
    pub n_y: usize,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    /// Relative residual of the dense reduced solve.
    pub residual: f64,
}

impl std::fmt::Debug for ReducedModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReducedModel")
            .field("q", &(self.an.len(), self.bn.len(), self.fnv.len(), self.gnv.len()))
            .field("generations", &self.generations)
            .field("riesz", &(self.r1.len(), self.r2.len()))
            .finish()
    }
}

/// Copies `m` into a larger zero-padded matrix.
fn grow(m: &DMatrix<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, cols);
    out.view_mut((0, 0), (m.nrows(), m.ncols())).copy_from(m);
    out
}

impl ReducedModel {
    /// Projects the truth model onto `space` (all columns inserted so far).
    pub fn project(disc: &TruthDiscretization, space: &RBSpace) -> Result<Self> {
        let x_factor = Arc::new(SpdFactor::new(disc.x_gram())?);
        let y_factor = Arc::new(SpdFactor::new(disc.y_gram())?);
        Self::project_with(disc, space, x_factor, y_factor)
    }

    /// As [`Self::project`], reusing Gram factorizations.
    pub fn project_with(
        disc: &TruthDiscretization,
        space: &RBSpace,
        x_factor: Arc<SpdFactor>,
        y_factor: Arc<SpdFactor>,
    ) -> Result<Self> {
        let (qa, qb, qf, qg) = (disc.a().len(), disc.b().len(), disc.f().len(), disc.g().len());
        let mut model = Self {
            domain: disc.domain().clone(),
            a_thetas: disc.a().thetas().to_vec(),
            b_thetas: disc.b().thetas().to_vec(),
            f_thetas: disc.f().thetas().to_vec(),
            g_thetas: disc.g().thetas().to_vec(),
            an: vec![DMatrix::zeros(0, 0); qa],
            bn: vec![DMatrix::zeros(0, 0); qb],
            fnv: vec![DVector::zeros(0); qf],
            gnv: vec![DVector::zeros(0); qg],
            generations: Vec::new(),
            r1: RieszExpansion::empty(),
            r2: RieszExpansion::empty(),
            processed: 0,
            offline: Some(OfflineState {
                x_factor,
                y_factor,
                a_terms: disc.a().terms().to_vec(),
                b_terms: disc.b().terms().to_vec(),
                f_terms: disc.f().terms().to_vec(),
                g_terms: disc.g().terms().to_vec(),
                x_gram: disc.x_gram().clone(),
                y_gram: disc.y_gram().clone(),
                reps: [Vec::new(), Vec::new()],
                ortho: [Vec::new(), Vec::new()],
                g_ortho: [Vec::new(), Vec::new()],
            }),
        };
        let mut st = model.offline.take().ok_or_else(no_offline)?;
        for q in 0..qf {
            let rep = st.x_factor.solve(&st.f_terms[q])?;
            push_rep(&mut st, &mut model.r1, 0, RieszTerm::Rhs(q), rep);
        }
        for q in 0..qg {
            let rep = st.y_factor.solve(&st.g_terms[q])?;
            push_rep(&mut st, &mut model.r2, 1, RieszTerm::Rhs(q), rep);
        }
        model.offline = Some(st);
        model.extend(space)?;
        Ok(model)
    }

    /// Adds the columns and generations of `space` not yet projected.
    pub fn extend(&mut self, space: &RBSpace) -> Result<()> {
        let order = space.insertion_order().to_vec();
        for &(field, idx) in &order[self.processed..] {
            match field {
                Field::Velocity => self.add_velocity(space, idx)?,
                Field::Pressure => self.add_pressure(space, idx)?,
            }
        }
        self.processed = order.len();
        self.generations = space.generations().to_vec();
        Ok(())
    }

    fn add_velocity(&mut self, space: &RBSpace, n: usize) -> Result<()> {
        let mut st = self.offline.take().ok_or_else(no_offline)?;
        let out = self.add_velocity_with(&mut st, space, n);
        self.offline = Some(st);
        out
    }

    fn add_velocity_with(&mut self, st: &mut OfflineState, space: &RBSpace, n: usize) -> Result<()> {
        let z = &space.velocity_basis()[n];
        let zs = &space.velocity_basis()[..=n];
        for q in 0..st.a_terms.len() {
            let az = st.a_terms[q].mul_vec(z);
            self.an[q] = grow(&self.an[q], n + 1, n + 1);
            for (i, zi) in zs.iter().enumerate() {
                let v = dot(zi, &az);
                self.an[q][(i, n)] = v;
                self.an[q][(n, i)] = v;
            }
            let rep = st.x_factor.solve(&az)?;
            push_rep(st, &mut self.r1, 0, RieszTerm::Velocity(q, n), rep);
        }
        let ps = space.pressure_basis();
        for q in 0..st.b_terms.len() {
            let bz = st.b_terms[q].mul_vec(z);
            let rows = self.bn[q].nrows();
            self.bn[q] = grow(&self.bn[q], rows, n + 1);
            for i in 0..rows {
                self.bn[q][(i, n)] = dot(&ps[i], &bz);
            }
            let rep = st.y_factor.solve(&bz)?;
            push_rep(st, &mut self.r2, 1, RieszTerm::Velocity(q, n), rep);
        }
        for (q, f) in st.f_terms.iter().enumerate() {
            let mut v = self.fnv[q].clone().resize_vertically(n + 1, 0.0);
            v[n] = dot(z, f);
            self.fnv[q] = v;
        }
        Ok(())
    }

    fn add_pressure(&mut self, space: &RBSpace, m: usize) -> Result<()> {
        let mut st = self.offline.take().ok_or_else(no_offline)?;
        let out = self.add_pressure_with(&mut st, space, m);
        self.offline = Some(st);
        out
    }

    fn add_pressure_with(&mut self, st: &mut OfflineState, space: &RBSpace, m: usize) -> Result<()> {
        let zp = &space.pressure_basis()[m];
        let us = space.velocity_basis();
        for q in 0..st.b_terms.len() {
            let btq = st.b_terms[q].mul_transpose_vec(zp);
            let n_x = self.bn[q].ncols();
            self.bn[q] = grow(&self.bn[q], m + 1, n_x);
            for j in 0..n_x {
                self.bn[q][(m, j)] = dot(&us[j], &btq);
            }
            let rep = st.x_factor.solve(&btq)?;
            push_rep(st, &mut self.r1, 0, RieszTerm::Pressure(q, m), rep);
        }
        for (q, g) in st.g_terms.iter().enumerate() {
            let mut v = self.gnv[q].clone().resize_vertically(m + 1, 0.0);
            v[m] = dot(zp, g);
            self.gnv[q] = v;
        }
        Ok(())
    }

    /// Reassembles a model from stored online data; it cannot be extended.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        domain: ParameterDomain,
        thetas: [Vec<ThetaExpr>; 4],
        an: Vec<DMatrix<f64>>,
        bn: Vec<DMatrix<f64>>,
        fnv: Vec<DVector<f64>>,
        gnv: Vec<DVector<f64>>,
        generations: Vec<(usize, usize)>,
        r1: RieszExpansion,
        r2: RieszExpansion,
    ) -> Self {
        let [a_thetas, b_thetas, f_thetas, g_thetas] = thetas;
        let processed = generations.last().map_or(0, |(x, y)| x + y);
        Self { domain, a_thetas, b_thetas, f_thetas, g_thetas, an, bn, fnv, gnv, generations, r1, r2, processed, offline: None }
    }

    pub fn theta_exprs(&self) -> [&[ThetaExpr]; 4] {
        [&self.a_thetas, &self.b_thetas, &self.f_thetas, &self.g_thetas]
    }

    /// Drops truth-size offline data; the model can no longer be extended.
    pub fn strip_offline(&mut self) {
        self.offline = None;
    }

    pub fn can_extend(&self) -> bool {
        self.offline.is_some()
    }

    pub fn domain(&self) -> &ParameterDomain {
        &self.domain
    }

    pub fn generations(&self) -> &[(usize, usize)] {
        &self.generations
    }

    pub fn n_generations(&self) -> usize {
        self.generations.len()
    }

    pub fn riesz(&self) -> (&RieszExpansion, &RieszExpansion) {
        (&self.r1, &self.r2)
    }

    /// Mutable Riesz data, for fault-injection tests.
    pub fn riesz_mut(&mut self) -> (&mut RieszExpansion, &mut RieszExpansion) {
        (&mut self.r1, &mut self.r2)
    }

    pub fn a_blocks(&self) -> &[DMatrix<f64>] {
        &self.an
    }

    pub fn b_blocks(&self) -> &[DMatrix<f64>] {
        &self.bn
    }

    pub fn f_blocks(&self) -> &[DVector<f64>] {
        &self.fnv
    }

    pub fn g_blocks(&self) -> &[DVector<f64>] {
        &self.gnv
    }

    pub fn a_thetas(&self, mu: &[f64]) -> Result<Vec<f64>> {
        self.domain.check(mu)?;
        Ok(self.a_thetas.iter().map(|t| t.eval(mu)).collect())
    }

    fn thetas(&self, mu: &[f64]) -> Result<Thetas> {
        self.domain.check(mu)?;
        let ev = |ts: &[ThetaExpr]| ts.iter().map(|t| t.eval(mu)).collect::<Vec<f64>>();
        Ok(Thetas { a: ev(&self.a_thetas), b: ev(&self.b_thetas), f: ev(&self.f_thetas), g: ev(&self.g_thetas) })
    }

    fn dims(&self, n: usize) -> Result<(usize, usize)> {
        if n == 0 || n > self.generations.len() {
            return Err(Error::DimensionMismatch(format!(
                "generation {n} not stored (have {})",
                self.generations.len()
            )));
        }
        Ok(self.generations[n - 1])
    }

    /// Reduced matrices `A_N(µ)`, `B_N(µ)` of generation `n`.
    pub fn reduced_operators(&self, mu: &[f64], n: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let th = self.thetas(mu)?;
        let (nx, ny) = self.dims(n)?;
        Ok((self.combine_a(&th, nx), self.combine_b(&th, nx, ny)))
    }

    fn combine_a(&self, th: &Thetas, nx: usize) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(nx, nx);
        for (t, m) in th.a.iter().zip(&self.an) {
            a.iter_mut().zip(m.view((0, 0), (nx, nx)).iter()).for_each(|(x, y)| *x += t * y);
        }
        a
    }

    fn combine_b(&self, th: &Thetas, nx: usize, ny: usize) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(ny, nx);
        for (t, m) in th.b.iter().zip(&self.bn) {
            b.iter_mut().zip(m.view((0, 0), (ny, nx)).iter()).for_each(|(x, y)| *x += t * y);
        }
        b
    }

    /// Solves the reduced saddle system of generation `n` at `µ`.
    pub fn online_solve(&self, mu: &[f64], n: usize) -> Result<RBSolution> {
        let th = self.thetas(mu)?;
        let (nx, ny) = self.dims(n)?;
        let nz = nx + ny;
        let mut k = DMatrix::zeros(nz, nz);
        k.view_mut((0, 0), (nx, nx)).copy_from(&self.combine_a(&th, nx));
        let b = self.combine_b(&th, nx, ny);
        k.view_mut((nx, 0), (ny, nx)).copy_from(&b);
        k.view_mut((0, nx), (nx, ny)).copy_from(&b.transpose());
        let mut rhs = DVector::zeros(nz);
        for (t, v) in th.f.iter().zip(&self.fnv) {
            rhs.rows_mut(0, nx).axpy(*t, &v.rows(0, nx), 1.0);
        }
        for (t, v) in th.g.iter().zip(&self.gnv) {
            rhs.rows_mut(nx, ny).axpy(*t, &v.rows(0, ny), 1.0);
        }
        let lu = k.clone().full_piv_lu();
        let diag = lu.u().diagonal();
        let (dmin, dmax) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d.abs()), hi.max(d.abs())));
        if nz > 0 && !(dmin > 1e-13 * dmax) {
            return Err(Error::SingularReducedSystem);
        }
        let x = lu.solve(&rhs).ok_or(Error::SingularReducedSystem)?;
        let res = (&k * &x - &rhs).norm();
        let residual = if rhs.norm() > 0.0 { res / rhs.norm() } else { res };
        if !residual.is_finite() || residual > 1e-8 {
            return Err(Error::SingularReducedSystem);
        }
        Ok(RBSolution {
            mu: mu.to_vec(),
            n,
            n_x: nx,
            n_y: ny,
            u: x.rows(0, nx).iter().copied().collect(),
            p: x.rows(nx, ny).iter().copied().collect(),
            residual,
        })
    }

    /// `(‖r¹_N‖_{X'}, ‖r²_N‖_{Y'})` at the solution's µ.
    pub fn residual_dual_norms(&self, sol: &RBSolution) -> Result<(f64, f64)> {
        let th = self.thetas(&sol.mu)?;
        let (qa, qb) = (th.a.len(), th.b.len());
        let (nx, ny) = (sol.n_x, sol.n_y);

        let t1 = th.f.len() + qa * nx + qb * ny;
        let w1: Vec<f64> = self.r1.terms[..t1]
            .iter()
            .map(|term| match *term {
                RieszTerm::Rhs(q) => th.f[q],
                RieszTerm::Velocity(q, n) => -th.a[q] * sol.u[n],
                RieszTerm::Pressure(q, m) => -th.b[q] * sol.p[m],
            })
            .collect();
        let t2 = th.g.len() + qb * nx;
        let w2: Vec<f64> = self.r2.terms[..t2]
            .iter()
            .map(|term| match *term {
                RieszTerm::Rhs(q) => th.g[q],
                RieszTerm::Velocity(q, n) => -th.b[q] * sol.u[n],
                RieszTerm::Pressure(..) => unreachable!("no pressure terms in the second residual"),
            })
            .collect();
        Ok((self.r1.norm(&w1)?, self.r2.norm(&w2)?))
    }

    /// `‖u_N‖_X` and `‖p_N‖_Y` (orthonormal bases make these Euclidean).
    pub fn solution_norms(sol: &RBSolution) -> (f64, f64) {
        (norm2(&sol.u), norm2(&sol.p))
    }
}

fn no_offline() -> Error {
    Error::Artifact("reduced model was loaded without offline data; cannot extend".into())
}

/// Appends a representer: Gram row and column plus one MGS step.
fn push_rep(st: &mut OfflineState, exp: &mut RieszExpansion, which: usize, term: RieszTerm, rep: Vec<f64>) {
    let gram_m = if which == 0 { &st.x_gram } else { &st.y_gram };
    let g_rep = gram_m.mul_vec(&rep);
    let t = exp.terms.len();

    let mut gram = grow(&exp.gram, t + 1, t + 1);
    for (j, r) in st.reps[which].iter().enumerate() {
        let v = dot(r, &g_rep);
        gram[(t, j)] = v;
        gram[(j, t)] = v;
    }
    gram[(t, t)] = dot(&rep, &g_rep);
    let norm0 = gram[(t, t)].max(0.0).sqrt();
    exp.gram = gram;

    let rank = st.ortho[which].len();
    let mut coeffs = vec![0.0; rank];
    let mut w = rep.clone();
    for _ in 0..2 {
        for (k, (qv, gq)) in st.ortho[which].iter().zip(&st.g_ortho[which]).enumerate() {
            let c = dot(&w, gq);
            coeffs[k] += c;
            w.iter_mut().zip(qv).for_each(|(a, b)| *a -= c * b);
        }
    }
    let gw = gram_m.mul_vec(&w);
    let rest = dot(&w, &gw).max(0.0).sqrt();
    let independent = rest > 0.0 && rest > 1e-13 * norm0;
    let new_rank = if independent { rank + 1 } else { rank };
    let mut factor = grow(&exp.factor, new_rank, t + 1);
    for (k, c) in coeffs.iter().enumerate() {
        factor[(k, t)] = *c;
    }
    if independent {
        factor[(rank, t)] = rest;
        st.ortho[which].push(w.iter().map(|a| a / rest).collect());
        st.g_ortho[which].push(gw.iter().map(|a| a / rest).collect());
    }
    exp.factor = factor;
    exp.rank_after.push(new_rank);
    exp.terms.push(term);
    st.reps[which].push(rep);
}

struct Thetas {
    a: Vec<f64>,
    b: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
}

/// Truth-level residual vectors `(f − A u − Bᵀp, g − B u)` of an RB solution.
pub fn truth_residuals(disc: &TruthDiscretization, space: &RBSpace, sol: &RBSolution) -> Result<(Vec<f64>, Vec<f64>)> {
    let (a, b, f, g) = disc.assemble_system(&sol.mu)?;
    let u = space.expand_velocity(&sol.u);
    let p = space.expand_pressure(&sol.p);
    let au = a.mul_vec(&u);
    let btp = b.mul_transpose_vec(&p);
    let r1: Vec<f64> = f.iter().zip(au.iter().zip(&btp)).map(|(f, (x, y))| f - x - y).collect();
    let bu = b.mul_vec(&u);
    let r2: Vec<f64> = g.iter().zip(&bu).map(|(g, x)| g - x).collect();
    Ok((r1, r2))
}

/// Energy-norm dual norm `sqrt(r¹ᵀ A(µ)⁻¹ r¹)`, evaluated on the truth level.
pub fn energy_residual_norm(disc: &TruthDiscretization, space: &RBSpace, sol: &RBSolution) -> Result<f64> {
    let (r1, _) = truth_residuals(disc, space, sol)?;
    let a = disc.a().assemble_at(&sol.mu)?;
    let y = SpdFactor::new(&a)?.solve(&r1)?;
    Ok(dot(&r1, &y).max(0.0).sqrt())
}

/// Cheap two-sided bounds `‖r¹‖_{X'}/√γ ≤ ‖r¹‖_{X',µ} ≤ ‖r¹‖_{X'}/√α`.
pub fn energy_residual_bounds(r1: f64, alpha_lb: f64, gamma_ub: f64) -> (f64, f64) {
    (r1 / gamma_ub.sqrt(), r1 / alpha_lb.sqrt())
}
