//! A posteriori error bounds, effectivities, true errors and a check of the
//! a priori estimates.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::constants::ConstantBounds;
use crate::error::{Error, Result};
use crate::numerics::{dot, SpdFactor};
use crate::rb_online::{RBSolution, ReducedModel};
use crate::rb_space::{infsup_of_block, RBSpace};
use crate::stokes::TruthDiscretization;

/// Errors below this are treated as zero when forming effectivities.
pub const ZERO_ERROR: f64 = 1e-13;

fn positive(v: f64, name: &'static str) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonpositiveConstant(name))
    }
}

fn coercive(c: &ConstantBounds) -> Result<(f64, f64, f64)> {
    Ok((positive(c.alpha_lb, "alpha_lb")?, positive(c.gamma_ub, "gamma_ub")?, positive(c.beta_br_lb, "beta_br_lb")?))
}

pub fn delta_u_sym(r1: f64, r2: f64, c: &ConstantBounds) -> Result<f64> {
    let (a, g, b) = coercive(c)?;
    Ok(r1 / a + (g / a).sqrt() * r2 / b)
}

pub fn delta_p_sym(r1: f64, r2: f64, c: &ConstantBounds) -> Result<f64> {
    let (a, g, b) = coercive(c)?;
    Ok((1.0 + (g / a).sqrt()) * r1 / b + (g / b) * r2 / b)
}

pub fn delta_combined(du: f64, dp: f64) -> f64 {
    du.hypot(dp)
}

/// Velocity bound in the energy norm `‖·‖_{X,µ}`.
pub fn delta_u_energy(r1: f64, r2: f64, c: &ConstantBounds) -> Result<f64> {
    let (a, g, b) = coercive(c)?;
    Ok(r1 / a.sqrt() + g.sqrt() * r2 / b)
}

/// Bounds from the general (nonsymmetric) saddle-point theory.
pub fn delta_u_general(r1: f64, r2: f64, c: &ConstantBounds) -> Result<f64> {
    let (a, g, b) = coercive(c)?;
    Ok(r1 / a + (1.0 + g / a) * r2 / b)
}

pub fn delta_p_general(r1: f64, r2: f64, c: &ConstantBounds) -> Result<f64> {
    let (a, g, b) = coercive(c)?;
    let k = 1.0 + g / a;
    Ok(k * r1 / b + (g / b) * k * r2 / b)
}

pub fn delta_combined_general(r1: f64, r2: f64, c: &ConstantBounds) -> Result<f64> {
    Ok(delta_combined(delta_u_general(r1, r2, c)?, delta_p_general(r1, r2, c)?))
}

/// Combined residual over the Babuška inf-sup constant.
pub fn delta_babuska(r1: f64, r2: f64, beta_ba_lb: f64) -> Result<f64> {
    Ok(r1.hypot(r2) / positive(beta_ba_lb, "beta_ba_lb")?)
}

/// `(energy velocity bound, pressure bound)` in terms of the energy-norm
/// residual and the Schur inf-sup constant `tilde β`.
pub fn delta_tilde_beta_pair(r1_energy: f64, r2: f64, tilde_beta: f64) -> Result<(f64, f64)> {
    let tb = positive(tilde_beta, "tilde_beta")?;
    Ok((r1_energy + r2 / tb, 2.0 * r1_energy / tb + r2 / (tb * tb)))
}

/// True errors of an RB approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrueErrors {
    pub eu_x: f64,
    pub eu_energy: f64,
    pub ep_y: f64,
    pub e_z: f64,
    /// Truth norms `‖u‖_X`, `‖p‖_Y`, `‖(u,p)‖_Z` for relative errors.
    pub u_norm: f64,
    pub p_norm: f64,
    pub z_norm: f64,
}

/// Every bound at one `(µ, N)`, with optional errors and effectivities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub mu: Vec<f64>,
    pub n: usize,
    pub n_z: usize,
    pub r1: f64,
    pub r2: f64,
    /// `‖r¹‖_{X',µ}` when computed on the truth level, else its upper bound `r1/√α`.
    pub r1_energy: f64,
    pub constants: ConstantBounds,
    /// `‖u_N‖_X`, `‖p_N‖_Y` when known.
    pub u_n_norm: f64,
    pub p_n_norm: f64,
    pub delta_u_sym: f64,
    pub delta_p_sym: f64,
    pub delta_sym: f64,
    pub delta_u_energy: f64,
    pub delta_u_gen: f64,
    pub delta_p_gen: f64,
    pub delta_br: f64,
    pub delta_ba: f64,
    pub delta_u_tilde_beta: f64,
    pub delta_p_tilde_beta: f64,
    pub errors: Option<TrueErrors>,
    pub effectivities: Option<Effectivities>,
}

/// Bound over error; `NaN` where the error is below [`ZERO_ERROR`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Effectivities {
    pub u_energy: f64,
    pub u_sym: f64,
    pub p_sym: f64,
    pub sym: f64,
    pub u_br: f64,
    pub p_br: f64,
    pub br: f64,
    pub u_ba: f64,
    pub p_ba: f64,
    pub ba: f64,
}

impl BoundReport {
    /// Evaluates all bounds; `r1_energy` defaults to `r1/√α_LB`.
    pub fn new(
        mu: &[f64],
        n: usize,
        n_z: usize,
        r1: f64,
        r2: f64,
        r1_energy: Option<f64>,
        c: &ConstantBounds,
    ) -> Result<Self> {
        let du = delta_u_sym(r1, r2, c)?;
        let dp = delta_p_sym(r1, r2, c)?;
        let dug = delta_u_general(r1, r2, c)?;
        let dpg = delta_p_general(r1, r2, c)?;
        let r1e = r1_energy.unwrap_or(r1 / c.alpha_lb.sqrt());
        let (dut, dpt) = delta_tilde_beta_pair(r1e, r2, c.tilde_beta)?;
        Ok(Self {
            mu: mu.to_vec(),
            n,
            n_z,
            r1,
            r2,
            r1_energy: r1e,
            constants: *c,
            u_n_norm: f64::NAN,
            p_n_norm: f64::NAN,
            delta_u_sym: du,
            delta_p_sym: dp,
            delta_sym: delta_combined(du, dp),
            delta_u_energy: delta_u_energy(r1, r2, c)?,
            delta_u_gen: dug,
            delta_p_gen: dpg,
            delta_br: delta_combined(dug, dpg),
            delta_ba: delta_babuska(r1, r2, c.beta_ba_lb)?,
            delta_u_tilde_beta: dut,
            delta_p_tilde_beta: dpt,
            errors: None,
            effectivities: None,
        })
    }

    pub fn with_rb_norms(mut self, sol: &RBSolution) -> Self {
        (self.u_n_norm, self.p_n_norm) = ReducedModel::solution_norms(sol);
        self
    }

    /// Attaches true errors and fills in effectivities.
    pub fn with_errors(mut self, e: TrueErrors) -> Self {
        self.effectivities = Some(effectivities(&self, &e));
        self.errors = Some(e);
        self
    }

    /// Pairs `(name, error, bound)` that must satisfy `error ≤ bound` when
    /// exact constants were used.
    pub fn rigor_pairs(&self) -> Vec<(&'static str, f64, f64)> {
        let Some(e) = self.errors else { return Vec::new() };
        vec![
            ("u_sym", e.eu_x, self.delta_u_sym),
            ("u_energy", e.eu_energy, self.delta_u_energy),
            ("p_sym", e.ep_y, self.delta_p_sym),
            ("sym", e.e_z, self.delta_sym),
            ("u_gen", e.eu_x, self.delta_u_gen),
            ("p_gen", e.ep_y, self.delta_p_gen),
            ("br", e.e_z, self.delta_br),
            ("ba", e.e_z, self.delta_ba),
            ("u_tilde_beta", e.eu_energy, self.delta_u_tilde_beta),
            ("p_tilde_beta", e.ep_y, self.delta_p_tilde_beta),
        ]
    }
}

fn ratio(bound: f64, err: f64) -> f64 {
    if err < ZERO_ERROR {
        f64::NAN
    } else {
        bound / err
    }
}

pub fn effectivities(r: &BoundReport, e: &TrueErrors) -> Effectivities {
    Effectivities {
        u_energy: ratio(r.delta_u_energy, e.eu_energy),
        u_sym: ratio(r.delta_u_sym, e.eu_x),
        p_sym: ratio(r.delta_p_sym, e.ep_y),
        sym: ratio(r.delta_sym, e.e_z),
        u_br: ratio(r.delta_u_gen, e.eu_x),
        p_br: ratio(r.delta_p_gen, e.ep_y),
        br: ratio(r.delta_br, e.e_z),
        u_ba: ratio(r.delta_ba, e.eu_x),
        p_ba: ratio(r.delta_ba, e.ep_y),
        ba: ratio(r.delta_ba, e.e_z),
    }
}

/// Truth errors given a truth solution `(u, p)` in free velocity dofs.
pub fn true_errors_against(
    disc: &TruthDiscretization,
    space: &RBSpace,
    sol: &RBSolution,
    u: &[f64],
    p: &[f64],
) -> Result<TrueErrors> {
    let a = disc.a().assemble_at(&sol.mu)?;
    let uh = space.expand_velocity(&sol.u);
    let ph = space.expand_pressure(&sol.p);
    let eu: Vec<f64> = u.iter().zip(&uh).map(|(a, b)| a - b).collect();
    let ep: Vec<f64> = p.iter().zip(&ph).map(|(a, b)| a - b).collect();
    let x = disc.x_gram();
    let y = disc.y_gram();
    let eu_x = x.bilinear(&eu, &eu).max(0.0).sqrt();
    let ep_y = y.bilinear(&ep, &ep).max(0.0).sqrt();
    let u_norm = x.bilinear(u, u).max(0.0).sqrt();
    let p_norm = y.bilinear(p, p).max(0.0).sqrt();
    Ok(TrueErrors {
        eu_x,
        eu_energy: a.bilinear(&eu, &eu).max(0.0).sqrt(),
        ep_y,
        e_z: eu_x.hypot(ep_y),
        u_norm,
        p_norm,
        z_norm: u_norm.hypot(p_norm),
    })
}

/// Truth solve at the solution's µ, then [`true_errors_against`].
pub fn true_errors(disc: &TruthDiscretization, space: &RBSpace, sol: &RBSolution) -> Result<TrueErrors> {
    let truth = disc.solve(&sol.mu)?;
    true_errors_against(disc, space, sol, &truth.u, &truth.p)
}

/// Both sides of the a priori estimates at one `(µ, N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AprioriRecord {
    pub eu_x: f64,
    pub ep_y: f64,
    pub inf_u_constrained: f64,
    pub inf_p: f64,
    pub beta_n: f64,
    pub rhs_u: f64,
    pub rhs_p: f64,
    pub holds_u: bool,
    pub holds_p: bool,
}

impl AprioriRecord {
    pub fn holds(&self) -> bool {
        self.holds_u && self.holds_p
    }
}

/// Checks the a priori estimates with exactly computed best-approximation
/// errors. `c` must hold exact constants (α, γ, γ_b).
pub fn verify_apriori(
    disc: &TruthDiscretization,
    space: &RBSpace,
    model: &ReducedModel,
    mu: &[f64],
    n: usize,
    c: &ConstantBounds,
) -> Result<AprioriRecord> {
    let sol = model.online_solve(mu, n)?;
    let truth = disc.solve(mu)?;
    let err = true_errors_against(disc, space, &sol, &truth.u, &truth.p)?;
    let (nx, ny) = (sol.n_x, sol.n_y);
    let x = disc.x_gram();
    let y = disc.y_gram();

    // Pressure: Y-orthogonal projection onto the (orthonormal) basis.
    let yp = y.mul_vec(&truth.p);
    let cp: Vec<f64> = space.pressure_basis()[..ny].iter().map(|q| dot(q, &yp)).collect();
    let proj_p = space.expand_pressure(&cp);
    let dp: Vec<f64> = truth.p.iter().zip(&proj_p).map(|(a, b)| a - b).collect();
    let inf_p = y.bilinear(&dp, &dp).max(0.0).sqrt();

    // Velocity: min ‖c − d‖ subject to B_N c = g_N, where d = Zᵀ X u.
    let (_, bn) = model.reduced_operators(mu, n)?;
    let th_g = disc.g().eval_thetas(mu)?;
    let mut gn = DVector::zeros(ny);
    for (t, v) in th_g.iter().zip(model.g_blocks()) {
        gn.axpy(*t, &v.rows(0, ny), 1.0);
    }
    let xu = x.mul_vec(&truth.u);
    let d = DVector::from_iterator(nx, space.velocity_basis()[..nx].iter().map(|z| dot(z, &xu)));
    let cu = constrained_projection(&bn, &gn, &d)?;
    let proj_u = space.expand_velocity(cu.as_slice());
    let du: Vec<f64> = truth.u.iter().zip(&proj_u).map(|(a, b)| a - b).collect();
    let inf_u = x.bilinear(&du, &du).max(0.0).sqrt();

    let beta_n = infsup_of_block(&bn);
    let (alpha, gamma, gamma_b) =
        (positive(c.alpha_lb, "alpha")?, positive(c.gamma_ub, "gamma")?, c.gamma_b_ub);
    let k = (gamma / alpha).sqrt();
    let rhs_u = 2.0 * k * inf_u + gamma_b / alpha * inf_p;
    let rhs_p = if beta_n > 0.0 {
        (1.0 + gamma_b / beta_n * (1.0 + k)) * inf_p + 2.0 * gamma / beta_n * inf_u
    } else {
        f64::INFINITY
    };
    let slack = |v: f64| 1e-10 * v.max(err.z_norm) + 1e-14;
    Ok(AprioriRecord {
        eu_x: err.eu_x,
        ep_y: err.ep_y,
        inf_u_constrained: inf_u,
        inf_p,
        beta_n,
        rhs_u,
        rhs_p,
        holds_u: err.eu_x <= rhs_u + slack(rhs_u),
        holds_p: err.ep_y <= rhs_p + slack(rhs_p),
    })
}

/// Minimizes `‖c − d‖₂` over `{c : B c = g}` through the SVD of `B`.
pub fn constrained_projection(b: &DMatrix<f64>, g: &DVector<f64>, d: &DVector<f64>) -> Result<DVector<f64>> {
    if b.nrows() == 0 {
        return Ok(d.clone());
    }
    let svd = b.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = 1e-12 * smax.max(f64::MIN_POSITIVE) * b.nrows().max(b.ncols()) as f64;
    // c = d + B⁺(g − B d) is the closest feasible point.
    let rhs = g - b * d;
    let corr = svd.solve(&rhs, tol).map_err(|_| Error::InfeasibleConstraint)?;
    let c = d + corr;
    let defect = (b * &c - g).norm();
    if defect > 1e-9 * (g.norm() + smax * c.norm()).max(1e-300) {
        return Err(Error::InfeasibleConstraint);
    }
    Ok(c)
}

/// Truth-level Riesz norms of the residual, used to cross-check the
/// offline-online expansion.
pub fn direct_residual_norms(
    disc: &TruthDiscretization,
    space: &RBSpace,
    sol: &RBSolution,
    x_factor: &SpdFactor,
    y_factor: &SpdFactor,
) -> Result<(f64, f64)> {
    let (r1, r2) = crate::rb_online::truth_residuals(disc, space, sol)?;
    let w1 = x_factor.solve(&r1)?;
    let w2 = y_factor.solve(&r2)?;
    Ok((dot(&r1, &w1).max(0.0).sqrt(), dot(&r2, &w2).max(0.0).sqrt()))
}
