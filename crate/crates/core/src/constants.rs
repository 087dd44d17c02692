//! Stability constants of the truth problem: exact values from generalized
//! eigenproblems and cheap sampled surrogates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    eig_extreme, eig_max_below, pencil_extreme, pencil_min_max, EigenOptions, Extreme, Pencil, SaddleFactor,
    SparseMatrix, SpdFactor,
};
use crate::stokes::TruthDiscretization;

/// Values below this make β_Br count as lost.
pub const STABILITY_FLOOR: f64 = 1e-10;

/// `v ↦ B M⁻¹ Bᵀ v` against the Y-Gram, `M` SPD (X-Gram or A(µ)).
pub struct SchurPencil<'a> {
    b: &'a SparseMatrix,
    inner: SpdFactor,
    y: &'a SparseMatrix,
    y_factor: SpdFactor,
    saddle: Option<SaddleFactor>,
}

impl<'a> SchurPencil<'a> {
    pub fn new(inner: &SparseMatrix, b: &'a SparseMatrix, y: &'a SparseMatrix) -> Result<Self> {
        if b.cols() != inner.rows() || b.rows() != y.rows() {
            return Err(Error::DimensionMismatch("Schur pencil blocks".into()));
        }
        Ok(Self { b, inner: SpdFactor::new(inner)?, y, y_factor: SpdFactor::new(y)?, saddle: None })
    }

    /// Also factorizes the saddle block so `(B M⁻¹ Bᵀ)⁻¹` is available.
    pub fn with_inverse(mut self) -> Result<Self> {
        self.saddle = Some(SaddleFactor::new(self.inner.matrix(), self.b)?);
        Ok(self)
    }
}

impl Pencil for SchurPencil<'_> {
    fn dim(&self) -> usize {
        self.b.rows()
    }
    fn apply_m(&self, x: &[f64]) -> Result<Vec<f64>> {
        let t = self.inner.solve(&self.b.mul_transpose_vec(x))?;
        Ok(self.b.mul_vec(&t))
    }
    fn apply_g(&self, x: &[f64]) -> Vec<f64> {
        self.y.mul_vec(x)
    }
    fn solve_g(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.y_factor.solve(x)
    }
    fn solve_m(&self, x: &[f64]) -> Option<Result<Vec<f64>>> {
        self.saddle.as_ref().map(|s| s.solve_schur(x))
    }
    fn m_positive_definite(&self) -> bool {
        self.saddle.is_some()
    }
}

/// The block operator `K = [[A, Bᵀ], [B, 0]]` against `Z = diag(X, Y)`.
pub struct BlockPencil<'a> {
    a: &'a SparseMatrix,
    b: &'a SparseMatrix,
    x: &'a SparseMatrix,
    y: &'a SparseMatrix,
    x_factor: SpdFactor,
    y_factor: Option<SpdFactor>,
    saddle: Option<SaddleFactor>,
}

impl<'a> BlockPencil<'a> {
    pub fn new(a: &'a SparseMatrix, b: &'a SparseMatrix, x: &'a SparseMatrix, y: &'a SparseMatrix) -> Result<Self> {
        let saddle = if b.rows() > 0 { Some(SaddleFactor::new(a, b)?) } else { None };
        let y_factor = if y.rows() > 0 { Some(SpdFactor::new(y)?) } else { None };
        Ok(Self { a, b, x, y, x_factor: SpdFactor::new(x)?, y_factor, saddle })
    }
}

impl Pencil for BlockPencil<'_> {
    fn dim(&self) -> usize {
        self.a.rows() + self.b.rows()
    }
    fn apply_m(&self, v: &[f64]) -> Result<Vec<f64>> {
        let (u, p) = v.split_at(self.a.rows());
        let mut top = self.a.mul_vec(u);
        if !p.is_empty() {
            let btp = self.b.mul_transpose_vec(p);
            top.iter_mut().zip(btp).for_each(|(t, s)| *t += s);
        }
        let bottom = self.b.mul_vec(u);
        Ok(top.into_iter().chain(bottom).collect())
    }
    fn apply_g(&self, v: &[f64]) -> Vec<f64> {
        let (u, p) = v.split_at(self.x.rows());
        self.x.mul_vec(u).into_iter().chain(self.y.mul_vec(p)).collect()
    }
    fn solve_g(&self, v: &[f64]) -> Result<Vec<f64>> {
        let (u, p) = v.split_at(self.x.rows());
        let su = self.x_factor.solve(u)?;
        let sp = match &self.y_factor {
            Some(f) => f.solve(p)?,
            None => Vec::new(),
        };
        Ok(su.into_iter().chain(sp).collect())
    }
    fn solve_m(&self, v: &[f64]) -> Option<Result<Vec<f64>>> {
        self.saddle.as_ref().map(|s| s.solve_stacked(v))
    }
}

/// `α = min eig(A, X)`.
pub fn alpha_of(a: &SparseMatrix, x: &SparseMatrix, opts: &EigenOptions) -> Result<f64> {
    let r = eig_extreme(a, x, Extreme::Min, opts)?;
    if r.value <= 0.0 {
        return Err(Error::NonpositiveConstant("alpha"));
    }
    Ok(r.value)
}

/// `γ = max eig(A, X)`. `upper_hint`, if it is a strict upper bound, is used
/// as a shift; otherwise plain Lanczos runs.
pub fn gamma_of(a: &SparseMatrix, x: &SparseMatrix, upper_hint: Option<f64>, opts: &EigenOptions) -> Result<f64> {
    if let Some(sigma) = upper_hint {
        match eig_max_below(a, x, sigma, opts) {
            Ok(r) => return Ok(r.value),
            Err(Error::NonpositiveConstant(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(eig_extreme(a, x, Extreme::Max, opts)?.value)
}

/// `(β_Br, γ_b)`: square roots of the extreme eigenvalues of `(B X⁻¹ Bᵀ, Y)`.
pub fn brezzi_pair(b: &SparseMatrix, x: &SparseMatrix, y: &SparseMatrix, opts: &EigenOptions) -> Result<(f64, f64)> {
    let mut pencil = SchurPencil::new(x, b, y)?;
    if b.rows() >= opts.dense_threshold {
        pencil = pencil.with_inverse().map_err(|e| Error::StabilityLoss(e.to_string()))?;
    }
    let (lo, hi) = pencil_min_max(&pencil, opts)?;
    let beta = lo.value.max(0.0).sqrt();
    if beta <= STABILITY_FLOOR {
        return Err(Error::StabilityLoss(format!("beta_Br = {beta:.3e}")));
    }
    Ok((beta, hi.value.max(0.0).sqrt()))
}

/// `γ_b` alone; zero for `B = 0`.
pub fn gamma_b_of(b: &SparseMatrix, x: &SparseMatrix, y: &SparseMatrix, opts: &EigenOptions) -> Result<f64> {
    let pencil = SchurPencil::new(x, b, y)?;
    Ok(pencil_extreme(&pencil, Extreme::Max, opts)?.value.max(0.0).sqrt())
}

/// `β_Br` alone.
pub fn beta_br_of(b: &SparseMatrix, x: &SparseMatrix, y: &SparseMatrix, opts: &EigenOptions) -> Result<f64> {
    Ok(brezzi_pair(b, x, y, opts)?.0)
}

/// `tilde-β = sqrt(min eig(B A⁻¹ Bᵀ, Y))`.
pub fn tilde_beta_of(a: &SparseMatrix, b: &SparseMatrix, y: &SparseMatrix, opts: &EigenOptions) -> Result<f64> {
    let mut pencil = SchurPencil::new(a, b, y)?;
    if b.rows() >= opts.dense_threshold {
        pencil = pencil.with_inverse()?;
    }
    let r = pencil_extreme(&pencil, Extreme::Min, opts)?;
    if r.value <= 0.0 {
        return Err(Error::NonpositiveConstant("tilde beta"));
    }
    Ok(r.value.sqrt())
}

/// `β_Ba = min |λ|` of `(K, Z)`, the smallest Z-norm singular value of K.
pub fn beta_ba_of(
    a: &SparseMatrix,
    b: &SparseMatrix,
    x: &SparseMatrix,
    y: &SparseMatrix,
    opts: &EigenOptions,
) -> Result<f64> {
    let pencil = BlockPencil::new(a, b, x, y)?;
    let r = pencil_extreme(&pencil, Extreme::MinAbs, opts)?;
    let v = r.value.abs();
    if v <= 0.0 {
        return Err(Error::NonpositiveConstant("beta Babuska"));
    }
    Ok(v)
}

/// All truth constants at one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactConstants {
    pub alpha: f64,
    pub gamma: f64,
    pub gamma_b: f64,
    pub beta_br: f64,
    pub beta_ba: f64,
    pub tilde_beta: f64,
}

impl ExactConstants {
    pub fn compute(disc: &TruthDiscretization, mu: &[f64], opts: &EigenOptions) -> Result<Self> {
        let thetas = disc.a().eval_thetas(mu)?;
        let a = disc.a().assemble_at(mu)?;
        let b = disc.b().assemble_at(mu)?;
        let (x, y) = (disc.x_gram(), disc.y_gram());
        let alpha = alpha_of(&a, x, opts)?;
        // Every a-term is positive semidefinite and the terms sum to the
        // stiffness matrix, which the H¹ Gram dominates.
        let hint = thetas.iter().all(|t| *t > 0.0).then(|| 1.001 * thetas.iter().cloned().fold(0.0, f64::max));
        let gamma = gamma_of(&a, x, hint, opts)?;
        let (beta_br, gamma_b) = brezzi_pair(&b, x, y, opts)?;
        let tilde_beta = tilde_beta_of(&a, &b, y, opts)?;
        let beta_ba = beta_ba_of(&a, &b, x, y, opts)?;
        Ok(Self { alpha, gamma, gamma_b, beta_br, beta_ba, tilde_beta })
    }

    pub fn bounds(&self) -> ConstantBounds {
        ConstantBounds {
            alpha_lb: self.alpha,
            alpha_ub: self.alpha,
            gamma_lb: self.gamma,
            gamma_ub: self.gamma,
            gamma_b_ub: self.gamma_b,
            beta_br_lb: self.beta_br,
            beta_br_ub: self.beta_br,
            beta_ba_lb: self.beta_ba,
            tilde_beta: self.tilde_beta,
            mode: ConstantsMode::Exact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstantsMode {
    Exact,
    Surrogate,
}

/// Lower/upper bounds on the constants fed into the error bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantBounds {
    pub alpha_lb: f64,
    pub alpha_ub: f64,
    pub gamma_lb: f64,
    pub gamma_ub: f64,
    pub gamma_b_ub: f64,
    pub beta_br_lb: f64,
    pub beta_br_ub: f64,
    pub beta_ba_lb: f64,
    pub tilde_beta: f64,
    pub mode: ConstantsMode,
}

impl ConstantBounds {
    /// Same value for every lower and upper bound; handy in tests.
    pub fn uniform(alpha: f64, gamma: f64, beta: f64) -> Self {
        Self {
            alpha_lb: alpha,
            alpha_ub: alpha,
            gamma_lb: gamma,
            gamma_ub: gamma,
            gamma_b_ub: gamma,
            beta_br_lb: beta,
            beta_br_ub: beta,
            beta_ba_lb: beta,
            tilde_beta: beta,
            mode: ConstantsMode::Exact,
        }
    }
}

/// Exact constants at training parameters, used to bound constants elsewhere.
///
/// For a-terms that are positive semidefinite with positive θ,
/// `A(µ) ≥ min_q θ_q(µ)/θ_q(µ') · A(µ')`, so the best such ratio over the
/// sample bounds α from below (and symmetrically γ from above). The
/// remaining constants use the nearest sample point. Safety factors apply
/// on top of both.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub samples: Vec<SurrogateSample>,
    /// Domain box used to normalize distances.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub terms_psd: bool,
    pub lower_factor: f64,
    pub upper_factor: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurrogateSample {
    pub mu: Vec<f64>,
    pub a_thetas: Vec<f64>,
    pub constants: ExactConstants,
}

impl SurrogateModel {
    pub fn new(samples: Vec<SurrogateSample>, lower: Vec<f64>, upper: Vec<f64>, terms_psd: bool) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        Ok(Self { samples, lower, upper, terms_psd, lower_factor: 0.9, upper_factor: 1.1 })
    }

    /// Computes exact constants at `mus` (serially, in order).
    pub fn train(disc: &TruthDiscretization, mus: &[Vec<f64>], opts: &EigenOptions) -> Result<Self> {
        let samples = mus
            .iter()
            .map(|mu| {
                Ok(SurrogateSample {
                    mu: mu.clone(),
                    a_thetas: disc.a().eval_thetas(mu)?,
                    constants: ExactConstants::compute(disc, mu, opts)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let d = disc.domain();
        Self::new(samples, d.lower().to_vec(), d.upper().to_vec(), true)
    }

    fn nearest(&self, mu: &[f64]) -> &SurrogateSample {
        let dist = |s: &SurrogateSample| -> f64 {
            s.mu.iter()
                .zip(mu)
                .zip(self.lower.iter().zip(&self.upper))
                .map(|((a, b), (l, u))| ((a - b) / (u - l)).powi(2))
                .sum()
        };
        let mut best = &self.samples[0];
        let mut best_d = dist(best);
        for s in &self.samples[1..] {
            let d = dist(s);
            if d < best_d {
                best = s;
                best_d = d;
            }
        }
        best
    }

    /// Surrogate bounds at `mu`, given the a-form coefficients `θ(µ)`.
    pub fn bounds(&self, mu: &[f64], a_thetas: &[f64]) -> Result<ConstantBounds> {
        let near = self.nearest(mu).constants;
        let ratio_ok = self.terms_psd && a_thetas.iter().all(|t| *t > 0.0);
        let (mut a_lb, mut a_ub, mut g_lb, mut g_ub) = (f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
        if ratio_ok {
            for s in &self.samples {
                if s.a_thetas.len() != a_thetas.len() || s.a_thetas.iter().any(|t| *t <= 0.0) {
                    continue;
                }
                let ratios = a_thetas.iter().zip(&s.a_thetas).map(|(t, r)| t / r);
                let (lo, hi) = ratios.fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r), hi.max(r)));
                a_lb = a_lb.max(lo * s.constants.alpha);
                a_ub = a_ub.min(hi * s.constants.alpha);
                g_lb = g_lb.max(lo * s.constants.gamma);
                g_ub = g_ub.min(hi * s.constants.gamma);
            }
        }
        if !a_lb.is_finite() {
            (a_lb, a_ub, g_lb, g_ub) = (near.alpha, near.alpha, near.gamma, near.gamma);
        }
        let (lf, uf) = (self.lower_factor, self.upper_factor);
        Ok(ConstantBounds {
            alpha_lb: lf * a_lb,
            alpha_ub: uf * a_ub,
            gamma_lb: lf * g_lb,
            gamma_ub: uf * g_ub,
            gamma_b_ub: uf * near.gamma_b,
            beta_br_lb: lf * near.beta_br,
            beta_br_ub: uf * near.beta_br,
            beta_ba_lb: lf * near.beta_ba,
            tilde_beta: lf * near.tilde_beta,
            mode: ConstantsMode::Surrogate,
        })
    }
}
