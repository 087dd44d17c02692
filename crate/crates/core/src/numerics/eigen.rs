//! Extremal eigenvalues of symmetric pencils `M v = λ G v` with `G` SPD.
//!
//! Large pencils go through a Lanczos iteration with full
//! G-reorthogonalization on a spectral transform (`G⁻¹M`, or shift-invert
//! `M⁻¹G` at zero when `M` can be factorized); small ones are reduced to a
//! dense standard problem.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::solve::SpdFactor;
use super::sparse::{dot, SparseMatrix};
use crate::error::{Error, Result};

/// Which end of the spectrum is wanted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extreme {
    Min,
    Max,
    /// Eigenvalue of smallest magnitude (needs `M⁻¹`).
    MinAbs,
}

#[derive(Debug, Clone)]
pub struct EigenOptions {
    /// Relative eigen-residual required on success.
    pub tol: f64,
    /// Krylov dimension per restart.
    pub max_krylov: usize,
    pub max_restarts: usize,
    pub seed: u64,
    /// Pencils with dimension below this are solved densely.
    pub dense_threshold: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_krylov: 300, max_restarts: 30, seed: 0x5eed_1a2c, dense_threshold: 2000 }
    }
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

/// A symmetric pencil given through its actions.
pub trait Pencil {
    fn dim(&self) -> usize;
    /// `M x`
    fn apply_m(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// `G x`
    fn apply_g(&self, x: &[f64]) -> Vec<f64>;
    /// `G⁻¹ x`
    fn solve_g(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// `M⁻¹ x`, when `M` is factorized.
    fn solve_m(&self, _x: &[f64]) -> Option<Result<Vec<f64>>> {
        None
    }
    /// True if `M` is known to be positive definite; enables shift-invert for `Min`.
    fn m_positive_definite(&self) -> bool {
        false
    }
}

/// Pencil of two assembled sparse matrices.
pub struct MatrixPencil<'a> {
    m: &'a SparseMatrix,
    g: &'a SparseMatrix,
    g_factor: SpdFactor,
    m_factor: Option<SpdFactor>,
}

impl<'a> MatrixPencil<'a> {
    pub fn new(m: &'a SparseMatrix, g: &'a SparseMatrix) -> Result<Self> {
        if m.rows() != m.cols() || g.rows() != m.rows() || g.cols() != m.cols() {
            return Err(Error::DimensionMismatch("pencil matrices must be square and equally sized".into()));
        }
        Ok(Self { m, g, g_factor: SpdFactor::new(g)?, m_factor: None })
    }

    /// Also factorizes `M` (must be SPD) so the lower end can use shift-invert.
    pub fn with_spd_lhs(mut self) -> Result<Self> {
        self.m_factor = Some(SpdFactor::new(self.m)?);
        Ok(self)
    }
}

impl Pencil for MatrixPencil<'_> {
    fn dim(&self) -> usize {
        self.m.rows()
    }
    fn apply_m(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.m.mul_vec(x))
    }
    fn apply_g(&self, x: &[f64]) -> Vec<f64> {
        self.g.mul_vec(x)
    }
    fn solve_g(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.g_factor.solve(x)
    }
    fn solve_m(&self, x: &[f64]) -> Option<Result<Vec<f64>>> {
        self.m_factor.as_ref().map(|f| f.solve(x))
    }
    fn m_positive_definite(&self) -> bool {
        self.m_factor.is_some()
    }
}

/// Extremal generalized eigenvalue of the sparse pencil `(M, G)`.
///
/// For `Min` the routine tries a Cholesky factorization of `M` and uses
/// shift-invert when it succeeds.
pub fn eig_extreme(m: &SparseMatrix, g: &SparseMatrix, which: Extreme, opts: &EigenOptions) -> Result<EigenResult> {
    let pencil = MatrixPencil::new(m, g)?;
    let pencil = if which != Extreme::Max && m.rows() >= opts.dense_threshold {
        match SpdFactor::new(m) {
            Ok(f) => MatrixPencil { m_factor: Some(f), ..pencil },
            Err(_) if which == Extreme::Min => pencil,
            Err(e) => return Err(e),
        }
    } else {
        pencil
    };
    pencil_extreme(&pencil, which, opts)
}

/// Largest eigenvalue of `(M, G)` given `sigma` with `σG − M` positive
/// definite. Lanczos runs on `(σG − M)⁻¹G`, whose dominant eigenvalue
/// `1/(σ − λ_max)` is much better separated than `λ_max` itself.
pub fn eig_max_below(m: &SparseMatrix, g: &SparseMatrix, sigma: f64, opts: &EigenOptions) -> Result<EigenResult> {
    if m.rows() < opts.dense_threshold {
        return eig_extreme(m, g, Extreme::Max, opts);
    }
    let shifted = SparseMatrix::linear_combination(&[sigma, -1.0], &[g, m])?.with_symmetric(true);
    let factor = SpdFactor::new(&shifted).map_err(|_| Error::NonpositiveConstant("shift below the spectrum"))?;
    let op = |x: &[f64]| factor.solve(&g.mul_vec(x));
    let out = lanczos(m.rows(), &op, &|x| g.mul_vec(x), Wanted::Largest, opts)?;
    Ok(EigenResult {
        value: sigma - 1.0 / out.theta,
        vector: out.vector,
        residual_norm: out.residual,
        iterations: out.iterations,
    })
}

/// Extremal eigenvalue of an operator-defined pencil.
pub fn pencil_extreme(p: &dyn Pencil, which: Extreme, opts: &EigenOptions) -> Result<EigenResult> {
    let n = p.dim();
    if n == 0 {
        return Err(Error::DimensionMismatch("empty pencil".into()));
    }
    if n < opts.dense_threshold {
        return dense_extreme(p, which);
    }
    match which {
        Extreme::Max => {
            let op = |x: &[f64]| p.apply_m(x).and_then(|mx| p.solve_g(&mx));
            let out = lanczos(n, &op, &|x| p.apply_g(x), Wanted::Largest, opts)?;
            Ok(EigenResult { value: out.theta, vector: out.vector, residual_norm: out.residual, iterations: out.iterations })
        }
        Extreme::Min if p.m_positive_definite() => {
            let op = |x: &[f64]| p.solve_m(&p.apply_g(x)).expect("factorized M");
            let out = lanczos(n, &op, &|x| p.apply_g(x), Wanted::Largest, opts)?;
            Ok(EigenResult {
                value: 1.0 / out.theta,
                vector: out.vector,
                residual_norm: out.residual,
                iterations: out.iterations,
            })
        }
        Extreme::Min => {
            let op = |x: &[f64]| p.apply_m(x).and_then(|mx| p.solve_g(&mx));
            let out = lanczos(n, &op, &|x| p.apply_g(x), Wanted::Smallest, opts)?;
            Ok(EigenResult { value: out.theta, vector: out.vector, residual_norm: out.residual, iterations: out.iterations })
        }
        Extreme::MinAbs => {
            if p.solve_m(&vec![0.0; n]).is_none() {
                return Err(Error::DimensionMismatch("MinAbs needs a factorized left-hand side".into()));
            }
            let op = |x: &[f64]| p.solve_m(&p.apply_g(x)).expect("factorized M");
            let out = lanczos(n, &op, &|x| p.apply_g(x), Wanted::LargestMagnitude, opts)?;
            Ok(EigenResult {
                value: 1.0 / out.theta,
                vector: out.vector,
                residual_norm: out.residual,
                iterations: out.iterations,
            })
        }
    }
}

/// Both extremes of a pencil; the dense route shares one assembly.
pub fn pencil_min_max(p: &dyn Pencil, opts: &EigenOptions) -> Result<(EigenResult, EigenResult)> {
    let n = p.dim();
    if n == 0 || n >= opts.dense_threshold {
        return Ok((pencil_extreme(p, Extreme::Min, opts)?, pencil_extreme(p, Extreme::Max, opts)?));
    }
    let (m, g) = dense_operators(p)?;
    let (lo, lo_v, lo_r) = dense_pencil_extreme(&m, &g, Extreme::Min)?;
    let (hi, hi_v, hi_r) = dense_pencil_extreme(&m, &g, Extreme::Max)?;
    Ok((
        EigenResult { value: lo, vector: lo_v, residual_norm: lo_r, iterations: 0 },
        EigenResult { value: hi, vector: hi_v, residual_norm: hi_r, iterations: 0 },
    ))
}

fn dense_operators(p: &dyn Pencil) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = p.dim();
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut g = DMatrix::<f64>::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let mj = p.apply_m(&e)?;
        let gj = p.apply_g(&e);
        for i in 0..n {
            m[(i, j)] = mj[i];
            g[(i, j)] = gj[i];
        }
        e[j] = 0.0;
    }
    Ok((m, g))
}

/// Dense route: `G = L Lᵀ`, `C = L⁻¹ M L⁻ᵀ`, full symmetric eigendecomposition.
fn dense_extreme(p: &dyn Pencil, which: Extreme) -> Result<EigenResult> {
    let (m, g) = dense_operators(p)?;
    let (value, vector, residual) = dense_pencil_extreme(&m, &g, which)?;
    Ok(EigenResult { value, vector, residual_norm: residual, iterations: 0 })
}

/// Extremal eigenpair of a dense symmetric pencil; returns (λ, v, relative residual).
pub fn dense_pencil_extreme(m: &DMatrix<f64>, g: &DMatrix<f64>, which: Extreme) -> Result<(f64, Vec<f64>, f64)> {
    let n = m.nrows();
    let m = (m + m.transpose()) * 0.5;
    let g = (g + g.transpose()) * 0.5;
    let chol = g.clone().cholesky().ok_or(Error::NotSpd)?;
    let l = chol.l();
    let linv_m = l.solve_lower_triangular(&m).ok_or_else(|| Error::Singular("G factor".into()))?;
    let c = l
        .solve_lower_triangular(&linv_m.transpose())
        .ok_or_else(|| Error::Singular("G factor".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c.clone());
    let idx = (0..n)
        .reduce(|a, b| {
            let (va, vb) = (eig.eigenvalues[a], eig.eigenvalues[b]);
            let better = match which {
                Extreme::Min => vb < va,
                Extreme::Max => vb > va,
                Extreme::MinAbs => vb.abs() < va.abs(),
            };
            if better {
                b
            } else {
                a
            }
        })
        .unwrap();
    let lambda = eig.eigenvalues[idx];
    let y: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
    let res_vec = &c * &y - &y * lambda;
    let scale = lambda.abs().max(c.amax() * f64::EPSILON);
    let residual = res_vec.norm() / (scale * y.norm());
    let v = l.transpose().solve_upper_triangular(&y).ok_or_else(|| Error::Singular("G factor".into()))?;
    Ok((lambda, v.iter().copied().collect(), residual))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Wanted {
    Largest,
    Smallest,
    LargestMagnitude,
}

struct LanczosOutput {
    theta: f64,
    vector: Vec<f64>,
    residual: f64,
    iterations: usize,
}

fn g_normalize(v: &mut [f64], gram: &dyn Fn(&[f64]) -> Vec<f64>) -> f64 {
    let nrm = dot(v, &gram(v)).sqrt();
    if nrm > 0.0 {
        v.iter_mut().for_each(|x| *x /= nrm);
    }
    nrm
}

/// Lanczos with full reorthogonalization in the G inner product, explicit
/// restarts from the current best Ritz vector.
fn lanczos(
    n: usize,
    op: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    gram: &dyn Fn(&[f64]) -> Vec<f64>,
    wanted: Wanted,
    opts: &EigenOptions,
) -> Result<LanczosOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut start: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let m_max = opts.max_krylov.min(n).max(1);
    let mut total = 0usize;
    let mut best_residual = f64::INFINITY;

    for _restart in 0..=opts.max_restarts {
        let mut v = start.clone();
        if g_normalize(&mut v, gram) == 0.0 {
            return Err(Error::Singular("zero Lanczos start vector".into()));
        }
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m_max);
        let mut gbasis: Vec<Vec<f64>> = Vec::with_capacity(m_max);
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        let mut ritz: Option<(f64, Vec<f64>)> = None;

        for j in 0..m_max {
            let gv = gram(&v);
            basis.push(v.clone());
            gbasis.push(gv);
            let mut w = op(&basis[j])?;
            total += 1;
            let alpha = dot(&w, &gbasis[j]);
            alphas.push(alpha);
            for (wi, vi) in w.iter_mut().zip(&basis[j]) {
                *wi -= alpha * vi;
            }
            if j > 0 {
                let b = betas[j - 1];
                for (wi, vi) in w.iter_mut().zip(&basis[j - 1]) {
                    *wi -= b * vi;
                }
            }
            for _ in 0..2 {
                for (vi, gvi) in basis.iter().zip(&gbasis) {
                    let c = dot(&w, gvi);
                    if c != 0.0 {
                        w.iter_mut().zip(vi).for_each(|(a, b)| *a -= c * b);
                    }
                }
            }
            let beta = dot(&w, &gram(&w)).max(0.0).sqrt();
            let k = j + 1;
            let scale = alphas.iter().fold(0.0f64, |m, a| m.max(a.abs())).max(f64::MIN_POSITIVE);
            let breakdown = beta <= 1e-13 * scale;
            let check = breakdown || k == m_max || k == n || (k >= 4 && k % 4 == 0);
            if check {
                let (theta, s) = tridiagonal_extreme(&alphas, &betas, wanted);
                let est = (beta * s[k - 1]).abs();
                ritz = Some((theta, s.clone()));
                if breakdown || est <= opts.tol * theta.abs() * 0.5 {
                    let mut y = vec![0.0; n];
                    for (coef, vi) in s.iter().zip(&basis) {
                        y.iter_mut().zip(vi).for_each(|(a, b)| *a += coef * b);
                    }
                    g_normalize(&mut y, gram);
                    let mut r = op(&y)?;
                    total += 1;
                    r.iter_mut().zip(&y).for_each(|(a, b)| *a -= theta * b);
                    let residual = dot(&r, &gram(&r)).max(0.0).sqrt() / theta.abs();
                    best_residual = best_residual.min(residual);
                    if residual <= opts.tol {
                        return Ok(LanczosOutput { theta, vector: y, residual, iterations: total });
                    }
                    start = y;
                    break;
                }
            }
            if breakdown || k == m_max {
                break;
            }
            betas.push(beta);
            v = w;
            v.iter_mut().for_each(|x| *x /= beta);
        }
        if let Some((_, s)) = ritz {
            if s.len() == basis.len() {
                let mut y = vec![0.0; n];
                for (coef, vi) in s.iter().zip(&basis) {
                    y.iter_mut().zip(vi).for_each(|(a, b)| *a += coef * b);
                }
                start = y;
            }
        }
    }
    Err(Error::NoConvergence { iterations: total, residual: best_residual })
}

/// Wanted eigenpair of the symmetric tridiagonal matrix (alphas, betas).
fn tridiagonal_extreme(alphas: &[f64], betas: &[f64], wanted: Wanted) -> (f64, Vec<f64>) {
    let k = alphas.len();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let idx = (0..k)
        .reduce(|a, b| {
            let (va, vb) = (eig.eigenvalues[a], eig.eigenvalues[b]);
            let better = match wanted {
                Wanted::Largest => vb > va,
                Wanted::Smallest => vb < va,
                Wanted::LargestMagnitude => vb.abs() > va.abs(),
            };
            if better {
                b
            } else {
                a
            }
        })
        .unwrap();
    (eig.eigenvalues[idx], eig.eigenvectors.column(idx).iter().copied().collect())
}
