//! Sparse direct solvers: Cholesky for SPD Gram/stiffness matrices, LU for
//! the symmetric indefinite saddle-point block.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::LltError;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use super::sparse::{norm2, SparseMatrix};
use crate::error::{Error, Result};

/// Relative residual accepted from [`solve_spd`].
pub const SPD_RESIDUAL_TOL: f64 = 1e-10;
/// Relative block residual accepted from [`solve_saddle`].
pub const SADDLE_RESIDUAL_TOL: f64 = 1e-9;

fn to_faer(m: &SparseMatrix) -> Result<SparseColMat<usize, f64>> {
    let trips: Vec<Triplet<usize, usize, f64>> = m.triplets().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
    SparseColMat::try_new_from_triplets(m.rows(), m.cols(), &trips)
        .map_err(|e| Error::DimensionMismatch(format!("sparse conversion failed: {e:?}")))
}

fn lower_triangle(m: &SparseMatrix) -> Result<SparseColMat<usize, f64>> {
    let trips: Vec<Triplet<usize, usize, f64>> =
        m.triplets().filter(|&(r, c, _)| r >= c).map(|(r, c, v)| Triplet::new(r, c, v)).collect();
    SparseColMat::try_new_from_triplets(m.rows(), m.cols(), &trips)
        .map_err(|e| Error::DimensionMismatch(format!("sparse conversion failed: {e:?}")))
}

fn solve_with<S: Solve<f64>>(factor: &S, rhs: &[f64]) -> Vec<f64> {
    let mut x = Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
    factor.solve_in_place(x.as_mut());
    (0..rhs.len()).map(|i| x[(i, 0)]).collect()
}

fn relative_residual(m: &SparseMatrix, x: &[f64], rhs: &[f64]) -> f64 {
    let mut r = m.mul_vec(x);
    r.iter_mut().zip(rhs).for_each(|(ri, bi)| *ri -= bi);
    let scale = norm2(rhs);
    if scale == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / scale
    }
}

/// Sparse Cholesky factorization of an SPD matrix (fill-reducing ordering
/// chosen by faer).
pub struct SpdFactor {
    matrix: SparseMatrix,
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
}

impl SpdFactor {
    pub fn new(m: &SparseMatrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::DimensionMismatch("SPD factor of a non-square matrix".into()));
        }
        let lower = lower_triangle(m)?;
        let llt = lower.sp_cholesky(Side::Lower).map_err(|e| match e {
            LltError::Numeric(_) => Error::NotSpd,
            LltError::Generic(g) => Error::Singular(format!("{g:?}")),
        })?;
        Ok(Self { matrix: m.clone(), llt })
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    /// Solves with one step of iterative refinement when the first pass
    /// misses the residual target.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!("rhs length {} vs {}", rhs.len(), self.dim())));
        }
        let mut x = solve_with(&self.llt, rhs);
        let mut res = relative_residual(&self.matrix, &x, rhs);
        if res > SPD_RESIDUAL_TOL && res.is_finite() {
            let mut r = self.matrix.mul_vec(&x);
            r.iter_mut().zip(rhs).for_each(|(ri, bi)| *ri = bi - *ri);
            let dx = solve_with(&self.llt, &r);
            x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
            res = relative_residual(&self.matrix, &x, rhs);
        }
        if !res.is_finite() {
            return Err(Error::Singular("non-finite Cholesky solution".into()));
        }
        if res > SPD_RESIDUAL_TOL {
            return Err(Error::Singular(format!("Cholesky residual {res:.2e} above tolerance")));
        }
        Ok(x)
    }
}

/// Sparse LU (partial pivoting) of a general square matrix; used for the
/// indefinite saddle-point block.
pub struct LuFactor {
    matrix: SparseMatrix,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl LuFactor {
    pub fn new(m: &SparseMatrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::DimensionMismatch("LU of a non-square matrix".into()));
        }
        if m.has_zero_row() {
            return Err(Error::Singular("matrix has a zero row".into()));
        }
        let lu = to_faer(m)?.sp_lu().map_err(|e| Error::Singular(format!("{e:?}")))?;
        Ok(Self { matrix: m.clone(), lu })
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn solve(&self, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
        if rhs.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!("rhs length {} vs {}", rhs.len(), self.dim())));
        }
        let mut x = solve_with(&self.lu, rhs);
        let mut res = relative_residual(&self.matrix, &x, rhs);
        if res > tol && res.is_finite() {
            let mut r = self.matrix.mul_vec(&x);
            r.iter_mut().zip(rhs).for_each(|(ri, bi)| *ri = bi - *ri);
            let dx = solve_with(&self.lu, &r);
            x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
            res = relative_residual(&self.matrix, &x, rhs);
        }
        if !res.is_finite() || res > tol {
            return Err(Error::Singular(format!("LU residual {res:.2e} above tolerance {tol:.1e}")));
        }
        Ok(x)
    }
}

/// Solves `M x = rhs` for SPD `M`.
pub fn solve_spd(m: &SparseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    SpdFactor::new(m)?.solve(rhs)
}

/// Factorization of `K = [[A, Bᵀ], [B, 0]]`, reusable across right-hand sides.
pub struct SaddleFactor {
    n_u: usize,
    n_p: usize,
    lu: LuFactor,
}

impl SaddleFactor {
    pub fn new(a: &SparseMatrix, b: &SparseMatrix) -> Result<Self> {
        if b.has_zero_row() {
            return Err(Error::SingularSystem("constraint operator B has a zero row (rank deficient)".into()));
        }
        let k = SparseMatrix::saddle_block(a, b)?;
        let lu = LuFactor::new(&k).map_err(|e| Error::SingularSystem(e.to_string()))?;
        Ok(Self { n_u: a.rows(), n_p: b.rows(), lu })
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn n_p(&self) -> usize {
        self.n_p
    }

    /// Full block solve `K [u; p] = [f; g]`.
    pub fn solve(&self, f: &[f64], g: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if f.len() != self.n_u || g.len() != self.n_p {
            return Err(Error::DimensionMismatch("saddle right-hand side".into()));
        }
        let rhs: Vec<f64> = f.iter().chain(g).copied().collect();
        let x = self.lu.solve(&rhs, SADDLE_RESIDUAL_TOL).map_err(|e| Error::SingularSystem(e.to_string()))?;
        let (u, p) = x.split_at(self.n_u);
        Ok((u.to_vec(), p.to_vec()))
    }

    /// Applies the inverse Schur complement `(B A⁻¹ Bᵀ)⁻¹ r`.
    pub fn solve_schur(&self, r: &[f64]) -> Result<Vec<f64>> {
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let (_, z) = self.solve(&vec![0.0; self.n_u], &neg)?;
        Ok(z)
    }

    /// Applies `K⁻¹` to a stacked vector.
    pub fn solve_stacked(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let (f, g) = rhs.split_at(self.n_u);
        let (u, p) = self.solve(f, g)?;
        Ok(u.into_iter().chain(p).collect())
    }
}

/// Solves the saddle-point system `A u + Bᵀ p = f`, `B u = g`.
pub fn solve_saddle(a: &SparseMatrix, b: &SparseMatrix, f: &[f64], g: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    SaddleFactor::new(a, b)?.solve(f, g)
}
