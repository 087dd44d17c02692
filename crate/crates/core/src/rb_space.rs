//! Nested reduced-basis spaces `X_N ⊂ X`, `Y_N ⊂ Y` with orthonormal bases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, SparseMatrix, SpdFactor};

/// Where a basis column came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    USnapshot,
    PSnapshot,
    Supremizer,
    ExtraSnapshot,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::USnapshot => "u-snapshot",
            Role::PSnapshot => "p-snapshot",
            Role::Supremizer => "supremizer",
            Role::ExtraSnapshot => "extra-snapshot",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Field {
    Velocity,
    Pressure,
}

/// Relative size below which a projected vector counts as dependent.
pub const REJECT_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
struct Basis {
    cols: Vec<Vec<f64>>,
    /// Gram matrix times each column, for cheap inner products.
    gram_cols: Vec<Vec<f64>>,
    roles: Vec<Role>,
    generation: Vec<usize>,
}

impl Basis {
    fn new() -> Self {
        Self { cols: Vec::new(), gram_cols: Vec::new(), roles: Vec::new(), generation: Vec::new() }
    }
}

/// Outcome of one [`RBSpace::insert`] call.
#[derive(Debug, Clone, Default)]
pub struct InsertReport {
    pub accepted: Vec<bool>,
}

impl InsertReport {
    pub fn n_accepted(&self) -> usize {
        self.accepted.iter().filter(|a| **a).count()
    }
}

/// Orthonormal bases (in the X- and Y-Gram inner products) plus the
/// generation structure that makes the spaces nested.
#[derive(Debug, Clone)]
pub struct RBSpace {
    x_gram: SparseMatrix,
    y_gram: SparseMatrix,
    u: Basis,
    p: Basis,
    /// Accepted columns in global insertion order.
    order: Vec<(Field, usize)>,
    /// `(N_X, N_Y)` at the end of each closed generation.
    generations: Vec<(usize, usize)>,
}

impl RBSpace {
    pub fn new(x_gram: SparseMatrix, y_gram: SparseMatrix) -> Self {
        Self { x_gram, y_gram, u: Basis::new(), p: Basis::new(), order: Vec::new(), generations: Vec::new() }
    }

    pub fn x_gram(&self) -> &SparseMatrix {
        &self.x_gram
    }

    pub fn y_gram(&self) -> &SparseMatrix {
        &self.y_gram
    }

    pub fn n_x(&self) -> usize {
        self.u.cols.len()
    }

    pub fn n_y(&self) -> usize {
        self.p.cols.len()
    }

    pub fn n_z(&self) -> usize {
        self.n_x() + self.n_y()
    }

    pub fn velocity_basis(&self) -> &[Vec<f64>] {
        &self.u.cols
    }

    pub fn pressure_basis(&self) -> &[Vec<f64>] {
        &self.p.cols
    }

    pub fn velocity_roles(&self) -> &[Role] {
        &self.u.roles
    }

    pub fn pressure_roles(&self) -> &[Role] {
        &self.p.roles
    }

    pub fn velocity_generation(&self) -> &[usize] {
        &self.u.generation
    }

    pub fn pressure_generation(&self) -> &[usize] {
        &self.p.generation
    }

    pub fn insertion_order(&self) -> &[(Field, usize)] {
        &self.order
    }

    /// `(N_X, N_Y)` of every closed generation, in order.
    pub fn generations(&self) -> &[(usize, usize)] {
        &self.generations
    }

    /// Dimensions of generation `n` (1-based).
    pub fn generation_dims(&self, n: usize) -> Result<(usize, usize)> {
        if n == 0 || n > self.generations.len() {
            return Err(Error::DimensionMismatch(format!(
                "generation {n} not stored (have {})",
                self.generations.len()
            )));
        }
        Ok(self.generations[n - 1])
    }

    /// Seals the columns inserted since the last call into a new generation.
    pub fn close_generation(&mut self) -> usize {
        self.generations.push((self.n_x(), self.n_y()));
        self.generations.len()
    }

    /// Gram–Schmidt (modified, one re-orthogonalization pass) of each vector
    /// against the current basis of `field`. Vectors whose remainder is
    /// below [`REJECT_TOL`] times their original norm are rejected.
    pub fn insert(&mut self, field: Field, vectors: &[(Vec<f64>, Role)]) -> InsertReport {
        let generation = self.generations.len();
        let (basis, gram) = match field {
            Field::Velocity => (&mut self.u, &self.x_gram),
            Field::Pressure => (&mut self.p, &self.y_gram),
        };
        let mut report = InsertReport::default();
        for (v, role) in vectors {
            assert_eq!(v.len(), gram.rows(), "basis vector length");
            let norm0 = dot(v, &gram.mul_vec(v)).max(0.0).sqrt();
            if norm0 == 0.0 || !norm0.is_finite() {
                report.accepted.push(false);
                continue;
            }
            let mut w = v.clone();
            for _ in 0..2 {
                for (z, gz) in basis.cols.iter().zip(&basis.gram_cols) {
                    let c = dot(&w, gz);
                    w.iter_mut().zip(z).for_each(|(a, b)| *a -= c * b);
                }
            }
            let gw = gram.mul_vec(&w);
            let norm = dot(&w, &gw).max(0.0).sqrt();
            if norm < REJECT_TOL * norm0 {
                report.accepted.push(false);
                continue;
            }
            w.iter_mut().for_each(|a| *a /= norm);
            let gw: Vec<f64> = gw.into_iter().map(|a| a / norm).collect();
            self.order.push((field, basis.cols.len()));
            basis.cols.push(w);
            basis.gram_cols.push(gw);
            basis.roles.push(*role);
            basis.generation.push(generation);
            report.accepted.push(true);
        }
        report
    }

    /// `max |ZᵀGZ − I|` for the given field.
    pub fn orthonormality_defect(&self, field: Field) -> f64 {
        let basis = match field {
            Field::Velocity => &self.u,
            Field::Pressure => &self.p,
        };
        let mut worst = 0.0f64;
        for (i, zi) in basis.cols.iter().enumerate() {
            for (j, gzj) in basis.gram_cols.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(zi, gzj) - target).abs());
            }
        }
        worst
    }

    /// Velocity coefficients → truth vector, using the first `n_x` columns.
    pub fn expand_velocity(&self, coeffs: &[f64]) -> Vec<f64> {
        expand(&self.u.cols, coeffs, self.x_gram.rows())
    }

    pub fn expand_pressure(&self, coeffs: &[f64]) -> Vec<f64> {
        expand(&self.p.cols, coeffs, self.y_gram.rows())
    }

    /// Rebuilds a space from stored columns (already orthonormal).
    pub(crate) fn from_parts(
        x_gram: SparseMatrix,
        y_gram: SparseMatrix,
        u: Vec<(Vec<f64>, Role, usize)>,
        p: Vec<(Vec<f64>, Role, usize)>,
        order: Vec<(Field, usize)>,
        generations: Vec<(usize, usize)>,
    ) -> Self {
        let build = |cols: Vec<(Vec<f64>, Role, usize)>, g: &SparseMatrix| {
            let mut b = Basis::new();
            for (c, r, gen) in cols {
                b.gram_cols.push(g.mul_vec(&c));
                b.cols.push(c);
                b.roles.push(r);
                b.generation.push(gen);
            }
            b
        };
        let u = build(u, &x_gram);
        let p = build(p, &y_gram);
        Self { x_gram, y_gram, u, p, order, generations }
    }
}

fn expand(cols: &[Vec<f64>], coeffs: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (c, z) in coeffs.iter().zip(cols) {
        out.iter_mut().zip(z).for_each(|(o, v)| *o += c * v);
    }
    out
}

/// Supremizer `T q = X⁻¹ Bᵀ q`, the Riesz representer of `b(·, q; µ)`.
pub fn supremizer(x_factor: &SpdFactor, b: &SparseMatrix, q: &[f64]) -> Result<Vec<f64>> {
    if q.iter().all(|v| *v == 0.0) {
        return Ok(vec![0.0; b.cols()]);
    }
    x_factor.solve(&b.mul_transpose_vec(q))
}

/// Smallest singular value of a dense `n_y × n_x` block (row-major); the
/// RB inf-sup constant for orthonormal bases. `+∞` when `n_y = 0`.
pub fn infsup_of_block(bn: &nalgebra::DMatrix<f64>) -> f64 {
    if bn.nrows() == 0 {
        return f64::INFINITY;
    }
    if bn.nrows() > bn.ncols() {
        return 0.0;
    }
    let bbt = bn * bn.transpose();
    let eig = nalgebra::SymmetricEigen::new(bbt);
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0).sqrt()
}

/// `β_N(µ)` computed from the truth operator `B(µ)` and the space.
pub fn rb_infsup(space: &RBSpace, b: &SparseMatrix) -> f64 {
    let (nx, ny) = (space.n_x(), space.n_y());
    let mut bn = nalgebra::DMatrix::<f64>::zeros(ny, nx);
    for (j, z) in space.velocity_basis().iter().enumerate() {
        let bz = b.mul_vec(z);
        for (i, q) in space.pressure_basis().iter().enumerate() {
            bn[(i, j)] = dot(q, &bz);
        }
    }
    infsup_of_block(&bn)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gram(n: usize) -> SparseMatrix {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            d[i * n + i] = 2.0 + i as f64;
            if i + 1 < n {
                d[i * n + i + 1] = 0.5;
                d[(i + 1) * n + i] = 0.5;
            }
        }
        SparseMatrix::from_dense(n, n, &d).with_symmetric(true)
    }

    #[test]
    fn duplicates_are_rejected_and_basis_stays_orthonormal() {
        let mut s = RBSpace::new(gram(6), gram(3));
        let v = vec![1.0, 2.0, 0.0, -1.0, 0.5, 3.0];
        let r = s.insert(Field::Velocity, &[(v.clone(), Role::USnapshot), (v.clone(), Role::USnapshot)]);
        assert_eq!(r.accepted, vec![true, false]);
        let w: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
        assert_eq!(s.insert(Field::Velocity, &[(w, Role::Supremizer)]).n_accepted(), 0);
        let batch: Vec<(Vec<f64>, Role)> =
            (0..4).map(|k| ((0..6).map(|i| ((i * 7 + k * 3) % 5) as f64 - 2.0).collect(), Role::ExtraSnapshot)).collect();
        s.insert(Field::Velocity, &batch);
        assert!(s.orthonormality_defect(Field::Velocity) < 1e-10);
        assert_eq!(s.insertion_order()[0], (Field::Velocity, 0));
    }

    #[test]
    fn generations_are_nested() {
        let mut s = RBSpace::new(gram(4), gram(2));
        s.insert(Field::Velocity, &[(vec![1.0, 0.0, 0.0, 0.0], Role::USnapshot)]);
        s.insert(Field::Pressure, &[(vec![1.0, 1.0], Role::PSnapshot)]);
        assert_eq!(s.close_generation(), 1);
        let first = s.velocity_basis()[0].clone();
        s.insert(Field::Velocity, &[(vec![0.0, 1.0, 1.0, 0.0], Role::USnapshot)]);
        s.close_generation();
        assert_eq!(s.generations(), &[(1, 1), (2, 1)]);
        assert_eq!(s.velocity_basis()[0], first);
        assert!(s.generation_dims(3).is_err());
    }

    #[test]
    fn empty_pressure_space_is_vacuously_stable() {
        let s = RBSpace::new(gram(3), gram(2));
        assert_eq!(rb_infsup(&s, &SparseMatrix::zeros(2, 3)), f64::INFINITY);
    }
}
