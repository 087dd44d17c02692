//! Shared fixtures and dense reference computations.
#![allow(dead_code)]

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rbsaddle::numerics::SparseMatrix;
use rbsaddle::stokes::{Geometry, TruthDiscretization};

/// Few enough dofs for dense eigen decompositions.
pub fn coarse_geometry() -> Geometry {
    Geometry { base_h: 0.4, ..Default::default() }
}

pub fn coarse() -> &'static TruthDiscretization {
    static D: OnceLock<TruthDiscretization> = OnceLock::new();
    D.get_or_init(|| TruthDiscretization::build(&coarse_geometry()).expect("coarse truth"))
}

pub fn desk() -> &'static TruthDiscretization {
    static D: OnceLock<TruthDiscretization> = OnceLock::new();
    D.get_or_init(|| TruthDiscretization::build(&Geometry::default()).expect("desk truth"))
}

pub fn dense(m: &SparseMatrix) -> DMatrix<f64> {
    m.to_nalgebra()
}

/// Sorted eigenvalues of the symmetric pencil `(m, g)`, `g` SPD.
pub fn pencil_eigenvalues(m: &DMatrix<f64>, g: &DMatrix<f64>) -> Vec<f64> {
    let l = g.clone().cholesky().expect("SPD Gram").l();
    let li = l.clone().try_inverse().expect("invertible factor");
    let s = &li * m * li.transpose();
    let s = (&s + s.transpose()) * 0.5;
    let mut ev: Vec<f64> = s.symmetric_eigen().eigenvalues.iter().cloned().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// `(α, γ, γ_b, β_Br, tilde β, β_Ba)` from dense linear algebra.
pub fn dense_constants(disc: &TruthDiscretization, mu: &[f64]) -> [f64; 6] {
    let a = dense(&disc.a().assemble_at(mu).unwrap());
    let b = dense(&disc.b().assemble_at(mu).unwrap());
    let x = dense(disc.x_gram());
    let y = dense(disc.y_gram());
    let ax = pencil_eigenvalues(&a, &x);
    let xi = x.clone().try_inverse().unwrap();
    let ai = a.clone().try_inverse().unwrap();
    let sx = pencil_eigenvalues(&(&b * &xi * b.transpose()), &y);
    let sa = pencil_eigenvalues(&(&b * &ai * b.transpose()), &y);
    let (nu, np) = (a.nrows(), b.nrows());
    let mut k = DMatrix::zeros(nu + np, nu + np);
    let mut z = DMatrix::zeros(nu + np, nu + np);
    k.view_mut((0, 0), (nu, nu)).copy_from(&a);
    k.view_mut((nu, 0), (np, nu)).copy_from(&b);
    k.view_mut((0, nu), (nu, np)).copy_from(&b.transpose());
    z.view_mut((0, 0), (nu, nu)).copy_from(&x);
    z.view_mut((nu, nu), (np, np)).copy_from(&y);
    let kz = pencil_eigenvalues(&k, &z);
    let beta_ba = kz.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    [ax[0], *ax.last().unwrap(), sx.last().unwrap().sqrt(), sx[0].sqrt(), sa[0].sqrt(), beta_ba]
}

/// Dense block solve of the truth saddle system.
pub fn dense_truth_solve(disc: &TruthDiscretization, mu: &[f64]) -> (DVector<f64>, DVector<f64>) {
    let a = dense(&disc.a().assemble_at(mu).unwrap());
    let b = dense(&disc.b().assemble_at(mu).unwrap());
    let f = DVector::from_vec(disc.f().assemble_at(mu).unwrap());
    let g = DVector::from_vec(disc.g().assemble_at(mu).unwrap());
    let (nu, np) = (a.nrows(), b.nrows());
    let mut k = DMatrix::zeros(nu + np, nu + np);
    k.view_mut((0, 0), (nu, nu)).copy_from(&a);
    k.view_mut((nu, 0), (np, nu)).copy_from(&b);
    k.view_mut((0, nu), (nu, np)).copy_from(&b.transpose());
    let mut rhs = DVector::zeros(nu + np);
    rhs.rows_mut(0, nu).copy_from(&f);
    rhs.rows_mut(nu, np).copy_from(&g);
    let s = k.lu().solve(&rhs).expect("nonsingular block system");
    (s.rows(0, nu).into_owned(), s.rows(nu, np).into_owned())
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn grid(points: &[f64]) -> Vec<Vec<f64>> {
    points.iter().flat_map(|&a| points.iter().map(move |&b| vec![a, b])).collect()
}

/// Velocity, pressure and supremizer snapshots at each µ, one generation per µ.
pub fn snapshot_space(disc: &TruthDiscretization, mus: &[[f64; 2]]) -> rbsaddle::rb_space::RBSpace {
    use rbsaddle::rb_space::{supremizer, Field, RBSpace, Role};
    let xf = rbsaddle::numerics::SpdFactor::new(disc.x_gram()).unwrap();
    let mut space = RBSpace::new(disc.x_gram().clone(), disc.y_gram().clone());
    for mu in mus {
        let sol = disc.solve(mu).unwrap();
        let s = supremizer(&xf, &disc.b().assemble_at(mu).unwrap(), &sol.p).unwrap();
        space.insert(Field::Velocity, &[(sol.u, Role::USnapshot), (s, Role::Supremizer)]);
        space.insert(Field::Pressure, &[(sol.p, Role::PSnapshot)]);
        space.close_generation();
    }
    space
}

pub const SNAPSHOT_MUS: [[f64; 2]; 4] = [[0.2, 0.2], [0.6, 0.6], [0.3, 0.5], [0.5, 0.25]];
