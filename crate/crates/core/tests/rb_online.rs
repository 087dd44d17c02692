mod common;

use std::sync::OnceLock;

use common::{coarse, snapshot_space, SNAPSHOT_MUS};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rbsaddle::bounds::{direct_residual_norms, true_errors};
use rbsaddle::constants::ExactConstants;
use rbsaddle::numerics::{dot, EigenOptions, SpdFactor};
use rbsaddle::rb_online::{energy_residual_bounds, energy_residual_norm, truth_residuals, ReducedModel, RieszTerm};
use rbsaddle::rb_space::{Field, RBSpace, Role};
use rbsaddle::Error;

fn fixture() -> &'static (RBSpace, ReducedModel) {
    static F: OnceLock<(RBSpace, ReducedModel)> = OnceLock::new();
    F.get_or_init(|| {
        let space = snapshot_space(coarse(), &SNAPSHOT_MUS);
        let model = ReducedModel::project(coarse(), &space).unwrap();
        (space, model)
    })
}

fn columns(cols: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(cols[0].len(), cols.len(), |i, j| cols[j][i])
}

/// Dense Galerkin projection of the truth system onto the first `(nx, ny)` columns.
fn dense_galerkin(space: &RBSpace, mu: &[f64], nx: usize, ny: usize) -> (DVector<f64>, DVector<f64>) {
    let d = coarse();
    let v = columns(&space.velocity_basis()[..nx]);
    let w = columns(&space.pressure_basis()[..ny]);
    let a = common::dense(&d.a().assemble_at(mu).unwrap());
    let b = common::dense(&d.b().assemble_at(mu).unwrap());
    let f = DVector::from_vec(d.f().assemble_at(mu).unwrap());
    let g = DVector::from_vec(d.g().assemble_at(mu).unwrap());
    let an = v.transpose() * a * &v;
    let bn = w.transpose() * b * &v;
    let mut k = DMatrix::zeros(nx + ny, nx + ny);
    k.view_mut((0, 0), (nx, nx)).copy_from(&an);
    k.view_mut((nx, 0), (ny, nx)).copy_from(&bn);
    k.view_mut((0, nx), (nx, ny)).copy_from(&bn.transpose());
    let mut rhs = DVector::zeros(nx + ny);
    rhs.rows_mut(0, nx).copy_from(&(v.transpose() * f));
    rhs.rows_mut(nx, ny).copy_from(&(w.transpose() * g));
    let x = k.lu().solve(&rhs).unwrap();
    (x.rows(0, nx).into_owned(), x.rows(nx, ny).into_owned())
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn online_solve_matches_dense_galerkin(m0 in 0.2f64..=0.6, m1 in 0.2f64..=0.6, n in 1usize..=4) {
        let (space, model) = fixture();
        let sol = model.online_solve(&[m0, m1], n).unwrap();
        let (u, p) = dense_galerkin(space, &[m0, m1], sol.n_x, sol.n_y);
        prop_assert!(max_rel(&sol.u, u.as_slice()) < 1e-10);
        prop_assert!(max_rel(&sol.p, p.as_slice()) < 1e-10);
    }

    #[test]
    fn truth_residual_is_orthogonal_to_the_spaces(m0 in 0.2f64..=0.6, m1 in 0.2f64..=0.6, n in 1usize..=4) {
        let (space, model) = fixture();
        let sol = model.online_solve(&[m0, m1], n).unwrap();
        let (r1, r2) = truth_residuals(coarse(), space, &sol).unwrap();
        let (s1, s2) = (common::dense(coarse().x_gram()).norm(), 1.0 + r2.iter().map(|v| v.abs()).sum::<f64>());
        for z in &space.velocity_basis()[..sol.n_x] {
            prop_assert!(dot(z, &r1).abs() < 1e-10 * s1);
        }
        for q in &space.pressure_basis()[..sol.n_y] {
            prop_assert!(dot(q, &r2).abs() < 1e-10 * s2);
        }
    }

    #[test]
    fn riesz_expansion_matches_direct_norms(m0 in 0.2f64..=0.6, m1 in 0.2f64..=0.6, n in 1usize..=4) {
        let (space, model) = fixture();
        let d = coarse();
        let xf = SpdFactor::new(d.x_gram()).unwrap();
        let yf = SpdFactor::new(d.y_gram()).unwrap();
        let sol = model.online_solve(&[m0, m1], n).unwrap();
        let (r1, r2) = model.residual_dual_norms(&sol).unwrap();
        let (d1, d2) = direct_residual_norms(d, space, &sol, &xf, &yf).unwrap();
        prop_assert!(common::rel_diff(r1, d1) < 1e-8, "{} vs {}", r1, d1);
        prop_assert!(common::rel_diff(r2, d2) < 1e-8 || (r2 - d2).abs() < 1e-12 * d1, "{} vs {}", r2, d2);
    }
}

#[test]
fn snapshots_are_reproduced() {
    let (space, model) = fixture();
    for (k, mu) in SNAPSHOT_MUS.iter().enumerate() {
        for n in k + 1..=4 {
            let sol = model.online_solve(mu, n).unwrap();
            let e = true_errors(coarse(), space, &sol).unwrap();
            assert!(e.eu_x / e.u_norm < 1e-9 && e.ep_y / e.p_norm < 1e-9, "{mu:?} at N = {n}: {e:?}");
        }
    }
}

#[test]
fn energy_residual_lies_between_cheap_bounds() {
    let (space, model) = fixture();
    let d = coarse();
    let mu = [0.42, 0.27];
    let c = ExactConstants::compute(d, &mu, &EigenOptions::default()).unwrap();
    for n in 1..=4 {
        let sol = model.online_solve(&mu, n).unwrap();
        let (r1, _) = model.residual_dual_norms(&sol).unwrap();
        let r1e = energy_residual_norm(d, space, &sol).unwrap();
        let (lo, hi) = energy_residual_bounds(r1, c.alpha, c.gamma);
        assert!(lo * (1.0 - 1e-8) <= r1e && r1e <= hi * (1.0 + 1e-8), "{lo} {r1e} {hi}");
    }
}

#[test]
fn extending_matches_projecting_from_scratch() {
    let d = coarse();
    let full = snapshot_space(d, &SNAPSHOT_MUS);
    let mut partial = snapshot_space(d, &SNAPSHOT_MUS[..2]);
    let mut model = ReducedModel::project(d, &partial).unwrap();
    let xf = SpdFactor::new(d.x_gram()).unwrap();
    for mu in &SNAPSHOT_MUS[2..] {
        let sol = d.solve(mu).unwrap();
        let s = rbsaddle::rb_space::supremizer(&xf, &d.b().assemble_at(mu).unwrap(), &sol.p).unwrap();
        partial.insert(Field::Velocity, &[(sol.u, Role::USnapshot), (s, Role::Supremizer)]);
        partial.insert(Field::Pressure, &[(sol.p, Role::PSnapshot)]);
        partial.close_generation();
        model.extend(&partial).unwrap();
    }
    let scratch = ReducedModel::project(d, &full).unwrap();
    assert_eq!(model.generations(), scratch.generations());
    let mu = [0.33, 0.44];
    let (a, b) = (model.online_solve(&mu, 4).unwrap(), scratch.online_solve(&mu, 4).unwrap());
    assert!(max_rel(&a.u, &b.u) < 1e-12);
    let (na, nb) = (model.residual_dual_norms(&a).unwrap(), scratch.residual_dual_norms(&b).unwrap());
    assert!(common::rel_diff(na.0, nb.0) < 1e-10 && common::rel_diff(na.1, nb.1) < 1e-10);
}

#[test]
fn riesz_terms_follow_insertion_order() {
    let (_, model) = fixture();
    let d = coarse();
    let (r1, r2) = model.riesz();
    let (qa, qb, qf, qg) = (d.a().len(), d.b().len(), d.f().len(), d.g().len());
    assert_eq!(r1.len(), qf + 8 * qa + 4 * qb);
    assert_eq!(r2.len(), qg + 8 * qb);
    assert_eq!(r1.terms()[0], RieszTerm::Rhs(0));
    assert_eq!(r1.terms()[qf], RieszTerm::Velocity(0, 0));
    assert_eq!(r1.terms()[qf + qa], RieszTerm::Velocity(0, 1));
    assert_eq!(r1.terms()[qf + 2 * qa], RieszTerm::Pressure(0, 0));
    assert_eq!(r2.terms()[qg], RieszTerm::Velocity(0, 0));
    assert!(r1.rank_after().windows(2).all(|w| w[0] <= w[1]));
    let g = r1.gram();
    assert!((g - g.transpose()).amax() < 1e-12 * g.amax());
}

#[test]
fn unstable_pair_is_singular() {
    let d = coarse();
    let mut space = RBSpace::new(d.x_gram().clone(), d.y_gram().clone());
    let (s1, s2) = (d.solve(&[0.3, 0.3]).unwrap(), d.solve(&[0.5, 0.5]).unwrap());
    space.insert(Field::Velocity, &[(s1.u, Role::USnapshot)]);
    space.insert(Field::Pressure, &[(s1.p, Role::PSnapshot), (s2.p, Role::PSnapshot)]);
    space.close_generation();
    let model = ReducedModel::project(d, &space).unwrap();
    assert!(matches!(model.online_solve(&[0.4, 0.4], 1), Err(Error::SingularReducedSystem)));
}

#[test]
fn corrupted_gram_is_detected() {
    let (_, model) = fixture();
    let mut bad = model.clone();
    let g = bad.riesz_mut().0.gram_mut();
    *g = -g.clone();
    let sol = bad.online_solve(&[0.4, 0.4], 2).unwrap();
    assert!(matches!(bad.residual_dual_norms(&sol), Err(Error::NegativeNormSquare { .. })));
}

#[test]
fn out_of_range_generation_and_parameter() {
    let (_, model) = fixture();
    assert!(model.online_solve(&[0.4, 0.4], 5).is_err());
    assert!(model.online_solve(&[0.4, 0.4], 0).is_err());
    assert!(matches!(model.online_solve(&[0.7, 0.4], 1), Err(Error::OutOfDomain { .. })));
}
