mod common;

use common::coarse;
use proptest::prelude::*;
use rbsaddle::constants::beta_br_of;
use rbsaddle::numerics::{dot, EigenOptions, SpdFactor};
use rbsaddle::rb_space::{rb_infsup, supremizer, Field, RBSpace, Role};

fn fresh() -> RBSpace {
    let d = coarse();
    RBSpace::new(d.x_gram().clone(), d.y_gram().clone())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn insertion_keeps_orthonormality(seeds in prop::collection::vec(0u64..10_000, 1..8)) {
        let d = coarse();
        let mut space = fresh();
        for s in &seeds {
            let v: Vec<f64> = (0..d.n_u()).map(|i| ((i as u64 * 7919 + s * 104729) % 997) as f64 - 498.0).collect();
            let q: Vec<f64> = (0..d.n_p()).map(|i| ((i as u64 * 31 + s * 17) % 101) as f64 - 50.0).collect();
            space.insert(Field::Velocity, &[(v, Role::USnapshot)]);
            space.insert(Field::Pressure, &[(q, Role::PSnapshot)]);
            space.close_generation();
        }
        prop_assert!(space.orthonormality_defect(Field::Velocity) < 1e-12);
        prop_assert!(space.orthonormality_defect(Field::Pressure) < 1e-12);
        let gens = space.generations().to_vec();
        for w in gens.windows(2) {
            prop_assert!(w[0].0 <= w[1].0 && w[0].1 <= w[1].1);
        }
    }
}

#[test]
fn dependent_and_zero_vectors_are_rejected() {
    let d = coarse();
    let mut space = fresh();
    let sol = d.solve(&[0.3, 0.3]).unwrap();
    assert!(space.insert(Field::Velocity, &[(sol.u.clone(), Role::USnapshot)]).accepted[0]);
    let twice: Vec<f64> = sol.u.iter().map(|v| 2.0 * v).collect();
    let r = space.insert(Field::Velocity, &[(twice, Role::USnapshot), (vec![0.0; d.n_u()], Role::Supremizer)]);
    assert_eq!(r.accepted, vec![false, false]);
    assert_eq!(space.n_x(), 1);
    assert_eq!(space.insertion_order().len(), 1);
}

#[test]
fn generations_are_nested_prefixes() {
    let d = coarse();
    let space = common::snapshot_space(d, &common::SNAPSHOT_MUS);
    assert_eq!(space.generations(), &[(2, 1), (4, 2), (6, 3), (8, 4)]);
    for n in 1..=4 {
        assert_eq!(space.generation_dims(n).unwrap(), (2 * n, n));
    }
    assert!(space.generation_dims(5).is_err());
    assert_eq!(space.velocity_roles()[..2], [Role::USnapshot, Role::Supremizer]);
    assert_eq!(space.velocity_generation(), &[0, 0, 1, 1, 2, 2, 3, 3]);
    // Expanding unit coefficients gives back basis columns.
    let mut c = vec![0.0; 3];
    c[2] = 1.0;
    assert_eq!(space.expand_velocity(&c), space.velocity_basis()[2]);
}

#[test]
fn supremizer_is_the_riesz_representer() {
    let d = coarse();
    let mu = [0.45, 0.35];
    let b = d.b().assemble_at(&mu).unwrap();
    let xf = SpdFactor::new(d.x_gram()).unwrap();
    let q: Vec<f64> = (0..d.n_p()).map(|i| (i as f64 * 0.37).sin()).collect();
    let s = supremizer(&xf, &b, &q).unwrap();
    let xs = d.x_gram().mul_vec(&s);
    let btq = b.mul_transpose_vec(&q);
    let gap = xs.iter().zip(&btq).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
    assert!(gap < 1e-10 * btq.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    // b(v, q) / ‖v‖_X is maximized by v = s.
    let s_norm = dot(&s, &xs).sqrt();
    for k in 0..10 {
        let v: Vec<f64> = s.iter().enumerate().map(|(i, x)| x + 0.3 * ((i * (k + 3)) as f64).cos()).collect();
        let ratio = dot(&v, &btq) / d.x_gram().bilinear(&v, &v).sqrt();
        assert!(ratio <= s_norm * (1.0 + 1e-12));
    }
    assert!(supremizer(&xf, &b, &vec![0.0; d.n_p()]).unwrap().iter().all(|v| *v == 0.0));
}

/// With `T_µ p ∈ X_N` for the only pressure column, `β_N(µ) ≥ β_Br(µ)`.
#[test]
fn supremizer_pairing_dominates_truth_infsup() {
    let d = coarse();
    let opts = EigenOptions::default();
    for mu in common::SNAPSHOT_MUS {
        let space = common::snapshot_space(d, &[mu]);
        let b = d.b().assemble_at(&mu).unwrap();
        let beta_n = rb_infsup(&space, &b);
        let beta = beta_br_of(&b, d.x_gram(), d.y_gram(), &opts).unwrap();
        assert!(beta_n >= beta * (1.0 - 1e-9), "{mu:?}: {beta_n} < {beta}");
    }
}

#[test]
fn pressure_only_space_has_zero_infsup() {
    let d = coarse();
    let mut space = fresh();
    space.insert(Field::Pressure, &[(d.solve(&[0.3, 0.3]).unwrap().p, Role::PSnapshot)]);
    assert_eq!(rb_infsup(&space, &d.b().assemble_at(&[0.3, 0.3]).unwrap()), 0.0);
    assert_eq!(rb_infsup(&fresh(), &d.b().assemble_at(&[0.3, 0.3]).unwrap()), f64::INFINITY);
}
