//! Prints the theta functions of the affine decomposition and checks that
//! assembling through the decomposition matches a direct sum.

use rbsaddle::numerics::SparseMatrix;
use rbsaddle::stokes::{Geometry, TruthDiscretization};

fn main() -> rbsaddle::Result<()> {
    let disc = TruthDiscretization::build(&Geometry::default())?;
    for (name, thetas) in [("a", disc.a().thetas()), ("b", disc.b().thetas()), ("f", disc.f().thetas()), ("g", disc.g().thetas())] {
        println!("{name}:");
        for (q, th) in thetas.iter().enumerate() {
            println!("  theta_{q} = {th}");
        }
    }

    let mu = [0.25, 0.55];
    let a = disc.a().assemble_at(&mu)?;
    let coeffs = disc.a().eval_thetas(&mu)?;
    let terms: Vec<&SparseMatrix> = disc.a().terms().iter().collect();
    let direct = SparseMatrix::linear_combination(&coeffs, &terms)?;
    let v: Vec<f64> = (0..a.cols()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
    let (x, y) = (a.mul_vec(&v), direct.mul_vec(&v));
    let gap = x.iter().zip(&y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    println!("A(mu) assembled vs combined: max gap {gap:.2e}, symmetry defect {:.2e}", a.symmetry_defect());
    Ok(())
}
