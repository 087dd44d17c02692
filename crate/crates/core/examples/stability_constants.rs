//! Exact stability constants at a few parameters, plus the surrogate
//! bounds used online.

use rbsaddle::constants::{ExactConstants, SurrogateModel};
use rbsaddle::numerics::EigenOptions;
use rbsaddle::stokes::{Geometry, TruthDiscretization};

fn main() -> rbsaddle::Result<()> {
    let disc = TruthDiscretization::build(&Geometry::default())?;
    let opts = EigenOptions::default();

    println!("mu1,mu2,alpha,gamma,gamma_b,beta_br,tilde_beta,beta_ba");
    for mu in [[0.2, 0.2], [0.4, 0.4], [0.6, 0.6], [0.25, 0.55]] {
        let c = ExactConstants::compute(&disc, &mu, &opts)?;
        println!(
            "{},{},{:.5},{:.5},{:.5},{:.5},{:.5},{:.5}",
            mu[0], mu[1], c.alpha, c.gamma, c.gamma_b, c.beta_br, c.tilde_beta, c.beta_ba
        );
        let lo = c.beta_br / c.gamma.sqrt();
        let hi = c.beta_br / c.alpha.sqrt();
        println!("  tilde_beta in [{lo:.5}, {hi:.5}]");
    }

    let grid: Vec<Vec<f64>> = [0.2, 0.6].iter().flat_map(|&a| [0.2, 0.6].map(|b| vec![a, b])).collect();
    let sur = SurrogateModel::train(&disc, &grid, &opts)?;
    let mu = [0.35, 0.45];
    let thetas = disc.a().eval_thetas(&mu)?;
    let b = sur.bounds(&mu, &thetas)?;
    let exact = ExactConstants::compute(&disc, &mu, &opts)?;
    println!("surrogate at {mu:?}:");
    println!("  alpha  {:.5} <= {:.5}", b.alpha_lb, exact.alpha);
    println!("  gamma  {:.5} >= {:.5}", b.gamma_ub, exact.gamma);
    println!("  beta   {:.5} vs {:.5}", b.beta_br_lb, exact.beta_br);
    Ok(())
}
