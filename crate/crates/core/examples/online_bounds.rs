//! Online solve with all error bounds, compared with the true error.

use rbsaddle::bounds::{true_errors, BoundReport};
use rbsaddle::constants::{ExactConstants, SurrogateModel};
use rbsaddle::greedy::{greedy_run, sample_train_set, GreedyConfig};
use rbsaddle::numerics::EigenOptions;
use rbsaddle::rb_online::energy_residual_norm;
use rbsaddle::stokes::{Geometry, TruthDiscretization};

fn main() -> rbsaddle::Result<()> {
    let disc = TruthDiscretization::build(&Geometry::default())?;
    let opts = EigenOptions::default();
    let grid: Vec<Vec<f64>> = [0.2, 0.6].iter().flat_map(|&a| [0.2, 0.6].map(|b| vec![a, b])).collect();
    let surrogate = SurrogateModel::train(&disc, &grid, &opts)?;
    let res = greedy_run(&disc, &surrogate, &GreedyConfig { train_size: 80, n_max: 8, ..Default::default() }, &opts)?;
    let model = &res.model;

    println!("mu1,mu2,n,n_z,err_u,delta_u_sym,delta_u_gen,err_p,delta_p_sym,delta_p_gen,eta_u_energy,eta_u_sym,eta_p_sym");
    for mu in sample_train_set(disc.domain(), 4, 11)? {
        let exact = ExactConstants::compute(&disc, &mu, &opts)?;
        for n in 1..=model.n_generations() {
            let sol = model.online_solve(&mu, n)?;
            let (r1, r2) = model.residual_dual_norms(&sol)?;
            let r1e = energy_residual_norm(&disc, &res.space, &sol)?;
            let err = true_errors(&disc, &res.space, &sol)?;
            let rep = BoundReport::new(&mu, n, sol.n_x + sol.n_y, r1, r2, Some(r1e), &exact.bounds())?.with_errors(err);
            let eta = rep.effectivities.as_ref().expect("errors attached");
            println!(
                "{:.4},{:.4},{n},{},{:.3e},{:.3e},{:.3e},{:.3e},{:.3e},{:.3e},{:.2},{:.2},{:.2}",
                mu[0], mu[1], rep.n_z, err.eu_x, rep.delta_u_sym, rep.delta_u_gen, err.ep_y, rep.delta_p_sym, rep.delta_p_gen,
                eta.u_energy, eta.u_sym, eta.p_sym
            );
        }
    }
    Ok(())
}
