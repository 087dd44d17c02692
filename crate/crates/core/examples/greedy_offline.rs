//! Runs the three greedy variants on a small training set and prints
//! their traces.
//!
//! cargo run --release --example greedy_offline -- 120

use rbsaddle::constants::SurrogateModel;
use rbsaddle::greedy::{greedy_run, GreedyConfig, Variant};
use rbsaddle::numerics::EigenOptions;
use rbsaddle::stokes::{Geometry, TruthDiscretization};

fn main() -> rbsaddle::Result<()> {
    let train_size = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(100);
    let disc = TruthDiscretization::build(&Geometry::default())?;
    let opts = EigenOptions::default();
    let grid: Vec<Vec<f64>> = [0.2, 0.4, 0.6].iter().flat_map(|&a| [0.2, 0.4, 0.6].map(|b| vec![a, b])).collect();
    let surrogate = SurrogateModel::train(&disc, &grid, &opts)?;

    for variant in [Variant::V1, Variant::V2, Variant::V3] {
        let config = GreedyConfig { variant, train_size, n_max: 20, ..Default::default() };
        let t = std::time::Instant::now();
        let res = greedy_run(&disc, &surrogate, &config, &opts)?;
        println!(
            "# algorithm {}: N_X = {}, N_Y = {}, N_Z = {}, converged = {}, {:.1} s",
            variant.number(),
            res.space.n_x(),
            res.space.n_y(),
            res.space.n_z(),
            res.trace.converged,
            t.elapsed().as_secs_f64()
        );
        print!("{}", res.trace.to_csv());
    }
    Ok(())
}
