//! Full-order Stokes solve on the microchannel at one parameter.
//!
//! cargo run --example truth_solve -- 0.3 0.5

use rbsaddle::stokes::{BoundaryTag, Geometry, TruthDiscretization};

fn main() -> rbsaddle::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mu = if args.len() == 2 { args } else { vec![0.3, 0.5] };

    let disc = TruthDiscretization::build(&Geometry::default())?;
    let mesh = disc.mesh();
    println!("mesh: {} vertices, {} triangles, {} subdomains", mesh.n_vertices(), mesh.triangles().len(), mesh.n_subdomains());
    println!("dofs: N = {} (velocity {}, pressure {})", disc.n_total(), disc.n_u(), disc.n_p());
    println!("affine terms: Q_a = {}, Q_b = {}, Q_f = {}, Q_g = {}", disc.a().len(), disc.b().len(), disc.f().len(), disc.g().len());

    let t = std::time::Instant::now();
    let sol = disc.solve(&mu)?;
    println!("solve at mu = {mu:?}: {:.1} ms, relative residual {:.2e}", t.elapsed().as_secs_f64() * 1e3, sol.residual);

    let inflow = disc.boundary_flux(&sol.u_full, &mu, BoundaryTag::Inflow);
    let outflow = disc.boundary_flux(&sol.u_full, &mu, BoundaryTag::Outflow);
    println!("flux: inflow {inflow:.6}, outflow {outflow:.6}, imbalance {:.2e}", inflow + outflow);

    let pmax = sol.p.iter().cloned().fold(f64::MIN, f64::max);
    let pmin = sol.p.iter().cloned().fold(f64::MAX, f64::min);
    println!("pressure range [{pmin:.4}, {pmax:.4}]");
    Ok(())
}
