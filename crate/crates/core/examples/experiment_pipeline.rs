//! Offline, sweep and verify through the experiment driver, with a small
//! configuration so it finishes in about a minute.

use rbsaddle::experiment::{cmd_offline, cmd_sweep, cmd_verify, Artifact, ExperimentConfig};
use rbsaddle::greedy::Variant;

fn main() -> rbsaddle::Result<()> {
    let root = std::env::temp_dir().join("rbsaddle-pipeline");
    let mut config = ExperimentConfig::default();
    config.greedy.variants = vec![Variant::V1];
    config.greedy.train_size = 60;
    config.greedy.n_max = 6;
    config.test.size = 4;
    config.constants.surrogate_points = 2;
    config.output_dir = root.clone();
    println!("{}", config.to_toml());

    let artifact_dir = root.join("artifact");
    cmd_offline(&config, &artifact_dir, &mut std::io::stdout())?;
    let artifact = Artifact::load(&artifact_dir)?;

    let sweep = cmd_sweep(&artifact, None, &root.join("sweep"))?;
    for f in &sweep.files {
        println!("wrote {}", f.display());
    }
    println!("{}", std::fs::read_to_string(root.join("sweep").join("table1.csv"))?);

    let report = cmd_verify(&artifact, None, Some(3))?;
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(())
}
