mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use rbsaddle::experiment::{
    self, fig_header, Artifact, ExperimentConfig, TABLE1_HEADER, TABLE2_HEADER,
};
use rbsaddle::greedy::Variant;
use rbsaddle::Error;
use sha2::{Digest, Sha256};

fn small_config(out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.geometry = common::coarse_geometry();
    c.greedy.variants = vec![Variant::V1, Variant::V3];
    c.greedy.train_size = 30;
    c.greedy.n_max = 4;
    c.greedy.tolerance = 1e-8;
    c.test.size = 4;
    c.constants.surrogate_points = 2;
    c.output_dir = out.to_path_buf();
    c
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: ExperimentConfig,
}

impl Fixture {
    fn artifact(&self) -> PathBuf {
        self.root.join("artifact")
    }
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let config = small_config(&root);
        experiment::cmd_offline(&config, &root.join("artifact"), &mut std::io::sink()).unwrap();
        Fixture { _dir: dir, root, config }
    })
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        fs::copy(e.path(), to.join(e.file_name())).unwrap();
    }
}

fn rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect())
        .collect()
}

#[test]
fn config_round_trips_through_toml() {
    let c = small_config(Path::new("somewhere"));
    let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
    assert_eq!(back.to_toml(), c.to_toml());
    assert_eq!(back.greedy.variants, vec![Variant::V1, Variant::V3]);
}

#[test]
fn config_rejects_bad_input() {
    let c = ExperimentConfig::default();
    let unknown = format!("{}\nbogus = 3\n", c.to_toml());
    assert!(matches!(ExperimentConfig::from_toml(&unknown), Err(Error::Config(_))));
    let mut v = c.clone();
    v.version += 1;
    assert!(matches!(v.validate(), Err(Error::Config(_))));
    let mut v = c.clone();
    v.greedy.variants = vec![Variant::V2, Variant::V2];
    assert!(v.validate().is_err());
    let mut v = c.clone();
    v.test.size = 0;
    assert!(matches!(v.validate(), Err(Error::EmptyTrainingSet)));
    let mut v = c.clone();
    v.geometry.height = -1.0;
    assert!(matches!(v.validate(), Err(Error::InvalidGeometry(_))));
    assert!(matches!(ExperimentConfig::load(Path::new("/nonexistent/cfg.toml")), Err(Error::Config(_))));
}

#[test]
fn artifact_loads_and_reprojects_bitwise() {
    let f = fixture();
    let art = Artifact::load(&f.artifact()).unwrap();
    assert_eq!(art.models.len(), 2);
    assert_eq!(art.manifest.config.to_toml(), f.config.to_toml());
    let disc = art.truth().unwrap();
    for m in &art.models {
        let space = m.space(&disc);
        let (ok, detail) = experiment::reprojection_check(&disc, m, &space, &[0.33, 0.51]).unwrap();
        assert!(ok, "{detail}");
        assert_eq!(m.model.n_generations(), m.entry.generations.len());
    }
}

#[test]
fn online_answer_vanishes_at_selected_parameters() {
    let f = fixture();
    let art = Artifact::load(&f.artifact()).unwrap();
    let stored = art.model(Variant::V1).unwrap();
    let mu = stored.entry.selected[0].clone();
    let r = experiment::cmd_online(&art, Some(Variant::V1), &mu, None, None).unwrap();
    assert!(r.report.delta_u_sym / r.report.u_n_norm < 1e-6, "{:?}", r.report);
    assert_eq!(r.csv_row().split(',').count(), experiment::ONLINE_HEADER.split(',').count());
}

#[test]
fn online_rejects_bad_queries() {
    let art = Artifact::load(&fixture().artifact()).unwrap();
    assert!(matches!(
        experiment::cmd_online(&art, None, &[0.7, 0.4], None, None),
        Err(Error::OutOfDomain { .. })
    ));
    assert!(matches!(experiment::cmd_online(&art, None, &[0.4, 0.4], Some(99), None), Err(Error::Config(_))));
    assert!(matches!(
        experiment::cmd_online(&art, Some(Variant::V2), &[0.4, 0.4], None, None),
        Err(Error::Config(_))
    ));
}

#[test]
fn online_query_is_fast() {
    let art = Artifact::load(&fixture().artifact()).unwrap();
    let mut best = f64::INFINITY;
    for _ in 0..5 {
        let r = experiment::cmd_online(&art, None, &[0.45, 0.3], None, None).unwrap();
        best = best.min(r.t_solve_ms + r.t_bounds_ms);
    }
    assert!(best <= 10.0, "online query took {best} ms");
}

#[test]
fn offline_is_reproducible() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let again = dir.path().join("artifact");
    experiment::cmd_offline(&f.config, &again, &mut std::io::sink()).unwrap();
    let a = Artifact::read_manifest(&f.artifact()).unwrap();
    let b = Artifact::read_manifest(&again).unwrap();
    let sums = |m: &rbsaddle::experiment::Manifest| {
        m.payloads.iter().map(|p| (p.name.clone(), p.sha256.clone())).collect::<Vec<_>>()
    };
    assert_eq!(sums(&a), sums(&b));
    assert!(!a.payloads.is_empty());
}

#[test]
fn corrupted_payload_is_rejected() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let copy = dir.path().join("artifact");
    copy_dir(&f.artifact(), &copy);
    let target = copy.join("alg1.a_blocks.f64");
    let mut bytes = fs::read(&target).unwrap();
    bytes[3] ^= 0x40;
    fs::write(&target, &bytes).unwrap();
    assert!(matches!(Artifact::load(&copy), Err(Error::Artifact(_))));

    let missing = dir.path().join("missing");
    assert!(matches!(Artifact::load(&missing), Err(Error::Artifact(_))));
}

#[test]
fn truncated_payload_is_rejected() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let copy = dir.path().join("artifact");
    copy_dir(&f.artifact(), &copy);
    let target = copy.join("alg3.velocity_basis.f64");
    let bytes = fs::read(&target).unwrap();
    fs::write(&target, &bytes[..bytes.len() - 8]).unwrap();
    assert!(matches!(Artifact::load(&copy), Err(Error::Artifact(_))));
}

#[test]
fn verify_flags_corrupted_riesz_data() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let copy = dir.path().join("artifact");
    copy_dir(&f.artifact(), &copy);

    let target = copy.join("alg1.r1.gram.f64");
    let bytes = fs::read(&target).unwrap();
    let flipped: Vec<u8> = bytes
        .chunks_exact(8)
        .flat_map(|c| (-f64::from_le_bytes(c.try_into().unwrap())).to_le_bytes())
        .collect();
    fs::write(&target, &flipped).unwrap();
    let mut manifest = Artifact::read_manifest(&copy).unwrap();
    let entry = manifest.payloads.iter_mut().find(|p| p.name == "alg1.r1.gram").unwrap();
    entry.sha256 = format!("{:x}", Sha256::digest(&flipped));
    fs::write(copy.join("manifest.toml"), toml::to_string(&manifest).unwrap()).unwrap();

    let art = Artifact::load(&copy).unwrap();
    let report = experiment::cmd_verify(&art, None, Some(3)).unwrap();
    assert!(!report.passed());
    let bad: Vec<_> = report.checks.iter().filter(|c| !c.passed).collect();
    assert!(bad.iter().any(|c| c.detail.contains("negative")), "{bad:?}");
}

#[test]
fn verify_passes_on_clean_artifact() {
    let art = Artifact::load(&fixture().artifact()).unwrap();
    let report = experiment::cmd_verify(&art, Some(11), Some(3)).unwrap();
    for c in &report.checks {
        assert!(c.passed, "{}: {}", c.name, c.detail);
    }
    assert!(matches!(experiment::cmd_verify(&art, None, Some(0)), Err(Error::EmptyTrainingSet)));
}

#[test]
fn sweep_writes_expected_csvs() {
    let f = fixture();
    let art = Artifact::load(&f.artifact()).unwrap();
    let out = tempfile::tempdir().unwrap();
    let s = experiment::cmd_sweep(&art, None, out.path()).unwrap();
    assert_eq!(s.files.len(), 2 * 3 + 2);

    let fig_u = fs::read_to_string(out.path().join("alg1/fig_u.csv")).unwrap();
    assert_eq!(fig_u.lines().next().unwrap(), "n_z,max_rel_err_u,max_rel_delta_u_sym,max_rel_delta_u_gen,max_rel_delta_ba");
    assert_eq!(fig_header("p"), "n_z,max_rel_err_p,max_rel_delta_p_sym,max_rel_delta_p_gen,max_rel_delta_ba");
    assert_eq!(
        TABLE1_HEADER,
        "alg,n,n_z,eta_u_energy,eta_u_sym,eta_u_br,eta_u_ba,eta_p_sym,eta_p_br,eta_p_ba,eta_sym,eta_br,eta_ba"
    );
    assert_eq!(TABLE2_HEADER, "alg,target,tol,n_z,n,t_solve_ms,t_bounds_ms,t_total_ms,speedup");

    for alg in ["alg1", "alg3"] {
        for name in ["fig_u.csv", "fig_p.csv", "fig_z.csv"] {
            let text = fs::read_to_string(out.path().join(alg).join(name)).unwrap();
            let r = rows(&text);
            assert!(!r.is_empty());
            let mut last_nz = 0.0;
            for row in &r {
                assert!(row[0] > last_nz);
                last_nz = row[0];
                for &b in &row[2..] {
                    assert!(b >= row[1] * (1.0 - 1e-9), "{alg}/{name}: {row:?}");
                }
            }
        }
    }

    let t1 = fs::read_to_string(out.path().join("table1.csv")).unwrap();
    assert_eq!(t1.lines().next().unwrap(), TABLE1_HEADER);
    for row in rows(&t1) {
        let (u_sym, u_br, p_sym, p_br) = (row[4], row[5], row[7], row[8]);
        assert!(u_sym <= u_br * (1.0 + 1e-12), "{row:?}");
        assert!(p_sym <= p_br * (1.0 + 1e-12), "{row:?}");
        for &eta in &row[3..] {
            assert!(eta.is_nan() || eta >= 1.0 - 1e-9, "{row:?}");
        }
    }
    let t2 = fs::read_to_string(out.path().join("table2.csv")).unwrap();
    assert_eq!(t2.lines().next().unwrap(), TABLE2_HEADER);
    assert_eq!(t2.lines().count(), 1 + 2 * 4);
}

#[test]
fn sweep_is_deterministic_apart_from_timings() {
    let art = Artifact::load(&fixture().artifact()).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    experiment::cmd_sweep(&art, Some(5), a.path()).unwrap();
    experiment::cmd_sweep(&art, Some(5), b.path()).unwrap();
    for f in ["alg1/fig_u.csv", "alg1/fig_p.csv", "alg1/fig_z.csv", "alg3/fig_z.csv", "table1.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let fixed = |p: &Path| {
        fs::read_to_string(p.join("table2.csv"))
            .unwrap()
            .lines()
            .map(|l| l.split(',').take(5).collect::<Vec<_>>().join(","))
            .collect::<Vec<_>>()
    };
    assert_eq!(fixed(a.path()), fixed(b.path()));
}

#[test]
fn mesh_export_writes_a_file() {
    let f = fixture();
    let out = tempfile::tempdir().unwrap();
    let path = experiment::cmd_mesh_export(&f.config, Some(&[0.3, 0.5]), out.path()).unwrap();
    assert!(fs::metadata(&path).unwrap().len() > 0);
    assert!(matches!(
        experiment::cmd_mesh_export(&f.config, Some(&[0.1, 0.5]), out.path()),
        Err(Error::OutOfDomain { .. })
    ));
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rbsaddle")).args(args).output().unwrap()
}

#[test]
fn cli_exit_codes() {
    let f = fixture();
    let art = f.artifact();
    let art = art.to_str().unwrap();

    let ok = cli(&["online", "--artifact", art, "--mu", "0.3,0.5"]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert!(stdout.contains(experiment::ONLINE_HEADER));

    assert_eq!(cli(&["online", "--artifact", art, "--mu", "0.7,0.5"]).status.code(), Some(2));
    assert_eq!(cli(&["online", "--artifact", art, "--mu", "0.3"]).status.code(), Some(2));
    assert_eq!(cli(&["online", "--artifact", "/nonexistent/artifact", "--mu", "0.3,0.5"]).status.code(), Some(2));
    assert_eq!(cli(&["verify", "--artifact", art, "--size", "0"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "version = 1\nnonsense = true\n").unwrap();
    assert_eq!(cli(&["offline", "--config", bad.to_str().unwrap()]).status.code(), Some(2));

    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, f.config.to_toml()).unwrap();
    let out = dir.path().join("mesh");
    let m = cli(&["mesh-export", "--config", cfg.to_str().unwrap(), "--mu", "0.4,0.4", "--out", out.to_str().unwrap()]);
    assert!(m.status.success(), "{}", String::from_utf8_lossy(&m.stderr));
}
