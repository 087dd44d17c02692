//! The experiment driver behind the CLI: offline build, online queries,
//! test-set sweeps producing the figure and table CSVs, and verification.

pub mod artifact;
pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

pub use artifact::{Artifact, Manifest, StoredModel};
pub use config::ExperimentConfig;

use crate::bounds::{
    delta_p_sym, delta_u_sym, direct_residual_norms, true_errors_against, verify_apriori, BoundReport,
};
use crate::constants::{ConstantsMode, ExactConstants, SurrogateModel};
use crate::error::{Error, Result};
use crate::greedy::{greedy_run, sample_train_set, GreedyResult, Variant};
use crate::numerics::{dot, EigenOptions, SpdFactor};
use crate::rb_online::{truth_residuals, RBSolution, ReducedModel};
use crate::rb_space::RBSpace;
use crate::stokes::{Mesh, TruthDiscretization};

pub const FIG_HEADER: &str = "n_z,max_rel_err_{q},max_rel_delta_{q}_sym,max_rel_delta_{q}_gen,max_rel_delta_ba";
pub const TABLE1_HEADER: &str =
    "alg,n,n_z,eta_u_energy,eta_u_sym,eta_u_br,eta_u_ba,eta_p_sym,eta_p_br,eta_p_ba,eta_sym,eta_br,eta_ba";
pub const TABLE2_HEADER: &str = "alg,target,tol,n_z,n,t_solve_ms,t_bounds_ms,t_total_ms,speedup";
pub const ONLINE_HEADER: &str = "alg,n,n_z,mu1,mu2,constants,r1,r2,delta_u_sym,delta_p_sym,delta_sym,delta_u_energy,delta_u_gen,delta_p_gen,delta_br,delta_ba,t_solve_ms,t_bounds_ms";

/// Header of `fig_u.csv` (`q = "u"`), `fig_p.csv` (`"p"`) or `fig_z.csv` (`""`).
pub fn fig_header(q: &str) -> String {
    if q.is_empty() {
        "n_z,max_rel_err,max_rel_delta_sym,max_rel_delta_br,max_rel_delta_ba".to_string()
    } else {
        FIG_HEADER.replace("{q}", q)
    }
}

pub fn eigen_options(config: &ExperimentConfig) -> EigenOptions {
    EigenOptions { tol: config.constants.eigen_tol, ..EigenOptions::default() }
}

fn fmt_f(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.6e}")
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

#[derive(Debug, Clone, Serialize)]
pub struct OfflineSummary {
    pub n_truth: usize,
    pub models: Vec<(u8, usize, usize, bool, f64)>,
    pub seconds: f64,
}

/// Builds the truth model, the constants surrogate and one greedy model
/// per configured variant; writes the artifact and per-variant greedy traces.
pub fn cmd_offline(config: &ExperimentConfig, artifact_dir: &Path, log: &mut dyn Write) -> Result<OfflineSummary> {
    config.validate()?;
    let t0 = Instant::now();
    let disc = TruthDiscretization::build(&config.geometry)?;
    writeln!(log, "truth: N = {} (N_X = {}, N_Y = {})", disc.n_total(), disc.n_u(), disc.n_p())?;
    let opts = eigen_options(config);
    let grid = config.surrogate_grid();
    let surrogate = SurrogateModel::train(&disc, &grid, &opts)?;
    writeln!(log, "constants: {} training points", grid.len())?;
    let mut results: Vec<GreedyResult> = Vec::new();
    let mut summary = Vec::new();
    for &v in &config.greedy.variants {
        let r = greedy_run(&disc, &surrogate, &config.greedy.config(v), &opts)?;
        let n_z = r.space.n_z();
        writeln!(
            log,
            "algorithm {}: N_Z = {}, iterations = {}, max indicator = {:.3e}{}",
            v.number(),
            n_z,
            r.trace.steps.len(),
            r.trace.final_indicator(),
            if r.trace.converged { "" } else { " (tolerance not reached)" }
        )?;
        fs::create_dir_all(&config.output_dir)?;
        fs::write(config.output_dir.join(format!("greedy_alg{}.csv", v.number())), r.trace.to_csv())?;
        summary.push((v.number(), n_z, r.trace.steps.len(), r.trace.converged, r.trace.final_indicator()));
        results.push(r);
    }
    let artifact = Artifact::from_results(config, &disc, &surrogate, results)?;
    artifact.write(artifact_dir)?;
    writeln!(log, "artifact written to {}", artifact_dir.display())?;
    Ok(OfflineSummary { n_truth: disc.n_total(), models: summary, seconds: t0.elapsed().as_secs_f64() })
}

/// Result of one online query.
#[derive(Debug, Clone, Serialize)]
pub struct OnlineResult {
    pub alg: u8,
    pub report: BoundReport,
    pub t_solve_ms: f64,
    pub t_bounds_ms: f64,
}

impl OnlineResult {
    pub fn csv_row(&self) -> String {
        let r = &self.report;
        let mode = match r.constants.mode {
            ConstantsMode::Exact => "exact",
            ConstantsMode::Surrogate => "surrogate",
        };
        let vals = [
            r.r1,
            r.r2,
            r.delta_u_sym,
            r.delta_p_sym,
            r.delta_sym,
            r.delta_u_energy,
            r.delta_u_gen,
            r.delta_p_gen,
            r.delta_br,
            r.delta_ba,
        ];
        format!(
            "{},{},{},{},{},{},{},{:.4},{:.4}",
            self.alg,
            r.n,
            r.n_z,
            r.mu[0],
            r.mu[1],
            mode,
            vals.iter().map(|v| fmt_f(*v)).collect::<Vec<_>>().join(","),
            self.t_solve_ms,
            self.t_bounds_ms
        )
    }
}

/// Online solve and bounds at `(µ, N)`; `n = None` uses the largest generation.
pub fn cmd_online(
    artifact: &Artifact,
    alg: Option<Variant>,
    mu: &[f64],
    n: Option<usize>,
    mode: Option<ConstantsMode>,
) -> Result<OnlineResult> {
    let stored = match alg {
        Some(a) => artifact.model(a)?,
        None => artifact.models.first().ok_or_else(|| Error::Artifact("artifact holds no models".into()))?,
    };
    let model = &stored.model;
    model.domain().check(mu)?;
    let n = n.unwrap_or(model.n_generations());
    if n == 0 || n > model.n_generations() {
        return Err(Error::Config(format!("--n must lie in 1..={}", model.n_generations())));
    }
    let t0 = Instant::now();
    let sol = model.online_solve(mu, n)?;
    let t_solve_ms = ms(t0);
    let mode = mode.unwrap_or(artifact.manifest.config.constants.mode);
    let c = match mode {
        ConstantsMode::Surrogate => None,
        ConstantsMode::Exact => {
            let disc = artifact.truth()?;
            Some(ExactConstants::compute(&disc, mu, &eigen_options(&artifact.manifest.config))?.bounds())
        }
    };
    let t1 = Instant::now();
    let (r1, r2) = model.residual_dual_norms(&sol)?;
    let c = match c {
        Some(c) => c,
        None => artifact.manifest.surrogate.bounds(mu, &model.a_thetas(mu)?)?,
    };
    let report = BoundReport::new(mu, n, sol.n_x + sol.n_y, r1, r2, None, &c)?.with_rb_norms(&sol);
    let t_bounds_ms = ms(t1);
    Ok(OnlineResult { alg: stored.alg().number(), report, t_solve_ms, t_bounds_ms })
}

/// Everything evaluated at one test parameter.
#[derive(Debug, Clone)]
pub struct PointEval {
    pub mu: Vec<f64>,
    pub constants: ExactConstants,
    pub t_truth_ms: f64,
    /// Per model (artifact order), per generation; `None` if the reduced
    /// system was singular.
    pub reports: Vec<Vec<Option<BoundReport>>>,
}

/// Truth solve, exact constants and bound reports with true errors for
/// every generation of every model.
pub fn evaluate_point(
    disc: &TruthDiscretization,
    models: &[(&ReducedModel, &RBSpace)],
    mu: &[f64],
    opts: &EigenOptions,
) -> Result<PointEval> {
    let t0 = Instant::now();
    let truth = disc.solve(mu)?;
    let t_truth_ms = ms(t0);
    let constants = ExactConstants::compute(disc, mu, opts)?;
    let cb = constants.bounds();
    let a_factor = SpdFactor::new(&disc.a().assemble_at(mu)?)?;
    let mut reports = Vec::new();
    for (model, space) in models {
        let mut per_n = Vec::new();
        for n in 1..=model.n_generations() {
            let sol = match model.online_solve(mu, n) {
                Ok(s) => s,
                Err(Error::SingularReducedSystem) => {
                    per_n.push(None);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let (r1, r2) = model.residual_dual_norms(&sol)?;
            let r1e = energy_norm_with(disc, space, &sol, &a_factor)?;
            let err = true_errors_against(disc, space, &sol, &truth.u, &truth.p)?;
            let rep = BoundReport::new(mu, n, sol.n_x + sol.n_y, r1, r2, Some(r1e), &cb)?
                .with_rb_norms(&sol)
                .with_errors(err);
            per_n.push(Some(rep));
        }
        reports.push(per_n);
    }
    Ok(PointEval { mu: mu.to_vec(), constants, t_truth_ms, reports })
}

fn energy_norm_with(disc: &TruthDiscretization, space: &RBSpace, sol: &RBSolution, a: &SpdFactor) -> Result<f64> {
    let (r1, _) = truth_residuals(disc, space, sol)?;
    let y = a.solve(&r1)?;
    Ok(dot(&r1, &y).max(0.0).sqrt())
}

/// Test-set evaluation shared by `sweep`, `verify` and the acceptance suite.
pub struct SweepData {
    pub algs: Vec<Variant>,
    pub generations: Vec<Vec<(usize, usize)>>,
    pub points: Vec<PointEval>,
}

pub fn evaluate_test_set(
    disc: &TruthDiscretization,
    models: &[(Variant, &ReducedModel, &RBSpace)],
    test: &[Vec<f64>],
    opts: &EigenOptions,
) -> Result<SweepData> {
    let pairs: Vec<(&ReducedModel, &RBSpace)> = models.iter().map(|(_, m, s)| (*m, *s)).collect();
    let points = test.par_iter().map(|mu| evaluate_point(disc, &pairs, mu, opts)).collect::<Result<Vec<_>>>()?;
    Ok(SweepData {
        algs: models.iter().map(|m| m.0).collect(),
        generations: models.iter().map(|m| m.1.generations().to_vec()).collect(),
        points,
    })
}

fn max_finite(it: impl Iterator<Item = f64>) -> f64 {
    it.filter(|v| !v.is_nan()).fold(f64::NAN, |a, b| if a.is_nan() || b > a { b } else { a })
}

impl SweepData {
    fn reports(&self, k: usize, n: usize) -> impl Iterator<Item = &BoundReport> {
        self.points.iter().filter_map(move |p| p.reports[k][n - 1].as_ref())
    }

    /// One figure CSV (`q` is `"u"`, `"p"` or `""` for the combined error).
    pub fn fig_csv(&self, k: usize, q: &str) -> String {
        let mut out = fig_header(q);
        out.push('\n');
        for (i, g) in self.generations[k].iter().enumerate() {
            let n = i + 1;
            let rel = |f: &dyn Fn(&BoundReport) -> (f64, f64)| {
                max_finite(self.reports(k, n).map(|r| {
                    let (num, den) = f(r);
                    num / den
                }))
            };
            let e = |r: &BoundReport| r.errors.expect("errors attached");
            let cols = match q {
                "u" => [
                    rel(&|r| (e(r).eu_x, e(r).u_norm)),
                    rel(&|r| (r.delta_u_sym, e(r).u_norm)),
                    rel(&|r| (r.delta_u_gen, e(r).u_norm)),
                    rel(&|r| (r.delta_ba, e(r).u_norm)),
                ],
                "p" => [
                    rel(&|r| (e(r).ep_y, e(r).p_norm)),
                    rel(&|r| (r.delta_p_sym, e(r).p_norm)),
                    rel(&|r| (r.delta_p_gen, e(r).p_norm)),
                    rel(&|r| (r.delta_ba, e(r).p_norm)),
                ],
                _ => [
                    rel(&|r| (e(r).e_z, e(r).z_norm)),
                    rel(&|r| (r.delta_sym, e(r).z_norm)),
                    rel(&|r| (r.delta_br, e(r).z_norm)),
                    rel(&|r| (r.delta_ba, e(r).z_norm)),
                ],
            };
            let _ = writeln!(out, "{},{}", g.0 + g.1, cols.iter().map(|v| fmt_f(*v)).collect::<Vec<_>>().join(","));
        }
        out
    }

    pub fn table1_csv(&self) -> String {
        let mut out = format!("{TABLE1_HEADER}\n");
        for (k, alg) in self.algs.iter().enumerate() {
            for (i, g) in self.generations[k].iter().enumerate() {
                let n = i + 1;
                let col = |f: &dyn Fn(&crate::bounds::Effectivities) -> f64| {
                    max_finite(self.reports(k, n).map(|r| f(&r.effectivities.expect("errors attached"))))
                };
                let vals = [
                    col(&|e| e.u_energy),
                    col(&|e| e.u_sym),
                    col(&|e| e.u_br),
                    col(&|e| e.u_ba),
                    col(&|e| e.p_sym),
                    col(&|e| e.p_br),
                    col(&|e| e.p_ba),
                    col(&|e| e.sym),
                    col(&|e| e.br),
                    col(&|e| e.ba),
                ];
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    alg.number(),
                    n,
                    g.0 + g.1,
                    vals.iter().map(|v| fmt_f(*v)).collect::<Vec<_>>().join(",")
                );
            }
        }
        out
    }

    /// Smallest generation whose max relative bound (over the test set)
    /// for `target` (`"u"` or `"p"`) is at most `tol`.
    pub fn generation_for(&self, k: usize, target: &str, tol: f64) -> Option<usize> {
        (1..=self.generations[k].len()).find(|&n| {
            let all = self.reports(k, n).count() == self.points.len();
            all && self.reports(k, n).all(|r| {
                let e = r.errors.expect("errors attached");
                if target == "u" {
                    r.delta_u_sym <= tol * e.u_norm
                } else {
                    r.delta_p_sym <= tol * e.p_norm
                }
            })
        })
    }

    /// Smallest `N_Z` at which the relative energy-norm velocity indicator
    /// `Δ̃u_sym/‖u_N‖_X` is at most `tol` at every test point.
    pub fn indicator_n_z(&self, k: usize, tol: f64) -> Option<usize> {
        (1..=self.generations[k].len())
            .find(|&n| {
                self.reports(k, n).count() == self.points.len()
                    && self.reports(k, n).all(|r| r.delta_u_energy <= tol * r.u_n_norm)
            })
            .map(|n| self.generations[k][n - 1].0 + self.generations[k][n - 1].1)
    }
}

/// Average online timings at generation `n` over the test set.
pub fn online_timings(
    model: &ReducedModel,
    surrogate: &SurrogateModel,
    test: &[Vec<f64>],
    n: usize,
    reps: usize,
) -> Result<(f64, f64)> {
    let (mut ts, mut tb) = (0.0, 0.0);
    for mu in test {
        let t0 = Instant::now();
        let mut sol = None;
        for _ in 0..reps {
            sol = Some(model.online_solve(mu, n)?);
        }
        ts += ms(t0) / reps as f64;
        let sol = sol.expect("reps >= 1");
        let t1 = Instant::now();
        for _ in 0..reps {
            let (r1, r2) = model.residual_dual_norms(&sol)?;
            let c = surrogate.bounds(mu, &model.a_thetas(mu)?)?;
            std::hint::black_box((delta_u_sym(r1, r2, &c)?, delta_p_sym(r1, r2, &c)?));
        }
        tb += ms(t1) / reps as f64;
    }
    let k = test.len() as f64;
    Ok((ts / k, tb / k))
}

#[derive(Debug, Clone, Serialize)]
pub struct Table2Row {
    pub alg: u8,
    pub target: &'static str,
    pub tol: f64,
    pub n: Option<usize>,
    pub n_z: Option<usize>,
    pub t_solve_ms: f64,
    pub t_bounds_ms: f64,
    pub t_truth_ms: f64,
}

impl Table2Row {
    pub fn total_ms(&self) -> f64 {
        self.t_solve_ms + self.t_bounds_ms
    }

    pub fn speedup(&self) -> f64 {
        self.t_truth_ms / self.total_ms()
    }

    fn csv(&self) -> String {
        let opt = |v: Option<usize>| v.map_or(String::new(), |v| v.to_string());
        format!(
            "{},{},{},{},{},{:.4},{:.4},{:.4},{:.1}",
            self.alg,
            self.target,
            self.tol,
            opt(self.n_z),
            opt(self.n),
            self.t_solve_ms,
            self.t_bounds_ms,
            self.total_ms(),
            self.speedup()
        )
    }
}

pub fn table2_csv(rows: &[Table2Row]) -> String {
    let mut out = format!("{TABLE2_HEADER}\n");
    for r in rows {
        out.push_str(&r.csv());
        out.push('\n');
    }
    out
}

pub struct SweepOutput {
    pub data: SweepData,
    pub table2: Vec<Table2Row>,
    pub files: Vec<std::path::PathBuf>,
}

/// Test-set sweep; writes `alg<k>/fig_{u,p,z}.csv`, `table1.csv`, `table2.csv`.
pub fn cmd_sweep(artifact: &Artifact, seed: Option<u64>, out_dir: &Path) -> Result<SweepOutput> {
    let cfg = &artifact.manifest.config;
    let disc = artifact.truth()?;
    let test = sample_train_set(disc.domain(), cfg.test.size, seed.unwrap_or(cfg.test.seed))?;
    let spaces: Vec<RBSpace> = artifact.models.iter().map(|m| m.space(&disc)).collect();
    let models: Vec<(Variant, &ReducedModel, &RBSpace)> =
        artifact.models.iter().zip(&spaces).map(|(m, s)| (m.alg(), &m.model, s)).collect();
    let data = evaluate_test_set(&disc, &models, &test, &eigen_options(cfg))?;
    let t_truth = data.points.iter().map(|p| p.t_truth_ms).sum::<f64>() / data.points.len() as f64;

    let mut table2 = Vec::new();
    for (k, (alg, model, _)) in models.iter().enumerate() {
        for target in ["u", "p"] {
            for tol in [1e-2, 1e-3] {
                let n = data.generation_for(k, target, tol);
                let (ts, tb) = match n {
                    Some(n) => online_timings(model, &artifact.manifest.surrogate, &test, n, 20)?,
                    None => (f64::NAN, f64::NAN),
                };
                table2.push(Table2Row {
                    alg: alg.number(),
                    target,
                    tol,
                    n,
                    n_z: n.map(|n| data.generations[k][n - 1].0 + data.generations[k][n - 1].1),
                    t_solve_ms: ts,
                    t_bounds_ms: tb,
                    t_truth_ms: t_truth,
                });
            }
        }
    }

    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    for (k, alg) in data.algs.iter().enumerate() {
        let d = out_dir.join(format!("alg{}", alg.number()));
        fs::create_dir_all(&d)?;
        for (q, name) in [("u", "fig_u.csv"), ("p", "fig_p.csv"), ("", "fig_z.csv")] {
            let path = d.join(name);
            fs::write(&path, data.fig_csv(k, q))?;
            files.push(path);
        }
    }
    let t1 = out_dir.join("table1.csv");
    fs::write(&t1, data.table1_csv())?;
    let t2 = out_dir.join("table2.csv");
    fs::write(&t2, table2_csv(&table2))?;
    files.extend([t1, t2]);
    Ok(SweepOutput { data, table2, files })
}

/// One named verification outcome.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check { name: name.into(), passed, detail });
    }

    fn push_result(&mut self, name: &str, r: Result<(bool, String)>) {
        match r {
            Ok((p, d)) => self.push(name, p, d),
            Err(e) => self.push(name, false, format!("error: {e}")),
        }
    }
}

/// Runs the invariant suite against an artifact on a seeded test set.
pub fn cmd_verify(artifact: &Artifact, seed: Option<u64>, size: Option<usize>) -> Result<VerifyReport> {
    let cfg = &artifact.manifest.config;
    let size = size.unwrap_or(cfg.test.size);
    if size == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    let mut report = VerifyReport { checks: Vec::new() };
    let disc = match artifact.truth() {
        Ok(d) => {
            report.push("truth-rebuild", true, format!("mesh hash {}", &artifact.manifest.mesh_hash[..12]));
            d
        }
        Err(e) => {
            report.push("truth-rebuild", false, e.to_string());
            return Ok(report);
        }
    };
    let opts = eigen_options(cfg);
    let test = sample_train_set(disc.domain(), size, seed.unwrap_or(cfg.test.seed))?;
    let spaces: Vec<RBSpace> = artifact.models.iter().map(|m| m.space(&disc)).collect();

    for (m, space) in artifact.models.iter().zip(&spaces) {
        let k = m.alg().number();
        report.push_result(&format!("alg{k}/reprojection"), reprojection_check(&disc, m, space, &test[0]));
        report.push_result(&format!("alg{k}/riesz-vs-direct"), riesz_check(&disc, m, space, &test));
    }

    let models: Vec<(Variant, &ReducedModel, &RBSpace)> =
        artifact.models.iter().zip(&spaces).map(|(m, s)| (m.alg(), &m.model, s)).collect();
    let data = match evaluate_test_set(&disc, &models, &test, &opts) {
        Ok(d) => d,
        Err(e) => {
            report.push("evaluation", false, e.to_string());
            return Ok(report);
        }
    };
    for (k, alg) in data.algs.iter().enumerate() {
        let a = alg.number();
        let (viol, total) = rigor_violations(&data, k);
        report.push(&format!("alg{a}/rigor"), viol.is_empty(), format!("{} violations of {total}: {viol:?}", viol.len()));
        let bad = ordering_violations(&data, k);
        report.push(&format!("alg{a}/ordering"), bad.is_empty(), format!("{} violations: {bad:?}", bad.len()));
    }
    let mut worst = 0.0f64;
    for p in &data.points {
        worst = worst.max(sandwich_defect(&p.constants));
    }
    report.push("tilde-beta-sandwich", worst <= 1e-8, format!("max relative defect {worst:.2e}"));

    for (m, space) in artifact.models.iter().zip(&spaces) {
        let mut fails = Vec::new();
        let mut checked = 0;
        let gens = m.model.n_generations();
        for (i, p) in data.points.iter().take(3).enumerate() {
            for n in [1, (gens + 1) / 2, gens] {
                match verify_apriori(&disc, space, &m.model, &p.mu, n, &p.constants.bounds()) {
                    Ok(r) if r.holds() => checked += 1,
                    Ok(r) => fails.push(format!("point {i}, N = {n}: {r:?}")),
                    Err(e) => fails.push(format!("point {i}, N = {n}: {e}")),
                }
            }
        }
        let detail = if fails.is_empty() { format!("{checked} (mu, N) pairs hold") } else { fails.join("; ") };
        report.push(&format!("alg{}/a-priori", m.alg().number()), fails.is_empty(), detail);
    }
    Ok(report)
}

/// Loading and re-projecting must reproduce online answers bitwise.
pub fn reprojection_check(disc: &TruthDiscretization, m: &StoredModel, space: &RBSpace, mu: &[f64]) -> Result<(bool, String)> {
    let fresh = ReducedModel::project(disc, space)?;
    let gens = m.model.n_generations();
    for n in [1, gens] {
        let a = m.model.online_solve(mu, n)?;
        let b = fresh.online_solve(mu, n)?;
        let na = m.model.residual_dual_norms(&a)?;
        let nb = fresh.residual_dual_norms(&b)?;
        if a.u != b.u || a.p != b.p || na != nb {
            return Ok((false, format!("generation {n} differs")));
        }
    }
    Ok((true, "bitwise identical".into()))
}

/// Worst relative gap between expansion and truth-level residual norms.
pub fn riesz_check(disc: &TruthDiscretization, m: &StoredModel, space: &RBSpace, test: &[Vec<f64>]) -> Result<(bool, String)> {
    let xf = SpdFactor::new(disc.x_gram())?;
    let yf = SpdFactor::new(disc.y_gram())?;
    let gens = m.model.n_generations();
    let mut worst = 0.0f64;
    for (i, mu) in test.iter().take(10).enumerate() {
        let n = 1 + (i * 7) % gens;
        let sol = m.model.online_solve(mu, n)?;
        let (r1, r2) = m.model.residual_dual_norms(&sol)?;
        let (d1, d2) = direct_residual_norms(disc, space, &sol, &xf, &yf)?;
        worst = worst.max((r1 - d1).abs() / d1.max(1e-300)).max((r2 - d2).abs() / d2.max(1e-300));
    }
    Ok((worst <= 1e-8, format!("max relative gap {worst:.2e}")))
}

/// `(violations as (point, N, name), number of pairs checked)`.
pub fn rigor_violations(data: &SweepData, k: usize) -> (Vec<(usize, usize, &'static str)>, usize) {
    let mut out = Vec::new();
    let mut total = 0;
    for (i, p) in data.points.iter().enumerate() {
        for r in p.reports[k].iter().flatten() {
            for (name, err, bound) in r.rigor_pairs() {
                total += 1;
                if !(err <= bound) {
                    out.push((i, r.n, name));
                }
            }
        }
    }
    (out, total)
}

/// Strict bound orderings and the effectivity ordering.
pub fn ordering_violations(data: &SweepData, k: usize) -> Vec<(usize, usize, &'static str)> {
    let mut out = Vec::new();
    for (i, p) in data.points.iter().enumerate() {
        for r in p.reports[k].iter().flatten() {
            if r.r2 > 0.0 && !(r.delta_u_sym < r.delta_u_gen) {
                out.push((i, r.n, "u_sym<u_gen"));
            }
            if r.r1 + r.r2 > 0.0 && !(r.delta_p_sym < r.delta_p_gen) {
                out.push((i, r.n, "p_sym<p_gen"));
            }
            if r.r1 + r.r2 > 0.0 && !(r.delta_sym < r.delta_br) {
                out.push((i, r.n, "sym<br"));
            }
            if let Some(e) = r.effectivities {
                if !e.u_energy.is_nan() && !e.u_sym.is_nan() && e.u_energy > e.u_sym * (1.0 + 1e-12) {
                    out.push((i, r.n, "eta_u_energy<=eta_u_sym"));
                }
            }
        }
    }
    out
}

/// Relative violation of `β_Br/√γ ≤ tilde β ≤ β_Br/√α` (0 when it holds).
pub fn sandwich_defect(c: &ExactConstants) -> f64 {
    let lo = c.beta_br / c.gamma.sqrt();
    let hi = c.beta_br / c.alpha.sqrt();
    ((lo - c.tilde_beta) / c.tilde_beta).max((c.tilde_beta - hi) / c.tilde_beta).max(0.0)
}

/// Writes the mesh mapped to `µ` in the plain text format of [`Mesh::export_text`].
pub fn cmd_mesh_export(config: &ExperimentConfig, mu: Option<&[f64]>, out_dir: &Path) -> Result<std::path::PathBuf> {
    config.validate()?;
    let mesh = Mesh::build(&config.geometry)?;
    let reference = config.geometry.reference_mu.to_vec();
    let mu = mu.map(|m| m.to_vec()).unwrap_or(reference);
    config.geometry.domain()?.check(&mu)?;
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join("mesh.txt");
    fs::write(&path, mesh.export_text(&mu))?;
    Ok(path)
}
