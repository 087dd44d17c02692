//! Greedy construction of the RB spaces driven by the relative energy-norm
//! velocity bound, with three stabilization strategies.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affine::ParameterDomain;
use crate::bounds::delta_u_energy;
use crate::constants::{beta_br_of, SurrogateModel};
use crate::error::{Error, Result};
use crate::numerics::{EigenOptions, SpdFactor};
use crate::rb_online::ReducedModel;
use crate::rb_space::{rb_infsup, supremizer, Field, RBSpace, Role};
use crate::stokes::TruthDiscretization;

/// Stabilization strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Variant {
    /// Always add the supremizer of the pressure snapshot.
    V1,
    /// Add the supremizer only when the RB inf-sup constant drops.
    V2,
    /// Add another velocity snapshot when the RB inf-sup constant drops.
    V3,
}

impl Variant {
    pub fn number(self) -> u8 {
        match self {
            Variant::V1 => 1,
            Variant::V2 => 2,
            Variant::V3 => 3,
        }
    }
}

impl TryFrom<u8> for Variant {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Variant::V1),
            2 => Ok(Variant::V2),
            3 => Ok(Variant::V3),
            _ => Err(format!("greedy variant must be 1, 2 or 3, got {v}")),
        }
    }
}

impl From<Variant> for u8 {
    fn from(v: Variant) -> u8 {
        v.number()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GreedyConfig {
    pub train_size: usize,
    pub seed: u64,
    /// Stop once the max relative indicator over the train set is below this.
    pub tolerance: f64,
    /// Maximum number of greedy iterations (generations).
    pub n_max: usize,
    pub delta_beta_tol: f64,
    pub variant: Variant,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        Self { train_size: 400, seed: 1, tolerance: 1e-2, n_max: 40, delta_beta_tol: 0.1, variant: Variant::V1 }
    }
}

impl GreedyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_size == 0 {
            return Err(Error::EmptyTrainingSet);
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if !(self.delta_beta_tol > 0.0 && self.delta_beta_tol <= 1.0) {
            return Err(Error::Config(format!("delta_beta_tol must lie in (0, 1], got {}", self.delta_beta_tol)));
        }
        if self.n_max == 0 {
            return Err(Error::Config("n_max must be at least 1".into()));
        }
        Ok(())
    }
}

/// Uniform i.i.d. sample of `size` points in `domain`.
pub fn sample_train_set(domain: &ParameterDomain, size: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if size == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..size)
        .map(|_| {
            let t: Vec<f64> = (0..domain.dim()).map(|_| rng.gen::<f64>()).collect();
            domain.from_unit(&t)
        })
        .collect())
}

/// One greedy iteration.
#[derive(Debug, Clone, Serialize)]
pub struct GreedyStep {
    pub iteration: usize,
    pub mu: Vec<f64>,
    /// Index of `mu` in the train set.
    pub index: usize,
    /// Max relative indicator over the train set after this enrichment.
    pub max_indicator: f64,
    /// Where the max was attained (the next µ*).
    pub argmax: Option<usize>,
    pub n_x: usize,
    pub n_y: usize,
    pub n_z: usize,
    /// `β_N(µ*)` after enrichment.
    pub beta_n: f64,
    /// `β_Br(µ*)` when the stabilization test needed it.
    pub beta_br: Option<f64>,
    pub added: Vec<(Role, bool)>,
    /// Train index of the extra velocity snapshot (third variant).
    pub extra: Option<usize>,
    pub n_singular: usize,
    pub t_truth_ms: f64,
    pub t_enrich_ms: f64,
    pub t_sweep_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GreedyTrace {
    pub variant: Variant,
    pub steps: Vec<GreedyStep>,
    pub converged: bool,
}

impl GreedyTrace {
    pub const CSV_HEADER: &'static str =
        "iteration,mu1,mu2,max_indicator,n_x,n_y,n_z,beta_n,supremizer,extra,n_singular,t_truth_ms,t_enrich_ms,t_sweep_ms";

    pub fn final_indicator(&self) -> f64 {
        self.steps.last().map_or(f64::INFINITY, |s| s.max_indicator)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for s in &self.steps {
            let sup = s.added.iter().any(|(r, a)| *r == Role::Supremizer && *a);
            out.push_str(&format!(
                "{},{},{},{:e},{},{},{},{:e},{},{},{},{:.3},{:.3},{:.3}\n",
                s.iteration,
                s.mu[0],
                s.mu.get(1).copied().unwrap_or(f64::NAN),
                s.max_indicator,
                s.n_x,
                s.n_y,
                s.n_z,
                s.beta_n,
                sup as u8,
                s.extra.map_or(String::new(), |e| e.to_string()),
                s.n_singular,
                s.t_truth_ms,
                s.t_enrich_ms,
                s.t_sweep_ms
            ));
        }
        out
    }
}

pub struct GreedyResult {
    pub space: RBSpace,
    pub model: ReducedModel,
    pub trace: GreedyTrace,
    pub train: Vec<Vec<f64>>,
}

/// Relative indicator `Δ̃u_sym(µ) / ‖u_N(µ)‖_X` with surrogate constants.
///
/// Returns `None` when the reduced system is singular at `µ`.
pub fn relative_indicator(model: &ReducedModel, surrogate: &SurrogateModel, mu: &[f64], n: usize) -> Result<Option<f64>> {
    let sol = match model.online_solve(mu, n) {
        Ok(s) => s,
        Err(Error::SingularReducedSystem) => return Ok(None),
        Err(e) => return Err(e),
    };
    let (r1, r2) = model.residual_dual_norms(&sol)?;
    let c = surrogate.bounds(mu, &model.a_thetas(mu)?)?;
    let delta = delta_u_energy(r1, r2, &c)?;
    let (un, _) = ReducedModel::solution_norms(&sol);
    Ok(Some(if un > 0.0 { delta / un } else { f64::INFINITY }))
}

/// Indicator over the whole train set, in parallel. Singular points get `+∞`.
pub fn sweep_indicator(
    model: &ReducedModel,
    surrogate: &SurrogateModel,
    train: &[Vec<f64>],
    n: usize,
) -> Result<(Vec<f64>, usize)> {
    let vals: Vec<Option<f64>> =
        train.par_iter().map(|mu| relative_indicator(model, surrogate, mu, n)).collect::<Result<_>>()?;
    let singular = vals.iter().filter(|v| v.is_none()).count();
    Ok((vals.into_iter().map(|v| v.unwrap_or(f64::INFINITY)).collect(), singular))
}

/// Ties go to the lowest index; masked points are skipped.
fn argmax(vals: &[f64], mask: &[bool], skip: Option<usize>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in vals.iter().enumerate() {
        if mask[i] || Some(i) == skip {
            continue;
        }
        if best.map_or(true, |b| *v > vals[b]) {
            best = Some(i);
        }
    }
    best
}

/// Runs the greedy loop.
pub fn greedy_run(
    disc: &TruthDiscretization,
    surrogate: &SurrogateModel,
    config: &GreedyConfig,
    eig_opts: &EigenOptions,
) -> Result<GreedyResult> {
    config.validate()?;
    let train = sample_train_set(disc.domain(), config.train_size, config.seed)?;
    let x_factor = Arc::new(SpdFactor::new(disc.x_gram())?);
    let y_factor = Arc::new(SpdFactor::new(disc.y_gram())?);
    let mut space = RBSpace::new(disc.x_gram().clone(), disc.y_gram().clone());
    let mut model = ReducedModel::project_with(disc, &space, x_factor.clone(), y_factor)?;
    let mut mask = vec![false; train.len()];
    let mut steps: Vec<GreedyStep> = Vec::new();
    let mut current = 0usize;
    let mut last_vals: Option<Vec<f64>> = None;
    let mut converged = false;

    for iteration in 1..=config.n_max {
        let mu = train[current].clone();
        let t0 = Instant::now();
        let truth = disc.solve(&mu)?;
        let t_truth_ms = t0.elapsed().as_secs_f64() * 1e3;

        let t1 = Instant::now();
        let b = disc.b().assemble_at(&mu)?;
        let mut added = Vec::new();
        let mut beta_br = None;
        let mut extra = None;
        let r = space.insert(Field::Velocity, &[(truth.u.clone(), Role::USnapshot)]);
        added.push((Role::USnapshot, r.accepted[0]));
        let r = space.insert(Field::Pressure, &[(truth.p.clone(), Role::PSnapshot)]);
        added.push((Role::PSnapshot, r.accepted[0]));
        match config.variant {
            Variant::V1 => {
                let s = supremizer(&x_factor, &b, &truth.p)?;
                let r = space.insert(Field::Velocity, &[(s, Role::Supremizer)]);
                added.push((Role::Supremizer, r.accepted[0]));
            }
            Variant::V2 | Variant::V3 => {
                let br = beta_br_of(&b, disc.x_gram(), disc.y_gram(), eig_opts)?;
                beta_br = Some(br);
                if rb_infsup(&space, &b) < config.delta_beta_tol * br {
                    if config.variant == Variant::V2 {
                        let s = supremizer(&x_factor, &b, &truth.p)?;
                        let r = space.insert(Field::Velocity, &[(s, Role::Supremizer)]);
                        added.push((Role::Supremizer, r.accepted[0]));
                    } else {
                        // Next-largest indicator point; before the first sweep, the next train point.
                        let next = match &last_vals {
                            Some(v) => argmax(v, &mask, Some(current)),
                            None => (current + 1 < train.len()).then_some(current + 1),
                        };
                        if let Some(k) = next {
                            let u2 = disc.solve(&train[k])?.u;
                            let r = space.insert(Field::Velocity, &[(u2, Role::ExtraSnapshot)]);
                            added.push((Role::ExtraSnapshot, r.accepted[0]));
                            extra = Some(k);
                        }
                    }
                }
            }
        }
        let gen = space.close_generation();
        model.extend(&space)?;
        let beta_n = rb_infsup(&space, &b);
        let t_enrich_ms = t1.elapsed().as_secs_f64() * 1e3;

        if added.iter().all(|(_, a)| *a) {
            mask[current] = true;
        }

        let t2 = Instant::now();
        let (vals, n_singular) = sweep_indicator(&model, surrogate, &train, gen)?;
        let next = argmax(&vals, &mask, None);
        let max_indicator = next.map_or(0.0, |i| vals[i]);
        let t_sweep_ms = t2.elapsed().as_secs_f64() * 1e3;
        let (n_x, n_y) = (space.n_x(), space.n_y());
        steps.push(GreedyStep {
            iteration,
            mu,
            index: current,
            max_indicator,
            argmax: next,
            n_x,
            n_y,
            n_z: n_x + n_y,
            beta_n,
            beta_br,
            added,
            extra,
            n_singular,
            t_truth_ms,
            t_enrich_ms,
            t_sweep_ms,
        });
        last_vals = Some(vals);
        match next {
            Some(i) if max_indicator > config.tolerance => current = i,
            _ => {
                converged = max_indicator <= config.tolerance;
                break;
            }
        }
    }
    Ok(GreedyResult { space, model, trace: GreedyTrace { variant: config.variant, steps, converged }, train })
}
