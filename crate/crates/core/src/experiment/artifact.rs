//! Offline artifact: a directory holding `manifest.toml` and raw
//! little-endian f64 payloads, each checked by SHA-256.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::affine::{ParameterDomain, ThetaExpr};
use crate::constants::SurrogateModel;
use crate::error::{Error, Result};
use crate::greedy::{GreedyResult, Variant};
use crate::rb_online::{ReducedModel, RieszExpansion, RieszTerm};
use crate::rb_space::{Field, RBSpace, Role};
use crate::stokes::TruthDiscretization;

pub const FORMAT: &str = "rbsaddle-artifact";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.toml";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub mesh_hash: String,
    pub n_truth: usize,
    pub n_x_truth: usize,
    pub n_y_truth: usize,
    pub config: ExperimentConfig,
    pub thetas: ThetaSection,
    pub surrogate: SurrogateModel,
    pub models: Vec<ModelEntry>,
    pub payloads: Vec<PayloadEntry>,
}

/// Coefficient functions as s-expressions, in term order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaSection {
    pub a: Vec<String>,
    pub b: Vec<String>,
    pub f: Vec<String>,
    pub g: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelEntry {
    pub alg: Variant,
    pub converged: bool,
    pub final_indicator: f64,
    pub generations: Vec<[usize; 2]>,
    pub velocity_roles: Vec<Role>,
    pub pressure_roles: Vec<Role>,
    pub velocity_generation: Vec<usize>,
    pub pressure_generation: Vec<usize>,
    pub order: Vec<(Field, usize)>,
    /// Greedy-selected parameters, in order.
    pub selected: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadEntry {
    pub name: String,
    pub file: String,
    pub shape: Vec<usize>,
    pub sha256: String,
}

/// One stored reduced model with its basis columns.
#[derive(Debug, Clone)]
pub struct StoredModel {
    pub entry: ModelEntry,
    pub model: ReducedModel,
    pub velocity: Vec<Vec<f64>>,
    pub pressure: Vec<Vec<f64>>,
}

impl StoredModel {
    pub fn alg(&self) -> Variant {
        self.entry.alg
    }

    /// Rebuilds the RB space on top of the truth Gram matrices.
    pub fn space(&self, disc: &TruthDiscretization) -> RBSpace {
        let cols = |v: &[Vec<f64>], roles: &[Role], gens: &[usize]| {
            v.iter().zip(roles).zip(gens).map(|((c, r), g)| (c.clone(), *r, *g)).collect::<Vec<_>>()
        };
        RBSpace::from_parts(
            disc.x_gram().clone(),
            disc.y_gram().clone(),
            cols(&self.velocity, &self.entry.velocity_roles, &self.entry.velocity_generation),
            cols(&self.pressure, &self.entry.pressure_roles, &self.entry.pressure_generation),
            self.entry.order.clone(),
            self.entry.generations.iter().map(|g| (g[0], g[1])).collect(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct Artifact {
    pub manifest: Manifest,
    pub models: Vec<StoredModel>,
}

fn sha_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn theta_strings(ts: &[ThetaExpr]) -> Vec<String> {
    ts.iter().map(|t| t.to_string()).collect()
}

fn parse_thetas(ts: &[String]) -> Result<Vec<ThetaExpr>> {
    ts.iter().map(|t| ThetaExpr::parse(t)).collect()
}

/// Payload buffer: name → (shape, values).
type Payloads = BTreeMap<String, (Vec<usize>, Vec<f64>)>;

fn put_matrix(p: &mut Payloads, name: String, m: &DMatrix<f64>) {
    // row-major
    let mut v = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            v.push(m[(i, j)]);
        }
    }
    p.insert(name, (vec![m.nrows(), m.ncols()], v));
}

fn put_stack(p: &mut Payloads, name: String, ms: &[DMatrix<f64>]) {
    let (r, c) = ms.first().map_or((0, 0), |m| m.shape());
    let mut v = Vec::with_capacity(ms.len() * r * c);
    for m in ms {
        for i in 0..r {
            for j in 0..c {
                v.push(m[(i, j)]);
            }
        }
    }
    p.insert(name, (vec![ms.len(), r, c], v));
}

fn put_rows(p: &mut Payloads, name: String, rows: &[Vec<f64>], width: usize) {
    let v: Vec<f64> = rows.iter().flatten().copied().collect();
    p.insert(name, (vec![rows.len(), width], v));
}

fn put_riesz(p: &mut Payloads, prefix: &str, r: &RieszExpansion) {
    put_matrix(p, format!("{prefix}.gram"), r.gram());
    put_matrix(p, format!("{prefix}.factor"), r.factor());
    let rank: Vec<f64> = r.rank_after().iter().map(|k| *k as f64).collect();
    p.insert(format!("{prefix}.rank_after"), (vec![rank.len()], rank));
    let mut terms = Vec::with_capacity(3 * r.len());
    for t in r.terms() {
        let (k, q, i) = match *t {
            RieszTerm::Rhs(q) => (0, q, 0),
            RieszTerm::Velocity(q, n) => (1, q, n),
            RieszTerm::Pressure(q, m) => (2, q, m),
        };
        terms.extend([k as f64, q as f64, i as f64]);
    }
    p.insert(format!("{prefix}.terms"), (vec![r.len(), 3], terms));
}

struct Reader {
    dir: PathBuf,
    entries: BTreeMap<String, PayloadEntry>,
}

impl Reader {
    fn raw(&self, name: &str) -> Result<(Vec<usize>, Vec<f64>)> {
        let e = self.entries.get(name).ok_or_else(|| Error::Artifact(format!("payload {name} missing from manifest")))?;
        let bytes = fs::read(self.dir.join(&e.file))
            .map_err(|err| Error::Artifact(format!("cannot read payload {}: {err}", e.file)))?;
        if sha_hex(&bytes) != e.sha256 {
            return Err(Error::Artifact(format!("checksum mismatch for payload {name}")));
        }
        let count: usize = e.shape.iter().product();
        if bytes.len() != 8 * count {
            return Err(Error::Artifact(format!("payload {name} has {} bytes, shape {:?}", bytes.len(), e.shape)));
        }
        let v = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok((e.shape.clone(), v))
    }

    fn matrix(&self, name: &str) -> Result<DMatrix<f64>> {
        let (s, v) = self.raw(name)?;
        if s.len() != 2 {
            return Err(Error::Artifact(format!("payload {name} is not a matrix")));
        }
        Ok(DMatrix::from_row_slice(s[0], s[1], &v))
    }

    fn stack(&self, name: &str) -> Result<Vec<DMatrix<f64>>> {
        let (s, v) = self.raw(name)?;
        if s.len() != 3 {
            return Err(Error::Artifact(format!("payload {name} is not a matrix stack")));
        }
        let step = s[1] * s[2];
        Ok((0..s[0]).map(|k| DMatrix::from_row_slice(s[1], s[2], &v[k * step..(k + 1) * step])).collect())
    }

    fn rows(&self, name: &str) -> Result<Vec<Vec<f64>>> {
        let (s, v) = self.raw(name)?;
        if s.len() != 2 {
            return Err(Error::Artifact(format!("payload {name} is not a matrix")));
        }
        Ok(if s[1] == 0 { vec![Vec::new(); s[0]] } else { v.chunks(s[1]).map(|c| c.to_vec()).collect() })
    }

    fn riesz(&self, prefix: &str) -> Result<RieszExpansion> {
        let gram = self.matrix(&format!("{prefix}.gram"))?;
        let factor = self.matrix(&format!("{prefix}.factor"))?;
        let (_, rank) = self.raw(&format!("{prefix}.rank_after"))?;
        let (_, t) = self.raw(&format!("{prefix}.terms"))?;
        let terms = t
            .chunks(3)
            .map(|c| match c[0] as u8 {
                0 => Ok(RieszTerm::Rhs(c[1] as usize)),
                1 => Ok(RieszTerm::Velocity(c[1] as usize, c[2] as usize)),
                2 => Ok(RieszTerm::Pressure(c[1] as usize, c[2] as usize)),
                k => Err(Error::Artifact(format!("unknown Riesz term kind {k}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if gram.nrows() != terms.len() || factor.ncols() != terms.len() || rank.len() != terms.len() {
            return Err(Error::Artifact(format!("inconsistent Riesz payloads under {prefix}")));
        }
        Ok(RieszExpansion::from_parts(terms, gram, factor, rank.iter().map(|r| *r as usize).collect()))
    }
}

impl Artifact {
    /// Collects greedy results into an artifact.
    pub fn from_results(
        config: &ExperimentConfig,
        disc: &TruthDiscretization,
        surrogate: &SurrogateModel,
        results: Vec<GreedyResult>,
    ) -> Result<Self> {
        let mut models = Vec::new();
        for r in results {
            let s = &r.space;
            let entry = ModelEntry {
                alg: r.trace.variant,
                converged: r.trace.converged,
                final_indicator: r.trace.final_indicator(),
                generations: s.generations().iter().map(|g| [g.0, g.1]).collect(),
                velocity_roles: s.velocity_roles().to_vec(),
                pressure_roles: s.pressure_roles().to_vec(),
                velocity_generation: s.velocity_generation().to_vec(),
                pressure_generation: s.pressure_generation().to_vec(),
                order: s.insertion_order().to_vec(),
                selected: r.trace.steps.iter().map(|st| st.mu.clone()).collect(),
            };
            let mut model = r.model;
            model.strip_offline();
            models.push(StoredModel {
                entry,
                model,
                velocity: s.velocity_basis().to_vec(),
                pressure: s.pressure_basis().to_vec(),
            });
        }
        let manifest = Manifest {
            format: FORMAT.into(),
            version: FORMAT_VERSION,
            mesh_hash: disc.mesh().hash(),
            n_truth: disc.n_total(),
            n_x_truth: disc.n_u(),
            n_y_truth: disc.n_p(),
            config: config.clone(),
            thetas: ThetaSection {
                a: theta_strings(disc.a().thetas()),
                b: theta_strings(disc.b().thetas()),
                f: theta_strings(disc.f().thetas()),
                g: theta_strings(disc.g().thetas()),
            },
            surrogate: surrogate.clone(),
            models: Vec::new(),
            payloads: Vec::new(),
        };
        Ok(Self { manifest, models })
    }

    fn payloads(&self) -> Payloads {
        let mut p = Payloads::new();
        for m in &self.models {
            let k = m.alg().number();
            put_rows(&mut p, format!("alg{k}.velocity_basis"), &m.velocity, self.manifest.n_x_truth);
            put_rows(&mut p, format!("alg{k}.pressure_basis"), &m.pressure, self.manifest.n_y_truth);
            put_stack(&mut p, format!("alg{k}.a_blocks"), m.model.a_blocks());
            put_stack(&mut p, format!("alg{k}.b_blocks"), m.model.b_blocks());
            let vecs = |vs: &[DVector<f64>]| vs.iter().map(|v| v.iter().copied().collect()).collect::<Vec<Vec<f64>>>();
            let n_x = m.velocity.len();
            let n_y = m.pressure.len();
            put_rows(&mut p, format!("alg{k}.f_blocks"), &vecs(m.model.f_blocks()), n_x);
            put_rows(&mut p, format!("alg{k}.g_blocks"), &vecs(m.model.g_blocks()), n_y);
            let (r1, r2) = m.model.riesz();
            put_riesz(&mut p, &format!("alg{k}.r1"), r1);
            put_riesz(&mut p, &format!("alg{k}.r2"), r2);
        }
        p
    }

    /// Writes into a sibling temporary directory, then renames it into place.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let name = dir
            .file_name()
            .ok_or_else(|| Error::Artifact(format!("bad artifact path {}", dir.display())))?
            .to_string_lossy()
            .into_owned();
        let parent = dir.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(parent)?;
        let tmp = parent.join(format!(".{name}.tmp{}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir_all(&tmp)?;
        let mut manifest = self.manifest.clone();
        manifest.models = self.models.iter().map(|m| m.entry.clone()).collect();
        manifest.payloads.clear();
        for (pname, (shape, values)) in self.payloads() {
            let mut bytes = Vec::with_capacity(8 * values.len());
            for v in &values {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            let file = format!("{pname}.f64");
            fs::write(tmp.join(&file), &bytes)?;
            manifest.payloads.push(PayloadEntry { name: pname, file, shape, sha256: sha_hex(&bytes) });
        }
        let text = toml::to_string(&manifest).map_err(|e| Error::Artifact(format!("manifest: {e}")))?;
        fs::write(tmp.join(MANIFEST), text)?;
        if dir.exists() {
            let old = parent.join(format!(".{name}.old{}", std::process::id()));
            fs::rename(dir, &old)?;
            fs::rename(&tmp, dir)?;
            fs::remove_dir_all(&old)?;
        } else {
            fs::rename(&tmp, dir)?;
        }
        Ok(())
    }

    pub fn read_manifest(dir: &Path) -> Result<Manifest> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Artifact(format!("cannot read {}: {e}", path.display())))?;
        let m: Manifest = toml::from_str(&text).map_err(|e| Error::Artifact(format!("manifest: {e}")))?;
        if m.format != FORMAT || m.version != FORMAT_VERSION {
            return Err(Error::Artifact(format!("unsupported artifact {} v{}", m.format, m.version)));
        }
        Ok(m)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = Self::read_manifest(dir)?;
        let reader = Reader {
            dir: dir.to_path_buf(),
            entries: manifest.payloads.iter().map(|e| (e.name.clone(), e.clone())).collect(),
        };
        let g = &manifest.config.geometry;
        let domain = ParameterDomain::new(g.mu_lower.to_vec(), g.mu_upper.to_vec())?;
        let th = &manifest.thetas;
        let thetas = [parse_thetas(&th.a)?, parse_thetas(&th.b)?, parse_thetas(&th.f)?, parse_thetas(&th.g)?];
        let mut models = Vec::new();
        for entry in &manifest.models {
            let k = entry.alg.number();
            let col = |vs: Vec<Vec<f64>>| vs.into_iter().map(DVector::from_vec).collect::<Vec<_>>();
            let model = ReducedModel::from_parts(
                domain.clone(),
                thetas.clone(),
                reader.stack(&format!("alg{k}.a_blocks"))?,
                reader.stack(&format!("alg{k}.b_blocks"))?,
                col(reader.rows(&format!("alg{k}.f_blocks"))?),
                col(reader.rows(&format!("alg{k}.g_blocks"))?),
                entry.generations.iter().map(|g| (g[0], g[1])).collect(),
                reader.riesz(&format!("alg{k}.r1"))?,
                reader.riesz(&format!("alg{k}.r2"))?,
            );
            models.push(StoredModel {
                entry: entry.clone(),
                model,
                velocity: reader.rows(&format!("alg{k}.velocity_basis"))?,
                pressure: reader.rows(&format!("alg{k}.pressure_basis"))?,
            });
        }
        Ok(Self { manifest, models })
    }

    pub fn model(&self, alg: Variant) -> Result<&StoredModel> {
        self.models
            .iter()
            .find(|m| m.alg() == alg)
            .ok_or_else(|| Error::Config(format!("artifact has no model for algorithm {}", alg.number())))
    }

    /// Rebuilds the truth model and checks it against the stored mesh hash
    /// and coefficient functions.
    pub fn truth(&self) -> Result<TruthDiscretization> {
        let disc = TruthDiscretization::build(&self.manifest.config.geometry)?;
        if disc.mesh().hash() != self.manifest.mesh_hash {
            return Err(Error::Artifact("mesh hash differs from the stored one".into()));
        }
        let th = &self.manifest.thetas;
        if theta_strings(disc.a().thetas()) != th.a
            || theta_strings(disc.b().thetas()) != th.b
            || theta_strings(disc.f().thetas()) != th.f
            || theta_strings(disc.g().thetas()) != th.g
        {
            return Err(Error::Artifact("coefficient functions differ from the stored ones".into()));
        }
        Ok(disc)
    }
}
