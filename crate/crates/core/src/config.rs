//! Run configuration (TOML with environment overrides) and binary
//! checkpoints.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ansatz::AnsatzHyper;
use crate::entropy::KpPartition;
use crate::hamiltonian::{HamiltonianError, RampProtocol, RydbergHamiltonian, TailCutoff};
use crate::lattice::{Configuration, LatticeSpec, RubyLattice};
use crate::observables::Direction;
use crate::sampler::SamplerConfig;
use crate::tdvp::{OptimizeSchedule, TdvpConfig};

use std::sync::Arc;

/// Prefix of environment overrides; nested keys are joined by `__`.
pub const ENV_PREFIX: &str = "SPINLAKE_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("override {key}: {reason}")]
    Override { key: String, reason: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
}

fn one() -> f64 {
    1.0
}
fn rb() -> f64 {
    2.4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianConfig {
    #[serde(default = "one")]
    pub omega: f64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default = "rb")]
    pub rb_over_a: f64,
    #[serde(default)]
    pub tail_cutoff: TailCutoff,
    #[serde(default)]
    pub pxp: bool,
    /// Reference Rabi frequency setting the interaction scale.
    #[serde(default = "one")]
    pub v_scale: f64,
}

impl Default for HamiltonianConfig {
    fn default() -> Self {
        Self { omega: 1.0, delta: 0.0, rb_over_a: rb(), tail_cutoff: TailCutoff::default(), pxp: false, v_scale: 1.0 }
    }
}

impl HamiltonianConfig {
    pub fn build(&self, lat: Arc<RubyLattice>) -> Result<RydbergHamiltonian, HamiltonianError> {
        RydbergHamiltonian::new(lat, self.omega, self.delta, self.rb_over_a, self.tail_cutoff, self.pxp, self.v_scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Seeding {
    Random,
    Vbs,
    Stripe,
}

fn seedings() -> Vec<Seeding> {
    vec![Seeding::Random, Seeding::Vbs, Seeding::Stripe]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundStateConfig {
    #[serde(default)]
    pub schedule: OptimizeSchedule,
    #[serde(default = "seedings")]
    pub seedings: Vec<Seeding>,
    /// `|A_i|` of the seeded site fields.
    #[serde(default = "one")]
    pub seed_magnitude: f64,
    /// Uniform `A` of the random start.
    #[serde(default)]
    pub initial_a: f64,
}

impl Default for GroundStateConfig {
    fn default() -> Self {
        Self { schedule: OptimizeSchedule::default(), seedings: seedings(), seed_magnitude: 1.0, initial_a: 0.0 }
    }
}

fn initial_a() -> f64 {
    6.0
}
fn cadence() -> usize {
    50
}
fn path_points() -> usize {
    49
}
fn path_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampConfig {
    pub protocol: RampProtocol,
    /// Uniform `A` of the initial product state (`+` favours the ground state).
    #[serde(default = "initial_a")]
    pub initial_a: f64,
    /// Steps between checkpoints.
    #[serde(default = "cadence")]
    pub checkpoint_every: usize,
    /// Checkpoints kept for the entropy ratio path: uniform over the final
    /// `path_fraction` of the ramp.
    #[serde(default = "path_points")]
    pub path_points: usize,
    #[serde(default = "path_fraction")]
    pub path_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Rate,
    DeltaFinal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
}

fn z_sizes() -> Vec<usize> {
    vec![1, 2, 3, 7]
}
fn lengths() -> Vec<usize> {
    vec![1, 2, 3, 4, 5, 6]
}
fn two() -> usize {
    2
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableManifest {
    /// Hexagon-cluster sizes of the Z and X loops.
    #[serde(default = "z_sizes")]
    pub loop_sizes: Vec<usize>,
    #[serde(default = "lengths")]
    pub z_string_lengths: Vec<usize>,
    #[serde(default = "lengths")]
    pub x_string_lengths: Vec<usize>,
    #[serde(default)]
    pub direction: Direction,
    #[serde(default = "yes")]
    pub bffm: bool,
    /// String lengths used for the `Delta_e` (X) and `Delta_m` (Z) gaps.
    #[serde(default = "two")]
    pub gap_x_length: usize,
    #[serde(default = "two")]
    pub gap_z_length: usize,
    /// Measurements CSV of a converged ground state, for the lambda fit.
    #[serde(default)]
    pub reference: Option<PathBuf>,
}

impl Default for ObservableManifest {
    fn default() -> Self {
        Self {
            loop_sizes: z_sizes(),
            z_string_lengths: lengths(),
            x_string_lengths: lengths(),
            direction: Direction::A1,
            bffm: true,
            gap_x_length: 2,
            gap_z_length: 2,
            reference: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionManifest {
    /// Hexagonal-norm radii of the Kitaev-Preskill regions about the
    /// reference hexagon.
    #[serde(default)]
    pub kp_radii: Vec<f64>,
    #[serde(default)]
    pub offset_deg: f64,
    /// Place whole triangles by their centres instead of cutting them.
    #[serde(default = "default_true")]
    pub whole_triangles: bool,
    /// Extra atom sets.
    #[serde(default)]
    pub regions: Vec<Vec<usize>>,
    /// Doubled-space sampler; defaults to the main sampler block.
    #[serde(default)]
    pub sampler: Option<SamplerConfig>,
}

fn default_true() -> bool {
    true
}

impl Default for PartitionManifest {
    fn default() -> Self {
        Self { kp_radii: Vec::new(), offset_deg: 0.0, whole_triangles: true, regions: Vec::new(), sampler: None }
    }
}

impl PartitionManifest {
    pub fn kp(&self, lat: &RubyLattice, center: [f64; 2], radius: f64) -> KpPartition {
        if self.whole_triangles {
            KpPartition::hexagonal_triangles(lat, center, radius, self.offset_deg)
        } else {
            KpPartition::hexagonal(lat, center, radius, self.offset_deg)
        }
    }
}

fn out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Full run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub lattice: LatticeSpec,
    #[serde(default)]
    pub hamiltonian: HamiltonianConfig,
    #[serde(default)]
    pub ansatz: AnsatzHyper,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub tdvp: TdvpConfig,
    #[serde(default)]
    pub ground_state: GroundStateConfig,
    #[serde(default)]
    pub ramp: Option<RampConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub observables: ObservableManifest,
    #[serde(default)]
    pub partitions: PartitionManifest,
    #[serde(default = "out_dir")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn minimal(lattice: LatticeSpec) -> Self {
        Self {
            lattice,
            hamiltonian: HamiltonianConfig::default(),
            ansatz: AnsatzHyper::default(),
            sampler: SamplerConfig::default(),
            tdvp: TdvpConfig::default(),
            ground_state: GroundStateConfig::default(),
            ramp: None,
            sweep: None,
            observables: ObservableManifest::default(),
            partitions: PartitionManifest::default(),
            output: out_dir(),
            seed: 0,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Parse `text`, then apply `SPINLAKE_*` overrides from `vars`.
    pub fn from_toml_with_env(text: &str, vars: impl IntoIterator<Item = (String, String)>) -> Result<Self, ConfigError> {
        let mut value: toml::Value = toml::from_str(text)?;
        apply_overrides(&mut value, vars)?;
        Ok(value.try_into()?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_with_env(&text, std::env::vars())
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Set `a.b.c = value` for every `SPINLAKE_A__B__C=value`. Values are read
/// as TOML literals when they parse, else as strings.
pub fn apply_overrides(root: &mut toml::Value, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
    for (key, raw) in vars {
        let Some(rest) = key.strip_prefix(ENV_PREFIX) else { continue };
        let path: Vec<String> = rest.split("__").map(|s| s.to_ascii_lowercase()).collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(ConfigError::Override { key, reason: "empty path segment".into() });
        }
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.clone()));
        let mut node = &mut *root;
        for seg in &path[..path.len() - 1] {
            let table = node.as_table_mut().ok_or_else(|| ConfigError::Override { key: key.clone(), reason: format!("{seg} is not a table") })?;
            node = table.entry(seg.clone()).or_insert_with(|| toml::Value::Table(Default::default()));
        }
        let table = node.as_table_mut().ok_or_else(|| ConfigError::Override { key: key.clone(), reason: "parent is not a table".into() })?;
        table.insert(path.last().unwrap().clone(), value);
    }
    Ok(())
}

/// SHA-256 of the canonical lattice description.
pub fn lattice_hash(spec: &LatticeSpec) -> [u8; 32] {
    Sha256::digest(spec.canonical().as_bytes()).into()
}

const MAGIC: &[u8; 4] = b"SPLK";
const VERSION: u32 = 1;

/// Parameters plus sampler state, enough to resume a run bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub lattice_hash: [u8; 32],
    pub config_hash: String,
    pub hyper: AnsatzHyper,
    pub t: f64,
    pub step: u64,
    pub params: Vec<Complex<f64>>,
    pub chains: Vec<Configuration>,
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u64).to_le_bytes());
    out.extend_from_slice(b);
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ConfigError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| ConfigError::Checkpoint("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, ConfigError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, ConfigError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, ConfigError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn bytes(&mut self) -> Result<&'a [u8], ConfigError> {
        let n = self.u64()? as usize;
        self.take(n)
    }
}

impl Checkpoint {
    /// Little-endian layout: magic, version, lattice hash, config hash,
    /// hyperparameter JSON, `t`, step, parameters as `(re, im)` pairs, then
    /// chain states as one byte per triangle.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.lattice_hash);
        put_bytes(&mut out, self.config_hash.as_bytes());
        put_bytes(&mut out, serde_json::to_string(&self.hyper).expect("hyper serializes").as_bytes());
        out.extend_from_slice(&self.t.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.re.to_le_bytes());
            out.extend_from_slice(&p.im.to_le_bytes());
        }
        out.extend_from_slice(&(self.chains.len() as u64).to_le_bytes());
        for c in &self.chains {
            put_bytes(&mut out, c.states());
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, ConfigError> {
        let mut cur = Cursor { buf, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(ConfigError::Checkpoint("bad magic".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(ConfigError::Checkpoint(format!("unsupported version {version}")));
        }
        let lattice_hash: [u8; 32] = cur.take(32)?.try_into().unwrap();
        let config_hash = String::from_utf8(cur.bytes()?.to_vec()).map_err(|e| ConfigError::Checkpoint(e.to_string()))?;
        let hyper = serde_json::from_slice(cur.bytes()?).map_err(|e| ConfigError::Checkpoint(e.to_string()))?;
        let t = cur.f64()?;
        let step = cur.u64()?;
        let n = cur.u64()? as usize;
        let mut params = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            let re = cur.f64()?;
            let im = cur.f64()?;
            params.push(Complex::new(re, im));
        }
        let nc = cur.u64()? as usize;
        let mut chains = Vec::with_capacity(nc.min(1 << 16));
        for _ in 0..nc {
            let states = cur.bytes()?.to_vec();
            chains.push(Configuration::from_states(states).map_err(|e| ConfigError::Checkpoint(e.to_string()))?);
        }
        if cur.pos != buf.len() {
            return Err(ConfigError::Checkpoint("trailing bytes".into()));
        }
        Ok(Self { lattice_hash, config_hash, hyper, t, step, params, chains })
    }

    pub fn write(&self, path: &Path) -> Result<(), ConfigError> {
        let io = |source| ConfigError::Io { path: path.to_path_buf(), source };
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(&self.to_bytes()).map_err(io)?;
        f.sync_all().map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let io = |source| ConfigError::Io { path: path.to_path_buf(), source };
        let mut buf = Vec::new();
        fs::File::open(path).map_err(io)?.read_to_end(&mut buf).map_err(io)?;
        Self::from_bytes(&buf)
    }

    pub fn check_lattice(&self, spec: &LatticeSpec) -> Result<(), ConfigError> {
        if self.lattice_hash != lattice_hash(spec) {
            return Err(ConfigError::Checkpoint("lattice does not match the checkpoint".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
seed = 7
[lattice]
l1 = 2
l2 = 2
boundary = "periodic"
[hamiltonian]
delta = 1.5
[sampler]
n_samples = 64
"#;

    #[test]
    fn parses_with_defaults() {
        let c = RunConfig::from_toml(BASIC).unwrap();
        assert_eq!(c.sampler.n_samples, 64);
        assert_eq!(c.hamiltonian.rb_over_a, 2.4);
        assert_eq!(c.ansatz.layers, 3);
        assert_eq!(c.seed, 7);
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(RunConfig::from_toml(&format!("{BASIC}\nbogus = 1\n")).is_err());
        assert!(RunConfig::from_toml(&BASIC.replace("n_samples", "n_sample")).is_err());
    }

    #[test]
    fn env_overrides_nested_keys() {
        let vars = vec![
            ("SPINLAKE_SAMPLER__N_SAMPLES".to_string(), "128".to_string()),
            ("SPINLAKE_OUTPUT".to_string(), "runs/a".to_string()),
            ("OTHER".to_string(), "1".to_string()),
        ];
        let c = RunConfig::from_toml_with_env(BASIC, vars).unwrap();
        assert_eq!(c.sampler.n_samples, 128);
        assert_eq!(c.output, PathBuf::from("runs/a"));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::from_toml(BASIC).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 8;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn checkpoint_roundtrip_and_corruption() {
        let ck = Checkpoint {
            lattice_hash: lattice_hash(&LatticeSpec::periodic(2, 2)),
            config_hash: "abc".into(),
            hyper: AnsatzHyper::default(),
            t: 1.25,
            step: 42,
            params: vec![Complex::new(1.0, -2.0), Complex::new(0.5, 0.25)],
            chains: vec![Configuration::from_states(vec![0, 1, 2, 3]).unwrap()],
        };
        let bytes = ck.to_bytes();
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        assert!(ck.check_lattice(&LatticeSpec::periodic(2, 2)).is_ok());
        assert!(ck.check_lattice(&LatticeSpec::periodic(3, 2)).is_err());
    }
}
