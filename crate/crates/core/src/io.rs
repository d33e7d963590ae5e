//! Dataset files, run configuration and report tables.
//!
//! Datasets are stored either as CSV with header `y,x_1,...,x_p,corrupted`
//! or in a little-endian binary layout:
//!
//! ```text
//! "RRDS" | version u32 | rows u64 | p u64 | flags u8
//! labels f64 x rows | features f64 x rows*p (row-major)
//! [mask u8 x rows if flags & 1] [b* f64 x p if flags & 2]
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adaptive::{AdaptiveFit, LepskiGrid};
use crate::datagen::{ContaminationKind, ContaminationStrategy, DistributionSpec, FeatureLaw, NoiseLaw};
use crate::model::{ConfigError, ConstantsProfile, LabeledDataset, ProblemDims, Profile};
use crate::mwu::{MwTrace, RoundBudget};
use crate::regression::{FitResult, FitSettings, NoiseLevel};
use crate::{Matrix, Vector};

pub const BINARY_MAGIC: &[u8; 4] = b"RRDS";
pub const BINARY_VERSION: u32 = 1;
pub const SWEEP_SCHEMA_VERSION: u32 = 1;
pub const SWEEP_HEADER: [&str; 8] = ["n", "p", "eps", "strategy", "seed", "err_robust", "err_ols", "err_oracle_ols"];

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("config parse: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("config write: {0}")]
    TomlWrite(#[from] toml::ser::Error),
    #[error("malformed dataset: {0}")]
    Format(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

fn format_err(msg: impl Into<String>) -> IoError {
    IoError::Format(msg.into())
}

pub fn write_dataset_csv<W: Write>(data: &LabeledDataset, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    let p = data.dim();
    let mut header = vec!["y".to_string()];
    header.extend((1..=p).map(|j| format!("x_{j}")));
    header.push("corrupted".into());
    w.write_record(&header)?;
    for r in 0..data.len() {
        let mut rec = Vec::with_capacity(p + 2);
        rec.push(fmt_f64(data.labels[r]));
        rec.extend((0..p).map(|j| fmt_f64(data.features[(r, j)])));
        let c = data.corrupted_mask.as_ref().is_some_and(|m| m[r]);
        rec.push(if c { "1" } else { "0" }.into());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that parses back to the same bits.
fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Reads the CSV layout. The mask is kept only when some row is flagged.
pub fn read_dataset_csv<R: Read>(input: R) -> Result<LabeledDataset, IoError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    let cols = header.len();
    if cols < 3 || &header[0] != "y" || &header[cols - 1] != "corrupted" {
        return Err(format_err("header must be y,x_1,...,x_p,corrupted"));
    }
    for (j, h) in header.iter().enumerate().skip(1).take(cols - 2) {
        if h != format!("x_{j}") {
            return Err(format_err(format!("unexpected column {h:?}")));
        }
    }
    let p = cols - 2;
    let (mut labels, mut feats, mut mask) = (Vec::new(), Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |j: usize| -> Result<f64, IoError> {
            rec[j]
                .trim()
                .parse::<f64>()
                .map_err(|_| format_err(format!("row {}: column {j} is not a number", line + 1)))
        };
        labels.push(num(0)?);
        for j in 1..=p {
            feats.push(num(j)?);
        }
        mask.push(match rec[cols - 1].trim() {
            "1" => true,
            "0" => false,
            other => return Err(format_err(format!("row {}: corrupted flag {other:?}", line + 1))),
        });
    }
    let rows = labels.len();
    let mut data = LabeledDataset::new(Vector::from_vec(labels), Matrix::from_row_slice(rows, p, &feats))?;
    if mask.iter().any(|&m| m) {
        data.corrupted_mask = Some(mask);
    }
    Ok(data)
}

pub fn write_dataset_binary<W: Write>(data: &LabeledDataset, mut out: W) -> Result<(), IoError> {
    let (rows, p) = (data.len(), data.dim());
    out.write_all(BINARY_MAGIC)?;
    out.write_all(&BINARY_VERSION.to_le_bytes())?;
    out.write_all(&(rows as u64).to_le_bytes())?;
    out.write_all(&(p as u64).to_le_bytes())?;
    let flags = u8::from(data.corrupted_mask.is_some()) | (u8::from(data.ground_truth_b.is_some()) << 1);
    out.write_all(&[flags])?;
    let mut buf = Vec::with_capacity(8 * rows * (p + 1) + rows);
    data.labels.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes()));
    for r in 0..rows {
        for j in 0..p {
            buf.extend_from_slice(&data.features[(r, j)].to_le_bytes());
        }
    }
    if let Some(m) = &data.corrupted_mask {
        buf.extend(m.iter().map(|&b| u8::from(b)));
    }
    if let Some(b) = &data.ground_truth_b {
        b.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes()));
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

pub fn read_dataset_binary<R: Read>(mut input: R) -> Result<LabeledDataset, IoError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != BINARY_MAGIC {
        return Err(format_err("missing RRDS magic"));
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
    if version != BINARY_VERSION {
        return Err(format_err(format!("unsupported binary version {version}")));
    }
    let rows = cur.u64()? as usize;
    let p = cur.u64()? as usize;
    let flags = cur.take(1)?[0];
    if flags > 3 {
        return Err(format_err(format!("unknown flags {flags:#x}")));
    }
    let labels = Vector::from_vec(cur.f64s(rows)?);
    let features = Matrix::from_row_slice(rows, p, &cur.f64s(rows * p)?);
    let mut data = LabeledDataset::new(labels, features)?;
    if flags & 1 != 0 {
        let raw = cur.take(rows)?;
        if raw.iter().any(|&b| b > 1) {
            return Err(format_err("mask bytes must be 0 or 1"));
        }
        data.corrupted_mask = Some(raw.iter().map(|&b| b == 1).collect());
    }
    if flags & 2 != 0 {
        data.ground_truth_b = Some(Vector::from_vec(cur.f64s(p)?));
    }
    if cur.pos != bytes.len() {
        return Err(format_err("trailing bytes after dataset"));
    }
    Ok(data)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format_err("truncated dataset"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, IoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, IoError> {
        let len = n.checked_mul(8).ok_or_else(|| format_err("size overflow"))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Reads a dataset, choosing the format from the extension (`.csv` or binary).
pub fn load_dataset(path: &Path) -> Result<LabeledDataset, IoError> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    if path.extension().is_some_and(|e| e == "csv") {
        read_dataset_csv(file)
    } else {
        read_dataset_binary(file)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FitMode {
    #[default]
    FixedR1,
    Adaptive,
}

impl std::str::FromStr for FitMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fixed-r1" => Ok(Self::FixedR1),
            "adaptive" => Ok(Self::Adaptive),
            other => Err(ConfigError::Invalid(format!("unknown mode {other:?}"))),
        }
    }
}

fn default_eta() -> f64 {
    0.2
}
fn default_sigma_noise() -> NoiseLaw {
    NoiseLaw::Gaussian { sigma: 1.0 }
}
fn default_feature_law() -> FeatureLaw {
    FeatureLaw::Gaussian
}
fn default_strategy() -> ContaminationKind {
    ContaminationKind::ClusterAtPoint
}
fn default_magnitude() -> f64 {
    1e6
}
fn default_hyper_l() -> f64 {
    3f64.powf(0.25)
}

/// Simulation parameters of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Half sample size.
    pub n: usize,
    pub p: usize,
    #[serde(default)]
    pub eps: f64,
    #[serde(default = "default_feature_law")]
    pub feature_law: FeatureLaw,
    #[serde(default = "default_sigma_noise")]
    pub noise_law: NoiseLaw,
    /// Diagonal of `Σ`; identity when absent.
    #[serde(default)]
    pub sigma_diag: Option<Vec<f64>>,
    /// Ground truth; all ones when absent.
    #[serde(default)]
    pub b_star: Option<Vec<f64>>,
    #[serde(default = "default_strategy")]
    pub strategy: ContaminationKind,
    #[serde(default = "default_magnitude")]
    pub magnitude: f64,
    #[serde(default = "default_hyper_l")]
    pub hyper_l: f64,
}

macro_rules! default_fns {
    ($($name:ident: $t:ty = $v:expr;)*) => { $(fn $name() -> $t { $v })* };
}

default_fns! {
    d_outer_rounds: usize = 50;
    d_inner_rounds: usize = 50;
    d_outer_samples: usize = 100;
    d_inner_samples: usize = 50;
    d_max_rounds: usize = 200;
    d_min_rounds: usize = 20;
    d_profile: Profile = Profile::Practical;
    d_zeta0: f64 = 64.0;
    d_gamma: f64 = 0.5;
}

/// Estimator parameters of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// `K`; when absent, the largest divisor of `n` not above `n / 50`.
    #[serde(default)]
    pub buckets: Option<usize>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "d_outer_rounds")]
    pub outer_rounds: usize,
    #[serde(default = "d_inner_rounds")]
    pub inner_rounds: usize,
    #[serde(default = "d_outer_samples")]
    pub outer_samples: usize,
    #[serde(default = "d_inner_samples")]
    pub inner_samples: usize,
    #[serde(default = "d_max_rounds")]
    pub max_rounds: usize,
    #[serde(default = "d_min_rounds")]
    pub min_rounds: usize,
    #[serde(default = "d_profile")]
    pub profile: Profile,
    /// Full constant table, required by the custom profile.
    #[serde(default)]
    pub constants: Option<ConstantsProfile>,
    #[serde(default)]
    pub mode: FitMode,
    /// Direct `r1`; takes precedence over `zeta`.
    #[serde(default)]
    pub r1: Option<f64>,
    /// Noise scale; `|Ξ|` of the simulation law when both are absent.
    #[serde(default)]
    pub zeta: Option<f64>,
    #[serde(default = "d_zeta0")]
    pub zeta0: f64,
    #[serde(default = "d_gamma")]
    pub gamma: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

/// Grid of a sweep; every combination is run for `seeds` seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub n: Vec<usize>,
    pub p: Vec<usize>,
    pub eps: Vec<f64>,
    pub strategies: Vec<ContaminationKind>,
    pub seeds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub data: DataConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, IoError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String, IoError> {
        Ok(toml::to_string(self)?)
    }

    pub fn buckets(&self) -> usize {
        self.fit.buckets.unwrap_or_else(|| {
            let cap = (self.data.n / 50).max(1);
            (1..=cap).rev().find(|k| self.data.n % k == 0).unwrap_or(1)
        })
    }

    pub fn dims(&self) -> Result<ProblemDims, ConfigError> {
        ProblemDims::new(self.data.n, self.data.p, self.buckets(), self.fit.eta, self.data.eps)
    }

    pub fn distribution(&self) -> Result<DistributionSpec, ConfigError> {
        let p = self.data.p;
        let sigma = match &self.data.sigma_diag {
            None => Matrix::identity(p, p),
            Some(d) if d.len() == p => Matrix::from_diagonal(&Vector::from_vec(d.clone())),
            Some(d) => {
                return Err(ConfigError::Invalid(format!("sigma_diag has {} entries, p = {p}", d.len())));
            }
        };
        Ok(DistributionSpec {
            feature_law: self.data.feature_law,
            noise_law: self.data.noise_law,
            sigma_matrix: sigma,
            hyper_l: self.data.hyper_l,
        })
    }

    pub fn b_star(&self) -> Result<Vector, ConfigError> {
        match &self.data.b_star {
            None => Ok(Vector::from_element(self.data.p, 1.0)),
            Some(b) if b.len() == self.data.p => Ok(Vector::from_vec(b.clone())),
            Some(b) => Err(ConfigError::Invalid(format!("b_star has {} entries, p = {}", b.len(), self.data.p))),
        }
    }

    pub fn strategy(&self) -> ContaminationStrategy {
        ContaminationStrategy::new(self.data.strategy, self.data.magnitude)
    }

    pub fn constants(&self) -> Result<ConstantsProfile, ConfigError> {
        match (self.fit.profile, self.fit.constants) {
            (Profile::Custom, Some(c)) => Ok(c),
            (Profile::Custom, None) => Err(ConfigError::Invalid("custom profile needs [fit.constants]".into())),
            (p, _) => Ok(ConstantsProfile::for_profile(p)),
        }
    }

    pub fn fit_settings(&self) -> FitSettings {
        let f = &self.fit;
        let budget = RoundBudget {
            max_rounds: f.max_rounds,
            min_rounds: f.min_rounds,
            record_history: false,
        };
        FitSettings {
            outer_rounds: f.outer_rounds,
            inner_rounds: f.inner_rounds,
            buckets: self.buckets(),
            eta: f.eta,
            outer_samples: f.outer_samples,
            inner_samples: f.inner_samples,
            hyper_l: self.data.hyper_l,
            outer_budget: budget,
            inner_budget: budget,
        }
    }

    /// `r1` if given, else `zeta`, else `fallback_zeta`.
    pub fn noise_level(&self, fallback_zeta: f64) -> NoiseLevel {
        match (self.fit.r1, self.fit.zeta) {
            (Some(r1), _) => NoiseLevel::R1(r1),
            (None, Some(z)) => NoiseLevel::Zeta(z),
            (None, None) => NoiseLevel::Zeta(fallback_zeta),
        }
    }

    pub fn grid(&self) -> Result<LepskiGrid, ConfigError> {
        LepskiGrid::new(self.fit.zeta0, self.fit.gamma)
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Per-round log: `t,theta,accepted,step_norm,error`.
pub fn write_fit_log<W: Write>(fit: &FitResult, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "theta", "accepted", "step_norm", "error"])?;
    for r in &fit.iterates {
        w.write_record([
            r.t.to_string(),
            fmt_f64(r.theta),
            u8::from(r.accepted).to_string(),
            fmt_f64(r.step_norm),
            opt(r.error),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per coordinate: `coordinate,value`.
pub fn write_vector_csv<W: Write>(v: &Vector, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["coordinate", "value"])?;
    for (j, x) in v.iter().enumerate() {
        w.write_record([(j + 1).to_string(), fmt_f64(*x)])?;
    }
    w.flush()?;
    Ok(())
}

/// `level,zeta,radius,error,prefix_feasible,chosen`.
pub fn write_lepski_table<W: Write>(fit: &AdaptiveFit, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["level", "zeta", "radius", "error", "prefix_feasible", "chosen"])?;
    for l in &fit.levels {
        let feasible = match l.prefix_feasible {
            Some(true) => "1",
            Some(false) => "0",
            None => "",
        };
        w.write_record([
            l.level.to_string(),
            fmt_f64(l.zeta),
            fmt_f64(l.radius),
            opt(l.error),
            feasible.to_string(),
            u8::from(l.level == fit.chosen).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row of the sweep summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub p: usize,
    pub eps: f64,
    pub strategy: ContaminationKind,
    pub seed: u64,
    pub err_robust: f64,
    pub err_ols: f64,
    pub err_oracle_ols: f64,
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), IoError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: Read>(input: R) -> Result<Vec<SweepRow>, IoError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != SWEEP_HEADER {
        return Err(format_err(format!("sweep header {header:?}")));
    }
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

/// `round,value,entropy` for each MW round.
pub fn write_mw_trace<W: Write>(trace: &MwTrace, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["round", "value", "entropy"])?;
    for (t, (v, e)) in trace.round_values.iter().zip(&trace.entropies).enumerate() {
        w.write_record([(t + 1).to_string(), fmt_f64(*v), fmt_f64(*e)])?;
    }
    w.flush()?;
    Ok(())
}
