//! Dataset specs, the parameter file and dataset fingerprints.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use landscape_core::data::{dataset_from_idx, parse_feature_table, synthetic_blobs};
use landscape_core::{Dataset, MlpConfig, MlpParams};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Relative dataset paths are resolved against this directory when set.
pub const DATA_DIR_ENV: &str = "LANDSCAPE_DATA_DIR";

/// Class count assumed for IDX files and tables that do not state one.
pub const DEFAULT_CLASSES: usize = 10;

/// Where a dataset comes from.
///
/// ```text
/// idx:<images>,<labels>
/// table:<path>[,<classes>]
/// blobs:<m>,<n>,<K>,<spread>[,<seed>]
/// ```
#[derive(Debug, Clone, PartialEq)]
pub enum DataSpec {
    Idx { images: PathBuf, labels: PathBuf },
    Table { path: PathBuf, classes: usize },
    Blobs { m: usize, n: usize, k: usize, spread: f64, seed: u64 },
}

fn field<T: FromStr>(what: &str, s: &str) -> Result<T, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("invalid {what} {s:?} in dataset spec"))
}

impl FromStr for DataSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| format!("dataset spec {s:?} must start with idx:, table: or blobs:"))?;
        let parts: Vec<&str> = rest.split(',').collect();
        match (kind, parts.as_slice()) {
            ("idx", [img, lbl]) if !img.is_empty() && !lbl.is_empty() => Ok(DataSpec::Idx {
                images: img.into(),
                labels: lbl.into(),
            }),
            ("idx", _) => Err("expected idx:<images>,<labels>".into()),
            ("table", [path]) if !path.is_empty() => Ok(DataSpec::Table {
                path: path.into(),
                classes: DEFAULT_CLASSES,
            }),
            ("table", [path, k]) if !path.is_empty() => Ok(DataSpec::Table {
                path: path.into(),
                classes: field("class count", k)?,
            }),
            ("table", _) => Err("expected table:<path>[,<classes>]".into()),
            ("blobs", [m, n, k, spread, seed @ ..]) if seed.len() <= 1 => Ok(DataSpec::Blobs {
                m: field("m", m)?,
                n: field("n", n)?,
                k: field("K", k)?,
                spread: field("spread", spread)?,
                seed: seed.first().map_or(Ok(0), |s| field("seed", s))?,
            }),
            ("blobs", _) => Err("expected blobs:<m>,<n>,<K>,<spread>[,<seed>]".into()),
            _ => Err(format!("unknown dataset kind {kind:?}")),
        }
    }
}

impl fmt::Display for DataSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSpec::Idx { images, labels } => write!(f, "idx:{},{}", images.display(), labels.display()),
            DataSpec::Table { path, classes } => write!(f, "table:{},{classes}", path.display()),
            DataSpec::Blobs { m, n, k, spread, seed } => write!(f, "blobs:{m},{n},{k},{spread},{seed}"),
        }
    }
}

/// Byte length and SHA-256 of whatever the dataset was decoded from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fingerprint {
    pub bytes: u64,
    pub sha256: String,
}

impl Fingerprint {
    pub fn of<'a>(chunks: impl IntoIterator<Item = &'a [u8]>) -> Self {
        let mut hasher = Sha256::new();
        let mut bytes = 0u64;
        for c in chunks {
            hasher.update(c);
            bytes += c.len() as u64;
        }
        Self {
            bytes,
            sha256: hex(&hasher.finalize()),
        }
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn resolve(path: &Path) -> PathBuf {
    if path.is_relative() {
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
            return Path::new(&dir).join(path);
        }
    }
    path.to_path_buf()
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    let path = resolve(path);
    std::fs::read(&path).map_err(|e| CliError::io(path, e))
}

/// Loads a dataset and fingerprints its source. `limit` keeps the first
/// objects only.
pub fn load_dataset(spec: &DataSpec, limit: Option<usize>) -> CliResult<(Dataset, Fingerprint)> {
    if limit == Some(0) {
        return Err(CliError::Usage("--limit must be >= 1".into()));
    }
    let (dataset, fingerprint) = match spec {
        DataSpec::Idx { images, labels } => {
            let img = read(images)?;
            let lbl = read(labels)?;
            let d = dataset_from_idx(spec.to_string(), &img, &lbl, DEFAULT_CLASSES, limit)?;
            (d, Fingerprint::of([img.as_slice(), lbl.as_slice()]))
        }
        DataSpec::Table { path, classes } => {
            let raw = read(path)?;
            let text = std::str::from_utf8(&raw)
                .map_err(|e| CliError::Data(format!("{}: not UTF-8: {e}", path.display())))?;
            let d = parse_feature_table(spec.to_string(), text, *classes)?;
            let fp = Fingerprint::of([raw.as_slice()]);
            (d, fp)
        }
        DataSpec::Blobs { m, n, k, spread, seed } => {
            let d = synthetic_blobs(*m, *n, *k, *spread, *seed)?;
            let fp = Fingerprint::of([dataset_bytes(&d).as_slice()]);
            (d, fp)
        }
    };
    match limit {
        Some(l) if l < dataset.len() => Ok((dataset.prefix(l)?, fingerprint)),
        _ => Ok((dataset, fingerprint)),
    }
}

/// Canonical little-endian encoding used to fingerprint generated datasets.
pub fn dataset_bytes(d: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 * (d.features().len() + d.len()));
    for v in d.features() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &l in d.labels() {
        out.extend_from_slice(&(l as u64).to_le_bytes());
    }
    out
}

/// First bytes of every parameter file.
pub const PARAMS_MAGIC: [u8; 8] = *b"LSCPPRMS";
pub const PARAMS_VERSION: u32 = 1;
const PARAMS_HEADER: usize = 8 + 4 + 5 * 4 + 8;

/// `magic | version | input hidden layers classes bias (u32) | P (u64) | θ (f64 × P)`,
/// all little-endian.
pub fn encode_params(params: &MlpParams) -> Vec<u8> {
    let c = params.config();
    let theta = params.flatten();
    let mut out = Vec::with_capacity(PARAMS_HEADER + 8 * theta.len());
    out.extend_from_slice(&PARAMS_MAGIC);
    out.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
    for v in [c.input_dim, c.hidden_dim, c.num_layers, c.num_classes, c.bias as usize] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&(theta.len() as u64).to_le_bytes());
    for v in theta {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

pub fn decode_params(bytes: &[u8]) -> CliResult<MlpParams> {
    let bad = |msg: String| CliError::Data(format!("parameter file: {msg}"));
    if bytes.len() < PARAMS_HEADER {
        return Err(bad(format!("truncated header ({} bytes)", bytes.len())));
    }
    if bytes[..8] != PARAMS_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = le_u32(bytes, 8);
    if version != PARAMS_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let dims: Vec<usize> = (0..5).map(|i| le_u32(bytes, 12 + 4 * i) as usize).collect();
    let bias = match dims[4] {
        0 => false,
        1 => true,
        other => return Err(bad(format!("bias flag {other} is not 0 or 1"))),
    };
    let config = MlpConfig::new(dims[0], dims[1], dims[2], dims[3], bias)?;
    let count = u64::from_le_bytes(bytes[32..40].try_into().expect("8 bytes"));
    if count != config.param_count() as u64 {
        return Err(bad(format!(
            "header declares {count} parameters, configuration needs {}",
            config.param_count()
        )));
    }
    let body = &bytes[PARAMS_HEADER..];
    if body.len() as u64 != count * 8 {
        return Err(bad(format!("expected {} bytes of parameters, found {}", count * 8, body.len())));
    }
    let theta: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(MlpParams::unflatten(config, &theta)?)
}

pub fn read_params(path: &Path) -> CliResult<MlpParams> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_params(&bytes)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
