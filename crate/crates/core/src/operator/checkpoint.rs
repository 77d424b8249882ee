//! Model checkpoints.
//!
//! A checkpoint is a UTF-8 header of `key=value` lines, a line holding only
//! `---`, then raw little-endian `f64` arrays. The header's `arrays` line
//! lists the arrays in file order as `name:len` pairs. Floats in the header
//! use the shortest representation that parses back to the same bits.
//!
//! ```text
//! tse-checkpoint
//! version=1
//! kind=pi-deeponet              deeponet | pi-deeponet | mlp-baseline
//! epoch=2000                    completed epochs
//! norm.m=21 ... norm.speed_std=3.2
//! branch.dims=100,128,128,128,128   (operator kinds)
//! trunk.dims=2,128,128,128,128
//! net.dims=2,128,128,128,1          (mlp-baseline)
//! points.seed=7
//! points=0.12 0.9;0.5 0.33;...      configuration points, x t pairs
//! reference.rows=10
//! adam.step=2000 adam.learning_rate=0.001 adam.beta1 adam.beta2 adam.eps
//! config.<key>=<value>              run configuration echo
//! arrays=branch:N,trunk:N,reference:N,adam.m:N,adam.v:N
//! ---
//! ```
//!
//! Network arrays hold each layer's weights (row-major, `out x in`) followed
//! by its bias, layer by layer. Hidden layers use GELU, the last layer is
//! linear.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{BaselineModel, ConfigurationPoints, Mode, Model, Normalization, OperatorModel};
use crate::error::{Error, Result};
use crate::math::{AdamConfig, AdamState, Matrix, MlpParams};

pub const CHECKPOINT_MAGIC: &str = "tse-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;
const SEPARATOR: &str = "---\n";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: Mode,
    pub model: Model,
    /// Completed epochs.
    pub epoch: u64,
    pub adam: Option<AdamState>,
    pub config: BTreeMap<String, String>,
}

fn dims_string(p: &MlpParams) -> String {
    p.dims().iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut h = format!("{CHECKPOINT_MAGIC}\nversion={CHECKPOINT_VERSION}\nkind={}\nepoch={}\n", self.kind, self.epoch);
        let norm = self.model.norm();
        let _ = write!(
            h,
            "norm.m={}\nnorm.t={}\nnorm.dx={:?}\nnorm.dt={:?}\nnorm.x0={:?}\nnorm.t0={:?}\nnorm.speed_mean={:?}\nnorm.speed_std={:?}\n",
            norm.m, norm.t, norm.dx, norm.dt, norm.x0, norm.t0, norm.speed_mean, norm.speed_std
        );
        let mut arrays: Vec<(&str, Vec<f64>)> = Vec::new();
        match &self.model {
            Model::Operator(op) => {
                let _ = writeln!(h, "branch.dims={}", dims_string(&op.branch));
                let _ = writeln!(h, "trunk.dims={}", dims_string(&op.trunk));
                let _ = writeln!(h, "points.seed={}", op.points.seed);
                let pts: Vec<String> = op.points.points.iter().map(|[x, t]| format!("{x:?} {t:?}")).collect();
                let _ = writeln!(h, "points={}", pts.join(";"));
                let _ = writeln!(h, "reference.rows={}", op.reference_inputs.rows());
                let mut b = Vec::new();
                op.branch.write_flat(&mut b);
                let mut t = Vec::new();
                op.trunk.write_flat(&mut t);
                arrays.push(("branch", b));
                arrays.push(("trunk", t));
                arrays.push(("reference", op.reference_inputs.as_slice().to_vec()));
            }
            Model::Baseline(bl) => {
                let _ = writeln!(h, "net.dims={}", dims_string(&bl.net));
                let mut n = Vec::new();
                bl.net.write_flat(&mut n);
                arrays.push(("net", n));
            }
        }
        if let Some(adam) = &self.adam {
            let c = adam.config;
            let _ = write!(
                h,
                "adam.step={}\nadam.learning_rate={:?}\nadam.beta1={:?}\nadam.beta2={:?}\nadam.eps={:?}\n",
                adam.step, c.learning_rate, c.beta1, c.beta2, c.eps
            );
            arrays.push(("adam.m", adam.first_moment.clone()));
            arrays.push(("adam.v", adam.second_moment.clone()));
        }
        for (k, v) in &self.config {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(Error::Checkpoint(format!("config entry '{k}' cannot be stored in a header line")));
            }
            let _ = writeln!(h, "config.{k}={v}");
        }
        let listing: Vec<String> = arrays.iter().map(|(n, a)| format!("{n}:{}", a.len())).collect();
        let _ = writeln!(h, "arrays={}", listing.join(","));
        h.push_str(SEPARATOR);

        let mut bytes = h.into_bytes();
        for (_, a) in &arrays {
            for v in a {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let split = bytes
            .windows(5)
            .position(|w| w == b"\n---\n")
            .ok_or_else(|| Error::Checkpoint("missing header terminator".into()))?;
        let header = std::str::from_utf8(&bytes[..split + 1])
            .map_err(|_| Error::Checkpoint("header is not UTF-8".into()))?;
        let body = &bytes[split + 5..];
        let mut lines = header.lines();
        if lines.next() != Some(CHECKPOINT_MAGIC) {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let mut fields = BTreeMap::new();
        let mut config = BTreeMap::new();
        for (n, line) in lines.enumerate() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Checkpoint(format!("header line {} has no '='", n + 2)))?;
            match k.strip_prefix("config.") {
                Some(ck) => config.insert(ck.to_string(), v.to_string()),
                None => fields.insert(k.to_string(), v.to_string()),
            };
        }
        let h = Header(&fields);
        let version: u32 = h.parse("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version} (this build reads {CHECKPOINT_VERSION})"
            )));
        }
        let kind: Mode = h.get("kind")?.parse().map_err(|_| Error::Checkpoint("unknown kind".into()))?;
        let epoch: u64 = h.parse("epoch")?;
        let norm = Normalization {
            m: h.parse("norm.m")?,
            t: h.parse("norm.t")?,
            dx: h.parse("norm.dx")?,
            dt: h.parse("norm.dt")?,
            x0: h.parse("norm.x0")?,
            t0: h.parse("norm.t0")?,
            speed_mean: h.parse("norm.speed_mean")?,
            speed_std: h.parse("norm.speed_std")?,
        };
        if norm.m < 2 || norm.t < 2 {
            return Err(Error::Checkpoint("grid must be at least 2x2".into()));
        }

        let mut arrays = BTreeMap::new();
        let mut at = 0usize;
        for entry in h.get("arrays")?.split(',').filter(|s| !s.is_empty()) {
            let (name, len) = entry
                .split_once(':')
                .ok_or_else(|| Error::Checkpoint(format!("bad array entry '{entry}'")))?;
            let len: usize = len
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad array length in '{entry}'")))?;
            let end = at
                .checked_add(len.checked_mul(8).ok_or_else(|| Error::Checkpoint("array too large".into()))?)
                .filter(|&e| e <= body.len())
                .ok_or_else(|| Error::Checkpoint(format!("array '{name}' runs past end of file")))?;
            let values = body[at..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect::<Vec<_>>();
            arrays.insert(name.to_string(), values);
            at = end;
        }
        if at != body.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes after arrays", body.len() - at)));
        }
        let mut take = |name: &str| {
            arrays
                .remove(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing array '{name}'")))
        };

        let model = match kind {
            Mode::DeepOnet | Mode::PiDeepOnet => {
                let branch = net_from(&h.dims("branch.dims")?, &take("branch")?)?;
                let trunk = net_from(&h.dims("trunk.dims")?, &take("trunk")?)?;
                let points = parse_points(h.get("points")?)?;
                let points = ConfigurationPoints {
                    points,
                    seed: h.parse("points.seed")?,
                };
                let rows: usize = h.parse("reference.rows")?;
                let reference = take("reference")?;
                if rows == 0 || reference.len() != rows * points.len() {
                    return Err(Error::Checkpoint("reference input size mismatch".into()));
                }
                let reference = Matrix::from_vec(rows, points.len(), reference)?;
                Model::Operator(
                    OperatorModel::from_parts(branch, trunk, points, norm, reference)
                        .map_err(|e| Error::Checkpoint(e.to_string()))?,
                )
            }
            Mode::MlpBaseline => {
                let net = net_from(&h.dims("net.dims")?, &take("net")?)?;
                Model::Baseline(BaselineModel::from_parts(net, norm).map_err(|e| Error::Checkpoint(e.to_string()))?)
            }
        };

        let adam = if fields.contains_key("adam.step") {
            let config = AdamConfig {
                learning_rate: h.parse("adam.learning_rate")?,
                beta1: h.parse("adam.beta1")?,
                beta2: h.parse("adam.beta2")?,
                eps: h.parse("adam.eps")?,
            };
            let first_moment = take("adam.m")?;
            let second_moment = take("adam.v")?;
            if first_moment.len() != model.num_params() || second_moment.len() != model.num_params() {
                return Err(Error::Checkpoint("optimizer state size mismatch".into()));
            }
            Some(AdamState {
                config,
                first_moment,
                second_moment,
                step: h.parse("adam.step")?,
            })
        } else {
            None
        };
        Ok(Checkpoint {
            kind,
            model,
            epoch,
            adam,
            config,
        })
    }
}

struct Header<'a>(&'a BTreeMap<String, String>);

impl Header<'_> {
    fn get(&self, key: &str) -> Result<&str> {
        self.0
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Checkpoint(format!("missing header key '{key}'")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key)?;
        v.trim()
            .parse()
            .map_err(|_| Error::Checkpoint(format!("bad value '{v}' for '{key}'")))
    }

    fn dims(&self, key: &str) -> Result<Vec<usize>> {
        self.get(key)?
            .split(',')
            .map(|d| {
                d.trim()
                    .parse()
                    .map_err(|_| Error::Checkpoint(format!("bad dimension '{d}' in '{key}'")))
            })
            .collect()
    }
}

fn net_from(dims: &[usize], flat: &[f64]) -> Result<MlpParams> {
    let mut net = MlpParams::zeros(dims).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if flat.len() != net.num_params() {
        return Err(Error::Checkpoint(format!(
            "network {dims:?} needs {} values, file has {}",
            net.num_params(),
            flat.len()
        )));
    }
    net.read_flat(flat)?;
    Ok(net)
}

fn parse_points(s: &str) -> Result<Vec<[f64; 2]>> {
    s.split(';')
        .map(|pair| {
            let mut it = pair.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(x)), Some(Ok(t)), None) => Ok([x, t]),
                _ => Err(Error::Checkpoint(format!("bad configuration point '{pair}'"))),
            }
        })
        .collect()
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, ckpt.to_bytes()?).map_err(|e| Error::io(path.display(), e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display(), e))?;
    Checkpoint::from_bytes(&bytes)
}
