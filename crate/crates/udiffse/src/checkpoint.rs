//! Binary checkpoint format, little-endian throughout.
//!
//! ```text
//! magic      8 bytes  "UDSECKPT"
//! version    u32      1
//! kind       u32      1 = score net, 2 = per-frequency Gaussian
//! schedule   f64 x 4  gamma, sigma_min, sigma_max, t_min
//!            u32      diffusion lead (0 = sigma_min, 1 = sigma_max)
//! net:       u32 x 3  f_bins, hidden, depth
//!            f64      ema decay
//!            u64      optimiser step
//!            u64      parameter count n
//!            f32 x n  live parameters
//!            f32 x n  EMA parameters
//! gaussian:  u32      f_bins
//!            f64 x F  variance profile
//! ```

use std::fs;
use std::path::Path;

use udiffse_core::score::{FrequencyGaussianPrior, NetArch, ScoreModel, ToyScoreNet};
use udiffse_core::sde::{DiffusionCoefficient, SdeSchedule};

use crate::error::{Error, Result};
use crate::model::Model;

pub const MAGIC: &[u8; 8] = b"UDSECKPT";
pub const VERSION: u32 = 1;

const KIND_NET: u32 = 1;
const KIND_GAUSSIAN: u32 = 2;

pub fn encode(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let kind = match model {
        Model::Net(_) => KIND_NET,
        Model::Gaussian(_) => KIND_GAUSSIAN,
    };
    out.extend_from_slice(&kind.to_le_bytes());
    let s = model.schedule();
    for v in [s.gamma(), s.sigma_min(), s.sigma_max(), s.t_min()] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let lead: u32 = match s.diffusion() {
        DiffusionCoefficient::SigmaMinLeading => 0,
        DiffusionCoefficient::SigmaMaxLeading => 1,
    };
    out.extend_from_slice(&lead.to_le_bytes());
    match model {
        Model::Net(net) => {
            let a = net.arch();
            for v in [a.f_bins, a.hidden, a.depth] {
                out.extend_from_slice(&(v as u32).to_le_bytes());
            }
            out.extend_from_slice(&net.ema_decay().to_le_bytes());
            out.extend_from_slice(&net.step().to_le_bytes());
            out.extend_from_slice(&(net.param_count() as u64).to_le_bytes());
            for p in net.params().iter().chain(net.ema_params()) {
                out.extend_from_slice(&p.to_le_bytes());
            }
        }
        Model::Gaussian(g) => {
            out.extend_from_slice(&(g.f_bins() as u32).to_le_bytes());
            for v in g.profile() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self, what: &str) -> std::result::Result<[u8; N], String> {
        let end = self.pos + N;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| format!("truncated while reading {what} at byte {}", self.pos))?;
        self.pos = end;
        Ok(slice.try_into().expect("slice has length N"))
    }

    fn u32(&mut self, what: &str) -> std::result::Result<u32, String> {
        self.take::<4>(what).map(u32::from_le_bytes)
    }

    fn u64(&mut self, what: &str) -> std::result::Result<u64, String> {
        self.take::<8>(what).map(u64::from_le_bytes)
    }

    fn f64(&mut self, what: &str) -> std::result::Result<f64, String> {
        self.take::<8>(what).map(f64::from_le_bytes)
    }

    fn f32s(&mut self, n: usize, what: &str) -> std::result::Result<Vec<f32>, String> {
        if self.bytes.len().saturating_sub(self.pos) / 4 < n {
            return Err(format!("truncated while reading {n} {what} values"));
        }
        (0..n).map(|_| self.take::<4>(what).map(f32::from_le_bytes)).collect()
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Model, String> {
    let mut c = Cursor { bytes, pos: 0 };
    if &c.take::<8>("magic")? != MAGIC {
        return Err("not a checkpoint (bad magic bytes)".into());
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(format!("unsupported format version {version} (expected {VERSION})"));
    }
    let kind = c.u32("model kind")?;
    let gamma = c.f64("gamma")?;
    let sigma_min = c.f64("sigma_min")?;
    let sigma_max = c.f64("sigma_max")?;
    let t_min = c.f64("t_min")?;
    let lead = match c.u32("diffusion lead")? {
        0 => DiffusionCoefficient::SigmaMinLeading,
        1 => DiffusionCoefficient::SigmaMaxLeading,
        other => return Err(format!("unknown diffusion lead {other}")),
    };
    let sched = SdeSchedule::new(gamma, sigma_min, sigma_max, t_min)
        .map_err(|e| e.to_string())?
        .with_diffusion(lead);
    let model = match kind {
        KIND_NET => {
            let f_bins = c.u32("f_bins")? as usize;
            let hidden = c.u32("hidden")? as usize;
            let depth = c.u32("depth")? as usize;
            let arch = NetArch::new(f_bins, hidden, depth).map_err(|e| e.to_string())?;
            let decay = c.f64("ema decay")?;
            let step = c.u64("step")?;
            let n = c.u64("parameter count")? as usize;
            if n != arch.param_count() {
                return Err(format!("parameter count {n} does not match architecture ({})", arch.param_count()));
            }
            let params = c.f32s(n, "parameter")?;
            let ema = c.f32s(n, "EMA parameter")?;
            Model::Net(ToyScoreNet::from_parts(arch, sched, params, ema, decay, step).map_err(|e| e.to_string())?)
        }
        KIND_GAUSSIAN => {
            let f_bins = c.u32("f_bins")? as usize;
            let profile = (0..f_bins).map(|_| c.f64("variance")).collect::<std::result::Result<Vec<_>, _>>()?;
            Model::Gaussian(FrequencyGaussianPrior::new(profile, sched).map_err(|e| e.to_string())?)
        }
        other => return Err(format!("unknown model kind {other}")),
    };
    if c.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - c.pos));
    }
    Ok(model)
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &Model) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|reason| Error::Checkpoint {
        path: path.to_path_buf(),
        reason,
    })
}
