//! Versioned checkpoint container: a JSON header followed by raw
//! little-endian f32 tensors.
//!
//! Layout: `STVGCKPT`, u32 format version, u64 header length, header JSON,
//! then every parameter in layout order, then the optimizer's first and
//! second moments when present.

use std::fs;
use std::io::Write;
use std::path::Path;

use autograd::Tensor;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{io_err, Error, Result};
use crate::harness::optim::AdamW;
use crate::model::Model;
use crate::params::{ParamLayout, ParamSpec, Params};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"STVGCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    /// Completed optimizer steps. Together with `config.train.seed` this
    /// fixes the position of the batch sampler.
    pub step: usize,
    pub params: Params<f32>,
    pub optimizer: Option<AdamW>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    step: usize,
    config: RunConfig,
    tensors: Vec<ParamSpec>,
    optimizer_t: Option<u64>,
}

fn push_tensor(buf: &mut Vec<u8>, t: &Tensor<f32>) {
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn tensor(&mut self, shape: &[usize]) -> Result<Tensor<f32>> {
        let n: usize = shape.iter().product();
        let raw = self.take(4 * n)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Tensor::new(shape, data))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            step: self.step,
            config: self.config.clone(),
            tensors: self.params.specs().to_vec(),
            optimizer_t: self.optimizer.as_ref().map(|o| o.t),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&json);
        self.params.values().iter().for_each(|t| push_tensor(&mut buf, t));
        if let Some(o) = &self.optimizer {
            o.m.iter().chain(&o.v).for_each(|t| push_tensor(&mut buf, t));
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let len = u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize;
        let header: Header =
            serde_json::from_slice(r.take(len)?).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        header.config.validate()?;
        let mut layout = ParamLayout::new();
        for s in &header.tensors {
            layout.add(s.name.clone(), &s.shape, s.group, s.init);
        }
        let values = header.tensors.iter().map(|s| r.tensor(&s.shape)).collect::<Result<Vec<_>>>()?;
        let params = Params::from_values(&layout, values)?;
        let optimizer = match header.optimizer_t {
            Some(t) => {
                let m = header.tensors.iter().map(|s| r.tensor(&s.shape)).collect::<Result<Vec<_>>>()?;
                let v = header.tensors.iter().map(|s| r.tensor(&s.shape)).collect::<Result<Vec<_>>>()?;
                Some(AdamW { t, m, v })
            }
            None => None,
        };
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint { config: header.config, step: header.step, params, optimizer })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let mut f = fs::File::create(path).map_err(io_err(path))?;
        f.write_all(&self.to_bytes()).map_err(io_err(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(io_err(path))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    /// The model described by the stored configuration.
    pub fn model(&self) -> Result<Model> {
        Model::new(&self.config.model, (&self.config.data.synth).into())
    }

    /// Parameters for `model`. An exact layout match is required unless
    /// `allow_partial` is set, in which case parameters the checkpoint lacks
    /// keep their fresh initialization (seeded by `seed`).
    pub fn params_for(&self, model: &Model, allow_partial: bool, seed: u64) -> Result<Params<f32>> {
        let ours = model.layout().specs();
        let theirs = self.params.specs();
        let same = ours.len() == theirs.len() && ours.iter().zip(theirs).all(|(a, b)| a.name == b.name && a.shape == b.shape);
        if same {
            return Params::from_values(model.layout(), self.params.values().to_vec());
        }
        let mut p = model.init_params(seed);
        let missing = p.load_matching(&self.params);
        let unused: Vec<&str> =
            theirs.iter().filter(|s| p.by_name(&s.name).is_none_or(|v| v.shape() != s.shape.as_slice())).map(|s| s.name.as_str()).collect();
        if !allow_partial {
            let first = missing.first().map(String::as_str).or(unused.first().copied()).unwrap_or("?");
            return Err(Error::Checkpoint(format!(
                "parameter layout differs ({} missing, {} unused, first: {first}); partial loading must be requested explicitly",
                missing.len(),
                unused.len()
            )));
        }
        Ok(p)
    }
}
