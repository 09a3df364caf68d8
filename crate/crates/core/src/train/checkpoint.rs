//! Versioned binary checkpoint.
//!
//! Layout (little-endian): magic, version `u32`, charset tag `u8`, step `u64`,
//! RNG state (32-byte seed, stream `u64`, word position `u128`), a sorted
//! list of `key=value` settings, then named tensors as
//! `(name, ndims u8, dims u32.., f32 data)`. Model tensors come first, then
//! each optimizer's first and second moments.

use std::collections::BTreeMap;
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::data::{Charset, CharsetKind};
use crate::gan::{GanModel, ModelConfig};
use crate::nn::{Adam, AdamConfig, Moments, Param};

use super::{TrainConfig, TrainError};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HWGANCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to continue a run bit-identically.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    /// Settings of the run; `output_dir` is not persisted.
    pub config: TrainConfig,
    pub model: GanModel<f32>,
    pub opt_g: Adam<f32>,
    pub opt_d: Adam<f32>,
    pub rng: ChaCha8Rng,
    pub step: u64,
}

struct Writer(Vec<u8>);

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }

    fn str(&mut self, s: &str) {
        self.bytes(&(s.len() as u16).to_le_bytes());
        self.bytes(s.as_bytes());
    }

    fn tensor(&mut self, name: &str, shape: &[usize], data: &[f32]) {
        self.str(name);
        self.0.push(shape.len() as u8);
        for &d in shape {
            self.bytes(&(d as u32).to_le_bytes());
        }
        for v in data {
            self.bytes(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| TrainError::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], TrainError> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }

    fn u8(&mut self) -> Result<u8, TrainError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, TrainError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, TrainError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, TrainError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn str(&mut self) -> Result<String, TrainError> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| TrainError::Corrupt("non-UTF-8 string".into()))
    }

    fn tensor(&mut self) -> Result<(String, Vec<usize>, Vec<f32>), TrainError> {
        let name = self.str()?;
        let nd = self.u8()? as usize;
        let shape = (0..nd)
            .map(|_| Ok(self.u32()? as usize))
            .collect::<Result<Vec<_>, TrainError>>()?;
        let len: usize = shape.iter().product();
        let raw = self.take(
            len.checked_mul(4)
                .ok_or_else(|| TrainError::Corrupt("tensor size".into()))?,
        )?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((name, shape, data))
    }
}

fn moment_tensors<'a>(
    prefix: &'a str,
    params: Vec<&'a Param<f32>>,
    opt: &'a Adam<f32>,
) -> impl Iterator<Item = (String, &'a [usize], &'a [f32])> + 'a {
    params.into_iter().zip(opt.moments()).flat_map(move |(p, m)| {
        [
            (format!("{prefix}.m.{}", p.name), p.shape.as_slice(), m.first.as_slice()),
            (
                format!("{prefix}.v.{}", p.name),
                p.shape.as_slice(),
                m.second.as_slice(),
            ),
        ]
    })
}

impl Checkpoint {
    fn settings(&self) -> BTreeMap<&'static str, String> {
        let c = &self.config;
        let m = &c.model;
        BTreeMap::from([
            ("base_channels", m.base_channels.to_string()),
            ("batch_size", c.batch_size.to_string()),
            ("beta1", c.beta1.to_string()),
            ("beta2", c.beta2.to_string()),
            ("charset", String::from_utf8_lossy(m.charset.chars()).into_owned()),
            ("checkpoint_interval", c.checkpoint_interval.to_string()),
            ("embed_dim", m.embed_dim.to_string()),
            ("epochs", c.epochs.to_string()),
            ("head_hidden", m.head_hidden.to_string()),
            ("image_size", m.image_size.to_string()),
            ("lambda_mis", c.lambda_mis.to_string()),
            ("lr_d", c.lr_d.to_string()),
            ("lr_g", c.lr_g.to_string()),
            ("noise_dim", m.noise_dim.to_string()),
            ("opt_d.step", self.opt_d.step_count().to_string()),
            ("opt_g.step", self.opt_g.step_count().to_string()),
            ("seed", c.seed.to_string()),
        ])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.bytes(CHECKPOINT_MAGIC);
        w.bytes(&CHECKPOINT_VERSION.to_le_bytes());
        w.0.push(self.config.model.charset.kind().tag());
        w.bytes(&self.step.to_le_bytes());
        w.bytes(&self.rng.get_seed());
        w.bytes(&self.rng.get_stream().to_le_bytes());
        w.bytes(&self.rng.get_word_pos().to_le_bytes());
        let settings = self.settings();
        w.bytes(&(settings.len() as u32).to_le_bytes());
        for (k, v) in &settings {
            w.str(k);
            w.str(v);
        }
        let model = self.model.tensors();
        let g = moment_tensors("opt_g", self.model.generator.params(), &self.opt_g);
        let d = moment_tensors("opt_d", self.model.discriminator.params(), &self.opt_d);
        let moments: Vec<_> = g.chain(d).collect();
        w.bytes(&((model.len() + moments.len()) as u32).to_le_bytes());
        for p in model {
            w.tensor(&p.name, &p.shape, &p.value);
        }
        for (name, shape, data) in &moments {
            w.tensor(name, shape, data);
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8).ok() != Some(CHECKPOINT_MAGIC.as_slice()) {
            return Err(TrainError::Corrupt("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(TrainError::VersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let tag = r.u8()?;
        let kind = CharsetKind::from_tag(tag).ok_or_else(|| TrainError::Corrupt(format!("charset tag {tag}")))?;
        let step = r.u64()?;
        let seed: [u8; 32] = r.array()?;
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.array()?);
        let mut settings = BTreeMap::new();
        for _ in 0..r.u32()? {
            let k = r.str()?;
            settings.insert(k, r.str()?);
        }
        let get = |k: &str| {
            settings
                .get(k)
                .ok_or_else(|| TrainError::Corrupt(format!("missing setting {k}")))
        };
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T, TrainError> {
            v.parse().map_err(|_| TrainError::Corrupt(format!("setting {k}={v}")))
        }
        let charset = Charset::from_chars(get("charset")?.as_bytes())
            .map_err(|_| TrainError::Corrupt("charset characters".into()))?;
        if charset.kind() != kind {
            return Err(TrainError::Corrupt("charset tag disagrees with its characters".into()));
        }
        let model_cfg = ModelConfig {
            noise_dim: num("noise_dim", get("noise_dim")?)?,
            embed_dim: num("embed_dim", get("embed_dim")?)?,
            base_channels: num("base_channels", get("base_channels")?)?,
            head_hidden: num("head_hidden", get("head_hidden")?)?,
            image_size: num("image_size", get("image_size")?)?,
            charset,
        };
        let config = TrainConfig {
            epochs: num("epochs", get("epochs")?)?,
            batch_size: num("batch_size", get("batch_size")?)?,
            seed: num("seed", get("seed")?)?,
            lr_g: num("lr_g", get("lr_g")?)?,
            lr_d: num("lr_d", get("lr_d")?)?,
            beta1: num("beta1", get("beta1")?)?,
            beta2: num("beta2", get("beta2")?)?,
            lambda_mis: num("lambda_mis", get("lambda_mis")?)?,
            checkpoint_interval: num("checkpoint_interval", get("checkpoint_interval")?)?,
            output_dir: None,
            model: model_cfg.clone(),
        };
        config.validate().map_err(|e| TrainError::Corrupt(e.to_string()))?;
        let g_steps: u64 = num("opt_g.step", get("opt_g.step")?)?;
        let d_steps: u64 = num("opt_d.step", get("opt_d.step")?)?;

        let mut tensors = BTreeMap::new();
        for _ in 0..r.u32()? {
            let (name, shape, data) = r.tensor()?;
            if tensors.insert(name.clone(), (shape, data)).is_some() {
                return Err(TrainError::Corrupt(format!("duplicate tensor {name}")));
            }
        }
        if r.pos != bytes.len() {
            return Err(TrainError::Corrupt("trailing bytes".into()));
        }
        let mut take = |name: &str, shape: &[usize]| {
            let (s, data) = tensors
                .remove(name)
                .ok_or_else(|| TrainError::Corrupt(format!("missing tensor {name}")))?;
            if s != shape {
                return Err(TrainError::Corrupt(format!(
                    "tensor {name} has shape {s:?}, expected {shape:?}"
                )));
            }
            Ok(data)
        };

        let mut model = GanModel::<f32>::new(model_cfg, 0);
        for p in model.tensors_mut() {
            p.value = take(&p.name, &p.shape)?;
        }
        let mut moments = |prefix: &str, params: Vec<&Param<f32>>| {
            params
                .into_iter()
                .map(|p| {
                    Ok(Moments {
                        first: take(&format!("{prefix}.m.{}", p.name), &p.shape)?,
                        second: take(&format!("{prefix}.v.{}", p.name), &p.shape)?,
                    })
                })
                .collect::<Result<Vec<_>, TrainError>>()
        };
        let adam = |lr| AdamConfig {
            lr,
            beta1: config.beta1,
            beta2: config.beta2,
            ..AdamConfig::default()
        };
        let opt_g = Adam::from_parts(adam(config.lr_g), g_steps, moments("opt_g", model.generator.params())?);
        let opt_d = Adam::from_parts(
            adam(config.lr_d),
            d_steps,
            moments("opt_d", model.discriminator.params())?,
        );
        if let Some(extra) = tensors.keys().next() {
            return Err(TrainError::Corrupt(format!("unexpected tensor {extra}")));
        }

        let mut rng = <ChaCha8Rng as rand::SeedableRng>::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);
        Ok(Self {
            config,
            model,
            opt_g,
            opt_d,
            rng,
            step,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let bytes = std::fs::read(path).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}
