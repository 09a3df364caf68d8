//! Character-conditioned generator and matching-aware discriminator.

mod discriminator;
mod generator;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::data::{CharCode, Charset, DataError, GlyphImage, IMAGE_SIZE};
use crate::nn::{sigmoid, NnError, Param, Scalar, Tensor4};

pub use discriminator::Discriminator;
pub use generator::Generator;

pub const DEFAULT_NOISE_DIM: usize = 100;
pub const DEFAULT_EMBED_DIM: usize = 16;
/// Width of the first discriminator block (and last generator block); the
/// other blocks use 2x and 4x.
pub const DEFAULT_BASE_CHANNELS: usize = 64;
/// Channels of the discriminator's 1x1 convolution over the feature map joined
/// with the repeated embedding.
pub const DEFAULT_HEAD_HIDDEN: usize = 256;

/// Smallest distance a reported score keeps from 0 and 1.
pub const SCORE_MARGIN: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GanError {
    #[error("character {0:?} is outside the model charset")]
    OutOfCharset(char),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

impl From<DataError> for GanError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::OutOfCharset(c) => GanError::OutOfCharset(char::from_u32(c).unwrap_or('?')),
            other => GanError::DimMismatch(other.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub noise_dim: usize,
    pub embed_dim: usize,
    pub base_channels: usize,
    /// 0 drops the 1x1 convolution, leaving a linear map from features and
    /// embedding to the logit.
    pub head_hidden: usize,
    pub charset: Charset,
    pub image_size: usize,
}

impl ModelConfig {
    pub fn new(charset: Charset) -> Self {
        Self {
            noise_dim: DEFAULT_NOISE_DIM,
            embed_dim: DEFAULT_EMBED_DIM,
            base_channels: DEFAULT_BASE_CHANNELS,
            head_hidden: DEFAULT_HEAD_HIDDEN,
            charset,
            image_size: IMAGE_SIZE,
        }
    }

    /// Side of the map between the projection and the first transposed convolution.
    pub fn seed_side(&self) -> usize {
        self.image_size / 8
    }
}

/// Generator input noise, i.i.d. standard normal.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseVector(pub Vec<f32>);

impl NoiseVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// `count` deterministic standard-normal draws of dimension `dim`.
pub fn sample_noise(count: usize, dim: usize, seed: u64) -> Vec<NoiseVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| NoiseVector((0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()))
        .collect()
}

/// Stacks noise vectors into `[B, Z, 1, 1]`.
pub fn noise_tensor<T: Scalar>(noise: &[NoiseVector]) -> Result<Tensor4<T>, NnError> {
    let dim = noise.first().map_or(0, NoiseVector::dim);
    let data = noise
        .iter()
        .flat_map(|z| z.0.iter().map(|&v| T::lit(v as f64)))
        .collect();
    Tensor4::from_vec([noise.len(), dim, 1, 1], data)
}

/// Stacks equally sized glyph images into `[B, 1, H, W]`.
pub fn image_tensor<T: Scalar>(images: &[&GlyphImage]) -> Result<Tensor4<T>, NnError> {
    let (h, w) = images.first().map_or((0, 0), |i| (i.height(), i.width()));
    if images.iter().any(|i| (i.height(), i.width()) != (h, w)) {
        return Err(NnError::ShapeMismatch("images of differing sizes in one batch".into()));
    }
    let data = images
        .iter()
        .flat_map(|i| i.pixels().iter().map(|&v| T::lit(v as f64)))
        .collect();
    Tensor4::from_vec([images.len(), 1, h, w], data)
}

/// Splits a `[B, 1, H, W]` tensor in `[0, 1]` back into glyph images.
pub fn tensor_images<T: Scalar>(t: &Tensor4<T>) -> Vec<GlyphImage> {
    let (h, w) = (t.height(), t.width());
    (0..t.batch())
        .map(|n| {
            let px = t
                .item(n)
                .iter()
                .map(|v| (v.to_f64().unwrap() as f32).clamp(0.0, 1.0))
                .collect();
            GlyphImage::new(h, w, px).expect("clamped pixels")
        })
        .collect()
}

/// Logit -> score strictly inside (0, 1).
pub fn score_from_logit<T: Scalar>(logit: T) -> f64 {
    sigmoid(logit.to_f64().unwrap()).clamp(SCORE_MARGIN, 1.0 - SCORE_MARGIN)
}

/// Generator and discriminator with their shared hyperparameters.
#[derive(Clone, Debug)]
pub struct GanModel<T> {
    pub config: ModelConfig,
    pub generator: Generator<T>,
    pub discriminator: Discriminator<T>,
}

impl<T: Scalar> GanModel<T> {
    /// Fresh model; weights drawn from a generator seeded with `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::with_rng(config, &mut rng)
    }

    pub fn with_rng<R: rand::Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Self {
        let generator = Generator::new(&config, rng);
        let discriminator = Discriminator::new(&config, rng);
        Self {
            config,
            generator,
            discriminator,
        }
    }

    pub fn charset(&self) -> &Charset {
        &self.config.charset
    }

    /// Validates a code against the model charset.
    pub fn check_char(&self, c: CharCode) -> Result<usize, GanError> {
        match self.config.charset.at(c.index) {
            Ok(found) if found.ascii == c.ascii => Ok(c.index),
            _ => Err(GanError::OutOfCharset(c.ascii as char)),
        }
    }

    /// Generator embedding row for `c`.
    pub fn embed(&self, c: CharCode) -> Result<Vec<T>, GanError> {
        let i = self.check_char(c)?;
        Ok(self.generator.embed.row(i).expect("charset-sized table").to_vec())
    }

    /// Synthesizes one glyph with inference-mode batch norm.
    pub fn generate(&self, c: CharCode, z: &NoiseVector) -> Result<GlyphImage, GanError> {
        Ok(self.generate_batch(&[c], std::slice::from_ref(z))?.remove(0))
    }

    pub fn generate_batch(&self, chars: &[CharCode], noise: &[NoiseVector]) -> Result<Vec<GlyphImage>, GanError> {
        if chars.len() != noise.len() {
            return Err(GanError::DimMismatch(format!(
                "{} chars, {} noise vectors",
                chars.len(),
                noise.len()
            )));
        }
        if let Some(z) = noise.iter().find(|z| z.dim() != self.config.noise_dim) {
            return Err(GanError::DimMismatch(format!(
                "noise dimension {} (model uses {})",
                z.dim(),
                self.config.noise_dim
            )));
        }
        let idx = chars
            .iter()
            .map(|&c| self.check_char(c))
            .collect::<Result<Vec<_>, _>>()?;
        let out = self.generator.infer(&idx, &noise_tensor(noise)?)?;
        Ok(tensor_images(&out))
    }

    /// Discriminator score for `(image, c)` with inference-mode batch norm.
    pub fn discriminate(&self, image: &GlyphImage, c: CharCode) -> Result<f64, GanError> {
        Ok(self.discriminate_batch(&[image], &[c])?[0])
    }

    pub fn discriminate_batch(&self, images: &[&GlyphImage], chars: &[CharCode]) -> Result<Vec<f64>, GanError> {
        let s = self.config.image_size;
        if let Some(img) = images.iter().find(|i| (i.height(), i.width()) != (s, s)) {
            return Err(GanError::DimMismatch(format!(
                "image {}x{} (model expects {s}x{s})",
                img.height(),
                img.width()
            )));
        }
        if images.len() != chars.len() {
            return Err(GanError::DimMismatch(format!(
                "{} images, {} chars",
                images.len(),
                chars.len()
            )));
        }
        let idx = chars
            .iter()
            .map(|&c| self.check_char(c))
            .collect::<Result<Vec<_>, _>>()?;
        let logits = self.discriminator.infer(&image_tensor(images)?, &idx)?;
        Ok(logits.data().iter().map(|&l| score_from_logit(l)).collect())
    }

    /// Trainable tensors, generator first.
    pub fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.generator.params();
        v.extend(self.discriminator.params());
        v
    }

    /// Every persisted tensor: trainable parameters then buffers.
    pub fn tensors(&self) -> Vec<&Param<T>> {
        let mut v = self.generator.params();
        v.extend(self.generator.buffers());
        v.extend(self.discriminator.params());
        v.extend(self.discriminator.buffers());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.generator.tensors_mut();
        v.extend(self.discriminator.tensors_mut());
        v
    }
}
