//! Matching-aware adversarial training: each batch gives one discriminator
//! update over (real, correct char), (fake, char) and (real, wrong char)
//! pairs, then one generator update.

mod checkpoint;
mod eval;
mod log;

use std::borrow::Cow;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::data::{make_batches, CharCode, Charset, DataError, GlyphImage, IdxDataset};
use crate::gan::{image_tensor, GanError, GanModel, ModelConfig};
use crate::nn::{bce_with_logits, sigmoid, Adam, AdamConfig, Mode, NnError, Tensor4};

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use eval::{evaluate_conditional_fidelity, fidelity_with, score_summary, verify, ClassMeans, ScoreSummary};
pub use log::{LogRecord, TrainLog, LOG_HEADER};

pub const DEFAULT_MISMATCH_WEIGHT: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("mismatched pairs need at least 2 characters, charset has {0}")]
    CharsetTooSmall(usize),
    #[error("batch of {0} is too small for batch normalization")]
    DegenerateBatch(usize),
    #[error("character {0:?} is outside the model charset")]
    OutOfCharset(char),
    #[error("reference data has no samples of {0:?}")]
    EmptyClass(char),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("I/O: {0}")]
    Io(String),
    #[error(transparent)]
    Gan(GanError),
    #[error(transparent)]
    Data(DataError),
}

impl From<NnError> for TrainError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::DegenerateBatch(n) => TrainError::DegenerateBatch(n),
            other => TrainError::Gan(GanError::Nn(other)),
        }
    }
}

impl From<GanError> for TrainError {
    fn from(e: GanError) -> Self {
        match e {
            GanError::OutOfCharset(c) => TrainError::OutOfCharset(c),
            GanError::Nn(n) => n.into(),
            other => TrainError::Gan(other),
        }
    }
}

impl From<DataError> for TrainError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::OutOfCharset(c) => TrainError::OutOfCharset(char::from_u32(c).unwrap_or('?')),
            DataError::Io(m) => TrainError::Io(m),
            other => TrainError::Data(other),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Weight of the (real, wrong char) term in the discriminator loss.
    pub lambda_mis: f64,
    /// Write a checkpoint every this many steps (0 disables).
    pub checkpoint_interval: u64,
    pub output_dir: Option<PathBuf>,
    pub model: ModelConfig,
}

impl TrainConfig {
    pub fn new(charset: Charset) -> Self {
        let adam = AdamConfig::default();
        Self {
            epochs: 10,
            batch_size: 64,
            seed: 1,
            lr_g: adam.lr,
            lr_d: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            lambda_mis: DEFAULT_MISMATCH_WEIGHT,
            checkpoint_interval: 0,
            output_dir: None,
            model: ModelConfig::new(charset),
        }
    }

    pub fn charset(&self) -> &Charset {
        &self.model.charset
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::ConfigInvalid(m));
        if self.epochs < 1 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be at least 2 (got {})", self.batch_size));
        }
        if !(self.lambda_mis >= 0.0 && self.lambda_mis.is_finite()) {
            return bad(format!("lambda_mis must be finite and >= 0 (got {})", self.lambda_mis));
        }
        for (name, lr) in [("lr_g", self.lr_g), ("lr_d", self.lr_d)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be positive (got {lr})"));
            }
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1) (got {b})"));
            }
        }
        let m = &self.model;
        if m.noise_dim == 0 || m.embed_dim == 0 || m.base_channels == 0 {
            return bad("model dimensions must be positive".into());
        }
        if m.image_size < 8 || m.image_size % 8 != 0 {
            return bad(format!(
                "image size must be a positive multiple of 8 (got {})",
                m.image_size
            ));
        }
        if m.charset.len() < 2 {
            return Err(TrainError::CharsetTooSmall(m.charset.len()));
        }
        Ok(())
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        }
    }
}

/// Uniform draw from `0..n` excluding `truth`.
fn draw_wrong<R: Rng + ?Sized>(rng: &mut R, truth: usize, n: usize) -> usize {
    let r = rng.random_range(0..n - 1);
    if r >= truth {
        r + 1
    } else {
        r
    }
}

/// For every label, a character drawn uniformly from the rest of the charset.
pub fn mismatch_chars(labels: &[CharCode], charset: &Charset, seed: u64) -> Result<Vec<CharCode>, TrainError> {
    mismatch_chars_with(labels, charset, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn mismatch_chars_with<R: Rng + ?Sized>(
    labels: &[CharCode],
    charset: &Charset,
    rng: &mut R,
) -> Result<Vec<CharCode>, TrainError> {
    let n = charset.len();
    if n < 2 {
        return Err(TrainError::CharsetTooSmall(n));
    }
    labels
        .iter()
        .map(|c| {
            let truth = charset
                .code(c.ascii)
                .map_err(|_| TrainError::OutOfCharset(c.as_char()))?;
            Ok(charset.at(draw_wrong(rng, truth.index, n))?)
        })
        .collect()
}

/// Discriminator losses (unweighted) and mean scores for one update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DStep {
    pub loss_real: f64,
    pub loss_fake: f64,
    /// Zero when no mismatched pairs were scored.
    pub loss_mismatch: f64,
    pub s_real: f64,
    pub s_fake: f64,
    pub s_mismatch: f64,
}

impl DStep {
    /// The optimized objective, with the mismatch term weighted.
    pub fn total(&self, lambda_mis: f64) -> f64 {
        self.loss_real + self.loss_fake + lambda_mis * self.loss_mismatch
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GStep {
    pub loss: f64,
    pub s_fake: f64,
}

/// Model, optimizers, RNG and log of one training run.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub model: GanModel<f32>,
    pub opt_g: Adam<f32>,
    pub opt_d: Adam<f32>,
    rng: ChaCha8Rng,
    step: u64,
    log: TrainLog,
}

fn batch_seed(seed: u64, epoch: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ epoch.wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

impl Trainer {
    /// Fresh model initialized from `config.seed`; the discriminator's input
    /// standardization is fitted to `dataset`.
    pub fn new(config: TrainConfig, dataset: &IdxDataset) -> Result<Self, TrainError> {
        config.validate()?;
        let data = prepare(&config, dataset)?;
        let mut init = ChaCha8Rng::seed_from_u64(config.seed);
        let mut model = GanModel::with_rng(config.model.clone(), &mut init);
        let (mean, std) = pixel_moments(data.images());
        model.discriminator.set_input_standardization(mean, std);
        let opt_g = Adam::new(config.adam(config.lr_g), &model.generator.params());
        let opt_d = Adam::new(config.adam(config.lr_d), &model.discriminator.params());
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Ok(Self {
            config,
            model,
            opt_g,
            opt_d,
            rng,
            step: 0,
            log: TrainLog::default(),
        })
    }

    /// Continues from a checkpoint. `epochs`, `checkpoint_interval` and
    /// `output_dir` are taken from `config`; everything else must agree.
    pub fn resume(checkpoint: Checkpoint, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let saved = &checkpoint.config;
        let same = saved.batch_size == config.batch_size
            && saved.seed == config.seed
            && saved.lambda_mis == config.lambda_mis
            && saved.lr_g == config.lr_g
            && saved.lr_d == config.lr_d
            && saved.beta1 == config.beta1
            && saved.beta2 == config.beta2
            && saved.model == config.model;
        if !same {
            return Err(TrainError::ConfigInvalid(
                "configuration differs from the checkpoint's".into(),
            ));
        }
        let Checkpoint {
            model,
            opt_g,
            opt_d,
            rng,
            step,
            ..
        } = checkpoint;
        Ok(Self {
            config,
            model,
            opt_g,
            opt_d,
            rng,
            step,
            log: TrainLog::default(),
        })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            model: self.model.clone(),
            opt_g: self.opt_g.clone(),
            opt_d: self.opt_d.clone(),
            rng: self.rng.clone(),
            step: self.step,
        }
    }

    fn draw_noise(&mut self, batch: usize) -> Tensor4<f32> {
        let z = self.config.model.noise_dim;
        let data = (0..batch * z).map(|_| StandardNormal.sample(&mut self.rng)).collect();
        Tensor4::from_vec([batch, z, 1, 1], data).expect("positive dims")
    }

    fn indices(&self, labels: &[CharCode]) -> Result<Vec<usize>, TrainError> {
        labels.iter().map(|&c| Ok(self.model.check_char(c)?)).collect()
    }

    /// One discriminator update on real images with their labels; noise and
    /// mismatched characters come from the trainer's generator.
    pub fn discriminator_step(&mut self, real: &[&GlyphImage], labels: &[CharCode]) -> Result<DStep, TrainError> {
        if labels.len() < 2 {
            return Err(TrainError::DegenerateBatch(labels.len()));
        }
        let idx = self.indices(labels)?;
        let n = self.config.charset().len();
        let wrong: Vec<usize> = idx.iter().map(|&t| draw_wrong(&mut self.rng, t, n)).collect();
        let noise = self.draw_noise(labels.len());
        let real = image_tensor(real)?;
        self.d_update(&real, &idx, &noise, Some(&wrong))
    }

    /// Deterministic core of [`Trainer::discriminator_step`]. With `wrong`
    /// absent the mismatch term is skipped entirely; with a zero weight it is
    /// scored (for logging) but neither backpropagated nor folded into the
    /// running statistics.
    pub fn d_update(
        &mut self,
        real: &Tensor4<f32>,
        labels: &[usize],
        noise: &Tensor4<f32>,
        wrong: Option<&[usize]>,
    ) -> Result<DStep, TrainError> {
        let b = labels.len();
        if b < 2 {
            return Err(TrainError::DegenerateBatch(b));
        }
        let lambda = self.config.lambda_mis;
        let (g, d) = (&mut self.model.generator, &mut self.model.discriminator);
        d.zero_grad();
        let fake = g.forward(labels, noise, Mode::Train { update_running: false })?;

        let mut term = |images: &Tensor4<f32>, chars: &[usize], target: f32, weight: f64, mode: Mode| {
            let logits = d.forward(images, chars, mode)?;
            let (loss, grad) = bce_with_logits(logits.data(), &vec![target; b]);
            let score = mean_score(logits.data());
            if weight > 0.0 {
                let w = weight as f32;
                let grad = grad.into_iter().map(|v| v * w).collect();
                d.backward(&Tensor4::from_vec([b, 1, 1, 1], grad)?)?;
            }
            Ok::<_, TrainError>((loss as f64, score))
        };
        let (loss_real, s_real) = term(real, labels, 1.0, 1.0, Mode::TRAIN)?;
        let (loss_fake, s_fake) = term(&fake, labels, 0.0, 1.0, Mode::TRAIN)?;
        let (loss_mismatch, s_mismatch) = match wrong {
            Some(w) => {
                let mode = if lambda > 0.0 {
                    Mode::TRAIN
                } else {
                    Mode::Train { update_running: false }
                };
                term(real, w, 0.0, lambda, mode)?
            }
            None => (0.0, 0.0),
        };
        self.opt_d.step(&mut self.model.discriminator.params_mut())?;
        Ok(DStep {
            loss_real,
            loss_fake,
            loss_mismatch,
            s_real,
            s_fake,
            s_mismatch,
        })
    }

    /// One generator update towards `D(G(z, c), c) = 1`; discriminator
    /// parameters and statistics are left untouched.
    pub fn generator_step(&mut self, labels: &[CharCode]) -> Result<GStep, TrainError> {
        if labels.len() < 2 {
            return Err(TrainError::DegenerateBatch(labels.len()));
        }
        let idx = self.indices(labels)?;
        let noise = self.draw_noise(labels.len());
        self.g_update(&idx, &noise)
    }

    pub fn g_update(&mut self, labels: &[usize], noise: &Tensor4<f32>) -> Result<GStep, TrainError> {
        let b = labels.len();
        if b < 2 {
            return Err(TrainError::DegenerateBatch(b));
        }
        let (g, d) = (&mut self.model.generator, &mut self.model.discriminator);
        g.zero_grad();
        let fake = g.forward(labels, noise, Mode::TRAIN)?;
        let logits = d.forward(&fake, labels, Mode::Train { update_running: false })?;
        let (loss, grad) = bce_with_logits(logits.data(), &vec![1.0; b]);
        let s_fake = mean_score(logits.data());
        let grad_image = d.backward(&Tensor4::from_vec([b, 1, 1, 1], grad)?)?;
        d.zero_grad();
        g.backward(&grad_image)?;
        self.opt_g.step(&mut self.model.generator.params_mut())?;
        Ok(GStep {
            loss: loss as f64,
            s_fake,
        })
    }

    /// Discriminator step then generator step on one batch; logs and, when
    /// due, writes a checkpoint.
    pub fn train_batch(&mut self, images: &[&GlyphImage], labels: &[CharCode]) -> Result<LogRecord, TrainError> {
        let ds = self.discriminator_step(images, labels)?;
        let gs = self.generator_step(labels)?;
        let record = LogRecord {
            step: self.step,
            d_loss_real: ds.loss_real,
            d_loss_fake: ds.loss_fake,
            d_loss_mismatch: ds.loss_mismatch,
            g_loss: gs.loss,
            s_real: ds.s_real,
            s_fake: ds.s_fake,
            s_mismatch: ds.s_mismatch,
        };
        self.log.push(record.clone());
        self.step += 1;
        let every = self.config.checkpoint_interval;
        if every > 0 && self.step % every == 0 {
            if let Some(dir) = &self.config.output_dir {
                self.checkpoint()
                    .save(&dir.join(format!("checkpoint-{:08}.ckpt", self.step)))?;
            }
        }
        Ok(record)
    }

    /// Runs the remaining steps of `config.epochs` epochs.
    pub fn run(&mut self, dataset: &IdxDataset) -> Result<(), TrainError> {
        let data = prepare(&self.config, dataset)?;
        let bs = self.config.batch_size;
        let per_epoch = (data.count() / bs) as u64;
        let total = self.config.epochs * per_epoch;
        let charset = self.config.charset().clone();
        while self.step < total {
            let epoch = self.step / per_epoch;
            let skip = (self.step % per_epoch) as usize;
            for batch in make_batches(&data, bs, batch_seed(self.config.seed, epoch))?.skip(skip) {
                let labels = batch
                    .labels
                    .iter()
                    .map(|&l| charset.at(l as usize))
                    .collect::<Result<Vec<_>, _>>()?;
                self.train_batch(&batch.images, &labels)?;
            }
        }
        Ok(())
    }
}

/// Trains from scratch and returns the final state and the per-step log.
pub fn train(config: TrainConfig, dataset: &IdxDataset) -> Result<(Checkpoint, TrainLog), TrainError> {
    let mut trainer = Trainer::new(config, dataset)?;
    trainer.run(dataset)?;
    Ok((trainer.checkpoint(), trainer.log))
}

fn mean_score(logits: &[f32]) -> f64 {
    logits.iter().map(|&l| sigmoid(l as f64)).sum::<f64>() / logits.len() as f64
}

/// Checks the dataset against the configuration and pads images to the model size.
fn prepare<'a>(config: &TrainConfig, dataset: &'a IdxDataset) -> Result<Cow<'a, IdxDataset>, TrainError> {
    if dataset.count() < config.batch_size {
        return Err(TrainError::ConfigInvalid(format!(
            "batch_size {} exceeds the {} available samples",
            config.batch_size,
            dataset.count()
        )));
    }
    let n = config.charset().len();
    if let Some(&l) = dataset.labels().iter().find(|&&l| l as usize >= n) {
        return Err(TrainError::ConfigInvalid(format!(
            "label {l} is outside the {n}-character charset"
        )));
    }
    let s = config.model.image_size;
    if dataset.images().iter().all(|i| (i.height(), i.width()) == (s, s)) {
        Ok(Cow::Borrowed(dataset))
    } else {
        Ok(Cow::Owned(dataset.padded(s)?))
    }
}

/// Mean and standard deviation over every pixel (std floored at 1e-3).
fn pixel_moments(images: &[GlyphImage]) -> (f32, f32) {
    let n: usize = images.iter().map(|i| i.pixels().len()).sum();
    let sum: f64 = images.iter().flat_map(|i| i.pixels()).map(|&v| v as f64).sum();
    let mean = sum / n as f64;
    let var = images
        .iter()
        .flat_map(|i| i.pixels())
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    (mean as f32, var.sqrt().max(1e-3) as f32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrong_draw_never_hits_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for truth in 0..4 {
            for _ in 0..200 {
                let w = draw_wrong(&mut rng, truth, 4);
                assert!(w < 4 && w != truth);
            }
        }
    }

    #[test]
    fn two_char_charset_forces_complement() {
        let cs = Charset::digits();
        let small = Charset::from_chars(b"ab").unwrap();
        let a = small.code(b'a').unwrap();
        let out = mismatch_chars(&[a; 20], &small, 1).unwrap();
        assert!(out.iter().all(|c| c.ascii == b'b'));
        let one = Charset::from_chars(b"a").unwrap();
        assert_eq!(mismatch_chars(&[], &one, 1), Err(TrainError::CharsetTooSmall(1)));
        let three = cs.code(b'3').unwrap();
        assert!(mismatch_chars(&[three; 50], &cs, 9)
            .unwrap()
            .iter()
            .all(|c| c.ascii != b'3'));
    }

    #[test]
    fn config_validation() {
        let base = TrainConfig::new(Charset::digits());
        assert!(base.validate().is_ok());
        let bad = TrainConfig {
            batch_size: 1,
            ..base.clone()
        };
        assert!(matches!(bad.validate(), Err(TrainError::ConfigInvalid(_))));
        let bad = TrainConfig {
            lambda_mis: -0.1,
            ..base.clone()
        };
        assert!(matches!(bad.validate(), Err(TrainError::ConfigInvalid(_))));
        let bad = TrainConfig { epochs: 0, ..base };
        assert!(matches!(bad.validate(), Err(TrainError::ConfigInvalid(_))));
    }
}
