use crate::data::{CharCode, Charset, GlyphImage, IdxDataset};
use crate::gan::{sample_noise, GanModel, NoiseVector};

use super::{mismatch_chars, TrainError};

/// Images are generated and scored in chunks of this many.
const EVAL_CHUNK: usize = 64;

/// Per-class mean images of a reference set; nearest-mean (L2) classifier.
#[derive(Clone, Debug)]
pub struct ClassMeans {
    pub charset: Charset,
    pub means: Vec<GlyphImage>,
}

impl ClassMeans {
    /// Requires at least one sample of every class; images are padded to
    /// `size` when smaller.
    pub fn from_dataset(reference: &IdxDataset, charset: &Charset, size: usize) -> Result<Self, TrainError> {
        let n = charset.len();
        let mut sums = vec![vec![0.0f64; size * size]; n];
        let mut counts = vec![0usize; n];
        for (img, &label) in reference.images().iter().zip(reference.labels()) {
            let l = label as usize;
            if l >= n {
                return Err(TrainError::OutOfCharset(char::from_u32(label as u32).unwrap_or('?')));
            }
            let img = fit(img, size)?;
            sums[l].iter_mut().zip(img.pixels()).for_each(|(s, &v)| *s += v as f64);
            counts[l] += 1;
        }
        let mut means = Vec::with_capacity(n);
        for (i, (sum, count)) in sums.into_iter().zip(counts).enumerate() {
            if count == 0 {
                return Err(TrainError::EmptyClass(charset.at(i)?.as_char()));
            }
            let px = sum.into_iter().map(|s| (s / count as f64) as f32).collect();
            means.push(GlyphImage::new(size, size, px)?);
        }
        Ok(Self {
            charset: charset.clone(),
            means,
        })
    }

    /// Index of the nearest class mean (first on ties).
    pub fn classify(&self, image: &GlyphImage) -> usize {
        let dist = |m: &GlyphImage| -> f64 {
            m.pixels()
                .iter()
                .zip(image.pixels())
                .map(|(&a, &b)| ((a - b) as f64).powi(2))
                .sum()
        };
        let mut best = (0, f64::INFINITY);
        for (i, m) in self.means.iter().enumerate() {
            let d = dist(m);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }
}

fn fit(img: &GlyphImage, size: usize) -> Result<GlyphImage, TrainError> {
    if (img.height(), img.width()) == (size, size) {
        Ok(img.clone())
    } else {
        img.pad_to(size).map_err(|e| TrainError::Gan(e.into()))
    }
}

/// Fraction of `n_samples` generated images (chars cycling through the
/// charset, noise seeded by `seed`) whose nearest reference class mean is the
/// conditioned character.
pub fn fidelity_with<F>(
    charset: &Charset,
    noise_dim: usize,
    reference: &IdxDataset,
    n_samples: usize,
    seed: u64,
    mut generate: F,
) -> Result<f64, TrainError>
where
    F: FnMut(&[CharCode], &[NoiseVector]) -> Result<Vec<GlyphImage>, TrainError>,
{
    if n_samples == 0 {
        return Err(TrainError::ConfigInvalid("n_samples must be positive".into()));
    }
    let noise = sample_noise(n_samples, noise_dim, seed);
    let chars = (0..n_samples)
        .map(|i| charset.at(i % charset.len()))
        .collect::<Result<Vec<_>, _>>()?;
    let mut hits = 0usize;
    let mut means: Option<ClassMeans> = None;
    for (cs, zs) in chars.chunks(EVAL_CHUNK).zip(noise.chunks(EVAL_CHUNK)) {
        let images = generate(cs, zs)?;
        let means = match &mut means {
            Some(m) => m,
            none => none.insert(ClassMeans::from_dataset(reference, charset, images[0].height())?),
        };
        hits += images
            .iter()
            .zip(cs)
            .filter(|(img, c)| means.classify(img) == c.index)
            .count();
    }
    Ok(hits as f64 / n_samples as f64)
}

/// Conditional fidelity of a model's generator (inference mode).
pub fn evaluate_conditional_fidelity(
    model: &GanModel<f32>,
    reference: &IdxDataset,
    n_samples: usize,
    seed: u64,
) -> Result<f64, TrainError> {
    let cfg = &model.config;
    fidelity_with(&cfg.charset, cfg.noise_dim, reference, n_samples, seed, |c, z| {
        Ok(model.generate_batch(c, z)?)
    })
}

/// Discriminator score (inference mode) of `image` claimed to be `c`;
/// smaller images are padded to the model size.
pub fn verify(model: &GanModel<f32>, image: &GlyphImage, c: CharCode) -> Result<f64, TrainError> {
    model.check_char(c)?;
    let s = model.config.image_size;
    let img = if image.height() <= s && image.width() <= s {
        fit(image, s)?
    } else {
        image.clone()
    };
    Ok(model.discriminate(&img, c)?)
}

/// Mean inference-mode discriminator scores on held-out data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreSummary {
    pub real_matched: f64,
    pub real_mismatched: f64,
    pub fake: f64,
}

impl ScoreSummary {
    /// Real-matched pairs outscore both kinds of fake-labelled pairs.
    pub fn ordered(&self) -> bool {
        self.real_matched > self.real_mismatched && self.real_matched > self.fake
    }
}

/// Scores every held-out image with its own label and with a mismatched one,
/// and as many generated images (same labels, noise from `seed`).
pub fn score_summary(model: &GanModel<f32>, held_out: &IdxDataset, seed: u64) -> Result<ScoreSummary, TrainError> {
    let cs = &model.config.charset;
    let s = model.config.image_size;
    if held_out.is_empty() {
        return Err(TrainError::ConfigInvalid("empty held-out set".into()));
    }
    let images = held_out
        .images()
        .iter()
        .map(|i| fit(i, s))
        .collect::<Result<Vec<_>, _>>()?;
    let labels = held_out
        .labels()
        .iter()
        .map(|&l| cs.at(l as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let wrong = mismatch_chars(&labels, cs, seed)?;
    let noise = sample_noise(labels.len(), model.config.noise_dim, seed);
    let mut sums = [0.0f64; 3];
    for start in (0..labels.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(labels.len());
        let real: Vec<&GlyphImage> = images[start..end].iter().collect();
        let fakes = model.generate_batch(&labels[start..end], &noise[start..end])?;
        let fake_refs: Vec<&GlyphImage> = fakes.iter().collect();
        let parts = [
            model.discriminate_batch(&real, &labels[start..end])?,
            model.discriminate_batch(&real, &wrong[start..end])?,
            model.discriminate_batch(&fake_refs, &labels[start..end])?,
        ];
        for (sum, scores) in sums.iter_mut().zip(parts) {
            *sum += scores.iter().sum::<f64>();
        }
    }
    let n = labels.len() as f64;
    Ok(ScoreSummary {
        real_matched: sums[0] / n,
        real_mismatched: sums[1] / n,
        fake: sums[2] / n,
    })
}
