use std::collections::BTreeMap;

use crate::data::{CharCode, Charset, CorpusRecord, GlyphImage};
use crate::gan::{sample_noise, GanModel};
use crate::metrics::{ink_box, measure_spacing, measure_stroke_angle, PairMeasurement, Placement, INK_THRESHOLD};

use super::{
    controller_step, objective, pair_cell, pair_targets, profile_update, ControllerState, HandwritingProfile,
    ProfileError,
};

/// Widest gap (pixels past the glyph's own width) a placement may ask for.
pub const MAX_GAP: i64 = 256;
/// Largest vertical step between neighbours.
pub const MAX_RISE: i64 = 64;

/// Produces one glyph per character of a word.
pub trait GlyphSource {
    fn charset(&self) -> &Charset;
    fn render(&mut self, chars: &[CharCode]) -> Result<Vec<GlyphImage>, ProfileError>;
}

/// Generator glyphs; noise vector i of the seeded stream goes to position i.
pub struct GanGlyphs<'a> {
    pub model: &'a GanModel<f32>,
    pub seed: u64,
}

impl GlyphSource for GanGlyphs<'_> {
    fn charset(&self) -> &Charset {
        self.model.charset()
    }

    fn render(&mut self, chars: &[CharCode]) -> Result<Vec<GlyphImage>, ProfileError> {
        let noise = sample_noise(chars.len(), self.model.config.noise_dim, self.seed);
        Ok(self.model.generate_batch(chars, &noise)?)
    }
}

/// Solid rectangles at fixed positions: `(x0, x1, y0, y1)` inclusive, per
/// character or the default.
#[derive(Clone, Debug)]
pub struct StubGlyphs {
    pub charset: Charset,
    pub size: usize,
    pub default_box: (usize, usize, usize, usize),
    pub boxes: BTreeMap<u8, (usize, usize, usize, usize)>,
}

impl StubGlyphs {
    pub fn new(charset: Charset, size: usize, default_box: (usize, usize, usize, usize)) -> Self {
        Self {
            charset,
            size,
            default_box,
            boxes: BTreeMap::new(),
        }
    }

    pub fn glyph(&self, c: CharCode) -> GlyphImage {
        let (x0, x1, y0, y1) = self.boxes.get(&c.ascii).copied().unwrap_or(self.default_box);
        let mut img = GlyphImage::blank(self.size, self.size);
        for y in y0..=y1.min(self.size - 1) {
            for x in x0..=x1.min(self.size - 1) {
                img.set(y, x, 1.0);
            }
        }
        img
    }
}

impl GlyphSource for StubGlyphs {
    fn charset(&self) -> &Charset {
        &self.charset
    }

    fn render(&mut self, chars: &[CharCode]) -> Result<Vec<GlyphImage>, ProfileError> {
        Ok(chars.iter().map(|&c| self.glyph(c)).collect())
    }
}

/// A rendered word. Placements are image origins relative to the first
/// glyph (y grows downward); the canvas is shifted so that every glyph fits.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositionResult {
    pub canvas: GlyphImage,
    pub placements: Vec<Placement>,
    pub measurements: Vec<PairMeasurement>,
    pub spacing_objectives: Vec<f64>,
    pub angle_objectives: Vec<f64>,
}

impl CompositionResult {
    pub fn max_spacing_objective(&self) -> f64 {
        self.spacing_objectives.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_angle_objective(&self) -> f64 {
        self.angle_objectives.iter().copied().fold(0.0, f64::max)
    }
}

/// Renders `word` from `source` and lays it out with the current thresholds.
pub fn compose(
    word: &str,
    source: &mut dyn GlyphSource,
    profile: &HandwritingProfile,
    state: &ControllerState,
) -> Result<CompositionResult, ProfileError> {
    let chars = encode(word, source.charset(), profile)?;
    let glyphs = source.render(&chars)?;
    compose_glyphs(word, &glyphs, profile, state)
}

fn encode(word: &str, charset: &Charset, profile: &HandwritingProfile) -> Result<Vec<CharCode>, ProfileError> {
    if word.is_empty() {
        return Err(ProfileError::InvalidConfig("empty word".into()));
    }
    if charset.kind() != profile.kind() {
        return Err(ProfileError::InvalidConfig(format!(
            "{} profile with a {} glyph source",
            profile.kind(),
            charset.kind()
        )));
    }
    word.chars()
        .map(|c| {
            let ascii = u8::try_from(c as u32).map_err(|_| ProfileError::OutOfCharset(c))?;
            charset.code(ascii).map_err(|_| ProfileError::OutOfCharset(c))
        })
        .collect()
}

fn pairs(word: &str) -> Vec<(char, char)> {
    let cs: Vec<char> = word.chars().collect();
    cs.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Places glyph i+1 so its image origin sits `threshold` columns past glyph
/// i's last ink column (plus one), raised by the pair's vertical step, then
/// measures every adjacent pair from the glyph images and placements.
pub fn compose_glyphs(
    word: &str,
    glyphs: &[GlyphImage],
    profile: &HandwritingProfile,
    state: &ControllerState,
) -> Result<CompositionResult, ProfileError> {
    let pairs = pairs(word);
    if glyphs.len() != pairs.len() + 1 {
        return Err(ProfileError::InvalidConfig(format!(
            "{} glyphs for {:?}",
            glyphs.len(),
            word
        )));
    }
    state.validate()?;
    let boxes = glyphs
        .iter()
        .map(|g| ink_box(g, INK_THRESHOLD))
        .collect::<Result<Vec<_>, _>>()?;

    let mut placements = vec![Placement::default()];
    let mut measurements = Vec::with_capacity(pairs.len());
    let (mut spacing_objectives, mut angle_objectives) = (Vec::new(), Vec::new());
    for (i, &pair) in pairs.iter().enumerate() {
        let target = pair_targets(profile, pair, state.strict)?;
        let prev = placements[i];
        let advance = (boxes[i].right as i64 + 1 + state.threshold(pair, profile)?.round() as i64)
            .clamp(1, glyphs[i].width() as i64 + MAX_GAP);
        let rise = (state.offset(pair, profile)?.round() as i64).clamp(-MAX_RISE, MAX_RISE);
        let step = Placement { x: advance, y: -rise };
        placements.push(Placement {
            x: prev.x + step.x,
            y: prev.y + step.y,
        });

        let spacing = measure_spacing(&glyphs[i], &glyphs[i + 1], step.x)?;
        let angle = measure_stroke_angle(&glyphs[i], &glyphs[i + 1], step)?;
        spacing_objectives.push(objective(spacing as f64, target.spacing));
        angle_objectives.push(objective(angle, target.angle));
        measurements.push(PairMeasurement { pair, spacing, angle });
    }

    let top = placements.iter().map(|p| p.y).min().unwrap_or(0);
    let height = placements
        .iter()
        .zip(glyphs)
        .map(|(p, g)| p.y - top + g.height() as i64)
        .max()
        .unwrap_or(1);
    let width = placements
        .iter()
        .zip(glyphs)
        .map(|(p, g)| p.x + g.width() as i64)
        .max()
        .unwrap_or(1);
    let mut canvas = GlyphImage::blank(height as usize, width as usize);
    for (p, g) in placements.iter().zip(glyphs) {
        let (ox, oy) = (p.x as usize, (p.y - top) as usize);
        for y in 0..g.height() {
            for x in 0..g.width() {
                let v = g.get(y, x).max(canvas.get(oy + y, ox + x));
                canvas.set(oy + y, ox + x, v);
            }
        }
    }
    Ok(CompositionResult {
        canvas,
        placements,
        measurements,
        spacing_objectives,
        angle_objectives,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvergenceStatus {
    Converged,
    NonConvergence,
}

/// Objectives observed at one controller iteration (before its update).
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub spacing_objectives: Vec<f64>,
    pub angle_objectives: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergeOutcome {
    pub state: ControllerState,
    pub status: ConvergenceStatus,
    /// Compositions performed, including the final one.
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
    pub result: CompositionResult,
}

/// Composes, checks the tolerances, and corrects every pair until all
/// spacing and angle objectives are within tolerance or `max_iters`
/// compositions have been made. Glyphs are rendered once. A pair occurring
/// several times in the word gets one correction from its mean measurement.
pub fn converge(
    word: &str,
    source: &mut dyn GlyphSource,
    profile: &HandwritingProfile,
    mut state: ControllerState,
    max_iters: usize,
) -> Result<ConvergeOutcome, ProfileError> {
    if max_iters == 0 {
        return Err(ProfileError::InvalidConfig("max_iters must be at least 1".into()));
    }
    let chars = encode(word, source.charset(), profile)?;
    let glyphs = source.render(&chars)?;
    let mut history = Vec::new();
    for it in 1..=max_iters {
        let result = compose_glyphs(word, &glyphs, profile, &state)?;
        history.push(IterationRecord {
            iteration: it,
            spacing_objectives: result.spacing_objectives.clone(),
            angle_objectives: result.angle_objectives.clone(),
        });
        state.iterations += 1;
        let done =
            result.max_spacing_objective() <= state.eps_spacing && result.max_angle_objective() <= state.eps_angle;
        if done || it == max_iters {
            let status = if done {
                ConvergenceStatus::Converged
            } else {
                ConvergenceStatus::NonConvergence
            };
            return Ok(ConvergeOutcome {
                state,
                status,
                iterations: it,
                history,
                result,
            });
        }
        let mut grouped: BTreeMap<(char, char), (f64, f64, f64)> = BTreeMap::new();
        for m in &result.measurements {
            let g = grouped.entry(m.pair).or_default();
            *g = (g.0 + m.spacing as f64, g.1 + m.angle, g.2 + 1.0);
        }
        for (pair, (s, a, n)) in grouped {
            controller_step(&mut state, pair, s / n, a / n, profile)?;
        }
    }
    unreachable!("loop returns at max_iters")
}

/// Column runs `[start, end]` of ink; `Some` only when there are exactly
/// `n_glyphs` of them.
pub fn segment_word(image: &GlyphImage, n_glyphs: usize) -> Option<Vec<(usize, usize)>> {
    let inked = |x: usize| (0..image.height()).any(|y| image.get(y, x) > INK_THRESHOLD);
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for x in 0..image.width() {
        if !inked(x) {
            continue;
        }
        match runs.last_mut() {
            Some(r) if r.1 + 1 == x => r.1 = x,
            _ => runs.push((x, x)),
        }
    }
    (runs.len() == n_glyphs).then_some(runs)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CorpusSummary {
    pub words_used: usize,
    pub words_skipped: usize,
    pub pairs_observed: usize,
}

/// Builds a profile from word images whose ink splits into one column run per
/// character; other words are skipped. Spacing is the blank-column gap
/// between runs; the angle is measured on the runs cropped to glyph images.
pub fn profile_from_corpus(
    records: &[CorpusRecord],
    charset: &Charset,
) -> Result<(HandwritingProfile, CorpusSummary), ProfileError> {
    let mut profile = HandwritingProfile::new(charset.kind())?;
    let mut summary = CorpusSummary::default();
    for rec in records {
        let chars: Vec<char> = rec.word.chars().collect();
        let Some(runs) = segment_word(&rec.image, chars.len()) else {
            summary.words_skipped += 1;
            continue;
        };
        summary.words_used += 1;
        for (i, w) in chars.windows(2).enumerate() {
            if pair_cell(charset.kind(), w[0], w[1])?.is_none() {
                continue;
            }
            let (a, b) = (runs[i], runs[i + 1]);
            let left = rec.image.crop_columns(a.0, a.1 + 1)?;
            let right = rec.image.crop_columns(b.0, b.1 + 1)?;
            let spacing = (b.0 - a.1 - 1) as f64;
            let angle = measure_stroke_angle(
                &left,
                &right,
                Placement {
                    x: (b.0 - a.0) as i64,
                    y: 0,
                },
            )?;
            profile_update(&mut profile, (w[0], w[1]), spacing, angle)?;
            summary.pairs_observed += 1;
        }
    }
    Ok((profile, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CharsetKind;

    fn stubs() -> StubGlyphs {
        StubGlyphs::new(Charset::letters(), 16, (0, 7, 4, 11))
    }

    #[test]
    fn single_char_and_pair_counts() {
        let p = HandwritingProfile::new(CharsetKind::Letters).unwrap();
        let s = ControllerState::default();
        let r = compose("a", &mut stubs(), &p, &s).unwrap();
        assert_eq!(r.placements, vec![Placement::default()]);
        assert!(r.measurements.is_empty());
        let r = compose("hello", &mut stubs(), &p, &s).unwrap();
        assert_eq!(r.measurements.len(), 4);
        assert!(r.placements.windows(2).all(|w| w[1].x > w[0].x));
    }

    #[test]
    fn threshold_is_realised_with_flush_glyphs() {
        let p = HandwritingProfile::new(CharsetKind::Letters).unwrap();
        let mut s = ControllerState::default();
        s.spacing_threshold.insert(('a', 'b'), 6.0);
        let r = compose("ab", &mut stubs(), &p, &s).unwrap();
        assert_eq!(r.measurements[0].spacing, 6);
        assert_eq!(r.canvas.width(), 8 + 6 + 16);
    }

    #[test]
    fn rejects_foreign_chars() {
        let p = HandwritingProfile::new(CharsetKind::Letters).unwrap();
        let err = compose("a1", &mut stubs(), &p, &ControllerState::default()).unwrap_err();
        assert_eq!(err, ProfileError::OutOfCharset('1'));
    }

    #[test]
    fn segments_runs() {
        let mut img = GlyphImage::blank(4, 12);
        for x in [1, 2, 5, 9, 10] {
            img.set(2, x, 1.0);
        }
        assert_eq!(segment_word(&img, 3), Some(vec![(1, 2), (5, 5), (9, 10)]));
        assert_eq!(segment_word(&img, 2), None);
    }
}
