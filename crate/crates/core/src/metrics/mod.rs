//! Glyph geometry: ink bounding boxes, inter-glyph spacing, stroke angles
//! between neighbouring glyphs, and letter-pair classes.

use thiserror::Error;

use crate::data::GlyphImage;

pub const INK_THRESHOLD: f32 = 0.5;
/// Fraction of the ink-box width used for the edge bands of the angle estimator.
pub const EDGE_BAND: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("image has no pixel above the ink threshold")]
    BlankImage,
    #[error("the {0} edge band has no ink")]
    BlankBand(&'static str),
    #[error("{0:?} is not a letter")]
    OutOfCharset(char),
}

/// Tightest box around pixels above the ink threshold (inclusive bounds).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InkBox {
    pub left: usize,
    pub right: usize,
    pub top: usize,
    pub bottom: usize,
    pub ink_count: usize,
}

impl InkBox {
    pub fn width(&self) -> usize {
        self.right - self.left + 1
    }

    pub fn height(&self) -> usize {
        self.bottom - self.top + 1
    }
}

pub fn ink_box(image: &GlyphImage, threshold: f32) -> Result<InkBox, MetricsError> {
    let mut b: Option<InkBox> = None;
    for y in 0..image.height() {
        for x in 0..image.width() {
            if image.get(y, x) <= threshold {
                continue;
            }
            b = Some(match b {
                None => InkBox {
                    left: x,
                    right: x,
                    top: y,
                    bottom: y,
                    ink_count: 1,
                },
                Some(b) => InkBox {
                    left: b.left.min(x),
                    right: b.right.max(x),
                    top: b.top,
                    bottom: y,
                    ink_count: b.ink_count + 1,
                },
            });
        }
    }
    b.ok_or(MetricsError::BlankImage)
}

/// Offset of the right glyph's image origin from the left glyph's, in canvas
/// pixels (y grows downward).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Placement {
    pub x: i64,
    pub y: i64,
}

/// Empty columns between the left glyph's last ink column and the right
/// glyph's first, with the right glyph shifted `dx` columns. Negative when
/// the boxes overlap.
pub fn measure_spacing(left: &GlyphImage, right: &GlyphImage, dx: i64) -> Result<i64, MetricsError> {
    let l = ink_box(left, INK_THRESHOLD)?;
    let r = ink_box(right, INK_THRESHOLD)?;
    Ok(dx + r.left as i64 - l.right as i64 - 1)
}

/// Intensity-weighted centroid `(x, y)` of ink pixels in columns `[x0, x1]`.
fn band_centroid(image: &GlyphImage, x0: usize, x1: usize) -> Option<(f64, f64)> {
    let (mut w, mut sx, mut sy) = (0.0f64, 0.0f64, 0.0f64);
    for y in 0..image.height() {
        for x in x0..=x1 {
            let v = image.get(y, x);
            if v > INK_THRESHOLD {
                w += v as f64;
                sx += v as f64 * x as f64;
                sy += v as f64 * y as f64;
            }
        }
    }
    (w > 0.0).then(|| (sx / w, sy / w))
}

fn band_width(b: &InkBox) -> usize {
    ((b.width() as f64 * EDGE_BAND).ceil() as usize).max(1)
}

/// Signed angle in degrees of the line from the ink centroid of the left
/// glyph's rightmost band to that of the right glyph's leftmost band;
/// positive when the stroke rises. The horizontal run is floored at one
/// pixel so overlapping glyphs still give an angle in (-90, 90).
pub fn measure_stroke_angle(left: &GlyphImage, right: &GlyphImage, placement: Placement) -> Result<f64, MetricsError> {
    let lb = ink_box(left, INK_THRESHOLD)?;
    let rb = ink_box(right, INK_THRESHOLD)?;
    let (lx, ly) =
        band_centroid(left, lb.right + 1 - band_width(&lb), lb.right).ok_or(MetricsError::BlankBand("left"))?;
    let (rx, ry) =
        band_centroid(right, rb.left, rb.left + band_width(&rb) - 1).ok_or(MetricsError::BlankBand("right"))?;
    let (rx, ry) = (rx + placement.x as f64, ry + placement.y as f64);
    Ok((ly - ry).atan2((rx - lx).max(1.0)).to_degrees())
}

/// A measured adjacent pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairMeasurement {
    pub pair: (char, char),
    pub spacing: i64,
    pub angle: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PairClass {
    UpperLower,
    LowerLower,
    Ignored,
}

/// Uppercase then lowercase, lowercase then lowercase, or neither.
pub fn classify_pair(first: char, second: char) -> Result<PairClass, MetricsError> {
    for c in [first, second] {
        if !c.is_ascii_alphabetic() {
            return Err(MetricsError::OutOfCharset(c));
        }
    }
    Ok(match (first.is_ascii_uppercase(), second.is_ascii_lowercase()) {
        (true, true) => PairClass::UpperLower,
        (false, true) => PairClass::LowerLower,
        _ => PairClass::Ignored,
    })
}
