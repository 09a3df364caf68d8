//! Pair profile of mean spacing and stroke angle, the penalty controller that
//! pulls placements toward it, and word composition.

mod compose;
mod controller;

use std::path::Path;

use thiserror::Error;

use crate::data::{CharsetKind, DataError};
use crate::gan::GanError;
use crate::metrics::{classify_pair, MetricsError, PairClass};

pub use compose::{
    compose, compose_glyphs, converge, profile_from_corpus, segment_word, CompositionResult, ConvergeOutcome,
    ConvergenceStatus, CorpusSummary, GanGlyphs, GlyphSource, IterationRecord, StubGlyphs, MAX_GAP, MAX_RISE,
};
pub use controller::{
    controller_step, objective, pair_targets, ControllerState, PairTargets, DEFAULT_ANGLE, DEFAULT_EPS_ANGLE,
    DEFAULT_EPS_SPACING, DEFAULT_ETA, DEFAULT_SPACING,
};

pub const LAYERS: usize = 2;
pub const SIDE: usize = 26;
/// Cells per table.
pub const CELLS: usize = LAYERS * SIDE * SIDE;

const MAGIC: &[u8; 8] = b"HWPROFIL";
pub const PROFILE_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 1;
const FILE_LEN: usize = HEADER_LEN + 3 * CELLS * 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("pair {0:?}{1:?} is not profiled")]
    IgnoredPair(char, char),
    #[error("no profile data for pair {0:?}{1:?}")]
    NoProfileData(char, char),
    #[error("character {0:?} is outside the charset")]
    OutOfCharset(char),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("corrupt profile: {0}")]
    Corrupt(String),
    #[error("profile version {found} (this build reads {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("I/O: {0}")]
    Io(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// `[layer][row][col]`.
pub type Table<T> = [[[T; SIDE]; SIDE]; LAYERS];

/// Cell of a pair: letters use layer 0 for upper->lower and layer 1 for
/// lower->lower; digit profiles use layer 0, rows/columns 0..10. `None` for
/// ignored letter pairs.
pub fn pair_cell(kind: CharsetKind, a: char, b: char) -> Result<Option<(usize, usize, usize)>, ProfileError> {
    match kind {
        CharsetKind::Letters => {
            let class = classify_pair(a, b).map_err(|e| match e {
                MetricsError::OutOfCharset(c) => ProfileError::OutOfCharset(c),
                other => ProfileError::Metrics(other),
            })?;
            let lower = |c: char| (c as u8 - b'a') as usize;
            Ok(match class {
                PairClass::UpperLower => Some((0, (a as u8 - b'A') as usize, lower(b))),
                PairClass::LowerLower => Some((1, lower(a), lower(b))),
                PairClass::Ignored => None,
            })
        }
        CharsetKind::Digits => {
            for c in [a, b] {
                if !c.is_ascii_digit() {
                    return Err(ProfileError::OutOfCharset(c));
                }
            }
            Ok(Some((0, (a as u8 - b'0') as usize, (b as u8 - b'0') as usize)))
        }
        CharsetKind::Custom => Err(ProfileError::InvalidConfig(
            "profiles cover the digit or letter charsets".into(),
        )),
    }
}

/// Mean statistics of one cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellStats {
    pub spacing: f64,
    pub angle: f64,
    pub count: u64,
}

/// Running means of spacing (pixels) and signed stroke angle (degrees) per
/// character pair. Empty cells hold zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct HandwritingProfile {
    kind: CharsetKind,
    pub mean_spacing: Table<f64>,
    pub mean_angle: Table<f64>,
    pub counts: Table<u64>,
}

impl HandwritingProfile {
    pub fn new(kind: CharsetKind) -> Result<Self, ProfileError> {
        if kind == CharsetKind::Custom {
            return Err(ProfileError::InvalidConfig(
                "profiles cover the digit or letter charsets".into(),
            ));
        }
        Ok(Self {
            kind,
            mean_spacing: [[[0.0; SIDE]; SIDE]; LAYERS],
            mean_angle: [[[0.0; SIDE]; SIDE]; LAYERS],
            counts: [[[0; SIDE]; SIDE]; LAYERS],
        })
    }

    pub fn kind(&self) -> CharsetKind {
        self.kind
    }

    /// Statistics for a profiled pair with at least one observation.
    pub fn cell(&self, a: char, b: char) -> Result<Option<CellStats>, ProfileError> {
        Ok(pair_cell(self.kind, a, b)?.and_then(|(l, r, c)| {
            (self.counts[l][r][c] > 0).then(|| CellStats {
                spacing: self.mean_spacing[l][r][c],
                angle: self.mean_angle[l][r][c],
                count: self.counts[l][r][c],
            })
        }))
    }

    /// Number of observed cells per layer.
    pub fn coverage(&self) -> [usize; LAYERS] {
        let mut out = [0; LAYERS];
        for (o, layer) in out.iter_mut().zip(&self.counts) {
            *o = layer.iter().flatten().filter(|&&n| n > 0).count();
        }
        out
    }

    pub fn total_observations(&self) -> u64 {
        self.counts.iter().flatten().flatten().sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FILE_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&PROFILE_VERSION.to_le_bytes());
        out.push(self.kind.tag());
        for v in self.mean_spacing.iter().chain(&self.mean_angle).flatten().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for n in self.counts.iter().flatten().flatten() {
            out.extend_from_slice(&n.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ProfileError> {
        if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
            return Err(ProfileError::Corrupt("not a profile file".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != PROFILE_VERSION {
            return Err(ProfileError::VersionMismatch {
                found: version,
                expected: PROFILE_VERSION,
            });
        }
        if bytes.len() != FILE_LEN {
            return Err(ProfileError::Corrupt(format!(
                "{} bytes (expected {FILE_LEN})",
                bytes.len()
            )));
        }
        let kind = match CharsetKind::from_tag(bytes[12]) {
            Some(k) if k != CharsetKind::Custom => k,
            _ => return Err(ProfileError::Corrupt(format!("charset tag {}", bytes[12]))),
        };
        let mut p = Self::new(kind)?;
        let mut words = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|w| <[u8; 8]>::try_from(w).unwrap());
        for v in p
            .mean_spacing
            .iter_mut()
            .chain(p.mean_angle.iter_mut())
            .flatten()
            .flatten()
        {
            *v = f64::from_le_bytes(words.next().unwrap());
        }
        for n in p.counts.iter_mut().flatten().flatten() {
            *n = u64::from_le_bytes(words.next().unwrap());
        }
        let cells = p.counts.iter().flatten().flatten();
        let means = p
            .mean_spacing
            .iter()
            .flatten()
            .flatten()
            .zip(p.mean_angle.iter().flatten().flatten());
        if cells
            .zip(means)
            .any(|(&n, (s, a))| n > 0 && !(s.is_finite() && a.is_finite()))
        {
            return Err(ProfileError::Corrupt("non-finite mean in an observed cell".into()));
        }
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<(), ProfileError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| ProfileError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, ProfileError> {
        let bytes = std::fs::read(path).map_err(|e| ProfileError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

/// Folds one observation into the pair's running means.
pub fn profile_update(
    profile: &mut HandwritingProfile,
    pair: (char, char),
    spacing: f64,
    angle: f64,
) -> Result<(), ProfileError> {
    let (l, r, c) = pair_cell(profile.kind, pair.0, pair.1)?.ok_or(ProfileError::IgnoredPair(pair.0, pair.1))?;
    if !(spacing.is_finite() && angle.is_finite()) {
        return Err(ProfileError::InvalidConfig(format!(
            "non-finite observation for {:?}{:?}",
            pair.0, pair.1
        )));
    }
    let n = profile.counts[l][r][c] as f64 + 1.0;
    profile.mean_spacing[l][r][c] += (spacing - profile.mean_spacing[l][r][c]) / n;
    profile.mean_angle[l][r][c] += (angle - profile.mean_angle[l][r][c]) / n;
    profile.counts[l][r][c] += 1;
    Ok(())
}
