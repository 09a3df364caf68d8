use std::collections::BTreeMap;

use super::{HandwritingProfile, ProfileError};

pub const DEFAULT_ETA: f64 = 0.5;
pub const DEFAULT_EPS_SPACING: f64 = 0.5;
pub const DEFAULT_EPS_ANGLE: f64 = 2.0;
/// Target spacing (pixels) for ignored or unobserved pairs outside strict mode.
pub const DEFAULT_SPACING: f64 = 4.0;
pub const DEFAULT_ANGLE: f64 = 0.0;

/// Largest vertical step (pixels) the controller will ask for.
const OFFSET_LIMIT: f64 = 64.0;
const THRESHOLD_LIMIT: f64 = 256.0;

/// |measured − mean|.
pub fn objective(measured: f64, mean: f64) -> f64 {
    (measured - mean).abs()
}

/// What a pair is steered toward.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairTargets {
    pub spacing: f64,
    pub angle: f64,
}

impl PairTargets {
    /// Vertical step (pixels, positive = up) that puts the next glyph along
    /// the target stroke direction.
    pub fn rise(&self) -> f64 {
        self.angle.to_radians().tan() * (self.spacing + 1.0).max(1.0)
    }
}

/// Profile means for the pair; ignored and unobserved pairs fall back to the
/// defaults unless `strict`.
pub fn pair_targets(
    profile: &HandwritingProfile,
    pair: (char, char),
    strict: bool,
) -> Result<PairTargets, ProfileError> {
    match profile.cell(pair.0, pair.1)? {
        Some(c) => Ok(PairTargets {
            spacing: c.spacing,
            angle: c.angle,
        }),
        None if strict => Err(ProfileError::NoProfileData(pair.0, pair.1)),
        None => Ok(PairTargets {
            spacing: DEFAULT_SPACING,
            angle: DEFAULT_ANGLE,
        }),
    }
}

/// Per-pair placement targets and the controller's constants. Pairs without
/// an entry start from their profile targets.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerState {
    pub spacing_threshold: BTreeMap<(char, char), f64>,
    /// Vertical step in pixels, positive = the next glyph sits higher.
    pub angle_offset: BTreeMap<(char, char), f64>,
    pub eta: f64,
    pub eps_spacing: f64,
    pub eps_angle: f64,
    /// Fail with `NoProfileData` instead of using defaults.
    pub strict: bool,
    pub iterations: usize,
}

impl Default for ControllerState {
    fn default() -> Self {
        Self {
            spacing_threshold: BTreeMap::new(),
            angle_offset: BTreeMap::new(),
            eta: DEFAULT_ETA,
            eps_spacing: DEFAULT_EPS_SPACING,
            eps_angle: DEFAULT_EPS_ANGLE,
            strict: false,
            iterations: 0,
        }
    }
}

impl ControllerState {
    pub fn new(eta: f64, eps_spacing: f64, eps_angle: f64) -> Result<Self, ProfileError> {
        let s = Self {
            eta,
            eps_spacing,
            eps_angle,
            ..Self::default()
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !(pos(self.eta) && pos(self.eps_spacing) && pos(self.eps_angle)) {
            return Err(ProfileError::InvalidConfig(
                "step size and tolerances must be positive".into(),
            ));
        }
        if self
            .spacing_threshold
            .values()
            .chain(self.angle_offset.values())
            .any(|v| !v.is_finite())
        {
            return Err(ProfileError::InvalidConfig("non-finite threshold".into()));
        }
        Ok(())
    }

    pub fn threshold(&self, pair: (char, char), profile: &HandwritingProfile) -> Result<f64, ProfileError> {
        match self.spacing_threshold.get(&pair) {
            Some(&t) => Ok(t),
            None => Ok(pair_targets(profile, pair, self.strict)?.spacing),
        }
    }

    pub fn offset(&self, pair: (char, char), profile: &HandwritingProfile) -> Result<f64, ProfileError> {
        match self.angle_offset.get(&pair) {
            Some(&o) => Ok(o),
            None => Ok(pair_targets(profile, pair, self.strict)?
                .rise()
                .clamp(-OFFSET_LIMIT, OFFSET_LIMIT)),
        }
    }
}

/// Proportional correction of one pair's threshold and vertical step:
/// `t ← t − η(measured − mean)`, and the step moves by η times the tangent
/// error scaled to the target run. Identity when both measurements equal the
/// targets.
pub fn controller_step(
    state: &mut ControllerState,
    pair: (char, char),
    measured_spacing: f64,
    measured_angle: f64,
    profile: &HandwritingProfile,
) -> Result<(), ProfileError> {
    let target = pair_targets(profile, pair, state.strict)?;
    let t = state.threshold(pair, profile)?;
    let o = state.offset(pair, profile)?;
    let t = if measured_spacing == target.spacing {
        t
    } else {
        (t - state.eta * (measured_spacing - target.spacing)).clamp(-THRESHOLD_LIMIT, THRESHOLD_LIMIT)
    };
    let o = if measured_angle == target.angle {
        o
    } else {
        let dtan = measured_angle.to_radians().tan() - target.angle.to_radians().tan();
        (o - state.eta * dtan * (target.spacing + 1.0).max(1.0)).clamp(-OFFSET_LIMIT, OFFSET_LIMIT)
    };
    state.spacing_threshold.insert(pair, t);
    state.angle_offset.insert(pair, o);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CharsetKind;
    use crate::profile::profile_update;

    #[test]
    fn step_examples() {
        let mut p = HandwritingProfile::new(CharsetKind::Letters).unwrap();
        profile_update(&mut p, ('a', 'b'), 10.0, 0.0).unwrap();
        let mut s = ControllerState::default();
        s.spacing_threshold.insert(('a', 'b'), 12.0);
        controller_step(&mut s, ('a', 'b'), 14.0, 0.0, &p).unwrap();
        assert_eq!(s.spacing_threshold[&('a', 'b')], 10.0);
        let before = s.clone();
        controller_step(&mut s, ('a', 'b'), 10.0, 0.0, &p).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn objective_examples() {
        assert_eq!(objective(12.0, 10.0), 2.0);
        assert_eq!(objective(8.0, 10.0), objective(12.0, 10.0));
        assert_eq!(objective(3.5, 3.5), 0.0);
    }

    #[test]
    fn strict_mode_and_validation() {
        let p = HandwritingProfile::new(CharsetKind::Letters).unwrap();
        let mut s = ControllerState {
            strict: true,
            ..ControllerState::default()
        };
        assert_eq!(
            controller_step(&mut s, ('a', 'b'), 1.0, 0.0, &p),
            Err(ProfileError::NoProfileData('a', 'b'))
        );
        s.strict = false;
        assert_eq!(s.threshold(('F', 'F'), &p).unwrap(), DEFAULT_SPACING);
        assert!(ControllerState::new(0.0, 0.5, 2.0).is_err());
        assert!(ControllerState::new(0.5, 0.5, 2.0).is_ok());
    }
}
