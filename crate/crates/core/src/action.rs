//! Discrete lateral and longitudinal maneuvers.

use std::fmt;
use std::str::FromStr;

/// Lateral maneuver, ordered left to right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Lateral {
    HardLeft,
    SoftLeft,
    SameLane,
    SoftRight,
    HardRight,
}

/// Longitudinal maneuver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Longitudinal {
    Accelerate,
    Cruise,
    Decelerate,
    Brake,
}

impl Lateral {
    pub const ALL: [Lateral; 5] = [
        Lateral::HardLeft,
        Lateral::SoftLeft,
        Lateral::SameLane,
        Lateral::SoftRight,
        Lateral::HardRight,
    ];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Position on the comfort scale, `-2` (hard left) to `+2` (hard right).
    pub fn ordinal(self) -> i32 {
        self.index() as i32 - 2
    }

    pub fn name(self) -> &'static str {
        match self {
            Lateral::HardLeft => "hard_left",
            Lateral::SoftLeft => "soft_left",
            Lateral::SameLane => "same_lane",
            Lateral::SoftRight => "soft_right",
            Lateral::HardRight => "hard_right",
        }
    }
}

impl Longitudinal {
    pub const ALL: [Longitudinal; 4] = [
        Longitudinal::Accelerate,
        Longitudinal::Cruise,
        Longitudinal::Decelerate,
        Longitudinal::Brake,
    ];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Position on the comfort scale: brake `-2`, decelerate `-1`,
    /// cruise `0`, accelerate `+1`.
    pub fn ordinal(self) -> i32 {
        match self {
            Longitudinal::Accelerate => 1,
            Longitudinal::Cruise => 0,
            Longitudinal::Decelerate => -1,
            Longitudinal::Brake => -2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Longitudinal::Accelerate => "accelerate",
            Longitudinal::Cruise => "cruise",
            Longitudinal::Decelerate => "decelerate",
            Longitudinal::Brake => "brake",
        }
    }
}

/// A (lateral, longitudinal) decision pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MetaAction {
    pub lateral: Lateral,
    pub longitudinal: Longitudinal,
}

/// Maneuver labels extracted from recorded data share the action encoding.
pub type ManeuverLabel = MetaAction;

impl MetaAction {
    pub const COUNT: usize = Lateral::COUNT * Longitudinal::COUNT;

    pub const IDLE: MetaAction = MetaAction {
        lateral: Lateral::SameLane,
        longitudinal: Longitudinal::Cruise,
    };

    pub fn new(lateral: Lateral, longitudinal: Longitudinal) -> Self {
        Self { lateral, longitudinal }
    }

    /// Joint index in `0..20`, lateral-major.
    pub fn index(self) -> usize {
        self.lateral.index() * Longitudinal::COUNT + self.longitudinal.index()
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Some(Self::new(
            Lateral::from_index(i / Longitudinal::COUNT)?,
            Longitudinal::from_index(i % Longitudinal::COUNT)?,
        ))
    }

    pub fn all() -> impl Iterator<Item = MetaAction> {
        (0..Self::COUNT).filter_map(Self::from_index)
    }
}

impl fmt::Display for MetaAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.lateral.name(), self.longitudinal.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown maneuver `{0}`")]
pub struct ParseActionError(pub String);

impl FromStr for Lateral {
    type Err = ParseActionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| ParseActionError(s.to_string()))
    }
}

impl FromStr for Longitudinal {
    type Err = ParseActionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| ParseActionError(s.to_string()))
    }
}

impl FromStr for MetaAction {
    type Err = ParseActionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (lat, lon) = s.split_once('/').ok_or_else(|| ParseActionError(s.to_string()))?;
        Ok(Self::new(lat.parse()?, lon.parse()?))
    }
}
