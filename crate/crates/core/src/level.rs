//! Request and service levels.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::tolerance;

/// An integer level, or `Bottom` standing for minus infinity.
///
/// `Bottom` orders below every integer. Serialized as `null` / integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Level {
    #[default]
    Bottom,
    At(i32),
}

impl Level {
    pub fn value(self) -> Option<i32> {
        match self {
            Level::Bottom => None,
            Level::At(v) => Some(v),
        }
    }

    /// Integer value with `Bottom` replaced by `floor`.
    pub fn clamp_to(self, floor: i32) -> i32 {
        match self {
            Level::Bottom => floor,
            Level::At(v) => v.max(floor),
        }
    }

    pub fn is_bottom(self) -> bool {
        matches!(self, Level::Bottom)
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Bottom => f.write_str("-inf"),
            Level::At(v) => write!(f, "{v}"),
        }
    }
}

impl Serialize for Level {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.value().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Level {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Option::<i32>::deserialize(d)?.map_or(Level::Bottom, Level::At))
    }
}

/// Level implied by a distance alone: `⌈log₂ dist⌉`, or `Bottom` at distance zero.
pub fn distance_level(dist: f64) -> Level {
    if dist <= tolerance::eps() {
        Level::Bottom
    } else {
        Level::At(tolerance::ceil_log2(dist))
    }
}

/// Adjusted level: the larger of a request's own level and its distance level.
pub fn adjusted_level(level: Level, dist_to_server: f64) -> Level {
    level.max(distance_level(dist_to_server))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bottom_is_below_everything() {
        assert!(Level::Bottom < Level::At(i32::MIN));
        assert!(Level::At(-3) < Level::At(2));
    }

    #[test]
    fn adjusted_level_examples() {
        assert_eq!(adjusted_level(Level::At(2), 5.0), Level::At(3));
        assert_eq!(adjusted_level(Level::Bottom, 8.0), Level::At(3));
        assert_eq!(adjusted_level(Level::Bottom, 0.0), Level::Bottom);
        assert_eq!(adjusted_level(Level::At(7), 5.0), Level::At(7));
    }

    #[test]
    fn serializes_as_nullable_integer() {
        assert_eq!(serde_json::to_string(&Level::Bottom).unwrap(), "null");
        assert_eq!(serde_json::to_string(&Level::At(-2)).unwrap(), "-2");
        let back: Level = serde_json::from_str("4").unwrap();
        assert_eq!(back, Level::At(4));
    }
}
