use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// Seven-class expression scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EmotionLabel7 {
    Happy = 0,
    Sad = 1,
    Angry = 2,
    Surprised = 3,
    Disgust = 4,
    Fear = 5,
    Neutral = 6,
}

/// Three-class valence scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EmotionLabel3 {
    Positive = 0,
    Negative = 1,
    Neutral = 2,
}

impl EmotionLabel7 {
    pub const COUNT: usize = 7;
    pub const ALL: [EmotionLabel7; 7] = [
        EmotionLabel7::Happy,
        EmotionLabel7::Sad,
        EmotionLabel7::Angry,
        EmotionLabel7::Surprised,
        EmotionLabel7::Disgust,
        EmotionLabel7::Fear,
        EmotionLabel7::Neutral,
    ];

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::invalid(format!("emotion label {i} outside [0, 7)")))
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            EmotionLabel7::Happy => "happy",
            EmotionLabel7::Sad => "sad",
            EmotionLabel7::Angry => "angry",
            EmotionLabel7::Surprised => "surprised",
            EmotionLabel7::Disgust => "disgust",
            EmotionLabel7::Fear => "fear",
            EmotionLabel7::Neutral => "neutral",
        }
    }
}

impl EmotionLabel3 {
    pub const COUNT: usize = 3;
    pub const ALL: [EmotionLabel3; 3] = [
        EmotionLabel3::Positive,
        EmotionLabel3::Negative,
        EmotionLabel3::Neutral,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            EmotionLabel3::Positive => "positive",
            EmotionLabel3::Negative => "negative",
            EmotionLabel3::Neutral => "neutral",
        }
    }
}

/// Convention for collapsing seven classes into three. Only `surprised` is
/// ambiguous; everything else is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelMap3 {
    #[default]
    SurprisedPositive,
    SurprisedNegative,
}

impl LabelMap3 {
    pub fn remap(self, label: EmotionLabel7) -> EmotionLabel3 {
        use EmotionLabel3 as L3;
        use EmotionLabel7 as L7;
        match label {
            L7::Happy => L3::Positive,
            L7::Surprised => match self {
                LabelMap3::SurprisedPositive => L3::Positive,
                LabelMap3::SurprisedNegative => L3::Negative,
            },
            L7::Sad | L7::Angry | L7::Disgust | L7::Fear => L3::Negative,
            L7::Neutral => L3::Neutral,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LabelMap3::SurprisedPositive => "surprised_positive",
            LabelMap3::SurprisedNegative => "surprised_negative",
        }
    }
}

impl fmt::Display for LabelMap3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LabelMap3 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "surprised_positive" => Ok(LabelMap3::SurprisedPositive),
            "surprised_negative" => Ok(LabelMap3::SurprisedNegative),
            other => Err(Error::invalid(format!(
                "unknown label map `{other}` (expected surprised_positive or surprised_negative)"
            ))),
        }
    }
}

/// Default seven-to-three collapse (`surprised` counts as positive).
pub fn remap_7_to_3(label: EmotionLabel7) -> EmotionLabel3 {
    LabelMap3::default().remap(label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn fixed_points_of_the_mapping() {
        assert_eq!(remap_7_to_3(EmotionLabel7::Neutral), EmotionLabel3::Neutral);
        assert_eq!(remap_7_to_3(EmotionLabel7::Happy), EmotionLabel3::Positive);
        assert_eq!(
            remap_7_to_3(EmotionLabel7::Surprised),
            EmotionLabel3::Positive
        );
        assert_eq!(
            LabelMap3::SurprisedNegative.remap(EmotionLabel7::Surprised),
            EmotionLabel3::Negative
        );
    }

    #[test]
    fn mapping_is_surjective_for_both_conventions() {
        for map in [LabelMap3::SurprisedPositive, LabelMap3::SurprisedNegative] {
            let image: HashSet<_> = EmotionLabel7::ALL.iter().map(|&l| map.remap(l)).collect();
            assert_eq!(image.len(), 3);
        }
    }

    #[test]
    fn index_round_trip_and_range() {
        for (i, l) in EmotionLabel7::ALL.iter().enumerate() {
            assert_eq!(l.index(), i);
            assert_eq!(EmotionLabel7::from_index(i).unwrap(), *l);
        }
        assert!(EmotionLabel7::from_index(7).is_err());
    }

    #[test]
    fn label_map_parses() {
        for m in [LabelMap3::SurprisedPositive, LabelMap3::SurprisedNegative] {
            assert_eq!(m.name().parse::<LabelMap3>().unwrap(), m);
        }
        assert!("x".parse::<LabelMap3>().is_err());
    }
}
