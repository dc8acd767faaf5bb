//! Facial action units, emotion labels and per-frame AU records.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Number of controllable action units.
pub const AU_COUNT: usize = 17;

/// Highest intensity on the OpenFace regression scale.
pub const AU_MAX: f64 = 5.0;

/// Canonical AU numbering. Every 17-vector in the crate uses this order.
pub const AU_IDS: [u8; AU_COUNT] = [1, 2, 4, 5, 6, 7, 9, 10, 12, 14, 15, 17, 20, 23, 25, 26, 45];

/// OpenFace intensity column names, in canonical order.
pub const AU_COLUMNS: [&str; AU_COUNT] = [
    "AU01_r", "AU02_r", "AU04_r", "AU05_r", "AU06_r", "AU07_r", "AU09_r", "AU10_r", "AU12_r", "AU14_r",
    "AU15_r", "AU17_r", "AU20_r", "AU23_r", "AU25_r", "AU26_r", "AU45_r",
];

pub const AU_NAMES: [&str; AU_COUNT] = [
    "Inner Brow Raiser",
    "Outer Brow Raiser",
    "Brow Lowerer",
    "Upper Lid Raiser",
    "Cheek Raiser",
    "Lid Tightener",
    "Nose Wrinkler",
    "Upper Lip Raiser",
    "Lip Corner Puller",
    "Dimpler",
    "Lip Corner Depressor",
    "Chin Raiser",
    "Lip Stretcher",
    "Lip Tightener",
    "Lips Part",
    "Jaw Drop",
    "Blink",
];

/// Zero-based canonical position of an AU given its FACS number (e.g. 12 -> 8).
pub fn position_of_au(au_id: u8) -> Option<usize> {
    AU_IDS.iter().position(|&id| id == au_id)
}

/// The eight emotion categories, in alphabetical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Angry,
    Contempt,
    Disgusted,
    Fear,
    Happy,
    Neutral,
    Sad,
    Surprised,
}

impl Emotion {
    pub const ALL: [Emotion; 8] = [
        Emotion::Angry,
        Emotion::Contempt,
        Emotion::Disgusted,
        Emotion::Fear,
        Emotion::Happy,
        Emotion::Neutral,
        Emotion::Sad,
        Emotion::Surprised,
    ];

    /// The seven emotions that own an isolation slot.
    pub const EXPRESSIVE: [Emotion; 7] = [
        Emotion::Angry,
        Emotion::Contempt,
        Emotion::Disgusted,
        Emotion::Fear,
        Emotion::Happy,
        Emotion::Sad,
        Emotion::Surprised,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Angry => "angry",
            Emotion::Contempt => "contempt",
            Emotion::Disgusted => "disgusted",
            Emotion::Fear => "fear",
            Emotion::Happy => "happy",
            Emotion::Neutral => "neutral",
            Emotion::Sad => "sad",
            Emotion::Surprised => "surprised",
        }
    }

    /// Position among the seven one-hot slots; `None` for neutral.
    pub fn slot(self) -> Option<usize> {
        Self::EXPRESSIVE.iter().position(|&e| e == self)
    }

    pub fn from_slot(slot: usize) -> Option<Emotion> {
        Self::EXPRESSIVE.get(slot).copied()
    }

    pub fn is_neutral(self) -> bool {
        self == Emotion::Neutral
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown emotion `{0}`")]
pub struct UnknownEmotionName(pub String);

impl FromStr for Emotion {
    type Err = UnknownEmotionName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Emotion::ALL
            .iter()
            .copied()
            .find(|e| e.name() == lower)
            .ok_or(UnknownEmotionName(s.to_string()))
    }
}

/// One frame of AU intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct AuFrame {
    pub frame_index: u64,
    pub au: [f64; AU_COUNT],
    pub confidence: Option<f64>,
}

impl AuFrame {
    pub fn new(frame_index: u64, au: [f64; AU_COUNT]) -> Self {
        Self {
            frame_index,
            au,
            confidence: None,
        }
    }
}

/// An ordered AU time series with optional emotion/level labels.
#[derive(Debug, Clone, PartialEq)]
pub struct AuSequence {
    pub frames: Vec<AuFrame>,
    pub emotion: Option<Emotion>,
    pub level: Option<u8>,
    pub subject_id: Option<String>,
    pub source: String,
    /// Number of intensities clamped into [0, 5] during ingestion.
    pub clamped: usize,
}

impl AuSequence {
    pub fn unlabeled(frames: Vec<AuFrame>, source: impl Into<String>) -> Self {
        Self {
            frames,
            emotion: None,
            level: None,
            subject_id: None,
            source: source.into(),
            clamped: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Label key used for anchors and per-class statistics.
    pub fn class_key(&self) -> Option<(Emotion, u8)> {
        Some((self.emotion?, self.level?))
    }
}

/// Clamp an intensity into the OpenFace range. Returns the value and whether it moved.
pub fn clamp_intensity(x: f64) -> (f64, bool) {
    let c = x.clamp(0.0, AU_MAX);
    (c, c != x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slots_skip_neutral() {
        assert_eq!(Emotion::Angry.slot(), Some(0));
        assert_eq!(Emotion::Happy.slot(), Some(4));
        assert_eq!(Emotion::Neutral.slot(), None);
        assert_eq!(Emotion::Sad.slot(), Some(5));
        assert_eq!(Emotion::Surprised.slot(), Some(6));
        for e in Emotion::EXPRESSIVE {
            assert_eq!(Emotion::from_slot(e.slot().unwrap()), Some(e));
        }
    }

    #[test]
    fn indices_are_alphabetical() {
        let mut names: Vec<_> = Emotion::ALL.iter().map(|e| e.name()).collect();
        let sorted = {
            let mut s = names.clone();
            s.sort();
            s
        };
        assert_eq!(names, sorted);
        names.dedup();
        assert_eq!(names.len(), 8);
        assert_eq!(Emotion::Neutral.index(), 5);
    }

    #[test]
    fn parse_emotion() {
        assert_eq!("Happy".parse::<Emotion>().unwrap(), Emotion::Happy);
        assert!("joyful".parse::<Emotion>().is_err());
    }

    #[test]
    fn au12_position() {
        assert_eq!(position_of_au(12), Some(8));
        assert_eq!(position_of_au(45), Some(16));
        assert_eq!(position_of_au(3), None);
        assert_eq!(AU_COLUMNS[8], "AU12_r");
    }
}
