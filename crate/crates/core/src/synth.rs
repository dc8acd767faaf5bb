//! Seeded synthetic AU corpora.
//!
//! Each expressive emotion activates a characteristic set of AUs whose
//! intensity grows with the level; neutral frames hover near rest. Frames
//! get Gaussian jitter and are clamped into the OpenFace range.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::au::{position_of_au, AuFrame, AuSequence, Emotion, AU_COUNT};
use crate::ingest::write_au_csv;

fn prototype(emotion: Emotion) -> &'static [u8] {
    match emotion {
        Emotion::Angry => &[4, 5, 7, 23],
        Emotion::Contempt => &[12, 14],
        Emotion::Disgusted => &[9, 10, 15, 17],
        Emotion::Fear => &[1, 2, 4, 5, 20, 26],
        Emotion::Happy => &[6, 12, 25],
        Emotion::Neutral => &[],
        Emotion::Sad => &[1, 4, 15, 17],
        Emotion::Surprised => &[1, 2, 5, 26],
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub seed: u64,
    pub sequences_per_class: usize,
    pub frames_per_sequence: usize,
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            sequences_per_class: 2,
            frames_per_sequence: 30,
            noise: 0.15,
        }
    }
}

/// Every label class: neutral at level 1 plus the seven emotions at levels 1..=3.
pub fn label_classes() -> Vec<(Emotion, u8)> {
    Emotion::ALL
        .iter()
        .flat_map(|&e| {
            let levels: &[u8] = if e.is_neutral() { &[1] } else { &[1, 2, 3] };
            levels.iter().map(move |&l| (e, l))
        })
        .collect()
}

fn mean_intensity(emotion: Emotion, level: u8, au_pos: usize, subject_bias: f64) -> f64 {
    let rest = 0.15 + 0.02 * au_pos as f64 + subject_bias;
    let active = prototype(emotion)
        .iter()
        .position(|&id| position_of_au(id) == Some(au_pos));
    match active {
        // later AUs in the prototype are a little weaker
        Some(rank) => rest + level as f64 * (0.9 - 0.1 * rank as f64),
        None => rest,
    }
}

pub fn generate(config: &SynthConfig) -> Vec<AuSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.noise).expect("noise std");
    let mut out = Vec::new();
    for (emotion, level) in label_classes() {
        for s in 0..config.sequences_per_class {
            let subject_bias = rng.random_range(-0.05..0.05);
            let frames = (0..config.frames_per_sequence)
                .map(|f| {
                    let au = std::array::from_fn(|k| {
                        let base = mean_intensity(emotion, level, k, subject_bias);
                        let blink = if k == AU_COUNT - 1 && rng.random_bool(0.1) {
                            2.0
                        } else {
                            0.0
                        };
                        (base + blink + noise.sample(&mut rng)).clamp(0.0, 5.0)
                    });
                    AuFrame::new(f as u64 + 1, au)
                })
                .collect();
            let mut seq = AuSequence::unlabeled(frames, format!("synthetic/{emotion}_level_{level}_{s:02}"));
            seq.emotion = Some(emotion);
            seq.level = Some(level);
            seq.subject_id = Some(format!("S{:02}", s));
            out.push(seq);
        }
    }
    out
}

/// Write each sequence as CSV plus a `manifest.jsonl` referencing them.
/// Returns the manifest path.
pub fn write_corpus(dir: &Path, corpus: &[AuSequence]) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    for (i, seq) in corpus.iter().enumerate() {
        let name = format!("seq_{i:04}.csv");
        fs::write(dir.join(&name), write_au_csv(seq))?;
        let mut line = serde_json::json!({ "path": name });
        if let Some(e) = seq.emotion {
            line["emotion"] = e.name().into();
        }
        if let Some(l) = seq.level {
            line["level"] = l.into();
        }
        if let Some(s) = &seq.subject_id {
            line["subject_id"] = s.as_str().into();
        }
        manifest.push_str(&line.to_string());
        manifest.push('\n');
    }
    let path = dir.join("manifest.jsonl");
    fs::write(&path, manifest)?;
    Ok(path)
}
