//! Emotion injection: move LES vectors toward an (emotion, level) or
//! (AU, bias) target.
//!
//! Levels between base anchors interpolate linearly, levels in (0, 1) use the
//! neutral level-0 anchor as the lower end, and levels above 3 continue the
//! last segment's direction.

use serde::{Deserialize, Serialize};

use crate::au::{AuFrame, AuSequence, Emotion, AU_COUNT};
use crate::les::{self, ActVector, IsoVector, LesError, LesVector};
use crate::stats::{DatasetStats, FeatureTable, StatsError};

#[derive(Debug, thiserror::Error)]
pub enum InjectError {
    #[error("level must be finite and non-negative, got {0}")]
    BadLevel(f64),
    #[error("AU index must be within 1..=17, got {0}")]
    BadIndex(usize),
    #[error("bias must be finite, got {0}")]
    BadBias(f64),
    #[error("prior trace has {trace} records for {frames} frames")]
    TraceMismatch { trace: usize, frames: usize },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Les(#[from] LesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InjectionTarget {
    EmotionLevel {
        emotion: Emotion,
        level: f64,
    },
    /// `au_index` is the 1-based canonical position (1..=17).
    AuBias {
        au_index: usize,
        bias: f64,
    },
}

impl InjectionTarget {
    pub fn validate(&self) -> Result<(), InjectError> {
        match *self {
            InjectionTarget::EmotionLevel { level, .. } => check_level(level),
            InjectionTarget::AuBias { au_index, bias } => {
                check_index(au_index)?;
                if !bias.is_finite() {
                    return Err(InjectError::BadBias(bias));
                }
                Ok(())
            }
        }
    }
}

fn check_level(level: f64) -> Result<(), InjectError> {
    if !level.is_finite() || level < 0.0 {
        return Err(InjectError::BadLevel(level));
    }
    Ok(())
}

fn check_index(au_index: usize) -> Result<(), InjectError> {
    if !(1..=AU_COUNT).contains(&au_index) {
        return Err(InjectError::BadIndex(au_index));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionResult {
    pub frame_index: u64,
    pub w_prime: LesVector,
    pub u_inj: ActVector,
    pub v_target: Option<IsoVector>,
    /// Zero-based AU positions clamped after mapping back to intensities.
    pub clamp_report: Vec<usize>,
}

/// Piecewise-linear interpolation over anchors at levels 0..=3. Integer
/// levels return the anchor itself.
fn piecewise<T>(
    level: f64,
    at: impl Fn(u8) -> Result<T, InjectError>,
    lerp: impl Fn(&T, &T, f64) -> T,
) -> Result<T, InjectError> {
    debug_assert!((0.0..=3.0).contains(&level));
    let j = level.floor();
    let i = level.ceil();
    if i == j {
        return at(j as u8);
    }
    let (lo, hi) = (at(j as u8)?, at(i as u8)?);
    Ok(lerp(&lo, &hi, level - j))
}

fn lerp_act(lo: &ActVector, hi: &ActVector, t: f64) -> ActVector {
    ActVector(std::array::from_fn(|k| (hi[k] - lo[k]) * t + lo[k]))
}

/// Action-subspace anchor for a continuous level.
pub fn anchor_vector(table: &FeatureTable, emotion: Emotion, level: f64) -> Result<ActVector, InjectError> {
    check_level(level)?;
    if emotion.is_neutral() {
        return Ok(*table.neutral()?);
    }
    let at = |k: u8| -> Result<ActVector, InjectError> {
        Ok(if k == 0 {
            *table.neutral()?
        } else {
            *table.get(emotion, k)?
        })
    };
    if level > 3.0 {
        let (lo, hi) = (at(2)?, at(3)?);
        let ex = level - 3.0;
        return Ok(ActVector(std::array::from_fn(|k| hi[k] + ex * (hi[k] - lo[k]))));
    }
    piecewise(level, at, lerp_act)
}

/// Returns `(u', u_inj)`. Level 0 leaves `u` untouched.
pub fn inject_emotion(
    u: &ActVector,
    table: &FeatureTable,
    emotion: Emotion,
    level: f64,
) -> Result<(ActVector, ActVector), InjectError> {
    check_level(level)?;
    if level == 0.0 {
        return Ok((*u, ActVector::zeros()));
    }
    let u_inj = anchor_vector(table, emotion, level)?.sub(table.neutral()?);
    Ok((u.add(&u_inj), u_inj))
}

/// Add `bias` to one action-subspace coordinate (`au_index` is 1-based).
pub fn inject_au_bias(u: &ActVector, au_index: usize, bias: f64) -> Result<ActVector, InjectError> {
    check_index(au_index)?;
    let mut out = *u;
    out[au_index - 1] += bias;
    Ok(out)
}

/// Synthetic isolation target: zero magnitudes, with the emotion's slot
/// carrying the mean origin distance interpolated over levels.
pub fn build_v_target(stats: &DatasetStats, emotion: Emotion, level: f64) -> Result<IsoVector, InjectError> {
    check_level(level)?;
    let Some(slot) = emotion.slot() else {
        return Ok(IsoVector::zeros());
    };
    let at = |k: u8| -> Result<f64, InjectError> {
        if k == 0 {
            return Ok(0.0);
        }
        stats
            .mean_od(emotion, k)
            .ok_or(InjectError::Stats(StatsError::MissingAnchor(emotion, k)))
    };
    let od = if level > 3.0 {
        let (lo, hi) = (at(2)?, at(3)?);
        hi + (level - 3.0) * (hi - lo)
    } else {
        piecewise(level, at, |lo, hi, t| (hi - lo) * t + lo)?
    };
    let mut v = IsoVector::zeros();
    v[AU_COUNT + slot] = od;
    Ok(v)
}

/// Inject into every frame of a sequence.
///
/// Frames are reconstructed under the sequence's own emotion label (neutral
/// when unlabeled). For an emotion target the action part is shifted and the
/// isolation part replaced by the synthetic target; AU-bias targets leave the
/// isolation part alone. The edited action part is mapped back to clamped
/// intensities.
pub fn inject_sequence(
    seq: &AuSequence,
    stats: &DatasetStats,
    table: &FeatureTable,
    target: &InjectionTarget,
) -> Result<(AuSequence, Vec<InjectionResult>), InjectError> {
    target.validate()?;
    let source_emotion = seq.emotion.unwrap_or(Emotion::Neutral);
    let v_target = match *target {
        InjectionTarget::EmotionLevel { emotion, level } if level > 0.0 => {
            Some(build_v_target(stats, emotion, level)?)
        }
        _ => None,
    };
    // the action-subspace delta is the same for every frame
    let delta = match *target {
        InjectionTarget::EmotionLevel { emotion, level } => {
            inject_emotion(&ActVector::zeros(), table, emotion, level)?.1
        }
        InjectionTarget::AuBias { au_index, bias } => inject_au_bias(&ActVector::zeros(), au_index, bias)?,
    };
    apply_per_frame(seq, stats, source_emotion, |_, u| {
        let u_prime = match *target {
            InjectionTarget::EmotionLevel { emotion, level } => inject_emotion(u, table, emotion, level)?.0,
            InjectionTarget::AuBias { au_index, bias } => inject_au_bias(u, au_index, bias)?,
        };
        Ok((u_prime, delta, v_target))
    })
}

/// Re-apply the per-frame deltas and isolation targets of a previously
/// exported trace (one record per frame, in order).
pub fn replay_trace(
    seq: &AuSequence,
    stats: &DatasetStats,
    prior: &[InjectionResult],
) -> Result<(AuSequence, Vec<InjectionResult>), InjectError> {
    if prior.len() != seq.len() {
        return Err(InjectError::TraceMismatch {
            trace: prior.len(),
            frames: seq.len(),
        });
    }
    let source_emotion = seq.emotion.unwrap_or(Emotion::Neutral);
    apply_per_frame(seq, stats, source_emotion, |i, u| {
        let rec = &prior[i];
        Ok((u.add(&rec.u_inj), rec.u_inj, rec.v_target))
    })
}

type FrameEdit = (ActVector, ActVector, Option<IsoVector>);

fn apply_per_frame(
    seq: &AuSequence,
    stats: &DatasetStats,
    source_emotion: Emotion,
    edit: impl Fn(usize, &ActVector) -> Result<FrameEdit, InjectError>,
) -> Result<(AuSequence, Vec<InjectionResult>), InjectError> {
    let mut frames = Vec::with_capacity(seq.len());
    let mut results = Vec::with_capacity(seq.len());
    for (i, frame) in seq.frames.iter().enumerate() {
        let w = les::reconstruct(&frame.au, stats, source_emotion)?;
        let (u, v) = les::decompose(&w);
        let (u_prime, u_inj, v_target) = edit(i, &u)?;
        let v_prime = v_target.unwrap_or(v);
        let (au, clamp_report) = les::inverse_standardize(&u_prime, stats)?;
        frames.push(AuFrame {
            frame_index: frame.frame_index,
            au,
            confidence: frame.confidence,
        });
        results.push(InjectionResult {
            frame_index: frame.frame_index,
            w_prime: les::compose(&u_prime, &v_prime),
            u_inj,
            v_target,
            clamp_report,
        });
    }
    let mut out = seq.clone();
    out.frames = frames;
    out.clamped = results.iter().map(|r| r.clamp_report.len()).sum();
    Ok((out, results))
}

/// JSON-lines trace, one record per frame.
pub fn trace_to_jsonl(results: &[InjectionResult]) -> String {
    let mut out = String::new();
    for r in results {
        out.push_str(&serde_json::to_string(r).expect("trace serialize"));
        out.push('\n');
    }
    out
}

pub fn trace_from_jsonl(text: &str) -> Result<Vec<InjectionResult>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ClassStats, FeatureEntry};

    fn fixture_table() -> FeatureTable {
        FeatureTable::from_entries(
            FeatureTable::required_keys()
                .into_iter()
                .map(|(emotion, level)| FeatureEntry {
                    emotion,
                    level,
                    frame_count: 5,
                    uf: ActVector(std::array::from_fn(|i| {
                        if emotion.is_neutral() {
                            0.1 * i as f64 - 0.4
                        } else {
                            (emotion.index() as f64 + 1.0) * level as f64 * level as f64 * 0.05
                                + 0.01 * i as f64
                        }
                    })),
                })
                .collect(),
        )
    }

    fn fixture_stats() -> DatasetStats {
        let mut s = DatasetStats::from_moments([1.0; AU_COUNT], [0.5; AU_COUNT]);
        for e in Emotion::ALL {
            s.sigma_emo.insert(e, [0.8; AU_COUNT]);
            if !e.is_neutral() {
                for (level, od) in [(1u8, 1.0), (2, 1.8), (3, 3.0)] {
                    s.classes.push(ClassStats {
                        emotion: e,
                        level,
                        frame_count: 10,
                        mean_od: od,
                    });
                }
            }
        }
        s
    }

    #[test]
    fn integer_and_midpoint_anchors() {
        let t = fixture_table();
        let h = Emotion::Happy;
        assert_eq!(anchor_vector(&t, h, 2.0).unwrap(), *t.get(h, 2).unwrap());
        let mid = anchor_vector(&t, h, 1.5).unwrap();
        let (a, b) = (t.get(h, 1).unwrap(), t.get(h, 2).unwrap());
        for k in 0..AU_COUNT {
            assert!((mid[k] - 0.5 * (a[k] + b[k])).abs() < 1e-15);
        }
    }

    #[test]
    fn extrapolation_past_three() {
        let t = fixture_table();
        let h = Emotion::Happy;
        let got = anchor_vector(&t, h, 3.5).unwrap();
        let (u2, u3) = (t.get(h, 2).unwrap(), t.get(h, 3).unwrap());
        for k in 0..AU_COUNT {
            assert!((got[k] - (u3[k] + 0.5 * (u3[k] - u2[k]))).abs() < 1e-15);
        }
    }

    #[test]
    fn fractional_below_one_uses_neutral() {
        let t = fixture_table();
        let got = anchor_vector(&t, Emotion::Sad, 0.25).unwrap();
        let (n0, s1) = (t.neutral().unwrap(), t.get(Emotion::Sad, 1).unwrap());
        for k in 0..AU_COUNT {
            assert!((got[k] - (0.75 * n0[k] + 0.25 * s1[k])).abs() < 1e-15);
        }
        assert_eq!(anchor_vector(&t, Emotion::Neutral, 2.7).unwrap(), *n0);
        assert!(anchor_vector(&t, Emotion::Sad, -0.5).is_err());
    }

    #[test]
    fn missing_anchor_surfaces() {
        let mut t = fixture_table();
        t.entries
            .retain(|e| !(e.emotion == Emotion::Fear && e.level == 2));
        assert!(matches!(
            anchor_vector(&t, Emotion::Fear, 1.5),
            Err(InjectError::Stats(StatsError::MissingAnchor(Emotion::Fear, 2)))
        ));
        assert!(anchor_vector(&t, Emotion::Fear, 0.5).is_ok());
    }

    #[test]
    fn level_zero_is_identity() {
        let t = fixture_table();
        let u = ActVector(std::array::from_fn(|i| i as f64 * 0.37 - 2.0));
        let (up, inj) = inject_emotion(&u, &t, Emotion::Angry, 0.0).unwrap();
        assert_eq!(up, u);
        assert_eq!(inj, ActVector::zeros());
    }

    #[test]
    fn telescopes_from_neutral() {
        let t = fixture_table();
        let n0 = *t.neutral().unwrap();
        for k in 1..=3u8 {
            let (up, _) = inject_emotion(&n0, &t, Emotion::Disgusted, k as f64).unwrap();
            let want = t.get(Emotion::Disgusted, k).unwrap();
            for i in 0..AU_COUNT {
                assert!((up[i] - want[i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn injection_does_not_compose() {
        // anchors grow quadratically in the fixture, so two level-1 steps
        // land short of one level-2 step: 2*(uf1 - n0) != uf2 - n0
        let t = fixture_table();
        let u = *t.neutral().unwrap();
        let e = Emotion::Contempt;
        let (once, _) = inject_emotion(&u, &t, e, 1.0).unwrap();
        let (twice, _) = inject_emotion(&once, &t, e, 1.0).unwrap();
        let (direct, _) = inject_emotion(&u, &t, e, 2.0).unwrap();
        let (n0, u1, u2) = (t.neutral().unwrap(), t.get(e, 1).unwrap(), t.get(e, 2).unwrap());
        for i in 0..AU_COUNT {
            assert!((twice[i] - (n0[i] + 2.0 * (u1[i] - n0[i]))).abs() < 1e-14);
            assert!((direct[i] - u2[i]).abs() < 1e-14);
        }
        assert!((0..AU_COUNT).any(|i| (twice[i] - direct[i]).abs() > 1e-3));
    }

    #[test]
    fn au_bias_cases() {
        let u = ActVector::zeros();
        assert_eq!(inject_au_bias(&u, 3, 0.0).unwrap(), u);
        let up = inject_au_bias(&u, 9, 2.5).unwrap();
        assert_eq!(up[8], 2.5);
        assert_eq!(up.0.iter().filter(|&&x| x != 0.0).count(), 1);
        assert_eq!(inject_au_bias(&up, 9, -2.5).unwrap(), u);
        assert!(matches!(
            inject_au_bias(&u, 0, 1.0),
            Err(InjectError::BadIndex(0))
        ));
        assert!(matches!(
            inject_au_bias(&u, 18, 1.0),
            Err(InjectError::BadIndex(18))
        ));
    }

    #[test]
    fn v_target_levels() {
        let s = fixture_stats();
        let slot = AU_COUNT + Emotion::Sad.slot().unwrap();
        assert_eq!(build_v_target(&s, Emotion::Sad, 0.0).unwrap(), IsoVector::zeros());
        assert_eq!(build_v_target(&s, Emotion::Sad, 2.0).unwrap()[slot], 1.8);
        assert!((build_v_target(&s, Emotion::Sad, 1.5).unwrap()[slot] - 1.4).abs() < 1e-15);
        assert!((build_v_target(&s, Emotion::Sad, 0.5).unwrap()[slot] - 0.5).abs() < 1e-15);
        assert!((build_v_target(&s, Emotion::Sad, 3.5).unwrap()[slot] - 3.6).abs() < 1e-15);
        assert_eq!(
            build_v_target(&s, Emotion::Neutral, 2.0).unwrap(),
            IsoVector::zeros()
        );
        let v = build_v_target(&s, Emotion::Sad, 2.5).unwrap();
        assert!(v.magnitudes().iter().all(|&x| x == 0.0));
        assert_eq!(v.active_slot(), Ok(Some(Emotion::Sad.slot().unwrap())));
    }

    fn seq_of(n: usize) -> AuSequence {
        AuSequence::unlabeled(
            (0..n)
                .map(|i| {
                    AuFrame::new(
                        10 + 2 * i as u64,
                        std::array::from_fn(|k| ((i + k) % 9) as f64 * 0.25),
                    )
                })
                .collect(),
            "fixture",
        )
    }

    #[test]
    fn sequence_identity_at_level_zero() {
        let (s, t) = (fixture_stats(), fixture_table());
        let seq = seq_of(100);
        let target = InjectionTarget::EmotionLevel {
            emotion: Emotion::Happy,
            level: 0.0,
        };
        let (out, trace) = inject_sequence(&seq, &s, &t, &target).unwrap();
        assert_eq!(out.len(), 100);
        assert_eq!(trace.len(), 100);
        for (a, b) in seq.frames.iter().zip(&out.frames) {
            assert_eq!(a.frame_index, b.frame_index);
            for k in 0..AU_COUNT {
                assert!((a.au[k] - b.au[k]).abs() < 1e-9);
            }
        }
        assert!(trace.iter().all(|r| r.v_target.is_none()));
    }

    #[test]
    fn sequence_au_bias_pushes_through_inverse() {
        let (s, t) = (fixture_stats(), fixture_table());
        let seq = seq_of(20);
        let target = InjectionTarget::AuBias {
            au_index: 9,
            bias: 2.5,
        };
        let (out, trace) = inject_sequence(&seq, &s, &t, &target).unwrap();
        for ((a, b), r) in seq.frames.iter().zip(&out.frames).zip(&trace) {
            let want = (a.au[8] + 2.5 * s.sigma_d[8]).clamp(0.0, 5.0);
            assert!((b.au[8] - want).abs() < 1e-12);
            for k in (0..AU_COUNT).filter(|&k| k != 8) {
                assert!((a.au[k] - b.au[k]).abs() < 1e-12);
            }
            assert_eq!(r.clamp_report.contains(&8), a.au[8] + 2.5 * s.sigma_d[8] > 5.0);
        }
    }

    #[test]
    fn sequence_emotion_sets_isolation_target() {
        let (s, t) = (fixture_stats(), fixture_table());
        let seq = seq_of(5);
        let target = InjectionTarget::EmotionLevel {
            emotion: Emotion::Sad,
            level: 3.5,
        };
        let (_, trace) = inject_sequence(&seq, &s, &t, &target).unwrap();
        let slot = AU_COUNT + AU_COUNT + Emotion::Sad.slot().unwrap();
        for r in &trace {
            assert!((r.w_prime[slot] - 3.6).abs() < 1e-15);
        }
        let replayed = replay_trace(&seq, &s, &trace).unwrap();
        assert_eq!(replayed.1, trace);
        let text = trace_to_jsonl(&trace);
        assert_eq!(trace_from_jsonl(&text).unwrap(), trace);
        assert!(replay_trace(&seq_of(4), &s, &trace).is_err());
    }
}
