//! The 41-coordinate linear emotion space.
//!
//! Coordinates 1..=17 form the action subspace (standardized AU activations),
//! 18..=34 the per-emotion normalized AU magnitudes and 35..=41 a one-hot
//! tail whose single nonzero entry carries the origin distance.

use serde::{Deserialize, Serialize};

use crate::au::{clamp_intensity, Emotion, AU_COUNT};
use crate::fmt_real;
use crate::stats::{DatasetStats, Opt2Mode};

pub const LES_DIM: usize = 41;
pub const ISO_DIM: usize = 24;
pub const SLOT_COUNT: usize = 7;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LesError {
    #[error("statistics incomplete: {0}")]
    StatsIncomplete(String),
}

macro_rules! fixed_vector {
    ($name:ident, $n:expr) => {
        #[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
        #[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
        pub struct $name(pub [f64; $n]);

        impl $name {
            pub const LEN: usize = $n;

            pub fn zeros() -> Self {
                Self([0.0; $n])
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn from_slice(xs: &[f64]) -> Option<Self> {
                <[f64; $n]>::try_from(xs).ok().map(Self)
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|x| x.is_finite())
            }
        }

        impl From<$name> for Vec<f64> {
            fn from(v: $name) -> Vec<f64> {
                v.0.to_vec()
            }
        }

        impl TryFrom<Vec<f64>> for $name {
            type Error = String;

            fn try_from(v: Vec<f64>) -> Result<Self, String> {
                let n = v.len();
                Self::from_slice(&v).ok_or_else(|| format!("expected {} numbers, got {}", $n, n))
            }
        }

        impl std::ops::Index<usize> for $name {
            type Output = f64;
            fn index(&self, i: usize) -> &f64 {
                &self.0[i]
            }
        }

        impl std::ops::IndexMut<usize> for $name {
            fn index_mut(&mut self, i: usize) -> &mut f64 {
                &mut self.0[i]
            }
        }
    };
}

fixed_vector!(ActVector, AU_COUNT);
fixed_vector!(IsoVector, ISO_DIM);
fixed_vector!(LesVector, LES_DIM);

impl ActVector {
    pub fn add(&self, other: &ActVector) -> ActVector {
        ActVector(std::array::from_fn(|i| self.0[i] + other.0[i]))
    }

    pub fn sub(&self, other: &ActVector) -> ActVector {
        ActVector(std::array::from_fn(|i| self.0[i] - other.0[i]))
    }
}

impl IsoVector {
    /// The 17 per-AU magnitude coordinates (e18..e34).
    pub fn magnitudes(&self) -> &[f64] {
        &self.0[..AU_COUNT]
    }

    /// The 7-slot tail (e35..e41).
    pub fn tail(&self) -> &[f64] {
        &self.0[AU_COUNT..]
    }

    pub fn od(&self) -> f64 {
        origin_distance(self.magnitudes())
    }

    /// Index of the nonzero tail slot, if any. More than one nonzero slot is
    /// reported as `Err` with the offending count.
    pub fn active_slot(&self) -> Result<Option<usize>, usize> {
        let nz: Vec<usize> = (0..SLOT_COUNT).filter(|&s| self.tail()[s] != 0.0).collect();
        match nz.len() {
            0 => Ok(None),
            1 => Ok(Some(nz[0])),
            n => Err(n),
        }
    }

    pub fn scaled(&self, k: f64) -> IsoVector {
        IsoVector(self.0.map(|x| x * k))
    }

    /// Build from 17 magnitudes plus the one-hot slot carrying `od(magnitudes)`.
    pub fn with_slot(magnitudes: &[f64; AU_COUNT], emotion: Emotion) -> IsoVector {
        let mut v = [0.0; ISO_DIM];
        v[..AU_COUNT].copy_from_slice(magnitudes);
        if let Some(slot) = emotion.slot() {
            v[AU_COUNT + slot] = origin_distance(magnitudes);
        }
        IsoVector(v)
    }
}

/// Standardize raw intensities against the global per-AU mean and std.
pub fn standardize(au: &[f64; AU_COUNT], stats: &DatasetStats) -> Result<ActVector, LesError> {
    stats.check_global()?;
    Ok(ActVector(std::array::from_fn(|i| {
        (au[i] - stats.mu_d[i]) / stats.sigma_d[i]
    })))
}

/// Map an action-subspace vector back to intensities, clamped to [0, 5].
/// Returns the intensities and the zero-based AU positions that were clamped.
pub fn inverse_standardize(
    u: &ActVector,
    stats: &DatasetStats,
) -> Result<([f64; AU_COUNT], Vec<usize>), LesError> {
    stats.check_global()?;
    let mut clamped = Vec::new();
    let mut out = [0.0; AU_COUNT];
    for i in 0..AU_COUNT {
        let (v, moved) = clamp_intensity(u[i] * stats.sigma_d[i] + stats.mu_d[i]);
        if moved {
            clamped.push(i);
        }
        out[i] = v;
    }
    Ok((out, clamped))
}

/// Per-emotion magnitude normalization of raw intensities.
pub fn isolate(
    au: &[f64; AU_COUNT],
    stats: &DatasetStats,
    emotion: Emotion,
) -> Result<[f64; AU_COUNT], LesError> {
    let sigma = stats
        .sigma_emo
        .get(&emotion)
        .ok_or_else(|| LesError::StatsIncomplete(format!("no per-emotion std for `{emotion}`")))?;
    match stats.opt2_mode {
        Opt2Mode::Literal => Ok(std::array::from_fn(|j| au[j].abs() / sigma[j])),
        Opt2Mode::Centered => {
            let mu = stats
                .mu_emo
                .get(&emotion)
                .ok_or_else(|| LesError::StatsIncomplete(format!("no per-emotion mean for `{emotion}`")))?;
            Ok(std::array::from_fn(|j| (au[j] - mu[j]).abs() / sigma[j]))
        }
    }
}

/// Euclidean norm of the 17 isolation magnitudes.
pub fn origin_distance(iso17: &[f64]) -> f64 {
    iso17.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Full LES vector for one frame of a sequence labeled `emotion`.
pub fn reconstruct(
    au: &[f64; AU_COUNT],
    stats: &DatasetStats,
    emotion: Emotion,
) -> Result<LesVector, LesError> {
    let u = standardize(au, stats)?;
    let v = IsoVector::with_slot(&isolate(au, stats, emotion)?, emotion);
    Ok(compose(&u, &v))
}

pub fn decompose(w: &LesVector) -> (ActVector, IsoVector) {
    let mut u = [0.0; AU_COUNT];
    let mut v = [0.0; ISO_DIM];
    u.copy_from_slice(&w.0[..AU_COUNT]);
    v.copy_from_slice(&w.0[AU_COUNT..]);
    (ActVector(u), IsoVector(v))
}

pub fn compose(u: &ActVector, v: &IsoVector) -> LesVector {
    let mut w = [0.0; LES_DIM];
    w[..AU_COUNT].copy_from_slice(&u.0);
    w[AU_COUNT..].copy_from_slice(&v.0);
    LesVector(w)
}

/// CSV export with header `e1..e41`, one vector per row.
pub fn les_vectors_to_csv<'a>(vectors: impl IntoIterator<Item = &'a LesVector>) -> String {
    let header: Vec<String> = (1..=LES_DIM).map(|i| format!("e{i}")).collect();
    let mut out = header.join(",");
    out.push('\n');
    for w in vectors {
        let row: Vec<String> = w.0.iter().map(|&x| fmt_real(x)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
