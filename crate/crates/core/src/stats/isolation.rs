//! Pairwise distances between isolation-subspace vectors and the
//! `inner <= od * sqrt(2) <= outer` separation bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fmt_real;
use crate::les::IsoVector;

/// Tolerance for "equal origin distance" and for the bound comparison itself.
const OD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairKind {
    Inner,
    Outer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairDistance {
    pub distance: f64,
    pub kind: PairKind,
    pub bound_ok: bool,
}

/// Distance between two isolation vectors, classified by their one-hot slot.
///
/// The bound is only checked when both vectors have a slot and their origin
/// distances agree within 1e-9; otherwise `bound_ok` is vacuously true. A
/// vector with more than one nonzero slot is invalid and fails the bound.
pub fn pair_distance(v1: &IsoVector, v2: &IsoVector) -> PairDistance {
    let distance =
        v1.0.iter()
            .zip(v2.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
    let (s1, s2) = match (v1.active_slot(), v2.active_slot()) {
        (Ok(a), Ok(b)) => (a, b),
        _ => {
            return PairDistance {
                distance,
                kind: PairKind::Outer,
                bound_ok: false,
            }
        }
    };
    let kind = if s1 == s2 {
        PairKind::Inner
    } else {
        PairKind::Outer
    };
    let (od1, od2) = (v1.od(), v2.od());
    let comparable = s1.is_some() && s2.is_some() && (od1 - od2).abs() <= OD_TOL;
    let bound_ok = if !comparable {
        true
    } else {
        let od = 0.5 * (od1 + od2);
        let bound = od * std::f64::consts::SQRT_2;
        let tol = OD_TOL * od.max(1.0);
        match kind {
            PairKind::Inner => distance <= bound + tol,
            PairKind::Outer => distance >= bound - tol,
        }
    };
    PairDistance {
        distance,
        kind,
        bound_ok,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub i: usize,
    pub j: usize,
    pub label_i: String,
    pub label_j: String,
    pub od: f64,
    #[serde(flatten)]
    pub pair: PairDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationSurvey {
    pub pairs: usize,
    pub inner: usize,
    pub outer: usize,
    pub violations: usize,
    pub records: Vec<PairRecord>,
}

/// Sample random pairs of slotted vectors, rescale the second of each pair to
/// the first one's origin distance (scaling preserves the slot/od coupling),
/// and check the bound on every pair.
pub fn isolation_survey(vectors: &[(IsoVector, String)], pairs: usize, seed: u64) -> IsolationSurvey {
    let usable: Vec<usize> = (0..vectors.len())
        .filter(|&i| {
            let v = &vectors[i].0;
            matches!(v.active_slot(), Ok(Some(_))) && v.od() > 0.0
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(pairs);
    if usable.len() >= 2 {
        for _ in 0..pairs {
            let ia = rng.random_range(0..usable.len());
            let mut ib = rng.random_range(0..usable.len() - 1);
            if ib >= ia {
                ib += 1;
            }
            let (a, b) = (usable[ia], usable[ib]);
            let (v1, v2) = (&vectors[a].0, &vectors[b].0);
            let od = v1.od();
            let v2 = v2.scaled(od / v2.od());
            records.push(PairRecord {
                i: a,
                j: b,
                label_i: vectors[a].1.clone(),
                label_j: vectors[b].1.clone(),
                od,
                pair: pair_distance(v1, &v2),
            });
        }
    }
    IsolationSurvey {
        pairs: records.len(),
        inner: records.iter().filter(|r| r.pair.kind == PairKind::Inner).count(),
        outer: records.iter().filter(|r| r.pair.kind == PairKind::Outer).count(),
        violations: records.iter().filter(|r| !r.pair.bound_ok).count(),
        records,
    }
}

impl IsolationSurvey {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,label_i,label_j,od,distance,kind,bound_ok\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.i,
                r.j,
                r.label_i,
                r.label_j,
                fmt_real(r.od),
                fmt_real(r.pair.distance),
                match r.pair.kind {
                    PairKind::Inner => "inner",
                    PairKind::Outer => "outer",
                },
                r.pair.bound_ok
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::au::{Emotion, AU_COUNT};

    fn slotted(mags: [f64; AU_COUNT], e: Emotion) -> IsoVector {
        IsoVector::with_slot(&mags, e)
    }

    #[test]
    fn identical_vectors() {
        let mut m = [0.0; AU_COUNT];
        m[2] = 0.7;
        let v = slotted(m, Emotion::Sad);
        let p = pair_distance(&v, &v);
        assert_eq!(p.distance, 0.0);
        assert_eq!(p.kind, PairKind::Inner);
        assert!(p.bound_ok);
    }

    #[test]
    fn disjoint_one_hots_hit_equality() {
        let mut a = IsoVector::zeros();
        let mut b = IsoVector::zeros();
        a[AU_COUNT] = 1.0;
        b[AU_COUNT + 3] = 1.0;
        // od of the 17 magnitudes is 0 here, so compare with magnitudes carrying od = 1
        let p = pair_distance(&a, &b);
        assert_eq!(p.distance, std::f64::consts::SQRT_2);
        assert_eq!(p.kind, PairKind::Outer);

        let mut m1 = [0.0; AU_COUNT];
        m1[0] = 1.0;
        let mut m2 = [0.0; AU_COUNT];
        m2[0] = 1.0;
        let p = pair_distance(&slotted(m1, Emotion::Angry), &slotted(m2, Emotion::Happy));
        assert!((p.distance - std::f64::consts::SQRT_2).abs() < 1e-15);
        assert_eq!(p.kind, PairKind::Outer);
        assert!(p.bound_ok);
    }

    #[test]
    fn different_od_is_vacuous() {
        let mut m1 = [0.0; AU_COUNT];
        m1[0] = 1.0;
        let mut m2 = [0.0; AU_COUNT];
        m2[5] = 10.0;
        let p = pair_distance(&slotted(m1, Emotion::Fear), &slotted(m2, Emotion::Fear));
        assert!(p.bound_ok);
    }

    #[test]
    fn two_slots_is_invalid() {
        let mut v = IsoVector::zeros();
        v[AU_COUNT] = 1.0;
        v[AU_COUNT + 1] = 1.0;
        assert!(!pair_distance(&v, &v).bound_ok);
    }

    #[test]
    fn survey_has_no_violations() {
        let mut vs = Vec::new();
        for (k, e) in Emotion::ALL.iter().enumerate() {
            for r in 0..5 {
                let m = std::array::from_fn(|i| ((i * 7 + k * 3 + r) % 11) as f64 / 4.0);
                vs.push((slotted(m, *e), format!("{e}_{r}")));
            }
        }
        let s = isolation_survey(&vs, 500, 3);
        assert_eq!(s.pairs, 500);
        assert_eq!(s.violations, 0);
        assert!(s.inner > 0 && s.outer > 0);
        assert!(s.records.iter().all(|r| r.i != r.j));
        assert_eq!(s, isolation_survey(&vs, 500, 3));
        assert_eq!(s.to_csv().lines().count(), 501);
    }
}
