use std::sync::OnceLock;

use proptest::prelude::*;

use les_core::au::{AuFrame, AuSequence, Emotion, AU_COUNT};
use les_core::ingest::{parse_au_csv, write_au_csv};
use les_core::injector::anchor_vector;
use les_core::les::{self, ActVector, IsoVector, LesVector};
use les_core::stats::{build_feature_table, fit_stats, pair_distance, DatasetStats, FeatureTable};
use les_core::synth::{generate, SynthConfig};
use les_core::Opt2Mode;

fn fitted() -> &'static (DatasetStats, FeatureTable) {
    static CELL: OnceLock<(DatasetStats, FeatureTable)> = OnceLock::new();
    CELL.get_or_init(|| {
        let corpus = generate(&SynthConfig::default());
        let stats = fit_stats(&corpus, Opt2Mode::Literal).unwrap();
        let table = build_feature_table(&corpus, &stats).unwrap();
        (stats, table)
    })
}

fn expressive() -> impl Strategy<Value = Emotion> {
    (0usize..7).prop_map(|i| Emotion::EXPRESSIVE[i])
}

fn intensities() -> impl Strategy<Value = [f64; AU_COUNT]> {
    prop::array::uniform17(0.0f64..=5.0)
}

fn iso() -> impl Strategy<Value = IsoVector> {
    (prop::array::uniform17(0.0f64..4.0), expressive())
        .prop_filter("non-zero magnitudes", |(m, _)| m.iter().any(|&x| x > 1e-6))
        .prop_map(|(m, e)| IsoVector::with_slot(&m, e))
}

proptest! {
    #[test]
    fn compose_decompose_partition(xs in prop::collection::vec(-10.0f64..10.0, 41)) {
        let w = LesVector::from_slice(&xs).unwrap();
        let (u, v) = les::decompose(&w);
        prop_assert_eq!(&u.0[..], &xs[..17]);
        prop_assert_eq!(&v.0[..], &xs[17..]);
        prop_assert_eq!(les::compose(&u, &v), w);
    }

    #[test]
    fn reconstruction_couples_slot_and_od(au in intensities(), e in expressive()) {
        let (stats, _) = fitted();
        let (_, v) = les::decompose(&les::reconstruct(&au, stats, e).unwrap());
        prop_assert!(v.magnitudes().iter().all(|&x| x >= 0.0));
        let slot = e.slot().unwrap();
        for s in 0..7 {
            if s == slot {
                prop_assert!((v.tail()[s] - v.od()).abs() <= 1e-9);
            } else {
                prop_assert_eq!(v.tail()[s], 0.0);
            }
        }
    }

    #[test]
    fn standardization_inverts(au in intensities()) {
        let (stats, _) = fitted();
        let u = les::standardize(&au, stats).unwrap();
        let (back, clamped) = les::inverse_standardize(&u, stats).unwrap();
        prop_assert!(clamped.is_empty());
        for k in 0..AU_COUNT {
            prop_assert!((back[k] - au[k]).abs() <= 1e-12);
        }
    }

    #[test]
    fn anchors_are_piecewise_linear(e in expressive(), j in 0u8..3, t in 0.0f64..=1.0) {
        let (_, table) = fitted();
        let level = j as f64 + t;
        let got = anchor_vector(table, e, level).unwrap();
        let lo = anchor_vector(table, e, j as f64).unwrap();
        let hi = anchor_vector(table, e, (j + 1) as f64).unwrap();
        for k in 0..AU_COUNT {
            let want = lo[k] + (level - j as f64) * (hi[k] - lo[k]);
            prop_assert!((got[k] - want).abs() <= 1e-12, "k {} got {} want {}", k, got[k], want);
        }
    }

    #[test]
    fn extrapolation_continues_last_segment(e in expressive(), extra in 0.0f64..3.0) {
        let (_, table) = fitted();
        let got = anchor_vector(table, e, 3.0 + extra).unwrap();
        let (u2, u3): (&ActVector, &ActVector) = (table.get(e, 2).unwrap(), table.get(e, 3).unwrap());
        for k in 0..AU_COUNT {
            prop_assert!((got[k] - (u3[k] + extra * (u3[k] - u2[k]))).abs() <= 1e-12);
        }
    }

    #[test]
    fn csv_round_trip_is_exact(frames in prop::collection::vec(intensities(), 1..20), with_conf in any::<bool>()) {
        let mut seq = AuSequence::unlabeled(
            frames.iter().enumerate().map(|(i, au)| AuFrame::new(2 * i as u64 + 1, *au)).collect(),
            "prop",
        );
        if with_conf {
            for (i, f) in seq.frames.iter_mut().enumerate() {
                f.confidence = Some(0.9 - 0.01 * i as f64);
            }
        }
        let text = write_au_csv(&seq);
        let back = parse_au_csv(text.as_bytes(), "prop").unwrap();
        prop_assert_eq!(back.frames, seq.frames);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn isolation_bound_holds(v1 in iso(), v2 in iso()) {
        let v2 = v2.scaled(v1.od() / v2.od());
        let p = pair_distance(&v1, &v2);
        prop_assert!(p.bound_ok, "{:?}", p);
    }
}
