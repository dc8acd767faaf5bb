//! Dataset statistics, the anchor feature table and diagnostics over them.

mod cluster;
mod isolation;
mod outlier;

pub use cluster::{
    cluster, gmm, kmeans, silhouette, ClusterMethod, ClusterReport, GmmRun, KMeansRun, TopLabel,
};
pub use isolation::{isolation_survey, pair_distance, IsolationSurvey, PairDistance, PairKind, PairRecord};
pub use outlier::{
    confidence_for_z, outlier_matrix, outlier_threshold, z_for_confidence, OutlierCell, OutlierMatrix,
    OutlierRow,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::au::{AuSequence, Emotion, AU_COLUMNS, AU_COUNT};
use crate::les::{self, ActVector, LesError};

pub const SCHEMA_VERSION: u32 = 1;

/// Standard deviations below this are treated as degenerate and replaced by 1.0.
pub const SIGMA_FLOOR: f64 = 1e-8;

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("catalog is empty")]
    EmptyCatalog,
    #[error("emotion `{0}` has {1} frame(s); at least 2 are required")]
    EmotionUnderrepresented(Emotion, usize),
    #[error("missing anchor ({0}, {1})")]
    MissingAnchor(Emotion, u8),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("too few points: {points} for k = {k}")]
    TooFewPoints { points: usize, k: usize },
    #[error("assignments form a single cluster")]
    SingleCluster,
    #[error("cluster {0} collapsed")]
    DegenerateCluster(usize),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error(transparent)]
    Les(#[from] LesError),
}

/// How the isolation magnitudes are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Opt2Mode {
    /// `|AU| / sigma_emo` on raw intensities.
    #[default]
    Literal,
    /// `|AU - mu_emo| / sigma_emo`.
    Centered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub emotion: Emotion,
    pub level: u8,
    pub frame_count: usize,
    pub mean_od: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub schema_version: u32,
    pub au_order: Vec<String>,
    pub opt2_mode: Opt2Mode,
    pub total_frames: usize,
    pub mu_d: [f64; AU_COUNT],
    pub sigma_d: [f64; AU_COUNT],
    pub mu_emo: BTreeMap<Emotion, [f64; AU_COUNT]>,
    pub sigma_emo: BTreeMap<Emotion, [f64; AU_COUNT]>,
    pub classes: Vec<ClassStats>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl DatasetStats {
    /// Stats with only the global moments filled in.
    pub fn from_moments(mu_d: [f64; AU_COUNT], sigma_d: [f64; AU_COUNT]) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            au_order: AU_COLUMNS.iter().map(|s| s.to_string()).collect(),
            opt2_mode: Opt2Mode::Literal,
            total_frames: 0,
            mu_d,
            sigma_d,
            mu_emo: BTreeMap::new(),
            sigma_emo: BTreeMap::new(),
            classes: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub(crate) fn check_global(&self) -> Result<(), LesError> {
        for ((mu, sigma), column) in self.mu_d.iter().zip(&self.sigma_d).zip(AU_COLUMNS) {
            if !mu.is_finite() || !sigma.is_finite() || *sigma <= 0.0 {
                return Err(LesError::StatsIncomplete(format!(
                    "global moments invalid for {column}"
                )));
            }
        }
        Ok(())
    }

    pub fn class(&self, emotion: Emotion, level: u8) -> Option<&ClassStats> {
        self.classes
            .iter()
            .find(|c| c.emotion == emotion && c.level == level)
    }

    pub fn mean_od(&self, emotion: Emotion, level: u8) -> Option<f64> {
        self.class(emotion, level).map(|c| c.mean_od)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, StatsError> {
        let stats: DatasetStats =
            serde_json::from_str(text).map_err(|e| StatsError::Schema(e.to_string()))?;
        if stats.schema_version != SCHEMA_VERSION {
            return Err(StatsError::Schema(format!(
                "stats schema_version {} (expected {SCHEMA_VERSION})",
                stats.schema_version
            )));
        }
        check_au_order(&stats.au_order)?;
        stats.check_global()?;
        Ok(stats)
    }
}

fn check_au_order(order: &[String]) -> Result<(), StatsError> {
    if order.len() != AU_COUNT || order.iter().zip(AU_COLUMNS).any(|(a, b)| a != b) {
        return Err(StatsError::Schema(
            "au_order differs from the canonical order".into(),
        ));
    }
    Ok(())
}

/// Population mean and std per AU over a set of frames, with the
/// degenerate-column substitution applied.
fn moments<'a>(
    frames: impl Iterator<Item = &'a [f64; AU_COUNT]> + Clone,
    what: &str,
    warnings: &mut Vec<String>,
) -> ([f64; AU_COUNT], [f64; AU_COUNT]) {
    let n = frames.clone().count() as f64;
    let mut mu = [0.0; AU_COUNT];
    for au in frames.clone() {
        for i in 0..AU_COUNT {
            mu[i] += au[i];
        }
    }
    mu.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; AU_COUNT];
    for au in frames {
        for i in 0..AU_COUNT {
            let d = au[i] - mu[i];
            var[i] += d * d;
        }
    }
    let sigma = std::array::from_fn(|i| {
        let s = (var[i] / n).sqrt();
        if s < SIGMA_FLOOR {
            let msg = format!("{what}: {} is degenerate (std {s:e}); using 1.0", AU_COLUMNS[i]);
            log::warn!("{msg}");
            warnings.push(msg);
            1.0
        } else {
            s
        }
    });
    (mu, sigma)
}

/// Fit global and per-emotion statistics, then the mean origin distance of
/// every labeled (emotion, level) class under those statistics.
pub fn fit_stats(catalog: &[AuSequence], opt2_mode: Opt2Mode) -> Result<DatasetStats, StatsError> {
    let all = || catalog.iter().flat_map(|s| s.frames.iter().map(|f| &f.au));
    let total = all().count();
    if total == 0 {
        return Err(StatsError::EmptyCatalog);
    }
    let mut warnings = Vec::new();
    let (mu_d, sigma_d) = moments(all(), "global", &mut warnings);
    let mut stats = DatasetStats::from_moments(mu_d, sigma_d);
    stats.opt2_mode = opt2_mode;
    stats.total_frames = total;

    for emotion in Emotion::ALL {
        let frames = || {
            catalog
                .iter()
                .filter(move |s| s.emotion == Some(emotion))
                .flat_map(|s| s.frames.iter().map(|f| &f.au))
        };
        let n = frames().count();
        if n == 0 {
            continue;
        }
        if n < 2 {
            return Err(StatsError::EmotionUnderrepresented(emotion, n));
        }
        let (mu, sigma) = moments(frames(), emotion.name(), &mut warnings);
        stats.mu_emo.insert(emotion, mu);
        stats.sigma_emo.insert(emotion, sigma);
    }

    let mut od_sums: BTreeMap<(Emotion, u8), (f64, usize)> = BTreeMap::new();
    for seq in catalog {
        let Some(key) = seq.class_key() else { continue };
        let acc = od_sums.entry(key).or_insert((0.0, 0));
        for f in &seq.frames {
            acc.0 += les::origin_distance(&les::isolate(&f.au, &stats, key.0)?);
            acc.1 += 1;
        }
    }
    stats.classes = od_sums
        .into_iter()
        .filter(|(_, (_, n))| *n > 0)
        .map(|((emotion, level), (sum, n))| ClassStats {
            emotion,
            level,
            frame_count: n,
            mean_od: sum / n as f64,
        })
        .collect();
    stats.warnings = warnings;
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub emotion: Emotion,
    pub level: u8,
    pub frame_count: usize,
    pub uf: ActVector,
}

/// The 22 action-subspace anchors: seven emotions at levels 1..=3 plus
/// the neutral level-0 anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub schema_version: u32,
    pub au_order: Vec<String>,
    pub entries: Vec<FeatureEntry>,
}

impl FeatureTable {
    pub const SIZE: usize = 22;

    /// Keys in storage order: (neutral, 0) is placed with the other emotions alphabetically.
    pub fn required_keys() -> Vec<(Emotion, u8)> {
        Emotion::ALL
            .iter()
            .flat_map(|&e| {
                if e.is_neutral() {
                    vec![(e, 0)]
                } else {
                    vec![(e, 1), (e, 2), (e, 3)]
                }
            })
            .collect()
    }

    pub fn from_entries(entries: Vec<FeatureEntry>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            au_order: AU_COLUMNS.iter().map(|s| s.to_string()).collect(),
            entries,
        }
    }

    pub fn entry(&self, emotion: Emotion, level: u8) -> Option<&FeatureEntry> {
        self.entries
            .iter()
            .find(|e| e.emotion == emotion && e.level == level)
    }

    pub fn get(&self, emotion: Emotion, level: u8) -> Result<&ActVector, StatsError> {
        self.entry(emotion, level)
            .map(|e| &e.uf)
            .ok_or(StatsError::MissingAnchor(emotion, level))
    }

    pub fn neutral(&self) -> Result<&ActVector, StatsError> {
        self.get(Emotion::Neutral, 0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, StatsError> {
        let table: FeatureTable =
            serde_json::from_str(text).map_err(|e| StatsError::Schema(e.to_string()))?;
        if table.schema_version != SCHEMA_VERSION {
            return Err(StatsError::Schema(format!(
                "table schema_version {} (expected {SCHEMA_VERSION})",
                table.schema_version
            )));
        }
        check_au_order(&table.au_order)?;
        for (emotion, level) in Self::required_keys() {
            table.get(emotion, level)?;
        }
        if table.entries.len() != Self::SIZE {
            return Err(StatsError::Schema(format!(
                "table has {} entries (expected {})",
                table.entries.len(),
                Self::SIZE
            )));
        }
        Ok(table)
    }
}

/// Average standardized frames per label class. The neutral level-0 anchor
/// averages the neutral level-1 frames.
pub fn build_feature_table(catalog: &[AuSequence], stats: &DatasetStats) -> Result<FeatureTable, StatsError> {
    let mut entries = Vec::with_capacity(FeatureTable::SIZE);
    for (emotion, level) in FeatureTable::required_keys() {
        let source_level = if emotion.is_neutral() { 1 } else { level };
        let mut sum = [0.0; AU_COUNT];
        let mut n = 0usize;
        for seq in catalog
            .iter()
            .filter(|s| s.class_key() == Some((emotion, source_level)))
        {
            for f in &seq.frames {
                let u = les::standardize(&f.au, stats)?;
                for i in 0..AU_COUNT {
                    sum[i] += u[i];
                }
                n += 1;
            }
        }
        if n == 0 {
            return Err(StatsError::MissingAnchor(emotion, level));
        }
        entries.push(FeatureEntry {
            emotion,
            level,
            frame_count: n,
            uf: ActVector(sum.map(|s| s / n as f64)),
        });
    }
    Ok(FeatureTable::from_entries(entries))
}
