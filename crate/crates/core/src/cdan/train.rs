//! Toy-scale training: Adam on mean squared error with an exponentially
//! decaying per-epoch learning rate, run coarse-to-fine (level 1 against the
//! targets, then level 2 on top of the frozen level 1).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::grad::{loss_and_grads, GradScope};
use super::{CdanError, CdanLevel, CdanParams, ExprCoeff, Sample, D_MODEL};
use crate::au::AU_COUNT;
use crate::les::{ActVector, IsoVector};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Train level 1 alone against the targets.
    Level1,
    /// Freeze level 1 and train level 2 on its predictions.
    Level2,
    /// Train both levels through the serial composition.
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Epochs per stage.
    pub epochs: usize,
    pub lr: f64,
    pub decay: f64,
    pub batch: usize,
    pub shuffle_seed: u64,
    pub stages: Vec<Stage>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 1e-4,
            decay: 0.86,
            batch: 10,
            shuffle_seed: 0,
            stages: vec![Stage::Level1, Stage::Level2],
        }
    }
}

impl TrainConfig {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.decay.powi(epoch as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub stage: Stage,
    pub epoch: usize,
    pub lr: f64,
    /// Mean squared error averaged over the epoch's batches.
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub params: CdanParams,
    pub history: Vec<EpochLoss>,
}

impl TrainReport {
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("stage,epoch,lr,loss\n");
        for e in &self.history {
            let stage = match e.stage {
                Stage::Level1 => "level1",
                Stage::Level2 => "level2",
                Stage::Joint => "joint",
            };
            out.push_str(&format!(
                "{stage},{},{},{}\n",
                e.epoch,
                crate::fmt_real(e.lr),
                crate::fmt_real(e.loss)
            ));
        }
        out
    }
}

/// Mean squared error of the serial pipeline over a dataset.
pub fn mse(params: &CdanParams, data: &[Sample]) -> Result<f64, CdanError> {
    let mut total = 0.0;
    for s in data {
        total += super::grad::loss(params, s, GradScope::Serial)?;
    }
    Ok(total / (data.len() * D_MODEL) as f64)
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(level: &CdanLevel) -> Self {
        let zeros: Vec<Vec<f64>> = level
            .tensors()
            .iter()
            .map(|(_, _, d)| vec![0.0; d.len()])
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, level: &mut CdanLevel, grads: &CdanLevel, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        let g_tensors = grads.tensors();
        for (k, (_, theta)) in level.tensors_mut().into_iter().enumerate() {
            let g = g_tensors[k].2;
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..theta.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                theta[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
        }
    }
}

fn add_into(acc: &mut CdanLevel, g: &CdanLevel) {
    let src = g.tensors();
    for (k, (_, dst)) in acc.tensors_mut().into_iter().enumerate() {
        for (d, s) in dst.iter_mut().zip(src[k].2) {
            *d += s;
        }
    }
}

/// Mini-batch Adam over the configured stages. Returns the trained
/// parameters and the per-epoch training loss.
pub fn train_toy(
    dataset: &[Sample],
    params: CdanParams,
    config: &TrainConfig,
) -> Result<TrainReport, CdanError> {
    if dataset.is_empty() {
        return Err(CdanError::BadConfig("dataset is empty".into()));
    }
    if config.batch == 0 {
        return Err(CdanError::BadConfig("batch must be at least 1".into()));
    }
    if config.lr.is_nan() || config.lr < 0.0 || config.decay.is_nan() || config.decay <= 0.0 {
        return Err(CdanError::BadConfig(format!(
            "lr must be >= 0 and decay > 0 (lr = {}, decay = {})",
            config.lr, config.decay
        )));
    }
    let mut params = params;
    let mut history = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);

    for &stage in &config.stages {
        // level 2 trains on the frozen level-1 predictions
        let staged: Vec<Sample> = match stage {
            Stage::Level2 => dataset
                .iter()
                .map(|s| {
                    let bp = params.level1.forward(s.u.as_slice(), s.beta.as_slice())?;
                    Ok(Sample {
                        beta: ExprCoeff::new(bp.to_vec())?,
                        ..s.clone()
                    })
                })
                .collect::<Result<_, CdanError>>()?,
            _ => dataset.to_vec(),
        };
        let scope = match stage {
            Stage::Level1 => GradScope::Level1,
            Stage::Level2 => GradScope::Level2,
            Stage::Joint => GradScope::Serial,
        };
        let mut adam1 = Adam::new(&params.level1);
        let mut adam2 = Adam::new(&params.level2);
        let mut order: Vec<usize> = (0..staged.len()).collect();

        for epoch in 0..config.epochs {
            let lr = config.lr_at(epoch);
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for batch in order.chunks(config.batch) {
                let scale = 1.0 / (D_MODEL * batch.len()) as f64;
                let mut acc = CdanParams::zeros(params.seed);
                for &i in batch {
                    let (l, g) = loss_and_grads(&params, &staged[i], scope, scale)?;
                    epoch_loss += l * batch.len() as f64;
                    add_into(&mut acc.level1, &g.level1);
                    add_into(&mut acc.level2, &g.level2);
                }
                match stage {
                    Stage::Level1 => adam1.step(&mut params.level1, &acc.level1, lr),
                    Stage::Level2 => adam2.step(&mut params.level2, &acc.level2, lr),
                    Stage::Joint => {
                        adam1.step(&mut params.level1, &acc.level1, lr);
                        adam2.step(&mut params.level2, &acc.level2, lr);
                    }
                }
            }
            let loss = epoch_loss / staged.len() as f64;
            if !loss.is_finite() || !params.is_finite() {
                return Err(CdanError::Diverged { stage, epoch });
            }
            log::debug!("{stage:?} epoch {epoch}: lr {lr:e} loss {loss:e}");
            history.push(EpochLoss {
                stage,
                epoch,
                lr,
                loss,
            });
        }
    }
    Ok(TrainReport { params, history })
}

/// Linear fixture: `target = A u + c` with fixed random `A` (64 x 17) and
/// `c`, random reference coefficients and slotted isolation vectors.
pub fn linear_toy_dataset(samples: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weight = Normal::new(0.0, 0.5 / (AU_COUNT as f64).sqrt()).unwrap();
    let a: Vec<[f64; AU_COUNT]> = (0..D_MODEL)
        .map(|_| std::array::from_fn(|_| weight.sample(&mut rng)))
        .collect();
    let c: Vec<f64> = (0..D_MODEL).map(|_| rng.random_range(-0.2..0.2)).collect();
    let unit = Normal::new(0.0, 1.0).unwrap();
    (0..samples)
        .map(|_| {
            let u = ActVector(std::array::from_fn(|_| unit.sample(&mut rng)));
            let mags: [f64; AU_COUNT] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
            let emotion = crate::au::Emotion::EXPRESSIVE[rng.random_range(0..7)];
            let v = IsoVector::with_slot(&mags, emotion);
            let beta = (0..D_MODEL).map(|_| 0.5 * unit.sample(&mut rng)).collect();
            let target = (0..D_MODEL)
                .map(|k| c[k] + a[k].iter().zip(u.0.iter()).map(|(w, x)| w * x).sum::<f64>())
                .collect();
            Sample {
                u,
                v,
                beta: ExprCoeff::new(beta).unwrap(),
                target: ExprCoeff::new(target).unwrap(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdan::init_params;

    #[test]
    fn schedule_matches_decay() {
        let c = TrainConfig::default();
        for k in 0..30 {
            let want = 1e-4 * 0.86f64.powi(k);
            assert!((c.lr_at(k as usize) - want).abs() <= 1e-18);
        }
        assert_eq!(c.lr_at(0), 1e-4);
    }

    #[test]
    fn zero_lr_freezes_params() {
        let data = linear_toy_dataset(20, 1);
        let p = init_params(1);
        let cfg = TrainConfig {
            epochs: 3,
            lr: 0.0,
            ..TrainConfig::default()
        };
        let r = train_toy(&data, p.clone(), &cfg).unwrap();
        assert_eq!(r.params, p);
        let l1: Vec<f64> = r
            .history
            .iter()
            .filter(|e| e.stage == Stage::Level1)
            .map(|e| e.loss)
            .collect();
        assert!(l1
            .windows(2)
            .all(|w| (w[0] - w[1]).abs() < 1e-15 * w[0].abs().max(1.0)));
    }

    #[test]
    fn bad_configs() {
        let p = init_params(0);
        assert!(train_toy(&[], p.clone(), &TrainConfig::default()).is_err());
        let data = linear_toy_dataset(2, 0);
        let cfg = TrainConfig {
            batch: 0,
            ..TrainConfig::default()
        };
        assert!(train_toy(&data, p, &cfg).is_err());
    }

    #[test]
    fn diverging_run_is_reported() {
        let data = linear_toy_dataset(10, 2);
        let mut p = init_params(2);
        p.level1.mlp2_w.mapv_inplace(|x| x * 1e300);
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train_toy(&data, p, &cfg),
            Err(CdanError::Diverged { .. }) | Err(CdanError::NonFiniteActivation(_))
        ));
    }
}
