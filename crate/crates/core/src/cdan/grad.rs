//! Analytic gradients of squared-error losses and their finite-difference check.

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CdanError, CdanLevel, CdanParams, Sample};

/// Which part of the network a loss covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradScope {
    /// `||L1(u, beta) - target||^2`
    Level1,
    /// `||L2(v, beta) - target||^2`, level 2 on its own
    Level2,
    /// `||L2(v, L1(u, beta)) - target||^2`
    Serial,
}

impl GradScope {
    fn covers(self, level: &str) -> bool {
        match self {
            GradScope::Level1 => level == "level1",
            GradScope::Level2 => level == "level2",
            GradScope::Serial => true,
        }
    }
}

fn sq_err(out: &Array1<f64>, target: &[f64]) -> (f64, Array1<f64>) {
    let diff = Array1::from_shape_fn(out.len(), |i| out[i] - target[i]);
    (diff.dot(&diff), diff)
}

fn output(params: &CdanParams, s: &Sample, scope: GradScope) -> Result<Array1<f64>, CdanError> {
    match scope {
        GradScope::Level1 => params.level1.forward(s.u.as_slice(), s.beta.as_slice()),
        GradScope::Level2 => params.level2.forward(s.v.as_slice(), s.beta.as_slice()),
        GradScope::Serial => {
            let bp = params.level1.forward(s.u.as_slice(), s.beta.as_slice())?;
            params.level2.forward(s.v.as_slice(), bp.as_slice().unwrap())
        }
    }
}

/// Sum-of-squares loss for the scope.
pub(crate) fn loss(params: &CdanParams, s: &Sample, scope: GradScope) -> Result<f64, CdanError> {
    Ok(sq_err(&output(params, s, scope)?, s.target.as_slice()).0)
}

/// `loss(plus) - loss(minus)` expanded per output as
/// `sum (p - m)(p + m - 2t)`, which avoids cancelling two large losses.
fn loss_difference(plus: &Array1<f64>, minus: &Array1<f64>, target: &[f64]) -> f64 {
    (0..plus.len())
        .map(|k| (plus[k] - minus[k]) * (plus[k] + minus[k] - 2.0 * target[k]))
        .sum()
}

/// Loss and `dloss/dtheta` for every parameter. `loss_scale` multiplies
/// both (the trainer uses `1 / (64 * batch)` to get a mean squared error).
pub(crate) fn loss_and_grads(
    params: &CdanParams,
    s: &Sample,
    scope: GradScope,
    loss_scale: f64,
) -> Result<(f64, CdanParams), CdanError> {
    let mut grads = CdanParams::zeros(params.seed);
    let t = s.target.as_slice();
    let loss = match scope {
        GradScope::Level1 => {
            let c = params.level1.forward_cached(s.u.as_slice(), s.beta.as_slice())?;
            let (loss, diff) = sq_err(&c.out, t);
            grads.level1 = params.level1.backward(&c, &(diff * (2.0 * loss_scale))).0;
            loss
        }
        GradScope::Level2 => {
            let c = params.level2.forward_cached(s.v.as_slice(), s.beta.as_slice())?;
            let (loss, diff) = sq_err(&c.out, t);
            grads.level2 = params.level2.backward(&c, &(diff * (2.0 * loss_scale))).0;
            loss
        }
        GradScope::Serial => {
            let c1 = params.level1.forward_cached(s.u.as_slice(), s.beta.as_slice())?;
            let c2 = params
                .level2
                .forward_cached(s.v.as_slice(), c1.out.as_slice().unwrap())?;
            let (loss, diff) = sq_err(&c2.out, t);
            let (g2, _, g_beta_prime) = params.level2.backward(&c2, &(diff * (2.0 * loss_scale)));
            grads.level2 = g2;
            grads.level1 = params.level1.backward(&c1, &g_beta_prime).0;
            loss
        }
    };
    Ok((loss * loss_scale, grads))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub scope: GradScope,
    pub epsilon: f64,
    pub checked: usize,
    pub max_rel_err: f64,
    /// `level/tensor[index]` of the worst entry.
    pub worst: String,
    pub pass: bool,
}

/// Relative-error threshold for a passing check.
pub const GRAD_TOL: f64 = 1e-4;
/// Minimum number of parameters compared per check.
pub const MIN_CHECKED: usize = 200;
/// Default step: small gradients hit the roundoff floor below about 1e-5.
pub const DEFAULT_EPSILON: f64 = 1e-4;

/// Serial-loss check over at least 200 parameters spread across every tensor.
pub fn grad_check(params: &CdanParams, sample: &Sample, epsilon: f64) -> Result<GradCheckReport, CdanError> {
    grad_check_scoped(params, sample, GradScope::Serial, epsilon, params.seed)
}

pub fn grad_check_scoped(
    params: &CdanParams,
    sample: &Sample,
    scope: GradScope,
    epsilon: f64,
    seed: u64,
) -> Result<GradCheckReport, CdanError> {
    let (_, analytic) = loss_and_grads(params, sample, scope, 1.0)?;
    compare_gradients(params, sample, scope, epsilon, &analytic, seed)
}

/// Compare supplied gradients against central differences
/// `(loss(theta + eps) - loss(theta - eps)) / (2 eps)`. The step is applied
/// to the stored value, so the effective step is `eps` rounded to the
/// parameter's precision.
pub fn compare_gradients(
    params: &CdanParams,
    sample: &Sample,
    scope: GradScope,
    epsilon: f64,
    analytic: &CdanParams,
    seed: u64,
) -> Result<GradCheckReport, CdanError> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(CdanError::BadConfig(format!(
            "epsilon {epsilon} outside [1e-7, 1e-3]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels: Vec<(&str, &CdanLevel, &CdanLevel)> = params
        .levels()
        .into_iter()
        .zip(analytic.levels())
        .filter(|((name, _), _)| scope.covers(name))
        .map(|((name, p), (_, a))| (name, p, a))
        .collect();
    let tensor_count: usize = levels.iter().map(|(_, p, _)| p.tensors().len()).sum();
    let per_tensor = MIN_CHECKED.div_ceil(tensor_count);

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        scope,
        epsilon,
        checked: 0,
        max_rel_err: 0.0,
        worst: String::new(),
        pass: true,
    };
    for (level_name, p, a) in levels {
        let analytic_tensors = a.tensors();
        for (t, (tensor_name, _, data)) in p.tensors().into_iter().enumerate() {
            let picks = rand::seq::index::sample(&mut rng, data.len(), per_tensor.min(data.len()));
            for idx in picks.iter() {
                let orig = data[idx];
                let fd = {
                    let mut nudge = |delta: f64| -> Result<Array1<f64>, CdanError> {
                        set_param(&mut probe, level_name, t, idx, orig + delta);
                        output(&probe, sample, scope)
                    };
                    let plus = nudge(epsilon)?;
                    let minus = nudge(-epsilon)?;
                    loss_difference(&plus, &minus, sample.target.as_slice()) / (2.0 * epsilon)
                };
                set_param(&mut probe, level_name, t, idx, orig);
                let an = analytic_tensors[t].2[idx];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-8);
                report.checked += 1;
                if rel > report.max_rel_err || report.worst.is_empty() {
                    report.max_rel_err = rel;
                    report.worst = format!("{level_name}/{tensor_name}[{idx}]");
                }
            }
        }
    }
    report.pass = report.max_rel_err < GRAD_TOL;
    Ok(report)
}

fn set_param(params: &mut CdanParams, level: &str, tensor: usize, idx: usize, value: f64) {
    for (name, l) in params.levels_mut() {
        if name == level {
            l.tensors_mut()[tensor].1[idx] = value;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdan::{init_params, ExprCoeff, D_MODEL};
    use crate::les::{ActVector, IsoVector};
    use rand::Rng;

    fn random_sample(seed: u64) -> Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = IsoVector(std::array::from_fn(|i| {
            if i < 17 {
                rng.random_range(0.0..1.5)
            } else {
                0.0
            }
        }));
        v[17 + (seed as usize % 7)] = v.od();
        Sample {
            u: ActVector(std::array::from_fn(|_| rng.random_range(-2.0..2.0))),
            v,
            beta: ExprCoeff::new((0..D_MODEL).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap(),
            target: ExprCoeff::new((0..D_MODEL).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap(),
        }
    }

    #[test]
    fn all_scopes_pass() {
        let p = init_params(3);
        let s = random_sample(3);
        for scope in [GradScope::Level1, GradScope::Level2, GradScope::Serial] {
            let r = grad_check_scoped(&p, &s, scope, DEFAULT_EPSILON, 1).unwrap();
            assert!(r.pass, "{scope:?}: {r:?}");
            assert!(r.checked >= MIN_CHECKED);
        }
    }

    #[test]
    fn corrupted_gradient_fails() {
        let p = init_params(4);
        let s = random_sample(4);
        let (_, mut g) = loss_and_grads(&p, &s, GradScope::Serial, 1.0).unwrap();
        g.level2.mlp2_b *= 2.0;
        let r = compare_gradients(&p, &s, GradScope::Serial, 1e-5, &g, 0).unwrap();
        assert!(!r.pass);
        assert!(r.worst.starts_with("level2/mlp2_b"), "{}", r.worst);
        assert!((r.max_rel_err - 0.5).abs() < 1e-3);
    }

    #[test]
    fn epsilon_bounds() {
        let p = init_params(0);
        let s = random_sample(0);
        assert!(grad_check(&p, &s, 1e-2).is_err());
        assert!(grad_check(&p, &s, 1e-8).is_err());
    }

    #[test]
    fn central_difference_is_second_order() {
        // a single weight's central difference converges to the analytic
        // derivative with error shrinking roughly as eps^2
        let p = init_params(6);
        let s = random_sample(6);
        let (_, g) = loss_and_grads(&p, &s, GradScope::Serial, 1.0).unwrap();
        // the weight with the largest gradient, so it is not behind a dead unit
        let (at, an) = g
            .level1
            .mlp1_w
            .indexed_iter()
            .map(|(ij, &x)| (ij, x))
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap();
        let errs: Vec<f64> = [1e-3, 1e-4]
            .iter()
            .map(|&eps| {
                let mut q = p.clone();
                q.level1.mlp1_w[at] += eps;
                let plus = loss(&q, &s, GradScope::Serial).unwrap();
                q.level1.mlp1_w[at] -= 2.0 * eps;
                let minus = loss(&q, &s, GradScope::Serial).unwrap();
                ((plus - minus) / (2.0 * eps) - an).abs()
            })
            .collect();
        assert!(an.abs() > 1e-6);
        assert!(errs[1] < 1e-6 * an.abs().max(1.0), "{errs:?}");
        assert!(errs[1] <= errs[0] + 1e-12, "{errs:?}");
    }
}
