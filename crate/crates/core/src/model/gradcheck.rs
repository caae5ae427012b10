use crate::error::{Error, Result};

use super::config::ModelConfig;
use super::params::{init_params_in_range, param_count, ParamSet};
use super::train::{batch_loss, loss_and_gradients, synth_copy_batch};

/// Largest model `grad_check` will finite-difference.
pub const GRAD_CHECK_MAX_PARAMS: usize = 2_000;

const CHECK_BATCH: usize = 2;
const DENOM_FLOOR: f64 = 1e-8;

/// Evaluation point is drawn wider than the training init: at ±0.05 the stack
/// shrinks activations until most gradients sit near the rounding floor of the loss.
pub const CHECK_INIT_RANGE: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Canonical tensor name and flat index of the worst parameter.
    pub worst: (String, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub params_checked: usize,
}

/// Compares backprop gradients to central differences on every parameter.
pub fn grad_check_report(cfg: &ModelConfig, seed: u64, eps: f64) -> Result<GradCheckReport> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    cfg.validate()?;
    let count = param_count(cfg);
    if count > GRAD_CHECK_MAX_PARAMS {
        return Err(Error::TooLarge {
            params: count,
            limit: GRAD_CHECK_MAX_PARAMS,
        });
    }
    let params = init_params_in_range::<f64>(cfg, seed, CHECK_INIT_RANGE)?;
    let vocab = cfg.vocab_size.max(2);
    let data = synth_copy_batch(seed, CHECK_BATCH, cfg.max_seq_len, vocab)?;
    // vocab_size 1 cannot host a copy task with two symbols; clamp ids instead
    let clamp = |b: &Vec<Vec<usize>>| -> Vec<Vec<usize>> {
        b.iter()
            .map(|s| s.iter().map(|&t| t % cfg.vocab_size).collect())
            .collect()
    };
    let (inputs, targets) = (clamp(&data.inputs), clamp(&data.targets));

    let (_, grad) = loss_and_gradients(&params, cfg, &inputs, &targets)?;
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    let analytic: Vec<Vec<f64>> = grad
        .tensors()
        .into_iter()
        .map(|(_, m)| m.as_slice().to_vec())
        .collect();

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: (String::new(), 0),
        analytic: 0.0,
        numeric: 0.0,
        params_checked: 0,
    };
    let mut work: ParamSet<f64> = params;
    for t in 0..names.len() {
        for i in 0..analytic[t].len() {
            let orig = work.tensors()[t].1.as_slice()[i];
            work.tensors_mut()[t].as_mut_slice()[i] = orig + eps;
            let plus = batch_loss(&work, cfg, &inputs, &targets)?;
            work.tensors_mut()[t].as_mut_slice()[i] = orig - eps;
            let minus = batch_loss(&work, cfg, &inputs, &targets)?;
            work.tensors_mut()[t].as_mut_slice()[i] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[t][i];
            let denom = a.abs().max(numeric.abs()).max(DENOM_FLOOR);
            let rel = (a - numeric).abs() / denom;
            if rel > report.max_relative_error || report.params_checked == 0 {
                report.max_relative_error = rel;
                report.worst = (names[t].clone(), i);
                report.analytic = a;
                report.numeric = numeric;
            }
            report.params_checked += 1;
        }
    }
    Ok(report)
}

/// Maximum relative error between analytic and central-difference gradients.
pub fn grad_check(cfg: &ModelConfig, seed: u64, eps: f64) -> Result<f64> {
    grad_check_report(cfg, seed, eps).map(|r| r.max_relative_error)
}
