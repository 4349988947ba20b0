//! Central finite-difference verification of [`Network::backward`].

use super::loss::{add_regularizer_grad, compute_loss, LossConfig, Targets};
use super::network::Network;
use crate::error::Result;

/// Denominator floor for the relative error, so parameters whose true
/// gradient is zero are judged on absolute error instead of rounding noise.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Maximum number of times epsilon is divided by 10 when a perturbation
/// crosses a ReLU or max-pool switching point.
const MAX_SHRINKS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(layer, is_bias, index)` of the worst parameter.
    pub worst: Option<(usize, bool, usize)>,
    pub checked: usize,
    /// Parameters where no centered difference stayed on one linear piece and
    /// a one-sided difference was used instead.
    pub one_sided: usize,
    /// Parameters sitting exactly on a switching point; not compared.
    pub skipped: usize,
}

/// `|a - n| / max(|a|, |n|, REL_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares the analytic gradient of every parameter against
/// `(f(w + eps) - f(w - eps)) / (2 eps)`, with dropout disabled.
///
/// A difference is only trusted when both perturbed forward passes keep the
/// ReLU masks and pooling winners of the unperturbed pass; otherwise epsilon
/// is shrunk, and as a last resort a one-sided difference on the side that
/// keeps the pattern is used.
pub fn gradient_check(
    network: &Network<f64>,
    loss: &LossConfig,
    inputs: &[Vec<f64>],
    targets: &Targets<f64>,
    epsilon: f64,
) -> Result<GradCheckReport> {
    let (logits, trace) = network.forward_eval(inputs)?;
    let base_pattern = trace.activation_pattern();
    let out = compute_loss(&logits, targets, network.params(), loss)?;
    let f0 = out.loss;
    let mut analytic = network.backward(&trace, &out.dlogits)?;
    add_regularizer_grad(network.params(), loss, &mut analytic);

    let mut probe = network.clone();
    let eval = |probe: &Network<f64>| -> Result<(f64, bool)> {
        let (logits, trace) = probe.forward_eval(inputs)?;
        let l = compute_loss(&logits, targets, probe.params(), loss)?.loss;
        Ok((l, trace.activation_pattern() == base_pattern))
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        one_sided: 0,
        skipped: 0,
    };
    for layer in 0..network.params().layers.len() {
        for is_bias in [false, true] {
            let n = {
                let p = &network.params().layers[layer];
                if is_bias {
                    p.bias.len()
                } else {
                    p.weights.len()
                }
            };
            for idx in 0..n {
                let original = get(&probe, layer, is_bias, idx);
                let mut eps = epsilon;
                let mut numeric = None;
                let mut sides = (None, None);
                for _ in 0..=MAX_SHRINKS {
                    set(&mut probe, layer, is_bias, idx, original + eps);
                    let plus = eval(&probe)?;
                    set(&mut probe, layer, is_bias, idx, original - eps);
                    let minus = eval(&probe)?;
                    set(&mut probe, layer, is_bias, idx, original);
                    if plus.1 && minus.1 {
                        numeric = Some((plus.0 - minus.0) / (2.0 * eps));
                        break;
                    }
                    sides = (plus.1.then_some((plus.0, eps)), minus.1.then_some((minus.0, eps)));
                    eps /= 10.0;
                }
                let numeric = match (numeric, sides) {
                    (Some(n), _) => n,
                    (None, (Some((fp, e)), _)) => {
                        report.one_sided += 1;
                        (fp - f0) / e
                    }
                    (None, (None, Some((fm, e)))) => {
                        report.one_sided += 1;
                        (f0 - fm) / e
                    }
                    (None, (None, None)) => {
                        report.skipped += 1;
                        continue;
                    }
                };
                let a = if is_bias {
                    analytic.layers[layer].bias[idx]
                } else {
                    analytic.layers[layer].weights[idx]
                };
                let err = relative_error(a, numeric);
                report.checked += 1;
                if report.worst.is_none() || err > report.max_rel_error {
                    report.max_rel_error = err;
                    report.worst = Some((layer, is_bias, idx));
                }
            }
        }
    }
    Ok(report)
}

fn get(net: &Network<f64>, layer: usize, is_bias: bool, idx: usize) -> f64 {
    let p = &net.params().layers[layer];
    if is_bias {
        p.bias[idx]
    } else {
        p.weights[idx]
    }
}

fn set(net: &mut Network<f64>, layer: usize, is_bias: bool, idx: usize, v: f64) {
    let p = &mut net.params_mut().layers[layer];
    if is_bias {
        p.bias[idx] = v;
    } else {
        p.weights[idx] = v;
    }
}
