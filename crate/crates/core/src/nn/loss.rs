//! Softmax negative log-likelihood and sigmoid cross-entropy, each with an
//! L2 penalty on the weights (biases are not penalized).

use super::network::{Matrix, Parameters, Scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    SoftmaxNll,
    SigmoidCrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub kind: LossKind,
    pub lambda: f64,
    /// `lambda * ||W||^2` when true, `lambda * ||W||` when false.
    pub l2_squared: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: LossKind::SoftmaxNll,
            lambda: 0.0,
            l2_squared: true,
        }
    }
}

impl LossConfig {
    pub fn softmax(lambda: f64) -> Self {
        Self {
            kind: LossKind::SoftmaxNll,
            lambda,
            l2_squared: true,
        }
    }

    pub fn sigmoid(lambda: f64) -> Self {
        Self {
            kind: LossKind::SigmoidCrossEntropy,
            lambda,
            l2_squared: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda {} must be >= 0", self.lambda)));
        }
        Ok(())
    }
}

/// What the logits are scored against.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets<T> {
    /// One class index per sample.
    Labels(Vec<usize>),
    /// Per-sample, per-output probabilities (sigmoid loss only).
    Probabilities(Matrix<T>),
}

#[derive(Debug, Clone)]
pub struct LossOutput<T> {
    /// Data term plus regularizer.
    pub loss: T,
    pub data_loss: T,
    pub reg_loss: T,
    /// Gradient of the data term with respect to the logits. The regularizer
    /// gradient is applied to weight gradients by [`add_regularizer_grad`].
    pub dlogits: Matrix<T>,
}

/// Max-subtracted softmax.
pub fn softmax_probs<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `log(softmax(logits)[i])` for every `i`, computed as `l_i - max - log(sum exp(l - max))`.
pub fn log_softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().map(|&l| (l - max).exp()).sum::<T>().ln();
    logits.iter().map(|&l| l - max - lse).collect()
}

/// Numerically stable logistic function.
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn weights<T: Scalar>(params: &Parameters<T>) -> impl Iterator<Item = &T> {
    params.layers.iter().flat_map(|l| l.weights.iter())
}

/// The L2 penalty on all weights.
pub fn regularization<T: Scalar>(params: &Parameters<T>, cfg: &LossConfig) -> T {
    if cfg.lambda == 0.0 {
        return T::zero();
    }
    let sq: T = weights(params).map(|&w| w * w).sum();
    let lambda = T::cast_from(cfg.lambda);
    if cfg.l2_squared {
        lambda * sq
    } else {
        lambda * sq.sqrt()
    }
}

/// Adds the penalty's gradient (`2 lambda W`, or `lambda W / ||W||` for the
/// unsquared norm) to the weight gradients.
pub fn add_regularizer_grad<T: Scalar>(params: &Parameters<T>, cfg: &LossConfig, grads: &mut Parameters<T>) {
    if cfg.lambda == 0.0 {
        return;
    }
    let lambda = T::cast_from(cfg.lambda);
    let factor = if cfg.l2_squared {
        lambda + lambda
    } else {
        let norm = weights(params).map(|&w| w * w).sum::<T>().sqrt();
        if norm == T::zero() {
            return;
        }
        lambda / norm
    };
    for (p, g) in params.layers.iter().zip(&mut grads.layers) {
        for (&w, gw) in p.weights.iter().zip(&mut g.weights) {
            *gw = *gw + factor * w;
        }
    }
}

/// Mean negative log-probability of the true class plus the L2 penalty.
pub fn softmax_nll_loss<T: Scalar>(
    logits: &Matrix<T>,
    labels: &[usize],
    params: &Parameters<T>,
    cfg: &LossConfig,
) -> Result<LossOutput<T>> {
    if labels.len() != logits.rows() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} samples",
            labels.len(),
            logits.rows()
        )));
    }
    let m = logits.cols();
    if let Some(&label) = labels.iter().find(|&&l| l >= m) {
        return Err(Error::InvalidLabel { label, classes: m });
    }
    let n = T::cast_from(logits.rows() as f64);
    let mut dlogits = Matrix::zeros(logits.rows(), m);
    let mut total = T::zero();
    for (r, &y) in labels.iter().enumerate() {
        let row = logits.row(r);
        let logp = log_softmax(row);
        total = total - logp[y];
        for (j, d) in dlogits.row_mut(r).iter_mut().enumerate() {
            let p = logp[j].exp();
            let onehot = if j == y { T::one() } else { T::zero() };
            *d = (p - onehot) / n;
        }
    }
    let data_loss = if labels.is_empty() { T::zero() } else { total / n };
    let reg_loss = regularization(params, cfg);
    Ok(LossOutput {
        loss: data_loss + reg_loss,
        data_loss,
        reg_loss,
        dlogits,
    })
}

/// Mean element-wise binary cross-entropy of `sigmoid(logits)` against
/// `targets`, plus the L2 penalty.
pub fn sigmoid_ce_loss<T: Scalar>(
    logits: &Matrix<T>,
    targets: &Matrix<T>,
    params: &Parameters<T>,
    cfg: &LossConfig,
) -> Result<LossOutput<T>> {
    if targets.rows() != logits.rows() || targets.cols() != logits.cols() {
        return Err(Error::ShapeMismatch(format!(
            "targets are {}x{}, logits are {}x{}",
            targets.rows(),
            targets.cols(),
            logits.rows(),
            logits.cols()
        )));
    }
    if let Some(&p) = targets.data().iter().find(|&&p| !(p >= T::zero() && p <= T::one())) {
        return Err(Error::InvalidTarget(p.as_f64()));
    }
    let nm = T::cast_from((logits.rows() * logits.cols()) as f64);
    let mut dlogits = Matrix::zeros(logits.rows(), logits.cols());
    let mut total = T::zero();
    for ((&l, &p), d) in logits.data().iter().zip(targets.data()).zip(dlogits.data_mut()) {
        // -[p log s(l) + (1-p) log(1-s(l))] = max(l,0) - l p + log(1 + e^{-|l|})
        total = total + l.max(T::zero()) - l * p + (-l.abs()).exp().ln_1p();
        *d = (sigmoid(l) - p) / nm;
    }
    let data_loss = if logits.data().is_empty() {
        T::zero()
    } else {
        total / nm
    };
    let reg_loss = regularization(params, cfg);
    Ok(LossOutput {
        loss: data_loss + reg_loss,
        data_loss,
        reg_loss,
        dlogits,
    })
}

/// Expands class labels to one-hot probability rows.
pub fn one_hot<T: Scalar>(labels: &[usize], classes: usize) -> Result<Matrix<T>> {
    let mut m = Matrix::zeros(labels.len(), classes);
    for (r, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::InvalidLabel { label: y, classes });
        }
        m.row_mut(r)[y] = T::one();
    }
    Ok(m)
}

/// Dispatches on `cfg.kind`. Labels given to the sigmoid loss are expanded
/// to one-hot targets; probability targets are rejected by the softmax loss.
pub fn compute_loss<T: Scalar>(
    logits: &Matrix<T>,
    targets: &Targets<T>,
    params: &Parameters<T>,
    cfg: &LossConfig,
) -> Result<LossOutput<T>> {
    match (cfg.kind, targets) {
        (LossKind::SoftmaxNll, Targets::Labels(labels)) => softmax_nll_loss(logits, labels, params, cfg),
        (LossKind::SoftmaxNll, Targets::Probabilities(_)) => Err(Error::InvalidConfig(
            "softmax loss needs class labels, not probability targets".into(),
        )),
        (LossKind::SigmoidCrossEntropy, Targets::Labels(labels)) => {
            let t = one_hot(labels, logits.cols())?;
            sigmoid_ce_loss(logits, &t, params, cfg)
        }
        (LossKind::SigmoidCrossEntropy, Targets::Probabilities(t)) => sigmoid_ce_loss(logits, t, params, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::LayerParams;

    fn params(w: &[f64], b: &[f64]) -> Parameters<f64> {
        Parameters {
            layers: vec![LayerParams {
                weights: w.to_vec(),
                bias: b.to_vec(),
            }],
        }
    }

    #[test]
    fn uniform_logits_give_log_m() {
        let logits = Matrix::from_rows(&[vec![0.0; 4]]).unwrap();
        let out = softmax_nll_loss(&logits, &[2], &params(&[], &[]), &LossConfig::softmax(0.0)).unwrap();
        assert!((out.loss - 4f64.ln()).abs() < 1e-15);
        assert!((out.dlogits.get(0, 2) + 0.75).abs() < 1e-15);
        assert!((out.dlogits.get(0, 0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let p = softmax_probs(&[1000.0f64, 0.0]);
        assert_eq!(p, vec![1.0, 0.0]);
        let lp = log_softmax(&[1000.0f64, 0.0]);
        assert_eq!(lp[1], -1000.0);
    }

    #[test]
    fn sigmoid_loss_at_zero_logit() {
        let logits = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let t = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let out = sigmoid_ce_loss(&logits, &t, &params(&[], &[]), &LossConfig::sigmoid(0.0)).unwrap();
        assert!((out.loss - 2f64.ln()).abs() < 1e-15);
        assert_eq!(out.dlogits.row(0), &[-0.25, 0.25]);
        assert!(sigmoid(-800.0f64) >= 0.0 && sigmoid(800.0f64) == 1.0);
    }

    #[test]
    fn regularizer_ignores_biases() {
        let p = params(&[3.0, 4.0], &[100.0]);
        assert_eq!(regularization(&p, &LossConfig::softmax(0.5)), 12.5);
        let unsq = LossConfig {
            l2_squared: false,
            ..LossConfig::softmax(0.5)
        };
        assert_eq!(regularization(&p, &unsq), 2.5);
        let mut g = params(&[0.0, 0.0], &[0.0]);
        add_regularizer_grad(&p, &LossConfig::softmax(0.5), &mut g);
        assert_eq!(g, params(&[3.0, 4.0], &[0.0]));
        let mut g = params(&[0.0, 0.0], &[0.0]);
        add_regularizer_grad(&p, &unsq, &mut g);
        let w = &g.layers[0].weights;
        assert!((w[0] - 0.3).abs() < 1e-15 && (w[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_targets() {
        let logits = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let p = params(&[], &[]);
        assert!(matches!(
            softmax_nll_loss(&logits, &[2], &p, &LossConfig::default()),
            Err(Error::InvalidLabel { label: 2, classes: 2 })
        ));
        let t = Matrix::from_rows(&[vec![1.5, 0.0]]).unwrap();
        assert!(matches!(
            sigmoid_ce_loss(&logits, &t, &p, &LossConfig::sigmoid(0.0)),
            Err(Error::InvalidTarget(_))
        ));
        assert!(compute_loss(&logits, &Targets::Probabilities(t), &p, &LossConfig::default()).is_err());
    }
}
