use log::{debug, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{ModelCheckpoint, TrainingMeta};
use super::config::NetworkConfig;
use super::loss::{add_regularizer_grad, compute_loss, LossConfig, Targets};
use super::network::{Mode, Network};
use super::optim::{sgd_step, TrainConfig};
use crate::error::{Error, Result};

/// One network input (`channel, row, column`, already normalized) and its class.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Vec<f32>,
    pub label: usize,
}

/// Trains a freshly initialized network with minibatch momentum SGD.
///
/// Initialization is seeded by `net.seed`; shuffling and dropout by
/// `cfg.seed`, so a run is fully reproducible. The returned checkpoint's
/// metadata carries the epoch count and the mean training loss of every
/// epoch; trait name, class names and channel means are left for the caller.
pub fn train(net: &NetworkConfig, data: &[Example], loss: &LossConfig, cfg: &TrainConfig) -> Result<ModelCheckpoint> {
    let network = Network::<f32>::initialized(net.clone())?;
    train_from(network, data, loss, cfg)
}

/// [`train`] starting from existing parameters.
pub fn train_from(
    mut network: Network<f32>,
    data: &[Example],
    loss: &LossConfig,
    cfg: &TrainConfig,
) -> Result<ModelCheckpoint> {
    cfg.validate()?;
    loss.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let m = network.config().num_classes;
    if let Some(e) = data.iter().find(|e| e.label >= m) {
        return Err(Error::InvalidLabel {
            label: e.label,
            classes: m,
        });
    }
    let mut seen = vec![false; m];
    for e in data {
        seen[e.label] = true;
    }
    if seen.iter().filter(|&&s| s).count() < 2 {
        warn!("training data contains a single class; the network can only learn a constant");
    }

    // Shuffling and dropout draw from separate streams of the same seed.
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(1);

    let mut velocity = network.params().zeros_like();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0f64;
        for chunk in order.chunks(cfg.batch_size) {
            let inputs: Vec<Vec<f32>> = chunk.iter().map(|&i| data[i].input.clone()).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| data[i].label).collect();
            let (logits, trace) = network.forward(&inputs, Mode::Train, &mut dropout_rng)?;
            let out = compute_loss(&logits, &Targets::Labels(labels), network.params(), loss)?;
            if !out.loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss {} at epoch {}",
                    out.loss,
                    epoch + 1
                )));
            }
            total += out.loss as f64 * chunk.len() as f64;
            let mut grads = network.backward(&trace, &out.dlogits)?;
            add_regularizer_grad(network.params(), loss, &mut grads);
            sgd_step(network.params_mut(), &grads, &mut velocity, cfg)?;
            if !network.params().all_finite() {
                return Err(Error::NonFinite(format!("parameters diverged at epoch {}", epoch + 1)));
            }
        }
        let mean = total / data.len() as f64;
        debug!("epoch {}: loss {mean:.6}", epoch + 1);
        epoch_losses.push(mean);
    }
    let meta = TrainingMeta {
        epochs: cfg.epochs as u64,
        final_loss: *epoch_losses.last().expect("epochs > 0"),
        epoch_losses,
        ..TrainingMeta::default()
    };
    Ok(ModelCheckpoint::new(network, meta))
}

/// Fraction of examples whose argmax prediction equals the label.
pub fn accuracy(network: &Network<f32>, data: &[Example]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut correct = 0;
    for chunk in data.chunks(64) {
        let inputs: Vec<Vec<f32>> = chunk.iter().map(|e| e.input.clone()).collect();
        let pred = network.predict(&inputs)?.argmax_rows();
        correct += pred.iter().zip(chunk).filter(|(p, e)| **p == e.label).count();
    }
    Ok(correct as f64 / data.len() as f64)
}
