use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lacnn::nn::{
    accuracy, gradient_check, train, Example, LayerSpec, LossConfig, ModelCheckpoint, Network, NetworkConfig, Shape,
    Targets, TrainConfig,
};

/// conv - relu - maxpool - fc - relu - dropout - fc on a 2x6x6 input.
fn every_layer(seed: u64, classes: usize) -> NetworkConfig {
    NetworkConfig {
        input: Shape::new(2, 6, 6),
        layers: vec![
            LayerSpec::Conv {
                filters: 3,
                kernel: 3,
                stride: 1,
                padding: 1,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool { window: 2, stride: 2 },
            LayerSpec::Fc { units: 6 },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::Fc { units: classes },
        ],
        num_classes: classes,
        seed,
    }
}

fn random_inputs(rng: &mut ChaCha8Rng, n: usize, len: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..4 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let net = Network::<f64>::initialized(every_layer(seed, 3)).unwrap();
        let inputs = random_inputs(&mut rng, 3, 72);
        let labels: Vec<usize> = (0..3).map(|_| rng.random_range(0..3)).collect();
        for loss in [LossConfig::softmax(1e-3), LossConfig::sigmoid(1e-3)] {
            let r = gradient_check(&net, &loss, &inputs, &Targets::Labels(labels.clone()), 1e-5).unwrap();
            assert!(r.max_rel_error < 1e-4, "seed {seed} {:?}: {r:?}", loss.kind);
            assert_eq!(r.checked + r.skipped, net.params().len());
        }
    }
}

#[test]
fn unsquared_penalty_gradient() {
    let net = Network::<f64>::initialized(every_layer(9, 2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let inputs = random_inputs(&mut rng, 2, 72);
    let loss = LossConfig {
        l2_squared: false,
        ..LossConfig::softmax(0.1)
    };
    let r = gradient_check(&net, &loss, &inputs, &Targets::Labels(vec![0, 1]), 1e-5).unwrap();
    assert!(r.max_rel_error < 1e-4, "{r:?}");
}

/// Two Gaussian blobs in a 1x4x4 input, separated along every pixel.
fn blobs(n: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = i % 2;
            let center = if label == 0 { -1.0 } else { 1.0 };
            let input = (0..16).map(|_| center + rng.random_range(-0.3f32..0.3)).collect();
            Example { input, label }
        })
        .collect()
}

fn small_fc(seed: u64) -> NetworkConfig {
    NetworkConfig {
        input: Shape::new(1, 4, 4),
        layers: vec![LayerSpec::Fc { units: 8 }, LayerSpec::Relu, LayerSpec::Fc { units: 2 }],
        num_classes: 2,
        seed,
    }
}

#[test]
fn separable_blobs_are_learned() {
    let data = blobs(64, 1);
    let cfg = TrainConfig {
        learning_rate: 0.05,
        batch_size: 8,
        epochs: 20,
        ..TrainConfig::default()
    };
    let ckpt = train(&small_fc(3), &data, &LossConfig::softmax(1e-4), &cfg).unwrap();
    assert_eq!(accuracy(&ckpt.network().unwrap(), &blobs(40, 2)).unwrap(), 1.0);
    let l = &ckpt.meta.epoch_losses;
    assert_eq!(l.len(), 20);
    assert!(l[19] < l[0]);
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let init = Network::<f32>::initialized(small_fc(5)).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.0,
        epochs: 3,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let ckpt = train(&small_fc(5), &blobs(16, 0), &LossConfig::softmax(0.01), &cfg).unwrap();
    assert_eq!(&ckpt.params, init.params());
}

#[test]
fn training_is_reproducible() {
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 5,
        ..TrainConfig::default()
    };
    let a = train(&small_fc(1), &blobs(20, 4), &LossConfig::softmax(0.0), &cfg).unwrap();
    let b = train(&small_fc(1), &blobs(20, 4), &LossConfig::softmax(0.0), &cfg).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
}

#[test]
fn diverging_training_reports_non_finite() {
    let cfg = TrainConfig {
        learning_rate: 1e30,
        epochs: 5,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let err = train(&small_fc(0), &blobs(16, 0), &LossConfig::softmax(0.0), &cfg).unwrap_err();
    assert!(err.is_numerical(), "{err}");
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.lacn");
    let cfg = NetworkConfig::mini(32, 4, 2, 11);
    let ckpt = ModelCheckpoint::new(Network::<f32>::initialized(cfg).unwrap(), Default::default());
    ckpt.save(&path).unwrap();
    let loaded = ModelCheckpoint::load(&path).unwrap();
    assert_eq!(loaded, ckpt);
    let (a, b) = (ckpt.network().unwrap(), loaded.network().unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let inputs: Vec<Vec<f32>> = (0..8)
        .map(|_| (0..4096).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let (pa, pb) = (a.predict(&inputs).unwrap(), b.predict(&inputs).unwrap());
    assert!(pa.data().iter().zip(pb.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
}
