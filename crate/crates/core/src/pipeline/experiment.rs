use std::fmt::Write as _;
use std::path::Path;

use log::info;

use super::manifest::DatasetManifest;
use super::samples::{build_samples_where, channel_means, to_examples, AugmentedSample, InputMode};
use super::split::{Side, SplitAssignment};
use crate::error::{Error, Result};
use crate::imaging::RotationSpec;
use crate::nn::{train, LossConfig, ModelCheckpoint, NetworkConfig, TrainConfig};

/// L2 weight used when none is given.
pub const DEFAULT_LAMBDA: f64 = 5e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: InputMode,
    /// Side length images are scaled to.
    pub image_size: usize,
    /// Training-side augmentation; the test side is never rotated.
    pub rotation: RotationSpec,
    pub net: NetworkConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    /// The mini topology sized for `mode` and `image_size`.
    pub fn mini(mode: InputMode, image_size: usize, num_classes: usize, seed: u64) -> Self {
        Self {
            mode,
            image_size,
            rotation: RotationSpec::default(),
            net: NetworkConfig::mini(image_size, mode.channels(), num_classes, seed),
            loss: LossConfig::softmax(DEFAULT_LAMBDA),
            train: TrainConfig {
                seed,
                ..TrainConfig::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let input = self.net.input;
        if input.channels != self.mode.channels() {
            return Err(Error::InvalidConfig(format!(
                "{} mode needs {} input channels, network has {}",
                self.mode,
                self.mode.channels(),
                input.channels
            )));
        }
        if input.height != self.image_size || input.width != self.image_size {
            return Err(Error::InvalidConfig(format!(
                "network input {}x{} does not match image size {}",
                input.width, input.height, self.image_size
            )));
        }
        self.net.validate()?;
        self.loss.validate()?;
        self.train.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub trait_name: String,
    pub mode: InputMode,
    pub class_names: Vec<String>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub n_test: usize,
    pub accuracy: f64,
}

impl EvalReport {
    pub fn from_predictions(
        trait_name: &str,
        mode: InputMode,
        class_names: Vec<String>,
        labels: &[usize],
        predicted: &[usize],
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyTestSet);
        }
        let m = class_names.len();
        let mut confusion = vec![vec![0usize; m]; m];
        for (&t, &p) in labels.iter().zip(predicted) {
            if t >= m || p >= m {
                return Err(Error::InvalidLabel {
                    label: t.max(p),
                    classes: m,
                });
            }
            confusion[t][p] += 1;
        }
        let correct: usize = (0..m).map(|i| confusion[i][i]).sum();
        Ok(Self {
            trait_name: trait_name.to_string(),
            mode,
            class_names,
            confusion,
            n_test: labels.len(),
            accuracy: correct as f64 / labels.len() as f64,
        })
    }

    /// `None` when nothing was predicted as `class`.
    pub fn precision(&self, class: usize) -> Option<f64> {
        let col: usize = self.confusion.iter().map(|r| r[class]).sum();
        (col > 0).then(|| self.confusion[class][class] as f64 / col as f64)
    }

    /// `None` when the test set has no sample of `class`.
    pub fn recall(&self, class: usize) -> Option<f64> {
        let row: usize = self.confusion[class].iter().sum();
        (row > 0).then(|| self.confusion[class][class] as f64 / row as f64)
    }

    /// Long-format CSV: `trait,mode,metric,class,predicted,value`. Undefined
    /// precision or recall is written as `NA`.
    pub fn to_csv(&self) -> String {
        let (t, mode) = (&self.trait_name, self.mode);
        let mut s = String::from("trait,mode,metric,class,predicted,value\n");
        let _ = writeln!(s, "{t},{mode},accuracy,,,{:.6}", self.accuracy);
        let _ = writeln!(s, "{t},{mode},n_test,,,{}", self.n_test);
        let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |v| format!("{v:.6}"));
        for (i, c) in self.class_names.iter().enumerate() {
            let _ = writeln!(s, "{t},{mode},precision,{c},,{}", fmt(self.precision(i)));
            let _ = writeln!(s, "{t},{mode},recall,{c},,{}", fmt(self.recall(i)));
        }
        for (i, c) in self.class_names.iter().enumerate() {
            for (j, p) in self.class_names.iter().enumerate() {
                let _ = writeln!(s, "{t},{mode},confusion,{c},{p},{}", self.confusion[i][j]);
            }
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::util::write_atomic(path, self.to_csv().as_bytes())
    }

    /// Reads back the trait, mode and accuracy of a report file.
    pub fn read_summary(path: &Path) -> Result<(String, InputMode, f64)> {
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        let mut rdr = csv::Reader::from_path(path)?;
        for rec in rdr.records() {
            let rec = rec?;
            if rec.get(2) == Some("accuracy") {
                let acc: f64 = rec[5]
                    .parse()
                    .map_err(|_| Error::InvalidData(format!("{}: bad accuracy value", path.display())))?;
                return Ok((rec[0].to_string(), rec[1].parse()?, acc));
            }
        }
        Err(Error::InvalidData(format!("{}: no accuracy row", path.display())))
    }
}

/// Argmax predictions of a checkpoint on samples, using its stored channel means.
pub fn predict_samples(checkpoint: &ModelCheckpoint, samples: &[AugmentedSample]) -> Result<Vec<usize>> {
    let network = checkpoint.network()?;
    let means = &checkpoint.meta.channel_means;
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(64) {
        let inputs: Vec<Vec<f32>> = chunk
            .iter()
            .map(|s| super::samples::to_network_input(&s.tensor, means))
            .collect();
        out.extend(network.predict(&inputs)?.argmax_rows());
    }
    Ok(out)
}

/// Evaluates a checkpoint on labeled samples.
pub fn evaluate(checkpoint: &ModelCheckpoint, samples: &[AugmentedSample]) -> Result<EvalReport> {
    let labeled: Vec<AugmentedSample> = samples.iter().filter(|s| s.label.is_some()).cloned().collect();
    if labeled.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let mode = InputMode::from_channels(checkpoint.config.input.channels)
        .ok_or_else(|| Error::InvalidConfig("checkpoint input is neither 3 nor 4 channels".into()))?;
    let predicted = predict_samples(checkpoint, &labeled)?;
    let labels: Vec<usize> = labeled.iter().filter_map(|s| s.label).collect();
    let mut class_names = checkpoint.meta.class_names.clone();
    if class_names.len() != checkpoint.config.num_classes {
        class_names = (0..checkpoint.config.num_classes).map(|i| i.to_string()).collect();
    }
    EvalReport::from_predictions(&checkpoint.meta.trait_name, mode, class_names, &labels, &predicted)
}

/// Trains on prepared samples and evaluates on held-out ones. Channel means
/// come from the training samples and are stored in the checkpoint.
pub fn run_on_samples(
    trait_name: &str,
    class_names: &[String],
    train_samples: &[AugmentedSample],
    test_samples: &[AugmentedSample],
    cfg: &ExperimentConfig,
) -> Result<(ModelCheckpoint, EvalReport)> {
    cfg.validate()?;
    if test_samples.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if class_names.len() != cfg.net.num_classes {
        return Err(Error::InvalidConfig(format!(
            "trait '{trait_name}' has {} classes, network outputs {}",
            class_names.len(),
            cfg.net.num_classes
        )));
    }
    let means = channel_means(train_samples);
    let examples = to_examples(train_samples, &means);
    info!("{trait_name} ({}): training on {} samples", cfg.mode, examples.len());
    let mut checkpoint = train(&cfg.net, &examples, &cfg.loss, &cfg.train)?;
    checkpoint.meta.trait_name = trait_name.to_string();
    checkpoint.meta.channel_means = means;
    checkpoint.meta.class_names = class_names.to_vec();
    let report = evaluate(&checkpoint, test_samples)?;
    info!(
        "{trait_name} ({}): accuracy {:.4} on {} test images",
        cfg.mode, report.accuracy, report.n_test
    );
    Ok((checkpoint, report))
}

/// Loads, augments, trains and evaluates one trait under a split. Rotations
/// apply to the training side only.
pub fn run_experiment(
    manifest: &DatasetManifest,
    trait_name: &str,
    cfg: &ExperimentConfig,
    split: &SplitAssignment,
) -> Result<(ModelCheckpoint, EvalReport)> {
    cfg.validate()?;
    if split.trait_name != trait_name {
        return Err(Error::InvalidConfig(format!(
            "split is for trait '{}', experiment for '{trait_name}'",
            split.trait_name
        )));
    }
    let on = |side| move |e: &super::manifest::ManifestEntry| split.side(&e.image_id) == Some(side);
    let train_samples = build_samples_where(
        manifest,
        trait_name,
        cfg.mode,
        &cfg.rotation,
        cfg.image_size,
        on(Side::Train),
    )?;
    let test_samples = build_samples_where(
        manifest,
        trait_name,
        cfg.mode,
        &RotationSpec::none(),
        cfg.image_size,
        on(Side::Test),
    )?;
    let classes = manifest.classes(trait_name)?;
    run_on_samples(trait_name, classes, &train_samples, &test_samples, cfg)
}
