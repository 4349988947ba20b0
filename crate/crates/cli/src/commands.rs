use std::fmt::Write as _;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageFormat, Luma};
use log::{info, warn};

use lacnn::annotations::{
    filter_raters, infer_schema, read_responses, trait_agreement, TraitAgreement, FAD_OBJECTIVE_TRAITS,
};
use lacnn::imaging::{load_image_scaled, RotationSpec};
use lacnn::landmarks::LandmarkSet;
use lacnn::nn::{LossConfig, LossKind, ModelCheckpoint, NetworkConfig, TrainConfig};
use lacnn::pipeline::{
    build_samples_where, evaluate, expand, first_layer_activations, prepare_entry, run_experiment, stratified_split,
    DatasetManifest, EvalReport, ExperimentConfig, InputMode, Side, SplitAssignment, DEFAULT_LAMBDA,
};
use lacnn::util::write_atomic;
use lacnn::Error;

use crate::config::ConfigFile;
use crate::lock::DirLock;
use crate::{
    AugmentArgs, Cli, CliError, Command, DataArgs, EvalArgs, KappaArgs, LossArg, SplitArgs, TrainArgs, VizArgs,
};

type Result<T> = std::result::Result<T, CliError>;

const DEFAULT_SIZE: usize = 32;
const DEFAULT_ROTATIONS: &str = "-40,-20,20,40";

pub fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Augment(a) => augment(a, &config),
        Command::Split(a) => split(a, &config),
        Command::Train(a) => train(a, &config),
        Command::Eval(a) => eval(a, &config),
        Command::Kappa(a) => kappa(a),
        Command::Viz(a) => viz(a),
    }
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| CliError::Usage(format!("--{flag} is required (as a flag or in --config)")))
}

fn existing(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::FileNotFound(path).into())
    }
}

fn mode(flag: Option<crate::ModeArg>, config: &ConfigFile) -> Result<InputMode> {
    match flag {
        Some(m) => Ok(m.into()),
        None => Ok(config
            .raw("mode")
            .map(str::parse)
            .transpose()?
            .unwrap_or(InputMode::Lacnn)),
    }
}

fn rotations(flag: Option<String>, config: &ConfigFile) -> Result<RotationSpec> {
    let s = config.pick(flag, "rotations", DEFAULT_ROTATIONS.to_string())?;
    Ok(RotationSpec::parse_angles(&s)?)
}

struct Data {
    manifest: DatasetManifest,
    trait_name: String,
    size: usize,
}

fn load_data(args: DataArgs, config: &ConfigFile) -> Result<Data> {
    let path = existing(required(config.pick_opt(args.manifest, "manifest")?, "manifest")?)?;
    let size = config.pick(args.size, "size", DEFAULT_SIZE)?;
    if size == 0 {
        return Err(CliError::Usage("--size must be positive".into()));
    }
    let manifest = DatasetManifest::from_csv(&path, None)?;
    let trait_name = match config.pick_opt(args.trait_name, "trait")? {
        Some(t) => t,
        None => match manifest.trait_names().as_slice() {
            [only] => only.clone(),
            names => {
                return Err(CliError::Usage(format!(
                    "--trait is required; the manifest has traits {}",
                    names.join(", ")
                )))
            }
        },
    };
    manifest.classes(&trait_name)?;
    Ok(Data {
        manifest,
        trait_name,
        size,
    })
}

fn png_bytes(img: impl Into<image::DynamicImage>) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.into()
        .write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| Error::InvalidData(format!("PNG encoding failed: {e}")))?;
    Ok(buf.into_inner())
}

fn augment(a: AugmentArgs, config: &ConfigFile) -> Result<()> {
    let mode = mode(a.mode, config)?;
    let rotation = rotations(a.rotations, config)?;
    let out = required(config.pick_opt(a.out, "out")?, "out")?;
    let data = load_data(a.data, config)?;
    data.manifest.check_files(mode == InputMode::Lacnn)?;
    let _lock = DirLock::acquire(&out)?;
    let samples_dir = out.join("samples");
    std::fs::create_dir_all(&samples_dir)?;

    let classes = data.manifest.classes(&data.trait_name)?;
    let mut summary = String::from("image_id,angle,label,image_file,landmark_file\n");
    let mut n_images = 0;
    let mut n_samples = 0;
    for (entry, label) in data.manifest.labeled(&data.trait_name)? {
        n_images += 1;
        for s in prepare_entry(entry, mode, &rotation, data.size, Some(label))? {
            let stem = format!("{}_a{}", s.image_id, s.angle);
            let img_file = format!("samples/{stem}.png");
            write_atomic(&out.join(&img_file), &png_bytes(s.tensor.to_rgb8())?)?;
            let lm_file = match &s.channel {
                Some(ch) => {
                    let f = format!("samples/{stem}_landmarks.png");
                    let w = ch.width() as u32;
                    let img = GrayImage::from_fn(w, ch.height() as u32, |x, y| {
                        Luma([ch.index_at(x as usize, y as usize).min(255) as u8])
                    });
                    write_atomic(&out.join(&f), &png_bytes(img)?)?;
                    f
                }
                None => String::new(),
            };
            let _ = writeln!(
                summary,
                "{},{},{},{img_file},{lm_file}",
                s.image_id, s.angle, classes[label]
            );
            n_samples += 1;
        }
    }
    write_atomic(&out.join("augment_summary.csv"), summary.as_bytes())?;
    info!(
        "augmented {n_images} images into {n_samples} samples in {}",
        out.display()
    );
    println!(
        "images={n_images} samples={n_samples} mode={mode} trait={}",
        data.trait_name
    );
    Ok(())
}

fn split_path(dir: &Path, trait_name: &str) -> PathBuf {
    dir.join(format!("split_{trait_name}.csv"))
}

fn split(a: SplitArgs, config: &ConfigFile) -> Result<()> {
    let seed = config.pick(a.seed, "seed", 0u64)?;
    let fraction = config.pick(a.test_fraction, "test_fraction", 0.2f64)?;
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CliError::Usage(format!("--test-fraction {fraction} must be in (0, 1)")));
    }
    let out = required(config.pick_opt(a.out, "out")?, "out")?;
    let data = load_data(a.data, config)?;
    let s = stratified_split(&data.manifest, &data.trait_name, fraction, seed)?;
    let _lock = DirLock::acquire(&out)?;
    let path = split_path(&out, &data.trait_name);
    s.write(&path)?;
    info!("{} train / {} test images", s.count(Side::Train), s.count(Side::Test));
    println!("{}", path.display());
    Ok(())
}

fn checkpoint_path(dir: &Path, trait_name: &str, mode: InputMode) -> PathBuf {
    dir.join(format!("{trait_name}_{mode}.lacn"))
}

fn train(a: TrainArgs, config: &ConfigFile) -> Result<()> {
    let mode = mode(a.mode, config)?;
    let rotation = rotations(a.rotations, config)?;
    let seed = config.pick(a.seed, "seed", 0u64)?;
    let defaults = TrainConfig::default();
    let train_cfg = TrainConfig {
        learning_rate: config.pick(a.lr, "lr", defaults.learning_rate)?,
        momentum: config.pick(a.momentum, "momentum", defaults.momentum)?,
        batch_size: config.pick(a.batch_size, "batch_size", defaults.batch_size)?,
        epochs: config.pick(a.epochs, "epochs", defaults.epochs)?,
        seed,
    };
    train_cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let lambda = config.pick(a.lambda, "lambda", DEFAULT_LAMBDA)?;
    let kind = match a.loss {
        Some(LossArg::Softmax) => LossKind::SoftmaxNll,
        Some(LossArg::Sigmoid) => LossKind::SigmoidCrossEntropy,
        None => match config.raw("loss") {
            None | Some("softmax") => LossKind::SoftmaxNll,
            Some("sigmoid") => LossKind::SigmoidCrossEntropy,
            Some(other) => return Err(CliError::Usage(format!("unknown loss '{other}'"))),
        },
    };
    let loss = LossConfig {
        kind,
        lambda,
        l2_squared: true,
    };
    loss.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let fraction = config.pick(a.test_fraction, "test_fraction", 0.2f64)?;
    let out = required(config.pick_opt(a.out, "out")?, "out")?;
    let split_file = a.split.map(existing).transpose()?;
    let data = load_data(a.data, config)?;

    let split = match split_file {
        Some(p) => SplitAssignment::read(&p)?,
        None => stratified_split(&data.manifest, &data.trait_name, fraction, seed)?,
    };
    let classes = data.manifest.classes(&data.trait_name)?.len();
    let cfg = ExperimentConfig {
        mode,
        image_size: data.size,
        rotation,
        net: NetworkConfig::mini(data.size, mode.channels(), classes, seed),
        loss,
        train: train_cfg,
    };
    cfg.validate()?;
    data.manifest.check_files(mode == InputMode::Lacnn)?;
    let _lock = DirLock::acquire(&out)?;
    let (ckpt, report) = run_experiment(&data.manifest, &data.trait_name, &cfg, &split)?;
    let path = checkpoint_path(&out, &data.trait_name, mode);
    ckpt.save(&path)?;
    info!(
        "{} ({mode}): final training loss {:.4}, held-out accuracy {:.4}",
        data.trait_name, ckpt.meta.final_loss, report.accuracy
    );
    println!("{}", path.display());
    Ok(())
}

fn eval(a: EvalArgs, config: &ConfigFile) -> Result<()> {
    let manifest_path = existing(required(config.pick_opt(a.manifest, "manifest")?, "manifest")?)?;
    let out = required(config.pick_opt(a.out, "out")?, "out")?;
    let checkpoints = a.checkpoint.into_iter().map(existing).collect::<Result<Vec<_>>>()?;
    let splits = a
        .split
        .into_iter()
        .map(|p| Ok(SplitAssignment::read(&existing(p)?)?))
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest::from_csv(&manifest_path, None)?;
    let _lock = DirLock::acquire(&out)?;

    let mut reports: Vec<EvalReport> = Vec::new();
    for path in &checkpoints {
        let ckpt = ModelCheckpoint::load(path)?;
        let trait_name = &ckpt.meta.trait_name;
        let split = splits.iter().find(|s| &s.trait_name == trait_name).ok_or_else(|| {
            Error::InvalidData(format!("no split file for trait '{trait_name}' of {}", path.display()))
        })?;
        let mode = InputMode::from_channels(ckpt.config.input.channels)
            .ok_or_else(|| Error::InvalidData(format!("{}: unsupported input channels", path.display())))?;
        let test = build_samples_where(
            &manifest,
            trait_name,
            mode,
            &RotationSpec::none(),
            ckpt.config.input.height,
            |e| split.side(&e.image_id) == Some(Side::Test),
        )?;
        let report = evaluate(&ckpt, &test)?;
        report.write(&out.join(format!("eval_{trait_name}_{mode}.csv")))?;
        reports.push(report);
    }
    print!("{}", accuracy_table(&reports));
    Ok(())
}

/// Trait rows with baseline and lacnn accuracy columns.
pub fn accuracy_table(reports: &[EvalReport]) -> String {
    let mut traits: Vec<&str> = Vec::new();
    for r in reports {
        if !traits.contains(&r.trait_name.as_str()) {
            traits.push(&r.trait_name);
        }
    }
    let width = traits.iter().map(|t| t.len()).max().unwrap_or(5).max(5);
    let cell = |t: &str, m: InputMode| {
        reports
            .iter()
            .find(|r| r.trait_name == t && r.mode == m)
            .map_or("-".to_string(), |r| format!("{:.2}%", r.accuracy * 100.0))
    };
    let mut s = format!("{:<width$}  {:>9}  {:>9}\n", "Trait", "Baseline", "LACNN");
    for t in traits {
        let _ = writeln!(
            s,
            "{t:<width$}  {:>9}  {:>9}",
            cell(t, InputMode::Baseline),
            cell(t, InputMode::Lacnn)
        );
    }
    s
}

fn kappa(a: KappaArgs) -> Result<()> {
    let path = existing(a.responses)?;
    let responses = read_responses(&path)?;
    if responses.is_empty() {
        return Err(Error::EmptyData.into());
    }
    let objective: Vec<String> = match a.objective {
        Some(s) => s
            .split(',')
            .map(|t| t.trim().to_string())
            .filter(|t| !t.is_empty())
            .collect(),
        None => FAD_OBJECTIVE_TRAITS.iter().map(|t| t.to_string()).collect(),
    };
    let kept = if a.no_filter {
        responses
    } else {
        let outcome = filter_raters(&responses, &objective);
        info!(
            "removed {} raters ({} failed attention checks, {} disagreed with peers)",
            outcome.rejected.len(),
            outcome.failed_attention.len(),
            outcome.disagreed.len()
        );
        outcome.kept
    };
    if kept.is_empty() {
        return Err(Error::InvalidData("no responses left after rater filtering".into()).into());
    }
    let schema = infer_schema(&kept);
    let mut rows = Vec::new();
    for t in schema.trait_names() {
        let row = trait_agreement(&kept, t, schema.classes(t).unwrap_or_default())?;
        if row.excluded_subjects > 0 {
            warn!(
                "{t}: {} images with an unusual rater count left out",
                row.excluded_subjects
            );
        }
        rows.push(row);
    }
    print!("{}", kappa_table(&rows));
    if let Some(out) = a.out {
        let _lock = DirLock::acquire(&out)?;
        let mut csv = String::from("trait,kappa,band,n_images\n");
        for r in &rows {
            let _ = writeln!(
                csv,
                "{},{:.6},{},{}",
                r.trait_name,
                r.kappa,
                r.band.abbreviation(),
                r.n_subjects
            );
        }
        write_atomic(&out.join("kappa.csv"), csv.as_bytes())?;
    }
    Ok(())
}

pub fn kappa_table(rows: &[TraitAgreement]) -> String {
    let width = rows.iter().map(|r| r.trait_name.len()).max().unwrap_or(5).max(5);
    let mut s = format!("{:<width$}  Kappa\n", "Trait");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<width$}  {:.3} ({})",
            r.trait_name,
            r.kappa,
            r.band.abbreviation()
        );
    }
    s
}

fn viz(a: VizArgs) -> Result<()> {
    let ckpt = ModelCheckpoint::load(&existing(a.checkpoint)?)?;
    let input = ckpt.config.input;
    let mode = InputMode::from_channels(input.channels)
        .ok_or_else(|| Error::InvalidData("checkpoint input is neither 3 nor 4 channels".into()))?;
    let sample = match (a.manifest, a.image_id, a.image) {
        (Some(m), Some(id), None) => {
            let manifest = DatasetManifest::from_csv(&existing(m)?, None)?;
            let entry = manifest
                .entry(&id)
                .ok_or_else(|| Error::InvalidData(format!("image '{id}' is not in the manifest")))?;
            prepare_entry(entry, mode, &RotationSpec::none(), input.height, None)?.remove(0)
        }
        (None, None, Some(img)) => {
            let (tensor, original) = load_image_scaled(&existing(img)?, input.height)?;
            let landmarks = match (mode, a.landmarks) {
                (InputMode::Lacnn, Some(p)) => {
                    Some(LandmarkSet::from_sidecar(&existing(p)?, "")?.rescale(original, (input.width, input.height)))
                }
                (InputMode::Lacnn, None) => {
                    return Err(CliError::Usage(
                        "a lacnn checkpoint needs --landmarks with --image".into(),
                    ))
                }
                (InputMode::Baseline, _) => None,
            };
            expand("", &tensor, landmarks.as_ref(), &RotationSpec::none(), None)?.remove(0)
        }
        _ => {
            return Err(CliError::Usage(
                "give either --manifest with --image-id, or --image".into(),
            ))
        }
    };
    let grid = first_layer_activations(&ckpt, &sample.tensor)?;
    let dir = a
        .out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let _lock = DirLock::acquire(dir)?;
    grid.write_png(&a.out)?;
    info!("{} filters on a {s}x{s} grid", grid.maps.len(), s = grid.side);
    println!("{}", a.out.display());
    Ok(())
}
