//! Trains the mini net on the synthetic landmark-texture task in both input
//! modes and prints test accuracies.
//!
//! `cargo run --release -p lacnn --example synthetic_benefit -- [seed] [epochs]`

use std::time::Instant;

use lacnn::imaging::RotationSpec;
use lacnn::pipeline::{expand, run_on_samples, AugmentedSample, ExperimentConfig, InputMode};
use lacnn::synthetic::{generate, SyntheticConfig, CLASSES};

fn main() -> lacnn::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(30);
    let data = generate(&SyntheticConfig::default())?;
    let classes: Vec<String> = CLASSES.iter().map(|c| c.to_string()).collect();
    for mode in [InputMode::Lacnn, InputMode::Baseline] {
        let start = Instant::now();
        let (mut train, mut test): (Vec<AugmentedSample>, Vec<AugmentedSample>) = (Vec::new(), Vec::new());
        for (i, img) in data.iter().enumerate() {
            let lm = (mode == InputMode::Lacnn).then_some(&img.landmarks);
            let t = img.tensor()?;
            // Every fifth image of each class goes to the test side.
            if (i / 2) % 5 == 0 {
                test.extend(expand(&img.id, &t, lm, &RotationSpec::none(), Some(img.label))?);
            } else {
                train.extend(expand(&img.id, &t, lm, &RotationSpec::default(), Some(img.label))?);
            }
        }
        let mut cfg = ExperimentConfig::mini(mode, 32, 2, seed);
        cfg.train.epochs = epochs;
        let (ckpt, report) = run_on_samples("cell_texture", &classes, &train, &test, &cfg)?;
        println!(
            "{mode:>8}: accuracy {:.3}  final loss {:.4}  ({:.1}s)",
            report.accuracy,
            ckpt.meta.final_loss,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
