//! Acceptance checks, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines appear in `cargo test` output; exits nonzero if any
//! check fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lacnn::annotations::{classify_agreement, fleiss_kappa, RatingMatrix};
use lacnn::imaging::{rotate_image, rotate_point, ChannelSemantics, ImageTensor, RotationSpec};
use lacnn::landmarks::{augment_fll, LandmarkSet};
use lacnn::nn::{
    gradient_check, sigmoid_ce_loss, softmax_nll_loss, softmax_probs, LayerParams, LayerSpec, LossConfig, Matrix,
    ModelCheckpoint, Network, NetworkConfig, Parameters, Shape, Targets,
};
use lacnn::pipeline::{
    build_samples, build_samples_where, run_experiment, stratified_split, ExperimentConfig, InputMode, Side,
};
use lacnn::synthetic::{write_dataset, SyntheticConfig, TRAIT_NAME};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(start: Instant, limit: Duration) -> (bool, String) {
    let t = start.elapsed();
    (
        t < limit,
        format!("{:.2} s (limit {} s)", t.as_secs_f64(), limit.as_secs()),
    )
}

// 1

fn nearest_landmark_oracle(points: &[(f64, f64)], w: usize, h: usize) -> Vec<u32> {
    let clamp = |v: f64, hi: usize| v.max(0.0).min(hi as f64 - 1.0);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut best = (f64::INFINITY, 0u32);
            for (i, &(lx, ly)) in points.iter().enumerate() {
                let (dx, dy) = (clamp(lx, w) - x as f64, clamp(ly, h) - y as f64);
                let d = dx * dx + dy * dy;
                if d < best.0 {
                    best = (d, i as u32);
                }
            }
            out.push(best.1);
        }
    }
    out
}

fn voronoi_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for case in 0..200 {
        let (w, h) = (rng.random_range(1..=32), rng.random_range(1..=32));
        let k = rng.random_range(1..=10);
        // A quarter of the cases use integer coordinates so exact ties occur.
        let pts: Vec<(f64, f64)> = (0..k)
            .map(|_| {
                if case % 4 == 0 {
                    (rng.random_range(0..w) as f64, rng.random_range(0..h) as f64)
                } else {
                    (
                        rng.random_range(-2.0..w as f64 + 2.0),
                        rng.random_range(-2.0..h as f64 + 2.0),
                    )
                }
            })
            .collect();
        let ch = augment_fll(&LandmarkSet::new(pts.clone(), "case").unwrap(), h, w).unwrap();
        if ch.indices() != nearest_landmark_oracle(&pts, w, h).as_slice() {
            mismatches += 1;
        }
    }
    let (fast, t) = within(start, Duration::from_secs(5));
    outcome(
        mismatches == 0 && fast,
        format!("200 cases, {mismatches} mismatches, {t}"),
    )
}

// 2

fn every_layer_net(seed: u64) -> NetworkConfig {
    NetworkConfig {
        input: Shape::new(2, 7, 7),
        layers: vec![
            LayerSpec::Conv {
                filters: 3,
                kernel: 3,
                stride: 1,
                padding: 1,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool { window: 3, stride: 2 },
            LayerSpec::Conv {
                filters: 2,
                kernel: 2,
                stride: 1,
                padding: 0,
            },
            LayerSpec::Relu,
            LayerSpec::Fc { units: 5 },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::Fc { units: 3 },
        ],
        num_classes: 3,
        seed,
    }
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let (mut one_sided, mut skipped, mut checked) = (0, 0, 0);
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let net = Network::<f64>::initialized(every_layer_net(seed)).unwrap();
        let inputs: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..98).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..4).map(|_| rng.random_range(0..3)).collect();
        let probs = Matrix::from_rows(
            &(0..4)
                .map(|_| (0..3).map(|_| rng.random_range(0.0..1.0)).collect())
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let cases = [
            (LossConfig::softmax(1e-3), Targets::Labels(labels)),
            (LossConfig::sigmoid(1e-3), Targets::Probabilities(probs)),
        ];
        for (loss, targets) in cases {
            let r = gradient_check(&net, &loss, &inputs, &targets, 1e-5).unwrap();
            worst = worst.max(r.max_rel_error);
            one_sided += r.one_sided;
            skipped += r.skipped;
            checked += r.checked;
        }
    }
    let (fast, t) = within(start, Duration::from_secs(60));
    outcome(
        worst < 1e-4 && fast,
        format!(
            "20 seeds x 2 losses, max relative error {worst:.2e} (< 1e-4), {checked} params checked, \
             {one_sided} one-sided, {skipped} skipped, {t}"
        ),
    )
}

// 3

fn eq1_oracle(logits: &[Vec<f64>], labels: &[usize], weights: &[f64], lambda: f64, squared: bool) -> f64 {
    let n = logits.len() as f64;
    let mut s = 0.0;
    for (row, &y) in logits.iter().zip(labels) {
        let denom: f64 = row.iter().map(|l| l.exp()).sum();
        s += (row[y].exp() / denom).ln();
    }
    -s / n + l2_oracle(weights, lambda, squared)
}

fn eq3_oracle(logits: &[Vec<f64>], targets: &[Vec<f64>], weights: &[f64], lambda: f64, squared: bool) -> f64 {
    let (n, m) = (logits.len() as f64, logits[0].len() as f64);
    let mut s = 0.0;
    for (row, t) in logits.iter().zip(targets) {
        for (&l, &p) in row.iter().zip(t) {
            let q = 1.0 / (1.0 + (-l).exp());
            s += p * q.ln() + (1.0 - p) * (1.0 - q).ln();
        }
    }
    -s / (n * m) + l2_oracle(weights, lambda, squared)
}

fn l2_oracle(weights: &[f64], lambda: f64, squared: bool) -> f64 {
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    lambda * if squared { sq } else { sq.sqrt() }
}

fn loss_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_loss, mut worst_prob): (f64, f64) = (0.0, 0.0);
    for batch in 0..100 {
        let (n, m) = (rng.random_range(1..=6), rng.random_range(2..=5));
        let logits: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..m).map(|_| rng.random_range(-8.0..8.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
        let targets: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..m).map(|_| rng.random_range(0.0..=1.0)).collect())
            .collect();
        let weights: Vec<f64> = (0..rng.random_range(0..12))
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let params = Parameters {
            layers: vec![LayerParams {
                weights: weights.clone(),
                bias: vec![0.5; 3],
            }],
        };
        let lambda = if batch % 3 == 0 {
            0.0
        } else {
            rng.random_range(0.0..0.1)
        };
        let squared = batch % 2 == 0;
        let cfg = LossConfig {
            l2_squared: squared,
            ..LossConfig::softmax(lambda)
        };
        let lm = Matrix::from_rows(&logits).unwrap();
        let s = softmax_nll_loss(&lm, &labels, &params, &cfg).unwrap().loss;
        worst_loss = worst_loss.max((s - eq1_oracle(&logits, &labels, &weights, lambda, squared)).abs());
        let tm = Matrix::from_rows(&targets).unwrap();
        let e = sigmoid_ce_loss(
            &lm,
            &tm,
            &params,
            &LossConfig {
                l2_squared: squared,
                ..LossConfig::sigmoid(lambda)
            },
        )
        .unwrap()
        .loss;
        worst_loss = worst_loss.max((e - eq3_oracle(&logits, &targets, &weights, lambda, squared)).abs());
        for row in &logits {
            let denom: f64 = row.iter().map(|l| l.exp()).sum();
            for (p, l) in softmax_probs(row).iter().zip(row) {
                worst_prob = worst_prob.max((p - l.exp() / denom).abs());
            }
        }
    }
    outcome(
        worst_loss < 1e-10 && worst_prob < 1e-12,
        format!("100 batches, loss error {worst_loss:.2e} (< 1e-10), softmax error {worst_prob:.2e} (< 1e-12)"),
    )
}

// 4

fn kappa_oracle(counts: &[Vec<u32>]) -> f64 {
    let subjects = counts.len() as f64;
    let n = counts[0].iter().sum::<u32>() as f64;
    let k = counts[0].len();
    let mut p_bar = 0.0;
    for row in counts {
        let agreeing: f64 = row.iter().map(|&c| c as f64 * (c as f64 - 1.0)).sum();
        p_bar += agreeing / (n * (n - 1.0)) / subjects;
    }
    let pe: f64 = (0..k)
        .map(|j| {
            let pj = counts.iter().map(|r| r[j] as f64).sum::<f64>() / (subjects * n);
            pj * pj
        })
        .sum();
    if pe == 1.0 {
        1.0
    } else {
        (p_bar - pe) / (1.0 - pe)
    }
}

fn fleiss_kappa_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let (subjects, k, n) = (
            rng.random_range(1..=30),
            rng.random_range(2..=5),
            rng.random_range(2..=8u32),
        );
        let counts: Vec<Vec<u32>> = (0..subjects)
            .map(|_| {
                let mut row = vec![0u32; k];
                for _ in 0..n {
                    row[rng.random_range(0..k)] += 1;
                }
                row
            })
            .collect();
        let got = fleiss_kappa(&RatingMatrix::new(counts.clone()).unwrap()).unwrap();
        worst = worst.max((got - kappa_oracle(&counts)).abs());
    }
    let table = [
        (0.9601, "APA"),
        (0.913, "APA"),
        (0.719, "SA"),
        (0.697, "SA"),
        (0.563, "MA"),
        (0.688, "SA"),
        (0.29, "FA"),
        (0.171, "SLA"),
        (0.153, "SLA"),
    ];
    let bands_ok = table
        .iter()
        .filter(|(k, b)| classify_agreement(*k).unwrap().abbreviation() == *b)
        .count();
    outcome(
        worst < 1e-12 && bands_ok == 9,
        format!("500 matrices, max error {worst:.2e} (< 1e-12), {bands_ok}/9 agreement bands reproduced"),
    )
}

// 5

fn synthetic_benefit() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(dir.path(), &SyntheticConfig::default()).unwrap();
    let mut lines = Vec::new();
    let (mut all_high, mut gaps) = (true, 0);
    for seed in 0..5u64 {
        let split = stratified_split(&manifest, TRAIT_NAME, 0.2, seed).unwrap();
        let mut acc = [0.0; 2];
        for (i, mode) in [InputMode::Lacnn, InputMode::Baseline].into_iter().enumerate() {
            let cfg = ExperimentConfig::mini(mode, 32, 2, seed);
            acc[i] = run_experiment(&manifest, TRAIT_NAME, &cfg, &split).unwrap().1.accuracy;
        }
        all_high &= acc[0] >= 0.95;
        if acc[0] - acc[1] >= 0.05 {
            gaps += 1;
        }
        lines.push(format!("seed {seed}: lacnn {:.3} baseline {:.3}", acc[0], acc[1]));
    }
    let (fast, t) = within(start, Duration::from_secs(300));
    outcome(
        all_high && gaps >= 4 && fast,
        format!("{}; gap >= 5 points in {gaps}/5 seeds; {t}", lines.join(", ")),
    )
}

// 6

fn run_cli(args: &[&str]) -> bool {
    let out = Command::new(env!("CARGO_BIN_EXE_lacnn"))
        .args(args)
        .args(["--log-level", "warn"])
        .output()
        .expect("lacnn binary runs");
    if !out.status.success() {
        eprintln!("lacnn {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    }
    out.status.success()
}

fn pipeline_run(data: &Path, out: &Path) -> Option<Vec<(String, Vec<u8>)>> {
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let manifest = s(&data.join("manifest.csv"));
    let split = s(&out.join("split/split_cell_texture.csv"));
    let ckpt = s(&out.join("model/cell_texture_lacnn.lacn"));
    let ok = run_cli(&["augment", "--manifest", &manifest, "--out", &s(&out.join("aug"))])
        && run_cli(&[
            "split",
            "--manifest",
            &manifest,
            "--seed",
            "11",
            "--out",
            &s(&out.join("split")),
        ])
        && run_cli(&[
            "train",
            "--manifest",
            &manifest,
            "--split",
            &split,
            "--seed",
            "11",
            "--epochs",
            "3",
            "--out",
            &s(&out.join("model")),
        ])
        && run_cli(&[
            "eval",
            "--manifest",
            &manifest,
            "--split",
            &split,
            "--checkpoint",
            &ckpt,
            "--out",
            &s(&out.join("eval")),
        ]);
    if !ok {
        return None;
    }
    let files = [
        "aug/augment_summary.csv",
        "split/split_cell_texture.csv",
        "model/cell_texture_lacnn.lacn",
        "eval/eval_cell_texture_lacnn.csv",
    ];
    Some(
        files
            .iter()
            .map(|f| (f.to_string(), std::fs::read(out.join(f)).unwrap()))
            .collect(),
    )
}

fn end_to_end_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_dataset(
        &data,
        &SyntheticConfig {
            n_images: 40,
            ..SyntheticConfig::default()
        },
    )
    .unwrap();
    let (Some(a), Some(b)) = (
        pipeline_run(&data, &dir.path().join("run1")),
        pipeline_run(&data, &dir.path().join("run2")),
    ) else {
        return outcome(false, "a pipeline stage failed".into());
    };
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    outcome(
        differing.is_empty(),
        format!(
            "augment, split, train, eval twice: {} files compared, differing: {differing:?}",
            a.len()
        ),
    )
}

// 7

fn augmentation_and_leakage() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(
        dir.path(),
        &SyntheticConfig {
            n_images: 1000,
            ..SyntheticConfig::default()
        },
    )
    .unwrap();
    let rot = RotationSpec::default();
    let all = build_samples(&manifest, TRAIT_NAME, InputMode::Lacnn, &rot, 16).unwrap();
    let split = stratified_split(&manifest, TRAIT_NAME, 0.2, 0).unwrap();
    let mut leaked = 0;
    let mut per_side = [0usize; 2];
    for (i, side) in [Side::Train, Side::Test].into_iter().enumerate() {
        let samples = build_samples_where(&manifest, TRAIT_NAME, InputMode::Lacnn, &rot, 16, |e| {
            split.side(&e.image_id) == Some(side)
        })
        .unwrap();
        per_side[i] = samples.len();
        leaked += samples.iter().filter(|s| split.side(&s.image_id) != Some(side)).count();
    }
    let five_x = all.len() == 5000 && per_side[0] + per_side[1] == 5000;
    outcome(
        five_x && leaked == 0,
        format!(
            "1000 images -> {} samples (train {}, test {}), {leaked} samples on the wrong side",
            all.len(),
            per_side[0],
            per_side[1]
        ),
    )
}

// 8

fn checkpoint_round_trip() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.lacn");
    let net = Network::<f32>::initialized(NetworkConfig::mini(32, 4, 3, 8)).unwrap();
    let ckpt = ModelCheckpoint::new(net, Default::default());
    ckpt.save(&path).unwrap();
    let loaded = ModelCheckpoint::load(&path).unwrap();
    let (a, b) = (ckpt.network().unwrap(), loaded.network().unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut differing = 0;
    for _ in 0..50 {
        let x: Vec<f32> = (0..4 * 32 * 32).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (pa, pb) = (a.predict(std::slice::from_ref(&x)).unwrap(), b.predict(&[x]).unwrap());
        if pa.data().iter().zip(pb.data()).any(|(u, v)| u.to_bits() != v.to_bits()) {
            differing += 1;
        }
    }
    outcome(
        differing == 0,
        format!("50 inputs, {differing} outputs not bit-identical"),
    )
}

// 9

fn rotation_geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let p = (rng.random_range(-200.0..200.0), rng.random_range(-200.0..200.0));
        let c = (rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
        let a = rng.random_range(-180.0..180.0);
        let back = rotate_point(rotate_point(p, a, c), -a, c);
        worst = worst.max((back.0 - p.0).abs().max((back.1 - p.1).abs()));
    }
    let img = ImageTensor::new(
        5,
        7,
        ChannelSemantics::Rgb,
        (0..105).map(|_| rng.random_range(0.0f32..1.0)).collect(),
    )
    .unwrap();
    let spec = RotationSpec::none();
    let identity = rotate_image(&img, 0.0, &spec).unwrap() == img;
    let pattern: Vec<f32> = (1..=9).flat_map(|v| [v as f32; 3]).collect();
    let src = ImageTensor::new(3, 3, ChannelSemantics::Rgb, pattern).unwrap();
    let turned: Vec<f32> = rotate_image(&src, 90.0, &spec)
        .unwrap()
        .data()
        .chunks(3)
        .map(|p| p[0])
        .collect();
    let expect = [7.0, 4.0, 1.0, 8.0, 5.0, 2.0, 9.0, 6.0, 3.0];
    let quarter = turned == expect;
    outcome(
        worst < 1e-9 && identity && quarter,
        format!("round trip error {worst:.1e} (< 1e-9), 0 deg identity {identity}, 90 deg permutation {quarter}"),
    )
}

type Check = (&'static str, fn() -> Outcome);

fn main() {
    let checks: [Check; 9] = [
        ("Voronoi oracle equivalence", voronoi_oracle_equivalence),
        ("Gradient fidelity", gradient_fidelity),
        ("Loss-oracle equivalence", loss_oracle_equivalence),
        ("Fleiss' kappa", fleiss_kappa_checks),
        ("Synthetic LACNN benefit", synthetic_benefit),
        ("End-to-end determinism", end_to_end_determinism),
        ("Augmentation count and leakage", augmentation_and_leakage),
        ("Checkpoint round-trip", checkpoint_round_trip),
        ("Rotation geometry", rotation_geometry),
    ];
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let id = (i + 1).to_string();
        if let Some(f) = &filter {
            if f != &id && !name.to_lowercase().contains(&f.to_lowercase()) {
                continue;
            }
        }
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| outcome(false, "panicked".into()));
        if !result.pass {
            failed += 1;
        }
        println!(
            "[{}] {id}. {name}: {}",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
