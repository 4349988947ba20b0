use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lacnn::nn::{LayerSpec, ModelCheckpoint, Network, NetworkConfig, Shape};
use lacnn::synthetic::{write_dataset, SyntheticConfig};

fn lacnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lacnn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn dataset(n: usize) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(
        &dir.path().join("data"),
        &SyntheticConfig {
            n_images: n,
            ..SyntheticConfig::default()
        },
    )
    .unwrap();
    let manifest = dir.path().join("data/manifest.csv");
    (dir, manifest)
}

#[test]
fn help_documents_every_subcommand() {
    for sub in ["augment", "split", "train", "eval", "kappa", "viz"] {
        let o = lacnn(&[sub, "--help"]);
        assert_eq!(code(&o), 0, "{sub}");
        assert!(stdout(&o).contains("--"), "{sub}");
    }
    assert!(stdout(&lacnn(&["train", "--help"])).contains("--lambda"));
    assert_eq!(code(&lacnn(&["train", "--epochs", "many"])), 1);
    assert_eq!(code(&lacnn(&[])), 1);
}

#[test]
fn augment_counts() {
    let (dir, manifest) = dataset(10);
    let out = dir.path().join("aug");
    let o = lacnn(&["augment", "--manifest", p(&manifest), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("samples=50"));
    let summary = std::fs::read_to_string(out.join("augment_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 51);
    assert!(!out.join(".lacnn.lock").exists());

    let out2 = dir.path().join("aug2");
    let o = lacnn(&[
        "augment",
        "--manifest",
        p(&manifest),
        "--rotations",
        "",
        "--mode",
        "baseline",
        "--out",
        p(&out2),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("samples=10"));
}

#[test]
fn missing_landmarks_exit_with_data_error() {
    let (dir, manifest) = dataset(4);
    std::fs::remove_file(dir.path().join("data/landmarks/syn0002.txt")).unwrap();
    let o = lacnn(&[
        "augment",
        "--manifest",
        p(&manifest),
        "--out",
        p(&dir.path().join("aug")),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("syn0002"), "{}", stderr(&o));
}

#[test]
fn split_is_byte_identical_for_a_seed() {
    let (dir, manifest) = dataset(20);
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = lacnn(&["split", "--manifest", p(&manifest), "--seed", seed, "--out", p(&out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        std::fs::read(out.join("split_cell_texture.csv")).unwrap()
    };
    let a = run("a", "4");
    assert_eq!(a, run("b", "4"));
    assert_ne!(a, run("c", "5"));
    assert_eq!(
        String::from_utf8(a)
            .unwrap()
            .lines()
            .filter(|l| l.ends_with(",test"))
            .count(),
        4
    );
}

#[test]
fn invalid_flags_leave_no_output() {
    let (dir, manifest) = dataset(4);
    let out = dir.path().join("never");
    let o = lacnn(&[
        "split",
        "--manifest",
        p(&manifest),
        "--test-fraction",
        "1.5",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 1);
    let o = lacnn(&[
        "train",
        "--manifest",
        p(&manifest),
        "--momentum",
        "1.0",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 1);
    let o = lacnn(&["train", "--manifest", p(&dir.path().join("nope.csv")), "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    let o = lacnn(&[
        "viz",
        "--checkpoint",
        "x",
        "--image",
        "y",
        "--manifest",
        "z",
        "--out",
        p(&out.join("g.png")),
    ]);
    assert_eq!(code(&o), 1);
    assert!(!out.exists());
}

#[test]
fn busy_output_directory_is_refused() {
    let (dir, manifest) = dataset(4);
    let out = dir.path().join("busy");
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join(".lacnn.lock"), "1").unwrap();
    let o = lacnn(&["split", "--manifest", p(&manifest), "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("in use"));
}

#[test]
fn config_file_fills_in_flags() {
    let (dir, manifest) = dataset(10);
    let cfg = dir.path().join("run.conf");
    let out = dir.path().join("cfg_out");
    std::fs::write(
        &cfg,
        format!(
            "manifest = {}\nrotations = 20\nout = {}\nmode = baseline\n",
            p(&manifest),
            p(&out)
        ),
    )
    .unwrap();
    let o = lacnn(&["augment", "--config", p(&cfg)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("samples=20") && stdout(&o).contains("mode=baseline"));
    let o = lacnn(&[
        "augment",
        "--config",
        p(&cfg),
        "--rotations",
        "",
        "--out",
        p(&dir.path().join("o2")),
    ]);
    assert!(stdout(&o).contains("samples=10"));
    std::fs::write(&cfg, "epoch = 3\n").unwrap();
    assert_eq!(code(&lacnn(&["augment", "--config", p(&cfg)])), 2);
}

#[test]
fn diverging_training_exits_with_numerical_error() {
    let (dir, manifest) = dataset(10);
    let o = lacnn(&[
        "train",
        "--manifest",
        p(&manifest),
        "--lr",
        "1e30",
        "--epochs",
        "2",
        "--rotations",
        "",
        "--out",
        p(&dir.path().join("m")),
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(!dir.path().join("m/cell_texture_lacnn.lacn").exists());
}

#[test]
fn train_eval_and_viz() {
    let (dir, manifest) = dataset(20);
    let out = dir.path().join("run");
    let o = lacnn(&[
        "split",
        "--manifest",
        p(&manifest),
        "--seed",
        "1",
        "--out",
        p(&out.join("split")),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let split = out.join("split/split_cell_texture.csv");
    let mut ckpts = Vec::new();
    for mode in ["baseline", "lacnn"] {
        let o = lacnn(&[
            "train",
            "--manifest",
            p(&manifest),
            "--split",
            p(&split),
            "--mode",
            mode,
            "--epochs",
            "2",
            "--rotations",
            "20",
            "--seed",
            "1",
            "--out",
            p(&out.join("models")),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        ckpts.push(out.join(format!("models/cell_texture_{mode}.lacn")));
    }
    let o = lacnn(&[
        "eval",
        "--manifest",
        p(&manifest),
        "--checkpoint",
        p(&ckpts[0]),
        "--checkpoint",
        p(&ckpts[1]),
        "--split",
        p(&split),
        "--out",
        p(&out.join("eval")),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = stdout(&o);
    assert!(
        table.starts_with("Trait") && table.contains("Baseline") && table.contains("LACNN"),
        "{table}"
    );
    assert!(table.lines().nth(1).unwrap().starts_with("cell_texture"));
    let report = std::fs::read_to_string(out.join("eval/eval_cell_texture_lacnn.csv")).unwrap();
    assert!(report.contains("cell_texture,lacnn,n_test,,,4"));

    let png = out.join("viz/grid.png");
    let o = lacnn(&[
        "viz",
        "--checkpoint",
        p(&ckpts[1]),
        "--manifest",
        p(&manifest),
        "--image-id",
        "syn0003",
        "--out",
        p(&png),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let img = image_dims(&png);
    // 8 maps of 14x14 on a 3x3 grid with 1px gaps.
    assert_eq!(img, (3 * 15 - 1, 3 * 15 - 1));

    let o = lacnn(&[
        "viz",
        "--checkpoint",
        p(&ckpts[1]),
        "--image",
        p(&dir.path().join("data/images/syn0003.png")),
        "--out",
        p(&png),
    ]);
    assert_eq!(code(&o), 1, "lacnn checkpoint without landmarks");
}

fn image_dims(path: &Path) -> (u32, u32) {
    let bytes = std::fs::read(path).unwrap();
    assert_eq!(&bytes[1..4], b"PNG");
    let w = u32::from_be_bytes(bytes[16..20].try_into().unwrap());
    let h = u32::from_be_bytes(bytes[20..24].try_into().unwrap());
    (w, h)
}

#[test]
fn viz_of_a_96_filter_network_is_a_10x10_grid() {
    let (dir, manifest) = dataset(2);
    let cfg = NetworkConfig {
        input: Shape::new(4, 32, 32),
        layers: vec![
            LayerSpec::Conv {
                filters: 96,
                kernel: 5,
                stride: 3,
                padding: 0,
            },
            LayerSpec::Relu,
            LayerSpec::Fc { units: 2 },
        ],
        num_classes: 2,
        seed: 0,
    };
    let ckpt_path = dir.path().join("wide.lacn");
    ModelCheckpoint::new(Network::<f32>::initialized(cfg).unwrap(), Default::default())
        .save(&ckpt_path)
        .unwrap();
    let png = dir.path().join("viz/wide.png");
    let o = lacnn(&[
        "viz",
        "--checkpoint",
        p(&ckpt_path),
        "--manifest",
        p(&manifest),
        "--image-id",
        "syn0000",
        "--out",
        p(&png),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // 10x10 maps per filter, 10 cells per side.
    assert_eq!(image_dims(&png), (10 * 11 - 1, 10 * 11 - 1));
}

#[test]
fn kappa_table_for_perfect_agreement() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("responses.csv");
    let mut csv = String::from("rater_id,image_id,trait,label,attention_passed\n");
    for i in 0..6 {
        for r in 0..3 {
            let label = if i % 2 == 0 { "Male" } else { "Female" };
            csv.push_str(&format!("r{r},img{i},gender,{label},true\n"));
        }
    }
    std::fs::write(&path, csv).unwrap();
    let o = lacnn(&["kappa", "--responses", p(&path), "--out", p(&dir.path().join("k"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("gender  1.000 (APA)"), "{out}");
    let file = std::fs::read_to_string(dir.path().join("k/kappa.csv")).unwrap();
    assert!(file.contains("gender,1.000000,APA,6"));
}
