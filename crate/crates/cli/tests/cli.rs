use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;
use vidspeed::media::load_video;
use vidspeed::model::{load_checkpoint, save_checkpoint, Checkpoint, MlpParams};
use vidspeed::retime::RetimeReport;
use vidspeed::speediness::RHO_GRID;

const TINY: &str = r#"{
  "seed": 3,
  "data": {"train_sources": 12, "val_sources": 4, "test_sources": 4, "demo_segment": 60, "demo_segments": 4,
           "scene": {"width": 64, "height": 64, "object_size": [6.0, 12.0]}},
  "model": {"steps": 60, "eval_every": 20, "batch_pairs": 8, "hidden": 16},
  "eval": {"fixed_side": 80}
}"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vidspeed"));
    c.env_remove("VIDSPEED_CONFIG");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// One generated dataset and trained run shared by every test.
struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn path(&self) -> &Path {
        self.dir.path()
    }
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        std::fs::write(dir.path().join("tiny.json"), TINY).unwrap();
        ok(dir.path(), &["--config", "tiny.json", "gen-data", "--out", "data"]);
        ok(dir.path(), &["--config", "tiny.json", "train", "--data", "data", "--out", "run"]);
        Fixture { dir }
    })
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn manifest_ids(data: &Path, split: &str) -> Vec<String> {
    read(data.join(format!("{split}.txt")))
        .lines()
        .map(|l| Path::new(l).file_stem().unwrap().to_string_lossy().into_owned())
        .collect()
}

#[test]
fn gen_data_is_deterministic_disjoint_and_counted() {
    let f = fixture();
    ok(f.path(), &["--config", "tiny.json", "gen-data", "--out", "data2"]);
    for name in
        ["train.txt", "val.txt", "test.txt", "train/train-00003.spdv", "demo/mixed.spdv", "demo/slowmo.truth.json"]
    {
        assert_eq!(
            std::fs::read(f.path().join("data").join(name)).unwrap(),
            std::fs::read(f.path().join("data2").join(name)).unwrap(),
            "{name}"
        );
    }
    let data = f.path().join("data");
    let ids: Vec<Vec<String>> = ["train", "val", "test"].iter().map(|s| manifest_ids(&data, s)).collect();
    assert_eq!([ids[0].len(), ids[1].len(), ids[2].len()], [12, 4, 4]);
    for (i, a) in ids.iter().enumerate() {
        for b in &ids[i + 1..] {
            assert!(a.iter().all(|id| !b.contains(id)));
        }
    }
    let clip = load_video(data.join("train/train-00000.spdv")).unwrap();
    assert_eq!((clip.len(), clip.width()), (48, 64));
}

#[test]
fn gen_data_refuses_existing_dir_without_force() {
    let f = fixture();
    let out = run(f.path(), &["--config", "tiny.json", "gen-data", "--out", "data"]);
    assert_eq!(out.status.code(), Some(2));
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("tiny.json"), TINY).unwrap();
    std::fs::create_dir(dir.path().join("d")).unwrap();
    ok(dir.path(), &["--config", "tiny.json", "gen-data", "--out", "d", "--force", "--train-sources", "2"]);
    assert_eq!(manifest_ids(&dir.path().join("d"), "train").len(), 2);
}

#[test]
fn train_writes_checkpoint_history_and_config() {
    let f = fixture();
    let run_dir = f.path().join("run");
    for name in ["checkpoint.json", "history.json", "history.csv", "summary.json", "config.json"] {
        assert!(run_dir.join(name).exists(), "{name}");
    }
    assert!(read(run_dir.join("history.csv")).starts_with("step,train_loss,val_accuracy\n"));
    let echoed: serde_json::Value = serde_json::from_str(&read(run_dir.join("config.json"))).unwrap();
    assert_eq!(echoed["model"]["steps"], 60);
    assert_eq!(echoed["ablation"]["spatial_aug"], true);
}

#[test]
fn ablation_toggles_change_history_under_same_seed() {
    let f = fixture();
    ok(
        f.path(),
        &[
            "--config",
            "tiny.json",
            "train",
            "--data",
            "data",
            "--out",
            "run_off",
            "--no-spatial-aug",
            "--no-temporal-aug",
            "--independent",
        ],
    );
    assert_ne!(read(f.path().join("run/history.json")), read(f.path().join("run_off/history.json")));
    let summary: serde_json::Value = serde_json::from_str(&read(f.path().join("run_off/summary.json"))).unwrap();
    assert_eq!(summary["ablation"]["same_batch"], false);
}

#[test]
fn zero_learning_rate_keeps_initial_weights() {
    let f = fixture();
    ok(
        f.path(),
        &["--config", "tiny.json", "train", "--data", "data", "--out", "lr0a", "--learning-rate", "0", "--steps", "20"],
    );
    ok(
        f.path(),
        &["--config", "tiny.json", "train", "--data", "data", "--out", "lr0b", "--learning-rate", "0", "--steps", "40"],
    );
    let a = load_checkpoint(&f.path().join("lr0a/checkpoint.json"), None).unwrap();
    let b = load_checkpoint(&f.path().join("lr0b/checkpoint.json"), None).unwrap();
    assert_eq!(a.params.trainable_vec(), b.params.trainable_vec());
}

#[test]
fn resume_continues_and_refuses_other_clip_length() {
    let f = fixture();
    ok(
        f.path(),
        &[
            "--config",
            "tiny.json",
            "train",
            "--data",
            "data",
            "--out",
            "resumed",
            "--resume",
            "run/checkpoint.json",
            "--steps",
            "20",
        ],
    );
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let params = MlpParams::init(8, 16, 1.0, &mut rng);
    let bad = f.path().join("t8.json");
    save_checkpoint(&Checkpoint { params, flow: Default::default() }, &bad).unwrap();
    let out =
        run(f.path(), &["--config", "tiny.json", "train", "--data", "data", "--out", "bad", "--resume", "t8.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("T = 8"));
}

#[test]
fn eval_table_has_trained_oracle_and_constant_rows() {
    let f = fixture();
    let out = ok(f.path(), &["--config", "tiny.json", "eval", "--data", "data", "--out", "ev", "--checkpoint", "run"]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(table, read(f.path().join("ev/table.md")));
    assert!(table.starts_with("| Model | Batch | Temporal | Spatial |"));
    assert!(table.contains("| mean-flow (run/checkpoint.json) | Yes | Yes | Yes |"));
    assert!(table.contains("| oracle | - | - | - | 100.0 | 16 |"));
    assert!(table.contains("| constant (p = 0.5) | - | - | - | 50.0 | 16 |"));
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = read(path);
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

#[test]
fn predict_exports_both_sped_up_columns() {
    let f = fixture();
    ok(
        f.path(),
        &[
            "--config",
            "tiny.json",
            "predict",
            "--video",
            "data/demo/slowmo.spdv",
            "--out",
            "pred",
            "--predictor",
            "oracle",
        ],
    );
    let (header, rows) = csv_rows(&f.path().join("pred/curves.csv"));
    let meta: serde_json::Value = serde_json::from_str(&read(f.path().join("pred/curves.json"))).unwrap();
    let k = meta["metadata"]["k"].as_u64().unwrap() as usize;
    // frame, k + 1 curves, V, V_hat, speediness, slow_motion, two sped-up columns
    assert_eq!(header.len(), 1 + (k + 1) + 6);
    assert!(header.contains(&"sped_up_v0".to_string()) && header.contains(&"sped_up_v3".to_string()));
    assert_eq!(rows.len(), 240);
}

#[test]
fn constant_predictor_gives_constant_columns() {
    let f = fixture();
    ok(
        f.path(),
        &[
            "--config",
            "tiny.json",
            "predict",
            "--video",
            "data/demo/mixed.spdv",
            "--out",
            "predc",
            "--predictor",
            "constant:0.7",
        ],
    );
    let (header, rows) = csv_rows(&f.path().join("predc/curves.csv"));
    for col in 1..header.len() {
        assert!(rows.iter().all(|r| r[col] == rows[0][col]), "column {}", header[col]);
    }
    let i = header.iter().position(|h| h == "sped_up_v0").unwrap();
    assert!((rows[0][i].parse::<f64>().unwrap() - 0.3).abs() < 1e-12);
}

#[test]
fn retime_at_unit_target_is_near_identity() {
    let f = fixture();
    let out = ok(
        f.path(),
        &[
            "--config",
            "tiny.json",
            "retime",
            "--video",
            "data/demo/mixed.spdv",
            "--out",
            "ret1",
            "--target",
            "1",
            "--r-min",
            "1",
            "--predictor",
            "oracle",
        ],
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("rho*"));
    let clip = load_video(f.path().join("ret1/retimed.spdv")).unwrap();
    assert!((clip.len() as f64 - 240.0).abs() <= 0.02 * 240.0, "{}", clip.len());
    let report: RetimeReport = serde_json::from_str(&read(f.path().join("ret1/report.json"))).unwrap();
    assert!(RHO_GRID.contains(&report.rho_star));
    assert_eq!(report.per_frame.len(), 240);
}

#[test]
fn retime_is_reproducible_and_writes_y4m() {
    let f = fixture();
    for out in ["retA", "retB"] {
        ok(
            f.path(),
            &[
                "--config",
                "tiny.json",
                "retime",
                "--video",
                "data/demo/mixed.spdv",
                "--out",
                out,
                "--target",
                "2",
                "--checkpoint",
                "run",
                "--format",
                "y4m",
            ],
        );
    }
    for name in ["retimed.y4m", "report.json", "report.csv", "schedule.csv", "config.json"] {
        assert_eq!(
            std::fs::read(f.path().join("retA").join(name)).unwrap(),
            std::fs::read(f.path().join("retB").join(name)).unwrap(),
            "{name}"
        );
    }
    let (header, rows) = csv_rows(&f.path().join("retA/schedule.csv"));
    assert_eq!(header, ["output_frame", "source_time", "source_frame_used"]);
    assert_eq!(rows.len(), load_video(f.path().join("retA/retimed.y4m")).unwrap().len());
}

#[test]
fn inputs_are_never_outputs() {
    let f = fixture();
    let before = std::fs::read(f.path().join("data/demo/mixed.spdv")).unwrap();
    std::fs::create_dir_all(f.path().join("clash")).unwrap();
    std::fs::copy(f.path().join("data/demo/mixed.spdv"), f.path().join("clash/retimed.spdv")).unwrap();
    let out =
        run(f.path(), &["retime", "--video", "clash/retimed.spdv", "--out", "clash", "--predictor", "constant:1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(f.path(), &["--config", "tiny.json", "train", "--data", "data", "--out", "data"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(before, std::fs::read(f.path().join("data/demo/mixed.spdv")).unwrap());
}

#[test]
fn config_errors_exit_2_and_data_errors_exit_3() {
    let f = fixture();
    std::fs::write(f.path().join("bad.json"), r#"{"retime": {"r_o": 0.5}}"#).unwrap();
    assert_eq!(run(f.path(), &["--config", "bad.json", "inspect", "run/checkpoint.json"]).status.code(), Some(2));
    assert_eq!(run(f.path(), &["--config", "missing.json", "inspect", "x"]).status.code(), Some(2));
    assert_eq!(
        run(f.path(), &["predict", "--video", "data/demo/mixed.spdv", "--out", "p", "--predictor", "bogus"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(f.path(), &["predict", "--video", "nowhere.spdv", "--out", "p", "--predictor", "constant:0.5"])
            .status
            .code(),
        Some(3)
    );
    std::fs::write(f.path().join("junk.spdv"), b"SPDVjunk").unwrap();
    assert_eq!(run(f.path(), &["inspect", "junk.spdv"]).status.code(), Some(3));
}

#[test]
fn config_path_can_come_from_the_environment() {
    let f = fixture();
    let out = bin()
        .current_dir(f.path())
        .env("VIDSPEED_CONFIG", "tiny.json")
        .args(["predict", "--video", "data/demo/mixed.spdv", "--out", "pred_env", "--predictor", "constant:0.5"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let echoed: serde_json::Value = serde_json::from_str(&read(f.path().join("pred_env/config.json"))).unwrap();
    assert_eq!(echoed["seed"], 3);
}

#[test]
fn inspect_recognizes_every_artifact() {
    let f = fixture();
    let cases: [(&str, &str); 6] = [
        ("run/checkpoint.json", "checkpoint: T = 16, H = 16"),
        ("data/test.txt", "manifest: 4 videos"),
        ("data/demo/mixed.spdv", "240 frames, 64x64"),
        ("data/demo/mixed.truth.json", "ground truth: 240 steps"),
        ("run/config.json", "\"seed\": 3"),
        ("run/history.json", "val_accuracy"),
    ];
    for (path, needle) in cases {
        let out = ok(f.path(), &["inspect", path]);
        assert!(String::from_utf8_lossy(&out.stdout).contains(needle), "{path}");
    }
    let p: PathBuf = f.path().join("ret_inspect");
    ok(f.path(), &["retime", "--video", "data/demo/mixed.spdv", "--out", p.to_str().unwrap(), "--predictor", "oracle"]);
    let out = ok(f.path(), &["inspect", "ret_inspect/report.json"]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("retime report: rho*"));
}
