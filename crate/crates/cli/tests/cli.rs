use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;
use vevp::material::{Environment, MaterialParams};
use vevp::pathgen::{label_path, read_dataset, write_dataset, LoadingPath};
use vevp::surrogate::{forward, load_weights};
use vevp::tensor3::Tensor2;

fn vevp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vevp"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = vevp(dir, args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(dir: &Path, args: &[&str]) -> String {
    let out = vevp(dir, args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

/// Data rows of a CSV, skipping comments and the header.
fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect())
        .collect()
}

const TOY: &str = "
[generate]
count = 50
[train]
hidden = 16
epochs = 20
batch_size = 8
";

/// Larger run whose network is good enough to drive the FE solver.
const FE_NET: &str = "
[generate]
count = 300
[train]
hidden = 16
epochs = 40
batch_size = 16
";

/// A dataset and a small network shared by the tests that need weights.
struct Toy {
    dir: TempDir,
}

impl Toy {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn train_fixture(config: &str) -> Toy {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("toy.toml"), config).unwrap();
    ok(dir.path(), &["generate", "--config", "toy.toml", "--seed", "5", "--out", "toy.jsonl"]);
    ok(dir.path(), &["train", "--config", "toy.toml", "--seed", "5", "--dataset", "toy.jsonl", "--out", "w.json"]);
    Toy { dir }
}

fn toy() -> &'static Toy {
    static RUN: OnceLock<Toy> = OnceLock::new();
    RUN.get_or_init(|| train_fixture(TOY))
}

fn fe_net() -> &'static Toy {
    static RUN: OnceLock<Toy> = OnceLock::new();
    RUN.get_or_init(|| train_fixture(FE_NET))
}

#[test]
fn generate_is_reproducible() {
    let runs: Vec<Vec<u8>> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            std::fs::write(dir.path().join("c.toml"), "[generate]\ncount = 10\n").unwrap();
            ok(dir.path(), &["generate", "--config", "c.toml", "--seed", "11", "--out", "d.jsonl"]);
            std::fs::read(dir.path().join("d.jsonl")).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    let text = String::from_utf8(runs[0].clone()).unwrap();
    assert_eq!(text.lines().count(), 11);
    assert!(text.lines().next().unwrap().contains("config_sha256"));
}

#[test]
fn generate_zero_sequences_gives_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "[generate]\ncount = 0\n").unwrap();
    ok(dir.path(), &["generate", "--config", "c.toml", "--out", "d.jsonl"]);
    let ds = read_dataset(&dir.path().join("d.jsonl")).unwrap();
    assert!(ds.sequences.is_empty());
    assert_eq!(ds.manifest.unwrap().count, 0);
}

#[test]
fn invalid_bounds_fail_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "[generate.path]\ndiag_bounds = [1.1, 0.9]\n").unwrap();
    let err = fails(dir.path(), &["generate", "--config", "c.toml", "--out", "d.jsonl"]);
    assert!(err.contains("diag_bounds"), "{err}");
    assert!(!dir.path().join("d.jsonl").exists());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "[train]\nunits = 32\n").unwrap();
    let err = fails(dir.path(), &["train", "--config", "c.toml"]);
    assert!(err.contains("units"), "{err}");
}

#[test]
fn unknown_backend_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let err = fails(dir.path(), &["mp-drive", "--backend", "spline"]);
    assert!(err.contains("spline") && err.contains("classical"), "{err}");
}

#[test]
fn toy_training_lowers_the_loss() {
    let rows = csv_rows(&toy().path("w.loss.csv"));
    assert_eq!(rows.len(), 20);
    assert!(rows[19][2] < rows[0][2], "train MAE {} -> {}", rows[0][2], rows[19][2]);
    let text = std::fs::read_to_string(toy().path("w.json")).unwrap();
    assert!(text.contains("config_sha256") && text.contains("dataset_sha256"));
}

#[test]
fn training_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(toy().path("toy.jsonl"), dir.path().join("toy.jsonl")).unwrap();
    std::fs::write(dir.path().join("toy.toml"), TOY).unwrap();
    ok(dir.path(), &["train", "--config", "toy.toml", "--seed", "5", "--dataset", "toy.jsonl", "--out", "w.json"]);
    assert_eq!(std::fs::read(dir.path().join("w.json")).unwrap(), std::fs::read(toy().path("w.json")).unwrap());
}

#[test]
fn missing_dataset_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    assert!(fails(dir.path(), &["train"]).contains("no dataset"));
    assert!(fails(dir.path(), &["train", "--dataset", "nope.jsonl"]).contains("nope.jsonl"));
}

#[test]
fn saved_weights_reproduce_forward_outputs() {
    let t = toy();
    std::fs::write(t.path("replay.toml"), "[mp_drive]\npath_file = \"toy.jsonl\"\nsequence = 7\n").unwrap();
    ok(t.dir.path(), &["mp-drive", "--config", "replay.toml", "--backend", "surrogate", "--weights", "w.json", "--out", "replay_s.csv"]);
    let seqs = read_dataset(&t.path("toy.jsonl")).unwrap().sequences;
    let p = load_weights(&t.path("w.json"), Some(16)).unwrap();
    let expected = forward(&seqs[7].inputs, &p);
    let rows = csv_rows(&t.path("replay_s.csv"));
    assert_eq!(rows.len(), expected.len());
    for (row, e) in rows.iter().zip(&expected) {
        assert_eq!(&row[14..20], &e[..]);
    }
}

#[test]
fn resumed_training_starts_from_the_given_weights() {
    let t = toy();
    std::fs::write(t.path("resume.toml"), "[train]\nhidden = 16\nepochs = 1\nbatch_size = 8\n").unwrap();
    ok(t.dir.path(), &[
        "train", "--config", "resume.toml", "--seed", "5", "--dataset", "toy.jsonl", "--weights", "w.json", "--out", "w2.json",
    ]);
    let before = csv_rows(&t.path("w.loss.csv"));
    let after = csv_rows(&t.path("w2.loss.csv"));
    assert!(after[0][2] < before[0][2], "resumed {} vs fresh {}", after[0][2], before[0][2]);

    std::fs::write(t.path("wrong.toml"), "[train]\nhidden = 12\nepochs = 1\n").unwrap();
    let err = fails(t.dir.path(), &["train", "--config", "wrong.toml", "--dataset", "toy.jsonl", "--weights", "w.json"]);
    assert!(err.contains("H = 16"), "{err}");
}

#[test]
fn stored_path_replay_matches_labels() {
    let t = toy();
    std::fs::write(t.path("label.toml"), "[mp_drive]\npath_file = \"toy.jsonl\"\nsequence = 3\n").unwrap();
    ok(t.dir.path(), &["mp-drive", "--config", "label.toml", "--out", "replay_c.csv"]);
    let seqs = read_dataset(&t.path("toy.jsonl")).unwrap().sequences;
    let rows = csv_rows(&t.path("replay_c.csv"));
    assert_eq!(rows.len(), seqs[3].len());
    for (row, target) in rows.iter().zip(&seqs[3].targets) {
        assert_eq!(&row[14..20], &target[..]);
    }
}

#[test]
fn identity_path_gives_zero_stress() {
    let dir = tempfile::tempdir().unwrap();
    let path = LoadingPath {
        f: vec![Tensor2::identity(); 6],
        dt: vec![1.0; 6],
        env: Environment::new(0.012, 0.1),
    };
    let seq = label_path(&path, &MaterialParams::table3()).unwrap();
    write_dataset(&dir.path().join("id.jsonl"), None, &[seq]).unwrap();
    std::fs::write(dir.path().join("c.toml"), "[mp_drive]\npath_file = \"id.jsonl\"\n").unwrap();
    ok(dir.path(), &["mp-drive", "--config", "c.toml", "--out", "id.csv"]);
    let rows = csv_rows(&dir.path().join("id.csv"));
    assert_eq!(rows.len(), 6);
    for row in rows {
        assert!(row[8..20].iter().all(|s| s.abs() <= 1e-10), "{row:?}");
    }
}

/// Stress at equal strain on the way up and on the way down.
#[test]
fn uniaxial_cycles_show_hysteresis_in_every_environment() {
    let dir = tempfile::tempdir().unwrap();
    for (w, v) in [(0.0, 0.0), (0.0, 0.1), (0.012, 0.0), (0.012, 0.1)] {
        std::fs::write(dir.path().join("c.toml"), format!("[environment]\nw_w = {w}\nv_np = {v}\n")).unwrap();
        ok(dir.path(), &["mp-drive", "--config", "c.toml", "--out", "cyc.csv"]);
        let a = ok(dir.path(), &["mp-drive", "--config", "c.toml", "--out", "cyc2.csv"]);
        assert!(!a.is_empty());
        assert_eq!(std::fs::read(dir.path().join("cyc.csv")).unwrap(), std::fs::read(dir.path().join("cyc2.csv")).unwrap());
        let rows = csv_rows(&dir.path().join("cyc.csv"));
        // default history: 2 cycles of 200 steps, peak at step 100
        assert_eq!(rows.len(), 401);
        for k in 10..100 {
            let (up, down) = (&rows[k], &rows[200 - k]);
            assert!((up[2] - down[2]).abs() < 1e-12);
            assert!(down[8] < up[8], "env ({w}, {v}) step {k}: {} vs {}", down[8], up[8]);
        }
    }
}

#[test]
fn bench_reports_both_backends() {
    let t = fe_net();
    assert!(fails(t.dir.path(), &["bench"]).contains("--weights"));
    let cfg = "[bench]\nrepeats = 1\nsimple = { kind = \"uniaxial-cyclic\", amplitude = 0.002, rate = 5e-4, cycles = 1, dt = 0.4 }\n";
    std::fs::write(t.path("bench.toml"), cfg).unwrap();
    let report = ok(t.dir.path(), &["bench", "--config", "bench.toml", "--weights", "w.json", "--out", "bench.csv"]);
    for label in ["simple", "complex"] {
        for backend in ["classical", "surrogate"] {
            assert!(report.contains(&format!("{label} path, {backend}:")), "{report}");
        }
        assert!(report.contains(&format!("{label} path speedup")));
    }
    let text = std::fs::read_to_string(t.path("bench.csv")).unwrap();
    assert!(text.starts_with("# vevp bench config-sha256 "));
    assert_eq!(csv_rows(&t.path("bench.csv")).len(), 21 + 101);
}

#[test]
fn fem_completes_two_cycles_with_both_backends() {
    let t = fe_net();
    ok(t.dir.path(), &["fem", "--out", "fem_c.csv"]);
    let rows = csv_rows(&t.path("fem_c.csv"));
    assert_eq!(rows.len(), 401);
    let peak = rows.iter().map(|r| r[1]).fold(f64::MIN, f64::max);
    assert!(peak > 0.0);
    assert!(rows.iter().all(|r| r[3] <= 25.0));

    let report = ok(t.dir.path(), &["fem", "--backend", "surrogate", "--weights", "w.json", "--out", "fem_s.csv"]);
    assert!(report.contains("force MAE against the classical backend"), "{report}");
    assert_eq!(csv_rows(&t.path("fem_s.csv")).len(), 401);
}

#[test]
fn malformed_mesh_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("mesh.txt"), "8 1\n0 0 0\n1 0 0\n1 1 zero\n").unwrap();
    std::fs::write(dir.path().join("c.toml"), "[fem]\nmesh_file = \"mesh.txt\"\n").unwrap();
    let err = fails(dir.path(), &["fem", "--config", "c.toml"]);
    assert!(err.contains("mesh.txt:4:"), "{err}");
}
