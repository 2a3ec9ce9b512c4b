use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const QUICK: &str = "\
# small toy run
num_cycles = 2
num_runs = 2
batch_size = 5
toy.n_inliers = 200
classifier.epochs = 30
teacher.epochs = 20
";

fn daal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_daal"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn gen_toy_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("toy");
    let cfg = write_config(dir.path(), "q.conf", QUICK);
    let res = daal(&[
        "gen-toy",
        "--config",
        &cfg,
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let manifest = fs::read_to_string(out.join("manifest.csv")).unwrap();
    let mut lines = manifest.lines();
    assert_eq!(lines.next(), Some("id,split,class_or_OUTLIER"));
    let rows: Vec<&str> = lines.collect();
    assert!(rows.iter().any(|r| r.ends_with(",pool,OUTLIER")));
    assert!(rows
        .iter()
        .all(|r| !(r.contains(",test,") && r.ends_with("OUTLIER"))));
}

#[test]
fn run_is_byte_identical_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "q.conf", QUICK);
    let mut outputs = Vec::new();
    for tag in ["a", "b"] {
        let out = dir.path().join(tag);
        let res = daal(&[
            "run",
            "--config",
            &cfg,
            "--seed",
            "9",
            "--score-dump",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(
            res.status.success(),
            "{}",
            String::from_utf8_lossy(&res.stderr)
        );
        outputs.push(
            ["runs.csv", "aggregate.csv", "scores.csv"].map(|f| fs::read(out.join(f)).unwrap()),
        );
    }
    assert_eq!(outputs[0], outputs[1]);
    let runs = String::from_utf8(outputs[0][0].clone()).unwrap();
    assert!(runs.starts_with(
        "run,cycle,beta,test_accuracy,cumulative_labeled,outlier_queries,cumulative_outlier_queries,wall_time_s\n"
    ));
    // 2 runs × (T + 1) cycles
    assert_eq!(runs.lines().count(), 1 + 2 * 3);
}

#[test]
fn compare_heatmap_and_latent_dump() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.conf", QUICK);
    let base = write_config(dir.path(), "b.conf", &format!("{QUICK}beta.beta0 = 0\n"));
    let out = dir.path().join("out");
    let o = out.to_str().unwrap();

    let res = daal(&["compare", "--config", &cfg, "--against", &base, "--out", o]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    assert!(out.join("runs_a.csv").exists() && out.join("aggregate_b.csv").exists());

    let res = daal(&["heatmap", "--config", &cfg, "--resolution", "8", "--out", o]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let pgm = fs::read_to_string(out.join("heatmap_q_beta.pgm")).unwrap();
    assert!(pgm.starts_with("P2\n8 8\n65535\n"));
    assert_eq!(pgm.lines().count(), 3 + 8);
    let side = fs::read_to_string(out.join("heatmap_phi.txt")).unwrap();
    assert!(side.contains("resolution 8"));

    let res = daal(&["latent-dump", "--config", &cfg, "--out", o]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let latent = fs::read_to_string(out.join("latent.csv")).unwrap();
    assert!(latent.starts_with("cycle,pool_id,z1,z2,pred_before,pred_after,true_label\n"));
    assert_eq!(latent.lines().count(), 1 + 3 * 5);
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let bad = write_config(dir.path(), "bad.conf", "beta.alpha = 1.5\n");
    let res = daal(&["run", "--config", &bad, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let unknown = write_config(dir.path(), "u.conf", "learning_rate = 3\n");
    assert_eq!(daal(&["run", "--config", &unknown]).status.code(), Some(2));
    assert_eq!(
        daal(&["run", "--config", "/nonexistent/x.conf"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn missing_data_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "m.conf",
        "dataset = mnist\n\
         mnist.train_images = nowhere/train-images-idx3-ubyte\n\
         mnist.train_labels = nowhere/train-labels-idx1-ubyte\n\
         mnist.test_images = nowhere/t10k-images-idx3-ubyte\n\
         mnist.test_labels = nowhere/t10k-labels-idx1-ubyte\n",
    );
    let out = dir.path().join("o");
    let res = daal(&[
        "train-teacher",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        res.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
}
