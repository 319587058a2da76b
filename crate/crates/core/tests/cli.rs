use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spatial-bnp"))
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env("SPATIAL_BNP_WORKERS", "1").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn test1_reports_every_method() {
    let data = fixture("gaussian_shift_seed42.csv");
    let o = run(&[
        "test1",
        "--data",
        data.to_str().unwrap(),
        "--theta0",
        "0,0",
        "--method",
        "npbayes,sign,hotelling",
        "--draws",
        "300",
        "--seed",
        "3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    for needle in ["method: npbayes", "method: sign", "method: hotelling", "region.center", "region.scatter", "p_value", "decision: reject"] {
        assert!(text.contains(needle), "missing {needle} in\n{text}");
    }
    assert!(text.contains("statistic: 18.460987"));
    let again = run(&["test1", "--data", data.to_str().unwrap(), "--theta0", "0,0", "--method", "npbayes,sign,hotelling", "--draws", "300", "--seed", "3"]);
    assert_eq!(stdout(&again), text);
}

#[test]
fn negative_theta0_and_header() {
    let dir = tempfile::tempdir().unwrap();
    let rows: String = (0..12).map(|i| format!("{},{}\n", -1.0 + 0.1 * (i % 5) as f64, 0.3 * (i % 4) as f64)).collect();
    let path = write(dir.path(), "d.csv", &format!("a,b\n{rows}"));
    let o = run(&["test1", "--data", &path, "--header", "--theta0", "-1,0.5", "--method", "bootstrap,signed_rank"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("n = 12, k = 2"));
}

#[test]
fn test2_identical_files_accept() {
    let data = fixture("gaussian_shift_seed42.csv");
    let d = data.to_str().unwrap();
    let o = run(&["test2", "--data1", d, "--data2", d, "--method", "sign,rank,hotelling"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.matches("decision: accept").count(), 3, "{text}");
    assert!(text.contains("n = 50 / 50"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = fixture("gaussian_shift_seed42.csv");
    let good = good.to_str().unwrap();
    let ragged = write(dir.path(), "ragged.csv", "1,2\n3,4\n5\n6,7\n");
    let three = write(dir.path(), "three.csv", "1,2,3\n3,4,5\n5,6,8\n6,7,1\n0,0,1\n");
    let bad_config = write(dir.path(), "bad.toml", "kind = \"one_sample\"\nreplications = 0\nmethods = [\"sign\"]\n");

    let code = |args: &[&str]| run(args).status.code().unwrap();
    assert_eq!(code(&["test1", "--data", good, "--theta0", "0,0", "--method", "sign"]), 0);
    assert_eq!(code(&["test1", "--data", good, "--theta0", "0,0", "--method", "median"]), 1);
    assert_eq!(code(&["test1", "--data", good, "--theta0", "0,0", "--alpha", "1.5"]), 1);
    assert_eq!(code(&["test1", "--data", good]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["power", "--config", &bad_config]), 1);
    assert_eq!(code(&["power", "--config", "/nonexistent/study.toml"]), 1);
    assert_eq!(code(&["test1", "--data", &ragged, "--theta0", "0,0"]), 2);
    assert_eq!(code(&["test2", "--data1", good, "--data2", &three]), 2);
    assert_eq!(code(&["--help"]), 0);

    let o = run(&["test1", "--data", &ragged, "--theta0", "0,0"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn power_writes_csv_and_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("table.csv");
    let config = fixture("small_study.toml");
    let o = run(&["power", "--config", config.to_str().unwrap(), "--reps", "3", "--seed", "5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("replications: 3, seed: 5"));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 6);
    assert!(csv.lines().skip(1).all(|l| l.contains(",3,")));

    let two = bin()
        .args(["power", "--config", config.to_str().unwrap(), "--reps", "3", "--seed", "5", "--workers", "2"])
        .output()
        .unwrap();
    let strip = |s: String| s.lines().filter(|l| !l.contains("wall time")).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(stdout(&two)), strip(stdout(&o)));
}

#[test]
fn powercmp_prints_theory_and_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "curve.toml",
        r#"
kind = "power_curve"
replications = 20
n = 60
methods = ["bootstrap"]
h = [[0.0, 0.0], [3.0, 0.0]]
mc_size = 20000

[prior]
draws = 200

[[distributions]]
name = "gaussian"
family = "mvn"
dim = 2
"#,
    );
    let out = dir.path().join("cmp.csv");
    let o = run(&["powercmp", "--config", &config, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let null = csv.lines().nth(1).unwrap();
    assert!(null.contains("bootstrap,0.050000,0.000000"), "{null}");
    assert_eq!(csv.lines().count(), 3);
}
