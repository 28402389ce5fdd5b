use std::path::Path;
use std::process::{Command, Output};

fn staxray(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_staxray")).args(args).current_dir(cwd).env_remove("STAXRAY_SEED").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const SPEC: &str = r#"{"name":"cli","policies":[{"policy":{"kind":"DARSS"}},{"policy":{"kind":"ORACLE"}}],"n":[6],"trials":2,"seed":3}"#;

#[test]
fn run_report_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("spec.json"), SPEC).unwrap();
    let o = staxray(&["run", "--spec", "spec.json", "--out", "a", "--workers", "2"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["table1.csv", "table2.csv", "runtime.csv", "records.json", "spec.json"] {
        assert!(d.join("a").join(f).exists(), "{f}");
    }
    let table1 = std::fs::read_to_string(d.join("a/table1.csv")).unwrap();
    assert!(table1.starts_with("policy,n,trials,successes,sr_percent"));
    assert!(table1.contains("\nOracle,6,2,2,100.0,"));

    // same spec and seed: byte-identical tables
    assert_eq!(code(&staxray(&["run", "--spec", "spec.json", "--out", "b", "--workers", "1"], d)), 0);
    for f in ["table1.csv", "table2.csv"] {
        assert_eq!(std::fs::read(d.join("a").join(f)).unwrap(), std::fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }

    std::fs::remove_file(d.join("a/table1.csv")).unwrap();
    let o = staxray(&["report", "--in", "a"], d);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read_to_string(d.join("a/table1.csv")).unwrap(), table1);

    let o = staxray(&["replay", "--trial", "a/trials/darss/n06/trial001"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("matches"));
}

#[test]
fn seed_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("spec.json"), SPEC).unwrap();
    let run = |out: &str, seed: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_staxray"))
            .args(["run", "--spec", "spec.json", "--out", out])
            .env("STAXRAY_SEED", seed)
            .current_dir(d)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0);
        std::fs::read_to_string(d.join(out).join("records.json")).unwrap()
    };
    let seed_of = |text: &str| serde_json::from_str::<serde_json::Value>(text).unwrap()[0]["setup"]["scene_seed"].clone();
    assert_eq!(seed_of(&run("x", "99")), seed_of(&run("y", "99")));
    assert_ne!(seed_of(&run("x", "99")), seed_of(&run("z", "100")));
}

#[test]
fn generate_writes_scene_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = staxray(&["generate", "--n", "6", "--count", "3", "--seed", "4", "--occluded", "--out", "scenes"], dir.path());
    assert_eq!(code(&o), 0);
    let first = std::fs::read_to_string(dir.path().join("scenes/scene_000.json")).unwrap();
    assert!(dir.path().join("scenes/scene_002.json").exists());
    let o = staxray(&["generate", "--n", "6", "--count", "1", "--seed", "4", "--occluded", "--out", "again"], dir.path());
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read_to_string(dir.path().join("again/scene_000.json")).unwrap(), first);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("zero.json"), r#"{"trials":0}"#).unwrap();
    assert_eq!(code(&staxray(&["run", "--spec", "zero.json", "--out", "o"], d)), 1);
    std::fs::write(d.join("broken.json"), "{").unwrap();
    assert_eq!(code(&staxray(&["run", "--spec", "broken.json", "--out", "o"], d)), 1);
    assert_eq!(code(&staxray(&["run", "--spec", "missing.json", "--out", "o"], d)), 1);

    std::fs::write(d.join("tiny.json"), r#"{"budget":50}"#).unwrap();
    let o = staxray(&["generate", "--n", "40", "--config", "tiny.json", "--occluded", "--out", "g"], d);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));

    std::fs::write(d.join("budget.json"), r#"{"n":[40],"trials":1,"generator":{"budget":50}}"#).unwrap();
    assert_eq!(code(&staxray(&["run", "--spec", "budget.json", "--out", "o"], d)), 0, "budget failures are recorded per trial");

    assert_eq!(code(&staxray(&["report", "--in", "nowhere"], d)), 3);
    assert_eq!(code(&staxray(&["replay", "--trial", "nowhere"], d)), 3);
}
