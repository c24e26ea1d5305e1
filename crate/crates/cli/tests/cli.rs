use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_utilgrid"))
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

const SMALL: &str = r#"
seed = 3

[[sites]]
name = "home"

[[accounts]]
name = "user"
credit = 1000.0

[[accounts]]
name = "owner"

[[resources]]
name = "r1"
site = "home"
n_pe = 2
mips = 100.0
base_price = 1.0
provider = "owner"
apps = ["app"]

[[sessions]]
name = "s"
consumer = "user"
home_site = "home"
app = "app"
strategy = "cost"
deadline = 1000.0
budget = 500.0
plan = """
parameter i integer range 1 4 step 1;
task app
  input "f-${i}.dat" 1
  length 1000
endtask
"""
default_file_site = "home"
"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn run_small_scenario_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "s.toml", SMALL);
    let out = dir.path().join("out");
    let o = run(&["run", sc.to_str().unwrap(), "--out", out.to_str().unwrap(), "--trace"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["summary.json", "jobs.csv", "ledger.csv", "events.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["sessions"][0]["jobs_done"], 4);
    assert_eq!(summary["conservation_ok"], true);
    let jobs = fs::read_to_string(out.join("jobs.csv")).unwrap();
    assert!(jobs.starts_with("job,resource,submit,start,finish,compute_cost,data_cost,status\n"));
    assert_eq!(jobs.lines().count(), 5);
}

#[test]
fn malformed_toml_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "bad.toml", "seed = \n[[sites]\n");
    let o = run(&["run", sc.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let o = run(&["validate", sc.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_scenario_file_exits_2() {
    let o = run(&["run", "/nonexistent/scenario.toml", "--out", "/tmp/never"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn dangling_file_reference_exits_3_and_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("default_file_site = \"home\"\n", "");
    let sc = write(dir.path(), "dangling.toml", &text);
    let o = run(&["run", sc.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("f-1.dat"));
    let o = run(&["validate", sc.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stdout).contains("f-1.dat"));
}

#[test]
fn unknown_site_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("site = \"home\"\nn_pe", "site = \"mars\"\nn_pe");
    let sc = write(dir.path(), "site.toml", &text);
    let o = run(&["validate", sc.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stdout).contains("mars"));
}

#[test]
fn unaffordable_session_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("credit = 1000.0", "credit = 10.0");
    let sc = write(dir.path(), "poor.toml", &text);
    let out = dir.path().join("o");
    let o = run(&["run", sc.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(out.join("summary.json").exists());
}

#[test]
fn same_seed_gives_identical_trace() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenarios().join("newswire.toml");
    let mut traces = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("o{k}"));
        let o = run(&["run", sc.to_str().unwrap(), "--seed", "42", "--trace", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        traces.push((fs::read(out.join("events.csv")).unwrap(), fs::read(out.join("jobs.csv")).unwrap()));
    }
    assert_eq!(traces[0], traces[1]);
}

#[test]
fn strategy_override_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "s.toml", SMALL);
    let out = dir.path().join("o");
    let o = run(&["run", sc.to_str().unwrap(), "--strategy", "time", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["sessions"][0]["strategy"], "time");
}

#[test]
fn bundled_scenarios_validate() {
    for name in ["belle.toml", "newswire.toml"] {
        let o = run(&["validate", scenarios().join(name).to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{name}: {}", String::from_utf8_lossy(&o.stdout));
    }
}

#[test]
fn expand_lists_every_job() {
    let o = run(&["expand", scenarios().join("newswire.plan").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().count(), 13);
    assert!(stdout.contains("news-reuters-3.tar:7"));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("12 jobs"));
}

#[test]
fn expand_rejects_bad_plan() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "bad.plan", "parameter x integer range 1 3 step 1;\ntask t\n  input \"${y}\" 1\nendtask\n");
    let o = run(&["expand", p.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
}
