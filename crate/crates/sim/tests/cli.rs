use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = "\
problem.agents = 8
graph.eta = 0.5
solver.variant = piadmm1
solver.gamma = uniform:0.9,1.1
solver.init_lo = 0
solver.init_hi = 100
solver.max_iters = 400
output.datasets = true
attack.agents = 1,3
";

fn iadmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iadmm")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.cfg");
    fs::write(&p, text).unwrap();
    path(&p).to_string()
}

fn run_into(config: &str, out: &Path, extra: &[&str]) {
    let mut args = vec!["run", "--quiet", "--config", config, "--out", path(out)];
    args.extend_from_slice(extra);
    let o = iadmm(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let out = dir.path().join("out");
    run_into(&config, &out, &[]);
    for name in ["trace.csv", "transcript.csv", "graph.txt", "summary.txt", "plot.gp", "config.txt"] {
        assert!(out.join(name).is_file(), "{name}");
    }
    assert_eq!(fs::read_dir(out.join("datasets")).unwrap().count(), 8);
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("#schema=1\nk,agent,accuracy"));
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("comm_units=400\n"));
}

#[test]
fn identical_configs_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    run_into(&config, &a, &[]);
    run_into(&config, &b, &[]);
    run_into(&config, &c, &["--seed-override", "7"]);
    for name in ["trace.csv", "transcript.csv", "graph.txt", "summary.txt", "datasets/agent_001.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    assert_ne!(fs::read(a.join("transcript.csv")).unwrap(), fs::read(c.join("transcript.csv")).unwrap());
}

#[test]
fn attack_fills_truth_only_for_matching_transcripts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let run = dir.path().join("run");
    run_into(&config, &run, &[]);
    let transcript = run.join("transcript.csv");

    let matched = dir.path().join("matched");
    let o = iadmm(&["attack", "--quiet", "--config", &config, "--out", path(&matched), "--transcript", path(&transcript)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(matched.join("attack.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    // Two agents, two coordinates, states before and after each of 400 updates.
    assert_eq!(rows.len(), 2 * 2 * 401);
    assert!(rows.iter().all(|r| r.split(',').nth(3).is_some_and(|v| !v.is_empty())));

    let other = dir.path().join("other");
    let o = iadmm(&[
        "attack", "--quiet", "--config", &config, "--seed-override", "3", "--out", path(&other), "--transcript",
        path(&transcript),
    ]);
    assert!(o.status.success());
    let csv = fs::read_to_string(other.join("attack.csv")).unwrap();
    let row = csv.lines().filter(|l| !l.starts_with('#')).nth(1).unwrap();
    assert_eq!(row.split(',').nth(3), Some(""));
}

#[test]
fn mismatched_transcript_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let run = dir.path().join("run");
    run_into(&config, &run, &[]);
    let wider = write_config(dir.path(), &CONFIG.replace("problem.agents = 8", "problem.agents = 9"));
    let o = iadmm(&["attack", "--config", &wider, "--out", path(&run), "--transcript", path(&run.join("transcript.csv"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("9"));
}

#[test]
fn bad_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = write_config(dir.path(), "solver.speed = 3\n");
    let o = iadmm(&["run", "--config", &bad_key, "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
    let bad_value = write_config(dir.path(), "solver.rho = -2\n");
    assert_eq!(iadmm(&["run", "--config", &bad_value]).status.code(), Some(1));
    assert_eq!(iadmm(&["frobnicate"]).status.code(), Some(1));
    let garbage = dir.path().join("t.csv");
    fs::write(&garbage, "not a transcript\n").unwrap();
    let small = write_config(dir.path(), CONFIG);
    let o = iadmm(&["attack", "--config", &small, "--out", path(dir.path()), "--transcript", path(&garbage)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_rows_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "problem.agents = 6\ngraph.eta = 1\nsolver.max_iters = 120\n");
    let grid = dir.path().join("grid.cfg");
    fs::write(&grid, "sweep.rho = 1,10\nsweep.variant = iadmm,wadmm_baseline\nsweep.seeds = 3\n").unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("t{threads}"));
        let o = Command::new(env!("CARGO_BIN_EXE_iadmm"))
            .args(["sweep", "--quiet", "--config", &config, "--sweep", path(&grid), "--out", path(&out)])
            .env("RAYON_NUM_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(fs::read(out.join("sweep.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs.pop().unwrap()).unwrap();
    // 2 rho x 2 variants x 3 seeds runs, 20 cycles each plus the k = 0 row.
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count() - 1, 12 * 21);
}
