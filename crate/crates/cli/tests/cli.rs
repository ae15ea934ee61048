use std::process::{Command, Output};

use rational_mis::{Graph, OutputValue, RunRecord};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rational-mis"))
        .args(args)
        .env_remove("RMIS_SEED")
        .env_remove("RMIS_JOBS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn run_emits_one_valid_record_per_trial() {
    let o = cli(&[
        "run",
        "--graph",
        "cycle:16",
        "--protocol",
        "rps",
        "--trials",
        "100",
        "--seed",
        "7",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let g: Graph = "cycle:16"
        .parse::<rational_mis::GraphFamily>()
        .unwrap()
        .build(0)
        .unwrap();
    let recs: Vec<RunRecord> = stdout(&o)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(recs.len(), 100);
    assert!(recs.iter().all(|r| r.is_valid_mis(&g)));
    assert_eq!(recs[0].seed, 7);
}

#[test]
fn seed_env_var_and_reproducibility() {
    let a = cli(&[
        "run",
        "--graph",
        "path:9",
        "--protocol",
        "rank",
        "--trials",
        "5",
        "--seed",
        "11",
    ]);
    let b = Command::new(env!("CARGO_BIN_EXE_rational-mis"))
        .args([
            "run",
            "--graph",
            "path:9",
            "--protocol",
            "rank",
            "--trials",
            "5",
            "--jobs",
            "1",
        ])
        .env("RMIS_SEED", "11")
        .output()
        .unwrap();
    assert!(a.status.success() && b.status.success());
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn edge_list_with_deviation_reports_detection() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("edges.txt");
    std::fs::write(&path, "# path on three nodes\n0 1\n1 2\n").unwrap();
    let o = cli(&[
        "run",
        "--graph",
        path.to_str().unwrap(),
        "--protocol",
        "rank",
        "--trials",
        "20",
        "--deviate",
        "node=0,strategy=silent",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("detected_runs=20"), "{}", stderr(&o));
    let rec: RunRecord = serde_json::from_str(stdout(&o).lines().next().unwrap()).unwrap();
    assert_eq!(rec.deviations[0].strategy, "silent");
    assert!(rec.cheat_flags[1]);
}

#[test]
fn low_rank_constant_warns() {
    let o = cli(&[
        "validate",
        "--graph",
        "complete:3",
        "--protocol",
        "rank",
        "--rank-bits-c",
        "1",
    ]);
    assert!(o.status.success());
    assert!(
        stderr(&o).contains("warning: rank-bits-c"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn oracle_prints_rationals_and_decimals() {
    let o = cli(&["oracle", "--graph", "complete:2", "--protocol", "rps"]);
    let out = stdout(&o);
    assert!(
        out.contains("inclusion: 1/2 (0.500000), 1/2 (0.500000)"),
        "{out}"
    );
    assert!(out.contains("expected_iterations: 3/2 (1.500000)"), "{out}");
    let o = cli(&["oracle", "--graph", "complete:3", "--protocol", "rps"]);
    assert!(stdout(&o).contains("expected_iterations: 3 (3.000000)"));
    let o = cli(&[
        "oracle",
        "--graph",
        "complete:2",
        "--protocol",
        "rank",
        "--rank-bits",
        "4",
    ]);
    assert!(
        stdout(&o).contains("first_iteration_join: 15/32 (0.468750), 15/32"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn exit_codes() {
    assert_eq!(cli(&["run", "--graph", "hexagon:6"]).status.code(), Some(2));
    assert_eq!(
        cli(&[
            "run",
            "--graph",
            "cycle:4",
            "--deviate",
            "node=9,strategy=silent"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        cli(&[
            "run",
            "--graph",
            "cycle:4",
            "--protocol",
            "rps",
            "--deviate",
            "node=0,strategy=biased_rand"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(cli(&["oracle", "--graph", "path:4"]).status.code(), Some(2));
    assert_eq!(cli(&["run", "--protocol", "rps"]).status.code(), Some(2));
    assert_eq!(
        cli(&["validate", "--graph", "cycle:5"]).status.code(),
        Some(0)
    );
}

#[test]
fn config_file_round_trip_and_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let flags = [
        "--graph",
        "erdos_renyi:4/n:32",
        "--protocol",
        "rank",
        "--seed",
        "3",
        "--trials",
        "10",
        "--rank-bits-c",
        "2.5",
        "--v",
        "1,2,3",
        "--deviate",
        "node=1,strategy=garbage_sender,len=4",
        "--format",
        "csv",
        "--trace",
    ];
    let mut args = vec!["run", "--dump-config"];
    args.extend(flags);
    let first = cli(&args);
    assert!(first.status.success(), "{}", stderr(&first));
    let path = dir.path().join("c.toml");
    std::fs::write(&path, stdout(&first)).unwrap();
    let second = cli(&["run", "--dump-config", "--config", path.to_str().unwrap()]);
    assert_eq!(stdout(&first), stdout(&second));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "graph = \"cycle:4\"\ncolour = \"red\"\n").unwrap();
    let o = cli(&["validate", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"));
}

#[test]
fn config_file_drives_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs.csv");
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        format!(
            "graph = \"complete:4\"\nprotocol = \"rank\"\ntrials = 5\n[output]\nformat = \"csv\"\npath = {:?}\n",
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let o = cli(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("seed,protocol,terminated"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn trials_deviate_and_curve_subcommands() {
    let o = cli(&[
        "trials",
        "--graph",
        "complete:2",
        "--protocol",
        "rps",
        "--trials",
        "400",
    ]);
    assert!(o.status.success());
    let s: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(s["trials"], 400);
    assert_eq!(s["mis_valid"], 400);

    let o = cli(&[
        "deviate",
        "--graph",
        "path:3",
        "--protocol",
        "rank",
        "--trials",
        "200",
        "--catalog",
        "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 8);
    assert!(
        stdout(&o)
            .lines()
            .all(|l| l.contains("\"not_profitable\":true")),
        "{}",
        stdout(&o)
    );

    let o = cli(&[
        "curve",
        "--family",
        "cycle",
        "--sizes",
        "8,16",
        "--protocol",
        "rps",
        "--trials",
        "50",
        "--format",
        "csv",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("n,trials,terminated_fraction,mean_iterations,median_iterations"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn trace_flag_includes_actions() {
    let o = cli(&[
        "run",
        "--graph",
        "complete:2",
        "--protocol",
        "rps",
        "--trace",
    ]);
    let rec: RunRecord = serde_json::from_str(stdout(&o).trim()).unwrap();
    let trace = rec.trace.expect("trace requested");
    assert!(trace
        .iter()
        .any(|e| e.action.output == Some(OutputValue::One)));
    let o = cli(&["run", "--graph", "complete:2", "--protocol", "rps"]);
    assert!(!stdout(&o).contains("\"trace\""));
}
