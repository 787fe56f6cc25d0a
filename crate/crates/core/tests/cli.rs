//! End-to-end runs of the `profilesim` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_profilesim");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// toy_pair with the second agent replaced by a copy of the first.
fn identical_agent_scenario(dir: &Path) -> std::path::PathBuf {
    let src = profilesim::scenario::bundled_source("toy_pair").unwrap();
    let mut v: Value = serde_json::from_str(src).unwrap();
    let agents = v["agents"].as_array_mut().unwrap();
    let mut twin = agents[0].clone();
    twin["id"] = "twin".into();
    twin["stream"] = 1.into();
    agents[1] = twin;
    let file = dir.join("twins.json");
    std::fs::write(&file, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    file
}

#[test]
fn simulate_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&[
            "simulate",
            "--steps",
            "1",
            "--seed",
            "7",
            "--out",
            path(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in [
        "trace_seed7.jsonl",
        "summary_seed7.csv",
        "report_seed7.json",
    ] {
        let x = std::fs::read(a.join(name)).unwrap();
        assert_eq!(x, std::fs::read(b.join(name)).unwrap(), "{name}");
        assert!(!x.contains(&b'\r'), "{name} has CR");
    }
}

#[test]
fn batch_matches_single_runs() {
    let dir = tempfile::tempdir().unwrap();
    let batch = dir.path().join("batch");
    let o = run(&[
        "simulate",
        "--scenario",
        "bundled:toy_pair",
        "--seeds",
        "10..=13",
        "--out",
        path(&batch),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for seed in 10..=13 {
        let single = dir.path().join(format!("single{seed}"));
        let s = seed.to_string();
        let o = run(&[
            "simulate",
            "--scenario",
            "bundled:toy_pair",
            "--seed",
            &s,
            "--out",
            path(&single),
        ]);
        assert!(o.status.success());
        for name in [
            format!("trace_seed{seed}.jsonl"),
            format!("summary_seed{seed}.csv"),
        ] {
            assert_eq!(
                std::fs::read(batch.join(&name)).unwrap(),
                std::fs::read(single.join(&name)).unwrap(),
                "{name}"
            );
        }
    }
}

#[test]
fn report_embeds_seed_and_scenario_hash() {
    let scenario = profilesim::Scenario::bundled("toy_pair").unwrap();
    let v = stdout_json(&run(&[
        "report",
        "--scenario",
        "bundled:toy_pair",
        "--seed",
        "9",
        "--steps",
        "5",
    ]));
    assert_eq!(v["seed"], 9);
    assert_eq!(v["steps"], 5);
    assert_eq!(v["scenario_hash"], scenario.content_hash());
}

#[test]
fn full_alignment_on_a_shared_model_leaves_no_residual() {
    let v = stdout_json(&run(&["align", "--components", "R,E,S,D", "--steps", "0"]));
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    let r = &rows[0]["residual"];
    assert_eq!(r["posterior_tv"], 0.0);
    assert_eq!(r["value_gap"], 0.0);
    assert_eq!(r["conclusions_differ"], false);
}

#[test]
fn sweep_prints_fifteen_rows_matching_single_calls() {
    let sweep = stdout_json(&run(&["align", "--sweep", "--steps", "40", "--seed", "3"]));
    let rows = sweep["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 15);
    for row in rows {
        let comps = row["components"].as_str().unwrap();
        let single = stdout_json(&run(&[
            "align",
            "--components",
            comps,
            "--steps",
            "40",
            "--seed",
            "3",
        ]));
        assert_eq!(&single["rows"][0], row);
    }
}

#[test]
fn identical_agents_are_indistinguishable() {
    let dir = tempfile::tempdir().unwrap();
    let file = identical_agent_scenario(dir.path());
    for mode in ["observation", "intervention"] {
        let v = stdout_json(&run(&[
            "discriminate",
            "--mode",
            mode,
            "--scenario",
            path(&file),
        ]));
        let result = &v["result"];
        assert_eq!(result["passes"], false, "{mode}");
        for c in result["ranking"].as_array().unwrap() {
            assert_eq!(c["score"], 0.0, "{mode}");
        }
    }
}

#[test]
fn discriminate_writes_into_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&run(&[
        "discriminate",
        "--mode",
        "intervention",
        "--steps",
        "20",
        "--out",
        path(dir.path()),
    ]));
    let on_disk: Value = serde_json::from_slice(
        &std::fs::read(dir.path().join("discriminate_intervention_seed2024.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(v, on_disk);
}

#[test]
fn validation_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let src = profilesim::scenario::bundled_source("toy_pair").unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        src.replace(
            "\"log\": 0.6, \"hunch\": 0.4",
            "\"log\": 0.58, \"hunch\": 0.4",
        ),
    )
    .unwrap();
    let o = run(&[
        "simulate",
        "--scenario",
        path(&bad),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("mixed") && err.contains("0.98"), "{err}");

    for args in [
        vec!["align", "--components", "R,X"],
        vec!["discriminate", "--mode", "vibes"],
        vec!["simulate", "--seeds", "5..2"],
        vec!["align", "--agents", "nobody,else"],
        vec!["frobnicate"],
    ] {
        assert_eq!(run(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn io_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(
        run(&["report", "--scenario", path(&missing)]).status.code(),
        Some(3)
    );

    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "not a directory").unwrap();
    let o = run(&[
        "simulate",
        "--steps",
        "1",
        "--out",
        path(&blocker.join("sub")),
    ]);
    assert_eq!(o.status.code(), Some(3));
}
