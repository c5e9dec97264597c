use std::fs;
use std::io::BufReader;

use nonstat_core::harness::{
    aggregate, csv_name, run_experiment, AggregateReport, ExperimentSpec, Manifest, Prepared, RunSummary,
    AGGREGATE_FILE, MANIFEST_FILE,
};
use nonstat_core::master::RunLog;
use serde_json::json;

fn spec(v: serde_json::Value) -> ExperimentSpec {
    ExperimentSpec::from_json(&v.to_string()).unwrap()
}

fn check_artifacts(spec: &ExperimentSpec) {
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(spec, dir.path(), 2).unwrap();
    let prepared = Prepared::new(spec.clone()).unwrap();
    let mut summaries = Vec::new();
    for &seed in &spec.seeds {
        let file = fs::File::open(dir.path().join(csv_name(seed))).unwrap();
        let from_csv = RunLog::read_csv(BufReader::new(file)).unwrap();
        let direct = prepared.run_seed(seed).unwrap();
        assert_eq!(from_csv, direct, "seed {seed}");
        summaries.push(RunSummary::from_log(seed, &from_csv).unwrap());
    }
    // the aggregate can be rebuilt from the CSVs alone
    assert_eq!(aggregate(&prepared, &summaries).unwrap(), report);
    let text = fs::read_to_string(dir.path().join(AGGREGATE_FILE)).unwrap();
    assert_eq!(AggregateReport::from_json(&text).unwrap(), report);
    let manifest: Manifest =
        serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest.status, "ok");
    assert_eq!(manifest.runs.len(), spec.seeds.len());
}

#[test]
fn bandit_artifacts_round_trip() {
    check_artifacts(&spec(json!({
        "env": {"kind": "mab", "T": 700, "segments": [
            {"length": 300, "means": [0.2, 0.8, 0.5]},
            {"length": 400, "means": [0.9, 0.1, 0.5], "means_end": [0.5, 0.5, 0.5]}
        ]},
        "algorithm": "master+ucb1", "kappa": 0.001, "seeds": [4, 1, 9]
    })));
}

#[test]
fn mdp_artifacts_round_trip() {
    check_artifacts(&spec(json!({
        "env": {"kind": "infinite", "T": 600, "seed": 2, "S": 3, "A": 2, "segments": [
            {"length": 300, "preset": "random"}, {"length": 300, "preset": "river_swim"}
        ]},
        "algorithm": "borl", "kappa": "inf", "seeds": [0, 1]
    })));
}

#[test]
fn episodic_artifacts_round_trip() {
    check_artifacts(&spec(json!({
        "env": {"kind": "episodic", "T": 300, "seed": 1, "S": 2, "A": 2, "H": 2,
                "segments": [{"length": 300, "random": true}]},
        "algorithm": "master+qucb", "seeds": [0, 5]
    })));
}

#[test]
fn reruns_are_bitwise_identical() {
    let s = spec(json!({
        "env": {"kind": "linear", "T": 500, "actions": [[1, 0], [0, 1], [0.6, 0.6]],
                "drift": {"start": [0.9, 0.1], "end": [0.1, 0.9]}},
        "algorithm": "master+oful", "kappa": 0.002, "seeds": [0, 1, 2, 3], "master_seed": 11
    }));
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&s, a.path(), 1).unwrap();
    run_experiment(&s, b.path(), 4).unwrap();
    for seed in &s.seeds {
        let name = csv_name(*seed);
        assert_eq!(
            fs::read(a.path().join(&name)).unwrap(),
            fs::read(b.path().join(&name)).unwrap()
        );
    }
    assert_eq!(
        fs::read(a.path().join(AGGREGATE_FILE)).unwrap(),
        fs::read(b.path().join(AGGREGATE_FILE)).unwrap()
    );
}

#[test]
fn master_seed_changes_the_runs() {
    let base = json!({
        "env": {"kind": "mab", "T": 200, "segments": [{"length": 200, "means": [0.4, 0.6]}]},
        "algorithm": "ucb1"
    });
    let mut other = base.clone();
    other["master_seed"] = json!(1);
    let a = Prepared::new(spec(base)).unwrap().run_seed(0).unwrap();
    let b = Prepared::new(spec(other)).unwrap().run_seed(0).unwrap();
    assert_ne!(a, b);
}
