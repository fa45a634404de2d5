use std::path::Path;
use std::process::Command;

use court_learning::experiment::{load_config, KWIK_CSV_HEADER, REGRET_CSV_HEADER, SLOPES_CSV_HEADER};
use court_learning::sim::replication_seed;

const BIN: &str = env!("CARGO_BIN_EXE_court-learning");

const ETC_CONFIG: &str = r#"
sweep = [100, 300, 1000]
replications = 10
seed = 5

[truth]
family = "constant"
mu = 0.5
sigma = 0.5
alpha = 1.0

[cost]
distribution = "uniform"
c_min = 0.5
c_max = 1.0

[[policy]]
name = "explore_then_commit"
"#;

const KWIK_CONFIG: &str = r#"
sweep = [500]
replications = 2

[truth]
family = "linear"
beta = [0.1, 0.1, -0.1]
beta0 = 0.5
sigma = 0.05
alpha = 1.0

[cost]
distribution = "point"
c = 1.0

[learner]
kind = "norm_constrained"

[[policy]]
name = "kwik"
epsilon = 0.25
delta = 0.05
alpha1_constant = 20.0
"#;

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().unwrap()
}

#[test]
fn golden_headers() {
    assert_eq!(
        REGRET_CSV_HEADER,
        "policy,T,mean_regret,std_error,mean_court_count,mean_total_subsidy,mean_offline_loss"
    );
    assert_eq!(SLOPES_CSV_HEADER, "policy,slope");
    assert_eq!(
        KWIK_CSV_HEADER,
        "T,n,epsilon,delta,predicted_count,compelled_count,fraction_predictions_within_eps,max_abs_prediction_error"
    );
}

#[test]
fn run_writes_one_row_per_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "etc.toml", ETC_CONFIG);
    let out = dir.path().join("out");
    let o = run(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let regret = std::fs::read_to_string(out.join("regret.csv")).unwrap();
    let lines: Vec<&str> = regret.lines().collect();
    assert_eq!(lines[0], REGRET_CSV_HEADER);
    assert_eq!(lines.len(), 4);
    for (line, t) in lines[1..].iter().zip(["100", "300", "1000"]) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 7);
        assert_eq!(fields[0], "explore_then_commit");
        assert_eq!(fields[1], t);
        for f in &fields[2..] {
            assert!(f.parse::<f64>().unwrap().is_finite());
        }
    }

    let slopes = std::fs::read_to_string(out.join("slopes.csv")).unwrap();
    let lines: Vec<&str> = slopes.lines().collect();
    assert_eq!(lines, vec![SLOPES_CSV_HEADER, lines[1]]);
    assert!(lines[1].starts_with("explore_then_commit,"));
}

#[test]
fn same_seed_same_bytes_and_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "etc.toml", ETC_CONFIG);
    let read = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = run(&[
            "run",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert!(o.status.success());
        std::fs::read(out.join("regret.csv")).unwrap()
    };
    assert_eq!(read("a", "1"), read("b", "1"));
    assert_ne!(read("a", "1"), read("c", "2"));
}

#[test]
fn ledgers_carry_the_config_digest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "etc.toml", ETC_CONFIG);
    let out = dir.path().join("out");
    let o = run(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--replications",
        "2",
        "--ledgers",
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(out.join("ledgers.jsonl")).unwrap();
    let ledgers: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    // one policy, three horizons, two replications
    assert_eq!(ledgers.len(), 6);
    let mut spec = load_config(&cfg).unwrap();
    spec.replications = 2;
    spec.out_dir = out.clone();
    for l in &ledgers {
        assert_eq!(l["experiment_digest"].as_str().unwrap(), spec.digest());
        let t = l["T"].as_u64().unwrap() as usize;
        let ledger = &l["ledger"];
        assert_eq!(ledger["records"].as_array().unwrap().len(), t);
        let cell = spec.run_config(0, t).unwrap();
        let mut expected = cell.clone();
        expected.seed = replication_seed(cell.seed, l["replication"].as_u64().unwrap() as usize);
        assert_eq!(ledger["config_digest"].as_str().unwrap(), expected.digest());
        assert_eq!(ledger["seed"].as_u64().unwrap(), expected.seed);
    }
}

#[test]
fn kwik_subcommand_writes_kwik_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "kwik.toml", KWIK_CONFIG);
    let out = dir.path().join("out");
    let o = run(&["kwik", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("kwik.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], KWIK_CSV_HEADER);
    assert_eq!(lines.len(), 2);
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&fields[..4], &["500", "3", "0.25", "0.05"]);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.toml",
        &ETC_CONFIG.replace("c_min = 0.5", "c_min = 0.0"),
    );
    let o = run(&[
        "run",
        bad.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cost.c_min"));

    let bad = write(
        dir.path(),
        "sweep.toml",
        &ETC_CONFIG.replace("[100, 300, 1000]", "[1000, 100]"),
    );
    let o = run(&["run", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sweep must be increasing"));

    let missing = dir.path().join("nope.toml");
    let o = run(&["run", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
