use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn dsq(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsq"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("dsq runs")
}

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
        .display()
        .to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", stderr(o));
    serde_json::from_str(&stdout(o)).unwrap()
}

fn as_usizes(v: &Value) -> Vec<usize> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_u64().unwrap() as usize)
        .collect()
}

fn tmp() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

#[test]
fn mujoco_fixtures_reproduce_coi_column() {
    let dir = tmp();
    let v = json(&dsq(
        &[
            "rank",
            "--fixtures",
            &fixture("mujoco.csv"),
            "--format",
            "json",
        ],
        dir.path(),
    ));
    assert_eq!(
        as_usizes(&v["table"]["coi_ranks"]),
        vec![8, 7, 9, 11, 10, 5, 4, 3, 6, 1, 0, 2]
    );
    assert_eq!(v["table"]["half_split"]["hits"], 10);
    // Closed form on the fixture columns: sum d^2 = 54 over n = 12.
    let coi = v["table"]["spearman"]["coi"].as_f64().unwrap();
    assert!((coi - (1.0 - 6.0 * 54.0 / 1716.0)).abs() < 1e-12);
}

#[test]
fn ib_fixtures_reproduce_rho_rows() {
    let dir = tmp();
    let v = json(&dsq(
        &[
            "rank",
            "--fixtures",
            &fixture("ib.csv"),
            "--exclude-prefix",
            "bad-",
            "--format",
            "json",
        ],
        dir.path(),
    ));
    let rho = &v["table"]["spearman"];
    for (key, want) in [("eri", 0.91), ("eas", 0.13), ("coi", 0.75)] {
        assert!((rho[key].as_f64().unwrap() - want).abs() <= 0.01, "{key}");
    }
    let sub = &v["subsets"][0];
    for (key, want) in [("eri", 0.81), ("eas", 0.83), ("coi", 0.86)] {
        assert!((sub[key].as_f64().unwrap() - want).abs() <= 0.01, "{key}");
    }
}

#[test]
fn csv_and_json_carry_identical_numbers() {
    let dir = tmp();
    let f = fixture("mujoco.csv");
    let v = json(&dsq(
        &["rank", "--fixtures", &f, "--format", "json"],
        dir.path(),
    ));
    let csv = stdout(&dsq(
        &["rank", "--fixtures", &f, "--format", "csv"],
        dir.path(),
    ));
    let names: Vec<&str> = v["table"]["names"]
        .as_array()
        .unwrap()
        .iter()
        .map(|n| n.as_str().unwrap())
        .collect();
    let mut rows = 0;
    for line in csv.lines().skip(1).take_while(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        let i = names.iter().position(|n| *n == f[0]).unwrap();
        for (col, key) in [
            (1, "eri_ranks"),
            (2, "eas_ranks"),
            (3, "coi_scores"),
            (4, "coi_ranks"),
            (5, "tri_ranks"),
        ] {
            assert_eq!(f[col], v["table"][key][i].to_string(), "{key} for {}", f[0]);
        }
        rows += 1;
    }
    assert_eq!(rows, 12);
    let rho = csv
        .lines()
        .find(|l| l.starts_with("spearman_rho_to_tri,"))
        .unwrap();
    let f: Vec<&str> = rho.split(',').collect();
    for (col, key) in [(1, "eri"), (2, "eas"), (3, "coi")] {
        assert_eq!(
            f[col].parse::<f64>().unwrap(),
            v["table"]["spearman"][key].as_f64().unwrap()
        );
    }
}

#[test]
fn select_on_mujoco_fixtures() {
    let dir = tmp();
    let f = fixture("mujoco.csv");
    let one = json(&dsq(
        &["select", "--fixtures", &f, "-k", "1", "--format", "json"],
        dir.path(),
    ));
    assert_eq!(one["selected"][0]["name"], "walker_medium_expert");
    assert!(one["selected"][0]["tri_rank"].as_u64().unwrap() >= 6);

    let half = json(&dsq(
        &["select", "--fixtures", &f, "-k", "6", "--format", "json"],
        dir.path(),
    ));
    let picked = half["selected"].as_array().unwrap();
    assert!(picked.iter().all(|e| e["coi_rank"].as_u64().unwrap() >= 6));
    let in_tri_top = picked
        .iter()
        .filter(|e| e["tri_rank"].as_u64().unwrap() >= 6)
        .count();
    assert_eq!(in_tri_top, 5);

    let all = json(&dsq(
        &["select", "--fixtures", &f, "-k", "12", "--format", "json"],
        dir.path(),
    ));
    let ranks: Vec<u64> = all["selected"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["coi_rank"].as_u64().unwrap())
        .collect();
    assert_eq!(ranks, (0..12).rev().collect::<Vec<u64>>());

    let too_many = dsq(&["select", "--fixtures", &f, "-k", "13"], dir.path());
    assert_eq!(too_many.status.code(), Some(1));
    assert!(stderr(&too_many).contains("13"));
}

#[test]
fn cost_model_annotates_meta_return() {
    let dir = tmp();
    let v = json(&dsq(
        &[
            "select",
            "--fixtures",
            &fixture("mujoco.csv"),
            "-k",
            "2",
            "--horizon",
            "9",
            "--delta-r",
            "2",
            "--fixed-cost",
            "5",
            "--format",
            "json",
        ],
        dir.path(),
    ));
    for e in v["selected"].as_array().unwrap() {
        assert_eq!(e["meta_return"].as_f64().unwrap(), 20.0 - 5.0);
    }
}

#[test]
fn usage_errors_exit_one() {
    let dir = tmp();
    for args in [
        &["analyze"][..],
        &["rank"],
        &["select", "--fixtures", "x.csv"],
        &["frobnicate"],
    ] {
        let o = dsq(args, dir.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
    }
    assert_eq!(dsq(&["--help"], dir.path()).status.code(), Some(0));
}

fn gen(dir: &Path, file: &str, sigma: &str, seed: &str) {
    let o = dsq(
        &[
            "gen-synth",
            "-o",
            file,
            "--sigma",
            sigma,
            "--trajectories",
            "10",
            "--length",
            "200",
            "--seed",
            seed,
        ],
        dir,
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn gen_synth_is_deterministic() {
    let dir = tmp();
    gen(dir.path(), "a.json", "0.3", "5");
    gen(dir.path(), "b.json", "0.3", "5");
    let a = std::fs::read(dir.path().join("a.bin")).unwrap();
    let b = std::fs::read(dir.path().join("b.bin")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn analyze_orders_eas_by_sigma_and_reports_partial_failure() {
    let dir = tmp();
    gen(dir.path(), "lo.json", "0.1", "1");
    gen(dir.path(), "hi.csv", "0.6", "2");
    std::fs::write(
        dir.path().join("broken.csv"),
        "s0,a0,r,ns0,episode_start\n1,2,3\n",
    )
    .unwrap();
    let args = [
        "analyze",
        "lo.json",
        "hi.csv",
        "broken.csv",
        "--epochs",
        "10",
        "--seed",
        "3",
        "--pin-timestamp",
        "--format",
        "json",
    ];
    let first = dsq(&args, dir.path());
    assert_eq!(first.status.code(), Some(2), "{}", stderr(&first));
    let v: Value = serde_json::from_str(&stdout(&first)).unwrap();
    let ds = v["datasets"].as_array().unwrap();
    assert_eq!(ds[2]["status"], "error");
    assert!(ds[2]["error"].as_str().unwrap().contains("line"));
    let eas = |i: usize| ds[i]["analysis"]["record"]["eas"].as_f64().unwrap();
    assert!(eas(0) < eas(1), "{} vs {}", eas(0), eas(1));
    assert_eq!(v["generated_at"], "1970-01-01T00:00:00Z");
    assert_eq!(v["config"]["train"]["epochs"], 10);

    let second = dsq(&args, dir.path());
    assert_eq!(
        first.stdout, second.stdout,
        "reports differ between identical runs"
    );

    std::fs::write(dir.path().join("report.json"), &first.stdout).unwrap();
    std::fs::write(
        dir.path().join("gt.csv"),
        "name,r_algo\nsynth-sigma0.1-seed1,0\nsynth-sigma0.6-seed2,0\n",
    )
    .unwrap();
    let ranked = json(&dsq(
        &[
            "rank",
            "report.json",
            "--ground-truth",
            "gt.csv",
            "--format",
            "json",
        ],
        dir.path(),
    ));
    assert!(ranked["table"]["spearman"].is_object());

    std::fs::write(
        dir.path().join("gt_bad.csv"),
        "name,r_algo\nsynth-sigma0.1-seed1,0\nmystery,1\n",
    )
    .unwrap();
    let bad = dsq(
        &["rank", "report.json", "--ground-truth", "gt_bad.csv"],
        dir.path(),
    );
    assert_eq!(bad.status.code(), Some(1));
    let msg = stderr(&bad);
    assert!(
        msg.contains("synth-sigma0.6-seed2") && msg.contains("mystery"),
        "{msg}"
    );
}

#[test]
fn all_datasets_failing_is_fatal_and_single_dataset_cannot_rank() {
    let dir = tmp();
    let o = dsq(&["analyze", "missing.json", "--epochs", "1"], dir.path());
    assert_eq!(o.status.code(), Some(1));

    gen(dir.path(), "one.json", "0.3", "1");
    let o = dsq(
        &[
            "analyze", "one.json", "--epochs", "1", "--hidden", "8", "--format", "json", "-o",
            "r.json",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let r = dsq(&["rank", "r.json"], dir.path());
    assert_eq!(r.status.code(), Some(1));
    assert!(
        stderr(&r).contains("ranking requires >= 2 datasets"),
        "{}",
        stderr(&r)
    );
}

#[test]
fn flags_override_config_file() {
    let dir = tmp();
    gen(dir.path(), "d.json", "0.3", "1");
    std::fs::write(
        dir.path().join("c.toml"),
        "epochs = 3\nhidden = [8]\nseed = 9\n",
    )
    .unwrap();
    let v = json(&dsq(
        &[
            "analyze", "d.json", "--config", "c.toml", "--epochs", "1", "--format", "json",
        ],
        dir.path(),
    ));
    let train = &v["config"]["train"];
    assert_eq!(train["epochs"], 1);
    assert_eq!(train["seed"], 9);
    assert_eq!(as_usizes(&train["arch"]["hidden"]), vec![8]);
}

#[test]
fn check_gradients_passes_on_default_audit() {
    let dir = tmp();
    let o = dsq(
        &["check-gradients", "--hidden", "32,32", "--format", "json"],
        dir.path(),
    );
    let v = json(&o);
    assert_eq!(v["pass"], true);
    assert!(v["max_rel_error"].as_f64().unwrap() < 1e-3);
}
