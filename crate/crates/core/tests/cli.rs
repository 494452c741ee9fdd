//! The installed binary: exit codes, seed fallback, config files and the
//! results files it writes.

use std::path::Path;
use std::process::{Command, Output};

fn declgrad(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_declgrad"));
    cmd.args(args).env_remove("DECLGRAD_SEED");
    if let Some(seed) = env_seed {
        cmd.env("DECLGRAD_SEED", seed);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["frobnicate"][..],
        &["train", "--mode", "sideways"],
        &["train", "--d", "0"],
        &["verify", "--filter", "no-such-check"],
        &["plot"],
    ] {
        let o = declgrad(args, None);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(declgrad(&["verify", "--filter", "norm-sign"], Some("x")).status.code(), Some(2));
}

#[test]
fn help_exits_0() {
    let o = declgrad(&["--help"], None);
    assert_eq!(o.status.code(), Some(0));
    for sub in ["verify", "gradcheck", "train", "plot"] {
        assert!(stdout(&o).contains(sub));
    }
}

#[test]
fn env_seed_is_the_fallback() {
    let o = declgrad(&["verify", "--filter", "norm-sign"], Some("17"));
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains(r#""seed":17"#), "{}", stdout(&o));
    let o = declgrad(&["verify", "--filter", "norm-sign", "--seed", "4"], Some("17"));
    assert!(stdout(&o).contains(r#""seed":4"#));
}

#[test]
fn config_file_merges_and_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    std::fs::write(&good, r#"{"seed": 5, "filter": "rank2", "samples": 1000}"#).unwrap();
    let o = declgrad(&["verify", "--config", path_str(&good), "--seed", "6"], None);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains(r#""seed":6"#) && text.contains("rank2-spectrum"), "{text}");

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"seed": 5, "sneed": 1}"#).unwrap();
    assert_eq!(declgrad(&["verify", "--config", path_str(&bad)], None).status.code(), Some(2));
    std::fs::write(&bad, "{not json").unwrap();
    assert_eq!(declgrad(&["verify", "--config", path_str(&bad)], None).status.code(), Some(2));
}

#[test]
fn degenerate_gradcheck_exits_1() {
    let o = declgrad(&["gradcheck", "--problem", "eigen", "--force-degenerate"], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("instance 0 (seed 0): eigenvalue 0 is not simple"), "{}", stdout(&o));
    assert_eq!(declgrad(&["gradcheck"], None).status.code(), Some(0));
}

#[test]
fn train_writes_both_modes_and_plot_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    let out = path_str(dir.path());
    let o = declgrad(&["train", "--problem", "sphere", "--d", "100", "--iters", "20", "--repeats", "2", "--out", out], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let approx = std::fs::read_to_string(dir.path().join("sphere_d100_approx.csv")).unwrap();
    let mut lines = approx.lines();
    assert_eq!(
        lines.next(),
        Some("run,iteration,loss,cos_sim_mean,cos_sim_min,descent_fraction,grad_mode,problem,seed")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 40);
    assert!(rows.iter().all(|r| r[5] == "1" && r[6] == "approx" && r[7] == "sphere" && r[8] == "0"));
    assert!(!approx.contains('\r'));
    assert!(dir.path().join("sphere_d100_exact.csv").exists());

    let svg = dir.path().join("c.svg");
    let o = declgrad(
        &[
            "plot",
            path_str(&dir.path().join("sphere_d100_exact.csv")),
            path_str(&dir.path().join("sphere_d100_approx.csv")),
            "--out",
            path_str(&svg),
            "--log-loss",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.contains(r#"width="800" height="1200""#));
}

#[test]
fn eigen_setting_names_match_file_names() {
    let dir = tempfile::tempdir().unwrap();
    let o = declgrad(
        &[
            "train", "--problem", "eigen", "--setting", "largest_negdef", "--mode", "approx", "--iters", "5",
            "--repeats", "1", "--out", path_str(dir.path()),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("eigen_largest_negdef_d5_approx.csv").exists());
}

#[test]
fn malformed_plot_input_names_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(
        &csv,
        "run,iteration,loss,cos_sim_mean,cos_sim_min,descent_fraction,grad_mode,problem,seed\n0,0,1,0.5,0.5,1,exact,sphere,0\n0,1,NaN?,0.5,0.5,1,exact,sphere,0\n",
    )
    .unwrap();
    let o = declgrad(&["plot", path_str(&csv), "--out", path_str(&dir.path().join("x.svg"))], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 3"));
}
