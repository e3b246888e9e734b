use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn spurmin(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_spurmin"));
    cmd.args(args).env_remove("SPURMIN_SEED");
    if let Some(s) = seed {
        cmd.env("SPURMIN_SEED", s);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = spurmin(&["gen", "--generator", "subspace", "--n", "12", "--d", "6", "--plus", "0,1", "--minus", "2,3", "--out", p(out)], Some("5"));
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read(a.with_extension("json")).unwrap(), fs::read(b.with_extension("json")).unwrap());
}

#[test]
fn seed_flag_overrides_environment() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    spurmin(&["gen", "--generator", "xor4", "--n", "20", "--out", p(&a), "--seed", "3"], Some("99"));
    spurmin(&["gen", "--generator", "xor4", "--n", "20", "--out", p(&b)], Some("3"));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn stochastic_commands_need_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = spurmin(&["gen", "--generator", "xor4", "--n", "4", "--out", p(&dir.path().join("x.csv"))], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
}

#[test]
fn bad_config_exits_with_one() {
    assert_eq!(spurmin(&["sweep", "--scenario", "nope"], Some("1")).status.code(), Some(1));
    assert_eq!(spurmin(&["sweep", "--scenario", "subspace", "--loss", "poly_hinge"], Some("1")).status.code(), Some(1));
}

#[test]
fn sweep_reports_zero_violations_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = spurmin(&["sweep", "--scenario", "subspace", "--restarts", "6", "--out-dir", p(out)], Some("11"));
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("violations: 0"));
    }
    for f in ["config.json", "runs.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let runs = fs::read_to_string(a.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 7);
}

#[test]
fn sweep_config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let o = spurmin(&["sweep", "--scenario", "separable", "--print-config"], None);
    assert_eq!(o.status.code(), Some(0));
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, stdout(&o)).unwrap();
    let o = spurmin(&["sweep", "--config", p(&cfg), "--n", "24", "--restarts", "3", "--print-config"], None);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["n"], 24);
    assert_eq!(v["train"]["restarts"], 3);
    assert_eq!(v["d"], 5);
}

#[test]
fn construct_then_certify_relu_on_cross() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("cross.csv");
    let c = dir.path().join("c.json");
    let cert = dir.path().join("cert.json");
    spurmin(&["gen", "--generator", "cross_balanced", "--n", "16", "--out", p(&data)], Some("2"));
    let o = spurmin(&["construct", "--kind", "relu_inactive", "--data", p(&data), "--m", "8", "--out", p(&c)], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = spurmin(&["certify", "--construction", p(&c), "--data", p(&data), "--out", p(&cert)], Some("4"));
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("verdict: certified_min_candidate"));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&cert).unwrap()).unwrap();
    assert_eq!(v["holds"], true);
    assert_eq!(v["certificate"]["training_error"], serde_json::json!([1, 2]));
}

#[test]
fn certify_flags_an_overstated_bound() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("cross.csv");
    let c = dir.path().join("c.json");
    spurmin(&["gen", "--generator", "cross_balanced", "--n", "16", "--out", p(&data)], Some("2"));
    spurmin(&["construct", "--kind", "relu_inactive", "--data", p(&data), "--m", "8", "--out", p(&c)], None);
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&c).unwrap()).unwrap();
    v["claimed_error_lower_bound"] = serde_json::json!([3, 4]);
    fs::write(&c, serde_json::to_string(&v).unwrap()).unwrap();
    let o = spurmin(&["certify", "--construction", p(&c), "--data", p(&data), "--k", "200"], Some("4"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn check_condition_on_xor_prints_separator() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("xor.csv");
    let out = dir.path().join("v.json");
    spurmin(&["gen", "--generator", "xor4_balanced", "--n", "4", "--out", p(&data)], Some("1"));
    let o = spurmin(&["check-condition", "--data", p(&data), "--out", p(&out)], None);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("quadratic: YES") && s.contains("A = "));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["quadratic"]["verdict"], "yes");
}

#[test]
fn least_squares_rate_is_one_sixteenth() {
    let o = spurmin(&["least-squares"], None);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("rate: 1/16"));
    let o = spurmin(&["least-squares", "--shifted"], None);
    assert!(stdout(&o).contains("rate: 0"));
    assert_eq!(spurmin(&["least-squares", "--samples", "1000"], None).status.code(), Some(1));
}

#[test]
fn quadloss_exit_codes_follow_the_bound() {
    let o = spurmin(&["quadloss", "--example", "linsep", "--flipped"], None);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("quadloss_linsep: training_error 1/4"));
    // The subspace example's exact minimiser has zero error, below the bound.
    let o = spurmin(&["quadloss", "--example", "subspace"], None);
    assert_eq!(o.status.code(), Some(2));
}
