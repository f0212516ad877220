use std::process::{Command, Output};

fn prsa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prsa")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn simulate_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = prsa(&[
        "simulate", "--topology", "abilene", "--slots", "32", "--mode", "st,pt1", "--tr", "5", "--load", "30",
        "--seeds", "2", "--requests", "1000", "--output", out, "--name", "run",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("load,policy,k,gb,max_dd_ps,tr,seed,offered,blocked,blocking_prob,agg_ratio,hist_1"));
    assert_eq!(lines.count(), 4);
    assert!(dir.path().join("run_paths.csv").exists());
}

#[test]
fn unknown_flag_fails() {
    let o = prsa(&["simulate", "--no-such-flag"]);
    assert!(!o.status.success());
}

#[test]
fn oversized_demand_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = prsa(&[
        "simulate", "--topology", "abilene", "--slots", "8", "--tr", "9", "--output", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn export_ilp_counts() {
    let dir = tempfile::tempdir().unwrap();
    let lp = dir.path().join("one.lp");
    let o = prsa(&["export-ilp", "--topology", "ring15", "--paths", "4", "--slots", "16", "--lp", lp.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("node pairs: 210"), "{text}");
    assert!(text.contains("y variables per request: 64"), "{text}");
    assert!(text.contains("y variables total: 13440"), "{text}");
    let model = std::fs::read_to_string(lp).unwrap();
    assert!(model.starts_with("Minimize") || model.contains("Subject To"));
}

#[test]
fn oracle_check_passes() {
    let o = prsa(&["oracle-check", "--seed", "3", "--instances", "15"]);
    assert!(o.status.success(), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
}

#[test]
fn topo_info_reports_counts() {
    let o = prsa(&["topo-info", "--topology", "us"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("24") && text.contains("84"), "{text}");
}

#[test]
fn scenario_file_runs() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.toml");
    std::fs::write(
        &scenario,
        "name = \"s\"\ntopology = \"ring15\"\nslots = 16\npolicies = [\"pt:250us\"]\ntr = [\"1-4\"]\nloads = [10]\nseeds = 1\nrequests = 500\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = prsa(&["simulate", "--scenario", scenario.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("s.csv").exists());
}

#[test]
fn scenario_unknown_key_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("bad.toml");
    std::fs::write(&scenario, "name = \"bad\"\nlaods = [10]\n").unwrap();
    let o = prsa(&["simulate", "--scenario", scenario.to_str().unwrap(), "--output", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_scenarios_parse() {
    let dir = format!("{}/scenarios", env!("CARGO_MANIFEST_DIR"));
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.parse::<toml::Table>().is_ok(), "{}", path.display());
    }
}
