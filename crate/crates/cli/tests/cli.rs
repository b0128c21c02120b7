use std::path::Path;
use std::process::{Command, Output};

fn spotsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spotsim")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn exit_codes_follow_error_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();

    let cfg = write(tmp.path(), "typo.toml", "seed = 1\n[layout]\nstripz = 4\n");
    let o = spotsim(&["simulate", "--config", &cfg, "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let cfg = write(tmp.path(), "speed.toml", "seed = 1\n[vehicle]\nspeed_kmh = -3\n");
    let o = spotsim(&["simulate", "--config", &cfg, "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("vehicle.speed_kmh"));

    let o = spotsim(&["simulate", "--config", "/nonexistent/run.toml", "--out", out]);
    assert_eq!(o.status.code(), Some(3));

    let bad = write(
        tmp.path(),
        "bad.csv",
        "trial,treatment,weeds_sprayed,weeds_missed,hit_rate,usage_l_ha,images_total,images_with_detection,area_ha\n1,spot,3,1,,abc,,,\n",
    );
    let o = spotsim(&["analyze", "--treatments", &bad]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("row 2") && stderr(&o).contains("usage_l_ha"));

    let empty = write(tmp.path(), "empty.csv", "");
    let o = spotsim(&["analyze", "--treatments", &empty]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("empty input"));
}

#[test]
fn simulate_reports_both_treatments() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "run.toml",
        "seed = 2\n[layout]\nstrips = 4\nrows_per_strip = 2\nstrip_length_m = 30.0\n\n[field]\nintensity_per_m2 = 0.0\n\n[detector]\nfpr = 0.0\n",
    );
    let out = tmp.path().join("out");
    let o = spotsim(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let strips = std::fs::read_to_string(out.join("strips.csv")).unwrap();
    assert_eq!(strips.lines().filter(|l| l.contains(",spot,")).count(), 2);
    assert_eq!(strips.lines().filter(|l| l.contains(",blanket,")).count(), 2);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    // usage_spot_l_ha
    assert_eq!(row[4], "0");
}

#[test]
fn paper_compare_prints_labelled_report() {
    let o = spotsim(&["paper-compare"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("published reference (transcribed)"));
    assert!(text.lines().any(|l| l.starts_with("average")));
}
