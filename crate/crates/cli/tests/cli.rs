use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
seed = 3
[cohort]
n_participants = 600
n_homesteads = 300
[trajectories]
n_participants = 30
days = 3.0
"#;

fn ctxexp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctxexp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Synthetic cohort and trajectories in one directory.
fn dataset() -> (TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("synth.toml");
    fs::write(&cfg, SMALL).unwrap();
    let data = tmp.path().join("data");
    for kind in ["cohort", "trajectories"] {
        assert_ok(&ctxexp(&[
            "--config",
            s(&cfg),
            "synth",
            kind,
            "--out-dir",
            s(&data),
        ]));
    }
    (tmp, data)
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn run_is_deterministic() {
    let (_tmp, data) = dataset();
    let cfg = data.join("pipeline.toml");
    let (a, b) = (data.join("a"), data.join("b"));
    assert_ok(&ctxexp(&["--config", s(&cfg), "run", "--out-dir", s(&a)]));
    assert_ok(&ctxexp(&["--config", s(&cfg), "run", "--out-dir", s(&b)]));
    let (mut fa, mut fb) = (files(&a), files(&b));
    fa.remove("manifest.json");
    fb.remove("manifest.json");
    assert!(fa.len() > 10);
    assert_eq!(fa, fb);
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma["outputs"], mb["outputs"]);
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    let inputs = ma["inputs"].as_array().unwrap();
    assert!(inputs
        .iter()
        .any(|i| i["path"].as_str().unwrap().ends_with("fixes.csv")));
}

#[test]
fn seed_changes_imputation() {
    let (_tmp, data) = dataset();
    let cfg = data.join("pipeline.toml");
    let (a, b) = (data.join("a"), data.join("b"));
    assert_ok(&ctxexp(&["--config", s(&cfg), "run", "--out-dir", s(&a)]));
    assert_ok(&ctxexp(&[
        "--config",
        s(&cfg),
        "--seed",
        "99",
        "run",
        "--out-dir",
        s(&b),
    ]));
    assert_ne!(
        fs::read(a.join("status_1.csv")).unwrap(),
        fs::read(b.join("status_1.csv")).unwrap()
    );
}

#[test]
fn stage_commands_match_run() {
    let (_tmp, data) = dataset();
    let cfg = data.join("pipeline.toml");
    let run = data.join("run");
    assert_ok(&ctxexp(&["--config", s(&cfg), "run", "--out-dir", s(&run)]));

    let st = data.join("stages");
    let c = s(&cfg);
    let d = |f: &str| data.join(f);
    assert_ok(&ctxexp(&[
        "--config",
        c,
        "impute",
        "--tests",
        s(&d("tests.csv")),
        "--rates",
        s(&d("rates.csv")),
        "--out-dir",
        s(&st.join("impute")),
    ]));
    assert_ok(&ctxexp(&[
        "prevalence",
        "--grid-config",
        c,
        "--homesteads",
        s(&d("homesteads.csv")),
        "--residents",
        s(&d("residents.csv")),
        "--status",
        s(&st.join("impute")),
        "--regions",
        s(&d("regions.geojson")),
        "--period",
        "2018",
        "--out-dir",
        s(&st.join("prev")),
    ]));
    assert_ok(&ctxexp(&[
        "activity",
        "--fixes",
        s(&d("fixes.csv")),
        "--grid-config",
        c,
        "--regions",
        s(&d("regions.geojson")),
        "--gap-min",
        "30",
        "--gammas",
        "50:95:1,100",
        "--out-dir",
        s(&st.join("act")),
    ]));
    let prev = st.join("prev").join("prevalence_2018.csv");
    assert_ok(&ctxexp(&[
        "exposure",
        "--activity-dir",
        s(&st.join("act")),
        "--prevalence",
        s(&prev),
        "--district-prevalence",
        s(&d("district_prevalence.csv")),
        "--regions",
        s(&d("regions.geojson")),
        "--grid-config",
        c,
        "--out-dir",
        s(&st.join("exp")),
    ]));
    assert_ok(&ctxexp(&[
        "analyze",
        "risk",
        "cluster",
        "ttest",
        "--exposure",
        s(&st.join("exp").join("exposure.csv")),
        "--activity-dir",
        s(&st.join("act")),
        "--prevalence",
        s(&prev),
        "--district-prevalence",
        s(&d("district_prevalence.csv")),
        "--grid-config",
        c,
        "--out-dir",
        s(&st.join("an")),
    ]));

    let same = |dir: &Path, name: &str| {
        assert_eq!(
            fs::read(dir.join(name)).unwrap(),
            fs::read(run.join(name)).unwrap(),
            "{name} differs"
        );
    };
    same(&st.join("impute"), "status_1.csv");
    same(&st.join("impute"), "status_5.csv");
    same(&st.join("prev"), "prevalence_2018.csv");
    same(&st.join("act"), "time_split.csv");
    same(&st.join("act"), "spaces.csv");
    same(&st.join("exp"), "exposure.csv");
    same(&st.join("an"), "risk.csv");
    same(&st.join("an"), "clusters.csv");
    assert!(!st.join("an").join("coverage.csv").exists());
}

#[test]
fn missing_column_names_file_and_column() {
    let (_tmp, data) = dataset();
    let fixes = data.join("fixes.csv");
    let text = fs::read_to_string(&fixes).unwrap();
    let stripped: String = text
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n")
        .collect();
    fs::write(&fixes, stripped).unwrap();
    let out_dir = data.join("out");
    let out = ctxexp(&[
        "--config",
        s(&data.join("pipeline.toml")),
        "run",
        "--out-dir",
        s(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("fixes.csv") && err.contains("`lat`"), "{err}");
    assert!(!out_dir.exists() || files(&out_dir).is_empty());
}

#[test]
fn bad_value_reports_first_bad_row() {
    let (_tmp, data) = dataset();
    let fixes = data.join("fixes.csv");
    let mut lines: Vec<String> = fs::read_to_string(&fixes)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    let mut parts: Vec<String> = lines[3].split(',').map(String::from).collect();
    parts[1] = "3 Jan 2019".into();
    lines[3] = parts.join(",");
    fs::write(&fixes, lines.join("\n") + "\n").unwrap();
    let out = ctxexp(&["--config", s(&data.join("pipeline.toml")), "run"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("row 3") && err.contains("`timestamp`"),
        "{err}"
    );
}

#[test]
fn all_gap_participant_is_skipped_with_warning() {
    let (_tmp, data) = dataset();
    let fixes = data.join("fixes.csv");
    let mut text = fs::read_to_string(&fixes).unwrap();
    for h in 0..6 {
        text.push_str(&format!(
            "Z9999,2019-01-01T{:02}:00:00Z,32.1,-28.4\n",
            h * 3
        ));
    }
    fs::write(&fixes, text).unwrap();
    let out_dir = data.join("out");
    assert_ok(&ctxexp(&[
        "--config",
        s(&data.join("pipeline.toml")),
        "run",
        "--out-dir",
        s(&out_dir),
    ]));
    let m = manifest(&out_dir);
    let act = m["stages"]
        .as_array()
        .unwrap()
        .iter()
        .find(|st| st["stage"] == "activity")
        .unwrap();
    assert!(act["warning_count"].as_u64().unwrap() >= 1);
    assert!(act["warnings"].to_string().contains("Z9999"));
    assert!(!out_dir.join("activity_Z9999.csv").exists());
    let exposure = fs::read_to_string(out_dir.join("exposure.csv")).unwrap();
    assert!(!exposure.contains("Z9999"));
}

#[test]
fn failed_stage_writes_nothing() {
    let (_tmp, data) = dataset();
    // drop one district so exposure finds time in a district without prevalence
    let dp = data.join("district_prevalence.csv");
    let text = fs::read_to_string(&dp).unwrap();
    let kept: Vec<&str> = text.lines().filter(|l| !l.starts_with("D0")).collect();
    fs::write(&dp, kept.join("\n") + "\n").unwrap();
    let out_dir = data.join("out");
    let out = ctxexp(&[
        "--config",
        s(&data.join("pipeline.toml")),
        "run",
        "--out-dir",
        s(&out_dir),
    ]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("exposure"));
    assert!(!out_dir.exists() || files(&out_dir).is_empty());
}

#[test]
fn percent_flag_scales_prevalence() {
    let (_tmp, data) = dataset();
    let cfg = data.join("pipeline.toml");
    let (a, b) = (data.join("a"), data.join("b"));
    assert_ok(&ctxexp(&["--config", s(&cfg), "run", "--out-dir", s(&a)]));
    // district prevalence is still in proportions on disk, so only impute
    // and prevalence are compared
    let d = |f: &str| data.join(f);
    assert_ok(&ctxexp(&[
        "--percent",
        "--config",
        s(&cfg),
        "prevalence",
        "--homesteads",
        s(&d("homesteads.csv")),
        "--residents",
        s(&d("residents.csv")),
        "--status",
        s(&a.join("status_1.csv")),
        s(&a.join("status_2.csv")),
        s(&a.join("status_3.csv")),
        s(&a.join("status_4.csv")),
        s(&a.join("status_5.csv")),
        "--regions",
        s(&d("regions.geojson")),
        "--out-dir",
        s(&b),
    ]));
    let read = |dir: &Path| -> Vec<Option<f64>> {
        let mut r = csv::Reader::from_path(dir.join("prevalence_2018.csv")).unwrap();
        r.records()
            .map(|rec| rec.unwrap()[3].parse::<f64>().ok())
            .collect()
    };
    let (pa, pb) = (read(&a), read(&b));
    assert_eq!(pa.len(), pb.len());
    let mut compared = 0;
    for (x, y) in pa.iter().zip(&pb) {
        match (x, y) {
            (Some(x), Some(y)) => {
                assert!((x * 100.0 - y).abs() < 1e-9);
                compared += 1;
            }
            (None, None) => {}
            _ => panic!("missing cells differ"),
        }
    }
    assert!(compared > 100);
}

#[test]
fn validate_reports_findings() {
    let (_tmp, data) = dataset();
    let cfg = data.join("pipeline.toml");
    let ok = ctxexp(&["--config", s(&cfg), "validate"]);
    assert_ok(&ok);
    assert!(String::from_utf8_lossy(&ok.stdout).contains("ok "));

    let dp = data.join("bad_dp.csv");
    fs::write(&dp, "district_id,prevalence\nD01,0.2\nD02,1.7\n").unwrap();
    let fixes = data.join("bad_fixes.csv");
    fs::write(
        &fixes,
        "person_id,timestamp,lon,lat\nA,2019-01-01T00:00:00Z,32.1,-28.4\nA,2019/01/01 00:05,32.1,-28.4\n",
    )
    .unwrap();
    let out = ctxexp(&[
        "--config",
        s(&cfg),
        "validate",
        "--district-prevalence",
        s(&dp),
        "--fixes",
        s(&fixes),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(
        text.contains("bad_dp.csv: row 2, column `prevalence`"),
        "{text}"
    );
    assert!(
        text.contains("bad_fixes.csv: row 2, column `timestamp`"),
        "{text}"
    );
    // the same value is fine as a percentage
    let pct = ctxexp(&["--percent", "validate", "--district-prevalence", s(&dp)]);
    assert_ok(&pct);
}

#[test]
fn unknown_config_key_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("p.toml");
    fs::write(
        &cfg,
        "seed = 1\n[activity]\ngap_minutes = 30\ngap_minutez = 10\n",
    )
    .unwrap();
    let out = ctxexp(&["--config", s(&cfg), "run"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gap_minutez"));
}

#[test]
fn synth_is_seed_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("synth.toml");
    fs::write(&cfg, SMALL).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_ok(&ctxexp(&[
        "--config",
        s(&cfg),
        "synth",
        "trajectories",
        "--out-dir",
        s(&a),
    ]));
    assert_ok(&ctxexp(&[
        "--config",
        s(&cfg),
        "synth",
        "trajectories",
        "--out-dir",
        s(&b),
    ]));
    assert_eq!(
        fs::read(a.join("fixes.csv")).unwrap(),
        fs::read(b.join("fixes.csv")).unwrap()
    );
}
