use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use circov::cli::{Scenario, TRAJECTORY_HEADER};
use circov::Error;

const CIRCLE: &str = r#"
schema_version = 1
name = "t"

[domain]
inner = { kind = "circle", radius = 0.5 }
outer = { kind = "circle", radius = 1.0 }

[density]
kind = "uniform"
value = 1.0

[sim]
agents = 4
dt = 0.02
T = 0.2
kappa_s = 0.2
kappa_p = 0.1
spacing = 0.02
seed = 1

[output]
trajectory_every = 1
snapshot_times = [0.0, 0.2]
"#;

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn circov(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_circov"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn bundled_scenarios_parse() {
    for name in ["case_study.toml", "circular_uniform.toml"] {
        let s = Scenario::load(&bundled(name)).unwrap();
        s.config().unwrap().validate().unwrap();
    }
    let c = Scenario::load(&bundled("case_study.toml"))
        .unwrap()
        .config()
        .unwrap();
    assert_eq!((c.agents, c.kappa_p, c.kappa_s), (6, 0.1, 0.02));
}

#[test]
fn missing_density_is_named() {
    let text = CIRCLE.replace("[density]\nkind = \"uniform\"\nvalue = 1.0\n", "");
    let err = Scenario::parse(&text).unwrap_err();
    assert!(matches!(err, Error::Scenario(_)));
    assert!(err.to_string().contains("density"), "{err}");
}

#[test]
fn unknown_keys_and_versions_are_rejected() {
    let err = Scenario::parse(&CIRCLE.replace("seed = 1", "seed = 1\ncolour = 3")).unwrap_err();
    assert!(err.to_string().contains("colour"), "{err}");
    let err = Scenario::parse(&CIRCLE.replace("schema_version = 1", "schema_version = 2")).unwrap_err();
    assert!(err.to_string().contains("schema_version"), "{err}");
}

#[test]
fn simulate_is_deterministic_and_writes_everything() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = write(tmp.path(), "s.toml", CIRCLE);
    let mut csvs = Vec::new();
    for out in ["a", "b"] {
        let o = circov(&["simulate", "s.toml", "--seed", "7", "--out", out], tmp.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let dir = tmp.path().join(out);
        for f in [
            "trajectory.csv",
            "diagnostics.csv",
            "summary.toml",
            "scenario.toml",
            "snapshot_t0.svg",
            "snapshot_t0.2.svg",
        ] {
            assert!(dir.join(f).is_file(), "missing {f}");
        }
        csvs.push(fs::read(dir.join("trajectory.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs[0].clone()).unwrap();
    assert_eq!(text.lines().next().unwrap(), TRAJECTORY_HEADER);
    // 11 logged steps × 4 agents
    assert_eq!(text.lines().count(), 1 + 11 * 4);
    drop(scen);
}

#[test]
fn plot_reads_back_the_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "s.toml", CIRCLE);
    let o = circov(&["simulate", "s.toml", "--out", "run"], tmp.path());
    assert!(o.status.success());
    let csv = tmp.path().join("run/trajectory.csv");
    for f in fs::read_dir(tmp.path().join("run")).unwrap() {
        let p = f.unwrap().path();
        if p.extension().is_some_and(|e| e == "svg") {
            fs::remove_file(p).unwrap();
        }
    }
    let svgs = |dir: &Path| {
        fs::read_dir(dir)
            .unwrap()
            .filter(|f| f.as_ref().unwrap().path().extension().is_some_and(|e| e == "svg"))
            .count()
    };

    for args in [
        &["plot", csv.to_str().unwrap(), "--times"][..],
        &["plot", csv.to_str().unwrap()],
    ] {
        let o = circov(args, tmp.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(svgs(&tmp.path().join("run")), 0);
    }

    let o = circov(&["plot", csv.to_str().unwrap(), "--times", "0.1"], tmp.path());
    assert!(o.status.success());
    let svg = fs::read_to_string(tmp.path().join("run/snapshot_t0.1.svg")).unwrap();
    assert_eq!(svg.matches("<circle").count(), 4);
    assert_eq!(svg.matches("<line").count(), 4);

    let o = circov(&["plot", csv.to_str().unwrap(), "--times", "5"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains('5'));
}

#[test]
fn case_study_snapshot_has_six_agents_and_bars() {
    let tmp = tempfile::tempdir().unwrap();
    let o = circov(
        &[
            "simulate",
            bundled("case_study.toml").to_str().unwrap(),
            "--T",
            "0.1",
            "--out",
            "cs",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let svg = fs::read_to_string(tmp.path().join("cs/snapshot_t0.svg")).unwrap();
    assert_eq!(svg.matches("<circle").count(), 6);
    assert_eq!(svg.matches("<line").count(), 6);
    assert_eq!(svg.matches(r#"fill="orange""#).count(), 6);
}

#[test]
fn coarse_grid_is_a_resolution_error() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "s.toml",
        &CIRCLE.replace("spacing = 0.02", "spacing = 0.2"),
    );
    for cmd in ["check", "simulate"] {
        let o = circov(&[cmd, "s.toml"], tmp.path());
        assert_eq!(o.status.code(), Some(2));
        assert!(
            String::from_utf8_lossy(&o.stderr).contains("resolution"),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn bad_arguments_fail() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(!circov(&["simulate", "nope.toml"], tmp.path()).status.success());
    assert!(!circov(&["frobnicate"], tmp.path()).status.success());
}

#[test]
fn check_table_on_the_circle() {
    let tmp = tempfile::tempdir().unwrap();
    let o = circov(
        &["check", bundled("circular_uniform.toml").to_str().unwrap()],
        tmp.path(),
    );
    let table = String::from_utf8_lossy(&o.stdout).to_string();
    let failing: Vec<&str> = table.lines().filter(|l| l.contains("FAIL")).collect();
    // The bar flux under-predicts how fast mass moves when a bar slides
    // along a curved boundary (the normal line also rotates); that row
    // fails and the curvature-corrected row passes.
    assert_eq!(failing.len(), 1, "{table}");
    assert!(failing[0].contains("bar flux"), "{table}");
    assert!(table.contains("swept flux"));
    assert_eq!(o.status.code(), Some(1));
}
