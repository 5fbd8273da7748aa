use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use ssosc_core::report::{parse_report, Real};
use ssosc_core::sovf::Verdict;

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(format!("{name}.json"))
        .to_string_lossy()
        .into_owned()
}

fn ssosc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssosc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn certify_writes_a_consistent_report() {
    let p = fixture("psd2_holds");
    let out = ssosc(&[
        "certify",
        "--problem",
        &p,
        "--sigma-grid",
        "1,10,100,1000",
        "--tol-pd",
        "1e-8",
        "--seed",
        "42",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = parse_report(&stdout(&out)).unwrap();
    assert_eq!(report.equivalence_verdict, Some(Verdict::Consistent));
    assert_eq!(report.seed, 42);
    assert_eq!(report.sweep.unwrap().len(), 4);
    assert!(report.ssosc.unwrap().holds);
}

#[test]
fn failing_ssosc_still_exits_zero() {
    let out = ssosc(&["certify", "--problem", &fixture("nuclear_n1_fails")]);
    assert_eq!(out.status.code(), Some(0));
    let report = parse_report(&stdout(&out)).unwrap();
    assert!(!report.ssosc.unwrap().holds);
}

#[test]
fn gamma_off_the_range_is_plus_inf() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d.json");
    fs::write(&d, r#"{"d": [0.0, 1.0]}"#).unwrap();
    let out = ssosc(&[
        "gamma",
        "--problem",
        &fixture("nuclear_n1_holds"),
        "--direction",
        d.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains(r#""gamma": "+inf""#));

    fs::write(&d, r#"{"Y": [[0.0, 1.0], [0.0, 0.0]]}"#).unwrap();
    let out = ssosc(&[
        "gamma",
        "--problem",
        &fixture("nuclear_n1_holds"),
        "--direction",
        d.to_str().unwrap(),
    ]);
    let report = parse_report(&stdout(&out)).unwrap();
    let Real(g) = report.gamma.unwrap();
    assert!((g - 0.5).abs() < 1e-12);
}

#[test]
fn vacuous_margin_is_plus_inf() {
    let out = ssosc(&["ssosc", "--problem", &fixture("scalar_vacuous")]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains(r#""margin": "+inf""#));
}

#[test]
fn kkt_and_frame_reports() {
    let out = ssosc(&["kkt", "--problem", &fixture("psd3_holds")]);
    assert!(parse_report(&stdout(&out)).unwrap().kkt.unwrap().valid);
    let out = ssosc(&["frame", "--problem", &fixture("psd3_holds")]);
    let frame = parse_report(&stdout(&out)).unwrap().frame.unwrap();
    assert_eq!(frame.partition.above, vec![0]);
    assert_eq!(frame.partition.at, vec![1]);
    assert_eq!(frame.partition.below, vec![2]);
}

#[test]
fn input_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let text = fs::read_to_string(fixture("scalar_holds")).unwrap();
    fs::write(
        &bad,
        text.replace(r#""kind": "psd_indicator""#, r#""kind": "box""#),
    )
    .unwrap();
    let out = ssosc(&["certify", "--problem", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("g.kind"));

    let not_kkt = dir.path().join("not_kkt.json");
    fs::write(&not_kkt, text.replace(r#""x": [0.0]"#, r#""x": [1.0]"#)).unwrap();
    let out = ssosc(&["certify", "--problem", not_kkt.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let out = ssosc(&["kkt", "--problem", not_kkt.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(!parse_report(&stdout(&out)).unwrap().kkt.unwrap().valid);

    let p = fixture("scalar_holds");
    for args in [
        vec!["certify", "--problem", "/nonexistent/p.json"],
        vec!["sweep", "--problem", &p, "--sigma-grid", "10,1"],
        vec!["sweep", "--problem", &p, "--budget", "0"],
        vec!["ssosc", "--problem", &p, "--tol-pd", "-1"],
        vec!["certify", "--problem", &p, "--threads", "0"],
        vec!["certify", "--problem", &p, "--unknown-flag"],
        vec!["selftest", "--trials", "0"],
    ] {
        assert_eq!(ssosc(&args).status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn reports_are_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["psd3_coupled_holds", "nuclear_boundary_holds", "psd2_fails"] {
        let p = fixture(name);
        let mut texts = Vec::new();
        for threads in ["1", "4", "4"] {
            let path = dir.path().join(format!("{name}-{threads}.json"));
            let out = ssosc(&[
                "certify",
                "--problem",
                &p,
                "--seed",
                "9",
                "--budget",
                "8",
                "--threads",
                threads,
                "--report",
                path.to_str().unwrap(),
            ]);
            assert_eq!(out.status.code(), Some(0));
            assert!(out.stdout.is_empty());
            texts.push(fs::read(&path).unwrap());
        }
        assert_eq!(texts[0], texts[1], "{name}");
        assert_eq!(texts[1], texts[2], "{name}");
    }
}

#[test]
fn selftest_passes() {
    let out = ssosc(&[
        "selftest",
        "--trials",
        "40",
        "--seed",
        "7",
        "--threads",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report = parse_report(&stdout(&out)).unwrap();
    let st = report.selftest.unwrap();
    assert!(st.all_pass);
    assert_eq!(st.suites.len(), 8);
}
