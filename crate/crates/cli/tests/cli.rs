use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn wavobs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavobs")).args(args).output().expect("binary runs")
}

fn body(path: &Path) -> (String, Vec<String>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let meta = lines.next().unwrap().to_string();
    (meta, lines.map(String::from).collect())
}

#[test]
fn spectrum_table_has_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = wavobs(&["spectrum", "--N", "8,12", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (meta, lines) = body(&dir.path().join("spectrum.csv"));
    assert!(meta.starts_with("# wavobs spectrum config_sha256="));
    assert_eq!(lines[0], "N,k,sqrt_lambda,k_pi,gap,delta");
    assert_eq!(lines.len(), 1 + 7 + 11);
    let first: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&first[..2], ["8", "1"]);
    let sqrt_l: f64 = first[2].parse().unwrap();
    assert!((sqrt_l - std::f64::consts::FRAC_PI_2).abs() < 1e-6);
}

#[test]
fn identical_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |d: &Path| {
        vec![
            "constants".to_string(),
            "--N".into(),
            "8,12".into(),
            "--pipeline".into(),
            "mixed".into(),
            "--pipeline".into(),
            "nitsche-sym".into(),
            "--filter".into(),
            "lanczos".into(),
            "--out".into(),
            d.to_str().unwrap().into(),
        ]
    };
    let run = |d: &Path, workers: &str| {
        let mut v = args(d);
        v.extend(["--workers".into(), workers.into()]);
        let o = Command::new(env!("CARGO_BIN_EXE_wavobs")).args(&v).output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(d.join("constants.csv")).unwrap()
    };
    let x = run(a.path(), "1");
    let y = run(b.path(), "3");
    assert_eq!(x, y);
    let text = String::from_utf8(x).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows[0].starts_with("mixed,8,"));
    assert!(rows[2].starts_with("nitsche-sym:0.8,8,"));
    assert!(rows[5].starts_with("filter:lanczos,12,"));
    assert!(rows.iter().all(|r| r.ends_with(',')), "no row should carry an error");
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "N = [99]\n[filter_table]\nfilters = [\"cesaro\", \"vandeven:2\"]\npoints = 5\n",
    )
    .unwrap();
    let o = wavobs(&["filters", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, lines) = body(&dir.path().join("filters.csv"));
    assert_eq!(lines[0], "filter,eta,sigma");
    assert_eq!(lines.len(), 1 + 10);
    assert_eq!(lines[1], "cesaro,0.0000000000000000e0,1.0000000000000000e0");
    assert_eq!(lines[7], "vandeven:2,2.5000000000000000e-1,8.4375000000000000e-1");

    let o = wavobs(&[
        "filters",
        "--config",
        cfg.to_str().unwrap(),
        "--filter",
        "lanczos",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let (_, lines) = body(&dir.path().join("filters.csv"));
    assert!(lines[1..].iter().all(|l| l.starts_with("lanczos,")));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for args in [
        vec!["spectrum", "--N", "", "--out", out],
        vec!["spectrum", "--N", "12,8", "--out", out],
        vec!["constants", "--N", "8", "--pipeline", "bogus", "--out", out],
        vec!["constants", "--N", "8", "--T", "-1", "--out", out],
        vec!["filters", "--filter", "vandeven:0", "--out", out],
        vec!["control", "--N", "8", "--T", "4", "--out", out],
        vec!["nonsense"],
    ] {
        let o = wavobs(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "N = []\n").unwrap();
    let o = wavobs(&["spectrum", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_rows_are_recorded_and_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    // the dropped-penalty observation has no control problem
    let o = wavobs(&["control", "--N", "8", "--pipeline", "mixed", "--pipeline", "nitsche-sym:1:drop", "--out", out]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, errors) = body(&dir.path().join("errors.csv"));
    assert_eq!(errors.len(), 3);
    assert!(errors[1].starts_with("mixed,8,") && errors[1].ends_with(','));
    assert!(errors[2].starts_with("nitsche-sym:1:drop,8,,"));
    assert!(!errors[2].ends_with(','));
}

#[test]
fn control_writes_both_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = wavobs(&["control", "--N", "12,16", "--pipeline", "mixed", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (meta_c, controls) = body(&dir.path().join("controls.csv"));
    let (meta_e, errors) = body(&dir.path().join("errors.csv"));
    assert_eq!(meta_c, meta_e);
    assert_eq!(controls[0], "pipeline,N,t,vN");
    let exact: Vec<&String> = controls.iter().filter(|l| l.starts_with("exact,")).collect();
    assert_eq!(exact.len(), 801);
    let n12 = controls.iter().filter(|l| l.starts_with("mixed,12,")).count();
    assert_eq!(n12, 32 * 12 + 1);
    assert_eq!(errors.len(), 3);
    let e_v = |row: &str| row.split(',').nth(4).unwrap().parse::<f64>().unwrap();
    assert!(e_v(&errors[2]) < e_v(&errors[1]));
}
