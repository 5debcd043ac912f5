use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cqed(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cqed")).arg("--out").arg(out).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn spectrum_sweep_writes_every_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = cqed(
        dir.path(),
        &["spectrum", "--scenario", "fig2_spectrum", "--sweep", "atoms.1.omega_e", "--range", "1.0:1.1:201"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert_eq!(csv.lines().count(), 202);
    assert!(dir.path().join("crossing.txt").exists());
}

#[test]
fn empty_range_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = cqed(dir.path(), &["spectrum", "--scenario", "fig2_spectrum", "--sweep", "atoms.1.omega_e", "--range", "1.1:1.0:5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn coupling_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = cqed(dir.path(), &["coupling", "--scenario", "three_atom_one_cavity"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("0.761"), "{text}");
    assert!(text.contains("closed form chi3_one_cavity"), "{text}");
}

#[test]
fn odd_order_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = cqed(dir.path(), &["coupling", "--scenario", "three_atom_one_cavity", "--order", "3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cqed(dir.path(), &["coupling", "--bogus"]).status.code(), Some(2));
}

#[test]
fn zero_duration_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = cqed(dir.path(), &["dynamics", "--scenario", "four_atom_one_cavity", "--t-final", "0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("dynamics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("time_ns,") && lines[0].contains("corr_2_3_4"), "{}", lines[0]);
    assert!(dir.path().join("dynamics.json").exists());
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args =
        ["dynamics", "--scenario", "three_atom_one_cavity", "--n-max", "2", "--t-final", "50", "--samples", "11", "--csv"];
    let run = |name: &str| {
        let mut a = args.to_vec();
        a.push(name);
        let o = cqed(dir.path(), &a);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(dir.path().join(name)).unwrap()
    };
    let (a, b) = (run("a.csv"), run("b.csv"));
    assert_eq!(a, b);
    let first = String::from_utf8(a).unwrap();
    let row = first.lines().nth(1).unwrap();
    assert!(row.split(',').all(|v| v.contains('e')), "{row}");
}

#[test]
fn check_runs_one_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let o = cqed(dir.path(), &["check", "--only", "fig2_spectrum"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("fig2_spectrum") && !text.contains("three_atom"), "{text}");
}

#[test]
fn unknown_scenario_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cqed(dir.path(), &["check", "--only", "nope"]).status.code(), Some(2));
}

#[test]
fn corrupted_scenario_file_fails() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.toml");
    fs::write(&path, "name = \"broken\"\n[device\ncavities = 3\n").unwrap();
    let o = cqed(dir.path(), &["check", "--file", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cqed"))
        .env("CQED_OUT_DIR", dir.path())
        .args(["dynamics", "--scenario", "three_atom_one_cavity", "--t-final", "0"])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("dynamics.csv").exists());
}
