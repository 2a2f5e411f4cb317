use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_inherent-dae"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn list_problems_prints_catalog() {
    let o = run(&["list-problems"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in ["wensch", "pendulum", "self3", "skew4", "indef5"] {
        assert!(text.contains(name), "{name} missing:\n{text}");
    }
    let pendulum = text.lines().find(|l| l.starts_with("pendulum")).unwrap();
    let cols: Vec<&str> = pendulum.split_whitespace().collect();
    assert_eq!(&cols[1..5], &["5", "2", "3", "2"]);
}

#[test]
fn run_prints_table_row() {
    let o = run(&[
        "run", "--problem", "self3", "--method", "GAUSS", "--version", "SELF_ADJOINT",
        "--stages", "2", "--steps", "50", "--t-end", "6.283185307179586", "--no-timing",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let row = text.lines().find(|l| l.starts_with("GAUSS")).unwrap();
    let err: f64 = row.split_whitespace().nth(6).unwrap().parse().unwrap();
    assert!(err < 1e-10, "{row}");
}

#[test]
fn bad_configuration_exits_with_two() {
    for args in [
        &["run", "--problem", "nope"][..],
        &["run", "--problem", "wensch", "--method", "DORMAND_PRINCE", "--version", "DIRECT"],
        &["run", "--problem", "wensch", "--param", "delta"],
        &["run", "--problem", "self3", "--t-end", "-1"],
    ] {
        let o = run(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    }
}

#[test]
fn csv_is_reproducible_without_timing() {
    let dir = std::env::temp_dir();
    let paths: Vec<_> = (0..2)
        .map(|i| dir.join(format!("inherent-dae-cli-{}-{i}.csv", std::process::id())))
        .collect();
    for p in &paths {
        let o = run(&[
            "run", "--problem", "skew4", "--steps", "40", "--t-end", "3", "--no-timing",
            "--csv", p.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read(&paths[0]).unwrap();
    let b = std::fs::read(&paths[1]).unwrap();
    for p in &paths {
        let _ = std::fs::remove_file(p);
    }
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("method,version,stages,order,steps,max_error,geometric_error,wall_ms"));
    assert_eq!(text.lines().count(), 5);
}
