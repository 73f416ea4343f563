use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_deautoconv"));
    cmd.env_remove("DEAUTOCONV_OUT_DIR");
    cmd
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read_column(path: &Path) -> Vec<f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| l.parse::<f64>().is_ok())
        .map(|l| l.parse().unwrap())
        .collect()
}

fn read_trace(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,divergence,gain,w_gain,kkt_residual,mass"
    );
    lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn fit_interior_n1() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("y.txt"), "4\n4\n").unwrap();
    let out = run(&["fit", "y.txt", "--out-dir", "out"], tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let dir = tmp.path().join("out");
    let header = fs::read_to_string(dir.join("x.csv")).unwrap();
    assert!(header.starts_with("x\n"));
    let x = read_column(&dir.join("x.csv"));
    assert!((x[0] - 2.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6);

    let rep = report(&dir);
    assert!(rep["result"]["final_divergence"].as_f64().unwrap() < 1e-12);
    assert_eq!(rep["result"]["kkt"]["satisfied"], true);
    let iterations = rep["result"]["iterations"].as_u64().unwrap() as usize;

    let rows = read_trace(&dir.join("trace.csv"));
    assert_eq!(rows.len(), iterations + 1);
    assert_eq!(rows[0][0], "0");
    assert_eq!(rows[0][2], "");
    assert_eq!(rows[0][3], "");
    assert!(!rows[1][2].is_empty());
}

#[test]
fn fit_boundary_n2_with_validation() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("y.csv"), "y\n1\n4\n1\n").unwrap();
    let out = run(
        &["fit", "y.csv", "--validate", "--out-dir", "."],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let x = read_column(&tmp.path().join("x.csv"));
    let a = 3.0 / 6f64.sqrt();
    assert!((x[0] - a).abs() < 1e-4 && (x[1] - a).abs() < 1e-4);
    assert!(x[2] < 1e-6);
    let rep = report(tmp.path());
    assert!(rep["result"]["final_divergence"].as_f64().unwrap() > 0.1);
    assert_eq!(rep["result"]["kkt"]["satisfied"], true);
    assert_eq!(rep["config"]["validate"], true);

    let rows = read_trace(&tmp.path().join("trace.csv"));
    let div: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(div.windows(2).all(|w| w[1] <= w[0] + 1e-12 * 6.0));
    for r in &rows[1..] {
        let mass: f64 = r[5].parse().unwrap();
        assert!((mass - 6.0).abs() <= 1e-10 * 6.0);
    }
}

#[test]
fn out_dir_from_environment() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("y"), "4\n4\n").unwrap();
    let out = bin()
        .args(["fit", "y", "--max-iter", "3"])
        .env("DEAUTOCONV_OUT_DIR", "envdir")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(tmp.path().join("envdir/report.json").exists());
    assert_eq!(
        read_trace(&tmp.path().join("envdir/trace.csv")).len() - 1,
        report(&tmp.path().join("envdir"))["result"]["iterations"]
            .as_u64()
            .unwrap() as usize
    );
}

#[test]
fn fit_is_reproducible_and_init_modes_work() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path();
    fs::write(p.join("y"), "2\n3\n4\n5\n").unwrap();
    fs::write(p.join("x0"), "0.5\n0.5\n0.5\n0.5\n").unwrap();
    for (dir, extra) in [
        ("a", vec!["--seed", "9"]),
        ("b", vec!["--seed", "9"]),
        ("c", vec!["--init", "constant"]),
        ("d", vec!["--init", "file", "--init-file", "x0"]),
        ("e", vec!["--restarts", "3"]),
    ] {
        let mut args = vec!["fit", "y", "--max-iter", "40", "--out-dir", dir];
        args.extend(extra);
        let out = run(&args, p);
        assert_eq!(
            code(&out),
            0,
            "{dir}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for file in ["x.csv", "trace.csv"] {
        assert_eq!(
            fs::read(p.join("a").join(file)).unwrap(),
            fs::read(p.join("b").join(file)).unwrap()
        );
    }
    let d = read_trace(&p.join("d/trace.csv"));
    // Truncated fit of (0.5, 0.5, 0.5, 0.5) is 0.25 * (1, 2, 3, 4).
    assert_eq!(d[0][5].parse::<f64>().unwrap(), 2.5);
    let out = run(&["fit", "y", "--init", "file"], p);
    assert_eq!(code(&out), 2);
}

#[test]
fn generate_is_deterministic_and_sized() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path();
    for out in ["a.csv", "b.csv"] {
        let res = run(
            &[
                "generate", "--kind", "exact", "--m", "20", "--seed", "1", "--out", out,
            ],
            p,
        );
        assert_eq!(code(&res), 0);
    }
    assert_eq!(
        fs::read(p.join("a.csv")).unwrap(),
        fs::read(p.join("b.csv")).unwrap()
    );
    assert_eq!(
        fs::read_to_string(p.join("a.csv")).unwrap().lines().count(),
        41
    );
    let true_x = read_column(&p.join("a_true_x.csv"));
    assert_eq!(true_x.len(), 21);
    assert!(true_x.iter().all(|v| (1.0..=10.0).contains(v)));

    let res = run(
        &[
            "generate", "--kind", "random", "--m", "12", "--K", "5", "--seed", "7", "--out",
            "r/y.csv",
        ],
        p,
    );
    assert_eq!(code(&res), 0);
    let y = read_column(&p.join("r/y.csv"));
    assert_eq!(y.len(), 25);
    assert!(!p.join("r/y_true_x.csv").exists());

    let res = run(
        &["generate", "--kind", "random", "--m", "0", "--out", "z"],
        p,
    );
    assert_eq!(code(&res), 6);
}

#[test]
fn generate_then_fit_round_trips() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path();
    assert_eq!(
        code(&run(
            &["generate", "--kind", "exact", "--m", "3", "--seed", "5", "--out", "y.csv"],
            p
        )),
        0
    );
    let out = run(&["fit", "y.csv", "--max-iter", "20", "--out-dir", "fit"], p);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(&p.join("fit"));
    assert_eq!(rep["data_length"], 7);
    let y = read_column(&p.join("y.csv"));
    let total: f64 = y.iter().sum();
    assert_eq!(rep["data_mass"].as_f64().unwrap(), total);
}

#[test]
fn experiment_smoke() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path();
    let out = run(
        &[
            "experiment",
            "--kind",
            "exact",
            "--m",
            "4",
            "--restarts",
            "1",
            "--T",
            "10",
            "--out-dir",
            "ex",
        ],
        p,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let dir = p.join("ex");
    let rows = read_trace(&dir.join("run_0_trace.csv"));
    assert!(rows.len() <= 11);
    assert!(dir.join("run_0_x.csv").exists());
    assert_eq!(read_column(&dir.join("y.csv")).len(), 9);
    assert_eq!(read_column(&dir.join("true_x.csv")).len(), 5);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["completed"], 1);
    assert_eq!(summary["runs"].as_array().unwrap().len(), 1);
    assert!(summary["runs"][0]["recovery_error"].as_f64().is_some());
    assert_eq!(summary["spec"]["iterations"], 10);
}

#[test]
fn experiment_random_defaults_to_two_restarts() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path();
    let args = [
        "experiment",
        "--kind",
        "random",
        "--m",
        "3",
        "--K",
        "2",
        "--T",
        "50",
        "--seed",
        "4",
        "--validate",
        "--out-dir",
        "ex",
    ];
    assert_eq!(code(&run(&args, p)), 0);
    let dir = p.join("ex");
    for r in 0..2 {
        let rows = read_trace(&dir.join(format!("run_{r}_trace.csv")));
        let div: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
        let mass: f64 = read_column(&dir.join("y.csv")).iter().sum();
        assert!(div.windows(2).all(|w| w[1] <= w[0] + 1e-12 * mass));
    }
    assert!(!dir.join("run_2_trace.csv").exists());
    assert!(!dir.join("true_x.csv").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert!(summary["runs"][0]["recovery_error"].is_null());
    let first = fs::read(dir.join("summary.json")).unwrap();
    assert_eq!(code(&run(&args, p)), 0);
    assert_eq!(fs::read(dir.join("summary.json")).unwrap(), first);
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path();
    fs::write(p.join("cols"), "1,2\n").unwrap();
    fs::write(p.join("neg"), "1\n-1\n").unwrap();
    fs::write(p.join("lead0"), "0\n5\n").unwrap();
    fs::write(p.join("ones"), "1\n1\n").unwrap();
    fs::write(p.join("start"), "0\n1\n").unwrap();

    assert_eq!(code(&run(&["fit"], p)), 2);
    assert_eq!(code(&run(&["fit", "ones", "--bogus"], p)), 2);
    assert_eq!(code(&run(&["fit", "cols"], p)), 3);
    assert_eq!(code(&run(&["fit", "neg"], p)), 3);
    assert_eq!(code(&run(&["fit", "lead0"], p)), 6);
    assert_eq!(code(&run(&["fit", "lead0", "--allow-degenerate"], p)), 4);
    let out = run(
        &["fit", "ones", "--init", "file", "--init-file", "start"],
        p,
    );
    assert_eq!(code(&out), 5);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.lines().count(), 1);
    assert_eq!(code(&run(&["fit", "ones", "--restarts", "0"], p)), 6);
    assert_eq!(code(&run(&["fit", "missing"], p)), 7);

    let help = bin().args(["fit", "--help"]).output().unwrap();
    assert_eq!(code(&help), 0);
    let text = String::from_utf8_lossy(&help.stdout);
    assert!(text.contains("Exit codes"));
    assert!(text.contains("5  divergence not finite"));
}
