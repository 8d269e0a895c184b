use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use svm_clt::FiniteMeasure;
use tempfile::TempDir;

const KERNEL: &str = r#"
[kernel]
family = "gaussian_rbf"
width = 1.0
input_dim = 1

[loss]
kind = "least_squares"
"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svm-clt"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn setup(config_tail: &str, files: &[(&str, &str)]) -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        format!("{KERNEL}{config_tail}"),
    )
    .unwrap();
    for (name, body) in files {
        fs::write(dir.path().join(name), body).unwrap();
    }
    dir
}

fn json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const ONE_ATOM: &str = "x1,y,weight\n0.3,1.0,1.0\n";
const THREE_ATOMS: &str = "x1,y,weight\n-1.0,-0.5,0.3\n0.0,1.0,0.3\n1.0,0.3,0.4\n";

#[test]
fn solve_one_atom_example() {
    let dir = setup(
        "[data]\nmeasure = \"p.csv\"\n[solve]\nlambda = 1.0\n",
        &[("p.csv", ONE_ATOM)],
    );
    let o = run(
        dir.path(),
        &["solve", "--config", "run.toml", "--out", "out"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    let v = json(&out, "solve.json");
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["config"]["solver"]["max_iter"], 200);
    assert!(v["result"]["grad_norm_h"].as_f64().unwrap() <= 1e-10);
    assert!((v["result"]["objective"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    let sol = fs::read_to_string(out.join("solution.csv")).unwrap();
    assert_eq!(sol, "x1,coefficient\n0.3,0.5\n");

    let original = FiniteMeasure::read_csv(ONE_ATOM.as_bytes()).unwrap();
    let echoed = FiniteMeasure::read_csv(fs::File::open(out.join("measure.csv")).unwrap()).unwrap();
    assert_eq!(original, echoed);
}

#[test]
fn measure_csv_round_trips_at_full_precision() {
    let body = "x1,x2,y,weight\n0.1,0.30000000000000004,-1.5,0.25\n1e-300,-2.5,3.0,0.75\n";
    let dir = setup(
        "[data]\nmeasure = \"p.csv\"\n[solve]\nlambda = 0.5\n",
        &[("p.csv", body)],
    );
    fs::write(
        dir.path().join("run.toml"),
        fs::read_to_string(dir.path().join("run.toml"))
            .unwrap()
            .replace("input_dim = 1", "input_dim = 2"),
    )
    .unwrap();
    let o = run(dir.path(), &["solve", "-c", "run.toml", "-o", "."]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = FiniteMeasure::read_csv(body.as_bytes()).unwrap();
    let b =
        FiniteMeasure::read_csv(fs::File::open(dir.path().join("measure.csv")).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn mollify_table_matches_hinge_off_the_kink() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["mollify-table", "-o", "t"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("t/mollify_table.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,L,L_eps,L_eps_d1,L_eps_d2");
    let mut flat = 0;
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        if (v[0] - 1.0).abs() > 0.1 + 1e-12 {
            assert!((v[1] - v[2]).abs() <= 1e-9, "{line}");
            flat += 1;
        }
    }
    assert!(flat > 70);
    let v = json(&dir.path().join("t"), "mollify_table.json");
    assert!(v["result"]["max_abs_gap"].as_f64().unwrap() <= 0.1);
}

#[test]
fn mc_clt_on_a_dirac_has_zero_covariance() {
    let dir = setup(
        "seed = 3\n[data]\nmeasure = \"p.csv\"\n[experiment]\nlambda0 = 1.0\nn_values = [10, 20]\nreplications = 12\n",
        &[("p.csv", ONE_ATOM)],
    );
    let o = run(
        dir.path(),
        &["mc-clt", "-c", "run.toml", "-o", "mc", "--seed", "99"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("mc");
    let v = json(&out, "mc_clt.json");
    assert_eq!(v["config"]["seed"], 99);
    for n in v["result"]["per_n"].as_array().unwrap() {
        for row in n["covariance"].as_array().unwrap() {
            assert!(row
                .as_array()
                .unwrap()
                .iter()
                .all(|c| c.as_f64() == Some(0.0)));
        }
        assert!(n["coverage"]
            .as_array()
            .unwrap()
            .iter()
            .all(|c| c["status"] == "skipped"));
    }
    let dev = fs::read_to_string(out.join("deviations_n20.csv")).unwrap();
    assert_eq!(dev.lines().count(), 13);
}

#[test]
fn derivative_subcommands_write_reports() {
    let g = "x1,y,weight\n0.5,0.2,1.0\n-1.0,-0.5,-0.3\n0.0,1.0,-0.3\n1.0,0.3,-0.4\n";
    let dir = setup(
        r#"
[data]
measure = "p.csv"
[derivative]
lambda0 = 1.0
direction = "g.csv"
drift = "p.csv"
points = [{ x = [0.5], y = 0.2 }]
grid = [[-1.0], [0.0], [0.5], [1.0]]
"#,
        &[("p.csv", THREE_ATOMS), ("g.csv", g)],
    );
    for (cmd, file) in [
        ("influence", "influence.json"),
        ("covariance", "covariance.json"),
        ("degeneracy", "degeneracy.json"),
        ("fd-check", "fd_check.json"),
    ] {
        let o = run(dir.path(), &[cmd, "-c", "run.toml", "-o", "d"]);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
        let v = json(&dir.path().join("d"), file);
        assert_eq!(v["command"], cmd);
    }
    let d = dir.path().join("d");
    let cov = json(&d, "covariance.json");
    assert!(cov["result"]["risk_sigma"].as_f64().unwrap() > 0.0);
    let m = fs::read_to_string(d.join("covariance.csv")).unwrap();
    assert_eq!(m.lines().count(), 5);
    assert!(!json(&d, "degeneracy.json")["result"]["degenerate"]
        .as_bool()
        .unwrap());
    let fd = json(&d, "fd_check.json");
    let errs: Vec<f64> = fd["result"]["gateaux"]["errors"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e.as_f64().unwrap())
        .collect();
    assert!(errs[2] <= 0.1 * errs[0]);
    assert!(fd["result"]["hadamard"].is_object());
}

#[test]
fn input_errors_exit_one_with_prefix() {
    let dir = setup(
        "[data]\nmeasure = \"p.csv\"\n[solve]\nlambda = 1.0\n",
        &[("p.csv", "x1,y,weight\n0.3,abc,1.0\n")],
    );
    let cases: [&[&str]; 4] = [
        &["solve", "--bogus"],
        &["solve", "-c", "run.toml"],
        &["solve", "-c", "missing.toml"],
        &["solve"],
    ];
    for args in cases {
        let o = run(dir.path(), args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        let err = stderr(&o);
        assert!(err.starts_with("ERROR:"), "{err}");
        assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    }

    fs::write(
        dir.path().join("p.csv"),
        "x1,x2,y,weight\n0.3,0.1,1.0,1.0\n",
    )
    .unwrap();
    let o = run(dir.path(), &["solve", "-c", "run.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dimension"), "{}", stderr(&o));
}

#[test]
fn non_convergence_exits_two() {
    let dir = setup(
        "[solver]\nmax_iter = 0\n[data]\nmeasure = \"p.csv\"\n[solve]\nlambda = 1.0\n",
        &[("p.csv", ONE_ATOM)],
    );
    let o = run(dir.path(), &["solve", "-c", "run.toml", "-o", "o"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("ERROR:"));
    let v = json(&dir.path().join("o"), "solve.json");
    assert_eq!(v["result"]["converged"], false);
}

#[test]
fn help_succeeds() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["--help"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("mollify-table"));
}

#[test]
fn guide_config_is_accepted() {
    let guide = include_str!("../../../book/src/cli.md");
    let start = guide.find("```toml\n").unwrap() + "```toml\n".len();
    let end = start + guide[start..].find("```").unwrap();
    let dir = setup("", &[]);
    fs::write(dir.path().join("run.toml"), &guide[start..end]).unwrap();
    let o = run(dir.path(), &["mollify-table", "-c", "run.toml", "-o", "g"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = json(&dir.path().join("g"), "mollify_table.json");
    assert_eq!(v["config"]["seed"], 7);
    assert_eq!(
        v["config"]["experiment"]["lambda_rule"]["rule"],
        "shrinking"
    );
}
