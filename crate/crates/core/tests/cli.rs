use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ailimit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("JSON on stdout")
}

#[test]
fn relation_csv() {
    let o = run(&[
        "relation",
        "--alpha1",
        "-1",
        "--a",
        "0.5",
        "--c",
        "0.5",
        "--samples",
        "3",
    ]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "u,v,branch");
    // u = 0 lies on both branches with v = +-sqrt(2)
    let at_zero: Vec<&str> = lines
        .iter()
        .copied()
        .filter(|l| l.starts_with("0.0000000000000000e0,"))
        .collect();
    assert_eq!(at_zero.len(), 2);
    let v: f64 = at_zero[0].split(',').nth(1).unwrap().parse().unwrap();
    assert!((v.abs() - 2f64.sqrt()).abs() < 1e-15);
    for l in &lines[1..] {
        let f: Vec<&str> = l.split(',').collect();
        let (u, v): (f64, f64) = (f[0].parse().unwrap(), f[1].parse().unwrap());
        assert!((-1.0 + 0.5 * v * v + 0.5 * u * u).abs() < 1e-12);
    }
}

#[test]
fn relation_degenerate_is_a_domain_error() {
    let o = run(&["relation", "--a", "0", "--c", "1"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("DegenerateBranch"));
}

#[test]
fn relation_info() {
    let o = run(&[
        "relation", "--info", "--alpha1", "-4", "--sigma1", "2", "--a", "0.9", "--c", "0.1",
    ]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert!(v["discriminant"].is_number());
    assert_eq!(v["canonical"]["rescaled"]["alpha1"].as_f64(), Some(-1.0));
    assert!(v["slope_samples"].as_array().is_some_and(|a| !a.is_empty()));
}

#[test]
fn ai_word() {
    let o = run(&[
        "ai", "--word", "+-", "--a", "0.9", "--c", "0.1", "--B", "-1.3:1.3",
    ]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["word"], "+-");
    assert_eq!(v["period"], 2);
    let xs: Vec<f64> = v["values"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert!(xs[0] > 0.9 && xs[1] < -0.9);
    assert_eq!(v["certificate"]["kind"], "Contracting");
}

#[test]
fn ai_closed_form_and_enumeration() {
    let o = run(&["ai", "--closed-form", "square-one", "--period", "3"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o).as_array().unwrap().len(), 8);
    let o = run(&[
        "ai",
        "--enumerate",
        "3",
        "--a",
        "0.9",
        "--c",
        "0.1",
        "--B",
        "-1.3:1.3",
    ]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["states"].as_array().unwrap().len(), 8);
    assert!(v["min_pairwise_distance"].as_f64().unwrap() > 1.5);
}

#[test]
fn ai_unimodal() {
    let o = run(&["ai", "--unimodal", "0.9", "--period", "1", "--seed", "1.05"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert!((v["values"][0].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(v["certificate"]["kind"], "Expanding");
}

#[test]
fn ai_usage_errors() {
    assert_eq!(code(&run(&["ai", "--word", ""])), 2);
    assert_eq!(code(&run(&["ai", "--word", "+x"])), 2);
    assert_eq!(code(&run(&["ai"])), 2);
    assert_eq!(code(&run(&["ai", "--word", "+", "--enumerate", "2"])), 2);
    assert_eq!(code(&run(&["ai", "--word", "+", "--B", "1:0"])), 2);
    assert_eq!(code(&run(&["nonsense"])), 2);
}

#[test]
fn ai_escape_is_a_domain_error() {
    let o = run(&[
        "ai", "--word", "+-", "--a", "0.9", "--c", "0.1", "--B", "-0.5:0.5",
    ]);
    assert_eq!(code(&o), 3);
}

#[test]
fn continue_word() {
    let o = run(&["continue", "--word", "+-+-", "--epsilon", "0.05"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["period"], 4);
    assert_eq!(v["checks"]["band_ok"], true);
    assert!(v["residual"].as_f64().unwrap() <= 1e-12);
    assert_eq!(v["orbit"].as_array().unwrap().len(), 4);
    assert_eq!(v["monodromy"].as_array().unwrap().len(), 3);
    assert_eq!(v["params"]["epsilon"].as_f64(), Some(0.05));
}

#[test]
fn continue_from_values_and_file() {
    let o = run(&["continue", "--state", "1,-1,-1", "--epsilon", "0.05"]);
    assert_eq!(code(&o), 0);
    let by_values = json(&o);

    let ai = run(&["ai", "--word", "+--"]);
    let dir = std::env::temp_dir().join(format!("ailimit-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("state.json");
    std::fs::write(&path, &ai.stdout).unwrap();
    let o = run(&[
        "continue",
        "--state-file",
        path.to_str().unwrap(),
        "--epsilon",
        "0.05",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["xi"], by_values["xi"]);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn continue_usage_and_domain_errors() {
    assert_eq!(
        code(&run(&["continue", "--word", "+-", "--epsilon", "0"])),
        2
    );
    assert_eq!(
        code(&run(&["continue", "--word", "+-", "--epsilon", "-0.1"])),
        2
    );
    assert_eq!(code(&run(&["continue", "--word", "+-"])), 2);
    assert_eq!(code(&run(&["continue", "--epsilon", "0.1"])), 2);
    // off the relation
    assert_eq!(
        code(&run(&["continue", "--state", "0.5,2", "--epsilon", "0.1"])),
        3
    );
    // degenerate limit: singular limit Jacobian
    let o = run(&[
        "continue",
        "--state",
        "2,0.5",
        "--a",
        "0",
        "--c",
        "0",
        "--epsilon",
        "0.1",
    ]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("SingularJacobian"));
}

#[test]
fn continue_past_a_fold_underflows() {
    // eps^2 alpha = -1 + 10 eps: the constant solutions x^2 - 0.7 eps x + (10 eps - 1) = 0
    // collide where 0.49 eps^2 - 40 eps + 4 = 0
    let fold = (40.0 - (1600.0f64 - 7.84).sqrt()) / 0.98;
    let o = run(&[
        "continue",
        "--word",
        "+",
        "--alpha-drift",
        "10",
        "--epsilon",
        "0.5",
    ]);
    assert_eq!(code(&o), 4);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("StepUnderflow"));
    let at: f64 = err
        .split("epsilon = ")
        .nth(1)
        .and_then(|r| r.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((at - fold).abs() < 1e-4, "stopped at {at}, fold at {fold}");
}

#[test]
fn scan_region_rows_follow_the_grid() {
    let o = run(&[
        "scan",
        "--mode",
        "region",
        "--r",
        "0:0.4:0.2",
        "--a",
        "0.9",
        "--c",
        "0.1",
    ]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "r,a,c,member,margin");
    assert_eq!(lines.len(), 4);
    let rs: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(rs, vec![0.0, 0.2, 0.4]);
    assert!(lines[1].contains(",true,"));
}

#[test]
fn scan_period2_degenerate_case() {
    let o = run(&[
        "scan",
        "--mode",
        "period2",
        "--epsilon",
        "0.1:0.9:0.1",
        "--a",
        "0",
        "--c",
        "0",
        "--delta",
        "1",
    ]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epsilon,n_period1,n_period2_true");
    assert_eq!(lines.len(), 10);
    for l in &lines[1..] {
        assert!(l.ends_with(",2,0"), "{l}");
    }
}

#[test]
fn scan_usage_errors() {
    assert_eq!(
        code(&run(&["scan", "--mode", "region", "--r", "1:0:0.1"])),
        2
    );
    assert_eq!(code(&run(&["scan", "--mode", "region", "--r", "abc"])), 2);
    assert_eq!(code(&run(&["scan", "--mode", "period2"])), 2);
    assert_eq!(code(&run(&["scan"])), 2);
}

#[test]
fn output_is_deterministic() {
    let args = [
        "scan",
        "--mode",
        "region",
        "--r",
        "0:1:0.25",
        "--a",
        "0.8:0.9:0.1",
        "--c",
        "0.1",
    ];
    let a = run(&args);
    let b = Command::new(env!("CARGO_BIN_EXE_ailimit"))
        .args(args)
        .env("AILIMIT_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(a.stdout, b.stdout);
    let a = run(&["continue", "--word", "+-+", "--epsilon", "0.05"]);
    let b = run(&["continue", "--word", "+-+", "--epsilon", "0.05"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn config_file_supplies_flags() {
    let dir = std::env::temp_dir().join(format!("ailimit-cfg-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("run.conf");
    std::fs::write(
        &path,
        "# limit coefficients\na = 0.5\nc = 0.5\nsamples = 3\n",
    )
    .unwrap();
    let with_file = run(&["relation", "--config", path.to_str().unwrap()]);
    let with_flags = run(&["relation", "--a", "0.5", "--c", "0.5", "--samples", "3"]);
    assert_eq!(code(&with_file), 0);
    assert_eq!(with_file.stdout, with_flags.stdout);

    std::fs::write(&path, "bogus = 1\n").unwrap();
    assert_eq!(
        code(&run(&["relation", "--config", path.to_str().unwrap()])),
        2
    );
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
}
