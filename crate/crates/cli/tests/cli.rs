use std::process::Command;

fn robsens(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_robsens")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn kv<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(key)?.strip_prefix('='))
}

#[test]
fn analyze_example_as_key_values() {
    let (code, out, err) = robsens(&["analyze", "example_box", "--format", "kv", "--no-timings"]);
    assert_eq!(code, 0, "{err}");
    let q_minus: f64 = kv(&out, "q_minus").unwrap().parse().unwrap();
    let q_plus: f64 = kv(&out, "q_plus").unwrap().parse().unwrap();
    assert!((q_minus - 0.5).abs() < 1e-6 && (q_plus - 3.0).abs() < 1e-6);
    assert_eq!(kv(&out, "oracle.exact_plus"), Some("false"));
    assert!(!out.contains("time."));
}

#[test]
fn key_values_are_reproducible() {
    let args = ["analyze", "example_clipped", "--format", "kv", "--no-timings", "--seed", "7"];
    assert_eq!(robsens(&args).1, robsens(&args).1);
}

#[test]
fn failing_expectation_exits_with_one() {
    let dir = std::env::temp_dir().join(format!("robsens-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("wrong.lpu");
    std::fs::write(
        &path,
        "[instance]\nname = wrong\n[objective]\nmin x1 + x2\n[rows]\nr1: x1 + x2 = 2\n[uncertainty]\nbox b[r1] in [-1, 1]\n[expect]\nq_plus = 4 +- 1e-6\n",
    )
    .unwrap();
    let (code, _, err) = robsens(&["analyze", path.to_str().unwrap(), "--samples", "20"]);
    assert_eq!(code, 1);
    assert!(err.contains("q_plus"), "{err}");
}

#[test]
fn parse_errors_exit_with_two_and_name_the_line() {
    let dir = std::env::temp_dir().join(format!("robsens-cli-bad-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.lpu");
    std::fs::write(&path, "[instance]\nname = bad\n[objective]\nmin x1\n[rows]\nr1: x1 = 1\n[uncertainty]\nbox b[r9] in [0, 1]\n").unwrap();
    let (code, _, err) = robsens(&["analyze", path.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("bad.lpu:8"), "{err}");
}

#[test]
fn sample_writes_one_csv_row_per_trial() {
    let path = std::env::temp_dir().join(format!("robsens-cli-trials-{}.csv", std::process::id()));
    let (code, out, err) = robsens(&["sample", "example_box", "--samples", "25", "--csv", path.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(kv(&out, "samples"), Some("25"));
    let csv = std::fs::read_to_string(&path).unwrap();
    assert_eq!(csv.lines().count(), 26);
}

#[test]
fn list_names_corpus_and_groups() {
    let (code, out, _) = robsens(&["list"]);
    assert_eq!(code, 0);
    assert!(out.lines().any(|l| l == "wendell_1"));
    assert!(out.contains("groups: example, wendell"));
}
