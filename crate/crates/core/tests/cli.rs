use std::path::Path;
use std::process::{Command, Output};

use hetreg::cli::TestReport;
use hetreg::simulation::{SimulationScenario, SizeReport};

fn hetreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetreg")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

const MEANS: &str = "group,y\nA,1\nA,2\nA,3\nB,2\nB,4\nB,6\n";

const LINES: &str = "\
group,x,y
a,0,0.1
a,1,1.2
a,2,1.9
a,3,3.2
a,4,3.9
b,0,1.5
b,1,1.4
b,2,3.1
b,3,2.2
b,4,4.8
b,5,4.1
";

#[test]
fn means_report_has_q0_and_all_methods() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "means.csv", MEANS);
    let out = dir.path().join("report.json");
    let o = hetreg(&["test", &input, "--intercept-only", "--draws", "2000", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: TestReport = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    // (2 - 4)² / (1/3 + 4/3)
    assert!((report.q0 - 2.4).abs() < 1e-12);
    assert_eq!((report.k, report.p, report.df_chi2), (2, 1, 1));
    assert_eq!(report.input.rows, 6);
    assert_eq!(report.decisions.len(), 3);
    assert_eq!(report.p_fiducial.unwrap().draws, 2000);
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("Q0 = 2.400000"));
    assert!(table.contains("generalized"));
}

#[test]
fn covariates_and_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "lines.csv", LINES);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = hetreg(&["test", &input, "--covariates", "x", "--draws", "3000", "--seed", "9", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (o.stdout, std::fs::read(out).unwrap())
    };
    let first = run("a.json");
    assert_eq!(first, run("b.json"));
    let report: TestReport = serde_json::from_slice(&first.1).unwrap();
    assert_eq!((report.k, report.p), (2, 2));
    // group summaries alone reproduce the statistic
    let est: Vec<_> = report.groups.iter().map(|g| g.to_estimate().unwrap()).collect();
    let q0 = hetreg::compute_q0(&est).unwrap().q0;
    assert!((q0 - report.q0).abs() <= 1e-12 * report.q0.max(1.0));
}

#[test]
fn single_group_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "one.csv", "group,y\nA,1\nA,2\nA,4\n");
    let o = hetreg(&["test", &input, "--intercept-only"]);
    assert_eq!(o.status.code(), Some(2));
    let record: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(record["error"], "NeedTwoGroups");
}

#[test]
fn malformed_value_reports_row() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "bad.csv", "group,y\nA,1\nA,oops\nB,2\n");
    let o = hetreg(&["test", &input, "--intercept-only"]);
    assert_eq!(o.status.code(), Some(2));
    let record: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(record["error"], "ParseError");
    assert!(record["message"].as_str().unwrap().contains('3'));
}

#[test]
fn missing_column_and_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "means.csv", MEANS);
    let o = hetreg(&["test", &input, "--covariates", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    let o = hetreg(&["test", dir.path().join("absent.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn collinear_design_exits_numerical() {
    let dir = tempfile::tempdir().unwrap();
    let text = "group,x,z,y\na,1,2,1\na,2,4,3\na,3,6,2\na,4,8,5\nb,1,1,1\nb,2,3,2\nb,3,2,2\nb,4,7,1\n";
    let input = write(dir.path(), "col.csv", text);
    let o = hetreg(&["test", &input, "--covariates", "x,z"]);
    assert_eq!(o.status.code(), Some(3));
    let record: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(record["error"], "RankDeficient");
}

#[test]
fn simulate_and_compare_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/small_sample.toml");
    assert!(SimulationScenario::from_file(&scenario).unwrap().is_null());
    let out = dir.path().join("size.json");
    let o = hetreg(&[
        "simulate",
        scenario.to_str().unwrap(),
        "--method",
        "chi2,fiducial",
        "--replications",
        "50",
        "--draws",
        "200",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let reports: Vec<SizeReport> = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(reports.len(), 2);
    assert!(reports.iter().all(|r| r.replications == 50));

    let input = write(dir.path(), "lines.csv", LINES);
    let o = hetreg(&["compare", &input, "--covariates", "x", "--draws", "5000"]);
    assert!(o.status.success());
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("KS distance"));
}
