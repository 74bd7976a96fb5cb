//! CSV ingestion, test orchestration and report rendering behind the `hetreg` binary.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::engines::{mc_pvalue, Engine, MCResult, DEFAULT_DRAWS};
use crate::error::{Error, Result};
use crate::model::{chi2_pvalue, compute_q0, fit_groups, GroupSummary, RegressionGroup};

/// Which columns of the CSV feed the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub group: String,
    pub response: String,
    pub covariates: Vec<String>,
    /// Prepend a column of ones to the design.
    pub intercept: bool,
}

impl CsvSchema {
    pub fn intercept_only(group: impl Into<String>, response: impl Into<String>) -> Self {
        Self { group: group.into(), response: response.into(), covariates: Vec::new(), intercept: true }
    }

    pub fn p(&self) -> usize {
        self.covariates.len() + usize::from(self.intercept)
    }
}

/// Row counts and group labels of an ingested file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFingerprint {
    pub rows: usize,
    pub groups: Vec<String>,
    pub group_rows: Vec<usize>,
}

pub fn ingest_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<(Vec<RegressionGroup>, InputFingerprint)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    ingest_csv_reader(file, schema)
}

/// One group per distinct label, in order of first appearance.
pub fn ingest_csv_reader<R: Read>(reader: R, schema: &CsvSchema) -> Result<(Vec<RegressionGroup>, InputFingerprint)> {
    if schema.p() == 0 {
        return Err(Error::Schema("no covariates and no intercept: the design would be empty".into()));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Schema(format!("cannot read header: {e}")))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
    };
    let group_col = find(&schema.group)?;
    let response_col = find(&schema.response)?;
    let cov_cols = schema.covariates.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;

    let mut order: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut responses: Vec<Vec<f64>> = Vec::new();
    let mut total = 0;

    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            row: e.position().map_or(0, |p| p.line() as usize),
            column: String::new(),
            message: e.to_string(),
        })?;
        let row = record.position().map_or(total + 2, |p| p.line() as usize);
        let cell = |col: usize, name: &str| -> Result<f64> {
            let raw = record.get(col).unwrap_or("").trim();
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                row,
                column: name.to_string(),
                message: if raw.is_empty() { "empty cell".into() } else { format!("'{raw}' is not a number") },
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { row, column: name.to_string(), message: "non-finite value".into() });
            }
            Ok(v)
        };
        let label = record.get(group_col).unwrap_or("").trim().to_string();
        if label.is_empty() {
            return Err(Error::Parse { row, column: schema.group.clone(), message: "empty group label".into() });
        }
        let y = cell(response_col, &schema.response)?;
        let mut x = Vec::with_capacity(schema.p());
        if schema.intercept {
            x.push(1.0);
        }
        for (&col, name) in cov_cols.iter().zip(&schema.covariates) {
            x.push(cell(col, name)?);
        }
        let gi = *index.entry(label.clone()).or_insert_with(|| {
            order.push(label);
            rows.push(Vec::new());
            responses.push(Vec::new());
            order.len() - 1
        });
        rows[gi].push(x);
        responses[gi].push(y);
        total += 1;
    }

    let p = schema.p();
    let groups = order
        .iter()
        .zip(rows)
        .zip(&responses)
        .map(|((label, x), y)| {
            let n = y.len();
            if n <= p {
                return Err(Error::InsufficientData { group: label.clone(), n, p });
            }
            let design = DMatrix::from_fn(n, p, |r, c| x[r][c]);
            RegressionGroup::new(label.clone(), design, DVector::from_column_slice(y))
        })
        .collect::<Result<Vec<_>>>()?;
    let fingerprint = InputFingerprint {
        rows: total,
        groups: order,
        group_rows: responses.iter().map(Vec::len).collect(),
    };
    Ok((groups, fingerprint))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    Chi2,
    Fiducial,
    Generalized,
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: MethodChoice,
    pub draws: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { method: MethodChoice::All, draws: DEFAULT_DRAWS, seed: 0, alpha: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub method: String,
    pub p_value: f64,
    pub reject: bool,
}

/// Everything `hetreg test` reports, serialized as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub input: InputFingerprint,
    pub k: usize,
    pub p: usize,
    pub q0: f64,
    pub df_chi2: usize,
    pub p_chi2: f64,
    pub p_fiducial: Option<MCResult>,
    pub p_generalized: Option<MCResult>,
    pub alpha: f64,
    pub decisions: Vec<Decision>,
    pub groups: Vec<GroupSummary>,
}

pub fn run_test(groups: &[RegressionGroup], input: InputFingerprint, config: &RunConfig) -> Result<TestReport> {
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {}", config.alpha)));
    }
    if config.draws == 0 {
        return Err(Error::InvalidInput("draws must be positive".into()));
    }
    if groups.len() < 2 {
        return Err(Error::NeedTwoGroups(groups.len()));
    }
    let estimates = fit_groups(groups)?;
    let stat = compute_q0(&estimates)?;
    let p_chi2 = chi2_pvalue(&stat);

    let want = |m: MethodChoice| config.method == m || config.method == MethodChoice::All;
    let p_fiducial = want(MethodChoice::Fiducial)
        .then(|| mc_pvalue(Engine::Fiducial, &stat, &estimates, config.draws, config.seed))
        .transpose()?;
    let p_generalized = want(MethodChoice::Generalized)
        .then(|| mc_pvalue(Engine::Generalized, &stat, &estimates, config.draws, config.seed))
        .transpose()?;

    let mut decisions = Vec::new();
    let mut decide = |method: &str, p_value: f64| {
        decisions.push(Decision { method: method.into(), p_value, reject: p_value <= config.alpha });
    };
    if want(MethodChoice::Chi2) {
        decide("chi2", p_chi2);
    }
    if let Some(r) = &p_fiducial {
        decide("fiducial", r.p_value);
    }
    if let Some(r) = &p_generalized {
        decide("generalized", r.p_value);
    }

    Ok(TestReport {
        input,
        k: stat.k,
        p: stat.p,
        q0: stat.q0,
        df_chi2: stat.df_chi2,
        p_chi2,
        p_fiducial,
        p_generalized,
        alpha: config.alpha,
        decisions,
        groups: estimates.iter().map(GroupSummary::from).collect(),
    })
}

/// Plain-text table for standard output.
pub fn render_table(report: &TestReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "groups: {}  coefficients per group: {}  rows: {}", report.k, report.p, report.input.rows);
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<16} {:>6} {:>14}  beta_hat", "group", "n", "s2");
    for g in &report.groups {
        let beta: Vec<String> = g.beta_hat.iter().map(|b| format!("{b:.6}")).collect();
        let _ = writeln!(out, "{:<16} {:>6} {:>14.6}  [{}]", g.label, g.n, g.s2, beta.join(", "));
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "Q0 = {:.6}   df = {}", report.q0, report.df_chi2);
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<12} {:>10} {:>10} {:>8}  decision (alpha = {})", "method", "p-value", "std.err", "draws", report.alpha);
    for d in &report.decisions {
        let mc = match d.method.as_str() {
            "fiducial" => report.p_fiducial,
            "generalized" => report.p_generalized,
            _ => None,
        };
        let (se, draws) = mc.map_or(("-".to_string(), "-".to_string()), |r| {
            (format!("{:.6}", r.std_error), r.draws.to_string())
        });
        let verdict = if d.reject { "reject H0" } else { "do not reject H0" };
        let _ = writeln!(out, "{:<12} {:>10.6} {:>10} {:>8}  {verdict}", d.method, d.p_value, se, draws);
    }
    out
}

/// Single-line JSON error record.
pub fn error_record(err: &Error) -> String {
    serde_json::json!({ "error": err.kind(), "message": err.to_string() }).to_string()
}

/// Process exit code for an error: 2 for input problems, 3 for numerical failures.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_input_error() {
        2
    } else {
        3
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_GROUPS: &str = "group,y\nA,1\nA,2\nA,3\nB,2\nB,4\nB,6\n";

    #[test]
    fn intercept_only_two_groups() {
        let (g, fp) = ingest_csv_reader(TWO_GROUPS.as_bytes(), &CsvSchema::intercept_only("group", "y")).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!((g[0].n(), g[1].n()), (3, 3));
        assert_eq!(fp.groups, vec!["A", "B"]);
        assert_eq!(fp.rows, 6);
    }

    #[test]
    fn first_appearance_order() {
        let text = "g,y\nZ,1\nA,2\nZ,3\nA,5\nZ,2\nA,1\n";
        let (g, _) = ingest_csv_reader(text.as_bytes(), &CsvSchema::intercept_only("g", "y")).unwrap();
        assert_eq!(g[0].label(), "Z");
        assert_eq!(g[1].label(), "A");
    }

    #[test]
    fn blank_cell_cites_row() {
        let text = "group,y\nA,1\nA,2\nA,\nB,2\nB,4\nB,6\n";
        let err = ingest_csv_reader(text.as_bytes(), &CsvSchema::intercept_only("group", "y")).unwrap_err();
        assert_eq!(err, Error::Parse { row: 4, column: "y".into(), message: "empty cell".into() });
    }

    #[test]
    fn missing_column() {
        let err = ingest_csv_reader(TWO_GROUPS.as_bytes(), &CsvSchema::intercept_only("grp", "y")).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn covariates_with_intercept() {
        let text = "g,y,x1,x2\nA,1,0.1,3\nA,2,0.5,1\nA,3,0.2,2\nA,5,0.9,4\nB,2,0.3,1\nB,4,0.8,0\nB,6,0.4,5\nB,1,0.6,2\n";
        let schema = CsvSchema { group: "g".into(), response: "y".into(), covariates: vec!["x1".into(), "x2".into()], intercept: true };
        let (g, _) = ingest_csv_reader(text.as_bytes(), &schema).unwrap();
        assert_eq!(g[0].p(), 3);
        assert_eq!(g[0].design().row(1).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.5, 1.0]);
    }

    #[test]
    fn too_small_group_is_named() {
        let text = "g,y\nA,1\nA,2\nB,3\n";
        let err = ingest_csv_reader(text.as_bytes(), &CsvSchema::intercept_only("g", "y")).unwrap_err();
        assert_eq!(err, Error::InsufficientData { group: "B".into(), n: 1, p: 1 });
    }

    #[test]
    fn report_has_q0_and_decisions() {
        let (g, fp) = ingest_csv_reader(TWO_GROUPS.as_bytes(), &CsvSchema::intercept_only("group", "y")).unwrap();
        let cfg = RunConfig { draws: 2000, seed: 3, ..RunConfig::default() };
        let r = run_test(&g, fp, &cfg).unwrap();
        assert!((r.q0 - 2.4).abs() < 1e-12);
        assert_eq!(r.decisions.len(), 3);
        assert!(r.p_fiducial.is_some() && r.p_generalized.is_some());
        let table = render_table(&r);
        assert!(table.contains("Q0 = 2.400000"));
    }

    #[test]
    fn single_method() {
        let (g, fp) = ingest_csv_reader(TWO_GROUPS.as_bytes(), &CsvSchema::intercept_only("group", "y")).unwrap();
        let cfg = RunConfig { method: MethodChoice::Chi2, ..RunConfig::default() };
        let r = run_test(&g, fp, &cfg).unwrap();
        assert!(r.p_fiducial.is_none() && r.p_generalized.is_none());
        assert_eq!(r.decisions.len(), 1);
    }

    #[test]
    fn error_records() {
        let e = Error::NeedTwoGroups(1);
        assert_eq!(exit_code(&e), 2);
        assert_eq!(exit_code(&Error::NumericallySingular("x".into())), 3);
        let rec: serde_json::Value = serde_json::from_str(&error_record(&e)).unwrap();
        assert_eq!(rec["error"], "NeedTwoGroups");
        assert!(!error_record(&e).contains('\n'));
    }
}
