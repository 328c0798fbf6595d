//! The analysis dataset and CSV ingestion.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::DesignMatrix;
use crate::linalg::{weighted_least_squares, WlsOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Continuous,
    Binary,
}

impl std::str::FromStr for OutcomeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "continuous" | "cont" => Ok(OutcomeKind::Continuous),
            "binary" | "bin" => Ok(OutcomeKind::Binary),
            other => Err(Error::InvalidInput(format!("unknown outcome kind `{other}`"))),
        }
    }
}

/// Complete-case data: covariates `L`, binary treatment `A`, outcome `Y`.
#[derive(Debug, Clone)]
pub struct Dataset {
    covariates: Vec<Vec<f64>>,
    labels: Vec<String>,
    treatment: Vec<u8>,
    treatment_f: Vec<f64>,
    outcome: Vec<f64>,
    outcome_kind: OutcomeKind,
}

impl Dataset {
    /// `covariates` holds one vector per covariate column.
    pub fn new(
        covariates: Vec<Vec<f64>>,
        labels: Vec<String>,
        treatment: Vec<u8>,
        outcome: Vec<f64>,
        outcome_kind: OutcomeKind,
    ) -> Result<Self> {
        let n = treatment.len();
        if labels.len() != covariates.len() {
            return Err(Error::InvalidInput(format!("{} labels for {} covariates", labels.len(), covariates.len())));
        }
        if outcome.len() != n {
            return Err(Error::InvalidInput(format!("outcome length {} != treatment length {n}", outcome.len())));
        }
        for (c, l) in covariates.iter().zip(&labels) {
            if c.len() != n {
                return Err(Error::InvalidInput(format!("covariate `{l}` has length {} != {n}", c.len())));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("covariate `{l}` has missing or non-finite values")));
            }
        }
        if treatment.iter().any(|&a| a > 1) {
            return Err(Error::InvalidInput("treatment must be 0/1".into()));
        }
        let treated = treatment.iter().filter(|&&a| a == 1).count();
        if treated == 0 || treated == n {
            return Err(Error::InvalidInput("both treatment classes must be present".into()));
        }
        if outcome.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("outcome has missing or non-finite values".into()));
        }
        if outcome_kind == OutcomeKind::Binary && outcome.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::InvalidInput("binary outcome must be coded 0/1".into()));
        }
        let treatment_f = treatment.iter().map(|&a| a as f64).collect();
        Ok(Dataset { covariates, labels, treatment, treatment_f, outcome, outcome_kind })
    }

    pub fn n(&self) -> usize {
        self.treatment.len()
    }

    /// Number of candidate covariates `J`.
    pub fn num_covariates(&self) -> usize {
        self.covariates.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn covariate(&self, k: usize) -> &[f64] {
        &self.covariates[k]
    }

    pub fn treatment(&self) -> &[u8] {
        &self.treatment
    }

    pub fn treatment_f64(&self) -> &[f64] {
        &self.treatment_f
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        self.outcome_kind
    }

    /// Intercept plus the covariates in `subset` (treatment model).
    pub fn treatment_design(&self, subset: &[usize]) -> Result<DesignMatrix> {
        DesignMatrix::with_intercept(
            self.n(),
            subset.iter().map(|&k| (self.labels[k].as_str(), self.covariates[k].as_slice())),
        )
    }

    /// Intercept, treatment, then the covariates in `subset` (outcome model).
    pub fn outcome_design(&self, subset: &[usize]) -> Result<DesignMatrix> {
        let cols = std::iter::once(("A", self.treatment_f.as_slice()))
            .chain(subset.iter().map(|&k| (self.labels[k].as_str(), self.covariates[k].as_slice())));
        DesignMatrix::with_intercept(self.n(), cols)
    }

    /// The same units in a different order; `order[i]` is the source row of new row `i`.
    pub fn permute_rows(&self, order: &[usize]) -> Result<Dataset> {
        let pick = |v: &[f64]| order.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Dataset::new(
            self.covariates.iter().map(|c| pick(c)).collect(),
            self.labels.clone(),
            order.iter().map(|&i| self.treatment[i]).collect(),
            pick(&self.outcome),
            self.outcome_kind,
        )
    }

    /// Keep only the listed covariates, in the given order.
    pub fn select_covariates(&self, keep: &[usize]) -> Result<Dataset> {
        Dataset::new(
            keep.iter().map(|&k| self.covariates[k].clone()).collect(),
            keep.iter().map(|&k| self.labels[k].clone()).collect(),
            self.treatment.clone(),
            self.outcome.clone(),
            self.outcome_kind,
        )
    }

    /// Multiply every outcome by `c`.
    pub fn with_scaled_outcome(&self, c: f64) -> Result<Dataset> {
        Dataset::new(
            self.covariates.clone(),
            self.labels.clone(),
            self.treatment.clone(),
            self.outcome.iter().map(|y| y * c).collect(),
            self.outcome_kind,
        )
    }
}

/// What ingestion changed relative to the raw file.
#[derive(Debug, Clone, Default, Serialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub dropped_incomplete_rows: usize,
    /// `(column, levels)` for each dummy-coded column; first level is the dropped reference.
    pub expanded_factors: Vec<(String, Vec<String>)>,
    /// `(column, reason)` for each dropped covariate column.
    pub dropped_columns: Vec<(String, String)>,
    pub messages: Vec<String>,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "NaN" | "nan" | "." | "null" | "NULL")
}

fn parse_binary(cell: &str) -> Option<u8> {
    match cell.trim().to_ascii_lowercase().as_str() {
        "1" | "1.0" | "true" => Some(1),
        "0" | "0.0" | "false" => Some(0),
        other => other.parse::<f64>().ok().and_then(|v| match v {
            v if v == 1.0 => Some(1),
            v if v == 0.0 => Some(0),
            _ => None,
        }),
    }
}

/// Read a header-bearing CSV into a complete-case [`Dataset`].
///
/// Non-numeric covariates are dummy coded (reference level = first in sorted
/// order, indicators named `<col>_<level>`). Rows with a missing cell are
/// dropped, then constant and linearly dependent covariate columns.
pub fn ingest_csv(
    path: impl AsRef<Path>,
    treatment_column: &str,
    outcome_column: &str,
    outcome_kind: OutcomeKind,
) -> Result<(Dataset, IngestReport)> {
    let reader = csv::ReaderBuilder::new().has_headers(true).from_path(path.as_ref())?;
    ingest_reader(reader, treatment_column, outcome_column, outcome_kind)
}

pub fn ingest_reader<R: std::io::Read>(
    mut reader: csv::Reader<R>,
    treatment_column: &str,
    outcome_column: &str,
    outcome_kind: OutcomeKind,
) -> Result<(Dataset, IngestReport)> {
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidInput(format!("column `{name}` not found in header")))
    };
    let a_col = find(treatment_column)?;
    let y_col = find(outcome_column)?;

    let mut report = IngestReport::default();
    let mut rows: Vec<Vec<String>> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        report.rows_read += 1;
        let cells: Vec<String> = rec.iter().map(|c| c.trim().to_string()).collect();
        if cells.len() != headers.len() || cells.iter().any(|c| is_missing(c)) {
            report.dropped_incomplete_rows += 1;
            continue;
        }
        rows.push(cells);
    }
    if report.dropped_incomplete_rows > 0 {
        let msg = format!(
            "dropped {} incomplete row{}",
            report.dropped_incomplete_rows,
            if report.dropped_incomplete_rows == 1 { "" } else { "s" }
        );
        log::warn!("{msg}");
        report.messages.push(msg);
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("no complete rows".into()));
    }

    let mut treatment = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        treatment.push(parse_binary(&r[a_col]).ok_or_else(|| {
            Error::InvalidInput(format!(
                "treatment column `{treatment_column}` is not binary (row {}: `{}`)",
                i + 1,
                r[a_col]
            ))
        })?);
    }
    let mut outcome = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let v = match outcome_kind {
            OutcomeKind::Binary => parse_binary(&r[y_col]).map(f64::from).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "binary outcome `{outcome_column}` has non-0/1 value `{}` (row {})",
                    r[y_col],
                    i + 1
                ))
            })?,
            OutcomeKind::Continuous => r[y_col].parse::<f64>().map_err(|_| {
                Error::InvalidInput(format!(
                    "outcome `{outcome_column}` has non-numeric value `{}` (row {})",
                    r[y_col],
                    i + 1
                ))
            })?,
        };
        outcome.push(v);
    }

    let mut covariates: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    for (c, name) in headers.iter().enumerate() {
        if c == a_col || c == y_col {
            continue;
        }
        let parsed: Option<Vec<f64>> = rows.iter().map(|r| r[c].parse::<f64>().ok()).collect();
        match parsed {
            Some(values) => {
                covariates.push(values);
                labels.push(name.clone());
            }
            None => {
                let levels: BTreeSet<&str> = rows.iter().map(|r| r[c].as_str()).collect();
                let levels: Vec<String> = levels.into_iter().map(str::to_string).collect();
                for level in levels.iter().skip(1) {
                    covariates.push(rows.iter().map(|r| if &r[c] == level { 1.0 } else { 0.0 }).collect());
                    labels.push(format!("{name}_{level}"));
                }
                report.expanded_factors.push((name.clone(), levels));
            }
        }
    }

    // constant columns
    let mut keep = Vec::new();
    for (k, col) in covariates.iter().enumerate() {
        if col.iter().all(|&v| v == col[0]) {
            let msg = format!("dropped constant column `{}`", labels[k]);
            log::warn!("{msg}");
            report.messages.push(msg);
            report.dropped_columns.push((labels[k].clone(), "constant".into()));
        } else {
            keep.push(k);
        }
    }

    // linearly dependent columns, found greedily in column order
    let n = rows.len();
    let mut independent: Vec<usize> = Vec::new();
    for &k in &keep {
        let mut data = vec![1.0; n];
        for &j in independent.iter().chain(std::iter::once(&k)) {
            data.extend_from_slice(&covariates[j]);
        }
        let m = DMatrix::from_vec(n, independent.len() + 2, data);
        match weighted_least_squares(&m, &vec![0.0; n], None) {
            WlsOutcome::Solved(_) => independent.push(k),
            WlsOutcome::RankDeficient(_) => {
                let msg = format!("dropped singular column `{}`", labels[k]);
                log::warn!("{msg}");
                report.messages.push(msg);
                report.dropped_columns.push((labels[k].clone(), "singular".into()));
            }
        }
    }

    let mut columns: BTreeMap<usize, Vec<f64>> = covariates.into_iter().enumerate().collect();
    let final_cols: Vec<Vec<f64>> = independent.iter().map(|k| columns.remove(k).unwrap()).collect();
    let final_labels: Vec<String> = independent.iter().map(|&k| labels[k].clone()).collect();

    let data = Dataset::new(final_cols, final_labels, treatment, outcome, outcome_kind)?;
    Ok((data, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest(text: &str, kind: OutcomeKind) -> Result<(Dataset, IngestReport)> {
        let reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        ingest_reader(reader, "a", "y", kind)
    }

    #[test]
    fn factor_expands_to_one_indicator() {
        let (d, r) = ingest("a,y,x,g\n1,2.0,0.5,red\n0,1.0,1.5,blue\n1,0.5,-1,red\n", OutcomeKind::Continuous).unwrap();
        assert_eq!(d.num_covariates(), 2);
        assert_eq!(d.labels(), &["x".to_string(), "g_red".to_string()]);
        assert_eq!(d.covariate(1), &[1.0, 0.0, 1.0]);
        assert_eq!(r.expanded_factors.len(), 1);
    }

    #[test]
    fn constant_column_dropped() {
        let (d, r) = ingest("a,y,x,c\n1,2.0,0.5,3\n0,1.0,1.5,3\n1,0.5,-1,3\n", OutcomeKind::Continuous).unwrap();
        assert_eq!(d.labels(), &["x".to_string()]);
        assert!(r.messages.iter().any(|m| m.contains("`c`")));
    }

    #[test]
    fn incomplete_row_dropped() {
        let (d, r) = ingest("a,y,x\n1,2.0,0.5\n0,,1.5\n1,0.5,-1\n0,0.1,2\n", OutcomeKind::Continuous).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(r.dropped_incomplete_rows, 1);
        assert!(r.messages.iter().any(|m| m == "dropped 1 incomplete row"));
    }

    #[test]
    fn duplicate_column_dropped_as_singular() {
        let (d, r) = ingest("a,y,x,x2\n1,2,1,2\n0,1,2,4\n1,0,3,6\n0,1,5,10\n", OutcomeKind::Continuous).unwrap();
        assert_eq!(d.labels(), &["x".to_string()]);
        assert_eq!(r.dropped_columns[0].1, "singular");
    }

    #[test]
    fn non_binary_treatment_rejected() {
        assert!(ingest("a,y,x\n2,1,0\n0,1,1\n", OutcomeKind::Continuous).is_err());
    }

    #[test]
    fn binary_outcome_checked() {
        assert!(ingest("a,y,x\n1,0.5,0\n0,1,1\n", OutcomeKind::Binary).is_err());
        assert!(ingest("a,y,x\n1,0,0\n0,1,1\n", OutcomeKind::Binary).is_ok());
    }
}
