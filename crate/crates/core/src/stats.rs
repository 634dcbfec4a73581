//! Logistic regression of respondent factors against agreement between tasks.
//!
//! The fitter is plain maximum likelihood by iteratively reweighted least
//! squares, with Wald standard errors and two-sided normal p-values.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::survey::{AcademicBackground, Gender, RespondentProfile};

pub const MAX_ITERATIONS: usize = 50;
/// Convergence when every score component is below this in absolute value.
pub const SCORE_TOLERANCE: f64 = 1e-8;
pub const INTERCEPT: &str = "intercept";
pub const OUTCOME_COLUMN: &str = "outcome";

/// Published background effects: (category, parameter, p-value as printed).
/// They rest on respondent data that is not available, so they are for
/// display next to new fits, not for checking against.
pub const REFERENCE_BACKGROUND_EFFECTS: [(&str, f64, &str); 3] = [
    ("arts_humanities", 0.05, "0.37"),
    ("social_science", -0.03, "0.71"),
    ("science_medical", 0.16, "< 0.01"),
];

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("design has {rows} rows for {predictors} predictors; need at least predictors + 2")]
    TooFewRows { rows: usize, predictors: usize },
    #[error("row {row}: expected {expected} predictor values, got {got}")]
    RaggedRow {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("row {row}: non-finite predictor value")]
    NonFinite { row: usize },
    #[error("row {row}: outcome must be 0 or 1")]
    BadOutcome { row: usize },
    #[error("outcome has a single class; both 0 and 1 are needed")]
    SingleClass,
    #[error("design is rank deficient; collinear columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),
    #[error("coefficient vector has length {got}, expected {expected}")]
    BetaLength { expected: usize, got: usize },
    #[error("no respondents to build a design from")]
    NoRespondents,
    #[error("delimited input: {0}")]
    Delimited(String),
}

/// Predictor matrix (without intercept) plus a binary outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDesign {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
    outcome: Vec<f64>,
}

impl RegressionDesign {
    pub fn new(
        columns: Vec<String>,
        rows: Vec<Vec<f64>>,
        outcome: Vec<u8>,
    ) -> Result<Self, StatsError> {
        if rows.len() != outcome.len() {
            return Err(StatsError::RaggedRow {
                row: rows.len().min(outcome.len()),
                expected: columns.len(),
                got: 0,
            });
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(StatsError::RaggedRow {
                    row: i,
                    expected: columns.len(),
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(StatsError::NonFinite { row: i });
            }
        }
        let outcome = outcome
            .iter()
            .enumerate()
            .map(|(i, y)| match y {
                0 => Ok(0.0),
                1 => Ok(1.0),
                _ => Err(StatsError::BadOutcome { row: i }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RegressionDesign {
            columns,
            rows,
            outcome,
        })
    }

    /// Comma-separated text with a header row; the `outcome` column holds 0/1
    /// and every other column is a numeric predictor.
    pub fn from_delimited(text: &str) -> Result<Self, StatsError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| StatsError::Delimited(e.to_string()))?
            .clone();
        let y_col = header
            .iter()
            .position(|h| h == OUTCOME_COLUMN)
            .ok_or_else(|| StatsError::Delimited(format!("no `{OUTCOME_COLUMN}` column")))?;
        let columns: Vec<String> = header
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != y_col)
            .map(|(_, h)| h.to_string())
            .collect();
        let mut rows = Vec::new();
        let mut outcome = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| StatsError::Delimited(e.to_string()))?;
            let line = i + 2;
            let mut row = Vec::with_capacity(columns.len());
            for (j, field) in rec.iter().enumerate() {
                if j == y_col {
                    outcome.push(match field {
                        "0" => 0,
                        "1" => 1,
                        _ => {
                            return Err(StatsError::Delimited(format!(
                                "line {line}: outcome `{field}` is not 0 or 1"
                            )))
                        }
                    });
                } else {
                    row.push(field.parse().map_err(|_| {
                        StatsError::Delimited(format!("line {line}: `{field}` is not a number"))
                    })?);
                }
            }
            rows.push(row);
        }
        Self::new(columns, rows, outcome)
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_predictors(&self) -> usize {
        self.columns.len()
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    /// Copy with predictor `column` multiplied by `factor`.
    pub fn with_scaled_column(&self, column: usize, factor: f64) -> Self {
        let mut out = self.clone();
        for row in &mut out.rows {
            row[column] *= factor;
        }
        out
    }

    /// Intercept column first, then predictors.
    fn matrix(&self) -> DMatrix<f64> {
        let p = self.columns.len() + 1;
        DMatrix::from_fn(self.rows.len(), p, |i, j| {
            if j == 0 {
                1.0
            } else {
                self.rows[i][j - 1]
            }
        })
    }

    fn names(&self) -> Vec<String> {
        std::iter::once(INTERCEPT.to_string())
            .chain(self.columns.iter().cloned())
            .collect()
    }
}

/// ln(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_beta(design: &RegressionDesign, beta: &[f64]) -> Result<DVector<f64>, StatsError> {
    let expected = design.n_predictors() + 1;
    if beta.len() != expected {
        return Err(StatsError::BetaLength {
            expected,
            got: beta.len(),
        });
    }
    Ok(DVector::from_column_slice(beta))
}

fn ll_at(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(y)
        .map(|(e, y)| -(y * softplus(-e) + (1.0 - y) * softplus(*e)))
        .sum()
}

/// Bernoulli log-likelihood; `beta[0]` is the intercept.
pub fn log_likelihood(design: &RegressionDesign, beta: &[f64]) -> Result<f64, StatsError> {
    let b = check_beta(design, beta)?;
    Ok(ll_at(&design.matrix(), &design.outcome, &b))
}

/// Gradient of [`log_likelihood`], `X' (y - p)`.
pub fn score(design: &RegressionDesign, beta: &[f64]) -> Result<Vec<f64>, StatsError> {
    let b = check_beta(design, beta)?;
    let x = design.matrix();
    let resid = DVector::from_iterator(
        design.n_rows(),
        (&x * &b)
            .iter()
            .zip(&design.outcome)
            .map(|(e, y)| y - sigmoid(*e)),
    );
    Ok((x.transpose() * resid).iter().copied().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// `intercept` followed by the design's predictor names.
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub z_scores: Vec<f64>,
    pub p_values: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub max_abs_score: f64,
    pub n_rows: usize,
}

/// Columns that are linear combinations of earlier ones, with their support.
fn collinear_columns(x: &DMatrix<f64>, names: &[String]) -> Option<Vec<String>> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        let mut v = col.clone();
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&v);
                v -= q * proj;
            }
        }
        if norm == 0.0 || v.norm() <= 1e-10 * norm {
            let mut out = vec![names[j].clone()];
            if norm > 0.0 && !kept.is_empty() {
                let a = DMatrix::from_fn(x.nrows(), kept.len(), |r, c| x[(r, kept[c])]);
                if let Ok(coef) = a.svd(true, true).solve(&col, 1e-12) {
                    let scale = coef.amax();
                    for (c, k) in kept.iter().enumerate() {
                        if coef[c].abs() > 1e-9 * scale {
                            out.push(names[*k].clone());
                        }
                    }
                }
            }
            return Some(out);
        }
        basis.push(v.normalize());
        kept.push(j);
    }
    None
}

/// Maximum-likelihood logistic fit by IRLS (Newton on the log-likelihood).
///
/// Stops when `max |score| < 1e-8` or after 50 iterations. A fit whose
/// likelihood still improves along its own coefficient ray, or whose fitted
/// probabilities saturate at 0 or 1, is reported with `converged = false`:
/// that is what separated data looks like, and the diverging coefficients
/// are returned as they are.
pub fn logistic_fit(design: &RegressionDesign) -> Result<FitResult, StatsError> {
    let p = design.n_predictors() + 1;
    let n = design.n_rows();
    if n < design.n_predictors() + 2 {
        return Err(StatsError::TooFewRows {
            rows: n,
            predictors: design.n_predictors(),
        });
    }
    let y = &design.outcome;
    if !(y.contains(&0.0) && y.contains(&1.0)) {
        return Err(StatsError::SingleClass);
    }
    let x = design.matrix();
    let names = design.names();
    if let Some(cols) = collinear_columns(&x, &names) {
        return Err(StatsError::RankDeficient(cols));
    }
    let y_vec = DVector::from_column_slice(y);
    let xt = x.transpose();

    let mut beta = DVector::zeros(p);
    let mut iterations = 0;
    let mut info_ok = true;
    let mut grad_small = false;
    loop {
        let probs = (&x * &beta).map(sigmoid);
        let grad = &xt * (&y_vec - &probs);
        if grad.amax() < SCORE_TOLERANCE {
            grad_small = true;
            break;
        }
        if iterations == MAX_ITERATIONS {
            break;
        }
        let weights = probs.map(|q| q * (1.0 - q));
        let info = information(&x, &weights);
        match info.cholesky() {
            Some(chol) => beta += chol.solve(&grad),
            None => {
                info_ok = false;
                break;
            }
        }
        iterations += 1;
    }

    let probs = (&x * &beta).map(sigmoid);
    let grad = &xt * (&y_vec - &probs);
    let ll = ll_at(&x, y, &beta);
    let saturated = probs.iter().any(|q| q.min(1.0 - q) < 1e-12);
    let ray_improves = ll_at(&x, y, &(&beta * 2.0)) > ll + 1e-12 * ll.abs().max(1.0);
    let converged = grad_small && info_ok && !saturated && !ray_improves;

    let weights = probs.map(|q| q * (1.0 - q));
    let cov = information(&x, &weights).try_inverse();
    let mut standard_errors = Vec::with_capacity(p);
    let mut z_scores = Vec::with_capacity(p);
    let mut p_values = Vec::with_capacity(p);
    for j in 0..p {
        let se = cov
            .as_ref()
            .map(|c| c[(j, j)])
            .filter(|v| v.is_finite() && *v > 0.0)
            .map_or(f64::INFINITY, f64::sqrt);
        let z = if se.is_finite() { beta[j] / se } else { 0.0 };
        standard_errors.push(se);
        z_scores.push(z);
        p_values.push(erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0));
    }

    Ok(FitResult {
        names,
        coefficients: beta.iter().copied().collect(),
        standard_errors,
        z_scores,
        p_values,
        converged,
        iterations,
        log_likelihood: ll,
        max_abs_score: grad.amax(),
        n_rows: n,
    })
}

/// `X' W X` for diagonal weights.
fn information(x: &DMatrix<f64>, weights: &DVector<f64>) -> DMatrix<f64> {
    let mut xw = x.clone();
    for (i, w) in weights.iter().enumerate() {
        xw.row_mut(i).scale_mut(*w);
    }
    x.transpose() * xw
}

/// Hessian of the log-likelihood at `beta`, `-X' W X`.
pub fn hessian(design: &RegressionDesign, beta: &[f64]) -> Result<Vec<Vec<f64>>, StatsError> {
    let b = check_beta(design, beta)?;
    let x = design.matrix();
    let weights = (&x * &b).map(|e| {
        let q = sigmoid(e);
        q * (1.0 - q)
    });
    let h = -information(&x, &weights);
    Ok(h.row_iter().map(|r| r.iter().copied().collect()).collect())
}

impl FitResult {
    /// Predictor / parameter / p-value table, p below 0.01 shown as `< 0.01`.
    pub fn report_table(&self) -> String {
        let width = self.names.iter().map(|n| n.len()).max().unwrap_or(9).max(9);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>10}  {:>10}", "Predictor", "Parameter", "p-Value");
        for j in 0..self.names.len() {
            let p = self.p_values[j];
            let p_text = if p < 0.01 {
                "< 0.01".to_string()
            } else {
                format!("{p:.2}")
            };
            let _ = writeln!(
                out,
                "{:<width$}  {:>10.2}  {:>10}",
                self.names[j], self.coefficients[j], p_text
            );
        }
        let _ = writeln!(
            out,
            "n = {}, log-likelihood = {:.4}, iterations = {}, converged = {}",
            self.n_rows, self.log_likelihood, self.iterations, self.converged
        );
        out
    }
}

/// Per-respondent inputs for the agreement regression.
#[derive(Debug, Clone, PartialEq)]
pub struct RespondentSummary {
    pub profile: RespondentProfile,
    /// Correlation between the respondent's Task 1 and Task 2 networks.
    pub agreement: f64,
    pub task1_entry_sum: f64,
    pub task2_weight_sum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutcomeThreshold {
    /// Outcome 1 when agreement is at or above the population median.
    Median,
    Fixed(f64),
}

pub const DESIGN_COLUMNS: [&str; 8] = [
    "arts_humanities",
    "social_science",
    "science_medical",
    "female",
    "age",
    "education_level",
    "task1_entry_sum",
    "task2_weight_sum",
];

/// Indicator-coded design; `other` background and non-female genders are
/// the baselines.
pub fn design_from_respondents(
    respondents: &[RespondentSummary],
    threshold: OutcomeThreshold,
) -> Result<RegressionDesign, StatsError> {
    if respondents.is_empty() {
        return Err(StatsError::NoRespondents);
    }
    let cut = match threshold {
        OutcomeThreshold::Fixed(t) => t,
        OutcomeThreshold::Median => {
            let mut v: Vec<f64> = respondents.iter().map(|r| r.agreement).collect();
            v.sort_by(f64::total_cmp);
            let m = v.len() / 2;
            if v.len().is_multiple_of(2) {
                (v[m - 1] + v[m]) / 2.0
            } else {
                v[m]
            }
        }
    };
    let indicator = |b: bool| if b { 1.0 } else { 0.0 };
    let rows = respondents
        .iter()
        .map(|r| {
            let bg = r.profile.academic_background;
            vec![
                indicator(bg == AcademicBackground::ArtsHumanities),
                indicator(bg == AcademicBackground::SocialScience),
                indicator(bg == AcademicBackground::ScienceMedical),
                indicator(r.profile.gender == Gender::Female),
                f64::from(r.profile.age),
                f64::from(r.profile.education_level.ordinal()),
                r.task1_entry_sum,
                r.task2_weight_sum,
            ]
        })
        .collect();
    let outcome = respondents
        .iter()
        .map(|r| u8::from(r.agreement >= cut))
        .collect();
    RegressionDesign::new(
        DESIGN_COLUMNS.iter().map(|s| s.to_string()).collect(),
        rows,
        outcome,
    )
}
