//! Multiple regression of model-human similarity on human IRR and model
//! scale descriptors.

use std::collections::BTreeMap;
use std::path::Path;

use impression_core::corpus::{read_irr, read_model_meta, ModelMeta};
use impression_core::stats::{normalize_by_max, ols};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::require_file;
use crate::error::{CliError, CliResult, Context};
use crate::output::Staging;

/// Independent variables in design-matrix order, after the constant.
pub const PREDICTORS: [&str; 5] = [
    "Human IRR",
    "Dataset Size",
    "Total Samples",
    "Image Params",
    "Text Params",
];

#[derive(Debug, Deserialize)]
struct SimilarityRow {
    model_id: String,
    attribute: String,
    rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub name: String,
    pub coef: f64,
    pub std_err: f64,
    pub t: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub name: String,
    /// Divisor applied to the raw column, 1 when the column already lies in (0, 1).
    pub divisor: f64,
}

/// Contents of `regression.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub tool: String,
    pub version: String,
    pub dependent: String,
    pub n: usize,
    pub coefficients: Vec<CoefficientRow>,
    pub r2: f64,
    pub adj_r2: f64,
    pub f_statistic: f64,
    pub f_p_value: f64,
    pub df_model: usize,
    pub df_resid: usize,
    pub normalization: Vec<Normalization>,
}

impl RegressionReport {
    pub fn coefficient(&self, name: &str) -> Option<&CoefficientRow> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

fn read_similarities(path: &Path) -> CliResult<Vec<SimilarityRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<SimilarityRow>().enumerate() {
        let row = rec.map_err(|e| CliError::Input(format!("{} row {}: {e}", path.display(), i + 2)))?;
        if !row.rho.is_finite() {
            return Err(CliError::Input(format!(
                "{} row {}: rho is not finite",
                path.display(),
                i + 2
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Fits the regression in memory; see [`cmd_regress`] for the file-based command.
pub fn regress(
    rows: &[(String, String, f64)],
    irr: &impression_core::corpus::IrrTable,
    meta: &[ModelMeta],
) -> CliResult<RegressionReport> {
    let by_id: BTreeMap<&str, &ModelMeta> = meta.iter().map(|m| (m.model_id.as_str(), m)).collect();
    let mut sorted: Vec<&(String, String, f64)> = rows.iter().collect();
    sorted.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
    for w in sorted.windows(2) {
        if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
            return Err(CliError::Input(format!(
                "similarity table repeats model `{}` attribute `{}`",
                w[0].0, w[0].1
            )));
        }
    }
    let mut raw: [Vec<f64>; 5] = Default::default();
    let mut y = Vec::with_capacity(sorted.len());
    for (model, attr, rho) in sorted {
        let m = by_id
            .get(model.as_str())
            .ok_or_else(|| CliError::Input(format!("no model metadata for `{model}`")))?;
        let r = irr
            .get(attr)
            .ok_or_else(|| CliError::Input(format!("no IRR value for attribute `{attr}`")))?;
        raw[0].push(r);
        raw[1].push(m.dataset_size as f64);
        raw[2].push(m.total_training_samples as f64);
        raw[3].push(m.image_params as f64);
        raw[4].push(m.text_params as f64);
        y.push(*rho);
    }
    let n = y.len();
    let mut columns = Vec::with_capacity(5);
    let mut normalization = Vec::with_capacity(5);
    for (name, col) in PREDICTORS.iter().zip(&raw) {
        let scaled = normalize_by_max(col).context(*name)?;
        let divisor = if scaled == *col {
            1.0
        } else {
            col.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        };
        normalization.push(Normalization {
            name: (*name).to_owned(),
            divisor,
        });
        columns.push(scaled);
    }
    let x = DMatrix::from_fn(n, 6, |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] });
    let fit = ols(&x, &y)?;
    let names = std::iter::once("const").chain(PREDICTORS);
    let coefficients = names
        .enumerate()
        .map(|(j, name)| CoefficientRow {
            name: name.to_owned(),
            coef: fit.coefficients[j],
            std_err: fit.std_errors[j],
            t: fit.t_values[j],
            p: fit.p_values[j],
        })
        .collect();
    Ok(RegressionReport {
        tool: "impression-audit".into(),
        version: crate::VERSION.into(),
        dependent: "model_human_similarity".into(),
        n,
        coefficients,
        r2: fit.r2,
        adj_r2: fit.adj_r2,
        f_statistic: fit.f_statistic,
        f_p_value: fit.f_p_value,
        df_model: fit.df_model,
        df_resid: fit.df_resid,
        normalization,
    })
}

/// Reads the long similarity table, IRR and model metadata, fits the
/// regression and writes `regression.json` into `out`.
pub fn cmd_regress(
    similarities: &Path,
    irr: &Path,
    meta: &Path,
    out: &Path,
) -> CliResult<RegressionReport> {
    require_file(similarities, "similarity table")?;
    require_file(irr, "IRR file")?;
    require_file(meta, "model metadata file")?;
    let rows: Vec<(String, String, f64)> = read_similarities(similarities)?
        .into_iter()
        .map(|r| (r.model_id, r.attribute, r.rho))
        .collect();
    let report = regress(&rows, &read_irr(irr)?, &read_model_meta(meta)?)?;
    let mut staging = Staging::new(out)?;
    staging.write_json("regression.json", &report)?;
    staging.commit()?;
    Ok(report)
}
