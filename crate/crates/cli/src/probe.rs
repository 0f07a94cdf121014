//! Ridge-probe subspaces: fit on rated training images, score generated
//! pole images, and measure differential bias between image groups.

use std::path::Path;

use impression_core::corpus::{align, read_embeddings, read_ratings, EmbeddingMatrix};
use impression_core::subspace::{
    classify_projections, default_lambda_grid, differential_bias, feature_matrix, project_rows,
    AttributeSubspace, DifferentialBias, RidgeProbe,
};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::{AnalysisOptions, ProbeConfig};
use crate::error::{CliError, CliResult, Context};
use crate::output::{csv_string, Staging};

#[derive(Debug, Clone, Serialize)]
pub struct SubspaceSummary {
    pub attribute: String,
    pub ridge_lambda: f64,
    pub train_r2: f64,
    pub weight_norm: f64,
    pub intercept: f64,
    pub file: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsRow {
    pub attribute: String,
    pub n_pos: usize,
    pub n_neg: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Contents of `probe.json`.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub tool: String,
    pub version: String,
    pub timestamp: String,
    pub options: AnalysisOptions,
    pub select_lambda: bool,
    pub scale_is_default: bool,
    pub n_train: usize,
    pub subspaces: Vec<SubspaceSummary>,
    pub metrics: Vec<MetricsRow>,
    pub differential_bias: Vec<DifferentialBias>,
    pub outputs: Vec<String>,
}

fn safe_file_stem(name: &str) -> CliResult<()> {
    let ok = !name.is_empty()
        && !name.starts_with('.')
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
    if ok {
        Ok(())
    } else {
        Err(CliError::Input(format!(
            "attribute `{name}` cannot name a subspace file; use only [A-Za-z0-9._-]"
        )))
    }
}

fn load_images(path: &Path, dim: usize, what: &str) -> CliResult<DMatrix<f64>> {
    let m: EmbeddingMatrix = read_embeddings(path).context(what)?;
    if m.dim() != dim {
        return Err(CliError::Input(format!(
            "{what} ({}) have dimension {}, training features have {dim}",
            path.display(),
            m.dim()
        )));
    }
    Ok(feature_matrix(&m))
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

pub fn cmd_probe(config: &ProbeConfig) -> CliResult<ProbeReport> {
    let out = config
        .output_dir
        .clone()
        .ok_or_else(|| CliError::Input("no output directory: set output_dir or pass --out".into()))?;
    config.validate()?;
    let options = &config.options;
    let midpoint = options.scale.midpoint;

    let features = read_embeddings(&config.features).context("training features")?;
    let ratings = read_ratings(&config.ratings_path, options.scale)?;
    let corpus = align(&features, &ratings)?;
    let attributes: Vec<String> = match &config.attributes {
        Some(a) => a.clone(),
        None => ratings.attributes().to_vec(),
    };
    for a in &attributes {
        safe_file_stem(a)?;
        if corpus.ratings.attribute_index(a).is_none() {
            return Err(CliError::Input(format!(
                "{} has no ratings for `{a}`",
                config.ratings_path.display()
            )));
        }
    }
    for g in &config.generated {
        if !attributes.contains(&g.attribute) {
            return Err(CliError::Input(format!(
                "generated images given for `{}`, which is not a probed attribute",
                g.attribute
            )));
        }
    }

    let x = feature_matrix(&corpus.embeddings);
    let dim = x.ncols();
    let probe = RidgeProbe::new(&x)?;
    let mut subspaces = Vec::with_capacity(attributes.len());
    for a in &attributes {
        let h = corpus.ratings.column(a).expect("checked above");
        let lambda = if config.select_lambda {
            probe.select_lambda(&h, midpoint, &default_lambda_grid())
        } else {
            Ok(options.ridge_lambda)
        }
        .context(format!("attribute `{a}`"))?;
        subspaces.push(probe.fit(a, &h, lambda, midpoint).context(format!("attribute `{a}`"))?);
    }
    let find = |a: &str| -> &AttributeSubspace {
        subspaces.iter().find(|s| s.attribute == a).expect("fitted above")
    };

    let mut metrics = Vec::new();
    for g in &config.generated {
        let (pos_path, neg_path) = match (&g.pos, &g.neg) {
            (Some(p), Some(n)) => (p, n),
            _ => unreachable!("validated"),
        };
        let pos = load_images(pos_path, dim, &format!("positive-pole images for `{}`", g.attribute))?;
        let neg = load_images(neg_path, dim, &format!("negative-pole images for `{}`", g.attribute))?;
        let r = classify_projections(&pos, &neg, find(&g.attribute))?;
        metrics.push(MetricsRow {
            attribute: g.attribute.clone(),
            n_pos: pos.nrows(),
            n_neg: neg.nrows(),
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
        });
    }

    let mut bias = Vec::new();
    if let Some(groups) = &config.groups {
        let a = load_images(&groups.a.path, dim, &format!("group `{}` images", groups.a.name))?;
        let b = load_images(&groups.b.path, dim, &format!("group `{}` images", groups.b.name))?;
        for s in &subspaces {
            let pa = project_rows(&a, s)?;
            let pb = project_rows(&b, s)?;
            bias.push(
                differential_bias(
                    &s.attribute,
                    (&groups.a.name, &pa),
                    (&groups.b.name, &pb),
                    options.d_mode,
                )
                .context(format!("differential bias for `{}`", s.attribute))?,
            );
        }
    }

    let mut staging = Staging::new(&out)?;
    let mut outputs = Vec::new();
    let mut summaries = Vec::new();
    for s in &subspaces {
        let rel = format!("subspaces/{}.emb", s.attribute);
        let path = staging.path(&rel)?;
        s.write(&path)?;
        let back = AttributeSubspace::read(&path)?;
        let stored: Vec<f32> = s.weights.iter().map(|&w| w as f32).collect();
        let read: Vec<f32> = back.weights.iter().map(|&w| w as f32).collect();
        if stored != read || back.feature_means != s.feature_means {
            return Err(CliError::Internal(format!("{rel} did not round-trip")));
        }
        summaries.push(SubspaceSummary {
            attribute: s.attribute.clone(),
            ridge_lambda: s.ridge_lambda,
            train_r2: s.train_r2,
            weight_norm: s.weight_norm(),
            intercept: s.intercept,
            file: rel.clone(),
        });
        outputs.push(rel);
    }
    if !config.generated.is_empty() {
        staging.write(
            "probe_metrics.csv",
            csv_string(
                &["attribute", "precision", "recall", "f1"],
                metrics.iter().map(|m| {
                    vec![m.attribute.clone(), fmt(m.precision), fmt(m.recall), fmt(m.f1)]
                }),
            )?,
        )?;
        outputs.push("probe_metrics.csv".into());
    }
    if config.groups.is_some() {
        staging.write(
            "differential_bias.csv",
            csv_string(
                &["attribute", "d", "t", "p"],
                bias.iter()
                    .map(|b| vec![b.attribute.clone(), fmt(b.d), fmt(b.t), fmt(b.p)]),
            )?,
        )?;
        outputs.push("differential_bias.csv".into());
    }
    outputs.push("probe.json".into());
    let report = ProbeReport {
        tool: "impression-audit".into(),
        version: crate::VERSION.into(),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        options: options.clone(),
        select_lambda: config.select_lambda,
        scale_is_default: options.scale.is_default(),
        n_train: corpus.len(),
        subspaces: summaries,
        metrics,
        differential_bias: bias,
        outputs,
    };
    staging.write_json("probe.json", &report)?;
    staging.commit()?;
    Ok(report)
}
