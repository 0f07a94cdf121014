//! The full audit: association, human similarity, IRR agreement,
//! correlation structure and, with model metadata, dataset-size effects.

use std::collections::BTreeMap;
use std::path::Path;

use impression_core::association::{
    association_vector, irr_correlation, model_human_similarity, SimilarityRecord,
};
use impression_core::corpus::{
    align, default_attributes, read_attribute_config, read_embeddings, read_irr,
    read_model_meta, read_ratings, AttributeSpec, EmbeddingMatrix, IrrTable, Modality,
    ModelFamily, ModelMeta, RatingsTable,
};
use impression_core::scale::{compare_by_dataset_size, ScaleComparison};
use impression_core::stats::Correlation;
use impression_core::structure::{
    correlation_matrix, frobenius_similarity, hcluster, to_newick, CorrelationMatrix, Dendrogram,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{AnalysisOptions, AuditConfig, ModelPath};
use crate::error::{CliError, CliResult, Context};
use crate::output::{csv_string, Staging};

struct ModelResult {
    model_id: String,
    n_images: usize,
    dropped_embedding_ids: usize,
    dropped_rating_ids: usize,
    similarity: Vec<SimilarityRecord>,
    cat: CorrelationMatrix,
    dendrogram: Dendrogram,
    frobenius: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelSummary {
    pub model_id: String,
    pub n_images: usize,
    pub dropped_embedding_ids: usize,
    pub dropped_rating_ids: usize,
    pub mean_similarity: f64,
    pub frobenius: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrelationSummary {
    pub coefficient: f64,
    pub p_value: f64,
    pub n: usize,
}

impl From<Correlation> for CorrelationSummary {
    fn from(c: Correlation) -> Self {
        CorrelationSummary {
            coefficient: c.coefficient,
            p_value: c.p_value,
            n: c.n,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelIrr {
    pub model_id: String,
    pub correlation: CorrelationSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyIrr {
    pub family: ModelFamily,
    pub models: Vec<String>,
    pub correlation: CorrelationSummary,
}

/// Agreement between per-attribute mean model-human similarity and IRR.
#[derive(Debug, Clone, Serialize)]
pub struct IrrReport {
    pub method: String,
    pub overall: CorrelationSummary,
    pub per_model: Vec<ModelIrr>,
    pub per_family: Vec<FamilyIrr>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttributeScale {
    pub attribute: String,
    pub comparison: Option<ScaleComparison>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaleReport {
    pub family: ModelFamily,
    pub d_mode: String,
    pub attributes: Vec<AttributeScale>,
    pub mean_similarity: AttributeScale,
}

#[derive(Debug, Clone, Serialize)]
pub struct HumanSummary {
    pub n_images: usize,
    pub matrix: String,
    pub dendrogram: String,
}

/// Contents of `audit.json`.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub tool: String,
    pub version: String,
    pub timestamp: String,
    pub config: AuditConfig,
    pub options: AnalysisOptions,
    pub scale_is_default: bool,
    pub notes: Vec<String>,
    pub attributes: Vec<String>,
    pub human: HumanSummary,
    pub models: Vec<ModelSummary>,
    pub irr_correlation: IrrReport,
    pub scale_comparison: Option<ScaleReport>,
    pub outputs: Vec<String>,
}

fn check_embedding_meta(
    m: &EmbeddingMatrix,
    model_id: &str,
    modality: Modality,
    path: &Path,
) -> CliResult<()> {
    if let Some(meta) = m.meta() {
        if meta.model_id != model_id {
            return Err(CliError::Input(format!(
                "{} carries model_id `{}` but the config lists it under `{model_id}`",
                path.display(),
                meta.model_id
            )));
        }
        if meta.modality != modality {
            return Err(CliError::Input(format!(
                "{} holds {:?} embeddings where {modality:?} embeddings were expected",
                path.display(),
                meta.modality
            )));
        }
    }
    Ok(())
}

fn audit_model(
    m: &ModelPath,
    config: &AuditConfig,
    attributes: &[AttributeSpec],
    ratings: &RatingsTable,
    human: &CorrelationMatrix,
) -> CliResult<ModelResult> {
    let id = &m.model_id;
    let images = read_embeddings(&m.path).context(format!("model `{id}`"))?;
    check_embedding_meta(&images, id, Modality::Image, &m.path)?;
    let text_path = config.text_path(id);
    let text = read_embeddings(text_path).context(format!("model `{id}`"))?;
    check_embedding_meta(&text, id, Modality::Text, text_path)?;
    let corpus = align(&images, ratings).context(format!("model `{id}`"))?;

    let mut similarity = Vec::with_capacity(attributes.len());
    let mut columns = Vec::with_capacity(attributes.len());
    for a in attributes {
        let mut v = association_vector(&corpus, a, &text).context(format!("model `{id}`"))?;
        v.model_id = id.clone();
        let human_col = corpus
            .ratings
            .column(&a.name)
            .expect("attributes checked against ratings");
        similarity.push(model_human_similarity(&v, &human_col)?);
        columns.push((a.name.clone(), v.scores));
    }
    let cat = correlation_matrix(&columns).context(format!("model `{id}` CAT matrix"))?;
    let dendrogram = hcluster(&cat, config.options.linkage)?;
    let frobenius = frobenius_similarity(&cat, human)?;
    Ok(ModelResult {
        model_id: id.clone(),
        n_images: corpus.len(),
        dropped_embedding_ids: corpus.dropped_embedding_ids.len(),
        dropped_rating_ids: corpus.dropped_rating_ids.len(),
        similarity,
        cat,
        dendrogram,
        frobenius,
    })
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Per-attribute mean similarity over the given models.
fn mean_similarity(models: &[&ModelResult], attributes: &[AttributeSpec]) -> BTreeMap<String, f64> {
    attributes
        .iter()
        .enumerate()
        .map(|(j, a)| (a.name.clone(), mean(models.iter().map(|m| m.similarity[j].rho))))
        .collect()
}

fn irr_report(
    models: &[ModelResult],
    attributes: &[AttributeSpec],
    irr: &IrrTable,
    meta: Option<&BTreeMap<String, ModelMeta>>,
    options: &AnalysisOptions,
) -> CliResult<IrrReport> {
    let method = options.irr_method;
    let all: Vec<&ModelResult> = models.iter().collect();
    let overall = irr_correlation(&mean_similarity(&all, attributes), irr, method)
        .context("IRR correlation over all models")?;
    let per_model = models
        .iter()
        .map(|m| {
            let c = irr_correlation(&mean_similarity(&[m], attributes), irr, method)
                .context(format!("IRR correlation for `{}`", m.model_id))?;
            Ok(ModelIrr {
                model_id: m.model_id.clone(),
                correlation: c.into(),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mut per_family = Vec::new();
    if let Some(meta) = meta {
        let mut by_family: BTreeMap<ModelFamily, Vec<&ModelResult>> = BTreeMap::new();
        for m in models {
            by_family.entry(meta[&m.model_id].family).or_default().push(m);
        }
        for (family, ms) in by_family {
            let c = irr_correlation(&mean_similarity(&ms, attributes), irr, method)
                .context(format!("IRR correlation for family {family}"))?;
            per_family.push(FamilyIrr {
                family,
                models: ms.iter().map(|m| m.model_id.clone()).collect(),
                correlation: c.into(),
            });
        }
    }
    Ok(IrrReport {
        method: method.to_string(),
        overall: overall.into(),
        per_model,
        per_family,
    })
}

fn scale_entry(
    name: &str,
    values: &BTreeMap<String, f64>,
    meta: &[ModelMeta],
    options: &AnalysisOptions,
) -> AttributeScale {
    match compare_by_dataset_size(values, meta, options.d_mode) {
        Ok(c) => AttributeScale {
            attribute: name.to_owned(),
            comparison: Some(c),
            note: None,
        },
        Err(e) => AttributeScale {
            attribute: name.to_owned(),
            comparison: None,
            note: Some(e.to_string()),
        },
    }
}

/// Dataset-size comparisons among scaling-family models, per attribute and
/// for the per-model mean similarity.
fn scale_report(
    models: &[ModelResult],
    attributes: &[AttributeSpec],
    meta: &BTreeMap<String, ModelMeta>,
    options: &AnalysisOptions,
) -> ScaleReport {
    let family = ModelFamily::Scaling;
    let scaling: Vec<&ModelResult> = models
        .iter()
        .filter(|m| meta[&m.model_id].family == family)
        .collect();
    let metas: Vec<ModelMeta> = scaling.iter().map(|m| meta[&m.model_id].clone()).collect();
    let per_attr = attributes
        .iter()
        .enumerate()
        .map(|(j, a)| {
            let values = scaling
                .iter()
                .map(|m| (m.model_id.clone(), m.similarity[j].rho))
                .collect();
            scale_entry(&a.name, &values, &metas, options)
        })
        .collect();
    let means = scaling
        .iter()
        .map(|m| (m.model_id.clone(), mean(m.similarity.iter().map(|s| s.rho))))
        .collect();
    ScaleReport {
        family,
        d_mode: options.d_mode.to_string(),
        attributes: per_attr,
        mean_similarity: scale_entry("mean_similarity", &means, &metas, options),
    }
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

fn matrix_files(
    staging: &mut Staging,
    dir: &str,
    cat: &CorrelationMatrix,
    d: &Dendrogram,
) -> CliResult<(String, String)> {
    let matrix = format!("{dir}/cat_matrix.csv");
    let tree = format!("{dir}/dendrogram.nwk");
    staging.write(&matrix, cat.to_csv())?;
    staging.write(&tree, to_newick(d) + "\n")?;
    // read back before committing
    let back = CorrelationMatrix::read_csv(staging.staged(&matrix))?;
    if &back != cat {
        return Err(CliError::Internal(format!("{matrix} did not round-trip")));
    }
    Ok((matrix, tree))
}

/// Runs the audit described by `config`, writing reports into
/// `config.output_dir`. Nothing is left in the output directory on failure.
pub fn cmd_audit(config: &AuditConfig) -> CliResult<AuditReport> {
    let out = config
        .output_dir
        .clone()
        .ok_or_else(|| CliError::Input("no output directory: set output_dir or pass --out".into()))?;
    config.validate()?;
    let options = &config.options;

    let attributes = match &config.attribute_config_path {
        Some(p) => read_attribute_config(p)?,
        None => default_attributes(),
    };
    let ratings = read_ratings(&config.ratings_path, options.scale)?;
    let missing: Vec<&str> = attributes
        .iter()
        .filter(|a| ratings.attribute_index(&a.name).is_none())
        .map(|a| a.name.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Input(format!(
            "{} has no ratings for attributes {missing:?}",
            config.ratings_path.display()
        )));
    }
    let irr = read_irr(&config.irr_path)?;
    let names: Vec<String> = attributes.iter().map(|a| a.name.clone()).collect();
    irr.require(&names)?;
    let meta: Option<BTreeMap<String, ModelMeta>> = match &config.model_meta_path {
        Some(p) => {
            let rows = read_model_meta(p)?;
            let map: BTreeMap<String, ModelMeta> =
                rows.into_iter().map(|m| (m.model_id.clone(), m)).collect();
            for m in &config.image_embeddings {
                if !map.contains_key(&m.model_id) {
                    return Err(CliError::Input(format!(
                        "{} has no row for model `{}`",
                        p.display(),
                        m.model_id
                    )));
                }
            }
            Some(map)
        }
        None => None,
    };

    let human_cols: Vec<(String, Vec<f64>)> = attributes
        .iter()
        .map(|a| (a.name.clone(), ratings.column(&a.name).expect("checked above")))
        .collect();
    let human = correlation_matrix(&human_cols).context("human rating structure")?;
    let human_tree = hcluster(&human, options.linkage)?;

    // Collect every result before looking at errors so the reported error
    // does not depend on scheduling.
    let results: Vec<CliResult<ModelResult>> = config
        .image_embeddings
        .par_iter()
        .map(|m| audit_model(m, config, &attributes, &ratings, &human))
        .collect();
    let models = results.into_iter().collect::<CliResult<Vec<_>>>()?;

    let irr_report = irr_report(&models, &attributes, &irr, meta.as_ref(), options)?;
    let scale = meta
        .as_ref()
        .map(|meta| scale_report(&models, &attributes, meta, options));

    let mut staging = Staging::new(&out)?;
    let sim_rows: Vec<Vec<String>> = models
        .iter()
        .flat_map(|m| &m.similarity)
        .map(|s| {
            vec![
                s.model_id.clone(),
                s.attribute.clone(),
                fmt(s.rho),
                fmt(s.p_value),
                s.n.to_string(),
            ]
        })
        .collect();
    staging.write(
        "similarity.csv",
        csv_string(&["model_id", "attribute", "rho", "p_value", "n"], sim_rows)?,
    )?;
    staging.write_json("irr_correlation.json", &irr_report)?;
    staging.write(
        "frobenius.csv",
        csv_string(
            &["model_id", "value"],
            models.iter().map(|m| vec![m.model_id.clone(), fmt(m.frobenius)]),
        )?,
    )?;
    let (human_matrix, human_dendrogram) =
        matrix_files(&mut staging, "human", &human, &human_tree)?;
    for m in &models {
        matrix_files(&mut staging, &m.model_id, &m.cat, &m.dendrogram)?;
    }
    if let Some(s) = &scale {
        staging.write_json("scale_comparison.json", s)?;
    }

    let mut notes = Vec::new();
    if options.scale.is_default() {
        notes.push(
            "rating scale {min: 0, max: 100, midpoint: 50} is the built-in default; \
             set options.scale if the ratings use another range"
                .to_owned(),
        );
    }
    for m in &models {
        if m.dropped_embedding_ids + m.dropped_rating_ids > 0 {
            notes.push(format!(
                "`{}`: {} embedded images without ratings and {} rated images without embeddings were dropped",
                m.model_id, m.dropped_embedding_ids, m.dropped_rating_ids
            ));
        }
    }

    let mut echo = config.clone();
    echo.output_dir = None;
    let mut outputs: Vec<String> = vec![
        "similarity.csv".into(),
        "irr_correlation.json".into(),
        "frobenius.csv".into(),
        human_matrix.clone(),
        human_dendrogram.clone(),
    ];
    for m in &models {
        outputs.push(format!("{}/cat_matrix.csv", m.model_id));
        outputs.push(format!("{}/dendrogram.nwk", m.model_id));
    }
    if scale.is_some() {
        outputs.push("scale_comparison.json".into());
    }
    outputs.push("audit.json".into());

    let report = AuditReport {
        tool: "impression-audit".into(),
        version: crate::VERSION.into(),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        config: echo,
        options: options.clone(),
        scale_is_default: options.scale.is_default(),
        notes,
        attributes: names,
        human: HumanSummary {
            n_images: ratings.len(),
            matrix: human_matrix,
            dendrogram: human_dendrogram,
        },
        models: models
            .iter()
            .map(|m| ModelSummary {
                model_id: m.model_id.clone(),
                n_images: m.n_images,
                dropped_embedding_ids: m.dropped_embedding_ids,
                dropped_rating_ids: m.dropped_rating_ids,
                mean_similarity: mean(m.similarity.iter().map(|s| s.rho)),
                frobenius: m.frobenius,
            })
            .collect(),
        irr_correlation: irr_report,
        scale_comparison: scale,
        outputs,
    };
    staging.write_json("audit.json", &report)?;
    staging.commit()?;
    Ok(report)
}
